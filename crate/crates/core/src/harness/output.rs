use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::config::Sink;
use super::experiment::{ExperimentOutput, QuantityLaw};
use crate::diagnostics::{qq_points, QqFit};
use crate::error::{Error, Result};
use crate::sampler::{fmt17, DrawBatch};

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct QqRow {
    pub quantity: String,
    pub order_index: usize,
    pub empirical_quantile_standardized: f64,
    pub theoretical_normal_quantile: f64,
}

/// Writes QQ data for every quantity in `laws`: sorted standardized draws
/// against normal quantiles at the Blom positions, one row per finite draw.
pub fn emit_qq<W: Write>(batch: &DrawBatch, laws: &[QuantityLaw], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "quantity",
        "order_index",
        "empirical_quantile_standardized",
        "theoretical_normal_quantile",
    ])?;
    for law in laws {
        let column = batch
            .column(&law.name)
            .ok_or_else(|| Error::Config(format!("batch has no column {}", law.name)))?;
        for (i, (z, q)) in qq_points(&law.standardize_all(&column))
            .into_iter()
            .enumerate()
        {
            w.write_record([law.name.clone(), (i + 1).to_string(), fmt17(z), fmt17(q)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_qq_csv<R: Read>(input: R) -> Result<Vec<QqRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows: std::result::Result<Vec<QqRow>, csv::Error> = r.deserialize().collect();
    Ok(rows?)
}

/// Least-squares QQ line of the rows belonging to `quantity`.
pub fn qq_rows_fit(rows: &[QqRow], quantity: &str) -> QqFit {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.quantity == quantity)
        .map(|r| {
            (
                r.empirical_quantile_standardized,
                r.theoretical_normal_quantile,
            )
        })
        .collect();
    crate::diagnostics::fit_points(&points)
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    Ok((path.clone(), BufWriter::new(File::create(path)?)))
}

/// Writes the configured sinks into `dir` and returns the paths written.
pub fn write_outputs(dir: &Path, out: &ExperimentOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for sink in &out.config.outputs {
        match sink {
            Sink::DrawsCsv => {
                for (name, batch) in [
                    ("draws_fast.csv", &out.fast),
                    ("draws_brute.csv", &out.brute),
                ] {
                    if let Some(b) = batch {
                        let (path, f) = create(dir, name)?;
                        b.write_csv(f)?;
                        written.push(path);
                    }
                }
            }
            Sink::QqCsv => {
                let (path, f) = create(dir, "qq.csv")?;
                emit_qq(out.diagnosed(), &out.laws, f)?;
                written.push(path);
            }
            Sink::ReportJson => {
                let (path, mut f) = create(dir, "report.json")?;
                f.write_all(out.report.to_json().as_bytes())?;
                f.flush()?;
                written.push(path);
            }
            Sink::LawsJson => {
                let (path, mut f) = create(dir, "laws.json")?;
                let text = format!(
                    "{{\"joint\":{},\"weights\":{},\"marginals\":{}}}\n",
                    out.xi.to_json(),
                    out.omega.to_json(),
                    serde_json::to_string(&out.laws)?
                );
                f.write_all(text.as_bytes())?;
                f.flush()?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
