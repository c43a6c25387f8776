use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use frontier_sampler::asymptotics::CovarianceRoute;
use frontier_sampler::estimators::{
    consistent_estimates, read_returns_csv, sample_estimates, ConfidenceRegion, SlopeCorrection,
};
use frontier_sampler::harness::{
    emit_qq, run_coverage, run_experiment, write_outputs, ExperimentConfig,
};
use frontier_sampler::model::{LinearCombination, PortfolioSpec};
use frontier_sampler::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "frontier-sampler",
    version,
    about = "Sampling distributions of estimated frontier portfolios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a batch, standardize it by the limit laws and write diagnostics.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Also run the brute-force sampler for comparison.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Empirical coverage of the confidence regions.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2000)]
        reps: usize,
        /// Writes the table as CSV here; JSON goes to stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// QQ data of the standardized draws, as CSV on stdout.
    Qq {
        #[arg(long)]
        config: PathBuf,
    },
    /// Consistent estimates and a confidence region from a returns file
    /// (rows are periods, columns are assets).
    Estimate {
        #[arg(long)]
        returns: PathBuf,
        /// Portfolio as JSON, e.g. '{"kind":"EU","gamma":20}'.
        #[arg(long, default_value = r#"{"kind":"EU","gamma":20}"#)]
        portfolio: String,
        /// Zero-based asset indices selecting rows of L.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        assets: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        beta: f64,
        #[arg(long, value_enum, default_value = "reference")]
        slope_correction: SlopeArg,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SlopeArg {
    Reference,
    ExactCentering,
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let stdout = std::io::stdout();
    match cli.command {
        Command::Run {
            config,
            out_dir,
            oracle,
            seed,
        } => {
            let cfg = load_config(&config, seed)?;
            let out = run_experiment(&cfg, oracle)?;
            for path in write_outputs(&out_dir, &out)? {
                eprintln!("wrote {}", path.display());
            }
            writeln!(stdout.lock(), "{}", out.report.to_json())?;
        }
        Command::Coverage { config, reps, csv } => {
            let cfg = load_config(&config, None)?;
            let table = run_coverage(&cfg, reps)?;
            if let Some(path) = csv {
                table.write_csv(fs::File::create(path)?)?;
            }
            writeln!(stdout.lock(), "{}", table.to_json())?;
        }
        Command::Qq { config } => {
            let cfg = load_config(&config, None)?;
            let out = run_experiment(&cfg, false)?;
            emit_qq(out.diagnosed(), &out.laws, stdout.lock())?;
        }
        Command::Estimate {
            returns,
            portfolio,
            assets,
            beta,
            slope_correction,
        } => {
            let spec: PortfolioSpec = serde_json::from_str(&portfolio)
                .map_err(|e| Error::Config(format!("portfolio: {e}")))?;
            let data = read_returns_csv(fs::File::open(&returns)?)?;
            let est = sample_estimates(&data)?;
            let lincomb = LinearCombination::select(est.p(), &assets)?;
            let correction = match slope_correction {
                SlopeArg::Reference => SlopeCorrection::Reference,
                SlopeArg::ExactCentering => SlopeCorrection::ExactCentering,
            };
            let stats = est.statistics(&lincomb)?;
            let cons = consistent_estimates(&stats, correction)?;
            let region =
                ConfidenceRegion::for_weights(&spec, &cons, CovarianceRoute::Displayed, beta)?;
            let report = json!({
                "n": est.n,
                "p": est.p(),
                "plug_in": { "v": stats.v_hat, "r": stats.r_hat, "s": stats.s_hat, "lw": stats.lw(&spec).ok().map(|v| v.as_slice().to_vec()) },
                "consistent": { "v": cons.v_c, "r": cons.r_c, "s": cons.s_c, "lw": region.center.as_slice() },
                "confidence_level": region.level,
                "half_widths": region.half_widths().map(|h| h.as_slice().to_vec()),
            });
            writeln!(stdout.lock(), "{}", serde_json::to_string_pretty(&report)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
