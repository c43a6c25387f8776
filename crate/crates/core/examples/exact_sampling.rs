//! Exact sampling of the estimated weights without simulating returns,
//! checked against the brute-force route on a small problem.

use std::time::Instant;

use frontier_sampler::brute_force::{brute_force_batch, BruteForceSampler, Scenario};
use frontier_sampler::diagnostics::ks_two_sample;
use frontier_sampler::model::{LinearCombination, PopulationModel, PortfolioSpec};
use frontier_sampler::sampler::{sample_batch, SamplerInputs};
use frontier_sampler::Result;
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> Result<()> {
    let (n, p) = (40, 8);
    let mu = DVector::from_fn(p, |i, _| 0.02 + 0.01 * i as f64);
    let sigma = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            0.04 + 0.01 * i as f64
        } else {
            0.005
        }
    });
    let model = PopulationModel::new(mu, sigma)?;
    let l = LinearCombination::select(p, &[0, 3])?;
    let spec = PortfolioSpec::ExpectedUtility { gamma: 10.0 };
    let b = 5000;

    let t = Instant::now();
    let fast = sample_batch(
        &SamplerInputs::from_model(&model, &l, n)?,
        &spec,
        0.95,
        b,
        1,
    )?;
    let fast_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let brute = brute_force_batch(
        &BruteForceSampler::new(&model, &l, n, Scenario::Normal)?,
        &spec,
        0.95,
        b,
        2,
    )?;
    let brute_s = t.elapsed().as_secs_f64();
    println!("{b} draws: stochastic representation {fast_s:.3} s, brute force {brute_s:.3} s");

    for name in ["v_hat", "r_hat", "s_hat", "lw_hat_1", "lw_hat_2"] {
        let ks = ks_two_sample(&fast.column(name).unwrap(), &brute.column(name).unwrap());
        println!(
            "{name:>9}: two-sample KS {:.4}, p = {:.3}",
            ks.statistic, ks.p_value
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
