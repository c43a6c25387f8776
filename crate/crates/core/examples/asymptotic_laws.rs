//! High-dimensional limit laws of the estimated frontier parameters and
//! weights, with a Monte Carlo check of the weight variance.

use frontier_sampler::asymptotics::{
    omega_lg, xi_matrix, CovarianceRoute, Dimensions, StackLayout,
};
use frontier_sampler::model::{
    LinearCombination, PopulationModel, PortfolioSpec, ProjectedQuantities,
};
use frontier_sampler::sampler::{sample_batch, SamplerInputs};
use frontier_sampler::Result;
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> Result<()> {
    let (n, p) = (400, 200);
    let mu = DVector::from_fn(p, |i, _| 0.1 * ((i % 7) as f64 - 2.0));
    let sigma = DMatrix::from_diagonal(&DVector::from_fn(p, |i, _| 0.5 + (i % 5) as f64));
    let model = PopulationModel::new(mu, sigma)?;
    let l = LinearCombination::select(p, &[0])?;
    let proj = ProjectedQuantities::from_model(&model, &model.frontier(), &l)?;
    let dims = Dimensions::new(n, p)?;
    let spec = PortfolioSpec::ExpectedUtility { gamma: 20.0 };

    let xi = xi_matrix(&proj, dims, CovarianceRoute::Representation)?;
    let names = StackLayout::new(1).names();
    for (i, name) in names.iter().enumerate() {
        println!(
            "{name:>7}: center {:>10.4}, limit sd {:.4}",
            xi.center[i],
            xi.sd(i)
        );
    }

    let omega = omega_lg(&spec, &proj, dims, CovarianceRoute::Representation)?;
    let batch = sample_batch(&SamplerInputs::new(proj, n, p)?, &spec, 0.95, 20_000, 3)?;
    let lw = batch.column("lw_hat_1").unwrap();
    let mean = lw.iter().sum::<f64>() / lw.len() as f64;
    let sd = (lw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (lw.len() - 1) as f64).sqrt();
    println!(
        "EU weight of asset 1: limit {:.4} +- {:.4}, exact draws {mean:.4} +- {sd:.4}",
        omega.center[0],
        omega.sd(0)
    );
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
