//! Efficient-frontier quantities and portfolio weights for a small market.

use frontier_sampler::model::{characteristics, weights, MvSign, PopulationModel, PortfolioSpec};
use frontier_sampler::Result;
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> Result<()> {
    let sigma = DMatrix::from_row_slice(
        3,
        3,
        &[0.04, 0.006, 0.002, 0.006, 0.09, -0.01, 0.002, -0.01, 0.0625],
    );
    let model = PopulationModel::new(DVector::from_vec(vec![0.05, 0.09, 0.07]), sigma)?;
    let frontier = model.frontier();
    println!(
        "R_GMV = {:.4}, V_GMV = {:.5}, s = {:.4}",
        frontier.r_gmv, frontier.v_gmv, frontier.s
    );

    let specs = [
        PortfolioSpec::Gmv,
        PortfolioSpec::ExpectedUtility { gamma: 5.0 },
        PortfolioSpec::MeanVariance {
            mu0: 0.08,
            sign: MvSign::TargetMinusReturn,
        },
        PortfolioSpec::Tangency { rf: 0.01 },
        PortfolioSpec::MinVaR { alpha: 0.95 },
    ];
    for spec in specs {
        let w = weights(&spec, &frontier)?;
        let h = characteristics(&spec, frontier.lambda(), 0.95)?;
        println!(
            "{:>5}: w = [{:.3}, {:.3}, {:.3}], return {:.4}, variance {:.5}",
            spec.name(),
            w[0],
            w[1],
            w[2],
            h.r_g,
            h.v_g
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
