//! Bias-corrected estimates from one simulated return panel, a confidence
//! ellipsoid for two EU weights and the dual Wald-type test.

use frontier_sampler::asymptotics::CovarianceRoute;
use frontier_sampler::brute_force::{BruteForceSampler, Scenario};
use frontier_sampler::estimators::{
    consistent_estimates, sample_estimates, test_weights, ConfidenceRegion, SlopeCorrection,
};
use frontier_sampler::model::{
    LinearCombination, PopulationModel, PortfolioSpec, ProjectedQuantities,
};
use frontier_sampler::rng::substream;
use frontier_sampler::Result;
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> Result<()> {
    let (n, p) = (500, 150);
    let mu = DVector::from_fn(p, |i, _| 0.05 * ((i % 9) as f64 - 3.0));
    let sigma = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0 + (i % 4) as f64 * 0.5
        } else {
            0.1
        }
    });
    let model = PopulationModel::new(mu, sigma)?;
    let l = LinearCombination::select(p, &[0, 1])?;
    let spec = PortfolioSpec::ExpectedUtility { gamma: 10.0 };
    let truth = ProjectedQuantities::from_model(&model, &model.frontier(), &l)?.lw(&spec)?;

    let bf = BruteForceSampler::new(&model, &l, n, Scenario::Normal)?;
    let returns = bf.simulate_returns(&mut substream(4, 0));
    let st = sample_estimates(&returns)?.statistics(&l)?;
    let est = consistent_estimates(&st, SlopeCorrection::ExactCentering)?;
    println!(
        "slope: plug-in {:.4}, corrected {:.4}, population {:.4}",
        st.s_hat,
        est.s_c,
        model.frontier().s
    );
    println!(
        "variance: plug-in {:.5}, corrected {:.5}",
        st.v_hat, est.v_c
    );

    let region = ConfidenceRegion::for_weights(&spec, &est, CovarianceRoute::Displayed, 0.05)?;
    let plug_in = st.lw(&spec)?;
    println!("weights: plug-in [{:.4}, {:.4}]", plug_in[0], plug_in[1]);
    println!(
        "  corrected [{:.4}, {:.4}], truth [{:.4}, {:.4}]",
        region.center[0], region.center[1], truth[0], truth[1]
    );
    if let Some(h) = region.half_widths() {
        println!("  95% box half-widths [{:.4}, {:.4}]", h[0], h[1]);
    }
    for (label, r) in [("truth", truth.clone()), ("zero", DVector::zeros(2))] {
        let t = test_weights(&region, &r);
        println!(
            "H0: Lw = {label}: statistic {:.3}, quantile {:.3}, reject {}",
            t.statistic, t.quantile, t.reject
        );
    }

    // Any single panel misses the truth now and then; over many panels the
    // region should cover it about 95% of the time. With a slope this small
    // the displayed covariance is too wide and overcovers.
    let panels = 300;
    let routes = [CovarianceRoute::Displayed, CovarianceRoute::Representation];
    let mut covered = [0usize; 2];
    for i in 1..=panels {
        let st = sample_estimates(&bf.simulate_returns(&mut substream(4, i)))?.statistics(&l)?;
        let est = consistent_estimates(&st, SlopeCorrection::ExactCentering)?;
        for (hits, route) in covered.iter_mut().zip(routes) {
            let region = ConfidenceRegion::for_weights(&spec, &est, route, 0.05)?;
            *hits += usize::from(region.contains(&truth));
        }
    }
    for (hits, route) in covered.iter().zip(routes) {
        println!(
            "{route:?} coverage over {panels} further panels: {:.3}",
            *hits as f64 / panels as f64
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
