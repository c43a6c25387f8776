//! Moment and distribution checks for the latent primitives, the
//! three-variate characteristics sampler and the brute-force oracle.

mod common;

use common::{design, first_asset};
use frontier_sampler::brute_force::{BruteForceSampler, Scenario};
use frontier_sampler::diagnostics::{
    chi2_cdf, ks_one_sample, ks_two_sample, moments, noncentral_f_cdf,
};
use frontier_sampler::distributions::sample_noncentral_chi2;
use frontier_sampler::estimators::sample_moments;
use frontier_sampler::model::{
    Lambda, LinearCombination, PopulationModel, PortfolioSpec, ProjectedQuantities,
};
use frontier_sampler::rng::substream;
use frontier_sampler::sampler::{sample_batch, CharacteristicsSampler, SamplerInputs};
use nalgebra::{DMatrix, DVector};

const ALPHA: f64 = 0.01;

fn small_model() -> PopulationModel {
    let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 2.0, -0.4, 0.1, -0.4, 1.5]);
    PopulationModel::new(DVector::from_vec(vec![0.1, -0.05, 0.2]), sigma).unwrap()
}

#[test]
fn noncentral_chi2_without_noncentrality_is_central() {
    let mut rng = substream(1, 0);
    let xs: Vec<f64> = (0..50_000)
        .map(|_| sample_noncentral_chi2(&mut rng, 7.0, 0.0).unwrap())
        .collect();
    let ks = ks_one_sample(&xs, |x| chi2_cdf(7.0, x).unwrap());
    assert!(ks.passes(ALPHA), "{ks:?}");
}

#[test]
fn characteristics_sampler_v_hat_mean() {
    // V = 1/3, n = 10, p = 3: E[V̂] = V(n−p)/(n−1) = 7/27.
    let cs = CharacteristicsSampler::new(Lambda::new(0.0, 1.0 / 3.0, 0.5), 10, 3).unwrap();
    let mut rng = substream(2, 0);
    let v: Vec<f64> = (0..200_000).map(|_| cs.draw_lambda(&mut rng).v).collect();
    let m = moments(&v);
    assert!((m.mean - 7.0 / 27.0).abs() < 3.0 * m.std_error, "{m:?}");
}

#[test]
fn characteristics_sampler_slope_is_scaled_noncentral_f() {
    let (n, p, s) = (30, 10, 0.4);
    let cs = CharacteristicsSampler::new(Lambda::new(0.1, 0.5, s), n, p).unwrap();
    let mut rng = substream(3, 0);
    let (nf, pf) = (n as f64, p as f64);
    let a = nf * (nf - pf + 1.0) / ((nf - 1.0) * (pf - 1.0));
    let xs: Vec<f64> = (0..50_000)
        .map(|_| a * cs.draw_lambda(&mut rng).s)
        .collect();
    let ks = ks_one_sample(&xs, |x| {
        noncentral_f_cdf(pf - 1.0, nf - pf + 1.0, nf * s, x).unwrap()
    });
    assert!(ks.passes(ALPHA), "{ks:?}");
}

#[test]
fn characteristics_sampler_agrees_with_joint_sampler() {
    let (n, p) = (30, 10);
    let (_, model) = design(n, p, 4);
    let (_, proj) = first_asset(&model);
    let cs = CharacteristicsSampler::new(proj.lambda(), n, p).unwrap();
    let joint = sample_batch(
        &SamplerInputs::new(proj, n, p).unwrap(),
        &PortfolioSpec::Gmv,
        0.95,
        20_000,
        5,
    )
    .unwrap();
    let mut rng = substream(6, 0);
    let three: Vec<Lambda> = (0..20_000).map(|_| cs.draw_lambda(&mut rng)).collect();
    let pick = |f: fn(&Lambda) -> f64| three.iter().map(f).collect::<Vec<_>>();
    for (name, other) in [
        ("v_hat", pick(|l| l.v)),
        ("r_hat", pick(|l| l.r)),
        ("s_hat", pick(|l| l.s)),
    ] {
        let ks = ks_two_sample(&joint.column(name).unwrap(), &other);
        assert!(ks.passes(ALPHA), "{name}: {ks:?}");
    }
}

#[test]
fn zero_mean_population_centers_r_hat_at_zero() {
    let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5, 2.0, 1.5, 0.8]));
    let model = PopulationModel::new(DVector::zeros(5), sigma).unwrap();
    let l = LinearCombination::select(5, &[0]).unwrap();
    let proj = ProjectedQuantities::from_model(&model, &model.frontier(), &l).unwrap();
    assert_eq!((proj.r_gmv, proj.s), (0.0, 0.0));
    let batch = sample_batch(
        &SamplerInputs::new(proj, 20, 5).unwrap(),
        &PortfolioSpec::Gmv,
        0.95,
        50_000,
        7,
    )
    .unwrap();
    let m = moments(&batch.r_hat);
    assert!(m.mean.abs() < 4.0 * m.std_error, "{m:?}");
}

#[test]
fn brute_force_sample_moments_are_unbiased() {
    let model = small_model();
    let l = LinearCombination::select(3, &[0]).unwrap();
    let bf = BruteForceSampler::new(&model, &l, 10, Scenario::Normal).unwrap();
    let reps = 10_000;
    let mut means = vec![Vec::new(); 3];
    let mut covs = vec![Vec::new(); 9];
    for i in 0..reps as u64 {
        let (mu_hat, sigma_hat) =
            sample_moments(&bf.simulate_returns(&mut substream(8, i))).unwrap();
        for a in 0..3 {
            means[a].push(mu_hat[a]);
            for b in 0..3 {
                covs[3 * a + b].push(sigma_hat[(a, b)]);
            }
        }
    }
    for a in 0..3 {
        let m = moments(&means[a]);
        assert!(
            (m.mean - model.mu()[a]).abs() < 4.0 * m.std_error,
            "mu[{a}]: {m:?}"
        );
        for b in 0..3 {
            let m = moments(&covs[3 * a + b]);
            assert!(
                (m.mean - model.sigma()[(a, b)]).abs() < 4.0 * m.std_error,
                "sigma[{a},{b}]: {m:?}"
            );
        }
    }
}

#[test]
fn student_t_returns_have_the_population_covariance() {
    let model = small_model();
    let l = LinearCombination::select(3, &[0]).unwrap();
    let bf = BruteForceSampler::new(&model, &l, 200, Scenario::StudentT { dof: 10.0 }).unwrap();
    let mut rng = substream(9, 0);
    let mut products = vec![Vec::new(); 9];
    for _ in 0..200 {
        let x = bf.simulate_returns(&mut rng);
        for row in x.row_iter() {
            let d = row.transpose() - model.mu();
            for a in 0..3 {
                for b in 0..3 {
                    products[3 * a + b].push(d[a] * d[b]);
                }
            }
        }
    }
    for a in 0..3 {
        for b in 0..3 {
            let m = moments(&products[3 * a + b]);
            assert!(
                (m.mean - model.sigma()[(a, b)]).abs() < 4.0 * m.std_error,
                "[{a},{b}]: {m:?}"
            );
        }
    }
}
