//! Randomized checks of the rank-one square-root identities, the g-function
//! gradients and the EU cancellation.

use frontier_sampler::asymptotics::limit_lambda;
use frontier_sampler::linalg::{sqrt_downdate, sqrt_update_identity, SymEigen};
use frontier_sampler::model::{
    characteristic_with_gradient, Characteristic, Lambda, PortfolioSpec,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

mod common;

use common::kernels::{all_kinds, central_difference, interior, point, rel_err};

const SQUARE_TOL: f64 = 1e-10;

fn max_rel_diff(a: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    (a - target).amax() / target.amax().max(1.0)
}

/// Random SPD matrix `AᵀA/k + δI` with unit-scale entries.
fn spd(k: usize, entries: &[f64], ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_iterator(k, k, entries.iter().copied().take(k * k));
    a.transpose() * &a / k as f64 + DMatrix::identity(k, k) * ridge
}

fn matrix_case() -> impl Strategy<Value = (usize, Vec<f64>, f64, Vec<f64>)> {
    (1usize..=8).prop_flat_map(|k| {
        (
            Just(k),
            prop::collection::vec(-1.0f64..1.0, k * k),
            0.05f64..2.0,
            prop::collection::vec(-1.0f64..1.0, k),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// `(D − bbᵀ)^{1/2} = D^{1/2}(I − c D^{-1/2}bbᵀD^{-1/2})` for any root of `D`.
    #[test]
    fn downdate_identity((k, entries, ridge, dir) in matrix_case(), x in 0.0f64..0.99) {
        let d = spd(k, &entries, ridge);
        let eig = SymEigen::new(&d).unwrap();
        let u = DVector::from_vec(dir);
        prop_assume!(u.norm() > 1e-3);
        // Scale b so that bᵀD⁻¹b = x.
        let b = &u * (x / u.dot(&eig.solve_vec(&u))).sqrt();
        let d_sqrt = eig.sqrt();
        let root = sqrt_downdate(&d_sqrt, &eig.solve_vec(&b), &b).unwrap();
        let target = &d - &b * b.transpose();
        prop_assert!(max_rel_diff(&root.gram(), &target) < SQUARE_TOL);

        // Written out literally with D^{-1/2}.
        let c = if x > 0.0 { (1.0 - (1.0 - x).sqrt()) / x } else { 0.5 };
        let dm = eig.inv_sqrt();
        let literal = &d_sqrt * (DMatrix::identity(k, k) - &dm * &b * b.transpose() * &dm * c);
        prop_assert!(max_rel_diff(&(&literal * literal.transpose()), &target) < SQUARE_TOL);
    }

    /// `(I + ddᵀ)^{1/2} = I + a ddᵀ`, squared, with the root symmetric.
    #[test]
    fn update_identity(dir in prop::collection::vec(-3.0f64..3.0, 1..=8)) {
        let d = DVector::from_vec(dir);
        let k = d.len();
        let root = sqrt_update_identity(&d).to_matrix();
        let target = DMatrix::identity(k, k) + &d * d.transpose();
        prop_assert!(max_rel_diff(&(&root * &root), &target) < SQUARE_TOL);
        prop_assert!((&root - root.transpose()).amax() < 1e-12);
    }

    /// The downdate as used for `θ̂` and `η̂`: target `LQLᵀ − yyᵀ/f` with
    /// `f = ξ₃/n + yᵀ(LQLᵀ)⁻¹y` and coefficient `(1 − √(ξ₃/(nf)))/(f − ξ₃/n)`.
    #[test]
    fn downdate_in_sampler_form(
        (k, entries, ridge, z2) in matrix_case(),
        s in 0.0f64..5.0,
        eta_scale in -1.0f64..1.0,
        xi3 in 0.01f64..50.0,
        n in 20usize..2000,
    ) {
        let g = spd(k, &entries, ridge);
        let eig = SymEigen::new(&g).unwrap();
        let nf = n as f64;
        let eta = DVector::from_fn(k, |i, _| eta_scale * (i as f64 + 1.0) / k as f64);
        let y = &eta * s + DVector::from_vec(z2) / nf.sqrt();
        let ginv_y = eig.solve_vec(&y);
        let f = xi3 / nf + y.dot(&ginv_y);
        let target = &g - &y * y.transpose() / f;

        let g_sqrt = eig.sqrt();
        let gm = eig.inv_sqrt();
        let coef = (1.0 - (xi3 / (nf * f)).sqrt()) / (f - xi3 / nf);
        let literal = &g_sqrt * (DMatrix::identity(k, k) - &gm * &y * y.transpose() * &gm * coef);
        prop_assert!(max_rel_diff(&(&literal * literal.transpose()), &target) < SQUARE_TOL);

        let root = frontier_sampler::linalg::sqrt_downdate_with_complement(
            &g_sqrt, &(&ginv_y / f.sqrt()), &(&y / f.sqrt()), xi3 / (nf * f),
        ).unwrap();
        prop_assert!(max_rel_diff(&root.gram(), &target) < SQUARE_TOL);
    }

    /// The update with a scaled Student direction, `(I + a t₂t₂ᵀ/ν)^{1/2}`,
    /// against the coefficient `(√(1 + a t₂ᵀt₂/ν) − 1)/t₂ᵀt₂`. The sampler
    /// uses `a = 1`.
    #[test]
    fn update_in_sampler_form(
        t2 in prop::collection::vec(-4.0f64..4.0, 1..=8),
        a in 0.01f64..20.0,
        nu2 in 3usize..1000,
    ) {
        let t2 = DVector::from_vec(t2);
        prop_assume!(t2.norm_squared() > 1e-8);
        let k = t2.len();
        let m = nu2 as f64;
        let tt = t2.norm_squared();
        let literal = DMatrix::identity(k, k) + &t2 * t2.transpose() * (((1.0 + a * tt / m).sqrt() - 1.0) / tt);
        let target = DMatrix::identity(k, k) + &t2 * t2.transpose() * (a / m);
        prop_assert!(max_rel_diff(&(&literal * &literal), &target) < SQUARE_TOL);
        let root = sqrt_update_identity(&(&t2 * (a / m).sqrt())).to_matrix();
        prop_assert!((&root - &literal).amax() < 1e-12);
    }
}

#[test]
fn g_gradients_match_finite_differences() {
    for spec in all_kinds() {
        let mut checked = 0;
        let mut i = 0;
        while checked < 100 {
            let at = point(i);
            i += 1;
            assert!(i < 10_000, "{}: too few points in the domain", spec.name());
            if !interior(&spec, at) {
                continue;
            }
            let Ok((value, grad)) = spec.g_with_gradient(at) else {
                continue;
            };
            let g = |l: Lambda| spec.g(l).ok();
            let Some(fds) = (0..3)
                .map(|a| central_difference(g, at, a))
                .collect::<Option<Vec<_>>>()
            else {
                continue;
            };
            for a in 0..3 {
                let e = rel_err(fds[a], grad[a], value);
                assert!(
                    e < 1e-5,
                    "{} at {at:?}, axis {a}: fd {} vs {} ({e:e})",
                    spec.name(),
                    fds[a],
                    grad[a]
                );
            }
            checked += 1;
        }
    }
}

#[test]
fn characteristic_gradients_match_finite_differences() {
    for spec in all_kinds() {
        for which in Characteristic::ALL {
            let mut checked = 0;
            let mut i = 0;
            while checked < 100 {
                let at = point(i);
                i += 1;
                assert!(i < 10_000);
                if !interior(&spec, at) {
                    continue;
                }
                let Ok((value, grad)) = characteristic_with_gradient(&spec, which, at, 0.95) else {
                    continue;
                };
                let h = |l: Lambda| {
                    characteristic_with_gradient(&spec, which, l, 0.95)
                        .ok()
                        .map(|x| x.0)
                };
                let Some(fds) = (0..3)
                    .map(|a| central_difference(h, at, a))
                    .collect::<Option<Vec<_>>>()
                else {
                    continue;
                };
                for a in 0..3 {
                    let e = rel_err(fds[a], grad[a], value);
                    assert!(
                        e < 1e-5,
                        "{} {} axis {a} at {at:?}: fd {} vs {} ({e:e})",
                        spec.name(),
                        which.name(),
                        fds[a],
                        grad[a]
                    );
                }
                checked += 1;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// For EU, `g₃(λ)/(1−c) = g(λ)/(s+c)` at the limit point `λ`; this
    /// holds identically in `(γ, R, V, s, c)`.
    #[test]
    fn eu_cancellation(gamma in 0.5f64..100.0, r in -1.0f64..1.0, v in 0.01f64..5.0, s in 0.0f64..50.0, c in 0.0f64..0.99) {
        let spec = PortfolioSpec::ExpectedUtility { gamma };
        let lam = limit_lambda(Lambda::new(r, v, s), c);
        let (g, d) = spec.g_with_gradient(lam).unwrap();
        let lhs = d[2] / (1.0 - c);
        let rhs = g / (s + c);
        // Equal up to the rounding of the three operations on each side.
        prop_assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * lhs.abs(), "{lhs} vs {rhs}");
    }
}
