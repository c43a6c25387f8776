//! Gradient-check helpers shared by the property suite and the acceptance run.

use frontier_sampler::model::{k_alpha, z_alpha, Lambda, MvSign, PortfolioSpec};

/// Deterministic stream of points in a box, so the gradient checks are
/// reproducible without an RNG.
pub fn halton(i: usize, base: usize) -> f64 {
    let (mut f, mut r, mut i) = (1.0, 0.0, i + 1);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

pub fn point(i: usize) -> Lambda {
    Lambda::new(
        0.05 + 0.6 * halton(i, 2),
        0.01 + 0.5 * halton(i, 3),
        0.05 + 2.4 * halton(i, 5),
    )
}

pub fn all_kinds() -> Vec<PortfolioSpec> {
    vec![
        PortfolioSpec::Gmv,
        PortfolioSpec::MeanVariance {
            mu0: 0.3,
            sign: MvSign::TargetMinusReturn,
        },
        PortfolioSpec::MeanVariance {
            mu0: 0.3,
            sign: MvSign::ReturnMinusTarget,
        },
        PortfolioSpec::ExpectedUtility { gamma: 7.0 },
        PortfolioSpec::Tangency { rf: 0.01 },
        PortfolioSpec::SharpeRatio,
        PortfolioSpec::MinVaR { alpha: 0.95 },
        PortfolioSpec::MinCVaR { alpha: 0.95 },
        PortfolioSpec::MaxVoR {
            alpha: 0.95,
            v0: 1.5,
        },
        PortfolioSpec::MaxCVoR {
            alpha: 0.95,
            k0: 2.0,
        },
    ]
}

/// Keeps the risk-based rows away from their pole at `q² = s`, where a
/// difference quotient cannot resolve the derivative.
pub fn interior(spec: &PortfolioSpec, at: Lambda) -> bool {
    let q = match *spec {
        PortfolioSpec::MinVaR { alpha } | PortfolioSpec::MaxVoR { alpha, .. } => z_alpha(alpha),
        PortfolioSpec::MinCVaR { alpha } | PortfolioSpec::MaxCVoR { alpha, .. } => k_alpha(alpha),
        _ => return true,
    };
    q * q - at.s > 0.05
}

/// Richardson-extrapolated central difference in coordinate `axis`, with a
/// step relative to the coordinate.
pub fn central_difference(
    f: impl Fn(Lambda) -> Option<f64>,
    at: Lambda,
    axis: usize,
) -> Option<f64> {
    let x = [at.r, at.v, at.s][axis];
    let h = 1e-4 * x.abs().max(1e-1);
    let shift = |d: f64| {
        let mut c = [at.r, at.v, at.s];
        c[axis] += d;
        Lambda::new(c[0], c[1], c[2])
    };
    let quotient = |h: f64| Some((f(shift(h))? - f(shift(-h))?) / (2.0 * h));
    let (coarse, fine) = (quotient(h)?, quotient(h / 2.0)?);
    Some((4.0 * fine - coarse) / 3.0)
}

/// Relative error. Derivatives that vanish identically (the MVoR value of
/// return is stationary in `R` and `V`) are measured against a floor tied to
/// the function value, since the difference quotient only resolves them to
/// rounding noise of order `ε·|value|/h`.
pub fn rel_err(fd: f64, an: f64, value: f64) -> f64 {
    (fd - an).abs() / an.abs().max(1e-4 * value.abs().max(1.0))
}
