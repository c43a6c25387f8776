//! Dense kernels: symmetric square roots, rank-one square-root updates,
//! a blocked Cholesky factorization and Haar-distributed rotations.
//!
//! Every eigen, Cholesky or QR factorization performed through this module
//! bumps a per-thread counter, so callers can verify that a code path does
//! no factorizations at all.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

thread_local! {
    static FACTORIZATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of matrix factorizations performed on the current thread so far.
pub fn factorization_count() -> u64 {
    FACTORIZATIONS.with(|c| c.get())
}

fn count_factorization() {
    FACTORIZATIONS.with(|c| c.set(c.get() + 1));
}

/// Largest absolute difference between `m` and its transpose.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(1.0);
    let asym = max_asymmetry(m);
    if asym > 1e-9 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Symmetric eigendecomposition `m = U diag(values) Uᵀ`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        check_square(m, "matrix")?;
        check_symmetric(m)?;
        let mut sym = m.clone();
        symmetrize(&mut sym);
        count_factorization();
        let eig = sym.symmetric_eigen();
        Ok(SymEigen {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn min_value(&self) -> f64 {
        self.values.min()
    }

    pub fn max_value(&self) -> f64 {
        self.values.max()
    }

    /// `U diag(f(values)) Uᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let fj = f(lam);
            scaled.column_mut(j).scale_mut(fj);
        }
        let mut out = &scaled * self.vectors.transpose();
        symmetrize(&mut out);
        out
    }

    /// `m⁻¹ b` without forming the inverse.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut coords = self.vectors.tr_mul(b);
        for (c, &lam) in coords.iter_mut().zip(self.values.iter()) {
            *c /= lam;
        }
        &self.vectors * coords
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut coords = self.vectors.transpose() * b;
        for (i, &lam) in self.values.iter().enumerate() {
            coords.row_mut(i).scale_mut(1.0 / lam);
        }
        &self.vectors * coords
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.map(|l| 1.0 / l)
    }

    /// Symmetric square root; tiny negative eigenvalues are clamped to zero.
    pub fn sqrt(&self) -> DMatrix<f64> {
        self.map(|l| l.max(0.0).sqrt())
    }

    pub fn inv_sqrt(&self) -> DMatrix<f64> {
        self.map(|l| 1.0 / l.sqrt())
    }
}

fn psd_tolerance(eig: &SymEigen) -> f64 {
    1e-8 * eig.values.amax()
}

/// Symmetric positive semi-definite square root of `m`.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymEigen::new(m)?;
    let min = eig.min_value();
    if min < -psd_tolerance(&eig) {
        return Err(Error::NotPositiveSemiDefinite(min));
    }
    Ok(eig.sqrt())
}

/// Symmetric inverse square root of a positive definite `m`.
pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymEigen::new(m)?;
    if eig.min_value() <= 0.0 {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(eig.inv_sqrt())
}

/// A square root `X` of some target matrix `T`, in the sense `X Xᵀ = T`.
///
/// Structured variants are applied to vectors in O(k) or O(k²) without
/// materializing anything.
#[derive(Debug, Clone)]
pub enum SqrtFactor<'a> {
    Dense(DMatrix<f64>),
    /// `I + coef·d dᵀ`
    IdentityPlusRankOne {
        coef: f64,
        d: DVector<f64>,
    },
    /// `base − coef·left·rightᵀ`
    Downdate {
        base: &'a DMatrix<f64>,
        coef: f64,
        left: DVector<f64>,
        right: DVector<f64>,
    },
}

impl SqrtFactor<'_> {
    pub fn dim(&self) -> usize {
        match self {
            SqrtFactor::Dense(m) => m.nrows(),
            SqrtFactor::IdentityPlusRankOne { d, .. } => d.len(),
            SqrtFactor::Downdate { base, .. } => base.nrows(),
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            SqrtFactor::Dense(m) => m * v,
            SqrtFactor::IdentityPlusRankOne { coef, d } => v + d * (coef * d.dot(v)),
            SqrtFactor::Downdate {
                base,
                coef,
                left,
                right,
            } => *base * v - left * (coef * right.dot(v)),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            SqrtFactor::Dense(m) => m.clone(),
            SqrtFactor::IdentityPlusRankOne { coef, d } => {
                let k = d.len();
                DMatrix::identity(k, k) + d * d.transpose() * *coef
            }
            SqrtFactor::Downdate {
                base,
                coef,
                left,
                right,
            } => (*base).clone() - left * right.transpose() * *coef,
        }
    }

    /// `X Xᵀ`, the matrix this factor is a square root of.
    pub fn gram(&self) -> DMatrix<f64> {
        let x = self.to_matrix();
        &x * x.transpose()
    }
}

/// Square root of `D − b bᵀ` from a symmetric root `D^{1/2}` and `D⁻¹b`.
///
/// Returns `D^{1/2}(I − c·D^{-1/2} b bᵀ D^{-1/2})` with
/// `c = (1 − √(1 − bᵀD⁻¹b)) / bᵀD⁻¹b`, evaluated as `1/(1 + √(1 − x))` so
/// the removable singularity at `x = 0` needs no special case.
pub fn sqrt_downdate<'a>(
    d_sqrt: &'a DMatrix<f64>,
    d_inv_b: &DVector<f64>,
    b: &DVector<f64>,
) -> Result<SqrtFactor<'a>> {
    let x = b.dot(d_inv_b);
    if !(x.is_finite() && x > -1e-12 && x < 1.0 - 1e-12) {
        return Err(Error::NotPositiveDefinite);
    }
    sqrt_downdate_with_complement(d_sqrt, d_inv_b, b, 1.0 - x.max(0.0))
}

/// As [`sqrt_downdate`], for callers that know `1 − bᵀD⁻¹b` more accurately
/// than the subtraction would give it.
pub fn sqrt_downdate_with_complement<'a>(
    d_sqrt: &'a DMatrix<f64>,
    d_inv_b: &DVector<f64>,
    b: &DVector<f64>,
    complement: f64,
) -> Result<SqrtFactor<'a>> {
    let k = d_sqrt.nrows();
    if d_sqrt.ncols() != k || d_inv_b.len() != k || b.len() != k {
        return Err(Error::Dimension(format!(
            "downdate operands must share dimension {k}"
        )));
    }
    if !(complement > 0.0 && complement <= 1.0 + 1e-12) {
        return Err(Error::NotPositiveDefinite);
    }
    let coef = 1.0 / (1.0 + complement.sqrt());
    let right = d_sqrt * d_inv_b;
    Ok(SqrtFactor::Downdate {
        base: d_sqrt,
        coef,
        left: b.clone(),
        right,
    })
}

/// Square root of `I + d dᵀ`, namely `I + a·d dᵀ` with
/// `a = (√(1 + dᵀd) − 1)/dᵀd = 1/(√(1 + dᵀd) + 1)`.
pub fn sqrt_update_identity(d: &DVector<f64>) -> SqrtFactor<'static> {
    let x = d.norm_squared();
    SqrtFactor::IdentityPlusRankOne {
        coef: 1.0 / ((1.0 + x).sqrt() + 1.0),
        d: d.clone(),
    }
}

const BLOCK: usize = 64;

/// `uᵀu` computed block-column by block-column on the lower triangle only.
pub fn gram(u: &DMatrix<f64>) -> DMatrix<f64> {
    let p = u.ncols();
    let ut = u.transpose();
    let mut g = DMatrix::<f64>::zeros(p, p);
    let mut c0 = 0;
    while c0 < p {
        let cb = BLOCK.min(p - c0);
        let rows = p - c0;
        let lhs = ut.rows(c0, rows);
        let rhs = u.columns(c0, cb);
        g.view_mut((c0, c0), (rows, cb)).gemm(1.0, &lhs, &rhs, 0.0);
        c0 += cb;
    }
    for j in 0..p {
        for i in (j + 1)..p {
            g[(j, i)] = g[(i, j)];
        }
    }
    g
}

/// Lower Cholesky factor computed by a right-looking blocked algorithm whose
/// trailing updates go through matrix-matrix products.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        check_square(m, "matrix")?;
        count_factorization();
        let n = m.nrows();
        let mut a = m.clone();
        let mut j0 = 0;
        while j0 < n {
            let jb = BLOCK.min(n - j0);
            factor_diagonal_block(&mut a, j0, jb)?;
            let rest = n - j0 - jb;
            if rest > 0 {
                let r0 = j0 + jb;
                // Panel: A21 ← A21 L11⁻ᵀ, one column at a time.
                for c in 0..jb {
                    for t in 0..c {
                        let lct = a[(j0 + c, j0 + t)];
                        if lct != 0.0 {
                            for i in r0..n {
                                let v = a[(i, j0 + t)];
                                a[(i, j0 + c)] -= lct * v;
                            }
                        }
                    }
                    let d = a[(j0 + c, j0 + c)];
                    for i in r0..n {
                        a[(i, j0 + c)] /= d;
                    }
                }
                // Trailing update A22 ← A22 − A21 A21ᵀ, lower triangle only.
                let panel = a.view((r0, j0), (rest, jb)).into_owned();
                let panel_t = panel.transpose();
                let mut c0 = 0;
                while c0 < rest {
                    let cb = BLOCK.min(rest - c0);
                    let rows = rest - c0;
                    a.view_mut((r0 + c0, r0 + c0), (rows, cb)).gemm(
                        -1.0,
                        &panel.rows(c0, rows),
                        &panel_t.columns(c0, cb),
                        1.0,
                    );
                    c0 += cb;
                }
            }
            j0 += jb;
        }
        for j in 0..n {
            for i in 0..j {
                a[(i, j)] = 0.0;
            }
        }
        Ok(Cholesky { l: a })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Overwrites `b` with `L⁻¹ b`.
    pub fn solve_lower_in_place(&self, b: &mut DMatrix<f64>) {
        let n = self.l.nrows();
        for col in 0..b.ncols() {
            for j in 0..n {
                let x = b[(j, col)] / self.l[(j, j)];
                b[(j, col)] = x;
                if x != 0.0 {
                    for i in (j + 1)..n {
                        b[(i, col)] -= self.l[(i, j)] * x;
                    }
                }
            }
        }
    }

    /// Overwrites `b` with `L⁻ᵀ b`.
    pub fn solve_upper_in_place(&self, b: &mut DMatrix<f64>) {
        let n = self.l.nrows();
        for col in 0..b.ncols() {
            for j in (0..n).rev() {
                let mut acc = b[(j, col)];
                for i in (j + 1)..n {
                    acc -= self.l[(i, j)] * b[(i, col)];
                }
                b[(j, col)] = acc / self.l[(j, j)];
            }
        }
    }

    /// Solves `L Lᵀ x = b` for every column of `b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }
}

fn factor_diagonal_block(a: &mut DMatrix<f64>, j0: usize, jb: usize) -> Result<()> {
    for j in j0..j0 + jb {
        let mut d = a[(j, j)];
        for t in j0..j {
            d -= a[(j, t)] * a[(j, t)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let d = d.sqrt();
        a[(j, j)] = d;
        for i in (j + 1)..j0 + jb {
            let mut v = a[(i, j)];
            for t in j0..j {
                v -= a[(i, t)] * a[(j, t)];
            }
            a[(i, j)] = v / d;
        }
    }
    Ok(())
}

/// Haar-distributed random orthogonal matrix: QR of a Gaussian matrix with
/// the signs of `R`'s diagonal absorbed into `Q`.
pub fn haar_orthogonal<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(p, p, |_, _| rng.sample(StandardNormal));
    count_factorization();
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
