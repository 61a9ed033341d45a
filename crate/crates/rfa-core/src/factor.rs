//! Factor extraction from the tau-matrix spectrum (RTS) and from the sample
//! second-moment matrix (PCA), plus data-driven selection of the number of
//! factors.
//!
//! Both estimators share a normalization: the `N×m` loading matrix satisfies
//! `ΛᵀΛ/N = I_m`, so factors are recovered as `F = YΛ/N`. RTS reads the
//! loading space off the spatial Kendall's tau matrix, which keeps it valid
//! for elliptical data with heavy (even infinite-variance) tails; PCA reads
//! it off `YᵀY/(NT)` and serves as the classical benchmark.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kendall::{self, KendallTauMatrix};
use crate::linalg;

/// Floor applied to residual variances before taking logs in the factor
///-number information criterion.
const IC_VARIANCE_FLOOR: f64 = 1e-15;

/// Floor applied to tau-matrix eigenvalues before forming ratios in the
/// eigenvalue-ratio rule.
const ER_EIGENVALUE_FLOOR: f64 = 1e-12;

/// Leading eigenpairs of a symmetric matrix: `values` descending,
/// `vectors` orthonormal columns with the largest-magnitude entry of each
/// column positive.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Which spectrum the factor estimates were read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Robust two-step: eigenvectors of the spatial Kendall's tau matrix.
    Rts,
    /// Principal components of `YᵀY/(NT)`.
    Pca,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rts => "rts",
            Method::Pca => "pca",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the number of factors is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumFactors {
    /// Use exactly this many factors.
    Fixed(usize),
    /// Information criterion on the PCA residual variance
    /// ([`select_num_factors_ic`]).
    AutoIc,
    /// Eigenvalue-ratio rule on the tau-matrix spectrum
    /// ([`select_num_factors_er`]).
    AutoEr,
}

/// A fitted factor model: `loadings` is `N×m` with `ΛᵀΛ/N = I_m`, `factors`
/// is `T×m` with rows `f_t = Λᵀy_t/N`.
#[derive(Debug, Clone)]
pub struct FactorFit {
    pub loadings: DMatrix<f64>,
    pub factors: DMatrix<f64>,
    pub method: Method,
    pub num_factors: usize,
}

impl FactorFit {
    /// Fitted common component `FΛᵀ` (a `T×N` matrix).
    pub fn common_component(&self) -> DMatrix<f64> {
        &self.factors * self.loadings.transpose()
    }
}

/// Leading `m` eigenpairs of a symmetric matrix, descending, with the shared
/// sign convention. Each returned pair satisfies `‖av − λv‖ ≤ 1e−9·‖a‖`.
///
/// # Errors
///
/// [`Error::Input`] if `a` is not square, not finite, not symmetric within
/// `1e−8` (relative to its largest entry), or `m ∉ [1, N]`;
/// [`Error::Numerical`] if the iterative large-`N` path fails to converge.
pub fn top_eigen_sym(a: &DMatrix<f64>, m: usize) -> Result<EigenPairs> {
    let (n, c) = a.shape();
    if n != c {
        return Err(Error::Input(format!("matrix must be square, got {n}×{c}")));
    }
    if n == 0 {
        return Err(Error::input("matrix is empty"));
    }
    if !linalg::all_finite(a) {
        return Err(Error::input("matrix contains a non-finite value"));
    }
    let scale = linalg::max_abs(a).max(1.0);
    let asym = linalg::max_abs(&(a - a.transpose()));
    if asym > 1e-8 * scale {
        return Err(Error::Input(format!(
            "matrix is not symmetric: max |a_ij − a_ji| = {asym:.3e}"
        )));
    }
    if m == 0 || m > n {
        return Err(Error::Input(format!(
            "requested {m} eigenpairs of a {n}×{n} matrix"
        )));
    }
    let (values, vectors) = linalg::top_eigen(a, m)?;
    Ok(EigenPairs { values, vectors })
}

fn validate_num_factors(m: usize, n: usize, t: usize) -> Result<()> {
    let cap = n.min(t);
    if m == 0 || m > cap {
        return Err(Error::Input(format!(
            "number of factors must be in [1, min(N, T)] = [1, {cap}], got {m}"
        )));
    }
    Ok(())
}

/// RTS loadings from a precomputed tau matrix: `Λ = √N · U_m` where `U_m`
/// spans the leading `m`-dimensional eigenspace.
pub fn rts_loadings_from_tau(tau: &KendallTauMatrix, m: usize) -> Result<DMatrix<f64>> {
    let n = tau.matrix.nrows();
    if m == 0 || m > n {
        return Err(Error::Input(format!(
            "number of factors must be in [1, {n}], got {m}"
        )));
    }
    let pairs = top_eigen_sym(&tau.matrix, m)?;
    Ok(pairs.vectors * (n as f64).sqrt())
}

/// RTS loading estimate for a `T×N` panel.
pub fn rts_loadings(y: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    validate_num_factors(m, y.ncols(), y.nrows())?;
    let tau = kendall::spatial_kendall_tau(y)?;
    rts_loadings_from_tau(&tau, m)
}

/// Factor estimate given loadings with the `ΛᵀΛ/N = I` normalization:
/// `F = YΛ/N`.
pub fn rts_factors(y: &DMatrix<f64>, loadings: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = y.ncols();
    if loadings.nrows() != n {
        return Err(Error::Input(format!(
            "loading rows ({}) must match panel units ({n})",
            loadings.nrows()
        )));
    }
    if !linalg::all_finite(y) || !linalg::all_finite(loadings) {
        return Err(Error::input("panel and loadings must be finite"));
    }
    Ok(y * loadings / n as f64)
}

/// Full RTS fit: tau matrix → loadings → factors.
pub fn rts_fit(y: &DMatrix<f64>, m: usize) -> Result<FactorFit> {
    validate_num_factors(m, y.ncols(), y.nrows())?;
    let tau = kendall::spatial_kendall_tau(y)?;
    rts_fit_from_tau(y, &tau, m)
}

/// RTS fit reusing a tau matrix the caller already computed.
pub fn rts_fit_from_tau(
    y: &DMatrix<f64>,
    tau: &KendallTauMatrix,
    m: usize,
) -> Result<FactorFit> {
    let loadings = rts_loadings_from_tau(tau, m)?;
    let factors = rts_factors(y, &loadings)?;
    Ok(FactorFit {
        loadings,
        factors,
        method: Method::Rts,
        num_factors: m,
    })
}

/// Principal-components fit: loadings are `√N` times the leading
/// eigenvectors of `YᵀY/(NT)`, factors `F = YΛ/N`.
pub fn pca_fit(y: &DMatrix<f64>, m: usize) -> Result<FactorFit> {
    let (t, n) = y.shape();
    validate_num_factors(m, n, t)?;
    if !linalg::all_finite(y) {
        return Err(Error::input("panel contains a non-finite value"));
    }
    let second_moment = y.transpose() * y / (n as f64 * t as f64);
    let pairs = top_eigen_sym(&second_moment, m)?;
    let loadings = pairs.vectors * (n as f64).sqrt();
    let factors = y * &loadings / n as f64;
    Ok(FactorFit {
        loadings,
        factors,
        method: Method::Pca,
        num_factors: m,
    })
}

/// Information-criterion choice of the number of factors.
///
/// For each `k ≤ m_max`, `V(k)` is the mean squared residual of the `k`
/// -factor PCA fit, computed spectrally as `trace(YᵀY/(NT)) − Σ_{j≤k} λ_j`,
/// and
///
/// ```text
/// IC(k) = ln max(V(k), 1e−15) + k · (N+T)/(NT) · ln min(N, T)
/// ```
///
/// Returns the minimizing `k` (ties toward the smallest) and the full
/// criterion curve for `k = 1..m_max`.
pub fn select_num_factors_ic(y: &DMatrix<f64>, m_max: usize) -> Result<(usize, Vec<f64>)> {
    let (t, n) = y.shape();
    let cap = n.min(t);
    if m_max == 0 || m_max + 1 > cap {
        return Err(Error::Input(format!(
            "m_max must be in [1, min(N, T) − 1] = [1, {}], got {m_max}",
            cap.saturating_sub(1)
        )));
    }
    if !linalg::all_finite(y) {
        return Err(Error::input("panel contains a non-finite value"));
    }
    let second_moment = y.transpose() * y / (n as f64 * t as f64);
    let total = second_moment.trace();
    let pairs = top_eigen_sym(&second_moment, m_max)?;
    let penalty_unit =
        ((n + t) as f64 / (n as f64 * t as f64)) * (cap as f64).ln();
    let mut curve = Vec::with_capacity(m_max);
    let mut explained = 0.0;
    for k in 1..=m_max {
        explained += pairs.values[k - 1];
        let v = (total - explained).max(IC_VARIANCE_FLOOR);
        curve.push(v.ln() + k as f64 * penalty_unit);
    }
    let mut best = 0usize;
    for k in 1..m_max {
        if curve[k] < curve[best] {
            best = k;
        }
    }
    Ok((best + 1, curve))
}

/// Eigenvalue-ratio choice of the number of factors on the tau-matrix
/// spectrum: `m̂ = argmax_{k ≤ m_max} λ_k / λ_{k+1}` with eigenvalues floored
/// at `1e−12` and ties resolved toward the smallest `k`.
pub fn select_num_factors_er(tau: &KendallTauMatrix, m_max: usize) -> Result<usize> {
    let n = tau.matrix.nrows();
    if m_max == 0 || m_max + 1 > n {
        return Err(Error::Input(format!(
            "m_max must be in [1, N − 1] = [1, {}], got {m_max}",
            n.saturating_sub(1)
        )));
    }
    let pairs = top_eigen_sym(&tau.matrix, m_max + 1)?;
    let mut best_k = 1usize;
    let mut best_ratio = f64::NEG_INFINITY;
    for k in 1..=m_max {
        let num = pairs.values[k - 1].max(ER_EIGENVALUE_FLOOR);
        let den = pairs.values[k].max(ER_EIGENVALUE_FLOOR);
        let ratio = num / den;
        if ratio > best_ratio {
            best_ratio = ratio;
            best_k = k;
        }
    }
    Ok(best_k)
}
