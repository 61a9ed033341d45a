//! Dense symmetric linear algebra kernels shared by the estimators.
//!
//! Everything here operates on `f64` matrices. Eigendecompositions follow a
//! fixed ordering contract: eigenvalues descending, and each eigenvector
//! scaled so that its largest-magnitude entry is positive (ties broken by the
//! lowest index). That convention makes factor estimates reproducible across
//! runs and platforms up to floating-point rounding.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Above this dimension the full dense eigensolver is replaced by a shifted,
/// deflated power iteration that only extracts the leading pairs.
pub(crate) const DENSE_EIGEN_MAX_DIM: usize = 512;

/// Relative residual tolerance for the iterative eigensolver.
const POWER_TOL: f64 = 1e-10;

/// Condition-number ceiling for the symmetric positive-definite solver.
const SPD_MAX_COND: f64 = 1e12;

/// True when every entry of `a` is finite.
pub(crate) fn all_finite(a: &DMatrix<f64>) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Maximum absolute entry of `a`; zero for an empty matrix.
pub(crate) fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
}

/// Flips eigenvector signs in place so the largest-magnitude entry of each
/// column is positive. Ties are resolved toward the lowest row index, making
/// the orientation deterministic.
pub(crate) fn apply_sign_convention(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut lead = 0usize;
        let mut best = f64::NEG_INFINITY;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues descending,
/// sign convention applied. The input is symmetrized as `(a + aᵀ)/2` first so
/// tiny asymmetries from accumulation order cannot leak into the result.
pub(crate) fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let sym = (a + a.transpose()) * 0.5;
    let decomp = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        decomp.eigenvalues[j]
            .partial_cmp(&decomp.eigenvalues[i])
            .expect("eigenvalues of a finite symmetric matrix are finite")
            .then(i.cmp(&j))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| decomp.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &decomp.eigenvectors.column(src));
    }
    apply_sign_convention(&mut vectors);
    (values, vectors)
}

/// Leading `m` eigenpairs of a symmetric matrix.
///
/// Dispatches to the dense solver for moderate dimensions and to a shifted,
/// deflated power iteration beyond [`DENSE_EIGEN_MAX_DIM`]. Both paths return
/// eigenvalues in descending order with the shared sign convention.
pub(crate) fn top_eigen(a: &DMatrix<f64>, m: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    debug_assert!(m >= 1 && m <= n);
    if n <= DENSE_EIGEN_MAX_DIM {
        let (values, vectors) = sym_eigen_desc(a);
        Ok((
            values.rows(0, m).into_owned(),
            vectors.columns(0, m).into_owned(),
        ))
    } else {
        top_eigen_power(a, m)
    }
}

/// Deflated power iteration on `a + s·I` where the Gershgorin-derived shift
/// `s` guarantees positive semidefiniteness, so the dominant eigenvalue of
/// the shifted matrix corresponds to the algebraically largest of `a`.
fn top_eigen_power(a: &DMatrix<f64>, m: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    // Smallest shift that makes every Gershgorin disc nonnegative.
    let mut shift = 0.0_f64;
    for i in 0..n {
        let off: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| a[(i, j)].abs())
            .sum();
        shift = shift.max(off - a[(i, i)]);
    }
    let scale = max_abs(a).max(1.0);
    let max_iter = 10 * n;

    let mut values = DVector::zeros(m);
    let mut vectors = DMatrix::zeros(n, m);
    for k in 0..m {
        // Deterministic start: a mildly sloped vector is very unlikely to be
        // orthogonal to the target eigenspace; deflation keeps it out of the
        // span already found.
        let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64) / (n as f64));
        orthogonalize(&mut v, &vectors, k);
        normalize(&mut v)?;
        let mut converged = false;
        for _ in 0..max_iter {
            let mut w = a * &v + &v * shift;
            orthogonalize(&mut w, &vectors, k);
            let nu = v.dot(&w);
            let resid = (&w - &v * nu).norm();
            normalize(&mut w)?;
            v = w;
            if resid <= POWER_TOL * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numerical(format!(
                "power iteration did not reach residual {POWER_TOL:.1e}·{scale:.3e} \
                 for eigenpair {} of a {n}×{n} matrix within {max_iter} iterations",
                k + 1
            )));
        }
        let nu = v.dot(&(a * &v + &v * shift));
        values[k] = nu - shift;
        vectors.set_column(k, &v);
    }
    apply_sign_convention(&mut vectors);
    Ok((values, vectors))
}

/// Removes the components of `v` along the first `k` columns of `basis`.
fn orthogonalize(v: &mut DVector<f64>, basis: &DMatrix<f64>, k: usize) {
    for j in 0..k {
        let col = basis.column(j);
        let proj = col.dot(v);
        v.axpy(-proj, &col.into_owned(), 1.0);
    }
}

fn normalize(v: &mut DVector<f64>) -> Result<()> {
    let norm = v.norm();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(Error::numerical(
            "power iteration produced a zero or non-finite vector",
        ));
    }
    *v /= norm;
    Ok(())
}

/// Solves `a · x = b` for a symmetric positive-definite `a` via its
/// eigendecomposition, rejecting systems whose condition number exceeds
/// `1e12`. `context` names the system being solved so error messages can
/// point at the estimator that failed.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(b.nrows(), n);
    let (values, vectors) = sym_eigen_desc(a);
    let lambda_max = values[0];
    let lambda_min = values[n - 1];
    if lambda_min <= 0.0 {
        return Err(Error::Numerical(format!(
            "{context}: matrix is singular or indefinite (smallest eigenvalue {lambda_min:.3e})"
        )));
    }
    let cond = lambda_max / lambda_min;
    if cond > SPD_MAX_COND {
        return Err(Error::Numerical(format!(
            "{context}: condition number {cond:.3e} exceeds {SPD_MAX_COND:.0e}"
        )));
    }
    let mut scaled = vectors.transpose() * b;
    for i in 0..n {
        scaled.row_mut(i).scale_mut(1.0 / values[i]);
    }
    Ok(&vectors * scaled)
}
