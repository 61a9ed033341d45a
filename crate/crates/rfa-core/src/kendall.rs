//! Spatial (multivariate) Kendall's tau matrix of a panel.
//!
//! For a `T×N` panel with rows `y_t`, the estimator averages the outer
//! products of normalized pairwise differences over all unordered period
//! pairs `t < t'`:
//!
//! ```text
//! K = (1/P) · Σ_{t<t'} (y_t − y_t')(y_t − y_t')ᵀ / ‖y_t − y_t'‖²
//! ```
//!
//! where `P` counts the pairs with a nonzero difference; pairs of identical
//! rows carry no directional information and are skipped, with the normalizer
//! shrunk accordingly. The result is symmetric, positive semidefinite, has
//! unit trace, and — because every pair is projected to the unit sphere — is
//! invariant to relocating or rescaling the whole panel. That invariance is
//! what lets eigenvector-based loading estimates survive heavy-tailed data
//! that would wreck a sample covariance matrix.
//!
//! The pair loop costs `O(T²N²)`. With the `parallel` feature the pair space
//! is split into a fixed number of stripes that are accumulated independently
//! and combined in stripe order, so results do not depend on thread count or
//! scheduling. The serial path is always compiled and accumulates pairs in
//! lexicographic `(t, t')` order.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of stripes the pair space is divided into on the parallel path.
/// Fixed (rather than derived from the thread pool) so the summation order
/// is a function of the input shape alone.
#[cfg(feature = "parallel")]
const PARALLEL_STRIPES: usize = 32;

/// Spatial Kendall's tau matrix together with the number of period pairs
/// that actually entered the average.
#[derive(Debug, Clone)]
pub struct KendallTauMatrix {
    /// The `N×N` tau matrix: symmetric, positive semidefinite, unit trace.
    pub matrix: DMatrix<f64>,
    /// Unordered period pairs with a nonzero difference vector.
    pub included_pairs: usize,
}

/// Computes the spatial Kendall's tau matrix of a `T×N` panel (rows are
/// periods, columns are cross-section units).
///
/// Uses the striped parallel accumulation when the `parallel` feature is
/// enabled and the sequential loop otherwise. Both paths are deterministic;
/// they may differ from each other by last-bit rounding because partial sums
/// are combined in a different order.
///
/// # Errors
///
/// * [`Error::Input`] if `T < 2`, `N == 0`, or the panel contains a
///   non-finite value.
/// * [`Error::Degenerate`] if every pair of rows is identical.
pub fn spatial_kendall_tau(y: &DMatrix<f64>) -> Result<KendallTauMatrix> {
    validate_panel(y)?;
    #[cfg(feature = "parallel")]
    {
        kendall_striped(y)
    }
    #[cfg(not(feature = "parallel"))]
    {
        kendall_serial_inner(y)
    }
}

/// Sequential reference path: accumulates pairs in lexicographic `(t, t')`
/// order. Always available, independent of feature flags.
pub fn spatial_kendall_tau_serial(y: &DMatrix<f64>) -> Result<KendallTauMatrix> {
    validate_panel(y)?;
    kendall_serial_inner(y)
}

/// Striped parallel path; see the module docs for the determinism argument.
#[cfg(feature = "parallel")]
pub fn spatial_kendall_tau_parallel(y: &DMatrix<f64>) -> Result<KendallTauMatrix> {
    validate_panel(y)?;
    kendall_striped(y)
}

/// Spatial Kendall's tau over a seeded random subset of at most `max_pairs`
/// period pairs, for panels where the full `O(T²)` pair sweep is too slow.
///
/// Pairs are drawn without replacement using a counter-based generator, then
/// accumulated in lexicographic order, so a given `(panel, max_pairs, seed)`
/// always yields the same matrix. When `max_pairs` covers the full pair set
/// the result equals [`spatial_kendall_tau_serial`].
pub fn spatial_kendall_tau_subsampled(
    y: &DMatrix<f64>,
    max_pairs: usize,
    seed: u64,
) -> Result<KendallTauMatrix> {
    validate_panel(y)?;
    if max_pairs == 0 {
        return Err(Error::input("max_pairs must be at least 1"));
    }
    let t = y.nrows();
    let total = t * (t - 1) / 2;
    if max_pairs >= total {
        return kendall_serial_inner(y);
    }

    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> =
        rand::seq::index::sample(&mut rng, total, max_pairs).into_vec();
    picked.sort_unstable();

    // Walk the (t, t') blocks in lexicographic order, consuming the sorted
    // pair indices that fall into each block.
    let cols = transpose_columns(y);
    let n = y.ncols();
    let mut acc = TriAccumulator::new(n);
    let mut next = 0usize; // cursor into `picked`
    let mut block_start = 0usize;
    for a in 0..t - 1 {
        let block_len = t - 1 - a;
        while next < picked.len() && picked[next] < block_start + block_len {
            let b = a + 1 + (picked[next] - block_start);
            acc.add_pair(&cols[a], &cols[b]);
            next += 1;
        }
        block_start += block_len;
    }
    acc.finish(n)
}

fn validate_panel(y: &DMatrix<f64>) -> Result<()> {
    let (t, n) = y.shape();
    if t < 2 {
        return Err(Error::Input(format!(
            "spatial Kendall's tau needs at least 2 time periods, got {t}"
        )));
    }
    if n == 0 {
        return Err(Error::input("panel has no cross-section units"));
    }
    if !linalg::all_finite(y) {
        let (r, c) = first_nonfinite(y);
        return Err(Error::Input(format!(
            "panel contains a non-finite value at period {r}, unit {c}"
        )));
    }
    Ok(())
}

fn first_nonfinite(y: &DMatrix<f64>) -> (usize, usize) {
    for r in 0..y.nrows() {
        for c in 0..y.ncols() {
            if !y[(r, c)].is_finite() {
                return (r, c);
            }
        }
    }
    unreachable!("caller checked that a non-finite entry exists");
}

/// Copies each period (row) of the panel into its own contiguous buffer so
/// the pair loop reads cache-friendly slices.
fn transpose_columns(y: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..y.nrows())
        .map(|t| y.row(t).iter().copied().collect())
        .collect()
}

/// Packed upper-triangle accumulator for Σ d dᵀ / ‖d‖².
struct TriAccumulator {
    /// Column-packed upper triangle: entry `(i, j)` with `i ≤ j` lives at
    /// `j(j+1)/2 + i`.
    tri: Vec<f64>,
    included: usize,
}

impl TriAccumulator {
    fn new(n: usize) -> Self {
        TriAccumulator {
            tri: vec![0.0; n * (n + 1) / 2],
            included: 0,
        }
    }

    #[inline]
    fn add_pair(&mut self, row_a: &[f64], row_b: &[f64]) {
        let n = row_a.len();
        let mut s = 0.0;
        let mut d = vec![0.0; n];
        for i in 0..n {
            let di = row_a[i] - row_b[i];
            d[i] = di;
            s += di * di;
        }
        if s == 0.0 {
            return; // identical rows carry no direction
        }
        self.included += 1;
        let inv = 1.0 / s;
        let mut base = 0usize;
        for j in 0..n {
            let w = d[j] * inv;
            let col = &mut self.tri[base..base + j + 1];
            for (i, slot) in col.iter_mut().enumerate() {
                *slot += d[i] * w;
            }
            base += j + 1;
        }
    }

    #[cfg(feature = "parallel")]
    fn merge(&mut self, other: &TriAccumulator) {
        for (a, b) in self.tri.iter_mut().zip(&other.tri) {
            *a += b;
        }
        self.included += other.included;
    }

    fn finish(self, n: usize) -> Result<KendallTauMatrix> {
        if self.included == 0 {
            return Err(Error::Degenerate(
                "every pair of panel rows is identical; the tau matrix is undefined".into(),
            ));
        }
        let scale = 1.0 / self.included as f64;
        let mut k = DMatrix::zeros(n, n);
        let mut base = 0usize;
        for j in 0..n {
            for i in 0..=j {
                let v = self.tri[base + i] * scale;
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            base += j + 1;
        }
        Ok(KendallTauMatrix {
            matrix: k,
            included_pairs: self.included,
        })
    }
}

fn kendall_serial_inner(y: &DMatrix<f64>) -> Result<KendallTauMatrix> {
    let (t, n) = y.shape();
    let cols = transpose_columns(y);
    let mut acc = TriAccumulator::new(n);
    for a in 0..t - 1 {
        for b in a + 1..t {
            acc.add_pair(&cols[a], &cols[b]);
        }
    }
    acc.finish(n)
}

/// Stripe `g` owns every anchor period `t ≡ g (mod G)`; the per-stripe sums
/// run in lexicographic order and are merged in stripe order afterwards.
#[cfg(feature = "parallel")]
fn kendall_striped(y: &DMatrix<f64>) -> Result<KendallTauMatrix> {
    let (t, n) = y.shape();
    let cols = transpose_columns(y);
    let stripes = PARALLEL_STRIPES.min(t - 1);
    let partials: Vec<TriAccumulator> = (0..stripes)
        .into_par_iter()
        .map(|g| {
            let mut acc = TriAccumulator::new(n);
            let mut a = g;
            while a < t - 1 {
                for b in a + 1..t {
                    acc.add_pair(&cols[a], &cols[b]);
                }
                a += stripes;
            }
            acc
        })
        .collect();
    let mut total = TriAccumulator::new(n);
    for p in &partials {
        total.merge(p);
    }
    total.finish(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn panel(t: usize, n: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(t, n, data)
    }

    /// Naive reference: dense outer products, no packing, no striping.
    fn naive_tau(y: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
        let (t, n) = y.shape();
        let mut sum = DMatrix::zeros(n, n);
        let mut included = 0usize;
        for a in 0..t {
            for b in a + 1..t {
                let d = y.row(a).transpose() - y.row(b).transpose();
                let s = d.norm_squared();
                if s > 0.0 {
                    sum += &d * d.transpose() / s;
                    included += 1;
                }
            }
        }
        (sum / included as f64, included)
    }

    #[test]
    fn two_periods_single_direction() {
        let y = panel(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let k = spatial_kendall_tau(&y).unwrap();
        assert_eq!(k.included_pairs, 1);
        let expected = panel(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(k.matrix, expected);
    }

    #[test]
    fn four_periods_unit_square_averages_to_half_identity() {
        // Corners of the unit square: the six pairwise directions average to
        // an isotropic matrix with trace one.
        let y = panel(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let k = spatial_kendall_tau(&y).unwrap();
        assert_eq!(k.included_pairs, 6);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 0.5 } else { 0.0 };
                assert_relative_eq!(k.matrix[(i, j)], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn identical_rows_are_skipped_and_renormalized() {
        let y = panel(3, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let k = spatial_kendall_tau(&y).unwrap();
        assert_eq!(k.included_pairs, 2);
        assert_eq!(k.matrix, panel(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn constant_panel_is_degenerate() {
        let y = DMatrix::from_element(5, 3, 2.5);
        match spatial_kendall_tau(&y) {
            Err(Error::Degenerate(_)) => {}
            other => panic!("expected degenerate error, got {other:?}"),
        }
    }

    #[test]
    fn short_panel_and_nonfinite_are_rejected() {
        let y = DMatrix::from_element(1, 3, 0.0);
        assert!(matches!(spatial_kendall_tau(&y), Err(Error::Input(_))));

        let mut y = panel(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        y[(2, 1)] = f64::NAN;
        let err = spatial_kendall_tau(&y).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("period 2") && msg.contains("unit 1"), "{msg}");
    }

    #[test]
    fn matches_naive_reference_on_random_panel() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let y = DMatrix::from_fn(23, 7, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let k = spatial_kendall_tau_serial(&y).unwrap();
        let (want, included) = naive_tau(&y);
        assert_eq!(k.included_pairs, included);
        assert!(crate::linalg::max_abs(&(&k.matrix - &want)) < 1e-14);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_serial_paths_agree() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let y = DMatrix::from_fn(67, 11, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let serial = spatial_kendall_tau_serial(&y).unwrap();
        let parallel = spatial_kendall_tau_parallel(&y).unwrap();
        assert_eq!(serial.included_pairs, parallel.included_pairs);
        assert!(
            crate::linalg::max_abs(&(&serial.matrix - &parallel.matrix)) < 1e-13,
            "stripe combination should only move the result by rounding"
        );
        // Rerunning either path reproduces it bit for bit.
        let again = spatial_kendall_tau_parallel(&y).unwrap();
        assert_eq!(parallel.matrix, again.matrix);
    }

    #[test]
    fn subsample_is_deterministic_and_collapses_to_full_sweep() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let y = DMatrix::from_fn(40, 5, |_, _| rng.random::<f64>());
        let full = spatial_kendall_tau_serial(&y).unwrap();
        let capped = spatial_kendall_tau_subsampled(&y, 10_000, 1).unwrap();
        assert_eq!(full.matrix, capped.matrix);

        let a = spatial_kendall_tau_subsampled(&y, 100, 7).unwrap();
        let b = spatial_kendall_tau_subsampled(&y, 100, 7).unwrap();
        assert_eq!(a.matrix, b.matrix);
        assert_eq!(a.included_pairs, 100);
        let c = spatial_kendall_tau_subsampled(&y, 100, 8).unwrap();
        assert_ne!(a.matrix, c.matrix, "different seeds should pick different pairs");
        // Still a valid tau matrix: unit trace.
        assert_relative_eq!(a.matrix.trace(), 1.0, epsilon = 1e-12);
    }
}
