//! Evaluation utilities: partition agreement scores, common-component mean
//! squared error, and a VAR forecaster for the estimated factors.

use nalgebra::{DMatrix, DVector};

use crate::cluster::Partition;
use crate::error::{Error, Result};
use crate::linalg;

/// Agreement between an estimated partition and the truth. `nmi` is `None`
/// when either partition is a single group, where mutual information is
/// identically zero and the score is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterScore {
    pub nmi: Option<f64>,
    pub purity: f64,
}

/// Mean squared difference between two `T×N` common-component matrices:
/// `‖Ĉ − C‖²_F / (NT)`.
pub fn common_component_mse(c_hat: &DMatrix<f64>, c_true: &DMatrix<f64>) -> Result<f64> {
    if c_hat.shape() != c_true.shape() {
        return Err(Error::Input(format!(
            "shape mismatch: {}×{} vs {}×{}",
            c_hat.nrows(),
            c_hat.ncols(),
            c_true.nrows(),
            c_true.ncols()
        )));
    }
    if !linalg::all_finite(c_hat) || !linalg::all_finite(c_true) {
        return Err(Error::input("common components must be finite"));
    }
    let (t, n) = c_hat.shape();
    Ok((c_hat - c_true).norm_squared() / (n as f64 * t as f64))
}

fn contingency(a: &Partition, b: &Partition) -> Result<Vec<Vec<usize>>> {
    if a.num_units() != b.num_units() {
        return Err(Error::Input(format!(
            "partitions cover different unit counts: {} vs {}",
            a.num_units(),
            b.num_units()
        )));
    }
    let mut table = vec![vec![0usize; b.num_groups()]; a.num_groups()];
    for (&la, &lb) in a.labels().iter().zip(b.labels()) {
        table[la - 1][lb - 1] += 1;
    }
    Ok(table)
}

/// Normalized mutual information with base-2 logs and the arithmetic-mean
/// normalizer: `NMI = I(A;B) / ((H(A) + H(B))/2)`, clamped to `[0, 1]`.
///
/// Returns `Ok(None)` when either partition has a single group: its entropy
/// vanishes, mutual information is identically zero, and the ratio carries
/// no information.
pub fn nmi(a: &Partition, b: &Partition) -> Result<Option<f64>> {
    let table = contingency(a, b)?;
    if a.num_groups() == 1 || b.num_groups() == 1 {
        return Ok(None);
    }
    let n = a.num_units() as f64;
    let row_sums: Vec<f64> = table
        .iter()
        .map(|row| row.iter().sum::<usize>() as f64)
        .collect();
    let col_sums: Vec<f64> = (0..b.num_groups())
        .map(|j| table.iter().map(|row| row[j]).sum::<usize>() as f64)
        .collect();
    let entropy = |sums: &[f64]| -> f64 {
        -sums
            .iter()
            .filter(|&&s| s > 0.0)
            .map(|&s| (s / n) * (s / n).log2())
            .sum::<f64>()
    };
    let h_a = entropy(&row_sums);
    let h_b = entropy(&col_sums);
    let mut info = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            if count > 0 {
                let p = count as f64 / n;
                info += p * (p * n * n / (row_sums[i] * col_sums[j])).log2();
            }
        }
    }
    Ok(Some((info / ((h_a + h_b) / 2.0)).clamp(0.0, 1.0)))
}

/// Purity of `estimate` against `truth`: each estimated group is credited
/// with its best-matching true group, `(1/N) Σ_j max_i |G_i ∩ Ĝ_j|`.
/// Asymmetric by construction — refining the estimate can only raise it.
pub fn purity(truth: &Partition, estimate: &Partition) -> Result<f64> {
    let table = contingency(truth, estimate)?;
    let n = truth.num_units() as f64;
    let mut hits = 0usize;
    for j in 0..estimate.num_groups() {
        hits += table.iter().map(|row| row[j]).max().unwrap_or(0);
    }
    Ok(hits as f64 / n)
}

/// Both agreement scores at once.
pub fn cluster_score(truth: &Partition, estimate: &Partition) -> Result<ClusterScore> {
    Ok(ClusterScore {
        nmi: nmi(truth, estimate)?,
        purity: purity(truth, estimate)?,
    })
}

/// A fitted vector autoregression of order `p` with an intercept:
/// `f_t = c + A_1 f_{t−1} + … + A_p f_{t−p} + e_t`.
#[derive(Debug, Clone)]
pub struct VarModel {
    pub order: usize,
    /// Lag coefficient matrices `A_1..A_p`, each `m×m`.
    pub coef: Vec<DMatrix<f64>>,
    pub intercept: DVector<f64>,
    /// `EᵀE/(T−p)` over the fitted sample.
    pub residual_cov: DMatrix<f64>,
}

impl VarModel {
    pub fn num_series(&self) -> usize {
        self.intercept.len()
    }

    /// One-step map: `c + Σ_l A_l · lags[l−1]` where `lags[0]` is the most
    /// recent observation.
    fn step(&self, lags: &[DVector<f64>]) -> DVector<f64> {
        let mut next = self.intercept.clone();
        for (l, a) in self.coef.iter().enumerate() {
            next += a * &lags[l];
        }
        next
    }
}

/// Fits a VAR(p) with intercept to a `T×m` factor matrix by least squares
/// (equation by equation on the shared lagged design).
pub fn fit_var(f: &DMatrix<f64>, p: usize) -> Result<VarModel> {
    let (t, m) = f.shape();
    if p == 0 {
        return Err(Error::input("VAR order must be at least 1"));
    }
    if m == 0 {
        return Err(Error::input("factor matrix has no columns"));
    }
    if !linalg::all_finite(f) {
        return Err(Error::input("factor matrix contains a non-finite value"));
    }
    let rows = t.saturating_sub(p);
    let cols = 1 + m * p;
    if rows < cols {
        return Err(Error::Input(format!(
            "VAR({p}) on {m} series needs at least {} observations, got {t}",
            p + cols
        )));
    }
    let mut design = DMatrix::zeros(rows, cols);
    let mut response = DMatrix::zeros(rows, m);
    for (r, time) in (p..t).enumerate() {
        design[(r, 0)] = 1.0;
        for l in 1..=p {
            for j in 0..m {
                design[(r, 1 + (l - 1) * m + j)] = f[(time - l, j)];
            }
        }
        for j in 0..m {
            response[(r, j)] = f[(time, j)];
        }
    }
    let gram = design.transpose() * &design;
    let beta = linalg::solve_spd(
        &gram,
        &(design.transpose() * &response),
        "VAR least squares: XᵀX",
    )?;
    let resid = &response - &design * &beta;
    let residual_cov = resid.transpose() * &resid / rows as f64;
    let intercept = beta.row(0).transpose();
    let coef = (1..=p)
        .map(|l| beta.rows(1 + (l - 1) * m, m).transpose())
        .collect();
    Ok(VarModel {
        order: p,
        coef,
        intercept,
        residual_cov,
    })
}

/// Iterated multi-step forecast: returns a `steps×m` matrix whose row `h−1`
/// is the `h`-step-ahead forecast from the end of `history`.
pub fn forecast_var(
    model: &VarModel,
    history: &DMatrix<f64>,
    steps: usize,
) -> Result<DMatrix<f64>> {
    let m = model.num_series();
    let p = model.order;
    if history.ncols() != m {
        return Err(Error::Input(format!(
            "history has {} series but the model {m}",
            history.ncols()
        )));
    }
    if history.nrows() < p {
        return Err(Error::Input(format!(
            "history must contain at least p = {p} observations, got {}",
            history.nrows()
        )));
    }
    if steps == 0 {
        return Err(Error::input("forecast horizon must be at least 1"));
    }
    if !linalg::all_finite(history) {
        return Err(Error::input("history contains a non-finite value"));
    }
    // lags[0] is the most recent value, lags[p−1] the oldest needed.
    let t = history.nrows();
    let mut lags: Vec<DVector<f64>> = (0..p)
        .map(|l| history.row(t - 1 - l).transpose())
        .collect();
    let mut out = DMatrix::zeros(steps, m);
    for h in 0..steps {
        let next = model.step(&lags);
        out.row_mut(h).copy_from(&next.transpose());
        lags.rotate_right(1);
        lags[0] = next;
    }
    Ok(out)
}

/// Per-horizon cross-sectional forecast error of the panel implied by factor
/// forecasts: entry `h` is `‖Λ f̂_{T+h+1} − y_{T+h+1}‖² / N`.
pub fn forecast_panel_mse(
    loadings: &DMatrix<f64>,
    factor_forecasts: &DMatrix<f64>,
    realized: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let (n, m) = loadings.shape();
    let (h, mf) = factor_forecasts.shape();
    if mf != m {
        return Err(Error::Input(format!(
            "forecasts have {mf} factors but loadings {m}"
        )));
    }
    if realized.shape() != (h, n) {
        return Err(Error::Input(format!(
            "realized panel must be {h}×{n}, got {}×{}",
            realized.nrows(),
            realized.ncols()
        )));
    }
    let predicted = factor_forecasts * loadings.transpose();
    Ok((0..h)
        .map(|row| {
            (predicted.row(row) - realized.row(row)).norm_squared() / n as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn part(labels: &[usize]) -> Partition {
        Partition::new(labels.to_vec()).unwrap()
    }

    #[test]
    fn nmi_frozen_cases() {
        // Identical partitions score 1 regardless of label names.
        let a = part(&[1, 1, 2, 2]);
        assert_relative_eq!(nmi(&a, &a).unwrap().unwrap(), 1.0, epsilon = 1e-12);
        let relabeled = part(&[2, 2, 1, 1]);
        assert_relative_eq!(nmi(&a, &relabeled).unwrap().unwrap(), 1.0, epsilon = 1e-12);

        // Independent partitions of the 4-cycle have zero mutual information.
        let cross = part(&[1, 2, 1, 2]);
        assert_relative_eq!(nmi(&a, &cross).unwrap().unwrap(), 0.0, epsilon = 1e-12);

        // {1,2}{3,4} vs {1,2,3}{4}, worked by hand with base-2 logs:
        // I = ½·log2(4/3) + ¼·log2(2/3) + ¼·log2(2),
        // H_a = 1, H_b = ¾·log2(4/3) + ¼·log2(4).
        let b = part(&[1, 1, 1, 2]);
        let log2_4_3 = 2.0 - 3.0_f64.log2();
        let info = 0.5 * log2_4_3 + 0.25 * (1.0 - 3.0_f64.log2()) + 0.25;
        let h_b = 0.75 * log2_4_3 + 0.5;
        let expected = info / ((1.0 + h_b) / 2.0);
        assert_relative_eq!(nmi(&a, &b).unwrap().unwrap(), expected, epsilon = 1e-12);

        // Single-group partitions make the score undefined.
        let ones = part(&[1, 1, 1, 1]);
        assert_eq!(nmi(&a, &ones).unwrap(), None);
        assert_eq!(nmi(&ones, &a).unwrap(), None);
        assert_eq!(nmi(&ones, &ones).unwrap(), None);
    }

    #[test]
    fn nmi_is_symmetric_and_bounded_on_random_pairs() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        for _ in 0..200 {
            let n = rng.random_range(2..30);
            let labels = |rng: &mut rand_chacha::ChaCha8Rng| -> Partition {
                let k = rng.random_range(1..=n);
                let mut l: Vec<usize> = (0..n).map(|i| (i % k) + 1).collect();
                l.shuffle(rng);
                Partition::new(l).unwrap()
            };
            let a = labels(&mut rng);
            let b = labels(&mut rng);
            let ab = nmi(&a, &b).unwrap();
            let ba = nmi(&b, &a).unwrap();
            match (ab, ba) {
                (Some(x), Some(y)) => {
                    assert_relative_eq!(x, y, epsilon = 1e-12);
                    assert!((0.0..=1.0).contains(&x));
                }
                (None, None) => {
                    assert!(a.num_groups() == 1 || b.num_groups() == 1);
                }
                other => panic!("asymmetric definedness: {other:?}"),
            }
        }
    }

    #[test]
    fn purity_frozen_cases() {
        let truth = part(&[1, 1, 2, 2]);
        assert_relative_eq!(
            purity(&truth, &part(&[1, 1, 1, 2])).unwrap(),
            0.75,
            epsilon = 1e-15
        );
        assert_relative_eq!(purity(&truth, &truth).unwrap(), 1.0, epsilon = 1e-15);
        // Singleton estimate groups are trivially pure.
        assert_relative_eq!(
            purity(&truth, &part(&[1, 2, 3, 4])).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        // A single estimated group scores the largest true group share.
        let skewed = part(&[1, 1, 1, 2]);
        assert_relative_eq!(
            purity(&skewed, &part(&[1, 1, 1, 1])).unwrap(),
            0.75,
            epsilon = 1e-15
        );
    }

    #[test]
    fn mse_counts_every_cell() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 2.0]);
        assert_relative_eq!(common_component_mse(&a, &b).unwrap(), 1.0, epsilon = 1e-15);
        assert!(common_component_mse(&a, &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn ar1_on_linear_trend_is_exact() {
        // y_t = 1 + y_{t−1} exactly, so OLS recovers intercept 1, slope 1,
        // zero residual variance, and the forecasts continue the trend.
        let f = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let model = fit_var(&f, 1).unwrap();
        assert_relative_eq!(model.intercept[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(model.coef[0][(0, 0)], 1.0, epsilon = 1e-10);
        assert!(model.residual_cov[(0, 0)].abs() < 1e-18);

        let fc = forecast_var(&model, &f, 3).unwrap();
        for (h, want) in [6.0, 7.0, 8.0].iter().enumerate() {
            assert_relative_eq!(fc[(h, 0)], *want, epsilon = 1e-9);
        }
    }

    #[test]
    fn var_least_squares_matches_svd_reference() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(101);
        let (t, m, p) = (120, 2, 3);
        // Stable VAR(1)-generated data, then fit an order-3 model.
        let mut f = DMatrix::zeros(t, m);
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
        let mut prev = DVector::from_vec(vec![0.3, -0.4]);
        for r in 0..t {
            let innov = DVector::from_fn(m, |_, _| rng.random::<f64>() - 0.5);
            let next = &a * &prev + innov;
            f.row_mut(r).copy_from(&next.transpose());
            prev = next;
        }
        let model = fit_var(&f, p).unwrap();

        // Reference: solve the same least-squares problem with SVD.
        let rows = t - p;
        let cols = 1 + m * p;
        let mut design = DMatrix::zeros(rows, cols);
        let mut response = DMatrix::zeros(rows, m);
        for (r, time) in (p..t).enumerate() {
            design[(r, 0)] = 1.0;
            for l in 1..=p {
                for j in 0..m {
                    design[(r, 1 + (l - 1) * m + j)] = f[(time - l, j)];
                }
            }
            for j in 0..m {
                response[(r, j)] = f[(time, j)];
            }
        }
        let svd = design.svd(true, true);
        let beta = svd.solve(&response, 1e-12).unwrap();
        assert_relative_eq!(model.intercept[0], beta[(0, 0)], epsilon = 1e-9);
        for l in 0..p {
            for i in 0..m {
                for j in 0..m {
                    assert_relative_eq!(
                        model.coef[l][(i, j)],
                        beta[(1 + l * m + j, i)],
                        epsilon = 1e-9
                    );
                }
            }
        }
    }

    #[test]
    fn iterated_forecasts_follow_the_recursion() {
        // Hand-checkable VAR(2) on one series: y_t = 0.5·y_{t−1} + 0.25·y_{t−2}.
        let model = VarModel {
            order: 2,
            coef: vec![
                DMatrix::from_element(1, 1, 0.5),
                DMatrix::from_element(1, 1, 0.25),
            ],
            intercept: DVector::zeros(1),
            residual_cov: DMatrix::zeros(1, 1),
        };
        let history = DMatrix::from_column_slice(2, 1, &[4.0, 8.0]);
        let fc = forecast_var(&model, &history, 3).unwrap();
        // h=1: 0.5·8 + 0.25·4 = 5; h=2: 0.5·5 + 0.25·8 = 4.5;
        // h=3: 0.5·4.5 + 0.25·5 = 3.5.
        assert_relative_eq!(fc[(0, 0)], 5.0, epsilon = 1e-14);
        assert_relative_eq!(fc[(1, 0)], 4.5, epsilon = 1e-14);
        assert_relative_eq!(fc[(2, 0)], 3.5, epsilon = 1e-14);
    }

    #[test]
    fn panel_forecast_mse_frozen_case() {
        let loadings = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let fc = DMatrix::from_element(1, 1, 3.0);
        let realized = DMatrix::from_row_slice(1, 2, &[3.0, 5.0]);
        let mse = forecast_panel_mse(&loadings, &fc, &realized).unwrap();
        assert_eq!(mse.len(), 1);
        assert_relative_eq!(mse[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn var_shape_validation() {
        let f = DMatrix::zeros(5, 2);
        assert!(matches!(fit_var(&f, 0), Err(Error::Input(_))));
        // 5 observations cannot support VAR(2) on 2 series (needs 1+4 cols).
        assert!(matches!(fit_var(&f, 2), Err(Error::Input(_))));
    }
}
