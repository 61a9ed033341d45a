//! Group-constrained loading re-estimation, information-criterion selection
//! of the number of groups, and the end-to-end pipeline.
//!
//! Given first-stage factors `F̃` and a candidate partition, each group's
//! loading is the least-squares coefficient of the group-averaged series on
//! `F̃` — equivalently the within-group average of the per-unit OLS loadings.
//! Scanning the AHC merge path over `K = 1..K̄` and charging a penalty per
//! group yields the estimated number of groups.

use nalgebra::DMatrix;

use crate::cluster::{self, MergePath, Partition};
use crate::error::{Error, Result};
use crate::factor::{self, FactorFit, Method, NumFactors};
use crate::kendall::{self, KendallTauMatrix};
use crate::linalg;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Floor applied to the residual variance before taking its log in the
/// group-number criterion.
const S_FLOOR: f64 = 1e-15;

/// Penalty weight `ρ` used in `IC(K) = ln S(K) + K·ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoRule {
    /// `ρ(K) = ln(min{n_min, T}) / min{n_min, T}` where `n_min` is the
    /// smallest group size of the K-cut, recomputed at every `K`. Note that
    /// a cut containing a singleton group gets `ρ = 0` and is charged no
    /// penalty; with exactly-fitting data this makes the criterion prefer
    /// the first cut that contains a singleton over coarser exact cuts.
    Adaptive,
    /// Constant penalty weight, independent of the cut.
    Fixed(f64),
}

/// Loadings, factors, and fit diagnostics at one partition.
#[derive(Debug, Clone)]
pub struct GroupedFit {
    pub partition: Partition,
    /// `N×m`; rows are bitwise identical within each group.
    pub loadings: DMatrix<f64>,
    /// `T×m` factors re-estimated from the grouped loadings by cross-section
    /// least squares.
    pub refit_factors: DMatrix<f64>,
    /// Mean squared residual `S = ‖Y − F̃Λ̂ᵀ‖²/(NT)` of the grouped fit
    /// against the first-stage factors.
    pub s_value: f64,
}

/// One point of the group-number criterion curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcPoint {
    pub k: usize,
    pub s: f64,
    pub rho: f64,
    pub ic: f64,
}

/// Result of scanning `K = 1..=k_bar` along a merge path.
#[derive(Debug, Clone)]
pub struct IcResult {
    pub k_hat: usize,
    pub curve: Vec<IcPoint>,
    pub k_bar: usize,
}

/// Group-constrained loading estimate.
///
/// With `G = F̃ᵀF̃`, the loading shared by group `g` is
/// `λ_g = G⁻¹ F̃ᵀ ȳ_g` for the group-mean series `ȳ_g`; every unit row of
/// the returned `N×m` matrix is a bitwise copy of its group's `λ_g`.
pub fn grouped_loadings(
    y: &DMatrix<f64>,
    f_tilde: &DMatrix<f64>,
    partition: &Partition,
) -> Result<DMatrix<f64>> {
    let (t, n) = y.shape();
    let m = f_tilde.ncols();
    if f_tilde.nrows() != t {
        return Err(Error::Input(format!(
            "factor rows ({}) must match panel periods ({t})",
            f_tilde.nrows()
        )));
    }
    if partition.num_units() != n {
        return Err(Error::Input(format!(
            "partition covers {} units but the panel has {n}",
            partition.num_units()
        )));
    }
    if !linalg::all_finite(y) || !linalg::all_finite(f_tilde) {
        return Err(Error::input("panel and factors must be finite"));
    }
    let gram = f_tilde.transpose() * f_tilde;
    let groups = partition.group_members();
    // One multi-RHS solve: column g is F̃ᵀ ȳ_g.
    let mut rhs = DMatrix::zeros(m, groups.len());
    for (g, members) in groups.iter().enumerate() {
        let mut mean = nalgebra::DVector::zeros(t);
        for &unit in members {
            mean += y.column(unit);
        }
        mean /= members.len() as f64;
        rhs.set_column(g, &(f_tilde.transpose() * mean));
    }
    let solved = linalg::solve_spd(&gram, &rhs, "grouped loading estimation: F̃ᵀF̃")?;
    let mut loadings = DMatrix::zeros(n, m);
    for (unit, &label) in partition.labels().iter().enumerate() {
        for j in 0..m {
            loadings[(unit, j)] = solved[(j, label - 1)];
        }
    }
    Ok(loadings)
}

/// Mean squared residual of a loading matrix against first-stage factors:
/// `S = ‖Y − F̃Λᵀ‖²_F / (NT)`.
pub fn goodness_of_fit(
    y: &DMatrix<f64>,
    f_tilde: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
) -> Result<f64> {
    let (t, n) = y.shape();
    if f_tilde.nrows() != t || loadings.nrows() != n || f_tilde.ncols() != loadings.ncols() {
        return Err(Error::Input(format!(
            "shape mismatch: panel {t}×{n}, factors {}×{}, loadings {}×{}",
            f_tilde.nrows(),
            f_tilde.ncols(),
            loadings.nrows(),
            loadings.ncols()
        )));
    }
    let resid = y - f_tilde * loadings.transpose();
    Ok(resid.norm_squared() / (n as f64 * t as f64))
}

/// Adaptive penalty weight for a given cut: `ln(v)/v` with
/// `v = min{smallest group size, T}`.
pub fn rho_rule(partition: &Partition, t: usize) -> f64 {
    let v = partition.min_group_size().min(t.max(1)) as f64;
    v.ln() / v
}

/// Scans cuts `K = 1..=k_bar` of a merge path and picks the `K` minimizing
/// `IC(K) = ln max(S(K), 1e−15) + K·ρ(K)` with the adaptive penalty.
/// Ties go to the smallest `K`.
pub fn select_group_number(
    y: &DMatrix<f64>,
    f_tilde: &DMatrix<f64>,
    path: &MergePath,
    k_bar: usize,
) -> Result<IcResult> {
    select_group_number_with(y, f_tilde, path, k_bar, RhoRule::Adaptive)
}

/// [`select_group_number`] with an explicit penalty rule.
pub fn select_group_number_with(
    y: &DMatrix<f64>,
    f_tilde: &DMatrix<f64>,
    path: &MergePath,
    k_bar: usize,
    rho: RhoRule,
) -> Result<IcResult> {
    let n = path.num_leaves();
    if y.ncols() != n {
        return Err(Error::Input(format!(
            "merge path covers {n} units but the panel has {}",
            y.ncols()
        )));
    }
    if k_bar == 0 || k_bar > n {
        return Err(Error::Input(format!(
            "k_bar must be in [1, {n}], got {k_bar}"
        )));
    }
    if let RhoRule::Fixed(x) = rho {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::Input(format!(
                "fixed penalty weight must be finite and nonnegative, got {x}"
            )));
        }
    }
    let t = y.nrows();
    let eval_cut = |k: usize| -> Result<IcPoint> {
        let partition = cluster::cut_path(path, k)?;
        let loadings = grouped_loadings(y, f_tilde, &partition)?;
        let s = goodness_of_fit(y, f_tilde, &loadings)?;
        let rho_k = match rho {
            RhoRule::Adaptive => rho_rule(&partition, t),
            RhoRule::Fixed(x) => x,
        };
        Ok(IcPoint {
            k,
            s,
            rho: rho_k,
            ic: s.max(S_FLOOR).ln() + k as f64 * rho_k,
        })
    };

    #[cfg(feature = "parallel")]
    let evaluated: Vec<Result<IcPoint>> =
        (1..=k_bar).into_par_iter().map(eval_cut).collect();
    #[cfg(not(feature = "parallel"))]
    let evaluated: Vec<Result<IcPoint>> = (1..=k_bar).map(eval_cut).collect();

    let mut curve = Vec::with_capacity(k_bar);
    for point in evaluated {
        curve.push(point?);
    }
    let mut k_hat = curve[0].k;
    let mut best = curve[0].ic;
    for point in &curve[1..] {
        if point.ic < best {
            best = point.ic;
            k_hat = point.k;
        }
    }
    Ok(IcResult {
        k_hat,
        curve,
        k_bar,
    })
}

/// Re-estimates factors from grouped loadings by cross-section least
/// squares: `f̂_t = (Λ̂ᵀΛ̂)⁻¹ Λ̂ᵀ y_t`, i.e. `F̂ = YΛ̂(Λ̂ᵀΛ̂)⁻¹`.
///
/// Fails with a numerical error when the loading matrix has fewer distinct
/// rows than factors, which makes `Λ̂ᵀΛ̂` singular.
pub fn reestimate_factors(y: &DMatrix<f64>, loadings: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = y.ncols();
    let m = loadings.ncols();
    if loadings.nrows() != n {
        return Err(Error::Input(format!(
            "loading rows ({}) must match panel units ({n})",
            loadings.nrows()
        )));
    }
    if !linalg::all_finite(y) || !linalg::all_finite(loadings) {
        return Err(Error::input("panel and loadings must be finite"));
    }
    let distinct = count_distinct_rows(loadings);
    if distinct < m {
        return Err(Error::Numerical(format!(
            "factor re-estimation: loadings have {distinct} distinct row(s) for {m} factor(s), \
             so Λ̂ᵀΛ̂ is rank-deficient; fit fewer factors or more groups"
        )));
    }
    let gram = loadings.transpose() * loadings;
    let solved = linalg::solve_spd(
        &gram,
        &(loadings.transpose() * y.transpose()),
        "factor re-estimation: Λ̂ᵀΛ̂",
    )?;
    Ok(solved.transpose())
}

fn count_distinct_rows(a: &DMatrix<f64>) -> usize {
    let mut distinct: Vec<usize> = Vec::new();
    'rows: for i in 0..a.nrows() {
        for &j in &distinct {
            if (0..a.ncols()).all(|c| a[(i, c)] == a[(j, c)]) {
                continue 'rows;
            }
        }
        distinct.push(i);
    }
    distinct.len()
}

/// Grouped loadings, residual, and re-estimated factors at one partition.
pub fn grouped_fit(
    y: &DMatrix<f64>,
    f_tilde: &DMatrix<f64>,
    partition: &Partition,
) -> Result<GroupedFit> {
    let loadings = grouped_loadings(y, f_tilde, partition)?;
    let s_value = goodness_of_fit(y, f_tilde, &loadings)?;
    let refit_factors = reestimate_factors(y, &loadings)?;
    Ok(GroupedFit {
        partition: partition.clone(),
        loadings,
        refit_factors,
        s_value,
    })
}

/// Configuration for [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub num_factors: NumFactors,
    /// Largest number of factors considered by the automatic selectors.
    pub m_max: usize,
    /// Largest number of groups scanned; defaults to `min(20, ⌊N/2⌋)`.
    pub k_bar: Option<usize>,
    pub rho: RhoRule,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            num_factors: NumFactors::AutoIc,
            m_max: 8,
            k_bar: None,
            rho: RhoRule::Adaptive,
        }
    }
}

/// Default group-scan ceiling: `min(20, ⌊N/2⌋)`, at least 1.
pub fn default_k_bar(n: usize) -> usize {
    (n / 2).min(20).max(1)
}

/// Everything the pipeline produced along the way.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    /// First-stage factor fit (RTS or PCA).
    pub fit: FactorFit,
    /// Tau matrix, present when the method or the factor-number rule used it.
    pub tau: Option<KendallTauMatrix>,
    /// Information-criterion curve of the factor-number selector, when the
    /// automatic rule ran.
    pub m_ic_curve: Option<Vec<f64>>,
    pub merge_path: MergePath,
    pub selection: IcResult,
    /// Grouped fit at the selected number of groups.
    pub grouped: GroupedFit,
}

/// Full grouped-factor pipeline for one panel and one method:
/// factor fit → loading distances → AHC → group-number criterion →
/// grouped loadings → factor re-estimation.
pub fn run_pipeline(
    y: &DMatrix<f64>,
    method: Method,
    opts: &PipelineOptions,
) -> Result<PipelineResult> {
    let n = y.ncols();
    let tau = if method == Method::Rts || matches!(opts.num_factors, NumFactors::AutoEr) {
        Some(kendall::spatial_kendall_tau(y)?)
    } else {
        None
    };
    let mut m_ic_curve = None;
    let m = match opts.num_factors {
        NumFactors::Fixed(m) => m,
        NumFactors::AutoIc => {
            let (m_hat, curve) = factor::select_num_factors_ic(y, opts.m_max)?;
            m_ic_curve = Some(curve);
            m_hat
        }
        NumFactors::AutoEr => {
            let tau = tau.as_ref().expect("tau computed for the ER rule");
            factor::select_num_factors_er(tau, opts.m_max)?
        }
    };
    let fit = match method {
        Method::Rts => {
            let tau = tau.as_ref().expect("tau computed for the RTS method");
            factor::rts_fit_from_tau(y, tau, m)?
        }
        Method::Pca => factor::pca_fit(y, m)?,
    };
    let distances = cluster::loading_distance_matrix(&fit.loadings)?;
    let merge_path = cluster::ahc_complete_linkage(&distances)?;
    let k_bar = opts.k_bar.unwrap_or_else(|| default_k_bar(n));
    let selection = select_group_number_with(y, &fit.factors, &merge_path, k_bar, opts.rho)?;
    let partition = cluster::cut_path(&merge_path, selection.k_hat)?;
    let grouped = grouped_fit(y, &fit.factors, &partition)?;
    Ok(PipelineResult {
        fit,
        tau,
        m_ic_curve,
        merge_path,
        selection,
        grouped,
    })
}

/// [`run_pipeline`] with the robust (RTS) first stage.
pub fn rfa_pipeline(y: &DMatrix<f64>, opts: &PipelineOptions) -> Result<PipelineResult> {
    run_pipeline(y, Method::Rts, opts)
}
