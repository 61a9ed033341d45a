//! Monte Carlo replication harness over the simulated designs.
//!
//! Each replication draws its panel from an independent generator stream
//! (same seed, stream = replication index), runs the full pipeline for every
//! requested method, and scores the result against the simulated truth.
//! Replications are independent, so the harness parallelizes over them when
//! the `parallel` feature is on; results are collected in replication order
//! and are identical to a sequential run.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::datagen::{self, FourGroupConfig, SimulatedPanel, ThreeGroupConfig};
use crate::error::{Error, Result};
use crate::eval;
use crate::factor::Method;
use crate::groupfit::{self, PipelineOptions};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Which simulated design to replicate.
#[derive(Debug, Clone)]
pub enum SimDesign {
    FourGroup(FourGroupConfig),
    ThreeGroup(ThreeGroupConfig),
}

impl SimDesign {
    fn generate(&self, seed: u64, stream: u64) -> Result<SimulatedPanel> {
        match self {
            SimDesign::FourGroup(cfg) => datagen::gen_example1_with(cfg, seed, stream),
            SimDesign::ThreeGroup(cfg) => datagen::gen_example2_with(cfg, seed, stream),
        }
    }
}

/// Replication count, seeding, and the pipeline configuration shared by all
/// replications.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub pipeline: PipelineOptions,
}

/// Scores of one (replication, method) run.
#[derive(Debug, Clone)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub method: Method,
    /// Number of factors actually fitted (selected or fixed).
    pub m_hat: usize,
    /// Selected number of groups.
    pub k_hat: usize,
    /// Common-component MSE of the first-stage fit.
    pub pre_mse: f64,
    /// Common-component MSE after grouping and factor re-estimation.
    pub post_mse: f64,
    /// `None` when either partition is a single group.
    pub nmi: Option<f64>,
    pub purity: f64,
    /// Wall-clock time of this run; diagnostic only, never part of exported
    /// results (exports must be bit-identical across machines).
    pub wall: Duration,
}

/// A (replication, method) run that returned an error.
#[derive(Debug, Clone)]
pub struct ReplicationFailure {
    pub rep: usize,
    pub method: Method,
    pub message: String,
}

/// Aggregates over the completed replications of one method. Means are NaN
/// when no replication completed.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: Method,
    pub completed: usize,
    pub failed: usize,
    /// Histogram of the selected number of groups.
    pub k_hat_counts: BTreeMap<usize, usize>,
    pub mean_m_hat: f64,
    pub mean_pre_mse: f64,
    pub mean_post_mse: f64,
    /// Replications where grouping strictly reduced the common-component MSE.
    pub post_improved: usize,
    /// Replications where the NMI was defined.
    pub nmi_defined: usize,
    /// Mean over the defined NMI values; `None` if there were none.
    pub mean_nmi: Option<f64>,
    pub mean_purity: f64,
}

impl MethodSummary {
    /// Fraction of completed replications that selected `k` groups.
    pub fn k_hat_share(&self, k: usize) -> f64 {
        if self.completed == 0 {
            return f64::NAN;
        }
        *self.k_hat_counts.get(&k).unwrap_or(&0) as f64 / self.completed as f64
    }
}

/// Everything a simulation run produced, in replication order.
#[derive(Debug, Clone)]
pub struct SimReport {
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<ReplicationFailure>,
    pub summaries: Vec<MethodSummary>,
}

fn score_one(
    panel: &SimulatedPanel,
    method: Method,
    rep: usize,
    pipeline: &PipelineOptions,
) -> Result<ReplicationRecord> {
    let start = Instant::now();
    let result = groupfit::run_pipeline(&panel.y, method, pipeline)?;
    let truth = panel.true_common();
    let pre_mse = eval::common_component_mse(&result.fit.common_component(), &truth)?;
    let post_common = &result.grouped.refit_factors * result.grouped.loadings.transpose();
    let post_mse = eval::common_component_mse(&post_common, &truth)?;
    let score = eval::cluster_score(&panel.true_partition, &result.grouped.partition)?;
    Ok(ReplicationRecord {
        rep,
        method,
        m_hat: result.fit.num_factors,
        k_hat: result.selection.k_hat,
        pre_mse,
        post_mse,
        nmi: score.nmi,
        purity: score.purity,
        wall: start.elapsed(),
    })
}

fn run_replication(
    design: &SimDesign,
    opts: &SimOptions,
    rep: usize,
) -> Vec<std::result::Result<ReplicationRecord, ReplicationFailure>> {
    let panel = match design.generate(opts.seed, rep as u64) {
        Ok(p) => p,
        Err(e) => {
            return opts
                .methods
                .iter()
                .map(|&method| {
                    Err(ReplicationFailure {
                        rep,
                        method,
                        message: e.to_string(),
                    })
                })
                .collect();
        }
    };
    opts.methods
        .iter()
        .map(|&method| {
            score_one(&panel, method, rep, &opts.pipeline).map_err(|e| ReplicationFailure {
                rep,
                method,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Runs `opts.reps` independent replications of `design` and aggregates the
/// scores per method. Individual replication failures are collected, not
/// fatal; configuration errors that would fail every replication are
/// reported up front.
pub fn run_simulation(design: &SimDesign, opts: &SimOptions) -> Result<SimReport> {
    if opts.reps == 0 {
        return Err(Error::input("need at least one replication"));
    }
    if opts.methods.is_empty() {
        return Err(Error::input("no estimation method requested"));
    }
    // Surface design/configuration errors immediately rather than as one
    // failure per replication.
    design.generate(opts.seed, 0)?;

    #[cfg(feature = "parallel")]
    let per_rep: Vec<Vec<std::result::Result<ReplicationRecord, ReplicationFailure>>> = (0
        ..opts.reps)
        .into_par_iter()
        .map(|rep| run_replication(design, opts, rep))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let per_rep: Vec<Vec<std::result::Result<ReplicationRecord, ReplicationFailure>>> =
        (0..opts.reps)
            .map(|rep| run_replication(design, opts, rep))
            .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for outcomes in per_rep {
        for outcome in outcomes {
            match outcome {
                Ok(r) => records.push(r),
                Err(f) => failures.push(f),
            }
        }
    }
    let summaries = opts
        .methods
        .iter()
        .map(|&method| summarize(method, &records, &failures))
        .collect();
    Ok(SimReport {
        records,
        failures,
        summaries,
    })
}

fn summarize(
    method: Method,
    records: &[ReplicationRecord],
    failures: &[ReplicationFailure],
) -> MethodSummary {
    let mine: Vec<&ReplicationRecord> =
        records.iter().filter(|r| r.method == method).collect();
    let failed = failures.iter().filter(|f| f.method == method).count();
    let completed = mine.len();
    let denom = completed as f64;
    let mut k_hat_counts = BTreeMap::new();
    for r in &mine {
        *k_hat_counts.entry(r.k_hat).or_insert(0usize) += 1;
    }
    let mean = |f: &dyn Fn(&ReplicationRecord) -> f64| -> f64 {
        if completed == 0 {
            f64::NAN
        } else {
            mine.iter().map(|r| f(r)).sum::<f64>() / denom
        }
    };
    let nmi_values: Vec<f64> = mine.iter().filter_map(|r| r.nmi).collect();
    MethodSummary {
        method,
        completed,
        failed,
        k_hat_counts,
        mean_m_hat: mean(&|r| r.m_hat as f64),
        mean_pre_mse: mean(&|r| r.pre_mse),
        mean_post_mse: mean(&|r| r.post_mse),
        post_improved: mine.iter().filter(|r| r.post_mse < r.pre_mse).count(),
        nmi_defined: nmi_values.len(),
        mean_nmi: if nmi_values.is_empty() {
            None
        } else {
            Some(nmi_values.iter().sum::<f64>() / nmi_values.len() as f64)
        },
        mean_purity: mean(&|r| r.purity),
    }
}
