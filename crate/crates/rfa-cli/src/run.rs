//! Subcommand implementations.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use rfa_core::cluster::Partition;
use rfa_core::datagen::{FourGroupConfig, ThreeGroupConfig};
use rfa_core::factor::Method;
use rfa_core::groupfit::{PipelineOptions, PipelineResult};
use rfa_core::montecarlo::{SimDesign, SimOptions};
use rfa_core::{eval, kendall};
use serde::Serialize;

use crate::args::{
    DesignArg, EstimationArgs, FitArgs, ForecastArgs, ForecastFactorsArg, MethodArg, MetricsArgs,
    SimulateArgs,
};
use crate::config;
use crate::error::{CliError, Result};
use crate::io::{self, fmt_float};

fn methods_from(arg: MethodArg) -> Vec<Method> {
    match arg {
        MethodArg::Rts => vec![Method::Rts],
        MethodArg::Pca => vec![Method::Pca],
        MethodArg::Both => vec![Method::Rts, Method::Pca],
    }
}

fn pipeline_options(est: &EstimationArgs) -> PipelineOptions {
    PipelineOptions {
        num_factors: est.num_factors,
        m_max: est.m_max,
        k_bar: est.k_bar,
        rho: est.rho,
    }
}

/// Formats an optional float as a CSV field, empty when absent.
fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Combines command-line flags, optional config-file entries, and built-in
/// defaults (flags win, then the file) into the generator and harness inputs.
fn resolve_simulation(args: &SimulateArgs) -> Result<(SimDesign, usize, u64)> {
    let cfg = match &args.config {
        Some(path) => config::load_sim_config(path)?,
        None => config::SimConfig::default(),
    };
    let design_arg = match (args.design, cfg.design.as_deref()) {
        (Some(d), _) => d,
        (None, Some(name)) => match name.to_ascii_lowercase().as_str() {
            "example1" => DesignArg::Example1,
            "example2" => DesignArg::Example2,
            other => {
                return Err(CliError::Input(format!(
                    "unknown design `{other}` in config (expected example1 or example2)"
                )))
            }
        },
        (None, None) => {
            return Err(CliError::Input(
                "no design given: pass --design or a config file naming one".into(),
            ))
        }
    };
    let skew = if args.skew {
        true
    } else {
        match cfg.radial.as_deref() {
            None | Some("student-t") => false,
            Some("skew-t") => true,
            Some(other) => {
                return Err(CliError::Input(format!(
                    "unknown radial law `{other}` in config (expected student-t or skew-t)"
                )))
            }
        }
    };
    let t = args.t.or(cfg.t).unwrap_or(200);
    let design = match design_arg {
        DesignArg::Example1 => SimDesign::FourGroup(FourGroupConfig {
            n: args.n.or(cfg.n).unwrap_or(200),
            t,
            delta: args.delta.or(cfg.delta).unwrap_or(0.6),
            skew,
        }),
        DesignArg::Example2 => SimDesign::ThreeGroup(ThreeGroupConfig {
            sizes: args
                .scenario
                .map(|s| s.0)
                .or(cfg.scenario)
                .unwrap_or([30, 30, 30]),
            t,
            kappa: args.kappa.or(cfg.kappa).unwrap_or(0.5),
        }),
    };
    let reps = args.reps.or(cfg.reps).unwrap_or(1);
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    Ok((design, reps, seed))
}

/// Writes each replication's generated panel as `panel_rep<r>.csv` with unit
/// names u1..uN, matching the layout `fit` and `forecast` load.
fn export_panels(design: &SimDesign, seed: u64, reps: usize, out: &Path) -> Result<()> {
    for rep in 0..reps {
        let panel = match design {
            SimDesign::FourGroup(cfg) => {
                rfa_core::datagen::gen_example1_with(cfg, seed, rep as u64)
            }
            SimDesign::ThreeGroup(cfg) => {
                rfa_core::datagen::gen_example2_with(cfg, seed, rep as u64)
            }
        }?;
        let names: Vec<String> = (1..=panel.y.ncols()).map(|i| format!("u{i}")).collect();
        io::write_matrix_csv(&out.join(format!("panel_rep{rep}.csv")), &names, &panel.y)?;
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let (design, reps, seed) = resolve_simulation(args)?;
    if args.export_panels {
        export_panels(&design, seed, reps, &args.out)?;
    }
    let opts = SimOptions {
        reps,
        seed,
        methods: methods_from(args.estimation.method),
        pipeline: pipeline_options(&args.estimation),
    };
    let report = rfa_core::montecarlo::run_simulation(&design, &opts)?;

    let mut reps_csv = String::from("rep,method,m_hat,k_hat,pre_mse,post_mse,nmi,purity\n");
    for r in &report.records {
        reps_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.rep,
            r.method,
            r.m_hat,
            r.k_hat,
            fmt_float(r.pre_mse),
            fmt_float(r.post_mse),
            fmt_opt(r.nmi),
            fmt_float(r.purity),
        ));
    }
    io::write_text(&args.out.join("replications.csv"), &reps_csv)?;

    let mut summary_csv = String::from(
        "method,completed,failed,mean_m_hat,mean_pre_mse,mean_post_mse,\
         post_improved,nmi_defined,mean_nmi,mean_purity\n",
    );
    for s in &report.summaries {
        summary_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            s.method,
            s.completed,
            s.failed,
            fmt_float(s.mean_m_hat),
            fmt_float(s.mean_pre_mse),
            fmt_float(s.mean_post_mse),
            s.post_improved,
            s.nmi_defined,
            fmt_opt(s.mean_nmi),
            fmt_float(s.mean_purity),
        ));
    }
    io::write_text(&args.out.join("summary.csv"), &summary_csv)?;

    let mut counts_csv = String::from("method,k_hat,count\n");
    for s in &report.summaries {
        for (k, count) in &s.k_hat_counts {
            counts_csv.push_str(&format!("{},{k},{count}\n", s.method));
        }
    }
    io::write_text(&args.out.join("k_hat_counts.csv"), &counts_csv)?;

    if !report.failures.is_empty() {
        let mut failures_csv = String::from("rep,method,message\n");
        for f in &report.failures {
            // Quote the message so commas inside it stay in one field.
            failures_csv.push_str(&format!(
                "{},{},\"{}\"\n",
                f.rep,
                f.method,
                f.message.replace('"', "\"\"")
            ));
        }
        io::write_text(&args.out.join("failures.csv"), &failures_csv)?;
        eprintln!(
            "warning: {} replication run(s) failed; see failures.csv",
            report.failures.len()
        );
    }

    for s in &report.summaries {
        // Most frequent selected group count; ties go to the smaller one.
        let mode = s
            .k_hat_counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(k, _)| *k);
        match mode {
            Some(k) => println!(
                "{}: {}/{} completed, K_hat mode {} ({:.1}%), mean NMI {}, \
                 mean MSE pre {:.6} post {:.6}",
                s.method,
                s.completed,
                s.completed + s.failed,
                k,
                100.0 * s.k_hat_share(k),
                s.mean_nmi
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|| "n/a".into()),
                s.mean_pre_mse,
                s.mean_post_mse,
            ),
            None => println!(
                "{}: {}/{} completed",
                s.method,
                s.completed,
                s.completed + s.failed
            ),
        }
    }
    println!(
        "wrote {}",
        args.out.join("{replications,summary,k_hat_counts}.csv").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct IcPointJson {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "S")]
    s: f64,
    rho: f64,
    #[serde(rename = "IC")]
    ic: f64,
}

#[derive(Serialize)]
struct FitJson<'a> {
    method: &'a str,
    m: usize,
    #[serde(rename = "K_hat")]
    k_hat: usize,
    ic_curve: Vec<IcPointJson>,
    partition: &'a [usize],
    grouped_loadings: Vec<Vec<f64>>,
    factors_file: String,
}

/// One loading row per group, indexed by group label. Rows within a group
/// are bitwise identical, so the first member's row represents the group.
fn group_loading_rows(fit: &PipelineResult) -> Vec<Vec<f64>> {
    fit.grouped
        .partition
        .group_members()
        .iter()
        .map(|members| {
            fit.grouped
                .loadings
                .row(members[0])
                .iter()
                .copied()
                .collect()
        })
        .collect()
}

fn factor_header(m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("f{j}")).collect()
}

fn write_fit_outputs(out: &Path, result: &PipelineResult, dendrogram: bool) -> Result<()> {
    let method = result.fit.method.as_str();

    let factors_file = format!("factors_{method}.csv");
    io::write_matrix_csv(
        &out.join(&factors_file),
        &factor_header(result.fit.num_factors),
        &result.grouped.refit_factors,
    )?;
    io::write_labels_csv(
        &out.join(format!("labels_{method}.csv")),
        result.grouped.partition.labels(),
    )?;

    let json = FitJson {
        method,
        m: result.fit.num_factors,
        k_hat: result.selection.k_hat,
        ic_curve: result
            .selection
            .curve
            .iter()
            .map(|p| IcPointJson {
                k: p.k,
                s: p.s,
                rho: p.rho,
                ic: p.ic,
            })
            .collect(),
        partition: result.grouped.partition.labels(),
        grouped_loadings: group_loading_rows(result),
        factors_file,
    };
    let mut text = serde_json::to_string_pretty(&json)?;
    text.push('\n');
    io::write_text(&out.join(format!("result_{method}.json")), &text)?;

    if dendrogram {
        let mut csv = String::from("step,cluster_a,cluster_b,height,merged_id\n");
        for (step, merge) in result.merge_path.merges().iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                step + 1,
                merge.a,
                merge.b,
                fmt_float(merge.height),
                merge.id
            ));
        }
        io::write_text(&out.join(format!("dendrogram_{method}.csv")), &csv)?;
    }
    Ok(())
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let mut panel = io::load_panel_csv(&args.input)?;
    if args.standardize {
        io::standardize(&mut panel)?;
    }
    let opts = pipeline_options(&args.estimation);

    let mut tau_matrix: Option<DMatrix<f64>> = None;
    for method in methods_from(args.estimation.method) {
        let result = rfa_core::groupfit::run_pipeline(&panel.values, method, &opts)?;
        if tau_matrix.is_none() {
            tau_matrix = result.tau.as_ref().map(|t| t.matrix.clone());
        }
        write_fit_outputs(&args.out, &result, args.dendrogram_dump)?;
        println!(
            "{}: m={}, K_hat={}, fit S={:.6} -> {}",
            method,
            result.fit.num_factors,
            result.selection.k_hat,
            result.grouped.s_value,
            args.out
                .join(format!("result_{}.json", method.as_str()))
                .display()
        );
    }

    if args.kendall_dump {
        // The tau matrix depends only on the panel; reuse the pipeline's copy
        // when a method computed one, otherwise compute it here.
        let matrix = match tau_matrix {
            Some(m) => m,
            None => kendall::spatial_kendall_tau(&panel.values)?.matrix,
        };
        io::write_matrix_csv(&args.out.join("kendall.csv"), &panel.units, &matrix)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// forecast
// ---------------------------------------------------------------------------

pub fn forecast(args: &ForecastArgs) -> Result<()> {
    let mut panel = io::load_panel_csv(&args.input)?;
    if args.standardize {
        io::standardize(&mut panel)?;
    }
    if args.var_order == 0 {
        return Err(CliError::Input("VAR order must be at least 1".into()));
    }
    let t = panel.values.nrows();
    let h_max = *args.horizons.0.last().expect("validated nonempty");
    if t <= h_max + args.var_order + 1 {
        return Err(CliError::Input(format!(
            "panel has {t} periods; need more than max horizon ({h_max}) \
             + VAR order ({}) + 1 to hold out a test window",
            args.var_order
        )));
    }
    let train = panel.values.rows(0, t - h_max).into_owned();
    let realized = panel.values.rows(t - h_max, h_max).into_owned();
    let opts = pipeline_options(&args.estimation);

    let mut csv = String::from("method,variant,horizon,mse\n");
    let mut stdout_lines = Vec::new();
    for method in methods_from(args.estimation.method) {
        let result = rfa_core::groupfit::run_pipeline(&train, method, &opts)?;

        // Stage-one forecast: VAR on the first-stage factors, first-stage loadings.
        let pre_model = eval::fit_var(&result.fit.factors, args.var_order)?;
        let pre_fc = eval::forecast_var(&pre_model, &result.fit.factors, h_max)?;
        let pre_mse = eval::forecast_panel_mse(&result.fit.loadings, &pre_fc, &realized)?;

        // Grouped forecast: grouped loadings, VAR on the chosen factor series.
        let grouped_factors = match args.forecast_factors {
            ForecastFactorsArg::Rts => &result.fit.factors,
            ForecastFactorsArg::Refit => &result.grouped.refit_factors,
        };
        let grp_model = eval::fit_var(grouped_factors, args.var_order)?;
        let grp_fc = eval::forecast_var(&grp_model, grouped_factors, h_max)?;
        let grp_mse = eval::forecast_panel_mse(&result.grouped.loadings, &grp_fc, &realized)?;

        for &h in &args.horizons.0 {
            csv.push_str(&format!(
                "{method},pre,{h},{}\n",
                fmt_float(pre_mse[h - 1])
            ));
            csv.push_str(&format!(
                "{method},grouped,{h},{}\n",
                fmt_float(grp_mse[h - 1])
            ));
            stdout_lines.push(format!(
                "{method} h={h}: pre {:.6}, grouped {:.6}",
                pre_mse[h - 1],
                grp_mse[h - 1]
            ));
        }
    }
    io::write_text(&args.out.join("forecast.csv"), &csv)?;
    for line in stdout_lines {
        println!("{line}");
    }
    println!("wrote {}", args.out.join("forecast.csv").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct MetricsJson {
    nmi: Option<f64>,
    purity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mse: Option<f64>,
}

/// Builds a partition from arbitrary integer labels by relabeling groups in
/// order of first appearance (the library requires contiguous 1-based labels).
fn partition_from_raw(labels: &[usize]) -> Result<Partition> {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let mut next = 0usize;
    let canonical: Vec<usize> = labels
        .iter()
        .map(|&raw| {
            *map.entry(raw).or_insert_with(|| {
                next += 1;
                next
            })
        })
        .collect();
    Ok(Partition::new(canonical)?)
}

pub fn metrics(args: &MetricsArgs) -> Result<()> {
    let true_raw = io::load_labels_csv(&args.true_labels)?;
    let est_raw = io::load_labels_csv(&args.est_labels)?;
    if true_raw.len() != est_raw.len() {
        return Err(CliError::Input(format!(
            "label files disagree on the number of units: {} has {}, {} has {}",
            args.true_labels.display(),
            true_raw.len(),
            args.est_labels.display(),
            est_raw.len()
        )));
    }
    let truth = partition_from_raw(&true_raw)?;
    let estimate = partition_from_raw(&est_raw)?;
    let score = eval::cluster_score(&truth, &estimate)?;

    let mse = match (&args.c_true, &args.c_est) {
        (Some(c_true), Some(c_est)) => {
            let truth_panel = io::load_panel_csv(c_true)?;
            let est_panel = io::load_panel_csv(c_est)?;
            Some(eval::common_component_mse(
                &est_panel.values,
                &truth_panel.values,
            )?)
        }
        _ => None,
    };

    let json = MetricsJson {
        nmi: score.nmi,
        purity: score.purity,
        mse,
    };
    println!("{}", serde_json::to_string_pretty(&json)?);
    Ok(())
}
