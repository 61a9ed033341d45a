//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rfa_core::factor::NumFactors;
use rfa_core::groupfit::RhoRule;

#[derive(Debug, Parser)]
#[command(
    name = "rfa",
    version,
    about = "Grouped robust factor analysis for heavy-tailed panels",
    long_about = "Estimates approximate factor models whose units share group-wise \
                  loading vectors, using the spatial Kendall's tau matrix for a \
                  heavy-tail-robust first stage, agglomerative clustering of the \
                  loading rows, and information-criterion selection of the number \
                  of groups.\n\nSet RFA_THREADS to cap the worker thread count."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run Monte Carlo replications of a built-in simulated design
    Simulate(SimulateArgs),
    /// Fit the grouped factor model to a panel CSV
    Fit(FitArgs),
    /// Pseudo out-of-sample forecast comparison on a panel CSV
    Forecast(ForecastArgs),
    /// Score an estimated partition (and optional common component) against a reference
    Metrics(MetricsArgs),
}

/// Estimation options shared by `simulate`, `fit`, and `forecast`.
#[derive(Debug, Args)]
pub struct EstimationArgs {
    /// Estimator for the first stage
    #[arg(long, value_enum, default_value_t = MethodArg::Rts)]
    pub method: MethodArg,

    /// Number of factors: a positive integer, `auto-ic`, or `auto-er`
    #[arg(long, default_value = "auto-ic", value_parser = parse_num_factors)]
    pub num_factors: NumFactors,

    /// Largest number of factors the automatic rules consider
    #[arg(long, default_value_t = 8)]
    pub m_max: usize,

    /// Largest number of groups scanned [default: min(20, N/2)]
    #[arg(long)]
    pub k_bar: Option<usize>,

    /// Group-number penalty: `paper` (adaptive ln(v)/v with v = min group
    /// size capped at T, recomputed per cut) or `fixed:<x>` for a constant
    /// weight x >= 0
    #[arg(long, default_value = "paper", value_parser = parse_rho)]
    pub rho: RhoRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Rts,
    Pca,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    /// Four equal groups, two factors, jointly elliptical t(3) innovations
    Example1,
    /// Three groups, AR(1) factors, Gaussian noise scaled by kappa
    Example2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ForecastFactorsArg {
    /// Fit the VAR on the first-stage factor estimates
    Rts,
    /// Fit the VAR on the factors re-estimated from the grouped loadings
    Refit,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Key-value spec file (TOML: design, n, t, delta, radial, scenario,
    /// kappa, reps, seed); explicit flags take precedence over its entries
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Which built-in design to draw from (required unless the config file
    /// names one)
    #[arg(long, value_enum)]
    pub design: Option<DesignArg>,

    /// Cross-section size (example1; must be a multiple of 4) [default: 200]
    #[arg(long)]
    pub n: Option<usize>,

    /// Number of periods [default: 200]
    #[arg(long)]
    pub t: Option<usize>,

    /// Loading separation of the last two groups (example1) [default: 0.6]
    #[arg(long)]
    pub delta: Option<f64>,

    /// Tilt the example1 noise block into a skew-t (example1)
    #[arg(long)]
    pub skew: bool,

    /// Comma-separated sizes of the three groups (example2) [default: 30,30,30]
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Option<Scenario>,

    /// Noise variance multiplier (example2) [default: 0.5]
    #[arg(long)]
    pub kappa: Option<f64>,

    /// Number of Monte Carlo replications [default: 1]
    #[arg(long)]
    pub reps: Option<usize>,

    /// Base seed; replication r uses generator stream r [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Also write each replication's panel as panel_rep<r>.csv (header row
    /// u1..uN, one row per period, loadable by `fit` and `forecast`)
    #[arg(long)]
    pub export_panels: bool,

    #[command(flatten)]
    pub estimation: EstimationArgs,

    /// Output directory
    #[arg(long, default_value = "rfa_out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Panel CSV: header row of unit names, one row per period
    #[arg(long)]
    pub input: PathBuf,

    /// Standardize each column to mean zero, unit variance first
    #[arg(long)]
    pub standardize: bool,

    #[command(flatten)]
    pub estimation: EstimationArgs,

    /// Also write the spatial Kendall's tau matrix to kendall.csv
    #[arg(long)]
    pub kendall_dump: bool,

    /// Also write the merge path to dendrogram_<method>.csv
    #[arg(long)]
    pub dendrogram_dump: bool,

    /// Output directory
    #[arg(long, default_value = "rfa_out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Panel CSV: header row of unit names, one row per period
    #[arg(long)]
    pub input: PathBuf,

    /// Standardize each column to mean zero, unit variance first
    #[arg(long)]
    pub standardize: bool,

    #[command(flatten)]
    pub estimation: EstimationArgs,

    /// VAR order for the factor dynamics
    #[arg(long, default_value_t = 3)]
    pub var_order: usize,

    /// Comma-separated forecast horizons, each in 1..=12
    #[arg(long, default_value = "1,2,3,4", value_parser = parse_horizons)]
    pub horizons: Horizons,

    /// Factor series the VAR is fitted on for the grouped forecast
    #[arg(long, value_enum, default_value_t = ForecastFactorsArg::Rts)]
    pub forecast_factors: ForecastFactorsArg,

    /// Output directory
    #[arg(long, default_value = "rfa_out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Reference labels CSV (header `label`, one integer per row)
    #[arg(long)]
    pub true_labels: PathBuf,

    /// Estimated labels CSV in the same format
    #[arg(long)]
    pub est_labels: PathBuf,

    /// Reference common-component CSV (panel layout); requires --c-est
    #[arg(long, requires = "c_est")]
    pub c_true: Option<PathBuf>,

    /// Estimated common-component CSV (panel layout); requires --c-true
    #[arg(long, requires = "c_true")]
    pub c_est: Option<PathBuf>,
}

/// Parsed `--scenario n1,n2,n3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario(pub [usize; 3]);

/// Parsed `--horizons h1,h2,...`, validated and deduplicated, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Horizons(pub Vec<usize>);

fn parse_num_factors(raw: &str) -> Result<NumFactors, String> {
    match raw {
        "auto-ic" => Ok(NumFactors::AutoIc),
        "auto-er" => Ok(NumFactors::AutoEr),
        other => match other.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(NumFactors::Fixed(k)),
            _ => Err(format!(
                "expected a positive integer, `auto-ic`, or `auto-er`, got `{other}`"
            )),
        },
    }
}

fn parse_rho(raw: &str) -> Result<RhoRule, String> {
    if raw == "paper" || raw == "adaptive" {
        return Ok(RhoRule::Adaptive);
    }
    if let Some(value) = raw.strip_prefix("fixed:") {
        return match value.parse::<f64>() {
            Ok(x) if x.is_finite() && x >= 0.0 => Ok(RhoRule::Fixed(x)),
            _ => Err(format!(
                "fixed penalty must be a finite nonnegative number, got `{value}`"
            )),
        };
    }
    Err(format!("expected `paper` or `fixed:<x>`, got `{raw}`"))
}

fn parse_scenario(raw: &str) -> Result<Scenario, String> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 3 {
        return Err(format!(
            "expected three comma-separated group sizes, got `{raw}`"
        ));
    }
    let mut sizes = [0usize; 3];
    for (slot, part) in sizes.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("group size `{part}` is not a nonnegative integer"))?;
    }
    if sizes.iter().sum::<usize>() == 0 {
        return Err("at least one group must be nonempty".into());
    }
    Ok(Scenario(sizes))
}

fn parse_horizons(raw: &str) -> Result<Horizons, String> {
    let mut horizons = Vec::new();
    for part in raw.split(',') {
        let h = part
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("horizon `{part}` is not an integer"))?;
        if !(1..=12).contains(&h) {
            return Err(format!("horizons must lie in 1..=12, got {h}"));
        }
        horizons.push(h);
    }
    if horizons.is_empty() {
        return Err("need at least one horizon".into());
    }
    horizons.sort_unstable();
    horizons.dedup();
    Ok(Horizons(horizons))
}
