//! Key-value simulation spec files.
//!
//! A TOML file in which every key is optional; values given on the command
//! line take precedence over file entries, and built-in defaults fill the
//! rest:
//!
//! ```toml
//! design = "example1"     # or "example2"
//! n = 200                 # units (example1)
//! t = 200                 # periods
//! delta = 0.6             # loading separation (example1)
//! radial = "student-t"    # or "skew-t": example1 innovation law
//! scenario = [30, 30, 30] # group sizes (example2)
//! kappa = 0.5             # noise variance multiplier (example2)
//! reps = 1
//! seed = 0
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub design: Option<String>,
    pub n: Option<usize>,
    pub t: Option<usize>,
    pub delta: Option<f64>,
    pub radial: Option<String>,
    pub scenario: Option<[usize; 3]>,
    pub kappa: Option<f64>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
}

pub fn load_sim_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| {
        CliError::Input(format!(
            "invalid simulation config {}: {e}",
            path.display()
        ))
    })
}
