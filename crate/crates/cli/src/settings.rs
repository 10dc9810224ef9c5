//! Run settings: command-line flags layered over an optional JSON config file.
//!
//! Every flag has a same-named snake_case key in the file. A flag given on
//! the command line wins; a key in the file comes next; built-in defaults
//! fill the rest. A run manifest is also accepted as a config file, in which
//! case its recorded `config` is used, so a run can be repeated from it.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub builtin: Option<String>,
    pub curve: Option<PathBuf>,
    pub n: Option<usize>,
    pub epsilon: Option<f64>,
    pub diagonal: Option<String>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub directions: Option<usize>,
    pub sampler: Option<String>,
    pub n_list: Option<Vec<usize>>,
    pub epsilon_list: Option<Vec<f64>>,
    pub m_list: Option<Vec<f64>>,
    pub k_list: Option<Vec<u32>>,
    pub max_iters: Option<usize>,
    pub step_init: Option<f64>,
    pub step_shrink: Option<f64>,
    pub step_grow: Option<f64>,
    pub grad_tol: Option<f64>,
    pub resample_every: Option<usize>,
    pub min_separation: Option<f64>,
    pub sobolev_order: Option<f64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub final_curve: Option<PathBuf>,
}

macro_rules! overlay {
    ($flags:expr, $file:expr, $($field:ident),* $(,)?) => {
        Settings { $($field: $flags.$field.or($file.$field),)* }
    };
}

impl Settings {
    /// Fields set in `self` win over those in `file`.
    pub fn over(self, file: Settings) -> Settings {
        overlay!(
            self, file, builtin, curve, n, epsilon, diagonal, seed, trials, directions, sampler, n_list,
            epsilon_list, m_list, k_list, max_iters, step_init, step_shrink, step_grow, grad_tol,
            resample_every, min_separation, sobolev_order, threads, out, final_curve,
        )
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let body = match value.get("config") {
            Some(inner) if value.get("subcommand").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(body).with_context(|| format!("config {} has an unexpected shape", path.display()))
    }

    pub fn curve_source(&self) -> Result<CurveSource> {
        match (&self.builtin, &self.curve) {
            (Some(_), Some(_)) => bail!("give either --builtin or --curve, not both"),
            (Some(name), None) => Ok(CurveSource::Builtin(name.clone())),
            (None, Some(path)) => Ok(CurveSource::File(path.clone())),
            (None, None) => bail!("no curve given: use --builtin NAME or --curve FILE"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum CurveSource {
    Builtin(String),
    File(PathBuf),
}
