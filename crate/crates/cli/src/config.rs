//! TOML configuration files.
//!
//! One file may hold any of the sections below; each subcommand reads the
//! ones it needs.
//!
//! ```toml
//! [experiment]          # sweep, table
//! n = 200
//! s = 50
//! snr_db = 0.0
//! m_values = [50]
//! k_values = [30, 50, 100]
//! seed = 1
//!
//! [bounds]              # bounds
//! delta = 0.2
//! s = 4
//! l = 50
//! m = 100
//! k = 100
//! tau = 1.0
//! z_l2 = 1.0
//! z_inf = 0.3
//! e_l1 = 0.0
//!
//! [[tail]]              # verify
//! sampler = { kind = "uniform", a = 0.0, b = 1.0 }
//! n = 10
//! xi = 0.9
//! trials = 100000
//!
//! [[theorem3]]          # verify
//! n = 4
//! m = 60
//! s = 1
//! l = 48
//! k = 5
//! tau = 0.5
//! trials = 200
//! noise_std = 0.05
//! ```

use std::path::Path;

use serde::Deserialize;
use sparsebag::experiment::ExperimentSpec;
use sparsebag::theory::{BoundInputs, BoundedSampler, Theorem3Config};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Option<ExperimentSpec>,
    pub bounds: Option<BoundInputs>,
    #[serde(default)]
    pub tail: Vec<TailCase>,
    #[serde(default)]
    pub theorem3: Vec<Theorem3Case>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailCase {
    pub sampler: BoundedSampler,
    pub n: usize,
    pub xi: f64,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Multiplies the bound before comparison; values below 1 give a
    /// negative control.
    #[serde(default = "one")]
    pub bound_scale: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem3Case {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub l: usize,
    pub k: usize,
    pub tau: f64,
    pub trials: usize,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "bp_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Theorem3Case {
    pub fn config(&self) -> Theorem3Config {
        Theorem3Config {
            n: self.n,
            m: self.m,
            s: self.s,
            l: self.l,
            k: self.k,
            tau: self.tau,
            trials: self.trials,
            noise_std: self.noise_std,
            lambda: self.lambda,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn bp_lambda() -> f64 {
    1e-3
}

pub fn load(path: &Path) -> Result<Config, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}
