use serde::Deserialize;
use std::path::{Path, PathBuf};
use vlab::decay::DecayParams;
use vlab::varifold::VarifoldSpec;
use vlab::SurfaceSpec;

/// Errors in the command line or the config file (exit status 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    /// output file name inside --out
    #[serde(default)]
    pub output: Option<String>,
    /// finite-difference constant of the stationarity audit tolerance
    #[serde(default = "audit_c")]
    pub audit_c: f64,
    pub varifold: VarifoldSpec,
}

fn audit_c() -> f64 {
    1.0
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub q: Option<usize>,
    pub grid: Option<usize>,
    pub ratio: Option<f64>,
    pub r0: Option<f64>,
    pub lambda: Option<f64>,
    pub eps0: Option<f64>,
    pub eta0: Option<f64>,
    pub delta0: Option<f64>,
    pub height_bound: Option<f64>,
    pub mass_radius: Option<f64>,
    pub fit_degree: Option<usize>,
    pub cells: Option<usize>,
    pub reach: Option<f64>,
}

impl ParamOverrides {
    pub fn apply(&self, mut p: DecayParams) -> DecayParams {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { p.$f = v; })* };
        }
        set!(q, grid, ratio, r0, lambda, eps0, eta0, delta0, height_bound, mass_radius, fit_degree, cells, reach);
        p
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    /// accepted so one config can drive every command; decay draws no random numbers
    #[serde(default)]
    #[allow(dead_code)]
    pub seed: Option<u64>,
    /// centre z of the cylinders, m + n coordinates
    pub center: Vec<f64>,
    #[serde(default = "three")]
    pub l: usize,
    #[serde(default = "six")]
    pub steps: usize,
    /// a varifold file from `vlab gen`, used at every scale
    #[serde(default)]
    pub varifold_file: Option<PathBuf>,
    /// a generator, resampled around every cylinder
    #[serde(default)]
    pub varifold: Option<VarifoldSpec>,
    pub m0: SurfaceSpec,
    #[serde(default)]
    pub params: ParamOverrides,
}

fn three() -> usize {
    3
}

fn six() -> usize {
    6
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhitneyConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub m: usize,
    #[serde(default = "two")]
    pub l: usize,
    /// spacing of the jet sample points
    #[serde(default = "spacing")]
    pub spacing: f64,
    /// evaluation grid nodes per axis
    #[serde(default)]
    pub grid: Option<usize>,
}

impl Default for WhitneyConfig {
    fn default() -> Self {
        WhitneyConfig { seed: None, m: 1, l: 2, spacing: spacing(), grid: None }
    }
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn spacing() -> f64 {
    0.1
}
