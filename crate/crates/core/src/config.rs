//! Experiment configuration: the TOML schema the CLI consumes, two built-in
//! profiles, and the mapping onto a concrete problem setup.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ivr::{Formulation, FormulationTag};
use crate::problem::{solid_body_rotation_config, ProblemConfig};

fn default_label() -> String {
    "experiment".into()
}

fn default_delta0() -> f64 {
    0.01
}

fn default_seed() -> u64 {
    1
}

fn default_one() -> usize {
    1
}

fn default_formulations() -> Vec<String> {
    FormulationTag::ALL.iter().map(|t| t.to_string()).collect()
}

/// One snapshot-generating run. Unset fields inherit the main experiment
/// values, so a predictive study lists runs at off-design parameters while
/// the benchmark stays at the design point.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SnapshotRun {
    pub label: String,
    #[serde(default)]
    pub kappa1: Option<f64>,
    #[serde(default)]
    pub kappa2: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(rename = "Tf", default)]
    pub t_final: Option<f64>,
    /// Exact step count; overrides the count implied by `Tf / dt`.
    #[serde(default)]
    pub n_steps: Option<usize>,
}

/// Everything one experiment needs: discretization, physics, reduction
/// settings, and which coupled formulations to run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_label")]
    pub label: String,
    pub nx: usize,
    #[serde(default)]
    pub ny: Option<usize>,
    pub kappa1: f64,
    pub kappa2: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(rename = "Tf", default)]
    pub t_final: Option<f64>,
    /// Discarded interior snapshot energy fraction.
    #[serde(default = "default_delta0")]
    pub delta0: f64,
    /// Discarded interface energy fraction; defaults to `delta0`.
    #[serde(default)]
    pub delta_gamma: Option<f64>,
    #[serde(default = "default_formulations")]
    pub formulations: Vec<String>,
    /// Interior dimensions to sweep. Empty means one run per formulation at
    /// the energy-selected dimensions.
    #[serde(default)]
    pub d_sweep: Vec<usize>,
    /// Side carrying the reduced multiplier, 1 or 2. Defaults per
    /// formulation.
    #[serde(default)]
    pub lm_side: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Keep every k-th snapshot when collecting.
    #[serde(default = "default_one")]
    pub sample_stride: usize,
    #[serde(default)]
    pub snapshot_runs: Vec<SnapshotRun>,
}

impl ExperimentConfig {
    /// Minutes-scale setup: a quarter-size mesh over half the rotation.
    pub fn desk() -> ExperimentConfig {
        ExperimentConfig {
            label: "desk".into(),
            nx: 32,
            ny: None,
            kappa1: 1e-5,
            kappa2: 1e-5,
            dt: Some(3.368e-3),
            t_final: Some(std::f64::consts::PI),
            delta0: 0.01,
            delta_gamma: None,
            formulations: default_formulations(),
            d_sweep: vec![],
            lm_side: None,
            seed: default_seed(),
            sample_stride: 1,
            snapshot_runs: vec![],
        }
    }

    /// Full-size reproductive study: one rotation on the fine mesh.
    pub fn paper() -> ExperimentConfig {
        ExperimentConfig {
            label: "paper".into(),
            nx: 64,
            dt: Some(1.684e-3),
            t_final: Some(2.0 * std::f64::consts::PI),
            ..ExperimentConfig::desk()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Short content hash stamped into every output for provenance.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        let mut s = String::with_capacity(12);
        for b in &digest[..6] {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 4 || self.nx % 2 != 0 {
            return Err(Error::Config(format!(
                "nx must be even and at least 4, got {}",
                self.nx
            )));
        }
        if let Some(ny) = self.ny {
            if ny < 2 {
                return Err(Error::Config(format!("ny must be at least 2, got {ny}")));
            }
        }
        for (name, v) in [("kappa1", self.kappa1), ("kappa2", self.kappa2)] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("dt must be positive, got {dt}")));
            }
        }
        if let Some(tf) = self.t_final {
            if !(tf > 0.0) {
                return Err(Error::Config(format!("Tf must be positive, got {tf}")));
            }
        }
        for (name, v) in [
            ("delta0", Some(self.delta0)),
            ("delta_gamma", self.delta_gamma),
        ] {
            if let Some(v) = v {
                if !(0.0..1.0).contains(&v) {
                    return Err(Error::Config(format!(
                        "{name} must lie in [0, 1), got {v}"
                    )));
                }
            }
        }
        if self.formulations.is_empty() {
            return Err(Error::Config("no formulations selected".into()));
        }
        self.formulation_list()?;
        if self.d_sweep.iter().any(|&d| d == 0) {
            return Err(Error::Config("d_sweep entries must be positive".into()));
        }
        if self.sample_stride == 0 {
            return Err(Error::Config("sample_stride must be positive".into()));
        }
        if let Some(s) = self.lm_side {
            if s != 1 && s != 2 {
                return Err(Error::Config(format!("lm_side must be 1 or 2, got {s}")));
            }
        }
        for run in &self.snapshot_runs {
            if run.label.is_empty() || !run.label.chars().all(valid_label_char) {
                return Err(Error::Config(format!(
                    "snapshot run label {:?} must be a nonempty [A-Za-z0-9_-] name",
                    run.label
                )));
            }
        }
        Ok(())
    }

    /// Formulations with the multiplier side resolved, in config order.
    pub fn formulation_list(&self) -> Result<Vec<Formulation>> {
        self.formulations
            .iter()
            .map(|s| {
                let tag = FormulationTag::from_str(s)?;
                match self.lm_side {
                    // The side choice only binds where a reduced multiplier
                    // exists; elsewhere it is recorded but inert.
                    Some(side) if tag.reduced_multiplier() => {
                        Formulation::with_lm_side(tag, side - 1)
                    }
                    _ => Ok(Formulation::new(tag)),
                }
            })
            .collect()
    }

    pub fn delta_gamma(&self) -> f64 {
        self.delta_gamma.unwrap_or(self.delta0)
    }

    /// The main problem: benchmark physics and the coupled runs.
    pub fn problem(&self) -> ProblemConfig {
        let mut p = solid_body_rotation_config(self.kappa1, self.kappa2, self.nx);
        if let Some(ny) = self.ny {
            p.ny = ny;
        }
        if let Some(dt) = self.dt {
            p.dt = dt;
        }
        if let Some(tf) = self.t_final {
            p.t_final = tf;
        }
        p.snapshot_stride = 1;
        p
    }

    /// The problem one snapshot run integrates.
    pub fn snapshot_problem(&self, run: &SnapshotRun) -> ProblemConfig {
        let mut p = solid_body_rotation_config(
            run.kappa1.unwrap_or(self.kappa1),
            run.kappa2.unwrap_or(self.kappa2),
            self.nx,
        );
        if let Some(ny) = self.ny {
            p.ny = ny;
        }
        if let Some(dt) = run.dt.or(self.dt) {
            p.dt = dt;
        }
        if let Some(tf) = run.t_final.or(self.t_final) {
            p.t_final = tf;
        }
        p.n_steps_override = run.n_steps;
        p.snapshot_stride = self.sample_stride;
        p
    }

    /// Snapshot runs to integrate; when none are listed, one run at the
    /// main parameters (the reproductive setup).
    pub fn effective_snapshot_runs(&self) -> Vec<SnapshotRun> {
        if self.snapshot_runs.is_empty() {
            vec![SnapshotRun {
                label: "main".into(),
                kappa1: None,
                kappa2: None,
                dt: None,
                t_final: None,
                n_steps: None,
            }]
        } else {
            self.snapshot_runs.clone()
        }
    }
}

fn valid_label_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}
