use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::collision::{FitOptions, ZoomOptions};
use crate::error::{Error, Result};
use crate::io::from_json_str;
use crate::minimize::MinimizeConfig;
use crate::model::{Configuration, SystemParams};

fn default_alpha() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_zoom() -> Option<ZoomOptions> {
    Some(ZoomOptions::default())
}

/// Masses, exponent and the two endpoint configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub masses: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_refinement: Option<usize>,
    pub q_i: Vec<f64>,
    pub q_f: Vec<f64>,
    #[serde(rename = "T1", alias = "t1")]
    pub t1: f64,
    #[serde(rename = "T2", alias = "t2")]
    pub t2: f64,
}

impl Problem {
    pub fn params(&self) -> Result<SystemParams> {
        let at = |field: &'static str| move |e: Error| schema(&format!("problem.{field}"), e);
        let mut p = SystemParams::new(self.masses.clone()).map_err(at("masses"))?;
        p = p.with_alpha(self.alpha).map_err(at("alpha"))?;
        if let Some(c) = self.coupling {
            p = p.with_coupling(c).map_err(at("coupling"))?;
        }
        if let Some(t) = self.collision_tol {
            p = p.with_collision_tol(t).map_err(at("collision_tol"))?;
        }
        if let Some(r) = self.quadrature_refinement {
            p = p
                .with_quadrature_refinement(r)
                .map_err(at("quadrature_refinement"))?;
        }
        Ok(p)
    }

    pub fn endpoints(&self, params: &SystemParams) -> Result<(Configuration, Configuration)> {
        let q_i =
            Configuration::new(params, self.q_i.clone()).map_err(|e| schema("problem.q_i", e))?;
        let q_f =
            Configuration::new(params, self.q_f.clone()).map_err(|e| schema("problem.q_f", e))?;
        Ok((q_i, q_f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    #[serde(default = "default_true")]
    pub collisions: bool,
    #[serde(default = "default_true")]
    pub exponent_fits: bool,
    #[serde(default = "default_true")]
    pub eom_residuals: bool,
    #[serde(default)]
    pub surgery_probes: bool,
    #[serde(default)]
    pub fit: FitOptions,
    /// Local re-solve around each collision; `null` fits on the minimizer's
    /// own grid.
    #[serde(default = "default_zoom")]
    pub zoom: Option<ZoomOptions>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            collisions: true,
            exponent_fits: true,
            eom_residuals: true,
            surgery_probes: false,
            fit: FitOptions::default(),
            zoom: default_zoom(),
        }
    }
}

/// Thresholds of the report's pass/fail checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckTolerances {
    /// Collision-free means every interior gap exceeds this multiple of
    /// `collision_tol`.
    pub min_gap_factor: f64,
    pub eom_residual_max: f64,
    /// Allowed distance of a fitted exponent from `2 / (2 + alpha)`.
    pub exponent_tol: f64,
    pub cc_residual_max: f64,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        Self {
            min_gap_factor: 10.0,
            eom_residual_max: 1e-2,
            exponent_tol: 0.07,
            cc_residual_max: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub problem: Problem,
    #[serde(default)]
    pub minimize: MinimizeConfig,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(default)]
    pub checks: CheckTolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Overrides `minimize.seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn schema(path: &str, e: Error) -> Error {
    match e {
        Error::Schema { .. } => e,
        other => Error::Schema {
            path: path.into(),
            message: other.to_string(),
        },
    }
}

impl ExperimentSpec {
    /// Minimize configuration with the seed override applied.
    pub fn minimize_config(&self) -> MinimizeConfig {
        let mut cfg = self.minimize.clone();
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let params = self.problem.params()?;
        self.problem.endpoints(&params)?;
        let (t1, t2) = (self.problem.t1, self.problem.t2);
        if !(t1.is_finite() && t2.is_finite() && t2 > t1) {
            return Err(schema("problem.T2", Error::InvalidInterval { t1, t2 }));
        }
        self.minimize
            .validate()
            .map_err(|e| schema("minimize", e))?;
        let c = &self.checks;
        for (name, v) in [
            ("min_gap_factor", c.min_gap_factor),
            ("eom_residual_max", c.eom_residual_max),
            ("exponent_tol", c.exponent_tol),
            ("cc_residual_max", c.cc_residual_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Schema {
                    path: format!("checks.{name}"),
                    message: format!("must be finite and positive, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// A list of experiments run by one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub experiments: Vec<ExperimentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
}

/// Parse and validate an experiment spec.
pub fn validate_input(text: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = from_json_str(text)?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_spec(file: &Path) -> Result<ExperimentSpec> {
    validate_input(&std::fs::read_to_string(file)?)
}

/// Parse and validate a sweep spec; every experiment is validated.
pub fn validate_sweep(text: &str) -> Result<SweepSpec> {
    let sweep: SweepSpec = from_json_str(text)?;
    for (i, spec) in sweep.experiments.iter().enumerate() {
        spec.validate().map_err(|e| match e {
            Error::Schema { path, message } => Error::Schema {
                path: format!("experiments[{i}].{path}"),
                message,
            },
            other => other,
        })?;
    }
    if sweep.parallelism == Some(0) {
        return Err(Error::Schema {
            path: "parallelism".into(),
            message: "must be positive".into(),
        });
    }
    Ok(sweep)
}

pub fn load_sweep(file: &Path) -> Result<SweepSpec> {
    validate_sweep(&std::fs::read_to_string(file)?)
}
