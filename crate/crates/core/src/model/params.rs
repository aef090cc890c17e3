use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_COLLISION_TOL: f64 = 1e-4;
pub const DEFAULT_QUADRATURE_REFINEMENT: usize = 8;

/// Physical and numerical parameters shared by every computation on one system.
///
/// The force function is `coupling * sum_{k<j} m_k m_j / |q_k - q_j|^alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    masses: Vec<f64>,
    alpha: f64,
    coupling: f64,
    collision_tol: f64,
    quadrature_refinement: usize,
}

impl SystemParams {
    /// Newtonian parameters (`alpha = 1`, unit coupling) for the given masses.
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        let params = Self {
            masses,
            alpha: 1.0,
            coupling: 1.0,
            collision_tol: DEFAULT_COLLISION_TOL,
            quadrature_refinement: DEFAULT_QUADRATURE_REFINEMENT,
        };
        params.validate()?;
        Ok(params)
    }

    /// `n` bodies of unit mass.
    pub fn equal_masses(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }

    pub fn with_coupling(mut self, coupling: f64) -> Result<Self> {
        self.coupling = coupling;
        self.validate()?;
        Ok(self)
    }

    pub fn with_collision_tol(mut self, tol: f64) -> Result<Self> {
        self.collision_tol = tol;
        self.validate()?;
        Ok(self)
    }

    pub fn with_quadrature_refinement(mut self, factor: usize) -> Result<Self> {
        self.quadrature_refinement = factor;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.masses.is_empty() {
            return Err(Error::InvalidParams("at least one body is required".into()));
        }
        if let Some(m) = self.masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidParams(format!(
                "masses must be finite and strictly positive, got {m}"
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::InvalidParams(format!(
                "alpha must lie in the open interval (0, 2), got {}",
                self.alpha
            )));
        }
        if !(self.coupling.is_finite() && self.coupling > 0.0) {
            return Err(Error::InvalidParams(format!(
                "coupling must be finite and positive, got {}",
                self.coupling
            )));
        }
        if !(self.collision_tol.is_finite() && self.collision_tol > 0.0) {
            return Err(Error::InvalidParams(format!(
                "collision_tol must be finite and positive, got {}",
                self.collision_tol
            )));
        }
        if self.quadrature_refinement == 0 {
            return Err(Error::InvalidParams(
                "quadrature_refinement must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn n_bodies(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn collision_tol(&self) -> f64 {
        self.collision_tol
    }

    pub fn quadrature_refinement(&self) -> usize {
        self.quadrature_refinement
    }

    pub fn has_equal_masses(&self) -> bool {
        self.masses.iter().all(|&m| m == self.masses[0])
    }

    /// Blow-up exponent `2 / (2 + alpha)` of a collision; `2/3` for Newtonian gravity.
    pub fn collision_exponent(&self) -> f64 {
        2.0 / (2.0 + self.alpha)
    }

    /// Central-configuration constant `2 alpha / (2 + alpha)^2` matching the
    /// collision exponent; `2/9` for Newtonian gravity.
    pub fn collision_lambda(&self) -> f64 {
        2.0 * self.alpha / ((2.0 + self.alpha) * (2.0 + self.alpha))
    }

    /// Same exponent, coupling and tolerances restricted to a subset of bodies.
    pub fn subsystem(&self, bodies: &[usize]) -> Result<Self> {
        let masses = bodies.iter().map(|&b| self.masses[b]).collect();
        let sub = Self {
            masses,
            ..self.clone()
        };
        sub.validate()?;
        Ok(sub)
    }
}
