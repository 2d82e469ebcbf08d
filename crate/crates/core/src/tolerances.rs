//! Numerical tolerances shared by every solver and check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative residual for linear solves.
    pub linear: f64,
    /// Relative generalized residual for eigenpairs.
    pub eigen_residual: f64,
    /// Relative gap under which eigenvalues are treated as one cluster.
    pub cluster_gap: f64,
    /// |<phi>| / ||phi|| under which a Dirichlet mode counts as zero-mean.
    pub mean: f64,
    /// Relative distance to a nonzero-mean pole below which eta/beta are refused.
    pub pole: f64,
    /// Absolute defect allowed in Neumann compatibility conditions.
    pub solvability: f64,
    pub drift_raw: f64,
    pub drift_extrapolated: f64,
    pub beta: f64,
    /// Problems with at most this many free DOFs use the dense eigensolver.
    pub dense_max_dofs: usize,
    pub max_restarts: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            linear: 1e-10,
            eigen_residual: 1e-8,
            cluster_gap: 1e-5,
            mean: 1e-6,
            pole: 1e-4,
            solvability: 1e-6,
            drift_raw: 1e-3,
            drift_extrapolated: 1e-5,
            beta: 1e-3,
            dense_max_dofs: 600,
            max_restarts: 300,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("linear", self.linear),
            ("eigen_residual", self.eigen_residual),
            ("cluster_gap", self.cluster_gap),
            ("mean", self.mean),
            ("pole", self.pole),
            ("solvability", self.solvability),
            ("drift_raw", self.drift_raw),
            ("drift_extrapolated", self.drift_extrapolated),
            ("beta", self.beta),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        if self.max_restarts == 0 {
            return Err(Error::InvalidArgument("max_restarts must be positive".into()));
        }
        Ok(())
    }
}
