//! On-disk form of a feedback law, so synthesis and simulation can run as
//! separate invocations.

use std::path::Path;

use anyhow::{ensure, Context};
use mvstab_core::linalg::RMat;
use mvstab_core::model::ModelParams;
use mvstab_core::riccati::AreMethod;
use mvstab_core::FeedbackLaw;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawFile {
    pub model: ModelParams,
    pub modes: usize,
    pub controls: usize,
    pub delta: f64,
    pub nu: f64,
    pub residual: f64,
    pub closed_loop_abscissa: f64,
    pub method: AreMethod,
    pub newton_steps: usize,
    /// Row-major `Π`.
    pub pi: Vec<Vec<f64>>,
    /// Row-major `BᵀΠ`.
    pub gain: Vec<Vec<f64>>,
}

fn rows(m: &RMat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>], ncols: usize, what: &str) -> anyhow::Result<RMat> {
    ensure!(
        rows.iter().all(|r| r.len() == ncols),
        "{what}: ragged rows (expected {ncols} columns)"
    );
    Ok(RMat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl LawFile {
    pub fn new(law: &FeedbackLaw, model: ModelParams, modes: usize, nu: f64) -> Self {
        Self {
            model,
            modes,
            controls: law.controls(),
            delta: law.delta,
            nu,
            residual: law.residual,
            closed_loop_abscissa: law.closed_loop_abscissa,
            method: law.method,
            newton_steps: law.newton_steps,
            pi: rows(&law.pi),
            gain: rows(&law.gain),
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing feedback law {}", path.display()))
    }

    pub fn to_law(&self) -> anyhow::Result<FeedbackLaw> {
        let n = 2 * self.modes;
        ensure!(self.pi.len() == n, "Pi has {} rows, expected {n}", self.pi.len());
        ensure!(
            self.gain.len() == self.controls,
            "gain has {} rows, expected {}",
            self.gain.len(),
            self.controls
        );
        Ok(FeedbackLaw {
            pi: matrix(&self.pi, n, "Pi")?,
            gain: matrix(&self.gain, n, "gain")?,
            delta: self.delta,
            residual: self.residual,
            closed_loop_abscissa: self.closed_loop_abscissa,
            method: self.method,
            newton_steps: self.newton_steps,
        })
    }
}
