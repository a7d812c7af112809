//! Experiment configuration: one JSON document per invocation.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mvstab_core::model::{ModelKind, ModelParams};
use mvstab_core::simulation::InitialShape;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Stationary,
    Spectrum,
    GapSweep,
    SchrodingerCheck,
    Hautus,
    Synthesize,
    Simulate,
    HeatmapSweep,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Stationary => "stationary",
            Self::Spectrum => "spectrum",
            Self::GapSweep => "gap_sweep",
            Self::SchrodingerCheck => "schrodinger_check",
            Self::Hautus => "hautus",
            Self::Synthesize => "synthesize",
            Self::Simulate => "simulate",
            Self::HeatmapSweep => "heatmap_sweep",
        }
    }

    /// Kinds that aggregate over a sweep and therefore need a nonempty grid.
    pub fn needs_sweep(self) -> bool {
        matches!(self, Self::GapSweep | Self::HeatmapSweep)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// May be omitted when given on the command line.
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    pub model: ModelParams,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub control: Control,
    #[serde(default)]
    pub target: Target,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub sweep: Sweep,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Worker threads for sweeps; `--threads` takes precedence.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Free-form remarks echoed into the manifest.
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Truncation order `L`.
    pub modes: usize,
    /// Grid for exported density profiles.
    pub grid: Option<usize>,
    pub fixed_point_tol: f64,
    pub damping: f64,
    pub max_iterations: usize,
    /// Largest accepted stationarity residual of a linearization point.
    pub stationarity_tol: f64,
    pub are_tol: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            modes: 64,
            grid: None,
            fixed_point_tol: 1e-12,
            damping: 0.5,
            max_iterations: 10_000,
            stationarity_tol: 1e-8,
            are_tol: 1e-9,
            rtol: 1e-8,
            atol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeChoice {
    /// `sin x, cos x, sin 2x, cos 2x, …` scaled by `1/√(4π)`.
    Ansatz,
    /// Shapes solved from the unstable left eigenfunctions.
    Eigenfunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Control {
    pub delta: f64,
    pub nu: f64,
    pub shapes: ShapeChoice,
    /// Number of ansatz shapes.
    pub count: usize,
    /// Previously synthesized feedback law to reuse instead of solving again.
    pub law_file: Option<PathBuf>,
}

impl Default for Control {
    fn default() -> Self {
        Self {
            delta: 1.0,
            nu: 1e6,
            shapes: ShapeChoice::Ansatz,
            count: 4,
            law_file: None,
        }
    }
}

/// Which stationary state to linearize around.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    /// Uniform for models without confinement, the confinement Gibbs state
    /// for the cosine potential, the fixed point from uniform otherwise.
    #[default]
    Auto,
    Uniform,
    /// Closed-form Kuramoto branch peaked at `phase` (uniform when `K ≤ 2σ`).
    Synchronized {
        #[serde(default)]
        phase: f64,
    },
    /// Fixed point of the Gibbs map started from `1 + eps·cos(x - phase)`.
    SelfConsistent {
        #[serde(default)]
        eps: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `μ̄ ∝ exp(-V/σ)`; stationary whenever `W∗μ̄` is constant.
    Confinement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Runs {
    #[default]
    Both,
    Controlled,
    Uncontrolled,
}

impl Runs {
    pub fn controlled(self) -> bool {
        matches!(self, Self::Both | Self::Controlled)
    }

    pub fn uncontrolled(self) -> bool {
        matches!(self, Self::Both | Self::Uncontrolled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub t_end: f64,
    pub samples: usize,
    pub initial: InitialShape,
    pub eps: f64,
    pub phase: f64,
    pub runs: Runs,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            t_end: 20.0,
            samples: 400,
            initial: InitialShape::Uniform,
            eps: 0.1,
            phase: 0.3,
            runs: Runs::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub couplings: Vec<f64>,
    pub sigmas: Vec<f64>,
}

/// One point of a sweep, with its coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub coupling: Option<f64>,
    pub sigma: Option<f64>,
}

impl SweepPoint {
    /// File-name friendly label such as `coupling_0.95_sigma_0.5`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(k) = self.coupling {
            parts.push(format!("coupling_{k}"));
        }
        if let Some(s) = self.sigma {
            parts.push(format!("sigma_{s}"));
        }
        parts.join("_")
    }

    /// The model with this point's coordinates substituted.
    pub fn apply(&self, base: &ModelParams) -> anyhow::Result<ModelParams> {
        let mut p = *base;
        if let Some(s) = self.sigma {
            p.sigma = s;
        }
        if let Some(k) = self.coupling {
            match &mut p.kind {
                ModelKind::Kuramoto { coupling }
                | ModelKind::CosinePotential { coupling, .. }
                | ModelKind::O2 { coupling, .. } => *coupling = k,
                ModelKind::VonMises { .. } => bail!("the von Mises model has no coupling to sweep"),
            }
        }
        Ok(p)
    }
}

impl Sweep {
    pub fn is_empty(&self) -> bool {
        self.couplings.is_empty() && self.sigmas.is_empty()
    }

    /// Cartesian product of the nonempty axes, couplings outermost.
    pub fn points(&self) -> Vec<SweepPoint> {
        let ks: Vec<Option<f64>> = if self.couplings.is_empty() {
            vec![None]
        } else {
            self.couplings.iter().copied().map(Some).collect()
        };
        let ss: Vec<Option<f64>> = if self.sigmas.is_empty() {
            vec![None]
        } else {
            self.sigmas.iter().copied().map(Some).collect()
        };
        ks.iter()
            .flat_map(|&coupling| ss.iter().map(move |&sigma| SweepPoint { coupling, sigma }))
            .collect()
    }
}

impl ExperimentConfig {
    /// Parses a config, reporting the offending line/column and field path.
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            anyhow::anyhow!(
                "config error at line {}, column {} (field `{}`): {}",
                inner.line(),
                inner.column(),
                path,
                inner
            )
        })
    }

    /// Loads `path` and applies dotted-path `key=value` overrides.
    pub fn load(path: &Path, overrides: &[String]) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = if overrides.is_empty() {
            Self::from_json(&text)?
        } else {
            let mut value: Value = serde_json::from_str(&text)
                .map_err(|e| anyhow::anyhow!("config error at line {}, column {}: {e}", e.line(), e.column()))?;
            for o in overrides {
                apply_override(&mut value, o)?;
            }
            serde_path_to_error::deserialize(value)
                .map_err(|e| anyhow::anyhow!("config error after overrides (field `{}`): {}", e.path(), e.inner()))?
        };
        // relative law files are resolved against the config's directory
        if let (Some(law), Some(dir)) = (&cfg.control.law_file, path.parent()) {
            if law.is_relative() && !law.exists() {
                cfg.control.law_file = Some(dir.join(law));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let kind = self
            .kind
            .context("experiment kind missing (set `kind` or use a subcommand)")?;
        self.model.validate()?;
        let n = &self.numerics;
        if n.modes == 0 {
            bail!("numerics.modes must be at least 1");
        }
        if let Some(g) = n.grid {
            if !g.is_power_of_two() || g < 2 * n.modes + 1 {
                bail!("numerics.grid must be a power of two of at least {}", 2 * n.modes + 1);
            }
        }
        for (name, v) in [
            ("numerics.fixed_point_tol", n.fixed_point_tol),
            ("numerics.stationarity_tol", n.stationarity_tol),
            ("numerics.are_tol", n.are_tol),
            ("numerics.rtol", n.rtol),
        ] {
            if !(v > 0.0) {
                bail!("{name} must be positive");
            }
        }
        if !(n.atol >= 0.0) {
            bail!("numerics.atol must be nonnegative");
        }
        if !(n.damping > 0.0 && n.damping <= 1.0) {
            bail!("numerics.damping must lie in (0, 1]");
        }
        let c = &self.control;
        if !(c.delta >= 0.0) || !(c.nu > 0.0) {
            bail!("control.delta must be nonnegative and control.nu positive");
        }
        if let Some(f) = &c.law_file {
            if !f.exists() {
                bail!("control.law_file {} does not exist", f.display());
            }
        }
        let s = &self.simulation;
        if !(s.t_end > 0.0) || s.samples < 2 {
            bail!("simulation.t_end must be positive and simulation.samples at least 2");
        }
        if kind.needs_sweep() && self.sweep.is_empty() {
            bail!("{kind} needs a nonempty sweep grid");
        }
        if kind == ExperimentKind::GapSweep {
            if self.sweep.couplings.is_empty() {
                bail!("gap_sweep needs sweep.couplings");
            }
            if !matches!(self.model.kind, ModelKind::Kuramoto { .. }) {
                bail!("gap_sweep is defined for the Kuramoto model");
            }
        }
        for p in self.sweep.points() {
            p.apply(&self.model)?.validate()?;
        }
        Ok(())
    }
}

/// Sets `a.b.c = value` in a JSON tree, creating objects along the way.
/// `value` is parsed as JSON, falling back to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> anyhow::Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .with_context(|| format!("override `{assignment}` is not of the form key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            bail!("override key `{key}` has an empty component");
        }
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Default::default());
            } else {
                bail!("override `{key}`: `{}` is not an object", parts[..i].join("."));
            }
        }
        let map = node.as_object_mut().expect("checked above");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("split yields at least one component")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"kind": "simulate", "model": {"variant": "kuramoto", "coupling": 5.0, "sigma": 0.5}}"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.numerics.modes, 64);
        assert_eq!(c.control.nu, 1e6);
        assert_eq!(c.simulation.samples, 400);
        assert_eq!(c.target, Target::Auto);
        c.validate().unwrap();
    }

    #[test]
    fn parse_errors_name_line_and_field() {
        let text = "{\n  \"kind\": \"simulate\",\n  \"model\": {\"variant\": \"kuramoto\", \"coupling\": 5.0, \"sigma\": 0.5},\n  \"numerics\": {\"modes\": \"many\"}\n}";
        let err = ExperimentConfig::from_json(text).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        assert!(err.contains("numerics.modes"), "{err}");
        let unknown = ExperimentConfig::from_json(
            r#"{"model": {"variant": "o2", "coupling": 1, "eta": 0.05, "sigma": 0.75}, "typo": 1}"#,
        );
        assert!(unknown.is_err());
    }

    #[test]
    fn overrides_follow_dotted_paths() {
        let mut v: Value = serde_json::from_str(MINIMAL).unwrap();
        apply_override(&mut v, "model.coupling=0.95").unwrap();
        apply_override(&mut v, "sweep.sigmas=[0.3,0.5]").unwrap();
        apply_override(&mut v, "target.kind=uniform").unwrap();
        let c: ExperimentConfig = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(c.model, ModelParams::kuramoto(0.95, 0.5));
        assert_eq!(c.sweep.sigmas, vec![0.3, 0.5]);
        assert_eq!(c.target, Target::Uniform);
        assert!(apply_override(&mut v, "model.coupling.x=1").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
    }

    #[test]
    fn sweep_points_and_labels() {
        let s = Sweep {
            couplings: vec![1.0, 2.0],
            sigmas: vec![0.5],
        };
        let pts = s.points();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].label(), "coupling_2_sigma_0.5");
        let p = pts[0].apply(&ModelParams::o2(3.0, 0.05, 0.9)).unwrap();
        assert_eq!(p, ModelParams::o2(1.0, 0.05, 0.5));
        assert!(pts[0].apply(&ModelParams::von_mises(1.0, 0.5)).is_err());
        assert_eq!(Sweep::default().points().len(), 1);
    }

    #[test]
    fn validation_catches_bad_settings() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.kind = Some(ExperimentKind::HeatmapSweep);
        assert!(c.validate().is_err());
        c.sweep.sigmas = vec![0.4, 0.6];
        c.validate().unwrap();
        c.kind = Some(ExperimentKind::GapSweep);
        assert!(c.validate().is_err());
        c.kind = Some(ExperimentKind::Simulate);
        c.numerics.grid = Some(100);
        assert!(c.validate().is_err());
        c.numerics.grid = None;
        c.control.law_file = Some(PathBuf::from("/nonexistent/law.json"));
        assert!(c.validate().is_err());
    }
}
