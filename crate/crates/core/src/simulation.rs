//! The nonlinear controlled Galerkin system
//!
//! ```text
//! ȧ = 𝓛a + Σ_j u_j N_j a + B u + F(a),    u = -BᵀΠ a (or 0),
//! ```
//!
//! for the zero-mean coordinates `a` of `y = μ - μ̄`, integrated by adaptive
//! Dormand-Prince 5(4). The shift `δ` only enters through `Π`; the simulated
//! equation is the physical, unshifted one.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DVector;

use crate::fft::FftPlan;
use crate::integrator::{self, Dopri5Options, Dopri5Stats};
use crate::model::{free_energy, quadrature_grid, weighted_norm_on_grid, ModelSpec, NEGATIVITY_TOLERANCE};
use crate::operators::LinearizedSystem;
use crate::riccati::FeedbackLaw;
use crate::spectral::{product_grid, SpectralField};
use crate::stationary::StationaryState;
use crate::{math, Error, Result};

/// Norms below this are treated as numerically zero by [`decay_rate`].
pub const NORM_FLOOR: f64 = 1e-14;

/// Default number of reporting samples.
pub const DEFAULT_SAMPLES: usize = 400;

/// How an initial density is built from `(ε, φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InitialShape {
    /// `μ0 ∝ 1 + ε cos(x - φ)`.
    #[default]
    Uniform,
    /// `μ0 ∝ μ̄ (1 + ε cos(x - φ))`, a relative perturbation of the target.
    Relative,
}

/// Initial density for the given recipe, normalized to unit mass.
pub fn initial_density(shape: InitialShape, mubar: &SpectralField, eps: f64, phase: f64) -> Result<SpectralField> {
    let modes = mubar.modes();
    let base = match shape {
        InitialShape::Uniform => SpectralField::constant(modes, 1.0 / (2.0 * PI)),
        InitialShape::Relative => mubar.clone(),
    };
    crate::stationary::perturbed_density(&base, eps, phase)
}

#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub sys: LinearizedSystem,
    /// `None` runs the uncontrolled dynamics.
    pub law: Option<FeedbackLaw>,
    pub model: ModelSpec,
    pub mubar: StationaryState,
    pub mu0: SpectralField,
    pub t_end: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Size of the uniform reporting grid on `[0, t_end]`.
    pub samples: usize,
}

impl SimulationSetup {
    /// Validates and packages a run with default tolerances. The model and
    /// target are taken from `sys`.
    pub fn new(sys: LinearizedSystem, law: Option<FeedbackLaw>, mu0: SpectralField, t_end: f64) -> Result<Self> {
        let mubar = StationaryState::from_density(&sys.model, sys.mubar.clone())?;
        let setup = Self {
            model: sys.model.clone(),
            sys,
            law,
            mubar,
            mu0,
            t_end,
            rtol: 1e-8,
            atol: 1e-10,
            samples: DEFAULT_SAMPLES,
        };
        setup.validate()?;
        Ok(setup)
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn is_controlled(&self) -> bool {
        self.law.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let modes = self.sys.modes;
        for f in [&self.mu0, &self.mubar.mubar] {
            if f.modes() != modes {
                return Err(Error::ModeMismatch {
                    left: f.modes(),
                    right: modes,
                });
            }
        }
        if self.model.modes() != modes {
            return Err(Error::ModeMismatch {
                left: self.model.modes(),
                right: modes,
            });
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidParameter {
                name: "t_end",
                reason: alloc::format!("must be positive, got {}", self.t_end),
            });
        }
        if self.samples < 2 {
            return Err(Error::InvalidParameter {
                name: "samples",
                reason: "need at least two reporting samples".into(),
            });
        }
        let mass = self.mu0.mass();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter {
                name: "mu0",
                reason: alloc::format!("mass {mass} differs from 1"),
            });
        }
        let min = self.mu0.to_grid(quadrature_grid(modes))?.min();
        if min <= 0.0 {
            return Err(Error::NonPositiveDensity { min });
        }
        if let Some(law) = &self.law {
            if law.dim() != self.sys.dim() || law.controls() != self.sys.controls() {
                return Err(Error::DimensionMismatch {
                    expected: self.sys.dim(),
                    got: law.dim(),
                });
            }
        }
        Ok(())
    }

    /// Zero-mean coordinates of `μ0 - μ̄`.
    pub fn initial_state(&self) -> Vec<f64> {
        (&self.mu0 - &self.mubar.mubar).to_trig(false)
    }
}

/// Sampled closed-loop trajectory with per-sample diagnostics.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Coordinates of `y = μ - μ̄` (trigonometric basis, no constant mode).
    pub states: Vec<Vec<f64>>,
    /// Applied controls `u(t)`, `m` per sample (zeros when uncontrolled).
    pub controls: Vec<Vec<f64>>,
    /// `‖y‖` in `L²(μ̄⁻¹)`.
    pub weighted_norms: Vec<f64>,
    /// `‖y‖` in `L²`.
    pub l2_norms: Vec<f64>,
    /// Free energy of `μ`; `NaN` where the density is too negative for the entropy.
    pub free_energy: Vec<f64>,
    /// `|∫μ - 1|`.
    pub mass_defect: Vec<f64>,
    pub min_density: Vec<f64>,
    pub stats: Dopri5Stats,
    /// Largest finite-difference `dF/dt` over accepted steps.
    pub max_energy_rate: f64,
    /// Sample times with `min μ < -1e-6`.
    pub positivity_warnings: Vec<f64>,
    pub controlled: bool,
    /// Norms below this level are dominated by integration error (`100·atol`);
    /// zero when unknown.
    #[cfg_attr(feature = "serde", serde(default))]
    pub noise_floor: f64,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn terminal_norm(&self) -> f64 {
        self.l2_norms.last().copied().unwrap_or(0.0)
    }

    /// First sample time with `‖y‖₂ < level`, or the final time.
    pub fn first_time_below(&self, level: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.l2_norms)
            .find(|(_, &n)| n < level)
            .map_or(self.t_end(), |(&t, _)| t)
    }

    /// End of the span on which the norm is resolved above [`Self::noise_floor`].
    pub fn resolved_until(&self) -> f64 {
        self.first_time_below(self.noise_floor)
    }

    pub fn max_mass_defect(&self) -> f64 {
        self.mass_defect.iter().copied().fold(0.0, f64::max)
    }
}

/// Reusable buffers for [`nonlinear_term`].
#[derive(Debug)]
pub struct NonlinearWorkspace {
    modes: usize,
    plan: FftPlan,
}

impl NonlinearWorkspace {
    pub fn new(modes: usize) -> Self {
        Self {
            modes,
            plan: FftPlan::new(product_grid(modes)),
        }
    }

    /// `F(a) = ∇·(y ∇(W∗y))` in zero-mean coordinates.
    pub fn eval(&self, a: &[f64], model: &ModelSpec) -> Result<Vec<f64>> {
        if model.modes() != self.modes {
            return Err(Error::ModeMismatch {
                left: model.modes(),
                right: self.modes,
            });
        }
        let y = SpectralField::from_trig(self.modes, a, false)?;
        let grad = model.w.convolve(&y)?.differentiate();
        Ok(y.product_with(&grad, &self.plan).differentiate().to_trig(false))
    }
}

/// Quadratic part `F(a)` of the dynamics, `F_i = -⟨y ∇W∗y, ∇φ_i⟩`, with
/// alias-free products.
pub fn nonlinear_term(a: &[f64], model: &ModelSpec) -> Result<Vec<f64>> {
    NonlinearWorkspace::new(model.modes()).eval(a, model)
}

/// Right-hand side evaluator bound to a setup.
#[derive(Debug)]
pub struct Rhs<'a> {
    setup: &'a SimulationSetup,
    work: NonlinearWorkspace,
}

impl<'a> Rhs<'a> {
    pub fn new(setup: &'a SimulationSetup) -> Self {
        Self {
            setup,
            work: NonlinearWorkspace::new(setup.sys.modes),
        }
    }

    /// Applied control at state `a`.
    pub fn control(&self, a: &[f64]) -> Vec<f64> {
        match &self.setup.law {
            Some(law) => {
                let u = &law.gain * DVector::from_column_slice(a);
                u.iter().map(|x| -x).collect()
            }
            None => alloc::vec![0.0; self.setup.sys.controls()],
        }
    }

    pub fn eval_into(&self, a: &[f64], out: &mut [f64]) {
        let sys = &self.setup.sys;
        let av = DVector::from_column_slice(a);
        let mut da = &sys.a0 * &av;
        if self.setup.law.is_some() {
            let u = self.control(a);
            for (j, &uj) in u.iter().enumerate() {
                if uj != 0.0 {
                    da += (&sys.n_ops[j] * &av) * uj + sys.b.column(j) * uj;
                }
            }
        }
        // dimensions are fixed by validation, so the quadratic term cannot fail
        let f = self
            .work
            .eval(a, &self.setup.model)
            .unwrap_or_else(|_| alloc::vec![0.0; a.len()]);
        for ((o, d), fi) in out.iter_mut().zip(da.iter()).zip(&f) {
            *o = d + fi;
        }
    }
}

/// `ȧ` at state `a`. The system is autonomous, so `t` is unused.
pub fn rhs(a: &[f64], setup: &SimulationSetup, _t: f64) -> Result<Vec<f64>> {
    if a.len() != setup.sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: setup.sys.dim(),
            got: a.len(),
        });
    }
    let mut out = alloc::vec![0.0; a.len()];
    Rhs::new(setup).eval_into(a, &mut out);
    Ok(out)
}

/// Density `μ̄ + y` for zero-mean coordinates `a`.
fn density(setup: &SimulationSetup, a: &[f64]) -> Result<SpectralField> {
    let y = SpectralField::from_trig(setup.sys.modes, a, false)?;
    Ok(&setup.mubar.mubar + &y)
}

fn energy_or_nan(mu: &SpectralField, m: &ModelSpec) -> f64 {
    free_energy(mu, m).unwrap_or(f64::NAN)
}

/// Integrates the closed loop and records diagnostics on a uniform grid of
/// `setup.samples` times in `[0, t_end]`.
///
/// Density positivity is monitored rather than enforced. A step-size
/// underflow is returned as an error carrying the last accepted state.
pub fn simulate(setup: &SimulationSetup) -> Result<TrajectoryRecord> {
    setup.validate()?;
    let modes = setup.sys.modes;
    let rhs = Rhs::new(setup);
    let a0 = setup.initial_state();
    let n = setup.samples;
    let sample_times: Vec<f64> = (0..n).map(|i| setup.t_end * i as f64 / (n - 1) as f64).collect();
    let opts = Dopri5Options {
        rtol: setup.rtol,
        atol: setup.atol,
        ..Default::default()
    };

    let mut prev = (0.0, energy_or_nan(&setup.mu0, &setup.model));
    let mut max_energy_rate = f64::NEG_INFINITY;
    let out = integrator::integrate(
        |_, a, da| rhs.eval_into(a, da),
        0.0,
        &a0,
        setup.t_end,
        &sample_times,
        &opts,
        |t, a| {
            let e = energy_or_nan(&density(setup, a)?, &setup.model);
            let rate = (e - prev.1) / (t - prev.0);
            if rate.is_finite() {
                max_energy_rate = max_energy_rate.max(rate);
            }
            prev = (t, e);
            Ok(())
        },
    )?;

    let nq = quadrature_grid(modes);
    let mubar_grid = setup.mubar.mubar.to_grid(nq)?.into_values();
    let cap = out.times.len();
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(cap),
        states: Vec::with_capacity(cap),
        controls: Vec::with_capacity(cap),
        weighted_norms: Vec::with_capacity(cap),
        l2_norms: Vec::with_capacity(cap),
        free_energy: Vec::with_capacity(cap),
        mass_defect: Vec::with_capacity(cap),
        min_density: Vec::with_capacity(cap),
        stats: out.stats,
        max_energy_rate,
        positivity_warnings: Vec::new(),
        controlled: setup.is_controlled(),
        noise_floor: 100.0 * setup.atol,
    };
    for (t, a) in out.times.into_iter().zip(out.states) {
        let y = SpectralField::from_trig(modes, &a, false)?;
        let mu = &setup.mubar.mubar + &y;
        let y_grid = y.to_grid(nq)?.into_values();
        let min = mu.to_grid(nq)?.min();
        if min < -NEGATIVITY_TOLERANCE {
            rec.positivity_warnings.push(t);
        }
        rec.weighted_norms.push(weighted_norm_on_grid(&y_grid, &mubar_grid)?);
        rec.l2_norms.push(math::sqrt(a.iter().map(|x| x * x).sum()));
        rec.free_energy.push(energy_or_nan(&mu, &setup.model));
        rec.mass_defect.push((mu.mass() - 1.0).abs());
        rec.min_density.push(min);
        rec.controls.push(rhs.control(&a));
        rec.times.push(t);
        rec.states.push(a);
    }
    Ok(rec)
}

/// Least-squares slope of `ln ‖y‖` against `t` for the samples in
/// `[start, end]`. The window is cut at the first norm below [`NORM_FLOOR`].
pub fn fit_log_slope(times: &[f64], norms: &[f64], start: f64, end: f64) -> Result<f64> {
    if times.len() != norms.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: norms.len(),
        });
    }
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (&t, &y) in times.iter().zip(norms) {
        if t < start || t > end {
            continue;
        }
        if !(y >= NORM_FLOOR) {
            break;
        }
        pts.push((t, math::ln(y)));
    }
    if pts.len() < 2 {
        return Err(Error::EmptyWindow { start, end });
    }
    let k = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let lm = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(t, l)| (t - tm) * (l - lm)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - tm) * (t - tm)).sum();
    if sxx == 0.0 {
        return Err(Error::EmptyWindow { start, end });
    }
    Ok(sxy / sxx)
}

/// Fitted exponential rate of the plain `L²` norm over `[start, end]`.
pub fn decay_rate(traj: &TrajectoryRecord, start: f64, end: f64) -> Result<f64> {
    fit_log_slope(&traj.times, &traj.l2_norms, start, end)
}

/// Side-by-side summary of two runs on the same time grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunComparison {
    pub times: Vec<f64>,
    /// `‖y_a(t)‖ / ‖y_b(t)‖`; 1 where both vanish.
    pub ratio: Vec<f64>,
    pub terminal: (f64, f64),
    /// Fitted rates over the comparison window.
    pub rates: (f64, f64),
    pub window: (f64, f64),
}

/// Compares two runs. Rates are fitted on `[end/10, end]`, where `end` is the
/// earliest time at which either run sinks into its integration noise.
pub fn compare_runs(a: &TrajectoryRecord, b: &TrajectoryRecord) -> Result<RunComparison> {
    let end = a.resolved_until().min(b.resolved_until());
    compare_runs_in(a, b, 0.1 * end, end)
}

pub fn compare_runs_in(a: &TrajectoryRecord, b: &TrajectoryRecord, start: f64, end: f64) -> Result<RunComparison> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(alloc::format!(
            "{} vs {} samples",
            a.len(),
            b.len()
        )));
    }
    if let Some((i, (ta, tb))) = a
        .times
        .iter()
        .zip(&b.times)
        .enumerate()
        .find(|(_, (ta, tb))| (*ta - *tb).abs() > 1e-12 * ta.abs().max(1.0))
    {
        return Err(Error::GridMismatch(alloc::format!("sample {i}: t = {ta} vs {tb}")));
    }
    let ratio = a
        .l2_norms
        .iter()
        .zip(&b.l2_norms)
        .map(|(&x, &y)| if x == y { 1.0 } else { x / y })
        .collect();
    let rate = |r: &TrajectoryRecord| decay_rate(r, start, end);
    Ok(RunComparison {
        times: a.times.clone(),
        ratio,
        terminal: (a.terminal_norm(), b.terminal_norm()),
        rates: (rate(a)?, rate(b)?),
        window: (start, end),
    })
}

/// Short human-readable description of a run.
pub fn describe(traj: &TrajectoryRecord) -> String {
    alloc::format!(
        "{} run: {} samples, {} accepted / {} rejected steps, terminal |y| = {:.3e}",
        if traj.controlled { "controlled" } else { "uncontrolled" },
        traj.len(),
        traj.stats.accepted,
        traj.stats.rejected,
        traj.terminal_norm()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_model, ModelParams};
    use crate::operators::{assemble, default_shapes, AssembleOptions};
    use crate::riccati::{solve_are, AreOptions};
    use crate::stationary::uniform_density;
    use crate::C64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kuramoto_uniform(k: f64, modes: usize) -> LinearizedSystem {
        let m = make_model(&ModelParams::kuramoto(k, 0.5), modes).unwrap();
        let ss = StationaryState::from_density(&m, uniform_density(modes)).unwrap();
        assemble(&m, &ss, &default_shapes(4, modes), &AssembleOptions::default()).unwrap()
    }

    /// `F_n = i n Σ_{k+l=n} c_k (2π i l w_l c_l)` over exponential coefficients.
    fn triple_sum(y: &SpectralField, w: &SpectralField) -> SpectralField {
        let l = y.modes() as i64;
        let i = C64::new(0.0, 1.0);
        SpectralField::from_fn(y.modes(), |n| {
            let mut s = C64::new(0.0, 0.0);
            for k in -l..=l {
                let q = n - k;
                if q.abs() <= l {
                    s += y.coeff(k) * (2.0 * PI * i * q as f64 * w.coeff(q) * y.coeff(q));
                }
            }
            i * n as f64 * s
        })
    }

    #[test]
    fn nonlinear_term_matches_convolution_sum() {
        let l = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // interaction potentials are even: cosine coordinates only
        let wc: Vec<f64> = (0..2 * l)
            .map(|i| if i % 2 == 0 { rng.gen_range(-1.0..1.0) } else { 0.0 })
            .collect();
        let w = SpectralField::from_trig(l, &wc, false).unwrap();
        let m = ModelSpec::new("random", SpectralField::zeros(l), w.clone(), 0.5).unwrap();
        for _ in 0..100 {
            let a: Vec<f64> = (0..2 * l).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = nonlinear_term(&a, &m).unwrap();
            let want = triple_sum(&SpectralField::from_trig(l, &a, false).unwrap(), &w).to_trig(false);
            let err = f.iter().zip(&want).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{err}");
        }
    }

    #[test]
    fn nonlinear_term_is_quadratic() {
        let l = 8;
        let m = make_model(&ModelParams::kuramoto(2.0, 0.5), l).unwrap();
        assert!(nonlinear_term(&[0.0; 16], &m).unwrap().iter().all(|&x| x == 0.0));
        let a: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
        let lam = -2.5;
        let f = nonlinear_term(&a, &m).unwrap();
        let fl = nonlinear_term(&a.iter().map(|x| lam * x).collect::<Vec<_>>(), &m).unwrap();
        for (x, y) in f.iter().zip(&fl) {
            assert!((lam * lam * x - y).abs() < 1e-13 * (1.0 + y.abs()));
        }
    }

    proptest! {
        #[test]
        fn nonlinear_term_commutes_with_rotations(
            a in proptest::collection::vec(-1.0f64..1.0, 12),
            shift in 0.0f64..6.3,
            k in 0.1f64..5.0,
        ) {
            let l = 6;
            let m = make_model(&ModelParams::kuramoto(k, 0.5), l).unwrap();
            let rotate = |c: &[f64]| SpectralField::from_trig(l, c, false).unwrap().translated(shift).to_trig(false);
            let lhs = nonlinear_term(&rotate(&a), &m).unwrap();
            let rhs = rotate(&nonlinear_term(&a, &m).unwrap());
            for (x, y) in lhs.iter().zip(&rhs) {
                prop_assert!((x - y).abs() < 1e-12 * (1.0 + k));
            }
        }
    }

    #[test]
    fn rhs_vanishes_at_target() {
        let l = 8;
        let sys = kuramoto_uniform(5.0, l);
        let law = solve_are(&sys, &AreOptions::default()).unwrap();
        let mu0 = sys.mubar.clone();
        for law in [None, Some(law)] {
            let setup = SimulationSetup::new(sys.clone(), law, mu0.clone(), 1.0).unwrap();
            assert!(rhs(&[0.0; 16], &setup, 0.0).unwrap().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn uncontrolled_linear_part_on_uniform_state() {
        let (k, l) = (1.4, 8);
        let sys = kuramoto_uniform(k, l);
        let setup = SimulationSetup::new(sys.clone(), None, sys.mubar.clone(), 1.0).unwrap();
        let nl = setup.model.clone();
        for col in 0..2 * l {
            let mut a = alloc::vec![0.0; 2 * l];
            a[col] = 1e-3;
            let got = rhs(&a, &setup, 0.0).unwrap();
            let f = nonlinear_term(&a, &nl).unwrap();
            let kk = (col / 2 + 1) as f64;
            let lambda = if col < 2 { k / 2.0 - 0.5 } else { -0.5 * kk * kk };
            for i in 0..2 * l {
                let want = if i == col { lambda * a[col] } else { 0.0 } + f[i];
                assert!((got[i] - want).abs() < 1e-15, "mode {col}, row {i}");
            }
        }
    }

    #[test]
    fn equilibrium_stays_put() {
        let sys = kuramoto_uniform(5.0, 8);
        let law = solve_are(&sys, &AreOptions::default()).unwrap();
        let setup = SimulationSetup::new(sys.clone(), Some(law), sys.mubar.clone(), 2.0)
            .unwrap()
            .with_samples(11);
        let rec = simulate(&setup).unwrap();
        assert_eq!(rec.len(), 11);
        assert!(rec.states.iter().flatten().all(|&x| x == 0.0));
        assert!(rec.controls.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn small_uncontrolled_run_decays_at_linear_rate() {
        let (k, l) = (0.95, 12);
        let sys = kuramoto_uniform(k, l);
        let mu0 = initial_density(InitialShape::Uniform, &sys.mubar, 0.1, 0.3).unwrap();
        let setup = SimulationSetup::new(sys, None, mu0, 30.0).unwrap().with_samples(121);
        let rec = simulate(&setup).unwrap();
        let rate = decay_rate(&rec, 5.0, 30.0).unwrap();
        assert!((rate + 0.025).abs() < 0.0025, "{rate}");
        assert!(rec.max_mass_defect() < 1e-12);
        assert!(rec.max_energy_rate <= 1e-8, "{}", rec.max_energy_rate);
        assert!(rec.positivity_warnings.is_empty());
        let t = &rec.times;
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn controlled_run_decays_at_least_at_shift() {
        let l = 12;
        let sys = kuramoto_uniform(5.0, l);
        let law = solve_are(&sys, &AreOptions::default()).unwrap();
        let mu0 = initial_density(InitialShape::Uniform, &sys.mubar, 0.1, 0.3).unwrap();
        let setup = SimulationSetup::new(sys, Some(law), mu0, 10.0)
            .unwrap()
            .with_samples(101);
        let rec = simulate(&setup).unwrap();
        assert!(rec.terminal_norm() < 1e-6, "{}", rec.terminal_norm());
        // below the absolute tolerance the samples are integration noise
        let end = rec.resolved_until();
        assert_eq!(end, rec.first_time_below(100.0 * setup.atol));
        let rate = decay_rate(&rec, 0.2, end).unwrap();
        assert!(rate <= -0.9, "{rate}");
    }

    #[test]
    fn decay_rate_of_synthetic_exponentials() {
        let times: Vec<f64> = (0..50).map(|i| 0.1 * i as f64).collect();
        let exp: Vec<f64> = times.iter().map(|t| math::exp(-2.0 * t)).collect();
        assert!((fit_log_slope(&times, &exp, 0.0, 5.0).unwrap() + 2.0).abs() < 1e-10);
        let flat = alloc::vec![0.3; 50];
        assert!(fit_log_slope(&times, &flat, 0.0, 5.0).unwrap().abs() < 1e-14);
        // a window falling entirely below the floor is empty
        let tiny: Vec<f64> = times.iter().map(|t| math::exp(-40.0 * t)).collect();
        assert!((fit_log_slope(&times, &tiny, 0.0, 5.0).unwrap() + 40.0).abs() < 1e-9);
        assert!(matches!(
            fit_log_slope(&times, &tiny, 1.0, 5.0),
            Err(Error::EmptyWindow { .. })
        ));
    }

    #[test]
    fn comparing_a_run_with_itself() {
        let sys = kuramoto_uniform(0.95, 6);
        let mu0 = initial_density(InitialShape::Uniform, &sys.mubar, 0.1, 0.3).unwrap();
        let setup = SimulationSetup::new(sys, None, mu0, 2.0).unwrap().with_samples(21);
        let rec = simulate(&setup).unwrap();
        let cmp = compare_runs(&rec, &rec).unwrap();
        assert!(cmp.ratio.iter().all(|&r| r == 1.0));
        assert_eq!(cmp.rates.0, cmp.rates.1);
        let mut shorter = rec.clone();
        shorter.times.pop();
        shorter.l2_norms.pop();
        assert!(matches!(compare_runs(&rec, &shorter), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn setup_validation() {
        let sys = kuramoto_uniform(0.95, 6);
        let bad_mass = SpectralField::constant(6, 1.0);
        assert!(SimulationSetup::new(sys.clone(), None, bad_mass, 1.0).is_err());
        let negative = &uniform_density(6) + &SpectralField::cosine(6, 1, 0.5);
        assert!(matches!(
            SimulationSetup::new(sys.clone(), None, negative, 1.0),
            Err(Error::NonPositiveDensity { .. })
        ));
        assert!(SimulationSetup::new(sys.clone(), None, uniform_density(6), 0.0).is_err());
        assert!(SimulationSetup::new(sys, None, uniform_density(7), 1.0).is_err());
    }

    #[test]
    fn relative_initial_density_is_normalized() {
        let l = 32;
        let mubar = crate::stationary::kuramoto_synchronized(2.0, 0.5, l, 0.0).unwrap();
        let mu0 = initial_density(InitialShape::Relative, &mubar, 0.1, 0.3).unwrap();
        assert!((mu0.mass() - 1.0).abs() < 1e-14);
        let d = (&mu0 - &mubar).l2_norm();
        assert!(d > 0.0 && d < 0.2 * mubar.l2_norm());
    }
}
