//! Stationary states of the uncontrolled dynamics.
//!
//! A stationary density satisfies `μ̄ = Z⁻¹ exp(-(V + W∗μ̄)/σ)`. The general
//! solver is a damped Picard iteration on that map; for the Kuramoto model the
//! scalar order-parameter equation gives an independent route used for
//! validation and to seed synchronized branches.

use core::f64::consts::PI;

use crate::bessel::bessel_ratio;
use crate::model::{quadrature_grid, ModelSpec};
use crate::spectral::{GridFunction, SpectralField};
use crate::{math, Error, Result};

/// Which family a stationary density belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Branch {
    Uniform,
    /// Non-uniform state of a translation-invariant model, peaked at `phase`.
    Synchronized {
        phase: f64,
    },
    Other,
}

/// A self-consistent density with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryState {
    pub mubar: SpectralField,
    /// `‖∇·(σ∇μ̄ + μ̄∇v[μ̄])‖_{L²}`.
    pub residual: f64,
    /// Last fixed-point defect `‖Φ(μ) - μ‖_{L²}`.
    pub defect: f64,
    pub iterations: usize,
    pub converged: bool,
    pub branch: Branch,
}

impl StationaryState {
    /// Certifies an externally supplied density (e.g. a closed-form branch).
    pub fn from_density(m: &ModelSpec, mubar: SpectralField) -> Result<Self> {
        check_density(&mubar)?;
        let residual = stationarity_residual(&mubar, m)?;
        let branch = classify(&mubar, m)?;
        Ok(Self {
            mubar,
            residual,
            defect: 0.0,
            iterations: 0,
            converged: true,
            branch,
        })
    }

    /// Converts a flagged non-converged result into an error.
    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                defect: self.defect,
            })
        }
    }

    pub fn modes(&self) -> usize {
        self.mubar.modes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub damping: f64,
    pub max_iterations: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            damping: 0.5,
            max_iterations: 10_000,
        }
    }
}

/// The uniform density `1/(2π)`.
pub fn uniform_density(modes: usize) -> SpectralField {
    SpectralField::constant(modes, 1.0 / (2.0 * PI))
}

/// `μ ∝ base · (1 + ε cos(x - phase))`, normalized to unit mass.
pub fn perturbed_density(base: &SpectralField, eps: f64, phase: f64) -> Result<SpectralField> {
    let bump =
        &SpectralField::constant(base.modes(), 1.0) + &SpectralField::cosine(base.modes(), 1, eps).translated(phase);
    let mu = base
        .resized(base.modes() + 1)
        .pointwise_product(&bump.resized(base.modes() + 1))?;
    let mu = mu.resized(base.modes());
    let mass = mu.mass();
    Ok(mu.scaled(1.0 / mass))
}

/// Damped Picard iteration `μ ← (1-d)μ + d·Z⁻¹exp(-(V+W∗μ)/σ)`.
///
/// Stops once the map defect drops below `opts.tol`. A run that exhausts
/// `max_iterations` still returns its last iterate, with `converged = false`.
pub fn solve_self_consistent(m: &ModelSpec, init: &SpectralField, opts: &FixedPointOptions) -> Result<StationaryState> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "damping",
            reason: alloc::format!("must lie in (0, 1], got {}", opts.damping),
        });
    }
    if init.modes() != m.modes() {
        return Err(Error::ModeMismatch {
            left: init.modes(),
            right: m.modes(),
        });
    }
    check_density(init)?;
    let mut mu = init.scaled(1.0 / init.mass());
    let mut defect = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let next = gibbs_map(m, &mu)?;
        defect = (&next - &mu).l2_norm();
        if defect < opts.tol {
            mu = next;
            converged = true;
            break;
        }
        mu = mu.axpy(opts.damping, &(&next - &mu))?;
    }
    let residual = stationarity_residual(&mu, m)?;
    let branch = classify(&mu, m)?;
    Ok(StationaryState {
        mubar: mu,
        residual,
        defect,
        iterations,
        converged,
        branch,
    })
}

/// `Φ(μ) = Z⁻¹ exp(-(V + W∗μ)/σ)`, truncated to the model's modes.
pub fn gibbs_map(m: &ModelSpec, mu: &SpectralField) -> Result<SpectralField> {
    let v = m.mean_field_potential(mu)?;
    let n = quadrature_grid(m.modes());
    let vg = v.to_grid(n)?;
    let vmin = vg.min();
    let g: alloc::vec::Vec<f64> = vg.values().iter().map(|&x| math::exp(-(x - vmin) / m.sigma)).collect();
    let g = GridFunction::new(g)?;
    let z = g.integrate();
    let out = g.to_coeffs(m.modes())?;
    Ok(out.scaled(1.0 / z))
}

/// `‖∇·(σ∇μ + μ∇(V + W∗μ))‖_{L²}`, with the product evaluated untruncated.
pub fn stationarity_residual(mu: &SpectralField, m: &ModelSpec) -> Result<f64> {
    let modes = mu.modes().max(m.modes());
    let mu = mu.resized(modes);
    let v = m.resized(modes).mean_field_potential(&mu)?;
    let wide = 2 * modes;
    let mu2 = mu.resized(wide);
    let drift = mu2.pointwise_product(&v.resized(wide).differentiate())?;
    let flux = mu2.differentiate().scaled(m.sigma).axpy(1.0, &drift)?;
    Ok(flux.differentiate().l2_norm())
}

/// Largest nonnegative root of `r = Ψ(K r / σ)`, `Ψ = I₁/I₀`.
///
/// `r = 0` is always a root; a positive root exists iff `K > 2σ`.
pub fn kuramoto_order_parameter(coupling: f64, sigma: f64) -> f64 {
    let a = coupling / sigma;
    if a <= 2.0 {
        return 0.0;
    }
    let g = |r: f64| r - bessel_ratio(a * r);
    // g < 0 near 0+ and g(1) > 0
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = if mid == 0.0 { -1.0 } else { g(mid) };
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..3 {
        let x = a * r;
        let psi = bessel_ratio(x);
        let dpsi = 1.0 - psi / x - psi * psi;
        let step = g(r) / (1.0 - a * dpsi);
        let next = r - step;
        if !(next > 0.0 && next < 1.0) || step.abs() < 1e-17 {
            break;
        }
        r = next;
    }
    r
}

/// Synchronized Kuramoto density `∝ exp((K/σ) r cos(x - phase))`.
/// Falls back to the uniform density when `K ≤ 2σ`.
pub fn kuramoto_synchronized(coupling: f64, sigma: f64, modes: usize, phase: f64) -> Result<SpectralField> {
    let r = kuramoto_order_parameter(coupling, sigma);
    let a = coupling / sigma * r;
    let n = quadrature_grid(modes).max(((4.0 * a) as usize + 64).next_power_of_two());
    let g = GridFunction::from_fn(n, |x| math::exp(a * (math::cos(x - phase) - 1.0)))?;
    let z = g.integrate();
    Ok(g.to_coeffs(modes)?.scaled(1.0 / z))
}

/// Classifies a density as uniform, synchronized (translation-invariant
/// models), or other.
pub fn classify(mu: &SpectralField, m: &ModelSpec) -> Result<Branch> {
    if mu.project_zero_mean().l2_norm() <= 1e-8 {
        return Ok(Branch::Uniform);
    }
    if !m.has_flat_potential() {
        return Ok(Branch::Other);
    }
    Ok(Branch::Synchronized {
        phase: argmax_phase(mu)?,
    })
}

/// Location of the maximum on the quadrature grid, refined by a parabola
/// through the neighbouring samples.
pub fn argmax_phase(mu: &SpectralField) -> Result<f64> {
    let n = quadrature_grid(mu.modes());
    let g = mu.to_grid(n)?;
    let vals = g.values();
    let (j, _) = vals.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
    );
    let h = 2.0 * PI / n as f64;
    let (a, b, c) = (vals[(j + n - 1) % n], vals[j], vals[(j + 1) % n]);
    let denom = a - 2.0 * b + c;
    let offset = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    Ok((j as f64 + offset.clamp(-0.5, 0.5)) * h).map(|x| x - 2.0 * PI * libm::floor(x / (2.0 * PI)))
}

fn check_density(mu: &SpectralField) -> Result<()> {
    let mass = mu.mass();
    if !mu.is_real() || !(mass.is_finite() && (mass - 1.0).abs() <= 1e-8) {
        return Err(Error::InvalidParameter {
            name: "init",
            reason: alloc::format!("expected a real probability density, mass = {mass}"),
        });
    }
    let min = mu.to_grid(quadrature_grid(mu.modes()))?.min();
    if min <= 0.0 {
        return Err(Error::NonPositiveDensity { min });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{free_energy, make_model, ModelParams};

    const L: usize = 32;

    #[test]
    fn subcritical_kuramoto_stays_uniform() {
        let m = make_model(&ModelParams::kuramoto(0.8, 0.5), L).unwrap();
        let ss = solve_self_consistent(&m, &uniform_density(L), &FixedPointOptions::default()).unwrap();
        assert!(ss.converged);
        assert_eq!(ss.branch, Branch::Uniform);
        assert!((&ss.mubar - &uniform_density(L)).max_coeff() < 1e-15);
        assert!(ss.residual < 1e-14);
    }

    #[test]
    fn uniform_is_fixed_for_any_interaction_without_potential() {
        let m = make_model(&ModelParams::von_mises(2.0, 0.3), L).unwrap();
        let ss = solve_self_consistent(&m, &uniform_density(L), &FixedPointOptions::default()).unwrap();
        assert!(ss.converged);
        assert_eq!(ss.iterations, 1);
        assert_eq!(ss.branch, Branch::Uniform);
    }

    #[test]
    fn order_parameter_examples() {
        assert_eq!(kuramoto_order_parameter(0.8, 0.5), 0.0);
        assert_eq!(kuramoto_order_parameter(1.0, 0.5), 0.0);
        // r = 0 solves the equation for every K since Ψ(0) = 0
        assert_eq!(bessel_ratio(0.0), 0.0);
        let r = kuramoto_order_parameter(2.0, 0.5);
        // independent plain bisection on r - I1(4r)/I0(4r) over [1e-6, 1]
        let (mut lo, mut hi) = (1e-6f64, 1.0f64);
        let f = |r: f64| r - crate::bessel::bessel_i(1, 4.0 * r) / crate::bessel::bessel_i(0, 4.0 * r);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((r - 0.5 * (lo + hi)).abs() < 1e-12, "r = {r}");
        assert!(r > 0.0);
    }

    #[test]
    fn picard_and_order_parameter_agree_for_k2() {
        let m = make_model(&ModelParams::kuramoto(2.0, 0.5), L).unwrap();
        let init = perturbed_density(&uniform_density(L), 0.5, 0.0).unwrap();
        let ss = solve_self_consistent(&m, &init, &FixedPointOptions::default()).unwrap();
        assert!(ss.converged, "defect {}", ss.defect);
        let r_fixed = 2.0 * PI * ss.mubar.coeff(1).re;
        let r = kuramoto_order_parameter(2.0, 0.5);
        assert!((r_fixed - r).abs() < 1e-8, "{r_fixed} vs {r}");
        let closed = kuramoto_synchronized(2.0, 0.5, L, 0.0).unwrap();
        assert!((&closed - &ss.mubar).l2_norm() < 1e-9);
        assert!(ss.residual <= 10.0 * 1e-12 * 1e3, "residual {}", ss.residual);
        assert!(
            matches!(ss.branch, Branch::Synchronized { phase } if phase.abs() < 1e-6 || (phase - 2.0 * PI).abs() < 1e-6)
        );
        assert!((ss.mubar.mass() - 1.0).abs() < 1e-12);
        assert!(ss.mubar.to_grid(256).unwrap().min() > 0.0);
    }

    #[test]
    fn synchronized_state_has_lower_free_energy() {
        let m = make_model(&ModelParams::kuramoto(2.0, 0.5), L).unwrap();
        let sync = kuramoto_synchronized(2.0, 0.5, L, 0.0).unwrap();
        let fs = free_energy(&sync, &m).unwrap();
        let fu = free_energy(&uniform_density(L), &m).unwrap();
        assert!(fs < fu, "{fs} >= {fu}");
    }

    #[test]
    fn residual_examples() {
        let m = make_model(&ModelParams::kuramoto(2.0, 0.5), L).unwrap();
        assert!(stationarity_residual(&uniform_density(L), &m).unwrap() < 1e-15);
        let bumped = &uniform_density(L) + &SpectralField::cosine(L, 1, 0.1);
        assert!(stationarity_residual(&bumped, &m).unwrap() > 1e-3);
    }

    #[test]
    fn residual_is_translation_invariant() {
        let m = make_model(&ModelParams::kuramoto(3.0, 0.5), L).unwrap();
        let base = kuramoto_synchronized(3.0, 0.5, L, 0.0).unwrap();
        let r0 = stationarity_residual(&base, &m).unwrap();
        for &phi in &[0.3, 1.7, 4.0] {
            let shifted = kuramoto_synchronized(3.0, 0.5, L, phi).unwrap();
            let r = stationarity_residual(&shifted, &m).unwrap();
            assert!((r - r0).abs() < 1e-12 && r < 1e-10);
            let rot = base.translated(phi);
            assert!((&rot - &shifted).max_coeff() < 1e-13);
        }
    }

    #[test]
    fn bifurcation_from_canonical_initializations() {
        let sigma = 0.5;
        let inits: alloc::vec::Vec<_> = (0..8)
            .map(|j| perturbed_density(&uniform_density(L), 0.5, 2.0 * PI * j as f64 / 8.0).unwrap())
            .collect();
        for &k in &[0.5, 0.9] {
            let m = make_model(&ModelParams::kuramoto(k, sigma), L).unwrap();
            for init in &inits {
                let ss = solve_self_consistent(&m, init, &FixedPointOptions::default()).unwrap();
                assert!(ss.converged);
                assert_eq!(ss.branch, Branch::Uniform, "K = {k}");
            }
        }
        for &k in &[1.5, 3.0] {
            let m = make_model(&ModelParams::kuramoto(k, sigma), L).unwrap();
            let found = inits.iter().any(|init| {
                let ss = solve_self_consistent(&m, init, &FixedPointOptions::default()).unwrap();
                ss.converged && matches!(ss.branch, Branch::Synchronized { .. })
            });
            assert!(found, "K = {k}");
        }
    }

    #[test]
    fn invalid_inputs() {
        let m = make_model(&ModelParams::kuramoto(2.0, 0.5), L).unwrap();
        let opts = FixedPointOptions {
            damping: 0.0,
            ..Default::default()
        };
        assert!(solve_self_consistent(&m, &uniform_density(L), &opts).is_err());
        let not_density = SpectralField::constant(L, 1.0);
        assert!(solve_self_consistent(&m, &not_density, &FixedPointOptions::default()).is_err());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let m = make_model(&ModelParams::kuramoto(2.0, 0.5), L).unwrap();
        let init = perturbed_density(&uniform_density(L), 0.5, 0.0).unwrap();
        let opts = FixedPointOptions {
            max_iterations: 3,
            ..Default::default()
        };
        let ss = solve_self_consistent(&m, &init, &opts).unwrap();
        assert!(!ss.converged);
        assert!(matches!(
            ss.ensure_converged(),
            Err(Error::NotConverged { iterations: 3, .. })
        ));
    }
}
