//! Benchmark models and the physical diagnostics shared downstream.

use alloc::string::String;
use core::f64::consts::PI;

use crate::bessel::bessel_i;
use crate::spectral::{default_grid, GridFunction, SpectralField};
use crate::{math, Error, Result, C64};

/// Floor applied inside the entropy logarithm.
pub const ENTROPY_FLOOR: f64 = 1e-14;
/// Densities dipping below this on the grid are rejected by [`free_energy`].
pub const NEGATIVITY_TOLERANCE: f64 = 1e-6;

/// The benchmark families.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "variant", rename_all = "snake_case"))]
pub enum ModelKind {
    /// `V = 0`, `W = -K cos x`.
    Kuramoto { coupling: f64 },
    /// `V = amplitude · cos 2x`, `W = -K cos x`.
    CosinePotential { coupling: f64, amplitude: f64 },
    /// `V = -η cos x`, `W = -K cos x`.
    O2 { coupling: f64, eta: f64 },
    /// `W = -exp(θ cos x) / I_0(θ)`, `V = 0`.
    VonMises { theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: ModelKind,
    pub sigma: f64,
}

impl ModelParams {
    pub fn kuramoto(coupling: f64, sigma: f64) -> Self {
        Self {
            kind: ModelKind::Kuramoto { coupling },
            sigma,
        }
    }

    pub fn cosine_potential(coupling: f64, amplitude: f64, sigma: f64) -> Self {
        Self {
            kind: ModelKind::CosinePotential { coupling, amplitude },
            sigma,
        }
    }

    pub fn o2(coupling: f64, eta: f64, sigma: f64) -> Self {
        Self {
            kind: ModelKind::O2 { coupling, eta },
            sigma,
        }
    }

    pub fn von_mises(theta: f64, sigma: f64) -> Self {
        Self {
            kind: ModelKind::VonMises { theta },
            sigma,
        }
    }

    /// Whether `V ≡ 0`, so that every translate of a stationary state is stationary.
    pub fn translation_invariant(&self) -> bool {
        matches!(self.kind, ModelKind::Kuramoto { .. } | ModelKind::VonMises { .. })
    }

    pub fn validate(&self) -> Result<()> {
        positive("sigma", self.sigma)?;
        match self.kind {
            ModelKind::Kuramoto { coupling } => positive("coupling", coupling),
            ModelKind::CosinePotential { coupling, amplitude } => {
                positive("coupling", coupling)?;
                finite("amplitude", amplitude)
            }
            ModelKind::O2 { coupling, eta } => {
                positive("coupling", coupling)?;
                finite("eta", eta)
            }
            ModelKind::VonMises { theta } => positive("theta", theta),
        }
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            ModelKind::Kuramoto { .. } => "kuramoto",
            ModelKind::CosinePotential { .. } => "cosine_potential",
            ModelKind::O2 { .. } => "o2",
            ModelKind::VonMises { .. } => "von_mises",
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: alloc::format!("must be positive and finite, got {v}"),
        })
    }
}

fn finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: alloc::format!("must be finite, got {v}"),
        })
    }
}

/// Confining potential, interaction potential and diffusion strength.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub v: SpectralField,
    pub w: SpectralField,
    pub sigma: f64,
}

impl ModelSpec {
    /// Packages user-supplied coefficient arrays. `W` must be even (a real
    /// cosine series) and `V` real.
    pub fn new(name: impl Into<String>, v: SpectralField, w: SpectralField, sigma: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        if v.modes() != w.modes() {
            return Err(Error::ModeMismatch {
                left: v.modes(),
                right: w.modes(),
            });
        }
        if !v.is_real() {
            return Err(Error::InvalidParameter {
                name: "V",
                reason: "confining potential must be real".into(),
            });
        }
        let scale = w.max_coeff().max(f64::MIN_POSITIVE);
        let odd = (0..=w.modes() as i64)
            .map(|k| (w.coeff(k).im.abs()).max((w.coeff(k) - w.coeff(-k)).norm()))
            .fold(0.0, f64::max);
        if odd > 1e-13 * scale {
            return Err(Error::InvalidParameter {
                name: "W",
                reason: alloc::format!("interaction potential must be even (odd part {odd:e})"),
            });
        }
        Ok(Self {
            name: name.into(),
            v,
            w,
            sigma,
        })
    }

    pub fn modes(&self) -> usize {
        self.v.modes()
    }

    /// Same potentials at another truncation order.
    pub fn resized(&self, modes: usize) -> Self {
        Self {
            name: self.name.clone(),
            v: self.v.resized(modes),
            w: self.w.resized(modes),
            sigma: self.sigma,
        }
    }

    /// Whether `V` is constant (no external force).
    pub fn has_flat_potential(&self) -> bool {
        self.v.project_zero_mean().max_coeff() == 0.0
    }

    /// `v[μ] = V + W∗μ`.
    pub fn mean_field_potential(&self, mu: &SpectralField) -> Result<SpectralField> {
        Ok(&self.v + &self.w.convolve(mu)?)
    }
}

/// Realizes a benchmark model at truncation `modes`.
pub fn make_model(p: &ModelParams, modes: usize) -> Result<ModelSpec> {
    p.validate()?;
    if modes == 0 {
        return Err(Error::InvalidParameter {
            name: "modes",
            reason: "truncation order must be at least 1".into(),
        });
    }
    let (v, w) = match p.kind {
        ModelKind::Kuramoto { coupling } => (SpectralField::zeros(modes), SpectralField::cosine(modes, 1, -coupling)),
        ModelKind::CosinePotential { coupling, amplitude } => (
            SpectralField::cosine(modes, 2, amplitude),
            SpectralField::cosine(modes, 1, -coupling),
        ),
        ModelKind::O2 { coupling, eta } => (
            SpectralField::cosine(modes, 1, -eta),
            SpectralField::cosine(modes, 1, -coupling),
        ),
        ModelKind::VonMises { theta } => (SpectralField::zeros(modes), von_mises_interaction(theta, modes)?),
    };
    ModelSpec::new(p.label(), v, w, p.sigma)
}

/// Cosine series of `-exp(θ cos x)/I_0(θ)`; its coefficients are `-I_k(θ)/I_0(θ)`.
fn von_mises_interaction(theta: f64, modes: usize) -> Result<SpectralField> {
    let i0 = bessel_i(0, theta);
    // resolve exp(θ cos x) well past the truncation before cutting
    let n = default_grid(modes).max((8.0 * theta) as usize + 64).next_power_of_two();
    let g = GridFunction::from_fn(n, |x| -math::exp(theta * math::cos(x)) / i0)?;
    let raw = g.to_coeffs(modes)?;
    Ok(SpectralField::from_fn(modes, |k| {
        C64::new(0.5 * (raw.coeff(k).re + raw.coeff(-k).re), 0.0)
    }))
}

/// Grid used for nonlinear quadratures (entropy, weighted norms).
pub fn quadrature_grid(modes: usize) -> usize {
    (4 * (2 * modes + 1)).next_power_of_two().max(64)
}

/// Free energy `σ∫μ log μ + ∫Vμ + ½∬W(x-x')μ(x)μ(x')`.
///
/// The entropy is a grid quadrature with the logarithm floored at
/// [`ENTROPY_FLOOR`]; the other two terms are exact spectral products.
pub fn free_energy(mu: &SpectralField, m: &ModelSpec) -> Result<f64> {
    let mu = mu.resized(m.modes().max(mu.modes()));
    let model = m.resized(mu.modes());
    let grid = mu.to_grid(quadrature_grid(mu.modes()))?;
    let min = grid.min();
    if min < -NEGATIVITY_TOLERANCE {
        return Err(Error::NonPositiveDensity { min });
    }
    let h = 2.0 * PI / grid.len() as f64;
    let entropy: f64 = grid
        .values()
        .iter()
        .map(|&p| p * math::ln(p.max(ENTROPY_FLOOR)))
        .sum::<f64>()
        * h;
    let potential = model.v.inner_product(&mu)?.re;
    let interaction = 0.5 * model.w.convolve(&mu)?.inner_product(&mu)?.re;
    Ok(m.sigma * entropy + potential + interaction)
}

/// `(∫ y²/μ̄ dx)^{1/2}`, the norm of `L²(μ̄⁻¹)`, by grid quadrature.
pub fn weighted_norm(y: &SpectralField, mubar: &SpectralField) -> Result<f64> {
    let modes = y.modes().max(mubar.modes());
    let n = quadrature_grid(modes);
    let yg = y.resized(modes).to_grid(n)?;
    let mg = mubar.resized(modes).to_grid(n)?;
    weighted_norm_on_grid(yg.values(), mg.values())
}

pub(crate) fn weighted_norm_on_grid(y: &[f64], mubar: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for (a, &w) in y.iter().zip(mubar) {
        if w <= 0.0 {
            return Err(Error::NonPositiveDensity { min: w });
        }
        sum += a * a / w;
    }
    Ok(math::sqrt(sum * 2.0 * PI / y.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::nodes;

    fn uniform(modes: usize) -> SpectralField {
        SpectralField::constant(modes, 1.0 / (2.0 * PI))
    }

    #[test]
    fn kuramoto_coefficients() {
        let m = make_model(&ModelParams::kuramoto(1.0, 0.5), 8).unwrap();
        assert_eq!(m.v.max_coeff(), 0.0);
        for k in -8..=8i64 {
            let want = if k.abs() == 1 { -0.5 } else { 0.0 };
            assert_eq!(m.w.coeff(k), C64::new(want, 0.0));
        }
        assert_eq!(m.sigma, 0.5);
    }

    #[test]
    fn o2_potentials() {
        let m = make_model(&ModelParams::o2(1.0, 0.05, 0.75), 8).unwrap();
        assert!((m.v.eval(0.3).re + 0.05 * 0.3f64.cos()).abs() < 1e-16);
        assert!((m.w.eval(0.3).re + 0.3f64.cos()).abs() < 1e-16);
    }

    #[test]
    fn cosine_potential_amplitude() {
        let m = make_model(&ModelParams::cosine_potential(1.0, 0.05, 0.5), 8).unwrap();
        assert!((m.v.coeff(2).re - 0.025).abs() < 1e-16);
    }

    #[test]
    fn von_mises_coefficients_match_quadrature() {
        let theta = 1.0;
        let m = make_model(&ModelParams::von_mises(theta, 0.5), 16).unwrap();
        let i0 = bessel_i(0, theta);
        // c_0 = -(1/2π)∫exp(θ cos x)dx / I_0(θ) = -1, by a fine trapezoid rule
        let n = 400;
        let quad: f64 = nodes(n).map(|x| (theta * x.cos()).exp()).sum::<f64>() / n as f64;
        assert!((m.w.coeff(0).re + quad / i0).abs() < 1e-10);
        assert!((m.w.coeff(0).re + 1.0).abs() < 1e-12);
        assert!((m.w.coeff(1).re + bessel_i(1, theta) / i0).abs() < 1e-12);
        for k in 1..=16 {
            assert_eq!(m.w.coeff(k), m.w.coeff(-k));
            assert_eq!(m.w.coeff(k).im, 0.0);
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(make_model(&ModelParams::kuramoto(-1.0, 0.5), 4).is_err());
        assert!(make_model(&ModelParams::kuramoto(1.0, 0.0), 4).is_err());
        assert!(make_model(&ModelParams::von_mises(0.0, 0.5), 4).is_err());
        let odd_w = SpectralField::sine(4, 1, 1.0);
        assert!(ModelSpec::new("odd", SpectralField::zeros(4), odd_w, 1.0).is_err());
    }

    #[test]
    fn free_energy_of_uniform_states() {
        let sigma = 0.5;
        let want = sigma * (1.0 / (2.0 * PI)).ln();
        let kura = make_model(&ModelParams::kuramoto(2.0, sigma), 16).unwrap();
        assert!((free_energy(&uniform(16), &kura).unwrap() - want).abs() < 1e-13);
        let cosv = ModelSpec::new(
            "cos2",
            SpectralField::cosine(16, 2, 1.0),
            SpectralField::zeros(16),
            sigma,
        )
        .unwrap();
        assert!((free_energy(&uniform(16), &cosv).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn free_energy_rejects_negative_density() {
        let kura = make_model(&ModelParams::kuramoto(2.0, 0.5), 8).unwrap();
        let bad = &uniform(8) + &SpectralField::cosine(8, 1, 0.5);
        assert!(matches!(
            free_energy(&bad, &kura),
            Err(Error::NonPositiveDensity { .. })
        ));
    }

    #[test]
    fn weighted_norm_examples() {
        let u = uniform(8);
        assert_eq!(weighted_norm(&SpectralField::zeros(8), &u).unwrap(), 0.0);
        let y = SpectralField::cosine(8, 1, 1.0 / (2.0 * PI));
        let w = weighted_norm(&y, &u).unwrap();
        assert!((w - (2.0 * PI).sqrt() * y.l2_norm()).abs() < 1e-14);
        let w2 = weighted_norm(&y.scaled(2.0), &u).unwrap();
        assert!((w2 - 2.0 * w).abs() < 1e-14);
        assert!(weighted_norm(&y, &SpectralField::cosine(8, 1, 1.0)).is_err());
    }
}
