//! Cross-checks of the Galerkin spectrum against the ground-state transformed
//! operator `H = -U𝓛U⁻¹ = H_loc + 𝒦`, with `U` multiplication by `μ̄^{-1/2}`:
//!
//! ```text
//! H_loc = -σΔ + Ψ,   Ψ = |∇v|²/(4σ) - Δv/2,
//! (𝒦u)(x) = ∫ k(x, y) u(y) dy,
//! k(x, y) = -√(μ̄(y)/μ̄(x)) (∇μ̄(x)·∇W(x-y) + μ̄(x) ΔW(x-y)).
//! ```
//!
//! `H` is discretized on a uniform grid independently of the Galerkin
//! matrices: Fourier collocation for `Δ`, pointwise multiplication for `Ψ`
//! and Nyström (trapezoidal) quadrature for `𝒦`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use super::div_flux;
use crate::linalg::{self, RMat};
use crate::model::{quadrature_grid, ModelSpec};
use crate::spectral::SpectralField;
use crate::stationary::StationaryState;
use crate::{math, Error, Result, C64};

/// Number of leading eigenvalues compared.
const COMPARED: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SchrodingerReport {
    pub grid: usize,
    /// `max_i min_j |λ_i(H) + λ_j(𝓛)|` over the lowest eigenvalues of `H`.
    pub eigen_mismatch: f64,
    /// Lowest eigenvalues of the collocated `H` (ascending real part).
    pub h_eigenvalues: Vec<C64>,
    /// Leading eigenvalues of the full-space Galerkin `𝓛`, negated.
    pub galerkin_eigenvalues: Vec<C64>,
    /// `‖𝒦‖_HS = (∬|k|²)^{1/2}`.
    pub hs_norm: f64,
}

/// Collocation grid used for `H`.
pub fn schrodinger_grid(modes: usize) -> usize {
    (2 * modes + 1).next_power_of_two().max(64)
}

pub fn schrodinger_check(m: &ModelSpec, ss: &StationaryState) -> Result<SchrodingerReport> {
    schrodinger_check_on_grid(m, ss, schrodinger_grid(m.modes()))
}

/// [`schrodinger_check`] on an explicit power-of-two grid `n > 2L`.
pub fn schrodinger_check_on_grid(m: &ModelSpec, ss: &StationaryState, n: usize) -> Result<SchrodingerReport> {
    let d = Discretization::new(m, ss, n)?;
    let h = 2.0 * PI / n as f64;
    let mut hmat = collocation_second_derivative(n) * (-m.sigma);
    let mut hs2 = 0.0;
    for i in 0..n {
        hmat[(i, i)] += d.psi(i, m.sigma);
        for j in 0..n {
            let k = d.kernel(i, j);
            hmat[(i, j)] += k * h;
            hs2 += k * k;
        }
    }
    let hs_norm = math::sqrt(hs2 * h * h);

    let mut h_eig = linalg::eigenvalues(&hmat)?;
    h_eig.reverse();
    h_eig.truncate(COMPARED);
    let full = super::full_space_operator(m, &ss.mubar)?;
    let l_eig = linalg::eigenvalues(&full)?;
    let eigen_mismatch = h_eig
        .iter()
        .map(|lh| l_eig.iter().map(|ll| (lh + ll).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Ok(SchrodingerReport {
        grid: n,
        eigen_mismatch,
        h_eigenvalues: h_eig,
        galerkin_eigenvalues: l_eig.iter().take(COMPARED).map(|l| -l).collect(),
        hs_norm,
    })
}

/// `‖𝒦‖_HS` by the trapezoidal rule on `n × n` points.
pub fn kernel_hs_norm(m: &ModelSpec, ss: &StationaryState, n: usize) -> Result<f64> {
    let d = Discretization::new(m, ss, n)?;
    let h = 2.0 * PI / n as f64;
    let mut hs2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let k = d.kernel(i, j);
            hs2 += k * k;
        }
    }
    Ok(math::sqrt(hs2) * h)
}

/// Grid samples entering `Ψ` and the kernel `k`.
struct Discretization {
    n: usize,
    mu: Vec<f64>,
    dmu: Vec<f64>,
    dv: Vec<f64>,
    d2v: Vec<f64>,
    dw: Vec<f64>,
    d2w: Vec<f64>,
}

impl Discretization {
    fn new(m: &ModelSpec, ss: &StationaryState, n: usize) -> Result<Self> {
        let modes = m.modes();
        let mubar = &ss.mubar;
        if mubar.modes() != modes {
            return Err(Error::ModeMismatch {
                left: mubar.modes(),
                right: modes,
            });
        }
        let grid = |f: &SpectralField| -> Result<Vec<f64>> { Ok(f.to_grid(n)?.into_values()) };
        let mu = grid(mubar)?;
        let min = mu.iter().copied().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            return Err(Error::NonPositiveDensity { min });
        }
        let dv = m.mean_field_potential(mubar)?.differentiate();
        let dw = m.w.differentiate();
        Ok(Self {
            n,
            dmu: grid(&mubar.differentiate())?,
            mu,
            d2v: grid(&dv.differentiate())?,
            dv: grid(&dv)?,
            d2w: grid(&dw.differentiate())?,
            dw: grid(&dw)?,
        })
    }

    fn psi(&self, i: usize, sigma: f64) -> f64 {
        self.dv[i] * self.dv[i] / (4.0 * sigma) - 0.5 * self.d2v[i]
    }

    fn kernel(&self, i: usize, j: usize) -> f64 {
        let off = (i + self.n - j) % self.n;
        -math::sqrt(self.mu[j] / self.mu[i]) * (self.dmu[i] * self.dw[off] + self.mu[i] * self.d2w[off])
    }
}

/// Fourier collocation matrix of `d²/dx²` on `n` equispaced points (`n` even).
fn collocation_second_derivative(n: usize) -> RMat {
    let h = 2.0 * PI / n as f64;
    RMat::from_fn(n, n, |i, j| {
        if i == j {
            -PI * PI / (3.0 * h * h) - 1.0 / 6.0
        } else {
            let s = math::sin((i as f64 - j as f64) * h / 2.0);
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            -sign / (2.0 * s * s)
        }
    })
}

/// Relative asymmetry `max|S - Sᵀ| / max|S|` of `S_ij = ⟨𝓛e_j, e_i⟩_{L²(μ̄⁻¹)}`.
///
/// `𝓛e_j` is formed at doubled truncation (exactly) and the weighted inner
/// products by quadrature. Without interaction `𝓛` is self-adjoint in this
/// inner product, so the defect is at rounding level.
pub fn weighted_symmetry_defect(m: &ModelSpec, mubar: &SpectralField) -> Result<f64> {
    let modes = m.modes();
    let wide = 2 * modes;
    let mw = m.resized(wide);
    let mu_w = mubar.resized(wide);
    let v = mw.mean_field_potential(&mu_w)?;
    let nq = quadrature_grid(wide);
    let weight = mubar.to_grid(nq)?.into_values();
    if let Some(&min) = weight.iter().find(|&&x| x <= 0.0) {
        return Err(Error::NonPositiveDensity { min });
    }
    let dim = 2 * modes;
    let mut basis = Vec::with_capacity(dim);
    let mut images = Vec::with_capacity(dim);
    let mut unit = alloc::vec![0.0; dim];
    for j in 0..dim {
        unit[j] = 1.0;
        let e = SpectralField::from_trig(modes, &unit, false)?;
        unit[j] = 0.0;
        let ew = e.resized(wide);
        let image = ew
            .differentiate()
            .differentiate()
            .scaled(m.sigma)
            .axpy(1.0, &div_flux(&ew, &v)?)?
            .axpy(1.0, &div_flux(&mu_w, &mw.w.convolve(&ew)?)?)?;
        basis.push(e.to_grid(nq)?.into_values());
        images.push(image.to_grid(nq)?.into_values());
    }
    let h = 2.0 * PI / nq as f64;
    let s = RMat::from_fn(dim, dim, |i, j| {
        basis[i]
            .iter()
            .zip(&images[j])
            .zip(&weight)
            .map(|((a, b), w)| a * b / w)
            .sum::<f64>()
            * h
    });
    let scale = s.amax();
    Ok((&s - s.transpose()).amax() / scale)
}
