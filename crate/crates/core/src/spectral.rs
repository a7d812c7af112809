//! Truncated Fourier fields on the circle and the exact algebra the Galerkin
//! scheme is built from.
//!
//! A [`SpectralField`] with truncation `L` stores the plain coefficients of
//! `f(x) = Σ_{|k|≤L} c_k e^{ikx}`. Operator assembly works in the real
//! orthonormal basis `{cos kx/√π, sin kx/√π}` (optionally preceded by the
//! constant `1/√(2π)`); [`SpectralField::to_trig`] and
//! [`SpectralField::from_trig`] convert between the two.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Neg, Sub};

use crate::fft::FftPlan;
use crate::math;
use crate::{Error, Result, C64};

const SQRT_PI: f64 = 1.772_453_850_905_516;
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Default truncation order.
pub const DEFAULT_MODES: usize = 64;

/// Smallest power-of-two grid that resolves `2L+1` modes without aliasing
/// under one quadratic product.
pub fn default_grid(modes: usize) -> usize {
    (2 * (2 * modes + 1)).next_power_of_two().max(8)
}

/// Truncated Fourier representation of a periodic function on `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    modes: usize,
    coeffs: Vec<C64>,
    is_real: bool,
}

/// Samples of a real periodic function on the uniform grid `x_j = 2πj/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    /// Wraps grid samples. `n` must be a power of two and all values finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: alloc::format!("grid size {n} is not a power of two"),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: alloc::format!("non-finite grid value {v}"),
            });
        }
        Ok(Self { values })
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(nodes(n).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Trapezoid rule for `∫ g dx` over one period.
    pub fn integrate(&self) -> f64 {
        2.0 * PI / self.len() as f64 * self.values.iter().sum::<f64>()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Discrete Fourier coefficients truncated to `|k| ≤ modes`.
    pub fn to_coeffs(&self, modes: usize) -> Result<SpectralField> {
        let n = self.len();
        if n < 2 * modes + 1 {
            return Err(Error::GridTooSmall {
                n,
                modes,
                needed: (2 * modes + 1).next_power_of_two(),
            });
        }
        let plan = FftPlan::new(n);
        let mut buf: Vec<C64> = self.values.iter().map(|&v| C64::new(v, 0.0)).collect();
        plan.forward(&mut buf);
        let mut f = SpectralField::from_buffer(&buf, modes, 1.0 / n as f64);
        f.symmetrize();
        Ok(f)
    }
}

/// Grid nodes `2πj/n`.
pub fn nodes(n: usize) -> impl Iterator<Item = f64> + Clone {
    (0..n).map(move |j| 2.0 * PI * j as f64 / n as f64)
}

impl SpectralField {
    /// The zero field.
    pub fn zeros(modes: usize) -> Self {
        Self {
            modes,
            coeffs: vec![C64::new(0.0, 0.0); 2 * modes + 1],
            is_real: true,
        }
    }

    /// Builds a field from `c_{-L}, …, c_L`. The real flag is set when the
    /// coefficients are conjugate-symmetric.
    pub fn from_coeffs(modes: usize, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != 2 * modes + 1 {
            return Err(Error::DimensionMismatch {
                expected: 2 * modes + 1,
                got: coeffs.len(),
            });
        }
        let mut f = Self {
            modes,
            coeffs,
            is_real: false,
        };
        let scale = f.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let asym = (0..=modes as i64)
            .map(|k| (f.coeff(k) - f.coeff(-k).conj()).norm())
            .fold(0.0, f64::max);
        f.is_real = asym <= 1e-14 * scale.max(f64::MIN_POSITIVE);
        if f.is_real {
            f.symmetrize();
        }
        Ok(f)
    }

    /// Builds a field from a coefficient rule `k ↦ c_k`.
    pub fn from_fn(modes: usize, rule: impl Fn(i64) -> C64) -> Self {
        let coeffs = (-(modes as i64)..=modes as i64).map(rule).collect();
        Self::from_coeffs(modes, coeffs).expect("length is 2L+1 by construction")
    }

    pub fn constant(modes: usize, value: f64) -> Self {
        let mut f = Self::zeros(modes);
        f.coeffs[modes] = C64::new(value, 0.0);
        f
    }

    /// `amplitude · cos(kx)`.
    pub fn cosine(modes: usize, k: usize, amplitude: f64) -> Self {
        let mut f = Self::zeros(modes);
        if k == 0 {
            f.coeffs[modes] = C64::new(amplitude, 0.0);
        } else if k <= modes {
            f.coeffs[modes + k] = C64::new(amplitude / 2.0, 0.0);
            f.coeffs[modes - k] = C64::new(amplitude / 2.0, 0.0);
        }
        f
    }

    /// `amplitude · sin(kx)`.
    pub fn sine(modes: usize, k: usize, amplitude: f64) -> Self {
        let mut f = Self::zeros(modes);
        if k > 0 && k <= modes {
            f.coeffs[modes + k] = C64::new(0.0, -amplitude / 2.0);
            f.coeffs[modes - k] = C64::new(0.0, amplitude / 2.0);
        }
        f
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn is_real(&self) -> bool {
        self.is_real
    }

    /// Coefficients ordered `k = -L..=L`.
    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// `c_k`, zero outside the truncation.
    pub fn coeff(&self, k: i64) -> C64 {
        if k.unsigned_abs() as usize > self.modes {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + self.modes as i64) as usize]
        }
    }

    /// `∫ f dx = 2π c_0`.
    pub fn mass(&self) -> f64 {
        2.0 * PI * self.coeffs[self.modes].re
    }

    /// Plain L² norm by Parseval.
    pub fn l2_norm(&self) -> f64 {
        math::sqrt(2.0 * PI * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>())
    }

    /// Largest coefficient modulus.
    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Point evaluation of the truncated series.
    pub fn eval(&self, x: f64) -> C64 {
        (-(self.modes as i64)..=self.modes as i64)
            .map(|k| {
                let th = k as f64 * x;
                self.coeff(k) * C64::new(math::cos(th), math::sin(th))
            })
            .sum()
    }

    /// Samples on an `n`-point grid. For fields that are not real this keeps
    /// the real part; see [`SpectralField::to_grid_complex`].
    pub fn to_grid(&self, n: usize) -> Result<GridFunction> {
        let values = self.to_grid_complex(n)?.into_iter().map(|c| c.re).collect();
        GridFunction::new(values)
    }

    pub fn to_grid_complex(&self, n: usize) -> Result<Vec<C64>> {
        if !n.is_power_of_two() || n < 2 * self.modes + 1 {
            return Err(Error::GridTooSmall {
                n,
                modes: self.modes,
                needed: (2 * self.modes + 1).next_power_of_two(),
            });
        }
        let plan = FftPlan::new(n);
        let mut buf = self.to_buffer(n);
        plan.inverse(&mut buf);
        Ok(buf)
    }

    /// Periodic convolution `(f∗g)(x) = ∫ f(x-x') g(x') dx'`, i.e.
    /// `(f∗g)_k = 2π f_k g_k`.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        self.check_modes(other)?;
        Ok(Self {
            modes: self.modes,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a * b * (2.0 * PI))
                .collect(),
            is_real: self.is_real && other.is_real,
        })
    }

    /// `d/dx`, i.e. `c_k ↦ ik c_k`.
    pub fn differentiate(&self) -> Self {
        let l = self.modes as i64;
        Self {
            modes: self.modes,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * C64::new(0.0, (i as i64 - l) as f64))
                .collect(),
            is_real: self.is_real,
        }
    }

    /// `⟨f, g⟩ = ∫ f ḡ dx = 2π Σ_k f_k conj(g_k)`. The second argument is
    /// conjugated; for real fields this is the plain L² product.
    pub fn inner_product(&self, other: &Self) -> Result<C64> {
        self.check_modes(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b.conj())
            .sum::<C64>()
            * (2.0 * PI))
    }

    /// Coefficients `|k| ≤ L` of `f·g`, exact (alias-free) by 3/2-rule padding.
    pub fn pointwise_product(&self, other: &Self) -> Result<Self> {
        self.check_modes(other)?;
        let plan = FftPlan::new(product_grid(self.modes));
        Ok(self.product_with(other, &plan))
    }

    pub(crate) fn product_with(&self, other: &Self, plan: &FftPlan) -> Self {
        let m = plan.len();
        let mut a = self.to_buffer(m);
        let mut b = other.to_buffer(m);
        plan.inverse(&mut a);
        plan.inverse(&mut b);
        for (x, y) in a.iter_mut().zip(&b) {
            *x *= y;
        }
        plan.forward(&mut a);
        let mut out = Self::from_buffer(&a, self.modes, 1.0 / m as f64);
        out.is_real = self.is_real && other.is_real;
        if out.is_real {
            out.symmetrize();
        }
        out
    }

    /// Removes the constant mode.
    pub fn project_zero_mean(&self) -> Self {
        let mut f = self.clone();
        f.coeffs[self.modes] = C64::new(0.0, 0.0);
        f
    }

    /// Zero-pads or truncates to a new truncation order.
    pub fn resized(&self, modes: usize) -> Self {
        let mut out = Self::zeros(modes);
        let keep = modes.min(self.modes) as i64;
        for k in -keep..=keep {
            out.coeffs[(k + modes as i64) as usize] = self.coeff(k);
        }
        out.is_real = self.is_real;
        out
    }

    /// The translate `x ↦ f(x - shift)`.
    pub fn translated(&self, shift: f64) -> Self {
        let l = self.modes as i64;
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            let th = -((i as i64 - l) as f64) * shift;
            *c *= C64::new(math::cos(th), math::sin(th));
        }
        out
    }

    /// Real-linear combination `self + s·other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Result<Self> {
        self.check_modes(other)?;
        Ok(Self {
            modes: self.modes,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b * s).collect(),
            is_real: self.is_real && other.is_real,
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            modes: self.modes,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            is_real: self.is_real,
        }
    }

    /// Coordinates in the orthonormal trigonometric basis, ordered
    /// `[1/√(2π)]?, cos x/√π, sin x/√π, cos 2x/√π, …`. Complex for fields
    /// that are not real.
    pub fn to_trig_complex(&self, with_mean: bool) -> Vec<C64> {
        let l = self.modes;
        let mut out = Vec::with_capacity(2 * l + usize::from(with_mean));
        if with_mean {
            out.push(self.coeff(0) * SQRT_2PI);
        }
        let i = C64::new(0.0, 1.0);
        for k in 1..=l as i64 {
            let (p, m) = (self.coeff(k), self.coeff(-k));
            out.push((p + m) * SQRT_PI);
            out.push(i * (p - m) * SQRT_PI);
        }
        out
    }

    /// Real trigonometric coordinates (imaginary parts dropped).
    pub fn to_trig(&self, with_mean: bool) -> Vec<f64> {
        self.to_trig_complex(with_mean).into_iter().map(|c| c.re).collect()
    }

    /// Inverse of [`SpectralField::to_trig_complex`].
    pub fn from_trig_complex(modes: usize, coords: &[C64], with_mean: bool) -> Result<Self> {
        let offset = usize::from(with_mean);
        if coords.len() != 2 * modes + offset {
            return Err(Error::DimensionMismatch {
                expected: 2 * modes + offset,
                got: coords.len(),
            });
        }
        let mut f = Self::zeros(modes);
        if with_mean {
            f.coeffs[modes] = coords[0] / SQRT_2PI;
        }
        let i = C64::new(0.0, 1.0);
        for k in 1..=modes {
            let (ac, as_) = (coords[offset + 2 * (k - 1)], coords[offset + 2 * (k - 1) + 1]);
            f.coeffs[modes + k] = (ac - i * as_) / (2.0 * SQRT_PI);
            f.coeffs[modes - k] = (ac + i * as_) / (2.0 * SQRT_PI);
        }
        let real = coords.iter().all(|c| c.im == 0.0);
        f.is_real = real;
        Ok(f)
    }

    pub fn from_trig(modes: usize, coords: &[f64], with_mean: bool) -> Result<Self> {
        let c: Vec<C64> = coords.iter().map(|&v| C64::new(v, 0.0)).collect();
        Self::from_trig_complex(modes, &c, with_mean)
    }

    fn check_modes(&self, other: &Self) -> Result<()> {
        if self.modes == other.modes {
            Ok(())
        } else {
            Err(Error::ModeMismatch {
                left: self.modes,
                right: other.modes,
            })
        }
    }

    /// Enforces `c_{-k} = conj(c_k)` exactly and marks the field real.
    fn symmetrize(&mut self) {
        let l = self.modes;
        self.coeffs[l].im = 0.0;
        for k in 1..=l {
            let avg = (self.coeffs[l + k] + self.coeffs[l - k].conj()) * 0.5;
            self.coeffs[l + k] = avg;
            self.coeffs[l - k] = avg.conj();
        }
        self.is_real = true;
    }

    pub(crate) fn to_buffer(&self, m: usize) -> Vec<C64> {
        let mut buf = vec![C64::new(0.0, 0.0); m];
        let l = self.modes as i64;
        for k in -l..=l {
            buf[k.rem_euclid(m as i64) as usize] = self.coeff(k);
        }
        buf
    }

    pub(crate) fn from_buffer(buf: &[C64], modes: usize, scale: f64) -> Self {
        let m = buf.len() as i64;
        let l = modes as i64;
        let coeffs = (-l..=l).map(|k| buf[k.rem_euclid(m) as usize] * scale).collect();
        Self {
            modes,
            coeffs,
            is_real: false,
        }
    }
}

/// Padded grid size for alias-free quadratic products at truncation `L`.
pub(crate) fn product_grid(modes: usize) -> usize {
    (3 * modes + 1).next_power_of_two().max(4)
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: Self) -> SpectralField {
        self.axpy(1.0, rhs).expect("mode mismatch in field addition")
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: Self) -> SpectralField {
        self.axpy(-1.0, rhs).expect("mode mismatch in field subtraction")
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scaled(rhs)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scaled(-1.0)
    }
}
