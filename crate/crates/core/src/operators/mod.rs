//! Galerkin matrices of the linearized dynamics and the analyses built on
//! them.
//!
//! Matrices act on coordinates in the orthonormal trigonometric basis
//! `cos x/√π, sin x/√π, …, cos Lx/√π, sin Lx/√π` of the zero-mean subspace
//! (dimension `2L`). The full-space variants prepend `1/√(2π)`. Every entry is
//! an exact truncated `L²` inner product: products of fields are formed alias
//! free and then projected, so the matrices equal the Galerkin projection of
//! the continuous operators.
//!
//! Around a stationary density `μ̄` with mean-field potential `v = V + W∗μ̄`,
//! the linearization is
//!
//! ```text
//! 𝓛y = σΔy + ∇·(y∇v) + ∇·(μ̄∇(W∗y)),
//! ```
//!
//! and a control `u` entering the potential as `Σ u_j α_j` contributes
//! `Σ u_j ∇·(μ̄∇α_j)` (the columns of `B`) and `Σ u_j ∇·(y∇α_j)` (the bilinear
//! operators `N_j`).

mod schrodinger;
mod spectrum;

use alloc::vec::Vec;

use crate::linalg::{complexify, CMat, RMat};
use crate::model::ModelSpec;
use crate::spectral::SpectralField;
use crate::stationary::{stationarity_residual, StationaryState};
use crate::{Error, Result, C64};

pub use schrodinger::{
    kernel_hs_norm, schrodinger_check, schrodinger_check_on_grid, schrodinger_grid, weighted_symmetry_defect,
    SchrodingerReport,
};
pub use spectrum::{
    eigenfunction_shapes, hautus_check, kuramoto_gap, solve_shape_from_eigenfunction, spectral_gap_sweep, spectrum,
    GapRow, HautusReport, ShapeSolution, SpectrumReport,
};

/// Coordinates in which the system matrices are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Basis {
    /// `e^{ikx}/√(2π)`, `k = -L..-1, 1..L`.
    ComplexExp,
    /// `cos kx/√π, sin kx/√π` interleaved, `k = 1..L`.
    RealTrig,
}

impl Basis {
    pub fn label(self) -> &'static str {
        match self {
            Basis::ComplexExp => "complex_exp",
            Basis::RealTrig => "real_trig",
        }
    }
}

/// Assembly parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssembleOptions {
    /// Target decay rate `δ ≥ 0`.
    pub delta: f64,
    /// State weight, `M = νI`.
    pub nu: f64,
    /// Largest accepted stationarity residual of the linearization point.
    pub stationarity_tol: f64,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self {
            delta: 1.0,
            nu: 1e6,
            stationarity_tol: 1e-8,
        }
    }
}

/// The blocks of the linearization, in the weak-form sign convention
/// `[X]_ik = ⟨·φ_k, ∇φ_i⟩`, so that `𝓛 ≈ -(L_V + σD + L_W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinBlocks {
    pub l_v: RMat,
    pub d: RMat,
    pub l_w: RMat,
}

/// Finite-dimensional control system `ẏ = A y + B u` around `μ̄`, with the
/// bilinear terms and the Riccati state weight.
#[derive(Debug, Clone)]
pub struct LinearizedSystem {
    pub modes: usize,
    pub delta: f64,
    pub nu: f64,
    /// Shifted operator `A = 𝓛 + δI` (`2L × 2L`).
    pub a: RMat,
    /// The linearization `𝓛` itself.
    pub a0: RMat,
    /// Columns `∇·(μ̄∇α_j)` (`2L × m`).
    pub b: RMat,
    /// Matrices of `y ↦ ∇·(y∇α_j)`.
    pub n_ops: Vec<RMat>,
    /// State weight `νI`.
    pub m: RMat,
    pub basis: Basis,
    pub mubar: SpectralField,
    pub model: ModelSpec,
    pub shapes: Vec<SpectralField>,
}

/// The same system in the complex exponential basis.
#[derive(Debug, Clone)]
pub struct ComplexSystem {
    pub a: CMat,
    pub b: CMat,
    pub n_ops: Vec<CMat>,
    pub m: CMat,
}

impl LinearizedSystem {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn controls(&self) -> usize {
        self.b.ncols()
    }

    /// Re-expresses every matrix in the complex exponential basis via the
    /// unitary [`trig_to_exp`].
    pub fn to_complex_basis(&self) -> ComplexSystem {
        let u = trig_to_exp(self.modes);
        let conj = |x: &RMat| &u * complexify(x) * u.adjoint();
        ComplexSystem {
            a: conj(&self.a),
            b: &u * complexify(&self.b),
            n_ops: self.n_ops.iter().map(conj).collect(),
            m: conj(&self.m),
        }
    }
}

/// Unitary map from real trigonometric coordinates to coordinates in
/// `e^{ikx}/√(2π)`, ordered `k = -L..-1, 1..L`.
pub fn trig_to_exp(modes: usize) -> CMat {
    let n = 2 * modes;
    let s = core::f64::consts::FRAC_1_SQRT_2;
    let mut u = CMat::zeros(n, n);
    for k in 1..=modes {
        let (cos_col, sin_col) = (2 * (k - 1), 2 * (k - 1) + 1);
        let neg = modes - k;
        let pos = modes + k - 1;
        u[(pos, cos_col)] = C64::new(s, 0.0);
        u[(pos, sin_col)] = C64::new(0.0, -s);
        u[(neg, cos_col)] = C64::new(s, 0.0);
        u[(neg, sin_col)] = C64::new(0.0, s);
    }
    u
}

/// The control shapes `sin(jx)/√(4π), cos(jx)/√(4π)` for `j = 1, 2, …`,
/// alternating, truncated to `count` functions.
pub fn default_shapes(count: usize, modes: usize) -> Vec<SpectralField> {
    let amp = 1.0 / libm::sqrt(4.0 * core::f64::consts::PI);
    (0..count)
        .map(|i| {
            let j = i / 2 + 1;
            if i % 2 == 0 {
                SpectralField::sine(modes, j, amp)
            } else {
                SpectralField::cosine(modes, j, amp)
            }
        })
        .collect()
}

/// Matrix of a linear map on fields, columns indexed by basis functions.
fn operator_matrix(
    modes: usize,
    with_mean: bool,
    op: impl Fn(&SpectralField) -> Result<SpectralField>,
) -> Result<RMat> {
    let n = 2 * modes + usize::from(with_mean);
    let mut mat = RMat::zeros(n, n);
    let mut unit = alloc::vec![0.0; n];
    for j in 0..n {
        unit[j] = 1.0;
        let e = SpectralField::from_trig(modes, &unit, with_mean)?;
        unit[j] = 0.0;
        let col = op(&e)?.to_trig(with_mean);
        for (i, v) in col.into_iter().enumerate() {
            mat[(i, j)] = v;
        }
    }
    Ok(mat)
}

/// `∇·(y ∇g)`, projected to the truncation of `y`.
fn div_flux(y: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    Ok(y.pointwise_product(&g.differentiate())?.differentiate())
}

fn blocks_impl(m: &ModelSpec, mubar: &SpectralField, with_mean: bool) -> Result<GalerkinBlocks> {
    let modes = m.modes();
    if mubar.modes() != modes {
        return Err(Error::ModeMismatch {
            left: mubar.modes(),
            right: modes,
        });
    }
    let wmu = m.w.convolve(mubar)?;
    let l_v = operator_matrix(modes, with_mean, |e| Ok(div_flux(e, &m.v)?.scaled(-1.0)))?;
    let d = operator_matrix(modes, with_mean, |e| Ok(e.differentiate().differentiate().scaled(-1.0)))?;
    let l_w = operator_matrix(modes, with_mean, |e| {
        let a = div_flux(e, &wmu)?;
        let b = div_flux(mubar, &m.w.convolve(e)?)?;
        Ok((&a + &b).scaled(-1.0))
    })?;
    Ok(GalerkinBlocks { l_v, d, l_w })
}

/// Blocks on the zero-mean subspace.
pub fn galerkin_blocks(m: &ModelSpec, mubar: &SpectralField) -> Result<GalerkinBlocks> {
    blocks_impl(m, mubar, false)
}

/// The unshifted linearization on the full space, constant mode first.
/// Its first row vanishes because the dynamics conserve mass.
pub fn full_space_operator(m: &ModelSpec, mubar: &SpectralField) -> Result<RMat> {
    let b = blocks_impl(m, mubar, true)?;
    Ok(-(b.l_v + b.d * m.sigma + b.l_w))
}

/// Assembles `A`, `B`, `N_j` and `M` around a certified stationary state.
pub fn assemble(
    m: &ModelSpec,
    ss: &StationaryState,
    shapes: &[SpectralField],
    opts: &AssembleOptions,
) -> Result<LinearizedSystem> {
    let modes = m.modes();
    if ss.modes() != modes {
        return Err(Error::ModeMismatch {
            left: ss.modes(),
            right: modes,
        });
    }
    if let Some(s) = shapes.iter().find(|s| s.modes() != modes) {
        return Err(Error::ModeMismatch {
            left: s.modes(),
            right: modes,
        });
    }
    if !(opts.delta >= 0.0 && opts.delta.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: alloc::format!("must be finite and nonnegative, got {}", opts.delta),
        });
    }
    if !(opts.nu > 0.0 && opts.nu.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "nu",
            reason: alloc::format!("must be finite and positive, got {}", opts.nu),
        });
    }
    let residual = stationarity_residual(&ss.mubar, m)?;
    if !(residual <= opts.stationarity_tol) {
        return Err(Error::NotStationary {
            residual,
            tol: opts.stationarity_tol,
        });
    }
    let mubar = &ss.mubar;
    let blocks = galerkin_blocks(m, mubar)?;
    let a0 = -(blocks.l_v + blocks.d * m.sigma + blocks.l_w);
    let n = 2 * modes;
    let a = &a0 + RMat::identity(n, n) * opts.delta;
    let mut b = RMat::zeros(n, shapes.len());
    for (j, alpha) in shapes.iter().enumerate() {
        let col = div_flux(mubar, alpha)?.to_trig(false);
        for (i, v) in col.into_iter().enumerate() {
            b[(i, j)] = v;
        }
    }
    let n_ops = shapes
        .iter()
        .map(|alpha| operator_matrix(modes, false, |e| div_flux(e, alpha)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearizedSystem {
        modes,
        delta: opts.delta,
        nu: opts.nu,
        a,
        a0,
        b,
        n_ops,
        m: RMat::identity(n, n) * opts.nu,
        basis: Basis::RealTrig,
        mubar: mubar.clone(),
        model: m.clone(),
        shapes: shapes.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_model, ModelParams};
    use crate::stationary::{kuramoto_synchronized, uniform_density};
    use core::f64::consts::PI;

    const L: usize = 16;

    fn uniform_state(m: &ModelSpec) -> StationaryState {
        StationaryState::from_density(m, uniform_density(m.modes())).unwrap()
    }

    #[test]
    fn kuramoto_uniform_is_diagonal_with_closed_form_entries() {
        let (k, sigma, delta) = (5.0, 0.5, 1.0);
        let m = make_model(&ModelParams::kuramoto(k, sigma), L).unwrap();
        let sys = assemble(
            &m,
            &uniform_state(&m),
            &default_shapes(4, L),
            &AssembleOptions::default(),
        )
        .unwrap();
        for i in 0..2 * L {
            let mode = (i / 2 + 1) as f64;
            let want = -sigma * mode * mode + if mode == 1.0 { k / 2.0 } else { 0.0 } + delta;
            for j in 0..2 * L {
                let expect = if i == j { want } else { 0.0 };
                assert!((sys.a[(i, j)] - expect).abs() < 1e-12, "({i},{j}) {}", sys.a[(i, j)]);
            }
        }
        assert_eq!(sys.m, RMat::identity(2 * L, 2 * L) * 1e6);
    }

    #[test]
    fn no_interaction_means_no_interaction_block() {
        let v = SpectralField::cosine(L, 2, 0.3);
        let m = ModelSpec::new("potential only", v, SpectralField::zeros(L), 0.4).unwrap();
        let blocks = galerkin_blocks(&m, &uniform_density(L)).unwrap();
        assert!(blocks.l_w.iter().all(|&x| x == 0.0));
        for i in 0..2 * L {
            let k = (i / 2 + 1) as f64;
            assert!((blocks.d[(i, i)] - k * k).abs() < 1e-12);
        }
    }

    #[test]
    fn potential_block_matches_quadrature() {
        // [L_V]_ik = ∫ e_k V' e_i' dx, checked by trapezoidal quadrature
        let v = &SpectralField::cosine(L, 2, 0.3) + &SpectralField::sine(L, 1, -0.2);
        let m = ModelSpec::new("v", v.clone(), SpectralField::zeros(L), 0.4).unwrap();
        let blocks = galerkin_blocks(&m, &uniform_density(L)).unwrap();
        let basis = |i: usize, x: f64| {
            let k = (i / 2 + 1) as f64;
            if i % 2 == 0 {
                libm::cos(k * x) / PI.sqrt()
            } else {
                libm::sin(k * x) / PI.sqrt()
            }
        };
        let dbasis = |i: usize, x: f64| {
            let k = (i / 2 + 1) as f64;
            if i % 2 == 0 {
                -k * libm::sin(k * x) / PI.sqrt()
            } else {
                k * libm::cos(k * x) / PI.sqrt()
            }
        };
        let dv = v.differentiate();
        let n = 512;
        for &(i, k) in &[(0usize, 0usize), (1, 3), (2, 0), (5, 2), (3, 7)] {
            let mut s = 0.0;
            for q in 0..n {
                let x = 2.0 * PI * q as f64 / n as f64;
                s += basis(k, x) * dv.eval(x).re * dbasis(i, x);
            }
            s *= 2.0 * PI / n as f64;
            assert!((blocks.l_v[(i, k)] - s).abs() < 1e-12, "({i},{k})");
        }
    }

    #[test]
    fn full_space_first_row_vanishes() {
        let m = make_model(&ModelParams::o2(1.0, 0.05, 0.75), L).unwrap();
        let mu = &uniform_density(L) + &SpectralField::cosine(L, 1, 0.05);
        let full = full_space_operator(&m, &mu).unwrap();
        assert!(full.row(0).iter().all(|&x| x.abs() < 1e-13));
    }

    #[test]
    fn control_columns_have_zero_mean_and_closed_form_at_uniform() {
        let m = make_model(&ModelParams::kuramoto(5.0, 0.5), L).unwrap();
        let sys = assemble(
            &m,
            &uniform_state(&m),
            &default_shapes(4, L),
            &AssembleOptions::default(),
        )
        .unwrap();
        // B_j = ∇·(μ̄∇α_j) = -j² α_j / (2π) for shapes of frequency j
        let amp = 1.0 / (4.0 * PI).sqrt();
        let expect = [(1usize, 1.0), (0, 1.0), (3, 4.0), (2, 4.0)];
        for (j, &(row, k2)) in expect.iter().enumerate() {
            for i in 0..2 * L {
                let want = if i == row {
                    -k2 * amp * PI.sqrt() / (2.0 * PI)
                } else {
                    0.0
                };
                assert!((sys.b[(i, j)] - want).abs() < 1e-14);
            }
        }
        for alpha in &sys.shapes {
            let col = div_flux(&sys.mubar, alpha).unwrap();
            assert!(col.coeff(0).norm() == 0.0);
        }
    }

    #[test]
    fn default_shape_coefficients() {
        let shapes = default_shapes(4, L);
        assert_eq!(shapes.len(), 4);
        let amp = 1.0 / (4.0 * PI).sqrt();
        assert!((shapes[0].coeff(1) - C64::new(0.0, -amp / 2.0)).norm() < 1e-16);
        assert!((shapes[0].coeff(-1) - C64::new(0.0, amp / 2.0)).norm() < 1e-16);
        assert!((shapes[3].eval(0.4).re - libm::cos(0.8) * amp).abs() < 1e-15);
        assert!(shapes.iter().all(|s| s.coeff(0).norm() == 0.0));
        let six = default_shapes(6, L);
        assert!((six[4].eval(0.3).re - libm::sin(0.9) * amp).abs() < 1e-15);
    }

    #[test]
    fn bilinear_operator_matches_direct_action() {
        let m = make_model(&ModelParams::kuramoto(2.0, 0.5), L).unwrap();
        let ss = StationaryState::from_density(&m, kuramoto_synchronized(2.0, 0.5, L, 0.0).unwrap()).unwrap();
        let shapes = default_shapes(3, L);
        let sys = assemble(&m, &ss, &shapes, &AssembleOptions::default()).unwrap();
        let y = &SpectralField::cosine(L, 3, 0.2) + &SpectralField::sine(L, 1, -0.1);
        let coords = nalgebra::DVector::from_vec(y.to_trig(false));
        for (j, alpha) in shapes.iter().enumerate() {
            let direct = div_flux(&y, alpha).unwrap().to_trig(false);
            let via = &sys.n_ops[j] * &coords;
            for i in 0..2 * L {
                assert!((direct[i] - via[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn complex_basis_is_unitarily_equivalent() {
        let u = trig_to_exp(L);
        assert!((u.adjoint() * &u - CMat::identity(2 * L, 2 * L)).norm() < 1e-14);
        let f = &SpectralField::cosine(L, 2, 0.7) + &SpectralField::sine(L, 3, 0.4);
        let trig = nalgebra::DVector::from_vec(f.to_trig(false).into_iter().map(|x| C64::new(x, 0.0)).collect());
        let exp = &u * trig;
        let root = (2.0 * PI).sqrt();
        assert!((exp[L + 1] - f.coeff(2) * root).norm() < 1e-14);
        assert!((exp[L - 3] - f.coeff(-3) * root).norm() < 1e-14);
        let m = make_model(&ModelParams::kuramoto(5.0, 0.5), L).unwrap();
        let sys = assemble(
            &m,
            &uniform_state(&m),
            &default_shapes(4, L),
            &AssembleOptions::default(),
        )
        .unwrap();
        let cs = sys.to_complex_basis();
        // still diagonal: the exponentials are eigenfunctions at the uniform state
        assert!((cs.a[(L, L)].re - (2.5 - 0.5 + 1.0)).abs() < 1e-12);
        assert!(cs.a[(L, L + 1)].norm() < 1e-12);
    }

    #[test]
    fn assemble_rejects_non_stationary_point() {
        let m = make_model(&ModelParams::kuramoto(2.0, 0.5), L).unwrap();
        let mu = &uniform_density(L) + &SpectralField::cosine(L, 1, 0.1);
        let ss = StationaryState::from_density(&m, mu).unwrap();
        let err = assemble(&m, &ss, &default_shapes(4, L), &AssembleOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotStationary { .. }));
        let m8 = make_model(&ModelParams::kuramoto(2.0, 0.5), 8).unwrap();
        let ss8 = uniform_state(&m8);
        assert!(matches!(
            assemble(&m, &ss8, &[], &AssembleOptions::default()),
            Err(Error::ModeMismatch { .. })
        ));
    }
}
