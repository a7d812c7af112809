use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DVector;

use super::{assemble, div_flux, operator_matrix, AssembleOptions, LinearizedSystem};
use crate::linalg::{self, complexify, orthonormal_basis, singular_values, CMat, RMat};
use crate::model::{make_model, ModelParams, ModelSpec};
use crate::spectral::SpectralField;
use crate::stationary::{
    kuramoto_order_parameter, kuramoto_synchronized, solve_self_consistent, uniform_density, FixedPointOptions,
    StationaryState,
};
use crate::{Error, Result, C64};

/// Left eigenvector pairings below this are reported as ill-conditioned.
const PAIRING_FLOOR: f64 = 1e-8;

/// Eigen-decomposition of a system matrix.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Sorted by descending real part.
    pub eigenvalues: Vec<C64>,
    /// Whether `eigenvalues` are those of `𝓛` (true) or of `A = 𝓛 + δI`.
    pub unshifted: bool,
    pub delta: f64,
    /// Unit right eigenvectors (columns).
    pub right: CMat,
    /// Left eigenvectors scaled so that `leftᵢᴴ rightᵢ = 1`.
    pub left: CMat,
    /// `1/|wᴴv|` for unit `v`, `w`: the eigenvalue condition number.
    pub condition: Vec<f64>,
    /// `-max Re λ(𝓛)` over all eigenvalues except a translation mode.
    pub gap: f64,
    /// Index of the eigenvalue attributed to translation invariance, if any.
    pub goldstone: Option<usize>,
    pub warnings: Vec<String>,
}

pub fn spectrum(sys: &LinearizedSystem, unshifted: bool) -> Result<SpectrumReport> {
    let e = linalg::eig(&sys.a0)?;
    let n = e.values.len();
    let mut left = e.left.clone();
    let mut condition = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for i in 0..n {
        let pairing = left.column(i).dotc(&e.right.column(i));
        condition.push(1.0 / pairing.norm());
        if pairing.norm() < PAIRING_FLOOR {
            warnings.push(format!(
                "eigenvalue {} is ill-conditioned (|wᴴv| = {:.3e}); left vector left unnormalized",
                e.values[i],
                pairing.norm()
            ));
        } else {
            let scale = pairing.conj();
            left.column_mut(i).iter_mut().for_each(|z| *z /= scale);
        }
    }
    let goldstone = translation_mode(sys, &e.right, &e.values);
    let gap = -e
        .values
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != goldstone)
        .map(|(_, l)| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = if unshifted { 0.0 } else { sys.delta };
    Ok(SpectrumReport {
        eigenvalues: e.values.iter().map(|l| l + shift).collect(),
        unshifted,
        delta: sys.delta,
        right: e.right,
        left,
        condition,
        gap,
        goldstone,
        warnings,
    })
}

/// For a non-uniform state of a translation-invariant model, `μ̄'` is in the
/// kernel of `𝓛`. That eigenvalue is structural and is excluded from the gap.
fn translation_mode(sys: &LinearizedSystem, right: &CMat, values: &[C64]) -> Option<usize> {
    if !sys.model.has_flat_potential() {
        return None;
    }
    let g = DVector::from_vec(sys.mubar.differentiate().to_trig(false));
    let norm = g.norm();
    if norm <= 1e-10 || (&sys.a0 * &g).norm() > 1e-6 * norm {
        return None;
    }
    let g = complexify(&RMat::from_column_slice(g.len(), 1, g.as_slice())) / C64::new(norm, 0.0);
    (0..values.len())
        .map(|i| (i, right.column(i).dotc(&g.column(0)).norm()))
        .filter(|&(_, align)| align > 0.9)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Outcome of the Hautus controllability test on the modes to be stabilized.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct HautusReport {
    pub delta: f64,
    /// Number of eigenvalues of `𝓛` with `Re λ ≥ -δ`.
    pub unstable_count: usize,
    pub eigenvalues: Vec<C64>,
    /// `Bᴴw` for each unit left eigenvector `w`.
    pub projections: Vec<Vec<C64>>,
    pub norms: Vec<f64>,
    /// Smallest singular value of `Bᴴ W` over each cluster of (nearly)
    /// repeated eigenvalues, `W` an orthonormal basis of its left eigenvectors.
    pub cluster_margins: Vec<f64>,
    /// `1e-8 · ‖B‖_F`.
    pub threshold: f64,
    pub pass: bool,
    pub warnings: Vec<String>,
}

pub fn hautus_check(sys: &LinearizedSystem) -> Result<HautusReport> {
    let e = linalg::eig(&sys.a0)?;
    let delta = sys.delta;
    let unstable: Vec<usize> = (0..e.values.len()).filter(|&i| e.values[i].re >= -delta).collect();
    let b = complexify(&sys.b);
    let threshold = 1e-8 * sys.b.norm();
    let mut warnings = Vec::new();
    let mut projections = Vec::with_capacity(unstable.len());
    let mut norms = Vec::with_capacity(unstable.len());
    for &i in &unstable {
        let p = b.adjoint() * e.left.column(i);
        norms.push(p.norm());
        projections.push(p.iter().copied().collect());
    }
    let mut cluster_margins = Vec::new();
    for cluster in clusters(&unstable, &e.values) {
        let lambda = e.values[cluster[0]];
        let pick = |m: &CMat| CMat::from_fn(m.nrows(), cluster.len(), |r, c| m[(r, cluster[c])]);
        let w = orthonormal_basis(&pick(&e.left), 1e-6);
        let v = orthonormal_basis(&pick(&e.right), 1e-6);
        if v.ncols() < cluster.len() {
            warnings.push(format!(
                "eigenvalue {lambda} has algebraic multiplicity {} but only {} independent eigenvectors (Jordan block)",
                cluster.len(),
                v.ncols()
            ));
        }
        let r = w.ncols();
        let sv = singular_values(&(b.adjoint() * w));
        cluster_margins.push(if sv.len() < r { 0.0 } else { sv[r - 1] });
    }
    let pass = norms.iter().chain(&cluster_margins).all(|&x| x > threshold);
    if !pass {
        warnings.push("some mode with Re λ ≥ -δ is not excited by any control shape".into());
    }
    Ok(HautusReport {
        delta,
        unstable_count: unstable.len(),
        eigenvalues: unstable.iter().map(|&i| e.values[i]).collect(),
        projections,
        norms,
        cluster_margins,
        threshold,
        pass,
        warnings,
    })
}

/// Groups indices whose eigenvalues agree to `1e-8·max(1, |λ|)`.
fn clusters(indices: &[usize], values: &[C64]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for &i in indices {
        let li = values[i];
        match out
            .iter_mut()
            .find(|c| c.iter().any(|&j| (values[j] - li).norm() <= 1e-8 * li.norm().max(1.0)))
        {
            Some(c) => c.push(i),
            None => out.push(alloc::vec![i]),
        }
    }
    out
}

/// A control shape recovered from a prescribed control column.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSolution {
    pub alpha: SpectralField,
    /// `‖∇·(μ̄∇α) - ψ‖_{L²}` with the product evaluated untruncated.
    pub defect: f64,
}

/// Solves `∇·(μ̄∇α) = ψ` for a zero-mean `α`.
pub fn solve_shape_from_eigenfunction(mubar: &SpectralField, psi: &SpectralField) -> Result<ShapeSolution> {
    let modes = mubar.modes();
    if psi.modes() != modes {
        return Err(Error::ModeMismatch {
            left: psi.modes(),
            right: modes,
        });
    }
    let mean = psi.coeff(0).norm();
    if mean > 1e-12 * psi.l2_norm().max(1.0) {
        return Err(Error::NonZeroMean { mean });
    }
    let g = operator_matrix(modes, false, |e| div_flux(mubar, e))?;
    let rhs = DVector::from_vec(psi.to_trig(false));
    let sol = g
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("weighted Laplacian is singular on zero-mean modes".into()))?;
    let alpha = SpectralField::from_trig(modes, sol.as_slice(), false)?;
    let wide = 2 * modes;
    let lhs = div_flux(&mubar.resized(wide), &alpha.resized(wide))?;
    let defect = (&lhs - &psi.resized(wide)).l2_norm();
    Ok(ShapeSolution { alpha, defect })
}

/// Shapes whose control columns span the left eigenvectors of every mode
/// with `Re λ ≥ -δ`, so that the Hautus test holds by construction.
pub fn eigenfunction_shapes(m: &ModelSpec, ss: &StationaryState, opts: &AssembleOptions) -> Result<Vec<SpectralField>> {
    let sys = assemble(m, ss, &[], opts)?;
    let e = linalg::eig(&sys.a0)?;
    let n = sys.dim();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for i in (0..n).filter(|&i| e.values[i].re >= -opts.delta) {
        let w = e.left.column(i);
        cols.push(w.map(|z| z.re));
        cols.push(w.map(|z| z.im));
    }
    if cols.is_empty() {
        return Ok(Vec::new());
    }
    let stacked = CMat::from_fn(n, cols.len(), |r, c| C64::new(cols[c][r], 0.0));
    let basis = orthonormal_basis(&stacked, 1e-8);
    (0..basis.ncols())
        .map(|j| {
            let coords: Vec<f64> = basis.column(j).iter().map(|z| z.re).collect();
            let psi = SpectralField::from_trig(m.modes(), &coords, false)?;
            Ok(solve_shape_from_eigenfunction(&ss.mubar, &psi)?.alpha)
        })
        .collect()
}

/// One row of a Kuramoto spectral-gap sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GapRow {
    pub coupling: f64,
    pub sigma: f64,
    /// Order parameter of the linearization point (0 for the uniform state).
    pub order_parameter: f64,
    pub gap: f64,
    pub residual: f64,
}

/// Spectral gap of the Kuramoto linearization at the synchronized state
/// (`K > 2σ`) or the uniform state (`K ≤ 2σ`).
pub fn kuramoto_gap(coupling: f64, sigma: f64, modes: usize) -> Result<GapRow> {
    let m = make_model(&ModelParams::kuramoto(coupling, sigma), modes)?;
    let r = kuramoto_order_parameter(coupling, sigma);
    let ss = if r == 0.0 {
        StationaryState::from_density(&m, uniform_density(modes))?
    } else {
        let guess = kuramoto_synchronized(coupling, sigma, modes, 0.0)?;
        solve_self_consistent(&m, &guess, &FixedPointOptions::default())?.ensure_converged()?
    };
    let sys = assemble(&m, &ss, &[], &AssembleOptions::default())?;
    let report = spectrum(&sys, true)?;
    Ok(GapRow {
        coupling,
        sigma,
        order_parameter: r,
        gap: report.gap,
        residual: ss.residual,
    })
}

/// [`kuramoto_gap`] over a list of couplings.
pub fn spectral_gap_sweep(couplings: &[f64], sigma: f64, modes: usize) -> Result<Vec<GapRow>> {
    couplings.iter().map(|&k| kuramoto_gap(k, sigma, modes)).collect()
}
