//! Algebraic Riccati synthesis of the linear feedback `u = -BᵀΠ y`.
//!
//! `Π` solves `AᵀΠ + ΠA - ΠBBᵀΠ + M = 0` with `A = 𝓛 + δI`, so the closed
//! loop `𝓛 - BBᵀΠ` decays at least like `e^{-δt}`. The stable invariant
//! subspace of the Hamiltonian gives `Π` directly; Newton-Kleinman
//! iterations polish it, or compute it from scratch when the subspace method
//! fails.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DVector;

use crate::linalg::{self, complexify, orthonormal_basis, real_part, symmetric_min_eigenvalue, CMat, RMat};
use crate::operators::LinearizedSystem;
use crate::{Error, Result, C64};

/// How `Π` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AreMethod {
    /// Hamiltonian Schur method, possibly followed by Newton polishing.
    Schur,
    /// Newton-Kleinman from a partially stabilizing initial gain.
    NewtonKleinman,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreOptions {
    /// Bound on `‖AᵀΠ + ΠA - ΠBBᵀΠ + M‖_F / ‖M‖_F`.
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for AreOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_newton: 60,
        }
    }
}

/// A certified stabilizing feedback law.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackLaw {
    pub pi: RMat,
    /// `BᵀΠ` (`m × n`).
    pub gain: RMat,
    pub delta: f64,
    /// Relative Frobenius residual of the Riccati equation.
    pub residual: f64,
    /// `max Re λ(A - BBᵀΠ)`.
    pub closed_loop_abscissa: f64,
    pub method: AreMethod,
    pub newton_steps: usize,
}

impl FeedbackLaw {
    pub fn dim(&self) -> usize {
        self.pi.nrows()
    }

    pub fn controls(&self) -> usize {
        self.gain.nrows()
    }

    /// `u = -gain · a`.
    pub fn apply(&self, a: &[f64]) -> Result<Vec<f64>> {
        apply_feedback(self, a)
    }

    /// `Π` on the full space (constant mode first) plus `γ·𝟙𝟙ᵀ`, where `𝟙`
    /// holds the coordinates of the constant function 1.
    pub fn lift_to_full_space(&self, gamma: f64) -> RMat {
        let n = self.dim();
        let mut full = RMat::zeros(n + 1, n + 1);
        full.view_mut((1, 1), (n, n)).copy_from(&self.pi);
        full[(0, 0)] += gamma * 2.0 * core::f64::consts::PI;
        full
    }
}

/// `u = -gain · a`.
pub fn apply_feedback(law: &FeedbackLaw, a: &[f64]) -> Result<Vec<f64>> {
    if a.len() != law.dim() {
        return Err(Error::DimensionMismatch {
            expected: law.dim(),
            got: a.len(),
        });
    }
    let u = &law.gain * DVector::from_column_slice(a);
    Ok(u.iter().map(|x| -x).collect())
}

/// Relative residual `‖AᵀΠ + ΠA - ΠBBᵀΠ + M‖_F / ‖M‖_F` (absolute when `M = 0`).
pub fn are_residual(a: &RMat, b: &RMat, m: &RMat, pi: &RMat) -> f64 {
    let bp = b.transpose() * pi;
    let r = a.transpose() * pi + pi * a - bp.transpose() * &bp + m;
    let scale = m.norm();
    r.norm() / if scale > 0.0 { scale } else { 1.0 }
}

/// Solves the Riccati equation of a linearized system and certifies it.
pub fn solve_are(sys: &LinearizedSystem, opts: &AreOptions) -> Result<FeedbackLaw> {
    solve_are_matrices(&sys.a, &sys.b, &sys.m, sys.delta, opts)
}

/// [`solve_are`] on explicit matrices.
pub fn solve_are_matrices(a: &RMat, b: &RMat, m: &RMat, delta: f64, opts: &AreOptions) -> Result<FeedbackLaw> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || m.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if b.nrows() != n { b.nrows() } else { m.nrows() },
        });
    }
    if symmetric_min_eigenvalue(m) < -1e-12 * m.norm() || (m - m.transpose()).norm() > 1e-12 * m.norm() {
        return Err(Error::InvalidParameter {
            name: "M",
            reason: "state weight must be symmetric positive semidefinite".into(),
        });
    }
    let g = b * b.transpose();
    let mut failures: Vec<String> = Vec::new();

    match schur_route(a, b, &g, m, opts) {
        Ok((pi, steps)) => return certify(a, b, m, pi, delta, opts, AreMethod::Schur, steps),
        Err(e) => failures.push(format!("Schur method: {e}")),
    }
    let k0 = partial_stabilizing_gain(a, b)?;
    match newton_kleinman(a, b, m, k0, opts) {
        Ok((pi, steps)) => certify(a, b, m, pi, delta, opts, AreMethod::NewtonKleinman, steps),
        Err(e) => {
            failures.push(format!("Newton-Kleinman: {e}"));
            Err(Error::NoStabilizingSolution(failures.join("; ")))
        }
    }
}

fn schur_route(a: &RMat, b: &RMat, g: &RMat, m: &RMat, opts: &AreOptions) -> Result<(RMat, usize)> {
    let x = linalg::care(&complexify(a), &complexify(g), &complexify(m))?;
    let pi = symmetrize(&real_part(&x));
    if are_residual(a, b, m, &pi) <= opts.tol {
        return Ok((pi, 0));
    }
    let k0 = b.transpose() * &pi;
    newton_kleinman(a, b, m, k0, opts)
}

/// Newton-Kleinman: `(A - BK)ᵀX + X(A - BK) + M + KᵀK = 0`, `K ← BᵀX`.
fn newton_kleinman(a: &RMat, b: &RMat, m: &RMat, mut k: RMat, opts: &AreOptions) -> Result<(RMat, usize)> {
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for step in 1..=opts.max_newton {
        let f = a - b * &k;
        let s = linalg::complex_schur(&complexify(&f))?;
        let abscissa = s.eigenvalues().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        if abscissa >= 0.0 {
            return Err(Error::NotHurwitz { abscissa });
        }
        let q = m + k.transpose() * &k;
        let x = symmetrize(&real_part(&linalg::lyapunov_schur(&s, &complexify(&q))?));
        k = b.transpose() * &x;
        let res = are_residual(a, b, m, &x);
        if res <= opts.tol {
            return Ok((x, step));
        }
        if res < 0.5 * best {
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 3 {
                return Err(Error::NotConverged {
                    iterations: step,
                    defect: res,
                });
            }
        }
        best = best.min(res);
    }
    Err(Error::NotConverged {
        iterations: opts.max_newton,
        defect: best,
    })
}

/// A gain that moves every eigenvalue with `Re λ ≥ 0` into the left half
/// plane and leaves the others unchanged.
///
/// With `Q` a real orthonormal basis of the left invariant subspace of the
/// unstable eigenvalues, `Qᵀ A = S Qᵀ`. A unit-weight Riccati problem for
/// `(S, QᵀB)` gives `K_u`, and `K = K_u Qᵀ` makes `A - BK` block triangular
/// with the stabilized `S - QᵀB K_u` as one block.
pub fn partial_stabilizing_gain(a: &RMat, b: &RMat) -> Result<RMat> {
    let n = a.nrows();
    let e = linalg::eig(a)?;
    let unstable: Vec<usize> = (0..n).filter(|&i| e.values[i].re >= 0.0).collect();
    if unstable.is_empty() {
        return Ok(RMat::zeros(b.ncols(), n));
    }
    let mut cols = Vec::with_capacity(2 * unstable.len());
    for &i in &unstable {
        let w = e.left.column(i);
        cols.push(w.map(|z| C64::new(z.re, 0.0)));
        cols.push(w.map(|z| C64::new(z.im, 0.0)));
    }
    let stacked = CMat::from_fn(n, cols.len(), |r, c| cols[c][r]);
    let q = real_part(&orthonormal_basis(&stacked, 1e-8));
    let s = q.transpose() * a * &q;
    let bu = q.transpose() * b;
    let k = q.ncols();
    let p = linalg::care(
        &complexify(&s),
        &complexify(&(&bu * bu.transpose())),
        &CMat::identity(k, k),
    )?;
    let ku = bu.transpose() * real_part(&p);
    Ok(ku * q.transpose())
}

fn symmetrize(x: &RMat) -> RMat {
    (x + x.transpose()) * 0.5
}

#[allow(clippy::too_many_arguments)]
fn certify(
    a: &RMat,
    b: &RMat,
    m: &RMat,
    pi: RMat,
    delta: f64,
    opts: &AreOptions,
    method: AreMethod,
    newton_steps: usize,
) -> Result<FeedbackLaw> {
    let norm = pi.norm();
    let asym = (&pi - pi.transpose()).norm();
    if asym > 1e-10 * norm.max(1.0) {
        return Err(Error::CertificationFailed(format!("Π not symmetric: {asym:.3e}")));
    }
    let min_eig = symmetric_min_eigenvalue(&pi);
    if min_eig < -1e-10 * norm {
        return Err(Error::CertificationFailed(format!(
            "Π not positive semidefinite: λ_min = {min_eig:.3e}"
        )));
    }
    let residual = are_residual(a, b, m, &pi);
    if !(residual <= opts.tol) {
        return Err(Error::CertificationFailed(format!(
            "Riccati residual {residual:.3e} exceeds {:.1e}",
            opts.tol
        )));
    }
    let gain = b.transpose() * &pi;
    let closed = a - b * &gain;
    let closed_loop_abscissa = linalg::spectral_abscissa(&closed)?;
    if !(closed_loop_abscissa < 0.0) {
        return Err(Error::CertificationFailed(format!(
            "closed loop not stable: abscissa {closed_loop_abscissa:.3e}"
        )));
    }
    Ok(FeedbackLaw {
        pi,
        gain,
        delta,
        residual,
        closed_loop_abscissa,
        method,
        newton_steps,
    })
}

/// Solves `FᵀX + XF + Q = 0` for Hurwitz `F`.
pub fn lyapunov_solve(f: &RMat, q: &RMat) -> Result<RMat> {
    if !f.is_square() || q.shape() != f.shape() {
        return Err(Error::DimensionMismatch {
            expected: f.nrows(),
            got: q.nrows(),
        });
    }
    let s = linalg::complex_schur(&complexify(f))?;
    let abscissa = s.eigenvalues().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= 0.0 {
        return Err(Error::NotHurwitz { abscissa });
    }
    Ok(symmetrize(&real_part(&linalg::lyapunov_schur(&s, &complexify(q))?)))
}
