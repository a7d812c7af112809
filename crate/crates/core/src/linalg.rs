//! Dense complex linear algebra on top of `nalgebra`: Schur forms with
//! eigenvectors, Schur reordering, Lyapunov and continuous algebraic Riccati
//! equations.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{DMatrix, Schur};

use crate::{Error, Result, C64};

pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 100_000;

pub fn complexify(a: &RMat) -> CMat {
    a.map(|x| C64::new(x, 0.0))
}

pub fn real_part(a: &CMat) -> RMat {
    a.map(|z| z.re)
}

/// `‖a‖_F` for a real matrix.
pub fn frobenius(a: &RMat) -> f64 {
    a.norm()
}

/// `A = Q T Qᴴ` with `Q` unitary and `T` upper triangular.
#[derive(Debug, Clone)]
pub struct ComplexSchur {
    pub q: CMat,
    pub t: CMat,
}

/// Complex Schur decomposition.
///
/// The double-shift QR iteration in `nalgebra` has no exceptional shifts and
/// can stall on highly structured inputs (cyclic permutations, for example).
/// When that happens the matrix is rotated by a fixed unitary similarity and
/// decomposed again.
pub fn complex_schur(a: &CMat) -> Result<ComplexSchur> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if a.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::EigenFailure("matrix has non-finite entries".into()));
    }
    if let Some(s) = Schur::try_new(a.clone(), SCHUR_EPS, SCHUR_MAX_ITER) {
        let (q, t) = s.unpack();
        return Ok(ComplexSchur { q, t: clean_lower(t) });
    }
    let u = scrambling_unitary(a.nrows());
    let rotated = u.adjoint() * a * &u;
    let s = Schur::try_new(rotated, SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::EigenFailure(format!("QR iteration did not converge (n = {})", a.nrows())))?;
    let (q, t) = s.unpack();
    Ok(ComplexSchur {
        q: u * q,
        t: clean_lower(t),
    })
}

fn clean_lower(mut t: CMat) -> CMat {
    for j in 0..t.ncols() {
        for i in j + 1..t.nrows() {
            t[(i, j)] = C64::new(0.0, 0.0);
        }
    }
    t
}

/// Deterministic well-mixed unitary matrix (QR of a pseudo-random matrix).
fn scrambling_unitary(n: usize) -> CMat {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut next = || {
        // xorshift64*
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        let v = state.wrapping_mul(0x2545_F491_4F6C_DD1D);
        (v >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let m = CMat::from_fn(n, n, |_, _| C64::new(next(), next()));
    m.qr().q()
}

impl ComplexSchur {
    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        (0..self.dim()).map(|i| self.t[(i, i)]).collect()
    }

    /// Moves every diagonal entry satisfying `select` to the leading block,
    /// preserving the relative order within each group. Returns the size of
    /// the leading block.
    pub fn reorder(&mut self, select: impl Fn(C64) -> bool) -> usize {
        let n = self.dim();
        let mut head = 0;
        for j in 0..n {
            if select(self.t[(j, j)]) {
                let mut k = j;
                while k > head {
                    self.swap_adjacent(k - 1);
                    k -= 1;
                }
                head += 1;
            }
        }
        head
    }

    /// Exchanges diagonal entries `k` and `k + 1` by a Givens similarity.
    fn swap_adjacent(&mut self, k: usize) {
        let n = self.dim();
        let t11 = self.t[(k, k)];
        let t22 = self.t[(k + 1, k + 1)];
        let f = self.t[(k, k + 1)];
        let g = t22 - t11;
        let r = libm::sqrt(f.norm_sqr() + g.norm_sqr());
        if r == 0.0 {
            return;
        }
        // columns of G: eigenvector for t22 and its orthogonal complement
        let (g00, g10) = (f / r, g / r);
        let (g01, g11) = (-g10.conj(), g00.conj());
        for i in 0..=k + 1 {
            let (a, b) = (self.t[(i, k)], self.t[(i, k + 1)]);
            self.t[(i, k)] = a * g00 + b * g10;
            self.t[(i, k + 1)] = a * g01 + b * g11;
        }
        for j in k..n {
            let (a, b) = (self.t[(k, j)], self.t[(k + 1, j)]);
            self.t[(k, j)] = g00.conj() * a + g10.conj() * b;
            self.t[(k + 1, j)] = g01.conj() * a + g11.conj() * b;
        }
        for i in 0..n {
            let (a, b) = (self.q[(i, k)], self.q[(i, k + 1)]);
            self.q[(i, k)] = a * g00 + b * g10;
            self.q[(i, k + 1)] = a * g01 + b * g11;
        }
        self.t[(k + 1, k)] = C64::new(0.0, 0.0);
        self.t[(k, k)] = t22;
        self.t[(k + 1, k + 1)] = t11;
    }

    /// Unit right eigenvectors, one per diagonal entry of `T`.
    ///
    /// For (nearly) repeated eigenvalues the triangular solve perturbs tiny
    /// pivots to `smin`, so a Jordan block yields (nearly) parallel vectors
    /// rather than a division by zero.
    pub fn right_eigenvectors(&self) -> CMat {
        let n = self.dim();
        let t = &self.t;
        let smin = self.pivot_floor();
        let mut x = CMat::zeros(n, n);
        for k in 0..n {
            let lambda = t[(k, k)];
            x[(k, k)] = C64::new(1.0, 0.0);
            for i in (0..k).rev() {
                let mut s = t[(i, k)];
                for j in i + 1..k {
                    s += t[(i, j)] * x[(j, k)];
                }
                x[(i, k)] = -s / perturbed_pivot(t[(i, i)] - lambda, smin);
            }
        }
        normalize_columns(&self.q * x)
    }

    /// Unit left eigenvectors `w` with `wᴴ A = λ wᴴ`, one per diagonal entry.
    pub fn left_eigenvectors(&self) -> CMat {
        let n = self.dim();
        let t = &self.t;
        let smin = self.pivot_floor();
        // row vectors z with z T = λ z, stored as rows of z
        let mut z = CMat::zeros(n, n);
        for k in 0..n {
            let lambda = t[(k, k)];
            z[(k, k)] = C64::new(1.0, 0.0);
            for j in k + 1..n {
                let mut s = C64::new(0.0, 0.0);
                for i in k..j {
                    s += z[(k, i)] * t[(i, j)];
                }
                z[(k, j)] = -s / perturbed_pivot(t[(j, j)] - lambda, smin);
            }
        }
        // w = Q zᴴ
        normalize_columns(&self.q * z.adjoint())
    }

    fn pivot_floor(&self) -> f64 {
        let scale = self.t.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        (f64::EPSILON * scale).max(f64::MIN_POSITIVE / f64::EPSILON)
    }
}

fn perturbed_pivot(d: C64, smin: f64) -> C64 {
    if d.norm() < smin {
        C64::new(smin, 0.0)
    } else {
        d
    }
}

fn normalize_columns(mut v: CMat) -> CMat {
    for mut col in v.column_iter_mut() {
        let nrm = col.norm();
        if nrm > 0.0 {
            col /= C64::new(nrm, 0.0);
        }
    }
    v
}

/// Eigenvalues with unit right and left eigenvectors, sorted by descending
/// real part (ties: descending imaginary part, then original position).
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<C64>,
    pub right: CMat,
    pub left: CMat,
}

pub fn eig(a: &RMat) -> Result<Eigen> {
    eig_complex(&complexify(a))
}

pub fn eig_complex(a: &CMat) -> Result<Eigen> {
    let s = complex_schur(a)?;
    let values = s.eigenvalues();
    let order = descending_order(&values);
    let right = s.right_eigenvectors();
    let left = s.left_eigenvectors();
    let n = values.len();
    Ok(Eigen {
        values: order.iter().map(|&i| values[i]).collect(),
        right: CMat::from_fn(n, n, |r, c| right[(r, order[c])]),
        left: CMat::from_fn(n, n, |r, c| left[(r, order[c])]),
    })
}

/// Eigenvalues only, sorted like [`eig`].
pub fn eigenvalues(a: &RMat) -> Result<Vec<C64>> {
    let s = complex_schur(&complexify(a))?;
    let values = s.eigenvalues();
    Ok(descending_order(&values).into_iter().map(|i| values[i]).collect())
}

/// `max Re λ(A)`.
pub fn spectral_abscissa(a: &RMat) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(eigenvalues(a)?[0].re)
}

fn descending_order(values: &[C64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (values[i], values[j]);
        b.re.partial_cmp(&a.re)
            .unwrap_or(Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(Ordering::Equal))
            .then(i.cmp(&j))
    });
    idx
}

/// Solves `Aᴴ X + X A + Q = 0` by Bartels-Stewart on the complex Schur form.
pub fn lyapunov(a: &CMat, q: &CMat) -> Result<CMat> {
    lyapunov_schur(&complex_schur(a)?, q)
}

/// [`lyapunov`] with a precomputed Schur form of `A`.
pub fn lyapunov_schur(s: &ComplexSchur, q: &CMat) -> Result<CMat> {
    let n = s.dim();
    if q.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q.nrows(),
        });
    }
    let (u, t) = (&s.q, &s.t);
    let c = u.adjoint() * q * u;
    let scale = t.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(1.0);
    // Tᴴ Y + Y T = -C, solved entry by entry column-major
    let mut y = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let mut rhs = -c[(i, j)];
            for k in 0..i {
                rhs -= t[(k, i)].conj() * y[(k, j)];
            }
            for k in 0..j {
                rhs -= y[(i, k)] * t[(k, j)];
            }
            let pivot = t[(i, i)].conj() + t[(j, j)];
            if pivot.norm() <= 1e3 * f64::EPSILON * scale {
                return Err(Error::Singular(format!(
                    "Lyapunov operator is singular: λ_{i} + conj(λ_{j}) ≈ 0"
                )));
            }
            y[(i, j)] = rhs / pivot;
        }
    }
    let x = u * y * u.adjoint();
    Ok(hermitian_part(&x))
}

/// Stabilizing solution of `Aᴴ X + X A - X G X + Q = 0` from the stable
/// invariant subspace of the Hamiltonian `[[A, -G], [-Q, -Aᴴ]]`.
pub fn care(a: &CMat, g: &CMat, q: &CMat) -> Result<CMat> {
    let n = a.nrows();
    if g.shape() != (n, n) || q.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: g.nrows().max(q.nrows()),
        });
    }
    let mut h = CMat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.adjoint()));
    let hnorm = h.norm();
    let mut s = complex_schur(&h)?;
    let axis_tol = 1e-12 * hnorm.max(1.0);
    if let Some(l) = s.eigenvalues().into_iter().find(|l| l.re.abs() <= axis_tol) {
        return Err(Error::NoStabilizingSolution(format!(
            "Hamiltonian has an eigenvalue on the imaginary axis: {l}"
        )));
    }
    let stable = s.reorder(|l| l.re < 0.0);
    if stable != n {
        return Err(Error::NoStabilizingSolution(format!(
            "stable subspace has dimension {stable}, expected {n}"
        )));
    }
    let u11 = s.q.view((0, 0), (n, n)).clone_owned();
    let u21 = s.q.view((n, 0), (n, n)).clone_owned();
    let sv = singular_values(&u11);
    // columns of [U11; U21] are orthonormal, so an absolute threshold is meaningful
    if sv.last().copied().unwrap_or(0.0) <= 1e-13 {
        return Err(Error::NoStabilizingSolution(
            "stable subspace is not a graph over the state space".into(),
        ));
    }
    // X = U21 U11⁻¹, i.e. U11ᵀ Xᵀ = U21ᵀ
    let lu = u11.transpose().lu();
    let xt = lu
        .solve(&u21.transpose())
        .ok_or_else(|| Error::NoStabilizingSolution("U11 is singular".into()))?;
    Ok(hermitian_part(&xt.transpose()))
}

pub fn hermitian_part(x: &CMat) -> CMat {
    (x + x.adjoint()).map(|z| z * 0.5)
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn symmetric_min_eigenvalue(a: &RMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Singular values in descending order.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(Ordering::Equal));
    s
}

/// Orthonormal basis of the range of `a`, dropping directions whose singular
/// value is below `rtol · σ_max`.
pub fn orthonormal_basis(a: &CMat, rtol: f64) -> CMat {
    if a.ncols() == 0 || a.nrows() == 0 {
        return CMat::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rtol * smax && smax > 0.0)
        .collect();
    CMat::from_fn(a.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}
