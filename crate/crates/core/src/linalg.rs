//! Dense complex linear algebra on top of `nalgebra`: Schur-based eigensystems with
//! left/right eigenvectors, singular values, log-determinants and small Hermitian
//! matrix functions.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Eigenvalues with optional right and left eigenvectors (unit 2-norm columns).
///
/// Column `k` of `right` satisfies `A x = λ_k x`; column `k` of `left` satisfies
/// `y^* A = λ_k y^*`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub right: Option<CMatrix>,
    pub left: Option<CMatrix>,
}

impl EigenDecomposition {
    /// Eigenvalue condition numbers `‖x‖‖y‖ / |y^* x|`; requires both vector sets.
    pub fn condition_numbers(&self) -> Option<Vec<f64>> {
        let (r, l) = (self.right.as_ref()?, self.left.as_ref()?);
        Some(
            (0..self.values.len())
                .map(|k| {
                    let dot = l.column(k).dotc(&r.column(k)).norm();
                    if dot == 0.0 {
                        f64::INFINITY
                    } else {
                        1.0 / dot
                    }
                })
                .collect(),
        )
    }

    /// Reorders eigenvalues (and vectors) by real part, then imaginary part.
    pub fn sort_by_real_then_imag(&mut self) {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| {
            let (za, zb) = (self.values[a], self.values[b]);
            za.re.total_cmp(&zb.re).then(za.im.total_cmp(&zb.im))
        });
        self.values = order.iter().map(|&k| self.values[k]).collect();
        let permute = |m: &CMatrix| CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, order[j])]);
        self.right = self.right.as_ref().map(permute);
        self.left = self.left.as_ref().map(permute);
    }
}

fn schur(m: CMatrix) -> Result<(CMatrix, CMatrix)> {
    if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Eigensolver("matrix has non-finite entries".into()));
    }
    let n = m.nrows();
    let frob = m.norm();
    nalgebra::linalg::Schur::try_new(m, f64::EPSILON, 200 * n.max(10))
        .map(|s| s.unpack())
        .ok_or_else(|| {
            Error::Eigensolver(format!(
                "complex Schur iteration did not converge (dimension {n}, Frobenius norm {frob:.3e})"
            ))
        })
}

/// Eigenvalues of a general square complex matrix (Schur order, unsorted).
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let (_, t) = schur(m.clone())?;
    Ok((0..t.nrows()).map(|k| t[(k, k)]).collect())
}

/// Full eigen-decomposition via the complex Schur form `A = Q T Q^*`.
pub fn eigen(m: &CMatrix, want_right: bool, want_left: bool) -> Result<EigenDecomposition> {
    let n = m.nrows();
    if n == 0 {
        return Ok(EigenDecomposition {
            values: Vec::new(),
            right: want_right.then(|| CMatrix::zeros(0, 0)),
            left: want_left.then(|| CMatrix::zeros(0, 0)),
        });
    }
    let (q, t) = schur(m.clone())?;
    let values: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
    let smin = (f64::EPSILON * t.norm()).max(f64::MIN_POSITIVE * 1e10);
    let right = want_right.then(|| {
        let mut y = CMatrix::zeros(n, n);
        for k in 0..n {
            upper_triangular_eigvec(&t, k, smin, &mut y);
        }
        normalize_columns(&q * y)
    });
    let left = want_left.then(|| {
        let mut u = CMatrix::zeros(n, n);
        for k in 0..n {
            upper_triangular_left_eigvec(&t, k, smin, &mut u);
        }
        normalize_columns(&q * u)
    });
    Ok(EigenDecomposition {
        values,
        right,
        left,
    })
}

// Back substitution for (T - t_kk) y = 0 with y_k = 1, y_j = 0 for j > k.
fn upper_triangular_eigvec(t: &CMatrix, k: usize, smin: f64, y: &mut CMatrix) {
    let lambda = t[(k, k)];
    y[(k, k)] = ONE;
    for j in (0..k).rev() {
        let mut acc = ZERO;
        for l in (j + 1)..=k {
            acc += t[(j, l)] * y[(l, k)];
        }
        let mut denom = t[(j, j)] - lambda;
        if denom.norm() < smin {
            denom = C64::new(smin, 0.0);
        }
        y[(j, k)] = -acc / denom;
        if y[(j, k)].norm() > 1e150 {
            let scale = 1.0 / y[(j, k)].norm();
            for l in j..=k {
                y[(l, k)] *= scale;
            }
        }
    }
}

// Forward substitution for T^* u = conj(t_kk) u with u_k = 1, u_j = 0 for j < k.
fn upper_triangular_left_eigvec(t: &CMatrix, k: usize, smin: f64, u: &mut CMatrix) {
    let n = t.nrows();
    let lambda = t[(k, k)].conj();
    u[(k, k)] = ONE;
    for j in (k + 1)..n {
        let mut acc = ZERO;
        for l in k..j {
            acc += t[(l, j)].conj() * u[(l, k)];
        }
        let mut denom = t[(j, j)].conj() - lambda;
        if denom.norm() < smin {
            denom = C64::new(smin, 0.0);
        }
        u[(j, k)] = -acc / denom;
        if u[(j, k)].norm() > 1e150 {
            let scale = 1.0 / u[(j, k)].norm();
            for l in k..=j {
                u[(l, k)] *= scale;
            }
        }
    }
}

fn normalize_columns(mut m: CMatrix) -> CMatrix {
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col.unscale_mut(norm);
        }
    }
    m
}

/// Singular values in nonincreasing order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// `ln det(A)` as `ln|det A| + i arg det A` (argument not reduced mod 2π).
/// Returns `-inf` real part for singular matrices.
pub fn log_det(m: &CMatrix) -> C64 {
    let n = m.nrows();
    if n == 0 {
        return ZERO;
    }
    let (p, _, u) = m.clone().lu().unpack();
    let mut acc = ZERO;
    for i in 0..n {
        let d = u[(i, i)];
        if d == ZERO {
            return C64::new(f64::NEG_INFINITY, 0.0);
        }
        acc += d.ln();
    }
    if p.determinant::<f64>() < 0.0 {
        acc += C64::new(0.0, std::f64::consts::PI);
    }
    acc
}

/// Applies `f` to the eigenvalues of a Hermitian matrix.
pub fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let vals = eig.eigenvalues.map(|v| C64::new(f(v), 0.0));
    &eig.eigenvectors * CMatrix::from_diagonal(&vals) * eig.eigenvectors.adjoint()
}

/// Right polar decomposition `A = U P` with `P = (A^*A)^{1/2}` and `U` unitary.
pub fn polar_right(m: &CMatrix) -> (CMatrix, CMatrix) {
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let s = CMatrix::from_diagonal(&svd.singular_values.map(|v| C64::new(v, 0.0)));
    let unitary = &u * &vt;
    let p = vt.adjoint() * s * &vt;
    (unitary, p)
}

/// Left polar decomposition `A = P U` with `P = (A A^*)^{1/2}`.
pub fn polar_left(m: &CMatrix) -> (CMatrix, CMatrix) {
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let s = CMatrix::from_diagonal(&svd.singular_values.map(|v| C64::new(v, 0.0)));
    let unitary = &u * &vt;
    let p = &u * s * u.adjoint();
    (p, unitary)
}

/// Trace of `A^k` for `k = 1..=kmax` by repeated multiplication.
pub fn trace_powers(m: &CMatrix, kmax: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(kmax);
    if kmax == 0 {
        return out;
    }
    out.push(m.trace());
    if kmax >= 2 {
        // tr(A^2) without forming the product.
        let n = m.nrows();
        let mut t2 = ZERO;
        for i in 0..n {
            for j in 0..n {
                t2 += m[(i, j)] * m[(j, i)];
            }
        }
        out.push(t2);
    }
    if kmax >= 3 {
        let mut power = m * m;
        for _ in 3..=kmax {
            power = &power * m;
            out.push(power.trace());
        }
    }
    out
}
