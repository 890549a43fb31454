//! Tridiagonal kernels: pivoted LU, Thomas elimination and an implicit QL
//! iteration for complex symmetric matrices.

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// LU factorization with partial pivoting of a general complex tridiagonal
/// matrix (the `gttrf`/`gttrs` scheme). Used for inverse iteration, where
/// the shifted matrix is nearly singular and pivoting is required.
#[derive(Clone, Debug)]
pub struct PivotedTridiagLu {
    dl: Vec<Complex64>,
    d: Vec<Complex64>,
    du: Vec<Complex64>,
    du2: Vec<Complex64>,
    swapped: Vec<bool>,
}

impl PivotedTridiagLu {
    /// Factor the matrix with sub-diagonal `sub`, diagonal `diag`, super-diagonal `sup`.
    /// Exactly zero pivots are replaced by `tiny`.
    pub fn new(sub: &[Complex64], diag: &[Complex64], sup: &[Complex64], tiny: f64) -> Self {
        let n = diag.len();
        assert!(n >= 1 && sub.len() + 1 == n && sup.len() + 1 == n);
        let mut dl = sub.to_vec();
        let mut d = diag.to_vec();
        let mut du = sup.to_vec();
        let mut du2 = vec![ZERO; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].norm() >= dl[i].norm() {
                if d[i] == ZERO {
                    d[i] = Complex64::new(tiny, 0.0);
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == ZERO {
            d[n - 1] = Complex64::new(tiny, 0.0);
        }
        PivotedTridiagLu { dl, d, du, du2, swapped }
    }

    /// Solve in place.
    pub fn solve(&self, b: &mut [Complex64]) {
        let n = self.d.len();
        assert_eq!(b.len(), n);
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

/// Thomas elimination for a tridiagonal matrix with constant off-diagonal
/// `off` and diagonal `diag`, prefactored for repeated solves.
///
/// No pivoting: valid for the diagonally dominant Crank-Nicolson matrices.
#[derive(Clone, Debug)]
pub struct ThomasFactor {
    off: Complex64,
    /// Reciprocal of the eliminated pivots.
    inv_pivot: Vec<Complex64>,
    /// Modified super-diagonal `c'_i`.
    c_prime: Vec<Complex64>,
}

impl ThomasFactor {
    pub fn new(diag: &[Complex64], off: Complex64) -> Self {
        let n = diag.len();
        let mut inv_pivot = Vec::with_capacity(n);
        let mut c_prime = Vec::with_capacity(n);
        let mut prev_c = ZERO;
        for (i, &di) in diag.iter().enumerate() {
            let pivot = if i == 0 { di } else { di - off * prev_c };
            let inv = ONE / pivot;
            inv_pivot.push(inv);
            prev_c = off * inv;
            c_prime.push(prev_c);
        }
        ThomasFactor { off, inv_pivot, c_prime }
    }

    /// Solve in place.
    pub fn solve(&self, rhs: &mut [Complex64]) {
        let n = rhs.len();
        assert_eq!(n, self.inv_pivot.len());
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.off * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            let next = rhs[i + 1];
            rhs[i] -= self.c_prime[i] * next;
        }
    }
}

/// All eigenvalues of the complex symmetric tridiagonal matrix with diagonal
/// `diag` and (symmetric) off-diagonal `off`, by implicit QL iteration with
/// Wilkinson-type shifts and complex orthogonal rotations.
///
/// The rotations satisfy `c² + s² = 1` but are not unitary; a near-isotropic
/// rotation (`f² + g² ≈ 0` with large `f`, `g`) is reported as a failure.
pub fn symmetric_tridiagonal_eigenvalues(
    diag: &[Complex64],
    off: &[Complex64],
) -> Result<Vec<Complex64>> {
    let n = diag.len();
    assert!(off.len() + 1 == n || (n == 0 && off.is_empty()));
    let mut d = diag.to_vec();
    let mut e: Vec<Complex64> = off.to_vec();
    e.push(ZERO);
    const MAX_ITER: usize = 60;

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].norm() + d[m + 1].norm();
                if e[m].norm() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_ITER {
                return Err(Error::SolverFailure { index: l });
            }
            let mut g = (d[l + 1] - d[l]) / (e[l] * 2.0);
            let mut r = (g * g + ONE).sqrt();
            let denom = if (g + r).norm() >= (g - r).norm() { g + r } else { g - r };
            g = d[m] - d[l] + e[l] / denom;
            let mut s = ONE;
            let mut c = ONE;
            let mut p = ZERO;
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = (f * f + g * g).sqrt();
                e[i + 1] = r;
                let scale = f.norm() + g.norm();
                if r.norm() == 0.0 || scale == 0.0 {
                    d[i + 1] -= p;
                    e[m] = ZERO;
                    deflated = true;
                    break;
                }
                if r.norm() < 1e-10 * scale {
                    return Err(Error::SolverFailure { index: i });
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + c * b * 2.0;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = ZERO;
        }
    }
    Ok(d)
}
