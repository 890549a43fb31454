//! Uniform spatial grid, finite-difference Hamiltonian and wavefunction observables.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{Potential, PotentialSpec};

/// Length of the absorbing region appended after `x_cap` by [`GridSpec::for_potential`].
pub const DEFAULT_CAP_LENGTH: f64 = 90.0;

/// Grid parameters as they appear in a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub h: f64,
}

impl GridSpec {
    /// `x_min = -12`, `x_max = x_cap + 90`, `h = 0.02`.
    pub fn for_potential(spec: &PotentialSpec) -> Self {
        GridSpec { x_min: -12.0, x_max: spec.x_cap + DEFAULT_CAP_LENGTH, h: 0.02 }
    }

    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.x_min, self.x_max, self.h)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::for_potential(&PotentialSpec::default())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n: usize,
    h: f64,
}

impl Grid {
    /// Uniform grid covering `[x_min, x_max]`; the spacing is adjusted so the
    /// endpoints are nodes.
    pub fn new(x_min: f64, x_max: f64, h: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && h.is_finite()) || h <= 0.0 || x_max <= x_min {
            return Err(Error::InvalidGrid(format!("x_min={x_min}, x_max={x_max}, h={h}")));
        }
        let intervals = ((x_max - x_min) / h).round() as usize;
        let n = intervals + 1;
        if n < 16 {
            return Err(Error::InvalidGrid(format!("{n} points, need at least 16")));
        }
        Ok(Grid { x_min, x_max, n, h: (x_max - x_min) / intervals as f64 })
    }

    pub fn with_points(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 16 {
            return Err(Error::InvalidGrid(format!("{n} points, need at least 16")));
        }
        Grid::new(x_min, x_max, (x_max - x_min) / (n - 1) as f64)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.x(i))
    }

    /// Index of the node nearest `x`.
    pub fn index_of(&self, x: f64) -> Result<usize> {
        let f = (x - self.x_min) / self.h;
        if !f.is_finite() || f < -0.5 || f > (self.n - 1) as f64 + 0.5 {
            return Err(Error::OutOfGrid { x });
        }
        Ok((f.round() as usize).min(self.n - 1))
    }

    /// Checks that depend on the potential: the left edge must sit well up
    /// the harmonic wall and a CAP needs room beyond `x_cap`.
    pub fn validate_for(&self, pot: &Potential, boundary: Boundary) -> Result<()> {
        let s = pot.spec();
        if pot.real(self.x_min) < 3.0 * s.v_b {
            return Err(Error::InvalidGrid(format!(
                "V(x_min) = {} is below 3 V_b; extend the grid to the left",
                pot.real(self.x_min)
            )));
        }
        if self.x_max <= s.l + s.w {
            return Err(Error::InvalidGrid("grid ends inside the barrier".into()));
        }
        if boundary == Boundary::Cap && self.x_max <= s.x_cap {
            return Err(Error::InvalidGrid("grid ends before the absorbing region".into()));
        }
        Ok(())
    }
}

/// Far-boundary treatment of the Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Real potential with reflecting walls at both ends.
    #[serde(alias = "hard_wall")]
    Hardwall,
    /// Same walls, with the complex absorbing tail switched on.
    Cap,
}

/// Three-point finite-difference Hamiltonian with Dirichlet ends.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    diag: Vec<Complex64>,
    off: f64,
    boundary: Boundary,
    grid: Grid,
    hbar: f64,
    m: f64,
}

impl Hamiltonian {
    pub fn assemble(pot: &Potential, grid: &Grid, boundary: Boundary) -> Result<Self> {
        let s = pot.spec();
        let limit = 0.2 * s.oscillator_length();
        if grid.spacing() > limit {
            return Err(Error::GridTooCoarse { h: grid.spacing(), limit });
        }
        grid.validate_for(pot, boundary)?;
        let kinetic = s.hbar * s.hbar / (2.0 * s.m * grid.spacing() * grid.spacing());
        let diag = grid
            .points()
            .map(|x| {
                let v = match boundary {
                    Boundary::Hardwall => Complex64::new(pot.real(x), 0.0),
                    Boundary::Cap => pot.eval(x),
                };
                v + 2.0 * kinetic
            })
            .collect();
        Ok(Hamiltonian { diag, off: -kinetic, boundary, grid: grid.clone(), hbar: s.hbar, m: s.m })
    }

    /// Build directly from diagonal values, for analytic test problems.
    pub fn from_parts(grid: &Grid, potential: &[Complex64], hbar: f64, m: f64) -> Self {
        assert_eq!(potential.len(), grid.len());
        let kinetic = hbar * hbar / (2.0 * m * grid.spacing() * grid.spacing());
        let boundary = if potential.iter().all(|v| v.im == 0.0) { Boundary::Hardwall } else { Boundary::Cap };
        Hamiltonian {
            diag: potential.iter().map(|v| v + 2.0 * kinetic).collect(),
            off: -kinetic,
            boundary,
            grid: grid.clone(),
            hbar,
            m,
        }
    }

    pub fn diag(&self) -> &[Complex64] {
        &self.diag
    }

    /// The (constant, real) off-diagonal element `-ħ²/(2mh²)`.
    pub fn off_diagonal(&self) -> f64 {
        self.off
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn is_real(&self) -> bool {
        self.diag.iter().all(|v| v.im == 0.0)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.diag.iter().map(|d| d.norm() + 2.0 * self.off.abs()).fold(0.0, f64::max)
    }

    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let n = self.diag.len();
        assert_eq!(psi.len(), n);
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * psi[i];
                if i > 0 {
                    acc += self.off * psi[i - 1];
                }
                if i + 1 < n {
                    acc += self.off * psi[i + 1];
                }
                acc
            })
            .collect()
    }
}

/// Trapezoidal ∫|ψ|² between nodes `i0 ≤ i1`.
pub(crate) fn trapezoid_abs2(psi: &[Complex64], h: f64, i0: usize, i1: usize) -> f64 {
    if i1 <= i0 {
        return 0.0;
    }
    let inner: f64 = psi[i0 + 1..i1].iter().map(|z| z.norm_sqr()).sum();
    h * (inner + 0.5 * (psi[i0].norm_sqr() + psi[i1].norm_sqr()))
}

/// Trapezoidal ⟨a|b⟩ between nodes `i0 ≤ i1`.
pub(crate) fn trapezoid_inner(a: &[Complex64], b: &[Complex64], h: f64, i0: usize, i1: usize) -> Complex64 {
    if i1 <= i0 {
        return Complex64::new(0.0, 0.0);
    }
    let inner: Complex64 = (i0 + 1..i1).map(|i| a[i].conj() * b[i]).sum();
    (inner + (a[i0].conj() * b[i0] + a[i1].conj() * b[i1]) * 0.5) * h
}

/// Probability current `(ħ/m) Im[ψ* ∂ₓψ]` at the node nearest `x`, central difference.
pub fn current_at(psi: &[Complex64], grid: &Grid, x: f64, hbar: f64, m: f64) -> Result<f64> {
    let i = grid.index_of(x)?;
    if i < 2 || i + 2 >= grid.len() {
        return Err(Error::OutOfGrid { x });
    }
    Ok(current_at_index(psi, grid.spacing(), i, hbar, m))
}

pub(crate) fn current_at_index(psi: &[Complex64], h: f64, i: usize, hbar: f64, m: f64) -> f64 {
    let deriv = (psi[i + 1] - psi[i - 1]) / (2.0 * h);
    hbar / m * (psi[i].conj() * deriv).im
}

/// Trapezoidal ∫_{x_min}^{x_T} |ψ|².
pub fn prob_in_well(psi: &[Complex64], grid: &Grid, x_t: f64) -> Result<f64> {
    let it = grid.index_of(x_t)?;
    Ok(trapezoid_abs2(psi, grid.spacing(), 0, it))
}

/// Trapezoidal ∫_{x_T}^{x_max} |ψ|².
pub fn prob_beyond(psi: &[Complex64], grid: &Grid, x_t: f64) -> Result<f64> {
    let it = grid.index_of(x_t)?;
    Ok(trapezoid_abs2(psi, grid.spacing(), it, grid.len() - 1))
}

/// Trapezoidal norm over the whole grid.
pub fn norm_sqr(psi: &[Complex64], grid: &Grid) -> f64 {
    trapezoid_abs2(psi, grid.spacing(), 0, grid.len() - 1)
}
