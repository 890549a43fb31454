//! Initial states and their expansion in resonant states.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::{trapezoid_abs2, trapezoid_inner, Grid};
use crate::potential::PotentialSpec;
use crate::spectral::ResonanceBasis;

/// Condition number above which the resonance basis is considered broken.
pub const MAX_CONDITION: f64 = 1e6;

/// Gram matrix `S_mn = ⟨ψ_m|ψ_n⟩` on `[x_min, x_T]`.
#[derive(Clone, Debug)]
pub struct OverlapMatrix {
    pub s: DMatrix<Complex64>,
    /// Ratio of extreme singular values.
    pub condition: f64,
}

impl OverlapMatrix {
    pub fn from_matrix(s: DMatrix<Complex64>) -> Result<Self> {
        let sv = s.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { condition });
        }
        Ok(OverlapMatrix { s, condition })
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }
}

pub fn overlap(basis: &ResonanceBasis) -> Result<OverlapMatrix> {
    let n = basis.len();
    if n == 0 {
        return Err(Error::NoResonancesFound);
    }
    let h = basis.grid.spacing();
    let mut s = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        for j in i..n {
            let v = trapezoid_inner(&basis.states[i].psi, &basis.states[j].psi, h, 0, basis.i_t);
            s[(i, j)] = v;
            s[(j, i)] = v.conj();
        }
    }
    OverlapMatrix::from_matrix(s)
}

/// Coefficients `c = S⁻¹ b` with `b_m = ⟨ψ_m|ψ₀⟩`, by LU solve.
pub fn project(psi0: &[Complex64], basis: &ResonanceBasis, overlap: &OverlapMatrix) -> Result<Vec<Complex64>> {
    let n = basis.len();
    if overlap.dim() != n {
        return Err(Error::IndexMismatch { coefficients: overlap.dim(), basis: n });
    }
    if psi0.len() != basis.grid.len() {
        return Err(Error::InvalidInput(format!("state has {} samples, grid {}", psi0.len(), basis.grid.len())));
    }
    let h = basis.grid.spacing();
    let b = DVector::from_iterator(n, basis.states.iter().map(|st| trapezoid_inner(&st.psi, psi0, h, 0, basis.i_t)));
    let c = overlap
        .s
        .clone()
        .lu()
        .solve(&b)
        .ok_or(Error::IllConditioned { condition: overlap.condition })?;
    let residual = (&overlap.s * &c - &b).norm();
    if residual > 1e-10 * b.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::IllConditioned { condition: overlap.condition });
    }
    Ok(c.iter().copied().collect())
}

/// `Σ c_n ψ_n` on the basis grid.
pub fn synthesize(basis: &ResonanceBasis, c: &[Complex64]) -> Result<Vec<Complex64>> {
    if c.len() > basis.len() {
        return Err(Error::IndexMismatch { coefficients: c.len(), basis: basis.len() });
    }
    let mut psi = vec![Complex64::new(0.0, 0.0); basis.grid.len()];
    for (cn, st) in c.iter().zip(&basis.states) {
        for (p, v) in psi.iter_mut().zip(&st.psi) {
            *p += cn * v;
        }
    }
    Ok(psi)
}

/// Coherent-state amplitudes up to `n_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherentCoefficients {
    pub c: Vec<Complex64>,
    /// `1 − Σ_{n ≤ n_max} |c_n|²`.
    pub truncation_mass: f64,
}

/// `ln |c_n|² = −|α|² + 2n ln|α| − ln n!`.
fn ln_weight(alpha_abs: f64, n: usize) -> f64 {
    -alpha_abs * alpha_abs + 2.0 * n as f64 * alpha_abs.ln() - ln_gamma(n as f64 + 1.0)
}

/// `c_n = e^{−|α|²/2} αⁿ/√(n!)` for `n = 0..=n_max`.
pub fn coherent_coefficients(alpha: Complex64, n_max: usize) -> CoherentCoefficients {
    let r = alpha.norm();
    let phase = alpha.arg();
    let c: Vec<Complex64> = (0..=n_max)
        .map(|n| {
            if r == 0.0 {
                return Complex64::new(if n == 0 { 1.0 } else { 0.0 }, 0.0);
            }
            Complex64::from_polar((0.5 * ln_weight(r, n)).exp(), phase * n as f64)
        })
        .collect();
    let mass: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    CoherentCoefficients { c, truncation_mass: (1.0 - mass).max(0.0) }
}

/// Smallest `n` with cumulative coherent mass `≥ 1 − 10⁻⁸`, capped at
/// `available − 1`; the flag reports whether the cap was hit.
pub fn default_n_max(alpha: Complex64, available: usize) -> (usize, bool) {
    let r = alpha.norm();
    let cap = available.saturating_sub(1);
    let mut mass = 0.0;
    let mut n = 0;
    while n < 1_000_000 {
        mass += if r == 0.0 { f64::from(n == 0) } else { ln_weight(r, n).exp() };
        if mass >= 1.0 - 1e-8 {
            break;
        }
        n += 1;
    }
    (n.min(cap), n > cap)
}

/// Level with the largest `|c_n|²`; exact ties (within 10⁻¹² relative) go to the higher level.
pub fn peak_level(weights: &[f64]) -> usize {
    let mut best = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w >= weights[best] * (1.0 - 1e-12) {
            best = i;
        }
    }
    best
}

/// Position of the coherent-state center, `√2·d·Re α`.
pub fn coherent_center(alpha: Complex64, spec: &PotentialSpec) -> f64 {
    2f64.sqrt() * spec.oscillator_length() * alpha.re
}

/// Harmonic coherent state `⟨x|α⟩`, the displaced ground state with momentum
/// `√2·ħ·Im α/d`, phased to equal `Σ c_n φ_n` with the coefficients above.
pub fn coherent_wavefunction(alpha: Complex64, spec: &PotentialSpec, grid: &Grid) -> Result<Vec<Complex64>> {
    let d = spec.oscillator_length();
    let center = coherent_center(alpha, spec);
    if center + 3.0 * d > spec.l {
        return Err(Error::DisplacementTooLarge { center, limit: spec.l - 3.0 * d });
    }
    let norm = (std::f64::consts::PI * d * d).powf(-0.25);
    let shift = -0.5 * alpha.norm_sqr() - 0.5 * alpha * alpha;
    Ok(grid
        .points()
        .map(|x| {
            let u = x / d;
            norm * (shift + alpha * (2f64.sqrt() * u) - 0.5 * u * u).exp()
        })
        .collect())
}

/// `c_n = |c_n| e^{iθ_n}` with θ_n uniform on `[0, 2π)` from a seeded ChaCha8 stream.
pub fn random_phase_state(magnitudes: &[f64], seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    magnitudes
        .iter()
        .map(|&m| {
            let u: f64 = rng.random();
            Complex64::from_polar(m, std::f64::consts::TAU * u)
        })
        .collect()
}

/// Coefficients over a resonance basis together with the state they represent.
#[derive(Clone, Debug)]
pub struct InitialState {
    pub coefficients: Vec<Complex64>,
    pub psi0: Vec<Complex64>,
    pub label: String,
}

impl InitialState {
    /// State built from coefficients: `psi0 = Σ c_n ψ_n`, renormalized on `[x_min, x_T]`
    /// together with the coefficients.
    pub fn from_coefficients(basis: &ResonanceBasis, c: Vec<Complex64>, label: impl Into<String>) -> Result<Self> {
        let mut psi0 = synthesize(basis, &c)?;
        let norm = trapezoid_abs2(&psi0, basis.grid.spacing(), 0, basis.i_t).sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidInput("state vanishes on the well side".into()));
        }
        psi0.iter_mut().for_each(|z| *z /= norm);
        let coefficients = c.into_iter().map(|z| z / norm).collect();
        Ok(InitialState { coefficients, psi0, label: label.into() })
    }

    /// State sampled on the grid, with coefficients by projection.
    pub fn from_wavefunction(basis: &ResonanceBasis, psi0: Vec<Complex64>, label: impl Into<String>) -> Result<Self> {
        let s = overlap(basis)?;
        let coefficients = project(&psi0, basis, &s)?;
        Ok(InitialState { coefficients, psi0, label: label.into() })
    }

    pub fn weight(&self) -> f64 {
        self.coefficients.iter().map(|z| z.norm_sqr()).sum()
    }
}
