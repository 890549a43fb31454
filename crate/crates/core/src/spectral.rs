//! Resonant states of the absorbing-potential Hamiltonian.
//!
//! All eigenvalues come from a full QL sweep of the tridiagonal matrix, so
//! no narrow resonance can be skipped. Eigenvectors are then obtained by
//! inverse iteration, only for the eigenvalues a caller asks about: the
//! full eigenvector matrix at the default grid size would not fit in memory.
//!
//! The width of a resonance is extracted from its eigenvector through
//! `Im λ = Σ Im V_i |v_i|² / Σ |v_i|²`, which is exact for an eigenpair and
//! keeps relative precision when `|Im λ|` is far below `ε‖H‖`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::{trapezoid_abs2, Boundary, Grid, Hamiltonian};
use crate::linalg::{symmetric_tridiagonal_eigenvalues, PivotedTridiagLu};
use crate::potential::Potential;

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: Complex64,
    pub vector: Vec<Complex64>,
}

impl EigenPair {
    /// `‖Hv − λv‖₂ / ‖v‖₂`.
    pub fn residual(&self, h: &Hamiltonian) -> f64 {
        let hv = h.apply(&self.vector);
        let r: f64 = hv.iter().zip(&self.vector).map(|(a, b)| (a - self.value * b).norm_sqr()).sum();
        let v: f64 = self.vector.iter().map(|z| z.norm_sqr()).sum();
        (r / v).sqrt()
    }
}

/// All eigenvalues, sorted by real part.
pub fn eigenvalues(h: &Hamiltonian) -> Result<Vec<Complex64>> {
    let off = vec![Complex64::new(h.off_diagonal(), 0.0); h.len().saturating_sub(1)];
    let mut ev = symmetric_tridiagonal_eigenvalues(h.diag(), &off)?;
    ev.sort_by(|a, b| a.re.total_cmp(&b.re));
    Ok(ev)
}

/// Eigenvector for an (approximate) eigenvalue by inverse iteration; the
/// returned value is refined from the vector.
pub fn eigenvector(h: &Hamiltonian, lambda: Complex64, index: usize) -> Result<EigenPair> {
    let n = h.len();
    let off = vec![Complex64::new(h.off_diagonal(), 0.0); n - 1];
    let norm = h.norm_inf();
    let tol = 1e-8 * norm;
    let mut shift = lambda;
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    for attempt in 0..3 {
        let diag: Vec<Complex64> = h.diag().iter().map(|d| d - shift).collect();
        let lu = PivotedTridiagLu::new(&off, &diag, &off, f64::EPSILON * norm);
        for _ in 0..3 {
            lu.solve(&mut v);
            let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::SolverFailure { index });
            }
            v.iter_mut().for_each(|z| *z /= scale);
        }
        let pair = EigenPair { value: refine(h, &v), vector: v.clone() };
        if pair.residual(h) <= tol {
            return Ok(pair);
        }
        shift = pair.value;
        if attempt == 2 {
            break;
        }
    }
    Err(Error::SolverFailure { index })
}

fn refine(h: &Hamiltonian, v: &[Complex64]) -> Complex64 {
    let hv = h.apply(v);
    let num: Complex64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
    let den: Complex64 = v.iter().map(|a| a * a).sum();
    let re = (num / den).re;
    let weight: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let im: f64 = h.diag().iter().zip(v).map(|(d, z)| d.im * z.norm_sqr()).sum::<f64>() / weight;
    Complex64::new(re, im)
}

/// Eigenpairs sorted by `Re λ`. With `window = Some((lo, hi))` only pairs
/// with `lo < Re λ < hi` carry vectors; the rest are dropped.
pub fn eigendecompose(h: &Hamiltonian, window: Option<(f64, f64)>, exec: Exec) -> Result<Vec<EigenPair>> {
    let values = eigenvalues(h)?;
    let selected: Vec<(usize, Complex64)> = values
        .into_iter()
        .enumerate()
        .filter(|(_, z)| window.map_or(true, |(lo, hi)| z.re > lo && z.re < hi))
        .collect();
    let mut pairs = exec.try_map(&selected, |&(i, z)| eigenvector(h, z, i))?;
    pairs.sort_by(|a, b| a.value.re.total_cmp(&b.value.re));
    Ok(pairs)
}

/// Default position of the flux point: one length unit into the free region.
pub fn default_x_t(pot: &Potential) -> f64 {
    let s = pot.spec();
    s.l + s.w + 1.0
}

/// A normalized, phase-fixed resonant state with its outgoing-wave data.
#[derive(Clone, Debug)]
pub struct ResonantState {
    pub n: usize,
    /// Complex energy `E − iħΓ/2`.
    pub eps: Complex64,
    pub energy: f64,
    pub gamma: f64,
    /// Samples on the full grid; unit norm on `[x_min, x_T]`, real and positive at `x_T`.
    pub psi: Vec<Complex64>,
    pub amplitude: f64,
    pub k_abs: f64,
    pub delta: f64,
    pub localization: f64,
}

impl ResonantState {
    pub fn re_k(&self) -> f64 {
        self.k_abs * self.delta.cos()
    }
}

/// Outgoing momentum data `(|k|, arg k)` for `k = √(2mε)`.
pub fn outgoing_momentum(energy: f64, gamma: f64, hbar: f64, m: f64) -> (f64, f64) {
    let half_width = hbar * gamma / 2.0;
    let k_abs = (2.0 * m).sqrt() * (energy * energy + half_width * half_width).powf(0.25);
    let delta = -0.5 * (half_width / energy).atan();
    (k_abs, delta)
}

/// Eigenvalue seen during selection, with its localization fraction.
/// `localization` is `None` when inverse iteration did not converge, which
/// happens for strongly non-normal absorber modes, never for well resonances.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub value: Complex64,
    pub localization: Option<f64>,
    pub kept: bool,
}

#[derive(Clone, Debug)]
pub struct ResonanceBasis {
    pub states: Vec<ResonantState>,
    pub candidates: Vec<Candidate>,
    pub grid: Grid,
    pub x_t: f64,
    pub i_t: usize,
    pub hbar: f64,
    pub m: f64,
}

impl ResonanceBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Keep only the first `count` states.
    pub fn truncated(&self, count: usize) -> ResonanceBasis {
        let mut b = self.clone();
        b.states.truncate(count);
        b
    }
}

/// Minimum localization fraction on `[x_min, x_T]` for a state to count as a resonance.
pub const LOCALIZATION_THRESHOLD: f64 = 0.5;

/// Keep eigenpairs that are resonances of the well: `0 < Re λ < V_b`,
/// `Im λ < 0`, localization at least one half. States are numbered by
/// ascending energy and truncated to `max_count`.
pub fn select_resonances(
    pot: &Potential,
    grid: &Grid,
    pairs: &[EigenPair],
    x_t: f64,
    max_count: usize,
) -> Result<ResonanceBasis> {
    let s = pot.spec();
    let i_t = grid.index_of(x_t)?;
    let h = grid.spacing();
    let last = grid.len() - 1;
    let mut candidates = Vec::new();
    let mut states = Vec::new();
    for pair in pairs {
        let z = pair.value;
        if !(z.re > 0.0 && z.re < s.v_b && -z.im > 0.0) {
            continue;
        }
        let inside = trapezoid_abs2(&pair.vector, h, 0, i_t);
        let total = trapezoid_abs2(&pair.vector, h, 0, last);
        let localization = inside / total;
        let kept = localization >= LOCALIZATION_THRESHOLD && states.len() < max_count;
        candidates.push(Candidate { value: z, localization: Some(localization), kept });
        if !kept {
            continue;
        }
        let anchor = pair.vector[i_t];
        if anchor.norm() == 0.0 {
            return Err(Error::SolverFailure { index: states.len() });
        }
        let factor = anchor.conj() / anchor.norm() / inside.sqrt();
        let psi: Vec<Complex64> = pair.vector.iter().map(|v| v * factor).collect();
        let gamma = -2.0 * z.im / s.hbar;
        let (k_abs, delta) = outgoing_momentum(z.re, gamma, s.hbar, s.m);
        let re_k = k_abs * delta.cos();
        states.push(ResonantState {
            n: states.len(),
            eps: z,
            energy: z.re,
            gamma,
            psi,
            amplitude: (s.m * gamma / re_k).sqrt(),
            k_abs,
            delta,
            localization,
        });
    }
    if states.is_empty() {
        return Err(Error::NoResonancesFound);
    }
    for w in states.windows(2) {
        let gap = (w[1].energy - w[0].energy).abs();
        if gap < s.hbar * w[0].gamma || gap < s.hbar * w[1].gamma {
            return Err(Error::DuplicateLevel { first: w[0].n, second: w[1].n });
        }
    }
    Ok(ResonanceBasis { states, candidates, grid: grid.clone(), x_t: grid.x(i_t), i_t, hbar: s.hbar, m: s.m })
}

/// Assemble the absorbing Hamiltonian on `grid`, diagonalize it and select resonances.
pub fn find_resonances(pot: &Potential, grid: &Grid, x_t: f64, max_count: usize, exec: Exec) -> Result<ResonanceBasis> {
    let h = Hamiltonian::assemble(pot, grid, Boundary::Cap)?;
    let values = eigenvalues(&h)?;
    let v_b = pot.spec().v_b;
    // QL resolves Im λ only to rounding level; narrow resonances may come out
    // with either sign and are sorted out by the refined value.
    let slack = 1e3 * f64::EPSILON * h.norm_inf();
    let wanted: Vec<(usize, Complex64)> =
        values.into_iter().enumerate().filter(|(_, z)| z.re > 0.0 && z.re < v_b && z.im < slack).collect();
    let solved = exec.map(&wanted, |&(i, z)| eigenvector(&h, z, i));
    let mut pairs = Vec::new();
    let mut failed = Vec::new();
    for (r, &(_, z)) in solved.into_iter().zip(&wanted) {
        match r {
            Ok(p) => pairs.push(p),
            Err(_) => failed.push(Candidate { value: z, localization: None, kept: false }),
        }
    }
    pairs.sort_by(|a, b| a.value.re.total_cmp(&b.value.re));
    let mut basis = select_resonances(pot, grid, &pairs, x_t, max_count)?;
    basis.candidates.extend(failed);
    basis.candidates.sort_by(|a, b| a.value.re.total_cmp(&b.value.re));
    Ok(basis)
}

/// Local wavenumber `Im[∂ₓψ/ψ]` at the node nearest `x`.
pub fn local_wavenumber(psi: &[Complex64], grid: &Grid, x: f64) -> Result<f64> {
    let i = grid.index_of(x)?;
    if i == 0 || i + 1 >= grid.len() {
        return Err(Error::OutOfGrid { x });
    }
    let d = (psi[i + 1] - psi[i - 1]) / (2.0 * grid.spacing());
    Ok((d / psi[i]).im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialSpec;

    fn oscillator(h: f64) -> Hamiltonian {
        let grid = Grid::new(-12.0, 12.0, h).unwrap();
        let v: Vec<Complex64> = grid.points().map(|x| Complex64::new(0.5 * x * x, 0.0)).collect();
        Hamiltonian::from_parts(&grid, &v, 1.0, 1.0)
    }

    #[test]
    fn harmonic_spectrum() {
        let ev = eigenvalues(&oscillator(0.02)).unwrap();
        assert!(ev.iter().all(|z| z.im.abs() < 1e-9));
        for n in 0..=3 {
            let exact = n as f64 + 0.5;
            assert!(((ev[n].re - exact) / exact).abs() < 1e-4, "level {n}: {}", ev[n].re);
        }
        // three-point stencil shift -h²<p⁴>/24 with <p⁴> = 3(2n²+2n+1)/4
        for n in 0..=5 {
            let nf = n as f64;
            let shifted = nf + 0.5 - 0.02f64.powi(2) / 32.0 * (2.0 * nf * nf + 2.0 * nf + 1.0);
            assert!(((ev[n].re - shifted) / shifted).abs() < 1e-5, "level {n}: {}", ev[n].re);
        }
    }

    #[test]
    fn second_order_convergence_of_ground_state() {
        let err = |h: f64| (eigenvalues(&oscillator(h)).unwrap()[0].re - 0.5).abs();
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn inverse_iteration_recovers_eigenvector() {
        let pot = Potential::new(PotentialSpec::default()).unwrap();
        let grid = Grid::new(-12.0, 70.0, 0.05).unwrap();
        let h = Hamiltonian::assemble(&pot, &grid, Boundary::Cap).unwrap();
        let ev = eigenvalues(&h).unwrap();
        let target = ev.iter().position(|z| z.re > 2.0).unwrap();
        let pair = eigenvector(&h, ev[target], target).unwrap();
        assert!(pair.residual(&h) <= 1e-8 * h.norm_inf());
        assert!(ev.iter().all(|z| z.im <= 1e-12));
    }

    #[test]
    fn momentum_data_in_the_narrow_limit() {
        let (k_abs, delta) = outgoing_momentum(2.0, 1e-12, 1.0, 1.0);
        assert!(delta.abs() < 1e-12);
        assert!((k_abs - 2.0).abs() < 1e-12);
        let gamma = 1e-3;
        let (k_abs, delta) = outgoing_momentum(2.0, gamma, 1.0, 1.0);
        let amp2 = gamma / (k_abs * delta.cos());
        assert!((amp2 * k_abs * delta.cos() - gamma).abs() < 1e-18);
        assert!((delta + gamma / 8.0).abs() < 1e-9);
    }
}
