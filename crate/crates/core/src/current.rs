//! The resonance-expansion current at `x_T`, the average rate and
//! per-cycle leak, and time-series helpers.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::potential::Potential;
use crate::spectral::{outgoing_momentum, ResonanceBasis, ResonantState};
use crate::wkb::{wkb_level, WkbLevel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Formula,
    Evolution,
    Saddle,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub basis_size: Option<usize>,
    pub x_t: Option<f64>,
    pub alpha: Option<(f64, f64)>,
    /// Time range where the expansion is expected to hold; samples outside are kept but annotated.
    pub window: Option<(f64, f64)>,
}

/// Current samples `j(x_T, t)` on a strictly increasing time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentSeries {
    pub times: Vec<f64>,
    pub j: Vec<f64>,
    pub provenance: Provenance,
    pub meta: SeriesMeta,
}

impl CurrentSeries {
    pub fn new(times: Vec<f64>, j: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if times.len() != j.len() || times.is_empty() {
            return Err(Error::InvalidInput(format!("{} times for {} samples", times.len(), j.len())));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput("times must be strictly increasing".into()));
        }
        if let Some(bad) = j.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite current at sample {bad}")));
        }
        Ok(CurrentSeries { times, j, provenance, meta: SeriesMeta::default() })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }

    /// Linear interpolation; `None` outside the sampled range.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        interpolate(&self.times, &self.j, t)
    }

    /// Trapezoidal `∫ j dt` over `[t0, t1]` (clipped to the sampled range).
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        let (lo, hi) = self.span();
        let (a, b) = (t0.max(lo), t1.min(hi));
        if b <= a {
            return 0.0;
        }
        let mut total = 0.0;
        let mut prev_t = a;
        let mut prev_j = self.value_at(a).unwrap_or(0.0);
        for (&t, &v) in self.times.iter().zip(&self.j) {
            if t <= a {
                continue;
            }
            if t >= b {
                break;
            }
            total += 0.5 * (v + prev_j) * (t - prev_t);
            prev_t = t;
            prev_j = v;
        }
        total + 0.5 * (self.value_at(b).unwrap_or(0.0) + prev_j) * (b - prev_t)
    }

    /// Mean over a trailing window of length `period`, from `t0 + period` on.
    pub fn rolling_mean(&self, period: f64) -> Vec<(f64, f64)> {
        let t0 = self.times[0];
        self.times
            .iter()
            .filter(|&&t| t >= t0 + period)
            .map(|&t| (t, self.integral(t - period, t) / period))
            .collect()
    }

    pub fn in_window(&self, t: f64) -> bool {
        self.meta.window.map_or(true, |(a, b)| t >= a && t <= b)
    }
}

/// Gaussian `height·exp(−(t − center)²/width²)` fitted to one burst.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BurstFit {
    pub center: f64,
    pub height: f64,
    pub width: f64,
}

impl BurstFit {
    pub fn eval(&self, t: f64) -> f64 {
        let s = (t - self.center) / self.width;
        self.height * (-s * s).exp()
    }
}

impl CurrentSeries {
    /// Local maxima above `fraction` of the global maximum.
    pub fn peaks(&self, fraction: f64) -> Vec<(f64, f64)> {
        let top = self.j.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (1..self.len().saturating_sub(1))
            .filter(|&i| self.j[i] > self.j[i - 1] && self.j[i] >= self.j[i + 1] && self.j[i] >= fraction * top)
            .map(|i| (self.times[i], self.j[i]))
            .collect()
    }

    /// Least-squares Gaussian through the samples in `[t0, t1]`, started
    /// from a log-quadratic fit of the points above half the window maximum.
    pub fn fit_burst(&self, t0: f64, t1: f64) -> Result<BurstFit> {
        let pts: Vec<(f64, f64)> =
            self.times.iter().zip(&self.j).filter(|(t, _)| **t >= t0 && **t <= t1).map(|(t, j)| (*t, *j)).collect();
        let &(t_max, j_max) = pts
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| Error::InvalidInput(format!("no samples in [{t0}, {t1}]")))?;
        if !(j_max > 0.0) {
            return Err(Error::InvalidInput("no positive burst in the window".into()));
        }
        // work with j / j_max and times relative to the maximum
        let core: Vec<(f64, f64)> =
            pts.iter().filter(|p| p.1 > 0.5 * j_max).map(|&(t, j)| (t - t_max, (j / j_max).ln())).collect();
        if core.len() < 3 {
            return Err(Error::InvalidInput("burst is resolved by fewer than three samples".into()));
        }
        let mut m = nalgebra::Matrix3::<f64>::zeros();
        let mut r = nalgebra::Vector3::<f64>::zeros();
        for &(s, y) in &core {
            let v = nalgebra::Vector3::new(1.0, s, s * s);
            m += v * v.transpose();
            r += v * y;
        }
        let q = m.lu().solve(&r).ok_or(Error::NoConvergence { iterations: 0 })?;
        if !(q[2] < 0.0) {
            return Err(Error::InvalidInput("burst maximum is not peaked".into()));
        }
        let mut p = [(q[0] - q[1] * q[1] / (4.0 * q[2])).exp(), -q[1] / (2.0 * q[2]), (-1.0 / q[2]).sqrt()];
        let data: Vec<(f64, f64)> = pts.iter().map(|&(t, j)| (t - t_max, j / j_max)).collect();
        let cost = |p: &[f64; 3]| -> f64 {
            data.iter()
                .map(|&(s, y)| {
                    let u = (s - p[1]) / p[2];
                    (p[0] * (-u * u).exp() - y).powi(2)
                })
                .sum()
        };
        let mut lambda = 1e-3;
        let mut current = cost(&p);
        let mut converged = false;
        for _ in 0..200 {
            let mut jtj = nalgebra::Matrix3::<f64>::zeros();
            let mut jtr = nalgebra::Vector3::<f64>::zeros();
            for &(s, y) in &data {
                let d = s - p[1];
                let e = (-(d * d) / (p[2] * p[2])).exp();
                let g = nalgebra::Vector3::new(
                    e,
                    p[0] * e * 2.0 * d / (p[2] * p[2]),
                    p[0] * e * 2.0 * d * d / p[2].powi(3),
                );
                jtj += g * g.transpose();
                jtr += g * (p[0] * e - y);
            }
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] *= 1.0 + lambda;
            }
            let Some(step) = damped.lu().solve(&jtr) else { break };
            let trial = [p[0] - step[0], p[1] - step[1], (p[2] - step[2]).abs()];
            let c = cost(&trial);
            if c <= current {
                let small = step.iter().zip(&trial).all(|(d, v)| d.abs() <= 1e-12 * v.abs().max(1e-12));
                p = trial;
                current = c;
                lambda = (lambda * 0.3).max(1e-12);
                if small {
                    converged = true;
                    break;
                }
            } else {
                lambda *= 10.0;
                if lambda > 1e12 {
                    converged = true;
                    break;
                }
            }
        }
        if !converged {
            return Err(Error::NoConvergence { iterations: 200 });
        }
        Ok(BurstFit { center: t_max + p[1], height: p[0] * j_max, width: p[2] })
    }
}

/// Piecewise-linear interpolation on increasing `xs`.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] {
        return None;
    }
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return Some(ys[0]);
    }
    if i >= n {
        return Some(ys[n - 1]);
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = (x - x0) / (x1 - x0);
    Some(ys[i - 1] * (1.0 - w) + ys[i] * w)
}

/// The data the current formula needs from one resonance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisLevel {
    pub energy: f64,
    pub gamma: f64,
    pub k_abs: f64,
    pub delta: f64,
}

impl BasisLevel {
    pub fn re_k(&self) -> f64 {
        self.k_abs * self.delta.cos()
    }

    pub fn from_state(state: &ResonantState) -> Self {
        BasisLevel { energy: state.energy, gamma: state.gamma, k_abs: state.k_abs, delta: state.delta }
    }

    /// Harmonic energy, WKB width, real momentum `√(2mE)` and `δ = 0`.
    pub fn from_wkb(level: &WkbLevel, m: f64, with_g: bool) -> Self {
        BasisLevel { energy: level.energy, gamma: level.width(with_g), k_abs: (2.0 * m * level.energy).sqrt(), delta: 0.0 }
    }

    /// Exact outgoing data for a complex energy.
    pub fn from_complex_energy(energy: f64, gamma: f64, hbar: f64, m: f64) -> Self {
        let (k_abs, delta) = outgoing_momentum(energy, gamma, hbar, m);
        BasisLevel { energy, gamma, k_abs, delta }
    }
}

pub fn cap_levels(basis: &ResonanceBasis) -> Vec<BasisLevel> {
    basis.states.iter().map(BasisLevel::from_state).collect()
}

pub fn wkb_levels(pot: &Potential, count: usize, with_g: bool) -> Result<Vec<BasisLevel>> {
    let m = pot.spec().m;
    (0..count).map(|n| Ok(BasisLevel::from_wkb(&wkb_level(pot, n)?, m, with_g))).collect()
}

fn check_len(levels: &[BasisLevel], c: &[Complex64]) -> Result<()> {
    if c.len() != levels.len() {
        return Err(Error::IndexMismatch { coefficients: c.len(), basis: levels.len() });
    }
    Ok(())
}

/// Precomputed diagonal and cross terms of the current formula.
struct Terms {
    diag: Vec<(f64, f64)>,
    /// (amplitude, frequency, phase, decay) per ordered pair n ≠ n'.
    cross: Vec<(f64, f64, f64, f64)>,
}

impl Terms {
    fn new(levels: &[BasisLevel], c: &[Complex64], hbar: f64) -> Self {
        let diag = levels.iter().zip(c).map(|(l, cn)| (cn.norm_sqr() * l.gamma, l.gamma)).collect();
        let mut cross = Vec::with_capacity(levels.len() * levels.len());
        for (n, (ln, cn)) in levels.iter().zip(c).enumerate() {
            for (np, (lp, cp)) in levels.iter().zip(c).enumerate() {
                if n == np {
                    continue;
                }
                let amp = (cn * cp).norm() * lp.k_abs * (ln.gamma * lp.gamma / (ln.re_k() * lp.re_k())).sqrt();
                if amp == 0.0 {
                    continue;
                }
                let freq = (ln.energy - lp.energy) / hbar;
                let phase = cp.arg() - cn.arg() + lp.delta;
                cross.push((amp, freq, phase, 0.5 * (ln.gamma + lp.gamma)));
            }
        }
        Terms { diag, cross }
    }

    fn eval(&self, t: f64) -> f64 {
        let d: f64 = self.diag.iter().map(|&(w, g)| w * (-g * t).exp()).sum();
        let x: f64 = self.cross.iter().map(|&(a, f, p, g)| a * (f * t + p).cos() * (-g * t).exp()).sum();
        d + x
    }
}

/// `j(x_T, t)` from the resonance expansion: the diagonal sum plus the full
/// ordered-pair cross sum, each pair carrying `|k_{n'}|` and `δ_{n'}` of its
/// second member.
pub fn formula_current(
    levels: &[BasisLevel],
    c: &[Complex64],
    times: &[f64],
    hbar: f64,
    exec: Exec,
) -> Result<CurrentSeries> {
    check_len(levels, c)?;
    let terms = Terms::new(levels, c, hbar);
    let j = exec.map(times, |&t| terms.eval(t));
    let mut series = CurrentSeries::new(times.to_vec(), j, Provenance::Formula)?;
    series.meta.basis_size = Some(levels.len());
    Ok(series)
}

/// `Γ̄ = Σ |c_n|² Γ_n`.
pub fn average_rate(levels: &[BasisLevel], c: &[Complex64]) -> Result<f64> {
    check_len(levels, c)?;
    Ok(levels.iter().zip(c).map(|(l, cn)| cn.norm_sqr() * l.gamma).sum())
}

/// `ΔP = 2πΓ̄/ω`.
pub fn per_cycle_leak(gamma_bar: f64, omega: f64) -> f64 {
    2.0 * PI * gamma_bar / omega
}

/// `P(t) = 1 − ∫₀ᵗ j` by the trapezoid rule; the series must start at `t = 0`.
pub fn survival_from_current(series: &CurrentSeries) -> Result<Vec<f64>> {
    if series.times[0].abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("series starts at t = {}, not 0", series.times[0])));
    }
    let mut p = Vec::with_capacity(series.len());
    let mut acc = 1.0;
    p.push(acc);
    for k in 1..series.len() {
        acc -= 0.5 * (series.j[k] + series.j[k - 1]) * (series.times[k] - series.times[k - 1]);
        p.push(acc);
    }
    Ok(p)
}

/// `[2π/ω, min(5/Γ̄, 8·S_max/(ħΓ₀))]`, the range where the expansion is
/// expected to describe the current; the second bound is dropped when no
/// action is known.
pub fn applicability_window(gamma_bar: f64, omega: f64, max_action: Option<(f64, f64, f64)>) -> (f64, f64) {
    let start = 2.0 * PI / omega;
    let mut end = 5.0 / gamma_bar;
    if let Some((s_max, hbar, gamma0)) = max_action {
        end = end.min(8.0 * s_max / (hbar * gamma0));
    }
    (start, end)
}

/// Uniform time grid `t0, t0 + dt, …` up to and including `t1`.
pub fn time_grid(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let n = ((t1 - t0) / dt).round() as usize;
    (0..=n).map(|i| t0 + i as f64 * dt).collect()
}
