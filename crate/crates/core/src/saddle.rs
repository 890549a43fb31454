//! Saddle-point description of coherent-state tunneling bursts.
//!
//! The level sum of the factorized current is replaced by an integral over a
//! continuous level index `n` with `E(n) = ħω(n + ½)`, evaluated at the
//! saddle `n_* = |α|² e^{2ω(τ(n_*) + it)}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::wkb::{ln_g_factor, SemiclassicalTable};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SaddleOptions {
    /// Keep the low-level prefactor `g(n)` instead of its large-n limit 1.
    pub exact_g: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    FixedPoint,
    Newton,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SaddleResult {
    pub alpha_abs: f64,
    pub omega: f64,
    pub hbar: f64,
    pub n0: f64,
    pub energy0: f64,
    pub tau0: f64,
    /// `∂_n τ` at `n₀`.
    pub tau0_prime: f64,
    pub n1: Complex64,
    pub s0: f64,
    pub f0: Complex64,
    pub f0_pp: f64,
    pub dt_width: f64,
    pub dp: f64,
    pub j_peak: f64,
    /// Burst center `arg α / ω`.
    pub time_offset: f64,
    pub iterations: usize,
    pub method: SolveMethod,
    /// `ω·Δt < 0.5`.
    pub narrow: bool,
}

const MAX_ITER: usize = 10_000;
const DAMPING: f64 = 0.5;

struct Model<'a> {
    table: &'a SemiclassicalTable,
    r2: f64,
    omega: f64,
    hbar: f64,
    exact_g: bool,
}

impl Model<'_> {
    fn energy(&self, n: f64) -> f64 {
        self.table.level_energy(n)
    }

    fn tau(&self, n: f64) -> Result<f64> {
        self.table.tau(self.energy(n)).map_err(|_| Error::SaddleDiverged { n })
    }

    /// `d/dn ln g` and its second derivative by centered differences.
    fn ln_g_derivs(&self, n: f64) -> (f64, f64) {
        if !self.exact_g {
            return (0.0, 0.0);
        }
        let h = 1e-4;
        let (a, b, c) = (ln_g_factor(n - h), ln_g_factor(n), ln_g_factor(n + h));
        ((c - a) / (2.0 * h), (c - 2.0 * b + a) / (h * h))
    }

    /// Right-hand side of the saddle relation at `t = 0`.
    fn map(&self, n: f64) -> Result<f64> {
        let (dg, _) = self.ln_g_derivs(n);
        Ok(self.r2 * (2.0 * self.omega * self.tau(n)? - dg).exp())
    }

    fn valid(&self, n: f64) -> bool {
        n > 0.0 && self.table.contains(self.energy(n))
    }
}

/// Real saddle `n₀` and the burst parameters derived from it.
pub fn solve_saddle(alpha: Complex64, table: &SemiclassicalTable, opts: SaddleOptions) -> Result<SaddleResult> {
    let r = alpha.norm();
    if !(r > 0.0) {
        return Err(Error::InvalidInput("saddle needs |alpha| > 0".into()));
    }
    let model = Model { table, r2: r * r, omega: table.omega(), hbar: table.hbar(), exact_g: opts.exact_g };
    let (n0, iterations, method) = match fixed_point(&model)? {
        Ok((n, it)) => (n, it, SolveMethod::FixedPoint),
        Err((last, it)) => (newton_fallback(&model, last)?, it, SolveMethod::Newton),
    };
    let (omega, hbar) = (model.omega, model.hbar);
    let energy0 = model.energy(n0);
    let tau0 = table.tau(energy0)?;
    let tau0_prime = hbar * omega * table.tau_deriv(energy0).map_err(|_| Error::SaddleDiverged { n: n0 })?;
    let s0 = table.action(energy0)?;
    let (_, d2g) = model.ln_g_derivs(n0);
    let n1 = Complex64::new(0.0, 2.0 * omega) / (1.0 - 2.0 * omega * n0 * tau0_prime);
    let f0_pp = omega * tau0_prime - 0.5 / n0 - 0.5 * d2g;
    if !(f0_pp < 0.0) {
        return Err(Error::SaddleDiverged { n: n0 });
    }
    let g_term = if opts.exact_g { -0.5 * ln_g_factor(n0) } else { 0.0 };
    let f0 = Complex64::new((0.5 - omega * tau0) * n0 - s0 / hbar + g_term, 0.0);
    let n1_abs = n1.norm();
    let dt_width = 1.0 / ((-f0_pp).sqrt() * n0 * n1_abs);
    let pre = (-r * r + 2.0 * f0.re).exp();
    let j_peak = pre * omega / (-f0_pp * (2.0 * PI * n0).sqrt());
    let dp = pre * omega / (2.0 * (-f0_pp).powi(3) * n0.powi(3) * n1_abs * n1_abs).sqrt();
    Ok(SaddleResult {
        alpha_abs: r,
        omega,
        hbar,
        n0,
        energy0,
        tau0,
        tau0_prime,
        n1,
        s0,
        f0,
        f0_pp,
        dt_width,
        dp,
        j_peak,
        time_offset: alpha.arg() / omega,
        iterations,
        method,
        narrow: omega * dt_width < 0.5,
    })
}

/// Damped iteration from `|α|²`; the inner `Err` carries the last iterate
/// when the iteration fails to settle or leaves the table.
fn fixed_point(model: &Model) -> Result<std::result::Result<(f64, usize), (f64, usize)>> {
    let mut n = model.r2;
    if !model.valid(n) {
        return Ok(Err((n, 0)));
    }
    for it in 1..=MAX_ITER {
        let next = (1.0 - DAMPING) * n + DAMPING * model.map(n)?;
        if !model.valid(next) {
            return Ok(Err((n, it)));
        }
        if ((next - n) / next).abs() < 1e-12 {
            return Ok(Ok((next, it)));
        }
        n = next;
    }
    Ok(Err((n, MAX_ITER)))
}

/// Safeguarded Newton on `h(n) = n − F(n)` over the bracket around `start`.
fn newton_fallback(model: &Model, start: f64) -> Result<f64> {
    let h = |n: f64| -> Result<f64> { Ok(n - model.map(n)?) };
    let (lo_e, hi_e) = model.table.range();
    let scale = model.hbar * model.omega;
    let n_min = (lo_e / scale - 0.5).max(1e-9);
    let n_max = hi_e / scale - 0.5;
    let start = start.clamp(n_min, n_max);
    // bracket by scanning outward from the last iterate
    let steps = 400;
    let width = (n_max - n_min) / steps as f64;
    let mut bracket = None;
    for k in 0..steps {
        for &sign in &[1.0, -1.0] {
            let a = (start + sign * k as f64 * width).clamp(n_min, n_max);
            let b = (a + sign * width).clamp(n_min, n_max);
            if a == b {
                continue;
            }
            if h(a)? * h(b)? <= 0.0 {
                bracket = Some((a.min(b), a.max(b)));
                break;
            }
        }
        if bracket.is_some() {
            break;
        }
    }
    let (mut lo, mut hi) = bracket.ok_or(Error::SaddleDiverged { n: start })?;
    let mut f_lo = h(lo)?;
    let mut n = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = h(n)?;
        if f == 0.0 {
            return Ok(n);
        }
        if f * f_lo < 0.0 {
            hi = n;
        } else {
            lo = n;
            f_lo = f;
        }
        let d = 1e-6 * n.max(1.0);
        let slope = (h(n + d)? - h(n - d)?) / (2.0 * d);
        let newton = n - f / slope;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if ((next - n) / next).abs() < 1e-13 {
            return Ok(next);
        }
        n = next;
    }
    Err(Error::NoConvergence { iterations: MAX_ITER })
}

/// Gaussian burst `j_peak·exp(f″₀ (n₀|n₁|)² t²)` around the burst center.
pub fn burst_current(result: &SaddleResult, t: f64) -> f64 {
    let s = t - result.time_offset;
    let width = result.n0 * result.n1.norm();
    result.j_peak * (result.f0_pp * width * width * s * s).exp()
}

/// Whether `t` lies in the small-time regime `|ω(t − t_c)| ≤ 0.5`.
pub fn burst_valid(result: &SaddleResult, t: f64) -> bool {
    (result.omega * (t - result.time_offset)).abs() <= 0.5
}

/// Complex saddle at time `t` and the current it gives.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FullSaddlePoint {
    pub t: f64,
    pub n_star: Complex64,
    pub f_star: Complex64,
    pub fpp_star: Complex64,
    pub j: f64,
}

/// Trust region of the continued interpolant: `|Im E_*|` up to this fraction of the table span.
pub const TRUST_FRACTION: f64 = 0.2;

/// `j ≈ e^{−|α|²} ω/(|f″_*|√(2π|n_*|)) e^{2 Re f_*}` with `n_*` solved by
/// complex Newton from `guess` (the real saddle when `None`).
pub fn full_saddle_current(
    alpha: Complex64,
    table: &SemiclassicalTable,
    t: f64,
    guess: Option<Complex64>,
) -> Result<FullSaddlePoint> {
    let r2 = alpha.norm_sqr();
    let omega = table.omega();
    let hbar = table.hbar();
    let s = t - alpha.arg() / omega;
    let start = match guess {
        Some(g) => g,
        None => Complex64::new(solve_saddle(alpha, table, SaddleOptions::default())?.n0, 0.0),
    };
    let energy = |n: Complex64| (n + 0.5) * (hbar * omega);
    let limit = TRUST_FRACTION * table.span();
    let (lo, hi) = table.range();
    let check = |n: Complex64| -> Result<()> {
        let e = energy(n);
        if e.im.abs() > limit {
            return Err(Error::ContinuationOutOfRange { im_energy: e.im, limit });
        }
        if e.re < lo || e.re > hi {
            return Err(Error::SaddleDiverged { n: n.re });
        }
        Ok(())
    };
    let rhs = |n: Complex64| r2 * ((table.tau_complex(energy(n)) + Complex64::new(0.0, s)) * (2.0 * omega)).exp();
    let mut n = start;
    check(n)?;
    let mut converged = false;
    for _ in 0..100 {
        let g = rhs(n);
        let f = n - g;
        let df = 1.0 - g * (2.0 * omega * hbar * omega) * table.tau_deriv_complex(energy(n));
        let step = f / df;
        n -= step;
        check(n)?;
        if step.norm() <= 1e-12 * n.norm() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations: 100 });
    }
    let e = energy(n);
    let tau = table.tau_complex(e);
    let tau_prime = table.tau_deriv_complex(e) * (hbar * omega);
    let f_star = (0.5 - tau * omega) * n - table.action_complex(e) / hbar;
    let fpp_star = tau_prime * omega - 0.5 / n;
    let j = (-r2 + 2.0 * f_star.re).exp() * omega / (fpp_star.norm() * (2.0 * PI * n.norm()).sqrt());
    Ok(FullSaddlePoint { t, n_star: n, f_star, fpp_star, j })
}

/// Full saddle over `times`, continuing the solution outward from the burst
/// center; points beyond the trust region are `None`.
pub fn full_saddle_scan(alpha: Complex64, table: &SemiclassicalTable, times: &[f64]) -> Result<Vec<Option<FullSaddlePoint>>> {
    let center = alpha.arg() / table.omega();
    let n0 = Complex64::new(solve_saddle(alpha, table, SaddleOptions::default())?.n0, 0.0);
    let mut out = vec![None; times.len()];
    let pivot = times.partition_point(|&t| t < center);
    let mut walk = |indices: &mut dyn Iterator<Item = usize>| {
        let mut guess = n0;
        let mut last_t = center;
        for i in indices {
            // substep so Newton always starts close to the new solution
            let sub = ((times[i] - last_t).abs() / 0.01).ceil().max(1.0) as usize;
            let mut ok = true;
            for k in 1..=sub {
                let t = last_t + (times[i] - last_t) * k as f64 / sub as f64;
                match full_saddle_current(alpha, table, t, Some(guess)) {
                    Ok(p) => {
                        guess = p.n_star;
                        if k == sub {
                            out[i] = Some(p);
                        }
                    }
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                break;
            }
            last_t = times[i];
        }
    };
    walk(&mut (pivot..times.len()));
    walk(&mut (0..pivot).rev());
    Ok(out)
}
