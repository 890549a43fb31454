//! Semiclassical quantities: barrier action, classical period, barrier
//! time, the low-level prefactor g(n) and WKB widths.
//!
//! Turning-point integrals use Gauss-Legendre on pieces split at the
//! potential's kinks, with `x = lo + u²` / `x = hi - u²` on the end pieces
//! so the square-root endpoint behaviour becomes smooth in `u`.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::spline::CubicSpline;

/// Gauss-Legendre nodes per sub-interval.
pub const DEFAULT_NODES: usize = 48;

fn rule(nodes: usize) -> GaussLegendre {
    GaussLegendre::new(NonZeroUsize::new(nodes.max(1)).unwrap())
}

/// `∫_lo^hi f` for an integrand with at most inverse-square-root endpoint
/// singularities, split at `breaks` that fall strictly inside.
pub fn regularized_integral<F>(lo: f64, hi: f64, breaks: &[f64], nodes: usize, f: F) -> f64
where
    F: Fn(f64) -> f64,
{
    let gl = rule(nodes);
    let margin = 1e-12 * (hi - lo).abs().max(1.0);
    let mut pts = vec![lo];
    pts.extend(breaks.iter().copied().filter(|&p| p > lo + margin && p < hi - margin));
    pts.push(hi);
    if pts.len() == 2 {
        pts.insert(1, 0.5 * (lo + hi));
    }
    let last = pts.len() - 2;
    let mut total = 0.0;
    for (k, w) in pts.windows(2).enumerate() {
        let (p, q) = (w[0], w[1]);
        total += if k == 0 {
            gl.integrate(0.0, (q - p).sqrt(), |u| 2.0 * u * f(p + u * u))
        } else if k == last {
            gl.integrate(0.0, (q - p).sqrt(), |u| 2.0 * u * f(q - u * u))
        } else {
            gl.integrate(p, q, &f)
        };
    }
    total
}

fn kappa(pot: &Potential, x: f64, e: f64) -> f64 {
    (2.0 * pot.spec().m * (pot.real(x) - e)).max(0.0).sqrt()
}

fn momentum(pot: &Potential, x: f64, e: f64) -> f64 {
    (2.0 * pot.spec().m * (e - pot.real(x))).max(0.0).sqrt()
}

/// Barrier action `S(E) = ∫_a^b κ`.
pub fn action(pot: &Potential, e: f64) -> Result<f64> {
    action_with(pot, e, DEFAULT_NODES)
}

pub fn action_with(pot: &Potential, e: f64, nodes: usize) -> Result<f64> {
    let tp = pot.turning_points(e)?;
    Ok(regularized_integral(tp.a, tp.b, &pot.breakpoints(), nodes, |x| kappa(pot, x, e)))
}

/// Full classical oscillation time `t(E) = ∫_c^a 2m/k`.
pub fn classical_period(pot: &Potential, e: f64) -> Result<f64> {
    classical_period_with(pot, e, DEFAULT_NODES)
}

pub fn classical_period_with(pot: &Potential, e: f64, nodes: usize) -> Result<f64> {
    let tp = pot.turning_points(e)?;
    let m = pot.spec().m;
    Ok(regularized_integral(tp.c, tp.a, &pot.breakpoints(), nodes, |x| 2.0 * m / momentum(pot, x, e)))
}

/// Upper end of the range where `τ(E)` is returned; it diverges at the barrier top.
pub fn tau_limit(pot: &Potential) -> f64 {
    0.95 * pot.barrier_top().1
}

/// Barrier traversal time `τ(E) = ∫_a^b m/κ = −∂_E S`.
pub fn barrier_time(pot: &Potential, e: f64) -> Result<f64> {
    barrier_time_with(pot, e, DEFAULT_NODES)
}

pub fn barrier_time_with(pot: &Potential, e: f64, nodes: usize) -> Result<f64> {
    let limit = tau_limit(pot);
    if e > limit {
        return Err(Error::EnergyOutOfRange { energy: e, lo: 0.0, hi: limit });
    }
    let tp = pot.turning_points(e)?;
    let m = pot.spec().m;
    Ok(regularized_integral(tp.a, tp.b, &pot.breakpoints(), nodes, |x| m / kappa(pot, x, e)))
}

/// Tabulated `S`, `t`, `τ` with natural cubic interpolants in `E`.
#[derive(Clone, Debug)]
pub struct SemiclassicalTable {
    hbar: f64,
    omega: f64,
    v_b: f64,
    action: CubicSpline,
    period: CubicSpline,
    tau: CubicSpline,
}

pub const DEFAULT_TABLE_POINTS: usize = 256;

impl SemiclassicalTable {
    /// Table on `[0.05·V_b, 0.95·V_top]`.
    pub fn new(pot: &Potential) -> Result<Self> {
        Self::with_points(pot, DEFAULT_TABLE_POINTS)
    }

    pub fn with_points(pot: &Potential, points: usize) -> Result<Self> {
        let s = pot.spec();
        let lo = 0.05 * s.v_b;
        let hi = tau_limit(pot);
        if points < 3 || hi <= lo {
            return Err(Error::InvalidInput(format!("cannot tabulate {points} points on [{lo}, {hi}]")));
        }
        let energies: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
        let mut sv = Vec::with_capacity(points);
        let mut tv = Vec::with_capacity(points);
        let mut tauv = Vec::with_capacity(points);
        for &e in &energies {
            sv.push(action(pot, e)?);
            tv.push(classical_period(pot, e)?);
            tauv.push(barrier_time(pot, e)?);
        }
        // End slopes: S' = -τ exactly; t' and τ' by differencing the quadratures.
        let h = 1e-5 * s.v_b;
        let slope = |f: &dyn Fn(f64) -> Result<f64>, e: f64| -> Result<f64> { Ok((f(e + h)? - f(e - h)?) / (2.0 * h)) };
        let period_fn = |e: f64| classical_period(pot, e);
        let tau_fn = |e: f64| barrier_time(pot, e);
        let (t0, tn) = (slope(&period_fn, lo)?, slope(&period_fn, hi - h)?);
        let (u0, un) = (slope(&tau_fn, lo)?, slope(&tau_fn, hi - h)?);
        Ok(SemiclassicalTable {
            hbar: s.hbar,
            omega: s.omega,
            v_b: s.v_b,
            action: CubicSpline::clamped(energies.clone(), sv, -tauv[0], -tauv[points - 1]),
            period: CubicSpline::clamped(energies.clone(), tv, t0, tn),
            tau: CubicSpline::clamped(energies, tauv, u0, un),
        })
    }

    pub fn range(&self) -> (f64, f64) {
        self.action.range()
    }

    pub fn span(&self) -> f64 {
        let (lo, hi) = self.range();
        hi - lo
    }

    pub fn contains(&self, e: f64) -> bool {
        let (lo, hi) = self.range();
        e >= lo && e <= hi
    }

    pub fn energies(&self) -> &[f64] {
        self.action.knots()
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// `E(n) = ħω(n + ½)`.
    pub fn level_energy(&self, n: f64) -> f64 {
        self.hbar * self.omega * (n + 0.5)
    }

    fn check(&self, e: f64) -> Result<()> {
        let (lo, hi) = self.range();
        if self.contains(e) {
            Ok(())
        } else {
            Err(Error::EnergyOutOfRange { energy: e, lo, hi })
        }
    }

    pub fn action(&self, e: f64) -> Result<f64> {
        self.check(e)?;
        Ok(self.action.eval(e))
    }

    pub fn period(&self, e: f64) -> Result<f64> {
        self.check(e)?;
        Ok(self.period.eval(e))
    }

    pub fn tau(&self, e: f64) -> Result<f64> {
        self.check(e)?;
        Ok(self.tau.eval(e))
    }

    /// `−∂_E S` from the action interpolant.
    pub fn action_slope(&self, e: f64) -> Result<f64> {
        self.check(e)?;
        Ok(-self.action.derivative(e))
    }

    fn step(&self) -> f64 {
        1e-4 * self.v_b
    }

    /// `∂_E τ` by centered difference on the interpolant.
    pub fn tau_deriv(&self, e: f64) -> Result<f64> {
        let h = self.step();
        self.check(e - h)?;
        self.check(e + h)?;
        Ok((self.tau.eval(e + h) - self.tau.eval(e - h)) / (2.0 * h))
    }

    /// Interpolants continued to complex energy.
    pub fn action_complex(&self, e: Complex64) -> Complex64 {
        self.action.eval_complex(e)
    }

    pub fn tau_complex(&self, e: Complex64) -> Complex64 {
        self.tau.eval_complex(e)
    }

    pub fn tau_deriv_complex(&self, e: Complex64) -> Complex64 {
        let h = self.step();
        (self.tau.eval_complex(e + h) - self.tau.eval_complex(e - h)) / (2.0 * h)
    }
}

/// `g(n) = (1/√2π)(e/(n+½))^{n+½} n!`, continued to real `n` through `ln Γ`.
pub fn g_factor(n: f64) -> f64 {
    ln_g_factor(n).exp()
}

pub fn ln_g_factor(n: f64) -> f64 {
    let h = n + 0.5;
    -0.5 * (2.0 * PI).ln() + h * (1.0 - h.ln()) + ln_gamma(n + 1.0)
}

/// WKB width `Γ_n = e^{−2S_n/ħ}/(g_n t_n)` at the harmonic energy of level `n`;
/// `with_g = false` sets `g_n = 1`.
pub fn wkb_width(pot: &Potential, n: usize, with_g: bool) -> Result<f64> {
    Ok(wkb_level(pot, n)?.width(with_g))
}

/// Semiclassical data of one harmonic level.
#[derive(Clone, Debug, PartialEq)]
pub struct WkbLevel {
    pub n: usize,
    pub energy: f64,
    pub action: f64,
    pub period: f64,
    pub tau: f64,
    pub g: f64,
    pub hbar: f64,
}

impl WkbLevel {
    pub fn width(&self, with_g: bool) -> f64 {
        let g = if with_g { self.g } else { 1.0 };
        (-2.0 * self.action / self.hbar).exp() / (g * self.period)
    }
}

pub fn wkb_level(pot: &Potential, n: usize) -> Result<WkbLevel> {
    let s = pot.spec();
    let energy = s.harmonic_energy(n as f64);
    let limit = tau_limit(pot);
    if energy >= limit {
        return Err(Error::EnergyOutOfRange { energy, lo: 0.0, hi: limit });
    }
    Ok(WkbLevel {
        n,
        energy,
        action: action(pot, energy)?,
        period: classical_period(pot, energy)?,
        tau: barrier_time(pot, energy)?,
        g: g_factor(n as f64),
        hbar: s.hbar,
    })
}

/// Breit-Wigner approximation to the continuum normalization near `E_n`
/// (`t_n → g_n t_n` for low levels is the caller's choice of `t_n`).
pub fn breit_wigner_norm(e: f64, e_n: f64, t_n: f64, s_n: f64, m: f64, hbar: f64) -> f64 {
    let ln_theta = s_n / hbar;
    let half = hbar / (2.0 * t_n) * (-2.0 * ln_theta).exp();
    let de = e - e_n;
    (m * hbar / (2.0 * PI * t_n * t_n)).sqrt() * (-ln_theta).exp() / (de * de + half * half).sqrt()
}

/// Linear-turning-point condition `ħ ≪ √m V'²/|V''|^{3/2}` at c, a, b.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearValidity {
    pub energy: f64,
    /// Bounds at (c, a, b); infinite where the potential is locally linear.
    pub bounds: [f64; 3],
    /// Set when ħ exceeds 10% of the smallest bound.
    pub warning: bool,
}

pub fn linear_validity(pot: &Potential, e: f64) -> Result<LinearValidity> {
    let tp = pot.turning_points(e)?;
    let s = pot.spec();
    let bound = |x: f64| {
        let d1 = pot.derivative(x);
        let d2 = pot.second_derivative(x).abs();
        if d2 == 0.0 {
            f64::INFINITY
        } else {
            s.m.sqrt() * d1 * d1 / d2.powf(1.5)
        }
    };
    let bounds = [bound(tp.c), bound(tp.a), bound(tp.b)];
    let min = bounds.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LinearValidity { energy: e, bounds, warning: s.hbar > 0.1 * min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialSpec;

    fn sharp() -> Potential {
        Potential::new(PotentialSpec { delta: 0.0, ..PotentialSpec::default() }).unwrap()
    }

    #[test]
    fn rectangular_barrier() {
        let (v_b, w, e, m): (f64, f64, f64, f64) = (18.0, 0.9, 5.5, 1.0);
        let s = regularized_integral(0.0, w, &[], 16, |_| (2.0 * m * (v_b - e)).sqrt());
        assert!((s - w * (2.0 * m * (v_b - e)).sqrt()).abs() < 1e-13);
        let tau = regularized_integral(0.0, w, &[], 16, |_| m / (2.0 * m * (v_b - e)).sqrt());
        assert!((tau - w * m / (2.0 * m * (v_b - e)).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn sharp_junction_closed_forms() {
        let pot = sharp();
        // harmonic arcosh segment plus linear-ramp power law
        let s = action(&pot, 5.5).unwrap();
        assert!((s - 10.489_121_333_137_814).abs() < 1e-8 * s, "{s}");
        let tau = barrier_time(&pot, 5.5).unwrap();
        assert!((tau - 1.448_947_636_399_185).abs() < 1e-6 * tau, "{tau}");
    }

    #[test]
    fn harmonic_period_is_isochronous() {
        let pot = sharp();
        for e in [0.5, 2.0, 5.5, 12.0] {
            let t = classical_period(&pot, e).unwrap();
            assert!((t - 2.0 * PI).abs() < 1e-10, "{e}: {t}");
        }
        let smooth = Potential::new(PotentialSpec::default()).unwrap();
        assert!((classical_period(&smooth, 0.5).unwrap() - 2.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn action_vanishes_at_the_top() {
        let pot = sharp();
        let s = action(&pot, 18.0 * (1.0 - 1e-9)).unwrap();
        assert!(s < 1e-5, "{s}");
    }

    #[test]
    fn quadratures_converge_under_refinement() {
        let pot = Potential::new(PotentialSpec::default()).unwrap();
        for e in [1.0, 5.5, 10.0, 15.0] {
            let pairs = [
                (action_with(&pot, e, 24).unwrap(), action_with(&pot, e, 48).unwrap()),
                (classical_period_with(&pot, e, 24).unwrap(), classical_period_with(&pot, e, 48).unwrap()),
                (barrier_time_with(&pot, e, 24).unwrap(), barrier_time_with(&pot, e, 48).unwrap()),
            ];
            for (a, b) in pairs {
                assert!(((a - b) / b).abs() < 1e-7, "{e}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn tau_is_minus_action_slope() {
        let pot = Potential::new(PotentialSpec::default()).unwrap();
        let table = SemiclassicalTable::new(&pot).unwrap();
        for &e in table.energies() {
            let tau = barrier_time(&pot, e).unwrap();
            let slope = table.action_slope(e).unwrap();
            assert!(((slope - tau) / tau).abs() < 1e-4, "{e}: {slope} vs {tau}");
        }
    }

    #[test]
    fn barrier_time_flags_the_top() {
        let pot = Potential::new(PotentialSpec::default()).unwrap();
        assert!(matches!(barrier_time(&pot, 0.96 * pot.barrier_top().1), Err(Error::EnergyOutOfRange { .. })));
    }

    #[test]
    fn g_factor_values() {
        assert!((g_factor(0.0) - 0.930_191_367_102_633).abs() < 1e-12);
        assert!((g_factor(1.0) - 0.973_228_683_260_018).abs() < 1e-12);
        assert!((g_factor(2.0) - 0.983_617_494_770_084).abs() < 1e-12);
        assert!((g_factor(100.0) - (1.0 - 1.0 / 2400.0)).abs() < 1e-4);
        let mut prev = 0.0;
        for i in 0..200 {
            let g = g_factor(i as f64 * 0.5);
            assert!(g > 0.9 && g <= 1.0 && g > prev);
            prev = g;
        }
    }

    #[test]
    fn widths_increase_and_reduce_without_g() {
        let pot = Potential::new(PotentialSpec::default()).unwrap();
        let mut prev = 0.0;
        for n in 0..14 {
            let level = wkb_level(&pot, n).unwrap();
            let g1 = (-2.0 * level.action).exp() / level.period;
            assert_eq!(level.width(false), g1);
            assert!(level.width(true) > prev);
            prev = level.width(true);
        }
        assert!(wkb_width(&pot, 16, true).is_err());
    }

    #[test]
    fn breit_wigner_peak_and_half_width() {
        let (t_n, s_n) = (2.0 * PI, 5.0);
        let peak = breit_wigner_norm(1.0, 1.0, t_n, s_n, 1.0, 1.0);
        assert!((peak - 118.416_568_267_925_11).abs() < 1e-9);
        let half = 1.0 / (2.0 * t_n * (2.0 * s_n).exp());
        let off = breit_wigner_norm(1.0 + half, 1.0, t_n, s_n, 1.0, 1.0);
        assert!((off - peak / 2f64.sqrt()).abs() < 1e-9 * peak);
        assert!(breit_wigner_norm(1.5, 1.0, t_n, 400.0, 1.0, 1.0) < 1e-150);
    }

    #[test]
    fn validity_bounds() {
        let pot = sharp();
        let v = linear_validity(&pot, 5.5).unwrap();
        // harmonic arms: m ω x²
        assert!((v.bounds[0] - 11.0).abs() < 1e-8);
        assert!((v.bounds[1] - 11.0).abs() < 1e-8);
        assert!(v.bounds[2].is_infinite());
        assert!(!v.warning);
        let low = linear_validity(&pot, 0.2).unwrap();
        assert!(low.warning);
    }
}
