//! Crank-Nicolson propagation, observable streaming and series comparison.

use std::f64::consts::TAU;
use std::sync::mpsc;
use std::thread;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::current::{CurrentSeries, Provenance, SeriesMeta};
use crate::error::{Error, Result};
use crate::grid::{current_at_index, trapezoid_abs2, Boundary, Hamiltonian};
use crate::linalg::ThomasFactor;
use crate::potential::PotentialSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt: f64,
    #[serde(rename = "T", alias = "t_total")]
    pub t_total: f64,
    pub record_stride: usize,
    pub boundary: Boundary,
}

impl EvolutionConfig {
    /// `dt = 10⁻³·2π/ω`, samples every 10 steps.
    pub fn with_defaults(omega: f64, t_total: f64, boundary: Boundary) -> Self {
        EvolutionConfig { dt: 1e-3 * TAU / omega, t_total, record_stride: 10, boundary }
    }

    pub fn validate(&self, omega: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if self.dt > 0.05 / omega * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!("dt = {} exceeds 0.05/omega = {}", self.dt, 0.05 / omega)));
        }
        if !(self.t_total >= TAU / omega * (1.0 - 1e-12)) || !self.t_total.is_finite() {
            return Err(Error::InvalidInput(format!("T = {} is shorter than one period", self.t_total)));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidInput("record_stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_total / self.dt).round() as usize
    }
}

/// Observables at one recorded time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    /// Probability on `[x_min, x_T]`.
    pub p_well: f64,
    pub p_beyond: f64,
    /// Current at `x_T`.
    pub j: f64,
    pub norm: f64,
}

/// One Crank-Nicolson integrator bound to a Hamiltonian.
pub struct Propagator<'a> {
    h: &'a Hamiltonian,
    factor: ThomasFactor,
    /// `i·dt/(2ħ)`.
    coeff: Complex64,
    dt: f64,
    i_t: usize,
}

impl<'a> Propagator<'a> {
    pub fn new(h: &'a Hamiltonian, dt: f64, x_t: f64) -> Result<Self> {
        let grid = h.grid();
        let i_t = grid.index_of(x_t)?;
        if i_t < 2 || i_t + 2 >= grid.len() {
            return Err(Error::OutOfGrid { x: x_t });
        }
        let coeff = Complex64::new(0.0, dt / (2.0 * h.hbar()));
        let diag: Vec<Complex64> = h.diag().iter().map(|d| 1.0 + coeff * d).collect();
        let factor = ThomasFactor::new(&diag, coeff * h.off_diagonal());
        Ok(Propagator { h, factor, coeff, dt, i_t })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance `psi` by one step in place.
    pub fn step(&self, psi: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        let n = psi.len();
        let off = self.h.off_diagonal();
        let diag = self.h.diag();
        scratch.clear();
        scratch.extend((0..n).map(|i| {
            let mut hp = diag[i] * psi[i];
            if i > 0 {
                hp += off * psi[i - 1];
            }
            if i + 1 < n {
                hp += off * psi[i + 1];
            }
            psi[i] - self.coeff * hp
        }));
        self.factor.solve(scratch);
        psi.copy_from_slice(scratch);
    }

    pub fn observe(&self, psi: &[Complex64], t: f64) -> Sample {
        let hs = self.h.grid().spacing();
        let last = psi.len() - 1;
        let p_well = trapezoid_abs2(psi, hs, 0, self.i_t);
        let p_beyond = trapezoid_abs2(psi, hs, self.i_t, last);
        Sample {
            t,
            p_well,
            p_beyond,
            j: current_at_index(psi, hs, self.i_t, self.h.hbar(), self.h.mass()),
            norm: p_well + p_beyond,
        }
    }
}

/// What the sink receives at each recorded time.
pub struct Record<'s> {
    pub sample: Sample,
    /// Present on snapshot steps.
    pub psi: Option<&'s [Complex64]>,
}

/// Runs a validated configuration from `psi0`.
pub struct Evolution<'a> {
    h: &'a Hamiltonian,
    cfg: EvolutionConfig,
    x_t: f64,
    snapshot_every: Option<usize>,
}

impl<'a> Evolution<'a> {
    pub fn new(h: &'a Hamiltonian, cfg: EvolutionConfig, omega: f64, x_t: f64) -> Result<Self> {
        cfg.validate(omega)?;
        if cfg.boundary != h.boundary() {
            return Err(Error::InvalidInput(format!(
                "config boundary {:?} does not match the Hamiltonian ({:?})",
                cfg.boundary,
                h.boundary()
            )));
        }
        Ok(Evolution { h, cfg, x_t, snapshot_every: None })
    }

    /// Pass the wavefunction to the sink on every `k`-th recorded sample.
    pub fn with_snapshots(mut self, k: usize) -> Self {
        self.snapshot_every = Some(k.max(1));
        self
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.cfg
    }

    /// Streams observables to `sink` every `record_stride` steps, starting at `t = 0`.
    pub fn run<F>(&self, psi0: &[Complex64], mut sink: F) -> Result<()>
    where
        F: FnMut(Record<'_>),
    {
        if psi0.len() != self.h.len() {
            return Err(Error::InvalidInput(format!(
                "initial state has {} points, grid has {}",
                psi0.len(),
                self.h.len()
            )));
        }
        let prop = Propagator::new(self.h, self.cfg.dt, self.x_t)?;
        let first = prop.observe(psi0, 0.0);
        if (first.p_well - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("initial state has well-side norm {}", first.p_well)));
        }
        let hard = self.h.boundary() == Boundary::Hardwall;
        let hs = self.h.grid().spacing();
        let last = psi0.len() - 1;
        let mut psi = psi0.to_vec();
        let mut scratch = Vec::with_capacity(psi.len());
        let mut norm = first.norm;
        let mut recorded = 0usize;
        let snap = |recorded: usize| self.snapshot_every.is_some_and(|k| recorded % k == 0);
        sink(Record { sample: first, psi: snap(0).then_some(&psi[..]) });
        let steps = self.cfg.steps();
        for step in 1..=steps {
            prop.step(&mut psi, &mut scratch);
            if hard {
                let next = trapezoid_abs2(&psi, hs, 0, last);
                let growth = next / norm - 1.0;
                if growth > 1e-6 || !next.is_finite() {
                    return Err(Error::StepUnstable { step, growth });
                }
                norm = next;
            }
            if step % self.cfg.record_stride == 0 {
                recorded += 1;
                let sample = prop.observe(&psi, step as f64 * self.cfg.dt);
                if !sample.norm.is_finite() {
                    return Err(Error::StepUnstable { step, growth: f64::INFINITY });
                }
                sink(Record { sample, psi: snap(recorded).then_some(&psi[..]) });
            }
        }
        Ok(())
    }

    /// Runs to completion and keeps every sample and snapshot.
    pub fn collect(&self, psi0: &[Complex64]) -> Result<Trajectory> {
        let mut samples = Vec::with_capacity(self.cfg.steps() / self.cfg.record_stride + 1);
        let mut snapshots = Vec::new();
        self.run(psi0, |r| {
            samples.push(r.sample);
            if let Some(psi) = r.psi {
                snapshots.push((r.sample.t, psi.to_vec()));
            }
        })?;
        Ok(Trajectory { samples, snapshots, x_t: self.x_t })
    }

    /// Largest per-step `|ΔP_well/dt + j(ψ_mid)|` over the run, relative to the
    /// largest `|j(ψ_mid)|`, with `ψ_mid` the average of consecutive states.
    pub fn step_continuity(&self, psi0: &[Complex64]) -> Result<f64> {
        let prop = Propagator::new(self.h, self.cfg.dt, self.x_t)?;
        let hs = self.h.grid().spacing();
        let (hbar, m) = (self.h.hbar(), self.h.mass());
        let mut psi = psi0.to_vec();
        let mut next = psi.clone();
        let mut mid = psi.clone();
        let mut scratch = Vec::with_capacity(psi.len());
        let (mut defect, mut peak) = (0.0f64, 0.0f64);
        for _ in 0..self.cfg.steps() {
            next.copy_from_slice(&psi);
            prop.step(&mut next, &mut scratch);
            for ((z, a), b) in mid.iter_mut().zip(&psi).zip(&next) {
                *z = 0.5 * (a + b);
            }
            let j = current_at_index(&mid, hs, prop.i_t, hbar, m);
            // |b|² − |a|² = Re[(b − a)*(b + a)] pointwise, so the change in P_well
            // is not lost against P_well ≈ 1
            let dp: f64 = (0..=prop.i_t)
                .map(|i| {
                    let w = if i == 0 || i == prop.i_t { 0.5 } else { 1.0 };
                    w * ((next[i] - psi[i]).conj() * mid[i]).re * 2.0
                })
                .sum::<f64>()
                * hs;
            defect = defect.max((dp / self.cfg.dt + j).abs());
            peak = peak.max(j.abs());
            std::mem::swap(&mut psi, &mut next);
        }
        Ok(if peak > 0.0 { defect / peak } else { defect })
    }
}

/// Runs on a worker thread and delivers samples through a channel; the
/// handle yields the run's outcome.
pub fn spawn_evolution(
    h: Hamiltonian,
    cfg: EvolutionConfig,
    omega: f64,
    x_t: f64,
    psi0: Vec<Complex64>,
) -> (mpsc::Receiver<Sample>, thread::JoinHandle<Result<()>>) {
    let (tx, rx) = mpsc::channel();
    let handle = thread::spawn(move || {
        let ev = Evolution::new(&h, cfg, omega, x_t)?;
        ev.run(&psi0, |r| {
            // a dropped receiver just discards the rest
            let _ = tx.send(r.sample);
        })
    });
    (rx, handle)
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub snapshots: Vec<(f64, Vec<Complex64>)>,
    pub x_t: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn current_series(&self, alpha: Option<Complex64>) -> Result<CurrentSeries> {
        let mut series =
            CurrentSeries::new(self.times(), self.samples.iter().map(|s| s.j).collect(), Provenance::Evolution)?;
        series.meta = SeriesMeta { x_t: Some(self.x_t), alpha: alpha.map(|a| (a.re, a.im)), ..SeriesMeta::default() };
        Ok(series)
    }

    /// `1 − P_well(t)`.
    pub fn escaped(&self) -> Vec<f64> {
        self.samples.iter().map(|s| 1.0 - s.p_well).collect()
    }

    /// Largest `|d/dt P_well + j|` using centered differences of the recorded samples.
    pub fn continuity_defect(&self) -> f64 {
        self.samples
            .windows(3)
            .map(|w| {
                let dp = (w[2].p_well - w[0].p_well) / (w[2].t - w[0].t);
                (dp + w[1].j).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_norm_drift(&self) -> f64 {
        let n0 = self.samples.first().map_or(1.0, |s| s.norm);
        self.samples.iter().map(|s| (s.norm - n0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub max_abs: f64,
    pub rms: f64,
    /// Divided by the reference peak `max|a|` in the window.
    pub max_normalized: f64,
    pub rms_normalized: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Residual of `b` against the reference `a` on `a`'s samples inside the
/// window, with `b` interpolated linearly in time.
pub fn compare(a: &CurrentSeries, b: &CurrentSeries, window: Option<(f64, f64)>) -> Result<ResidualReport> {
    let (a0, a1) = a.span();
    let (b0, b1) = b.span();
    let (mut lo, mut hi) = (a0.max(b0), a1.min(b1));
    if let Some((w0, w1)) = window {
        lo = lo.max(w0);
        hi = hi.min(w1);
    }
    let eps = 1e-12 * (1.0 + hi.abs());
    let mut max_abs = 0.0f64;
    let mut sum_sq = 0.0;
    let mut peak = 0.0f64;
    let mut count = 0usize;
    for (&t, &ja) in a.times.iter().zip(&a.j) {
        if t < lo - eps || t > hi + eps {
            continue;
        }
        let jb = b.value_at(t.clamp(b0, b1)).ok_or(Error::NoOverlap)?;
        let d = (ja - jb).abs();
        max_abs = max_abs.max(d);
        sum_sq += d * d;
        peak = peak.max(ja.abs());
        count += 1;
    }
    if count == 0 || hi < lo {
        return Err(Error::NoOverlap);
    }
    let rms = (sum_sq / count as f64).sqrt();
    let scale = if peak > 0.0 { peak } else { 1.0 };
    Ok(ResidualReport {
        max_abs,
        rms,
        max_normalized: max_abs / scale,
        rms_normalized: rms / scale,
        window: (lo, hi),
        samples: count,
    })
}

/// `2·(x_max − (L + w))/√(2E/m)`: time for an outgoing wave at `E` to reach
/// the far wall and come back.
pub fn reflection_time(spec: &PotentialSpec, x_max: f64, e_char: f64) -> Result<f64> {
    if !(e_char > 0.0) {
        return Err(Error::InvalidInput(format!("characteristic energy must be positive, got {e_char}")));
    }
    let v = (2.0 * e_char / spec.m).sqrt();
    Ok(2.0 * (x_max - (spec.l + spec.w)) / v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::spectral::eigenvector;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn oscillator(x0: f64, x1: f64) -> Hamiltonian {
        let grid = Grid::new(x0, x1, 0.02).unwrap();
        let v: Vec<Complex64> = grid.points().map(|x| c(0.5 * x * x, 0.0)).collect();
        Hamiltonian::from_parts(&grid, &v, 1.0, 1.0)
    }

    #[test]
    fn config_validation() {
        let ok = EvolutionConfig::with_defaults(1.0, TAU, Boundary::Cap);
        assert!(ok.validate(1.0).is_ok());
        assert_eq!(ok.steps(), 1000);
        let mut bad = ok.clone();
        bad.dt = 0.06;
        assert!(bad.validate(1.0).is_err());
        bad = ok.clone();
        bad.t_total = 1.0;
        assert!(bad.validate(1.0).is_err());
        bad = ok.clone();
        bad.record_stride = 0;
        assert!(bad.validate(1.0).is_err());
        bad = ok;
        bad.dt = -1.0;
        assert!(bad.validate(1.0).is_err());
    }

    #[test]
    fn ground_state_is_stationary() {
        let h = oscillator(-10.0, 10.0);
        let pair = eigenvector(&h, c(0.5, 0.0), 0).unwrap();
        let hs = h.grid().spacing();
        let mut psi0 = pair.vector;
        let norm = trapezoid_abs2(&psi0, hs, 0, psi0.len() - 1).sqrt();
        psi0.iter_mut().for_each(|z| *z /= norm);
        let cfg = EvolutionConfig { dt: 1e-3 * TAU, t_total: 10.0 * TAU, record_stride: 1000, boundary: Boundary::Hardwall };
        let ev = Evolution::new(&h, cfg, 1.0, 9.0).unwrap().with_snapshots(1);
        let traj = ev.collect(&psi0).unwrap();
        assert_eq!(traj.snapshots.len(), 11);
        for (_, psi) in &traj.snapshots {
            let overlap = crate::grid::trapezoid_inner(&psi0, psi, hs, 0, psi.len() - 1).norm();
            assert!((overlap - 1.0).abs() < 1e-6, "{overlap}");
        }
        assert!(traj.max_norm_drift() < 1e-9);
    }

    #[test]
    fn free_packet_spreads() {
        let grid = Grid::new(-40.0, 40.0, 0.02).unwrap();
        let zero = vec![c(0.0, 0.0); grid.len()];
        let h = Hamiltonian::from_parts(&grid, &zero, 1.0, 1.0);
        let sigma: f64 = 1.0;
        // ψ ∝ exp(−x²/2σ²), so σ² = 2⟨x²⟩
        let pre = (std::f64::consts::PI * sigma * sigma).powf(-0.25);
        let psi0: Vec<Complex64> = grid.points().map(|x| c(pre * (-x * x / (2.0 * sigma * sigma)).exp(), 0.0)).collect();
        let cfg = EvolutionConfig { dt: 1e-3, t_total: 2.0 * TAU, record_stride: 1000, boundary: Boundary::Hardwall };
        let mut widths = Vec::new();
        Evolution::new(&h, cfg, 1.0, 35.0)
            .unwrap()
            .with_snapshots(1)
            .run(&psi0, |r| {
                let psi = r.psi.unwrap();
                let num: f64 = grid.points().zip(psi).map(|(x, z)| x * x * z.norm_sqr()).sum();
                let den: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
                widths.push((r.sample.t, 2.0 * num / den));
            })
            .unwrap();
        for (t, w2) in widths {
            let expect = sigma * sigma * (1.0 + (t / (sigma * sigma)).powi(2));
            assert!(((w2 - expect) / expect).abs() < 1e-2, "t={t}: {w2} vs {expect}");
        }
    }

    #[test]
    fn continuity_holds_step_by_step() {
        let h = oscillator(-10.0, 10.0);
        let grid = h.grid().clone();
        // displaced packet moving through x_T = 1
        let psi0: Vec<Complex64> = grid
            .points()
            .map(|x| c((-(x + 2.0) * (x + 2.0) / 2.0).exp() * std::f64::consts::PI.powf(-0.25), 0.0))
            .collect();
        let cfg = EvolutionConfig { dt: 1e-3, t_total: TAU, record_stride: 1, boundary: Boundary::Hardwall };
        let traj = Evolution::new(&h, cfg, 1.0, 6.0).unwrap().collect(&psi0).unwrap();
        assert!(traj.max_norm_drift() < 1e-9);
        let cfg = EvolutionConfig { dt: 1e-3, t_total: TAU, record_stride: 1, boundary: Boundary::Hardwall };
        let ev = Evolution::new(&h, cfg, 1.0, 1.0).unwrap();
        let err = ev.collect(&psi0).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        let mut shifted = psi0.clone();
        let i1 = grid.index_of(1.0).unwrap();
        let well = trapezoid_abs2(&shifted, grid.spacing(), 0, i1).sqrt();
        shifted.iter_mut().for_each(|z| *z /= well);
        let traj = ev.collect(&shifted).unwrap();
        let peak = traj.samples.iter().map(|s| s.j.abs()).fold(0.0, f64::max);
        assert!(peak > 0.1);
        assert!(traj.continuity_defect() < 1e-4 * peak, "{}", traj.continuity_defect() / peak);
        let exact = ev.step_continuity(&shifted).unwrap();
        assert!(exact < 1e-10, "{exact}");
    }

    #[test]
    fn boundary_mismatch_is_rejected() {
        let h = oscillator(-10.0, 10.0);
        let cfg = EvolutionConfig::with_defaults(1.0, TAU, Boundary::Cap);
        assert!(Evolution::new(&h, cfg, 1.0, 5.0).is_err());
    }

    #[test]
    fn channel_delivers_every_sample() {
        let h = oscillator(-8.0, 8.0);
        let psi0: Vec<Complex64> = h.grid().points().map(|x| c((-x * x / 2.0).exp() * std::f64::consts::PI.powf(-0.25), 0.0)).collect();
        let cfg = EvolutionConfig::with_defaults(1.0, TAU, Boundary::Hardwall);
        let (rx, handle) = spawn_evolution(h, cfg, 1.0, 6.0, psi0);
        let samples: Vec<Sample> = rx.iter().collect();
        handle.join().unwrap().unwrap();
        assert_eq!(samples.len(), 101);
        assert_eq!(samples[0].t, 0.0);
    }

    fn series(times: Vec<f64>, j: Vec<f64>) -> CurrentSeries {
        CurrentSeries::new(times, j, Provenance::Evolution).unwrap()
    }

    #[test]
    fn compare_identical_and_shifted() {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let j: Vec<f64> = t.iter().map(|t| (t * 1.3).sin().powi(2)).collect();
        let a = series(t.clone(), j.clone());
        let r = compare(&a, &a, None).unwrap();
        assert_eq!((r.max_abs, r.rms, r.max_normalized), (0.0, 0.0, 0.0));
        let shifted = series(t.iter().map(|t| t + 0.05).collect(), j.clone());
        let r = compare(&a, &shifted, None).unwrap();
        let adjacent = j.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        assert!((r.max_abs - adjacent).abs() < 1e-12);
        let later = series(t.iter().map(|t| t + 100.0).collect(), j);
        assert!(matches!(compare(&a, &later, None), Err(Error::NoOverlap)));
    }

    #[test]
    fn reflection_time_scaling() {
        let spec = PotentialSpec::default();
        let t = reflection_time(&spec, 146.9, 1.5).unwrap();
        assert!(t > 25.0 * TAU);
        let longer = reflection_time(&spec, 146.9 + (146.9 - spec.l - spec.w), 1.5).unwrap();
        assert!((longer / t - 2.0).abs() < 1e-12);
        assert!(reflection_time(&spec, 146.9, 1e30).unwrap() < 1e-10);
        assert!(reflection_time(&spec, 146.9, 0.0).is_err());
    }
}
