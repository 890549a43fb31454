//! One function per subcommand; each reads the resolved config and writes
//! its artifacts through [`Artifacts`].

use std::path::Path;
use std::sync::OnceLock;

use metastable::current::{
    applicability_window, average_rate, cap_levels, formula_current, per_cycle_leak, survival_from_current,
    time_grid, wkb_levels, BasisLevel, CurrentSeries,
};
use metastable::decomposition::{
    coherent_coefficients, coherent_wavefunction, default_n_max, random_phase_state, InitialState,
};
use metastable::evolution::{compare, reflection_time, spawn_evolution, Evolution, EvolutionConfig, Trajectory};
use metastable::saddle::{burst_current, full_saddle_scan, solve_saddle, SaddleOptions};
use metastable::spectral::{find_resonances, ResonanceBasis};
use metastable::wkb::{self, tau_limit, SemiclassicalTable};
use metastable::{Boundary, Exec, Hamiltonian};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::{CompareReference, LevelSource, Resolved, StateKind};
use crate::error::{CliError, Context};
use crate::output::{Artifacts, Cell};

/// Resolved config, output directory and the lazily solved resonance basis.
pub struct Session {
    pub run: Resolved,
    pub arts: Artifacts,
    basis: OnceLock<ResonanceBasis>,
}

impl Session {
    pub fn new(run: Resolved) -> Self {
        let arts = Artifacts::new(run.output_dir());
        Session { run, arts, basis: OnceLock::new() }
    }

    pub fn basis(&self) -> Result<&ResonanceBasis, CliError> {
        if let Some(b) = self.basis.get() {
            return Ok(b);
        }
        let r = &self.run;
        let b = find_resonances(&r.potential, &r.grid, r.x_t, r.config.basis.max_count, Exec::default())
            .context("resonance search")?;
        Ok(self.basis.get_or_init(|| b))
    }

    pub fn hamiltonian(&self, boundary: Boundary) -> Result<Hamiltonian, CliError> {
        Hamiltonian::assemble(&self.run.potential, &self.run.grid, boundary).context("assembling the Hamiltonian")
    }
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::ConfigInvalid { field: field.to_string(), message: message.into() }
}

/// Number of Poisson levels: `state.n_max + 1`, or the cumulative-mass rule.
fn poisson_count(run: &Resolved, available: usize) -> Result<usize, CliError> {
    match run.config.state.n_max {
        Some(n) if n < available => Ok(n + 1),
        Some(n) => Err(invalid("state.n_max", format!("{n} exceeds the {available} available levels"))),
        None => Ok(default_n_max(run.config.state.alpha(), available).0 + 1),
    }
}

/// Coefficients defined without reference to a wavefunction, padded to `available`.
pub fn coefficient_state(run: &Resolved, kind: StateKind, available: usize) -> Result<Vec<Complex64>, CliError> {
    let st = &run.config.state;
    let mut c = match kind {
        StateKind::Coherent => coherent_coefficients(st.alpha(), poisson_count(run, available)? - 1).c,
        StateKind::RandomPhase => {
            let count = poisson_count(run, available)?;
            let mags: Vec<f64> = coherent_coefficients(st.alpha(), count - 1).c.iter().map(|z| z.norm()).collect();
            random_phase_state(&mags, st.seed)
        }
        StateKind::File => read_coefficients(st.file.as_deref().expect("checked at resolve"))?,
        StateKind::Gaussian => {
            return Err(invalid("state.kind", "a gaussian state is defined by its wavefunction and needs the CAP basis"))
        }
    };
    if c.len() > available {
        return Err(invalid("state", format!("{} coefficients for {available} levels", c.len())));
    }
    c.resize(available, Complex64::new(0.0, 0.0));
    Ok(c)
}

/// Reads `n, re, im` rows; a header line and blank lines are skipped.
pub fn read_coefficients(path: &Path) -> Result<Vec<Complex64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid("state.file", format!("cannot read {}: {e}", path.display())))?;
    let mut out: Vec<Complex64> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (f.len() == 3)
            .then(|| Some((f[0].parse::<usize>().ok()?, f[1].parse::<f64>().ok()?, f[2].parse::<f64>().ok()?)))
            .flatten();
        match parsed {
            Some((n, re, im)) => {
                if out.len() <= n {
                    out.resize(n + 1, Complex64::new(0.0, 0.0));
                }
                out[n] = Complex64::new(re, im);
            }
            None if lineno == 0 => {}
            None => return Err(invalid("state.file", format!("line {}: expected `n, re, im`", lineno + 1))),
        }
    }
    if out.is_empty() {
        return Err(invalid("state.file", "no coefficients"));
    }
    Ok(out)
}

/// The configured state over the CAP basis.
pub fn cap_state(session: &Session) -> Result<InitialState, CliError> {
    let run = &session.run;
    let basis = session.basis()?;
    let st = &run.config.state;
    if st.kind == StateKind::Gaussian {
        let psi = coherent_wavefunction(st.alpha(), run.potential.spec(), &run.grid).context("coherent wavefunction")?;
        return InitialState::from_wavefunction(basis, psi, "gaussian").context("projecting on the resonances");
    }
    let c = coefficient_state(run, st.kind, basis.len())?;
    let label = match st.kind {
        StateKind::Coherent => "coherent",
        StateKind::RandomPhase => "random_phase",
        _ => "file",
    };
    InitialState::from_coefficients(basis, c, label).context("synthesizing the state")
}

/// Initial wavefunction for an evolution; the Gaussian needs no basis.
pub fn initial_wavefunction(session: &Session) -> Result<Vec<Complex64>, CliError> {
    let run = &session.run;
    let st = &run.config.state;
    if st.kind == StateKind::Gaussian {
        return coherent_wavefunction(st.alpha(), run.potential.spec(), &run.grid).context("coherent wavefunction");
    }
    Ok(cap_state(session)?.psi0)
}

pub fn evolve_with(
    session: &Session,
    boundary: Boundary,
    psi0: &[Complex64],
    dt: f64,
    t_total: f64,
    stride: usize,
) -> Result<Trajectory, CliError> {
    let h = session.hamiltonian(boundary)?;
    let cfg = EvolutionConfig { dt, t_total, record_stride: stride, boundary };
    Evolution::new(&h, cfg, session.run.omega(), session.run.x_t)
        .and_then(|ev| ev.collect(psi0))
        .context("time evolution")
}

/// Levels of harmonic index `0..` whose energy lies below the barrier-time limit.
pub fn wkb_level_count(session: &Session) -> usize {
    let pot = &session.run.potential;
    let limit = tau_limit(pot);
    (0..).take_while(|&n| pot.spec().harmonic_energy(n as f64) < limit).count()
}

pub fn resonances(session: &Session) -> Result<(), CliError> {
    let basis = session.basis()?;
    let rows = basis.states.iter().map(|s| {
        vec![
            Cell::from(s.n),
            s.energy.into(),
            s.gamma.into(),
            s.amplitude.into(),
            s.k_abs.into(),
            s.delta.into(),
            s.localization.into(),
        ]
    });
    session.arts.write_csv(
        "resonances.csv",
        &["n", "E", "Gamma", "A", "k_abs", "delta", "localization_fraction"],
        rows,
    )
}

pub fn wkb_table(session: &Session) -> Result<(), CliError> {
    let pot = &session.run.potential;
    let basis = if session.run.config.wkb.with_cap { Some(session.basis()?) } else { None };
    let mut rows = Vec::new();
    for n in 0..wkb_level_count(session) {
        let l = wkb::wkb_level(pot, n).context("WKB level")?;
        let cap = basis.and_then(|b| b.states.iter().find(|s| s.n == n)).map(|s| s.gamma);
        rows.push(vec![
            Cell::from(n),
            l.energy.into(),
            l.action.into(),
            l.period.into(),
            l.tau.into(),
            l.g.into(),
            l.width(false).into(),
            cap.into(),
        ]);
    }
    session.arts.write_csv("wkb.csv", &["n", "E_n", "S_n", "t_n", "tau_n", "g_n", "Gamma_n_wkb", "Gamma_n_cap"], rows)
}

#[derive(Serialize)]
struct DecomposeSummary {
    kind: StateKind,
    alpha: (f64, f64),
    basis_size: usize,
    weight: f64,
    nonzero: usize,
}

pub fn decompose(session: &Session) -> Result<(), CliError> {
    let init = cap_state(session)?;
    let rows = init
        .coefficients
        .iter()
        .enumerate()
        .map(|(n, c)| vec![Cell::from(n), c.re.into(), c.im.into(), c.norm_sqr().into()]);
    session.arts.write_csv("coefficients.csv", &["n", "re_c", "im_c", "abs_c2"], rows)?;
    let st = &session.run.config.state;
    session.arts.write_json(
        "decompose.json",
        &DecomposeSummary {
            kind: st.kind,
            alpha: (st.alpha, st.alpha_im),
            basis_size: init.coefficients.len(),
            weight: init.weight(),
            nonzero: init.coefficients.iter().filter(|c| c.norm_sqr() > 0.0).count(),
        },
    )
}

/// Levels and coefficients for the formula from the configured source.
pub fn formula_inputs(session: &Session) -> Result<(Vec<BasisLevel>, Vec<Complex64>), CliError> {
    let run = &session.run;
    match run.config.current.source {
        LevelSource::Cap => {
            let init = cap_state(session)?;
            Ok((cap_levels(session.basis()?), init.coefficients))
        }
        LevelSource::Wkb => {
            let available = wkb_level_count(session);
            let c = coefficient_state(run, run.config.state.kind, available)?;
            let used = c.iter().rposition(|z| z.norm_sqr() > 0.0).map_or(1, |i| i + 1);
            let levels = wkb_levels(&run.potential, used, run.config.current.with_g).context("WKB levels")?;
            Ok((levels, c[..used].to_vec()))
        }
    }
}

#[derive(Serialize)]
struct CurrentSummary {
    source: LevelSource,
    levels: usize,
    gamma_bar: f64,
    delta_p_per_cycle: f64,
    applicability_window: (f64, f64),
}

pub fn current(session: &Session) -> Result<(), CliError> {
    let run = &session.run;
    let cfg = &run.config;
    let (levels, c) = formula_inputs(session)?;
    let t_end = cfg.current.t_end.unwrap_or(cfg.evolution.t_total);
    let dt = cfg.current.dt.unwrap_or(cfg.evolution.dt * cfg.evolution.record_stride as f64);
    let times = time_grid(0.0, t_end, dt);
    let series = formula_current(&levels, &c, &times, run.hbar(), Exec::default()).context("current formula")?;
    let p = survival_from_current(&series).context("survival")?;
    let rows = series.times.iter().zip(&series.j).zip(&p).map(|((&t, &j), &p)| vec![t.into(), j.into(), p.into()]);
    session.arts.write_csv("current.csv", &["t", "j_formula", "P_formula"], rows)?;
    let gamma_bar = average_rate(&levels, &c).context("average rate")?;
    session.arts.write_json(
        "current.json",
        &CurrentSummary {
            source: cfg.current.source,
            levels: levels.len(),
            gamma_bar,
            delta_p_per_cycle: per_cycle_leak(gamma_bar, run.omega()),
            applicability_window: applicability_window(gamma_bar, run.omega(), None),
        },
    )
}

pub fn saddle(session: &Session) -> Result<(), CliError> {
    let run = &session.run;
    let alpha = run.config.state.alpha();
    let table = SemiclassicalTable::new(&run.potential).context("semiclassical table")?;
    let opts = SaddleOptions { exact_g: run.config.saddle.exact_g };
    let r = solve_saddle(alpha, &table, opts).context("saddle solve")?;
    session.arts.write_json("saddle.json", &r)?;
    let half = 0.5 * run.period();
    let times = time_grid(r.time_offset - half, r.time_offset + half, run.period() / 1000.0);
    let full = full_saddle_scan(alpha, &table, &times).context("complex saddle continuation")?;
    let rows = times
        .iter()
        .zip(&full)
        .map(|(&t, f)| vec![t.into(), burst_current(&r, t).into(), f.as_ref().map(|p| p.j).into()]);
    session.arts.write_csv("saddle.csv", &["t", "j_burst", "j_saddle"], rows)
}

#[derive(Serialize)]
struct EvolveSummary {
    boundary: Boundary,
    samples: usize,
    final_p_well: f64,
    max_norm_drift: f64,
}

pub fn evolve(session: &Session) -> Result<(), CliError> {
    let run = &session.run;
    let cfg = run.config.evolution.clone();
    let psi0 = initial_wavefunction(session)?;
    let h = session.hamiltonian(cfg.boundary)?;
    let boundary = cfg.boundary;
    let (rx, handle) = spawn_evolution(h, cfg, run.omega(), run.x_t, psi0);
    let mut w = session.arts.csv("evolution.csv", &["t", "P", "j"])?;
    let (mut count, mut last_p, mut n0, mut drift) = (0usize, f64::NAN, None, 0.0f64);
    for s in rx.iter() {
        w.row(&[s.t.into(), s.p_well.into(), s.j.into()])?;
        let base = *n0.get_or_insert(s.norm);
        drift = drift.max((s.norm - base).abs());
        last_p = s.p_well;
        count += 1;
    }
    handle.join().expect("evolution thread panicked").context("time evolution")?;
    session.arts.finish_csv("evolution.csv", w)?;
    session.arts.write_json(
        "evolve.json",
        &EvolveSummary { boundary, samples: count, final_p_well: last_p, max_norm_drift: drift },
    )
}

#[derive(Serialize)]
struct CompareSummary {
    reference: CompareReference,
    report: metastable::evolution::ResidualReport,
    /// Hard-wall comparisons: reflection time at the barrier top, and the residual after it.
    reflection_time: Option<f64>,
    after_reflection: Option<metastable::evolution::ResidualReport>,
}

pub fn compare_runs(session: &Session) -> Result<(), CliError> {
    let run = &session.run;
    let cfg = &run.config;
    let ev = &cfg.evolution;
    let psi0 = initial_wavefunction(session)?;
    let cap = evolve_with(session, Boundary::Cap, &psi0, ev.dt, ev.t_total, ev.record_stride)?
        .current_series(Some(cfg.state.alpha()))
        .context("current series")?;
    let (other, name, window, t_refl) = match cfg.compare.reference {
        CompareReference::Formula => {
            let init = cap_state(session)?;
            let levels = cap_levels(session.basis()?);
            let f = formula_current(&levels, &init.coefficients, &cap.times, run.hbar(), Exec::default())
                .context("current formula")?;
            (f, "j_formula", (run.period(), ev.t_total), None)
        }
        CompareReference::Hardwall => {
            let (_, v_top) = run.potential.barrier_top();
            let t_refl = reflection_time(run.potential.spec(), run.grid.x_max(), v_top).context("reflection time")?;
            let hw = evolve_with(session, Boundary::Hardwall, &psi0, ev.dt, ev.t_total, ev.record_stride)?
                .current_series(Some(cfg.state.alpha()))
                .context("current series")?;
            (hw, "j_hardwall", (0.0, 0.8 * t_refl), Some(t_refl))
        }
    };
    let window = cfg.compare.window.map_or(window, |[a, b]| (a, b));
    let report = compare(&cap, &other, Some(window)).context("comparison")?;
    let after_reflection = t_refl.and_then(|t| compare(&cap, &other, Some((t, ev.t_total))).ok());
    write_pair(&session.arts, "compare.csv", &cap, &other, name)?;
    session.arts.write_json(
        "compare.json",
        &CompareSummary { reference: cfg.compare.reference, report, reflection_time: t_refl, after_reflection },
    )
}

/// `t, j_evolution, <name>` on the times of `a`.
pub fn write_pair(arts: &Artifacts, file: &str, a: &CurrentSeries, b: &CurrentSeries, name: &str) -> Result<(), CliError> {
    let rows = a.times.iter().zip(&a.j).map(|(&t, &j)| vec![t.into(), j.into(), b.value_at(t).into()]);
    arts.write_csv(file, &["t", "j_evolution", name], rows)
}
