//! `reproduce-paper`: the data behind the reference figures, one CSV per
//! figure plus `residuals.json`. Stages run on separate threads once the
//! resonance basis is available.

use metastable::current::{cap_levels, formula_current, survival_from_current, wkb_levels, CurrentSeries};
use metastable::decomposition::{coherent_coefficients, coherent_wavefunction, InitialState};
use metastable::evolution::{compare, reflection_time, Trajectory};
use metastable::saddle::{burst_current, full_saddle_scan, solve_saddle, SaddleOptions};
use metastable::wkb::SemiclassicalTable;
use metastable::{Boundary, Exec};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::commands::{coefficient_state, evolve_with, wkb_level_count, Session};
use crate::config::StateKind;
use crate::error::{CliError, Context};
use crate::output::Cell;

type Stage = fn(&Session) -> Result<Value, CliError>;

pub fn reproduce(session: &Session) -> Result<(), CliError> {
    session.basis()?;
    let stages: [(&str, Stage); 5] = [
        ("fig2", cap_vs_hardwall),
        ("fig3", formula_vs_evolution),
        ("fig4", resonant_states),
        ("fig5", saddle_burst),
        ("fig6", coherent_vs_random),
    ];
    let results: Vec<(&str, Result<Value, CliError>)> = std::thread::scope(|s| {
        let handles: Vec<_> = stages.iter().map(|&(name, f)| (name, s.spawn(move || f(session)))).collect();
        handles.into_iter().map(|(name, h)| (name, h.join().expect("stage panicked"))).collect()
    });
    let mut summary = serde_json::Map::new();
    for (name, r) in results {
        summary.insert(name.to_string(), r?);
    }
    session.arts.write_json("residuals.json", &Value::Object(summary))
}

fn coherent_gaussian(session: &Session) -> Result<Vec<Complex64>, CliError> {
    let run = &session.run;
    coherent_wavefunction(run.config.state.alpha(), run.potential.spec(), &run.grid).context("coherent wavefunction")
}

fn basis_state(session: &Session, kind: StateKind) -> Result<InitialState, CliError> {
    let basis = session.basis()?;
    let c = coefficient_state(&session.run, kind, basis.len())?;
    InitialState::from_coefficients(basis, c, "").context("synthesizing the state")
}

fn series(traj: &Trajectory) -> Result<CurrentSeries, CliError> {
    traj.current_series(None).context("current series")
}

/// CAP and hard-wall evolution of the coherent Gaussian, out to twice the reflection time.
fn cap_vs_hardwall(session: &Session) -> Result<Value, CliError> {
    let run = &session.run;
    let ev = &run.config.evolution;
    let (_, v_top) = run.potential.barrier_top();
    let t_refl = reflection_time(run.potential.spec(), run.grid.x_max(), v_top).context("reflection time")?;
    let psi = coherent_gaussian(session)?;
    let t_total = 2.0 * t_refl;
    let cap = evolve_with(session, Boundary::Cap, &psi, ev.dt, t_total, ev.record_stride)?;
    let wall = evolve_with(session, Boundary::Hardwall, &psi, ev.dt, t_total, ev.record_stride)?;
    let rows = cap
        .samples
        .iter()
        .zip(&wall.samples)
        .map(|(a, b)| vec![a.t.into(), a.p_well.into(), a.j.into(), b.p_well.into(), b.j.into()]);
    session.arts.write_csv("fig2.csv", &["t", "P_cap", "j_cap", "P_hardwall", "j_hardwall"], rows)?;
    let (a, b) = (series(&cap)?, series(&wall)?);
    let before = compare(&a, &b, Some((0.0, 0.8 * t_refl))).context("comparison")?;
    let after = compare(&a, &b, Some((t_refl, t_total))).context("comparison")?;
    Ok(json!({
        "reflection_time": t_refl,
        "residual_before_0.8_t_refl": before.max_normalized,
        "residual_after_t_refl": after.max_normalized,
    }))
}

/// Coherent state over the resonances: evolution against the formula with
/// CAP levels and with harmonic energies and WKB widths.
fn formula_vs_evolution(session: &Session) -> Result<Value, CliError> {
    let run = &session.run;
    let rp = &run.config.reproduce;
    let t_total = rp.periods * run.period();
    let init = basis_state(session, StateKind::Coherent)?;
    let traj = evolve_with(session, Boundary::Cap, &init.psi0, rp.fine_dt, t_total, 4)?;
    let ev = series(&traj)?;
    let f = formula_current(&cap_levels(session.basis()?), &init.coefficients, &ev.times, run.hbar(), Exec::default())
        .context("current formula")?;
    let used = init.coefficients.len().min(wkb_level_count(session));
    let c_wkb = coherent_coefficients(run.config.state.alpha(), used - 1).c;
    let levels = wkb_levels(&run.potential, used, run.config.current.with_g).context("WKB levels")?;
    let w = formula_current(&levels, &c_wkb, &ev.times, run.hbar(), Exec::default()).context("current formula")?;
    let (pf, pw) = (survival_from_current(&f).context("survival")?, survival_from_current(&w).context("survival")?);
    let rows = traj.samples.iter().enumerate().map(|(i, s)| {
        vec![s.t.into(), s.p_well.into(), s.j.into(), pf[i].into(), f.j[i].into(), pw[i].into(), w.j[i].into()]
    });
    session.arts.write_csv(
        "fig3.csv",
        &["t", "P_evolution", "j_evolution", "P_formula", "j_formula", "P_wkb", "j_wkb"],
        rows,
    )?;
    let window = Some((run.period(), t_total));
    Ok(json!({
        "levels": init.coefficients.len(),
        "residual_formula": compare(&ev, &f, window).context("comparison")?.max_normalized,
        "residual_wkb": compare(&ev, &w, window).context("comparison")?.max_normalized,
    }))
}

/// Densities of the resonant states up to a few units past the flux point.
fn resonant_states(session: &Session) -> Result<Value, CliError> {
    let run = &session.run;
    let basis = session.basis()?;
    let shown: Vec<_> = basis.states.iter().take(12).collect();
    let names: Vec<String> = shown.iter().map(|s| format!("rho_{}", s.n)).collect();
    let mut header = vec!["x", "V"];
    header.extend(names.iter().map(String::as_str));
    let last = run.grid.index_of((run.x_t + 5.0).min(run.grid.x_max())).context("grid index")?;
    let rows = (0..=last).map(|i| {
        let x = run.grid.x(i);
        let mut r = vec![Cell::from(x), run.potential.real(x).into()];
        r.extend(shown.iter().map(|s| Cell::from(s.psi[i].norm_sqr())));
        r
    });
    session.arts.write_csv("fig4.csv", &header, rows)?;
    Ok(json!({
        "resonances": basis.len(),
        "energies": basis.states.iter().map(|s| s.energy).collect::<Vec<_>>(),
        "widths": basis.states.iter().map(|s| s.gamma).collect::<Vec<_>>(),
    }))
}

/// The first burst after one period of the Gaussian evolution against the
/// saddle-point burst, both centered on the fitted maximum.
fn saddle_burst(session: &Session) -> Result<Value, CliError> {
    let run = &session.run;
    let rp = &run.config.reproduce;
    let period = run.period();
    let alpha = run.config.state.alpha();
    let t_total = rp.periods * period;
    let traj = evolve_with(session, Boundary::Cap, &coherent_gaussian(session)?, rp.fine_dt, t_total, 4)?;
    let ev = series(&traj)?;
    let (t_pk, _) = ev
        .times
        .iter()
        .zip(&ev.j)
        .filter(|(t, _)| **t >= period && **t <= 2.0 * period)
        .fold((period, f64::NEG_INFINITY), |acc, (&t, &j)| if j > acc.1 { (t, j) } else { acc });
    let fit = ev.fit_burst(t_pk - 0.5 * period, t_pk + 0.5 * period).context("burst fit")?;
    let table = SemiclassicalTable::new(&run.potential).context("semiclassical table")?;
    let sad = solve_saddle(alpha, &table, SaddleOptions { exact_g: run.config.saddle.exact_g }).context("saddle solve")?;
    let shift = fit.center - sad.time_offset;
    let idx: Vec<usize> = (0..ev.len()).filter(|&i| (ev.times[i] - fit.center).abs() <= 0.5 * period).collect();
    let local: Vec<f64> = idx.iter().map(|&i| ev.times[i] - shift).collect();
    let full = full_saddle_scan(alpha, &table, &local).context("complex saddle continuation")?;
    let rows = idx.iter().zip(&local).zip(&full).map(|((&i, &t), f)| {
        vec![ev.times[i].into(), ev.j[i].into(), burst_current(&sad, t).into(), f.as_ref().map(|p| p.j).into()]
    });
    session.arts.write_csv("fig5.csv", &["t", "j_evolution", "j_burst", "j_saddle"], rows)?;
    let cycles: Vec<Value> = (2..)
        .map(|k| (k, (k as f64 - 1.5) * period, (k as f64 - 0.5) * period))
        .take_while(|&(_, _, b)| b <= t_total)
        .map(|(k, a, b)| {
            let leak = ev.integral(a, b);
            json!({ "cycle": k, "integrated": leak, "relative": sad.dp / leak - 1.0 })
        })
        .collect();
    Ok(json!({
        "n0": sad.n0,
        "fit": fit,
        "j_peak": sad.j_peak,
        "dt_width": sad.dt_width,
        "height_relative": fit.height / sad.j_peak - 1.0,
        "width_relative": fit.width / sad.dt_width - 1.0,
        "delta_p": sad.dp,
        "cycles": cycles,
    }))
}

/// Escaped probability of the coherent and the random-phase state against `1 − e^{−Γ̄t}`.
fn coherent_vs_random(session: &Session) -> Result<Value, CliError> {
    let run = &session.run;
    let ev = &run.config.evolution;
    let t_total = run.config.reproduce.decay_periods * run.period();
    let coh = basis_state(session, StateKind::Coherent)?;
    let rnd = basis_state(session, StateKind::RandomPhase)?;
    let levels = cap_levels(session.basis()?);
    let gamma_bar = metastable::current::average_rate(&levels, &rnd.coefficients).context("average rate")?;
    let a = evolve_with(session, Boundary::Cap, &coh.psi0, ev.dt, t_total, ev.record_stride)?;
    let b = evolve_with(session, Boundary::Cap, &rnd.psi0, ev.dt, t_total, ev.record_stride)?;
    let mut worst = 0.0f64;
    let rows: Vec<Vec<Cell>> = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| {
            let avg = -(-gamma_bar * x.t).exp_m1();
            if x.t >= run.period() {
                worst = worst.max(((1.0 - y.p_well) / avg - 1.0).abs());
            }
            vec![x.t.into(), (1.0 - x.p_well).into(), (1.0 - y.p_well).into(), avg.into()]
        })
        .collect();
    session.arts.write_csv("fig6.csv", &["t", "escaped_coherent", "escaped_random", "escaped_average"], rows)?;
    Ok(json!({
        "gamma_bar": gamma_bar,
        "seed": run.config.state.seed,
        "random_worst_relative_deviation": worst,
    }))
}
