//! Acceptance suite. Prints one PASS/FAIL line per criterion; detail lines
//! are indented. Exits non-zero only if a computation errors out.

use std::f64::consts::TAU;
use std::time::Instant;

use metastable::current::{
    average_rate, cap_levels, formula_current, survival_from_current, time_grid, BasisLevel, CurrentSeries,
};
use metastable::decomposition::{
    coherent_coefficients, coherent_wavefunction, default_n_max, overlap, peak_level, project, random_phase_state,
    synthesize, InitialState,
};
use metastable::evolution::{compare, reflection_time, Evolution, EvolutionConfig, Trajectory};
use metastable::saddle::{solve_saddle, SaddleOptions};
use metastable::spectral::{default_x_t, find_resonances, ResonanceBasis};
use metastable::wkb::{self, g_factor, SemiclassicalTable};
use metastable::{Boundary, Exec, Grid, GridSpec, Hamiltonian, Potential, PotentialSpec, Result};
use num_complex::Complex64;

const ALPHA: f64 = 1.1;
const PERIOD: f64 = TAU;

struct Ctx {
    pot: Potential,
    grid: Grid,
    x_t: f64,
    basis: ResonanceBasis,
    cap: Hamiltonian,
    levels: Vec<BasisLevel>,
    table: SemiclassicalTable,
}

struct Tally {
    pass: usize,
    fail: usize,
}

impl Tally {
    fn line(&mut self, ok: bool, id: &str, text: String) {
        if ok {
            self.pass += 1;
        } else {
            self.fail += 1;
        }
        println!("{} [{id}] {text}", if ok { "PASS" } else { "FAIL" });
    }
}

fn detail(text: String) {
    println!("       {text}");
}

fn alpha() -> Complex64 {
    Complex64::new(ALPHA, 0.0)
}

fn evolve(h: &Hamiltonian, psi0: &[Complex64], dt: f64, t_total: f64, stride: usize, x_t: f64) -> Result<Trajectory> {
    let cfg = EvolutionConfig { dt, t_total, record_stride: stride, boundary: h.boundary() };
    Evolution::new(h, cfg, 1.0, x_t)?.collect(psi0)
}

fn coherent_state(ctx: &Ctx) -> Result<InitialState> {
    let c = coherent_coefficients(alpha(), ctx.basis.len() - 1).c;
    InitialState::from_coefficients(&ctx.basis, c, "coherent")
}

fn window_max(s: &CurrentSeries, t0: f64, t1: f64) -> (f64, f64) {
    s.times
        .iter()
        .zip(&s.j)
        .filter(|(t, _)| **t >= t0 && **t <= t1)
        .fold((t0, f64::NEG_INFINITY), |acc, (&t, &j)| if j > acc.1 { (t, j) } else { acc })
}

fn criterion_1_2(ctx: &Ctx, tally: &mut Tally) -> Result<()> {
    let dt = 2.5e-4 * PERIOD;
    let t_total = 5.0 * PERIOD;
    let window = Some((PERIOD, 5.0 * PERIOD));

    let init = coherent_state(ctx)?;
    let traj = evolve(&ctx.cap, &init.psi0, dt, t_total, 4, ctx.x_t)?;
    let ev = traj.current_series(Some(alpha()))?;
    let f = formula_current(&ctx.levels, &init.coefficients, &ev.times, ctx.pot.spec().hbar, Exec::default())?;
    let r = compare(&ev, &f, window)?;
    tally.line(
        r.max_normalized <= 1e-2,
        "1",
        format!(
            "formula vs evolution, {} resonances, t in [1, 5] periods: max normalized residual {:.3e} (limit 1e-2)",
            ctx.basis.len(),
            r.max_normalized
        ),
    );
    for p in 1..5 {
        let w = (p as f64 * PERIOD, (p + 1) as f64 * PERIOD);
        let rp = compare(&ev, &f, Some(w))?;
        detail(format!("period {}: {:.3e}", p + 1, rp.max_normalized));
    }

    let psi_g = coherent_wavefunction(alpha(), ctx.pot.spec(), &ctx.grid)?;
    let proj = InitialState::from_wavefunction(&ctx.basis, psi_g.clone(), "gaussian")?;
    let traj_g = evolve(&ctx.cap, &psi_g, dt, t_total, 4, ctx.x_t)?;
    let ev_g = traj_g.current_series(Some(alpha()))?;
    let f_g = formula_current(&ctx.levels, &proj.coefficients, &ev_g.times, ctx.pot.spec().hbar, Exec::default())?;
    let rg = compare(&ev_g, &f_g, window)?;
    detail(format!(
        "INFO Gaussian initial state projected on the basis (weight {:.10}): residual {:.3e}; its content outside the resonances is not in the sum",
        proj.weight(),
        rg.max_normalized
    ));

    let sad = solve_saddle(alpha(), &ctx.table, SaddleOptions::default())?;
    let (t_pk, _) = window_max(&ev_g, PERIOD, 2.0 * PERIOD);
    let fit = ev_g.fit_burst(t_pk - 0.5 * PERIOD, t_pk + 0.5 * PERIOD)?;
    let dh = fit.height / sad.j_peak - 1.0;
    let dw = fit.width / sad.dt_width - 1.0;
    let mut ok = dh.abs() <= 0.04 && dw.abs() <= 0.04;
    let mut dp_lines = Vec::new();
    for k in 2..=4 {
        let (a, b) = ((k as f64 - 1.5) * PERIOD, (k as f64 - 0.5) * PERIOD);
        let leak = ev_g.integral(a, b);
        let rel = sad.dp / leak - 1.0;
        ok &= rel.abs() <= 0.15;
        dp_lines.push(format!("cycle {k}: integrated {leak:.4e}, relative {rel:+.3e}"));
    }
    tally.line(
        ok,
        "2",
        format!(
            "saddle burst vs evolution: height {:+.2}%, width {:+.2}% (limit 4%); delta P {:.4e} per cycle (limit 15%)",
            100.0 * dh,
            100.0 * dw,
            sad.dp
        ),
    );
    detail(format!(
        "n0 = {:.5}, fitted center {:.4}, height {:.4e} vs {:.4e}, width {:.4e} vs {:.4e}",
        sad.n0, fit.center, fit.height, sad.j_peak, fit.width, sad.dt_width
    ));
    dp_lines.into_iter().for_each(detail);

    let (t_pk_s, _) = window_max(&ev, PERIOD, 2.0 * PERIOD);
    let fit_s = ev.fit_burst(t_pk_s - 0.5 * PERIOD, t_pk_s + 0.5 * PERIOD)?;
    detail(format!(
        "INFO {}-resonance synthesized state: height {:+.2}%, width {:+.2}%",
        ctx.basis.len(),
        100.0 * (fit_s.height / sad.j_peak - 1.0),
        100.0 * (fit_s.width / sad.dt_width - 1.0)
    ));
    let fine = time_grid(t_pk_s - 0.1 * PERIOD, t_pk_s + 0.1 * PERIOD, 1e-3);
    let f_fine = formula_current(&ctx.levels, &init.coefficients, &fine, ctx.pot.spec().hbar, Exec::default())?;
    let f_max = f_fine.j.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    detail(format!(
        "INFO formula burst maximum / saddle peak = {:.4}; the saddle integral includes levels above the basis",
        f_max / sad.j_peak
    ));

    let (n_def, capped) = default_n_max(alpha(), ctx.basis.len());
    let mut c_cut = init.coefficients.clone();
    c_cut.iter_mut().skip(n_def + 1).for_each(|z| *z = Complex64::new(0.0, 0.0));
    let f_cut = formula_current(&ctx.levels, &c_cut, &fine, ctx.pot.spec().hbar, Exec::default())?;
    let cut_max = f_cut.j.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    detail(format!(
        "INFO default n_max = {n_def} (capped {capped}) gives {:.1}% of the full-basis burst maximum; the runs above use all levels",
        100.0 * cut_max / f_max
    ));
    Ok(())
}

fn criterion_3(ctx: &Ctx, tally: &mut Tally) -> Result<()> {
    let count = ctx.basis.len().min(9);
    let mut rows = Vec::new();
    let mut ok = true;
    for s in ctx.basis.states.iter().take(count) {
        let plain = wkb::wkb_width(&ctx.pot, s.n, false)? / s.gamma - 1.0;
        let with_g = wkb::wkb_width(&ctx.pot, s.n, true)? / s.gamma - 1.0;
        if s.n <= 3 {
            ok &= plain.abs() <= 0.25;
        }
        rows.push((s.n, s.gamma, plain, with_g));
    }
    let worst = rows.iter().filter(|r| r.0 <= 3).map(|r| r.2.abs()).fold(0.0, f64::max);
    tally.line(ok, "3", format!("WKB widths vs CAP widths, n <= 3: worst |ratio - 1| = {worst:.3} (limit 0.25)"));
    for (n, g, a, b) in &rows {
        detail(format!("n = {n}: gamma_CAP {g:.6e}, ratio-1 {a:+.4}, with g_n {b:+.4}"));
    }
    let monotone = rows.windows(2).all(|w| w[1].2.abs() >= w[0].2.abs());
    detail(format!(
        "degradation monotone in n: {monotone}; deviation shrinks with n above n = 1 on this barrier"
    ));
    Ok(())
}

fn criterion_4(tally: &mut Tally) {
    let want = [0.93, 0.97, 0.98];
    let got: Vec<f64> = (0..3).map(|n| g_factor(n as f64)).collect();
    let low = got.iter().zip(&want).all(|(g, w)| (g - w).abs() <= 0.005);
    let large = (g_factor(100.0) - (1.0 - 1.0 / 2400.0)).abs();
    tally.line(
        low && large <= 1e-4,
        "4",
        format!(
            "g_0, g_1, g_2 = {:.5}, {:.5}, {:.5} (targets 0.93, 0.97, 0.98 +- 0.005); |g_100 - (1 - 1/2400)| = {large:.2e} (limit 1e-4)",
            got[0], got[1], got[2]
        ),
    );
}

fn criterion_5(ctx: &Ctx, tally: &mut Tally) {
    let c = coherent_coefficients(alpha(), 20).c;
    let c5 = c[5].norm_sqr();
    let w2: Vec<f64> = coherent_coefficients(Complex64::new(2.0, 0.0), 30).c.iter().map(|z| z.norm_sqr()).collect();
    let arg = peak_level(&w2);
    let spec = ctx.pot.spec();
    let e10 = spec.harmonic_energy(9.0) / spec.v_b;
    let ok = (c5 - 6.5e-3).abs() <= 2e-4 && arg == 4 && (e10 - 0.5278).abs() <= 1e-3;
    tally.line(
        ok,
        "5",
        format!("|c_5|^2 = {c5:.5e} at alpha 1.1; argmax at alpha 2 = {arg}; E_10/V_b = {e10:.5} (tenth level, n = 9)"),
    );
    if let Some(s) = ctx.basis.states.iter().find(|s| s.n == 9) {
        detail(format!("CAP resonance n = 9: E/V_b = {:.5}", s.energy / spec.v_b));
    }
}

fn criterion_6(ctx: &Ctx, tally: &mut Tally) -> Result<()> {
    let (_, v_top) = ctx.pot.barrier_top();
    let t_refl = reflection_time(ctx.pot.spec(), ctx.grid.x_max(), v_top)?;
    let dt = 1e-3 * PERIOD;
    let psi = coherent_wavefunction(alpha(), ctx.pot.spec(), &ctx.grid)?;
    let wall = Hamiltonian::assemble(&ctx.pot, &ctx.grid, Boundary::Hardwall)?;
    let t_total = 2.0 * t_refl;
    let a = evolve(&ctx.cap, &psi, dt, t_total, 5, ctx.x_t)?.current_series(Some(alpha()))?;
    let b = evolve(&wall, &psi, dt, t_total, 5, ctx.x_t)?.current_series(Some(alpha()))?;
    let before = compare(&a, &b, Some((0.0, 0.8 * t_refl)))?;
    let after = compare(&a, &b, Some((t_refl, t_total)))?;
    let diverged = after.max_normalized > 10.0 * before.max_normalized.max(1e-2);
    tally.line(
        before.max_normalized < 1e-2 && diverged,
        "6",
        format!(
            "CAP vs hard wall before 0.8 t_refl = {:.2}: residual {:.3e} (limit 1e-2); after t_refl: {:.3e}",
            0.8 * t_refl,
            before.max_normalized,
            after.max_normalized
        ),
    );
    detail(format!("t_refl at E = V_top = {v_top:.3}: {t_refl:.3} ({:.2} periods)", t_refl / PERIOD));
    let first_bad = a
        .times
        .iter()
        .zip(&a.j)
        .filter(|(t, _)| **t <= 0.8 * t_refl)
        .find(|(t, ja)| (**ja - b.value_at(**t).unwrap_or(0.0)).abs() > 1e-2 * before.max_abs / before.max_normalized)
        .map(|(t, _)| *t);
    if let Some(t) = first_bad {
        detail(format!("residual first exceeds 1e-2 of the peak at t = {t:.2}: early over-barrier emission reflected by the wall"));
    }
    Ok(())
}

fn relative_deviation(times: &[f64], escaped: &[f64], gamma_bar: f64, t0: f64, t1: f64) -> f64 {
    times
        .iter()
        .zip(escaped)
        .filter(|(t, _)| **t >= t0 && **t <= t1)
        .map(|(t, e)| {
            let r = -(-gamma_bar * t).exp_m1();
            (e - r).abs() / r
        })
        .fold(0.0, f64::max)
}

fn resolved_steps(s: &CurrentSeries, t1: f64) -> usize {
    let mut last = f64::NEG_INFINITY;
    let mut count = 0;
    for (t, _) in s.peaks(0.5) {
        if t <= t1 && t - last > 0.5 * PERIOD {
            count += 1;
            last = t;
        }
    }
    count
}

fn criterion_7(ctx: &Ctx, tally: &mut Tally) -> Result<()> {
    let t_end = 10.0 * PERIOD;
    let dt = 1e-3 * PERIOD;
    let hbar = ctx.pot.spec().hbar;
    let mags: Vec<f64> = coherent_coefficients(alpha(), ctx.basis.len() - 1).c.iter().map(|z| z.norm()).collect();

    let rand = InitialState::from_coefficients(&ctx.basis, random_phase_state(&mags, 0), "random phase")?;
    let gamma_bar = average_rate(&ctx.levels, &rand.coefficients)?;
    let traj = evolve(&ctx.cap, &rand.psi0, dt, t_end, 10, ctx.x_t)?;
    let dev = relative_deviation(&traj.times(), &traj.escaped(), gamma_bar, PERIOD, t_end);

    let coh = coherent_state(ctx)?;
    let coh_series = evolve(&ctx.cap, &coh.psi0, dt, t_end, 10, ctx.x_t)?.current_series(Some(alpha()))?;
    let steps = resolved_steps(&coh_series, t_end);

    tally.line(
        dev <= 0.1 && steps >= 5,
        "7",
        format!(
            "random phase (seed 0) 1 - P vs 1 - exp(-Gamma t) over [1, 10] periods: worst {:.2}% (limit 10%); coherent steps {steps} (need 5)",
            100.0 * dev
        ),
    );
    let times = traj.times();
    let worst_at = times
        .iter()
        .zip(traj.escaped())
        .filter(|(t, _)| **t >= PERIOD && **t <= t_end)
        .map(|(t, e)| (*t, (e / -(-gamma_bar * t).exp_m1() - 1.0).abs()))
        .fold((0.0, 0.0), |acc, v| if v.1 > acc.1 { v } else { acc });
    detail(format!(
        "Gamma_bar = {gamma_bar:.5e}; worst deviation at t = {:.2} ({:.2} periods)",
        worst_at.0,
        worst_at.0 / PERIOD
    ));

    let times = time_grid(0.0, t_end, 2e-3 * PERIOD);
    let seeds: Vec<u64> = (0..32).collect();
    let devs: Vec<f64> = seeds
        .iter()
        .map(|&seed| {
            let st = InitialState::from_coefficients(&ctx.basis, random_phase_state(&mags, seed), "random phase")?;
            let g = average_rate(&ctx.levels, &st.coefficients)?;
            let f = formula_current(&ctx.levels, &st.coefficients, &times, hbar, Exec::default())?;
            let esc: Vec<f64> = survival_from_current(&f)?.iter().map(|p| 1.0 - p).collect();
            Ok(relative_deviation(&times, &esc, g, PERIOD, t_end))
        })
        .collect::<Result<_>>()?;
    let within = devs.iter().filter(|d| **d <= 0.1).count();
    let median = {
        let mut v = devs.clone();
        v.sort_by(f64::total_cmp);
        0.5 * (v[15] + v[16])
    };
    detail(format!(
        "INFO formula ensemble of 32 seeds: {within}/32 within 10%, median worst deviation {:.2}%",
        100.0 * median
    ));
    Ok(())
}

fn criterion_8(ctx: &Ctx, tally: &mut Tally) -> Result<()> {
    let spec = ctx.pot.spec();
    let psi = coherent_wavefunction(alpha(), spec, &ctx.grid)?;

    let wall = Hamiltonian::assemble(&ctx.pot, &ctx.grid, Boundary::Hardwall)?;
    let drift = evolve(&wall, &psi, 1e-3 * PERIOD, 10.0 * PERIOD, 10, ctx.x_t)?.max_norm_drift();
    tally.line(drift <= 1e-9, "8a", format!("hard-wall norm drift over 10 periods: {drift:.2e} (limit 1e-9)"));

    let cfg = EvolutionConfig { dt: 1e-3 * PERIOD, t_total: 2.0 * PERIOD, record_stride: 1, boundary: Boundary::Cap };
    let cont = Evolution::new(&ctx.cap, cfg, 1.0, ctx.x_t)?.step_continuity(&psi)?;
    tally.line(cont <= 1e-4, "8b", format!("discrete continuity defect / peak current over 2 periods: {cont:.2e} (limit 1e-4)"));

    let mut worst_slope = 0.0f64;
    for e in [1.5, 3.5, 5.5, 7.5, 9.5, 11.5, 13.5] {
        let h = 1e-4;
        let ds = (wkb::action(&ctx.pot, e + h)? - wkb::action(&ctx.pot, e - h)?) / (2.0 * h);
        let tau = wkb::barrier_time(&ctx.pot, e)?;
        worst_slope = worst_slope.max((-ds / tau - 1.0).abs());
        worst_slope = worst_slope.max((ctx.table.action_slope(e)? / ctx.table.tau(e)? - 1.0).abs());
    }
    tally.line(worst_slope <= 1e-4, "8c", format!("-dS/dE = tau: worst relative error {worst_slope:.2e} (limit 1e-4)"));

    let s = overlap(&ctx.basis)?;
    let count = ctx.basis.len().min(6);
    let actions: Vec<f64> =
        (0..count).map(|n| wkb::action(&ctx.pot, spec.harmonic_energy(n as f64))).collect::<Result<_>>()?;
    let mut violations = Vec::new();
    let mut pairs = 0;
    for m in 0..count {
        for n in (m + 1)..count {
            pairs += 1;
            let v = s.s[(m, n)].norm().max(s.s[(n, m)].norm());
            let bound = 10.0 * (-(actions[m] + actions[n]) / spec.hbar).exp();
            if v > bound {
                violations.push(format!("({m},{n}): {v:.2e} > {bound:.2e}"));
            }
        }
    }
    tally.line(
        violations.is_empty(),
        "8d",
        format!("overlap off-diagonals within 10 exp(-(S_n + S_m)/hbar), n, m <= 5: {} of {pairs} pairs violate", violations.len()),
    );
    violations.into_iter().for_each(|v| detail(format!("{v}; below this bound the values sit at double-precision roundoff")));

    let c = random_phase_state(&vec![1.0; ctx.basis.len()], 7);
    let back = project(&synthesize(&ctx.basis, &c)?, &ctx.basis, &s)?;
    let err = c.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    tally.line(err <= 1e-6, "8e", format!("project(synthesize(c)) = c: max error {err:.2e} (limit 1e-6)"));

    let mut ok = true;
    let mut lines = Vec::new();
    for e in [0.5, 5.5, 12.5] {
        let nodes = [12, 24, 48, 96];
        let q: Vec<[f64; 3]> = nodes
            .iter()
            .map(|&k| {
                Ok([
                    wkb::action_with(&ctx.pot, e, k)?,
                    wkb::classical_period_with(&ctx.pot, e, k)?,
                    wkb::barrier_time_with(&ctx.pot, e, k)?,
                ])
            })
            .collect::<Result<_>>()?;
        for (qi, name) in ["S", "t", "tau"].iter().enumerate() {
            let d: Vec<f64> = q.windows(2).map(|w| (w[1][qi] - w[0][qi]).abs() / w[1][qi].abs()).collect();
            let conv = d[2] <= 1e-8 || (d[2] <= d[1] && d[1] <= d[0]);
            ok &= conv;
            lines.push(format!("E = {e}: {name} relative changes {:.1e}, {:.1e}, {:.1e}", d[0], d[1], d[2]));
        }
    }
    tally.line(ok, "8f", "WKB quadratures converge under node doubling (12 to 96 nodes)".into());
    lines.into_iter().for_each(detail);
    Ok(())
}

fn run() -> Result<Tally> {
    let start = Instant::now();
    let pot = Potential::new(PotentialSpec::default())?;
    let grid = GridSpec::for_potential(pot.spec()).build()?;
    let x_t = default_x_t(&pot);
    let basis = find_resonances(&pot, &grid, x_t, 40, Exec::default())?;
    let cap = Hamiltonian::assemble(&pot, &grid, Boundary::Cap)?;
    let levels = cap_levels(&basis);
    let table = SemiclassicalTable::new(&pot)?;
    println!(
        "basis: {} resonances on {} points, x_T = {x_t}, {:.1} s",
        basis.len(),
        grid.len(),
        start.elapsed().as_secs_f64()
    );
    let ctx = Ctx { pot, grid, x_t, basis, cap, levels, table };
    let mut tally = Tally { pass: 0, fail: 0 };
    criterion_1_2(&ctx, &mut tally)?;
    criterion_3(&ctx, &mut tally)?;
    criterion_4(&mut tally);
    criterion_5(&ctx, &mut tally);
    criterion_6(&ctx, &mut tally)?;
    criterion_7(&ctx, &mut tally)?;
    criterion_8(&ctx, &mut tally)?;
    println!("{} passed, {} failed, {:.1} s", tally.pass, tally.fail, start.elapsed().as_secs_f64());
    Ok(tally)
}

fn main() {
    if let Err(e) = run() {
        eprintln!("acceptance run aborted: {e}");
        std::process::exit(1);
    }
}
