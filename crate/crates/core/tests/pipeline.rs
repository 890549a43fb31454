use std::f64::consts::TAU;

use metastable::current::{cap_levels, formula_current, survival_from_current, time_grid};
use metastable::decomposition::{coherent_coefficients, overlap, project, random_phase_state, synthesize, InitialState};
use metastable::evolution::{compare, Evolution, EvolutionConfig};
use metastable::spectral::{default_x_t, find_resonances, ResonanceBasis};
use metastable::{wkb, Boundary, Exec, Grid, Hamiltonian, Potential, PotentialSpec};
use num_complex::Complex64;

fn small() -> (Potential, Grid, ResonanceBasis) {
    let spec = PotentialSpec { l: 3.0, v_b: 4.5, w: 0.5, x_cap: 13.5, eta: 3e-3, ..PotentialSpec::default() };
    let pot = Potential::new(spec).unwrap();
    let grid = Grid::new(-6.0, 43.5, 0.04).unwrap();
    let basis = find_resonances(&pot, &grid, default_x_t(&pot), 10, Exec::default()).unwrap();
    (pot, grid, basis)
}

#[test]
fn shallow_well_has_three_resonances() {
    let (pot, _, basis) = small();
    assert_eq!(basis.len(), 3);
    for (n, s) in basis.states.iter().enumerate() {
        assert_eq!(s.n, n);
        assert!((s.energy - (n as f64 + 0.5)).abs() < 1e-2, "E_{n} = {}", s.energy);
        let ratio = wkb::wkb_width(&pot, n, false).unwrap() / s.gamma;
        assert!(ratio > 0.3 && ratio < 1.5, "n = {n}: {ratio}");
    }
    assert!(basis.states.windows(2).all(|w| w[1].gamma > w[0].gamma));
}

#[test]
fn synthesize_then_project_is_identity() {
    let (_, _, basis) = small();
    let s = overlap(&basis).unwrap();
    for seed in 0..4 {
        let c = random_phase_state(&[0.7, 0.5, 0.3], seed);
        let back = project(&synthesize(&basis, &c).unwrap(), &basis, &s).unwrap();
        for (a, b) in c.iter().zip(&back) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}

#[test]
fn formula_tracks_evolution() {
    let (pot, _, basis) = small();
    let c = coherent_coefficients(Complex64::new(0.8, 0.0), basis.len() - 1).c;
    let init = InitialState::from_coefficients(&basis, c, "coherent").unwrap();
    let h = Hamiltonian::assemble(&pot, &basis.grid, Boundary::Cap).unwrap();
    let cfg = EvolutionConfig { dt: 2.5e-4 * TAU, t_total: 3.0 * TAU, record_stride: 4, boundary: Boundary::Cap };
    let traj = Evolution::new(&h, cfg, 1.0, basis.x_t).unwrap().collect(&init.psi0).unwrap();
    let ev = traj.current_series(None).unwrap();
    let f = formula_current(&cap_levels(&basis), &init.coefficients, &ev.times, 1.0, Exec::default()).unwrap();
    let r = compare(&ev, &f, Some((TAU, 3.0 * TAU))).unwrap();
    assert!(r.max_normalized < 1e-2, "{}", r.max_normalized);

    // escaped probability from the integrated formula current
    let p = survival_from_current(&f).unwrap();
    for (s, pf) in traj.samples.iter().zip(&p).skip(1) {
        assert!((s.p_well - pf).abs() < 1e-3 * (1.0 - pf).max(1e-6) + 1e-6, "t = {}", s.t);
    }
}

#[test]
fn cap_and_hard_wall_agree_early() {
    let (pot, grid, basis) = small();
    let c = coherent_coefficients(Complex64::new(0.8, 0.0), basis.len() - 1).c;
    let init = InitialState::from_coefficients(&basis, c, "coherent").unwrap();
    let cfg = |b| EvolutionConfig { dt: 1e-3 * TAU, t_total: TAU, record_stride: 5, boundary: b };
    let run = |b| {
        let h = Hamiltonian::assemble(&pot, &grid, b).unwrap();
        Evolution::new(&h, cfg(b), 1.0, basis.x_t).unwrap().collect(&init.psi0).unwrap().current_series(None).unwrap()
    };
    let r = compare(&run(Boundary::Cap), &run(Boundary::Hardwall), None).unwrap();
    assert!(r.max_normalized < 1e-2, "{}", r.max_normalized);
}

#[test]
fn formula_is_parallel_invariant() {
    let (_, _, basis) = small();
    let levels = cap_levels(&basis);
    let c = random_phase_state(&[0.6, 0.6, 0.5], 3);
    let times = time_grid(0.0, 4.0 * TAU, 0.01);
    let a = formula_current(&levels, &c, &times, 1.0, Exec::Sequential).unwrap();
    let b = formula_current(&levels, &c, &times, 1.0, Exec::default()).unwrap();
    assert_eq!(a.j, b.j);
}
