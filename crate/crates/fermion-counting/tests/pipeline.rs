//! Cross-module tests of the public library API.

use fermion_counting::conditional::{apply_gain, apply_loss};
use fermion_counting::gaussian::CorrelationMatrix;
use fermion_counting::model::{build_hopping_hamiltonian, build_jump_channels, initial_cdw_state, ModelParams};
use fermion_counting::observables::{momentum_correlation, state_correlation, subsystem_entropy};
use fermion_counting::theory::{c_tilde, gaussian_cq, TheoryParams};
use fermion_counting::trajectory::{ensemble_run, run_trajectory, Backend, Model, RunConfig, Stepper};
use fermion_counting::unconditional::{exact_propagate, steady_state, LindbladPropagator};
use fermion_counting::{linalg, TheoryParamsF32};

fn config(n_traj: usize, seed: u64) -> RunConfig {
    RunConfig {
        dt: Some(0.02),
        t_burn: Some(4.0),
        t_measure: 4.0,
        measure_stride: Some(50),
        n_traj,
        master_seed: seed,
        entropy_sizes: vec![2, 4],
        negativity_sizes: vec![4],
        ..RunConfig::default()
    }
}

#[test]
fn backends_give_identical_ensembles() {
    let params = ModelParams::from_density(12, 1.0, 0.2, 0.4, 0.7).unwrap();
    let cfg = config(3, 17);
    let run = |backend| {
        let stepper = Stepper::new(Model::local(params).unwrap(), 0.02, backend).unwrap();
        ensemble_run(&cfg, &stepper).unwrap()
    };
    let (dense, fast) = (run(Backend::Dense), run(Backend::Fast));
    assert_eq!(dense.jumps.mean, fast.jumps.mean);
    for (a, b) in dense.c_l.means().iter().zip(fast.c_l.means()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    for (a, b) in dense.negativity.means().iter().zip(fast.negativity.means()) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}

#[test]
fn trajectories_are_reproducible_and_independent_of_ensemble_size() {
    let params = ModelParams::from_density(10, 1.0, 0.3, 0.5, 1.0).unwrap();
    let stepper = Stepper::new(Model::local(params).unwrap(), 0.02, Backend::Auto).unwrap();
    let a = run_trajectory(2, &config(3, 5), &stepper).unwrap();
    let b = run_trajectory(2, &config(40, 5), &stepper).unwrap();
    assert_eq!(a, b);
    let c = run_trajectory(2, &config(3, 6), &stepper).unwrap();
    assert_ne!(a.c_l, c.c_l);
}

#[test]
fn momentum_profile_sums_real_space_correlation() {
    let params = ModelParams::from_density(16, 1.0, 0.2, 0.4, 1.0).unwrap();
    let stepper = Stepper::new(Model::local(params).unwrap(), 0.02, Backend::Auto).unwrap();
    let s = run_trajectory(0, &config(1, 2), &stepper).unwrap();
    let cq = momentum_correlation(&s.c_l).unwrap();
    let total: f64 = s.c_l.iter().sum();
    assert!((cq[0].c_q - total).abs() < 1e-12);
    // Parseval: sum_k C_q^2 = L sum_l C_l^2
    let lhs: f64 = cq.iter().map(|p| p.c_q * p.c_q).sum();
    let rhs: f64 = 16.0 * s.c_l.iter().map(|c| c * c).sum::<f64>();
    assert!((lhs - rhs).abs() < 1e-10 * rhs.max(1.0));
}

#[test]
fn jumps_then_relaxation_reach_the_steady_state() {
    let l = 8;
    let params = ModelParams::from_density(l, 1.0, 0.2, 0.3, 0.0).unwrap();
    let h = build_hopping_hamiltonian(l, 1.0).unwrap();
    let channels = build_jump_channels(&params, &h, None, None).unwrap();
    let mut d = initial_cdw_state(l).unwrap();
    assert!(apply_gain(&mut d, 1));
    assert!(apply_loss(&mut d, 0));
    assert!((d.occupation(1) - 1.0).abs() < 1e-14 && d.occupation(0).abs() < 1e-14);
    let prop = LindbladPropagator::new(&channels);
    let late = exact_propagate(&d, &prop, 200.0).unwrap();
    let ss = steady_state(&channels).unwrap();
    assert!(linalg::max_abs_diff(late.d().as_ref(), ss.d().as_ref()) < 1e-12);
    let c = state_correlation(&late);
    assert!((c[0] - 0.21).abs() < 1e-12);
    let s = subsystem_entropy(&late, 3, &[0, 4]).unwrap();
    let h3 = -3.0 * (0.3f64 * 0.3f64.ln() + 0.7 * 0.7f64.ln());
    assert!((s - h3).abs() < 1e-10);
}

#[test]
fn correlation_dump_round_trips() {
    let d = CorrelationMatrix::uniform(5, 0.25);
    let mut buf = Vec::new();
    d.write_to(&mut buf).unwrap();
    assert_eq!(CorrelationMatrix::read_from(buf.as_slice()).unwrap(), d);
    assert!(CorrelationMatrix::read_from(&b"nope"[..]).is_err());
}

#[test]
fn theory_agrees_across_precisions() {
    let p64 = TheoryParams::new(0.4, 0.1, 1.0, 0.05).unwrap();
    let p32: TheoryParamsF32 = TheoryParams::new(0.4f32, 0.1, 1.0, 0.05).unwrap();
    for q in [0.01, 0.1, 0.5, 2.0] {
        let a = gaussian_cq(q, &p64).unwrap();
        let b = gaussian_cq(q as f32, &p32).unwrap() as f64;
        assert!((a - b).abs() < 1e-4 * a.abs().max(1e-3), "q={q}: {a} vs {b}");
    }
    assert!((p64.l0() - p32.l0() as f64).abs() < 1e-4);
    assert!(c_tilde(0.5, 0.4, 0.0).unwrap() < c_tilde(0.5, 0.4, 0.1).unwrap());
}
