mod common;

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use qctrl_core::evaluation::{distinguished_percentage, offset_sweep, out_of_sample};
use qctrl_core::instances::build_energy_instance;
use qctrl_core::objective::{self, RiskSpec};
use qctrl_core::optimizers::{initial_control, solve_adam, solve_quasi_newton, AdamConfig, FnProblem, Problem, QuasiNewtonConfig, StochasticProblem};
use qctrl_core::quantum::{cost, CMatrix, TargetSpec};
use qctrl_core::uncertainty::{sample_scenarios, NoiseModel, ScenarioSet};
use qctrl_core::ControlField;

#[test]
fn energy_instance_ground_state_reachable() {
    let inst = build_energy_instance(2, 0, 5.0, 10).unwrap();
    let TargetSpec::Energy { psi0, .. } = &inst.target else { panic!() };
    let ground = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0].into_iter().map(|x| Complex64::new(x, 0.0)).collect());
    // Householder reflection swapping psi0 and the ground state
    let w = psi0 - &ground;
    let reflect = CMatrix::identity(4, 4) - (&w * w.adjoint()) * Complex64::new(2.0 / w.norm_squared(), 0.0);
    assert!(cost(&reflect, &inst.target).unwrap().abs() < 1e-10);
    let drive = ControlField::from_rows(&[vec![1.0; 10], vec![0.0; 10]]).unwrap();
    let set = ScenarioSet::deterministic(2, 10);
    let f = objective::evaluate(&inst.system, &drive, &set, &inst.target, &RiskSpec::new(1.0, 0.5, 0.0).unwrap()).unwrap().total;
    assert!(f.is_finite() && (0.0..=1.0).contains(&f));
    let again = build_energy_instance(2, 0, 5.0, 10).unwrap();
    assert_eq!(serde_json::to_string(&inst).unwrap(), serde_json::to_string(&again).unwrap());
}

#[test]
fn quasi_newton_is_monotone_on_energy_instance() {
    let inst = build_energy_instance(2, 0, 5.0, 10).unwrap();
    let noise = NoiseModel::uniform(2, 0.0, 0.05).unwrap();
    let risk = RiskSpec::new(0.5, 0.2, 1.0).unwrap();
    let prob = StochasticProblem::sampled(&inst.system, &inst.target, risk, noise, 10, 3, false).unwrap();
    let u0 = initial_control(2, 10, 0.2, 1);
    let cfg = QuasiNewtonConfig { max_iter: 60, ..Default::default() };
    let trace = solve_quasi_newton(&prob, &u0, &cfg).unwrap();
    for w in trace.objective_history.windows(2) {
        assert!(w[1] <= w[0]);
    }
    assert!(trace.objective_history.last().unwrap() < &trace.objective_history[0]);
    assert!(trace.u_final.values().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn adam_fixed_sample_improves_start() {
    let inst = build_energy_instance(2, 0, 5.0, 10).unwrap();
    let noise = NoiseModel::uniform(2, 0.0, 0.05).unwrap();
    let risk = RiskSpec::new(0.5, 0.2, 1.0).unwrap();
    let cfg = AdamConfig { max_iter: 500, gamma1: 0.02, gamma2: 0.005, f_bar: 0.05, resample: false, ..Default::default() };
    let mut improved = 0;
    for seed in 0..5 {
        let mut prob = StochasticProblem::sampled(&inst.system, &inst.target, risk, noise.clone(), 8, seed, false).unwrap();
        let u0 = initial_control(2, 10, 0.2, seed);
        let start = prob.value(u0.values()).unwrap();
        let trace = solve_adam(&mut prob, &u0, &cfg).unwrap();
        if *trace.objective_history.last().unwrap() < start {
            improved += 1;
        }
    }
    assert!(improved >= 4, "{improved}/5 seeds improved");
}

#[test]
fn solver_iterates_stay_feasible_and_runs_repeat() {
    let calls = Cell::new(0usize);
    let f = |u: &DMatrix<f64>| {
        calls.set(calls.get() + 1);
        assert!(u.iter().all(|v| (0.0..=1.0).contains(v)), "infeasible iterate");
        (u.map(|v| (v - 1.3).powi(2) + (v + 0.2).powi(4)).sum(), u.map(|v| 2.0 * (v - 1.3) + 4.0 * (v + 0.2).powi(3)))
    };
    let mut prob = FnProblem::new(3, 4, f);
    let u0 = initial_control(3, 4, 0.3, 5);
    let a = solve_adam(&mut prob, &u0, &AdamConfig { max_iter: 100, ..Default::default() }).unwrap();
    let b = solve_adam(&mut prob, &u0, &AdamConfig { max_iter: 100, ..Default::default() }).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let q = solve_quasi_newton(&prob, &u0, &QuasiNewtonConfig::default()).unwrap();
    assert!(calls.get() > 0);
    assert_eq!(q.u_final.values(), solve_quasi_newton(&prob, &u0, &QuasiNewtonConfig::default()).unwrap().u_final.values());
}

#[test]
fn resampling_is_seeded() {
    let inst = build_energy_instance(2, 0, 2.0, 4).unwrap();
    let noise = NoiseModel::uniform(2, 0.0, 0.05).unwrap();
    let risk = RiskSpec::new(0.5, 0.2, 0.0).unwrap();
    let cfg = AdamConfig { max_iter: 20, ..Default::default() };
    let run = || {
        let mut prob = StochasticProblem::sampled(&inst.system, &inst.target, risk, noise.clone(), 4, 11, true).unwrap();
        solve_adam(&mut prob, &ControlField::uniform(2, 4), &cfg).unwrap().objective_history
    };
    assert_eq!(run(), run());
}

#[test]
fn evaluation_matches_objective_on_same_scenarios() {
    let inst = build_energy_instance(3, 4, 3.0, 6).unwrap();
    let noise = NoiseModel::uniform(2, 0.0, 0.05).unwrap();
    let risk = RiskSpec::new(0.3, 0.1, 0.0).unwrap();
    let u = ControlField::binary(DMatrix::from_fn(2, 6, |j, k| if (j + k) % 2 == 0 { 1.0 } else { 0.0 })).unwrap();
    let report = out_of_sample(&u, &inst.system, &inst.target, &noise, 4, 25, &risk, Some(inst.dp_threshold), 17).unwrap();
    let set = sample_scenarios(&noise, 100, 6, 17).unwrap();
    let b = objective::evaluate(&inst.system, &u, &set, &inst.target, &risk).unwrap();
    assert!((report.mean - b.mean).abs() < 1e-12);
    assert!((report.cvar - b.cvar).abs() < 1e-12);
    assert!(report.cvar >= report.mean);
    let pooled = report.pooled();
    let pooled_mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    assert!((pooled_mean - report.mean).abs() < 1e-12);
    let again = out_of_sample(&u, &inst.system, &inst.target, &noise, 4, 25, &risk, Some(inst.dp_threshold), 17).unwrap();
    assert_eq!(report, again);
}

#[test]
fn evaluation_degenerate_cases() {
    let inst = build_energy_instance(2, 0, 2.0, 4).unwrap();
    let risk = RiskSpec::new(0.5, 0.1, 0.0).unwrap();
    let u = ControlField::binary(DMatrix::from_fn(2, 8, |j, k| if (j + k) % 3 == 0 { 1.0 } else { 0.0 })).unwrap();
    let quiet = NoiseModel::noiseless(2);
    let r = out_of_sample(&u, &inst.system, &inst.target, &quiet, 2, 5, &risk, None, 1).unwrap();
    assert!(r.group_sds.iter().all(|s| *s == 0.0));
    assert!(r.pooled().windows(2).all(|w| w[0] == w[1]));
    let noise = NoiseModel::uniform(2, 0.0, 0.1).unwrap();
    let one = out_of_sample(&u, &inst.system, &inst.target, &noise, 1, 30, &risk, None, 2).unwrap();
    assert!((one.group_means[0] - one.mean).abs() < 1e-12);
}

#[test]
fn reseeded_mean_is_stable() {
    let inst = build_energy_instance(2, 0, 2.0, 5).unwrap();
    let noise = NoiseModel::uniform(2, 0.0, 0.1).unwrap();
    let risk = RiskSpec::new(1.0, 0.1, 0.0).unwrap();
    let u = ControlField::binary(DMatrix::from_fn(2, 5, |j, k| if (j + k) % 2 == 0 { 1.0 } else { 0.0 })).unwrap();
    let a = out_of_sample(&u, &inst.system, &inst.target, &noise, 10, 500, &risk, None, 1).unwrap();
    let b = out_of_sample(&u, &inst.system, &inst.target, &noise, 10, 500, &risk, None, 2).unwrap();
    let sd = a.group_sds.iter().sum::<f64>() / a.group_sds.len() as f64;
    let se = sd / 5000f64.sqrt();
    assert!((a.mean - b.mean).abs() < 3.0 * se * 2f64.sqrt() + 1e-15, "{} vs {}", a.mean, b.mean);
}

#[test]
fn dp_is_monotone_in_threshold() {
    let costs: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
    let mut last = 0.0;
    for t in 0..=110 {
        let dp = distinguished_percentage(&costs, t as f64 / 100.0);
        assert!(dp >= last);
        last = dp;
    }
}

#[test]
fn sweep_origin_and_symmetry() {
    let inst = build_energy_instance(2, 0, 2.0, 4).unwrap();
    let risk = RiskSpec::new(1.0, 0.1, 0.0).unwrap();
    let u = ControlField::binary(DMatrix::from_fn(2, 4, |j, k| if (j + k) % 2 == 0 { 1.0 } else { 0.0 })).unwrap();
    let quiet = NoiseModel::new(vec![0.0, 0.1, 0.1], Some(vec![0.0; 3]), 0.1).unwrap();
    let grid = offset_sweep(&u, &inst.system, &inst.target, &quiet, (1, 2), (-0.2, 0.2), 5, 20, 3).unwrap();
    let det = objective::evaluate(&inst.system, &u, &ScenarioSet::deterministic(2, 4), &inst.target, &risk).unwrap().mean;
    assert!((grid.cells[2][2] - det).abs() < 1e-14);
    assert!(grid.cells.iter().flatten().all(|c| (0.0..=1.0 + 1e-12).contains(c)));
    assert_eq!(grid.to_csv(None).lines().count(), 26);
}
