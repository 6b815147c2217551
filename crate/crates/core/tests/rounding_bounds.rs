mod common;

use common::Rng;
use nalgebra::DMatrix;
use qctrl_core::objective::penalty_sos1;
use qctrl_core::rounding::{bound_rhs, cumulative_deviation, sum_up_rounding, RoundingConfig};
use qctrl_core::ControlField;

const SLACK: f64 = 1e-12;

fn simplex_columns(rng: &mut Rng, n: usize, t: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(n, t, |_, _| -rng.uniform().max(1e-300).ln());
    for mut col in m.column_iter_mut() {
        let s = col.sum();
        col /= s;
    }
    m
}

#[test]
fn deviation_never_exceeds_bound() {
    let mut rng = Rng::new(2024);
    let (dt, t_f_per_step) = (0.1, 0.1);
    for case in 0..1000 {
        let n = [2, 3, 5][case % 3];
        let t = [10, 50][(case / 3) % 2];
        let c_sur = [1, 2, 4, 8][(case / 6) % 4];
        let u = ControlField::relaxed(DMatrix::from_fn(n, t, |_, _| rng.uniform())).unwrap();
        let cfg = RoundingConfig::sos1(c_sur).unwrap();
        let b = sum_up_rounding(&u, &cfg, dt).unwrap();
        assert!(b.is_binary());
        for k in 0..b.steps() {
            assert_eq!(b.values().column(k).sum(), 1.0);
        }
        let dev = cumulative_deviation(&u, &b, &cfg, dt).unwrap();
        let bound = bound_rhs(n, &cfg, dt, t_f_per_step * t as f64, penalty_sos1(u.values()));
        assert!(dev <= bound + SLACK, "case {case}: deviation {dev} > bound {bound}");
        // integral preservation per controller
        for j in 0..n {
            let drift = (b.values().row(j).sum() - c_sur as f64 * u.values().row(j).sum()).abs() * dt / c_sur as f64;
            assert!(drift <= bound + SLACK);
        }
    }
}

#[test]
fn sos1_inputs_decay_like_one_over_c() {
    let mut rng = Rng::new(77);
    let dt = 0.2;
    let multipliers = [1usize, 2, 4, 8, 16, 32];
    let inputs: Vec<ControlField> = (0..50)
        .map(|i| ControlField::relaxed(simplex_columns(&mut rng, 2 + i % 4, 20)).unwrap())
        .collect();
    let mut logs = Vec::new();
    for &c in &multipliers {
        let cfg = RoundingConfig::sos1(c).unwrap();
        let mut total = 0.0;
        for u in &inputs {
            let b = sum_up_rounding(u, &cfg, dt).unwrap();
            let dev = cumulative_deviation(u, &b, &cfg, dt).unwrap();
            assert!(dev <= (u.controllers() - 1) as f64 * dt / c as f64 + SLACK);
            total += dev;
        }
        logs.push(((c as f64).ln(), (total / inputs.len() as f64).ln()));
    }
    let n = logs.len() as f64;
    let (mx, my) = (logs.iter().map(|p| p.0).sum::<f64>() / n, logs.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / logs.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    assert!((-1.2..=-0.8).contains(&slope), "slope {slope}");
}
