use qctrl_core::uncertainty::{fixed_offset_scenarios, sample_scenarios, NoiseModel};
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn offset_moments() {
    let model = NoiseModel::new(vec![0.0, 0.05], None, 0.1).unwrap();
    let set = sample_scenarios(&model, 10_000, 1, 5).unwrap();
    let mu: Vec<f64> = set.scenarios.iter().map(|s| s.offsets[1]).collect();
    let mean = mu.iter().sum::<f64>() / mu.len() as f64;
    let sd = (mu.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (mu.len() - 1) as f64).sqrt();
    assert!(mean.abs() <= 4.0 * 0.05 / 100.0, "mean {mean}");
    assert!((sd - 0.05).abs() <= 0.05 * 0.05, "sd {sd}");
}

#[test]
fn per_step_spread_with_fixed_offsets() {
    let model = NoiseModel::new(vec![0.0, 0.05], Some(vec![0.0, 0.02]), 0.1).unwrap();
    let set = fixed_offset_scenarios(&model, &[0.0, 0.3], 10_000, 1, 8).unwrap();
    let x: Vec<f64> = set.scenarios.iter().map(|s| s.xi[(1, 0)]).collect();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt();
    assert!((sd - 0.02).abs() <= 0.05 * 0.02, "sd {sd}");
    assert!((mean - 0.3).abs() <= 4.0 * 0.02 / 100.0);
}

#[test]
fn standardized_draws_pass_kolmogorov_smirnov() {
    let model = NoiseModel::new(vec![0.1, 0.05, 0.2], None, 0.1).unwrap();
    let set = sample_scenarios(&model, 1000, 40, 13).unwrap();
    let mut z = Vec::with_capacity(1000 * 40 * 3);
    for s in &set.scenarios {
        for j in 0..3 {
            for k in 0..40 {
                z.push((s.xi[(j, k)] - s.offsets[j]) / model.sigma_time[j]);
            }
        }
    }
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let d = z
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let f = normal.cdf(*v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    let critical = 1.628 / n.sqrt();
    assert!(d < critical, "KS statistic {d} >= {critical}");
}

#[test]
fn serialized_sets_are_byte_identical() {
    let model = NoiseModel::uniform(3, 0.02, 0.05).unwrap();
    let a = serde_json::to_string(&sample_scenarios(&model, 64, 10, 99).unwrap()).unwrap();
    let b = serde_json::to_string(&sample_scenarios(&model, 64, 10, 99).unwrap()).unwrap();
    assert_eq!(a, b);
}
