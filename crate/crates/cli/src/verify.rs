//! Self-contained invariant checks run by `qctrl verify`: CVaR oracle,
//! gradient vs finite differences, propagation unitarity, rounding bound.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use qctrl_core::instances::random_unitary;
use qctrl_core::objective::{self, cvar_closed_form, penalty_sos1, RiskSpec};
use qctrl_core::quantum::{cost, propagate, unitarity_residual, CMatrix, ControlSystem, HermitianOperator, TargetSpec};
use qctrl_core::rounding::{bound_rhs, cumulative_deviation, sum_up_rounding, RoundingConfig};
use qctrl_core::uncertainty::{sample_scenarios, NoiseModel};
use qctrl_core::ControlField;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

struct Rng(ChaCha20Rng);

impl Rng {
    fn new(seed: u64) -> Self {
        Self(ChaCha20Rng::seed_from_u64(seed))
    }
    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
    fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }
}

fn random_hermitian(rng: &mut Rng, dim: usize, scale: f64) -> Result<HermitianOperator, CliError> {
    let mut m = CMatrix::zeros(dim, dim);
    for a in 0..dim {
        m[(a, a)] = Complex64::new(scale * rng.range(-1.0, 1.0), 0.0);
        for b in a + 1..dim {
            let z = Complex64::new(scale * rng.range(-1.0, 1.0), scale * rng.range(-1.0, 1.0));
            m[(a, b)] = z;
            m[(b, a)] = z.conj();
        }
    }
    Ok(HermitianOperator::new(m)?)
}

fn random_system(rng: &mut Rng, q: usize, n: usize, t: usize, t_f: f64) -> Result<ControlSystem, CliError> {
    let dim = 1 << q;
    let h0 = random_hermitian(rng, dim, 0.5)?;
    let controls = (0..n).map(|_| random_hermitian(rng, dim, 1.0)).collect::<Result<_, _>>()?;
    Ok(ControlSystem::new(q, t_f, t, h0, controls, CMatrix::identity(dim, dim))?)
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String), CliError>) -> CheckResult {
    let start = Instant::now();
    let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult { name, pass, detail, seconds: start.elapsed().as_secs_f64() }
}

/// Closed-form CVaR against the minimum of `ζ + (1/η)Σp(F−ζ)_+` over the breakpoints.
pub fn cvar_oracle(seed: u64, cases: usize) -> CheckResult {
    timed("cvar_oracle", || {
        let mut rng = Rng::new(seed);
        let mut worst = 0.0f64;
        for _ in 0..cases {
            let s = 1 + rng.below(12);
            let values: Vec<f64> = (0..s).map(|_| rng.uniform()).collect();
            let w: Vec<f64> = (0..s).map(|_| rng.range(0.05, 1.0)).collect();
            let total: f64 = w.iter().sum();
            let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
            let eta = rng.range(0.01, 1.0);
            let aux = |z: f64| z + values.iter().zip(&probs).map(|(v, p)| p * (v - z).max(0.0)).sum::<f64>() / eta;
            let exact = values.iter().map(|z| aux(*z)).fold(f64::INFINITY, f64::min);
            worst = worst.max((cvar_closed_form(&values, &probs, eta) - exact).abs());
        }
        let example = cvar_closed_form(&[1.0, 2.0, 3.0, 4.0], &[0.25; 4], 0.25);
        Ok((worst <= 1e-12 && example == 4.0, format!("max |closed - exact| = {worst:.2e}, CVaR_0.25(1..4) = {example}")))
    })
}

/// Objective gradient against central differences with `h = 1e-6`, skipping
/// draws where the tail scenario is tied or moves under the perturbation.
pub fn gradient_fd(seed: u64, cases: usize) -> CheckResult {
    const H: f64 = 1e-6;
    timed("gradient_fd", || {
        let mut rng = Rng::new(seed);
        let (mut worst, mut checked, mut drawn) = (0.0f64, 0usize, 0usize);
        while checked < cases && drawn < 4 * cases {
            drawn += 1;
            let q = 1 + rng.below(3);
            let n = 1 + rng.below(3);
            let t = 1 + rng.below(10);
            let s = 1 + rng.below(5);
            let t_f = rng.range(0.5, 2.0);
            let sys = random_system(&mut rng, q, n, t, t_f)?;
            let target = TargetSpec::infidelity(random_unitary(1 << q, rng.0.next_u64()))?;
            let set = sample_scenarios(&NoiseModel::uniform(n, 0.05, 0.1)?, s, t, rng.0.next_u64())?;
            let risk = RiskSpec::new(rng.uniform(), rng.range(0.1, 1.0), rng.range(0.0, 1.0))?;
            let u = DMatrix::from_fn(n, t, |_, _| rng.range(0.05, 0.95));
            let at = |m: &DMatrix<f64>| -> Result<_, CliError> {
                Ok(objective::evaluate(&sys, &ControlField::relaxed(m.clone())?, &set, &target, &risk)?)
            };
            let g = objective::gradient(&sys, &ControlField::relaxed(u.clone())?, &set, &target, &risk)?;
            if g.tie_warning {
                continue;
            }
            let mut fd = DMatrix::zeros(n, t);
            let mut smooth = true;
            for j in 0..n {
                for k in 0..t {
                    let (mut up, mut down) = (u.clone(), u.clone());
                    up[(j, k)] += H;
                    down[(j, k)] -= H;
                    let (bu, bd) = (at(&up)?, at(&down)?);
                    smooth &= bu.tail_index == g.breakdown.tail_index && bd.tail_index == g.breakdown.tail_index;
                    fd[(j, k)] = (bu.total - bd.total) / (2.0 * H);
                }
            }
            if !smooth {
                continue;
            }
            checked += 1;
            for (a, b) in g.gradient.iter().zip(fd.iter()) {
                worst = worst.max((a - b).abs() / (a.abs().max(b.abs()) + 1e-3));
            }
        }
        Ok((
            checked == cases && worst <= 1e-5,
            format!("{checked}/{cases} instances, max rel err = {worst:.2e}"),
        ))
    })
}

/// `‖X†X − I‖_F ≤ 1e-10` along random propagations, costs in `[0, 1 + 1e-12]`.
pub fn unitarity(seed: u64, cases: usize) -> CheckResult {
    timed("unitarity", || {
        let mut rng = Rng::new(seed);
        let (mut residual, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..cases {
            let q = 1 + rng.below(3);
            let n = 1 + rng.below(4);
            let t = 1 + rng.below(12);
            let t_f = rng.range(0.5, 10.0);
            let sys = random_system(&mut rng, q, n, t, t_f)?;
            let u = ControlField::relaxed(DMatrix::from_fn(n, t, |_, _| rng.uniform()))?;
            let xi = DMatrix::from_fn(n + 1, t, |_, _| rng.range(-0.3, 0.3));
            let prop = propagate(&sys, &u, &xi)?;
            for x in &prop.cumulative {
                residual = residual.max(unitarity_residual(x));
            }
            let f = cost(prop.final_operator(), &TargetSpec::infidelity(random_unitary(1 << q, rng.0.next_u64()))?)?;
            lo = lo.min(f);
            hi = hi.max(f);
        }
        Ok((
            residual <= 1e-10 && lo >= 0.0 && hi <= 1.0 + 1e-12,
            format!("max residual = {residual:.2e}, cost range [{lo:.3e}, {hi:.6}]"),
        ))
    })
}

/// Sum-up rounding never exceeds its deviation bound.
pub fn rounding_bound(seed: u64, cases: usize) -> CheckResult {
    timed("rounding_bound", || {
        let mut rng = Rng::new(seed);
        let dt = 0.1;
        let mut worst_ratio = 0.0f64;
        let mut failures = 0;
        for case in 0..cases {
            let n = [2, 3, 5][case % 3];
            let t = [10, 50][(case / 3) % 2];
            let c_sur = [1, 2, 4, 8][(case / 6) % 4];
            let u = ControlField::relaxed(DMatrix::from_fn(n, t, |_, _| rng.uniform()))?;
            let cfg = RoundingConfig::sos1(c_sur)?;
            let b = sum_up_rounding(&u, &cfg, dt)?;
            let dev = cumulative_deviation(&u, &b, &cfg, dt)?;
            let bound = bound_rhs(n, &cfg, dt, dt * t as f64, penalty_sos1(u.values()));
            if dev > bound + 1e-12 {
                failures += 1;
            }
            worst_ratio = worst_ratio.max(dev / bound);
        }
        Ok((failures == 0, format!("{failures}/{cases} violations, max deviation/bound = {worst_ratio:.3}")))
    })
}

/// Log-log slope of the mean deviation versus `c_sur` on simplex-valued inputs.
pub fn rounding_decay(seed: u64) -> CheckResult {
    timed("rounding_decay", || {
        let slope = decay_slope(seed)?;
        Ok(((-1.2..=-0.8).contains(&slope), format!("slope = {slope:.3}")))
    })
}

pub fn decay_slope(seed: u64) -> Result<f64, CliError> {
    let mut rng = Rng::new(seed);
    let dt = 0.2;
    let inputs = (0..50)
        .map(|i| {
            let mut m = DMatrix::from_fn(2 + i % 4, 20, |_, _| -rng.uniform().max(1e-300).ln());
            for mut col in m.column_iter_mut() {
                let s = col.sum();
                col /= s;
            }
            ControlField::relaxed(m)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut pts = Vec::new();
    for c in (0..6).map(|e| 1usize << e) {
        let cfg = RoundingConfig::sos1(c)?;
        let mut total = 0.0;
        for u in &inputs {
            total += cumulative_deviation(u, &sum_up_rounding(u, &cfg, dt)?, &cfg, dt)?;
        }
        pts.push(((c as f64).ln(), (total / inputs.len() as f64).ln()));
    }
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    Ok(pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / pts.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>())
}

pub fn run_all(seed: u64) -> Vec<CheckResult> {
    vec![
        cvar_oracle(seed, 100),
        gradient_fd(seed.wrapping_add(1), 20),
        unitarity(seed.wrapping_add(2), 30),
        rounding_bound(seed.wrapping_add(3), 1000),
        rounding_decay(seed.wrapping_add(4)),
    ]
}

pub fn table(results: &[CheckResult]) -> String {
    let mut s = format!("{:<16} {:<6} {:>9}  detail\n", "check", "status", "seconds");
    for r in results {
        s.push_str(&format!(
            "{:<16} {:<6} {:>9.3}  {}\n",
            r.name,
            if r.pass { "PASS" } else { "FAIL" },
            r.seconds,
            r.detail
        ));
    }
    s
}
