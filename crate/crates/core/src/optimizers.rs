//! Box-constrained solvers for the relaxed control problem on `[0, 1]^{N×T}`:
//! projected Adam with a latched step-size switch, and a limited-memory
//! quasi-Newton method with gradient projection and Armijo backtracking.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::control::ControlField;
use crate::error::{invalid, Error, Result};
use crate::objective::{self, RiskSpec};
use crate::quantum::{ControlSystem, TargetSpec};
use crate::seed::derive_seed;
use crate::uncertainty::{sample_scenarios, NoiseModel, NormalStream, ScenarioSet};

/// An objective over controls in the unit box.
pub trait Problem {
    /// `(N, T)`.
    fn shape(&self) -> (usize, usize);

    /// Hook run at the start of stochastic iteration `iteration` (1-based).
    fn resample(&mut self, _iteration: usize) -> Result<()> {
        Ok(())
    }

    fn value(&self, u: &DMatrix<f64>) -> Result<f64>;

    fn value_and_gradient(&self, u: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)>;
}

/// The relaxed stochastic objective `F_R` of a control system, on either a
/// fixed scenario set or one that is redrawn every stochastic iteration.
pub struct StochasticProblem<'a> {
    pub system: &'a ControlSystem,
    pub target: &'a TargetSpec,
    pub risk: RiskSpec,
    noise: NoiseModel,
    sample_size: usize,
    seed: u64,
    redraw: bool,
    scenarios: ScenarioSet,
}

impl<'a> StochasticProblem<'a> {
    pub fn fixed(system: &'a ControlSystem, target: &'a TargetSpec, risk: RiskSpec, scenarios: ScenarioSet) -> Self {
        Self {
            system,
            target,
            risk,
            noise: scenarios.model.clone(),
            sample_size: scenarios.len(),
            seed: scenarios.seed,
            redraw: false,
            scenarios,
        }
    }

    /// Draws `sample_size` scenarios up front; with `redraw` a fresh set is
    /// drawn at every stochastic iteration from a seed derived from `seed`.
    pub fn sampled(
        system: &'a ControlSystem,
        target: &'a TargetSpec,
        risk: RiskSpec,
        noise: NoiseModel,
        sample_size: usize,
        seed: u64,
        redraw: bool,
    ) -> Result<Self> {
        let scenarios = sample_scenarios(&noise, sample_size, system.steps(), seed)?;
        Ok(Self { system, target, risk, noise, sample_size, seed, redraw, scenarios })
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    fn field(u: &DMatrix<f64>) -> Result<ControlField> {
        ControlField::relaxed(u.clone())
    }
}

impl Problem for StochasticProblem<'_> {
    fn shape(&self) -> (usize, usize) {
        (self.system.controllers(), self.system.steps())
    }

    fn resample(&mut self, iteration: usize) -> Result<()> {
        if self.redraw {
            let seed = derive_seed(self.seed, "optimizers", &format!("adam-iteration-{iteration}"));
            self.scenarios = sample_scenarios(&self.noise, self.sample_size, self.system.steps(), seed)?;
        }
        Ok(())
    }

    fn value(&self, u: &DMatrix<f64>) -> Result<f64> {
        Ok(objective::evaluate(self.system, &Self::field(u)?, &self.scenarios, self.target, &self.risk)?.total)
    }

    fn value_and_gradient(&self, u: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let r = objective::gradient(self.system, &Self::field(u)?, &self.scenarios, self.target, &self.risk)?;
        Ok((r.breakdown.total, r.gradient))
    }
}

/// Closure-backed problem, mostly for tests and surrogate objectives.
pub struct FnProblem<F> {
    shape: (usize, usize),
    f: F,
}

impl<F> FnProblem<F>
where
    F: Fn(&DMatrix<f64>) -> (f64, DMatrix<f64>),
{
    pub fn new(controllers: usize, steps: usize, f: F) -> Self {
        Self { shape: (controllers, steps), f }
    }
}

impl<F> Problem for FnProblem<F>
where
    F: Fn(&DMatrix<f64>) -> (f64, DMatrix<f64>),
{
    fn shape(&self) -> (usize, usize) {
        self.shape
    }
    fn value(&self, u: &DMatrix<f64>) -> Result<f64> {
        Ok((self.f)(u).0)
    }
    fn value_and_gradient(&self, u: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        Ok((self.f)(u))
    }
}

pub fn project_box(u: &DMatrix<f64>) -> DMatrix<f64> {
    u.map(|v| v.clamp(0.0, 1.0))
}

/// Constant `1/N` start, optionally perturbed by seeded `U[−jitter, jitter]` and clamped.
pub fn initial_control(controllers: usize, steps: usize, jitter: f64, seed: u64) -> ControlField {
    let base = 1.0 / controllers as f64;
    if jitter == 0.0 {
        return ControlField::uniform(controllers, steps);
    }
    let mut rng = NormalStream::new(seed, 0);
    let values = DMatrix::from_fn(controllers, steps, |_, _| (base + jitter * (2.0 * rng.uniform() - 1.0)).clamp(0.0, 1.0));
    ControlField::relaxed(values).expect("clamped values lie in the box")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub max_iter: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Once `F_R(u^(i))` drops below this, the step size switches to `gamma2` for good.
    pub f_bar: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub resample: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            gamma1: 0.05,
            gamma2: 0.01,
            f_bar: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            resample: true,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma2 > 0.0 && self.gamma1 > self.gamma2) {
            return Err(invalid(format!(
                "step sizes must satisfy gamma1 > gamma2 > 0, got {} and {}",
                self.gamma1, self.gamma2
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("moment decay rates must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuasiNewtonConfig {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative decrease of one iteration falls below this.
    pub f_tol: f64,
    pub max_line_search: usize,
}

impl Default for QuasiNewtonConfig {
    fn default() -> Self {
        Self { memory: 10, max_iter: 500, grad_tol: 1e-6, f_tol: 1e-10, max_line_search: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    GradientTolerance,
    FunctionTolerance,
    LineSearchFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveTrace {
    pub u_final: ControlField,
    /// Adam: `F_R(u^(i))` for `i = 1..K` on that iteration's sample.
    /// Quasi-Newton: the initial value followed by one value per iteration.
    pub objective_history: Vec<f64>,
    /// Adam: Euclidean norm of `g^(i)`. Quasi-Newton: max-norm of the projected gradient.
    pub gradient_norm_history: Vec<f64>,
    /// Adam only: step size used at each iteration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub step_size_history: Vec<f64>,
    pub iterations_used: usize,
    pub stop_reason: StopReason,
    pub line_search_warning: bool,
    /// Excluded from serialized output so that repeated runs are byte-identical.
    #[serde(skip)]
    pub wall_time: f64,
}

fn check_start(problem: &dyn Problem, u0: &ControlField) -> Result<()> {
    if (u0.controllers(), u0.steps()) != problem.shape() {
        return Err(Error::Dimension(format!(
            "initial control is {}x{}, problem expects {:?}",
            u0.controllers(),
            u0.steps(),
            problem.shape()
        )));
    }
    Ok(())
}

fn finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Projected Adam.
pub fn solve_adam(problem: &mut dyn Problem, u0: &ControlField, cfg: &AdamConfig) -> Result<SolveTrace> {
    cfg.validate()?;
    check_start(problem, u0)?;
    let start = Instant::now();
    let (n, t) = problem.shape();
    let mut u = u0.values().clone();
    let mut m = DMatrix::<f64>::zeros(n, t);
    let mut v = DMatrix::<f64>::zeros(n, t);
    let mut step = cfg.gamma1;
    let mut switched = false;
    let mut objective_history = Vec::with_capacity(cfg.max_iter);
    let mut gradient_norm_history = Vec::with_capacity(cfg.max_iter);
    let mut step_size_history = Vec::with_capacity(cfg.max_iter);

    for i in 1..=cfg.max_iter {
        problem.resample(i)?;
        let (_, g) = problem.value_and_gradient(&u)?;
        if !finite(&g) {
            return Err(Error::NonFinite { iteration: i });
        }
        m = &m * cfg.beta1 + &g * (1.0 - cfg.beta1);
        v = &v * cfg.beta2 + g.component_mul(&g) * (1.0 - cfg.beta2);
        let m_hat = &m / (1.0 - cfg.beta1.powi(i as i32));
        let v_hat = &v / (1.0 - cfg.beta2.powi(i as i32));
        let update = m_hat.zip_map(&v_hat, |a, b| a / (b.sqrt() + cfg.epsilon));
        u = project_box(&(&u - update * step));

        let f = problem.value(&u)?;
        if !f.is_finite() {
            return Err(Error::NonFinite { iteration: i });
        }
        objective_history.push(f);
        gradient_norm_history.push(g.norm());
        step_size_history.push(step);
        if !switched && f < cfg.f_bar {
            step = cfg.gamma2;
            switched = true;
        }
    }
    Ok(SolveTrace {
        u_final: ControlField::relaxed(u)?,
        objective_history,
        gradient_norm_history,
        step_size_history,
        iterations_used: cfg.max_iter,
        stop_reason: StopReason::MaxIterations,
        line_search_warning: false,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn projected_gradient_norm(x: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    x.zip_map(g, |xi, gi| (xi - (xi - gi).clamp(0.0, 1.0)).abs()).max()
}

/// Variables not pinned to a bound by the sign of the gradient.
fn free_mask(x: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    x.zip_map(g, |xi, gi| {
        let pinned = (xi <= 0.0 && gi > 0.0) || (xi >= 1.0 && gi < 0.0);
        if pinned {
            0.0
        } else {
            1.0
        }
    })
}

struct Pair {
    s: DMatrix<f64>,
    y: DMatrix<f64>,
    rho: f64,
}

/// Two-loop recursion applied to the free components of `g`.
fn lbfgs_direction(g: &DMatrix<f64>, mask: &DMatrix<f64>, memory: &VecDeque<Pair>) -> DMatrix<f64> {
    let mut q = g.component_mul(mask);
    let mut alphas = Vec::with_capacity(memory.len());
    for p in memory.iter().rev() {
        let a = p.rho * p.s.component_mul(mask).dot(&q);
        q -= p.y.component_mul(mask) * a;
        alphas.push(a);
    }
    if let Some(last) = memory.back() {
        q *= last.s.dot(&last.y) / last.y.dot(&last.y);
    }
    for (p, a) in memory.iter().zip(alphas.iter().rev()) {
        let b = p.rho * p.y.component_mul(mask).dot(&q);
        q += p.s.component_mul(mask) * (a - b);
    }
    -q.component_mul(mask)
}

/// Bound-constrained limited-memory BFGS on a fixed objective.
pub fn solve_quasi_newton(problem: &dyn Problem, u0: &ControlField, cfg: &QuasiNewtonConfig) -> Result<SolveTrace> {
    const ARMIJO_C1: f64 = 1e-4;
    if cfg.memory == 0 {
        return Err(invalid("quasi-Newton memory must be at least 1"));
    }
    check_start(problem, u0)?;
    let start = Instant::now();
    let mut x = u0.values().clone();
    let (mut f, mut g) = problem.value_and_gradient(&x)?;
    if !f.is_finite() || !finite(&g) {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut memory: VecDeque<Pair> = VecDeque::with_capacity(cfg.memory);
    let mut objective_history = vec![f];
    let mut gradient_norm_history = vec![projected_gradient_norm(&x, &g)];
    let mut stop_reason = StopReason::MaxIterations;
    let mut line_search_warning = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        if projected_gradient_norm(&x, &g) < cfg.grad_tol {
            stop_reason = StopReason::GradientTolerance;
            break;
        }
        let mask = free_mask(&x, &g);
        let mut direction = lbfgs_direction(&g, &mask, &memory);
        let mut steepest = memory.is_empty();
        if !(g.dot(&direction) < 0.0) || !finite(&direction) {
            direction = -g.component_mul(&mask);
            memory.clear();
            steepest = true;
        }

        let accepted = loop {
            let max_step = direction.amax();
            let mut t = if steepest && max_step > 1.0 { 1.0 / max_step } else { 1.0 };
            let mut found = None;
            for _ in 0..cfg.max_line_search {
                let trial = project_box(&(&x + &direction * t));
                let moved = &trial - &x;
                if moved.amax() == 0.0 {
                    break;
                }
                let (ft, gt) = problem.value_and_gradient(&trial)?;
                if ft.is_finite() && ft <= f + ARMIJO_C1 * g.dot(&moved) {
                    if !finite(&gt) {
                        return Err(Error::NonFinite { iteration: iterations + 1 });
                    }
                    found = Some((trial, ft, gt));
                    break;
                }
                t *= 0.5;
            }
            match found {
                Some(step) => break Some(step),
                None if !steepest => {
                    direction = -g.component_mul(&mask);
                    memory.clear();
                    steepest = true;
                }
                None => break None,
            }
        };
        let Some((x_new, f_new, g_new)) = accepted else {
            line_search_warning = true;
            stop_reason = StopReason::LineSearchFailure;
            break;
        };

        iterations += 1;
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * y.dot(&y).max(f64::MIN_POSITIVE) && sy > 0.0 {
            if memory.len() == cfg.memory {
                memory.pop_front();
            }
            memory.push_back(Pair { rho: 1.0 / sy, s, y });
        }
        let decrease = (f - f_new) / f.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        f = f_new;
        g = g_new;
        objective_history.push(f);
        gradient_norm_history.push(projected_gradient_norm(&x, &g));
        if decrease <= cfg.f_tol {
            stop_reason = StopReason::FunctionTolerance;
            break;
        }
    }
    if stop_reason == StopReason::MaxIterations && projected_gradient_norm(&x, &g) < cfg.grad_tol {
        stop_reason = StopReason::GradientTolerance;
    }
    Ok(SolveTrace {
        u_final: ControlField::relaxed(x)?,
        objective_history,
        gradient_norm_history,
        step_size_history: Vec::new(),
        iterations_used: iterations,
        stop_reason,
        line_search_warning,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
