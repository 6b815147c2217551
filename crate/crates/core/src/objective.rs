//! The relaxed stochastic objective
//!
//! `F_R(u) = α Σ_s p_s F^s(u) + (1-α) F_C(u) + θ F_L(u)`
//!
//! where `F_C` is the sample CVaR evaluated in closed form through the tail
//! scenario `s*` and `F_L` is the squared SOS1 penalty.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControlField;
use crate::error::{invalid, Error, Result};
use crate::quantum::{cost, propagate, scenario_gradient, ControlSystem, TargetSpec};
use crate::uncertainty::ScenarioSet;

/// Slack on the tail-mass comparison, absorbs round-off in summed probabilities.
const MASS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub alpha: f64,
    pub eta: f64,
    pub theta: f64,
}

impl RiskSpec {
    pub fn new(alpha: f64, eta: f64, theta: f64) -> Result<Self> {
        let r = Self { alpha, eta, theta };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid(format!("eta must be in (0, 1], got {}", self.eta)));
        }
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(invalid(format!("theta must be >= 0, got {}", self.theta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TailSelection {
    pub index: usize,
    /// Another scenario attains exactly the tail value.
    pub tie: bool,
}

fn mass_above(values: &[f64], probs: &[f64], level: f64) -> f64 {
    values.iter().zip(probs).filter(|(v, _)| **v > level).map(|(_, p)| p).sum()
}

/// The scenario with the smallest value whose strictly-greater probability
/// mass is at most `eta`, i.e. the upper `eta`-quantile of the costs. This is
/// the minimizer of `ζ + (1/η) Σ p_s (F^s − ζ)_+` over the scenario values.
/// Ties in value resolve to the smallest index.
pub fn select_tail_scenario(values: &[f64], probs: &[f64], eta: f64) -> TailSelection {
    assert_eq!(values.len(), probs.len(), "values and probabilities differ in length");
    assert!(!values.is_empty(), "at least one scenario is required");
    let mut best: Option<usize> = None;
    for s in 0..values.len() {
        if mass_above(values, probs, values[s]) > eta + MASS_SLACK {
            continue;
        }
        if best.is_none_or(|b| values[s] < values[b]) {
            best = Some(s);
        }
    }
    // the largest value always has zero mass above it
    let index = best.expect("maximal scenario qualifies");
    let tie = values.iter().enumerate().any(|(s, v)| s != index && *v == values[index]);
    TailSelection { index, tie }
}

/// `F^{s*} + (1/η) Σ_{s: F^s > F^{s*}} p_s (F^s - F^{s*})`.
pub fn cvar_closed_form(values: &[f64], probs: &[f64], eta: f64) -> f64 {
    let zeta = values[select_tail_scenario(values, probs, eta).index];
    let excess: f64 = values
        .iter()
        .zip(probs)
        .filter(|(v, _)| **v > zeta)
        .map(|(v, p)| p * (v - zeta))
        .sum();
    zeta + excess / eta
}

/// `Σ_k (Σ_j u_jk - 1)²`.
pub fn penalty_sos1(u: &DMatrix<f64>) -> f64 {
    u.column_iter().map(|col| (col.sum() - 1.0).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub per_scenario: Vec<f64>,
    pub mean: f64,
    pub tail_index: usize,
    /// `F^{s*}(u)`, the minimizing `ζ` in the CVaR auxiliary problem.
    pub zeta_star: f64,
    pub cvar: f64,
    pub penalty: f64,
    pub total: f64,
    /// `α·mean + (1-α)·cvar`, the objective without the SOS1 penalty.
    pub tilde_f: f64,
    pub tie_warning: bool,
}

impl ObjectiveBreakdown {
    pub fn from_costs(per_scenario: Vec<f64>, probs: &[f64], penalty: f64, risk: &RiskSpec) -> Self {
        let mean = per_scenario.iter().zip(probs).map(|(f, p)| f * p).sum();
        let tail = select_tail_scenario(&per_scenario, probs, risk.eta);
        let cvar = cvar_closed_form(&per_scenario, probs, risk.eta);
        let tilde_f = risk.alpha * mean + (1.0 - risk.alpha) * cvar;
        Self {
            zeta_star: per_scenario[tail.index],
            tail_index: tail.index,
            tie_warning: tail.tie,
            per_scenario,
            mean,
            cvar,
            penalty,
            total: tilde_f + risk.theta * penalty,
            tilde_f,
        }
    }
}

fn check_inputs(system: &ControlSystem, u: &ControlField, scenarios: &ScenarioSet, risk: &RiskSpec) -> Result<()> {
    risk.validate()?;
    if scenarios.is_empty() {
        return Err(invalid("scenario set is empty"));
    }
    if scenarios.model.controllers() != system.controllers() {
        return Err(Error::Dimension(format!(
            "noise model covers {} controllers, system has {}",
            scenarios.model.controllers(),
            system.controllers()
        )));
    }
    if u.controllers() != system.controllers() || u.steps() != system.steps() {
        return Err(Error::Dimension(format!(
            "control is {}x{}, system expects {}x{}",
            u.controllers(),
            u.steps(),
            system.controllers(),
            system.steps()
        )));
    }
    Ok(())
}

/// Per-scenario terminal costs, evaluated in parallel and returned in scenario order.
pub fn scenario_costs(
    system: &ControlSystem,
    u: &ControlField,
    scenarios: &ScenarioSet,
    target: &TargetSpec,
) -> Result<Vec<f64>> {
    scenarios
        .scenarios
        .par_iter()
        .map(|s| cost(propagate(system, u, &s.xi)?.final_operator(), target))
        .collect()
}

pub fn evaluate(
    system: &ControlSystem,
    u: &ControlField,
    scenarios: &ScenarioSet,
    target: &TargetSpec,
    risk: &RiskSpec,
) -> Result<ObjectiveBreakdown> {
    check_inputs(system, u, scenarios, risk)?;
    let costs = scenario_costs(system, u, scenarios, target)?;
    Ok(ObjectiveBreakdown::from_costs(costs, &scenarios.probabilities(), penalty_sos1(u.values()), risk))
}

#[derive(Debug, Clone)]
pub struct GradientResult {
    pub gradient: DMatrix<f64>,
    pub breakdown: ObjectiveBreakdown,
    pub tie_warning: bool,
}

/// Objective and its gradient
///
/// `α Σ p_s ∇F^s + (1-α)[(1 - m/η) ∇F^{s*} + (1/η) Σ_{F^s > F^{s*}} p_s ∇F^s] + 2θ(Σ_j u_jk - 1)`
///
/// with `m` the probability mass strictly above the tail value. At value ties
/// with the tail scenario the same expression is returned as a subgradient and
/// `tie_warning` is set.
pub fn gradient(
    system: &ControlSystem,
    u: &ControlField,
    scenarios: &ScenarioSet,
    target: &TargetSpec,
    risk: &RiskSpec,
) -> Result<GradientResult> {
    check_inputs(system, u, scenarios, risk)?;
    let per: Vec<(f64, DMatrix<f64>)> = scenarios
        .scenarios
        .par_iter()
        .map(|s| {
            let prop = propagate(system, u, &s.xi)?;
            let f = cost(prop.final_operator(), target)?;
            let g = scenario_gradient(system, u, &s.xi, target, &prop)?;
            Ok((f, g))
        })
        .collect::<Result<_>>()?;
    let probs = scenarios.probabilities();
    let costs: Vec<f64> = per.iter().map(|(f, _)| *f).collect();
    let breakdown = ObjectiveBreakdown::from_costs(costs, &probs, penalty_sos1(u.values()), risk);

    let zeta = breakdown.zeta_star;
    let mass: f64 = breakdown.per_scenario.iter().zip(&probs).filter(|(f, _)| **f > zeta).map(|(_, p)| p).sum();
    let (n, t) = (u.controllers(), u.steps());
    let mut grad = DMatrix::zeros(n, t);
    // fixed ascending scenario order keeps the reduction bitwise reproducible
    for (s, (f, g)) in per.iter().enumerate() {
        let mut w = risk.alpha * probs[s];
        if *f > zeta {
            w += (1.0 - risk.alpha) * probs[s] / risk.eta;
        }
        if s == breakdown.tail_index {
            w += (1.0 - risk.alpha) * (1.0 - mass / risk.eta);
        }
        if w != 0.0 {
            grad += g * w;
        }
    }
    if risk.theta != 0.0 {
        for k in 0..t {
            let slope = 2.0 * risk.theta * (u.values().column(k).sum() - 1.0);
            for j in 0..n {
                grad[(j, k)] += slope;
            }
        }
    }
    let tie_warning = breakdown.tie_warning;
    Ok(GradientResult { gradient: grad, breakdown, tie_warning })
}
