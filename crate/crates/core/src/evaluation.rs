//! Out-of-sample scoring of controls and the summary metrics built on it.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControlField;
use crate::error::{invalid, Error, Result};
use crate::objective::{cvar_closed_form, scenario_costs, RiskSpec};
use crate::quantum::{ControlSystem, TargetSpec};
use crate::uncertainty::{fixed_offset_scenarios, sample_scenarios, NoiseModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub groups: usize,
    pub per_group: usize,
    pub seed: u64,
    pub alpha: f64,
    pub eta: f64,
    /// Costs per group, scenario order preserved.
    pub costs: Vec<Vec<f64>>,
    pub mean: f64,
    pub cvar: f64,
    /// `α·mean + (1−α)·cvar` on the pooled costs.
    pub total: f64,
    /// Fraction of pooled costs below the threshold, when one is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dp: Option<f64>,
    pub group_means: Vec<f64>,
    /// Sample standard deviation of each group's costs.
    pub group_sds: Vec<f64>,
}

impl EvaluationReport {
    pub fn pooled(&self) -> Vec<f64> {
        self.costs.concat()
    }

    /// `group,scenario,cost`, 1-based indices.
    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(c) = comment {
            let _ = writeln!(s, "# {c}");
        }
        s.push_str("group,scenario,cost\n");
        for (g, costs) in self.costs.iter().enumerate() {
            for (i, v) in costs.iter().enumerate() {
                let _ = writeln!(s, "{},{},{:.16e}", g + 1, i + 1, v);
            }
        }
        s
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Equal-weight mean, CVaR and blend of a cost vector.
pub fn summarize(costs: &[f64], risk: &RiskSpec) -> (f64, f64, f64) {
    let p = vec![1.0 / costs.len() as f64; costs.len()];
    let m = costs.iter().zip(&p).map(|(c, p)| c * p).sum::<f64>();
    let cvar = cvar_closed_form(costs, &p, risk.eta);
    (m, cvar, risk.alpha * m + (1.0 - risk.alpha) * cvar)
}

/// Scores `u` on `groups × per_group` fresh scenarios drawn on the control's own grid.
///
/// `system` may be defined on any grid; it is re-gridded to `u.steps()` steps
/// over the same horizon.
#[allow(clippy::too_many_arguments)]
pub fn out_of_sample(
    u: &ControlField,
    system: &ControlSystem,
    target: &TargetSpec,
    noise: &NoiseModel,
    groups: usize,
    per_group: usize,
    risk: &RiskSpec,
    dp_threshold: Option<f64>,
    seed: u64,
) -> Result<EvaluationReport> {
    risk.validate()?;
    if groups == 0 || per_group == 0 {
        return Err(invalid("groups and per_group must be positive"));
    }
    if noise.controllers() != system.controllers() {
        return Err(Error::Dimension(format!(
            "noise model covers {} controllers, system has {}",
            noise.controllers(),
            system.controllers()
        )));
    }
    let system = if system.steps() == u.steps() { system.clone() } else { system.with_steps(u.steps())? };
    if u.controllers() != system.controllers() {
        return Err(Error::Dimension(format!(
            "control has {} controllers, system has {}",
            u.controllers(),
            system.controllers()
        )));
    }
    let scenarios = sample_scenarios(noise, groups * per_group, u.steps(), seed)?;
    let pooled = scenario_costs(&system, u, &scenarios, target)?;
    let costs: Vec<Vec<f64>> = pooled.chunks(per_group).map(<[f64]>::to_vec).collect();
    let (m, cvar, total) = summarize(&pooled, risk);
    Ok(EvaluationReport {
        groups,
        per_group,
        seed,
        alpha: risk.alpha,
        eta: risk.eta,
        group_means: costs.iter().map(|c| mean(c)).collect(),
        group_sds: costs.iter().map(|c| sample_sd(c)).collect(),
        dp: dp_threshold.map(|t| distinguished_percentage(&pooled, t)),
        costs,
        mean: m,
        cvar,
        total,
    })
}

/// Fraction of costs strictly below `threshold`.
pub fn distinguished_percentage(costs: &[f64], threshold: f64) -> f64 {
    if costs.is_empty() {
        return 0.0;
    }
    costs.iter().filter(|c| **c < threshold).count() as f64 / costs.len() as f64
}

/// Nearest-rank `p`-quantile: the `⌈p·n⌉`-th smallest value.
pub fn nearest_rank(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // the small slack keeps exact products such as 0.9·10 on rank 9
    let rank = ((p * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Fraction of `out_sample` strictly below the `(1−η)` nearest-rank quantile of `in_sample`.
pub fn percentile_coverage(in_sample: &[f64], out_sample: &[f64], eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(invalid(format!("eta must be in (0, 1), got {eta}")));
    }
    if in_sample.is_empty() || out_sample.is_empty() {
        return Err(invalid("cost samples must be non-empty"));
    }
    let level = nearest_rank(in_sample, 1.0 - eta);
    Ok(distinguished_percentage(out_sample, level))
}

/// `(sp − d) / d`.
pub fn percent_change(metric_sp: f64, metric_d: f64) -> Result<f64> {
    if metric_d == 0.0 {
        return Err(invalid("baseline metric is zero"));
    }
    Ok((metric_sp - metric_d) / metric_d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    /// 1-based indices of the two swept controllers.
    pub controllers: (usize, usize),
    pub mu1_axis: Vec<f64>,
    pub mu2_axis: Vec<f64>,
    /// `cells[a][b]` is the average cost at `(mu1_axis[a], mu2_axis[b])`.
    pub cells: Vec<Vec<f64>>,
    pub per_cell: usize,
    pub seed: u64,
}

impl SweepGrid {
    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(c) = comment {
            let _ = writeln!(s, "# {c}");
        }
        s.push_str("mu1,mu2,avg_cost\n");
        for (a, m1) in self.mu1_axis.iter().enumerate() {
            for (b, m2) in self.mu2_axis.iter().enumerate() {
                let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", m1, m2, self.cells[a][b]);
            }
        }
        s
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Average cost of `u` over a grid of fixed offsets for controllers `pair`
/// (1-based), all other offsets zero. Every cell reuses the same seed, so cells
/// differ only through the offsets.
#[allow(clippy::too_many_arguments)]
pub fn offset_sweep(
    u: &ControlField,
    system: &ControlSystem,
    target: &TargetSpec,
    noise: &NoiseModel,
    pair: (usize, usize),
    mu_range: (f64, f64),
    grid_points: usize,
    per_cell: usize,
    seed: u64,
) -> Result<SweepGrid> {
    let n = system.controllers();
    if pair.0 == 0 || pair.1 == 0 || pair.0 > n || pair.1 > n || pair.0 == pair.1 {
        return Err(invalid(format!("sweep controllers {pair:?} must be distinct and within 1..={n}")));
    }
    if grid_points == 0 || per_cell == 0 {
        return Err(invalid("grid_points and per_cell must be positive"));
    }
    if !(mu_range.0.is_finite() && mu_range.1.is_finite() && mu_range.0 <= mu_range.1) {
        return Err(invalid(format!("invalid offset range {mu_range:?}")));
    }
    if noise.controllers() != n {
        return Err(Error::Dimension("noise model does not match the system".into()));
    }
    let system = if system.steps() == u.steps() { system.clone() } else { system.with_steps(u.steps())? };
    let axis = linspace(mu_range.0, mu_range.1, grid_points);
    let cells_flat: Vec<f64> = (0..grid_points * grid_points)
        .into_par_iter()
        .map(|idx| {
            let (a, b) = (idx / grid_points, idx % grid_points);
            let mut offsets = vec![0.0; n + 1];
            offsets[pair.0] = axis[a];
            offsets[pair.1] = axis[b];
            let set = fixed_offset_scenarios(noise, &offsets, per_cell, u.steps(), seed)?;
            let costs = scenario_costs(&system, u, &set, target)?;
            Ok(mean(&costs))
        })
        .collect::<Result<_>>()?;
    Ok(SweepGrid {
        controllers: pair,
        mu1_axis: axis.clone(),
        mu2_axis: axis,
        cells: cells_flat.chunks(grid_points).map(<[f64]>::to_vec).collect(),
        per_cell,
        seed,
    })
}
