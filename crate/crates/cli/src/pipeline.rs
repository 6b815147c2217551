//! The solve → round → evaluate → sweep stages, as plain functions over a
//! prepared [`Context`], plus writers that persist each stage's artifacts.

use std::path::PathBuf;

use qctrl_core::evaluation::{offset_sweep, out_of_sample, EvaluationReport, SweepGrid};
use qctrl_core::instances::Instance;
use qctrl_core::objective::{self, penalty_sos1, ObjectiveBreakdown};
use qctrl_core::optimizers::{initial_control, solve_adam, solve_quasi_newton, SolveTrace, StochasticProblem};
use qctrl_core::rounding::{bound_rhs, cumulative_deviation, schedule_to_csv, sum_up_rounding};
use qctrl_core::seed::derive_seed;
use qctrl_core::uncertainty::{sample_scenarios, NoiseModel, ScenarioSet};
use qctrl_core::{ControlField, Error};
use serde::Serialize;

use crate::config::{RunConfig, SolverKind};
use crate::output::{trace_csv, Outputs};
use crate::CliError;

/// Floating-point slack on the rounding bound check.
const BOUND_SLACK: f64 = 1e-12;

/// A validated config with its built instance and noise model.
pub struct Context {
    pub config: RunConfig,
    pub config_hash: String,
    pub instance: Instance,
    pub noise: NoiseModel,
}

impl Context {
    pub fn new(config: RunConfig) -> Result<Self, CliError> {
        config.validate()?;
        let instance = config.instance_spec()?.build(&config.instance_base())?;
        let noise = config.noise.model(instance.system.controllers())?;
        let config_hash = config.hash();
        Ok(Self { config, config_hash, instance, noise })
    }

    pub fn seed(&self, module: &str, purpose: &str) -> u64 {
        derive_seed(self.config.seed, module, purpose)
    }

    pub fn outputs(&self, dir: Option<PathBuf>) -> Result<Outputs, CliError> {
        let dir = dir.or_else(|| self.config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        Outputs::new(dir, self.config_hash.clone(), self.config.seed)
    }

    /// The in-sample scenario set shared by every start.
    pub fn in_sample(&self) -> Result<ScenarioSet, CliError> {
        let sys = &self.instance.system;
        Ok(sample_scenarios(&self.noise, self.config.scenarios, sys.steps(), self.seed("solve", "in-sample"))?)
    }

    /// Noise-free `F̃` of a control on its own grid.
    pub fn nominal(&self, u: &ControlField) -> Result<f64, CliError> {
        let sys = self.instance.system.with_steps(u.steps())?;
        let set = ScenarioSet::deterministic(u.controllers(), u.steps());
        Ok(objective::evaluate(&sys, u, &set, &self.instance.target, &self.config.risk)?.tilde_f)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutcome {
    pub trace: SolveTrace,
    /// Objective of the returned control on the in-sample scenario set.
    pub breakdown: ObjectiveBreakdown,
    /// Index of the start that produced the kept control.
    pub best_start: usize,
    pub start_objectives: Vec<f64>,
}

pub fn solve(ctx: &Context) -> Result<SolveOutcome, CliError> {
    let cfg = &ctx.config;
    let sys = &ctx.instance.system;
    let set = ctx.in_sample()?;
    let mut best: Option<(usize, SolveTrace, ObjectiveBreakdown)> = None;
    let mut start_objectives = Vec::with_capacity(cfg.starts);
    for start in 0..cfg.starts {
        let u0 = initial_control(
            sys.controllers(),
            sys.steps(),
            cfg.init_jitter,
            ctx.seed("solve", &format!("initial-point-{start}")),
        );
        let trace = match cfg.solver {
            SolverKind::Qn => {
                let prob = StochasticProblem::fixed(sys, &ctx.instance.target, cfg.risk, set.clone());
                solve_quasi_newton(&prob, &u0, &cfg.quasi_newton)?
            }
            SolverKind::Adam => {
                let mut prob = StochasticProblem::fixed(sys, &ctx.instance.target, cfg.risk, set.clone());
                if cfg.adam.resample {
                    prob = StochasticProblem::sampled(
                        sys,
                        &ctx.instance.target,
                        cfg.risk,
                        ctx.noise.clone(),
                        cfg.scenarios,
                        set.seed,
                        true,
                    )?;
                }
                solve_adam(&mut prob, &u0, &cfg.adam)?
            }
        };
        let breakdown = objective::evaluate(sys, &trace.u_final, &set, &ctx.instance.target, &cfg.risk)?;
        start_objectives.push(breakdown.total);
        if best.as_ref().is_none_or(|(_, _, b)| breakdown.total < b.total) {
            best = Some((start, trace, breakdown));
        }
    }
    let (best_start, trace, breakdown) = best.expect("at least one start");
    Ok(SolveOutcome { trace, breakdown, best_start, start_objectives })
}

pub fn write_solve(out: &Outputs, s: &SolveOutcome) -> Result<(), CliError> {
    out.write_json("u_con.json", &s.trace.u_final)?;
    let c = out.comment();
    out.write_text("trace.csv", &trace_csv(&s.trace.objective_history, &s.trace.gradient_norm_history, &c))?;
    #[derive(Serialize)]
    struct Breakdown<'a> {
        #[serde(flatten)]
        breakdown: &'a ObjectiveBreakdown,
        iterations_used: usize,
        stop_reason: qctrl_core::optimizers::StopReason,
        line_search_warning: bool,
        best_start: usize,
        start_objectives: &'a [f64],
    }
    out.write_json(
        "breakdown.json",
        &Breakdown {
            breakdown: &s.breakdown,
            iterations_used: s.trace.iterations_used,
            stop_reason: s.trace.stop_reason,
            line_search_warning: s.trace.line_search_warning,
            best_start: s.best_start,
            start_objectives: &s.start_objectives,
        },
    )?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundOutcome {
    #[serde(skip)]
    pub u_bin: ControlField,
    pub c_sur: usize,
    pub fine_steps: usize,
    pub cumulative_deviation: f64,
    pub bound_rhs: f64,
    /// `penalty_sos1(u_con)`, the `f_l` in the bound.
    pub f_l: f64,
    pub pass: bool,
    /// Noise-free `F̃` of the relaxed and rounded controls.
    pub nominal_con: f64,
    pub nominal_bin: f64,
}

pub fn round(ctx: &Context, u_con: &ControlField) -> Result<RoundOutcome, CliError> {
    let sys = &ctx.instance.system;
    if u_con.controllers() != sys.controllers() || u_con.steps() != sys.steps() {
        return Err(Error::Dimension(format!(
            "control is {}x{}, instance expects {}x{}",
            u_con.controllers(),
            u_con.steps(),
            sys.controllers(),
            sys.steps()
        ))
        .into());
    }
    let rc = &ctx.config.rounding;
    let dt = sys.dt();
    let u_bin = sum_up_rounding(u_con, rc, dt)?;
    let deviation = cumulative_deviation(u_con, &u_bin, rc, dt)?;
    let f_l = penalty_sos1(u_con.values());
    let bound = bound_rhs(sys.controllers(), rc, dt, sys.t_f(), f_l);
    Ok(RoundOutcome {
        c_sur: rc.c_sur,
        fine_steps: u_bin.steps(),
        cumulative_deviation: deviation,
        bound_rhs: bound,
        f_l,
        pass: deviation <= bound + BOUND_SLACK,
        nominal_con: ctx.nominal(u_con)?,
        nominal_bin: ctx.nominal(&u_bin)?,
        u_bin,
    })
}

pub fn write_round(out: &Outputs, r: &RoundOutcome) -> Result<(), CliError> {
    out.write_text("u_bin.csv", &schedule_to_csv(&r.u_bin, Some(&out.comment())))?;
    out.write_json("u_bin.json", &r.u_bin)?;
    out.write_json("deviation.json", r)?;
    Ok(())
}

pub fn evaluate(ctx: &Context, u: &ControlField) -> Result<EvaluationReport, CliError> {
    let e = &ctx.config.evaluation;
    Ok(out_of_sample(
        u,
        &ctx.instance.system,
        &ctx.instance.target,
        &ctx.noise,
        e.groups,
        e.per_group,
        &ctx.config.risk,
        ctx.instance.dp_threshold,
        ctx.seed("evaluate", "out-of-sample"),
    )?)
}

/// Writes `<stem>.json` (summary, costs omitted) and `<stem>.csv` (per-scenario costs).
pub fn write_evaluation(out: &Outputs, stem: &str, r: &EvaluationReport) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Summary<'a> {
        groups: usize,
        per_group: usize,
        seed: u64,
        alpha: f64,
        eta: f64,
        mean: f64,
        cvar: f64,
        total: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        dp: Option<f64>,
        group_means: &'a [f64],
        group_sds: &'a [f64],
    }
    out.write_json(
        &format!("{stem}.json"),
        &Summary {
            groups: r.groups,
            per_group: r.per_group,
            seed: r.seed,
            alpha: r.alpha,
            eta: r.eta,
            mean: r.mean,
            cvar: r.cvar,
            total: r.total,
            dp: r.dp,
            group_means: &r.group_means,
            group_sds: &r.group_sds,
        },
    )?;
    out.write_text(&format!("{stem}.csv"), &r.to_csv(Some(&out.comment())))?;
    Ok(())
}

pub fn sweep(ctx: &Context, u: &ControlField) -> Result<SweepGrid, CliError> {
    let s = &ctx.config.evaluation.sweep;
    Ok(offset_sweep(
        u,
        &ctx.instance.system,
        &ctx.instance.target,
        &ctx.noise,
        s.controllers,
        s.range,
        s.grid_points,
        s.per_cell,
        ctx.seed("sweep", "offset-grid"),
    )?)
}

pub fn write_sweep(out: &Outputs, g: &SweepGrid) -> Result<(), CliError> {
    out.write_text("sweep.csv", &g.to_csv(Some(&out.comment())))?;
    out.write_json("sweep.json", g)?;
    Ok(())
}

/// Artifacts of one full run.
pub struct RunOutcome {
    pub solve: SolveOutcome,
    pub round: RoundOutcome,
    pub eval_con: EvaluationReport,
    pub eval_bin: EvaluationReport,
}

/// Solve, round, and evaluate both controls, writing every artifact to `out`.
pub fn run(ctx: &Context, out: &Outputs) -> Result<RunOutcome, CliError> {
    let solve = solve(ctx)?;
    write_solve(out, &solve)?;
    let round = round(ctx, &solve.trace.u_final)?;
    write_round(out, &round)?;
    let eval_con = evaluate(ctx, &solve.trace.u_final)?;
    write_evaluation(out, "evaluation_con", &eval_con)?;
    let eval_bin = evaluate(ctx, &round.u_bin)?;
    write_evaluation(out, "evaluation_bin", &eval_bin)?;
    Ok(RunOutcome { solve, round, eval_con, eval_bin })
}

pub fn write_instance(out: &Outputs, ctx: &Context) -> Result<(), CliError> {
    out.write_json("instance.json", &ctx.instance)?;
    Ok(())
}
