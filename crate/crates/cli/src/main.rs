use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qctrl_cli::config::SolverKind;
use qctrl_cli::output::load_control;
use qctrl_cli::pipeline::{self, Context};
use qctrl_cli::{verify, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "qctrl", version, about = "Risk-averse binary quantum control pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the relaxed stochastic problem.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        solver: Option<SolverKind>,
    },
    /// Round a relaxed control to a binary schedule.
    Round {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        control: PathBuf,
        #[arg(long)]
        csur: Option<usize>,
    },
    /// Score a control on fresh out-of-sample scenarios.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        control: PathBuf,
        /// File stem of the report.
        #[arg(long, default_value = "evaluation")]
        name: String,
    },
    /// Average cost over a grid of fixed offsets for two controllers.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        control: PathBuf,
    },
    /// Solve, round and evaluate in one go.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        solver: Option<SolverKind>,
        #[arg(long)]
        csur: Option<usize>,
    },
    /// Run the invariant checks and print a table.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    #[command(subcommand)]
    Instance(InstanceCommand),
}

#[derive(Subcommand)]
enum InstanceCommand {
    /// Build the configured instance and write it as JSON.
    Build {
        #[command(flatten)]
        common: Common,
    },
}

fn context(common: &Common, solver: Option<SolverKind>, csur: Option<usize>) -> Result<Context, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    if let Some(s) = solver {
        cfg.solver = s;
    }
    if let Some(c) = csur {
        cfg.rounding.c_sur = c;
    }
    Context::new(cfg)
}

fn init_threads() -> Result<(), CliError> {
    let threads = match std::env::var("QCTRL_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| CliError::Config(format!("QCTRL_THREADS: not a count: {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("QCTRL_THREADS: {e}")))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Solve { common, solver } => {
            let ctx = context(&common, solver, None)?;
            let out = ctx.outputs(None)?;
            let s = pipeline::solve(&ctx)?;
            pipeline::write_solve(&out, &s)?;
            println!(
                "objective {:.6} after {} iterations ({:?}); wrote {}",
                s.breakdown.total,
                s.trace.iterations_used,
                s.trace.stop_reason,
                out.dir.display()
            );
        }
        Command::Round { common, control, csur } => {
            let ctx = context(&common, None, csur)?;
            let out = ctx.outputs(None)?;
            let r = pipeline::round(&ctx, &load_control(&control)?)?;
            pipeline::write_round(&out, &r)?;
            println!(
                "deviation {:.6e} vs bound {:.6e} ({}); wrote {}",
                r.cumulative_deviation,
                r.bound_rhs,
                if r.pass { "pass" } else { "FAIL" },
                out.dir.display()
            );
        }
        Command::Evaluate { common, control, name } => {
            let ctx = context(&common, None, None)?;
            let out = ctx.outputs(None)?;
            let r = pipeline::evaluate(&ctx, &load_control(&control)?)?;
            pipeline::write_evaluation(&out, &name, &r)?;
            println!("mean {:.6} cvar {:.6} total {:.6}; wrote {}", r.mean, r.cvar, r.total, out.dir.display());
        }
        Command::Sweep { common, control } => {
            let ctx = context(&common, None, None)?;
            let out = ctx.outputs(None)?;
            let g = pipeline::sweep(&ctx, &load_control(&control)?)?;
            pipeline::write_sweep(&out, &g)?;
            println!("{} cells; wrote {}", g.cells.len() * g.cells.len(), out.dir.display());
        }
        Command::Run { common, solver, csur } => {
            let ctx = context(&common, solver, csur)?;
            let out = ctx.outputs(None)?;
            let r = pipeline::run(&ctx, &out)?;
            println!(
                "in-sample {:.6}; out-of-sample total relaxed {:.6}, binary {:.6}; wrote {}",
                r.solve.breakdown.total,
                r.eval_con.total,
                r.eval_bin.total,
                out.dir.display()
            );
        }
        Command::Verify { seed } => {
            let results = verify::run_all(seed);
            print!("{}", verify::table(&results));
            let failed = results.iter().filter(|r| !r.pass).count();
            if failed > 0 {
                return Err(CliError::Verify(failed));
            }
        }
        Command::Instance(InstanceCommand::Build { common }) => {
            let ctx = context(&common, None, None)?;
            let out = ctx.outputs(None)?;
            pipeline::write_instance(&out, &ctx)?;
            println!("wrote {}", out.path("instance.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
