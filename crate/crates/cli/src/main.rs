use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use twtl_fleet::allocation::AllocationError;
use twtl_fleet::automata::{compile_dfa_with, CompileOptions};
use twtl_fleet::harness::{self, HarnessError, RunConfig};
use twtl_fleet::orchestrator::{BoundMode, OrchestratorError};
use twtl_fleet::scenario::Scenario;
use twtl_fleet::twtl::{check_satisfaction, parse_with_alphabet, time_bound, Symbol};

const EXIT_CONFIG: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser)]
#[command(name = "twtl-fleet", version, about = "Allocate TWTL tasks to a robot fleet with uncertain dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a formula into a DFA and print it as JSON.
    Compile {
        #[arg(long)]
        formula: String,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Minimise the automaton before printing.
        #[arg(long)]
        minimize: bool,
    },
    /// Check a finite word against a formula with both the DFA and the direct semantics.
    Check {
        #[arg(long)]
        formula: String,
        /// JSON array of steps, each an array of the propositions that hold, e.g. `[["P"],["P"],[]]`.
        #[arg(long)]
        word: String,
    },
    /// Run one bound mode over several iterations and write per-episode metrics.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ModeArg::Adaptive)]
        bound_mode: ModeArg,
        /// Also write per-episode bound trajectories.
        #[arg(long)]
        bounds: bool,
    },
    /// Compare adaptive and static-only bounds on the same seeds.
    Case1 {
        #[command(flatten)]
        common: Common,
    },
    /// Measure allocation solve time against robot and task counts.
    Case2 {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ModeArg::Adaptive)]
        bound_mode: ModeArg,
        /// Copies of the scenario's robots for the robot sweep.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
        robot_multipliers: Vec<usize>,
        /// TWTL task counts for the task sweep.
        #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10")]
        task_counts: Vec<usize>,
        /// Robot count used during the task sweep.
        #[arg(long, default_value_t = 20)]
        sweep_robots: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario JSON; the shipped default when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Use the scenario's own episode and iteration counts instead of the desk-scale ones.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Adaptive,
    Static,
}

impl From<ModeArg> for BoundMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Adaptive => BoundMode::Adaptive,
            ModeArg::Static => BoundMode::StaticOnly,
        }
    }
}

impl Common {
    fn load(&self) -> Result<(Scenario, RunConfig)> {
        let scn = match &self.scenario {
            Some(path) => Scenario::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => Scenario::default_scenario(),
        };
        let mut cfg = if self.paper_scale {
            RunConfig::from_scenario(&scn)
        } else {
            RunConfig::desk(scn.params.seed)
        };
        if let Some(e) = self.episodes {
            cfg.episodes = e;
        }
        if let Some(i) = self.iterations {
            cfg.iterations = i;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if cfg.episodes == 0 || cfg.iterations == 0 {
            bail!("episodes and iterations must be positive");
        }
        Ok((scn, cfg))
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating {}", self.out_dir.display()))?;
        Ok(&self.out_dir)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_infeasible(&e) {
                ExitCode::from(EXIT_INFEASIBLE)
            } else {
                ExitCode::from(EXIT_CONFIG)
            }
        }
    }
}

fn is_infeasible(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        cause.downcast_ref::<HarnessError>().is_some_and(HarnessError::is_infeasible)
            || cause.downcast_ref::<OrchestratorError>().is_some_and(OrchestratorError::is_infeasible)
            || matches!(
                cause.downcast_ref::<AllocationError>(),
                Some(AllocationError::Infeasible | AllocationError::StaticInfeasible)
            )
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compile { formula, out, minimize } => {
            let (f, ap) = parse_with_alphabet(&formula).context("parsing formula")?;
            let dfa = compile_dfa_with(
                &f,
                &CompileOptions {
                    minimize,
                    ..CompileOptions::default()
                },
            )?;
            let json = serde_json::to_string_pretty(&dfa.to_json(&ap))?;
            match out {
                Some(path) => std::fs::write(&path, json + "\n")
                    .with_context(|| format!("writing {}", path.display()))?,
                None => println!("{json}"),
            }
        }
        Command::Check { formula, word } => {
            let (f, mut ap) = parse_with_alphabet(&formula).context("parsing formula")?;
            let steps: Vec<Vec<String>> = serde_json::from_str(&word).context("parsing word")?;
            let symbols: Vec<Symbol> = steps
                .iter()
                .map(|step| {
                    step.iter()
                        .fold(Symbol::default(), |sym, name| sym.with(ap.insert(name.clone())))
                })
                .collect();
            let dfa = compile_dfa_with(&f, &CompileOptions::default())?;
            let report = serde_json::json!({
                "formula": f.display(&ap).to_string(),
                "time_bound": time_bound(&f),
                "length": symbols.len(),
                "satisfied": check_satisfaction(&f, &symbols),
                "dfa_accepts": dfa.accepts(&symbols),
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Run { common, bound_mode, bounds } => {
            let (scn, mut cfg) = common.load()?;
            cfg.mode = bound_mode.into();
            cfg.record_bounds = bounds;
            let logs = harness::run_iterations(&scn, &cfg)?;
            harness::write_run(common.out_dir()?, &logs)?;
            let summaries: Vec<_> = logs.iter().map(|l| l.summary()).collect();
            println!("{}", serde_json::to_string_pretty(&summaries)?);
        }
        Command::Case1 { common } => {
            let (scn, cfg) = common.load()?;
            let report = harness::run_case1(&scn, &cfg)?;
            harness::write_case1(common.out_dir()?, &report)?;
            for m in [&report.adaptive, &report.static_only] {
                let rates: Vec<String> = m.mean_rates().iter().map(|r| format!("{r:.3}")).collect();
                println!(
                    "{:?}: rates [{}] reward {:.1} solve {:.4}s",
                    m.mode,
                    rates.join(", "),
                    m.mean_total_reward(),
                    m.mean_solve_seconds()
                );
            }
        }
        Command::Case2 {
            common,
            bound_mode,
            robot_multipliers,
            task_counts,
            sweep_robots,
        } => {
            let (scn, mut cfg) = common.load()?;
            cfg.mode = bound_mode.into();
            let report = harness::run_case2(&scn, &cfg, &robot_multipliers, &task_counts, sweep_robots)?;
            harness::write_case2(common.out_dir()?, &report)?;
            for (sweep, rows) in [("robots", &report.by_robots), ("tasks", &report.by_tasks)] {
                for r in rows {
                    println!(
                        "{sweep}: {} robots x {} columns: mean {:.4}s max {:.4}s",
                        r.robots, r.tasks, r.mean_solve_seconds, r.max_solve_seconds
                    );
                }
            }
        }
    }
    Ok(())
}
