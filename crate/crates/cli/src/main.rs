//! Command-line runner for lane-change scenarios: validates configuration
//! files, executes deterministic closed-loop runs, and writes bit-stable
//! artifacts (CSV time series, safety report, optional QP failure dumps).
//!
//! Exit codes: 0 for a clean run, 1 for any configuration error (unreadable
//! file, parse or validation failure), 2 when a run had QP failures or
//! stopped early.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ocbf_core::scenario::{canonical_toml, parse_scenario, DisturbancePolicy, ScenarioConfig};
use ocbf_core::simulator::{audit, run, write_csv, RunOptions, SafetyReport, SimLog};

const EXIT_CONFIG: u8 = 1;
const EXIT_QP: u8 = 2;

#[derive(Parser)]
#[command(name = "ocbf", version, about = "Lane-change controller scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its time series and safety report.
    Run(RunArgs),
    /// Parse and validate a scenario file; optionally echo its canonical form.
    Validate {
        /// Scenario TOML file.
        scenario: PathBuf,
        /// Print the canonical serialization to stdout.
        #[arg(long)]
        echo: bool,
    },
    /// Run several scenarios in parallel, one worker thread per scenario.
    Batch {
        /// Scenario TOML files (output names come from each scenario's `name`).
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[command(flatten)]
        opts: CommonRunArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML file.
    scenario: PathBuf,
    #[command(flatten)]
    opts: CommonRunArgs,
}

#[derive(Args)]
struct CommonRunArgs {
    /// Output directory for the emitted files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the scenario's disturbance seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario's disturbance policy.
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Write QP problem dumps of failed solves to <name>.dumps.txt.
    #[arg(long)]
    emit_qp_dumps: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Zero,
    Random,
    WorstCorner,
}

impl From<PolicyArg> for DisturbancePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Zero => DisturbancePolicy::Zero,
            PolicyArg::Random => DisturbancePolicy::Random,
            PolicyArg::WorstCorner => DisturbancePolicy::WorstCorner,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => run_one(&args.scenario, &args.opts),
        Command::Validate { scenario, echo } => validate(&scenario, echo),
        Command::Batch { scenarios, opts } => batch(&scenarios, &opts),
    };
    ExitCode::from(code)
}

fn load(path: &Path) -> Result<ScenarioConfig, String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_scenario(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn validate(path: &Path, echo: bool) -> u8 {
    match load(path) {
        Ok(cfg) => {
            if echo {
                match canonical_toml(&cfg) {
                    Ok(text) => print!("{text}"),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return EXIT_CONFIG;
                    }
                }
            } else {
                println!("ok: {} ({} vehicles)", cfg.name, cfg.vehicles.len());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn run_one(path: &Path, opts: &CommonRunArgs) -> u8 {
    match execute(path, opts) {
        Ok(outcome) => {
            println!("{outcome}");
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn batch(paths: &[PathBuf], opts: &CommonRunArgs) -> u8 {
    // One worker per scenario; results are reported in input order so the
    // combined output stays deterministic regardless of completion order.
    let results: Vec<Result<RunOutcome, String>> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            paths.iter().map(|path| scope.spawn(move || execute(path, opts))).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut worst = 0u8;
    for result in results {
        match result {
            Ok(outcome) => {
                println!("{outcome}");
                worst = worst.max(outcome.code);
            }
            Err(e) => {
                eprintln!("error: {e}");
                worst = worst.max(EXIT_CONFIG);
            }
        }
    }
    worst
}

struct RunOutcome {
    name: String,
    steps: usize,
    qp_failures: usize,
    abort: Option<String>,
    out_dir: PathBuf,
    code: u8,
}

impl std::fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} steps, {} qp failures, wrote {}",
            self.name,
            self.steps,
            self.qp_failures,
            self.out_dir.display()
        )?;
        if let Some(abort) = &self.abort {
            write!(f, " (aborted: {abort})")?;
        }
        Ok(())
    }
}

fn execute(path: &Path, opts: &CommonRunArgs) -> Result<RunOutcome, String> {
    let cfg = load(path)?;
    let run_opts = RunOptions {
        seed_override: opts.seed,
        policy_override: opts.policy.map(Into::into),
        ablate_robustness: false,
    };
    let log = run(&cfg, &run_opts).map_err(|e| format!("{}: {e}", path.display()))?;
    let report = audit(&log);

    std::fs::create_dir_all(&opts.out)
        .map_err(|e| format!("{}: {e}", opts.out.display()))?;
    let write = |file: PathBuf, contents: String| -> Result<(), String> {
        std::fs::write(&file, contents).map_err(|e| format!("{}: {e}", file.display()))
    };
    write(opts.out.join(format!("{}.csv", cfg.name)), write_csv(&log))?;
    write(opts.out.join(format!("{}.report.txt", cfg.name)), render_report(&log, &report))?;
    if opts.emit_qp_dumps && !log.failures.is_empty() {
        let mut dumps = String::new();
        for failure in &log.failures {
            dumps.push_str(&format!(
                "== vehicle {} at t = {} ==\n{}\n",
                log.ids[failure.vehicle], failure.time, failure.dump
            ));
        }
        write(opts.out.join(format!("{}.dumps.txt", cfg.name)), dumps)?;
    }

    let code = if log.abort.is_some() || report.qp_failures > 0 { EXIT_QP } else { 0 };
    Ok(RunOutcome {
        name: cfg.name,
        steps: log.records.len(),
        qp_failures: report.qp_failures,
        abort: log.abort,
        out_dir: opts.out.clone(),
        code,
    })
}

/// Plain-text safety report. Floats use the shortest round-trip rendering, so
/// the file is byte-stable across identical runs.
fn render_report(log: &SimLog, report: &SafetyReport) -> String {
    use std::fmt::Write as _;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "none".into());
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", log.scenario);
    let _ = writeln!(out, "dt: {}", log.dt);
    let _ = writeln!(out, "steps: {}", log.records.len());
    let _ = writeln!(out, "qp_failures: {}", report.qp_failures);
    let _ = writeln!(out, "trigger_time: {}", opt(report.trigger_time));
    let _ = writeln!(out, "min_h_xp: {}", opt(report.min_h_xp));
    let _ = writeln!(out, "min_h_m: {}", opt(report.min_h_m));
    let _ = writeln!(out, "min_h_vmin: {}", opt(report.min_h_vmin));
    let _ = writeln!(out, "min_h_vmax: {}", opt(report.min_h_vmax));
    if let Some(abort) = &log.abort {
        let _ = writeln!(out, "abort: {abort}");
    }
    for v in &report.vehicles {
        let _ = writeln!(out, "vehicle {}:", v.id);
        let _ = writeln!(out, "  terminal_position_error: {}", opt(v.terminal_position_error));
        let _ = writeln!(out, "  terminal_speed_error: {}", opt(v.terminal_speed_error));
        let _ = writeln!(out, "  energy: {}", v.energy);
        let _ = writeln!(out, "  qp_failures: {}", v.qp_failures);
    }
    out
}
