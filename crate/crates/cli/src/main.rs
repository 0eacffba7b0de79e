//! `neusim` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use neusim::config::Config;
use neusim::report::{run_sweep, summarize, write_artifacts, SweepSpec};
use neusim::workload::{compile_reference, load_workload, TaskGraph, Workload};
use neusim::{engine_paths, simulate, Error};

/// Exit status for command-line usage errors.
const USAGE_EXIT: u8 = 64;

#[derive(Parser)]
#[command(
    name = "neusim",
    version,
    about = "Event-driven NPU performance and power simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one workload and write the configured artifacts.
    Run(RunArgs),
    /// Run every workload at every point of a sweep file.
    Sweep(SweepArgs),
    /// Compile an operator list into a task graph.
    Compile(CompileArgs),
    /// Check a task graph and report the first violation.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file; repeat to layer files, later ones win.
    #[arg(long = "config", short = 'c', required = true)]
    configs: Vec<PathBuf>,
    /// `dotted.key=value` applied after the files; repeatable.
    #[arg(long = "override", short = 'o', value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Task graph or operator list (operator lists are compiled first).
    #[arg(long, short = 'w')]
    workload: PathBuf,
    /// Same as `sim.power_enabled=true`.
    #[arg(long)]
    power: bool,
    /// Same as `sim.pti_cycles=N`.
    #[arg(long, value_name = "N")]
    pti: Option<u64>,
    /// Same as `sim.trace_path=PATH`.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Same as `sim.report_path=PATH`.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// Same as `sim.power_trace_path=PATH`.
    #[arg(long, value_name = "PATH")]
    power_trace: Option<PathBuf>,
    /// Same as `sim.run_limit=CYCLES`.
    #[arg(long, value_name = "CYCLES")]
    run_limit: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep description (YAML).
    spec: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, short = 'j', default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct CompileArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Operator list to compile.
    #[arg(long, short = 'w')]
    workload: PathBuf,
    /// Where to write the task graph; stdout when absent.
    #[arg(long = "output", value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Task graph to check.
    #[arg(long, short = 'w')]
    workload: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NEUSIM_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let mut lines = text.lines();
            let first = lines.next().unwrap_or("invalid arguments");
            eprintln!("error[E_USAGE]: {}", first.trim_start_matches("error: "));
            for l in lines {
                eprintln!("{l}");
            }
            return ExitCode::from(USAGE_EXIT);
        }
    };
    let res = match cli.cmd {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Compile(a) => cmd_compile(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // One line per failure keeps the code easy to grep.
            let msg = e.to_string().replace('\n', "; ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// YAML single-quoted scalar, so paths always parse as strings.
fn quoted(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', "''"))
}

fn load_config(args: &ConfigArgs, extra: Vec<String>) -> Result<Config, Error> {
    let mut overrides = args.overrides.clone();
    overrides.extend(extra);
    log::debug!("overrides: {overrides:?}");
    Ok(Config::load_with_overrides(&args.configs, &overrides)?)
}

fn graph_for(path: &Path, config: &Config) -> Result<TaskGraph, Error> {
    Ok(match load_workload(path)? {
        Workload::Graph(g) => g,
        Workload::Ops(ops) => compile_reference(&ops, &config.platform)?,
    })
}

fn cmd_run(a: RunArgs) -> Result<(), Error> {
    let mut flags = Vec::new();
    if a.power {
        flags.push("sim.power_enabled=true".to_string());
    }
    if let Some(n) = a.pti {
        flags.push(format!("sim.pti_cycles={n}"));
    }
    for (key, path) in [
        ("trace_path", &a.trace),
        ("report_path", &a.report),
        ("power_trace_path", &a.power_trace),
    ] {
        if let Some(p) = path {
            flags.push(format!("sim.{key}={}", quoted(p)));
        }
    }
    if let Some(n) = a.run_limit {
        flags.push(format!("sim.run_limit={n}"));
    }
    let config = load_config(&a.config, flags)?;
    let graph = graph_for(&a.workload, &config)?;
    let run = simulate(&config, &graph)?;
    let engines = engine_paths(&config.platform);
    for p in write_artifacts(&run, &engines, &config.sim)? {
        log::info!("wrote {}", p.display());
    }
    let summary = summarize(&run, &engines);
    for r in &summary.rows {
        println!("{:<28} {:>16} {}", r.metric, fmt_value(r.value), r.unit);
    }
    Ok(())
}

fn fmt_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.6}")
    }
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Error> {
    let spec = SweepSpec::load(&a.spec)?;
    let table = run_sweep(&spec, a.jobs)?;
    let failed = table.rows.iter().filter(|r| r.result.is_err()).count();
    match &spec.output_dir {
        Some(dir) => println!("wrote {}", dir.join("sweep.csv").display()),
        None => print!("{}", table.to_csv()),
    }
    if failed > 0 {
        log::warn!("{failed} of {} sweep rows failed", table.rows.len());
    }
    Ok(())
}

fn cmd_compile(a: CompileArgs) -> Result<(), Error> {
    let config = load_config(&a.config, Vec::new())?;
    let ops = match load_workload(&a.workload)? {
        Workload::Ops(ops) => ops,
        Workload::Graph(_) => {
            return Err(neusim::workload::WorkloadError::Invalid {
                owner: a.workload.display().to_string(),
                reason: "already a task graph; compile expects an operator list".into(),
            }
            .into())
        }
    };
    let graph = compile_reference(&ops, &config.platform)?;
    let text = graph.to_json() + "\n";
    match &a.output {
        Some(p) => {
            std::fs::write(p, text).map_err(|source| Error::Io {
                path: p.clone(),
                source,
            })?;
            eprintln!(
                "compiled {} operators into {} tasks: {}",
                ops.operators.len(),
                graph.tasks.len(),
                p.display()
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<(), Error> {
    match load_workload(&a.workload)? {
        Workload::Graph(g) => println!(
            "ok: {} tasks, {} barriers, {} tensors",
            g.tasks.len(),
            g.barriers.len(),
            g.tensors.len()
        ),
        Workload::Ops(ops) => println!(
            "ok: operator list with {} operators (compile it to check scheduling)",
            ops.operators.len()
        ),
    }
    Ok(())
}
