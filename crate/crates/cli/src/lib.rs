//! The `masv` command line: check, compile, run and oracle subcommands.
//!
//! Exit codes: 0 success, 1 invalid spec, 2 I/O failure, 3 a state bound
//! was exceeded, 4 a run in which some step rejected every decision it
//! tried.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::info;

use masv_core::oracle::{oracle_document, ORACLE_STATE_CAP};
use masv_core::prism::encode_prism;
use masv_core::runtime::{
    run_loop, Dispatcher, Limits, NdjsonDispatcher, NoFeed, Node, RunError, SimulatedAgents,
    Trace, TraceSummary,
};
use masv_core::sensor::{ConversionTable, Scenario, ScenarioFeed, StreamFeed};
use masv_core::ts::{generate_ts, Bounds, TsDocument};
use masv_core::{load_spec, Engine, SpecError, ValidatedSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_BOUND: i32 = 3;
pub const EXIT_UNSAFE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "masv", version, about = "Verify and run multi-agent decision specifications")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, stratify and check a spec.
    Check { spec: PathBuf },
    /// Generate the transition system and its Prism encoding.
    Compile(CompileArgs),
    /// Execute the spec on the runtime decision node.
    Run(RunArgs),
    /// Generate the transition system with the naive reference evaluator.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CompileArgs {
    pub spec: PathBuf,
    /// Directory receiving ts.json, model.prism and props.pctl.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub max_states: usize,
    #[arg(long)]
    pub max_depth: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    pub spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum number of steps.
    #[arg(long, default_value_t = 10_000)]
    pub steps: u64,
    /// Stop after this many consecutive idle steps; 0 disables.
    #[arg(long, default_value_t = 3)]
    pub quiesce: usize,
    /// Wall-clock limit in milliseconds.
    #[arg(long)]
    pub wall_ms: Option<u64>,
    /// NDJSON scenario file, or `-` to stream updates from standard input.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// TOML conversion table for raw sensor records.
    #[arg(long)]
    pub conversions: Option<PathBuf>,
    /// Trace output, one step report per line.
    #[arg(long, default_value = "trace.ndjson")]
    pub trace: PathBuf,
    /// Action commands output, `-` for standard output. Without it actions
    /// go to simulated agents that only acknowledge them.
    #[arg(long)]
    pub actions: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    pub spec: PathBuf,
    /// Directory receiving ts.oracle.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Spec(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Bound(String),
    #[error("{0}")]
    Sink(#[from] RunError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Input { .. } | CliError::Sink(_) => EXIT_IO,
            CliError::Spec(_) | CliError::Invalid(_) => EXIT_INVALID,
            CliError::Bound(_) => EXIT_BOUND,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_spec(path: &Path) -> Result<ValidatedSpec, CliError> {
    let src = fs::read_to_string(path).map_err(io_err(path))?;
    load_spec(&src).map_err(|e| CliError::Spec(render_spec_error(path, &e)))
}

/// One `path:line:col: message` line per diagnostic.
pub fn render_spec_error(path: &Path, e: &SpecError) -> String {
    let path = path.display();
    match e {
        SpecError::Parse(ds) | SpecError::Invalid(ds) => ds
            .iter()
            .map(|d| format!("{path}:{d}"))
            .collect::<Vec<_>>()
            .join("\n"),
        SpecError::Stratification(c) => format!("{path}: {c}"),
    }
}

fn engine(spec: ValidatedSpec) -> Result<Engine, CliError> {
    Engine::new(spec).map_err(|e| CliError::Invalid(e.to_string()))
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckReport {
    pub agents: usize,
    pub actions: usize,
    pub rules: usize,
    pub strata: usize,
}

pub fn cmd_check(path: &Path) -> Result<CheckReport, CliError> {
    let spec = read_spec(path)?;
    Ok(CheckReport {
        agents: spec.ast.agents.len(),
        actions: spec.ast.actions.len(),
        rules: spec.ast.decision_rules.len(),
        strata: spec.strata.max_stratum() + 1,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompileReport {
    pub states: usize,
    pub transitions: usize,
    pub files: Vec<PathBuf>,
}

pub fn cmd_compile(args: &CompileArgs) -> Result<CompileReport, CliError> {
    let engine = engine(read_spec(&args.spec)?)?;
    let bounds = Bounds {
        max_states: args.max_states,
        max_depth: args.max_depth,
    };
    let ts = generate_ts(&engine, bounds).map_err(|e| CliError::Bound(e.to_string()))?;
    info!("generated {} states", ts.states.len());
    let doc = TsDocument::new(&engine, &ts);
    let prism = encode_prism(&engine, &ts).map_err(|e| CliError::Invalid(e.to_string()))?;
    prepare_dir(&args.out)?;
    let files = vec![
        write_file(&args.out, "ts.json", &doc.to_json())?,
        write_file(&args.out, "model.prism", &prism.model_text)?,
        write_file(&args.out, "props.pctl", &prism.properties_text)?,
    ];
    Ok(CompileReport {
        states: ts.states.len(),
        transitions: ts.transitions.len(),
        files,
    })
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub trace: Trace,
    pub summary: TraceSummary,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.summary.unsafe_only_steps > 0 {
            EXIT_UNSAFE
        } else {
            EXIT_OK
        }
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<RunReport, CliError> {
    let engine = Arc::new(engine(read_spec(&args.spec)?)?);
    let table = match &args.conversions {
        Some(p) => ConversionTable::load(p).map_err(|e| CliError::Input {
            path: p.clone(),
            message: e.to_string(),
        })?,
        None => ConversionTable::default(),
    };
    let mut node = Node::new(engine, args.seed).map_err(|e| CliError::Invalid(e.to_string()))?;
    let limits = Limits {
        max_steps: args.steps,
        wall: args.wall_ms.map(Duration::from_millis),
        quiesce: args.quiesce,
    };

    let trace_file = File::create(&args.trace).map_err(io_err(&args.trace))?;
    let mut trace_out = BufWriter::new(trace_file);
    let mut dispatcher: Box<dyn Dispatcher> = match &args.actions {
        None => Box::new(SimulatedAgents::default()),
        Some(p) if p.as_os_str() == "-" => Box::new(NdjsonDispatcher::new(io::stdout())),
        Some(p) => Box::new(NdjsonDispatcher::new(BufWriter::new(
            File::create(p).map_err(io_err(p))?,
        ))),
    };

    let result = match &args.scenario {
        None => run_loop(&mut node, &limits, &mut NoFeed, &mut trace_out, dispatcher.as_mut()),
        Some(p) if p.as_os_str() == "-" => {
            let mut feed = StreamFeed::spawn(BufReader::new(io::stdin()), table, node.queue());
            run_loop(&mut node, &limits, &mut feed, &mut trace_out, dispatcher.as_mut())
        }
        Some(p) => {
            let scenario = Scenario::load(p).map_err(|e| CliError::Input {
                path: p.clone(),
                message: e.to_string(),
            })?;
            let mut feed = ScenarioFeed::new(scenario, table);
            let r = run_loop(&mut node, &limits, &mut feed, &mut trace_out, dispatcher.as_mut());
            for d in feed.log.iter().filter(|d| d.error.is_some()) {
                log::warn!("scenario entry {} not applied: {}", d.entry, d.error.as_deref().unwrap_or(""));
            }
            r
        }
    };
    let trace = result?;
    drop(dispatcher);
    let summary = trace.summary();
    Ok(RunReport { trace, summary })
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<TsDocument, CliError> {
    let spec = read_spec(&args.spec)?;
    let doc = oracle_document(&spec, ORACLE_STATE_CAP).map_err(|e| CliError::Bound(e.to_string()))?;
    prepare_dir(&args.out)?;
    write_file(&args.out, "ts.oracle.json", &doc.to_json())?;
    Ok(doc)
}

fn print_run(out: &mut dyn Write, report: &RunReport) -> io::Result<()> {
    let s = &report.summary;
    writeln!(out, "steps {}", s.steps)?;
    writeln!(out, "commits {}", s.commits)?;
    writeln!(out, "rejections {}", s.rejections)?;
    writeln!(out, "violations {}", s.violations)?;
    for r in &report.trace.reports {
        for a in r.attempts.iter().filter(|a| !a.verdict.safe) {
            for v in &a.verdict.violations {
                let binding: Vec<String> = v.binding.iter().map(|(k, c)| format!("{k}={c}")).collect();
                writeln!(
                    out,
                    "step {} rejected {} ({}): constraint {} violated by {} with {{{}}}",
                    r.step,
                    a.decision.action,
                    a.decision.agent,
                    v.constraint,
                    v.agent,
                    binding.join(", ")
                )?;
            }
        }
    }
    Ok(())
}

/// Runs a parsed command, printing summaries to stdout and diagnostics to
/// stderr, and returns the exit code.
pub fn execute(cli: Cli) -> i32 {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Check { spec } => cmd_check(&spec).map(|r| {
            let _ = writeln!(
                out,
                "ok: {} agents, {} actions, {} rules, {} strata",
                r.agents, r.actions, r.rules, r.strata
            );
            EXIT_OK
        }),
        Command::Compile(args) => cmd_compile(&args).map(|r| {
            let _ = writeln!(out, "states {}\ntransitions {}", r.states, r.transitions);
            EXIT_OK
        }),
        Command::Run(args) => cmd_run(&args).map(|r| {
            let _ = print_run(&mut out, &r);
            r.exit_code()
        }),
        Command::Oracle(args) => cmd_oracle(&args).map(|d| {
            let _ = writeln!(out, "states {}\ntransitions {}", d.states.len(), d.transitions.len());
            EXIT_OK
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("MASV_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}
