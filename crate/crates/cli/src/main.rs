use std::fs;
use std::io::BufReader;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use dual_aeb::ablation::{self, rows_to_csv, AblationRow};
use dual_aeb::dataset::{self, templates::TemplateSet, DatasetOptions};
use dual_aeb::metrics::{EvalRow, Granularity, EVAL_CSV_HEADER};
use dual_aeb::simulator::suite;
use dual_aeb::slow::{serve, InProcessMock, OracleKnowledge, SlowTransport, TcpTransport, Unreachable, ENDPOINT_ENV};
use dual_aeb::{Mode, Scenario, SimConfig, SimLog};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(2);

/// Dual-path emergency braking: simulation, evaluation and dataset tools.
#[derive(Parser)]
#[command(name = "dual-aeb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its log.
    Run(RunArgs),
    /// Score every log in a directory into a CSV table.
    Eval(EvalArgs),
    /// Aggregate metrics over a suite for several modes, intervals or thresholds.
    Ablation(AblationArgs),
    /// Build an instruction dataset from run logs.
    Dataset(DatasetArgs),
    /// Serve the mock slow module for one scenario over TCP.
    ServeMock(ServeArgs),
    /// Check scenario, config and log files.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// TOML run config. Its keys override command-line flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seconds between slow consultations.
    #[arg(long)]
    interval: Option<f64>,
    /// Quick-path trigger threshold, seconds.
    #[arg(long)]
    t_threshold: Option<f64>,
}

#[derive(Args)]
#[group(multiple = false)]
struct ModeFlags {
    #[arg(long)]
    off: bool,
    #[arg(long)]
    rule_only: bool,
    #[arg(long)]
    slow_only: bool,
    #[arg(long)]
    dual: bool,
}

impl ModeFlags {
    fn mode(&self) -> Option<Mode> {
        [(self.off, Mode::Off), (self.rule_only, Mode::RuleOnly), (self.slow_only, Mode::SlowOnly), (self.dual, Mode::Dual)]
            .into_iter()
            .find_map(|(set, m)| set.then_some(m))
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    mode: ModeFlags,
    #[command(flatten)]
    common: Common,
    /// Log destination, line-delimited JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Unit for precision and recall.
    #[arg(long, value_parser = parse_granularity, default_value = "decision")]
    granularity: Granularity,
}

#[derive(Args)]
struct AblationArgs {
    /// Scenario directory; the bundled suite when neither this nor --scenario is given.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Individual scenario files.
    #[arg(long = "scenario")]
    scenarios: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "off,rule-only,slow-only,dual")]
    modes: Vec<Mode>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Sweep the trigger interval instead of comparing modes.
    #[arg(long, value_delimiter = ',')]
    intervals: Vec<f64>,
    /// Sweep the quick-path threshold instead of comparing modes.
    #[arg(long, value_delimiter = ',')]
    thresholds: Vec<f64>,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Downsample classes to equal size.
    #[arg(long)]
    balance: bool,
    /// Fraction of decision prompts to corrupt.
    #[arg(long, default_value_t = 0.5)]
    corrupt: f64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario files or directories.
    #[arg(long = "scenario")]
    scenarios: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    logs: Option<PathBuf>,
}

fn parse_granularity(s: &str) -> Result<Granularity, String> {
    match s {
        "decision" => Ok(Granularity::Decision),
        "tick" => Ok(Granularity::Tick),
        _ => Err(format!("unknown granularity `{s}` (expected decision or tick)")),
    }
}

/// Run settings after layering defaults, flags and the config file.
struct Resolved {
    cfg: SimConfig,
    endpoint: Option<String>,
}

/// Deep merge; a table whose `type` tag differs from the base replaces it.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) if o.get("type").is_none_or(|t| b.get("type") == Some(t)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn resolve(common: &Common, mode: Option<Mode>) -> Result<Resolved> {
    let mut cfg = SimConfig {
        seed: common.seed,
        ..SimConfig::default()
    };
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(i) = common.interval {
        cfg.arbiter.trigger_interval = i;
    }
    if let Some(t) = common.t_threshold {
        cfg.rule.t_threshold = t;
    }
    let mut endpoint = std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.is_empty());
    if let Some(path) = &common.config {
        let (file_cfg, file_endpoint) = apply_config_file(&cfg, path)?;
        cfg = file_cfg;
        endpoint = file_endpoint.or(endpoint);
    }
    cfg.arbiter.validate().map_err(|e| anyhow!("arbiter config: {e}"))?;
    cfg.rule.validate().map_err(|e| anyhow!("rule config: {e}"))?;
    Ok(Resolved { cfg, endpoint })
}

fn apply_config_file(cfg: &SimConfig, path: &Path) -> Result<(SimConfig, Option<String>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let mut over = serde_json::to_value(table)?;
    let endpoint = match over.as_object_mut().and_then(|o| o.remove("slow_endpoint")) {
        None => None,
        Some(Value::String(s)) => Some(s),
        Some(_) => bail!("{}: slow_endpoint must be a string", path.display()),
    };
    let mut base = serde_json::to_value(cfg)?;
    merge(&mut base, over);
    let cfg = serde_json::from_value(base).with_context(|| format!("config {}", path.display()))?;
    Ok((cfg, endpoint))
}

/// Transport for one run: the remote endpoint when configured, the
/// in-process mock otherwise. An unreachable endpoint leaves the quick path
/// in charge.
fn transport_for(endpoint: &Option<String>, sc: &Scenario, cfg: &SimConfig) -> Box<dyn SlowTransport> {
    match endpoint {
        None => Box::new(InProcessMock::new(sc, cfg.ground_truth)),
        Some(ep) => match TcpTransport::connect(ep, CONNECT_TIMEOUT) {
            Ok(t) => Box::new(t),
            Err(e) => {
                eprintln!("warning: {}: {e}; quick path only", sc.name);
                Box::new(Unreachable::new(e.to_string()))
            }
        },
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let sc = Scenario::load(&args.scenario)?;
    let r = resolve(&args.common, args.mode.mode())?;
    let mut transport = transport_for(&r.endpoint, &sc, &r.cfg);
    let log = dual_aeb::run(&sc, &r.cfg, transport.as_mut()).map_err(|e| anyhow!("{} [{}]: {e}", sc.name, r.cfg.mode))?;
    write_file(&args.out, &log.to_jsonl_string())?;
    let m = dual_aeb::metrics::driving_metrics(&log);
    println!(
        "{} [{}]: driving score {:.2}, collisions {}, goal {}",
        sc.name, r.cfg.mode, m.driving_score, m.collisions, log.summary.goal_reached
    );
    Ok(())
}

fn log_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

/// Every log in `dir`, or a summary of every file that failed.
fn read_logs(dir: &Path) -> Result<Vec<SimLog>> {
    let mut logs = Vec::new();
    let mut errors = Vec::new();
    for path in log_files(dir)? {
        let parsed = fs::File::open(&path).map_err(|e| e.to_string()).and_then(|f| SimLog::read_jsonl(BufReader::new(f)).map_err(|e| e.to_string()));
        match parsed {
            Ok(log) => logs.push(log),
            Err(e) => errors.push(format!("  {}: {e}", path.display())),
        }
    }
    if !errors.is_empty() {
        bail!("{} log(s) failed to load:\n{}", errors.len(), errors.join("\n"));
    }
    if logs.is_empty() {
        bail!("no .jsonl logs in {}", dir.display());
    }
    Ok(logs)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let logs = read_logs(&args.logs)?;
    let mut out = String::from(EVAL_CSV_HEADER);
    out.push('\n');
    for log in &logs {
        out.push_str(&EvalRow::from_log(log, args.granularity).csv_line());
        out.push('\n');
    }
    write_file(&args.out, &out)?;
    println!("{} rows written to {}", logs.len(), args.out.display());
    Ok(())
}

fn load_scenarios(suite_dir: &Option<PathBuf>, files: &[PathBuf]) -> Result<Vec<Scenario>> {
    if suite_dir.is_none() && files.is_empty() {
        return Ok(suite::bundled());
    }
    let mut scenarios = Vec::new();
    let mut failures = Vec::new();
    if let Some(dir) = suite_dir {
        match suite::load_dir(dir) {
            Ok(loaded) => scenarios.extend(loaded.into_iter().map(|(_, s)| s)),
            Err(f) => failures.extend(f),
        }
    }
    match suite::load_paths(files) {
        Ok(loaded) => scenarios.extend(loaded.into_iter().map(|(_, s)| s)),
        Err(f) => failures.extend(f),
    }
    if !failures.is_empty() {
        let lines: Vec<String> = failures.iter().map(|f| format!("  {}: {}", f.path.display(), f.error)).collect();
        bail!("{} scenario file(s) failed to load:\n{}", failures.len(), lines.join("\n"));
    }
    Ok(scenarios)
}

fn cmd_ablation(args: AblationArgs) -> Result<()> {
    if args.modes.is_empty() {
        bail!("--modes must name at least one mode");
    }
    let scenarios = load_scenarios(&args.suite, &args.scenarios)?;
    let r = resolve(&args.common, None)?;
    let endpoint = r.endpoint.clone();
    let factory = move |sc: &Scenario, cfg: &SimConfig| transport_for(&endpoint, sc, cfg);
    let mut rows: Vec<AblationRow> = Vec::new();
    if !args.intervals.is_empty() || !args.thresholds.is_empty() {
        for &mode in &args.modes {
            if !args.intervals.is_empty() {
                rows.extend(ablation::interval_sweep(&scenarios, &args.intervals, mode, &args.seeds, &r.cfg, args.jobs, &factory)?);
            }
            for &t in &args.thresholds {
                let mut cfg = r.cfg.clone();
                cfg.rule.t_threshold = t;
                rows.extend(ablation::ablation(&scenarios, &[mode], &args.seeds, &cfg, args.jobs, &factory)?);
            }
        }
    } else {
        rows = ablation::ablation(&scenarios, &args.modes, &args.seeds, &r.cfg, args.jobs, &factory)?;
    }
    let csv = rows_to_csv(&rows);
    write_file(&args.out, &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_dataset(args: DatasetArgs) -> Result<()> {
    let logs = read_logs(&args.logs)?;
    let opts = DatasetOptions {
        seed: args.seed,
        balance: args.balance,
        corrupt_fraction: args.corrupt,
    };
    let (train, test, manifest) = dataset::build_dataset(&logs, &TemplateSet::builtin(), &opts)?;
    write_file(&args.out.join("train.jsonl"), &dataset::to_jsonl(&train))?;
    write_file(&args.out.join("test.jsonl"), &dataset::to_jsonl(&test))?;
    write_file(&args.out.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    println!("{} train, {} test samples written to {}", train.len(), test.len(), args.out.display());
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<()> {
    let sc = Scenario::load(&args.scenario)?;
    let common = Common {
        config: args.config,
        seed: 0,
        interval: None,
        t_threshold: None,
    };
    let r = resolve(&common, None)?;
    let oracle = Arc::new(OracleKnowledge::new(&sc, r.cfg.ground_truth));
    let listener = TcpListener::bind((args.host.as_str(), args.port)).with_context(|| format!("binding {}:{}", args.host, args.port))?;
    println!("serving {} on {}", sc.name, listener.local_addr()?);
    serve(listener, oracle)?;
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let mut errors = Vec::new();
    let mut checked = 0;
    for path in &args.scenarios {
        let loaded = if path.is_dir() {
            suite::load_dir(path)
        } else {
            suite::load_paths(std::slice::from_ref(path))
        };
        match loaded {
            Ok(l) => checked += l.len(),
            Err(f) => errors.extend(f.iter().map(|f| format!("  {}: {}", f.path.display(), f.error))),
        }
    }
    if let Some(path) = &args.config {
        checked += 1;
        let common = Common {
            config: Some(path.clone()),
            seed: 0,
            interval: None,
            t_threshold: None,
        };
        if let Err(e) = resolve(&common, None) {
            errors.push(format!("  {}: {e:#}", path.display()));
        }
    }
    if let Some(dir) = &args.logs {
        match read_logs(dir) {
            Ok(l) => checked += l.len(),
            Err(e) => errors.push(format!("  {e:#}")),
        }
    }
    if !errors.is_empty() {
        bail!("{} file(s) invalid:\n{}", errors.len(), errors.join("\n"));
    }
    println!("{checked} file(s) valid");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablation(a) => cmd_ablation(a),
        Command::Dataset(a) => cmd_dataset(a),
        Command::ServeMock(a) => cmd_serve(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
