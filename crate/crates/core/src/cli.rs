//! The `mesa` command line.
//!
//! Exit codes: 0 success, 1 domain failure, 2 usage error, 3 I/O or
//! backend error.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backend::{
    load_script, record_cache, remote_backend, replay_cache, ModelBackend, RemoteConfig,
    ScriptedBackend,
};
use crate::bank::{
    apply_updates, hypercorrection_updates, read_bank, record, BankConfig, BankEntry,
};
use crate::bench::{
    emit_report, load_suite_with, parse_report, run_matrix, script_manifest, two_prop_ztest,
    BenchmarkItem, Condition, GoldAction, ReportFormat, Slice, SLICE_SIZE,
};
use crate::cards::{lint_cards_with_gate, load_registry, CardRegistry};
use crate::router::{run_trajectory, Attachment, Outcome, RoutingConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mesa", version, about = "Dual-confidence skill routing and its benchmark harness")]
struct Cli {
    /// More logging on standard error (repeat up to 3 times)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[arg(long, global = true, value_enum, default_value_t = ColorChoice::Auto)]
    color: ColorChoice,
    /// key=value file overriding routing and bank defaults
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ColorChoice {
    Auto,
    Always,
    Never,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Skill card utilities
    #[command(subcommand)]
    Cards(CardsCommand),
    /// Route one prompt and print the decision
    Route(RouteArgs),
    /// Run the condition matrix over a suite
    Eval(EvalArgs),
    /// Re-render a saved machine-readable report
    Report(ReportArgs),
    /// Failure bank utilities
    #[command(subcommand)]
    Bank(BankCommand),
}

#[derive(Debug, Subcommand)]
enum CardsCommand {
    /// Check cards for trust, predicate and staleness problems
    Lint { path: PathBuf },
}

#[derive(Debug, Subcommand)]
enum BankCommand {
    /// List bank entries
    Show { path: PathBuf },
    /// Derive trust updates from high-confidence failures and apply them
    Correct {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        cards: PathBuf,
        /// Print the updates without touching the card file
        #[arg(long)]
        dry_run: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Scripted,
    Cached,
    Remote,
}

#[derive(Debug, Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value_t = BackendKind::Scripted)]
    backend: BackendKind,
    /// Behavior script (scripted backend)
    #[arg(long)]
    script: Option<PathBuf>,
    /// Cache file; replayed strictly unless --record is given
    #[arg(long)]
    cache: Option<PathBuf>,
    /// With --backend cached, fill the cache from the remote endpoint
    #[arg(long)]
    record: bool,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the bearer token
    #[arg(long)]
    auth_env: Option<String>,
    /// Per-request timeout in seconds
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    max_retries: Option<u32>,
}

#[derive(Debug, Args)]
struct RoutingArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    trust_gate: Option<f64>,
}

#[derive(Debug, Args)]
struct RouteArgs {
    #[arg(long)]
    cards: PathBuf,
    #[arg(long)]
    prompt: String,
    #[arg(long, default_value = "Full")]
    condition: String,
    /// Item id the backend answers for (scripted and cached backends key on it)
    #[arg(long, default_value = "adhoc")]
    item: String,
    /// Kind tag on the task (repeatable)
    #[arg(long = "kind")]
    kinds: Vec<String>,
    /// Attachment mime tag (repeatable)
    #[arg(long = "attach")]
    attachments: Vec<String>,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    routing: RoutingArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    cards: PathBuf,
    /// Comma-separated condition names (default: all seven)
    #[arg(long, value_delimiter = ',')]
    conditions: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    format: String,
    /// Accept suites whose slices are not exactly 50 items
    #[arg(long)]
    any_size: bool,
    /// Append failed trajectories to this bank file
    #[arg(long)]
    bank: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    routing: RoutingArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Debug)]
enum Failure {
    Domain(String),
    Usage(String),
    Io(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

type CmdResult = Result<i32, Failure>;

/// Settings from `--config`.
#[derive(Debug, Clone, Default)]
struct Settings {
    routing: RoutingConfig,
    bank: BankConfig,
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected a boolean, got \"{v}\"")),
    }
}

fn parse_config(text: &str) -> Result<Settings, String> {
    let mut s = Settings::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let num = || {
            value
                .parse::<f64>()
                .map_err(|_| format!("line {}: {key}: expected a number, got \"{value}\"", n + 1))
        };
        let r = &mut s.routing;
        match key {
            "alpha" => r.alpha = num()?,
            "lambda" => r.lambda = num()?,
            "trust_gate" => r.trust_gate = num()?,
            "self_low" => r.self_low = num()?,
            "trap_verify" => r.trap_verify = parse_bool(value).map_err(|e| format!("line {}: {key}: {e}", n + 1))?,
            "cost.direct" => r.cost_table.direct = num()?,
            "cost.stop" => r.cost_table.stop = num()?,
            "cost.verify" => r.cost_table.verify = num()?,
            "cost.call_tool" => r.cost_table.call_tool = num()?,
            "cost.load_skill" => r.cost_table.load_skill = num()?,
            "trust_override_threshold" => r.decontam.trust_override_threshold = num()?,
            "high_confidence_threshold" => s.bank.high_confidence_threshold = num()?,
            "decrement_factor" => s.bank.decrement_factor = num()?,
            _ => return Err(format!("line {}: unknown config key \"{key}\"", n + 1)),
        }
    }
    s.routing.validate().map_err(|e| e.to_string())?;
    s.bank.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

fn load_settings(path: Option<&Path>) -> Result<Settings, Failure> {
    let Some(path) = path else {
        return Ok(Settings::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
}

fn apply_routing(mut cfg: RoutingConfig, args: &RoutingArgs) -> Result<RoutingConfig, Failure> {
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(l) = args.lambda {
        cfg.lambda = l;
    }
    if let Some(g) = args.trust_gate {
        cfg.trust_gate = g;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn remote_config(args: &BackendArgs) -> RemoteConfig {
    let mut cfg = RemoteConfig::default();
    if let Some(e) = &args.endpoint {
        cfg.endpoint = e.clone();
    }
    if let Some(m) = &args.model {
        cfg.model = m.clone();
    }
    if let Some(a) = &args.auth_env {
        cfg.auth_env = a.clone();
    }
    if let Some(t) = args.timeout {
        cfg.timeout = Duration::from_secs_f64(t);
    }
    if let Some(r) = args.max_retries {
        cfg.max_retries = r;
    }
    cfg
}

/// Builds the backend. For the scripted backend the script is
/// coverage-checked against `manifest` before anything runs.
fn build_backend(
    args: &BackendArgs,
    manifest: Option<Vec<(String, String, String)>>,
) -> Result<Arc<dyn ModelBackend>, Failure> {
    match args.backend {
        BackendKind::Scripted => {
            let path = args
                .script
                .as_ref()
                .ok_or_else(|| Failure::Usage("--backend scripted needs --script".into()))?;
            let script = load_script(path).with_context(|| format!("loading script {}", path.display()))?;
            if let Some(m) = manifest {
                script
                    .check_coverage(m.iter().map(|(i, c, k)| (i.as_str(), c.as_str(), k.clone())))
                    .with_context(|| format!("script {} does not cover the suite", path.display()))?;
            }
            Ok(Arc::new(ScriptedBackend::new(script)))
        }
        BackendKind::Cached => {
            let path = args
                .cache
                .as_ref()
                .ok_or_else(|| Failure::Usage("--backend cached needs --cache".into()))?;
            let backend = if args.record {
                let inner: Arc<dyn ModelBackend> = Arc::new(remote_backend(remote_config(args)));
                record_cache(inner, path)
            } else {
                replay_cache(path)
            }
            .with_context(|| format!("opening cache {}", path.display()))?;
            Ok(Arc::new(backend))
        }
        BackendKind::Remote => Ok(Arc::new(remote_backend(remote_config(args)))),
    }
}

fn load_cards(path: &Path) -> Result<CardRegistry, Failure> {
    load_registry(path)
        .with_context(|| format!("loading cards {}", path.display()))
        .map_err(Failure::Io)
}

fn parse_format(s: &str) -> Result<ReportFormat, Failure> {
    s.parse().map_err(Failure::Usage)
}

fn parse_conditions(names: &[String]) -> Result<Vec<Condition>, Failure> {
    if names.is_empty() {
        return Ok(Condition::ALL.to_vec());
    }
    names
        .iter()
        .filter(|n| !n.trim().is_empty())
        .map(|n| n.parse::<Condition>().map_err(|e| Failure::Usage(e.to_string())))
        .collect()
}

fn cmd_lint(path: &Path, settings: &Settings, out: &mut dyn Write) -> CmdResult {
    let registry = load_cards(path)?;
    let diags = lint_cards_with_gate(&registry, settings.routing.trust_gate);
    for d in &diags {
        writeln!(out, "{d}").context("writing output")?;
    }
    Ok(if diags.is_empty() { EXIT_OK } else { EXIT_DOMAIN })
}

fn cmd_route(args: &RouteArgs, settings: &Settings, out: &mut dyn Write) -> CmdResult {
    let cfg = apply_routing(settings.routing.clone(), &args.routing)?;
    let condition: Condition = args.condition.parse().map_err(|e: crate::bench::UnknownCondition| Failure::Usage(e.to_string()))?;
    if args.prompt.is_empty() {
        return Err(Failure::Usage("--prompt must not be empty".into()));
    }
    let registry = load_cards(&args.cards)?;
    let item = BenchmarkItem {
        id: args.item.clone(),
        slice: Slice::B,
        prompt: args.prompt.clone(),
        kind_tags: args.kinds.iter().cloned().collect::<BTreeSet<_>>(),
        attachments: args
            .attachments
            .iter()
            .map(|m| Attachment {
                mime_tag: m.clone(),
                bytes_len: 0,
            })
            .collect(),
        injected_card_ids: registry.iter().map(|c| c.id.clone()).collect(),
        gold_action: GoldAction::GateSkill,
        gold_answer: None,
    };
    let backend = build_backend(&args.backend, None)?;
    let rec = run_trajectory(&item, &registry, backend.as_ref(), &cfg, condition)
        .map_err(|e| Failure::Io(anyhow!(e)))?;
    if let Some(d) = rec.diagnostics.first() {
        return Err(Failure::Io(anyhow!("backend: {d}")));
    }
    let mut text = String::new();
    for (i, d) in rec.decisions.iter().enumerate() {
        let _ = writeln!(text, "decision {i}");
        let _ = writeln!(text, "  chosen: {}", d.chosen.variant);
        let _ = writeln!(text, "  scores:");
        for (label, score) in &d.scores {
            let _ = writeln!(text, "    {label}: {score:.6}");
        }
        let _ = writeln!(text, "  gated_cards: [{}]", d.gated_cards.join(", "));
        for p in &d.probe_trace {
            let _ = writeln!(text, "  probe: {} {:?} cost={:.2}", p.card_id, p.stage, p.probe_cost_charged);
        }
    }
    let _ = writeln!(text, "terminal_confidence: {:.6}", rec.terminal_confidence);
    let _ = writeln!(text, "total_cost: {:.6}", rec.total_cost);
    out.write_all(text.as_bytes()).context("writing output")?;
    Ok(EXIT_OK)
}

fn write_output(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => out.write_all(text.as_bytes()).context("writing output")?,
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs, settings: &Settings, out: &mut dyn Write) -> CmdResult {
    let cfg = apply_routing(settings.routing.clone(), &args.routing)?;
    let conditions = parse_conditions(&args.conditions)?;
    let format = parse_format(&args.format)?;
    let registry = load_cards(&args.cards)?;
    let per_slice = (!args.any_size).then_some(SLICE_SIZE);
    let items = load_suite_with(&args.suite, &registry, per_slice)
        .with_context(|| format!("loading suite {}", args.suite.display()))?;
    let backend = build_backend(&args.backend, Some(script_manifest(&items, &conditions)))?;
    let run = run_matrix(&items, &registry, backend.as_ref(), &conditions, &cfg)
        .map_err(|e| Failure::Usage(e.to_string()))?;

    if conditions.contains(&Condition::NoProbe) && conditions.contains(&Condition::NoVigilance) {
        let b = |c| run.table.cell(c, Slice::B).copied();
        if let (Some(x), Some(y)) = (b(Condition::NoProbe), b(Condition::NoVigilance)) {
            if let Ok(t) = two_prop_ztest(x.correct.into(), x.total.into(), y.correct.into(), y.total.into()) {
                log::info!(
                    "slice B NoProbe {}/{} vs NoVigilance {}/{}: z={:.4} p={:.3e}",
                    x.correct, x.total, y.correct, y.total, t.z, t.p_two_sided
                );
            }
        }
    }

    if let Some(bank) = &args.bank {
        for r in run.records.iter().filter(|r| r.outcome == Outcome::Incorrect) {
            record(&BankEntry::new(r.clone()), bank).with_context(|| format!("recording to {}", bank.display()))?;
        }
    }

    write_output(args.out.as_deref(), &emit_report(&run.table, format), out)?;

    let failed: BTreeSet<Condition> = run
        .records
        .iter()
        .filter(|r| !r.diagnostics.is_empty())
        .map(|r| r.condition)
        .collect();
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        let names: Vec<&str> = failed.iter().map(|c| c.as_str()).collect();
        Err(Failure::Domain(format!("conditions with failed trajectories: {}", names.join(", "))))
    }
}

fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> CmdResult {
    let format = parse_format(&args.format)?;
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let table = parse_report(&text).with_context(|| format!("parsing {}", args.input.display()))?;
    write_output(None, &emit_report(&table, format), out)?;
    Ok(EXIT_OK)
}

fn cmd_bank(cmd: &BankCommand, settings: &Settings, out: &mut dyn Write) -> CmdResult {
    match cmd {
        BankCommand::Show { path } => {
            let entries = read_bank(path).with_context(|| format!("reading bank {}", path.display()))?;
            let mut text = String::new();
            for e in &entries {
                let t = &e.trajectory;
                let _ = writeln!(
                    text,
                    "{}\t{}\t{}\t{:?}\t{:.3}\t{}",
                    e.recorded_at,
                    t.item_id,
                    t.condition,
                    t.outcome,
                    t.terminal_confidence,
                    e.implicated_card.as_deref().unwrap_or("-")
                );
            }
            out.write_all(text.as_bytes()).context("writing output")?;
            Ok(EXIT_OK)
        }
        BankCommand::Correct {
            bank,
            cards,
            dry_run,
        } => {
            let entries = read_bank(bank).with_context(|| format!("reading bank {}", bank.display()))?;
            let registry = load_cards(cards)?;
            let updates = hypercorrection_updates(&entries, &registry, &settings.bank);
            let mut text = String::new();
            for u in &updates {
                let _ = writeln!(text, "{}\t{} -> {}\t{}", u.card_id, u.old_trust, u.new_trust, u.reason);
            }
            out.write_all(text.as_bytes()).context("writing output")?;
            if !dry_run && !updates.is_empty() {
                apply_updates(cards, &updates).map_err(|e| match e {
                    crate::bank::BankError::StaleUpdate { .. } => Failure::Domain(e.to_string()),
                    e => Failure::Io(anyhow!(e)),
                })?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn init_logging(verbose: u8, color: ColorChoice) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let style = match color {
        ColorChoice::Auto => env_logger::WriteStyle::Auto,
        ColorChoice::Always => env_logger::WriteStyle::Always,
        ColorChoice::Never => env_logger::WriteStyle::Never,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .write_style(style)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Runs the command line with explicit output streams.
pub fn dispatch_to<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
                ErrorKind::InvalidSubcommand => {
                    let _ = writeln!(err, "mesa: unknown subcommand");
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    init_logging(cli.verbose, cli.color);
    let result = load_settings(cli.config.as_deref()).and_then(|settings| match &cli.command {
        Command::Cards(CardsCommand::Lint { path }) => cmd_lint(path, &settings, out),
        Command::Route(a) => cmd_route(a, &settings, out),
        Command::Eval(a) => cmd_eval(a, &settings, out),
        Command::Report(a) => cmd_report(a, out),
        Command::Bank(b) => cmd_bank(b, &settings, out),
    });
    match result {
        Ok(code) => code,
        Err(Failure::Domain(msg)) => {
            let _ = writeln!(err, "mesa: {msg}");
            EXIT_DOMAIN
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "mesa: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Io(e)) => {
            let _ = writeln!(err, "mesa: {e:#}");
            EXIT_IO
        }
    }
}

/// Runs the command line against the process's standard streams.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    dispatch_to(argv, &mut stdout.lock(), &mut stderr.lock())
}
