//! Pipeline driver: each subcommand runs one stage with file-based JSON
//! handoffs, `run` chains them all. Outputs are deterministic, so re-running
//! with unchanged inputs rewrites byte-identical files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use artimine::artifact::{build_view, extract_logs, ArtifactSelection, LifecycleLog};
use artimine::gen::{random_workflow_net, GenOptions};
use artimine::gsm::{self, GsmModel};
use artimine::ingest::{parse_csv_log, parse_raw_log, tabulate};
use artimine::petri::{
    from_pnml, is_free_choice, is_sound, is_workflow_net, mine_lifecycle, prefix_traces_filtered,
    replay_fitness, to_pnml, PetriNet, Soundness,
};
use artimine::schema::{discover_schema, DiscoveryOutcome, SchemaConfig};
use artimine::translate::{
    allowed_under, render_guard_table, translate_with, BranchConditions, TranslateOptions,
};
use artimine::{Database, Error};

#[derive(Parser)]
#[command(name = "artimine", version, about = "Artifact-centric process mining pipeline")]
struct Cli {
    /// Pipeline configuration (TOML); paths inside are relative to this file
    #[arg(long, global = true, default_value = "artimine.toml")]
    config: PathBuf,
    /// Output directory (overrides the config)
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed for the generated fixture in `check`
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// State cap for reachability-based checks (overrides the config)
    #[arg(long, global = true)]
    state_cap: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the raw event log and tabulate it into database.json
    Ingest,
    /// Discover keys, entities and foreign keys into er_model.json
    Discover,
    /// Extract one lifecycle log per configured artifact
    Extract,
    /// Mine a workflow net from a lifecycle log (.jsonl)
    Mine { log: PathBuf },
    /// Translate a workflow net (.json or .pnml) into a GSM model
    Translate { net: PathBuf },
    /// Validate a net or GSM model; with no argument, self-check on a
    /// seed-generated net
    Check {
        model: Option<PathBuf>,
        /// Lifecycle log to replay against a net
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run the whole chain: ingest, discover, extract, mine, translate
    Run,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineConfig {
    #[serde(default)]
    input: InputConfig,
    #[serde(default)]
    schema: SchemaConfig,
    #[serde(default, rename = "artifact")]
    artifacts: Vec<ArtifactSelection>,
    #[serde(default)]
    translate: TranslateConfig,
    #[serde(default)]
    output: OutputConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputConfig {
    log: Option<PathBuf>,
    #[serde(default)]
    format: LogFormat,
    /// CSV column holding the timestamp
    ts_col: Option<String>,
    /// CSV column holding the event type
    type_col: Option<String>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum LogFormat {
    #[default]
    Native,
    Csv,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TranslateConfig {
    /// Branch-condition file (JSON), applied when translating mined nets
    conditions: Option<PathBuf>,
    state_cap: Option<usize>,
    #[serde(default)]
    allow_inconclusive: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputConfig {
    dir: Option<PathBuf>,
}

enum CliError {
    /// wrong invocation or unreadable/malformed supporting files: exit 2
    Usage(String),
    /// domain validation failure: exit 1
    Core(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Json(_) | Error::Xml(_) | Error::Config(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(_) => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Resolved invocation context shared by all subcommands.
struct Context {
    config: PipelineConfig,
    config_dir: PathBuf,
    out_dir: PathBuf,
    seed: u64,
    state_cap: usize,
}

impl Context {
    fn new(cli: &Cli) -> CliResult<Context> {
        let config = if cli.config.exists() {
            let text = read_text(&cli.config)?;
            toml::from_str(&text).map_err(|e| {
                CliError::Usage(format!("{}: invalid config: {e}", cli.config.display()))
            })?
        } else {
            PipelineConfig::default()
        };
        let config_dir = cli
            .config
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let out_dir = cli
            .out_dir
            .clone()
            .or_else(|| {
                config
                    .output
                    .dir
                    .as_ref()
                    .map(|d| resolve(&config_dir, d))
            })
            .unwrap_or_else(|| PathBuf::from("out"));
        let state_cap = cli
            .state_cap
            .or(config.translate.state_cap)
            .unwrap_or(10_000);
        Ok(Context {
            config,
            config_dir,
            out_dir,
            seed: cli.seed,
            state_cap,
        })
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        resolve(&self.config_dir, path)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn branch_conditions(&self) -> CliResult<BranchConditions> {
        match &self.config.translate.conditions {
            Some(path) => read_json(&self.resolve(path)),
            None => Ok(BranchConditions::default()),
        }
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: invalid JSON: {e}", path.display())))
}

fn write_output(ctx: &Context, name: &str, content: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(&ctx.out_dir)
        .map_err(|e| CliError::Usage(format!("{}: {e}", ctx.out_dir.display())))?;
    let path = ctx.out(name);
    fs::write(&path, content).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn write_json<T: serde::Serialize>(ctx: &Context, name: &str, value: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Usage(format!("{name}: {e}")))?;
    text.push('\n');
    write_output(ctx, name, &text)
}

fn snake_case(name: &str) -> String {
    let mut out = String::new();
    for (i, c) in name.chars().enumerate() {
        if c.is_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.extend(c.to_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

fn cmd_ingest(ctx: &Context) -> CliResult<()> {
    let log_path = ctx
        .config
        .input
        .log
        .as_ref()
        .ok_or_else(|| CliError::Usage("config has no input.log".into()))?;
    let log_path = ctx.resolve(log_path);
    let text = read_text(&log_path)?;
    let log = match ctx.config.input.format {
        LogFormat::Native => parse_raw_log(&text)?,
        LogFormat::Csv => {
            let ts = ctx.config.input.ts_col.as_deref().unwrap_or("timestamp");
            let ty = ctx.config.input.type_col.as_deref().unwrap_or("type");
            parse_csv_log(&text, ts, ty)?
        }
    };
    let db = tabulate(&log);
    let out = write_json(ctx, "database.json", &db)?;
    println!(
        "ingest: {} events -> {} clusters -> {}",
        log.events.len(),
        db.clusters.len(),
        out.display()
    );
    Ok(())
}

fn cmd_discover(ctx: &Context) -> CliResult<()> {
    let db: Database = read_json(&ctx.out("database.json"))?;
    let outcome = discover_schema(&db, &ctx.config.schema)?;
    for warning in &outcome.er.warnings {
        eprintln!("warning: {warning}");
    }
    let out = write_json(ctx, "er_model.json", &outcome)?;
    let mut report = String::new();
    for c in &outcome.candidates {
        report.push_str(&format!(
            "{}  coverage={:.2}  name_similarity={:.2}\n",
            c.fk, c.coverage, c.name_similarity
        ));
    }
    write_output(ctx, "candidates.txt", &report)?;
    println!(
        "discover: {} entities, {} confirmed foreign keys, {} candidates, top-level {{{}}} -> {}",
        outcome.er.entities.len(),
        outcome.er.foreign_keys.len(),
        outcome.candidates.len(),
        outcome
            .er
            .top_level
            .iter()
            .cloned()
            .collect::<Vec<_>>()
            .join(", "),
        out.display()
    );
    Ok(())
}

fn cmd_extract(ctx: &Context) -> CliResult<()> {
    let db: Database = read_json(&ctx.out("database.json"))?;
    let outcome: DiscoveryOutcome = read_json(&ctx.out("er_model.json"))?;
    if ctx.config.artifacts.is_empty() {
        return Err(CliError::Core(Error::InvalidView(
            "config defines no [[artifact]] selections".into(),
        )));
    }
    let view = build_view(&outcome, &ctx.config.artifacts)?;
    let (logs, report) = extract_logs(&db, &outcome, &view)?;
    for (event_type, count) in &report.orphans {
        eprintln!("warning: {count} {event_type} events could not be attributed");
    }
    write_json(ctx, "extraction_report.json", &report)?;
    for log in &logs {
        let name = format!("{}.jsonl", snake_case(&log.artifact));
        let out = write_output(ctx, &name, &log.to_jsonl())?;
        println!(
            "extract: {} -> {} cases -> {}",
            log.artifact,
            log.cases.len(),
            out.display()
        );
    }
    Ok(())
}

fn cmd_mine(ctx: &Context, log_path: &Path) -> CliResult<()> {
    let stem = file_stem(log_path);
    let text = read_text(log_path)?;
    let log = LifecycleLog::from_jsonl(&stem, &text)?;
    let net = mine_lifecycle(&log)?;
    let out = write_json(ctx, &format!("{stem}.net.json"), &net)?;
    write_output(ctx, &format!("{stem}.net.pnml"), &to_pnml(&net))?;
    write_output(ctx, &format!("{stem}.net.dot"), &artimine::petri::to_dot(&net))?;
    println!(
        "mine: {} cases -> {} places, {} transitions -> {}",
        log.cases.len(),
        net.places.len(),
        net.transitions.len(),
        out.display()
    );
    Ok(())
}

fn load_net(path: &Path) -> CliResult<PetriNet> {
    if path.extension().is_some_and(|e| e == "pnml") {
        let text = read_text(path)?;
        Ok(from_pnml(&text)?)
    } else {
        read_json(path)
    }
}

fn cmd_translate(ctx: &Context, net_path: &Path) -> CliResult<()> {
    let net = load_net(net_path)?;
    let stem = file_stem(net_path).replace(".net", "");
    let conds = ctx.branch_conditions()?;
    let options = TranslateOptions {
        artifact: stem.clone(),
        state_cap: ctx.state_cap,
        allow_inconclusive: ctx.config.translate.allow_inconclusive,
    };
    let translation = translate_with(&net, &conds, &options)?;
    for warning in &translation.warnings {
        eprintln!("warning: {warning}");
    }
    let out = write_json(ctx, &format!("{stem}.gsm.json"), &translation.model)?;
    write_output(
        ctx,
        &format!("{stem}.guards.txt"),
        &render_guard_table(&translation.model),
    )?;
    write_output(
        ctx,
        &format!("{stem}.gsm.dot"),
        &gsm::to_dot(&translation.model),
    )?;
    println!(
        "translate: {} stages, {} guards -> {}",
        translation.model.stages.len(),
        translation
            .model
            .stages
            .iter()
            .map(|s| s.guards.len())
            .sum::<usize>(),
        out.display()
    );
    Ok(())
}

/// Bounded PN-GSM language comparison; returns true when the trace sets agree
/// for every valuation of the branch variables.
fn check_equivalence(net: &PetriNet, conds: &BranchConditions, state_cap: usize) -> CliResult<bool> {
    let options = TranslateOptions {
        artifact: "check".into(),
        state_cap,
        allow_inconclusive: false,
    };
    let translation = translate_with(net, conds, &options)?;
    let parsed = conds.parsed()?;
    for valuation in conds.valuations() {
        let allowed = allowed_under(&parsed, net, &valuation);
        let net_traces = prefix_traces_filtered(net, 8, 500_000, &allowed)?;
        let gsm_traces = gsm::gsm_language_with(&translation.model, 8, &valuation);
        if net_traces != gsm_traces {
            println!("equivalence: trace sets differ under valuation {valuation:?}");
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_net(ctx: &Context, net: &PetriNet, log: Option<&Path>) -> CliResult<bool> {
    net.validate()?;
    let mut ok = true;
    let wf = is_workflow_net(net);
    println!(
        "workflow net: {}{}",
        if wf.ok { "yes" } else { "no" },
        if wf.ok {
            String::new()
        } else {
            format!(" ({})", wf.witnesses.join("; "))
        }
    );
    ok &= wf.ok;
    let fc = is_free_choice(net);
    println!(
        "free-choice: {}{}",
        if fc.ok { "yes" } else { "no" },
        if fc.ok {
            String::new()
        } else {
            format!(" ({})", fc.witnesses.join("; "))
        }
    );
    ok &= fc.ok;
    match is_sound(net, ctx.state_cap)? {
        Soundness::Sound => println!("sound: yes"),
        Soundness::Unsound(witness) => {
            println!("sound: no ({witness})");
            ok = false;
        }
        Soundness::Inconclusive => {
            println!("sound: inconclusive at state cap {}", ctx.state_cap);
            ok = false;
        }
    }
    if let Some(log_path) = log {
        let stem = file_stem(log_path);
        let text = read_text(log_path)?;
        let lifecycle = LifecycleLog::from_jsonl(&stem, &text)?;
        let fitness = replay_fitness(net, &lifecycle.traces())?;
        println!("replay fitness: {fitness:.4}");
    }
    if ok {
        let conds = ctx.branch_conditions()?;
        let agree = check_equivalence(net, &conds, ctx.state_cap)?;
        println!("PN-GSM bounded equivalence: {}", if agree { "yes" } else { "no" });
        ok &= agree;
    }
    Ok(ok)
}

fn cmd_check(ctx: &Context, model: Option<&Path>, log: Option<&Path>) -> CliResult<bool> {
    match model {
        None => {
            println!("self-check on generated net (seed {})", ctx.seed);
            let g = random_workflow_net(ctx.seed, &GenOptions::default());
            let mut ok = is_workflow_net(&g.net).ok && is_free_choice(&g.net).ok;
            ok &= matches!(is_sound(&g.net, ctx.state_cap)?, Soundness::Sound);
            println!("generated net valid: {}", if ok { "yes" } else { "no" });
            if ok {
                ok = check_equivalence(&g.net, &g.conditions, ctx.state_cap)?;
                println!("PN-GSM bounded equivalence: {}", if ok { "yes" } else { "no" });
            }
            Ok(ok)
        }
        Some(path) => {
            let value: serde_json::Value = if path.extension().is_some_and(|e| e == "pnml") {
                serde_json::json!({"places": true})
            } else {
                read_json(path)?
            };
            if value.get("places").is_some() {
                let net = load_net(path)?;
                check_net(ctx, &net, log)
            } else if value.get("stages").is_some() {
                let model: GsmModel = read_json(path)?;
                let diagnostics = gsm::validate(&model);
                for d in &diagnostics {
                    println!("invalid: {d}");
                }
                println!(
                    "model {}: {}",
                    model.artifact,
                    if diagnostics.is_empty() { "valid" } else { "invalid" }
                );
                Ok(diagnostics.is_empty())
            } else {
                Err(CliError::Usage(format!(
                    "{}: neither a net (places) nor a GSM model (stages)",
                    path.display()
                )))
            }
        }
    }
}

fn cmd_run(ctx: &Context) -> CliResult<()> {
    cmd_ingest(ctx)?;
    cmd_discover(ctx)?;
    cmd_extract(ctx)?;
    for artifact in &ctx.config.artifacts {
        let stem = snake_case(&artifact.name);
        let log_path = ctx.out(&format!("{stem}.jsonl"));
        cmd_mine(ctx, &log_path)?;
        cmd_translate(ctx, &ctx.out(&format!("{stem}.net.json")))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<bool> {
    let ctx = Context::new(&cli)?;
    match &cli.command {
        Command::Ingest => cmd_ingest(&ctx).map(|()| true),
        Command::Discover => cmd_discover(&ctx).map(|()| true),
        Command::Extract => cmd_extract(&ctx).map(|()| true),
        Command::Mine { log } => cmd_mine(&ctx, log).map(|()| true),
        Command::Translate { net } => cmd_translate(&ctx, net).map(|()| true),
        Command::Check { model, log } => cmd_check(&ctx, model.as_deref(), log.as_deref()),
        Command::Run => cmd_run(&ctx).map(|()| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
