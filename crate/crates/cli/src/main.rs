//! `crisisbot`: train, calibrate, serve, chat, evaluate and report.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use clap::{Args, Parser, Subcommand};
use crisisbot::classifier::evaluate_accuracy;
use crisisbot::corpus::{load_catalog, IntentCatalog, DEFAULT_VALIDATION_FRACTION};
use crisisbot::datastore::{rfc3339, ConversationRecord, Store};
use crisisbot::dialogue::{Channel, ReplyKind, Session};
use crisisbot::embednet::{load_model, model_version, save_model, Hyperparams};
use crisisbot::evalkit::{ingest_judgments, ssa};
use crisisbot::pipeline::{calibrate_catalog, train_catalog, TrainOptions};
use crisisbot::text::escape_field;
use crisisbot_server::GatewayConfig;

#[derive(Parser)]
#[command(name = "crisisbot", version, about = "Multidialectal FAQ and chitchat bot")]
struct Cli {
    /// Seed for every random choice (split, initialization, sampling).
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a catalog; writes MODEL and MODEL.report.json.
    Train(TrainArgs),
    /// Recreate the held-out split, calibrate, write the report, print the threshold.
    Calibrate(CalibrateArgs),
    /// Run the HTTP gateway.
    Serve(ServeArgs),
    /// Talk to the bot in the terminal; an empty line exits.
    Chat(EngineArgs),
    /// Score a judgment file.
    EvalSsa {
        #[arg(long)]
        judgments: PathBuf,
    },
    /// Conversation statistics and DAU/MAU stickiness.
    Stats(StatsArgs),
    /// Draw conversations for human labeling.
    SampleSsa(SampleArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    dim_embed: Option<usize>,
    #[arg(long)]
    dim_hidden: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_VALIDATION_FRACTION)]
    validation_fraction: f64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_VALIDATION_FRACTION)]
    validation_fraction: f64,
}

#[derive(Args)]
struct EngineArgs {
    /// YAML gateway config; BOT_* variables and flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    services: Option<PathBuf>,
    #[arg(long, conflicts_with = "calibration")]
    threshold: Option<f64>,
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Conversation store and unanswered-questions log.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    addr: Option<String>,
    #[arg(long)]
    webhook_secret: Option<String>,
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    data: PathBuf,
    /// Start of range, RFC 3339 or YYYY-MM-DD (inclusive).
    #[arg(long)]
    from: String,
    /// End of range, RFC 3339 or YYYY-MM-DD (exclusive).
    #[arg(long)]
    to: String,
    /// Day for DAU; defaults to the last day of the range.
    #[arg(long)]
    day: Option<NaiveDate>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    min_turns: usize,
    /// Used to show the reply text next to each question.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a, cli.seed),
        Command::Calibrate(a) => calibrate(a),
        Command::Serve(a) => serve(a),
        Command::Chat(a) => chat(a),
        Command::EvalSsa { judgments } => {
            let ing = ingest_judgments(&judgments).with_context(|| format!("reading {}", judgments.display()))?;
            if ing.coerced > 0 {
                println!("warning: {} judgment(s) coerced to not specific", ing.coerced);
            }
            println!("{}", ssa(&ing.judgments)?);
            Ok(())
        }
        Command::Stats(a) => stats(a),
        Command::SampleSsa(a) => sample(a, cli.seed),
    }
}

fn report_path(model: &Path) -> PathBuf {
    let mut name = model.as_os_str().to_owned();
    name.push(".report.json");
    PathBuf::from(name)
}

fn train(a: TrainArgs, seed: u64) -> Result<()> {
    let catalog = load_catalog(&a.catalog)?;
    let d = Hyperparams::default();
    let hyperparams = Hyperparams {
        rng_seed: seed,
        epochs: a.epochs.unwrap_or(d.epochs),
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        dim_embed: a.dim_embed.unwrap_or(d.dim_embed),
        dim_hidden: a.dim_hidden.unwrap_or(d.dim_hidden),
        negatives_per_example: a.negatives.unwrap_or(d.negatives_per_example),
        ..d
    };
    let opts = TrainOptions { hyperparams, validation_fraction: a.validation_fraction, ..TrainOptions::default() };
    let started = Instant::now();
    let tm = train_catalog(&catalog, &opts)?;
    let elapsed = started.elapsed();
    save_model(&tm.model, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let validation_accuracy =
        if tm.validation.is_empty() { None } else { Some(evaluate_accuracy(&tm.model, &tm.validation)?) };
    let report = serde_json::json!({
        "model_version": model_version(&tm.model),
        "hyperparams": tm.model.hyperparams,
        "num_grams": tm.model.vocab.num_grams(),
        "num_intents": tm.model.vocab.num_tags(),
        "train_examples": tm.train.len(),
        "validation_examples": tm.validation.len(),
        "loss_per_epoch": tm.report.loss_per_epoch,
        "final_train_accuracy": tm.report.final_train_accuracy,
        "validation_accuracy": validation_accuracy,
    });
    let rp = report_path(&a.out);
    std::fs::write(&rp, serde_json::to_string_pretty(&report)? + "\n")?;
    println!("model {} ({} grams, {} intents)", a.out.display(), tm.model.vocab.num_grams(), tm.model.vocab.num_tags());
    println!("train accuracy {}", tm.report.final_train_accuracy);
    if let Some(v) = validation_accuracy {
        println!("validation accuracy {v}");
    }
    println!("final loss {:.6}", tm.report.loss_per_epoch.last().copied().unwrap_or(f64::NAN));
    println!("trained in {:.1}s; report {}", elapsed.as_secs_f64(), rp.display());
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let catalog = load_catalog(&a.catalog)?;
    let model = load_model(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let report = calibrate_catalog(&catalog, &model, a.validation_fraction)?;
    report.write(&a.out)?;
    println!("validation examples {} (correct {})", report.per_example.len(), report.n_correct);
    println!("threshold {}", report.threshold);
    Ok(())
}

fn engine_config(a: &EngineArgs) -> Result<GatewayConfig> {
    let mut cfg = match &a.config {
        Some(p) => GatewayConfig::load(p)?,
        None => GatewayConfig::default(),
    };
    cfg.apply_env();
    if a.model.is_some() {
        cfg.model.clone_from(&a.model);
    }
    if a.catalog.is_some() {
        cfg.catalog.clone_from(&a.catalog);
    }
    if a.services.is_some() {
        cfg.services.clone_from(&a.services);
    }
    if let Some(t) = a.threshold {
        cfg.threshold = Some(t);
        cfg.calibration = None;
    }
    if a.calibration.is_some() {
        cfg.calibration.clone_from(&a.calibration);
        cfg.threshold = None;
    }
    if let Some(d) = &a.data {
        cfg.data_dir.clone_from(d);
    }
    Ok(cfg)
}

fn serve(a: ServeArgs) -> Result<()> {
    let mut cfg = engine_config(&a.engine)?;
    if let Some(addr) = a.addr {
        cfg.addr = addr;
    }
    if a.webhook_secret.is_some() {
        cfg.webhook_secret = a.webhook_secret;
    }
    if a.static_dir.is_some() {
        cfg.static_dir = a.static_dir;
    }
    cfg.model_path()?;
    cfg.catalog_path()?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(crisisbot_server::serve(cfg, async {
        let _ = tokio::signal::ctrl_c().await;
    }))?;
    Ok(())
}

fn chat(a: EngineArgs) -> Result<()> {
    let cfg = engine_config(&a)?;
    let loaded = crisisbot_server::load_engine(&cfg)?;
    let engine = &loaded.engine;
    println!("model {} threshold {:.4}; empty line quits", loaded.model_version, engine.threshold());
    let mut session = Session::new("cli", Channel::Cli, Utc::now());
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    loop {
        write!(out, "> ")?;
        out.flush()?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim();
        if line.is_empty() {
            break;
        }
        let reply = engine.handle_message(&mut session, line, Utc::now());
        let tag = match (&reply.kind, &reply.intent_id) {
            (ReplyKind::Fallback, _) | (_, None) => reply.kind.as_str().to_string(),
            (_, Some(id)) => format!("{id} {:.3}", reply.confidence),
        };
        writeln!(out, "[{tag}] {}", reply.text)?;
    }
    Ok(())
}

fn parse_instant(s: &str) -> Result<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    match NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        Ok(d) => Ok(Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight"))),
        Err(_) => bail!("{s:?} is neither RFC 3339 nor YYYY-MM-DD"),
    }
}

fn stats(a: StatsArgs) -> Result<()> {
    let (from, to) = (parse_instant(&a.from)?, parse_instant(&a.to)?);
    let day = a.day.unwrap_or_else(|| (to - Duration::microseconds(1)).date_naive());
    let store = Store::open(&a.data)?;
    let s = store.usage_stats(from, to, day)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&s)?);
        return Ok(());
    }
    println!("range {} .. {}", rfc3339(from), rfc3339(to));
    println!("unique users (sessions) {}", s.unique_users);
    println!("questions {}", s.total_questions);
    println!("questions per conversation min {} avg {} max {}", s.min_q_per_conv, s.avg_q_per_conv, s.max_q_per_conv);
    println!("day {day}: DAU {} MAU {} stickiness {:.2}%", s.daily_active, s.monthly_active, 100.0 * s.stickiness);
    Ok(())
}

fn reply_text(catalog: Option<&IntentCatalog>, kind: ReplyKind, intent_id: Option<&str>) -> String {
    let Some(catalog) = catalog else { return String::new() };
    let entry = intent_id.and_then(|id| catalog.intent(id));
    match (kind, entry) {
        (ReplyKind::Answer, Some(e)) => e.answer.clone(),
        (ReplyKind::Fallback, Some(e)) => catalog.fallback(&e.language_group).unwrap_or_default().to_string(),
        (ReplyKind::External, Some(_)) => "(external service reply)".into(),
        _ => String::new(),
    }
}

fn sample(a: SampleArgs, seed: u64) -> Result<()> {
    let catalog = a.catalog.as_ref().map(load_catalog).transpose()?;
    let store = Store::open(&a.data)?;
    let convs: Vec<ConversationRecord> = store.sample_conversations(a.n, a.min_turns, seed)?;
    let mut sheet = String::from("conversation_id\tturn_index\tuser_text\treply_kind\tintent_id\treply_text\n");
    for c in &convs {
        for (i, t) in c.turns.iter().enumerate() {
            sheet.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                c.session_id,
                i,
                escape_field(&t.user_text),
                t.reply_kind.as_str(),
                t.intent_id.as_deref().unwrap_or(""),
                escape_field(&reply_text(catalog.as_ref(), t.reply_kind, t.intent_id.as_deref())),
            ));
        }
    }
    std::fs::write(&a.out, sheet)?;
    println!("sampled {} conversation(s) with at least {} turns into {}", convs.len(), a.min_turns, a.out.display());
    if convs.len() < a.n {
        println!("warning: only {} eligible conversation(s)", convs.len());
    }
    Ok(())
}
