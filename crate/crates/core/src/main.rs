use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use symwatch::pipeline::{self, need, PipelineConfig, ReportBuild, ReportQuery};
use symwatch::sim::WorldConfig;
use symwatch::{io, Error, NodeId, Result};

/// Syndromic surveillance over geo-tagged short messages.
#[derive(Parser)]
#[command(name = "symwatch", version, about)]
struct Cli {
    /// Pipeline configuration file (JSON). Flags override its paths.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world and a pipeline config for it.
    Simulate(SimulateArgs),
    /// Validate messages and match them against the symptom lexicon.
    Ingest(IngestArgs),
    /// Train the health-relevance classifier from a labelled corpus.
    ClassifyTrain(ClassifyTrainArgs),
    /// Keep the matched messages classified as health-related.
    Classify(ClassifyArgs),
    /// Cluster message locations into nodes.
    Cluster(ClusterArgs),
    /// Build the movement network between nodes.
    Network(NetworkArgs),
    /// Edge-weighted PageRank of the network, as CSV.
    Pagerank(PagerankArgs),
    /// Daily symptom counts per node.
    Counts(CountsArgs),
    /// Run the outbreak detector over the count panel.
    Detect(DetectArgs),
    /// Build or query event reports.
    Report(ReportArgs),
    /// Train nowcasting models for each (node, case) pair.
    TrackTrain(TrackTrainArgs),
    /// Nowcast the latest seven days of clinical counts.
    Track(TrackArgs),
    /// Compare the seven tracking models by cross-validated MAE.
    EvaluateTracking(EvaluateTrackingArgs),
    /// Forecast one symptom for every node.
    Forecast(ForecastArgs),
    /// Compare forecasting with and without influx.
    EvaluateForecasting(EvaluateForecastingArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in world: default, detection, tracking or forecasting.
    #[arg(long, default_value = "default", conflicts_with = "world")]
    preset: String,
    /// World configuration file (JSON) instead of a preset.
    #[arg(long)]
    world: Option<PathBuf>,
    /// Override the world's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Raw messages (.ndjson or .csv).
    #[arg(long)]
    messages: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Output: every valid message.
    #[arg(long)]
    ingested: Option<PathBuf>,
    /// Output: messages matching at least one symptom.
    #[arg(long)]
    matched: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyTrainArgs {
    /// CSV with header text,label.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output model.
    #[arg(long)]
    classifier: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    classifier: Option<PathBuf>,
    #[arg(long)]
    matched: Option<PathBuf>,
    /// Output: health-related matched messages.
    #[arg(long)]
    health: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    /// Ingested messages.
    #[arg(long)]
    ingested: Option<PathBuf>,
    #[arg(long)]
    eps_km: Option<f64>,
    #[arg(long)]
    min_pts: Option<usize>,
    /// Output node list.
    #[arg(long)]
    nodes: Option<PathBuf>,
}

#[derive(Args)]
struct NetworkArgs {
    #[arg(long)]
    nodes: Option<PathBuf>,
    /// Ingested messages.
    #[arg(long)]
    ingested: Option<PathBuf>,
    /// CSV region,lat,lon used to name nodes.
    #[arg(long)]
    regions: Option<PathBuf>,
    /// Output network.
    #[arg(long)]
    network: Option<PathBuf>,
}

#[derive(Args)]
struct PagerankArgs {
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    damping: Option<f64>,
    /// Output CSV; printed to stdout when absent from flags and config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CountsArgs {
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    health: Option<PathBuf>,
    /// Messages whose date span fixes the panel range.
    #[arg(long)]
    ingested: Option<PathBuf>,
    /// Output panel.
    #[arg(long)]
    panel: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    panel: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Output alarms.
    #[arg(long)]
    alarms: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Build the event database from alarms before querying.
    #[arg(long)]
    build: bool,
    #[arg(long)]
    alarms: Option<PathBuf>,
    #[arg(long)]
    panel: Option<PathBuf>,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    health: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    news: Option<PathBuf>,
    /// Event database.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    node: Option<NodeId>,
    #[arg(long)]
    symptom: Option<String>,
    /// First alarm date, inclusive.
    #[arg(long)]
    from: Option<NaiveDate>,
    /// Last alarm date, inclusive.
    #[arg(long)]
    to: Option<NaiveDate>,
    /// Write matching reports here as JSON instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a static HTML page.
    #[arg(long)]
    html: Option<PathBuf>,
}

#[derive(Args)]
struct TrackTrainArgs {
    #[arg(long)]
    clinical: Option<PathBuf>,
    #[arg(long)]
    panel: Option<PathBuf>,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    max_k: Option<usize>,
    /// Output models.
    #[arg(long)]
    models: Option<PathBuf>,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    clinical: Option<PathBuf>,
    #[arg(long)]
    panel: Option<PathBuf>,
    #[arg(long)]
    network: Option<PathBuf>,
    /// Last nowcast day (default: last panel day).
    #[arg(long)]
    through: Option<NaiveDate>,
    /// Output nowcasts.
    #[arg(long)]
    nowcasts: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateTrackingArgs {
    #[arg(long)]
    clinical: Option<PathBuf>,
    #[arg(long)]
    panel: Option<PathBuf>,
    #[arg(long)]
    network: Option<PathBuf>,
    /// Output directory for table3.csv, table4.csv and records.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    panel: Option<PathBuf>,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    symptom: String,
    /// First forecast day (default: the day after the panel ends).
    #[arg(long)]
    from: Option<NaiveDate>,
    #[arg(long)]
    train_days: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Output forecasts.
    #[arg(long)]
    forecasts: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateForecastingArgs {
    #[arg(long)]
    panel: Option<PathBuf>,
    #[arg(long)]
    network: Option<PathBuf>,
    /// Symptoms to evaluate (repeatable; default: every panel symptom).
    #[arg(long)]
    symptom: Vec<String>,
    /// Output directory for table5.csv and scores.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string(v).expect("JSON values serialise"));
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let paths = cfg.paths.clone();
    match cli.command {
        Command::Simulate(a) => {
            let mut world = match &a.world {
                Some(p) => io::read_json::<WorldConfig>(p)?,
                None => WorldConfig::preset(&a.preset)?,
            };
            if let Some(s) = a.seed {
                world.seed = s;
            }
            print(&pipeline::simulate(&world, &a.out)?);
        }
        Command::Ingest(a) => print(&pipeline::ingest(
            &need(a.messages, &paths.messages, "messages")?,
            &need(a.lexicon, &paths.lexicon, "lexicon")?,
            &need(a.ingested, &paths.ingested, "ingested")?,
            &need(a.matched, &paths.matched, "matched")?,
        )?),
        Command::ClassifyTrain(a) => print(&pipeline::classify_train(
            &need(a.corpus, &paths.corpus, "corpus")?,
            &need(a.classifier, &paths.classifier, "classifier")?,
        )?),
        Command::Classify(a) => print(&pipeline::classify(
            &need(a.classifier, &paths.classifier, "classifier")?,
            &need(a.matched, &paths.matched, "matched")?,
            &need(a.health, &paths.health, "health")?,
        )?),
        Command::Cluster(a) => {
            cfg.cluster.eps_km = a.eps_km.unwrap_or(cfg.cluster.eps_km);
            cfg.cluster.min_pts = a.min_pts.unwrap_or(cfg.cluster.min_pts);
            print(&pipeline::cluster(
                &need(a.ingested, &paths.ingested, "ingested")?,
                &cfg.cluster,
                &need(a.nodes, &paths.nodes, "nodes")?,
            )?)
        }
        Command::Network(a) => {
            let regions = a.regions.or(paths.regions.clone());
            print(&pipeline::network(
                &need(a.nodes, &paths.nodes, "nodes")?,
                &need(a.ingested, &paths.ingested, "ingested")?,
                regions.as_deref(),
                &cfg.cluster,
                &need(a.network, &paths.network, "network")?,
            )?)
        }
        Command::Pagerank(a) => {
            if let Some(d) = a.damping {
                cfg.pagerank.damping = d;
            }
            let out = a.out.or(paths.pagerank.clone());
            let bytes = pipeline::pagerank(&need(a.network, &paths.network, "network")?, cfg.pagerank, out.as_deref())?;
            if out.is_none() {
                std::io::stdout().write_all(&bytes)?;
            }
        }
        Command::Counts(a) => {
            let range = a.ingested.or(paths.ingested.clone());
            print(&pipeline::counts(
                &need(a.network, &paths.network, "network")?,
                &need(a.health, &paths.health, "health")?,
                range.as_deref(),
                cfg.cluster.eps_km,
                &need(a.panel, &paths.panel, "panel")?,
            )?)
        }
        Command::Detect(a) => {
            if let Some(t) = a.threshold {
                cfg.detector.threshold = t;
            }
            cfg.detector.validate()?;
            print(&pipeline::detect(
                &need(a.panel, &paths.panel, "panel")?,
                &cfg.detector,
                &need(a.alarms, &paths.alarms, "alarms")?,
            )?)
        }
        Command::Report(a) => report(a, &cfg)?,
        Command::TrackTrain(a) => {
            if let Some(k) = a.max_k {
                cfg.tracking.max_k = k;
            }
            print(&pipeline::track_train(
                &need(a.clinical, &paths.clinical, "clinical")?,
                &need(a.panel, &paths.panel, "panel")?,
                &need(a.network, &paths.network, "network")?,
                &cfg.tracking,
                &need(a.models, &paths.models, "models")?,
            )?)
        }
        Command::Track(a) => print(&pipeline::track(
            &need(a.models, &paths.models, "models")?,
            &need(a.clinical, &paths.clinical, "clinical")?,
            &need(a.panel, &paths.panel, "panel")?,
            &need(a.network, &paths.network, "network")?,
            a.through,
            &need(a.nowcasts, &paths.nowcasts, "nowcasts")?,
        )?),
        Command::EvaluateTracking(a) => print(&pipeline::evaluate_tracking(
            &need(a.clinical, &paths.clinical, "clinical")?,
            &need(a.panel, &paths.panel, "panel")?,
            &need(a.network, &paths.network, "network")?,
            &cfg.tracking,
            &need(a.out, &paths.tracking_eval, "tracking_eval")?,
        )?),
        Command::Forecast(a) => print(&pipeline::forecast(
            &need(a.panel, &paths.panel, "panel")?,
            &need(a.network, &paths.network, "network")?,
            &a.symptom,
            a.from,
            a.train_days.unwrap_or(cfg.forecasting.folds.train_days),
            a.horizon.unwrap_or(cfg.forecasting.folds.test_days),
            &need(a.forecasts, &paths.forecasts, "forecasts")?,
        )?),
        Command::EvaluateForecasting(a) => {
            if !a.symptom.is_empty() {
                cfg.forecasting.symptoms = a.symptom;
            }
            print(&pipeline::evaluate_forecasting(
                &need(a.panel, &paths.panel, "panel")?,
                &need(a.network, &paths.network, "network")?,
                &cfg.forecasting,
                &need(a.out, &paths.forecasting_eval, "forecasting_eval")?,
            )?)
        }
    }
    Ok(())
}

fn report(a: ReportArgs, cfg: &PipelineConfig) -> Result<()> {
    let paths = &cfg.paths;
    let events = need(a.events, &paths.events, "events")?;
    let health = a.health.or(paths.health.clone());
    let reports = if a.build {
        let health = need(health.clone(), &None, "health")?;
        let b = ReportBuild {
            alarms: &need(a.alarms, &paths.alarms, "alarms")?,
            panel: &need(a.panel, &paths.panel, "panel")?,
            network: &need(a.network, &paths.network, "network")?,
            health: &health,
            lexicon: &need(a.lexicon, &paths.lexicon, "lexicon")?,
            news: a.news.as_deref().or(paths.news.as_deref()),
            eps_km: cfg.cluster.eps_km,
        };
        pipeline::build_events(&b, &cfg.context, &events)?
    } else {
        io::read_json(&events)?
    };
    let query = ReportQuery {
        node: a.node,
        symptom: a.symptom,
        from: a.from,
        to: a.to,
    };
    let selected = query.apply(reports);
    match &a.out {
        Some(p) => io::write_json(p, &selected)?,
        None => print(&serde_json::to_value(&selected)?),
    }
    if let Some(p) = &a.html {
        let texts = match &health {
            Some(h) => pipeline::message_texts(h)?,
            None => Default::default(),
        };
        io::write_atomic(p, pipeline::render_html(&selected, &texts).as_bytes())?;
    }
    Ok(())
}

fn error_record(e: &Error) -> Value {
    let kind = match e {
        Error::Io { .. } => "io",
        Error::Stream(_) => "stream",
        Error::InvalidInput(_) => "invalid_input",
        Error::Config { .. } => "config",
        Error::InsufficientData(_) => "insufficient_data",
        Error::Fit(_) => "fit",
        Error::NonConvergence { .. } => "non_convergence",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    };
    let mut rec = json!({ "error": kind, "message": e.to_string() });
    match e {
        Error::Io { path, .. } => rec["path"] = json!(path),
        Error::Config { field, .. } => rec["field"] = json!(field),
        _ => {}
    }
    rec
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format(|buf, r| {
            writeln!(
                buf,
                "{}",
                json!({ "level": r.level().as_str(), "target": r.target(), "message": r.args().to_string() })
            )
        })
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", json!({ "error": "config", "field": "threads", "message": e.to_string() }));
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(1)
        }
    }
}
