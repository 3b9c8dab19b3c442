//! Batch stages over the on-disk formats. Each stage reads its inputs,
//! writes its outputs atomically, and returns a small JSON summary.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::classify::{self, Label, TextClassifierModel};
use crate::context::{self, ContextConfig, EventReport, MessageStore, ReportInputs};
use crate::detect::{self, Alarm, DetectorConfig};
use crate::forecast::{self, ForecastConfig};
use crate::ingest::{self, ClinicalSeries, GeoMessage, MatchedMessage, NewsArticle, RecordFormat, SymptomLexicon, SymptomPanel};
use crate::locnet::{self, Assigner, DbscanParams, LocationNetwork, LocationNode, PageRankParams, Sighting};
use crate::sim::{self, WorldConfig};
use crate::track::{self, CvConfig, PairData, TrackingModel};
use crate::{io, text, Error, NodeId, Result};

/// File locations. Relative paths are resolved against the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub messages: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub classifier: Option<PathBuf>,
    pub ingested: Option<PathBuf>,
    pub matched: Option<PathBuf>,
    pub health: Option<PathBuf>,
    pub nodes: Option<PathBuf>,
    pub regions: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub pagerank: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub clinical: Option<PathBuf>,
    pub news: Option<PathBuf>,
    pub alarms: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub nowcasts: Option<PathBuf>,
    pub tracking_eval: Option<PathBuf>,
    pub forecasts: Option<PathBuf>,
    pub forecasting_eval: Option<PathBuf>,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.messages,
            &mut self.lexicon,
            &mut self.corpus,
            &mut self.classifier,
            &mut self.ingested,
            &mut self.matched,
            &mut self.health,
            &mut self.nodes,
            &mut self.regions,
            &mut self.network,
            &mut self.pagerank,
            &mut self.panel,
            &mut self.clinical,
            &mut self.news,
            &mut self.alarms,
            &mut self.events,
            &mut self.models,
            &mut self.nowcasts,
            &mut self.tracking_eval,
            &mut self.forecasts,
            &mut self.forecasting_eval,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub eps_km: f64,
    pub min_pts: usize,
    /// Upper bound on points fed to DBSCAN; larger inputs are thinned by a
    /// fixed stride.
    pub max_points: usize,
    /// Largest distance at which a region name is given to a node.
    pub name_radius_km: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let d = DbscanParams::default();
        Self {
            eps_km: d.eps_km,
            min_pts: d.min_pts,
            max_points: 20_000,
            name_radius_km: 25.0,
        }
    }
}

impl ClusterConfig {
    pub fn dbscan(&self) -> DbscanParams {
        DbscanParams {
            eps_km: self.eps_km,
            min_pts: self.min_pts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub cv: CvConfig,
    pub comparison: CvConfig,
    pub max_k: usize,
    /// Terms tried for each case type. Cases not listed use every panel symptom.
    pub case_terms: BTreeMap<String, Vec<String>>,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            cv: CvConfig::default(),
            comparison: CvConfig::comparison(),
            max_k: 4,
            case_terms: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastingConfig {
    #[serde(flatten)]
    pub folds: ForecastConfig,
    /// Symptoms evaluated; empty means every panel symptom.
    pub symptoms: Vec<String>,
}

/// Top-level configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub detector: DetectorConfig,
    pub cluster: ClusterConfig,
    pub pagerank: PageRankParams,
    pub context: ContextConfig,
    pub tracking: TrackingConfig,
    pub forecasting: ForecastingConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = io::read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.paths.resolve(&base);
        Ok(cfg)
    }
}

/// Returns the flag value, else the configured path, else a config error.
pub fn need(flag: Option<PathBuf>, configured: &Option<PathBuf>, field: &str) -> Result<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| Error::config(format!("paths.{field}"), "no path given on the command line or in the config"))
}

fn format_for(path: &Path) -> RecordFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => RecordFormat::Csv,
        _ => RecordFormat::Ndjson,
    }
}

fn read_lexicon(path: &Path) -> Result<SymptomLexicon> {
    SymptomLexicon::from_json(&io::read_to_string(path)?)
}

fn read_clinical(path: &Path) -> Result<Vec<ClinicalSeries>> {
    ingest::parse_clinical(io::open(path)?)
}

fn read_nodes(path: &Path) -> Result<Vec<LocationNode>> {
    io::read_json(path)
}

pub fn read_network(path: &Path) -> Result<LocationNetwork> {
    LocationNetwork::from_json(&io::read_to_string(path)?)
}

pub fn read_panel(path: &Path) -> Result<SymptomPanel> {
    io::read_json(path)
}

/// Generates a synthetic world plus a config pointing at its files.
pub fn simulate(world: &WorldConfig, out: &Path) -> Result<Value> {
    let w = sim::generate(world)?;
    sim::write_world(&w, out)?;
    let p = |s: &str| Some(PathBuf::from(s));
    let mut cfg = PipelineConfig {
        paths: Paths {
            messages: p("messages.ndjson"),
            lexicon: p("lexicon.json"),
            corpus: p("corpus.csv"),
            classifier: p("classifier.json"),
            ingested: p("ingested.ndjson"),
            matched: p("matched.ndjson"),
            health: p("health.ndjson"),
            nodes: p("nodes.json"),
            regions: p("regions.csv"),
            network: p("network.json"),
            pagerank: p("pagerank.csv"),
            panel: p("panel.json"),
            clinical: p("clinical.csv"),
            news: p("news.ndjson"),
            alarms: p("alarms.json"),
            events: p("events.json"),
            models: p("models.json"),
            nowcasts: p("nowcasts.json"),
            tracking_eval: p("tracking"),
            forecasts: p("forecasts.json"),
            forecasting_eval: p("forecasting"),
        },
        ..PipelineConfig::default()
    };
    cfg.tracking.case_terms = world.cases.iter().map(|c| (c.name.clone(), c.symptoms.clone())).collect();
    // clusters in the synthetic world are a few km wide with tens of messages per day
    cfg.cluster.min_pts = 50;
    io::write_json(&out.join("pipeline.json"), &cfg)?;
    Ok(json!({
        "messages": w.messages.len(),
        "clinical_series": w.clinical.len(),
        "news": w.news.len(),
        "injections": w.truth.injections.len(),
    }))
}

/// Validates raw messages and matches them against the lexicon.
pub fn ingest(messages: &Path, lexicon: &Path, ingested: &Path, matched: &Path) -> Result<Value> {
    let lex = read_lexicon(lexicon)?;
    let parsed = ingest::parse_messages(io::open(messages)?, format_for(messages))?;
    if parsed.malformed > 0 {
        log::warn!("{}: skipped {} malformed records", messages.display(), parsed.malformed);
    }
    let hits: Vec<MatchedMessage> = parsed
        .records
        .par_iter()
        .filter_map(|m| {
            let symptoms = lex.match_symptoms(&m.text);
            (!symptoms.is_empty()).then(|| MatchedMessage {
                message: m.clone(),
                symptoms,
            })
        })
        .collect();
    io::write_ndjson(ingested, &parsed.records)?;
    io::write_ndjson(matched, &hits)?;
    Ok(json!({
        "records": parsed.records.len(),
        "malformed": parsed.malformed,
        "matched": hits.len(),
    }))
}

pub fn classify_train(corpus: &Path, model: &Path) -> Result<Value> {
    let rows = classify::parse_corpus(io::open(corpus)?)?;
    let m = classify::train(&rows)?;
    io::write_atomic(model, m.to_json()?.as_bytes())?;
    Ok(json!({ "documents": rows.len(), "vocabulary": m.vocabulary.len() }))
}

/// Keeps the matched messages the classifier labels health-related.
pub fn classify(model: &Path, matched: &Path, health: &Path) -> Result<Value> {
    let m = TextClassifierModel::from_json(&io::read_to_string(model)?)?;
    let input: Vec<MatchedMessage> = io::read_ndjson(matched)?;
    let kept: Vec<&MatchedMessage> = input
        .par_iter()
        .filter(|x| classify::predict(&m, &x.message.text).0 == Label::Health)
        .collect();
    io::write_ndjson(health, &kept)?;
    Ok(json!({ "input": input.len(), "health": kept.len() }))
}

/// Clusters message locations into nodes.
pub fn cluster(messages: &Path, cfg: &ClusterConfig, nodes: &Path) -> Result<Value> {
    cfg.dbscan().validate()?;
    if cfg.max_points == 0 {
        return Err(Error::config("cluster.max_points", "must be positive"));
    }
    let msgs: Vec<GeoMessage> = io::read_ndjson(messages)?;
    let stride = msgs.len().div_ceil(cfg.max_points).max(1);
    let points: Vec<(f64, f64)> = msgs.iter().step_by(stride).map(|m| (m.lat, m.lon)).collect();
    let found = locnet::cluster(&points, cfg.eps_km, cfg.min_pts)?;
    io::write_json(nodes, &found)?;
    Ok(json!({ "points": points.len(), "stride": stride, "nodes": found.len() }))
}

fn read_regions(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    let mut rdr = csv::Reader::from_reader(io::open(path)?);
    let mut out = Vec::new();
    for row in rdr.deserialize::<(String, f64, f64)>() {
        out.push(row?);
    }
    Ok(out)
}

/// Names each node after the nearest region within `radius_km`. Larger
/// nodes claim a region first.
pub fn name_nodes(nodes: &mut [LocationNode], regions: &[(String, f64, f64)], radius_km: f64) {
    let mut taken = BTreeSet::new();
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by_key(|&i| nodes[i].node_id);
    for i in order {
        let best = regions
            .iter()
            .filter(|r| !taken.contains(&r.0))
            .map(|r| (locnet::haversine_km(nodes[i].centroid, (r.1, r.2)), r))
            .filter(|(d, _)| *d <= radius_km)
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1 .0.cmp(&b.1 .0)));
        if let Some((_, r)) = best {
            taken.insert(r.0.clone());
            nodes[i].name = Some(r.0.clone());
        }
    }
}

/// Builds movement edges and populations from every message that falls in a node.
pub fn network(nodes_path: &Path, messages: &Path, regions: Option<&Path>, cfg: &ClusterConfig, out: &Path) -> Result<Value> {
    let mut nodes = read_nodes(nodes_path)?;
    if let Some(r) = regions {
        name_nodes(&mut nodes, &read_regions(r)?, cfg.name_radius_km);
    }
    let msgs: Vec<GeoMessage> = io::read_ndjson(messages)?;
    let assigner = Assigner::new(&nodes, cfg.eps_km);
    let assigned: Vec<Option<NodeId>> = msgs.par_iter().map(|m| assigner.assign(m.lat, m.lon)).collect();
    let days = match (msgs.iter().map(GeoMessage::date).min(), msgs.iter().map(GeoMessage::date).max()) {
        (Some(lo), Some(hi)) => (hi - lo).num_days() as usize + 1,
        _ => 1,
    };
    let sightings = msgs.iter().zip(&assigned).filter_map(|(m, n)| {
        n.map(|node| Sighting {
            user_id: &m.user_id,
            date: m.date(),
            node,
        })
    });
    let (edges, mut population) = locnet::movement_edges(sightings, days)?;
    for n in &nodes {
        population.entry(n.node_id).or_insert(0);
    }
    let net = LocationNetwork::new(nodes, edges, population)?;
    io::write_atomic(out, net.to_json()?.as_bytes())?;
    Ok(json!({
        "nodes": net.nodes.len(),
        "edges": net.edges.len(),
        "assigned": assigned.iter().filter(|a| a.is_some()).count(),
        "days": days,
    }))
}

pub fn pagerank(network: &Path, params: PageRankParams, out: Option<&Path>) -> Result<Vec<u8>> {
    let net = read_network(network)?;
    let scores = locnet::pagerank(&net, params)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["node_id", "name", "pagerank"])?;
    for (id, s) in &scores {
        let name = net.node(*id).and_then(|n| n.name.clone()).unwrap_or_default();
        w.write_record([id.to_string(), name, s.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    if let Some(p) = out {
        io::write_atomic(p, &bytes)?;
    }
    Ok(bytes)
}

/// Assigns health messages to nodes, dropping those outside every node.
pub fn assign_messages(net: &LocationNetwork, eps_km: f64, msgs: Vec<MatchedMessage>) -> Vec<(NodeId, MatchedMessage)> {
    let a = Assigner::new(&net.nodes, eps_km);
    msgs.into_iter()
        .filter_map(|m| a.assign(m.message.lat, m.message.lon).map(|n| (n, m)))
        .collect()
}

/// Daily (node, symptom) counts. The range defaults to the span of the
/// ingested messages so quiet days at either end still count as zeros.
pub fn counts(
    network: &Path,
    health: &Path,
    range_from: Option<&Path>,
    eps_km: f64,
    out: &Path,
) -> Result<Value> {
    let net = read_network(network)?;
    let msgs: Vec<MatchedMessage> = io::read_ndjson(health)?;
    let range = match range_from {
        Some(p) => {
            let all: Vec<GeoMessage> = io::read_ndjson(p)?;
            match (all.iter().map(GeoMessage::date).min(), all.iter().map(GeoMessage::date).max()) {
                (Some(lo), Some(hi)) => Some((lo, (hi - lo).num_days() as usize + 1)),
                _ => None,
            }
        }
        None => None,
    };
    let assigned = assign_messages(&net, eps_km, msgs);
    let panel = ingest::aggregate_counts(assigned.iter().map(|(n, m)| (&m.message, *n, &m.symptoms)), range);
    io::write_json(out, &panel)?;
    Ok(json!({
        "start": panel.start(),
        "days": panel.days(),
        "messages": assigned.len(),
        "total": panel.total(),
    }))
}

pub fn detect(panel: &Path, cfg: &DetectorConfig, out: &Path) -> Result<Value> {
    let p = read_panel(panel)?;
    let alarms = detect::detect(&p, cfg)?;
    io::write_json(out, &alarms)?;
    Ok(json!({ "alarms": alarms.len() }))
}

/// Inputs for building the event database.
pub struct ReportBuild<'a> {
    pub alarms: &'a Path,
    pub panel: &'a Path,
    pub network: &'a Path,
    pub health: &'a Path,
    pub lexicon: &'a Path,
    pub news: Option<&'a Path>,
    pub eps_km: f64,
}

pub fn build_events(b: &ReportBuild<'_>, cfg: &ContextConfig, events: &Path) -> Result<Vec<EventReport>> {
    let alarms: Vec<Alarm> = io::read_json(b.alarms)?;
    let panel = read_panel(b.panel)?;
    let net = read_network(b.network)?;
    let lexicon = read_lexicon(b.lexicon)?;
    let news: Vec<NewsArticle> = match b.news {
        Some(p) => {
            let parsed = ingest::parse_news(io::open(p)?)?;
            if parsed.malformed > 0 {
                log::warn!("{}: skipped {} malformed articles", p.display(), parsed.malformed);
            }
            parsed.records
        }
        None => Vec::new(),
    };
    let store = MessageStore::new(assign_messages(&net, b.eps_km, io::read_ndjson(b.health)?));
    let stopwords = text::default_stopwords();
    let inputs = ReportInputs {
        alarms: &alarms,
        panel: &panel,
        store: &store,
        news: &news,
        lexicon: &lexicon,
        stopwords: &stopwords,
    };
    let reports = context::build_reports(&inputs, cfg)?;
    io::write_json(events, &reports)?;
    Ok(reports)
}

/// Event query. Absent filters match everything; dates are inclusive and
/// apply to the alarm date.
#[derive(Debug, Clone, Default)]
pub struct ReportQuery {
    pub node: Option<NodeId>,
    pub symptom: Option<String>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

impl ReportQuery {
    pub fn matches(&self, r: &EventReport) -> bool {
        let a = &r.alarm;
        self.node.is_none_or(|n| a.node_id == n)
            && self.symptom.as_deref().is_none_or(|s| a.symptom == s)
            && self.from.is_none_or(|d| a.date >= d)
            && self.to.is_none_or(|d| a.date <= d)
    }

    pub fn apply(&self, reports: Vec<EventReport>) -> Vec<EventReport> {
        reports.into_iter().filter(|r| self.matches(r)).collect()
    }
}

/// Message texts keyed by id, for rendering.
pub fn message_texts(health: &Path) -> Result<BTreeMap<String, String>> {
    let msgs: Vec<MatchedMessage> = io::read_ndjson(health)?;
    Ok(msgs.into_iter().map(|m| (m.message.id, m.message.text)).collect())
}

pub fn render_html(reports: &[EventReport], texts: &BTreeMap<String, String>) -> String {
    context::render_html(reports, texts)
}

/// Interpolated clinical series aligned with each named node's panel columns.
pub fn clinical_pairs(
    clinical: &[ClinicalSeries],
    panel: &SymptomPanel,
    net: &LocationNetwork,
    case_terms: &BTreeMap<String, Vec<String>>,
) -> Result<Vec<PairData>> {
    let by_name: BTreeMap<&str, NodeId> = net
        .nodes
        .iter()
        .filter_map(|n| n.name.as_deref().map(|s| (s, n.node_id)))
        .collect();
    let all: Vec<String> = panel.symptoms().into_iter().collect();
    let mut out = Vec::new();
    for c in clinical {
        let Some(&node) = by_name.get(c.region.as_str()) else {
            log::warn!("no node named {}; skipping {} series", c.region, c.case_type);
            continue;
        };
        let terms = case_terms.get(&c.case_type).unwrap_or(&all);
        let daily = ingest::interpolate_weekly(c)?;
        out.push(track::align(node, &c.case_type, &daily, panel, terms)?);
    }
    Ok(out)
}

struct TrackInputs {
    clinical: Vec<ClinicalSeries>,
    panel: SymptomPanel,
    network: LocationNetwork,
}

fn track_inputs(clinical: &Path, panel: &Path, network: &Path) -> Result<TrackInputs> {
    Ok(TrackInputs {
        clinical: read_clinical(clinical)?,
        panel: read_panel(panel)?,
        network: read_network(network)?,
    })
}

/// Trains one tracking model per (node, case) pair. Pairs that cannot be
/// trained are skipped with a warning.
pub fn track_train(clinical: &Path, panel: &Path, network: &Path, cfg: &TrackingConfig, out: &Path) -> Result<Value> {
    let inp = track_inputs(clinical, panel, network)?;
    let pairs = clinical_pairs(&inp.clinical, &inp.panel, &inp.network, &cfg.case_terms)?;
    let results: Vec<Result<TrackingModel>> = pairs
        .par_iter()
        .map(|p| {
            let terms: Vec<String> = p.terms.keys().cloned().collect();
            track::train_tracker(p, &terms, cfg.max_k, &cfg.cv)
        })
        .collect();
    let mut models = Vec::new();
    for (p, r) in pairs.iter().zip(results) {
        match r {
            Ok(m) => models.push(m),
            Err(e) => log::warn!("node {} {}: not trained: {e}", p.node_id, p.case_type),
        }
    }
    io::write_json(out, &models)?;
    Ok(json!({ "pairs": pairs.len(), "models": models.len() }))
}

/// Pair data running to `through`: tweet counts to that day, clinical values
/// to seven days before it. Later clinical slots are zero and never read.
fn nowcast_pair(m: &TrackingModel, daily: &ingest::DailySeries, panel: &SymptomPanel, through: NaiveDate) -> Result<PairData> {
    let start = daily.start.max(panel.start());
    let known_end = through - chrono::Days::new(7);
    if daily.end() < known_end {
        return Err(Error::InsufficientData(format!(
            "clinical data for node {} {} ends {} but is needed through {known_end}",
            m.node_id,
            m.case_type,
            daily.end()
        )));
    }
    let (Some(lo), Some(hi)) = (panel.index_of(start), panel.index_of(through)) else {
        return Err(Error::InsufficientData(format!("tweet counts do not cover {start} to {through}")));
    };
    if hi < lo {
        return Err(Error::InsufficientData(format!("no data before {through}")));
    }
    let y = (lo..=hi)
        .map(|i| if panel.date(i) <= known_end { daily.get(panel.date(i)).unwrap_or(0.0) } else { 0.0 })
        .collect();
    let terms = m
        .chosen_terms
        .iter()
        .map(|t| (t.clone(), panel.series(m.node_id, t)[lo..=hi].to_vec()))
        .collect();
    Ok(PairData {
        node_id: m.node_id,
        case_type: m.case_type.clone(),
        start,
        y,
        terms,
    })
}

/// Nowcasts the seven days ending `through` (default: last panel day).
pub fn track(
    models: &Path,
    clinical: &Path,
    panel: &Path,
    network: &Path,
    through: Option<NaiveDate>,
    out: &Path,
) -> Result<Value> {
    let models: Vec<TrackingModel> = io::read_json(models)?;
    let inp = track_inputs(clinical, panel, network)?;
    let through = through.unwrap_or_else(|| inp.panel.end());
    let mut nowcasts = Vec::new();
    for m in &models {
        let Some(series) = inp.clinical.iter().find(|c| {
            c.case_type == m.case_type && inp.network.node(m.node_id).and_then(|n| n.name.as_deref()) == Some(c.region.as_str())
        }) else {
            log::warn!("no clinical series for node {} {}", m.node_id, m.case_type);
            continue;
        };
        let daily = ingest::interpolate_weekly(series)?;
        let pair = nowcast_pair(m, &daily, &inp.panel, through)?;
        nowcasts.push(track::track(m, &pair, through)?);
    }
    io::write_json(out, &nowcasts)?;
    Ok(json!({ "nowcasts": nowcasts.len(), "through": through }))
}

pub fn evaluate_tracking(clinical: &Path, panel: &Path, network: &Path, cfg: &TrackingConfig, out_dir: &Path) -> Result<Value> {
    let inp = track_inputs(clinical, panel, network)?;
    let pairs = clinical_pairs(&inp.clinical, &inp.panel, &inp.network, &cfg.case_terms)?;
    let eval = track::compare_models(&pairs, &cfg.comparison)?;
    io::write_atomic(&out_dir.join("table3.csv"), &eval.table3_csv()?)?;
    io::write_atomic(&out_dir.join("table4.csv"), &eval.table4_csv()?)?;
    io::write_json(&out_dir.join("records.json"), &eval.records)?;
    Ok(json!({ "pairs": eval.records.len(), "mean_mae": eval.mean_mae, "fraction_min": eval.mean_fraction() }))
}

/// Forecasts `horizon` days from `from` for every node, trained on the
/// preceding window.
pub fn forecast(
    panel: &Path,
    network: &Path,
    symptom: &str,
    from: Option<NaiveDate>,
    train_days: usize,
    horizon: usize,
    out: &Path,
) -> Result<Value> {
    let p = read_panel(panel)?;
    let net = read_network(network)?;
    let end = match from {
        Some(d) => (d - p.start()).num_days(),
        None => p.days() as i64,
    };
    if end < train_days as i64 || end > p.days() as i64 {
        return Err(Error::InsufficientData(format!(
            "need {train_days} panel days before the first forecast day"
        )));
    }
    let start = end as usize - train_days;
    let w = forecast::forecast_window(&p, &net, symptom, start, train_days, horizon)?;
    let dates: Vec<NaiveDate> = (0..horizon).map(|i| p.start() + chrono::Days::new((end as usize + i) as u64)).collect();
    let doc = json!({
        "symptom": symptom,
        "dates": dates,
        "order": w.order,
        "influx": w.influx,
        "arima": w.plain,
    });
    io::write_json(out, &doc)?;
    Ok(json!({ "nodes": w.influx.len(), "first_day": dates.first() }))
}

pub fn evaluate_forecasting(panel: &Path, network: &Path, cfg: &ForecastingConfig, out_dir: &Path) -> Result<Value> {
    let p = read_panel(panel)?;
    let net = read_network(network)?;
    let symptoms = if cfg.symptoms.is_empty() {
        p.symptoms().into_iter().collect()
    } else {
        cfg.symptoms.clone()
    };
    let eval = forecast::compare_forecasters(&p, &net, &symptoms, &cfg.folds)?;
    io::write_atomic(&out_dir.join("table5.csv"), &eval.table5_csv()?)?;
    io::write_json(&out_dir.join("scores.json"), &eval)?;
    Ok(json!({
        "average_arima": eval.average_arima,
        "average_influx": eval.average_influx,
        "improvement_pct": eval.improvement_pct(),
    }))
}
