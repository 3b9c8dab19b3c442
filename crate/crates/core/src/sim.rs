//! Seeded synthetic world: nodes, movement, latent epidemics, and the
//! messages, clinical counts and news they give rise to.
//!
//! Latent incidence at a node grows or decays exponentially depending on how
//! much of its capacity has been used, and is fed by symptomatic travellers
//! arriving from other nodes. Symptomatic prevalence is the incidence summed
//! over the illness duration; symptom messages are Poisson around a fixed
//! share of prevalence plus a background. Clinical weekly counts are Poisson
//! around a share of weekly incidence.
//!
//! Every random draw comes from a ChaCha8 stream keyed by
//! (seed, node, day, stream), so output does not depend on scheduling.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{DateTime, Days, NaiveDate, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::Label;
use crate::detect::DetectorConfig;
use crate::ingest::{ClinicalSeries, GeoMessage, NewsArticle, SymptomLexicon};
use crate::io;
use crate::{Error, NodeId, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub population: u32,
    /// Spread of message locations around the centroid.
    #[serde(default = "default_radius")]
    pub radius_km: f64,
}

fn default_radius() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymptomSpec {
    pub name: String,
    pub phrases: Vec<String>,
    /// Background symptom mentions per person-day, before the reporting rate.
    pub base_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpidemicSpec {
    pub symptom: String,
    pub seed_node: usize,
    pub start_day: usize,
    pub growth_rate: f64,
    pub travel_coupling: f64,
    #[serde(default = "default_seed_size")]
    pub seed_size: f64,
    /// Share of a node's population the outbreak can reach before it declines.
    #[serde(default = "default_capacity")]
    pub capacity: f64,
    /// Word attached to some outbreak messages and to news coverage.
    #[serde(default)]
    pub label: Option<String>,
}

fn default_seed_size() -> f64 {
    5.0
}

fn default_capacity() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub name: String,
    pub symptoms: Vec<String>,
    /// Share of incidence that reaches a clinical record.
    pub clinical_rate: f64,
    /// Weekly background consultations per person.
    #[serde(default)]
    pub background_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    pub start_date: NaiveDate,
    pub days: usize,
    pub nodes: Vec<NodeSpec>,
    /// Daily traveller means from row node to column node. When absent a
    /// gravity model scaled by `movement_scale` is used.
    pub movement_rates: Option<Vec<Vec<f64>>>,
    pub movement_scale: f64,
    pub symptoms: Vec<SymptomSpec>,
    pub epidemics: Vec<EpidemicSpec>,
    pub cases: Vec<CaseSpec>,
    pub reporting_rate: f64,
    pub illness_days: usize,
    /// Non-health messages per user-day.
    pub noise_rate: f64,
    /// Symptom phrases used in a non-health sense, per node-day.
    pub figurative_rate: f64,
    /// Messages far from any node, per day.
    pub outlier_rate: f64,
    /// Unrelated news articles per day.
    pub news_rate: f64,
    pub corpus_size: usize,
}

fn node(name: &str, lat: f64, lon: f64, population: u32) -> NodeSpec {
    NodeSpec {
        name: name.into(),
        lat,
        lon,
        population,
        radius_km: default_radius(),
    }
}

fn symptom(name: &str, phrases: &[&str], base_rate: f64) -> SymptomSpec {
    SymptomSpec {
        name: name.into(),
        phrases: phrases.iter().map(|p| p.to_string()).collect(),
        base_rate,
    }
}

fn epidemic(symptom: &str, seed_node: usize, start_day: usize, growth_rate: f64, label: &str) -> EpidemicSpec {
    EpidemicSpec {
        symptom: symptom.into(),
        seed_node,
        start_day,
        growth_rate,
        travel_coupling: 0.0,
        seed_size: default_seed_size(),
        capacity: default_capacity(),
        label: Some(label.into()),
    }
}

/// Ten nodes laid out like large English and Welsh cities.
pub fn default_nodes() -> Vec<NodeSpec> {
    vec![
        node("london", 51.507, -0.128, 3000),
        node("birmingham", 52.486, -1.890, 1600),
        node("manchester", 53.480, -2.242, 1500),
        node("leeds", 53.801, -1.549, 1200),
        node("liverpool", 53.408, -2.991, 1100),
        node("bristol", 51.455, -2.588, 1000),
        node("sheffield", 53.381, -1.470, 1000),
        node("newcastle", 54.978, -1.618, 900),
        node("nottingham", 52.954, -1.158, 900),
        node("cardiff", 51.481, -3.179, 800),
    ]
}

pub fn default_symptoms() -> Vec<SymptomSpec> {
    vec![
        symptom("sore throat", &["sore throat", "throat hurts", "scratchy throat"], 0.03),
        symptom("tonsillitis", &["tonsillitis", "swollen tonsils"], 0.02),
        symptom("common cold", &["common cold", "head cold", "runny nose"], 0.03),
        symptom("flu", &["flu", "influenza", "man flu"], 0.03),
        symptom("cough", &["cough", "coughing"], 0.03),
        symptom("fever", &["fever", "high temperature"], 0.02),
        symptom("vomiting", &["vomiting", "throwing up"], 0.02),
        symptom("diarrhoea", &["diarrhoea", "diarrhea"], 0.02),
    ]
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 20140211,
            start_date: NaiveDate::from_ymd_opt(2014, 2, 11).expect("valid date"),
            days: 140,
            nodes: default_nodes(),
            movement_rates: None,
            movement_scale: 40.0,
            symptoms: default_symptoms(),
            epidemics: vec![
                EpidemicSpec {
                    travel_coupling: 0.5,
                    ..epidemic("flu", 0, 10, 0.18, "school")
                },
                EpidemicSpec {
                    travel_coupling: 0.5,
                    ..epidemic("cough", 2, 30, 0.15, "office")
                },
                epidemic("vomiting", 5, 60, 0.35, "wedding"),
                epidemic("sore throat", 7, 85, 0.3, "festival"),
            ],
            cases: vec![
                CaseSpec {
                    name: "ILI".into(),
                    symptoms: vec!["flu".into(), "cough".into(), "fever".into(), "sore throat".into()],
                    clinical_rate: 0.3,
                    background_rate: 0.01,
                },
                CaseSpec {
                    name: "GI".into(),
                    symptoms: vec!["vomiting".into(), "diarrhoea".into()],
                    clinical_rate: 0.3,
                    background_rate: 0.005,
                },
            ],
            reporting_rate: 0.1,
            illness_days: 7,
            noise_rate: 0.02,
            figurative_rate: 3.0,
            outlier_rate: 20.0,
            news_rate: 2.0,
            corpus_size: 1500,
        }
    }
}

impl WorldConfig {
    /// 120 days, 10 nodes, one symptom and five well separated outbreaks,
    /// each jumping more than five background standard deviations at onset.
    pub fn detection() -> Self {
        let mut epidemics = Vec::new();
        for (i, (node, day)) in [(1, 25), (3, 40), (5, 55), (7, 75), (9, 95)].into_iter().enumerate() {
            epidemics.push(EpidemicSpec {
                seed_size: 80.0,
                capacity: 0.3,
                ..epidemic("flu", node, day, 0.3, ["school", "office", "wedding", "festival", "hospital"][i])
            });
        }
        Self {
            seed: 6,
            days: 120,
            nodes: default_nodes().into_iter().map(|n| NodeSpec { population: 1500, ..n }).collect(),
            symptoms: vec![symptom("flu", &["flu", "influenza"], 0.04)],
            epidemics,
            cases: vec![CaseSpec {
                name: "ILI".into(),
                symptoms: vec!["flu".into()],
                clinical_rate: 0.3,
                background_rate: 0.01,
            }],
            reporting_rate: 0.5,
            noise_rate: 0.01,
            figurative_rate: 0.5,
            ..Self::default()
        }
    }

    /// Clinical incidence drives tweets in every node through overlapping
    /// outbreak waves of two case types.
    pub fn tracking() -> Self {
        let mut nodes = default_nodes();
        for n in &mut nodes {
            n.population *= 3;
        }
        let mut symptoms: Vec<SymptomSpec> = default_symptoms()
            .into_iter()
            .filter(|s| s.name == "flu" || s.name == "vomiting")
            .collect();
        for s in &mut symptoms {
            s.base_rate = 0.005;
        }
        // Short outbreaks every three weeks, staggered per node.
        let mut epidemics = Vec::new();
        for n in 0..10 {
            for (symptom, label, offset) in [("flu", "school", 2 + 3 * n), ("vomiting", "wedding", 2 + (5 * n + 7) % 20)] {
                let mut day = offset % 22;
                while day < 130 {
                    epidemics.push(EpidemicSpec {
                        seed_size: 3.0,
                        capacity: 0.3,
                        ..epidemic(symptom, n, day, 0.45, label)
                    });
                    day += 22;
                }
            }
        }
        let case = |name: &str, symptom: &str, background_rate: f64| CaseSpec {
            name: name.into(),
            symptoms: vec![symptom.into()],
            clinical_rate: 0.3,
            background_rate,
        };
        Self {
            seed: 7,
            nodes,
            symptoms,
            epidemics,
            cases: vec![case("ILI", "flu", 0.01), case("GI", "vomiting", 0.005)],
            reporting_rate: 4.0,
            noise_rate: 0.01,
            ..Self::default()
        }
    }

    /// Strong movement between nodes, with outbreaks of five symptoms that
    /// spread from their seed node to the rest of the network.
    pub fn forecasting() -> Self {
        let groups = ["sore throat", "tonsillitis", "common cold", "flu", "cough"];
        let mut epidemics = Vec::new();
        for (i, s) in groups.iter().enumerate() {
            for wave in 0..3 {
                epidemics.push(EpidemicSpec {
                    travel_coupling: 0.6,
                    seed_size: 5.0,
                    capacity: 0.08,
                    ..epidemic(s, (2 * i + 3 * wave) % 10, 3 + 40 * wave + 4 * i, 0.2, "school")
                });
            }
        }
        Self {
            seed: 8,
            days: 140,
            movement_scale: 150.0,
            epidemics,
            noise_rate: 0.005,
            figurative_rate: 0.5,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "detection" => Ok(Self::detection()),
            "tracking" => Ok(Self::tracking()),
            "forecasting" => Ok(Self::forecasting()),
            other => Err(Error::config("preset", format!("unknown preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |field: &str, v: f64| -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be finite and non-negative, got {v}")))
            }
        };
        if self.days < 70 {
            return Err(Error::config("days", "at least 70 days are required"));
        }
        if self.nodes.is_empty() {
            return Err(Error::config("nodes", "at least one node is required"));
        }
        for n in &self.nodes {
            if !(-90.0..=90.0).contains(&n.lat) || !(-180.0..=180.0).contains(&n.lon) {
                return Err(Error::config("nodes", format!("{} has invalid coordinates", n.name)));
            }
            if n.population == 0 {
                return Err(Error::config("nodes", format!("{} has zero population", n.name)));
            }
            nonneg("nodes.radius_km", n.radius_km)?;
        }
        if let Some(m) = &self.movement_rates {
            if m.len() != self.nodes.len() || m.iter().any(|r| r.len() != self.nodes.len()) {
                return Err(Error::config("movement_rates", "must be a square matrix over the nodes"));
            }
            for v in m.iter().flatten() {
                nonneg("movement_rates", *v)?;
            }
        }
        nonneg("movement_scale", self.movement_scale)?;
        let names: BTreeSet<&str> = self.symptoms.iter().map(|s| s.name.as_str()).collect();
        if names.len() != self.symptoms.len() {
            return Err(Error::config("symptoms", "duplicate symptom name"));
        }
        for s in &self.symptoms {
            nonneg("symptoms.base_rate", s.base_rate)?;
        }
        self.lexicon().map_err(|e| Error::config("symptoms", e.to_string()))?;
        for e in &self.epidemics {
            if e.seed_node >= self.nodes.len() {
                return Err(Error::config("epidemics.seed_node", format!("node {} does not exist", e.seed_node)));
            }
            if !names.contains(e.symptom.as_str()) {
                return Err(Error::config("epidemics.symptom", format!("unknown symptom '{}'", e.symptom)));
            }
            if e.start_day >= self.days {
                return Err(Error::config("epidemics.start_day", "must fall inside the simulated period"));
            }
            nonneg("epidemics.travel_coupling", e.travel_coupling)?;
            nonneg("epidemics.seed_size", e.seed_size)?;
            nonneg("epidemics.capacity", e.capacity)?;
            if !e.growth_rate.is_finite() {
                return Err(Error::config("epidemics.growth_rate", "must be finite"));
            }
        }
        for c in &self.cases {
            for s in &c.symptoms {
                if !names.contains(s.as_str()) {
                    return Err(Error::config("cases.symptoms", format!("unknown symptom '{s}'")));
                }
            }
            nonneg("cases.clinical_rate", c.clinical_rate)?;
            nonneg("cases.background_rate", c.background_rate)?;
        }
        nonneg("reporting_rate", self.reporting_rate)?;
        nonneg("noise_rate", self.noise_rate)?;
        nonneg("figurative_rate", self.figurative_rate)?;
        nonneg("outlier_rate", self.outlier_rate)?;
        nonneg("news_rate", self.news_rate)?;
        if self.illness_days == 0 {
            return Err(Error::config("illness_days", "must be positive"));
        }
        Ok(())
    }

    pub fn lexicon(&self) -> Result<SymptomLexicon> {
        SymptomLexicon::new(
            self.symptoms
                .iter()
                .map(|s| (s.name.clone(), s.phrases.clone()))
                .collect(),
        )
    }

    /// Daily traveller means `rates[from][to]`.
    pub fn movement(&self) -> Vec<Vec<f64>> {
        if let Some(m) = &self.movement_rates {
            return m.clone();
        }
        let total: f64 = self.nodes.iter().map(|n| f64::from(n.population)).sum();
        let n = self.nodes.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let a = &self.nodes[i];
                let b = &self.nodes[j];
                let d = crate::locnet::haversine_km((a.lat, a.lon), (b.lat, b.lon));
                m[i][j] = self.movement_scale * f64::from(a.population) * f64::from(b.population)
                    / (total * total)
                    * n as f64
                    / (1.0 + d / 100.0);
            }
        }
        m
    }
}

/// Latent state for one (node, symptom).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSeries {
    pub node_id: NodeId,
    pub symptom: String,
    pub incidence: Vec<f64>,
    pub symptomatic: Vec<f64>,
    pub expected_background: Vec<f64>,
    pub expected_epidemic: Vec<f64>,
    /// Symptom messages emitted.
    pub drawn: Vec<u32>,
}

impl TruthSeries {
    pub fn expected(&self) -> Vec<f64> {
        self.expected_background
            .iter()
            .zip(&self.expected_epidemic)
            .map(|(a, b)| a + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDraws {
    pub node_id: NodeId,
    pub noise: Vec<u32>,
    pub figurative: Vec<u32>,
    /// Messages posted by travellers who live at this node (two per traveller).
    pub travel: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub epidemic: usize,
    pub symptom: String,
    pub node_id: NodeId,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthNode {
    pub node_id: NodeId,
    pub name: String,
    pub centroid: (f64, f64),
    pub population: u32,
}

/// Ground truth written next to the observable outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub start: NaiveDate,
    pub days: usize,
    pub nodes: Vec<TruthNode>,
    pub injections: Vec<Injection>,
    pub series: Vec<TruthSeries>,
    pub draws: Vec<NodeDraws>,
    pub outliers: Vec<u32>,
}

impl Truth {
    pub fn date(&self, t: usize) -> NaiveDate {
        self.start + Days::new(t as u64)
    }

    /// Sum of every recorded draw; equals the number of messages emitted.
    pub fn total_messages(&self) -> u64 {
        let s: u64 = self.series.iter().flat_map(|s| &s.drawn).map(|&v| u64::from(v)).sum();
        let d: u64 = self
            .draws
            .iter()
            .flat_map(|d| d.noise.iter().chain(&d.figurative).chain(&d.travel))
            .map(|&v| u64::from(v))
            .sum();
        s + d + self.outliers.iter().map(|&v| u64::from(v)).sum::<u64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub messages: Vec<GeoMessage>,
    pub clinical: Vec<ClinicalSeries>,
    pub truth: Truth,
    pub lexicon: SymptomLexicon,
    /// Labelled training texts for the message classifier.
    pub corpus: Vec<(String, Label)>,
    /// Region name and centroid for each node.
    pub regions: Vec<(String, f64, f64)>,
    pub news: Vec<NewsArticle>,
}

const HEALTH_WORDS: &[&str] = &[
    "feeling", "awful", "today", "bed", "doctor", "ill", "rough", "poorly", "medicine", "tired", "achy", "cant",
    "sleep", "home", "tea", "paracetamol", "ugh", "again", "worst", "symptoms", "pharmacy", "sick", "day",
];
const OTHER_WORDS: &[&str] = &[
    "match", "goal", "football", "song", "music", "party", "tonight", "weekend", "lol", "love", "game", "team",
    "album", "club", "fans", "night", "pub", "dance", "movie", "traffic", "train", "coffee", "weather", "sunny",
    "shopping", "concert", "season", "league", "friends", "dinner", "holiday", "city", "new", "great",
];
const NEWS_WORDS: &[&str] = &[
    "council", "budget", "election", "transport", "housing", "business", "sport", "policy", "minister",
    "economy", "market", "report", "plans", "local", "residents", "announced",
];

/// Streams within one (node, day) cell.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Symptom = 1,
    Noise = 2,
    Figurative = 3,
    Travel = 4,
    Outlier = 5,
    Clinical = 6,
    News = 7,
    Corpus = 8,
}

fn rng_for(seed: u64, node: u64, day: u64, stream: Stream, sub: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&node.to_le_bytes());
    key[16..24].copy_from_slice(&day.to_le_bytes());
    key[24..32].copy_from_slice(&((stream as u64) << 48 | sub).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).map(|p| p.sample(rng) as u32).unwrap_or(0)
}

fn words(rng: &mut ChaCha8Rng, pool: &[&str], n: usize) -> Vec<String> {
    (0..n).map(|_| pool.choose(rng).expect("non-empty pool").to_string()).collect()
}

fn health_text(rng: &mut ChaCha8Rng, phrase: &str, extra: &[String]) -> String {
    let k = rng.random_range(2..5);
    let mut w = words(rng, HEALTH_WORDS, k);
    let at = rng.random_range(0..=w.len());
    w.insert(at, phrase.to_string());
    w.extend(extra.iter().cloned());
    w.join(" ")
}

fn other_text(rng: &mut ChaCha8Rng, phrase: Option<&str>) -> String {
    let k = rng.random_range(3..7);
    let mut w = words(rng, OTHER_WORDS, k);
    if let Some(p) = phrase {
        let at = rng.random_range(0..=w.len());
        w.insert(at, p.to_string());
    }
    w.join(" ")
}

/// Uniform time within the day.
fn timestamp(rng: &mut ChaCha8Rng, date: NaiveDate) -> DateTime<Utc> {
    let secs = rng.random_range(0..86_400u32);
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight")) + chrono::Duration::seconds(i64::from(secs))
}

/// Point scattered around a centroid with the given spread.
fn jitter(rng: &mut ChaCha8Rng, lat: f64, lon: f64, radius_km: f64) -> (f64, f64) {
    let sd = (radius_km / 2.0).max(1e-6);
    let n = Normal::new(0.0, sd).expect("positive sd");
    let dy: f64 = n.sample(rng);
    let dx: f64 = n.sample(rng);
    let lat2 = (lat + dy / 111.32).clamp(-90.0, 90.0);
    let lon2 = lon + dx / (111.32 * lat.to_radians().cos().max(1e-6));
    let lon2 = ((lon2 + 180.0).rem_euclid(360.0)) - 180.0;
    (round6(lat2), round6(lon2))
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Runs the latent dynamics: per (epidemic, node, day) incidence.
fn latent(cfg: &WorldConfig, rates: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
    let n = cfg.nodes.len();
    let pops: Vec<f64> = cfg.nodes.iter().map(|x| f64::from(x.population)).collect();
    cfg.epidemics
        .iter()
        .map(|e| {
            let mut inc = vec![vec![0.0; cfg.days]; n];
            let mut cumulative = vec![0.0; n];
            inc[e.seed_node][e.start_day] = e.seed_size;
            cumulative[e.seed_node] = e.seed_size;
            for t in e.start_day..cfg.days - 1 {
                let from = (t + 1).saturating_sub(cfg.illness_days);
                let prevalence: Vec<f64> = inc.iter().map(|row| row[from..=t].iter().sum()).collect();
                for j in 0..n {
                    let room = if e.capacity > 0.0 {
                        (1.0 - cumulative[j] / (e.capacity * pops[j])).max(0.0)
                    } else {
                        0.0
                    };
                    let own = inc[j][t] * (e.growth_rate * (2.0 * room - 1.0)).exp();
                    let own = if e.growth_rate == 0.0 { inc[j][t] } else { own };
                    let import: f64 = (0..n)
                        .filter(|&m| m != j)
                        .map(|m| rates[m][j] * prevalence[m] / pops[m])
                        .sum::<f64>()
                        * e.travel_coupling;
                    let mut next = own + import;
                    if e.capacity > 0.0 {
                        next = next.min((e.capacity * pops[j] - cumulative[j]).max(0.0));
                    }
                    inc[j][t + 1] = next;
                    cumulative[j] += next;
                }
            }
            inc
        })
        .collect()
}

fn windowed_sum(xs: &[f64], width: usize) -> Vec<f64> {
    (0..xs.len())
        .map(|t| xs[(t + 1).saturating_sub(width)..=t].iter().sum())
        .collect()
}

/// Generates a world. The result is a pure function of the configuration.
pub fn generate(cfg: &WorldConfig) -> Result<World> {
    cfg.validate()?;
    let lexicon = cfg.lexicon()?;
    let n = cfg.nodes.len();
    let rates = cfg.movement();
    let incidence = latent(cfg, &rates);
    let date = |t: usize| cfg.start_date + Days::new(t as u64);

    // per (node, symptom) latent totals
    let mut series = Vec::new();
    for (j, node) in cfg.nodes.iter().enumerate() {
        for s in &cfg.symptoms {
            let mut inc = vec![0.0; cfg.days];
            for (e, spec) in cfg.epidemics.iter().enumerate() {
                if spec.symptom == s.name {
                    for (a, b) in inc.iter_mut().zip(&incidence[e][j]) {
                        *a += b;
                    }
                }
            }
            let symptomatic = windowed_sum(&inc, cfg.illness_days);
            let pop = f64::from(node.population);
            series.push(TruthSeries {
                node_id: j as NodeId,
                symptom: s.name.clone(),
                expected_background: vec![cfg.reporting_rate * s.base_rate * pop; cfg.days],
                expected_epidemic: symptomatic.iter().map(|v| cfg.reporting_rate * v).collect(),
                incidence: inc,
                symptomatic,
                drawn: Vec::new(),
            });
        }
    }

    let labels: Vec<Vec<(usize, &str)>> = (0..n)
        .map(|j| {
            cfg.epidemics
                .iter()
                .enumerate()
                .filter_map(|(e, spec)| spec.label.as_deref().map(|l| (e, l)))
                .filter(|(e, _)| incidence[*e][j].iter().any(|v| *v > 0.0))
                .collect()
        })
        .collect();

    // one cell per (node, day): every random draw for that cell
    struct Cell {
        messages: Vec<GeoMessage>,
        drawn: Vec<u32>,
        noise: u32,
        figurative: u32,
        travel: u32,
    }
    let cells: Vec<Cell> = (0..n * cfg.days)
        .into_par_iter()
        .map(|idx| {
            let (j, t) = (idx / cfg.days, idx % cfg.days);
            let node = &cfg.nodes[j];
            let d = date(t);
            let (nid, tid) = (j as u64, t as u64);
            let user = |rng: &mut ChaCha8Rng| format!("u{j}-{}", rng.random_range(0..node.population));
            let mut messages = Vec::new();
            let mut push = |rng: &mut ChaCha8Rng, user_id: String, at: (f64, f64, f64), text: String, tag: &str, k: usize| {
                let (lat, lon) = jitter(rng, at.0, at.1, at.2);
                messages.push(GeoMessage {
                    id: format!("m{j}-{t}-{tag}{k}"),
                    user_id,
                    timestamp: timestamp(rng, d),
                    lat,
                    lon,
                    text,
                });
            };
            let home = (node.lat, node.lon, node.radius_km);

            let mut drawn = Vec::with_capacity(cfg.symptoms.len());
            for (si, s) in cfg.symptoms.iter().enumerate() {
                let ts = &series[j * cfg.symptoms.len() + si];
                let mut rng = rng_for(cfg.seed, nid, tid, Stream::Symptom, si as u64);
                let bg = poisson(&mut rng, ts.expected_background[t]);
                let ep = poisson(&mut rng, ts.expected_epidemic[t]);
                for k in 0..(bg + ep) as usize {
                    let phrase = s.phrases.choose(&mut rng).expect("validated phrases");
                    let mut extra = Vec::new();
                    if k >= bg as usize {
                        // outbreak messages may carry the outbreak's word and tag
                        let own: Vec<&str> = labels[j]
                            .iter()
                            .filter(|(e, _)| cfg.epidemics[*e].symptom == s.name)
                            .map(|(_, l)| *l)
                            .collect();
                        if let Some(l) = own.choose(&mut rng) {
                            if rng.random_bool(0.5) {
                                extra.push(l.to_string());
                            }
                            if rng.random_bool(0.2) {
                                extra.push(format!("#{l}outbreak"));
                            }
                        }
                    }
                    let text = health_text(&mut rng, phrase, &extra);
                    let u = user(&mut rng);
                    push(&mut rng, u, home, text, &format!("s{si}-"), k);
                }
                drawn.push(bg + ep);
            }

            let mut rng = rng_for(cfg.seed, nid, tid, Stream::Noise, 0);
            let noise = poisson(&mut rng, cfg.noise_rate * f64::from(node.population));
            for k in 0..noise as usize {
                let text = other_text(&mut rng, None);
                let u = user(&mut rng);
                push(&mut rng, u, home, text, "n", k);
            }

            let mut rng = rng_for(cfg.seed, nid, tid, Stream::Figurative, 0);
            let figurative = poisson(&mut rng, cfg.figurative_rate);
            for k in 0..figurative as usize {
                let s = cfg.symptoms.choose(&mut rng).expect("validated symptoms");
                let phrase = s.phrases.choose(&mut rng).expect("validated phrases").clone();
                let text = other_text(&mut rng, Some(&phrase));
                let u = user(&mut rng);
                push(&mut rng, u, home, text, "f", k);
            }

            let mut travel = 0;
            for (m, dest) in cfg.nodes.iter().enumerate() {
                if m == j {
                    continue;
                }
                let mut rng = rng_for(cfg.seed, nid, tid, Stream::Travel, m as u64);
                let trips = poisson(&mut rng, rates[j][m]);
                for k in 0..trips as usize {
                    let u = user(&mut rng);
                    let a = other_text(&mut rng, None);
                    push(&mut rng, u.clone(), home, a, &format!("t{m}-a"), k);
                    let b = other_text(&mut rng, None);
                    push(&mut rng, u, (dest.lat, dest.lon, dest.radius_km), b, &format!("t{m}-b"), k);
                }
                travel += 2 * trips;
            }
            Cell {
                messages,
                drawn,
                noise,
                figurative,
                travel,
            }
        })
        .collect();

    // outliers scattered over the bounding box of the nodes, widened
    let (lat_lo, lat_hi, lon_lo, lon_hi) = cfg.nodes.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), x| (a.min(x.lat), b.max(x.lat), c.min(x.lon), d.max(x.lon)),
    );
    let mut outliers = Vec::with_capacity(cfg.days);
    let mut messages: Vec<GeoMessage> = Vec::new();
    for t in 0..cfg.days {
        let mut rng = rng_for(cfg.seed, u64::MAX, t as u64, Stream::Outlier, 0);
        let k = poisson(&mut rng, cfg.outlier_rate);
        for i in 0..k as usize {
            let lat = (rng.random_range(lat_lo - 0.5..=lat_hi + 0.5)).clamp(-90.0, 90.0);
            let lon = (rng.random_range(lon_lo - 0.5..=lon_hi + 0.5)).clamp(-180.0, 180.0);
            let text = other_text(&mut rng, None);
            messages.push(GeoMessage {
                id: format!("x{t}-{i}"),
                user_id: format!("x{}", rng.random_range(0..10_000u32)),
                timestamp: timestamp(&mut rng, date(t)),
                lat: round6(lat),
                lon: round6(lon),
                text,
            });
        }
        outliers.push(k);
    }

    let mut draws: Vec<NodeDraws> = (0..n)
        .map(|j| NodeDraws {
            node_id: j as NodeId,
            noise: Vec::with_capacity(cfg.days),
            figurative: Vec::with_capacity(cfg.days),
            travel: Vec::with_capacity(cfg.days),
        })
        .collect();
    for (idx, cell) in cells.into_iter().enumerate() {
        let j = idx / cfg.days;
        for (si, c) in cell.drawn.iter().enumerate() {
            series[j * cfg.symptoms.len() + si].drawn.push(*c);
        }
        draws[j].noise.push(cell.noise);
        draws[j].figurative.push(cell.figurative);
        draws[j].travel.push(cell.travel);
        messages.extend(cell.messages);
    }
    messages.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));

    let clinical = clinical_series(cfg, &series);
    let injections = cfg
        .epidemics
        .iter()
        .enumerate()
        .map(|(e, s)| Injection {
            epidemic: e,
            symptom: s.symptom.clone(),
            node_id: s.seed_node as NodeId,
            date: date(s.start_day),
        })
        .collect();
    let truth = Truth {
        seed: cfg.seed,
        start: cfg.start_date,
        days: cfg.days,
        nodes: cfg
            .nodes
            .iter()
            .enumerate()
            .map(|(j, x)| TruthNode {
                node_id: j as NodeId,
                name: x.name.clone(),
                centroid: (x.lat, x.lon),
                population: x.population,
            })
            .collect(),
        injections,
        series,
        draws,
        outliers,
    };
    Ok(World {
        corpus: corpus(cfg),
        regions: cfg.nodes.iter().map(|x| (x.name.clone(), x.lat, x.lon)).collect(),
        news: news(cfg, &incidence),
        config: cfg.clone(),
        messages,
        clinical,
        truth,
        lexicon,
    })
}

/// Weekly clinical counts per (node region, case), week ending on day 6, 13, ...
fn clinical_series(cfg: &WorldConfig, series: &[TruthSeries]) -> Vec<ClinicalSeries> {
    let mut out = Vec::new();
    for (ci, case) in cfg.cases.iter().enumerate() {
        for (j, node) in cfg.nodes.iter().enumerate() {
            let inc: Vec<f64> = (0..cfg.days)
                .map(|t| {
                    series
                        .iter()
                        .filter(|s| s.node_id == j as NodeId && case.symptoms.contains(&s.symptom))
                        .map(|s| s.incidence[t])
                        .sum()
                })
                .collect();
            let mut points = Vec::new();
            let mut end = 6;
            while end < cfg.days {
                let week: f64 = inc[end - 6..=end].iter().sum();
                let lambda = case.clinical_rate * week + case.background_rate * f64::from(node.population);
                let mut rng = rng_for(cfg.seed, j as u64, end as u64, Stream::Clinical, ci as u64);
                points.push((cfg.start_date + Days::new(end as u64), u64::from(poisson(&mut rng, lambda))));
                end += 7;
            }
            out.push(ClinicalSeries {
                case_type: case.name.clone(),
                region: node.name.clone(),
                points,
            });
        }
    }
    out
}

fn corpus(cfg: &WorldConfig) -> Vec<(String, Label)> {
    let mut rng = rng_for(cfg.seed, u64::MAX, u64::MAX, Stream::Corpus, 0);
    let mut out = Vec::with_capacity(cfg.corpus_size);
    for i in 0..cfg.corpus_size {
        let s = cfg.symptoms.choose(&mut rng).expect("validated symptoms");
        let phrase = s.phrases.choose(&mut rng).expect("validated phrases");
        if i % 2 == 0 {
            out.push((health_text(&mut rng, phrase, &[]), Label::Health));
        } else if i % 4 == 1 {
            out.push((other_text(&mut rng, Some(phrase)), Label::Other));
        } else {
            out.push((other_text(&mut rng, None), Label::Other));
        }
    }
    out
}

fn news(cfg: &WorldConfig, incidence: &[Vec<Vec<f64>>]) -> Vec<NewsArticle> {
    let mut out = Vec::new();
    for t in 0..cfg.days {
        let d = cfg.start_date + Days::new(t as u64);
        let mut rng = rng_for(cfg.seed, u64::MAX - 1, t as u64, Stream::News, 0);
        for k in 0..poisson(&mut rng, cfg.news_rate) {
            out.push(NewsArticle {
                id: format!("a{t}-{k}"),
                source: "wire".into(),
                timestamp: timestamp(&mut rng, d),
                title: words(&mut rng, NEWS_WORDS, 3).join(" "),
                body: words(&mut rng, NEWS_WORDS, 20).join(" "),
            });
        }
    }
    // coverage of each labelled outbreak a few days after it takes hold
    for (e, spec) in cfg.epidemics.iter().enumerate() {
        let Some(label) = &spec.label else { continue };
        let node = &cfg.nodes[spec.seed_node];
        let peak = (0..cfg.days).max_by(|a, b| incidence[e][spec.seed_node][*a].total_cmp(&incidence[e][spec.seed_node][*b]));
        let Some(peak) = peak else { continue };
        let mut rng = rng_for(cfg.seed, u64::MAX - 2, e as u64, Stream::News, 0);
        let phrase = cfg
            .symptoms
            .iter()
            .find(|s| s.name == spec.symptom)
            .and_then(|s| s.phrases.first())
            .cloned()
            .unwrap_or_default();
        let mut body = vec![format!("{label} outbreak in {} as cases of {phrase} rise", node.name)];
        body.extend(words(&mut rng, NEWS_WORDS, 8));
        body.push(format!("health officials say the {label} {phrase} outbreak is being monitored"));
        out.push(NewsArticle {
            id: format!("o{e}"),
            source: "health-desk".into(),
            timestamp: timestamp(&mut rng, cfg.start_date + Days::new(peak as u64)),
            title: format!("{label} {phrase} outbreak in {}", node.name),
            body: body.join(" "),
        });
    }
    out.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
    out
}

/// A day on which the noise-free expected counts warrant an alarm.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TruthAlarm {
    pub date: NaiveDate,
    pub node_id: NodeId,
    pub symptom: String,
}

/// Applies the detector's rule to expected rather than observed counts.
///
/// The baseline spread is the Poisson variance plus the variance of the
/// expected values, so the statistic is the one a detector sees on
/// average. Only days with a positive outbreak contribution qualify.
pub fn truth_alarms(truth: &Truth, sigma_threshold: f64) -> Vec<TruthAlarm> {
    let cfg = DetectorConfig::default();
    let mut out = Vec::new();
    for s in &truth.series {
        let e = s.expected();
        for t in cfg.warmup()..e.len() {
            if s.expected_epidemic[t] <= 0.0 {
                continue;
            }
            let end = t - cfg.guard_days;
            let base = &e[end - cfg.baseline_days..end];
            let mean = base.iter().sum::<f64>() / base.len() as f64;
            let var = base.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (base.len() - 1) as f64;
            let sd = (mean + var).sqrt().max(cfg.sd_floor);
            let z = (e[t] - mean) / sd;
            let med = crate::detect::trailing_median(&e, t, cfg.median_window);
            if z >= sigma_threshold && e[t] >= f64::from(cfg.min_count) && e[t] >= cfg.median_ratio * med {
                out.push(TruthAlarm {
                    date: truth.date(t),
                    node_id: s.node_id,
                    symptom: s.symptom.clone(),
                });
            }
        }
    }
    out.sort();
    out
}

/// Writes every artefact of a world into `dir`.
pub fn write_world(world: &World, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_atomic(&dir.join("messages.ndjson"), &io::to_ndjson(&world.messages)?)?;
    io::write_atomic(&dir.join("clinical.csv"), &crate::ingest::write_clinical(&world.clinical)?)?;
    io::write_json(&dir.join("truth.json"), &world.truth)?;
    io::write_atomic(&dir.join("lexicon.json"), world.lexicon.to_json()?.as_bytes())?;
    io::write_atomic(&dir.join("news.ndjson"), &io::to_ndjson(&world.news)?)?;
    io::write_json(&dir.join("world.json"), &world.config)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["text", "label"])?;
    for (text, label) in &world.corpus {
        w.write_record([text.as_str(), &label.to_string()])?;
    }
    io::write_atomic(&dir.join("corpus.csv"), &w.into_inner().map_err(|e| Error::invalid(e.to_string()))?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["region", "lat", "lon"])?;
    for (name, lat, lon) in &world.regions {
        w.write_record([name.clone(), lat.to_string(), lon.to_string()])?;
    }
    io::write_atomic(&dir.join("regions.csv"), &w.into_inner().map_err(|e| Error::invalid(e.to_string()))?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig {
            nodes: default_nodes().into_iter().take(3).collect(),
            epidemics: vec![EpidemicSpec {
                seed_size: 20.0,
                ..epidemic("flu", 1, 20, 0.6, "school")
            }],
            days: 70,
            noise_rate: 0.005,
            outlier_rate: 2.0,
            corpus_size: 50,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn static_epidemic() {
        let cfg = WorldConfig {
            epidemics: vec![EpidemicSpec {
                growth_rate: 0.0,
                travel_coupling: 0.0,
                seed_size: 7.0,
                capacity: 10.0,
                ..epidemic("flu", 1, 5, 0.0, "x")
            }],
            ..small()
        };
        let w = generate(&cfg).unwrap();
        for s in w.truth.series.iter().filter(|s| s.symptom == "flu") {
            for (t, v) in s.incidence.iter().enumerate() {
                let want = if s.node_id == 1 && t >= 5 { 7.0 } else { 0.0 };
                assert_eq!(*v, want, "node {} day {t}", s.node_id);
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        write_world(&a, dir_a.path()).unwrap();
        write_world(&b, dir_b.path()).unwrap();
        for f in ["messages.ndjson", "clinical.csv", "truth.json", "corpus.csv", "news.ndjson", "regions.csv"] {
            assert_eq!(
                std::fs::read(dir_a.path().join(f)).unwrap(),
                std::fs::read(dir_b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let other = generate(&WorldConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(other.messages, a.messages);
    }

    #[test]
    fn thread_count_irrelevant() {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| generate(&small()).unwrap());
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conservation() {
        let w = generate(&small()).unwrap();
        assert_eq!(w.truth.total_messages(), w.messages.len() as u64);
        let ids: BTreeSet<&str> = w.messages.iter().map(|m| m.id.as_str()).collect();
        assert_eq!(ids.len(), w.messages.len());
        for m in &w.messages {
            m.validate().unwrap();
        }
    }

    #[test]
    fn noiseless_messages_all_match() {
        let cfg = WorldConfig {
            noise_rate: 0.0,
            figurative_rate: 0.0,
            outlier_rate: 0.0,
            movement_scale: 0.0,
            ..small()
        };
        let w = generate(&cfg).unwrap();
        assert!(!w.messages.is_empty());
        for m in &w.messages {
            assert!(!w.lexicon.match_symptoms(&m.text).is_empty(), "{}", m.text);
        }
    }

    #[test]
    fn noise_never_matches() {
        let mut rng = rng_for(1, 2, 3, Stream::Noise, 0);
        let lex = WorldConfig::default().lexicon().unwrap();
        for _ in 0..500 {
            assert!(lex.match_symptoms(&other_text(&mut rng, None)).is_empty());
        }
    }

    #[test]
    fn reporting_rate_scales_counts() {
        let base = WorldConfig {
            epidemics: vec![],
            ..small()
        };
        let doubled = WorldConfig {
            reporting_rate: 2.0 * base.reporting_rate,
            ..base.clone()
        };
        let total = |w: &World| -> f64 { w.truth.series.iter().flat_map(|s| &s.drawn).map(|&c| f64::from(c)).sum() };
        let a = generate(&base).unwrap();
        let b = generate(&doubled).unwrap();
        // 3 nodes x 70 days x 8 symptoms = 1680 node-days
        let ratio = total(&b) / total(&a);
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn truth_alarms_cases() {
        let quiet = generate(&WorldConfig {
            epidemics: vec![],
            ..small()
        })
        .unwrap();
        assert!(truth_alarms(&quiet.truth, 3.0).is_empty());

        let one = generate(&small()).unwrap();
        let alarms = truth_alarms(&one.truth, 3.0);
        assert!(!alarms.is_empty());
        let first = alarms[0].date;
        let start = one.truth.injections[0].date;
        assert!((first - start).num_days().abs() <= 1 || first > start, "{first} vs {start}");
        assert!(alarms.iter().all(|a| a.symptom == "flu"));

        let two = generate(&WorldConfig {
            epidemics: vec![
                EpidemicSpec { capacity: 0.08, seed_size: 20.0, ..epidemic("flu", 0, 15, 0.6, "a") },
                EpidemicSpec { capacity: 0.08, seed_size: 20.0, ..epidemic("flu", 0, 50, 0.6, "b") },
            ],
            ..small()
        })
        .unwrap();
        let dates: Vec<NaiveDate> = truth_alarms(&two.truth, 3.0).iter().map(|a| a.date).collect();
        let d0 = two.truth.start;
        assert!(dates.iter().any(|d| (*d - d0).num_days() < 40));
        assert!(dates.iter().any(|d| (*d - d0).num_days() >= 50));
        assert!(dates.iter().all(|d| !(40..50).contains(&(*d - d0).num_days())), "{dates:?}");
    }

    #[test]
    fn single_injection_starts_near_start_day() {
        let w = generate(&WorldConfig {
            epidemics: vec![EpidemicSpec { seed_size: 40.0, ..epidemic("flu", 0, 30, 0.4, "a") }],
            ..small()
        })
        .unwrap();
        let a = truth_alarms(&w.truth, 3.0);
        let offset = (a[0].date - w.truth.start).num_days();
        assert!((29..=31).contains(&offset), "{offset}");
    }

    #[test]
    fn config_errors_name_field() {
        let bad = WorldConfig {
            epidemics: vec![epidemic("flu", 9, 5, 0.1, "x")],
            ..small()
        };
        match generate(&bad) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "epidemics.seed_node"),
            other => panic!("{other:?}"),
        }
        assert!(WorldConfig { days: 30, ..small() }.validate().is_err());
        assert!(WorldConfig { reporting_rate: -1.0, ..small() }.validate().is_err());
        for p in ["default", "detection", "tracking", "forecasting"] {
            WorldConfig::preset(p).unwrap().validate().unwrap();
        }
        assert!(WorldConfig::preset("x").is_err());
    }

    #[test]
    fn clinical_weeks() {
        let w = generate(&small()).unwrap();
        assert_eq!(w.clinical.len(), 2 * 3);
        for c in &w.clinical {
            c.validate().unwrap();
            assert_eq!(c.points[0].0, w.truth.start + Days::new(6));
            assert_eq!(c.points.len(), 10);
        }
    }
}
