//! Input records, symptom lexicon matching, daily symptom panels and
//! weekly-to-daily interpolation of clinical counts.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::BufRead;

use chrono::{DateTime, Duration, NaiveDate, SecondsFormat, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::text::tokenize;
use crate::{Error, NodeId, Result};

/// RFC 3339 timestamps at second resolution, always written with a `Z` suffix.
pub mod rfc3339 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn format(ts: &DateTime<Utc>) -> String {
        ts.to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    pub fn parse(s: &str) -> std::result::Result<DateTime<Utc>, String> {
        let ts = DateTime::parse_from_rfc3339(s).map_err(|e| format!("bad timestamp {s:?}: {e}"))?;
        if ts.nanosecond() != 0 {
            return Err(format!("timestamp {s:?} has sub-second precision"));
        }
        Ok(ts.with_timezone(&Utc))
    }

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoMessage {
    pub id: String,
    pub user_id: String,
    #[serde(with = "rfc3339")]
    pub timestamp: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub text: String,
}

impl GeoMessage {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("message id is empty"));
        }
        if !(self.lat.is_finite() && (-90.0..=90.0).contains(&self.lat)) {
            return Err(Error::invalid(format!("message {}: lat {} out of range", self.id, self.lat)));
        }
        if !(self.lon.is_finite() && (-180.0..=180.0).contains(&self.lon)) {
            return Err(Error::invalid(format!("message {}: lon {} out of range", self.id, self.lon)));
        }
        Ok(())
    }

    /// UTC calendar date of the message.
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

/// A message together with the symptom groups it matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedMessage {
    #[serde(flatten)]
    pub message: GeoMessage,
    pub symptoms: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecordFormat {
    /// One JSON object per line.
    #[default]
    Ndjson,
    /// CSV with header `id,user_id,timestamp,lat,lon,text`.
    Csv,
}

#[derive(Debug)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub malformed: usize,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Self {
            records: Vec::new(),
            malformed: 0,
        }
    }
}

#[derive(Deserialize)]
struct CsvMessage {
    id: String,
    user_id: String,
    timestamp: String,
    lat: f64,
    lon: f64,
    text: String,
}

/// Parses messages, skipping (and counting) malformed or duplicate-id records.
pub fn parse_messages<R: BufRead>(reader: R, format: RecordFormat) -> Result<Parsed<GeoMessage>> {
    let mut out = Parsed::default();
    let mut seen = HashSet::new();
    let mut accept = |candidate: std::result::Result<GeoMessage, String>, line: usize, out: &mut Parsed<GeoMessage>| {
        let msg = candidate.and_then(|m| {
            m.validate().map_err(|e| e.to_string())?;
            if !seen.insert(m.id.clone()) {
                return Err(format!("duplicate id {}", m.id));
            }
            Ok(m)
        });
        match msg {
            Ok(m) => out.records.push(m),
            Err(e) => {
                out.malformed += 1;
                log::warn!("skipping malformed message at line {line}: {e}");
            }
        }
    };
    match format {
        RecordFormat::Ndjson => {
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed = serde_json::from_str::<GeoMessage>(&line).map_err(|e| e.to_string());
                accept(parsed, i + 1, &mut out);
            }
        }
        RecordFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
            for (i, rec) in rdr.deserialize::<CsvMessage>().enumerate() {
                let rec = match rec {
                    Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(Error::Csv(e)),
                    other => other,
                };
                let parsed = rec.map_err(|e| e.to_string()).and_then(|r| {
                    Ok(GeoMessage {
                        timestamp: rfc3339::parse(&r.timestamp)?,
                        id: r.id,
                        user_id: r.user_id,
                        lat: r.lat,
                        lon: r.lon,
                        text: r.text,
                    })
                });
                accept(parsed, i + 2, &mut out);
            }
        }
    }
    Ok(out)
}

/// Symptom name -> keyword phrases, matched as whole token sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SymptomLexicon {
    groups: BTreeMap<String, Vec<String>>,
    by_first_token: HashMap<String, Vec<(usize, Vec<String>)>>,
    names: Vec<String>,
}

impl SymptomLexicon {
    pub fn new(groups: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut normalized = BTreeMap::new();
        let mut owner: HashMap<Vec<String>, String> = HashMap::new();
        let mut by_first_token: HashMap<String, Vec<(usize, Vec<String>)>> = HashMap::new();
        let names: Vec<String> = groups.keys().cloned().collect();
        for (gi, (name, phrases)) in groups.into_iter().enumerate() {
            if phrases.is_empty() {
                return Err(Error::invalid(format!("symptom group {name:?} has no phrases")));
            }
            let mut kept = Vec::with_capacity(phrases.len());
            for phrase in phrases {
                let phrase = phrase.trim().to_lowercase();
                let tokens = tokenize(&phrase);
                if tokens.is_empty() {
                    return Err(Error::invalid(format!("symptom group {name:?} has an empty phrase")));
                }
                if let Some(prev) = owner.insert(tokens.clone(), name.clone()) {
                    return Err(Error::invalid(format!(
                        "phrase {phrase:?} appears in both {prev:?} and {name:?}"
                    )));
                }
                by_first_token
                    .entry(tokens[0].clone())
                    .or_default()
                    .push((gi, tokens));
                kept.push(phrase);
            }
            normalized.insert(name, kept);
        }
        Ok(Self {
            groups: normalized,
            by_first_token,
            names,
        })
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let groups: BTreeMap<String, Vec<String>> = serde_json::from_str(src)?;
        Self::new(groups)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.groups)?)
    }

    pub fn groups(&self) -> &BTreeMap<String, Vec<String>> {
        &self.groups
    }

    pub fn symptoms(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn phrases(&self, symptom: &str) -> Option<&[String]> {
        self.groups.get(symptom).map(Vec::as_slice)
    }

    /// Every symptom group with at least one phrase occurring in `text`.
    pub fn match_symptoms(&self, text: &str) -> BTreeSet<String> {
        let tokens = tokenize(text);
        let mut hit = vec![false; self.names.len()];
        for (i, tok) in tokens.iter().enumerate() {
            let Some(cands) = self.by_first_token.get(tok) else {
                continue;
            };
            for (gi, phrase) in cands {
                if !hit[*gi] && tokens[i..].starts_with(phrase) {
                    hit[*gi] = true;
                }
            }
        }
        hit.iter()
            .zip(&self.names)
            .filter(|(h, _)| **h)
            .map(|(_, n)| n.clone())
            .collect()
    }
}

/// Free-function form of [`SymptomLexicon::match_symptoms`].
pub fn match_symptoms(text: &str, lexicon: &SymptomLexicon) -> BTreeSet<String> {
    lexicon.match_symptoms(text)
}

/// Daily counts indexed by (node, symptom, date). Missing cells read as zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymptomPanel {
    start: NaiveDate,
    days: usize,
    cells: BTreeMap<(NodeId, String), Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct PanelFile {
    start: NaiveDate,
    days: usize,
    series: Vec<PanelSeries>,
}

#[derive(Serialize, Deserialize)]
struct PanelSeries {
    node: NodeId,
    symptom: String,
    counts: Vec<u32>,
}

impl Serialize for SymptomPanel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PanelFile {
            start: self.start,
            days: self.days,
            series: self
                .cells
                .iter()
                .map(|((node, symptom), counts)| PanelSeries {
                    node: *node,
                    symptom: symptom.clone(),
                    counts: counts.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymptomPanel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = PanelFile::deserialize(d)?;
        let mut panel = SymptomPanel::new(f.start, f.days);
        for s in f.series {
            if s.counts.len() != f.days {
                return Err(serde::de::Error::custom(format!(
                    "series ({}, {}) has {} counts, expected {}",
                    s.node,
                    s.symptom,
                    s.counts.len(),
                    f.days
                )));
            }
            panel.cells.insert((s.node, s.symptom), s.counts);
        }
        Ok(panel)
    }
}

impl SymptomPanel {
    pub fn new(start: NaiveDate, days: usize) -> Self {
        Self {
            start,
            days,
            cells: BTreeMap::new(),
        }
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn days(&self) -> usize {
        self.days
    }

    /// Last covered date (inclusive). Meaningless for an empty panel.
    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(self.days as i64 - 1)
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        self.start + Duration::days(index as i64)
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let off = (date - self.start).num_days();
        (off >= 0 && (off as usize) < self.days).then_some(off as usize)
    }

    pub fn add(&mut self, node: NodeId, symptom: &str, date: NaiveDate, n: u32) {
        let Some(i) = self.index_of(date) else {
            return;
        };
        let days = self.days;
        let series = self
            .cells
            .entry((node, symptom.to_string()))
            .or_insert_with(|| vec![0; days]);
        series[i] += n;
    }

    /// Inserts a whole series; its length must equal `days()`.
    pub fn set_series(&mut self, node: NodeId, symptom: &str, counts: Vec<u32>) -> Result<()> {
        if counts.len() != self.days {
            return Err(Error::invalid(format!(
                "series length {} does not match panel length {}",
                counts.len(),
                self.days
            )));
        }
        self.cells.insert((node, symptom.to_string()), counts);
        Ok(())
    }

    pub fn count(&self, node: NodeId, symptom: &str, date: NaiveDate) -> u32 {
        match (self.index_of(date), self.cells.get(&(node, symptom.to_string()))) {
            (Some(i), Some(s)) => s[i],
            _ => 0,
        }
    }

    /// Full series as reals; all zeros for an unseen (node, symptom).
    pub fn series(&self, node: NodeId, symptom: &str) -> Vec<f64> {
        match self.cells.get(&(node, symptom.to_string())) {
            Some(s) => s.iter().map(|&c| c as f64).collect(),
            None => vec![0.0; self.days],
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (NodeId, &str, &[u32])> {
        self.cells
            .iter()
            .map(|((n, s), c)| (*n, s.as_str(), c.as_slice()))
    }

    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.cells.keys().map(|(n, _)| *n).collect()
    }

    pub fn symptoms(&self) -> BTreeSet<String> {
        self.cells.keys().map(|(_, s)| s.clone()).collect()
    }

    pub fn total(&self) -> u64 {
        self.cells
            .values()
            .flat_map(|s| s.iter())
            .map(|&c| c as u64)
            .sum()
    }

    /// Cell-wise sum of two panels over the same date range.
    pub fn merge(&mut self, other: &SymptomPanel) -> Result<()> {
        if other.start != self.start || other.days != self.days {
            return Err(Error::invalid("cannot merge panels with different date ranges"));
        }
        for ((node, symptom), counts) in &other.cells {
            let days = self.days;
            let mine = self
                .cells
                .entry((*node, symptom.clone()))
                .or_insert_with(|| vec![0; days]);
            for (a, b) in mine.iter_mut().zip(counts) {
                *a += b;
            }
        }
        Ok(())
    }
}

/// Counts (message, symptom) matches per node and UTC date.
///
/// With `range = None` the panel spans the first to the last message date;
/// otherwise messages outside `[start, start + days)` are dropped.
pub fn aggregate_counts<'a, I>(items: I, range: Option<(NaiveDate, usize)>) -> SymptomPanel
where
    I: IntoIterator<Item = (&'a GeoMessage, NodeId, &'a BTreeSet<String>)>,
{
    let items: Vec<_> = items.into_iter().collect();
    let (start, days) = match range {
        Some(r) => r,
        None => match (
            items.iter().map(|(m, _, _)| m.date()).min(),
            items.iter().map(|(m, _, _)| m.date()).max(),
        ) {
            (Some(lo), Some(hi)) => (lo, (hi - lo).num_days() as usize + 1),
            _ => (NaiveDate::default(), 0),
        },
    };
    let mut panel = SymptomPanel::new(start, days);
    for (msg, node, symptoms) in items {
        let date = msg.date();
        for s in symptoms {
            panel.add(node, s, date, 1);
        }
    }
    panel
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalSeries {
    pub case_type: String,
    pub region: String,
    pub points: Vec<(NaiveDate, u64)>,
}

impl ClinicalSeries {
    pub fn validate(&self) -> Result<()> {
        for w in self.points.windows(2) {
            if (w[1].0 - w[0].0).num_days() != 7 {
                return Err(Error::invalid(format!(
                    "clinical series {}/{}: week_ending {} follows {} (must be exactly 7 days later)",
                    self.region, self.case_type, w[1].0, w[0].0
                )));
            }
        }
        Ok(())
    }
}

/// A daily series starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub start: NaiveDate,
    pub values: Vec<f64>,
}

impl DailySeries {
    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(self.values.len() as i64 - 1)
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let off = (date - self.start).num_days();
        (off >= 0 && (off as usize) < self.values.len()).then_some(off as usize)
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.index_of(date).map(|i| self.values[i])
    }
}

#[derive(Deserialize)]
struct ClinicalRow {
    week_ending: NaiveDate,
    region: String,
    case_type: String,
    count: u64,
}

/// Reads `week_ending,region,case_type,count` rows, grouped per (region, case).
pub fn parse_clinical<R: std::io::Read>(reader: R) -> Result<Vec<ClinicalSeries>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut grouped: BTreeMap<(String, String), Vec<(NaiveDate, u64)>> = BTreeMap::new();
    for row in rdr.deserialize::<ClinicalRow>() {
        let row = row?;
        grouped
            .entry((row.region, row.case_type))
            .or_default()
            .push((row.week_ending, row.count));
    }
    let mut out = Vec::with_capacity(grouped.len());
    for ((region, case_type), mut points) in grouped {
        points.sort_by_key(|p| p.0);
        let s = ClinicalSeries {
            case_type,
            region,
            points,
        };
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

pub fn write_clinical(series: &[ClinicalSeries]) -> Result<Vec<u8>> {
    let mut rows: Vec<(NaiveDate, &str, &str, u64)> = series
        .iter()
        .flat_map(|s| {
            s.points
                .iter()
                .map(move |(d, c)| (*d, s.region.as_str(), s.case_type.as_str(), *c))
        })
        .collect();
    rows.sort();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["week_ending", "region", "case_type", "count"])?;
    for (d, region, case, count) in rows {
        w.write_record([d.to_string(), region.to_string(), case.to_string(), count.to_string()])?;
    }
    w.into_inner()
        .map_err(|e| Error::invalid(format!("csv flush: {e}")))
}

/// Spreads weekly totals over days: `count / 7` sits on each week-ending
/// date and the days in between are linearly interpolated.
pub fn interpolate_weekly(series: &ClinicalSeries) -> Result<DailySeries> {
    series.validate()?;
    if series.points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "clinical series {}/{} needs at least 2 weekly points to interpolate",
            series.region, series.case_type
        )));
    }
    let anchors: Vec<f64> = series.points.iter().map(|(_, c)| *c as f64 / 7.0).collect();
    let mut values = Vec::with_capacity(7 * (anchors.len() - 1) + 1);
    for w in anchors.windows(2) {
        for j in 0..7 {
            values.push(w[0] + (w[1] - w[0]) * j as f64 / 7.0);
        }
    }
    values.push(*anchors.last().unwrap());
    Ok(DailySeries {
        start: series.points[0].0,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsArticle {
    pub id: String,
    pub source: String,
    #[serde(with = "rfc3339")]
    pub timestamp: DateTime<Utc>,
    pub title: String,
    #[serde(default)]
    pub body: String,
}

impl NewsArticle {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("article id is empty"));
        }
        if self.body.trim().is_empty() && self.title.trim().is_empty() {
            return Err(Error::invalid(format!("article {} has neither title nor body", self.id)));
        }
        Ok(())
    }

    pub fn full_text(&self) -> String {
        format!("{}\n{}", self.title, self.body)
    }
}

/// Newline-delimited articles; malformed or duplicate records are skipped and counted.
pub fn parse_news<R: BufRead>(reader: R) -> Result<Parsed<NewsArticle>> {
    let mut out = Parsed::default();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<NewsArticle>(&line)
            .map_err(|e| e.to_string())
            .and_then(|a| {
                a.validate().map_err(|e| e.to_string())?;
                if !seen.insert(a.id.clone()) {
                    return Err(format!("duplicate id {}", a.id));
                }
                Ok(a)
            });
        match parsed {
            Ok(a) => out.records.push(a),
            Err(e) => {
                out.malformed += 1;
                log::warn!("skipping malformed article at line {}: {e}", i + 1);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn msg(id: &str, user: &str, ts: &str, text: &str) -> GeoMessage {
        GeoMessage {
            id: id.into(),
            user_id: user.into(),
            timestamp: rfc3339::parse(ts).unwrap(),
            lat: 51.5,
            lon: -0.12,
            text: text.into(),
        }
    }

    fn lexicon() -> SymptomLexicon {
        let mut g = BTreeMap::new();
        g.insert("Common Cold".to_string(), vec!["runny nose".to_string(), "cold".to_string()]);
        g.insert("Flu".to_string(), vec!["flu".to_string(), "influenza".to_string()]);
        g.insert("Sore Throat".to_string(), vec!["sore throat".to_string()]);
        SymptomLexicon::new(g).unwrap()
    }

    #[test]
    fn parses_valid_line() {
        let line = r#"{"id":"1","user_id":"u","timestamp":"2014-02-11T09:00:00Z","lat":51.5,"lon":-0.1,"text":"hi"}"#;
        let p = parse_messages(line.as_bytes(), RecordFormat::Ndjson).unwrap();
        assert_eq!(p.malformed, 0);
        assert_eq!(
            p.records,
            vec![GeoMessage {
                id: "1".into(),
                user_id: "u".into(),
                timestamp: Utc.with_ymd_and_hms(2014, 2, 11, 9, 0, 0).unwrap(),
                lat: 51.5,
                lon: -0.1,
                text: "hi".into(),
            }]
        );
    }

    #[test]
    fn out_of_range_latitude_is_malformed() {
        let line = r#"{"id":"1","user_id":"u","timestamp":"2014-02-11T09:00:00Z","lat":95,"lon":-0.1,"text":"hi"}"#;
        let p = parse_messages(line.as_bytes(), RecordFormat::Ndjson).unwrap();
        assert!(p.records.is_empty());
        assert_eq!(p.malformed, 1);
    }

    #[test]
    fn three_valid_one_malformed() {
        let src = [
            r#"{"id":"1","user_id":"u","timestamp":"2014-02-11T09:00:00Z","lat":51.5,"lon":-0.1,"text":"a"}"#,
            r#"{"id":"2","user_id":"u","timestamp":"2014-02-11T10:00:00Z","lat":51.5,"lon":-0.1,"text":"b"}"#,
            r#"{"id":"3","user_id":"u","timestamp":"not a time","lat":51.5,"lon":-0.1,"text":"c"}"#,
            r#"{"id":"4","user_id":"v","timestamp":"2014-02-12T10:00:00Z","lat":52.5,"lon":-1.9,"text":"d"}"#,
        ]
        .join("\n");
        let p = parse_messages(src.as_bytes(), RecordFormat::Ndjson).unwrap();
        assert_eq!(p.records.len(), 3);
        assert_eq!(p.malformed, 1);
        let ids: Vec<_> = p.records.iter().map(|m| m.id.as_str()).collect();
        assert_eq!(ids, ["1", "2", "4"]);
    }

    #[test]
    fn duplicate_ids_and_fractional_seconds_rejected() {
        let src = [
            r#"{"id":"1","user_id":"u","timestamp":"2014-02-11T09:00:00Z","lat":51.5,"lon":-0.1,"text":"a"}"#,
            r#"{"id":"1","user_id":"u","timestamp":"2014-02-11T09:00:00Z","lat":51.5,"lon":-0.1,"text":"a"}"#,
            r#"{"id":"2","user_id":"u","timestamp":"2014-02-11T09:00:00.5Z","lat":51.5,"lon":-0.1,"text":"a"}"#,
        ]
        .join("\n");
        let p = parse_messages(src.as_bytes(), RecordFormat::Ndjson).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.malformed, 2);
    }

    #[test]
    fn csv_messages() {
        let src = "id,user_id,timestamp,lat,lon,text\n1,u,2014-02-11T09:00:00Z,51.5,-0.1,\"sore throat, ugh\"\n2,u,2014-02-11T09:00:00Z,91,-0.1,x\n";
        let p = parse_messages(src.as_bytes(), RecordFormat::Csv).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.records[0].text, "sore throat, ugh");
        assert_eq!(p.malformed, 1);
    }

    #[test]
    fn table1_example_matches_common_cold() {
        let mut g = BTreeMap::new();
        g.insert("Common Cold".to_string(), vec!["runny nose".to_string()]);
        let lex = SymptomLexicon::new(g).unwrap();
        let got = match_symptoms(
            "sore head, sore eyes, sore legs and a runny nose. looking gooooood!",
            &lex,
        );
        assert_eq!(got, BTreeSet::from(["Common Cold".to_string()]));
    }

    #[test]
    fn empty_text_matches_nothing() {
        assert!(match_symptoms("", &lexicon()).is_empty());
    }

    #[test]
    fn two_groups_both_returned() {
        let got = match_symptoms("Flu again and a SORE throat", &lexicon());
        assert_eq!(got, BTreeSet::from(["Flu".to_string(), "Sore Throat".to_string()]));
    }

    #[test]
    fn whole_token_matching_only() {
        let lex = lexicon();
        assert!(match_symptoms("the influencer said flue", &lex).is_empty());
        assert!(match_symptoms("coldplay tonight", &lex).is_empty());
        assert!(match_symptoms("a runny, nose", &lex).contains("Common Cold"));
    }

    #[test]
    fn lexicon_rejects_duplicates_and_empty_phrases() {
        let mut g = BTreeMap::new();
        g.insert("A".to_string(), vec!["fever".to_string()]);
        g.insert("B".to_string(), vec!["Fever ".to_string()]);
        assert!(SymptomLexicon::new(g).is_err());
        let mut g = BTreeMap::new();
        g.insert("A".to_string(), vec!["  ".to_string()]);
        assert!(SymptomLexicon::new(g).is_err());
        let mut g = BTreeMap::new();
        g.insert("A".to_string(), vec![]);
        assert!(SymptomLexicon::new(g).is_err());
    }

    #[test]
    fn aggregate_single_match() {
        let m = msg("1", "u", "2014-02-11T09:00:00Z", "flu");
        let s = BTreeSet::from(["Flu".to_string()]);
        let panel = aggregate_counts([(&m, 3, &s)], None);
        assert_eq!(panel.count(3, "Flu", m.date()), 1);
        assert_eq!(panel.count(3, "Cough", m.date()), 0);
        assert_eq!(panel.count(4, "Flu", m.date()), 0);
        assert_eq!(panel.total(), 1);
    }

    #[test]
    fn aggregate_counts_messages_not_users() {
        let a = msg("1", "u", "2014-02-11T09:00:00Z", "flu");
        let b = msg("2", "u", "2014-02-11T19:00:00Z", "flu again");
        let s = BTreeSet::from(["Flu".to_string()]);
        let panel = aggregate_counts([(&a, 0, &s), (&b, 0, &s)], None);
        assert_eq!(panel.count(0, "Flu", a.date()), 2);
    }

    #[test]
    fn aggregate_midnight_boundary() {
        let a = msg("1", "u", "2014-02-11T23:59:00Z", "flu");
        let b = msg("2", "u", "2014-02-12T00:01:00Z", "flu");
        let s = BTreeSet::from(["Flu".to_string()]);
        let panel = aggregate_counts([(&a, 0, &s), (&b, 0, &s)], None);
        assert_eq!(panel.days(), 2);
        assert_eq!(panel.series(0, "Flu"), vec![1.0, 1.0]);
    }

    fn weekly(counts: &[u64]) -> ClinicalSeries {
        let d0 = NaiveDate::from_ymd_opt(2014, 2, 16).unwrap();
        ClinicalSeries {
            case_type: "ILI".into(),
            region: "r".into(),
            points: counts
                .iter()
                .enumerate()
                .map(|(i, c)| (d0 + Duration::days(7 * i as i64), *c))
                .collect(),
        }
    }

    #[test]
    fn interpolate_constant() {
        let d = interpolate_weekly(&weekly(&[7, 7, 7])).unwrap();
        assert_eq!(d.values.len(), 15);
        assert!(d.values.iter().all(|v| (*v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn interpolate_ramp() {
        let d = interpolate_weekly(&weekly(&[7, 14])).unwrap();
        assert_eq!(d.values.len(), 8);
        for (j, v) in d.values.iter().enumerate() {
            assert!((v - (1.0 + j as f64 / 7.0)).abs() < 1e-12, "day {j}: {v}");
        }
        assert!((d.values[1] - 1.142857).abs() < 1e-6);
    }

    #[test]
    fn interpolate_zeros_and_too_short() {
        let d = interpolate_weekly(&weekly(&[0, 0])).unwrap();
        assert!(d.values.iter().all(|v| *v == 0.0));
        assert!(matches!(
            interpolate_weekly(&weekly(&[5])),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn clinical_rejects_irregular_weeks() {
        let src = "week_ending,region,case_type,count\n2014-02-16,r,ILI,3\n2014-02-24,r,ILI,4\n";
        assert!(parse_clinical(src.as_bytes()).is_err());
        let src = "week_ending,region,case_type,count\n2014-02-23,r,ILI,4\n2014-02-16,r,ILI,3\n2014-02-16,q,ILI,1\n";
        let s = parse_clinical(src.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].points[0].1, 3);
        let round = parse_clinical(write_clinical(&s).unwrap().as_slice()).unwrap();
        assert_eq!(round, s);
    }

    #[test]
    fn news_parsing_checks_invariants() {
        let src = [
            r#"{"id":"a","source":"bbc","timestamp":"2014-02-11T09:00:00Z","title":"Flu","body":""}"#,
            r#"{"id":"b","source":"bbc","timestamp":"2014-02-11T09:00:00Z","title":"","body":""}"#,
            r#"{"id":"a","source":"bbc","timestamp":"2014-02-11T09:00:00Z","title":"dup","body":"x"}"#,
        ]
        .join("\n");
        let p = parse_news(src.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.malformed, 2);
    }

    #[test]
    fn panel_json_roundtrip() {
        let mut p = SymptomPanel::new(NaiveDate::from_ymd_opt(2014, 2, 11).unwrap(), 3);
        p.add(1, "Flu", NaiveDate::from_ymd_opt(2014, 2, 12).unwrap(), 4);
        let s = serde_json::to_string(&p).unwrap();
        let q: SymptomPanel = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }

    fn arb_message() -> impl Strategy<Value = GeoMessage> {
        (
            "[a-z0-9]{1,8}",
            "[a-z0-9]{1,8}",
            0i64..2_000_000_000,
            -90.0f64..=90.0,
            -180.0f64..=180.0,
            "\\PC{0,40}",
        )
            .prop_map(|(id, user_id, secs, lat, lon, text)| GeoMessage {
                id,
                user_id,
                timestamp: Utc.timestamp_opt(secs, 0).unwrap(),
                lat,
                lon,
                text,
            })
    }

    proptest! {
        #[test]
        fn message_roundtrip_bit_exact(m in arb_message()) {
            let line = serde_json::to_string(&m).unwrap();
            let p = parse_messages(line.as_bytes(), RecordFormat::Ndjson).unwrap();
            prop_assert_eq!(p.records.len(), 1);
            let back = &p.records[0];
            prop_assert_eq!(back.lat.to_bits(), m.lat.to_bits());
            prop_assert_eq!(back.lon.to_bits(), m.lon.to_bits());
            prop_assert_eq!(back, &m);
        }

        #[test]
        fn matching_is_case_insensitive(text in "[a-zA-Z ,.!]{0,60}") {
            let lex = lexicon();
            prop_assert_eq!(lex.match_symptoms(&text), lex.match_symptoms(&text.to_lowercase()));
        }

        #[test]
        fn panel_total_equals_match_pairs(
            picks in proptest::collection::vec((0u32..3, 0usize..3, 0i64..5, 0u8..8), 0..40)
        ) {
            let names = ["Flu", "Cough", "Sore Throat"];
            let d0 = NaiveDate::from_ymd_opt(2014, 2, 11).unwrap();
            let msgs: Vec<(GeoMessage, NodeId, BTreeSet<String>)> = picks
                .iter()
                .enumerate()
                .map(|(i, (node, _s, day, mask))| {
                    let ts = Utc.from_utc_datetime(&(d0 + Duration::days(*day)).and_hms_opt(12, 0, 0).unwrap());
                    let syms: BTreeSet<String> = names
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| mask & (1 << k) != 0)
                        .map(|(_, n)| n.to_string())
                        .collect();
                    (GeoMessage { id: i.to_string(), user_id: "u".into(), timestamp: ts, lat: 0.0, lon: 0.0, text: String::new() }, *node, syms)
                })
                .collect();
            let pairs: usize = msgs.iter().map(|(_, _, s)| s.len()).sum();
            let panel = aggregate_counts(msgs.iter().map(|(m, n, s)| (m, *n, s)), None);
            prop_assert_eq!(panel.total() as usize, pairs);
        }

        #[test]
        fn interpolation_constant_case(w in 0u64..10_000, k in 2usize..8) {
            let d = interpolate_weekly(&weekly(&vec![w; k])).unwrap();
            prop_assert_eq!(d.values.len(), 7 * (k - 1) + 1);
            for v in d.values {
                prop_assert!((v - w as f64 / 7.0).abs() < 1e-9);
            }
        }
    }
}
