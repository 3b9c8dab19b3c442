//! Situational awareness for alarms: event-specific terms, shared hashtags,
//! representative messages and related news.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{alarm_window, Alarm, AlarmWindow};
use crate::ingest::{MatchedMessage, NewsArticle, SymptomLexicon, SymptomPanel};
use crate::text::{hashtags, tokenize};
use crate::{Error, NodeId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextConfig {
    pub baseline_days: usize,
    pub span_days: usize,
    pub max_terms: usize,
    pub top_messages: usize,
    pub k_terms: usize,
    pub window_days: i64,
    pub sim_threshold: f64,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            baseline_days: 30,
            span_days: 30,
            max_terms: 20,
            top_messages: 10,
            k_terms: 10,
            window_days: 3,
            sim_threshold: 0.2,
        }
    }
}

impl ContextConfig {
    pub fn validate(&self) -> Result<()> {
        if self.baseline_days == 0 || self.span_days == 0 || self.k_terms == 0 {
            return Err(Error::config("context", "day spans and k_terms must be positive"));
        }
        if self.window_days < 0 {
            return Err(Error::config("window_days", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.sim_threshold) {
            return Err(Error::config("sim_threshold", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub alarm: Alarm,
    pub window: AlarmWindow,
    pub message_count: usize,
    pub terms: Vec<(String, f64)>,
    pub hashtags: Vec<String>,
    pub top_messages: Vec<(String, f64)>,
    pub news: Vec<(String, f64)>,
    pub geo_points: Vec<(f64, f64)>,
}

/// Health-classified messages indexed by node and day.
#[derive(Debug, Default)]
pub struct MessageStore {
    messages: Vec<MatchedMessage>,
    index: BTreeMap<(NodeId, NaiveDate), Vec<usize>>,
}

impl MessageStore {
    pub fn new(items: impl IntoIterator<Item = (NodeId, MatchedMessage)>) -> Self {
        let mut store = Self::default();
        for (node, m) in items {
            store.index.entry((node, m.message.date())).or_default().push(store.messages.len());
            store.messages.push(m);
        }
        store
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn on(&self, node: NodeId, date: NaiveDate) -> impl Iterator<Item = &MatchedMessage> {
        self.index
            .get(&(node, date))
            .into_iter()
            .flatten()
            .map(|&i| &self.messages[i])
    }

    pub fn between(&self, node: NodeId, from: NaiveDate, to: NaiveDate) -> impl Iterator<Item = &MatchedMessage> {
        self.index
            .range((node, from)..=(node, to))
            .flat_map(|(_, ids)| ids.iter().map(|&i| &self.messages[i]))
    }
}

/// Messages at the alarm node during `dates` that match the alarm symptom.
pub fn event_messages<'a>(
    alarm: &Alarm,
    dates: impl IntoIterator<Item = NaiveDate>,
    store: &'a MessageStore,
) -> Vec<&'a MatchedMessage> {
    dates
        .into_iter()
        .flat_map(|d| store.on(alarm.node_id, d))
        .filter(|m| m.symptoms.contains(&alarm.symptom))
        .collect()
}

/// Tokens eligible as event terms.
fn term_tokens(text: &str, excluded: &BTreeSet<String>) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().count() > 1 && !excluded.contains(t))
        .collect()
}

/// Stopwords plus every token of the symptom's keyword phrases.
pub fn excluded_tokens(stopwords: &BTreeSet<String>, lexicon: &SymptomLexicon, symptom: &str) -> BTreeSet<String> {
    let mut out = stopwords.clone();
    for phrase in lexicon.phrases(symptom).unwrap_or_default() {
        out.extend(tokenize(phrase));
    }
    out
}

fn counts<'a>(texts: impl IntoIterator<Item = &'a str>, excluded: &BTreeSet<String>) -> (BTreeMap<String, f64>, f64) {
    let mut c = BTreeMap::new();
    let mut total = 0.0;
    for text in texts {
        for t in term_tokens(text, excluded) {
            *c.entry(t).or_insert(0.0) += 1.0;
            total += 1.0;
        }
    }
    (c, total)
}

fn xlnx(o: f64, e: f64) -> f64 {
    if o > 0.0 {
        o * (o / e).ln()
    } else {
        0.0
    }
}

/// Signed log-likelihood ratio of each event token against the baseline.
///
/// Baseline counts are rescaled to the event token total, so the score only
/// depends on the two relative frequencies. With an empty baseline the raw
/// event counts are returned as scores.
pub fn score_terms(event: &[&str], baseline: &[&str], excluded: &BTreeSet<String>) -> Result<Vec<(String, f64)>> {
    if event.is_empty() {
        return Err(Error::invalid("event set is empty"));
    }
    let (ev, n_e) = counts(event.iter().copied(), excluded);
    let (base, n_b) = counts(baseline.iter().copied(), excluded);
    let mut scored: Vec<(String, f64)> = ev
        .into_iter()
        .map(|(term, a)| {
            if n_b == 0.0 {
                return (term, a);
            }
            let b = base.get(&term).copied().unwrap_or(0.0) * n_e / n_b;
            let e = 0.5 * (a + b);
            let g2 = 2.0 * (xlnx(a, e) + xlnx(b, e));
            let sign = if a > b {
                1.0
            } else if a < b {
                -1.0
            } else {
                0.0
            };
            (term, sign * g2)
        })
        .collect();
    scored.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    Ok(scored)
}

fn tf(text: &str, excluded: &BTreeSet<String>) -> BTreeMap<String, f64> {
    let mut v = BTreeMap::new();
    for t in term_tokens(text, excluded) {
        *v.entry(t).or_insert(0.0) += 1.0;
    }
    v
}

fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

fn positive_vector(terms: &[(String, f64)], limit: usize) -> BTreeMap<String, f64> {
    terms
        .iter()
        .filter(|(_, s)| *s > 0.0)
        .take(limit)
        .map(|(t, s)| (t.clone(), *s))
        .collect()
}

/// Cosine similarity of each message with the positive-score term vector;
/// ties go to the earlier timestamp, then the smaller id.
pub fn rank_messages(
    event: &[&MatchedMessage],
    terms: &[(String, f64)],
    excluded: &BTreeSet<String>,
) -> Vec<(String, f64)> {
    let query = positive_vector(terms, usize::MAX);
    let mut scored: Vec<(&MatchedMessage, f64)> = event
        .iter()
        .map(|m| (*m, cosine(&tf(&m.message.text, excluded), &query)))
        .collect();
    scored.sort_by(|(a, sa), (b, sb)| {
        sb.total_cmp(sa)
            .then(a.message.timestamp.cmp(&b.message.timestamp))
            .then_with(|| a.message.id.cmp(&b.message.id))
    });
    scored.into_iter().map(|(m, s)| (m.message.id.clone(), s)).collect()
}

/// Tags used by at least two distinct users, most widely used first.
pub fn shared_hashtags(event: &[&MatchedMessage]) -> Vec<String> {
    let mut users: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    for m in event {
        for tag in hashtags(&m.message.text) {
            users.entry(tag).or_default().insert(&m.message.user_id);
        }
    }
    let mut tags: Vec<(String, usize)> = users
        .into_iter()
        .filter(|(_, u)| u.len() >= 2)
        .map(|(t, u)| (t, u.len()))
        .collect();
    tags.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    tags.into_iter().map(|(t, _)| t).collect()
}

/// Articles within `window_days` of `date` that share a top term with the
/// event, ranked by cosine similarity and kept when above the threshold.
pub fn link_news(
    terms: &[(String, f64)],
    news: &[NewsArticle],
    date: NaiveDate,
    cfg: &ContextConfig,
    excluded: &BTreeSet<String>,
) -> Vec<(String, f64)> {
    let query = positive_vector(terms, cfg.k_terms);
    if query.is_empty() {
        return Vec::new();
    }
    let mut hits: Vec<(String, f64)> = news
        .iter()
        .filter(|a| (a.timestamp.date_naive() - date).num_days().abs() <= cfg.window_days)
        .filter_map(|a| {
            let v = tf(&a.full_text(), excluded);
            if !v.keys().any(|k| query.contains_key(k)) {
                return None;
            }
            let s = cosine(&v, &query);
            (s > cfg.sim_threshold).then(|| (a.id.clone(), s))
        })
        .collect();
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    hits
}

/// Everything a report needs besides the alarm itself.
pub struct ReportInputs<'a> {
    pub alarms: &'a [Alarm],
    pub panel: &'a SymptomPanel,
    pub store: &'a MessageStore,
    pub news: &'a [NewsArticle],
    pub lexicon: &'a SymptomLexicon,
    pub stopwords: &'a BTreeSet<String>,
}

pub fn build_report(alarm: &Alarm, inputs: &ReportInputs<'_>, cfg: &ContextConfig) -> Result<EventReport> {
    let window = alarm_window(alarm, inputs.alarms, inputs.panel, cfg.span_days)?;
    let event = event_messages(alarm, window.period_dates(), inputs.store);
    let excluded = excluded_tokens(inputs.stopwords, inputs.lexicon, &alarm.symptom);
    let base_to = window.period_start.pred_opt().unwrap_or(window.period_start);
    let base_from = window.period_start - chrono::Days::new(cfg.baseline_days as u64);
    let baseline: Vec<&str> = if base_to < window.period_start {
        inputs
            .store
            .between(alarm.node_id, base_from, base_to)
            .map(|m| m.message.text.as_str())
            .collect()
    } else {
        Vec::new()
    };
    let (terms, top_messages, news) = if event.is_empty() {
        (Vec::new(), Vec::new(), Vec::new())
    } else {
        let texts: Vec<&str> = event.iter().map(|m| m.message.text.as_str()).collect();
        let mut terms = score_terms(&texts, &baseline, &excluded)?;
        let mut ranked = rank_messages(&event, &terms, &excluded);
        ranked.truncate(cfg.top_messages);
        let news = link_news(&terms, inputs.news, alarm.date, cfg, &excluded);
        terms.truncate(cfg.max_terms);
        (terms, ranked, news)
    };
    Ok(EventReport {
        alarm: alarm.clone(),
        message_count: event.len(),
        hashtags: shared_hashtags(&event),
        geo_points: event.iter().map(|m| (m.message.lat, m.message.lon)).collect(),
        window,
        terms,
        top_messages,
        news,
    })
}

/// One report per contiguous alarm period of each (node, symptom) cell,
/// anchored on the period's first alarm.
pub fn build_reports(inputs: &ReportInputs<'_>, cfg: &ContextConfig) -> Result<Vec<EventReport>> {
    cfg.validate()?;
    let anchors: Vec<&Alarm> = inputs
        .alarms
        .iter()
        .filter(|a| {
            let prev = a.date.pred_opt();
            !inputs
                .alarms
                .iter()
                .any(|b| b.node_id == a.node_id && b.symptom == a.symptom && Some(b.date) == prev)
        })
        .collect();
    anchors
        .par_iter()
        .map(|a| build_report(a, inputs, cfg))
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Self-contained static HTML summary of the reports.
pub fn render_html(reports: &[EventReport], store_lookup: &BTreeMap<String, String>) -> String {
    let mut out = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Alarm report</title>\n\
         <style>body{font-family:sans-serif;max-width:60em;margin:auto}\
         .bar{display:inline-block;width:6px;background:#69c;margin-right:1px;vertical-align:bottom}\
         .hot{background:#c33}</style></head><body>\n<h1>Alarm report</h1>\n",
    );
    if reports.is_empty() {
        out.push_str("<p>No alarms.</p>\n");
    }
    for r in reports {
        let a = &r.alarm;
        out.push_str(&format!(
            "<section><h2>Node {} &middot; {} &middot; {}</h2>\n<p>count {} &middot; statistic {:.2} &middot; period {} to {} &middot; {} messages</p>\n<div>",
            a.node_id,
            escape(&a.symptom),
            a.date,
            a.observed_count,
            a.statistic,
            r.window.period_start,
            r.window.period_end,
            r.message_count
        ));
        let peak = r.window.counts.iter().copied().max().unwrap_or(0).max(1);
        for (i, c) in r.window.counts.iter().enumerate() {
            let d = r.window.start + chrono::Days::new(i as u64);
            let hot = d >= r.window.period_start && d <= r.window.period_end;
            out.push_str(&format!(
                "<span class=\"bar{}\" title=\"{d}: {c}\" style=\"height:{}px\"></span>",
                if hot { " hot" } else { "" },
                4 + 60 * c / peak
            ));
        }
        out.push_str("</div>\n<h3>Terms</h3><p>");
        let terms: Vec<String> = r.terms.iter().map(|(t, s)| format!("{} ({s:.2})", escape(t))).collect();
        out.push_str(&terms.join(", "));
        out.push_str("</p>\n");
        if !r.hashtags.is_empty() {
            let tags: Vec<String> = r.hashtags.iter().map(|t| format!("#{}", escape(t))).collect();
            out.push_str(&format!("<h3>Hashtags</h3><p>{}</p>\n", tags.join(" ")));
        }
        out.push_str("<h3>Messages</h3><ol>\n");
        for (id, s) in &r.top_messages {
            let text = store_lookup.get(id).map(String::as_str).unwrap_or("");
            out.push_str(&format!("<li>{} <small>({s:.3})</small></li>\n", escape(text)));
        }
        out.push_str("</ol>\n");
        if !r.news.is_empty() {
            out.push_str("<h3>News</h3><ul>\n");
            for (id, s) in &r.news {
                out.push_str(&format!("<li>{} <small>({s:.3})</small></li>\n", escape(id)));
            }
            out.push_str("</ul>\n");
        }
        out.push_str("</section>\n");
    }
    out.push_str("</body></html>\n");
    out
}
