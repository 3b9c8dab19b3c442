//! Early-warning detection over daily symptom counts.
//!
//! The statistic is the one-sided EARS C2 score: today's count against the
//! mean and sample standard deviation of a 7-day baseline that ends two days
//! before today. Alarms are then filtered on absolute size and on deviation
//! from the trailing median.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::SymptomPanel;
use crate::{Error, NodeId, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    pub node_id: NodeId,
    pub symptom: String,
    pub date: NaiveDate,
    pub observed_count: u32,
    pub baseline_mean: f64,
    pub baseline_sd: f64,
    pub statistic: f64,
    pub median_30d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub baseline_days: usize,
    pub guard_days: usize,
    pub threshold: f64,
    pub sd_floor: f64,
    pub min_count: u32,
    pub median_window: usize,
    pub median_ratio: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            baseline_days: 7,
            guard_days: 2,
            threshold: 3.0,
            sd_floor: 1.0,
            min_count: 5,
            median_window: 30,
            median_ratio: 2.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.baseline_days < 2 {
            return Err(Error::config("baseline_days", "needs at least 2 days for a sample sd"));
        }
        if self.guard_days == 0 {
            return Err(Error::config("guard_days", "must be positive"));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::config("threshold", "must be positive and finite"));
        }
        if !(self.sd_floor > 0.0 && self.sd_floor.is_finite()) {
            return Err(Error::config("sd_floor", "must be positive and finite"));
        }
        if self.min_count == 0 {
            return Err(Error::config("min_count", "must be positive"));
        }
        if self.median_window == 0 || self.guard_days >= self.median_window {
            return Err(Error::config("median_window", "must exceed guard_days"));
        }
        if !(self.median_ratio > 0.0 && self.median_ratio.is_finite()) {
            return Err(Error::config("median_ratio", "must be positive and finite"));
        }
        Ok(())
    }

    /// First index at which a statistic can be computed.
    pub fn warmup(&self) -> usize {
        self.baseline_days + self.guard_days
    }
}

/// Baseline mean, sample sd and statistic at index `t`.
fn c2(series: &[f64], t: usize, cfg: &DetectorConfig) -> Result<(f64, f64, f64)> {
    if t >= series.len() {
        return Err(Error::invalid(format!("index {t} beyond series of {}", series.len())));
    }
    if t < cfg.warmup() {
        return Err(Error::InsufficientData(format!(
            "EARS needs {} days of history before index {t}",
            cfg.warmup()
        )));
    }
    let end = t - cfg.guard_days;
    let base = &series[end - cfg.baseline_days..end];
    let n = base.len() as f64;
    let mean = base.iter().sum::<f64>() / n;
    let sd = (base.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let stat = ((series[t] - mean) / sd.max(cfg.sd_floor)).max(0.0);
    Ok((mean, sd, stat))
}

/// One-sided EARS C2 statistic of `series[t]`.
pub fn ears_statistic(series: &[f64], t: usize, cfg: &DetectorConfig) -> Result<f64> {
    c2(series, t, cfg).map(|(_, _, s)| s)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Median of up to `window` days strictly before `t`.
///
/// Day `t` is left out so that raising today's count can never raise the
/// bar it has to clear.
pub fn trailing_median(series: &[f64], t: usize, window: usize) -> f64 {
    let lo = t.saturating_sub(window);
    median(&mut series[lo..t].to_vec())
}

/// Alarms for one series, in date order.
pub fn detect_series(node_id: NodeId, symptom: &str, start: NaiveDate, counts: &[u32], cfg: &DetectorConfig) -> Vec<Alarm> {
    let series: Vec<f64> = counts.iter().map(|&c| f64::from(c)).collect();
    let mut out = Vec::new();
    for t in cfg.warmup()..series.len() {
        let x = counts[t];
        if x < cfg.min_count {
            continue;
        }
        let (mean, sd, stat) = c2(&series, t, cfg).expect("index past warm-up");
        if stat < cfg.threshold {
            continue;
        }
        let med = trailing_median(&series, t, cfg.median_window);
        if series[t] < cfg.median_ratio * med {
            continue;
        }
        out.push(Alarm {
            node_id,
            symptom: symptom.to_string(),
            date: start + chrono::Days::new(t as u64),
            observed_count: x,
            baseline_mean: mean,
            baseline_sd: sd,
            statistic: stat,
            median_30d: med,
        });
    }
    out
}

/// Runs detection over every cell of the panel; output sorted by (date, node, symptom).
pub fn detect(panel: &SymptomPanel, cfg: &DetectorConfig) -> Result<Vec<Alarm>> {
    cfg.validate()?;
    let cells: Vec<(NodeId, &str, &[u32])> = panel.cells().collect();
    let mut alarms: Vec<Alarm> = cells
        .par_iter()
        .flat_map_iter(|(node, symptom, counts)| detect_series(*node, symptom, panel.start(), counts, cfg))
        .collect();
    alarms.sort_by(|a, b| {
        (a.date, a.node_id, &a.symptom).cmp(&(b.date, b.node_id, &b.symptom))
    });
    Ok(alarms)
}

/// Trailing context for an alarm plus the run of alarm days around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmWindow {
    pub start: NaiveDate,
    pub counts: Vec<u32>,
    pub period_start: NaiveDate,
    pub period_end: NaiveDate,
}

impl AlarmWindow {
    pub fn period_days(&self) -> usize {
        (self.period_end - self.period_start).num_days() as usize + 1
    }

    pub fn period_dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.period_start.iter_days().take(self.period_days())
    }
}

/// Returns the `span_days` ending on the alarm date (clipped to the panel)
/// and the contiguous run of alarm-positive days containing it.
///
/// `alarms` is the full detector output; only entries for the same cell count.
pub fn alarm_window(alarm: &Alarm, alarms: &[Alarm], panel: &SymptomPanel, span_days: usize) -> Result<AlarmWindow> {
    let t = panel
        .index_of(alarm.date)
        .ok_or_else(|| Error::invalid(format!("alarm date {} outside the panel", alarm.date)))?;
    if !panel.cells().any(|(n, s, _)| n == alarm.node_id && s == alarm.symptom) {
        return Err(Error::invalid(format!(
            "no series for node {} symptom {}",
            alarm.node_id, alarm.symptom
        )));
    }
    let dates: std::collections::BTreeSet<NaiveDate> = alarms
        .iter()
        .filter(|a| a.node_id == alarm.node_id && a.symptom == alarm.symptom)
        .map(|a| a.date)
        .chain(std::iter::once(alarm.date))
        .collect();
    let mut first = alarm.date;
    while let Some(prev) = first.pred_opt().filter(|d| dates.contains(d)) {
        first = prev;
    }
    let mut last = alarm.date;
    while let Some(next) = last.succ_opt().filter(|d| dates.contains(d)) {
        last = next;
    }
    let lo = (t + 1).saturating_sub(span_days.max(1));
    let counts = (lo..=t)
        .map(|i| panel.count(alarm.node_id, &alarm.symptom, panel.date(i)))
        .collect();
    Ok(AlarmWindow {
        start: panel.date(lo),
        counts,
        period_start: first,
        period_end: last,
    })
}
