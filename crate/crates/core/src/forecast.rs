//! Symptom-count forecasting with the movement influx regressor.
//!
//! Influx at a node is the expected number of symptomatic travellers
//! arriving from its neighbours: each neighbour's symptomatic share of its
//! population times the movement weight between the two.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::SymptomPanel;
use crate::locnet::LocationNetwork;
use crate::tsengine::{fit, mae, order_select, FittedSeriesModel, ModelKind, Order, SeriesModelSpec};
use crate::{Error, NodeId, Result};

/// Expected symptomatic arrivals at `target` given per-node symptomatic counts.
pub fn influx(network: &LocationNetwork, symptomatic: &BTreeMap<NodeId, f64>, target: NodeId) -> Result<f64> {
    let mut total = 0.0;
    for (a, w) in network.neighbours(target) {
        let pop = network.population_of(a);
        if pop == 0 {
            return Err(Error::invalid(format!(
                "node {a} has a positive edge to {target} but zero population"
            )));
        }
        let s = symptomatic.get(&a).copied().unwrap_or(0.0);
        total += s / pop as f64 * w;
    }
    Ok(total)
}

/// Influx at every network node for every panel day, from observed counts.
pub fn influx_history(network: &LocationNetwork, panel: &SymptomPanel, symptom: &str) -> Result<BTreeMap<NodeId, Vec<f64>>> {
    let ids = network.node_ids();
    let series: BTreeMap<NodeId, Vec<f64>> = ids.iter().map(|&n| (n, panel.series(n, symptom))).collect();
    let mut out: BTreeMap<NodeId, Vec<f64>> = ids.iter().map(|&n| (n, Vec::with_capacity(panel.days()))).collect();
    for t in 0..panel.days() {
        let day: BTreeMap<NodeId, f64> = series.iter().map(|(n, s)| (*n, s[t])).collect();
        for &n in &ids {
            let v = influx(network, &day, n)?;
            out.get_mut(&n).expect("node listed").push(v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub train_days: usize,
    pub test_days: usize,
    /// Days between successive fold starts; less than a fold width means overlap.
    pub stride: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            train_days: 28,
            test_days: 7,
            stride: 28,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_days < 28 {
            return Err(Error::config("train_days", "at least 28 days of training history are required"));
        }
        if self.test_days == 0 || self.stride == 0 {
            return Err(Error::config("forecast", "test_days and stride must be positive"));
        }
        Ok(())
    }

    /// Training start indices. The first day is skipped because its
    /// regressor would need the influx of the day before the panel.
    pub fn fold_starts(&self, days: usize) -> Vec<usize> {
        let width = self.train_days + self.test_days;
        (0..)
            .map(|i| 1 + i * self.stride)
            .take_while(|s| s + width <= days)
            .collect()
    }
}

/// Per-node fitted models for one symptom and training window.
struct FoldFit {
    influx_model: FittedSeriesModel,
    plain_model: FittedSeriesModel,
}

/// `r_t = influx_{t-1}`; zero at the first day.
fn lag1(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    out.push(0.0);
    out.extend_from_slice(&v[..v.len().saturating_sub(1)]);
    out
}

fn fit_node(y: &[f64], reg: &[f64], order: Order) -> Result<FoldFit> {
    let spec = SeriesModelSpec::regression(ModelKind::ArimaReg, order, vec!["influx_lag1".into()]);
    Ok(FoldFit {
        influx_model: fit(y, &[reg.to_vec()], &spec)?,
        plain_model: fit(y, &[], &SeriesModelSpec::arima(order))?,
    })
}

/// Forecasts produced for one training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowForecast {
    pub order: BTreeMap<NodeId, Order>,
    pub influx: BTreeMap<NodeId, Vec<f64>>,
    pub plain: BTreeMap<NodeId, Vec<f64>>,
}

/// Trains on `[start, start + train_days)` and advances every node in
/// lockstep for `h` days. Each day's influx regressor is computed from the
/// previous day's clamped predictions of all nodes; the first test day
/// uses the last observed day.
///
/// Nodes whose fits fail are left out of the result.
pub fn forecast_window(
    panel: &SymptomPanel,
    network: &LocationNetwork,
    symptom: &str,
    start: usize,
    train_days: usize,
    h: usize,
) -> Result<WindowForecast> {
    if train_days < 28 {
        return Err(Error::InsufficientData(format!("need 28 training days, got {train_days}")));
    }
    let end = start + train_days;
    if start == 0 || end > panel.days() {
        return Err(Error::InsufficientData(format!(
            "training window {start}..{end} does not fit a {}-day panel with one day of lead-in",
            panel.days()
        )));
    }
    let history = influx_history(network, panel, symptom)?;
    let ids = network.node_ids();
    let fits: Vec<(NodeId, Option<(Order, FoldFit)>)> = ids
        .par_iter()
        .map(|&n| {
            let y = panel.series(n, symptom);
            let reg = lag1(&history[&n]);
            let y_train = &y[start..end];
            let fitted = order_select(y_train, &[], &Order::default_grid())
                .and_then(|(o, _)| fit_node(y_train, &reg[start..end], o).map(|f| (o, f)));
            match fitted {
                Ok(f) => (n, Some(f)),
                Err(e) => {
                    log::warn!("node {n} {symptom}: window at {start} skipped: {e}");
                    (n, None)
                }
            }
        })
        .collect();
    let fits: BTreeMap<NodeId, (Order, FoldFit)> = fits.into_iter().filter_map(|(n, f)| f.map(|f| (n, f))).collect();

    let mut plain = BTreeMap::new();
    for (n, (_, f)) in &fits {
        let p: Vec<f64> = f.plain_model.forecast(h, &[])?.into_iter().map(|v| v.max(0.0)).collect();
        plain.insert(*n, p);
    }

    // observed counts for the last training day seed the chain
    let mut current: BTreeMap<NodeId, f64> = ids.iter().map(|&n| (n, panel.series(n, symptom)[end - 1])).collect();
    let mut regs: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    let mut preds: BTreeMap<NodeId, Vec<f64>> = fits.keys().map(|&n| (n, Vec::with_capacity(h))).collect();
    for k in 0..h {
        for &n in fits.keys() {
            regs.entry(n).or_default().push(influx(network, &current, n)?);
        }
        let mut next = current.clone();
        for (n, (_, f)) in &fits {
            let path = f.influx_model.forecast(k + 1, &[regs[n].clone()])?;
            let v = path[k].max(0.0);
            preds.get_mut(n).expect("fitted node").push(v);
            next.insert(*n, v);
        }
        // nodes without a model keep contributing their last observed level
        current = next;
    }
    Ok(WindowForecast {
        order: fits.iter().map(|(n, (o, _))| (*n, *o)).collect(),
        influx: preds,
        plain,
    })
}

/// Lockstep forecast of `h` days for one node, trained on the `train_days`
/// ending at index `end` (exclusive).
pub fn iterative_forecast(
    node: NodeId,
    symptom: &str,
    panel: &SymptomPanel,
    network: &LocationNetwork,
    end: usize,
    train_days: usize,
    h: usize,
) -> Result<Vec<f64>> {
    let start = end
        .checked_sub(train_days)
        .ok_or_else(|| Error::InsufficientData(format!("need {train_days} days before index {end}")))?;
    let w = forecast_window(panel, network, symptom, start, train_days, h)?;
    w.influx
        .get(&node)
        .cloned()
        .ok_or_else(|| Error::Fit(format!("no model could be fitted for node {node}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymptomForecastScore {
    pub symptom: String,
    pub mae_arima: f64,
    pub mae_arima_influx: f64,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastEval {
    pub rows: Vec<SymptomForecastScore>,
    pub average_arima: f64,
    pub average_influx: f64,
}

impl ForecastEval {
    pub fn improvement_pct(&self) -> f64 {
        100.0 * (self.average_arima - self.average_influx) / self.average_arima
    }

    /// symptom, mae_arima, mae_arima_influx; one row per symptom plus an average.
    pub fn table5_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["symptom", "mae_arima", "mae_arima_influx"])?;
        for r in &self.rows {
            w.write_record([r.symptom.clone(), format!("{:.4}", r.mae_arima), format!("{:.4}", r.mae_arima_influx)])?;
        }
        w.write_record([
            "Average".to_string(),
            format!("{:.4}", self.average_arima),
            format!("{:.4}", self.average_influx),
        ])?;
        w.into_inner().map_err(|e| Error::invalid(e.to_string()))
    }
}

/// Absolute error of the final forecast day, averaged over nodes then folds.
pub fn compare_forecasters(
    panel: &SymptomPanel,
    network: &LocationNetwork,
    symptoms: &[String],
    cfg: &ForecastConfig,
) -> Result<ForecastEval> {
    cfg.validate()?;
    if symptoms.is_empty() {
        return Err(Error::invalid("no symptoms to evaluate"));
    }
    let starts = cfg.fold_starts(panel.days());
    if starts.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "forecast evaluation needs 4 folds; a {}-day panel gives {}",
            panel.days(),
            starts.len()
        )));
    }
    let h = cfg.test_days;
    let mut rows = Vec::new();
    for symptom in symptoms {
        let per_fold: Vec<Result<Option<(f64, f64)>>> = starts
            .par_iter()
            .map(|&s| {
                let w = forecast_window(panel, network, symptom, s, cfg.train_days, h)?;
                let target = s + cfg.train_days + h - 1;
                let mut e_plain = Vec::new();
                let mut e_influx = Vec::new();
                for (n, p) in &w.influx {
                    let actual = [panel.series(*n, symptom)[target]];
                    e_influx.push(mae(&p[h - 1..], &actual)?);
                    e_plain.push(mae(&w.plain[n][h - 1..], &actual)?);
                }
                if e_plain.is_empty() {
                    return Ok(None);
                }
                let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                Ok(Some((avg(&e_plain), avg(&e_influx))))
            })
            .collect();
        let folds: Vec<(f64, f64)> = per_fold.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
        if folds.is_empty() {
            return Err(Error::Fit(format!("no fold could be fitted for {symptom}")));
        }
        let n = folds.len() as f64;
        rows.push(SymptomForecastScore {
            symptom: symptom.clone(),
            mae_arima: folds.iter().map(|f| f.0).sum::<f64>() / n,
            mae_arima_influx: folds.iter().map(|f| f.1).sum::<f64>() / n,
            folds: folds.len(),
        });
    }
    let m = rows.len() as f64;
    Ok(ForecastEval {
        average_arima: rows.iter().map(|r| r.mae_arima).sum::<f64>() / m,
        average_influx: rows.iter().map(|r| r.mae_arima_influx).sum::<f64>() / m,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::locnet::LocationNode;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn node(id: NodeId) -> LocationNode {
        LocationNode {
            node_id: id,
            name: Some(format!("n{id}")),
            centroid: (50.0 + id as f64, 0.0),
            member_count: 100,
            radius_km: 1.0,
        }
    }

    fn network(n: u32, edges: &[((NodeId, NodeId), f64)], pops: &[u64]) -> LocationNetwork {
        LocationNetwork::new(
            (0..n).map(node).collect(),
            edges.iter().copied().collect(),
            pops.iter().enumerate().map(|(i, p)| (i as NodeId, *p)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn influx_examples() {
        let net = network(3, &[((0, 1), 200.0), ((1, 2), 50.0)], &[1000, 500, 1000]);
        let zero = BTreeMap::new();
        assert_eq!(influx(&net, &zero, 1).unwrap(), 0.0);
        let one = BTreeMap::from([(0, 10.0)]);
        assert_eq!(influx(&net, &one, 1).unwrap(), 2.0);
        let two = BTreeMap::from([(0, 10.0), (2, 10.0)]);
        assert_eq!(influx(&net, &two, 1).unwrap(), 2.5);
    }

    #[test]
    fn zero_population_rejected() {
        let net = network(2, &[((0, 1), 5.0)], &[0, 10]);
        assert!(influx(&net, &BTreeMap::from([(0, 1.0)]), 1).is_err());
        // the zero-population node itself may receive influx
        assert_eq!(influx(&net, &BTreeMap::from([(1, 1.0)]), 0).unwrap(), 0.5);
    }

    fn day0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2014, 3, 1).unwrap()
    }

    fn poisson_panel(nodes: u32, days: usize, lambda: f64, seed: u64) -> SymptomPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pois = Poisson::new(lambda).unwrap();
        let mut p = SymptomPanel::new(day0(), days);
        for n in 0..nodes {
            let c: Vec<u32> = (0..days).map(|_| pois.sample(&mut rng) as u32).collect();
            p.set_series(n, "flu", c).unwrap();
        }
        p
    }

    #[test]
    fn isolated_nodes_match_plain_arima() {
        let net = network(3, &[], &[100, 100, 100]);
        let panel = poisson_panel(3, 130, 8.0, 1);
        let w = forecast_window(&panel, &net, "flu", 1, 28, 7).unwrap();
        for n in 0..3 {
            assert_eq!(w.influx[&n], w.plain[&n]);
        }
        let eval = compare_forecasters(&panel, &net, &["flu".into()], &ForecastConfig::default()).unwrap();
        assert!((eval.rows[0].mae_arima - eval.rows[0].mae_arima_influx).abs() < 1e-9);
    }

    #[test]
    fn zero_panel_forecasts_zero() {
        let net = network(2, &[((0, 1), 10.0)], &[100, 100]);
        let panel = poisson_panel(2, 40, 1e-9, 2);
        let f = iterative_forecast(0, "flu", &panel, &net, 40, 28, 7).unwrap();
        assert_eq!(f, vec![0.0; 7]);
    }

    #[test]
    fn neighbour_epidemic_lifts_forecast() {
        // node 1's counts follow node 0's influx with a one-day lag
        let days = 60;
        let mut a = vec![0u32; days];
        let mut b = vec![2u32; days];
        for t in 0..days {
            a[t] = (50.0 * (1.0 + (t as f64 / 4.0).sin())) as u32;
        }
        for t in 1..days {
            b[t] = 2 + a[t - 1] / 5;
        }
        let mut panel = SymptomPanel::new(day0(), days);
        panel.set_series(0, "flu", a).unwrap();
        panel.set_series(1, "flu", b).unwrap();
        let net = network(2, &[((0, 1), 100.0)], &[500, 500]);
        let w = forecast_window(&panel, &net, "flu", 20, 28, 7).unwrap();
        let truth = panel.series(1, "flu");
        let err = |v: &[f64]| -> f64 { v.iter().zip(&truth[48..55]).map(|(p, t)| (p - t).abs()).sum() };
        assert!(err(&w.influx[&1]) < err(&w.plain[&1]), "{:?} vs {:?}", w.influx[&1], w.plain[&1]);
    }

    #[test]
    fn insufficient_history() {
        let net = network(1, &[], &[10]);
        let panel = poisson_panel(1, 100, 3.0, 4);
        assert!(forecast_window(&panel, &net, "flu", 1, 20, 7).is_err());
        assert!(matches!(
            compare_forecasters(&panel, &net, &["flu".into()], &ForecastConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn deterministic_and_table() {
        let net = network(3, &[((0, 1), 30.0), ((1, 2), 10.0)], &[100, 200, 300]);
        let panel = poisson_panel(3, 120, 6.0, 5);
        let cfg = ForecastConfig::default();
        let a = compare_forecasters(&panel, &net, &["flu".into()], &cfg).unwrap();
        let b = compare_forecasters(&panel, &net, &["flu".into()], &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows[0].folds, 4);
        let csv = String::from_utf8(a.table5_csv().unwrap()).unwrap();
        assert!(csv.starts_with("symptom,mae_arima,mae_arima_influx\n"));
        assert!(csv.contains("\nAverage,"));
    }

    #[test]
    fn fold_layout_overlaps_by_test_week() {
        assert_eq!(ForecastConfig::default().fold_starts(120), vec![1, 29, 57, 85]);
    }

    proptest! {
        #[test]
        fn influx_linear(counts in prop::collection::vec(0.0f64..100.0, 4), w in prop::collection::vec(0.0f64..50.0, 6)) {
            let edges: Vec<((NodeId, NodeId), f64)> = vec![((0,1),w[0]),((0,2),w[1]),((0,3),w[2]),((1,2),w[3]),((1,3),w[4]),((2,3),w[5])];
            let net = network(4, &edges, &[10, 20, 30, 40]);
            let s: BTreeMap<NodeId, f64> = counts.iter().enumerate().map(|(i, c)| (i as NodeId, *c)).collect();
            let s2: BTreeMap<NodeId, f64> = s.iter().map(|(k, v)| (*k, 2.0 * v)).collect();
            for t in 0..4 {
                prop_assert_eq!(influx(&net, &s2, t).unwrap(), 2.0 * influx(&net, &s, t).unwrap());
            }
        }

        #[test]
        fn influx_scale_invariant(counts in prop::collection::vec(0.0f64..100.0, 3), w in prop::collection::vec(0.0f64..50.0, 3), c in 1u64..1000) {
            let edges = [((0, 1), w[0]), ((0, 2), w[1]), ((1, 2), w[2])];
            let scaled: Vec<((NodeId, NodeId), f64)> = edges.iter().map(|(k, v)| (*k, v * c as f64)).collect();
            let a = network(3, &edges, &[7, 11, 13]);
            let b = network(3, &scaled, &[7 * c, 11 * c, 13 * c]);
            let s: BTreeMap<NodeId, f64> = counts.iter().enumerate().map(|(i, v)| (i as NodeId, *v)).collect();
            for t in 0..3 {
                let x = influx(&a, &s, t).unwrap();
                let y = influx(&b, &s, t).unwrap();
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn t7_error_is_length_one_mae(p in prop::collection::vec(0.0f64..50.0, 7), actual in 0.0f64..50.0) {
            prop_assert_eq!(mae(&p[6..], &[actual]).unwrap(), (p[6] - actual).abs());
        }
    }
}
