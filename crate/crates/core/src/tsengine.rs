//! Time-series machinery: ARIMA and regression with ARIMA errors estimated
//! by conditional sum of squares, the naive mean / random-walk models,
//! regressor transforms and error metrics.

pub mod optim;

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};
use optim::{nelder_mead, NelderMeadConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Arima,
    ArimaReg,
    ArimaSmaReg,
    ArimaLagReg,
    Mean,
    Rwf,
    RwfDrift,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Arima,
        ModelKind::ArimaReg,
        ModelKind::ArimaSmaReg,
        ModelKind::ArimaLagReg,
        ModelKind::Mean,
        ModelKind::Rwf,
        ModelKind::RwfDrift,
    ];

    pub fn is_arima(self) -> bool {
        matches!(
            self,
            ModelKind::Arima | ModelKind::ArimaReg | ModelKind::ArimaSmaReg | ModelKind::ArimaLagReg
        )
    }

    pub fn uses_regressors(self) -> bool {
        self.is_arima() && self != ModelKind::Arima
    }

    /// Column label used in the comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Arima => "ARIMA",
            ModelKind::ArimaReg => "ARIMA Reg.",
            ModelKind::ArimaSmaReg => "ARIMA SMA Reg.",
            ModelKind::ArimaLagReg => "ARIMA Lag. Reg.",
            ModelKind::Mean => "Mean",
            ModelKind::Rwf => "RWF",
            ModelKind::RwfDrift => "RWF Drift.",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Order {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl Order {
    pub const fn new(p: usize, d: usize, q: usize) -> Self {
        Self { p, d, q }
    }

    /// p <= 3, d <= 1, q <= 2.
    pub fn default_grid() -> Vec<Order> {
        let mut grid = Vec::new();
        for d in 0..=1 {
            for p in 0..=3 {
                for q in 0..=2 {
                    grid.push(Order::new(p, d, q));
                }
            }
        }
        grid
    }

    pub fn validate(&self) -> Result<()> {
        if self.p > 3 || self.d > 1 || self.q > 2 {
            return Err(Error::config(
                "order",
                format!("({}, {}, {}) outside p<=3, d<=1, q<=2", self.p, self.d, self.q),
            ));
        }
        Ok(())
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesModelSpec {
    pub kind: ModelKind,
    pub order: Option<Order>,
    #[serde(default)]
    pub regressor_columns: Vec<String>,
}

impl SeriesModelSpec {
    pub fn arima(order: Order) -> Self {
        Self {
            kind: ModelKind::Arima,
            order: Some(order),
            regressor_columns: Vec::new(),
        }
    }

    pub fn regression(kind: ModelKind, order: Order, columns: Vec<String>) -> Self {
        Self {
            kind,
            order: Some(order),
            regressor_columns: columns,
        }
    }

    pub fn naive(kind: ModelKind) -> Self {
        Self {
            kind,
            order: None,
            regressor_columns: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_arima() {
            let order = self
                .order
                .ok_or_else(|| Error::config("order", format!("{} needs an order", self.kind)))?;
            order.validate()?;
            if self.kind.uses_regressors() && self.regressor_columns.is_empty() {
                return Err(Error::config(
                    "regressor_columns",
                    format!("{} needs at least one regressor", self.kind),
                ));
            }
            if !self.kind.uses_regressors() && !self.regressor_columns.is_empty() {
                return Err(Error::config("regressor_columns", "plain ARIMA takes no regressors"));
            }
        } else if self.order.is_some() || !self.regressor_columns.is_empty() {
            return Err(Error::config(
                "order",
                format!("{} takes neither an order nor regressors", self.kind),
            ));
        }
        Ok(())
    }
}

/// What forecasting needs from the end of the training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastState {
    /// Last `p` values of the (differenced) regression error series.
    pub z_tail: Vec<f64>,
    /// Last `q` one-step residuals.
    pub resid_tail: Vec<f64>,
    /// Last undifferenced regression error `y - X beta`.
    pub w_last: f64,
    pub y_first: f64,
    pub y_last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedSeriesModel {
    pub spec: SeriesModelSpec,
    pub ar_coeffs: Vec<f64>,
    pub ma_coeffs: Vec<f64>,
    pub intercept: f64,
    pub regression_betas: Vec<f64>,
    pub residual_variance: f64,
    pub training_window: Option<(NaiveDate, NaiveDate)>,
    pub n_obs: usize,
    /// Observations entering the conditional sum of squares.
    pub n_effective: usize,
    pub state: ForecastState,
}

impl FittedSeriesModel {
    pub fn with_window(mut self, start: NaiveDate, end: NaiveDate) -> Self {
        self.training_window = Some((start, end));
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(src: &str) -> Result<Self> {
        Ok(serde_json::from_str(src)?)
    }

    /// Corrected Akaike information criterion under a Gaussian likelihood.
    pub fn aicc(&self) -> f64 {
        // The likelihood is scaled to the full sample so that orders which
        // condition on different numbers of leading observations stay comparable.
        let n = self.n_obs as f64;
        let k = (self.ar_coeffs.len() + self.ma_coeffs.len() + 1 + self.regression_betas.len() + 1) as f64;
        if n - k - 1.0 <= 0.0 {
            return f64::INFINITY;
        }
        let sigma2 = self.residual_variance.max(1e-10);
        n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0) + 2.0 * k + 2.0 * k * (k + 1.0) / (n - k - 1.0)
    }

    /// Forecasts `h` steps ahead. `x_future` holds one column per regressor,
    /// each with at least `h` values.
    pub fn forecast(&self, h: usize, x_future: &[Vec<f64>]) -> Result<Vec<f64>> {
        if h == 0 {
            return Ok(Vec::new());
        }
        let st = &self.state;
        match self.spec.kind {
            ModelKind::Mean => return Ok(vec![self.intercept; h]),
            ModelKind::Rwf => return Ok(vec![st.y_last; h]),
            ModelKind::RwfDrift => {
                let drift = if self.n_obs > 1 {
                    (st.y_last - st.y_first) / (self.n_obs - 1) as f64
                } else {
                    0.0
                };
                return Ok((1..=h).map(|k| st.y_last + k as f64 * drift).collect());
            }
            _ => {}
        }
        let k = self.regression_betas.len();
        if x_future.len() != k || x_future.iter().any(|c| c.len() < h) {
            return Err(Error::invalid(format!(
                "forecast needs {k} future regressor column(s) with {h} values each"
            )));
        }
        let order = self.spec.order.expect("validated arima spec");
        let mu = self.intercept;
        let mut z_hist = st.z_tail.clone();
        let mut e_hist = st.resid_tail.clone();
        let mut w = st.w_last;
        let mut out = Vec::with_capacity(h);
        for t in 0..h {
            let mut z = mu;
            for (i, phi) in self.ar_coeffs.iter().enumerate() {
                z += phi * (z_hist[z_hist.len() - 1 - i] - mu);
            }
            for (j, theta) in self.ma_coeffs.iter().enumerate() {
                z += theta * e_hist[e_hist.len() - 1 - j];
            }
            z_hist.push(z);
            e_hist.push(0.0);
            w = if order.d == 1 { w + z } else { z };
            let reg: f64 = self
                .regression_betas
                .iter()
                .zip(x_future)
                .map(|(b, col)| b * col[t])
                .sum();
            out.push(w + reg);
        }
        Ok(out)
    }
}

/// Free-function form of [`FittedSeriesModel::forecast`].
pub fn forecast(model: &FittedSeriesModel, h: usize, x_future: &[Vec<f64>]) -> Result<Vec<f64>> {
    model.forecast(h, x_future)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn difference(xs: &[f64], d: usize) -> Vec<f64> {
    if d == 0 {
        xs.to_vec()
    } else {
        xs.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// True when `1 - phi_1 z - ... - phi_p z^p` has every root outside the unit
/// circle (checked via the partial-autocorrelation step-down recursion).
pub fn ar_is_stationary(phi: &[f64]) -> bool {
    within_margin(phi, 1.0)
}

/// Step-down test with every partial autocorrelation required below `bound`.
fn within_margin(phi: &[f64], bound: f64) -> bool {
    if phi.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let mut a = phi.to_vec();
    for k in (1..=a.len()).rev() {
        let r = a[k - 1];
        if r.abs() >= bound {
            return false;
        }
        let denom = 1.0 - r * r;
        let prev = a.clone();
        for j in 1..k {
            a[j - 1] = (prev[j - 1] + r * prev[k - j - 1]) / denom;
        }
        a.truncate(k - 1);
    }
    true
}

/// True when `1 + theta_1 z + ... + theta_q z^q` has every root outside the unit circle.
pub fn ma_is_invertible(theta: &[f64]) -> bool {
    ar_is_stationary(&negated(theta))
}

fn negated(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|v| -v).collect()
}

/// One-step ARMA residuals with zero pre-sample shocks. Entries before
/// index `p` are zero and excluded from the sum of squares.
fn arma_residuals(z: &[f64], mu: f64, phi: &[f64], theta: &[f64]) -> Vec<f64> {
    let p = phi.len();
    let mut e = vec![0.0; z.len()];
    for t in p..z.len() {
        let mut v = z[t] - mu;
        for (i, a) in phi.iter().enumerate() {
            v -= a * (z[t - 1 - i] - mu);
        }
        for (j, b) in theta.iter().enumerate() {
            if t > j {
                v -= b * e[t - 1 - j];
            }
        }
        e[t] = v;
    }
    e
}

fn css(z: &[f64], mu: f64, phi: &[f64], theta: &[f64]) -> f64 {
    arma_residuals(z, mu, phi, theta)[phi.len()..]
        .iter()
        .map(|e| e * e)
        .sum()
}

/// Least squares `target ~ columns` via SVD; rank-deficient designs get
/// the minimum-norm solution.
pub fn least_squares(columns: &[Vec<f64>], target: &[f64]) -> Vec<f64> {
    let rows = target.len();
    let k = columns.len();
    if k == 0 || rows == 0 {
        return vec![0.0; k];
    }
    let a = DMatrix::from_fn(rows, k, |r, c| columns[c][r]);
    let b = DVector::from_column_slice(target);
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = (max_sv * 1e-10).max(f64::MIN_POSITIVE);
    match svd.solve(&b, eps) {
        Ok(x) => x.iter().map(|v| if v.is_finite() { *v } else { 0.0 }).collect(),
        Err(_) => vec![0.0; k],
    }
}

/// Partial autocorrelations of fitted polynomials stay inside this bound.
const ROOT_MARGIN: f64 = 0.98;
const MAX_ALTERNATIONS: usize = 25;
const BETA_TOL: f64 = 1e-6;

/// Fits a model to `y` with regressor columns `x` (each the length of `y`).
///
/// ARIMA kinds alternate a least-squares step for the regression
/// coefficients (on ARMA-filtered data) with a Nelder-Mead minimization of
/// the conditional sum of squares over AR, MA and intercept on
/// `y - X beta`. The naive kinds are closed form.
pub fn fit(y: &[f64], x: &[Vec<f64>], spec: &SeriesModelSpec) -> Result<FittedSeriesModel> {
    spec.validate()?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    if !spec.kind.is_arima() {
        return fit_naive(y, spec);
    }
    let order = spec.order.expect("validated");
    let (p, d, q) = (order.p, order.d, order.q);
    let n = y.len();
    if n < 10 + p + q + d {
        return Err(Error::InsufficientData(format!(
            "ARIMA{order} needs at least {} observations, got {n}",
            10 + p + q + d
        )));
    }
    if x.len() != spec.regressor_columns.len() {
        return Err(Error::invalid(format!(
            "spec names {} regressor(s) but {} column(s) were supplied",
            spec.regressor_columns.len(),
            x.len()
        )));
    }
    if x.iter().any(|c| c.len() != n || c.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("regressor columns must be finite and align with the series"));
    }

    let dy = difference(y, d);
    let dx: Vec<Vec<f64>> = x.iter().map(|c| difference(c, d)).collect();
    let k = dx.len();

    let mut beta = if k > 0 {
        let mut cols = vec![vec![1.0; dy.len()]];
        cols.extend(dx.iter().cloned());
        least_squares(&cols, &dy)[1..].to_vec()
    } else {
        Vec::new()
    };

    let errors_of = |beta: &[f64]| -> Vec<f64> {
        (0..dy.len())
            .map(|t| dy[t] - beta.iter().zip(&dx).map(|(b, c)| b * c[t]).sum::<f64>())
            .collect()
    };
    let objective = |z: &[f64], params: &[f64]| -> f64 {
        let (phi, rest) = params.split_at(p);
        let (theta, mu) = rest.split_at(q);
        if !within_margin(phi, ROOT_MARGIN) || !within_margin(&negated(theta), ROOT_MARGIN) {
            return f64::INFINITY;
        }
        css(z, mu[0], phi, theta)
    };
    let nm = NelderMeadConfig::default();

    let mut params: Vec<f64> = Vec::new();
    for round in 0..MAX_ALTERNATIONS {
        let z = errors_of(&beta);
        let z_mean = mean(&z);
        let spread = {
            let v = z.iter().map(|a| (a - z_mean).powi(2)).sum::<f64>() / z.len() as f64;
            v.sqrt()
        };
        let mut steps = vec![0.1; p + q];
        steps.push((0.1 * spread).max(0.1 * z_mean.abs()).max(1e-4));
        let start = if round == 0 {
            let mut s = vec![0.1; p + q];
            s.push(z_mean);
            s
        } else {
            params.clone()
        };
        let mut best = nelder_mead(|v| objective(&z, v), &start, &steps, nm);
        if !best.fx.is_finite() {
            let mut s = vec![0.0; p + q];
            s.push(z_mean);
            best = nelder_mead(|v| objective(&z, v), &s, &steps, nm);
            if !best.fx.is_finite() {
                return Err(Error::Fit(format!(
                    "ARIMA{order}: no stationary and invertible optimum found"
                )));
            }
        }
        params = best.x;
        if k == 0 {
            break;
        }
        let (phi, rest) = params.split_at(p);
        let (theta, mu) = rest.split_at(q);
        let centred: Vec<f64> = dy.iter().map(|v| v - mu[0]).collect();
        let target = arma_residuals(&centred, 0.0, phi, theta)[p..].to_vec();
        let cols: Vec<Vec<f64>> = dx
            .iter()
            .map(|c| arma_residuals(c, 0.0, phi, theta)[p..].to_vec())
            .collect();
        let next = least_squares(&cols, &target);
        let change = next
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = next;
        if change < BETA_TOL {
            break;
        }
    }

    let (phi, rest) = params.split_at(p);
    let (theta, mu) = rest.split_at(q);
    let (phi, theta, mu) = (phi.to_vec(), theta.to_vec(), mu[0]);
    if !ar_is_stationary(&phi) || !ma_is_invertible(&theta) {
        return Err(Error::Fit(format!("ARIMA{order}: optimum failed the unit-root check")));
    }
    let z = errors_of(&beta);
    let resid = arma_residuals(&z, mu, &phi, &theta);
    let n_eff = z.len() - p;
    let ssr: f64 = resid[p..].iter().map(|e| e * e).sum();
    let w_last = y[n - 1] - beta.iter().zip(x).map(|(b, c)| b * c[n - 1]).sum::<f64>();
    Ok(FittedSeriesModel {
        spec: spec.clone(),
        intercept: mu,
        regression_betas: beta,
        residual_variance: ssr / n_eff as f64,
        training_window: None,
        n_obs: n,
        n_effective: n_eff,
        state: ForecastState {
            z_tail: z[z.len() - p..].to_vec(),
            resid_tail: resid[resid.len() - q..].to_vec(),
            w_last,
            y_first: y[0],
            y_last: y[n - 1],
        },
        ar_coeffs: phi,
        ma_coeffs: theta,
    })
}

fn fit_naive(y: &[f64], spec: &SeriesModelSpec) -> Result<FittedSeriesModel> {
    let n = y.len();
    let min = if spec.kind == ModelKind::RwfDrift { 2 } else { 1 };
    if n < min {
        return Err(Error::InsufficientData(format!(
            "{} needs at least {min} observation(s)",
            spec.kind
        )));
    }
    let m = mean(y);
    let diffs = difference(y, 1);
    let (intercept, resid): (f64, Vec<f64>) = match spec.kind {
        ModelKind::Mean => (m, y.iter().map(|v| v - m).collect()),
        ModelKind::Rwf => (0.0, diffs.clone()),
        _ => {
            let drift = mean(&diffs);
            (drift, diffs.iter().map(|v| v - drift).collect())
        }
    };
    let residual_variance = if resid.is_empty() {
        0.0
    } else {
        resid.iter().map(|e| e * e).sum::<f64>() / resid.len() as f64
    };
    Ok(FittedSeriesModel {
        spec: spec.clone(),
        ar_coeffs: Vec::new(),
        ma_coeffs: Vec::new(),
        intercept,
        regression_betas: Vec::new(),
        residual_variance,
        training_window: None,
        n_obs: n,
        n_effective: resid.len(),
        state: ForecastState {
            z_tail: Vec::new(),
            resid_tail: Vec::new(),
            w_last: y[n - 1],
            y_first: y[0],
            y_last: y[n - 1],
        },
    })
}

/// In-sample one-step-ahead residuals of a fitted ARIMA-kind model.
pub fn one_step_residuals(model: &FittedSeriesModel, y: &[f64], x: &[Vec<f64>]) -> Vec<f64> {
    let d = model.spec.order.map_or(0, |o| o.d);
    let dy = difference(y, d);
    let dx: Vec<Vec<f64>> = x.iter().map(|c| difference(c, d)).collect();
    let z: Vec<f64> = (0..dy.len())
        .map(|t| {
            dy[t] - model
                .regression_betas
                .iter()
                .zip(&dx)
                .map(|(b, c)| b * c[t])
                .sum::<f64>()
        })
        .collect();
    let p = model.ar_coeffs.len();
    arma_residuals(&z, model.intercept, &model.ar_coeffs, &model.ma_coeffs)[p..].to_vec()
}

/// Trailing mean over the last `window` points; the first `window - 1`
/// outputs average whatever history exists.
pub fn sma(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::invalid("moving-average window must be at least 1"));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= window {
            sum -= series[i - window];
        }
        let count = (i + 1).min(window);
        out.push(sum / count as f64);
    }
    // recompute exactly to avoid drift from the running sum
    for (i, o) in out.iter_mut().enumerate() {
        let lo = (i + 1).saturating_sub(window);
        *o = series[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64;
    }
    Ok(out)
}

/// `r_t = y_{t-lag} - x_{t-lag}`, zero for the first `lag` entries.
pub fn lagged_diff(y: &[f64], x: &[f64], lag: usize) -> Result<Vec<f64>> {
    if y.len() != x.len() {
        return Err(Error::invalid(format!(
            "lagged difference needs equal lengths, got {} and {}",
            y.len(),
            x.len()
        )));
    }
    Ok((0..y.len())
        .map(|t| if t < lag { 0.0 } else { y[t - lag] - x[t - lag] })
        .collect())
}

pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != actual.len() {
        return Err(Error::invalid(format!(
            "MAE needs equal non-zero lengths, got {} and {}",
            predicted.len(),
            actual.len()
        )));
    }
    Ok(predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .sum::<f64>()
        / predicted.len() as f64)
}

/// `100 * (mae_m - mae_min) / mae_m` for every model.
pub fn pct_diff_from_min<K: Ord + Clone>(maes: &BTreeMap<K, f64>) -> Result<BTreeMap<K, f64>> {
    if maes.is_empty() {
        return Err(Error::invalid("no MAE values supplied"));
    }
    if maes.values().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("MAE values must be positive and finite"));
    }
    let min = maes.values().copied().fold(f64::INFINITY, f64::min);
    Ok(maes
        .iter()
        .map(|(k, v)| (k.clone(), 100.0 * (v - min) / v))
        .collect())
}

/// Fit outcome for one candidate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderScore {
    pub order: Order,
    pub aicc: Option<f64>,
}

/// Picks the minimum-AICc order; ties go to smaller `p + q`, then smaller `p`.
pub fn order_select(y: &[f64], x: &[Vec<f64>], grid: &[Order]) -> Result<(Order, Vec<OrderScore>)> {
    use rayon::prelude::*;
    if grid.is_empty() {
        return Err(Error::invalid("order grid is empty"));
    }
    let columns: Vec<String> = (0..x.len()).map(|i| format!("x{i}")).collect();
    let scores: Vec<OrderScore> = grid
        .par_iter()
        .map(|&order| {
            let spec = if x.is_empty() {
                SeriesModelSpec::arima(order)
            } else {
                SeriesModelSpec::regression(ModelKind::ArimaReg, order, columns.clone())
            };
            let aicc = fit(y, x, &spec).ok().map(|m| m.aicc()).filter(|a| !a.is_nan());
            OrderScore { order, aicc }
        })
        .collect();
    let best = scores
        .iter()
        .filter_map(|s| s.aicc.map(|a| (a, s.order)))
        .min_by(|(a, oa), (b, ob)| {
            a.total_cmp(b)
                .then((oa.p + oa.q).cmp(&(ob.p + ob.q)))
                .then(oa.p.cmp(&ob.p))
                .then(oa.d.cmp(&ob.d))
        })
        .map(|(_, o)| o)
        .ok_or_else(|| Error::Fit("every candidate order failed to fit".into()))?;
    Ok((best, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut out = Vec::with_capacity(n);
        let mut prev = 0.0;
        for _ in 0..(n + 100) {
            prev = phi * prev + noise.sample(&mut rng);
            out.push(prev);
        }
        out.split_off(100)
    }

    /// Roots of 1 - c_1 z - ... - c_k z^k via companion-matrix eigenvalues:
    /// stationary iff every eigenvalue has modulus < 1.
    fn companion_stable(c: &[f64]) -> bool {
        let k = c.len();
        if k == 0 {
            return true;
        }
        let m = DMatrix::from_fn(k, k, |r, col| {
            if r == 0 {
                c[col]
            } else if r == col + 1 {
                1.0
            } else {
                0.0
            }
        });
        m.complex_eigenvalues().iter().all(|e| e.norm() < 1.0)
    }

    #[test]
    fn mean_model_on_constant() {
        let m = fit(&[5.0; 12], &[], &SeriesModelSpec::naive(ModelKind::Mean)).unwrap();
        assert_eq!(m.intercept, 5.0);
        assert_eq!(m.residual_variance, 0.0);
    }

    #[test]
    fn naive_forecasts() {
        let rwf = fit(&[3.0, 1.0, 8.0], &[], &SeriesModelSpec::naive(ModelKind::Rwf)).unwrap();
        assert_eq!(rwf.forecast(3, &[]).unwrap(), vec![8.0, 8.0, 8.0]);
        let drift = fit(&[1.0, 2.0, 3.0], &[], &SeriesModelSpec::naive(ModelKind::RwfDrift)).unwrap();
        assert_eq!(drift.forecast(3, &[]).unwrap(), vec![4.0, 5.0, 6.0]);
        let mean = fit(&[2.0, 4.0, 6.0], &[], &SeriesModelSpec::naive(ModelKind::Mean)).unwrap();
        assert_eq!(mean.forecast(2, &[]).unwrap(), vec![4.0, 4.0]);
        assert!(fit(&[1.0], &[], &SeriesModelSpec::naive(ModelKind::RwfDrift)).is_err());
    }

    #[test]
    fn ar1_recovered() {
        let y = ar1(0.6, 500, 7);
        let m = fit(&y, &[], &SeriesModelSpec::arima(Order::new(1, 0, 0))).unwrap();
        assert!((0.5..=0.7).contains(&m.ar_coeffs[0]), "{}", m.ar_coeffs[0]);
        assert!(m.intercept.abs() < 0.3);
    }

    #[test]
    fn regression_beta_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..500).map(|_| 5.0 + 2.0 * normal.sample(&mut rng)).collect();
        let noise = ar1(0.6, 500, 12);
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, e)| 2.0 * a + e).collect();
        let spec = SeriesModelSpec::regression(ModelKind::ArimaReg, Order::new(1, 0, 0), vec!["x".into()]);
        let m = fit(&y, &[x], &spec).unwrap();
        assert!((1.8..=2.2).contains(&m.regression_betas[0]), "{}", m.regression_betas[0]);
        assert!((0.5..=0.7).contains(&m.ar_coeffs[0]), "{}", m.ar_coeffs[0]);
    }

    #[test]
    fn too_short_series_rejected() {
        let err = fit(&[1.0; 11], &[], &SeriesModelSpec::arima(Order::new(1, 0, 1))).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(SeriesModelSpec::arima(Order::new(4, 0, 0)).validate().is_err());
        assert!(SeriesModelSpec::arima(Order::new(0, 2, 0)).validate().is_err());
        assert!(SeriesModelSpec::regression(ModelKind::ArimaReg, Order::new(1, 0, 0), vec![]).validate().is_err());
        let mut naive = SeriesModelSpec::naive(ModelKind::Mean);
        naive.order = Some(Order::new(0, 0, 0));
        assert!(naive.validate().is_err());
    }

    #[test]
    fn forecast_requires_future_regressors() {
        let x: Vec<f64> = (0..30).map(|i| (i % 5) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let spec = SeriesModelSpec::regression(ModelKind::ArimaReg, Order::new(0, 0, 0), vec!["x".into()]);
        let m = fit(&y, &[x], &spec).unwrap();
        assert!(m.forecast(3, &[]).is_err());
        assert!(m.forecast(3, &[vec![1.0, 2.0]]).is_err());
        let f = m.forecast(3, &[vec![1.0, 2.0, 4.0]]).unwrap();
        for (got, want) in f.iter().zip([4.0, 7.0, 13.0]) {
            assert!((got - want).abs() < 1e-6, "{f:?}");
        }
        assert!(m.forecast(0, &[]).unwrap().is_empty());
    }

    #[test]
    fn differenced_model_forecasts_trend() {
        let y: Vec<f64> = (0..30).map(|i| 2.0 * i as f64 + 1.0).collect();
        let m = fit(&y, &[], &SeriesModelSpec::arima(Order::new(0, 1, 0))).unwrap();
        let f = m.forecast(3, &[]).unwrap();
        for (k, v) in f.iter().enumerate() {
            assert!((v - (59.0 + 2.0 * (k + 1) as f64)).abs() < 1e-6, "{f:?}");
        }
    }

    #[test]
    fn zero_regressor_equals_plain_arima() {
        let y = ar1(0.5, 60, 3);
        let plain = fit(&y, &[], &SeriesModelSpec::arima(Order::new(1, 0, 1))).unwrap();
        let spec = SeriesModelSpec::regression(ModelKind::ArimaReg, Order::new(1, 0, 1), vec!["zero".into()]);
        let reg = fit(&y, &[vec![0.0; 60]], &spec).unwrap();
        assert_eq!(reg.ar_coeffs, plain.ar_coeffs);
        assert_eq!(reg.intercept, plain.intercept);
        assert_eq!(
            reg.forecast(5, &[vec![0.0; 5]]).unwrap(),
            plain.forecast(5, &[]).unwrap()
        );
    }

    #[test]
    fn constant_series_fits() {
        let m = fit(&[4.0; 26], &[], &SeriesModelSpec::arima(Order::new(1, 0, 1))).unwrap();
        for v in m.forecast(7, &[]).unwrap() {
            assert!((v - 4.0).abs() < 1e-6);
        }
        let zero = fit(&[0.0; 26], &[], &SeriesModelSpec::arima(Order::new(2, 1, 1))).unwrap();
        assert!(zero.forecast(7, &[]).unwrap().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn residuals_centred_on_stationary_data() {
        let y = ar1(0.6, 500, 21);
        let m = fit(&y, &[], &SeriesModelSpec::arima(Order::new(1, 0, 1))).unwrap();
        let r = one_step_residuals(&m, &y, &[]);
        assert!(mean(&r).abs() < 0.5 * m.residual_variance.sqrt());
    }

    #[test]
    fn model_json_roundtrip_bit_exact() {
        let y = ar1(0.6, 80, 5);
        let m = fit(&y, &[], &SeriesModelSpec::arima(Order::new(2, 0, 1)))
            .unwrap()
            .with_window(NaiveDate::from_ymd_opt(2014, 2, 11).unwrap(), NaiveDate::from_ymd_opt(2014, 5, 1).unwrap());
        let back = FittedSeriesModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.ar_coeffs.iter().zip(&m.ar_coeffs) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn sma_examples() {
        assert_eq!(sma(&[3.0; 10], 7).unwrap(), vec![3.0; 10]);
        assert_eq!(sma(&[0.0, 7.0], 7).unwrap(), vec![0.0, 3.5]);
        let s = sma(&[0.0, 0.0, 7.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 7).unwrap();
        assert_eq!(s[8], 1.0);
        assert!(sma(&[1.0], 0).is_err());
    }

    #[test]
    fn lagged_diff_examples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        assert_eq!(lagged_diff(&a, &a, 7).unwrap(), vec![0.0; 9]);
        let b: Vec<f64> = a.iter().map(|v| v - 3.0).collect();
        assert_eq!(
            lagged_diff(&a, &b, 7).unwrap(),
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0, 3.0]
        );
        assert_eq!(lagged_diff(&[5.0, 1.0], &[2.0, 4.0], 0).unwrap(), vec![3.0, -3.0]);
        assert!(lagged_diff(&[1.0], &[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 1.5);
        assert_eq!(mae(&[3.5, 2.5], &[1.0, 0.0]).unwrap(), 2.5);
        assert!(mae(&[], &[]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pct_diff_examples() {
        let m = BTreeMap::from([("ARIMA", 13.05), ("ARIMA Reg.", 8.20)]);
        let p = pct_diff_from_min(&m).unwrap();
        assert!((p["ARIMA"] - 37.21).abs() < 0.1);
        assert_eq!(p["ARIMA Reg."], 0.0);
        let m = BTreeMap::from([("Mean", 31.50), ("ARIMA Reg.", 8.20)]);
        assert!((pct_diff_from_min(&m).unwrap()["Mean"] - 73.98).abs() < 0.1);
        assert_eq!(pct_diff_from_min(&BTreeMap::from([("m", 2.0)])).unwrap()["m"], 0.0);
        assert!(pct_diff_from_min(&BTreeMap::from([("m", 0.0)])).is_err());
        assert!(pct_diff_from_min::<&str>(&BTreeMap::new()).is_err());
    }

    #[test]
    fn order_select_single_and_ar() {
        let y = ar1(0.9, 300, 99);
        let (o, _) = order_select(&y, &[], &[Order::new(2, 0, 1)]).unwrap();
        assert_eq!(o, Order::new(2, 0, 1));
        let (o, scores) = order_select(&y, &[], &Order::default_grid()).unwrap();
        assert!(o.p >= 1 || o.d == 1, "{o}");
        assert_eq!(scores.len(), 24);
        assert!(order_select(&y, &[], &[]).is_err());
    }

    /// Minimum AICc over the full 24-order grid overfits white noise more
    /// often than a stepwise search would; (0,0,0) stays the modal choice.
    #[test]
    fn order_select_white_noise() {
        let mut counts: BTreeMap<Order, usize> = BTreeMap::new();
        for seed in 0..50 {
            let y = ar1(0.0, 300, 1000 + seed);
            let (o, _) = order_select(&y, &[], &Order::default_grid()).unwrap();
            *counts.entry(o).or_default() += 1;
            assert_eq!(o.d, 0, "seed {seed}: {o}");
        }
        let white = counts.get(&Order::new(0, 0, 0)).copied().unwrap_or(0);
        assert!(counts.values().all(|&c| c <= white), "{counts:?}");
        assert!(white >= 12, "{counts:?}");
    }

    #[test]
    fn strong_ar_selects_ar_term() {
        for seed in 0..5 {
            let y = ar1(0.9, 300, 500 + seed);
            let (o, _) = order_select(&y, &[], &Order::default_grid()).unwrap();
            assert!(o.p >= 1, "seed {seed}: {o}");
        }
    }

    proptest! {
        #[test]
        fn unit_root_check_matches_companion_eigenvalues(c in prop::collection::vec(-2.0f64..2.0, 0..4)) {
            prop_assert_eq!(ar_is_stationary(&c), companion_stable(&c));
            let neg: Vec<f64> = c.iter().map(|v| -v).collect();
            prop_assert_eq!(ma_is_invertible(&c), companion_stable(&neg));
        }

        #[test]
        fn fitted_polynomials_pass_unit_root_check(seed in 0u64..200, p in 0usize..3, q in 0usize..2, d in 0usize..2) {
            let y = ar1(0.7, 60, seed);
            let m = fit(&y, &[], &SeriesModelSpec::arima(Order::new(p, d, q))).unwrap();
            prop_assert!(ar_is_stationary(&m.ar_coeffs));
            prop_assert!(ma_is_invertible(&m.ma_coeffs));
            prop_assert!(m.residual_variance >= 0.0);
        }

        #[test]
        fn naive_closed_forms(y in prop::collection::vec(-100.0f64..100.0, 2..30), h in 1usize..10) {
            let mean_m = fit(&y, &[], &SeriesModelSpec::naive(ModelKind::Mean)).unwrap();
            let avg = y.iter().sum::<f64>() / y.len() as f64;
            prop_assert!(mean_m.forecast(h, &[]).unwrap().iter().all(|v| *v == avg));
            let rwf = fit(&y, &[], &SeriesModelSpec::naive(ModelKind::Rwf)).unwrap();
            prop_assert!(rwf.forecast(h, &[]).unwrap().iter().all(|v| *v == y[y.len() - 1]));
            let drift = fit(&y, &[], &SeriesModelSpec::naive(ModelKind::RwfDrift)).unwrap();
            let last = y[y.len() - 1];
            let slope = (last - y[0]) / (y.len() - 1) as f64;
            for (k, v) in drift.forecast(h, &[]).unwrap().iter().enumerate() {
                prop_assert_eq!(*v, last + (k + 1) as f64 * slope);
            }
        }

        #[test]
        fn mae_properties(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..30), c in -1e3f64..1e3) {
            let p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
            let a: Vec<f64> = pairs.iter().map(|x| x.1).collect();
            let base = mae(&p, &a).unwrap();
            prop_assert!(base >= 0.0);
            // flipping the sign of every error
            let flipped: Vec<f64> = a.iter().zip(&p).map(|(ai, pi)| 2.0 * ai - pi).collect();
            prop_assert!((mae(&flipped, &a).unwrap() - base).abs() < 1e-9);
            let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
            let as_: Vec<f64> = a.iter().map(|v| v + c).collect();
            prop_assert!((mae(&ps, &as_).unwrap() - base).abs() < 1e-9);
        }

        #[test]
        fn pct_diff_range(vals in prop::collection::vec(0.01f64..100.0, 1..8)) {
            let m: BTreeMap<usize, f64> = vals.iter().copied().enumerate().collect();
            let p = pct_diff_from_min(&m).unwrap();
            let argmin = vals.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            prop_assert_eq!(p[&argmin], 0.0);
            for v in p.values() {
                prop_assert!((0.0..100.0).contains(v));
            }
        }
    }
}
