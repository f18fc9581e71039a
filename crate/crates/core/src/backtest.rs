//! VaR forecast evaluation: coverage and independence tests, the score
//! autocorrelation diagnostic and the quantile loss.

use crate::error::{domain, Error, Result};
use crate::mcs::{mcs, McsOptions, McsResult};
use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// A test statistic with its asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Set when a likelihood cell was empty and `0 ln 0 = 0` was applied.
    pub degenerate: bool,
}

fn chi2_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    ChiSquared::new(dof).map(|d| d.sf(x)).unwrap_or(f64::NAN)
}

/// `x ln y` with `0 ln 0 = 0`.
fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        domain(format!("level must lie in (0, 1), got {level}"))
    }
}

/// Violation indicators: realized loss strictly above the forecast.
pub fn hit_sequence(realized: &[f64], var: &[f64]) -> Result<Vec<bool>> {
    if realized.len() != var.len() {
        return Err(Error::Contract(format!(
            "{} realized losses for {} forecasts",
            realized.len(),
            var.len()
        )));
    }
    Ok(realized.iter().zip(var).map(|(x, q)| x > q).collect())
}

/// Kupiec unconditional coverage test; violations are expected with
/// probability `1 - level`.
pub fn lruc(hits: &[bool], level: f64) -> Result<TestResult> {
    check_level(level)?;
    if hits.is_empty() {
        return domain("coverage test needs at least one observation");
    }
    let t = hits.len() as f64;
    let n = hits.iter().filter(|&&h| h).count() as f64;
    let p0 = 1.0 - level;
    let phat = n / t;
    let null = xlny(t - n, 1.0 - p0) + xlny(n, p0);
    let alt = xlny(t - n, 1.0 - phat) + xlny(n, phat);
    let statistic = (-2.0 * (null - alt)).max(0.0);
    Ok(TestResult {
        statistic,
        p_value: chi2_sf(statistic, 1.0),
        degenerate: n == 0.0 || n == t,
    })
}

/// Christoffersen conditional coverage: LRUC plus the first-order Markov
/// independence statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCoverage {
    pub lruc: TestResult,
    pub lr_ind: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub degenerate: bool,
}

pub fn lrcc(hits: &[bool], level: f64) -> Result<ConditionalCoverage> {
    if hits.len() < 2 {
        return domain("conditional coverage needs at least two observations");
    }
    let uc = lruc(hits, level)?;
    let mut n = [[0.0f64; 2]; 2];
    for w in hits.windows(2) {
        n[usize::from(w[0])][usize::from(w[1])] += 1.0;
    }
    let from0 = n[0][0] + n[0][1];
    let from1 = n[1][0] + n[1][1];
    let pi01 = if from0 > 0.0 { n[0][1] / from0 } else { 0.0 };
    let pi11 = if from1 > 0.0 { n[1][1] / from1 } else { 0.0 };
    let pi = (n[0][1] + n[1][1]) / (from0 + from1);
    let restricted = xlny(n[0][0] + n[1][0], 1.0 - pi) + xlny(n[0][1] + n[1][1], pi);
    let markov = xlny(n[0][0], 1.0 - pi01)
        + xlny(n[0][1], pi01)
        + xlny(n[1][0], 1.0 - pi11)
        + xlny(n[1][1], pi11);
    let lr_ind = (-2.0 * (restricted - markov)).max(0.0);
    let statistic = uc.statistic + lr_ind;
    let degenerate = uc.degenerate || from0 == 0.0 || from1 == 0.0;
    Ok(ConditionalCoverage {
        lruc: uc,
        lr_ind,
        statistic,
        p_value: chi2_sf(statistic, 2.0),
        degenerate,
    })
}

/// Least squares with an explicit rank check. Returns `(coefficients, fitted)`.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, what: &str) -> Result<(DVector<f64>, DVector<f64>)> {
    let cols = x.ncols();
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * (x.nrows().max(cols) as f64);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < cols {
        return Err(Error::Numeric(format!(
            "{what}: singular design, rank {rank} of {cols} columns"
        )));
    }
    let b = svd
        .solve(y, tol)
        .map_err(|e| Error::Numeric(format!("{what}: {e}")))?;
    let fitted = x * &b;
    Ok((b, fitted))
}

/// Engle–Manganelli dynamic quantile test.
///
/// Regresses `hit_t - (1 - level)` on an intercept, `lags` lagged hit
/// deviations and the contemporaneous forecast.
pub fn dq(hits: &[bool], var: &[f64], level: f64, lags: usize) -> Result<TestResult> {
    check_level(level)?;
    if hits.len() != var.len() {
        return Err(Error::Contract(format!(
            "{} hits for {} forecasts",
            hits.len(),
            var.len()
        )));
    }
    if hits.len() <= lags + 2 {
        return domain(format!(
            "DQ test needs more than {} observations, got {}",
            lags + 2,
            hits.len()
        ));
    }
    let p = 1.0 - level;
    let dev: Vec<f64> = hits.iter().map(|&h| f64::from(u8::from(h)) - p).collect();
    let rows = hits.len() - lags;
    let cols = lags + 2;
    let x = DMatrix::from_fn(rows, cols, |r, c| {
        let t = r + lags;
        match c {
            0 => 1.0,
            c if c <= lags => dev[t - c],
            _ => var[t],
        }
    });
    let y = DVector::from_iterator(rows, dev[lags..].iter().copied());
    // b' X'X b = |X b|^2
    let (_, fitted) = least_squares(&x, &y, "DQ regression")?;
    let statistic = fitted.norm_squared() / (p * (1.0 - p));
    Ok(TestResult {
        statistic,
        p_value: chi2_sf(statistic, cols as f64),
        degenerate: false,
    })
}

/// Lagrange-multiplier test for autocorrelation of a score sequence:
/// `n R^2` from regressing the score on its own `lags` lags.
pub fn lm_score_test(scores: &[f64], lags: usize) -> Result<TestResult> {
    if lags == 0 {
        return domain("LM test needs at least one lag");
    }
    if scores.len() <= lags + 2 {
        return domain(format!(
            "LM test needs more than {} observations, got {}",
            lags + 2,
            scores.len()
        ));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Data(format!("non-finite score at index {i}")));
    }
    let first = scores[0];
    if scores.iter().all(|&s| s == first) {
        return Err(Error::Data("LM test on a constant score path".into()));
    }
    let rows = scores.len() - lags;
    let x = DMatrix::from_fn(rows, lags + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            scores[r + lags - c]
        }
    });
    let y = DVector::from_iterator(rows, scores[lags..].iter().copied());
    let (_, fitted) = least_squares(&x, &y, "LM regression")?;
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::Data("LM test on a constant score path".into()));
    }
    let ssr: f64 = (&y - &fitted).norm_squared();
    let r2 = (1.0 - ssr / sst).max(0.0);
    let statistic = rows as f64 * r2;
    Ok(TestResult {
        statistic,
        p_value: chi2_sf(statistic, lags as f64),
        degenerate: false,
    })
}

/// Quantile (pinball) loss of forecast `q` for realized loss `x`.
pub fn pinball_loss(x: f64, q: f64, level: f64) -> f64 {
    let hit = if x > q { 1.0 } else { 0.0 };
    (hit - (1.0 - level)) * (x - q)
}

/// One forecast row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarForecast {
    pub date: NaiveDate,
    pub level: f64,
    pub var_forecast: f64,
    pub realized_loss: f64,
    pub hit: bool,
}

impl VarForecast {
    pub fn new(date: NaiveDate, level: f64, var_forecast: f64, realized_loss: f64) -> Self {
        Self {
            date,
            level,
            var_forecast,
            realized_loss,
            hit: realized_loss > var_forecast,
        }
    }
}

/// A model's dated forecasts at one or more levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarForecastSeries {
    pub model: String,
    pub rows: Vec<VarForecast>,
}

impl VarForecastSeries {
    pub fn new(model: impl Into<String>, rows: Vec<VarForecast>) -> Result<Self> {
        let s = Self {
            model: model.into(),
            rows,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for r in &self.rows {
            check_level(r.level)?;
            if r.hit != (r.realized_loss > r.var_forecast) {
                return Err(Error::Data(format!(
                    "{}: hit flag on {} at level {} disagrees with the forecast",
                    self.model, r.date, r.level
                )));
            }
            if !seen.insert((r.date, r.level.to_bits())) {
                return Err(Error::Data(format!(
                    "{}: duplicate row for {} at level {}",
                    self.model, r.date, r.level
                )));
            }
        }
        Ok(())
    }

    /// Rows at `level`, in date order.
    pub fn at_level(&self, level: f64) -> Vec<VarForecast> {
        let mut rows: Vec<VarForecast> = self
            .rows
            .iter()
            .filter(|r| (r.level - level).abs() < 1e-12)
            .copied()
            .collect();
        rows.sort_by_key(|r| r.date);
        rows
    }

    pub fn levels(&self) -> Vec<f64> {
        let mut levels: Vec<f64> = self.rows.iter().map(|r| r.level).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        levels
    }
}

/// Test results for one model at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: f64,
    pub observations: usize,
    pub violations: usize,
    pub expected: f64,
    pub lruc: TestResult,
    pub lrcc: ConditionalCoverage,
    /// `None` when the regression design was singular (see `dq_error`).
    pub dq: Option<TestResult>,
    pub dq_error: Option<String>,
    pub mean_loss: f64,
    pub mcs_rank: usize,
    pub mcs_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub model: String,
    pub levels: Vec<LevelReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOptions {
    pub dq_lags: usize,
    pub mcs: McsOptions,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            dq_lags: 4,
            mcs: McsOptions::default(),
        }
    }
}

/// Backtests every model at every level and ranks them by MCS on pinball
/// loss. Models must share the same forecast dates at each level.
pub fn evaluate(
    forecasts: &[VarForecastSeries],
    levels: &[f64],
    opts: &EvaluateOptions,
) -> Result<(Vec<BacktestReport>, Vec<(f64, McsResult)>)> {
    if forecasts.is_empty() {
        return Err(Error::Contract("no models to evaluate".into()));
    }
    if levels.is_empty() {
        return Err(Error::Contract("no levels to evaluate".into()));
    }
    for f in forecasts {
        f.validate()?;
    }
    let mut reports: Vec<BacktestReport> = forecasts
        .iter()
        .map(|f| BacktestReport {
            model: f.model.clone(),
            levels: Vec::new(),
        })
        .collect();
    let mut rankings = Vec::new();
    for &level in levels {
        check_level(level)?;
        let per_model: Vec<Vec<VarForecast>> = forecasts.iter().map(|f| f.at_level(level)).collect();
        let dates: Vec<NaiveDate> = per_model[0].iter().map(|r| r.date).collect();
        if dates.is_empty() {
            return Err(Error::Data(format!(
                "{} has no forecasts at level {level}",
                forecasts[0].model
            )));
        }
        for (f, rows) in forecasts.iter().zip(&per_model) {
            if rows.len() != dates.len() || rows.iter().zip(&dates).any(|(r, d)| r.date != *d) {
                return Err(Error::Data(format!(
                    "{} forecasts at level {level} are not aligned with {}",
                    f.model, forecasts[0].model
                )));
            }
        }
        let losses: Vec<Vec<f64>> = per_model
            .iter()
            .map(|rows| {
                rows.iter()
                    .map(|r| pinball_loss(r.realized_loss, r.var_forecast, level))
                    .collect()
            })
            .collect();
        let ranking = mcs(&losses, &opts.mcs)?;
        for (m, rows) in per_model.iter().enumerate() {
            let hits: Vec<bool> = rows.iter().map(|r| r.hit).collect();
            let var: Vec<f64> = rows.iter().map(|r| r.var_forecast).collect();
            let (dq_res, dq_error) = match dq(&hits, &var, level, opts.dq_lags) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            reports[m].levels.push(LevelReport {
                level,
                observations: hits.len(),
                violations: hits.iter().filter(|&&h| h).count(),
                expected: (1.0 - level) * hits.len() as f64,
                lruc: lruc(&hits, level)?,
                lrcc: lrcc(&hits, level)?,
                dq: dq_res,
                dq_error,
                mean_loss: ranking.entries[m].mean_loss,
                mcs_rank: ranking.entries[m].rank,
                mcs_p: ranking.entries[m].p_value,
            });
        }
        rankings.push((level, ranking));
    }
    Ok((reports, rankings))
}
