//! Prices to model-ready losses: log returns, sign convention, post-closure
//! winsorization, the annual seasonal cycle and summary statistics.

use crate::dcs::SeasonalCycle;
use crate::error::{Error, Result};
use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// Dated positive closing prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

fn check_dates(dates: &[NaiveDate]) -> Result<()> {
    if let Some(i) = dates.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Data(format!(
            "dates must be strictly increasing: {} follows {}",
            dates[i + 1],
            dates[i]
        )));
    }
    Ok(())
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(Error::Data(format!(
                "{} dates for {} prices",
                dates.len(),
                closes.len()
            )));
        }
        check_dates(&dates)?;
        if let Some(i) = closes.iter().position(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Data(format!(
                "price on {} must be positive and finite, got {}",
                dates[i], closes[i]
            )));
        }
        Ok(Self { dates, closes })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Log returns as observed.
    Raw,
    /// Negated returns, so large values are large losses.
    Loss,
}

/// Dated log returns with an explicit sign convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
    orientation: Orientation,
}

impl ReturnSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>, orientation: Orientation) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::Data(format!(
                "{} dates for {} returns",
                dates.len(),
                values.len()
            )));
        }
        check_dates(&dates)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite return on {}", dates[i])));
        }
        Ok(Self {
            dates,
            values,
            orientation,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `R_t = ln P_t - ln P_{t-1}`, dated by the later day.
pub fn log_returns(prices: &PriceSeries) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 prices for a return, got {}",
            prices.len()
        )));
    }
    let values = prices
        .closes
        .windows(2)
        .map(|w| w[1].ln() - w[0].ln())
        .collect();
    ReturnSeries::new(prices.dates[1..].to_vec(), values, Orientation::Raw)
}

/// Negates raw returns into losses.
pub fn to_loss(returns: &ReturnSeries) -> Result<ReturnSeries> {
    if returns.orientation == Orientation::Loss {
        return Err(Error::Contract("series is already loss-oriented".into()));
    }
    Ok(ReturnSeries {
        dates: returns.dates.clone(),
        values: returns.values.iter().map(|v| -v).collect(),
        orientation: Orientation::Loss,
    })
}

/// Negates losses back into raw returns.
pub fn to_raw(losses: &ReturnSeries) -> Result<ReturnSeries> {
    if losses.orientation == Orientation::Raw {
        return Err(Error::Contract("series is already raw-oriented".into()));
    }
    Ok(ReturnSeries {
        dates: losses.dates.clone(),
        values: losses.values.iter().map(|v| -v).collect(),
        orientation: Orientation::Raw,
    })
}

/// Winsorization applied to returns that follow a market closure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VacationPolicy {
    pub enabled: bool,
    /// Minimum number of consecutive non-trading calendar days that
    /// qualifies as a closure.
    pub gap_days: u32,
    /// Clip bound in rolling standard deviations.
    pub clip: f64,
    /// Number of preceding returns in the rolling window.
    pub window: usize,
    /// Fewest preceding returns needed before any clipping is attempted.
    pub min_history: usize,
}

impl Default for VacationPolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            gap_days: 3,
            clip: 3.0,
            window: 250,
            min_history: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentRecord {
    pub date: NaiveDate,
    pub original: f64,
    pub adjusted: f64,
    pub rule: String,
}

/// Clips the first return after every qualifying closure to
/// `mean ± clip * sd` of the preceding `window` (already adjusted) returns.
///
/// Trading days are the dates of the series itself; weekends alone leave a
/// gap of two days and so never qualify under the default threshold.
pub fn vacation_adjust(
    returns: &ReturnSeries,
    policy: &VacationPolicy,
) -> Result<(ReturnSeries, Vec<AdjustmentRecord>)> {
    if !policy.enabled {
        return Ok((returns.clone(), Vec::new()));
    }
    if !(policy.clip > 0.0) || policy.window < 2 {
        return Err(Error::Domain(format!(
            "vacation policy needs clip > 0 and window >= 2, got {policy:?}"
        )));
    }
    let mut values = returns.values.clone();
    let mut log = Vec::new();
    for i in 1..values.len() {
        let gap = (returns.dates[i] - returns.dates[i - 1]).num_days() - 1;
        if gap < i64::from(policy.gap_days) {
            continue;
        }
        let start = i.saturating_sub(policy.window);
        let history = &values[start..i];
        if history.len() < policy.min_history.max(2) {
            continue;
        }
        let n = history.len() as f64;
        let mean = history.iter().sum::<f64>() / n;
        let sd = (history.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let lo = mean - policy.clip * sd;
        let hi = mean + policy.clip * sd;
        let used = history.len();
        let original = values[i];
        let adjusted = original.clamp(lo, hi);
        if adjusted != original {
            values[i] = adjusted;
            log.push(AdjustmentRecord {
                date: returns.dates[i],
                original,
                adjusted,
                rule: format!(
                    "closure of {gap} days; clipped to mean ± {} sd of {used} prior returns",
                    policy.clip
                ),
            });
        }
    }
    Ok((
        ReturnSeries {
            dates: returns.dates.clone(),
            values,
            orientation: returns.orientation,
        },
        log,
    ))
}

/// Series whose annual pattern becomes the cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeasonalTarget {
    /// The returns themselves, non-trading days counted as zero.
    Raw,
    /// `ln(|r - mean| + 1e-8)`, non-trading days set to the trading-day mean.
    LogAbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeasonalMethod {
    /// Remove a centered 2x366 moving-average trend, then average by position.
    MovingAverage,
    /// Average the target by position directly.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonalOptions {
    pub target: SeasonalTarget,
    pub method: SeasonalMethod,
}

impl Default for SeasonalOptions {
    fn default() -> Self {
        Self {
            target: SeasonalTarget::LogAbs,
            method: SeasonalMethod::MovingAverage,
        }
    }
}

const CYCLE: usize = SeasonalCycle::LENGTH;

/// Expands the series onto a calendar of 366-day years: every calendar day
/// from the first to the last date, plus a February 29 slot in common years.
/// Returns `(position, value, is_trading_day)` per slot.
fn cycle_timeline(dates: &[NaiveDate], target: &[f64], fill: f64) -> Vec<(usize, f64, bool)> {
    let mut out = Vec::new();
    let mut k = 0;
    let mut day = dates[0];
    let last = dates[dates.len() - 1];
    while day <= last {
        let pos = SeasonalCycle::position(day);
        if day.month() == 3 && day.day() == 1 && !day.leap_year() {
            out.push((59, fill, false));
        }
        if k < dates.len() && dates[k] == day {
            out.push((pos, target[k], true));
            k += 1;
        } else {
            out.push((pos, fill, false));
        }
        day = day.succ_opt().expect("date within range");
    }
    out
}

/// Annual 366-position cycle of the target series, centered to mean zero.
pub fn seasonal_decompose(returns: &ReturnSeries, opts: &SeasonalOptions) -> Result<SeasonalCycle> {
    if returns.len() < 2 {
        return Err(Error::Data("seasonal decomposition needs data".into()));
    }
    let span = (returns.dates[returns.len() - 1] - returns.dates[0]).num_days() + 1;
    if span < 2 * CYCLE as i64 {
        return Err(Error::Data(format!(
            "seasonal decomposition needs at least {} calendar days of span, got {span}",
            2 * CYCLE
        )));
    }
    let (target, fill): (Vec<f64>, f64) = match opts.target {
        SeasonalTarget::Raw => (returns.values.clone(), 0.0),
        SeasonalTarget::LogAbs => {
            let n = returns.len() as f64;
            let m = returns.values.iter().sum::<f64>() / n;
            let t: Vec<f64> = returns.values.iter().map(|r| ((r - m).abs() + 1e-8).ln()).collect();
            let mean = t.iter().sum::<f64>() / n;
            (t, mean)
        }
    };
    let timeline = cycle_timeline(&returns.dates, &target, fill);
    let mut sums = vec![0.0; CYCLE];
    let mut counts = vec![0usize; CYCLE];
    match opts.method {
        SeasonalMethod::Direct => {
            for &(pos, x, trading) in &timeline {
                if trading {
                    sums[pos] += x;
                    counts[pos] += 1;
                }
            }
        }
        SeasonalMethod::MovingAverage => {
            let half = CYCLE / 2;
            let xs: Vec<f64> = timeline.iter().map(|e| e.1).collect();
            // running prefix sums keep the 367-term window O(1) per point
            let mut prefix = vec![0.0; xs.len() + 1];
            for (i, x) in xs.iter().enumerate() {
                prefix[i + 1] = prefix[i] + x;
            }
            for i in half..xs.len() - half {
                let inner = prefix[i + half] - prefix[i + 1 - half];
                let trend = (inner + 0.5 * (xs[i - half] + xs[i + half])) / CYCLE as f64;
                let pos = timeline[i].0;
                sums[pos] += xs[i] - trend;
                counts[pos] += 1;
            }
        }
    }
    let mut values: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    let mean = values.iter().sum::<f64>() / CYCLE as f64;
    values.iter_mut().for_each(|v| *v -= mean);
    SeasonalCycle::new(values)
}

/// Sample summary statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
    /// `None` for a constant series.
    pub skewness: Option<f64>,
    /// Excess kurtosis; `None` for a constant series.
    pub kurtosis: Option<f64>,
    /// Set when the series is constant.
    pub degenerate: bool,
}

pub fn describe(values: &[f64]) -> Result<Summary> {
    if values.len() < 30 {
        return Err(Error::Data(format!(
            "summary needs at least 30 observations, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("summary input contains non-finite values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in values {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let degenerate = m2 == 0.0;
    Ok(Summary {
        count: values.len(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        sd: (m2 * n / (n - 1.0)).sqrt(),
        skewness: (!degenerate).then(|| m3 / m2.powf(1.5)),
        kurtosis: (!degenerate).then(|| m4 / (m2 * m2) - 3.0),
        degenerate,
    })
}
