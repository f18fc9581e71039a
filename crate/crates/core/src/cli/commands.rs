//! The pipeline verbs. Every command reads and writes files under the
//! configured output directory.

use super::config::RunConfig;
use super::plot;
use super::CliError;
use crate::backtest::{evaluate, pinball_loss, EvaluateOptions, VarForecast, VarForecastSeries};
use crate::dataprep::{describe, log_returns, seasonal_decompose, to_loss, vacation_adjust};
use crate::dcs::{
    dcs_update, fit_mle, forecast_one_step, guard_state, link, scores, DcsCoefficients, DcsState, ModelDocument,
    SeasonalCycle,
};
use crate::error::Error;
use crate::intraday::{
    intraday_filter, pearson_adjacency, simulate_market, IntradayForecast, IntradayOptions, IntradayPanel,
    SlotCoefficients,
};
use crate::io::{
    fmt_f64, load_intraday, read_daily_prices, read_table, write_atomic, write_csv, Session,
};
use crate::backtest::lm_score_test;
use crate::mcs::mcs;
use crate::nig::NigParams;
use crate::par;
use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DAILY_LOSS: &str = "daily_loss.csv";
pub const INTRADAY_LOSS: &str = "intraday_loss.csv";
pub const SEASONAL_CYCLE: &str = "seasonal_cycle.csv";
pub const PEARSON: &str = "pearson.csv";
pub const VACATION_LOG: &str = "vacation_log.csv";
pub const DESCRIBE: &str = "describe.csv";
pub const MODEL_DAILY: &str = "model_daily.json";
pub const MODEL_INTRADAY: &str = "model_intraday.json";
pub const SCORES_DAILY: &str = "scores_daily.csv";
pub const SCORES_INTRADAY: &str = "scores_intraday.csv";
pub const LM_TEST: &str = "lm_test.csv";
pub const ROLLING_LOG: &str = "rolling_diagnostics.csv";
pub const REPORT: &str = "report.csv";
pub const MCS_TABLE: &str = "mcs.csv";
pub const SIM_DAILY: &str = "daily.csv";
pub const SIM_INTRADAY: &str = "intraday.csv";
pub const SIM_TRUTH: &str = "truth.json";

pub const FORECAST_HEADER: [&str; 5] = ["date", "level", "var_forecast", "realized_loss", "hit"];
pub const REPORT_HEADER: [&str; 10] = [
    "model", "level", "lruc_stat", "lruc_p", "lrcc_stat", "lrcc_p", "dq_stat", "dq_p", "mcs_rank", "mcs_p",
];

/// Width of the simulated source bars, in minutes.
pub const SIM_BAR_MINUTES: u32 = 10;

/// Largest relative gap between a bar's `(alpha, beta)` and the daily law's
/// tolerated by the forecast pipeline.
pub const TAIL_TOLERANCE: f64 = 1e-12;

type CmdResult<T> = std::result::Result<T, CliError>;

fn data_err(msg: impl Into<String>) -> CliError {
    CliError::Lib(Error::Data(msg.into()))
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn parse_f64(s: &str, path: &Path, row: usize) -> CmdResult<f64> {
    s.trim()
        .parse()
        .map_err(|e| data_err(format!("{} row {row}: bad number {s:?}: {e}", path.display())))
}

fn parse_date(s: &str, path: &Path, row: usize) -> CmdResult<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| data_err(format!("{} row {row}: bad date {s:?}: {e}", path.display())))
}

fn expect_header(path: &Path, header: &[String], expected: &[&str]) -> CmdResult<()> {
    if header.len() != expected.len() || header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(data_err(format!(
            "{}: expected columns {expected:?}, found {header:?}",
            path.display()
        )));
    }
    Ok(())
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

// ---------------------------------------------------------------- readers

/// Prepared daily losses.
pub fn read_daily_loss(path: &Path) -> CmdResult<(Vec<NaiveDate>, Vec<f64>)> {
    let (header, rows) = read_table(path)?;
    expect_header(path, &header, &["date", "loss"])?;
    let mut dates = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        dates.push(parse_date(&r[0], path, i + 2)?);
        values.push(parse_f64(&r[1], path, i + 2)?);
    }
    Ok((dates, values))
}

/// Prepared intraday losses, one row per day.
pub fn read_intraday_loss(path: &Path) -> CmdResult<IntradayPanel> {
    let (header, rows) = read_table(path)?;
    if header.first().map(String::as_str) != Some("date") || header.len() < 2 {
        return Err(data_err(format!("{}: expected date, bar_1, ... columns", path.display())));
    }
    let bars = header.len() - 1;
    let mut days = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len() * bars);
    for (i, r) in rows.iter().enumerate() {
        days.push(parse_date(&r[0], path, i + 2)?);
        for s in &r[1..] {
            values.push(parse_f64(s, path, i + 2)?);
        }
    }
    Ok(IntradayPanel::new(days, bars, values)?)
}

pub fn read_seasonal_cycle(path: &Path) -> CmdResult<SeasonalCycle> {
    let (header, rows) = read_table(path)?;
    expect_header(path, &header, &["position", "value"])?;
    let values = rows
        .iter()
        .enumerate()
        .map(|(i, r)| parse_f64(&r[1], path, i + 2))
        .collect::<CmdResult<Vec<f64>>>()?;
    Ok(SeasonalCycle::new(values)?)
}

/// A forecast file; the model name is the file stem without `forecast_`.
pub fn read_forecast_file(path: &Path) -> CmdResult<VarForecastSeries> {
    let (header, rows) = read_table(path)?;
    expect_header(path, &header, &FORECAST_HEADER)?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let model = stem.strip_prefix("forecast_").unwrap_or(&stem).to_string();
    let mut out = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let row = i + 2;
        let hit = match r[4].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(data_err(format!("{} row {row}: bad hit {other:?}", path.display()))),
        };
        out.push(VarForecast {
            date: parse_date(&r[0], path, row)?,
            level: parse_f64(&r[1], path, row)?,
            var_forecast: parse_f64(&r[2], path, row)?,
            realized_loss: parse_f64(&r[3], path, row)?,
            hit,
        });
    }
    Ok(VarForecastSeries::new(model, out)?)
}

fn write_forecast_file(path: &Path, rows: &[VarForecast]) -> CmdResult<()> {
    write_csv(
        path,
        &FORECAST_HEADER,
        rows.iter().map(|r| {
            [
                r.date.to_string(),
                fmt_f64(r.level),
                fmt_f64(r.var_forecast),
                fmt_f64(r.realized_loss),
                u8::from(r.hit).to_string(),
            ]
        }),
    )?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

// ---------------------------------------------------------------- prep

#[derive(Debug, Clone, PartialEq)]
pub struct PrepSummary {
    pub days: usize,
    pub bars: Option<usize>,
    pub adjustments: usize,
}

/// Bar names of an intraday loss file.
fn bar_header(bars: usize) -> Vec<String> {
    std::iter::once("date".to_string())
        .chain((1..=bars).map(|k| format!("bar_{k}")))
        .collect()
}

pub fn prep(cfg: &RunConfig) -> CmdResult<PrepSummary> {
    let daily_path = cfg
        .daily_prices
        .as_ref()
        .ok_or_else(|| CliError::Usage("prep needs daily_prices".into()))?;
    let prices = read_daily_prices(daily_path)?;
    let loss = to_loss(&log_returns(&prices)?)?;
    let (adjusted, log) = vacation_adjust(&loss, &cfg.vacation)?;

    let mut panel = None;
    if let Some(p) = &cfg.intraday_prices {
        let raw = load_intraday(p, &Session::default(), cfg.bar_width)?.negated();
        if raw.days() != loss.dates() {
            let first = raw
                .days()
                .iter()
                .zip(loss.dates())
                .find(|(a, b)| a != b)
                .map(|(a, b)| format!("intraday {a} vs daily {b}"))
                .unwrap_or_else(|| format!("{} intraday days vs {} daily", raw.len(), loss.len()));
            return Err(data_err(format!("intraday days do not match daily dates: {first}")));
        }
        raw.check_reconciles(loss.values(), cfg.reconcile_tol)?;
        // the first bar absorbs vacation clips and rounding so rows sum to the daily loss
        let n = raw.bars();
        let mut values = raw.values().to_vec();
        for t in 0..raw.len() {
            let rest: f64 = values[t * n + 1..(t + 1) * n].iter().sum();
            values[t * n] = adjusted.values()[t] - rest;
        }
        panel = Some(IntradayPanel::new(raw.days().to_vec(), n, values)?);
    }

    write_csv(
        &out(cfg, DAILY_LOSS),
        &["date", "loss"],
        adjusted
            .dates()
            .iter()
            .zip(adjusted.values())
            .map(|(d, v)| [d.to_string(), fmt_f64(*v)]),
    )?;

    let cycle = match cfg.seasonal_options() {
        None => SeasonalCycle::zeros(),
        Some(opts) => match seasonal_decompose(&adjusted, &opts) {
            Ok(c) => c,
            Err(Error::Data(msg)) => {
                eprintln!("warning: {msg}; writing a zero seasonal cycle");
                SeasonalCycle::zeros()
            }
            Err(e) => return Err(e.into()),
        },
    };
    write_csv(
        &out(cfg, SEASONAL_CYCLE),
        &["position", "value"],
        cycle
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| [i.to_string(), fmt_f64(*v)]),
    )?;

    write_csv(
        &out(cfg, VACATION_LOG),
        &["date", "original", "adjusted", "rule"],
        log.iter().map(|r| {
            [
                r.date.to_string(),
                fmt_f64(r.original),
                fmt_f64(r.adjusted),
                r.rule.clone(),
            ]
        }),
    )?;

    let mut describe_rows = Vec::new();
    let mut add_summary = |name: String, xs: &[f64]| match describe(xs) {
        Ok(s) => describe_rows.push(vec![
            name,
            s.count.to_string(),
            fmt_f64(s.min),
            fmt_f64(s.max),
            fmt_f64(s.mean),
            fmt_f64(s.sd),
            opt_f64(s.skewness),
            opt_f64(s.kurtosis),
            s.degenerate.to_string(),
        ]),
        Err(e) => eprintln!("warning: no summary for {name}: {e}"),
    };
    add_summary("daily".into(), adjusted.values());

    if let Some(panel) = &panel {
        let header = bar_header(panel.bars());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(
            &out(cfg, INTRADAY_LOSS),
            &header,
            (0..panel.len()).map(|t| {
                std::iter::once(panel.days()[t].to_string())
                    .chain(panel.row(t).iter().map(|v| fmt_f64(*v)))
                    .collect::<Vec<_>>()
            }),
        )?;
        for tau in 0..panel.bars() {
            add_summary(format!("bar_{}", tau + 1), &panel.column(tau));
        }
        match pearson_adjacency(panel) {
            Ok(table) => write_csv(
                &out(cfg, PEARSON),
                &["left", "right", "correlation", "p_value", "flagged"],
                table.pairs.iter().map(|p| {
                    [
                        format!("bar_{}", p.left + 1),
                        format!("bar_{}", p.right + 1),
                        opt_f64(p.correlation),
                        opt_f64(p.p_value),
                        p.flagged.to_string(),
                    ]
                }),
            )?,
            Err(e) => eprintln!("warning: no adjacency table: {e}"),
        }
    }
    write_csv(
        &out(cfg, DESCRIBE),
        &["series", "count", "min", "max", "mean", "sd", "skewness", "excess_kurtosis", "degenerate"],
        describe_rows,
    )?;

    Ok(PrepSummary {
        days: adjusted.len(),
        bars: panel.as_ref().map(IntradayPanel::bars),
        adjustments: log.len(),
    })
}

// ---------------------------------------------------------------- fit

/// Serialized daily model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyModelFile {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub seasonal: String,
    pub model: ModelDocument,
}

/// Serialized intraday slot model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntradayModelFile {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub bar_width: u32,
    pub bars: usize,
    pub pooled: bool,
    pub slots: Vec<SlotCoefficients>,
    pub log_likelihood: f64,
    pub convergence: Vec<crate::dcs::Convergence>,
    pub clamp_count: usize,
}

struct Prepared {
    dates: Vec<NaiveDate>,
    losses: Vec<f64>,
    panel: Option<IntradayPanel>,
    cycle: Option<SeasonalCycle>,
}

fn load_prepared(cfg: &RunConfig) -> CmdResult<Prepared> {
    let (dates, losses) = read_daily_loss(&out(cfg, DAILY_LOSS))?;
    let ip = out(cfg, INTRADAY_LOSS);
    let panel = if ip.exists() {
        let p = read_intraday_loss(&ip)?;
        if p.days() != dates.as_slice() {
            return Err(data_err("prepared intraday and daily dates differ"));
        }
        Some(p)
    } else {
        None
    };
    let cycle = match cfg.seasonal_options() {
        None => None,
        Some(_) => Some(read_seasonal_cycle(&out(cfg, SEASONAL_CYCLE))?),
    };
    Ok(Prepared {
        dates,
        losses,
        panel,
        cycle,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub daily_converged: bool,
    pub slots_converged: Option<bool>,
    pub log_likelihood: f64,
}

fn seasonal_series(cycle: &Option<SeasonalCycle>, dates: &[NaiveDate]) -> Option<Vec<f64>> {
    cycle.as_ref().map(|c| c.series(dates))
}

fn intraday_options(cfg: &RunConfig, warm: Option<Vec<SlotCoefficients>>) -> IntradayOptions {
    IntradayOptions {
        pooled: cfg.pooled_slots,
        fit: cfg.fit_options(),
        warm_start: warm,
    }
}

fn lm_rows(series: &str, names: &[&str], paths: &[Vec<f64>], lags: usize) -> Vec<[String; 4]> {
    names
        .iter()
        .zip(paths)
        .map(|(name, path)| match lm_score_test(path, lags) {
            Ok(r) => [series.to_string(), name.to_string(), fmt_f64(r.statistic), fmt_f64(r.p_value)],
            Err(_) => [series.to_string(), name.to_string(), String::new(), String::new()],
        })
        .collect()
}

pub fn fit(cfg: &RunConfig) -> CmdResult<FitSummary> {
    let prep = load_prepared(cfg)?;
    let t_len = prep.losses.len();
    if t_len < cfg.window {
        return Err(data_err(format!(
            "fit needs a window of {} days, only {t_len} prepared",
            cfg.window
        )));
    }
    let start = t_len - cfg.window;
    let dates = &prep.dates[start..];
    let losses = &prep.losses[start..];
    let q = seasonal_series(&prep.cycle, dates);
    let daily = fit_mle(losses, q.as_deref(), &cfg.fit_options())?;
    let daily_converged = daily.convergence.is_some_and(|c| c.converged);
    write_json(
        &out(cfg, MODEL_DAILY),
        &DailyModelFile {
            start: dates[0],
            end: dates[dates.len() - 1],
            seasonal: cfg.seasonal.name().into(),
            model: daily.document(),
        },
    )?;
    write_csv(
        &out(cfg, SCORES_DAILY),
        &["date", "s_mu", "s_lambda", "s_v", "s_eta"],
        dates.iter().zip(&daily.score_path).map(|(d, s)| {
            [
                d.to_string(),
                fmt_f64(s.s_mu),
                fmt_f64(s.s_lambda),
                fmt_f64(s.s_v),
                fmt_f64(s.s_eta),
            ]
        }),
    )?;
    let names = ["mu", "lambda", "v", "eta"];
    let paths: Vec<Vec<f64>> = (0..4)
        .map(|k| daily.score_path.iter().map(|s| s.as_array()[k]).collect())
        .collect();
    let mut lm = lm_rows("daily", &names, &paths, cfg.lm_lags);

    let mut slots_converged = None;
    if let Some(panel) = &prep.panel {
        let panel = panel.slice(start, t_len);
        let ifit = intraday_filter(&panel, &daily, &intraday_options(cfg, None))?;
        slots_converged = Some(ifit.convergence.iter().all(|c| c.converged));
        write_json(
            &out(cfg, MODEL_INTRADAY),
            &IntradayModelFile {
                start: dates[0],
                end: dates[dates.len() - 1],
                bar_width: cfg.bar_width,
                bars: ifit.bars,
                pooled: ifit.pooled,
                slots: if ifit.pooled {
                    ifit.slots[..1].to_vec()
                } else {
                    ifit.slots.clone()
                },
                log_likelihood: ifit.log_likelihood,
                convergence: ifit.convergence.clone(),
                clamp_count: ifit.clamp_count,
            },
        )?;
        let n = ifit.bars;
        write_csv(
            &out(cfg, SCORES_INTRADAY),
            &["date", "slot", "s_mu", "s_v"],
            (0..panel.len()).flat_map(|t| {
                let ifit = &ifit;
                (0..n).map(move |tau| {
                    [
                        dates[t].to_string(),
                        (tau + 1).to_string(),
                        fmt_f64(ifit.s_mu[t * n + tau]),
                        fmt_f64(ifit.s_v[t * n + tau]),
                    ]
                })
            }),
        )?;
        for tau in 0..n {
            let mu: Vec<f64> = (0..panel.len()).map(|t| ifit.s_mu[t * n + tau]).collect();
            let v: Vec<f64> = (0..panel.len()).map(|t| ifit.s_v[t * n + tau]).collect();
            lm.extend(lm_rows(&format!("bar_{}", tau + 1), &["mu", "v"], &[mu, v], cfg.lm_lags));
        }
    }
    write_csv(&out(cfg, LM_TEST), &["series", "parameter", "statistic", "p_value"], lm)?;
    Ok(FitSummary {
        daily_converged,
        slots_converged,
        log_likelihood: daily.log_likelihood,
    })
}

// ---------------------------------------------------------------- forecast

/// Name of the daily-only model.
pub const DAY_MODEL: &str = "day";

pub fn intraday_model_name(width: u32) -> String {
    format!("{width}min")
}

struct DayForecast {
    date: NaiveDate,
    refit: bool,
    daily_converged: bool,
    slots_converged: bool,
    daily_law: NigParams,
    intraday_law: Option<NigParams>,
    tail_gap: f64,
}

/// Relative distance between each bar's `(alpha, beta)` and the daily law's.
fn tail_gap(daily: &NigParams, bars: &[NigParams]) -> f64 {
    bars.iter()
        .map(|b| ((b.alpha - daily.alpha).abs().max((b.beta - daily.beta).abs())) / daily.alpha)
        .fold(0.0, f64::max)
}

struct BlockFit {
    coefficients: DcsCoefficients,
    slots: Option<Vec<SlotCoefficients>>,
}

/// Models estimated on the window ending before one target day, with the
/// predictive states for that day.
struct Refit {
    coefficients: DcsCoefficients,
    daily_converged: bool,
    slots_converged: bool,
    state: DcsState,
    intraday: Option<(Vec<SlotCoefficients>, IntradayForecast)>,
}

fn refit(cfg: &RunConfig, prep: &Prepared, j0: usize, warm: Option<&BlockFit>) -> CmdResult<Refit> {
    let (a, b) = (j0 - cfg.window, j0);
    let mut opts = cfg.fit_options();
    opts.warm_start = warm.map(|w| w.coefficients);
    let q = seasonal_series(&prep.cycle, &prep.dates[a..b]);
    let daily = fit_mle(&prep.losses[a..b], q.as_deref(), &opts)?;
    let state = forecast_one_step(&daily, prep.losses[j0 - 1], q_at(prep, j0))?;
    let mut slots_converged = true;
    let mut intraday = None;
    if let Some(panel) = &prep.panel {
        let warm_slots = warm.and_then(|w| w.slots.clone()).map(|s| {
            if cfg.pooled_slots {
                s[..1].to_vec()
            } else {
                s
            }
        });
        let f = intraday_filter(&panel.slice(a, b), &daily, &intraday_options(cfg, warm_slots))?;
        slots_converged = f.convergence.iter().all(|c| c.converged);
        let fc = f.forecast(&state)?;
        intraday = Some((f.slots, fc));
    }
    Ok(Refit {
        coefficients: daily.coefficients,
        daily_converged: daily.convergence.is_some_and(|c| c.converged),
        slots_converged,
        state,
        intraday,
    })
}

fn q_at(prep: &Prepared, j: usize) -> f64 {
    prep.cycle.as_ref().map_or(0.0, |c| c.value_at(prep.dates[j]))
}

/// Forecasts the days of one block from a fit on the window ending before
/// day `first + k0`, advancing the filters with each realized day. A filter
/// step that hits the state guard triggers an immediate refit.
fn run_block(
    cfg: &RunConfig,
    prep: &Prepared,
    first: usize,
    k0: usize,
    warm: Option<&BlockFit>,
) -> CmdResult<(BlockFit, Vec<DayForecast>)> {
    let j0 = first + k0;
    let mut cur = refit(cfg, prep, j0, warm)?;
    let block = BlockFit {
        coefficients: cur.coefficients,
        slots: cur.intraday.as_ref().map(|(s, _)| s.clone()),
    };
    let end = first + (k0 + cfg.refit_every).min(cfg.horizon);
    let mut days = Vec::with_capacity(end - j0);
    let mut refitted = true;
    for j in j0..end {
        let daily_law = link(&cur.state)?;
        let (intraday_law, gap) = match &cur.intraday {
            None => (None, 0.0),
            Some((_, fc)) if fc.mu.len() == 1 => (Some(daily_law), 0.0),
            Some((_, fc)) => {
                let bars: Vec<NigParams> = (0..fc.mu.len()).map(|tau| fc.bar_params(tau)).collect();
                (Some(fc.aggregate()), tail_gap(&daily_law, &bars))
            }
        };
        if gap > TAIL_TOLERANCE {
            return Err(CliError::Lib(Error::Numeric(format!(
                "bar tail parameters drifted from the daily law by {gap:e} on {}",
                prep.dates[j]
            ))));
        }
        days.push(DayForecast {
            date: prep.dates[j],
            refit: refitted,
            daily_converged: cur.daily_converged,
            slots_converged: cur.slots_converged,
            daily_law,
            intraday_law,
            tail_gap: gap,
        });
        if j + 1 == end {
            break;
        }
        let sc = scores(&cur.state, prep.losses[j])?;
        let mut next = dcs_update(&cur.coefficients, &cur.state, &sc, q_at(prep, j + 1));
        refitted = guard_state(&mut next) > 0;
        if refitted {
            cur = refit(cfg, prep, j + 1, warm)?;
            continue;
        }
        cur.state = next;
        if let (Some((slots, fc)), Some(panel)) = (&mut cur.intraday, &prep.panel) {
            *fc = fc.advance(slots, panel.row(j), &cur.state)?;
        }
    }
    Ok((block, days))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSummary {
    pub models: Vec<String>,
    pub rows_per_level: usize,
    pub max_tail_gap: f64,
    pub unconverged_refits: usize,
}

/// Rolling one-step-ahead VaR forecasts for the last `horizon` days.
///
/// Coefficients are re-estimated on the trailing window every `refit_every`
/// days; in between, the filters are advanced one realized day at a time
/// with the held coefficients, unless a step saturates the state guard, which
/// forces a refit that day. The first block starts cold and every later
/// block is warm-started from it, so blocks are independent and run in
/// parallel.
pub fn forecast(cfg: &RunConfig) -> CmdResult<ForecastSummary> {
    let prep = load_prepared(cfg)?;
    let t_len = prep.losses.len();
    if cfg.window + cfg.horizon > t_len {
        return Err(data_err(format!(
            "window {} plus horizon {} exceeds the {t_len} prepared days",
            cfg.window, cfg.horizon
        )));
    }
    let first = t_len - cfg.horizon;
    let starts: Vec<usize> = (0..cfg.horizon).step_by(cfg.refit_every).collect();
    let (head, mut days) = run_block(cfg, &prep, first, 0, None)?;
    let rest = par::map_slice(&starts[1..], |&k0| run_block(cfg, &prep, first, k0, Some(&head)));
    for r in rest {
        days.extend(r?.1);
    }

    let mut models = vec![DAY_MODEL.to_string()];
    let mut day_rows = Vec::new();
    let mut intra_rows = Vec::new();
    for &level in &cfg.levels {
        for (d, j) in days.iter().zip(first..) {
            let realized = prep.losses[j];
            day_rows.push(VarForecast::new(d.date, level, d.daily_law.quantile(level)?, realized));
            if let Some(law) = &d.intraday_law {
                intra_rows.push(VarForecast::new(d.date, level, law.quantile(level)?, realized));
            }
        }
    }
    write_forecast_file(&out(cfg, &format!("forecast_{DAY_MODEL}.csv")), &day_rows)?;
    if prep.panel.is_some() {
        let name = intraday_model_name(cfg.bar_width);
        write_forecast_file(&out(cfg, &format!("forecast_{name}.csv")), &intra_rows)?;
        models.push(name);
    }
    write_csv(
        &out(cfg, ROLLING_LOG),
        &["date", "refit", "daily_converged", "slots_converged", "alpha", "beta", "tail_gap"],
        days.iter().map(|d| {
            [
                d.date.to_string(),
                d.refit.to_string(),
                d.daily_converged.to_string(),
                d.slots_converged.to_string(),
                fmt_f64(d.daily_law.alpha),
                fmt_f64(d.daily_law.beta),
                fmt_f64(d.tail_gap),
            ]
        }),
    )?;
    Ok(ForecastSummary {
        models,
        rows_per_level: days.len(),
        max_tail_gap: days.iter().map(|d| d.tail_gap).fold(0.0, f64::max),
        unconverged_refits: days
            .iter()
            .filter(|d| d.refit && !(d.daily_converged && d.slots_converged))
            .count(),
    })
}

// ---------------------------------------------------------------- backtest / mcs

/// Forecast files in the output directory, by name, then any configured extras.
fn collect_forecasts(cfg: &RunConfig) -> CmdResult<Vec<VarForecastSeries>> {
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(&cfg.output_dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy())
                    .is_some_and(|n| n.starts_with("forecast_") && n.ends_with(".csv"))
            })
            .collect(),
        Err(_) => Vec::new(),
    };
    paths.sort();
    paths.extend(cfg.forecast_files.iter().cloned());
    if paths.is_empty() {
        return Err(data_err(format!(
            "no forecast files in {}",
            cfg.output_dir.display()
        )));
    }
    let series = paths.iter().map(|p| read_forecast_file(p)).collect::<CmdResult<Vec<_>>>()?;
    for (i, s) in series.iter().enumerate() {
        if series[..i].iter().any(|o| o.model == s.model) {
            return Err(data_err(format!("model {} supplied twice", s.model)));
        }
    }
    Ok(series)
}

fn level_tag(level: f64) -> String {
    format!("{level}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestSummary {
    pub models: Vec<String>,
    pub levels: Vec<f64>,
    pub plots: Vec<PathBuf>,
}

pub fn backtest(cfg: &RunConfig) -> CmdResult<BacktestSummary> {
    let series = collect_forecasts(cfg)?;
    let levels = series[0].levels();
    let opts = EvaluateOptions {
        dq_lags: cfg.dq_lags,
        mcs: cfg.mcs_options(),
    };
    let (reports, _) = evaluate(&series, &levels, &opts)?;
    let mut rows = Vec::new();
    for r in &reports {
        for l in &r.levels {
            rows.push([
                r.model.clone(),
                fmt_f64(l.level),
                fmt_f64(l.lruc.statistic),
                fmt_f64(l.lruc.p_value),
                fmt_f64(l.lrcc.statistic),
                fmt_f64(l.lrcc.p_value),
                opt_f64(l.dq.map(|d| d.statistic)),
                opt_f64(l.dq.map(|d| d.p_value)),
                l.mcs_rank.to_string(),
                fmt_f64(l.mcs_p),
            ]);
        }
    }
    write_csv(&out(cfg, REPORT), &REPORT_HEADER, rows)?;
    let mut plots = Vec::new();
    for &level in &levels {
        let base = series[0].at_level(level);
        let dates: Vec<String> = base.iter().map(|r| r.date.to_string()).collect();
        let realized: Vec<f64> = base.iter().map(|r| r.realized_loss).collect();
        let lines: Vec<(String, Vec<f64>)> = series
            .iter()
            .map(|s| (s.model.clone(), s.at_level(level).iter().map(|r| r.var_forecast).collect()))
            .collect();
        let svg = plot::var_chart(&format!("VaR at level {level} vs realized loss"), &dates, &realized, &lines);
        let path = out(cfg, &format!("var_{}.svg", level_tag(level)));
        write_atomic(&path, svg.as_bytes())?;
        plots.push(path);
    }
    Ok(BacktestSummary {
        models: series.iter().map(|s| s.model.clone()).collect(),
        levels,
        plots,
    })
}

pub fn mcs_table(cfg: &RunConfig) -> CmdResult<usize> {
    let series = collect_forecasts(cfg)?;
    let levels = series[0].levels();
    let opts = cfg.mcs_options();
    let mut rows = Vec::new();
    for &level in &levels {
        let per_model: Vec<Vec<VarForecast>> = series.iter().map(|s| s.at_level(level)).collect();
        let dates: Vec<NaiveDate> = per_model[0].iter().map(|r| r.date).collect();
        for (s, r) in series.iter().zip(&per_model) {
            if r.iter().map(|x| x.date).ne(dates.iter().copied()) {
                return Err(data_err(format!(
                    "{} forecasts at level {level} are not aligned with {}",
                    s.model, series[0].model
                )));
            }
        }
        let losses: Vec<Vec<f64>> = per_model
            .iter()
            .map(|r| r.iter().map(|x| pinball_loss(x.realized_loss, x.var_forecast, level)).collect())
            .collect();
        let res = mcs(&losses, &opts)?;
        for (s, e) in series.iter().zip(&res.entries) {
            rows.push([
                s.model.clone(),
                fmt_f64(level),
                e.rank.to_string(),
                fmt_f64(e.p_value),
                fmt_f64(e.mean_loss),
                e.included.to_string(),
            ]);
        }
    }
    let n = rows.len();
    write_csv(
        &out(cfg, MCS_TABLE),
        &["model", "level", "mcs_rank", "mcs_p", "mean_loss", "included"],
        rows,
    )?;
    Ok(n)
}

// ---------------------------------------------------------------- simulate

/// Ground truth written next to a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub seed: u64,
    pub days: usize,
    pub start: NaiveDate,
    pub bar_minutes: u32,
    /// Normalized slot weights: bar `tau` has location `w mu_t` and scale `w delta_t`.
    pub weights: Vec<f64>,
    /// Daily recursions of the loss series (negated log returns).
    pub coefficients: DcsCoefficients,
    pub orientation: String,
}

/// U-shaped slot weights: busier near the open and the close.
pub fn default_sim_weights(bars: usize) -> Vec<f64> {
    let mid = (bars as f64 - 1.0) / 2.0;
    (0..bars)
        .map(|k| 1.0 + ((k as f64 - mid) / mid.max(1.0)).powi(2))
        .collect()
}

fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date within range");
    }
    out
}

pub fn simulate(cfg: &RunConfig) -> CmdResult<SimulationTruth> {
    let session = Session::default();
    let ends = session.bar_ends(SIM_BAR_MINUTES)?;
    let weights = if cfg.sim_weights.is_empty() {
        default_sim_weights(ends.len())
    } else if cfg.sim_weights.len() == ends.len() {
        cfg.sim_weights.clone()
    } else {
        return Err(CliError::Usage(format!(
            "sim_weights needs {} entries, got {}",
            ends.len(),
            cfg.sim_weights.len()
        )));
    };
    let total: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let coeff = cfg.sim_coefficients();
    let market = simulate_market(&coeff, &weights, cfg.sim_days, cfg.seed)?;
    let dates = business_days(cfg.sim_start, cfg.sim_days + 1);
    let n = ends.len();
    let mut log_price = 100f64.ln();
    let mut daily_rows = vec![[dates[0].to_string(), fmt_f64(log_price.exp())]];
    let mut intra_rows: Vec<[String; 3]> = ends
        .iter()
        .map(|t| [dates[0].to_string(), t.format("%H:%M").to_string(), fmt_f64(log_price.exp())])
        .collect();
    for (t, date) in dates[1..].iter().enumerate() {
        for (tau, end) in ends.iter().enumerate() {
            log_price -= market.bars[t * n + tau];
            intra_rows.push([date.to_string(), end.format("%H:%M").to_string(), fmt_f64(log_price.exp())]);
        }
        daily_rows.push([date.to_string(), fmt_f64(log_price.exp())]);
    }
    write_csv(&out(cfg, SIM_DAILY), &["date", "close"], daily_rows)?;
    write_csv(&out(cfg, SIM_INTRADAY), &["date", "time", "close"], intra_rows)?;
    let truth = SimulationTruth {
        seed: cfg.seed,
        days: cfg.sim_days,
        start: dates[0],
        bar_minutes: SIM_BAR_MINUTES,
        weights,
        coefficients: coeff,
        orientation: "loss".into(),
    };
    write_json(&out(cfg, SIM_TRUTH), &truth)?;
    Ok(truth)
}
