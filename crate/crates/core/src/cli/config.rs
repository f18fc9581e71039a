//! Run configuration: a `key = value` file plus command-line overrides.

use crate::dataprep::{SeasonalMethod, SeasonalOptions, SeasonalTarget, VacationPolicy};
use crate::dcs::{DcsCoefficients, FitOptions, Recursion};
use crate::mcs::McsOptions;
use chrono::NaiveDate;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Seasonal treatment of the daily log-scale equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeasonalMode {
    None,
    MovingAverage,
    Direct,
}

impl SeasonalMode {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Self::None),
            "ma" | "moving_average" => Some(Self::MovingAverage),
            "direct" => Some(Self::Direct),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::MovingAverage => "ma",
            Self::Direct => "direct",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub daily_prices: Option<PathBuf>,
    pub intraday_prices: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub bar_width: u32,
    pub levels: Vec<f64>,
    pub window: usize,
    pub horizon: usize,
    pub refit_every: usize,
    pub vacation: VacationPolicy,
    pub seasonal: SeasonalMode,
    pub seasonal_target: SeasonalTarget,
    pub reconcile_tol: f64,
    pub pooled_slots: bool,
    pub max_iter: usize,
    pub f_tol: f64,
    pub restarts: usize,
    /// Daily parameters (`mu`, `lambda`, `v`, `eta`) that follow a recursion.
    pub dynamic: [bool; 4],
    pub seed: u64,
    pub dq_lags: usize,
    pub lm_lags: usize,
    pub mcs_alpha: f64,
    pub mcs_block: f64,
    pub mcs_replications: usize,
    pub forecast_files: Vec<PathBuf>,
    pub sim_days: usize,
    pub sim_start: NaiveDate,
    pub sim_mu: Recursion,
    pub sim_lambda: Recursion,
    pub sim_v: Recursion,
    pub sim_eta: Recursion,
    /// Relative volatility of the 10-minute slots; empty for the default U shape.
    pub sim_weights: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            daily_prices: None,
            intraday_prices: None,
            output_dir: PathBuf::from("out"),
            bar_width: 30,
            levels: (90..100).map(|k| f64::from(k) / 100.0).collect(),
            window: 1456,
            horizon: 244,
            refit_every: 20,
            vacation: VacationPolicy::default(),
            seasonal: SeasonalMode::MovingAverage,
            seasonal_target: SeasonalTarget::LogAbs,
            reconcile_tol: 1e-6,
            pooled_slots: false,
            max_iter: 5000,
            f_tol: 1e-8,
            restarts: 3,
            dynamic: [true; 4],
            seed: 0,
            dq_lags: 4,
            lm_lags: 4,
            mcs_alpha: 0.15,
            mcs_block: 10.0,
            mcs_replications: 5000,
            forecast_files: Vec::new(),
            sim_days: 3000,
            sim_start: NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date"),
            sim_mu: Recursion::new(0.0, 0.0, 0.0),
            sim_lambda: Recursion::new(-0.23, 0.95, 0.08),
            sim_v: Recursion::new(0.0, 0.0, 0.0),
            sim_eta: Recursion::new(0.2, 0.0, 0.0),
            sim_weights: Vec::new(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("{key}: cannot parse {v:?}: {e}"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got {v:?}")),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_recursion(key: &str, v: &str) -> Result<Recursion, String> {
    match parse_list(key, v)?.as_slice() {
        [a, b, c] => Ok(Recursion::new(*a, *b, *c)),
        _ => Err(format!("{key}: expected intercept,persistence,loading")),
    }
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

const PARAMETERS: [&str; 4] = ["mu", "lambda", "v", "eta"];

fn parse_dynamic(key: &str, v: &str) -> Result<[bool; 4], String> {
    let mut out = [false; 4];
    for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let i = PARAMETERS
            .iter()
            .position(|p| *p == name)
            .ok_or_else(|| format!("{key}: unknown parameter {name:?}, expected mu, lambda, v or eta"))?;
        out[i] = true;
    }
    Ok(out)
}

fn fmt_dynamic(d: &[bool; 4]) -> String {
    PARAMETERS
        .iter()
        .zip(d)
        .filter(|(_, &on)| on)
        .map(|(p, _)| *p)
        .collect::<Vec<_>>()
        .join(",")
}

fn fmt_rec(r: &Recursion) -> String {
    fmt_list(&[r.intercept, r.persistence, r.loading])
}

fn fmt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        let path = |v: &str| if v.is_empty() { None } else { Some(PathBuf::from(v)) };
        match key.trim() {
            "daily_prices" => self.daily_prices = path(v),
            "intraday_prices" => self.intraday_prices = path(v),
            "output_dir" => self.output_dir = PathBuf::from(v),
            "bar_width" => self.bar_width = parse_num(key, v)?,
            "levels" => self.levels = parse_list(key, v)?,
            "window" => self.window = parse_num(key, v)?,
            "horizon" => self.horizon = parse_num(key, v)?,
            "refit_every" => self.refit_every = parse_num(key, v)?,
            "vacation" => self.vacation.enabled = parse_bool(key, v)?,
            "vacation_gap_days" => self.vacation.gap_days = parse_num(key, v)?,
            "vacation_clip" => self.vacation.clip = parse_num(key, v)?,
            "vacation_window" => self.vacation.window = parse_num(key, v)?,
            "vacation_min_history" => self.vacation.min_history = parse_num(key, v)?,
            "seasonal" => {
                self.seasonal = SeasonalMode::parse(v)
                    .ok_or_else(|| format!("seasonal: expected none, ma or direct, got {v:?}"))?
            }
            "seasonal_target" => {
                self.seasonal_target = match v {
                    "log_abs" => SeasonalTarget::LogAbs,
                    "raw" => SeasonalTarget::Raw,
                    _ => return Err(format!("seasonal_target: expected log_abs or raw, got {v:?}")),
                }
            }
            "reconcile_tol" => self.reconcile_tol = parse_num(key, v)?,
            "pooled_slots" => self.pooled_slots = parse_bool(key, v)?,
            "max_iter" => self.max_iter = parse_num(key, v)?,
            "f_tol" => self.f_tol = parse_num(key, v)?,
            "restarts" => self.restarts = parse_num(key, v)?,
            "dynamic" => self.dynamic = parse_dynamic(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "dq_lags" => self.dq_lags = parse_num(key, v)?,
            "lm_lags" => self.lm_lags = parse_num(key, v)?,
            "mcs_alpha" => self.mcs_alpha = parse_num(key, v)?,
            "mcs_block" => self.mcs_block = parse_num(key, v)?,
            "mcs_replications" => self.mcs_replications = parse_num(key, v)?,
            "forecast_files" => {
                self.forecast_files = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "sim_days" => self.sim_days = parse_num(key, v)?,
            "sim_start" => {
                self.sim_start = NaiveDate::parse_from_str(v, "%Y-%m-%d")
                    .map_err(|e| format!("sim_start: {e}"))?
            }
            "sim_mu" => self.sim_mu = parse_recursion(key, v)?,
            "sim_lambda" => self.sim_lambda = parse_recursion(key, v)?,
            "sim_v" => self.sim_v = parse_recursion(key, v)?,
            "sim_eta" => self.sim_eta = parse_recursion(key, v)?,
            "sim_weights" => self.sim_weights = parse_list(key, v)?,
            other => return Err(format!("unknown configuration key {other:?}")),
        }
        Ok(())
    }

    /// Parses a `key = value` document; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            self.set(k, v).map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, String> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
            cfg.apply_text(&text)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| format!("--set expects key=value, got {o:?}"))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.window < 250 {
            return Err(format!("window must be at least 250, got {}", self.window));
        }
        if self.horizon == 0 {
            return Err("horizon must be at least 1".into());
        }
        if self.refit_every == 0 {
            return Err("refit_every must be at least 1".into());
        }
        if self.levels.is_empty() {
            return Err("levels must not be empty".into());
        }
        if let Some(l) = self.levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(format!("levels must lie strictly inside (0, 1), got {l}"));
        }
        if self.bar_width == 0 {
            return Err("bar_width must be positive".into());
        }
        if !(self.mcs_alpha > 0.0 && self.mcs_alpha < 1.0) {
            return Err(format!("mcs_alpha must lie in (0, 1), got {}", self.mcs_alpha));
        }
        if self.sim_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err("sim_weights must be positive".into());
        }
        Ok(())
    }

    /// Every setting as `(key, value)`, in documentation order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("daily_prices", fmt_path(&self.daily_prices)),
            ("intraday_prices", fmt_path(&self.intraday_prices)),
            ("output_dir", self.output_dir.display().to_string()),
            ("bar_width", self.bar_width.to_string()),
            ("levels", fmt_list(&self.levels)),
            ("window", self.window.to_string()),
            ("horizon", self.horizon.to_string()),
            ("refit_every", self.refit_every.to_string()),
            ("vacation", self.vacation.enabled.to_string()),
            ("vacation_gap_days", self.vacation.gap_days.to_string()),
            ("vacation_clip", self.vacation.clip.to_string()),
            ("vacation_window", self.vacation.window.to_string()),
            ("vacation_min_history", self.vacation.min_history.to_string()),
            ("seasonal", self.seasonal.name().to_string()),
            (
                "seasonal_target",
                match self.seasonal_target {
                    SeasonalTarget::LogAbs => "log_abs",
                    SeasonalTarget::Raw => "raw",
                }
                .to_string(),
            ),
            ("reconcile_tol", self.reconcile_tol.to_string()),
            ("pooled_slots", self.pooled_slots.to_string()),
            ("max_iter", self.max_iter.to_string()),
            ("f_tol", self.f_tol.to_string()),
            ("restarts", self.restarts.to_string()),
            ("dynamic", fmt_dynamic(&self.dynamic)),
            ("seed", self.seed.to_string()),
            ("dq_lags", self.dq_lags.to_string()),
            ("lm_lags", self.lm_lags.to_string()),
            ("mcs_alpha", self.mcs_alpha.to_string()),
            ("mcs_block", self.mcs_block.to_string()),
            ("mcs_replications", self.mcs_replications.to_string()),
            (
                "forecast_files",
                self.forecast_files
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("sim_days", self.sim_days.to_string()),
            ("sim_start", self.sim_start.to_string()),
            ("sim_mu", fmt_rec(&self.sim_mu)),
            ("sim_lambda", fmt_rec(&self.sim_lambda)),
            ("sim_v", fmt_rec(&self.sim_v)),
            ("sim_eta", fmt_rec(&self.sim_eta)),
            ("sim_weights", fmt_list(&self.sim_weights)),
        ]
    }

    /// The configuration as a document `apply_text` reads back.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_iter: self.max_iter,
            f_tol: self.f_tol,
            restarts: self.restarts,
            seed: self.seed,
            strict: false,
            dynamic: self.dynamic,
            ..FitOptions::default()
        }
    }

    pub fn seasonal_options(&self) -> Option<SeasonalOptions> {
        let method = match self.seasonal {
            SeasonalMode::None => return None,
            SeasonalMode::MovingAverage => SeasonalMethod::MovingAverage,
            SeasonalMode::Direct => SeasonalMethod::Direct,
        };
        Some(SeasonalOptions {
            target: self.seasonal_target,
            method,
        })
    }

    pub fn mcs_options(&self) -> McsOptions {
        McsOptions {
            alpha: self.mcs_alpha,
            block_length: self.mcs_block,
            replications: self.mcs_replications,
            seed: self.seed,
        }
    }

    pub fn sim_coefficients(&self) -> DcsCoefficients {
        DcsCoefficients {
            mu: self.sim_mu,
            lambda: self.sim_lambda,
            v: self.sim_v,
            eta: self.sim_eta,
        }
    }
}
