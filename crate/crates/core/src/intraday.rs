//! Intraday bars, slot-level score filters and aggregation to the daily
//! distribution.
//!
//! Every bar slot `tau` has its own location and `v` recursion. The tail and
//! skewness of a bar are borrowed from the daily model, which fixes the bar
//! log-scale at `lambda_tau = v_tau - (v_t - lambda_t)`. Because the bars of a
//! day then share `(alpha, beta)`, their sum is NIG with summed locations and
//! scales.

use crate::dcs::{
    bounded_tanh, density_and_scores, multi_start_minimize, CoefficientMap, Convergence,
    DcsCoefficients, DcsState, FitOptions, ModelFit, Recursion, STATE_GUARD,
};
use crate::error::{domain, Error, Result};
use crate::nig::{stream_rng, NigParams};
use crate::par;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// `T x N` matrix of intraday log returns, one row per trading day.
#[derive(Debug, Clone, PartialEq)]
pub struct IntradayPanel {
    days: Vec<NaiveDate>,
    bars: usize,
    returns: Vec<f64>,
}

impl IntradayPanel {
    /// `returns` is row-major: `returns[t * bars + tau]`.
    pub fn new(days: Vec<NaiveDate>, bars: usize, returns: Vec<f64>) -> Result<Self> {
        if bars == 0 {
            return Err(Error::Data("panel needs at least one bar per day".into()));
        }
        if returns.len() != days.len() * bars {
            return Err(Error::Data(format!(
                "panel has {} values for {} days of {bars} bars",
                returns.len(),
                days.len()
            )));
        }
        if let Some(w) = days.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!(
                "panel dates not strictly increasing at {}",
                days[w + 1]
            )));
        }
        if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite intraday return on {} slot {}",
                days[i / bars],
                i % bars + 1
            )));
        }
        Ok(Self {
            days,
            bars,
            returns,
        })
    }

    pub fn from_rows(days: Vec<NaiveDate>, rows: &[Vec<f64>]) -> Result<Self> {
        let bars = rows.first().map_or(0, Vec::len);
        if let Some(t) = rows.iter().position(|r| r.len() != bars) {
            return Err(Error::Data(format!(
                "row {t} has {} bars, expected {bars}",
                rows[t].len()
            )));
        }
        Self::new(days, bars, rows.concat())
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn bars(&self) -> usize {
        self.bars
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.returns
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.returns[t * self.bars..(t + 1) * self.bars]
    }

    pub fn get(&self, t: usize, tau: usize) -> f64 {
        self.returns[t * self.bars + tau]
    }

    pub fn column(&self, tau: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.get(t, tau)).collect()
    }

    /// Row sums, i.e. the daily returns implied by the bars.
    pub fn daily_returns(&self) -> Vec<f64> {
        (0..self.len()).map(|t| self.row(t).iter().sum()).collect()
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            days: self.days[start..end].to_vec(),
            bars: self.bars,
            returns: self.returns[start * self.bars..end * self.bars].to_vec(),
        }
    }

    /// Every value negated (raw returns to losses and back).
    pub fn negated(&self) -> Self {
        Self {
            days: self.days.clone(),
            bars: self.bars,
            returns: self.returns.iter().map(|r| -r).collect(),
        }
    }

    /// Checks that row sums match `daily` to `tol`.
    pub fn check_reconciles(&self, daily: &[f64], tol: f64) -> Result<()> {
        if daily.len() != self.len() {
            return Err(Error::Contract(format!(
                "{} daily returns for a panel of {} days",
                daily.len(),
                self.len()
            )));
        }
        for (t, (s, d)) in self.daily_returns().iter().zip(daily).enumerate() {
            if (s - d).abs() > tol {
                return Err(Error::Data(format!(
                    "bars on {} sum to {s}, daily return is {d}",
                    self.days[t]
                )));
            }
        }
        Ok(())
    }
}

/// Location and `v` recursions of one bar slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotCoefficients {
    pub mu: Recursion,
    pub v: Recursion,
}

impl SlotCoefficients {
    pub fn constant(mu: f64, v: f64) -> Self {
        Self {
            mu: Recursion::constant(mu),
            v: Recursion::constant(v),
        }
    }

    fn initial(&self) -> (f64, f64) {
        (self.mu.unconditional(), self.v.unconditional())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntradayOptions {
    /// One coefficient set shared by every slot instead of one per slot.
    pub pooled: bool,
    pub fit: FitOptions,
    /// Starting coefficients per slot (a single entry when pooled).
    pub warm_start: Option<Vec<SlotCoefficients>>,
}

/// Filtered slot states for a panel, tied to a daily fit.
#[derive(Debug, Clone, PartialEq)]
pub struct IntradayFit {
    pub bars: usize,
    pub pooled: bool,
    /// One entry per slot; pooled fits repeat the shared set.
    pub slots: Vec<SlotCoefficients>,
    /// Predictive slot locations, row-major `T x N`.
    pub mu: Vec<f64>,
    /// Predictive slot `v`, row-major `T x N`.
    pub v: Vec<f64>,
    pub s_mu: Vec<f64>,
    pub s_v: Vec<f64>,
    /// Daily `v_t - lambda_t`, shared by every bar of day `t`.
    pub log_tail: Vec<f64>,
    /// Daily `eta_t`.
    pub eta: Vec<f64>,
    /// Last observed row, needed to step the slots forward.
    pub last_row: Vec<f64>,
    pub log_likelihood: f64,
    /// Per estimated coefficient set; empty when coefficients were supplied.
    pub convergence: Vec<Convergence>,
    pub clamp_count: usize,
}

#[inline]
fn shared_params(mu: f64, v: f64, log_tail: f64, eta: f64) -> NigParams {
    let alpha = log_tail.exp();
    NigParams {
        mu,
        delta: (v - log_tail).exp(),
        alpha,
        beta: alpha * bounded_tanh(eta),
    }
}

/// Daily tail quantities taken from a daily state.
pub fn daily_log_tail(state: &DcsState) -> f64 {
    state.v - state.lambda
}

impl IntradayFit {
    pub fn len(&self) -> usize {
        self.log_tail.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_tail.is_empty()
    }

    /// Full state of slot `tau` on day `t`.
    pub fn slot_state(&self, t: usize, tau: usize) -> DcsState {
        let i = t * self.bars + tau;
        DcsState {
            mu: self.mu[i],
            lambda: self.v[i] - self.log_tail[t],
            v: self.v[i],
            eta: self.eta[t],
        }
    }

    /// NIG law of bar `tau` on day `t`.
    pub fn bar_params(&self, t: usize, tau: usize) -> NigParams {
        let i = t * self.bars + tau;
        shared_params(self.mu[i], self.v[i], self.log_tail[t], self.eta[t])
    }

    /// Predictive slot states for the day after the last filtered one.
    pub fn forecast(&self, daily_next: &DcsState) -> Result<IntradayForecast> {
        if self.is_empty() {
            return Err(Error::Contract("cannot forecast from an empty intraday fit".into()));
        }
        let t = self.len() - 1;
        let row = t * self.bars..(t + 1) * self.bars;
        let current = IntradayForecast {
            mu: self.mu[row.clone()].to_vec(),
            v: self.v[row].to_vec(),
            log_tail: self.log_tail[t],
            eta: self.eta[t],
        };
        current.advance(&self.slots, &self.last_row, daily_next)
    }
}

/// Slot states for one forecast day.
#[derive(Debug, Clone, PartialEq)]
pub struct IntradayForecast {
    pub mu: Vec<f64>,
    pub v: Vec<f64>,
    pub log_tail: f64,
    pub eta: f64,
}

impl IntradayForecast {
    pub fn bar_params(&self, tau: usize) -> NigParams {
        shared_params(self.mu[tau], self.v[tau], self.log_tail, self.eta)
    }

    /// Law of the day's summed return.
    pub fn aggregate(&self) -> NigParams {
        aggregate_parts(&self.mu, &self.v, self.log_tail, self.eta)
    }

    /// Steps every slot with the day's observed bars and moves to the tail
    /// of the next daily state.
    pub fn advance(&self, slots: &[SlotCoefficients], row: &[f64], daily_next: &DcsState) -> Result<Self> {
        let n = self.mu.len();
        if slots.len() != n || row.len() != n {
            return Err(Error::Contract(format!(
                "{} slots and {} bars for {n} slot states",
                slots.len(),
                row.len()
            )));
        }
        if !daily_next.is_finite() {
            return domain(format!("non-finite daily state {daily_next:?}"));
        }
        if let Some(tau) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!("non-finite bar {} in slot update", tau + 1)));
        }
        let k_next = daily_log_tail(daily_next);
        let mut mu = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for tau in 0..n {
            let state = DcsState {
                mu: self.mu[tau],
                lambda: self.v[tau] - self.log_tail,
                v: self.v[tau],
                eta: self.eta,
            };
            let (_, sc) = density_and_scores(&state, row[tau]);
            let c = &slots[tau];
            let (m, _) = guard_mu(c.mu.step(state.mu, sc.s_mu));
            let (vv, _) = guard_slot(c.v.step(state.v, sc.s_v + sc.s_lambda), k_next);
            mu.push(m);
            v.push(vv);
        }
        Ok(Self {
            mu,
            v,
            log_tail: k_next,
            eta: daily_next.eta,
        })
    }
}

fn aggregate_parts(mu: &[f64], v: &[f64], log_tail: f64, eta: f64) -> NigParams {
    let mut out = shared_params(0.0, 0.0, log_tail, eta);
    out.mu = mu.iter().sum();
    out.delta = v.iter().map(|&x| (x - log_tail).exp()).sum();
    out
}

/// Law of day `t`'s summed return under the intraday fit.
pub fn aggregate_daily(fit: &IntradayFit, t: usize) -> Result<NigParams> {
    if t >= fit.len() {
        return Err(Error::Contract(format!(
            "day index {t} out of range for a fit of {} days",
            fit.len()
        )));
    }
    let row = t * fit.bars..(t + 1) * fit.bars;
    Ok(aggregate_parts(
        &fit.mu[row.clone()],
        &fit.v[row],
        fit.log_tail[t],
        fit.eta[t],
    ))
}

/// VaR on the loss scale: the `level` quantile of the loss distribution.
pub fn var_from_aggregate(p: &NigParams, level: f64) -> Result<f64> {
    p.quantile(level)
}

#[inline]
fn guard_mu(mu: f64) -> (f64, usize) {
    if mu.abs() > STATE_GUARD {
        (mu.clamp(-STATE_GUARD, STATE_GUARD), 1)
    } else {
        (mu, 0)
    }
}

#[inline]
fn guard_slot(v: f64, log_tail: f64) -> (f64, usize) {
    let lambda = v - log_tail;
    if lambda.abs() > STATE_GUARD {
        (log_tail + lambda.clamp(-STATE_GUARD, STATE_GUARD), 1)
    } else {
        (v, 0)
    }
}

struct SlotPath {
    mu: Vec<f64>,
    v: Vec<f64>,
    s_mu: Vec<f64>,
    s_v: Vec<f64>,
    log_likelihood: f64,
    clamps: usize,
}

/// Runs one slot's recursion across days. With `keep = false` only the
/// log-likelihood is accumulated.
fn run_slot(
    c: &SlotCoefficients,
    column: &[f64],
    log_tail: &[f64],
    eta: &[f64],
    keep: bool,
) -> SlotPath {
    let n = column.len();
    let cap = if keep { n } else { 0 };
    let mut out = SlotPath {
        mu: Vec::with_capacity(cap),
        v: Vec::with_capacity(cap),
        s_mu: Vec::with_capacity(cap),
        s_v: Vec::with_capacity(cap),
        log_likelihood: 0.0,
        clamps: 0,
    };
    let (mu0, v0) = c.initial();
    let (mut mu, hit_mu) = guard_mu(mu0);
    let (mut v, hit) = guard_slot(v0, log_tail[0]);
    out.clamps += hit + hit_mu;
    for t in 0..n {
        let state = DcsState {
            mu,
            lambda: v - log_tail[t],
            v,
            eta: eta[t],
        };
        let (ll, sc) = density_and_scores(&state, column[t]);
        out.log_likelihood += ll;
        // the slot's v moves with lambda at fixed tail, so its score is the
        // total derivative along that direction
        let s_v = sc.s_v + sc.s_lambda;
        if keep {
            out.mu.push(mu);
            out.v.push(v);
            out.s_mu.push(sc.s_mu);
            out.s_v.push(s_v);
        }
        if t + 1 < n {
            let (next_mu, hit_mu) = guard_mu(c.mu.step(mu, sc.s_mu));
            mu = next_mu;
            out.clamps += hit_mu;
            let (next, hit) = guard_slot(c.v.step(v, s_v), log_tail[t + 1]);
            v = next;
            out.clamps += hit;
        }
    }
    if out.log_likelihood.is_nan() {
        out.log_likelihood = f64::NEG_INFINITY;
    }
    out
}

fn daily_tails(panel: &IntradayPanel, daily: &ModelFit) -> Result<(Vec<f64>, Vec<f64>)> {
    if daily.len() != panel.len() {
        return Err(Error::Contract(format!(
            "daily fit covers {} days, panel covers {}",
            daily.len(),
            panel.len()
        )));
    }
    Ok((
        daily.state_path.iter().map(daily_log_tail).collect(),
        daily.state_path.iter().map(|s| s.eta).collect(),
    ))
}

/// Filters the panel with supplied slot coefficients.
pub fn intraday_filter_with(
    panel: &IntradayPanel,
    daily: &ModelFit,
    slots: &[SlotCoefficients],
) -> Result<IntradayFit> {
    let (log_tail, eta) = daily_tails(panel, daily)?;
    if panel.is_empty() {
        return Err(Error::Data("panel is empty".into()));
    }
    let pooled = slots.len() == 1 && panel.bars() > 1;
    let slots: Vec<SlotCoefficients> = if pooled {
        vec![slots[0]; panel.bars()]
    } else if slots.len() == panel.bars() {
        slots.to_vec()
    } else {
        return Err(Error::Contract(format!(
            "{} slot coefficient sets for {} bars",
            slots.len(),
            panel.bars()
        )));
    };
    assemble(panel, &slots, log_tail, eta, pooled, Vec::new())
}

fn assemble(
    panel: &IntradayPanel,
    slots: &[SlotCoefficients],
    log_tail: Vec<f64>,
    eta: Vec<f64>,
    pooled: bool,
    convergence: Vec<Convergence>,
) -> Result<IntradayFit> {
    let n = panel.bars();
    let t_len = panel.len();
    let paths = par::map_range(n, |tau| {
        run_slot(&slots[tau], &panel.column(tau), &log_tail, &eta, true)
    });
    let mut fit = IntradayFit {
        bars: n,
        pooled,
        slots: slots.to_vec(),
        mu: vec![0.0; t_len * n],
        v: vec![0.0; t_len * n],
        s_mu: vec![0.0; t_len * n],
        s_v: vec![0.0; t_len * n],
        log_tail,
        eta,
        last_row: panel.row(t_len - 1).to_vec(),
        log_likelihood: 0.0,
        convergence,
        clamp_count: 0,
    };
    for (tau, p) in paths.iter().enumerate() {
        for t in 0..t_len {
            let i = t * n + tau;
            fit.mu[i] = p.mu[t];
            fit.v[i] = p.v[t];
            fit.s_mu[i] = p.s_mu[t];
            fit.s_v[i] = p.s_v[t];
        }
        fit.log_likelihood += p.log_likelihood;
        fit.clamp_count += p.clamps;
    }
    Ok(fit)
}

/// Default slot start: `B = 0.9`, `C = 0.02`, and levels matching the slot's
/// sample mean and variance under the average daily tail.
fn default_slot_start(column: &[f64], log_tail: &[f64], eta: &[f64]) -> SlotCoefficients {
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let k = log_tail.iter().sum::<f64>() / log_tail.len() as f64;
    let e = eta.iter().sum::<f64>() / eta.len() as f64;
    let alpha = k.exp();
    let gamma = alpha / e.cosh();
    // var = delta alpha^2 / gamma^3 and v = ln(alpha delta)
    let v_level = (var.max(1e-300) * gamma.powi(3) / alpha).ln();
    let rec = |level: f64| Recursion::new(0.1 * level, 0.9, 0.02);
    SlotCoefficients {
        mu: rec(mean),
        v: rec(v_level),
    }
}

fn sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

fn estimate_slots(
    columns: &[Vec<f64>],
    log_tail: &[f64],
    eta: &[f64],
    start: SlotCoefficients,
    opts: &FitOptions,
    stream: u64,
) -> (SlotCoefficients, Convergence) {
    let map = CoefficientMap {
        dynamic: vec![true; 2],
        free_loadings: opts.free_loadings,
    };
    let mut base = vec![start.mu, start.v];
    map.restrict(&mut base);
    let total = (columns.len() * log_tail.len()) as f64;
    let objective = |theta: &[f64]| {
        let rs = map.decode(theta);
        let c = SlotCoefficients { mu: rs[0], v: rs[1] };
        let ll: f64 = columns
            .iter()
            .map(|col| run_slot(&c, col, log_tail, eta, false).log_likelihood)
            .sum();
        -ll / total
    };
    let scale = columns.iter().map(|c| sd(c)).sum::<f64>() / columns.len() as f64;
    let steps = map.steps(&base, &[scale, 1.0]);
    let mut starts = vec![map.encode(&base)];
    for k in 0..opts.restarts {
        let seed = opts.seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9));
        starts.push(map.encode(&map.jittered(&base, seed, k as u64 + 1)));
    }
    let (best, conv) = multi_start_minimize(objective, starts, &steps, opts.max_iter, opts.f_tol);
    let rs = map.decode(&best.x);
    (SlotCoefficients { mu: rs[0], v: rs[1] }, conv)
}

/// Estimates the slot recursions by maximum likelihood and filters the panel.
pub fn intraday_filter(
    panel: &IntradayPanel,
    daily: &ModelFit,
    opts: &IntradayOptions,
) -> Result<IntradayFit> {
    let (log_tail, eta) = daily_tails(panel, daily)?;
    if panel.len() < opts.fit.min_obs {
        return Err(Error::Data(format!(
            "slot series have {} days, need at least {}",
            panel.len(),
            opts.fit.min_obs
        )));
    }
    let n = panel.bars();
    let columns: Vec<Vec<f64>> = (0..n).map(|tau| panel.column(tau)).collect();
    let expected = if opts.pooled { 1 } else { n };
    if let Some(w) = &opts.warm_start {
        if w.len() != expected {
            return Err(Error::Contract(format!(
                "{} warm-start slot sets, expected {expected}",
                w.len()
            )));
        }
    }
    let (slots, convergence): (Vec<SlotCoefficients>, Vec<Convergence>) = if opts.pooled {
        let start = match &opts.warm_start {
            Some(w) => w[0],
            None => {
                let pooled_col: Vec<f64> = columns.concat();
                let tails: Vec<f64> = (0..n).flat_map(|_| log_tail.iter().copied()).collect();
                let etas: Vec<f64> = (0..n).flat_map(|_| eta.iter().copied()).collect();
                default_slot_start(&pooled_col, &tails, &etas)
            }
        };
        let (c, conv) = estimate_slots(&columns, &log_tail, &eta, start, &opts.fit, 0);
        (vec![c; n], vec![conv])
    } else {
        par::map_range(n, |tau| {
            let start = match &opts.warm_start {
                Some(w) => w[tau],
                None => default_slot_start(&columns[tau], &log_tail, &eta),
            };
            estimate_slots(
                std::slice::from_ref(&columns[tau]),
                &log_tail,
                &eta,
                start,
                &opts.fit,
                tau as u64,
            )
        })
        .into_iter()
        .unzip()
    };
    if opts.fit.strict {
        if let Some(i) = convergence.iter().position(|c| !c.converged) {
            return Err(Error::Numeric(format!(
                "slot {} optimizer did not converge after {} iterations",
                i + 1,
                convergence[i].iterations
            )));
        }
    }
    assemble(panel, &slots, log_tail, eta, opts.pooled, convergence)
}

/// Within-day seasonal pattern: log of the mean absolute demeaned return of
/// each slot, centered to mean zero.
pub fn intraday_seasonal(panel: &IntradayPanel) -> Result<Vec<f64>> {
    if panel.is_empty() {
        return Err(Error::Data("panel is empty".into()));
    }
    let mut q: Vec<f64> = (0..panel.bars())
        .map(|tau| {
            let col = panel.column(tau);
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let mad = col.iter().map(|x| (x - m).abs()).sum::<f64>() / col.len() as f64;
            (mad + 1e-8).ln()
        })
        .collect();
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    q.iter_mut().for_each(|x| *x -= mean);
    Ok(q)
}

/// Unconstrained four-parameter fits of every slot series, each with its
/// within-day seasonal term on the log-scale equation.
pub fn fit_slots_full(panel: &IntradayPanel, opts: &FitOptions) -> Result<Vec<ModelFit>> {
    let q = intraday_seasonal(panel)?;
    let fits = par::map_range(panel.bars(), |tau| {
        let col = panel.column(tau);
        let qs = vec![q[tau]; col.len()];
        let mut o = opts.clone();
        o.seed = opts.seed.wrapping_add(tau as u64);
        crate::dcs::fit_mle(&col, Some(&qs), &o)
    });
    fits.into_iter().collect()
}

/// Result of a bootstrap quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapVar {
    pub var: f64,
    /// Standard error of the empirical quantile, from a spacing estimate of
    /// the density at the quantile.
    pub standard_error: f64,
    pub draws: usize,
}

const BOOTSTRAP_CHUNK: usize = 4096;

/// Empirical `level` quantile of the sum of one independent draw from each
/// law in `parts`, repeated `draws` times.
pub fn bootstrap_quantile(parts: &[NigParams], level: f64, draws: usize, seed: u64) -> Result<BootstrapVar> {
    if parts.is_empty() {
        return Err(Error::Contract("bootstrap needs at least one slot".into()));
    }
    if draws < 1000 {
        return domain(format!("bootstrap needs at least 1000 draws, got {draws}"));
    }
    if !(level > 0.0 && level < 1.0) {
        return domain(format!("level must lie in (0, 1), got {level}"));
    }
    for p in parts {
        p.validate()?;
    }
    let chunks = draws.div_ceil(BOOTSTRAP_CHUNK);
    let mut sums: Vec<f64> = par::map_range(chunks, |c| {
        let mut rng = stream_rng(seed, c as u64);
        let len = BOOTSTRAP_CHUNK.min(draws - c * BOOTSTRAP_CHUNK);
        (0..len)
            .map(|_| parts.iter().map(|p| p.sample_one(&mut rng)).sum::<f64>())
            .collect::<Vec<_>>()
    })
    .concat();
    sums.sort_by(f64::total_cmp);
    let k = ((draws as f64 * level).ceil() as usize).clamp(1, draws);
    let var = sums[k - 1];
    let m = ((draws as f64).sqrt() as usize).max(1);
    let lo = sums[(k - 1).saturating_sub(m)];
    let hi = sums[(k - 1 + m).min(draws - 1)];
    let span = (k - 1 + m).min(draws - 1) - (k - 1).saturating_sub(m);
    let density = span as f64 / draws as f64 / (hi - lo).max(f64::MIN_POSITIVE);
    let standard_error = (level * (1.0 - level) / draws as f64).sqrt() / density;
    Ok(BootstrapVar {
        var,
        standard_error,
        draws,
    })
}

/// Bootstrap VaR for day `t` from per-slot four-parameter fits.
pub fn bootstrap_daily(fits: &[ModelFit], t: usize, level: f64, draws: usize, seed: u64) -> Result<BootstrapVar> {
    if fits.is_empty() {
        return Err(Error::Contract("no slot fits supplied".into()));
    }
    let parts = fits
        .iter()
        .enumerate()
        .map(|(tau, f)| {
            f.state_path
                .get(t)
                .ok_or_else(|| {
                    Error::Contract(format!("slot {} fit has no state for day index {t}", tau + 1))
                })
                .and_then(crate::dcs::link)
        })
        .collect::<Result<Vec<_>>>()?;
    bootstrap_quantile(&parts, level, draws, seed)
}

/// Correlation of adjacent slot columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonPair {
    /// 1-based slot numbers.
    pub left: usize,
    pub right: usize,
    pub correlation: Option<f64>,
    pub p_value: Option<f64>,
    /// Set when a column is constant and the pair cannot be tested.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonTable {
    pub pairs: Vec<PearsonPair>,
    /// Share of tested pairs with p-value below 0.05.
    pub ratio: f64,
}

/// Pearson correlation test between each pair of adjacent bar slots.
pub fn pearson_adjacency(panel: &IntradayPanel) -> Result<PearsonTable> {
    if panel.bars() < 2 {
        return domain("adjacency test needs at least two bars per day");
    }
    let t = panel.len();
    if t < 3 {
        return Err(Error::Data(format!("adjacency test needs at least 3 days, got {t}")));
    }
    let dist = StudentsT::new(0.0, 1.0, (t - 2) as f64)
        .map_err(|e| Error::Numeric(format!("Student t: {e}")))?;
    let mut pairs = Vec::with_capacity(panel.bars() - 1);
    for tau in 0..panel.bars() - 1 {
        let a = panel.column(tau);
        let b = panel.column(tau + 1);
        let n = t as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(&b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        let (correlation, p_value, flagged) = if saa == 0.0 || sbb == 0.0 {
            (None, None, true)
        } else {
            let r = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
            let p = if r.abs() >= 1.0 {
                0.0
            } else {
                let stat = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
                (2.0 * dist.sf(stat.abs())).min(1.0)
            };
            (Some(r), Some(p), false)
        };
        pairs.push(PearsonPair {
            left: tau + 1,
            right: tau + 2,
            correlation,
            p_value,
            flagged,
        });
    }
    let tested: Vec<f64> = pairs.iter().filter_map(|p| p.p_value).collect();
    let ratio = if tested.is_empty() {
        0.0
    } else {
        tested.iter().filter(|&&p| p < 0.05).count() as f64 / tested.len() as f64
    };
    Ok(PearsonTable { pairs, ratio })
}

/// Loss-oriented simulated market: bar and daily values with the daily
/// predictive states that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedMarket {
    pub daily: Vec<f64>,
    /// Row-major `days x weights.len()`.
    pub bars: Vec<f64>,
    pub states: Vec<DcsState>,
}

/// Simulates bars whose day-`t` law is `NIG(w mu_t, w delta_t, alpha_t, beta_t)`
/// for slot weight `w`. The bars of a day sum to a draw from the daily DCS
/// law, and that sum drives the daily recursion.
pub fn simulate_market(
    coeff: &DcsCoefficients,
    weights: &[f64],
    days: usize,
    seed: u64,
) -> Result<SimulatedMarket> {
    if !coeff.is_stationary() {
        return domain(format!("explosive coefficients: every |B| must be < 1, got {coeff:?}"));
    }
    if days == 0 {
        return domain("simulation length must be at least 1");
    }
    if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return domain("slot weights must be positive and finite");
    }
    let total: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut rng = stream_rng(seed, 0);
    let mut state = crate::dcs::initial_state(coeff);
    let mut daily = Vec::with_capacity(days);
    let mut bars = Vec::with_capacity(days * weights.len());
    let mut states = Vec::with_capacity(days);
    for t in 0..days {
        let p = crate::dcs::link_unchecked(&state);
        let mut sum = 0.0;
        for w in &weights {
            let bar = NigParams {
                mu: w * p.mu,
                delta: w * p.delta,
                alpha: p.alpha,
                beta: p.beta,
            };
            let x = bar.sample_one(&mut rng);
            bars.push(x);
            sum += x;
        }
        daily.push(sum);
        states.push(state);
        if t + 1 < days {
            let (_, sc) = density_and_scores(&state, sum);
            state = crate::dcs::dcs_update(coeff, &state, &sc, 0.0);
            crate::dcs::guard_state(&mut state);
        }
    }
    Ok(SimulatedMarket {
        daily,
        bars,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcs::{dcs_filter, initial_state};

    fn dates(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        (0..n).map(|i| d0 + chrono::Days::new(i as u64)).collect()
    }

    #[test]
    fn panel_validation() {
        assert!(IntradayPanel::new(dates(2), 2, vec![0.0; 3]).is_err());
        assert!(IntradayPanel::new(vec![dates(1)[0]; 2], 1, vec![0.0; 2]).is_err());
        let p = IntradayPanel::from_rows(dates(2), &[vec![0.1, 0.2], vec![0.3, -0.1]]).unwrap();
        assert_eq!(p.column(1), vec![0.2, -0.1]);
        assert!(p.check_reconciles(&[0.3, 0.2], 1e-12).is_ok());
        assert!(p.check_reconciles(&[0.3, 0.25], 1e-12).is_err());
    }

    #[test]
    fn constant_slots_and_shared_tail() {
        let coeff = DcsCoefficients::from_recursions([
            Recursion::new(0.0, 0.0, 0.0),
            Recursion::new(-0.5, 0.8, 0.05),
            Recursion::new(0.0, 0.0, 0.0),
            Recursion::new(0.1, 0.5, 0.02),
        ]);
        let m = simulate_market(&coeff, &[1.0, 2.0, 1.0], 60, 4).unwrap();
        let panel = IntradayPanel::new(dates(60), 3, m.bars.clone()).unwrap();
        let daily = dcs_filter(&coeff, &m.daily, None, initial_state(&coeff)).unwrap();
        let slots: Vec<_> = (0..3).map(|i| SlotCoefficients::constant(0.01 * i as f64, -0.3)).collect();
        let fit = intraday_filter_with(&panel, &daily, &slots).unwrap();
        for t in 0..60 {
            let d = crate::dcs::link(&daily.state_path[t]).unwrap();
            for tau in 0..3 {
                let b = fit.bar_params(t, tau);
                assert_eq!(b.alpha, d.alpha);
                assert_eq!(b.beta, d.beta);
                assert_eq!(fit.mu[t * 3 + tau], 0.01 * tau as f64);
                assert_eq!(fit.v[t * 3 + tau], -0.3);
            }
        }
    }

    #[test]
    fn pearson_identical_and_constant_columns() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, i as f64, 1.0]).collect();
        let p = IntradayPanel::from_rows(dates(20), &rows).unwrap();
        let table = pearson_adjacency(&p).unwrap();
        assert_eq!(table.pairs[0].correlation, Some(1.0));
        assert_eq!(table.pairs[0].p_value, Some(0.0));
        assert!(table.pairs[1].flagged);
        assert_eq!(table.ratio, 1.0);
    }

    #[test]
    fn bootstrap_rejects_bad_inputs() {
        let p = NigParams::new(0.0, 1.0, 1.0, 0.0).unwrap();
        assert!(bootstrap_quantile(&[p], 0.95, 10, 1).is_err());
        assert!(bootstrap_quantile(&[], 0.95, 5000, 1).is_err());
        assert!(bootstrap_quantile(&[p], 1.0, 5000, 1).is_err());
    }
}
