//! Score-driven (DCS) filter for NIG returns.
//!
//! The state `(mu, lambda, v, eta)` maps to NIG parameters through
//! `delta = e^lambda`, `alpha = e^(v - lambda)`, `beta = alpha tanh(eta)`.
//! Each coordinate follows `x' = A + B x + C s`, where `s` is the score of the
//! conditional log density with respect to that coordinate; the location
//! score is scaled by `e^(2 lambda)` and the log-scale equation also receives
//! a deterministic seasonal term.

use crate::error::{domain, ensure_finite, Error, Result};
use crate::nig::{nig_fit_static, stream_rng, NigParams};
use crate::optim::{nelder_mead, SimplexOptions, SimplexResult};
use crate::par;
use crate::special::k0_k1_excess;
use chrono::{Datelike, NaiveDate};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Bound applied to `mu`, `lambda`, `v - lambda` and `eta` inside the recursion.
pub const STATE_GUARD: f64 = 30.0;
/// `|tanh|` never reaches 1, so `|beta| < alpha` survives rounding.
const MAX_TANH: f64 = 1.0 - 1e-15;
const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Time-varying parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DcsState {
    pub mu: f64,
    pub lambda: f64,
    pub v: f64,
    pub eta: f64,
}

impl DcsState {
    pub fn new(mu: f64, lambda: f64, v: f64, eta: f64) -> Self {
        Self { mu, lambda, v, eta }
    }

    pub fn is_finite(&self) -> bool {
        self.mu.is_finite() && self.lambda.is_finite() && self.v.is_finite() && self.eta.is_finite()
    }

    /// `v - lambda`, the log of the tail parameter.
    pub fn log_tail(&self) -> f64 {
        self.v - self.lambda
    }
}

/// Intercept `A`, persistence `B` and score loading `C` of one recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recursion {
    pub intercept: f64,
    pub persistence: f64,
    pub loading: f64,
}

impl Recursion {
    pub fn new(intercept: f64, persistence: f64, loading: f64) -> Self {
        Self {
            intercept,
            persistence,
            loading,
        }
    }

    /// Constant recursion pinned at `level`.
    pub fn constant(level: f64) -> Self {
        Self::new(level, 0.0, 0.0)
    }

    /// `A / (1 - B)`.
    pub fn unconditional(&self) -> f64 {
        self.intercept / (1.0 - self.persistence)
    }

    #[inline]
    pub fn step(&self, x: f64, score: f64) -> f64 {
        self.intercept + self.persistence * x + self.loading * score
    }

    fn is_stationary(&self) -> bool {
        self.persistence.abs() < 1.0
    }
}

/// The twelve recursion constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcsCoefficients {
    pub mu: Recursion,
    pub lambda: Recursion,
    pub v: Recursion,
    pub eta: Recursion,
}

impl DcsCoefficients {
    pub fn recursions(&self) -> [Recursion; 4] {
        [self.mu, self.lambda, self.v, self.eta]
    }

    pub fn from_recursions(r: [Recursion; 4]) -> Self {
        Self {
            mu: r[0],
            lambda: r[1],
            v: r[2],
            eta: r[3],
        }
    }

    /// Coefficients whose filter stays at `state` forever.
    pub fn constant(state: DcsState) -> Self {
        Self {
            mu: Recursion::constant(state.mu),
            lambda: Recursion::constant(state.lambda),
            v: Recursion::constant(state.v),
            eta: Recursion::constant(state.eta),
        }
    }

    pub fn is_stationary(&self) -> bool {
        self.recursions().iter().all(Recursion::is_stationary)
    }

    /// Unconditional state `A_i / (1 - B_i)`.
    pub fn unconditional_state(&self) -> DcsState {
        DcsState {
            mu: self.mu.unconditional(),
            lambda: self.lambda.unconditional(),
            v: self.v.unconditional(),
            eta: self.eta.unconditional(),
        }
    }
}

/// Scores of the conditional log density.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreVector {
    pub s_mu: f64,
    pub s_lambda: f64,
    pub s_v: f64,
    pub s_eta: f64,
}

impl ScoreVector {
    pub fn as_array(&self) -> [f64; 4] {
        [self.s_mu, self.s_lambda, self.s_v, self.s_eta]
    }
}

/// A 366-day deterministic cycle added to the log-scale recursion.
///
/// Positions follow the leap-year calendar: January 1 is 0, February 29 is
/// 59 and December 31 is 365, so a date maps to the same position every year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalCycle {
    values: Vec<f64>,
}

impl SeasonalCycle {
    pub const LENGTH: usize = 366;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != Self::LENGTH {
            return domain(format!(
                "seasonal cycle must have {} entries, got {}",
                Self::LENGTH,
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("seasonal cycle values must be finite");
        }
        Ok(Self { values })
    }

    pub fn zeros() -> Self {
        Self {
            values: vec![0.0; Self::LENGTH],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn position(date: NaiveDate) -> usize {
        NaiveDate::from_ymd_opt(2000, date.month(), date.day())
            .expect("every month/day exists in a leap year")
            .ordinal0() as usize
    }

    pub fn value_at(&self, date: NaiveDate) -> f64 {
        self.values[Self::position(date)]
    }

    /// Seasonal term for each date.
    pub fn series(&self, dates: &[NaiveDate]) -> Vec<f64> {
        dates.iter().map(|&d| self.value_at(d)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub starts: usize,
}

/// Result of filtering (and, after [`fit_mle`], estimating) a return series.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub coefficients: DcsCoefficients,
    pub log_likelihood: f64,
    /// `state_path[t]` is the predictive state for observation `t`.
    pub state_path: Vec<DcsState>,
    pub score_path: Vec<ScoreVector>,
    /// `None` when the coefficients were supplied rather than estimated.
    pub convergence: Option<Convergence>,
    /// Number of times the state guard clipped a coordinate.
    pub clamp_count: usize,
}

impl ModelFit {
    pub fn len(&self) -> usize {
        self.state_path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state_path.is_empty()
    }

    pub fn final_state(&self) -> Option<DcsState> {
        self.state_path.last().copied()
    }

    pub fn document(&self) -> ModelDocument {
        ModelDocument {
            coefficients: self.coefficients,
            final_state: self.final_state(),
            log_likelihood: self.log_likelihood,
            observations: self.len(),
            convergence: self.convergence,
            clamp_count: self.clamp_count,
        }
    }
}

/// Serialized form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub coefficients: DcsCoefficients,
    pub final_state: Option<DcsState>,
    pub log_likelihood: f64,
    pub observations: usize,
    pub convergence: Option<Convergence>,
    pub clamp_count: usize,
}

#[inline]
pub(crate) fn bounded_tanh(x: f64) -> f64 {
    x.tanh().clamp(-MAX_TANH, MAX_TANH)
}

#[inline]
fn sech(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

/// Maps a state to NIG parameters.
pub fn link(state: &DcsState) -> Result<NigParams> {
    if !state.is_finite() {
        return domain(format!("non-finite DCS state {state:?}"));
    }
    let p = link_unchecked(state);
    p.validate()?;
    Ok(p)
}

#[inline]
pub(crate) fn link_unchecked(state: &DcsState) -> NigParams {
    let alpha = (state.v - state.lambda).exp();
    NigParams {
        mu: state.mu,
        delta: state.lambda.exp(),
        alpha,
        beta: alpha * bounded_tanh(state.eta),
    }
}

/// `(tanh eta, sech eta)` with `tanh` bounded away from ±1 and `sech`
/// matched to it, so `th^2 + sh^2 = 1` holds past the bound too. The flag is
/// set when the bound is active; the density is then flat in `eta`.
#[inline]
fn tail_pair(eta: f64) -> (f64, f64, bool) {
    let t = eta.tanh();
    if t.abs() < MAX_TANH {
        (t, sech(eta), false)
    } else {
        let th = MAX_TANH.copysign(t);
        (th, ((1.0 - MAX_TANH) * (1.0 + MAX_TANH)).sqrt(), true)
    }
}

/// Quantities shared by the log density and the scores.
struct Kernel {
    /// `e^v (sh + th u - w)`, the exponent of the density; never positive.
    core: f64,
    ev: f64,
    u: f64,
    w: f64,
    th: f64,
    sh: f64,
    z: f64,
    flat_eta: bool,
    k1s: f64,
    /// `R(z) - 1` with `R = K0/K1 + 1/z = -d ln K1 / dz`.
    r1: f64,
}

/// The NIG exponent `delta gamma + beta e - alpha sqrt(delta^2 + e^2)` is a
/// difference of terms as large as `e^v w`; it is evaluated as
/// `-e^v (sh u - th)^2 / (w + th u + sh)`, which has no cancellation.
#[inline]
fn kernel(state: &DcsState, r: f64) -> Kernel {
    let DcsState { mu, lambda, v, eta } = *state;
    let u = (r - mu) / lambda.exp();
    let w = (1.0 + u * u).sqrt();
    let ev = v.exp();
    let z = ev * w;
    let (th, sh, flat_eta) = tail_pair(eta);
    let tu = th * u;
    let denom = if tu >= 0.0 {
        w + tu + sh
    } else {
        // w + th u = (1 + sh^2 u^2) / (w - th u)
        (1.0 + sh * sh * u * u) / (w - tu) + sh
    };
    let d = sh * u - th;
    let (_, k1s, r1) = k0_k1_excess(z);
    Kernel {
        core: -ev * d * d / denom,
        ev,
        u,
        w,
        th,
        sh,
        z,
        flat_eta,
        k1s,
        r1,
    }
}

#[inline]
fn kernel_log_density(k: &Kernel, lambda: f64, v: f64) -> f64 {
    k.core + v - LN_PI - lambda - k.w.ln() + k.k1s.ln()
}

/// Log density and scores sharing one Bessel evaluation.
#[inline]
pub(crate) fn density_and_scores(state: &DcsState, r: f64) -> (f64, ScoreVector) {
    let k = kernel(state, r);
    let ll = kernel_log_density(&k, state.lambda, state.v);
    let Kernel { ev, u, w, th, sh, z, r1, .. } = k;
    let delta = state.lambda.exp();
    // u / w - th, formed without cancellation when both share a sign
    let a = if u * th > 0.0 {
        (sh * sh * u * u - th * th) / (w * (u + th * w))
    } else {
        u / w - th
    };
    let scores = ScoreVector {
        s_mu: ev * delta * (r1 * u / w + a) + delta * u / (w * w),
        s_lambda: -1.0 / (w * w) + ev * (r1 * u * u / w + u * a),
        s_v: 1.0 + k.core - r1 * z,
        s_eta: if k.flat_eta { 0.0 } else { ev * sh * (sh * u - th) },
    };
    (ll, scores)
}

#[inline]
fn log_density_only(state: &DcsState, r: f64) -> f64 {
    kernel_log_density(&kernel(state, r), state.lambda, state.v)
}

fn check_inputs(state: &DcsState, r: f64) -> Result<()> {
    if !state.is_finite() {
        return domain(format!("non-finite DCS state {state:?}"));
    }
    ensure_finite(r, "observation")
}

/// Conditional log density of `r` given `state`.
pub fn log_cond_density(state: &DcsState, r: f64) -> Result<f64> {
    check_inputs(state, r)?;
    Ok(log_density_only(state, r))
}

/// Scores of the conditional log density at `(state, r)`.
pub fn scores(state: &DcsState, r: f64) -> Result<ScoreVector> {
    check_inputs(state, r)?;
    Ok(density_and_scores(state, r).1)
}

/// One step of the recursion; `q` enters only the log-scale equation.
pub fn dcs_update(coeff: &DcsCoefficients, state: &DcsState, score: &ScoreVector, q: f64) -> DcsState {
    DcsState {
        mu: coeff.mu.step(state.mu, score.s_mu),
        lambda: coeff.lambda.step(state.lambda, score.s_lambda) + q,
        v: coeff.v.step(state.v, score.s_v),
        eta: coeff.eta.step(state.eta, score.s_eta),
    }
}

/// Clips `mu`, `lambda`, `v - lambda` and `eta` to `±STATE_GUARD`; returns
/// how many coordinates were touched.
#[inline]
pub(crate) fn guard_state(s: &mut DcsState) -> usize {
    let mut hits = 0;
    if s.mu.abs() > STATE_GUARD {
        s.mu = s.mu.clamp(-STATE_GUARD, STATE_GUARD);
        hits += 1;
    }
    if s.lambda.abs() > STATE_GUARD {
        s.lambda = s.lambda.clamp(-STATE_GUARD, STATE_GUARD);
        hits += 1;
    }
    let k = s.v - s.lambda;
    if k.abs() > STATE_GUARD {
        s.v = s.lambda + k.clamp(-STATE_GUARD, STATE_GUARD);
        hits += 1;
    }
    if s.eta.abs() > STATE_GUARD {
        s.eta = s.eta.clamp(-STATE_GUARD, STATE_GUARD);
        hits += 1;
    }
    hits
}

fn check_seasonal(q: Option<&[f64]>, n: usize) -> Result<()> {
    if let Some(q) = q {
        if q.len() != n {
            return Err(Error::Contract(format!(
                "seasonal series has {} entries for {n} observations",
                q.len()
            )));
        }
        if let Some(i) = q.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!("non-finite seasonal value at index {i}")));
        }
    }
    Ok(())
}

pub(crate) fn check_returns(returns: &[f64]) -> Result<()> {
    if returns.is_empty() {
        return Err(Error::Data("return series is empty".into()));
    }
    if let Some(t) = returns.iter().position(|r| !r.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite return {} at index {t}",
            returns[t]
        )));
    }
    Ok(())
}

/// Runs the filter left to right from `init`.
///
/// `seasonal[t]` is the seasonal term for observation `t`; it enters the
/// update that produces the state for `t` (so `seasonal[0]` is unused).
pub fn dcs_filter(
    coeff: &DcsCoefficients,
    returns: &[f64],
    seasonal: Option<&[f64]>,
    init: DcsState,
) -> Result<ModelFit> {
    check_returns(returns)?;
    check_seasonal(seasonal, returns.len())?;
    if !init.is_finite() {
        return domain(format!("non-finite initial state {init:?}"));
    }
    let n = returns.len();
    let mut state_path = Vec::with_capacity(n);
    let mut score_path = Vec::with_capacity(n);
    let mut state = init;
    let mut total = 0.0;
    let mut clamps = 0;
    for (t, &r) in returns.iter().enumerate() {
        let (ll, sc) = density_and_scores(&state, r);
        total += ll;
        state_path.push(state);
        score_path.push(sc);
        if t + 1 < n {
            let q = seasonal.map_or(0.0, |q| q[t + 1]);
            state = dcs_update(coeff, &state, &sc, q);
            clamps += guard_state(&mut state);
        }
    }
    Ok(ModelFit {
        coefficients: *coeff,
        log_likelihood: total,
        state_path,
        score_path,
        convergence: None,
        clamp_count: clamps,
    })
}

/// Log-likelihood only, without storing paths. Returns `-inf` when the
/// recursion leaves the representable range.
pub(crate) fn log_likelihood(
    coeff: &DcsCoefficients,
    returns: &[f64],
    seasonal: Option<&[f64]>,
    init: DcsState,
) -> f64 {
    let mut state = init;
    let mut total = 0.0;
    let n = returns.len();
    for (t, &r) in returns.iter().enumerate() {
        let (ll, sc) = density_and_scores(&state, r);
        total += ll;
        if t + 1 < n {
            let q = seasonal.map_or(0.0, |q| q[t + 1]);
            state = dcs_update(coeff, &state, &sc, q);
            guard_state(&mut state);
        }
    }
    if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    }
}

/// The filter's starting point for estimated coefficients: the unconditional
/// state, guarded.
pub fn initial_state(coeff: &DcsCoefficients) -> DcsState {
    let mut s = coeff.unconditional_state();
    guard_state(&mut s);
    s
}

/// Options for [`fit_mle`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Minimum number of observations accepted.
    pub min_obs: usize,
    pub max_iter: usize,
    /// Relative tolerance on the per-observation log-likelihood.
    pub f_tol: f64,
    /// Jittered restarts run alongside the main start.
    pub restarts: usize,
    pub seed: u64,
    /// Fail with [`Error::NotConverged`] instead of returning an unconverged fit.
    pub strict: bool,
    /// Estimate the score loadings; when false they are pinned at zero.
    pub free_loadings: bool,
    /// Which of `mu`, `lambda`, `v`, `eta` follow a recursion. A static
    /// parameter has `B = C = 0` and only its level is estimated.
    pub dynamic: [bool; 4],
    /// Starting coefficients; replaces the static-fit initialization.
    pub warm_start: Option<DcsCoefficients>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            min_obs: 250,
            max_iter: 5000,
            f_tol: 1e-8,
            restarts: 3,
            seed: 0,
            strict: true,
            free_loadings: true,
            dynamic: [true; 4],
            warm_start: None,
        }
    }
}

/// Largest |B| reachable through the squashing map.
const MAX_PERSISTENCE: f64 = 0.9999;

/// Unconstrained parameterization of a set of recursions: `B = tanh(theta)`.
/// A static recursion contributes only its level (`B = C = 0`).
pub(crate) struct CoefficientMap {
    pub dynamic: Vec<bool>,
    pub free_loadings: bool,
}

impl CoefficientMap {
    fn width(&self, dynamic: bool) -> usize {
        match (dynamic, self.free_loadings) {
            (false, _) => 1,
            (true, false) => 2,
            (true, true) => 3,
        }
    }

    pub fn dim(&self) -> usize {
        self.dynamic.iter().map(|&d| self.width(d)).sum()
    }

    /// Projects starting recursions onto the parameterized family.
    pub fn restrict(&self, rs: &mut [Recursion]) {
        for (r, &d) in rs.iter_mut().zip(&self.dynamic) {
            if !d {
                *r = Recursion::constant(r.unconditional());
            } else if !self.free_loadings {
                r.loading = 0.0;
            }
        }
    }

    pub fn encode(&self, rs: &[Recursion]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for (r, &d) in rs.iter().zip(&self.dynamic) {
            if !d {
                out.push(r.unconditional());
                continue;
            }
            out.push(r.intercept);
            out.push(r.persistence.clamp(-MAX_PERSISTENCE, MAX_PERSISTENCE).atanh());
            if self.free_loadings {
                out.push(r.loading);
            }
        }
        out
    }

    pub fn decode(&self, theta: &[f64]) -> Vec<Recursion> {
        let mut out = Vec::with_capacity(self.dynamic.len());
        let mut i = 0;
        for &d in &self.dynamic {
            let c = &theta[i..i + self.width(d)];
            i += c.len();
            out.push(match c {
                [level] => Recursion::constant(*level),
                _ => Recursion {
                    intercept: c[0],
                    persistence: c[1].tanh().clamp(-MAX_PERSISTENCE, MAX_PERSISTENCE),
                    loading: if self.free_loadings { c[2] } else { 0.0 },
                },
            });
        }
        out
    }

    /// Simplex steps; `scales[i]` is the natural size of coordinate `i`'s level.
    pub fn steps(&self, rs: &[Recursion], scales: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for ((r, s), &d) in rs.iter().zip(scales).zip(&self.dynamic) {
            if !d {
                out.push(0.1 * s);
                continue;
            }
            out.push(0.1 * (1.0 - r.persistence).max(0.05) * s);
            out.push(0.3);
            if self.free_loadings {
                out.push(0.03);
            }
        }
        out
    }

    /// Random start around `base`: persistence jittered on the `atanh`
    /// scale with the level kept, loadings nudged. Static recursions stay put.
    pub fn jittered(&self, base: &[Recursion], seed: u64, stream: u64) -> Vec<Recursion> {
        let mut rng = stream_rng(seed, stream);
        base.iter()
            .zip(&self.dynamic)
            .map(|(r, &d)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let zc: f64 = StandardNormal.sample(&mut rng);
                if !d {
                    return *r;
                }
                let level = r.unconditional();
                let b = ((r.persistence.clamp(-MAX_PERSISTENCE, MAX_PERSISTENCE)).atanh() + 0.5 * z)
                    .tanh()
                    .clamp(-MAX_PERSISTENCE, MAX_PERSISTENCE);
                Recursion {
                    intercept: (1.0 - b) * level,
                    persistence: b,
                    loading: if self.free_loadings { r.loading + 0.02 * zc } else { 0.0 },
                }
            })
            .collect()
    }
}

/// Multi-start simplex search: the main start plus jittered starts run
/// independently (in parallel when enabled), then the best is polished with
/// fresh simplices. Deterministic for fixed inputs.
pub(crate) fn multi_start_minimize<F>(
    objective: F,
    starts: Vec<Vec<f64>>,
    steps: &[f64],
    max_iter: usize,
    f_tol: f64,
) -> (SimplexResult, Convergence)
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let opts = SimplexOptions {
        max_iter,
        f_tol,
        x_tol: 1e-3,
    };
    let n_starts = starts.len();
    let results = par::map_slice(&starts, |x0| nelder_mead(&objective, x0, steps, &opts));
    let mut iterations: usize = results.iter().map(|r| r.iterations).sum();
    let mut evaluations: usize = results.iter().map(|r| r.evaluations).sum();
    let mut best = results
        .into_iter()
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .expect("at least one start");
    // polish: restart from the best point until a fresh simplex stops improving
    let small: Vec<f64> = steps.iter().map(|s| 0.3 * s).collect();
    let mut converged = best.converged;
    for _ in 0..3 {
        let again = nelder_mead(&objective, &best.x, &small, &opts);
        iterations += again.iterations;
        evaluations += again.evaluations;
        let gain = best.f - again.f;
        converged = again.converged;
        if again.f <= best.f {
            best = again;
        }
        if gain <= f_tol * best.f.abs().max(1.0) {
            break;
        }
    }
    let conv = Convergence {
        converged,
        iterations,
        evaluations,
        starts: n_starts,
    };
    (best, conv)
}

/// Default starting coefficients: `B = 0.9`, `C = 0.02`, and `A` placing the
/// unconditional state at the static NIG fit.
pub fn default_start(returns: &[f64]) -> Result<DcsCoefficients> {
    let p = nig_fit_static(returns)?;
    let targets = state_for(&p);
    let rec = |t: f64| Recursion::new((1.0 - 0.9) * t, 0.9, 0.02);
    Ok(DcsCoefficients {
        mu: rec(targets.mu),
        lambda: rec(targets.lambda),
        v: rec(targets.v),
        eta: rec(targets.eta),
    })
}

/// Inverse of [`link`].
pub fn state_for(p: &NigParams) -> DcsState {
    DcsState {
        mu: p.mu,
        lambda: p.delta.ln(),
        v: (p.alpha * p.delta).ln(),
        eta: (p.beta / p.alpha).clamp(-MAX_TANH, MAX_TANH).atanh(),
    }
}

/// Maximum-likelihood estimation of the coefficients (twelve when every
/// parameter is dynamic).
pub fn fit_mle(returns: &[f64], seasonal: Option<&[f64]>, opts: &FitOptions) -> Result<ModelFit> {
    check_returns(returns)?;
    check_seasonal(seasonal, returns.len())?;
    if returns.len() < opts.min_obs {
        return Err(Error::Data(format!(
            "MLE needs at least {} observations, got {}",
            opts.min_obs,
            returns.len()
        )));
    }
    let start = match opts.warm_start {
        Some(c) => c,
        None => default_start(returns)?,
    };
    let map = CoefficientMap {
        dynamic: opts.dynamic.to_vec(),
        free_loadings: opts.free_loadings,
    };
    let mut base = start.recursions().to_vec();
    map.restrict(&mut base);
    let n = returns.len() as f64;
    let objective = |theta: &[f64]| {
        let rs = map.decode(theta);
        let coeff = DcsCoefficients::from_recursions([rs[0], rs[1], rs[2], rs[3]]);
        -log_likelihood(&coeff, returns, seasonal, initial_state(&coeff)) / n
    };
    let sd = crate::nig::sample_moments(returns).variance.sqrt();
    let steps = map.steps(&base, &[sd, 1.0, 1.0, 1.0]);
    let mut starts = vec![map.encode(&base)];
    for k in 0..opts.restarts {
        starts.push(map.encode(&map.jittered(&base, opts.seed, k as u64 + 1)));
    }
    let (best, conv) = multi_start_minimize(objective, starts, &steps, opts.max_iter, opts.f_tol);
    let rs = map.decode(&best.x);
    let coeff = DcsCoefficients::from_recursions([rs[0], rs[1], rs[2], rs[3]]);
    let mut fit = dcs_filter(&coeff, returns, seasonal, initial_state(&coeff))?;
    fit.convergence = Some(conv);
    if !conv.converged && opts.strict {
        return Err(Error::NotConverged {
            iterations: conv.iterations,
            best_loglik: fit.log_likelihood,
            best: Box::new(fit),
        });
    }
    Ok(fit)
}

/// Predictive state for the observation after the last filtered one.
pub fn forecast_one_step(fit: &ModelFit, last_return: f64, q_next: f64) -> Result<DcsState> {
    let Some(state) = fit.final_state() else {
        return Err(Error::Contract("cannot forecast from an empty fit".into()));
    };
    advance_state(&fit.coefficients, &state, last_return, q_next)
}

/// One filter step: the guarded predictive state after observing `r` in
/// `state`, with seasonal term `q_next` for the next observation.
pub fn advance_state(coeff: &DcsCoefficients, state: &DcsState, r: f64, q_next: f64) -> Result<DcsState> {
    ensure_finite(r, "observation")?;
    ensure_finite(q_next, "seasonal term")?;
    let sc = scores(state, r)?;
    let mut next = dcs_update(coeff, state, &sc, q_next);
    guard_state(&mut next);
    Ok(next)
}

/// A simulated path and the predictive states that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub returns: Vec<f64>,
    pub states: Vec<DcsState>,
}

/// Draws `len` returns from the model, starting at the unconditional state.
pub fn simulate_dcs_path(
    coeff: &DcsCoefficients,
    len: usize,
    seasonal: Option<&[f64]>,
    seed: u64,
) -> Result<SimulatedPath> {
    if !coeff.is_stationary() {
        return domain(format!("explosive coefficients: every |B| must be < 1, got {coeff:?}"));
    }
    if len == 0 {
        return domain("simulation length must be at least 1");
    }
    check_seasonal(seasonal, len)?;
    let mut rng = stream_rng(seed, 0);
    let mut state = initial_state(coeff);
    let mut returns = Vec::with_capacity(len);
    let mut states = Vec::with_capacity(len);
    for t in 0..len {
        let p = link_unchecked(&state);
        let r = p.sample_one(&mut rng);
        returns.push(r);
        states.push(state);
        if t + 1 < len {
            let (_, sc) = density_and_scores(&state, r);
            let q = seasonal.map_or(0.0, |q| q[t + 1]);
            state = dcs_update(coeff, &state, &sc, q);
            guard_state(&mut state);
        }
    }
    Ok(SimulatedPath { returns, states })
}

pub fn simulate_dcs(
    coeff: &DcsCoefficients,
    len: usize,
    seasonal: Option<&[f64]>,
    seed: u64,
) -> Result<Vec<f64>> {
    simulate_dcs_path(coeff, len, seasonal, seed).map(|p| p.returns)
}
