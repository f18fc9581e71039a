//! The normal inverse Gaussian distribution.
//!
//! `NIG(mu, delta, alpha, beta)` is the normal mean-variance mixture
//! `X = mu + beta Z + sqrt(Z) Y` with `Y ~ N(0, 1)` and `Z` inverse Gaussian
//! with mean `delta / gamma` and shape `delta^2`, where
//! `gamma = sqrt(alpha^2 - beta^2)`. Sums of independent NIG variables that
//! share `(alpha, beta)` are again NIG with summed location and scale.

use crate::error::{domain, ensure_finite, Error, Result};
use crate::numeric::{brent_root, gauss_kronrod_15, integrate};
use crate::optim::{nelder_mead, SimplexOptions};
use crate::par;
use crate::special::k0_k1_scaled;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Relative tolerance on `(alpha, beta)` agreement for convolution closure.
pub const CLOSURE_TOLERANCE: f64 = 1e-9;

const SAMPLE_CHUNK: usize = 8192;
const TAIL_MASS: f64 = 1e-17;
const QUAD_ABS_TOL: f64 = 1e-14;
const QUAD_REL_TOL: f64 = 1e-12;

/// Location `mu`, scale `delta`, tail `alpha` and skewness `beta`.
///
/// Valid when `delta > 0`, `alpha > 0` and `|beta| < alpha`. The symmetric
/// case `beta = 0` is admitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigParams {
    pub mu: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// The inverse-Gaussian mixing law `IG(mean = delta / gamma, shape = delta^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IgMixture {
    pub delta: f64,
    pub gamma: f64,
}

impl IgMixture {
    pub fn new(delta: f64, gamma: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite() && gamma > 0.0 && gamma.is_finite()) {
            return domain(format!(
                "inverse-Gaussian mixture needs positive finite delta and gamma, got ({delta}, {gamma})"
            ));
        }
        Ok(Self { delta, gamma })
    }

    pub fn mean(&self) -> f64 {
        self.delta / self.gamma
    }

    pub fn shape(&self) -> f64 {
        self.delta * self.delta
    }

    /// One draw by the Michael–Schucany–Haas transformation: a chi-square(1)
    /// variate mapped to the smaller root, then a single uniform choosing
    /// between the two roots.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let m = self.mean();
        let l = self.shape();
        let n: f64 = rng.sample(StandardNormal);
        let y = n * n;
        let my = m * y;
        // m + m^2 y/(2l) - (m/2l) sqrt(4 m l y + m^2 y^2), rearranged to avoid cancellation
        let root = (4.0 * m * l * y + my * my).sqrt();
        let x = m - 2.0 * m * my / (root + my);
        let x = if x > 0.0 { x } else { f64::MIN_POSITIVE };
        let u: f64 = rng.random();
        if u <= m / (m + x) {
            x
        } else {
            m * m / x
        }
    }
}

/// Mean, variance, skewness and excess kurtosis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl NigParams {
    pub fn new(mu: f64, delta: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self {
            mu,
            delta,
            alpha,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mu.is_finite()
            && self.delta.is_finite()
            && self.alpha.is_finite()
            && self.beta.is_finite()
            && self.delta > 0.0
            && self.alpha > 0.0
            && self.beta.abs() < self.alpha
            && self.gamma() > 0.0;
        if ok {
            Ok(())
        } else {
            domain(format!(
                "invalid NIG parameters (mu={}, delta={}, alpha={}, beta={}): need delta > 0, alpha > 0, |beta| < alpha",
                self.mu, self.delta, self.alpha, self.beta
            ))
        }
    }

    /// `sqrt(alpha^2 - beta^2)`, computed as `sqrt((alpha-beta)(alpha+beta))`.
    #[inline]
    pub fn gamma(&self) -> f64 {
        ((self.alpha - self.beta) * (self.alpha + self.beta)).sqrt()
    }

    pub fn mixture(&self) -> IgMixture {
        IgMixture {
            delta: self.delta,
            gamma: self.gamma(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.mu + self.delta * self.beta / self.gamma()
    }

    pub fn variance(&self) -> f64 {
        let g = self.gamma();
        self.delta * self.alpha * self.alpha / (g * g * g)
    }

    pub fn moments(&self) -> Moments {
        let g = self.gamma();
        let dg = self.delta * g;
        let rho = self.beta / self.alpha;
        Moments {
            mean: self.mean(),
            variance: self.variance(),
            skewness: 3.0 * rho / dg.sqrt(),
            excess_kurtosis: 3.0 * (1.0 + 4.0 * rho * rho) / dg,
        }
    }

    /// Log density, evaluated through the scaled Bessel function so that it
    /// stays finite far into the tails.
    #[inline]
    pub fn log_pdf_unchecked(&self, x: f64) -> f64 {
        let dx = x - self.mu;
        let s = self.delta.hypot(dx);
        let z = self.alpha * s;
        let (_, k1s) = k0_k1_scaled(z);
        (self.alpha * self.delta / PI).ln() - s.ln() + k1s.ln() - self.exponent(dx, s)
    }

    /// `alpha s - beta dx - delta gamma >= 0`. When `beta dx + delta gamma`
    /// is positive the difference is rewritten as
    /// `(beta delta - gamma dx)^2 / (alpha s + beta dx + delta gamma)`,
    /// which does not cancel when the three terms are huge and nearly equal.
    #[inline]
    fn exponent(&self, dx: f64, s: f64) -> f64 {
        let g = self.gamma();
        let lin = self.beta * dx + self.delta * g;
        if lin > 0.0 {
            let d = self.beta * self.delta - g * dx;
            d * d / (self.alpha * s + lin)
        } else {
            self.alpha * s - lin
        }
    }

    #[inline]
    fn pdf_unchecked(&self, x: f64) -> f64 {
        self.log_pdf_unchecked(x).exp()
    }

    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        ensure_finite(x, "NIG density argument")?;
        Ok(self.log_pdf_unchecked(x))
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.log_pdf(x).map(f64::exp)
    }

    /// Width of the central peak: the scale for quadrature breakpoints.
    fn core_width(&self) -> f64 {
        self.variance().sqrt().min(self.delta)
    }

    /// Integral of the density over `[a, b]`, split at geometrically spaced
    /// breakpoints around the peak so narrow cores are never stepped over.
    fn integrate_pdf(&self, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
        if a >= b {
            return Ok(0.0);
        }
        let w = self.core_width();
        let mut cuts = vec![a];
        let push = |c: f64, cuts: &mut Vec<f64>| {
            if c > a && c < b {
                cuts.push(c);
            }
        };
        push(self.mu, &mut cuts);
        let mut k = w;
        let reach = (self.mu - a).abs().max((b - self.mu).abs());
        while k < reach {
            push(self.mu - k, &mut cuts);
            push(self.mu + k, &mut cuts);
            k *= 2.0;
        }
        cuts.push(b);
        cuts.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for win in cuts.windows(2) {
            total += integrate(
                |x| self.pdf_unchecked(x),
                win[0],
                win[1],
                abs_tol,
                QUAD_REL_TOL,
            )?;
        }
        Ok(total)
    }

    /// A point left of `start` beyond which the remaining mass is negligible.
    fn left_cutoff(&self, start: f64) -> f64 {
        let rate = 0.5 * (self.alpha + self.beta);
        let mut w = self.variance().sqrt();
        let mut x = start;
        while self.pdf_unchecked(x) / rate > TAIL_MASS {
            x -= w;
            w *= 2.0;
        }
        x
    }

    fn right_cutoff(&self, start: f64) -> f64 {
        let rate = 0.5 * (self.alpha - self.beta);
        let mut w = self.variance().sqrt();
        let mut x = start;
        while self.pdf_unchecked(x) / rate > TAIL_MASS {
            x += w;
            w *= 2.0;
        }
        x
    }

    /// Distribution function by adaptive quadrature of the density from the
    /// nearer truncated tail.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        if x.is_nan() {
            return domain("NIG cdf argument is NaN");
        }
        if x == f64::INFINITY {
            return Ok(1.0);
        }
        if x == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let m = self.mean();
        let sd = self.variance().sqrt();
        let v = if x <= m {
            let lo = self.left_cutoff(x.min(m - 8.0 * sd));
            self.integrate_pdf(lo, x, QUAD_ABS_TOL)?
        } else {
            let hi = self.right_cutoff(x.max(m + 8.0 * sd));
            1.0 - self.integrate_pdf(x, hi, QUAD_ABS_TOL)?
        };
        Ok(v.clamp(0.0, 1.0))
    }

    /// Distribution function at ascending points, integrating the density
    /// piecewise between neighbours. Much cheaper than repeated `cdf` calls
    /// for large sorted samples.
    pub fn cdf_sorted(&self, xs: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        if xs.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Contract("cdf_sorted needs ascending input".into()));
        }
        let mut out = Vec::with_capacity(xs.len());
        let Some(&first) = xs.first() else {
            return Ok(out);
        };
        let mut acc = self.cdf(first)?;
        out.push(acc);
        for w in xs.windows(2) {
            let (a, b) = (w[0], w[1]);
            let piece = if (b - a) < 0.25 * self.core_width() {
                let (v, e) = gauss_kronrod_15(&|x| self.pdf_unchecked(x), a, b);
                if e <= 1e-16 {
                    v
                } else {
                    self.integrate_pdf(a, b, 1e-16)?
                }
            } else {
                self.integrate_pdf(a, b, 1e-16)?
            };
            acc += piece;
            out.push(acc.clamp(0.0, 1.0));
        }
        Ok(out)
    }

    /// Quantile by Brent's method on the distribution function, bracketed
    /// at `mean ± 12 sd` and widened geometrically when needed.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        self.validate()?;
        if !(level > 0.0 && level < 1.0) {
            return domain(format!("quantile level must lie in (0, 1), got {level}"));
        }
        let m = self.mean();
        let sd = self.variance().sqrt();
        // anchor the integral at the mean; F(x) = F(m) + int_m^x pdf
        let f_mean = self.cdf(m)?;
        let eval = |x: f64| -> Result<f64> {
            let v = if x >= m {
                f_mean + self.integrate_pdf(m, x, QUAD_ABS_TOL)?
            } else {
                f_mean - self.integrate_pdf(x, m, QUAD_ABS_TOL)?
            };
            Ok(v - level)
        };
        let mut lo = m - 12.0 * sd;
        let mut hi = m + 12.0 * sd;
        let mut width = 12.0 * sd;
        let mut tries = 0;
        while eval(lo)? > 0.0 {
            width *= 2.0;
            lo = m - width;
            tries += 1;
            if tries > 60 {
                return Err(Error::Numeric(format!(
                    "could not bracket the {level} quantile from below (mean {m}, sd {sd}, last lo {lo})"
                )));
            }
        }
        width = 12.0 * sd;
        tries = 0;
        while eval(hi)? < 0.0 {
            width *= 2.0;
            hi = m + width;
            tries += 1;
            if tries > 60 {
                return Err(Error::Numeric(format!(
                    "could not bracket the {level} quantile from above (mean {m}, sd {sd}, last hi {hi})"
                )));
            }
        }
        brent_root(eval, lo, hi, 1e-14 * sd, 1e-13, 300)
    }

    /// One draw via the inverse-Gaussian mixture.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z = self.mixture().sample(rng);
        let y: f64 = rng.sample(StandardNormal);
        self.mu + self.beta * z + z.sqrt() * y
    }
}

/// Density of `NIG(p)` at `x`.
pub fn nig_pdf(p: &NigParams, x: f64) -> Result<f64> {
    p.pdf(x)
}

pub fn nig_log_pdf(p: &NigParams, x: f64) -> Result<f64> {
    p.log_pdf(x)
}

pub fn nig_cdf(p: &NigParams, x: f64) -> Result<f64> {
    p.cdf(x)
}

pub fn nig_quantile(p: &NigParams, level: f64) -> Result<f64> {
    p.quantile(level)
}

pub fn nig_moments(p: &NigParams) -> Result<Moments> {
    p.validate()?;
    Ok(p.moments())
}

/// Generator for substream `stream` of `seed`. Every Monte-Carlo routine
/// in the crate derives its randomness this way.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` draws from `NIG(p)`, deterministic in `seed`.
///
/// Draws are produced in fixed-size chunks, each from its own substream, so
/// the output does not depend on the number of threads.
pub fn nig_sample(p: &NigParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    p.validate()?;
    if n == 0 {
        return domain("sample size must be at least 1");
    }
    let chunks = n.div_ceil(SAMPLE_CHUNK);
    let parts = par::map_range(chunks, |c| {
        let mut rng = stream_rng(seed, c as u64);
        let len = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
        (0..len).map(|_| p.sample_one(&mut rng)).collect::<Vec<_>>()
    });
    Ok(parts.concat())
}

/// `p1 ⊕ p2`: the law of the sum of independent draws when `(alpha, beta)` agree.
pub fn convolve_nig(p1: &NigParams, p2: &NigParams) -> Result<NigParams> {
    p1.validate()?;
    p2.validate()?;
    let close = |a: f64, b: f64| {
        let scale = a.abs().max(b.abs());
        (a - b).abs() <= CLOSURE_TOLERANCE * scale
    };
    if !close(p1.alpha, p2.alpha) || !close(p1.beta, p2.beta) {
        return Err(Error::Contract(format!(
            "convolution closure needs matching (alpha, beta): ({}, {}) vs ({}, {})",
            p1.alpha, p1.beta, p2.alpha, p2.beta
        )));
    }
    Ok(NigParams {
        mu: p1.mu + p2.mu,
        delta: p1.delta + p2.delta,
        alpha: p1.alpha,
        beta: p1.beta,
    })
}

/// Density of the sum of `n` independent `NIG(base)` variables.
pub fn nig_sum_density(base: &NigParams, n: usize, y: f64) -> Result<f64> {
    if n == 0 {
        return domain("number of summands must be at least 1");
    }
    let k = n as f64;
    let sum = NigParams {
        mu: k * base.mu,
        delta: k * base.delta,
        alpha: base.alpha,
        beta: base.beta,
    };
    sum.pdf(y)
}

/// Sample mean, variance (1/n), skewness and excess kurtosis.
pub(crate) fn sample_moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    Moments {
        mean,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    }
}

/// Method-of-moments fit.
///
/// With `zeta = delta * gamma` and `rho = beta / alpha`, the NIG satisfies
/// `skew = 3 rho / sqrt(zeta)` and `exkurt = 3 (1 + 4 rho^2) / zeta`, which
/// inverts in closed form when `exkurt > 4 skew^2 / 3`. Outside that region,
/// or when the implied `|rho|` reaches 1, the symmetric fit is returned.
pub fn nig_fit_static(xs: &[f64]) -> Result<NigParams> {
    if xs.len() < 50 {
        return Err(Error::Data(format!(
            "static NIG fit needs at least 50 observations, got {}",
            xs.len()
        )));
    }
    if let Some(i) = xs.iter().position(|x| !x.is_finite()) {
        return Err(Error::Data(format!("non-finite observation at index {i}")));
    }
    let m = sample_moments(xs);
    if !(m.variance > 0.0) || m.variance <= 1e-300 {
        return Err(Error::Data("degenerate input: zero sample variance".into()));
    }
    let s = m.skewness;
    let k = m.excess_kurtosis;
    let asym = {
        let denom = k - 4.0 * s * s / 3.0;
        if denom > 0.0 {
            let zeta = 3.0 / denom;
            let rho2 = s * s * zeta / 9.0;
            (rho2 < 0.99).then(|| (zeta, s * zeta.sqrt() / 3.0))
        } else {
            None
        }
    };
    let (zeta, rho) = asym.unwrap_or_else(|| {
        // near-Gaussian cap when the sample is platykurtic
        (3.0 / k.max(0.03), 0.0)
    });
    let one_m_rho2 = 1.0 - rho * rho;
    let alpha = (zeta / m.variance).sqrt() / one_m_rho2;
    let beta = rho * alpha;
    let gamma = alpha * one_m_rho2.sqrt();
    let delta = zeta / gamma;
    let mu = m.mean - delta * beta / gamma;
    NigParams::new(mu, delta, alpha, beta)
}

/// Static maximum-likelihood fit, seeded by [`nig_fit_static`].
pub fn nig_fit_static_mle(xs: &[f64]) -> Result<NigParams> {
    let seed = nig_fit_static(xs)?;
    let to_params = |t: &[f64]| NigParams {
        mu: t[0],
        delta: t[1].exp(),
        alpha: t[2].exp(),
        beta: t[2].exp() * t[3].tanh().clamp(-1.0 + 1e-15, 1.0 - 1e-15),
    };
    let n = xs.len() as f64;
    let objective = |t: &[f64]| {
        let p = to_params(t);
        if p.validate().is_err() {
            return f64::INFINITY;
        }
        -xs.iter().map(|&x| p.log_pdf_unchecked(x)).sum::<f64>() / n
    };
    let x0 = [
        seed.mu,
        seed.delta.ln(),
        seed.alpha.ln(),
        (seed.beta / seed.alpha).atanh(),
    ];
    let sd = seed.variance().sqrt();
    let opts = SimplexOptions {
        max_iter: 4000,
        f_tol: 1e-12,
        x_tol: 1e-8,
    };
    let mut best = nelder_mead(objective, &x0, &[0.1 * sd, 0.2, 0.2, 0.2], &opts);
    for _ in 0..2 {
        let again = nelder_mead(objective, &best.x, &[0.05 * sd, 0.1, 0.1, 0.1], &opts);
        if again.f <= best.f {
            best = again;
        }
    }
    let p = to_params(&best.x);
    p.validate()?;
    Ok(p)
}
