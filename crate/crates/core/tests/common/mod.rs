//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the library's numeric layer: each oracle is built
//! from its own definition so agreement is meaningful.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `K_nu(x)` from `int_0^inf exp(-x cosh t) cosh(nu t) dt` by the trapezoid
/// rule. The integrand is analytic in a strip around the real axis and
/// decays double-exponentially, so the rule converges geometrically in `1/h`.
pub fn bessel_k_quadrature(nu: f64, x: f64) -> f64 {
    let h = 0.01;
    let term = |t: f64| (-x * t.cosh() + (nu * t).cosh().ln()).exp();
    let mut sum = 0.5 * term(0.0);
    let mut k = 1.0;
    loop {
        let t = k * h;
        let v = term(t);
        sum += v;
        if x * t.cosh() - nu * t > 800.0 || (v < 1e-300 && t > 1.0) {
            break;
        }
        k += 1.0;
    }
    sum * h
}

/// `e^x K_nu(x)` by the same rule with the exponent shifted, so large
/// arguments do not underflow.
pub fn bessel_k_scaled_quadrature(nu: f64, x: f64) -> f64 {
    let h = 0.005;
    let term = |t: f64| (-x * (t.cosh() - 1.0) + (nu * t).cosh().ln()).exp();
    let mut sum = 0.5 * term(0.0);
    let mut k = 1.0;
    loop {
        let t = k * h;
        let v = term(t);
        sum += v;
        if v < 1e-20 * sum && t > 0.5 {
            break;
        }
        k += 1.0;
    }
    sum * h
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Simpson's rule over many panels, for integrals over long ranges where a
/// single adaptive call could miss a narrow peak.
pub fn simpson_panels<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize, tol: f64) -> f64 {
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|i| simpson(f, a + i as f64 * w, a + (i + 1) as f64 * w, tol / panels as f64))
        .sum()
}

/// NIG density written out directly from its closed form, with the Bessel
/// factor supplied by the quadrature oracle.
pub fn nig_pdf_oracle(mu: f64, delta: f64, alpha: f64, beta: f64, x: f64) -> f64 {
    let gamma = (alpha * alpha - beta * beta).sqrt();
    let s = (delta * delta + (x - mu) * (x - mu)).sqrt();
    let z = alpha * s;
    let k1_scaled = bessel_k_scaled_quadrature(1.0, z);
    alpha * delta / (std::f64::consts::PI * s)
        * (delta * gamma + beta * (x - mu) - z).exp()
        * k1_scaled
}

/// Kolmogorov–Smirnov statistic of `sample` against a model CDF evaluated
/// at the sorted sample points.
pub fn ks_statistic(sorted_cdf: &[f64]) -> f64 {
    let n = sorted_cdf.len() as f64;
    sorted_cdf
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let lo = f - i as f64 / n;
            let hi = (i as f64 + 1.0) / n - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov p-value with the usual small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Upper tail of the chi-square distribution by series in the regularized
/// incomplete gamma function (independent of the library's statrs usage).
pub fn chi2_sf(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let a = 0.5 * k;
    let z = 0.5 * x;
    let ln_gamma_a = ln_gamma(a);
    if z < a + 1.0 {
        let mut sum = 1.0 / a;
        let mut term = sum;
        let mut n = 1.0;
        while term.abs() > 1e-17 * sum.abs() {
            term *= z / (a + n);
            sum += term;
            n += 1.0;
        }
        1.0 - (a * z.ln() - z - ln_gamma_a).exp() * sum
    } else {
        // Lentz continued fraction for the upper tail
        let tiny = 1e-300;
        let mut b = z + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (a * z.ln() - z - ln_gamma_a).exp() * h
    }
}

/// Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Kupiec statistic from the two binomial log-likelihoods, written out term
/// by term with the `0 ln 0 = 0` convention.
pub fn lruc_brute_force(t: usize, n: usize, level: f64) -> f64 {
    let xlny = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * y.ln() };
    let (t, n) = (t as f64, n as f64);
    let p0 = 1.0 - level;
    let phat = n / t;
    let l0 = xlny(t - n, 1.0 - p0) + xlny(n, p0);
    let l1 = xlny(t - n, 1.0 - phat) + xlny(n, phat);
    -2.0 * (l0 - l1)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Empirical quantile by the `ceil(n p)`-th order statistic.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = ((n as f64 * p).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Monte-Carlo standard error of an empirical `p`-quantile, using a kernel
/// density estimate at the quantile from the sample's spacing.
pub fn quantile_standard_error(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let m = ((n as f64).sqrt() as usize).max(10);
    let k = ((n as f64 * p) as usize).clamp(m, n - 1 - m);
    let density = 2.0 * m as f64 / n as f64 / (sorted[k + m] - sorted[k - m]);
    (p * (1.0 - p) / n as f64).sqrt() / density
}
