//! Modified Bessel functions of the second kind.
//!
//! Integer orders are built from `K0` and `K1` by upward recurrence; `K0` and
//! `K1` themselves come from the ascending series for `x <= 2`, Steed's
//! continued fraction (Temme's CF2 form) up to `x = 50`, and the Hankel
//! asymptotic expansion beyond. Half-integer
//! orders use the terminating closed form. The continued fraction yields
//! `e^x K(x)` directly, so the scaled and log variants stay finite far past
//! the point where `e^-x` underflows.

use crate::error::{domain, Error, Result};
use std::f64::consts::{FRAC_PI_2, PI};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_CUTOFF: f64 = 2.0;
const ASYMPTOTIC_CUTOFF: f64 = 50.0;
/// Beyond this argument the unscaled value underflows.
const UNSCALED_MAX_ARG: f64 = 700.0;

/// One evaluation of `K_order(argument)` in every representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselEval {
    pub order: f64,
    pub argument: f64,
    /// `K(x)`; zero once `e^-x` underflows.
    pub value: f64,
    /// `e^x K(x)`.
    pub scaled_value: f64,
    /// `ln K(x)`.
    pub log_value: f64,
}

impl BesselEval {
    pub fn new(order: f64, x: f64) -> Result<Self> {
        let scaled_value = bessel_k_scaled(order, x)?;
        let log_value = scaled_value.ln() - x;
        Ok(Self {
            order,
            argument: x,
            value: log_value.exp(),
            scaled_value,
            log_value,
        })
    }
}

enum Order {
    Integer(u32),
    HalfInteger(u32),
}

fn classify(order: f64) -> Result<Order> {
    if !order.is_finite() {
        return domain(format!("Bessel order must be finite, got {order}"));
    }
    let nu = order.abs();
    if nu > 1.0e4 {
        return domain(format!("Bessel order {order} is too large"));
    }
    if nu.fract() == 0.0 {
        Ok(Order::Integer(nu as u32))
    } else if (nu - 0.5).fract() == 0.0 {
        Ok(Order::HalfInteger((nu - 0.5) as u32))
    } else {
        domain(format!(
            "Bessel order {order} unsupported: only integer and half-integer orders are implemented"
        ))
    }
}

fn check_arg(x: f64) -> Result<()> {
    if x > 0.0 && !x.is_nan() {
        Ok(())
    } else {
        domain(format!("Bessel argument must be positive, got {x}"))
    }
}

/// `K_order(x)`. Negative orders are mapped through `K_{-v} = K_v`.
pub fn bessel_k(order: f64, x: f64) -> Result<f64> {
    check_arg(x)?;
    if x > UNSCALED_MAX_ARG {
        return Err(Error::Numeric(format!(
            "K_{order}({x}) underflows; use bessel_k_scaled or log_bessel_k"
        )));
    }
    let v = bessel_k_scaled(order, x)? * (-x).exp();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!(
            "K_{order}({x}) overflows; use log_bessel_k"
        )))
    }
}

/// `e^x K_order(x)`.
pub fn bessel_k_scaled(order: f64, x: f64) -> Result<f64> {
    check_arg(x)?;
    let v = match classify(order)? {
        Order::Integer(n) => integer_order_scaled(n, x),
        Order::HalfInteger(n) => half_integer_scaled(n, x),
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!(
            "scaled K_{order}({x}) overflows"
        )))
    }
}

/// `ln K_order(x)` without forming `K` itself.
pub fn log_bessel_k(order: f64, x: f64) -> Result<f64> {
    check_arg(x)?;
    let scaled = match classify(order)? {
        Order::Integer(n) => integer_order_scaled(n, x),
        Order::HalfInteger(n) => half_integer_scaled(n, x),
    };
    if scaled.is_finite() && scaled > 0.0 {
        Ok(scaled.ln() - x)
    } else {
        Err(Error::Numeric(format!("ln K_{order}({x}) not representable")))
    }
}

/// `(K0(x) + K2(x)) / (2 K1(x))`, which equals `-d/dx ln K1(x)`.
pub fn bessel_ratio_score(x: f64) -> Result<f64> {
    check_arg(x)?;
    let (k0, k1) = k0_k1_scaled(x);
    Ok(ratio_from(k0, k1, x))
}

#[inline]
pub(crate) fn ratio_from(k0s: f64, k1s: f64, x: f64) -> f64 {
    // K2 = K0 + (2/x) K1
    k0s / k1s + 1.0 / x
}

fn integer_order_scaled(n: u32, x: f64) -> f64 {
    let (k0, k1) = k0_k1_scaled(x);
    match n {
        0 => k0,
        1 => k1,
        _ => {
            let (mut prev, mut cur) = (k0, k1);
            for k in 1..n {
                let next = prev + 2.0 * f64::from(k) / x * cur;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

fn half_integer_scaled(n: u32, x: f64) -> f64 {
    // K_{n+1/2}(x) = sqrt(pi/2x) e^-x sum_k (n+k)! / (k! (n-k)!) (2x)^-k
    let lead = (FRAC_PI_2 / x).sqrt();
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..n {
        let k = f64::from(k);
        let nn = f64::from(n);
        term *= (nn + k + 1.0) * (nn - k) / ((k + 1.0) * 2.0 * x);
        sum += term;
    }
    lead * sum
}

/// `(e^x K0(x), e^x K1(x))` for `x > 0`. No argument checking.
#[inline]
pub(crate) fn k0_k1_scaled(x: f64) -> (f64, f64) {
    let (k0, k1, _) = k0_k1_excess(x);
    (k0, k1)
}

/// Scaled `K0`, `K1` and `R(x) - 1`, where `R = K0/K1 + 1/x` is the ratio
/// returned by [`bessel_ratio_score`]. `R - 1` decays like `1/(2x)`; for
/// large `x` it comes from the difference of the two asymptotic series, so
/// it keeps full relative precision. No argument checking.
#[inline]
pub(crate) fn k0_k1_excess(x: f64) -> (f64, f64, f64) {
    if !x.is_finite() {
        // NaN propagates; +inf is the limit where everything vanishes
        let v = if x.is_nan() { f64::NAN } else { 0.0 };
        return (v, v, v);
    }
    if x > ASYMPTOTIC_CUTOFF {
        let (k0, k1, diff) = k0_k1_asymptotic(x);
        return (k0, k1, 1.0 / x - diff / k1);
    }
    let (k0, k1) = if x <= SERIES_CUTOFF {
        let (k0, k1) = k0_k1_series(x);
        let ex = x.exp();
        (k0 * ex, k1 * ex)
    } else {
        k0_k1_continued_fraction(x)
    };
    (k0, k1, (k0 - k1) / k1 + 1.0 / x)
}

/// Large-argument expansion: scaled `K0`, `K1` and `K1 - K0`.
fn k0_k1_asymptotic(x: f64) -> (f64, f64, f64) {
    let lead = (FRAC_PI_2 / x).sqrt();
    let (mut a0, mut a1) = (1.0f64, 1.0f64);
    let (mut s0, mut s1, mut sd) = (1.0, 1.0, 0.0);
    for k in 1..64 {
        let kf = f64::from(k);
        let odd = (2.0 * kf - 1.0).powi(2);
        let step = 1.0 / (8.0 * kf * x);
        // a_k = a_{k-1} (4 nu^2 - (2k - 1)^2) / (8 k x)
        a0 *= -odd * step;
        a1 *= (4.0 - odd) * step;
        s0 += a0;
        s1 += a1;
        sd += a1 - a0;
        if a0.abs().max(a1.abs()) < 1e-17 {
            break;
        }
    }
    (lead * s0, lead * s1, lead * sd)
}

/// Ascending series, unscaled.
fn k0_k1_series(x: f64) -> (f64, f64) {
    let y = 0.25 * x * x;
    let log_half = (0.5 * x).ln();

    // term_k = y^k / (k!)^2 ; I0 = sum term_k, I1 = (x/2) sum term_k/(k+1)
    let mut term = 1.0;
    let mut i0 = 1.0;
    let mut i1_sum = 1.0;
    // harmonic H_k
    let mut harmonic = 0.0;
    let mut k0_tail = 0.0;
    // psi(k+1) + psi(k+2) = 2(H_k - gamma) + 1/(k+1)
    let mut k1_tail = 1.0 - 2.0 * EULER_GAMMA;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= y / (k * k);
        harmonic += 1.0 / k;
        i0 += term;
        let t1 = term / (k + 1.0);
        i1_sum += t1;
        k0_tail += harmonic * term;
        k1_tail += (2.0 * (harmonic - EULER_GAMMA) + 1.0 / (k + 1.0)) * t1;
        if term < 1e-18 * i0 {
            break;
        }
    }
    let i1 = 0.5 * x * i1_sum;
    let k0 = -(log_half + EULER_GAMMA) * i0 + k0_tail;
    let k1 = 1.0 / x + log_half * i1 - 0.25 * x * k1_tail;
    (k0, k1)
}

/// Steed's continued fraction for order zero, returning scaled `K0`, `K1`.
fn k0_k1_continued_fraction(x: f64) -> (f64, f64) {
    const EPS: f64 = 1e-17;
    const MAX_ITER: usize = 100_000;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    h *= a1;
    let k0 = (PI / (2.0 * x)).sqrt() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn half_order_closed_form() {
        let v = bessel_k(0.5, 1.0).unwrap();
        assert!(rel(v, (PI / 2.0).sqrt() * (-1.0f64).exp()) < 1e-15);
        assert_eq!(bessel_k(-0.5, 1.0).unwrap(), v);
        let s = bessel_k_scaled(0.5, 10.0).unwrap();
        assert!(rel(s, (PI / 20.0).sqrt()) < 1e-15);
    }

    #[test]
    fn k1_at_one() {
        // reference 0.601907230197234574737540001535
        assert!(rel(bessel_k(1.0, 1.0).unwrap(), 0.601_907_230_197_234_6) < 1e-14);
    }

    #[test]
    fn branches_agree_at_crossover() {
        for &x in &[1.999_999_9, 2.0, 2.000_000_1] {
            let (a0, a1) = k0_k1_series(x);
            let ex = x.exp();
            let (b0, b1) = k0_k1_continued_fraction(x);
            assert!(rel(a0 * ex, b0) < 1e-13, "K0 at {x}");
            assert!(rel(a1 * ex, b1) < 1e-13, "K1 at {x}");
        }
    }

    #[test]
    fn asymptotic_branch_agrees() {
        for &x in &[50.0, 50.000_001, 60.0] {
            let (a0, a1) = k0_k1_continued_fraction(x);
            let (b0, b1, d) = k0_k1_asymptotic(x);
            assert!(rel(a0, b0) < 1e-14, "K0 at {x}");
            assert!(rel(a1, b1) < 1e-14, "K1 at {x}");
            assert!(rel(a1 - a0, d) < 1e-11, "K1 - K0 at {x}");
        }
    }

    #[test]
    fn ratio_excess_keeps_precision() {
        // R - 1 = 1/(2x) + 3/(8x^2) + O(x^-3)
        for &x in &[1e4, 1e8, 1e20] {
            let (_, _, r1) = k0_k1_excess(x);
            let approx = 0.5 / x + 0.375 / (x * x);
            assert!(rel(r1, approx) < 1e-3 / x.sqrt(), "x = {x}: {r1} vs {approx}");
        }
        let (k0, k1, r1) = k0_k1_excess(f64::INFINITY);
        assert_eq!((k0, k1, r1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(bessel_k(1.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_k(1.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(log_bessel_k(0.0, f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(bessel_ratio_score(0.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_k(0.3, 1.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_k(1.0, 800.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn large_argument_log_finite() {
        let l = log_bessel_k(1.0, 1e6).unwrap();
        assert!(l.is_finite());
        let approx = 0.5 * (PI / 2e6).ln() - 1e6 + (1.0 + 3.0 / 8e6f64).ln();
        assert!((l - approx).abs() < 1e-9);
    }

    #[test]
    fn ratio_exceeds_one() {
        for i in 0..200 {
            let x = 10f64.powf(-3.0 + 6.0 * f64::from(i) / 199.0);
            assert!(bessel_ratio_score(x).unwrap() > 1.0);
        }
    }

    #[test]
    fn higher_integer_orders_by_recurrence() {
        let x = 3.0;
        let k0 = bessel_k(0.0, x).unwrap();
        let k1 = bessel_k(1.0, x).unwrap();
        let k2 = bessel_k(2.0, x).unwrap();
        let k3 = bessel_k(3.0, x).unwrap();
        assert!(rel(k2, k0 + 2.0 / x * k1) < 1e-15);
        assert!(rel(k3, k1 + 4.0 / x * k2) < 1e-15);
    }
}
