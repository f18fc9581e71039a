mod common;

use common::*;
use nigdcs::error::Error;
use nigdcs::nig::*;

fn p(mu: f64, delta: f64, alpha: f64, beta: f64) -> NigParams {
    NigParams::new(mu, delta, alpha, beta).unwrap()
}

#[test]
fn density_at_origin_matches_bessel_oracle() {
    let oracle = std::f64::consts::E * bessel_k_quadrature(1.0, 1.0) / std::f64::consts::PI;
    let v = nig_pdf(&p(0.0, 1.0, 1.0, 0.0), 0.0).unwrap();
    assert!((v - oracle).abs() < 1e-13);
    assert!((v - 0.520_803_83).abs() < 1e-8);
}

#[test]
fn density_matches_closed_form_oracle() {
    for q in [p(0.0, 1.0, 2.0, 1.0), p(0.3, 0.2, 15.0, -6.0), p(-1.0, 4.0, 0.6, 0.5)] {
        for x in [-3.0, -0.7, 0.0, 0.4, 2.5, 9.0] {
            let a = nig_pdf(&q, x).unwrap();
            let b = nig_pdf_oracle(q.mu, q.delta, q.alpha, q.beta, x);
            assert!((a - b).abs() <= 1e-11 * b.max(1e-300), "{q:?} x {x}: {a} vs {b}");
        }
    }
}

#[test]
fn symmetric_density() {
    let q = p(0.0, 1.0, 1.0, 0.0);
    for x in [0.5, 1.0, 2.0] {
        assert_eq!(nig_pdf(&q, x).unwrap(), nig_pdf(&q, -x).unwrap());
    }
}

#[test]
fn density_integrates_to_one() {
    let q = p(0.0, 1.0, 2.0, 1.0);
    let total = simpson_panels(&|x| nig_pdf(&q, x).unwrap(), -40.0, 40.0, 400, 1e-12);
    assert!((total - 1.0).abs() < 1e-8, "{total}");
}

#[test]
fn log_density_finite_far_out() {
    for q in [p(0.0, 1.0, 2.0, 1.0), p(0.0, 0.01, 300.0, 100.0)] {
        for k in [-1e6, 1e6] {
            assert!(nig_log_pdf(&q, q.mu + k * q.delta).unwrap().is_finite());
        }
    }
}

#[test]
fn invalid_inputs() {
    assert!(matches!(NigParams::new(0.0, 0.0, 1.0, 0.0), Err(Error::Domain(_))));
    assert!(matches!(NigParams::new(0.0, 1.0, 1.0, 1.0), Err(Error::Domain(_))));
    assert!(matches!(NigParams::new(0.0, 1.0, -1.0, 0.0), Err(Error::Domain(_))));
    let q = p(0.0, 1.0, 1.0, 0.0);
    assert!(matches!(nig_pdf(&q, f64::NAN), Err(Error::Domain(_))));
    assert!(matches!(nig_pdf(&q, f64::INFINITY), Err(Error::Domain(_))));
    let bad = NigParams { mu: 0.0, delta: 1.0, alpha: 1.0, beta: 2.0 };
    assert!(nig_pdf(&bad, 0.0).is_err());
    assert!(nig_cdf(&bad, 0.0).is_err());
    assert!(nig_moments(&bad).is_err());
}

#[test]
fn cdf_symmetry_and_limits() {
    assert!((nig_cdf(&p(0.0, 1.0, 1.0, 0.0), 0.0).unwrap() - 0.5).abs() < 1e-12);
    assert!((nig_cdf(&p(3.0, 1.0, 1.0, 0.0), 3.0).unwrap() - 0.5).abs() < 1e-12);
    let q = p(0.0, 1.0, 2.0, 1.0);
    assert_eq!(nig_cdf(&q, f64::NEG_INFINITY).unwrap(), 0.0);
    assert_eq!(nig_cdf(&q, f64::INFINITY).unwrap(), 1.0);
    let mut prev = 0.0;
    for i in 0..200 {
        let x = -10.0 + 0.1 * i as f64;
        let f = nig_cdf(&q, x).unwrap();
        assert!(f >= prev);
        prev = f;
    }
}

#[test]
fn cdf_matches_left_tail_quadrature_oracle() {
    let (mu, delta, alpha, beta) = (0.0, 1.0, 2.0, 1.0);
    let oracle = simpson_panels(&|x| nig_pdf_oracle(mu, delta, alpha, beta, x), -60.0, 1.0, 610, 1e-13);
    let v = nig_cdf(&p(mu, delta, alpha, beta), 1.0).unwrap();
    assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
}

#[test]
fn quantile_roundtrip_and_monotone() {
    let q = p(0.0, 1.0, 1.0, 0.0);
    assert!(nig_quantile(&q, 0.5).unwrap().abs() < 1e-10);
    let q = p(0.2, 0.7, 3.0, -1.2);
    let mut prev = f64::NEG_INFINITY;
    for level in [0.01, 0.05, 0.1, 0.5, 0.9, 0.95, 0.99] {
        let x = nig_quantile(&q, level).unwrap();
        assert!((nig_cdf(&q, x).unwrap() - level).abs() < 1e-8);
        assert!(x > prev);
        prev = x;
    }
    for bad in [0.0, 1.0, -0.1, f64::NAN] {
        assert!(matches!(nig_quantile(&q, bad), Err(Error::Domain(_))));
    }
}

#[test]
fn upper_quantile_matches_monte_carlo() {
    let q = p(0.0, 1.0, 2.0, 1.0);
    let mut xs = nig_sample(&q, 10_000_000, 7).unwrap();
    xs.sort_by(f64::total_cmp);
    let mc = empirical_quantile(&xs, 0.99);
    let se = quantile_standard_error(&xs, 0.99);
    let v = nig_quantile(&q, 0.99).unwrap();
    assert!((v - mc).abs() < 3.0 * se, "{v} vs {mc} (se {se})");
}

#[test]
fn sampler_moments_and_determinism() {
    let q = p(0.0, 1.0, 1.0, 0.0);
    let xs = nig_sample(&q, 1_000_000, 3).unwrap();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m = nig_moments(&q).unwrap();
    assert!(mean.abs() < 4.0 * (m.variance / n).sqrt());
    assert_eq!(nig_sample(&q, 1000, 9).unwrap(), nig_sample(&q, 1000, 9).unwrap());
    assert_ne!(nig_sample(&q, 1000, 9).unwrap(), nig_sample(&q, 1000, 10).unwrap());
    assert!(matches!(nig_sample(&q, 0, 1), Err(Error::Domain(_))));
}

#[test]
fn sampler_passes_ks() {
    let q = p(0.5, 0.8, 2.5, 1.5);
    let mut xs = nig_sample(&q, 100_000, 21).unwrap();
    xs.sort_by(f64::total_cmp);
    let f = q.cdf_sorted(&xs).unwrap();
    let pv = ks_pvalue(ks_statistic(&f), xs.len());
    assert!(pv > 0.01, "KS p-value {pv}");
}

#[test]
fn ig_mixture_moments() {
    let m = IgMixture::new(1.5, 2.0).unwrap();
    let mut rng = rng(5);
    let n = 400_000;
    let xs: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    // IG(mean m, shape l) has variance m^3 / l
    let var = m.mean().powi(3) / m.shape();
    assert!((mean - m.mean()).abs() < 4.0 * (var / n as f64).sqrt());
    assert!(IgMixture::new(0.0, 1.0).is_err());
}

#[test]
fn convolution_readoff_and_errors() {
    let c = convolve_nig(&p(0.0, 1.0, 2.0, 0.5), &p(0.1, 0.5, 2.0, 0.5)).unwrap();
    assert_eq!(c, p(0.1, 1.5, 2.0, 0.5));
    let base = p(0.3, 0.4, 5.0, -2.0);
    let mut acc = base;
    for _ in 1..6 {
        acc = convolve_nig(&acc, &base).unwrap();
    }
    assert!((acc.mu - 6.0 * 0.3).abs() < 1e-14 && (acc.delta - 6.0 * 0.4).abs() < 1e-14);
    assert_eq!((acc.alpha, acc.beta), (5.0, -2.0));
    assert!(matches!(
        convolve_nig(&p(0.0, 1.0, 2.0, 0.5), &p(0.0, 1.0, 2.0 * (1.0 + 1e-6), 0.5)),
        Err(Error::Contract(_))
    ));
    assert!(convolve_nig(&p(0.0, 1.0, 2.0, 0.5), &p(0.0, 1.0, 2.0 * (1.0 + 1e-12), 0.5)).is_ok());
}

#[test]
fn grid_convolution_matches_closure() {
    let a = p(0.0, 1.0, 2.0, 0.5);
    let b = p(0.1, 0.5, 2.0, 0.5);
    let c = convolve_nig(&a, &b).unwrap();
    let h = 1e-3;
    let grid: Vec<f64> = (0..=60_000).map(|i| -30.0 + h * i as f64).collect();
    let fa: Vec<f64> = grid.iter().map(|&x| nig_pdf(&a, x).unwrap()).collect();
    let mut worst = 0.0f64;
    for k in 0..=40 {
        let y = -5.0 + 0.25 * k as f64;
        let vals: Vec<f64> = grid.iter().zip(&fa).map(|(&x, &f)| f * nig_pdf(&b, y - x).unwrap()).collect();
        let trap = h * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[vals.len() - 1]));
        worst = worst.max((trap - nig_pdf(&c, y).unwrap()).abs());
    }
    assert!(worst <= 1e-6, "sup error {worst:e}");
}

#[test]
fn sum_density_identities() {
    let base = p(0.0, 1.0, 2.0, 0.5);
    for y in [-1.0, 0.0, 2.0] {
        assert_eq!(nig_sum_density(&base, 1, y).unwrap(), nig_pdf(&base, y).unwrap());
    }
    assert_eq!(
        nig_sum_density(&base, 3, 0.0).unwrap(),
        nig_pdf(&p(0.0, 3.0, 2.0, 0.5), 0.0).unwrap()
    );
    assert!(matches!(nig_sum_density(&base, 0, 0.0), Err(Error::Domain(_))));
}

#[test]
fn sum_density_fits_summed_draws() {
    let base = p(0.1, 0.6, 3.0, 1.0);
    let n = 100_000;
    let draws = nig_sample(&base, 4 * n, 33).unwrap();
    let sums: Vec<f64> = draws.chunks(4).map(|c| c.iter().sum()).collect();
    let law = p(0.4, 2.4, 3.0, 1.0);
    let bins = 50;
    let edges: Vec<f64> = (1..bins).map(|k| nig_quantile(&law, k as f64 / bins as f64).unwrap()).collect();
    let mut counts = vec![0usize; bins];
    for s in &sums {
        counts[edges.partition_point(|e| e < s)] += 1;
    }
    let expected = n as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let pv = chi2_sf(chi2, (bins - 1) as f64);
    assert!(pv > 0.01, "chi-square p {pv}");
    // the sum law is what nig_sum_density evaluates
    assert!((nig_sum_density(&base, 4, 0.3).unwrap() - nig_pdf(&law, 0.3).unwrap()).abs() < 1e-14);
}

fn quadrature_moments(q: &NigParams) -> [f64; 4] {
    let f = |x: f64| nig_pdf_oracle(q.mu, q.delta, q.alpha, q.beta, x);
    let (lo, hi) = (q.mu - 60.0, q.mu + 60.0);
    let raw = |k: i32| simpson_panels(&|x| x.powi(k) * f(x), lo, hi, 600, 1e-14);
    let m1 = raw(1);
    let c = |k: i32| simpson_panels(&|x| (x - m1).powi(k) * f(x), lo, hi, 600, 1e-14);
    let var = c(2);
    [m1, var, c(3) / var.powf(1.5), c(4) / (var * var) - 3.0]
}

#[test]
fn moments_match_quadrature() {
    let m = nig_moments(&p(0.0, 1.0, 1.0, 0.0)).unwrap();
    assert_eq!((m.mean, m.variance, m.skewness), (0.0, 1.0, 0.0));

    let q = p(0.0, 2.0, 3.0, 1.0);
    let m = nig_moments(&q).unwrap();
    let o = quadrature_moments(&q);
    for (a, b) in [m.mean, m.variance, m.skewness, m.excess_kurtosis].iter().zip(o) {
        assert!(((a - b) / b).abs() <= 1e-6, "{a} vs {b}");
    }
    let shifted = nig_moments(&p(1.5, 2.0, 3.0, 1.0)).unwrap();
    assert!((shifted.mean - m.mean - 1.5).abs() < 1e-14);
}

#[test]
fn static_fit_recovers_symmetric_law() {
    let truth = p(0.0, 1.0, 1.0, 0.0);
    let xs = nig_sample(&truth, 100_000, 17).unwrap();
    let f = nig_fit_static(&xs).unwrap();
    for (a, b) in [(f.mu, 0.0), (f.delta, 1.0), (f.alpha, 1.0), (f.beta, 0.0)] {
        assert!((a - b).abs() <= 0.1, "{f:?}");
    }
}

#[test]
fn static_fit_reproduces_sample_moments() {
    let xs = nig_sample(&p(0.2, 0.8, 2.0, 0.7), 50_000, 4).unwrap();
    let f = nig_fit_static(&xs).unwrap();
    let m = f.moments();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    assert!((m.mean - mean).abs() < 1e-10 && ((m.variance - var) / var).abs() < 1e-10);
}

#[test]
fn static_fit_affine_closure() {
    // c X + d ~ NIG(c mu + d, |c| delta, alpha / |c|, beta / c)
    let xs = nig_sample(&p(0.1, 1.0, 2.0, 0.8), 20_000, 8).unwrap();
    let base = nig_fit_static(&xs).unwrap();
    for (c, d) in [(2.5, -1.0), (-0.5, 0.3)] {
        let ys: Vec<f64> = xs.iter().map(|x| c * x + d).collect();
        let f = nig_fit_static(&ys).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-8 * b.abs().max(1.0);
        assert!(close(f.mu, c * base.mu + d), "{f:?}");
        assert!(close(f.delta, c.abs() * base.delta));
        assert!(close(f.alpha, base.alpha / c.abs()));
        assert!(close(f.beta, base.beta / c));
    }
}

#[test]
fn static_fit_rejects_degenerate_input() {
    assert!(matches!(nig_fit_static(&[1.0; 100]), Err(Error::Data(_))));
    assert!(matches!(nig_fit_static(&[1.0, 2.0]), Err(Error::Data(_))));
}

#[test]
fn static_mle_improves_on_moments() {
    let xs = nig_sample(&p(0.0, 0.5, 4.0, 1.0), 5_000, 12).unwrap();
    let ll = |q: &NigParams| xs.iter().map(|&x| nig_log_pdf(q, x).unwrap()).sum::<f64>();
    let mm = nig_fit_static(&xs).unwrap();
    let ml = nig_fit_static_mle(&xs).unwrap();
    assert!(ll(&ml) >= ll(&mm));
}
