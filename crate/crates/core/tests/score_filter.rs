mod common;

use common::{bessel_k_quadrature, rng, uniform};
use nigdcs::dcs::*;
use nigdcs::nig::{nig_log_pdf, NigParams};
use rand_chacha::ChaCha8Rng;

fn random_pair(r: &mut ChaCha8Rng) -> (DcsState, f64) {
    let s = DcsState::new(
        uniform(r, -0.5, 0.5),
        uniform(r, -3.0, 1.0),
        uniform(r, -1.5, 2.5),
        uniform(r, -1.5, 1.5),
    );
    let y = s.mu + s.lambda.exp() * uniform(r, -6.0, 6.0);
    (s, y)
}

fn central_difference(s: &DcsState, y: f64, coord: usize, h: f64) -> f64 {
    let shift = |d: f64| {
        let mut t = *s;
        match coord {
            0 => t.mu += d,
            1 => t.lambda += d,
            2 => t.v += d,
            _ => t.eta += d,
        }
        log_cond_density(&t, y).unwrap()
    };
    (shift(h) - shift(-h)) / (2.0 * h)
}

#[test]
fn scores_match_finite_differences() {
    let mut r = rng(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (s, y) = random_pair(&mut r);
        let sc = scores(&s, y).unwrap().as_array();
        for c in 0..4 {
            let mut fd = central_difference(&s, y, c, 1e-6);
            if c == 0 {
                fd *= (2.0 * s.lambda).exp();
            }
            let err = (sc[c] - fd).abs();
            let bound = (1e-6 * fd.abs()).max(1e-9);
            worst = worst.max(err / bound);
            assert!(err <= bound, "coord {c} at {s:?}, y={y}: {} vs {fd}", sc[c]);
        }
    }
    assert!(worst <= 1.0);
}

#[test]
fn density_equals_nig_log_pdf() {
    let mut r = rng(12);
    for _ in 0..100 {
        let (s, y) = random_pair(&mut r);
        let a = log_cond_density(&s, y).unwrap();
        let b = nig_log_pdf(&link(&s).unwrap(), y).unwrap();
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }
}

#[test]
fn density_at_origin_matches_quadrature() {
    let expected = (std::f64::consts::E * bessel_k_quadrature(1.0, 1.0) / std::f64::consts::PI).ln();
    let got = log_cond_density(&DcsState::default(), 0.0).unwrap();
    assert!((got - expected).abs() < 1e-12);
}

#[test]
fn density_finite_far_in_tails() {
    let s = DcsState::new(0.2, -1.0, 0.5, 0.3);
    for k in [-50.0, 50.0, 1e6] {
        let y = s.mu + k * s.lambda.exp();
        assert!(log_cond_density(&s, y).unwrap().is_finite());
    }
}

#[test]
fn constant_coefficients_give_constant_path() {
    let c = DcsCoefficients::from_recursions([
        Recursion::new(0.01, 0.0, 0.0),
        Recursion::new(-0.5, 0.0, 0.0),
        Recursion::new(0.3, 0.0, 0.0),
        Recursion::new(0.1, 0.0, 0.0),
    ]);
    let ys = [0.3, -0.2, 1.1, 0.0, -0.7];
    let fit = dcs_filter(&c, &ys, None, DcsState::default()).unwrap();
    for s in &fit.state_path[1..] {
        assert_eq!(*s, DcsState::new(0.01, -0.5, 0.3, 0.1));
    }
}

#[test]
fn single_observation_loglik() {
    let c = DcsCoefficients::constant(DcsState::default());
    let init = DcsState::new(0.1, -0.2, 0.3, -0.1);
    let fit = dcs_filter(&c, &[0.4], None, init).unwrap();
    assert_eq!(fit.log_likelihood, log_cond_density(&init, 0.4).unwrap());
}

fn sample_coefficients() -> DcsCoefficients {
    DcsCoefficients::from_recursions([
        Recursion::new(0.0, 0.5, 0.01),
        Recursion::new(-0.23, 0.95, 0.08),
        Recursion::new(0.05, 0.9, 0.03),
        Recursion::new(0.02, 0.9, 0.02),
    ])
}

#[test]
fn filter_is_deterministic_and_additive() {
    let c = sample_coefficients();
    let ys = simulate_dcs(&c, 400, None, 5).unwrap();
    let a = dcs_filter(&c, &ys, None, initial_state(&c)).unwrap();
    let b = dcs_filter(&c, &ys, None, initial_state(&c)).unwrap();
    assert_eq!(a, b);
    let sum: f64 = a
        .state_path
        .iter()
        .zip(&ys)
        .map(|(s, &y)| log_cond_density(s, y).unwrap())
        .sum();
    assert!((sum - a.log_likelihood).abs() < 1e-9 * sum.abs());
    // splitting the sample and restarting from the carried state reproduces the tail
    let head = dcs_filter(&c, &ys[..200], None, initial_state(&c)).unwrap();
    let next = forecast_one_step(&head, ys[199], 0.0).unwrap();
    let tail = dcs_filter(&c, &ys[200..], None, next).unwrap();
    assert!((head.log_likelihood + tail.log_likelihood - a.log_likelihood).abs() < 1e-9);
    for s in &a.state_path {
        let p = link(s).unwrap();
        assert!(p.delta > 0.0 && p.beta.abs() < p.alpha);
    }
}

#[test]
fn seasonal_constant_folds_into_intercept() {
    let c = sample_coefficients();
    let ys = simulate_dcs(&c, 300, None, 8).unwrap();
    let shift = 0.07;
    let q = vec![shift; ys.len()];
    let init = initial_state(&c);
    let with_q = dcs_filter(&c, &ys, Some(&q), init).unwrap();
    let mut folded = c;
    folded.lambda.intercept += shift;
    let without = dcs_filter(&folded, &ys, None, init).unwrap();
    for (a, b) in with_q.state_path.iter().zip(&without.state_path) {
        assert!((a.lambda - b.lambda).abs() < 1e-12);
    }
}

#[test]
fn seasonal_length_checked() {
    let c = sample_coefficients();
    assert!(dcs_filter(&c, &[0.1, 0.2], Some(&[0.0]), DcsState::default()).is_err());
}

#[test]
fn filtered_loglik_matches_entropy_rate() {
    // With the true coefficients the filter reproduces the generating states,
    // so the average log-likelihood should match the average negative
    // entropy of the day-by-day predictive NIGs.
    let c = sample_coefficients();
    let path = simulate_dcs_path(&c, 3000, None, 21).unwrap();
    let fit = dcs_filter(&c, &path.returns, None, initial_state(&c)).unwrap();
    let avg = fit.log_likelihood / 3000.0;
    let mut r = rng(99);
    let mut neg_entropy = 0.0;
    for s in path.states.iter().step_by(10) {
        let p = link(s).unwrap();
        let draws = nigdcs::nig::nig_sample(&p, 200, r.random_range(0..u64::MAX)).unwrap();
        neg_entropy += draws.iter().map(|&x| nig_log_pdf(&p, x).unwrap()).sum::<f64>() / 200.0;
    }
    neg_entropy /= 300.0;
    assert!((avg - neg_entropy).abs() < 0.05, "{avg} vs {neg_entropy}");
}

use rand::Rng;

#[test]
fn forecast_step_arithmetic() {
    let c = DcsCoefficients::from_recursions([Recursion::new(0.2, 0.5, 0.0); 4]);
    let fit = dcs_filter(&c, &[0.1], None, DcsState::new(0.0, 1.0, 1.5, 0.0)).unwrap();
    let next = forecast_one_step(&fit, 0.1, 0.0).unwrap();
    assert!((next.lambda - 0.7).abs() < 1e-15);
    assert!(link(&next).is_ok());
}

#[test]
fn simulation_without_loadings_is_iid() {
    let state = DcsState::new(0.0, 0.0, 0.5, 0.0);
    let c = DcsCoefficients::constant(state);
    let a = simulate_dcs(&c, 200_000, None, 3).unwrap();
    assert_eq!(a, simulate_dcs(&c, 200_000, None, 3).unwrap());
    let p: NigParams = link(&state).unwrap();
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var / p.variance() - 1.0).abs() < 0.1);
}

#[test]
fn forecast_violation_rate() {
    let c = sample_coefficients();
    let path = simulate_dcs_path(&c, 5001, None, 77).unwrap();
    // losses are the negated returns; VaR is the 0.95 quantile of the loss
    let mut hits = 0;
    for (s, &y) in path.states.iter().zip(&path.returns).skip(1) {
        let p = link(s).unwrap();
        let loss_dist = NigParams { mu: -p.mu, delta: p.delta, alpha: p.alpha, beta: -p.beta };
        let var = loss_dist.quantile(0.95).unwrap();
        if -y > var {
            hits += 1;
        }
    }
    let rate = hits as f64 / 5000.0;
    assert!((rate - 0.05).abs() <= 0.015, "{rate}");
}

#[test]
fn document_round_trips_through_json() {
    let c = sample_coefficients();
    let ys = simulate_dcs(&c, 50, None, 1).unwrap();
    let doc = dcs_filter(&c, &ys, None, initial_state(&c)).unwrap().document();
    let text = serde_json::to_string(&doc).unwrap();
    let back: ModelDocument = serde_json::from_str(&text).unwrap();
    assert_eq!(doc, back);
}

#[test]
fn kernel_finite_at_guard_corners() {
    let g = 30.0;
    for lambda in [-g, 0.0, g] {
        for tail in [-g, 0.0, g] {
            for eta in [-g, 0.0, g] {
                let s = DcsState::new(0.0, lambda, lambda + tail, eta);
                for k in [-1e3, -1.0, 0.0, 1e-9, 1.0, 1e3] {
                    let y = k * lambda.exp();
                    let d = log_cond_density(&s, y).unwrap();
                    assert!(d.is_finite(), "{s:?} y={y}: {d}");
                    let sc = scores(&s, y).unwrap().as_array();
                    assert!(sc.iter().all(|v| v.is_finite()), "{s:?} y={y}: {sc:?}");
                }
            }
        }
    }
}
