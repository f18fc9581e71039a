//! Model confidence set with the range statistic and a stationary bootstrap.

use crate::error::{domain, Error, Result};
use crate::nig::stream_rng;
use crate::par;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsOptions {
    /// Models with an MCS p-value at or above this stay in the set.
    pub alpha: f64,
    /// Mean block length of the stationary bootstrap.
    pub block_length: f64,
    pub replications: usize,
    pub seed: u64,
}

impl Default for McsOptions {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            block_length: 10.0,
            replications: 5000,
            seed: 20240101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub mean_loss: f64,
    /// 1 for the last surviving model, `M` for the first eliminated.
    pub rank: usize,
    pub p_value: f64,
    pub included: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    /// In input order.
    pub entries: Vec<McsEntry>,
    /// Model indices, first eliminated first.
    pub elimination_order: Vec<usize>,
}

impl McsResult {
    pub fn included(&self) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| self.entries[i].included).collect()
    }
}

/// Stationary bootstrap resample of `0..n`.
fn stationary_indices<R: Rng>(rng: &mut R, n: usize, block_length: f64, out: &mut Vec<usize>) {
    out.clear();
    let restart = 1.0 / block_length;
    let mut i = rng.random_range(0..n);
    for _ in 0..n {
        out.push(i);
        i = if rng.random::<f64>() < restart {
            rng.random_range(0..n)
        } else {
            (i + 1) % n
        };
    }
}

/// `d / sqrt(v)` with the zero-variance convention: 0 for a zero difference,
/// otherwise an infinity of the difference's sign.
fn studentize(d: f64, v: f64) -> f64 {
    if v > 0.0 {
        d / v.sqrt()
    } else if d == 0.0 {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

/// Runs the MCS procedure on `losses[model][t]`.
pub fn mcs(losses: &[Vec<f64>], opts: &McsOptions) -> Result<McsResult> {
    let m = losses.len();
    if m == 0 {
        return Err(Error::Contract("MCS needs at least one model".into()));
    }
    let t = losses[0].len();
    if losses.iter().any(|l| l.len() != t) {
        return Err(Error::Contract("MCS loss series differ in length".into()));
    }
    if t < 50 {
        return domain(format!("MCS needs at least 50 observations, got {t}"));
    }
    if opts.replications < 1000 {
        return domain(format!(
            "MCS needs at least 1000 bootstrap replications, got {}",
            opts.replications
        ));
    }
    if !(opts.block_length >= 1.0) {
        return domain(format!("block length must be at least 1, got {}", opts.block_length));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return domain(format!("MCS alpha must lie in (0, 1), got {}", opts.alpha));
    }
    for (i, l) in losses.iter().enumerate() {
        if let Some(k) = l.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!("model {i}: non-finite loss at index {k}")));
        }
    }
    let mean = |l: &[f64]| l.iter().sum::<f64>() / l.len() as f64;
    let means: Vec<f64> = losses.iter().map(|l| mean(l)).collect();

    // boot[b][i]: resampled mean loss of model i in replication b
    let boot: Vec<Vec<f64>> = par::map_range(opts.replications, |b| {
        let mut rng = stream_rng(opts.seed, b as u64);
        let mut idx = Vec::with_capacity(t);
        stationary_indices(&mut rng, t, opts.block_length, &mut idx);
        losses
            .iter()
            .map(|l| idx.iter().map(|&k| l[k]).sum::<f64>() / t as f64)
            .collect()
    });

    let nb = opts.replications as f64;
    let mut var = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let d = means[i] - means[j];
            let v = boot
                .iter()
                .map(|bm| (bm[i] - bm[j] - d).powi(2))
                .sum::<f64>()
                / nb;
            var[i][j] = v;
            var[j][i] = v;
        }
    }

    let mut alive: Vec<usize> = (0..m).collect();
    let mut order = Vec::with_capacity(m);
    let mut p_values = vec![1.0; m];
    let mut running = 0.0f64;
    while alive.len() > 1 {
        let mut stat = 0.0f64;
        let mut worst = alive[0];
        let mut worst_sup = f64::NEG_INFINITY;
        for &i in &alive {
            let mut sup = f64::NEG_INFINITY;
            for &j in &alive {
                if i == j {
                    continue;
                }
                let tij = studentize(means[i] - means[j], var[i][j]);
                stat = stat.max(tij.abs());
                sup = sup.max(tij);
            }
            if sup > worst_sup {
                worst_sup = sup;
                worst = i;
            }
        }
        let exceed = boot
            .iter()
            .filter(|bm| {
                let mut tb = 0.0f64;
                for (a, &i) in alive.iter().enumerate() {
                    for &j in &alive[a + 1..] {
                        let d = bm[i] - bm[j] - (means[i] - means[j]);
                        let v = var[i][j];
                        let s = if v > 0.0 { d.abs() / v.sqrt() } else { 0.0 };
                        tb = tb.max(s);
                    }
                }
                tb >= stat
            })
            .count();
        let p = exceed as f64 / nb;
        running = running.max(p);
        p_values[worst] = running;
        order.push(worst);
        alive.retain(|&i| i != worst);
    }
    order.push(alive[0]);
    p_values[alive[0]] = 1.0;

    let entries = (0..m)
        .map(|i| {
            let pos = order.iter().position(|&k| k == i).expect("every model ordered");
            McsEntry {
                mean_loss: means[i],
                rank: m - pos,
                p_value: p_values[i],
                included: p_values[i] >= opts.alpha,
            }
        })
        .collect();
    order.pop();
    Ok(McsResult {
        entries,
        elimination_order: order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn opts() -> McsOptions {
        McsOptions {
            replications: 1000,
            ..McsOptions::default()
        }
    }

    #[test]
    fn single_model() {
        let r = mcs(&[vec![1.0; 60]], &opts()).unwrap();
        assert_eq!(r.entries[0].rank, 1);
        assert_eq!(r.entries[0].p_value, 1.0);
        assert!(r.entries[0].included);
    }

    #[test]
    fn identical_models_both_survive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let r = mcs(&[l.clone(), l], &opts()).unwrap();
        assert!(r.entries.iter().all(|e| e.p_value == 1.0 && e.included));
    }

    #[test]
    fn shifted_model_eliminated_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..244).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..244).map(|_| rng.random::<f64>()).collect();
        let c: Vec<f64> = a.iter().map(|x| x + 0.1).collect();
        let r = mcs(&[a, b, c], &opts()).unwrap();
        assert_eq!(r.elimination_order[0], 2);
        assert_eq!(r.entries[2].rank, 3);
        assert!(r.entries[2].p_value < 0.15);
    }

    #[test]
    fn ranks_are_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let losses: Vec<Vec<f64>> = (0..4)
            .map(|k| (0..100).map(|_| rng.random::<f64>() + 0.05 * k as f64).collect())
            .collect();
        let r = mcs(&losses, &opts()).unwrap();
        let mut ranks: Vec<usize> = r.entries.iter().map(|e| e.rank).collect();
        ranks.sort();
        assert_eq!(ranks, vec![1, 2, 3, 4]);
        let mut prev = 0.0;
        for &i in &r.elimination_order {
            assert!(r.entries[i].p_value >= prev);
            prev = r.entries[i].p_value;
        }
    }

    #[test]
    fn preconditions() {
        assert!(mcs(&[vec![1.0; 49]], &opts()).is_err());
        let few = McsOptions {
            replications: 999,
            ..McsOptions::default()
        };
        assert!(mcs(&[vec![1.0; 60]], &few).is_err());
    }
}
