//! Lower bounds on the probability that the greedy distance policy satisfies a
//! task: a static bound from the slip bound alone, a Wilson-score bound from
//! observed episodes, and the adaptive switch between the two.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::synthesis::{Policy, ProductMdp, ProductState};

/// Default z-score of the confidence bound (99% two-sided).
pub const DEFAULT_Z: f64 = 2.58;

/// Default number of episodes before the confidence bound replaces the static one.
pub const DEFAULT_DATA_THRESHOLD: u64 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum BoundsError {
    #[error("the Wilson bound needs at least one observed episode")]
    NoSamples,
}

/// Finite-horizon reachability lower bound under adversarial slips.
///
/// `L0(p) = 1` on accepting states and 0 elsewhere; for non-accepting `p`
/// with `a = pol(p)`,
/// `L_{t+1}(p) = (1 - eps) * min_{likely p'} L_t(p') + eps * min_{support p'} L_t(p')`.
/// Returns `L_horizon` for every product state. Whenever the true slip
/// probability is at most `eps_est`, the result is at most the probability of
/// reaching acceptance within `horizon` steps under `pol`.
pub fn static_lower_bound(p: &ProductMdp, pol: &Policy, eps_est: f64, horizon: u32) -> Vec<f64> {
    let n = p.num_states();
    let accepting: Vec<bool> = (0..n as ProductState).map(|u| p.is_accepting(u)).collect();
    let mut current: Vec<f64> = accepting.iter().map(|&acc| f64::from(u8::from(acc))).collect();
    let mut next = vec![0.0; n];
    for _ in 0..horizon {
        for u in 0..n {
            if accepting[u] {
                next[u] = 1.0;
                continue;
            }
            let row = p.transition(u as ProductState, pol.action(u as ProductState)).unwrap_or(&[]);
            let threshold = 1.0 - eps_est - 1e-12;
            let mut worst = f64::INFINITY;
            let mut worst_likely = f64::INFINITY;
            for &(t, prob) in row {
                let v = current[t as usize];
                if prob > 0.0 {
                    worst = worst.min(v);
                }
                if prob >= threshold {
                    worst_likely = worst_likely.min(v);
                }
            }
            next[u] = if worst.is_infinite() {
                0.0
            } else if worst_likely.is_infinite() {
                worst
            } else {
                (1.0 - eps_est) * worst_likely + eps_est * worst
            }
            .clamp(0.0, 1.0);
        }
        std::mem::swap(&mut current, &mut next);
    }
    current
}

/// Lower end of the Wilson score interval for `successes` out of
/// `successes + failures` Bernoulli trials.
pub fn wilson_lower(successes: u64, failures: u64, z: f64) -> Result<f64, BoundsError> {
    let n = successes + failures;
    if n == 0 {
        return Err(BoundsError::NoSamples);
    }
    if successes == 0 {
        return Ok(0.0);
    }
    let (s, f, n) = (successes as f64, failures as f64, n as f64);
    let z2 = z * z;
    if failures == 0 {
        return Ok(n / (n + z2));
    }
    let centre = (s + z2 / 2.0) / (n + z2);
    let spread = z / (n + z2) * (s * f / n + z2 / 4.0).sqrt();
    Ok((centre - spread).clamp(0.0, 1.0))
}

/// Episode outcomes from one initial product state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub successes: u64,
    pub failures: u64,
}

impl Tally {
    pub fn episodes(&self) -> u64 {
        self.successes + self.failures
    }

    pub fn record(&mut self, satisfied: bool) {
        if satisfied {
            self.successes += 1;
        } else {
            self.failures += 1;
        }
    }
}

/// Success and failure counts per initial product state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SatCounter {
    tallies: BTreeMap<ProductState, Tally>,
}

impl SatCounter {
    pub fn record(&mut self, p0: ProductState, satisfied: bool) {
        self.tallies.entry(p0).or_default().record(satisfied);
    }

    pub fn tally(&self, p0: ProductState) -> Tally {
        self.tallies.get(&p0).copied().unwrap_or_default()
    }

    pub fn total_episodes(&self) -> u64 {
        self.tallies.values().map(Tally::episodes).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ProductState, Tally)> + '_ {
        self.tallies.iter().map(|(&p, &t)| (p, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSource {
    Static,
    Confidence,
}

/// The Wilson bound once `data_threshold` episodes have been observed, the
/// static bound before that.
pub fn adaptive_bound(tally: Tally, static_bound: f64, data_threshold: u64, z: f64) -> (f64, BoundSource) {
    if tally.episodes() >= data_threshold.max(1) {
        let w = wilson_lower(tally.successes, tally.failures, z).expect("episodes > 0");
        (w, BoundSource::Confidence)
    } else {
        (static_bound, BoundSource::Static)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_closed_forms() {
        assert_eq!(wilson_lower(0, 10, 2.58), Ok(0.0));
        let expected = 40.0 / (40.0 + 2.58 * 2.58);
        assert!((wilson_lower(40, 0, 2.58).unwrap() - expected).abs() < 1e-12);
        assert!((wilson_lower(40, 0, 2.58).unwrap() - 0.857_331_470_066_271_7).abs() < 1e-12);
        assert_eq!(wilson_lower(0, 0, 2.58), Err(BoundsError::NoSamples));
    }

    #[test]
    fn wilson_golden_value() {
        // 50-digit evaluation of the interval's lower end at (36, 4, 2.58).
        let golden = 0.716_059_197_580_017_8;
        assert!((wilson_lower(36, 4, 2.58).unwrap() - golden).abs() < 1e-12);
    }

    #[test]
    fn wilson_monotone_in_successes() {
        for f in [0, 1, 5, 50] {
            let mut last = 0.0;
            for s in 0..200 {
                let w = wilson_lower(s, f, 2.58).unwrap_or(0.0);
                assert!(w >= last - 1e-15, "s={s} f={f}");
                assert!((0.0..=1.0).contains(&w));
                last = w;
            }
        }
    }

    #[test]
    fn adaptive_switches_at_threshold() {
        let mut t = Tally::default();
        assert_eq!(adaptive_bound(t, 0.4, 40, 2.58), (0.4, BoundSource::Static));
        for i in 0..39 {
            t.record(i % 10 != 0);
        }
        assert_eq!(adaptive_bound(t, 0.4, 40, 2.58), (0.4, BoundSource::Static));
        t.record(true);
        let (v, src) = adaptive_bound(t, 0.4, 40, 2.58);
        assert_eq!(src, BoundSource::Confidence);
        assert_eq!(v, wilson_lower(t.successes, t.failures, 2.58).unwrap());
    }

    #[test]
    fn counter_conserves_episodes() {
        let mut c = SatCounter::default();
        c.record(3, true);
        c.record(3, false);
        c.record(7, true);
        assert_eq!(c.total_episodes(), 3);
        assert_eq!(c.tally(3), Tally { successes: 1, failures: 1 });
        assert_eq!(c.tally(9), Tally::default());
    }
}
