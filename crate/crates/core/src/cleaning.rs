//! Removal of local-optimum bias by pairwise resampling.
//!
//! Close pairs in query space `(x0, x1)` are compared and the more expensive
//! member is dropped, so the retained data tracks the lower envelope of the
//! cost over query space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{Dataset, DatasetEntry};
use crate::index::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleanConfig {
    /// Neighbourhood radius in query space.
    pub d: f64,
    /// Consecutive misses before the stochastic sweep stops.
    pub k_max: usize,
    pub seed: u64,
    /// Run full passes until no close pair remains (testing oracle).
    pub exhaustive: bool,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            d: 0.05,
            k_max: 5000,
            seed: 0,
            exhaustive: false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CleanError {
    #[error("cannot clean an empty dataset")]
    EmptyDataset,
    #[error("invalid cleaning config: {0}")]
    InvalidConfig(String),
}

/// Euclidean distance between the query vectors of two entries.
pub fn query_distance(a: &DatasetEntry, b: &DatasetEntry) -> f64 {
    let (qa, qb) = (a.query(), b.query());
    qa.iter().zip(&qb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// One deletion: `removed` lost against `kept`, which was within `distance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Removal {
    pub removed: usize,
    pub kept: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanReport {
    /// Indices into the input of the retained entries, ascending.
    pub kept: Vec<usize>,
    pub removals: Vec<Removal>,
    /// Sampling steps (stochastic) or full passes (exhaustive).
    pub iterations: usize,
}

pub fn clean_dataset(data: &Dataset, cfg: &CleanConfig) -> Result<Dataset, CleanError> {
    let report = clean_with_report(data, cfg)?;
    Ok(report.kept.iter().map(|&i| data.entries[i]).collect())
}

pub fn clean_with_report(data: &Dataset, cfg: &CleanConfig) -> Result<CleanReport, CleanError> {
    if data.is_empty() {
        return Err(CleanError::EmptyDataset);
    }
    if !(cfg.d.is_finite() && cfg.d > 0.0) {
        return Err(CleanError::InvalidConfig(format!("d must be positive, got {}", cfg.d)));
    }
    if cfg.k_max == 0 {
        return Err(CleanError::InvalidConfig("k_max must be at least 1".into()));
    }
    let mut cleaner = Cleaner::new(data, cfg.d);
    let iterations = if cfg.exhaustive {
        cleaner.exhaustive()
    } else {
        cleaner.stochastic(cfg.k_max, cfg.seed)
    };
    let mut kept = cleaner.live;
    kept.sort_unstable();
    Ok(CleanReport {
        kept,
        removals: cleaner.removals,
        iterations,
    })
}

struct Cleaner<'a> {
    entries: &'a [DatasetEntry],
    d: f64,
    tree: KdTree,
    live: Vec<usize>,
    live_pos: Vec<usize>,
    removals: Vec<Removal>,
}

impl<'a> Cleaner<'a> {
    fn new(data: &'a Dataset, d: f64) -> Self {
        let tree = KdTree::new(data.iter().map(DatasetEntry::query).collect());
        let n = data.len();
        Self {
            entries: &data.entries,
            d,
            tree,
            live: (0..n).collect(),
            live_pos: (0..n).collect(),
            removals: Vec::new(),
        }
    }

    /// Compares `i` with its nearest live neighbour and drops the more
    /// expensive one if they are closer than `d`.
    fn challenge(&mut self, i: usize) -> bool {
        let Some(nn) = self.tree.search(&self.entries[i].query(), 1, f64::INFINITY, Some(i)).first().copied() else {
            return false;
        };
        let distance = nn.distance();
        if !(distance < self.d) {
            return false;
        }
        let j = nn.index;
        let (ci, cj) = (self.entries[i].cost, self.entries[j].cost);
        // ties drop the later entry
        let (removed, kept) = if ci > cj || (ci == cj && i > j) { (i, j) } else { (j, i) };
        self.remove(removed);
        self.removals.push(Removal {
            removed,
            kept,
            distance,
        });
        true
    }

    fn remove(&mut self, i: usize) {
        self.tree.remove(i);
        let pos = self.live_pos[i];
        let last = *self.live.last().expect("removing from a non-empty set");
        self.live.swap_remove(pos);
        if last != i {
            self.live_pos[last] = pos;
        }
    }

    fn stochastic(&mut self, k_max: usize, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut misses = 0;
        let mut steps = 0;
        while misses < k_max && self.live.len() > 1 {
            steps += 1;
            let i = self.live[rng.random_range(0..self.live.len())];
            if self.challenge(i) {
                misses = 0;
            } else {
                misses += 1;
            }
        }
        steps
    }

    fn exhaustive(&mut self) -> usize {
        let mut passes = 0;
        loop {
            passes += 1;
            let mut removed_any = false;
            for i in 0..self.entries.len() {
                if self.tree.is_alive(i) && self.challenge(i) {
                    removed_any = true;
                }
            }
            if !removed_any {
                return passes;
            }
        }
    }
}

/// One-dimensional biased benchmark: samples of a known cost envelope with
/// a cluster of more expensive local-optimum duplicates in the middle.
pub mod synthetic {
    use super::*;
    use crate::datagen::SteeringParams;
    use crate::dynamics::State;

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct BiasedEnvelope {
        pub n_points: usize,
        pub domain: (f64, f64),
        /// Sub-interval of the domain that carries biased duplicates.
        pub biased_region: (f64, f64),
        pub bias: (f64, f64),
    }

    impl Default for BiasedEnvelope {
        fn default() -> Self {
            Self {
                n_points: 2000,
                domain: (0.0, 10.0),
                biased_region: (3.5, 6.5),
                bias: (0.5, 1.5),
            }
        }
    }

    impl BiasedEnvelope {
        /// True minimal cost at coordinate `s`.
        pub fn envelope(&self, s: f64) -> f64 {
            1.0 + 0.3 * s.sin()
        }

        /// Lipschitz constant of [`envelope`](Self::envelope).
        pub fn lipschitz(&self) -> f64 {
            0.3
        }

        /// Band within which a cleaned set is considered unbiased: half the
        /// smallest injected bias.
        pub fn band(&self) -> f64 {
            0.5 * self.bias.0
        }

        pub fn coordinate(entry: &DatasetEntry) -> f64 {
            entry.x0.theta
        }

        pub fn entry_at(s: f64, cost: f64, id: u64) -> DatasetEntry {
            DatasetEntry {
                x0: State::new(s, 0.0),
                x1: State::new(0.0, 0.0),
                cost,
                params: SteeringParams::default(),
                sim_id: id,
            }
        }

        /// Optimal samples at random coordinates; each one inside the biased
        /// region is followed by a duplicate query with a higher cost.
        pub fn generate(&self, seed: u64) -> Dataset {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut entries = Vec::with_capacity(2 * self.n_points);
            for _ in 0..self.n_points {
                let s = rng.random_range(self.domain.0..self.domain.1);
                let id = entries.len() as u64;
                entries.push(Self::entry_at(s, self.envelope(s), id));
                if s >= self.biased_region.0 && s <= self.biased_region.1 {
                    let b = rng.random_range(self.bias.0..self.bias.1);
                    entries.push(Self::entry_at(s, self.envelope(s) + b, id + 1));
                }
            }
            Dataset::new(entries)
        }

        /// Cost of the retained entry nearest to coordinate `s`.
        pub fn probe(&self, data: &Dataset, s: f64) -> f64 {
            let q = Self::entry_at(s, 0.0, 0);
            data.iter()
                .min_by(|a, b| query_distance(a, &q).total_cmp(&query_distance(b, &q)))
                .map(|e| e.cost)
                .unwrap_or(f64::NAN)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::synthetic::BiasedEnvelope;
    use super::*;

    fn at(s: f64, cost: f64, id: u64) -> DatasetEntry {
        BiasedEnvelope::entry_at(s, cost, id)
    }

    fn exhaustive(d: f64) -> CleanConfig {
        CleanConfig {
            d,
            exhaustive: true,
            ..CleanConfig::default()
        }
    }

    #[test]
    fn query_distance_examples() {
        use crate::dynamics::State;
        let mut a = at(0.0, 1.0, 0);
        let mut b = at(0.0, 2.0, 1);
        assert_eq!(query_distance(&a, &b), 0.0);
        a.x1 = State::new(1.0, 0.0);
        assert_eq!(query_distance(&a, &b), 1.0);
        a.x1 = State::new(3.0, 4.0);
        assert_eq!(query_distance(&a, &b), 5.0);
        assert_eq!(query_distance(&b, &a), 5.0);
        b.x0 = State::new(0.5, -0.5);
        assert_eq!(query_distance(&a, &b), query_distance(&b, &a));
    }

    #[test]
    fn duplicate_keeps_cheaper_entry() {
        let data = Dataset::new(vec![at(0.0, 2.0, 0), at(0.0, 1.0, 1)]);
        let out = clean_dataset(&data, &exhaustive(0.05)).unwrap();
        assert_eq!(out.entries, vec![at(0.0, 1.0, 1)]);
        let out = clean_dataset(&data, &CleanConfig::default()).unwrap();
        assert_eq!(out.entries, vec![at(0.0, 1.0, 1)]);
    }

    #[test]
    fn separated_entries_survive() {
        let data = Dataset::new(vec![at(0.0, 3.0, 0), at(0.1, 2.0, 1), at(0.2, 1.0, 2)]);
        assert_eq!(clean_dataset(&data, &exhaustive(0.05)).unwrap(), data);
        assert_eq!(clean_dataset(&data, &CleanConfig::default()).unwrap(), data);
    }

    #[test]
    fn single_entry_is_returned() {
        let data = Dataset::new(vec![at(0.0, 3.0, 0)]);
        assert_eq!(clean_dataset(&data, &CleanConfig::default()).unwrap(), data);
    }

    #[test]
    fn rejects_empty_and_bad_config() {
        assert_eq!(clean_dataset(&Dataset::default(), &CleanConfig::default()), Err(CleanError::EmptyDataset));
        let data = Dataset::new(vec![at(0.0, 3.0, 0)]);
        let bad = CleanConfig {
            d: 0.0,
            ..CleanConfig::default()
        };
        assert!(matches!(clean_dataset(&data, &bad), Err(CleanError::InvalidConfig(_))));
        let bad = CleanConfig {
            k_max: 0,
            ..CleanConfig::default()
        };
        assert!(matches!(clean_dataset(&data, &bad), Err(CleanError::InvalidConfig(_))));
    }

    #[test]
    fn exhaustive_output_is_separated_and_locally_optimal() {
        let bench = BiasedEnvelope {
            n_points: 800,
            ..BiasedEnvelope::default()
        };
        let data = bench.generate(4);
        let cfg = exhaustive(0.05);
        let report = clean_with_report(&data, &cfg).unwrap();
        let kept: Vec<&DatasetEntry> = report.kept.iter().map(|&i| &data.entries[i]).collect();
        for (a, ea) in kept.iter().enumerate() {
            for eb in &kept[a + 1..] {
                assert!(query_distance(ea, eb) >= cfg.d);
            }
        }
        let mut alive = vec![true; data.len()];
        for r in &report.removals {
            assert!(alive[r.removed] && alive[r.kept]);
            assert!(r.distance < cfg.d);
            assert!(data.entries[r.kept].cost <= data.entries[r.removed].cost);
            alive[r.removed] = false;
        }
        assert_eq!(report.kept.len() + report.removals.len(), data.len());
    }

    #[test]
    fn stochastic_is_seed_deterministic_subset() {
        let data = BiasedEnvelope::default().generate(8);
        let cfg = CleanConfig {
            seed: 42,
            k_max: 500,
            ..CleanConfig::default()
        };
        let a = clean_with_report(&data, &cfg).unwrap();
        let b = clean_with_report(&data, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.kept.windows(2).all(|w| w[0] < w[1]));
        assert!(a.kept.len() < data.len());
    }

    #[test]
    fn exhaustive_removes_injected_bias() {
        let bench = BiasedEnvelope::default();
        let data = bench.generate(1);
        let out = clean_dataset(&data, &exhaustive(0.05)).unwrap();
        for e in out.iter() {
            let s = BiasedEnvelope::coordinate(e);
            assert!((e.cost - bench.envelope(s)).abs() <= bench.band());
        }
    }
}
