//! k-nearest-neighbour surrogates for cost-to-go, steering parameters and
//! query validity, all backed by one index over the cleaned dataset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{Dataset, DatasetEntry, Interval, SteeringParams};
use crate::dynamics::State;
use crate::index::{KdTree, Neighbor, Point};

pub const DEFAULT_COST_FLOOR: f64 = 1e-5;
pub const DEFAULT_COST_CEILING: f64 = 1e5;

/// A pair of states whose connection is being asked about.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query {
    pub x0: State,
    pub x1: State,
}

impl Query {
    pub fn new(x0: State, x1: State) -> Self {
        Self { x0, x1 }
    }

    pub fn point(&self) -> Point {
        [self.x0.theta, self.x0.omega, self.x1.theta, self.x1.omega]
    }
}

impl From<&DatasetEntry> for Query {
    fn from(e: &DatasetEntry) -> Self {
        Self::new(e.x0, e.x1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// `scale` times the given percentile of the summed neighbour distances
    /// of every stored query against the rest of the set.
    Calibrated { percentile: f64, scale: f64 },
    Fixed { threshold: f64 },
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self::Calibrated {
            percentile: 99.5,
            scale: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub k: usize,
    pub threshold: ThresholdPolicy,
    pub cost_floor: f64,
    pub cost_ceiling: f64,
    /// Lower bound applied to predicted segment durations.
    pub dt: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            k: 3,
            threshold: ThresholdPolicy::default(),
            cost_floor: DEFAULT_COST_FLOOR,
            cost_ceiling: DEFAULT_COST_CEILING,
            dt: 0.01,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("cannot build a model from an empty dataset")]
    EmptyDataset,
    #[error("k = {k} must be between 1 and the dataset size {n}")]
    InvalidK { k: usize, n: usize },
    #[error("invalid surrogate config: {0}")]
    InvalidConfig(String),
}

/// Per-parameter sampling domain of the steering parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDomain {
    pub lam_theta0: Interval,
    pub lam_omega0: Interval,
    pub t_f: Interval,
}

impl ParamDomain {
    /// Observed min/max of each parameter, widened by `margin` times its
    /// width on both sides.
    pub fn from_dataset(data: &Dataset, margin: f64) -> Option<Self> {
        if data.is_empty() {
            return None;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for e in data.iter() {
            for (i, v) in e.params.to_array().into_iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        let widen = |i: usize| {
            let pad = margin * (hi[i] - lo[i]).max(1e-6);
            Interval::new(lo[i] - pad, hi[i] + pad)
        };
        Some(Self {
            lam_theta0: widen(0),
            lam_omega0: widen(1),
            t_f: widen(2),
        })
    }

    pub fn bounds(&self) -> [Interval; 3] {
        [self.lam_theta0, self.lam_omega0, self.t_f]
    }

    pub fn contains(&self, p: &SteeringParams) -> bool {
        self.bounds().iter().zip(p.to_array()).all(|(b, v)| b.contains(v))
    }
}

/// Cost, steering and validity answers for one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub cost: f64,
    pub steering: SteeringParams,
    pub distance_sum: f64,
}

#[derive(Debug, Clone)]
pub struct SurrogateModel {
    entries: Vec<DatasetEntry>,
    index: KdTree,
    k: usize,
    validity_threshold: f64,
    cost_floor: f64,
    cost_ceiling: f64,
    dt: f64,
    domain: ParamDomain,
    /// Largest `|x1 - x0|` over the stored entries.
    max_span: f64,
}

impl SurrogateModel {
    pub fn build(data: &Dataset, cfg: &SurrogateConfig) -> Result<Self, SurrogateError> {
        if data.is_empty() {
            return Err(SurrogateError::EmptyDataset);
        }
        if cfg.k == 0 || cfg.k > data.len() {
            return Err(SurrogateError::InvalidK { k: cfg.k, n: data.len() });
        }
        if !(cfg.cost_floor > 0.0 && cfg.cost_floor < cfg.cost_ceiling) {
            return Err(SurrogateError::InvalidConfig("cost bounds must satisfy 0 < floor < ceiling".into()));
        }
        if !(cfg.dt > 0.0) {
            return Err(SurrogateError::InvalidConfig("dt must be positive".into()));
        }
        let index = KdTree::new(data.iter().map(DatasetEntry::query).collect());
        let validity_threshold = match cfg.threshold {
            ThresholdPolicy::Fixed { threshold } if threshold > 0.0 => threshold,
            ThresholdPolicy::Fixed { threshold } => {
                return Err(SurrogateError::InvalidConfig(format!("threshold must be positive, got {threshold}")));
            }
            ThresholdPolicy::Calibrated { percentile, scale } => {
                if !(0.0..=100.0).contains(&percentile) || !(scale > 0.0) {
                    return Err(SurrogateError::InvalidConfig("bad calibration percentile or scale".into()));
                }
                let mut sums = leave_one_out_sums(&index, cfg.k);
                (scale * percentile_of(&mut sums, percentile)).max(1e-12)
            }
        };
        let domain = ParamDomain::from_dataset(data, 0.05).expect("non-empty dataset");
        let max_span = data.iter().map(|e| e.x0.distance(&e.x1)).fold(0.0, f64::max);
        Ok(Self {
            entries: data.entries.clone(),
            index,
            k: cfg.k,
            validity_threshold,
            cost_floor: cfg.cost_floor,
            cost_ceiling: cfg.cost_ceiling,
            dt: cfg.dt,
            domain,
            max_span,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn validity_threshold(&self) -> f64 {
        self.validity_threshold
    }

    pub fn cost_bounds(&self) -> (f64, f64) {
        (self.cost_floor, self.cost_ceiling)
    }

    pub fn param_domain(&self) -> &ParamDomain {
        &self.domain
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// The `k` nearest stored queries, nearest first, ties to lower index.
    pub fn neighbors(&self, q: &Query) -> Vec<Neighbor> {
        self.index.nearest(&q.point(), self.k)
    }

    fn mean_cost(&self, nbrs: &[Neighbor]) -> f64 {
        let mean = nbrs.iter().map(|n| self.entries[n.index].cost).sum::<f64>() / nbrs.len() as f64;
        mean.clamp(self.cost_floor, self.cost_ceiling)
    }

    fn mean_steering(&self, nbrs: &[Neighbor]) -> SteeringParams {
        let mut acc = [0.0; 3];
        for n in nbrs {
            for (a, v) in acc.iter_mut().zip(self.entries[n.index].params.to_array()) {
                *a += v;
            }
        }
        let m = nbrs.len() as f64;
        let mut p = SteeringParams::from_array(acc.map(|a| a / m));
        p.t_f = p.t_f.max(self.dt);
        p
    }

    pub fn predict_cost(&self, q: &Query) -> f64 {
        self.mean_cost(&self.neighbors(q))
    }

    pub fn predict_steering(&self, q: &Query) -> SteeringParams {
        self.mean_steering(&self.neighbors(q))
    }

    /// Sum of the distances to the `k` nearest stored queries.
    pub fn distance_sum(&self, q: &Query) -> f64 {
        self.neighbors(q).iter().map(Neighbor::distance).sum()
    }

    pub fn is_valid(&self, q: &Query) -> bool {
        self.distance_sum(q) <= self.validity_threshold
    }

    /// Cost and steering predictions if the query is valid, `None` otherwise.
    /// The neighbour search is bounded by the validity threshold, so far-away
    /// queries are rejected cheaply.
    pub fn assess(&self, q: &Query) -> Option<Prediction> {
        // A neighbour p within r of q has |(x1 - x0) - (p1 - p0)| <= sqrt(2) r,
        // so queries spanning much more than any stored segment cannot be valid.
        if q.x0.distance(&q.x1) > self.max_span + std::f64::consts::SQRT_2 * self.validity_threshold {
            return None;
        }
        let nbrs = self.index.search(&q.point(), self.k, self.validity_threshold, None);
        if nbrs.len() < self.k {
            return None;
        }
        let distance_sum: f64 = nbrs.iter().map(Neighbor::distance).sum();
        if distance_sum > self.validity_threshold {
            return None;
        }
        Some(Prediction {
            cost: self.mean_cost(&nbrs),
            steering: self.mean_steering(&nbrs),
            distance_sum,
        })
    }
}

fn leave_one_out_sums(index: &KdTree, k: usize) -> Vec<f64> {
    (0..index.capacity())
        .into_par_iter()
        .map(|i| {
            index
                .search(index.point(i), k, f64::INFINITY, Some(i))
                .iter()
                .map(Neighbor::distance)
                .sum()
        })
        .collect()
}

/// Nearest-rank percentile (`p` in percent). Reorders `values`.
pub fn percentile_of(values: &mut [f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, GenConfig};
    use proptest::prelude::*;

    fn entry(x0: (f64, f64), x1: (f64, f64), cost: f64, params: [f64; 3]) -> DatasetEntry {
        DatasetEntry {
            x0: State::new(x0.0, x0.1),
            x1: State::new(x1.0, x1.1),
            cost,
            params: SteeringParams::from_array(params),
            sim_id: 0,
        }
    }

    fn three() -> Dataset {
        Dataset::new(vec![
            entry((0.0, 0.0), (0.1, 0.0), 1.0, [0.1, 1.0, 0.1]),
            entry((0.0, 0.0), (0.2, 0.0), 2.0, [0.2, 2.0, 0.2]),
            entry((0.0, 0.0), (0.3, 0.0), 3.0, [0.3, 3.0, 0.3]),
        ])
    }

    fn cfg(k: usize) -> SurrogateConfig {
        SurrogateConfig {
            k,
            ..SurrogateConfig::default()
        }
    }

    #[test]
    fn build_errors() {
        assert_eq!(SurrogateModel::build(&Dataset::default(), &cfg(3)).unwrap_err(), SurrogateError::EmptyDataset);
        assert_eq!(SurrogateModel::build(&three(), &cfg(4)).unwrap_err(), SurrogateError::InvalidK { k: 4, n: 3 });
        assert!(SurrogateModel::build(&three(), &cfg(0)).is_err());
        let bad = SurrogateConfig {
            threshold: ThresholdPolicy::Fixed { threshold: -1.0 },
            ..cfg(1)
        };
        assert!(matches!(SurrogateModel::build(&three(), &bad), Err(SurrogateError::InvalidConfig(_))));
    }

    #[test]
    fn full_neighbourhood_averages_everything() {
        let m = SurrogateModel::build(&three(), &cfg(3)).unwrap();
        let q = Query::new(State::new(5.0, 5.0), State::new(-1.0, 2.0));
        assert!((m.predict_cost(&q) - 2.0).abs() < 1e-12);
        let s = m.predict_steering(&q);
        assert!((s.t_f - 0.2).abs() < 1e-12);
        assert!((s.lam_omega0 - 2.0).abs() < 1e-12);
        assert!((s.lam_theta0 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn exact_recall_with_single_neighbour() {
        let data = three();
        let m = SurrogateModel::build(&data, &cfg(1)).unwrap();
        for e in data.iter() {
            let q = Query::from(e);
            assert_eq!(m.predict_cost(&q), e.cost);
            assert_eq!(m.predict_steering(&q), e.params);
            assert!(m.is_valid(&q));
        }
    }

    #[test]
    fn cost_is_saturated() {
        let data = Dataset::new(vec![entry((0.0, 0.0), (0.0, 0.0), 1e-7, [0.0, 0.0, 0.1]); 3]);
        let m = SurrogateModel::build(&data, &cfg(3)).unwrap();
        assert_eq!(m.predict_cost(&Query::from(&data.entries[0])), 1e-5);
        let data = Dataset::new(vec![entry((0.0, 0.0), (0.0, 0.0), 1e9, [0.0, 0.0, 0.1]); 3]);
        let m = SurrogateModel::build(&data, &cfg(3)).unwrap();
        assert_eq!(m.predict_cost(&Query::from(&data.entries[0])), 1e5);
    }

    #[test]
    fn steering_duration_is_floored_at_dt() {
        let data = Dataset::new(vec![entry((0.0, 0.0), (0.0, 0.0), 1.0, [0.0, 0.0, 0.001])]);
        let m = SurrogateModel::build(&data, &cfg(1)).unwrap();
        assert_eq!(m.predict_steering(&Query::from(&data.entries[0])).t_f, 0.01);
    }

    #[test]
    fn far_queries_are_invalid() {
        let gen = GenConfig {
            n_sims: 300,
            seed: 1,
            ..GenConfig::default()
        };
        let data = generate_dataset(&gen).unwrap();
        let m = SurrogateModel::build(&data, &cfg(3)).unwrap();
        for e in data.iter().take(50) {
            let far = State::new(e.x0.theta + 10.0, e.x0.omega);
            let q = Query::new(e.x0, far);
            assert!(!m.is_valid(&q));
            assert!(m.assess(&q).is_none());
        }
        let passing = data.iter().filter(|e| m.is_valid(&Query::from(*e))).count();
        assert!(passing as f64 >= 0.99 * data.len() as f64);
    }

    #[test]
    fn assess_agrees_with_separate_predictions() {
        let gen = GenConfig {
            n_sims: 200,
            seed: 2,
            ..GenConfig::default()
        };
        let data = generate_dataset(&gen).unwrap();
        let m = SurrogateModel::build(&data, &cfg(3)).unwrap();
        for (i, e) in data.iter().enumerate().take(300) {
            let shift = 0.05 * (i % 7) as f64;
            let q = Query::new(e.x0, State::new(e.x1.theta + shift, e.x1.omega - shift));
            match m.assess(&q) {
                Some(p) => {
                    assert!(m.is_valid(&q));
                    assert_eq!(p.cost, m.predict_cost(&q));
                    assert_eq!(p.steering, m.predict_steering(&q));
                }
                None => assert!(!m.is_valid(&q)),
            }
        }
    }

    #[test]
    fn percentile_nearest_rank() {
        let mut v = vec![5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(percentile_of(&mut v, 100.0), 5.0);
        assert_eq!(percentile_of(&mut v, 50.0), 3.0);
        assert_eq!(percentile_of(&mut v, 0.0), 1.0);
    }

    proptest! {
        #[test]
        fn predictions_stay_within_neighbour_range(
            t0 in -4.0f64..2.0, w0 in -3.0f64..3.0, t1 in -4.0f64..2.0, w1 in -3.0f64..3.0,
        ) {
            let gen = GenConfig { n_sims: 60, seed: 7, ..GenConfig::default() };
            let data = generate_dataset(&gen).unwrap();
            let m = SurrogateModel::build(&data, &cfg(3)).unwrap();
            let q = Query::new(State::new(t0, w0), State::new(t1, w1));
            let nbrs = m.neighbors(&q);
            let pick = |f: &dyn Fn(&DatasetEntry) -> f64| {
                let vals: Vec<f64> = nbrs.iter().map(|n| f(&m.entries()[n.index])).collect();
                (vals.iter().cloned().fold(f64::INFINITY, f64::min), vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            };
            let c = m.predict_cost(&q);
            prop_assert!((1e-5..=1e5).contains(&c));
            let (lo, hi) = pick(&|e| e.cost);
            prop_assert!(c >= lo.max(1e-5) - 1e-12 && c <= hi.min(1e5) + 1e-12);
            let s = m.predict_steering(&q);
            let (lo, hi) = pick(&|e| e.params.lam_omega0);
            prop_assert!(s.lam_omega0 >= lo - 1e-12 && s.lam_omega0 <= hi + 1e-12);
            let (lo, hi) = pick(&|e| e.params.t_f);
            prop_assert!(s.t_f >= lo - 1e-12 && s.t_f <= hi + 1e-12);
        }
    }
}
