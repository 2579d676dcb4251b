//! Static k-d tree over 4-dimensional query points with tombstone removal.
//!
//! Neighbours are ordered by `(squared distance, insertion index)`, so
//! equidistant points resolve to the lower index. The tree is laid out
//! implicitly over a permutation of point ids: the subtree spanning
//! `order[lo..hi]` has its splitting point at `mid = (lo + hi) / 2`.

pub const DIM: usize = 4;

pub type Point = [f64; DIM];

#[inline]
pub fn squared_distance(a: &Point, b: &Point) -> f64 {
    let mut s = 0.0;
    for i in 0..DIM {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub sq_dist: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.sq_dist.sqrt()
    }

    #[inline]
    fn key_lt(&self, sq_dist: f64, index: usize) -> bool {
        (self.sq_dist, self.index) < (sq_dist, index)
    }
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point>,
    order: Vec<u32>,
    split_dim: Vec<u8>,
    /// Live points in the subtree whose splitting point sits at this slot.
    live_count: Vec<u32>,
    /// Slot of each point id in `order`.
    slot_of: Vec<u32>,
    alive: Vec<bool>,
    n_live: usize,
}

impl KdTree {
    pub fn new(points: Vec<Point>) -> Self {
        let n = points.len();
        assert!(n < u32::MAX as usize, "too many points for the index");
        let mut tree = Self {
            order: (0..n as u32).collect(),
            split_dim: vec![0; n],
            live_count: vec![0; n],
            slot_of: vec![0; n],
            alive: vec![true; n],
            n_live: n,
            points,
        };
        tree.build(0, n);
        for (slot, &id) in tree.order.iter().enumerate() {
            tree.slot_of[id as usize] = slot as u32;
        }
        tree
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        self.live_count[mid] = (hi - lo) as u32;
        if hi - lo == 1 {
            return;
        }
        let mut min = [f64::INFINITY; DIM];
        let mut max = [f64::NEG_INFINITY; DIM];
        for &id in &self.order[lo..hi] {
            let p = &self.points[id as usize];
            for d in 0..DIM {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        let dim = (0..DIM)
            .max_by(|&a, &b| (max[a] - min[a]).total_cmp(&(max[b] - min[b])))
            .unwrap_or(0);
        self.split_dim[mid] = dim as u8;
        let points = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a as usize][dim]
                .total_cmp(&points[b as usize][dim])
                .then(a.cmp(&b))
        });
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    /// Total number of points, including removed ones.
    pub fn capacity(&self) -> usize {
        self.points.len()
    }

    pub fn len(&self) -> usize {
        self.n_live
    }

    pub fn is_empty(&self) -> bool {
        self.n_live == 0
    }

    pub fn point(&self, index: usize) -> &Point {
        &self.points[index]
    }

    pub fn is_alive(&self, index: usize) -> bool {
        self.alive[index]
    }

    /// Tombstones a point. Returns false if it was already removed.
    pub fn remove(&mut self, index: usize) -> bool {
        if !self.alive[index] {
            return false;
        }
        self.alive[index] = false;
        self.n_live -= 1;
        let target = self.slot_of[index] as usize;
        let (mut lo, mut hi) = (0, self.order.len());
        loop {
            let mid = (lo + hi) / 2;
            self.live_count[mid] -= 1;
            match target.cmp(&mid) {
                std::cmp::Ordering::Equal => break,
                std::cmp::Ordering::Less => hi = mid,
                std::cmp::Ordering::Greater => lo = mid + 1,
            }
        }
        true
    }

    /// The `k` nearest live points to `query`, nearest first.
    pub fn nearest(&self, query: &Point, k: usize) -> Vec<Neighbor> {
        self.search(query, k, f64::INFINITY, None)
    }

    /// Like [`nearest`](Self::nearest) but skips `exclude` and only reports
    /// points within `max_dist` (inclusive). May return fewer than `k`.
    pub fn search(&self, query: &Point, k: usize, max_dist: f64, exclude: Option<usize>) -> Vec<Neighbor> {
        let mut best = Vec::with_capacity(k + 1);
        if k == 0 || self.n_live == 0 {
            return best;
        }
        let bound = if max_dist.is_finite() {
            max_dist * max_dist
        } else {
            f64::INFINITY
        };
        let mut search = Search {
            tree: self,
            query,
            k,
            bound,
            exclude,
            best: &mut best,
        };
        search.visit(0, self.order.len());
        best
    }
}

struct Search<'a> {
    tree: &'a KdTree,
    query: &'a Point,
    k: usize,
    bound: f64,
    exclude: Option<usize>,
    best: &'a mut Vec<Neighbor>,
}

impl Search<'_> {
    #[inline]
    fn worst(&self) -> f64 {
        if self.best.len() < self.k {
            self.bound
        } else {
            self.best[self.k - 1].sq_dist
        }
    }

    fn offer(&mut self, index: usize, sq_dist: f64) {
        if sq_dist > self.bound {
            return;
        }
        if self.best.len() == self.k {
            let last = self.best[self.k - 1];
            if !(sq_dist < last.sq_dist || (sq_dist == last.sq_dist && index < last.index)) {
                return;
            }
            self.best.pop();
        }
        let pos = self.best.partition_point(|n| n.key_lt(sq_dist, index));
        self.best.insert(pos, Neighbor { index, sq_dist });
    }

    fn visit(&mut self, lo: usize, hi: usize) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let tree = self.tree;
        if tree.live_count[mid] == 0 {
            return;
        }
        let id = tree.order[mid] as usize;
        let p = &tree.points[id];
        if tree.alive[id] && Some(id) != self.exclude {
            self.offer(id, squared_distance(p, self.query));
        }
        if hi - lo == 1 {
            return;
        }
        let dim = tree.split_dim[mid] as usize;
        let diff = self.query[dim] - p[dim];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.visit(near.0, near.1);
        // equality keeps equidistant candidates with lower ids reachable
        if diff * diff <= self.worst() {
            self.visit(far.0, far.1);
        }
    }
}
