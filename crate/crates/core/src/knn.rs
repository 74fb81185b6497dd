//! KL divergence from k-nearest-neighbour distances.
//!
//! For samples `x` from `P` and `y` from `Q`, both of size `N` in `d`
//! dimensions,
//!
//! ```text
//! D(P‖Q) ≈ (d/N) Σ_i ln(s_k(x_i) / r_k(x_i)) + ln(N / (N − 1))
//! ```
//!
//! where `r_k(x_i)` is the distance from `x_i` to its k-th nearest neighbour
//! among the other points of `x` and `s_k(x_i)` the distance to its k-th
//! nearest neighbour in `y`. Neighbour search is exact: a k-d tree for
//! `d ≤ KD_TREE_MAX_DIM`, a linear scan above. Both return the same
//! distances bit for bit since they evaluate the same squared distances and
//! only the k-th smallest value is used (ties between neighbours at equal
//! distance cannot change it).

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, squared_distance};
use crate::scenarios::SampleMatrix;

/// Largest dimension for which the k-d tree is used.
pub const KD_TREE_MAX_DIM: usize = 10;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnConfig {
    /// Rank of the neighbour whose distance is used.
    pub k: usize,
    /// Half-width of the uniform tie-breaking perturbation, relative to the
    /// largest absolute coordinate of the data. Zero disables it.
    pub jitter: f64,
    pub jitter_seed: u64,
}

impl KnnConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            jitter: 0.0,
            jitter_seed: 0,
        }
    }

    pub fn with_jitter(self, jitter: f64, seed: u64) -> Self {
        Self {
            jitter,
            jitter_seed: seed,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    /// k-d tree up to [`KD_TREE_MAX_DIM`] dimensions, linear scan above.
    Auto,
    KdTree,
    BruteForce,
}

/// k-NN estimate of `KL(P‖Q)` in nats. May be negative for small `N`.
pub fn kl_knn(x: &SampleMatrix, y: &SampleMatrix, cfg: &KnnConfig) -> Result<f64> {
    kl_knn_with(x, y, cfg, SearchMethod::Auto)
}

pub fn kl_knn_with(
    x: &SampleMatrix,
    y: &SampleMatrix,
    cfg: &KnnConfig,
    method: SearchMethod,
) -> Result<f64> {
    if x.d() != y.d() {
        return Err(Error::param(format!(
            "dimension mismatch: {} vs {}",
            x.d(),
            y.d()
        )));
    }
    if x.n() != y.n() {
        return Err(Error::param(format!(
            "sample sizes must match, got {} and {}",
            x.n(),
            y.n()
        )));
    }
    let n = x.n();
    if cfg.k == 0 || cfg.k >= n {
        return Err(Error::param(format!(
            "k must satisfy 1 <= k < N, got k={} with N={n}",
            cfg.k
        )));
    }
    if !(cfg.jitter.is_finite() && cfg.jitter >= 0.0) {
        return Err(Error::param("jitter must be finite and nonnegative"));
    }

    let (x, y) = if cfg.jitter > 0.0 {
        let (x, y) = jittered(x, y, cfg.jitter, cfg.jitter_seed)?;
        (Cow::Owned(x), Cow::Owned(y))
    } else {
        (Cow::Borrowed(x), Cow::Borrowed(y))
    };
    let r2 = kth_neighbor_sq_distances(&x, &x, cfg.k, true, method);
    let s2 = kth_neighbor_sq_distances(&y, &x, cfg.k, false, method);

    for i in 0..n {
        if r2[i] == 0.0 {
            return Err(Error::Degenerate(format!(
                "x[{i}] has {} exact duplicate(s) in x, k-th neighbour distance is 0",
                cfg.k
            )));
        }
        if s2[i] == 0.0 {
            return Err(Error::Degenerate(format!(
                "x[{i}] coincides with {} point(s) of y, k-th neighbour distance is 0",
                cfg.k
            )));
        }
    }
    // ln(s/r) = ln(s²/r²)/2
    let sum = compensated_sum((0..n).map(|i| 0.5 * (s2[i] / r2[i]).ln()));
    let nf = n as f64;
    Ok(x.d() as f64 / nf * sum + (nf / (nf - 1.0)).ln())
}

fn jittered(
    x: &SampleMatrix,
    y: &SampleMatrix,
    jitter: f64,
    seed: u64,
) -> Result<(SampleMatrix, SampleMatrix)> {
    let scale = x
        .as_slice()
        .iter()
        .chain(y.as_slice())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let half = jitter * if scale > 0.0 { scale } else { 1.0 };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut shake = |s: &SampleMatrix| {
        let data = s
            .as_slice()
            .iter()
            .map(|v| v + rng.random_range(-half..=half))
            .collect();
        SampleMatrix::new(s.n(), s.d(), data)
    };
    let xj = shake(x)?;
    Ok((xj, shake(y)?))
}

/// Squared distance from every row of `queries` to its `k`-th nearest row of
/// `points`. With `exclude_self`, `queries` must be `points` and row `i` is
/// not its own neighbour.
pub fn kth_neighbor_sq_distances(
    points: &SampleMatrix,
    queries: &SampleMatrix,
    k: usize,
    exclude_self: bool,
    method: SearchMethod,
) -> Vec<f64> {
    assert!(k >= 1 && k + exclude_self as usize <= points.n());
    let use_tree = match method {
        SearchMethod::Auto => points.d() <= KD_TREE_MAX_DIM,
        SearchMethod::KdTree => true,
        SearchMethod::BruteForce => false,
    };
    let skip = |i: usize| if exclude_self { i } else { usize::MAX };
    if use_tree {
        let tree = KdTree::build(points);
        (0..queries.n())
            .into_par_iter()
            .map_init(
                || KBest::new(k),
                |best, i| {
                    best.clear();
                    tree.search(queries.row(i), skip(i), best);
                    best.worst()
                },
            )
            .collect()
    } else {
        (0..queries.n())
            .into_par_iter()
            .map_init(
                || KBest::new(k),
                |best, i| {
                    best.clear();
                    let q = queries.row(i);
                    for (j, p) in points.rows().enumerate() {
                        if j != skip(i) {
                            best.offer(squared_distance(q, p));
                        }
                    }
                    best.worst()
                },
            )
            .collect()
    }
}

/// The `k` smallest values seen so far, sorted ascending.
struct KBest {
    k: usize,
    vals: Vec<f64>,
}

impl KBest {
    fn new(k: usize) -> Self {
        Self {
            k,
            vals: Vec::with_capacity(k + 1),
        }
    }

    fn clear(&mut self) {
        self.vals.clear();
    }

    /// Current pruning radius: infinite until `k` values are held.
    #[inline]
    fn bound(&self) -> f64 {
        if self.vals.len() < self.k {
            f64::INFINITY
        } else {
            self.vals[self.k - 1]
        }
    }

    #[inline]
    fn offer(&mut self, d: f64) {
        if d >= self.bound() {
            return;
        }
        let pos = self.vals.partition_point(|&v| v <= d);
        self.vals.insert(pos, d);
        self.vals.truncate(self.k);
    }

    fn worst(&self) -> f64 {
        self.vals[self.k - 1]
    }
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Exact k-d tree with median splits on the widest dimension.
struct KdTree {
    d: usize,
    /// Original row index of each stored point.
    index: Vec<usize>,
    /// Coordinates in tree order.
    coords: Vec<f64>,
    nodes: Vec<Node>,
}

impl KdTree {
    fn build(points: &SampleMatrix) -> Self {
        let d = points.d();
        let mut index: Vec<usize> = (0..points.n()).collect();
        let mut nodes = Vec::new();
        Self::build_node(points, &mut index, 0, &mut nodes);
        let mut coords = Vec::with_capacity(points.n() * d);
        for &i in &index {
            coords.extend_from_slice(points.row(i));
        }
        Self {
            d,
            index,
            coords,
            nodes,
        }
    }

    fn build_node(
        points: &SampleMatrix,
        idx: &mut [usize],
        offset: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let id = nodes.len();
        if idx.len() <= LEAF_SIZE {
            nodes.push(Node::Leaf {
                start: offset,
                end: offset + idx.len(),
            });
            return id;
        }
        let dim = (0..points.d())
            .map(|c| {
                let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = points.row(i)[c];
                    (lo.min(v), hi.max(v))
                });
                (c, hi - lo)
            })
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0;
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            points.row(a)[dim].total_cmp(&points.row(b)[dim])
        });
        let value = points.row(idx[mid])[dim];
        nodes.push(Node::Leaf { start: 0, end: 0 });
        let (lo, hi) = idx.split_at_mut(mid);
        let left = Self::build_node(points, lo, offset, nodes);
        let right = Self::build_node(points, hi, offset + mid, nodes);
        nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    /// Points left of a split have coordinate `≤ value`, points right `≥ value`.
    fn search(&self, q: &[f64], skip: usize, best: &mut KBest) {
        self.search_node(0, q, skip, best);
    }

    fn search_node(&self, node: usize, q: &[f64], skip: usize, best: &mut KBest) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for t in start..end {
                    if self.index[t] != skip {
                        best.offer(squared_distance(q, &self.coords[t * self.d..(t + 1) * self.d]));
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search_node(near, q, skip, best);
                if diff * diff <= best.bound() {
                    self.search_node(far, q, skip, best);
                }
            }
        }
    }
}
