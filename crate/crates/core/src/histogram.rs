//! Equal-width multidimensional histograms.
//!
//! A [`HistogramGrid`] splits each of the `d` dimensions of a [`BinRange`]
//! into `K` equal-width bins, giving `K^d` bins indexed row-major (the first
//! dimension is the most significant digit). Histograms that are compared bin
//! by bin must be built on the same range, normally [`joint_range`] of both
//! sample sets.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scenarios::SampleMatrix;

/// Relative margin added at both ends of a pooled range.
pub const RANGE_MARGIN: f64 = 1e-9;

/// Per-dimension `(lo, hi)` bounds of a histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct BinRange {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BinRange {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::param("bin range needs at least one dimension"));
        }
        for (dim, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::param(format!(
                    "bin range for dimension {dim} must satisfy lo < hi, got ({lo}, {hi})"
                )));
            }
        }
        let (lo, hi) = bounds.into_iter().unzip();
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn bounds(&self, dim: usize) -> (f64, f64) {
        (self.lo[dim], self.hi[dim])
    }
}

/// Pooled per-dimension min/max of both sample sets, widened by
/// [`RANGE_MARGIN`] of the span at each end.
pub fn joint_range(a: &SampleMatrix, b: &SampleMatrix) -> Result<BinRange> {
    if a.d() != b.d() {
        return Err(Error::param(format!(
            "dimension mismatch: {} vs {}",
            a.d(),
            b.d()
        )));
    }
    let d = a.d();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in a.rows().chain(b.rows()) {
        for j in 0..d {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    let bounds = lo
        .into_iter()
        .zip(hi)
        .map(|(lo, hi)| {
            let span = hi - lo;
            if span > 0.0 {
                let margin = RANGE_MARGIN * span;
                (lo - margin, hi + margin)
            } else {
                // all samples equal in this dimension
                (lo - 0.5, hi + 0.5)
            }
        })
        .collect();
    BinRange::new(bounds)
}

/// Storage limits for histogram construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinBudget {
    /// Grids with at most this many bins use a dense count array; larger ones
    /// use a sparse map keyed by flat bin index.
    pub dense_limit: u64,
    /// Grids with more bins than this are refused.
    pub max_bins: u64,
}

impl Default for BinBudget {
    fn default() -> Self {
        Self {
            dense_limit: 20_000_000,
            max_bins: 1 << 48,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum BinCounts {
    Dense(Vec<u64>),
    Sparse(BTreeMap<u64, u64>),
}

/// Bin counts of `N` samples on an equal-width grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramGrid {
    bins: usize,
    edges: Vec<Vec<f64>>,
    counts: BinCounts,
    total: u64,
}

struct GridGeometry {
    lo: Vec<f64>,
    width: Vec<f64>,
    bins: usize,
}

impl GridGeometry {
    fn flat_index(&self, row: &[f64]) -> u64 {
        let k = self.bins as u64;
        let mut flat = 0u64;
        for (j, &x) in row.iter().enumerate() {
            let t = ((x - self.lo[j]) / self.width[j]).floor();
            // out-of-range samples are clipped into the boundary bins
            let idx = if t <= 0.0 {
                0
            } else {
                (t as u64).min(k - 1)
            };
            flat = flat * k + idx;
        }
        flat
    }
}

fn checked_bin_count(k: usize, d: usize, budget: &BinBudget) -> Result<u64> {
    let requested = (k as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if requested > budget.max_bins as u128 {
        return Err(Error::Resource {
            what: "histogram bins",
            requested,
            limit: budget.max_bins as u128,
        });
    }
    Ok(requested as u64)
}

/// Histogram of `samples` with `k` bins per dimension over `range`, using the
/// default [`BinBudget`].
pub fn build_histogram(samples: &SampleMatrix, k: usize, range: &BinRange) -> Result<HistogramGrid> {
    build_histogram_with_budget(samples, k, range, &BinBudget::default())
}

pub fn build_histogram_with_budget(
    samples: &SampleMatrix,
    k: usize,
    range: &BinRange,
    budget: &BinBudget,
) -> Result<HistogramGrid> {
    if k == 0 {
        return Err(Error::param("bins per dimension must be ≥ 1"));
    }
    let d = range.dim();
    if samples.d() != d {
        return Err(Error::param(format!(
            "samples have dimension {}, range has {d}",
            samples.d()
        )));
    }
    let n_bins = checked_bin_count(k, d, budget)?;
    let geometry = GridGeometry {
        lo: range.lo.clone(),
        width: (0..d)
            .map(|j| (range.hi[j] - range.lo[j]) / k as f64)
            .collect(),
        bins: k,
    };
    let edges = (0..d)
        .map(|j| {
            let mut e: Vec<f64> = (0..k)
                .map(|i| range.lo[j] + i as f64 * geometry.width[j])
                .collect();
            e.push(range.hi[j]);
            e
        })
        .collect();

    let data = samples.as_slice();
    let rows_per_chunk = samples.n().div_ceil(rayon::current_num_threads()).max(1);
    let chunks = data.par_chunks(rows_per_chunk * d);
    let counts = if n_bins <= budget.dense_limit {
        let partial: Vec<Vec<u64>> = chunks
            .map(|chunk| {
                let mut c = vec![0u64; n_bins as usize];
                for row in chunk.chunks_exact(d) {
                    c[geometry.flat_index(row) as usize] += 1;
                }
                c
            })
            .collect();
        let mut merged = vec![0u64; n_bins as usize];
        for c in partial {
            merged.iter_mut().zip(c).for_each(|(m, v)| *m += v);
        }
        BinCounts::Dense(merged)
    } else {
        let partial: Vec<BTreeMap<u64, u64>> = chunks
            .map(|chunk| {
                let mut c = BTreeMap::new();
                for row in chunk.chunks_exact(d) {
                    *c.entry(geometry.flat_index(row)).or_insert(0) += 1;
                }
                c
            })
            .collect();
        let mut merged = BTreeMap::new();
        for c in partial {
            for (idx, v) in c {
                *merged.entry(idx).or_insert(0) += v;
            }
        }
        BinCounts::Sparse(merged)
    };

    Ok(HistogramGrid {
        bins: k,
        edges,
        counts,
        total: samples.n() as u64,
    })
}

impl HistogramGrid {
    pub fn dim(&self) -> usize {
        self.edges.len()
    }

    /// Bins per dimension `K`.
    pub fn bins_per_dim(&self) -> usize {
        self.bins
    }

    /// Total number of bins `K^d`.
    pub fn num_bins(&self) -> u64 {
        (self.bins as u64).pow(self.dim() as u32)
    }

    pub fn edges(&self, dim: usize) -> &[f64] {
        &self.edges[dim]
    }

    /// Number of samples `N`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.counts, BinCounts::Dense(_))
    }

    /// The dense count array, if this grid is stored densely.
    pub fn dense_counts(&self) -> Option<&[u64]> {
        match &self.counts {
            BinCounts::Dense(c) => Some(c),
            BinCounts::Sparse(_) => None,
        }
    }

    pub fn count(&self, flat_index: u64) -> u64 {
        match &self.counts {
            BinCounts::Dense(c) => c.get(flat_index as usize).copied().unwrap_or(0),
            BinCounts::Sparse(m) => m.get(&flat_index).copied().unwrap_or(0),
        }
    }

    /// `(flat index, count)` of every non-empty bin, in index order.
    pub fn occupied(&self) -> Vec<(u64, u64)> {
        match &self.counts {
            BinCounts::Dense(c) => c
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0)
                .map(|(i, &v)| (i as u64, v))
                .collect(),
            BinCounts::Sparse(m) => m.iter().map(|(&i, &v)| (i, v)).collect(),
        }
    }

    /// Row-major multi-index of a flat bin index.
    pub fn multi_index(&self, mut flat: u64) -> Vec<usize> {
        let k = self.bins as u64;
        let mut idx = vec![0usize; self.dim()];
        for slot in idx.iter_mut().rev() {
            *slot = (flat % k) as usize;
            flat /= k;
        }
        idx
    }

    /// True when both grids have the same dimension, bin count and edges.
    pub fn same_grid(&self, other: &HistogramGrid) -> bool {
        self.bins == other.bins && self.edges == other.edges
    }

    /// Lebesgue measure of one bin (all bins have equal volume).
    pub fn bin_volume(&self) -> f64 {
        self.edges.iter().map(|e| e[1] - e[0]).product()
    }

    /// Count-wise sum of two histograms on the same grid.
    pub fn merge(&self, other: &HistogramGrid) -> Result<HistogramGrid> {
        if !self.same_grid(other) {
            return Err(Error::param("cannot merge histograms on different grids"));
        }
        let counts = match (&self.counts, &other.counts) {
            (BinCounts::Dense(a), BinCounts::Dense(b)) => {
                BinCounts::Dense(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            _ => {
                let mut m: BTreeMap<u64, u64> = self.occupied().into_iter().collect();
                for (i, v) in other.occupied() {
                    *m.entry(i).or_insert(0) += v;
                }
                if self.is_dense() {
                    let mut c = vec![0u64; self.num_bins() as usize];
                    m.into_iter().for_each(|(i, v)| c[i as usize] = v);
                    BinCounts::Dense(c)
                } else {
                    BinCounts::Sparse(m)
                }
            }
        };
        Ok(HistogramGrid {
            bins: self.bins,
            edges: self.edges.clone(),
            counts,
            total: self.total + other.total,
        })
    }

    /// Writes `(multi-index, count)` for every non-empty bin as CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("i{j}")).collect();
        header.push("count".into());
        w.write_record(&header)?;
        for (flat, count) in self.occupied() {
            let mut rec: Vec<String> = self
                .multi_index(flat)
                .into_iter()
                .map(|i| i.to_string())
                .collect();
            rec.push(count.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<histogram csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Midpoint of every bin, in the same row-major order as the counts.
pub fn bin_centers(g: &HistogramGrid) -> Vec<Vec<f64>> {
    let mids: Vec<Vec<f64>> = g
        .edges
        .iter()
        .map(|e| e.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
        .collect();
    (0..g.num_bins())
        .map(|flat| {
            g.multi_index(flat)
                .into_iter()
                .enumerate()
                .map(|(j, i)| mids[j][i])
                .collect()
        })
        .collect()
}

/// Bin probabilities `n_i / N` as a dense vector.
pub fn to_probability_vector(g: &HistogramGrid) -> Result<Vec<f64>> {
    if g.total == 0 {
        return Err(Error::param("histogram holds no samples"));
    }
    let n = g.total as f64;
    match &g.counts {
        BinCounts::Dense(c) => Ok(c.iter().map(|&v| v as f64 / n).collect()),
        BinCounts::Sparse(_) => Err(Error::Resource {
            what: "dense probability vector",
            requested: g.num_bins() as u128,
            limit: BinBudget::default().dense_limit as u128,
        }),
    }
}

/// Piecewise-constant density value `n_i / (N · λ(B_i))` of every bin.
pub fn to_density(g: &HistogramGrid) -> Result<Vec<f64>> {
    let vol = g.bin_volume();
    Ok(to_probability_vector(g)?.into_iter().map(|p| p / vol).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_d(xs: &[f64]) -> SampleMatrix {
        SampleMatrix::new(xs.len(), 1, xs.to_vec()).unwrap()
    }

    fn unit(d: usize) -> BinRange {
        BinRange::new(vec![(0.0, 1.0); d]).unwrap()
    }

    #[test]
    fn joint_range_of_identical_sets() {
        let a = one_d(&[0.0, 1.0]);
        let r = joint_range(&a, &a).unwrap();
        assert_eq!(r.bounds(0), (-1e-9, 1.0 + 1e-9));
    }

    #[test]
    fn joint_range_pools_both_sets() {
        let r = joint_range(&one_d(&[0.0]), &one_d(&[2.0])).unwrap();
        let (lo, hi) = r.bounds(0);
        assert!((lo - 0.0).abs() < 1e-8 && (hi - 2.0).abs() < 1e-8);
        assert!(lo < 0.0 && hi > 2.0);
        let twod = SampleMatrix::from_rows(&[[0.0, 0.0]]).unwrap();
        assert!(joint_range(&one_d(&[0.0]), &twod).is_err());
    }

    #[test]
    fn joint_range_of_constant_samples_is_valid() {
        let r = joint_range(&one_d(&[3.0, 3.0]), &one_d(&[3.0])).unwrap();
        let (lo, hi) = r.bounds(0);
        assert!(lo < 3.0 && hi > 3.0);
    }

    #[test]
    fn joint_range_covers_fresh_share_draws() {
        use crate::scenarios::{sample_joint, sample_product_of_marginals, ScenarioKind, ScenarioSpec};
        let scn = ScenarioSpec::standard(ScenarioKind::Share, 1);
        let a = sample_joint(&scn, 1_000_000).unwrap();
        let b = sample_product_of_marginals(&scn, 1_000_000).unwrap();
        let r = joint_range(&a, &b).unwrap();
        let fresh = sample_joint(&scn.with_seed(2), 1_000_000).unwrap();
        let inside = fresh
            .rows()
            .filter(|row| {
                row.iter().enumerate().all(|(j, &x)| {
                    let (lo, hi) = r.bounds(j);
                    lo <= x && x <= hi
                })
            })
            .count();
        assert!(inside as f64 / 1e6 >= 0.9999, "{inside}");
    }

    #[test]
    fn hand_binning() {
        let g = build_histogram(&one_d(&[0.1, 0.9]), 2, &unit(1)).unwrap();
        assert_eq!(g.dense_counts().unwrap(), &[1, 1]);
        let g = build_histogram(&one_d(&[0.1, 0.2, 0.3, 0.9]), 2, &unit(1)).unwrap();
        assert_eq!(g.dense_counts().unwrap(), &[3, 1]);
        assert_eq!(g.edges(0), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn out_of_range_samples_are_clipped() {
        let g = build_histogram(&one_d(&[-5.0, 0.7, 1.0, 9.0]), 2, &unit(1)).unwrap();
        assert_eq!(g.dense_counts().unwrap(), &[1, 3]);
        assert_eq!(g.total(), 4);
    }

    #[test]
    fn share_grid_at_24_bins() {
        use crate::scenarios::{sample_joint, ScenarioKind, ScenarioSpec};
        let s = sample_joint(&ScenarioSpec::standard(ScenarioKind::Share, 3), 10_000).unwrap();
        let g = build_histogram(&s, 24, &joint_range(&s, &s).unwrap()).unwrap();
        assert_eq!(g.num_bins(), 576);
        assert_eq!(g.dense_counts().unwrap().iter().sum::<u64>(), 10_000);
    }

    #[test]
    fn budget_errors_and_sparse_storage() {
        let s = SampleMatrix::from_rows(&[[0.1, 0.1], [0.9, 0.9], [0.9, 0.8]]).unwrap();
        let tight = BinBudget {
            dense_limit: 4,
            max_bins: 100,
        };
        assert!(matches!(
            build_histogram_with_budget(&s, 11, &unit(2), &tight),
            Err(Error::Resource { .. })
        ));
        let sparse = build_histogram_with_budget(&s, 10, &unit(2), &tight).unwrap();
        let dense = build_histogram(&s, 10, &unit(2)).unwrap();
        assert!(!sparse.is_dense() && dense.is_dense());
        assert_eq!(sparse.occupied(), dense.occupied());
        assert_eq!(sparse.occupied(), vec![(11, 1), (98, 1), (99, 1)]);
        assert!(to_probability_vector(&sparse).is_err());
        assert!(build_histogram(&s, 0, &unit(2)).is_err());
    }

    #[test]
    fn centers() {
        let g = build_histogram(&one_d(&[0.5]), 2, &unit(1)).unwrap();
        assert_eq!(bin_centers(&g), vec![vec![0.25], vec![0.75]]);
        let s = SampleMatrix::from_rows(&[[0.5, 0.5]]).unwrap();
        let g = build_histogram(&s, 2, &unit(2)).unwrap();
        assert_eq!(
            bin_centers(&g),
            vec![
                vec![0.25, 0.25],
                vec![0.25, 0.75],
                vec![0.75, 0.25],
                vec![0.75, 0.75]
            ]
        );
        let r = BinRange::new(vec![(-2.0, 2.0)]).unwrap();
        let g = build_histogram(&one_d(&[0.0]), 4, &r).unwrap();
        assert_eq!(
            bin_centers(&g),
            vec![vec![-1.5], vec![-0.5], vec![0.5], vec![1.5]]
        );
    }

    #[test]
    fn probability_vectors() {
        let g = build_histogram(&one_d(&[0.1, 0.9]), 2, &unit(1)).unwrap();
        assert_eq!(to_probability_vector(&g).unwrap(), vec![0.5, 0.5]);
        let g = build_histogram(&one_d(&[0.1, 0.2, 0.3, 0.9]), 2, &unit(1)).unwrap();
        assert_eq!(to_probability_vector(&g).unwrap(), vec![0.75, 0.25]);
        let g = build_histogram(&one_d(&[0.1, 0.2]), 3, &unit(1)).unwrap();
        assert_eq!(to_probability_vector(&g).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn csv_dump_lists_occupied_bins() {
        let s = SampleMatrix::from_rows(&[[0.1, 0.9], [0.1, 0.9], [0.6, 0.2]]).unwrap();
        let g = build_histogram(&s, 2, &unit(2)).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "i0,i1,count\n0,1,2\n1,0,1\n");
    }

    fn samples_2d() -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec([-3.0..3.0f64, -3.0..3.0f64], 1..200)
    }

    proptest! {
        #[test]
        fn row_permutation_leaves_counts_unchanged(rows in samples_2d(), k in 1usize..9) {
            let a = SampleMatrix::from_rows(&rows).unwrap();
            let mut rev = rows.clone();
            rev.reverse();
            let b = SampleMatrix::from_rows(&rev).unwrap();
            let r = joint_range(&a, &a).unwrap();
            prop_assert_eq!(build_histogram(&a, k, &r).unwrap(), build_histogram(&b, k, &r).unwrap());
        }

        #[test]
        fn merge_equals_histogram_of_concatenation(x in samples_2d(), y in samples_2d(), k in 1usize..9) {
            let a = SampleMatrix::from_rows(&x).unwrap();
            let b = SampleMatrix::from_rows(&y).unwrap();
            let both: Vec<[f64; 2]> = x.iter().chain(&y).copied().collect();
            let c = SampleMatrix::from_rows(&both).unwrap();
            let r = joint_range(&a, &b).unwrap();
            let merged = build_histogram(&a, k, &r).unwrap().merge(&build_histogram(&b, k, &r).unwrap()).unwrap();
            prop_assert_eq!(merged, build_histogram(&c, k, &r).unwrap());
        }

        #[test]
        fn density_integrates_to_one(x in samples_2d(), k in 1usize..12) {
            let a = SampleMatrix::from_rows(&x).unwrap();
            let g = build_histogram(&a, k, &joint_range(&a, &a).unwrap()).unwrap();
            let integral: f64 = to_density(&g).unwrap().iter().map(|v| v * g.bin_volume()).sum();
            prop_assert!((integral - 1.0).abs() < 1e-12);
            prop_assert_eq!(g.dense_counts().unwrap().iter().sum::<u64>(), a.n() as u64);
        }
    }
}
