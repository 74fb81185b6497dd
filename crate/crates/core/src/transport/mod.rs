//! Wasserstein-1 between histograms as a transportation problem.
//!
//! Given probability vectors `p`, `q` and a ground cost `C` (Euclidean
//! distance between bin centers), the exact transport cost
//! `min ⟨C, M⟩ s.t. M1 = p, Mᵀ1 = q, M ≥ 0` is solved by a primal network
//! simplex ([`solve_lp`]), and its entropy-regularised relaxation by Sinkhorn
//! scaling ([`sinkhorn`]).

mod network_simplex;
mod sinkhorn;

use std::io::Write;
use std::path::Path;

pub use network_simplex::{solve_lp, DualPotentials, LpSolution};
pub use sinkhorn::{sinkhorn, SinkhornConfig, SinkhornSolution};

use crate::error::{Error, Result};
use crate::histogram::{bin_centers, to_probability_vector, HistogramGrid};
use crate::numeric::{compensated_sum, squared_distance};

/// Cost matrices with more entries than this are refused.
pub const DEFAULT_COST_ENTRY_LIMIT: u64 = 100_000_000;

/// Allowed deviation of the marginal sums from 1.
pub const MARGINAL_TOLERANCE: f64 = 1e-6;

/// Fails with a resource error when a `rows × cols` cost matrix would exceed `limit` entries.
pub fn check_cost_budget(rows: u64, cols: u64, limit: u64) -> Result<()> {
    let requested = rows as u128 * cols as u128;
    if requested > limit as u128 {
        return Err(Error::Resource {
            what: "transport cost matrix entries",
            requested,
            limit: limit as u128,
        });
    }
    Ok(())
}

/// Row-major matrix of Euclidean distances between all pairs of `centers`.
pub fn cost_matrix_from_centers(centers: &[Vec<f64>]) -> Result<Vec<f64>> {
    cost_matrix_with_limit(centers, DEFAULT_COST_ENTRY_LIMIT)
}

pub fn cost_matrix_with_limit(centers: &[Vec<f64>], limit: u64) -> Result<Vec<f64>> {
    let n = centers.len();
    if n == 0 {
        return Err(Error::param("cost matrix needs at least one center"));
    }
    check_cost_budget(n as u64, n as u64, limit)?;
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = squared_distance(&centers[i], &centers[j]).sqrt();
            cost[i * n + j] = c;
            cost[j * n + i] = c;
        }
    }
    Ok(cost)
}

/// The discrete metric `1 − δ_ij` on `n` points.
pub fn discrete_metric_cost(n: usize) -> Vec<f64> {
    (0..n * n)
        .map(|k| if k / n == k % n { 0.0 } else { 1.0 })
        .collect()
}

/// Marginals `p` (rows) and `q` (columns) with a row-major ground cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    p: Vec<f64>,
    q: Vec<f64>,
    cost: Vec<f64>,
}

impl TransportProblem {
    pub fn new(p: Vec<f64>, q: Vec<f64>, cost: Vec<f64>) -> Result<Self> {
        if p.is_empty() || q.is_empty() {
            return Err(Error::param("marginals must be nonempty"));
        }
        if cost.len() != p.len() * q.len() {
            return Err(Error::param(format!(
                "cost has {} entries, expected {}x{}",
                cost.len(),
                p.len(),
                q.len()
            )));
        }
        for (name, v) in [("p", &p), ("q", &q), ("cost", &cost)] {
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::param(format!(
                    "{name} must be finite and nonnegative"
                )));
            }
        }
        let (sp, sq) = (compensated_sum(p.iter().copied()), compensated_sum(q.iter().copied()));
        if (sp - 1.0).abs() > MARGINAL_TOLERANCE || (sq - 1.0).abs() > MARGINAL_TOLERANCE {
            return Err(Error::param(format!(
                "marginals must sum to 1, got {sp} and {sq}"
            )));
        }
        Ok(Self { p, q, cost })
    }

    /// Transport problem between two histograms on one grid, with the
    /// Euclidean distance between bin centers as cost. The cost-size guard
    /// is checked before anything of size `K^d` is allocated.
    pub fn from_histograms(p: &HistogramGrid, q: &HistogramGrid, limit: u64) -> Result<Self> {
        if !p.same_grid(q) {
            return Err(Error::param("histograms are not on the same grid"));
        }
        let n = p.num_bins();
        check_cost_budget(n, n, limit)?;
        let cost = cost_matrix_with_limit(&bin_centers(p), limit)?;
        Self::new(to_probability_vector(p)?, to_probability_vector(q)?, cost)
    }

    pub fn rows(&self) -> usize {
        self.p.len()
    }

    pub fn cols(&self) -> usize {
        self.q.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn cost_at(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.q.len() + j]
    }

    /// The same problem with the roles of `p` and `q` exchanged (cost transposed).
    pub fn transposed(&self) -> Self {
        let (n, m) = (self.rows(), self.cols());
        let cost = (0..m * n).map(|k| self.cost_at(k % n, k / n)).collect();
        Self {
            p: self.q.clone(),
            q: self.p.clone(),
            cost,
        }
    }
}

/// A coupling `M` and its transport cost `⟨C, M⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    plan: Vec<f64>,
    pub objective: f64,
}

impl TransportPlan {
    pub(crate) fn new(tp: &TransportProblem, plan: Vec<f64>) -> Self {
        let objective = compensated_sum(plan.iter().zip(&tp.cost).map(|(m, c)| m * c));
        Self {
            rows: tp.rows(),
            cols: tp.cols(),
            plan,
            objective,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.plan
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.plan
            .chunks_exact(self.cols)
            .map(|r| compensated_sum(r.iter().copied()))
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| compensated_sum((0..self.rows).map(|i| self.mass(i, j))))
            .collect()
    }

    /// L∞ distance of the plan's marginals from those of `tp`.
    pub fn max_marginal_violation(&self, tp: &TransportProblem) -> f64 {
        let (rows, cols) = (self.row_sums(), self.col_sums());
        let dr = rows.iter().zip(tp.p()).map(|(a, b)| (a - b).abs());
        let dc = cols.iter().zip(tp.q()).map(|(a, b)| (a - b).abs());
        dr.chain(dc).fold(0.0, f64::max)
    }

    /// Writes `(i, j, mass)` for every nonzero entry as CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j", "mass"])?;
        for (k, &m) in self.plan.iter().enumerate() {
            if m > 0.0 {
                w.write_record([
                    (k / self.cols).to_string(),
                    (k % self.cols).to_string(),
                    format!("{m:.17e}"),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<plan csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
