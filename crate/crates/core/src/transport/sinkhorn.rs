//! Entropy-regularised transport by alternating diagonal scaling.
//!
//! The plan has the form `M = diag(u)·exp(−λC)·diag(v)`. When `λ·max C` is
//! small the kernel is used directly. Otherwise `exp(−λC)` under- or
//! overflows long before convergence, and the solver switches to a
//! log-stabilised variant: the scalings are periodically absorbed into dual
//! potentials `f`, `g` so that `M_ij = a_i · exp(λ(f_i + g_j − C_ij)) · b_j`
//! with `a`, `b` near one, `λ` is raised geometrically from a
//! well-conditioned value, and kernel entries below `e^-60` are dropped
//! while iterating. The returned plan is always evaluated densely.
//!
//! The scaled plan meets the marginals only up to the stopping tolerance, and
//! an infeasible plan can cost less than the exact optimum. It is therefore
//! rounded onto the transportation polytope before the objective is taken:
//! rows and columns are scaled down to their targets and the remaining mass
//! is added as the rank-one correction `err_r · err_cᵀ / ‖err_r‖₁`. The
//! change is bounded by the violation, and the reported cost is always that
//! of a feasible plan.

use super::{TransportPlan, TransportProblem};
use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;

/// Above this value of `λ·max C` the direct kernel is not used.
const DIRECT_EXPONENT_LIMIT: f64 = 200.0;
/// Log-kernel entries below this are skipped while scaling.
const TRUNCATION: f64 = -60.0;
/// Scalings outside `[1/ABSORB, ABSORB]` are folded into the potentials.
const ABSORB: f64 = 1e20;
/// `λ` of the first stage satisfies `λ·max C ≤ FIRST_STAGE_EXPONENT`.
const FIRST_STAGE_EXPONENT: f64 = 16.0;
const STAGE_FACTOR: f64 = 3.0;
/// Marginal tolerance of the intermediate stages.
const STAGE_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Weight of the transport cost relative to the entropy term.
    pub lambda: f64,
    /// Stop once the L∞ marginal violation is at most this.
    pub tol: f64,
    pub max_iter: u64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            lambda: 700.0,
            tol: 1e-9,
            max_iter: 100_000,
        }
    }
}

impl SinkhornConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    /// The regularised plan; `plan.objective` is `⟨C, M⟩` without the entropy term.
    pub plan: TransportPlan,
    pub iterations: u64,
    /// L∞ marginal violation of the scaled plan before rounding.
    pub violation: f64,
    pub converged: bool,
    /// Whether the log-stabilised solver was used.
    pub log_domain: bool,
}

/// Sinkhorn scaling on the support of `p` and `q`; zero-mass rows and columns
/// get zero mass in the returned plan.
pub fn sinkhorn(tp: &TransportProblem, cfg: &SinkhornConfig) -> Result<SinkhornSolution> {
    if !(cfg.lambda.is_finite() && cfg.lambda > 0.0) {
        return Err(Error::param(format!("lambda must be positive, got {}", cfg.lambda)));
    }
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(Error::param("tol must be positive and max_iter at least 1"));
    }
    let r = Reduced::new(tp);
    let cmax = r.c.iter().cloned().fold(0.0, f64::max);
    let (out, log_domain) = if cfg.lambda * cmax <= DIRECT_EXPONENT_LIMIT {
        match direct(&r, cfg) {
            Some(out) => (out, false),
            None => (stabilized(&r, cfg, cmax), true),
        }
    } else {
        (stabilized(&r, cfg, cmax), true)
    };

    let embed = |reduced: &[f64]| {
        let mut full = vec![0.0; tp.rows() * tp.cols()];
        for (ri, &i) in r.rows.iter().enumerate() {
            for (cj, &j) in r.cols.iter().enumerate() {
                full[i * tp.cols() + j] = reduced[ri * r.m + cj];
            }
        }
        full
    };
    let violation = TransportPlan::new(tp, embed(&out.plan)).max_marginal_violation(tp);
    let plan = TransportPlan::new(tp, embed(&round_to_polytope(&r, out.plan)));
    Ok(SinkhornSolution {
        plan,
        iterations: out.iterations,
        violation,
        converged: out.converged,
        log_domain,
    })
}

/// The problem restricted to rows and columns with positive mass.
struct Reduced {
    rows: Vec<usize>,
    cols: Vec<usize>,
    p: Vec<f64>,
    q: Vec<f64>,
    n: usize,
    m: usize,
    c: Vec<f64>,
}

impl Reduced {
    fn new(tp: &TransportProblem) -> Self {
        let rows: Vec<usize> = (0..tp.rows()).filter(|&i| tp.p()[i] > 0.0).collect();
        let cols: Vec<usize> = (0..tp.cols()).filter(|&j| tp.q()[j] > 0.0).collect();
        let mut c = Vec::with_capacity(rows.len() * cols.len());
        for &i in &rows {
            c.extend(cols.iter().map(|&j| tp.cost_at(i, j)));
        }
        Self {
            p: rows.iter().map(|&i| tp.p()[i]).collect(),
            q: cols.iter().map(|&j| tp.q()[j]).collect(),
            n: rows.len(),
            m: cols.len(),
            rows,
            cols,
            c,
        }
    }
}

struct Outcome {
    plan: Vec<f64>,
    iterations: u64,
    converged: bool,
}

fn row_col_sums(plan: &[f64], n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rows = vec![NeumaierSum::new(); n];
    let mut cols = vec![NeumaierSum::new(); m];
    for i in 0..n {
        for j in 0..m {
            let x = plan[i * m + j];
            rows[i].add(x);
            cols[j].add(x);
        }
    }
    (
        rows.iter().map(NeumaierSum::value).collect(),
        cols.iter().map(NeumaierSum::value).collect(),
    )
}

/// Projects a nonnegative plan onto `{M ≥ 0 : M1 = p, Mᵀ1 = q}`.
fn round_to_polytope(r: &Reduced, mut plan: Vec<f64>) -> Vec<f64> {
    let (n, m) = (r.n, r.m);
    let (rows, _) = row_col_sums(&plan, n, m);
    for i in 0..n {
        if rows[i] > r.p[i] {
            let s = r.p[i] / rows[i];
            plan[i * m..(i + 1) * m].iter_mut().for_each(|x| *x *= s);
        }
    }
    let (_, cols) = row_col_sums(&plan, n, m);
    for j in 0..m {
        if cols[j] > r.q[j] {
            let s = r.q[j] / cols[j];
            for i in 0..n {
                plan[i * m + j] *= s;
            }
        }
    }
    let (rows, cols) = row_col_sums(&plan, n, m);
    let err_r: Vec<f64> = rows.iter().zip(&r.p).map(|(s, t)| (t - s).max(0.0)).collect();
    let err_c: Vec<f64> = cols.iter().zip(&r.q).map(|(s, t)| (t - s).max(0.0)).collect();
    let total: f64 = err_r.iter().sum();
    if total > 0.0 {
        for i in 0..n {
            if err_r[i] > 0.0 {
                let a = err_r[i] / total;
                for j in 0..m {
                    plan[i * m + j] += a * err_c[j];
                }
            }
        }
    }
    plan
}

fn usable(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// Plain scaling with the kernel `exp(−λC)`. `None` when a scaling vector
/// leaves the representable range.
fn direct(r: &Reduced, cfg: &SinkhornConfig) -> Option<Outcome> {
    let (n, m) = (r.n, r.m);
    let k: Vec<f64> = r.c.iter().map(|c| (-cfg.lambda * c).exp()).collect();
    let mut u = vec![0.0; n];
    let mut v = vec![1.0; m];
    let mut kv = vec![0.0; n];
    let mut ktu = vec![0.0; m];
    mul(&k, m, &v, &mut kv);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        for i in 0..n {
            u[i] = r.p[i] / kv[i];
        }
        mul_t(&k, m, &u, &mut ktu);
        for j in 0..m {
            v[j] = r.q[j] / ktu[j];
        }
        mul(&k, m, &v, &mut kv);
        if !(u.iter().all(|&x| usable(x)) && v.iter().all(|&x| usable(x))) {
            return None;
        }
        let viol = (0..n)
            .map(|i| (u[i] * kv[i] - r.p[i]).abs())
            .fold(0.0, f64::max);
        if viol <= cfg.tol {
            converged = true;
            break;
        }
    }
    let plan = (0..n * m).map(|k_| u[k_ / m] * k[k_] * v[k_ % m]).collect();
    Some(Outcome {
        plan,
        iterations,
        converged,
    })
}

fn mul(k: &[f64], m: usize, v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(k.chunks_exact(m)) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn mul_t(k: &[f64], m: usize, u: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (row, &ui) in k.chunks_exact(m).zip(u) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * ui;
        }
    }
}

/// Truncated stabilised kernel in both row- and column-major sparse form.
struct SparseKernel {
    row_ptr: Vec<usize>,
    row_col: Vec<u32>,
    row_val: Vec<f64>,
    col_ptr: Vec<usize>,
    col_row: Vec<u32>,
    col_val: Vec<f64>,
}

impl SparseKernel {
    fn mul(&self, b: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            *o = self.row_col[span.clone()]
                .iter()
                .zip(&self.row_val[span])
                .map(|(&j, v)| v * b[j as usize])
                .sum();
        }
    }

    fn mul_t(&self, a: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let span = self.col_ptr[j]..self.col_ptr[j + 1];
            *o = self.col_row[span.clone()]
                .iter()
                .zip(&self.col_val[span])
                .map(|(&i, v)| v * a[i as usize])
                .sum();
        }
    }
}

struct LogState<'a> {
    r: &'a Reduced,
    f: Vec<f64>,
    g: Vec<f64>,
    scratch: Vec<f64>,
}

impl LogState<'_> {
    #[inline]
    fn exponent(&self, lam: f64, i: usize, j: usize) -> f64 {
        lam * (self.f[i] + self.g[j] - self.r.c[i * self.r.m + j])
    }

    /// Exact log-domain scaling of the columns, then of the rows.
    fn balance(&mut self, lam: f64) {
        let (n, m) = (self.r.n, self.r.m);
        for j in 0..m {
            self.scratch.clear();
            for i in 0..n {
                self.scratch.push(lam * (self.f[i] - self.r.c[i * m + j]));
            }
            self.g[j] = (self.r.q[j].ln() - log_sum_exp(&self.scratch)) / lam;
        }
        for i in 0..n {
            self.scratch.clear();
            let row = &self.r.c[i * m..(i + 1) * m];
            for (g, c) in self.g.iter().zip(row) {
                self.scratch.push(lam * (g - c));
            }
            self.f[i] = (self.r.p[i].ln() - log_sum_exp(&self.scratch)) / lam;
        }
    }

    fn kernel(&self, lam: f64) -> SparseKernel {
        let (n, m) = (self.r.n, self.r.m);
        let mut col_best = vec![(f64::NEG_INFINITY, 0usize); m];
        let mut row_best = vec![(f64::NEG_INFINITY, 0usize); n];
        for i in 0..n {
            for j in 0..m {
                let e = self.exponent(lam, i, j);
                if e > row_best[i].0 {
                    row_best[i] = (e, j);
                }
                if e > col_best[j].0 {
                    col_best[j] = (e, i);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut row_col = Vec::new();
        let mut row_val = Vec::new();
        let mut col_count = vec![0usize; m];
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..m {
                let e = self.exponent(lam, i, j);
                if e > TRUNCATION || row_best[i].1 == j || col_best[j].1 == i {
                    row_col.push(j as u32);
                    row_val.push(e.exp());
                    col_count[j] += 1;
                }
            }
            row_ptr.push(row_col.len());
        }
        let mut col_ptr = Vec::with_capacity(m + 1);
        col_ptr.push(0);
        for j in 0..m {
            col_ptr.push(col_ptr[j] + col_count[j]);
        }
        let mut fill = col_ptr[..m].to_vec();
        let mut col_row = vec![0u32; row_col.len()];
        let mut col_val = vec![0.0; row_col.len()];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let j = row_col[k] as usize;
                col_row[fill[j]] = i as u32;
                col_val[fill[j]] = row_val[k];
                fill[j] += 1;
            }
        }
        SparseKernel {
            row_ptr,
            row_col,
            row_val,
            col_ptr,
            col_row,
            col_val,
        }
    }

    fn absorb(&mut self, lam: f64, a: &mut [f64], b: &mut [f64]) {
        for (f, x) in self.f.iter_mut().zip(a.iter_mut()) {
            if usable(*x) {
                *f += x.ln() / lam;
            }
            *x = 1.0;
        }
        for (g, x) in self.g.iter_mut().zip(b.iter_mut()) {
            if usable(*x) {
                *g += x.ln() / lam;
            }
            *x = 1.0;
        }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: NeumaierSum = xs.iter().map(|x| (x - max).exp()).collect();
    max + s.value().ln()
}

fn in_range(x: f64) -> bool {
    x.is_finite() && x < ABSORB && x > 1.0 / ABSORB
}

fn stabilized(r: &Reduced, cfg: &SinkhornConfig, cmax: f64) -> Outcome {
    let (n, m) = (r.n, r.m);
    let mut stages = vec![cfg.lambda];
    while stages.last().unwrap() * cmax > FIRST_STAGE_EXPONENT {
        let next = stages.last().unwrap() / STAGE_FACTOR;
        stages.push(next);
    }
    stages.reverse();

    let mut st = LogState {
        r,
        f: vec![0.0; n],
        g: vec![0.0; m],
        scratch: Vec::with_capacity(n.max(m)),
    };
    let mut a = vec![1.0; n];
    let mut b = vec![1.0; m];
    let mut kb = vec![0.0; n];
    let mut kta = vec![0.0; m];
    let mut iterations = 0;
    let mut converged = false;
    let last = stages.len() - 1;

    'stages: for (s, &lam) in stages.iter().enumerate() {
        let tol = if s == last { cfg.tol } else { cfg.tol.max(STAGE_TOL) };
        st.balance(lam);
        let mut kernel = st.kernel(lam);
        kernel.mul(&b, &mut kb);
        loop {
            if iterations >= cfg.max_iter {
                st.absorb(lam, &mut a, &mut b);
                break 'stages;
            }
            iterations += 1;
            for i in 0..n {
                a[i] = r.p[i] / kb[i];
            }
            kernel.mul_t(&a, &mut kta);
            for j in 0..m {
                b[j] = r.q[j] / kta[j];
            }
            if !(a.iter().all(|&x| in_range(x)) && b.iter().all(|&x| in_range(x))) {
                st.absorb(lam, &mut a, &mut b);
                st.balance(lam);
                kernel = st.kernel(lam);
                kernel.mul(&b, &mut kb);
                continue;
            }
            kernel.mul(&b, &mut kb);
            let viol = (0..n)
                .map(|i| (a[i] * kb[i] - r.p[i]).abs())
                .fold(0.0, f64::max);
            if viol <= tol {
                st.absorb(lam, &mut a, &mut b);
                if s == last {
                    converged = true;
                }
                break;
            }
        }
    }

    let lam = cfg.lambda;
    let plan = (0..n * m)
        .map(|k| st.exponent(lam, k / m, k % m).exp())
        .collect();
    Outcome {
        plan,
        iterations,
        converged,
    }
}
