//! Primal network simplex for the bipartite transportation problem.
//!
//! Nodes `0..n` are sources (supply `p_i`), `n..n+m` sinks (demand `q_j`)
//! and `n+m` is an artificial root. Arc `i·m + j` ships from source `i` to
//! sink `j`; each node additionally owns one artificial arc to or from the
//! root that forms the initial spanning tree. The leaving arc is chosen so
//! that the tree stays strongly feasible, which rules out cycling on the
//! highly degenerate problems produced by sparse histograms.

use super::{TransportPlan, TransportProblem};
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Dual variables `u` (rows) and `v` (columns) with `u_i + v_j ≤ C_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl DualPotentials {
    /// `Σ u_i p_i + Σ v_j q_j`.
    pub fn objective(&self, tp: &TransportProblem) -> f64 {
        let a = self.u.iter().zip(tp.p()).map(|(u, p)| u * p);
        let b = self.v.iter().zip(tp.q()).map(|(v, q)| v * q);
        compensated_sum(a.chain(b))
    }

    /// Largest violation of `u_i + v_j ≤ C_ij`, zero if dual feasible.
    pub fn max_infeasibility(&self, tp: &TransportProblem) -> f64 {
        let m = tp.cols();
        let mut worst = 0.0f64;
        for (i, u) in self.u.iter().enumerate() {
            let row = &tp.cost()[i * m..(i + 1) * m];
            for (v, c) in self.v.iter().zip(row) {
                worst = worst.max(u + v - c);
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub plan: TransportPlan,
    pub duals: DualPotentials,
    pub pivots: u64,
}

impl LpSolution {
    /// Primal minus dual objective; zero up to rounding at an optimum.
    pub fn duality_gap(&self, tp: &TransportProblem) -> f64 {
        self.plan.objective - self.duals.objective(tp)
    }
}

/// Exact optimal transport plan for `tp`.
pub fn solve_lp(tp: &TransportProblem) -> Result<LpSolution> {
    let mut ns = NetworkSimplex::new(tp);
    ns.run()?;
    Ok(ns.into_solution(tp))
}

const NONE: usize = usize::MAX;

struct NetworkSimplex<'a> {
    n: usize,
    m: usize,
    root: usize,
    cost: &'a [f64],
    art_cost: f64,
    /// Artificial arc of node `v` runs root → v (a demand node).
    art_down: Vec<bool>,
    eps: f64,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    depth: Vec<usize>,
    children: Vec<Vec<usize>>,
    child_pos: Vec<usize>,
    pi: Vec<f64>,
    block: usize,
    next_arc: usize,
    pivots: u64,
    stack: Vec<usize>,
}

impl<'a> NetworkSimplex<'a> {
    fn new(tp: &'a TransportProblem) -> Self {
        let (n, m) = (tp.rows(), tp.cols());
        let nodes = n + m + 1;
        let root = n + m;
        let real = n * m;
        let arcs = real + n + m;
        let max_cost = tp.cost().iter().cloned().fold(0.0, f64::max);
        let art_cost = (max_cost + 1.0) * nodes as f64;

        let mut s = Self {
            n,
            m,
            root,
            cost: tp.cost(),
            art_cost,
            art_down: vec![false; n + m],
            eps: 1e-13 * art_cost,
            flow: vec![0.0; arcs],
            in_tree: vec![false; arcs],
            parent: vec![NONE; nodes],
            pred: vec![NONE; nodes],
            depth: vec![0; nodes],
            children: vec![Vec::new(); nodes],
            child_pos: vec![0; nodes],
            pi: vec![0.0; nodes],
            block: ((arcs as f64).sqrt() as usize).max(10),
            next_arc: 0,
            pivots: 0,
            stack: Vec::new(),
        };
        for v in 0..n + m {
            let supply = if v < n { tp.p()[v] } else { -tp.q()[v - n] };
            let a = real + v;
            // nodes with nonnegative supply drain to the root for free,
            // demand nodes are fed from it at the artificial cost
            s.art_down[v] = supply < 0.0;
            s.flow[a] = supply.abs();
            s.pi[v] = if supply < 0.0 { art_cost } else { 0.0 };
            s.in_tree[a] = true;
            s.parent[v] = root;
            s.pred[v] = a;
            s.depth[v] = 1;
            s.add_child(root, v);
        }
        s
    }

    /// `(tail, head, cost)` of arc `a`.
    #[inline]
    fn arc(&self, a: usize) -> (usize, usize, f64) {
        let real = self.n * self.m;
        if a < real {
            (a / self.m, self.n + a % self.m, self.cost[a])
        } else {
            let v = a - real;
            if self.art_down[v] {
                (self.root, v, self.art_cost)
            } else {
                (v, self.root, 0.0)
            }
        }
    }

    #[inline]
    fn reduced_cost(&self, a: usize) -> f64 {
        let (t, h, c) = self.arc(a);
        c + self.pi[t] - self.pi[h]
    }

    /// Block search pricing: the most negative reduced cost within the
    /// first block that contains any eligible arc.
    fn find_entering(&mut self) -> Option<usize> {
        let total = self.flow.len();
        let mut best = None;
        let mut min = -self.eps;
        let mut left = self.block;
        for _ in 0..total {
            let a = self.next_arc;
            self.next_arc = if a + 1 == total { 0 } else { a + 1 };
            if !self.in_tree[a] {
                let rc = self.reduced_cost(a);
                if rc < min {
                    min = rc;
                    best = Some(a);
                }
            }
            left -= 1;
            if left == 0 {
                if best.is_some() {
                    return best;
                }
                left = self.block;
            }
        }
        best
    }

    fn run(&mut self) -> Result<()> {
        let limit = 100 * self.flow.len() as u64 + 100_000;
        loop {
            let entering = match self.find_entering() {
                Some(e) => e,
                None => {
                    // drop the drift accumulated by incremental updates and
                    // confirm optimality against exact tree potentials
                    self.recompute_potentials();
                    match self.find_entering() {
                        Some(e) => e,
                        None => return Ok(()),
                    }
                }
            };
            self.pivot(entering)?;
            self.pivots += 1;
            if self.pivots > limit {
                return Err(Error::Degenerate(format!(
                    "network simplex exceeded {limit} pivots"
                )));
            }
        }
    }

    fn pivot(&mut self, e: usize) -> Result<()> {
        let (first, second, _) = self.arc(e);
        let rc = self.reduced_cost(e);

        let (mut u, mut v) = (first, second);
        while u != v {
            if self.depth[u] >= self.depth[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        let join = u;

        // the cycle sends flow join → first → second → join
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut first_side = true;
        let mut x = first;
        while x != join {
            let a = self.pred[x];
            if self.arc(a).0 == x && self.flow[a] < delta {
                delta = self.flow[a];
                u_out = x;
            }
            x = self.parent[x];
        }
        x = second;
        while x != join {
            let a = self.pred[x];
            if self.arc(a).0 != x && self.flow[a] <= delta {
                delta = self.flow[a];
                u_out = x;
                first_side = false;
            }
            x = self.parent[x];
        }
        if u_out == NONE {
            return Err(Error::Degenerate("transport problem is unbounded".into()));
        }

        if delta > 0.0 {
            self.flow[e] += delta;
            for (start, sign) in [(first, -1.0), (second, 1.0)] {
                let mut x = start;
                while x != join {
                    let a = self.pred[x];
                    if self.arc(a).0 == x {
                        self.flow[a] += sign * delta;
                    } else {
                        self.flow[a] -= sign * delta;
                    }
                    x = self.parent[x];
                }
            }
        }
        let leaving = self.pred[u_out];
        self.flow[leaving] = 0.0;
        self.in_tree[leaving] = false;
        self.in_tree[e] = true;

        // re-hang the path u_in .. u_out below v_in, reversing parent links
        let (u_in, v_in) = if first_side {
            (first, second)
        } else {
            (second, first)
        };
        let old = self.parent[u_out];
        self.remove_child(old, u_out);
        let (mut child, mut new_parent, mut new_pred) = (u_in, v_in, e);
        loop {
            let old_parent = self.parent[child];
            let old_pred = self.pred[child];
            if child != u_out {
                self.remove_child(old_parent, child);
            }
            self.parent[child] = new_parent;
            self.pred[child] = new_pred;
            self.add_child(new_parent, child);
            if child == u_out {
                break;
            }
            new_parent = child;
            new_pred = old_pred;
            child = old_parent;
        }

        let shift = if u_in == second { rc } else { -rc };
        self.stack.clear();
        self.stack.push(u_in);
        while let Some(x) = self.stack.pop() {
            self.pi[x] += shift;
            self.depth[x] = self.depth[self.parent[x]] + 1;
            self.stack.extend_from_slice(&self.children[x]);
        }
        Ok(())
    }

    fn recompute_potentials(&mut self) {
        self.pi[self.root] = 0.0;
        self.stack.clear();
        self.stack.extend_from_slice(&self.children[self.root]);
        while let Some(x) = self.stack.pop() {
            let p = self.parent[x];
            let (t, _, c) = self.arc(self.pred[x]);
            self.pi[x] = if t == x { self.pi[p] - c } else { self.pi[p] + c };
            self.stack.extend_from_slice(&self.children[x]);
        }
    }

    fn into_solution(self, tp: &TransportProblem) -> LpSolution {
        let real = self.n * self.m;
        let plan = self.flow[..real].iter().map(|f| f.max(0.0)).collect();
        let u = self.pi[..self.n].iter().map(|p| -p).collect();
        let v = self.pi[self.n..self.n + self.m].to_vec();
        LpSolution {
            plan: TransportPlan::new(tp, plan),
            duals: DualPotentials { u, v },
            pivots: self.pivots,
        }
    }

    fn add_child(&mut self, parent: usize, child: usize) {
        self.child_pos[child] = self.children[parent].len();
        self.children[parent].push(child);
    }

    fn remove_child(&mut self, parent: usize, child: usize) {
        let pos = self.child_pos[child];
        let last = self.children[parent].pop().expect("child list is nonempty");
        if last != child {
            self.children[parent][pos] = last;
            self.child_pos[last] = pos;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::discrete_metric_cost;
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line_cost(n: usize) -> Vec<f64> {
        (0..n * n)
            .map(|k| (k / n).abs_diff(k % n) as f64)
            .collect()
    }

    fn random_simplex(rng: &mut ChaCha8Rng, n: usize, zero_frac: f64) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < zero_frac { 0.0 } else { rng.random() })
            .collect();
        if v.iter().all(|&x| x == 0.0) {
            v[0] = 1.0;
        }
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        v
    }

    /// 1-D W1 on integer points: `Σ |F_p(k) − F_q(k)|`.
    fn line_w1(p: &[f64], q: &[f64]) -> f64 {
        let (mut fp, mut fq, mut acc) = (0.0, 0.0, 0.0);
        for k in 0..p.len() - 1 {
            fp += p[k];
            fq += q[k];
            acc += (fp - fq).abs();
        }
        acc
    }

    fn check_certificate(tp: &TransportProblem, sol: &LpSolution) {
        assert!(sol.plan.max_marginal_violation(tp) < 1e-12);
        assert!(sol.duals.max_infeasibility(tp) < 1e-9);
        assert!(sol.duality_gap(tp).abs() < 1e-9, "gap {}", sol.duality_gap(tp));
        assert!(sol.plan.as_slice().iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn two_bin_examples() {
        let c = vec![0.0, 0.5, 0.5, 0.0];
        let tp = TransportProblem::new(vec![0.5, 0.5], vec![0.5, 0.5], c.clone()).unwrap();
        assert_eq!(solve_lp(&tp).unwrap().plan.objective, 0.0);
        let tp = TransportProblem::new(vec![0.75, 0.25], vec![0.25, 0.75], c).unwrap();
        let sol = solve_lp(&tp).unwrap();
        assert!((sol.plan.objective - 0.25).abs() < 1e-15);
        assert!((sol.plan.mass(0, 1) - 0.5).abs() < 1e-15);
        check_certificate(&tp, &sol);
    }

    #[test]
    fn matches_line_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2, 3, 7, 20, 60] {
            for _ in 0..5 {
                let p = random_simplex(&mut rng, n, 0.3);
                let q = random_simplex(&mut rng, n, 0.3);
                let tp = TransportProblem::new(p.clone(), q.clone(), line_cost(n)).unwrap();
                let sol = solve_lp(&tp).unwrap();
                assert!((sol.plan.objective - line_w1(&p, &q)).abs() < 1e-12);
                check_certificate(&tp, &sol);
            }
        }
    }

    #[test]
    fn discrete_metric_gives_total_variation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [2, 5, 30] {
            let p = random_simplex(&mut rng, n, 0.5);
            let q = random_simplex(&mut rng, n, 0.5);
            let tv = 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
            let tp = TransportProblem::new(p, q, discrete_metric_cost(n)).unwrap();
            assert!((solve_lp(&tp).unwrap().plan.objective - tv).abs() < 1e-12);
        }
    }

    #[test]
    fn rectangular_and_point_masses() {
        let tp = TransportProblem::new(vec![1.0], vec![0.25, 0.75], vec![2.0, 4.0]).unwrap();
        assert_eq!(solve_lp(&tp).unwrap().plan.objective, 3.5);
        let tp = TransportProblem::new(vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], line_cost(3))
            .unwrap();
        assert_eq!(solve_lp(&tp).unwrap().plan.objective, 1.0);
    }

    #[test]
    fn large_sparse_problem_has_tight_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 300;
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
        let cost: Vec<f64> = (0..n * n)
            .map(|k| {
                let (a, b) = (pts[k / n], pts[k % n]);
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            })
            .collect();
        let tp = TransportProblem::new(
            random_simplex(&mut rng, n, 0.6),
            random_simplex(&mut rng, n, 0.6),
            cost,
        )
        .unwrap();
        let sol = solve_lp(&tp).unwrap();
        check_certificate(&tp, &sol);
        let swapped = solve_lp(&tp.transposed()).unwrap();
        assert!((sol.plan.objective - swapped.plan.objective).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn certificate_on_random_problems(seed in any::<u64>(), n in 1usize..12, m in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_simplex(&mut rng, n, 0.3);
            let q = random_simplex(&mut rng, m, 0.3);
            let cost = (0..n * m).map(|_| rng.random::<f64>() * 5.0).collect();
            let tp = TransportProblem::new(p, q, cost).unwrap();
            let sol = solve_lp(&tp).unwrap();
            check_certificate(&tp, &sol);
        }

        #[test]
        fn objective_invariant_under_relabelling(seed in any::<u64>(), n in 2usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_simplex(&mut rng, n, 0.2);
            let q = random_simplex(&mut rng, n, 0.2);
            let cost: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
            let perm: Vec<usize> = {
                let mut v: Vec<usize> = (0..n).collect();
                v.rotate_left(seed as usize % n);
                v.swap(0, n - 1);
                v
            };
            let base = solve_lp(&TransportProblem::new(p.clone(), q.clone(), cost.clone()).unwrap())
                .unwrap().plan.objective;
            let pp = perm.iter().map(|&i| p[i]).collect();
            let pc = (0..n * n).map(|k| cost[perm[k / n] * n + k % n]).collect();
            let moved = solve_lp(&TransportProblem::new(pp, q, pc).unwrap()).unwrap().plan.objective;
            prop_assert!((base - moved).abs() < 1e-12);
        }
    }
}
