//! Bin-wise KL, TV and JS divergences between two histograms on one grid.
//!
//! With `n_{p,i}` and `n_{q,i}` the counts of bin `i` and `N` the common
//! sample count:
//!
//! ```text
//! KL = Σ (n_p/N) ln(n_p / ñ_q)          ñ_q = max(n_q, 1e-8)
//! TV = ½ Σ |n_p/N − n_q/N|
//! JS = ½ Σ (n_p/N) ln(2n_p/(n_p+n_q)) + (n_q/N) ln(2n_q/(n_p+n_q))
//! ```
//!
//! Terms with a zero leading count contribute 0. The empty-bin fill is applied
//! to the raw q-counts only, so KL is finite but can be slightly nonmonotone
//! when the supports differ a lot; [`DivergenceValue::filled_bins`] reports how
//! many bins needed it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::HistogramGrid;
use crate::numeric::NeumaierSum;

/// Count substituted for empty q-bins in the KL estimator.
pub const EMPTY_BIN_FILL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Base2,
}

impl LogBase {
    /// Converts a value measured in nats into this base.
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            LogBase::Natural => nats,
            LogBase::Base2 => nats / std::f64::consts::LN_2,
        }
    }

    /// Converts a value measured in this base into nats.
    pub fn to_nats(self, value: f64) -> f64 {
        match self {
            LogBase::Natural => value,
            LogBase::Base2 => value * std::f64::consts::LN_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DivergenceKind {
    Kl,
    Tv,
    Js,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceValue {
    pub kind: DivergenceKind,
    pub value: f64,
    /// Unit of `value`; TV is unitless and always reported as natural.
    pub log_base: LogBase,
    /// Bins where the empty-bin fill replaced a zero q-count (KL only).
    pub filled_bins: u64,
}

impl DivergenceValue {
    fn new(kind: DivergenceKind, value: f64, log_base: LogBase) -> Self {
        Self {
            kind,
            value,
            log_base,
            filled_bins: 0,
        }
    }

    /// The same divergence expressed in `base`.
    pub fn in_base(self, base: LogBase) -> Self {
        if self.kind == DivergenceKind::Tv || self.log_base == base {
            return self;
        }
        Self {
            value: base.from_nats(self.log_base.to_nats(self.value)),
            log_base: base,
            ..self
        }
    }
}

fn check_pair(p: &HistogramGrid, q: &HistogramGrid) -> Result<()> {
    if !p.same_grid(q) {
        return Err(Error::param("histograms are not on the same grid"));
    }
    if p.total() != q.total() {
        return Err(Error::param(format!(
            "histograms hold different sample counts: {} vs {}",
            p.total(),
            q.total()
        )));
    }
    if p.total() == 0 {
        return Err(Error::param("histograms hold no samples"));
    }
    Ok(())
}

/// Calls `f(n_p, n_q)` for every bin where either count is nonzero, in bin
/// index order.
fn for_each_pair(p: &HistogramGrid, q: &HistogramGrid, mut f: impl FnMut(u64, u64)) {
    if let (Some(a), Some(b)) = (p.dense_counts(), q.dense_counts()) {
        for (&np, &nq) in a.iter().zip(b) {
            if np > 0 || nq > 0 {
                f(np, nq);
            }
        }
        return;
    }
    let (a, b) = (p.occupied(), q.occupied());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let ia = a.get(i).map_or(u64::MAX, |x| x.0);
        let ib = b.get(j).map_or(u64::MAX, |x| x.0);
        if ia == ib {
            f(a[i].1, b[j].1);
            i += 1;
            j += 1;
        } else if ia < ib {
            f(a[i].1, 0);
            i += 1;
        } else {
            f(0, b[j].1);
            j += 1;
        }
    }
}

/// Histogram estimate of `KL(P ‖ Q)` in nats.
pub fn kl_hist(p: &HistogramGrid, q: &HistogramGrid) -> Result<DivergenceValue> {
    check_pair(p, q)?;
    let n = p.total() as f64;
    let mut acc = NeumaierSum::new();
    let mut filled = 0u64;
    for_each_pair(p, q, |np, nq| {
        if np == 0 {
            return;
        }
        let denom = if nq == 0 {
            filled += 1;
            EMPTY_BIN_FILL
        } else {
            nq as f64
        };
        acc.add(np as f64 / n * (np as f64 / denom).ln());
    });
    Ok(DivergenceValue {
        filled_bins: filled,
        ..DivergenceValue::new(DivergenceKind::Kl, acc.value(), LogBase::Natural)
    })
}

/// Histogram estimate of the total variation distance, in `[0, 1]`.
pub fn tv_hist(p: &HistogramGrid, q: &HistogramGrid) -> Result<DivergenceValue> {
    check_pair(p, q)?;
    let mut l1: u128 = 0;
    for_each_pair(p, q, |np, nq| l1 += np.abs_diff(nq) as u128);
    let tv = l1 as f64 / (2.0 * p.total() as f64);
    Ok(DivergenceValue::new(DivergenceKind::Tv, tv, LogBase::Natural))
}

/// Histogram estimate of the Jensen–Shannon divergence in `base`.
pub fn js_hist(p: &HistogramGrid, q: &HistogramGrid, base: LogBase) -> Result<DivergenceValue> {
    check_pair(p, q)?;
    let n = p.total() as f64;
    let term = |a: u64, b: u64| -> f64 {
        if a == 0 {
            0.0
        } else {
            let a = a as f64;
            a / n * (2.0 * a / (a + b as f64)).ln()
        }
    };
    let mut acc = NeumaierSum::new();
    for_each_pair(p, q, |np, nq| acc.add(0.5 * (term(np, nq) + term(nq, np))));
    let js = base.from_nats(acc.value());
    Ok(DivergenceValue::new(DivergenceKind::Js, js, base))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::{build_histogram, joint_range, BinRange};
    use crate::scenarios::SampleMatrix;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    /// Histogram with the given 1-D bin counts on [0, len).
    fn hist(counts: &[u64]) -> HistogramGrid {
        let xs: Vec<f64> = counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat(i as f64 + 0.5).take(c as usize))
            .collect();
        let s = SampleMatrix::new(xs.len(), 1, xs).unwrap();
        let r = BinRange::new(vec![(0.0, counts.len() as f64)]).unwrap();
        build_histogram(&s, counts.len(), &r).unwrap()
    }

    #[test]
    fn identical_histograms_have_zero_divergence() {
        let p = hist(&[3, 1, 0, 4]);
        assert_eq!(kl_hist(&p, &p).unwrap().value, 0.0);
        assert_eq!(tv_hist(&p, &p).unwrap().value, 0.0);
        assert_eq!(js_hist(&p, &p, LogBase::Natural).unwrap().value, 0.0);
    }

    #[test]
    fn hand_evaluated_values() {
        let (p, q) = (hist(&[3, 1]), hist(&[1, 3]));
        let kl = kl_hist(&p, &q).unwrap();
        let want = 0.75 * 3f64.ln() + 0.25 * (1.0f64 / 3.0).ln();
        assert!((kl.value - want).abs() < 1e-15);
        assert!((kl.value - 0.5493).abs() < 1e-4);
        assert_eq!(kl.filled_bins, 0);
        assert_eq!(tv_hist(&p, &q).unwrap().value, 0.5);
        let js = js_hist(&p, &q, LogBase::Natural).unwrap().value;
        let want = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((js - want).abs() < 1e-15);
        assert!((js - 0.1308).abs() < 1e-4);
    }

    #[test]
    fn disjoint_supports_are_maximal() {
        let (p, q) = (hist(&[4, 0]), hist(&[0, 4]));
        assert_eq!(tv_hist(&p, &q).unwrap().value, 1.0);
        assert!((js_hist(&p, &q, LogBase::Natural).unwrap().value - LN_2).abs() < 1e-15);
        assert!((js_hist(&p, &q, LogBase::Base2).unwrap().value - 1.0).abs() < 1e-15);
        let kl = kl_hist(&p, &q).unwrap();
        assert_eq!(kl.filled_bins, 1);
        assert!((kl.value - (4.0f64 / EMPTY_BIN_FILL).ln()).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let p = hist(&[1, 1]);
        assert!(kl_hist(&p, &hist(&[1, 1, 0])).is_err());
        assert!(tv_hist(&p, &hist(&[1, 2])).is_err());
        let s = SampleMatrix::new(2, 1, vec![0.5, 1.5]).unwrap();
        let shifted = build_histogram(&s, 2, &BinRange::new(vec![(0.0, 2.5)]).unwrap()).unwrap();
        assert!(js_hist(&p, &shifted, LogBase::Natural).is_err());
    }

    #[test]
    fn base_conversion() {
        let v = js_hist(&hist(&[3, 1]), &hist(&[1, 3]), LogBase::Natural).unwrap();
        let b2 = v.in_base(LogBase::Base2);
        assert!((b2.value - v.value / LN_2).abs() < 1e-15);
        assert_eq!(b2.log_base, LogBase::Base2);
        let tv = tv_hist(&hist(&[3, 1]), &hist(&[1, 3])).unwrap();
        assert_eq!(tv.in_base(LogBase::Base2), tv);
    }

    fn kl_real(a: &[f64], b: &[f64], n: f64) -> f64 {
        a.iter()
            .zip(b)
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, &y)| x / n * (x / y).ln())
            .sum()
    }

    fn counts_pair() -> impl Strategy<Value = (Vec<u64>, Vec<u64>)> {
        (1usize..12).prop_flat_map(|k| {
            (
                prop::collection::vec(0u64..20, k),
                prop::collection::vec(0u64..20, k),
            )
        })
    }

    /// Two histograms with equal totals: `b` is `a` with mass moved around.
    fn equal_totals((a, b): (Vec<u64>, Vec<u64>)) -> Option<(HistogramGrid, HistogramGrid)> {
        let (sa, sb): (u64, u64) = (a.iter().sum(), b.iter().sum());
        if sa == 0 || sb == 0 {
            return None;
        }
        // rescale b to total sa by moving the difference into its largest bin
        let mut b = b;
        let imax = (0..b.len()).max_by_key(|&i| b[i]).unwrap();
        if sb > sa {
            let mut excess = sb - sa;
            for v in b.iter_mut() {
                let take = excess.min(*v);
                *v -= take;
                excess -= take;
            }
        } else {
            b[imax] += sa - sb;
        }
        Some((hist(&a), hist(&b)))
    }

    proptest! {
        #[test]
        fn symmetric_and_chained(pair in counts_pair()) {
            let Some((p, q)) = equal_totals(pair) else { return Ok(()) };
            let tv = tv_hist(&p, &q).unwrap().value;
            prop_assert_eq!(tv, tv_hist(&q, &p).unwrap().value);
            let js = js_hist(&p, &q, LogBase::Base2).unwrap().value;
            prop_assert_eq!(js, js_hist(&q, &p, LogBase::Base2).unwrap().value);
            prop_assert!(js >= 0.0);
            prop_assert!(js <= tv + 1e-12);
            prop_assert!(tv <= 1.0);
        }

        #[test]
        fn pinsker_holds_without_fill(pair in counts_pair()) {
            let Some((p, q)) = equal_totals(pair) else { return Ok(()) };
            let kl = kl_hist(&p, &q).unwrap();
            if kl.filled_bins == 0 {
                let tv = tv_hist(&p, &q).unwrap().value;
                prop_assert!(tv <= (kl.value / 2.0).sqrt() + 1e-9);
            }
        }

        #[test]
        fn js_is_mean_kl_to_mixture(pair in counts_pair()) {
            let Some((p, q)) = equal_totals(pair) else { return Ok(()) };
            let a: Vec<f64> = p.dense_counts().unwrap().iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = q.dense_counts().unwrap().iter().map(|&v| v as f64).collect();
            let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let n = p.total() as f64;
            let want = 0.5 * kl_real(&a, &m, n) + 0.5 * kl_real(&b, &m, n);
            let js = js_hist(&p, &q, LogBase::Natural).unwrap().value;
            prop_assert!((js - want).abs() < 1e-12);
        }

        #[test]
        fn invariant_under_common_bin_permutation(pair in counts_pair(), rot in 0usize..12) {
            let Some((p, q)) = equal_totals(pair) else { return Ok(()) };
            let rotate = |h: &HistogramGrid| {
                let mut c = h.dense_counts().unwrap().to_vec();
                let r = rot % c.len();
                c.rotate_left(r);
                hist(&c)
            };
            let (pr, qr) = (rotate(&p), rotate(&q));
            prop_assert!((kl_hist(&p, &q).unwrap().value - kl_hist(&pr, &qr).unwrap().value).abs() < 1e-12);
            prop_assert_eq!(tv_hist(&p, &q).unwrap().value, tv_hist(&pr, &qr).unwrap().value);
            prop_assert!((js_hist(&p, &q, LogBase::Natural).unwrap().value
                - js_hist(&pr, &qr, LogBase::Natural).unwrap().value).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_and_dense_grids_agree() {
        use crate::histogram::{build_histogram_with_budget, BinBudget};
        let a = SampleMatrix::from_rows(&[[0.1, 0.2], [0.5, 0.5], [0.9, 0.1], [0.3, 0.3]]).unwrap();
        let b = SampleMatrix::from_rows(&[[0.1, 0.25], [0.7, 0.5], [0.9, 0.9], [0.3, 0.3]]).unwrap();
        let r = joint_range(&a, &b).unwrap();
        let budget = BinBudget {
            dense_limit: 1,
            max_bins: 1000,
        };
        let (pd, qd) = (build_histogram(&a, 5, &r).unwrap(), build_histogram(&b, 5, &r).unwrap());
        let ps = build_histogram_with_budget(&a, 5, &r, &budget).unwrap();
        let qs = build_histogram_with_budget(&b, 5, &r, &budget).unwrap();
        assert_eq!(kl_hist(&pd, &qd).unwrap(), kl_hist(&ps, &qs).unwrap());
        assert_eq!(tv_hist(&pd, &qd).unwrap(), tv_hist(&ps, &qd).unwrap());
        assert_eq!(
            js_hist(&pd, &qd, LogBase::Base2).unwrap(),
            js_hist(&ps, &qs, LogBase::Base2).unwrap()
        );
    }
}
