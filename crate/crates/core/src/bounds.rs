//! Analytic relations between the divergences, checked on estimated values.
//!
//! ```text
//! 0 ≤ JS₂ ≤ TV ≤ 1
//! TV ≤ √(KL/2)                    (Pinsker)
//! TV ≤ √(1 − e^−KL)               (Bretagnolle–Huber)
//! d_min · TV ≤ W1 ≤ diam · TV
//! ```
//!
//! `JS₂` is the JS divergence with base-2 logarithms and `KL` is in nats.
//! For continuous data `d_min = 0` and `diam = ∞`, so both W1 relations are
//! reported as skipped.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hist_divergence::{DivergenceKind, DivergenceValue, LogBase};
use crate::oracles::tv_upper_bounds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationId {
    JsLeTv,
    TvLeOne,
    TvLePinsker,
    TvLeBretagnolle,
    W1Lower,
    W1Upper,
    W1LeW2,
}

impl RelationId {
    /// Relations evaluated by [`check_relations`], in report order.
    pub const CHAIN: [RelationId; 6] = [
        RelationId::JsLeTv,
        RelationId::TvLeOne,
        RelationId::TvLePinsker,
        RelationId::TvLeBretagnolle,
        RelationId::W1Lower,
        RelationId::W1Upper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RelationId::JsLeTv => "js_le_tv",
            RelationId::TvLeOne => "tv_le_one",
            RelationId::TvLePinsker => "tv_le_pinsker",
            RelationId::TvLeBretagnolle => "tv_le_bretagnolle",
            RelationId::W1Lower => "w1_lower",
            RelationId::W1Upper => "w1_upper",
            RelationId::W1LeW2 => "w1_le_w2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationStatus {
    Satisfied,
    Violated,
    /// The relation holds trivially (`d_min = 0`).
    SkippedVacuous,
    /// The right-hand side is infinite.
    SkippedUnbounded,
    /// An input the relation needs was not supplied.
    NotAvailable,
}

impl RelationStatus {
    pub fn label(self) -> &'static str {
        match self {
            RelationStatus::Satisfied => "true",
            RelationStatus::Violated => "false",
            RelationStatus::SkippedVacuous => "skipped-vacuous",
            RelationStatus::SkippedUnbounded => "skipped-unbounded",
            RelationStatus::NotAvailable => "n/a",
        }
    }
}

/// One relation `lhs ≤ rhs`; `slack = rhs − lhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Relation {
    pub id: RelationId,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs ≤ rhs + tol`; also true for skipped relations.
    pub satisfied: bool,
    pub slack: f64,
    pub status: RelationStatus,
}

impl Relation {
    fn compare(id: RelationId, lhs: f64, rhs: f64, tol: f64) -> Self {
        let satisfied = lhs <= rhs + tol;
        Self {
            id,
            lhs,
            rhs,
            satisfied,
            slack: rhs - lhs,
            status: if satisfied {
                RelationStatus::Satisfied
            } else {
                RelationStatus::Violated
            },
        }
    }

    fn skipped(id: RelationId, lhs: f64, rhs: f64, status: RelationStatus) -> Self {
        Self {
            id,
            lhs,
            rhs,
            satisfied: true,
            slack: rhs - lhs,
            status,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub relations: Vec<Relation>,
    pub tol: f64,
}

impl BoundReport {
    pub fn get(&self, id: RelationId) -> Option<&Relation> {
        self.relations.iter().find(|r| r.id == id)
    }

    /// No relation is violated.
    pub fn all_satisfied(&self) -> bool {
        self.relations.iter().all(|r| r.satisfied)
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be nonnegative, got {v}")))
    }
}

/// Checks the relation chain. `js` must be a base-2 JS value; `w1 = None`
/// marks the W1 relations as not available.
pub fn check_relations(
    kl: f64,
    tv: f64,
    js: DivergenceValue,
    w1: Option<f64>,
    d_min: f64,
    diam: f64,
    tol: f64,
) -> Result<BoundReport> {
    if js.kind != DivergenceKind::Js {
        return Err(Error::param("js argument is not a JS divergence"));
    }
    if js.log_base != LogBase::Base2 {
        return Err(Error::param(
            "the JS ≤ TV relation needs JS in bits; convert with in_base(LogBase::Base2)",
        ));
    }
    for (name, v) in [("kl", kl), ("tv", tv), ("js", js.value), ("d_min", d_min), ("diam", diam), ("tol", tol)] {
        nonnegative(name, v)?;
    }
    if let Some(w) = w1 {
        nonnegative("w1", w)?;
    }
    if kl.is_infinite() || !tv.is_finite() || !js.value.is_finite() || d_min.is_infinite() {
        return Err(Error::param("kl, tv, js and d_min must be finite"));
    }

    let tvb = tv_upper_bounds(kl)?;
    let mut relations = vec![
        Relation::compare(RelationId::JsLeTv, js.value, tv, tol),
        Relation::compare(RelationId::TvLeOne, tv, 1.0, tol),
        Relation::compare(RelationId::TvLePinsker, tv, tvb.pinsker, tol),
        Relation::compare(RelationId::TvLeBretagnolle, tv, tvb.bretagnolle, tol),
    ];
    match w1 {
        None => {
            for id in [RelationId::W1Lower, RelationId::W1Upper] {
                relations.push(Relation::skipped(id, f64::NAN, f64::NAN, RelationStatus::NotAvailable));
            }
        }
        Some(w) => {
            let lower = tv * d_min;
            relations.push(if d_min == 0.0 {
                Relation::skipped(RelationId::W1Lower, lower, w, RelationStatus::SkippedVacuous)
            } else {
                Relation::compare(RelationId::W1Lower, lower, w, tol)
            });
            relations.push(if diam.is_infinite() {
                Relation::skipped(RelationId::W1Upper, w, f64::INFINITY, RelationStatus::SkippedUnbounded)
            } else {
                Relation::compare(RelationId::W1Upper, w, diam * tv, tol)
            });
        }
    }
    Ok(BoundReport { relations, tol })
}

/// `W1 ≤ W2 + tol`, comparing an estimated W1 with a reference W2.
pub fn check_w1_le_w2(w1: f64, w2: f64, tol: f64) -> Relation {
    Relation::compare(RelationId::W1LeW2, w1, w2, tol)
}
