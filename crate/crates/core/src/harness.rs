//! Convergence sweeps over sample counts and bin counts.
//!
//! A sweep runs every requested estimator on fresh joint and
//! product-of-marginals samples for each sample count, bin count and trial.
//! Trial `t` samples with seed `seed_base + t`, so re-running a sweep
//! reproduces every value bit for bit; only the timing columns vary.
//!
//! Work is split into one job per (sample count, trial). A job draws its
//! samples once, builds the two histograms once per bin count and runs all
//! histogram-based estimators on that shared discretisation. Failures of a
//! single estimator (a resource guard, degenerate input) are recorded as
//! skipped cells and never abort the sweep.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{check_relations, BoundReport, RelationId, RelationStatus};
use crate::error::{Error, Result};
use crate::hist_divergence::{js_hist, kl_hist, tv_hist, LogBase};
use crate::histogram::{build_histogram, joint_range, HistogramGrid};
use crate::knn::{kl_knn, KnnConfig};
use crate::mmd::{mmd2_unbiased, KernelSpec, DEFAULT_SIGMA};
use crate::scenarios::{
    sample_joint, sample_product_of_marginals, SampleMatrix, ScenarioKind, ScenarioSpec,
    RNG_ALGORITHM,
};
use crate::transport::{
    sinkhorn, solve_lp, SinkhornConfig, TransportProblem, DEFAULT_COST_ENTRY_LIMIT,
};

/// Jobs whose sample matrices would hold more values than this are skipped.
pub const DEFAULT_SAMPLE_ENTRY_LIMIT: u64 = 250_000_000;

/// Tolerance of the relation checks attached to histogram rows.
pub const BOUND_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Metric {
    /// KL on histograms, nats.
    KlHist,
    TvHist,
    /// JS on histograms, bits.
    JsHist,
    W1Lp,
    W1Sinkhorn,
    /// k-NN KL estimate, nats.
    KlKnn { k: usize },
    /// Unbiased MMD².
    Mmd,
}

impl Metric {
    pub fn is_histogram_based(self) -> bool {
        !matches!(self, Metric::KlKnn { .. } | Metric::Mmd)
    }

    /// Column label in CSV output, e.g. `kl_hist` or `kl_knn_k5`.
    pub fn label(self) -> String {
        match self {
            Metric::KlHist => "kl_hist".into(),
            Metric::TvHist => "tv_hist".into(),
            Metric::JsHist => "js_hist".into(),
            Metric::W1Lp => "w1_lp".into(),
            Metric::W1Sinkhorn => "w1_sinkhorn".into(),
            Metric::KlKnn { k } => format!("kl_knn_k{k}"),
            Metric::Mmd => "mmd".into(),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Accepts the CLI spellings (`kl-hist`, `w1-sinkhorn`, `kl-knn:5`) and the
/// CSV labels (`kl_hist`, `kl_knn_k5`). A bare `kl-knn` means `k = 5`.
impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let metric = match norm.as_str() {
            "kl-hist" => Metric::KlHist,
            "tv-hist" => Metric::TvHist,
            "js-hist" => Metric::JsHist,
            "w1-lp" => Metric::W1Lp,
            "w1-sinkhorn" => Metric::W1Sinkhorn,
            "mmd" => Metric::Mmd,
            "kl-knn" => Metric::KlKnn { k: 5 },
            other => {
                let k = other
                    .strip_prefix("kl-knn:")
                    .or_else(|| other.strip_prefix("kl-knn-k"))
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(|| Error::param(format!("unknown metric {s:?}")))?;
                Metric::KlKnn { k }
            }
        };
        Ok(metric)
    }
}

impl TryFrom<String> for Metric {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Metric> for String {
    fn from(m: Metric) -> String {
        m.label()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub scenario: ScenarioSpec,
    pub metrics: Vec<Metric>,
    /// Sample counts for histogram and transport estimators.
    pub sample_span: Vec<usize>,
    /// Sample counts for the k-NN and MMD estimators.
    pub sample_based_span: Vec<usize>,
    pub bin_span: Vec<usize>,
    pub trials: usize,
    pub seed_base: u64,
    /// Sinkhorn regularisation.
    pub lambda: f64,
    /// MMD kernel bandwidth.
    pub sigma: f64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
}

impl SweepSpec {
    /// A single-cell spec with default parameters.
    pub fn single(scenario: ScenarioSpec, metrics: Vec<Metric>, n: usize, bins: usize) -> Self {
        Self {
            scenario,
            metrics,
            sample_span: vec![n],
            sample_based_span: vec![n],
            bin_span: vec![bins],
            trials: 1,
            seed_base: scenario.seed,
            lambda: SinkhornConfig::default().lambda,
            sigma: DEFAULT_SIGMA,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(Error::param("no metrics requested"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials must be at least 1"));
        }
        let hist = self.metrics.iter().any(|m| m.is_histogram_based());
        let pointwise = self.metrics.iter().any(|m| !m.is_histogram_based());
        if hist && (self.sample_span.is_empty() || self.bin_span.is_empty()) {
            return Err(Error::param("histogram metrics need nonempty sample and bin spans"));
        }
        if pointwise && self.sample_based_span.is_empty() {
            return Err(Error::param(
                "k-NN and MMD metrics need a nonempty sample-based span",
            ));
        }
        if self.sample_span.iter().chain(&self.sample_based_span).any(|&n| n == 0) {
            return Err(Error::param("sample counts must be positive"));
        }
        if self.bin_span.contains(&0) {
            return Err(Error::param("bin counts must be positive"));
        }
        KernelSpec::gaussian(self.sigma)?;
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::param(format!("lambda must be positive, got {}", self.lambda)));
        }
        for m in &self.metrics {
            if let Metric::KlKnn { k: 0 } = m {
                return Err(Error::param("k-NN rank must be at least 1"));
            }
        }
        Ok(())
    }

    fn seed(&self, trial: usize) -> u64 {
        self.seed_base.wrapping_add(trial as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub estimator: Metric,
    pub n_samples: usize,
    /// Bins per dimension; 0 for sample-based estimators.
    pub bins: usize,
    pub trial: usize,
    /// `None` when the cell was skipped.
    pub value: Option<f64>,
    /// Time spent in the estimator call.
    pub runtime_seconds: f64,
    /// Time spent building both histograms of the cell (shared by its estimators).
    pub histogram_seconds: f64,
    /// Sinkhorn convergence; `None` for other estimators.
    pub converged: Option<bool>,
    pub skipped: Option<String>,
}

impl EstimateRecord {
    fn skipped(metric: Metric, n: usize, bins: usize, trial: usize, reason: String) -> Self {
        Self {
            estimator: metric,
            n_samples: n,
            bins,
            trial,
            value: None,
            runtime_seconds: 0.0,
            histogram_seconds: 0.0,
            converged: None,
            skipped: Some(reason),
        }
    }
}

/// Relation checks on the histogram estimates of one (N, K, trial) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellBounds {
    pub n_samples: usize,
    pub bins: usize,
    pub trial: usize,
    pub report: BoundReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepOutput {
    pub records: Vec<EstimateRecord>,
    pub bounds: Vec<CellBounds>,
}

impl SweepOutput {
    /// Group statistics with the relation flags attached.
    pub fn summaries(&self) -> Vec<Summary> {
        attach_bounds(summarize(&self.records), &self.bounds)
    }
}

/// Runs every cell of `spec`. Fails only on an invalid spec.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutput> {
    spec.validate()?;
    let hist_metrics: Vec<Metric> =
        spec.metrics.iter().copied().filter(|m| m.is_histogram_based()).collect();
    let point_metrics: Vec<Metric> =
        spec.metrics.iter().copied().filter(|m| !m.is_histogram_based()).collect();
    let mut counts: Vec<usize> = Vec::new();
    if !hist_metrics.is_empty() {
        counts.extend(&spec.sample_span);
    }
    if !point_metrics.is_empty() {
        counts.extend(&spec.sample_based_span);
    }
    counts.sort_unstable();
    counts.dedup();
    let jobs: Vec<(usize, usize)> = counts
        .iter()
        .flat_map(|&n| (0..spec.trials).map(move |t| (n, t)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    let ctx = JobContext {
        spec,
        hist_metrics: &hist_metrics,
        point_metrics: &point_metrics,
    };
    let outputs: Vec<SweepOutput> =
        pool.install(|| jobs.par_iter().map(|&(n, t)| ctx.run(n, t)).collect());

    let mut out = SweepOutput::default();
    for o in outputs {
        out.records.extend(o.records);
        out.bounds.extend(o.bounds);
    }
    out.records
        .sort_by_key(|r| (r.estimator, r.n_samples, r.bins, r.trial));
    out.bounds.sort_by_key(|b| (b.n_samples, b.bins, b.trial));
    Ok(out)
}

struct JobContext<'a> {
    spec: &'a SweepSpec,
    hist_metrics: &'a [Metric],
    point_metrics: &'a [Metric],
}

impl JobContext<'_> {
    fn run(&self, n: usize, trial: usize) -> SweepOutput {
        let spec = self.spec;
        let do_hist = !self.hist_metrics.is_empty() && spec.sample_span.contains(&n);
        let do_point = !self.point_metrics.is_empty() && spec.sample_based_span.contains(&n);
        let mut out = SweepOutput::default();

        let samples = check_sample_budget(n, spec.scenario.kind).and_then(|_| {
            let scn = spec.scenario.with_seed(spec.seed(trial));
            Ok((sample_joint(&scn, n)?, sample_product_of_marginals(&scn, n)?))
        });
        let (joint, product) = match samples {
            Ok(s) => s,
            Err(e) => {
                let reason = e.to_string();
                if do_hist {
                    for &k in &spec.bin_span {
                        for &m in self.hist_metrics {
                            out.records.push(EstimateRecord::skipped(m, n, k, trial, reason.clone()));
                        }
                    }
                }
                if do_point {
                    for &m in self.point_metrics {
                        out.records.push(EstimateRecord::skipped(m, n, 0, trial, reason.clone()));
                    }
                }
                return out;
            }
        };

        if do_hist {
            for &k in &spec.bin_span {
                self.histogram_cell(&joint, &product, n, k, trial, &mut out);
            }
        }
        if do_point {
            for &m in self.point_metrics {
                let t0 = Instant::now();
                let value = match m {
                    Metric::KlKnn { k } => kl_knn(&joint, &product, &KnnConfig::new(k)),
                    Metric::Mmd => KernelSpec::gaussian(spec.sigma)
                        .and_then(|ks| mmd2_unbiased(&joint, &product, &ks))
                        .map(|e| e.value),
                    _ => unreachable!("histogram metric in sample-based list"),
                };
                out.records.push(finish(m, n, 0, trial, t0, 0.0, value.map(|v| (v, None))));
            }
        }
        out
    }

    fn histogram_cell(
        &self,
        joint: &SampleMatrix,
        product: &SampleMatrix,
        n: usize,
        k: usize,
        trial: usize,
        out: &mut SweepOutput,
    ) {
        let t0 = Instant::now();
        let grids = joint_range(joint, product).and_then(|range| {
            Ok((build_histogram(joint, k, &range)?, build_histogram(product, k, &range)?))
        });
        let hist_s = t0.elapsed().as_secs_f64();
        let (p, q) = match grids {
            Ok(g) => g,
            Err(e) => {
                for &m in self.hist_metrics {
                    out.records.push(EstimateRecord::skipped(m, n, k, trial, e.to_string()));
                }
                return;
            }
        };

        let mut values = BTreeMap::new();
        for &m in self.hist_metrics {
            let t0 = Instant::now();
            let result = self.histogram_metric(m, &p, &q);
            let rec = finish(m, n, k, trial, t0, hist_s, result);
            if let Some(v) = rec.value {
                values.insert(m, v);
            }
            out.records.push(rec);
        }

        if let (Some(&kl), Some(&tv), Some(&js)) = (
            values.get(&Metric::KlHist),
            values.get(&Metric::TvHist),
            values.get(&Metric::JsHist),
        ) {
            let js = crate::hist_divergence::DivergenceValue {
                kind: crate::hist_divergence::DivergenceKind::Js,
                value: js,
                log_base: LogBase::Base2,
                filled_bins: 0,
            };
            let w1 = values.get(&Metric::W1Lp).copied();
            // continuous data: d_min = 0, unbounded support
            if let Ok(report) =
                check_relations(kl.max(0.0), tv, js, w1, 0.0, f64::INFINITY, BOUND_TOLERANCE)
            {
                out.bounds.push(CellBounds {
                    n_samples: n,
                    bins: k,
                    trial,
                    report,
                });
            }
        }
    }

    fn histogram_metric(
        &self,
        m: Metric,
        p: &HistogramGrid,
        q: &HistogramGrid,
    ) -> Result<(f64, Option<bool>)> {
        match m {
            Metric::KlHist => Ok((kl_hist(p, q)?.value, None)),
            Metric::TvHist => Ok((tv_hist(p, q)?.value, None)),
            Metric::JsHist => Ok((js_hist(p, q, LogBase::Base2)?.value, None)),
            Metric::W1Lp => {
                let tp = TransportProblem::from_histograms(p, q, DEFAULT_COST_ENTRY_LIMIT)?;
                Ok((solve_lp(&tp)?.plan.objective, None))
            }
            Metric::W1Sinkhorn => {
                let tp = TransportProblem::from_histograms(p, q, DEFAULT_COST_ENTRY_LIMIT)?;
                let sol = sinkhorn(&tp, &SinkhornConfig::with_lambda(self.spec.lambda))?;
                Ok((sol.plan.objective, Some(sol.converged)))
            }
            Metric::KlKnn { .. } | Metric::Mmd => unreachable!("sample-based metric"),
        }
    }
}

fn check_sample_budget(n: usize, kind: ScenarioKind) -> Result<()> {
    let requested = n as u128 * kind.dim() as u128;
    if requested > DEFAULT_SAMPLE_ENTRY_LIMIT as u128 {
        return Err(Error::Resource {
            what: "sample matrix entries",
            requested,
            limit: DEFAULT_SAMPLE_ENTRY_LIMIT as u128,
        });
    }
    Ok(())
}

fn finish(
    m: Metric,
    n: usize,
    bins: usize,
    trial: usize,
    t0: Instant,
    hist_s: f64,
    result: Result<(f64, Option<bool>)>,
) -> EstimateRecord {
    let runtime = t0.elapsed().as_secs_f64();
    match result {
        Ok((v, converged)) => EstimateRecord {
            estimator: m,
            n_samples: n,
            bins,
            trial,
            value: Some(v),
            runtime_seconds: runtime,
            histogram_seconds: hist_s,
            converged,
            skipped: None,
        },
        Err(e) => EstimateRecord {
            histogram_seconds: hist_s,
            ..EstimateRecord::skipped(m, n, bins, trial, e.to_string())
        },
    }
}

/// Statistics of one (estimator, N, K) group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub estimator: Metric,
    pub n_samples: usize,
    pub bins: usize,
    /// Mean over trials that produced a value.
    pub mean: Option<f64>,
    /// Sample standard deviation (n − 1 denominator), 0 for a single value.
    pub std: Option<f64>,
    pub mean_runtime_s: f64,
    pub mean_histogram_s: f64,
    /// Trials that produced a value.
    pub trials: usize,
    pub skipped: usize,
    pub skip_reason: Option<String>,
    /// Sinkhorn trials that converged.
    pub converged: Option<usize>,
    /// Relation flags, aggregated over trials; empty for sample-based rows.
    pub relations: Vec<(RelationId, RelationStatus)>,
}

/// Groups records by (estimator, N, K), ordered by estimator, then N, then K.
pub fn summarize(records: &[EstimateRecord]) -> Vec<Summary> {
    let mut groups: BTreeMap<(Metric, usize, usize), Vec<&EstimateRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.estimator, r.n_samples, r.bins)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((estimator, n_samples, bins), rs)| {
            let values: Vec<f64> = rs.iter().filter_map(|r| r.value).collect();
            let (mean, std) = mean_std(&values);
            let ran: Vec<&&EstimateRecord> = rs.iter().filter(|r| r.value.is_some()).collect();
            let avg = |f: fn(&EstimateRecord) -> f64| {
                if ran.is_empty() {
                    0.0
                } else {
                    ran.iter().map(|r| f(r)).sum::<f64>() / ran.len() as f64
                }
            };
            let converged = if estimator == Metric::W1Sinkhorn {
                Some(rs.iter().filter(|r| r.converged == Some(true)).count())
            } else {
                None
            };
            Summary {
                estimator,
                n_samples,
                bins,
                mean,
                std,
                mean_runtime_s: avg(|r| r.runtime_seconds),
                mean_histogram_s: avg(|r| r.histogram_seconds),
                trials: values.len(),
                skipped: rs.len() - values.len(),
                skip_reason: rs.iter().find_map(|r| r.skipped.clone()),
                converged,
                relations: Vec::new(),
            }
        })
        .collect()
}

/// Mean and sample standard deviation; `(None, None)` for no values.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    match values.len() {
        0 => (None, None),
        1 => (Some(values[0]), Some(0.0)),
        n => {
            let mean = values.iter().sum::<f64>() / n as f64;
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (Some(mean), Some((ss / (n - 1) as f64).sqrt()))
        }
    }
}

/// Attaches relation flags to the histogram-based rows whose (N, K) cells
/// were checked. A relation is violated if it failed in any trial.
pub fn attach_bounds(mut summaries: Vec<Summary>, bounds: &[CellBounds]) -> Vec<Summary> {
    let mut by_cell: BTreeMap<(usize, usize), Vec<&BoundReport>> = BTreeMap::new();
    for b in bounds {
        by_cell.entry((b.n_samples, b.bins)).or_default().push(&b.report);
    }
    for s in summaries.iter_mut().filter(|s| s.estimator.is_histogram_based()) {
        let Some(reports) = by_cell.get(&(s.n_samples, s.bins)) else {
            continue;
        };
        s.relations = RelationId::CHAIN
            .iter()
            .map(|&id| {
                let statuses = reports.iter().filter_map(|r| r.get(id)).map(|r| r.status);
                let status = statuses
                    .reduce(|acc, st| match (acc, st) {
                        (RelationStatus::Violated, _) | (_, RelationStatus::Violated) => {
                            RelationStatus::Violated
                        }
                        (RelationStatus::Satisfied, other) => other,
                        (other, _) => other,
                    })
                    .unwrap_or(RelationStatus::NotAvailable);
                (id, status)
            })
            .collect();
    }
    summaries
}

fn sci(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes one CSV row per summary.
pub fn write_csv<W: Write>(summaries: &[Summary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = vec![
        "estimator",
        "n_samples",
        "bins",
        "mean",
        "std",
        "mean_runtime_s",
        "hist_runtime_s",
        "trials",
        "skipped",
        "skip_reason",
        "converged",
    ];
    header.extend(RelationId::CHAIN.iter().map(|id| id.name()));
    w.write_record(&header)?;
    for s in summaries {
        let mut row = vec![
            s.estimator.label(),
            s.n_samples.to_string(),
            s.bins.to_string(),
            s.mean.map(sci).unwrap_or_default(),
            s.std.map(sci).unwrap_or_default(),
            sci(s.mean_runtime_s),
            sci(s.mean_histogram_s),
            s.trials.to_string(),
            s.skipped.to_string(),
            s.skip_reason.clone().unwrap_or_default(),
            s.converged.map(|c| c.to_string()).unwrap_or_default(),
        ];
        for id in RelationId::CHAIN {
            let status = s.relations.iter().find(|(r, _)| *r == id).map(|(_, st)| st.label());
            row.push(status.unwrap_or_default().to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<summary csv>", e))?;
    Ok(())
}

/// Writes the summary CSV to `path`.
pub fn emit_csv(summaries: &[Summary], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(summaries, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Writes per-trial records as CSV (value columns are bit-reproducible).
pub fn write_records_csv<W: Write>(records: &[EstimateRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "estimator",
        "n_samples",
        "bins",
        "trial",
        "value",
        "runtime_s",
        "hist_runtime_s",
        "converged",
        "skipped",
    ])?;
    for r in records {
        w.write_record([
            r.estimator.label(),
            r.n_samples.to_string(),
            r.bins.to_string(),
            r.trial.to_string(),
            r.value.map(|v| format!("{v:.17e}")).unwrap_or_default(),
            sci(r.runtime_seconds),
            sci(r.histogram_seconds),
            r.converged.map(|c| c.to_string()).unwrap_or_default(),
            r.skipped.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<records csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata<'a> {
    pub generator: &'static str,
    pub version: &'static str,
    pub rng: &'static str,
    pub units: BTreeMap<&'static str, &'static str>,
    pub spec: &'a SweepSpec,
}

impl<'a> RunMetadata<'a> {
    pub fn new(spec: &'a SweepSpec) -> Self {
        let units = BTreeMap::from([
            ("kl_hist", "nats"),
            ("kl_knn", "nats"),
            ("js_hist", "bits"),
            ("tv_hist", "unitless"),
            ("w1_lp", "data units"),
            ("w1_sinkhorn", "data units, transport cost of the regularised plan"),
            ("mmd", "squared RKHS distance"),
        ]);
        Self {
            generator: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            rng: RNG_ALGORITHM,
            units,
            spec,
        }
    }
}

/// Writes the JSON sidecar describing a run.
pub fn emit_metadata(spec: &SweepSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &RunMetadata::new(spec))?;
    Ok(())
}

/// Default spans for the two sweep kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Capped at N = 10⁶ and K = 24 so that full sweeps finish in minutes.
    Desk,
    /// The full experimental spans.
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::param(format!("unknown preset {other:?}"))),
        }
    }
}

pub const DEFAULT_TRIALS: usize = 10;
pub const DEFAULT_BINS: usize = 24;

impl Preset {
    /// Sample counts for histogram and transport estimators.
    pub fn sample_span(self) -> Vec<usize> {
        let mut span = vec![100, 500, 1_000, 2_000, 3_000, 5_000, 10_000, 100_000, 1_000_000];
        if self == Preset::Paper {
            span.extend([10_000_000, 100_000_000]);
        }
        span
    }

    /// Sample counts for k-NN and MMD.
    pub fn sample_based_span(self) -> Vec<usize> {
        vec![100, 500, 1_000, 2_000, 3_000, 4_000, 5_000, 7_000, 10_000, 20_000]
    }

    pub fn bin_span(self) -> Vec<usize> {
        match self {
            Preset::Desk => vec![8, 10, 12, 16, 20, 24],
            Preset::Paper => vec![8, 10, 12, 16, 20, 24, 28, 30],
        }
    }

    /// Sample count of a bin sweep.
    pub fn bin_sweep_samples(self) -> usize {
        match self {
            Preset::Desk => 1_000_000,
            Preset::Paper => 10_000_000,
        }
    }

    fn base(scenario: ScenarioSpec, metrics: Vec<Metric>) -> SweepSpec {
        SweepSpec {
            trials: DEFAULT_TRIALS,
            ..SweepSpec::single(scenario, metrics, 1, DEFAULT_BINS)
        }
    }

    /// Sweep over sample counts at [`DEFAULT_BINS`] bins per dimension.
    pub fn sample_sweep(self, scenario: ScenarioSpec, metrics: Vec<Metric>) -> SweepSpec {
        SweepSpec {
            sample_span: self.sample_span(),
            sample_based_span: self.sample_based_span(),
            ..Self::base(scenario, metrics)
        }
    }

    /// Sweep over bin counts at a fixed sample count. Sample-based metrics do
    /// not depend on bins and are dropped.
    pub fn bin_sweep(self, scenario: ScenarioSpec, metrics: Vec<Metric>) -> SweepSpec {
        let metrics = metrics.into_iter().filter(|m| m.is_histogram_based()).collect();
        SweepSpec {
            sample_span: vec![self.bin_sweep_samples()],
            sample_based_span: Vec::new(),
            bin_span: self.bin_span(),
            ..Self::base(scenario, metrics)
        }
    }
}
