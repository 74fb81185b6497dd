//! `infoleak`: estimate leakage for one cell, run convergence sweeps, or
//! print the closed-form references of the share scenario.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use infoleak_core::harness::{
    emit_csv, emit_metadata, run_sweep, write_csv, write_records_csv, Metric, Preset, SweepOutput,
    SweepSpec, DEFAULT_BINS,
};
use infoleak_core::histogram::{build_histogram, joint_range};
use infoleak_core::oracles::{nats_to_bits, OracleReport};
use infoleak_core::scenarios::{sample_joint, sample_product_of_marginals};
use infoleak_core::transport::{solve_lp, DEFAULT_COST_ENTRY_LIMIT};
use infoleak_core::{ScenarioKind, ScenarioSpec, TransportProblem};

const DEFAULT_ESTIMATE_N: usize = 100_000;
const DEFAULT_KNN_K: [usize; 4] = [1, 2, 5, 10];

#[derive(Parser, Debug)]
#[command(name = "infoleak", version, about = "Leakage estimators for secret-sharing views")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the estimators on a single (N, K) cell.
    Estimate {
        #[command(flatten)]
        opts: Opts,
        /// Write the W1 transport plan of trial 0 as CSV (i,j,mass).
        #[arg(long)]
        plan_out: Option<PathBuf>,
        /// Write the joint and product histograms of trial 0 into this directory.
        #[arg(long)]
        hist_out: Option<PathBuf>,
    },
    /// Sweep over sample counts at a fixed bin count.
    SweepSamples {
        #[command(flatten)]
        opts: Opts,
    },
    /// Sweep over bin counts at a fixed sample count.
    SweepBins {
        #[command(flatten)]
        opts: Opts,
    },
    /// Print the closed-form references of the share scenario as JSON.
    Oracle {
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// JSON file with the same keys as the long flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// share | three-party-mult
    #[arg(long)]
    scenario: Option<String>,
    /// kl-hist, tv-hist, js-hist, w1-lp, w1-sinkhorn, kl-knn[:k], mmd (repeatable)
    #[arg(long = "metric")]
    metric: Vec<String>,
    /// Sample count(s).
    #[arg(long, num_args = 1..)]
    n: Vec<usize>,
    /// Bins per dimension.
    #[arg(long, num_args = 1..)]
    bins: Vec<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed; trial t uses seed + t.
    #[arg(long)]
    seed: Option<u64>,
    /// Sinkhorn regularisation.
    #[arg(long)]
    lambda: Option<f64>,
    /// Neighbour ranks for a bare kl-knn metric.
    #[arg(long, num_args = 1..)]
    k: Vec<usize>,
    /// MMD kernel bandwidth.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    sigma_x_sq: Option<f64>,
    #[arg(long)]
    sigma_r_sq: Option<f64>,
    /// Summary CSV path; per-trial records and run metadata are written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// desk | paper
    #[arg(long)]
    preset: Option<String>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ConfigFile {
    scenario: Option<String>,
    #[serde(alias = "metrics")]
    metric: Option<OneOrMany<String>>,
    n: Option<OneOrMany<usize>>,
    bins: Option<OneOrMany<usize>>,
    trials: Option<usize>,
    seed: Option<u64>,
    lambda: Option<f64>,
    k: Option<OneOrMany<usize>>,
    sigma: Option<f64>,
    #[serde(alias = "sigma_x_sq")]
    sigma_x_sq: Option<f64>,
    #[serde(alias = "sigma_r_sq")]
    sigma_r_sq: Option<f64>,
    out: Option<PathBuf>,
    preset: Option<String>,
    workers: Option<usize>,
}

impl Opts {
    /// Fills unset flags from `--config`.
    fn merged(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = fs::read_to_string(&path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: ConfigFile = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        fn fill<T>(flag: &mut Option<T>, cfg: Option<T>) {
            if flag.is_none() {
                *flag = cfg;
            }
        }
        fn fill_vec<T>(flag: &mut Vec<T>, cfg: Option<OneOrMany<T>>) {
            if flag.is_empty() {
                if let Some(v) = cfg {
                    *flag = v.into_vec();
                }
            }
        }
        fill(&mut self.scenario, cfg.scenario);
        fill_vec(&mut self.metric, cfg.metric);
        fill_vec(&mut self.n, cfg.n);
        fill_vec(&mut self.bins, cfg.bins);
        fill(&mut self.trials, cfg.trials);
        fill(&mut self.seed, cfg.seed);
        fill(&mut self.lambda, cfg.lambda);
        fill_vec(&mut self.k, cfg.k);
        fill(&mut self.sigma, cfg.sigma);
        fill(&mut self.sigma_x_sq, cfg.sigma_x_sq);
        fill(&mut self.sigma_r_sq, cfg.sigma_r_sq);
        fill(&mut self.out, cfg.out);
        fill(&mut self.preset, cfg.preset);
        fill(&mut self.workers, cfg.workers);
        Ok(self)
    }

    fn kind(&self) -> Result<ScenarioKind> {
        Ok(self.scenario.as_deref().unwrap_or("share").parse()?)
    }

    fn scenario(&self) -> Result<ScenarioSpec> {
        let base = ScenarioSpec::standard(self.kind()?, self.seed.unwrap_or(0));
        Ok(ScenarioSpec::new(
            base.kind,
            self.sigma_x_sq.unwrap_or(base.sigma_x_sq),
            self.sigma_r_sq.unwrap_or(base.sigma_r_sq),
            base.seed,
        )?)
    }

    fn preset(&self) -> Result<Preset> {
        Ok(self.preset.as_deref().unwrap_or("desk").parse()?)
    }

    /// Requested metrics, with a bare `kl-knn` expanded over `--k`.
    fn metrics(&self, default: &[Metric]) -> Result<Vec<Metric>> {
        let ks = if self.k.is_empty() { DEFAULT_KNN_K.to_vec() } else { self.k.clone() };
        if self.metric.is_empty() {
            return Ok(default
                .iter()
                .flat_map(|&m| match m {
                    Metric::KlKnn { .. } => ks.iter().map(|&k| Metric::KlKnn { k }).collect(),
                    m => vec![m],
                })
                .collect());
        }
        let mut out = Vec::new();
        for name in &self.metric {
            let bare = matches!(name.trim().to_ascii_lowercase().as_str(), "kl-knn" | "kl_knn");
            if bare {
                out.extend(ks.iter().map(|&k| Metric::KlKnn { k }));
            } else {
                out.push(name.parse()?);
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    fn spec_defaults(&self, spec: SweepSpec) -> SweepSpec {
        SweepSpec {
            trials: self.trials.unwrap_or(spec.trials),
            lambda: self.lambda.unwrap_or(spec.lambda),
            sigma: self.sigma.unwrap_or(spec.sigma),
            workers: self.workers.unwrap_or(spec.workers),
            ..spec
        }
    }
}

fn all_metrics() -> Vec<Metric> {
    let mut v = histogram_metrics();
    v.extend([Metric::KlKnn { k: 0 }, Metric::Mmd]);
    v
}

fn histogram_metrics() -> Vec<Metric> {
    vec![Metric::KlHist, Metric::TvHist, Metric::JsHist, Metric::W1Lp, Metric::W1Sinkhorn]
}

fn single<T: Copy>(name: &str, values: &[T], default: T) -> Result<T> {
    match values {
        [] => Ok(default),
        [v] => Ok(*v),
        _ => bail!("--{name} takes a single value here"),
    }
}

fn estimate_spec(opts: &Opts) -> Result<SweepSpec> {
    let n = single("n", &opts.n, DEFAULT_ESTIMATE_N)?;
    let bins = single("bins", &opts.bins, DEFAULT_BINS)?;
    let spec = SweepSpec::single(opts.scenario()?, opts.metrics(&all_metrics())?, n, bins);
    Ok(opts.spec_defaults(spec))
}

fn sweep_samples_spec(opts: &Opts) -> Result<SweepSpec> {
    let preset = opts.preset()?;
    let scenario = opts.scenario()?;
    let mut spec = preset.sample_sweep(scenario, opts.metrics(&all_metrics())?);
    if !opts.n.is_empty() {
        spec.sample_span = opts.n.clone();
        spec.sample_based_span = opts.n.clone();
    }
    spec.bin_span = vec![single("bins", &opts.bins, DEFAULT_BINS)?];
    Ok(opts.spec_defaults(spec))
}

fn sweep_bins_spec(opts: &Opts) -> Result<SweepSpec> {
    let preset = opts.preset()?;
    let metrics = opts.metrics(&histogram_metrics())?;
    if let Some(m) = metrics.iter().find(|m| !m.is_histogram_based()) {
        bail!("{m} does not depend on the bin count; use sweep-samples");
    }
    let mut spec = preset.bin_sweep(opts.scenario()?, metrics);
    spec.sample_span = vec![single("n", &opts.n, preset.bin_sweep_samples())?];
    if !opts.bins.is_empty() {
        spec.bin_span = opts.bins.clone();
    }
    Ok(opts.spec_defaults(spec))
}

/// `out.csv` → `out.records.csv`, `out.meta.json`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn report(spec: &SweepSpec, out: &SweepOutput, path: Option<&Path>) -> Result<()> {
    let summaries = out.summaries();
    match path {
        Some(path) => {
            emit_csv(&summaries, path)?;
            let records = sibling(path, "records.csv");
            let file = fs::File::create(&records)
                .with_context(|| format!("cannot write {}", records.display()))?;
            write_records_csv(&out.records, io::BufWriter::new(file))?;
            emit_metadata(spec, sibling(path, "meta.json"))?;
            eprintln!("wrote {}", path.display());
        }
        None => write_csv(&summaries, io::stdout().lock())?,
    }
    let skipped = out.records.iter().filter(|r| r.skipped.is_some()).count();
    if skipped > 0 {
        eprintln!("{skipped} of {} cells skipped", out.records.len());
        for r in out.records.iter().filter(|r| r.skipped.is_some()).take(3) {
            eprintln!(
                "  {} N={} K={} trial {}: {}",
                r.estimator,
                r.n_samples,
                r.bins,
                r.trial,
                r.skipped.as_deref().unwrap_or_default()
            );
        }
    }
    Ok(())
}

fn write_artifacts(spec: &SweepSpec, plan_out: Option<&Path>, hist_out: Option<&Path>) -> Result<()> {
    if plan_out.is_none() && hist_out.is_none() {
        return Ok(());
    }
    let n = spec.sample_span[0];
    let k = spec.bin_span[0];
    let scn = spec.scenario.with_seed(spec.seed_base);
    let (joint, product) = (sample_joint(&scn, n)?, sample_product_of_marginals(&scn, n)?);
    let range = joint_range(&joint, &product)?;
    let (p, q) = (build_histogram(&joint, k, &range)?, build_histogram(&product, k, &range)?);
    if let Some(dir) = hist_out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        p.save_csv(dir.join("joint.csv"))?;
        q.save_csv(dir.join("product.csv"))?;
    }
    if let Some(path) = plan_out {
        match TransportProblem::from_histograms(&p, &q, DEFAULT_COST_ENTRY_LIMIT)
            .and_then(|tp| solve_lp(&tp))
        {
            Ok(sol) => sol.plan.save_csv(path)?,
            Err(e) => eprintln!("transport plan not written: {e}"),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleOutput {
    scenario: &'static str,
    sigma_x_sq: f64,
    sigma_r_sq: f64,
    kl_nats: f64,
    kl_bits: f64,
    /// min(Pinsker, Bretagnolle–Huber)
    tv_upper: f64,
    js_upper_bits: f64,
    w2: f64,
}

fn oracle(opts: &Opts) -> Result<()> {
    let scn = opts.scenario()?;
    if scn.kind != ScenarioKind::Share {
        bail!("closed-form references exist only for the share scenario");
    }
    let r = OracleReport::share(scn.sigma_x_sq, scn.sigma_r_sq)?;
    let out = OracleOutput {
        scenario: scn.kind.name(),
        sigma_x_sq: scn.sigma_x_sq,
        sigma_r_sq: scn.sigma_r_sq,
        kl_nats: r.kl_exact,
        kl_bits: nats_to_bits(r.kl_exact),
        tv_upper: r.tv_upper,
        js_upper_bits: r.js_upper,
        w2: r.w2_exact,
    };
    let mut stdout = io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &out)?;
    writeln!(stdout)?;
    Ok(())
}

enum Failure {
    /// Bad flags, config or parameters.
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    let usage = Failure::Usage;
    match cli.command {
        Command::Estimate { opts, plan_out, hist_out } => {
            let opts = opts.merged().map_err(usage)?;
            let spec = estimate_spec(&opts).map_err(usage)?;
            spec.validate().map_err(|e| usage(e.into()))?;
            let out = run_sweep(&spec).map_err(|e| Failure::Runtime(e.into()))?;
            report(&spec, &out, opts.out.as_deref()).map_err(Failure::Runtime)?;
            write_artifacts(&spec, plan_out.as_deref(), hist_out.as_deref()).map_err(Failure::Runtime)
        }
        Command::SweepSamples { opts } => sweep(opts, sweep_samples_spec),
        Command::SweepBins { opts } => sweep(opts, sweep_bins_spec),
        Command::Oracle { opts } => {
            let opts = opts.merged().map_err(usage)?;
            oracle(&opts).map_err(usage)
        }
    }
}

fn sweep(opts: Opts, build: fn(&Opts) -> Result<SweepSpec>) -> std::result::Result<(), Failure> {
    let opts = opts.merged().map_err(Failure::Usage)?;
    let spec = build(&opts).map_err(Failure::Usage)?;
    spec.validate().map_err(|e| Failure::Usage(e.into()))?;
    let out = run_sweep(&spec).map_err(|e| Failure::Runtime(e.into()))?;
    report(&spec, &out, opts.out.as_deref()).map_err(Failure::Runtime)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
