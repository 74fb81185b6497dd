//! Sample generation for the leakage scenarios.
//!
//! Two secret-sharing scenarios are modelled, both with zero-mean Gaussian
//! secrets and masks:
//!
//! * [`ScenarioKind::Share`]: a secret `X ~ N(0, σx²)` and its share `X − R`
//!   with `R ~ N(0, σr²)`. Rows are `(x, x − r)`.
//! * [`ScenarioKind::ThreePartyMult`]: three-party multiplication of secrets
//!   `S, T ~ N(0, σx²)` shared with the degree-1 polynomials
//!   `f(x) = s + (r − s)x` at evaluation points `−1, 1, 2`. Party 1 holds no
//!   input; its view is `(2S − R_s, 2T − R_t, R_t R_s, (−S + 2R_s)(−T + 2R_t))`.
//!   Rows are `(s, view...)`.
//!
//! Column 0 is always the secret and columns `1..d` the view, so leakage is
//! the distance between [`sample_joint`] and [`sample_product_of_marginals`].
//!
//! # Random streams
//!
//! All sampling uses ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64(seed)`; each role draws from its own ChaCha stream id (see
//! [`RNG_ALGORITHM`]). Standard normals come from `rand_distr::StandardNormal`
//! (ziggurat). For a fixed `(spec, seed)` output is bit-identical across runs
//! and threads.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identity of the random generator, recorded in harness metadata so other
/// implementations can reproduce sample streams.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9, seed_from_u64); \
normals via rand_distr 0.5 StandardNormal (ziggurat); \
streams: joint=0, product-secret=1, product-view=2, gaussian=3";

const STREAM_JOINT: u64 = 0;
const STREAM_PRODUCT_SECRET: u64 = 1;
const STREAM_PRODUCT_VIEW: u64 = 2;
const STREAM_GAUSSIAN: u64 = 3;

/// Eigenvalues of a covariance may dip this far below zero and still count as PSD.
pub const PSD_TOLERANCE: f64 = 1e-10;

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `N` rows of `d`-dimensional observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl SampleMatrix {
    /// Wraps row-major `data` of `n` rows with `d` columns.
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::param(format!(
                "sample matrix needs at least one row and column, got {n}x{d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::param(format!(
                "sample matrix {n}x{d} needs {} values, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!(
                "non-finite sample at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { data, n, d })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::param(format!(
                    "row {i} has {} columns, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), d, data)
    }

    /// Number of rows `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension `d`.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Keeps the first `n` rows.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let n = n.min(self.n);
        Self::new(n, self.d, self.data[..n * self.d].to_vec())
    }

    /// Applies `f` to every entry, keeping the shape.
    pub fn map(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let d = self.d;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(idx, &v)| f(idx % d, v))
            .collect();
        Self::new(self.n, self.d, data)
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.d];
        for r in self.rows() {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= self.n as f64);
        means
    }

    /// Sample covariance with the unbiased `N − 1` denominator (zero when `N = 1`).
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let means = self.column_means();
        let mut cov = vec![vec![0.0; self.d]; self.d];
        for r in self.rows() {
            for a in 0..self.d {
                let da = r[a] - means[a];
                for b in a..self.d {
                    cov[a][b] += da * (r[b] - means[b]);
                }
            }
        }
        let denom = (self.n.max(2) - 1) as f64;
        for a in 0..self.d {
            for b in a..self.d {
                cov[a][b] /= denom;
                cov[b][a] = cov[a][b];
            }
        }
        cov
    }
}

/// Mean vector and covariance matrix of a multivariate normal distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianSpec {
    /// Validates that the covariance is square, symmetric and positive
    /// semi-definite (eigenvalues ≥ −[`PSD_TOLERANCE`]).
    pub fn new(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::param("Gaussian needs dimension ≥ 1"));
        }
        if covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
            return Err(Error::param(format!("covariance must be {d}x{d}")));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| covariance[i][j]);
        Self::from_matrix(DVector::from_vec(mean), cov)
    }

    pub fn from_matrix(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::param(format!("covariance must be {d}x{d}")));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("Gaussian parameters must be finite"));
        }
        let scale = covariance.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::param(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let sym = (&covariance + covariance.transpose()) * 0.5;
        let min_eig = SymmetricEigen::new(sym.clone()).eigenvalues.min();
        if min_eig < -PSD_TOLERANCE {
            return Err(Error::param(format!(
                "covariance is not positive semi-definite (eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self {
            mean,
            covariance: sym,
        })
    }

    /// Zero-mean Gaussian with the given covariance.
    pub fn centered(covariance: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(vec![0.0; covariance.len()], covariance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// A factor `L` with `L Lᵀ = Σ`: Cholesky when Σ is positive definite,
    /// otherwise `V diag(√max(λ, 0))` from the symmetric eigendecomposition.
    fn sampling_factor(&self) -> DMatrix<f64> {
        if let Some(chol) = self.covariance.clone().cholesky() {
            return chol.l();
        }
        let eig = SymmetricEigen::new(self.covariance.clone());
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&roots)
    }
}

/// I.i.d. draws from `spec`; deterministic in `seed`.
pub fn sample_gaussian(spec: &GaussianSpec, n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::param("sample count must be ≥ 1"));
    }
    let d = spec.dim();
    let factor = spec.sampling_factor();
    let mut rng = stream_rng(seed, STREAM_GAUSSIAN);
    let mut z = vec![0.0; d];
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        for i in 0..d {
            let acc: f64 = z.iter().enumerate().map(|(j, zj)| factor[(i, j)] * zj).sum();
            data.push(spec.mean[i] + acc);
        }
    }
    SampleMatrix::new(n, d, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// A secret and one additive share of it: rows `(x, x − r)`.
    Share,
    /// Party 1's view of a three-party multiplication: rows `(s, view...)`.
    ThreePartyMult,
}

impl ScenarioKind {
    /// Number of columns in a sample row (secret plus view).
    pub fn dim(self) -> usize {
        match self {
            ScenarioKind::Share => 2,
            ScenarioKind::ThreePartyMult => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Share => "share",
            ScenarioKind::ThreePartyMult => "three-party-mult",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "share" => Ok(ScenarioKind::Share),
            "three-party-mult" | "threepartymult" | "mult" => Ok(ScenarioKind::ThreePartyMult),
            other => Err(Error::param(format!("unknown scenario {other:?}"))),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScenarioSpec")]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub sigma_x_sq: f64,
    pub sigma_r_sq: f64,
    pub seed: u64,
}

#[derive(Deserialize)]
struct RawScenarioSpec {
    kind: ScenarioKind,
    sigma_x_sq: f64,
    sigma_r_sq: f64,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<RawScenarioSpec> for ScenarioSpec {
    type Error = Error;

    fn try_from(raw: RawScenarioSpec) -> Result<Self> {
        ScenarioSpec::new(raw.kind, raw.sigma_x_sq, raw.sigma_r_sq, raw.seed)
    }
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, sigma_x_sq: f64, sigma_r_sq: f64, seed: u64) -> Result<Self> {
        for (name, v) in [("sigma_x_sq", sigma_x_sq), ("sigma_r_sq", sigma_r_sq)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(Self {
            kind,
            sigma_x_sq,
            sigma_r_sq,
            seed,
        })
    }

    /// The experimental setting: σx² = 1, σr² = 10.
    pub fn standard(kind: ScenarioKind, seed: u64) -> Self {
        Self {
            kind,
            sigma_x_sq: 1.0,
            sigma_r_sq: 10.0,
            seed,
        }
    }

    /// Skips variance validation; used by tests to exercise degenerate inputs.
    #[doc(hidden)]
    pub fn unchecked(kind: ScenarioKind, sigma_x_sq: f64, sigma_r_sq: f64, seed: u64) -> Self {
        Self {
            kind,
            sigma_x_sq,
            sigma_r_sq,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }
}

fn fill_rows(
    scn: &ScenarioSpec,
    n: usize,
    rng: &mut ChaCha20Rng,
    mut masks: Option<&mut Vec<f64>>,
) -> Vec<f64> {
    let sx = scn.sigma_x_sq.sqrt();
    let sr = scn.sigma_r_sq.sqrt();
    let mut normal = |scale: f64| -> f64 { scale * rng.sample::<f64, _>(StandardNormal) };
    let mut data = Vec::with_capacity(n * scn.dim());
    match scn.kind {
        ScenarioKind::Share => {
            for _ in 0..n {
                let x = normal(sx);
                let r = normal(sr);
                if let Some(m) = masks.as_deref_mut() {
                    m.push(r);
                }
                data.extend_from_slice(&[x, x - r]);
            }
        }
        ScenarioKind::ThreePartyMult => {
            for _ in 0..n {
                let s = normal(sx);
                let t = normal(sx);
                let rs = normal(sr);
                let rt = normal(sr);
                data.extend_from_slice(&[
                    s,
                    2.0 * s - rs,
                    2.0 * t - rt,
                    rt * rs,
                    (-s + 2.0 * rs) * (-t + 2.0 * rt),
                ]);
            }
        }
    }
    data
}

/// Samples of the joint distribution of (secret, view).
pub fn sample_joint(scn: &ScenarioSpec, n: usize) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::param("sample count must be ≥ 1"));
    }
    let mut rng = stream_rng(scn.seed, STREAM_JOINT);
    SampleMatrix::new(n, scn.dim(), fill_rows(scn, n, &mut rng, None))
}

/// [`sample_joint`] for the share scenario, also returning the mask `r` of
/// every row so that `column1 = column0 − r` can be checked exactly.
#[doc(hidden)]
pub fn sample_share_with_masks(scn: &ScenarioSpec, n: usize) -> Result<(SampleMatrix, Vec<f64>)> {
    if scn.kind != ScenarioKind::Share {
        return Err(Error::param("mask hook only applies to the share scenario"));
    }
    if n == 0 {
        return Err(Error::param("sample count must be ≥ 1"));
    }
    let mut rng = stream_rng(scn.seed, STREAM_JOINT);
    let mut masks = Vec::with_capacity(n);
    let data = fill_rows(scn, n, &mut rng, Some(&mut masks));
    Ok((SampleMatrix::new(n, scn.dim(), data)?, masks))
}

/// Samples of `P_secret ⊗ P_view`: two independent joint batches are drawn
/// and column 0 of the first is spliced with columns `1..d` of the second.
pub fn sample_product_of_marginals(scn: &ScenarioSpec, n: usize) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::param("sample count must be ≥ 1"));
    }
    let d = scn.dim();
    let secret = fill_rows(scn, n, &mut stream_rng(scn.seed, STREAM_PRODUCT_SECRET), None);
    let mut data = fill_rows(scn, n, &mut stream_rng(scn.seed, STREAM_PRODUCT_VIEW), None);
    for i in 0..n {
        data[i * d] = secret[i * d];
    }
    SampleMatrix::new(n, d, data)
}
