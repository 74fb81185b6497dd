//! Closed-form references for Gaussian distributions.
//!
//! Everything is in nats unless a [`LogBase`] is passed explicitly.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hist_divergence::LogBase;
use crate::scenarios::GaussianSpec;

/// Converts a value in nats to bits.
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

fn check_dims(p: &GaussianSpec, q: &GaussianSpec) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::param(format!(
            "dimension mismatch: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    Ok(())
}

/// `KL(p ‖ q)` between multivariate normals, in nats.
pub fn gaussian_kl(p: &GaussianSpec, q: &GaussianSpec) -> Result<f64> {
    check_dims(p, q)?;
    let d = p.dim();
    let lq = q
        .covariance()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("covariance of q is not positive definite".into()))?;
    let lp = p
        .covariance()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("covariance of p is not positive definite".into()))?;

    // tr(Σq⁻¹ Σp) = ‖Lq⁻¹ Lp‖_F²
    let whitened = lq
        .l()
        .solve_lower_triangular(&lp.l())
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let trace = whitened.norm_squared();
    let diff = q.mean() - p.mean();
    let maha = lq
        .l()
        .solve_lower_triangular(&diff)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?
        .norm_squared();
    let log_det = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let kl = 0.5 * (trace + maha - d as f64 + log_det(&lq.l()) - log_det(&lp.l()));
    Ok(kl.max(0.0))
}

/// Joint `(X, X − R)` and product-of-marginals Gaussians of the share
/// scenario with zero means.
pub fn share_scenario_gaussians(
    sigma_x_sq: f64,
    sigma_r_sq: f64,
) -> Result<(GaussianSpec, GaussianSpec)> {
    let view = sigma_x_sq + sigma_r_sq;
    let joint = GaussianSpec::centered(vec![
        vec![sigma_x_sq, sigma_x_sq],
        vec![sigma_x_sq, view],
    ])?;
    let product = GaussianSpec::centered(vec![vec![sigma_x_sq, 0.0], vec![0.0, view]])?;
    Ok((joint, product))
}

/// `I_KL(X; X − R) = ½ ln(1 + σx²/σr²)` in nats. A zero secret variance
/// leaks nothing and yields 0.
pub fn share_scenario_kl(sigma_x_sq: f64, sigma_r_sq: f64) -> Result<f64> {
    if !(sigma_x_sq >= 0.0 && sigma_x_sq.is_finite()) {
        return Err(Error::param(format!("sigma_x_sq must be ≥ 0, got {sigma_x_sq}")));
    }
    if !(sigma_r_sq > 0.0 && sigma_r_sq.is_finite()) {
        return Err(Error::param(format!("sigma_r_sq must be > 0, got {sigma_r_sq}")));
    }
    Ok(0.5 * (sigma_x_sq / sigma_r_sq).ln_1p())
}

fn symmetric_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let scale = sym.amax().max(1.0);
    let eig = SymmetricEigen::new(sym);
    if let Some(bad) = eig.eigenvalues.iter().find(|&&l| l < -1e-8 * scale) {
        return Err(Error::Singular(format!(
            "matrix square root of a non-PSD matrix (eigenvalue {bad:e})"
        )));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Wasserstein-2 distance between Gaussians:
/// `sqrt(tr(Σ1 + Σ2 − 2(Σ2^½ Σ1 Σ2^½)^½) + ‖μ1 − μ2‖²)`.
pub fn gaussian_w2(p: &GaussianSpec, q: &GaussianSpec) -> Result<f64> {
    check_dims(p, q)?;
    let s1 = p.covariance();
    let s2_half = symmetric_sqrt(q.covariance())?;
    let cross = symmetric_sqrt(&(&s2_half * s1 * &s2_half))?;
    let trace = s1.trace() + q.covariance().trace() - 2.0 * cross.trace();
    let mean_sq = (p.mean() - q.mean()).norm_squared();
    Ok((trace.max(0.0) + mean_sq).sqrt())
}

/// Upper bound on `JS(p, q)` obtained from Gaussian-mixture KL bounds:
/// `−½ log(½(1 + e^{−KL(p‖q)})) − ½ log(½(1 + e^{−KL(q‖p)}))`.
pub fn js_upper_bound_gmm(p: &GaussianSpec, q: &GaussianSpec, base: LogBase) -> Result<f64> {
    let forward = gaussian_kl(p, q)?;
    let backward = gaussian_kl(q, p)?;
    let term = |kl: f64| -0.5 * (0.5 * (1.0 + (-kl).exp())).ln();
    Ok(base.from_nats(term(forward) + term(backward)))
}

/// Upper bounds on total variation implied by a KL value (in nats).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvBounds {
    /// `sqrt(KL / 2)`
    pub pinsker: f64,
    /// `sqrt(1 − e^{−KL})`
    pub bretagnolle: f64,
}

impl TvBounds {
    pub fn min(&self) -> f64 {
        self.pinsker.min(self.bretagnolle)
    }
}

pub fn tv_upper_bounds(kl: f64) -> Result<TvBounds> {
    if !(kl >= 0.0) {
        return Err(Error::param(format!("KL must be ≥ 0, got {kl}")));
    }
    Ok(TvBounds {
        pinsker: (kl / 2.0).sqrt(),
        bretagnolle: (-(-kl).exp_m1()).sqrt(),
    })
}

/// Closed-form values for the share scenario.
///
/// `kl_exact` is in nats. `js_upper` is in bits, so it can be compared with a
/// base-2 JS estimate and sits on the same scale as the `JS ≤ TV ≤ 1` chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub kl_exact: f64,
    pub tv_upper: f64,
    pub js_upper: f64,
    pub w2_exact: f64,
}

impl OracleReport {
    pub fn share(sigma_x_sq: f64, sigma_r_sq: f64) -> Result<Self> {
        let (joint, product) = share_scenario_gaussians(sigma_x_sq, sigma_r_sq)?;
        let kl_exact = gaussian_kl(&joint, &product)?;
        Ok(Self {
            kl_exact,
            tv_upper: tv_upper_bounds(kl_exact)?.min(),
            js_upper: js_upper_bound_gmm(&joint, &product, LogBase::Base2)?,
            w2_exact: gaussian_w2(&joint, &product)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_1d(mean: f64, var: f64) -> GaussianSpec {
        GaussianSpec::new(vec![mean], vec![vec![var]]).unwrap()
    }

    /// Midpoint-rule quadrature of ∫ p ln(p/q) for 1-D normals.
    fn kl_quadrature(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
        let log_pdf = |x: f64, m: f64, v: f64| {
            -(x - m) * (x - m) / (2.0 * v) - 0.5 * (2.0 * std::f64::consts::PI * v).ln()
        };
        let (lo, hi, steps) = (-40.0, 40.0, 400_000);
        let h = (hi - lo) / steps as f64;
        (0..steps)
            .map(|i| {
                let x = lo + (i as f64 + 0.5) * h;
                let lp = log_pdf(x, m1, v1);
                lp.exp() * (lp - log_pdf(x, m2, v2)) * h
            })
            .sum()
    }

    #[test]
    fn kl_of_identical_gaussians_is_zero() {
        let (joint, _) = share_scenario_gaussians(1.0, 10.0).unwrap();
        assert_eq!(gaussian_kl(&joint, &joint).unwrap(), 0.0);
    }

    #[test]
    fn kl_unit_shift_matches_quadrature() {
        let kl = gaussian_kl(&normal_1d(0.0, 1.0), &normal_1d(1.0, 1.0)).unwrap();
        assert!((kl - 0.5).abs() < 1e-12);
        assert!((kl - kl_quadrature(0.0, 1.0, 1.0, 1.0)).abs() < 1e-8);
        let kl = gaussian_kl(&normal_1d(0.3, 1.0), &normal_1d(-0.2, 4.0)).unwrap();
        assert!((kl - kl_quadrature(0.3, 1.0, -0.2, 4.0)).abs() < 1e-8);
    }

    #[test]
    fn share_kl_matches_reported_value() {
        let kl = share_scenario_kl(1.0, 10.0).unwrap();
        assert!((kl - 0.5 * 1.1f64.ln()).abs() < 1e-15);
        assert!((kl - 0.048).abs() < 5e-4);
        let (joint, product) = share_scenario_gaussians(1.0, 10.0).unwrap();
        assert!((gaussian_kl(&joint, &product).unwrap() - kl).abs() < 1e-12);
    }

    #[test]
    fn share_kl_edge_cases() {
        assert_eq!(share_scenario_kl(0.0, 10.0).unwrap(), 0.0);
        assert!((share_scenario_kl(1.0, 1.0).unwrap() - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!(share_scenario_kl(-1.0, 1.0).is_err());
        assert!(share_scenario_kl(1.0, 0.0).is_err());
    }

    #[test]
    fn kl_errors() {
        let singular = GaussianSpec::centered(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let (joint, _) = share_scenario_gaussians(1.0, 10.0).unwrap();
        assert!(matches!(
            gaussian_kl(&joint, &singular),
            Err(Error::Singular(_))
        ));
        assert!(matches!(
            gaussian_kl(&joint, &normal_1d(0.0, 1.0)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn w2_values() {
        let (joint, product) = share_scenario_gaussians(1.0, 10.0).unwrap();
        assert!(gaussian_w2(&joint, &joint).unwrap() < 1e-7);
        assert!((gaussian_w2(&joint, &product).unwrap() - 0.292).abs() < 5e-4);
        let w = gaussian_w2(&normal_1d(0.0, 1.0), &normal_1d(0.0, 4.0)).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
        let w = gaussian_w2(&normal_1d(1.0, 1.0), &normal_1d(4.0, 1.0)).unwrap();
        assert!((w - 3.0).abs() < 1e-12);
    }

    #[test]
    fn w2_1d_matches_sorted_sample_coupling() {
        use crate::scenarios::sample_gaussian;
        let n = 200_000;
        let mut a = sample_gaussian(&normal_1d(0.0, 1.0), n, 1).unwrap().column(0);
        let mut b = sample_gaussian(&normal_1d(0.0, 4.0), n, 2).unwrap().column(0);
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let emp = (a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64).sqrt();
        assert!((emp - 1.0).abs() < 0.02, "{emp}");
    }

    #[test]
    fn js_bound_values() {
        let (joint, product) = share_scenario_gaussians(1.0, 10.0).unwrap();
        assert_eq!(js_upper_bound_gmm(&joint, &joint, LogBase::Natural).unwrap(), 0.0);
        let bits = js_upper_bound_gmm(&joint, &product, LogBase::Base2).unwrap();
        assert!((bits - 0.0356).abs() < 5e-4, "{bits}");
        // KL = 0.5 in both directions: −ln(½(1 + e^{−0.5}))
        let v = js_upper_bound_gmm(&normal_1d(0.0, 1.0), &normal_1d(1.0, 1.0), LogBase::Natural)
            .unwrap();
        let want = -(0.5 * (1.0 + (-0.5f64).exp())).ln();
        assert!((v - want).abs() < 1e-12);
        assert!((v - 0.21908).abs() < 1e-5);
    }

    #[test]
    fn tv_bound_values() {
        let b = tv_upper_bounds(0.0).unwrap();
        assert_eq!((b.pinsker, b.bretagnolle), (0.0, 0.0));
        let kl = share_scenario_kl(1.0, 10.0).unwrap();
        let b = tv_upper_bounds(kl).unwrap();
        assert!((b.pinsker - 0.154).abs() < 5e-4);
        assert!((b.bretagnolle - (1.0 - (-kl).exp()).sqrt()).abs() < 1e-15);
        assert!((b.bretagnolle - 0.216).abs() < 5e-4);
        assert_eq!(b.min(), b.pinsker);
        assert!(tv_upper_bounds(-1e-3).is_err());
        assert!(tv_upper_bounds(f64::NAN).is_err());
    }

    #[test]
    fn report_for_share_scenario() {
        let r = OracleReport::share(1.0, 10.0).unwrap();
        assert!((r.kl_exact - 0.0477).abs() < 1e-4);
        assert!((r.tv_upper - 0.154).abs() < 5e-4);
        assert!((r.js_upper - 0.0356).abs() < 5e-4);
        assert!((r.w2_exact - 0.292).abs() < 5e-4);
        let json = serde_json::to_value(r).unwrap();
        assert!(json.get("w2_exact").is_some());
    }
}
