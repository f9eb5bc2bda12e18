//! The SDA estimator: an ℓ1-penalized least-squares fit of coded class labels
//! on centered features, solved in its Gram form
//!
//! ```text
//! minimize over v:  ½ v'(S + k μ̂μ̂')v − k v'μ̂ + λ‖v‖₁,   k = n1·n2 / (n(n−2))
//! ```
//!
//! together with its oracle (known-support) closed form, the population
//! version of the problem, and KKT certification of candidate solutions.
//!
//! Orientation: with the label coding `z = n2/n` for class 1 and `−n1/n` for
//! class 2 the least-squares objective equals the Gram form evaluated at `−v`
//! (up to a constant). Fits are reported in the Gram-form orientation, which
//! points along `μ̂ = μ̂2 − μ̂1` and shares signs with `β = Σ⁻¹μ`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::model::{complement, discriminant_direction, Dataset, GaussianLdaModel, Label};
use crate::optim::{
    block, gather, lasso_quadratic_with, max_abs, scatter, sign, Cholesky, QuadraticProgram,
    SolverOptions,
};

/// Canonical label coding: `n2/n` for class 1, `−n1/n` for class 2.
pub fn encode_labels(dataset: &Dataset) -> Array1<f64> {
    let (n1, n2) = dataset.class_counts();
    let n = dataset.n() as f64;
    let (z1, z2) = (n2 as f64 / n, -(n1 as f64) / n);
    dataset
        .labels()
        .iter()
        .map(|l| match l {
            Label::One => z1,
            Label::Two => z2,
        })
        .collect()
}

/// Coding `z1` for class 1 and `z2 = −n1·z1/n2` for class 2, so `Σ z_i = 0`.
pub fn coded_labels(dataset: &Dataset, z1: f64) -> Result<Array1<f64>> {
    let z2 = paired_code(dataset, z1)?;
    Ok(dataset
        .labels()
        .iter()
        .map(|l| match l {
            Label::One => z1,
            Label::Two => z2,
        })
        .collect())
}

pub fn paired_code(dataset: &Dataset, z1: f64) -> Result<f64> {
    if !(z1 > 0.0) || !z1.is_finite() {
        return Err(Error::invalid(format!(
            "class-1 code must be positive, got {z1}"
        )));
    }
    let (n1, n2) = dataset.class_counts();
    Ok(-(n1 as f64) * z1 / n2 as f64)
}

/// Gram form of the fit for the coding with class-1 code `z1`:
/// `Q = S + k μ̂μ̂'`, `c = n1·z1/(n−2) · μ̂`.
pub fn coded_program(dataset: &Dataset, z1: f64, lambda: f64) -> Result<QuadraticProgram> {
    paired_code(dataset, z1)?;
    let k = dataset.rank_one_weight();
    let mu = dataset.mu_hat();
    let (n1, _) = dataset.class_counts();
    let n = dataset.n() as f64;
    let outer = outer(&mu, &mu);
    let q = dataset.pooled_covariance() + &(outer * k);
    let c = &mu * (n1 as f64 * z1 / (n - 2.0));
    QuadraticProgram::new(q, c, lambda)
}

/// Gram form under the canonical coding; `c = k μ̂`.
pub fn sda_program(dataset: &Dataset, lambda: f64) -> Result<QuadraticProgram> {
    let (_, n2) = dataset.class_counts();
    coded_program(dataset, n2 as f64 / dataset.n() as f64, lambda)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let col = a.view().insert_axis(Axis(1));
    let row = b.view().insert_axis(Axis(0));
    col.dot(&row)
}

/// `(2(n−2))⁻¹ Σ_i (z_i − v'(x_i − x̄))² + λ‖v‖₁`.
pub fn residual_objective(
    dataset: &Dataset,
    z: ArrayView1<f64>,
    v: ArrayView1<f64>,
    lambda: f64,
) -> Result<f64> {
    check_len("label codes", dataset.n(), z.len())?;
    check_len("coefficients", dataset.dim(), v.len())?;
    let centered = dataset.x() - dataset.grand_mean();
    let fitted = centered.dot(&v);
    let rss: f64 = z
        .iter()
        .zip(fitted.iter())
        .map(|(zi, fi)| (zi - fi).powi(2))
        .sum();
    let n = dataset.n() as f64;
    Ok(rss / (2.0 * (n - 2.0)) + lambda * v.iter().map(|x| x.abs()).sum::<f64>())
}

/// A fitted SDA direction.
#[derive(Debug, Clone)]
pub struct SdaFit {
    pub v_hat: Array1<f64>,
    pub lambda: f64,
    pub active_set: Vec<usize>,
    pub signs: Vec<f64>,
    pub kkt_residual: f64,
    pub certificate: KktCertificate,
    /// Multiplier `γ̂` with `v̂_T = γ̂ β̂_T − λ S_TT⁻¹ sgn(v̂_T)` on the active set.
    pub scale_factor: Option<f64>,
    /// `β̂_T = S_TT⁻¹ μ̂_T` on the active set.
    pub beta_hat_t: Option<Array1<f64>>,
    pub iterations: usize,
}

/// JSON shape of an exported fit.
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct FitExport {
    pub lambda: f64,
    pub v_hat: Vec<f64>,
    pub active_set: Vec<usize>,
    pub kkt_residual: f64,
    pub margin: f64,
}

impl SdaFit {
    pub fn export(&self) -> FitExport {
        FitExport {
            lambda: self.lambda,
            v_hat: self.v_hat.to_vec(),
            active_set: self.active_set.clone(),
            kkt_residual: self.kkt_residual,
            margin: self.certificate.margin,
        }
    }

    /// Active set after dropping coefficients with `|v̂_j| < threshold`.
    pub fn support_above(&self, threshold: f64) -> Vec<usize> {
        self.active_set
            .iter()
            .copied()
            .filter(|&j| self.v_hat[j].abs() >= threshold)
            .collect()
    }
}

pub fn fit_sda(dataset: &Dataset, lambda: f64) -> Result<SdaFit> {
    fit_sda_with(dataset, lambda, None, &SolverOptions::default())
}

pub fn fit_sda_with(
    dataset: &Dataset,
    lambda: f64,
    start: Option<ArrayView1<f64>>,
    opts: &SolverOptions,
) -> Result<SdaFit> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "penalty must be non-negative, got {lambda}"
        )));
    }
    let qp = sda_program(dataset, lambda)?;
    fit_program(dataset, &qp, start, opts)
}

fn fit_program(
    dataset: &Dataset,
    qp: &QuadraticProgram,
    start: Option<ArrayView1<f64>>,
    opts: &SolverOptions,
) -> Result<SdaFit> {
    let report = lasso_quadratic_with(qp, start, opts)?;
    if !report.converged {
        return Err(Error::NotConverged {
            iterations: report.iterations,
            residual: report.max_kkt_violation,
        });
    }
    let v_hat = report.solution;
    let certificate = certify_program(qp, v_hat.view());
    let active_set = certificate.active_set.clone();
    let signs: Vec<f64> = active_set.iter().map(|&j| sign(v_hat[j])).collect();

    let lambda = qp.lambda();
    let mut scale_factor = None;
    let mut beta_hat_t = None;
    if !active_set.is_empty() && active_set.len() + 2 <= dataset.n() {
        if let Ok(parts) =
            OracleParts::new(dataset, &active_set, &Array1::from(signs.clone()), lambda)
        {
            scale_factor = Some(parts.gamma);
            beta_hat_t = Some(parts.beta_hat);
        }
    }
    Ok(SdaFit {
        v_hat,
        lambda,
        active_set,
        signs,
        kkt_residual: report.max_kkt_violation,
        certificate,
        scale_factor,
        beta_hat_t,
        iterations: report.iterations,
    })
}

/// Smallest penalty with `v̂ = 0`: `‖k μ̂‖∞`.
pub fn lambda_max(dataset: &Dataset) -> f64 {
    dataset.rank_one_weight() * max_abs(dataset.mu_hat().view())
}

/// Fits along a geometric grid from `λ_max` down to `ratio·λ_max`, warm-started.
pub fn lambda_path(dataset: &Dataset, points: usize, ratio: f64) -> Result<Vec<SdaFit>> {
    if points < 2 || !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(
            "path needs at least two points and a ratio in (0, 1)",
        ));
    }
    let top = lambda_max(dataset);
    let opts = SolverOptions::default();
    let mut fits: Vec<SdaFit> = Vec::with_capacity(points);
    for k in 0..points {
        let lambda = top * ratio.powf(k as f64 / (points - 1) as f64);
        let start = fits.last().map(|f| f.v_hat.view());
        fits.push(fit_sda_with(dataset, lambda, start, &opts)?);
    }
    Ok(fits)
}

pub fn default_lambda_path(dataset: &Dataset) -> Result<Vec<SdaFit>> {
    lambda_path(dataset, 50, 1e-3)
}

/// Pieces of the restricted closed form on a fixed support.
struct OracleParts {
    beta_hat: Array1<f64>,
    gamma: f64,
    solution: Array1<f64>,
}

impl OracleParts {
    fn new(dataset: &Dataset, support: &[usize], signs: &Array1<f64>, lambda: f64) -> Result<Self> {
        check_len("sign vector", support.len(), signs.len())?;
        if support.len() + 1 >= dataset.n() {
            return Err(Error::invalid(format!(
                "restricted covariance of size {} is singular with n = {}",
                support.len(),
                dataset.n()
            )));
        }
        let s_tt = block(dataset.pooled_covariance().view(), support, support);
        let chol = Cholesky::factor(s_tt.view())?;
        let mu_t = gather(dataset.mu_hat().view(), support);
        let beta_hat = chol.solve(mu_t.view())?;
        let tilt = chol.solve(signs.view())?;
        let k = dataset.rank_one_weight();
        let gamma = k * (1.0 + lambda * mu_t.dot(&tilt)) / (1.0 + k * mu_t.dot(&beta_hat));
        let solution = &beta_hat * gamma - &tilt * lambda;
        Ok(OracleParts {
            beta_hat,
            gamma,
            solution,
        })
    }
}

/// `sgn(S_TT⁻¹ μ̂_T)`, the sign vector available without ground truth.
pub fn estimated_signs(dataset: &Dataset, support: &[usize]) -> Result<Array1<f64>> {
    let s_tt = block(dataset.pooled_covariance().view(), support, support);
    let mu_t = gather(dataset.mu_hat().view(), support);
    Ok(Cholesky::factor(s_tt.view())?
        .solve(mu_t.view())?
        .mapv(sign))
}

/// Minimizer over `v_T` of the fit restricted to `support` with the penalty
/// replaced by the linear tilt `λ v'signs`, via the rank-one closed form
///
/// ```text
/// ṽ_T = γ̂ S_TT⁻¹μ̂_T − λ S_TT⁻¹ signs,
/// γ̂   = k (1 + λ μ̂_T'S_TT⁻¹signs) / (1 + k μ̂_T'S_TT⁻¹μ̂_T).
/// ```
pub fn oracle_fit(
    dataset: &Dataset,
    support: &[usize],
    signs: &Array1<f64>,
    lambda: f64,
) -> Result<Array1<f64>> {
    if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
        return Err(Error::invalid("oracle signs must be ±1"));
    }
    Ok(OracleParts::new(dataset, support, signs, lambda)?.solution)
}

/// Oracle solution embedded in `p` dimensions with zeros off the support.
pub fn oracle_fit_embedded(
    dataset: &Dataset,
    support: &[usize],
    signs: &Array1<f64>,
    lambda: f64,
) -> Result<Array1<f64>> {
    let v_t = oracle_fit(dataset, support, signs, lambda)?;
    Ok(scatter(v_t.view(), support, dataset.dim()))
}

/// Closed-form minimizer of the population problem on `T = supp(β)`.
#[derive(Debug, Clone)]
pub struct PopulationSolution {
    pub w_hat: Array1<f64>,
    pub support: Vec<usize>,
    /// `π1π2 (1 + λ‖β_T‖₁) / (1 + π1π2 ‖β_T‖²_{Σ_TT})`.
    pub gamma: f64,
    /// `λ Σ_TT⁻¹ sgn(β_T)`.
    pub correction: Array1<f64>,
}

/// `Q = Σ + π1π2 μμ'`, `c = π1π2 μ`.
pub fn population_program(model: &GaussianLdaModel, lambda: f64) -> Result<QuadraticProgram> {
    let mu = model.mu();
    let pp = model.prior_product();
    let q = model.sigma() + &(outer(&mu, &mu) * pp);
    QuadraticProgram::new(q, mu * pp, lambda)
}

pub fn population_solution(model: &GaussianLdaModel, lambda: f64) -> Result<PopulationSolution> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "penalty must be non-negative, got {lambda}"
        )));
    }
    let dir = discriminant_direction(model)?;
    let support = dir.support.clone();
    let p = model.dim();
    if support.is_empty() {
        return Ok(PopulationSolution {
            w_hat: Array1::zeros(p),
            support,
            gamma: model.prior_product(),
            correction: Array1::zeros(0),
        });
    }
    let sigma_tt = block(model.sigma().view(), &support, &support);
    let chol = Cholesky::factor(sigma_tt.view())?;
    let correction = chol.solve(dir.signs_t().view())? * lambda;
    let pp = model.prior_product();
    let gamma = pp * (1.0 + lambda * dir.l1_norm()) / (1.0 + pp * dir.beta_norm_sigma_sq);
    let w_t = dir.beta_t() * gamma - &correction;
    Ok(PopulationSolution {
        w_hat: scatter(w_t.view(), &support, p),
        support,
        gamma,
        correction,
    })
}

/// Sample KKT diagnostics of a candidate `v`.
#[derive(Debug, Clone, Serialize)]
pub struct KktCertificate {
    pub active_set: Vec<usize>,
    /// `‖(Qv − c)_T̂ + λ sgn(v_T̂)‖∞`.
    pub equality_residual: f64,
    /// `λ − ‖(Qv − c)_N̂‖∞`; non-negative under dual feasibility.
    pub margin: f64,
    /// `margin > 0`: every inactive subgradient is strictly inside (−1, 1),
    /// which makes the support of the solution unique.
    pub strictly_dual_feasible: bool,
}

impl KktCertificate {
    pub fn is_optimal(&self, tol: f64) -> bool {
        self.equality_residual <= tol && self.margin >= -tol
    }
}

pub fn kkt_certify(dataset: &Dataset, v: ArrayView1<f64>, lambda: f64) -> Result<KktCertificate> {
    check_len("coefficients", dataset.dim(), v.len())?;
    let qp = sda_program(dataset, lambda)?;
    Ok(certify_program(&qp, v))
}

fn certify_program(qp: &QuadraticProgram, v: ArrayView1<f64>) -> KktCertificate {
    let grad = qp.gradient(v);
    let lambda = qp.lambda();
    let active_set: Vec<usize> = (0..v.len()).filter(|&j| v[j] != 0.0).collect();
    let inactive = complement(&active_set, v.len());
    let equality_residual = active_set
        .iter()
        .map(|&j| (grad[j] + lambda * sign(v[j])).abs())
        .fold(0.0, f64::max);
    let worst = inactive.iter().map(|&j| grad[j].abs()).fold(0.0, f64::max);
    let margin = lambda - worst;
    KktCertificate {
        active_set,
        equality_residual,
        margin,
        strictly_dual_feasible: margin > 0.0,
    }
}

/// Fit under an alternative coding compared with the canonical fit.
#[derive(Debug, Clone)]
pub struct RecodedFit {
    pub z1: f64,
    pub z2: f64,
    /// `λ̃ = z1·n/n2 · λ`.
    pub scaled_lambda: f64,
    pub fit: SdaFit,
    pub canonical: SdaFit,
    pub same_support: bool,
    /// Expected proportionality constant `z1·n/n2`.
    pub expected_ratio: f64,
    /// Largest deviation of `v_alt/v_canon` across the active set from their mean.
    pub max_ratio_deviation: f64,
}

pub fn recode_equivalence(dataset: &Dataset, z1: f64, lambda: f64) -> Result<RecodedFit> {
    let z2 = paired_code(dataset, z1)?;
    let (_, n2) = dataset.class_counts();
    let expected_ratio = z1 * dataset.n() as f64 / n2 as f64;
    let scaled_lambda = expected_ratio * lambda;
    let opts = SolverOptions::default();
    let canonical = fit_sda_with(dataset, lambda, None, &opts)?;
    let qp = coded_program(dataset, z1, scaled_lambda)?;
    let fit = fit_program(dataset, &qp, None, &opts)?;
    let same_support = fit.active_set == canonical.active_set;
    let max_ratio_deviation = if same_support && !fit.active_set.is_empty() {
        let ratios: Vec<f64> = fit
            .active_set
            .iter()
            .map(|&j| fit.v_hat[j] / canonical.v_hat[j])
            .collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        ratios.iter().map(|r| (r - mean).abs()).fold(0.0, f64::max)
    } else if same_support {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(RecodedFit {
        z1,
        z2,
        scaled_lambda,
        fit,
        canonical,
        same_support,
        expected_ratio,
        max_ratio_deviation,
    })
}
