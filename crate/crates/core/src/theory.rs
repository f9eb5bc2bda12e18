//! Closed-form conditions, penalty levels, sample-size thresholds and lower-bound
//! quantities for support recovery.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{complement, discriminant_direction, DiscriminantDirection, GaussianLdaModel};
use crate::optim::{block, max_abs, min_eigenvalue, Cholesky};
use crate::subsets::{binomial, ln_binomial, Subsets};

pub const DEFAULT_PHI_CAP: u128 = 1_000_000;
pub const SUFFICIENT_N_MAX_ITER: usize = 1000;

/// The unspecified absolute constants, exposed as knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryConstants {
    pub k_lambda0: f64,
    pub k_beta: f64,
    pub k_n: f64,
    /// Leading factor of the simulation penalty.
    pub sda_multiplier: f64,
}

impl Default for TheoryConstants {
    fn default() -> Self {
        TheoryConstants {
            k_lambda0: 1.0,
            k_beta: 1.0,
            k_n: 4.0,
            sda_multiplier: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Irrepresentable {
    pub value: f64,
    pub margin: f64,
}

impl Irrepresentable {
    pub fn satisfies(&self, alpha: f64) -> bool {
        self.margin >= alpha
    }
}

/// `‖Σ_NT Σ_TT⁻¹ signs‖_∞` and its margin to one.
pub fn irrepresentable(
    sigma: &Array2<f64>,
    support: &[usize],
    signs: ArrayView1<f64>,
) -> Result<Irrepresentable> {
    check_len("signs", support.len(), signs.len())?;
    let p = sigma.nrows();
    if support.iter().any(|&a| a >= p) {
        return Err(Error::invalid("support index out of range"));
    }
    let rest = complement(support, p);
    let value = if support.is_empty() || rest.is_empty() {
        0.0
    } else {
        let chol = Cholesky::factor(block(sigma.view(), support, support).view())?;
        let w = chol.solve(signs)?;
        max_abs(block(sigma.view(), &rest, support).dot(&w).view())
    };
    Ok(Irrepresentable {
        value,
        margin: 1.0 - value,
    })
}

/// `max_{a∉T} σ_{a|T}`, or `None` when the complement is empty.
pub fn max_conditional_variance(sigma: &Array2<f64>, support: &[usize]) -> Result<Option<f64>> {
    let rest = complement(support, sigma.nrows());
    if rest.is_empty() {
        return Ok(None);
    }
    if support.is_empty() {
        return Ok(rest.iter().map(|&a| sigma[[a, a]]).reduce(f64::max));
    }
    let chol = Cholesky::factor(block(sigma.view(), support, support).view())?;
    let cross = block(sigma.view(), support, &rest);
    let w = chol.solve_matrix(cross.view())?;
    let mut best = f64::NEG_INFINITY;
    for (j, &a) in rest.iter().enumerate() {
        let explained = cross.column(j).dot(&w.column(j));
        best = best.max((sigma[[a, a]] - explained).max(0.0));
    }
    Ok(Some(best))
}

fn direction_with_support(model: &GaussianLdaModel) -> Result<DiscriminantDirection> {
    let dir = discriminant_direction(model)?;
    if dir.support.is_empty() {
        return Err(Error::invalid("the model has an empty support (β = 0)"));
    }
    Ok(dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambda0 {
    pub value: f64,
    /// Set when the complement of the support is empty and the conditional
    /// variance factor was replaced by one.
    pub empty_complement: bool,
}

fn check_n(n: usize, s: usize) -> Result<()> {
    if n <= s || n < 2 {
        return Err(Error::invalid(format!(
            "sample size n = {n} must exceed s = {s} and be at least 2"
        )));
    }
    Ok(())
}

pub fn lambda0(model: &GaussianLdaModel, n: usize, k_lambda0: f64) -> Result<Lambda0> {
    let dir = direction_with_support(model)?;
    lambda0_for(model, &dir, n, k_lambda0)
}

fn lambda0_for(
    model: &GaussianLdaModel,
    dir: &DiscriminantDirection,
    n: usize,
    k_lambda0: f64,
) -> Result<Lambda0> {
    let p = model.dim();
    let s = dir.support_size();
    check_n(n, s)?;
    let sigma_max = max_conditional_variance(model.sigma(), &dir.support)?;
    let nf = n as f64;
    let log_term = (((p - s).max(1) as f64) * nf.ln()).ln().max(0.0);
    let value = k_lambda0
        * (model.prior_product()
            * sigma_max.unwrap_or(1.0)
            * dir.beta_norm_sigma_sq.max(1.0)
            * log_term
            / nf)
            .sqrt();
    Ok(Lambda0 {
        value,
        empty_complement: sigma_max.is_none(),
    })
}

/// The penalty paired with `λ0`: `λ0 / (1 + π1π2‖β_T‖²_Σ)`.
pub fn lambda_of(model: &GaussianLdaModel, n: usize, k_lambda0: f64) -> Result<f64> {
    let dir = direction_with_support(model)?;
    let l0 = lambda0_for(model, &dir, n, k_lambda0)?;
    Ok(l0.value / (1.0 + model.prior_product() * dir.beta_norm_sigma_sq))
}

/// Simulation penalty from the signal strength and problem size alone.
pub fn lambda_sda_raw(
    beta_norm_sq: f64,
    p: usize,
    s: usize,
    n: usize,
    multiplier: f64,
) -> Result<f64> {
    if p <= s + 1 {
        return Err(Error::invalid(format!(
            "penalty needs p > s + 1; got p = {p}, s = {s}"
        )));
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    Ok(multiplier / (1.0 + beta_norm_sq / 4.0)
        * (beta_norm_sq.max(1.0) * ((p - s) as f64).ln() / n as f64).sqrt())
}

pub fn lambda_sda(model: &GaussianLdaModel, n: usize) -> Result<f64> {
    let dir = direction_with_support(model)?;
    lambda_sda_raw(
        dir.beta_norm_sigma_sq,
        model.dim(),
        dir.support_size(),
        n,
        0.3,
    )
}

fn inverse_block(sigma: &Array2<f64>, support: &[usize]) -> Result<Array2<f64>> {
    let chol = Cholesky::factor(block(sigma.view(), support, support).view())?;
    chol.solve_matrix(Array2::eye(support.len()).view())
}

pub fn beta_min_threshold(
    model: &GaussianLdaModel,
    n: usize,
    k_beta: f64,
    k_lambda0: f64,
) -> Result<f64> {
    let dir = direction_with_support(model)?;
    beta_min_threshold_for(model, &dir, n, k_beta, k_lambda0)
}

fn beta_min_threshold_for(
    model: &GaussianLdaModel,
    dir: &DiscriminantDirection,
    n: usize,
    k_beta: f64,
    k_lambda0: f64,
) -> Result<f64> {
    let s = dir.support_size();
    let l0 = lambda0_for(model, dir, n, k_lambda0)?.value;
    let inv = inverse_block(model.sigma(), &dir.support)?;
    let max_diag = inv.diag().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let nf = n as f64;
    let log_term = ((s as f64) * nf.ln()).ln().max(0.0);
    let first = (max_diag * dir.beta_norm_sigma_sq.max(1.0) * log_term / nf).sqrt();
    let second = l0 * max_abs(inv.dot(&dir.signs_t()).view());
    Ok(k_beta * first.max(second))
}

/// Right side of the sample-size requirement evaluated at `n`.
fn sample_size_rhs(scale: f64, p: usize, s: usize, n: usize) -> f64 {
    scale * (s as f64) * (((p - s) as f64) * (n as f64).ln()).ln()
}

/// Smallest `n ≥ 3` with `n ≥ K π1π2 max σ_{a|T} Λ_min⁻¹(Σ_TT) s log((p−s) log n)`
/// such that `n − 1` violates it.
pub fn sufficient_n(model: &GaussianLdaModel, k: f64) -> Result<usize> {
    let dir = direction_with_support(model)?;
    sufficient_n_for(model, &dir, k)
}

fn sufficient_n_for(
    model: &GaussianLdaModel,
    dir: &DiscriminantDirection,
    k: f64,
) -> Result<usize> {
    let p = model.dim();
    let s = dir.support_size();
    let sigma_max = max_conditional_variance(model.sigma(), &dir.support)?
        .ok_or_else(|| Error::invalid("sample-size requirement needs p > s"))?;
    let lam_min = min_eigenvalue(block(model.sigma().view(), &dir.support, &dir.support).view());
    if lam_min <= 0.0 {
        return Err(Error::Singular {
            pivot: 0,
            value: lam_min,
        });
    }
    let scale = k * model.prior_product() * sigma_max / lam_min;
    let holds = |n: usize| (n as f64) >= sample_size_rhs(scale, p, s, n);
    let mut n = s.max(8);
    let mut converged = false;
    for _ in 0..SUFFICIENT_N_MAX_ITER {
        if holds(n) {
            converged = true;
            break;
        }
        n = (sample_size_rhs(scale, p, s, n).ceil() as usize).max(n + 1);
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations: SUFFICIENT_N_MAX_ITER,
            residual: sample_size_rhs(scale, p, s, n) - n as f64,
        });
    }
    while n > 3 && holds(n - 1) {
        n -= 1;
    }
    Ok(n)
}

fn equal_correlation_level(sigma: &Array2<f64>) -> Option<f64> {
    let p = sigma.nrows();
    if sigma.diag().iter().any(|&d| d != 1.0) {
        return None;
    }
    let gamma = if p > 1 { sigma[[0, 1]] } else { 0.0 };
    let uniform = sigma
        .indexed_iter()
        .all(|((a, b), &v)| a == b || v == gamma);
    uniform.then_some(gamma)
}

/// `(φ_close, φ_far)` when `sigma` is an identity or equal-correlation matrix.
pub fn phi_closed_form(sigma: &Array2<f64>, s: usize) -> Option<(f64, f64)> {
    let gamma = equal_correlation_level(sigma)?;
    let sf = s as f64;
    Some((
        2.0 * (1.0 - gamma),
        2.0 * sf * (1.0 - gamma) + (2.0 * sf).powi(2) * gamma,
    ))
}

fn check_phi_args(sigma: &Array2<f64>, s: usize, cap: u128) -> Result<usize> {
    let p = sigma.nrows();
    check_len("covariance columns", p, sigma.ncols())?;
    if s == 0 || 2 * s > p {
        return Err(Error::invalid(format!(
            "lower-bound quantities need 1 ≤ s ≤ p/2; got p = {p}, s = {s}"
        )));
    }
    let count = binomial(p, s);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    Ok(p)
}

/// `φ_close` by enumeration over every support and every member of it.
pub fn phi_close_enumerated(sigma: &Array2<f64>, s: usize, cap: u128) -> Result<f64> {
    let p = check_phi_args(sigma, s, cap)?;
    let mut best = f64::INFINITY;
    for t in Subsets::new(p, s) {
        let rest = complement(&t, p);
        for &u in &t {
            let total: f64 = rest
                .iter()
                .map(|&v| sigma[[u, u]] + sigma[[v, v]] - 2.0 * sigma[[u, v]])
                .sum();
            best = best.min(total / rest.len() as f64);
        }
    }
    Ok(best)
}

/// `φ_far` by enumeration over supports; the average over disjoint competitors
/// is accumulated from its first and second moments instead of listing them.
pub fn phi_far_enumerated(sigma: &Array2<f64>, s: usize, cap: u128) -> Result<f64> {
    let p = check_phi_args(sigma, s, cap)?;
    let m = (p - s) as f64;
    let sf = s as f64;
    let mut best = f64::INFINITY;
    for t in Subsets::new(p, s) {
        let rest = complement(&t, p);
        let inner: f64 = t
            .iter()
            .flat_map(|&a| t.iter().map(move |&b| sigma[[a, b]]))
            .sum();
        let cross: f64 = t
            .iter()
            .flat_map(|&a| rest.iter().map(move |&b| sigma[[a, b]]))
            .sum();
        let diag: f64 = rest.iter().map(|&a| sigma[[a, a]]).sum();
        let all: f64 = rest
            .iter()
            .flat_map(|&a| rest.iter().map(move |&b| sigma[[a, b]]))
            .sum();
        let off = all - diag;
        let pair_weight = if m > 1.0 {
            sf * (sf - 1.0) / (m * (m - 1.0))
        } else {
            0.0
        };
        let avg = inner + 2.0 * sf / m * cross + sf / m * diag + pair_weight * off;
        best = best.min(avg);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMethod {
    ClosedForm,
    Enumeration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiValues {
    pub phi_close: f64,
    pub phi_far: f64,
    pub method: PhiMethod,
}

/// Closed form where the structure allows it, enumeration otherwise.
pub fn phi_values(sigma: &Array2<f64>, s: usize, cap: u128) -> Result<PhiValues> {
    let p = sigma.nrows();
    if s == 0 || 2 * s > p {
        return Err(Error::invalid(format!(
            "lower-bound quantities need 1 ≤ s ≤ p/2; got p = {p}, s = {s}"
        )));
    }
    if let Some((phi_close, phi_far)) = phi_closed_form(sigma, s) {
        return Ok(PhiValues {
            phi_close,
            phi_far,
            method: PhiMethod::ClosedForm,
        });
    }
    Ok(PhiValues {
        phi_close: phi_close_enumerated(sigma, s, cap)?,
        phi_far: phi_far_enumerated(sigma, s, cap)?,
        method: PhiMethod::Enumeration,
    })
}

pub fn phi_close(sigma: &Array2<f64>, s: usize) -> Result<f64> {
    Ok(phi_values(sigma, s, DEFAULT_PHI_CAP)?.phi_close)
}

pub fn phi_far(sigma: &Array2<f64>, s: usize) -> Result<f64> {
    Ok(phi_values(sigma, s, DEFAULT_PHI_CAP)?.phi_far)
}

/// Signal-strength threshold below which every procedure fails with positive probability.
pub fn tau_min_from(phi_close: f64, phi_far: f64, p: usize, s: usize, n: usize) -> Result<f64> {
    if s == 0 || 2 * s > p || n == 0 {
        return Err(Error::invalid("threshold needs 1 ≤ s ≤ p/2 and n ≥ 1"));
    }
    if phi_close <= 0.0 || phi_far <= 0.0 {
        return Err(Error::invalid("φ quantities must be positive"));
    }
    let nf = n as f64;
    let far = (ln_binomial(p - s, s) / (nf * phi_far)).sqrt();
    let close = (((p - s + 1) as f64).ln() / (nf * phi_close)).sqrt();
    Ok(2.0 * far.max(close))
}

pub fn tau_min(sigma: &Array2<f64>, s: usize, n: usize) -> Result<f64> {
    let phi = phi_values(sigma, s, DEFAULT_PHI_CAP)?;
    tau_min_from(phi.phi_close, phi.phi_far, sigma.nrows(), s, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationConditions {
    pub alpha: f64,
    pub irrepresentable_value: f64,
    pub irrepresentable_ok: bool,
    pub beta_min_left: f64,
    pub beta_min_right: f64,
    pub beta_min_slack: f64,
    pub beta_min_ok: bool,
}

/// Irrepresentable condition at level `alpha` and the population signal condition at `lambda`.
pub fn population_conditions(
    model: &GaussianLdaModel,
    lambda: f64,
    alpha: f64,
) -> Result<PopulationConditions> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::invalid(format!(
            "λ must be a finite non-negative number, got {lambda}"
        )));
    }
    let dir = direction_with_support(model)?;
    population_conditions_for(model, &dir, lambda, alpha)
}

fn population_conditions_for(
    model: &GaussianLdaModel,
    dir: &DiscriminantDirection,
    lambda: f64,
    alpha: f64,
) -> Result<PopulationConditions> {
    let signs = dir.signs_t();
    let irr = irrepresentable(model.sigma(), &dir.support, signs.view())?;
    let pp = model.prior_product();
    let left =
        pp * (1.0 + lambda * dir.l1_norm()) / (1.0 + pp * dir.beta_norm_sigma_sq) * dir.beta_min;
    let inv = inverse_block(model.sigma(), &dir.support)?;
    let right = lambda * max_abs(inv.dot(&signs).view());
    Ok(PopulationConditions {
        alpha,
        irrepresentable_value: irr.value,
        irrepresentable_ok: irr.value <= 1.0 - alpha,
        beta_min_left: left,
        beta_min_right: right,
        beta_min_slack: left - right,
        beta_min_ok: left > right,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub p: usize,
    pub s: usize,
    pub n: usize,
    pub support: Vec<usize>,
    pub beta_min: f64,
    pub beta_norm_sigma_sq: f64,
    pub beta_l1: f64,
    pub irrepresentable_value: f64,
    pub irrepresentable_margin: f64,
    pub alpha: f64,
    pub irrepresentable_ok: bool,
    pub beta_min_population_ok: bool,
    pub beta_min_population_slack: f64,
    pub lambda0: f64,
    pub lambda0_empty_complement: bool,
    pub lambda: f64,
    pub lambda_sda: Option<f64>,
    pub beta_min_threshold: f64,
    pub beta_min_threshold_ok: bool,
    pub sufficient_n: Option<usize>,
    pub phi_close: Option<f64>,
    pub phi_far: Option<f64>,
    pub phi_method: Option<PhiMethod>,
    pub tau_min: Option<f64>,
    pub lambda_min_sigma_tt: f64,
    pub max_sigma_conditional: Option<f64>,
    pub max_inverse_diagonal: f64,
    pub r_n: f64,
    pub q_n: f64,
    pub constants: TheoryConstants,
    /// Reasons for any field left empty.
    pub notes: Vec<String>,
}

/// Every threshold and condition for `model` at sample size `n`.
pub fn theory_report(
    model: &GaussianLdaModel,
    n: usize,
    constants: TheoryConstants,
    alpha: f64,
) -> Result<TheoryReport> {
    let dir = direction_with_support(model)?;
    let p = model.dim();
    let s = dir.support_size();
    let sigma = model.sigma();
    let signs = dir.signs_t();
    let mut notes = Vec::new();

    let l0 = lambda0_for(model, &dir, n, constants.k_lambda0)?;
    let lambda = l0.value / (1.0 + model.prior_product() * dir.beta_norm_sigma_sq);
    let cond = population_conditions_for(model, &dir, lambda, alpha)?;
    let irr = irrepresentable(sigma, &dir.support, signs.view())?;
    let lambda_sda = match lambda_sda_raw(dir.beta_norm_sigma_sq, p, s, n, constants.sda_multiplier)
    {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("lambda_sda: {e}"));
            None
        }
    };
    let threshold = beta_min_threshold_for(model, &dir, n, constants.k_beta, constants.k_lambda0)?;
    let sufficient = match sufficient_n_for(model, &dir, constants.k_n) {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("sufficient_n: {e}"));
            None
        }
    };
    let (phi, tau) = match phi_values(sigma, s, DEFAULT_PHI_CAP) {
        Ok(phi) => {
            let tau = tau_min_from(phi.phi_close, phi.phi_far, p, s, n)?;
            (Some(phi), Some(tau))
        }
        Err(e) => {
            notes.push(format!("phi: {e}"));
            (None, None)
        }
    };
    let sigma_tt = block(sigma.view(), &dir.support, &dir.support);
    let inv = inverse_block(sigma, &dir.support)?;
    let q_n = signs.dot(&sigma_tt.dot(&signs));

    Ok(TheoryReport {
        p,
        s,
        n,
        support: dir.support.clone(),
        beta_min: dir.beta_min,
        beta_norm_sigma_sq: dir.beta_norm_sigma_sq,
        beta_l1: dir.l1_norm(),
        irrepresentable_value: irr.value,
        irrepresentable_margin: irr.margin,
        alpha,
        irrepresentable_ok: cond.irrepresentable_ok,
        beta_min_population_ok: cond.beta_min_ok,
        beta_min_population_slack: cond.beta_min_slack,
        lambda0: l0.value,
        lambda0_empty_complement: l0.empty_complement,
        lambda,
        lambda_sda,
        beta_min_threshold: threshold,
        beta_min_threshold_ok: dir.beta_min >= threshold,
        sufficient_n: sufficient,
        phi_close: phi.map(|v| v.phi_close),
        phi_far: phi.map(|v| v.phi_far),
        phi_method: phi.map(|v| v.method),
        tau_min: tau,
        lambda_min_sigma_tt: min_eigenvalue(sigma_tt.view()),
        max_sigma_conditional: max_conditional_variance(sigma, &dir.support)?,
        max_inverse_diagonal: inv.diag().fold(f64::NEG_INFINITY, |m, &x| m.max(x)),
        r_n: lambda * dir.l1_norm(),
        q_n,
        constants,
        notes,
    })
}
