//! Linear classification rules and their error rates under a Gaussian model.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{GaussianLdaModel, Label};

/// Standard normal distribution function, `0.5·erfc(−t/√2)`.
pub fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// Rule `x ↦ 2` iff `v'(x − m) + offset > 0`, class 1 otherwise (ties included).
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    direction: Array1<f64>,
    center: Array1<f64>,
    offset: f64,
}

impl Classifier {
    pub fn new(direction: Array1<f64>, center: Array1<f64>, offset: f64) -> Result<Self> {
        check_len("classifier center", direction.len(), center.len())?;
        if direction.iter().all(|&x| x == 0.0) {
            return Err(Error::invalid("classifier direction must be nonzero"));
        }
        if direction
            .iter()
            .chain(center.iter())
            .any(|x| !x.is_finite())
            || !offset.is_finite()
        {
            return Err(Error::invalid("classifier parameters must be finite"));
        }
        Ok(Classifier {
            direction,
            center,
            offset,
        })
    }

    /// Midpoint rule without a prior offset.
    pub fn midpoint(
        direction: Array1<f64>,
        mu1: ArrayView1<f64>,
        mu2: ArrayView1<f64>,
    ) -> Result<Self> {
        check_len("class means", mu1.len(), mu2.len())?;
        let center = (&mu1 + &mu2) * 0.5;
        Classifier::new(direction, center, 0.0)
    }

    /// Midpoint rule shifted by `log(π2/π1)`.
    pub fn with_priors(
        direction: Array1<f64>,
        mu1: ArrayView1<f64>,
        mu2: ArrayView1<f64>,
        pi1: f64,
        pi2: f64,
    ) -> Result<Self> {
        if !(pi1 > 0.0 && pi2 > 0.0) {
            return Err(Error::invalid("priors must be positive"));
        }
        let mut c = Classifier::midpoint(direction, mu1, mu2)?;
        c.offset = (pi2 / pi1).ln();
        Ok(c)
    }

    /// Population rule with direction `Σ⁻¹μ` and the prior offset.
    pub fn bayes(model: &GaussianLdaModel) -> Result<Self> {
        let beta = model.cholesky().solve(model.mu().view())?;
        let (pi1, pi2) = model.priors();
        Classifier::with_priors(beta, model.mu1().view(), model.mu2().view(), pi1, pi2)
    }

    pub fn direction(&self) -> &Array1<f64> {
        &self.direction
    }

    pub fn center(&self) -> &Array1<f64> {
        &self.center
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn score(&self, x: ArrayView1<f64>) -> Result<f64> {
        check_len("observation", self.direction.len(), x.len())?;
        Ok(self.direction.dot(&(&x - &self.center)) + self.offset)
    }

    pub fn classify(&self, x: ArrayView1<f64>) -> Result<Label> {
        Ok(if self.score(x)? > 0.0 {
            Label::Two
        } else {
            Label::One
        })
    }
}

/// `Φ(−√(μ'Σ⁻¹μ)/2)`, defined for equal priors only.
pub fn bayes_risk(model: &GaussianLdaModel) -> Result<f64> {
    let (pi1, pi2) = model.priors();
    if (pi1 - pi2).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "the Bayes risk formula needs equal priors, got ({pi1}, {pi2})"
        )));
    }
    let delta_sq = model.cholesky().inv_quad_form(model.mu().view())?;
    Ok(normal_cdf(-delta_sq.max(0.0).sqrt() / 2.0))
}

/// Exact misclassification probability of `rule` under `model`, weighting each
/// class by its prior.
pub fn classifier_error_rate(model: &GaussianLdaModel, rule: &Classifier) -> Result<f64> {
    let v = rule.direction();
    check_len("classifier direction", model.dim(), v.len())?;
    let var = v.dot(&model.sigma().dot(v));
    if !(var > 0.0) {
        return Err(Error::invalid(format!("v'Σv must be positive, got {var}")));
    }
    let sd = var.sqrt();
    let shift = v.dot(rule.center()) - rule.offset();
    let (pi1, pi2) = model.priors();
    let err1 = normal_cdf((v.dot(model.mu1()) - shift) / sd);
    let err2 = normal_cdf((shift - v.dot(model.mu2())) / sd);
    Ok(pi1 * err1 + pi2 * err2)
}

/// Error rate of the midpoint rule built from fitted means `mu1_hat`, `mu2_hat`.
pub fn conditional_error_rate(
    model: &GaussianLdaModel,
    v: ArrayView1<f64>,
    mu1_hat: ArrayView1<f64>,
    mu2_hat: ArrayView1<f64>,
) -> Result<f64> {
    check_len("direction", model.dim(), v.len())?;
    let rule = Classifier::midpoint(v.to_owned(), mu1_hat, mu2_hat)?;
    classifier_error_rate(model, &rule)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRate {
    pub rate: f64,
    pub stderr: f64,
    pub draws: usize,
}

const MC_CHUNK: usize = 8192;

/// Fraction of fresh draws from `model` that `rule` misclassifies. Chunks use
/// separate ChaCha streams of `seed`, so the estimate does not depend on the
/// worker count.
pub fn empirical_error_rate(
    model: &GaussianLdaModel,
    rule: &Classifier,
    draws: usize,
    seed: u64,
) -> Result<MonteCarloRate> {
    let p = model.dim();
    check_len("classifier direction", p, rule.direction().len())?;
    if draws == 0 {
        return Err(Error::invalid("need at least one draw"));
    }
    let (_, pi2) = model.priors();
    let l_t = model.cholesky().factor_l().t().to_owned();
    let chunks = draws.div_ceil(MC_CHUNK);
    let errors: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let m = MC_CHUNK.min(draws - c * MC_CHUNK);
            let labels: Vec<Label> = (0..m)
                .map(|_| {
                    if rng.random::<f64>() < pi2 {
                        Label::Two
                    } else {
                        Label::One
                    }
                })
                .collect();
            let z = Array2::from_shape_simple_fn((m, p), || rng.sample::<f64, _>(StandardNormal));
            let x = z.dot(&l_t);
            x.axis_iter(Axis(0))
                .zip(labels.iter())
                .filter(|(row, &label)| {
                    let mean = match label {
                        Label::One => model.mu1(),
                        Label::Two => model.mu2(),
                    };
                    let obs = row + mean;
                    rule.classify(obs.view()).expect("dimensions checked") != label
                })
                .count()
        })
        .sum();
    let rate = errors as f64 / draws as f64;
    Ok(MonteCarloRate {
        rate,
        stderr: (rate * (1.0 - rate) / draws as f64).sqrt(),
        draws,
    })
}
