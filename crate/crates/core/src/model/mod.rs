//! Ground-truth Gaussian LDA instances, their population quantities, and
//! seeded sampling of labelled datasets.

mod covariance;
mod dataset;

pub use covariance::{embed_block, make_covariance, CovarianceSpec};
pub use dataset::{Dataset, Label};

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::optim::{block, gather, max_abs, relative_asymmetry, sign, Cholesky};

/// Entries of a solved direction below this fraction of its largest entry are zeroed.
pub const SUPPORT_TOL: f64 = 1e-10;

/// Label vectors are redrawn at most this many times when a class has fewer than two members.
pub const LABEL_RETRIES: usize = 100;

/// Two Gaussian classes sharing one covariance matrix.
#[derive(Debug, Clone)]
pub struct GaussianLdaModel {
    mu1: Array1<f64>,
    mu2: Array1<f64>,
    sigma: Array2<f64>,
    pi1: f64,
    pi2: f64,
    chol: Cholesky,
}

impl GaussianLdaModel {
    pub fn new(
        mu1: Array1<f64>,
        mu2: Array1<f64>,
        sigma: Array2<f64>,
        pi1: f64,
        pi2: f64,
    ) -> Result<Self> {
        let p = mu1.len();
        check_len("class-2 mean", p, mu2.len())?;
        check_len("covariance rows", p, sigma.nrows())?;
        check_len("covariance columns", p, sigma.ncols())?;
        if !(pi1 > 0.0 && pi1 < 1.0 && pi2 > 0.0 && pi2 < 1.0) || (pi1 + pi2 - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "priors must lie in (0,1) and sum to one, got ({pi1}, {pi2})"
            )));
        }
        let asym = relative_asymmetry(sigma.view());
        if asym > 1e-12 {
            return Err(Error::NotSymmetric(asym));
        }
        let chol = Cholesky::factor(sigma.view())?;
        Ok(GaussianLdaModel {
            mu1,
            mu2,
            sigma,
            pi1,
            pi2,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu1.len()
    }

    pub fn mu1(&self) -> &Array1<f64> {
        &self.mu1
    }

    pub fn mu2(&self) -> &Array1<f64> {
        &self.mu2
    }

    /// Mean difference `μ = μ2 − μ1`.
    pub fn mu(&self) -> Array1<f64> {
        &self.mu2 - &self.mu1
    }

    pub fn sigma(&self) -> &Array2<f64> {
        &self.sigma
    }

    pub fn priors(&self) -> (f64, f64) {
        (self.pi1, self.pi2)
    }

    pub fn prior_product(&self) -> f64 {
        self.pi1 * self.pi2
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }
}

/// Bayes direction `β = Σ⁻¹μ` with its support summaries.
#[derive(Debug, Clone)]
pub struct DiscriminantDirection {
    pub beta: Array1<f64>,
    pub support: Vec<usize>,
    pub beta_min: f64,
    /// `β_T' Σ_TT β_T`.
    pub beta_norm_sigma_sq: f64,
}

impl DiscriminantDirection {
    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    pub fn complement(&self) -> Vec<usize> {
        complement(&self.support, self.beta.len())
    }

    pub fn beta_t(&self) -> Array1<f64> {
        gather(self.beta.view(), &self.support)
    }

    pub fn signs_t(&self) -> Array1<f64> {
        self.support.iter().map(|&a| sign(self.beta[a])).collect()
    }

    pub fn l1_norm(&self) -> f64 {
        self.beta.iter().map(|x| x.abs()).sum()
    }
}

pub fn complement(support: &[usize], dim: usize) -> Vec<usize> {
    let mut inside = vec![false; dim];
    for &a in support {
        inside[a] = true;
    }
    (0..dim).filter(|&a| !inside[a]).collect()
}

pub fn discriminant_direction(model: &GaussianLdaModel) -> Result<DiscriminantDirection> {
    let mut beta = model.chol.solve(model.mu().view())?;
    let cutoff = SUPPORT_TOL * max_abs(beta.view());
    beta.mapv_inplace(|b| if b.abs() <= cutoff { 0.0 } else { b });
    let support: Vec<usize> = (0..beta.len()).filter(|&a| beta[a] != 0.0).collect();
    let beta_min = support
        .iter()
        .map(|&a| beta[a].abs())
        .fold(f64::INFINITY, f64::min);
    let beta_t = gather(beta.view(), &support);
    let sigma_tt = block(model.sigma.view(), &support, &support);
    let beta_norm_sigma_sq = beta_t.dot(&sigma_tt.dot(&beta_t)).max(0.0);
    Ok(DiscriminantDirection {
        beta,
        beta_min: if support.is_empty() { 0.0 } else { beta_min },
        support,
        beta_norm_sigma_sq,
    })
}

/// Conditional variance `σ_{a|T} = σ_aa − Σ_aT Σ_TT⁻¹ Σ_Ta`.
pub fn sigma_conditional(sigma: &Array2<f64>, support: &[usize], a: usize) -> Result<f64> {
    if a >= sigma.nrows() {
        return Err(Error::invalid(format!("index {a} out of range")));
    }
    if support.contains(&a) {
        return Err(Error::invalid(format!(
            "index {a} belongs to the conditioning set"
        )));
    }
    if support.is_empty() {
        return Ok(sigma[[a, a]]);
    }
    let chol = Cholesky::factor(block(sigma.view(), support, support).view())?;
    let cross: Array1<f64> = support.iter().map(|&t| sigma[[t, a]]).collect();
    Ok((sigma[[a, a]] - chol.inv_quad_form(cross.view())?).max(0.0))
}

/// How the mean difference of a generated model is chosen.
#[derive(Debug, Clone)]
pub enum MuScheme {
    /// Random size-`s` support with entries `±amplitude` of equal probability.
    RandomSign { amplitude: f64 },
    /// Random size-`s` support with `β` entries `±amplitude`, and `μ = Σβ`.
    RandomSignDirection { amplitude: f64 },
    /// Mean difference given directly; `s` counts its nonzeros.
    Mean(Array1<f64>),
    /// Discriminant direction given directly, `μ = Σβ`; `s` counts its nonzeros.
    Direction(Array1<f64>),
}

impl MuScheme {
    pub fn unit_signs() -> Self {
        MuScheme::RandomSign { amplitude: 1.0 }
    }
}

/// Random support of size `s` from a Fisher–Yates prefix, returned sorted.
pub fn random_support<R: Rng>(p: usize, s: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p).collect();
    for i in 0..s {
        let j = rng.random_range(i..p);
        idx.swap(i, j);
    }
    let mut t = idx[..s].to_vec();
    t.sort_unstable();
    t
}

/// Builds a model with `μ1 = 0` and `μ2 = μ`.
///
/// A [`CovarianceSpec::BlockEmbedded`] covariance has its block placed on the
/// support, so `Σ_NT = 0` and `β = Σ⁻¹μ` is supported on the same set.
pub fn make_model(
    p: usize,
    s: usize,
    covariance: &CovarianceSpec,
    mu_scheme: &MuScheme,
    priors: (f64, f64),
    seed: u64,
) -> Result<GaussianLdaModel> {
    if s == 0 || s > p {
        return Err(Error::invalid(format!(
            "support size {s} must lie in 1..={p}"
        )));
    }
    check_len("covariance dimension", p, covariance.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (support, values) = match mu_scheme {
        MuScheme::RandomSign { amplitude } | MuScheme::RandomSignDirection { amplitude } => {
            let t = random_support(p, s, &mut rng);
            let v: Vec<f64> = t
                .iter()
                .map(|_| {
                    if rng.random_bool(0.5) {
                        *amplitude
                    } else {
                        -*amplitude
                    }
                })
                .collect();
            (t, v)
        }
        MuScheme::Mean(v) | MuScheme::Direction(v) => {
            check_len("explicit vector", p, v.len())?;
            let t: Vec<usize> = (0..p).filter(|&a| v[a] != 0.0).collect();
            if t.len() != s {
                return Err(Error::invalid(format!(
                    "explicit vector has {} nonzeros but support size is {s}",
                    t.len()
                )));
            }
            let vals = t.iter().map(|&a| v[a]).collect();
            (t, vals)
        }
    };

    let sigma = match covariance {
        CovarianceSpec::BlockEmbedded { block, .. } => {
            check_len("covariance block", s, block.dim())?;
            embed_block(&make_covariance(block)?, p, &support)
        }
        other => make_covariance(other)?,
    };

    let mut vec = Array1::zeros(p);
    for (&a, &x) in support.iter().zip(values.iter()) {
        vec[a] = x;
    }
    let mu = match mu_scheme {
        MuScheme::Direction(_) | MuScheme::RandomSignDirection { .. } => sigma.dot(&vec),
        _ => vec,
    };
    GaussianLdaModel::new(Array1::zeros(p), mu, sigma, priors.0, priors.1)
}

/// Draws `n` labelled observations; `(seed, 0)` stream.
pub fn sample_dataset(model: &GaussianLdaModel, n: usize, seed: u64) -> Result<Dataset> {
    sample_dataset_stream(model, n, seed, 0)
}

/// Draws `n` labelled observations from the ChaCha stream `(seed, stream)`.
///
/// Labels are i.i.d. with `P[Y=2] = π2`; the whole label vector is redrawn when
/// a class has fewer than two members.
pub fn sample_dataset_stream(
    model: &GaussianLdaModel,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<Dataset> {
    if n < 4 {
        return Err(Error::invalid(format!(
            "need at least 4 observations, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let (_, pi2) = model.priors();

    let mut labels = Vec::with_capacity(n);
    let mut balanced = false;
    for _ in 0..LABEL_RETRIES {
        labels.clear();
        labels.extend((0..n).map(|_| {
            if rng.random::<f64>() < pi2 {
                Label::Two
            } else {
                Label::One
            }
        }));
        let n2 = labels.iter().filter(|&&l| l == Label::Two).count();
        if n2 >= 2 && n - n2 >= 2 {
            balanced = true;
            break;
        }
    }
    if !balanced {
        return Err(Error::invalid(format!(
            "could not draw at least two labels per class in {LABEL_RETRIES} attempts"
        )));
    }

    let p = model.dim();
    let z = Array2::from_shape_simple_fn((n, p), || rng.sample::<f64, _>(StandardNormal));
    let mut x = z.dot(&model.chol.factor_l().t());
    for (mut row, label) in x.axis_iter_mut(Axis(0)).zip(labels.iter()) {
        match label {
            Label::One => row += model.mu1(),
            Label::Two => row += model.mu2(),
        }
    }
    Dataset::new(x, labels)
}
