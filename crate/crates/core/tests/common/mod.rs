#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sda_core::model::{
    make_model, sample_dataset, CovarianceSpec, Dataset, GaussianLdaModel, MuScheme,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(d, || rng.sample(StandardNormal))
}

/// `A'A/d + 0.1 I` for a Gaussian `A`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    let a = Array2::from_shape_simple_fn((d, d), || rng.sample::<f64, _>(StandardNormal));
    let m = a.t().dot(&a) / d as f64 + Array2::<f64>::eye(d) * 0.1;
    (&m + &m.t()) * 0.5
}

pub fn covariance(kind: u8, p: usize, rho: f64) -> CovarianceSpec {
    match kind % 3 {
        0 => CovarianceSpec::Identity { dim: p },
        1 => CovarianceSpec::Toeplitz { dim: p, rho },
        _ => CovarianceSpec::EqualCorrelation { dim: p, rho },
    }
}

/// Model with a sparse direction `β = ±amplitude` on a random support.
pub fn sparse_model(
    p: usize,
    s: usize,
    kind: u8,
    rho: f64,
    amplitude: f64,
    seed: u64,
) -> GaussianLdaModel {
    make_model(
        p,
        s,
        &covariance(kind, p, rho),
        &MuScheme::RandomSignDirection { amplitude },
        (0.5, 0.5),
        seed,
    )
    .expect("valid model")
}

pub fn sparse_instance(
    p: usize,
    s: usize,
    n: usize,
    kind: u8,
    rho: f64,
    seed: u64,
) -> (GaussianLdaModel, Dataset) {
    let model = sparse_model(p, s, kind, rho, 1.0, seed);
    let data = sample_dataset(&model, n, seed.wrapping_add(1)).expect("valid sample");
    (model, data)
}

pub fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn select(a: &Array2<f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| a[[rows[i], cols[j]]])
}

pub fn gather(v: &Array1<f64>, idx: &[usize]) -> Array1<f64> {
    idx.iter().map(|&i| v[i]).collect()
}
