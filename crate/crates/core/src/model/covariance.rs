use ndarray::Array2;

use crate::error::{check_len, Error, Result};
use crate::optim::{relative_asymmetry, Cholesky};

/// Covariance families used to build ground-truth instances.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceSpec {
    Identity {
        dim: usize,
    },
    /// `Σ_ab = ρ^|a−b|`.
    Toeplitz {
        dim: usize,
        rho: f64,
    },
    /// Unit diagonal, `ρ` everywhere else.
    EqualCorrelation {
        dim: usize,
        rho: f64,
    },
    /// `block` in the top-left corner, identity on the remaining `dim − block.dim()`
    /// coordinates and zero off-diagonal blocks. [`crate::model::make_model`] places
    /// the block on the chosen support instead of the corner.
    BlockEmbedded {
        dim: usize,
        block: Box<CovarianceSpec>,
    },
    Explicit(Array2<f64>),
}

impl CovarianceSpec {
    pub fn dim(&self) -> usize {
        match self {
            CovarianceSpec::Identity { dim }
            | CovarianceSpec::Toeplitz { dim, .. }
            | CovarianceSpec::EqualCorrelation { dim, .. }
            | CovarianceSpec::BlockEmbedded { dim, .. } => *dim,
            CovarianceSpec::Explicit(m) => m.nrows(),
        }
    }

    pub fn block_embedded(dim: usize, block: CovarianceSpec) -> Self {
        CovarianceSpec::BlockEmbedded {
            dim,
            block: Box::new(block),
        }
    }

    /// Same family with a different dimension; explicit matrices cannot be resized.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Ok(match self {
            CovarianceSpec::Identity { .. } => CovarianceSpec::Identity { dim },
            CovarianceSpec::Toeplitz { rho, .. } => CovarianceSpec::Toeplitz { dim, rho: *rho },
            CovarianceSpec::EqualCorrelation { rho, .. } => {
                CovarianceSpec::EqualCorrelation { dim, rho: *rho }
            }
            CovarianceSpec::BlockEmbedded { block, .. } => CovarianceSpec::BlockEmbedded {
                dim,
                block: block.clone(),
            },
            CovarianceSpec::Explicit(m) => {
                check_len("explicit covariance dimension", m.nrows(), dim)?;
                self.clone()
            }
        })
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!(
            "correlation rho must lie in [0, 1), got {rho}"
        )));
    }
    Ok(())
}

pub fn make_covariance(spec: &CovarianceSpec) -> Result<Array2<f64>> {
    match spec {
        CovarianceSpec::Identity { dim } => Ok(Array2::eye(*dim)),
        CovarianceSpec::Toeplitz { dim, rho } => {
            check_rho(*rho)?;
            Ok(Array2::from_shape_fn((*dim, *dim), |(a, b)| {
                rho.powi(a.abs_diff(b) as i32)
            }))
        }
        CovarianceSpec::EqualCorrelation { dim, rho } => {
            check_rho(*rho)?;
            Ok(Array2::from_shape_fn((*dim, *dim), |(a, b)| {
                if a == b {
                    1.0
                } else {
                    *rho
                }
            }))
        }
        CovarianceSpec::BlockEmbedded { dim, block } => {
            let inner = make_covariance(block)?;
            let s = inner.nrows();
            if s > *dim {
                return Err(Error::invalid(format!(
                    "block of size {s} does not fit in dimension {dim}"
                )));
            }
            let support: Vec<usize> = (0..s).collect();
            Ok(embed_block(&inner, *dim, &support))
        }
        CovarianceSpec::Explicit(m) => {
            check_len("explicit covariance columns", m.nrows(), m.ncols())?;
            let asym = relative_asymmetry(m.view());
            if asym > 1e-12 {
                return Err(Error::NotSymmetric(asym));
            }
            Cholesky::factor(m.view())?;
            Ok(m.clone())
        }
    }
}

/// Identity of size `dim` with `block` written on the `support × support` entries.
pub fn embed_block(block: &Array2<f64>, dim: usize, support: &[usize]) -> Array2<f64> {
    let mut sigma = Array2::eye(dim);
    for (i, &a) in support.iter().enumerate() {
        for (j, &b) in support.iter().enumerate() {
            sigma[[a, b]] = block[[i, j]];
        }
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity() {
        let s = make_covariance(&CovarianceSpec::Identity { dim: 4 }).unwrap();
        assert_eq!(s, Array2::<f64>::eye(4));
    }

    #[test]
    fn toeplitz_three() {
        let s = make_covariance(&CovarianceSpec::Toeplitz { dim: 3, rho: 0.1 }).unwrap();
        let want = array![[1.0, 0.1, 0.01], [0.1, 1.0, 0.1], [0.01, 0.1, 1.0]];
        for (a, b) in s.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-16);
        }
    }

    #[test]
    fn equal_correlation_two() {
        let s = make_covariance(&CovarianceSpec::EqualCorrelation { dim: 2, rho: 0.5 }).unwrap();
        assert_eq!(s, array![[1.0, 0.5], [0.5, 1.0]]);
    }

    #[test]
    fn rho_out_of_range() {
        for rho in [-0.1, 1.0, 1.5] {
            assert!(make_covariance(&CovarianceSpec::Toeplitz { dim: 3, rho }).is_err());
            assert!(make_covariance(&CovarianceSpec::EqualCorrelation { dim: 3, rho }).is_err());
        }
    }

    #[test]
    fn explicit_non_spd_names_pivot() {
        let m = array![[1.0, 2.0], [2.0, 1.0]];
        match make_covariance(&CovarianceSpec::Explicit(m)) {
            Err(Error::Singular { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn block_in_corner() {
        let spec = CovarianceSpec::block_embedded(
            4,
            CovarianceSpec::EqualCorrelation { dim: 2, rho: 0.3 },
        );
        let s = make_covariance(&spec).unwrap();
        assert_eq!(s[[0, 1]], 0.3);
        assert_eq!(s[[2, 3]], 0.0);
        assert_eq!(s[[0, 2]], 0.0);
        assert_eq!(s[[3, 3]], 1.0);
    }
}
