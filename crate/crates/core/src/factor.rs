//! Best PSD approximation of rank at most `d2` to a symmetric matrix.
//!
//! With `G = Q L Q^T`, the Frobenius-nearest PSD matrix of rank `<= d2` keeps
//! the `d2` largest nonnegative eigenvalues; its factor has columns
//! `sqrt(l_j) q_j`. Eigenvalues below `c * eps * max|l|` count as zero.

use log::debug;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gram::GramMatrix;
use crate::linalg::{symmetric_eigen_desc, top_eigenpairs_block, BlockPowerOptions, EigenPairs};

/// Matrices at or below this size use the dense eigensolver under `Auto`.
pub const DENSE_EIGEN_LIMIT: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    #[default]
    Auto,
    Dense,
    PowerIteration,
}

impl EigenMethod {
    fn resolve(self, n: usize) -> EigenMethod {
        match self {
            EigenMethod::Auto if n <= DENSE_EIGEN_LIMIT => EigenMethod::Dense,
            EigenMethod::Auto => EigenMethod::PowerIteration,
            m => m,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Factorization {
    /// `c x d2` factor.
    pub factor: DMatrix<f64>,
    /// Leading eigenvalues used (including any negative ones that were zeroed).
    pub eigenvalues: Vec<f64>,
    pub method: EigenMethod,
    pub iterations: usize,
}

pub fn low_rank_psd_factor(gstar: &GramMatrix, d2: usize) -> Result<DMatrix<f64>> {
    low_rank_psd_factor_with(gstar, d2, EigenMethod::Auto).map(|f| f.factor)
}

pub fn low_rank_psd_factor_with(gstar: &GramMatrix, d2: usize, method: EigenMethod) -> Result<Factorization> {
    if d2 == 0 {
        return Err(Error::InvalidArgument("target dimension must be at least 1".into()));
    }
    let c = gstar.dim();
    let k = d2.min(c);
    let method = method.resolve(c);
    let pairs: EigenPairs = match method {
        EigenMethod::Dense => symmetric_eigen_desc(gstar.entries()),
        _ => top_eigenpairs_block(gstar.entries(), k, BlockPowerOptions::for_size(c))?,
    };
    debug!("{method:?} eigensolver on {c}x{c}: {} iterations", pairs.iterations);

    // Eigenvalues within rounding of zero are zero; keeping them would give
    // near-null columns that the least-squares projection then amplifies.
    let scale = pairs.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = c as f64 * f64::EPSILON * scale;
    let mut factor = DMatrix::zeros(c, d2);
    for j in 0..k {
        let l = pairs.values[j];
        if l > tol {
            factor.column_mut(j).copy_from(&(pairs.vectors.column(j) * l.sqrt()));
        }
    }
    Ok(Factorization {
        factor,
        eigenvalues: pairs.values[..k].to_vec(),
        method,
        iterations: pairs.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    use crate::gram::gram;
    use crate::linalg::gaussian_matrix;

    fn sym(m: DMatrix<f64>) -> GramMatrix {
        GramMatrix::from_symmetric(m).unwrap()
    }

    #[test]
    fn diagonal_examples() {
        let g = sym(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.0])));
        let x = low_rank_psd_factor(&g, 2).unwrap();
        assert!((gram(&x).entries() - g.entries()).amax() < 1e-12);
        assert!((x[(0, 0)].abs() - 2.0).abs() < 1e-12);
        assert!((x[(1, 1)].abs() - 1.0).abs() < 1e-12);

        let g = sym(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, -1.0])));
        let x = low_rank_psd_factor(&g, 3).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 0.0]));
        assert!((gram(&x).entries() - expect).amax() < 1e-12);
        assert_eq!(x.column(2).amax(), 0.0);
    }

    #[test]
    fn pads_when_d2_exceeds_c() {
        let g = sym(DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0])));
        let x = low_rank_psd_factor(&g, 4).unwrap();
        assert_eq!(x.shape(), (2, 4));
        assert!((gram(&x).entries() - g.entries()).amax() < 1e-12);
    }

    #[test]
    fn dense_and_power_paths_agree() {
        let b = gaussian_matrix(80, 6, 21);
        let g = sym(&b * b.transpose());
        let d = low_rank_psd_factor_with(&g, 4, EigenMethod::Dense).unwrap();
        let p = low_rank_psd_factor_with(&g, 4, EigenMethod::PowerIteration).unwrap();
        assert_eq!(p.method, EigenMethod::PowerIteration);
        assert!(p.iterations > 0);
        let diff = (gram(&d.factor).entries() - gram(&p.factor).entries()).norm();
        assert!(diff < 1e-7 * g.entries().norm(), "{diff}");
    }

    #[test]
    fn rejects_zero_dimension() {
        let g = sym(DMatrix::identity(3, 3));
        assert!(low_rank_psd_factor(&g, 0).is_err());
    }
}
