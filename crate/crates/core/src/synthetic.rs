//! Synthetic embedding pairs with a known translation, used by the benchmark
//! and the tests.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embio::Embedding;
use crate::error::{Error, Result};
use crate::linalg::gaussian_matrix;
use crate::preprocess::normalize_rows;

/// `n x d` matrix of independent uniformly random unit vectors.
pub fn random_unit_rows(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut m = gaussian_matrix(n, d, seed);
    normalize_rows(&mut m);
    m
}

/// Haar-distributed `d x d` orthogonal matrix.
pub fn random_orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
    let qr = gaussian_matrix(d, d, seed).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random `d1 x d2` matrix with orthonormal rows, `d1 <= d2`.
pub fn random_row_orthonormal(d1: usize, d2: usize, seed: u64) -> Result<DMatrix<f64>> {
    if d1 > d2 {
        return Err(Error::InvalidArgument(format!("need d1 <= d2, got {d1} > {d2}")));
    }
    Ok(random_orthogonal(d2, seed).rows(0, d1).into_owned())
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    /// Tokens `s0, s1, ...`.
    pub src: Embedding,
    /// Tokens `t0, t1, ...`; `t{i}` is the translation of `s{i}`.
    pub tgt: Embedding,
    /// The `d1 x d2` map with `tgt = src * map + noise`.
    pub map: DMatrix<f64>,
}

/// `n` random unit source vectors in `d1` dimensions, mapped by a random
/// row-orthonormal `d1 x d2` matrix and perturbed by Gaussian noise of
/// standard deviation `noise` per entry.
pub fn synthetic_pair(n: usize, d1: usize, d2: usize, noise: f64, seed: u64) -> Result<SyntheticPair> {
    let src = random_unit_rows(n, d1, seed);
    let map = random_row_orthonormal(d1, d2, seed.wrapping_add(1))?;
    let mut tgt = &src * &map;
    if noise > 0.0 {
        tgt += gaussian_matrix(n, d2, seed.wrapping_add(2)) * noise;
    }
    let words = |p: &str| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    Ok(SyntheticPair {
        src: Embedding::new(words("s"), src)?,
        tgt: Embedding::new(words("t"), tgt)?,
        map,
    })
}

/// Disjoint train and test sets of identity pairs `(i, i)` drawn from a
/// random permutation of `0..n`.
pub fn split_identity_pairs(
    n: usize,
    train: usize,
    test: usize,
    seed: u64,
) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    if train + test > n {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {train} + {test} pairs from {n} words"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pairs = |s: &[usize]| s.iter().map(|&i| (i, i)).collect();
    Ok((pairs(&idx[..train]), pairs(&idx[train..train + test])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_matrices_are_orthogonal() {
        let q = random_orthogonal(6, 1);
        assert!((q.transpose() * &q - DMatrix::identity(6, 6)).norm() < 1e-12);
        let b = random_row_orthonormal(3, 5, 2).unwrap();
        assert!((&b * b.transpose() - DMatrix::identity(3, 3)).norm() < 1e-12);
        assert!(random_row_orthonormal(5, 3, 2).is_err());
    }

    #[test]
    fn noiseless_pair_is_an_isometry() {
        let p = synthetic_pair(30, 4, 6, 0.0, 3).unwrap();
        let gs = p.src.matrix() * p.src.matrix().transpose();
        let gt = p.tgt.matrix() * p.tgt.matrix().transpose();
        assert!((gs - gt).amax() < 1e-12);
        assert_eq!(p.tgt.lookup("t7"), Some(7));
    }

    #[test]
    fn splits_are_disjoint() {
        let (train, test) = split_identity_pairs(20, 5, 10, 4).unwrap();
        assert_eq!((train.len(), test.len()), (5, 10));
        assert!(train.iter().all(|p| !test.contains(p)));
        assert!(split_identity_pairs(10, 6, 6, 0).is_err());
    }
}
