//! Dense helpers shared by the solvers: sorted symmetric eigendecomposition,
//! block power iteration for the leading eigenpairs of large matrices, and an
//! SVD-backed pseudo-inverse.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Eigenpairs in descending eigenvalue order; column `j` of `vectors`
/// belongs to `values[j]`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    /// Block iterations used; 0 for the dense path.
    pub iterations: usize,
}

/// Flips each column so that its largest-magnitude entry (first one on ties)
/// is positive.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Full eigendecomposition of a symmetric matrix, sorted descending, with
/// the sign convention of [`fix_column_signs`].
pub fn symmetric_eigen_desc(a: &DMatrix<f64>) -> EigenPairs {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let order = descending_order(eig.eigenvalues.as_slice());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    fix_column_signs(&mut vectors);
    EigenPairs {
        values,
        vectors,
        iterations: 0,
    }
}

pub(crate) fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// Orthonormal basis (thin Householder Q) for the columns of `m`; `m` must
/// have at least as many rows as columns.
pub fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Settings for [`top_eigenpairs_block`].
#[derive(Debug, Clone, Copy)]
pub struct BlockPowerOptions {
    /// Convergence threshold on `|A v - θ v| / max|θ|` for every wanted pair.
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl BlockPowerOptions {
    pub fn for_size(n: usize) -> Self {
        BlockPowerOptions {
            tol: 1e-10,
            max_iterations: 10 * n.max(1),
            seed: 0x5eed_f1bb,
        }
    }
}

/// The `k` algebraically largest eigenpairs of symmetric `a` by block power
/// iteration with Rayleigh-Ritz extraction. Each sweep costs one `n x n`
/// by `n x p` product, `p = k + max(10, k/5)`.
///
/// The block converges to the dominant (largest magnitude) invariant
/// subspace; the `k` largest Ritz values are taken from it. Negative
/// eigenvalues larger in magnitude than the k-th wanted one occupy block
/// slots, which the oversampling absorbs when they are few.
pub fn top_eigenpairs_block(a: &DMatrix<f64>, k: usize, opts: BlockPowerOptions) -> Result<EigenPairs> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!("matrix is {}x{}, not square", n, a.ncols())));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "requested {k} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let p = (k + (k / 5).max(10)).min(n);
    let mut q = orthonormalize(gaussian_matrix(n, p, opts.seed));
    let mut worst = f64::INFINITY;

    for it in 1..=opts.max_iterations {
        let y = a * &q;
        let mut h = q.transpose() * &y;
        h = (&h + h.transpose()) * 0.5;
        let ritz = symmetric_eigen_desc(&h);
        let v = &q * &ritz.vectors;
        let av = &y * &ritz.vectors;

        let scale = ritz
            .values
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(f64::MIN_POSITIVE);
        worst = (0..k)
            .map(|j| (av.column(j) - v.column(j) * ritz.values[j]).norm() / scale)
            .fold(0.0, f64::max);

        if worst <= opts.tol {
            let mut vectors = v.columns(0, k).into_owned();
            fix_column_signs(&mut vectors);
            return Ok(EigenPairs {
                values: ritz.values[..k].to_vec(),
                vectors,
                iterations: it,
            });
        }
        q = orthonormalize(av);
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual: worst,
    })
}

pub(crate) fn svd(a: &DMatrix<f64>) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(a.clone(), true, true, f64::EPSILON, 0).ok_or(Error::Svd)
}

/// Moore-Penrose pseudo-inverse with singular values below
/// `rcond * sigma_max` treated as zero.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    /// `sigma_max / sigma_min` over the retained singular values.
    pub condition: f64,
}

pub fn pseudo_inverse(a: &DMatrix<f64>, rcond: f64) -> Result<PseudoInverse> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Ok(PseudoInverse {
            matrix: DMatrix::zeros(c, r),
            rank: 0,
            condition: f64::NAN,
        });
    }
    let svd = svd(a)?;
    let u = svd.u.as_ref().ok_or(Error::Svd)?;
    let vt = svd.v_t.as_ref().ok_or(Error::Svd)?;
    let sigma = &svd.singular_values;
    let smax = sigma.iter().fold(0.0f64, |m, &s| m.max(s));
    let cutoff = rcond * smax;
    let mut inv = DMatrix::zeros(c, r);
    let mut rank = 0;
    let mut smin = f64::INFINITY;
    for (j, &s) in sigma.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            smin = smin.min(s);
            // inv += v_j * u_j^T / s
            inv.ger(1.0 / s, &vt.row(j).transpose(), &u.column(j), 1.0);
        }
    }
    let condition = if rank == 0 { f64::INFINITY } else { smax / smin };
    Ok(PseudoInverse {
        matrix: inv,
        rank,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let g = gaussian_matrix(n, n, seed);
        (&g + g.transpose()) * 0.5
    }

    #[test]
    fn dense_eigen_is_sorted_and_reconstructs() {
        let a = random_symmetric(9, 1);
        let e = symmetric_eigen_desc(&a);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        let recon = &e.vectors * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone())) * e.vectors.transpose();
        assert!((recon - &a).norm() < 1e-10);
        for col in e.vectors.column_iter() {
            let imax = col.iamax();
            assert!(col[imax] > 0.0);
        }
    }

    #[test]
    fn block_iteration_matches_dense_on_psd_matrix() {
        let b = gaussian_matrix(60, 8, 7);
        let a = &b * b.transpose() + DMatrix::identity(60, 60) * 0.01;
        let dense = symmetric_eigen_desc(&a);
        let block = top_eigenpairs_block(&a, 5, BlockPowerOptions::for_size(60)).unwrap();
        for j in 0..5 {
            assert!((dense.values[j] - block.values[j]).abs() < 1e-9 * dense.values[0]);
            let diff = (dense.vectors.column(j) - block.vectors.column(j)).norm();
            assert!(diff < 1e-6, "column {j}: {diff}");
        }
    }

    #[test]
    fn block_iteration_handles_mixed_signs() {
        let a = random_symmetric(40, 3);
        let dense = symmetric_eigen_desc(&a);
        let block = top_eigenpairs_block(&a, 4, BlockPowerOptions::for_size(40)).unwrap();
        for j in 0..4 {
            assert!((dense.values[j] - block.values[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn block_iteration_reports_non_convergence() {
        let a = random_symmetric(50, 5);
        let opts = BlockPowerOptions {
            tol: 1e-14,
            max_iterations: 1,
            seed: 1,
        };
        assert!(matches!(
            top_eigenpairs_block(&a, 3, opts),
            Err(Error::NoConvergence { iterations: 1, .. })
        ));
    }

    #[test]
    fn pseudo_inverse_of_rank_deficient_matrix() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        let p = pseudo_inverse(&a, 1e-10).unwrap();
        assert_eq!(p.rank, 1);
        let expect = DMatrix::from_row_slice(2, 3, &[0.2, 0.4, 0.0, 0.0, 0.0, 0.0]);
        assert!((p.matrix - expect).norm() < 1e-12);
    }
}
