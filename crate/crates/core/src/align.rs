//! Extending a seed alignment to the whole vocabulary and rotating it into
//! the target basis, plus rotation baselines and diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, svd};

/// Singular values below this fraction of the largest are treated as zero
/// in the projection.
pub const PROJECTION_RCOND: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Projection {
    /// `n x d2` projected vocabulary.
    pub full: DMatrix<f64>,
    /// `d1 x d2` linear map with `full = full_src * map`.
    pub map: DMatrix<f64>,
    pub condition: f64,
    pub rank: usize,
}

/// Maps every source word into the aligned space so that its inner products
/// with the aligned seed match its original inner products with the seed:
/// the minimum-norm minimizer `M` of `|seed_aligned M^T - seed_src full_src^T|`.
///
/// `M = full_src (pinv(seed_aligned) seed_src)^T`, so the `c x n` right-hand
/// side is never formed.
pub fn least_squares_project(
    seed_aligned: &DMatrix<f64>,
    seed_src: &DMatrix<f64>,
    full_src: &DMatrix<f64>,
) -> Result<Projection> {
    if seed_src.ncols() != full_src.ncols() {
        return Err(Error::Shape(format!(
            "source seed has dimension {}, vocabulary has {}",
            seed_src.ncols(),
            full_src.ncols()
        )));
    }
    let mut proj = least_squares_map(seed_aligned, seed_src)?;
    proj.full = full_src * &proj.map;
    Ok(proj)
}

/// The `d1 x d2` map of [`least_squares_project`] alone; `full` is left empty.
pub fn least_squares_map(seed_aligned: &DMatrix<f64>, seed_src: &DMatrix<f64>) -> Result<Projection> {
    if seed_aligned.nrows() != seed_src.nrows() {
        return Err(Error::Shape(format!(
            "aligned seed has {} rows, source seed has {}",
            seed_aligned.nrows(),
            seed_src.nrows()
        )));
    }
    let pinv = pseudo_inverse(seed_aligned, PROJECTION_RCOND)?;
    let map = (pinv.matrix * seed_src).transpose();
    Ok(Projection {
        full: DMatrix::zeros(0, map.ncols()),
        map,
        condition: pinv.condition,
        rank: pinv.rank,
    })
}

/// Which per-pair residual drives the rotation weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualForm {
    /// `|Y[i] Y^T - X_t[i] X_t^T|^2`: the pair's own transfer residual.
    #[default]
    Transfer,
    /// `|Y[i] X_s^T - X_t[i] X_t^T|^2`; needs `d1 = d2`.
    Literal,
}

fn row_residuals(left: &DMatrix<f64>, right: &DMatrix<f64>, tgt: &DMatrix<f64>) -> Vec<f64> {
    let diff = left * right.transpose() - tgt * tgt.transpose();
    diff.row_iter().map(|r| r.norm_squared()).collect()
}

fn weights_from_residuals(r: &[f64], floor: f64) -> Result<DVector<f64>> {
    if !(floor > 0.0) || !floor.is_finite() {
        return Err(Error::InvalidArgument(format!("weight floor must be positive, got {floor}")));
    }
    let w: Vec<f64> = r.iter().map(|&r| 1.0 / r.max(floor)).collect();
    let wmax = w.iter().fold(0.0f64, |m, &v| m.max(v));
    Ok(DVector::from_iterator(w.len(), w.into_iter().map(|v| v / wmax)))
}

/// Per-pair transfer residuals of the aligned seed against the target seed.
pub fn transfer_residuals(seed_aligned: &DMatrix<f64>, tgt_seed: &DMatrix<f64>) -> Result<Vec<f64>> {
    if seed_aligned.nrows() != tgt_seed.nrows() {
        return Err(Error::Shape("aligned and target seeds differ in length".into()));
    }
    Ok(row_residuals(seed_aligned, seed_aligned, tgt_seed))
}

/// Inverse residual weights `1 / max(r_i, floor)`, scaled so the largest is 1.
pub fn residual_weights(seed_aligned: &DMatrix<f64>, tgt_seed: &DMatrix<f64>, floor: f64) -> Result<DVector<f64>> {
    weights_from_residuals(&transfer_residuals(seed_aligned, tgt_seed)?, floor)
}

/// As [`residual_weights`] but measuring the aligned rows against the
/// original source seed Gram.
pub fn residual_weights_literal(
    seed_aligned: &DMatrix<f64>,
    seed_src: &DMatrix<f64>,
    tgt_seed: &DMatrix<f64>,
    floor: f64,
) -> Result<DVector<f64>> {
    if seed_aligned.shape() != seed_src.shape() || seed_aligned.nrows() != tgt_seed.nrows() {
        return Err(Error::Shape(
            "literal residuals need aligned and source seeds of equal shape".into(),
        ));
    }
    weights_from_residuals(&row_residuals(seed_aligned, seed_src, tgt_seed), floor)
}

/// `U V^T` from the SVD `m = U S V^T`.
fn polar_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = svd(m)?;
    let u = s.u.ok_or(Error::Svd)?;
    let vt = s.v_t.ok_or(Error::Svd)?;
    Ok(u * vt)
}

/// Orthogonal `Omega` minimizing `|W (a Omega - b)|_F` with `W = diag(weights)`.
pub fn weighted_procrustes(a: &DMatrix<f64>, b: &DMatrix<f64>, weights: &DVector<f64>) -> Result<DMatrix<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("procrustes inputs {:?} and {:?}", a.shape(), b.shape())));
    }
    if weights.len() != a.nrows() {
        return Err(Error::Shape(format!(
            "{} weights for {} rows",
            weights.len(),
            a.nrows()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(Error::InvalidArgument("weights must be positive and finite".into()));
    }
    let mut wb = b.clone();
    for (i, mut row) in wb.row_iter_mut().enumerate() {
        row *= weights[i] * weights[i];
    }
    polar_factor(&(a.transpose() * wb))
}

/// Orthogonal `Omega` minimizing `|a Omega - b|_F`.
pub fn procrustes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    weighted_procrustes(a, b, &DVector::from_element(a.nrows(), 1.0))
}

/// Row-orthonormal `d1 x d2` map minimizing `|src Omega - tgt|_F`, `d1 <= d2`.
pub fn orthonormal_linear_map(src_seed: &DMatrix<f64>, tgt_seed: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (d1, d2) = (src_seed.ncols(), tgt_seed.ncols());
    if src_seed.nrows() != tgt_seed.nrows() {
        return Err(Error::Shape("source and target seeds differ in length".into()));
    }
    if d1 > d2 {
        return Err(Error::InvalidArgument(format!(
            "row-orthonormal map needs d1 <= d2, got {d1} > {d2}"
        )));
    }
    polar_factor(&(src_seed.transpose() * tgt_seed))
}

/// Relative distance of the aligned seed from the nearest rotation of the
/// source seed: `|Y - X_s Omega*|_F / |X_s|_F`.
pub fn orthogonal_deviation(seed_aligned: &DMatrix<f64>, seed_src: &DMatrix<f64>) -> Result<f64> {
    if seed_aligned.shape() != seed_src.shape() {
        return Err(Error::Shape(format!(
            "deviation needs equal shapes, got {:?} and {:?}",
            seed_aligned.shape(),
            seed_src.shape()
        )));
    }
    let norm = seed_src.norm();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("source seed has zero norm".into()));
    }
    let omega = procrustes(seed_src, seed_aligned)?;
    Ok((seed_aligned - seed_src * omega).norm() / norm)
}

/// `|E E^T - F F^T|_F`. Large inputs go through the `d x d` identity
/// `|E^T E|^2 + |F^T F|^2 - 2 |E^T F|^2` instead of forming `n x n` matrices.
pub fn pip_distance(e: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<f64> {
    if e.nrows() != f.nrows() {
        return Err(Error::Shape(format!("{} rows vs {} rows", e.nrows(), f.nrows())));
    }
    if e.nrows() <= 2048 {
        return Ok((e * e.transpose() - f * f.transpose()).norm());
    }
    let ee = (e.transpose() * e).norm_squared();
    let ff = (f.transpose() * f).norm_squared();
    let ef = (e.transpose() * f).norm_squared();
    Ok((ee + ff - 2.0 * ef).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, orthonormalize};

    fn rotation(d: usize, seed: u64) -> DMatrix<f64> {
        orthonormalize(gaussian_matrix(d, d, seed))
    }

    fn ortho_error(m: &DMatrix<f64>) -> f64 {
        (m.transpose() * m - DMatrix::identity(m.ncols(), m.ncols())).norm()
    }

    #[test]
    fn identity_projection() {
        let xs = gaussian_matrix(12, 4, 1);
        let full = gaussian_matrix(30, 4, 2);
        let p = least_squares_project(&xs, &xs, &full).unwrap();
        assert!((p.full - &full).amax() < 1e-8);
        assert_eq!(p.rank, 4);
    }

    #[test]
    fn zero_column_gets_no_weight() {
        let mut y = gaussian_matrix(10, 3, 3);
        y.column_mut(1).fill(0.0);
        let xs = gaussian_matrix(10, 4, 4);
        let full = gaussian_matrix(7, 4, 5);
        let p = least_squares_project(&y, &xs, &full).unwrap();
        assert_eq!(p.rank, 2);
        assert!(p.full.column(1).amax() < 1e-12);
    }

    #[test]
    fn projection_matches_columnwise_qr_solve() {
        let y = gaussian_matrix(15, 4, 6);
        let xs = gaussian_matrix(15, 5, 7);
        let full = gaussian_matrix(9, 5, 8);
        let p = least_squares_project(&y, &xs, &full).unwrap();
        let rhs = &xs * full.transpose();
        let qr = y.clone().qr();
        let (q, r) = (qr.q(), qr.r());
        for col in 0..9 {
            let b = q.transpose() * rhs.column(col);
            let sol = r.solve_upper_triangular(&b).unwrap();
            let got = p.full.row(col).transpose();
            assert!((sol - got).amax() < 1e-8);
        }
    }

    #[test]
    fn weights_examples() {
        let x = gaussian_matrix(6, 3, 9);
        let w = residual_weights(&x, &x, 1e-6).unwrap();
        assert!(w.iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let r = [1.0, 10.0, 1.0];
        let w = weights_from_residuals(&r, 1e-6).unwrap();
        assert!((w[0] / w[1] - 10.0).abs() < 1e-12);
        assert_eq!(w.max(), 1.0);
    }

    #[test]
    fn residuals_match_double_loop() {
        let y = gaussian_matrix(6, 3, 10);
        let xt = gaussian_matrix(6, 3, 11);
        let r = transfer_residuals(&y, &xt).unwrap();
        for i in 0..6 {
            let mut sum = 0.0;
            for j in 0..6 {
                let a: f64 = (0..3).map(|k| y[(i, k)] * y[(j, k)]).sum();
                let b: f64 = (0..3).map(|k| xt[(i, k)] * xt[(j, k)]).sum();
                sum += (a - b).powi(2);
            }
            assert!((r[i] - sum).abs() < 1e-10 * sum.max(1.0));
        }
    }

    #[test]
    fn literal_residual_needs_equal_dims() {
        let y = gaussian_matrix(5, 3, 12);
        let xs = gaussian_matrix(5, 2, 13);
        assert!(residual_weights_literal(&y, &xs, &y, 1e-6).is_err());
        let w = residual_weights_literal(&y, &y, &y, 1e-6).unwrap();
        assert!(w.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let a = gaussian_matrix(10, 4, 14);
        let r = rotation(4, 15);
        let omega = procrustes(&a, &(&a * &r)).unwrap();
        assert!((&omega - &r).norm() < 1e-8);
        assert!(ortho_error(&omega) < 1e-10);
        assert!((procrustes(&a, &a).unwrap() - DMatrix::identity(4, 4)).norm() < 1e-10);
    }

    #[test]
    fn scalar_procrustes_is_a_sign() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, -1.0]);
        let b = DMatrix::from_column_slice(3, 1, &[-1.0, -1.0, 5.0]);
        let w = DVector::from_vec(vec![1.0, 0.5, 0.1]);
        // sum w^2 a b = -1 - 0.5 - 0.05 < 0
        assert_eq!(weighted_procrustes(&a, &b, &w).unwrap()[(0, 0)], -1.0);
    }

    #[test]
    fn unit_weights_are_plain_procrustes() {
        let a = gaussian_matrix(8, 3, 16);
        let b = gaussian_matrix(8, 3, 17);
        let ones = DVector::from_element(8, 1.0);
        assert_eq!(weighted_procrustes(&a, &b, &ones).unwrap(), procrustes(&a, &b).unwrap());
    }

    #[test]
    fn linear_map_examples() {
        let a = gaussian_matrix(20, 4, 18);
        let r = rotation(4, 19);
        assert!((orthonormal_linear_map(&a, &(&a * &r)).unwrap() - &r).norm() < 1e-8);

        let tgt = gaussian_matrix(20, 5, 20);
        let src = tgt.columns(0, 3).into_owned();
        let omega = orthonormal_linear_map(&src, &tgt).unwrap();
        assert_eq!(omega.shape(), (3, 5));
        assert!((&omega * omega.transpose() - DMatrix::identity(3, 3)).norm() < 1e-8);
        let resid = (&src * &omega - &tgt).norm();
        assert!(resid <= tgt.columns(3, 2).norm() + 1e-9);

        assert!(orthonormal_linear_map(&tgt, &src).is_err());
    }

    #[test]
    fn deviation_examples() {
        let xs = gaussian_matrix(9, 3, 21);
        let r = rotation(3, 22);
        assert!(orthogonal_deviation(&(&xs * r), &xs).unwrap() < 1e-8);
        let i2 = DMatrix::identity(2, 2);
        assert!((orthogonal_deviation(&(&i2 * 2.0), &i2).unwrap() - 1.0).abs() < 1e-12);
        assert!(orthogonal_deviation(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn pip_is_rotation_invariant() {
        let f = gaussian_matrix(10, 3, 23);
        assert_eq!(pip_distance(&f, &f).unwrap(), 0.0);
        let e = &f * rotation(3, 24);
        assert!(pip_distance(&e, &f).unwrap() < 1e-10);
    }

    #[test]
    fn pip_identity_path_agrees() {
        let e = gaussian_matrix(2100, 3, 25);
        let f = gaussian_matrix(2100, 3, 26);
        let direct = (&e * e.transpose() - &f * f.transpose()).norm();
        let fast = pip_distance(&e, &f).unwrap();
        assert!((direct - fast).abs() < 1e-8 * direct);
    }
}
