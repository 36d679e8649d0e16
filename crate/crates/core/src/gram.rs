//! Gram matrices, inner-product filtering and the FIPP objective.
//!
//! For seed matrices `X_s` (c x d1) and `X_t` (c x d2) the objective over
//! `Y` (c x d2) is
//!
//! ```text
//! |Y Y^T - G_s|_F^2 + lambda * |M o (Y Y^T - G_t)|_F^2
//! ```
//!
//! where `G_s = X_s X_s^T`, `G_t = X_t X_t^T` and `M` is the 0/1 mask of
//! entries whose source and target inner products differ by less than
//! epsilon. Entry by entry the objective is a quadratic in `(Y Y^T)_ij`, so
//! its unconstrained minimizer over symmetric matrices is the blend
//! computed by [`closed_form_gstar`].

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Symmetric `c x c` matrix of inner products.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    /// Wraps `m` after checking it is square, finite and symmetric to 1e-10.
    pub fn from_symmetric(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape(format!("Gram matrix is {}x{}", m.nrows(), m.ncols())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("Gram matrix has non-finite entries".into()));
        }
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "Gram matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(GramMatrix(m))
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

fn mirror_upper(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            m[(i, j)] = m[(j, i)];
        }
    }
}

/// `rows * rows^T`, exactly symmetric.
pub fn gram(rows: &DMatrix<f64>) -> GramMatrix {
    let mut g = rows * rows.transpose();
    mirror_upper(&mut g);
    GramMatrix(g)
}

/// Binary symmetric mask of inner products that agree across languages.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMask {
    dim: usize,
    bits: Vec<bool>,
    epsilon: f64,
    nnz: usize,
}

impl FilterMask {
    /// Builds a mask from a `c x c` predicate, which must be symmetric.
    pub fn from_fn(dim: usize, epsilon: f64, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut bits = vec![false; dim * dim];
        for j in 0..dim {
            for i in 0..dim {
                bits[j * dim + i] = f(i, j);
            }
        }
        for j in 0..dim {
            for i in (j + 1)..dim {
                if bits[j * dim + i] != bits[i * dim + j] {
                    return Err(Error::InvalidArgument(format!(
                        "mask is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let nnz = bits.iter().filter(|&&b| b).count();
        Ok(FilterMask {
            dim,
            bits,
            epsilon,
            nnz,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[j * self.dim + i]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }
}

fn check_same_dim(a: &GramMatrix, b: &GramMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "Gram matrices are {0}x{0} and {1}x{1}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

fn check_mask(g: &GramMatrix, mask: &FilterMask) -> Result<()> {
    if g.dim() != mask.dim() {
        return Err(Error::Shape(format!(
            "mask is {0}x{0}, Gram matrix is {1}x{1}",
            mask.dim(),
            g.dim()
        )));
    }
    Ok(())
}

/// Keeps `(i, j)` iff `|gs_ij - gt_ij| < epsilon`.
pub fn filter_mask(gs: &GramMatrix, gt: &GramMatrix, epsilon: f64) -> Result<FilterMask> {
    check_same_dim(gs, gt)?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let (s, t) = (gs.entries(), gt.entries());
    FilterMask::from_fn(gs.dim(), epsilon, |i, j| (s[(i, j)] - t[(i, j)]).abs() < epsilon)
}

/// `lambda * c^2 / nnz` with gamma scaling, `lambda` without.
pub fn effective_lambda(lambda: f64, mask: &FilterMask, gamma_scaling: bool) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if !gamma_scaling || lambda == 0.0 {
        return Ok(lambda);
    }
    if mask.nnz() == 0 {
        return Err(Error::EmptyFilter {
            epsilon: mask.epsilon(),
        });
    }
    let c = mask.dim() as f64;
    Ok(lambda * (c * c / mask.nnz() as f64))
}

/// Entry-wise minimizer of the objective over symmetric matrices:
/// `(gs + lambda gt) / (1 + lambda)` on kept entries, `gs` elsewhere.
pub fn closed_form_gstar(
    gs: &GramMatrix,
    gt: &GramMatrix,
    mask: &FilterMask,
    lambda_eff: f64,
) -> Result<GramMatrix> {
    check_same_dim(gs, gt)?;
    check_mask(gs, mask)?;
    if !(lambda_eff >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda_eff}")));
    }
    let (s, t) = (gs.entries(), gt.entries());
    let g = DMatrix::from_fn(gs.dim(), gs.dim(), |i, j| {
        if mask.get(i, j) {
            (s[(i, j)] + lambda_eff * t[(i, j)]) / (1.0 + lambda_eff)
        } else {
            s[(i, j)]
        }
    });
    Ok(GramMatrix(g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub transfer: f64,
    pub total: f64,
    pub effective_lambda: f64,
}

/// The objective evaluated at a candidate Gram matrix `g`.
pub fn objective_at_gram(
    g: &DMatrix<f64>,
    gs: &GramMatrix,
    gt: &GramMatrix,
    mask: &FilterMask,
    lambda_eff: f64,
) -> Result<LossBreakdown> {
    check_same_dim(gs, gt)?;
    check_mask(gs, mask)?;
    if g.shape() != gs.entries().shape() {
        return Err(Error::Shape(format!(
            "candidate Gram is {:?}, seed Gram is {:?}",
            g.shape(),
            gs.entries().shape()
        )));
    }
    let (s, t) = (gs.entries(), gt.entries());
    let c = gs.dim();
    let mut reconstruction = 0.0;
    let mut transfer = 0.0;
    for j in 0..c {
        for i in 0..c {
            let v = g[(i, j)];
            reconstruction += (v - s[(i, j)]).powi(2);
            if mask.get(i, j) {
                transfer += (v - t[(i, j)]).powi(2);
            }
        }
    }
    Ok(LossBreakdown {
        reconstruction,
        transfer,
        total: reconstruction + lambda_eff * transfer,
        effective_lambda: lambda_eff,
    })
}

/// The objective at the aligned seed matrix `xtilde` (c x d2).
pub fn fipp_loss(
    xtilde: &DMatrix<f64>,
    gs: &GramMatrix,
    gt: &GramMatrix,
    mask: &FilterMask,
    lambda_eff: f64,
) -> Result<LossBreakdown> {
    if xtilde.nrows() != gs.dim() {
        return Err(Error::Shape(format!(
            "aligned seed has {} rows, Gram matrix is {}x{}",
            xtilde.nrows(),
            gs.dim(),
            gs.dim()
        )));
    }
    objective_at_gram(gram(xtilde).entries(), gs, gt, mask, lambda_eff)
}

/// Fraction of zeros in each row of the mask.
pub fn filter_stats(mask: &FilterMask) -> Vec<f64> {
    let c = mask.dim();
    (0..c)
        .map(|i| (0..c).filter(|&j| !mask.get(i, j)).count() as f64 / c as f64)
        .collect()
}

/// Equal-width histogram; `edges` has one more entry than `counts`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Histogram of the off-diagonal entries of `g` over their `[min, max]`.
pub fn inner_product_histogram(g: &GramMatrix, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let m = g.entries();
    let c = g.dim();
    let off: Vec<f64> = (0..c)
        .flat_map(|j| (0..c).filter(move |&i| i != j).map(move |i| m[(i, j)]))
        .collect();
    let (lo, hi) = off
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if off.is_empty() { (0.0, 0.0) } else { (lo, hi) };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins)
        .map(|k| if k == bins { hi } else { lo + width * k as f64 })
        .collect();
    let mut counts = vec![0; bins];
    for v in off {
        let k = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    Ok(Histogram { edges, counts })
}
