//! Gradient descent on the FIPP objective directly over the aligned seed
//! matrix. Full-batch: the objective is a fixed finite sum over Gram entries.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gram::{gram, objective_at_gram, FilterMask, GramMatrix};
use crate::linalg::gaussian_matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Seeds the random start when no initial matrix is supplied.
    pub seed: u64,
}

impl Default for SgdOptions {
    fn default() -> Self {
        SgdOptions {
            epochs: 5000,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SgdOutcome {
    /// Lowest-loss iterate seen.
    pub solution: DMatrix<f64>,
    pub best_loss: f64,
    /// Loss before each update, then after the last one (`epochs + 1` values).
    pub loss_trace: Vec<f64>,
}

/// Source seed rows zero-padded or truncated to `d2` columns, the usual
/// starting point.
pub fn initial_from_source(xs: &DMatrix<f64>, d2: usize) -> DMatrix<f64> {
    DMatrix::from_fn(xs.nrows(), d2, |i, j| if j < xs.ncols() { xs[(i, j)] } else { 0.0 })
}

/// Minimizes the objective over `c x d2` matrices starting from `init`, or
/// from a scaled Gaussian matrix drawn with `opts.seed` when `init` is
/// `None`.
pub fn sgd_solve(
    init: Option<&DMatrix<f64>>,
    d2: usize,
    gs: &GramMatrix,
    gt: &GramMatrix,
    mask: &FilterMask,
    lambda_eff: f64,
    opts: SgdOptions,
) -> Result<SgdOutcome> {
    if opts.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be at least 1".into()));
    }
    if !(opts.learning_rate > 0.0) || !opts.learning_rate.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            opts.learning_rate
        )));
    }
    let c = gs.dim();
    let mut y = match init {
        Some(m) => {
            if m.shape() != (c, d2) {
                return Err(Error::Shape(format!(
                    "initial matrix is {:?}, expected ({c}, {d2})",
                    m.shape()
                )));
            }
            m.clone()
        }
        None => gaussian_matrix(c, d2, opts.seed) / (d2 as f64).sqrt(),
    };

    let (s, t) = (gs.entries(), gt.entries());
    let mut trace = Vec::with_capacity(opts.epochs + 1);
    let mut best = (f64::INFINITY, y.clone());

    for epoch in 0..=opts.epochs {
        let g = gram(&y).into_inner();
        let loss = objective_at_gram(&g, gs, gt, mask, lambda_eff)?.total;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        trace.push(loss);
        if loss < best.0 {
            best = (loss, y.clone());
        }
        if epoch == opts.epochs {
            break;
        }
        let r = DMatrix::from_fn(c, c, |i, j| {
            let v = g[(i, j)];
            let mut r = v - s[(i, j)];
            if mask.get(i, j) {
                r += lambda_eff * (v - t[(i, j)]);
            }
            r
        });
        let grad = r * &y * 4.0;
        y -= grad * opts.learning_rate;
    }

    Ok(SgdOutcome {
        solution: best.1,
        best_loss: best.0,
        loss_trace: trace,
    })
}
