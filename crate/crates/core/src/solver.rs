//! Seed alignment: from seed rows `X_s`, `X_t` to the aligned seed matrix.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::{low_rank_psd_factor_with, EigenMethod};
use crate::gram::{
    closed_form_gstar, effective_lambda, filter_mask, fipp_loss, gram, FilterMask, GramMatrix,
    LossBreakdown,
};
use crate::sgd::{initial_from_source, sgd_solve, SgdOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Eigen,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FippConfig {
    pub epsilon: f64,
    pub lambda: f64,
    pub gamma_scaling: bool,
    pub solver: Solver,
    pub eigen_method: EigenMethod,
    pub sgd_epochs: usize,
    pub sgd_learning_rate: f64,
    pub rng_seed: u64,
}

impl Default for FippConfig {
    fn default() -> Self {
        FippConfig {
            epsilon: 0.05,
            lambda: 1.0,
            gamma_scaling: true,
            solver: Solver::Eigen,
            eigen_method: EigenMethod::Auto,
            sgd_epochs: 5000,
            sgd_learning_rate: 1e-3,
            rng_seed: 0,
        }
    }
}

impl FippConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.solver == Solver::Sgd && (self.sgd_epochs == 0 || !(self.sgd_learning_rate > 0.0)) {
            return Err(Error::InvalidArgument(
                "gradient descent needs epochs >= 1 and a positive learning rate".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveTimings {
    #[serde(with = "secs")]
    pub gram: Duration,
    #[serde(with = "secs")]
    pub gstar: Duration,
    #[serde(with = "secs")]
    pub factorization: Duration,
}

pub(crate) mod secs {
    use std::time::Duration;

    use serde::Serializer;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }
}

#[derive(Debug, Clone)]
pub struct FippSolution {
    /// `c x d2` aligned seed matrix.
    pub aligned: DMatrix<f64>,
    pub gs: GramMatrix,
    pub gt: GramMatrix,
    pub mask: FilterMask,
    pub lambda_eff: f64,
    pub losses: LossBreakdown,
    /// Leading eigenvalues of `G*` (eigen solver only).
    pub eigenvalues: Vec<f64>,
    pub eigen_method: Option<EigenMethod>,
    pub eigen_iterations: usize,
    /// Per-epoch loss (gradient descent only).
    pub loss_trace: Vec<f64>,
    pub timings: SolveTimings,
}

/// Runs the FIPP seed alignment of `xs` (c x d1) towards `xt` (c x d2).
pub fn solve(xs: &DMatrix<f64>, xt: &DMatrix<f64>, cfg: &FippConfig) -> Result<FippSolution> {
    cfg.validate()?;
    if xs.nrows() != xt.nrows() {
        return Err(Error::Shape(format!(
            "seed matrices have {} and {} rows",
            xs.nrows(),
            xt.nrows()
        )));
    }
    if xs.nrows() == 0 {
        return Err(Error::InvalidArgument("empty seed".into()));
    }
    let d2 = xt.ncols();
    let mut timings = SolveTimings::default();

    let t = Instant::now();
    let gs = gram(xs);
    let gt = gram(xt);
    timings.gram = t.elapsed();

    let t = Instant::now();
    let mask = filter_mask(&gs, &gt, cfg.epsilon)?;
    let lambda_eff = effective_lambda(cfg.lambda, &mask, cfg.gamma_scaling)?;
    let gstar = closed_form_gstar(&gs, &gt, &mask, lambda_eff)?;
    timings.gstar = t.elapsed();

    let t = Instant::now();
    let mut eigenvalues = Vec::new();
    let mut eigen_method = None;
    let mut eigen_iterations = 0;
    let mut loss_trace = Vec::new();
    let aligned = match cfg.solver {
        Solver::Eigen => {
            let f = low_rank_psd_factor_with(&gstar, d2, cfg.eigen_method)?;
            eigenvalues = f.eigenvalues;
            eigen_method = Some(f.method);
            eigen_iterations = f.iterations;
            f.factor
        }
        Solver::Sgd => {
            let init = initial_from_source(xs, d2);
            let opts = SgdOptions {
                epochs: cfg.sgd_epochs,
                learning_rate: cfg.sgd_learning_rate,
                seed: cfg.rng_seed,
            };
            let out = sgd_solve(Some(&init), d2, &gs, &gt, &mask, lambda_eff, opts)?;
            loss_trace = out.loss_trace;
            out.solution
        }
    };
    timings.factorization = t.elapsed();

    let losses = fipp_loss(&aligned, &gs, &gt, &mask, lambda_eff)?;
    Ok(FippSolution {
        aligned,
        gs,
        gt,
        mask,
        lambda_eff,
        losses,
        eigenvalues,
        eigen_method,
        eigen_iterations,
        loss_trace,
        timings,
    })
}
