//! Making two embeddings comparable at the level of inner products.
//!
//! Isotropic preprocessing normalizes rows to unit length, centers columns
//! and projects out the top principal component(s) of each embedding on its
//! own. Iterative normalization (alternating unit length and centering) is
//! available as an alternative.

use log::warn;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::embio::Embedding;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen_desc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PreprocessMode {
    None,
    Isotropic { components_removed: usize },
    IterativeNorm { iterations: usize },
}

impl Default for PreprocessMode {
    fn default() -> Self {
        PreprocessMode::Isotropic {
            components_removed: 1,
        }
    }
}

/// Scales every nonzero row to unit length in place and returns how many
/// rows were zero (and left alone).
pub fn normalize_rows(m: &mut DMatrix<f64>) -> usize {
    let norms: Vec<f64> = m.row_iter().map(|r| r.norm()).collect();
    let mut zero = 0;
    for (i, &norm) in norms.iter().enumerate() {
        if norm > 0.0 {
            m.row_mut(i).unscale_mut(norm);
        } else {
            zero += 1;
        }
    }
    zero
}

/// Subtracts each column's mean in place.
pub fn center_matrix_columns(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return;
    }
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
}

pub fn zero_rows(m: &DMatrix<f64>) -> usize {
    m.row_iter().filter(|r| r.iter().all(|&v| v == 0.0)).count()
}

/// Top-`k` right singular vectors of `x` as the columns of a `d x k`
/// matrix, taken from the eigenvectors of `x^T x`.
pub fn top_right_singular_vectors(x: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let cov = x.transpose() * x;
    let eig = symmetric_eigen_desc(&cov);
    eig.vectors.columns(0, k).into_owned()
}

pub fn unit_normalize(emb: &Embedding) -> Result<Embedding> {
    let mut m = emb.matrix().clone();
    let zero = normalize_rows(&mut m);
    if zero > 0 {
        warn!("{zero} zero rows left unnormalized");
    }
    emb.with_matrix(m)
}

pub fn center_columns(emb: &Embedding) -> Result<Embedding> {
    let mut m = emb.matrix().clone();
    center_matrix_columns(&mut m);
    emb.with_matrix(m)
}

/// Projects the top-`k` principal directions out of a (centered) matrix.
pub fn remove_matrix_components(x: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let d = x.ncols();
    if k >= d {
        return Err(Error::InvalidArgument(format!(
            "cannot remove {k} components from a {d}-dimensional embedding"
        )));
    }
    if k == 0 {
        return Ok(x.clone());
    }
    let u = top_right_singular_vectors(x, k);
    let proj = x * &u;
    Ok(x - proj * u.transpose())
}

pub fn remove_top_components(emb: &Embedding, k: usize) -> Result<Embedding> {
    emb.with_matrix(remove_matrix_components(emb.matrix(), k)?)
}

/// Alternates unit normalization and column centering `iterations` times.
pub fn iterative_normalize(emb: &Embedding, iterations: usize) -> Result<Embedding> {
    if iterations == 0 {
        return Err(Error::InvalidArgument(
            "iterative normalization needs at least one iteration".into(),
        ));
    }
    let mut m = emb.matrix().clone();
    for _ in 0..iterations {
        normalize_rows(&mut m);
        center_matrix_columns(&mut m);
    }
    let collapsed = zero_rows(&m);
    if collapsed > 0 {
        warn!("iterative normalization collapsed {collapsed} of {} rows to zero", m.nrows());
    }
    emb.with_matrix(m)
}

fn preprocess_one(emb: &Embedding, mode: PreprocessMode) -> Result<Embedding> {
    match mode {
        PreprocessMode::None => Ok(emb.clone()),
        PreprocessMode::Isotropic { components_removed } => {
            let mut m = emb.matrix().clone();
            let zero = normalize_rows(&mut m);
            if zero > 0 {
                warn!("{zero} zero rows left unnormalized");
            }
            center_matrix_columns(&mut m);
            emb.with_matrix(remove_matrix_components(&m, components_removed)?)
        }
        PreprocessMode::IterativeNorm { iterations } => iterative_normalize(emb, iterations),
    }
}

/// Applies `mode` to source and target independently.
pub fn preprocess_pair(
    src: &Embedding,
    tgt: &Embedding,
    mode: PreprocessMode,
) -> Result<(Embedding, Embedding)> {
    Ok((preprocess_one(src, mode)?, preprocess_one(tgt, mode)?))
}
