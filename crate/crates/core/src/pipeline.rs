//! End-to-end alignment: preprocess, optionally augment the seed, solve for
//! the aligned seed, rotate it onto the target seed and project the whole
//! source vocabulary.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::align::{
    least_squares_map, orthogonal_deviation, orthonormal_linear_map, procrustes, residual_weights,
    residual_weights_literal, weighted_procrustes, ResidualForm,
};
use crate::embio::{Embedding, SeedDictionary};
use crate::error::{Error, Result};
use crate::preprocess::{preprocess_pair, PreprocessMode};
use crate::selflearn::{augment_dictionary, Augmentation, AugmentationConfig};
use crate::solver::{secs, solve, FippConfig, FippSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Fipp,
    /// Orthogonal map fitted directly on the seed; needs `d1 = d2`.
    Procrustes,
    /// Row-orthonormal `d1 x d2` map fitted on the seed; needs `d1 <= d2`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationMode {
    #[default]
    Weighted,
    Plain,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlignConfig {
    pub method: Method,
    pub preprocess: PreprocessMode,
    pub fipp: FippConfig,
    pub rotation: RotationMode,
    pub weight_floor: f64,
    pub residual: ResidualForm,
    pub self_learning: Option<AugmentationConfig>,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            method: Method::Fipp,
            preprocess: PreprocessMode::default(),
            fipp: FippConfig::default(),
            rotation: RotationMode::Weighted,
            weight_floor: 1e-6,
            residual: ResidualForm::Transfer,
            self_learning: None,
        }
    }
}

/// Wall-clock time per stage, excluding file I/O.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StageTimings {
    #[serde(with = "secs")]
    pub preprocess: Duration,
    #[serde(with = "secs")]
    pub self_learning: Duration,
    #[serde(with = "secs")]
    pub gram: Duration,
    #[serde(with = "secs")]
    pub gstar: Duration,
    #[serde(with = "secs")]
    pub factorization: Duration,
    #[serde(with = "secs")]
    pub rotation: Duration,
    #[serde(with = "secs")]
    pub projection: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.preprocess
            + self.self_learning
            + self.gram
            + self.gstar
            + self.factorization
            + self.rotation
            + self.projection
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// `c x d2` aligned seed before rotation.
    pub seed_aligned: DMatrix<f64>,
    /// `d2 x d2` orthogonal rotation applied after projection.
    pub rotation: DMatrix<f64>,
    /// Per-pair rotation weights, largest 1.
    pub weights: DVector<f64>,
    /// Source vocabulary in the target space.
    pub aligned_src: Embedding,
    /// Target embedding after preprocessing.
    pub tgt: Embedding,
    /// Dictionary the alignment was fitted on (after any augmentation).
    pub dictionary: SeedDictionary,
    pub augmentation: Option<Augmentation>,
    pub fipp: Option<FippSolution>,
    /// Defined when `d1 = d2`.
    pub ortho_deviation: Option<f64>,
    /// `d1 x d2` map of the linear baseline.
    pub linear_map: Option<DMatrix<f64>>,
    pub projection_condition: Option<f64>,
    pub projection_rank: Option<usize>,
    pub timings: StageTimings,
}

fn rotation_weights(
    cfg: &AlignConfig,
    y: &DMatrix<f64>,
    xs: &DMatrix<f64>,
    xt: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    match (cfg.rotation, cfg.residual) {
        (RotationMode::Weighted, ResidualForm::Transfer) => residual_weights(y, xt, cfg.weight_floor),
        (RotationMode::Weighted, ResidualForm::Literal) => residual_weights_literal(y, xs, xt, cfg.weight_floor),
        _ => Ok(DVector::from_element(y.nrows(), 1.0)),
    }
}

pub fn align(src: &Embedding, tgt: &Embedding, dict: &SeedDictionary, cfg: &AlignConfig) -> Result<AlignmentResult> {
    let mut timings = StageTimings::default();
    let (d1, d2) = (src.dim(), tgt.dim());
    if !(cfg.weight_floor > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "weight floor must be positive, got {}",
            cfg.weight_floor
        )));
    }
    match cfg.method {
        Method::Procrustes if d1 != d2 => {
            return Err(Error::InvalidArgument(format!(
                "procrustes needs equal dimensions, got {d1} and {d2}; use the linear baseline"
            )))
        }
        Method::Linear if d1 > d2 => {
            return Err(Error::InvalidArgument(format!(
                "linear baseline needs d1 <= d2, got {d1} > {d2}"
            )))
        }
        _ => {}
    }

    let t = Instant::now();
    let (src, tgt) = preprocess_pair(src, tgt, cfg.preprocess)?;
    timings.preprocess = t.elapsed();

    let t = Instant::now();
    let augmentation = match cfg.self_learning {
        Some(sl) if sl.n_pairs > 0 => Some(augment_dictionary(&src, &tgt, dict, &sl)?),
        _ => None,
    };
    let dictionary = augmentation.as_ref().map_or_else(|| dict.clone(), |a| a.dictionary.clone());
    timings.self_learning = t.elapsed();

    let (xs, xt) = dictionary.seed_rows(&src, &tgt);
    let unit = DVector::from_element(xs.nrows(), 1.0);
    let identity = DMatrix::identity(d2, d2);

    let mut result = match cfg.method {
        Method::Fipp => {
            let sol = solve(&xs, &xt, &cfg.fipp)?;
            timings.gram = sol.timings.gram;
            timings.gstar = sol.timings.gstar;
            timings.factorization = sol.timings.factorization;
            let y = sol.aligned.clone();

            let t = Instant::now();
            let weights = rotation_weights(cfg, &y, &xs, &xt)?;
            let rotation = match cfg.rotation {
                RotationMode::None => identity,
                _ => weighted_procrustes(&y, &xt, &weights)?,
            };
            timings.rotation = t.elapsed();

            let t = Instant::now();
            let proj = least_squares_map(&y, &xs)?;
            let full = src.matrix() * (&proj.map * &rotation);
            timings.projection = t.elapsed();

            let ortho_deviation = if d1 == d2 { Some(orthogonal_deviation(&y, &xs)?) } else { None };
            PartialResult {
                seed_aligned: y,
                rotation,
                weights,
                full,
                fipp: Some(sol),
                ortho_deviation,
                linear_map: None,
                projection: Some((proj.condition, proj.rank)),
            }
        }
        Method::Procrustes => {
            let t = Instant::now();
            let rotation = procrustes(&xs, &xt)?;
            timings.rotation = t.elapsed();
            let t = Instant::now();
            let full = src.matrix() * &rotation;
            timings.projection = t.elapsed();
            PartialResult {
                seed_aligned: xs.clone(),
                rotation,
                weights: unit,
                full,
                fipp: None,
                ortho_deviation: Some(0.0),
                linear_map: None,
                projection: None,
            }
        }
        Method::Linear => {
            let t = Instant::now();
            let map = orthonormal_linear_map(&xs, &xt)?;
            timings.rotation = t.elapsed();
            let t = Instant::now();
            let full = src.matrix() * &map;
            timings.projection = t.elapsed();
            PartialResult {
                seed_aligned: &xs * &map,
                rotation: identity,
                weights: unit,
                full,
                fipp: None,
                ortho_deviation: None,
                linear_map: Some(map),
                projection: None,
            }
        }
    };

    let aligned_src = src.with_matrix(std::mem::replace(&mut result.full, DMatrix::zeros(0, 0)))?;
    Ok(AlignmentResult {
        seed_aligned: result.seed_aligned,
        rotation: result.rotation,
        weights: result.weights,
        aligned_src,
        tgt,
        dictionary,
        augmentation,
        fipp: result.fipp,
        ortho_deviation: result.ortho_deviation,
        linear_map: result.linear_map,
        projection_condition: result.projection.map(|p| p.0),
        projection_rank: result.projection.map(|p| p.1),
        timings,
    })
}

struct PartialResult {
    seed_aligned: DMatrix<f64>,
    rotation: DMatrix<f64>,
    weights: DVector<f64>,
    full: DMatrix<f64>,
    fipp: Option<FippSolution>,
    ortho_deviation: Option<f64>,
    linear_map: Option<DMatrix<f64>>,
    projection: Option<(f64, usize)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{split_identity_pairs, synthetic_pair};

    fn fixture(d1: usize, d2: usize) -> (Embedding, Embedding, SeedDictionary) {
        let p = synthetic_pair(120, d1, d2, 0.0, 7).unwrap();
        let (train, _) = split_identity_pairs(120, 40, 0, 8).unwrap();
        let dict = SeedDictionary::new(train, 120, 120).unwrap();
        (p.src, p.tgt, dict)
    }

    #[test]
    fn fipp_output_shapes_and_rotation() {
        let (s, t, d) = fixture(8, 8);
        let r = align(&s, &t, &d, &AlignConfig::default()).unwrap();
        assert_eq!(r.aligned_src.matrix().shape(), (120, 8));
        assert_eq!(r.seed_aligned.shape(), (40, 8));
        let rtr = r.rotation.transpose() * &r.rotation;
        assert!((rtr - DMatrix::identity(8, 8)).norm() < 1e-8);
        assert!(r.weights.iter().all(|&w| w > 0.0 && w <= 1.0));
        assert!(r.fipp.is_some() && r.ortho_deviation.is_some());
    }

    #[test]
    fn baselines() {
        let (s, t, d) = fixture(8, 8);
        let cfg = AlignConfig {
            method: Method::Procrustes,
            ..Default::default()
        };
        let r = align(&s, &t, &d, &cfg).unwrap();
        assert!(r.fipp.is_none());

        let (s, t, d) = fixture(5, 8);
        assert!(align(&s, &t, &d, &cfg).is_err());
        let cfg = AlignConfig {
            method: Method::Linear,
            ..Default::default()
        };
        let r = align(&s, &t, &d, &cfg).unwrap();
        assert_eq!(r.linear_map.as_ref().unwrap().shape(), (5, 8));
        assert_eq!(r.aligned_src.dim(), 8);
    }

    #[test]
    fn fipp_handles_mismatched_dimensions() {
        let (s, t, d) = fixture(5, 8);
        let r = align(&s, &t, &d, &AlignConfig::default()).unwrap();
        assert_eq!(r.aligned_src.dim(), 8);
        assert!(r.ortho_deviation.is_none());
    }

    #[test]
    fn self_learning_grows_the_dictionary() {
        let (s, t, d) = fixture(8, 8);
        let cfg = AlignConfig {
            self_learning: Some(AugmentationConfig {
                n_pairs: 20,
                exclude_seed: true,
            }),
            ..Default::default()
        };
        let r = align(&s, &t, &d, &cfg).unwrap();
        assert_eq!(r.dictionary.len(), 60);
        assert_eq!(r.augmentation.unwrap().added.len(), 20);
    }
}
