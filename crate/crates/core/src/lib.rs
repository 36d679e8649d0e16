//! Filtered Inner Product Projection (FIPP) for aligning word embeddings of
//! possibly different dimensionality, with bilingual lexicon induction
//! evaluation.
//!
//! The aligned seed is the best rank-`d2` PSD fit to a blend of the source
//! and target seed Gram matrices, where only inner products that already
//! agree to within epsilon are pulled towards the target. The rest of the
//! vocabulary follows by least squares, and a weighted orthogonal rotation
//! puts the result in the target basis.

pub mod align;
pub mod cli;
pub mod embio;
pub mod error;
pub mod factor;
pub mod gram;
pub mod linalg;
pub mod pipeline;
pub mod preprocess;
pub mod retrieval;
pub mod selflearn;
pub mod sgd;
pub mod solver;
pub mod synthetic;

pub use embio::{Embedding, SeedDictionary};
pub use error::{Error, Result};
pub use pipeline::{align, AlignConfig, AlignmentResult, Method, RotationMode};
pub use solver::{solve, FippConfig, Solver};
