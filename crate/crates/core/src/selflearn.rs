//! Dictionary augmentation from inner-product coordinates relative to the
//! seed.
//!
//! Every source word is described by its inner products with the source
//! seed words, every target word by its inner products with the target seed
//! words. Both feature spaces are indexed by seed pairs, so they can be
//! compared directly without any alignment.

use std::collections::HashSet;

use log::warn;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::embio::{Embedding, SeedDictionary};
use crate::error::{Error, Result};
use crate::preprocess::normalize_rows;
use crate::retrieval::map_similarity_rows;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AugmentationConfig {
    pub n_pairs: usize,
    /// Skip candidates that already are seed pairs.
    pub exclude_seed: bool,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            n_pairs: 14_000,
            exclude_seed: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AddedPair {
    pub src: usize,
    pub tgt: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone)]
pub struct Augmentation {
    /// Seed pairs first, then the additions in order of similarity.
    pub dictionary: SeedDictionary,
    pub added: Vec<AddedPair>,
    /// Additions whose target was already taken by an earlier addition.
    pub collisions: usize,
}

fn features(full: &DMatrix<f64>, seed: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = full * seed.transpose();
    normalize_rows(&mut a);
    a
}

/// Best target (lower index on ties) and its cosine for every source word,
/// sorted by cosine descending, then source index, then target index.
pub fn candidate_pairs(full_src: &Embedding, full_tgt: &Embedding, seed: &SeedDictionary) -> Vec<AddedPair> {
    let (xs, xt) = seed.seed_rows(full_src, full_tgt);
    let a_s = features(full_src.matrix(), &xs);
    let a_t = features(full_tgt.matrix(), &xt);
    let mut pairs = map_similarity_rows(&a_s, &a_t, |src, row| {
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        AddedPair {
            src,
            tgt: best,
            similarity: row[best],
        }
    });
    pairs.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.src.cmp(&b.src))
            .then(a.tgt.cmp(&b.tgt))
    });
    pairs
}

/// Adds the `cfg.n_pairs` most similar induced pairs to `seed`.
pub fn augment_dictionary(
    full_src: &Embedding,
    full_tgt: &Embedding,
    seed: &SeedDictionary,
    cfg: &AugmentationConfig,
) -> Result<Augmentation> {
    if full_tgt.is_empty() {
        return Err(Error::InvalidEmbedding("target embedding is empty".into()));
    }
    if cfg.n_pairs == 0 {
        return Ok(Augmentation {
            dictionary: seed.clone(),
            added: Vec::new(),
            collisions: 0,
        });
    }
    let seed_set: HashSet<(usize, usize)> = seed.pairs().iter().copied().collect();
    let mut added = Vec::with_capacity(cfg.n_pairs);
    for p in candidate_pairs(full_src, full_tgt, seed) {
        if added.len() == cfg.n_pairs {
            break;
        }
        if cfg.exclude_seed && seed_set.contains(&(p.src, p.tgt)) {
            continue;
        }
        added.push(p);
    }
    if added.len() < cfg.n_pairs {
        warn!("requested {} new pairs, only {} available", cfg.n_pairs, added.len());
    }

    let mut taken = HashSet::new();
    let collisions = added.iter().filter(|p| !taken.insert(p.tgt)).count();
    let mut pairs = seed.pairs().to_vec();
    pairs.extend(added.iter().map(|p| (p.src, p.tgt)));
    let dictionary = SeedDictionary::new(pairs, full_src.len(), full_tgt.len())?;
    Ok(Augmentation {
        dictionary,
        added,
        collisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;

    fn emb(m: DMatrix<f64>, prefix: &str) -> Embedding {
        let vocab = (0..m.nrows()).map(|i| format!("{prefix}{i}")).collect();
        Embedding::new(vocab, m).unwrap()
    }

    #[test]
    fn identical_spaces_pair_words_with_themselves() {
        let mut m = gaussian_matrix(40, 8, 1);
        normalize_rows(&mut m);
        let (s, t) = (emb(m.clone(), "s"), emb(m, "t"));
        let seed = SeedDictionary::new((0..10).map(|i| (i, i)).collect(), 40, 40).unwrap();
        let cfg = AugmentationConfig {
            n_pairs: 5,
            exclude_seed: true,
        };
        let out = augment_dictionary(&s, &t, &seed, &cfg).unwrap();
        assert_eq!(out.added.len(), 5);
        for p in &out.added {
            assert_eq!(p.src, p.tgt);
            assert!(p.src >= 10);
            assert!((p.similarity - 1.0).abs() < 1e-12);
        }
        assert_eq!(&out.dictionary.pairs()[..10], seed.pairs());
        assert_eq!(out.dictionary.len(), 15);
    }

    #[test]
    fn zero_pairs_is_a_no_op() {
        let s = emb(gaussian_matrix(10, 3, 2), "s");
        let t = emb(gaussian_matrix(12, 3, 3), "t");
        let seed = SeedDictionary::new(vec![(0, 0), (1, 1), (2, 2)], 10, 12).unwrap();
        let cfg = AugmentationConfig {
            n_pairs: 0,
            exclude_seed: true,
        };
        let out = augment_dictionary(&s, &t, &seed, &cfg).unwrap();
        assert_eq!(out.dictionary, seed);
        assert!(out.added.is_empty());
    }

    #[test]
    fn asking_for_too_many_takes_all() {
        let s = emb(gaussian_matrix(8, 3, 4), "s");
        let t = emb(gaussian_matrix(9, 3, 5), "t");
        let seed = SeedDictionary::new(vec![(0, 0), (1, 1), (2, 2)], 8, 9).unwrap();
        let cfg = AugmentationConfig {
            n_pairs: 100,
            exclude_seed: false,
        };
        let out = augment_dictionary(&s, &t, &seed, &cfg).unwrap();
        assert_eq!(out.added.len(), 8);
        assert!(out.dictionary.len() <= 3 + 8);
        let sims: Vec<f64> = out.added.iter().map(|p| p.similarity).collect();
        assert!(sims.windows(2).all(|w| w[0] >= w[1]));
    }
}
