//! Translation retrieval (nearest neighbour and CSLS) and BLI scoring.
//!
//! Similarities are cosines. Rankings are descending with ties broken by the
//! lower candidate index, so results do not depend on thread count.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::preprocess::normalize_rows;

const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Retrieval {
    #[default]
    Nn,
    Csls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RetrievalConfig {
    pub method: Retrieval,
    pub csls_k: usize,
    /// Length of each returned ranking; gold answers beyond it score 0.
    pub topk: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            method: Retrieval::Nn,
            csls_k: 10,
            topk: 10,
        }
    }
}

fn unit_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = m.clone();
    normalize_rows(&mut m);
    m
}

fn check_dims(queries: &DMatrix<f64>, candidates: &DMatrix<f64>) -> Result<()> {
    if queries.ncols() != candidates.ncols() {
        return Err(Error::Shape(format!(
            "queries have dimension {}, candidates {}",
            queries.ncols(),
            candidates.ncols()
        )));
    }
    if candidates.nrows() == 0 {
        return Err(Error::InvalidArgument("no candidates to retrieve from".into()));
    }
    Ok(())
}

fn by_score(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Indices of the `k` best scores, best first.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = by_score(scores);
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, &cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(&cmp);
    idx
}

/// Mean of the `k` largest values.
fn top_k_mean(values: &[f64], k: usize) -> f64 {
    let top = top_k(values, k);
    top.iter().map(|&i| values[i]).sum::<f64>() / top.len() as f64
}

/// Applies `f` to every row of `a b^T`, `CHUNK` rows of `a` at a time.
pub(crate) fn map_similarity_rows<T: Send>(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f: impl Fn(usize, &[f64]) -> T + Sync,
) -> Vec<T> {
    let starts: Vec<usize> = (0..a.nrows()).step_by(CHUNK).collect();
    let bt = b.transpose();
    starts
        .into_par_iter()
        .flat_map_iter(|start| {
            let len = CHUNK.min(a.nrows() - start);
            // Transposed so that each similarity row is a contiguous slice.
            let sims = (a.rows(start, len) * &bt).transpose();
            let m = sims.nrows();
            (0..len)
                .map(|r| f(start + r, &sims.as_slice()[r * m..(r + 1) * m]))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Top-`k` candidates per query by cosine similarity. `k` is clamped to the
/// number of candidates.
pub fn nn_retrieve(queries: &DMatrix<f64>, candidates: &DMatrix<f64>, k: usize) -> Result<Vec<Vec<usize>>> {
    check_dims(queries, candidates)?;
    let (q, c) = (unit_rows(queries), unit_rows(candidates));
    Ok(map_similarity_rows(&q, &c, |_, row| top_k(row, k)))
}

/// Top-`topk` candidates per query by CSLS,
/// `2 cos(x, y) - r_C(x) - r_Q(y)`, where `r_C(x)` is the mean cosine of `x`
/// to its `neighborhood` nearest candidates and `r_Q(y)` that of `y` to its
/// nearest queries. The neighbourhood is clamped on each side to the number
/// of available points.
pub fn csls_retrieve(
    queries: &DMatrix<f64>,
    candidates: &DMatrix<f64>,
    neighborhood: usize,
    topk: usize,
) -> Result<Vec<Vec<usize>>> {
    check_dims(queries, candidates)?;
    if neighborhood == 0 {
        return Err(Error::InvalidArgument("CSLS neighbourhood must be at least 1".into()));
    }
    if queries.nrows() == 0 {
        return Ok(Vec::new());
    }
    let (q, c) = (unit_rows(queries), unit_rows(candidates));
    let kc = neighborhood.min(c.nrows());
    let kq = neighborhood.min(q.nrows());
    let r_q = map_similarity_rows(&c, &q, |_, row| top_k_mean(row, kq));
    Ok(map_similarity_rows(&q, &c, |_, row| {
        let r_c = top_k_mean(row, kc);
        let scores: Vec<f64> = row
            .iter()
            .zip(&r_q)
            .map(|(&cos, &ry)| 2.0 * cos - r_c - ry)
            .collect();
        top_k(&scores, topk)
    }))
}

pub fn retrieve(queries: &DMatrix<f64>, candidates: &DMatrix<f64>, cfg: &RetrievalConfig) -> Result<Vec<Vec<usize>>> {
    match cfg.method {
        Retrieval::Nn => nn_retrieve(queries, candidates, cfg.topk),
        Retrieval::Csls => csls_retrieve(queries, candidates, cfg.csls_k, cfg.topk),
    }
}

/// Groups `(source, target)` pairs into gold translation sets per source.
pub fn gold_sets(pairs: &[(usize, usize)]) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut gold: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(s, t) in pairs {
        gold.entry(s).or_default().insert(t);
    }
    gold
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub query: usize,
    /// 1-based rank of the best gold answer within the ranking.
    pub best_gold_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub map: f64,
    pub p_at_1: f64,
    pub p_at_5: f64,
    pub n_queries: usize,
    pub retrieval: Retrieval,
    pub csls_k: usize,
    pub topk: usize,
    pub per_query: Vec<QueryResult>,
}

/// Scores `rankings[i]` (the ranking for `queries[i]`) against `gold`.
/// MAP is the mean reciprocal rank of the best gold answer.
pub fn evaluate(
    queries: &[usize],
    rankings: &[Vec<usize>],
    gold: &BTreeMap<usize, BTreeSet<usize>>,
    cfg: &RetrievalConfig,
) -> Result<EvalReport> {
    if queries.len() != rankings.len() {
        return Err(Error::Shape(format!(
            "{} queries but {} rankings",
            queries.len(),
            rankings.len()
        )));
    }
    let mut per_query = Vec::with_capacity(queries.len());
    for (&query, ranking) in queries.iter().zip(rankings) {
        let answers = gold
            .get(&query)
            .filter(|g| !g.is_empty())
            .ok_or_else(|| Error::InvalidArgument(format!("query {query} has no gold translation")))?;
        let best_gold_rank = ranking.iter().position(|c| answers.contains(c)).map(|p| p + 1);
        per_query.push(QueryResult {
            query,
            best_gold_rank,
        });
    }
    let n = per_query.len();
    let frac = |pred: &dyn Fn(usize) -> bool| {
        if n == 0 {
            return 0.0;
        }
        per_query
            .iter()
            .filter(|r| r.best_gold_rank.is_some_and(pred))
            .count() as f64
            / n as f64
    };
    let map = if n == 0 {
        0.0
    } else {
        per_query
            .iter()
            .map(|r| r.best_gold_rank.map_or(0.0, |k| 1.0 / k as f64))
            .sum::<f64>()
            / n as f64
    };
    Ok(EvalReport {
        map,
        p_at_1: frac(&|k| k <= 1),
        p_at_5: frac(&|k| k <= 5),
        n_queries: n,
        retrieval: cfg.method,
        csls_k: cfg.csls_k,
        topk: cfg.topk,
        per_query,
    })
}
