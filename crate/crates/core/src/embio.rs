//! Reading and writing embeddings and seed dictionaries.
//!
//! Embeddings use the word2vec text convention: a header line `n d`
//! followed by `n` lines of `token v1 ... vd`. Dictionaries hold one
//! `src tgt` pair per line, separated by a tab or a single space.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A vocabulary together with its `n x d` matrix of row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    vocab: Vec<String>,
    matrix: DMatrix<f64>,
    index: HashMap<String, usize>,
}

impl Embedding {
    /// Builds an embedding, checking that tokens are unique, that there is
    /// one row per token and that every entry is finite.
    pub fn new(vocab: Vec<String>, matrix: DMatrix<f64>) -> Result<Self> {
        if vocab.len() != matrix.nrows() {
            return Err(Error::InvalidEmbedding(format!(
                "{} tokens but {} matrix rows",
                vocab.len(),
                matrix.nrows()
            )));
        }
        if let Some(((i, j), v)) = matrix
            .iter()
            .enumerate()
            .map(|(k, v)| ((k % matrix.nrows(), k / matrix.nrows()), v))
            .find(|(_, v)| !v.is_finite())
        {
            return Err(Error::InvalidEmbedding(format!(
                "non-finite value {v} at row {i}, column {j}"
            )));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, token) in vocab.iter().enumerate() {
            if index.insert(token.clone(), i).is_some() {
                return Err(Error::InvalidEmbedding(format!("duplicate token {token:?}")));
            }
        }
        Ok(Embedding {
            vocab,
            matrix,
            index,
        })
    }

    /// Same vocabulary, new vectors. The row count must not change.
    pub fn with_matrix(&self, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != self.vocab.len() {
            return Err(Error::Shape(format!(
                "replacement matrix has {} rows, vocabulary has {}",
                matrix.nrows(),
                self.vocab.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding(
                "replacement matrix has non-finite entries".into(),
            ));
        }
        Ok(Embedding {
            vocab: self.vocab.clone(),
            matrix,
            index: self.index.clone(),
        })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Rows of the matrix at `indices`, in order.
    pub fn rows(&self, indices: &[usize]) -> DMatrix<f64> {
        select_rows(&self.matrix, indices)
    }
}

pub(crate) fn select_rows(m: &DMatrix<f64>, indices: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(indices.len(), m.ncols(), |i, j| m[(indices[i], j)])
}

/// Resolved translation pairs `(source index, target index)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedDictionary {
    pairs: Vec<(usize, usize)>,
    skipped: usize,
}

impl SeedDictionary {
    /// Deduplicates `pairs` (first occurrence wins) and checks every index
    /// against the vocabulary sizes `n_src` and `n_tgt`.
    pub fn new(pairs: Vec<(usize, usize)>, n_src: usize, n_tgt: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        let mut unique = Vec::with_capacity(pairs.len());
        for (s, t) in pairs {
            if s >= n_src || t >= n_tgt {
                return Err(Error::InvalidArgument(format!(
                    "pair ({s}, {t}) out of range for vocabularies of size {n_src} and {n_tgt}"
                )));
            }
            if seen.insert((s, t)) {
                unique.push((s, t));
            }
        }
        if unique.is_empty() {
            return Err(Error::InvalidArgument("seed dictionary is empty".into()));
        }
        Ok(SeedDictionary {
            pairs: unique,
            skipped: 0,
        })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Number of input lines dropped because a word was out of vocabulary.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn src_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn tgt_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.1).collect()
    }

    /// The `c x d1` and `c x d2` seed matrices `(X_s, X_t)`.
    pub fn seed_rows(&self, src: &Embedding, tgt: &Embedding) -> (DMatrix<f64>, DMatrix<f64>) {
        (src.rows(&self.src_indices()), tgt.rows(&self.tgt_indices()))
    }

    pub fn contains(&self, pair: (usize, usize)) -> bool {
        self.pairs.contains(&pair)
    }
}

/// Loads an embedding in word2vec text format, keeping at most `limit` rows.
pub fn load_embeddings(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Embedding> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), limit, &path.display().to_string())
}

/// Parses word2vec text from any reader. `source_name` only labels errors.
pub fn read_embeddings<R: BufRead>(
    reader: R,
    limit: Option<usize>,
    source_name: &str,
) -> Result<Embedding> {
    if limit == Some(0) {
        return Err(Error::InvalidArgument("row limit must be at least 1".into()));
    }
    let parse_err = |line: usize, msg: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        msg,
    };
    let mut lines = reader.lines();

    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(source_name, e))?,
        None => return Err(parse_err(1, "empty file, expected header \"n d\"".into())),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (n, d) = match fields.as_slice() {
        [n, d] => match (n.parse::<usize>(), d.parse::<usize>()) {
            (Ok(n), Ok(d)) if n > 0 && d > 0 => (n, d),
            _ => {
                return Err(parse_err(
                    1,
                    format!("malformed header {header:?}, expected two positive integers"),
                ))
            }
        },
        _ => {
            return Err(parse_err(
                1,
                format!("malformed header {header:?}, expected \"n d\""),
            ))
        }
    };

    let rows = limit.map_or(n, |l| l.min(n));
    let mut vocab = Vec::with_capacity(rows);
    let mut seen = HashSet::with_capacity(rows);
    // Row-major buffer, transposed into a DMatrix at the end.
    let mut data = Vec::with_capacity(rows * d);

    for (k, line) in lines.enumerate() {
        if vocab.len() == rows {
            break;
        }
        let lineno = k + 2;
        let line = line.map_err(|e| Error::io(source_name, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let (token, rest) = match line.split_once(' ') {
            Some((t, r)) if !t.is_empty() => (t, r),
            _ => return Err(parse_err(lineno, "expected a token followed by values".into())),
        };
        let before = data.len();
        for field in rest.split_whitespace() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(lineno, format!("cannot parse {field:?} as a number")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value {field:?}")));
            }
            data.push(v);
        }
        let arity = data.len() - before;
        if arity != d {
            return Err(parse_err(
                lineno,
                format!("token {token:?} has {arity} values, header declares {d}"),
            ));
        }
        if !seen.insert(token.to_string()) {
            return Err(parse_err(lineno, format!("duplicate token {token:?}")));
        }
        vocab.push(token.to_string());
    }

    if vocab.len() < rows {
        return Err(parse_err(
            vocab.len() + 2,
            format!("header declares {n} rows but the file ends after {}", vocab.len()),
        ));
    }
    let matrix = DMatrix::from_row_slice(rows, d, &data);
    Embedding::new(vocab, matrix)
}

fn format_value(v: f64) -> String {
    // Both forms print the shortest decimal that parses back to the same f64.
    let a = v.abs();
    if v == 0.0 || (1e-4..1e6).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes `emb` in the text format `load_embeddings` reads. Values round-trip
/// exactly.
pub fn save_embeddings(emb: &Embedding, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if emb.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "refusing to write an empty embedding to {}",
            path.display()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_embeddings(emb, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_embeddings<W: Write>(emb: &Embedding, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{} {}", emb.len(), emb.dim())?;
    let m = emb.matrix();
    let mut line = String::new();
    for (i, token) in emb.vocab().iter().enumerate() {
        line.clear();
        line.push_str(token);
        for j in 0..m.ncols() {
            line.push(' ');
            line.push_str(&format_value(m[(i, j)]));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Loads a dictionary and resolves it against both vocabularies. Pairs with
/// an out-of-vocabulary word are skipped and counted.
pub fn load_dictionary(
    path: impl AsRef<Path>,
    src: &Embedding,
    tgt: &Embedding,
) -> Result<SeedDictionary> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dictionary(BufReader::new(file), src, tgt, &path.display().to_string())
}

pub fn read_dictionary<R: BufRead>(
    reader: R,
    src: &Embedding,
    tgt: &Embedding,
    source_name: &str,
) -> Result<SeedDictionary> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    let mut skipped = 0;
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source_name, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let (s, t) = split_pair(line).ok_or_else(|| Error::Parse {
            source_name: source_name.to_string(),
            line: k + 1,
            msg: format!("expected \"src<TAB or space>tgt\", got {line:?}"),
        })?;
        match (src.lookup(s), tgt.lookup(t)) {
            (Some(i), Some(j)) => {
                if seen.insert((i, j)) {
                    pairs.push((i, j));
                }
            }
            _ => skipped += 1,
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDictionary {
            source_name: source_name.to_string(),
            skipped,
        });
    }
    Ok(SeedDictionary { pairs, skipped })
}

fn split_pair(line: &str) -> Option<(&str, &str)> {
    let mut fields = if line.contains('\t') {
        line.split('\t').map(str::trim).collect::<Vec<_>>()
    } else {
        line.split_whitespace().collect::<Vec<_>>()
    };
    fields.retain(|f| !f.is_empty());
    // Extra columns (e.g. a similarity score) are ignored.
    match fields.as_slice() {
        [s, t, ..] => Some((s, t)),
        _ => None,
    }
}

/// Writes `pairs` as tab-separated words, with an optional third column.
pub fn save_dictionary(
    pairs: &[(usize, usize)],
    scores: Option<&[f64]>,
    src: &Embedding,
    tgt: &Embedding,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(scores) = scores {
        if scores.len() != pairs.len() {
            return Err(Error::Shape(format!(
                "{} scores for {} pairs",
                scores.len(),
                pairs.len()
            )));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for (k, &(s, t)) in pairs.iter().enumerate() {
        match scores {
            Some(sc) => writeln!(w, "{}\t{}\t{}", src.vocab()[s], tgt.vocab()[t], sc[k]),
            None => writeln!(w, "{}\t{}", src.vocab()[s], tgt.vocab()[t]),
        }
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
