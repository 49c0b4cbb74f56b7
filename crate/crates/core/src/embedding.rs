//! Concept word vectors and the cosine similarities used for zero-shot
//! composition.
//!
//! Vectors are stored exactly as read; L2 normalization happens inside
//! [`similarity`], never at ingestion.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// A single concept word vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptEmbedding {
    pub token: String,
    pub vector: Vec<f64>,
}

/// Immutable collection of concept embeddings with a fixed dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
}

/// Lowercase and join words with underscores so lookups are deterministic.
pub fn normalize_token(token: &str) -> String {
    token.trim().to_lowercase().replace(' ', "_")
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingStore {
            dim,
            entries: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding for {token}")));
        }
        let token = normalize_token(token);
        if self.entries.contains_key(&token) {
            return Err(Error::DuplicateToken(token));
        }
        self.entries.insert(token, vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(&normalize_token(token)).map(|v| v.as_slice())
    }

    /// Resolve a token to a vector. Multi-word names absent from the store
    /// fall back to the arithmetic mean of the constituent words' vectors;
    /// a missing constituent is an error.
    pub fn resolve(&self, token: &str) -> Result<Vec<f64>> {
        let token = normalize_token(token);
        if let Some(v) = self.entries.get(&token) {
            return Ok(v.clone());
        }
        let parts: Vec<&str> = token.split('_').filter(|p| !p.is_empty()).collect();
        if parts.len() < 2 {
            return Err(Error::UnknownToken(token));
        }
        let mut mean = vec![0.0; self.dim];
        for part in &parts {
            let v = self
                .entries
                .get(*part)
                .ok_or_else(|| Error::UnknownToken(token.clone()))?;
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        let n = parts.len() as f64;
        for m in &mut mean {
            *m /= n;
        }
        Ok(mean)
    }
}

/// Load the word2vec text format: a "<count> <dim>" header followed by one
/// "<token> v1 ... v_dim" line per entry.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let header = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            msg: "empty file".into(),
        })?
        .1
        .map_parse(1)?;
    let mut fields = header.split_whitespace();
    let count: usize = fields
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(malformed_header)?;
    let dim: usize = fields
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(malformed_header)?;
    if fields.next().is_some() || dim == 0 {
        return Err(malformed_header());
    }

    let mut store = EmbeddingStore::new(dim)?;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_parse(lineno)?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().ok_or_else(|| Error::Parse {
            line: lineno,
            msg: "missing token".into(),
        })?;
        let vector: Vec<f64> = fields
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("bad coordinate {s:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if vector.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: vector.len(),
            });
        }
        store.insert(token, vector)?;
    }
    if store.len() != count {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header declares {count} entries, found {}", store.len()),
        });
    }
    Ok(store)
}

fn malformed_header() -> Error {
    Error::Parse {
        line: 1,
        msg: "header must be \"<count> <dim>\"".into(),
    }
}

trait MapParse<T> {
    fn map_parse(self, line: usize) -> Result<T>;
}

impl<T> MapParse<T> for std::io::Result<T> {
    fn map_parse(self, line: usize) -> Result<T> {
        self.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity between the word vectors of two concepts.
pub fn similarity(a: &str, b: &str, store: &EmbeddingStore) -> Result<f64> {
    let va = store.resolve(a)?;
    let vb = store.resolve(b)?;
    let na = norm(&va);
    let nb = norm(&vb);
    if na == 0.0 {
        return Err(Error::ZeroNorm(normalize_token(a)));
    }
    if nb == 0.0 {
        return Err(Error::ZeroNorm(normalize_token(b)));
    }
    Ok(dot(&va, &vb) / (na * nb))
}

/// Similarities of each concept against a target, order preserved.
pub fn similarity_vector(target: &str, concepts: &[String], store: &EmbeddingStore) -> Result<Vec<f64>> {
    concepts
        .iter()
        .map(|c| similarity(c, target, store))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn store_from(entries: &[(&str, &[f64])]) -> EmbeddingStore {
        let dim = entries[0].1.len();
        let mut store = EmbeddingStore::new(dim).unwrap();
        for (token, v) in entries {
            store.insert(token, v.to_vec()).unwrap();
        }
        store
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_valid_file() {
        let f = write_tmp("2 3\ncar 1.0 0.5 -0.25\nboat 0 1 2\n");
        let store = load_embeddings(f.path()).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.dim(), 3);
        assert_eq!(store.get("car").unwrap(), &[1.0, 0.5, -0.25]);
    }

    #[test]
    fn load_dimension_mismatch() {
        let f = write_tmp("2 3\ncar 1.0 0.5 -0.25\nboat 0 1\n");
        assert!(matches!(
            load_embeddings(f.path()),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn load_duplicate_token() {
        let f = write_tmp("2 2\ncar 1 2\ncar 3 4\n");
        assert!(matches!(load_embeddings(f.path()), Err(Error::DuplicateToken(_))));
    }

    #[test]
    fn load_bad_header() {
        let f = write_tmp("banana\ncar 1 2\n");
        assert!(matches!(load_embeddings(f.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn load_count_mismatch() {
        let f = write_tmp("3 2\ncar 1 2\nboat 3 4\n");
        assert!(matches!(load_embeddings(f.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn load_non_finite() {
        let f = write_tmp("1 2\ncar inf 2\n");
        assert!(matches!(load_embeddings(f.path()), Err(Error::NonFinite(_))));
    }

    #[test]
    fn similarity_identity() {
        let store = store_from(&[("car", &[1.0, 2.0, 2.0])]);
        assert!((similarity("car", "car", &store).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_orthogonal() {
        let store = store_from(&[("a", &[1.0, 0.0, 0.0]), ("b", &[0.0, 1.0, 0.0])]);
        assert_eq!(similarity("a", "b", &store).unwrap(), 0.0);
    }

    #[test]
    fn similarity_derived_value() {
        // dot = 8, norms 3 and 3
        let store = store_from(&[("a", &[1.0, 2.0, 2.0]), ("b", &[2.0, 1.0, 2.0])]);
        assert!((similarity("a", "b", &store).unwrap() - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_zero_norm() {
        let store = store_from(&[("a", &[0.0, 0.0]), ("b", &[1.0, 0.0])]);
        assert!(matches!(similarity("a", "b", &store), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn similarity_unknown_token() {
        let store = store_from(&[("a", &[1.0, 0.0])]);
        assert!(matches!(similarity("a", "zzz", &store), Err(Error::UnknownToken(_))));
    }

    #[test]
    fn multiword_fallback_averages_constituents() {
        let store = store_from(&[("sitting", &[1.0, 0.0]), ("down", &[0.0, 1.0])]);
        assert_eq!(store.resolve("sitting_down").unwrap(), vec![0.5, 0.5]);
        assert_eq!(store.resolve("Sitting Down").unwrap(), vec![0.5, 0.5]);
        assert!(matches!(store.resolve("sitting_up"), Err(Error::UnknownToken(_))));
    }

    #[test]
    fn similarity_vector_basics() {
        let store = store_from(&[
            ("a", &[1.0, 0.0, 0.0]),
            ("b", &[0.0, 1.0, 0.0]),
            ("c", &[0.0, 0.0, 1.0]),
        ]);
        let concepts = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let v = similarity_vector("a", &concepts, &store).unwrap();
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
        assert_eq!(similarity_vector("a", &[], &store).unwrap(), Vec::<f64>::new());
        assert_eq!(
            similarity_vector("a", &["a".to_string()], &store).unwrap(),
            vec![1.0]
        );
    }

    proptest! {
        #[test]
        fn similarity_symmetric_and_bounded(
            va in proptest::collection::vec(-10.0f64..10.0, 4),
            vb in proptest::collection::vec(-10.0f64..10.0, 4),
        ) {
            prop_assume!(va.iter().any(|x| x.abs() > 1e-6));
            prop_assume!(vb.iter().any(|x| x.abs() > 1e-6));
            let store = store_from(&[("a", &va), ("b", &vb)]);
            let sab = similarity("a", "b", &store).unwrap();
            let sba = similarity("b", "a", &store).unwrap();
            prop_assert!((sab - sba).abs() < 1e-12);
            prop_assert!(sab.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn similarity_scale_invariant(
            va in proptest::collection::vec(-10.0f64..10.0, 4),
            vb in proptest::collection::vec(-10.0f64..10.0, 4),
        ) {
            prop_assume!(va.iter().any(|x| x.abs() > 1e-6));
            prop_assume!(vb.iter().any(|x| x.abs() > 1e-6));
            let scaled: Vec<f64> = va.iter().map(|x| x * 7.3).collect();
            let store = store_from(&[("a", &va), ("a7", &scaled), ("b", &vb)]);
            let s1 = similarity("a", "b", &store).unwrap();
            let s2 = similarity("a7", "b", &store).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-9);
        }
    }
}
