//! The bank of pre-trained linear detectors and zero-shot composition.

use serde::{Deserialize, Serialize};

use crate::embedding::{normalize_token, similarity_vector, EmbeddingStore};
use crate::error::{Error, Result};

/// A pre-trained linear detector g_j(x) = w_j . x for one concept.
///
/// `original_norm` keeps the pre-normalization magnitude so ingestion with
/// normalization enabled stays reversible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDetector {
    pub concept: String,
    pub weights: Vec<f64>,
    pub original_norm: f64,
}

/// A set of pre-trained detectors sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorBank {
    dim: usize,
    normalized: bool,
    detectors: Vec<LinearDetector>,
}

/// Final-layer softmax parameters: rows a_j and biases b_j.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLayer {
    pub rows: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl DetectorBank {
    pub fn empty(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("bank dimension must be positive".into()));
        }
        Ok(DetectorBank {
            dim,
            normalized: true,
            detectors: Vec::new(),
        })
    }

    /// Build a bank from raw (concept, weights) pairs. With `normalize` on,
    /// weights are scaled to unit L2 norm and the original magnitude is
    /// recorded.
    pub fn new(dim: usize, raw: Vec<(String, Vec<f64>)>, normalize: bool) -> Result<Self> {
        let mut bank = DetectorBank::empty(dim)?;
        bank.normalized = normalize;
        for (concept, weights) in raw {
            bank.push(&concept, weights)?;
        }
        Ok(bank)
    }

    fn push(&mut self, concept: &str, mut weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite(format!("detector weights for {concept}")));
        }
        let concept = normalize_token(concept);
        if self.detectors.iter().any(|d| d.concept == concept) {
            return Err(Error::DuplicateToken(concept));
        }
        let original_norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if original_norm == 0.0 {
            return Err(Error::ZeroNorm(concept));
        }
        if self.normalized {
            for w in &mut weights {
                *w /= original_norm;
            }
        }
        self.detectors.push(LinearDetector {
            concept,
            weights,
            original_norm,
        });
        Ok(())
    }

    /// Extract detectors from a softmax classification layer. Detector j is
    /// the concatenation (a_j; b_j) scoring against lifted features (h; 1).
    /// The softmax exponentials are dropped; only the linear part is kept.
    pub fn from_softmax_layer(layer: &SoftmaxLayer, concepts: &[String], normalize: bool) -> Result<Self> {
        if layer.rows.len() != layer.biases.len() {
            return Err(Error::LengthMismatch(format!(
                "softmax layer has {} rows but {} biases",
                layer.rows.len(),
                layer.biases.len()
            )));
        }
        if concepts.len() != layer.rows.len() {
            return Err(Error::LengthMismatch(format!(
                "softmax layer has {} rows but {} concept tokens",
                layer.rows.len(),
                concepts.len()
            )));
        }
        let dh = layer.rows.first().map(|r| r.len()).unwrap_or(0);
        if layer.rows.is_empty() || dh == 0 {
            return Err(Error::InvalidArgument(
                "softmax layer must have at least one row with dh >= 1".into(),
            ));
        }
        let mut raw = Vec::with_capacity(concepts.len());
        for ((row, &bias), concept) in layer.rows.iter().zip(&layer.biases).zip(concepts) {
            if row.len() != dh {
                return Err(Error::DimensionMismatch {
                    expected: dh,
                    got: row.len(),
                });
            }
            let mut weights = row.clone();
            weights.push(bias);
            raw.push((concept.clone(), weights));
        }
        DetectorBank::new(dh + 1, raw, normalize)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn detectors(&self) -> &[LinearDetector] {
        &self.detectors
    }

    pub fn concepts(&self) -> Vec<String> {
        self.detectors.iter().map(|d| d.concept.clone()).collect()
    }

    /// Raw detector responses w_j . x, one per detector.
    pub fn responses(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self
            .detectors
            .iter()
            .map(|d| d.weights.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect())
    }
}

/// Append the constant 1 so a softmax row (a_j; b_j) scores h via a dot
/// product.
pub fn lift_feature(h: &[f64]) -> Vec<f64> {
    let mut lifted = Vec::with_capacity(h.len() + 1);
    lifted.extend_from_slice(h);
    lifted.push(1.0);
    lifted
}

/// A zero-shot detector: similarity-weighted combination over a bank.
#[derive(Debug, Clone)]
pub struct ZeroShotDetector<'a> {
    pub target: String,
    pub betas: Vec<f64>,
    pub bias: f64,
    pub bank: &'a DetectorBank,
}

impl ZeroShotDetector<'_> {
    /// sum_j beta_j (w_j . x) + bias
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let responses = self.bank.responses(x)?;
        Ok(self
            .betas
            .iter()
            .zip(&responses)
            .map(|(b, r)| b * r)
            .sum::<f64>()
            + self.bias)
    }
}

/// Zero all but the `k` largest values; ties broken toward lower index.
pub fn apply_top_k(values: &mut [f64], k: usize) {
    if k >= values.len() {
        return;
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    for &idx in &order[k..] {
        values[idx] = 0.0;
    }
}

/// Compose a zero-shot detector for `target` with beta_j = sim(d_j, target).
pub fn compose_zero_shot<'a>(
    target: &str,
    bank: &'a DetectorBank,
    store: &EmbeddingStore,
    top_k: Option<usize>,
    bias: f64,
) -> Result<ZeroShotDetector<'a>> {
    let concepts = bank.concepts();
    let mut betas = similarity_vector(target, &concepts, store)?;
    if let Some(k) = top_k {
        apply_top_k(&mut betas, k);
    }
    Ok(ZeroShotDetector {
        target: normalize_token(target),
        betas,
        bias,
        bank,
    })
}
