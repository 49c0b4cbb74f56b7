//! Pseudo training samples: signed, similarity-scaled copies of the bank's
//! normal vectors, paired so each detector contributes a negative then a
//! positive sample.

use serde::{Deserialize, Serialize};

use crate::detector_bank::DetectorBank;
use crate::embedding::{similarity_vector, EmbeddingStore};
use crate::error::{Error, Result};

/// Detectors whose scaled similarity falls below this are dropped: a zero
/// vector carrying both labels is degenerate for a margin trainer.
pub const PSEUDO_DROP_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: i8,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: i8) -> Result<Self> {
        if label != 1 && label != -1 {
            return Err(Error::InvalidArgument(format!("label must be +1 or -1, got {label}")));
        }
        if features.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite("sample features".into()));
        }
        Ok(LabeledSample { features, label })
    }

    pub fn y(&self) -> f64 {
        self.label as f64
    }
}

/// The generated set X_P, with the originating detector index per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSampleSet {
    pub samples: Vec<LabeledSample>,
    pub lambda: f64,
    pub source_index: Vec<usize>,
}

impl PseudoSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Generate pseudo samples from precomputed similarity weights (one per bank
/// detector). Each retained detector j yields the pair
/// (-lambda sim_j w_j, -1), (+lambda sim_j w_j, +1).
pub fn generate_pseudo_from_sims(
    bank: &DetectorBank,
    sims: &[f64],
    lambda: f64,
) -> Result<PseudoSampleSet> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if sims.len() != bank.len() {
        return Err(Error::LengthMismatch(format!(
            "{} similarities for a bank of {}",
            sims.len(),
            bank.len()
        )));
    }
    let mut samples = Vec::new();
    let mut source_index = Vec::new();
    for (j, (detector, &sim)) in bank.detectors().iter().zip(sims).enumerate() {
        let scale = lambda * sim;
        if scale.abs() < PSEUDO_DROP_THRESHOLD {
            continue;
        }
        let positive: Vec<f64> = detector.weights.iter().map(|w| scale * w).collect();
        let negative: Vec<f64> = positive.iter().map(|v| -v).collect();
        samples.push(LabeledSample { features: negative, label: -1 });
        samples.push(LabeledSample { features: positive, label: 1 });
        source_index.push(j);
        source_index.push(j);
    }
    Ok(PseudoSampleSet { samples, lambda, source_index })
}

/// Generate the pseudo set for `target` using sim(d_j, target) weights.
/// An empty bank yields the empty set.
pub fn generate_pseudo(
    bank: &DetectorBank,
    target: &str,
    store: &EmbeddingStore,
    lambda: f64,
) -> Result<PseudoSampleSet> {
    let sims = similarity_vector(target, &bank.concepts(), store)?;
    generate_pseudo_from_sims(bank, &sims, lambda)
}

/// The +1-labeled half of a pseudo set, order preserved.
pub fn positive_only(set: &PseudoSampleSet) -> Vec<LabeledSample> {
    set.samples.iter().filter(|s| s.label == 1).cloned().collect()
}
