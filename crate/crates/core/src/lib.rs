//! Few-shot adaptation for semantic concept detectors.
//!
//! A bank of pre-trained linear detectors is composed into zero-shot
//! detectors through word-embedding similarity, converted into pseudo
//! training samples, and a unified max-margin detector is trained on the
//! union of real and pseudo samples. With an empty bank this reduces exactly
//! to supervised training; with no real samples (and a small C) it reproduces
//! zero-shot rankings exactly.

pub mod adaptation;
pub mod detector_bank;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod kernel_svm;
pub mod pseudo_samples;
pub mod synth_bench;

pub use adaptation::{adapt, adapt_multiclass, fuse_scores, AdaptationConfig, FewShotDetector};
pub use detector_bank::{compose_zero_shot, lift_feature, DetectorBank, LinearDetector, SoftmaxLayer};
pub use embedding::{load_embeddings, similarity, similarity_vector, EmbeddingStore};
pub use error::{Error, Result};
pub use evaluation::{average_precision, mean_ap, top_k_accuracy, RankedResult};
pub use kernel_svm::{kernel_eval, solve_qp_oracle, train_svm, DualModel, KernelSpec, SolverConfig};
pub use pseudo_samples::{generate_pseudo, positive_only, LabeledSample, PseudoSampleSet};
pub use synth_bench::{generate_world, run_sweep, SweepReport, SyntheticWorldSpec};
