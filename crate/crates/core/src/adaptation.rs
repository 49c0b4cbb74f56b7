//! The few-shot adaptation pipeline: build U = X ∪ X_P, train a max-margin
//! detector on it, and reduce exactly to supervised learning (empty bank) or
//! zero-shot scoring (empty sample set, small-C regime).

use serde::{Deserialize, Serialize};

use crate::detector_bank::{apply_top_k, DetectorBank};
use crate::embedding::{normalize_token, similarity_vector, EmbeddingStore};
use crate::error::{Error, Result};
use crate::kernel_svm::{train_svm, DualModel, KernelSpec, SolverConfig};
use crate::pseudo_samples::{generate_pseudo_from_sims, positive_only, LabeledSample, PseudoSampleSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationConfig {
    /// Pseudo-sample scale. 1/2 makes training on pseudo samples alone
    /// recover the zero-shot detector exactly in the small-C regime.
    pub lambda: f64,
    pub solver: SolverConfig,
    pub kernel: KernelSpec,
    /// Keep only the top_k most similar detectors (by similarity value).
    pub top_k: Option<usize>,
    /// Clamp negative similarities to zero before generating pseudo samples.
    pub clamp_negative_sim: bool,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            lambda: 0.5,
            solver: SolverConfig::default(),
            kernel: KernelSpec::Linear,
            top_k: None,
            clamp_negative_sim: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotDetector {
    pub target: String,
    pub model: DualModel,
    pub n_real: usize,
    pub n_pseudo: usize,
    pub config: AdaptationConfig,
}

impl FewShotDetector {
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.model.score(x)
    }
}

/// Similarity weights for the bank, with clamping and top-k from the config
/// applied.
fn bank_sims(
    bank: &DetectorBank,
    target: &str,
    store: &EmbeddingStore,
    config: &AdaptationConfig,
) -> Result<Vec<f64>> {
    let mut sims = similarity_vector(target, &bank.concepts(), store)?;
    if config.clamp_negative_sim {
        for s in &mut sims {
            *s = s.max(0.0);
        }
    }
    if let Some(k) = config.top_k {
        apply_top_k(&mut sims, k);
    }
    Ok(sims)
}

/// The pseudo set `adapt` would train on for this target, with the config's
/// clamping and top-k applied.
pub fn pseudo_for(
    bank: &DetectorBank,
    target: &str,
    store: &EmbeddingStore,
    config: &AdaptationConfig,
) -> Result<PseudoSampleSet> {
    let sims = bank_sims(bank, target, store, config)?;
    generate_pseudo_from_sims(bank, &sims, config.lambda)
}

/// A C that forces every pseudo sample into the sub-unit-margin regime, so
/// training on pseudo samples alone reproduces zero-shot rankings exactly.
pub fn zeroshot_exact_c(pseudo: &PseudoSampleSet) -> f64 {
    let max_norm_sq = pseudo
        .samples
        .iter()
        .map(|s| s.features.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    if max_norm_sq > 0.0 {
        1e-4 / max_norm_sq
    } else {
        1e-4
    }
}

/// Train the few-shot detector on the union of real samples and the pseudo
/// samples generated from the bank.
pub fn adapt(
    x: &[LabeledSample],
    bank: &DetectorBank,
    target: &str,
    store: &EmbeddingStore,
    config: &AdaptationConfig,
) -> Result<FewShotDetector> {
    if x.is_empty() && bank.is_empty() {
        return Err(Error::NothingToLearn);
    }
    let pseudo = if bank.is_empty() {
        PseudoSampleSet {
            samples: Vec::new(),
            lambda: config.lambda,
            source_index: Vec::new(),
        }
    } else {
        pseudo_for(bank, target, store, config)?
    };
    let mut union: Vec<LabeledSample> = Vec::with_capacity(x.len() + pseudo.len());
    union.extend_from_slice(x);
    union.extend_from_slice(&pseudo.samples);
    let model = train_svm(&union, &config.solver, &config.kernel)?;
    Ok(FewShotDetector {
        target: normalize_token(target),
        model,
        n_real: x.len(),
        n_pseudo: pseudo.len(),
        config: config.clone(),
    })
}

/// Multi-class extension: one detector per class, positives are the class's
/// own features plus the positive half of its pseudo set, negatives are every
/// other class's features.
pub fn adapt_multiclass(
    x_by_class: &[Vec<Vec<f64>>],
    bank: &DetectorBank,
    class_tokens: &[String],
    store: &EmbeddingStore,
    config: &AdaptationConfig,
) -> Result<Vec<FewShotDetector>> {
    if x_by_class.len() < 2 {
        return Err(Error::InvalidArgument("multi-class adaptation needs at least 2 classes".into()));
    }
    if x_by_class.len() != class_tokens.len() {
        return Err(Error::LengthMismatch(format!(
            "{} classes vs {} tokens",
            x_by_class.len(),
            class_tokens.len()
        )));
    }
    let mut detectors = Vec::with_capacity(class_tokens.len());
    for (ci, token) in class_tokens.iter().enumerate() {
        let mut training: Vec<LabeledSample> = Vec::new();
        for features in &x_by_class[ci] {
            training.push(LabeledSample::new(features.clone(), 1)?);
        }
        let n_real = training.len();
        let mut n_pseudo = 0;
        if !bank.is_empty() {
            let pseudo = pseudo_for(bank, token, store, config)?;
            let positives = positive_only(&pseudo);
            n_pseudo = positives.len();
            training.extend(positives);
        }
        if training.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "class {token} has no positive samples and the bank contributes none"
            )));
        }
        for (cj, other) in x_by_class.iter().enumerate() {
            if cj == ci {
                continue;
            }
            for features in other {
                training.push(LabeledSample::new(features.clone(), -1)?);
            }
        }
        let model = train_svm(&training, &config.solver, &config.kernel)?;
        detectors.push(FewShotDetector {
            target: normalize_token(token),
            model,
            n_real,
            n_pseudo,
            config: config.clone(),
        });
    }
    Ok(detectors)
}

/// Argmax over per-class detector scores; ties go to the lowest class index.
pub fn predict_class(detectors: &[FewShotDetector], x: &[f64]) -> Result<usize> {
    if detectors.is_empty() {
        return Err(Error::InvalidArgument("no detectors".into()));
    }
    let mut best = 0usize;
    let mut best_score = detectors[0].score(x)?;
    for (i, d) in detectors.iter().enumerate().skip(1) {
        let s = d.score(x)?;
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    Ok(best)
}

/// Late fusion: z-normalize each score list (mean-center only when variance
/// is zero), then take the element-wise weighted mean. `normalize: false`
/// averages the raw scores.
pub fn fuse_scores(
    score_lists: &[Vec<f64>],
    weights: Option<&[f64]>,
    normalize: bool,
) -> Result<Vec<f64>> {
    if score_lists.is_empty() {
        return Err(Error::InvalidArgument("no score lists to fuse".into()));
    }
    let n = score_lists[0].len();
    if score_lists.iter().any(|l| l.len() != n) {
        return Err(Error::LengthMismatch("score lists differ in length".into()));
    }
    let uniform = vec![1.0; score_lists.len()];
    let weights = weights.unwrap_or(&uniform);
    if weights.len() != score_lists.len() {
        return Err(Error::LengthMismatch(format!(
            "{} weights for {} score lists",
            weights.len(),
            score_lists.len()
        )));
    }
    let weight_sum: f64 = weights.iter().sum();
    if weight_sum == 0.0 {
        return Err(Error::InvalidArgument("fusion weights sum to zero".into()));
    }

    let mut fused = vec![0.0; n];
    for (list, &w) in score_lists.iter().zip(weights) {
        let prepared: Vec<f64> = if normalize && n > 0 {
            let mean = list.iter().sum::<f64>() / n as f64;
            let var = list.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            if std > 0.0 {
                list.iter().map(|s| (s - mean) / std).collect()
            } else {
                list.iter().map(|s| s - mean).collect()
            }
        } else {
            list.clone()
        };
        for (acc, v) in fused.iter_mut().zip(&prepared) {
            *acc += w * v;
        }
    }
    for v in &mut fused {
        *v /= weight_sum;
    }
    Ok(fused)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector_bank::compose_zero_shot;
    use crate::embedding::EmbeddingStore;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sample(features: Vec<f64>, label: i8) -> LabeledSample {
        LabeledSample::new(features, label).unwrap()
    }

    fn toy_store(dim: usize, tokens: &[&str], rng: &mut ChaCha8Rng) -> EmbeddingStore {
        let mut store = EmbeddingStore::new(dim).unwrap();
        for t in tokens {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            store.insert(t, v).unwrap();
        }
        store
    }

    #[test]
    fn empty_bank_is_bit_identical_to_supervised() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let x: Vec<LabeledSample> = (0..8)
            .map(|i| {
                let f: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
                sample(f, if i % 2 == 0 { 1 } else { -1 })
            })
            .collect();
        let config = AdaptationConfig::default();
        let bank = DetectorBank::empty(4).unwrap();
        let store = EmbeddingStore::new(2).unwrap();
        let adapted = adapt(&x, &bank, "t", &store, &config).unwrap();
        let plain = train_svm(&x, &config.solver, &config.kernel).unwrap();
        assert_eq!(adapted.model, plain);
        assert_eq!(adapted.n_real, 8);
        assert_eq!(adapted.n_pseudo, 0);
    }

    #[test]
    fn both_empty_is_an_error() {
        let bank = DetectorBank::empty(4).unwrap();
        let store = EmbeddingStore::new(2).unwrap();
        assert!(matches!(
            adapt(&[], &bank, "t", &store, &AdaptationConfig::default()),
            Err(Error::NothingToLearn)
        ));
    }

    #[test]
    fn empty_x_small_c_ranks_like_zero_shot() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dim = 16;
        let tokens: Vec<String> = (0..5).map(|i| format!("c{i}")).collect();
        let mut all = tokens.clone();
        all.push("target".into());
        let names: Vec<&str> = all.iter().map(|s| s.as_str()).collect();
        let store = toy_store(8, &names, &mut rng);
        let raw: Vec<(String, Vec<f64>)> = tokens
            .iter()
            .map(|t| {
                let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (t.clone(), w)
            })
            .collect();
        let bank = DetectorBank::new(dim, raw, true).unwrap();

        let mut config = AdaptationConfig::default();
        config.solver.c_param = 1e-4;
        let detector = adapt(&[], &bank, "target", &store, &config).unwrap();

        let zs = compose_zero_shot("target", &bank, &store, None, 0.0).unwrap();
        let w = detector.model.primal_weights().unwrap();
        let mut expected = vec![0.0; dim];
        for (d, &beta) in bank.detectors().iter().zip(&zs.betas) {
            for (e, v) in expected.iter_mut().zip(&d.weights) {
                *e += 2.0 * config.lambda * config.solver.c_param * beta * v;
            }
        }
        let err: f64 = w
            .iter()
            .zip(&expected)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = expected.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm < 1e-9, "relative error {}", err / norm);
    }

    #[test]
    fn lambda_to_zero_recovers_supervised_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let dim = 6;
        let x: Vec<LabeledSample> = (0..10)
            .map(|i| {
                let shift = if i % 2 == 0 { 1.5 } else { -1.5 };
                let f: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0) + shift).collect();
                sample(f, if i % 2 == 0 { 1 } else { -1 })
            })
            .collect();
        let tokens = ["c0", "c1", "c2", "target"];
        let store = toy_store(4, &tokens, &mut rng);
        let raw: Vec<(String, Vec<f64>)> = (0..3)
            .map(|i| {
                let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (format!("c{i}"), w)
            })
            .collect();
        let bank = DetectorBank::new(dim, raw, true).unwrap();

        let mut config = AdaptationConfig::default();
        config.solver.c_param = 10.0;
        config.lambda = 1e-8;
        let with_bank = adapt(&x, &bank, "target", &store, &config).unwrap();
        let without = adapt(&x, &DetectorBank::empty(dim).unwrap(), "target", &store, &config).unwrap();
        for _ in 0..20 {
            let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a = with_bank.score(&p).unwrap();
            let b = without.score(&p).unwrap();
            assert!((a - b).abs() < 1e-4, "diff {}", (a - b).abs());
        }
    }

    #[test]
    fn pseudo_count_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let tokens = ["c0", "c1", "target"];
        let store = toy_store(4, &tokens, &mut rng);
        let raw: Vec<(String, Vec<f64>)> = (0..2)
            .map(|i| (format!("c{i}"), (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let bank = DetectorBank::new(3, raw, true).unwrap();
        let detector = adapt(&[], &bank, "target", &store, &AdaptationConfig::default()).unwrap();
        assert_eq!(detector.n_pseudo, 4);
        assert_eq!(detector.n_real, 0);
    }

    #[test]
    fn multiclass_separable_sanity() {
        let x_by_class = vec![
            (0..5).map(|i| vec![2.0 + 0.1 * i as f64, 0.0]).collect::<Vec<_>>(),
            (0..5).map(|i| vec![-2.0 - 0.1 * i as f64, 0.0]).collect::<Vec<_>>(),
        ];
        let bank = DetectorBank::empty(2).unwrap();
        let store = EmbeddingStore::new(2).unwrap();
        let tokens = vec!["right".to_string(), "left".to_string()];
        let detectors =
            adapt_multiclass(&x_by_class, &bank, &tokens, &store, &AdaptationConfig::default()).unwrap();
        assert_eq!(detectors.len(), 2);
        for (ci, class) in x_by_class.iter().enumerate() {
            for f in class {
                assert_eq!(predict_class(&detectors, f).unwrap(), ci);
            }
        }
    }

    #[test]
    fn multiclass_zero_shot_class_trains_on_pseudo_positives() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let dim = 4;
        let store = toy_store(4, &["seen_a", "seen_b", "unseen"], &mut rng);
        let bank = DetectorBank::new(dim, vec![("unseen".to_string(), vec![1.0, 0.0, 0.0, 0.0])], true).unwrap();
        let x_by_class = vec![
            (0..4).map(|i| vec![-1.0, 0.2 * i as f64, 0.0, 0.0]).collect::<Vec<_>>(),
            (0..4).map(|i| vec![0.0, -1.0, 0.2 * i as f64, 0.0]).collect::<Vec<_>>(),
            Vec::new(), // no real samples for the unseen class
        ];
        let tokens = vec!["seen_a".to_string(), "seen_b".to_string(), "unseen".to_string()];
        let detectors =
            adapt_multiclass(&x_by_class, &bank, &tokens, &store, &AdaptationConfig::default()).unwrap();
        assert_eq!(detectors[2].n_real, 0);
        assert!(detectors[2].n_pseudo > 0);
    }

    #[test]
    fn multiclass_three_classes_order_preserved() {
        let x_by_class = vec![
            vec![vec![2.0, 0.0]],
            vec![vec![0.0, 2.0]],
            vec![vec![-2.0, -2.0]],
        ];
        let bank = DetectorBank::empty(2).unwrap();
        let store = EmbeddingStore::new(2).unwrap();
        let tokens = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let detectors =
            adapt_multiclass(&x_by_class, &bank, &tokens, &store, &AdaptationConfig::default()).unwrap();
        assert_eq!(detectors.len(), 3);
        assert_eq!(detectors[0].target, "a");
        assert_eq!(detectors[2].target, "c");
    }

    #[test]
    fn multiclass_needs_two_classes() {
        let bank = DetectorBank::empty(2).unwrap();
        let store = EmbeddingStore::new(2).unwrap();
        assert!(adapt_multiclass(
            &[vec![vec![1.0, 0.0]]],
            &bank,
            &["a".to_string()],
            &store,
            &AdaptationConfig::default()
        )
        .is_err());
    }

    #[test]
    fn fuse_raw_mean() {
        let fused = fuse_scores(&[vec![1.0, 3.0], vec![3.0, 1.0]], None, false).unwrap();
        assert_eq!(fused, vec![2.0, 2.0]);
    }

    #[test]
    fn fuse_single_list_preserves_ranking() {
        let scores = vec![0.3, -1.0, 2.0, 0.7];
        let fused = fuse_scores(std::slice::from_ref(&scores), None, true).unwrap();
        let rank = |v: &[f64]| {
            let mut order: Vec<usize> = (0..v.len()).collect();
            order.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap());
            order
        };
        assert_eq!(rank(&scores), rank(&fused));
    }

    #[test]
    fn fuse_identical_lists_idempotent_ranking() {
        let scores = vec![0.3, -1.0, 2.0, 0.7];
        let fused = fuse_scores(&[scores.clone(), scores.clone()], None, true).unwrap();
        let single = fuse_scores(&[scores], None, true).unwrap();
        for (a, b) in fused.iter().zip(&single) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fuse_zero_variance_list_is_mean_centered() {
        let fused = fuse_scores(&[vec![5.0, 5.0], vec![1.0, 3.0]], None, true).unwrap();
        // constant list contributes 0 after centering
        assert!((fused[0] - (-1.0 / 2.0)).abs() < 1e-12);
        assert!((fused[1] - (1.0 / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn fuse_length_mismatch() {
        assert!(fuse_scores(&[vec![1.0], vec![1.0, 2.0]], None, true).is_err());
        assert!(fuse_scores(&[vec![1.0], vec![2.0]], Some(&[1.0]), true).is_err());
    }
}
