//! Synthetic worlds where embedding similarity predicts feature-space
//! geometry, plus the zero/few/many-shot sweep run over them.
//!
//! Base-concept prototypes generate both the detector bank (one-vs-rest
//! linear training) and, projected through a shared random orthogonal map,
//! the word embeddings. `coupling` controls how much of each embedding is
//! projection versus independent noise, i.e. how much zero-shot signal the
//! world carries.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adaptation::{adapt, pseudo_for, zeroshot_exact_c, AdaptationConfig};
use crate::detector_bank::{compose_zero_shot, DetectorBank};
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::evaluation::{average_precision, mean_ap, RankedResult};
use crate::kernel_svm::{train_svm, SolverConfig};
use crate::pseudo_samples::LabeledSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorldSpec {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub n_base: usize,
    pub n_novel: usize,
    pub train_per_base: usize,
    pub pool_per_novel: usize,
    pub noise_sigma: f64,
    pub coupling: f64,
    pub seed: u64,
}

impl Default for SyntheticWorldSpec {
    fn default() -> Self {
        SyntheticWorldSpec {
            feature_dim: 32,
            embed_dim: 16,
            n_base: 20,
            n_novel: 5,
            train_per_base: 50,
            pool_per_novel: 200,
            noise_sigma: 0.6,
            coupling: 0.95,
            seed: 7,
        }
    }
}

impl SyntheticWorldSpec {
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.feature_dim == 0 || self.embed_dim == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        if self.n_base == 0 || self.n_novel == 0 {
            return Err(Error::InvalidArgument("need at least one base and one novel concept".into()));
        }
        if self.train_per_base == 0 || self.pool_per_novel == 0 {
            return Err(Error::InvalidArgument("sample counts must be positive".into()));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument("noise_sigma must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return Err(Error::InvalidArgument("coupling must lie in [0, 1]".into()));
        }
        if self.embed_dim > self.feature_dim {
            return Err(Error::InvalidArgument("embed_dim must not exceed feature_dim".into()));
        }
        let mut warnings = Vec::new();
        if self.feature_dim <= self.n_base {
            warnings.push(format!(
                "feature_dim {} <= n_base {}: pseudo sets may not be linearly separable",
                self.feature_dim, self.n_base
            ));
        }
        Ok(warnings)
    }
}

/// Evaluation pool for one novel concept. Positives carry label +1.
#[derive(Debug, Clone, PartialEq)]
pub struct NovelPool {
    pub token: String,
    pub samples: Vec<LabeledSample>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub store: EmbeddingStore,
    pub bank: DetectorBank,
    pub pools: Vec<NovelPool>,
    /// Unit prototype directions, base concepts first.
    pub prototypes: Vec<Vec<f64>>,
}

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the stream identical across rand versions
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Random matrix with orthonormal rows (Gram-Schmidt on Gaussian draws).
fn orthonormal_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while basis.len() < rows {
        let mut v: Vec<f64> = (0..cols).map(|_| standard_normal(rng)).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

fn base_token(i: usize) -> String {
    format!("base_{i:02}")
}

fn novel_token(i: usize) -> String {
    format!("novel_{i:02}")
}

/// Generate the embedding store, the one-vs-rest trained detector bank, and
/// the labeled evaluation pools. Fully determined by `spec.seed`.
pub fn generate_world(spec: &SyntheticWorldSpec) -> Result<World> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.feature_dim;
    let total = spec.n_base + spec.n_novel;

    let prototypes: Vec<Vec<f64>> = (0..total).map(|_| unit_vector(d, &mut rng)).collect();
    let tokens: Vec<String> = (0..spec.n_base)
        .map(base_token)
        .chain((0..spec.n_novel).map(novel_token))
        .collect();

    // embeddings: coupled projection of the prototype plus independent noise
    let projection = orthonormal_rows(spec.embed_dim, d, &mut rng);
    let mut store = EmbeddingStore::new(spec.embed_dim)?;
    for (token, proto) in tokens.iter().zip(&prototypes) {
        let mut projected: Vec<f64> = projection
            .iter()
            .map(|row| row.iter().zip(proto).map(|(a, b)| a * b).sum())
            .collect();
        let norm = projected.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for x in &mut projected {
                *x /= norm;
            }
        }
        let noise = unit_vector(spec.embed_dim, &mut rng);
        let embedding: Vec<f64> = projected
            .iter()
            .zip(&noise)
            .map(|(p, n)| spec.coupling * p + (1.0 - spec.coupling) * n)
            .collect();
        store.insert(token, embedding)?;
    }

    // base-class feature samples, then one-vs-rest linear detectors
    let noisy_sample = |proto: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        proto
            .iter()
            .map(|p| p + spec.noise_sigma * standard_normal(rng))
            .collect()
    };
    let base_samples: Vec<Vec<Vec<f64>>> = (0..spec.n_base)
        .map(|b| {
            (0..spec.train_per_base)
                .map(|_| noisy_sample(&prototypes[b], &mut rng))
                .collect()
        })
        .collect();

    let bank_solver = SolverConfig {
        c_param: 1.0,
        kkt_tolerance: 1e-3,
        max_passes: 5_000_000,
        sample_order: 0,
    };
    let mut raw_detectors = Vec::with_capacity(spec.n_base);
    for b in 0..spec.n_base {
        let mut training = Vec::new();
        for (cls, samples) in base_samples.iter().enumerate() {
            let label = if cls == b { 1 } else { -1 };
            for s in samples {
                training.push(LabeledSample::new(s.clone(), label)?);
            }
        }
        let model = train_svm(&training, &bank_solver, &crate::kernel_svm::KernelSpec::Linear)?;
        raw_detectors.push((base_token(b), model.primal_weights()?));
    }
    let bank = DetectorBank::new(d, raw_detectors, true)?;

    // held-out pools for the novel concepts
    let mut pools = Vec::with_capacity(spec.n_novel);
    for v in 0..spec.n_novel {
        let proto_idx = spec.n_base + v;
        let mut samples = Vec::with_capacity(2 * spec.pool_per_novel);
        for _ in 0..spec.pool_per_novel {
            samples.push(LabeledSample::new(noisy_sample(&prototypes[proto_idx], &mut rng), 1)?);
        }
        for _ in 0..spec.pool_per_novel {
            // negatives come from the other concepts' distributions
            let mut other = rng.gen_range(0..total - 1);
            if other >= proto_idx {
                other += 1;
            }
            samples.push(LabeledSample::new(noisy_sample(&prototypes[other], &mut rng), -1)?);
        }
        pools.push(NovelPool {
            token: novel_token(v),
            samples,
        });
    }

    Ok(World {
        store,
        bank,
        pools,
        prototypes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SupervisedOnly,
    ZeroShotOnly,
    FewShot,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::SupervisedOnly => "supervised_only",
            Method::ZeroShotOnly => "zero_shot_only",
            Method::FewShot => "few_shot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub n: usize,
    pub replicate: usize,
    pub mean_ap: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,N,replicate,mean_ap\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.method.as_str(),
                row.n,
                row.replicate,
                row.mean_ap
            ));
        }
        out
    }

    /// Mean AP over replicates for one (method, N) cell.
    pub fn cell_mean(&self, method: Method, n: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.n == n)
            .map(|r| r.mean_ap)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let derived = seed ^ (replicate as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha8Rng::seed_from_u64(derived)
}

/// Run the zero/few/many-shot sweep. For each replicate and N, sample N
/// positive and N negative training shots per novel concept, train each
/// method, and record the mean AP over novel concepts on the held-out rest.
///
/// With `zeroshot_exact` on, the N = 0 few-shot runs use a C small enough
/// that every pseudo sample stays inside the unit margin, making few-shot
/// rank-identical to the composed zero-shot detector.
pub fn run_sweep(
    spec: &SyntheticWorldSpec,
    n_values: &[usize],
    replicates: usize,
    config: &AdaptationConfig,
    zeroshot_exact: bool,
) -> Result<SweepReport> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be positive".into()));
    }
    for &n in n_values {
        if n > spec.pool_per_novel {
            return Err(Error::InvalidArgument(format!(
                "N={n} exceeds pool size {}",
                spec.pool_per_novel
            )));
        }
    }
    let world = generate_world(spec)?;
    let mut report = SweepReport::default();

    for replicate in 0..replicates {
        let mut rng = replicate_rng(spec.seed, replicate);
        for &n in n_values {
            let mut aps_supervised = Vec::new();
            let mut aps_zero_shot = Vec::new();
            let mut aps_few_shot = Vec::new();

            for pool in &world.pools {
                let pos_idx: Vec<usize> = (0..pool.samples.len())
                    .filter(|&i| pool.samples[i].label == 1)
                    .collect();
                let neg_idx: Vec<usize> = (0..pool.samples.len())
                    .filter(|&i| pool.samples[i].label == -1)
                    .collect();
                let chosen_pos = sample_without_replacement(&pos_idx, n, &mut rng);
                let chosen_neg = sample_without_replacement(&neg_idx, n, &mut rng);
                let mut in_train = vec![false; pool.samples.len()];
                for &i in chosen_pos.iter().chain(&chosen_neg) {
                    in_train[i] = true;
                }
                let train_set: Vec<LabeledSample> = pool
                    .samples
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| in_train[*i])
                    .map(|(_, s)| s.clone())
                    .collect();
                let held_out: Vec<&LabeledSample> = pool
                    .samples
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !in_train[*i])
                    .map(|(_, s)| s)
                    .collect();
                let relevance: Vec<u8> = held_out
                    .iter()
                    .map(|s| if s.label == 1 { 1 } else { 0 })
                    .collect();

                let ap_of = |scores: Vec<f64>| -> Result<f64> {
                    average_precision(&RankedResult::new(scores, relevance.clone())?)
                };

                if n > 0 {
                    let model = train_svm(&train_set, &config.solver, &config.kernel)?;
                    let scores: Result<Vec<f64>> =
                        held_out.iter().map(|s| model.score(&s.features)).collect();
                    aps_supervised.push(ap_of(scores?)?);
                }

                let zs = compose_zero_shot(&pool.token, &world.bank, &world.store, config.top_k, 0.0)?;
                let scores: Result<Vec<f64>> =
                    held_out.iter().map(|s| zs.score(&s.features)).collect();
                aps_zero_shot.push(ap_of(scores?)?);

                let mut fs_config = config.clone();
                if n == 0 && zeroshot_exact {
                    let pseudo = pseudo_for(&world.bank, &pool.token, &world.store, config)?;
                    fs_config.solver.c_param = zeroshot_exact_c(&pseudo);
                }
                let detector = adapt(&train_set, &world.bank, &pool.token, &world.store, &fs_config)?;
                let scores: Result<Vec<f64>> =
                    held_out.iter().map(|s| detector.score(&s.features)).collect();
                aps_few_shot.push(ap_of(scores?)?);
            }

            if !aps_supervised.is_empty() {
                report.rows.push(SweepRow {
                    method: Method::SupervisedOnly,
                    n,
                    replicate,
                    mean_ap: mean_ap(&aps_supervised)?,
                });
            }
            report.rows.push(SweepRow {
                method: Method::ZeroShotOnly,
                n,
                replicate,
                mean_ap: mean_ap(&aps_zero_shot)?,
            });
            report.rows.push(SweepRow {
                method: Method::FewShot,
                n,
                replicate,
                mean_ap: mean_ap(&aps_few_shot)?,
            });
        }
    }
    Ok(report)
}

fn sample_without_replacement(pool: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut indices: Vec<usize> = pool.to_vec();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let pick = rng.gen_range(0..indices.len());
        out.push(indices.swap_remove(pick));
    }
    out
}
