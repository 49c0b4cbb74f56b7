//! Max-margin training in the dual: an SMO solver with exact bias handling,
//! linear and Gaussian kernels, and a dense projected-gradient QP oracle used
//! by the tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pseudo_samples::LabeledSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    /// kappa(x, z) = exp(-bandwidth * ||x - z||^2)
    Gaussian { bandwidth: f64 },
}

impl KernelSpec {
    fn validate(&self) -> Result<()> {
        if let KernelSpec::Gaussian { bandwidth } = self {
            if !(bandwidth.is_finite() && *bandwidth > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "gaussian bandwidth must be finite and positive, got {bandwidth}"
                )));
            }
        }
        Ok(())
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: z.len(),
        });
    }
    spec.validate()?;
    Ok(match spec {
        KernelSpec::Linear => x.iter().zip(z).map(|(a, b)| a * b).sum(),
        KernelSpec::Gaussian { bandwidth } => {
            let sq: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            (-bandwidth * sq).exp()
        }
    })
}

/// Solver configuration. `sample_order` of 0 keeps the input order; any other
/// value applies a seeded permutation before solving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub c_param: f64,
    pub kkt_tolerance: f64,
    pub max_passes: usize,
    pub sample_order: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            c_param: 1.0,
            kkt_tolerance: 1e-6,
            max_passes: 10_000,
            sample_order: 0,
        }
    }
}

/// Coefficients below this are pruned from the returned model.
const PRUNE_THRESHOLD: f64 = 1e-10;

/// A trained dual model. `dual_coeffs` are signed (alpha_i * y_i), so real
/// samples carry the alpha_i of the few-shot expansion and pseudo samples the
/// beta-tilde_k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualModel {
    pub support_samples: Vec<LabeledSample>,
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub c_param: f64,
}

impl DualModel {
    /// sum_i coeff_i kappa(s_i, x) + bias
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let mut acc = self.bias;
        for (s, c) in self.support_samples.iter().zip(&self.dual_coeffs) {
            acc += c * kernel_eval(&self.kernel, &s.features, x)?;
        }
        Ok(acc)
    }

    /// Expand duals into the primal weight vector (linear kernel only).
    pub fn primal_weights(&self) -> Result<Vec<f64>> {
        if self.kernel != KernelSpec::Linear {
            return Err(Error::NonLinearPrimal);
        }
        let dim = self
            .support_samples
            .first()
            .map(|s| s.features.len())
            .unwrap_or(0);
        let mut w = vec![0.0; dim];
        for (s, c) in self.support_samples.iter().zip(&self.dual_coeffs) {
            for (acc, v) in w.iter_mut().zip(&s.features) {
                *acc += c * v;
            }
        }
        Ok(w)
    }

    /// Dual objective sum_i alpha_i - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij,
    /// evaluated from the (pruned) coefficients.
    pub fn dual_objective(&self) -> Result<f64> {
        let n = self.support_samples.len();
        let mut linear = 0.0;
        let mut quad = 0.0;
        for i in 0..n {
            linear += self.dual_coeffs[i].abs();
            for j in 0..n {
                quad += self.dual_coeffs[i]
                    * self.dual_coeffs[j]
                    * kernel_eval(
                        &self.kernel,
                        &self.support_samples[i].features,
                        &self.support_samples[j].features,
                    )?;
            }
        }
        Ok(linear - 0.5 * quad)
    }
}

fn validate_training_set(samples: &[LabeledSample]) -> Result<usize> {
    let mut has_pos = false;
    let mut has_neg = false;
    let dim = samples.first().map(|s| s.features.len()).unwrap_or(0);
    for s in samples {
        if s.label == 1 {
            has_pos = true;
        } else if s.label == -1 {
            has_neg = true;
        } else {
            return Err(Error::InvalidArgument(format!("label must be +1 or -1, got {}", s.label)));
        }
        if s.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.features.len(),
            });
        }
        if s.features.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite("training sample features".into()));
        }
    }
    if !(has_pos && has_neg) {
        return Err(Error::SingleClass);
    }
    Ok(dim)
}

fn validate_config(config: &SolverConfig) -> Result<()> {
    if !(config.c_param.is_finite() && config.c_param > 0.0) {
        return Err(Error::InvalidArgument(format!("c_param must be positive, got {}", config.c_param)));
    }
    if !(config.kkt_tolerance.is_finite() && config.kkt_tolerance > 0.0) {
        return Err(Error::InvalidArgument("kkt_tolerance must be positive".into()));
    }
    if config.max_passes == 0 {
        return Err(Error::InvalidArgument("max_passes must be positive".into()));
    }
    Ok(())
}

fn permuted(samples: &[LabeledSample], seed: u64) -> Vec<LabeledSample> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut out: Vec<LabeledSample> = samples.to_vec();
    if seed != 0 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        out.shuffle(&mut rng);
    }
    out
}

/// Working-set state shared by the solver and the bias computation.
///
/// val_i = -y_i grad_i; at the optimum every free support vector has
/// val_i equal to the bias.
struct KktState {
    /// max over the "up" set, with the attaining index
    m_up: f64,
    i_up: Option<usize>,
    /// min over the "low" set, with the attaining index
    m_low: f64,
    i_low: Option<usize>,
}

fn kkt_state(alpha: &[f64], grad: &[f64], labels: &[f64], c: f64) -> KktState {
    let mut st = KktState {
        m_up: f64::NEG_INFINITY,
        i_up: None,
        m_low: f64::INFINITY,
        i_low: None,
    };
    for i in 0..alpha.len() {
        let val = -labels[i] * grad[i];
        let in_up = (labels[i] > 0.0 && alpha[i] < c) || (labels[i] < 0.0 && alpha[i] > 0.0);
        let in_low = (labels[i] > 0.0 && alpha[i] > 0.0) || (labels[i] < 0.0 && alpha[i] < c);
        if in_up && val > st.m_up {
            st.m_up = val;
            st.i_up = Some(i);
        }
        if in_low && val < st.m_low {
            st.m_low = val;
            st.i_low = Some(i);
        }
    }
    st
}

fn finish_model(
    samples: Vec<LabeledSample>,
    alpha: Vec<f64>,
    bias: f64,
    kernel: &KernelSpec,
    c: f64,
) -> DualModel {
    let mut support_samples = Vec::new();
    let mut dual_coeffs = Vec::new();
    for (s, a) in samples.into_iter().zip(alpha) {
        if a >= PRUNE_THRESHOLD {
            dual_coeffs.push(a * s.y());
            support_samples.push(s);
        }
    }
    DualModel {
        support_samples,
        dual_coeffs,
        bias,
        kernel: kernel.clone(),
        c_param: c,
    }
}

/// Train a soft-margin hinge-loss classifier by SMO on the dual.
///
/// Pair selection is the maximally violating pair (ties toward the lowest
/// index), so runs are deterministic for a fixed config and input order.
pub fn train_svm(
    samples: &[LabeledSample],
    config: &SolverConfig,
    kernel: &KernelSpec,
) -> Result<DualModel> {
    validate_config(config)?;
    kernel.validate()?;
    validate_training_set(samples)?;
    let samples = permuted(samples, config.sample_order);

    let n = samples.len();
    let c = config.c_param;
    let labels: Vec<f64> = samples.iter().map(|s| s.y()).collect();

    // dense Gram cache; problems here are desk-scale
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = kernel_eval(kernel, &samples[i].features, &samples[j].features)?;
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];

    let mut converged = false;
    let mut violation = f64::INFINITY;
    for _ in 0..config.max_passes {
        let st = kkt_state(&alpha, &grad, &labels, c);
        violation = st.m_up - st.m_low;
        if violation <= config.kkt_tolerance {
            converged = true;
            break;
        }
        let i = st.i_up.expect("up set nonempty while violated");
        let j = st.i_low.expect("low set nonempty while violated");

        // two-variable subproblem along the equality constraint
        let eta = (gram[i * n + i] + gram[j * n + j] - 2.0 * gram[i * n + j]).max(1e-12);
        let (delta_i, delta_j) = if labels[i] == labels[j] {
            // alpha_i -= d, alpha_j += d
            let mut d = (grad[i] - grad[j]) / eta;
            d = d.min(alpha[i]).max(alpha[i] - c);
            d = d.min(c - alpha[j]).max(-alpha[j]);
            (-d, d)
        } else {
            // alpha_i += d, alpha_j += d
            let mut d = -(grad[i] + grad[j]) / eta;
            d = d.min(c - alpha[i]).max(-alpha[i]);
            d = d.min(c - alpha[j]).max(-alpha[j]);
            (d, d)
        };
        if delta_i == 0.0 && delta_j == 0.0 {
            // box-clipped to a corner; numerically stuck at this violation
            break;
        }
        alpha[i] += delta_i;
        alpha[j] += delta_j;
        for t in 0..n {
            grad[t] += labels[t]
                * (labels[i] * gram[t * n + i] * delta_i + labels[j] * gram[t * n + j] * delta_j);
        }
    }
    if !converged {
        let st = kkt_state(&alpha, &grad, &labels, c);
        violation = violation.min(st.m_up - st.m_low);
        if violation > config.kkt_tolerance {
            return Err(Error::NonConvergence {
                passes: config.max_passes,
                violation,
                tolerance: config.kkt_tolerance,
            });
        }
    }

    let st = kkt_state(&alpha, &grad, &labels, c);
    let bias = 0.5 * (st.m_up + st.m_low);
    Ok(finish_model(samples, alpha, bias, kernel, c))
}

/// Maximum problem size accepted by [`solve_qp_oracle`].
pub const ORACLE_MAX_SAMPLES: usize = 8;

/// Independent test oracle: projected gradient ascent on the dense dual with
/// exact projection onto the box-and-equality feasible set. Validates
/// [`train_svm`]; not intended for production-size inputs.
pub fn solve_qp_oracle(
    samples: &[LabeledSample],
    config: &SolverConfig,
    kernel: &KernelSpec,
) -> Result<DualModel> {
    validate_config(config)?;
    kernel.validate()?;
    validate_training_set(samples)?;
    if samples.len() > ORACLE_MAX_SAMPLES {
        return Err(Error::OracleTooLarge {
            limit: ORACLE_MAX_SAMPLES,
            got: samples.len(),
        });
    }
    let samples = permuted(samples, config.sample_order);
    let n = samples.len();
    let c = config.c_param;
    let labels: Vec<f64> = samples.iter().map(|s| s.y()).collect();

    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            q[i * n + j] = labels[i]
                * labels[j]
                * kernel_eval(kernel, &samples[i].features, &samples[j].features)?;
        }
    }

    // step size from a crude spectral bound
    let row_norm: f64 = (0..n)
        .map(|i| (0..n).map(|j| q[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / (row_norm + 1.0);

    // projection onto {0 <= a <= C, y.a = 0} by bisection on the multiplier
    let project = |v: &[f64]| -> Vec<f64> {
        let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
        let (mut lo, mut hi) = (-bound, bound);
        let eval = |theta: f64| -> f64 {
            v.iter()
                .zip(&labels)
                .map(|(vi, yi)| yi * (vi - theta * yi).clamp(0.0, c))
                .sum()
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if eval(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let theta = 0.5 * (lo + hi);
        v.iter()
            .zip(&labels)
            .map(|(vi, yi)| (vi - theta * yi).clamp(0.0, c))
            .collect()
    };

    let objective = |a: &[f64]| -> f64 {
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += a[i] * a[j] * q[i * n + j];
            }
        }
        a.iter().sum::<f64>() - 0.5 * quad
    };

    let mut alpha = project(&vec![0.0; n]);
    let mut best = objective(&alpha);
    let mut stall = 0usize;
    for _ in 0..2_000_000 {
        let mut v = alpha.clone();
        for i in 0..n {
            let g: f64 = 1.0 - (0..n).map(|j| q[i * n + j] * alpha[j]).sum::<f64>();
            v[i] += step * g;
        }
        let next = project(&v);
        let moved = next
            .iter()
            .zip(&alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        alpha = next;
        let obj = objective(&alpha);
        if obj > best + 1e-15 {
            best = obj;
            stall = 0;
        } else {
            stall += 1;
        }
        if moved < 1e-14 || stall > 2_000 {
            break;
        }
    }

    // gradient of the minimization form, for the shared bias rule
    let grad: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| q[i * n + j] * alpha[j]).sum::<f64>() - 1.0)
        .collect();
    let st = kkt_state(&alpha, &grad, &labels, c);
    let bias = 0.5 * (st.m_up + st.m_low);
    Ok(finish_model(samples, alpha, bias, kernel, c))
}
