//! Batch command surface for the few-shot adaptation pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
//! failure (non-convergence). Diagnostics go to stderr; results go to the
//! requested output files or stdout.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fewshot::adaptation::{self, AdaptationConfig};
use fewshot::detector_bank::{compose_zero_shot, DetectorBank};
use fewshot::embedding::load_embeddings;
use fewshot::error::Error;
use fewshot::evaluation::{average_precision, RankedResult};
use fewshot::io::{
    read_json, read_scores, read_sparse_samples, write_binary_samples, write_json, write_scores,
};
use fewshot::kernel_svm::{train_svm, DualModel, KernelSpec, SolverConfig};
use fewshot::pseudo_samples::LabeledSample;
use fewshot::synth_bench::{run_sweep, SyntheticWorldSpec};

#[derive(Parser)]
#[command(name = "fewshot", version, about = "Few-shot adaptation of semantic concept detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct KernelArgs {
    /// Kernel: "linear" or "gaussian"
    #[arg(long, default_value = "linear")]
    kernel: String,
    /// Gaussian bandwidth b in exp(-b * ||x - z||^2)
    #[arg(long)]
    bandwidth: Option<f64>,
}

impl KernelArgs {
    fn to_spec(&self) -> Result<KernelSpec, String> {
        match self.kernel.as_str() {
            "linear" => Ok(KernelSpec::Linear),
            "gaussian" => Ok(KernelSpec::Gaussian {
                bandwidth: self.bandwidth.ok_or("--bandwidth is required for the gaussian kernel")?,
            }),
            other => Err(format!("unknown kernel {other:?}")),
        }
    }
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Regularization trade-off C
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// KKT stopping tolerance
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Maximum solver passes
    #[arg(long, default_value_t = 200_000)]
    max_passes: usize,
    /// Sample-order permutation seed (0 keeps input order)
    #[arg(long, default_value_t = 0)]
    sample_order: u64,
}

impl SolverArgs {
    fn to_config(&self) -> SolverConfig {
        SolverConfig {
            c_param: self.c,
            kkt_tolerance: self.tol,
            max_passes: self.max_passes,
            sample_order: self.sample_order,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compose a zero-shot detector from a bank and write it as a model file
    ComposeZeroshot {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        bias: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate pseudo training samples for a target concept
    GenPseudo {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        /// Clamp negative similarities to zero
        #[arg(long)]
        clamp_negative_sim: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a max-margin detector on a labeled sample file
    Train {
        #[arg(long)]
        samples: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Few-shot adaptation: train on real samples plus bank pseudo samples
    Adapt {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        clamp_negative_sim: bool,
        /// Force the small-C regime that reproduces zero-shot rankings
        /// exactly when no real samples are given
        #[arg(long)]
        zeroshot_exact: bool,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a sample file with a trained model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model on a labeled test file
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Metric: only "ap" is supported
        #[arg(long, default_value = "ap")]
        metric: String,
        /// Optional CSV report (concept,N,method,AP)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "-")]
        concept: String,
        #[arg(long, default_value = "-")]
        method: String,
        #[arg(long, default_value_t = 0)]
        n: usize,
    },
    /// Late fusion of score files
    Fuse {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// Comma-separated weights, one per input
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        /// Average raw scores instead of z-normalizing first
        #[arg(long)]
        no_normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the synthetic zero/few/many-shot sweep and write a CSV report
    SynthSweep {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        feature_dim: usize,
        #[arg(long, default_value_t = 16)]
        embed_dim: usize,
        #[arg(long, default_value_t = 20)]
        n_base: usize,
        #[arg(long, default_value_t = 5)]
        n_novel: usize,
        #[arg(long, default_value_t = 50)]
        train_per_base: usize,
        #[arg(long, default_value_t = 200)]
        pool_per_novel: usize,
        #[arg(long, default_value_t = 0.6)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 0.95)]
        coupling: f64,
        /// Comma-separated training-set sizes; 0 adds a zero-shot row
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,5,10,20,100")]
        n_values: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        #[arg(long)]
        zeroshot_exact: bool,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long)]
        top_k: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NonConvergence { .. } => EXIT_NUMERIC,
        Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code_for(&err))
}

fn usage(msg: &str) -> ExitCode {
    eprintln!("usage error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    run(cli.command)
}

fn run(command: Command) -> ExitCode {
    match command {
        Command::ComposeZeroshot {
            embeddings,
            bank,
            target,
            top_k,
            bias,
            out,
        } => {
            let store = match load_embeddings(&embeddings) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let bank: DetectorBank = match read_json(&bank) {
                Ok(b) => b,
                Err(e) => return fail(e),
            };
            let zs = match compose_zero_shot(&target, &bank, &store, top_k, bias) {
                Ok(z) => z,
                Err(e) => return fail(e),
            };
            // emit as an equivalent linear dual model so `predict` can use it
            let mut support_samples = Vec::new();
            let mut dual_coeffs = Vec::new();
            let mut max_beta: f64 = 1.0;
            for (detector, &beta) in bank.detectors().iter().zip(&zs.betas) {
                if beta == 0.0 {
                    continue;
                }
                let label = if beta >= 0.0 { 1 } else { -1 };
                support_samples.push(LabeledSample {
                    features: detector.weights.clone(),
                    label,
                });
                dual_coeffs.push(beta);
                max_beta = max_beta.max(beta.abs());
            }
            let model = DualModel {
                support_samples,
                dual_coeffs,
                bias,
                kernel: KernelSpec::Linear,
                c_param: max_beta,
            };
            eprintln!("composed zero-shot detector for {:?} over {} detectors", zs.target, bank.len());
            match write_json(&out, &model) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::GenPseudo {
            embeddings,
            bank,
            target,
            lambda,
            clamp_negative_sim,
            out,
        } => {
            let store = match load_embeddings(&embeddings) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let bank: DetectorBank = match read_json(&bank) {
                Ok(b) => b,
                Err(e) => return fail(e),
            };
            let config = AdaptationConfig {
                lambda,
                clamp_negative_sim,
                ..AdaptationConfig::default()
            };
            let pseudo = match adaptation::pseudo_for(&bank, &target, &store, &config) {
                Ok(p) => p,
                Err(e) => return fail(e),
            };
            match write_binary_samples(&out, bank.dim(), &pseudo.samples) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::Train {
            samples,
            solver,
            kernel,
            out,
        } => {
            let kernel = match kernel.to_spec() {
                Ok(k) => k,
                Err(msg) => return usage(&msg),
            };
            let samples = match read_sparse_samples(&samples).and_then(|f| f.into_binary()) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let model = match train_svm(&samples, &solver.to_config(), &kernel) {
                Ok(m) => m,
                Err(e) => return fail(e),
            };
            match write_json(&out, &model) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::Adapt {
            embeddings,
            bank,
            samples,
            target,
            lambda,
            top_k,
            clamp_negative_sim,
            zeroshot_exact,
            solver,
            kernel,
            out,
        } => {
            if bank.is_none() && samples.is_none() {
                return usage("adapt needs --bank and/or --samples");
            }
            let kernel = match kernel.to_spec() {
                Ok(k) => k,
                Err(msg) => return usage(&msg),
            };
            let real: Vec<LabeledSample> = match &samples {
                Some(path) => match read_sparse_samples(path).and_then(|f| f.into_binary()) {
                    Ok(s) => s,
                    Err(e) => return fail(e),
                },
                None => Vec::new(),
            };
            let bank: DetectorBank = match &bank {
                Some(path) => match read_json(path) {
                    Ok(b) => b,
                    Err(e) => return fail(e),
                },
                None => {
                    let dim = real.first().map(|s| s.features.len()).unwrap_or(1);
                    match DetectorBank::empty(dim) {
                        Ok(b) => b,
                        Err(e) => return fail(e),
                    }
                }
            };
            let store = match &embeddings {
                Some(path) => match load_embeddings(path) {
                    Ok(s) => s,
                    Err(e) => return fail(e),
                },
                None => {
                    if !bank.is_empty() {
                        return usage("--embeddings is required when --bank is given");
                    }
                    match fewshot::EmbeddingStore::new(1) {
                        Ok(s) => s,
                        Err(e) => return fail(e),
                    }
                }
            };
            let mut config = AdaptationConfig {
                lambda,
                solver: solver.to_config(),
                kernel,
                top_k,
                clamp_negative_sim,
            };
            if zeroshot_exact && !bank.is_empty() {
                let pseudo = match adaptation::pseudo_for(&bank, &target, &store, &config) {
                    Ok(p) => p,
                    Err(e) => return fail(e),
                };
                config.solver.c_param = adaptation::zeroshot_exact_c(&pseudo);
                eprintln!("zeroshot-exact mode: C set to {}", config.solver.c_param);
            }
            let detector = match adaptation::adapt(&real, &bank, &target, &store, &config) {
                Ok(d) => d,
                Err(e) => return fail(e),
            };
            eprintln!(
                "adapted detector for {:?}: N={} real, K={} pseudo, {} support vectors",
                detector.target,
                detector.n_real,
                detector.n_pseudo,
                detector.model.support_samples.len()
            );
            match write_json(&out, &detector.model) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::Predict { model, input, out } => {
            let model: DualModel = match read_json(&model) {
                Ok(m) => m,
                Err(e) => return fail(e),
            };
            let file = match read_sparse_samples(&input) {
                Ok(f) => f,
                Err(e) => return fail(e),
            };
            let mut scores = Vec::with_capacity(file.samples.len());
            for (_, features) in &file.samples {
                match model.score(features) {
                    Ok(s) => scores.push(s),
                    Err(e) => return fail(e),
                }
            }
            match write_scores(&out, &scores) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::Evaluate {
            model,
            test,
            metric,
            out,
            concept,
            method,
            n,
        } => {
            if metric != "ap" {
                return usage(&format!("unsupported metric {metric:?}, expected \"ap\""));
            }
            let model: DualModel = match read_json(&model) {
                Ok(m) => m,
                Err(e) => return fail(e),
            };
            let samples = match read_sparse_samples(&test).and_then(|f| f.into_binary()) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let mut scores = Vec::with_capacity(samples.len());
            let mut relevance = Vec::with_capacity(samples.len());
            for s in &samples {
                match model.score(&s.features) {
                    Ok(v) => scores.push(v),
                    Err(e) => return fail(e),
                }
                relevance.push(if s.label == 1 { 1 } else { 0 });
            }
            let ap = match RankedResult::new(scores, relevance).and_then(|r| average_precision(&r)) {
                Ok(ap) => ap,
                Err(e) => return fail(e),
            };
            println!("{ap}");
            if let Some(path) = out {
                let csv = format!("concept,N,method,AP\n{concept},{n},{method},{ap}\n");
                if let Err(e) = std::fs::write(&path, csv) {
                    return fail(Error::io(path, e));
                }
            }
            ExitCode::SUCCESS
        }
        Command::Fuse {
            inputs,
            weights,
            no_normalize,
            out,
        } => {
            let mut lists = Vec::with_capacity(inputs.len());
            for path in &inputs {
                match read_scores(path) {
                    Ok(s) => lists.push(s),
                    Err(e) => return fail(e),
                }
            }
            let fused = match adaptation::fuse_scores(&lists, weights.as_deref(), !no_normalize) {
                Ok(f) => f,
                Err(e) => return fail(e),
            };
            match write_scores(&out, &fused) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::SynthSweep {
            seed,
            feature_dim,
            embed_dim,
            n_base,
            n_novel,
            train_per_base,
            pool_per_novel,
            noise_sigma,
            coupling,
            n_values,
            replicates,
            zeroshot_exact,
            lambda,
            top_k,
            solver,
            kernel,
            out,
        } => {
            let kernel = match kernel.to_spec() {
                Ok(k) => k,
                Err(msg) => return usage(&msg),
            };
            let spec = SyntheticWorldSpec {
                feature_dim,
                embed_dim,
                n_base,
                n_novel,
                train_per_base,
                pool_per_novel,
                noise_sigma,
                coupling,
                seed,
            };
            match spec.validate() {
                Ok(warnings) => {
                    for w in warnings {
                        eprintln!("warning: {w}");
                    }
                }
                Err(e) => return fail(e),
            }
            let config = AdaptationConfig {
                lambda,
                solver: solver.to_config(),
                kernel,
                top_k,
                clamp_negative_sim: false,
            };
            let report = match run_sweep(&spec, &n_values, replicates, &config, zeroshot_exact) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            match std::fs::write(&out, report.to_csv()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(Error::io(out, e)),
            }
        }
    }
}
