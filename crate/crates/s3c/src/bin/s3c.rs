//! Command-line driver: training, sampling, inference, feature extraction,
//! whitening, classification, and the exact-oracle report.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical divergence.
//! Errors print one machine-parseable line to stderr.

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

use s3c::classify::{self, ClassifyError, FeatureScaler};
use s3c::config::{ConfigError, RunConfig};
use s3c::inference::{self, InferError, InferenceConfig};
use s3c::io::{self, IoError, ModelArchive};
use s3c::learning::{self, LearnError, TrainInit};
use s3c::model::{ModelError, VisibleBatch};
use s3c::oracle::{self, OracleError};
use s3c::pipeline::{self, PipelineConfig, PipelineError};

#[derive(Parser)]
#[command(name = "s3c", version, about = "Spike-and-slab sparse coding toolkit")]
struct Cli {
    /// Worker threads for batch parallelism (default: $S3C_WORKERS, then all
    /// cores). `--workers 1` guarantees bitwise reproducibility.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model with variational EM and write a model archive.
    Train(TrainArgs),
    /// Draw ancestral samples from a stored model.
    Sample(SampleArgs),
    /// Run the variational E-step on a dataset and write E_Q[h].
    Infer(InferArgs),
    /// Encode images through the patch/whiten/encode/pool pipeline.
    ExtractFeatures(ExtractArgs),
    /// Fit a ZCA whitening transform from a patch matrix.
    FitWhitening(FitWhiteningArgs),
    /// Linear-classifier operations over feature matrices.
    #[command(subcommand)]
    Classify(ClassifyCommand),
    /// Exact-enumeration posterior report (refuses N > 14).
    Oracle(OracleArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Start from this model archive instead of random initialization.
    #[arg(long)]
    init_model: Option<PathBuf>,
    /// Whitening archive to embed into the trained model archive.
    #[arg(long)]
    whitening: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write per-iteration ELBO/sparsity records to `<out>.trace`.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    model: PathBuf,
    /// A single image file or a directory of .png/.s3ci files.
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the feature matrix in single precision.
    #[arg(long)]
    f32: bool,
}

#[derive(Args)]
struct FitWhiteningArgs {
    #[arg(long)]
    patches: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
    /// Contrast-normalize the patch rows before fitting.
    #[arg(long)]
    contrast_normalize: bool,
    /// Also write the transformed (normalized + whitened) patches here.
    #[arg(long)]
    apply_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ClassifyCommand {
    /// Fit the one-vs-all SVM (with feature standardization).
    Train(ClassifyTrainArgs),
    /// Predict labels for a feature matrix.
    Predict(ClassifyPredictArgs),
}

#[derive(Args)]
struct ClassifyTrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    /// Comma-separated grid; selects lambda on an 80/20 validation split.
    #[arg(long)]
    lambda_grid: Option<String>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ClassifyPredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Model(e) => match e {
                ModelError::NonUnitColumn { .. } => "NonUnitColumn",
                ModelError::NonPositivePrecision { .. } => "NonPositivePrecision",
                ModelError::NonFinite { .. } => "NonFinite",
                ModelError::DimMismatch { .. } => "DimMismatch",
            },
            CliError::Infer(e) => match e {
                InferError::NumericalDivergence { .. } => "NumericalDivergence",
                InferError::InvalidConfig(_) => "InvalidConfig",
                InferError::DimMismatch { .. } => "DimMismatch",
            },
            CliError::Learn(e) => {
                if e.is_divergence() {
                    "NumericalDivergence"
                } else {
                    "TrainError"
                }
            }
            CliError::Oracle(e) => match e {
                OracleError::TooManyUnits(_) => "TooManyUnits",
                OracleError::NotPositiveDefinite(_) => "NotPositiveDefinite",
                OracleError::DimMismatch { .. } => "DimMismatch",
            },
            CliError::Pipeline(e) => match e {
                PipelineError::PatchTooLarge { .. } => "PatchTooLarge",
                PipelineError::GridTooFine { .. } => "GridTooFine",
                PipelineError::RankDeficient { .. } => "RankDeficient",
                PipelineError::InsufficientPatches { .. } => "InsufficientPatches",
                PipelineError::Inference(InferError::NumericalDivergence { .. }) => {
                    "NumericalDivergence"
                }
                _ => "PipelineError",
            },
            CliError::Classify(e) => match e {
                ClassifyError::EmptyDataset => "EmptyDataset",
                ClassifyError::LabelOutOfRange { .. } => "LabelOutOfRange",
                _ => "ClassifyError",
            },
            CliError::Io(e) => match e {
                IoError::CorruptArchive { .. } => "CorruptArchive",
                IoError::VersionMismatch { .. } => "VersionMismatch",
                IoError::MalformedHeader { .. } => "MalformedHeader",
                IoError::RaggedRows { .. } => "RaggedRows",
                IoError::ManifestDimMismatch { .. } => "ManifestDimMismatch",
                _ => "IoError",
            },
            CliError::Config(_) => "ConfigError",
            CliError::Usage(_) => "Usage",
        }
    }

    fn exit_code(&self) -> u8 {
        let divergence = matches!(
            self,
            CliError::Infer(InferError::NumericalDivergence { .. })
                | CliError::Pipeline(PipelineError::Inference(
                    InferError::NumericalDivergence { .. }
                ))
        ) || matches!(self, CliError::Learn(e) if e.is_divergence());
        if divergence {
            2
        } else {
            1
        }
    }
}

#[derive(Serialize)]
struct TraceLine {
    iter: usize,
    elbo: f64,
    sparsity: f64,
}

fn load_run_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => train(args),
        Command::Sample(args) => sample(args),
        Command::Infer(args) => infer(args),
        Command::ExtractFeatures(args) => extract_features(args),
        Command::FitWhitening(args) => fit_whitening(args),
        Command::Classify(ClassifyCommand::Train(args)) => classify_train(args),
        Command::Classify(ClassifyCommand::Predict(args)) => classify_predict(args),
        Command::Oracle(args) => oracle_report(args),
    }
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let data_path = args
        .data
        .or_else(|| cfg.paths.data.clone())
        .ok_or_else(|| CliError::Usage("no data path (flag --data or [paths].data)".into()))?;
    let out_dir = args
        .out
        .or_else(|| cfg.paths.out.clone())
        .ok_or_else(|| CliError::Usage("no output dir (flag --out or [paths].out)".into()))?;
    let data = VisibleBatch::new(io::load_matrix(&data_path)?)?;

    let init = match &args.init_model {
        Some(dir) => TrainInit::Params(io::load_model(dir)?.params),
        None => {
            let spec = cfg.random_init_spec().ok_or_else(|| {
                CliError::Usage("no init model and [model].n not set in config".into())
            })?;
            TrainInit::Random(spec)
        }
    };
    let whitening = match args.whitening.as_ref().or(cfg.paths.whitening.as_ref()) {
        Some(dir) => Some(io::load_whitening(dir)?),
        None => None,
    };

    let train_cfg = cfg.to_train_config();
    let (params, log) = learning::train_em(&data, &train_cfg, init)?;

    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Usage(e.to_string()))?;
    io::save_model(
        &out_dir.join("model"),
        &ModelArchive { params, whitening },
    )?;
    io::write_jsonl(&out_dir.join("train_log.jsonl"), &log)?;
    cfg.save(&out_dir.join("effective_config.toml"))?;
    if let Some(last) = log.last() {
        println!(
            "trained {} steps, final batch elbo {:.6}, mean sparsity {:.4}",
            log.len(),
            last.elbo,
            last.mean_sparsity
        );
    } else {
        println!("trained 0 steps (epochs = 0), wrote initial model");
    }
    println!("model archive: {}", out_dir.join("model").display());
    Ok(())
}

fn sample(args: SampleArgs) -> Result<(), CliError> {
    if args.n < 1 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let archive = io::load_model(&args.model)?;
    let sample = archive.params.sample_ancestral(args.seed, args.n);
    io::save_matrix(&args.out, sample.v.matrix())?;
    println!(
        "wrote {} samples of dimension {} to {}",
        args.n,
        archive.params.d(),
        args.out.display()
    );
    Ok(())
}

fn infer(args: InferArgs) -> Result<(), CliError> {
    let archive = io::load_model(&args.model)?;
    let cfg = load_run_config(args.config.as_ref())?;
    let mut inf_cfg = cfg.inference.clone();
    if args.trace {
        inf_cfg.record_trace = true;
    }
    let data = VisibleBatch::new(io::load_matrix(&args.data)?)?;
    let (q, trace) = inference::e_step(&archive.params, &data, &inf_cfg)?;
    io::save_matrix(&args.out, &q.h_hat)?;
    if args.trace {
        let lines: Vec<TraceLine> = trace
            .elbo
            .iter()
            .zip(trace.sparsity.iter())
            .enumerate()
            .map(|(iter, (&elbo, &sparsity))| TraceLine {
                iter,
                elbo,
                sparsity,
            })
            .collect();
        let trace_path = args.out.with_extension("trace");
        io::write_jsonl(&trace_path, &lines)?;
        println!("trace: {}", trace_path.display());
    }
    let final_elbo = trace.elbo.last().copied().unwrap_or(f64::NAN);
    println!(
        "inferred {} examples, final mean elbo {:.6}, sparsity {:.4}",
        data.len(),
        final_elbo,
        q.sparsity(0.01)
    );
    Ok(())
}

fn extract_features(args: ExtractArgs) -> Result<(), CliError> {
    let archive = io::load_model(&args.model)?;
    let whitening = archive.whitening.as_ref().ok_or_else(|| {
        CliError::Usage("model archive has no whitening transform; extract-features needs one".into())
    })?;
    let cfg = load_run_config(args.config.as_ref())?;
    let pipe_cfg = PipelineConfig {
        pooling: cfg.pooling.clone(),
        inference: InferenceConfig {
            record_trace: false,
            ..cfg.inference.clone()
        },
        contrast_eps: None,
    };
    let files = io::list_images(&args.images)?;
    if files.is_empty() {
        return Err(CliError::Usage(format!(
            "no .png or .s3ci images under {}",
            args.images.display()
        )));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(files.len());
    let mut width = 0usize;
    for file in &files {
        let img = io::load_image(file)?;
        let features =
            pipeline::extract_image_features(&archive.params, whitening, &img, &pipe_cfg)?;
        if !rows.is_empty() && features.len() != width {
            return Err(CliError::Usage(format!(
                "feature length {} of {} differs from {}",
                features.len(),
                file.display(),
                width
            )));
        }
        width = features.len();
        rows.push(features.to_vec());
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let matrix = Array2::from_shape_vec((files.len(), width), flat).expect("validated shape");
    if args.f32 {
        io::save_matrix_f32(&args.out, &matrix)?;
    } else {
        io::save_matrix(&args.out, &matrix)?;
    }
    println!(
        "extracted {} x {} features to {}",
        matrix.nrows(),
        matrix.ncols(),
        args.out.display()
    );
    Ok(())
}

fn fit_whitening(args: FitWhiteningArgs) -> Result<(), CliError> {
    let raw = io::load_matrix(&args.patches)?;
    let patches = if args.contrast_normalize {
        pipeline::contrast_normalize(&raw)
    } else {
        raw
    };
    let t = pipeline::fit_zca(&patches, args.epsilon)?;
    io::save_whitening(&args.out, &t)?;
    if let Some(apply_out) = &args.apply_out {
        let transformed = pipeline::apply_zca(&t, &patches)?;
        io::save_matrix(apply_out, &transformed)?;
        println!("transformed patches: {}", apply_out.display());
    }
    println!(
        "fit whitening on {} patches of dim {}, epsilon {}",
        patches.nrows(),
        patches.ncols(),
        args.epsilon
    );
    Ok(())
}

fn classify_train(args: ClassifyTrainArgs) -> Result<(), CliError> {
    let features = io::load_matrix(&args.features)?;
    let labels = io::load_labels(&args.labels)?;
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let scaler = FeatureScaler::fit(&features)?;
    let x = scaler.transform(&features)?;

    let lambda = match &args.lambda_grid {
        None => args.lambda,
        Some(grid) => {
            let candidates: Result<Vec<f64>, _> =
                grid.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let candidates =
                candidates.map_err(|e| CliError::Usage(format!("bad --lambda-grid: {e}")))?;
            select_lambda(&x, &labels, classes, &candidates, args.epochs, args.seed)?
        }
    };
    let model = classify::svm_train(&x, &labels, classes, lambda, args.epochs, args.seed)?;
    io::save_classifier(&args.out, &model, &scaler)?;
    let train_pred = classify::svm_predict(&model, &x)?;
    let acc = accuracy(&train_pred, &labels);
    println!(
        "trained {classes}-class classifier, lambda {lambda:.2e}, train accuracy {acc:.4}"
    );
    Ok(())
}

fn select_lambda(
    x: &Array2<f64>,
    y: &[usize],
    classes: usize,
    grid: &[f64],
    epochs: usize,
    seed: u64,
) -> Result<f64, CliError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    if grid.is_empty() {
        return Err(CliError::Usage("--lambda-grid is empty".into()));
    }
    let m = x.nrows();
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let split = (m * 4) / 5;
    if split == 0 || split == m {
        return Err(CliError::Usage(
            "too few samples for a validation split".into(),
        ));
    }
    let gather = |idx: &[usize]| -> (Array2<f64>, Vec<usize>) {
        let mut xs = Array2::zeros((idx.len(), x.ncols()));
        let mut ys = Vec::with_capacity(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            xs.row_mut(r).assign(&x.row(i));
            ys.push(y[i]);
        }
        (xs, ys)
    };
    let (x_tr, y_tr) = gather(&order[..split]);
    let (x_val, y_val) = gather(&order[split..]);
    let mut best = (grid[0], -1.0);
    for &lambda in grid {
        let model = classify::svm_train(&x_tr, &y_tr, classes, lambda, epochs, seed)?;
        let pred = classify::svm_predict(&model, &x_val)?;
        let acc = accuracy(&pred, &y_val);
        println!("lambda {lambda:.2e}: validation accuracy {acc:.4}");
        if acc > best.1 {
            best = (lambda, acc);
        }
    }
    Ok(best.0)
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth.iter()).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

fn classify_predict(args: ClassifyPredictArgs) -> Result<(), CliError> {
    let (model, scaler) = io::load_classifier(&args.model)?;
    let features = io::load_matrix(&args.features)?;
    let x = scaler.transform(&features)?;
    let pred = classify::svm_predict(&model, &x)?;
    let mut text = String::from("label\n");
    for p in &pred {
        text.push_str(&format!("{p}\n"));
    }
    std::fs::write(&args.out, text).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("predicted {} rows to {}", pred.len(), args.out.display());
    Ok(())
}

fn oracle_report(args: OracleArgs) -> Result<(), CliError> {
    let archive = io::load_model(&args.model)?;
    let data = VisibleBatch::new(io::load_matrix(&args.data)?)?;
    let params = &archive.params;
    let (q, _) = inference::e_step(params, &data, &InferenceConfig::default())?;
    let mut total_kl = 0.0;
    for r in 0..data.len() {
        let v = data.matrix().row(r);
        let exact = oracle::exact_posterior(params, v)?;
        let h_hat = q.h_hat.row(r).to_owned();
        let s_hat = q.s_hat.row(r).to_owned();
        let bound = inference::elbo(params, v, &h_hat, &s_hat);
        let kl = exact.log_evidence - bound;
        total_kl += kl;
        let map = exact.map_config();
        println!(
            "example={} log_evidence={:.6} elbo={:.6} kl={:.6} map_config={:#0width$b} p_map={:.4}",
            r,
            exact.log_evidence,
            bound,
            kl,
            map,
            exact.config_log_probs[map].exp(),
            width = params.n() + 2,
        );
    }
    println!(
        "examples={} mean_kl={:.6}",
        data.len(),
        total_kl / data.len() as f64
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let workers = cli
        .workers
        .or_else(|| {
            std::env::var("S3C_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    if workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            eprintln!("error kind=ThreadPool msg=\"{e}\"");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('"', "'").replace('\n', " ");
            eprintln!("error kind={} msg=\"{}\"", e.kind(), msg);
            ExitCode::from(e.exit_code())
        }
    }
}
