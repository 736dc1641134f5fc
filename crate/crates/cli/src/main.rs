use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coral::bench::{self, ExperimentConfig, ReportFormat};
use coral::classifier::{DEFAULT_C_GRID, DEFAULT_FOLDS};
use coral::data::{self, MatrixFormat, ShiftSpec};
use coral::{CoralError, ErrorKind};

/// Correlation alignment for unsupervised domain adaptation.
#[derive(Parser)]
#[command(name = "coral", version)]
struct Cli {
    /// Seed for every randomized step; falls back to $CORAL_SEED.
    #[arg(long, global = true, env = "CORAL_SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Re-color source features to match the target covariance.
    Align(AlignArgs),
    /// Train a linear SVM.
    Train(TrainArgs),
    /// Predict labels with a trained model, one per line.
    Predict(PredictArgs),
    /// Generate a synthetic source/target pair.
    Synth(SynthArgs),
    /// Run an experiment config and write the report.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Reg,
    Analytical,
}

#[derive(Clone, Copy, ValueEnum)]
enum FileFormat {
    Text,
    Bin,
}

impl From<FileFormat> for MatrixFormat {
    fn from(f: FileFormat) -> Self {
        match f {
            FileFormat::Text => MatrixFormat::Text,
            FileFormat::Bin => MatrixFormat::Binary,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Report {
    Csv,
    #[value(alias = "md")]
    Markdown,
}

impl From<Report> for ReportFormat {
    fn from(r: Report) -> Self {
        match r {
            Report::Csv => ReportFormat::Csv,
            Report::Markdown => ReportFormat::Markdown,
        }
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number >= 0, got '{s}'")),
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number > 0, got '{s}'")),
    }
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "1", value_parser = non_negative)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "reg")]
    mode: Mode,
    /// Also write the D × D transform matrix.
    #[arg(long)]
    emit_transform: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: FileFormat,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out_model: PathBuf,
    /// Fixed SVM cost; 1 when neither this nor --cv is given.
    #[arg(long = "C", alias = "c", conflicts_with = "cv", value_parser = positive)]
    c: Option<f64>,
    /// Choose C from the default grid by stratified cross-validation.
    #[arg(long)]
    cv: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML shift spec; its seed is replaced by --seed when given.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: FileFormat,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Report path; defaults to the config's output, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Report>,
    /// Worker threads for trials. Results do not depend on it.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: u32,
}

fn align(args: AlignArgs) -> coral::Result<()> {
    let source = data::load_features_auto(&args.source)?;
    let target = data::load_features_auto(&args.target)?;
    let transform = match args.mode {
        Mode::Reg => coral::coral::regularized_transform(&source, &target, args.lambda)?,
        Mode::Analytical => coral::coral_analytical(&source, &target)?,
    };
    let adjusted = coral::apply_transform(&source, &transform)?;
    data::save_features(&args.out, &adjusted, args.format.into())?;
    if let Some(path) = args.emit_transform {
        let matrix = coral::FeatureMatrix::new(transform.matrix().to_owned())?;
        data::save_features(path, &matrix, args.format.into())?;
    }
    Ok(())
}

fn train(args: TrainArgs, seed: u64) -> coral::Result<()> {
    let dataset = data::load_labeled(&args.features, &args.labels)?;
    let c = if args.cv {
        let c = coral::cross_validate_c(&dataset, &DEFAULT_C_GRID, DEFAULT_FOLDS, seed)?;
        eprintln!("selected C = {c}");
        c
    } else {
        args.c.unwrap_or(1.0)
    };
    let model = coral::train_linear_svm(&dataset, c)?;
    data::save_model(&args.out_model, &model)
}

fn predict(args: PredictArgs) -> coral::Result<()> {
    let model = data::load_model(&args.model)?;
    let features = data::load_features_auto(&args.features)?;
    let labels = coral::predict(&model, &features)?;
    data::save_labels(&args.out, &labels)
}

fn synth(args: SynthArgs, seed: Option<u64>) -> coral::Result<()> {
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| CoralError::Config(format!("{}: {e}", args.spec.display())))?;
    let mut spec: ShiftSpec =
        toml::from_str(&text).map_err(|e| CoralError::Config(format!("{}: {e}", args.spec.display())))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let pair = data::generate_shift(&spec)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CoralError::InvalidInput(format!("{}: {e}", args.out_dir.display())))?;
    let file = |name: &str| args.out_dir.join(name);
    let format = args.format.into();
    data::save_labeled(file("source.features"), file("source.labels"), &pair.source, format)?;
    data::save_labeled(file("target.features"), file("target.labels"), &pair.target, format)?;
    eprintln!("target map condition number {:.3}", pair.condition);
    Ok(())
}

fn bench(args: BenchArgs, seed: Option<u64>) -> coral::Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = seed {
        config.protocol.seed = seed;
    }
    let report = bench::run_matrix(&config, args.jobs as usize)?;
    let configured = config.output.as_ref();
    let format =
        args.format.map(ReportFormat::from).or(configured.map(|o| o.format)).unwrap_or(ReportFormat::Csv);
    match args.out.as_deref().or(configured.map(|o| o.path.as_path())) {
        Some(path) => bench::emit_report(&report, format, path),
        None => {
            print!("{}", bench::render_report(&report, format));
            Ok(())
        }
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Input => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Protocol => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Align(a) => align(a),
        Command::Train(a) => train(a, cli.seed.unwrap_or(0)),
        Command::Predict(a) => predict(a),
        Command::Synth(a) => synth(a, cli.seed),
        Command::Bench(a) => bench(a, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(root(&e), CoralError::SingularCovariance { .. }) {
                eprintln!("hint: rerun with --mode analytical or a positive --lambda");
            }
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn root(e: &CoralError) -> &CoralError {
    match e {
        CoralError::Context { source, .. } => root(source),
        other => other,
    }
}
