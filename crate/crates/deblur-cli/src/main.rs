//! Batch command-line surface for the deblur toolkit: forward-operator
//! estimation, blur simulation, synthetic dataset generation, deblurring,
//! OCR-score evaluation, diagnostics, and benchmarks.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
//! failure. All randomness flows through the global `--seed`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deblur_core::bench::{
    run_misspecification_bench, run_perf_bench, run_recovery_bench, BenchCase, RecoveryReport,
};
use deblur_core::data_synth::{load_corpus, stream, write_dataset, StreamConfig, TextSpec};
use deblur_core::distortion::{render_chessboard, warp_image, CoordMap};
use deblur_core::estimation::{estimate, EstimationConfig, KernelInit, PairedDataset};
use deblur_core::forward_model::{add_noise, ForwardModel, NoiseSpec};
use deblur_core::image::{load_image, BitDepth, BoundaryCondition, Image};
use deblur_core::reconstruction::{deblur, PipelineRegistry};
use deblur_core::scoring::evaluate_level;
use deblur_core::{derive_seed, Error};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

/// Default master seed; override with --seed for different draws.
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(
    name = "deblur",
    version,
    about = "Physical blur modeling and deblurring toolkit"
)]
struct Cli {
    /// Master RNG seed shared by all randomized subcommands.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Cap internal worker threads (0 = machine default). Results do not
    /// depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a forward model to a directory of sharp/blurry PGM pairs.
    Estimate(EstimateArgs),
    /// Apply a forward model to a sharp image.
    Simulate(SimulateArgs),
    /// Emit a synthetic dataset from a forward model.
    Synth(SynthArgs),
    /// Deblur one image through a registered pipeline.
    Deblur(DeblurArgs),
    /// Deblur and score a dataset with an external OCR command.
    Score(ScoreArgs),
    /// Emit distortion/residual diagnostic images for a model.
    Diag(DiagArgs),
    /// Run the recovery/perf benchmark harnesses.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct EstimateArgs {
    /// Directory of `*_sharp.pgm` / `*_blurry.pgm` pairs, optionally with
    /// `calib_sharp.pgm` / `calib_blurry.pgm`.
    pairs_dir: PathBuf,
    /// Output model file.
    out_model: PathBuf,
    /// Odd blur-kernel side.
    #[arg(long, default_value_t = 701)]
    kernel_side: usize,
    /// Number of radial distortion coefficients (0 = convolution only).
    #[arg(long, default_value_t = 2)]
    coeffs: usize,
    /// Also fit the distortion center.
    #[arg(long)]
    learn_center: bool,
    #[arg(long, default_value_t = 1e-3)]
    kernel_lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    coeff_lr: f64,
    /// Per-iteration learning-rate decay factor.
    #[arg(long, default_value_t = 1.0)]
    lr_decay: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// Boundary condition: zero-pad, periodic, or reflexive.
    #[arg(long, default_value = "reflexive")]
    boundary: String,
    /// Blur-level tag stored in the model.
    #[arg(long, default_value_t = 0)]
    level: u32,
    /// Noise variance stored in the model.
    #[arg(long, default_value_t = 0.001)]
    noise_variance: f64,
    /// Kernel initialization: "gaussian" (bump, sigma = side/8) or "delta".
    #[arg(long, default_value = "gaussian")]
    kernel_init: String,
    /// Project the kernel onto nonnegative weights after each step.
    #[arg(long)]
    nonnegative_kernel: bool,
    /// Fail unless the calibration pair is present.
    #[arg(long)]
    require_background: bool,
    /// Loss-trace CSV path (default: out model path + ".trace.csv").
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    model: PathBuf,
    input: PathBuf,
    output: PathBuf,
    /// Also apply the model's amplitude-dependent noise.
    #[arg(long)]
    noise: bool,
}

#[derive(Args)]
struct SynthArgs {
    model: PathBuf,
    out_dir: PathBuf,
    /// Number of synthetic text samples.
    #[arg(long, default_value_t = 20)]
    hdc_count: usize,
    /// Number of sanity (natural patchwork) samples.
    #[arg(long, default_value_t = 1)]
    sanity_count: usize,
    /// Directory of corpus PGMs for sanity samples.
    #[arg(long)]
    sanity_corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    /// Leave sanity samples noiseless.
    #[arg(long)]
    clean_sanity: bool,
    /// Text glyph height in pixels.
    #[arg(long, default_value_t = 14)]
    glyph_height: usize,
    /// Lines of text per sample.
    #[arg(long, default_value_t = 2)]
    lines: usize,
}

#[derive(Args)]
struct DeblurArgs {
    registry: PathBuf,
    input: PathBuf,
    level: u32,
    output: PathBuf,
    /// Solve purely periodically (no reflexive edge padding).
    #[arg(long)]
    no_edge_pad: bool,
}

#[derive(Args)]
struct ScoreArgs {
    /// Dataset directory holding `sample_<j>_blurry.pgm` and
    /// `sample_<j>.txt` (directly or under `level_<k>/`).
    dataset_dir: PathBuf,
    registry: PathBuf,
    level: u32,
    /// OCR command template with an `{in}` placeholder; falls back to the
    /// DEBLUR_OCR_CMD environment variable.
    #[arg(long)]
    ocr_cmd: Option<String>,
    /// Report CSV path (default: print to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagArgs {
    model: PathBuf,
    out_dir: PathBuf,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    /// Chessboard block rows.
    #[arg(long, default_value_t = 7)]
    rows: usize,
    /// Chessboard block columns.
    #[arg(long, default_value_t = 11)]
    cols: usize,
    /// Sharp image for the forward-model residual diagnostic.
    #[arg(long)]
    sharp: Option<PathBuf>,
    /// Observed blurry image matching --sharp.
    #[arg(long)]
    observed: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Synthetic model-recovery benchmark against fixed thresholds.
    Recovery {
        /// Case file (key=value lines); defaults to the built-in case.
        #[arg(long)]
        case: Option<PathBuf>,
        /// Use the built-in noisy variant.
        #[arg(long)]
        noisy: bool,
        /// Report CSV path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Direct-vs-FFT convolution timing.
    Perf {
        #[arg(long, default_value_t = 512)]
        height: usize,
        #[arg(long, default_value_t = 512)]
        width: usize,
        /// Comma-separated kernel sides.
        #[arg(long, default_value = "3,15,31,63")]
        sizes: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Matched vs distortion-free fit on distortion-generated data.
    Misspec {
        #[arg(long)]
        case: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; everything else is a
            // usage error.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    deblur_core::set_thread_cap(cli.threads);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::MissingRecognizer => EXIT_USAGE,
        Error::IllPosed { .. }
        | Error::EstimationDiverged { .. }
        | Error::NonFiniteIterate { .. } => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn run(cli: Cli) -> deblur_core::Result<()> {
    match cli.command {
        Command::Estimate(args) => cmd_estimate(args, cli.seed),
        Command::Simulate(args) => cmd_simulate(args, cli.seed),
        Command::Synth(args) => cmd_synth(args, cli.seed),
        Command::Deblur(args) => cmd_deblur(args),
        Command::Score(args) => cmd_score(args),
        Command::Diag(args) => cmd_diag(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn parse_boundary(name: &str) -> deblur_core::Result<BoundaryCondition> {
    match name {
        "zero-pad" => Ok(BoundaryCondition::ZeroPad),
        "periodic" => Ok(BoundaryCondition::Periodic),
        "reflexive" => Ok(BoundaryCondition::Reflexive),
        other => Err(Error::InvalidConfig(format!(
            "unknown boundary {other:?} (expected zero-pad, periodic, or reflexive)"
        ))),
    }
}

/// Scan a directory for `<stem>_sharp.pgm` / `<stem>_blurry.pgm` pairs
/// and the optional `calib_*` pair.
fn load_pairs_dir(dir: &Path) -> deblur_core::Result<PairedDataset> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems: Vec<String> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix("_sharp.pgm") {
            if stem != "calib" {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    let mut pairs = Vec::with_capacity(stems.len());
    for stem in &stems {
        let sharp = load_image(dir.join(format!("{stem}_sharp.pgm")))?;
        let blurry_path = dir.join(format!("{stem}_blurry.pgm"));
        let blurry = load_image(&blurry_path)?;
        pairs.push((sharp, blurry));
    }
    let mut dataset = PairedDataset::new(pairs)?;
    let calib_sharp = dir.join("calib_sharp.pgm");
    let calib_blurry = dir.join("calib_blurry.pgm");
    if calib_sharp.exists() && calib_blurry.exists() {
        dataset = dataset.with_calibration(load_image(calib_sharp)?, load_image(calib_blurry)?)?;
    }
    Ok(dataset)
}

fn cmd_estimate(args: EstimateArgs, seed: u64) -> deblur_core::Result<()> {
    let dataset = load_pairs_dir(&args.pairs_dir)?;
    if args.require_background && dataset.calibration().is_none() {
        return Err(Error::MissingCalibration);
    }

    let mut config = EstimationConfig::new(args.kernel_side);
    config.coeff_count = args.coeffs;
    config.learn_center = args.learn_center;
    config.kernel_lr = args.kernel_lr;
    config.coeff_lr = args.coeff_lr;
    config.lr_decay = args.lr_decay;
    config.iterations = args.iterations;
    config.batch_size = args.batch_size;
    config.seed = seed;
    config.boundary = parse_boundary(&args.boundary)?;
    config.level = args.level;
    config.noise_variance = args.noise_variance;
    config.kernel_init = match args.kernel_init.as_str() {
        "gaussian" => KernelInit::GaussianBump {
            sigma: args.kernel_side as f64 / 8.0,
        },
        "delta" => KernelInit::Delta,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown kernel init {other:?} (expected gaussian or delta)"
            )))
        }
    };
    config.nonnegative_kernel = args.nonnegative_kernel;

    let (model, trace) = estimate(&dataset, &config)?;
    model.save(&args.out_model)?;

    let trace_path = args.trace_out.unwrap_or_else(|| {
        let mut p = args.out_model.clone().into_os_string();
        p.push(".trace.csv");
        PathBuf::from(p)
    });
    let mut csv = String::from("iteration,loss\n");
    for (i, loss) in trace.iter().enumerate() {
        csv.push_str(&format!("{i},{loss:.12e}\n"));
    }
    std::fs::write(&trace_path, csv).map_err(|e| Error::io(&trace_path, e))?;

    println!(
        "estimated level {} model over {} pairs; final loss {:.6e}",
        model.level,
        dataset.pairs().len(),
        trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, seed: u64) -> deblur_core::Result<()> {
    let model = ForwardModel::load(&args.model)?;
    let input = load_image(&args.input)?;
    let mut output = model.apply(&input)?;
    if args.noise {
        output = add_noise(
            &output,
            &NoiseSpec {
                variance: model.noise_variance,
                seed: derive_seed(seed, 0x6e6f_6973_65),
            },
        );
    }
    output.save_pgm(&args.output, BitDepth::Sixteen)?;
    println!(
        "simulated {} -> {}",
        args.input.display(),
        args.output.display()
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs, seed: u64) -> deblur_core::Result<()> {
    let model = ForwardModel::load(&args.model)?;
    let level = model.level;
    let sanity_corpus = match (&args.sanity_corpus, args.sanity_count) {
        (Some(dir), _) => load_corpus(dir)?,
        (None, 0) => Vec::new(),
        (None, _) => {
            return Err(Error::InvalidConfig(
                "--sanity-corpus is required when --sanity-count > 0".into(),
            ))
        }
    };
    let config = StreamConfig {
        model,
        text_spec: TextSpec {
            glyph_height: args.glyph_height,
            lines: args.lines,
            ..TextSpec::default()
        },
        sanity_corpus,
        hdc_count: args.hdc_count,
        sanity_count: args.sanity_count,
        dims: (args.height, args.width),
        noisy_sanity: !args.clean_sanity,
        seed,
    };
    let samples = stream(config)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let manifest_lines = write_dataset(samples, &args.out_dir, level)?;
    let manifest_path = args.out_dir.join("manifest.csv");
    let mut manifest = String::from("index,category,seed\n");
    for line in &manifest_lines {
        manifest.push_str(line);
        manifest.push('\n');
    }
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    println!(
        "wrote {} samples under {}",
        manifest_lines.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_deblur(args: DeblurArgs) -> deblur_core::Result<()> {
    let mut registry = PipelineRegistry::load(&args.registry)?;
    registry.edge_pad = !args.no_edge_pad;
    let input = load_image(&args.input)?;
    let output = deblur(&registry, &input, args.level)?;
    output.save_pgm(&args.output, BitDepth::Sixteen)?;
    println!(
        "deblurred {} at level {} -> {}",
        args.input.display(),
        args.level,
        args.output.display()
    );
    Ok(())
}

/// Collect `(blurry, ground truth)` samples from a dataset directory.
fn load_score_samples(dir: &Path, level: u32) -> deblur_core::Result<Vec<(Image, String)>> {
    let level_dir = dir.join(format!("level_{level}"));
    let dir = if level_dir.is_dir() {
        level_dir
    } else {
        dir.to_path_buf()
    };
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut stems: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            e.file_name()
                .to_string_lossy()
                .strip_suffix("_blurry.pgm")
                .map(str::to_string)
        })
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut samples = Vec::with_capacity(stems.len());
    for stem in stems {
        let blurry = load_image(dir.join(format!("{stem}_blurry.pgm")))?;
        let txt_path = dir.join(format!("{stem}.txt"));
        if !txt_path.exists() {
            continue; // sanity samples carry no ground truth
        }
        let text = std::fs::read_to_string(&txt_path).map_err(|e| Error::io(&txt_path, e))?;
        samples.push((blurry, text.trim_end_matches('\n').to_string()));
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(samples)
}

fn cmd_score(args: ScoreArgs) -> deblur_core::Result<()> {
    let ocr_cmd = args
        .ocr_cmd
        .or_else(|| std::env::var("DEBLUR_OCR_CMD").ok())
        .ok_or(Error::MissingRecognizer)?;
    let registry = PipelineRegistry::load(&args.registry)?;
    let samples = load_score_samples(&args.dataset_dir, args.level)?;
    let report = evaluate_level(&samples, &registry, args.level, &ocr_cmd)?;
    let csv = report.to_csv();
    match &args.out {
        Some(path) => std::fs::write(path, &csv).map_err(|e| Error::io(path, e))?,
        None => print!("{csv}"),
    }
    println!(
        "mean={:.4} cleared={}",
        report.mean_score,
        u8::from(report.cleared)
    );
    Ok(())
}

fn cmd_diag(args: DiagArgs) -> deblur_core::Result<()> {
    let model = ForwardModel::load(&args.model)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;

    let chess = render_chessboard(args.height, args.width, args.rows, args.cols);
    let distorted = warp_image(
        &chess,
        &CoordMap::Forward(model.distortion.clone()),
        model.boundary,
    );
    let undistorted = warp_image(
        &distorted,
        &CoordMap::Inverse(model.distortion.clone()),
        model.boundary,
    );
    distorted.save_pgm(args.out_dir.join("chess_distorted.pgm"), BitDepth::Eight)?;
    undistorted.save_pgm(args.out_dir.join("chess_undistorted.pgm"), BitDepth::Eight)?;

    if let (Some(sharp_path), Some(observed_path)) = (&args.sharp, &args.observed) {
        let sharp = load_image(sharp_path)?;
        let observed = load_image(observed_path)?;
        let (residual, rmse) = model.residual(&sharp, &observed)?;
        // Linear stretch of [-max|r|, max|r|] onto [0,1]; zero residual
        // maps to mid-gray.
        let peak = residual
            .pixels()
            .iter()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max);
        let stretched = if peak == 0.0 {
            Image::filled(residual.height(), residual.width(), 0.5)
        } else {
            Image::new(
                residual.height(),
                residual.width(),
                residual
                    .pixels()
                    .iter()
                    .map(|v| (v + peak) / (2.0 * peak))
                    .collect(),
            )?
        };
        stretched.save_pgm(args.out_dir.join("residual.pgm"), BitDepth::Eight)?;
        println!("residual rmse {rmse:.6e}");
    }
    println!("diagnostics written to {}", args.out_dir.display());
    Ok(())
}

fn cmd_bench(args: BenchCommand) -> deblur_core::Result<()> {
    match args {
        BenchCommand::Recovery { case, noisy, out } => {
            let case = match case {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    BenchCase::parse(&text)?
                }
                None if noisy => BenchCase::recovery_noisy(),
                None => BenchCase::recovery_noiseless(),
            };
            let report = run_recovery_bench(&case)?;
            let csv = format!(
                "{}\n{}\n",
                RecoveryReport::csv_header(),
                report.to_csv_row()
            );
            match out {
                Some(path) => std::fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?,
                None => print!("{csv}"),
            }
            println!(
                "recovery {}: kernel err {:.4}, passed={}",
                report.case_name,
                report.kernel_rel_err,
                report.passed()
            );
            Ok(())
        }
        BenchCommand::Perf {
            height,
            width,
            sizes,
            out,
        } => {
            let sides: Vec<usize> = sizes
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::InvalidConfig(format!("bad kernel size {s:?}")))
                })
                .collect::<deblur_core::Result<_>>()?;
            let report = run_perf_bench((height, width), &sides)?;
            let csv = report.to_csv();
            match out {
                Some(path) => std::fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        BenchCommand::Misspec { case } => {
            let case = match case {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    BenchCase::parse(&text)?
                }
                None => BenchCase::recovery_noiseless(),
            };
            let (matched, plain) = run_misspecification_bench(&case)?;
            println!("matched_rmse={matched:.6e} plain_rmse={plain:.6e}");
            Ok(())
        }
    }
}
