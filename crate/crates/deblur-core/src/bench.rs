//! Desk-scale benchmark harnesses: synthetic model recovery against fixed
//! thresholds, misspecification comparison, and direct-vs-FFT convolution
//! timing.

use std::time::Instant;

use crate::convolution::{convolve_direct, convolve_fft, Kernel};
use crate::data_synth::{random_text, render_text_image, FontId, TextSpec};
use crate::distortion::DistortionParams;
use crate::error::{Error, Result};
use crate::estimation::{estimate, EstimationConfig, PairedDataset};
use crate::forward_model::{add_noise, ForwardModel, NoiseSpec};
use crate::image::{BoundaryCondition, Image};
use crate::rng::derive_seed;

/// One synthetic recovery case: ground-truth generator parameters,
/// estimation budget, and pass thresholds (fixed up front, in the same
/// units as the measured quantities).
#[derive(Debug, Clone)]
pub struct BenchCase {
    pub name: String,
    pub dims: (usize, usize),
    pub kernel_side: usize,
    pub kernel_sigma: f64,
    pub coeffs: Vec<f64>,
    pub noise_variance: f64,
    pub pair_count: usize,
    pub seed: u64,
    pub iterations: usize,
    pub kernel_lr: f64,
    pub coeff_lr: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    /// Number of radial coefficients the *estimator* fits (0 recovers a
    /// convolution-only model).
    pub fit_coeff_count: usize,
    /// Threshold on the kernel's relative L2 error.
    pub max_kernel_rel_err: f64,
    /// Threshold on each coefficient's relative error.
    pub max_coeff_rel_err: f64,
}

impl BenchCase {
    /// The noiseless recovery benchmark: 7x7 Gaussian kernel,
    /// coefficients (0.02, -0.005), 50 pairs of 128x128 text renders.
    pub fn recovery_noiseless() -> BenchCase {
        BenchCase {
            name: "recovery_noiseless".into(),
            dims: (128, 128),
            kernel_side: 7,
            kernel_sigma: 1.0,
            coeffs: vec![0.02, -0.005],
            noise_variance: 0.0,
            pair_count: 50,
            seed: 2021,
            iterations: 2500,
            kernel_lr: 3e-3,
            coeff_lr: 1e-3,
            lr_decay: 0.998,
            batch_size: 8,
            fit_coeff_count: 2,
            max_kernel_rel_err: 0.05,
            max_coeff_rel_err: 0.10,
        }
    }

    /// Same generator with the noise model at variance 0.001; the kernel
    /// threshold relaxes to 10%.
    pub fn recovery_noisy() -> BenchCase {
        BenchCase {
            name: "recovery_noisy".into(),
            noise_variance: 0.001,
            max_kernel_rel_err: 0.10,
            ..BenchCase::recovery_noiseless()
        }
    }

    /// Parse the line-oriented `key=value` case format.
    pub fn parse(text: &str) -> Result<BenchCase> {
        let mut case = BenchCase::recovery_noiseless();
        let mut k1 = case.coeffs[0];
        let mut k2 = case.coeffs[1];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: expected key=value", lineno + 1)))?;
            let bad = |k: &str| Error::Format(format!("line {}: bad value for {k}", lineno + 1));
            match key.trim() {
                "name" => case.name = value.trim().to_string(),
                "height" => case.dims.0 = value.trim().parse().map_err(|_| bad(key))?,
                "width" => case.dims.1 = value.trim().parse().map_err(|_| bad(key))?,
                "kernel_side" => case.kernel_side = value.trim().parse().map_err(|_| bad(key))?,
                "kernel_sigma" => case.kernel_sigma = value.trim().parse().map_err(|_| bad(key))?,
                "k1" => k1 = value.trim().parse().map_err(|_| bad(key))?,
                "k2" => k2 = value.trim().parse().map_err(|_| bad(key))?,
                "noise_variance" => {
                    case.noise_variance = value.trim().parse().map_err(|_| bad(key))?
                }
                "pairs" => case.pair_count = value.trim().parse().map_err(|_| bad(key))?,
                "seed" => case.seed = value.trim().parse().map_err(|_| bad(key))?,
                "iterations" => case.iterations = value.trim().parse().map_err(|_| bad(key))?,
                "kernel_lr" => case.kernel_lr = value.trim().parse().map_err(|_| bad(key))?,
                "coeff_lr" => case.coeff_lr = value.trim().parse().map_err(|_| bad(key))?,
                "lr_decay" => case.lr_decay = value.trim().parse().map_err(|_| bad(key))?,
                "batch_size" => case.batch_size = value.trim().parse().map_err(|_| bad(key))?,
                "fit_coeff_count" => {
                    case.fit_coeff_count = value.trim().parse().map_err(|_| bad(key))?
                }
                "max_kernel_rel_err" => {
                    case.max_kernel_rel_err = value.trim().parse().map_err(|_| bad(key))?
                }
                "max_coeff_rel_err" => {
                    case.max_coeff_rel_err = value.trim().parse().map_err(|_| bad(key))?
                }
                other => return Err(Error::Format(format!("unknown case key {other:?}"))),
            }
        }
        case.coeffs = vec![k1, k2];
        Ok(case)
    }

    fn true_model(&self) -> Result<ForwardModel> {
        let kernel = Kernel::gaussian(self.kernel_side, self.kernel_sigma)?;
        let distortion = DistortionParams::new((0.0, 0.0), self.coeffs.clone())?;
        ForwardModel::new(kernel, distortion, BoundaryCondition::Reflexive, 0)?
            .with_noise_variance(self.noise_variance)
    }

    /// Text spec whose glyph grid fills the case's canvas, so distortion
    /// signal reaches every radius.
    fn text_spec(&self) -> TextSpec {
        TextSpec {
            charset: crate::data_synth::DEFAULT_CHARSET.to_string(),
            min_len: 70,
            max_len: 70,
            lines: 7,
            font: FontId::Builtin,
            glyph_height: 14,
        }
    }

    /// Generate the paired dataset from the ground-truth model.
    pub fn generate(&self) -> Result<PairedDataset> {
        let model = self.true_model()?;
        let spec = self.text_spec();
        let mut pairs = Vec::with_capacity(self.pair_count);
        for i in 0..self.pair_count {
            let sample_seed = derive_seed(self.seed, 100 + i as u64);
            let text = random_text(&spec, derive_seed(sample_seed, 1));
            let (sharp, _) = render_text_image(&text, &spec, self.dims)?;
            let clean = model.apply(&sharp)?;
            let blurry = if self.noise_variance > 0.0 {
                add_noise(
                    &clean,
                    &NoiseSpec {
                        variance: self.noise_variance,
                        seed: derive_seed(sample_seed, 2),
                    },
                )
            } else {
                clean
            };
            pairs.push((sharp, blurry));
        }
        PairedDataset::new(pairs)
    }

    fn estimation_config(&self) -> EstimationConfig {
        let mut config = EstimationConfig::new(self.kernel_side);
        config.coeff_count = self.fit_coeff_count;
        config.iterations = self.iterations;
        config.kernel_lr = self.kernel_lr;
        config.coeff_lr = self.coeff_lr;
        config.lr_decay = self.lr_decay;
        config.batch_size = self.batch_size;
        config.seed = derive_seed(self.seed, 7);
        config.boundary = BoundaryCondition::Reflexive;
        config
    }
}

/// Outcome of one recovery run.
#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub case_name: String,
    pub kernel_rel_err: f64,
    /// Relative error per true coefficient (empty when none were fitted).
    pub coeff_rel_errs: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub kernel_passed: bool,
    pub coeffs_passed: bool,
    pub elapsed_secs: f64,
}

impl RecoveryReport {
    pub fn passed(&self) -> bool {
        self.kernel_passed && self.coeffs_passed
    }

    pub fn csv_header() -> &'static str {
        "case,kernel_rel_err,coeff_rel_errs,initial_loss,final_loss,passed,elapsed_secs"
    }

    pub fn to_csv_row(&self) -> String {
        let coeffs = self
            .coeff_rel_errs
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(";");
        format!(
            "{},{:.6},{},{:.6e},{:.6e},{},{:.2}",
            self.case_name,
            self.kernel_rel_err,
            coeffs,
            self.initial_loss,
            self.final_loss,
            u8::from(self.passed()),
            self.elapsed_secs
        )
    }
}

/// Generate data from the case's ground-truth model, run the estimator,
/// and report recovery errors against the case thresholds. Failures are
/// reported, not thrown.
pub fn run_recovery_bench(case: &BenchCase) -> Result<RecoveryReport> {
    let start = Instant::now();
    let dataset = case.generate()?;
    let true_kernel = Kernel::gaussian(case.kernel_side, case.kernel_sigma)?;
    let (model, trace) = estimate(&dataset, &case.estimation_config())?;

    let kernel_rel_err = model.kernel.relative_l2_error(&true_kernel);
    let coeff_rel_errs: Vec<f64> = if case.fit_coeff_count == 0 {
        Vec::new()
    } else {
        case.coeffs
            .iter()
            .zip(model.distortion.coeffs())
            .map(|(truth, est)| (est - truth).abs() / truth.abs().max(1e-12))
            .collect()
    };

    Ok(RecoveryReport {
        case_name: case.name.clone(),
        kernel_rel_err,
        coeff_rel_errs: coeff_rel_errs.clone(),
        initial_loss: trace.first().copied().unwrap_or(f64::NAN),
        final_loss: trace.last().copied().unwrap_or(f64::NAN),
        kernel_passed: kernel_rel_err < case.max_kernel_rel_err,
        coeffs_passed: coeff_rel_errs.iter().all(|e| *e < case.max_coeff_rel_err),
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Fit the same distortion-generated data twice, once with the matched
/// model class and once convolution-only, and return the mean residual
/// rmse of each fit over the whole dataset. The misspecified fit cannot
/// express the radial warp, so its residual stays strictly larger.
pub fn run_misspecification_bench(case: &BenchCase) -> Result<(f64, f64)> {
    let dataset = case.generate()?;

    let matched_cfg = case.estimation_config();
    let mut plain_cfg = case.estimation_config();
    plain_cfg.coeff_count = 0;

    let (matched, _) = estimate(&dataset, &matched_cfg)?;
    let (plain, _) = estimate(&dataset, &plain_cfg)?;

    let mean_rmse = |model: &ForwardModel| -> Result<f64> {
        let mut acc = 0.0;
        for (x, y) in dataset.pairs() {
            acc += model.residual(x, y)?.1;
        }
        Ok(acc / dataset.pairs().len() as f64)
    };
    Ok((mean_rmse(&matched)?, mean_rmse(&plain)?))
}

/// One row of the convolution timing table.
#[derive(Debug, Clone)]
pub struct PerfRow {
    pub kernel_side: usize,
    pub direct_ms: f64,
    pub fft_ms: f64,
}

/// Timing report for direct vs FFT convolution at one image size.
#[derive(Debug, Clone)]
pub struct PerfReport {
    pub dims: (usize, usize),
    pub rows: Vec<PerfRow>,
}

impl PerfReport {
    pub fn csv_header() -> &'static str {
        "height,width,kernel_side,direct_ms,fft_ms"
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::csv_header());
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.3},{:.3}\n",
                self.dims.0, self.dims.1, row.kernel_side, row.direct_ms, row.fft_ms
            ));
        }
        out
    }

    /// Whether the FFT path won for every kernel at or above the side
    /// where it is expected to dominate (31 at 512x512).
    pub fn fft_wins_from(&self, side: usize) -> bool {
        self.rows
            .iter()
            .filter(|r| r.kernel_side >= side)
            .all(|r| r.fft_ms < r.direct_ms)
    }
}

/// Median-of-three wall-clock timings of both convolution paths
/// (periodic boundary) for each kernel size.
pub fn run_perf_bench(dims: (usize, usize), kernel_sides: &[usize]) -> Result<PerfReport> {
    let (m, n) = dims;
    let image = Image::new(m, n, (0..m * n).map(|i| (i % 251) as f64 / 251.0).collect())?;
    let mut rows = Vec::with_capacity(kernel_sides.len());
    for &side in kernel_sides {
        let kernel = Kernel::gaussian(side, side as f64 / 6.0)?;
        let time_ms = |f: &dyn Fn() -> Image| -> f64 {
            let mut times = [0.0f64; 3];
            for t in &mut times {
                let start = Instant::now();
                let out = f();
                *t = start.elapsed().as_secs_f64() * 1e3;
                std::hint::black_box(out);
            }
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            times[1]
        };
        let direct_ms = time_ms(&|| convolve_direct(&image, &kernel, BoundaryCondition::Periodic));
        let fft_ms = time_ms(&|| convolve_fft(&image, &kernel).expect("kernel fits"));
        rows.push(PerfRow {
            kernel_side: side,
            direct_ms,
            fft_ms,
        });
    }
    Ok(PerfReport { dims, rows })
}
