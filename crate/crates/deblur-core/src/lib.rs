//! Physical blur modeling and deblurring for out-of-focus text images.
//!
//! The toolkit models the blur process as a spatially invariant
//! convolution composed with a radial lens distortion, estimates the
//! operator's parameters (kernel and distortion coefficients) from paired
//! sharp/blurry images by gradient descent, generates synthetic training
//! data streams with that operator, and deblurs images through an
//! undistort-then-deconvolve pipeline with classical variational
//! reconstructors. A Levenshtein-based OCR score harness evaluates
//! reconstructions against ground-truth strings.
//!
//! Modules:
//! - [`image`]: grayscale raster type, PGM I/O, sampling, cropping
//! - [`convolution`]: direct and FFT convolution, BCCB spectrum
//! - [`distortion`]: radial distortion, division-model inverse, warping
//! - [`forward_model`]: the composed operator with backgrounds and noise
//! - [`estimation`]: data-driven operator fitting with Adam
//! - [`data_synth`]: random-text rendering and synthetic sample streams
//! - [`reconstruction`]: undistortion preprocessing, Tikhonov and TV
//!   deconvolution, external reconstructor hook
//! - [`scoring`]: edit distance, OCR score, level evaluation
//! - [`bench`]: recovery and performance harnesses

pub mod bench;
pub mod convolution;
pub mod data_synth;
pub mod distortion;
pub mod error;
pub mod estimation;
pub mod forward_model;
pub mod image;
pub mod reconstruction;
pub mod rng;
pub mod scoring;

pub use bench::{
    run_misspecification_bench, run_perf_bench, run_recovery_bench, BenchCase, PerfReport,
    RecoveryReport,
};
pub use convolution::{bccb_spectrum, convolve, convolve_direct, convolve_fft, Kernel, Spectrum};
pub use data_synth::{
    random_text, render_text_image, sanity_patchwork, stream, synth_hdc_pair, Sample,
    SampleCategory, StreamConfig, TextSpec,
};
pub use distortion::{
    distort_coords, normalize_coords, render_chessboard, undistort_coords, warp_image, CoordMap,
    DistortionParams,
};
pub use error::{Error, Result};
pub use estimation::{
    estimate, gradients, loss, remove_background, AdamState, EstimationConfig, KernelInit,
    PairedDataset,
};
pub use forward_model::{add_noise, ForwardModel, NoiseSpec};
pub use image::{load_image, psnr, save_image, BitDepth, BoundaryCondition, Image};
pub use reconstruction::{
    deblur, tikhonov_deconvolve, tv_deconvolve, undistort_preprocess, PipelineRegistry,
    Reconstructor,
};
pub use rng::{derive_seed, rng_from_seed, DeblurRng, RNG_ALGORITHM};
pub use scoring::{
    evaluate_level, levenshtein, ocr_score, recognize, ScoreReport, CLEARING_THRESHOLD,
};

/// Cap the size of the internal worker-thread pool. Call once, before
/// any parallel work; 0 keeps the machine default. Parallel reductions
/// are ordered, so results do not depend on this setting.
pub fn set_thread_cap(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}
