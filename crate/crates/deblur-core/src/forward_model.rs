//! The composed physical blur operator: background removal, convolution
//! with the blur kernel, radial distortion, background re-addition, and
//! an amplitude-dependent Gaussian noise model.
//!
//! `apply` computes `d[K](k * (x - x0)) + y0` where the optional
//! backgrounds `x0`/`y0` come from a point-target calibration pair and
//! absent backgrounds are treated as zero. Noise is added separately as
//! `y = y~ * (1 + eta)` with `eta ~ N(0, variance)` per pixel.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::convolution::{convolve, read_f64_le, read_u32_le, Kernel};
use crate::distortion::{warp_image, CoordMap, DistortionParams};
use crate::error::{Error, Result};
use crate::image::{BitDepth, BoundaryCondition, Image};
use crate::rng::rng_from_seed;

/// Estimated physical blur operator for one blur level.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub kernel: Kernel,
    pub distortion: DistortionParams,
    pub sharp_background: Option<Image>,
    pub blurred_background: Option<Image>,
    pub noise_variance: f64,
    pub boundary: BoundaryCondition,
    pub level: u32,
}

/// Default per-pixel noise variance of the synthetic data stream.
pub const DEFAULT_NOISE_VARIANCE: f64 = 0.001;

impl ForwardModel {
    pub fn new(
        kernel: Kernel,
        distortion: DistortionParams,
        boundary: BoundaryCondition,
        level: u32,
    ) -> Result<Self> {
        if level > 19 {
            return Err(Error::InvalidConfig(format!(
                "blur level {level} outside 0..=19"
            )));
        }
        Ok(ForwardModel {
            kernel,
            distortion,
            sharp_background: None,
            blurred_background: None,
            noise_variance: DEFAULT_NOISE_VARIANCE,
            boundary,
            level,
        })
    }

    /// Identity operator: delta kernel, zero distortion, no noise.
    pub fn identity(level: u32) -> Self {
        ForwardModel {
            kernel: Kernel::delta(1).expect("delta kernel"),
            distortion: DistortionParams::identity(),
            sharp_background: None,
            blurred_background: None,
            noise_variance: 0.0,
            boundary: BoundaryCondition::Reflexive,
            level,
        }
    }

    pub fn with_backgrounds(mut self, sharp: Image, blurred: Image) -> Result<Self> {
        sharp.expect_same_dims(&blurred)?;
        self.sharp_background = Some(sharp);
        self.blurred_background = Some(blurred);
        Ok(self)
    }

    pub fn with_noise_variance(mut self, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise variance must be nonnegative, got {variance}"
            )));
        }
        self.noise_variance = variance;
        self.check_level().map(|_| self)
    }

    fn check_level(&self) -> Result<()> {
        if self.level > 19 {
            return Err(Error::InvalidConfig(format!(
                "blur level {} outside 0..=19",
                self.level
            )));
        }
        Ok(())
    }

    /// Apply the noiseless operator: `d[K](k * (sharp - x0)) + y0`.
    pub fn apply(&self, sharp: &Image) -> Result<Image> {
        if let Some(bg) = &self.sharp_background {
            sharp.expect_same_dims(bg)?;
        }
        if let Some(bg) = &self.blurred_background {
            sharp.expect_same_dims(bg)?;
        }

        let working = match &self.sharp_background {
            Some(bg) => subtract(sharp, bg),
            None => sharp.clone(),
        };
        let blurred = convolve(&working, &self.kernel, self.boundary);
        let distorted = if self.distortion.is_identity() {
            blurred
        } else {
            warp_image(
                &blurred,
                &CoordMap::Forward(self.distortion.clone()),
                self.boundary,
            )
        };
        Ok(match &self.blurred_background {
            Some(bg) => add(&distorted, bg),
            None => distorted,
        })
    }

    /// Residual image `observed - apply(sharp)` and its root mean square.
    pub fn residual(&self, sharp: &Image, observed: &Image) -> Result<(Image, f64)> {
        sharp.expect_same_dims(observed)?;
        let predicted = self.apply(sharp)?;
        let diff = subtract(observed, &predicted);
        let rmse =
            (diff.pixels().iter().map(|v| v * v).sum::<f64>() / diff.pixels().len() as f64).sqrt();
        Ok((diff, rmse))
    }

    /// Serialize in the binary model format (magic `FMD1`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(b"FMD1")?;
        w.write_all(&self.level.to_le_bytes())?;
        w.write_all(&self.boundary.code().to_le_bytes())?;
        w.write_all(&self.noise_variance.to_le_bytes())?;
        self.distortion.write_to(w)?;
        self.kernel.write_to(w)?;
        for bg in [&self.sharp_background, &self.blurred_background] {
            match bg {
                Some(img) => {
                    w.write_all(&[1u8])?;
                    img.write_pgm(w, BitDepth::Sixteen)?;
                }
                None => w.write_all(&[0u8])?,
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ForwardModel> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        ForwardModel::read_from(&mut r)
    }

    fn read_from(r: &mut impl std::io::BufRead) -> Result<ForwardModel> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| Error::Format(format!("truncated model file: {e}")))?;
        if &magic != b"FMD1" {
            return Err(Error::Format(format!(
                "bad model magic {:?}",
                String::from_utf8_lossy(&magic)
            )));
        }
        let level = read_u32_le(r)?;
        let boundary = BoundaryCondition::from_code(read_u32_le(r)?)?;
        let noise_variance = read_f64_le(r)?;
        let distortion = DistortionParams::read_from(r)?;
        let kernel = Kernel::read_from(r)?;
        let mut backgrounds = [None, None];
        for slot in &mut backgrounds {
            let mut flag = [0u8; 1];
            r.read_exact(&mut flag)
                .map_err(|e| Error::Format(format!("truncated background flag: {e}")))?;
            if flag[0] == 1 {
                *slot = Some(Image::read_pgm(r)?);
            } else if flag[0] != 0 {
                return Err(Error::Format(format!(
                    "invalid background flag byte {}",
                    flag[0]
                )));
            }
        }
        let [sharp_background, blurred_background] = backgrounds;
        let model = ForwardModel {
            kernel,
            distortion,
            sharp_background,
            blurred_background,
            noise_variance,
            boundary,
            level,
        };
        model.check_level()?;
        if !(model.noise_variance.is_finite() && model.noise_variance >= 0.0) {
            return Err(Error::Format(format!(
                "invalid noise variance {}",
                model.noise_variance
            )));
        }
        Ok(model)
    }
}

/// Variance and seed of one noise draw.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub variance: f64,
    pub seed: u64,
}

/// Amplitude-dependent Gaussian noise: `y = v * (1 + eta)` per pixel with
/// `eta ~ N(0, variance)`. Deterministic for a fixed seed.
pub fn add_noise(blurry: &Image, spec: &NoiseSpec) -> Image {
    assert!(
        spec.variance.is_finite() && spec.variance >= 0.0,
        "noise variance must be nonnegative"
    );
    if spec.variance == 0.0 {
        return blurry.clone();
    }
    let normal = Normal::new(0.0, spec.variance.sqrt()).expect("valid std");
    let mut rng = rng_from_seed(spec.seed);
    let data = blurry
        .pixels()
        .iter()
        .map(|&v| v * (1.0 + normal.sample(&mut rng)))
        .collect();
    Image::new(blurry.height(), blurry.width(), data).expect("noisy image is finite")
}

/// Draw a noise field only (for diagnostics): `eta ~ N(0, variance)`.
pub fn noise_field(height: usize, width: usize, spec: &NoiseSpec) -> Image {
    let normal = Normal::new(0.0, spec.variance.sqrt()).expect("valid std");
    let mut rng = rng_from_seed(spec.seed);
    let data = (0..height * width).map(|_| rng.sample(normal)).collect();
    Image::new(height, width, data).expect("noise field is finite")
}

fn subtract(a: &Image, b: &Image) -> Image {
    debug_assert!(a.same_dims(b));
    Image::new(
        a.height(),
        a.width(),
        a.pixels()
            .iter()
            .zip(b.pixels())
            .map(|(x, y)| x - y)
            .collect(),
    )
    .expect("difference is finite")
}

fn add(a: &Image, b: &Image) -> Image {
    debug_assert!(a.same_dims(b));
    Image::new(
        a.height(),
        a.width(),
        a.pixels()
            .iter()
            .zip(b.pixels())
            .map(|(x, y)| x + y)
            .collect(),
    )
    .expect("sum is finite")
}
