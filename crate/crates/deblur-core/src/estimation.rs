//! Data-driven estimation of the blur kernel and radial distortion
//! coefficients from paired sharp/blurry images.
//!
//! The objective is the mean squared residual of the composed operator
//! over a batch,
//!
//! ```text
//! L(k, K) = 1/|batch| * sum_i | d[K](k * x_i) - y_i |_2^2 ,
//! ```
//!
//! minimized by Adam over mini-batches. Gradients are hand-derived:
//! the warp is linear in intensities, so the loss gradient with respect
//! to the convolved image is the warp's bilinear adjoint applied to the
//! scaled residual, and the kernel gradient is the cross-correlation of
//! that field with the input image. Coefficient and center gradients flow
//! through the interpolation coordinates, where the bilinear surface is
//! piecewise differentiable.

use rayon::prelude::*;

use crate::convolution::{convolve, fft2d, pad_with_boundary, Kernel};
use crate::distortion::{
    denormalize_point, distort_with_jacobian, normalize_coords, DistortionParams,
};
use crate::error::{Error, Result};
use crate::forward_model::ForwardModel;
use crate::image::{BoundaryCondition, Image};
use crate::rng::{derive_seed, rng_from_seed};

use rand::seq::SliceRandom;
use rustfft::num_complex::Complex64;

/// Paired sharp/blurry images, optionally with a point-target calibration
/// pair used for background removal.
#[derive(Debug, Clone)]
pub struct PairedDataset {
    pairs: Vec<(Image, Image)>,
    calibration: Option<(Image, Image)>,
}

impl PairedDataset {
    pub fn new(pairs: Vec<(Image, Image)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (first_sharp, _) = &pairs[0];
        for (sharp, blurry) in &pairs {
            first_sharp.expect_same_dims(sharp)?;
            first_sharp.expect_same_dims(blurry)?;
        }
        Ok(PairedDataset {
            pairs,
            calibration: None,
        })
    }

    pub fn with_calibration(mut self, sharp: Image, blurry: Image) -> Result<Self> {
        self.pairs[0].0.expect_same_dims(&sharp)?;
        self.pairs[0].0.expect_same_dims(&blurry)?;
        self.calibration = Some((sharp, blurry));
        Ok(self)
    }

    pub fn pairs(&self) -> &[(Image, Image)] {
        &self.pairs
    }

    pub fn calibration(&self) -> Option<&(Image, Image)> {
        self.calibration.as_ref()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.pairs[0].0.height(), self.pairs[0].0.width())
    }
}

/// Subtract the calibration backgrounds from every pair: `(x_i - x0,
/// y_i - y0)` with `(x0, y0)` the point-target pair.
pub fn remove_background(dataset: &PairedDataset) -> Result<PairedDataset> {
    let (x0, y0) = dataset.calibration().ok_or(Error::MissingCalibration)?;
    let pairs = dataset
        .pairs
        .iter()
        .map(|(x, y)| (pixel_sub(x, x0), pixel_sub(y, y0)))
        .collect();
    Ok(PairedDataset {
        pairs,
        calibration: dataset.calibration.clone(),
    })
}

fn pixel_sub(a: &Image, b: &Image) -> Image {
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

/// Kernel initialization for the optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelInit {
    Delta,
    GaussianBump { sigma: f64 },
}

/// Hyperparameters of the estimation loop.
#[derive(Debug, Clone)]
pub struct EstimationConfig {
    /// Odd kernel side; 701 captures the widest physical blur.
    pub kernel_side: usize,
    /// Number of radial coefficients to fit; 0 freezes the distortion at
    /// identity (convolution-only fit).
    pub coeff_count: usize,
    /// Also fit the distortion center instead of pinning it to the image
    /// center.
    pub learn_center: bool,
    pub kernel_lr: f64,
    pub coeff_lr: f64,
    /// Per-iteration multiplicative learning-rate decay (1.0 = constant).
    pub lr_decay: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub kernel_init: KernelInit,
    /// Project the kernel onto the nonnegative orthant after each step.
    pub nonnegative_kernel: bool,
    pub boundary: BoundaryCondition,
    /// Blur-level tag stored in the resulting model.
    pub level: u32,
    /// Noise variance stored in the resulting model.
    pub noise_variance: f64,
}

impl EstimationConfig {
    /// Defaults for a given kernel side: Gaussian bump initialization with
    /// `sigma = side / 8`, two radial coefficients, frozen center.
    pub fn new(kernel_side: usize) -> Self {
        EstimationConfig {
            kernel_side,
            coeff_count: 2,
            learn_center: false,
            kernel_lr: 1e-3,
            coeff_lr: 1e-4,
            lr_decay: 1.0,
            iterations: 1000,
            batch_size: 8,
            seed: 0,
            kernel_init: KernelInit::GaussianBump {
                sigma: kernel_side as f64 / 8.0,
            },
            nonnegative_kernel: false,
            boundary: BoundaryCondition::Reflexive,
            level: 0,
            noise_variance: crate::forward_model::DEFAULT_NOISE_VARIANCE,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kernel_side == 0 || self.kernel_side % 2 == 0 {
            return Err(Error::KernelSideEven(self.kernel_side));
        }
        if !(self.kernel_lr > 0.0 && self.coeff_lr > 0.0) {
            return Err(Error::InvalidConfig(
                "learning rates must be positive".into(),
            ));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidConfig("lr decay must lie in (0, 1]".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        if let KernelInit::GaussianBump { sigma } = self.kernel_init {
            if sigma <= 0.0 {
                return Err(Error::InvalidConfig("bump sigma must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Adam accumulator over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update; `rates` holds the per-parameter learning
    /// rate.
    pub fn apply(&mut self, params: &mut [f64], grads: &[f64], rates: &[f64]) {
        assert_eq!(params.len(), self.first_moment.len());
        assert_eq!(grads.len(), params.len());
        assert_eq!(rates.len(), params.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first_moment[i] / bc1;
            let v_hat = self.second_moment[i] / bc2;
            params[i] -= rates[i] * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Gradient of the batch loss with respect to every learnable parameter.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Kernel-shaped, row-major (`side * side` values).
    pub kernel: Vec<f64>,
    /// One value per radial coefficient.
    pub coeffs: Vec<f64>,
    /// Center gradient `(d/dx0, d/dy0)`.
    pub center: [f64; 2],
}

/// Batch loss `1/|batch| * sum_i |d[K](k * x_i) - y_i|^2`.
pub fn loss(
    kernel: &Kernel,
    params: &DistortionParams,
    batch: &[(Image, Image)],
    boundary: BoundaryCondition,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (x, y) in batch {
        x.expect_same_dims(y)?;
        total += pair_loss_and_grads(kernel, Some(params), x, y, boundary, false).loss;
    }
    Ok(total / batch.len() as f64)
}

/// Exact analytic gradient of [`loss`].
pub fn gradients(
    kernel: &Kernel,
    params: &DistortionParams,
    batch: &[(Image, Image)],
    boundary: BoundaryCondition,
) -> Result<Gradients> {
    loss_and_gradients(kernel, params, batch, boundary).map(|(_, g)| g)
}

/// Batch loss and gradients in a single pass. Pairs are evaluated in
/// parallel and reduced in index order, so the result is independent of
/// the thread count.
pub fn loss_and_gradients(
    kernel: &Kernel,
    params: &DistortionParams,
    batch: &[(Image, Image)],
    boundary: BoundaryCondition,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (x, y) in batch {
        x.expect_same_dims(y)?;
    }
    let per_pair: Vec<PairResult> = batch
        .par_iter()
        .map(|(x, y)| pair_loss_and_grads(kernel, Some(params), x, y, boundary, true))
        .collect();

    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut grad = Gradients {
        kernel: vec![0.0; kernel.weights().len()],
        coeffs: vec![0.0; params.order()],
        center: [0.0, 0.0],
    };
    for pr in per_pair {
        total += pr.loss;
        for (acc, g) in grad.kernel.iter_mut().zip(&pr.kernel_grad) {
            *acc += g * scale;
        }
        for (acc, g) in grad.coeffs.iter_mut().zip(&pr.coeff_grad) {
            *acc += g * scale;
        }
        grad.center[0] += pr.center_grad[0] * scale;
        grad.center[1] += pr.center_grad[1] * scale;
    }
    Ok((total * scale, grad))
}

struct PairResult {
    loss: f64,
    kernel_grad: Vec<f64>,
    coeff_grad: Vec<f64>,
    center_grad: [f64; 2],
}

/// Forward pass and (optionally) gradients for a single pair. `params ==
/// None` runs the convolution-only model with no distortion machinery.
fn pair_loss_and_grads(
    kernel: &Kernel,
    params: Option<&DistortionParams>,
    x: &Image,
    y: &Image,
    boundary: BoundaryCondition,
    with_grads: bool,
) -> PairResult {
    let m = x.height();
    let n = x.width();
    let q_count = params.map_or(0, |p| p.order());
    let z = convolve(x, kernel, boundary);

    let mut loss = 0.0;
    let mut coeff_grad = vec![0.0; q_count];
    let mut center_grad = [0.0, 0.0];
    // dL/dz, accumulated through the warp's bilinear adjoint.
    let mut z_bar = vec![0.0; m * n];

    match params {
        None => {
            for idx in 0..m * n {
                let r = z.pixels()[idx] - y.pixels()[idx];
                loss += r * r;
                if with_grads {
                    z_bar[idx] = 2.0 * r;
                }
            }
        }
        Some(params) => {
            let half = n as f64 / 2.0;
            for i in 0..m {
                for j in 0..n {
                    let p = normalize_coords((m, n), i, j);
                    let jac = distort_with_jacobian(params, p);
                    let (px, py) = denormalize_point((m, n), jac.point.0, jac.point.1);

                    // Bilinear gather in index space.
                    let a = px - 0.5;
                    let b = py - 0.5;
                    let j0 = a.floor();
                    let i0 = b.floor();
                    let tx = a - j0;
                    let ty = b - i0;
                    let j0 = j0 as isize;
                    let i0 = i0 as isize;

                    let idx00 = bounded_index(i0, j0, m, n, boundary);
                    let idx01 = bounded_index(i0, j0 + 1, m, n, boundary);
                    let idx10 = bounded_index(i0 + 1, j0, m, n, boundary);
                    let idx11 = bounded_index(i0 + 1, j0 + 1, m, n, boundary);
                    let z00 = idx00.map_or(0.0, |k| z.pixels()[k]);
                    let z01 = idx01.map_or(0.0, |k| z.pixels()[k]);
                    let z10 = idx10.map_or(0.0, |k| z.pixels()[k]);
                    let z11 = idx11.map_or(0.0, |k| z.pixels()[k]);

                    let w = (1.0 - ty) * ((1.0 - tx) * z00 + tx * z01)
                        + ty * ((1.0 - tx) * z10 + tx * z11);
                    let r = w - y.get(i, j);
                    loss += r * r;

                    if !with_grads {
                        continue;
                    }
                    let r2 = 2.0 * r;

                    // Adjoint scatter of the gather weights.
                    if let Some(k) = idx00 {
                        z_bar[k] += r2 * (1.0 - ty) * (1.0 - tx);
                    }
                    if let Some(k) = idx01 {
                        z_bar[k] += r2 * (1.0 - ty) * tx;
                    }
                    if let Some(k) = idx10 {
                        z_bar[k] += r2 * ty * (1.0 - tx);
                    }
                    if let Some(k) = idx11 {
                        z_bar[k] += r2 * ty * tx;
                    }

                    // Coordinate derivatives of the bilinear surface.
                    let ds_da = (1.0 - ty) * (z01 - z00) + ty * (z11 - z10);
                    let ds_db = (1.0 - tx) * (z10 - z00) + tx * (z11 - z01);

                    for q in 0..q_count {
                        let (dx, dy) = jac.coeff[q];
                        coeff_grad[q] += r2 * (ds_da * half * dx + ds_db * half * dy);
                    }
                    for axis in 0..2 {
                        let (dx, dy) = jac.center[axis];
                        center_grad[axis] += r2 * (ds_da * half * dx + ds_db * half * dy);
                    }
                }
            }
        }
    }

    let kernel_grad = if with_grads {
        correlate_with_kernel_support(x, &z_bar, kernel.side(), boundary)
    } else {
        Vec::new()
    };

    PairResult {
        loss,
        kernel_grad,
        coeff_grad,
        center_grad,
    }
}

#[inline]
fn bounded_index(
    i: isize,
    j: isize,
    m: usize,
    n: usize,
    boundary: BoundaryCondition,
) -> Option<usize> {
    match (boundary.map_index(i, m), boundary.map_index(j, n)) {
        (Some(ii), Some(jj)) => Some(ii * n + jj),
        _ => None,
    }
}

/// Cross-correlation of the boundary-embedded input with a sensitivity
/// field, restricted to kernel lags: `out[a, b] = sum_{i,j} g[i,j] *
/// x_emb[i + a - r, j + b - r]`. Routes through the FFT for large kernels.
fn correlate_with_kernel_support(
    x: &Image,
    g: &[f64],
    side: usize,
    boundary: BoundaryCondition,
) -> Vec<f64> {
    if side <= 15 {
        correlate_direct(x, g, side, boundary)
    } else {
        correlate_fft(x, g, side, boundary)
    }
}

fn correlate_direct(x: &Image, g: &[f64], side: usize, boundary: BoundaryCondition) -> Vec<f64> {
    let m = x.height();
    let n = x.width();
    let r = (side / 2) as isize;
    let mut out = vec![0.0; side * side];
    for (idx, gv) in g.iter().enumerate() {
        if *gv == 0.0 {
            continue;
        }
        let i = (idx / n) as isize;
        let j = (idx % n) as isize;
        let safe = i >= r && i + r < m as isize && j >= r && j + r < n as isize;
        let mut t = 0;
        if safe {
            for h in -r..=r {
                let row = ((i + h) as usize) * n;
                for l in -r..=r {
                    out[t] += gv * x.pixels()[row + (j + l) as usize];
                    t += 1;
                }
            }
        } else {
            for h in -r..=r {
                for l in -r..=r {
                    out[t] += gv * x.get_bounded(i + h, j + l, boundary);
                    t += 1;
                }
            }
        }
    }
    out
}

/// FFT path: pad the input with the boundary fill, zero-embed the
/// sensitivity field on the padded grid, and read the circular
/// cross-correlation at kernel lags.
fn correlate_fft(x: &Image, g: &[f64], side: usize, boundary: BoundaryCondition) -> Vec<f64> {
    let m = x.height();
    let n = x.width();
    let r = side / 2;
    let padded = pad_with_boundary(x, r, boundary);
    let pm = padded.height();
    let pn = padded.width();

    let mut fx: Vec<Complex64> = padded
        .pixels()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft2d(&mut fx, pm, pn, false);

    let mut fg = vec![Complex64::new(0.0, 0.0); pm * pn];
    for i in 0..m {
        for j in 0..n {
            fg[i * pn + j] = Complex64::new(g[i * n + j], 0.0);
        }
    }
    fft2d(&mut fg, pm, pn, false);

    for (a, b) in fx.iter_mut().zip(&fg) {
        *a *= b.conj();
    }
    fft2d(&mut fx, pm, pn, true);

    let mut out = vec![0.0; side * side];
    for a in 0..side {
        for b in 0..side {
            out[a * side + b] = fx[a * pn + b].re;
        }
    }
    out
}

/// Fit the forward operator to the dataset with Adam; returns the model
/// (with calibration backgrounds attached, if present) and the
/// per-iteration batch loss trace.
pub fn estimate(
    dataset: &PairedDataset,
    config: &EstimationConfig,
) -> Result<(ForwardModel, Vec<f64>)> {
    config.validate()?;
    let working = if dataset.calibration().is_some() {
        remove_background(dataset)?
    } else {
        dataset.clone()
    };
    let pairs = working.pairs();

    let mut kernel = match config.kernel_init {
        KernelInit::Delta => Kernel::delta(config.kernel_side)?,
        KernelInit::GaussianBump { sigma } => Kernel::gaussian(config.kernel_side, sigma)?,
    };
    let mut coeffs = vec![0.0; config.coeff_count];
    let mut center = (0.0, 0.0);

    let kernel_len = kernel.weights().len();
    let center_len = if config.learn_center { 2 } else { 0 };
    let param_len = kernel_len + config.coeff_count + center_len;
    let mut adam = AdamState::new(param_len);
    let mut rates = vec![config.kernel_lr; kernel_len];
    rates.extend(std::iter::repeat(config.coeff_lr).take(config.coeff_count + center_len));

    let mut shuffle_rng = rng_from_seed(derive_seed(config.seed, 0x6261_7463_68));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut cursor = pairs.len(); // force an initial shuffle
    let mut trace = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        let mut batch: Vec<(Image, Image)> = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size.min(pairs.len()) {
            if cursor >= order.len() {
                order.shuffle(&mut shuffle_rng);
                cursor = 0;
            }
            batch.push(pairs[order[cursor]].clone());
            cursor += 1;
        }

        let params = if config.coeff_count == 0 {
            None
        } else {
            Some(DistortionParams::new(center, coeffs.clone())?)
        };

        let per_pair: Vec<PairResult> = batch
            .par_iter()
            .map(|(x, y)| {
                pair_loss_and_grads(&kernel, params.as_ref(), x, y, config.boundary, true)
            })
            .collect();
        let scale = 1.0 / batch.len() as f64;
        let mut batch_loss = 0.0;
        let mut grad = vec![0.0; param_len];
        for pr in per_pair {
            batch_loss += pr.loss * scale;
            for (acc, g) in grad[..kernel_len].iter_mut().zip(&pr.kernel_grad) {
                *acc += g * scale;
            }
            for (acc, g) in grad[kernel_len..kernel_len + config.coeff_count]
                .iter_mut()
                .zip(&pr.coeff_grad)
            {
                *acc += g * scale;
            }
            if config.learn_center {
                grad[kernel_len + config.coeff_count] += pr.center_grad[0] * scale;
                grad[kernel_len + config.coeff_count + 1] += pr.center_grad[1] * scale;
            }
        }

        if !batch_loss.is_finite() {
            return Err(Error::EstimationDiverged { iteration, trace });
        }
        trace.push(batch_loss);

        let mut flat = Vec::with_capacity(param_len);
        flat.extend_from_slice(kernel.weights());
        flat.extend_from_slice(&coeffs);
        if config.learn_center {
            flat.push(center.0);
            flat.push(center.1);
        }
        adam.apply(&mut flat, &grad, &rates);
        if config.lr_decay < 1.0 {
            for r in &mut rates {
                *r *= config.lr_decay;
            }
        }

        if config.nonnegative_kernel {
            for w in &mut flat[..kernel_len] {
                if *w < 0.0 {
                    *w = 0.0;
                }
            }
        }

        kernel = Kernel::new(config.kernel_side, flat[..kernel_len].to_vec())?;
        coeffs.copy_from_slice(&flat[kernel_len..kernel_len + config.coeff_count]);
        if config.learn_center {
            center = (
                flat[kernel_len + config.coeff_count].clamp(-1.0, 1.0),
                flat[kernel_len + config.coeff_count + 1].clamp(-1.0, 1.0),
            );
        }
    }

    let distortion = if config.coeff_count == 0 {
        DistortionParams::identity()
    } else {
        DistortionParams::new(center, coeffs)?
    };
    let mut model = ForwardModel::new(kernel, distortion, config.boundary, config.level)?
        .with_noise_variance(config.noise_variance)?;
    if let Some((x0, y0)) = dataset.calibration() {
        model = model.with_backgrounds(x0.clone(), y0.clone())?;
    }
    Ok((model, trace))
}
