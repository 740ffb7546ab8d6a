//! Deblurring pipeline: inverse-distortion preprocessing followed by a
//! reconstructor (Tikhonov spectral filtering, total-variation
//! minimization, or an external command), dispatched per blur level.
//!
//! Tikhonov solves `min 1/2 |Bx - y|^2 + lambda/2 |x|^2` in closed form
//! in the DFT basis of the periodic operator. To suppress wrap-around
//! ringing on photographic content the image is reflexively pre-padded by
//! the kernel radius, solved periodically, and cropped; the `edge_pad`
//! flag disables that.
//!
//! TV minimizes `1/2 |Bx - y|^2 + lambda |Wx|_1` (anisotropic, forward
//! differences with reflexive boundary) by monotone proximal gradient:
//! each step takes an explicit gradient step on the data term, applies
//! the TV proximal map (computed by projected gradient on its dual), and
//! backtracks the step size until the composite objective does not
//! increase, so the objective trace is nonincreasing by construction.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use rustfft::num_complex::Complex64;

use crate::convolution::{bccb_spectrum, fft2d, pad_with_boundary, Kernel};
use crate::distortion::{warp_image, CoordMap, DistortionParams};
use crate::error::{Error, Result};
use crate::forward_model::ForwardModel;
use crate::image::{BitDepth, BoundaryCondition, Image};

/// Approximately invert the radial distortion of a blurry image.
pub fn undistort_preprocess(
    blurry: &Image,
    params: &DistortionParams,
    boundary: BoundaryCondition,
) -> Image {
    if params.is_identity() {
        return blurry.clone();
    }
    warp_image(blurry, &CoordMap::Inverse(params.clone()), boundary)
}

/// Tikhonov deconvolution with reflexive edge padding (the default).
pub fn tikhonov_deconvolve(blurry: &Image, kernel: &Kernel, lambda: f64) -> Result<Image> {
    tikhonov_deconvolve_with_options(blurry, kernel, lambda, true)
}

/// Tikhonov deconvolution, optionally without the edge padding (pure
/// periodic solve on the input extent).
pub fn tikhonov_deconvolve_with_options(
    blurry: &Image,
    kernel: &Kernel,
    lambda: f64,
    edge_pad: bool,
) -> Result<Image> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tikhonov lambda must be nonnegative, got {lambda}"
        )));
    }
    if !edge_pad {
        return tikhonov_periodic(blurry, kernel, lambda);
    }
    let pad = kernel.radius();
    if pad == 0 {
        return tikhonov_periodic(blurry, kernel, lambda);
    }
    let padded = pad_with_boundary(blurry, pad, BoundaryCondition::Reflexive);
    let solved = tikhonov_periodic(&padded, kernel, lambda)?;
    solved.crop(pad, pad, blurry.height(), blurry.width())
}

/// Closed-form spectral solve of the periodic normal equations:
/// `x = IDFT( conj(H) Y / (|H|^2 + lambda) )`.
fn tikhonov_periodic(blurry: &Image, kernel: &Kernel, lambda: f64) -> Result<Image> {
    let m = blurry.height();
    let n = blurry.width();
    let spectrum = bccb_spectrum(kernel, m, n)?;
    if lambda == 0.0 {
        let min_mag = spectrum.min_magnitude();
        if min_mag < 1e-12 {
            return Err(Error::IllPosed { min_mag });
        }
    }
    let mut buf: Vec<Complex64> = blurry
        .pixels()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft2d(&mut buf, m, n, false);
    for (v, h) in buf.iter_mut().zip(spectrum.values()) {
        *v = h.conj() * *v / (h.norm_sqr() + lambda);
    }
    fft2d(&mut buf, m, n, true);
    Image::new(m, n, buf.iter().map(|c| c.re).collect())
}

/// Anisotropic total variation `sum |Wx|` with forward differences and
/// reflexive boundary (zero difference across the last row/column).
pub fn tv_seminorm(x: &Image) -> f64 {
    let m = x.height();
    let n = x.width();
    let mut acc = 0.0;
    for i in 0..m {
        for j in 0..n {
            let v = x.get(i, j);
            if i + 1 < m {
                acc += (x.get(i + 1, j) - v).abs();
            }
            if j + 1 < n {
                acc += (x.get(i, j + 1) - v).abs();
            }
        }
    }
    acc
}

/// TV deconvolution; returns the final iterate.
pub fn tv_deconvolve(
    blurry: &Image,
    kernel: &Kernel,
    lambda: f64,
    iterations: usize,
    step: f64,
) -> Result<Image> {
    tv_deconvolve_traced(blurry, kernel, lambda, iterations, step).map(|(img, _)| img)
}

/// TV deconvolution returning the per-iteration objective trace (the
/// initial objective first, then one value per iteration). The trace is
/// nonincreasing: candidate steps that would raise the objective are
/// rejected and the step size halved.
pub fn tv_deconvolve_traced(
    blurry: &Image,
    kernel: &Kernel,
    lambda: f64,
    iterations: usize,
    step: f64,
) -> Result<(Image, Vec<f64>)> {
    if !(lambda.is_finite() && lambda >= 0.0) || iterations == 0 || !(step > 0.0) {
        return Err(Error::InvalidConfig(
            "tv needs lambda >= 0, iterations >= 1, step > 0".into(),
        ));
    }
    let m = blurry.height();
    let n = blurry.width();
    let spectrum = bccb_spectrum(kernel, m, n)?;

    let apply_b = |x: &[f64], conj: bool| -> Vec<f64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft2d(&mut buf, m, n, false);
        for (v, h) in buf.iter_mut().zip(spectrum.values()) {
            *v *= if conj { h.conj() } else { *h };
        }
        fft2d(&mut buf, m, n, true);
        buf.iter().map(|c| c.re).collect()
    };

    let objective = |x: &Image| -> f64 {
        let bx = apply_b(x.pixels(), false);
        let data: f64 = bx
            .iter()
            .zip(blurry.pixels())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        0.5 * data + lambda * tv_seminorm(x)
    };

    let mut x = blurry.clone();
    let mut tau = step;
    // Dual variables of the TV prox, warm-started across outer iterations.
    let mut dual = vec![0.0; 2 * m * n];
    let mut trace = Vec::with_capacity(iterations + 1);
    let mut f_x = objective(&x);
    trace.push(f_x);

    for iteration in 0..iterations {
        // Gradient of the data term: B^T (B x - y).
        let bx = apply_b(x.pixels(), false);
        let resid: Vec<f64> = bx.iter().zip(blurry.pixels()).map(|(a, b)| a - b).collect();
        let grad = apply_b(&resid, true);

        let mut accepted = false;
        for _ in 0..30 {
            let forward: Vec<f64> = x
                .pixels()
                .iter()
                .zip(&grad)
                .map(|(v, g)| v - tau * g)
                .collect();
            let mut dual_try = dual.clone();
            let prox = tv_prox(&forward, m, n, tau * lambda, &mut dual_try);
            let candidate =
                Image::new(m, n, prox).map_err(|_| Error::NonFiniteIterate { iteration })?;
            let f_cand = objective(&candidate);
            if !f_cand.is_finite() {
                return Err(Error::NonFiniteIterate { iteration });
            }
            if f_cand <= f_x {
                x = candidate;
                f_x = f_cand;
                dual = dual_try;
                accepted = true;
                break;
            }
            tau *= 0.5;
            if tau < 1e-18 {
                break;
            }
        }
        // A rejected step leaves the iterate (and objective) unchanged.
        let _ = accepted;
        trace.push(f_x);
    }

    Ok((x, trace))
}

/// Proximal map of `weight * |W . |_1` at `v`, via projected gradient on
/// the dual problem (50 inner iterations, step 1/8 = 1/|W|^2). `dual`
/// carries the warm-started dual variables (vertical then horizontal).
fn tv_prox(v: &[f64], m: usize, n: usize, weight: f64, dual: &mut [f64]) -> Vec<f64> {
    if weight <= 0.0 {
        return v.to_vec();
    }
    let (pv, ph) = dual.split_at_mut(m * n);
    let sigma = 0.125;
    let mut u = vec![0.0; m * n];
    for _ in 0..50 {
        // u = v - W^T p
        for i in 0..m {
            for j in 0..n {
                let idx = i * n + j;
                let mut acc = v[idx];
                // W^T contribution: divergence-like combination.
                if i + 1 < m {
                    acc += pv[idx];
                }
                if i > 0 {
                    acc -= pv[idx - n];
                }
                if j + 1 < n {
                    acc += ph[idx];
                }
                if j > 0 {
                    acc -= ph[idx - 1];
                }
                u[idx] = acc;
            }
        }
        // p member of box(weight): p <- clip(p + sigma * W u)
        for i in 0..m {
            for j in 0..n {
                let idx = i * n + j;
                if i + 1 < m {
                    let d = u[idx + n] - u[idx];
                    pv[idx] = (pv[idx] + sigma * d).clamp(-weight, weight);
                }
                if j + 1 < n {
                    let d = u[idx + 1] - u[idx];
                    ph[idx] = (ph[idx] + sigma * d).clamp(-weight, weight);
                }
            }
        }
    }
    // Final primal from the updated duals.
    for i in 0..m {
        for j in 0..n {
            let idx = i * n + j;
            let mut acc = v[idx];
            if i + 1 < m {
                acc += pv[idx];
            }
            if i > 0 {
                acc -= pv[idx - n];
            }
            if j + 1 < n {
                acc += ph[idx];
            }
            if j > 0 {
                acc -= ph[idx - 1];
            }
            u[idx] = acc;
        }
    }
    u
}

/// Reconstructor choice for one pipeline slot.
#[derive(Debug, Clone, PartialEq)]
pub enum Reconstructor {
    Tikhonov {
        lambda: f64,
    },
    Tv {
        lambda: f64,
        iterations: usize,
        step: f64,
    },
    /// Command template with `{in}`, `{out}`, and `{level}` placeholders;
    /// receives a 16-bit PGM, must write a PGM of identical dimensions.
    External {
        command: String,
    },
}

impl Reconstructor {
    fn validate(&self) -> Result<()> {
        match self {
            Reconstructor::Tikhonov { lambda } => {
                if !(lambda.is_finite() && *lambda >= 0.0) {
                    return Err(Error::InvalidConfig("tikhonov lambda must be >= 0".into()));
                }
            }
            Reconstructor::Tv {
                lambda,
                iterations,
                step,
            } => {
                if !(lambda.is_finite() && *lambda >= 0.0) || *iterations == 0 || !(*step > 0.0) {
                    return Err(Error::InvalidConfig(
                        "tv needs lambda >= 0, iterations >= 1, step > 0".into(),
                    ));
                }
            }
            Reconstructor::External { command } => {
                if command.trim().is_empty() {
                    return Err(Error::InvalidConfig("external command is empty".into()));
                }
            }
        }
        Ok(())
    }

    /// Parse the registry syntax: `tikhonov:<lambda>`,
    /// `tv:<lambda>,<iters>,<step>`, or `external:<command>`.
    pub fn parse(spec: &str) -> Result<Reconstructor> {
        let bad = |msg: &str| Error::Format(format!("bad reconstructor spec {spec:?}: {msg}"));
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| bad("missing ':' separator"))?;
        let recon = match kind {
            "tikhonov" => Reconstructor::Tikhonov {
                lambda: rest.parse().map_err(|_| bad("bad lambda"))?,
            },
            "tv" => {
                let parts: Vec<&str> = rest.split(',').collect();
                if parts.len() != 3 {
                    return Err(bad("expected lambda,iterations,step"));
                }
                Reconstructor::Tv {
                    lambda: parts[0].parse().map_err(|_| bad("bad lambda"))?,
                    iterations: parts[1].parse().map_err(|_| bad("bad iterations"))?,
                    step: parts[2].parse().map_err(|_| bad("bad step"))?,
                }
            }
            "external" => Reconstructor::External {
                command: rest.to_string(),
            },
            other => return Err(bad(&format!("unknown kind {other:?}"))),
        };
        recon.validate()?;
        Ok(recon)
    }

    /// Registry-syntax rendering of this reconstructor.
    pub fn to_spec(&self) -> String {
        match self {
            Reconstructor::Tikhonov { lambda } => format!("tikhonov:{lambda}"),
            Reconstructor::Tv {
                lambda,
                iterations,
                step,
            } => {
                format!("tv:{lambda},{iterations},{step}")
            }
            Reconstructor::External { command } => format!("external:{command}"),
        }
    }

    fn run(&self, input: &Image, model: &ForwardModel, edge_pad: bool) -> Result<Image> {
        match self {
            Reconstructor::Tikhonov { lambda } => {
                tikhonov_deconvolve_with_options(input, &model.kernel, *lambda, edge_pad)
            }
            Reconstructor::Tv {
                lambda,
                iterations,
                step,
            } => {
                if edge_pad && model.kernel.radius() > 0 {
                    let pad = model.kernel.radius();
                    let padded = pad_with_boundary(input, pad, BoundaryCondition::Reflexive);
                    let solved =
                        tv_deconvolve(&padded, &model.kernel, *lambda, *iterations, *step)?;
                    solved.crop(pad, pad, input.height(), input.width())
                } else {
                    tv_deconvolve(input, &model.kernel, *lambda, *iterations, *step)
                }
            }
            Reconstructor::External { command } => run_external(command, input, model.level),
        }
    }
}

/// Invoke an external reconstructor command. The input is written as a
/// 16-bit PGM; the command must write a PGM of the same dimensions to the
/// `{out}` path and exit 0.
pub fn run_external(template: &str, input: &Image, level: u32) -> Result<Image> {
    let dir = tempfile::TempDir::new().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let in_path = dir.path().join("input.pgm");
    let out_path = dir.path().join("output.pgm");
    input.save_pgm(&in_path, BitDepth::Sixteen)?;

    let command = template
        .replace("{in}", &in_path.display().to_string())
        .replace("{out}", &out_path.display().to_string())
        .replace("{level}", &level.to_string());
    let output = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .output()
        .map_err(|e| Error::io(PathBuf::from(&command), e))?;
    if !output.status.success() {
        return Err(Error::CommandFailed {
            status: output.status.code().unwrap_or(-1),
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        });
    }
    let result = Image::load_pgm(&out_path)?;
    input.expect_same_dims(&result)?;
    Ok(result)
}

/// Per-level dispatch table: blur level -> (forward model, reconstructor).
#[derive(Debug, Default)]
pub struct PipelineRegistry {
    entries: BTreeMap<u32, (ForwardModel, Reconstructor)>,
    /// Disable to run Tikhonov/TV purely periodically (no edge padding).
    pub edge_pad: bool,
}

impl PipelineRegistry {
    pub fn new() -> Self {
        PipelineRegistry {
            entries: BTreeMap::new(),
            edge_pad: true,
        }
    }

    /// Register a pipeline under the model's own level tag.
    pub fn insert(&mut self, model: ForwardModel, recon: Reconstructor) -> Result<()> {
        recon.validate()?;
        let level = model.level;
        if self.entries.contains_key(&level) {
            return Err(Error::InvalidConfig(format!(
                "level {level} registered twice"
            )));
        }
        self.entries.insert(level, (model, recon));
        Ok(())
    }

    pub fn get(&self, level: u32) -> Option<&(ForwardModel, Reconstructor)> {
        self.entries.get(&level)
    }

    pub fn levels(&self) -> Vec<u32> {
        self.entries.keys().copied().collect()
    }

    /// Parse the line-oriented registry file:
    /// `level=<k> model=<path> recon=<spec>`. Model paths are resolved
    /// relative to the registry file's directory. Blank lines and `#`
    /// comments are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<PipelineRegistry> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut registry = PipelineRegistry::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad =
                |msg: String| Error::Format(format!("{}:{}: {msg}", path.display(), lineno + 1));
            let rest = line
                .strip_prefix("level=")
                .ok_or_else(|| bad("expected level=".into()))?;
            let (level_str, rest) = rest
                .split_once(char::is_whitespace)
                .ok_or_else(|| bad("expected model= after level".into()))?;
            let level: u32 = level_str
                .parse()
                .map_err(|_| bad(format!("bad level {level_str:?}")))?;
            let rest = rest.trim_start();
            let rest = rest
                .strip_prefix("model=")
                .ok_or_else(|| bad("expected model=".into()))?;
            let (model_str, rest) = rest
                .split_once(char::is_whitespace)
                .ok_or_else(|| bad("expected recon= after model".into()))?;
            let rest = rest.trim_start();
            let spec = rest
                .strip_prefix("recon=")
                .ok_or_else(|| bad("expected recon=".into()))?;

            let model_path = base.join(model_str);
            let model = ForwardModel::load(&model_path)?;
            if model.level != level {
                return Err(bad(format!(
                    "model level {} does not match registry key {level}",
                    model.level
                )));
            }
            let recon = Reconstructor::parse(spec)?;
            registry.insert(model, recon)?;
        }
        Ok(registry)
    }

    /// Write registry lines for the given (path, entry) association.
    pub fn write_line(
        w: &mut impl std::io::Write,
        level: u32,
        model_path: &str,
        recon: &Reconstructor,
    ) -> std::io::Result<()> {
        writeln!(
            w,
            "level={level} model={model_path} recon={}",
            recon.to_spec()
        )
    }
}

/// Deblur one image at a registered level: undistort with the level's
/// distortion parameters, then run its reconstructor.
pub fn deblur(registry: &PipelineRegistry, blurry: &Image, level: u32) -> Result<Image> {
    let (model, recon) = registry.get(level).ok_or_else(|| Error::UnknownLevel {
        level,
        known: registry.levels(),
    })?;
    let undistorted = undistort_preprocess(blurry, &model.distortion, model.boundary);
    let out = recon.run(&undistorted, model, registry.edge_pad)?;
    debug_assert!(out.same_dims(blurry));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convolution::convolve_fft;
    use crate::distortion::{
        denormalize_point, distort_coords, normalize_coords, undistort_coords,
    };
    use crate::image::psnr;
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use std::io::Write;

    fn random_image(seed: u64, m: usize, n: usize) -> Image {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Image::new(m, n, (0..m * n).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    fn well_conditioned_kernel() -> Kernel {
        // 0.8 delta + 0.2 gaussian keeps |H| >= 0.6 everywhere.
        let g = Kernel::gaussian(5, 1.0).unwrap();
        let mut w: Vec<f64> = g.weights().iter().map(|v| 0.2 * v).collect();
        w[12] += 0.8;
        Kernel::new(5, w).unwrap()
    }

    #[test]
    fn undistort_zero_coeffs_is_identity() {
        let img = random_image(1, 20, 20);
        let out = undistort_preprocess(
            &img,
            &DistortionParams::identity(),
            BoundaryCondition::Reflexive,
        );
        assert!(out.max_abs_diff(&img) < 1e-10);
    }

    #[test]
    fn undistort_roundtrip_displacement_small_in_center() {
        let params = DistortionParams::new((0.0, 0.0), vec![0.05, 0.05]).unwrap();
        let dims = (256usize, 256usize);
        let mut worst: f64 = 0.0;
        for i in 0..dims.0 {
            for j in 0..dims.1 {
                let p = normalize_coords(dims, i, j);
                let rho = (p.0 * p.0 + p.1 * p.1).sqrt();
                if rho > std::f64::consts::SQRT_2 / 2.0 {
                    continue;
                }
                let u = undistort_coords(&params, distort_coords(&params, p)).unwrap();
                let a = denormalize_point(dims, p.0, p.1);
                let b = denormalize_point(dims, u.0, u.1);
                worst = worst.max(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt());
            }
        }
        assert!(worst < 0.5, "central-half displacement {worst} px");
    }

    #[test]
    fn tikhonov_delta_identity() {
        let img = random_image(2, 24, 24);
        let delta = Kernel::delta(3).unwrap();
        let out = tikhonov_deconvolve_with_options(&img, &delta, 0.0, false).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-10);
        // Edge-padded variant agrees for the delta kernel.
        let padded = tikhonov_deconvolve(&img, &delta, 0.0).unwrap();
        assert!(padded.max_abs_diff(&img) < 1e-10);
    }

    #[test]
    fn tikhonov_inverts_well_conditioned_blur() {
        let x = random_image(3, 32, 32);
        let k = well_conditioned_kernel();
        let y = convolve_fft(&x, &k).unwrap();
        let xhat = tikhonov_deconvolve_with_options(&y, &k, 1e-12, false).unwrap();
        let quality = psnr(&x, &xhat);
        assert!(quality > 60.0, "psnr {quality}");
    }

    #[test]
    fn tikhonov_normal_equations_residual() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..10 {
            let m = rng.gen_range(12..40);
            let n = rng.gen_range(12..40);
            let x = random_image(rng.gen(), m, n);
            let s = *[3usize, 5].iter().nth(rng.gen_range(0..2)).unwrap();
            let k = Kernel::new(s, (0..s * s).map(|_| rng.gen::<f64>() - 0.3).collect()).unwrap();
            let lambda = 10f64.powf(rng.gen_range(-6.0..0.0));
            let y = random_image(rng.gen(), m, n);
            let _ = x;
            let xhat = tikhonov_deconvolve_with_options(&y, &k, lambda, false).unwrap();

            let kt = k.rotated_180();
            let bx = convolve_fft(&xhat, &k).unwrap();
            let btbx = convolve_fft(&bx, &kt).unwrap();
            let bty = convolve_fft(&y, &kt).unwrap();
            let resid: f64 = btbx
                .pixels()
                .iter()
                .zip(xhat.pixels())
                .zip(bty.pixels())
                .map(|((a, x), b)| {
                    let r = a + lambda * x - b;
                    r * r
                })
                .sum::<f64>()
                .sqrt();
            let scale: f64 = bty.pixels().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(resid < 1e-6 * scale, "residual {resid} vs {scale}");
        }
    }

    #[test]
    fn tikhonov_shrinks_with_lambda() {
        let y = random_image(5, 24, 24);
        let k = well_conditioned_kernel();
        let norms: Vec<f64> = [1e-6, 1e-3, 1e-1, 10.0]
            .iter()
            .map(|&l| {
                let x = tikhonov_deconvolve_with_options(&y, &k, l, false).unwrap();
                x.pixels().iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .collect();
        for pair in norms.windows(2) {
            assert!(pair[0] >= pair[1] - 1e-12);
        }
        // Very large lambda drives the solution toward zero.
        let x = tikhonov_deconvolve_with_options(&y, &k, 1e9, false).unwrap();
        let norm: f64 = x.pixels().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6);
    }

    #[test]
    fn tikhonov_flags_ill_posedness() {
        // Averaging two horizontal neighbors: the spectrum vanishes at the
        // Nyquist column, so inversion without regularization is rejected.
        let mut w = vec![0.0; 9];
        w[4] = 0.5;
        w[5] = 0.5;
        let k = Kernel::new(3, w).unwrap();
        let y = random_image(6, 16, 16);
        match tikhonov_deconvolve_with_options(&y, &k, 0.0, false) {
            Err(Error::IllPosed { .. }) => {}
            other => panic!("expected IllPosed, got {other:?}"),
        }
        assert!(tikhonov_deconvolve_with_options(&y, &k, 1e-6, false).is_ok());
    }

    #[test]
    fn tv_lambda_zero_delta_converges_to_input() {
        let y = random_image(7, 16, 16);
        let delta = Kernel::delta(3).unwrap();
        let (x, trace) = tv_deconvolve_traced(&y, &delta, 0.0, 30, 1.0).unwrap();
        assert!(x.max_abs_diff(&y) < 1e-8);
        let last = *trace.last().unwrap();
        assert!(last < 1e-16, "objective {last}");
    }

    #[test]
    fn tv_objective_nonincreasing() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..5 {
            let y = random_image(rng.gen(), 20, 20);
            let k = Kernel::gaussian(5, 1.0).unwrap();
            let (_, trace) = tv_deconvolve_traced(&y, &k, 1e-3, 40, 1.0).unwrap();
            for pair in trace.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-10,
                    "objective rose: {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn tv_improves_piecewise_constant_phantom() {
        // Bright rectangle on dark ground, small Gaussian blur.
        let mut x = Image::filled(40, 40, 0.1);
        for i in 12..28 {
            for j in 10..30 {
                x.set(i, j, 0.85);
            }
        }
        let k = Kernel::gaussian(5, 1.0).unwrap();
        let y = convolve_fft(&x, &k).unwrap();
        let xhat = tv_deconvolve(&y, &k, 2e-3, 150, 1.0).unwrap();
        let before = psnr(&x, &y);
        let after = psnr(&x, &xhat);
        assert!(after > before, "psnr {before} -> {after}");
        assert!(tv_seminorm(&xhat) <= tv_seminorm(&y) + 1e-9);
    }

    #[test]
    fn tv_large_lambda_flattens() {
        let y = random_image(9, 16, 16);
        let k = Kernel::delta(3).unwrap();
        let xhat = tv_deconvolve(&y, &k, 100.0, 80, 1.0).unwrap();
        let mean: f64 = xhat.pixels().iter().sum::<f64>() / xhat.pixels().len() as f64;
        let spread = xhat
            .pixels()
            .iter()
            .map(|v| (v - mean).abs())
            .fold(0.0f64, f64::max);
        let orig_spread = y
            .pixels()
            .iter()
            .map(|v| (v - mean).abs())
            .fold(0.0f64, f64::max);
        assert!(
            spread < 0.2 * orig_spread,
            "spread {spread} vs {orig_spread}"
        );
    }

    #[test]
    fn registry_insert_and_unknown_level() {
        let mut registry = PipelineRegistry::new();
        registry
            .insert(
                ForwardModel::identity(3),
                Reconstructor::Tikhonov { lambda: 0.0 },
            )
            .unwrap();
        assert!(registry
            .insert(
                ForwardModel::identity(3),
                Reconstructor::Tikhonov { lambda: 0.0 }
            )
            .is_err());

        let img = random_image(10, 8, 8);
        match deblur(&registry, &img, 7) {
            Err(Error::UnknownLevel { level, known }) => {
                assert_eq!(level, 7);
                assert_eq!(known, vec![3]);
            }
            other => panic!("expected UnknownLevel, got {other:?}"),
        }
    }

    #[test]
    fn deblur_identity_pipeline() {
        let mut registry = PipelineRegistry::new();
        registry
            .insert(
                ForwardModel::identity(0),
                Reconstructor::Tikhonov { lambda: 0.0 },
            )
            .unwrap();
        let img = random_image(11, 16, 16);
        let out = deblur(&registry, &img, 0).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-10);
    }

    #[test]
    fn deblur_external_echo_reduces_to_undistortion() {
        let mut registry = PipelineRegistry::new();
        let model = ForwardModel::new(
            Kernel::delta(1).unwrap(),
            DistortionParams::new((0.0, 0.0), vec![0.03]).unwrap(),
            BoundaryCondition::Reflexive,
            2,
        )
        .unwrap();
        registry
            .insert(
                model.clone(),
                Reconstructor::External {
                    command: "cp {in} {out}".into(),
                },
            )
            .unwrap();
        let img = random_image(12, 24, 24);
        let out = deblur(&registry, &img, 2).unwrap();
        let expected = undistort_preprocess(&img, &model.distortion, BoundaryCondition::Reflexive);
        // The external hop quantizes to 16 bits.
        assert!(out.max_abs_diff(&expected) <= 1.0 / 65535.0 + 1e-12);
    }

    #[test]
    fn external_failures_are_reported() {
        let img = random_image(13, 8, 8);
        match run_external("exit 3", &img, 0) {
            Err(Error::CommandFailed { status, .. }) => assert_eq!(status, 3),
            other => panic!("expected CommandFailed, got {other:?}"),
        }
        // Wrong output dimensions are rejected.
        let cmd = "printf 'P5\\n2 2\\n255\\nAAAA' > {out}";
        assert!(run_external(cmd, &img, 0).is_err());
    }

    #[test]
    fn registry_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let model = ForwardModel::new(
            Kernel::gaussian(3, 0.7).unwrap(),
            DistortionParams::new((0.0, 0.0), vec![0.01, -0.002]).unwrap(),
            BoundaryCondition::Reflexive,
            5,
        )
        .unwrap();
        model.save(dir.path().join("level5.fmd")).unwrap();

        let registry_path = dir.path().join("registry.txt");
        let mut text = Vec::new();
        writeln!(text, "# pipelines").unwrap();
        PipelineRegistry::write_line(
            &mut text,
            5,
            "level5.fmd",
            &Reconstructor::Tv {
                lambda: 1e-4,
                iterations: 50,
                step: 0.9,
            },
        )
        .unwrap();
        std::fs::write(&registry_path, text).unwrap();

        let registry = PipelineRegistry::load(&registry_path).unwrap();
        let (loaded, recon) = registry.get(5).unwrap();
        assert_eq!(loaded.level, 5);
        assert_eq!(
            recon,
            &Reconstructor::Tv {
                lambda: 1e-4,
                iterations: 50,
                step: 0.9
            }
        );

        // External specs keep their embedded spaces.
        let r = Reconstructor::parse("external:python3 run.py {in} {out} {level}").unwrap();
        assert_eq!(
            r,
            Reconstructor::External {
                command: "python3 run.py {in} {out} {level}".into()
            }
        );
        assert!(Reconstructor::parse("unknown:1").is_err());
        assert!(Reconstructor::parse("tv:1").is_err());
    }
}
