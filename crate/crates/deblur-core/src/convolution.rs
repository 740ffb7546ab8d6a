//! Discrete 2-D convolution with direct and FFT-based implementations.
//!
//! The operation computed everywhere in this crate is
//!
//! ```text
//! out[i, j] = sum_{h, l = -r..r} k[r + h, r + l] * x[i + h, j + l],   r = floor(s / 2)
//! ```
//!
//! with the boundary embedding chosen by the caller. Under periodic
//! boundary conditions the operator matrix is block circulant with
//! circulant blocks (BCCB), so it diagonalizes in the 2-D DFT basis;
//! [`bccb_spectrum`] exposes those eigenvalues for the spectral
//! deconvolution path.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::{BoundaryCondition, Image};

/// Odd-sided square blur kernel, weights row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    side: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(side: usize, weights: Vec<f64>) -> Result<Self> {
        if side % 2 == 0 || side == 0 {
            return Err(Error::KernelSideEven(side));
        }
        if weights.len() != side * side {
            return Err(Error::Format(format!(
                "kernel weight count {} does not match side {}",
                weights.len(),
                side
            )));
        }
        if let Some(index) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinitePixel { index });
        }
        Ok(Kernel { side, weights })
    }

    /// Identity kernel: 1 at the center, 0 elsewhere.
    pub fn delta(side: usize) -> Result<Self> {
        let mut weights = vec![0.0; side * side];
        if side % 2 == 0 || side == 0 {
            return Err(Error::KernelSideEven(side));
        }
        let r = side / 2;
        weights[r * side + r] = 1.0;
        Kernel::new(side, weights)
    }

    /// Isotropic Gaussian with the given standard deviation in pixels,
    /// normalized to unit mass.
    pub fn gaussian(side: usize, sigma: f64) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
        let r = side as isize / 2;
        let mut weights = Vec::with_capacity(side * side);
        for i in -r..=r {
            for j in -r..=r {
                let d2 = (i * i + j * j) as f64;
                weights.push((-d2 / (2.0 * sigma * sigma)).exp());
            }
        }
        let mass: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= mass;
        }
        Kernel::new(side, weights)
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    /// Half-width `floor(side / 2)`; weight index `(radius, radius)` sits at
    /// lag (0, 0).
    #[inline]
    pub fn radius(&self) -> usize {
        self.side / 2
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.weights[a * self.side + b]
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// 180-degree rotation; convolving with it applies the adjoint of the
    /// periodic operator.
    pub fn rotated_180(&self) -> Kernel {
        let mut weights = self.weights.clone();
        weights.reverse();
        Kernel {
            side: self.side,
            weights,
        }
    }

    /// Relative L2 distance `|a - b| / |b|` between weight vectors.
    pub fn relative_l2_error(&self, reference: &Kernel) -> f64 {
        assert_eq!(self.side, reference.side);
        let num: f64 = self
            .weights
            .iter()
            .zip(&reference.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = reference.weights.iter().map(|b| b * b).sum();
        (num / den).sqrt()
    }

    /// Write in the binary kernel format: magic `KBK1`, three little-endian
    /// u32 (side, side, 0), then `side * side` little-endian f64 row-major.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))
    }

    pub(crate) fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(b"KBK1")?;
        w.write_all(&(self.side as u32).to_le_bytes())?;
        w.write_all(&(self.side as u32).to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        for &v in &self.weights {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Kernel> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        Kernel::read_from(&mut r)
    }

    pub(crate) fn read_from(r: &mut impl Read) -> Result<Kernel> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| Error::Format(format!("truncated kernel file: {e}")))?;
        if &magic != b"KBK1" {
            return Err(Error::Format(format!(
                "bad kernel magic {:?}",
                String::from_utf8_lossy(&magic)
            )));
        }
        let s0 = read_u32_le(r)? as usize;
        let s1 = read_u32_le(r)? as usize;
        let _reserved = read_u32_le(r)?;
        if s0 != s1 {
            return Err(Error::Format(format!(
                "kernel file dims {s0}x{s1} are not square"
            )));
        }
        let mut weights = Vec::with_capacity(s0 * s0);
        let mut buf = [0u8; 8];
        for _ in 0..s0 * s0 {
            r.read_exact(&mut buf)
                .map_err(|e| Error::Format(format!("truncated kernel payload: {e}")))?;
            weights.push(f64::from_le_bytes(buf));
        }
        Kernel::new(s0, weights)
    }
}

pub(crate) fn read_u32_le(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated integer field: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_f64_le(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated float field: {e}")))?;
    Ok(f64::from_le_bytes(buf))
}

/// Eigenvalues of the periodic (BCCB) convolution operator on an `m x n`
/// grid, in DFT ordering.
#[derive(Debug, Clone)]
pub struct Spectrum {
    height: usize,
    width: usize,
    values: Vec<Complex64>,
}

impl Spectrum {
    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn min_magnitude(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Direct evaluation of the convolution sum, `O(m n s^2)`.
pub fn convolve_direct(image: &Image, kernel: &Kernel, boundary: BoundaryCondition) -> Image {
    let m = image.height();
    let n = image.width();
    let s = kernel.side();
    let r = kernel.radius() as isize;
    let mut out = vec![0.0; m * n];

    // Interior pixels never leave the raster; skip boundary mapping there.
    let interior = r as usize;
    for i in 0..m {
        let safe_row = i >= interior && i + interior < m;
        for j in 0..n {
            let safe = safe_row && j >= interior && j + interior < n;
            let mut acc = 0.0;
            if safe {
                for h in -r..=r {
                    let row = ((i as isize + h) as usize) * n;
                    let krow = ((h + r) as usize) * s;
                    for l in -r..=r {
                        acc += kernel.weights()[krow + (l + r) as usize]
                            * image.pixels()[row + (j as isize + l) as usize];
                    }
                }
            } else {
                for h in -r..=r {
                    let krow = ((h + r) as usize) * s;
                    for l in -r..=r {
                        acc += kernel.weights()[krow + (l + r) as usize]
                            * image.get_bounded(i as isize + h, j as isize + l, boundary);
                    }
                }
            }
            out[i * n + j] = acc;
        }
    }
    Image::new(m, n, out).expect("convolution output is finite")
}

/// FFT evaluation of the periodic convolution; matches
/// `convolve_direct(.., Periodic)` to ~1e-12 on unit-scale data.
pub fn convolve_fft(image: &Image, kernel: &Kernel) -> Result<Image> {
    let m = image.height();
    let n = image.width();
    if kernel.side() > 2 * m.min(n) {
        return Err(Error::KernelTooLarge {
            side: kernel.side(),
            height: m,
            width: n,
        });
    }
    let spectrum = embed_spectrum(kernel, m, n);
    let mut buf: Vec<Complex64> = image
        .pixels()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft2d(&mut buf, m, n, false);
    for (v, h) in buf.iter_mut().zip(&spectrum) {
        *v *= h;
    }
    fft2d(&mut buf, m, n, true);
    Image::new(m, n, buf.iter().map(|c| c.re).collect())
}

/// Boundary-aware convolution that routes through the FFT automatically
/// for large kernels (side > 15). Non-periodic boundaries are handled by
/// pre-padding with the boundary fill, convolving periodically on the
/// padded grid, and cropping back.
pub fn convolve(image: &Image, kernel: &Kernel, boundary: BoundaryCondition) -> Image {
    let s = kernel.side();
    if s <= 15 {
        return convolve_direct(image, kernel, boundary);
    }
    match boundary {
        BoundaryCondition::Periodic if s <= 2 * image.height().min(image.width()) => {
            convolve_fft(image, kernel).expect("kernel fits grid")
        }
        BoundaryCondition::Periodic => convolve_direct(image, kernel, boundary),
        BoundaryCondition::Reflexive | BoundaryCondition::ZeroPad => {
            let padded = pad_with_boundary(image, kernel.radius(), boundary);
            let conv = convolve_fft(&padded, kernel).expect("padded grid fits kernel");
            conv.crop(
                kernel.radius(),
                kernel.radius(),
                image.height(),
                image.width(),
            )
            .expect("crop restores original extent")
        }
    }
}

/// Extend an image by `pad` pixels on every side using the boundary rule.
pub(crate) fn pad_with_boundary(image: &Image, pad: usize, boundary: BoundaryCondition) -> Image {
    let m = image.height();
    let n = image.width();
    let pm = m + 2 * pad;
    let pn = n + 2 * pad;
    let mut data = vec![0.0; pm * pn];
    for i in 0..pm {
        for j in 0..pn {
            data[i * pn + j] = image.get_bounded(
                i as isize - pad as isize,
                j as isize - pad as isize,
                boundary,
            );
        }
    }
    Image::new(pm, pn, data).expect("padded image is finite")
}

/// Eigenvalues of the periodic operator: the 2-D DFT of the kernel
/// zero-embedded and circularly centered on an `m x n` grid.
pub fn bccb_spectrum(kernel: &Kernel, m: usize, n: usize) -> Result<Spectrum> {
    if kernel.side() > m.min(n) {
        return Err(Error::KernelTooLarge {
            side: kernel.side(),
            height: m,
            width: n,
        });
    }
    let values = embed_spectrum(kernel, m, n);
    Ok(Spectrum {
        height: m,
        width: n,
        values,
    })
}

/// Embed the kernel so that pointwise multiplication in the DFT domain
/// equals the convolution sum above. Lags alias onto the grid when the
/// kernel overhangs it, matching the wrapped direct sum.
fn embed_spectrum(kernel: &Kernel, m: usize, n: usize) -> Vec<Complex64> {
    let s = kernel.side();
    let r = kernel.radius() as isize;
    let mut buf = vec![Complex64::new(0.0, 0.0); m * n];
    for a in 0..s {
        for b in 0..s {
            let ti = (r - a as isize).rem_euclid(m as isize) as usize;
            let tj = (r - b as isize).rem_euclid(n as isize) as usize;
            buf[ti * n + tj] += Complex64::new(kernel.get(a, b), 0.0);
        }
    }
    fft2d(&mut buf, m, n, false);
    buf
}

/// In-place 2-D FFT over a row-major `m x n` complex buffer. The inverse
/// direction includes the `1/(m n)` normalization.
pub(crate) fn fft2d(buf: &mut Vec<Complex64>, m: usize, n: usize, inverse: bool) {
    assert_eq!(buf.len(), m * n);
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let mut scratch = vec![Complex64::new(0.0, 0.0); row_fft.get_inplace_scratch_len()];
    for row in buf.chunks_exact_mut(n) {
        row_fft.process_with_scratch(row, &mut scratch);
    }

    transpose(buf, m, n);

    let col_fft = if inverse {
        planner.plan_fft_inverse(m)
    } else {
        planner.plan_fft_forward(m)
    };
    let mut scratch = vec![Complex64::new(0.0, 0.0); col_fft.get_inplace_scratch_len()];
    for row in buf.chunks_exact_mut(m) {
        col_fft.process_with_scratch(row, &mut scratch);
    }

    transpose(buf, n, m);

    if inverse {
        let scale = 1.0 / (m * n) as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

fn transpose(buf: &mut Vec<Complex64>, rows: usize, cols: usize) {
    let mut out = vec![Complex64::new(0.0, 0.0); buf.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = buf[i * cols + j];
        }
    }
    *buf = out;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_image(rng: &mut impl rand::Rng, m: usize, n: usize) -> Image {
        Image::new(m, n, (0..m * n).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    fn random_kernel(rng: &mut impl rand::Rng, s: usize) -> Kernel {
        Kernel::new(
            s,
            (0..s * s).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let img = random_image(&mut rng, 12, 9);
        let delta = Kernel::delta(5).unwrap();
        for boundary in [
            BoundaryCondition::ZeroPad,
            BoundaryCondition::Periodic,
            BoundaryCondition::Reflexive,
        ] {
            assert!(convolve_direct(&img, &delta, boundary).max_abs_diff(&img) < 1e-15);
        }
        assert!(convolve_fft(&img, &delta).unwrap().max_abs_diff(&img) < 1e-10);
    }

    #[test]
    fn ones_kernel_on_constant() {
        let img = Image::filled(8, 8, 0.4);
        let ones = Kernel::new(3, vec![1.0; 9]).unwrap();
        for boundary in [
            BoundaryCondition::ZeroPad,
            BoundaryCondition::Periodic,
            BoundaryCondition::Reflexive,
        ] {
            let out = convolve_direct(&img, &ones, boundary);
            // Interior pixels see the full window under every boundary rule.
            assert!((out.get(4, 4) - 3.6).abs() < 1e-12);
            if boundary != BoundaryCondition::ZeroPad {
                assert!(out.max_abs_diff(&Image::filled(8, 8, 3.6)) < 1e-12);
            }
        }
    }

    #[test]
    fn right_shift_kernel_zero_pad() {
        let img = Image::new(3, 3, (1..=9).map(|v| v as f64).collect()).unwrap();
        let mut w = vec![0.0; 9];
        w[5] = 1.0; // row 1, col 2: lag (h, l) = (0, +1)
        let k = Kernel::new(3, w).unwrap();
        let out = convolve_direct(&img, &k, BoundaryCondition::ZeroPad);
        let expected = Image::new(3, 3, vec![2., 3., 0., 5., 6., 0., 8., 9., 0.]).unwrap();
        assert!(out.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn fft_matches_direct_periodic() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..20 {
            let img = random_image(&mut rng, 32, 24);
            let k = random_kernel(&mut rng, 9);
            let direct = convolve_direct(&img, &k, BoundaryCondition::Periodic);
            let fft = convolve_fft(&img, &k).unwrap();
            assert!(direct.max_abs_diff(&fft) < 1e-8);
        }
    }

    #[test]
    fn fft_matches_separable_passes() {
        // A separable Gaussian equals a horizontal then a vertical 1-D pass.
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 24, 24);
        let s = 7;
        let sigma = 1.3;
        let g = Kernel::gaussian(s, sigma).unwrap();

        let r = s as isize / 2;
        let g1: Vec<f64> = (-r..=r)
            .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let mass: f64 = g1.iter().sum();
        let g1: Vec<f64> = g1.iter().map(|v| v / mass).collect();

        let mut horiz = Image::zeros(24, 24);
        for i in 0..24 {
            for j in 0..24 {
                let mut acc = 0.0;
                for (idx, &w) in g1.iter().enumerate() {
                    let l = idx as isize - r;
                    acc += w * img.get_bounded(
                        i as isize,
                        j as isize + l,
                        BoundaryCondition::Periodic,
                    );
                }
                horiz.set(i, j, acc);
            }
        }
        let mut sep = Image::zeros(24, 24);
        for i in 0..24 {
            for j in 0..24 {
                let mut acc = 0.0;
                for (idx, &w) in g1.iter().enumerate() {
                    let h = idx as isize - r;
                    acc += w * horiz.get_bounded(
                        i as isize + h,
                        j as isize,
                        BoundaryCondition::Periodic,
                    );
                }
                sep.set(i, j, acc);
            }
        }

        let fft = convolve_fft(&img, &g).unwrap();
        assert!(fft.max_abs_diff(&sep) < 1e-8);
    }

    #[test]
    fn spectrum_delta_and_dc() {
        let delta = Kernel::delta(3).unwrap();
        let sp = bccb_spectrum(&delta, 8, 6).unwrap();
        for v in sp.values() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }

        let ones = Kernel::new(3, vec![1.0; 9]).unwrap();
        let sp = bccb_spectrum(&ones, 8, 6).unwrap();
        assert!((sp.values()[0].re - 9.0).abs() < 1e-12);
        assert!(sp.values()[0].im.abs() < 1e-12);
    }

    #[test]
    fn spectrum_realizes_convolution() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let img = random_image(&mut rng, 16, 20);
        let k = random_kernel(&mut rng, 5);
        let sp = bccb_spectrum(&k, 16, 20).unwrap();

        let mut buf: Vec<Complex64> = img
            .pixels()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        fft2d(&mut buf, 16, 20, false);
        for (v, h) in buf.iter_mut().zip(sp.values()) {
            *v *= h;
        }
        fft2d(&mut buf, 16, 20, true);
        let via_spectrum = Image::new(16, 20, buf.iter().map(|c| c.re).collect()).unwrap();

        let via_fft = convolve_fft(&img, &k).unwrap();
        assert!(via_spectrum.max_abs_diff(&via_fft) < 1e-8);
        assert!(bccb_spectrum(&k, 4, 4).is_err());
    }

    #[test]
    fn dc_preservation_periodic() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let k = random_kernel(&mut rng, 5);
        let c = 0.73;
        let img = Image::filled(10, 14, c);
        let out = convolve_direct(&img, &k, BoundaryCondition::Periodic);
        let expected = Image::filled(10, 14, k.weight_sum() * c);
        assert!(out.max_abs_diff(&expected) < 1e-10);
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let x = random_image(&mut rng, 12, 10);
        let z = random_image(&mut rng, 12, 10);
        let k = random_kernel(&mut rng, 5);
        let bx = convolve_direct(&x, &k, BoundaryCondition::Periodic);
        let btz = convolve_direct(&z, &k.rotated_180(), BoundaryCondition::Periodic);
        let lhs: f64 = bx.pixels().iter().zip(z.pixels()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x
            .pixels()
            .iter()
            .zip(btz.pixels())
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-8);
    }

    #[test]
    fn auto_routing_matches_direct_for_large_kernels() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let img = random_image(&mut rng, 24, 28);
        let k = random_kernel(&mut rng, 17);
        for boundary in [
            BoundaryCondition::ZeroPad,
            BoundaryCondition::Periodic,
            BoundaryCondition::Reflexive,
        ] {
            let auto = convolve(&img, &k, boundary);
            let direct = convolve_direct(&img, &k, boundary);
            assert!(
                auto.max_abs_diff(&direct) < 1e-8,
                "boundary {boundary:?} diverged"
            );
        }
    }

    #[test]
    fn kernel_file_roundtrip_is_bit_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let k = random_kernel(&mut rng, 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.kbk");
        k.save(&path).unwrap();
        let back = Kernel::load(&path).unwrap();
        assert_eq!(k.weights(), back.weights());
        assert_eq!(k.side(), back.side());
    }

    #[test]
    fn kernel_validation() {
        assert!(Kernel::new(4, vec![0.0; 16]).is_err());
        assert!(Kernel::new(3, vec![0.0; 8]).is_err());
        assert!(Kernel::new(3, vec![f64::INFINITY; 9]).is_err());
        assert!(convolve_fft(&Image::zeros(4, 4), &Kernel::delta(9).unwrap()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn convolution_is_linear(seed in 0u64..1000, alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let x = random_image(&mut rng, 10, 8);
            let z = random_image(&mut rng, 10, 8);
            let k = random_kernel(&mut rng, 3);
            for boundary in [
                BoundaryCondition::ZeroPad,
                BoundaryCondition::Periodic,
                BoundaryCondition::Reflexive,
            ] {
                let combo = Image::new(
                    10,
                    8,
                    x.pixels()
                        .iter()
                        .zip(z.pixels())
                        .map(|(a, b)| alpha * a + beta * b)
                        .collect(),
                )
                .unwrap();
                let lhs = convolve_direct(&combo, &k, boundary);
                let cx = convolve_direct(&x, &k, boundary);
                let cz = convolve_direct(&z, &k, boundary);
                let rhs = Image::new(
                    10,
                    8,
                    cx.pixels()
                        .iter()
                        .zip(cz.pixels())
                        .map(|(a, b)| alpha * a + beta * b)
                        .collect(),
                )
                .unwrap();
                prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
            }
        }

        #[test]
        fn fft_oracle_random(seed in 0u64..1000) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let m = rng.gen_range(8..24);
            let n = rng.gen_range(8..24);
            let s = *[3usize, 5, 7].choose(&mut rng).unwrap();
            let img = random_image(&mut rng, m, n);
            let k = random_kernel(&mut rng, s);
            let direct = convolve_direct(&img, &k, BoundaryCondition::Periodic);
            let fft = convolve_fft(&img, &k).unwrap();
            prop_assert!(direct.max_abs_diff(&fft) < 1e-8);
        }
    }
}
