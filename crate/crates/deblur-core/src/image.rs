//! Grayscale image container, PGM I/O, and basic raster operations.
//!
//! Pixel intensities are `f64` in a nominal `[0, 1]` range (intermediate
//! results of other modules may leave it). The continuous coordinate
//! convention places the center of pixel `(i, j)` at `(x, y) = (j + 0.5,
//! i + 0.5)` in pixel units; every interpolation and warp in this crate
//! uses that convention.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// How pixel lookups outside the raster are resolved.
///
/// `Reflexive` mirrors with half-sample symmetry (`x[-1] = x[0]`), the
/// default for spatial operations. `Periodic` wraps and is what the FFT
/// convolution path realizes. `ZeroPad` treats the outside as black.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    ZeroPad,
    Periodic,
    Reflexive,
}

impl BoundaryCondition {
    /// Map a (possibly out-of-range) index onto `0..size`, or `None` for
    /// zero padding.
    #[inline]
    pub fn map_index(self, t: isize, size: usize) -> Option<usize> {
        let n = size as isize;
        if t >= 0 && t < n {
            return Some(t as usize);
        }
        match self {
            BoundaryCondition::ZeroPad => None,
            BoundaryCondition::Periodic => Some(t.rem_euclid(n) as usize),
            BoundaryCondition::Reflexive => {
                // Half-sample symmetry with period 2n: ... 1 0 | 0 1 ... n-1 | n-1 ... 0 | 0 1 ...
                let p = t.rem_euclid(2 * n);
                if p < n {
                    Some(p as usize)
                } else {
                    Some((2 * n - 1 - p) as usize)
                }
            }
        }
    }

    /// Stable numeric code used by the model file format.
    pub fn code(self) -> u32 {
        match self {
            BoundaryCondition::ZeroPad => 0,
            BoundaryCondition::Periodic => 1,
            BoundaryCondition::Reflexive => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(BoundaryCondition::ZeroPad),
            1 => Ok(BoundaryCondition::Periodic),
            2 => Ok(BoundaryCondition::Reflexive),
            c => Err(Error::Format(format!("unknown boundary code {c}"))),
        }
    }
}

/// Bit depth used when writing PGM files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

/// Grayscale raster with real-valued intensities, stored row-major.
///
/// Immutable by convention: operations return new images, so values can be
/// shared freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// Build an image from row-major data, validating the invariants
    /// (non-empty dimensions, matching length, finite values).
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ZeroDimension { height, width });
        }
        if data.len() != height * width {
            return Err(Error::Format(format!(
                "pixel buffer length {} does not match {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinitePixel { index });
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    /// All-zero image. Panics on zero dimensions.
    pub fn zeros(height: usize, width: usize) -> Self {
        Image::filled(height, width, 0.0)
    }

    /// Constant image. Panics on zero dimensions.
    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        Image {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.height && j < self.width);
        self.data[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.height && j < self.width);
        self.data[i * self.width + j] = v;
    }

    /// Pixel lookup with a boundary rule; `ZeroPad` yields 0 outside.
    #[inline]
    pub fn get_bounded(&self, i: isize, j: isize, boundary: BoundaryCondition) -> f64 {
        match (
            boundary.map_index(i, self.height),
            boundary.map_index(j, self.width),
        ) {
            (Some(ii), Some(jj)) => self.data[ii * self.width + jj],
            _ => 0.0,
        }
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn expect_same_dims(&self, other: &Image) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected_h: self.height,
                expected_w: self.width,
                got_h: other.height,
                got_w: other.width,
            })
        }
    }

    /// Bilinear sample at the continuous point `(x, y)` in pixel units.
    ///
    /// At a pixel center `(j + 0.5, i + 0.5)` this returns the stored value
    /// exactly; elsewhere the four neighboring centers are blended. Points
    /// outside the raster are resolved by `boundary`.
    pub fn sample_at(&self, x: f64, y: f64, boundary: BoundaryCondition) -> f64 {
        // Shift into index space where pixel (i, j) sits at (j, i).
        let a = x - 0.5;
        let b = y - 0.5;
        let j0 = a.floor();
        let i0 = b.floor();
        let tx = a - j0;
        let ty = b - i0;
        let j0 = j0 as isize;
        let i0 = i0 as isize;

        let p00 = self.get_bounded(i0, j0, boundary);
        let p01 = self.get_bounded(i0, j0 + 1, boundary);
        let p10 = self.get_bounded(i0 + 1, j0, boundary);
        let p11 = self.get_bounded(i0 + 1, j0 + 1, boundary);

        (1.0 - ty) * ((1.0 - tx) * p00 + tx * p01) + ty * ((1.0 - tx) * p10 + tx * p11)
    }

    /// Extract the `h x w` rectangle whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Image> {
        if h == 0 || w == 0 {
            return Err(Error::ZeroDimension {
                height: h,
                width: w,
            });
        }
        if top + h > self.height || left + w > self.width {
            return Err(Error::CropOutOfBounds {
                top,
                left,
                h,
                w,
                height: self.height,
                width: self.width,
            });
        }
        let mut data = Vec::with_capacity(h * w);
        for i in 0..h {
            let row = (top + i) * self.width + left;
            data.extend_from_slice(&self.data[row..row + w]);
        }
        Ok(Image {
            height: h,
            width: w,
            data,
        })
    }

    /// Largest absolute per-pixel difference. Panics on dimension mismatch.
    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert!(self.same_dims(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Write as binary PGM (P5) at the requested bit depth. Values are
    /// clamped to `[0, 1]` and quantized by `round(v * maxval)`.
    pub fn save_pgm(&self, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_pgm(&mut w, depth)
            .map_err(|e| Error::io(path, e))
    }

    pub(crate) fn write_pgm(&self, w: &mut impl Write, depth: BitDepth) -> std::io::Result<()> {
        let maxval = depth.maxval();
        write!(w, "P5\n{} {}\n{}\n", self.width, self.height, maxval)?;
        match depth {
            BitDepth::Eight => {
                let bytes: Vec<u8> = self.data.iter().map(|&v| quantize(v, 255) as u8).collect();
                w.write_all(&bytes)?;
            }
            BitDepth::Sixteen => {
                let mut bytes = Vec::with_capacity(self.data.len() * 2);
                for &v in &self.data {
                    let q = quantize(v, 65535) as u16;
                    bytes.extend_from_slice(&q.to_be_bytes());
                }
                w.write_all(&bytes)?;
            }
        }
        w.flush()
    }

    /// Read a binary PGM (P5). Stored values are mapped linearly onto
    /// `[0, 1]` by dividing by the file's maxval.
    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        Image::read_pgm(&mut r)
    }

    pub(crate) fn read_pgm(r: &mut impl BufRead) -> Result<Image> {
        let magic = read_pgm_token(r)?;
        if magic != "P5" {
            return Err(Error::Format(format!(
                "expected PGM magic P5, found {magic:?}"
            )));
        }
        let width: usize = parse_pgm_int(&read_pgm_token(r)?)?;
        let height: usize = parse_pgm_int(&read_pgm_token(r)?)?;
        let maxval: u32 = parse_pgm_int(&read_pgm_token(r)?)? as u32;
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension { height, width });
        }
        if maxval == 0 || maxval > 65535 {
            return Err(Error::Format(format!("invalid PGM maxval {maxval}")));
        }
        let count = width * height;
        let scale = 1.0 / maxval as f64;
        let data = if maxval < 256 {
            let mut raw = vec![0u8; count];
            r.read_exact(&mut raw)
                .map_err(|e| Error::Format(format!("short PGM payload: {e}")))?;
            raw.iter().map(|&b| b as f64 * scale).collect()
        } else {
            let mut raw = vec![0u8; count * 2];
            r.read_exact(&mut raw)
                .map_err(|e| Error::Format(format!("short PGM payload: {e}")))?;
            raw.chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
                .collect()
        };
        Image::new(height, width, data)
    }
}

#[inline]
fn quantize(v: f64, maxval: u32) -> u32 {
    (v.clamp(0.0, 1.0) * maxval as f64).round() as u32
}

/// Read one whitespace-delimited PGM header token, skipping `#` comments.
fn read_pgm_token(r: &mut impl BufRead) -> Result<String> {
    let mut token = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)
            .map_err(|e| Error::Format(format!("truncated PGM header: {e}")))?
            == 0
        {
            if token.is_empty() {
                return Err(Error::Format("truncated PGM header".into()));
            }
            return Ok(token);
        }
        let c = byte[0];
        if c == b'#' && token.is_empty() {
            let mut junk = Vec::new();
            r.read_until(b'\n', &mut junk)
                .map_err(|e| Error::Format(format!("truncated PGM comment: {e}")))?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            return Ok(token);
        }
        token.push(c as char);
    }
}

fn parse_pgm_int(token: &str) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| Error::Format(format!("bad PGM header token {token:?}")))
}

/// Load an image from a file path (binary PGM).
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    Image::load_pgm(path)
}

/// Save an image to a file path (binary PGM) at the given bit depth.
pub fn save_image(image: &Image, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    image.save_pgm(path, depth)
}

/// Peak signal-to-noise ratio in dB with peak 1.0.
pub fn psnr(reference: &Image, candidate: &Image) -> f64 {
    assert!(reference.same_dims(candidate));
    let mse: f64 = reference
        .pixels()
        .iter()
        .zip(candidate.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.pixels().len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}
