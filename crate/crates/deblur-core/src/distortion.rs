//! Radial lens distortion: the even-order polynomial forward model, its
//! approximate division-model inverse, and discrete image warping.
//!
//! Coordinates are normalized isotropically by the image half-width:
//! `x = (j + 0.5 - n/2) / (n/2)`, `y = (i + 0.5 - m/2) / (n/2)`, so `x`
//! spans `[-1, 1]` and both axes share the same unit. Coefficients are
//! therefore comparable across image sizes but tied to this convention.
//!
//! The forward map with center `c` and coefficients `K_1..K_Q` is
//!
//! ```text
//! d(p) = c + (1 + sum_q K_q |p - c|^(2q)) * (p - c)
//! ```
//!
//! and the approximate inverse divides by the same polynomial evaluated at
//! the *distorted* radius. The two radii differ, so `u` is not an exact
//! inverse of `d` and the correction degrades away from the center.

use std::io::{Read, Write};

use crate::convolution::{read_f64_le, read_u32_le};
use crate::error::{Error, Result};
use crate::image::{BoundaryCondition, Image};

/// Center and radial coefficients of the even-order polynomial model.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionParams {
    center: (f64, f64),
    coeffs: Vec<f64>,
}

impl DistortionParams {
    pub fn new(center: (f64, f64), coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidDistortion(
                "at least one radial coefficient is required".into(),
            ));
        }
        if coeffs.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidDistortion(
                "radial coefficients must be finite".into(),
            ));
        }
        if !(center.0.is_finite() && center.1.is_finite())
            || center.0.abs() > 1.0
            || center.1.abs() > 1.0
        {
            return Err(Error::InvalidDistortion(format!(
                "center {center:?} lies outside the normalized square"
            )));
        }
        Ok(DistortionParams { center, coeffs })
    }

    /// Identity distortion: centered, single zero coefficient.
    pub fn identity() -> Self {
        DistortionParams {
            center: (0.0, 0.0),
            coeffs: vec![0.0],
        }
    }

    pub fn center(&self) -> (f64, f64) {
        self.center
    }

    /// K_1..K_Q in order.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_identity(&self) -> bool {
        self.coeffs.iter().all(|&k| k == 0.0)
    }

    /// The polynomial `1 + sum_q K_q r2^q` evaluated at a squared radius.
    fn scale_at(&self, r2: f64) -> f64 {
        let mut acc = 1.0;
        let mut pow = 1.0;
        for &k in &self.coeffs {
            pow *= r2;
            acc += k * pow;
        }
        acc
    }

    /// Derivative of `scale_at` with respect to the squared radius.
    fn scale_slope_at(&self, r2: f64) -> f64 {
        let mut acc = 0.0;
        let mut pow = 1.0;
        for (q, &k) in self.coeffs.iter().enumerate() {
            acc += k * (q + 1) as f64 * pow;
            pow *= r2;
        }
        acc
    }

    pub(crate) fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&(self.coeffs.len() as u32).to_le_bytes())?;
        w.write_all(&self.center.0.to_le_bytes())?;
        w.write_all(&self.center.1.to_le_bytes())?;
        for &k in &self.coeffs {
            w.write_all(&k.to_le_bytes())?;
        }
        Ok(())
    }

    pub(crate) fn read_from(r: &mut impl Read) -> Result<Self> {
        let q = read_u32_le(r)? as usize;
        let x0 = read_f64_le(r)?;
        let y0 = read_f64_le(r)?;
        let mut coeffs = Vec::with_capacity(q);
        for _ in 0..q {
            coeffs.push(read_f64_le(r)?);
        }
        DistortionParams::new((x0, y0), coeffs)
    }
}

/// Distort a normalized point: undistorted -> distorted coordinates.
pub fn distort_coords(params: &DistortionParams, p: (f64, f64)) -> (f64, f64) {
    let (x0, y0) = params.center;
    let vx = p.0 - x0;
    let vy = p.1 - y0;
    let s = params.scale_at(vx * vx + vy * vy);
    (x0 + s * vx, y0 + s * vy)
}

/// Approximately undistort a normalized point via the division model.
/// Fails when the polynomial evaluated at the distorted radius is not
/// positive, which marks the coordinate as outside the model's domain.
pub fn undistort_coords(params: &DistortionParams, p: (f64, f64)) -> Result<(f64, f64)> {
    undistort_coords_opt(params, p).ok_or_else(|| {
        Error::InvalidDistortion(format!("nonpositive division denominator at {p:?}"))
    })
}

fn undistort_coords_opt(params: &DistortionParams, p: (f64, f64)) -> Option<(f64, f64)> {
    let (x0, y0) = params.center;
    let vx = p.0 - x0;
    let vy = p.1 - y0;
    let denom = params.scale_at(vx * vx + vy * vy);
    if denom <= 0.0 {
        return None;
    }
    Some((x0 + vx / denom, y0 + vy / denom))
}

/// Forward (distort) or inverse (division-model undistort) coordinate map
/// over the normalized square.
#[derive(Debug, Clone)]
pub enum CoordMap {
    Forward(DistortionParams),
    Inverse(DistortionParams),
}

impl CoordMap {
    /// Map a normalized point; `None` flags out-of-model coordinates
    /// (inverse map with nonpositive denominator).
    pub fn apply(&self, p: (f64, f64)) -> Option<(f64, f64)> {
        match self {
            CoordMap::Forward(params) => Some(distort_coords(params, p)),
            CoordMap::Inverse(params) => undistort_coords_opt(params, p),
        }
    }

    pub fn params(&self) -> &DistortionParams {
        match self {
            CoordMap::Forward(p) | CoordMap::Inverse(p) => p,
        }
    }
}

/// Normalized coordinates of the center of pixel `(i, j)` on an `m x n`
/// grid (isotropic, half-width units).
pub fn normalize_coords(dims: (usize, usize), i: usize, j: usize) -> (f64, f64) {
    normalize_point(dims, j as f64 + 0.5, i as f64 + 0.5)
}

/// Normalize a continuous pixel-space point (x right, y down).
pub fn normalize_point(dims: (usize, usize), px: f64, py: f64) -> (f64, f64) {
    let (m, n) = dims;
    let half = n as f64 / 2.0;
    ((px - half) / half, (py - m as f64 / 2.0) / half)
}

/// Inverse of [`normalize_point`].
pub fn denormalize_point(dims: (usize, usize), x: f64, y: f64) -> (f64, f64) {
    let (m, n) = dims;
    let half = n as f64 / 2.0;
    (x * half + half, y * half + m as f64 / 2.0)
}

/// Resample an image under a coordinate map: output pixel `(i, j)` takes
/// the bilinear sample of the input at the mapped location of its own
/// center. Out-of-model pixels are filled with 0 and counted.
pub fn warp_image(image: &Image, map: &CoordMap, boundary: BoundaryCondition) -> Image {
    warp_image_with_diag(image, map, boundary).0
}

/// As [`warp_image`], also returning the number of out-of-model pixels.
pub fn warp_image_with_diag(
    image: &Image,
    map: &CoordMap,
    boundary: BoundaryCondition,
) -> (Image, usize) {
    let m = image.height();
    let n = image.width();
    let dims = (m, n);
    let mut data = vec![0.0; m * n];
    let mut out_of_model = 0usize;
    for i in 0..m {
        for j in 0..n {
            let p = normalize_coords(dims, i, j);
            match map.apply(p) {
                Some(q) => {
                    let (px, py) = denormalize_point(dims, q.0, q.1);
                    data[i * n + j] = image.sample_at(px, py, boundary);
                }
                None => out_of_model += 1,
            }
        }
    }
    (
        Image::new(m, n, data).expect("warp output is finite"),
        out_of_model,
    )
}

/// Alternating 0/1 blocks tiling an `m x n` image in a `rows x cols`
/// pattern, top-left block white (1).
pub fn render_chessboard(m: usize, n: usize, rows: usize, cols: usize) -> Image {
    assert!(
        rows >= 1 && cols >= 1,
        "chessboard needs at least one block"
    );
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        let bi = i * rows / m;
        for j in 0..n {
            let bj = j * cols / n;
            data[i * n + j] = if (bi + bj) % 2 == 0 { 1.0 } else { 0.0 };
        }
    }
    Image::new(m, n, data).expect("chessboard is finite")
}

/// Forward-map point together with its partial derivatives, used by the
/// estimation gradients.
#[derive(Debug, Clone)]
pub(crate) struct DistortJacobian {
    pub point: (f64, f64),
    /// d(point)/d(K_q) for each coefficient.
    pub coeff: Vec<(f64, f64)>,
    /// d(point)/d(x0) and d(point)/d(y0).
    pub center: [(f64, f64); 2],
}

pub(crate) fn distort_with_jacobian(params: &DistortionParams, p: (f64, f64)) -> DistortJacobian {
    let (x0, y0) = params.center;
    let vx = p.0 - x0;
    let vy = p.1 - y0;
    let r2 = vx * vx + vy * vy;
    let s = params.scale_at(r2);
    let t = params.scale_slope_at(r2);

    let mut coeff = Vec::with_capacity(params.coeffs.len());
    let mut pow = r2;
    for _ in 0..params.coeffs.len() {
        coeff.push((pow * vx, pow * vy));
        pow *= r2;
    }

    // d = c + s(|p-c|^2) (p - c); differentiating in the center couples the
    // fixed-point shift with the radius change.
    let dx0 = ((1.0 - s) - 2.0 * vx * t * vx, -2.0 * vx * t * vy);
    let dy0 = (-2.0 * vy * t * vx, (1.0 - s) - 2.0 * vy * t * vy);

    DistortJacobian {
        point: (x0 + s * vx, y0 + s * vy),
        coeff,
        center: [dx0, dy0],
    }
}
