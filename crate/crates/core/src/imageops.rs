//! Grayscale rasters and the Euclidean-plane warps applied to them.
//!
//! Raster convention used throughout the crate: origin at the top-left pixel
//! centre, `x` to the right, `y` downward. Rotation angles are positive
//! counter-clockwise in conventional math axes; because `y` points down this
//! shows up as clockwise on screen. A point offset `(dx, dy)` from the centre
//! moves to `(dx cos a - dy sin a, dx sin a + dy cos a)`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("pixel buffer holds {got} values, expected {width}x{height}")]
    BadLength { width: usize, height: usize, got: usize },
    #[error("scale factor {0} outside (0, 1]")]
    BadFactor(f64),
}

/// Dense row-major grayscale image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::BadLength {
                width,
                height,
                got: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds an image from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[&[f32]]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == width), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[f32] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Geometric centre, `((w-1)/2, (h-1)/2)`; `(13.5, 13.5)` for MNIST.
    pub fn center(&self) -> (f64, f64) {
        ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        if self.data.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum();
        total / self.data.len() as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum InterpMode {
    Nearest,
    #[default]
    Bilinear,
}

/// Bilinear sample at real pixel coordinates with zero padding.
///
/// Coordinates outside `[-0.5, w-0.5] x [-0.5, h-0.5]` return 0; inside that
/// box, neighbours that fall off the raster contribute 0.
pub fn bilinear_sample(img: &Image, sx: f64, sy: f64) -> f32 {
    let (w, h) = (img.width as f64, img.height as f64);
    if !(sx >= -0.5 && sx <= w - 0.5 && sy >= -0.5 && sy <= h - 0.5) {
        return 0.0;
    }
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let px = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= img.width as isize || y >= img.height as isize {
            0.0
        } else {
            img.get(x as usize, y as usize) as f64
        }
    };
    let top = px(x0, y0) * (1.0 - fx) + px(x0 + 1, y0) * fx;
    let bottom = px(x0, y0 + 1) * (1.0 - fx) + px(x0 + 1, y0 + 1) * fx;
    (top * (1.0 - fy) + bottom * fy) as f32
}

pub fn nearest_sample(img: &Image, sx: f64, sy: f64) -> f32 {
    let x = (sx + 0.5).floor();
    let y = (sy + 0.5).floor();
    if x < 0.0 || y < 0.0 || x >= img.width as f64 || y >= img.height as f64 {
        0.0
    } else {
        img.get(x as usize, y as usize)
    }
}

#[inline]
pub fn sample(img: &Image, sx: f64, sy: f64, mode: InterpMode) -> f32 {
    match mode {
        InterpMode::Nearest => nearest_sample(img, sx, sy),
        InterpMode::Bilinear => bilinear_sample(img, sx, sy),
    }
}

/// Pull-warp: every output pixel `(x, y)` reads the source at `map(x, y)`.
pub fn warp<F>(img: &Image, mode: InterpMode, map: F) -> Image
where
    F: Fn(f64, f64) -> (f64, f64),
{
    let mut out = Image::zeros(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            let (sx, sy) = map(x as f64, y as f64);
            out.data[y * img.width + x] = sample(img, sx, sy, mode);
        }
    }
    out
}

/// Rotates by `angle_deg` about `center`; uncovered pixels become 0.
pub fn rotate(img: &Image, angle_deg: f64, center: (f64, f64), mode: InterpMode) -> Image {
    let a = angle_deg.rem_euclid(360.0);
    if a == 0.0 {
        return img.clone();
    }
    let (sin, cos) = a.to_radians().sin_cos();
    let (xc, yc) = center;
    // Inverse map: rotate the destination offset by -a.
    warp(img, mode, |x, y| {
        let (dx, dy) = (x - xc, y - yc);
        (xc + dx * cos + dy * sin, yc - dx * sin + dy * cos)
    })
}

/// Shrinks content by `factor` about `center`; uncovered pixels become 0.
pub fn scale(img: &Image, factor: f64, center: (f64, f64), mode: InterpMode) -> Result<Image, ImageError> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(ImageError::BadFactor(factor));
    }
    if factor == 1.0 {
        return Ok(img.clone());
    }
    let (xc, yc) = center;
    let inv = 1.0 / factor;
    Ok(warp(img, mode, |x, y| (xc + (x - xc) * inv, yc + (y - yc) * inv)))
}

/// Output column `j` is input column `(j - k) mod w`.
pub fn circular_shift_columns(img: &Image, k: isize) -> Image {
    let w = img.width;
    if w == 0 {
        return img.clone();
    }
    let k = k.rem_euclid(w as isize) as usize;
    let mut out = Image::zeros(w, img.height);
    for y in 0..img.height {
        let src = img.row(y);
        let dst = &mut out.data[y * w..(y + 1) * w];
        dst[k..].copy_from_slice(&src[..w - k]);
        dst[..k].copy_from_slice(&src[w - k..]);
    }
    out
}

/// Non-circular vertical shift: output row `i` is input row `i - k`, vacated
/// rows take `fill`. Negative `k` moves content up.
pub fn shift_rows(img: &Image, k: isize, fill: f32) -> Image {
    let (w, h) = (img.width, img.height);
    let mut out = Image::filled(w, h, fill);
    for i in 0..h as isize {
        let src = i - k;
        if src >= 0 && src < h as isize {
            let s = src as usize * w;
            out.data[i as usize * w..(i as usize + 1) * w].copy_from_slice(&img.data[s..s + w]);
        }
    }
    out
}
