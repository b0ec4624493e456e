//! Forward and approximate inverse log-polar resampling.
//!
//! A point `(x, y)` maps to `rho = ln r` and `theta = atan2(y - yc, x - xc)`
//! with `r` the Euclidean distance to the centre. Taking the log of the
//! squared distance instead only doubles `rho`, and the factor disappears once
//! `rho` is normalised onto the fixed row grid, so plain `ln r` is used.
//!
//! Output layout: `theta` runs along columns and `rho` along rows, row 0 being
//! the innermost ring. Rotating the source about the centre by one angular step
//! `2*pi/n_theta` therefore shifts the output one column to the right
//! (circularly), and shrinking the source by `s` moves content
//! `(n_rho - 1) * ln(1/s) / ln(r_max/r_min)` rows toward row 0.

use std::f64::consts::TAU;

use thiserror::Error;

use crate::exec::Exec;
use crate::imageops::{sample, Image, InterpMode};

#[derive(Debug, Error, PartialEq)]
pub enum LogPolarError {
    #[error("radii must satisfy 0 < r_min < r_max (got r_min={r_min}, r_max={r_max})")]
    BadRadius { r_min: f64, r_max: f64 },
    #[error("grid must be at least 2x2 (got n_theta={n_theta}, n_rho={n_rho})")]
    BadGridSize { n_theta: usize, n_rho: usize },
    #[error("log-polar coordinates are undefined at the centre")]
    CenterSingularity,
    #[error("log-polar image is {got_w}x{got_h}, config expects {want_w}x{want_h}")]
    DimensionMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
}

/// Geometry of the log-polar output grid.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LogPolarConfig {
    pub center: (f64, f64),
    pub r_min: f64,
    pub r_max: f64,
    /// Output columns (angular samples).
    pub n_theta: usize,
    /// Output rows (radial samples).
    pub n_rho: usize,
    /// Angle of column 0, radians; 0 points along +x.
    pub theta_zero: f64,
}

pub const MNIST_R_MIN: f64 = 0.5;
pub const MNIST_R_MAX: f64 = 14.0;

impl LogPolarConfig {
    /// Centred on a 28x28 digit: half-pixel fovea out to the inscribed circle.
    pub fn mnist(n_theta: usize, n_rho: usize) -> Self {
        Self {
            center: (13.5, 13.5),
            r_min: MNIST_R_MIN,
            r_max: MNIST_R_MAX,
            n_theta,
            n_rho,
            theta_zero: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), LogPolarError> {
        if !(self.r_min > 0.0 && self.r_max > self.r_min && self.r_max.is_finite()) {
            return Err(LogPolarError::BadRadius {
                r_min: self.r_min,
                r_max: self.r_max,
            });
        }
        if self.n_theta < 2 || self.n_rho < 2 {
            return Err(LogPolarError::BadGridSize {
                n_theta: self.n_theta,
                n_rho: self.n_rho,
            });
        }
        Ok(())
    }

    /// Radius of row `i`: geometric spacing from `r_min` to `r_max`.
    pub fn radius(&self, i: usize) -> f64 {
        let t = i as f64 / (self.n_rho - 1) as f64;
        self.r_min * (self.r_max / self.r_min).powf(t)
    }

    /// Angle of column `j`, radians.
    pub fn angle(&self, j: usize) -> f64 {
        self.theta_zero + TAU * j as f64 / self.n_theta as f64
    }

    /// Log-radius step between consecutive rows.
    pub fn rho_step(&self) -> f64 {
        (self.r_max / self.r_min).ln() / (self.n_rho - 1) as f64
    }

    /// Columns the output shifts right when the source rotates by `angle_deg`.
    pub fn column_shift_for_rotation(&self, angle_deg: f64) -> f64 {
        angle_deg / 360.0 * self.n_theta as f64
    }

    /// Rows the output content moves toward row 0 when the source shrinks by `factor`.
    pub fn row_shift_for_scale(&self, factor: f64) -> f64 {
        (1.0 / factor).ln() / self.rho_step()
    }

    pub fn compression_factor(&self, src_w: usize, src_h: usize) -> f64 {
        compression_factor(self, src_w, src_h)
    }
}

/// Ratio of log-polar output pixels to source pixels.
pub fn compression_factor(cfg: &LogPolarConfig, src_w: usize, src_h: usize) -> f64 {
    (cfg.n_theta * cfg.n_rho) as f64 / (src_w * src_h) as f64
}

/// `(rho, theta)` of point `p` about `center`, `theta` in `[0, 2*pi)`.
pub fn rho_theta(p: (f64, f64), center: (f64, f64)) -> Result<(f64, f64), LogPolarError> {
    let dx = p.0 - center.0;
    let dy = p.1 - center.1;
    let r = dx.hypot(dy);
    if r == 0.0 {
        return Err(LogPolarError::CenterSingularity);
    }
    let theta = dy.atan2(dx).rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative angles.
    let theta = if theta >= TAU { 0.0 } else { theta };
    Ok((r.ln(), theta))
}

/// Cartesian source coordinates for every log-polar output cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleGrid {
    cfg: LogPolarConfig,
    coords: Vec<(f64, f64)>,
}

impl SampleGrid {
    pub fn config(&self) -> &LogPolarConfig {
        &self.cfg
    }

    pub fn n_theta(&self) -> usize {
        self.cfg.n_theta
    }

    pub fn n_rho(&self) -> usize {
        self.cfg.n_rho
    }

    /// Source coordinate of row `i` (rho), column `j` (theta).
    pub fn coord(&self, i: usize, j: usize) -> (f64, f64) {
        self.coords[i * self.cfg.n_theta + j]
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }
}

pub fn make_grid(cfg: &LogPolarConfig) -> Result<SampleGrid, LogPolarError> {
    cfg.validate()?;
    let (xc, yc) = cfg.center;
    let trig: Vec<(f64, f64)> = (0..cfg.n_theta).map(|j| cfg.angle(j).sin_cos()).collect();
    let mut coords = Vec::with_capacity(cfg.n_theta * cfg.n_rho);
    for i in 0..cfg.n_rho {
        let r = cfg.radius(i);
        coords.extend(trig.iter().map(|&(sin, cos)| (xc + r * cos, yc + r * sin)));
    }
    Ok(SampleGrid { cfg: *cfg, coords })
}

/// Resamples `img` onto `grid`: `n_rho` rows by `n_theta` columns.
pub fn to_logpolar(img: &Image, grid: &SampleGrid, mode: InterpMode) -> Image {
    let data = grid.coords.iter().map(|&(sx, sy)| sample(img, sx, sy, mode)).collect();
    Image::new(grid.cfg.n_theta, grid.cfg.n_rho, data).expect("grid dimensions")
}

/// Transforms a batch of images, preserving order.
pub fn to_logpolar_batch(images: &[Image], grid: &SampleGrid, mode: InterpMode, exec: Exec) -> Vec<Image> {
    exec.map_chunks(images, 256, |_, chunk| {
        chunk.iter().map(|img| to_logpolar(img, grid, mode)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Approximate inverse for visualisation: each Cartesian pixel inside the
/// annulus `[r_min, r_max]` reads `lp` bilinearly (circular in theta);
/// everything else is 0.
pub fn from_logpolar(lp: &Image, cfg: &LogPolarConfig, out_w: usize, out_h: usize) -> Result<Image, LogPolarError> {
    cfg.validate()?;
    if lp.width() != cfg.n_theta || lp.height() != cfg.n_rho {
        return Err(LogPolarError::DimensionMismatch {
            got_w: lp.width(),
            got_h: lp.height(),
            want_w: cfg.n_theta,
            want_h: cfg.n_rho,
        });
    }
    let (nt, nr) = (cfg.n_theta, cfg.n_rho);
    let step = cfg.rho_step();
    let mut out = Image::zeros(out_w, out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let Ok((rho, theta)) = rho_theta((x as f64, y as f64), cfg.center) else {
                continue;
            };
            let r = rho.exp();
            if r < cfg.r_min || r > cfg.r_max {
                continue;
            }
            let fi = ((rho - cfg.r_min.ln()) / step).clamp(0.0, (nr - 1) as f64);
            let fj = ((theta - cfg.theta_zero) / TAU * nt as f64).rem_euclid(nt as f64);
            let i0 = (fi.floor() as usize).min(nr - 1);
            let i1 = (i0 + 1).min(nr - 1);
            let ti = fi - i0 as f64;
            let j0 = (fj.floor() as usize) % nt;
            let j1 = (j0 + 1) % nt;
            let tj = fj - fj.floor();
            let v = |i: usize, j: usize| lp.get(j, i) as f64;
            let inner = v(i0, j0) * (1.0 - tj) + v(i0, j1) * tj;
            let outer = v(i1, j0) * (1.0 - tj) + v(i1, j1) * tj;
            out.set(x, y, (inner * (1.0 - ti) + outer * ti) as f32);
        }
    }
    Ok(out)
}

/// Mean absolute difference restricted to pixels whose radius lies in the
/// sampled annulus.
pub fn annulus_mean_abs_diff(a: &Image, b: &Image, cfg: &LogPolarConfig) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for y in 0..a.height() {
        for x in 0..a.width() {
            let r = (x as f64 - cfg.center.0).hypot(y as f64 - cfg.center.1);
            if r >= cfg.r_min && r <= cfg.r_max {
                total += (a.get(x, y) as f64 - b.get(x, y) as f64).abs();
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}
