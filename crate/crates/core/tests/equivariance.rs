//! Rotation and scale acting on real digits become column and row shifts of
//! the log-polar image.
//!
//! Only quarter turns permute pixels exactly; every other angle and every
//! scale goes through a second bilinear resampling, so the shifted images
//! agree up to that blur. The tests pin the geometry (direction and size of
//! the shift) and the size of the residual.

mod common;

use logpolar_core::imageops::{circular_shift_columns, rotate, scale, shift_rows, Image, InterpMode};
use logpolar_core::logpolar::{
    annulus_mean_abs_diff, from_logpolar, make_grid, to_logpolar, LogPolarConfig, SampleGrid,
};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N_DIGITS: usize = 100;

fn digits() -> Option<Vec<&'static Image>> {
    let (_, test) = common::mnist()?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    Some(
        sample(&mut rng, test.len(), N_DIGITS)
            .iter()
            .map(|i| &test.images[i])
            .collect(),
    )
}

fn lp(img: &Image, grid: &SampleGrid) -> Image {
    to_logpolar(img, grid, InterpMode::Bilinear)
}

/// Mean abs difference over the first `rows` rows.
fn head_diff(a: &Image, b: &Image, rows: usize) -> f64 {
    let n = rows * a.width();
    a.data()[..n]
        .iter()
        .zip(&b.data()[..n])
        .map(|(p, q)| (p - q).abs() as f64)
        .sum::<f64>()
        / n as f64
}

fn correlation(a: &[f32], b: &[f32]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64 - ma, y as f64 - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    sab / (saa * sbb).sqrt()
}

fn mean<F: Fn(&Image) -> f64>(digits: &[&Image], f: F) -> f64 {
    digits.iter().map(|d| f(d)).sum::<f64>() / digits.len() as f64
}

#[test]
fn quarter_turn_is_an_exact_column_shift() {
    let Some(digits) = digits() else { return };
    let grid = make_grid(&LogPolarConfig::mnist(28, 28)).unwrap();
    for img in &digits {
        let rotated = lp(&rotate(img, 90.0, img.center(), InterpMode::Bilinear), &grid);
        assert!(rotated.mean_abs_diff(&circular_shift_columns(&lp(img, &grid), 7)) < 1e-6);
    }
}

#[test]
fn grid_step_rotations_shift_columns_forward() {
    let Some(digits) = digits() else { return };
    let cfg = LogPolarConfig::mnist(28, 28);
    let grid = make_grid(&cfg).unwrap();
    for k in 1..=11isize {
        let angle = 360.0 * k as f64 / cfg.n_theta as f64;
        let diff = |shift: isize| {
            mean(&digits, |img| {
                let rotated = lp(&rotate(img, angle, img.center(), InterpMode::Bilinear), &grid);
                rotated.mean_abs_diff(&circular_shift_columns(&lp(img, &grid), shift))
            })
        };
        let (fwd, back) = (diff(k), diff(-k));
        eprintln!("k={k:2}: +k {fwd:.4}  -k {back:.4}");
        // The residual is one extra bilinear pass over the digit: about a
        // quarter of the wrong-direction error at k=1 and far less beyond.
        assert!(fwd < 0.04, "k={k}: {fwd}");
        assert!(fwd * 4.0 < back, "k={k}: +k {fwd} vs -k {back}");
    }
}

#[test]
fn scaling_shifts_rows_toward_the_fovea() {
    let Some(digits) = digits() else { return };
    let cfg = LogPolarConfig::mnist(28, 28);
    let grid = make_grid(&cfg).unwrap();
    for s in [0.9, 0.8, 0.7, 0.6, 0.5] {
        let k = cfg.row_shift_for_scale(s).round() as isize;
        let scaled: Vec<Image> = digits
            .iter()
            .map(|img| lp(&scale(img, s, img.center(), InterpMode::Bilinear).unwrap(), &grid))
            .collect();
        let diff_at = |shift: isize| {
            let rows = cfg.n_rho - (k + 1) as usize;
            digits
                .iter()
                .zip(&scaled)
                .map(|(img, sc)| head_diff(sc, &shift_rows(&lp(img, &grid), -shift, 0.0), rows))
                .sum::<f64>()
                / digits.len() as f64
        };
        let (d_minus, d, d_plus) = (diff_at(k - 1), diff_at(k), diff_at(k + 1));
        let rows = cfg.n_rho - k as usize;
        let corr = digits
            .iter()
            .zip(&scaled)
            .map(|(img, sc)| {
                let n = rows * cfg.n_theta;
                correlation(&sc.data()[..n], &shift_rows(&lp(img, &grid), -k, 0.0).data()[..n])
            })
            .sum::<f64>()
            / digits.len() as f64;
        eprintln!("s={s}: k={k} diff {d:.4} (k-1 {d_minus:.4}, k+1 {d_plus:.4}) mean correlation {corr:.4}");
        assert!(
            d < d_minus && d <= d_plus * 1.05,
            "s={s}: the predicted shift is not the best integer shift"
        );
        assert!(corr > 0.9, "s={s}: correlation {corr}");
    }
}

#[test]
fn inverse_reconstructs_digits_inside_the_annulus() {
    let Some(digits) = digits() else { return };
    for n in [28, 40] {
        let cfg = LogPolarConfig::mnist(n, n);
        let grid = make_grid(&cfg).unwrap();
        let err = mean(&digits, |img| {
            let back = from_logpolar(&lp(img, &grid), &cfg, 28, 28).unwrap();
            annulus_mean_abs_diff(img, &back, &cfg)
        });
        eprintln!("{n}x{n}: annulus mean abs diff {err:.4}");
        assert!(err <= 0.05, "{n}x{n}: {err}");
    }
}
