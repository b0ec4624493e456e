use serde::{Deserialize, Serialize};

use super::{run_baseline, ExperimentError, Preprocess};
use crate::exec::Exec;
use crate::imageops::InterpMode;
use crate::logpolar::LogPolarConfig;
use crate::mnist::Dataset;
use crate::nn::{EpochReport, Network, NnError, TrainConfig};

/// One retrained log-polar model at a given output resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionPoint {
    pub n_theta: usize,
    pub n_rho: usize,
    pub compression_factor: f64,
    pub test_accuracy: f64,
    pub epochs: usize,
}

/// `(n_theta, n_rho)`.
pub type Grid = (usize, usize);

/// `(n_theta, n_rho)` grids from full resolution down to about 10% of the
/// 28x28 source.
pub fn default_grids() -> Vec<(usize, usize)> {
    vec![
        (28, 28),
        (24, 24),
        (20, 20),
        (16, 16),
        (16, 10),
        (14, 11),
        (12, 10),
        (10, 8),
    ]
}

/// Drops repeated grids, keeping first occurrences. Returns the kept list
/// and the duplicates that were removed.
pub fn dedup_grids(grids: &[(usize, usize)]) -> (Vec<Grid>, Vec<Grid>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for &g in grids {
        if kept.contains(&g) {
            dropped.push(g);
        } else {
            kept.push(g);
        }
    }
    (kept, dropped)
}

/// Trains a fresh CNN on `train` resampled to `grid` and scores it on `test`.
pub fn compression_point(
    train: &Dataset,
    test: &Dataset,
    grid: (usize, usize),
    cfg: &TrainConfig,
    exec: Exec,
    on_epoch: &mut dyn FnMut(&EpochReport),
) -> Result<(CompressionPoint, Network<f32>), ExperimentError> {
    let (w, h) = train.dims().ok_or(NnError::EmptyDataset)?;
    let lp = LogPolarConfig::mnist(grid.0, grid.1);
    let pre = Preprocess::for_variant(super::Variant::LogPolar, &lp, InterpMode::Bilinear)?;
    let (net, report) = run_baseline(&pre, train, test, cfg, exec, on_epoch)?;
    let point = CompressionPoint {
        n_theta: grid.0,
        n_rho: grid.1,
        compression_factor: lp.compression_factor(w, h),
        test_accuracy: report.final_accuracy().unwrap_or(0.0),
        epochs: cfg.epochs,
    };
    Ok((point, net))
}

/// Retrains once per grid; results sorted by ascending compression factor.
pub fn compression_sweep(
    train: &Dataset,
    test: &Dataset,
    grids: &[(usize, usize)],
    cfg: &TrainConfig,
    exec: Exec,
    on_point: &mut dyn FnMut(&CompressionPoint),
) -> Result<Vec<CompressionPoint>, ExperimentError> {
    if grids.is_empty() {
        return Err(ExperimentError::BadSpec("grid list is empty".into()));
    }
    for &(t, r) in grids {
        LogPolarConfig::mnist(t, r).validate()?;
    }
    let (grids, _) = dedup_grids(grids);
    let mut points = Vec::with_capacity(grids.len());
    for g in grids {
        let (p, _) = compression_point(train, test, g, cfg, exec, &mut |_| {})?;
        on_point(&p);
        points.push(p);
    }
    points.sort_by(|a, b| a.compression_factor.total_cmp(&b.compression_factor));
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids_span_the_range() {
        let f: Vec<f64> = default_grids()
            .iter()
            .map(|&(t, r)| LogPolarConfig::mnist(t, r).compression_factor(28, 28))
            .collect();
        assert_eq!(f[0], 1.0);
        assert!(f.iter().any(|x| (0.19..=0.21).contains(x)));
        assert!(*f.last().unwrap() < 0.11);
        assert_eq!(dedup_grids(&default_grids()).0.len(), 8);
    }

    #[test]
    fn dedup_keeps_first_and_reports_the_rest() {
        let (kept, dropped) = dedup_grids(&[(16, 10), (28, 28), (16, 10), (16, 10)]);
        assert_eq!(kept, vec![(16, 10), (28, 28)]);
        assert_eq!(dropped, vec![(16, 10), (16, 10)]);
    }

    #[test]
    fn rejects_bad_grids() {
        let d = Dataset::new(vec![], vec![], crate::mnist::Split::Train).unwrap();
        let cfg = TrainConfig::default();
        assert!(compression_sweep(&d, &d, &[], &cfg, Exec::Sequential, &mut |_| {}).is_err());
        assert!(matches!(
            compression_sweep(&d, &d, &[(1, 10)], &cfg, Exec::Sequential, &mut |_| {}),
            Err(ExperimentError::LogPolar(_))
        ));
    }

    #[test]
    fn full_grid_entry_is_the_logpolar_baseline() {
        use crate::imageops::Image;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut data = |n: usize, split| {
            let images = (0..n)
                .map(|_| Image::new(28, 28, (0..784).map(|_| rng.random::<f32>()).collect()).unwrap())
                .collect();
            let labels = (0..n).map(|i| (i % 10) as u8).collect();
            Dataset::new(images, labels, split).unwrap()
        };
        let train = data(40, crate::mnist::Split::Train);
        let test = data(20, crate::mnist::Split::Test);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let (point, net) = compression_point(&train, &test, (28, 28), &cfg, Exec::Sequential, &mut |_| {}).unwrap();
        let pre = Preprocess::for_variant(
            super::super::Variant::LogPolar,
            &LogPolarConfig::mnist(28, 28),
            InterpMode::Bilinear,
        )
        .unwrap();
        let (base, report) = run_baseline(&pre, &train, &test, &cfg, Exec::Sequential, &mut |_| {}).unwrap();
        assert_eq!(point.compression_factor, 1.0);
        assert_eq!(net.checksum(), base.checksum());
        assert_eq!(Some(point.test_accuracy), report.final_accuracy());
    }
}
