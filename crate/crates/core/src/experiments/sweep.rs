use serde::{Deserialize, Serialize};

use super::{ExperimentError, Preprocess, Variant};
use crate::exec::Exec;
use crate::imageops::{rotate, scale, Image, InterpMode};
use crate::mnist::Dataset;
use crate::nn::{Network, NnError};

/// The rotation x scale grid of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Degrees in `[0, 360)`.
    pub rotations: Vec<f64>,
    /// Ratios in `(0, 1]`.
    pub scales: Vec<f64>,
    pub variant: Variant,
}

impl SweepSpec {
    /// 0, 30, ..., 330 degrees by 100%, 90%, ..., 40%.
    pub fn default_for(variant: Variant) -> Self {
        Self {
            rotations: (0..12).map(|i| (30 * i) as f64).collect(),
            scales: (0..7).map(|i| (10 - i) as f64 / 10.0).collect(),
            variant,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.rotations.is_empty() || self.scales.is_empty() {
            return Err(ExperimentError::BadSpec(
                "rotation and scale lists must be non-empty".into(),
            ));
        }
        if let Some(r) = self.rotations.iter().find(|r| !(0.0..360.0).contains(*r)) {
            return Err(ExperimentError::BadSpec(format!("rotation {r} outside [0, 360)")));
        }
        if let Some(s) = self.scales.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
            return Err(ExperimentError::BadSpec(format!("scale {s} outside (0, 1]")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub accuracy: f64,
    pub n_samples: usize,
}

/// Accuracy per `(rotation, scale)` cell, indexed `cells[rotation][scale]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub variant: Variant,
    pub rotations: Vec<f64>,
    pub scales: Vec<f64>,
    pub cells: Vec<Vec<Cell>>,
    pub manifest_id: String,
}

impl AccuracyMatrix {
    pub fn rotation_index(&self, deg: f64) -> Option<usize> {
        let deg = deg.rem_euclid(360.0);
        self.rotations.iter().position(|&r| (r - deg).abs() < 1e-9)
    }

    pub fn scale_index(&self, s: f64) -> Option<usize> {
        self.scales.iter().position(|&x| (x - s).abs() < 1e-9)
    }

    /// Accuracy at `(deg, s)`; negative angles wrap into `[0, 360)`.
    pub fn get(&self, deg: f64, s: f64) -> Option<f64> {
        Some(self.cells[self.rotation_index(deg)?][self.scale_index(s)?].accuracy)
    }
}

/// Pipeline stages, reported to a [`PipelineHook`] in application order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Rotate,
    Scale,
    PreFilter,
    Classify,
}

/// Observer for per-image pipeline stages.
pub trait PipelineHook: Sync {
    fn record(&self, rotation: f64, scale: f64, image: usize, stage: Stage);
}

pub struct NoHook;

impl PipelineHook for NoHook {
    fn record(&self, _: f64, _: f64, _: usize, _: Stage) {}
}

const SWEEP_CHUNK: usize = 250;

/// Scores one cell: every test image is rotated, then scaled (both about
/// the image centre, in the Euclidean domain), then pre-filtered, then
/// classified. The network is only read.
pub fn evaluate_cell(
    net: &Network<f32>,
    test: &Dataset,
    rotation: f64,
    factor: f64,
    pre: &Preprocess,
    exec: Exec,
    hook: &dyn PipelineHook,
) -> Result<Cell, ExperimentError> {
    if test.is_empty() {
        return Err(NnError::EmptyDataset.into());
    }
    let hits = exec.map_chunks(
        &test.images,
        SWEEP_CHUNK,
        |start, chunk| -> Result<usize, ExperimentError> {
            let mut inputs: Vec<Image> = Vec::with_capacity(chunk.len());
            for (k, img) in chunk.iter().enumerate() {
                let idx = start + k;
                let c = img.center();
                let r = rotate(img, rotation, c, InterpMode::Bilinear);
                hook.record(rotation, factor, idx, Stage::Rotate);
                let s = scale(&r, factor, c, InterpMode::Bilinear)?;
                hook.record(rotation, factor, idx, Stage::Scale);
                inputs.push(pre.apply(&s));
                hook.record(rotation, factor, idx, Stage::PreFilter);
            }
            let pred = net.predict(&inputs, Exec::Sequential)?;
            for k in 0..chunk.len() {
                hook.record(rotation, factor, start + k, Stage::Classify);
            }
            Ok(pred
                .iter()
                .zip(&test.labels[start..start + chunk.len()])
                .filter(|(p, l)| p == l)
                .count())
        },
    );
    let mut total = 0;
    for h in hits {
        total += h?;
    }
    Ok(Cell {
        accuracy: total as f64 / test.len() as f64,
        n_samples: test.len(),
    })
}

pub fn run_sweep(
    net: &Network<f32>,
    test: &Dataset,
    spec: &SweepSpec,
    pre: &Preprocess,
    exec: Exec,
) -> Result<AccuracyMatrix, ExperimentError> {
    run_sweep_with_hook(net, test, spec, pre, exec, &NoHook, &mut |_, _, _| {})
}

/// Full sweep; `on_cell(rotation, scale, cell)` fires after each cell.
pub fn run_sweep_with_hook(
    net: &Network<f32>,
    test: &Dataset,
    spec: &SweepSpec,
    pre: &Preprocess,
    exec: Exec,
    hook: &dyn PipelineHook,
    on_cell: &mut dyn FnMut(f64, f64, &Cell),
) -> Result<AccuracyMatrix, ExperimentError> {
    spec.validate()?;
    if pre.variant() != spec.variant {
        return Err(ExperimentError::BadSpec(format!(
            "spec is for {} but the pre-filter is {}",
            spec.variant,
            pre.variant()
        )));
    }
    let mut cells = Vec::with_capacity(spec.rotations.len());
    for &r in &spec.rotations {
        let mut row = Vec::with_capacity(spec.scales.len());
        for &s in &spec.scales {
            let cell = evaluate_cell(net, test, r, s, pre, exec, hook)?;
            on_cell(r, s, &cell);
            row.push(cell);
        }
        cells.push(row);
    }
    Ok(AccuracyMatrix {
        variant: spec.variant,
        rotations: spec.rotations.clone(),
        scales: spec.scales.clone(),
        cells,
        manifest_id: String::new(),
    })
}

/// Cellwise accuracy difference `logpolar - euclidean`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffMap {
    pub rotations: Vec<f64>,
    pub scales: Vec<f64>,
    /// `deltas[rotation][scale]`.
    pub deltas: Vec<Vec<f64>>,
}

impl DiffMap {
    pub fn get(&self, deg: f64, s: f64) -> Option<f64> {
        let deg = deg.rem_euclid(360.0);
        let r = self.rotations.iter().position(|&x| (x - deg).abs() < 1e-9)?;
        let c = self.scales.iter().position(|&x| (x - s).abs() < 1e-9)?;
        Some(self.deltas[r][c])
    }

    /// Mean delta over `rotations` (degrees, may be negative) at scale `s`.
    pub fn mean_over(&self, rotations: &[f64], s: f64) -> Option<f64> {
        let vals: Option<Vec<f64>> = rotations.iter().map(|&r| self.get(r, s)).collect();
        let vals = vals?;
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

pub fn diff_map(logpolar: &AccuracyMatrix, euclidean: &AccuracyMatrix) -> Result<DiffMap, ExperimentError> {
    if logpolar.rotations != euclidean.rotations {
        return Err(ExperimentError::GridMismatch(format!(
            "rotations {:?} vs {:?}",
            logpolar.rotations, euclidean.rotations
        )));
    }
    if logpolar.scales != euclidean.scales {
        return Err(ExperimentError::GridMismatch(format!(
            "scales {:?} vs {:?}",
            logpolar.scales, euclidean.scales
        )));
    }
    let deltas = logpolar
        .cells
        .iter()
        .zip(&euclidean.cells)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.accuracy - y.accuracy).collect())
        .collect();
    Ok(DiffMap {
        rotations: logpolar.rotations.clone(),
        scales: logpolar.scales.clone(),
        deltas,
    })
}
