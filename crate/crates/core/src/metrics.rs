//! Evaluation metrics over 2D keypoint sequences and masks.

use nalgebra::{DMatrix, Vector2};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{Keypoints, Mask};

/// Default PCK threshold as a fraction of the longer image side.
pub const PCK_ALPHA: f64 = 0.1;
/// Ground-truth displacements shorter than this (pixels) are skipped by [`velocity_error`].
pub const VELOCITY_EPSILON: f64 = 1e-6;

/// Linear map from source keypoints to target keypoints, shared by both coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointMap {
    /// `target_K × source_K`.
    pub matrix: Array2<f64>,
    /// Mean squared 2D error on the fitting data.
    pub residual: f64,
    pub rank_deficient: bool,
}

impl KeypointMap {
    pub fn identity(k: usize) -> Self {
        Self {
            matrix: Array2::eye(k),
            residual: 0.0,
            rank_deficient: false,
        }
    }

    pub fn source_count(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn target_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, points: &[Vector2<f64>]) -> Result<Keypoints> {
        if points.len() != self.source_count() {
            return Err(Error::dim(format!(
                "map expects {} keypoints, got {}",
                self.source_count(),
                points.len()
            )));
        }
        Ok(self
            .matrix
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(points).map(|(m, p)| *m * p).sum())
            .collect())
    }

    pub fn apply_sequence(&self, frames: &[Keypoints]) -> Result<Vec<Keypoints>> {
        frames.iter().map(|f| self.apply(f)).collect()
    }
}

fn check_paired(pred: &[Keypoints], gt: &[Keypoints]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::dim(format!(
            "{} predicted frames vs {} ground-truth frames",
            pred.len(),
            gt.len()
        )));
    }
    if pred.iter().zip(gt).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::dim(
            "predicted and ground-truth keypoint counts differ",
        ));
    }
    Ok(())
}

/// Least-squares linear map taking `pred` keypoints to `gt` keypoints (minimum-norm when rank deficient).
pub fn fit_linear_keypoint_map(pred: &[Keypoints], gt: &[Keypoints]) -> Result<KeypointMap> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::dim(
            "fitting needs the same nonzero number of predicted and ground-truth frames",
        ));
    }
    let src = pred[0].len();
    let dst = gt[0].len();
    if pred.iter().any(|f| f.len() != src) || gt.iter().any(|f| f.len() != dst) {
        return Err(Error::dim("keypoint count varies between frames"));
    }
    if pred.len() < src {
        return Err(Error::invalid(format!(
            "fitting a map from {src} keypoints needs at least {src} frames, got {}",
            pred.len()
        )));
    }
    let rows = 2 * pred.len();
    let x = DMatrix::from_fn(rows, src, |r, j| pred[r / 2][j][r % 2]);
    let y = DMatrix::from_fn(rows, dst, |r, k| gt[r / 2][k][r % 2]);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * rows.max(src) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let rank_deficient = rank < src;
    if rank_deficient {
        log::warn!("keypoint map system has rank {rank} < {src}; using the minimum-norm solution");
    }
    let pinv = svd
        .pseudo_inverse(tol)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let mt = pinv * &y;
    let fitted = &x * &mt;
    let residual = (fitted - y).norm_squared() / (pred.len() * dst) as f64;
    Ok(KeypointMap {
        matrix: Array2::from_shape_fn((dst, src), |(k, j)| mt[(j, k)]),
        residual,
        rank_deficient,
    })
}

/// Fraction of keypoints with error below `alpha · max(h, w)`.
pub fn pck_at_threshold(
    pred: &[Vector2<f64>],
    gt: &[Vector2<f64>],
    height: usize,
    width: usize,
    alpha: f64,
) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::invalid("PCK of an empty keypoint set"));
    }
    if pred.len() != gt.len() {
        return Err(Error::dim(
            "predicted and ground-truth keypoint counts differ",
        ));
    }
    let threshold = alpha * height.max(width) as f64;
    let hits = pred
        .iter()
        .zip(gt)
        .filter(|(a, b)| (*a - *b).norm() < threshold)
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

/// `|A ∩ B| / |A ∪ B|`, with two empty masks scoring 1.
pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::dim(format!(
            "mask sizes differ: {}×{} vs {}×{}",
            a.height, a.width, b.height, b.width
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.data.iter().zip(&b.data) {
        let (x, y) = (*x != 0, *y != 0);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

pub fn velocity_error(pred: &[Keypoints], gt: &[Keypoints]) -> Result<f64> {
    velocity_error_with(pred, gt, VELOCITY_EPSILON)
}

/// Mean over frame pairs of the mean over keypoints of `‖δ̂ − δ‖ / ‖δ‖`,
/// skipping keypoints whose ground-truth displacement is shorter than `epsilon`.
pub fn velocity_error_with(pred: &[Keypoints], gt: &[Keypoints], epsilon: f64) -> Result<f64> {
    check_paired(pred, gt)?;
    if pred.len() < 2 {
        return Err(Error::invalid("velocity error needs at least 2 frames"));
    }
    let mut frame_sum = 0.0;
    let mut frames = 0usize;
    for t in 1..pred.len() {
        let mut sum = 0.0;
        let mut n = 0usize;
        for k in 0..pred[t].len() {
            let d = gt[t][k] - gt[t - 1][k];
            let norm = d.norm();
            if norm < epsilon {
                continue;
            }
            let dh = pred[t][k] - pred[t - 1][k];
            sum += (dh - d).norm() / norm;
            n += 1;
        }
        if n > 0 {
            frame_sum += sum / n as f64;
            frames += 1;
        }
    }
    if frames == 0 {
        return Err(Error::UndefinedMetric(
            "velocity error: every ground-truth displacement is below epsilon".into(),
        ));
    }
    Ok(frame_sum / frames as f64)
}

/// Mean over interior frames and keypoints of `‖â_t − a_t‖` with `a_t = x_{t+1} − 2x_t + x_{t−1}`.
pub fn acceleration_error(pred: &[Keypoints], gt: &[Keypoints]) -> Result<f64> {
    check_paired(pred, gt)?;
    if pred.len() < 3 {
        return Err(Error::invalid("acceleration error needs at least 3 frames"));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in 1..pred.len() - 1 {
        for k in 0..pred[t].len() {
            let a = gt[t + 1][k] - 2.0 * gt[t][k] + gt[t - 1][k];
            let ah = pred[t + 1][k] - 2.0 * pred[t][k] + pred[t - 1][k];
            sum += (ah - a).norm();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid(
            "acceleration error of sequences without keypoints",
        ));
    }
    Ok(sum / n as f64)
}

/// Mean squared 2D keypoint error over all frames and keypoints.
pub fn sequence_mse(a: &[Keypoints], b: &[Keypoints]) -> Result<f64> {
    check_paired(a, b)?;
    let n: usize = a.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(Error::invalid("sequence MSE of empty sequences"));
    }
    let s: f64 = a
        .iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).norm_squared()))
        .sum();
    Ok(s / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chamfer {
    /// Mean over ground truth of the distance to the closest generated sequence.
    pub forward: f64,
    /// Mean over generated sequences of the distance to the closest ground truth.
    pub backward: f64,
    pub mcd: f64,
}

/// Bidirectional nearest-sequence distance between two sets of keypoint sequences.
pub fn motion_chamfer_distance(
    generated: &[Vec<Keypoints>],
    gt: &[Vec<Keypoints>],
) -> Result<Chamfer> {
    if generated.is_empty() || gt.is_empty() {
        return Err(Error::invalid("motion chamfer distance of an empty set"));
    }
    let mut d = Array2::zeros((gt.len(), generated.len()));
    for (i, g) in gt.iter().enumerate() {
        for (j, s) in generated.iter().enumerate() {
            d[[i, j]] = sequence_mse(s, g)?;
        }
    }
    let row_min = |r: ndarray::ArrayView1<f64>| r.iter().copied().fold(f64::INFINITY, f64::min);
    let forward = d.rows().into_iter().map(row_min).sum::<f64>() / gt.len() as f64;
    let backward = d.columns().into_iter().map(row_min).sum::<f64>() / generated.len() as f64;
    Ok(Chamfer {
        forward,
        backward,
        mcd: 0.5 * (forward + backward),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub pck: f64,
    pub mask_iou: f64,
    pub velocity_error: f64,
    pub acceleration_error: f64,
    pub mcd_forward: f64,
    pub mcd_backward: f64,
    pub mcd: f64,
    pub sequences: usize,
    pub frames: usize,
    pub generated: usize,
}
