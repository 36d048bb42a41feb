//! Training losses, as plain functions on values and as graph terms for training.
//!
//! The desk-scale reconstruction term compares projected joints with target
//! keypoints. It stands in for the image, mask and feature reconstruction
//! terms together, so in the objectives it carries the combined weight
//! `1 + λ_m + λ_f`.

use ndarray::{array, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motionvae::LatentDistribution;
use crate::nn::{Graph, Var};
use crate::skeleton::{
    keypoints2d, keypoints_jacobian, Camera, Keypoints, MotionSequence, Pose, Skeleton,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub mask: f64,
    pub feature: f64,
    pub shape: f64,
    pub temporal: f64,
    pub kl: f64,
    pub teacher: f64,
    /// Multiplies the normalized keypoint error; the default (`64·64`) restores
    /// squared-pixel units for a 64 × 64 raster.
    pub reconstruction_scale: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mask: 10.0,
            feature: 10.0,
            shape: 0.1,
            temporal: 1.0,
            kl: 0.001,
            teacher: 1.0,
            reconstruction_scale: 4096.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            mask: 0.0,
            feature: 0.0,
            shape: 0.0,
            temporal: 0.0,
            kl: 0.0,
            teacher: 0.0,
            reconstruction_scale: 1.0,
        }
    }

    /// Weight carried by the keypoint reconstruction proxy.
    pub fn reconstruction(&self) -> f64 {
        self.reconstruction_scale * (1.0 + self.mask + self.feature)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mask,
            self.feature,
            self.shape,
            self.temporal,
            self.kl,
            self.teacher,
            self.reconstruction_scale,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Itemized loss values (batch means) and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub reconstruction: f64,
    pub shape: f64,
    pub temporal: f64,
    pub kl: f64,
    pub teacher: f64,
    pub total: f64,
}

impl LossReport {
    pub fn weighted_sum(&self, w: &LossWeights) -> f64 {
        w.reconstruction() * self.reconstruction
            + w.shape * self.shape
            + w.temporal * self.temporal
            + w.kl * self.kl
            + w.teacher * self.teacher
    }

    pub fn recomposition_error(&self, w: &LossWeights) -> f64 {
        (self.total - self.weighted_sum(w)).abs()
    }

    fn with_total(mut self, w: &LossWeights) -> Self {
        self.total = self.weighted_sum(w);
        self
    }
}

fn check_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "sequence lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::dim("pose parameter widths differ"));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `Σ_t (1/K) Σ_k ‖π(x_{t,k}) − u_{t,k}‖² / max(h, w)²`.
pub fn keypoint_recon_loss(
    skel: &Skeleton,
    pred: &MotionSequence,
    targets: &[Keypoints],
    cam: &Camera,
) -> Result<f64> {
    if pred.len() != targets.len() {
        return Err(Error::dim(format!(
            "prediction has {} frames, target has {}",
            pred.len(),
            targets.len()
        )));
    }
    let norm = cam.max_side() * cam.max_side();
    let mut total = 0.0;
    for (pose, target) in pred.poses.iter().zip(targets) {
        let kp = keypoints2d(skel, pose, cam)?;
        if kp.len() != target.len() {
            return Err(Error::dim("target keypoint count differs from joint count"));
        }
        let frame: f64 = kp
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).norm_squared())
            .sum();
        total += frame / (kp.len() as f64 * norm);
    }
    Ok(total)
}

/// `Σ_{t≥2} ‖ξ_t − ξ_{t−1}‖²` over whole parameter rows.
pub fn temporal_smoothness(poses: &[Vec<f64>]) -> Result<f64> {
    if poses.len() < 2 {
        return Err(Error::invalid(
            "temporal smoothness needs at least 2 frames",
        ));
    }
    check_rows(&poses[1..], &poses[..poses.len() - 1])?;
    Ok(poses.windows(2).map(|w| sq_dist(&w[1], &w[0])).sum())
}

/// KL divergence from `N(μ, diag(v))` to `N(0, I)`: `Σ ½(v + μ² − 1 − log v)`.
pub fn kl_divergence(mean: &[f64], variance: &[f64]) -> Result<f64> {
    if mean.len() != variance.len() {
        return Err(Error::dim("mean and variance lengths differ"));
    }
    if let Some(v) = variance.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!(
            "variance must be positive, got {v}"
        )));
    }
    Ok(mean
        .iter()
        .zip(variance)
        .map(|(m, v)| 0.5 * (v + m * m - 1.0 - v.ln()))
        .sum())
}

pub fn kl_loss(dist: &LatentDistribution) -> Result<f64> {
    dist.validate()?;
    Ok(dist
        .mean
        .iter()
        .zip(&dist.log_variance)
        .map(|(m, lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
        .sum())
}

/// `Σ_t ‖ξ̂_t − ξ̃_t‖²`.
pub fn teacher_loss(pred: &[Vec<f64>], pseudo_gt: &[Vec<f64>]) -> Result<f64> {
    check_rows(pred, pseudo_gt)?;
    Ok(pred.iter().zip(pseudo_gt).map(|(a, b)| sq_dist(a, b)).sum())
}

/// Shape regularizer and viewpoint term; this crate has no shape model, so it is always zero.
pub fn shape_regularizer() -> f64 {
    0.0
}

/// One sequence's predictions for the video objective.
#[derive(Debug, Clone)]
pub struct VideoSample {
    /// Full pose parameter rows (`6 + 3(B−1)` each).
    pub poses: Vec<Vec<f64>>,
    pub targets: Vec<Keypoints>,
}

#[derive(Debug, Clone)]
pub struct MotionSample {
    pub video: VideoSample,
    pub posterior: LatentDistribution,
    /// Recycled bone rotations from the first phase (`3(B−1)` per frame).
    pub pseudo_gt: Option<Vec<Vec<f64>>>,
}

fn rows_to_sequence(rows: &[Vec<f64>]) -> Result<MotionSequence> {
    MotionSequence::new(
        rows.iter()
            .map(|r| Pose::from_params(r))
            .collect::<Result<Vec<_>>>()?,
    )
}

fn video_terms(skel: &Skeleton, cam: &Camera, s: &VideoSample) -> Result<(f64, f64)> {
    let seq = rows_to_sequence(&s.poses)?;
    let recon = keypoint_recon_loss(skel, &seq, &s.targets, cam)?;
    let temporal = temporal_smoothness(&s.poses)?;
    Ok((recon, temporal))
}

/// Video objective, averaged over the batch.
pub fn video_objective(
    skel: &Skeleton,
    cam: &Camera,
    batch: &[VideoSample],
    w: &LossWeights,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = batch.len() as f64;
    let mut r = LossReport::default();
    for s in batch {
        let (recon, temporal) = video_terms(skel, cam, s)?;
        r.reconstruction += recon / n;
        r.temporal += temporal / n;
    }
    r.shape = shape_regularizer();
    Ok(r.with_total(w))
}

/// Second-phase objective: video terms plus KL and teacher terms, averaged over the batch.
pub fn full_objective(
    skel: &Skeleton,
    cam: &Camera,
    batch: &[MotionSample],
    w: &LossWeights,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = batch.len() as f64;
    let mut r = LossReport::default();
    for (i, s) in batch.iter().enumerate() {
        let pseudo = s
            .pseudo_gt
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("sample {i} has no pseudo ground truth")))?;
        let (recon, temporal) = video_terms(skel, cam, &s.video)?;
        let bones: Vec<Vec<f64>> = s.video.poses.iter().map(|p| p[6..].to_vec()).collect();
        r.reconstruction += recon / n;
        r.temporal += temporal / n;
        r.kl += kl_loss(&s.posterior)? / n;
        r.teacher += teacher_loss(&bones, pseudo)? / n;
    }
    r.shape = shape_regularizer();
    Ok(r.with_total(w))
}

/// Graph form of [`keypoint_recon_loss`]; `poses` is `T × P`.
pub fn recon_term(
    g: &mut Graph,
    skel: &Skeleton,
    cam: &Camera,
    poses: Var,
    targets: &[Keypoints],
) -> Result<Var> {
    let rows = g.value(poses).clone();
    if rows.nrows() != targets.len() {
        return Err(Error::dim(format!(
            "prediction has {} frames, target has {}",
            rows.nrows(),
            targets.len()
        )));
    }
    let k = skel.joint_count();
    let mut values = Array2::zeros((rows.nrows(), 2 * k));
    let mut target = Array2::zeros((rows.nrows(), 2 * k));
    let mut jacobians = Vec::with_capacity(rows.nrows());
    for (t, row) in rows.rows().into_iter().enumerate() {
        let pose = Pose::from_params(&row.to_vec())?;
        let (kp, jac) = keypoints_jacobian(skel, &pose, cam)?;
        if targets[t].len() != k {
            return Err(Error::dim("target keypoint count differs from joint count"));
        }
        for j in 0..k {
            values[[t, 2 * j]] = kp[j].x;
            values[[t, 2 * j + 1]] = kp[j].y;
            target[[t, 2 * j]] = targets[t][j].x;
            target[[t, 2 * j + 1]] = targets[t][j].y;
        }
        jacobians.push(jac);
    }
    let kp = g.row_map(poses, values, jacobians);
    let tv = g.constant(target);
    let d = g.sub(kp, tv);
    let sq = g.square(d);
    let s = g.sum(sq);
    let norm = cam.max_side() * cam.max_side();
    Ok(g.scale(s, 1.0 / (k as f64 * norm)))
}

pub fn temporal_term(g: &mut Graph, poses: Var) -> Result<Var> {
    let t = g.value(poses).nrows();
    if t < 2 {
        return Err(Error::invalid(
            "temporal smoothness needs at least 2 frames",
        ));
    }
    let later = g.slice_rows(poses, 1, t - 1);
    let earlier = g.slice_rows(poses, 0, t - 1);
    let d = g.sub(later, earlier);
    let sq = g.square(d);
    Ok(g.sum(sq))
}

pub fn kl_term(g: &mut Graph, mean: Var, log_variance: Var) -> Var {
    let n = g.value(mean).len() as f64;
    let v = g.exp(log_variance);
    let m2 = g.square(mean);
    let a = g.add(v, m2);
    let b = g.sub(a, log_variance);
    let s = g.sum(b);
    let c = g.constant(array![[-n]]);
    let s = g.add(s, c);
    g.scale(s, 0.5)
}

pub fn teacher_term(g: &mut Graph, pred: Var, pseudo_gt: &Array2<f64>) -> Result<Var> {
    if g.value(pred).dim() != pseudo_gt.dim() {
        return Err(Error::dim(format!(
            "prediction {:?} and pseudo ground truth {:?} differ in shape",
            g.value(pred).dim(),
            pseudo_gt.dim()
        )));
    }
    let c = g.constant(pseudo_gt.clone());
    let d = g.sub(pred, c);
    let sq = g.square(d);
    Ok(g.sum(sq))
}
