use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::TrainSequence;
use crate::error::{Error, Result};
use crate::metrics::{
    acceleration_error, mask_iou, motion_chamfer_distance, pck_at_threshold, velocity_error,
    Chamfer, MetricReport, PCK_ALPHA,
};
use crate::motionvae::{FrameFeatures, MotionModel, ShapeTrace};
use crate::nn::Graph;
use crate::skeleton::{keypoints2d, skeleton_mask, Camera, Keypoints, Pose, Skeleton};
use crate::synthdata::{FeatureConfig, SequenceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionMode {
    /// Rigid head plus single-frame pose network.
    SingleFrame,
    /// Rigid head plus the VAE decoding its posterior mean.
    Vae,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Full pose parameters per frame.
    pub poses: Vec<Vec<f64>>,
    pub keypoints: Vec<Keypoints>,
}

/// Pose parameters and projected joints predicted for a clip.
pub fn reconstruct_sequence(
    model: &MotionModel,
    features: &[FrameFeatures],
    skel: &Skeleton,
    cam: &Camera,
    mode: ReconstructionMode,
) -> Result<Reconstruction> {
    let frames = features.len();
    let (globals, rigid, desc) = model.sequence_inputs(features, skel, cam)?;
    let mut g = Graph::new(&model.store);
    let d = g.constant(desc);
    let bones = match mode {
        ReconstructionMode::SingleFrame => model.single_frame_bones(&mut g, d, frames)?,
        ReconstructionMode::Vae => {
            let gl = g.constant(globals);
            model
                .vae_forward(&mut g, d, gl, frames, None, &mut ShapeTrace::off())?
                .bones
        }
    };
    let bones = g.value(bones);
    let mut poses = Vec::with_capacity(frames);
    let mut keypoints = Vec::with_capacity(frames);
    for (t, r) in rigid.iter().enumerate() {
        let mut p = r.to_vec();
        p.extend(bones.row(t).iter());
        keypoints.push(keypoints2d(skel, &Pose::from_params(&p)?, cam)?);
        poses.push(p);
    }
    Ok(Reconstruction { poses, keypoints })
}

/// Reconstruction metrics of one clip. PCK and mask IoU are frame means;
/// the velocity and acceleration errors are absent when undefined for the clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub id: String,
    pub frames: usize,
    pub pck: f64,
    pub mask_iou: f64,
    pub velocity_error: Option<f64>,
    pub acceleration_error: Option<f64>,
}

/// Scores predicted joints of a clip against its ground truth.
pub fn score_sequence(
    skel: &Skeleton,
    predicted: &[Keypoints],
    rec: &SequenceRecord,
) -> Result<SequenceMetrics> {
    if predicted.len() != rec.len() {
        return Err(Error::dim(format!(
            "{} predicted frames for {} ground-truth frames",
            predicted.len(),
            rec.len()
        )));
    }
    let cam = rec.camera;
    let (mut pck, mut iou) = (0.0, 0.0);
    for (t, (kp, gt)) in predicted.iter().zip(&rec.keypoints).enumerate() {
        pck += pck_at_threshold(kp, gt, cam.height, cam.width, PCK_ALPHA)?;
        iou += mask_iou(&skeleton_mask(skel, kp, &cam), &rec.masks[t])?;
    }
    let velocity = match velocity_error(predicted, &rec.keypoints) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    let acceleration = if rec.len() >= 3 {
        Some(acceleration_error(predicted, &rec.keypoints)?)
    } else {
        None
    };
    let n = rec.len() as f64;
    Ok(SequenceMetrics {
        id: rec.id.clone(),
        frames: rec.len(),
        pck: pck / n,
        mask_iou: iou / n,
        velocity_error: velocity,
        acceleration_error: acceleration,
    })
}

/// Frame-weighted PCK and mask IoU, and clip means of the defined
/// velocity/acceleration errors; MCD fields are left at zero.
pub fn aggregate_metrics(details: &[SequenceMetrics]) -> Result<MetricReport> {
    let frames: usize = details.iter().map(|d| d.frames).sum();
    if frames == 0 {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let mean = |xs: Vec<f64>| {
        if xs.is_empty() {
            f64::NAN
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    Ok(MetricReport {
        pck: details.iter().map(|d| d.pck * d.frames as f64).sum::<f64>() / frames as f64,
        mask_iou: details
            .iter()
            .map(|d| d.mask_iou * d.frames as f64)
            .sum::<f64>()
            / frames as f64,
        velocity_error: mean(details.iter().filter_map(|d| d.velocity_error).collect()),
        acceleration_error: mean(
            details
                .iter()
                .filter_map(|d| d.acceleration_error)
                .collect(),
        ),
        sequences: details.len(),
        frames,
        ..MetricReport::default()
    })
}

/// Per-clip reconstruction metrics of `model` on `records`.
pub fn evaluate_sequences(
    model: &MotionModel,
    records: &[&SequenceRecord],
    skel: &Skeleton,
    features: &FeatureConfig,
    mode: ReconstructionMode,
) -> Result<Vec<SequenceMetrics>> {
    records
        .iter()
        .map(|rec| {
            let rc = reconstruct_sequence(model, &rec.features(features), skel, &rec.camera, mode)?;
            score_sequence(skel, &rc.keypoints, rec)
        })
        .collect()
}

/// PCK, mask IoU and velocity/acceleration errors of reconstructions against
/// ground truth; MCD fields are left at zero.
pub fn evaluate_reconstruction(
    model: &MotionModel,
    records: &[&SequenceRecord],
    skel: &Skeleton,
    features: &FeatureConfig,
    mode: ReconstructionMode,
) -> Result<MetricReport> {
    if records.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    aggregate_metrics(&evaluate_sequences(model, records, skel, features, mode)?)
}

/// Joints of bone-rotation sequences under a fixed identity rigid pose, so
/// that motions are compared independently of placement in the image.
pub fn canonical_keypoints(
    skel: &Skeleton,
    cam: &Camera,
    bones: &[Vec<f64>],
) -> Result<Vec<Keypoints>> {
    bones
        .iter()
        .map(|b| {
            let mut p = vec![0.0; 6];
            p.extend_from_slice(b);
            keypoints2d(skel, &Pose::from_params(&p)?, cam)
        })
        .collect()
}

/// `n` bone-rotation sequences decoded from `z ~ N(0, I)`.
pub fn prior_samples<R: Rng>(
    model: &MotionModel,
    n: usize,
    frames: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Vec<f64>>>> {
    (0..n).map(|_| model.sample_prior(rng, frames)).collect()
}

/// Per-coordinate mean and standard deviation of the bone rotations in `records`.
pub fn motion_statistics(records: &[&SequenceRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows: Vec<Vec<f64>> = records
        .iter()
        .flat_map(|r| r.poses.iter().map(|p| p.to_params()[6..].to_vec()))
        .collect();
    let n = rows.len();
    if n < 2 {
        return Err(Error::invalid("motion statistics need at least 2 frames"));
    }
    let w = rows[0].len();
    let mut mean = vec![0.0; w];
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let mut var = vec![0.0; w];
    for r in &rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m) / (n - 1) as f64;
        }
    }
    Ok((mean, var.into_iter().map(f64::sqrt).collect()))
}

/// Sequences whose bone rotations are drawn independently per frame and
/// coordinate from `N(mean, std²)`.
pub fn iid_noise_samples<R: Rng>(
    n: usize,
    frames: usize,
    mean: &[f64],
    std: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if mean.len() != std.len() {
        return Err(Error::dim("mean and std lengths differ"));
    }
    let dists = mean
        .iter()
        .zip(std)
        .map(|(m, s)| Normal::new(*m, *s).map_err(|e| Error::invalid(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n)
        .map(|_| {
            (0..frames)
                .map(|_| dists.iter().map(|d| d.sample(rng)).collect())
                .collect()
        })
        .collect())
}

/// Motion chamfer distance between generated and reference bone sequences in
/// canonical placement.
pub fn canonical_chamfer(
    skel: &Skeleton,
    cam: &Camera,
    generated: &[Vec<Vec<f64>>],
    reference: &[Vec<Vec<f64>>],
) -> Result<Chamfer> {
    let a = generated
        .iter()
        .map(|s| canonical_keypoints(skel, cam, s))
        .collect::<Result<Vec<_>>>()?;
    let b = reference
        .iter()
        .map(|s| canonical_keypoints(skel, cam, s))
        .collect::<Result<Vec<_>>>()?;
    motion_chamfer_distance(&a, &b)
}

impl TrainSequence {
    /// Reconstruction of this clip with `model`.
    pub fn reconstruct(
        &self,
        model: &MotionModel,
        skel: &Skeleton,
        cam: &Camera,
        mode: ReconstructionMode,
    ) -> Result<Reconstruction> {
        reconstruct_sequence(model, &self.features, skel, cam, mode)
    }
}
