use std::ops::Range;

use nalgebra::Vector3;
use ndarray::{s, Array2};

use super::{FrameFeatures, ModelConfig};
use crate::error::{Error, Result};
use crate::skeleton::rotation::rodrigues;
use crate::skeleton::{Camera, Pose, Skeleton};

/// Column ranges of the bone descriptor
/// `(global, local sample, bone index, rest joint, pixel, zero padding)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptorLayout {
    pub global: Range<usize>,
    pub local: Range<usize>,
    pub index: usize,
    pub rest_joint: Range<usize>,
    pub pixel: Range<usize>,
    pub width: usize,
}

impl DescriptorLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let g = cfg.global_dim;
        let l = g + cfg.local_dim;
        Self {
            global: 0..g,
            local: g..l,
            index: l,
            rest_joint: l + 1..l + 4,
            pixel: l + 4..l + 6,
            width: cfg.descriptor_width,
        }
    }
}

fn check(cfg: &ModelConfig, features: &FrameFeatures, skel: &Skeleton) -> Result<()> {
    if features.global.len() != cfg.global_dim {
        return Err(Error::dim(format!(
            "global feature has {} entries, model expects {}",
            features.global.len(),
            cfg.global_dim
        )));
    }
    if features.local.dim() != cfg.local_dim {
        return Err(Error::dim(format!(
            "local feature map has {} channels, model expects {}",
            features.local.dim(),
            cfg.local_dim
        )));
    }
    if skel.joint_count() != cfg.joint_count {
        return Err(Error::dim(format!(
            "skeleton has {} joints, model expects {}",
            skel.joint_count(),
            cfg.joint_count
        )));
    }
    Ok(())
}

fn fill_rows(
    out: &mut ndarray::ArrayViewMut2<f64>,
    layout: &DescriptorLayout,
    features: &FrameFeatures,
    skel: &Skeleton,
    rigid: &[f64; 6],
    cam: &Camera,
) {
    let r = rodrigues(&Vector3::new(rigid[0], rigid[1], rigid[2]));
    let t = Vector3::new(rigid[3], rigid[4], rigid[5]);
    let b = skel.joint_count();
    let norm = cam.max_side();
    for j in 1..b {
        let mut row = out.row_mut(j - 1);
        let rest = skel.rest_joints[j];
        let pixel = cam.project_point(&(r * rest + t));
        for (c, v) in layout.global.clone().zip(&features.global) {
            row[c] = *v;
        }
        for (c, v) in layout.local.clone().zip(features.local.sample(&pixel)) {
            row[c] = v;
        }
        row[layout.index] = (j + 1) as f64 / b as f64;
        for (k, c) in layout.rest_joint.clone().enumerate() {
            row[c] = rest[k];
        }
        row[layout.pixel.start] = (pixel.x - cam.principal[0]) / norm;
        row[layout.pixel.start + 1] = (pixel.y - cam.principal[1]) / norm;
    }
}

/// Descriptors for bones `2..=B` of one frame, one row per bone.
///
/// The pixel `u_b` is the projection of the rest joint under the rigid part of
/// `pose` (bone rotations are not used), stored relative to the principal
/// point in units of the longer image side. The bone index is `b / B` with
/// 1-based `b`.
pub fn build_bone_descriptors(
    cfg: &ModelConfig,
    features: &FrameFeatures,
    skel: &Skeleton,
    pose: &Pose,
    cam: &Camera,
) -> Result<Array2<f64>> {
    check(cfg, features, skel)?;
    let layout = DescriptorLayout::new(cfg);
    let mut out = Array2::zeros((skel.bone_count(), layout.width));
    fill_rows(
        &mut out.view_mut(),
        &layout,
        features,
        skel,
        &pose.rigid_params(),
        cam,
    );
    Ok(out)
}

/// Frame-major stack of descriptors for a whole sequence: `T·(B−1) × width`.
pub fn build_sequence_descriptors(
    cfg: &ModelConfig,
    features: &[FrameFeatures],
    skel: &Skeleton,
    rigid: &[[f64; 6]],
    cam: &Camera,
) -> Result<Array2<f64>> {
    if features.len() != rigid.len() {
        return Err(Error::dim("one rigid pose per frame is required"));
    }
    let layout = DescriptorLayout::new(cfg);
    let bones = skel.bone_count();
    let mut out = Array2::zeros((features.len() * bones, layout.width));
    for (t, (f, r)) in features.iter().zip(rigid).enumerate() {
        check(cfg, f, skel)?;
        let mut view = out.slice_mut(s![t * bones..(t + 1) * bones, ..]);
        fill_rows(&mut view, &layout, f, skel, r, cam);
    }
    Ok(out)
}
