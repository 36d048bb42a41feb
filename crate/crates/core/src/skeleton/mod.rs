//! Articulated skeleton geometry: forward kinematics, linear blend skinning,
//! weak-perspective projection and capsule rasterization.
//!
//! Joint 0 is the root. Every other joint `j` carries the rotation of the bone
//! that connects it to its parent; that rotation turns the whole subtree below
//! `j` about the parent joint. The rigid root transform is applied last.

mod kinematics;
mod quadruped;
mod raster;
pub mod rotation;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kinematics::{
    forward_kinematics, keypoints2d, keypoints_jacobian, linear_blend_skinning,
    linear_blend_skinning_jacobian, pose_skeleton, PosedSkeleton,
};
pub use quadruped::{quadruped, quadruped_mesh, QUADRUPED_JOINTS};
pub use raster::{rasterize_capsules, skeleton_mask, Mask};

pub type Keypoints = Vec<Vector2<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub names: Vec<String>,
    pub rest_joints: Vec<Vector3<f64>>,
    /// `None` for the root; otherwise an index strictly smaller than the joint's own.
    pub parents: Vec<Option<usize>>,
    /// Capsule radius of the bone ending at each joint, in skeleton units (root entry unused).
    pub radii: Vec<f64>,
}

impl Skeleton {
    pub fn new(
        names: Vec<String>,
        rest_joints: Vec<Vector3<f64>>,
        parents: Vec<Option<usize>>,
        radii: Vec<f64>,
    ) -> Result<Self> {
        let skel = Self {
            names,
            rest_joints,
            parents,
            radii,
        };
        skel.validate()?;
        Ok(skel)
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.rest_joints.len();
        if b < 2 {
            return Err(Error::invalid(format!(
                "skeleton needs at least 2 joints, got {b}"
            )));
        }
        if self.parents.len() != b || self.names.len() != b || self.radii.len() != b {
            return Err(Error::dim(
                "skeleton names/parents/radii must have one entry per joint",
            ));
        }
        if self.parents[0].is_some() {
            return Err(Error::invalid("joint 0 must be the root"));
        }
        for (j, p) in self.parents.iter().enumerate().skip(1) {
            match p {
                None => return Err(Error::invalid(format!("joint {j} has no parent"))),
                Some(p) if *p >= j => {
                    return Err(Error::invalid(format!(
                        "joint {j} has parent {p}; parents must precede children"
                    )))
                }
                _ => {}
            }
        }
        if self
            .rest_joints
            .iter()
            .any(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::invalid("rest joints must be finite"));
        }
        Ok(())
    }

    pub fn joint_count(&self) -> usize {
        self.rest_joints.len()
    }

    pub fn bone_count(&self) -> usize {
        self.rest_joints.len() - 1
    }

    /// Number of scalar pose parameters: rigid rotation, translation, then one axis-angle per bone.
    pub fn param_count(&self) -> usize {
        6 + 3 * self.bone_count()
    }

    /// `mask[c]` is true when joint `c` lies in the subtree rooted at `j` (inclusive).
    pub fn subtree_mask(&self, j: usize) -> Vec<bool> {
        let mut mask = vec![false; self.joint_count()];
        mask[j] = true;
        for c in j + 1..self.joint_count() {
            if let Some(p) = self.parents[c] {
                mask[c] = mask[p];
            }
        }
        mask
    }
}

/// Articulated pose: rigid root transform plus one axis-angle rotation per bone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rigid_rotation: Vector3<f64>,
    pub rigid_translation: Vector3<f64>,
    pub bone_rotations: Vec<Vector3<f64>>,
}

impl Pose {
    pub fn identity(bones: usize) -> Self {
        Self {
            rigid_rotation: Vector3::zeros(),
            rigid_translation: Vector3::zeros(),
            bone_rotations: vec![Vector3::zeros(); bones],
        }
    }

    pub fn bone_count(&self) -> usize {
        self.bone_rotations.len()
    }

    /// Flat layout `[rigid rotation (3), rigid translation (3), bones (3 each)]`.
    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(6 + 3 * self.bone_rotations.len());
        out.extend(self.rigid_rotation.iter());
        out.extend(self.rigid_translation.iter());
        for r in &self.bone_rotations {
            out.extend(r.iter());
        }
        out
    }

    pub fn from_params(params: &[f64]) -> Result<Self> {
        if params.len() < 6 || (params.len() - 6) % 3 != 0 {
            return Err(Error::dim(format!(
                "pose parameter vector of length {} is not 6 + 3k",
                params.len()
            )));
        }
        if !params.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("pose parameters must be finite"));
        }
        Ok(Self {
            rigid_rotation: Vector3::new(params[0], params[1], params[2]),
            rigid_translation: Vector3::new(params[3], params[4], params[5]),
            bone_rotations: params[6..]
                .chunks_exact(3)
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect(),
        })
    }

    pub fn bone_params(&self) -> Vec<f64> {
        self.bone_rotations
            .iter()
            .flat_map(|r| r.iter().copied())
            .collect()
    }

    pub fn rigid_params(&self) -> [f64; 6] {
        [
            self.rigid_rotation.x,
            self.rigid_rotation.y,
            self.rigid_rotation.z,
            self.rigid_translation.x,
            self.rigid_translation.y,
            self.rigid_translation.z,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSequence {
    pub poses: Vec<Pose>,
}

impl MotionSequence {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if let Some(first) = poses.first() {
            let b = first.bone_count();
            if poses.iter().any(|p| p.bone_count() != b) {
                return Err(Error::dim(
                    "all poses in a sequence must share one bone count",
                ));
            }
        }
        Ok(Self { poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Row-per-frame flat parameter matrix (see [`Pose::to_params`]).
    pub fn to_param_rows(&self) -> Vec<Vec<f64>> {
        self.poses.iter().map(Pose::to_params).collect()
    }

    /// Builds a sequence from per-frame bone rotations sharing one rigid transform.
    pub fn from_bone_rows(rows: &[Vec<f64>], rigid: [f64; 6]) -> Result<Self> {
        let poses = rows
            .iter()
            .map(|r| {
                let mut p = rigid.to_vec();
                p.extend_from_slice(r);
                Pose::from_params(&p)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(poses)
    }
}

/// Canonical mesh with per-vertex skinning weights (rows sum to one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkinnedMesh {
    pub vertices: Vec<Vector3<f64>>,
    /// Row-major `N × B`.
    pub weights: Vec<f64>,
    pub joint_count: usize,
    /// Triangles as vertex index triples (for export only).
    pub faces: Vec<[usize; 3]>,
}

impl SkinnedMesh {
    pub fn weight_row(&self, v: usize) -> &[f64] {
        &self.weights[v * self.joint_count..(v + 1) * self.joint_count]
    }

    pub fn validate(&self, skel: &Skeleton) -> Result<()> {
        if self.joint_count != skel.joint_count() {
            return Err(Error::dim(format!(
                "skinning weights have {} columns, skeleton has {} joints",
                self.joint_count,
                skel.joint_count()
            )));
        }
        if self.weights.len() != self.vertices.len() * self.joint_count {
            return Err(Error::dim("weight matrix size does not match vertex count"));
        }
        for v in 0..self.vertices.len() {
            let row = self.weight_row(v);
            if row.iter().any(|w| *w < 0.0 || !w.is_finite()) {
                return Err(Error::invalid(format!(
                    "vertex {v} has a negative skinning weight"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "skinning weights of vertex {v} sum to {s}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// Weak-perspective camera: depth is dropped, `(x, y)` scaled by `scale`
/// and shifted by the principal point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub scale: f64,
    pub height: usize,
    pub width: usize,
    pub principal: [f64; 2],
}

impl Camera {
    pub fn new(scale: f64, height: usize, width: usize, principal: [f64; 2]) -> Result<Self> {
        let cam = Self {
            scale,
            height,
            width,
            principal,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Principal point at the image center.
    pub fn centered(scale: f64, height: usize, width: usize) -> Result<Self> {
        Self::new(
            scale,
            height,
            width,
            [width as f64 / 2.0, height as f64 / 2.0],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid(format!(
                "camera scale must be positive, got {}",
                self.scale
            )));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("image size must be at least 1×1"));
        }
        Ok(())
    }

    pub fn max_side(&self) -> f64 {
        self.height.max(self.width) as f64
    }

    pub fn project_point(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.scale * p.x + self.principal[0],
            self.scale * p.y + self.principal[1],
        )
    }

    pub fn project(&self, points: &[Vector3<f64>]) -> Keypoints {
        points.iter().map(|p| self.project_point(p)).collect()
    }
}
