//! Spatio-temporal transformer VAE over bone rotations, plus the rigid-pose
//! head and the single-frame pose network used in the first training phase.

mod descriptors;
mod model;

use std::fmt;
use std::sync::Arc;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use descriptors::{build_bone_descriptors, build_sequence_descriptors, DescriptorLayout};
pub use model::{MotionModel, ShapeTrace, SpatialEncoder, VaeForward};

/// Image-feature sampler evaluated at arbitrary pixel locations.
pub trait LocalFeatureMap: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, pixel: &Vector2<f64>) -> Vec<f64>;
}

/// Global feature vector plus a local feature map for one frame.
#[derive(Clone)]
pub struct FrameFeatures {
    pub global: Vec<f64>,
    pub local: Arc<dyn LocalFeatureMap>,
}

impl fmt::Debug for FrameFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameFeatures")
            .field("global_dim", &self.global.len())
            .field("local_dim", &self.local.dim())
            .finish()
    }
}

/// Local map that returns the same vector everywhere.
#[derive(Debug, Clone)]
pub struct ConstantFeatureMap(pub Vec<f64>);

impl LocalFeatureMap for ConstantFeatureMap {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn sample(&self, _pixel: &Vector2<f64>) -> Vec<f64> {
        self.0.clone()
    }
}

/// Diagonal Gaussian over the motion latent; variance stored as log-variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDistribution {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

impl LatentDistribution {
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_variance: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_variance.iter().map(|v| v.exp()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.log_variance.len() {
            return Err(Error::dim("latent mean and log-variance lengths differ"));
        }
        if !self
            .mean
            .iter()
            .chain(&self.log_variance)
            .all(|v| v.is_finite())
        {
            return Err(Error::invalid(
                "latent distribution parameters must be finite",
            ));
        }
        Ok(())
    }

    /// `z = μ + exp(½·logvar) ⊙ ε`.
    pub fn reparameterize(&self, noise: &[f64]) -> Result<Vec<f64>> {
        if noise.len() != self.dim() {
            return Err(Error::dim(format!(
                "noise has {} entries, latent has {}",
                noise.len(),
                self.dim()
            )));
        }
        Ok(self
            .mean
            .iter()
            .zip(&self.log_variance)
            .zip(noise)
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Transformer blocks in each of the four stacks.
    pub blocks: usize,
    /// Model width, also the latent dimension.
    pub dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub global_dim: usize,
    pub local_dim: usize,
    /// Descriptor width after zero padding.
    pub descriptor_width: usize,
    pub joint_count: usize,
    /// Longest sequence accepted by the temporal stacks.
    pub max_frames: usize,
    /// `false` removes the spatial encoder/decoder (global features go straight to the temporal encoder).
    pub spatial_transformer: bool,
    /// Hidden width of the rigid-pose and single-frame pose heads.
    pub head_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            blocks: 4,
            dim: 256,
            heads: 4,
            ff_dim: 1024,
            global_dim: 512,
            local_dim: 119,
            descriptor_width: 640,
            joint_count: 21,
            max_frames: 64,
            spatial_transformer: true,
            head_hidden: 256,
        }
    }
}

impl ModelConfig {
    /// Width used by the descriptor components before padding.
    pub fn descriptor_payload(&self) -> usize {
        self.global_dim + self.local_dim + 1 + 3 + 2
    }

    pub fn bone_count(&self) -> usize {
        self.joint_count - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "model dim {} must be divisible by head count {}",
                self.dim, self.heads
            )));
        }
        if self.joint_count < 2 {
            return Err(Error::Config("joint_count must be at least 2".into()));
        }
        if self.descriptor_width < self.descriptor_payload() {
            return Err(Error::Config(format!(
                "descriptor_width {} is smaller than its components ({})",
                self.descriptor_width,
                self.descriptor_payload()
            )));
        }
        if self.blocks == 0 || self.ff_dim == 0 || self.head_hidden == 0 || self.max_frames == 0 {
            return Err(Error::Config(
                "blocks, ff_dim, head_hidden and max_frames must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Width and depth that train in minutes on one CPU core.
    pub fn desk() -> Self {
        Self {
            blocks: 2,
            dim: 32,
            heads: 4,
            ff_dim: 64,
            head_hidden: 64,
            ..Self::default()
        }
    }

    /// Small configuration used by gradient checks.
    pub fn tiny(joint_count: usize) -> Self {
        Self {
            blocks: 1,
            dim: 16,
            heads: 2,
            ff_dim: 32,
            global_dim: 5,
            local_dim: 4,
            descriptor_width: 16,
            joint_count,
            max_frames: 16,
            spatial_transformer: true,
            head_hidden: 16,
        }
    }
}
