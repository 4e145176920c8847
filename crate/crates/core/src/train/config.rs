use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Architecture;

/// Which tangent-space-consistency residual is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TscMode {
    /// Visibility-averaged `Σ (nᵀtᵢ)²` over every view that sees the point.
    MultiView,
    /// `Σ (nᵀtᵢ)²(nᵀt′ᵢ)²`, tolerant to azimuths that are off by ±π/2.
    HalfPi,
    /// Only the tangent from the pixel the ray was cast through.
    SingleView,
}

/// Whether the surface point moves with the parameters inside the TSC loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntersectionMode {
    Detached,
    Differentiable,
}

/// How the sigmoid sharpness α changes at each learning-rate decay step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSchedule {
    /// Divide α by 2, softening the soft occupancy over training.
    Halve,
    Constant,
    /// Multiply α by 2, sharpening the soft occupancy over training.
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight λ1 of the silhouette loss.
    pub lambda_silhouette: f64,
    /// Weight λ2 of the Eikonal loss.
    pub lambda_eikonal: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Stops after this many iterations when set, regardless of `epochs`.
    pub max_iterations: Option<usize>,
    pub batch_size: usize,
    /// Initial sigmoid sharpness α of the soft occupancy.
    pub alpha0: f64,
    pub alpha_schedule: AlphaSchedule,
    /// Epochs between halvings of the learning rate (and α).
    pub decay_every: usize,
    pub dilation_iterations: u32,
    pub eikonal_samples: usize,
    /// Stratified samples per ray when searching the minimal field value.
    pub min_sdf_samples: usize,
    pub tsc_mode: TscMode,
    pub intersection_mode: IntersectionMode,
    pub seed: u64,
    pub architecture: Architecture,
    /// Farthest camera distance after normalization.
    pub scale_ratio: f64,
    /// Radius of the sphere containing the normalized scene; rays are clipped to it.
    pub bound_radius: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_silhouette: 100.0,
            lambda_eikonal: 0.1,
            lr: 1e-4,
            epochs: 50,
            max_iterations: None,
            batch_size: 4096,
            alpha0: 50.0,
            alpha_schedule: AlphaSchedule::Halve,
            decay_every: 10,
            dilation_iterations: 30,
            eikonal_samples: 1024,
            min_sdf_samples: crate::tracing::DEFAULT_MIN_SAMPLES,
            tsc_mode: TscMode::MultiView,
            intersection_mode: IntersectionMode::Detached,
            seed: 0,
            architecture: Architecture::default(),
            scale_ratio: 3.0,
            bound_radius: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda_silhouette >= 0.0 && self.lambda_eikonal >= 0.0) {
            return bad("loss weights must be non-negative".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return bad(format!("alpha0 must be positive, got {}", self.alpha0));
        }
        if self.min_sdf_samples < 2 {
            return bad("min_sdf_samples must be at least 2".into());
        }
        if self.decay_every == 0 {
            return bad("decay_every must be at least 1".into());
        }
        if !(self.scale_ratio > 0.0 && self.bound_radius > 0.0) {
            return bad("scale ratio and bound radius must be positive".into());
        }
        self.architecture.validate()
    }

    /// Halving factor in effect during `epoch`.
    pub fn decay(&self, epoch: usize) -> f64 {
        0.5f64.powi((epoch / self.decay_every) as i32)
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay(epoch)
    }

    pub fn alpha_at(&self, epoch: usize) -> f64 {
        match self.alpha_schedule {
            AlphaSchedule::Halve => self.alpha0 * self.decay(epoch),
            AlphaSchedule::Constant => self.alpha0,
            AlphaSchedule::Double => self.alpha0 / self.decay(epoch),
        }
    }
}
