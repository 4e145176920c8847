//! Optimization of a neural field from multi-view azimuth maps.

pub mod adam;
pub mod config;
pub mod losses;
pub mod sampling;
pub mod trainer;

pub use adam::AdamState;
pub use config::{AlphaSchedule, IntersectionMode, TrainConfig, TscMode};
pub use losses::{
    eikonal_term, evaluate_loss, loss_and_gradient, prepare_batch, silhouette_term, tsc_term,
    BatchStats, FrozenBatch, LossBreakdown, SilhouetteSample, SurfaceSample,
};
pub use sampling::{dilated_pool, sample_pixels, PixelRef, TrainingViews};
pub use trainer::{eikonal_points, save_loss_csv, train, write_loss_csv, LossRecord, Trainer};
