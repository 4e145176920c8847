use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::FieldParams;
use crate::geom::Vec3;
use crate::seed::derive_seed;

use super::adam::AdamState;
use super::config::TrainConfig;
use super::losses::{loss_and_gradient, prepare_batch, FrozenBatch, LossBreakdown};
use super::sampling::{sample_pixels, TrainingViews};

/// Stream tag separating Eikonal samples from pixel samples.
const EIKONAL_STREAM: u64 = 0xE1;

/// Everything logged for one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub lr: f64,
    pub alpha: f64,
    pub surface_points: usize,
    pub silhouette_points: usize,
    pub mean_visibility_steps: f64,
}

/// Uniform samples in the cube `[-bound, bound]³`.
pub fn eikonal_points(
    count: usize,
    bound: f64,
    seed: u64,
    epoch: usize,
    iteration: usize,
) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        &[epoch as u64, iteration as u64, EIKONAL_STREAM],
    ));
    (0..count)
        .map(|_| {
            Vec3::new(
                rng.random_range(-bound..bound),
                rng.random_range(-bound..bound),
                rng.random_range(-bound..bound),
            )
        })
        .collect()
}

/// Stateful optimization loop over a fixed set of training views.
pub struct Trainer {
    config: TrainConfig,
    views: TrainingViews,
    params: FieldParams,
    adam: AdamState,
    iteration: usize,
    per_epoch: usize,
    log: Vec<LossRecord>,
}

impl Trainer {
    /// Starts from the sphere initialization seeded by `config.seed`.
    pub fn new(config: TrainConfig, views: TrainingViews) -> Result<Self> {
        config.validate()?;
        let params = FieldParams::init_sphere(config.seed, config.architecture)?;
        Self::with_params(config, views, params)
    }

    pub fn with_params(
        config: TrainConfig,
        views: TrainingViews,
        params: FieldParams,
    ) -> Result<Self> {
        config.validate()?;
        if *params.architecture() != config.architecture {
            return Err(Error::ShapeMismatch(
                "parameters do not match the configured architecture".into(),
            ));
        }
        let per_epoch = views.iterations_per_epoch(config.batch_size);
        Ok(Self {
            adam: AdamState::new(params.len()),
            config,
            views,
            params,
            iteration: 0,
            per_epoch,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn views(&self) -> &TrainingViews {
        &self.views
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }

    pub fn into_params(self) -> FieldParams {
        self.params
    }

    pub fn log(&self) -> &[LossRecord] {
        &self.log
    }

    /// Iterations completed so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn iterations_per_epoch(&self) -> usize {
        self.per_epoch
    }

    pub fn epoch(&self) -> usize {
        self.iteration / self.per_epoch
    }

    pub fn total_iterations(&self) -> usize {
        let full = self.config.epochs * self.per_epoch;
        self.config.max_iterations.map_or(full, |m| m.min(full))
    }

    pub fn is_finished(&self) -> bool {
        self.iteration >= self.total_iterations()
    }

    /// Geometry of the next iteration's batch at the current parameters.
    pub fn prepare(&self) -> Result<FrozenBatch> {
        let epoch = self.epoch();
        let local = self.iteration % self.per_epoch;
        let seed = self.config.seed;
        let pixels = sample_pixels(
            self.views.pool(),
            self.config.batch_size,
            seed,
            epoch,
            local,
        )?;
        let eikonal = eikonal_points(
            self.config.eikonal_samples,
            self.config.bound_radius,
            seed,
            epoch,
            local,
        );
        Ok(prepare_batch(
            &self.params,
            &self.views,
            &pixels,
            eikonal,
            &self.config,
            self.config.alpha_at(epoch),
        ))
    }

    /// One optimizer step. On error the parameters are left unchanged.
    pub fn step(&mut self) -> Result<LossRecord> {
        let epoch = self.epoch();
        let batch = self.prepare()?;
        let (loss, grad) = loss_and_gradient(&self.params, &batch, &self.config)?;
        let lr = self.config.lr_at(epoch);
        self.adam.step(self.params.as_mut_slice(), &grad, lr)?;
        let record = LossRecord {
            iteration: self.iteration,
            epoch,
            loss,
            lr,
            alpha: batch.alpha,
            surface_points: batch.surface.len(),
            silhouette_points: batch.silhouette.len(),
            mean_visibility_steps: batch.stats.mean_visibility_steps(),
        };
        self.iteration += 1;
        self.log.push(record);
        Ok(record)
    }

    /// Runs to completion, calling `on_epoch` with the trainer and the index
    /// of every epoch that finishes. A numeric failure stops the loop with the
    /// parameters of the last successful step.
    pub fn run<F>(&mut self, mut on_epoch: F) -> Result<()>
    where
        F: FnMut(&Trainer, usize) -> Result<()>,
    {
        while !self.is_finished() {
            self.step()?;
            if self.iteration.is_multiple_of(self.per_epoch) || self.is_finished() {
                on_epoch(self, (self.iteration - 1) / self.per_epoch)?;
            }
        }
        Ok(())
    }
}

/// Trains from the sphere initialization and returns the final parameters
/// together with the per-iteration loss log.
pub fn train(config: TrainConfig, views: TrainingViews) -> Result<(FieldParams, Vec<LossRecord>)> {
    let mut trainer = Trainer::new(config, views)?;
    trainer.run(|_, _| Ok(()))?;
    let log = trainer.log.clone();
    Ok((trainer.into_params(), log))
}

pub const LOSS_CSV_HEADER: &str = "iteration,epoch,tsc,silhouette,eikonal,total,lr,alpha";

pub fn write_loss_csv(out: &mut impl Write, records: &[LossRecord]) -> std::io::Result<()> {
    writeln!(out, "{LOSS_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{:e},{:e},{:e},{:e},{:e},{}",
            r.iteration,
            r.epoch,
            r.loss.tsc,
            r.loss.silhouette,
            r.loss.eikonal,
            r.loss.total,
            r.lr,
            r.alpha
        )?;
    }
    Ok(())
}

pub fn save_loss_csv(path: &Path, records: &[LossRecord]) -> Result<()> {
    let mut buf = Vec::new();
    write_loss_csv(&mut buf, records).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
