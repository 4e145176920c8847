//! Trains a small network on a synthetic sphere and reports the normal error
//! of the reconstruction after every epoch.
//!
//! cargo run --release --example train_sphere -- 600

use mvas::eval::{render_maps, FieldCaster};
use mvas::field::{write_checkpoint, AnalyticShape, Architecture, FieldParams};
use mvas::geom::{normalize_cameras, Camera, Vec3};
use mvas::synth::{make_rig, render_views, RenderSettings, RigKind, RigSpec, SyntheticView};
use mvas::train::{AlphaSchedule, TrainConfig, Trainer, TrainingViews};

fn normal_mae(field: &FieldParams, views: &[SyntheticView], cameras: &[Camera]) -> f64 {
    let caster = FieldCaster::new(field, 1.0);
    let (mut sum, mut n) = (0.0, 0);
    for (view, camera) in views.iter().zip(cameras) {
        let pred = render_maps(&caster, camera);
        for (p, g) in pred.normals.data().iter().zip(view.gt_normals.data()) {
            if let (Some(p), Some(g)) = (p, g) {
                sum += p.dot(g).clamp(-1.0, 1.0).acos().to_degrees();
                n += 1;
            }
        }
    }
    sum / n.max(1) as f64
}

fn main() -> mvas::Result<()> {
    let iterations: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(600);
    let shape = AnalyticShape::sphere(Vec3::new(0.05, -0.03, 0.02), 0.4)?;
    let rig = make_rig(&RigSpec::new(RigKind::GenericRing, 12))?;
    let views = render_views(&shape, &rig, &RenderSettings::exact())?;
    let norm = normalize_cameras(&rig, 3.0)?;
    let training = TrainingViews::new(
        norm.cameras.clone(),
        views.iter().map(|v| v.azimuth.clone()).collect(),
        views.iter().map(|v| v.mask.clone()).collect(),
        8,
    )?;

    let config = TrainConfig {
        architecture: Architecture {
            frequencies: 6,
            ..Architecture::with_width(64)
        },
        batch_size: 256,
        eikonal_samples: 128,
        min_sdf_samples: 16,
        dilation_iterations: 8,
        alpha_schedule: AlphaSchedule::Double,
        epochs: 1000,
        max_iterations: Some(iterations),
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(config, training)?;
    println!("{} iterations per epoch", trainer.iterations_per_epoch());
    trainer.run(|t, epoch| {
        let last = t.log().last().expect("one step per epoch");
        println!(
            "epoch {epoch:3}: loss {:.4} (tsc {:.4}, silhouette {:.4}, eikonal {:.4}), normal MAE {:.2} deg",
            last.loss.total,
            last.loss.tsc,
            last.loss.silhouette,
            last.loss.eikonal,
            normal_mae(t.params(), &views, &norm.cameras)
        );
        Ok(())
    })?;
    write_checkpoint(std::path::Path::new("sphere.ckpt"), trainer.params())?;
    println!("saved sphere.ckpt");
    Ok(())
}
