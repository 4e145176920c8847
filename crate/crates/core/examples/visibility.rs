//! Decides which cameras see a surface point by marching from the point
//! toward each camera center, on a torus whose hole hides parts of itself.

use mvas::eval::{visible_points, FieldCaster};
use mvas::field::AnalyticShape;
use mvas::geom::Vec3;
use mvas::synth::{make_rig, RigKind, RigSpec};
use mvas::tracing::{mean_steps, visibility_batch, Visibility, VisibilitySettings};

fn main() -> mvas::Result<()> {
    let torus = AnalyticShape::torus(
        Vec3::zeros(),
        Vec3::new(0.3, 0.2, 1.0).normalize(),
        0.5,
        0.2,
    )?;
    let cameras = make_rig(&RigSpec::new(RigKind::GenericRing, 12))?;
    let points = visible_points(&FieldCaster::new(&torus, 1.0), &cameras[..1]);
    let queries: Vec<(Vec3, Vec3)> = points
        .iter()
        .flat_map(|x| cameras.iter().map(move |c| (*x, c.center())))
        .collect();
    let outcomes = visibility_batch(&torus, &queries, VisibilitySettings::default());

    let count = |k: Visibility| outcomes.iter().filter(|o| o.kind == k).count();
    println!(
        "{} points seen by camera 0, {} queries",
        points.len(),
        queries.len()
    );
    println!("visible {}", count(Visibility::Visible));
    println!(
        "occluded {}",
        count(Visibility::OccludedByHit) + count(Visibility::EnteredSurface)
    );
    println!("step cap reached {}", count(Visibility::MaxStepsExceeded));
    println!("mean steps {:.2}", mean_steps(&outcomes));
    Ok(())
}
