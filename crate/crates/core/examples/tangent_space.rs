//! Lifts observed azimuths of one surface point to world-space tangents and
//! recovers the surface normal from their span.

use mvas::analysis::analyze_point;
use mvas::field::AnalyticShape;
use mvas::geom::{azimuth_of_normal, azimuth_to_tangent, Camera, RankTolerance, Vec3};
use mvas::synth::{make_rig, observe_azimuth, RigKind, RigSpec};

fn main() -> mvas::Result<()> {
    let shape = AnalyticShape::sphere(Vec3::new(0.05, -0.03, 0.02), 0.4)?;
    let cameras = make_rig(&RigSpec::new(RigKind::GenericRing, 12))?;
    let normal = Vec3::new(0.4, -0.7, 0.3).normalize();
    let x = shape.center() + normal * 0.4;

    // a tangent is orthogonal to the normal whatever the sign of the azimuth
    let pose = &cameras[0].pose;
    let phi = azimuth_of_normal(pose, &normal)?;
    let t = azimuth_to_tangent(pose, phi);
    println!(
        "view 0: phi = {phi:.4} rad, t = {t:.4?}, n.t = {:.1e}",
        normal.dot(&t)
    );

    let lookup = |_: usize, c: &Camera, u: f64, v: f64| observe_azimuth(&shape, c, u, v);
    let report = analyze_point(
        &x,
        &cameras,
        &lookup,
        Some(&shape),
        RankTolerance::default(),
    );
    println!(
        "{} of {} views see the point",
        report.contributing,
        cameras.len()
    );
    println!(
        "singular values {:?}, class {:?}",
        report.singular_values, report.class
    );
    if let Some(n) = report.normal {
        let n = Vec3::from(n);
        println!(
            "recovered normal {n:.6?}, angle to truth {:.2e} rad",
            n.dot(&normal).abs().min(1.0).acos()
        );
    }
    Ok(())
}
