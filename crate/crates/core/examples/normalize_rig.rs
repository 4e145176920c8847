//! Finds the point closest to every optical axis and rescales the rig so the
//! farthest camera sits at distance 3.

use mvas::geom::{normalize_cameras, Vec3};
use mvas::synth::{make_rig, RigKind, RigSpec};

fn main() -> mvas::Result<()> {
    let spec = RigSpec {
        target: [0.4, -1.2, 0.7],
        radius: 6.0,
        ..RigSpec::new(RigKind::GenericRing, 8)
    };
    let cameras = make_rig(&spec)?;
    let norm = normalize_cameras(&cameras, 3.0)?;
    println!(
        "offset {:?}, scale {:.6}",
        norm.record.offset, norm.record.scale
    );
    for (before, after) in cameras.iter().zip(&norm.cameras) {
        println!(
            "{:>8.3?} -> {:>8.3?} (|c| = {:.3})",
            before.center(),
            after.center(),
            after.center().norm()
        );
    }
    let back = norm.record.to_world(&Vec3::zeros());
    println!("normalized origin maps back to {back:.6?}");

    // parallel optical axes share no closest point
    let parallel = make_rig(&RigSpec::new(RigKind::ParallelAxes, 4))?;
    match normalize_cameras(&parallel, 3.0) {
        Err(e) => println!("parallel rig: {e}"),
        Ok(_) => println!("parallel rig unexpectedly normalized"),
    }
    Ok(())
}
