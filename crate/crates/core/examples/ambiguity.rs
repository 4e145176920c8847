//! The consistency residual ignores π flips of the azimuth; the ±π/2-tolerant
//! variant also ignores quarter-turn flips, which the plain residual does not.

use std::f64::consts::{FRAC_PI_2, PI};

use mvas::geom::{azimuth_of_normal, azimuth_to_tangent, tangent_half_pi, Vec3};
use mvas::synth::{make_rig, RigKind, RigSpec};

fn main() -> mvas::Result<()> {
    let cameras = make_rig(&RigSpec::new(RigKind::GenericRing, 6))?;
    let normal = Vec3::new(0.2, 0.5, 0.8).normalize();
    let candidate = Vec3::new(0.25, 0.45, 0.8).normalize();

    for (label, offset) in [("exact", 0.0), ("pi flip", PI), ("half-pi flip", FRAC_PI_2)] {
        let (mut plain, mut tolerant) = (0.0, 0.0);
        for camera in &cameras {
            let phi = azimuth_of_normal(&camera.pose, &normal)? + offset;
            let t = azimuth_to_tangent(&camera.pose, phi);
            let t_alt = tangent_half_pi(&camera.pose, phi);
            plain += candidate.dot(&t).powi(2);
            tolerant += candidate.dot(&t).powi(2) * candidate.dot(&t_alt).powi(2);
        }
        println!("{label:>13}: plain residual {plain:.6}, tolerant residual {tolerant:.3e}");
    }
    Ok(())
}
