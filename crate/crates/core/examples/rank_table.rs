//! Rank of the stacked tangents for surface and off-surface points under
//! generic and degenerate camera rigs.

use std::collections::BTreeMap;

use mvas::analysis::analyze_point;
use mvas::field::AnalyticShape;
use mvas::geom::{Camera, RankTolerance, Vec3};
use mvas::synth::{make_rig, observe_azimuth, RigKind, RigSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn histogram<'a>(ranks: impl Iterator<Item = usize> + 'a) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for r in ranks {
        *h.entry(r).or_insert(0) += 1;
    }
    h
}

fn main() -> mvas::Result<()> {
    let sphere = AnalyticShape::sphere(Vec3::new(0.05, -0.03, 0.02), 0.4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let lookup = |_: usize, c: &Camera, u: f64, v: f64| observe_azimuth(&sphere, c, u, v);
    let tol = RankTolerance::default();

    println!(
        "{:<14} {:<24} {:<24}",
        "rig", "surface ranks", "off-surface ranks"
    );
    for (name, kind, count) in [
        ("generic ring", RigKind::GenericRing, 12),
        ("two views", RigKind::TwoView, 2),
        ("parallel axes", RigKind::ParallelAxes, 9),
        ("coplanar axes", RigKind::CoplanarAxes, 12),
    ] {
        let cameras = make_rig(&RigSpec::new(kind, count))?;
        let mut surface = Vec::new();
        let mut off = Vec::new();
        for _ in 0..200 {
            let d = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let x = sphere.center() + d.normalize() * 0.4;
            let r = analyze_point(&x, &cameras, &lookup, Some(&sphere), tol);
            if r.contributing >= 2 {
                surface.push(r.class.map_or(0, |c| c.rank()));
            }
            // interior points: no occluder, every view contributes what it sees there
            let y = sphere.center() + d * 0.2;
            let r = analyze_point::<AnalyticShape>(&y, &cameras, &lookup, None, tol);
            if r.contributing >= 2 {
                off.push(r.class.map_or(0, |c| c.rank()));
            }
        }
        let s = format!("{:?}", histogram(surface.into_iter()));
        let o = format!("{:?}", histogram(off.into_iter()));
        println!("{name:<14} {s:<24} {o:<24}");
    }
    Ok(())
}
