//! Compares a slightly wrong reconstruction with the ground truth: Chamfer
//! distance and F-score over visible points, and normal MAE per view.

use mvas::eval::{chamfer, fscore, normal_mae, render_maps, visible_points, FieldCaster};
use mvas::field::AnalyticShape;
use mvas::geom::Vec3;
use mvas::synth::{make_rig, RigKind, RigSpec};

fn main() -> mvas::Result<()> {
    let truth = AnalyticShape::sphere(Vec3::zeros(), 0.5)?;
    let guess = AnalyticShape::sphere(Vec3::new(0.01, 0.0, -0.005), 0.49)?;
    let cameras = make_rig(&RigSpec::new(RigKind::GenericRing, 8))?;

    let gt_caster = FieldCaster::new(&truth, 1.0);
    let pred_caster = FieldCaster::new(&guess, 1.0);
    let gt = visible_points(&gt_caster, &cameras);
    let pred = visible_points(&pred_caster, &cameras);
    println!("{} reference and {} predicted points", gt.len(), pred.len());
    println!("chamfer {:.5}", chamfer(&pred, &gt)?);
    for tau in [0.005, 0.01, 0.02] {
        let f = fscore(&pred, &gt, tau)?;
        println!(
            "tau {tau}: precision {:.3}, recall {:.3}, fscore {:.3}",
            f.precision, f.recall, f.fscore
        );
    }
    for (i, camera) in cameras.iter().enumerate() {
        let a = render_maps(&pred_caster, camera);
        let b = render_maps(&gt_caster, camera);
        println!(
            "view {i}: normal MAE {:.3} deg",
            normal_mae(&a.normals, &b.normals, &b.mask)?
        );
    }
    Ok(())
}
