//! Renders a synthetic azimuth dataset of a torus seen by a 12-view ring and
//! writes it to disk.
//!
//! cargo run --release --example synth_dataset -- /tmp/torus

use std::path::PathBuf;

use mvas::field::AnalyticShape;
use mvas::geom::Vec3;
use mvas::synth::{
    export_dataset, make_rig, render_views, AmbiguityMode, DatasetInfo, RenderSettings, RigKind,
    RigSpec,
};

fn main() -> mvas::Result<()> {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "synth_torus".into()),
    );
    let shape = AnalyticShape::torus(
        Vec3::zeros(),
        Vec3::new(0.3, 0.2, 1.0).normalize(),
        0.5,
        0.2,
    )?;
    let rig = RigSpec::new(RigKind::GenericRing, 12).with_resolution(128, 128);
    let cameras = make_rig(&rig)?;
    // polarization only fixes the azimuth up to π
    let render = RenderSettings::with_ambiguity(AmbiguityMode::PiRandom, 7);
    let views = render_views(&shape, &cameras, &render)?;

    for (i, v) in views.iter().enumerate() {
        let inside = v.mask.data().iter().filter(|&&m| m).count();
        println!("view {i:2}: {inside} foreground pixels");
    }
    let info = DatasetInfo {
        seed: 7,
        shape: Some(shape),
        rig: Some(rig),
        render: Some(render),
    };
    let manifest = export_dataset(&views, &out, &info)?;
    println!("wrote {} views to {}", manifest.views.len(), out.display());
    Ok(())
}
