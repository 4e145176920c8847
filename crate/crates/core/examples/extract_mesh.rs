//! Extracts the zero level set of a field with marching cubes and writes an
//! OBJ mesh. Without arguments the field is an analytic torus; with a
//! checkpoint path it is a trained network.
//!
//! cargo run --release --example extract_mesh -- [model.ckpt]

use std::path::Path;

use mvas::eval::{marching_cubes, write_obj, BoundingBox, Mesh};
use mvas::field::{read_checkpoint, AnalyticShape};
use mvas::geom::Vec3;

fn report(mesh: &Mesh) {
    println!(
        "{} vertices, {} triangles, area {:.4}, watertight {}, euler characteristic {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        mesh.area(),
        mesh.is_watertight(),
        mesh.euler_characteristic()
    );
}

fn main() -> mvas::Result<()> {
    let mesh = match std::env::args().nth(1) {
        Some(path) => marching_cubes(
            &read_checkpoint(Path::new(&path))?,
            BoundingBox::cube(1.0),
            128,
        )?,
        None => {
            let torus = AnalyticShape::torus(Vec3::zeros(), Vec3::z(), 0.5, 0.2)?;
            marching_cubes(&torus, BoundingBox::cube(1.0), 96)?
        }
    };
    report(&mesh);
    write_obj(Path::new("mesh.obj"), &mesh)?;
    println!("wrote mesh.obj");
    Ok(())
}
