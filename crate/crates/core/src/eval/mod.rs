//! Reconstruction quality: point-set and normal metrics, mesh extraction
//! and ray casting against fields and meshes.

pub mod mesh;
pub mod metrics;
pub mod raycast;

pub use mesh::{marching_cubes, read_obj, write_obj, BoundingBox, Mesh};
pub use metrics::{chamfer, fscore, nearest_distances, normal_errors, normal_mae, FScore, Metrics};
pub use raycast::{
    render_maps, visible_points, FieldCaster, MeshBvh, RayCaster, RenderedMaps, SurfaceHit,
};
