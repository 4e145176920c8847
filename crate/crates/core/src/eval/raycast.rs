use rayon::prelude::*;

use crate::field::Sdf;
use crate::geom::{Camera, Vec3};
use crate::maps::{DepthMap, NormalMap, SilhouetteMask};
use crate::tracing::{sphere_interval, sphere_trace, Ray, TraceSettings};

use super::mesh::Mesh;

/// First intersection of a ray with a surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    /// Distance along the unit ray direction.
    pub t: f64,
    pub point: Vec3,
    /// Outward unit normal.
    pub normal: Vec3,
}

/// Anything rays can be cast against.
pub trait RayCaster: Sync {
    fn cast(&self, origin: &Vec3, dir: &Vec3) -> Option<SurfaceHit>;
}

/// Sphere tracing of a field restricted to a bounding sphere.
#[derive(Debug, Clone, Copy)]
pub struct FieldCaster<'a, S: Sdf> {
    pub field: &'a S,
    pub bound_center: Vec3,
    pub bound_radius: f64,
    pub settings: TraceSettings,
}

impl<'a, S: Sdf> FieldCaster<'a, S> {
    pub fn new(field: &'a S, bound_radius: f64) -> Self {
        Self {
            field,
            bound_center: Vec3::zeros(),
            bound_radius,
            settings: TraceSettings::default(),
        }
    }
}

impl<S: Sdf> RayCaster for FieldCaster<'_, S> {
    fn cast(&self, origin: &Vec3, dir: &Vec3) -> Option<SurfaceHit> {
        let local = origin - self.bound_center;
        let (t0, t1) = sphere_interval(&local, dir, self.bound_radius)?;
        let ray = Ray::new(*origin, *dir, t0.max(0.0), t1).ok()?;
        let hit = sphere_trace(self.field, &ray, self.settings).ok()??;
        let g = self.field.eval(&hit.x).gradient;
        let norm = g.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        Some(SurfaceHit {
            t: hit.t,
            point: hit.x,
            normal: g / norm,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    /// Entry distance of the ray into the box, if it enters before `t_max`.
    fn entry(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for a in 0..3 {
            let near = (self.min[a] - origin[a]) * inv_dir[a];
            let far = (self.max[a] - origin[a]) * inv_dir[a];
            let (near, far) = if near <= far {
                (near, far)
            } else {
                (far, near)
            };
            t0 = if near > t0 { near } else { t0 };
            t1 = if far < t1 { far } else { t1 };
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf {
        bounds: Aabb,
        start: usize,
        len: usize,
    },
    Inner {
        bounds: Aabb,
        left: usize,
        right: usize,
    },
}

const LEAF_SIZE: usize = 4;

/// Bounding volume hierarchy over a triangle mesh for exact ray casting.
#[derive(Debug, Clone)]
pub struct MeshBvh {
    mesh: Mesh,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl MeshBvh {
    pub fn new(mesh: Mesh) -> Self {
        let mut order: Vec<u32> = (0..mesh.triangles.len() as u32).collect();
        let centroids: Vec<Vec3> = (0..mesh.triangles.len())
            .map(|i| mesh.triangle(i).iter().sum::<Vec3>() / 3.0)
            .collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            let n = order.len();
            Self::build(&mesh, &centroids, &mut order, 0, n, &mut nodes);
        }
        Self { mesh, order, nodes }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    fn build(
        mesh: &Mesh,
        centroids: &[Vec3],
        order: &mut [u32],
        start: usize,
        len: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let items = &mut order[start..start + len];
        let mut bounds = Aabb::empty();
        let mut centers = Aabb::empty();
        for &t in items.iter() {
            for v in mesh.triangle(t as usize) {
                bounds.grow(&v);
            }
            centers.grow(&centroids[t as usize]);
        }
        let index = nodes.len();
        if len <= LEAF_SIZE {
            nodes.push(Node::Leaf { bounds, start, len });
            return index;
        }
        let extent = centers.max - centers.min;
        let axis = extent.imax();
        let half = len / 2;
        items.select_nth_unstable_by(half, |&a, &b| {
            centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis])
        });
        nodes.push(Node::Leaf { bounds, start, len });
        let left = Self::build(mesh, centroids, order, start, half, nodes);
        let right = Self::build(mesh, centroids, order, start + half, len - half, nodes);
        nodes[index] = Node::Inner {
            bounds,
            left,
            right,
        };
        index
    }

    /// Möller–Trumbore intersection distance, if positive.
    fn intersect(&self, tri: usize, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let [a, b, c] = self.mesh.triangle(tri);
        let (e1, e2) = (b - a, c - a);
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-15 {
            return None;
        }
        let inv = 1.0 / det;
        let s = origin - a;
        let u = s.dot(&p) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(&q) * inv;
        (t > 1e-12).then_some(t)
    }

    /// Closest triangle hit along the ray: distance and triangle index.
    pub fn first_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, usize)> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = dir.map(|d| 1.0 / d);
        let mut best: Option<(f64, usize)> = None;
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let limit = best.map_or(f64::INFINITY, |b| b.0);
            match self.nodes[i] {
                Node::Leaf { bounds, start, len } => {
                    if bounds.entry(origin, &inv_dir, limit).is_none() {
                        continue;
                    }
                    for &tri in &self.order[start..start + len] {
                        if let Some(t) = self.intersect(tri as usize, origin, dir) {
                            if best.is_none_or(|b| t < b.0) {
                                best = Some((t, tri as usize));
                            }
                        }
                    }
                }
                Node::Inner {
                    bounds,
                    left,
                    right,
                } => {
                    if bounds.entry(origin, &inv_dir, limit).is_some() {
                        stack.push(right);
                        stack.push(left);
                    }
                }
            }
        }
        best
    }
}

impl RayCaster for MeshBvh {
    fn cast(&self, origin: &Vec3, dir: &Vec3) -> Option<SurfaceHit> {
        let (t, tri) = self.first_hit(origin, dir)?;
        let n = self.mesh.face_normal(tri);
        Some(SurfaceHit {
            t,
            point: origin + dir * t,
            normal: n / n.norm(),
        })
    }
}

/// First hits of every pixel ray of every camera, view-major in raster order.
pub fn visible_points<C: RayCaster>(caster: &C, cameras: &[Camera]) -> Vec<Vec3> {
    cameras
        .iter()
        .flat_map(|camera| {
            let w = camera.width() as usize;
            (0..w * camera.height() as usize)
                .into_par_iter()
                .filter_map(|i| {
                    let (origin, dir) = camera.pixel_ray((i % w) as u32, (i / w) as u32);
                    caster.cast(&origin, &dir).map(|h| h.point)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Normal, silhouette and depth maps of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedMaps {
    /// World-frame unit normals turned toward the camera.
    pub normals: NormalMap,
    pub mask: SilhouetteMask,
    /// Distance along each pixel's unit ray.
    pub depth: DepthMap,
}

pub fn render_maps<C: RayCaster>(caster: &C, camera: &Camera) -> RenderedMaps {
    let (w, h) = (camera.width(), camera.height());
    let hits: Vec<Option<(Vec3, f64)>> = (0..w as usize * h as usize)
        .into_par_iter()
        .map(|i| {
            let (origin, dir) = camera.pixel_ray((i % w as usize) as u32, (i / w as usize) as u32);
            caster.cast(&origin, &dir).map(|hit| {
                let n = if hit.normal.dot(&dir) > 0.0 {
                    -hit.normal
                } else {
                    hit.normal
                };
                (n, hit.t)
            })
        })
        .collect();
    use crate::maps::Grid;
    let one_per_pixel = "one entry per pixel";
    RenderedMaps {
        normals: Grid::from_vec(w, h, hits.iter().map(|h| h.map(|x| x.0)).collect())
            .expect(one_per_pixel),
        mask: Grid::from_vec(w, h, hits.iter().map(|h| h.is_some()).collect())
            .expect(one_per_pixel),
        depth: Grid::from_vec(w, h, hits.iter().map(|h| h.map(|x| x.1)).collect())
            .expect(one_per_pixel),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::mesh::{marching_cubes, BoundingBox};
    use crate::eval::metrics::{chamfer, normal_mae};
    use crate::field::AnalyticShape;
    use crate::geom::{CameraIntrinsics, CameraPose};
    use crate::synth::{render_view, RenderSettings};

    fn camera(center: Vec3, size: u32) -> Camera {
        Camera::new(
            CameraIntrinsics::centered(size as f64 * 1.2, size, size).unwrap(),
            CameraPose::look_at(center, Vec3::zeros(), Vec3::y()).unwrap(),
        )
    }

    #[test]
    fn field_points_lie_on_the_facing_hemisphere() {
        let sphere = AnalyticShape::sphere(Vec3::zeros(), 0.5).unwrap();
        let cam = camera(Vec3::new(0.0, 0.0, 2.0), 32);
        let pts = visible_points(&FieldCaster::new(&sphere, 1.0), &[cam]);
        assert!(!pts.is_empty());
        assert!(pts
            .iter()
            .all(|p| (p.norm() - 0.5).abs() < 1e-4 && p.z > 0.0));
        let away = camera(Vec3::new(0.0, 0.0, 2.0), 32);
        let nothing = AnalyticShape::sphere(Vec3::new(5.0, 0.0, 0.0), 0.1).unwrap();
        assert!(visible_points(&FieldCaster::new(&nothing, 1.0), &[away]).is_empty());
    }

    #[test]
    fn rendered_normals_match_analytic_ground_truth() {
        let sphere = AnalyticShape::sphere(Vec3::zeros(), 0.5).unwrap();
        let cam = camera(Vec3::new(0.0, 0.0, 2.0), 33);
        let maps = render_maps(&FieldCaster::new(&sphere, 1.0), &cam);
        let center = maps.normals.get(16, 16).unwrap();
        assert!((center - Vec3::z()).norm() < 1e-4);
        assert!(maps.normals.get(0, 0).is_none() && !maps.mask.get(0, 0));
        let gt = render_view(&sphere, &cam, 0, &RenderSettings::exact()).unwrap();
        assert!(normal_mae(&maps.normals, &gt.gt_normals, &gt.mask).unwrap() < 0.1);
    }

    #[test]
    fn mesh_casting_agrees_with_the_field() {
        let sphere = AnalyticShape::sphere(Vec3::zeros(), 0.5).unwrap();
        let mesh = marching_cubes(&sphere, BoundingBox::cube(1.0), 96).unwrap();
        let bvh = MeshBvh::new(mesh);
        let cams = [
            camera(Vec3::new(0.0, 0.0, 2.0), 24),
            camera(Vec3::new(2.0, 0.5, 0.0), 24),
        ];
        let from_mesh = visible_points(&bvh, &cams);
        let from_field = visible_points(&FieldCaster::new(&sphere, 1.0), &cams);
        let cell = 2.0 / 95.0;
        assert!(chamfer(&from_mesh, &from_field).unwrap() < 2.0 * cell);
        let brute_first = |o: &Vec3, d: &Vec3| {
            (0..bvh.mesh().triangles.len())
                .filter_map(|i| bvh.intersect(i, o, d))
                .fold(f64::INFINITY, f64::min)
        };
        let (o, d) = cams[1].pixel_ray(12, 12);
        assert_eq!(bvh.first_hit(&o, &d).unwrap().0, brute_first(&o, &d));
    }
}
