//! Per-point tangent-space diagnostics: which views see a point, the
//! tangents they contribute and the rank of the resulting stack.

use serde::Serialize;

use crate::field::Sdf;
use crate::geom::{
    azimuth_to_tangent, classify_rank, normal_from_tangents, Camera, RankClass, RankTolerance,
    TangentStack, Vec3,
};
use crate::maps::{AzimuthMap, SilhouetteMask};
use crate::tracing::{visibility, VisibilitySettings};

/// What one camera contributes for a query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViewObservation {
    pub view: usize,
    /// Continuous pixel coordinates; `None` behind the camera.
    pub pixel: Option<(f64, f64)>,
    pub visible: bool,
    pub azimuth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointReport {
    pub point: [f64; 3],
    pub views: Vec<ViewObservation>,
    /// Views that were visible and delivered an azimuth.
    pub contributing: usize,
    pub singular_values: Option<[f64; 3]>,
    pub class: Option<RankClass>,
    /// Unit normal (canonical sign) when the stack spans a plane.
    pub normal: Option<[f64; 3]>,
}

/// Where azimuths come from: a function of the view index, its camera and
/// the continuous pixel coordinates.
pub trait AzimuthLookup: Sync {
    fn azimuth(&self, view: usize, camera: &Camera, u: f64, v: f64) -> Option<f64>;
}

/// Nearest-pixel lookup into observed maps; pixels outside the mask give nothing.
pub struct MapLookup<'a> {
    pub azimuths: &'a [AzimuthMap],
    pub masks: &'a [SilhouetteMask],
}

impl AzimuthLookup for MapLookup<'_> {
    fn azimuth(&self, view: usize, camera: &Camera, u: f64, v: f64) -> Option<f64> {
        let (col, row) = (u.floor(), v.floor());
        if col < 0.0 || row < 0.0 || col >= camera.width() as f64 || row >= camera.height() as f64 {
            return None;
        }
        let (col, row) = (col as u32, row as u32);
        if !*self.masks[view].get(col, row) {
            return None;
        }
        self.azimuths[view].get(col, row)
    }
}

impl<F> AzimuthLookup for F
where
    F: Fn(usize, &Camera, f64, f64) -> Option<f64> + Sync,
{
    fn azimuth(&self, view: usize, camera: &Camera, u: f64, v: f64) -> Option<f64> {
        self(view, camera, u, v)
    }
}

/// Builds the tangent stack of `x` and classifies it. With an `occluder`,
/// views from which `x` is hidden contribute nothing.
pub fn analyze_point<S: Sdf>(
    x: &Vec3,
    cameras: &[Camera],
    lookup: &impl AzimuthLookup,
    occluder: Option<&S>,
    tolerance: RankTolerance,
) -> PointReport {
    let mut views = Vec::with_capacity(cameras.len());
    let mut rows = Vec::new();
    for (i, camera) in cameras.iter().enumerate() {
        let pixel = camera.project(x).ok().map(|p| (p.u, p.v));
        let visible = pixel.is_some()
            && occluder.is_none_or(|f| {
                visibility(f, x, &camera.center(), VisibilitySettings::default()).is_visible()
            });
        let azimuth = match (pixel, visible) {
            (Some((u, v)), true) => lookup.azimuth(i, camera, u, v),
            _ => None,
        };
        if let Some(phi) = azimuth {
            rows.push(azimuth_to_tangent(&camera.pose, phi));
        }
        views.push(ViewObservation {
            view: i,
            pixel,
            visible,
            azimuth,
        });
    }
    let contributing = rows.len();
    let (singular_values, class, normal) = match TangentStack::new(rows) {
        Ok(stack) => {
            let report = classify_rank(&stack, tolerance);
            let normal = normal_from_tangents(&stack)
                .ok()
                .filter(|_| report.class == RankClass::TangentPlane);
            (
                Some(report.singular_values),
                Some(report.class),
                normal.map(Into::into),
            )
        }
        Err(_) => (None, None, None),
    };
    PointReport {
        point: (*x).into(),
        views,
        contributing,
        singular_values,
        class,
        normal,
    }
}

/// Points of a regular `n × n × n` grid spanning `[-half, half]³`.
pub fn grid_points(n: usize, half: f64) -> Vec<Vec3> {
    let coord = |i: usize| {
        if n == 1 {
            0.0
        } else {
            -half + 2.0 * half * i as f64 / (n - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                out.push(Vec3::new(coord(i), coord(j), coord(k)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::AnalyticShape;
    use crate::synth::{make_rig, observe_azimuth, RigKind, RigSpec};

    #[test]
    fn sphere_surface_point_spans_its_tangent_plane() {
        let shape = AnalyticShape::sphere(Vec3::zeros(), 0.5).unwrap();
        let cameras = make_rig(&RigSpec::new(RigKind::GenericRing, 12)).unwrap();
        let lookup = |_: usize, c: &Camera, u: f64, v: f64| observe_azimuth(&shape, c, u, v);
        let n = Vec3::new(0.3, -0.5, 0.2).normalize();
        let report = analyze_point(
            &(n * 0.5),
            &cameras,
            &lookup,
            Some(&shape),
            RankTolerance::default(),
        );
        assert_eq!(report.class, Some(RankClass::TangentPlane));
        assert!(report.contributing >= 3 && report.contributing < 12);
        let got = Vec3::from(report.normal.unwrap());
        assert!(got.dot(&n).abs() > 1.0 - 1e-9);
    }

    #[test]
    fn points_seen_by_no_view_have_no_class() {
        let shape = AnalyticShape::sphere(Vec3::zeros(), 0.5).unwrap();
        let cameras = make_rig(&RigSpec::new(RigKind::GenericRing, 4)).unwrap();
        let lookup = |_: usize, _: &Camera, _: f64, _: f64| None;
        let report = analyze_point(
            &Vec3::zeros(),
            &cameras,
            &lookup,
            Some(&shape),
            RankTolerance::default(),
        );
        assert_eq!((report.contributing, report.class), (0, None));
        assert!(report.views.iter().all(|v| !v.visible));
    }

    #[test]
    fn grid_spans_the_cube() {
        let g = grid_points(3, 1.0);
        assert_eq!(g.len(), 27);
        assert_eq!(g[0], Vec3::repeat(-1.0));
        assert_eq!(g[26], Vec3::repeat(1.0));
        assert_eq!(grid_points(1, 1.0), vec![Vec3::zeros()]);
    }
}
