//! Synthetic ground truth: camera rigs, azimuth maps rendered from analytic
//! shapes, and the ambiguity models that emulate real azimuth estimators.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{AnalyticShape, Sdf};
use crate::geom::{azimuth_of_normal, wrap_angle, Camera, CameraIntrinsics, CameraPose, Vec3};
use crate::io::{self, Manifest};
use crate::maps::{AzimuthMap, DepthMap, NormalMap, SilhouetteMask};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RigKind {
    /// Cameras on a ring around the target, elevations cycled per camera.
    GenericRing,
    /// Exactly two cameras with perpendicular viewing directions.
    TwoView,
    /// Identical viewing direction, centers translated in the image plane.
    ParallelAxes,
    /// Ring at zero elevation: every optical axis lies in one plane.
    CoplanarAxes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigSpec {
    pub kind: RigKind,
    pub count: usize,
    /// Distance of each camera center from the target.
    pub radius: f64,
    pub elevations_deg: Vec<f64>,
    pub target: [f64; 3],
    pub width: u32,
    pub height: u32,
    /// Focal length in pixels; `None` frames a sphere of radius `radius / 3`
    /// around the target.
    pub focal: Option<f64>,
}

impl RigSpec {
    pub fn new(kind: RigKind, count: usize) -> Self {
        Self {
            kind,
            count,
            radius: 2.5,
            elevations_deg: vec![35.0, -15.0],
            target: [0.0; 3],
            width: 64,
            height: 64,
            focal: None,
        }
    }

    pub fn with_resolution(mut self, width: u32, height: u32) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    fn intrinsics(&self) -> Result<CameraIntrinsics> {
        let focal = self.focal.unwrap_or_else(|| {
            let half_angle = (1.0f64 / 3.0).asin() * 1.05;
            0.5 * self.width.min(self.height) as f64 / half_angle.tan()
        });
        CameraIntrinsics::centered(focal, self.width, self.height)
    }

    fn elevation(&self, i: usize) -> f64 {
        if self.elevations_deg.is_empty() {
            0.0
        } else {
            self.elevations_deg[i % self.elevations_deg.len()].to_radians()
        }
    }
}

fn ring_center(target: &Vec3, radius: f64, azimuth: f64, elevation: f64) -> Vec3 {
    target
        + Vec3::new(
            elevation.cos() * azimuth.cos(),
            elevation.cos() * azimuth.sin(),
            elevation.sin(),
        ) * radius
}

/// Cameras of a rig, all aimed at the target and sharing intrinsics.
pub fn make_rig(spec: &RigSpec) -> Result<Vec<Camera>> {
    if spec.count == 0 {
        return Err(Error::RigSpec("camera count must be at least 1".into()));
    }
    if !(spec.radius > 0.0) {
        return Err(Error::RigSpec(format!(
            "radius must be positive, got {}",
            spec.radius
        )));
    }
    let intrinsics = spec
        .intrinsics()
        .map_err(|e| Error::RigSpec(e.to_string()))?;
    let target = Vec3::from(spec.target);
    let up = Vec3::z();
    let aim = |center: Vec3| -> Result<Camera> {
        let pose =
            CameraPose::look_at(center, target, up).map_err(|e| Error::RigSpec(e.to_string()))?;
        Ok(Camera::new(intrinsics, pose))
    };
    match spec.kind {
        RigKind::GenericRing => (0..spec.count)
            .map(|i| {
                let azimuth = TAU * i as f64 / spec.count as f64;
                aim(ring_center(
                    &target,
                    spec.radius,
                    azimuth,
                    spec.elevation(i),
                ))
            })
            .collect(),
        RigKind::TwoView => {
            if spec.count != 2 {
                return Err(Error::RigSpec(format!(
                    "two-view rig needs exactly 2 cameras, got {}",
                    spec.count
                )));
            }
            let e = spec.elevation(0);
            [0.0, FRAC_PI_2]
                .iter()
                .map(|&a| aim(ring_center(&target, spec.radius, a, e)))
                .collect()
        }
        RigKind::ParallelAxes => {
            let reference = aim(ring_center(&target, spec.radius, 0.0, spec.elevation(0)))?;
            let rotation = *reference.pose.rotation();
            let (side, down) = (reference.pose.r1(), reference.pose.r2());
            let spacing = 0.1 * spec.radius;
            let columns = (spec.count as f64).sqrt().ceil() as usize;
            (0..spec.count)
                .map(|i| {
                    let (col, row) = ((i % columns) as f64, (i / columns) as f64);
                    let rows = spec.count.div_ceil(columns) as f64;
                    let offset = side * (col - (columns as f64 - 1.0) / 2.0) * spacing
                        + down * (row - (rows - 1.0) / 2.0) * spacing;
                    let pose = CameraPose::from_center(rotation, reference.center() + offset)?;
                    Ok(Camera::new(intrinsics, pose))
                })
                .collect()
        }
        RigKind::CoplanarAxes => (0..spec.count)
            .map(|i| {
                let azimuth = TAU * i as f64 / spec.count as f64;
                aim(ring_center(&target, spec.radius, azimuth, 0.0))
            })
            .collect(),
    }
}

/// How rendered azimuths are corrupted to mimic an estimator's ambiguity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AmbiguityMode {
    Exact,
    /// Each pixel is offset by π with probability 1/2.
    PiRandom,
    /// Each pixel is offset by +π/2 with the given probability.
    HalfPiRandom {
        probability: f64,
    },
}

pub const DEFAULT_HALF_PI_PROBABILITY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub ambiguity: AmbiguityMode,
    /// Standard deviation of additive Gaussian azimuth noise, radians.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            ambiguity: AmbiguityMode::Exact,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl RenderSettings {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn with_ambiguity(ambiguity: AmbiguityMode, seed: u64) -> Self {
        Self {
            ambiguity,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if let AmbiguityMode::HalfPiRandom { probability } = self.ambiguity {
            if !(0.0..=1.0).contains(&probability) {
                return Err(Error::Config(format!(
                    "half-pi probability must lie in [0, 1], got {probability}"
                )));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    /// Applies the ambiguity and noise model to one exact azimuth. The random
    /// stream depends only on `(seed, view, pixel)`, so output does not depend
    /// on evaluation order.
    pub fn perturb(&self, phi: f64, view: usize, pixel: usize) -> f64 {
        if self.ambiguity == AmbiguityMode::Exact && self.noise_sigma == 0.0 {
            return phi;
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[view as u64, pixel as u64]));
        let mut out = phi;
        match self.ambiguity {
            AmbiguityMode::Exact => {}
            AmbiguityMode::PiRandom => {
                if rng.random_bool(0.5) {
                    out += PI;
                }
            }
            AmbiguityMode::HalfPiRandom { probability } => {
                if rng.random::<f64>() < probability {
                    out += FRAC_PI_2;
                }
            }
        }
        if self.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, self.noise_sigma).expect("validated sigma");
            out += normal.sample(&mut rng);
        }
        wrap_angle(out)
    }
}

/// One rendered camera view with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticView {
    pub camera: Camera,
    pub azimuth: AzimuthMap,
    pub mask: SilhouetteMask,
    pub gt_normals: NormalMap,
    pub gt_depth: DepthMap,
}

/// Exact (unperturbed) azimuth of the first surface point seen through
/// continuous pixel coordinates `(u, v)`; `None` on a miss or where the
/// azimuth is undefined.
pub fn observe_azimuth(shape: &AnalyticShape, camera: &Camera, u: f64, v: f64) -> Option<f64> {
    let dir = camera.ray_direction(u, v);
    let t = shape.ray_intersection(&camera.center(), &dir)?;
    let n = shape.evaluate(&(camera.center() + dir * t)).gradient;
    azimuth_of_normal(&camera.pose, &n).ok()
}

fn check_view(shape: &AnalyticShape, camera: &Camera) -> Result<()> {
    if shape.value(&camera.center()) <= 0.0 {
        return Err(Error::Render("camera center lies inside the shape".into()));
    }
    let depth = camera.pose.to_camera(&shape.center()).z;
    if depth <= shape.bounding_radius() {
        return Err(Error::Render(format!(
            "shape is not entirely in front of the camera (center depth {depth})"
        )));
    }
    Ok(())
}

/// Renders view `view_index` of a dataset: per pixel the first analytic
/// intersection, its normal, depth and (perturbed) azimuth.
pub fn render_view(
    shape: &AnalyticShape,
    camera: &Camera,
    view_index: usize,
    settings: &RenderSettings,
) -> Result<SyntheticView> {
    settings.validate()?;
    check_view(shape, camera)?;
    let (w, h) = (camera.width(), camera.height());
    let origin = camera.center();
    let pixels: Vec<(f64, Option<Vec3>, Option<f64>)> = (0..(w as usize * h as usize))
        .into_par_iter()
        .map(|i| {
            let (col, row) = ((i % w as usize) as u32, (i / w as usize) as u32);
            let (_, dir) = camera.pixel_ray(col, row);
            match shape.ray_intersection(&origin, &dir) {
                None => (f64::NAN, None, None),
                Some(t) => {
                    let n = shape.evaluate(&(origin + dir * t)).gradient;
                    let phi = azimuth_of_normal(&camera.pose, &n)
                        .map_or(f64::NAN, |phi| settings.perturb(phi, view_index, i));
                    (phi, Some(n), Some(t))
                }
            }
        })
        .collect();
    let azimuth = AzimuthMap::from_values(w, h, pixels.iter().map(|p| p.0).collect())?;
    let mask = SilhouetteMask::from_vec(w, h, pixels.iter().map(|p| p.1.is_some()).collect())?;
    let gt_normals = NormalMap::from_vec(w, h, pixels.iter().map(|p| p.1).collect())?;
    let gt_depth = DepthMap::from_vec(w, h, pixels.iter().map(|p| p.2).collect())?;
    Ok(SyntheticView {
        camera: *camera,
        azimuth,
        mask,
        gt_normals,
        gt_depth,
    })
}

pub fn render_views(
    shape: &AnalyticShape,
    cameras: &[Camera],
    settings: &RenderSettings,
) -> Result<Vec<SyntheticView>> {
    cameras
        .iter()
        .enumerate()
        .map(|(i, c)| render_view(shape, c, i, settings))
        .collect()
}

/// Provenance written alongside an exported dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetInfo {
    pub seed: u64,
    pub shape: Option<AnalyticShape>,
    pub rig: Option<RigSpec>,
    pub render: Option<RenderSettings>,
}

/// Writes `cameras.json`, per-view azimuth/mask/normal/depth files and
/// `manifest.json` into `dir`.
pub fn export_dataset(views: &[SyntheticView], dir: &Path, info: &DatasetInfo) -> Result<Manifest> {
    if views.is_empty() {
        return Err(Error::EmptyInput("dataset export needs at least one view"));
    }
    let dims = views[0].azimuth.dims();
    if views.iter().any(|v| {
        v.azimuth.dims() != dims
            || v.mask.dims() != dims
            || v.gt_normals.dims() != dims
            || v.gt_depth.dims() != dims
    }) {
        return Err(Error::ShapeMismatch(
            "views have inconsistent resolutions".into(),
        ));
    }
    let mut manifest = Manifest::synthetic(views.len(), info);
    let cameras: Vec<Camera> = views.iter().map(|v| v.camera).collect();
    let data = io::Dataset {
        root: dir.to_path_buf(),
        cameras,
        azimuths: views.iter().map(|v| v.azimuth.clone()).collect(),
        masks: views.iter().map(|v| v.mask.clone()).collect(),
        gt_normals: Some(views.iter().map(|v| v.gt_normals.clone()).collect()),
        gt_depths: Some(views.iter().map(|v| v.gt_depth.clone()).collect()),
        manifest: manifest.clone(),
    };
    data.write(dir)?;
    manifest = data.manifest;
    Ok(manifest)
}
