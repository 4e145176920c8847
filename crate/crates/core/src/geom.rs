//! Pinhole cameras, the azimuth/tangent algebra, tangent-space consistency
//! matrices and camera normalization.
//!
//! Conventions: a [`CameraPose`] maps world points into the camera frame as
//! `R x + t`. The rows `r1`, `r2`, `r3` of `R` are the world directions of the
//! camera x-axis, y-axis and optical axis. The azimuth of a normal is
//! `atan2(n_c.y, n_c.x)` in the camera frame, wrapped into `[0, 2π)`, and image
//! rows grow along the camera y-axis.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Normals whose camera-frame x/y components are shorter than this have no azimuth.
pub const AZIMUTH_EPSILON: f64 = 1e-6;

const ORTHONORMAL_TOLERANCE: f64 = 1e-9;
const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidCamera(
                "principal point must be finite".into(),
            ));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera(format!(
                "image size must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Square pixels with the principal point in the image center.
    pub fn centered(focal: f64, width: u32, height: u32) -> Result<Self> {
        Self::new(
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// World-to-camera rigid transform `[R | t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Mat3,
    translation: Vec3,
}

impl CameraPose {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let deviation = (gram - Mat3::identity()).abs().max();
        if !(deviation <= ORTHONORMAL_TOLERANCE) {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (max |R^T R - I| = {deviation:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOLERANCE {
            return Err(Error::InvalidCamera(format!(
                "rotation determinant is {det}, expected 1"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera("translation must be finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Pose from a rotation and the camera center in world coordinates.
    pub fn from_center(rotation: Mat3, center: Vec3) -> Result<Self> {
        Self::new(rotation, -(rotation * center))
    }

    /// Camera at `center` whose optical axis points at `target`. Image rows
    /// grow opposite to `up`.
    pub fn look_at(center: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let z = target - center;
        let distance = z.norm();
        if !(distance > 0.0) {
            return Err(Error::InvalidCamera(
                "camera center coincides with its target".into(),
            ));
        }
        let z = z / distance;
        let mut down = -up;
        if down.cross(&z).norm() < 1e-9 {
            // optical axis parallel to `up`; any perpendicular reference works
            down = if z.x.abs() < 0.9 {
                Vec3::x()
            } else {
                Vec3::y()
            };
        }
        let x = down.cross(&z).normalize();
        let y = z.cross(&x);
        let rotation = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Self::from_center(rotation, center)
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn r1(&self) -> Vec3 {
        self.rotation.row(0).transpose()
    }

    pub fn r2(&self) -> Vec3 {
        self.rotation.row(1).transpose()
    }

    /// World direction of the optical axis.
    pub fn r3(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    /// Camera center `-R^T t` in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

/// Pixel coordinates and camera-frame depth of a projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Camera {
    pub fn new(intrinsics: CameraIntrinsics, pose: CameraPose) -> Self {
        Self { intrinsics, pose }
    }

    pub fn center(&self) -> Vec3 {
        self.pose.center()
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    pub fn project(&self, x: &Vec3) -> Result<Projection> {
        project(self, x)
    }

    /// Integer pixel containing the projection of `x`, if it lands in the image.
    pub fn pixel_of(&self, x: &Vec3) -> Option<(u32, u32)> {
        let p = self.project(x).ok()?;
        let (u, v) = (p.u.floor(), p.v.floor());
        if u >= 0.0
            && v >= 0.0
            && u < self.intrinsics.width as f64
            && v < self.intrinsics.height as f64
        {
            Some((u as u32, v as u32))
        } else {
            None
        }
    }

    /// Unit world-space direction of the ray through continuous pixel coordinates.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vec3 {
        let k = &self.intrinsics;
        let dir_cam = Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        (self.pose.rotation.transpose() * dir_cam).normalize()
    }

    /// Origin and direction of the ray through the center of pixel `(col, row)`.
    pub fn pixel_ray(&self, col: u32, row: u32) -> (Vec3, Vec3) {
        (
            self.center(),
            self.ray_direction(col as f64 + 0.5, row as f64 + 0.5),
        )
    }
}

pub fn project(camera: &Camera, x: &Vec3) -> Result<Projection> {
    let xc = camera.pose.to_camera(x);
    if !(xc.z > 0.0) {
        return Err(Error::BehindCamera { depth: xc.z });
    }
    let k = &camera.intrinsics;
    Ok(Projection {
        u: k.fx * xc.x / xc.z + k.cx,
        v: k.fy * xc.y / xc.z + k.cy,
        depth: xc.z,
    })
}

/// Azimuth of a unit world normal as observed by a camera, in `[0, 2π)`.
pub fn azimuth_of_normal(pose: &CameraPose, n: &Vec3) -> Result<f64> {
    let x = pose.r1().dot(n);
    let y = pose.r2().dot(n);
    if x * x + y * y < AZIMUTH_EPSILON * AZIMUTH_EPSILON {
        return Err(Error::UndefinedAzimuth);
    }
    Ok(wrap_angle(y.atan2(x)))
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Projected tangent vector `r1 sin φ − r2 cos φ`.
pub fn azimuth_to_tangent(pose: &CameraPose, phi: f64) -> Vec3 {
    let (s, c) = phi.sin_cos();
    pose.r1() * s - pose.r2() * c
}

/// Tangent candidate for an azimuth off by ±π/2: `−r1 cos φ − r2 sin φ`.
pub fn tangent_half_pi(pose: &CameraPose, phi: f64) -> Vec3 {
    let (s, c) = phi.sin_cos();
    -(pose.r1() * c) - pose.r2() * s
}

/// Visibility-weighted sum of tangent outer products at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TscAccumulator {
    matrix: Mat3,
    count: u32,
}

impl Default for TscAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl TscAccumulator {
    pub fn new() -> Self {
        Self {
            matrix: Mat3::zeros(),
            count: 0,
        }
    }

    pub fn add(&mut self, t: &Vec3) {
        self.matrix += t * t.transpose();
        self.count += 1;
    }

    /// The raw sum `Σ t tᵀ`.
    pub fn matrix(&self) -> &Mat3 {
        &self.matrix
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    /// No visible view contributed; such points carry no TSC information.
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// The averaged matrix `T̃ = Σ t tᵀ / count`.
    pub fn average(&self) -> Option<Mat3> {
        (self.count > 0).then(|| self.matrix / self.count as f64)
    }

    /// `nᵀ T̃ n`, the per-point TSC residual.
    pub fn quadratic_form(&self, n: &Vec3) -> Option<f64> {
        self.average().map(|t| n.dot(&(t * n)))
    }
}

pub fn accumulate_tsc(tangents: &[Vec3], visibility: &[bool]) -> Result<TscAccumulator> {
    if tangents.len() != visibility.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} tangents but {} visibility flags",
            tangents.len(),
            visibility.len()
        )));
    }
    let mut acc = TscAccumulator::new();
    for (t, _) in tangents.iter().zip(visibility).filter(|(_, &v)| v) {
        acc.add(t);
    }
    Ok(acc)
}

/// Projected tangent vectors of one point, one row per contributing view.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentStack {
    rows: Vec<Vec3>,
}

impl TangentStack {
    pub fn new(rows: Vec<Vec3>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("tangent stack has no rows"));
        }
        if let Some(bad) = rows
            .iter()
            .find(|t| !((t.norm() - 1.0).abs() <= UNIT_TOLERANCE))
        {
            return Err(Error::ShapeMismatch(format!(
                "tangent rows must be unit vectors, found norm {}",
                bad.norm()
            )));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec3] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Singular values in descending order and the matching right singular
    /// vectors (columns of `V`).
    fn decompose(&self) -> ([f64; 3], [Vec3; 3]) {
        // pad to at least three rows so the decomposition yields a full V
        let rows = self.rows.len().max(3);
        let matrix = DMatrix::from_fn(rows, 3, |r, c| self.rows.get(r).map_or(0.0, |t| t[c]));
        let svd = matrix.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let values = order.map(|i| svd.singular_values[i]);
        let vectors = order.map(|i| Vec3::new(v_t[(i, 0)], v_t[(i, 1)], v_t[(i, 2)]));
        (values, vectors)
    }

    pub fn singular_values(&self) -> [f64; 3] {
        self.decompose().0
    }
}

/// Effective rank of a tangent stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RankClass {
    Line,
    TangentPlane,
    FullSpace,
}

impl RankClass {
    pub fn rank(self) -> usize {
        match self {
            RankClass::Line => 1,
            RankClass::TangentPlane => 2,
            RankClass::FullSpace => 3,
        }
    }
}

/// Thresholds on `σ_k / σ_1`: at most `lo` counts as absent, above `hi` as present.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankTolerance {
    pub lo: f64,
    pub hi: f64,
}

impl Default for RankTolerance {
    fn default() -> Self {
        Self { lo: 1e-6, hi: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankReport {
    pub class: RankClass,
    pub singular_values: [f64; 3],
    /// Some ratio fell between the two tolerances; `class` is the lower candidate.
    pub ambiguous: bool,
}

pub fn classify_rank(stack: &TangentStack, tolerance: RankTolerance) -> RankReport {
    classify_singular_values(stack.singular_values(), tolerance)
}

fn classify_singular_values(sigma: [f64; 3], tolerance: RankTolerance) -> RankReport {
    let mut rank = 1;
    let mut ambiguous = false;
    for &s in &sigma[1..] {
        let ratio = if sigma[0] > 0.0 { s / sigma[0] } else { 0.0 };
        if ratio > tolerance.hi {
            rank += 1;
        } else if ratio > tolerance.lo {
            ambiguous = true;
        }
    }
    let class = match rank {
        1 => RankClass::Line,
        2 => RankClass::TangentPlane,
        _ => RankClass::FullSpace,
    };
    RankReport {
        class,
        singular_values: sigma,
        ambiguous,
    }
}

/// Normal spanned orthogonally by a rank-2 stack, with canonical sign.
pub fn normal_from_tangents(stack: &TangentStack) -> Result<Vec3> {
    let (sigma, vectors) = stack.decompose();
    let report = classify_singular_values(sigma, RankTolerance::default());
    if report.class != RankClass::TangentPlane {
        return Err(Error::DegenerateNormal(report.class));
    }
    Ok(canonical_sign(vectors[2].normalize()))
}

/// Flips `v` so that its first nonzero component is positive.
pub fn canonical_sign(v: Vec3) -> Vec3 {
    match v.iter().find(|c| **c != 0.0) {
        Some(c) if *c < 0.0 => -v,
        _ => v,
    }
}

/// Offset and scale that map original world coordinates into the normalized scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub offset: [f64; 3],
    pub scale: f64,
    pub scale_ratio: f64,
}

impl NormalizationRecord {
    /// Record of a scene that is already normalized.
    pub fn identity() -> Self {
        Self {
            offset: [0.0; 3],
            scale: 1.0,
            scale_ratio: 1.0,
        }
    }

    pub fn offset(&self) -> Vec3 {
        Vec3::from(self.offset)
    }

    pub fn to_normalized(&self, x: &Vec3) -> Vec3 {
        (x - self.offset()) / self.scale
    }

    pub fn to_world(&self, x: &Vec3) -> Vec3 {
        x * self.scale + self.offset()
    }

    pub fn normalize_camera(&self, camera: &Camera) -> Result<Camera> {
        let center = self.to_normalized(&camera.center());
        let pose = CameraPose::from_center(*camera.pose.rotation(), center)?;
        Ok(Camera::new(camera.intrinsics, pose))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub record: NormalizationRecord,
    pub cameras: Vec<Camera>,
}

/// Centers the rig on the point closest to all optical axes and scales it so
/// the farthest camera center sits at distance `scale_ratio`.
pub fn normalize_cameras(cameras: &[Camera], scale_ratio: f64) -> Result<Normalization> {
    if cameras.len() < 2 {
        return Err(Error::EmptyInput(
            "camera normalization needs at least two cameras",
        ));
    }
    if !(scale_ratio > 0.0) {
        return Err(Error::Config(format!(
            "scale ratio must be positive, got {scale_ratio}"
        )));
    }
    let mut a = Mat3::zeros();
    let mut b = Vec3::zeros();
    for camera in cameras {
        let z = camera.pose.r3();
        let projector = Mat3::identity() - z * z.transpose();
        a += projector;
        b += projector * camera.center();
    }
    let eigen = SymmetricEigen::new(a);
    let (lo, hi) = eigen
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| {
            (lo.min(e), hi.max(e.abs()))
        });
    if !(lo > 1e-9 * hi) {
        return Err(Error::DegenerateRig);
    }
    let normal_matrix = a.transpose() * a;
    let offset = normal_matrix
        .lu()
        .solve(&(a.transpose() * b))
        .ok_or(Error::DegenerateRig)?;
    let scale = cameras
        .iter()
        .map(|c| (c.center() - offset).norm())
        .fold(0.0, f64::max)
        / scale_ratio;
    if !(scale > 0.0) {
        return Err(Error::DegenerateRig);
    }
    let record = NormalizationRecord {
        offset: offset.into(),
        scale,
        scale_ratio,
    };
    let cameras = cameras
        .iter()
        .map(|c| record.normalize_camera(c))
        .collect::<Result<Vec<_>>>()?;
    Ok(Normalization { record, cameras })
}
