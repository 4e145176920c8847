use nalgebra::{Complex, Matrix4};
use serde::{Deserialize, Serialize};

use super::{FieldEval, Sdf};
use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Shapes with exact signed distance, gradient and ray intersection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticShape {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Torus {
        center: [f64; 3],
        axis: [f64; 3],
        major: f64,
        minor: f64,
    },
    RoundedBox {
        center: [f64; 3],
        half_extents: [f64; 3],
        corner_radius: f64,
    },
}

const ROOT_RESIDUAL: f64 = 1e-9;

impl AnalyticShape {
    pub fn sphere(center: Vec3, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Config(format!(
                "sphere radius must be positive, got {radius}"
            )));
        }
        Ok(Self::Sphere {
            center: center.into(),
            radius,
        })
    }

    pub fn torus(center: Vec3, axis: Vec3, major: f64, minor: f64) -> Result<Self> {
        if !(minor > 0.0 && major > minor) {
            return Err(Error::Config(format!(
                "torus needs 0 < minor < major, got major={major}, minor={minor}"
            )));
        }
        if !(axis.norm() > 0.0) {
            return Err(Error::Config("torus axis must be nonzero".into()));
        }
        Ok(Self::Torus {
            center: center.into(),
            axis: axis.normalize().into(),
            major,
            minor,
        })
    }

    pub fn rounded_box(center: Vec3, half_extents: Vec3, corner_radius: f64) -> Result<Self> {
        if !(corner_radius >= 0.0 && half_extents.iter().all(|h| *h > corner_radius)) {
            return Err(Error::Config(format!(
                "rounded box needs half extents larger than the corner radius {corner_radius}"
            )));
        }
        Ok(Self::RoundedBox {
            center: center.into(),
            half_extents: half_extents.into(),
            corner_radius,
        })
    }

    /// Radius of a sphere around `center()` containing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Self::Sphere { radius, .. } => radius,
            Self::Torus { major, minor, .. } => major + minor,
            Self::RoundedBox { half_extents, .. } => Vec3::from(half_extents).norm(),
        }
    }

    pub fn center(&self) -> Vec3 {
        match *self {
            Self::Sphere { center, .. }
            | Self::Torus { center, .. }
            | Self::RoundedBox { center, .. } => Vec3::from(center),
        }
    }

    /// Exact signed distance and unit gradient.
    pub fn evaluate(&self, x: &Vec3) -> FieldEval {
        match *self {
            Self::Sphere { center, radius } => {
                let p = x - Vec3::from(center);
                let d = p.norm();
                if d == 0.0 {
                    FieldEval {
                        value: -radius,
                        gradient: Vec3::x(),
                        singular: true,
                    }
                } else {
                    FieldEval {
                        value: d - radius,
                        gradient: p / d,
                        singular: false,
                    }
                }
            }
            Self::Torus {
                center,
                axis,
                major,
                minor,
            } => {
                let axis = Vec3::from(axis);
                let p = x - Vec3::from(center);
                let h = p.dot(&axis);
                let radial = p - axis * h;
                let rho = radial.norm();
                let (radial_dir, on_axis) = if rho > 0.0 {
                    (radial / rho, false)
                } else {
                    (any_perpendicular(&axis), true)
                };
                let offset = radial_dir * (rho - major) + axis * h;
                let tube = offset.norm();
                if tube == 0.0 {
                    FieldEval {
                        value: -minor,
                        gradient: radial_dir,
                        singular: true,
                    }
                } else {
                    FieldEval {
                        value: tube - minor,
                        gradient: offset / tube,
                        singular: on_axis,
                    }
                }
            }
            Self::RoundedBox {
                center,
                half_extents,
                corner_radius,
            } => {
                let p = x - Vec3::from(center);
                let inner = Vec3::from(half_extents).add_scalar(-corner_radius);
                let q = p.abs() - inner;
                let sign = p.map(|c| if c < 0.0 { -1.0 } else { 1.0 });
                let outside = q.map(|c| c.max(0.0));
                let outside_norm = outside.norm();
                if outside_norm > 0.0 {
                    FieldEval {
                        value: outside_norm - corner_radius,
                        gradient: sign.component_mul(&outside) / outside_norm,
                        singular: false,
                    }
                } else {
                    let k = q.imax();
                    let mut gradient = Vec3::zeros();
                    gradient[k] = sign[k];
                    let ties = q.iter().filter(|c| **c == q[k]).count() > 1;
                    FieldEval {
                        value: q[k] - corner_radius,
                        gradient,
                        singular: ties,
                    }
                }
            }
        }
    }

    /// Smallest ray parameter `t > 0` where `origin + t dir` meets the surface.
    pub fn ray_intersection(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        match *self {
            Self::Sphere { center, radius } => {
                let oc = origin - Vec3::from(center);
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                [-b - root, -b + root].into_iter().find(|t| *t > 0.0)
            }
            Self::Torus {
                center,
                axis,
                major,
                minor,
            } => torus_intersection(
                &(origin - Vec3::from(center)),
                dir,
                &Vec3::from(axis),
                major,
                minor,
            )
            .filter(|t| (self.evaluate(&(origin + dir * *t)).value).abs() < ROOT_RESIDUAL),
            Self::RoundedBox { .. } => self.march(origin, dir),
        }
    }

    fn march(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let far = (origin - self.center()).norm() + self.bounding_radius() * 2.0;
        let mut t = 0.0;
        for _ in 0..10_000 {
            let f = self.evaluate(&(origin + dir * t)).value;
            if f.abs() < 1e-12 {
                return Some(t);
            }
            if f < 0.0 && t == 0.0 {
                return None;
            }
            t += f;
            if t > far {
                return None;
            }
        }
        None
    }
}

impl Sdf for AnalyticShape {
    fn value(&self, x: &Vec3) -> f64 {
        self.evaluate(x).value
    }

    fn eval(&self, x: &Vec3) -> FieldEval {
        self.evaluate(x)
    }
}

fn any_perpendicular(v: &Vec3) -> Vec3 {
    let helper = if v.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    v.cross(&helper).normalize()
}

/// Coefficients `[c0, c1, c2, c3]` of the monic quartic `t⁴ + c3 t³ + c2 t² + c1 t + c0`
/// whose roots are the ray-torus intersections (origin relative to the torus center).
fn torus_quartic(p: &Vec3, dir: &Vec3, axis: &Vec3, major: f64, minor: f64) -> [f64; 4] {
    let b = p.dot(dir);
    let c = p.norm_squared();
    let e = c + major * major - minor * minor;
    let pa = p.dot(axis);
    let da = dir.dot(axis);
    let r2 = 4.0 * major * major;
    [
        e * e - r2 * (c - pa * pa),
        4.0 * b * e - r2 * (2.0 * b - 2.0 * pa * da),
        4.0 * b * b + 2.0 * e - r2 * (1.0 - da * da),
        4.0 * b,
    ]
}

fn torus_intersection(p: &Vec3, dir: &Vec3, axis: &Vec3, major: f64, minor: f64) -> Option<f64> {
    let c = torus_quartic(p, dir, axis, major, minor);
    // eigenvalues of the companion matrix are the quartic's roots
    let companion = Matrix4::new(
        0.0, 0.0, 0.0, -c[0], //
        1.0, 0.0, 0.0, -c[1], //
        0.0, 1.0, 0.0, -c[2], //
        0.0, 0.0, 1.0, -c[3],
    );
    let poly = |t: f64| (((t + c[3]) * t + c[2]) * t + c[1]) * t + c[0];
    let deriv = |t: f64| ((4.0 * t + 3.0 * c[3]) * t + 2.0 * c[2]) * t + c[1];
    companion
        .complex_eigenvalues()
        .iter()
        .filter(|z: &&Complex<f64>| z.im.abs() <= 1e-6 * (1.0 + z.re.abs()))
        .map(|z| {
            let mut t = z.re;
            for _ in 0..8 {
                let d = deriv(t);
                if d == 0.0 {
                    break;
                }
                let step = poly(t) / d;
                t -= step;
                if step.abs() < 1e-15 * (1.0 + t.abs()) {
                    break;
                }
            }
            t
        })
        .filter(|t| *t > 0.0 && t.is_finite())
        .min_by(|a, b| a.total_cmp(b))
}
