//! Sphere tracing against signed distance fields: forward intersection,
//! minimum-distance search for silhouettes, reverse-march visibility and the
//! first-order sensitivity of a hit point to field perturbations.
//!
//! Every operation has a batched form that advances all rays in lockstep and
//! evaluates the field once per step for the whole batch, which is what makes
//! neural fields affordable here.

use crate::error::{Error, Result};
use crate::field::Sdf;
use crate::geom::Vec3;

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MAX_STEPS: u32 = 64;
pub const DEFAULT_PUSH: f64 = 1e-3;
pub const DEFAULT_MIN_SAMPLES: usize = 64;
pub const DEFAULT_REFINE_ITERATIONS: usize = 8;
/// Below this `|∇f · dir|` a hit point does not move stably with the field.
pub const GRAZING_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Result<Self> {
        if ((dir.norm() - 1.0).abs()) > 1e-9 {
            return Err(Error::InvalidRay(format!("direction norm {}", dir.norm())));
        }
        if !(t_min < t_max) {
            return Err(Error::InvalidRay(format!(
                "empty interval [{t_min}, {t_max}]"
            )));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidRay("non-finite origin".into()));
        }
        Ok(Self {
            origin,
            dir,
            t_min,
            t_max,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }

    /// The part of the line `origin + t·dir` (t ≥ 0) inside the sphere of
    /// `radius` around the origin, or `None` if the line misses it.
    pub fn clipped_to_sphere(origin: Vec3, dir: Vec3, radius: f64) -> Option<Self> {
        let (t0, t1) = sphere_interval(&origin, &dir, radius)?;
        Ray::new(origin, dir, t0.max(0.0), t1).ok()
    }
}

/// Parameters where a unit-direction line enters and leaves a sphere at the origin.
pub fn sphere_interval(origin: &Vec3, dir: &Vec3, radius: f64) -> Option<(f64, f64)> {
    let b = origin.dot(dir);
    let c = origin.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (t0, t1) = (-b - s, -b + s);
    (t1 > 0.0).then_some((t0, t1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub x: Vec3,
    pub t: f64,
    pub steps: u32,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSettings {
    pub epsilon: f64,
    pub max_steps: u32,
}

impl Default for TraceSettings {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

enum March {
    Continue,
    Hit,
    Miss,
}

/// State of one forward march; shared by the scalar and batched tracers.
struct ForwardMarch {
    t: f64,
    steps: u32,
}

impl ForwardMarch {
    fn observe(&mut self, f: f64, ray: &Ray, settings: &TraceSettings) -> March {
        if f.is_nan() {
            return March::Miss;
        }
        if f.abs() < settings.epsilon {
            return March::Hit;
        }
        if self.steps >= settings.max_steps {
            return March::Miss;
        }
        self.t += f;
        self.steps += 1;
        if self.t > ray.t_max {
            March::Miss
        } else {
            March::Continue
        }
    }
}

/// First intersection along `ray`, or `None` for a miss or non-convergence.
pub fn sphere_trace(field: &impl Sdf, ray: &Ray, settings: TraceSettings) -> Result<Option<Hit>> {
    sphere_trace_batch(field, std::slice::from_ref(ray), settings)
        .pop()
        .expect("one ray in, one result out")
}

/// Lockstep version of [`sphere_trace`]; results are in ray order.
pub fn sphere_trace_batch(
    field: &impl Sdf,
    rays: &[Ray],
    settings: TraceSettings,
) -> Vec<Result<Option<Hit>>> {
    let mut results: Vec<Option<Result<Option<Hit>>>> = (0..rays.len()).map(|_| None).collect();
    let mut marches: Vec<ForwardMarch> = rays
        .iter()
        .map(|r| ForwardMarch {
            t: r.t_min,
            steps: 0,
        })
        .collect();
    let mut active: Vec<usize> = (0..rays.len()).collect();
    let mut first = true;
    while !active.is_empty() {
        let points: Vec<Vec3> = active.iter().map(|&i| rays[i].at(marches[i].t)).collect();
        let values = field.values(&points);
        let mut next = Vec::with_capacity(active.len());
        for ((&i, f), x) in active.iter().zip(values).zip(points) {
            if first && !(f > 0.0) {
                results[i] = Some(Err(Error::InvalidStart { value: f }));
                continue;
            }
            let m = &mut marches[i];
            match m.observe(f, &rays[i], &settings) {
                March::Continue => next.push(i),
                March::Hit => {
                    results[i] = Some(Ok(Some(Hit {
                        x,
                        t: m.t,
                        steps: m.steps,
                        residual: f.abs(),
                    })))
                }
                March::Miss => results[i] = Some(Ok(None)),
            }
        }
        active = next;
        first = false;
    }
    results
        .into_iter()
        .map(|r| r.expect("every ray resolved"))
        .collect()
}

/// Smallest field value found along a ray and where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinSdf {
    pub value: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinSdfSettings {
    pub samples: usize,
    pub refine_iterations: usize,
}

impl Default for MinSdfSettings {
    fn default() -> Self {
        Self {
            samples: DEFAULT_MIN_SAMPLES,
            refine_iterations: DEFAULT_REFINE_ITERATIONS,
        }
    }
}

/// Minimum of `f` over `[t_min, t_max]`: stratified samples at cell
/// midpoints, then golden-section refinement around the best sample.
pub fn min_sdf_along_ray(field: &impl Sdf, ray: &Ray, settings: MinSdfSettings) -> Result<MinSdf> {
    Ok(min_sdf_batch(field, std::slice::from_ref(ray), settings)?[0])
}

pub fn min_sdf_batch(
    field: &impl Sdf,
    rays: &[Ray],
    settings: MinSdfSettings,
) -> Result<Vec<MinSdf>> {
    let n = settings.samples;
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 samples, got {n}")));
    }
    let step = |r: &Ray| (r.t_max - r.t_min) / n as f64;
    let sample_t = |r: &Ray, k: usize| r.t_min + (k as f64 + 0.5) * step(r);
    let points: Vec<Vec3> = rays
        .iter()
        .flat_map(|r| (0..n).map(move |k| r.at(sample_t(r, k))))
        .collect();
    let values = field.values(&points);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut best: Vec<MinSdf> = Vec::with_capacity(rays.len());
    let mut brackets: Vec<Golden> = Vec::with_capacity(rays.len());
    for (ri, ray) in rays.iter().enumerate() {
        let vals = &values[ri * n..(ri + 1) * n];
        let (k, v) =
            vals.iter().enumerate().fold(
                (0, f64::INFINITY),
                |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc },
            );
        let t = sample_t(ray, k);
        best.push(MinSdf { value: v, t });
        let a = (t - step(ray)).max(ray.t_min);
        let b = (t + step(ray)).min(ray.t_max);
        brackets.push(Golden {
            a,
            b,
            c: b - inv_phi * (b - a),
            d: a + inv_phi * (b - a),
            fc: f64::NAN,
            fd: f64::NAN,
        });
    }
    if settings.refine_iterations == 0 {
        return Ok(best);
    }

    let probes: Vec<Vec3> = rays
        .iter()
        .zip(&brackets)
        .flat_map(|(r, g)| [r.at(g.c), r.at(g.d)])
        .collect();
    let initial = field.values(&probes);
    for (g, pair) in brackets.iter_mut().zip(initial.chunks(2)) {
        g.fc = pair[0];
        g.fd = pair[1];
    }
    for _ in 0..settings.refine_iterations {
        let mut fresh = Vec::with_capacity(rays.len());
        let mut left = Vec::with_capacity(rays.len());
        for ((g, ray), best) in brackets.iter_mut().zip(rays).zip(best.iter_mut()) {
            g.record(best);
            // keep one interior probe, place a new one
            if g.fc < g.fd {
                g.b = g.d;
                g.d = g.c;
                g.fd = g.fc;
                g.c = g.b - inv_phi * (g.b - g.a);
                fresh.push(ray.at(g.c));
                left.push(true);
            } else {
                g.a = g.c;
                g.c = g.d;
                g.fc = g.fd;
                g.d = g.a + inv_phi * (g.b - g.a);
                fresh.push(ray.at(g.d));
                left.push(false);
            }
        }
        let values = field.values(&fresh);
        for ((g, f), is_left) in brackets.iter_mut().zip(values).zip(left) {
            if is_left {
                g.fc = f;
            } else {
                g.fd = f;
            }
        }
    }
    for (g, best) in brackets.iter().zip(best.iter_mut()) {
        g.record(best);
    }
    Ok(best)
}

struct Golden {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    fc: f64,
    fd: f64,
}

impl Golden {
    fn record(&self, best: &mut MinSdf) {
        for (t, f) in [(self.c, self.fc), (self.d, self.fd)] {
            if f < best.value {
                *best = MinSdf { value: f, t };
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Visibility {
    Visible,
    OccludedByHit,
    EnteredSurface,
    MaxStepsExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VisibilityOutcome {
    pub kind: Visibility,
    pub steps: u32,
}

impl VisibilityOutcome {
    pub fn is_visible(&self) -> bool {
        self.kind == Visibility::Visible
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilitySettings {
    pub push: f64,
    pub epsilon: f64,
    pub max_steps: u32,
}

impl Default for VisibilitySettings {
    fn default() -> Self {
        Self {
            push: DEFAULT_PUSH,
            epsilon: DEFAULT_EPSILON,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

struct ReverseMarch {
    origin: Vec3,
    dir: Vec3,
    distance: f64,
    t: f64,
    steps: u32,
}

impl ReverseMarch {
    fn new(x: &Vec3, camera_center: &Vec3, push: f64) -> Self {
        let to_camera = camera_center - x;
        let distance = to_camera.norm();
        let dir = to_camera / distance;
        Self {
            origin: x + dir * push,
            dir,
            distance: distance - push,
            t: 0.0,
            steps: 0,
        }
    }

    fn position(&self) -> Vec3 {
        self.origin + self.dir * self.t
    }

    fn observe(&mut self, f: f64, settings: &VisibilitySettings) -> Option<Visibility> {
        if f.is_nan() || f < 0.0 {
            return Some(Visibility::EnteredSurface);
        }
        if f < settings.epsilon {
            return Some(Visibility::OccludedByHit);
        }
        self.t += f;
        self.steps += 1;
        if self.t > self.distance {
            return Some(Visibility::Visible);
        }
        if self.steps >= settings.max_steps {
            return Some(Visibility::MaxStepsExceeded);
        }
        None
    }
}

/// Whether the surface point `x` is seen from `camera_center`, by marching
/// from a slightly pushed-out copy of `x` toward the camera.
pub fn visibility(
    field: &impl Sdf,
    x: &Vec3,
    camera_center: &Vec3,
    settings: VisibilitySettings,
) -> VisibilityOutcome {
    visibility_batch(field, &[(*x, *camera_center)], settings)[0]
}

/// Lockstep visibility for `(surface point, camera center)` pairs.
pub fn visibility_batch(
    field: &impl Sdf,
    queries: &[(Vec3, Vec3)],
    settings: VisibilitySettings,
) -> Vec<VisibilityOutcome> {
    let mut marches: Vec<ReverseMarch> = queries
        .iter()
        .map(|(x, c)| ReverseMarch::new(x, c, settings.push))
        .collect();
    let mut results: Vec<Option<VisibilityOutcome>> = vec![None; queries.len()];
    let mut active: Vec<usize> = (0..queries.len()).collect();
    while !active.is_empty() {
        let points: Vec<Vec3> = active.iter().map(|&i| marches[i].position()).collect();
        let values = field.values(&points);
        let mut next = Vec::with_capacity(active.len());
        for (&i, f) in active.iter().zip(values) {
            let m = &mut marches[i];
            match m.observe(f, &settings) {
                Some(kind) => {
                    results[i] = Some(VisibilityOutcome {
                        kind,
                        steps: m.steps,
                    })
                }
                None => next.push(i),
            }
        }
        active = next;
    }
    results
        .into_iter()
        .map(|r| r.expect("every query resolved"))
        .collect()
}

/// A converged hit together with what is needed to move it with the field:
/// to first order `x(θ) = x₀ − dir·δf / (∇f(x₀)·dir)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferentiableHit {
    pub x: Vec3,
    pub dir: Vec3,
    /// `∇f(x₀) · dir`, bounded away from zero.
    pub denominator: f64,
}

impl DifferentiableHit {
    /// Displacement of the hit caused by a change `delta_f` of the field value at `x₀`.
    pub fn displacement(&self, delta_f: f64) -> Vec3 {
        -self.dir * (delta_f / self.denominator)
    }

    /// Chain rule through the moving hit: given `∂L/∂x`, the factor multiplying
    /// `∂f(x₀;θ)/∂θ` in `dL/dθ`.
    pub fn value_seed(&self, x_adjoint: &Vec3) -> f64 {
        -x_adjoint.dot(&self.dir) / self.denominator
    }
}

pub fn differentiable_intersection(
    field: &impl Sdf,
    ray: &Ray,
    hit: &Hit,
) -> Result<DifferentiableHit> {
    let g = field.eval(&hit.x).gradient;
    let denominator = g.dot(&ray.dir);
    if !(denominator.abs() > GRAZING_THRESHOLD) {
        return Err(Error::UnstableIntersection(denominator.abs()));
    }
    Ok(DifferentiableHit {
        x: hit.x,
        dir: ray.dir,
        denominator,
    })
}

/// Mean step count over a set of visibility outcomes.
pub fn mean_steps(outcomes: &[VisibilityOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().map(|o| o.steps as f64).sum::<f64>() / outcomes.len() as f64
}
