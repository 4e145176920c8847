//! Loss terms and their assembly.
//!
//! A training iteration is split in two phases. [`prepare_batch`] does all
//! geometric work that is treated as constant during differentiation: ray
//! casting, the surface/background partition, visibility and tangent lookup,
//! and the search for the minimal field value along background rays. The
//! result is a [`FrozenBatch`]; [`evaluate_loss`] and [`loss_and_gradient`]
//! are then smooth functions of the parameters for that fixed batch.

use crate::error::{Error, Result};
use crate::field::{FieldEval, FieldParams, PointSeed, Sdf};
use crate::geom::{azimuth_to_tangent, tangent_half_pi, Vec3};
use crate::tracing::{
    min_sdf_batch, sphere_interval, sphere_trace_batch, visibility_batch, MinSdfSettings, Ray,
    TraceSettings, Visibility, VisibilitySettings, GRAZING_THRESHOLD,
};

use super::config::{IntersectionMode, TrainConfig, TscMode};
use super::sampling::{PixelRef, TrainingViews};

/// Largest value of one cross-entropy term: probabilities are clamped at 1e-12.
const BCE_CAP: f64 = 27.631021115928547;

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSample {
    pub pixel: PixelRef,
    /// Converged ray–surface intersection.
    pub x: Vec3,
    pub dir: Vec3,
    /// `∇f(x)·dir` when the batch was prepared.
    pub denominator: f64,
    /// Lifted tangents of every view that sees the point.
    pub tangents: Vec<Vec3>,
    /// Companion tangents `t′` rotated by π/2 in the image plane, same order.
    pub alt_tangents: Vec<Vec3>,
    /// Tangent of the pixel the ray was cast through, if its azimuth is valid.
    pub origin_tangent: Option<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilhouetteSample {
    pub pixel: PixelRef,
    /// Where the field is smallest along the pixel's ray.
    pub x: Vec3,
    pub inside: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchStats {
    pub visibility_queries: usize,
    pub visibility_steps: usize,
    pub visibility_capped: usize,
    pub dropped_unstable: usize,
}

impl BatchStats {
    pub fn mean_visibility_steps(&self) -> f64 {
        if self.visibility_queries == 0 {
            0.0
        } else {
            self.visibility_steps as f64 / self.visibility_queries as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenBatch {
    /// Number of sampled pixels `P`; every term is normalized by it.
    pub batch_size: usize,
    pub alpha: f64,
    pub surface: Vec<SurfaceSample>,
    pub silhouette: Vec<SilhouetteSample>,
    pub eikonal: Vec<Vec3>,
    pub stats: BatchStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub tsc: f64,
    pub silhouette: f64,
    pub eikonal: f64,
    pub total: f64,
}

/// Ray through a pixel clipped to the scene bound; pixels whose ray misses
/// the bound get a segment of the same length centered on the closest approach.
fn pixel_segment(views: &TrainingViews, p: &PixelRef, bound: f64) -> Ray {
    let camera = &views.cameras[p.view as usize];
    let (origin, dir) = camera.pixel_ray(p.col, p.row);
    match sphere_interval(&origin, &dir, bound) {
        Some((t0, t1)) => Ray {
            origin,
            dir,
            t_min: t0.max(0.0),
            t_max: t1,
        },
        None => {
            let t = -origin.dot(&dir);
            Ray {
                origin,
                dir,
                t_min: (t - bound).max(0.0),
                t_max: t + bound,
            }
        }
    }
}

/// Geometric phase of one iteration; see the module documentation.
pub fn prepare_batch<S: Sdf>(
    field: &S,
    views: &TrainingViews,
    pixels: &[PixelRef],
    eikonal: Vec<Vec3>,
    config: &TrainConfig,
    alpha: f64,
) -> FrozenBatch {
    let bound = config.bound_radius;
    let segments: Vec<Ray> = pixels
        .iter()
        .map(|p| pixel_segment(views, p, bound))
        .collect();
    let traced_idx: Vec<usize> = (0..pixels.len())
        .filter(|&i| sphere_interval(&segments[i].origin, &segments[i].dir, bound).is_some())
        .collect();
    let traced_rays: Vec<Ray> = traced_idx.iter().map(|&i| segments[i]).collect();
    let mut hits = vec![None; pixels.len()];
    for (&i, result) in traced_idx.iter().zip(sphere_trace_batch(
        field,
        &traced_rays,
        TraceSettings::default(),
    )) {
        // a march that starts inside the field has no first intersection
        hits[i] = result.ok().flatten();
    }

    let mut stats = BatchStats::default();
    let mut surface_idx = Vec::new();
    let mut background_idx = Vec::new();
    for (i, p) in pixels.iter().enumerate() {
        let inside = *views.masks[p.view as usize].get(p.col, p.row);
        match hits[i] {
            Some(_) if inside => surface_idx.push(i),
            _ => background_idx.push(i),
        }
    }

    let hit_points: Vec<Vec3> = surface_idx.iter().map(|&i| hits[i].unwrap().x).collect();
    let denominators: Vec<f64> = match config.intersection_mode {
        IntersectionMode::Differentiable => field
            .evals(&hit_points)
            .iter()
            .zip(&surface_idx)
            .map(|(e, &i)| e.gradient.dot(&segments[i].dir))
            .collect(),
        IntersectionMode::Detached => vec![f64::NAN; hit_points.len()],
    };

    let mut surface: Vec<SurfaceSample> = Vec::with_capacity(surface_idx.len());
    for ((&i, x), denominator) in surface_idx.iter().zip(&hit_points).zip(&denominators) {
        if config.intersection_mode == IntersectionMode::Differentiable
            && !(denominator.abs() > GRAZING_THRESHOLD)
        {
            stats.dropped_unstable += 1;
            continue;
        }
        let p = pixels[i];
        let origin_tangent = views.azimuths[p.view as usize]
            .get(p.col, p.row)
            .map(|phi| azimuth_to_tangent(&views.cameras[p.view as usize].pose, phi));
        surface.push(SurfaceSample {
            pixel: p,
            x: *x,
            dir: segments[i].dir,
            denominator: *denominator,
            tangents: Vec::new(),
            alt_tangents: Vec::new(),
            origin_tangent,
        });
    }

    if config.tsc_mode != TscMode::SingleView {
        gather_tangents(field, views, &mut surface, &mut stats);
    }

    let background_rays: Vec<Ray> = background_idx.iter().map(|&i| segments[i]).collect();
    let settings = MinSdfSettings {
        samples: config.min_sdf_samples.max(2),
        ..Default::default()
    };
    let minima =
        min_sdf_batch(field, &background_rays, settings).expect("sample count is at least 2");
    let silhouette = background_idx
        .iter()
        .zip(minima)
        .map(|(&i, m)| {
            let p = pixels[i];
            SilhouetteSample {
                pixel: p,
                x: segments[i].at(m.t),
                inside: *views.masks[p.view as usize].get(p.col, p.row),
            }
        })
        .collect();

    FrozenBatch {
        batch_size: pixels.len(),
        alpha,
        surface,
        silhouette,
        eikonal,
        stats,
    }
}

/// Fills `tangents`/`alt_tangents` from every view whose image contains the
/// point inside the silhouette with a valid azimuth and that sees the point.
fn gather_tangents<S: Sdf>(
    field: &S,
    views: &TrainingViews,
    surface: &mut [SurfaceSample],
    stats: &mut BatchStats,
) {
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for (si, s) in surface.iter().enumerate() {
        for (vi, camera) in views.cameras.iter().enumerate() {
            let Some((col, row)) = camera.pixel_of(&s.x) else {
                continue;
            };
            if !*views.masks[vi].get(col, row) {
                continue;
            }
            if let Some(phi) = views.azimuths[vi].get(col, row) {
                candidates.push((si, vi, phi));
            }
        }
    }
    let queries: Vec<(Vec3, Vec3)> = candidates
        .iter()
        .map(|&(si, vi, _)| (surface[si].x, views.cameras[vi].center()))
        .collect();
    let outcomes = visibility_batch(field, &queries, VisibilitySettings::default());
    stats.visibility_queries += outcomes.len();
    for ((si, vi, phi), outcome) in candidates.into_iter().zip(outcomes) {
        stats.visibility_steps += outcome.steps as usize;
        if outcome.kind == Visibility::MaxStepsExceeded {
            stats.visibility_capped += 1;
        }
        if outcome.is_visible() {
            let pose = &views.cameras[vi].pose;
            surface[si].tangents.push(azimuth_to_tangent(pose, phi));
            surface[si].alt_tangents.push(tangent_half_pi(pose, phi));
        }
    }
}

/// TSC residual of one surface point with normal `n` and its gradient with
/// respect to `n`. Points seen by no view contribute nothing.
pub fn tsc_term(n: &Vec3, sample: &SurfaceSample, mode: TscMode) -> (f64, Vec3) {
    match mode {
        TscMode::SingleView => match sample.origin_tangent {
            Some(t) => {
                let r = n.dot(&t);
                (r * r, t * (2.0 * r))
            }
            None => (0.0, Vec3::zeros()),
        },
        TscMode::MultiView => {
            if sample.tangents.is_empty() {
                return (0.0, Vec3::zeros());
            }
            let count = sample.tangents.len() as f64;
            let mut value = 0.0;
            let mut grad = Vec3::zeros();
            for t in &sample.tangents {
                let r = n.dot(t);
                value += r * r;
                grad += t * (2.0 * r);
            }
            (value / count, grad / count)
        }
        TscMode::HalfPi => {
            if sample.tangents.is_empty() {
                return (0.0, Vec3::zeros());
            }
            let count = sample.tangents.len() as f64;
            let mut value = 0.0;
            let mut grad = Vec3::zeros();
            for (t, u) in sample.tangents.iter().zip(&sample.alt_tangents) {
                let (a, b) = (n.dot(t), n.dot(u));
                value += a * a * b * b;
                grad += t * (2.0 * a * b * b) + u * (2.0 * a * a * b);
            }
            (value / count, grad / count)
        }
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Cross entropy between the mask label and the soft occupancy `σ(−α f*)`,
/// with its derivative with respect to `f*`.
pub fn silhouette_term(inside: bool, f_star: f64, alpha: f64) -> (f64, f64) {
    // −ln σ(−αf) = softplus(αf),  −ln(1 − σ(−αf)) = softplus(−αf)
    let (value, slope) = if inside {
        (softplus(alpha * f_star), alpha * sigmoid(alpha * f_star))
    } else {
        (softplus(-alpha * f_star), -alpha * sigmoid(-alpha * f_star))
    };
    if value >= BCE_CAP {
        (BCE_CAP, 0.0)
    } else {
        (value, slope)
    }
}

/// `(‖g‖ − 1)²` and its gradient with respect to `g`.
pub fn eikonal_term(g: &Vec3) -> (f64, Vec3) {
    let norm = g.norm();
    let r = norm - 1.0;
    let grad = if norm > 0.0 {
        g * (2.0 * r / norm)
    } else {
        Vec3::zeros()
    };
    (r * r, grad)
}

/// Hit points at the current parameters: the frozen intersections, moved to
/// first order with the field in differentiable mode.
fn surface_positions(
    batch: &FrozenBatch,
    mode: IntersectionMode,
    values_at_hits: &[f64],
) -> Vec<Vec3> {
    batch
        .surface
        .iter()
        .enumerate()
        .map(|(i, s)| match mode {
            IntersectionMode::Detached => s.x,
            IntersectionMode::Differentiable => s.x - s.dir * (values_at_hits[i] / s.denominator),
        })
        .collect()
}

struct Assembled {
    breakdown: LossBreakdown,
    surface_seeds: Vec<PointSeed>,
    silhouette_seeds: Vec<f64>,
    eikonal_seeds: Vec<PointSeed>,
}

fn assemble(
    batch: &FrozenBatch,
    config: &TrainConfig,
    surface_evals: &[FieldEval],
    silhouette_values: &[f64],
    eikonal_evals: &[FieldEval],
) -> Assembled {
    let p = batch.batch_size.max(1) as f64;
    let (l1, l2) = (config.lambda_silhouette, config.lambda_eikonal);

    let mut tsc = 0.0;
    let surface_seeds = batch
        .surface
        .iter()
        .zip(surface_evals)
        .map(|(s, e)| {
            let (v, g) = tsc_term(&e.gradient, s, config.tsc_mode);
            tsc += v;
            PointSeed {
                value: 0.0,
                gradient: g / p,
            }
        })
        .collect();
    tsc /= p;

    let alpha = batch.alpha;
    let mut silhouette = 0.0;
    let silhouette_seeds = batch
        .silhouette
        .iter()
        .zip(silhouette_values)
        .map(|(s, &f)| {
            let (v, d) = silhouette_term(s.inside, f, alpha);
            silhouette += v;
            l1 * d / (alpha * p)
        })
        .collect();
    silhouette /= alpha * p;

    let m = batch.eikonal.len().max(1) as f64;
    let mut eikonal = 0.0;
    let eikonal_seeds = eikonal_evals
        .iter()
        .map(|e| {
            let (v, g) = eikonal_term(&e.gradient);
            eikonal += v;
            PointSeed {
                value: 0.0,
                gradient: g * (l2 / m),
            }
        })
        .collect();
    eikonal /= m;

    Assembled {
        breakdown: LossBreakdown {
            tsc,
            silhouette,
            eikonal,
            total: tsc + l1 * silhouette + l2 * eikonal,
        },
        surface_seeds,
        silhouette_seeds,
        eikonal_seeds,
    }
}

/// Loss of a frozen batch for any field.
pub fn evaluate_loss<S: Sdf>(
    field: &S,
    batch: &FrozenBatch,
    config: &TrainConfig,
) -> LossBreakdown {
    let mode = config.intersection_mode;
    let hit_values = match mode {
        IntersectionMode::Differentiable => {
            field.values(&batch.surface.iter().map(|s| s.x).collect::<Vec<_>>())
        }
        IntersectionMode::Detached => Vec::new(),
    };
    let positions = surface_positions(batch, mode, &hit_values);
    let surface_evals = field.evals(&positions);
    let silhouette_values = field.values(&batch.silhouette.iter().map(|s| s.x).collect::<Vec<_>>());
    let eikonal_evals = field.evals(&batch.eikonal);
    assemble(
        batch,
        config,
        &surface_evals,
        &silhouette_values,
        &eikonal_evals,
    )
    .breakdown
}

/// Loss of a frozen batch and its exact gradient with respect to the network
/// parameters, including the paths through `∇ₓf` and, in differentiable
/// intersection mode, through the moving hit points.
pub fn loss_and_gradient(
    params: &FieldParams,
    batch: &FrozenBatch,
    config: &TrainConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let mode = config.intersection_mode;
    let differentiable = mode == IntersectionMode::Differentiable;
    let ns = batch.surface.len();

    // value-only pass: hit points (differentiable mode) then silhouette minima
    let mut value_points: Vec<Vec3> = Vec::new();
    if differentiable {
        value_points.extend(batch.surface.iter().map(|s| s.x));
    }
    value_points.extend(batch.silhouette.iter().map(|s| s.x));
    let (values, value_tape) = params.values_with_tape(&value_points)?;
    let offset = if differentiable { ns } else { 0 };
    let positions = surface_positions(batch, mode, &values[..offset]);

    let mut grad_points = positions;
    grad_points.extend_from_slice(&batch.eikonal);
    let (evals, grad_tape) = params.evaluate_with_tape(&grad_points)?;

    let assembled = assemble(batch, config, &evals[..ns], &values[offset..], &evals[ns..]);
    let mut grad = vec![0.0; params.len()];
    let mut seeds = assembled.surface_seeds;
    seeds.extend(assembled.eikonal_seeds);
    let point_adjoints = params.backward(&grad_tape, &seeds, &mut grad)?;

    let mut value_seeds: Vec<PointSeed> = Vec::with_capacity(value_points.len());
    if differentiable {
        value_seeds.extend(
            batch
                .surface
                .iter()
                .zip(&point_adjoints)
                .map(|(s, xbar)| PointSeed {
                    value: -xbar.dot(&s.dir) / s.denominator,
                    gradient: Vec3::zeros(),
                }),
        );
    }
    value_seeds.extend(assembled.silhouette_seeds.iter().map(|&v| PointSeed {
        value: v,
        gradient: Vec3::zeros(),
    }));
    params.backward(&value_tape, &value_seeds, &mut grad)?;

    let b = assembled.breakdown;
    if ![b.tsc, b.silhouette, b.eikonal, b.total]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::Numeric("non-finite loss".into()));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite loss gradient".into()));
    }
    Ok((b, grad))
}
