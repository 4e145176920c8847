//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! `cargo test --release --test acceptance` runs everything; numeric arguments
//! (`-- 5 8`) restrict the run to those criteria.

use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use mvas::analysis::{analyze_point, PointReport};
use mvas::eval::{
    chamfer, fscore, marching_cubes, render_maps, visible_points, BoundingBox, FieldCaster,
};
use mvas::field::{AnalyticShape, Architecture, FieldParams, Sdf};
use mvas::geom::{
    azimuth_to_tangent, normalize_cameras, tangent_half_pi, Camera, CameraIntrinsics, CameraPose,
    Mat3, NormalizationRecord, RankClass, RankTolerance, Vec3,
};
use mvas::synth::{
    make_rig, observe_azimuth, render_views, AmbiguityMode, RenderSettings, RigKind, RigSpec,
    SyntheticView,
};
use mvas::tracing::{visibility_batch, Visibility, VisibilitySettings};
use mvas::train::{
    eikonal_points, evaluate_loss, loss_and_gradient, prepare_batch, sample_pixels, AlphaSchedule,
    IntersectionMode, TrainConfig, Trainer, TrainingViews, TscMode,
};
use mvas::Error;
use nalgebra::{Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const SPHERE_ITERATIONS: usize = 3000;
const ROBUSTNESS_ITERATIONS: usize = SPHERE_ITERATIONS;
const ABLATION_ITERATIONS: usize = 1500;
const DILATION: u32 = 8;

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }

    fn failed(err: impl std::fmt::Display) -> Self {
        Self::new(false, format!("error: {err}"))
    }
}

/// Shared state: the end-to-end sphere is trained once and reused.
#[derive(Default)]
struct Context {
    sphere: OnceCell<Result<TrainedSphere, String>>,
}

struct TrainedSphere {
    scene: Scene,
    params: FieldParams,
    seconds: f64,
}

impl Context {
    fn trained_sphere(&self) -> Result<&TrainedSphere, String> {
        self.sphere
            .get_or_init(|| {
                let scene = Scene::new(acceptance_sphere(), 12, RenderSettings::exact())
                    .map_err(|e| e.to_string())?;
                let t0 = Instant::now();
                let params = train(&scene, TscMode::MultiView, SPHERE_ITERATIONS)
                    .map_err(|e| e.to_string())?;
                Ok(TrainedSphere {
                    scene,
                    params,
                    seconds: t0.elapsed().as_secs_f64(),
                })
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(usize, &str, fn(&Context) -> Outcome); 10] = [
        (1, "tangent algebra", tangent_algebra),
        (2, "tsc rank oracle", rank_oracle),
        (3, "differentiation", differentiation),
        (4, "pi invariance", pi_invariance),
        (5, "end-to-end sphere", end_to_end_sphere),
        (6, "half-pi robustness", half_pi_robustness),
        (7, "single-view ablation", ablation),
        (8, "visibility", visibility_termination),
        (9, "camera normalization", camera_normalization),
        (10, "metrics", metrics),
    ];
    let ctx = Context::default();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = run(&ctx);
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {verdict} {name}: {} [{:.1} s]",
            outcome.summary,
            t0.elapsed().as_secs_f64()
        );
        for line in &outcome.details {
            println!("    {line}");
        }
        ran += 1;
        if !outcome.pass {
            failed.push(id);
        }
    }
    println!(
        "acceptance: {} of {ran} criteria passed; failed: {failed:?}",
        ran - failed.len()
    );
}

// ---------------------------------------------------------------- scenes

fn acceptance_sphere() -> AnalyticShape {
    AnalyticShape::sphere(Vec3::new(0.05, -0.03, 0.02), 0.4).expect("valid sphere")
}

fn acceptance_torus() -> AnalyticShape {
    AnalyticShape::torus(
        Vec3::zeros(),
        Vec3::new(0.3, 0.2, 1.0).normalize(),
        0.5,
        0.2,
    )
    .expect("valid torus")
}

/// A rendered ring dataset together with its normalized cameras.
struct Scene {
    views: Vec<SyntheticView>,
    cameras: Vec<Camera>,
    record: NormalizationRecord,
}

impl Scene {
    fn new(shape: AnalyticShape, count: usize, settings: RenderSettings) -> mvas::Result<Self> {
        let rig = make_rig(&RigSpec::new(RigKind::GenericRing, count))?;
        Self::with_cameras(shape, &rig, settings)
    }

    fn with_cameras(
        shape: AnalyticShape,
        rig: &[Camera],
        settings: RenderSettings,
    ) -> mvas::Result<Self> {
        let views = render_views(&shape, rig, &settings)?;
        let norm = normalize_cameras(rig, 3.0)?;
        Ok(Self {
            views,
            cameras: norm.cameras,
            record: norm.record,
        })
    }

    fn training_views(&self, dilation: u32) -> mvas::Result<TrainingViews> {
        TrainingViews::new(
            self.cameras.clone(),
            self.views.iter().map(|v| v.azimuth.clone()).collect(),
            self.views.iter().map(|v| v.mask.clone()).collect(),
            dilation,
        )
    }

    /// Ground-truth surface points seen through the pixels, in normalized units.
    fn visible_gt_points(&self) -> Vec<Vec3> {
        let mut out = Vec::new();
        for view in &self.views {
            let camera = &view.camera;
            for (col, row, depth) in view.gt_depth.pixels() {
                if let Some(t) = depth {
                    let (origin, dir) = camera.pixel_ray(col, row);
                    out.push(self.record.to_normalized(&(origin + dir * *t)));
                }
            }
        }
        out
    }
}

fn acceptance_config(mode: TscMode, iterations: usize) -> TrainConfig {
    TrainConfig {
        architecture: Architecture {
            frequencies: 6,
            ..Architecture::with_width(64)
        },
        batch_size: 256,
        eikonal_samples: 128,
        min_sdf_samples: 16,
        dilation_iterations: DILATION,
        alpha_schedule: AlphaSchedule::Double,
        lr: 1e-4,
        epochs: 1000,
        max_iterations: Some(iterations),
        tsc_mode: mode,
        ..TrainConfig::default()
    }
}

fn train(scene: &Scene, mode: TscMode, iterations: usize) -> mvas::Result<FieldParams> {
    let config = acceptance_config(mode, iterations);
    let mut trainer = Trainer::new(config, scene.training_views(DILATION)?)?;
    trainer.run(|_, _| Ok(()))?;
    Ok(trainer.into_params())
}

/// Mean angular error over every pixel with a ground-truth normal; pixels the
/// reconstruction misses count as 90°. Returns the MAE and the hit fraction.
fn normal_mae<S: Sdf>(field: &S, scene: &Scene) -> (f64, f64) {
    let caster = FieldCaster::new(field, 1.0);
    let (mut sum, mut count, mut hits) = (0.0, 0usize, 0usize);
    for (view, camera) in scene.views.iter().zip(&scene.cameras) {
        let pred = render_maps(&caster, camera);
        for ((p, g), m) in pred
            .normals
            .data()
            .iter()
            .zip(view.gt_normals.data())
            .zip(view.mask.data())
        {
            let (true, Some(g)) = (*m, g) else { continue };
            count += 1;
            sum += match p {
                Some(p) => {
                    hits += 1;
                    p.normalize()
                        .dot(&g.normalize())
                        .clamp(-1.0, 1.0)
                        .acos()
                        .to_degrees()
                }
                None => 90.0,
            };
        }
    }
    (sum / count as f64, hits as f64 / count as f64)
}

// ---------------------------------------------------------------- 1

fn random_rotation(rng: &mut impl Rng) -> Mat3 {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
        .to_rotation_matrix()
        .into_inner()
}

fn tangent_algebra(_: &Context) -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 4];
    for _ in 0..100_000 {
        let translation = Vec3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        let pose = match CameraPose::new(random_rotation(&mut rng), translation) {
            Ok(p) => p,
            Err(e) => return Outcome::failed(e),
        };
        let phi = rng.random_range(-4.0 * PI..4.0 * PI);
        let t = azimuth_to_tangent(&pose, phi);
        let flipped = azimuth_to_tangent(&pose, phi + PI);
        let alt = tangent_half_pi(&pose, phi);
        let errors = [
            (t.norm() - 1.0).abs(),
            (t + flipped).norm(),
            (pose.rotation() * t).z.abs(),
            alt.dot(&t).abs(),
        ];
        for (w, e) in worst.iter_mut().zip(errors) {
            *w = w.max(e);
        }
    }
    let seconds = t0.elapsed().as_secs_f64();
    let pass = worst.iter().all(|&e| e < 1e-9) && seconds < 10.0;
    Outcome::new(
        pass,
        format!(
            "max errors: norm {:.1e}, antisymmetry {:.1e}, image plane {:.1e}, t'.t {:.1e} (tol 1e-9); {seconds:.2} s (limit 10 s)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

// ---------------------------------------------------------------- 2

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    Vec3::from_fn(|_, _| StandardNormal.sample(rng)).normalize()
}

fn project_to_surface(shape: &AnalyticShape, mut x: Vec3) -> Vec3 {
    for _ in 0..50 {
        let e = shape.evaluate(&x);
        x -= e.gradient * e.value;
    }
    x
}

fn analyze(x: &Vec3, cameras: &[Camera], shape: &AnalyticShape, occluded: bool) -> PointReport {
    let lookup = |_: usize, c: &Camera, u: f64, v: f64| observe_azimuth(shape, c, u, v);
    let occluder = occluded.then_some(shape);
    analyze_point(x, cameras, &lookup, occluder, RankTolerance::default())
}

fn rank_of(r: &PointReport) -> usize {
    r.class.map_or(0, RankClass::rank)
}

fn normal_error(r: &PointReport, expected: &Vec3) -> f64 {
    r.normal.map_or(f64::INFINITY, |n| {
        Vec3::from(n).dot(expected).abs().clamp(0.0, 1.0).acos()
    })
}

/// Histogram of ranks over points seen by at least two views.
fn rank_histogram(reports: &[PointReport]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for r in reports.iter().filter(|r| r.contributing >= 2) {
        *h.entry(rank_of(r)).or_insert(0) += 1;
    }
    h
}

fn modal(h: &BTreeMap<usize, usize>) -> usize {
    h.iter().max_by_key(|(_, &n)| n).map_or(0, |(&k, _)| k)
}

fn max_rank(h: &BTreeMap<usize, usize>) -> usize {
    h.keys().copied().max().unwrap_or(0)
}

fn rank_oracle(_: &Context) -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut details = Vec::new();
    let mut pass = true;
    let mut check = |ok: bool, line: String, details: &mut Vec<String>| {
        pass &= ok;
        details.push(format!("[{}] {line}", if ok { "ok" } else { "FAIL" }));
    };

    let ring = make_rig(&RigSpec::new(RigKind::GenericRing, 12)).expect("ring rig");
    let sphere = acceptance_sphere();
    let (center, radius) = (sphere.center(), 0.4);

    // surface points seen by at least two views
    let (mut seen, mut skipped, mut bad_class, mut worst_ratio, mut worst_angle) =
        (0, 0, 0, 0.0f64, 0.0f64);
    while seen < 1000 {
        let d = random_unit(&mut rng);
        let r = analyze(&(center + d * radius), &ring, &sphere, true);
        if r.contributing < 2 {
            skipped += 1;
            continue;
        }
        seen += 1;
        if r.class != Some(RankClass::TangentPlane) {
            bad_class += 1;
        }
        let s = r.singular_values.expect("non-empty stack");
        worst_ratio = worst_ratio.max(s[2] / s[0]);
        worst_angle = worst_angle.max(normal_error(&r, &d));
    }
    check(
        bad_class == 0 && worst_ratio < 1e-8 && worst_angle < 1e-3,
        format!(
            "ring sphere surface: {} of 1000 TangentPlane, max s3/s1 {worst_ratio:.1e}, max normal error {worst_angle:.1e} rad ({skipped} samples seen by < 2 views skipped)",
            1000 - bad_class
        ),
        &mut details,
    );

    // interior points; no occluder, every view contributes the surface it sees
    let interior: Vec<PointReport> = (0..1000)
        .map(|_| {
            let x = center + random_unit(&mut rng) * radius * rng.random::<f64>().cbrt();
            analyze(&x, &ring, &sphere, false)
        })
        .collect();
    let full = interior
        .iter()
        .filter(|r| r.class == Some(RankClass::FullSpace))
        .count();
    check(
        full as f64 >= 0.99 * interior.len() as f64,
        format!(
            "ring sphere interior: {full} of 1000 FullSpace (need 990), ranks {:?}",
            rank_histogram(&interior)
        ),
        &mut details,
    );

    // rows of the degenerate-case table
    let ball = AnalyticShape::sphere(Vec3::zeros(), 0.5).expect("valid sphere");
    let boxed =
        AnalyticShape::rounded_box(Vec3::zeros(), Vec3::repeat(0.5), 0.05).expect("valid box");
    let sample_surface = |shape: &AnalyticShape,
                          rng: &mut ChaCha8Rng,
                          cams: &[Camera],
                          n: usize|
     -> Vec<(Vec3, PointReport)> {
        (0..n)
            .map(|_| {
                let x = project_to_surface(shape, random_unit(rng) * 0.5);
                let r = analyze(&x, cams, shape, true);
                (shape.evaluate(&x).gradient, r)
            })
            .filter(|(_, r)| r.contributing >= 2)
            .collect()
    };
    let sample_off = |shape: &AnalyticShape,
                      rng: &mut ChaCha8Rng,
                      cams: &[Camera],
                      half: f64,
                      n: usize|
     -> Vec<PointReport> {
        (0..n)
            .map(|_| {
                let x = Vec3::from_fn(|_, _| rng.random_range(-half..half));
                analyze(&x, cams, shape, false)
            })
            .collect()
    };

    let two = make_rig(&RigSpec::new(RigKind::TwoView, 2)).expect("two-view rig");
    let surf = sample_surface(&ball, &mut rng, &two, 300);
    let off = rank_histogram(&sample_off(&ball, &mut rng, &two, 0.35, 300));
    let surf_ranks: Vec<usize> = surf.iter().map(|(_, r)| rank_of(r)).collect();
    check(
        max_rank(&off) == 2
            && modal(&off) == 2
            && !surf_ranks.is_empty()
            && surf_ranks.iter().all(|&k| k == 2),
        format!(
            "two-view: non-surface ranks {off:?}, surface all rank 2 over {} points",
            surf_ranks.len()
        ),
        &mut details,
    );

    let parallel = make_rig(&RigSpec::new(RigKind::ParallelAxes, 9)).expect("parallel rig");
    let surf = sample_surface(&ball, &mut rng, &parallel, 300);
    let off = rank_histogram(&sample_off(&ball, &mut rng, &parallel, 0.35, 300));
    let lines = surf
        .iter()
        .filter(|(_, r)| r.class == Some(RankClass::Line))
        .count();
    check(
        max_rank(&off) == 2 && modal(&off) == 2 && !surf.is_empty() && lines == surf.len(),
        format!(
            "parallel axes: non-surface ranks {off:?}, surface rank 1 at {lines} of {} points",
            surf.len()
        ),
        &mut details,
    );

    let coplanar = make_rig(&RigSpec::new(RigKind::CoplanarAxes, 12)).expect("coplanar rig");
    let plane_normal = coplanar[0]
        .pose
        .r3()
        .cross(&coplanar[1].pose.r3())
        .normalize();
    let equator: Vec<PointReport> = (0..300)
        .map(|_| {
            let d = random_unit(&mut rng);
            let d = (d - plane_normal * d.dot(&plane_normal)).normalize();
            analyze(&(d * 0.5), &coplanar, &ball, true)
        })
        .filter(|r| r.contributing >= 2)
        .collect();
    let eq_lines = equator
        .iter()
        .filter(|r| r.class == Some(RankClass::Line))
        .count();
    let surf = sample_surface(&ball, &mut rng, &coplanar, 300);
    let tilted: Vec<&PointReport> = surf
        .iter()
        .filter(|(n, _)| n.dot(&plane_normal).abs() > 0.1)
        .map(|(_, r)| r)
        .collect();
    let tilted_planes = tilted
        .iter()
        .filter(|r| r.class == Some(RankClass::TangentPlane))
        .count();
    let off = rank_histogram(&sample_off(&ball, &mut rng, &coplanar, 0.35, 300));
    check(
        max_rank(&off) == 2
            && modal(&off) == 2
            && !equator.is_empty()
            && eq_lines == equator.len()
            && tilted_planes == tilted.len(),
        format!(
            "coplanar axes: non-surface ranks {off:?}, rank 1 at {eq_lines} of {} in-plane normals, rank 2 at {tilted_planes} of {} other normals",
            equator.len(),
            tilted.len()
        ),
        &mut details,
    );

    let planar_rig = make_rig(&RigSpec {
        elevations_deg: vec![35.0, 50.0],
        ..RigSpec::new(RigKind::GenericRing, 12)
    })
    .expect("ring rig");
    let face: Vec<PointReport> = (0..200)
        .map(|_| {
            let x = Vec3::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                0.5 + rng.random_range(-0.03..0.03),
            );
            analyze(&x, &planar_rig, &boxed, false)
        })
        .collect();
    let face_planes = face
        .iter()
        .filter(|r| r.class == Some(RankClass::TangentPlane))
        .count();
    let face_err = face
        .iter()
        .map(|r| normal_error(r, &Vec3::z()))
        .fold(0.0, f64::max);
    check(
        face_planes == face.len() && face_err < 1e-3,
        format!("planar face: rank 2 at {face_planes} of {} points near the face, max normal error {face_err:.1e} rad", face.len()),
        &mut details,
    );

    let surf = sample_surface(&boxed, &mut rng, &ring, 300);
    let surf_planes = surf
        .iter()
        .filter(|(_, r)| r.class == Some(RankClass::TangentPlane))
        .count();
    let off = rank_histogram(&sample_off(&boxed, &mut rng, &ring, 0.45, 300));
    let off_total: usize = off.values().sum();
    check(
        off.get(&3).copied().unwrap_or(0) as f64 >= 0.99 * off_total as f64
            && surf_planes as f64 >= 0.8 * surf.len() as f64,
        format!("generic ring, rounded box: non-surface ranks {off:?}, surface rank 2 at {surf_planes} of {}", surf.len()),
        &mut details,
    );

    let seconds = t0.elapsed().as_secs_f64();
    pass &= seconds < 60.0;
    let mut outcome = Outcome::new(pass, format!("{seconds:.1} s (limit 60 s)"));
    outcome.details = details;
    outcome
}

// ---------------------------------------------------------------- 3

fn perturbed_params(arch: Architecture, seed: u64, scale: f64) -> mvas::Result<FieldParams> {
    let base = FieldParams::init_sphere(seed, arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let data = base
        .as_slice()
        .iter()
        .map(|&w| {
            let z: f64 = StandardNormal.sample(&mut rng);
            w + scale * z
        })
        .collect::<Vec<f64>>();
    FieldParams::from_vec(arch, data)
}

fn spatial_gradient_error(params: &FieldParams, rng: &mut impl Rng) -> f64 {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let x = Vec3::from_fn(|_, _| rng.random_range(-0.9..0.9));
        let g = params.eval(&x).gradient;
        let fd = Vec3::from_fn(|i, _| {
            let mut e = Vec3::zeros();
            e[i] = h;
            (params.value(&(x + e)) - params.value(&(x - e))) / (2.0 * h)
        });
        worst = worst.max((g - fd).norm() / fd.norm().max(1e-12));
    }
    worst
}

/// Relative error between the analytic and finite-difference parameter
/// gradients: the difference norm over the finite-difference norm.
fn parameter_gradient_error(
    params: &FieldParams,
    views: &TrainingViews,
    config: &TrainConfig,
    seed: u64,
) -> mvas::Result<(f64, usize, usize)> {
    let pixels = sample_pixels(views.pool(), 96, seed, 0, 0)?;
    let eikonal = eikonal_points(48, 1.0, seed, 0, 0);
    let batch = prepare_batch(params, views, &pixels, eikonal, config, config.alpha0);
    let (_, grad) = loss_and_gradient(params, &batch, config)?;
    let arch = *params.architecture();
    let base = params.as_slice().to_vec();
    let total = |data: Vec<f64>| -> mvas::Result<f64> {
        Ok(evaluate_loss(&FieldParams::from_vec(arch, data)?, &batch, config).total)
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..base.len() {
        let h = 1e-6 * base[i].abs().max(1.0);
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let fd = (total(plus)? - total(minus)?) / (2.0 * h);
        num += (grad[i] - fd).powi(2);
        den += fd * fd;
    }
    Ok((
        (num / den).sqrt(),
        batch.surface.len(),
        batch.silhouette.len(),
    ))
}

fn differentiation(_: &Context) -> Outcome {
    let run = || -> mvas::Result<Outcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let small = Architecture {
            frequencies: 4,
            ..Architecture::with_width(8)
        };
        let wide = Architecture {
            frequencies: 6,
            ..Architecture::with_width(64)
        };
        let small_params = perturbed_params(small, 3, 0.01)?;
        let wide_params = perturbed_params(wide, 4, 0.01)?;
        let x_err = spatial_gradient_error(&small_params, &mut rng)
            .max(spatial_gradient_error(&wide_params, &mut rng));

        let rig = make_rig(&RigSpec::new(RigKind::GenericRing, 12).with_resolution(32, 32))?;
        let scene = Scene::with_cameras(acceptance_sphere(), &rig, RenderSettings::exact())?;
        let views = scene.training_views(2)?;
        let mut details = Vec::new();
        let mut theta_err = 0.0f64;
        for (mode, intersection) in [
            (TscMode::MultiView, IntersectionMode::Detached),
            (TscMode::MultiView, IntersectionMode::Differentiable),
            (TscMode::HalfPi, IntersectionMode::Detached),
            (TscMode::SingleView, IntersectionMode::Differentiable),
        ] {
            let config = TrainConfig {
                architecture: small,
                tsc_mode: mode,
                intersection_mode: intersection,
                ..TrainConfig::default()
            };
            let (err, surface, silhouette) =
                parameter_gradient_error(&small_params, &views, &config, 7)?;
            theta_err = theta_err.max(err);
            details.push(format!(
                "{mode:?}/{intersection:?}: rel err {err:.1e} ({surface} surface, {silhouette} silhouette samples, {} parameters)",
                small_params.len()
            ));
        }
        let mut outcome = Outcome::new(
            x_err < 1e-4 && theta_err < 1e-3,
            format!("spatial gradient max rel err {x_err:.1e} (tol 1e-4); parameter gradient max rel err {theta_err:.1e} (tol 1e-3)"),
        );
        outcome.details = details;
        Ok(outcome)
    };
    let t0 = Instant::now();
    let mut outcome = run().unwrap_or_else(Outcome::failed);
    let seconds = t0.elapsed().as_secs_f64();
    outcome.pass &= seconds < 120.0;
    outcome.summary += &format!("; {seconds:.1} s (limit 120 s)");
    outcome
}

// ---------------------------------------------------------------- 4

fn pi_invariance(_: &Context) -> Outcome {
    let run = || -> mvas::Result<Outcome> {
        let rig = make_rig(&RigSpec::new(RigKind::GenericRing, 12).with_resolution(32, 32))?;
        let exact = Scene::with_cameras(acceptance_sphere(), &rig, RenderSettings::exact())?;
        let flipped = Scene::with_cameras(
            acceptance_sphere(),
            &rig,
            RenderSettings::with_ambiguity(AmbiguityMode::PiRandom, 11),
        )?;
        let flips = exact
            .views
            .iter()
            .zip(&flipped.views)
            .flat_map(|(a, b)| a.azimuth.values().iter().zip(b.azimuth.values()))
            .filter(|(a, b)| a.is_finite() && (*a - *b).abs() > 1.0)
            .count();
        let exact_views = exact.training_views(2)?;
        let flipped_views = flipped.training_views(2)?;
        let arch = Architecture {
            frequencies: 4,
            ..Architecture::with_width(16)
        };
        let (mut loss_diff, mut grad_diff, mut cases) = (0.0f64, 0.0f64, 0);
        for seed in 0..6u64 {
            let params = perturbed_params(arch, seed, 0.02)?;
            for mode in [TscMode::MultiView, TscMode::SingleView] {
                let config = TrainConfig {
                    architecture: arch,
                    tsc_mode: mode,
                    intersection_mode: if seed % 2 == 0 {
                        IntersectionMode::Detached
                    } else {
                        IntersectionMode::Differentiable
                    },
                    ..TrainConfig::default()
                };
                let pixels = sample_pixels(exact_views.pool(), 128, seed, 0, 0)?;
                let eik = eikonal_points(16, 1.0, seed, 0, 0);
                let a = prepare_batch(&params, &exact_views, &pixels, eik.clone(), &config, 50.0);
                let b = prepare_batch(&params, &flipped_views, &pixels, eik, &config, 50.0);
                let (la, ga) = loss_and_gradient(&params, &a, &config)?;
                let (lb, gb) = loss_and_gradient(&params, &b, &config)?;
                loss_diff = loss_diff
                    .max((la.tsc - lb.tsc).abs())
                    .max((la.total - lb.total).abs());
                grad_diff = grad_diff.max(
                    ga.iter()
                        .zip(&gb)
                        .map(|(x, y)| (x - y).abs())
                        .fold(0.0, f64::max),
                );
                cases += 1;
            }
        }
        Ok(Outcome::new(
            loss_diff <= 1e-9 && grad_diff <= 1e-9 && flips > 0,
            format!("{cases} batches, {flips} flipped pixels: max |tsc difference| {loss_diff:.1e}, max gradient difference {grad_diff:.1e} (tol 1e-9)"),
        ))
    };
    run().unwrap_or_else(Outcome::failed)
}

// ---------------------------------------------------------------- 5

fn end_to_end_sphere(ctx: &Context) -> Outcome {
    let trained = match ctx.trained_sphere() {
        Ok(t) => t,
        Err(e) => return Outcome::failed(e),
    };
    let (mae, coverage) = normal_mae(&trained.params, &trained.scene);
    let pred = visible_points(
        &FieldCaster::new(&trained.params, 1.0),
        &trained.scene.cameras,
    );
    let gt = trained.scene.visible_gt_points();
    let cd = match chamfer(&pred, &gt) {
        Ok(cd) => cd,
        Err(e) => return Outcome::failed(e),
    };
    let pass = mae <= 3.0 && cd <= 0.01 && trained.seconds <= 1800.0;
    Outcome::new(
        pass,
        format!(
            "{SPHERE_ITERATIONS} iterations in {:.0} s (limit 1800 s): MAE {mae:.3} deg (tol 3), hit coverage {:.4}, chamfer {cd:.5} (tol 0.01)",
            trained.seconds, coverage
        ),
    )
}

// ---------------------------------------------------------------- 6

fn half_pi_robustness(_: &Context) -> Outcome {
    let run = || -> mvas::Result<Outcome> {
        let settings =
            RenderSettings::with_ambiguity(AmbiguityMode::HalfPiRandom { probability: 0.5 }, 21);
        let scene = Scene::new(acceptance_sphere(), 12, settings)?;
        let robust = train(&scene, TscMode::HalfPi, ROBUSTNESS_ITERATIONS)?;
        let (robust_mae, _) = normal_mae(&robust, &scene);
        let plain = train(&scene, TscMode::MultiView, ROBUSTNESS_ITERATIONS)?;
        let (plain_mae, _) = normal_mae(&plain, &scene);
        Ok(Outcome::new(
            robust_mae <= 5.0 && plain_mae >= 2.0 * robust_mae,
            format!(
                "{ROBUSTNESS_ITERATIONS} iterations each: half-pi loss MAE {robust_mae:.3} deg (tol 5), multi-view loss MAE {plain_mae:.3} deg (ratio {:.2}, need >= 2)",
                plain_mae / robust_mae
            ),
        ))
    };
    run().unwrap_or_else(Outcome::failed)
}

// ---------------------------------------------------------------- 7

fn ablation(_: &Context) -> Outcome {
    let run = || -> mvas::Result<Outcome> {
        let rig = make_rig(&RigSpec::new(RigKind::GenericRing, 12))?;
        let one = Scene::with_cameras(acceptance_sphere(), &rig[..1], RenderSettings::exact());
        // a single camera cannot be normalized on its own; reuse the ring's frame
        let one = match one {
            Err(Error::EmptyInput(_)) | Err(Error::DegenerateRig) => {
                let full = Scene::new(acceptance_sphere(), 12, RenderSettings::exact())?;
                Scene {
                    views: full.views[..1].to_vec(),
                    cameras: full.cameras[..1].to_vec(),
                    record: full.record,
                }
            }
            other => other?,
        };
        let views = one.training_views(DILATION)?;
        let arch = Architecture {
            frequencies: 6,
            ..Architecture::with_width(64)
        };
        let mut identical = true;
        let (mut surface, mut hidden) = (0, 0);
        let config = |mode| TrainConfig {
            architecture: arch,
            tsc_mode: mode,
            ..TrainConfig::default()
        };
        for seed in 0..3u64 {
            // small enough that the perturbed sphere stays free of self-occluding bumps
            let params = perturbed_params(arch, seed, 0.001)?;
            let pixels = sample_pixels(views.pool(), 256, seed, 0, 0)?;
            let eik = eikonal_points(64, 1.0, seed, 0, 0);
            let mut batch = prepare_batch(
                &params,
                &views,
                &pixels,
                eik,
                &config(TscMode::MultiView),
                50.0,
            );
            // the equality is defined for points their one view sees
            let before = batch.surface.len();
            batch.surface.retain(|s| !s.tangents.is_empty());
            hidden += before - batch.surface.len();
            surface += batch.surface.len();
            identical &= batch
                .surface
                .iter()
                .all(|s| s.tangents.len() == 1 && Some(s.tangents[0]) == s.origin_tangent);
            let (ma, ga) = loss_and_gradient(&params, &batch, &config(TscMode::MultiView))?;
            let (sa, gs) = loss_and_gradient(&params, &batch, &config(TscMode::SingleView))?;
            identical &= ma.total.to_bits() == sa.total.to_bits()
                && ma.tsc.to_bits() == sa.tsc.to_bits()
                && ga.iter().zip(&gs).all(|(a, b)| a.to_bits() == b.to_bits());
        }

        let torus = Scene::new(acceptance_torus(), 12, RenderSettings::exact())?;
        let multi = train(&torus, TscMode::MultiView, ABLATION_ITERATIONS)?;
        let (multi_mae, _) = normal_mae(&multi, &torus);
        let single = train(&torus, TscMode::SingleView, ABLATION_ITERATIONS)?;
        let (single_mae, _) = normal_mae(&single, &torus);
        Ok(Outcome::new(
            identical && surface > 0 && multi_mae < single_mae,
            format!(
                "one view: loss and gradient bitwise identical = {identical} over {surface} visible surface samples ({hidden} hits rejected by their own view's reverse march); torus after {ABLATION_ITERATIONS} iterations: multi-view MAE {multi_mae:.3} deg, single-view MAE {single_mae:.3} deg"
            ),
        ))
    };
    run().unwrap_or_else(Outcome::failed)
}

// ---------------------------------------------------------------- 8

fn visibility_termination(ctx: &Context) -> Outcome {
    let trained = match ctx.trained_sphere() {
        Ok(t) => t,
        Err(e) => return Outcome::failed(e),
    };
    let scene = &trained.scene;
    // the queries training issues: every view whose silhouette contains the
    // projection with a valid azimuth
    let points = visible_points(&FieldCaster::new(&trained.params, 1.0), &scene.cameras);
    let mut queries = Vec::new();
    for x in points.iter().step_by(4) {
        for (view, camera) in scene.views.iter().zip(&scene.cameras) {
            let Some((col, row)) = camera.pixel_of(x) else {
                continue;
            };
            if *view.mask.get(col, row) && view.azimuth.get(col, row).is_some() {
                queries.push((*x, camera.center()));
            }
        }
    }
    let settings = VisibilitySettings::default();
    let outcomes = visibility_batch(&trained.params, &queries, settings);
    let capped: Vec<usize> = (0..outcomes.len())
        .filter(|&i| outcomes[i].kind == Visibility::MaxStepsExceeded)
        .collect();
    let visible = outcomes.iter().filter(|o| o.is_visible()).count();
    let mean = outcomes.iter().map(|o| o.steps as f64).sum::<f64>() / outcomes.len() as f64;
    let terminated = 1.0 - capped.len() as f64 / outcomes.len() as f64;

    // the same queries against the exact sphere, for reference
    let record = &scene.record;
    let exact = AnalyticShape::sphere(
        record.to_normalized(&acceptance_sphere().center()),
        0.4 / record.scale,
    )
    .expect("valid sphere");
    let exact_capped = visibility_batch(&exact, &queries, settings)
        .iter()
        .filter(|o| o.kind == Visibility::MaxStepsExceeded)
        .count();
    let grazing = capped
        .iter()
        .map(|&i| {
            let (x, c) = queries[i];
            trained
                .params
                .eval(&x)
                .gradient
                .normalize()
                .dot(&(c - x).normalize())
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let mut outcome = Outcome::new(
        terminated >= 0.999,
        format!(
            "{} queries: {:.3}% terminated within {} steps (need 99.9%), {visible} visible, mean steps {mean:.2}",
            outcomes.len(),
            100.0 * terminated,
            settings.max_steps
        ),
    );
    outcome.details.push(format!(
        "capped queries: {} on the trained field, {exact_capped} on the exact sphere; largest cos(normal, direction to camera) among capped: {grazing:.3}",
        capped.len()
    ));
    outcome
}

// ---------------------------------------------------------------- 9

fn camera_normalization(_: &Context) -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    let scale_ratio = 3.0;
    let mut worst_offset = 0.0f64;
    let mut worst_scale = 0.0f64;
    let rigs = [
        (RigKind::GenericRing, 12, [0.0, 0.0, 0.0], 2.5),
        (RigKind::GenericRing, 8, [0.3, -0.2, 0.1], 4.0),
        (RigKind::GenericRing, 5, [-1.5, 2.0, 0.7], 1.7),
        (RigKind::CoplanarAxes, 12, [0.2, 0.4, -0.3], 3.0),
        (RigKind::TwoView, 2, [1.0, 1.0, 1.0], 2.0),
    ];
    for (kind, count, target, radius) in rigs {
        let spec = RigSpec {
            target,
            radius,
            ..RigSpec::new(kind, count)
        };
        let cameras = match make_rig(&spec) {
            Ok(c) => c,
            Err(e) => return Outcome::failed(e),
        };
        let norm = match normalize_cameras(&cameras, scale_ratio) {
            Ok(n) => n,
            Err(e) => return Outcome::failed(e),
        };
        let target = Vec3::from(target);
        let expected_scale = cameras
            .iter()
            .map(|c| (c.center() - target).norm())
            .fold(0.0, f64::max)
            / scale_ratio;
        worst_offset = worst_offset.max((norm.record.offset() - target).norm());
        worst_scale = worst_scale.max((norm.record.scale - expected_scale).abs() / expected_scale);
    }
    pass &= worst_offset <= 1e-9 && worst_scale <= 1e-12;
    details.push(format!(
        "{} symmetric rigs: max offset error {worst_offset:.1e} (tol 1e-9), max relative scale error {worst_scale:.1e}",
        rigs.len()
    ));

    let parallel = make_rig(&RigSpec::new(RigKind::ParallelAxes, 6)).expect("parallel rig");
    let intrinsics = CameraIntrinsics::centered(50.0, 64, 64).expect("intrinsics");
    let along_axis: Vec<Camera> = [-3.0, 3.0, 5.0]
        .iter()
        .map(|&z| {
            let pose = CameraPose::look_at(Vec3::new(0.0, 0.0, z), Vec3::zeros(), Vec3::y())
                .expect("pose");
            Camera::new(intrinsics, pose)
        })
        .collect();
    for (name, cameras) in [("parallel axes", parallel), ("one shared axis", along_axis)] {
        let result = normalize_cameras(&cameras, scale_ratio);
        let ok = matches!(result, Err(Error::DegenerateRig));
        pass &= ok;
        details.push(format!("{name}: degenerate rig error = {ok}"));
    }
    let mut outcome = Outcome::new(
        pass,
        "symmetric rigs recovered, collinear rigs rejected".to_string(),
    );
    if !pass {
        outcome.summary = "see details".into();
    }
    outcome.details = details;
    outcome
}

// ---------------------------------------------------------------- 10

fn brute_nearest(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
    from.iter()
        .map(|p| {
            to.iter()
                .map(|q| (p - q).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn metrics(_: &Context) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut cloud = |n: usize, offset: f64| -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::from_fn(|_, _| offset + rng.random_range(-1.0..1.0)))
            .collect()
    };
    let a = cloud(2000, 0.0);
    let b = cloud(2000, 0.05);
    let ab = brute_nearest(&a, &b);
    let ba = brute_nearest(&b, &a);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let expected_cd = 0.5 * mean(&ab) + 0.5 * mean(&ba);
    let mut worst = match chamfer(&a, &b) {
        Ok(cd) => (cd - expected_cd).abs(),
        Err(e) => return Outcome::failed(e),
    };
    for tau in [0.01, 0.05, 0.1, 0.2] {
        let frac = |d: &[f64]| d.iter().filter(|&&x| x < tau).count() as f64 / d.len() as f64;
        let (p, r) = (frac(&ab), frac(&ba));
        let f = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
        match fscore(&a, &b, tau) {
            Ok(s) => {
                worst = worst
                    .max((s.precision - p).abs())
                    .max((s.recall - r).abs())
                    .max((s.fscore - f).abs())
            }
            Err(e) => return Outcome::failed(e),
        }
    }

    let center = Vec3::new(0.1, -0.05, 0.02);
    let radius = 0.5;
    let sphere = AnalyticShape::sphere(center, radius).expect("valid sphere");
    let mesh = match marching_cubes(&sphere, BoundingBox::cube(1.0), 64) {
        Ok(m) => m,
        Err(e) => return Outcome::failed(e),
    };
    let radius_err = mesh
        .vertices
        .iter()
        .map(|v| ((v - center).norm() - radius).abs())
        .sum::<f64>()
        / mesh.vertices.len() as f64;
    Outcome::new(
        worst <= 1e-12 && radius_err < 0.01,
        format!(
            "chamfer/fscore max deviation from brute force {worst:.1e} (tol 1e-12); marching cubes 64^3 mean radius error {radius_err:.2e} (tol 0.01) over {} vertices",
            mesh.vertices.len()
        ),
    )
}
