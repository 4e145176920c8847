//! Positional-encoded softplus MLP with exact first and second order derivatives.
//!
//! Every batch is pushed through the network as stacked "streams": the primal
//! rows plus, when spatial gradients are requested, one tangent stream per
//! coordinate axis (forward-mode directional derivatives). Parameter gradients
//! of losses that consume `∇ₓf` are obtained by reverse-mode differentiation
//! of that combined forward pass, collapsing the three tangent streams into the
//! single direction selected by the loss's gradient seed.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{FieldEval, Sdf};
use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Width of every hidden layer.
    pub hidden_width: usize,
    /// Number of fully connected layers, including the scalar output layer.
    pub layers: usize,
    /// Layer whose input is concatenated with the encoded network input.
    pub skip_layer: Option<usize>,
    /// Positional encoding frequency count `L`.
    pub frequencies: usize,
    /// Softplus sharpness.
    pub beta: f64,
    /// Radius of the sphere approximated by the geometric initialization.
    pub init_radius: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden_width: 256,
            layers: 8,
            skip_layer: Some(4),
            frequencies: 10,
            beta: 100.0,
            init_radius: 0.6,
        }
    }
}

impl Architecture {
    pub fn with_width(hidden_width: usize) -> Self {
        Self {
            hidden_width,
            ..Self::default()
        }
    }

    /// Width of `[x ∥ γ(x)]`.
    pub fn input_dim(&self) -> usize {
        3 + 6 * self.frequencies
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(Error::Config("network needs at least two layers".into()));
        }
        if self.hidden_width == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if let Some(skip) = self.skip_layer {
            if skip == 0 || skip >= self.layers {
                return Err(Error::Config(format!(
                    "skip layer {skip} must lie in 1..{}",
                    self.layers
                )));
            }
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "softplus beta must be positive, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// `(input, output)` width of every layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        (0..self.layers)
            .map(|l| {
                let input = if l == 0 {
                    self.input_dim()
                } else if Some(l) == self.skip_layer {
                    self.hidden_width + self.input_dim()
                } else {
                    self.hidden_width
                };
                let output = if l + 1 == self.layers {
                    1
                } else {
                    self.hidden_width
                };
                (input, output)
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

const CALIBRATION_SAMPLES: usize = 2048;
const CALIBRATION_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerShape {
    input: usize,
    output: usize,
    weights: usize,
    bias: usize,
}

/// Weights of the neural SDF, stored flat as `[W₀ (row-major, out×in), b₀, W₁, b₁, …]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams {
    arch: Architecture,
    layout: Vec<LayerShape>,
    data: Vec<f64>,
}

fn layout_for(arch: &Architecture) -> Vec<LayerShape> {
    let mut offset = 0;
    arch.layer_dims()
        .into_iter()
        .map(|(input, output)| {
            let shape = LayerShape {
                input,
                output,
                weights: offset,
                bias: offset + input * output,
            };
            offset += input * output + output;
            shape
        })
        .collect()
}

/// Loss partials with respect to one point's field value and spatial gradient.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointSeed {
    pub value: f64,
    pub gradient: Vec3,
}

/// Intermediate values of a forward pass, kept for [`FieldParams::backward`].
#[derive(Debug, Clone)]
pub struct GradientTape {
    points: Vec<Vec3>,
    streams: usize,
    inputs: Vec<Vec<f64>>,
    preacts: Vec<Vec<f64>>,
}

impl GradientTape {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn has_spatial_gradient(&self) -> bool {
        self.streams == 4
    }
}

struct Pass {
    outputs: Vec<f64>,
    tape: Option<GradientTape>,
}

/// `[sin(2ᵏπx), cos(2ᵏπx)]` for `k = 0..L`, each a 3-vector; length `6L`.
pub fn positional_encoding(x: &Vec3, frequencies: usize) -> Vec<f64> {
    let mut out = vec![0.0; 6 * frequencies];
    for k in 0..frequencies {
        let omega = (1u64 << k) as f64 * PI;
        for c in 0..3 {
            let (s, co) = (omega * x[c]).sin_cos();
            out[6 * k + c] = s;
            out[6 * k + 3 + c] = co;
        }
    }
    out
}

fn encode_input(x: &Vec3, frequencies: usize, out: &mut [f64]) {
    out[..3].copy_from_slice(x.as_slice());
    for k in 0..frequencies {
        let omega = (1u64 << k) as f64 * PI;
        for c in 0..3 {
            let (s, co) = (omega * x[c]).sin_cos();
            out[3 + 6 * k + c] = s;
            out[3 + 6 * k + 3 + c] = co;
        }
    }
}

/// Derivative of the encoded input along coordinate axis `axis`.
fn encode_input_tangent(x: &Vec3, frequencies: usize, axis: usize, out: &mut [f64]) {
    out.fill(0.0);
    out[axis] = 1.0;
    for k in 0..frequencies {
        let omega = (1u64 << k) as f64 * PI;
        let (s, co) = (omega * x[axis]).sin_cos();
        out[3 + 6 * k + axis] = omega * co;
        out[3 + 6 * k + 3 + axis] = -omega * s;
    }
}

/// Beyond this magnitude `exp(-|t|)` is below half an ulp of the saturated
/// result, so the exponential is skipped.
const SATURATION: f64 = 40.0;

fn sigmoid(t: f64) -> f64 {
    if t > SATURATION {
        1.0
    } else if t < -SATURATION {
        0.0
    } else if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64, beta: f64) -> f64 {
    let bz = beta * z;
    if bz > SATURATION {
        z
    } else if bz < -SATURATION {
        0.0
    } else {
        (bz.max(0.0) + (-bz.abs()).exp().ln_1p()) / beta
    }
}

/// Softplus and its slope, sharing one exponential.
fn softplus_with_slope(z: f64, beta: f64) -> (f64, f64) {
    let bz = beta * z;
    if bz > SATURATION {
        (z, 1.0)
    } else if bz < -SATURATION {
        (0.0, 0.0)
    } else {
        let e = (-bz.abs()).exp();
        let value = (bz.max(0.0) + e.ln_1p()) / beta;
        let slope = if bz >= 0.0 {
            1.0 / (1.0 + e)
        } else {
            e / (1.0 + e)
        };
        (value, slope)
    }
}

/// `C = A·B + beta·C` on strided row/column-major buffers.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
    c_strides: (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent =
        |rows: usize, cols: usize, (rs, cs): (usize, usize)| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(extent(m, k, a_strides) < a.len());
        assert!(extent(k, n, b_strides) < b.len());
    }
    assert!(extent(m, n, c_strides) < c.len());
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` does not alias `a` or `b` because it is borrowed mutably.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            c_strides.0 as isize,
            c_strides.1 as isize,
        );
    }
}

impl FieldParams {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            layout: layout_for(&arch),
            data: vec![0.0; arch.parameter_count()],
            arch,
        })
    }

    pub fn from_vec(arch: Architecture, data: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if data.len() != arch.parameter_count() {
            return Err(Error::ShapeMismatch(format!(
                "architecture needs {} parameters, got {}",
                arch.parameter_count(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(Self {
            layout: layout_for(&arch),
            data,
            arch,
        })
    }

    /// Geometric initialization: the zero level set approximates a sphere of
    /// radius `arch.init_radius` around the origin. Deterministic in `seed`.
    pub fn init_sphere(seed: u64, arch: Architecture) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_in = arch.input_dim();
        let last = arch.layers - 1;
        for l in 0..arch.layers {
            let shape = params.layout[l];
            let (input, output) = (shape.input, shape.output);
            let weights = &mut params.data[shape.weights..shape.bias];
            if l == last {
                let normal = Normal::new((PI / input as f64).sqrt(), 1e-4).expect("valid normal");
                weights
                    .iter_mut()
                    .for_each(|w| *w = normal.sample(&mut rng));
                params.data[shape.bias] = -arch.init_radius;
                continue;
            }
            let normal =
                Normal::new(0.0, 2f64.sqrt() / (output as f64).sqrt()).expect("valid normal");
            for r in 0..output {
                for c in 0..input {
                    let w = normal.sample(&mut rng);
                    // encoded frequency inputs start switched off
                    let encoded = if l == 0 {
                        c >= 3
                    } else if Some(l) == arch.skip_layer {
                        c >= input - (d_in - 3)
                    } else {
                        false
                    };
                    weights[r * input + c] = if encoded { 0.0 } else { w };
                }
            }
        }
        params.calibrate_output_layer(&mut rng)?;
        Ok(params)
    }

    /// Refits the output layer so the field matches `‖x‖ − r` on samples of
    /// the unit ball. At finite width the random hidden features alone leave
    /// the zero level set several hundredths away from the target sphere.
    fn calibrate_output_layer(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        use nalgebra::{DMatrix, DVector};

        let radius = self.arch.init_radius;
        let samples: Vec<Vec3> = (0..CALIBRATION_SAMPLES)
            .map(|i| {
                let dir = loop {
                    let v = Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    let n = v.norm();
                    if n > 1e-3 && n <= 1.0 {
                        break v / n;
                    }
                };
                // half the samples hug the target sphere
                let r = match i % 4 {
                    0 | 1 => radius + rng.random_range(-0.1..0.1),
                    2 => rng.random_range(0.0f64..1.0),
                    _ => rng.random_range(0.0f64..0.1),
                };
                dir * r
            })
            .collect();
        let (_, tape) = self.values_with_tape(&samples)?;
        let last = self.layout[self.arch.layers - 1];
        let features = &tape.inputs[self.arch.layers - 1];
        let m = last.input + 1;
        let design = DMatrix::from_fn(samples.len(), m, |r, c| {
            if c < last.input {
                features[r * last.input + c]
            } else {
                1.0
            }
        });
        let target =
            DVector::from_iterator(samples.len(), samples.iter().map(|x| x.norm() - radius));
        let prior =
            DVector::from_iterator(m, self.data[last.weights..last.bias + 1].iter().copied());
        let ridge = CALIBRATION_RIDGE * samples.len() as f64;
        let mut normal = design.tr_mul(&design);
        for i in 0..m {
            normal[(i, i)] += ridge;
        }
        let rhs = design.tr_mul(&target) + &prior * ridge;
        let solution = normal
            .cholesky()
            .ok_or_else(|| Error::Numeric("output calibration is not positive definite".into()))?
            .solve(&rhs);
        if solution.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite output calibration".into()));
        }
        self.data[last.weights..last.bias + 1].copy_from_slice(solution.as_slice());
        Ok(())
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    fn run(&self, xs: &[Vec3], tangents: bool, keep: bool) -> Result<Pass> {
        let n = xs.len();
        let streams = if tangents { 4 } else { 1 };
        let rows = streams * n;
        let d_in = self.arch.input_dim();
        let beta = self.arch.beta;
        let last = self.arch.layers - 1;

        let mut input0 = vec![0.0; rows * d_in];
        for (i, x) in xs.iter().enumerate() {
            encode_input(
                x,
                self.arch.frequencies,
                &mut input0[i * d_in..(i + 1) * d_in],
            );
            if tangents {
                for axis in 0..3 {
                    let r = (1 + axis) * n + i;
                    encode_input_tangent(
                        x,
                        self.arch.frequencies,
                        axis,
                        &mut input0[r * d_in..(r + 1) * d_in],
                    );
                }
            }
        }

        let mut inputs = Vec::new();
        let mut preacts = Vec::new();
        let mut current = input0.clone();
        let mut outputs = Vec::new();
        for (l, shape) in self.layout.iter().enumerate() {
            let (input, output) = (shape.input, shape.output);
            let layer_input = if Some(l) == self.arch.skip_layer {
                let hidden = input - d_in;
                let mut cat = vec![0.0; rows * input];
                for r in 0..rows {
                    let dst = &mut cat[r * input..(r + 1) * input];
                    for (d, s) in dst[..hidden]
                        .iter_mut()
                        .zip(&current[r * hidden..(r + 1) * hidden])
                    {
                        *d = s * FRAC_1_SQRT_2;
                    }
                    for (d, s) in dst[hidden..]
                        .iter_mut()
                        .zip(&input0[r * d_in..(r + 1) * d_in])
                    {
                        *d = s * FRAC_1_SQRT_2;
                    }
                }
                cat
            } else {
                std::mem::take(&mut current)
            };

            let weights = &self.data[shape.weights..shape.bias];
            let bias = &self.data[shape.bias..shape.bias + output];
            let mut z = vec![0.0; rows * output];
            for i in 0..n {
                z[i * output..(i + 1) * output].copy_from_slice(bias);
            }
            gemm(
                rows,
                input,
                output,
                &layer_input,
                (input, 1),
                weights,
                (1, input),
                1.0,
                &mut z,
                (output, 1),
            );
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericLayer { layer: l });
            }

            if l < last {
                let mut act = vec![0.0; rows * output];
                for i in 0..n {
                    for j in 0..output {
                        let zz = z[i * output + j];
                        if tangents {
                            let (value, slope) = softplus_with_slope(zz, beta);
                            act[i * output + j] = value;
                            for s in 1..4 {
                                let r = (s * n + i) * output + j;
                                act[r] = slope * z[r];
                            }
                        } else {
                            act[i * output + j] = softplus(zz, beta);
                        }
                    }
                }
                current = act;
            }
            if keep {
                inputs.push(layer_input);
                if l == last {
                    outputs = z.clone();
                }
                preacts.push(z);
            } else if l == last {
                outputs = z;
            }
        }

        let tape = keep.then(|| GradientTape {
            points: xs.to_vec(),
            streams,
            inputs,
            preacts,
        });
        Ok(Pass { outputs, tape })
    }

    fn collect_evals(outputs: &[f64], n: usize) -> Vec<FieldEval> {
        (0..n)
            .map(|i| FieldEval {
                value: outputs[i],
                gradient: Vec3::new(outputs[n + i], outputs[2 * n + i], outputs[3 * n + i]),
                singular: false,
            })
            .collect()
    }

    /// Field value and exact spatial gradient at one point.
    pub fn try_eval(&self, x: &Vec3) -> Result<FieldEval> {
        Ok(self.try_evals(std::slice::from_ref(x))?[0])
    }

    pub fn try_evals(&self, xs: &[Vec3]) -> Result<Vec<FieldEval>> {
        let pass = self.run(xs, true, false)?;
        Ok(Self::collect_evals(&pass.outputs, xs.len()))
    }

    pub fn try_values(&self, xs: &[Vec3]) -> Result<Vec<f64>> {
        Ok(self.run(xs, false, false)?.outputs)
    }

    /// Values and spatial gradients, keeping the intermediates needed to
    /// backpropagate losses that depend on both.
    pub fn evaluate_with_tape(&self, xs: &[Vec3]) -> Result<(Vec<FieldEval>, GradientTape)> {
        let pass = self.run(xs, true, true)?;
        let evals = Self::collect_evals(&pass.outputs, xs.len());
        Ok((evals, pass.tape.expect("tape kept")))
    }

    /// Values only; the tape supports value seeds but not gradient seeds.
    pub fn values_with_tape(&self, xs: &[Vec3]) -> Result<(Vec<f64>, GradientTape)> {
        let pass = self.run(xs, false, true)?;
        Ok((pass.outputs, pass.tape.expect("tape kept")))
    }

    /// Accumulates `Σᵢ seedᵢ.value·∂fᵢ/∂θ + seedᵢ.gradient·∂(∇ₓfᵢ)/∂θ` into
    /// `grad` and returns the matching derivatives with respect to each point.
    pub fn backward(
        &self,
        tape: &GradientTape,
        seeds: &[PointSeed],
        grad: &mut [f64],
    ) -> Result<Vec<Vec3>> {
        let n = tape.len();
        if seeds.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} seeds for {} taped points",
                seeds.len(),
                n
            )));
        }
        if grad.len() != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient buffer has {} entries, expected {}",
                grad.len(),
                self.data.len()
            )));
        }
        let wants_tangent = seeds.iter().any(|s| s.gradient != Vec3::zeros());
        if wants_tangent && !tape.has_spatial_gradient() {
            return Err(Error::ShapeMismatch(
                "gradient seeds need a tape with spatial gradients".into(),
            ));
        }
        let tangent = wants_tangent;
        let rows2 = if tangent { 2 * n } else { n };
        let d_in = self.arch.input_dim();
        let beta = self.arch.beta;
        let last = self.arch.layers - 1;

        let mut upstream: Vec<f64> = Vec::new();
        let mut input0_adj = vec![0.0; rows2 * d_in];
        for l in (0..self.arch.layers).rev() {
            let shape = self.layout[l];
            let (input, output) = (shape.input, shape.output);
            let z = &tape.preacts[l];
            let x_in = &tape.inputs[l];

            let mut x2 = vec![0.0; rows2 * input];
            x2[..n * input].copy_from_slice(&x_in[..n * input]);
            if tangent {
                for (i, seed) in seeds.iter().enumerate() {
                    let w = seed.gradient;
                    let dst = &mut x2[(n + i) * input..(n + i + 1) * input];
                    for axis in 0..3 {
                        if w[axis] == 0.0 {
                            continue;
                        }
                        let r = (1 + axis) * n + i;
                        for (d, s) in dst.iter_mut().zip(&x_in[r * input..(r + 1) * input]) {
                            *d += w[axis] * s;
                        }
                    }
                }
            }

            let mut d = vec![0.0; rows2 * output];
            if l == last {
                for (i, seed) in seeds.iter().enumerate() {
                    d[i] = seed.value;
                    if tangent {
                        d[n + i] = 1.0;
                    }
                }
            } else {
                for (i, seed) in seeds.iter().enumerate() {
                    let w = seed.gradient;
                    for j in 0..output {
                        let zz = z[i * output + j];
                        let slope = sigmoid(beta * zz);
                        let abar = upstream[i * output + j];
                        if tangent {
                            let curvature = beta * slope * (1.0 - slope);
                            let zdot = w[0] * z[(n + i) * output + j]
                                + w[1] * z[(2 * n + i) * output + j]
                                + w[2] * z[(3 * n + i) * output + j];
                            let adot_bar = upstream[(n + i) * output + j];
                            d[(n + i) * output + j] = slope * adot_bar;
                            d[i * output + j] = slope * abar + curvature * zdot * adot_bar;
                        } else {
                            d[i * output + j] = slope * abar;
                        }
                    }
                }
            }

            let weights = &self.data[shape.weights..shape.bias];
            gemm(
                output,
                rows2,
                input,
                &d,
                (1, output),
                &x2,
                (input, 1),
                1.0,
                &mut grad[shape.weights..shape.bias],
                (input, 1),
            );
            let bias_grad = &mut grad[shape.bias..shape.bias + output];
            for i in 0..n {
                for (g, v) in bias_grad.iter_mut().zip(&d[i * output..(i + 1) * output]) {
                    *g += v;
                }
            }

            let mut adj = vec![0.0; rows2 * input];
            gemm(
                rows2,
                output,
                input,
                &d,
                (output, 1),
                weights,
                (input, 1),
                0.0,
                &mut adj,
                (input, 1),
            );
            if Some(l) == self.arch.skip_layer {
                let hidden = input - d_in;
                let mut next = vec![0.0; rows2 * hidden];
                for r in 0..rows2 {
                    let src = &adj[r * input..(r + 1) * input];
                    for (dst, s) in next[r * hidden..(r + 1) * hidden]
                        .iter_mut()
                        .zip(&src[..hidden])
                    {
                        *dst = s * FRAC_1_SQRT_2;
                    }
                    for (dst, s) in input0_adj[r * d_in..(r + 1) * d_in]
                        .iter_mut()
                        .zip(&src[hidden..])
                    {
                        *dst += s * FRAC_1_SQRT_2;
                    }
                }
                upstream = next;
            } else if l == 0 {
                for (dst, s) in input0_adj.iter_mut().zip(&adj) {
                    *dst += s;
                }
            } else {
                upstream = adj;
            }
        }

        let point_adj = tape
            .points
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let w = seeds[i].gradient;
                let primal = &input0_adj[i * d_in..(i + 1) * d_in];
                let mut xbar = Vec3::new(primal[0], primal[1], primal[2]);
                for k in 0..self.arch.frequencies {
                    let omega = (1u64 << k) as f64 * PI;
                    for c in 0..3 {
                        let (s, co) = (omega * x[c]).sin_cos();
                        let (js, jc) = (3 + 6 * k + c, 3 + 6 * k + 3 + c);
                        xbar[c] += primal[js] * omega * co - primal[jc] * omega * s;
                        if tangent {
                            let dual = &input0_adj[(n + i) * d_in..(n + i + 1) * d_in];
                            xbar[c] -= (dual[js] * s + dual[jc] * co) * omega * omega * w[c];
                        }
                    }
                }
                xbar
            })
            .collect();
        Ok(point_adj)
    }
}

/// Value and parameter gradient of `loss(evals)` where `evals` are the field
/// values and spatial gradients at `points`. The closure returns the loss and
/// its partial derivatives with respect to each point's value and gradient.
pub fn loss_gradients<F>(params: &FieldParams, points: &[Vec3], loss: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[FieldEval]) -> (f64, Vec<PointSeed>),
{
    let (evals, tape) = params.evaluate_with_tape(points)?;
    let (value, seeds) = loss(&evals);
    let mut grad = vec![0.0; params.len()];
    params.backward(&tape, &seeds, &mut grad)?;
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite loss gradient".into()));
    }
    Ok((value, grad))
}

impl Sdf for FieldParams {
    fn value(&self, x: &Vec3) -> f64 {
        self.try_values(std::slice::from_ref(x))
            .map_or(f64::NAN, |v| v[0])
    }

    fn eval(&self, x: &Vec3) -> FieldEval {
        self.try_eval(x).unwrap_or(FieldEval {
            value: f64::NAN,
            gradient: Vec3::repeat(f64::NAN),
            singular: true,
        })
    }

    fn values(&self, xs: &[Vec3]) -> Vec<f64> {
        self.try_values(xs)
            .unwrap_or_else(|_| vec![f64::NAN; xs.len()])
    }

    fn evals(&self, xs: &[Vec3]) -> Vec<FieldEval> {
        self.try_evals(xs).unwrap_or_else(|_| {
            xs.iter()
                .map(|_| FieldEval {
                    value: f64::NAN,
                    gradient: Vec3::repeat(f64::NAN),
                    singular: true,
                })
                .collect()
        })
    }
}
