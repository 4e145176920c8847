//! Signed distance fields: the neural field being optimized and analytic
//! shapes used as ground truth.

mod analytic;
mod checkpoint;
mod mlp;

pub use analytic::AnalyticShape;
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use mlp::{
    loss_gradients, positional_encoding, Architecture, FieldParams, GradientTape, PointSeed,
};

use crate::geom::Vec3;

/// Value and spatial gradient of a field at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldEval {
    pub value: f64,
    pub gradient: Vec3,
    /// The gradient is undefined here (medial axis); `gradient` is an arbitrary unit vector.
    pub singular: bool,
}

/// A scalar field whose zero level set is a surface.
pub trait Sdf: Sync {
    fn value(&self, x: &Vec3) -> f64;

    fn eval(&self, x: &Vec3) -> FieldEval;

    /// Batched evaluation; implementations may override for throughput.
    fn values(&self, xs: &[Vec3]) -> Vec<f64> {
        xs.iter().map(|x| self.value(x)).collect()
    }

    fn evals(&self, xs: &[Vec3]) -> Vec<FieldEval> {
        xs.iter().map(|x| self.eval(x)).collect()
    }
}

impl<T: Sdf + ?Sized> Sdf for &T {
    fn value(&self, x: &Vec3) -> f64 {
        (**self).value(x)
    }

    fn eval(&self, x: &Vec3) -> FieldEval {
        (**self).eval(x)
    }

    fn values(&self, xs: &[Vec3]) -> Vec<f64> {
        (**self).values(xs)
    }

    fn evals(&self, xs: &[Vec3]) -> Vec<FieldEval> {
        (**self).evals(xs)
    }
}
