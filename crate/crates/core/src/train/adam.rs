use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Moment estimates of the Adam optimizer, shaped like the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. On error neither the state nor the
    /// parameters are modified.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer holds {} moments, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient at parameter {i}"
            )));
        }
        let t = self.step + 1;
        let c1 = 1.0 - ADAM_BETA1.powi(t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
        self.step = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut state = AdamState::new(2);
        let mut p = vec![1.0, 1.0];
        state.step(&mut p, &[3.0, -0.2], 0.01).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] - 1.01).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut state = AdamState::new(3);
        let mut p = vec![0.5, -2.0, 7.0];
        for _ in 0..5 {
            state.step(&mut p, &[0.0; 3], 0.1).unwrap();
        }
        assert_eq!(p, vec![0.5, -2.0, 7.0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let mut state = AdamState::new(2);
        let mut p = vec![1.0, 2.0];
        state.step(&mut p, &[0.1, 0.1], 0.1).unwrap();
        let (before_p, before_s) = (p.clone(), state.clone());
        assert!(state.step(&mut p, &[f64::NAN, 0.0], 0.1).is_err());
        assert_eq!(p, before_p);
        assert_eq!(state, before_s);
    }
}
