use super::{Model, ModelGrads};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates for each model tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        let mut shadow = model.clone();
        let zeros: Vec<Vec<f64>> = shadow
            .tensors_mut()
            .iter()
            .map(|(_, t)| vec![0.0; t.len()])
            .collect();
        Self {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One bias-corrected Adam update. Non-finite gradients are rejected before
/// anything is modified.
pub fn adam_step(
    model: &mut Model,
    grads: &ModelGrads,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    for (name, g) in grads.tensors() {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    let tensors = model.tensors_mut();
    for (((name, p), (_, g)), m) in tensors.iter().zip(grads.tensors()).zip(&state.first) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::Shape(format!(
                "{name}: parameter has {}, gradient {}, optimizer state {}",
                p.len(),
                g.len(),
                m.len()
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - ADAM_BETA1.powi(t);
    let correction2 = 1.0 - ADAM_BETA2.powi(t);
    for (((_, p), (_, g)), (m, v)) in tensors
        .into_iter()
        .zip(grads.tensors())
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for i in 0..p.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Seed;

    fn model() -> Model {
        Model::init(3, 2, Seed(1)).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut m = model();
        let before = m.clone();
        let mut state = AdamState::new(&m);
        adam_step(&mut m, &ModelGrads::zeros(3, 2), &mut state, 2e-5).unwrap();
        assert_eq!(m, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut m = model();
        let before = m.flatten();
        let mut grads = ModelGrads::zeros(3, 2);
        grads.w_s.as_mut_slice().fill(0.5);
        grads.b_c.fill(-3.0);
        let mut state = AdamState::new(&m);
        let lr = 1e-3;
        adam_step(&mut m, &grads, &mut state, lr).unwrap();
        let after = m.flatten();
        // m̂ = g and v̂ = g² at t = 1, so the step is lr·g/(|g| + ε).
        let expect_ws = -lr * 0.5 / (0.5 + ADAM_EPSILON);
        for k in 0..9 {
            assert!((after[k] - before[k] - expect_ws).abs() < 1e-15);
        }
        let n = after.len();
        let expect_bc = lr * 3.0 / (3.0 + ADAM_EPSILON);
        assert!((after[n - 1] - before[n - 1] - expect_bc).abs() < 1e-15);
        assert_eq!(after[9..n - 2], before[9..n - 2]);
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let run = || {
            let mut m = model();
            let mut state = AdamState::new(&m);
            for step in 0..25 {
                let mut g = ModelGrads::zeros(3, 2);
                g.u_s = vec![(step as f64).sin(), 0.25, -1.0];
                g.w_c.as_mut_slice()[1] = 1.0 / (1.0 + step as f64);
                adam_step(&mut m, &g, &mut state, 1e-2).unwrap();
            }
            m
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut m = model();
        let before = m.clone();
        let mut g = ModelGrads::zeros(3, 2);
        g.b_s[1] = f64::NAN;
        let mut state = AdamState::new(&m);
        let err = adam_step(&mut m, &g, &mut state, 1.0).unwrap_err();
        assert!(err.to_string().contains("b_s"), "{err}");
        assert_eq!(m, before);
        assert_eq!(state.step, 0);
    }
}
