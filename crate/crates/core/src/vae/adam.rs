//! Adam optimizer (ascent form: parameters move along the gradient).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyperParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyperParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates plus the step counter for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub hp: AdamHyperParams,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            hp: AdamHyperParams::default(),
        }
    }
}

/// One bias-corrected Adam step, ascending the objective whose gradient is
/// `grads` (descent on the negated objective is identical).
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), state.m.len());
    let hp = state.hp;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let mhat = state.m[i] / bc1;
        let vhat = state.v[i] / bc2;
        params[i] += lr * mhat / (vhat.sqrt() + hp.epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(2);
        st.m = vec![0.5, -0.5];
        st.v = vec![0.25, 0.25];
        let (m0, v0) = (st.m.clone(), st.v.clone());
        adam_step(&mut p, &[0.0, 0.0], &mut st, 1e-3);
        // m, v decay toward zero; the parameter nudge is proportional to the
        // decayed momentum, tiny relative to lr
        assert!(st.m[0].abs() < m0[0].abs() && st.v[0] < v0[0]);
        assert!((p[0] - 1.0).abs() <= 1.1e-3 && (p[1] + 2.0).abs() <= 1.1e-3);

        // with zero initial moments, parameters are exactly unchanged
        let mut p2 = vec![3.0];
        let mut st2 = AdamState::new(1);
        adam_step(&mut p2, &[0.0], &mut st2, 1e-3);
        assert_eq!(p2[0], 3.0);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        let lr = 1e-4;
        for &g in &[5.0, -3.0, 0.1] {
            let mut p = vec![0.0];
            let mut st = AdamState::new(1);
            adam_step(&mut p, &[g], &mut st, lr);
            // bias-corrected first step: lr * g / (|g| + eps) = lr * sign(g)
            assert!(
                (p[0].abs() - lr).abs() < 1e-7 * lr.max(1.0),
                "step {} for gradient {g}",
                p[0]
            );
            assert_eq!(p[0].signum(), g.signum());
        }
    }

    #[test]
    fn five_step_trace_matches_hand_recursion() {
        // independent re-evaluation of the update formulas on a scalar
        let grads = [1.0, -0.5, 2.0, 0.0, -1.5];
        let lr = 0.01;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let mut p_ref = 0.3f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t as i32 + 1));
            let vhat = v / (1.0 - b2.powi(t as i32 + 1));
            p_ref += lr * mhat / (vhat.sqrt() + eps);
        }

        let mut p = vec![0.3];
        let mut st = AdamState::new(1);
        for &g in &grads {
            adam_step(&mut p, &[g], &mut st, lr);
        }
        assert!((p[0] - p_ref).abs() < 1e-12, "{} vs {p_ref}", p[0]);
    }
}
