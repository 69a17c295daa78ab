use crate::error::{Error, Result};

const DEFAULT_BETA1: f64 = 0.9;
const DEFAULT_BETA2: f64 = 0.999;
const DEFAULT_EPS: f64 = 1e-8;

/// Adam optimizer state for one flat parameter block.
///
/// Weight decay is the coupled L2 form: the effective gradient is
/// `g + weight_decay * param`, added before the moment updates. A caller
/// that wants decay on only part of its parameters (weights but not biases)
/// runs one `AdamState` per parameter group.
#[derive(Clone, Debug)]
pub struct AdamState {
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(param_len: usize, lr: f64, weight_decay: f64) -> AdamState {
        AdamState {
            step: 0,
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_EPS,
            weight_decay,
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "state holds {} parameters, got params {} / grads {}",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i] + self.weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grads_zero_decay_is_identity() {
        let mut state = AdamState::new(3, 1e-3, 0.0);
        let mut params = vec![0.5, -1.0, 2.0];
        let before = params.clone();
        state.step(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        state.step(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 2);
    }

    #[test]
    fn single_step_magnitude_matches_hand_recurrence() {
        // One step with constant gradient 1: m_hat = 1, v_hat = 1, so the
        // update is lr / (1 + eps), within eps of lr.
        let mut state = AdamState::new(1, 1e-3, 0.0);
        let mut params = vec![0.0];
        state.step(&mut params, &[1.0]).unwrap();
        assert!((params[0] + 1e-3).abs() < 1e-10, "got {}", params[0]);
    }

    #[test]
    fn identical_calls_are_bitwise_identical() {
        let run = || {
            let mut state = AdamState::new(2, 1e-2, 5e-5);
            let mut params = vec![0.3, -0.7];
            for _ in 0..5 {
                state.step(&mut params, &[0.12, -0.5]).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn second_moments_stay_nonnegative() {
        let mut state = AdamState::new(2, 1e-3, 1e-4);
        let mut params = vec![1.0, -1.0];
        for k in 0..20 {
            let g = [(-1.0f64).powi(k) * 0.3, 0.01 * k as f64];
            state.step(&mut params, &g).unwrap();
            assert!(state.v.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut state = AdamState::new(2, 1e-3, 0.0);
        let mut params = vec![0.0; 3];
        assert!(state.step(&mut params, &[0.0; 3]).is_err());
    }
}
