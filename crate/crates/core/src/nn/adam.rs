//! Adam optimiser with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::ParameterSet;
use crate::nn::train::TrainConfig;

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

/// Optimiser selector (Adam is the only one implemented).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Adam,
}

impl AdamState {
    pub fn new(n_params: usize) -> AdamState {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update; increments the step counter.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &[f64],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::invalid(format!(
            "gradient/state length {} does not match {} parameters",
            grads.len(),
            params.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let lr = cfg.learning_rate;
    for ((p, &g), (m, v)) in params
        .values_mut()
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::models::mini_res;
    use crate::nn::spec::Network;

    fn setup() -> (Network, ParameterSet, AdamState, TrainConfig) {
        let net = Network::new(mini_res((1, 16, 16), 3)).unwrap();
        let params = net.init_params(3);
        let state = AdamState::new(params.len());
        (net, params, state, TrainConfig::default())
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let (_, mut params, mut state, cfg) = setup();
        let before = params.values().to_vec();
        let zeros = vec![0.0; params.len()];
        for _ in 0..5 {
            adam_step(&mut params, &zeros, &mut state, &cfg).unwrap();
        }
        assert_eq!(params.values(), &before[..]);
        assert_eq!(state.step_count(), 5);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        let (_, mut params, mut state, cfg) = setup();
        let before = params.values().to_vec();
        let grads = vec![0.37; params.len()];
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        // bias-corrected m_hat/sqrt(v_hat) = g/|g| on step 1, up to eps
        for (after, before) in params.values().iter().zip(&before) {
            let update = before - after;
            assert!((update - cfg.learning_rate).abs() < 1e-6, "update {update}");
        }
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let (_, mut params, mut state, cfg) = setup();
        let grads = vec![0.0; params.len() + 1];
        assert!(adam_step(&mut params, &grads, &mut state, &cfg).is_err());
    }
}
