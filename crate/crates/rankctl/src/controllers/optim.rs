//! First-order updates for budget-price multipliers.
//!
//! Controllers keep one price per budget coordinate and raise it when the
//! episode is running behind its target, lower it when ahead. The stored
//! vector is deliberately unclipped — it keeps drifting negative while a
//! budget runs ahead, remembering accumulated slack — and selection rules
//! clamp it into `[0, phi]` only at the point of use, so rankings never see
//! a negative or above-cost price.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Price vector plus optimizer scratch (first/second moment estimates and a
/// step counter). Fresh states start at zero prices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierState {
    pub lambda: Vec<f64>,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: usize,
}

impl MultiplierState {
    pub fn new(n_budgets: usize) -> Self {
        MultiplierState {
            lambda: vec![0.0; n_budgets],
            first_moment: vec![0.0; n_budgets],
            second_moment: vec![0.0; n_budgets],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// The price vector clamped coordinate-wise into `[0, cap_i]`.
    pub fn clipped(&self, caps: &[f64]) -> Vec<f64> {
        self.lambda
            .iter()
            .zip(caps)
            .map(|(&l, &c)| l.clamp(0.0, c))
            .collect()
    }

    fn check_grad(&self, grad: &[f64], gain: f64) -> Result<()> {
        if grad.len() != self.lambda.len() {
            return Err(Error::dim(format!(
                "gradient has {} coordinates, state has {}",
                grad.len(),
                self.lambda.len()
            )));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("gradient must be finite"));
        }
        if !gain.is_finite() || gain < 0.0 {
            return Err(Error::invalid("gain must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Plain gradient descent: `lambda <- lambda - gain * grad`.
pub fn ogd_update(state: &mut MultiplierState, grad: &[f64], gain: f64) -> Result<()> {
    state.check_grad(grad, gain)?;
    for (l, g) in state.lambda.iter_mut().zip(grad) {
        *l -= gain * g;
    }
    state.step += 1;
    Ok(())
}

/// Adaptive update with a single decay `beta` shared by both moment
/// estimates:
///
/// ```text
/// m <- beta * m + (1 - beta) * g
/// v <- beta * v + (1 - beta) * g^2
/// lambda <- lambda - gain * (m / (1 - beta^t)) / sqrt(v / (1 - beta^t) + epsilon)
/// ```
pub fn adam_update(
    state: &mut MultiplierState,
    grad: &[f64],
    gain: f64,
    beta: f64,
    epsilon: f64,
) -> Result<()> {
    state.check_grad(grad, gain)?;
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!(
            "moment decay must lie in [0, 1), got {beta}"
        )));
    }
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::invalid("epsilon must be positive"));
    }
    state.step += 1;
    let correction = 1.0 - beta.powi(state.step as i32);
    for i in 0..state.lambda.len() {
        let g = grad[i];
        state.first_moment[i] = beta * state.first_moment[i] + (1.0 - beta) * g;
        state.second_moment[i] = beta * state.second_moment[i] + (1.0 - beta) * g * g;
        let m_hat = state.first_moment[i] / correction;
        let v_hat = state.second_moment[i] / correction;
        state.lambda[i] -= gain * m_hat / (v_hat + epsilon).sqrt();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ogd_is_literal_descent() {
        let mut s = MultiplierState::new(2);
        ogd_update(&mut s, &[2.0, -1.0], 0.5).unwrap();
        assert_eq!(s.lambda, vec![-1.0, 0.5]);
        assert_eq!(s.step, 1);
        ogd_update(&mut s, &[2.0, -1.0], 0.5).unwrap();
        assert_eq!(s.lambda, vec![-2.0, 1.0]);
        assert_eq!(s.step, 2);
    }

    #[test]
    fn ogd_accumulates_scaled_gradient_sum() {
        let grads = [[0.3, -0.4], [-1.1, 0.2], [0.5, 0.5]];
        let gain = 0.7;
        let mut s = MultiplierState::new(2);
        for g in &grads {
            ogd_update(&mut s, g, gain).unwrap();
        }
        for i in 0..2 {
            let expect = -gain * grads.iter().map(|g| g[i]).sum::<f64>();
            assert!((s.lambda[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_matches_reference_loop() {
        let grads = [[1.0, -2.0], [0.5, 0.5], [-1.5, 3.0], [0.0, -0.25]];
        let (gain, beta, eps) = (0.1, 0.9, 1e-8);
        let mut s = MultiplierState::new(2);
        // Independent replay of the documented recurrence.
        let (mut m, mut v, mut lam) = ([0.0f64; 2], [0.0f64; 2], [0.0f64; 2]);
        for (t, g) in grads.iter().enumerate() {
            adam_update(&mut s, g, gain, beta, eps).unwrap();
            let corr = 1.0 - beta.powi(t as i32 + 1);
            for i in 0..2 {
                m[i] = beta * m[i] + (1.0 - beta) * g[i];
                v[i] = beta * v[i] + (1.0 - beta) * g[i] * g[i];
                lam[i] -= gain * (m[i] / corr) / (v[i] / corr + eps).sqrt();
                assert!((s.lambda[i] - lam[i]).abs() < 1e-15);
            }
        }
        assert_eq!(s.step, grads.len());
    }

    #[test]
    fn adam_constant_gradient_moves_in_unit_steps() {
        // With g identical every step, both corrected moments equal g and
        // g^2, so each update is ~ -gain * sign(g).
        let (gain, beta, eps) = (0.1, 0.9, 1e-8);
        let mut s = MultiplierState::new(1);
        for t in 1..=3 {
            adam_update(&mut s, &[4.0], gain, beta, eps).unwrap();
            let expect = -gain * t as f64 * 4.0 / (16.0 + eps).sqrt();
            assert!(
                (s.lambda[0] - expect).abs() < 1e-12,
                "step {t}: {} vs {expect}",
                s.lambda[0]
            );
        }
        let frozen = -0.1 * 3.0 * (1.0 - 6.25e-10 / 2.0);
        assert!((s.lambda[0] - frozen).abs() < 1e-10);
    }

    #[test]
    fn adam_with_zero_decay_normalizes_each_gradient() {
        let mut s = MultiplierState::new(1);
        adam_update(&mut s, &[100.0], 0.2, 0.0, 1e-12).unwrap();
        assert!((s.lambda[0] + 0.2).abs() < 1e-9);
        adam_update(&mut s, &[-0.001], 0.2, 0.0, 1e-12).unwrap();
        assert!(s.lambda[0].abs() < 1e-6);
    }

    #[test]
    fn clipping_is_coordinate_wise_and_leaves_state_untouched() {
        let mut s = MultiplierState::new(3);
        s.lambda = vec![-2.0, 0.4, 9.0];
        assert_eq!(s.clipped(&[1.0, 1.0, 5.0]), vec![0.0, 0.4, 5.0]);
        assert_eq!(s.lambda, vec![-2.0, 0.4, 9.0]);
    }

    #[test]
    fn updates_reject_bad_inputs() {
        let mut s = MultiplierState::new(2);
        assert!(ogd_update(&mut s, &[1.0], 0.1).is_err());
        assert!(ogd_update(&mut s, &[1.0, f64::NAN], 0.1).is_err());
        assert!(ogd_update(&mut s, &[1.0, 1.0], -0.5).is_err());
        assert!(adam_update(&mut s, &[1.0, 1.0], 0.1, 1.0, 1e-8).is_err());
        assert!(adam_update(&mut s, &[1.0, 1.0], 0.1, 0.9, 0.0).is_err());
        assert_eq!(s.step, 0, "failed updates must not advance the counter");
    }
}
