//! Adam optimizer state and update rule.

use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Adam hyperparameters. Defaults are lr 1e-3, beta1 0.9, beta2 0.999,
/// eps 1e-8.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Usage(format!("lr must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Usage(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Usage(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Per-parameter first/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
    t: u64,
}

impl AdamState {
    /// Fresh state with moment buffers shaped like `params`.
    pub fn for_params(params: &[&DenseMatrix]) -> Self {
        let m = params
            .iter()
            .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
            .collect::<Vec<_>>();
        let v = m.clone();
        Self { m, v, t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one bias-corrected Adam update in place; `t` advances by
    /// exactly 1.
    pub fn step(
        &mut self,
        cfg: &AdamConfig,
        params: &mut [&mut DenseMatrix],
        grads: &[DenseMatrix],
    ) -> Result<()> {
        cfg.validate()?;
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam: state holds {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), (m, v)) in params
            .iter()
            .zip(grads)
            .zip(self.m.iter().zip(self.v.iter()))
        {
            if p.shape() != g.shape() || p.shape() != m.shape() || p.shape() != v.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "adam: param {:?} vs grad {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient);
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for ((pv, &gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
                *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DenseMatrix {
        DenseMatrix::from_vec(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn first_step_moves_by_lr_sign() {
        // bias-corrected first step: m_hat = g, v_hat = g^2, so the
        // update is -lr * g / (|g| + eps) ~ -lr * sign(g)
        for g in [3.0, -0.25, 1e-3] {
            let mut p = scalar(1.0);
            let mut state = AdamState::for_params(&[&p]);
            let cfg = AdamConfig {
                eps: 1e-15,
                ..Default::default()
            };
            state.step(&cfg, &mut [&mut p], &[scalar(g)]).unwrap();
            assert_relative_eq!(p.get(0, 0), 1.0 - cfg.lr * g.signum(), epsilon = 1e-9);
            assert_eq!(state.step_count(), 1);
        }
    }

    #[test]
    fn direct_formula_first_step() {
        // g = 1, lr = 1e-3, defaults: param decreases by ~1e-3
        let mut p = scalar(0.5);
        let mut state = AdamState::for_params(&[&p]);
        state
            .step(&AdamConfig::default(), &mut [&mut p], &[scalar(1.0)])
            .unwrap();
        let delta = 0.5 - p.get(0, 0);
        assert_relative_eq!(delta, 1e-3, max_relative = 1e-6);
    }

    #[test]
    fn zero_gradient_is_identity_for_all_t() {
        let mut p = DenseMatrix::from_vec(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let snapshot = p.clone();
        let mut state = AdamState::for_params(&[&p]);
        let zero = DenseMatrix::zeros(2, 2);
        for _ in 0..17 {
            state
                .step(&AdamConfig::default(), &mut [&mut p], &[zero.clone()])
                .unwrap();
        }
        assert_eq!(p, snapshot);
        assert_eq!(state.step_count(), 17);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = scalar(1.0);
        let mut state = AdamState::for_params(&[&p]);
        let mut bad = scalar(0.0);
        bad.data_mut()[0] = f64::NAN;
        let err = state
            .step(&AdamConfig::default(), &mut [&mut p], &[bad])
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient));
        // state untouched on failure
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { beta2: -0.1, ..Default::default() }.validate().is_err());
        assert!(AdamConfig::default().validate().is_ok());
    }
}
