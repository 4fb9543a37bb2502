//! Adam optimizer with bias-corrected first and second moments.
//!
//! Moment buffers live in slots indexed by visit order, so the caller must
//! walk parameter buffers in the same stable order on every step.

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

struct AdamSlot {
    m: Vec<f64>,
    v: Vec<f64>,
}

pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    slots: Vec<AdamSlot>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam::with_hyperparams(lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)
    }

    pub fn with_hyperparams(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            slots: Vec::new(),
        }
    }

    /// Start one optimizer step; every parameter buffer must then be passed
    /// to [`Adam::update`] exactly once before the next call.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Apply the update for slot `slot`. Slots are created on first use and
    /// keep their size afterwards.
    pub fn update(&mut self, slot: usize, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if self.t == 0 {
            return Err(Error::InvalidArgument(
                "begin_step must run before update".into(),
            ));
        }
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "param buffer {} has {} values but {} gradients",
                slot,
                params.len(),
                grads.len()
            )));
        }
        if slot == self.slots.len() {
            self.slots.push(AdamSlot {
                m: vec![0.0; params.len()],
                v: vec![0.0; params.len()],
            });
        }
        let s = self
            .slots
            .get_mut(slot)
            .ok_or_else(|| Error::InvalidArgument(format!("slot {} used out of order", slot)))?;
        if s.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "slot {} holds {} moments but got {} params",
                slot,
                s.m.len(),
                params.len()
            )));
        }
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            s.m[i] = self.beta1 * s.m[i] + (1.0 - self.beta1) * g;
            s.v[i] = self.beta2 * s.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = s.m[i] / bc1;
            let v_hat = s.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}
