//! First-order optimizers and the plateau learning-rate schedule.

use alloc::vec;
use alloc::vec::Vec;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

/// Moment estimates for Adam over a flat parameter vector.
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

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter length changed");
        assert_eq!(
            grad.len(),
            self.m.len(),
            "gradient length does not match parameters"
        );
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - libm::pow(ADAM_BETA1, f64::from(t));
        let bias2 = 1.0 - libm::pow(ADAM_BETA2, f64::from(t));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPSILON);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Adam(AdamState),
    Sgd,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(len)),
            OptimizerKind::Sgd => Optimizer::Sgd,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            Optimizer::Adam(state) => state.step(params, grad, lr),
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
        }
    }
}

/// What the schedule decided after observing an epoch's dev loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlateauDecision {
    pub improved: bool,
    pub decayed: bool,
    pub stop: bool,
}

/// Reduce-on-plateau schedule with early stopping after a fixed number of
/// decays.
///
/// An epoch counts as an improvement when the dev loss drops below
/// `best · (1 − threshold)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    lr: f64,
    factor: f64,
    patience: usize,
    threshold: f64,
    max_decays: usize,
    best: f64,
    bad_epochs: usize,
    decays: usize,
}

impl PlateauSchedule {
    pub fn new(lr: f64, factor: f64, patience: usize, threshold: f64, max_decays: usize) -> Self {
        Self {
            lr,
            factor,
            patience,
            threshold,
            max_decays,
            best: f64::INFINITY,
            bad_epochs: 0,
            decays: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn decays(&self) -> usize {
        self.decays
    }

    pub fn observe(&mut self, dev_loss: f64) -> PlateauDecision {
        let improved = dev_loss < self.best * (1.0 - self.threshold);
        let mut decayed = false;
        if improved {
            self.best = dev_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr *= self.factor;
                self.decays += 1;
                self.bad_epochs = 0;
                decayed = true;
            }
        }
        PlateauDecision {
            improved,
            decayed,
            stop: self.decays >= self.max_decays,
        }
    }
}
