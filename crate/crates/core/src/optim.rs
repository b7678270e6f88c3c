//! First-order optimizers over flat parameter vectors, plus the shared
//! training configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Plain SGD with heavy-ball momentum.
    SgdMomentum { momentum: f64 },
    /// Adaptive moment estimation.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd_momentum() -> Self {
        OptimizerKind::SgdMomentum { momentum: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from the base rate to zero over the full run.
    CosineAnnealing,
}

impl LrSchedule {
    pub fn rate(&self, base: f64, step: u64, total_steps: u64) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::CosineAnnealing => {
                if total_steps <= 1 {
                    return base;
                }
                let progress = step as f64 / (total_steps - 1).max(1) as f64;
                base * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

/// Shared knobs for projector and student training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_pairs: usize,
    pub epochs: usize,
    pub reg_lambda: f64,
    pub optimizer: OptimizerKind,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
}

impl TrainConfig {
    /// Projector defaults: Adam at 3e-4, lambda 3e-4, cosine annealing,
    /// 256-pair batches.
    pub fn projector_default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_pairs: 256,
            epochs: 100,
            reg_lambda: 3e-4,
            optimizer: OptimizerKind::adam(),
            lr_schedule: LrSchedule::CosineAnnealing,
            seed: 0,
        }
    }

    /// Student defaults: Adam at 1e-3, cosine annealing, 64-sample batches.
    pub fn student_default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_pairs: 64,
            epochs: 100,
            reg_lambda: 0.0,
            optimizer: OptimizerKind::adam(),
            lr_schedule: LrSchedule::CosineAnnealing,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_pairs == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if self.reg_lambda < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "regularization weight must be nonnegative, got {}",
                self.reg_lambda
            )));
        }
        Ok(())
    }
}

/// Optimizer state over one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    momentum_buf: Vec<f64>,
    second_moment: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, param_count: usize) -> Self {
        Self {
            kind,
            momentum_buf: vec![0.0; param_count],
            second_moment: match kind {
                OptimizerKind::Adam { .. } => vec![0.0; param_count],
                _ => Vec::new(),
            },
            t: 0,
        }
    }

    /// One in-place update of `params` against `grads` at learning rate `lr`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.momentum_buf.len());
        self.t += 1;
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                for ((p, g), m) in params.iter_mut().zip(grads).zip(&mut self.momentum_buf) {
                    *m = momentum * *m + g;
                    *p -= lr * *m;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.momentum_buf)
                    .zip(&mut self.second_moment)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}
