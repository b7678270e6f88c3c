//! Nonlinear manifold unfolding: match high-dimensional cosine distances to
//! low-dimensional Euclidean distances with a trainable network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{norm, sub_vec};
use crate::nn::{ForwardMode, MlpNetwork};
use crate::optim::{Optimizer, TrainConfig};
use crate::student::derive_seed;

/// Sign convention for the high-dimensional cosine distance.
///
/// `OneMinusCos` (default) vanishes for identical vectors. `OnePlusCos` is
/// the alternative that instead assigns identical vectors the maximal
/// distance; it is kept for fidelity experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DistanceConvention {
    #[default]
    OneMinusCos,
    OnePlusCos,
}

/// Cosine distance between two nonzero vectors under the chosen convention.
pub fn high_dim_distance(xi: &[f64], xj: &[f64], convention: DistanceConvention) -> Result<f64> {
    if xi.len() != xj.len() {
        return Err(Error::DimensionMismatch {
            expected: xi.len(),
            got: xj.len(),
        });
    }
    let ni = norm(xi);
    let nj = norm(xj);
    if ni == 0.0 || nj == 0.0 {
        return Err(Error::DegenerateVector);
    }
    let cos = crate::linalg::dot(xi, xj) / (ni * nj);
    Ok(match convention {
        DistanceConvention::OneMinusCos => 1.0 - cos,
        DistanceConvention::OnePlusCos => 1.0 + cos,
    })
}

/// Architecture and sampling knobs beyond the shared `TrainConfig`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectorOptions {
    /// Hidden width of the projector stack.
    pub width: usize,
    /// Number of residually connected hidden layers.
    pub residual_blocks: usize,
    pub convention: DistanceConvention,
    /// Pairs drawn per epoch; defaults to the record count.
    pub pairs_per_epoch: Option<usize>,
}

impl Default for ProjectorOptions {
    fn default() -> Self {
        Self {
            width: 512,
            residual_blocks: 2,
            convention: DistanceConvention::OneMinusCos,
            pairs_per_epoch: None,
        }
    }
}

/// Stress objective over explicit pairs:
/// sum of [d_H(x_i, x_j) - ||f(x_i) - f(x_j)||]^2 plus lambda ||theta||^2.
/// Dropout stays disabled; the projector is a deterministic map.
pub fn mds_loss(
    pairs: &[(Vec<f64>, Vec<f64>)],
    net: &MlpNetwork,
    cfg: &TrainConfig,
    convention: DistanceConvention,
) -> Result<f64> {
    let (loss, _) = mds_loss_and_grad(pairs, net, cfg.reg_lambda, convention, false)?;
    Ok(loss)
}

/// Stress loss and, when `with_grad`, its gradient over the flat parameters.
pub fn mds_loss_and_grad(
    pairs: &[(Vec<f64>, Vec<f64>)],
    net: &MlpNetwork,
    reg_lambda: f64,
    convention: DistanceConvention,
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    let mut grad = vec![0.0; if with_grad { net.param_count() } else { 0 }];
    let mut loss = 0.0;
    for (xi, xj) in pairs {
        net.check_input(xi)?;
        net.check_input(xj)?;
        let dh = high_dim_distance(xi, xj, convention)?;
        if with_grad {
            let ti = net.forward_traced(xi, ForwardMode::Deterministic);
            let tj = net.forward_traced(xj, ForwardMode::Deterministic);
            let delta = sub_vec(&ti.output, &tj.output);
            let dist = norm(&delta);
            let r = dh - dist;
            loss += r * r;
            if dist > 1e-12 {
                let coef = -2.0 * r / dist;
                let d_i: Vec<f64> = delta.iter().map(|d| coef * d).collect();
                let d_j: Vec<f64> = delta.iter().map(|d| -coef * d).collect();
                net.backward(&ti, &d_i, &mut grad);
                net.backward(&tj, &d_j, &mut grad);
            }
        } else {
            let yi = net.forward(xi, ForwardMode::Deterministic);
            let yj = net.forward(xj, ForwardMode::Deterministic);
            let r = dh - norm(&sub_vec(&yi, &yj));
            loss += r * r;
        }
    }
    loss += reg_lambda * net.params_sq_norm();
    if with_grad && reg_lambda > 0.0 {
        let mut params = Vec::new();
        net.copy_params_to(&mut params);
        for (g, p) in grad.iter_mut().zip(&params) {
            *g += 2.0 * reg_lambda * p;
        }
    }
    Ok((loss, grad))
}

/// Per-epoch stress on the fixed validation pair set (entry 0 pre-training).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionTrainLog {
    pub val_losses: Vec<f64>,
}

fn sample_pair<R: Rng>(n: usize, rng: &mut R) -> (usize, usize) {
    loop {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j {
            return (i, j);
        }
    }
}

/// Learn the unfolding projector on randomly sampled record pairs.
///
/// Everything is seeded from `cfg.seed`: pair sampling, the validation
/// split, and the weight initialization, so identical configs give
/// bitwise-identical weights.
pub fn train_projection(
    data: &EmbeddingSet,
    out_dim: usize,
    cfg: &TrainConfig,
    options: &ProjectorOptions,
) -> Result<(MlpNetwork, ProjectionTrainLog)> {
    cfg.validate()?;
    if out_dim >= data.dim() || out_dim == 0 {
        return Err(Error::InvalidTargetDim {
            target: out_dim,
            input: data.dim(),
        });
    }
    if data.len() < 2 {
        return Err(Error::InsufficientSamples {
            need: 2,
            got: data.len(),
        });
    }

    let net = MlpNetwork::projector(
        data.dim(),
        out_dim,
        options.width,
        options.residual_blocks,
        cfg.seed,
    );
    let records = data.records();
    let n = records.len();
    let pairs_per_epoch = options.pairs_per_epoch.unwrap_or(n).max(1);

    // Fixed validation pairs, ~10% of an epoch's budget.
    let mut val_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x7A1, 0));
    let n_val = (pairs_per_epoch / 10).max(1);
    let val_pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..n_val)
        .map(|_| {
            let (i, j) = sample_pair(n, &mut val_rng);
            (records[i].vector.clone(), records[j].vector.clone())
        })
        .collect();

    let mut net = net;
    let mut log = ProjectionTrainLog {
        val_losses: Vec::with_capacity(cfg.epochs + 1),
    };
    log.val_losses
        .push(mds_loss(&val_pairs, &net, cfg, options.convention)?);

    let steps_per_epoch = pairs_per_epoch.div_ceil(cfg.batch_pairs).max(1);
    let total_steps = (cfg.epochs * steps_per_epoch) as u64;
    let mut opt = Optimizer::new(cfg.optimizer, net.param_count());
    let mut flat = vec![0.0; net.param_count()];
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xB0, epoch as u64));
        for _ in 0..steps_per_epoch {
            let batch: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.batch_pairs)
                .map(|_| {
                    let (i, j) = sample_pair(n, &mut rng);
                    (records[i].vector.clone(), records[j].vector.clone())
                })
                .collect();
            let (_, mut grad) = mds_loss_and_grad(&batch, &net, 0.0, options.convention, true)?;
            // Mean stress gradient plus the full regularizer gradient.
            let scale = 1.0 / batch.len() as f64;
            for g in grad.iter_mut() {
                *g *= scale;
            }
            if cfg.reg_lambda > 0.0 {
                net.copy_params_to(&mut flat);
                for (g, p) in grad.iter_mut().zip(&flat) {
                    *g += 2.0 * cfg.reg_lambda * p;
                }
            }
            net.copy_params_to(&mut flat);
            let lr = cfg.lr_schedule.rate(cfg.learning_rate, step, total_steps);
            opt.step(&mut flat, &grad, lr);
            net.load_params_from(&flat);
            step += 1;
        }
        log.val_losses
            .push(mds_loss(&val_pairs, &net, cfg, options.convention)?);
    }
    Ok((net, log))
}

/// Deterministic forward pass of the projector.
pub fn project(net: &MlpNetwork, x: &[f64]) -> Result<Vec<f64>> {
    net.check_input(x)?;
    Ok(net.forward(x, ForwardMode::Deterministic))
}

/// Project every record; outputs line up with the input order.
pub fn project_batch(net: &MlpNetwork, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    xs.iter().map(|x| project(net, x)).collect()
}
