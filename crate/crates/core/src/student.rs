//! Dropout student that mimics a frozen teacher while predicting per-sample
//! mean and log-variance; Monte-Carlo inference splits total uncertainty into
//! an epistemic spread term and an aleatoric diagonal term.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::nn::{Activation, ForwardMode, Layer, MlpNetwork};
use crate::optim::{Optimizer, TrainConfig};
use crate::stats::{GaussianModel, Parameterization};

/// splitmix64-style mixing for independent per-(stream, step) RNG seeds.
pub fn derive_seed(base: u64, stream: u64, step: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ step.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Weights of the four training loss terms.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StudentLossWeights {
    /// Population log-likelihood term.
    pub lambda: f64,
    /// Aleatoric variance regularizer.
    pub gamma: f64,
    /// Population variance regularizer.
    pub delta: f64,
}

impl Default for StudentLossWeights {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            gamma: 1e-3,
            delta: 1e-3,
        }
    }
}

impl StudentLossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || self.gamma < 0.0 || self.delta < 0.0 {
            return Err(Error::InvalidConfig(
                "loss weights must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Architecture knobs for the student trunk.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StudentArchitecture {
    pub width: usize,
    pub residual_blocks: usize,
    /// Dropout rate on every trunk layer.
    pub dropout: f64,
}

impl Default for StudentArchitecture {
    fn default() -> Self {
        Self {
            width: 128,
            residual_blocks: 2,
            dropout: 0.2,
        }
    }
}

/// Trunk with dropout plus two linear heads over the last hidden layer:
/// a mean head and a per-dimension log-variance head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudentNetwork {
    pub trunk: MlpNetwork,
    pub mu_head: MlpNetwork,
    pub logvar_head: MlpNetwork,
}

impl StudentNetwork {
    pub fn new(input_dim: usize, out_dim: usize, arch: StudentArchitecture, seed: u64) -> Self {
        let trunk = MlpNetwork::trunk(
            input_dim,
            arch.width,
            arch.residual_blocks,
            arch.dropout,
            seed,
        );
        let mu_head = MlpNetwork::new(
            vec![Layer::new(
                arch.width,
                out_dim,
                Activation::Identity,
                false,
                0.0,
            )],
            derive_seed(seed, 1, 0),
        );
        let mut logvar_head = MlpNetwork::new(
            vec![Layer::new(
                arch.width,
                out_dim,
                Activation::Identity,
                false,
                0.0,
            )],
            derive_seed(seed, 2, 0),
        );
        // Start the predicted variance near 0.1^2 so exp(l) cannot blow up
        // in the first steps.
        for w in logvar_head.layers_mut()[0].weight_mut() {
            *w *= 0.01;
        }
        for b in logvar_head.layers_mut()[0].bias_mut() {
            *b = (0.01f64).ln();
        }
        Self {
            trunk,
            mu_head,
            logvar_head,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.mu_head.output_dim()
    }

    pub fn has_dropout(&self) -> bool {
        self.trunk.has_dropout()
    }

    /// One pass: (mu, log-variances). Sample mode draws the trunk dropout
    /// masks from the seed; the heads carry no dropout.
    pub fn forward(&self, x: &[f64], mode: ForwardMode) -> Result<(Vec<f64>, Vec<f64>)> {
        self.trunk.check_input(x)?;
        let h = self.trunk.forward(x, mode);
        let mu = self.mu_head.forward(&h, ForwardMode::Deterministic);
        let l = self.logvar_head.forward(&h, ForwardMode::Deterministic);
        Ok((mu, l))
    }

    /// Flat parameter layout: [trunk | mu_head | logvar_head].
    pub fn param_count(&self) -> usize {
        self.trunk.param_count() + self.mu_head.param_count() + self.logvar_head.param_count()
    }

    pub fn copy_params_to(&self, out: &mut Vec<f64>) {
        out.clear();
        let mut buf = Vec::new();
        self.trunk.copy_params_to(&mut buf);
        out.extend_from_slice(&buf);
        self.mu_head.copy_params_to(&mut buf);
        out.extend_from_slice(&buf);
        self.logvar_head.copy_params_to(&mut buf);
        out.extend_from_slice(&buf);
    }

    pub fn load_params_from(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let (t, rest) = flat.split_at(self.trunk.param_count());
        let (m, l) = rest.split_at(self.mu_head.param_count());
        self.trunk.load_params_from(t);
        self.mu_head.load_params_from(m);
        self.logvar_head.load_params_from(l);
    }
}

/// Aggregated Monte-Carlo moments for one input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UncertaintyEstimate {
    pub mu_hat: Vec<f64>,
    /// epistemic + aleatoric.
    pub sigma_hat: Mat,
    /// Spread of the per-pass means around mu_hat.
    pub epistemic: Mat,
    /// Mean of the per-pass diagonal variances.
    pub aleatoric: Mat,
    pub passes: usize,
}

/// Monte-Carlo integration over `t_passes` dropout draws (Bernoulli weight
/// sampling); pass t uses the seed derived from (base_seed, stream, t).
pub fn mc_infer(
    net: &StudentNetwork,
    x: &[f64],
    t_passes: usize,
    base_seed: u64,
    stream: u64,
) -> Result<UncertaintyEstimate> {
    if t_passes == 0 {
        return Err(Error::InvalidConfig("mc_infer needs T >= 1".into()));
    }
    let m = net.output_dim();
    if !net.has_dropout() {
        // Every pass is identical; the parameter-uncertainty term is an
        // exact zero matrix and the total reduces to the aleatoric diagonal.
        let (mu, l) = net.forward(x, ForwardMode::Deterministic)?;
        let aleatoric = Mat::from_diag(&l.iter().map(|v| v.exp()).collect::<Vec<_>>());
        return Ok(UncertaintyEstimate {
            mu_hat: mu,
            sigma_hat: aleatoric.clone(),
            epistemic: Mat::zeros(m, m),
            aleatoric,
            passes: t_passes,
        });
    }
    let mut mus: Vec<Vec<f64>> = Vec::with_capacity(t_passes);
    let mut aleatoric_diag = vec![0.0; m];
    for t in 0..t_passes {
        let seed = derive_seed(base_seed, stream, t as u64);
        let (mu, l) = net.forward(x, ForwardMode::Sample { seed })?;
        for (a, li) in aleatoric_diag.iter_mut().zip(&l) {
            *a += li.exp();
        }
        mus.push(mu);
    }
    let tf = t_passes as f64;
    for a in aleatoric_diag.iter_mut() {
        *a /= tf;
    }
    let mut mu_hat = vec![0.0; m];
    for mu in &mus {
        for (s, v) in mu_hat.iter_mut().zip(mu) {
            *s += v;
        }
    }
    for s in mu_hat.iter_mut() {
        *s /= tf;
    }
    let mut epistemic = Mat::zeros(m, m);
    let mut dev = vec![0.0; m];
    for mu in &mus {
        for ((d, v), c) in dev.iter_mut().zip(mu).zip(&mu_hat) {
            *d = v - c;
        }
        epistemic.add_outer(&dev, 1.0 / tf);
    }
    let aleatoric = Mat::from_diag(&aleatoric_diag);
    let sigma_hat = epistemic.add(&aleatoric);
    Ok(UncertaintyEstimate {
        mu_hat,
        sigma_hat,
        epistemic,
        aleatoric,
        passes: t_passes,
    })
}

/// `mc_infer` over many inputs. Parallel over samples; each sample owns the
/// RNG stream equal to its index, and aggregation order is the input order,
/// so the result does not depend on the thread count.
pub fn mc_infer_set(
    net: &StudentNetwork,
    inputs: &[Vec<f64>],
    t_passes: usize,
    base_seed: u64,
) -> Result<Vec<UncertaintyEstimate>> {
    inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| mc_infer(net, x, t_passes, base_seed, i as u64))
        .collect()
}

/// The four-term objective evaluated on already-computed predictions.
///
/// `preds[i]` is (mu_i, l_i) for target `targets[i]`; per-dimension terms:
/// student `l + (y-mu)^2 exp(-l)`, population `l_g + (y-mu_g)^2 exp(-l_g)`,
/// both halved, plus the two exp-variance regularizers.
pub fn student_loss_from_predictions(
    preds: &[(Vec<f64>, Vec<f64>)],
    targets: &[Vec<f64>],
    mu_g: &[f64],
    l_g: &[f64],
    w: &StudentLossWeights,
) -> f64 {
    assert_eq!(preds.len(), targets.len());
    let n = preds.len() as f64;
    let mut l_s = 0.0;
    let mut l_pop = 0.0;
    let mut l_rs = 0.0;
    for ((mu, l), y) in preds.iter().zip(targets) {
        for j in 0..mu.len() {
            let r = y[j] - mu[j];
            l_s += 0.5 * (l[j] + r * r * (-l[j]).exp());
            let rg = y[j] - mu_g[j];
            l_pop += 0.5 * (l_g[j] + rg * rg * (-l_g[j]).exp());
            l_rs += l[j].exp() / (2.0 * n);
        }
    }
    let l_rg: f64 = l_g.iter().map(|v| 0.5 * v.exp()).sum();
    l_s + w.lambda * l_pop + w.gamma * l_rs + w.delta * l_rg
}

/// Objective of one batch under deterministic forward passes.
pub fn student_loss(
    batch: &[(Vec<f64>, Vec<f64>)],
    net: &StudentNetwork,
    mu_g: &[f64],
    l_g: &[f64],
    w: &StudentLossWeights,
) -> Result<f64> {
    let modes = vec![ForwardMode::Deterministic; batch.len()];
    let (loss, _, _) = student_loss_and_grad(batch, net, mu_g, l_g, w, &modes)?;
    Ok(loss)
}

/// Loss plus gradients w.r.t. the network parameters (flat layout) and l_g.
pub fn student_loss_and_grad(
    batch: &[(Vec<f64>, Vec<f64>)],
    net: &StudentNetwork,
    mu_g: &[f64],
    l_g: &[f64],
    w: &StudentLossWeights,
    modes: &[ForwardMode],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    assert_eq!(modes.len(), batch.len());
    let m = net.output_dim();
    if mu_g.len() != m || l_g.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: mu_g.len(),
        });
    }
    let n = batch.len() as f64;
    let trunk_params = net.trunk.param_count();
    let mu_params = net.mu_head.param_count();
    let lv_params = net.logvar_head.param_count();
    let mut grad = vec![0.0; trunk_params + mu_params + lv_params];
    let mut grad_lg = vec![0.0; m];
    let mut loss = 0.0;

    for ((x, y), mode) in batch.iter().zip(modes) {
        net.trunk.check_input(x)?;
        if y.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: y.len(),
            });
        }
        let trunk_trace = net.trunk.forward_traced(x, *mode);
        let h = &trunk_trace.output;
        let mu_trace = net.mu_head.forward_traced(h, ForwardMode::Deterministic);
        let lv_trace = net
            .logvar_head
            .forward_traced(h, ForwardMode::Deterministic);
        let mu = &mu_trace.output;
        let l = &lv_trace.output;

        let mut d_mu = vec![0.0; m];
        let mut d_l = vec![0.0; m];
        for j in 0..m {
            let r = y[j] - mu[j];
            let e = (-l[j]).exp();
            loss += 0.5 * (l[j] + r * r * e);
            d_mu[j] = -r * e;
            d_l[j] = 0.5 * (1.0 - r * r * e) + w.gamma * l[j].exp() / (2.0 * n);
            loss += w.gamma * l[j].exp() / (2.0 * n);

            let rg = y[j] - mu_g[j];
            let eg = (-l_g[j]).exp();
            loss += w.lambda * 0.5 * (l_g[j] + rg * rg * eg);
            grad_lg[j] += w.lambda * 0.5 * (1.0 - rg * rg * eg);
        }

        let (trunk_g, rest) = grad.split_at_mut(trunk_params);
        let (mu_g_buf, lv_g_buf) = rest.split_at_mut(mu_params);
        let d_h_mu = net.mu_head.backward(&mu_trace, &d_mu, mu_g_buf);
        let d_h_lv = net.logvar_head.backward(&lv_trace, &d_l, lv_g_buf);
        let d_h: Vec<f64> = d_h_mu.iter().zip(&d_h_lv).map(|(a, b)| a + b).collect();
        net.trunk.backward(&trunk_trace, &d_h, trunk_g);
    }

    for j in 0..m {
        loss += w.delta * 0.5 * l_g[j].exp();
        grad_lg[j] += w.delta * 0.5 * l_g[j].exp();
    }
    Ok((loss, grad, grad_lg))
}

/// Per-epoch training diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudentTrainLog {
    /// Deterministic validation loss per epoch (entry 0 is pre-training).
    pub val_losses: Vec<f64>,
    /// Mean predicted log-variance on the validation set per epoch.
    pub mean_logvar: Vec<f64>,
}

/// Train the student on frozen teacher pairs. mu_g is fixed to the target
/// mean before any gradient step; l_g and the network train jointly with
/// dropout active.
pub fn train_student(
    pairs: &[(Vec<f64>, Vec<f64>)],
    out_dim: usize,
    arch: StudentArchitecture,
    cfg: &TrainConfig,
    w: &StudentLossWeights,
) -> Result<(StudentNetwork, GaussianModel, StudentTrainLog)> {
    cfg.validate()?;
    w.validate()?;
    if pairs.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    let input_dim = pairs[0].0.len();
    for (x, y) in pairs {
        if x.len() != input_dim {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                got: x.len(),
            });
        }
        if y.len() != out_dim {
            return Err(Error::DimensionMismatch {
                expected: out_dim,
                got: y.len(),
            });
        }
    }

    let mut net = StudentNetwork::new(input_dim, out_dim, arch, cfg.seed);

    // Empirical population mean over all targets, frozen.
    let n = pairs.len() as f64;
    let mut mu_g = vec![0.0; out_dim];
    for (_, y) in pairs {
        for (s, v) in mu_g.iter_mut().zip(y) {
            *s += v;
        }
    }
    for s in mu_g.iter_mut() {
        *s /= n;
    }
    // l_g starts at the log of the empirical target variance.
    let mut l_g = vec![0.0; out_dim];
    for (_, y) in pairs {
        for (s, (v, c)) in l_g.iter_mut().zip(y.iter().zip(&mu_g)) {
            *s += (v - c) * (v - c);
        }
    }
    for s in l_g.iter_mut() {
        *s = (*s / n).max(1e-12).ln();
    }

    // Seeded 10% validation split (at least one sample stays in training).
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xA11, 0));
    order.shuffle(&mut split_rng);
    let n_val = (pairs.len() / 10).min(pairs.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_set: Vec<(Vec<f64>, Vec<f64>)> = val_idx.iter().map(|&i| pairs[i].clone()).collect();
    let train_idx: Vec<usize> = train_idx.to_vec();

    let eval_val = |net: &StudentNetwork, l_g: &[f64]| -> Result<(f64, f64)> {
        if val_set.is_empty() {
            return Ok((0.0, 0.0));
        }
        let loss = student_loss(&val_set, net, &mu_g, l_g, w)?;
        let mut mean_l = 0.0;
        for (x, _) in &val_set {
            let (_, l) = net.forward(x, ForwardMode::Deterministic)?;
            mean_l += l.iter().sum::<f64>() / l.len() as f64;
        }
        Ok((
            loss / val_set.len().max(1) as f64,
            mean_l / val_set.len() as f64,
        ))
    };

    let mut log = StudentTrainLog {
        val_losses: Vec::with_capacity(cfg.epochs + 1),
        mean_logvar: Vec::with_capacity(cfg.epochs + 1),
    };
    let (v0, ml0) = eval_val(&net, &l_g)?;
    log.val_losses.push(v0);
    log.mean_logvar.push(ml0);

    let steps_per_epoch = train_idx.len().div_ceil(cfg.batch_pairs).max(1);
    let total_steps = (cfg.epochs * steps_per_epoch) as u64;
    let n_params = net.param_count() + out_dim;
    let mut opt = Optimizer::new(cfg.optimizer, n_params);
    let mut flat = vec![0.0; n_params];
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs {
        let mut idx = train_idx.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xE0, epoch as u64));
        idx.shuffle(&mut rng);
        for chunk in idx.chunks(cfg.batch_pairs) {
            let batch: Vec<(Vec<f64>, Vec<f64>)> =
                chunk.iter().map(|&i| pairs[i].clone()).collect();
            let modes: Vec<ForwardMode> = chunk
                .iter()
                .map(|&i| ForwardMode::Sample {
                    seed: derive_seed(cfg.seed, i as u64, step),
                })
                .collect();
            let (_, grad, grad_lg) = student_loss_and_grad(&batch, &net, &mu_g, &l_g, w, &modes)?;

            // Mean-scaled step so the learning rate is batch-size agnostic.
            let scale = 1.0 / batch.len() as f64;
            let net_params = net.param_count();
            net.copy_params_to(&mut flat);
            flat.truncate(net_params);
            flat.extend_from_slice(&l_g);
            let mut full_grad: Vec<f64> = grad.iter().map(|g| g * scale).collect();
            full_grad.extend(grad_lg.iter().map(|g| g * scale));
            let lr = cfg.lr_schedule.rate(cfg.learning_rate, step, total_steps);
            opt.step(&mut flat, &full_grad, lr);
            net.load_params_from(&flat[..net_params]);
            l_g.copy_from_slice(&flat[net_params..]);
            step += 1;
        }
        let (v, ml) = eval_val(&net, &l_g)?;
        log.val_losses.push(v);
        log.mean_logvar.push(ml);
    }

    let sigma_g = Mat::from_diag(&l_g.iter().map(|v| v.exp()).collect::<Vec<_>>());
    let population = GaussianModel::new(mu_g, sigma_g, Parameterization::AxisAligned)?;
    Ok((net, population, log))
}
