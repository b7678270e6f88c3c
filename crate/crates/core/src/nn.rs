//! Fully-connected networks with optional residual connections and per-layer
//! dropout, plus hand-written backpropagation over a flat parameter vector.
//!
//! Dropout follows the weight-scaling convention: sample mode multiplies each
//! layer output by a Bernoulli 0/1 mask drawn from a seed, deterministic mode
//! multiplies by the keep probability instead.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    /// max(x, slope * x)
    LeakyRelu(f64),
}

impl Activation {
    #[inline]
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
        }
    }

    #[inline]
    fn grad(&self, preact: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu(slope) => {
                if preact > 0.0 {
                    1.0
                } else {
                    *slope
                }
            }
        }
    }
}

/// One dense layer: y = act(W x + b), optionally plus the skip input, then
/// scaled by the layer's dropout mask (sample) or keep probability
/// (deterministic).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub residual: bool,
    pub dropout: f64,
    weight: Vec<f64>, // out_dim x in_dim, row-major
    bias: Vec<f64>,
}

impl Layer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        residual: bool,
        dropout: f64,
    ) -> Self {
        assert!((0.0..1.0).contains(&dropout), "dropout must be in [0, 1)");
        assert!(
            !residual || in_dim == out_dim,
            "residual connections need equal widths"
        );
        Self {
            in_dim,
            out_dim,
            activation,
            residual,
            dropout,
            weight: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Scaled uniform fan-in initialization: U(-1/sqrt(in), 1/sqrt(in)).
    fn init<R: Rng>(&mut self, rng: &mut R) {
        let bound = 1.0 / (self.in_dim as f64).sqrt();
        for w in self.weight.iter_mut() {
            *w = rng.gen_range(-bound..bound);
        }
        for b in self.bias.iter_mut() {
            *b = 0.0;
        }
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Forward-pass mode. `Sample` draws one Bernoulli mask per layer from the
/// given seed; `Deterministic` disables dropout and rescales by keep
/// probability.
#[derive(Debug, Clone, Copy)]
pub enum ForwardMode {
    Deterministic,
    Sample { seed: u64 },
}

/// Per-layer records of a forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input seen by each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations z = W x + b.
    preacts: Vec<Vec<f64>>,
    /// Multiplier applied to each layer output (mask entries or keep prob).
    scales: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Multi-layer perceptron with a stable flat parameter layout
/// [W0, b0, W1, b1, ...] used by optimizers and finite-difference checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpNetwork {
    layers: Vec<Layer>,
    pub seed: u64,
}

impl MlpNetwork {
    pub fn new(layers: Vec<Layer>, seed: u64) -> Self {
        assert!(!layers.is_empty(), "network needs at least one layer");
        for pair in layers.windows(2) {
            assert_eq!(
                pair[0].out_dim, pair[1].in_dim,
                "consecutive layer dimensions must be compatible"
            );
        }
        let mut net = Self { layers, seed };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in net.layers.iter_mut() {
            layer.init(&mut rng);
        }
        net
    }

    /// Projector stack: input -> width (leaky) -> `blocks` residual width
    /// layers (leaky) -> out (linear). No dropout.
    pub fn projector(
        input_dim: usize,
        out_dim: usize,
        width: usize,
        blocks: usize,
        seed: u64,
    ) -> Self {
        let mut layers = Vec::with_capacity(blocks + 2);
        layers.push(Layer::new(
            input_dim,
            width,
            Activation::LeakyRelu(LEAKY_SLOPE),
            false,
            0.0,
        ));
        for _ in 0..blocks {
            layers.push(Layer::new(
                width,
                width,
                Activation::LeakyRelu(LEAKY_SLOPE),
                true,
                0.0,
            ));
        }
        layers.push(Layer::new(width, out_dim, Activation::Identity, false, 0.0));
        Self::new(layers, seed)
    }

    /// Trunk stack for the student: like `projector` but ending at the last
    /// hidden layer, with dropout on every layer.
    pub fn trunk(input_dim: usize, width: usize, blocks: usize, dropout: f64, seed: u64) -> Self {
        let mut layers = Vec::with_capacity(blocks + 1);
        layers.push(Layer::new(
            input_dim,
            width,
            Activation::LeakyRelu(LEAKY_SLOPE),
            false,
            dropout,
        ));
        for _ in 0..blocks {
            layers.push(Layer::new(
                width,
                width,
                Activation::LeakyRelu(LEAKY_SLOPE),
                true,
                dropout,
            ));
        }
        Self::new(layers, seed)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.out_dim));
        sizes
    }

    pub fn dropout_rates(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.dropout).collect()
    }

    pub fn has_dropout(&self) -> bool {
        self.layers.iter().any(|l| l.dropout > 0.0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn copy_params_to(&self, out: &mut Vec<f64>) {
        out.clear();
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
    }

    pub fn load_params_from(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut off = 0;
        for l in self.layers.iter_mut() {
            let w_len = l.weight.len();
            l.weight.copy_from_slice(&flat[off..off + w_len]);
            off += w_len;
            let b_len = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + b_len]);
            off += b_len;
        }
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass without a trace.
    pub fn forward(&self, x: &[f64], mode: ForwardMode) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "input width mismatch");
        let mut mask_rng = match mode {
            ForwardMode::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            ForwardMode::Deterministic => None,
        };
        let mut h = x.to_vec();
        let mut z = Vec::new();
        for layer in &self.layers {
            z.clear();
            z.resize(layer.out_dim, 0.0);
            for (i, zi) in z.iter_mut().enumerate() {
                let row = &layer.weight[i * layer.in_dim..(i + 1) * layer.in_dim];
                let mut s = layer.bias[i];
                for (w, v) in row.iter().zip(&h) {
                    s += w * v;
                }
                *zi = layer.activation.apply(s);
            }
            if layer.residual {
                for (zi, hi) in z.iter_mut().zip(&h) {
                    *zi += hi;
                }
            }
            match &mut mask_rng {
                Some(rng) => {
                    let keep = 1.0 - layer.dropout;
                    for zi in z.iter_mut() {
                        // Draw a mask entry even at dropout 0 so the stream
                        // position does not depend on the rate.
                        let u: f64 = rng.gen();
                        if u >= keep {
                            *zi = 0.0;
                        }
                    }
                }
                None => {
                    let keep = 1.0 - layer.dropout;
                    if keep < 1.0 {
                        for zi in z.iter_mut() {
                            *zi *= keep;
                        }
                    }
                }
            }
            std::mem::swap(&mut h, &mut z);
        }
        h
    }

    /// Forward pass recording everything backpropagation needs.
    pub fn forward_traced(&self, x: &[f64], mode: ForwardMode) -> ForwardTrace {
        assert_eq!(x.len(), self.input_dim(), "input width mismatch");
        let mut mask_rng = match mode {
            ForwardMode::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            ForwardMode::Deterministic => None,
        };
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut scales = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let mut z = vec![0.0; layer.out_dim];
            for (i, zi) in z.iter_mut().enumerate() {
                let row = &layer.weight[i * layer.in_dim..(i + 1) * layer.in_dim];
                let mut s = layer.bias[i];
                for (w, v) in row.iter().zip(&h) {
                    s += w * v;
                }
                *zi = s;
            }
            let mut out: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            if layer.residual {
                for (oi, hi) in out.iter_mut().zip(&h) {
                    *oi += hi;
                }
            }
            let keep = 1.0 - layer.dropout;
            let scale: Vec<f64> = match &mut mask_rng {
                Some(rng) => (0..layer.out_dim)
                    .map(|_| {
                        let u: f64 = rng.gen();
                        if u >= keep {
                            0.0
                        } else {
                            1.0
                        }
                    })
                    .collect(),
                None => vec![keep; layer.out_dim],
            };
            for (oi, s) in out.iter_mut().zip(&scale) {
                *oi *= s;
            }
            inputs.push(h);
            preacts.push(z);
            scales.push(scale);
            h = out;
        }
        ForwardTrace {
            inputs,
            preacts,
            scales,
            output: h,
        }
    }

    /// Backpropagate `d_output` through a trace, accumulating parameter
    /// gradients into `grad` (flat layout) and returning dL/d(input).
    pub fn backward(&self, trace: &ForwardTrace, d_output: &[f64], grad: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.param_count());
        assert_eq!(d_output.len(), self.output_dim());
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.param_count();
        }

        let mut d_out = d_output.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[k];
            let preact = &trace.preacts[k];
            let scale = &trace.scales[k];
            // Undo the dropout scaling, then the activation.
            let d_pre: Vec<f64> = d_out.iter().zip(scale).map(|(d, s)| d * s).collect();
            let d_z: Vec<f64> = d_pre
                .iter()
                .zip(preact)
                .map(|(d, &z)| d * layer.activation.grad(z))
                .collect();

            let w_off = offsets[k];
            let b_off = w_off + layer.weight.len();
            for (i, &dzi) in d_z.iter().enumerate() {
                if dzi != 0.0 {
                    let grow = &mut grad[w_off + i * layer.in_dim..w_off + (i + 1) * layer.in_dim];
                    for (g, &xv) in grow.iter_mut().zip(input) {
                        *g += dzi * xv;
                    }
                }
                grad[b_off + i] += dzi;
            }

            let mut d_in = vec![0.0; layer.in_dim];
            for (i, &dzi) in d_z.iter().enumerate() {
                if dzi != 0.0 {
                    let row = &layer.weight[i * layer.in_dim..(i + 1) * layer.in_dim];
                    for (di, &w) in d_in.iter_mut().zip(row) {
                        *di += dzi * w;
                    }
                }
            }
            if layer.residual {
                for (di, dp) in d_in.iter_mut().zip(&d_pre) {
                    *di += dp;
                }
            }
            d_out = d_in;
        }
        d_out
    }

    /// Sum of squared parameters (weights and biases).
    pub fn params_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.weight.iter().map(|w| w * w).sum::<f64>()
                    + l.bias.iter().map(|b| b * b).sum::<f64>()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_net(seed: u64, dropout: f64) -> MlpNetwork {
        let layers = vec![
            Layer::new(3, 5, Activation::LeakyRelu(LEAKY_SLOPE), false, dropout),
            Layer::new(5, 5, Activation::LeakyRelu(LEAKY_SLOPE), true, dropout),
            Layer::new(5, 2, Activation::Identity, false, 0.0),
        ];
        MlpNetwork::new(layers, seed)
    }

    #[test]
    fn identity_layer_returns_input() {
        let mut layer = Layer::new(3, 3, Activation::Identity, false, 0.0);
        for i in 0..3 {
            layer.weight_mut()[i * 3 + i] = 1.0;
        }
        let net = MlpNetwork {
            layers: vec![layer],
            seed: 0,
        };
        let x = [0.5, -1.25, 3.0];
        assert_eq!(net.forward(&x, ForwardMode::Deterministic), x.to_vec());
    }

    #[test]
    fn deterministic_forward_is_repeatable() {
        let net = small_net(9, 0.0);
        let x = [0.1, -0.2, 0.3];
        let a = net.forward(&x, ForwardMode::Deterministic);
        let b = net.forward(&x, ForwardMode::Deterministic);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_dropout_sample_equals_deterministic() {
        let net = small_net(4, 0.0);
        let x = [0.4, 0.9, -1.1];
        let det = net.forward(&x, ForwardMode::Deterministic);
        let smp = net.forward(&x, ForwardMode::Sample { seed: 123 });
        assert_eq!(det, smp);
    }

    #[test]
    fn same_seed_same_mask() {
        let net = small_net(4, 0.3);
        let x = [0.4, 0.9, -1.1];
        let a = net.forward(&x, ForwardMode::Sample { seed: 7 });
        let b = net.forward(&x, ForwardMode::Sample { seed: 7 });
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        // Mask collision over two seeds is ~2^-30 per pair for this net.
        let net = small_net(4, 0.3);
        let x = [0.4, 0.9, -1.1];
        let mut distinct = 0;
        for s in 0..100u64 {
            let a = net.forward(&x, ForwardMode::Sample { seed: 2 * s });
            let b = net.forward(&x, ForwardMode::Sample { seed: 2 * s + 1 });
            if a != b {
                distinct += 1;
            }
        }
        assert_eq!(distinct, 100);
    }

    #[test]
    fn deterministic_mode_matches_mask_average() {
        // The keep-probability rescale is the expectation of the Bernoulli
        // masking, layer by layer; with a single masked layer the sampled
        // mean converges to the deterministic output.
        let layers = vec![
            Layer::new(3, 6, Activation::LeakyRelu(LEAKY_SLOPE), false, 0.4),
            Layer::new(6, 2, Activation::Identity, false, 0.0),
        ];
        let net = MlpNetwork::new(layers, 12);
        let x = [0.7, -0.3, 0.5];
        let det = net.forward(&x, ForwardMode::Deterministic);
        let n = 20_000u64;
        let mut mean = vec![0.0; 2];
        for s in 0..n {
            let y = net.forward(&x, ForwardMode::Sample { seed: s });
            for (m, v) in mean.iter_mut().zip(&y) {
                *m += v / n as f64;
            }
        }
        for (m, d) in mean.iter().zip(&det) {
            assert!(
                (m - d).abs() < 0.02 * d.abs().max(0.1),
                "mean {m} vs det {d}"
            );
        }
    }

    #[test]
    fn same_net_seed_same_weights() {
        let a = small_net(21, 0.0);
        let b = small_net(21, 0.0);
        let mut pa = Vec::new();
        let mut pb = Vec::new();
        a.copy_params_to(&mut pa);
        b.copy_params_to(&mut pb);
        assert_eq!(pa, pb);
    }

    // Central-difference check of backward() through residual + leaky layers,
    // under both deterministic scaling and a fixed sampled mask.
    fn gradient_check(mode: ForwardMode) {
        let mut net = small_net(
            3,
            if matches!(mode, ForwardMode::Sample { .. }) {
                0.25
            } else {
                0.0
            },
        );
        let x = [0.8, -0.5, 0.2];
        let target = [0.3, -0.7];

        let loss = |net: &MlpNetwork| -> f64 {
            let y = net.forward(&x, mode);
            y.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum()
        };

        let trace = net.forward_traced(&x, mode);
        let d_out: Vec<f64> = trace
            .output
            .iter()
            .zip(&target)
            .map(|(a, b)| 2.0 * (a - b))
            .collect();
        let mut grad = vec![0.0; net.param_count()];
        net.backward(&trace, &d_out, &mut grad);

        let mut params = Vec::new();
        net.copy_params_to(&mut params);
        let h = 1e-5;
        for idx in 0..params.len() {
            let orig = params[idx];
            params[idx] = orig + h;
            net.load_params_from(&params);
            let lp = loss(&net);
            params[idx] = orig - h;
            net.load_params_from(&params);
            let lm = loss(&net);
            params[idx] = orig;
            net.load_params_from(&params);
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(grad[idx].abs()).max(1e-8);
            assert!(
                (fd - grad[idx]).abs() / denom < 1e-4,
                "param {idx}: analytic {} vs fd {fd}",
                grad[idx]
            );
        }
    }

    #[test]
    fn backward_matches_finite_differences_deterministic() {
        gradient_check(ForwardMode::Deterministic);
    }

    #[test]
    fn backward_matches_finite_differences_with_fixed_mask() {
        gradient_check(ForwardMode::Sample { seed: 77 });
    }
}
