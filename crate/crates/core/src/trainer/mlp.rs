//! A fully connected network with hand-written backpropagation.
//!
//! Layer 1 maps the input to width `W` with no activation applied to the input.
//! Hidden layers `2..=depth` apply the sparsifying activation to the previous
//! preactivation, and an affine readout produces the logits for a softmax.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::activations::ActivationSpec;
use crate::solver::EocInit;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: ActivationSpec,
    /// `weights[i]` has shape `(out, in)`; the last entry is the readout.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Gradients with the same layout as [`Mlp`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Preactivations of the hidden layers and the logits for one batch.
pub struct ForwardPass {
    pub hidden: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

impl Mlp {
    /// Draws a network of `depth` hidden layers of width `width`.
    ///
    /// The first layer uses `W ~ N(0, 1/d)` and zero bias so that inputs
    /// normalized to variance `q*` produce preactivations of variance `q*`.
    /// All later layers, including the readout, use `W ~ N(0, σ_w²/N)` and
    /// `b ~ N(0, σ_b²)`.
    pub fn new(init: &EocInit, input_dim: usize, depth: usize, width: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |sd: f64| sd * rng.sample::<f64, _>(StandardNormal);
        let mut weights = Vec::with_capacity(depth + 1);
        let mut biases = Vec::with_capacity(depth + 1);
        let sb = init.sb2.sqrt();
        for layer in 0..=depth {
            let fan_in = if layer == 0 { input_dim } else { width };
            let fan_out = if layer == depth { classes } else { width };
            if layer == 0 {
                let sd = (1.0 / fan_in as f64).sqrt();
                weights.push(Array2::from_shape_simple_fn((fan_out, fan_in), || normal(sd)));
                biases.push(Array1::zeros(fan_out));
            } else {
                let sd = (init.sw2 / fan_in as f64).sqrt();
                weights.push(Array2::from_shape_simple_fn((fan_out, fan_in), || normal(sd)));
                biases.push(Array1::from_shape_simple_fn(fan_out, || normal(sb)));
            }
        }
        Mlp {
            spec: init.spec,
            weights,
            biases,
        }
    }

    pub fn depth(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn affine(&self, layer: usize, a: &ArrayView2<f64>) -> Array2<f64> {
        let mut h = a.dot(&self.weights[layer].t());
        h += &self.biases[layer].view().insert_axis(Axis(0));
        h
    }

    /// `x` holds one sample per row.
    pub fn forward(&self, x: ArrayView2<f64>) -> ForwardPass {
        let spec = self.spec;
        let mut hidden = Vec::with_capacity(self.depth());
        hidden.push(self.affine(0, &x));
        for layer in 1..self.depth() {
            let a = hidden[layer - 1].mapv(|v| spec.eval(v));
            hidden.push(self.affine(layer, &a.view()));
        }
        let a = hidden[self.depth() - 1].mapv(|v| spec.eval(v));
        let logits = self.affine(self.depth(), &a.view());
        ForwardPass { hidden, logits }
    }

    /// Mean cross-entropy of a batch.
    pub fn loss(&self, x: ArrayView2<f64>, y: &[usize]) -> f64 {
        cross_entropy(&self.forward(x).logits, y)
    }

    /// Mean cross-entropy and its gradient.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, y: &[usize]) -> (f64, Gradients) {
        let spec = self.spec;
        let pass = self.forward(x);
        let loss = cross_entropy(&pass.logits, y);
        let n = y.len() as f64;

        let mut delta = softmax(&pass.logits);
        for (mut row, &c) in delta.rows_mut().into_iter().zip(y) {
            row[c] -= 1.0;
            row /= n;
        }
        let depth = self.depth();
        let mut gw = vec![Array2::zeros((0, 0)); depth + 1];
        let mut gb = vec![Array1::zeros(0); depth + 1];
        for layer in (0..=depth).rev() {
            let input = if layer == 0 {
                x.to_owned()
            } else {
                pass.hidden[layer - 1].mapv(|v| spec.eval(v))
            };
            gw[layer] = delta.t().dot(&input);
            gb[layer] = delta.sum_axis(Axis(0));
            if layer > 0 {
                let mut back = delta.dot(&self.weights[layer]);
                Zip::from(&mut back)
                    .and(&pass.hidden[layer - 1])
                    .for_each(|d, &h| *d *= spec.eval_deriv(h));
                delta = back;
            }
        }
        (loss, Gradients { weights: gw, biases: gb })
    }

    /// Plain SGD step `θ ← θ − lr ∇θ`.
    pub fn apply(&mut self, grads: &Gradients, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.scaled_add(-lr, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.scaled_add(-lr, g);
        }
    }

    /// Fraction of exactly-zero hidden activations over a batch.
    pub fn activation_sparsity(&self, x: ArrayView2<f64>) -> f64 {
        let pass = self.forward(x);
        let (zeros, total) = pass.hidden.iter().fold((0usize, 0usize), |(z, t), h| {
            (
                z + h.iter().filter(|&&v| self.spec.eval(v) == 0.0).count(),
                t + h.len(),
            )
        });
        zeros as f64 / total as f64
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        self.forward(x)
            .logits
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect()
    }

    pub fn accuracy(&self, x: ArrayView2<f64>, y: &[usize]) -> f64 {
        let hits = self.predict(x).iter().zip(y).filter(|(p, t)| p == t).count();
        hits as f64 / y.len() as f64
    }
}

/// Row-wise softmax with the usual max shift.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Mean negative log-likelihood, computed with log-sum-exp.
pub fn cross_entropy(logits: &Array2<f64>, y: &[usize]) -> f64 {
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &c)| {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - row[c]
        })
        .sum();
    total / y.len() as f64
}
