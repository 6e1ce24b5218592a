//! Finite-width Monte Carlo networks.
//!
//! A network of `depth` layers and equal width `N` is drawn with
//! `W(ℓ) ~ N(0, σ_w²/N)` and `b(ℓ) ~ N(0, σ_b²)` for `ℓ ≥ 2`. Layer 1 is affine
//! only: it maps the normalized input to preactivations with `W(1) ~ N(0, 1/N)`
//! and no bias, so `h(1)` has variance equal to the input variance. The
//! activation is applied from layer 2 onward, `h(ℓ) = W(ℓ) φ(h(ℓ−1)) + b(ℓ)`.
//!
//! Every layer draws from its own ChaCha stream, so changing the width of one
//! experiment does not reshuffle the draws of the others and the backward pass
//! can regenerate weights instead of storing them.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationSpec;
use crate::error::{EocError, Result};
use crate::maps;
use crate::solver::EocInit;

pub const DEFAULT_BATCH: usize = 64;

const INPUT_STREAM: u64 = 0;
const TOP_ERROR_STREAM: u64 = 1 << 40;
const ORTHOGONAL_INPUT_STREAM: u64 = (1 << 40) + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub init: EocInit,
    pub depth: usize,
    pub width: usize,
    pub batch: usize,
    pub seed: u64,
    pub measure_backward: bool,
    /// Variance of the normalized inputs; `q*` when absent.
    #[serde(default)]
    pub input_variance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer: usize,
    pub q_hat: f64,
    pub sparsity_hat: f64,
    pub chi1_hat: f64,
    pub v_hat: Option<f64>,
    pub rho_hat: Option<f64>,
}

impl SimConfig {
    pub fn new(init: EocInit, depth: usize, width: usize, seed: u64) -> Self {
        SimConfig {
            init,
            depth,
            width,
            batch: DEFAULT_BATCH,
            seed,
            measure_backward: false,
            input_variance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(EocError::Config(format!("depth must be >= 2, got {}", self.depth)));
        }
        if self.width < 8 {
            return Err(EocError::Config(format!("width must be >= 8, got {}", self.width)));
        }
        if self.batch < 1 {
            return Err(EocError::Config("batch must be >= 1".into()));
        }
        if let Some(v) = self.input_variance {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EocError::domain("input_variance", v, "must be positive"));
            }
        }
        self.init.spec.validate()
    }

    fn input_variance(&self) -> f64 {
        self.input_variance.unwrap_or(self.init.q_star)
    }

    /// The same experiment under an independent seed.
    pub fn for_trial(&self, trial: u64) -> Self {
        SimConfig {
            seed: trial_seed(self.seed, trial),
            ..*self
        }
    }
}

/// SplitMix64 finalizer, used to derive well-separated trial seeds.
fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed.wrapping_add(trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sd: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || sd * rng.sample::<f64, _>(StandardNormal))
}

/// Rescale each column to empirical mean 0 and (biased) variance `var`.
fn standardize_columns(x: &mut Array2<f64>, var: f64) {
    for mut col in x.columns_mut() {
        let n = col.len() as f64;
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
        let sd = (col.mapv(|v| v * v).sum() / n).sqrt();
        col.mapv_inplace(|v| v * var.sqrt() / sd);
    }
}

fn layer_params(config: &SimConfig, layer: usize) -> (Array2<f64>, Array1<f64>) {
    let n = config.width;
    let mut rng = stream(config.seed, layer as u64);
    if layer == 1 {
        let w = gaussian_matrix(&mut rng, n, n, (1.0 / n as f64).sqrt());
        return (w, Array1::zeros(n));
    }
    let init = &config.init;
    let w = gaussian_matrix(&mut rng, n, n, (init.sw2 / n as f64).sqrt());
    let sb = init.sb2.sqrt();
    let b = Array1::from_shape_simple_fn(n, || sb * rng.sample::<f64, _>(StandardNormal));
    (w, b)
}

fn apply(spec: &ActivationSpec, h: &Array2<f64>) -> Array2<f64> {
    h.mapv(|v| spec.eval(v))
}

/// Preactivations `h(1), …, h(depth)` for the given input columns.
fn forward(config: &SimConfig, x0: ArrayView2<f64>) -> Vec<Array2<f64>> {
    let spec = config.init.spec;
    let mut out = Vec::with_capacity(config.depth);
    let (w1, _) = layer_params(config, 1);
    out.push(w1.dot(&x0));
    for layer in 2..=config.depth {
        let (w, b) = layer_params(config, layer);
        let x = apply(&spec, out.last().expect("layer 1 is present"));
        let mut h = w.dot(&x);
        h += &b.insert_axis(Axis(1));
        out.push(h);
    }
    out
}

fn inputs(config: &SimConfig) -> Array2<f64> {
    let mut rng = stream(config.seed, INPUT_STREAM);
    let mut x = gaussian_matrix(&mut rng, config.width, config.batch, 1.0);
    standardize_columns(&mut x, config.input_variance());
    x
}

fn layer_stats(config: &SimConfig, layer: usize, h: &Array2<f64>) -> Result<LayerStats> {
    let init = &config.init;
    let count = h.len() as f64;
    let q_hat = h.mapv(|v| v * v).sum() / count;
    let zeros = h.iter().filter(|&&v| init.spec.eval(v) == 0.0).count();
    Ok(LayerStats {
        layer,
        q_hat,
        sparsity_hat: zeros as f64 / count,
        chi1_hat: if q_hat > 0.0 {
            maps::chi1(&init.spec, init.sw2, q_hat)?
        } else {
            0.0
        },
        v_hat: None,
        rho_hat: None,
    })
}

/// Backward second moments `E[δ(ℓ)²]` for `ℓ = 1..=depth`, starting from a unit
/// Gaussian error at the top: `δ(ℓ) = φ′(h(ℓ)) ⊙ W(ℓ+1)ᵀ δ(ℓ+1)`.
fn backward(config: &SimConfig, hs: &[Array2<f64>]) -> Vec<f64> {
    let spec = config.init.spec;
    let depth = config.depth;
    let mut rng = stream(config.seed, TOP_ERROR_STREAM);
    let top = &hs[depth - 1];
    let mut delta = gaussian_matrix(&mut rng, top.nrows(), top.ncols(), 1.0);
    let mut v = vec![0.0; depth];
    v[depth - 1] = mean_square(&delta);
    for layer in (1..depth).rev() {
        let (w, _) = layer_params(config, layer + 1);
        let mut next = w.t().dot(&delta);
        Zip::from(&mut next)
            .and(&hs[layer - 1])
            .for_each(|d, &h| *d *= spec.eval_deriv(h));
        delta = next;
        v[layer - 1] = mean_square(&delta);
    }
    v
}

fn mean_square(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64
}

/// Per-layer statistics of one network; backward moments are included when
/// `measure_backward` is set.
pub fn run_forward(config: &SimConfig) -> Result<Vec<LayerStats>> {
    config.validate()?;
    let hs = forward(config, inputs(config).view());
    let mut stats = hs
        .iter()
        .enumerate()
        .map(|(i, h)| layer_stats(config, i + 1, h))
        .collect::<Result<Vec<_>>>()?;
    if config.measure_backward {
        for (st, v) in stats.iter_mut().zip(backward(config, &hs)) {
            st.v_hat = Some(v);
        }
    }
    Ok(stats)
}

/// [`run_forward`] with backward moments; `measure_backward` must be set.
pub fn run_backward(config: &SimConfig) -> Result<Vec<LayerStats>> {
    if !config.measure_backward {
        return Err(EocError::Config(
            "run_backward needs measure_backward = true".into(),
        ));
    }
    run_forward(config)
}

/// Propagates `batch` input pairs with exact empirical correlation `rho0`
/// through shared weights; `rho_hat` pools the pairs at each layer.
pub fn run_correlation(config: &SimConfig, rho0: f64) -> Result<Vec<LayerStats>> {
    config.validate()?;
    if !(rho0.abs() <= 1.0) {
        return Err(EocError::domain("rho0", rho0, "must lie in [-1, 1]"));
    }
    let var = config.input_variance();
    let xa = inputs(config);
    let mut rng = stream(config.seed, ORTHOGONAL_INPUT_STREAM);
    let mut xp = gaussian_matrix(&mut rng, config.width, config.batch, 1.0);
    standardize_columns(&mut xp, 1.0);
    for (mut p, a) in xp.columns_mut().into_iter().zip(xa.columns()) {
        let coef = p.dot(&a) / a.dot(&a);
        p.scaled_add(-coef, &a);
    }
    standardize_columns(&mut xp, var);
    let xb = &xa * rho0 + &xp * (1.0 - rho0 * rho0).sqrt();

    let b = config.batch;
    let mut x0 = Array2::zeros((config.width, 2 * b));
    x0.slice_mut(s![.., ..b]).assign(&xa);
    x0.slice_mut(s![.., b..]).assign(&xb);

    let hs = forward(config, x0.view());
    hs.iter()
        .enumerate()
        .map(|(i, h)| {
            let mut st = layer_stats(config, i + 1, h)?;
            let (ha, hb) = (h.slice(s![.., ..b]), h.slice(s![.., b..]));
            let cross = (&ha * &hb).sum();
            let norm = (ha.mapv(|v| v * v).sum() * hb.mapv(|v| v * v).sum()).sqrt();
            st.rho_hat = Some(if rho0 == 1.0 { cross / norm } else { (cross / norm).clamp(-1.0, 1.0) });
            Ok(st)
        })
        .collect()
}

/// Runs `trials` independent networks in parallel; results are in trial order.
pub fn run_trials<F>(config: &SimConfig, trials: usize, run: F) -> Result<Vec<Vec<LayerStats>>>
where
    F: Fn(&SimConfig) -> Result<Vec<LayerStats>> + Sync,
{
    (0..trials as u64)
        .into_par_iter()
        .map(|t| run(&config.for_trial(t)))
        .collect()
}

/// Mean of `f` over layers `from..=to` (1-based, inclusive).
pub fn layer_mean<F: Fn(&LayerStats) -> f64>(stats: &[LayerStats], from: usize, to: usize, f: F) -> f64 {
    let picked: Vec<f64> = stats
        .iter()
        .filter(|s| s.layer >= from && s.layer <= to)
        .map(f)
        .collect();
    picked.iter().sum::<f64>() / picked.len() as f64
}

/// Empirical spectral moments of `JJᵀ` for `J = ∏ D(ℓ) W(ℓ)` over `depth`
/// activated layers, fed by `x = φ(h₀)` with `h₀ ~ N(0, q*)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalJacobian {
    /// `tr(JJᵀ)/N`
    pub m1: f64,
    /// `tr((JJᵀ)²)/N`
    pub m2: f64,
}

impl EmpiricalJacobian {
    pub fn variance(&self) -> f64 {
        self.m2 - self.m1 * self.m1
    }
}

pub fn empirical_jacobian(init: &EocInit, depth: usize, width: usize, seed: u64) -> Result<EmpiricalJacobian> {
    let config = SimConfig::new(*init, depth.max(2), width, seed);
    config.validate()?;
    let spec = init.spec;
    let n = width;
    let mut rng = stream(seed, INPUT_STREAM);
    let sd = init.q_star.sqrt();
    let mut x = Array1::from_shape_simple_fn(n, || spec.eval(sd * rng.sample::<f64, _>(StandardNormal)));
    let mut jac = Array2::<f64>::eye(n);
    for layer in 2..=depth + 1 {
        let (w, b) = layer_params(&config, layer);
        let h = w.dot(&x) + &b;
        let mut wj = w.dot(&jac);
        for (mut row, &hi) in wj.rows_mut().into_iter().zip(h.iter()) {
            row *= spec.eval_deriv(hi);
        }
        jac = wj;
        x = h.mapv(|v| spec.eval(v));
    }
    let jjt = jac.dot(&jac.t());
    let nf = n as f64;
    Ok(EmpiricalJacobian {
        m1: jjt.diag().sum() / nf,
        m2: jjt.iter().map(|v| v * v).sum::<f64>() / nf,
    })
}
