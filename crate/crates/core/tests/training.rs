use eoc_core::activations::ActivationKind;
use eoc_core::solver::{solve_init, EocInit};
use eoc_core::trainer::{synthetic_blobs, train, DatasetSpec, Mlp, TrainConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn init(s: f64) -> EocInit {
    solve_init(ActivationKind::Crelu, s, 1.0, 0.7).unwrap()
}

fn config(init: EocInit, depth: usize, width: usize, epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        init,
        depth,
        width,
        epochs,
        lr,
        batch: 32,
        seed: 3,
        dataset: DatasetSpec::blobs(2),
        data_seed: 11,
    }
}

#[test]
fn gradients_match_finite_differences() {
    let data = synthetic_blobs(3, 4, 12, 1.0, 5).unwrap();
    let net = Mlp::new(&init(0.6), 4, 3, 5, 3, 8);
    let (_, grads) = net.loss_and_grad(data.x.view(), &data.y);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-6;
    let mut checked = 0;
    while checked < 50 {
        let layer = rng.random_range(0..net.weights.len());
        let (r, c) = net.weights[layer].dim();
        let (i, j) = (rng.random_range(0..r), rng.random_range(0..c));
        let mut plus = net.clone();
        plus.weights[layer][[i, j]] += h;
        let mut minus = net.clone();
        minus.weights[layer][[i, j]] -= h;
        let fd = (plus.loss(data.x.view(), &data.y) - minus.loss(data.x.view(), &data.y)) / (2.0 * h);
        let g = grads.weights[layer][[i, j]];
        if g.abs() < 1e-6 && fd.abs() < 1e-6 {
            continue;
        }
        assert!((fd - g).abs() <= 1e-4 * g.abs().max(fd.abs()), "layer {layer} ({i},{j}): {g} vs {fd}");
        checked += 1;
    }
}

#[test]
fn weights_follow_the_initialization_law() {
    let init = init(0.85);
    let net = Mlp::new(&init, 64, 3, 256, 10, 2);
    let var = |w: &Array2<f64>| w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64;
    assert!((var(&net.weights[0]) * 64.0 - 1.0).abs() < 0.02);
    assert!((var(&net.weights[1]) * 256.0 / init.sw2 - 1.0).abs() < 0.02);
    assert!(net.biases[0].iter().all(|&b| b == 0.0));
    let b = &net.biases[1];
    let bvar = b.iter().map(|x| x * x).sum::<f64>() / b.len() as f64;
    assert!((bvar / init.sb2 - 1.0).abs() < 0.3);
}

#[test]
fn shallow_network_learns_two_blobs() {
    for s in [0.5, 0.85] {
        let report = train(&config(init(s), 2, 8, 50, 0.05)).unwrap();
        assert!(!report.diverged);
        assert!(report.test_accuracy >= 0.95, "s={s}: {}", report.test_accuracy);
        assert!(report.epochs.last().unwrap().loss < report.epochs[0].loss);
    }
}

#[test]
fn sparsity_at_initialization_matches_target() {
    let mut cfg = config(init(0.85), 10, 256, 1, 1e-4);
    cfg.dataset = DatasetSpec::blobs(10);
    let report = train(&cfg).unwrap();
    assert!((report.init_sparsity - 0.85).abs() < 0.02, "{}", report.init_sparsity);
}

#[test]
fn huge_learning_rate_is_reported_as_divergence() {
    let report = train(&config(EocInit::relu(1.0).unwrap(), 4, 16, 5, 1e200)).unwrap();
    assert!(report.diverged);
    assert!(!report.step_losses.last().unwrap().is_finite());
    assert!(report.step_losses.len() < 5 * 1400 / 32 + 5);
}

#[test]
fn training_is_deterministic() {
    let cfg = config(init(0.7), 3, 16, 3, 0.01);
    let (a, b) = (train(&cfg).unwrap(), train(&cfg).unwrap());
    assert_eq!(a.step_losses, b.step_losses);
    assert_eq!(a.test_accuracy, b.test_accuracy);
}
