use eoc_core::activations::{ActivationKind, ActivationSpec};
use eoc_core::finite_width::nlo_trajectory;
use eoc_core::gaussian::PanelRule;
use eoc_core::jacobian::{error_moment_trajectory_equal, jacobian_moments};
use eoc_core::maps::correlation_trajectory;
use eoc_core::simulator::{
    empirical_jacobian, layer_mean, LayerStats, run_backward, run_correlation, run_forward, run_trials, SimConfig,
};
use eoc_core::solver::{solve_init, solve_init_with, EocInit, MSelection};

fn crelu(q_star: f64, v: f64) -> EocInit {
    solve_init(ActivationKind::Crelu, 0.85, q_star, v).unwrap()
}

fn fixed_m_init(m: f64) -> EocInit {
    solve_init_with(ActivationKind::Crelu, 0.85, 1.0, MSelection::Fixed(m)).unwrap()
}

#[test]
fn wide_network_tracks_fixed_point() {
    for q_star in [1.0, 2.0, 3.0] {
        let stats = run_forward(&SimConfig::new(crelu(q_star, 0.7), 20, 1000, 3)).unwrap();
        let q = layer_mean(&stats, 5, 20, |s| s.q_hat);
        let sp = layer_mean(&stats, 5, 20, |s| s.sparsity_hat);
        println!("q*={q_star}: q_hat {q:.4}, sparsity {sp:.4}");
        assert!((q / q_star - 1.0).abs() < 0.05);
        assert!((sp - 0.85).abs() < 0.02);
    }
}

/// Per-layer mean and standard error of `f` across independent trials.
fn across_trials<F: Fn(&LayerStats) -> f64>(runs: &[Vec<LayerStats>], f: F) -> Vec<(f64, f64)> {
    let n = runs.len() as f64;
    (0..runs[0].len())
        .map(|l| {
            let xs: Vec<f64> = runs.iter().map(|r| f(&r[l])).collect();
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        })
        .collect()
}

#[test]
fn relu_preserves_variance() {
    let init = EocInit::relu(1.5).unwrap();
    let mut config = SimConfig::new(init, 12, 400, 5);
    config.batch = 16;
    let runs = run_trials(&config, 32, run_forward).unwrap();
    for (layer, (mean, se)) in across_trials(&runs, |s| s.q_hat).into_iter().enumerate() {
        assert!((mean - 1.5).abs() < 4.0 * se + 1e-3, "layer {}: {mean} ± {se}", layer + 1);
    }
}

#[test]
fn variance_above_both_fixed_points_follows_the_map() {
    // From q = 4 the map iteration returns to the stable fixed point near 3.48;
    // from q = 1.5 it leaves q* = 1 and climbs to the same point.
    let init = fixed_m_init(2.0);
    let predicted = |mut q: f64, layers: usize| {
        for _ in 1..layers {
            q = init.v(q).unwrap();
        }
        q
    };
    for (start, seed) in [(4.0, 9), (1.5, 10)] {
        let mut config = SimConfig::new(init, 20, 1000, seed);
        config.input_variance = Some(start);
        let runs = run_trials(&config, 6, run_forward).unwrap();
        let traj = across_trials(&runs, |s| s.q_hat);
        let target = predicted(start, 20);
        let late = traj[14..].iter().map(|t| t.0).sum::<f64>() / 6.0;
        println!("start {start}: late mean {late:.4}, map {target:.4}");
        assert!((late / target - 1.0).abs() < 0.1);
        assert_eq!((traj[19].0 - start).signum(), (target - start).signum());
    }
}

fn backward_ratios(init: EocInit, seed: u64) -> Vec<f64> {
    let mut config = SimConfig::new(init, 12, 1000, seed);
    config.measure_backward = true;
    let runs = run_trials(&config, 8, run_backward).unwrap();
    let v = across_trials(&runs, |s| s.v_hat.unwrap());
    v.windows(2).map(|w| w[0].0 / w[1].0).collect()
}

#[test]
fn backward_moments_are_flat_at_eoc() {
    for (i, ratio) in backward_ratios(crelu(1.0, 0.7), 21).into_iter().enumerate() {
        assert!((ratio - 1.0).abs() < 0.1, "layer {}: {ratio}", i + 1);
    }
}

#[test]
fn backward_moments_decay_at_reduced_slope() {
    let init = crelu(1.0, 0.7).with_scaled_weights(0.8).unwrap();
    for (i, ratio) in backward_ratios(init, 22).into_iter().enumerate() {
        assert!((ratio - 0.8).abs() < 0.05, "layer {}: {ratio}", i + 1);
    }
}

#[test]
fn two_layer_backward_ratio_is_empirical_slope() {
    let mut config = SimConfig::new(crelu(2.0, 0.7), 2, 500, 4);
    config.measure_backward = true;
    let stats = run_backward(&config).unwrap();
    let ratio = stats[0].v_hat.unwrap() / stats[1].v_hat.unwrap();
    assert!((ratio - stats[0].chi1_hat).abs() < 0.05, "{ratio} vs {}", stats[0].chi1_hat);
}

#[test]
fn correlations_follow_the_correlation_map() {
    let init = crelu(1.0, 0.7);
    let config = SimConfig::new(init, 10, 2000, 8);
    let stats = run_correlation(&config, 0.5).unwrap();
    let predicted = correlation_trajectory(
        &init.spec,
        init.sw2,
        init.sb2,
        init.q_star,
        0.5,
        9,
        &PanelRule::default(),
    )
    .unwrap();
    for (s, p) in stats.iter().zip(&predicted) {
        println!("layer {}: {:.4} vs {:.4}", s.layer, s.rho_hat.unwrap(), p.rho);
        assert!((s.rho_hat.unwrap() - p.rho).abs() < 0.05);
    }
}

#[test]
fn odd_activation_keeps_orthogonal_inputs_uncorrelated() {
    let spec = ActivationSpec::cst(0.5, 1.5).unwrap();
    let sw2 = 1.0 / spec.even_moment(1, 1.0);
    let init = EocInit::from_parts(spec, 1.0, sw2, 0.0).unwrap();
    let stats = run_correlation(&SimConfig::new(init, 8, 1000, 2), 0.0).unwrap();
    for s in &stats {
        assert!(s.rho_hat.unwrap().abs() < 0.03, "layer {}: {:?}", s.layer, s.rho_hat);
    }
}

#[test]
fn fluctuations_shrink_with_width() {
    let init = crelu(1.0, 0.7);
    let spread = |width: usize| {
        let mut config = SimConfig::new(init, 10, width, 30);
        config.batch = 8;
        let runs = run_trials(&config, 24, run_forward).unwrap();
        let devs: Vec<f64> = runs.iter().map(|r| r[9].q_hat - init.q_star).collect();
        (devs.iter().map(|d| d * d).sum::<f64>() / devs.len() as f64).sqrt()
    };
    let (a, b) = (spread(250), spread(1000));
    println!("rms deviation 250: {a:.5}, 1000: {b:.5}, ratio {:.3}", a / b);
    assert!((1.5..=3.0).contains(&(a / b)));
}

#[test]
fn finite_width_bias_has_predicted_sign() {
    let init = crelu(1.0, 0.9);
    let depth = 30;
    let q1 = nlo_trajectory(&init, depth).unwrap();
    let mut config = SimConfig::new(init, depth, 100, 77);
    config.batch = 16;
    let runs = run_trials(&config, 200, run_forward).unwrap();
    let devs: Vec<f64> = runs.iter().map(|r| layer_mean(r, 10, depth, |s| s.q_hat) - init.q_star).collect();
    let n = devs.len() as f64;
    let mean = devs.iter().sum::<f64>() / n;
    let se = (devs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let predicted = q1[depth - 1].q1 / 100.0;
    println!("mean deviation {mean:.5} ± {se:.5}, predicted q1/n {predicted:.5}");
    assert!(mean * predicted.signum() > 3.0 * se);
}

#[test]
fn empirical_jacobian_matches_moments() {
    let init = EocInit::relu(1.0).unwrap();
    let theory = jacobian_moments(&init, 10).unwrap();
    let trials = 4;
    let (mut m1, mut m2) = (0.0, 0.0);
    for seed in 0..trials {
        let e = empirical_jacobian(&init, 10, 500, seed).unwrap();
        m1 += e.m1 / trials as f64;
        m2 += e.m2 / trials as f64;
    }
    let sigma = m2 - m1 * m1;
    println!("m1 {m1:.4}, m2 {m2:.4}, sigma {sigma:.4} vs {}", theory.sigma_jjt);
    assert!((m1 - theory.m1).abs() < 0.1);
    assert!((sigma / theory.sigma_jjt - 1.0).abs() < 0.1);
}

#[test]
fn error_moments_explode_at_unstable_init() {
    let mut config = SimConfig::new(fixed_m_init(2.0), 100, 200, 12);
    config.input_variance = Some(2.0);
    config.batch = 16;
    let stats = run_forward(&config).unwrap();
    let chis: Vec<f64> = stats.iter().map(|s| s.chi1_hat).collect();
    let v = error_moment_trajectory_equal(&chis, 1.0);
    println!("final q_hat {:.3}, product {:.3e}", stats[99].q_hat, v[100]);
    assert!(v[100] > 10.0);
}
