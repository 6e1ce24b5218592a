use std::path::Path;

use eoc_core::activations::ActivationSpec;
use eoc_core::finite_width::{nlo_trajectory, theorem1_bound, theorem1_log_bound};
use eoc_core::gaussian::PanelRule;
use eoc_core::jacobian::jacobian_moments;
use eoc_core::maps::{self, correlation_trajectory};
use eoc_core::simulator::{empirical_jacobian, run_backward, run_correlation, run_forward, run_trials, SimConfig};
use eoc_core::solver::{eoc_weight_variance, find_fixed_points, solve_init_with, sparsity_threshold, MSelection};
use eoc_core::trainer::{summarize, train_seeds, DatasetSpec, EpochLog, TrainConfig};
use eoc_core::{ActivationKind, EocError, EocInit};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::error::CliError;
use crate::output::{write_csv, write_json};

/// Window of the running mean used for steps-to-loss.
const LOSS_WINDOW: usize = 10;

#[derive(Serialize)]
struct InitView {
    activation: ActivationKind,
    tau: f64,
    m: f64,
    sw2: f64,
    sb2: f64,
    q_star: f64,
    s: f64,
    v_prime_at_fp: f64,
}

impl From<&EocInit> for InitView {
    fn from(init: &EocInit) -> Self {
        InitView {
            activation: init.spec.kind,
            tau: init.spec.tau,
            m: init.spec.m,
            sw2: init.sw2,
            sb2: init.sb2,
            q_star: init.q_star,
            s: init.s,
            v_prime_at_fp: init.v_prime_at_fp,
        }
    }
}

pub fn solve(args: &SolveArgs, out: Option<&Path>) -> Result<(), CliError> {
    let init = args.init.resolve()?;
    let diagnostics = init.diagnostics()?;
    write_json(
        json!({
            "command": "solve",
            "m_rule": args.init.rule(),
            "init": InitView::from(&init),
            "diagnostics": diagnostics,
            "nlo_bound": theorem1_bound(&init).ok(),
        }),
        out,
    )
}

#[derive(Serialize)]
struct SweepRow {
    quantity: &'static str,
    s: f64,
    q_star: f64,
    m: f64,
    q: f64,
    value: Option<f64>,
}

fn grid_value(quantity: Quantity, kind: ActivationKind, s: f64, q_star: f64, m: f64) -> eoc_core::Result<Option<f64>> {
    let tau = sparsity_threshold(kind, s, q_star)?;
    let spec = ActivationSpec::new(kind, tau, m)?;
    let sw2 = eoc_weight_variance(&spec, q_star)?;
    Ok(match quantity {
        Quantity::VPrime => Some(maps::v_prime(&spec, sw2, q_star)?),
        Quantity::VPrimePrime => Some(maps::v_prime2(&spec, sw2, q_star)?),
        Quantity::Chi1Prime => Some(maps::chi1_prime(&spec, sw2, q_star)?),
        Quantity::NloBound => match solve_init_with(kind, s, q_star, MSelection::Fixed(m)) {
            Ok(init) => theorem1_log_bound(&init).ok(),
            Err(EocError::Infeasible { .. }) => None,
            Err(e) => return Err(e),
        },
        Quantity::VmapCurve => unreachable!("curves are not grid quantities"),
    })
}

pub fn sweep(args: &SweepArgs, out: Option<&Path>) -> Result<(), CliError> {
    if args.activation == ActivationKind::Relu {
        return Err(CliError::Usage("sweep needs activation crelu or cst".into()));
    }
    if args.s_list.is_empty() {
        return Err(CliError::Usage("sweep needs at least one sparsity level".into()));
    }
    args.m_range.validate("m_range").map_err(CliError::Usage)?;
    let kind = args.activation;
    let name = args.quantity.name();
    let rows: Vec<SweepRow> = if args.quantity == Quantity::VmapCurve {
        args.q_range.validate("q_range").map_err(CliError::Usage)?;
        let cells: Vec<(f64, f64)> = args
            .s_list
            .iter()
            .flat_map(|&s| args.m_range.points().into_iter().map(move |m| (s, m)))
            .collect();
        let curves = cells
            .par_iter()
            .map(|&(s, m)| {
                let init = match solve_init_with(kind, s, args.qstar, MSelection::Fixed(m)) {
                    Ok(init) => Some(init),
                    Err(EocError::Infeasible { .. }) => None,
                    Err(e) => return Err(e),
                };
                args.q_range
                    .points()
                    .into_iter()
                    .map(|q| {
                        let value = init.as_ref().map(|i| i.v(q)).transpose()?;
                        Ok(SweepRow { quantity: name, s, q_star: args.qstar, m, q, value })
                    })
                    .collect::<eoc_core::Result<Vec<_>>>()
            })
            .collect::<eoc_core::Result<Vec<_>>>()?;
        curves.into_iter().flatten().collect()
    } else {
        args.qstar_range.validate("qstar_range").map_err(CliError::Usage)?;
        let cells: Vec<(f64, f64, f64)> = args
            .s_list
            .iter()
            .flat_map(|&s| {
                args.qstar_range
                    .points()
                    .into_iter()
                    .flat_map(move |q| args.m_range.points().into_iter().map(move |m| (s, q, m)))
            })
            .collect();
        cells
            .par_iter()
            .map(|&(s, q_star, m)| {
                let value = grid_value(args.quantity, kind, s, q_star, m)?;
                Ok(SweepRow { quantity: name, s, q_star, m, q: q_star, value })
            })
            .collect::<eoc_core::Result<Vec<_>>>()?
    };
    write_csv(&rows, out)
}

pub fn fixed_points(args: &FixedPointArgs, out: Option<&Path>) -> Result<(), CliError> {
    let init = args.init.resolve()?;
    let lo = args.lo.unwrap_or(init.q_star / 20.0);
    let hi = args.hi.unwrap_or(init.q_star * 20.0);
    let report = find_fixed_points(&init, lo, hi)?;
    write_json(
        json!({
            "command": "fixed-points",
            "init": InitView::from(&init),
            "fixed_points": report,
        }),
        out,
    )
}

pub fn nlo(args: &NloArgs, out: Option<&Path>) -> Result<(), CliError> {
    let init = args.init.resolve()?;
    write_csv(&nlo_trajectory(&init, args.depth)?, out)
}

fn sim_config(init: EocInit, net: &NetworkArgs) -> SimConfig {
    let mut config = SimConfig::new(init, net.depth, net.width, net.seed);
    config.batch = net.batch;
    config
}

#[derive(Serialize)]
struct SimRow {
    trial: usize,
    layer: usize,
    q_hat: f64,
    sparsity_hat: f64,
    chi1_hat: f64,
    v_hat: Option<f64>,
}

pub fn simulate(args: &SimulateArgs, out: Option<&Path>) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    let mut config = sim_config(args.init.resolve()?, &args.net);
    config.measure_backward = args.backward;
    config.input_variance = args.input_variance;
    let runs = if args.backward {
        run_trials(&config, args.trials, run_backward)?
    } else {
        run_trials(&config, args.trials, run_forward)?
    };
    let rows: Vec<SimRow> = runs
        .iter()
        .enumerate()
        .flat_map(|(trial, stats)| {
            stats.iter().map(move |s| SimRow {
                trial,
                layer: s.layer,
                q_hat: s.q_hat,
                sparsity_hat: s.sparsity_hat,
                chi1_hat: s.chi1_hat,
                v_hat: s.v_hat,
            })
        })
        .collect();
    write_csv(&rows, out)
}

#[derive(Serialize)]
struct CorrelationRow {
    layer: usize,
    rho_hat: Option<f64>,
    rho_map: f64,
}

pub fn correlate(args: &CorrelateArgs, out: Option<&Path>) -> Result<(), CliError> {
    let init = args.init.resolve()?;
    let config = sim_config(init, &args.net);
    let stats = run_correlation(&config, args.rho0)?;
    let predicted = correlation_trajectory(
        &init.spec,
        init.sw2,
        init.sb2,
        init.q_star,
        args.rho0,
        stats.len().saturating_sub(1),
        &PanelRule::default(),
    )?;
    let rows: Vec<CorrelationRow> = stats
        .iter()
        .zip(&predicted)
        .map(|(s, p)| CorrelationRow {
            layer: s.layer,
            rho_hat: s.rho_hat,
            rho_map: p.rho,
        })
        .collect();
    write_csv(&rows, out)
}

pub fn jacobian(args: &JacobianArgs, out: Option<&Path>) -> Result<(), CliError> {
    let init = args.init.resolve()?;
    let moments = jacobian_moments(&init, args.depth)?;
    let empirical = match args.width {
        Some(width) => {
            if args.trials == 0 {
                return Err(CliError::Usage("trials must be at least 1".into()));
            }
            let samples = (0..args.trials as u64)
                .into_par_iter()
                .map(|t| empirical_jacobian(&init, args.depth, width, args.seed.wrapping_add(t)))
                .collect::<eoc_core::Result<Vec<_>>>()?;
            let n = samples.len() as f64;
            let m1 = samples.iter().map(|e| e.m1).sum::<f64>() / n;
            let m2 = samples.iter().map(|e| e.m2).sum::<f64>() / n;
            Some(json!({
                "width": width,
                "trials": args.trials,
                "m1": m1,
                "m2": m2,
                "variance": m2 - m1 * m1,
            }))
        }
        None => None,
    };
    write_json(
        json!({
            "command": "jacobian",
            "init": InitView::from(&init),
            "moments": moments,
            "empirical": empirical,
        }),
        out,
    )
}

#[derive(Serialize)]
struct LogRow {
    seed: u64,
    epoch: usize,
    step: usize,
    loss: f64,
    val_acc: f64,
    sparsity: f64,
}

impl LogRow {
    fn new(seed: u64, e: &EpochLog) -> Self {
        LogRow {
            seed,
            epoch: e.epoch,
            step: e.step,
            loss: e.loss,
            val_acc: e.val_acc,
            sparsity: e.sparsity,
        }
    }
}

pub fn train(args: &TrainArgs, out: Option<&Path>) -> Result<(), CliError> {
    if args.seeds == 0 {
        return Err(CliError::Usage("seeds must be at least 1".into()));
    }
    let dataset = match args.dataset {
        DatasetKind::SyntheticBlobs => DatasetSpec::SyntheticBlobs {
            classes: args.classes,
            dim: args.dim,
            samples: args.samples,
            separation: args.separation,
        },
        DatasetKind::SmallDigits => DatasetSpec::SmallDigits {
            path: args
                .data_path
                .clone()
                .ok_or_else(|| CliError::Usage("small-digits needs --data-path".into()))?,
        },
    };
    let config = TrainConfig {
        init: args.init.resolve()?,
        depth: args.depth,
        width: args.width,
        epochs: args.epochs,
        lr: args.lr,
        batch: args.batch,
        seed: args.seed,
        dataset,
        data_seed: args.data_seed,
    };
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|i| args.seed.wrapping_add(i)).collect();
    let reports = train_seeds(&config, &seeds)?;

    if let Some(path) = &args.log {
        let rows: Vec<LogRow> = seeds
            .iter()
            .zip(&reports)
            .flat_map(|(&seed, r)| r.epochs.iter().map(move |e| LogRow::new(seed, e)))
            .collect();
        write_csv(&rows, Some(path))?;
    }

    let steps: Vec<Option<usize>> = reports
        .iter()
        .map(|r| r.steps_to_loss(args.loss_threshold, LOSS_WINDOW))
        .collect();
    let runs: Vec<_> = seeds
        .iter()
        .zip(&reports)
        .zip(&steps)
        .map(|((seed, r), steps)| {
            json!({
                "seed": seed,
                "test_accuracy": r.test_accuracy,
                "init_sparsity": r.init_sparsity,
                "final_sparsity": r.final_sparsity,
                "diverged": r.diverged,
                "steps": r.step_losses.len(),
                "steps_to_loss": steps,
                "final_loss": r.epochs.last().map(|e| e.loss),
            })
        })
        .collect();
    let accuracy: Vec<f64> = reports.iter().map(|r| r.test_accuracy).collect();
    let reached: Vec<f64> = steps.iter().flatten().map(|&s| s as f64).collect();
    write_json(
        json!({
            "command": "train",
            "init": InitView::from(&config.init),
            "config": args,
            "loss_window": LOSS_WINDOW,
            "runs": runs,
            "summary": {
                "test_accuracy": summarize(&accuracy),
                "steps_to_loss": summarize(&reached),
                "reached_loss": reached.len(),
            },
        }),
        out,
    )?;
    let diverged = reports.iter().filter(|r| r.diverged).count();
    if diverged > 0 {
        return Err(CliError::Diverged(format!("{diverged} of {} runs diverged", reports.len())));
    }
    Ok(())
}
