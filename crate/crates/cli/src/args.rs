use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eoc_core::solver::{solve_init_with, MSelection};
use eoc_core::{ActivationKind, EocInit};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "eoc-lab", version, about = "Edge-of-chaos initialization for sparsifying activations")]
pub struct Cli {
    /// Read the subcommand's arguments from a JSON object instead of flags.
    /// Keys are the long flag names with dashes replaced by underscores.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Write the command's output to this file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for an EoC initialization and print it with its map diagnostics (JSON).
    Solve(SolveArgs),
    /// Evaluate a map quantity over a (q*, m) grid (CSV).
    Sweep(SweepArgs),
    /// Locate all fixed points of the variance map (JSON).
    FixedPoints(FixedPointArgs),
    /// Next-leading-order variance corrections per layer (CSV).
    Nlo(NloArgs),
    /// Monte Carlo forward (and optionally backward) pass statistics (CSV).
    Simulate(SimulateArgs),
    /// Correlation propagation of input pairs, simulated and predicted (CSV).
    Correlate(CorrelateArgs),
    /// Spectral moments of the input-output Jacobian (JSON).
    Jacobian(JacobianArgs),
    /// Train a small MLP at the chosen initialization (JSON, optional CSV log).
    Train(TrainArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MFrom {
    /// Borrow `m` from the CReLU solve at the same sparsity, `q*` and slope target.
    Crelu,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InitArgs {
    /// relu, crelu or cst.
    #[arg(long, default_value = "crelu")]
    pub activation: ActivationKind,
    /// Target fraction of zero activations at q*.
    #[arg(short = 's', long, default_value_t = 0.85)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 1.0)]
    pub qstar: f64,
    /// Target V'(q*) used to pick the clip width m.
    #[arg(long, default_value_t = 0.7)]
    pub vprime: f64,
    #[arg(long, value_enum, conflicts_with_all = ["m", "curvature"])]
    pub m_from: Option<MFrom>,
    /// Use this clip width instead of solving for it.
    #[arg(long, conflicts_with = "curvature")]
    pub m: Option<f64>,
    /// Solve for the m that gives this V''(q*) instead of a slope target.
    #[arg(long)]
    pub curvature: Option<f64>,
}

impl InitArgs {
    pub fn rule(&self) -> MSelection {
        if let Some(m) = self.m {
            MSelection::Fixed(m)
        } else if let Some(c) = self.curvature {
            MSelection::CurvatureTarget(c)
        } else if self.m_from == Some(MFrom::Crelu) {
            MSelection::CreluMatched(self.vprime)
        } else {
            MSelection::SlopeTarget(self.vprime)
        }
    }

    pub fn resolve(&self) -> eoc_core::Result<EocInit> {
        match self.activation {
            ActivationKind::Relu => EocInit::relu(self.qstar),
            kind => solve_init_with(kind, self.sparsity, self.qstar, self.rule()),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub init: InitArgs,
}

/// `lo,hi,steps` on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Range {
    pub fn points(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.lo + step * i as f64).collect()
    }

    pub fn validate(&self, name: &str) -> Result<(), String> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(format!("{name}: need finite lo < hi, got {} and {}", self.lo, self.hi));
        }
        if self.steps < 2 {
            return Err(format!("{name}: need at least 2 steps, got {}", self.steps));
        }
        Ok(())
    }
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected lo,hi,steps, got '{s}'"));
        }
        let num = |p: &str| p.parse::<f64>().map_err(|e| format!("'{p}': {e}"));
        Ok(Range {
            lo: num(parts[0])?,
            hi: num(parts[1])?,
            steps: parts[2].parse().map_err(|e| format!("'{}': {e}", parts[2]))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Quantity {
    #[value(name = "vprime")]
    #[serde(rename = "vprime", alias = "Vprime")]
    VPrime,
    #[value(name = "vprimeprime")]
    #[serde(rename = "vprimeprime", alias = "Vprimeprime")]
    VPrimePrime,
    #[value(name = "chi1prime")]
    #[serde(rename = "chi1prime")]
    Chi1Prime,
    /// Natural log of the depth-uniform bound on the 1/n variance correction.
    #[value(name = "nlo_bound", alias = "nlo-bound")]
    #[serde(rename = "nlo_bound")]
    NloBound,
    /// V(q) over `--q-range` for each m, at EoC parameters solved at `--qstar`.
    #[value(name = "vmap_curve", alias = "vmap-curve")]
    #[serde(rename = "vmap_curve")]
    VmapCurve,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::VPrime => "vprime",
            Quantity::VPrimePrime => "vprimeprime",
            Quantity::Chi1Prime => "chi1prime",
            Quantity::NloBound => "nlo_bound",
            Quantity::VmapCurve => "vmap_curve",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long, value_enum, ignore_case = true)]
    pub quantity: Quantity,
    /// crelu or cst.
    #[arg(long, default_value = "crelu")]
    pub activation: ActivationKind,
    /// Comma-separated sparsity levels.
    #[arg(short = 's', long = "sparsity", value_delimiter = ',', default_value = "0.85")]
    pub s_list: Vec<f64>,
    #[arg(long, default_value = "0.5,3,26", value_name = "LO,HI,STEPS")]
    pub qstar_range: Range,
    #[arg(long, default_value = "0.5,4,36", value_name = "LO,HI,STEPS")]
    pub m_range: Range,
    /// Fixed-point variance for `vmap_curve`.
    #[arg(long, default_value_t = 1.0)]
    pub qstar: f64,
    /// Curve abscissae for `vmap_curve`.
    #[arg(long, default_value = "0.05,5,100", value_name = "LO,HI,STEPS")]
    pub q_range: Range,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FixedPointArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub init: InitArgs,
    /// Lower end of the search interval [default: q*/20].
    #[arg(long)]
    pub lo: Option<f64>,
    /// Upper end of the search interval [default: 20 q*].
    #[arg(long)]
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct NloArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub init: InitArgs,
    #[arg(long, default_value_t = 50)]
    pub depth: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct NetworkArgs {
    #[arg(long, default_value_t = 20)]
    pub depth: usize,
    #[arg(long, default_value_t = 1000)]
    pub width: usize,
    /// Number of input columns propagated together.
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub init: InitArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub net: NetworkArgs,
    /// Independent networks, each seeded from `--seed`.
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// Variance of the normalized inputs [default: q*].
    #[arg(long)]
    pub input_variance: Option<f64>,
    /// Also propagate errors backward and report their second moments.
    #[arg(long)]
    pub backward: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorrelateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub init: InitArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub net: NetworkArgs,
    /// Correlation of each input pair.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub rho0: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct JacobianArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub init: InitArgs,
    #[arg(long, default_value_t = 10)]
    pub depth: usize,
    /// Also measure the moments on sampled networks of this width.
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    SyntheticBlobs,
    SmallDigits,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub init: InitArgs,
    #[arg(long, value_enum, default_value = "synthetic-blobs")]
    pub dataset: DatasetKind,
    /// CSV file with columns label,pixel_0..pixel_63 (small-digits only).
    #[arg(long, required_if_eq("dataset", "small-digits"))]
    pub data_path: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 30)]
    pub depth: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.002)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    /// Seed of the first run; run `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of runs.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    /// Seed for dataset synthesis and the train/val/test split.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Training loss that counts as trained when reporting steps to reach it.
    #[arg(long, default_value_t = 1.0)]
    pub loss_threshold: f64,
    /// Write the per-epoch log of every run to this CSV file.
    #[arg(long)]
    pub log: Option<PathBuf>,
}
