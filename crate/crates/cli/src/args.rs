use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridmor_core::baselines::GramianBlock;
use gridmor_core::qirka::{KroneckerOrder, QirkaOptions};
use gridmor_core::sweep::Method;
use serde::Serialize;

use crate::netspec::NetSource;

#[derive(Debug, Parser)]
#[command(name = "gridmor", version, about = "Structure-preserving reduction of swing-equation networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lift the network to quadratic form and report its statistics.
    Lift(LiftArgs),
    /// Build one reduced second-order model and write it as JSON.
    Reduce(ReduceArgs),
    /// Simulate the full or a reduced model and write the output trajectory as CSV.
    Simulate(SimulateArgs),
    /// Sweep reduction orders for several methods and write an error table as CSV.
    Sweep(SweepArgs),
    /// Run the invariant suite on one network.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    #[value(name = "strh2-a")]
    #[serde(rename = "strh2-a")]
    StrH2A,
    #[value(name = "strh2-b")]
    #[serde(rename = "strh2-b")]
    StrH2B,
    Pod,
    Strqbt,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::StrH2A => Method::StrH2A,
            MethodArg::StrH2B => Method::StrH2B,
            MethodArg::Pod => Method::Pod,
            MethodArg::Strqbt => Method::StrQbt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockArg {
    First,
    Second,
}

impl From<BlockArg> for GramianBlock {
    fn from(b: BlockArg) -> Self {
        match b {
            BlockArg::First => GramianBlock::First,
            BlockArg::Second => GramianBlock::Second,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderArg {
    Pq,
    Qp,
}

impl From<OrderArg> for KroneckerOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Pq => KroneckerOrder::PQ,
            OrderArg::Qp => KroneckerOrder::QP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FullModelArg {
    Nonlinear,
    Quadratic,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NetArgs {
    /// Network JSON file or `synth:<ring|complete|random(p)>:<n>[:seed<k>]`.
    #[arg(long)]
    pub net: NetSource,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IterArgs {
    /// Q-IRKA stopping tolerance on the relative pole change.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Q-IRKA iteration cap.
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
}

impl IterArgs {
    pub fn options(&self) -> QirkaOptions {
        QirkaOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..QirkaOptions::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QbtArgs {
    /// Gramian block used by Str-QBT.
    #[arg(long, value_enum, default_value_t = BlockArg::Second)]
    pub qbt_block: BlockArg,
    /// Kronecker factor order in the quadratic observability term.
    #[arg(long, value_enum, default_value_t = OrderArg::Pq)]
    pub kron_order: OrderArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LiftArgs {
    #[command(flatten)]
    pub net: NetArgs,
    /// Stabilizing shift.
    #[arg(long, default_value_t = 1e-3)]
    pub mu: f64,
    /// Write the nonzeros of the quadratic tensor as `i j k value` lines.
    #[arg(long)]
    pub tensor_out: Option<PathBuf>,
    /// Statistics JSON; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::StrH2A)]
    pub method: MethodArg,
    /// Quadratic order for the StrH2 methods; the final order adds the output count.
    #[arg(long, conflicts_with = "r")]
    pub rq: Option<usize>,
    /// Final reduced order.
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub mu: f64,
    #[command(flatten)]
    pub iter: IterArgs,
    #[command(flatten)]
    pub qbt: QbtArgs,
    /// Constant input used to train POD.
    #[arg(long, default_value_t = 1.0)]
    pub u: f64,
    /// POD training horizon.
    #[arg(long, default_value_t = 10.0)]
    pub pod_t_end: f64,
    /// POD snapshot spacing.
    #[arg(long, default_value_t = 1e-2)]
    pub pod_dt: f64,
    /// Q-IRKA iteration log CSV.
    #[arg(long)]
    pub log_out: Option<PathBuf>,
    /// Reduced-model JSON; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub net: NetArgs,
    /// Reduced model JSON from `reduce`; the full model is simulated when omitted.
    #[arg(long)]
    pub rom: Option<PathBuf>,
    /// Full-model formulation.
    #[arg(long, value_enum, default_value_t = FullModelArg::Nonlinear, conflicts_with = "rom")]
    pub model: FullModelArg,
    /// Constant input.
    #[arg(long, default_value_t = 1.0)]
    pub u: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Shift used by the quadratic formulation.
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    /// Trajectory CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "strh2-a,strh2-b,pod")]
    pub methods: Vec<MethodArg>,
    #[arg(long, default_value_t = 2)]
    pub rmin: usize,
    #[arg(long, default_value_t = 25)]
    pub rmax: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub mu: f64,
    /// Nominal constant input.
    #[arg(long, default_value_t = 1.0)]
    pub u: f64,
    /// Relative input perturbation for an extra evaluation column.
    #[arg(long)]
    pub perturb: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 10.0)]
    pub pod_t_end: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub pod_dt: f64,
    #[command(flatten)]
    pub iter: IterArgs,
    #[command(flatten)]
    pub qbt: QbtArgs,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    #[serde(skip)]
    pub jobs: Option<usize>,
    /// Record wall-clock times (makes the output non-reproducible).
    #[arg(long)]
    pub timing: bool,
    /// Sweep CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CheckArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub mu: f64,
    /// Quadratic order for the output-subspace certificate.
    #[arg(long, default_value_t = 6)]
    pub rq: usize,
    /// Random vector pairs for the symmetry test.
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    /// Seed for the random vector pairs.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Horizon of the lift-exactness simulation.
    #[arg(long, default_value_t = 5.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[command(flatten)]
    pub iter: IterArgs,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
