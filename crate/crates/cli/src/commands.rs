use std::fs;

use gridmor_core::baselines::{pod_basis, reduce_with_petrov, str_qbt_basis, training_snapshots};
use gridmor_core::lift::{assemble_quadratic, shift_and_stabilize, shift_model, zero_angle_state};
use gridmor_core::sim::{constant, integrate_quadratic, integrate_second_order, SimOptions, Trajectory};
use gridmor_core::strh2::{reduce_second_order, strh2_pipeline, ReducedSecondOrderModel, ReductionBasis, RomMeta, StrH2Options, Variant};
use gridmor_core::sweep::{simulate_rom, sweep_csv, sweep_orders, Method, SweepConfig};
use gridmor_core::{Error, Result, SecondOrderModel};
use log::{info, warn};
use nalgebra::DVector;
use serde::Serialize;

use crate::args::{FullModelArg, LiftArgs, MethodArg, ReduceArgs, SimulateArgs, SweepArgs};
use crate::output::emit;

pub fn positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("--{name} must be positive, got {value}")))
    }
}

fn load_model(net: &crate::args::NetArgs) -> Result<SecondOrderModel> {
    let network = net.net.load()?;
    info!("loaded {} ({} nodes, {} couplings)", net.net, network.n(), network.couplings.len());
    Ok(SecondOrderModel::from_network(&network))
}

#[derive(Serialize)]
struct LiftStats {
    n: usize,
    dim: usize,
    outputs: usize,
    mu: f64,
    tensor_nnz: usize,
    tensor_norm: f64,
    tensor_symmetric: bool,
    spectral_abscissa: f64,
    stable: bool,
}

pub fn lift(args: &LiftArgs) -> Result<()> {
    positive("mu", args.mu)?;
    let model = load_model(&args.net)?;
    let lifted = assemble_quadratic(&model);
    let quad = shift_model(&lifted, &zero_angle_state(model.n()), args.mu)?;
    let abscissa = quad.spectral_abscissa()?;
    let stats = LiftStats {
        n: model.n(),
        dim: quad.dim(),
        outputs: model.p(),
        mu: args.mu,
        tensor_nnz: lifted.h.nnz(),
        tensor_norm: lifted.h.norm(),
        tensor_symmetric: lifted.h.is_symmetric(),
        spectral_abscissa: abscissa,
        stable: abscissa < 0.0,
    };
    if let Some(path) = &args.tensor_out {
        fs::write(path, lifted.h.to_coordinate_text())?;
    }
    let mut text = serde_json::to_string_pretty(&stats)?;
    text.push('\n');
    emit(args.out.as_deref(), &text, "lift", args)
}

fn final_order(args: &ReduceArgs, p: usize) -> Result<(usize, Option<usize>)> {
    let strh2 = matches!(args.method, MethodArg::StrH2A | MethodArg::StrH2B);
    match (args.rq, args.r) {
        (Some(rq), None) if strh2 => Ok((rq + p, Some(rq))),
        (Some(_), None) => Err(Error::InvalidArgument("--rq applies to the StrH2 methods only; use --r".into())),
        (None, Some(r)) if strh2 => {
            if r <= p {
                return Err(Error::InvalidArgument(format!("--r must exceed the output count {p}")));
            }
            Ok((r, Some(r - p)))
        }
        (None, Some(r)) => Ok((r, None)),
        _ => Err(Error::InvalidArgument("one of --rq or --r is required".into())),
    }
}

pub fn reduce(args: &ReduceArgs) -> Result<()> {
    positive("mu", args.mu)?;
    positive("tol", args.iter.tol)?;
    let model = load_model(&args.net)?;
    let (r, r_q) = final_order(args, model.p())?;
    if r == 0 || r > model.n() {
        return Err(Error::InvalidArgument(format!("reduced order {r} must lie in 1..={}", model.n())));
    }
    let method = Method::from(args.method);
    let mut meta = RomMeta {
        method: method.tag().to_string(),
        r,
        r_q,
        mu: None,
        variant: None,
        converged: None,
        galerkin: true,
        gramian_block: None,
        kronecker_order: None,
    };
    let rom = match method {
        Method::StrH2A | Method::StrH2B => {
            let variant = if method == Method::StrH2A { Variant::A } else { Variant::B };
            let mut opts = StrH2Options::new(r_q.expect("StrH2 orders carry r_q"), args.mu, variant);
            opts.qirka = args.iter.options();
            let out = strh2_pipeline(&model, &opts)?;
            if !out.qirka.converged {
                warn!("Q-IRKA stopped after {} iterations without converging", out.qirka.iterations);
            }
            if let Some(path) = &args.log_out {
                fs::write(path, out.qirka.log_csv())?;
            }
            meta.r = out.basis.r;
            meta.mu = Some(args.mu);
            meta.variant = Some(variant);
            meta.converged = Some(out.qirka.converged);
            out.rom
        }
        Method::Pod => {
            positive("pod-t-end", args.pod_t_end)?;
            positive("pod-dt", args.pod_dt)?;
            let snaps = training_snapshots(&model, args.u, args.pod_t_end, args.pod_dt)?;
            let q = pod_basis(&snaps, r)?;
            reduce_second_order(&model, &ReductionBasis { vt: q.clone(), vfinal: q, r })?
        }
        Method::StrQbt => {
            let quad = shift_and_stabilize(&assemble_quadratic(&model), &zero_angle_state(model.n()), args.mu)?;
            let f = str_qbt_basis(&quad, r, args.qbt.qbt_block.into(), args.qbt.kron_order.into())?;
            meta.mu = Some(args.mu);
            meta.gramian_block = Some(f.block.name().to_string());
            meta.kronecker_order = Some(format!("{:?}", f.order));
            reduce_with_petrov(&model, &f.vb, &f.wb)?
        }
    };
    meta.galerkin = rom.galerkin;
    let mut text = rom.to_json_string(&meta)?;
    text.push('\n');
    emit(args.out.as_deref(), &text, "reduce", args)
}

fn load_rom(path: &std::path::Path, model: &SecondOrderModel) -> Result<ReducedSecondOrderModel> {
    let (rom, meta) = ReducedSecondOrderModel::from_json_str(&fs::read_to_string(path)?)?;
    if rom.full_dim() != model.n() {
        return Err(Error::Dimension {
            what: "reduced model basis rows",
            expected: model.n(),
            got: rom.full_dim(),
        });
    }
    info!("loaded {} reduced model of order {}", meta.method, rom.order());
    Ok(rom)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    positive("t-end", args.t_end)?;
    positive("dt", args.dt)?;
    if !args.u.is_finite() {
        return Err(Error::InvalidArgument("--u must be finite".into()));
    }
    let model = load_model(&args.net)?;
    let opts = SimOptions::new(args.t_end, args.dt);
    let n = model.n();
    let trajectory: Trajectory = match (&args.rom, args.model) {
        (Some(path), _) => simulate_rom(&load_rom(path, &model)?, &model, args.u, &opts)?,
        (None, FullModelArg::Nonlinear) => {
            let z = DVector::zeros(n);
            integrate_second_order(&model, &constant(args.u), &opts, &z, &z)?
        }
        (None, FullModelArg::Quadratic) => {
            if args.mu < 0.0 || !args.mu.is_finite() {
                return Err(Error::InvalidArgument(format!("--mu must be non-negative, got {}", args.mu)));
            }
            let quad = shift_model(&assemble_quadratic(&model), &zero_angle_state(n), args.mu)?;
            integrate_quadratic(&quad, &constant(args.u), &opts, None)?
        }
    };
    emit(args.out.as_deref(), &trajectory.to_csv(), "simulate", args)
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    positive("mu", args.mu)?;
    positive("t-end", args.t_end)?;
    positive("dt", args.dt)?;
    positive("pod-t-end", args.pod_t_end)?;
    positive("pod-dt", args.pod_dt)?;
    positive("tol", args.iter.tol)?;
    if let Some(eps) = args.perturb {
        if !eps.is_finite() {
            return Err(Error::InvalidArgument("--perturb must be finite".into()));
        }
    }
    let mut methods: Vec<Method> = Vec::new();
    for m in &args.methods {
        let m = Method::from(*m);
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if args.jobs == Some(0) {
        return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
    }
    let model = load_model(&args.net)?;
    let cfg = SweepConfig {
        methods,
        r_min: args.rmin,
        r_max: args.rmax,
        mu: args.mu,
        u: args.u,
        perturb: args.perturb,
        sim: SimOptions::new(args.t_end, args.dt),
        pod_t_end: args.pod_t_end,
        pod_dt: args.pod_dt,
        qbt_block: args.qbt.qbt_block.into(),
        qbt_order: args.qbt.kron_order.into(),
        qirka: args.iter.options(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let records = pool.install(|| sweep_orders(&model, &cfg))?;
    let failed = records.iter().filter(|r| r.rel_linf.is_nan()).count();
    if failed > 0 {
        warn!("{failed} of {} sweep cells failed", records.len());
    }
    emit(args.out.as_deref(), &sweep_csv(&records, args.timing), "sweep", args)
}
