//! Reduction-order sweeps comparing reduction methods on one network.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::baselines::{
    pod_basis, reduce_with_petrov, str_qbt_factors, training_snapshots, GramianBlock, QbtFactors,
    SnapshotMatrix,
};
use crate::error::{Error, Result};
use crate::lift::{assemble_quadratic, shift_and_stabilize, zero_angle_state};
use crate::network::SecondOrderModel;
use crate::qirka::{KroneckerOrder, QirkaOptions};
use crate::sim::{constant, integrate_second_order, linf_rel_error, ReducedSystem, SimOptions, Trajectory};
use crate::strh2::{reduce_second_order, strh2_pipeline, ReducedSecondOrderModel, ReductionBasis, StrH2Options, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    StrH2A,
    StrH2B,
    Pod,
    StrQbt,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::StrH2A => "strh2-a",
            Method::StrH2B => "strh2-b",
            Method::Pod => "pod",
            Method::StrQbt => "strqbt",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "strh2-a" => Ok(Method::StrH2A),
            "strh2-b" => Ok(Method::StrH2B),
            "pod" => Ok(Method::Pod),
            "strqbt" => Ok(Method::StrQbt),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputCase {
    Nominal,
    Perturbed,
}

impl InputCase {
    pub fn label(self) -> &'static str {
        match self {
            InputCase::Nominal => "nominal",
            InputCase::Perturbed => "perturbed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub r_min: usize,
    pub r_max: usize,
    pub mu: f64,
    /// Nominal constant input.
    pub u: f64,
    /// Relative input perturbation; adds a perturbed column when set.
    pub perturb: Option<f64>,
    pub sim: SimOptions,
    pub pod_t_end: f64,
    pub pod_dt: f64,
    pub qbt_block: GramianBlock,
    pub qbt_order: KroneckerOrder,
    pub qirka: QirkaOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::StrH2A, Method::StrH2B, Method::Pod],
            r_min: 2,
            r_max: 25,
            mu: 1e-3,
            u: 1.0,
            perturb: None,
            sim: SimOptions::default(),
            pod_t_end: 10.0,
            pod_dt: 1e-2,
            qbt_block: GramianBlock::default(),
            qbt_order: KroneckerOrder::default(),
            qirka: QirkaOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub method: Method,
    pub r: usize,
    pub input: InputCase,
    /// `NaN` when the cell failed.
    pub rel_linf: f64,
    pub reduce_s: f64,
    pub sim_s: f64,
    /// Q-IRKA convergence for the StrH2 methods.
    pub converged: Option<bool>,
    /// Failure reason or other remark.
    pub note: Option<String>,
}

/// Header of [`sweep_csv`].
pub const SWEEP_HEADER: &str = "method,r,input,rel_linf,reduce_s,sim_s,converged";

/// CSV rendering; wall times print as `nan` unless `timing` is set so that
/// repeated runs are byte-identical.
pub fn sweep_csv(records: &[SweepRecord], timing: bool) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for rec in records {
        let time = |t: f64| if timing { t.to_string() } else { "nan".into() };
        let converged = match rec.converged {
            Some(true) => "true",
            Some(false) => "false",
            None => "na",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            rec.method,
            rec.r,
            rec.input.label(),
            fmt_f64(rec.rel_linf),
            time(rec.reduce_s),
            time(rec.sim_s),
            converged
        ));
    }
    out
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:e}")
    }
}

struct Shared {
    references: Vec<(InputCase, f64, Trajectory)>,
    pod: Option<std::result::Result<SnapshotMatrix, String>>,
    qbt: Option<std::result::Result<QbtFactors, String>>,
}

struct Built {
    rom: ReducedSecondOrderModel,
    converged: Option<bool>,
    note: Option<String>,
}

/// Runs every `(method, r)` cell and simulates each reduced model under the
/// nominal and, if configured, the perturbed input.
pub fn sweep_orders(model: &SecondOrderModel, cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    if cfg.r_min == 0 || cfg.r_min > cfg.r_max {
        return Err(Error::InvalidArgument(format!(
            "invalid order range {}..={}",
            cfg.r_min, cfg.r_max
        )));
    }
    if cfg.r_max > model.n() {
        return Err(Error::InvalidArgument(format!(
            "maximum order {} exceeds network size {}",
            cfg.r_max,
            model.n()
        )));
    }
    if cfg.methods.is_empty() {
        return Err(Error::InvalidArgument("no methods selected".into()));
    }
    let n = model.n();
    let zeros = DVector::zeros(n);
    let mut inputs = vec![(InputCase::Nominal, cfg.u)];
    if let Some(eps) = cfg.perturb {
        inputs.push((InputCase::Perturbed, cfg.u * (1.0 + eps)));
    }
    let references = inputs
        .iter()
        .map(|&(case, u)| {
            integrate_second_order(model, &constant(u), &cfg.sim, &zeros, &zeros).map(|t| (case, u, t))
        })
        .collect::<Result<Vec<_>>>()?;

    let pod = cfg.methods.contains(&Method::Pod).then(|| {
        training_snapshots(model, cfg.u, cfg.pod_t_end, cfg.pod_dt).map_err(|e| e.to_string())
    });
    let qbt = cfg.methods.contains(&Method::StrQbt).then(|| {
        shift_and_stabilize(&assemble_quadratic(model), &zero_angle_state(n), cfg.mu)
            .and_then(|q| str_qbt_factors(&q, cfg.qbt_block, cfg.qbt_order))
            .map_err(|e| e.to_string())
    });
    let shared = Shared { references, pod, qbt };

    let cells: Vec<(Method, usize)> = cfg
        .methods
        .iter()
        .flat_map(|&m| (cfg.r_min..=cfg.r_max).map(move |r| (m, r)))
        .collect();
    let records: Vec<Vec<SweepRecord>> = cells
        .par_iter()
        .map(|&(method, r)| run_cell(model, cfg, &shared, method, r))
        .collect();
    Ok(records.into_iter().flatten().collect())
}

fn build(model: &SecondOrderModel, cfg: &SweepConfig, shared: &Shared, method: Method, r: usize) -> std::result::Result<Built, String> {
    match method {
        Method::StrH2A | Method::StrH2B => {
            let p = model.p();
            if r <= p {
                return Err(format!("order {r} leaves no room beyond {p} outputs"));
            }
            let variant = if method == Method::StrH2A { Variant::A } else { Variant::B };
            let mut opts = StrH2Options::new(r - p, cfg.mu, variant);
            opts.qirka = cfg.qirka.clone();
            let out = strh2_pipeline(model, &opts).map_err(|e| e.to_string())?;
            let note = (out.basis.r != r).then(|| format!("basis rank {} instead of {r}", out.basis.r));
            Ok(Built {
                rom: out.rom,
                converged: Some(out.qirka.converged),
                note,
            })
        }
        Method::Pod => {
            let snaps = match &shared.pod {
                Some(Ok(s)) => s,
                Some(Err(e)) => return Err(format!("POD training failed: {e}")),
                None => unreachable!("POD snapshots are trained when POD is selected"),
            };
            let q = pod_basis(snaps, r).map_err(|e| e.to_string())?;
            let basis = ReductionBasis { vt: q.clone(), vfinal: q, r };
            let rom = reduce_second_order(model, &basis).map_err(|e| e.to_string())?;
            Ok(Built { rom, converged: None, note: None })
        }
        Method::StrQbt => {
            let f = match &shared.qbt {
                Some(Ok(f)) => f,
                Some(Err(e)) => return Err(format!("Gramians failed: {e}")),
                None => unreachable!("Gramians are computed when Str-QBT is selected"),
            };
            let (vb, wb) = f.truncate(r).map_err(|e| e.to_string())?;
            let rom = reduce_with_petrov(model, &vb, &wb).map_err(|e| e.to_string())?;
            Ok(Built { rom, converged: None, note: None })
        }
    }
}

fn run_cell(model: &SecondOrderModel, cfg: &SweepConfig, shared: &Shared, method: Method, r: usize) -> Vec<SweepRecord> {
    let start = Instant::now();
    let built = build(model, cfg, shared, method, r);
    let reduce_s = start.elapsed().as_secs_f64();
    shared
        .references
        .iter()
        .map(|(case, u, reference)| {
            let mut rec = SweepRecord {
                method,
                r,
                input: *case,
                rel_linf: f64::NAN,
                reduce_s,
                sim_s: f64::NAN,
                converged: None,
                note: None,
            };
            let built = match &built {
                Ok(b) => b,
                Err(reason) => {
                    warn!("{method} r={r}: {reason}");
                    rec.note = Some(reason.clone());
                    return rec;
                }
            };
            rec.converged = built.converged;
            rec.note = built.note.clone();
            let start = Instant::now();
            let outcome = simulate_rom(&built.rom, model, *u, &cfg.sim).and_then(|yr| linf_rel_error(reference, &yr));
            rec.sim_s = start.elapsed().as_secs_f64();
            match outcome {
                Ok(err) => rec.rel_linf = err,
                Err(e) => {
                    warn!("{method} r={r} ({}): {e}", case.label());
                    rec.note = Some(e.to_string());
                }
            }
            rec
        })
        .collect()
}

/// Simulates a reduced model from rest under a constant input.
pub fn simulate_rom(
    rom: &ReducedSecondOrderModel,
    model: &SecondOrderModel,
    u: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let sys = ReducedSystem::new(rom, model)?;
    let z = DVector::zeros(rom.order());
    integrate_second_order(&sys, &constant(u), opts, &z, &z)
}

/// Error values for one method and input, indexed by order.
pub fn error_series(records: &[SweepRecord], method: Method, input: InputCase) -> Vec<(usize, f64)> {
    records
        .iter()
        .filter(|r| r.method == method && r.input == input)
        .map(|r| (r.r, r.rel_linf))
        .collect()
}

/// Dense table of errors, rows = orders, columns = `methods`.
pub fn error_table(records: &[SweepRecord], methods: &[Method], input: InputCase, r_min: usize, r_max: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r_max - r_min + 1, methods.len(), |i, j| {
        records
            .iter()
            .find(|rec| rec.method == methods[j] && rec.input == input && rec.r == r_min + i)
            .map_or(f64::NAN, |rec| rec.rel_linf)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{PowerNetwork, Topology};

    fn synth(n: usize, topo: Topology, seed: u64) -> SecondOrderModel {
        SecondOrderModel::from_network(&PowerNetwork::synthetic(n, topo, seed).unwrap())
    }

    fn quick_config(methods: Vec<Method>) -> SweepConfig {
        SweepConfig {
            methods,
            r_min: 2,
            r_max: 4,
            perturb: Some(1e-3),
            sim: SimOptions::new(2.0, 1e-2),
            pod_t_end: 2.0,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn method_tags_round_trip() {
        for m in [Method::StrH2A, Method::StrH2B, Method::Pod, Method::StrQbt] {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("irka".parse::<Method>().is_err());
    }

    #[test]
    fn two_rows_per_cell_with_perturbation() {
        let model = synth(6, Topology::Ring, 2);
        let cfg = quick_config(vec![Method::StrH2A, Method::Pod, Method::StrQbt]);
        let recs = sweep_orders(&model, &cfg).unwrap();
        assert_eq!(recs.len(), 3 * 3 * 2);
        let csv = sweep_csv(&recs, false);
        assert!(csv.starts_with(SWEEP_HEADER));
        assert_eq!(csv.lines().count(), 1 + 18);
        assert!(recs.iter().all(|r| r.rel_linf.is_nan() || r.rel_linf >= 0.0));
    }

    #[test]
    fn csv_is_reproducible_without_timing() {
        let model = synth(5, Topology::Complete, 1);
        let cfg = quick_config(vec![Method::StrH2B, Method::Pod]);
        let a = sweep_csv(&sweep_orders(&model, &cfg).unwrap(), false);
        let b = sweep_csv(&sweep_orders(&model, &cfg).unwrap(), false);
        assert_eq!(a, b);
    }

    #[test]
    fn failing_cells_are_nan_with_reason() {
        let model = synth(5, Topology::Ring, 1);
        let cfg = SweepConfig {
            r_min: 1,
            r_max: 1,
            ..quick_config(vec![Method::StrH2A])
        };
        let recs = sweep_orders(&model, &cfg).unwrap();
        assert!(recs.iter().all(|r| r.rel_linf.is_nan() && r.note.is_some()));
    }

    #[test]
    fn rejects_bad_ranges() {
        let model = synth(4, Topology::Ring, 1);
        let mut cfg = quick_config(vec![Method::Pod]);
        cfg.r_max = 9;
        assert!(sweep_orders(&model, &cfg).is_err());
        cfg.r_min = 3;
        cfg.r_max = 2;
        assert!(sweep_orders(&model, &cfg).is_err());
    }
}
