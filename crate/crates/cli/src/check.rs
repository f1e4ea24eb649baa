//! Invariant suite behind `gridmor check`.

use gridmor_core::lift::{assemble_quadratic, lift_equilibrium, shift_model, zero_angle_state, LiftedModel};
use gridmor_core::sim::{constant, integrate_quadratic, integrate_second_order, linf_rel_error, SimOptions};
use gridmor_core::strh2::{strh2_pipeline, StrH2Options, Variant};
use gridmor_core::{Error, Result, SecondOrderModel};
use log::info;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::CheckArgs;
use crate::commands::positive;
use crate::output::emit;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn failed(name: &'static str, err: &Error) -> Self {
        Outcome { name, pass: false, detail: format!("error: {err}") }
    }

    pub fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        format!("{:<20} {status}  {}", self.name, self.detail)
    }
}

fn symmetry(lifted: &LiftedModel, pairs: usize, seed: u64) -> Result<Outcome> {
    let dim = lifted.e.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h_norm = lifted.h.norm();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let u = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let gap = (lifted.h.mode1_apply(&u, &v)? - lifted.h.mode1_apply(&v, &u)?).norm();
        let scale = h_norm * u.norm() * v.norm();
        if scale > 0.0 {
            worst = worst.max(gap / scale);
        }
    }
    Ok(Outcome {
        name: "tensor-symmetry",
        pass: worst <= 1e-13,
        detail: format!("max relative gap {worst:.3e} over {pairs} pairs"),
    })
}

/// The first `n` columns of the shifted linear part and of the tensor's
/// linearization at the zero-angle state.
fn angle_columns(lifted: &LiftedModel, mu: f64) -> Result<Outcome> {
    let n = lifted.n;
    let q0 = zero_angle_state(n);
    let quad = shift_model(lifted, &q0, mu)?;
    let mut lin = DMatrix::<f64>::zeros(4 * n, 4 * n);
    for &(i, j, k, v) in lifted.h.entries() {
        lin[(i, j)] += v * q0[k];
        lin[(i, k)] += v * q0[j];
    }
    let tensor_clean = lin.columns(0, n).iter().all(|&x| x == 0.0);
    let mut expected = DMatrix::<f64>::zeros(4 * n, n);
    for i in 0..n {
        expected[(i, i)] = -mu;
    }
    let a_clean = quad.a_mu.columns(0, n) == expected;
    Ok(Outcome {
        name: "angle-columns",
        pass: tensor_clean && a_clean,
        detail: format!("tensor columns zero: {tensor_clean}, shifted columns exact: {a_clean}"),
    })
}

fn lift_exactness(model: &SecondOrderModel, lifted: &LiftedModel, opts: &SimOptions) -> Result<Outcome> {
    let n = model.n();
    let z = DVector::zeros(n);
    let y = integrate_second_order(model, &constant(1.0), opts, &z, &z)?;
    let quad = shift_model(lifted, &zero_angle_state(n), 0.0)?;
    let yq = integrate_quadratic(&quad, &constant(1.0), opts, None)?;
    let err = linf_rel_error(&y, &yq)?;
    Ok(Outcome {
        name: "lift-exactness",
        pass: err <= 1e-8,
        detail: format!("relative output gap {err:.3e}"),
    })
}

fn equilibrium(model: &SecondOrderModel) -> Result<Outcome> {
    let (delta, label) = match model.solve_equilibrium(0) {
        Ok(d) => (d, model.clone()),
        Err(err @ (Error::Residual { .. } | Error::NoConvergence { .. })) => {
            // lossy couplings with balanced injections generally admit no
            // equilibrium; fall back to the lossless network
            info!("no equilibrium for the lossy network ({err}); checking the lossless one");
            let mut lossless = model.clone();
            for c in &mut lossless.couplings {
                c.gamma = 0.0;
            }
            (lossless.solve_equilibrium(0)?, lossless)
        }
        Err(err) => return Err(err),
    };
    let lossless = label != *model;
    let n = model.n();
    let q = lift_equilibrium(&label, &delta)?;
    let residual = assemble_quadratic(&label).rhs(&q, 1.0)?.amax();
    let velocity_zero = q.rows(n, n).iter().all(|&x| x == 0.0);
    Ok(Outcome {
        name: "equilibrium",
        pass: residual <= 1e-8 && velocity_zero,
        detail: format!(
            "lifted residual {residual:.3e}, velocity block zero: {velocity_zero}{}",
            if lossless { " (lossless couplings)" } else { "" }
        ),
    })
}

fn output_subspace(model: &SecondOrderModel, args: &CheckArgs) -> Result<Outcome> {
    let mut opts = StrH2Options::new(args.rq, args.mu, Variant::A);
    opts.qirka = args.iter.options();
    opts.diagnostics = true;
    let out = strh2_pipeline(model, &opts)?;
    let check = out
        .output_check
        .ok_or_else(|| Error::InvalidArgument("output certificate was not produced".into()))?;
    let p = model.p();
    Ok(Outcome {
        name: "output-subspace",
        pass: check.max_angle <= 1e-8 && check.rank_wt == p && check.closed_form_mismatch <= 1e-8,
        detail: format!(
            "max angle {:.3e}, rank {} (outputs {p}), closed-form mismatch {:.3e}, converged: {}",
            check.max_angle, check.rank_wt, check.closed_form_mismatch, out.qirka.converged
        ),
    })
}

/// Runs every invariant; a numerical failure inside one check is reported
/// as a failed line rather than aborting the suite.
pub fn run_suite(model: &SecondOrderModel, args: &CheckArgs) -> Vec<Outcome> {
    let lifted = assemble_quadratic(model);
    let opts = SimOptions::new(args.t_end, args.dt);
    vec![
        symmetry(&lifted, args.pairs, args.seed).unwrap_or_else(|e| Outcome::failed("tensor-symmetry", &e)),
        angle_columns(&lifted, args.mu).unwrap_or_else(|e| Outcome::failed("angle-columns", &e)),
        lift_exactness(model, &lifted, &opts).unwrap_or_else(|e| Outcome::failed("lift-exactness", &e)),
        equilibrium(model).unwrap_or_else(|e| Outcome::failed("equilibrium", &e)),
        output_subspace(model, args).unwrap_or_else(|e| Outcome::failed("output-subspace", &e)),
    ]
}

/// Returns whether every check passed.
pub fn check(args: &CheckArgs) -> Result<bool> {
    positive("mu", args.mu)?;
    positive("t-end", args.t_end)?;
    positive("dt", args.dt)?;
    positive("tol", args.iter.tol)?;
    if args.rq == 0 {
        return Err(Error::InvalidArgument("--rq must be at least 1".into()));
    }
    let model = SecondOrderModel::from_network(&args.net.net.load()?);
    let outcomes = run_suite(&model, args);
    let mut text: String = outcomes.iter().map(|o| o.line() + "\n").collect();
    let passed = outcomes.iter().filter(|o| o.pass).count();
    text.push_str(&format!("{passed}/{} checks passed\n", outcomes.len()));
    emit(args.out.as_deref(), &text, "check", args)?;
    Ok(passed == outcomes.len())
}
