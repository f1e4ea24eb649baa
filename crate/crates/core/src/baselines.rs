//! Comparison bases: snapshot POD and structure-preserving quadratic
//! balanced truncation.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::lift::QuadraticModel;
use crate::linalg::{lyapunov_residual, solve_gen_lyapunov, sorted_svd, sym_sqrt_factor};
use crate::network::SecondOrderModel;
use crate::qirka::{quadratic_observability_rhs, quadratic_reachability_rhs, KroneckerOrder};
use crate::sim::{constant, integrate_second_order, SimOptions};
use crate::strh2::{projection_condition, ReducedSecondOrderModel};

/// Relative singular-value cutoff used for numerical ranks here.
pub const RANK_TOL: f64 = 1e-12;

/// Angle snapshots, one column per sample time.
#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    pub delta: DMatrix<f64>,
    pub times: Vec<f64>,
}

impl SnapshotMatrix {
    pub fn new(delta: DMatrix<f64>, times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("snapshot set is empty".into()));
        }
        check_len("snapshot columns", times.len(), delta.ncols())?;
        Ok(Self { delta, times })
    }
}

/// Leading `r` left singular vectors of the snapshot matrix.
pub fn pod_basis(snapshots: &SnapshotMatrix, r: usize) -> Result<DMatrix<f64>> {
    let (u, s, _) = sorted_svd(&snapshots.delta);
    let rank = numerical_rank(&s);
    if r == 0 || r > rank {
        return Err(Error::RankDeficient(format!(
            "POD order {r} exceeds snapshot rank {rank}"
        )));
    }
    Ok(u.columns(0, r).into_owned())
}

fn numerical_rank(s: &DVector<f64>) -> usize {
    match s.iter().next() {
        Some(&s0) if s0 > 0.0 => s.iter().filter(|&&v| v > RANK_TOL * s0).count(),
        _ => 0,
    }
}

/// Training run for POD: every step of a simulation from rest.
pub fn training_snapshots(model: &SecondOrderModel, u: f64, t_end: f64, dt: f64) -> Result<SnapshotMatrix> {
    let n = model.n();
    let opts = SimOptions {
        keep_states: true,
        ..SimOptions::new(t_end, dt)
    };
    let tr = integrate_second_order(model, &constant(u), &opts, &DVector::zeros(n), &DVector::zeros(n))?;
    let states = tr.states.expect("states were requested");
    SnapshotMatrix::new(states.rows(0, n).into_owned(), tr.times)
}

/// Which diagonal `n x n` block of the lifted Gramians feeds the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GramianBlock {
    /// Angle block.
    First,
    /// Velocity block.
    #[default]
    Second,
}

impl GramianBlock {
    pub fn name(self) -> &'static str {
        match self {
            GramianBlock::First => "first",
            GramianBlock::Second => "second",
        }
    }
}

/// Balanced-truncation factors of one Gramian block.
#[derive(Debug, Clone)]
pub struct QbtFactors {
    pub rb: DMatrix<f64>,
    pub sb: DMatrix<f64>,
    pub uhat: DMatrix<f64>,
    pub sighat: DVector<f64>,
    pub vhat: DMatrix<f64>,
    pub vb: DMatrix<f64>,
    pub wb: DMatrix<f64>,
    pub block: GramianBlock,
    pub order: KroneckerOrder,
    /// Relative plug-back residuals of `P1, P2, Q1, Q2`.
    pub residuals: [f64; 4],
    /// Negative eigenvalue mass removed from the `P` and `Q` blocks.
    pub clipped: (f64, f64),
}

impl QbtFactors {
    /// Numerical rank of `Rb Sb^T`.
    pub fn rank(&self) -> usize {
        numerical_rank(&self.sighat)
    }

    /// `(Vb, Wb)` for order `r_q`; the columns do not depend on `r_q`.
    pub fn truncate(&self, r_q: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let rank = self.rank();
        if r_q == 0 || r_q > rank {
            return Err(Error::RankDeficient(format!(
                "balanced order {r_q} exceeds Gramian product rank {rank}"
            )));
        }
        let scale = DVector::from_fn(r_q, |i, _| 1.0 / self.sighat[i].sqrt());
        let vb = self.rb.tr_mul(&self.uhat.columns(0, r_q)) * DMatrix::from_diagonal(&scale);
        let wb = self.sb.tr_mul(&self.vhat.columns(0, r_q)) * DMatrix::from_diagonal(&scale);
        Ok((vb, wb))
    }
}

/// Gramian products and the full SVD behind [`str_qbt_basis`].
pub fn str_qbt_factors(
    model: &QuadraticModel,
    block: GramianBlock,
    order: KroneckerOrder,
) -> Result<QbtFactors> {
    let n = model.dim() / 4;
    let h = model.h.symmetrize();
    let (e, a) = (&model.e, &model.a_mu);
    let (et, at) = (e.transpose(), a.transpose());

    let rhs_p1 = &model.b_tilde * model.b_tilde.transpose();
    let p1 = solve_gen_lyapunov(e, a, &rhs_p1)?;
    let rhs_p2 = quadratic_reachability_rhs(&h, &p1)?;
    let p2 = solve_gen_lyapunov(e, a, &rhs_p2)?;
    let rhs_q1 = model.c.transpose() * &model.c;
    let q1 = solve_gen_lyapunov(&et, &at, &rhs_q1)?;
    let rhs_q2 = quadratic_observability_rhs(&h, &p1, &q1, order)?;
    let q2 = solve_gen_lyapunov(&et, &at, &rhs_q2)?;
    let residuals = [
        lyapunov_residual(e, a, &rhs_p1, &p1),
        lyapunov_residual(e, a, &rhs_p2, &p2),
        lyapunov_residual(&et, &at, &rhs_q1, &q1),
        lyapunov_residual(&et, &at, &rhs_q2, &q2),
    ];

    let offset = match block {
        GramianBlock::First => 0,
        GramianBlock::Second => n,
    };
    let p = (p1 + p2).view((offset, offset), (n, n)).into_owned();
    let q = (q1 + q2).view((offset, offset), (n, n)).into_owned();
    let (rb, clip_p) = sym_sqrt_factor(&p);
    let (sb, clip_q) = sym_sqrt_factor(&q);
    let (uhat, sighat, vhat) = sorted_svd(&(&rb * sb.transpose()));
    let mut factors = QbtFactors {
        rb,
        sb,
        uhat,
        sighat,
        vhat,
        vb: DMatrix::zeros(n, 0),
        wb: DMatrix::zeros(n, 0),
        block,
        order,
        residuals,
        clipped: (clip_p, clip_q),
    };
    let rank = factors.rank();
    if rank > 0 {
        let (vb, wb) = factors.truncate(rank)?;
        factors.vb = vb;
        factors.wb = wb;
    }
    Ok(factors)
}

/// Balanced bases `Vb, Wb` of order `r_q` with `Wb^T Vb = I`.
pub fn str_qbt_basis(
    model: &QuadraticModel,
    r_q: usize,
    block: GramianBlock,
    order: KroneckerOrder,
) -> Result<QbtFactors> {
    let mut f = str_qbt_factors(model, block, order)?;
    let (vb, wb) = f.truncate(r_q)?;
    f.vb = vb;
    f.wb = wb;
    Ok(f)
}

/// Oblique projection with trial basis `vb` and test basis `wb`.
pub fn reduce_with_petrov(
    model: &SecondOrderModel,
    vb: &DMatrix<f64>,
    wb: &DMatrix<f64>,
) -> Result<ReducedSecondOrderModel> {
    check_len("trial basis rows", model.n(), vb.nrows())?;
    check_len("test basis rows", model.n(), wb.nrows())?;
    check_len("test basis columns", vb.ncols(), wb.ncols())?;
    let cond = projection_condition(vb, wb);
    if !(cond <= 1e12) {
        return Err(Error::Singular(format!("W^T V has condition number {cond:e}")));
    }
    let mv = DMatrix::from_fn(vb.nrows(), vb.ncols(), |i, j| model.mass[i] * vb[(i, j)]);
    let dv = DMatrix::from_fn(vb.nrows(), vb.ncols(), |i, j| model.damping[i] * vb[(i, j)]);
    Ok(ReducedSecondOrderModel {
        mr: wb.tr_mul(&mv),
        dr: wb.tr_mul(&dv),
        br: wb.tr_mul(&model.input),
        cr: &model.output * vb,
        v: vb.clone(),
        w: wb.clone(),
        galerkin: false,
    })
}
