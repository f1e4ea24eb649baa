//! Quadratic IRKA on the stabilized lifted model, Petrov-Galerkin reduction
//! of quadratic systems and truncated Gramians.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lift::QuadraticModel;
use crate::linalg::{
    condition_number, eigen_order, solve_gen_lyapunov, sorted_svd, spectral_abscissa,
    spectral_decompose, to_complex, ShiftedSolver, SpectralPair,
};
use crate::tensor::SparseTensor3;

/// Reduced quadratic system `Er x' = Ar x + Hr (x (x) x) + Br u~`, `y = Cr x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedQuadratic {
    pub er: DMatrix<f64>,
    pub ar: DMatrix<f64>,
    /// `r x r^2`, column `a*r + b` multiplies `x_a x_b`.
    pub hr: DMatrix<f64>,
    pub br: DMatrix<f64>,
    pub cr: DMatrix<f64>,
}

impl ReducedQuadratic {
    pub fn order(&self) -> usize {
        self.er.nrows()
    }
}

/// `Er = W^T E V`, `Ar = W^T A_mu V`, `Hr = W^T H (V (x) V)`, `Br = W^T B~`,
/// `Cr = C V`.
pub fn reduce_quadratic(
    model: &QuadraticModel,
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<ReducedQuadratic> {
    let big = model.dim();
    if v.nrows() != big || w.nrows() != big || v.ncols() != w.ncols() {
        return Err(Error::Dimension {
            what: "reduce_quadratic bases",
            expected: big,
            got: v.nrows().max(w.nrows()),
        });
    }
    for (name, basis) in [("V", v), ("W", w)] {
        let cond = condition_number(basis);
        if !(cond <= 1e12) {
            return Err(Error::RankDeficient(format!(
                "projection basis {name} has condition number {cond:e}"
            )));
        }
    }
    let hv = model.h.mode1_apply_pairs(v, v)?;
    Ok(ReducedQuadratic {
        er: w.tr_mul(&(&model.e * v)),
        ar: w.tr_mul(&(&model.a_mu * v)),
        hr: w.tr_mul(&hv),
        br: w.tr_mul(&model.b_tilde),
        cr: &model.c * v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QirkaMode {
    /// Independent test basis `W`.
    TwoSided,
    /// Galerkin variant, `W = V`.
    OneSided,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QirkaInit {
    /// Orthonormalized real shifted solves at log-spaced shifts in `[0.1, 100]`.
    ShiftedSolves,
    /// User-supplied initial basis (used for both `V` and `W`).
    Basis(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QirkaOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub init: QirkaInit,
}

impl Default for QirkaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 50,
            init: QirkaInit::ShiftedSolves,
        }
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub iter: usize,
    pub max_rel_eig_change: f64,
    pub spectral_abscissa_reduced: f64,
}

/// Data of the last basis update, kept for certificates.
#[derive(Debug, Clone)]
pub struct QirkaDiagnostics {
    /// Reduced poles used for the last update.
    pub lambda: DVector<Complex64>,
    pub b_hat: DMatrix<Complex64>,
    pub c_hat: DMatrix<Complex64>,
    /// `r x r^2` transformed reduced tensor.
    pub h_hat: DMatrix<Complex64>,
    pub v1: DMatrix<Complex64>,
    pub v2: DMatrix<Complex64>,
    pub w1: DMatrix<Complex64>,
    pub w2: DMatrix<Complex64>,
    /// Realified `V1 + V2` and `W1 + W2` before orthonormalization.
    pub v_real: DMatrix<f64>,
    pub w_real: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct QirkaResult {
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub reduced: ReducedQuadratic,
    pub iterations: usize,
    pub converged: bool,
    pub eig_history: Vec<Vec<Complex64>>,
    pub log: Vec<IterationLog>,
    pub reduced_stable: bool,
    pub diagnostics: Option<QirkaDiagnostics>,
}

impl QirkaResult {
    /// Iteration log as CSV.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("iter,max_rel_eig_change,spectral_abscissa_reduced\n");
        for row in &self.log {
            out.push_str(&format!(
                "{},{:e},{:e}\n",
                row.iter, row.max_rel_eig_change, row.spectral_abscissa_reduced
            ));
        }
        out
    }
}

/// Relative distance between two eigenvalue lists sorted with
/// [`eigen_order`].
pub fn eigenvalue_change(new: &[Complex64], old: &[Complex64]) -> f64 {
    let scale = new
        .iter()
        .chain(old)
        .map(|z| z.norm())
        .fold(f64::MIN_POSITIVE, f64::max);
    new.iter()
        .zip(old)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / scale
}

/// Replaces each conjugate pair of columns by the real and imaginary parts
/// of the member with positive imaginary shift; real shifts keep the real
/// part.
pub fn realify(x: &DMatrix<Complex64>, lambda: &[Complex64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    let mut idx = 0;
    while idx < lambda.len() {
        let lam = lambda[idx];
        if lam.im != 0.0 && idx + 1 < lambda.len() && lambda[idx + 1] == lam.conj() {
            let col = x.column(idx + 1);
            out.set_column(idx, &col.map(|z| z.re));
            out.set_column(idx + 1, &col.map(|z| z.im));
            idx += 2;
        } else {
            out.set_column(idx, &x.column(idx).map(|z| z.re));
            idx += 1;
        }
    }
    out
}

fn orthonormalize(x: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::RankDeficient(format!("{what} is zero or non-finite")));
    }
    if r.diagonal().iter().any(|v| !(v.abs() > 1e-12 * scale)) {
        debug!("{what} is numerically rank deficient; keeping QR completion");
    }
    Ok(qr.q())
}

/// Spectral data of a reduced model in the eigenvector coordinates.
struct Transformed {
    sp: SpectralPair,
    b_hat: DMatrix<Complex64>,
    c_hat: DMatrix<Complex64>,
    h_hat: DMatrix<Complex64>,
}

fn transform(red: &ReducedQuadratic, sp: SpectralPair) -> Result<Transformed> {
    let r = red.order();
    let er_r = to_complex(&red.er) * &sp.r;
    let lu = er_r.lu();
    let b_hat = lu
        .solve(&to_complex(&red.br))
        .ok_or_else(|| Error::Singular("E_r R".into()))?;
    let t_hr = lu
        .solve(&to_complex(&red.hr))
        .ok_or_else(|| Error::Singular("E_r R".into()))?;
    let c_hat = to_complex(&red.cr) * &sp.r;
    let mut h_hat = DMatrix::from_element(r, r * r, Complex64::new(0.0, 0.0));
    for i in 0..r {
        // row i of T Hr reshaped so that m[(b, c)] multiplies x_b x_c
        let m = DMatrix::from_fn(r, r, |b, c| t_hr[(i, b * r + c)]);
        let rt = sp.r.transpose() * m * &sp.r;
        for j in 0..r {
            for k in 0..r {
                h_hat[(i, j * r + k)] = rt[(j, k)];
            }
        }
    }
    Ok(Transformed {
        sp,
        b_hat,
        c_hat,
        h_hat,
    })
}

fn spectral_with_jitter(red: &ReducedQuadratic, force_jitter: bool) -> Result<(SpectralPair, ReducedQuadratic)> {
    let jittered = |red: &ReducedQuadratic| {
        let mut out = red.clone();
        let scale = red.ar.amax().max(f64::MIN_POSITIVE);
        let diag = DMatrix::from_diagonal(&DVector::from_fn(red.order(), |k, _| {
            1e-8 * scale * (1.0 + k as f64)
        }));
        out.ar += &red.er * diag;
        out
    };
    if force_jitter {
        let red = jittered(red);
        return Ok((spectral_decompose(&red.er, &red.ar)?, red));
    }
    match spectral_decompose(&red.er, &red.ar) {
        Ok(sp) => Ok((sp, red.clone())),
        Err(Error::Defective { cond }) => {
            debug!("defective reduced pencil (cond {cond:e}), jittering");
            let red = jittered(red);
            Ok((spectral_decompose(&red.er, &red.ar)?, red))
        }
        Err(e) => Err(e),
    }
}

/// Solves one family of shifted systems, conjugating across pairs.
fn shifted_columns(
    solver: &ShiftedSolver,
    lambda: &[Complex64],
    rhs: &DMatrix<Complex64>,
    transpose: bool,
) -> Result<DMatrix<Complex64>> {
    let r = lambda.len();
    let partner: Vec<Option<usize>> = (0..r)
        .map(|i| {
            if lambda[i].im < 0.0 && i + 1 < r && lambda[i + 1] == lambda[i].conj() {
                Some(i + 1)
            } else {
                None
            }
        })
        .collect();
    let solved: Vec<Option<DVector<Complex64>>> = (0..r)
        .into_par_iter()
        .map(|i| {
            if partner[i].is_some() {
                return Ok(None);
            }
            let b = rhs.column(i).into_owned();
            let x = if transpose {
                solver.solve_transpose(lambda[i], &b)?
            } else {
                solver.solve(lambda[i], &b)?
            };
            Ok(Some(x))
        })
        .collect::<Result<_>>()?;
    let mut out = DMatrix::from_element(solver.dim(), r, Complex64::new(0.0, 0.0));
    for i in 0..r {
        match (&solved[i], partner[i]) {
            (Some(x), _) => out.set_column(i, x),
            (None, Some(p)) => {
                let x = solved[p].as_ref().expect("partner solved");
                out.set_column(i, &x.map(|z| z.conj()));
            }
            (None, None) => unreachable!(),
        }
    }
    Ok(out)
}

struct Update {
    v: DMatrix<f64>,
    w: DMatrix<f64>,
    diagnostics: QirkaDiagnostics,
}

fn basis_update(
    model: &QuadraticModel,
    h: &SparseTensor3,
    solver: &ShiftedSolver,
    data: &Transformed,
    mode: QirkaMode,
) -> Result<Update> {
    let r = data.sp.lambda.len();
    let lambda: Vec<Complex64> = data.sp.lambda.iter().copied().collect();
    let b_c = to_complex(&model.b_tilde);
    let c_c = to_complex(&model.c);

    let rhs_v1 = &b_c * data.b_hat.transpose();
    let v1 = shifted_columns(solver, &lambda, &rhs_v1, false)?;
    let rhs_v2 = h.mode1_apply_pairs(&v1, &v1)? * data.h_hat.transpose();
    let v2 = shifted_columns(solver, &lambda, &rhs_v2, false)?;
    let v_real = realify(&(&v1 + &v2), &lambda);
    let v = orthonormalize(&v_real, "V")?;

    let (w1, w2, w_real, w) = match mode {
        QirkaMode::OneSided => (v1.clone(), v2.clone(), v_real.clone(), v.clone()),
        QirkaMode::TwoSided => {
            let rhs_w1 = c_c.transpose() * &data.c_hat;
            let w1 = shifted_columns(solver, &lambda, &rhs_w1, true)?;
            // column b*r + a holds sum H_ijk W1[i, b] V1[k, a]
            let x = h.mode2_apply_pairs(&w1, &v1)?;
            let k_mat = DMatrix::from_fn(r * r, r, |row, l| {
                let (b, a) = (row / r, row % r);
                data.h_hat[(b, l * r + a)]
            });
            let rhs_w2 = x * k_mat;
            let w2 = shifted_columns(solver, &lambda, &rhs_w2, true)?;
            let w_real = realify(&(&w1 + &w2), &lambda);
            let w = orthonormalize(&w_real, "W")?;
            (w1, w2, w_real, w)
        }
    };
    Ok(Update {
        v,
        w,
        diagnostics: QirkaDiagnostics {
            lambda: data.sp.lambda.clone(),
            b_hat: data.b_hat.clone(),
            c_hat: data.c_hat.clone(),
            h_hat: data.h_hat.clone(),
            v1,
            v2,
            w1,
            w2,
            v_real,
            w_real,
        },
    })
}

/// Log-spaced real shifts in `[0.1, 100]·scale`.
fn init_shifts(count: usize, scale: f64) -> Vec<f64> {
    if count == 1 {
        return vec![(0.1f64 * 100.0).sqrt() * scale];
    }
    (0..count)
        .map(|k| scale * 10f64.powf(-1.0 + 3.0 * k as f64 / (count - 1) as f64))
        .collect()
}

/// Initial orthonormal basis from real shifted solves against `B~`.
pub fn initial_basis(model: &QuadraticModel, solver: &ShiftedSolver, r_q: usize) -> Result<DMatrix<f64>> {
    let m = model.b_tilde.ncols();
    let abscissa = model.spectral_abscissa()?;
    let scale = if abscissa < 0.0 { -abscissa } else { 1.0 };
    let shifts = init_shifts(r_q, scale);
    let mut cols = DMatrix::zeros(model.dim(), shifts.len() * m);
    for (s_idx, &sigma) in shifts.iter().enumerate() {
        for c in 0..m {
            let rhs = model.b_tilde.column(c).map(|x| Complex64::new(x, 0.0));
            let x = solver.solve(Complex64::new(-sigma, 0.0), &rhs)?;
            cols.set_column(s_idx * m + c, &x.map(|z| z.re));
        }
    }
    let (u, s, _) = sorted_svd(&cols);
    if s.len() < r_q || !(s[r_q - 1] > 0.0) {
        return Err(Error::RankDeficient(format!(
            "initial shifted solves span fewer than {r_q} directions"
        )));
    }
    Ok(u.columns(0, r_q).into_owned())
}

/// Runs quadratic IRKA with reduced order `r_q`.
pub fn qirka(
    model: &QuadraticModel,
    r_q: usize,
    mode: QirkaMode,
    opts: &QirkaOptions,
) -> Result<QirkaResult> {
    let big = model.dim();
    if r_q == 0 || r_q >= big {
        return Err(Error::InvalidArgument(format!(
            "reduced order must satisfy 1 <= r_q < {big}, got {r_q}"
        )));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidArgument("tol and max_iter must be positive".into()));
    }
    let h = model.h.symmetrize();
    let solver = ShiftedSolver::new(&model.e, &model.a_mu)?;
    let v0 = match &opts.init {
        QirkaInit::ShiftedSolves => initial_basis(model, &solver, r_q)?,
        QirkaInit::Basis(b) => {
            if b.nrows() != big || b.ncols() != r_q {
                return Err(Error::Dimension {
                    what: "initial basis columns",
                    expected: r_q,
                    got: b.ncols(),
                });
            }
            orthonormalize(b, "initial basis")?
        }
    };
    let mut v = v0.clone();
    let mut w = v0;
    let mut reduced = reduce_quadratic(model, &v, &w)?;
    let mut prev: Option<Vec<Complex64>> = None;
    let mut eig_history = Vec::new();
    let mut log = Vec::new();
    let mut diagnostics = None;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..=opts.max_iter {
        let (sp, jittered) = spectral_with_jitter(&reduced, false)?;
        let lambda: Vec<Complex64> = sp.lambda.iter().copied().collect();
        let abscissa = lambda.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let change = prev
            .as_ref()
            .map_or(f64::INFINITY, |p| eigenvalue_change(&lambda, p));
        log.push(IterationLog {
            iter,
            max_rel_eig_change: change,
            spectral_abscissa_reduced: abscissa,
        });
        debug!("qirka iter {iter}: change {change:e}, reduced abscissa {abscissa:e}");
        eig_history.push(lambda.clone());
        if change < opts.tol {
            converged = true;
            break;
        }
        if iter == opts.max_iter {
            break;
        }
        let data = transform(&jittered, sp)?;
        let update = match basis_update(model, &h, &solver, &data, mode) {
            Err(Error::SingularShift { .. }) => {
                let (sp, jittered) = spectral_with_jitter(&reduced, true)?;
                let data = transform(&jittered, sp)?;
                basis_update(model, &h, &solver, &data, mode)?
            }
            other => other?,
        };
        v = update.v;
        w = update.w;
        diagnostics = Some(update.diagnostics);
        reduced = reduce_quadratic(model, &v, &w)?;
        prev = Some(lambda);
        iterations = iter + 1;
    }

    let reduced_abscissa = spectral_abscissa(&reduced.er, &reduced.ar)?;
    let reduced_stable = reduced_abscissa < 0.0;
    if !reduced_stable {
        warn!("reduced pencil has spectral abscissa {reduced_abscissa:e}");
    }
    if !converged {
        warn!("qirka did not converge in {} iterations", opts.max_iter);
    }
    Ok(QirkaResult {
        v,
        w,
        reduced,
        iterations,
        converged,
        eig_history,
        log,
        reduced_stable,
        diagnostics,
    })
}

/// Relative residuals of the four Sylvester equations solved in the last
/// basis update: `[V1, V2, W1, W2]`.
pub fn sylvester_residuals(model: &QuadraticModel, diag: &QirkaDiagnostics) -> Result<[f64; 4]> {
    let h = model.h.symmetrize();
    let e = to_complex(&model.e);
    let a = to_complex(&model.a_mu);
    let lam = DMatrix::from_diagonal(&diag.lambda);
    let r = diag.lambda.len();
    let rel = |res: DMatrix<Complex64>, rhs: &DMatrix<Complex64>| res.norm() / rhs.norm().max(f64::MIN_POSITIVE);

    let rhs_v1 = to_complex(&model.b_tilde) * diag.b_hat.transpose();
    let res_v1 = -(&e * &diag.v1 * &lam) - &a * &diag.v1 - &rhs_v1;
    let rhs_v2 = h.mode1_apply_pairs(&diag.v1, &diag.v1)? * diag.h_hat.transpose();
    let res_v2 = -(&e * &diag.v2 * &lam) - &a * &diag.v2 - &rhs_v2;

    let rhs_w1 = to_complex(&model.c).transpose() * &diag.c_hat;
    let res_w1 = -(e.transpose() * &diag.w1 * &lam) - a.transpose() * &diag.w1 - &rhs_w1;
    let x = h.mode2_apply_pairs(&diag.w1, &diag.v1)?;
    let k_mat = DMatrix::from_fn(r * r, r, |row, l| diag.h_hat[(row / r, l * r + row % r)]);
    let rhs_w2 = x * k_mat;
    let res_w2 = -(e.transpose() * &diag.w2 * &lam) - a.transpose() * &diag.w2 - &rhs_w2;
    Ok([
        rel(res_v1, &rhs_v1),
        rel(res_v2, &rhs_v2),
        rel(res_w1, &rhs_w1),
        rel(res_w2, &rhs_w2),
    ])
}

/// Right-hand side `H (P (x) P) H^T` for a symmetric `P`.
pub fn quadratic_reachability_rhs(h: &SparseTensor3, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (fac, signs) = signed_factor(p);
    if fac.ncols() == 0 {
        return Ok(DMatrix::zeros(h.dim(), h.dim()));
    }
    let y = h.mode1_apply_pairs(&fac, &fac)?;
    Ok(signed_gram(&y, &signs, &signs))
}

/// Which factor of `(P (x) Q)` sits on the first tensor mode in the
/// observability right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KroneckerOrder {
    /// `P` on the third mode and `Q` on the first.
    #[default]
    PQ,
    /// `Q` on the third mode and `P` on the first.
    QP,
}

/// Right-hand side `H2 (P (x) Q) H2^T` through the mode-2 unfolding.
pub fn quadratic_observability_rhs(
    h: &SparseTensor3,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    order: KroneckerOrder,
) -> Result<DMatrix<f64>> {
    let (fp, sp) = signed_factor(p);
    let (fq, sq) = signed_factor(q);
    if fp.ncols() == 0 || fq.ncols() == 0 {
        return Ok(DMatrix::zeros(h.dim(), h.dim()));
    }
    Ok(match order {
        KroneckerOrder::PQ => signed_gram(&h.mode2_apply_pairs(&fq, &fp)?, &sq, &sp),
        KroneckerOrder::QP => signed_gram(&h.mode2_apply_pairs(&fp, &fq)?, &sp, &sq),
    })
}

/// `P = F diag(signs) F^T` with negligible eigenvalues dropped.
fn signed_factor(p: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let sym = (p + p.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i].abs() > 1e-15 * max)
        .collect();
    let mut fac = DMatrix::zeros(p.nrows(), keep.len());
    let mut signs = Vec::with_capacity(keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        let lam = eig.eigenvalues[src];
        fac.set_column(dst, &(eig.eigenvectors.column(src) * lam.abs().sqrt()));
        signs.push(lam.signum());
    }
    (fac, signs)
}

/// `Y diag(s_a (x) s_b) Y^T` for pair-indexed columns `a * |s_b| + b`.
fn signed_gram(y: &DMatrix<f64>, sa: &[f64], sb: &[f64]) -> DMatrix<f64> {
    let mut scaled = y.clone();
    for a in 0..sa.len() {
        for b in 0..sb.len() {
            let s = sa[a] * sb[b];
            if s < 0.0 {
                scaled.column_mut(a * sb.len() + b).neg_mut();
            }
        }
    }
    let g = &scaled * y.transpose();
    (&g + g.transpose()) * 0.5
}

/// Two-stage reachability Gramians `(P1, P2)` of the shifted model.
pub fn reachability_gramians(model: &QuadraticModel) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let h = model.h.symmetrize();
    let p1 = solve_gen_lyapunov(&model.e, &model.a_mu, &(&model.b_tilde * model.b_tilde.transpose()))?;
    let rhs = quadratic_reachability_rhs(&h, &p1)?;
    let p2 = solve_gen_lyapunov(&model.e, &model.a_mu, &rhs)?;
    Ok((p1, p2))
}

/// Two-stage observability Gramians `(Q1, Q2)` given the first reachability
/// Gramian.
pub fn observability_gramians(
    model: &QuadraticModel,
    p1: &DMatrix<f64>,
    order: KroneckerOrder,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let h = model.h.symmetrize();
    let et = model.e.transpose();
    let at = model.a_mu.transpose();
    let q1 = solve_gen_lyapunov(&et, &at, &(model.c.transpose() * &model.c))?;
    let rhs = quadratic_observability_rhs(&h, p1, &q1, order)?;
    let q2 = solve_gen_lyapunov(&et, &at, &rhs)?;
    Ok((q1, q2))
}

/// `sqrt(tr(C (P1 + P2) C^T))`.
pub fn truncated_h2_norm(model: &QuadraticModel) -> Result<f64> {
    let (p1, p2) = reachability_gramians(model)?;
    let value = (&model.c * (p1 + p2) * model.c.transpose()).trace();
    Ok(value.max(0.0).sqrt())
}

/// Sorts complex values with [`eigen_order`]; exposed for tests and tools.
pub fn sort_eigenvalues(values: &mut [Complex64]) {
    values.sort_by(eigen_order);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::{assemble_quadratic, shift_and_stabilize, zero_angle_state};
    use crate::linalg::max_principal_sine;
    use crate::network::{PowerNetwork, SecondOrderModel, Topology};

    pub(crate) fn linear_model(e: DMatrix<f64>, a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> QuadraticModel {
        let n = a.nrows();
        QuadraticModel {
            n: 0,
            e,
            a_mu: a,
            h: SparseTensor3::zeros(n),
            b_tilde: b,
            c,
            q0: DVector::zeros(n),
            mu: 0.0,
        }
    }

    fn synth_quadratic(n: usize, topo: Topology, seed: u64, mu: f64) -> QuadraticModel {
        let net = PowerNetwork::synthetic(n, topo, seed).unwrap();
        let model = SecondOrderModel::from_network(&net);
        let lifted = assemble_quadratic(&model);
        shift_and_stabilize(&lifted, &zero_angle_state(n), mu).unwrap()
    }

    #[test]
    fn identity_projection_reproduces_full_model() {
        let model = synth_quadratic(3, Topology::Complete, 2, 1e-2);
        let id = DMatrix::identity(12, 12);
        let red = reduce_quadratic(&model, &id, &id).unwrap();
        assert_eq!(red.er, model.e);
        assert_eq!(red.ar, model.a_mu);
        assert!((red.hr.clone() - model.h.to_dense_mode1()).amax() < 1e-15);
        assert_eq!(red.br, model.b_tilde);
        assert_eq!(red.cr, model.c);
    }

    #[test]
    fn reduced_dimensions_and_petrov_galerkin_identity() {
        let model = synth_quadratic(5, Topology::Ring, 4, 1e-3);
        let big = model.dim();
        let v = crate::linalg::orth(&DMatrix::from_fn(big, 3, |i, j| ((i * 7 + j * 3) as f64 * (j as f64 + 1.0)).sin()), 1e-10).unwrap();
        let w = crate::linalg::orth(&DMatrix::from_fn(big, 3, |i, j| ((i * 5 + j) as f64 * (0.5 + j as f64)).cos()), 1e-10).unwrap();
        let red = reduce_quadratic(&model, &v, &w).unwrap();
        assert_eq!((red.hr.nrows(), red.hr.ncols()), (3, 9));
        let xr = DVector::from_vec(vec![0.3, -0.2, 0.5]);
        let u = DVector::from_vec(vec![1.0, 1.0]);
        let x = &v * &xr;
        let full = &model.a_mu * &x + model.h.mode1_apply(&x, &x).unwrap() + &model.b_tilde * &u;
        let kron = DVector::from_fn(9, |idx, _| xr[idx / 3] * xr[idx % 3]);
        let reduced = &red.ar * &xr + &red.hr * kron + &red.br * &u;
        assert!((w.tr_mul(&full) - reduced).amax() < 1e-12);
        assert!(reduce_quadratic(&model, &DMatrix::zeros(big, 3), &w).is_err());
    }

    #[test]
    fn realify_spans_complex_columns() {
        let lambda = [Complex64::new(-1.0, -2.0), Complex64::new(-1.0, 2.0), Complex64::new(-3.0, 0.0)];
        let z = DMatrix::from_fn(5, 1, |i, _| Complex64::new(i as f64, 1.0 + i as f64));
        let real = DMatrix::from_fn(5, 1, |i, _| Complex64::new((i * i) as f64, 0.0));
        let mut x = DMatrix::from_element(5, 3, Complex64::new(0.0, 0.0));
        x.set_column(0, &z.column(0).map(|v| v.conj()));
        x.set_column(1, &z.column(0));
        x.set_column(2, &real.column(0));
        let out = realify(&x, &lambda);
        assert_eq!(out[(3, 0)], 3.0);
        assert_eq!(out[(3, 1)], 4.0);
        assert_eq!(out[(3, 2)], 9.0);
    }

    #[test]
    fn zero_tensor_is_linear_irka() {
        let e = DMatrix::identity(3, 3);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0, -3.0]));
        let mut b = DMatrix::zeros(3, 2);
        b.column_mut(0).fill(1.0);
        let c = DMatrix::from_element(1, 3, 1.0);
        let model = linear_model(e, a, b, c);
        let res = qirka(&model, 1, QirkaMode::TwoSided, &QirkaOptions::default()).unwrap();
        assert!(res.converged);
        let diag = res.diagnostics.as_ref().unwrap();
        assert_eq!(diag.v2.norm(), 0.0);
        assert_eq!(diag.w2.norm(), 0.0);
        // the optimal one-pole approximant of sum 1/(s+k) has its pole where
        // the H2 gradient vanishes; compare with a fine grid search
        let pole = -res.reduced.ar[(0, 0)] / res.reduced.er[(0, 0)];
        let score = |p: f64| {
            let s: f64 = (1..=3).map(|k| 1.0 / (k as f64 + p)).sum();
            2.0 * p * s * s
        };
        let best = (1..=200_000)
            .map(|i| 0.5 + i as f64 * 2e-5)
            .max_by(|x, y| score(*x).total_cmp(&score(*y)))
            .unwrap();
        assert!((pole - best).abs() / best < 1e-3, "pole {pole} vs {best}");
    }

    #[test]
    fn one_sided_uses_galerkin() {
        let model = synth_quadratic(4, Topology::Ring, 1, 1e-2);
        let res = qirka(&model, 3, QirkaMode::OneSided, &QirkaOptions::default()).unwrap();
        assert_eq!(res.v, res.w);
        assert!((res.v.tr_mul(&res.v) - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn two_sided_certificates_small_network() {
        let model = synth_quadratic(5, Topology::Complete, 2, 1e-2);
        let res = qirka(&model, 3, QirkaMode::TwoSided, &QirkaOptions::default()).unwrap();
        assert!((res.w.tr_mul(&res.w) - DMatrix::identity(3, 3)).amax() < 1e-12);
        let diag = res.diagnostics.as_ref().unwrap();
        for r in sylvester_residuals(&model, diag).unwrap() {
            assert!(r <= 1e-8, "{r}");
        }
        // realified basis spans the same space as the complex one
        let complex = &diag.v1 + &diag.v2;
        let mut stacked = DMatrix::zeros(complex.nrows(), 2 * complex.ncols());
        stacked.columns_mut(0, 3).copy_from(&complex.map(|z| z.re));
        stacked.columns_mut(3, 3).copy_from(&complex.map(|z| z.im));
        let sine = max_principal_sine(&stacked, &res.v).unwrap();
        assert!(sine < 1e-8, "{sine}");
        for lam in &res.eig_history {
            for z in lam {
                assert!(lam.iter().any(|w| (*w - z.conj()).norm() == 0.0));
            }
        }
    }

    #[test]
    fn order_validation() {
        let model = synth_quadratic(3, Topology::Ring, 1, 1e-2);
        assert!(qirka(&model, 0, QirkaMode::TwoSided, &QirkaOptions::default()).is_err());
        assert!(qirka(&model, 12, QirkaMode::TwoSided, &QirkaOptions::default()).is_err());
    }

    #[test]
    fn h2_norm_scalar() {
        let mut b = DMatrix::zeros(1, 2);
        b[(0, 0)] = 1.0;
        let model = linear_model(
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, -1.0),
            b,
            DMatrix::identity(1, 1),
        );
        assert!((truncated_h2_norm(&model).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        let zero = linear_model(
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::zeros(1, 2),
            DMatrix::identity(1, 1),
        );
        assert_eq!(truncated_h2_norm(&zero).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_rhs_matches_dense_kronecker() {
        let model = synth_quadratic(2, Topology::Ring, 3, 1e-2);
        let h = model.h.symmetrize();
        let big = model.dim();
        let x = DMatrix::from_fn(big, big, |i, j| ((i + 2 * j) as f64 * 0.3).sin());
        let p = &x * x.transpose();
        let y = DMatrix::from_fn(big, big, |i, j| ((3 * i + j) as f64 * 0.2).cos());
        let q = &y * y.transpose();
        let dense = h.to_dense_mode1();
        let kron = p.kronecker(&p);
        let expected: DMatrix<f64> = &dense * kron * dense.transpose();
        let got = quadratic_reachability_rhs(&h, &p).unwrap();
        assert!((got - &expected).amax() <= 1e-9 * expected.amax());

        let mut h2 = DMatrix::<f64>::zeros(big, big * big);
        for &(i, j, k, v) in h.entries() {
            h2[(j, i * big + k)] += v;
        }
        // mode-2 unfolding columns pair (mode-1 index, mode-3 index)
        let expected: DMatrix<f64> = &h2 * q.kronecker(&p) * h2.transpose();
        let got = quadratic_observability_rhs(&h, &p, &q, KroneckerOrder::PQ).unwrap();
        assert!((got - &expected).amax() <= 1e-9 * expected.amax());
        let expected: DMatrix<f64> = &h2 * p.kronecker(&q) * h2.transpose();
        let got = quadratic_observability_rhs(&h, &p, &q, KroneckerOrder::QP).unwrap();
        assert!((got - &expected).amax() <= 1e-9 * expected.amax());
    }
}
