//! Dense kernels: shifted solves, small generalized eigenproblems,
//! generalized Lyapunov equations and orthonormalization.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{check_len, Error, Result};

pub const DEFAULT_ORTH_TOL: f64 = 1e-10;

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

fn singular_shift(lambda: Complex64) -> Error {
    Error::SingularShift {
        re: lambda.re,
        im: lambda.im,
    }
}

fn check_square(what: &'static str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    check_len(what, n, m.nrows())?;
    check_len(what, n, m.ncols())
}

/// Solves `(-lambda E - A) x = rhs` by dense complex LU.
pub fn solve_shifted(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    lambda: Complex64,
    rhs: &DVector<Complex64>,
) -> Result<DVector<Complex64>> {
    let n = a.nrows();
    check_square("solve_shifted (A)", a, n)?;
    check_square("solve_shifted (E)", e, n)?;
    check_len("solve_shifted (rhs)", n, rhs.len())?;
    let k = DMatrix::from_fn(n, n, |i, j| -lambda * e[(i, j)] - a[(i, j)]);
    let scale = k.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let lu = k.lu();
    let u = lu.u();
    if scale == 0.0 || u.diagonal().iter().any(|z| z.norm() <= 1e-14 * scale) {
        return Err(singular_shift(lambda));
    }
    lu.solve(rhs).ok_or_else(|| singular_shift(lambda))
}

/// Reusable solver for `(-lambda E - A) x = b` and its transpose over many
/// shifts, using one Hessenberg reduction of `E^{-1} A`.
#[derive(Debug, Clone)]
pub struct ShiftedSolver {
    n: usize,
    /// Orthogonal factor of the Hessenberg reduction.
    q: DMatrix<Complex64>,
    hess: DMatrix<Complex64>,
    e_inv_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    e_t_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

struct HessLu {
    u: DMatrix<Complex64>,
    mult: Vec<Complex64>,
    swapped: Vec<bool>,
}

impl HessLu {
    fn factor(hess: &DMatrix<Complex64>, lambda: Complex64) -> Result<Self> {
        let n = hess.nrows();
        let mut u = hess.clone();
        for k in 0..n {
            u[(k, k)] += lambda;
        }
        let scale = u.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut mult = vec![Complex64::new(0.0, 0.0); n.saturating_sub(1)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for k in 0..n.saturating_sub(1) {
            if u[(k + 1, k)].norm() > u[(k, k)].norm() {
                u.swap_rows(k, k + 1);
                swapped[k] = true;
            }
            let pivot = u[(k, k)];
            if pivot.norm() <= 1e-14 * scale {
                return Err(singular_shift(lambda));
            }
            let l = u[(k + 1, k)] / pivot;
            mult[k] = l;
            u[(k + 1, k)] = Complex64::new(0.0, 0.0);
            for c in k + 1..n {
                let delta = l * u[(k, c)];
                u[(k + 1, c)] -= delta;
            }
        }
        if n > 0 && u[(n - 1, n - 1)].norm() <= 1e-14 * scale {
            return Err(singular_shift(lambda));
        }
        Ok(Self { u, mult, swapped })
    }

    fn solve(&self, b: &mut DVector<Complex64>) {
        let n = b.len();
        for k in 0..n.saturating_sub(1) {
            if self.swapped[k] {
                b.swap_rows(k, k + 1);
            }
            let delta = self.mult[k] * b[k];
            b[k + 1] -= delta;
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for c in i + 1..n {
                acc -= self.u[(i, c)] * b[c];
            }
            b[i] = acc / self.u[(i, i)];
        }
    }

    /// Solves with the plain (non-conjugate) transpose.
    fn solve_transpose(&self, b: &mut DVector<Complex64>) {
        let n = b.len();
        for i in 0..n {
            let mut acc = b[i];
            for r in 0..i {
                acc -= self.u[(r, i)] * b[r];
            }
            b[i] = acc / self.u[(i, i)];
        }
        for k in (0..n.saturating_sub(1)).rev() {
            let delta = self.mult[k] * b[k + 1];
            b[k] -= delta;
            if self.swapped[k] {
                b.swap_rows(k, k + 1);
            }
        }
    }
}

impl ShiftedSolver {
    pub fn new(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        check_square("ShiftedSolver (A)", a, n)?;
        check_square("ShiftedSolver (E)", e, n)?;
        let e_inv_lu = e.clone().lu();
        let f = e_inv_lu
            .solve(a)
            .ok_or_else(|| Error::Singular("E in shifted solver".into()))?;
        let (q, hess) = f.hessenberg().unpack();
        Ok(Self {
            n,
            q: to_complex(&q),
            hess: to_complex(&hess),
            e_inv_lu,
            e_t_lu: e.transpose().lu(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn e_solve(&self, b: &DVector<Complex64>, transpose: bool) -> Result<DVector<Complex64>> {
        let lu = if transpose { &self.e_t_lu } else { &self.e_inv_lu };
        let re = lu.solve(&b.map(|z| z.re));
        let im = lu.solve(&b.map(|z| z.im));
        match (re, im) {
            (Some(re), Some(im)) => Ok(DVector::from_fn(b.len(), |i, _| Complex64::new(re[i], im[i]))),
            _ => Err(Error::Singular("E in shifted solver".into())),
        }
    }

    /// `x` with `(-lambda E - A) x = rhs`.
    pub fn solve(&self, lambda: Complex64, rhs: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        check_len("shifted solve", self.n, rhs.len())?;
        let lu = HessLu::factor(&self.hess, lambda)?;
        let mut y = self.q.tr_mul(&self.e_solve(rhs, false)?);
        lu.solve(&mut y);
        Ok(-(&self.q * y))
    }

    /// `w` with `(-lambda E - A)^T w = rhs`.
    pub fn solve_transpose(
        &self,
        lambda: Complex64,
        rhs: &DVector<Complex64>,
    ) -> Result<DVector<Complex64>> {
        check_len("shifted transpose solve", self.n, rhs.len())?;
        let lu = HessLu::factor(&self.hess, lambda)?;
        let mut y = self.q.tr_mul(rhs);
        lu.solve_transpose(&mut y);
        let z = -(&self.q * y);
        self.e_solve(&z, true)
    }
}

/// Eigenvalues `Lambda` and right eigenvectors `R` of a small pencil,
/// `A_r R = E_r R diag(Lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPair {
    pub r: DMatrix<Complex64>,
    pub lambda: DVector<Complex64>,
}

/// Sort key that keeps conjugate pairs adjacent (negative imaginary first).
pub fn eigen_order(a: &Complex64, b: &Complex64) -> Ordering {
    a.re.total_cmp(&b.re)
        .then(a.im.abs().total_cmp(&b.im.abs()))
        .then(a.im.total_cmp(&b.im))
}

/// Eigenvalues through a capped real Schur iteration, retrying on the
/// transpose when the first attempt stalls.
fn eigenvalues(f: &DMatrix<f64>) -> Result<DVector<Complex64>> {
    let cap = 100 * f.nrows().max(10);
    nalgebra::Schur::try_new(f.clone(), f64::EPSILON, cap)
        .or_else(|| nalgebra::Schur::try_new(f.transpose(), f64::EPSILON, cap))
        .map(|s| s.complex_eigenvalues())
        .ok_or(Error::NoConvergence {
            iterations: cap,
            residual: f64::NAN,
        })
}

/// Eigenvalues of a real matrix with conjugate pairs made exact and sorted
/// by [`eigen_order`].
pub fn sorted_eigenvalues(f: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let raw = eigenvalues(f)?;
    let scale = raw.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let real_tol = 1e-10 * scale;
    let mut reals = Vec::new();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for &z in raw.iter() {
        if z.im.abs() <= real_tol {
            reals.push(Complex64::new(z.re, 0.0));
        } else if z.im > 0.0 {
            upper.push(z);
        } else {
            lower.push(z);
        }
    }
    upper.sort_by(eigen_order);
    lower.sort_by(|a, b| eigen_order(&a.conj(), &b.conj()));
    let mut out = reals;
    if upper.len() == lower.len() {
        for (u, l) in upper.iter().zip(&lower) {
            let avg = Complex64::new(0.5 * (u.re + l.re), 0.5 * (u.im - l.im));
            out.push(avg);
            out.push(avg.conj());
        }
    } else {
        out.extend(upper.iter().chain(&lower).copied());
    }
    out.sort_by(eigen_order);
    Ok(out)
}

fn null_vector(k: &DMatrix<Complex64>) -> DVector<Complex64> {
    let (_, _, v) = Complex64::thin_svd(k);
    v.column(v.ncols() - 1).into_owned()
}

fn normalize_phase(mut v: DVector<Complex64>) -> DVector<Complex64> {
    let norm = v.norm();
    if norm > 0.0 {
        v /= Complex64::new(norm, 0.0);
    }
    let (mut best, mut best_abs) = (Complex64::new(1.0, 0.0), -1.0);
    for z in v.iter() {
        // small slack so ties resolve to the first index deterministically
        if z.norm() > best_abs * (1.0 + 1e-12) {
            best_abs = z.norm();
            best = *z;
        }
    }
    if best_abs > 0.0 {
        let phase = best.conj() / best.norm();
        v *= phase;
    }
    v
}

/// 2-norm condition number via singular values.
pub fn condition_number<T: SvdScalar>(m: &DMatrix<T>) -> f64 {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Spectral decomposition of a small pencil `(E_r, A_r)`.
pub fn spectral_decompose(er: &DMatrix<f64>, ar: &DMatrix<f64>) -> Result<SpectralPair> {
    let r = ar.nrows();
    check_square("spectral_decompose (A_r)", ar, r)?;
    check_square("spectral_decompose (E_r)", er, r)?;
    let f = er
        .clone()
        .lu()
        .solve(ar)
        .filter(|m| m.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::Singular("reduced E_r".into()))?;
    let lambda = sorted_eigenvalues(&f)?;
    let fc = to_complex(&f);
    let mut vecs = DMatrix::from_element(r, r, Complex64::new(0.0, 0.0));
    let mut idx = 0;
    while idx < r {
        let lam = lambda[idx];
        let paired = lam.im != 0.0 && idx + 1 < r && lambda[idx + 1] == lam.conj();
        let target = if paired { lambda[idx + 1] } else { lam };
        let mut k = fc.clone();
        for d in 0..r {
            k[(d, d)] -= target;
        }
        let mut v = normalize_phase(null_vector(&k));
        if lam.im == 0.0 {
            v = v.map(|z| Complex64::new(z.re, 0.0));
            v = normalize_phase(v);
        }
        if paired {
            vecs.set_column(idx, &v.map(|z| z.conj()));
            vecs.set_column(idx + 1, &v);
            idx += 2;
        } else {
            vecs.set_column(idx, &v);
            idx += 1;
        }
    }
    let cond = condition_number(&vecs);
    if !(cond <= 1e12) {
        return Err(Error::Defective { cond });
    }
    Ok(SpectralPair {
        r: vecs,
        lambda: DVector::from_vec(lambda),
    })
}

/// Largest real part of the eigenvalues of `(E, A)`.
pub fn spectral_abscissa(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<f64> {
    let f = e
        .clone()
        .lu()
        .solve(a)
        .ok_or_else(|| Error::Singular("E in spectral abscissa".into()))?;
    Ok(eigenvalues(&f)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Complex Schur form `F = U T U^H` obtained from the real Schur form by
/// rotating away the 2x2 diagonal blocks. Going through the real form avoids
/// stalls of the complex QR iteration on highly repeated eigenvalues.
fn complex_schur(f: &DMatrix<f64>) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let n = f.nrows();
    let schur = f
        .clone()
        .try_schur(f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::NoConvergence {
            iterations: 100 * n.max(10),
            residual: f64::NAN,
        })?;
    let (q, t) = schur.unpack();
    let mut u = to_complex(&q);
    let mut t = to_complex(&t);
    for m in (1..n).rev() {
        let sub = t[(m, m - 1)].re;
        if sub == 0.0 {
            continue;
        }
        let (a, b, c, d) = (t[(m - 1, m - 1)], t[(m - 1, m)], t[(m, m - 1)], t[(m, m)]);
        let half_tr = (a + d) * 0.5;
        let disc = (half_tr * half_tr - (a * d - b * c)).sqrt();
        let shift = half_tr + disc - d;
        let r = (shift.norm_sqr() + sub * sub).sqrt();
        let (cs, sn) = (shift / r, sub / r);
        for col in m - 1..n {
            let (x, y) = (t[(m - 1, col)], t[(m, col)]);
            t[(m - 1, col)] = cs.conj() * x + y * sn;
            t[(m, col)] = y * cs - x * sn;
        }
        for row in 0..=m {
            let (x, y) = (t[(row, m - 1)], t[(row, m)]);
            t[(row, m - 1)] = x * cs + y * sn;
            t[(row, m)] = y * cs.conj() - x * sn;
        }
        for row in 0..n {
            let (x, y) = (u[(row, m - 1)], u[(row, m)]);
            u[(row, m - 1)] = x * cs + y * sn;
            u[(row, m)] = y * cs.conj() - x * sn;
        }
        t[(m, m - 1)] = Complex64::new(0.0, 0.0);
    }
    Ok((u, t))
}

/// Solves `A P E^T + E P A^T + Q = 0` for symmetric `P`.
pub fn solve_gen_lyapunov(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    check_square("solve_gen_lyapunov (A)", a, n)?;
    check_square("solve_gen_lyapunov (E)", e, n)?;
    check_square("solve_gen_lyapunov (Q)", q, n)?;
    let e_lu = e.clone().lu();
    let f = e_lu
        .solve(a)
        .ok_or_else(|| Error::Singular("E in Lyapunov solve".into()))?;
    // F = U T U^H (upper) or, when only F^T = U T U^H converges, F = U T^H U^H
    let (u, t, upper) = match complex_schur(&f) {
        Ok((u, t)) => (u, t, true),
        Err(_) => {
            let (u, t) = complex_schur(&f.transpose())?;
            (u, t, false)
        }
    };
    let abscissa = t
        .diagonal()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= 0.0 {
        return Err(Error::Unstable {
            abscissa,
            hint: String::new(),
        });
    }

    let solve = |rhs: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let left = e_lu
            .solve(rhs)
            .ok_or_else(|| Error::Singular("E in Lyapunov solve".into()))?;
        let q_tilde = e_lu
            .solve(&left.transpose())
            .ok_or_else(|| Error::Singular("E in Lyapunov solve".into()))?;
        let c = u.adjoint() * to_complex(&q_tilde) * &u;
        let x = if upper {
            triangular_lyapunov_upper(&t, &c)
        } else {
            triangular_lyapunov_lower(&t, &c)
        };
        let p = (&u * x * u.adjoint()).map(|z| z.re);
        Ok((&p + p.transpose()) * 0.5)
    };
    let residual_of = |p: &DMatrix<f64>| a * p * e.transpose() + e * p * a.transpose() + q;

    let mut p = solve(q)?;
    let qn = q.norm();
    if qn == 0.0 {
        return Ok(p);
    }
    let mut resid = residual_of(&p);
    for _ in 0..3 {
        if resid.norm() <= 1e-13 * qn {
            break;
        }
        let refined = &p + solve(&resid)?;
        let next = residual_of(&refined);
        if next.norm() >= resid.norm() {
            break;
        }
        p = refined;
        resid = next;
    }
    let residual = resid.norm() / qn;
    if !(residual <= 1e-8) {
        return Err(Error::Residual {
            what: "generalized Lyapunov",
            residual,
            tol: 1e-8,
        });
    }
    Ok(p)
}

/// Solves `T Y + Y T^H = -C` for upper-triangular `T`.
fn triangular_lyapunov_upper(t: &DMatrix<Complex64>, c: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = t.nrows();
    let zero = Complex64::new(0.0, 0.0);
    let mut x = DMatrix::from_element(n, n, zero);
    for j in (0..n).rev() {
        let mut rhs: DVector<Complex64> = -c.column(j);
        for k in j + 1..n {
            let coeff = t[(j, k)].conj();
            if coeff != zero {
                rhs.axpy(-coeff, &x.column(k), Complex64::new(1.0, 0.0));
            }
        }
        let shift = t[(j, j)].conj();
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for col in i + 1..n {
                acc -= t[(i, col)] * rhs[col];
            }
            rhs[i] = acc / (t[(i, i)] + shift);
        }
        x.set_column(j, &rhs);
    }
    x
}

/// Solves `T^H Y + Y T = -C` for upper-triangular `T`.
fn triangular_lyapunov_lower(t: &DMatrix<Complex64>, c: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = t.nrows();
    let zero = Complex64::new(0.0, 0.0);
    let mut x = DMatrix::from_element(n, n, zero);
    for j in 0..n {
        let mut rhs: DVector<Complex64> = -c.column(j);
        for k in 0..j {
            let coeff = t[(k, j)];
            if coeff != zero {
                rhs.axpy(-coeff, &x.column(k), Complex64::new(1.0, 0.0));
            }
        }
        let shift = t[(j, j)];
        for i in 0..n {
            let mut acc = rhs[i];
            for l in 0..i {
                acc -= t[(l, i)].conj() * rhs[l];
            }
            rhs[i] = acc / (t[(i, i)].conj() + shift);
        }
        x.set_column(j, &rhs);
    }
    x
}

/// Relative Lyapunov residual `||A P E^T + E P A^T + Q|| / ||Q||`.
pub fn lyapunov_residual(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let r = a * p * e.transpose() + e * p * a.transpose() + q;
    let qn = q.norm();
    if qn == 0.0 {
        r.norm()
    } else {
        r.norm() / qn
    }
}

/// Scalars whose dense SVD goes through faer.
pub trait SvdScalar: nalgebra::ComplexField<RealField = f64> + Copy {
    /// Thin SVD `x = U diag(s) V^H`, singular values in decreasing order.
    fn thin_svd(x: &DMatrix<Self>) -> (DMatrix<Self>, DVector<f64>, DMatrix<Self>);
}

macro_rules! impl_svd_scalar {
    ($t:ty) => {
        impl SvdScalar for $t {
            fn thin_svd(x: &DMatrix<Self>) -> (DMatrix<Self>, DVector<f64>, DMatrix<Self>) {
                let (m, n) = x.shape();
                let k = m.min(n);
                if k == 0 {
                    return (DMatrix::zeros(m, 0), DVector::zeros(0), DMatrix::zeros(n, 0));
                }
                if x.iter().any(|z| !nalgebra::ComplexField::is_finite(z)) {
                    let nan = <$t as nalgebra::ComplexField>::from_real(f64::NAN);
                    return (
                        DMatrix::from_element(m, k, nan),
                        DVector::from_element(k, f64::NAN),
                        DMatrix::from_element(n, k, nan),
                    );
                }
                let mat = faer::Mat::<$t>::from_fn(m, n, |i, j| x[(i, j)]);
                let svd = mat.thin_svd().expect("faer SVD converges on finite input");
                let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
                (
                    DMatrix::from_fn(m, k, |i, j| u[(i, j)]),
                    DVector::from_fn(k, |i, _| real_part(s[i])),
                    DMatrix::from_fn(n, k, |i, j| v[(i, j)]),
                )
            }
        }
    };
}

impl_svd_scalar!(f64);
impl_svd_scalar!(Complex64);

fn real_part<T: nalgebra::ComplexField<RealField = f64>>(z: T) -> f64 {
    z.real()
}

/// Singular values in decreasing order.
pub fn singular_values<T: SvdScalar>(x: &DMatrix<T>) -> DVector<f64> {
    T::thin_svd(x).1
}

/// Thin SVD with singular triplets in decreasing order and each left
/// vector's largest-magnitude entry made positive.
pub fn sorted_svd(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (mut u, s, mut v) = f64::thin_svd(x);
    for j in 0..s.len() {
        let pivot = u.column(j).iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    (u, s, v)
}

/// Orthonormal basis for the numerical range of `x`; singular values at or
/// below `tol * sigma_max` are dropped.
pub fn orth(x: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if x.ncols() == 0 || x.amax() == 0.0 {
        return Err(Error::RankDeficient("orth of an all-zero matrix".into()));
    }
    let (u, s, _) = sorted_svd(x);
    let rank = s.iter().filter(|&&v| v > tol * s[0]).count();
    Ok(u.columns(0, rank).into_owned())
}

/// Sine of the largest principal angle between `range(a)` and `range(b)`;
/// when the dimensions differ, it measures how far the smaller space is
/// from lying inside the larger one.
pub fn max_principal_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let qa = orth(a, DEFAULT_ORTH_TOL)?;
    let qb = orth(b, DEFAULT_ORTH_TOL)?;
    let (outer, inner) = if qa.ncols() >= qb.ncols() { (qa, qb) } else { (qb, qa) };
    let resid = &inner - &outer * (outer.tr_mul(&inner));
    Ok(singular_values(&resid)
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .min(1.0))
}

/// Largest principal angle in radians.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    Ok(max_principal_sine(a, b)?.asin())
}

/// Symmetric square-root factor `R` with `R^T R = P` after clipping negative
/// eigenvalues of `P` to zero. Returns `R` and the clipped mass.
pub fn sym_sqrt_factor(p: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = (p + p.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut clipped = 0.0;
    let mut r = eig.eigenvectors.transpose();
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = if lam > 0.0 {
            lam.sqrt()
        } else {
            clipped += -lam;
            0.0
        };
        r.row_mut(i).scale_mut(s);
    }
    (r, clipped)
}
