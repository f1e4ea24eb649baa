//! Exact quadratic lifting of the swing model.
//!
//! With `q = [delta; delta'; sin(delta); cos(delta)]` the network dynamics
//! become `E q' = A q + H (q (x) q) + B u` where `E = blkdiag(I, M, I, I)`.
//! Shifting by a reference state `q0` and subtracting `mu E` gives the
//! stabilized model used by the reduction routines.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linalg::spectral_abscissa;
use crate::network::SecondOrderModel;
use crate::tensor::{IndexPermutation, SparseTensor3};

/// Default stabilizing shift.
pub const DEFAULT_MU: f64 = 1e-3;

/// `q = [delta; ddelta; sin(delta); cos(delta)]`.
pub fn lift_state(delta: &DVector<f64>, ddelta: &DVector<f64>) -> Result<DVector<f64>> {
    let n = delta.len();
    check_len("lift_state", n, ddelta.len())?;
    let mut q = DVector::zeros(4 * n);
    for i in 0..n {
        q[i] = delta[i];
        q[n + i] = ddelta[i];
        q[2 * n + i] = delta[i].sin();
        q[3 * n + i] = delta[i].cos();
    }
    Ok(q)
}

/// Sparse `n x n^2` operator acting on `u (x) v` (column `k*n + j` multiplies
/// `u_k v_j`).
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerBlock {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl KroneckerBlock {
    fn from_map(n: usize, acc: BTreeMap<(usize, usize), f64>) -> Self {
        let entries = acc
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((r, c), v)| (r, c, v))
            .collect();
        Self { n, entries }
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// The `k`-th `n x n` block (columns `k*n .. (k+1)*n`).
    pub fn block(&self, k: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for &(r, c, v) in &self.entries {
            if c / self.n == k {
                out[(r, c % self.n)] += v;
            }
        }
        out
    }

    pub fn apply(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("kronecker block (u)", self.n, u.len())?;
        check_len("kronecker block (v)", self.n, v.len())?;
        let mut out = DVector::zeros(self.n);
        for &(r, c, val) in &self.entries {
            out[r] += val * u[c / self.n] * v[c % self.n];
        }
        Ok(out)
    }
}

/// Quadratic coupling operators with
/// `-f(delta) = Z (s (x) c) + Psi (c (x) c) + Psi (s (x) s)`
/// and `Phi (u (x) v) = u o v`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBlocks {
    pub z: KroneckerBlock,
    pub psi: KroneckerBlock,
    pub phi: KroneckerBlock,
}

pub fn build_coupling_blocks(model: &SecondOrderModel) -> CouplingBlocks {
    let n = model.n();
    let mut z = BTreeMap::new();
    let mut psi = BTreeMap::new();
    for c in &model.couplings {
        let kc = c.k * c.gamma.cos();
        let ks = 0.5 * c.k * c.gamma.sin();
        for (k, j) in [(c.i, c.j), (c.j, c.i)] {
            let col = k * n + j;
            *z.entry((j, col)).or_insert(0.0) += kc;
            *z.entry((k, col)).or_insert(0.0) -= kc;
            *psi.entry((j, col)).or_insert(0.0) += ks;
            *psi.entry((k, col)).or_insert(0.0) += ks;
        }
    }
    let phi = (0..n).map(|k| ((k, k * n + k), 1.0)).collect();
    CouplingBlocks {
        z: KroneckerBlock::from_map(n, z),
        psi: KroneckerBlock::from_map(n, psi),
        phi: KroneckerBlock::from_map(n, phi),
    }
}

/// Unshifted lifted model `E q' = A q + H (q (x) q) + B u`, `y = C q`.
#[derive(Debug, Clone)]
pub struct LiftedModel {
    pub n: usize,
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub h: SparseTensor3,
    pub b: DVector<f64>,
    pub c: DMatrix<f64>,
}

pub fn assemble_quadratic(model: &SecondOrderModel) -> LiftedModel {
    let n = model.n();
    let big = 4 * n;
    let mut e = DMatrix::identity(big, big);
    let mut a = DMatrix::zeros(big, big);
    for i in 0..n {
        e[(n + i, n + i)] = model.mass[i];
        a[(i, n + i)] = 1.0;
        a[(n + i, n + i)] = -model.damping[i];
    }
    let mut b = DVector::zeros(big);
    b.rows_mut(n, n).copy_from(&model.input);
    let mut c = DMatrix::zeros(model.p(), big);
    c.columns_mut(0, n).copy_from(&model.output);

    let blocks = build_coupling_blocks(model);
    let perm = IndexPermutation::revised_kronecker(n);
    let map = perm.map();
    let mut raw = Vec::new();
    // (row block, first factor block, second factor block, operator, weight)
    let placements: [(usize, usize, usize, &KroneckerBlock, f64); 8] = [
        (2, 1, 3, &blocks.phi, 0.5),
        (3, 1, 2, &blocks.phi, -0.5),
        (1, 2, 2, &blocks.psi, 1.0),
        (1, 2, 3, &blocks.z, 0.5),
        (3, 2, 1, &blocks.phi, -0.5),
        (1, 3, 2, &blocks.z, -0.5),
        (1, 3, 3, &blocks.psi, 1.0),
        (2, 3, 1, &blocks.phi, 0.5),
    ];
    for &(row_block, fa, fb, op, weight) in &placements {
        for &(r, col, v) in op.entries() {
            let tilde = fa * 4 * n * n + fb * n * n + col;
            let std_col = map[tilde];
            raw.push((row_block * n + r, std_col / big, std_col % big, weight * v));
        }
    }
    let h = SparseTensor3::from_entries(big, raw).expect("lifted coordinates in range");
    LiftedModel { n, e, a, h, b, c }
}

impl LiftedModel {
    /// `A q + H (q (x) q) + B u`.
    pub fn rhs(&self, q: &DVector<f64>, u: f64) -> Result<DVector<f64>> {
        let mut out = &self.a * q + self.h.mode1_apply(q, q)?;
        out.axpy(u, &self.b, 1.0);
        Ok(out)
    }
}

/// Shifted and stabilized quadratic model
/// `E x' = A_mu x + H (x (x) x) + B~ [u; 1]` with `x = q - q0`.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    pub n: usize,
    pub e: DMatrix<f64>,
    pub a_mu: DMatrix<f64>,
    pub h: SparseTensor3,
    /// `N x 2`: input column and constant drift column.
    pub b_tilde: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q0: DVector<f64>,
    pub mu: f64,
}

impl QuadraticModel {
    pub fn dim(&self) -> usize {
        self.e.nrows()
    }

    /// Linear part before the `mu` shift.
    pub fn a_tilde(&self) -> DMatrix<f64> {
        &self.a_mu + &self.e * self.mu
    }

    pub fn spectral_abscissa(&self) -> Result<f64> {
        spectral_abscissa(&self.e, &self.a_mu)
    }

    /// Fails with a suggested `mu` when `(E, A_mu)` is not asymptotically
    /// stable.
    pub fn check_stability(&self) -> Result<()> {
        let abscissa = self.spectral_abscissa()?;
        if abscissa < 0.0 {
            return Ok(());
        }
        let base = abscissa + self.mu;
        let hint = (-8..=4)
            .map(|k| 10f64.powi(k))
            .find(|&m| base - m < 0.0)
            .map(|m| format!(" (try mu = {m:e})"))
            .unwrap_or_default();
        Err(Error::Unstable { abscissa, hint })
    }
}

/// Shifts the lifted model to `x = q - q0` and subtracts `mu E`, without a
/// stability check.
pub fn shift_model(lifted: &LiftedModel, q0: &DVector<f64>, mu: f64) -> Result<QuadraticModel> {
    let big = lifted.e.nrows();
    check_len("shift (q0)", big, q0.len())?;
    let mut a_tilde = lifted.a.clone();
    for &(i, j, k, v) in lifted.h.entries() {
        a_tilde[(i, j)] += v * q0[k];
        a_tilde[(i, k)] += v * q0[j];
    }
    let a_mu = a_tilde - &lifted.e * mu;
    let drift = &lifted.a * q0 + lifted.h.mode1_apply(q0, q0)?;
    let mut b_tilde = DMatrix::zeros(big, 2);
    b_tilde.set_column(0, &lifted.b);
    b_tilde.set_column(1, &drift);
    Ok(QuadraticModel {
        n: lifted.n,
        e: lifted.e.clone(),
        a_mu,
        h: lifted.h.clone(),
        b_tilde,
        c: lifted.c.clone(),
        q0: q0.clone(),
        mu,
    })
}

/// [`shift_model`] followed by a stability check.
pub fn shift_and_stabilize(
    lifted: &LiftedModel,
    q0: &DVector<f64>,
    mu: f64,
) -> Result<QuadraticModel> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
    }
    let model = shift_model(lifted, q0, mu)?;
    model.check_stability()?;
    Ok(model)
}

/// Lift of the zero state.
pub fn zero_angle_state(n: usize) -> DVector<f64> {
    let mut q0 = DVector::zeros(4 * n);
    q0.rows_mut(3 * n, n).fill(1.0);
    q0
}

/// Lifts an equilibrium angle vector and checks that the quadratic right-hand
/// side vanishes there for `u = 1`.
pub fn lift_equilibrium(model: &SecondOrderModel, delta_star: &DVector<f64>) -> Result<DVector<f64>> {
    let n = model.n();
    check_len("lift_equilibrium", n, delta_star.len())?;
    let q = lift_state(delta_star, &DVector::zeros(n))?;
    let lifted = assemble_quadratic(model);
    let residual = lifted.rhs(&q, 1.0)?.amax();
    if !(residual <= 1e-8) {
        return Err(Error::Residual {
            what: "lifted equilibrium",
            residual,
            tol: 1e-8,
        });
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Coupling, Node, OutputSpec, PowerNetwork, Topology};
    use std::f64::consts::PI;

    fn two_node(gamma: f64, b: f64) -> SecondOrderModel {
        let net = PowerNetwork::new(
            2.0,
            vec![Node { j: 1.0, d: 4.0, b }, Node { j: 2.0, d: 6.0, b: -b }],
            [Coupling { i: 0, j: 1, k: 1.0, gamma }],
            OutputSpec::Mean,
        )
        .unwrap();
        SecondOrderModel::from_network(&net)
    }

    fn synth(n: usize, seed: u64) -> SecondOrderModel {
        SecondOrderModel::from_network(&PowerNetwork::synthetic(n, Topology::Random(0.5), seed).unwrap())
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn lift_state_examples() {
        let q = lift_state(&v(&[0.0, 0.0]), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(q, zero_angle_state(2));
        let q = lift_state(&v(&[PI / 2.0]), &v(&[3.0])).unwrap();
        assert_eq!(q[0], PI / 2.0);
        assert_eq!(q[1], 3.0);
        assert_eq!(q[2], 1.0);
        assert!(q[3].abs() < 1e-16);
        assert!(lift_state(&v(&[0.0]), &v(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn z_blocks_two_node() {
        let blocks = build_coupling_blocks(&two_node(0.0, 0.5));
        assert_eq!(blocks.z.block(0), DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 1.0]));
        assert_eq!(blocks.z.block(1), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]));
    }

    #[test]
    fn psi_block_two_node() {
        let blocks = build_coupling_blocks(&two_node(PI / 2.0, 0.5));
        let psi1 = blocks.psi.block(0);
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.0, 0.5]);
        assert!((psi1 - expected).amax() < 1e-15);
        // with this sign the lifted form reproduces f at a shifted angle
        let model = two_node(PI / 2.0, 0.5);
        let delta = v(&[0.0, 0.0]);
        let (s, c) = (delta.map(f64::sin), delta.map(f64::cos));
        let minus_f = blocks.z.apply(&s, &c).unwrap()
            + blocks.psi.apply(&c, &c).unwrap()
            + blocks.psi.apply(&s, &s).unwrap();
        assert!((minus_f + model.eval_f(&delta).unwrap()).amax() < 1e-15);
    }

    #[test]
    fn f_equivalence_two_node() {
        let model = two_node(0.0, 0.5);
        let blocks = build_coupling_blocks(&model);
        let delta = v(&[PI / 2.0, 0.0]);
        let (s, c) = (delta.map(f64::sin), delta.map(f64::cos));
        let f = -(blocks.z.apply(&s, &c).unwrap()
            + blocks.psi.apply(&c, &c).unwrap()
            + blocks.psi.apply(&s, &s).unwrap());
        assert!((f - v(&[1.0, -1.0])).amax() < 1e-15);
    }

    #[test]
    fn lifted_structure() {
        let model = two_node(0.3, 0.5);
        let lifted = assemble_quadratic(&model);
        let n = 2;
        assert_eq!(lifted.e.diagonal().as_slice(), &[1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0]);
        let block2 = lifted.a.rows(n, n).into_owned();
        let mut expected = DMatrix::zeros(n, 4 * n);
        expected[(0, 2)] = -2.0;
        expected[(1, 3)] = -3.0;
        assert_eq!(block2, expected);
        assert!(lifted.h.entries().iter().all(|e| e.0 >= n));
        assert!(lifted.h.is_symmetric());
        assert_eq!(lifted.c.columns(0, n).into_owned(), model.output);
        assert!(lifted.c.columns(n, 3 * n).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rhs_matches_direct_evaluation() {
        for seed in 0..5 {
            let model = synth(7, seed);
            let lifted = assemble_quadratic(&model);
            let n = model.n();
            let delta = DVector::from_fn(n, |i, _| ((i as f64 + 1.0) * (seed as f64 + 0.3)).sin() * 2.0);
            let ddelta = DVector::from_fn(n, |i, _| ((i as f64) * 0.7 - seed as f64).cos());
            let q = lift_state(&delta, &ddelta).unwrap();
            let got = lifted.rhs(&q, 1.0).unwrap();
            let f = model.eval_f(&delta).unwrap();
            let mut expected = DVector::zeros(4 * n);
            for i in 0..n {
                expected[i] = ddelta[i];
                expected[n + i] = -model.damping[i] * ddelta[i] - f[i] + model.input[i];
                expected[2 * n + i] = delta[i].cos() * ddelta[i];
                expected[3 * n + i] = -delta[i].sin() * ddelta[i];
            }
            assert!((got - expected).amax() <= 1e-12);
        }
    }

    #[test]
    fn zero_angle_shift_leaves_angle_columns() {
        let model = synth(6, 2);
        let lifted = assemble_quadratic(&model);
        let n = model.n();
        let mu = 1e-3;
        let quad = shift_model(&lifted, &zero_angle_state(n), mu).unwrap();
        let correction = quad.a_tilde() - &lifted.a;
        assert!(correction.columns(0, n).iter().all(|&x| x == 0.0));
        let mut expected = DMatrix::zeros(4 * n, n);
        for i in 0..n {
            expected[(i, i)] = -mu;
        }
        assert_eq!(quad.a_mu.columns(0, n).into_owned(), expected);
    }

    #[test]
    fn shift_identities() {
        let model = synth(5, 4);
        let lifted = assemble_quadratic(&model);
        let q0 = lift_state(
            &DVector::from_fn(5, |i, _| 0.1 * i as f64),
            &DVector::zeros(5),
        )
        .unwrap();
        let unshifted = shift_model(&lifted, &q0, 0.0).unwrap();
        assert_eq!(unshifted.a_mu, unshifted.a_tilde());
        let shifted = shift_model(&lifted, &q0, 0.25).unwrap();
        let a = spectral_abscissa(&unshifted.e, &unshifted.a_mu).unwrap();
        let b = spectral_abscissa(&shifted.e, &shifted.a_mu).unwrap();
        assert!((a - 0.25 - b).abs() < 1e-9);

        // A~ x + H(x (x) x) + drift = A (x + q0) + H((x + q0) (x) (x + q0))
        let x = DVector::from_fn(20, |i, _| (i as f64 * 0.37).sin());
        let lhs = &unshifted.a_mu * &x
            + unshifted.h.mode1_apply(&x, &x).unwrap()
            + unshifted.b_tilde.column(0) * 0.7
            + unshifted.b_tilde.column(1);
        let shifted_q = &x + &q0;
        let rhs = lifted.rhs(&shifted_q, 0.7).unwrap();
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn stability_check_suggests_mu() {
        let model = synth(6, 1);
        let lifted = assemble_quadratic(&model);
        let n = model.n();
        assert!(matches!(
            shift_and_stabilize(&lifted, &zero_angle_state(n), 0.0),
            Err(Error::InvalidArgument(_))
        ));
        let quad = shift_model(&lifted, &zero_angle_state(n), 0.0).unwrap();
        if let Err(Error::Unstable { hint, .. }) = quad.check_stability() {
            assert!(hint.contains("try mu"), "{hint}");
        }
    }

    #[test]
    fn equilibrium_lift() {
        let model = two_node(0.0, 0.5);
        let star = model.solve_equilibrium(1).unwrap();
        let q = lift_equilibrium(&model, &star).unwrap();
        assert!(q.rows(2, 2).iter().all(|&x| x == 0.0));
        let zero = two_node(0.0, 0.0);
        let q = lift_equilibrium(&zero, &DVector::zeros(2)).unwrap();
        assert_eq!(q, zero_angle_state(2));
        assert!(lift_equilibrium(&model, &DVector::zeros(2)).is_err());
    }
}
