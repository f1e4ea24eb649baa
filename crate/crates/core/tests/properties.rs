use gridmor_core::lift::{assemble_quadratic, lift_state, shift_model, zero_angle_state};
use gridmor_core::linalg::{orth, sorted_eigenvalues, solve_shifted};
use gridmor_core::strh2::{build_final_basis, reduce_second_order, ReductionBasis};
use gridmor_core::{PowerNetwork, SecondOrderModel, Topology};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn topology() -> impl Strategy<Value = Topology> {
    prop_oneof![
        Just(Topology::Ring),
        Just(Topology::Complete),
        (0.1f64..0.9).prop_map(Topology::Random),
    ]
}

fn network() -> impl Strategy<Value = SecondOrderModel> {
    (3usize..9, topology(), any::<u64>())
        .prop_map(|(n, t, seed)| SecondOrderModel::from_network(&PowerNetwork::synthetic(n, t, seed).unwrap()))
}

fn vector(n: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, n).prop_map(DVector::from_vec)
}

fn with_vector(scale: f64) -> impl Strategy<Value = (SecondOrderModel, DVector<f64>)> {
    network().prop_flat_map(move |m| {
        let n = m.n();
        (Just(m), vector(n, scale))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn coupling_is_translation_invariant((model, delta) in with_vector(3.0), shift in -10.0f64..10.0) {
        let shifted = delta.add_scalar(shift);
        let gap = (model.eval_f(&shifted).unwrap() - model.eval_f(&delta).unwrap()).amax();
        prop_assert!(gap <= 1e-12, "gap {gap}");
    }

    #[test]
    fn jacobian_matches_central_differences((model, delta) in with_vector(3.0)) {
        let n = model.n();
        let jac = model.jacobian_f(&delta).unwrap();
        let h = 1e-6;
        for k in 0..n {
            let mut plus = delta.clone();
            let mut minus = delta.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (model.eval_f(&plus).unwrap() - model.eval_f(&minus).unwrap()) / (2.0 * h);
            let gap = (fd - jac.column(k)).amax();
            prop_assert!(gap <= 1e-6, "column {k}: {gap}");
        }
    }

    #[test]
    fn lossless_equilibria_balance_injections(model in network()) {
        let mut model = model;
        for c in &mut model.couplings {
            c.gamma = 0.0;
        }
        // weak injections keep the operating point inside the stable branch
        model.input *= 0.2;
        let delta = model.solve_equilibrium(0).unwrap();
        let residual = (model.eval_f(&delta).unwrap() - &model.input).amax();
        prop_assert!(residual <= 1e-10, "residual {residual}");
        prop_assert_eq!(delta[0], 0.0);
    }

    #[test]
    fn lifted_structure(model in network()) {
        let n = model.n();
        let lifted = assemble_quadratic(&model);
        for i in 0..4 * n {
            let want = if (n..2 * n).contains(&i) { model.mass[i - n] } else { 1.0 };
            prop_assert_eq!(lifted.e[(i, i)], want);
        }
        prop_assert_eq!(lifted.e.iter().filter(|&&x| x != 0.0).count(), 4 * n);
        prop_assert!(lifted.h.entries().iter().all(|&(i, _, _, _)| i >= n));
        prop_assert!(lifted.h.is_symmetric());
        let q0 = zero_angle_state(n);
        for i in 0..n {
            prop_assert_eq!(q0[2 * n + i].powi(2) + q0[3 * n + i].powi(2), 1.0);
        }
    }

    #[test]
    fn lift_rhs_reproduces_nonlinear_dynamics((model, delta) in with_vector(3.0), u in -2.0f64..2.0) {
        let n = model.n();
        let ddelta = delta.map(|x| 0.3 * x - 0.1);
        let q = lift_state(&delta, &ddelta).unwrap();
        let lifted = assemble_quadratic(&model);
        let dq = lifted.rhs(&q, u).unwrap();
        let f = model.eval_f(&delta).unwrap();
        for i in 0..n {
            let accel = (model.input[i] * u - model.damping[i] * ddelta[i] - f[i]) / model.mass[i];
            prop_assert!((dq[i] - ddelta[i]).abs() <= 1e-12);
            prop_assert!((dq[n + i] / model.mass[i] - accel).abs() <= 1e-10 * (1.0 + accel.abs()));
            prop_assert!((dq[2 * n + i] - delta[i].cos() * ddelta[i]).abs() <= 1e-12);
            prop_assert!((dq[3 * n + i] + delta[i].sin() * ddelta[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn shift_moves_every_eigenvalue(model in network(), mu in 1e-4f64..1e-1) {
        let n = model.n();
        let lifted = assemble_quadratic(&model);
        let q0 = zero_angle_state(n);
        let base = shift_model(&lifted, &q0, 0.0).unwrap();
        let shifted = shift_model(&lifted, &q0, mu).unwrap();
        let e_inv = base.e.clone().try_inverse().unwrap();
        let before = sorted_eigenvalues(&(&e_inv * &base.a_mu)).unwrap();
        let after = sorted_eigenvalues(&(&e_inv * &shifted.a_mu)).unwrap();
        let scale = before.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for (b, a) in before.iter().zip(&after) {
            prop_assert!((b - mu - a).norm() <= 1e-6 * scale, "{b} vs {a}");
        }
    }

    #[test]
    fn final_basis_contains_outputs(model in network(), cols in 1usize..4, seed in any::<u64>()) {
        let n = model.n();
        let vt = DMatrix::from_fn(n, cols, |i, j| ((seed % 97) as f64 + (i * 13 + j * 7) as f64).sin());
        let basis = build_final_basis(&vt, &model.output).unwrap();
        let v = &basis.vfinal;
        let ct = model.output.transpose();
        let outside = (&ct - v * v.tr_mul(&ct)).norm() / ct.norm();
        prop_assert!(outside <= 1e-10, "{outside}");
        prop_assert!((v.tr_mul(v) - DMatrix::identity(basis.r, basis.r)).amax() <= 1e-12);
        let rom = reduce_second_order(&model, &basis).unwrap();
        prop_assert!(rom.mr.clone().cholesky().is_some());
        prop_assert!(rom.dr.clone().cholesky().is_some());
    }

    #[test]
    fn coordinate_basis_selects_inputs(model in network(), r in 1usize..3) {
        let n = model.n();
        let v = DMatrix::<f64>::identity(n, r);
        let rom = reduce_second_order(&model, &ReductionBasis { vt: v.clone(), vfinal: v, r }).unwrap();
        let lead = model.input.rows(0, r).into_owned();
        prop_assert_eq!(rom.br, lead);
    }

    #[test]
    fn shifted_solves_commute_with_conjugation(
        re in -3.0f64..3.0,
        im in 0.1f64..3.0,
        seed in any::<u64>(),
    ) {
        let n = 5;
        let a = DMatrix::from_fn(n, n, |i, j| (((seed % 1000) as usize + 3 * i + 7 * j) as f64).sin() - if i == j { 4.0 } else { 0.0 });
        let e = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + i as f64 * 0.25 } else { 0.0 });
        let lambda = Complex64::new(re, im);
        let b = DVector::from_fn(n, |i, _| Complex64::new(i as f64 - 2.0, 0.5 * i as f64));
        let x = solve_shifted(&e, &a, lambda, &b).unwrap();
        let y = solve_shifted(&e, &a, lambda.conj(), &b.map(|z| z.conj())).unwrap();
        prop_assert!((x.map(|z| z.conj()) - y).norm() <= 1e-12 * (1.0 + x.norm()));
    }

    #[test]
    fn orth_reproduces_range(rows in 4usize..12, cols in 1usize..4, seed in any::<u64>()) {
        let x = DMatrix::from_fn(rows, cols, |i, j| ((seed % 4093) as f64 * 0.01 + (i * cols + j) as f64).cos());
        let q = orth(&x, 1e-12).unwrap();
        let gap = (&x - &q * q.tr_mul(&x)).norm();
        prop_assert!(gap <= 1e-10 * x.norm());
    }

    #[test]
    fn network_json_round_trips(n in 2usize..8, topo in topology(), seed in any::<u64>()) {
        let net = PowerNetwork::synthetic(n, topo, seed).unwrap();
        let back = PowerNetwork::from_json_str(&net.to_json_string().unwrap()).unwrap();
        prop_assert_eq!(back, net);
    }
}
