//! Structure-preserving reduction of the second-order model from a
//! quadratic IRKA basis.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::lift::{assemble_quadratic, shift_and_stabilize, zero_angle_state};
use crate::linalg::{
    condition_number, max_principal_sine, orth, singular_values, sorted_svd, to_complex, DEFAULT_ORTH_TOL,
};
use crate::network::SecondOrderModel;
use crate::qirka::{qirka, realify, QirkaMode, QirkaOptions, QirkaResult};

/// Angle-block basis `V_T` and the final orthonormal projection basis.
#[derive(Debug, Clone)]
pub struct ReductionBasis {
    pub vt: DMatrix<f64>,
    pub vfinal: DMatrix<f64>,
    pub r: usize,
}

/// Leading `n` rows of a lifted basis with `4n` rows.
pub fn extract_vt(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if v.nrows() == 0 || v.nrows() % 4 != 0 {
        return Err(Error::InvalidArgument(format!(
            "lifted basis must have 4n rows, got {}",
            v.nrows()
        )));
    }
    let n = v.nrows() / 4;
    Ok(v.rows(0, n).into_owned())
}

/// `orth([V_T, C^T])`, keeping the directions of `V_T` first.
pub fn build_final_basis(vt: &DMatrix<f64>, cout: &DMatrix<f64>) -> Result<ReductionBasis> {
    let n = vt.nrows();
    check_len("output matrix columns", n, cout.ncols())?;
    let ct = cout.transpose();
    let scale = vt.norm().max(ct.norm());
    if !(scale > 0.0) {
        return Err(Error::RankDeficient("[V_T, C^T] is all zero".into()));
    }
    let q1 = if vt.ncols() > 0 && vt.amax() > 0.0 {
        let (u, s, _) = sorted_svd(vt);
        let rank = s.iter().filter(|&&x| x > DEFAULT_ORTH_TOL * scale).count();
        u.columns(0, rank).into_owned()
    } else {
        DMatrix::zeros(n, 0)
    };
    let mut resid = ct.clone();
    for _ in 0..2 {
        resid -= &q1 * q1.tr_mul(&resid);
    }
    let q2 = if resid.ncols() > 0 {
        let (u, s, _) = sorted_svd(&resid);
        let rank = s.iter().filter(|&&x| x > DEFAULT_ORTH_TOL * scale).count();
        let mut q2 = u.columns(0, rank).into_owned();
        // one more pass so the two blocks are orthogonal to working precision
        q2 -= &q1 * q1.tr_mul(&q2);
        if q2.ncols() > 0 {
            q2 = orth(&q2, DEFAULT_ORTH_TOL)?;
        }
        q2
    } else {
        DMatrix::zeros(n, 0)
    };
    let r = q1.ncols() + q2.ncols();
    let mut vfinal = DMatrix::zeros(n, r);
    vfinal.columns_mut(0, q1.ncols()).copy_from(&q1);
    vfinal.columns_mut(q1.ncols(), q2.ncols()).copy_from(&q2);
    Ok(ReductionBasis { vt: vt.clone(), vfinal, r })
}

/// Projected second-order model `Mr dr'' + Dr dr' + W^T f(V dr) = Br u`,
/// `y = Cr dr`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSecondOrderModel {
    pub mr: DMatrix<f64>,
    pub dr: DMatrix<f64>,
    pub br: DVector<f64>,
    pub cr: DMatrix<f64>,
    /// Trial basis `V` (n x r).
    pub v: DMatrix<f64>,
    /// Test basis `W`; equal to `v` for Galerkin models.
    pub w: DMatrix<f64>,
    pub galerkin: bool,
}

impl ReducedSecondOrderModel {
    pub fn order(&self) -> usize {
        self.mr.nrows()
    }

    /// Number of full-order nodes.
    pub fn full_dim(&self) -> usize {
        self.v.nrows()
    }
}

fn symmetric_part(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Galerkin projection onto `basis.vfinal`.
pub fn reduce_second_order(
    model: &SecondOrderModel,
    basis: &ReductionBasis,
) -> Result<ReducedSecondOrderModel> {
    let v = &basis.vfinal;
    check_len("basis rows", model.n(), v.nrows())?;
    let mv = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| model.mass[i] * v[(i, j)]);
    let dv = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| model.damping[i] * v[(i, j)]);
    Ok(ReducedSecondOrderModel {
        mr: symmetric_part(v.tr_mul(&mv)),
        dr: symmetric_part(v.tr_mul(&dv)),
        br: v.tr_mul(&model.input),
        cr: &model.output * v,
        v: v.clone(),
        w: v.clone(),
        galerkin: true,
    })
}

/// Reduced nonlinearity `W^T f(V delta_r)`.
pub fn eval_f_r(
    rom: &ReducedSecondOrderModel,
    model: &SecondOrderModel,
    delta_r: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("reduced state", rom.order(), delta_r.len())?;
    check_len("basis rows", model.n(), rom.full_dim())?;
    let full = &rom.v * delta_r;
    let f = model.eval_f(&full)?;
    Ok(rom.w.tr_mul(&f))
}

/// Which Q-IRKA flavour drives the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Two-sided iteration.
    A,
    /// One-sided iteration.
    B,
}

impl Variant {
    pub fn mode(self) -> QirkaMode {
        match self {
            Variant::A => QirkaMode::TwoSided,
            Variant::B => QirkaMode::OneSided,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StrH2Options {
    pub r_q: usize,
    pub mu: f64,
    pub variant: Variant,
    pub qirka: QirkaOptions,
    /// Lifted expansion point; the zero-angle state when `None`.
    pub q0: Option<DVector<f64>>,
    /// Run the output-subspace certificate on the final W.
    pub diagnostics: bool,
}

impl StrH2Options {
    pub fn new(r_q: usize, mu: f64, variant: Variant) -> Self {
        Self {
            r_q,
            mu,
            variant,
            qirka: QirkaOptions::default(),
            q0: None,
            diagnostics: false,
        }
    }
}

/// Certificate that the angle block of `W` spans the output directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputSubspaceCheck {
    /// Largest principal angle between `range(W_T)` and `range(C^T)`.
    pub max_angle: f64,
    /// Numerical rank of `W_T` at relative tolerance `1e-8`.
    pub rank_wt: usize,
    /// `|W_T - realify(C^T C_hat (mu I - Lambda)^-1)| / |W_T|` on the last update.
    pub closed_form_mismatch: f64,
}

#[derive(Debug, Clone)]
pub struct StrH2Output {
    pub rom: ReducedSecondOrderModel,
    pub basis: ReductionBasis,
    pub qirka: QirkaResult,
    pub output_check: Option<OutputSubspaceCheck>,
}

/// Lift, run Q-IRKA, project the second-order model on `orth([V_T, C^T])`.
pub fn strh2_pipeline(model: &SecondOrderModel, opts: &StrH2Options) -> Result<StrH2Output> {
    let n = model.n();
    let lifted = assemble_quadratic(model);
    let q0 = opts.q0.clone().unwrap_or_else(|| zero_angle_state(n));
    let quad = shift_and_stabilize(&lifted, &q0, opts.mu)?;
    let result = qirka(&quad, opts.r_q, opts.variant.mode(), &opts.qirka)?;
    let vt = extract_vt(&result.v)?;
    let basis = build_final_basis(&vt, &model.output)?;
    let rom = reduce_second_order(model, &basis)?;
    let output_check = if opts.diagnostics && opts.variant == Variant::A {
        Some(output_subspace_check(&result, &model.output, opts.mu)?)
    } else {
        None
    };
    Ok(StrH2Output {
        rom,
        basis,
        qirka: result,
        output_check,
    })
}

/// Compares the angle block of the two-sided `W` with `C^T`.
pub fn output_subspace_check(
    result: &QirkaResult,
    cout: &DMatrix<f64>,
    mu: f64,
) -> Result<OutputSubspaceCheck> {
    let diag = result
        .diagnostics
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("no basis update was performed".into()))?;
    // the raw iterate spans the same range as the orthonormalized W but
    // avoids the conditioning of the QR factor
    let wt = extract_vt(&diag.w_real)?;
    let ct = cout.transpose();
    let max_angle = max_principal_sine(&wt, &ct)?.asin();
    let s = singular_values(&wt);
    let smax = s.iter().copied().fold(0.0, f64::max);
    let rank_wt = s.iter().filter(|&&x| x > 1e-8 * smax).count();

    let lambda: Vec<Complex64> = diag.lambda.iter().copied().collect();
    let mut closed = to_complex(&ct) * &diag.c_hat;
    for (j, &l) in lambda.iter().enumerate() {
        let denom = Complex64::new(mu, 0.0) - l;
        closed.column_mut(j).iter_mut().for_each(|z| *z /= denom);
    }
    let closed = realify(&closed, &lambda);
    let denom = wt.norm();
    let closed_form_mismatch = if denom > 0.0 {
        (&wt - &closed).norm() / denom
    } else {
        f64::INFINITY
    };
    Ok(OutputSubspaceCheck {
        max_angle,
        rank_wt,
        closed_form_mismatch,
    })
}

/// Metadata stored next to an exported reduced model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomMeta {
    pub method: String,
    pub r: usize,
    pub r_q: Option<usize>,
    pub mu: Option<f64>,
    pub variant: Option<Variant>,
    pub converged: Option<bool>,
    pub galerkin: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gramian_block: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kronecker_order: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
struct RomFile {
    mr: Vec<Vec<f64>>,
    dr: Vec<Vec<f64>>,
    br: Vec<f64>,
    cr: Vec<Vec<f64>>,
    vfinal: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wfinal: Option<Vec<Vec<f64>>>,
    #[serde(rename = "meta")]
    meta: RomMeta,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(what: &'static str, rows: &[Vec<f64>], ncols: Option<usize>) -> Result<DMatrix<f64>> {
    let nc = ncols.or_else(|| rows.first().map(Vec::len)).unwrap_or(0);
    for r in rows {
        check_len(what, nc, r.len())?;
    }
    Ok(DMatrix::from_fn(rows.len(), nc, |i, j| rows[i][j]))
}

impl ReducedSecondOrderModel {
    /// JSON export with keys `Mr, Dr, Br, Cr, Vfinal` (and `Wfinal` for
    /// oblique models) plus `meta`.
    pub fn to_json_string(&self, meta: &RomMeta) -> Result<String> {
        let file = RomFile {
            mr: rows(&self.mr),
            dr: rows(&self.dr),
            br: self.br.iter().copied().collect(),
            cr: rows(&self.cr),
            vfinal: rows(&self.v),
            wfinal: (!self.galerkin).then(|| rows(&self.w)),
            meta: meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json_str(text: &str) -> Result<(Self, RomMeta)> {
        let file: RomFile = serde_json::from_str(text)?;
        let r = file.br.len();
        let mr = from_rows("Mr", &file.mr, Some(r))?;
        let dr = from_rows("Dr", &file.dr, Some(r))?;
        check_len("Mr rows", r, mr.nrows())?;
        check_len("Dr rows", r, dr.nrows())?;
        let cr = from_rows("Cr", &file.cr, Some(r))?;
        let v = from_rows("Vfinal", &file.vfinal, Some(r))?;
        let (w, galerkin) = match &file.wfinal {
            Some(w) => (from_rows("Wfinal", w, Some(r))?, false),
            None => (v.clone(), true),
        };
        check_len("Wfinal rows", v.nrows(), w.nrows())?;
        Ok((
            Self {
                mr,
                dr,
                br: DVector::from_vec(file.br),
                cr,
                v,
                w,
                galerkin,
            },
            file.meta,
        ))
    }
}

/// Condition number of `W^T V`, used to vet oblique projections.
pub fn projection_condition(v: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    condition_number(&w.tr_mul(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{PowerNetwork, Topology};

    fn synth(n: usize, topo: Topology, seed: u64) -> SecondOrderModel {
        SecondOrderModel::from_network(&PowerNetwork::synthetic(n, topo, seed).unwrap())
    }

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        DMatrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn extract_identity_and_zero() {
        let v = DMatrix::<f64>::identity(8, 8);
        let vt = extract_vt(&v).unwrap();
        assert_eq!(vt, v.rows(0, 2).into_owned());
        assert_eq!(extract_vt(&DMatrix::zeros(12, 3)).unwrap(), DMatrix::<f64>::zeros(3, 3));
        assert!(extract_vt(&DMatrix::zeros(7, 2)).is_err());
    }

    #[test]
    fn extract_differs_only_outside_top_rows() {
        let v = lcg_matrix(16, 3, 5);
        let vt = extract_vt(&v).unwrap();
        let mut back = DMatrix::zeros(16, 3);
        back.rows_mut(0, 4).copy_from(&vt);
        let diff = &v - &back;
        assert_eq!(diff.rows(0, 4).amax(), 0.0);
    }

    #[test]
    fn final_basis_generic_rank() {
        let vt = lcg_matrix(10, 5, 1);
        let c = DMatrix::from_element(1, 10, 0.1);
        let b = build_final_basis(&vt, &c).unwrap();
        assert_eq!(b.r, 6);
        let ortho = b.vfinal.tr_mul(&b.vfinal) - DMatrix::identity(6, 6);
        assert!(ortho.amax() < 1e-12);
        assert!(max_principal_sine(&b.vfinal, &c.transpose()).unwrap() < 1e-10);
    }

    #[test]
    fn final_basis_when_output_is_contained() {
        let mut vt = lcg_matrix(10, 5, 2);
        let c = lcg_matrix(1, 10, 3);
        vt.set_column(2, &(c.transpose().column(0) * 2.0));
        let b = build_final_basis(&vt, &c).unwrap();
        assert_eq!(b.r, 5);
    }

    #[test]
    fn final_basis_from_zero_vt() {
        let c = lcg_matrix(2, 6, 4);
        let b = build_final_basis(&DMatrix::zeros(6, 3), &c).unwrap();
        assert_eq!(b.r, 2);
        let sine = max_principal_sine(&b.vfinal, &c.transpose()).unwrap();
        assert!(sine < 1e-12);
        assert!(build_final_basis(&DMatrix::zeros(6, 3), &DMatrix::zeros(1, 6)).is_err());
    }

    #[test]
    fn final_basis_keeps_vt_directions_first() {
        let vt = lcg_matrix(8, 3, 9);
        let c = lcg_matrix(1, 8, 10);
        let b = build_final_basis(&vt, &c).unwrap();
        let lead = b.vfinal.columns(0, 3).into_owned();
        assert!(max_principal_sine(&lead, &vt).unwrap() < 1e-12);
    }

    #[test]
    fn galerkin_with_identity_columns() {
        let model = synth(6, Topology::Ring, 2);
        let vfinal = DMatrix::<f64>::identity(6, 3);
        let basis = ReductionBasis {
            vt: vfinal.clone(),
            vfinal,
            r: 3,
        };
        let rom = reduce_second_order(&model, &basis).unwrap();
        assert_eq!(rom.br.as_slice(), &model.input.as_slice()[..3]);
        assert_eq!(rom.mr, DMatrix::from_diagonal(&model.mass.rows(0, 3).into_owned()));
    }

    #[test]
    fn reduced_mass_stays_positive_definite() {
        let model = synth(9, Topology::Complete, 4);
        let q = orth(&lcg_matrix(9, 4, 6), 1e-12).unwrap();
        let basis = ReductionBasis { vt: q.clone(), vfinal: q, r: 4 };
        let rom = reduce_second_order(&model, &basis).unwrap();
        assert_eq!(rom.mr, rom.mr.transpose());
        assert!(rom.mr.clone().symmetric_eigen().eigenvalues.min() > 0.0);
        assert!(rom.dr.clone().symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn eval_f_r_matches_composition() {
        let model = synth(8, Topology::Random(0.4), 3);
        let q = orth(&lcg_matrix(8, 3, 7), 1e-12).unwrap();
        let basis = ReductionBasis { vt: q.clone(), vfinal: q.clone(), r: 3 };
        let rom = reduce_second_order(&model, &basis).unwrap();
        let dr = DVector::from_vec(vec![0.3, -1.2, 0.7]);
        let got = eval_f_r(&rom, &model, &dr).unwrap();
        let want = q.transpose() * model.eval_f(&(&q * &dr)).unwrap();
        assert!((got - want).amax() < 1e-14);

        let ident = ReductionBasis {
            vt: DMatrix::identity(8, 8),
            vfinal: DMatrix::identity(8, 8),
            r: 8,
        };
        let full = reduce_second_order(&model, &ident).unwrap();
        let d = DVector::from_fn(8, |i, _| 0.1 * i as f64);
        assert_eq!(eval_f_r(&full, &model, &d).unwrap(), model.eval_f(&d).unwrap());
    }

    #[test]
    fn eval_f_r_vanishes_at_origin_without_phase_shift() {
        let net = PowerNetwork::synthetic(5, Topology::Ring, 1).unwrap();
        let mut model = SecondOrderModel::from_network(&net);
        for c in &mut model.couplings {
            c.gamma = 0.0;
        }
        let q = orth(&lcg_matrix(5, 2, 8), 1e-12).unwrap();
        let rom = reduce_second_order(&model, &ReductionBasis { vt: q.clone(), vfinal: q, r: 2 }).unwrap();
        assert_eq!(eval_f_r(&rom, &model, &DVector::zeros(2)).unwrap().amax(), 0.0);
    }

    #[test]
    fn pipeline_on_ring_gives_rq_plus_p() {
        let model = synth(10, Topology::Ring, 1);
        let out = strh2_pipeline(&model, &StrH2Options::new(4, 1e-3, Variant::A)).unwrap();
        assert_eq!(out.basis.r, 5);
        assert_eq!(out.rom.order(), 5);
    }

    #[test]
    fn variants_give_different_subspaces() {
        let model = synth(10, Topology::Ring, 1);
        let a = strh2_pipeline(&model, &StrH2Options::new(3, 1e-3, Variant::A)).unwrap();
        let b = strh2_pipeline(&model, &StrH2Options::new(3, 1e-3, Variant::B)).unwrap();
        assert!(max_principal_sine(&a.rom.v, &b.rom.v).unwrap() > 1e-6);
    }

    #[test]
    fn json_round_trip() {
        let model = synth(6, Topology::Ring, 2);
        let q = orth(&lcg_matrix(6, 3, 11), 1e-12).unwrap();
        let rom = reduce_second_order(&model, &ReductionBasis { vt: q.clone(), vfinal: q, r: 3 }).unwrap();
        let meta = RomMeta {
            method: "strh2-a".into(),
            r: 3,
            r_q: Some(2),
            mu: Some(1e-3),
            variant: Some(Variant::A),
            converged: Some(true),
            galerkin: true,
            gramian_block: None,
            kronecker_order: None,
        };
        let text = rom.to_json_string(&meta).unwrap();
        assert!(text.contains("\"Mr\"") && text.contains("\"Vfinal\"") && text.contains("\"meta\""));
        let (back, meta_back) = ReducedSecondOrderModel::from_json_str(&text).unwrap();
        assert_eq!(back, rom);
        assert_eq!(meta_back, meta);
    }
}
