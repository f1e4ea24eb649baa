//! Fixed-step RK4 simulation of full, lifted and reduced models, and the
//! relative L-infinity output error.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::lift::QuadraticModel;
use crate::network::SecondOrderModel;
use crate::strh2::ReducedSecondOrderModel;

/// Sampled simulation output on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `p x steps` outputs, one column per sample.
    pub outputs: DMatrix<f64>,
    /// Optional state samples, one column per sample.
    pub states: Option<DMatrix<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with header `t,y1,..,yp`.
    pub fn to_csv(&self) -> String {
        let p = self.outputs.nrows();
        let mut out = String::from("t");
        for i in 1..=p {
            out.push_str(&format!(",y{i}"));
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            out.push_str(&t.to_string());
            for i in 0..p {
                out.push(',');
                out.push_str(&self.outputs[(i, k)].to_string());
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub t_end: f64,
    pub dt: f64,
    pub keep_states: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            t_end: 10.0,
            dt: 1e-3,
            keep_states: false,
        }
    }
}

impl SimOptions {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self {
            t_end,
            dt,
            keep_states: false,
        }
    }

    fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_end >= 0.0) || !self.dt.is_finite() || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need dt > 0 and T >= 0, got dt = {}, T = {}",
                self.dt, self.t_end
            )));
        }
        Ok((self.t_end / self.dt).round() as usize)
    }
}

/// Something of the form `M d'' + D d' + f(d) = B u`, `y = C d`.
pub trait SecondOrderSystem {
    fn dim(&self) -> usize;
    fn outputs(&self) -> usize;
    /// `M^-1 (B u - D v - f(d))`.
    fn acceleration(&self, d: &DVector<f64>, v: &DVector<f64>, u: f64) -> Result<DVector<f64>>;
    fn output(&self, d: &DVector<f64>) -> DVector<f64>;
}

impl SecondOrderSystem for SecondOrderModel {
    fn dim(&self) -> usize {
        self.n()
    }

    fn outputs(&self) -> usize {
        self.p()
    }

    fn acceleration(&self, d: &DVector<f64>, v: &DVector<f64>, u: f64) -> Result<DVector<f64>> {
        let mut f = DVector::zeros(self.n());
        self.accumulate_f(d.as_slice(), f.as_mut_slice());
        Ok(DVector::from_fn(self.n(), |i, _| {
            (self.input[i] * u - self.damping[i] * v[i] - f[i]) / self.mass[i]
        }))
    }

    fn output(&self, d: &DVector<f64>) -> DVector<f64> {
        &self.output * d
    }
}

/// A reduced model paired with the full model that evaluates its
/// nonlinearity.
pub struct ReducedSystem<'a> {
    rom: &'a ReducedSecondOrderModel,
    model: &'a SecondOrderModel,
    mass_inv: DMatrix<f64>,
}

impl<'a> ReducedSystem<'a> {
    pub fn new(rom: &'a ReducedSecondOrderModel, model: &'a SecondOrderModel) -> Result<Self> {
        check_len("reduced basis rows", model.n(), rom.full_dim())?;
        let mass_inv = rom
            .mr
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("reduced mass matrix".into()))?;
        Ok(Self { rom, model, mass_inv })
    }
}

impl SecondOrderSystem for ReducedSystem<'_> {
    fn dim(&self) -> usize {
        self.rom.order()
    }

    fn outputs(&self) -> usize {
        self.rom.cr.nrows()
    }

    fn acceleration(&self, d: &DVector<f64>, v: &DVector<f64>, u: f64) -> Result<DVector<f64>> {
        let full = &self.rom.v * d;
        let mut f = DVector::zeros(self.model.n());
        self.model.accumulate_f(full.as_slice(), f.as_mut_slice());
        let mut rhs = self.rom.w.tr_mul(&f);
        rhs.neg_mut();
        rhs.axpy(u, &self.rom.br, 1.0);
        rhs -= &self.rom.dr * v;
        Ok(&self.mass_inv * rhs)
    }

    fn output(&self, d: &DVector<f64>) -> DVector<f64> {
        &self.rom.cr * d
    }
}

fn check_finite(x: &DVector<f64>, t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { t })
    }
}

/// Classical RK4 on `(d, d')` from `(d0, v0)`.
pub fn integrate_second_order<S: SecondOrderSystem + ?Sized>(
    sys: &S,
    u: &dyn Fn(f64) -> f64,
    opts: &SimOptions,
    d0: &DVector<f64>,
    v0: &DVector<f64>,
) -> Result<Trajectory> {
    let n = sys.dim();
    check_len("initial angles", n, d0.len())?;
    check_len("initial velocities", n, v0.len())?;
    let steps = opts.steps()?;
    let h = opts.dt;
    let mut times = Vec::with_capacity(steps + 1);
    let mut outputs = DMatrix::zeros(sys.outputs(), steps + 1);
    let mut states = opts.keep_states.then(|| DMatrix::zeros(2 * n, steps + 1));
    let (mut d, mut v) = (d0.clone(), v0.clone());
    let record = |k: usize, d: &DVector<f64>, v: &DVector<f64>, outputs: &mut DMatrix<f64>, states: &mut Option<DMatrix<f64>>| {
        outputs.set_column(k, &sys.output(d));
        if let Some(s) = states {
            s.view_mut((0, k), (n, 1)).copy_from(d);
            s.view_mut((n, k), (n, 1)).copy_from(v);
        }
    };
    times.push(0.0);
    record(0, &d, &v, &mut outputs, &mut states);
    for k in 0..steps {
        let t = k as f64 * h;
        let (u0, um, u1) = (u(t), u(t + 0.5 * h), u(t + h));
        let a1 = sys.acceleration(&d, &v, u0)?;
        let d2 = &d + &v * (0.5 * h);
        let v2 = &v + &a1 * (0.5 * h);
        let a2 = sys.acceleration(&d2, &v2, um)?;
        let d3 = &d + &v2 * (0.5 * h);
        let v3 = &v + &a2 * (0.5 * h);
        let a3 = sys.acceleration(&d3, &v3, um)?;
        let d4 = &d + &v3 * h;
        let v4 = &v + &a3 * h;
        let a4 = sys.acceleration(&d4, &v4, u1)?;
        d += (&v + &v2 * 2.0 + &v3 * 2.0 + &v4) * (h / 6.0);
        v += (&a1 + &a2 * 2.0 + &a3 * 2.0 + &a4) * (h / 6.0);
        let t_next = (k + 1) as f64 * h;
        check_finite(&d, t_next)?;
        check_finite(&v, t_next)?;
        times.push(t_next);
        record(k + 1, &d, &v, &mut outputs, &mut states);
    }
    Ok(Trajectory { times, outputs, states })
}

enum MassInverse {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl MassInverse {
    fn new(e: &DMatrix<f64>) -> Result<Self> {
        let n = e.nrows();
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || e[(i, j)] == 0.0));
        let singular = || Error::Singular("E in quadratic simulation".into());
        if diagonal {
            let d = e.diagonal();
            if d.iter().any(|&x| x == 0.0) {
                return Err(singular());
            }
            Ok(Self::Diagonal(d.map(|x| 1.0 / x)))
        } else {
            Ok(Self::Dense(e.clone().try_inverse().ok_or_else(singular)?))
        }
    }

    fn apply(&self, x: DVector<f64>) -> DVector<f64> {
        match self {
            Self::Diagonal(d) => x.component_mul(d),
            Self::Dense(m) => m * x,
        }
    }
}

/// RK4 on `E x' = A_mu x + H (x (x) x) + B~ [u; 1]` with output
/// `y = C (x + q0)`; `x0 = 0` when `None`.
pub fn integrate_quadratic(
    model: &QuadraticModel,
    u: &dyn Fn(f64) -> f64,
    opts: &SimOptions,
    x0: Option<&DVector<f64>>,
) -> Result<Trajectory> {
    let big = model.dim();
    let x0 = x0.cloned().unwrap_or_else(|| DVector::zeros(big));
    check_len("initial lifted state", big, x0.len())?;
    let steps = opts.steps()?;
    let h = opts.dt;
    let einv = MassInverse::new(&model.e)?;
    let b_in = model.b_tilde.column(0).into_owned();
    let drift = model.b_tilde.column(1).into_owned();
    let rhs = |x: &DVector<f64>, uv: f64| -> Result<DVector<f64>> {
        let mut r = &model.a_mu * x + model.h.mode1_apply(x, x)?;
        r.axpy(uv, &b_in, 1.0);
        r += &drift;
        Ok(einv.apply(r))
    };
    let output = |x: &DVector<f64>| &model.c * (x + &model.q0);
    let mut times = Vec::with_capacity(steps + 1);
    let mut outputs = DMatrix::zeros(model.c.nrows(), steps + 1);
    let mut states = opts.keep_states.then(|| DMatrix::zeros(big, steps + 1));
    let mut x = x0;
    times.push(0.0);
    outputs.set_column(0, &output(&x));
    if let Some(s) = states.as_mut() {
        s.set_column(0, &x);
    }
    for k in 0..steps {
        let t = k as f64 * h;
        let um = u(t + 0.5 * h);
        let k1 = rhs(&x, u(t))?;
        let k2 = rhs(&(&x + &k1 * (0.5 * h)), um)?;
        let k3 = rhs(&(&x + &k2 * (0.5 * h)), um)?;
        let k4 = rhs(&(&x + &k3 * h), u(t + h))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let t_next = (k + 1) as f64 * h;
        check_finite(&x, t_next)?;
        times.push(t_next);
        outputs.set_column(k + 1, &output(&x));
        if let Some(s) = states.as_mut() {
            s.set_column(k + 1, &x);
        }
    }
    Ok(Trajectory { times, outputs, states })
}

/// `max_t |y - y_r| / max_t |y|`, per output channel, then the worst channel.
pub fn linf_rel_error(y: &Trajectory, yr: &Trajectory) -> Result<f64> {
    check_len("sample count", y.len(), yr.len())?;
    check_len("output count", y.outputs.nrows(), yr.outputs.nrows())?;
    if y.times.iter().zip(&yr.times).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0)) {
        return Err(Error::InvalidArgument("trajectories use different time grids".into()));
    }
    let mut worst: f64 = 0.0;
    for i in 0..y.outputs.nrows() {
        let row = y.outputs.row(i);
        let denom = row.amax();
        if denom == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "reference output {} is identically zero",
                i + 1
            )));
        }
        let num = (row - yr.outputs.row(i)).amax();
        worst = worst.max(num / denom);
    }
    Ok(worst)
}

/// Constant input signal.
pub fn constant(value: f64) -> impl Fn(f64) -> f64 + Sync + Send {
    move |_| value
}
