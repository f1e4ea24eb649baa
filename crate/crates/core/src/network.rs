//! Swing-equation network: parameter ingestion, second-order assembly,
//! coupling nonlinearity and equilibria.
//!
//! Each node obeys
//!
//! ```text
//! (2 J_i / w_R) d2_i + (D_i / w_R) d1_i + sum_j K_ij sin(delta_i - delta_j - gamma_ij) = B_i u
//! ```
//!
//! and the network is stored as an unordered-pair coupling list; dense
//! `K`/`gamma` matrices are never built.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Per-node parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Inertia.
    #[serde(rename = "J")]
    pub j: f64,
    /// Damping.
    #[serde(rename = "D")]
    pub d: f64,
    /// Net power injection.
    #[serde(rename = "B")]
    pub b: f64,
}

/// One unordered coupling `{i, j}` with `i < j` (0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub i: usize,
    pub j: usize,
    pub k: f64,
    pub gamma: f64,
}

/// Output map of the second-order model.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputSpec {
    /// Arithmetic mean of all phase angles (`p = 1`).
    Mean,
    /// Explicit `p x n` output matrix.
    Matrix(DMatrix<f64>),
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec::Mean
    }
}

/// Network topologies for the synthetic fixture generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    Ring,
    Complete,
    /// Erdos-Renyi graph with edge probability `p`, plus a ring so the
    /// graph is connected.
    Random(f64),
}

/// Raw network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerNetwork {
    pub omega_r: f64,
    pub nodes: Vec<Node>,
    pub couplings: Vec<Coupling>,
    pub output: OutputSpec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoupling {
    i: usize,
    j: usize,
    #[serde(rename = "K")]
    k: f64,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawOutput {
    Named(String),
    Matrix {
        #[serde(rename = "C")]
        c: Vec<Vec<f64>>,
    },
}

#[derive(Serialize, Deserialize)]
struct RawNetwork {
    n: usize,
    #[serde(rename = "omega_R")]
    omega_r: f64,
    nodes: Vec<Node>,
    couplings: Vec<RawCoupling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<RawOutput>,
}

fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

impl PowerNetwork {
    /// Builds a validated network from 0-based couplings.
    ///
    /// Pairs given in both orientations are merged when their parameters
    /// agree; a mismatch is an "asymmetric coupling" error.
    pub fn new(
        omega_r: f64,
        nodes: Vec<Node>,
        couplings: impl IntoIterator<Item = Coupling>,
        output: OutputSpec,
    ) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::InvalidNetwork("network has no nodes".into()));
        }
        if !(omega_r > 0.0) || !omega_r.is_finite() {
            return Err(Error::InvalidNetwork(format!(
                "omega_R must be positive, got {omega_r}"
            )));
        }
        for (idx, node) in nodes.iter().enumerate() {
            if !(node.j >= 0.0) || !node.j.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "node {}: inertia J must be >= 0, got {}",
                    idx + 1,
                    node.j
                )));
            }
            if !(node.d > 0.0) || !node.d.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "node {}: damping D must be > 0, got {}",
                    idx + 1,
                    node.d
                )));
            }
            if !node.b.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "node {}: injection B is not finite",
                    idx + 1
                )));
            }
        }

        let mut merged: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
        for c in couplings {
            if c.i >= n || c.j >= n {
                return Err(Error::InvalidNetwork(format!(
                    "coupling ({}, {}) index out of range 1..{n}",
                    c.i + 1,
                    c.j + 1
                )));
            }
            if c.i == c.j {
                return Err(Error::InvalidNetwork(format!(
                    "self-coupling at node {}",
                    c.i + 1
                )));
            }
            if !(c.k >= 0.0) || !c.k.is_finite() || !c.gamma.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "coupling ({}, {}): K must be finite and >= 0",
                    c.i + 1,
                    c.j + 1
                )));
            }
            let key = (c.i.min(c.j), c.i.max(c.j));
            match merged.get(&key) {
                Some(&(k, g)) => {
                    if !same_value(k, c.k) || !same_value(g, c.gamma) {
                        return Err(Error::InvalidNetwork(format!(
                            "asymmetric coupling between nodes {} and {}",
                            key.0 + 1,
                            key.1 + 1
                        )));
                    }
                }
                None => {
                    merged.insert(key, (c.k, c.gamma));
                }
            }
        }

        if let OutputSpec::Matrix(c) = &output {
            if c.nrows() == 0 || c.ncols() != n {
                return Err(Error::InvalidNetwork(format!(
                    "output matrix must be p x {n} with p >= 1, got {} x {}",
                    c.nrows(),
                    c.ncols()
                )));
            }
        }

        let couplings = merged
            .into_iter()
            .map(|((i, j), (k, gamma))| Coupling { i, j, k, gamma })
            .collect();
        Ok(Self {
            omega_r,
            nodes,
            couplings,
            output,
        })
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// Parses the JSON interchange format.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawNetwork =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if raw.nodes.len() != raw.n {
            return Err(Error::InvalidNetwork(format!(
                "n = {} but {} node records given",
                raw.n,
                raw.nodes.len()
            )));
        }
        let mut couplings = Vec::with_capacity(raw.couplings.len());
        for c in &raw.couplings {
            if c.i == 0 || c.j == 0 || c.i > raw.n || c.j > raw.n {
                return Err(Error::InvalidNetwork(format!(
                    "coupling ({}, {}) index out of range 1..{}",
                    c.i, c.j, raw.n
                )));
            }
            couplings.push(Coupling {
                i: c.i - 1,
                j: c.j - 1,
                k: c.k,
                gamma: c.gamma,
            });
        }
        let output = match raw.output {
            None => OutputSpec::Mean,
            Some(RawOutput::Named(name)) if name == "mean" => OutputSpec::Mean,
            Some(RawOutput::Named(name)) => {
                return Err(Error::Parse(format!("unknown output kind {name:?}")))
            }
            Some(RawOutput::Matrix { c }) => {
                let p = c.len();
                let cols = c.first().map_or(0, Vec::len);
                if c.iter().any(|row| row.len() != cols) {
                    return Err(Error::Parse("ragged output matrix".into()));
                }
                OutputSpec::Matrix(DMatrix::from_fn(p, cols, |r, k| c[r][k]))
            }
        };
        Self::new(raw.omega_r, raw.nodes, couplings, output)
    }

    /// Reads and validates a network file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Serializes to the JSON interchange format (1-based indices).
    pub fn to_json_string(&self) -> Result<String> {
        let raw = RawNetwork {
            n: self.n(),
            omega_r: self.omega_r,
            nodes: self.nodes.clone(),
            couplings: self
                .couplings
                .iter()
                .map(|c| RawCoupling {
                    i: c.i + 1,
                    j: c.j + 1,
                    k: c.k,
                    gamma: c.gamma,
                })
                .collect(),
            output: Some(match &self.output {
                OutputSpec::Mean => RawOutput::Named("mean".into()),
                OutputSpec::Matrix(c) => RawOutput::Matrix {
                    c: c.row_iter().map(|r| r.iter().copied().collect()).collect(),
                },
            }),
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    /// Deterministic synthetic network.
    ///
    /// `K in [0.5, 2]`, `gamma in [0, 0.2]`, `J in [0.5, 2]`,
    /// `D in [0.5, 2]`, injections in `[-0.5, 0.5]` shifted to sum to zero,
    /// and `omega_R = 1`.
    pub fn synthetic(n: usize, topology: Topology, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "synthetic network needs n >= 2, got {n}"
            )));
        }
        if let Topology::Random(p) = topology {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "edge probability must lie in [0, 1], got {p}"
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes: Vec<Node> = (0..n)
            .map(|_| Node {
                j: rng.random_range(0.5..=2.0),
                d: rng.random_range(0.5..=2.0),
                b: rng.random_range(-0.5..=0.5),
            })
            .collect();
        let mean = nodes.iter().map(|x| x.b).sum::<f64>() / n as f64;
        for node in &mut nodes {
            node.b -= mean;
        }

        let mut pairs: Vec<(usize, usize)> = Vec::new();
        match topology {
            Topology::Ring => {
                for i in 0..n {
                    let j = (i + 1) % n;
                    if n == 2 && i == 1 {
                        break;
                    }
                    pairs.push((i, j));
                }
            }
            Topology::Complete => {
                for i in 0..n {
                    for j in i + 1..n {
                        pairs.push((i, j));
                    }
                }
            }
            Topology::Random(p) => {
                for i in 0..n {
                    for j in i + 1..n {
                        let ring_edge = j == i + 1 || (i == 0 && j == n - 1);
                        let draw: f64 = rng.random();
                        if ring_edge || draw < p {
                            pairs.push((i, j));
                        }
                    }
                }
            }
        }
        let couplings: Vec<Coupling> = pairs
            .into_iter()
            .map(|(i, j)| Coupling {
                i,
                j,
                k: rng.random_range(0.5..=2.0),
                gamma: rng.random_range(0.0..=0.2),
            })
            .collect();
        Self::new(1.0, nodes, couplings, OutputSpec::Mean)
    }
}

/// Assembled second-order model `M d2 + D d1 + f(delta) = B u`, `y = C delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderModel {
    /// Diagonal of the mass matrix, `2 J_i / omega_R`.
    pub mass: DVector<f64>,
    /// Diagonal of the damping matrix, `D_i / omega_R`.
    pub damping: DVector<f64>,
    pub input: DVector<f64>,
    /// `p x n` output matrix.
    pub output: DMatrix<f64>,
    pub couplings: Vec<Coupling>,
}

impl SecondOrderModel {
    /// Assembles the model using the network's own output spec.
    pub fn from_network(net: &PowerNetwork) -> Self {
        Self::assemble(net, &net.output)
    }

    pub fn assemble(net: &PowerNetwork, output: &OutputSpec) -> Self {
        let n = net.n();
        let mass = DVector::from_iterator(n, net.nodes.iter().map(|x| 2.0 * x.j / net.omega_r));
        let damping = DVector::from_iterator(n, net.nodes.iter().map(|x| x.d / net.omega_r));
        let input = DVector::from_iterator(n, net.nodes.iter().map(|x| x.b));
        let output = match output {
            OutputSpec::Mean => DMatrix::from_element(1, n, 1.0 / n as f64),
            OutputSpec::Matrix(c) => c.clone(),
        };
        Self {
            mass,
            damping,
            input,
            output,
            couplings: net.couplings.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.mass.len()
    }

    /// Number of outputs `p`.
    pub fn p(&self) -> usize {
        self.output.nrows()
    }

    pub fn mass_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.mass)
    }

    pub fn damping_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.damping)
    }

    /// `f_i(delta) = sum_j K_ij sin(delta_i - delta_j - gamma_ij)`.
    pub fn eval_f(&self, delta: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("eval_f", self.n(), delta.len())?;
        let mut out = DVector::zeros(self.n());
        self.accumulate_f(delta.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    pub(crate) fn accumulate_f(&self, delta: &[f64], out: &mut [f64]) {
        for c in &self.couplings {
            let diff = delta[c.i] - delta[c.j];
            out[c.i] += c.k * (diff - c.gamma).sin();
            out[c.j] += c.k * (-diff - c.gamma).sin();
        }
    }

    /// Jacobian of [`eval_f`](Self::eval_f); every row sums to zero.
    pub fn jacobian_f(&self, delta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len("jacobian_f", self.n(), delta.len())?;
        let n = self.n();
        let mut jac = DMatrix::zeros(n, n);
        for c in &self.couplings {
            let diff = delta[c.i] - delta[c.j];
            let gi = c.k * (diff - c.gamma).cos();
            let gj = c.k * (-diff - c.gamma).cos();
            jac[(c.i, c.i)] += gi;
            jac[(c.i, c.j)] -= gi;
            jac[(c.j, c.j)] += gj;
            jac[(c.j, c.i)] -= gj;
        }
        Ok(jac)
    }

    /// Solves `f(delta) = B` with `delta_gauge = 0` by damped Newton on the
    /// gauge-fixed `(n-1)`-dimensional system.
    pub fn solve_equilibrium(&self, gauge: usize) -> Result<DVector<f64>> {
        const MAX_ITER: usize = 100;
        const TOL: f64 = 1e-12;
        let n = self.n();
        if gauge >= n {
            return Err(Error::InvalidArgument(format!(
                "gauge node {} out of range 1..{n}",
                gauge + 1
            )));
        }
        let free: Vec<usize> = (0..n).filter(|&i| i != gauge).collect();
        let reduced_residual = |delta: &DVector<f64>| -> Result<DVector<f64>> {
            let f = self.eval_f(delta)?;
            Ok(DVector::from_iterator(
                free.len(),
                free.iter().map(|&i| f[i] - self.input[i]),
            ))
        };

        let mut delta = DVector::zeros(n);
        let mut res = reduced_residual(&delta)?;
        let mut res_norm = res.amax();
        for _ in 0..MAX_ITER {
            if res_norm <= TOL {
                let full = self.eval_f(&delta)? - &self.input;
                let full_norm = full.amax();
                if full_norm > 1e-10 {
                    return Err(Error::Residual {
                        what: "equilibrium (gauge row not balanced by injections)",
                        residual: full_norm,
                        tol: 1e-10,
                    });
                }
                return Ok(delta);
            }
            let jac = self.jacobian_f(&delta)?;
            let reduced = DMatrix::from_fn(free.len(), free.len(), |r, c| jac[(free[r], free[c])]);
            let step = reduced
                .lu()
                .solve(&res)
                .filter(|s| s.iter().all(|v| v.is_finite()))
                .ok_or_else(|| {
                    Error::Singular("gauge-fixed Jacobian at Newton iterate".into())
                })?;

            let mut scale = 1.0;
            let mut accepted = false;
            let mut trial = delta.clone();
            for _ in 0..30 {
                for (r, &i) in free.iter().enumerate() {
                    trial[i] = delta[i] - scale * step[r];
                }
                let trial_res = reduced_residual(&trial)?;
                let trial_norm = trial_res.amax();
                if trial_norm < res_norm {
                    delta.copy_from(&trial);
                    res = trial_res;
                    res_norm = trial_norm;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                // stalled: take the smallest step anyway and keep iterating
                delta.copy_from(&trial);
                res = reduced_residual(&delta)?;
                res_norm = res.amax();
            }
        }
        Err(Error::NoConvergence {
            iterations: MAX_ITER,
            residual: res_norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const TWO_NODE: &str = r#"{"n":2,"omega_R":2,
        "nodes":[{"J":1,"D":4,"B":0.5},{"J":2,"D":6,"B":-0.5}],
        "couplings":[{"i":1,"j":2,"K":1,"gamma":0}]}"#;

    fn two_node(gamma: f64, b: f64) -> SecondOrderModel {
        let net = PowerNetwork::new(
            2.0,
            vec![
                Node { j: 1.0, d: 4.0, b },
                Node { j: 2.0, d: 6.0, b: -b },
            ],
            [Coupling { i: 0, j: 1, k: 1.0, gamma }],
            OutputSpec::Mean,
        )
        .unwrap();
        SecondOrderModel::from_network(&net)
    }

    #[test]
    fn parses_two_node_file() {
        let net = PowerNetwork::from_json_str(TWO_NODE).unwrap();
        assert_eq!(net.n(), 2);
        assert_eq!(net.couplings.len(), 1);
        assert_eq!(net.couplings[0], Coupling { i: 0, j: 1, k: 1.0, gamma: 0.0 });
        assert_eq!(net.output, OutputSpec::Mean);
    }

    #[test]
    fn rejects_asymmetric_duplicate() {
        let text = TWO_NODE.replace(
            r#"{"i":1,"j":2,"K":1,"gamma":0}"#,
            r#"{"i":1,"j":2,"K":1,"gamma":0},{"i":2,"j":1,"K":0.9,"gamma":0}"#,
        );
        let err = PowerNetwork::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("asymmetric coupling"), "{err}");
    }

    #[test]
    fn merges_consistent_duplicate() {
        let text = TWO_NODE.replace(
            r#"{"i":1,"j":2,"K":1,"gamma":0}"#,
            r#"{"i":1,"j":2,"K":1,"gamma":0},{"i":2,"j":1,"K":1,"gamma":0}"#,
        );
        let net = PowerNetwork::from_json_str(&text).unwrap();
        assert_eq!(net.couplings.len(), 1);
    }

    #[test]
    fn missing_omega_is_reported() {
        let text = TWO_NODE.replace(r#""omega_R":2,"#, "");
        let err = PowerNetwork::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("missing field `omega_R`"), "{err}");
    }

    #[test]
    fn validation_errors() {
        let self_loop = TWO_NODE.replace(r#""j":2"#, r#""j":1"#);
        assert!(PowerNetwork::from_json_str(&self_loop)
            .unwrap_err()
            .to_string()
            .contains("self-coupling"));
        let bad_d = TWO_NODE.replace(r#""D":4"#, r#""D":0"#);
        assert!(PowerNetwork::from_json_str(&bad_d).is_err());
        let bad_w = TWO_NODE.replace(r#""omega_R":2"#, r#""omega_R":-1"#);
        assert!(PowerNetwork::from_json_str(&bad_w).is_err());
        let out_of_range = TWO_NODE.replace(r#""j":2"#, r#""j":3"#);
        assert!(PowerNetwork::from_json_str(&out_of_range)
            .unwrap_err()
            .to_string()
            .contains("out of range"));
    }

    #[test]
    fn explicit_output_matrix() {
        let text = TWO_NODE.replace(
            r#""couplings""#,
            r#""output":{"C":[[1,0],[0,2]]},"couplings""#,
        );
        let net = PowerNetwork::from_json_str(&text).unwrap();
        let model = SecondOrderModel::from_network(&net);
        assert_eq!(model.p(), 2);
        assert_eq!(model.output[(1, 1)], 2.0);
    }

    #[test]
    fn json_round_trip() {
        let net = PowerNetwork::synthetic(6, Topology::Random(0.4), 11).unwrap();
        let back = PowerNetwork::from_json_str(&net.to_json_string().unwrap()).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn synthetic_topologies() {
        let ring = PowerNetwork::synthetic(3, Topology::Ring, 7).unwrap();
        let mut pairs: Vec<_> = ring.couplings.iter().map(|c| (c.i, c.j)).collect();
        pairs.sort();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 2)]);
        let complete = PowerNetwork::synthetic(4, Topology::Complete, 1).unwrap();
        assert_eq!(complete.couplings.len(), 6);
        assert_eq!(PowerNetwork::synthetic(2, Topology::Ring, 0).unwrap().couplings.len(), 1);
        assert!(PowerNetwork::synthetic(1, Topology::Ring, 0).is_err());
    }

    #[test]
    fn synthetic_is_deterministic_and_in_range() {
        let a = PowerNetwork::synthetic(12, Topology::Random(0.3), 5).unwrap();
        let b = PowerNetwork::synthetic(12, Topology::Random(0.3), 5).unwrap();
        assert_eq!(a, b);
        let sum: f64 = a.nodes.iter().map(|x| x.b).sum();
        assert!(sum.abs() < 1e-12);
        for node in &a.nodes {
            assert!((0.5..=2.0).contains(&node.j) && (0.5..=2.0).contains(&node.d));
        }
        for c in &a.couplings {
            assert!((0.5..=2.0).contains(&c.k) && (0.0..=0.2).contains(&c.gamma));
        }
    }

    #[test]
    fn assembly_matches_formulas() {
        let net = PowerNetwork::from_json_str(TWO_NODE).unwrap();
        let model = SecondOrderModel::from_network(&net);
        assert_eq!(model.mass.as_slice(), &[1.0, 2.0]);
        assert_eq!(model.damping.as_slice(), &[2.0, 3.0]);
        assert_eq!(model.input.as_slice(), &[0.5, -0.5]);
        assert_eq!(model.output, DMatrix::from_row_slice(1, 2, &[0.5, 0.5]));
    }

    #[test]
    fn eval_f_examples() {
        let model = two_node(0.0, 0.5);
        let f = model.eval_f(&DVector::from_vec(vec![PI / 2.0, 0.0])).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-15 && (f[1] + 1.0).abs() < 1e-15);

        let shifted = two_node(PI / 2.0, 0.5);
        let f = shifted.eval_f(&DVector::zeros(2)).unwrap();
        assert!((f[0] + 1.0).abs() < 1e-15 && (f[1] + 1.0).abs() < 1e-15);

        assert!(model.eval_f(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn jacobian_at_zero() {
        let model = two_node(0.0, 0.5);
        let jac = model.jacobian_f(&DVector::zeros(2)).unwrap();
        assert_eq!(jac, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn equilibrium_two_node() {
        let model = two_node(0.0, 0.5);
        let eq = model.solve_equilibrium(1).unwrap();
        assert!((eq[0] - PI / 6.0).abs() < 1e-12);
        assert_eq!(eq[1], 0.0);
    }

    #[test]
    fn equilibrium_zero_injection() {
        let model = two_node(0.0, 0.0);
        assert_eq!(model.solve_equilibrium(1).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn equilibrium_infeasible() {
        let model = two_node(0.0, 2.0);
        let err = model.solve_equilibrium(1).unwrap_err();
        assert!(
            matches!(err, Error::NoConvergence { .. } | Error::Singular(_)),
            "{err}"
        );
    }
}
