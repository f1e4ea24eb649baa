//! Sparse three-mode tensors and the Kronecker index machinery around them.
//!
//! Entry `(i, j, k)` multiplies `u_j * v_k` and accumulates into row `i`, so
//! the mode-1 matricization is an `N x N^2` operator acting on `u (x) v`
//! with column index `j * N + k`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Coordinate-format 3-tensor with sorted, duplicate-free entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor3 {
    dim: usize,
    entries: Vec<(usize, usize, usize, f64)>,
}

impl SparseTensor3 {
    /// Builds a tensor from raw triplets; duplicates are summed and exact
    /// zeros dropped.
    pub fn from_entries(
        dim: usize,
        raw: impl IntoIterator<Item = (usize, usize, usize, f64)>,
    ) -> Result<Self> {
        let mut acc: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for (i, j, k, v) in raw {
            if i >= dim || j >= dim || k >= dim {
                return Err(Error::InvalidArgument(format!(
                    "tensor coordinate ({i}, {j}, {k}) outside dimension {dim}"
                )));
            }
            *acc.entry((i, j, k)).or_insert(0.0) += v;
        }
        let entries = acc
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((i, j, k), v)| (i, j, k, v))
            .collect();
        Ok(Self { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Entries sorted by `(i, j, k)`.
    pub fn entries(&self) -> &[(usize, usize, usize, f64)] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.entries
            .binary_search_by(|e| (e.0, e.1, e.2).cmp(&(i, j, k)))
            .map_or(0.0, |idx| self.entries[idx].3)
    }

    /// Frobenius norm of the tensor (equal to that of any matricization).
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.3 * e.3).sum::<f64>().sqrt()
    }

    /// True when `T_ijk == T_ikj` for every stored entry.
    pub fn is_symmetric(&self) -> bool {
        self.entries.iter().all(|&(i, j, k, v)| self.get(i, k, j) == v)
    }

    /// `H (u (x) v)`.
    pub fn mode1_apply<T: ComplexField<RealField = f64> + Copy>(
        &self,
        u: &DVector<T>,
        v: &DVector<T>,
    ) -> Result<DVector<T>> {
        check_len("mode1_apply (u)", self.dim, u.len())?;
        check_len("mode1_apply (v)", self.dim, v.len())?;
        let mut out = DVector::from_element(self.dim, T::zero());
        for &(i, j, k, val) in &self.entries {
            out[i] += u[j] * v[k] * T::from_real(val);
        }
        Ok(out)
    }

    /// `H (U (x) V)`: column `a * V.ncols() + b` holds `H (U[:, a] (x) V[:, b])`.
    pub fn mode1_apply_pairs<T: ComplexField<RealField = f64> + Copy>(
        &self,
        left: &DMatrix<T>,
        right: &DMatrix<T>,
    ) -> Result<DMatrix<T>> {
        check_len("mode1_apply_pairs (left)", self.dim, left.nrows())?;
        check_len("mode1_apply_pairs (right)", self.dim, right.nrows())?;
        let (a, b) = (left.ncols(), right.ncols());
        let mut out = DMatrix::from_element(self.dim, a * b, T::zero());
        for &(i, j, k, val) in &self.entries {
            let val = T::from_real(val);
            for alpha in 0..a {
                let lv = left[(j, alpha)] * val;
                for beta in 0..b {
                    out[(i, alpha * b + beta)] += lv * right[(k, beta)];
                }
            }
        }
        Ok(out)
    }

    /// Mode-2 contraction: column `a * Right.ncols() + b` has row-`j` entry
    /// `sum T_ijk Left[i, a] Right[k, b]`.
    pub fn mode2_apply_pairs<T: ComplexField<RealField = f64> + Copy>(
        &self,
        left: &DMatrix<T>,
        right: &DMatrix<T>,
    ) -> Result<DMatrix<T>> {
        check_len("mode2_apply_pairs (left)", self.dim, left.nrows())?;
        check_len("mode2_apply_pairs (right)", self.dim, right.nrows())?;
        let (a, b) = (left.ncols(), right.ncols());
        let mut out = DMatrix::from_element(self.dim, a * b, T::zero());
        for &(i, j, k, val) in &self.entries {
            let val = T::from_real(val);
            for alpha in 0..a {
                let lv = left[(i, alpha)] * val;
                for beta in 0..b {
                    out[(j, alpha * b + beta)] += lv * right[(k, beta)];
                }
            }
        }
        Ok(out)
    }

    /// `(T_ijk + T_ikj) / 2`.
    pub fn symmetrize(&self) -> Self {
        let raw = self
            .entries
            .iter()
            .flat_map(|&(i, j, k, v)| [(i, j, k, 0.5 * v), (i, k, j, 0.5 * v)]);
        Self::from_entries(self.dim, raw).expect("coordinates already in range")
    }

    /// Dense mode-1 matricization; only sensible for small `N`.
    pub fn to_dense_mode1(&self) -> DMatrix<f64> {
        let n = self.dim;
        let mut out = DMatrix::zeros(n, n * n);
        for &(i, j, k, v) in &self.entries {
            out[(i, j * n + k)] += v;
        }
        out
    }

    /// Writes `i j k value` lines with 1-based coordinates.
    pub fn to_coordinate_text(&self) -> String {
        let mut text = String::new();
        for &(i, j, k, v) in &self.entries {
            writeln!(text, "{} {} {} {:e}", i + 1, j + 1, k + 1, v).expect("string write");
        }
        text
    }
}

/// A permutation stored as an index map: `apply(x)[k] = x[map[k]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexPermutation {
    map: Vec<usize>,
}

impl IndexPermutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidArgument("index map is not a bijection".into()));
            }
        }
        Ok(Self { map })
    }

    pub fn size(&self) -> usize {
        self.map.len()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    /// The commutation map on `n^2`-vectors: `apply(v (x) r) = r (x) v`.
    pub fn commutation(n: usize) -> Self {
        let map = (0..n * n).map(|idx| (idx % n) * n + idx / n).collect();
        Self { map }
    }

    /// Maps the block-wise product of a four-block state to the standard
    /// Kronecker product.
    ///
    /// For `q = [q1; q2; q3; q4]` with blocks of length `n`, the block-wise
    /// ordering lists `q_a (x) q_b` for `a, b = 1..4` in turn, so index
    /// `a*4n^2 + b*n^2 + i*n + j` holds `q_a[i] q_b[j]`. Applying the
    /// permutation to `q (x) q` yields that ordering.
    pub fn revised_kronecker(n: usize) -> Self {
        let big = 4 * n;
        let mut map = Vec::with_capacity(big * big);
        for a in 0..4 {
            for b in 0..4 {
                for i in 0..n {
                    for j in 0..n {
                        map.push((a * n + i) * big + (b * n + j));
                    }
                }
            }
        }
        Self { map }
    }

    pub fn inverse(&self) -> Self {
        let mut map = vec![0; self.map.len()];
        for (k, &m) in self.map.iter().enumerate() {
            map[m] = k;
        }
        Self { map }
    }

    pub fn apply<T: Copy>(&self, x: &[T]) -> Result<Vec<T>> {
        check_len("permutation", self.map.len(), x.len())?;
        Ok(self.map.iter().map(|&m| x[m]).collect())
    }
}

/// Swaps the Kronecker factors of an `n^2`-vector: `v (x) r -> r (x) v`.
pub fn commutation_apply(n: usize, w: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("commutation_apply", n * n, w.len())?;
    let perm = IndexPermutation::commutation(n);
    Ok(DVector::from_vec(perm.apply(w.as_slice())?))
}
