//! Symmetric order-p tensors restricted to strictly increasing index tuples.
//!
//! Entries are stored in colexicographic order: the 0-based tuple
//! `j₁ < … < j_p` lives at `Σ_k C(j_k, k)`. All tuples sharing the same top
//! index `c` form the contiguous slab `[C(c, p), C(c + 1, p))`, which is what
//! the kernels in [`contract`] stream over.

pub mod contract;
pub mod io;

use crate::error::{Error, Result};
use nalgebra::DMatrix;

pub use contract::{contract_full, contract_leave_one};

const DEFAULT_MEM_CAP_GB: f64 = 8.0;

/// `C(m, k)` in `u128`, saturating at `u128::MAX`.
pub fn binomial(m: u64, k: u64) -> u128 {
    if k > m {
        return 0;
    }
    let k = k.min(m - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((m - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Table `t[k][m] = C(m, k)` for `k ≤ p`, `m ≤ n`.
#[derive(Clone, Debug)]
pub(crate) struct BinomTable {
    rows: Vec<Vec<usize>>,
}

impl BinomTable {
    pub(crate) fn new(n: usize, p: usize) -> Self {
        let rows = (0..=p)
            .map(|k| (0..=n).map(|m| binomial(m as u64, k as u64) as usize).collect())
            .collect();
        Self { rows }
    }

    #[inline]
    pub(crate) fn get(&self, m: usize, k: usize) -> usize {
        self.rows[k][m]
    }
}

/// Colexicographic rank of a strictly increasing **1-based** tuple:
/// `Σ_k C(i_k − 1, k)`, so `(1, 2, …, p)` has rank 0.
pub fn colex_rank(indices: &[usize]) -> Result<usize> {
    let mut rank: u128 = 0;
    for (k, w) in indices.iter().enumerate() {
        if *w == 0 || (k > 0 && indices[k - 1] >= *w) {
            return Err(Error::InvalidIndex {
                indices: indices.to_vec(),
                n: usize::MAX,
                reason: "indices must be 1-based and strictly increasing",
            });
        }
        rank += binomial((*w - 1) as u64, k as u64 + 1);
    }
    Ok(rank as usize)
}

/// Byte budget for a single tensor, from `TENSORSPIKE_MEM_CAP_GB` or 8 GiB.
pub fn memory_cap_bytes() -> u128 {
    let gb = std::env::var("TENSORSPIKE_MEM_CAP_GB")
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|g| g.is_finite() && *g > 0.0)
        .unwrap_or(DEFAULT_MEM_CAP_GB);
    (gb * (1u128 << 30) as f64) as u128
}

/// Number of stored entries, checked against the memory cap.
pub fn checked_len(n: usize, p: usize) -> Result<usize> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!("tensor order p = {p} must be ≥ 2")));
    }
    let len = binomial(n as u64, p as u64);
    let needed = len.saturating_mul(8);
    let cap = memory_cap_bytes();
    if needed > cap {
        return Err(Error::MemoryCap { needed, cap });
    }
    Ok(len as usize)
}

/// Order-p symmetric tensor over `n` variables, extra-diagonal entries only.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricTensor {
    n: usize,
    p: usize,
    data: Vec<f64>,
    binom: BinomTableHandle,
}

// Equality ignores the cached table.
#[derive(Clone, Debug)]
struct BinomTableHandle(BinomTable);

impl PartialEq for BinomTableHandle {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl SymmetricTensor {
    pub fn zeros(n: usize, p: usize) -> Result<Self> {
        let len = checked_len(n, p)?;
        Ok(Self::from_parts_unchecked(n, p, vec![0.0; len]))
    }

    /// Wraps an existing colex-ordered payload.
    pub fn from_data(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        let len = checked_len(n, p)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "payload has {} entries, C({n},{p}) = {len}",
                data.len()
            )));
        }
        Ok(Self::from_parts_unchecked(n, p, data))
    }

    fn from_parts_unchecked(n: usize, p: usize, data: Vec<f64>) -> Self {
        Self { n, p, data, binom: BinomTableHandle(BinomTable::new(n, p)) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn binom(&self) -> &BinomTable {
        &self.binom.0
    }

    /// Rank of a 0-based tuple given in any order. Repeated or out-of-range
    /// indices are errors: the diagonal is never observed.
    pub fn rank_of(&self, indices: &[usize]) -> Result<usize> {
        if indices.len() != self.p {
            return Err(Error::InvalidIndex {
                indices: indices.to_vec(),
                n: self.n,
                reason: "tuple length differs from the tensor order",
            });
        }
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        for (k, &j) in sorted.iter().enumerate() {
            if j >= self.n {
                return Err(Error::InvalidIndex { indices: indices.to_vec(), n: self.n, reason: "index out of range" });
            }
            if k > 0 && sorted[k - 1] == j {
                return Err(Error::InvalidIndex {
                    indices: indices.to_vec(),
                    n: self.n,
                    reason: "repeated index (diagonal entries are not stored)",
                });
            }
        }
        Ok(sorted.iter().enumerate().map(|(k, &j)| self.binom.0.get(j, k + 1)).sum())
    }

    /// Entry at a 0-based tuple in any order.
    pub fn get(&self, indices: &[usize]) -> Result<f64> {
        Ok(self.data[self.rank_of(indices)?])
    }

    pub fn set(&mut self, indices: &[usize], value: f64) -> Result<()> {
        let r = self.rank_of(indices)?;
        self.data[r] = value;
        Ok(())
    }

    /// Calls `f(tuple, value)` for every stored entry in colex order.
    pub fn for_each_entry(&self, mut f: impl FnMut(&[usize], f64)) {
        let mut tuple: Vec<usize> = (0..self.p).collect();
        for &v in &self.data {
            f(&tuple, v);
            next_colex(&mut tuple);
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }
}

/// Advances a 0-based increasing tuple to its colex successor.
pub fn next_colex(t: &mut [usize]) {
    let p = t.len();
    for k in 0..p {
        let limit = if k + 1 < p { t[k + 1] } else { usize::MAX };
        if t[k] + 1 < limit {
            t[k] += 1;
            for (m, v) in t.iter_mut().enumerate().take(k) {
                *v = m;
            }
            return;
        }
    }
}

/// `n` vectors in `R^r`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiVector {
    n: usize,
    r: usize,
    data: Vec<f64>,
}

impl MultiVector {
    pub fn zeros(n: usize, r: usize) -> Self {
        Self { n, r, data: vec![0.0; n * r] }
    }

    pub fn from_rows(n: usize, r: usize, data: Vec<f64>) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidParameter("rank r must be ≥ 1".into()));
        }
        if data.len() != n * r {
            return Err(Error::Shape(format!("{} values for {n}×{r} rows", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite entry in MultiVector".into()));
        }
        Ok(Self { n, r, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.r..(i + 1) * self.r]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.r..(i + 1) * self.r]
    }

    /// Overlap `u·v = (1/n) Σ_i u_i v_iᵀ` (an `r×r` matrix).
    pub fn overlap(&self, other: &MultiVector) -> Result<DMatrix<f64>> {
        if self.n != other.n || self.r != other.r {
            return Err(Error::Shape(format!(
                "overlap of {}×{} with {}×{}",
                self.n, self.r, other.n, other.r
            )));
        }
        let r = self.r;
        let mut m = DMatrix::zeros(r, r);
        for i in 0..self.n {
            let (a, b) = (self.row(i), other.row(i));
            for k in 0..r {
                for l in 0..r {
                    m[(k, l)] += a[k] * b[l];
                }
            }
        }
        Ok(m / self.n as f64)
    }

    /// Applies the permutation `perm` to the rows: row `i` moves to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.n, self.r);
        for i in 0..self.n {
            out.row_mut(perm[i]).copy_from_slice(self.row(i));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        assert_eq!(colex_rank(&[1, 2, 3]).unwrap(), 0);
        assert_eq!(colex_rank(&[1, 2, 4]).unwrap(), 1);
        assert_eq!(colex_rank(&[2, 4, 5]).unwrap(), 8);
        assert!(colex_rank(&[2, 2, 5]).is_err());
        assert!(colex_rank(&[3, 2, 5]).is_err());
    }

    #[test]
    fn rank_matches_enumeration_order() {
        // Enumerate increasing triples of {1..6} in colex order (sort by the
        // reversed tuple) and compare with the closed-form rank.
        let mut tuples = Vec::new();
        for a in 1..=6 {
            for b in a + 1..=6 {
                for c in b + 1..=6 {
                    tuples.push([a, b, c]);
                }
            }
        }
        tuples.sort_by_key(|t| [t[2], t[1], t[0]]);
        for (pos, t) in tuples.iter().enumerate() {
            assert_eq!(colex_rank(t).unwrap(), pos);
        }
    }

    #[test]
    fn accessor_sorts_and_rejects_diagonal() {
        let mut t = SymmetricTensor::zeros(5, 3).unwrap();
        t.set(&[4, 1, 3], 2.5).unwrap();
        assert_eq!(t.get(&[1, 3, 4]).unwrap(), 2.5);
        assert_eq!(t.get(&[3, 4, 1]).unwrap(), 2.5);
        assert!(t.get(&[1, 1, 3]).is_err());
        assert!(t.get(&[1, 2, 5]).is_err());
    }

    #[test]
    fn for_each_entry_visits_in_rank_order() {
        let t = SymmetricTensor::from_data(6, 4, (0..15).map(|v| v as f64).collect()).unwrap();
        let mut seen = 0;
        t.for_each_entry(|tuple, v| {
            assert_eq!(t.rank_of(tuple).unwrap() as f64, v);
            seen += 1;
        });
        assert_eq!(seen, 15);
    }

    #[test]
    fn memory_guard_refuses_huge_tensors() {
        assert!(matches!(SymmetricTensor::zeros(1_000_000, 4), Err(Error::MemoryCap { .. })));
        assert!(matches!(SymmetricTensor::zeros(10, 1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn overlap_is_normalized() {
        let u = MultiVector::from_rows(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = u.overlap(&u).unwrap();
        assert_eq!(m, DMatrix::identity(2, 2) * 0.5);
    }
}
