//! Leave-one-out contraction kernels.
//!
//! For a symmetric tensor `S` and factors `u ∈ R^{n×r}` the AMP field is
//!
//! ```text
//! out_{i,k} = Σ_{i₂<…<i_p, all ≠ i} S_{sort(i,i₂,…,i_p)} · u_{i₂,k} ⋯ u_{i_p,k}
//! ```
//!
//! Instead of gathering per output index (which reads the tensor `p` times),
//! the kernel streams the tensor once in storage order and scatters each entry
//! to the `p` outputs it contributes to. The recursion carries the product of
//! the factors above the current level downward and returns the partial
//! contraction of the levels below upward, so every entry costs `O(r)` work.
//!
//! Parallelism is over fixed slabs of top indices. Each slab accumulates into a
//! private buffer and buffers are summed in slab order, so the result does not
//! depend on the thread count.

use super::{BinomTable, MultiVector, SymmetricTensor};
use crate::error::{Error, Result};
use crate::par::Exec;

/// Maximum rank supported by the contraction kernels.
pub const MAX_RANK: usize = 16;

/// Target number of tensor entries per work slab.
const SLAB_ENTRIES: usize = 1 << 18;

/// Splits the top index range `[p−1, n)` into slabs of roughly
/// [`SLAB_ENTRIES`] entries. Depends only on `(n, p)`.
pub(crate) fn top_slabs(n: usize, p: usize, binom: &BinomTable) -> Vec<(usize, usize)> {
    let mut slabs = Vec::new();
    if n < p {
        return slabs;
    }
    let mut start = p - 1;
    let mut acc = 0usize;
    for c in p - 1..n {
        acc += binom.get(c, p - 1);
        if acc >= SLAB_ENTRIES {
            slabs.push((start, c + 1));
            start = c + 1;
            acc = 0;
        }
    }
    if start < n {
        slabs.push((start, n));
    }
    slabs
}

struct Kernel<'a> {
    data: &'a [f64],
    binom: &'a BinomTable,
    u: &'a [f64],
}

impl Kernel<'_> {
    // r = 1 fast path.
    fn level1(&self, k: usize, bound: usize, offset: usize, up: f64, out: &mut [f64]) -> f64 {
        let u = self.u;
        if k == 1 {
            let row = &self.data[offset..offset + bound];
            let mut t = 0.0;
            for (j, &s) in row.iter().enumerate() {
                out[j] += s * up;
                t += s * u[j];
            }
            return t;
        }
        let mut t = 0.0;
        for j in k - 1..bound {
            let low = self.level1(k - 1, j, offset + self.binom.get(j, k), up * u[j], out);
            out[j] += up * low;
            t += u[j] * low;
        }
        t
    }

    fn level_r(
        &self,
        r: usize,
        k: usize,
        bound: usize,
        offset: usize,
        up: &[f64; MAX_RANK],
        out: &mut [f64],
    ) -> [f64; MAX_RANK] {
        let u = self.u;
        let mut t = [0.0; MAX_RANK];
        if k == 1 {
            for j in 0..bound {
                let s = self.data[offset + j];
                for c in 0..r {
                    out[j * r + c] += s * up[c];
                    t[c] += s * u[j * r + c];
                }
            }
            return t;
        }
        for j in k - 1..bound {
            let mut up2 = [0.0; MAX_RANK];
            for c in 0..r {
                up2[c] = up[c] * u[j * r + c];
            }
            let low = self.level_r(r, k - 1, j, offset + self.binom.get(j, k), &up2, out);
            for c in 0..r {
                out[j * r + c] += up[c] * low[c];
                t[c] += u[j * r + c] * low[c];
            }
        }
        t
    }

    /// Processes top indices `[c0, c1)`; returns the slab's full contraction.
    fn slab(&self, p: usize, r: usize, c0: usize, c1: usize, out: &mut [f64]) -> [f64; MAX_RANK] {
        let mut total = [0.0; MAX_RANK];
        for c in c0..c1 {
            let offset = self.binom.get(c, p);
            if r == 1 {
                let low = self.level1(p - 1, c, offset, self.u[c], out);
                out[c] += low;
                total[0] += self.u[c] * low;
            } else {
                let mut up = [0.0; MAX_RANK];
                up[..r].copy_from_slice(&self.u[c * r..(c + 1) * r]);
                let low = self.level_r(r, p - 1, c, offset, &up, out);
                for k in 0..r {
                    out[c * r + k] += low[k];
                    total[k] += self.u[c * r + k] * low[k];
                }
            }
        }
        total
    }
}

/// Runs the scatter kernel; returns (leave-one-out field, full contraction).
fn run(s: &SymmetricTensor, u: &MultiVector, exec: Exec) -> Result<(Vec<f64>, Vec<f64>)> {
    if s.n() != u.n() {
        return Err(Error::Shape(format!("tensor has n = {}, factors have n = {}", s.n(), u.n())));
    }
    let r = u.r();
    if r > MAX_RANK {
        return Err(Error::Unsupported(format!("rank {r} exceeds the kernel limit {MAX_RANK}")));
    }
    let (n, p) = (s.n(), s.p());
    let kernel = Kernel { data: s.data(), binom: s.binom(), u: u.data() };
    let slabs = top_slabs(n, p, s.binom());
    let partials = exec.map(slabs.len(), |idx| {
        let (c0, c1) = slabs[idx];
        // Outputs touched by this slab only reach index c1 − 1.
        let mut out = vec![0.0; c1 * r];
        let total = kernel.slab(p, r, c0, c1, &mut out);
        (out, total)
    });
    let mut out = vec![0.0; n * r];
    let mut total = vec![0.0; r];
    for (part, t) in partials {
        for (o, v) in out.iter_mut().zip(&part) {
            *o += v;
        }
        for k in 0..r {
            total[k] += t[k];
        }
    }
    Ok((out, total))
}

/// `prefactor · Σ_{tuples ∋ i} S_tuple · Π_{others} u` for every `i` and
/// component (Hadamard product across the `r` components).
pub fn contract_leave_one(
    s: &SymmetricTensor,
    u: &MultiVector,
    prefactor: f64,
    exec: Exec,
) -> Result<MultiVector> {
    let (mut out, _) = run(s, u, exec)?;
    out.iter_mut().for_each(|v| *v *= prefactor);
    Ok(MultiVector { n: u.n(), r: u.r(), data: out })
}

/// Full contraction `Σ_tuples S_tuple · Π_a u_{i_a,k}` per component `k`.
pub fn contract_full(s: &SymmetricTensor, u: &MultiVector, exec: Exec) -> Result<Vec<f64>> {
    Ok(run(s, u, exec)?.1)
}

/// Fills `data` (colex order) with `scale · Σ_k Π_a u_{i_a,k}`; used to build spikes.
pub(crate) fn fill_rank_sum(
    n: usize,
    p: usize,
    u: &MultiVector,
    scale: f64,
    binom: &BinomTable,
    data: &mut [f64],
    exec: Exec,
) {
    let r = u.r();
    let slabs = top_slabs(n, p, binom);
    // Carve the payload into the disjoint slab ranges.
    let mut pieces: Vec<(usize, usize, &mut [f64])> = Vec::with_capacity(slabs.len());
    let mut rest = data;
    for &(c0, c1) in &slabs {
        let len = binom.get(c1, p) - binom.get(c0, p);
        let (head, tail) = rest.split_at_mut(len);
        pieces.push((c0, c1, head));
        rest = tail;
    }
    let ud = u.data();
    fn fill(
        k: usize,
        bound: usize,
        offset: usize,
        prod: &[f64; MAX_RANK],
        r: usize,
        ud: &[f64],
        binom: &BinomTable,
        scale: f64,
        base: usize,
        data: &mut [f64],
    ) {
        for j in k - 1..bound {
            let mut next = [0.0; MAX_RANK];
            for c in 0..r {
                next[c] = prod[c] * ud[j * r + c];
            }
            if k == 1 {
                data[offset + j - base] = scale * next[..r].iter().sum::<f64>();
            } else {
                fill(k - 1, j, offset + binom.get(j, k), &next, r, ud, binom, scale, base, data);
            }
        }
    }
    exec.for_each_mut(&mut pieces, |_, (c0, c1, slab)| {
        let base = binom.get(*c0, p);
        for c in *c0..*c1 {
            let mut prod = [0.0; MAX_RANK];
            prod[..r].copy_from_slice(&ud[c * r..(c + 1) * r]);
            fill(p - 1, c, binom.get(c, p), &prod, r, ud, binom, scale, base, slab);
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_ones_n4_p3() {
        let s = SymmetricTensor::from_data(4, 3, vec![1.0; 4]).unwrap();
        let u = MultiVector::from_rows(4, 1, vec![1.0; 4]).unwrap();
        let out = contract_leave_one(&s, &u, 2.0, Exec::Sequential).unwrap();
        assert!(out.data().iter().all(|&v| v == 6.0));
    }

    #[test]
    fn zero_tensor_gives_zero() {
        let s = SymmetricTensor::zeros(7, 3).unwrap();
        let u = MultiVector::from_rows(7, 2, (0..14).map(|v| v as f64).collect()).unwrap();
        let out = contract_leave_one(&s, &u, 1.0, Exec::Parallel).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn slabs_cover_range() {
        let binom = BinomTable::new(300, 3);
        let slabs = top_slabs(300, 3, &binom);
        assert_eq!(slabs.first().unwrap().0, 2);
        assert_eq!(slabs.last().unwrap().1, 300);
        for w in slabs.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }
}
