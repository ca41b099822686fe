//! Exact small-`N` references: Hamiltonian, posterior enumeration for
//! discrete priors, the Nishimori identity, exact free energies, and naive
//! dense kernels used to cross-check the fast paths.
//!
//! Two-atom priors are enumerated in binary-reflected Gray-code order so that
//! consecutive configurations differ in one site and the Hamiltonian is
//! updated from the tuples touching that site only; larger supports use an
//! odometer with the same per-site updates.

use crate::amp::AmpState;
use crate::error::{Error, Result};
use crate::model::prior::log_sum_exp;
use crate::model::{spike_prefactor, Instance, ModelSpec, Prior};
use crate::par::Exec;
use crate::quadrature::{Estimate, Welford};
use crate::rng::child_seed;
use crate::tensor::{next_colex, MultiVector, SymmetricTensor};
use nalgebra::{DMatrix, DVector};

/// Largest state space enumerated.
pub const MAX_STATES: u128 = 1 << 24;
/// Configurations per enumeration block; each block restarts from an exact
/// Hamiltonian, so round-off never accumulates over more steps than this.
const ENUM_BLOCK: usize = 4096;

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("Δ must be positive and finite, got {delta}")))
    }
}

/// `H_N(X) = Δ⁻¹ Σ_{i₁<…<i_p} [c Y x_{i₁}…x_{i_p} − (c²/2)(x_{i₁}…x_{i_p})²]`
/// with `c = √((p−1)!)/N^{(p−1)/2}`.
pub fn hamiltonian(x: &[f64], y: &SymmetricTensor, delta: f64) -> Result<f64> {
    if x.len() != y.n() {
        return Err(Error::Shape(format!("configuration of length {} for n = {}", x.len(), y.n())));
    }
    let c = spike_prefactor(y.n(), y.p());
    let mut h = 0.0;
    y.for_each_entry(|t, v| {
        let prod: f64 = t.iter().map(|&i| x[i]).product();
        h += c * v * prod - 0.5 * c * c * prod * prod;
    });
    Ok(h / delta)
}

/// Tuples containing each site: `(rank, other sites)`.
struct SiteTuples {
    per_site: Vec<Vec<(usize, Vec<usize>)>>,
}

impl SiteTuples {
    fn new(n: usize, p: usize, y: &SymmetricTensor) -> Self {
        let mut per_site = vec![Vec::new(); n];
        let mut t: Vec<usize> = (0..p).collect();
        let len = y.data().len();
        for rank in 0..len {
            for (a, &i) in t.iter().enumerate() {
                let others: Vec<usize> = t.iter().enumerate().filter(|&(b, _)| b != a).map(|(_, &j)| j).collect();
                per_site[i].push((rank, others));
            }
            if rank + 1 < len {
                next_colex(&mut t);
            }
        }
        Self { per_site }
    }

    /// `H(x with x_i = new) − H(x)`.
    fn delta_h(&self, i: usize, old: f64, new: f64, x: &[f64], y: &[f64], c: f64, inv_delta: f64) -> f64 {
        let (mut lin, mut quad) = (0.0, 0.0);
        for (rank, others) in &self.per_site[i] {
            let prod: f64 = others.iter().map(|&j| x[j]).product();
            lin += y[*rank] * prod;
            quad += prod * prod;
        }
        inv_delta * (c * (new - old) * lin - 0.5 * c * c * (new * new - old * old) * quad)
    }
}

/// Exact posterior of a rank-one discrete prior, by enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactPosterior {
    /// Atoms of the prior, in order.
    pub atoms: Vec<f64>,
    /// `ln P_X(X) + H_N(X)` in enumeration order.
    pub log_weights: Vec<f64>,
    pub log_z: f64,
    /// Posterior means `⟨x_i⟩`.
    pub marginals: Vec<f64>,
    n: usize,
    gray: bool,
}

impl ExactPosterior {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// Atom indices of configuration number `idx` in enumeration order.
    pub fn config_digits(&self, idx: usize) -> Vec<usize> {
        config_digits(idx, self.n, self.atoms.len(), self.gray)
    }

    pub fn config(&self, idx: usize) -> Vec<f64> {
        self.config_digits(idx).into_iter().map(|d| self.atoms[d]).collect()
    }

    /// Normalized weight of configuration `idx`.
    pub fn weight(&self, idx: usize) -> f64 {
        (self.log_weights[idx] - self.log_z).exp()
    }

    /// `⟨X⟩·⟨X⟩ = (1/N) Σ_i ⟨x_i⟩²`, the overlap of two independent replicas.
    pub fn replica_overlap(&self) -> f64 {
        self.marginals.iter().map(|m| m * m).sum::<f64>() / self.n as f64
    }

    /// `Σ_{X⁰} P(X⁰|Y) ⟨X⟩·X⁰`, summed configuration by configuration.
    pub fn planted_overlap(&self) -> f64 {
        let mut total = 0.0;
        for idx in 0..self.len() {
            let x = self.config(idx);
            let dot: f64 = x.iter().zip(&self.marginals).map(|(a, m)| a * m).sum();
            total += self.weight(idx) * dot / self.n as f64;
        }
        total
    }
}

fn config_digits(idx: usize, n: usize, k: usize, gray: bool) -> Vec<usize> {
    if gray {
        let g = idx ^ (idx >> 1);
        (0..n).map(|i| (g >> i) & 1).collect()
    } else {
        let mut rem = idx;
        (0..n)
            .map(|_| {
                let d = rem % k;
                rem /= k;
                d
            })
            .collect()
    }
}

fn discrete_support(prior: &Prior) -> Result<Vec<(f64, f64)>> {
    prior.validate()?;
    match prior.scalar_support() {
        Some(s) if prior.rank() == 1 => Ok(s),
        _ => Err(Error::Unsupported(format!("exact enumeration needs a discrete rank-one prior, got {}", prior.family()))),
    }
}

/// Enumerates every configuration and normalizes `P_X(X) e^{H_N(X)}`.
pub fn exact_posterior(y: &SymmetricTensor, delta: f64, prior: &Prior, exec: Exec) -> Result<ExactPosterior> {
    check_delta(delta)?;
    let (n, p) = (y.n(), y.p());
    if n < p {
        return Err(Error::Precondition(format!("n = {n} must be ≥ p = {p}")));
    }
    let support = discrete_support(prior)?;
    let k = support.len();
    let states = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if states > MAX_STATES {
        return Err(Error::Capacity { states, cap: MAX_STATES });
    }
    let states = states as usize;
    let atoms: Vec<f64> = support.iter().map(|s| s.0).collect();
    let log_w: Vec<f64> = support.iter().map(|s| if s.1 > 0.0 { s.1.ln() } else { f64::NEG_INFINITY }).collect();
    let gray = k == 2;
    let sites = SiteTuples::new(n, p, y);
    let c = spike_prefactor(n, p);
    let inv_delta = 1.0 / delta;
    let blocks = states.div_ceil(ENUM_BLOCK);

    let per_block = exec.map(blocks, |b| -> Result<Vec<f64>> {
        let start = b * ENUM_BLOCK;
        let end = (start + ENUM_BLOCK).min(states);
        let mut digits = config_digits(start, n, k, gray);
        let mut x: Vec<f64> = digits.iter().map(|&d| atoms[d]).collect();
        let mut h = hamiltonian(&x, y, delta)?;
        let mut lp: f64 = digits.iter().map(|&d| log_w[d]).sum();
        let mut out = Vec::with_capacity(end - start);
        out.push(lp + h);
        for idx in start + 1..end {
            let changes: Vec<(usize, usize)> = if gray {
                let site = idx.trailing_zeros() as usize;
                vec![(site, 1 - digits[site])]
            } else {
                let mut ch = Vec::new();
                let mut site = 0;
                loop {
                    if digits[site] + 1 < k {
                        ch.push((site, digits[site] + 1));
                        break;
                    }
                    ch.push((site, 0));
                    site += 1;
                }
                ch
            };
            for (site, d) in changes {
                let (old, new) = (x[site], atoms[d]);
                h += sites.delta_h(site, old, new, &x, y.data(), c, inv_delta);
                lp += log_w[d] - log_w[digits[site]];
                x[site] = new;
                digits[site] = d;
            }
            out.push(lp + h);
        }
        Ok(out)
    });
    let mut log_weights = Vec::with_capacity(states);
    for blk in per_block {
        log_weights.extend(blk?);
    }
    let log_z = log_sum_exp(&log_weights);
    if !log_z.is_finite() {
        return Err(Error::Numeric("posterior normalizer is not finite".into()));
    }
    let mut post = ExactPosterior { atoms, log_weights, log_z, marginals: vec![0.0; n], n, gray };
    let partial = exec.map(blocks, |b| {
        let mut acc = vec![0.0; n];
        for idx in b * ENUM_BLOCK..((b + 1) * ENUM_BLOCK).min(states) {
            let w = post.weight(idx);
            for (a, d) in acc.iter_mut().zip(post.config_digits(idx)) {
                *a += w * post.atoms[d];
            }
        }
        acc
    });
    for acc in partial {
        for (m, a) in post.marginals.iter_mut().zip(acc) {
            *m += a;
        }
    }
    Ok(post)
}

/// One instance of the Nishimori check.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct NishimoriInstance {
    /// `E⟨X·X'⟩` over two independent posterior replicas.
    pub replicas: f64,
    /// `E_{X⁰∼posterior} ⟨X⟩·X⁰`.
    pub planted: f64,
    pub discrepancy: f64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct NishimoriReport {
    pub instances: Vec<NishimoriInstance>,
    pub max_discrepancy: f64,
    /// `(1/N) E ‖X⁰ − ⟨X⟩‖²` over the planted trials.
    pub mmse_direct: Estimate,
    /// `Σ_X − E ⟨X⟩·X⁰` over the same trials.
    pub mmse_identity: Estimate,
}

/// Planted instances with exact posteriors: checks the Nishimori identity per
/// instance and the MMSE identity over trials.
pub fn nishimori_check(spec: &ModelSpec, trials: usize, seed: u64, exec: Exec) -> Result<NishimoriReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    discrete_support(&spec.prior)?;
    let delta = spec_delta(spec)?;
    let sigma_x = spec.prior.moments().sigma_x[(0, 0)];
    let runs = exec.map(trials, |t| -> Result<(NishimoriInstance, f64, f64)> {
        let inst = Instance::generate(spec, child_seed(seed, t as u64), Exec::Sequential)?;
        let post = exact_posterior(&inst.y, delta, &spec.prior, Exec::Sequential)?;
        let replicas = post.replica_overlap();
        let planted = post.planted_overlap();
        let n = spec.n as f64;
        let x0 = inst.x0.data();
        let direct = x0.iter().zip(&post.marginals).map(|(a, m)| (a - m) * (a - m)).sum::<f64>() / n;
        let with_truth = x0.iter().zip(&post.marginals).map(|(a, m)| a * m).sum::<f64>() / n;
        Ok((NishimoriInstance { replicas, planted, discrepancy: (replicas - planted).abs() }, direct, sigma_x - with_truth))
    });
    let mut instances = Vec::with_capacity(trials);
    let (mut wd, mut wi) = (Welford::default(), Welford::default());
    for r in runs {
        let (inst, d, i) = r?;
        instances.push(inst);
        wd.push(d);
        wi.push(i);
    }
    let max_discrepancy = instances.iter().map(|i| i.discrepancy).fold(0.0, f64::max);
    Ok(NishimoriReport { instances, max_discrepancy, mmse_direct: wd.estimate(), mmse_identity: wi.estimate() })
}

fn spec_delta(spec: &ModelSpec) -> Result<f64> {
    spec.validate()?;
    match spec.channel {
        crate::model::ChannelSpec::Awgn { delta } => check_delta(delta).map(|_| delta),
    }
}

/// Monte Carlo estimate of `F_N = (1/N) E log Z_N` with exact `log Z_N` per
/// planted sample, `Z_N = Σ_X P_X(X) e^{H_N(X)}`.
pub fn exact_free_energy(spec: &ModelSpec, mc_trials: usize, seed: u64, exec: Exec) -> Result<Estimate> {
    if mc_trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let support = discrete_support(&spec.prior)?;
    let states = (support.len() as u128).checked_pow(spec.n as u32).unwrap_or(u128::MAX);
    if states > MAX_STATES {
        return Err(Error::Capacity { states, cap: MAX_STATES });
    }
    let delta = spec_delta(spec)?;
    let vals = exec.map(mc_trials, |t| -> Result<f64> {
        let inst = Instance::generate(spec, child_seed(seed, t as u64), Exec::Sequential)?;
        Ok(exact_posterior(&inst.y, delta, &spec.prior, Exec::Sequential)?.log_z / spec.n as f64)
    });
    let mut w = Welford::default();
    for v in vals {
        w.push(v?);
    }
    Ok(w.estimate())
}

/// All sorted `(p−1)`-subsets of `0..n` that avoid `i`.
fn other_tuples(n: usize, k: usize, i: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, skip: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..n {
            if j == skip {
                continue;
            }
            cur.push(j);
            rec(j + 1, n, k, skip, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, i, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Leave-one-out contraction by direct enumeration of the tuples through each
/// site, reading entries via [`SymmetricTensor::get`].
pub fn contract_naive(s: &SymmetricTensor, u: &MultiVector, prefactor: f64) -> Result<MultiVector> {
    let (n, p, r) = (s.n(), s.p(), u.r());
    let mut out = MultiVector::zeros(n, r);
    for i in 0..n {
        for others in other_tuples(n, p - 1, i) {
            let mut idx = others.clone();
            idx.push(i);
            let v = s.get(&idx)?;
            for k in 0..r {
                let prod: f64 = others.iter().map(|&j| u.row(j)[k]).product();
                out.row_mut(i)[k] += prefactor * v * prod;
            }
        }
    }
    Ok(out)
}

/// Reference AMP iteration written with explicit loops and no damping.
pub fn amp_step_naive(state: &AmpState, s: &SymmetricTensor, delta: f64, prior: &Prior) -> Result<AmpState> {
    let (n, p, r) = (s.n(), s.p(), state.r());
    let field = contract_naive(s, &state.xhat, spike_prefactor(n, p))?;
    let mut cross = DMatrix::<f64>::zeros(r, r);
    let mut self_ov = DMatrix::<f64>::zeros(r, r);
    let mut sig = DMatrix::<f64>::zeros(r, r);
    for i in 0..n {
        for k in 0..r {
            for l in 0..r {
                cross[(k, l)] += state.xhat.row(i)[k] * state.xhat_prev.row(i)[l] / n as f64;
                self_ov[(k, l)] += state.xhat.row(i)[k] * state.xhat.row(i)[l] / n as f64;
                sig[(k, l)] += state.sigma[i][(k, l)] / n as f64;
            }
        }
    }
    let mut a = DMatrix::zeros(r, r);
    let mut ons = DMatrix::zeros(r, r);
    for k in 0..r {
        for l in 0..r {
            a[(k, l)] = self_ov[(k, l)].powi(p as i32 - 1) / delta;
            ons[(k, l)] = (p as f64 - 1.0) / delta * sig[(k, l)] * cross[(k, l)].powi(p as i32 - 2);
        }
    }
    let mut b = MultiVector::zeros(n, r);
    let mut xhat = MultiVector::zeros(n, r);
    let mut sigma = Vec::with_capacity(n);
    for i in 0..n {
        for k in 0..r {
            let mut corr = 0.0;
            for l in 0..r {
                corr += ons[(k, l)] * state.xhat_prev.row(i)[l];
            }
            b.row_mut(i)[k] = field.row(i)[k] - corr;
        }
        let d = prior.fin(&a, b.row(i))?;
        xhat.row_mut(i).copy_from_slice(&d.mean);
        sigma.push(d.cov);
    }
    Ok(AmpState { xhat, xhat_prev: state.xhat.clone(), sigma, a_mat: a, b_vecs: b, iter: state.iter + 1 })
}

/// Rank-one symmetric low-rank matrix AMP on the dense matrix built from an
/// order-2 tensor: `B = (1/√N) S x̂ − (1/Δ)(1/N Σ σ_j) x̂^{t−1}`,
/// `A = (1/Δ)(1/N)‖x̂‖²`.
pub fn matrix_amp_step(
    xhat: &[f64],
    xhat_prev: &[f64],
    sigma: &[f64],
    s: &SymmetricTensor,
    delta: f64,
    prior: &Prior,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if s.p() != 2 {
        return Err(Error::Precondition("matrix AMP needs an order-2 tensor".into()));
    }
    let n = s.n();
    let mut dense = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                dense[(i, j)] = s.get(&[i, j])?;
            }
        }
    }
    let x = DVector::from_column_slice(xhat);
    let field = dense * &x / (n as f64).sqrt();
    let v = sigma.iter().sum::<f64>() / n as f64;
    let a = x.norm_squared() / n as f64 / delta;
    let mut mean = Vec::with_capacity(n);
    let mut var = Vec::with_capacity(n);
    for i in 0..n {
        let b = field[i] - v / delta * xhat_prev[i];
        let (m, s2) = prior.fin_scalar(a, b)?;
        mean.push(m);
        var.push(s2);
    }
    Ok((mean, var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::colex_rank;

    #[test]
    fn hamiltonian_of_zero_and_of_zero_data() {
        let y = SymmetricTensor::from_data(5, 3, (0..10).map(|v| v as f64 * 0.1).collect()).unwrap();
        assert_eq!(hamiltonian(&[0.0; 5], &y, 0.7).unwrap(), 0.0);
        let zero = SymmetricTensor::zeros(5, 3).unwrap();
        let c2 = 2.0 / 25.0;
        let expect = -(c2 / (2.0 * 0.7)) * 10.0;
        assert!((hamiltonian(&[1.0, -1.0, 1.0, 1.0, -1.0], &zero, 0.7).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn enumeration_matches_brute_force() {
        let spec = ModelSpec::awgn(6, 3, Prior::Bernoulli { rho: 0.3 }, 0.4);
        let inst = Instance::generate(&spec, 9, Exec::Sequential).unwrap();
        let post = exact_posterior(&inst.y, 0.4, &spec.prior, Exec::Parallel).unwrap();
        for idx in 0..post.len() {
            let x = post.config(idx);
            let lp: f64 = x.iter().map(|&v| if v == 1.0 { 0.3f64.ln() } else { 0.7f64.ln() }).sum();
            assert!((post.log_weights[idx] - lp - hamiltonian(&x, &inst.y, 0.4).unwrap()).abs() < 1e-12);
        }
        let three = Prior::Discrete { atoms: vec![-1.0, 0.0, 2.0], weights: vec![0.2, 0.5, 0.3] };
        let post = exact_posterior(&inst.y, 0.4, &three, Exec::Sequential).unwrap();
        assert_eq!(post.len(), 729);
        let x = post.config(500);
        let lw: f64 = x.iter().map(|&v| if v == -1.0 { 0.2f64.ln() } else if v == 0.0 { 0.5f64.ln() } else { 0.3f64.ln() }).sum();
        assert!((post.log_weights[500] - lw - hamiltonian(&x, &inst.y, 0.4).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let y = SymmetricTensor::zeros(3, 3).unwrap();
        assert!(exact_posterior(&y, 1.0, &Prior::Gaussian { mu: 0.0 }, Exec::Sequential).is_err());
        let big = SymmetricTensor::zeros(25, 2).unwrap();
        assert!(matches!(exact_posterior(&big, 1.0, &Prior::Rademacher, Exec::Sequential), Err(Error::Capacity { .. })));
    }

    #[test]
    fn naive_contraction_reads_sorted_entries() {
        let mut s = SymmetricTensor::zeros(4, 3).unwrap();
        s.data_mut()[colex_rank(&[1, 2, 4]).unwrap()] = 2.0;
        let u = MultiVector::from_rows(4, 1, vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let out = contract_naive(&s, &u, 1.0).unwrap();
        assert_eq!(out.data(), &[42.0, 14.0, 0.0, 6.0]);
    }
}
