//! State evolution for the symmetric clusters prior on the `b`-ansatz
//!
//! ```text
//! M(b) = (b/r) I_r + ((1−b)/r²) J_r,   b ∈ [0, 1],
//! ```
//!
//! where `b = 0` is the uninformative point (`M = J/r²`) and `b = 1` perfect
//! recovery (`M = I/r`). Write `m_d = b/r + (1−b)/r²` and `m_o = (1−b)/r²` for
//! the diagonal and off-diagonal entries, `d = m_d^{p−1}/Δ`, `o = m_o^{p−1}/Δ`
//! and `s = d − o`. Then `M̂ = s I + o J` and, with `x₀ = e₁`, the common
//! `o J` part only shifts every component of `B` by the same amount. The
//! problem reduces to the `r`-category channel `s e₁ + √s P Z` with `P` the
//! projector onto `1^⊥`:
//!
//! ```text
//! q(s) = E[softmax₁(s e₁ + √s Z)],      M_r(x) = (r q(x/r) − 1)/(r − 1),
//! b'   = M_r(r s),
//! φ(b) = o − d/2 + E[ln (1/r) Σ_k e^{s δ_k1 + √s (PZ)_k}] − (p−1)/(2pΔ) [r m_d^p + r(r−1) m_o^p].
//! ```
//!
//! The deterministic quadrature ([`ClusterQuad`]) integrates over the `r − 1`
//! coordinates of `PZ` in a Helmert basis of `1^⊥`.

use crate::error::{Error, Result};
use crate::model::prior::log_sum_exp;
use crate::quadrature::{Estimate, GaussHermite, Integrator, Welford};
use crate::rng::{stream_rng, Domain};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Product Gauss–Hermite rule for `PZ`, `Z ~ N(0, I_r)`, expressed in `R^r`.
#[derive(Clone, Debug)]
pub struct ClusterQuad {
    pub r: usize,
    /// Points `u = P Z`, flattened row-major (`r` values per point).
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl ClusterQuad {
    /// `nodes` Gauss–Hermite nodes per dimension of `1^⊥`.
    pub fn new(r: usize, nodes: usize) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidParameter(format!("clusters need r ≥ 2, got {r}")));
        }
        let dims = r - 1;
        let total = (nodes as f64).powi(dims as i32);
        if total > 2.5e6 {
            return Err(Error::Unsupported(format!("{nodes}^{dims} quadrature points; use fewer nodes")));
        }
        let total = total as usize;
        let gh = GaussHermite::get(nodes);
        // Helmert basis: h_j ∝ (1, …, 1, −j, 0, …), j = 1..r−1.
        let basis: Vec<Vec<f64>> = (1..r)
            .map(|j| {
                let norm = ((j * (j + 1)) as f64).sqrt();
                (0..r)
                    .map(|k| match k.cmp(&j) {
                        std::cmp::Ordering::Less => 1.0 / norm,
                        std::cmp::Ordering::Equal => -(j as f64) / norm,
                        std::cmp::Ordering::Greater => 0.0,
                    })
                    .collect()
            })
            .collect();
        let mut points = Vec::with_capacity(total * r);
        let mut weights = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let mut w = 1.0;
            let mut u = vec![0.0; r];
            for h in &basis {
                let j = rem % nodes;
                rem /= nodes;
                w *= gh.weights[j];
                for k in 0..r {
                    u[k] += gh.nodes[j] * h[k];
                }
            }
            points.extend_from_slice(&u);
            weights.push(w);
        }
        Ok(Self { r, points, weights })
    }

    /// Default resolution used by the threshold machinery.
    pub fn default_for(r: usize) -> Result<Self> {
        let nodes = match r {
            2 => 127,
            3 => 80,
            4 => 36,
            5 => 16,
            _ => 8,
        };
        Self::new(r, nodes)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `(q(s), L(s))` with `L(s) = E[ln (1/r) Σ_k exp(s δ_k1 + √s u_k)]`.
    pub fn moments(&self, s: f64) -> (f64, f64) {
        let r = self.r;
        let s = s.max(0.0);
        let ss = s.sqrt();
        let ln_r = (r as f64).ln();
        let mut q = 0.0;
        let mut l = 0.0;
        let mut logits = vec![0.0; r];
        for (u, w) in self.points.chunks_exact(r).zip(&self.weights) {
            for k in 0..r {
                logits[k] = ss * u[k];
            }
            logits[0] += s;
            let lse = log_sum_exp(&logits);
            q += w * (logits[0] - lse).exp();
            l += w * (lse - ln_r);
        }
        (q, l)
    }
}

/// Diagonal / off-diagonal entries of `M(b)`.
pub fn ansatz_entries(b: f64, r: usize) -> (f64, f64) {
    let rf = r as f64;
    (b / rf + (1.0 - b) / (rf * rf), (1.0 - b) / (rf * rf))
}

/// `M(b) = (b/r) I + ((1−b)/r²) J`.
pub fn ansatz_matrix(b: f64, r: usize) -> DMatrix<f64> {
    let (md, mo) = ansatz_entries(b, r);
    DMatrix::from_fn(r, r, |i, j| if i == j { md } else { mo })
}

/// Signal-to-noise `s = (m_d^{p−1} − m_o^{p−1})/Δ` of the reduced channel.
pub fn ansatz_snr(b: f64, delta: f64, p: usize, r: usize) -> f64 {
    let (md, mo) = ansatz_entries(b, r);
    (md.powi(p as i32 - 1) - mo.powi(p as i32 - 1)) / delta
}

/// Cluster overlap function `M_r(x)`.
///
/// With a Gauss–Hermite integrator the value is deterministic (product rule
/// with `nodes` per dimension); with Monte Carlo the standard error is reported.
pub fn cluster_mr(x: f64, r: usize, integ: &Integrator) -> Result<Estimate> {
    if !(x >= 0.0) {
        return Err(Error::InvalidParameter(format!("M_r argument x = {x} must be ≥ 0")));
    }
    if r < 2 {
        return Err(Error::InvalidParameter(format!("clusters need r ≥ 2, got {r}")));
    }
    let rf = r as f64;
    let s = x / rf;
    match integ {
        Integrator::GaussHermite { nodes } => {
            let nodes = (*nodes).min(((2.5e6f64).powf(1.0 / (r as f64 - 1.0))) as usize);
            let (q, _) = ClusterQuad::new(r, nodes)?.moments(s);
            Ok(Estimate::exact((rf * q - 1.0) / (rf - 1.0)))
        }
        Integrator::MonteCarlo { samples, seed } => {
            integ.validate()?;
            let mut rng = stream_rng(*seed, Domain::MonteCarlo);
            let ss = s.sqrt();
            let mut logits = vec![0.0; r];
            let mut stats = Welford::default();
            for _ in 0..*samples {
                for (k, l) in logits.iter_mut().enumerate() {
                    *l = ss * rng.sample::<f64, _>(StandardNormal) + if k == 0 { s } else { 0.0 };
                }
                let q = (logits[0] - log_sum_exp(&logits)).exp();
                stats.push((rf * q - 1.0) / (rf - 1.0));
            }
            let est = stats.estimate();
            if !est.value.is_finite() {
                return Err(Error::Numeric("non-finite M_r estimate".into()));
            }
            Ok(est)
        }
    }
}

/// Monte Carlo `M_r` at two arguments with shared draws; returns both
/// values and the estimate of their difference.
fn mr_pair_mc(x1: f64, x2: f64, r: usize, samples: usize, seed: u64) -> (f64, f64, Estimate) {
    let rf = r as f64;
    let (s1, s2) = (x1 / rf, x2 / rf);
    let (r1, r2) = (s1.sqrt(), s2.sqrt());
    let mut rng = stream_rng(seed, Domain::MonteCarlo);
    let mut z = vec![0.0; r];
    let (mut l1, mut l2) = (vec![0.0; r], vec![0.0; r]);
    let (mut a, mut b, mut d) = (Welford::default(), Welford::default(), Welford::default());
    for _ in 0..samples {
        for zk in z.iter_mut() {
            *zk = rng.sample(StandardNormal);
        }
        for k in 0..r {
            l1[k] = r1 * z[k];
            l2[k] = r2 * z[k];
        }
        l1[0] += s1;
        l2[0] += s2;
        let m1 = (rf * (l1[0] - log_sum_exp(&l1)).exp() - 1.0) / (rf - 1.0);
        let m2 = (rf * (l2[0] - log_sum_exp(&l2)).exp() - 1.0) / (rf - 1.0);
        a.push(m1);
        b.push(m2);
        d.push(m1 - m2);
    }
    (a.estimate().value, b.estimate().value, d.estimate())
}

/// One step of the `b` recursion: `b' = M_r(r s(b))`.
pub fn cluster_se_step(b: f64, delta: f64, p: usize, r: usize, integ: &Integrator) -> Result<Estimate> {
    if !(0.0..=1.0).contains(&b) {
        return Err(Error::InvalidParameter(format!("b = {b} outside [0, 1]")));
    }
    cluster_mr(r as f64 * ansatz_snr(b, delta, p, r), r, integ)
}

/// `Δ` at which `m` is a fixed point given `M_r` argument `x`.
fn curve_delta(m: f64, x: f64, p: usize, r: usize) -> f64 {
    let rf = r as f64;
    let (md, mo) = (m / rf + (1.0 - m) / (rf * rf), (1.0 - m) / (rf * rf));
    rf * (md.powi(p as i32 - 1) - mo.powi(p as i32 - 1)) / x
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    /// Monte Carlo noise makes the sign of `dΔ/dx` ambiguous.
    Indeterminate,
}

/// A point `(m(x), Δ(x))` on the curve of fixed points of the `b` recursion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub m: f64,
    pub delta: f64,
    pub stability: Stability,
}

/// Parametric fixed-point curve `m = M_r(x)`, `Δ = r[m_d^{p−1} − m_o^{p−1}]/x`,
/// stable where `dΔ/dx < 0` (central difference, relative step 10⁻³).
pub fn cluster_parametric_curve(x: f64, p: usize, r: usize, integ: &Integrator) -> Result<CurvePoint> {
    if !(x > 0.0) {
        return Err(Error::InvalidParameter(format!("curve parameter x = {x} must be > 0")));
    }
    let m = cluster_mr(x, r, integ)?;
    let delta = curve_delta(m.value, x, p, r);
    let h = 1e-3 * x;
    let slope_at = |mp: f64, mm: f64| (curve_delta(mp, x + h, p, r) - curve_delta(mm, x - h, p, r)) / (2.0 * h);
    let stability = match integ {
        Integrator::GaussHermite { .. } => {
            let slope = slope_at(cluster_mr(x + h, r, integ)?.value, cluster_mr(x - h, r, integ)?.value);
            if slope < 0.0 {
                Stability::Stable
            } else {
                Stability::Unstable
            }
        }
        Integrator::MonteCarlo { samples, seed } => {
            // Common random numbers at x ± h; the noise of the slope is that
            // of the paired difference propagated through ∂Δ/∂m.
            let (mp, mm, diff) = mr_pair_mc(x + h, x - h, r, *samples, *seed);
            let slope = slope_at(mp, mm);
            let eps = 1e-6 * m.value.abs().max(1e-9);
            let ddm = (curve_delta(m.value + eps, x, p, r) - curve_delta(m.value - eps, x, p, r)) / (2.0 * eps);
            let noise = 3.0 * ddm.abs() * diff.stderr / (2.0 * h);
            if slope.abs() <= noise {
                Stability::Indeterminate
            } else if slope < 0.0 {
                Stability::Stable
            } else {
                Stability::Unstable
            }
        }
    };
    Ok(CurvePoint { x, m: m.value, delta, stability })
}

/// Replica potential on the `b`-line.
pub fn cluster_phi(b: f64, delta: f64, p: usize, quad: &ClusterQuad) -> f64 {
    let r = quad.r;
    let rf = r as f64;
    let (md, mo) = ansatz_entries(b, r);
    let d = md.powi(p as i32 - 1) / delta;
    let o = mo.powi(p as i32 - 1) / delta;
    let (_, l) = quad.moments(d - o);
    let penalty = (p as f64 - 1.0) / (2.0 * p as f64 * delta)
        * (rf * md.powi(p as i32) + rf * (rf - 1.0) * mo.powi(p as i32));
    o - d / 2.0 + l - penalty
}

/// Deterministic `b` recursion with a prebuilt quadrature.
pub fn cluster_step_quad(b: f64, delta: f64, p: usize, quad: &ClusterQuad) -> f64 {
    let rf = quad.r as f64;
    let (q, _) = quad.moments(ansatz_snr(b, delta, p, quad.r));
    ((rf * q - 1.0) / (rf - 1.0)).clamp(0.0, 1.0)
}

/// Slope `dΔ/dx` at `x = 0` of the parametric curve: `(p−1)(pr − 2p − r)/(2 r^{2p})`.
pub fn curve_slope_at_origin(p: usize, r: usize) -> f64 {
    let (pf, rf) = (p as f64, r as f64);
    (pf - 1.0) / (2.0 * rf.powi(2 * p as i32)) * (-2.0 * pf - rf + pf * rf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_is_normalized_and_centered() {
        let q = ClusterQuad::new(3, 20).unwrap();
        let (q0, l0) = q.moments(0.0);
        assert!((q0 - 1.0 / 3.0).abs() < 1e-14);
        assert!(l0.abs() < 1e-14);
    }

    #[test]
    fn mr_limits() {
        let gh = Integrator::GaussHermite { nodes: 60 };
        assert!(cluster_mr(0.0, 3, &gh).unwrap().value.abs() < 1e-14);
        assert!((cluster_mr(400.0, 3, &gh).unwrap().value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mr_taylor_deterministic() {
        let gh = Integrator::GaussHermite { nodes: 60 };
        for r in [2usize, 3, 4] {
            let rf = r as f64;
            for x in [1e-3, 2e-3] {
                let taylor = x / (rf * rf) + x * x * (rf - 4.0) / (2.0 * rf.powi(4));
                let got = cluster_mr(x, r, &gh).unwrap().value;
                assert!((got - taylor).abs() < 5.0 * x.powi(3), "r={r} x={x}: {got} vs {taylor}");
            }
        }
    }

    #[test]
    fn b_zero_is_fixed() {
        let gh = Integrator::GaussHermite { nodes: 40 };
        assert!(cluster_se_step(0.0, 0.01, 3, 3, &gh).unwrap().value.abs() < 1e-14);
    }

    #[test]
    fn linear_growth_near_zero() {
        let gh = Integrator::GaussHermite { nodes: 60 };
        let (p, r, delta, b) = (3usize, 3usize, 0.05, 1e-5);
        let expect = b * (p as f64 - 1.0) / (delta * (r as f64).powi(2 * p as i32 - 2));
        let got = cluster_se_step(b, delta, p, r, &gh).unwrap().value;
        assert!((got / expect - 1.0).abs() < 1e-3, "{got} vs {expect}");
    }

    #[test]
    fn parametric_curve_is_fixed_point() {
        let gh = Integrator::GaussHermite { nodes: 60 };
        for x in [0.5, 2.0, 8.0] {
            let c = cluster_parametric_curve(x, 3, 3, &gh).unwrap();
            let b = cluster_se_step(c.m, c.delta, 3, 3, &gh).unwrap().value;
            assert!((b - c.m).abs() < 1e-10);
        }
    }

    #[test]
    fn slope_at_origin() {
        let gh = Integrator::GaussHermite { nodes: 80 };
        for (p, r) in [(3usize, 2usize), (3, 3), (4, 3)] {
            let x = 1e-3;
            let (c1, c2) = (
                cluster_parametric_curve(x, p, r, &gh).unwrap(),
                cluster_parametric_curve(2.0 * x, p, r, &gh).unwrap(),
            );
            let d0 = (p as f64 - 1.0) / (r as f64).powi(2 * p as i32 - 2);
            // Δ(x) ≈ Δ_c + slope·x: use a two-point fit.
            let slope = (c2.delta - c1.delta) / x;
            let s0 = curve_slope_at_origin(p, r);
            assert!((c1.delta - d0 - s0 * x).abs() < 1e-2 * d0, "p={p} r={r}");
            assert!((slope - s0).abs() < 0.05 * s0.abs().max(1e-3 * d0 / x), "p={p} r={r}: {slope} vs {s0}");
        }
        assert!(cluster_parametric_curve(0.01, 3, 2, &gh).unwrap().stability == Stability::Stable);
    }
}
