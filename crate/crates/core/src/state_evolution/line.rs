//! One-dimensional reductions of state evolution and a robust fixed-point locator.
//!
//! Near a spinodal, plain iteration of a monotone map slows down without
//! bound (the iterate crawls through the "ghost" of the vanished fixed
//! point). Threshold bisections sit exactly there, so the locator switches
//! from iteration to a marching search for the first zero of
//! `G(t) = F(t) − t` in the direction of motion. For a monotone map this is
//! the same fixed point iteration would converge to: iterates never cross a
//! fixed point.

use super::cluster::{ansatz_entries, cluster_phi, cluster_step_quad, ClusterQuad};
use super::{mean_log_partition, overlap_function, SeInit};
use crate::error::{Error, Result};
use crate::model::Prior;
use crate::quadrature::Integrator;
use std::sync::Arc;

/// Plain iterations before switching to the marching search.
const PLAIN_ITERS: usize = 200;
/// Relative fixed-point accuracy.
const FP_RTOL: f64 = 1e-13;

/// A scalar order parameter `t` whose SE map and replica potential are known.
#[derive(Clone, Debug)]
pub enum LineModel {
    /// Rank-one prior, `t = m`.
    Scalar { prior: Prior, p: usize, integ: Integrator },
    /// Clusters prior on the `b`-ansatz, `t = b`.
    Clusters { p: usize, quad: Arc<ClusterQuad> },
}

/// A located fixed point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPoint {
    pub t: f64,
    /// Trace of the corresponding overlap matrix.
    pub trace: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LineModel {
    /// Scalar model for rank-one priors (must use a deterministic integrator),
    /// `b`-line with the default quadrature for clusters.
    pub fn new(prior: &Prior, p: usize, integ: &Integrator) -> Result<Self> {
        prior.validate()?;
        if p < 2 {
            return Err(Error::InvalidParameter(format!("order p = {p} must be ≥ 2")));
        }
        match prior {
            Prior::Clusters { r } => Ok(LineModel::Clusters { p, quad: Arc::new(ClusterQuad::default_for(*r)?) }),
            _ => {
                if !integ.is_deterministic() {
                    return Err(Error::Unsupported(
                        "threshold computations need a deterministic integrator".into(),
                    ));
                }
                Ok(LineModel::Scalar { prior: prior.clone(), p, integ: integ.clone() })
            }
        }
    }

    pub fn with_cluster_quad(p: usize, quad: ClusterQuad) -> Self {
        LineModel::Clusters { p, quad: Arc::new(quad) }
    }

    pub fn p(&self) -> usize {
        match self {
            LineModel::Scalar { p, .. } | LineModel::Clusters { p, .. } => *p,
        }
    }

    pub fn is_clusters(&self) -> bool {
        matches!(self, LineModel::Clusters { .. })
    }

    /// Domain `[lo, hi]` of `t` that the SE map preserves.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            LineModel::Scalar { prior, .. } => {
                let (mean, sx) = prior.scalar_moments();
                (mean * mean, sx)
            }
            LineModel::Clusters { .. } => (0.0, 1.0),
        }
    }

    /// Value of `t` at `Δ = ∞` (random guessing).
    pub fn baseline(&self) -> f64 {
        self.bounds().0
    }

    /// `Tr Σ_X`.
    pub fn sigma_trace(&self) -> f64 {
        match self {
            LineModel::Scalar { prior, .. } => prior.scalar_moments().1,
            LineModel::Clusters { .. } => 1.0,
        }
    }

    /// `Tr M(t)`.
    pub fn trace(&self, t: f64) -> f64 {
        match self {
            LineModel::Scalar { .. } => t,
            LineModel::Clusters { quad, .. } => {
                let (md, _) = ansatz_entries(t, quad.r);
                quad.r as f64 * md
            }
        }
    }

    /// Initial condition for an SE initialization.
    pub fn start(&self, init: SeInit) -> f64 {
        let (lo, hi) = self.bounds();
        match (init, self) {
            (SeInit::Informative, _) => hi,
            (SeInit::Eps, LineModel::Scalar { .. }) => lo + 1e-8 * self.sigma_trace(),
            (SeInit::Eps, LineModel::Clusters { .. }) => 1e-8,
        }
    }

    /// Whether the baseline is a fixed point for every `Δ` (zero-mean scalar
    /// priors and the clusters `b = 0` point).
    pub fn baseline_is_fixed(&self) -> bool {
        match self {
            LineModel::Scalar { prior, .. } => prior.scalar_moments().0 == 0.0,
            LineModel::Clusters { .. } => true,
        }
    }

    /// Scalar zero-mean priors with `p ≥ 3`: the map is `O(t^{p-1})` around
    /// the fixed baseline, so it is stable for every `Δ > 0`.
    pub fn linearization_vanishes(&self) -> bool {
        matches!(self, LineModel::Scalar { .. }) && self.p() >= 3 && self.baseline_is_fixed()
    }

    /// SE map on `t`.
    pub fn step(&self, t: f64, delta: f64) -> Result<f64> {
        match self {
            LineModel::Scalar { prior, p, integ } => {
                let y = t.max(0.0).powi(*p as i32 - 1) / delta;
                Ok(overlap_function(y, prior, integ)?.value)
            }
            LineModel::Clusters { p, quad } => Ok(cluster_step_quad(t.clamp(0.0, 1.0), delta, *p, quad)),
        }
    }

    /// Replica potential `φ_RS` on the line.
    pub fn phi(&self, t: f64, delta: f64) -> Result<f64> {
        match self {
            LineModel::Scalar { prior, p, integ } => {
                let t = t.max(0.0);
                let y = t.powi(*p as i32 - 1) / delta;
                let pf = *p as f64;
                Ok(mean_log_partition(y, prior, integ)?.value - (pf - 1.0) / (2.0 * pf * delta) * t.powi(*p as i32))
            }
            LineModel::Clusters { p, quad } => Ok(cluster_phi(t.clamp(0.0, 1.0), delta, *p, quad)),
        }
    }

    /// `dφ/dt` by a central difference (independent of the SE map).
    pub fn dphi_numeric(&self, t: f64, delta: f64) -> Result<f64> {
        let (lo, hi) = self.bounds();
        let h = 1e-5 * (hi - lo).max(1e-300);
        let a = (t - h).max(0.0);
        let b = t + h;
        Ok((self.phi(b, delta)? - self.phi(a, delta)?) / (b - a))
    }

    /// Fixed point reached by SE from `init`.
    pub fn fixed_point(&self, delta: f64, init: SeInit) -> Result<FixedPoint> {
        self.fixed_point_from(delta, self.start(init))
    }

    /// Fixed point reached by SE from `t0` (see module docs).
    pub fn fixed_point_from(&self, delta: f64, t0: f64) -> Result<FixedPoint> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!("noise Δ = {delta} must be positive")));
        }
        let (lo, hi) = self.bounds();
        let scale = hi - lo;
        let tol = FP_RTOL * scale;
        let done = |t: f64, iterations: usize| FixedPoint { t, trace: self.trace(t), iterations, converged: true };
        let mut t = t0.clamp(lo, hi);
        for it in 0..PLAIN_ITERS {
            let f = self.step(t, delta)?;
            if !f.is_finite() {
                return Err(Error::Numeric(format!("SE map returned {f} at t = {t}")));
            }
            if (f - t).abs() <= tol {
                return Ok(done(f, it + 1));
            }
            t = f.clamp(lo, hi);
        }
        let g = |t: f64| -> Result<f64> { Ok(self.step(t, delta)? - t) };
        let mut gt = g(t)?;
        let mut evals = PLAIN_ITERS + 1;
        if gt.abs() <= tol {
            return Ok(done(t, evals));
        }
        let dir = gt.signum();
        let mut hmin = 1e-7 * scale;
        let hmax = 1e-4 * scale;
        for _ in 0..2_000_000 {
            let tn = (t + dir * gt.abs().max(hmin)).clamp(lo, hi);
            let gn = g(tn)?;
            evals += 1;
            if gn == 0.0 || gn.abs() <= tol {
                return Ok(done(tn, evals));
            }
            if gn.signum() != dir {
                // Bracketed: bisect [t, tn].
                let (mut a, mut b) = (t, tn);
                while (b - a).abs() > tol {
                    let mid = 0.5 * (a + b);
                    let gm = g(mid)?;
                    evals += 1;
                    if gm == 0.0 {
                        return Ok(done(mid, evals));
                    }
                    if gm.signum() == dir {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                return Ok(done(0.5 * (a + b), evals));
            }
            if tn == lo || tn == hi {
                // Pinned at the boundary of the invariant domain.
                return Ok(done(tn, evals));
            }
            if gn.abs() < hmin {
                hmin = (hmin * 1.5).min(hmax);
            }
            t = tn;
            gt = gn;
        }
        Ok(FixedPoint { t, trace: self.trace(t), iterations: evals, converged: false })
    }

    /// Linear growth factor of the SE map at the baseline, along the line,
    /// by a Richardson-extrapolated forward difference.
    pub fn growth_factor(&self, delta: f64) -> Result<f64> {
        if self.linearization_vanishes() {
            return Ok(0.0);
        }
        let base = self.baseline();
        let h = 1e-4 * (self.bounds().1 - base);
        let d1 = (self.step(base + h, delta)? - base) / h;
        let d2 = (self.step(base + h / 2.0, delta)? - base) / (h / 2.0);
        Ok(2.0 * d2 - d1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locator_matches_plain_iteration_away_from_spinodal() {
        let model = LineModel::new(&Prior::Rademacher, 3, &Integrator::default()).unwrap();
        let fp = model.fixed_point(0.2, SeInit::Informative).unwrap();
        let mut m = 1.0;
        for _ in 0..5000 {
            m = model.step(m, 0.2).unwrap();
        }
        assert!((fp.t - m).abs() < 1e-11);
        assert!(model.fixed_point(0.2, SeInit::Eps).unwrap().t < 1e-12);
    }

    #[test]
    fn locator_handles_critical_slowing() {
        // Gaussian μ = 0.2, p = 3 just above the eps-branch spinodal: the
        // iterate crawls through a bottleneck before jumping.
        let model = LineModel::new(&Prior::Gaussian { mu: 0.2 }, 3, &Integrator::default()).unwrap();
        let fp = model.fixed_point(0.15330, SeInit::Eps).unwrap();
        let target = model.fixed_point(0.15330, SeInit::Informative).unwrap();
        assert!(fp.converged && (fp.t - target.t).abs() < 1e-10);
        let low = model.fixed_point(0.15340, SeInit::Eps).unwrap();
        assert!(low.t < 0.2);
    }

    #[test]
    fn growth_factor_p2() {
        let model = LineModel::new(&Prior::Rademacher, 2, &Integrator::default()).unwrap();
        assert!((model.growth_factor(0.5).unwrap() - 2.0).abs() < 1e-6);
    }
}
