//! Replica-symmetric potential and the information-theoretic quantities
//! derived from its maximizer.
//!
//! ```text
//! φ_RS(M) = E[ln Z_X(M̂, M̂x₀ + M̂^{1/2} Z)] − (p−1)/(2pΔ) Σ_{kk'} M_{kk'}^p,   M̂ = M^{∘(p−1)}/Δ
//! I/N     → (1/(2pΔ)) Σ_{kk'} (Σ_X)_{kk'}^p − sup φ_RS
//! MMSE    = Tr[Σ_X − M*],   T-MMSE = Σ_X^p − m*^p (rank one)
//! ```

use crate::error::{Error, Result};
use crate::model::Prior;
use crate::par::Exec;
use crate::quadrature::Integrator;
use crate::state_evolution::{mean_log_partition, LineModel, OverlapMatrix, SeInit};
use serde::Serialize;

/// Points of the dense grid scanned before refinement.
pub const PHI_GRID_POINTS: usize = 1000;
/// Maximizers whose potentials differ by less than this are ties.
pub const TIE_TOL: f64 = 1e-12;

/// `φ_RS(M)` for any prior (matrix form).
pub fn phi_rs(m: &OverlapMatrix, delta: f64, p: usize, prior: &Prior, integ: &Integrator) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("noise Δ = {delta} must be positive")));
    }
    let r = prior.rank();
    if m.r() != r {
        return Err(Error::Shape(format!("overlap has rank {}, prior {r}", m.r())));
    }
    let pf = p as f64;
    let penalty = (pf - 1.0) / (2.0 * pf * delta) * m.hadamard_pow(p).sum();
    let m_hat = m.hadamard_pow(p - 1) / delta;
    if r == 1 {
        let y = m_hat[(0, 0)];
        let sy = y.max(0.0).sqrt();
        // Generic quadrature (Gaussian priors included) for this entry point.
        let e = integ.expect_scalar(prior, |x0, z| prior.log_zx_scalar(y, y * x0 + sy * z).unwrap_or(f64::NAN))?;
        return Ok(e.value - penalty);
    }
    let root = OverlapMatrix::psd_sqrt(&m_hat);
    let est = integ.expect_vector(prior, 1, |x0, z, out| {
        let b: Vec<f64> = (0..r)
            .map(|k| (0..r).map(|l| m_hat[(k, l)] * x0[l] + root[(k, l)] * z[l]).sum())
            .collect();
        out[0] = prior.log_zx(&m_hat, &b).unwrap_or(f64::NAN);
    })?;
    Ok(est[0].value - penalty)
}

/// Rank-one `φ_RS(m)` (Gaussian priors in closed form).
pub fn phi_rs_scalar(m: f64, delta: f64, p: usize, prior: &Prior, integ: &Integrator) -> Result<f64> {
    let pf = p as f64;
    let y = m.max(0.0).powi(p as i32 - 1) / delta;
    Ok(mean_log_partition(y, prior, integ)?.value - (pf - 1.0) / (2.0 * pf * delta) * m.max(0.0).powi(p as i32))
}

/// Result of maximizing `φ_RS` at one noise level.
#[derive(Clone, Debug, Serialize)]
pub struct FreeEnergyCurve {
    pub delta: f64,
    /// `(t, φ(t))` on the scan grid (`t = m` for rank one, `t = b` for clusters).
    pub grid: Vec<(f64, f64)>,
    pub t_star: f64,
    /// `Tr M*`.
    pub trace_star: f64,
    pub phi_star: f64,
    /// SE fixed points (eps, informative) used as extra candidates.
    pub candidate_fixed_points: Vec<f64>,
    /// Clusters results are restricted to the `b`-ansatz.
    pub ansatz_restricted: bool,
}

fn golden_max(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let inv = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv * (b - a);
    let mut d = a + inv * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

/// Maximizes `φ_RS` on a line model: dense grid, golden-section refinement of
/// the best cell, plus the two SE fixed points as candidates.
pub fn maximize_on_line(model: &LineModel, delta: f64, grid_points: usize, exec: Exec) -> Result<FreeEnergyCurve> {
    let (_, hi) = model.bounds();
    // Rank-one scans start at 0 even for nonzero-mean priors.
    let top = if model.is_clusters() { hi } else { hi * (1.0 + 1e-6) };
    let n = grid_points.max(3);
    let ts: Vec<f64> = (0..n).map(|i| top * i as f64 / (n - 1) as f64).collect();
    let vals = exec.map(n, |i| model.phi(ts[i], delta));
    let mut grid = Vec::with_capacity(n);
    for (t, v) in ts.iter().zip(vals) {
        grid.push((*t, v?));
    }
    let mut best = 0;
    for (i, (_, v)) in grid.iter().enumerate() {
        if *v >= grid[best].1 - TIE_TOL {
            best = i;
        }
    }
    let f = |t: f64| model.phi(t, delta);
    let lo_cell = grid[best.saturating_sub(1)].0;
    let hi_cell = grid[(best + 1).min(n - 1)].0;
    // Stationary points from SE compete with the larger-t tie rule; raw
    // grid/golden points only win when strictly better, so that flat
    // neighbourhoods of a maximum cannot drag the maximizer away from it.
    let mut fixed = Vec::new();
    let mut stationary = Vec::new();
    for init in [SeInit::Eps, SeInit::Informative] {
        let fp = model.fixed_point(delta, init)?;
        fixed.push(fp.t);
        stationary.push((fp.t, f(fp.t)?));
    }
    let (mut t_star, mut phi_star) = stationary[0];
    for &(t, v) in &stationary[1..] {
        if v > phi_star + TIE_TOL || ((v - phi_star).abs() <= TIE_TOL && t > t_star) {
            t_star = t;
            phi_star = v;
        }
    }
    for (t, v) in [grid[best], golden_max(&f, lo_cell, hi_cell, 1e-10 * top)?] {
        if v > phi_star + TIE_TOL {
            t_star = t;
            phi_star = v;
        }
    }
    Ok(FreeEnergyCurve {
        delta,
        grid,
        t_star,
        trace_star: model.trace(t_star),
        phi_star,
        candidate_fixed_points: fixed,
        ansatz_restricted: model.is_clusters(),
    })
}

/// `sup φ_RS` and its maximizer (see [`maximize_on_line`]).
pub fn maximize_phi_rs(delta: f64, p: usize, prior: &Prior, integ: &Integrator) -> Result<FreeEnergyCurve> {
    let model = LineModel::new(prior, p, integ)?;
    maximize_on_line(&model, delta, PHI_GRID_POINTS, Exec::Parallel)
}

/// `Σ_{kk'} (Σ_X)_{kk'}^p`.
pub fn sigma_x_power_sum(prior: &Prior, p: usize) -> f64 {
    prior.moments().sigma_x.map(|v| v.powi(p as i32)).sum()
}

/// Asymptotic mutual information per variable.
pub fn mutual_information(delta: f64, p: usize, prior: &Prior, integ: &Integrator) -> Result<f64> {
    let curve = maximize_phi_rs(delta, p, prior, integ)?;
    Ok(sigma_x_power_sum(prior, p) / (2.0 * p as f64 * delta) - curve.phi_star)
}

/// `Tr[Σ_X − M*]`.
pub fn mmse(delta: f64, p: usize, prior: &Prior, integ: &Integrator) -> Result<f64> {
    let curve = maximize_phi_rs(delta, p, prior, integ)?;
    Ok(prior.moments().sigma_x.trace() - curve.trace_star)
}

/// Caveat attached to an MMSE value, if any.
pub fn mmse_label(p: usize, prior: &Prior) -> Option<&'static str> {
    if prior.rank() > 1 {
        Some("ansatz-restricted")
    } else if p % 2 == 0 {
        Some("conjectural (sign symmetry)")
    } else {
        None
    }
}

/// Tensor MMSE `Σ_X^p − m*^p` (rank one only).
pub fn t_mmse(delta: f64, p: usize, prior: &Prior, integ: &Integrator) -> Result<f64> {
    if prior.rank() != 1 {
        return Err(Error::Unsupported("the tensor MMSE is defined for rank-one priors".into()));
    }
    let curve = maximize_phi_rs(delta, p, prior, integ)?;
    let sx = prior.scalar_moments().1;
    Ok(sx.powi(p as i32) - curve.t_star.powi(p as i32))
}

/// Outcome of the I-MMSE / convexity check on a grid of noise levels.
#[derive(Clone, Debug, Serialize)]
pub struct ImmseReport {
    /// `(Δ, numeric dF/dλ, m*^p/(2p), relative violation)` at smooth points.
    pub points: Vec<(f64, f64, f64, f64)>,
    pub max_rel_violation: f64,
    /// Smallest slope increment of `F_RS(λ)` between consecutive grid points.
    pub min_second_difference: f64,
    /// Noise levels where `m*` jumps within the difference stencil.
    pub kinks: Vec<f64>,
}

/// Checks `d sup φ_RS / dλ = (Σ_X^p − T-MMSE)/(2p)` (λ = 1/Δ) by central
/// differences and the convexity of `F_RS(λ)`.
pub fn imms_consistency(delta_grid: &[f64], p: usize, prior: &Prior) -> Result<ImmseReport> {
    if delta_grid.len() < 20 {
        return Err(Error::InvalidParameter("the I-MMSE check needs at least 20 noise levels".into()));
    }
    if prior.rank() != 1 {
        return Err(Error::Unsupported("I-MMSE check is implemented for rank-one priors".into()));
    }
    let model = LineModel::new(prior, p, &Integrator::default())?;
    let sx = prior.scalar_moments().1;
    let pf = p as f64;
    let sup = |lambda: f64| maximize_on_line(&model, 1.0 / lambda, PHI_GRID_POINTS, Exec::Parallel);
    let mut lambdas: Vec<f64> = delta_grid.iter().map(|d| 1.0 / d).collect();
    lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut points = Vec::new();
    let mut kinks = Vec::new();
    let mut f_vals = Vec::with_capacity(lambdas.len());
    let mut max_rel: f64 = 0.0;
    for &lambda in &lambdas {
        let h = 1e-4 * lambda;
        let (c, plus, minus) = (sup(lambda)?, sup(lambda + h)?, sup(lambda - h)?);
        f_vals.push(c.phi_star);
        let jump = (plus.t_star.powi(p as i32) - minus.t_star.powi(p as i32)).abs();
        if jump > 1e-3 * sx.powi(p as i32) {
            kinks.push(1.0 / lambda);
            continue;
        }
        let numeric = (plus.phi_star - minus.phi_star) / (2.0 * h);
        let analytic = c.t_star.powi(p as i32) / (2.0 * pf);
        let rel = (numeric - analytic).abs() / analytic.abs().max(1e-6 * sx.powi(p as i32));
        max_rel = max_rel.max(rel);
        points.push((1.0 / lambda, numeric, analytic, rel));
    }
    let mut min_second = f64::INFINITY;
    for i in 1..lambdas.len().saturating_sub(1) {
        let s1 = (f_vals[i] - f_vals[i - 1]) / (lambdas[i] - lambdas[i - 1]);
        let s2 = (f_vals[i + 1] - f_vals[i]) / (lambdas[i + 1] - lambdas[i]);
        min_second = min_second.min(s2 - s1);
    }
    Ok(ImmseReport { points, max_rel_violation: max_rel, min_second_difference: min_second, kinks })
}
