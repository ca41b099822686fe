//! State evolution: the deterministic recursion on the `r×r` overlap
//!
//! ```text
//! M̂ᵗ = (Mᵗ)^{∘(p−1)} / Δ,
//! Mᵗ⁺¹ = E_{Z,x₀}[ f_in(M̂ᵗ, M̂ᵗ x₀ + (M̂ᵗ)^{1/2} Z) x₀ᵀ ].
//! ```
//!
//! [`se_step`] is the general matrix recursion. Threshold computations work on
//! one-dimensional reductions ([`LineModel`]): the scalar overlap for rank-one
//! priors and the `b`-line `M(b) = (b/r) I + ((1−b)/r²) J` for clusters.

pub mod cluster;
pub mod line;

pub use cluster::{
    ansatz_matrix, cluster_mr, cluster_parametric_curve, cluster_se_step, ClusterQuad, CurvePoint, Stability,
};
pub use line::{FixedPoint, LineModel};

use crate::error::{Error, Result};
use crate::model::Prior;
use crate::quadrature::{Estimate, Integrator};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Default fixed-point tolerance (max-abs entry change).
pub const SE_TOL: f64 = 1e-10;
/// Default iteration cap.
pub const SE_MAX_ITER: usize = 10_000;

/// Symmetric PSD `r×r` overlap matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapMatrix(pub DMatrix<f64>);

impl OverlapMatrix {
    pub fn scalar(m: f64) -> Self {
        Self(DMatrix::from_element(1, 1, m))
    }

    pub fn r(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `(M + Mᵀ)/2`.
    pub fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        Self((m + t) * 0.5)
    }

    /// Entrywise power `M^{∘k}`.
    pub fn hadamard_pow(&self, k: usize) -> DMatrix<f64> {
        self.0.map(|v| v.powi(k as i32))
    }

    /// Symmetric square root with negative eigenvalues clipped to zero.
    pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
        if m.nrows() == 1 {
            return DMatrix::from_element(1, 1, m[(0, 0)].max(0.0).sqrt());
        }
        let sym = (m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
    }

    /// Largest entrywise difference.
    pub fn max_abs_diff(&self, other: &OverlapMatrix) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// SE order parameters at one iteration.
#[derive(Clone, Debug)]
pub struct SeState {
    pub m: OverlapMatrix,
    pub m_hat: DMatrix<f64>,
    pub iter: usize,
}

/// Which initialization a fixed point was reached from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeInit {
    /// `mean·meanᵀ + 10⁻⁸ Σ_X`: the "infinitesimally informative" start.
    Eps,
    /// `Σ_X`: start at the truth.
    Informative,
}

#[derive(Clone, Debug)]
pub struct SeFixedPoint {
    pub m_star: OverlapMatrix,
    pub init_used: SeInit,
    /// `Tr[Σ_X − M*]`.
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Full trajectory `M⁰, M¹, …`.
    pub trajectory: Vec<OverlapMatrix>,
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("noise Δ = {delta} must be positive and finite")))
    }
}

/// `E[f_in(y, y x₀ + √y Z) x₀]`, the rank-one overlap function `g(y)`.
/// Gaussian priors use the exact closed form `((1+μ²) y + μ²)/(1 + y)`.
pub fn overlap_function(y: f64, prior: &Prior, integ: &Integrator) -> Result<Estimate> {
    let y = y.max(0.0);
    if let (Prior::Gaussian { mu }, true) = (prior, integ.is_deterministic()) {
        return Ok(Estimate::exact(((1.0 + mu * mu) * y + mu * mu) / (1.0 + y)));
    }
    let sy = y.sqrt();
    integ.expect_scalar(prior, |x0, z| prior.fin_scalar(y, y * x0 + sy * z).map(|(m, _)| m * x0).unwrap_or(f64::NAN))
}

/// `E[ln Z_X(y, y x₀ + √y Z)]` for rank-one priors (Gaussian in closed form:
/// `−½ ln(1+y) + (1+μ²) y / 2`).
pub fn mean_log_partition(y: f64, prior: &Prior, integ: &Integrator) -> Result<Estimate> {
    let y = y.max(0.0);
    if let (Prior::Gaussian { mu }, true) = (prior, integ.is_deterministic()) {
        return Ok(Estimate::exact(-0.5 * y.ln_1p() + (1.0 + mu * mu) * y / 2.0));
    }
    let sy = y.sqrt();
    integ.expect_scalar(prior, |x0, z| prior.log_zx_scalar(y, y * x0 + sy * z).unwrap_or(f64::NAN))
}

/// One SE step on the full overlap matrix.
pub fn se_step(m: &OverlapMatrix, delta: f64, p: usize, prior: &Prior, integ: &Integrator) -> Result<OverlapMatrix> {
    check_delta(delta)?;
    let r = prior.rank();
    if m.r() != r {
        return Err(Error::Shape(format!("overlap is {}×{}, prior has rank {r}", m.r(), m.r())));
    }
    let m_hat = m.hadamard_pow(p - 1) / delta;
    if r == 1 {
        let y = m_hat[(0, 0)].max(0.0);
        let sy = y.sqrt();
        // Generic quadrature path (no closed-form shortcut), so it can be
        // checked against `se_gaussian_step`.
        let e = integ.expect_scalar(prior, |x0, z| {
            prior.fin_scalar(y, y * x0 + sy * z).map(|(f, _)| f * x0).unwrap_or(f64::NAN)
        })?;
        return Ok(OverlapMatrix::scalar(e.value));
    }
    let root = OverlapMatrix::psd_sqrt(&m_hat);
    let est = integ.expect_vector(prior, r * r, |x0, z, out| {
        let mut b = vec![0.0; r];
        for k in 0..r {
            b[k] = (0..r).map(|l| m_hat[(k, l)] * x0[l] + root[(k, l)] * z[l]).sum();
        }
        match prior.fin(&m_hat, &b) {
            Ok(d) => {
                for k in 0..r {
                    for l in 0..r {
                        out[k * r + l] = d.mean[k] * x0[l];
                    }
                }
            }
            Err(_) => out.iter_mut().for_each(|v| *v = f64::NAN),
        }
    })?;
    let mat = DMatrix::from_row_iterator(r, r, est.iter().map(|e| e.value));
    Ok(OverlapMatrix::symmetrized(mat))
}

/// Same as [`se_step`] but also returns per-entry Monte Carlo standard errors.
pub fn se_step_with_errors(
    m: &OverlapMatrix,
    delta: f64,
    p: usize,
    prior: &Prior,
    integ: &Integrator,
) -> Result<(OverlapMatrix, DMatrix<f64>)> {
    check_delta(delta)?;
    let r = prior.rank();
    let m_hat = m.hadamard_pow(p - 1) / delta;
    let root = OverlapMatrix::psd_sqrt(&m_hat);
    let est = integ.expect_vector(prior, r * r, |x0, z, out| {
        let b: Vec<f64> = (0..r)
            .map(|k| (0..r).map(|l| m_hat[(k, l)] * x0[l] + root[(k, l)] * z[l]).sum())
            .collect();
        let d = prior.fin(&m_hat, &b).expect("valid prior");
        for k in 0..r {
            for l in 0..r {
                out[k * r + l] = d.mean[k] * x0[l];
            }
        }
    })?;
    let mat = DMatrix::from_row_iterator(r, r, est.iter().map(|e| e.value));
    let err = DMatrix::from_row_iterator(r, r, est.iter().map(|e| e.stderr));
    Ok((OverlapMatrix::symmetrized(mat), err))
}

/// Starting overlap for an initialization.
pub fn initial_overlap(prior: &Prior, init: SeInit) -> OverlapMatrix {
    let mom = prior.moments();
    match init {
        SeInit::Eps => OverlapMatrix(&mom.mean * mom.mean.transpose() + &mom.sigma_x * 1e-8),
        SeInit::Informative => OverlapMatrix(mom.sigma_x),
    }
}

/// Iterates [`se_step`] from the chosen initialization until the max-abs
/// change is below `tol` (deterministic integrators) or `max_iter` is hit.
pub fn se_fixed_point(
    delta: f64,
    p: usize,
    prior: &Prior,
    init: SeInit,
    integ: &Integrator,
    tol: f64,
    max_iter: usize,
) -> Result<SeFixedPoint> {
    check_delta(delta)?;
    let sigma_x = prior.moments().sigma_x;
    let mut m = initial_overlap(prior, init);
    let mut trajectory = vec![m.clone()];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = se_step(&m, delta, p, prior, integ)?;
        iterations += 1;
        let change = next.max_abs_diff(&m);
        m = next;
        trajectory.push(m.clone());
        if change < tol {
            converged = true;
            break;
        }
    }
    let mse = mse_from_overlap(&sigma_x, &m.0)?;
    Ok(SeFixedPoint { m_star: m, init_used: init, mse, iterations, converged, trajectory })
}

/// Closed-form Gaussian-prior SE map `(Δμ² + M^{p−1}(1+μ²)) / (Δ + M^{p−1})`.
pub fn se_gaussian_step(m: f64, delta: f64, p: usize, mu: f64) -> f64 {
    let q = m.max(0.0).powi(p as i32 - 1);
    (delta * mu * mu + q * (1.0 + mu * mu)) / (delta + q)
}

/// Linearization of SE around `M = 0` for zero-mean priors:
/// `M ↦ Σ_X M^{∘(p−1)} Σ_X / Δ`.
#[derive(Clone, Debug, PartialEq)]
pub enum LinearizedGrowth {
    /// `p = 2`: linear map `M ↦ Σ_X M Σ_X / Δ` with its spectral radius.
    Linear { sigma_x: DMatrix<f64>, delta: f64, spectral_radius: f64 },
    /// `p ≥ 3`: the linear term vanishes; `M = 0` is stable for every `Δ > 0`.
    Vanishing,
}

impl LinearizedGrowth {
    pub fn spectral_radius(&self) -> f64 {
        match self {
            LinearizedGrowth::Linear { spectral_radius, .. } => *spectral_radius,
            LinearizedGrowth::Vanishing => 0.0,
        }
    }

    /// Applies the linearized map.
    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            LinearizedGrowth::Linear { sigma_x, delta, .. } => sigma_x * m * sigma_x / *delta,
            LinearizedGrowth::Vanishing => DMatrix::zeros(m.nrows(), m.ncols()),
        }
    }
}

pub fn linearized_growth(prior: &Prior, delta: f64, p: usize) -> Result<LinearizedGrowth> {
    check_delta(delta)?;
    let mom = prior.moments();
    if mom.mean.amax() > 0.0 {
        return Err(Error::NotApplicable(
            "prior has nonzero mean: M = 0 is not a fixed point of state evolution".into(),
        ));
    }
    if p >= 3 {
        return Ok(LinearizedGrowth::Vanishing);
    }
    // The map M ↦ S M S on symmetric matrices has eigenvalues λ_i λ_j.
    let eig = SymmetricEigen::new(mom.sigma_x.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(LinearizedGrowth::Linear { sigma_x: mom.sigma_x, delta, spectral_radius: lmax * lmax / delta })
}

/// `Tr[Σ_X − M]`.
pub fn mse_from_overlap(sigma_x: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64> {
    if sigma_x.shape() != m.shape() {
        return Err(Error::Shape(format!("Σ_X is {:?}, M is {:?}", sigma_x.shape(), m.shape())));
    }
    Ok(sigma_x.trace() - m.trace())
}
