//! Finite-`N` Bayes-optimal approximate message passing.
//!
//! One iteration, fully synchronous:
//!
//! ```text
//! B_i = √((p−1)!) N^{−(p−1)/2} Σ_{i₂<…<i_p} S_{i i₂…i_p} x̂_{i₂}∘…∘x̂_{i_p}
//!       − ((p−1)/Δ) [ (1/N) Σ_j σ_j ∘ (x̂^t·x̂^{t−1})^{∘(p−2)} ] x̂_i^{t−1}
//! A   = (x̂^t·x̂^t)^{∘(p−1)} / Δ
//! x̂_i^{t+1} = f_in(A, B_i),   σ_i^{t+1} = ∂_B f_in(A, B_i)
//! ```

use crate::error::{Error, Result};
use crate::model::{spike_prefactor, ModelSpec, Prior};
use crate::par::Exec;
use crate::rng::{stream_rng, Domain};
use crate::tensor::{contract_leave_one, MultiVector, SymmetricTensor};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Amplitude of the random perturbation around the prior mean.
pub const RANDOM_INIT_AMPLITUDE: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_TOL: f64 = 1e-8;

/// Iteration state.
#[derive(Clone, Debug, PartialEq)]
pub struct AmpState {
    pub xhat: MultiVector,
    pub xhat_prev: MultiVector,
    /// Posterior covariances `σ_i`, one `r×r` matrix per variable.
    pub sigma: Vec<DMatrix<f64>>,
    pub a_mat: DMatrix<f64>,
    pub b_vecs: MultiVector,
    pub iter: usize,
}

impl AmpState {
    pub fn n(&self) -> usize {
        self.xhat.n()
    }

    pub fn r(&self) -> usize {
        self.xhat.r()
    }

    /// Overlap with the truth, `x̂·X⁰`.
    pub fn overlap(&self, truth: &MultiVector) -> Result<DMatrix<f64>> {
        self.xhat.overlap(truth)
    }
}

/// Initialization modes.
#[derive(Clone, Debug, PartialEq)]
pub enum AmpInit {
    /// Prior mean plus `amplitude ·` standard normal per component.
    Random { amplitude: f64 },
    /// Start at the planted signal.
    Informative,
    Custom(MultiVector),
}

impl AmpInit {
    pub fn random() -> Self {
        AmpInit::Random { amplitude: RANDOM_INIT_AMPLITUDE }
    }
}

/// Builds the initial state with `x̂^{−1} = x̂^0`.
///
/// `σ_i = Σ_X` for the random and custom starts. The informative start knows
/// the signal exactly, so its posterior covariance is zero; using `Σ_X` there
/// makes the first Onsager term exceed the field and flips the estimate.
pub fn amp_init(init: &AmpInit, spec: &ModelSpec, truth: Option<&MultiVector>, seed: u64) -> Result<AmpState> {
    spec.prior.validate()?;
    let (n, r) = (spec.n, spec.r());
    let moments = spec.prior.moments();
    let xhat = match init {
        AmpInit::Random { amplitude } => {
            let mut rng = stream_rng(seed, Domain::AmpInit);
            let mut data = vec![0.0; n * r];
            for (idx, v) in data.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *v = moments.mean[idx % r] + amplitude * z;
            }
            MultiVector::from_rows(n, r, data)?
        }
        AmpInit::Informative => truth.ok_or(Error::MissingTruth("informative AMP initialization"))?.clone(),
        AmpInit::Custom(x) => x.clone(),
    };
    let sigma0 = match init {
        AmpInit::Informative => DMatrix::zeros(r, r),
        _ => moments.sigma_x.clone(),
    };
    if xhat.n() != n || xhat.r() != r {
        return Err(Error::Shape(format!("initial estimate is {}×{}, model is {n}×{r}", xhat.n(), xhat.r())));
    }
    Ok(AmpState {
        xhat_prev: xhat.clone(),
        xhat,
        sigma: vec![sigma0; n],
        a_mat: DMatrix::zeros(r, r),
        b_vecs: MultiVector::zeros(n, r),
        iter: 0,
    })
}

/// The Onsager matrix `((p−1)/Δ) [(1/N) Σ_j σ_j ∘ (x̂^t·x̂^{t−1})^{∘(p−2)}]`.
pub fn onsager_matrix(state: &AmpState, delta: f64, p: usize) -> Result<DMatrix<f64>> {
    let n = state.n() as f64;
    let cross = state.xhat.overlap(&state.xhat_prev)?.map(|v| v.powi(p as i32 - 2));
    let mut sigma_mean = DMatrix::zeros(state.r(), state.r());
    for s in &state.sigma {
        sigma_mean += s;
    }
    sigma_mean /= n;
    Ok(sigma_mean.component_mul(&cross) * ((p as f64 - 1.0) / delta))
}

/// One synchronous AMP iteration; `s` is the score tensor.
pub fn amp_step(
    state: &AmpState,
    s: &SymmetricTensor,
    delta: f64,
    prior: &Prior,
    damping: f64,
    exec: Exec,
) -> Result<AmpState> {
    let (n, r, p) = (state.n(), state.r(), s.p());
    if s.n() != n {
        return Err(Error::Shape(format!("tensor has n = {}, state has n = {n}", s.n())));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("Δ must be positive, got {delta}")));
    }
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::InvalidParameter(format!("damping must lie in [0, 1), got {damping}")));
    }
    let diverged = || Error::Divergence { iteration: state.iter };

    let onsager = onsager_matrix(state, delta, p)?;
    let field = contract_leave_one(s, &state.xhat, spike_prefactor(n, p), exec)?;
    let mut b = field.data().to_vec();
    for i in 0..n {
        let prev = DVector::from_column_slice(state.xhat_prev.row(i));
        let corr = &onsager * prev;
        for k in 0..r {
            b[i * r + k] -= corr[k];
        }
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(diverged());
    }
    let a_mat = state.xhat.overlap(&state.xhat)?.map(|v| v.powi(p as i32 - 1) / delta);

    let denoised = exec.map(n, |i| prior.fin(&a_mat, &b[i * r..(i + 1) * r]));
    let mut xnew = vec![0.0; n * r];
    let mut sigma = Vec::with_capacity(n);
    for (i, d) in denoised.into_iter().enumerate() {
        let d = d.map_err(|_| diverged())?;
        for k in 0..r {
            let old = state.xhat.row(i)[k];
            xnew[i * r + k] = (1.0 - damping) * d.mean[k] + damping * old;
        }
        let cov = if damping > 0.0 { d.cov * (1.0 - damping) + &state.sigma[i] * damping } else { d.cov };
        sigma.push(clip_psd(cov));
    }
    if xnew.iter().any(|v| !v.is_finite()) {
        return Err(diverged());
    }
    Ok(AmpState {
        xhat: MultiVector::from_rows(n, r, xnew)?,
        xhat_prev: state.xhat.clone(),
        sigma,
        a_mat,
        b_vecs: MultiVector::from_rows(n, r, b)?,
        iter: state.iter + 1,
    })
}

/// Symmetrizes and clips eigenvalues below zero (round-off only).
fn clip_psd(m: DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 1 {
        return m.map(|v| v.max(0.0));
    }
    let sym = (&m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym.clone());
    // Singular covariances (clusters) sit at −1e-17 eigenvalues; rebuilding
    // them would only add eigen-solver noise.
    let floor = -1e-12 * sym.trace().abs().max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// Run controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmpConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub damping: f64,
    pub exec: Exec,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self { max_iter: DEFAULT_MAX_ITER, tol: DEFAULT_TOL, damping: 0.0, exec: Exec::Parallel }
    }
}

/// Mean squared error, computed two ways.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmpMse {
    /// `(1/N) ‖X⁰ − x̂‖²`.
    pub direct: f64,
    /// `Tr[Σ̂_X + x̂·x̂ − 2 x̂·X⁰]` with the empirical `Σ̂_X = X⁰·X⁰`.
    pub via_overlap: f64,
    /// `Tr[Σ_X − x̂·X⁰]` with the prior second moment.
    pub prior_form: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AmpResult {
    pub state: AmpState,
    pub converged: bool,
    /// `M^t = x̂^t·X⁰`, starting at `t = 0` (empty without truth).
    pub overlap_trajectory: Vec<DMatrix<f64>>,
    pub mse: Option<AmpMse>,
    pub iterations: usize,
}

impl AmpResult {
    /// Final overlap with the truth, if known.
    pub fn overlap(&self) -> Option<&DMatrix<f64>> {
        self.overlap_trajectory.last()
    }
}

pub fn amp_mse(xhat: &MultiVector, truth: &MultiVector, prior: &Prior) -> Result<AmpMse> {
    let n = xhat.n() as f64;
    let direct = xhat.data().iter().zip(truth.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let m = xhat.overlap(truth)?;
    let via_overlap = (truth.overlap(truth)? + xhat.overlap(xhat)? - &m * 2.0).trace();
    let prior_form = (prior.moments().sigma_x - m).trace();
    Ok(AmpMse { direct, via_overlap, prior_form })
}

/// Iterates [`amp_step`] until `(1/N)‖x̂^{t+1} − x̂^t‖² < tol` or `max_iter`.
pub fn amp_run(
    s: &SymmetricTensor,
    delta: f64,
    prior: &Prior,
    init: AmpState,
    truth: Option<&MultiVector>,
    cfg: &AmpConfig,
) -> Result<AmpResult> {
    let n = init.n() as f64;
    let mut state = init;
    let mut trajectory = Vec::new();
    if let Some(t) = truth {
        trajectory.push(state.overlap(t)?);
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let next = amp_step(&state, s, delta, prior, cfg.damping, cfg.exec)?;
        iterations += 1;
        let change =
            next.xhat.data().iter().zip(state.xhat.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        state = next;
        if let Some(t) = truth {
            trajectory.push(state.overlap(t)?);
        }
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    let mse = truth.map(|t| amp_mse(&state.xhat, t, prior)).transpose()?;
    Ok(AmpResult { state, converged, overlap_trajectory: trajectory, mse, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Instance;

    #[test]
    fn random_init_is_small_around_mean() {
        let spec = ModelSpec::awgn(200, 3, Prior::Rademacher, 0.3);
        let st = amp_init(&AmpInit::random(), &spec, None, 5).unwrap();
        assert!(st.xhat.data().iter().all(|v| v.abs() < 1e-2));
        assert_eq!(st, amp_init(&AmpInit::random(), &spec, None, 5).unwrap());
        assert!(matches!(amp_init(&AmpInit::Informative, &spec, None, 5), Err(Error::MissingTruth(_))));
    }

    #[test]
    fn zero_tensor_gives_pure_onsager_update() {
        let spec = ModelSpec::awgn(10, 3, Prior::Rademacher, 0.5);
        let st = amp_init(&AmpInit::random(), &spec, None, 2).unwrap();
        let s = SymmetricTensor::zeros(10, 3).unwrap();
        let next = amp_step(&st, &s, 0.5, &Prior::Rademacher, 0.0, Exec::Sequential).unwrap();
        let o = onsager_matrix(&st, 0.5, 3).unwrap()[(0, 0)];
        for i in 0..10 {
            let expect = (-o * st.xhat_prev.row(i)[0]).tanh();
            assert!((next.xhat.row(i)[0] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn mse_forms_agree() {
        let spec = ModelSpec::awgn(30, 3, Prior::Gaussian { mu: 0.2 }, 0.1);
        let inst = Instance::generate(&spec, 3, Exec::Sequential).unwrap();
        let st = amp_init(&AmpInit::random(), &spec, None, 1).unwrap();
        let m = amp_mse(&st.xhat, &inst.x0, &spec.prior).unwrap();
        assert!((m.direct - m.via_overlap).abs() < 1e-10);
    }
}
