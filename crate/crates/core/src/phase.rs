//! Phase thresholds, closed-form cross-checks, tri-critical points, phase
//! diagrams and the reproduction of the standard threshold table.
//!
//! All thresholds are located by bisection in `ln Δ` on indicator predicates
//! evaluated on a [`LineModel`]:
//!
//! * `Δ_IT`: `Tr M*(Δ) > Tr M(∞) + τ` (the replica maximizer is informative),
//! * `Δ_Alg`: `Tr M*(Δ) > Tr M_eps(Δ) + τ` (AMP from an uninformative start is suboptimal),
//! * `Δ_Dyn`: `Tr M_inf(Δ) > Tr M_eps(Δ) + τ` (two stable SE fixed points),
//! * `Δ_c`: linear growth factor of SE at the uninformative point equal to 1,
//!
//! with `τ = 10⁻⁶ · Tr Σ_X`.
//!
//! Priors with a non-zero mean have no uninformative fixed point: the
//! low-overlap branch drifts continuously with `Δ`, so the first two
//! indicators never switch off sharply. For them the transition is located
//! from the bistable window instead: `Δ_Alg` and `Δ_Dyn` are its edges and
//! `Δ_IT` is where the potentials of the two stable branches cross. The
//! window is seeded from the folds of the parametric fixed-point curve
//! `Δ(y) = g(y)^{p−1}/y` and its edges are then bisected on the SE
//! indicators. Without a fold there is no sharp transition and the
//! thresholds are NaN.

use crate::error::{Error, Result};
use crate::free_energy::{maximize_on_line, PHI_GRID_POINTS};
use crate::model::Prior;
use crate::par::Exec;
use crate::quadrature::Integrator;
use crate::state_evolution::{overlap_function, LineModel, SeInit};
use serde::{Deserialize, Serialize};

/// Relative indicator tolerance on overlap traces.
pub const INDICATOR_RTOL: f64 = 1e-6;
/// Default relative bisection tolerance.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default search bracket before automatic expansion.
pub const DEFAULT_BRACKET: (f64, f64) = (1e-6, 10.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bisection,
    ClosedForm,
}

/// One bisection run, kept for provenance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BracketRecord {
    pub threshold: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

/// The four thresholds for one `(prior, p)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdSet {
    pub delta_c: f64,
    pub delta_alg: f64,
    pub delta_dyn: f64,
    pub delta_it: f64,
    pub method: Method,
    pub tolerance: f64,
    pub brackets: Vec<BracketRecord>,
    /// Caveat, e.g. "ansatz-restricted" for clusters.
    pub label: Option<String>,
}

impl ThresholdSet {
    /// Whether a hard phase `Δ_Alg < Δ_IT` exists.
    pub fn has_hard_phase(&self) -> bool {
        self.delta_alg < self.delta_it * (1.0 - 10.0 * self.tolerance)
    }

    /// Checks `Δ_Alg ≤ Δ_c` and, with a hard phase, `Δ_Alg ≤ Δ_IT ≤ Δ_Dyn`.
    pub fn ordering_violations(&self) -> Vec<String> {
        let slack = 1.0 + 10.0 * self.tolerance;
        let mut v = Vec::new();
        if self.delta_alg > self.delta_c * slack {
            v.push(format!("Δ_Alg = {} > Δ_c = {}", self.delta_alg, self.delta_c));
        }
        if self.has_hard_phase() && self.delta_it > self.delta_dyn * slack {
            v.push(format!("Δ_IT = {} > Δ_Dyn = {}", self.delta_it, self.delta_dyn));
        }
        if self.delta_alg > self.delta_it * slack {
            v.push(format!("Δ_Alg = {} > Δ_IT = {}", self.delta_alg, self.delta_it));
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseLabel {
    /// AMP from an uninformative start reaches the Bayes-optimal overlap.
    Easy,
    /// Bayes-optimal overlap strictly above what AMP reaches.
    Hard,
    /// Random guessing is Bayes-optimal.
    ImpossibleToImprove,
}

impl std::fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PhaseLabel::Easy => "easy",
            PhaseLabel::Hard => "hard",
            PhaseLabel::ImpossibleToImprove => "impossible-to-improve",
        })
    }
}

/// Edges of the bistable window and the crossing of the branch potentials.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Window {
    alg: f64,
    it: f64,
    dyn_: f64,
}

/// Range of `ln y` and grid size for locating the folds of the fixed-point curve.
const FOLD_LN_Y: (f64, f64) = (-14.0, 20.0);
const FOLD_GRID: usize = 3400;

/// Threshold machinery bound to one line model.
pub struct PhaseSolver {
    pub model: LineModel,
    pub grid_points: usize,
    pub tol: f64,
    window: std::sync::OnceLock<Option<Window>>,
}

impl PhaseSolver {
    pub fn new(prior: &Prior, p: usize, integ: &Integrator) -> Result<Self> {
        let model = LineModel::new(prior, p, integ)?;
        let grid_points = if model.is_clusters() { 200 } else { PHI_GRID_POINTS };
        Ok(Self { model, grid_points, tol: DEFAULT_TOL, window: std::sync::OnceLock::new() })
    }

    /// Whether thresholds come from the bistable window (non-fixed baseline).
    fn drifting_baseline(&self) -> bool {
        !self.model.baseline_is_fixed()
    }

    /// `φ` of the informative branch above that of the ε branch.
    fn informative_dominates(&self, delta: f64) -> Result<bool> {
        let lo = self.model.fixed_point(delta, SeInit::Eps)?.t;
        let hi = self.model.fixed_point(delta, SeInit::Informative)?.t;
        Ok(self.model.phi(hi, delta)? > self.model.phi(lo, delta)?)
    }

    /// Folds of the fixed-point curve `Δ(y) = g(y)^{p−1}/y` (`g` the scalar
    /// overlap function): the first local minimum in `y` and the local maximum
    /// after it. Between them SE has two stable fixed points.
    fn fold_range(&self) -> Result<Option<(f64, f64)>> {
        let LineModel::Scalar { prior, p, integ } = &self.model else { return Ok(None) };
        let curve = |u: f64| -> Result<f64> {
            let y = u.exp();
            Ok(overlap_function(y, prior, integ)?.value.powi(*p as i32 - 1) / y)
        };
        let us: Vec<f64> = (0..=FOLD_GRID).map(|i| FOLD_LN_Y.0 + (FOLD_LN_Y.1 - FOLD_LN_Y.0) * i as f64 / FOLD_GRID as f64).collect();
        let vals = Exec::Parallel.map(us.len(), |i| curve(us[i])).into_iter().collect::<Result<Vec<_>>>()?;
        let interior = 1..us.len() - 1;
        let Some(kmin) = interior.clone().find(|&k| vals[k] < vals[k - 1] && vals[k] <= vals[k + 1]) else {
            return Ok(None);
        };
        let Some(kmax) = (kmin + 1..us.len() - 1).find(|&k| vals[k] > vals[k - 1] && vals[k] >= vals[k + 1]) else {
            return Ok(None);
        };
        let refine = |k: usize, sign: f64| -> Result<f64> {
            let (mut a, mut b) = (us[k - 1], us[k + 1]);
            let inv = (5f64.sqrt() - 1.0) / 2.0;
            while b - a > 1e-9 {
                let c = b - inv * (b - a);
                let d = a + inv * (b - a);
                if sign * curve(c)? >= sign * curve(d)? {
                    b = d;
                } else {
                    a = c;
                }
            }
            curve(0.5 * (a + b))
        };
        Ok(Some((refine(kmin, -1.0)?, refine(kmax, 1.0)?)))
    }

    /// Locates the bistable window from the folds of the fixed-point curve,
    /// then bisects its edges on the SE indicator and the crossing of the
    /// branch potentials (cached).
    fn window(&self, records: &mut Vec<BracketRecord>) -> Result<Option<Window>> {
        if let Some(w) = self.window.get() {
            return Ok(*w);
        }
        let found = match self.fold_range()? {
            None => None,
            Some((fold_lo, fold_hi)) => {
                let inside = (fold_lo * fold_hi).sqrt();
                let dyn_pred = |d: f64| self.dyn_indicator(d);
                let not_dyn = |d: f64| Ok(!self.dyn_indicator(d)?);
                let margin = 1e-3;
                let lo_out = fold_lo * (1.0 - margin);
                let hi_out = fold_hi * (1.0 + margin);
                if fold_hi / fold_lo - 1.0 < 100.0 * self.tol || !dyn_pred(inside)? || dyn_pred(lo_out)? || dyn_pred(hi_out)? {
                    // Window below the SE resolution: use the folds directly.
                    Some(Window { alg: fold_lo, it: inside, dyn_: fold_hi })
                } else {
                    let alg = self.bisect("delta_alg", &not_dyn, lo_out, inside, records)?;
                    let dyn_ = self.bisect("delta_dyn", &dyn_pred, inside, hi_out, records)?;
                    let (lo, hi) = (alg * (1.0 + 10.0 * self.tol), dyn_ * (1.0 - 10.0 * self.tol));
                    let pred = |d: f64| self.informative_dominates(d);
                    let it = if lo < hi && pred(lo)? && !pred(hi)? {
                        self.bisect("delta_it", &pred, lo, hi, records)?
                    } else {
                        (alg * dyn_).sqrt()
                    };
                    Some(Window { alg, it, dyn_ })
                }
            }
        };
        let _ = self.window.set(found);
        Ok(found)
    }

    fn tau(&self) -> f64 {
        INDICATOR_RTOL * self.model.sigma_trace()
    }

    /// `Tr M*` at `Δ`.
    pub fn trace_star(&self, delta: f64) -> Result<f64> {
        Ok(maximize_on_line(&self.model, delta, self.grid_points, Exec::Parallel)?.trace_star)
    }

    pub fn trace_fixed(&self, delta: f64, init: SeInit) -> Result<f64> {
        Ok(self.model.fixed_point(delta, init)?.trace)
    }

    pub fn it_indicator(&self, delta: f64) -> Result<bool> {
        Ok(self.trace_star(delta)? > self.model.trace(self.model.baseline()) + self.tau())
    }

    pub fn alg_indicator(&self, delta: f64) -> Result<bool> {
        Ok(self.trace_star(delta)? > self.trace_fixed(delta, SeInit::Eps)? + self.tau())
    }

    pub fn dyn_indicator(&self, delta: f64) -> Result<bool> {
        Ok(self.trace_fixed(delta, SeInit::Informative)? > self.trace_fixed(delta, SeInit::Eps)? + self.tau())
    }

    pub fn classify(&self, delta: f64) -> Result<PhaseLabel> {
        if self.drifting_baseline() {
            return Ok(match self.window(&mut Vec::new())? {
                Some(w) if delta > w.it => PhaseLabel::ImpossibleToImprove,
                Some(w) if delta > w.alg => PhaseLabel::Hard,
                _ => PhaseLabel::Easy,
            });
        }
        let star = self.trace_star(delta)?;
        if star <= self.model.trace(self.model.baseline()) + self.tau() {
            return Ok(PhaseLabel::ImpossibleToImprove);
        }
        if star > self.trace_fixed(delta, SeInit::Eps)? + self.tau() {
            Ok(PhaseLabel::Hard)
        } else {
            Ok(PhaseLabel::Easy)
        }
    }

    /// Bisection in `ln Δ` for the boundary of `pred`, true at `lo`, false at `hi`.
    fn bisect(
        &self,
        name: &'static str,
        pred: &dyn Fn(f64) -> Result<bool>,
        mut lo: f64,
        mut hi: f64,
        records: &mut Vec<BracketRecord>,
    ) -> Result<f64> {
        let (lo0, hi0) = (lo, hi);
        let mut steps = 0;
        while hi / lo - 1.0 > self.tol {
            let mid = (lo * hi).sqrt();
            if pred(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
            steps += 1;
        }
        records.push(BracketRecord { threshold: name, lo: lo0, hi: hi0, steps });
        Ok((lo * hi).sqrt())
    }

    /// `Δ_IT`; `bracket = None` expands [`DEFAULT_BRACKET`] automatically.
    pub fn delta_it(&self, bracket: Option<(f64, f64)>, records: &mut Vec<BracketRecord>) -> Result<f64> {
        let drifting = self.drifting_baseline();
        if drifting && bracket.is_none() {
            return Ok(self.window(records)?.map_or(f64::NAN, |w| w.it));
        }
        let pred = |d: f64| if drifting { self.informative_dominates(d) } else { self.it_indicator(d) };
        let (lo, hi) = match bracket {
            Some((lo, hi)) => {
                if !(pred(lo)? && !pred(hi)?) {
                    return Err(Error::Bracket { lo, hi });
                }
                (lo, hi)
            }
            None => {
                let (mut lo, mut hi) = DEFAULT_BRACKET;
                while !pred(lo)? {
                    lo *= 1e-3;
                    if lo < 1e-200 {
                        return Err(Error::Bracket { lo, hi });
                    }
                }
                while pred(hi)? {
                    hi *= 10.0;
                    if hi > 1e12 {
                        return Err(Error::Bracket { lo, hi });
                    }
                }
                (lo, hi)
            }
        };
        self.bisect("delta_it", &pred, lo, hi, records)
    }

    /// `Δ_Alg`, given `Δ_IT`. Returns 0 when the hard phase extends down to
    /// the numerical floor `10⁻⁸ Δ_IT`, and `Δ_IT` when there is no hard phase.
    pub fn delta_alg(&self, delta_it: f64, bracket: Option<(f64, f64)>, records: &mut Vec<BracketRecord>) -> Result<f64> {
        let drifting = self.drifting_baseline();
        if drifting && bracket.is_none() {
            return Ok(self.window(records)?.map_or(f64::NAN, |w| w.alg));
        }
        let pred =
            |d: f64| Ok(!if drifting { self.dyn_indicator(d)? } else { self.alg_indicator(d)? });
        let (lo, hi) = match bracket {
            Some((lo, hi)) => {
                if !(pred(lo)? && !pred(hi)?) {
                    return Err(Error::Bracket { lo, hi });
                }
                (lo, hi)
            }
            None => {
                // A stable baseline at every Δ > 0 means AMP never leaves it;
                // bisecting would only locate the escape of the ε start.
                if self.model.linearization_vanishes() {
                    return Ok(0.0);
                }
                let hi = delta_it * (1.0 - 1e-5);
                if pred(hi)? {
                    return Ok(delta_it);
                }
                let floor = 1e-8 * delta_it;
                if !pred(floor)? {
                    return Ok(0.0);
                }
                (floor, hi)
            }
        };
        self.bisect("delta_alg", &pred, lo, hi, records)
    }

    /// `Δ_Dyn`: largest `Δ` with two distinct stable SE fixed points.
    pub fn delta_dyn(
        &self,
        delta_it: f64,
        delta_alg: f64,
        bracket: Option<(f64, f64)>,
        records: &mut Vec<BracketRecord>,
    ) -> Result<f64> {
        if self.drifting_baseline() && bracket.is_none() {
            return Ok(self.window(records)?.map_or(f64::NAN, |w| w.dyn_));
        }
        let pred = |d: f64| self.dyn_indicator(d);
        let (lo, hi) = match bracket {
            Some((lo, hi)) => {
                if !(pred(lo)? && !pred(hi)?) {
                    return Err(Error::Bracket { lo, hi });
                }
                (lo, hi)
            }
            None => {
                let inside = if delta_alg < delta_it { delta_it * (1.0 - 1e-5) } else { delta_it };
                if delta_alg >= delta_it || !pred(inside)? {
                    return Ok(delta_it);
                }
                let mut hi = delta_it * 1.5;
                while pred(hi)? {
                    hi *= 2.0;
                    if hi > 1e12 {
                        return Err(Error::Bracket { lo: inside, hi });
                    }
                }
                (inside, hi)
            }
        };
        self.bisect("delta_dyn", &pred, lo, hi, records)
    }

    /// `Δ_c`: `+∞` when the uninformative point is not an SE fixed point,
    /// `0` when its linearization vanishes, else where the growth factor is 1.
    pub fn delta_c(&self, bracket: Option<(f64, f64)>, records: &mut Vec<BracketRecord>) -> Result<f64> {
        if !self.model.baseline_is_fixed() {
            return Ok(f64::INFINITY);
        }
        let pred = |d: f64| Ok(self.model.growth_factor(d)? > 1.0);
        let (lo, hi) = match bracket {
            Some((lo, hi)) => {
                if !(pred(lo)? && !pred(hi)?) {
                    return Err(Error::Bracket { lo, hi });
                }
                (lo, hi)
            }
            None => {
                let (mut lo, mut hi) = DEFAULT_BRACKET;
                while !pred(lo)? {
                    lo *= 1e-3;
                    if lo < 1e-30 {
                        // Vanishing linearization (e.g. zero-mean p ≥ 3).
                        return Ok(0.0);
                    }
                }
                while pred(hi)? {
                    hi *= 10.0;
                    if hi > 1e12 {
                        return Err(Error::Bracket { lo, hi });
                    }
                }
                (lo, hi)
            }
        };
        self.bisect("delta_c", &pred, lo, hi, records)
    }

    /// All four thresholds with automatic brackets.
    pub fn thresholds(&self) -> Result<ThresholdSet> {
        let mut brackets = Vec::new();
        let delta_it = self.delta_it(None, &mut brackets)?;
        let delta_alg = self.delta_alg(delta_it, None, &mut brackets)?;
        let delta_dyn = self.delta_dyn(delta_it, delta_alg, None, &mut brackets)?;
        let delta_c = self.delta_c(None, &mut brackets)?;
        Ok(ThresholdSet {
            delta_c,
            delta_alg,
            delta_dyn,
            delta_it,
            method: Method::Bisection,
            tolerance: self.tol,
            brackets,
            label: if self.model.is_clusters() {
                Some("ansatz-restricted".to_string())
            } else if delta_it.is_nan() {
                Some("no first-order transition".to_string())
            } else {
                None
            },
        })
    }
}

/// Phase label at `Δ`.
pub fn classify(delta: f64, p: usize, prior: &Prior, integ: &Integrator) -> Result<PhaseLabel> {
    PhaseSolver::new(prior, p, integ)?.classify(delta)
}

fn solver_with_tol(p: usize, prior: &Prior, tol: f64) -> Result<PhaseSolver> {
    let mut s = PhaseSolver::new(prior, p, &Integrator::default())?;
    s.tol = tol;
    Ok(s)
}

pub fn find_delta_it(p: usize, prior: &Prior, bracket: Option<(f64, f64)>, tol: f64) -> Result<f64> {
    solver_with_tol(p, prior, tol)?.delta_it(bracket, &mut Vec::new())
}

pub fn find_delta_alg(p: usize, prior: &Prior, bracket: Option<(f64, f64)>, tol: f64) -> Result<f64> {
    let s = solver_with_tol(p, prior, tol)?;
    let mut rec = Vec::new();
    let it = s.delta_it(None, &mut rec)?;
    s.delta_alg(it, bracket, &mut rec)
}

pub fn find_delta_dyn(p: usize, prior: &Prior, bracket: Option<(f64, f64)>, tol: f64) -> Result<f64> {
    let s = solver_with_tol(p, prior, tol)?;
    let mut rec = Vec::new();
    let it = s.delta_it(None, &mut rec)?;
    let alg = s.delta_alg(it, None, &mut rec)?;
    s.delta_dyn(it, alg, bracket, &mut rec)
}

pub fn find_delta_c(p: usize, prior: &Prior, bracket: Option<(f64, f64)>, tol: f64) -> Result<f64> {
    solver_with_tol(p, prior, tol)?.delta_c(bracket, &mut Vec::new())
}

/// All four thresholds with the default integrator.
pub fn thresholds(p: usize, prior: &Prior, tol: f64) -> Result<ThresholdSet> {
    solver_with_tol(p, prior, tol)?.thresholds()
}

/// Spinodal data for the Gaussian prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussianSpinodals {
    pub delta_alg: f64,
    pub delta_dyn: f64,
    pub x_alg: f64,
    pub x_dyn: f64,
}

/// `μ_Tri = (p−2)/(2√(p−1))`.
pub fn gaussian_mu_tri(p: usize) -> f64 {
    (p as f64 - 2.0) / (2.0 * (p as f64 - 1.0).sqrt())
}

fn gaussian_discriminant(mu: f64, p: usize) -> f64 {
    let pf = p as f64;
    (pf - 2.0).powi(2) - 4.0 * mu * mu * (pf - 1.0)
}

/// The published closed forms
/// `x_{Alg/Dyn} = (p−2+2μ² ∓ √((p−2)² − 4μ²(p−1)))/(2(1+μ²))`, `Δ = x^{p−2}/(1+x)^{p−1}`.
///
/// For `μ ≠ 0` these do not coincide with the fixed-point structure of the
/// Gaussian SE map; see [`gaussian_se_spinodals`].
pub fn gaussian_closed_thresholds(mu: f64, p: usize) -> Result<GaussianSpinodals> {
    if p < 3 {
        return Err(Error::NotApplicable("spinodals require p ≥ 3".into()));
    }
    let disc = gaussian_discriminant(mu, p);
    if disc < 0.0 {
        return Err(Error::NotApplicable(format!("μ = {mu} is above μ_Tri = {}: no spinodal", gaussian_mu_tri(p))));
    }
    let pf = p as f64;
    let m2 = mu * mu;
    let x_alg = (pf - 2.0 + 2.0 * m2 - disc.sqrt()) / (2.0 * (1.0 + m2));
    let x_dyn = (pf - 2.0 + 2.0 * m2 + disc.sqrt()) / (2.0 * (1.0 + m2));
    let delta = |x: f64| x.powi(p as i32 - 2) / (1.0 + x).powi(p as i32 - 1);
    Ok(GaussianSpinodals { delta_alg: delta(x_alg), delta_dyn: delta(x_dyn), x_alg, x_dyn })
}

/// Spinodals derived directly from the Gaussian SE map
/// `M' = g(M^{p−1}/Δ)`, `g(y) = ((1+μ²)y + μ²)/(1+y)`: fixed points lie on
/// `Δ(y) = g(y)^{p−1}/y`, whose turning points solve
/// `(1+μ²) y² − (p−2−2μ²) y + μ² = 0`. The returned `x` values are these `y`.
pub fn gaussian_se_spinodals(mu: f64, p: usize) -> Result<GaussianSpinodals> {
    if p < 3 {
        return Err(Error::NotApplicable("spinodals require p ≥ 3".into()));
    }
    let disc = gaussian_discriminant(mu, p);
    if disc < 0.0 {
        return Err(Error::NotApplicable(format!("μ = {mu} is above μ_Tri = {}: no spinodal", gaussian_mu_tri(p))));
    }
    let pf = p as f64;
    let m2 = mu * mu;
    let y_alg = (pf - 2.0 - 2.0 * m2 - disc.sqrt()) / (2.0 * (1.0 + m2));
    let y_dyn = (pf - 2.0 - 2.0 * m2 + disc.sqrt()) / (2.0 * (1.0 + m2));
    let delta = |y: f64| gaussian_curve_delta(y, mu, p);
    Ok(GaussianSpinodals { delta_alg: delta(y_alg), delta_dyn: delta(y_dyn), x_alg: y_alg, x_dyn: y_dyn })
}

/// `Δ(y) = g(y)^{p−1}/y` for the Gaussian prior (`y^{p−2}/(1+y)^{p−1}` at `μ = 0`).
pub fn gaussian_curve_delta(y: f64, mu: f64, p: usize) -> f64 {
    let m2 = mu * mu;
    if y <= 0.0 {
        return if m2 == 0.0 && p > 2 { 0.0 } else { f64::INFINITY };
    }
    if m2 == 0.0 {
        return y.powi(p as i32 - 2) / (1.0 + y).powi(p as i32 - 1);
    }
    (((1.0 + m2) * y + m2) / (1.0 + y)).powi(p as i32 - 1) / y
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriCriticalKind {
    GaussianClosedForm,
    Numeric,
}

/// Where the first-order transition structure collapses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TriCriticalPoint {
    /// `μ` (Gaussian) or `ρ` (Bernoulli).
    pub param: f64,
    pub delta: f64,
    /// Curve parameter at the meeting point (`x_Tri` or `y` at the cusp).
    pub x: f64,
    pub kind: TriCriticalKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Bernoulli,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Family::Gaussian),
            "bernoulli" => Ok(Family::Bernoulli),
            _ => Err(Error::InvalidParameter(format!("unknown prior family '{s}'"))),
        }
    }
}

impl Family {
    pub fn prior(self, param: f64) -> Prior {
        match self {
            Family::Gaussian => Prior::Gaussian { mu: param },
            Family::Bernoulli => Prior::Bernoulli { rho: param },
        }
    }
}

/// Published Gaussian tri-critical point: `μ_Tri = (p−2)/(2√(p−1))`,
/// `x_Tri = (p−2)(3p−4)/p²`, `Δ_Tri = x_Tri^{p−2}/(1+x_Tri)^{p−1}`.
pub fn gaussian_tri_critical_closed(p: usize) -> TriCriticalPoint {
    let pf = p as f64;
    let x = (pf - 2.0) * (3.0 * pf - 4.0) / (pf * pf);
    TriCriticalPoint {
        param: gaussian_mu_tri(p),
        delta: x.powi(p as i32 - 2) / (1.0 + x).powi(p as i32 - 1),
        x,
        kind: TriCriticalKind::GaussianClosedForm,
    }
}

/// Maximum over the fixed-point curve of `d ln Δ / d ln y`, with `Δ(y) = g(y)^{p−1}/y`,
/// and the `y` attaining it. SE is bistable for some `Δ` iff the maximum is positive.
pub fn bistability_margin(prior: &Prior, p: usize, integ: &Integrator) -> Result<(f64, f64)> {
    let h = 1e-4;
    let slope = |u: f64| -> Result<f64> {
        let gp = overlap_function((u + h).exp(), prior, integ)?.value.ln();
        let gm = overlap_function((u - h).exp(), prior, integ)?.value.ln();
        Ok((p as f64 - 1.0) * (gp - gm) / (2.0 * h) - 1.0)
    };
    let us: Vec<f64> = (0..=500).map(|i| -12.0 + 30.0 * i as f64 / 500.0).collect();
    let mut best = 0;
    let mut vals = Vec::with_capacity(us.len());
    for (i, &u) in us.iter().enumerate() {
        vals.push(slope(u)?);
        if vals[i] > vals[best] {
            best = i;
        }
    }
    let (mut a, mut b) = (us[best.saturating_sub(1)], us[(best + 1).min(us.len() - 1)]);
    let inv = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-7 {
        let c = b - inv * (b - a);
        let d = a + inv * (b - a);
        if slope(c)? >= slope(d)? {
            b = d;
        } else {
            a = c;
        }
    }
    let u = 0.5 * (a + b);
    Ok((slope(u)?, u.exp()))
}

/// Numeric tri-critical point: coarse parameter scan (step 0.002) of the
/// bistability margin, then bisection of its sign change.
pub fn tri_critical_numeric(family: Family, p: usize, range: (f64, f64)) -> Result<TriCriticalPoint> {
    let integ = Integrator::default();
    let margin = |param: f64| -> Result<f64> { Ok(bistability_margin(&family.prior(param), p, &integ)?.0) };
    let mut prev = range.0;
    let mut prev_m = margin(prev)?;
    let mut x = prev + 0.002;
    let mut bracket = None;
    while x <= range.1 + 1e-12 {
        let m = margin(x)?;
        if (m > 0.0) != (prev_m > 0.0) {
            bracket = Some((prev, x, prev_m > 0.0));
            break;
        }
        prev = x;
        prev_m = m;
        x += 0.002;
    }
    let (mut lo, mut hi, lo_bistable) = bracket.ok_or(Error::Bracket { lo: range.0, hi: range.1 })?;
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if (margin(mid)? > 0.0) == lo_bistable {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let param = 0.5 * (lo + hi);
    let prior = family.prior(param);
    let (_, y) = bistability_margin(&prior, p, &integ)?;
    let m = overlap_function(y, &prior, &integ)?.value;
    Ok(TriCriticalPoint { param, delta: m.powi(p as i32 - 1) / y, x: y, kind: TriCriticalKind::Numeric })
}

/// Tri-critical point of a family: the published closed form for Gaussian,
/// the numeric search over `ρ ∈ [0.1, 0.3]` for Bernoulli.
pub fn tri_critical(p: usize, family: Family) -> Result<TriCriticalPoint> {
    if p < 3 {
        return Err(Error::NotApplicable("tri-critical points require p ≥ 3".into()));
    }
    match family {
        Family::Gaussian => Ok(gaussian_tri_critical_closed(p)),
        Family::Bernoulli => tri_critical_numeric(Family::Bernoulli, p, (0.1, 0.3)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionOrder {
    FirstOrder,
    SecondOrder,
    Marginal,
}

/// Sign of `pr − 2p − r` for the clusters prior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Discriminant {
    pub value: i64,
    pub order: TransitionOrder,
}

pub fn first_order_discriminant(p: usize, r: usize) -> Result<Discriminant> {
    if r < 2 {
        return Err(Error::InvalidParameter(format!("clusters need r ≥ 2, got {r}")));
    }
    let value = (p * r) as i64 - 2 * p as i64 - r as i64;
    let order = match value.signum() {
        1 => TransitionOrder::FirstOrder,
        -1 => TransitionOrder::SecondOrder,
        _ => TransitionOrder::Marginal,
    };
    Ok(Discriminant { value, order })
}

/// One row of a phase-diagram sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseRow {
    pub param: f64,
    pub delta: f64,
    pub label: PhaseLabel,
    pub delta_alg: f64,
    pub delta_it: f64,
    pub delta_dyn: f64,
    pub delta_c: f64,
}

/// Classifies every `(param, Δ)` grid point and attaches the thresholds of
/// its parameter value. For the Bernoulli family `deltas` and every reported
/// `Δ` are in units of `ρ⁴`.
pub fn sweep_phase_diagram(
    family: Family,
    p: usize,
    params: &[f64],
    deltas: &[f64],
    integ: &Integrator,
    tol: f64,
) -> Result<Vec<PhaseRow>> {
    if params.is_empty() || deltas.is_empty() {
        return Err(Error::InvalidParameter("phase diagram grids must be non-empty".into()));
    }
    let per_param = Exec::Parallel.map(params.len(), |i| -> Result<Vec<PhaseRow>> {
        let prior = family.prior(params[i]);
        let mut solver = PhaseSolver::new(&prior, p, integ)?;
        solver.tol = tol;
        let th = solver.thresholds()?;
        let unit = match family {
            Family::Gaussian => 1.0,
            Family::Bernoulli => params[i].powi(4),
        };
        deltas
            .iter()
            .map(|&delta| {
                Ok(PhaseRow {
                    param: params[i],
                    delta,
                    label: solver.classify(delta * unit)?,
                    delta_alg: th.delta_alg / unit,
                    delta_it: th.delta_it / unit,
                    delta_dyn: th.delta_dyn / unit,
                    delta_c: th.delta_c / unit,
                })
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in per_param {
        rows.extend(r?);
    }
    Ok(rows)
}

/// One cell of the threshold table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table1Row {
    pub prior: String,
    pub p: usize,
    pub quantity: String,
    pub computed: f64,
    pub paper: Option<f64>,
    pub rel_dev: Option<f64>,
    pub note: String,
}

/// Reference values of the table, `(p, value)`.
pub mod table1_reference {
    pub const PS: [usize; 5] = [2, 3, 4, 5, 10];
    pub const GAUSSIAN_IT_PLOGP: [f64; 5] = [2.0 * std::f64::consts::LN_2, 0.754, 0.701, 0.685, 0.677];
    pub const GAUSSIAN_ALG: [f64; 5] = [1.0, 0.0, 0.0, 0.0, 0.0];
    pub const RADEMACHER_IT: [f64; 5] = [1.000, 0.2828, 0.1902, 0.1473, 0.07216];
    pub const RADEMACHER_ALG: [f64; 5] = [1.0, 0.0, 0.0, 0.0, 0.0];
    /// `Δ_IT ρ^{−p}` for `ρ = 0.1` (no entry at `p = 2`).
    pub const BERNOULLI_IT_SCALED: [Option<f64>; 5] = [None, Some(0.577), Some(0.398), Some(0.311), Some(0.154)];
    /// `Δ_Alg ρ^{−2p+2}` for `ρ = 0.1`.
    pub const BERNOULLI_ALG_SCALED: [Option<f64>; 5] = [None, Some(3.738), Some(6.017), Some(8.251), Some(19.30)];
    pub const CLUSTERS_IT_OVER_ALG: [f64; 5] = [1.0, 1.0, 1.18, 1.62, 6.59];
    pub const CLUSTERS_ALG_SCALED: [f64; 5] = [1.0, 1.0, 1.0, 1.0, 1.0];
}

fn row(prior: &str, p: usize, quantity: &str, computed: f64, paper: Option<f64>, note: &str) -> Table1Row {
    let rel_dev = paper.map(|v| if v == 0.0 { computed.abs() } else { (computed - v) / v });
    Table1Row { prior: prior.into(), p, quantity: quantity.into(), computed, paper, rel_dev, note: note.into() }
}

/// Recomputes every cell of the threshold table for `p ∈ {2, 3, 4, 5, 10}`.
pub fn table1(tol: f64) -> Result<Vec<Table1Row>> {
    use table1_reference as t;
    let jobs: Vec<(usize, usize)> = (0..4).flat_map(|prior| (0..5).map(move |k| (prior, k))).collect();
    let results = Exec::Parallel.map(jobs.len(), |j| -> Result<Vec<Table1Row>> {
        let (which, k) = jobs[j];
        let p = t::PS[k];
        let pf = p as f64;
        Ok(match which {
            0 => {
                let th = thresholds(p, &Prior::Gaussian { mu: 0.0 }, tol)?;
                vec![
                    row("gaussian", p, "delta_it*p*ln(p)", th.delta_it * pf * pf.ln(), Some(t::GAUSSIAN_IT_PLOGP[k]), ""),
                    row("gaussian", p, "delta_alg", th.delta_alg, Some(t::GAUSSIAN_ALG[k]), ""),
                ]
            }
            1 => {
                let th = thresholds(p, &Prior::Rademacher, tol)?;
                vec![
                    row("rademacher", p, "delta_it", th.delta_it, Some(t::RADEMACHER_IT[k]), ""),
                    row("rademacher", p, "delta_alg", th.delta_alg, Some(t::RADEMACHER_ALG[k]), ""),
                ]
            }
            2 => {
                let rho: f64 = 0.1;
                let th = thresholds(p, &Prior::Bernoulli { rho }, tol)?;
                let note = if p == 2 { "no published value" } else { "" };
                vec![
                    row("bernoulli:0.1", p, "delta_it*rho^-p", th.delta_it / rho.powi(p as i32), t::BERNOULLI_IT_SCALED[k], note),
                    row(
                        "bernoulli:0.1",
                        p,
                        "delta_alg*rho^(2-2p)",
                        th.delta_alg / rho.powi(2 * p as i32 - 2),
                        t::BERNOULLI_ALG_SCALED[k],
                        note,
                    ),
                ]
            }
            _ => {
                let r = 3usize;
                let th = thresholds(p, &Prior::Clusters { r }, tol)?;
                let scale = (r as f64).powi(2 * p as i32 - 2) / (pf - 1.0);
                vec![
                    row("clusters:3", p, "delta_it/delta_alg", th.delta_it / th.delta_alg, Some(t::CLUSTERS_IT_OVER_ALG[k]), "ansatz-restricted"),
                    row(
                        "clusters:3",
                        p,
                        "delta_alg*r^(2p-2)/(p-1)",
                        th.delta_alg * scale,
                        Some(t::CLUSTERS_ALG_SCALED[k]),
                        "ansatz-restricted",
                    ),
                ]
            }
        })
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// SE fixed-point structure on the line at one `Δ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeBranches {
    pub delta: f64,
    /// Stable fixed points (ε and informative starts), ascending, deduplicated.
    pub stable: Vec<f64>,
    /// Unstable fixed point between two stable ones, if bistable.
    pub unstable: Option<f64>,
}

/// Stable branches from both starts, and the unstable branch by bisection of
/// `step(t) − t` between them.
pub fn se_branches(model: &LineModel, delta: f64) -> Result<SeBranches> {
    let lo = model.fixed_point(delta, SeInit::Eps)?.t;
    let hi = model.fixed_point(delta, SeInit::Informative)?.t;
    let scale = model.bounds().1 - model.bounds().0;
    if (hi - lo).abs() <= INDICATOR_RTOL * scale {
        return Ok(SeBranches { delta, stable: vec![hi], unstable: None });
    }
    let (lo, hi) = (lo.min(hi), lo.max(hi));
    let g = |t: f64| -> Result<f64> { Ok(model.step(t, delta)? - t) };
    // Find the first upward crossing of step(t) − t on a scan, then bisect.
    let pts = 400;
    let mut prev_t = lo + 1e-9 * scale;
    let mut prev_g = g(prev_t)?;
    let mut bracket = None;
    for k in 1..pts {
        let t = lo + (hi - lo) * k as f64 / pts as f64;
        let gt = g(t)?;
        if prev_g < 0.0 && gt >= 0.0 {
            bracket = Some((prev_t, t));
            break;
        }
        prev_t = t;
        prev_g = gt;
    }
    let unstable = match bracket {
        Some((mut a, mut b)) => {
            while b - a > 1e-13 * scale {
                let mid = 0.5 * (a + b);
                if g(mid)? < 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            Some(0.5 * (a + b))
        }
        None => None,
    };
    Ok(SeBranches { delta, stable: vec![lo, hi], unstable })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_examples() {
        let c = gaussian_closed_thresholds(0.2, 3).unwrap();
        assert!((c.x_alg - 0.12278).abs() < 1e-5);
        assert!((c.delta_alg - 0.09740).abs() < 1e-5);
        let c = gaussian_closed_thresholds(0.0, 3).unwrap();
        assert!((c.x_dyn - 1.0).abs() < 1e-15 && (c.delta_dyn - 0.25).abs() < 1e-15);
        let c = gaussian_closed_thresholds(gaussian_mu_tri(3), 3).unwrap();
        assert!((c.x_alg - c.x_dyn).abs() < 1e-7);
        assert!(gaussian_closed_thresholds(0.4, 3).is_err());
    }

    #[test]
    fn tri_critical_closed_form() {
        let t = gaussian_tri_critical_closed(3);
        assert!((t.param - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-15);
        assert!((t.x - 5.0 / 9.0).abs() < 1e-15);
        assert!((t.delta - 45.0 / 196.0).abs() < 1e-15);
    }

    #[test]
    fn se_spinodals_agree_at_zero_mean() {
        for p in [3usize, 4, 5] {
            let a = gaussian_closed_thresholds(0.0, p).unwrap();
            let b = gaussian_se_spinodals(0.0, p).unwrap();
            assert!((a.delta_dyn - b.delta_dyn).abs() < 1e-14);
            assert_eq!(b.delta_alg, 0.0);
        }
    }

    #[test]
    fn discriminant() {
        assert_eq!(first_order_discriminant(3, 3).unwrap().order, TransitionOrder::Marginal);
        assert_eq!(first_order_discriminant(3, 2).unwrap().value, -2);
        assert_eq!(first_order_discriminant(4, 3).unwrap().order, TransitionOrder::FirstOrder);
    }

    #[test]
    fn classify_examples() {
        let gh = Integrator::default();
        assert_eq!(classify(0.1, 3, &Prior::Rademacher, &gh).unwrap(), PhaseLabel::Hard);
        assert_eq!(classify(0.5, 3, &Prior::Rademacher, &gh).unwrap(), PhaseLabel::ImpossibleToImprove);
        assert_eq!(classify(0.05, 3, &Prior::Gaussian { mu: 0.2 }, &gh).unwrap(), PhaseLabel::Easy);
    }

    #[test]
    fn rademacher_thresholds() {
        let th = thresholds(3, &Prior::Rademacher, 1e-6).unwrap();
        assert!((th.delta_it - 0.2828).abs() < 5e-4, "{th:?}");
        assert_eq!(th.delta_alg, 0.0);
        assert_eq!(th.delta_c, 0.0);
        assert!(th.ordering_violations().is_empty());
        let th = thresholds(2, &Prior::Rademacher, 1e-6).unwrap();
        assert!((th.delta_it - 1.0).abs() < 1e-3 && (th.delta_c - 1.0).abs() < 1e-4, "{th:?}");
    }
}
