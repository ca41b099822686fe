//! Signal priors with closed-form partition functions and input denoisers.
//!
//! For every prior the tilted measure is
//! `M(x) ∝ P_X(x) exp(Bᵀx − xᵀAx/2)`; `Z_X(A, B)` is its normalization and
//! `f_in(A, B)` its mean, with covariance `∂_B f_in`.

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Domain};
use crate::tensor::MultiVector;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Prior distribution of a row `x_i ∈ R^r` of the planted signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Prior {
    /// `N(μ, 1)`.
    Gaussian { mu: f64 },
    /// Uniform on `{−1, +1}`.
    Rademacher,
    /// `x = 1` with probability `ρ`, else 0.
    Bernoulli { rho: f64 },
    /// Uniform over the standard basis vectors `e_1, …, e_r`.
    Clusters { r: usize },
    /// User-supplied finite scalar prior.
    Discrete { atoms: Vec<f64>, weights: Vec<f64> },
}

/// First and second moments of a prior.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorMoments {
    pub mean: DVector<f64>,
    /// `Σ_X = E[x xᵀ]`.
    pub sigma_x: DMatrix<f64>,
}

/// Mean and covariance of the tilted measure.
#[derive(Clone, Debug, PartialEq)]
pub struct Denoised {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln cosh x` without overflow.
#[inline]
pub(crate) fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        match self {
            Prior::Gaussian { mu } if !mu.is_finite() => {
                Err(Error::InvalidParameter(format!("Gaussian mean {mu} is not finite")))
            }
            Prior::Bernoulli { rho } if !(*rho > 0.0 && *rho < 1.0) => {
                Err(Error::InvalidParameter(format!("Bernoulli density ρ = {rho} must lie in (0, 1)")))
            }
            Prior::Clusters { r } if *r < 2 => {
                Err(Error::InvalidParameter(format!("clusters prior needs r ≥ 2, got {r}")))
            }
            Prior::Discrete { atoms, weights } => {
                if atoms.is_empty() || atoms.len() != weights.len() {
                    return Err(Error::InvalidParameter("discrete prior needs matching non-empty atoms/weights".into()));
                }
                if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || atoms.iter().any(|a| !a.is_finite()) {
                    return Err(Error::InvalidParameter("discrete prior atoms/weights must be finite, weights ≥ 0".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!("discrete weights sum to {total}, not 1")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Rank `r` of a signal row.
    pub fn rank(&self) -> usize {
        match self {
            Prior::Clusters { r } => *r,
            _ => 1,
        }
    }

    /// Short family name used in outputs.
    pub fn family(&self) -> &'static str {
        match self {
            Prior::Gaussian { .. } => "gaussian",
            Prior::Rademacher => "rademacher",
            Prior::Bernoulli { .. } => "bernoulli",
            Prior::Clusters { .. } => "clusters",
            Prior::Discrete { .. } => "discrete",
        }
    }

    /// Finite scalar support as `(atom, weight)` pairs, when there is one.
    pub fn scalar_support(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Prior::Rademacher => Some(vec![(-1.0, 0.5), (1.0, 0.5)]),
            Prior::Bernoulli { rho } => Some(vec![(0.0, 1.0 - rho), (1.0, *rho)]),
            Prior::Discrete { atoms, weights } => {
                Some(atoms.iter().cloned().zip(weights.iter().cloned()).collect())
            }
            _ => None,
        }
    }

    pub fn moments(&self) -> PriorMoments {
        match self {
            Prior::Gaussian { mu } => PriorMoments {
                mean: DVector::from_element(1, *mu),
                sigma_x: DMatrix::from_element(1, 1, 1.0 + mu * mu),
            },
            Prior::Clusters { r } => PriorMoments {
                mean: DVector::from_element(*r, 1.0 / *r as f64),
                sigma_x: DMatrix::identity(*r, *r) / *r as f64,
            },
            _ => {
                let support = self.scalar_support().expect("scalar discrete prior");
                let mean = support.iter().map(|(a, w)| a * w).sum::<f64>();
                let second = support.iter().map(|(a, w)| a * a * w).sum::<f64>();
                PriorMoments {
                    mean: DVector::from_element(1, mean),
                    sigma_x: DMatrix::from_element(1, 1, second),
                }
            }
        }
    }

    /// Scalar mean and second moment (rank-one priors).
    pub fn scalar_moments(&self) -> (f64, f64) {
        let m = self.moments();
        (m.mean[0], m.sigma_x[(0, 0)])
    }

    /// Draws `n` i.i.d. rows.
    pub fn sample(&self, n: usize, seed: u64) -> Result<MultiVector> {
        self.validate()?;
        let r = self.rank();
        let mut rng = stream_rng(seed, Domain::Signal);
        let mut data = vec![0.0; n * r];
        match self {
            Prior::Gaussian { mu } => {
                for v in data.iter_mut() {
                    *v = mu + rng.sample::<f64, _>(StandardNormal);
                }
            }
            Prior::Clusters { r } => {
                for i in 0..n {
                    data[i * r + rng.gen_range(0..*r)] = 1.0;
                }
            }
            _ => {
                let support = self.scalar_support().unwrap();
                for v in data.iter_mut() {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    *v = support.last().unwrap().0;
                    for (a, w) in &support {
                        acc += w;
                        if u < acc {
                            *v = *a;
                            break;
                        }
                    }
                }
            }
        }
        MultiVector::from_rows(n, r, data)
    }

    /// `ln Z_X(a, b)` for rank-one priors.
    pub fn log_zx_scalar(&self, a: f64, b: f64) -> Result<f64> {
        match self {
            Prior::Gaussian { mu } => {
                if 1.0 + a <= 0.0 {
                    return Err(Error::NonNormalizable(format!("1 + A = {} ≤ 0", 1.0 + a)));
                }
                Ok(-0.5 * (1.0 + a).ln() + (b + mu).powi(2) / (2.0 * (1.0 + a)) - mu * mu / 2.0)
            }
            Prior::Rademacher => Ok(log_cosh(b) - a / 2.0),
            Prior::Bernoulli { rho } => {
                Ok((1.0 - rho).ln() + softplus(b - a / 2.0 + (rho / (1.0 - rho)).ln()))
            }
            Prior::Discrete { atoms, weights } => {
                let terms: Vec<f64> = atoms
                    .iter()
                    .zip(weights)
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(x, w)| w.ln() + b * x - a * x * x / 2.0)
                    .collect();
                Ok(log_sum_exp(&terms))
            }
            Prior::Clusters { .. } => Err(Error::Shape("clusters prior is not rank one".into())),
        }
    }

    /// `(f_in, ∂_B f_in)` for rank-one priors.
    #[inline]
    pub fn fin_scalar(&self, a: f64, b: f64) -> Result<(f64, f64)> {
        match self {
            Prior::Gaussian { mu } => {
                if 1.0 + a <= 0.0 {
                    return Err(Error::NonNormalizable(format!("1 + A = {} ≤ 0", 1.0 + a)));
                }
                Ok(((b + mu) / (1.0 + a), 1.0 / (1.0 + a)))
            }
            Prior::Rademacher => {
                let t = b.tanh();
                Ok((t, 1.0 - t * t))
            }
            Prior::Bernoulli { rho } => {
                let s = sigmoid(b - a / 2.0 + (rho / (1.0 - rho)).ln());
                Ok((s, s * (1.0 - s)))
            }
            Prior::Discrete { atoms, weights } => {
                let logs: Vec<f64> = atoms
                    .iter()
                    .zip(weights)
                    .map(|(x, w)| if *w > 0.0 { w.ln() + b * x - a * x * x / 2.0 } else { f64::NEG_INFINITY })
                    .collect();
                let lz = log_sum_exp(&logs);
                let (mut m1, mut m2) = (0.0, 0.0);
                for (x, l) in atoms.iter().zip(&logs) {
                    let w = (l - lz).exp();
                    m1 += w * x;
                    m2 += w * x * x;
                }
                Ok((m1, (m2 - m1 * m1).max(0.0)))
            }
            Prior::Clusters { .. } => Err(Error::Shape("clusters prior is not rank one".into())),
        }
    }

    fn check_dims(&self, a: &DMatrix<f64>, b: &[f64]) -> Result<()> {
        let r = self.rank();
        if a.nrows() != r || a.ncols() != r || b.len() != r {
            return Err(Error::Shape(format!(
                "prior of rank {r} given A {}×{} and B of length {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        Ok(())
    }

    /// `ln Z_X(A, B)`.
    pub fn log_zx(&self, a: &DMatrix<f64>, b: &[f64]) -> Result<f64> {
        self.check_dims(a, b)?;
        match self {
            Prior::Clusters { r } => {
                let logits: Vec<f64> = (0..*r).map(|k| b[k] - a[(k, k)] / 2.0).collect();
                Ok(log_sum_exp(&logits) - (*r as f64).ln())
            }
            _ => self.log_zx_scalar(a[(0, 0)], b[0]),
        }
    }

    /// `Z_X(A, B)`.
    pub fn zx(&self, a: &DMatrix<f64>, b: &[f64]) -> Result<f64> {
        Ok(self.log_zx(a, b)?.exp())
    }

    /// Mean and covariance of the tilted measure.
    pub fn fin(&self, a: &DMatrix<f64>, b: &[f64]) -> Result<Denoised> {
        self.check_dims(a, b)?;
        match self {
            Prior::Clusters { r } => {
                let mut mean = vec![0.0; *r];
                let diag: Vec<f64> = (0..*r).map(|k| a[(k, k)]).collect();
                softmax_logits(b, &diag, &mut mean);
                let mut cov = DMatrix::from_diagonal(&DVector::from_column_slice(&mean));
                cov -= DVector::from_column_slice(&mean) * DVector::from_column_slice(&mean).transpose();
                Ok(Denoised { mean, cov })
            }
            _ => {
                let (m, v) = self.fin_scalar(a[(0, 0)], b[0])?;
                Ok(Denoised { mean: vec![m], cov: DMatrix::from_element(1, 1, v) })
            }
        }
    }
}

/// `out = softmax(b_k − a_k/2)`.
#[inline]
pub(crate) fn softmax_logits(b: &[f64], a_diag: &[f64], out: &mut [f64]) {
    let r = b.len();
    let mut mx = f64::NEG_INFINITY;
    for k in 0..r {
        out[k] = b[k] - a_diag[k] / 2.0;
        mx = mx.max(out[k]);
    }
    let mut z = 0.0;
    for v in out.iter_mut() {
        *v = (*v - mx).exp();
        z += *v;
    }
    for v in out.iter_mut() {
        *v /= z;
    }
}

impl fmt::Display for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prior::Gaussian { mu } => write!(f, "gaussian:{mu}"),
            Prior::Rademacher => write!(f, "rademacher"),
            Prior::Bernoulli { rho } => write!(f, "bernoulli:{rho}"),
            Prior::Clusters { r } => write!(f, "clusters:{r}"),
            Prior::Discrete { atoms, weights } => {
                let parts: Vec<String> = atoms.iter().zip(weights).map(|(a, w)| format!("{a}@{w}")).collect();
                write!(f, "discrete:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for Prior {
    type Err = Error;

    /// Parses `gaussian[:mu]`, `rademacher`, `bernoulli:rho`, `clusters:r` or
    /// `discrete:x1@w1,x2@w2,…`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let bad = |what: &str| Error::InvalidParameter(format!("cannot parse prior '{s}': {what}"));
        let num = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| bad("missing parameter"))?.parse::<f64>().map_err(|_| bad("bad number"))
        };
        let prior = match kind.to_ascii_lowercase().as_str() {
            "gaussian" => Prior::Gaussian { mu: if arg.is_some() { num(arg)? } else { 0.0 } },
            "rademacher" => Prior::Rademacher,
            "bernoulli" => Prior::Bernoulli { rho: num(arg)? },
            "clusters" => Prior::Clusters {
                r: arg.ok_or_else(|| bad("missing r"))?.parse().map_err(|_| bad("bad r"))?,
            },
            "discrete" => {
                let mut atoms = Vec::new();
                let mut weights = Vec::new();
                for part in arg.ok_or_else(|| bad("missing atoms"))?.split(',') {
                    let (a, w) = part.split_once('@').ok_or_else(|| bad("expected atom@weight"))?;
                    atoms.push(a.trim().parse().map_err(|_| bad("bad atom"))?);
                    weights.push(w.trim().parse().map_err(|_| bad("bad weight"))?);
                }
                Prior::Discrete { atoms, weights }
            }
            _ => return Err(bad("unknown kind")),
        };
        prior.validate()?;
        Ok(prior)
    }
}
