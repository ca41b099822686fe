//! Expectations over the Gaussian channel noise and the prior.
//!
//! Gauss–Hermite rules are normalized for the standard normal: `Σ w_i = 1`
//! and `Σ w_i g(z_i) ≈ E[g(Z)]`, `Z ~ N(0, 1)`.

use crate::error::{Error, Result};
use crate::model::Prior;
use crate::rng::{block_rng, Domain};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Default Gauss–Hermite order for scalar expectations.
pub const DEFAULT_GH_NODES: usize = 127;
/// Default Monte Carlo sample count.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

/// Nodes and weights of a normalized Gauss–Hermite rule.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Rule with `n` nodes, computed once and cached.
    pub fn get(n: usize) -> Arc<GaussHermite> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap();
        guard.entry(n).or_insert_with(|| Arc::new(Self::compute(n))).clone()
    }

    /// Newton iteration on the orthonormal Hermite recurrence (physicists'
    /// weight `e^{−x²}`), then rescaled to the standard normal.
    fn compute(n: usize) -> GaussHermite {
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = (n + 1) / 2;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut nodes: Vec<f64> = x.iter().map(|v| v * sqrt2).collect();
        let mut weights: Vec<f64> = w.iter().map(|v| v / sqrt_pi).collect();
        nodes.reverse();
        weights.reverse();
        GaussHermite { nodes, weights }
    }

    /// `E[g(Z)]`.
    pub fn expect(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * g(*z)).sum()
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }
}

/// How expectations over `(x₀, Z)` are evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integrator {
    GaussHermite { nodes: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::GaussHermite { nodes: DEFAULT_GH_NODES }
    }
}

impl std::fmt::Display for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Integrator::GaussHermite { nodes } => write!(f, "gh:{nodes}"),
            Integrator::MonteCarlo { samples, seed } => write!(f, "mc:{samples}:{seed}"),
        }
    }
}

/// Parses `gh:<nodes>` or `mc:<samples>[:<seed>]`.
impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("integrator must be gh:<nodes> or mc:<samples>[:<seed>], got '{s}'"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |t: &str| t.parse::<u64>().map_err(|_| bad());
        let integ = match parts.as_slice() {
            ["gh", n] => Integrator::GaussHermite { nodes: num(n)? as usize },
            ["mc", n] => Integrator::monte_carlo(num(n)? as usize, 0),
            ["mc", n, seed] => Integrator::monte_carlo(num(n)? as usize, num(seed)?),
            _ => return Err(bad()),
        };
        integ.validate()?;
        Ok(integ)
    }
}

impl Integrator {
    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Integrator::MonteCarlo { samples, seed }
    }

    /// The default for a prior: Gauss–Hermite for rank one, Monte Carlo otherwise.
    pub fn default_for(prior: &Prior) -> Self {
        if prior.rank() == 1 {
            Self::default()
        } else {
            Self::monte_carlo(DEFAULT_MC_SAMPLES, 0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Integrator::GaussHermite { nodes } if *nodes < 3 => {
                Err(Error::InvalidParameter(format!("Gauss–Hermite needs ≥ 3 nodes, got {nodes}")))
            }
            Integrator::MonteCarlo { samples, .. } if *samples < 1000 => {
                Err(Error::InvalidParameter(format!("Monte Carlo needs ≥ 1000 samples, got {samples}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Integrator::GaussHermite { .. })
    }

    /// `E_{x₀~P_X, Z~N(0,1)}[h(x₀, Z)]` for a rank-one prior.
    pub fn expect_scalar(&self, prior: &Prior, h: impl Fn(f64, f64) -> f64) -> Result<Estimate> {
        self.validate()?;
        if prior.rank() != 1 {
            return Err(Error::Shape("expect_scalar needs a rank-one prior".into()));
        }
        let est = match self {
            Integrator::GaussHermite { nodes } => {
                let gh = GaussHermite::get(*nodes);
                let value = match prior {
                    Prior::Gaussian { mu } => {
                        let mut acc = 0.0;
                        for (z1, w1) in gh.nodes.iter().zip(&gh.weights) {
                            let x0 = mu + z1;
                            acc += w1 * gh.expect(|z| h(x0, z));
                        }
                        acc
                    }
                    _ => prior
                        .scalar_support()
                        .unwrap()
                        .iter()
                        .filter(|(_, w)| *w > 0.0)
                        .map(|(x0, w)| w * gh.expect(|z| h(*x0, z)))
                        .sum(),
                };
                Estimate::exact(value)
            }
            Integrator::MonteCarlo { samples, seed } => {
                let x0s = prior.sample(*samples, *seed)?;
                let mut stats = Welford::default();
                let mut rng = block_rng(*seed, Domain::MonteCarlo, 0);
                for &x0 in x0s.data() {
                    stats.push(h(x0, rng.sample(StandardNormal)));
                }
                stats.estimate()
            }
        };
        if !est.value.is_finite() {
            return Err(Error::Numeric("non-finite expectation".into()));
        }
        Ok(est)
    }

    /// `E_{x₀~P_X, Z~N(0,I_r)}[h(x₀, Z)]` for a vector-valued integrand with
    /// `dim` outputs, any rank. Gauss–Hermite uses a product rule (refused
    /// when it would exceed 2·10⁶ points).
    pub fn expect_vector(
        &self,
        prior: &Prior,
        dim: usize,
        h: impl Fn(&[f64], &[f64], &mut [f64]),
    ) -> Result<Vec<Estimate>> {
        self.validate()?;
        let r = prior.rank();
        let mut out = vec![0.0; dim];
        let mut buf = vec![0.0; dim];
        let result: Vec<Estimate> = match self {
            Integrator::GaussHermite { nodes } => {
                let gh = GaussHermite::get(*nodes);
                let support: Vec<(Vec<f64>, f64)> = match prior {
                    Prior::Clusters { r } => (0..*r)
                        .map(|k| {
                            let mut e = vec![0.0; *r];
                            e[k] = 1.0;
                            (e, 1.0 / *r as f64)
                        })
                        .collect(),
                    Prior::Gaussian { .. } => {
                        return Err(Error::Unsupported("vector Gauss–Hermite with a Gaussian prior; use expect_scalar".into()))
                    }
                    _ => prior.scalar_support().unwrap().into_iter().map(|(a, w)| (vec![a], w)).collect(),
                };
                let points = (*nodes as f64).powi(r as i32);
                if points > 2e6 {
                    return Err(Error::Unsupported(format!("{nodes}^{r} Gauss–Hermite points; use Monte Carlo")));
                }
                let total = nodes.pow(r as u32);
                let mut z = vec![0.0; r];
                for (x0, wx) in &support {
                    for idx in 0..total {
                        let mut rem = idx;
                        let mut wz = 1.0;
                        for zk in z.iter_mut() {
                            let j = rem % nodes;
                            rem /= nodes;
                            *zk = gh.nodes[j];
                            wz *= gh.weights[j];
                        }
                        h(x0, &z, &mut buf);
                        for (o, b) in out.iter_mut().zip(&buf) {
                            *o += wx * wz * b;
                        }
                    }
                }
                out.iter().map(|v| Estimate::exact(*v)).collect()
            }
            Integrator::MonteCarlo { samples, seed } => {
                let x0s = prior.sample(*samples, *seed)?;
                let mut stats = vec![Welford::default(); dim];
                let mut z = vec![0.0; r];
                // Noise draws come from a stream separate from the x₀ draws.
                let mut rng = block_rng(*seed, Domain::MonteCarlo, 1);
                for s in 0..*samples {
                    for zk in z.iter_mut() {
                        *zk = rng.sample(StandardNormal);
                    }
                    h(x0s.row(s), &z, &mut buf);
                    for (st, b) in stats.iter_mut().zip(&buf) {
                        st.push(*b);
                    }
                }
                stats.iter().map(|s| s.estimate()).collect()
            }
        };
        if result.iter().any(|e: &Estimate| !e.value.is_finite()) {
            return Err(Error::Numeric("non-finite expectation".into()));
        }
        Ok(result)
    }

    /// `E_{Z~N(0,1)}[g(Z)]` (deterministic rules only; Monte Carlo falls back
    /// to 127-node Gauss–Hermite because no prior sampling is involved).
    pub fn expect_gaussian(&self, g: impl FnMut(f64) -> f64) -> f64 {
        let n = match self {
            Integrator::GaussHermite { nodes } => *nodes,
            Integrator::MonteCarlo { .. } => DEFAULT_GH_NODES,
        };
        GaussHermite::get(n).expect(g)
    }
}

/// Running mean / variance.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub(crate) fn estimate(&self) -> Estimate {
        let var = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        Estimate { value: self.mean, stderr: (var / self.n.max(1) as f64).sqrt() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_hermite_moments() {
        for n in [3, 20, 127] {
            let gh = GaussHermite::get(n);
            assert!((gh.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            assert!(gh.expect(|z| z).abs() < 1e-13);
            assert!((gh.expect(|z| z * z) - 1.0).abs() < 1e-12);
            if n >= 3 {
                assert!((gh.expect(|z| z.powi(4)) - 3.0).abs() < 1e-11);
            }
        }
        let gh = GaussHermite::get(127);
        assert!((gh.expect(|z| z.powi(10)) - 945.0).abs() < 1e-7);
        assert!((gh.expect(|z| (0.7 * z).cos()) - (-0.245f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn scalar_expectation_over_prior() {
        let gh = Integrator::default();
        let e = gh.expect_scalar(&Prior::Gaussian { mu: 0.5 }, |x, z| x * x + z).unwrap();
        assert!((e.value - 1.25).abs() < 1e-12);
        let e = gh.expect_scalar(&Prior::Bernoulli { rho: 0.3 }, |x, z| x + z * z).unwrap();
        assert!((e.value - 1.3).abs() < 1e-12);
        let mc = Integrator::monte_carlo(20_000, 3);
        let e = mc.expect_scalar(&Prior::Rademacher, |x, z| x * z + z * z).unwrap();
        assert!((e.value - 1.0).abs() < 4.0 * e.stderr);
    }
}
