//! Output channels and the universality reduction to an effective AWGN problem.

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::rng::{block_rng, stream_rng, Domain, BLOCK};
use crate::tensor::SymmetricTensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Finite-difference step for the score `∂_w ln P_out(y|w)` at `w = 0`.
pub const SCORE_FD_STEP: f64 = 1e-5;
/// Monte Carlo sample count for the Fisher information of custom channels.
pub const FISHER_SAMPLES: usize = 100_000;

/// Serializable channel description (configs, CLI).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChannelSpec {
    Awgn { delta: f64 },
}

type LogDensity = dyn Fn(f64, f64) -> f64 + Send + Sync;
type Sampler = dyn Fn(f64, &mut ChaCha8Rng) -> f64 + Send + Sync;

/// A user-defined componentwise channel `P_out(y | w)`.
#[derive(Clone)]
pub struct CustomChannel {
    pub name: String,
    log_density: Arc<LogDensity>,
    sampler: Arc<Sampler>,
    /// Seed of the Monte Carlo Fisher-information estimate.
    pub fisher_seed: u64,
}

impl CustomChannel {
    /// `log_density(y, w) = ln P_out(y|w)`; `sampler(w, rng)` draws `y ~ P_out(·|w)`.
    pub fn new(
        name: impl Into<String>,
        log_density: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        sampler: impl Fn(f64, &mut ChaCha8Rng) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), log_density: Arc::new(log_density), sampler: Arc::new(sampler), fisher_seed: 0 }
    }

    /// Central-difference score at `w = 0`.
    pub fn score(&self, y: f64) -> f64 {
        let h = SCORE_FD_STEP;
        ((self.log_density)(y, h) - (self.log_density)(y, -h)) / (2.0 * h)
    }

    pub fn sample(&self, w: f64, rng: &mut ChaCha8Rng) -> f64 {
        (self.sampler)(w, rng)
    }

    /// Fisher information `E_{y~P_out(·|0)}[score(y)²]` by Monte Carlo.
    pub fn fisher_information(&self) -> f64 {
        let mut rng = stream_rng(self.fisher_seed, Domain::MonteCarlo);
        let mut acc = 0.0;
        for _ in 0..FISHER_SAMPLES {
            let y = self.sample(0.0, &mut rng);
            acc += self.score(y).powi(2);
        }
        acc / FISHER_SAMPLES as f64
    }
}

impl fmt::Debug for CustomChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomChannel").field("name", &self.name).finish()
    }
}

/// Componentwise output channel.
#[derive(Clone, Debug)]
pub enum Channel {
    /// `y = w + √Δ ξ`. `Δ = 0` is accepted by [`observe`] as a noiseless debug mode.
    Awgn { delta: f64 },
    Custom(CustomChannel),
}

impl From<&ChannelSpec> for Channel {
    fn from(spec: &ChannelSpec) -> Self {
        match spec {
            ChannelSpec::Awgn { delta } => Channel::Awgn { delta: *delta },
        }
    }
}

impl Channel {
    /// Effective noise `Δ = 1 / Fisher information`.
    pub fn fisher_delta(&self) -> Result<f64> {
        match self {
            Channel::Awgn { delta } => {
                if *delta > 0.0 && delta.is_finite() {
                    Ok(*delta)
                } else {
                    Err(Error::DegenerateChannel(format!("AWGN variance Δ = {delta} gives no finite Fisher information")))
                }
            }
            Channel::Custom(c) => {
                let fi = c.fisher_information();
                if fi > 0.0 && fi.is_finite() {
                    Ok(1.0 / fi)
                } else {
                    Err(Error::DegenerateChannel(format!("channel '{}' has Fisher information {fi}", c.name)))
                }
            }
        }
    }
}

/// Passes every entry of `w` through the channel (in place, consuming `w`).
pub fn observe(mut w: SymmetricTensor, channel: &Channel, seed: u64, exec: Exec) -> Result<SymmetricTensor> {
    match channel {
        Channel::Awgn { delta } => {
            if !(*delta >= 0.0 && delta.is_finite()) {
                return Err(Error::InvalidParameter(format!("noise variance Δ = {delta}")));
            }
            if *delta == 0.0 {
                return Ok(w);
            }
            let sd = delta.sqrt();
            exec.for_each_chunk_mut(w.data_mut(), BLOCK, |b, chunk| {
                let mut rng = block_rng(seed, Domain::Noise, b as u64);
                for v in chunk.iter_mut() {
                    *v += sd * rng.sample::<f64, _>(StandardNormal);
                }
            });
        }
        Channel::Custom(c) => {
            exec.for_each_chunk_mut(w.data_mut(), BLOCK, |b, chunk| {
                let mut rng = block_rng(seed, Domain::Noise, b as u64);
                for v in chunk.iter_mut() {
                    *v = c.sample(*v, &mut rng);
                }
            });
        }
    }
    Ok(w)
}

/// Fisher score tensor `S = ∂_w ln P_out(Y|w)|_{w=0}` and effective noise `Δ`.
pub fn score_tensor(mut y: SymmetricTensor, channel: &Channel, exec: Exec) -> Result<(SymmetricTensor, f64)> {
    let delta = channel.fisher_delta()?;
    match channel {
        Channel::Awgn { .. } => y.scale(1.0 / delta),
        Channel::Custom(c) => {
            exec.for_each_chunk_mut(y.data_mut(), BLOCK, |_, chunk| {
                for v in chunk.iter_mut() {
                    *v = c.score(*v);
                }
            });
        }
    }
    Ok((y, delta))
}

/// AWGN with variance `delta`, expressed as a [`CustomChannel`]; used to test
/// the numerical score/Fisher path against the analytic one.
pub fn gaussian_custom_channel(delta: f64) -> CustomChannel {
    let sd = delta.sqrt();
    CustomChannel::new(
        "awgn-numeric",
        move |y, w| -0.5 * (y - w).powi(2) / delta - 0.5 * (2.0 * std::f64::consts::PI * delta).ln(),
        move |w, rng| w + sd * rng.sample::<f64, _>(StandardNormal),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn awgn_score_is_y_over_delta() {
        let y = SymmetricTensor::from_data(3, 3, vec![1.0]).unwrap();
        let (s, d) = score_tensor(y, &Channel::Awgn { delta: 0.5 }, Exec::Sequential).unwrap();
        assert_eq!(s.data()[0], 2.0);
        assert_eq!(d, 0.5);
    }

    #[test]
    fn numeric_channel_matches_analytic() {
        let c = gaussian_custom_channel(0.5);
        for y in [-2.0, -0.3, 0.0, 1.0, 3.5] {
            assert!((c.score(y) - y / 0.5).abs() < 1e-6);
        }
        let delta = Channel::Custom(c).fisher_delta().unwrap();
        // Fisher info 2 ± 2·√(2/1e5)·3.
        assert!((delta - 0.5).abs() < 0.5 * 0.03, "{delta}");
    }

    #[test]
    fn degenerate_channel() {
        let flat = CustomChannel::new("flat", |_, _| 0.0, |_, _| 0.0);
        assert!(matches!(Channel::Custom(flat).fisher_delta(), Err(Error::DegenerateChannel(_))));
    }

    #[test]
    fn noiseless_debug_mode() {
        let w = SymmetricTensor::from_data(4, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = observe(w.clone(), &Channel::Awgn { delta: 0.0 }, 3, Exec::Sequential).unwrap();
        assert_eq!(y, w);
    }
}
