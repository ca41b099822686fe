//! Priors, channels and planted instances of the spiked tensor model
//!
//! ```text
//! Y = √((p−1)!) / N^{(p−1)/2} · Σ_k x_k^{⊗p} + V,
//! ```
//!
//! observed on strictly increasing index tuples only.

pub mod channel;
pub mod prior;

pub use channel::{gaussian_custom_channel, observe, score_tensor, Channel, ChannelSpec, CustomChannel};
pub use prior::{Denoised, Prior, PriorMoments};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::rng::child_seed;
use crate::tensor::{checked_len, contract::fill_rank_sum, BinomTable, MultiVector, SymmetricTensor};
use serde::{Deserialize, Serialize};

/// `√((p−1)!) / N^{(p−1)/2}`, the signal scaling of the model.
pub fn spike_prefactor(n: usize, p: usize) -> f64 {
    let fact: f64 = (1..p).map(|k| k as f64).product();
    fact.sqrt() / (n as f64).powf((p as f64 - 1.0) / 2.0)
}

/// One inference problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n: usize,
    pub p: usize,
    pub prior: Prior,
    pub channel: ChannelSpec,
}

impl ModelSpec {
    pub fn awgn(n: usize, p: usize, prior: Prior, delta: f64) -> Self {
        Self { n, p, prior, channel: ChannelSpec::Awgn { delta } }
    }

    pub fn r(&self) -> usize {
        self.prior.rank()
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        if self.p < 2 {
            return Err(Error::InvalidParameter(format!("order p = {} must be ≥ 2", self.p)));
        }
        if self.n < self.p {
            return Err(Error::Precondition(format!("n = {} must be ≥ p = {}", self.n, self.p)));
        }
        Ok(())
    }
}

/// A planted instance.
#[derive(Clone, Debug)]
pub struct Instance {
    pub spec: ModelSpec,
    pub x0: MultiVector,
    pub y: SymmetricTensor,
    pub seed: u64,
}

/// `n` i.i.d. signal rows.
pub fn sample_signal(prior: &Prior, n: usize, seed: u64) -> Result<MultiVector> {
    prior.sample(n, seed)
}

/// The noiseless spike `W⁰`.
pub fn spike_tensor(x0: &MultiVector, p: usize, exec: Exec) -> Result<SymmetricTensor> {
    let n = x0.n();
    if n < p {
        return Err(Error::Precondition(format!("n = {n} must be ≥ p = {p}")));
    }
    let len = checked_len(n, p)?;
    let mut data = vec![0.0; len];
    let binom = BinomTable::new(n, p);
    fill_rank_sum(n, p, x0, spike_prefactor(n, p), &binom, &mut data, exec);
    SymmetricTensor::from_data(n, p, data)
}

impl Instance {
    /// Samples `X⁰`, builds the spike and passes it through the channel. The
    /// signal and the noise use independent streams derived from `seed`.
    pub fn generate(spec: &ModelSpec, seed: u64, exec: Exec) -> Result<Self> {
        spec.validate()?;
        let x0 = sample_signal(&spec.prior, spec.n, seed)?;
        let w = spike_tensor(&x0, spec.p, exec)?;
        let y = observe(w, &Channel::from(&spec.channel), child_seed(seed, 1), exec)?;
        Ok(Self { spec: spec.clone(), x0, y, seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spike_single_entry() {
        let x = MultiVector::from_rows(3, 1, vec![1.0; 3]).unwrap();
        let w = spike_tensor(&x, 3, Exec::Sequential).unwrap();
        assert!((w.data()[0] - 2f64.sqrt() / 3.0).abs() < 1e-15);
    }

    #[test]
    fn spike_entries_match_definition() {
        let x = sample_signal(&Prior::Gaussian { mu: 0.3 }, 9, 4).unwrap();
        let w = spike_tensor(&x, 4, Exec::Parallel).unwrap();
        let c = spike_prefactor(9, 4);
        w.for_each_entry(|t, v| {
            let expect = c * t.iter().map(|&i| x.row(i)[0]).product::<f64>();
            assert!((v - expect).abs() < 1e-14);
        });
    }
}
