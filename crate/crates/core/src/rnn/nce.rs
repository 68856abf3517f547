use alloc::vec::Vec;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use super::network::Network;
use crate::corpus::IdStream;
use crate::error::{invalid, Error, Result};
use crate::linalg::Scalar;

/// Smallest noise probability any word may have.
pub const NOISE_FLOOR: f64 = 1e-8;
pub const DEFAULT_NOISE_SAMPLES: usize = 64;

/// Noise-contrastive estimation settings: `k` noise words per target drawn
/// from `q`, and a fixed log normaliser.
#[derive(Debug, Clone, PartialEq)]
pub struct NceConfig {
    pub k: usize,
    pub ln_z: f64,
    q: Vec<f64>,
    ln_kq: Vec<f64>,
}

impl NceConfig {
    /// From an arbitrary strictly positive distribution (renormalised).
    pub fn new(q: Vec<f64>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("NCE needs at least one noise sample"));
        }
        if q.is_empty() || q.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(invalid("noise distribution must be strictly positive"));
        }
        let total: f64 = q.iter().sum();
        let q: Vec<f64> = q.into_iter().map(|x| x / total).collect();
        let ln_k = libm::log(k as f64);
        let ln_kq = q.iter().map(|&x| ln_k + libm::log(x)).collect();
        Ok(NceConfig {
            k,
            ln_z: 0.0,
            q,
            ln_kq,
        })
    }

    /// Unigram distribution of the tokens of `stream` with every
    /// probability floored at [`NOISE_FLOOR`].
    pub fn unigram(stream: &IdStream, k: usize) -> Result<Self> {
        let mut counts = alloc::vec![0u64; stream.vocab_size];
        for &w in &stream.ids {
            counts[w as usize] += 1;
        }
        Self::from_counts(&counts, k)
    }

    pub fn from_counts(counts: &[u64], k: usize) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(invalid("no tokens to estimate the noise distribution from"));
        }
        let q = counts
            .iter()
            .map(|&c| (c as f64 / total as f64).max(NOISE_FLOOR))
            .collect();
        Self::new(q, k)
    }

    pub fn vocab_size(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// `ln(k·q(w))`
    #[inline]
    pub fn ln_kq(&self, w: u32) -> f64 {
        self.ln_kq[w as usize]
    }

    /// Log-odds that `w` with score `s` is data rather than noise.
    #[inline]
    pub fn logit(&self, score: f64, w: u32) -> f64 {
        score - self.ln_z - self.ln_kq(w)
    }
}

/// Draws noise words in O(1) each.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    alias: WeightedAliasIndex<f64>,
}

impl NoiseSampler {
    pub fn new(cfg: &NceConfig) -> Result<Self> {
        let alias = WeightedAliasIndex::new(cfg.q.clone())
            .map_err(|e| invalid(alloc::format!("noise distribution: {e}")))?;
        Ok(NoiseSampler { alias })
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u32]) {
        for o in out {
            *o = self.alias.sample(rng) as u32;
        }
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NceLoss {
    pub loss: f64,
    /// Posterior that the target came from the data.
    pub target_posterior: f64,
    /// Posterior that each noise sample came from the noise.
    pub noise_posteriors: Vec<f64>,
}

/// NCE loss from the target's score and the noise samples' scores.
pub fn nce_loss_from_scores(
    cfg: &NceConfig,
    target: u32,
    target_score: f64,
    samples: &[u32],
    sample_scores: &[f64],
) -> Result<NceLoss> {
    if samples.len() != cfg.k || sample_scores.len() != cfg.k {
        return Err(invalid("expected exactly k noise samples"));
    }
    let dt = cfg.logit(target_score, target);
    let mut loss = softplus(-dt);
    let mut noise_posteriors = Vec::with_capacity(cfg.k);
    for (&w, &s) in samples.iter().zip(sample_scores) {
        let d = cfg.logit(s, w);
        loss += softplus(d);
        noise_posteriors.push(logistic(-d));
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("NCE loss"));
    }
    Ok(NceLoss {
        loss,
        target_posterior: logistic(dt),
        noise_posteriors,
    })
}

/// NCE loss of predicting `target` from hidden state `h`.
pub fn nce_loss<F: Scalar, N: Network<F> + ?Sized>(
    net: &N,
    h: &[F],
    target: u32,
    samples: &[u32],
    cfg: &NceConfig,
) -> Result<NceLoss> {
    let mut feat = alloc::vec![F::zero(); net.feature_size()];
    net.features(h, &mut feat);
    let table = net.output_table();
    let score = |w: u32| F::dot(table.row(w as usize), &feat).as_f64();
    let scores: Vec<f64> = samples.iter().map(|&w| score(w)).collect();
    nce_loss_from_scores(cfg, target, score(target), samples, &scores)
}
