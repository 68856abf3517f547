use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{IdStream, Vocabulary};
use crate::error::{invalid, Result};
use crate::linalg::{log_sum_exp, Scalar};
use crate::ngram::NGramModel;
use crate::rnn::Network;

use super::{for_each_prediction, golden_section};

/// How an RNN over a (smaller) vocabulary is mixed with an n-gram over the
/// full vocabulary.
///
/// Full-vocabulary words without their own RNN word share the RNN's `<unk>`
/// mass in proportion to their n-gram probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationConfig {
    /// Weight on the RNN.
    pub lambda: f64,
    to_full: Vec<u32>,
    to_rnn: Vec<u32>,
    covered: Vec<bool>,
    uncovered: Vec<u32>,
    rnn_unk: u32,
}

impl InterpolationConfig {
    /// `to_full[r]` is the full-vocabulary id of RNN word `r`.
    pub fn new(
        lambda: f64,
        to_full: Vec<u32>,
        rnn_unk: u32,
        full_vocab_size: usize,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        if rnn_unk as usize >= to_full.len() {
            return Err(invalid("rnn unk id out of range"));
        }
        let mut to_rnn = vec![u32::MAX; full_vocab_size];
        for (r, &f) in to_full.iter().enumerate() {
            let slot = to_rnn
                .get_mut(f as usize)
                .ok_or_else(|| invalid("rnn word maps outside the full vocabulary"))?;
            if *slot != u32::MAX {
                return Err(invalid("two rnn words map to the same full word"));
            }
            *slot = r as u32;
        }
        let mut covered = vec![false; full_vocab_size];
        for (r, &f) in to_full.iter().enumerate() {
            if r as u32 != rnn_unk {
                covered[f as usize] = true;
            }
        }
        for slot in &mut to_rnn {
            if *slot == u32::MAX {
                *slot = rnn_unk;
            }
        }
        let uncovered = (0..full_vocab_size as u32)
            .filter(|&w| !covered[w as usize])
            .collect();
        Ok(InterpolationConfig {
            lambda,
            to_full,
            to_rnn,
            covered,
            uncovered,
            rnn_unk,
        })
    }

    /// Both models share one vocabulary.
    pub fn shared(lambda: f64, vocab_size: usize, unk: u32) -> Result<Self> {
        Self::new(lambda, (0..vocab_size as u32).collect(), unk, vocab_size)
    }

    /// Map words by spelling; every RNN word must exist in `full`.
    pub fn from_vocabularies(lambda: f64, rnn: &Vocabulary, full: &Vocabulary) -> Result<Self> {
        let to_full = rnn
            .words()
            .iter()
            .map(|w| {
                full.get(w).ok_or_else(|| {
                    invalid(alloc::format!(
                        "rnn word {w:?} missing from the n-gram vocabulary"
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(lambda, to_full, rnn.unk(), full.len())
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        self.lambda = lambda;
        Ok(self)
    }

    pub fn rnn_vocab_size(&self) -> usize {
        self.to_full.len()
    }

    pub fn full_vocab_size(&self) -> usize {
        self.to_rnn.len()
    }

    /// RNN id standing for full word `w` (`<unk>` when it has none).
    pub fn to_rnn(&self, w: u32) -> u32 {
        self.to_rnn[w as usize]
    }

    pub fn is_covered(&self, w: u32) -> bool {
        self.covered[w as usize]
    }

    pub fn map_ids(&self, ids: &[u32]) -> Vec<u32> {
        ids.iter().map(|&w| self.to_rnn(w)).collect()
    }

    /// The RNN-side probability of full word `w`, before mixing.
    ///
    /// `p_r_of` gives RNN probabilities by RNN id; `uncovered_mass` is
    /// evaluated only when `w` has no RNN word of its own.
    pub(super) fn rnn_part(
        &self,
        w: u32,
        p_r_of: impl Fn(u32) -> f64,
        p_n_w: f64,
        uncovered_mass: impl FnOnce() -> f64,
    ) -> f64 {
        if self.covered[w as usize] {
            return p_r_of(self.to_rnn(w));
        }
        let unk = p_r_of(self.rnn_unk);
        let mass = uncovered_mass();
        if mass > 0.0 {
            unk * p_n_w / mass
        } else if w == self.to_full[self.rnn_unk as usize] {
            unk
        } else {
            0.0
        }
    }

    pub(super) fn uncovered_mass(&self, p_n: &[f64]) -> f64 {
        self.uncovered.iter().map(|&w| p_n[w as usize]).sum()
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid("lambda must be in [0, 1]"));
    }
    Ok(())
}

/// Interpolated next-word distribution over the full vocabulary.
pub fn interpolate_prob(p_r: &[f64], p_n: &[f64], cfg: &InterpolationConfig) -> Result<Vec<f64>> {
    if p_r.len() != cfg.rnn_vocab_size() || p_n.len() != cfg.full_vocab_size() {
        return Err(invalid(
            "distribution sizes do not match the interpolation config",
        ));
    }
    let mass = cfg.uncovered_mass(p_n);
    let l = cfg.lambda;
    Ok((0..p_n.len() as u32)
        .map(|w| {
            let a = cfg.rnn_part(w, |r| p_r[r as usize], p_n[w as usize], || mass);
            l * a + (1.0 - l) * p_n[w as usize]
        })
        .collect())
}

/// Per-token probabilities of both components, so that the mixture for any
/// λ is `λ·rnn[i] + (1−λ)·ngram[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationParts {
    pub rnn: Vec<f64>,
    pub ngram: Vec<f64>,
}

impl InterpolationParts {
    pub fn len(&self) -> usize {
        self.rnn.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rnn.is_empty()
    }

    pub fn perplexity(&self, lambda: f64) -> f64 {
        let sum: f64 = self
            .rnn
            .iter()
            .zip(&self.ngram)
            .map(|(&a, &b)| libm::log(lambda * a + (1.0 - lambda) * b))
            .sum();
        libm::exp(-sum / self.len() as f64)
    }

    /// λ minimising perplexity on these tokens, and that perplexity. The
    /// objective is convex in λ; the endpoints are checked explicitly.
    pub fn tune(&self) -> (f64, f64) {
        let (l, p) = golden_section(|l| self.perplexity(l), 0.0, 1.0, 1e-9);
        [(0.0, self.perplexity(0.0)), (1.0, self.perplexity(1.0))]
            .into_iter()
            .fold((l, p), |best, c| if c.1 < best.1 { c } else { best })
    }
}

/// Component probabilities of every predicted token of `stream` (full
/// vocabulary). The RNN reads the stream mapped to its own vocabulary.
pub fn interpolation_parts<F: Scalar, N: Network<F> + ?Sized>(
    rnn: &N,
    ngram: &NGramModel,
    cfg: &InterpolationConfig,
    stream: &IdStream,
) -> Result<InterpolationParts> {
    if rnn.vocab_size() != cfg.rnn_vocab_size()
        || ngram.vocab_size() != cfg.full_vocab_size()
        || stream.vocab_size != cfg.full_vocab_size()
    {
        return Err(invalid(
            "model, stream and interpolation vocabularies differ",
        ));
    }
    let ids = &stream.ids;
    let mapped = cfg.map_ids(ids);
    let bos = stream.markers.bos;
    let mut dist = vec![0.0; cfg.full_vocab_size()];
    let mut parts = InterpolationParts {
        rnn: Vec::new(),
        ngram: Vec::new(),
    };
    for_each_prediction(rnn, &mapped, None, |pos, _, s| {
        let w = ids[pos];
        if w == bos {
            return;
        }
        let ctx = &ids[..pos];
        let p_n = ngram.prob(ctx, w);
        let lse = log_sum_exp(s);
        let a = cfg.rnn_part(
            w,
            |r| libm::exp(s[r as usize].as_f64() - lse),
            p_n,
            || {
                ngram.distribution_into(ctx, &mut dist);
                cfg.uncovered_mass(&dist)
            },
        );
        parts.rnn.push(a);
        parts.ngram.push(p_n);
    });
    if parts.is_empty() {
        return Err(invalid("perplexity of an empty stream"));
    }
    Ok(parts)
}

/// Perplexity of the interpolated model at `cfg.lambda`.
pub fn interpolated_perplexity<F: Scalar, N: Network<F> + ?Sized>(
    rnn: &N,
    ngram: &NGramModel,
    cfg: &InterpolationConfig,
    stream: &IdStream,
) -> Result<f64> {
    Ok(interpolation_parts(rnn, ngram, cfg, stream)?.perplexity(cfg.lambda))
}

/// Golden-section choice of λ on a tuning stream. Returns `(λ, ppl)`.
pub fn tune_lambda<F: Scalar, N: Network<F> + ?Sized>(
    rnn: &N,
    ngram: &NGramModel,
    cfg: &InterpolationConfig,
    tuning: &IdStream,
) -> Result<(f64, f64)> {
    Ok(interpolation_parts(rnn, ngram, cfg, tuning)?.tune())
}
