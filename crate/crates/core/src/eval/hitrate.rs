use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::IdStream;
use crate::error::{invalid, Result};
use crate::linalg::Scalar;
use crate::ngram::{top_k, NGramModel};
use crate::rnn::{forward_step, initial_state, Network};

pub const DEFAULT_TOP_K: usize = 3;
pub const DEFAULT_SHORTLIST: usize = 100;

/// A left-to-right model that can rank candidate next words.
pub trait Predictor {
    /// Forget all history.
    fn reset(&mut self);
    /// Consume `word`.
    fn push(&mut self, word: u32);
    /// Scores of `candidates` as the next word; only their order matters.
    fn score(&mut self, candidates: &[u32], out: &mut [f64]);
}

pub struct RnnPredictor<'a, F, N: ?Sized> {
    net: &'a N,
    h: Vec<F>,
    next: Vec<F>,
    feat: Vec<F>,
}

impl<'a, F: Scalar, N: Network<F> + ?Sized> RnnPredictor<'a, F, N> {
    pub fn new(net: &'a N) -> Self {
        let h = initial_state(net);
        RnnPredictor {
            net,
            next: h.clone(),
            h,
            feat: vec![F::zero(); net.feature_size()],
        }
    }
}

impl<F: Scalar, N: Network<F> + ?Sized> Predictor for RnnPredictor<'_, F, N> {
    fn reset(&mut self) {
        self.h = initial_state(self.net);
    }

    fn push(&mut self, word: u32) {
        forward_step(self.net, &self.h, word, &mut self.next);
        core::mem::swap(&mut self.h, &mut self.next);
    }

    fn score(&mut self, candidates: &[u32], out: &mut [f64]) {
        self.net.features(&self.h, &mut self.feat);
        let table = self.net.output_table();
        for (o, &w) in out.iter_mut().zip(candidates) {
            *o = F::dot(table.row(w as usize), &self.feat).as_f64();
        }
    }
}

pub struct NGramPredictor<'a> {
    model: &'a NGramModel,
    history: Vec<u32>,
}

impl<'a> NGramPredictor<'a> {
    pub fn new(model: &'a NGramModel) -> Self {
        NGramPredictor {
            model,
            history: Vec::new(),
        }
    }
}

impl Predictor for NGramPredictor<'_> {
    fn reset(&mut self) {
        self.history.clear();
    }

    fn push(&mut self, word: u32) {
        let keep = self.model.order();
        if self.history.len() >= 4 * keep {
            self.history.drain(..self.history.len() - keep);
        }
        self.history.push(word);
    }

    fn score(&mut self, candidates: &[u32], out: &mut [f64]) {
        for (o, &w) in out.iter_mut().zip(candidates) {
            *o = self.model.log10_prob(&self.history, w);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HitRate {
    pub hits: usize,
    pub positions: usize,
    /// Positions whose target was in the shortlist at all.
    pub shortlisted: usize,
}

impl HitRate {
    /// Hits as a percentage of positions.
    pub fn percent(&self) -> f64 {
        if self.positions == 0 {
            0.0
        } else {
            100.0 * self.hits as f64 / self.positions as f64
        }
    }
}

/// Top-`top_k` hit rate over every predicted token of `stream`.
///
/// At each position the `shortlist_k` most probable words under `shortlist`
/// are ranked by `model` (ties keep shortlist order); a hit is a target
/// ranked within the first `top_k`. Targets missing from the shortlist are
/// misses.
pub fn hit_rate(
    model: &mut impl Predictor,
    stream: &IdStream,
    shortlist: &NGramModel,
    top_k_: usize,
    shortlist_k: usize,
) -> Result<HitRate> {
    if top_k_ == 0 || top_k_ > shortlist_k {
        return Err(invalid("need 1 <= top_k <= shortlist_k"));
    }
    if shortlist.vocab_size() != stream.vocab_size {
        return Err(invalid("shortlist model and stream vocabularies differ"));
    }
    let ids = &stream.ids;
    let bos = stream.markers.bos;
    let mut dist = vec![0.0; shortlist.vocab_size()];
    let mut scores = Vec::with_capacity(shortlist_k);
    let mut out = HitRate::default();
    model.reset();
    for i in 0..ids.len().saturating_sub(1) {
        model.push(ids[i]);
        let target = ids[i + 1];
        if target == bos {
            continue;
        }
        out.positions += 1;
        shortlist.distribution_into(&ids[..=i], &mut dist);
        let cands = top_k(&dist, shortlist_k);
        let Some(at) = cands.iter().position(|&w| w == target) else {
            continue;
        };
        out.shortlisted += 1;
        scores.clear();
        scores.resize(cands.len(), 0.0);
        model.score(&cands, &mut scores);
        let t = scores[at];
        let rank = scores[..at].iter().filter(|&&s| s >= t).count()
            + scores[at + 1..].iter().filter(|&&s| s > t).count();
        if rank < top_k_ {
            out.hits += 1;
        }
    }
    Ok(out)
}
