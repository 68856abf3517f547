//! Cross-entropy difference data selection over rolling sentence windows.

use alloc::vec::Vec;

use crate::corpus::{encode, SentenceCorpus, Vocabulary};
use crate::error::{invalid, Result};
use crate::ngram::{ngram_log_likelihood, NGramModel};

pub const DEFAULT_BATCH_SENTENCES: usize = 16;

#[derive(Debug, Clone, Copy)]
pub struct FilterConfig<'a> {
    pub batch_sentences: usize,
    /// Keep threshold in nats per word.
    pub threshold: f64,
    pub in_domain: &'a NGramModel,
    pub general: &'a NGramModel,
}

impl<'a> FilterConfig<'a> {
    pub fn new(in_domain: &'a NGramModel, general: &'a NGramModel) -> Self {
        FilterConfig {
            batch_sentences: DEFAULT_BATCH_SENTENCES,
            threshold: 0.0,
            in_domain,
            general,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_sentences == 0 {
            return Err(invalid("batch_sentences must be at least 1"));
        }
        if self.in_domain.vocab_size() != self.general.vocab_size()
            || self.in_domain.markers() != self.general.markers()
        {
            return Err(invalid(
                "in-domain and general models use different vocabularies",
            ));
        }
        Ok(())
    }
}

/// Per-sentence log-likelihoods under both models.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SentenceScore {
    ll_in: f64,
    ll_gen: f64,
    tokens: usize,
}

fn sentence_score(cfg: &FilterConfig, ids: &[u32]) -> SentenceScore {
    let (ll_in, tokens) = ngram_log_likelihood(cfg.in_domain, ids);
    let (ll_gen, _) = ngram_log_likelihood(cfg.general, ids);
    SentenceScore {
        ll_in,
        ll_gen,
        tokens,
    }
}

/// `H_in − H_gen` in nats per word over the concatenated buffer. Each
/// sentence is `bos .. eos`; `eos` counts as a word.
pub fn score_buffer(cfg: &FilterConfig, sentences: &[&[u32]]) -> Result<f64> {
    cfg.validate()?;
    let mut acc = SentenceScore {
        ll_in: 0.0,
        ll_gen: 0.0,
        tokens: 0,
    };
    for s in sentences {
        let sc = sentence_score(cfg, s);
        acc.ll_in += sc.ll_in;
        acc.ll_gen += sc.ll_gen;
        acc.tokens += sc.tokens;
    }
    if acc.tokens == 0 {
        return Err(invalid("cannot score an empty buffer"));
    }
    Ok((acc.ll_gen - acc.ll_in) / acc.tokens as f64)
}

/// Score of every window of `batch_sentences` consecutive sentences, stride
/// one. A corpus shorter than one window yields a single whole-corpus score.
pub fn window_scores(cfg: &FilterConfig, sentences: &[&[u32]]) -> Result<Vec<f64>> {
    cfg.validate()?;
    if sentences.is_empty() {
        return Ok(Vec::new());
    }
    // prefix sums make each window O(1)
    let mut pre = Vec::with_capacity(sentences.len() + 1);
    pre.push((0.0f64, 0.0f64, 0usize));
    for s in sentences {
        let sc = sentence_score(cfg, s);
        let &(a, b, n) = pre.last().unwrap();
        pre.push((a + sc.ll_in, b + sc.ll_gen, n + sc.tokens));
    }
    let width = cfg.batch_sentences.min(sentences.len());
    let windows = sentences.len() - width + 1;
    let mut out = Vec::with_capacity(windows);
    for i in 0..windows {
        let (a0, b0, n0) = pre[i];
        let (a1, b1, n1) = pre[i + width];
        let n = n1 - n0;
        out.push(if n == 0 {
            0.0
        } else {
            ((b1 - b0) - (a1 - a0)) / n as f64
        });
    }
    Ok(out)
}

/// For each sentence, the lowest score of any window containing it. A
/// sentence is kept at threshold `t` iff its key is below `t`.
pub fn sentence_keys(cfg: &FilterConfig, sentences: &[&[u32]]) -> Result<Vec<f64>> {
    let scores = window_scores(cfg, sentences)?;
    let width = cfg.batch_sentences.min(sentences.len());
    let mut keys = alloc::vec![f64::INFINITY; sentences.len()];
    for (i, &s) in scores.iter().enumerate() {
        for k in &mut keys[i..i + width] {
            if s < *k {
                *k = s;
            }
        }
    }
    Ok(keys)
}

/// Keep every sentence that was ever part of a window scoring below
/// `cfg.threshold`, in original order.
pub fn entropy_filter(
    corpus: &SentenceCorpus,
    vocab: &Vocabulary,
    cfg: &FilterConfig,
) -> Result<SentenceCorpus> {
    let keys = corpus_keys(corpus, vocab, cfg)?;
    let kept = corpus
        .sentences
        .iter()
        .zip(&keys)
        .filter(|(_, &k)| k < cfg.threshold)
        .map(|(s, _)| s.clone())
        .collect();
    Ok(SentenceCorpus::new(kept))
}

fn corpus_keys(
    corpus: &SentenceCorpus,
    vocab: &Vocabulary,
    cfg: &FilterConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if vocab.len() != cfg.general.vocab_size() {
        return Err(invalid("vocabulary does not match the filter models"));
    }
    let stream = encode(corpus, vocab);
    let sentences = stream.sentences();
    sentence_keys(cfg, &sentences)
}

/// Threshold that keeps as close as possible to `fraction` of the corpus
/// words. Returns the threshold and the fraction it actually keeps.
///
/// The kept fraction is a step function of the threshold that changes only
/// at sentence keys, so the search runs over those breakpoints directly.
pub fn threshold_for_fraction(
    corpus: &SentenceCorpus,
    vocab: &Vocabulary,
    cfg: &FilterConfig,
    fraction: f64,
) -> Result<(f64, f64)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid("fraction must be in (0, 1]"));
    }
    let keys = corpus_keys(corpus, vocab, cfg)?;
    let total = corpus.word_count();
    if total == 0 {
        return Err(invalid("cannot select from an empty corpus"));
    }
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));

    // breakpoints: after each run of equal keys
    let mut steps: Vec<(f64, usize)> = Vec::new(); // (largest key kept, words kept)
    let mut words = 0;
    for (j, &i) in order.iter().enumerate() {
        words += corpus.sentences[i].len();
        let last_of_run = j + 1 == order.len() || keys[order[j + 1]] != keys[i];
        if last_of_run {
            steps.push((keys[i], words));
        }
    }
    let target = fraction * total as f64;
    let best = steps
        .partition_point(|&(_, w)| (w as f64) < target)
        .min(steps.len() - 1);
    // the step just below the target may be closer
    let pick = if best > 0
        && (target - steps[best - 1].1 as f64).abs() < (steps[best].1 as f64 - target).abs()
    {
        best - 1
    } else {
        best
    };
    let (key, kept) = steps[pick];
    let threshold = match steps.get(pick + 1) {
        Some(&(next, _)) => 0.5 * (key + next),
        None => key.abs().max(1.0) + key,
    };
    Ok((threshold, kept as f64 / total as f64))
}
