use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::linalg::{log_sum_exp, Scalar};
use crate::ngram::NGramModel;
use crate::rnn::Network;

use super::{for_each_prediction, InterpolationConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub acoustic: f64,
    pub old_lm: f64,
    /// Full-vocabulary ids, without sentence markers.
    pub words: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NBestList {
    pub id: String,
    pub hyps: Vec<Hypothesis>,
}

/// How RNN word probabilities are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RnnScoring {
    /// Explicit softmax over the RNN vocabulary.
    Exact,
    /// `exp(s_w − ln_z)` with no normalisation, relying on NCE training.
    Fast { ln_z: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescoreConfig {
    pub lm_scale: f64,
    /// Word insertion penalty, added once per word.
    pub wip: f64,
    pub scoring: RnnScoring,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rescored {
    /// Index into the input hypothesis list.
    pub index: usize,
    pub new_lm: f64,
    pub total: f64,
    /// 1-based.
    pub rank: usize,
}

/// Natural-log probability of `<s> words </s>` under the interpolated
/// model, `</s>` included. The RNN starts from rest.
pub fn sentence_log_prob<F: Scalar, N: Network<F> + ?Sized>(
    rnn: &N,
    ngram: &NGramModel,
    interp: &InterpolationConfig,
    words: &[u32],
    scoring: RnnScoring,
) -> Result<f64> {
    if rnn.vocab_size() != interp.rnn_vocab_size() || ngram.vocab_size() != interp.full_vocab_size()
    {
        return Err(invalid("model and interpolation vocabularies differ"));
    }
    if let Some(&w) = words.iter().find(|&&w| w as usize >= ngram.vocab_size()) {
        return Err(invalid(alloc::format!("word id {w} out of range")));
    }
    let m = ngram.markers();
    let mut ids = Vec::with_capacity(words.len() + 2);
    ids.push(m.bos);
    ids.extend_from_slice(words);
    ids.push(m.eos);
    let mapped = interp.map_ids(&ids);
    let mut dist = vec![0.0; interp.full_vocab_size()];
    let mut total = 0.0;
    let l = interp.lambda;
    for_each_prediction(rnn, &mapped, None, |pos, _, s| {
        let w = ids[pos];
        let ctx = &ids[..pos];
        let p_n = ngram.prob(ctx, w);
        let shift = match scoring {
            RnnScoring::Exact => log_sum_exp(s),
            RnnScoring::Fast { ln_z } => ln_z,
        };
        let a = interp.rnn_part(
            w,
            |r| libm::exp(s[r as usize].as_f64() - shift),
            p_n,
            || {
                ngram.distribution_into(ctx, &mut dist);
                interp.uncovered_mass(&dist)
            },
        );
        total += libm::log(l * a + (1.0 - l) * p_n);
    });
    Ok(total)
}

/// Rerank one utterance: `acoustic + lm_scale·ln p(words) + wip·|words|`,
/// best first. Equal totals keep input order.
pub fn rescore_nbest<F: Scalar, N: Network<F> + ?Sized>(
    list: &NBestList,
    rnn: &N,
    ngram: &NGramModel,
    interp: &InterpolationConfig,
    cfg: &RescoreConfig,
) -> Result<Vec<Rescored>> {
    if list.hyps.is_empty() {
        return Err(invalid(alloc::format!(
            "utterance {} has no hypotheses",
            list.id
        )));
    }
    let mut out = list
        .hyps
        .iter()
        .enumerate()
        .map(|(index, h)| {
            let new_lm = sentence_log_prob(rnn, ngram, interp, &h.words, cfg.scoring)?;
            // a zero scale must not turn a -inf score into NaN
            let lm = if cfg.lm_scale == 0.0 {
                0.0
            } else {
                cfg.lm_scale * new_lm
            };
            Ok(Rescored {
                index,
                new_lm,
                total: h.acoustic + lm + cfg.wip * h.words.len() as f64,
                rank: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.total.total_cmp(&a.total));
    for (i, r) in out.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(out)
}
