use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::IdStream;
use crate::error::{invalid, Result};
use crate::linalg::{log_sum_exp, Scalar};
use crate::rnn::{forward_step, initial_state, Network};

/// Positions scored together in one pass over the output table.
const SCORE_BATCH: usize = 32;

/// Run `net` over `ids` with one persistent hidden state and call
/// `visit(position, target, scores)` for every scored target, in order.
/// Targets equal to `skip` (the sentence-start marker) are not visited.
pub fn for_each_prediction<F: Scalar, N: Network<F> + ?Sized>(
    net: &N,
    ids: &[u32],
    skip: Option<u32>,
    mut visit: impl FnMut(usize, u32, &[F]),
) {
    let v = net.vocab_size();
    let p = net.feature_size();
    let mut h = initial_state(net);
    let mut next = h.clone();
    let mut feats = vec![F::zero(); SCORE_BATCH * p];
    let mut scores = vec![F::zero(); SCORE_BATCH * v];
    let mut pending: Vec<(usize, u32)> = Vec::with_capacity(SCORE_BATCH);
    let mut flush = |pending: &mut Vec<(usize, u32)>, feats: &[F], scores: &mut [F]| {
        let n = pending.len();
        let xs: Vec<&[F]> = feats[..n * p].chunks(p).collect();
        let mut outs: Vec<&mut [F]> = scores[..n * v].chunks_mut(v).collect();
        net.output_table().mul_batch(&xs, &mut outs);
        for (j, &(pos, target)) in pending.iter().enumerate() {
            visit(pos, target, &scores[j * v..(j + 1) * v]);
        }
        pending.clear();
    };
    for i in 0..ids.len().saturating_sub(1) {
        forward_step(net, &h, ids[i], &mut next);
        core::mem::swap(&mut h, &mut next);
        let target = ids[i + 1];
        if Some(target) == skip {
            continue;
        }
        let j = pending.len();
        net.features(&h, &mut feats[j * p..(j + 1) * p]);
        pending.push((i + 1, target));
        if pending.len() == SCORE_BATCH {
            flush(&mut pending, &feats, &mut scores);
        }
    }
    if !pending.is_empty() {
        flush(&mut pending, &feats, &mut scores);
    }
}

/// Natural-log probability of every scored target, in order.
pub fn rnn_log_probs<F: Scalar, N: Network<F> + ?Sized>(net: &N, stream: &IdStream) -> Vec<f64> {
    let mut out = Vec::with_capacity(stream.len());
    for_each_prediction(net, &stream.ids, Some(stream.markers.bos), |_, t, s| {
        out.push(s[t as usize].as_f64() - log_sum_exp(s));
    });
    out
}

/// Exact-softmax perplexity over every predicted token (`</s>` included,
/// `<s>` never a target). The hidden state starts at rest and is carried
/// through the whole stream.
pub fn rnn_perplexity<F: Scalar, N: Network<F> + ?Sized>(
    net: &N,
    stream: &IdStream,
) -> Result<f64> {
    if stream.vocab_size != net.vocab_size() {
        return Err(invalid("stream and model vocabularies differ"));
    }
    let lps = rnn_log_probs(net, stream);
    if lps.is_empty() {
        return Err(invalid("perplexity of an empty stream"));
    }
    let sum: f64 = lps.iter().sum();
    Ok(libm::exp(-sum / lps.len() as f64))
}
