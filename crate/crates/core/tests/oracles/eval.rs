//! Direct evaluations of the scoring quantities, written without reference
//! to the library's data flow.

use super::rnn::{ksum, scores, step, Arch, Mat};

/// `ln Σ exp(s)` with a max shift and a compensated sum.
pub fn ln_z(s: &[f64]) -> f64 {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + ksum(s.iter().map(|x| (x - m).exp())).ln()
}

/// Perplexity in two passes: first every hidden state along the stream,
/// then every `−ln p(target)` from those states.
pub fn two_pass_perplexity(arch: Arch, blocks: &[Mat], ids: &[u32], bos: u32) -> f64 {
    let hidden = match arch {
        Arch::Standard => blocks[1].rows,
        Arch::Bottleneck => blocks[2].rows,
    };
    let mut states = Vec::with_capacity(ids.len());
    let mut h = vec![0.5; hidden];
    for &w in ids {
        h = step(arch, blocks, false, &h, w);
        states.push(h.clone());
    }
    let mut nll = Vec::new();
    for i in 1..ids.len() {
        if ids[i] == bos {
            continue;
        }
        let s = scores(arch, blocks, &states[i - 1]);
        nll.push(ln_z(&s) - s[ids[i] as usize]);
    }
    (ksum(nll.iter().cloned()) / nll.len() as f64).exp()
}

/// Interpolation written out case by case.
pub fn interpolate(
    p_r: &[f64],
    p_n: &[f64],
    to_full: &[u32],
    rnn_unk: usize,
    lambda: f64,
) -> Vec<f64> {
    let own: Vec<Option<usize>> = (0..p_n.len())
        .map(|w| {
            to_full
                .iter()
                .position(|&f| f as usize == w)
                .filter(|&r| r != rnn_unk)
        })
        .collect();
    let rest: f64 = ksum((0..p_n.len()).filter(|&w| own[w].is_none()).map(|w| p_n[w]));
    (0..p_n.len())
        .map(|w| match own[w] {
            Some(r) => lambda * p_r[r] + (1.0 - lambda) * p_n[w],
            None => {
                let share = if rest > 0.0 {
                    p_n[w] / rest
                } else if to_full[rnn_unk] as usize == w {
                    1.0
                } else {
                    0.0
                };
                lambda * p_r[rnn_unk] * share + (1.0 - lambda) * p_n[w]
            }
        })
        .collect()
}

/// Rank of `target` among `cands` by descending score, earlier candidates
/// winning ties, found by sorting.
pub fn rank_by_sort(cands: &[u32], score: &[f64], target: u32) -> Option<usize> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| score[b].partial_cmp(&score[a]).unwrap().then(a.cmp(&b)));
    order.iter().position(|&i| cands[i] == target)
}

/// The `k` most probable ids, ties by id, by full sort.
pub fn shortlist_by_sort(dist: &[f64], k: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..dist.len() as u32).collect();
    ids.sort_by(|&a, &b| {
        dist[b as usize]
            .partial_cmp(&dist[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    ids.truncate(k);
    ids
}
