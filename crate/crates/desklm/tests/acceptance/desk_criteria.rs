use desklm_core::compress::quantize;
use desklm_core::corpus::IdStream;
use desklm_core::eval::{
    collect_contexts, hit_rate, interpolation_parts, normalization_drift, rescore_nbest,
    rnn_perplexity, Hypothesis, InterpolationConfig, NBestList, NGramPredictor, RescoreConfig,
    RnnPredictor, RnnScoring,
};
use desklm_core::ngram::ngram_perplexity;
use desklm_core::rnn::RnnParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::desk::{self, Desk};
use crate::Verdict;

pub const DRIFT_CONTEXTS: usize = 1000;
pub const RESCORE_UTTERANCES: usize = 200;
pub const HYPOTHESES: usize = 10;
pub const TOP_K: usize = 3;
pub const SHORTLIST: usize = 100;

pub fn rnn_beats_ngram(d: &Desk, rnn: &RnnParams<f32>) -> Verdict {
    let rnn_ppl = rnn_perplexity(rnn, &d.test).unwrap();
    let kn_ppl = ngram_perplexity(&d.kn, &d.test).unwrap();
    let cfg = InterpolationConfig::shared(0.5, d.vocab.len(), d.vocab.unk()).unwrap();
    let (lambda, valid_ppl) = interpolation_parts(rnn, &d.kn, &cfg, &d.valid).unwrap().tune();
    let mix = interpolation_parts(rnn, &d.kn, &cfg, &d.test)
        .unwrap()
        .perplexity(lambda);
    let gain = 1.0 - rnn_ppl / kn_ppl;
    Verdict::new(
        gain >= 0.10 && mix < rnn_ppl.min(kn_ppl),
        format!(
            "test ppl: KN {kn_ppl:.2}, RNN {rnn_ppl:.2} ({:.1}% better, want >= 10%), \
             interpolated {mix:.2} at lambda {lambda:.3} (valid {valid_ppl:.2})",
            100.0 * gain
        ),
    )
}

/// Reference sentences from the test set with random edits as competitors
/// and random acoustic scores, so that the language model decides.
pub fn synthetic_nbest(test: &IdStream, seed: u64) -> Vec<NBestList> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = test.vocab_size as u32;
    let m = test.markers;
    let refs: Vec<Vec<u32>> = test
        .sentences()
        .into_iter()
        .map(|s| s[1..s.len() - 1].to_vec())
        .filter(|s| (4..=20).contains(&s.len()))
        .take(RESCORE_UTTERANCES)
        .collect();
    let random_word = |rng: &mut ChaCha8Rng, s: &[u32]| -> u32 {
        if rng.random_bool(0.5) {
            s[rng.random_range(0..s.len())]
        } else {
            loop {
                let w = rng.random_range(0..v);
                if w != m.bos && w != m.eos {
                    return w;
                }
            }
        }
    };
    refs.iter()
        .enumerate()
        .map(|(u, r)| {
            let mut hyps = vec![r.clone()];
            while hyps.len() < HYPOTHESES {
                let mut h = r.clone();
                for _ in 0..rng.random_range(1..=3) {
                    let i = rng.random_range(0..h.len());
                    match rng.random_range(0..4) {
                        0 => h[i] = random_word(&mut rng, r),
                        1 if h.len() > 1 => {
                            h.remove(i);
                        }
                        2 => {
                            let w = random_word(&mut rng, r);
                            h.insert(i, w);
                        }
                        _ if i + 1 < h.len() => h.swap(i, i + 1),
                        _ => h[i] = random_word(&mut rng, r),
                    }
                }
                hyps.push(h);
            }
            NBestList {
                id: format!("u{u}"),
                hyps: hyps
                    .into_iter()
                    .map(|words| Hypothesis {
                        acoustic: rng.random_range(-3.0..3.0),
                        old_lm: 0.0,
                        words,
                    })
                    .collect(),
            }
        })
        .collect()
}

fn best(r: &[desklm_core::eval::Rescored]) -> usize {
    r.iter().find(|x| x.rank == 1).unwrap().index
}

/// Gap between the best and second-best total scores.
fn margin(r: &[desklm_core::eval::Rescored]) -> f64 {
    let mut totals: Vec<f64> = r.iter().map(|x| x.total).collect();
    totals.sort_by(|a, b| b.total_cmp(a));
    totals[0] - totals[1]
}

pub fn self_normalization(d: &Desk, rnn: &RnnParams<f32>) -> Verdict {
    let init = desk::standard_init(d);
    let before = normalization_drift(&init, &collect_contexts(&init, &d.test, DRIFT_CONTEXTS).unwrap()).unwrap();
    let after = normalization_drift(rnn, &collect_contexts(rnn, &d.test, DRIFT_CONTEXTS).unwrap()).unwrap();
    let shrink = 1.0 - after.iqr / before.iqr;

    // the RNN alone decides, where normalisation errors matter most
    let interp = InterpolationConfig::shared(1.0, d.vocab.len(), d.vocab.unk()).unwrap();
    let exact = RescoreConfig {
        lm_scale: 1.0,
        wip: 0.0,
        scoring: RnnScoring::Exact,
    };
    let fast = RescoreConfig {
        scoring: RnnScoring::Fast { ln_z: 0.0 },
        ..exact
    };
    let lists = synthetic_nbest(&d.test, 7);
    // the suite: utterances whose exact margin exceeds the measured ln Z spread
    let (mut agree, mut decided) = (0, 0);
    let (mut agree_all, mut reference_wins) = (0, 0);
    for l in &lists {
        let exact_ranks = rescore_nbest(l, rnn, &d.kn, &interp, &exact).unwrap();
        let e = best(&exact_ranks);
        let f = best(&rescore_nbest(l, rnn, &d.kn, &interp, &fast).unwrap());
        agree_all += usize::from(e == f);
        reference_wins += usize::from(e == 0);
        if margin(&exact_ranks) > after.iqr {
            decided += 1;
            agree += usize::from(e == f);
        }
    }
    let rate = agree as f64 / decided.max(1) as f64;
    Verdict::new(
        shrink >= 0.5 && decided > 0 && rate >= 0.95,
        format!(
            "ln Z IQR {:.4} at init -> {:.4} trained ({:.0}% shrink, want >= 50%; median {:.3} -> {:.3}); \
             fast/exact 1-best agree on {agree}/{decided} utterances with margin > IQR ({:.1}%, want >= 95%; \
             {agree_all}/{} over all utterances; exact picks the reference in {reference_wins})",
            before.iqr,
            after.iqr,
            100.0 * shrink,
            before.median,
            after.median,
            100.0 * rate,
            lists.len(),
        ),
    )
}

pub fn hit_rates(d: &Desk) -> Verdict {
    let (b, _) = desk::bottleneck_rnn(d);
    let ng = hit_rate(&mut NGramPredictor::new(&d.pruned), &d.test, &d.pruned, TOP_K, SHORTLIST).unwrap();
    let full = hit_rate(&mut RnnPredictor::new(&b), &d.test, &d.pruned, TOP_K, SHORTLIST).unwrap();
    let q = quantize(&b, 16, d.vocab.words().to_vec()).unwrap().dequantize();
    let q16 = hit_rate(&mut RnnPredictor::new(&q), &d.test, &d.pruned, TOP_K, SHORTLIST).unwrap();
    let cost = full.percent() - q16.percent();
    Verdict::new(
        full.percent() >= ng.percent() && cost < 0.5,
        format!(
            "top-{TOP_K} of {SHORTLIST}: pruned n-gram {:.2}%, bottleneck RNN {:.2}%, 16-bit {:.2}% \
             (cost {cost:.3} points, want < 0.5) over {} positions",
            ng.percent(),
            full.percent(),
            q16.percent(),
            full.positions
        ),
    )
}
