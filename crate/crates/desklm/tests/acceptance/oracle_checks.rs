use desklm_core::corpus::{IdStream, Markers};
use desklm_core::ngram::{count_ngrams, estimate_kn};

use crate::harness::gradcheck::{max_error, GradConfig, F32_DELTA, F32_TOL, F64_DELTA, F64_TOL};
use crate::oracles::kn::{random_corpus, NaiveKn};
use crate::oracles::rnn::Arch;
use crate::Verdict;

const CONFIGS_PER_KIND: u64 = 16;

pub fn gradients() -> Verdict {
    let mut worst32: f64 = 0.0;
    let mut worst64: f64 = 0.0;
    let mut n = 0;
    for arch in [Arch::Standard, Arch::Bottleneck] {
        for nce in [false, true] {
            for i in 0..CONFIGS_PER_KIND {
                let cfg = GradConfig::random(arch, nce, 50_000 + 100 * n + i);
                worst64 = worst64.max(max_error::<f64>(&cfg, F64_DELTA));
                worst32 = worst32.max(max_error::<f32>(&cfg, F32_DELTA));
            }
            n += 1;
        }
    }
    Verdict::new(
        worst32 < F32_TOL && worst64 < F64_TOL,
        format!(
            "{} configs; worst relative error f32 {worst32:.2e} (< {F32_TOL:e}), f64 {worst64:.2e} (< {F64_TOL:e})",
            n * CONFIGS_PER_KIND
        ),
    )
}

const M: Markers = Markers {
    unk: 0,
    bos: 1,
    eos: 2,
};

pub fn kneser_ney() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    let mut corpora = 0;
    for seed in 0..16u64 {
        let words = 8 + (seed as u32 % 6) * 5;
        let tokens = 100 + 25 * seed as usize;
        let vocab = words as usize + 3;
        let ids = random_corpus(seed, tokens.min(500), words);
        let stream = IdStream::new(ids.clone(), vocab, M).unwrap();
        for order in 1..=5 {
            corpora += 1;
            let model = estimate_kn(&count_ngrams(&stream, order).unwrap()).unwrap();
            let naive = NaiveKn::new(&ids, order, vocab, M.bos);
            let mut contexts = naive.observed_contexts();
            contexts.push(vec![4, 4, 4, 4]);
            for h in &contexts {
                let mut total = 0.0;
                for w in (0..vocab as u32).filter(|&w| w != M.bos) {
                    let p = model.prob(h, w);
                    worst = worst.max((p - naive.prob(h, w)).abs());
                    total += p;
                }
                worst_norm = worst_norm.max((total - 1.0).abs());
            }
        }
    }
    Verdict::new(
        worst < 1e-9 && worst_norm < 1e-6,
        format!("{corpora} corpus/order pairs; max |p - oracle| {worst:.1e} (< 1e-9), max |sum - 1| {worst_norm:.1e} (< 1e-6)"),
    )
}
