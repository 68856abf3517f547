use std::path::Path;

use desklm::arpa::{read_arpa, write_arpa};
use desklm::checkpoint::Checkpoint;
use desklm_core::corpus::{build_vocab, dedup_corpus, encode, DedupConfig, IdStream, SentenceCorpus, Vocabulary};
use desklm_core::filter::{entropy_filter, FilterConfig};
use desklm_core::ngram::{count_ngrams, estimate_kn};
use desklm_core::rnn::{param_count, BottleneckParams, RmspropState, RnnParams};
use desklm_core::trainer::{NoClock, TrainConfig, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::common;
use crate::Verdict;

fn p() -> &'static Path {
    Path::new("acceptance")
}

fn is_subsequence(sub: &SentenceCorpus, of: &SentenceCorpus) -> bool {
    let mut it = of.sentences.iter();
    sub.sentences.iter().all(|s| it.any(|t| t == s))
}

fn dedup_idempotent(text: &SentenceCorpus) -> bool {
    let mut doubled = text.clone();
    doubled.extend(SentenceCorpus::new(text.sentences[..2000].to_vec()));
    let cfg = DedupConfig::default();
    let once = dedup_corpus(&doubled, &cfg).unwrap();
    let twice = dedup_corpus(&once, &cfg).unwrap();
    once.len() < doubled.len() && once == twice
}

fn filter_monotone(text: &SentenceCorpus) -> bool {
    let n = text.len();
    let in_domain = SentenceCorpus::new(text.sentences[..n / 10].to_vec());
    let general = SentenceCorpus::new(text.sentences[n / 2..].to_vec());
    let candidates = SentenceCorpus::new(text.sentences[n / 10..n / 2].to_vec());
    let vocab = build_vocab(&general, 3000).unwrap();
    let lm = |c: &SentenceCorpus| estimate_kn(&count_ngrams(&encode(c, &vocab), 3).unwrap()).unwrap();
    let (ind, gen) = (lm(&in_domain), lm(&general));
    let mut prev: Option<SentenceCorpus> = None;
    for t in [-1.0, -0.5, -0.2, 0.0, 0.2, 0.5, 1.0, 2.0] {
        let cfg = FilterConfig {
            threshold: t,
            ..FilterConfig::new(&ind, &gen)
        };
        let kept = entropy_filter(&candidates, &vocab, &cfg).unwrap();
        if let Some(prev) = &prev {
            if !is_subsequence(prev, &kept) {
                return false;
            }
        }
        prev = Some(kept);
    }
    prev.is_some_and(|k| k.len() > 0)
}

fn arpa_round_trip(text: &SentenceCorpus) -> bool {
    let small = SentenceCorpus::new(text.sentences[..2000].to_vec());
    let vocab = build_vocab(&small, 2000).unwrap();
    let model = estimate_kn(&count_ngrams(&encode(&small, &vocab), 5).unwrap()).unwrap();
    let written = write_arpa(&model, &vocab);
    let (back, vocab2) = read_arpa(&written, p()).unwrap();
    let close = (1..=model.order()).all(|n| {
        model.level(n).iter().all(|(k, e)| {
            back.level(n).get(k).is_some_and(|b| {
                (b.log10_prob - e.log10_prob).abs() < 1e-6 && (b.log10_backoff - e.log10_backoff).abs() < 1e-6
            })
        })
    });
    close && back.num_entries() == model.num_entries() && write_arpa(&back, &vocab2) == written
}

fn tiny() -> (Vocabulary, IdStream, IdStream) {
    let text = common::natural_text(12_000);
    let (train, valid) = common::split_every(&text, 8);
    let vocab = build_vocab(&train, 300).unwrap();
    let (train, valid) = (encode(&train, &vocab), encode(&valid, &vocab));
    (vocab, train, valid)
}

fn tiny_cfg() -> TrainConfig {
    TrainConfig {
        hidden: 16,
        noffset: 8,
        minibatch: 4,
        k: 10,
        max_epochs: 6,
        ..TrainConfig::default()
    }
}

fn checkpoints_round_trip(vocab: &Vocabulary, train: &IdStream, valid: &IdStream) -> bool {
    let mut t = Trainer::<f32, _>::new(tiny_cfg(), train, valid).unwrap();
    t.step_epoch(train, valid, &NoClock).unwrap();
    let ck = Checkpoint::from_trainer(t.state(), vocab.clone());
    let bytes = ck.to_bytes();
    let back = Checkpoint::from_bytes(&bytes, p()).unwrap();
    let standard = back == ck && back.to_bytes() == bytes;

    let cfg = tiny_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let b = BottleneckParams::<f32>::random(vocab.len(), 16, 8, cfg.init_scale, &mut rng).unwrap();
    let mut t = Trainer::with_network(cfg, b, rng, train, valid).unwrap();
    t.step_epoch(train, valid, &NoClock).unwrap();
    let ck = Checkpoint::from_trainer(t.state(), vocab.clone());
    let bytes = ck.to_bytes();
    let back = Checkpoint::from_bytes(&bytes, p()).unwrap();
    standard && back == ck && back.to_bytes() == bytes
}

fn resume_is_deterministic(vocab: &Vocabulary, train: &IdStream, valid: &IdStream) -> bool {
    let mut whole = Trainer::<f32, _>::new(tiny_cfg(), train, valid).unwrap();
    let mut part = Trainer::<f32, _>::new(tiny_cfg(), train, valid).unwrap();
    for _ in 0..3 {
        whole.step_epoch(train, valid, &NoClock).unwrap();
        part.step_epoch(train, valid, &NoClock).unwrap();
    }
    let bytes = Checkpoint::from_trainer(part.state(), vocab.clone()).to_bytes();
    drop(part);
    let (state, _) = Checkpoint::from_bytes(&bytes, p())
        .unwrap()
        .into_trainer::<RnnParams<f32>>()
        .unwrap();
    let mut resumed = Trainer::resume(state, train).unwrap();
    let a = whole.step_epoch(train, valid, &NoClock).unwrap();
    let b = resumed.step_epoch(train, valid, &NoClock).unwrap();
    let (sa, sb) = (whole.state(), resumed.state());
    a == b && sa == sb && Checkpoint::from_trainer(sa, vocab.clone()).to_bytes() == Checkpoint::from_trainer(sb, vocab.clone()).to_bytes()
}

pub fn pipeline() -> Verdict {
    let t = std::time::Instant::now();
    let text = common::natural_text(200_000);
    let (vocab, train, valid) = tiny();
    let checks = [
        ("dedup idempotent", dedup_idempotent(&text)),
        ("filter monotone in threshold", filter_monotone(&text)),
        ("ARPA round trip", arpa_round_trip(&text)),
        ("checkpoint round trip", checkpoints_round_trip(&vocab, &train, &valid)),
        ("deterministic resume", resume_is_deterministic(&vocab, &train, &valid)),
    ];
    let secs = t.elapsed().as_secs_f64();
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Verdict::new(
        failed.is_empty() && secs < 60.0,
        if failed.is_empty() {
            format!("{} invariants exact in {secs:.1}s (want < 60s)", checks.len())
        } else {
            format!("broken: {} ({secs:.1}s)", failed.join(", "))
        },
    )
}

/// Total f32 values in an `RMSP` section, read straight from checkpoint bytes.
fn serialized_rms_values(bytes: &[u8]) -> Option<u64> {
    let u32_at = |i: usize| -> Option<u32> { Some(u32::from_le_bytes(bytes.get(i..i + 4)?.try_into().ok()?)) };
    let u64_at = |i: usize| -> Option<u64> { Some(u64::from_le_bytes(bytes.get(i..i + 8)?.try_into().ok()?)) };
    if bytes.get(..4)? != b"RNLM" {
        return None;
    }
    let v = u32_at(8)? as usize;
    let h = u32_at(12)? as usize;
    let mut pos = 17 + 4 * (2 * v * h + h * h);
    pos += 4 + u32_at(pos)? as usize;
    while pos < bytes.len() {
        let tag = bytes.get(pos..pos + 4)?;
        let len = u64_at(pos + 4)? as usize;
        let body = pos + 12;
        if tag == b"RMSP" {
            let blocks = u32_at(body)?;
            let mut at = body + 4;
            let mut total = 0;
            for _ in 0..blocks {
                let count = u64_at(at + 9)?;
                total += count;
                at += 17 + 4 * count as usize;
            }
            return (at == body + len).then_some(total);
        }
        pos = body + len;
    }
    None
}

pub fn memory(trained: Option<&Path>) -> Verdict {
    let (v, h) = (crate::desk::VOCAB, crate::desk::HIDDEN);
    let formula = 4 * (h * h + 2 * v);
    let bytes = match trained {
        Some(path) => std::fs::read(path).unwrap(),
        None => {
            let net = RnnParams::<f32>::zeros(v, h);
            let mut words: Vec<String> = ["<unk>", "<s>", "</s>"].map(String::from).to_vec();
            words.extend((3..v).map(|i| format!("w{i}")));
            let mut ck = Checkpoint::model_only(net.clone(), Vocabulary::from_words(words).unwrap());
            ck.optimizer = Some(RmspropState::new(&net, 0.0));
            ck.to_bytes()
        }
    };
    let ck = Checkpoint::from_bytes(&bytes, p()).unwrap();
    let in_memory = ck.optimizer.as_ref().map(|r| r.memory_bytes());
    let on_disk = serialized_rms_values(&bytes).map(|n| 4 * n as usize);
    let params = 4 * param_count(v as u64, h as u64) as usize;
    let ratio = (params + formula) as f64 / (2 * params) as f64;
    Verdict::new(
        in_memory == Some(formula) && on_disk == Some(formula) && ratio < 0.55,
        format!(
            "V={v} H={h}: (H^2+2V)*4 = {formula} bytes, optimizer {in_memory:?}, serialized {on_disk:?} ({}); \
             weights+optimizer is {:.1}% of weights+per-element optimizer",
            if trained.is_some() { "trained checkpoint" } else { "fresh state" },
            100.0 * ratio
        ),
    )
}
