//! The desk experiment: corpus preparation, n-gram baselines and cached
//! recurrent models.

use std::path::PathBuf;
use std::time::Instant;

use desklm::checkpoint::{Checkpoint, Model};
use desklm::driver::{self, DriverOptions};
use desklm_core::corpus::{build_vocab, dedup_with_stats, encode, DedupConfig, IdStream, SentenceCorpus, Vocabulary};
use desklm_core::ngram::{count_ngrams, estimate_kn, prune, NGramModel};
use desklm_core::rnn::{BottleneckParams, Network, RnnParams};
use desklm_core::trainer::{TrainConfig, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::common;

pub const VOCAB: usize = 10_000;
pub const HIDDEN: usize = 256;
pub const BOTTLENECK: usize = 128;
pub const ORDER: usize = 5;
pub const PRUNE_MIN_COUNT: u64 = 2;
const CHUNK: usize = 100;

pub struct Desk {
    pub vocab: Vocabulary,
    pub train: IdStream,
    pub valid: IdStream,
    pub test: IdStream,
    pub kn: NGramModel,
    pub pruned: NGramModel,
}

/// Chunks of 100 sentences: chunk 0 of every 20 is validation, chunk 1 is
/// test, the rest is training.
fn split(corpus: SentenceCorpus) -> [SentenceCorpus; 3] {
    let mut parts: [Vec<Vec<String>>; 3] = Default::default();
    for (i, s) in corpus.sentences.into_iter().enumerate() {
        let k = match (i / CHUNK) % 20 {
            0 => 1,
            1 => 2,
            _ => 0,
        };
        parts[k].push(s);
    }
    parts.map(SentenceCorpus::new)
}

pub fn prepare() -> Desk {
    let t = Instant::now();
    let raw = desklm::text::normalize_file(&common::desk_corpus(), true).unwrap();
    let (clean, stats) = dedup_with_stats(&raw, &DedupConfig::default()).unwrap();
    let [train, valid, test] = split(clean);
    let vocab = build_vocab(&train, VOCAB).unwrap();
    let train = encode(&train, &vocab);
    let valid = encode(&valid, &vocab);
    let test = encode(&test, &vocab);
    let kn = estimate_kn(&count_ngrams(&train, ORDER).unwrap()).unwrap();
    let pruned = prune(&kn, PRUNE_MIN_COUNT).unwrap();
    eprintln!(
        "desk corpus: {} sentences, {} dropped as duplicates; train {} / valid {} / test {} tokens; \
         {} n-grams ({} after pruning); {:.0}s",
        raw.len(),
        stats.dropped_sentences,
        train.len(),
        valid.len(),
        test.len(),
        kn.num_entries(),
        pruned.num_entries(),
        t.elapsed().as_secs_f64()
    );
    Desk {
        vocab,
        train,
        valid,
        test,
        kn,
        pruned,
    }
}

pub fn cache_dir() -> PathBuf {
    let dir = std::env::var_os("DESKLM_ACCEPTANCE_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("desk-cache"));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn key(desk: &Desk, what: &str, cfg: &TrainConfig) -> String {
    let mut h = Sha256::new();
    h.update(what.as_bytes());
    h.update(desklm::cli::config_json(cfg).to_string().as_bytes());
    for s in [&desk.train, &desk.valid] {
        for id in &s.ids {
            h.update(id.to_le_bytes());
        }
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn standard_config() -> TrainConfig {
    TrainConfig {
        hidden: HIDDEN,
        ..TrainConfig::default()
    }
}

/// The standard model exactly as the trainer initialises it.
pub fn standard_init(desk: &Desk) -> RnnParams<f32> {
    let cfg = standard_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    RnnParams::random(desk.vocab.len(), cfg.hidden, cfg.init_scale, &mut rng)
        .with_activation(cfg.activation)
}

pub fn bottleneck_init(desk: &Desk, cfg: &TrainConfig) -> (BottleneckParams<f32>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net =
        BottleneckParams::random(desk.vocab.len(), cfg.hidden, BOTTLENECK, cfg.init_scale, &mut rng)
            .unwrap();
    net.activation = cfg.activation;
    (net, rng)
}

/// Train (or resume, or load) a model whose checkpoint lives in the cache.
/// Returns the model and the path of its checkpoint.
fn cached<N>(desk: &Desk, name: &str, cfg: TrainConfig, fresh: impl FnOnce() -> Trainer<f32, N>) -> (N, PathBuf)
where
    N: Network<f32> + Clone + Into<Model> + TryFrom<Model, Error = desklm::Error>,
{
    let path = cache_dir().join(format!("{name}-{}.rnlm", key(desk, name, &cfg)));
    let mut trainer = if path.exists() {
        let (state, _) = Checkpoint::read(&path).unwrap().into_trainer::<N>().unwrap();
        assert!(
            state.cfg == cfg && state.streams.len == desk.train.len(),
            "{} was trained with another configuration or corpus",
            path.display()
        );
        if state.progress.finished {
            eprintln!("{name}: cached at {}", path.display());
            return (state.net, path);
        }
        eprintln!("{name}: resuming after epoch {}", state.progress.epoch);
        Trainer::resume(state, &desk.train).unwrap()
    } else {
        eprintln!("{name}: training, checkpoints at {}", path.display());
        fresh()
    };
    let opts = DriverOptions {
        checkpoint: path.clone(),
        log: Some(path.with_extension("csv")),
    };
    driver::run(&mut trainer, &desk.train, &desk.valid, &desk.vocab, &opts).unwrap();
    (trainer.into_network(), path)
}

pub fn standard_rnn(desk: &Desk) -> (RnnParams<f32>, PathBuf) {
    let cfg = standard_config();
    cached(desk, "standard", cfg.clone(), || {
        Trainer::new(cfg, &desk.train, &desk.valid).unwrap()
    })
}

/// The shared projections U and D sum gradients over the whole batch, so an
/// elementwise clip at the default limit reduces their steps to signs; the
/// bottleneck model trains unclipped.
pub fn bottleneck_config() -> TrainConfig {
    TrainConfig {
        clip: 0.0,
        ..standard_config()
    }
}

pub fn bottleneck_rnn(desk: &Desk) -> (BottleneckParams<f32>, PathBuf) {
    let cfg = bottleneck_config();
    cached(desk, &format!("bottleneck-p{BOTTLENECK}"), cfg.clone(), || {
        let (net, rng) = bottleneck_init(desk, &cfg);
        Trainer::with_network(cfg, net, rng, &desk.train, &desk.valid).unwrap()
    })
}
