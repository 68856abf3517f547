#![allow(dead_code)]

use std::io::BufRead;
use std::path::{Path, PathBuf};

use desklm_core::corpus::{normalize_text, SentenceCorpus};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn desk_corpus() -> PathBuf {
    data_dir().join("desk-corpus.txt.gz")
}

/// Normalised sentences from the start of the bundled corpus, at least
/// `words` tokens of them.
pub fn natural_text(words: usize) -> SentenceCorpus {
    let mut out = SentenceCorpus::default();
    for line in desklm::io::open(&desk_corpus()).unwrap().lines() {
        out.extend(normalize_text(&line.unwrap()));
        if out.word_count() >= words {
            break;
        }
    }
    out
}

/// Every `k`-th sentence goes to the second corpus.
pub fn split_every(corpus: &SentenceCorpus, k: usize) -> (SentenceCorpus, SentenceCorpus) {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, s) in corpus.sentences.iter().enumerate() {
        if i % k == k - 1 {
            b.push(s.clone());
        } else {
            a.push(s.clone());
        }
    }
    (SentenceCorpus::new(a), SentenceCorpus::new(b))
}
