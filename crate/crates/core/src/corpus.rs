//! Text normalisation, rolling-buffer deduplication, vocabulary and encoding.

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::error::{invalid, Result};

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

const DIGIT_WORDS: [&str; 10] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

/// Normalised text: sentences of lowercase, whitespace-free tokens.
///
/// Sentence markers are not stored; [`encode`] adds them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentenceCorpus {
    pub sentences: Vec<Vec<String>>,
}

impl SentenceCorpus {
    pub fn new(sentences: Vec<Vec<String>>) -> Self {
        let sentences = sentences.into_iter().filter(|s| !s.is_empty()).collect();
        SentenceCorpus { sentences }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn extend(&mut self, other: SentenceCorpus) {
        self.sentences.extend(other.sentences);
    }
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-')
}

/// Sentence-split, lowercase, expand digits to words and strip punctuation.
///
/// Apostrophes and hyphens survive only between two letters; a period
/// between two digits is read as a decimal point.
pub fn normalize_text(raw: &str) -> SentenceCorpus {
    let mut sentences = Vec::new();
    let mut sentence: Vec<String> = Vec::new();
    let mut token = String::new();

    fn flush(token: &mut String, sentence: &mut Vec<String>) {
        if !token.is_empty() {
            sentence.push(core::mem::take(token));
        }
    }

    let chars: Vec<char> = raw.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let prev = if i > 0 { Some(chars[i - 1]) } else { None };
        let next = chars.get(i + 1).copied();
        if c.is_ascii_digit() {
            flush(&mut token, &mut sentence);
            sentence.push(DIGIT_WORDS[(c as u8 - b'0') as usize].to_owned());
        } else if c == '.'
            && prev.is_some_and(|p| p.is_ascii_digit())
            && next.is_some_and(|n| n.is_ascii_digit())
        {
            sentence.push("point".to_owned());
        } else if is_terminal(c) {
            flush(&mut token, &mut sentence);
            if !sentence.is_empty() {
                sentences.push(core::mem::take(&mut sentence));
            }
        } else if c.is_alphabetic() {
            token.extend(c.to_lowercase());
        } else if is_joiner(c) && !token.is_empty() && next.is_some_and(char::is_alphabetic) {
            token.push(if c == '-' { '-' } else { '\'' });
        } else {
            flush(&mut token, &mut sentence);
        }
    }
    flush(&mut token, &mut sentence);
    if !sentence.is_empty() {
        sentences.push(sentence);
    }
    SentenceCorpus { sentences }
}

/// Parameters of the rolling-buffer duplicate detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DedupConfig {
    pub min_buffer_chars: usize,
    pub num_hashes: usize,
    pub filter_bits: usize,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig::for_expected_buffers(1 << 20, 1e-3)
    }
}

impl DedupConfig {
    /// Four hash functions and a bit array sized so that `expected` distinct
    /// buffers give at most `fp_rate` false positives.
    pub fn for_expected_buffers(expected: usize, fp_rate: f64) -> Self {
        let k = 4usize;
        let n = expected.max(1) as f64;
        // (1 - e^{-kn/m})^k = p  =>  m = -k n / ln(1 - p^{1/k})
        let per = libm::pow(fp_rate.clamp(1e-12, 0.5), 1.0 / k as f64);
        let m = libm::ceil(-(k as f64) * n / libm::log(1.0 - per)) as usize;
        DedupConfig {
            min_buffer_chars: 140,
            num_hashes: k,
            filter_bits: m.max(64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_buffer_chars < 1 {
            return Err(invalid("min_buffer_chars must be >= 1"));
        }
        if self.num_hashes < 1 {
            return Err(invalid("num_hashes must be >= 1"));
        }
        if self.filter_bits < 8 {
            return Err(invalid("filter_bits must be >= 8"));
        }
        Ok(())
    }

    /// Expected false-positive probability after `n` distinct insertions.
    pub fn false_positive_rate(&self, n: usize) -> f64 {
        let k = self.num_hashes as f64;
        let x = 1.0 - libm::exp(-k * n as f64 / self.filter_bits as f64);
        libm::pow(x, k)
    }
}

/// Shared bit array probed by `num_hashes` hash functions (double hashing).
#[derive(Debug, Clone)]
pub struct SeenFilter {
    bits: Vec<u64>,
    nbits: u64,
    k: usize,
}

fn fnv1a(bytes: &[u8], basis: u64) -> u64 {
    let mut h = basis;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeenFilter {
    pub fn new(cfg: &DedupConfig) -> Self {
        SeenFilter {
            bits: vec![0; cfg.filter_bits.div_ceil(64)],
            nbits: cfg.filter_bits as u64,
            k: cfg.num_hashes,
        }
    }

    fn probes(&self, key: &[u8]) -> impl Iterator<Item = u64> + '_ {
        let h1 = mix64(fnv1a(key, 0xcbf2_9ce4_8422_2325));
        let h2 = mix64(fnv1a(key, 0x8422_2325_cbf2_9ce4)) | 1;
        (0..self.k as u64).map(move |i| h1.wrapping_add(i.wrapping_mul(h2)) % self.nbits)
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        self.probes(key)
            .all(|b| self.bits[(b / 64) as usize] & (1 << (b % 64)) != 0)
    }

    /// Insert `key`; returns true if every probed bit was already set.
    pub fn check_and_insert(&mut self, key: &[u8]) -> bool {
        let mut all_set = true;
        let probes: Vec<u64> = self.probes(key).collect();
        for b in probes {
            let (w, m) = ((b / 64) as usize, 1u64 << (b % 64));
            if self.bits[w] & m == 0 {
                all_set = false;
                self.bits[w] |= m;
            }
        }
        all_set
    }

    /// Fraction of bits set.
    pub fn occupancy(&self) -> f64 {
        let ones: u64 = self.bits.iter().map(|w| w.count_ones() as u64).sum();
        ones as f64 / self.nbits as f64
    }
}

/// Outcome counts of a deduplication pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DedupStats {
    pub buffers: usize,
    pub dropped_buffers: usize,
    pub dropped_sentences: usize,
}

/// Drop repeated rolling buffers of whole sentences.
pub fn dedup_corpus(corpus: &SentenceCorpus, cfg: &DedupConfig) -> Result<SentenceCorpus> {
    dedup_with_stats(corpus, cfg).map(|(c, _)| c)
}

/// As [`dedup_corpus`], also returning buffer statistics.
///
/// Buffers tile the corpus: sentences are appended until the joined text
/// reaches `min_buffer_chars`, then the buffer is closed. The trailing short
/// buffer is checked like any other.
pub fn dedup_with_stats(
    corpus: &SentenceCorpus,
    cfg: &DedupConfig,
) -> Result<(SentenceCorpus, DedupStats)> {
    cfg.validate()?;
    let mut filter = SeenFilter::new(cfg);
    let mut out = Vec::with_capacity(corpus.len());
    let mut stats = DedupStats::default();
    let mut text = String::new();
    let mut chars = 0usize;
    let mut start = 0usize;

    let mut close = |text: &mut String, start: usize, end: usize, out: &mut Vec<Vec<String>>| {
        stats.buffers += 1;
        if filter.check_and_insert(text.as_bytes()) {
            stats.dropped_buffers += 1;
            stats.dropped_sentences += end - start;
        } else {
            out.extend(corpus.sentences[start..end].iter().cloned());
        }
        text.clear();
    };

    for (i, sentence) in corpus.sentences.iter().enumerate() {
        for tok in sentence {
            if !text.is_empty() {
                text.push(' ');
                chars += 1;
            }
            text.push_str(tok);
            chars += tok.chars().count();
        }
        if chars >= cfg.min_buffer_chars {
            close(&mut text, start, i + 1, &mut out);
            chars = 0;
            start = i + 1;
        }
    }
    if start < corpus.len() {
        close(&mut text, start, corpus.len(), &mut out);
    }
    Ok((SentenceCorpus { sentences: out }, stats))
}

/// Dense word ↔ id map. Ids 0, 1, 2 are `<unk>`, `<s>`, `</s>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
    unk: u32,
    bos: u32,
    eos: u32,
}

impl Vocabulary {
    /// Build from an ordered word list, e.g. a vocabulary file.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(invalid(alloc::format!("duplicate vocabulary word {w:?}")));
            }
        }
        let find = |w: &str| {
            index
                .get(w)
                .copied()
                .ok_or_else(|| invalid(alloc::format!("vocabulary lacks {w}")))
        };
        let (unk, bos, eos) = (find(UNK)?, find(BOS)?, find(EOS)?);
        Ok(Vocabulary {
            words,
            index,
            unk,
            bos,
            eos,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn get(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    /// Id of `word`, or `<unk>`.
    pub fn id(&self, word: &str) -> u32 {
        self.get(word).unwrap_or(self.unk)
    }

    pub fn unk(&self) -> u32 {
        self.unk
    }

    pub fn bos(&self) -> u32 {
        self.bos
    }

    pub fn eos(&self) -> u32 {
        self.eos
    }

    pub fn markers(&self) -> Markers {
        Markers {
            unk: self.unk,
            bos: self.bos,
            eos: self.eos,
        }
    }
}

/// Keep the markers plus the `size - 3` most frequent tokens, ties broken
/// lexicographically. Smaller corpora give a smaller vocabulary.
pub fn build_vocab(corpus: &SentenceCorpus, size: usize) -> Result<Vocabulary> {
    if size < 4 {
        return Err(invalid("vocabulary size must be >= 4"));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in &corpus.sentences {
        for w in s {
            if w != UNK && w != BOS && w != EOS {
                *counts.entry(w.as_str()).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut words: Vec<String> = vec![UNK.into(), BOS.into(), EOS.into()];
    words.extend(ranked.into_iter().take(size - 3).map(|(w, _)| w.to_owned()));
    Vocabulary::from_words(words)
}

/// The three special ids of a vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Markers {
    pub unk: u32,
    pub bos: u32,
    pub eos: u32,
}

/// Flat id sequence; each sentence is `bos w1 .. wn eos`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdStream {
    pub ids: Vec<u32>,
    pub vocab_size: usize,
    pub markers: Markers,
}

impl IdStream {
    pub fn new(ids: Vec<u32>, vocab_size: usize, markers: Markers) -> Result<Self> {
        if let Some(bad) = ids.iter().find(|&&i| i as usize >= vocab_size) {
            return Err(invalid(alloc::format!(
                "id {bad} out of range for vocabulary of {vocab_size}"
            )));
        }
        Ok(IdStream {
            ids,
            vocab_size,
            markers,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Tokens that are scored as predictions: everything except `bos`.
    pub fn predicted_tokens(&self) -> usize {
        self.ids.iter().filter(|&&i| i != self.markers.bos).count()
    }

    /// Split into per-sentence slices, each starting at a `bos`.
    pub fn sentences(&self) -> Vec<&[u32]> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..self.ids.len() {
            if self.ids[i] == self.markers.bos {
                out.push(&self.ids[start..i]);
                start = i;
            }
        }
        if start < self.ids.len() {
            out.push(&self.ids[start..]);
        }
        out
    }

    /// A stream holding the given sentences (each already `bos .. eos`).
    pub fn from_sentences<'a>(
        sentences: impl IntoIterator<Item = &'a [u32]>,
        vocab_size: usize,
        markers: Markers,
    ) -> Self {
        let ids = sentences.into_iter().flatten().copied().collect();
        IdStream {
            ids,
            vocab_size,
            markers,
        }
    }
}

/// Map tokens to ids, wrapping every sentence in `bos`/`eos`.
pub fn encode(corpus: &SentenceCorpus, vocab: &Vocabulary) -> IdStream {
    let mut ids = Vec::with_capacity(corpus.word_count() + 2 * corpus.len());
    for s in &corpus.sentences {
        ids.push(vocab.bos());
        ids.extend(s.iter().map(|w| vocab.id(w)));
        ids.push(vocab.eos());
    }
    IdStream {
        ids,
        vocab_size: vocab.len(),
        markers: vocab.markers(),
    }
}

/// Inverse of [`encode`]; out-of-vocabulary words come back as `<unk>`.
pub fn decode(stream: &IdStream, vocab: &Vocabulary) -> SentenceCorpus {
    let m = stream.markers;
    let mut sentences = Vec::new();
    let mut cur = Vec::new();
    for &id in &stream.ids {
        if id == m.bos {
            cur.clear();
        } else if id == m.eos {
            sentences.push(core::mem::take(&mut cur));
        } else {
            cur.push(vocab.word(id).to_owned());
        }
    }
    SentenceCorpus::new(sentences)
}
