//! Plain-text corpus, vocabulary and id-stream files.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use desklm_core::corpus::{encode, normalize_text, IdStream, SentenceCorpus, Vocabulary};

use crate::error::{Error, Result};
use crate::io::{open, write_atomic};

/// One sentence per line, tokens separated by whitespace. Blank lines are
/// skipped.
pub fn read_corpus(path: &Path) -> Result<SentenceCorpus> {
    let mut sentences = Vec::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let toks: Vec<String> = line.split_whitespace().map(String::from).collect();
        if !toks.is_empty() {
            sentences.push(toks);
        }
    }
    Ok(SentenceCorpus::new(sentences))
}

pub fn corpus_text(corpus: &SentenceCorpus) -> String {
    let mut s = String::with_capacity(corpus.word_count() * 6);
    for sent in &corpus.sentences {
        s.push_str(&sent.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_corpus(path: &Path, corpus: &SentenceCorpus) -> Result<()> {
    write_atomic(path, corpus_text(corpus).as_bytes())
}

/// Normalise raw text. With `lines`, every input line is its own document,
/// so no sentence spans a line break.
pub fn normalize_file(path: &Path, lines: bool) -> Result<SentenceCorpus> {
    if !lines {
        let text = crate::io::read_string(path)?;
        return Ok(normalize_text(&text));
    }
    let mut out = SentenceCorpus::default();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        out.extend(normalize_text(&line));
    }
    Ok(out)
}

/// One word per line; the line number is the id.
pub fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let mut words = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let w = line.trim_end_matches('\r');
        if w.is_empty() || w.contains(char::is_whitespace) {
            return Err(Error::parse(path, Some(i + 1), "vocabulary entries must be single non-empty tokens"));
        }
        words.push(w.to_owned());
    }
    Vocabulary::from_words(words).map_err(|e| Error::parse(path, None, e.to_string()))
}

pub fn vocab_text(vocab: &Vocabulary) -> String {
    let mut s = String::new();
    for w in vocab.words() {
        s.push_str(w);
        s.push('\n');
    }
    s
}

pub fn write_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    write_atomic(path, vocab_text(vocab).as_bytes())
}

/// Read a text corpus and encode it.
pub fn read_stream(path: &Path, vocab: &Vocabulary) -> Result<IdStream> {
    Ok(encode(&read_corpus(path)?, vocab))
}

/// One sentence per line as space-separated ids, markers included.
pub fn ids_text(stream: &IdStream) -> String {
    let mut s = String::new();
    for sent in stream.sentences() {
        for (i, id) in sent.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{id}");
        }
        s.push('\n');
    }
    s
}
