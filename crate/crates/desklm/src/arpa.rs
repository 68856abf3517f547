//! ARPA backoff-model text format.

use std::fmt::Write as _;
use std::path::Path;

use desklm_core::corpus::{Vocabulary, BOS, EOS, UNK};
use desklm_core::ngram::{Entry, NGramMap, NGramModel, LOG10_ZERO, MAX_ORDER};

use crate::error::{Error, Result};

/// Render `model` with words from `vocab`. Unigrams appear in id order, so
/// reading the text back reproduces the ids; higher orders are sorted by id
/// sequence. Backoff weights are written wherever they are non-zero.
pub fn write_arpa(model: &NGramModel, vocab: &Vocabulary) -> String {
    let order = model.order();
    let mut s = String::from("\n\\data\\\n");
    for n in 1..=order {
        let _ = writeln!(s, "ngram {}={}", n, model.level(n).len());
    }
    for n in 1..=order {
        let _ = write!(s, "\n\\{n}-grams:\n");
        let level = model.level(n);
        let mut keys: Vec<&Box<[u32]>> = level.keys().collect();
        keys.sort_unstable();
        for k in keys {
            let e = &level[k];
            let _ = write!(s, "{:.7}\t", e.log10_prob);
            for (i, &w) in k.iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                s.push_str(vocab.word(w));
            }
            if n < order && e.log10_backoff != 0.0 {
                let _ = write!(s, "\t{:.7}", e.log10_backoff);
            }
            s.push('\n');
        }
    }
    s.push_str("\n\\end\\\n");
    s
}

/// Parse ARPA text. The vocabulary is the unigram list in file order;
/// missing `<unk>`, `<s>` or `</s>` are appended with log-probability -99.
pub fn read_arpa(text: &str, path: &Path) -> Result<(NGramModel, Vocabulary)> {
    let err = |line: usize, msg: String| Error::parse(path, Some(line), msg);
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let mut declared: Vec<usize> = Vec::new();
    let mut found_data = false;
    for (no, l) in lines.by_ref() {
        if l.is_empty() {
            continue;
        }
        if l == "\\data\\" {
            found_data = true;
            break;
        }
        return Err(err(no, format!("expected \\data\\, found {l:?}")));
    }
    if !found_data {
        return Err(Error::parse(path, None, "missing \\data\\ header"));
    }
    let mut pending: Option<(usize, &str)> = None;
    for (no, l) in lines.by_ref() {
        if l.is_empty() {
            continue;
        }
        let Some(rest) = l.strip_prefix("ngram ") else {
            pending = Some((no, l));
            break;
        };
        let (n, c) = rest
            .split_once('=')
            .ok_or_else(|| err(no, format!("bad count line {l:?}")))?;
        let n: usize = n.trim().parse().map_err(|_| err(no, format!("bad order in {l:?}")))?;
        let c: usize = c.trim().parse().map_err(|_| err(no, format!("bad count in {l:?}")))?;
        if n != declared.len() + 1 {
            return Err(err(no, format!("expected ngram {} count", declared.len() + 1)));
        }
        declared.push(c);
    }
    let order = declared.len();
    if order == 0 || order > MAX_ORDER {
        return Err(Error::parse(path, None, format!("unsupported order {order}")));
    }

    let mut words: Vec<String> = Vec::new();
    let mut index = std::collections::HashMap::new();
    let mut levels: Vec<NGramMap<Entry>> = Vec::with_capacity(order);
    let mut header = pending;
    for n in 1..=order {
        let (no, l) = header
            .take()
            .or_else(|| lines.by_ref().find(|(_, l)| !l.is_empty()))
            .ok_or_else(|| Error::parse(path, None, format!("missing \\{n}-grams: section")))?;
        if l != format!("\\{n}-grams:") {
            return Err(err(no, format!("expected \\{n}-grams:, found {l:?}")));
        }
        let mut level = NGramMap::with_capacity(declared[n - 1]);
        let mut last = no;
        for (no, l) in lines.by_ref() {
            last = no;
            if l.is_empty() {
                break;
            }
            if l.starts_with('\\') {
                header = Some((no, l));
                break;
            }
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != n + 1 && f.len() != n + 2 {
                return Err(err(no, format!("expected {} or {} fields", n + 1, n + 2)));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(no, format!("bad number {s:?}")))
            };
            let log10_prob = num(f[0])?;
            let log10_backoff = if f.len() == n + 2 { num(f[n + 1])? } else { 0.0 };
            let mut key = Vec::with_capacity(n);
            for w in &f[1..=n] {
                let id = if n == 1 {
                    if index.contains_key(*w) {
                        return Err(err(no, format!("duplicate unigram {w:?}")));
                    }
                    let id = words.len() as u32;
                    words.push((*w).to_owned());
                    index.insert((*w).to_owned(), id);
                    id
                } else {
                    *index
                        .get(*w)
                        .ok_or_else(|| err(no, format!("word {w:?} has no unigram")))?
                };
                key.push(id);
            }
            let entry = Entry {
                log10_prob,
                log10_backoff,
                count: None,
            };
            if level.insert(key.into_boxed_slice(), entry).is_some() {
                return Err(err(no, "duplicate n-gram".into()));
            }
        }
        if level.len() != declared[n - 1] {
            return Err(err(
                last,
                format!("header declares {} {n}-grams, section has {}", declared[n - 1], level.len()),
            ));
        }
        levels.push(level);
    }
    match header.or_else(|| lines.find(|(_, l)| !l.is_empty())) {
        Some((_, "\\end\\")) => {}
        Some((no, l)) => return Err(err(no, format!("expected \\end\\, found {l:?}"))),
        None => return Err(Error::parse(path, None, "missing \\end\\")),
    }
    for (n, level) in levels.iter().enumerate().skip(1) {
        for k in level.keys() {
            if !levels[n - 1].contains_key(&k[..n]) || !levels[n - 1].contains_key(&k[1..]) {
                return Err(Error::parse(path, None, "an n-gram lacks its prefix or suffix"));
            }
        }
    }
    // closed-vocabulary files may omit the markers; they become impossible
    // unigrams so that the model still has ids for them
    for marker in [UNK, BOS, EOS] {
        if !index.contains_key(marker) {
            let id = words.len() as u32;
            words.push(marker.to_owned());
            index.insert(marker.to_owned(), id);
            levels[0].insert(
                Box::new([id]),
                Entry {
                    log10_prob: LOG10_ZERO,
                    log10_backoff: 0.0,
                    count: None,
                },
            );
        }
    }
    let vocab = Vocabulary::from_words(words).map_err(|e| Error::parse(path, None, e.to_string()))?;
    let model = NGramModel::from_levels(order, vocab.len(), vocab.markers(), levels);
    Ok((model, vocab))
}

pub fn read_arpa_file(path: &Path) -> Result<(NGramModel, Vocabulary)> {
    read_arpa(&crate::io::read_string(path)?, path)
}
