//! Tab-separated n-best lists.
//!
//! Input lines are `utt-id<TAB>acoustic<TAB>old-lm<TAB>w1 w2 …`; consecutive
//! lines with the same id form one list. Output repeats the input fields and
//! appends `new-lm<TAB>new-total<TAB>rank`, one line per hypothesis in input
//! order.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use desklm_core::corpus::Vocabulary;
use desklm_core::eval::{Hypothesis, NBestList, Rescored};

use crate::error::{Error, Result};
use crate::io::open;

/// A parsed list together with the original word strings.
#[derive(Debug, Clone, PartialEq)]
pub struct NBestEntry {
    pub list: NBestList,
    pub texts: Vec<String>,
}

pub fn parse_nbest(text: &str, vocab: &Vocabulary, path: &Path) -> Result<Vec<NBestEntry>> {
    let mut out: Vec<NBestEntry> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::parse(path, Some(i + 1), msg);
        let mut f = line.splitn(4, '\t');
        let (Some(id), Some(ac), Some(lm)) = (f.next(), f.next(), f.next()) else {
            return Err(bad("expected utt-id, acoustic, old-lm and words separated by tabs"));
        };
        let words = f.next().unwrap_or("");
        let acoustic: f64 = ac.trim().parse().map_err(|_| bad("bad acoustic score"))?;
        let old_lm: f64 = lm.trim().parse().map_err(|_| bad("bad lm score"))?;
        let ids = words.split_whitespace().map(|w| vocab.id(w)).collect();
        let hyp = Hypothesis {
            acoustic,
            old_lm,
            words: ids,
        };
        match out.last_mut() {
            Some(e) if e.list.id == id => {
                e.list.hyps.push(hyp);
                e.texts.push(words.to_owned());
            }
            _ => out.push(NBestEntry {
                list: NBestList {
                    id: id.to_owned(),
                    hyps: vec![hyp],
                },
                texts: vec![words.to_owned()],
            }),
        }
    }
    Ok(out)
}

pub fn read_nbest(path: &Path, vocab: &Vocabulary) -> Result<Vec<NBestEntry>> {
    let mut text = String::new();
    for line in open(path)?.lines() {
        text.push_str(&line.map_err(|e| Error::io(path, e))?);
        text.push('\n');
    }
    parse_nbest(&text, vocab, path)
}

/// Input fields of `entry` plus the rescoring columns.
pub fn format_rescored(entry: &NBestEntry, rescored: &[Rescored], out: &mut String) {
    let mut by_index: Vec<Option<&Rescored>> = vec![None; entry.list.hyps.len()];
    for r in rescored {
        by_index[r.index] = Some(r);
    }
    for (i, h) in entry.list.hyps.iter().enumerate() {
        let r = by_index[i].expect("every hypothesis is rescored");
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}",
            entry.list.id, h.acoustic, h.old_lm, entry.texts[i], r.new_lm, r.total, r.rank
        );
    }
}
