use alloc::boxed::Box;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::corpus::{IdStream, Markers};
use crate::error::{invalid, Result};

/// Longest supported n-gram order.
pub const MAX_ORDER: usize = 15;

pub type NGramMap<V> = HashMap<Box<[u32]>, V>;

/// Raw occurrence counts of every n-gram up to `order`.
///
/// N-grams never cross a sentence start: `<s>` may only appear as the first
/// id of a key.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    order: usize,
    vocab_size: usize,
    markers: Markers,
    levels: Vec<NGramMap<u64>>,
}

impl CountTable {
    pub fn empty(order: usize, vocab_size: usize, markers: Markers) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(invalid(alloc::format!(
                "n-gram order must be in 1..={MAX_ORDER}"
            )));
        }
        Ok(CountTable {
            order,
            vocab_size,
            markers,
            levels: (0..order).map(|_| NGramMap::new()).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn markers(&self) -> Markers {
        self.markers
    }

    /// Counts of n-grams of length `n` (1-based).
    pub fn level(&self, n: usize) -> &NGramMap<u64> {
        &self.levels[n - 1]
    }

    pub fn get(&self, gram: &[u32]) -> u64 {
        self.levels
            .get(gram.len().wrapping_sub(1))
            .and_then(|l| l.get(gram))
            .copied()
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.levels[0].is_empty()
    }

    /// Add all n-grams of `stream`.
    pub fn add_stream(&mut self, stream: &IdStream) {
        let ids = &stream.ids;
        let bos = self.markers.bos;
        for i in 0..ids.len() {
            for n in 1..=self.order.min(ids.len() - i) {
                if n > 1 && ids[i + n - 1] == bos {
                    break;
                }
                *self.levels[n - 1].entry_ref(&ids[i..i + n]).or_insert(0) += 1;
            }
        }
    }

    /// Fold another shard's counts into this one.
    pub fn merge(&mut self, other: &CountTable) -> Result<()> {
        if other.order != self.order || other.vocab_size != self.vocab_size {
            return Err(invalid("count tables differ in order or vocabulary"));
        }
        for (mine, theirs) in self.levels.iter_mut().zip(&other.levels) {
            for (k, v) in theirs {
                *mine.entry_ref(k.as_ref()).or_insert(0) += v;
            }
        }
        Ok(())
    }

    /// Counts used by Kneser-Ney at each level: raw counts at the top order
    /// and for keys starting with `<s>`, continuation counts (number of
    /// distinct left extensions) elsewhere.
    pub fn adjusted(&self) -> Vec<NGramMap<u64>> {
        let bos = self.markers.bos;
        let mut out: Vec<NGramMap<u64>> = Vec::with_capacity(self.order);
        for n in 1..=self.order {
            if n == self.order {
                out.push(self.levels[n - 1].clone());
                continue;
            }
            let mut adj = NGramMap::with_capacity(self.levels[n - 1].len());
            for (k, &c) in &self.levels[n - 1] {
                if k[0] == bos {
                    adj.insert(k.clone(), c);
                }
            }
            for k in self.levels[n].keys() {
                *adj.entry_ref(&k[1..]).or_insert(0) += 1;
            }
            out.push(adj);
        }
        out
    }
}

/// Count all n-grams up to `order` in `stream`.
pub fn count_ngrams(stream: &IdStream, order: usize) -> Result<CountTable> {
    let mut t = CountTable::empty(order, stream.vocab_size, stream.markers)?;
    t.add_stream(stream);
    Ok(t)
}
