use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use super::counts::{NGramMap, MAX_ORDER};
use crate::corpus::{IdStream, Markers};
use crate::error::{invalid, Result};

/// Log10 probability written for `<s>`, which is never predicted.
pub const LOG10_ZERO: f64 = -99.0;

/// One stored n-gram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub log10_prob: f64,
    /// Backoff weight applied when this n-gram is used as a context.
    pub log10_backoff: f64,
    /// Raw training count, when known (models read from ARPA have none).
    pub count: Option<u64>,
}

/// Backoff n-gram language model.
///
/// Immutable after construction; safe to share between readers.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    vocab_size: usize,
    markers: Markers,
    levels: Vec<NGramMap<Entry>>,
    // children[n-2]: context of length n-1 -> words w with (context, w) stored
    children: Vec<NGramMap<Vec<u32>>>,
    unigram: Vec<f64>,
}

impl NGramModel {
    /// Assemble from per-order entry maps; level 1 must hold every id.
    pub fn from_levels(
        order: usize,
        vocab_size: usize,
        markers: Markers,
        levels: Vec<NGramMap<Entry>>,
    ) -> Self {
        assert_eq!(levels.len(), order);
        assert!(order <= MAX_ORDER);
        let mut children: Vec<NGramMap<Vec<u32>>> = (1..order).map(|_| NGramMap::new()).collect();
        for n in 2..=order {
            let kids = &mut children[n - 2];
            for k in levels[n - 1].keys() {
                kids.entry_ref(&k[..n - 1])
                    .or_insert_with(Vec::new)
                    .push(k[n - 1]);
            }
            for v in kids.values_mut() {
                v.sort_unstable();
            }
        }
        let mut unigram = vec![0.0; vocab_size];
        for (k, e) in &levels[0] {
            if (k[0] as usize) < vocab_size && k[0] != markers.bos {
                unigram[k[0] as usize] = libm::pow(10.0, e.log10_prob);
            }
        }
        NGramModel {
            order,
            vocab_size,
            markers,
            levels,
            children,
            unigram,
        }
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

    /// Stored n-grams of length `n`.
    pub fn level(&self, n: usize) -> &NGramMap<Entry> {
        &self.levels[n - 1]
    }

    pub fn entry(&self, gram: &[u32]) -> Option<&Entry> {
        self.levels.get(gram.len().checked_sub(1)?)?.get(gram)
    }

    pub fn num_entries(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    pub fn into_levels(self) -> Vec<NGramMap<Entry>> {
        self.levels
    }

    /// The part of `context` the model can condition on: at most
    /// `order - 1` ids, starting no earlier than the last `<s>`.
    pub fn effective_context<'a>(&self, context: &'a [u32]) -> &'a [u32] {
        let keep = self.order - 1;
        let mut ctx = &context[context.len().saturating_sub(keep)..];
        if let Some(p) = ctx.iter().rposition(|&w| w == self.markers.bos) {
            ctx = &ctx[p..];
        }
        ctx
    }

    /// `log10 p(word | context)` with the full backoff chain.
    pub fn log10_prob(&self, context: &[u32], word: u32) -> f64 {
        let ctx = self.effective_context(context);
        let mut key = [0u32; MAX_ORDER];
        let mut backoff = 0.0;
        for start in 0..=ctx.len() {
            let h = &ctx[start..];
            let n = h.len() + 1;
            key[..h.len()].copy_from_slice(h);
            key[h.len()] = word;
            if let Some(e) = self.levels[n - 1].get(&key[..n]) {
                return backoff + e.log10_prob;
            }
            if !h.is_empty() {
                if let Some(e) = self.levels[h.len() - 1].get(h) {
                    backoff += e.log10_backoff;
                }
            }
        }
        backoff + LOG10_ZERO
    }

    /// Natural-log probability.
    pub fn ln_prob(&self, context: &[u32], word: u32) -> f64 {
        self.log10_prob(context, word) * core::f64::consts::LN_10
    }

    pub fn prob(&self, context: &[u32], word: u32) -> f64 {
        libm::pow(10.0, self.log10_prob(context, word))
    }

    /// Full next-word distribution for `context` (zero at `<s>`).
    pub fn distribution(&self, context: &[u32]) -> Vec<f64> {
        let mut dist = self.unigram.clone();
        self.distribution_into(context, &mut dist);
        dist
    }

    /// As [`distribution`](Self::distribution), writing into `dist`.
    pub fn distribution_into(&self, context: &[u32], dist: &mut [f64]) {
        dist.copy_from_slice(&self.unigram);
        let ctx = self.effective_context(context);
        for len in 1..=ctx.len() {
            let h = &ctx[ctx.len() - len..];
            let Some(e) = self.levels[len - 1].get(h) else {
                // a longer context cannot exist without this suffix
                break;
            };
            if e.log10_backoff != 0.0 {
                let g = libm::pow(10.0, e.log10_backoff);
                for p in dist.iter_mut() {
                    *p *= g;
                }
            }
            if let Some(kids) = self.children[len - 1].get(h) {
                let mut key = [0u32; MAX_ORDER];
                key[..len].copy_from_slice(h);
                for &w in kids {
                    key[len] = w;
                    let e = &self.levels[len][&key[..len + 1]];
                    dist[w as usize] = libm::pow(10.0, e.log10_prob);
                }
            }
        }
        dist[self.markers.bos as usize] = 0.0;
    }

    /// Σ_w p(w | context) over every predictable word.
    pub fn context_mass(&self, context: &[u32]) -> f64 {
        self.distribution(context).iter().sum()
    }

    /// The `k` most probable next words, ties broken by id.
    pub fn shortlist(&self, context: &[u32], k: usize) -> Vec<u32> {
        let dist = self.distribution(context);
        top_k(&dist, k)
    }

    /// Contexts that carry a backoff weight (have at least one child).
    pub fn contexts(&self) -> impl Iterator<Item = &[u32]> + '_ {
        core::iter::once(&[][..]).chain(
            self.children
                .iter()
                .flat_map(|level| level.keys().map(|k| k.as_ref())),
        )
    }
}

/// Indices of the `k` largest values, descending, ties by index.
pub fn top_k(values: &[f64], k: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..values.len() as u32).collect();
    let cmp = |a: &u32, b: &u32| {
        values[*b as usize]
            .total_cmp(&values[*a as usize])
            .then(a.cmp(b))
    };
    let k = k.min(ids.len());
    if k == 0 {
        return Vec::new();
    }
    if k < ids.len() {
        ids.select_nth_unstable_by(k - 1, cmp);
        ids.truncate(k);
    }
    ids.sort_unstable_by(cmp);
    ids
}

/// Perplexity over every predicted token (`</s>` included, `<s>` never a
/// target).
pub fn ngram_perplexity(model: &NGramModel, stream: &IdStream) -> Result<f64> {
    let (sum, n) = ngram_log_likelihood(model, &stream.ids);
    if n == 0 {
        return Err(invalid("perplexity of an empty stream"));
    }
    Ok(libm::exp(-sum / n as f64))
}

/// Natural-log likelihood and number of predicted tokens of an id slice.
pub fn ngram_log_likelihood(model: &NGramModel, ids: &[u32]) -> (f64, usize) {
    let bos = model.markers.bos;
    let keep = model.order - 1;
    let mut sum = 0.0;
    let mut n = 0;
    let mut sent_start = 0;
    for (i, &w) in ids.iter().enumerate() {
        if w == bos {
            sent_start = i;
            continue;
        }
        let from = i.saturating_sub(keep).max(sent_start);
        sum += model.ln_prob(&ids[from..i], w);
        n += 1;
    }
    (sum, n)
}

/// Remove every n-gram of order >= 2 seen fewer than `min_count` times and
/// renormalise the backoff weights of the surviving model.
///
/// Raw counts are prefix-monotone, so surviving n-grams always keep their
/// context and suffix.
pub fn prune(model: &NGramModel, min_count: u64) -> Result<NGramModel> {
    let mut levels = model.levels.clone();
    let mut removed = false;
    for level in levels.iter_mut().skip(1) {
        for e in level.values() {
            if e.count.is_none() {
                return Err(invalid("pruning needs a model that carries counts"));
            }
        }
        let before = level.len();
        level.retain(|_, e| e.count.unwrap_or(0) >= min_count);
        removed |= level.len() != before;
    }
    if !removed {
        return Ok(model.clone());
    }
    let order = model.order;
    for level in levels.iter_mut() {
        for e in level.values_mut() {
            e.log10_backoff = 0.0;
        }
    }
    // Recompute backoffs order by order; contexts of length n-1 only need
    // the (already final) lower-order model.
    let mut partial =
        NGramModel::from_levels(1, model.vocab_size, model.markers, levels[..1].to_vec());
    for n in 2..=order {
        let mut kept: HashMap<&[u32], (f64, f64)> = HashMap::new();
        for (k, e) in &levels[n - 1] {
            let lower = partial.prob(&k[1..n - 1], k[n - 1]);
            let s = kept.entry(&k[..n - 1]).or_insert((0.0, 0.0));
            s.0 += libm::pow(10.0, e.log10_prob);
            s.1 += lower;
        }
        let updates: Vec<(Box<[u32]>, f64)> = kept
            .into_iter()
            .map(|(h, (hi, lo))| {
                let num = (1.0 - hi).max(1e-300);
                let den = (1.0 - lo).max(1e-300);
                (Box::from(h), libm::log10(num / den))
            })
            .collect();
        for (h, bo) in updates {
            levels[n - 2]
                .get_mut(&h)
                .expect("context kept")
                .log10_backoff = bo;
        }
        partial = NGramModel::from_levels(n, model.vocab_size, model.markers, levels[..n].to_vec());
    }
    Ok(partial)
}
