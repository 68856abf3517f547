//! Interpolated modified Kneser-Ney estimation.

use alloc::boxed::Box;
use alloc::vec::Vec;

use hashbrown::HashMap;

use super::counts::{CountTable, NGramMap};
use super::model::{Entry, NGramModel};
use crate::error::{invalid, Result};

/// Discounts for adjusted counts 1, 2 and 3+ at one order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discounts {
    pub d: [f64; 3],
    /// True when count-of-counts were degenerate and the fixed 0.75
    /// discount was used instead.
    pub fallback: bool,
}

pub const FALLBACK_DISCOUNT: f64 = 0.75;

impl Discounts {
    /// Chen & Goodman estimates from `n[k-1]` = number of n-grams whose
    /// adjusted count is exactly `k`, for k = 1..=4.
    pub fn from_count_of_counts(n: [u64; 4]) -> Self {
        let fallback = Discounts {
            d: [FALLBACK_DISCOUNT; 3],
            fallback: true,
        };
        if n.contains(&0) {
            return fallback;
        }
        let [n1, n2, n3, n4] = n.map(|x| x as f64);
        let y = n1 / (n1 + 2.0 * n2);
        let d = [
            1.0 - 2.0 * y * n2 / n1,
            2.0 - 3.0 * y * n3 / n2,
            3.0 - 4.0 * y * n4 / n3,
        ];
        if d.iter()
            .enumerate()
            .all(|(i, &x)| x > 0.0 && x < (i + 1) as f64)
        {
            Discounts { d, fallback: false }
        } else {
            fallback
        }
    }

    #[inline]
    pub fn of(&self, count: u64) -> f64 {
        match count {
            0 => 0.0,
            1 => self.d[0],
            2 => self.d[1],
            _ => self.d[2],
        }
    }
}

#[derive(Default, Clone, Copy)]
struct ContextStats {
    total: u64,
    n: [u64; 3],
}

impl ContextStats {
    fn add(&mut self, a: u64) {
        self.total += a;
        self.n[(a.min(3) - 1) as usize] += 1;
    }

    fn gamma(&self, d: &Discounts) -> f64 {
        (d.d[0] * self.n[0] as f64 + d.d[1] * self.n[1] as f64 + d.d[2] * self.n[2] as f64)
            / self.total as f64
    }
}

/// Per-order discounts of a count table, lowest order first.
pub fn discounts(counts: &CountTable) -> Vec<Discounts> {
    let adjusted = counts.adjusted();
    discounts_of(&adjusted, counts.markers().bos)
}

fn discounts_of(adjusted: &[NGramMap<u64>], bos: u32) -> Vec<Discounts> {
    adjusted
        .iter()
        .enumerate()
        .map(|(i, level)| {
            let mut coc = [0u64; 4];
            for (k, &a) in level {
                if i == 0 && k[0] == bos {
                    continue;
                }
                if (1..=4).contains(&a) {
                    coc[(a - 1) as usize] += 1;
                }
            }
            let d = Discounts::from_count_of_counts(coc);
            if d.fallback {
                log::warn!(
                    "order {}: degenerate count-of-counts {:?}, using discount {}",
                    i + 1,
                    coc,
                    FALLBACK_DISCOUNT
                );
            }
            d
        })
        .collect()
}

/// Estimate an interpolated modified Kneser-Ney model.
///
/// Every observed n-gram stores its fully interpolated probability and every
/// observed context stores its interpolation weight as the backoff, so that
/// standard backoff queries reproduce the interpolated distribution.
pub fn estimate_kn(counts: &CountTable) -> Result<NGramModel> {
    if counts.is_empty() {
        return Err(invalid("cannot estimate a model from an empty count table"));
    }
    let order = counts.order();
    let vocab = counts.vocab_size();
    let bos = counts.markers().bos;
    let adjusted = counts.adjusted();
    let disc = discounts_of(&adjusted, bos);

    let mut levels: Vec<NGramMap<Entry>> = Vec::with_capacity(order);

    // unigrams, interpolated with the uniform distribution over all
    // predictable words (everything but <s>)
    let mut stats = ContextStats::default();
    for (k, &a) in &adjusted[0] {
        if k[0] != bos {
            stats.add(a);
        }
    }
    let gamma0 = stats.gamma(&disc[0]);
    let uniform = 1.0 / (vocab - 1) as f64;
    let mut uni = NGramMap::with_capacity(vocab);
    for w in 0..vocab as u32 {
        let key: Box<[u32]> = Box::new([w]);
        let count = counts.get(&key);
        let log10_prob = if w == bos {
            super::model::LOG10_ZERO
        } else {
            let a = adjusted[0].get(&key).copied().unwrap_or(0);
            let p = (a as f64 - disc[0].of(a)).max(0.0) / stats.total as f64 + gamma0 * uniform;
            libm::log10(p)
        };
        uni.insert(
            key,
            Entry {
                log10_prob,
                log10_backoff: 0.0,
                count: Some(count),
            },
        );
    }
    levels.push(uni);

    for n in 2..=order {
        let adj = &adjusted[n - 1];
        let mut ctx: HashMap<&[u32], ContextStats> = HashMap::new();
        for (k, &a) in adj {
            ctx.entry(&k[..n - 1]).or_default().add(a);
        }
        let d = &disc[n - 1];
        let mut level = NGramMap::with_capacity(adj.len());
        for (k, &a) in adj {
            let s = &ctx[&k[..n - 1]];
            let lower = levels[n - 2]
                .get(&k[1..])
                .expect("suffix of an observed n-gram is observed")
                .log10_prob;
            let p = (a as f64 - d.of(a)) / s.total as f64 + s.gamma(d) * libm::pow(10.0, lower);
            level.insert(
                k.clone(),
                Entry {
                    log10_prob: libm::log10(p),
                    log10_backoff: 0.0,
                    count: Some(counts.get(k)),
                },
            );
        }
        for (h, s) in &ctx {
            let e = levels[n - 2]
                .get_mut(*h)
                .expect("prefix of an observed n-gram is observed");
            e.log10_backoff = libm::log10(s.gamma(d));
        }
        levels.push(level);
    }

    Ok(NGramModel::from_levels(
        order,
        vocab,
        counts.markers(),
        levels,
    ))
}
