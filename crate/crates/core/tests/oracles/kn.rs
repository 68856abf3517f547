//! Naive interpolated modified Kneser-Ney, straight from the definition.
//!
//! Counts are recomputed by brute-force scans of every n-gram occurrence and
//! probabilities by direct recursion; no backoff weights are involved.

use std::collections::{BTreeMap, BTreeSet};

pub struct NaiveKn {
    order: usize,
    vocab: usize,
    bos: u32,
    raw: Vec<BTreeMap<Vec<u32>, u64>>,
    adjusted: Vec<BTreeMap<Vec<u32>, u64>>,
    discounts: Vec<[f64; 3]>,
}

impl NaiveKn {
    pub fn new(ids: &[u32], order: usize, vocab: usize, bos: u32) -> Self {
        // split into sentences at <s>
        let mut sentences: Vec<&[u32]> = Vec::new();
        let mut start = 0;
        for i in 1..=ids.len() {
            if i == ids.len() || ids[i] == bos {
                if i > start {
                    sentences.push(&ids[start..i]);
                }
                start = i;
            }
        }
        let mut raw = vec![BTreeMap::new(); order];
        for s in &sentences {
            for n in 1..=order {
                if s.len() < n {
                    continue;
                }
                for win in s.windows(n) {
                    *raw[n - 1].entry(win.to_vec()).or_insert(0u64) += 1;
                }
            }
        }
        let mut adjusted = vec![BTreeMap::new(); order];
        for n in 1..=order {
            for (g, &c) in &raw[n - 1] {
                let a = if n == order || g[0] == bos {
                    c
                } else {
                    let lefts: BTreeSet<u32> = raw[n]
                        .keys()
                        .filter(|k| k[1..] == g[..])
                        .map(|k| k[0])
                        .collect();
                    lefts.len() as u64
                };
                adjusted[n - 1].insert(g.clone(), a);
            }
        }
        let mut discounts = Vec::new();
        for n in 1..=order {
            let mut coc = [0u64; 4];
            for (g, &a) in &adjusted[n - 1] {
                if n == 1 && g[0] == bos {
                    continue;
                }
                if (1..=4).contains(&a) {
                    coc[a as usize - 1] += 1;
                }
            }
            discounts.push(modified_discounts(coc));
        }
        NaiveKn {
            order,
            vocab,
            bos,
            raw,
            adjusted,
            discounts,
        }
    }

    fn discount(&self, n: usize, a: u64) -> f64 {
        match a {
            0 => 0.0,
            1 => self.discounts[n - 1][0],
            2 => self.discounts[n - 1][1],
            _ => self.discounts[n - 1][2],
        }
    }

    /// p(w | context) for a predictable word.
    pub fn prob(&self, context: &[u32], w: u32) -> f64 {
        let mut h: Vec<u32> = context[context.len().saturating_sub(self.order - 1)..].to_vec();
        if let Some(p) = h.iter().rposition(|&x| x == self.bos) {
            h.drain(..p);
        }
        self.interp(&h, w)
    }

    fn interp(&self, h: &[u32], w: u32) -> f64 {
        let n = h.len() + 1;
        if n == 1 {
            let mut total = 0u64;
            let mut counts = [0u64; 3];
            for (g, &a) in &self.adjusted[0] {
                if g[0] == self.bos || a == 0 {
                    continue;
                }
                total += a;
                counts[(a.min(3) - 1) as usize] += 1;
            }
            let gamma = self.gamma(1, counts, total);
            let a = self.adjusted[0].get(&vec![w]).copied().unwrap_or(0);
            return (a as f64 - self.discount(1, a)).max(0.0) / total as f64
                + gamma / (self.vocab - 1) as f64;
        }
        let lower = self.interp(&h[1..], w);
        let mut total = 0u64;
        let mut counts = [0u64; 3];
        let mut a_hw = 0;
        for (g, &a) in &self.adjusted[n - 1] {
            if g[..n - 1] == h[..] && a > 0 {
                total += a;
                counts[(a.min(3) - 1) as usize] += 1;
                if g[n - 1] == w {
                    a_hw = a;
                }
            }
        }
        if total == 0 {
            return lower;
        }
        let gamma = self.gamma(n, counts, total);
        (a_hw as f64 - self.discount(n, a_hw)).max(0.0) / total as f64 + gamma * lower
    }

    fn gamma(&self, n: usize, counts: [u64; 3], total: u64) -> f64 {
        let d = self.discounts[n - 1];
        (d[0] * counts[0] as f64 + d[1] * counts[1] as f64 + d[2] * counts[2] as f64) / total as f64
    }

    /// Every context (of length < order) that occurs in the training data.
    pub fn observed_contexts(&self) -> Vec<Vec<u32>> {
        let mut out = vec![vec![]];
        for n in 1..self.order {
            out.extend(self.raw[n - 1].keys().cloned());
        }
        out
    }

    pub fn raw_count(&self, g: &[u32]) -> u64 {
        self.raw[g.len() - 1].get(g).copied().unwrap_or(0)
    }
}

fn modified_discounts(n: [u64; 4]) -> [f64; 3] {
    if n.contains(&0) {
        return [0.75; 3];
    }
    let (n1, n2, n3, n4) = (n[0] as f64, n[1] as f64, n[2] as f64, n[3] as f64);
    let y = n1 / (n1 + 2.0 * n2);
    let d = [
        1.0 - 2.0 * y * n2 / n1,
        2.0 - 3.0 * y * n3 / n2,
        3.0 - 4.0 * y * n4 / n3,
    ];
    if d[0] > 0.0 && d[0] < 1.0 && d[1] > 0.0 && d[1] < 2.0 && d[2] > 0.0 && d[2] < 3.0 {
        d
    } else {
        [0.75; 3]
    }
}

/// Random Zipf-flavoured corpus of sentences `<s> w.. </s>` with ids
/// starting at 3 (0 = unk, 1 = bos, 2 = eos). Deterministic in `seed`.
pub fn random_corpus(seed: u64, max_tokens: usize, words: u32) -> Vec<u32> {
    let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let mut ids = Vec::new();
    loop {
        let len = 1 + (next() % 8) as usize;
        if ids.len() + len + 2 > max_tokens {
            break;
        }
        ids.push(1);
        let mut prev = 3u32;
        for _ in 0..len {
            // skewed and mildly dependent on the previous word
            let r = (next() % 1000) as f64 / 1000.0;
            let rank = ((r * r * r) * words as f64) as u32;
            let w = if next() % 3 == 0 {
                (prev + 1 - 3) % words + 3
            } else {
                3 + rank.min(words - 1)
            };
            ids.push(w);
            prev = w;
        }
        ids.push(2);
    }
    ids
}
