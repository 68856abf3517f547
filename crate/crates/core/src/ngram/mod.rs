//! Backoff n-gram language models.
//!
//! Counting ([`count_ngrams`]), interpolated modified Kneser-Ney estimation
//! ([`estimate_kn`]), backoff queries, perplexity, count-based pruning and
//! shortlists. ARPA serialisation lives in the `desklm` crate.

mod counts;
mod kn;
mod model;

pub use counts::{count_ngrams, CountTable, NGramMap, MAX_ORDER};
pub use kn::{discounts, estimate_kn, Discounts, FALLBACK_DISCOUNT};
pub use model::{
    ngram_log_likelihood, ngram_perplexity, prune, top_k, Entry, NGramModel, LOG10_ZERO,
};
