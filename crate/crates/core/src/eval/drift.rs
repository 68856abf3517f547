use alloc::vec::Vec;

use crate::corpus::IdStream;
use crate::error::{invalid, Result};
use crate::linalg::Scalar;
use crate::rnn::{forward_step, initial_state, log_partition, Network};

pub const MIN_DRIFT_CONTEXTS: usize = 100;

/// Distribution of `ln Z = ln Σ_w exp(s_w)` over a sample of contexts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
}

/// Quantile of sorted data by linear interpolation between order
/// statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn log_partitions<F: Scalar, N: Network<F> + ?Sized>(net: &N, contexts: &[Vec<F>]) -> Vec<f64> {
    contexts.iter().map(|h| log_partition(net, h)).collect()
}

pub fn normalization_drift<F: Scalar, N: Network<F> + ?Sized>(
    net: &N,
    contexts: &[Vec<F>],
) -> Result<DriftStats> {
    if contexts.len() < MIN_DRIFT_CONTEXTS {
        return Err(invalid("normalisation drift needs at least 100 contexts"));
    }
    if contexts.iter().any(|h| h.len() != net.hidden_size()) {
        return Err(invalid("context size differs from the hidden size"));
    }
    let mut z = log_partitions(net, contexts);
    if z.iter().any(|x| x.is_nan()) {
        return Err(crate::error::Error::NonFinite("log partition"));
    }
    z.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&z, 0.25), quantile(&z, 0.75));
    Ok(DriftStats {
        count: z.len(),
        mean: z.iter().sum::<f64>() / z.len() as f64,
        median: quantile(&z, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        min: z[0],
        max: z[z.len() - 1],
    })
}

/// Hidden states reached while reading `stream` from rest, taken just before
/// `count` evenly spaced predicted tokens.
pub fn collect_contexts<F: Scalar, N: Network<F> + ?Sized>(
    net: &N,
    stream: &IdStream,
    count: usize,
) -> Result<Vec<Vec<F>>> {
    let ids = &stream.ids;
    let bos = stream.markers.bos;
    let positions: Vec<usize> = (1..ids.len()).filter(|&i| ids[i] != bos).collect();
    if positions.len() < count {
        return Err(invalid(
            "stream has fewer predicted tokens than requested contexts",
        ));
    }
    let mut want = (0..count)
        .map(|j| positions[j * positions.len() / count])
        .peekable();
    let mut out = Vec::with_capacity(count);
    let mut h = initial_state(net);
    let mut next = h.clone();
    for (i, &w) in ids.iter().enumerate() {
        let Some(&p) = want.peek() else { break };
        forward_step(net, &h, w, &mut next);
        core::mem::swap(&mut h, &mut next);
        if i + 1 == p {
            out.push(h.clone());
            want.next();
        }
    }
    Ok(out)
}
