//! Truncated backpropagation through time over a batch of streams.

use alloc::vec;
use alloc::vec::Vec;

use super::grads::Gradients;
use super::nce::{logistic, softplus, NceConfig};
use super::network::{forward_batch, Network};
use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, log_sum_exp, Scalar};

/// Training criterion for the output layer.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Exact softmax cross-entropy.
    Softmax,
    /// Noise-contrastive estimation. `samples[b]` holds `k` noise words for
    /// every step of stream `b`, step-major.
    Nce {
        cfg: &'a NceConfig,
        samples: &'a [Vec<u32>],
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpttConfig {
    /// Elementwise gradient clip; non-positive or infinite disables it.
    pub clip: f64,
    /// Targets equal to this id are not scored (the sentence-start marker).
    pub skip_target: Option<u32>,
}

pub const DEFAULT_CLIP: f64 = 1.0;

impl Default for BpttConfig {
    fn default() -> Self {
        BpttConfig {
            clip: DEFAULT_CLIP,
            skip_target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpttOutput<F> {
    /// Summed loss over scored targets.
    pub loss: f64,
    pub scored: usize,
    /// Hidden state of each stream after its last step.
    pub final_states: Vec<Vec<F>>,
}

fn validate<F: Scalar, N: Network<F> + ?Sized>(
    net: &N,
    windows: &[&[u32]],
    h_init: &[&[F]],
    objective: &Objective,
) -> Result<()> {
    if windows.len() != h_init.len() {
        return Err(invalid("one initial state per window is required"));
    }
    let v = net.vocab_size();
    for (w, h) in windows.iter().zip(h_init) {
        if w.len() < 2 {
            return Err(invalid("a window needs at least one input and one target"));
        }
        if h.len() != net.hidden_size() {
            return Err(Error::ShapeMismatch("initial hidden state".into()));
        }
        if w.iter().any(|&x| x as usize >= v) {
            return Err(invalid("word id out of range"));
        }
    }
    if let Objective::Nce { cfg, samples } = objective {
        if cfg.vocab_size() != v {
            return Err(Error::ShapeMismatch("noise distribution vocabulary".into()));
        }
        if samples.len() != windows.len()
            || samples
                .iter()
                .zip(windows)
                .any(|(s, w)| s.len() != (w.len() - 1) * cfg.k)
        {
            return Err(invalid("need k noise samples per step of every window"));
        }
        if samples.iter().flatten().any(|&x| x as usize >= v) {
            return Err(invalid("noise sample out of range"));
        }
    }
    Ok(())
}

/// Add the gradients of the summed loss over `windows` into `grads`.
///
/// Window `b` feeds `windows[b][t]` and predicts `windows[b][t + 1]`,
/// starting from hidden state `h_init[b]`. Windows may differ in length.
/// No clipping is applied.
pub fn bptt_accumulate<F: Scalar, N: Network<F> + ?Sized>(
    net: &N,
    windows: &[&[u32]],
    h_init: &[&[F]],
    objective: &Objective,
    skip_target: Option<u32>,
    grads: &mut Gradients<F>,
) -> Result<BpttOutput<F>> {
    validate(net, windows, h_init, objective)?;
    let nb = windows.len();
    let h = net.hidden_size();
    let p = net.feature_size();
    let steps: Vec<usize> = windows.iter().map(|w| w.len() - 1).collect();
    let tmax = steps.iter().copied().max().unwrap_or(0);
    let act = net.activation();
    let table = net.output_table();
    let out_block = net.output_block();
    let rec_block = net.recurrent_block();

    let mut states: Vec<Vec<F>> = vec![vec![F::zero(); nb * h]; tmax + 1];
    for (b, h0) in h_init.iter().enumerate() {
        states[0][b * h..(b + 1) * h].copy_from_slice(h0);
    }
    let mut dfeat: Vec<Vec<F>> = vec![vec![F::zero(); nb * p]; tmax];
    let mut feat = vec![F::zero(); p];
    let mut dense = match objective {
        Objective::Softmax => vec![F::zero(); net.vocab_size()],
        Objective::Nce { .. } => Vec::new(),
    };
    let mut loss = 0.0f64;
    let mut scored = 0usize;

    for t in 0..tmax {
        let active: Vec<usize> = (0..nb).filter(|&b| steps[b] > t).collect();
        {
            let (done, rest) = states.split_at_mut(t + 1);
            let prev = &done[t];
            let xs: Vec<&[F]> = active.iter().map(|&b| &prev[b * h..(b + 1) * h]).collect();
            let words: Vec<u32> = active.iter().map(|&b| windows[b][t]).collect();
            let mut outs: Vec<&mut [F]> = rest[0]
                .chunks_mut(h)
                .enumerate()
                .filter(|(b, _)| steps[*b] > t)
                .map(|(_, c)| c)
                .collect();
            forward_batch(net, &xs, &words, &mut outs);
        }
        for &b in &active {
            let target = windows[b][t + 1];
            if Some(target) == skip_target {
                continue;
            }
            scored += 1;
            net.features(&states[t + 1][b * h..(b + 1) * h], &mut feat);
            let df = &mut dfeat[t][b * p..(b + 1) * p];
            match objective {
                Objective::Softmax => {
                    table.mul_vec(&feat, &mut dense);
                    let lse = log_sum_exp(&dense);
                    loss += lse - dense[target as usize].as_f64();
                    let gblock = &mut grads.blocks[out_block];
                    for (w, s) in dense.iter().enumerate() {
                        let mut g = libm::exp(s.as_f64() - lse);
                        if w == target as usize {
                            g -= 1.0;
                        }
                        let g = F::lit(g);
                        axpy(g, table.row(w), df);
                        axpy(g, &feat, gblock.row_mut(w));
                    }
                }
                Objective::Nce { cfg, samples } => {
                    let k = cfg.k;
                    let noise = &samples[b][t * k..(t + 1) * k];
                    let gblock = &mut grads.blocks[out_block];
                    let st = F::dot(table.row(target as usize), &feat).as_f64();
                    let d = cfg.logit(st, target);
                    loss += softplus(-d);
                    let g = F::lit(logistic(d) - 1.0);
                    axpy(g, table.row(target as usize), df);
                    axpy(g, &feat, gblock.row_mut(target as usize));
                    for &w in noise {
                        let s = F::dot(table.row(w as usize), &feat).as_f64();
                        let d = cfg.logit(s, w);
                        loss += softplus(d);
                        let g = F::lit(logistic(d));
                        axpy(g, table.row(w as usize), df);
                        axpy(g, &feat, gblock.row_mut(w as usize));
                    }
                }
            }
        }
    }

    let mut carry = vec![F::zero(); nb * h];
    let mut dh = vec![F::zero(); h];
    for t in (0..tmax).rev() {
        for b in (0..nb).filter(|&b| steps[b] > t) {
            let h_next = &states[t + 1][b * h..(b + 1) * h];
            let h_prev = &states[t][b * h..(b + 1) * h];
            let c = &mut carry[b * h..(b + 1) * h];
            dh.copy_from_slice(c);
            net.features_backward(h_next, &dfeat[t][b * p..(b + 1) * p], &mut dh, grads);
            for (d, &y) in dh.iter_mut().zip(h_next) {
                *d *= act.derivative_from_output(y);
            }
            let grec = &mut grads.blocks[rec_block];
            for (i, &di) in dh.iter().enumerate() {
                if di != F::zero() {
                    axpy(di, h_prev, grec.row_mut(i));
                }
            }
            net.input_backward(windows[b][t], &dh, grads);
            c.fill(F::zero());
            net.w_rec().add_mul_vec_transposed(&dh, c);
        }
    }

    let final_states = (0..nb)
        .map(|b| states[steps[b]][b * h..(b + 1) * h].to_vec())
        .collect();
    Ok(BpttOutput {
        loss,
        scored,
        final_states,
    })
}

/// Gradients of the summed loss over `windows`, clipped elementwise after
/// accumulation. `grads` is cleared first.
pub fn bptt_grads<F: Scalar, N: Network<F> + ?Sized>(
    net: &N,
    windows: &[&[u32]],
    h_init: &[&[F]],
    objective: &Objective,
    cfg: &BpttConfig,
    grads: &mut Gradients<F>,
) -> Result<BpttOutput<F>> {
    grads.clear();
    let out = bptt_accumulate(net, windows, h_init, objective, cfg.skip_target, grads)?;
    if cfg.clip > 0.0 && cfg.clip.is_finite() {
        grads.clip(F::lit(cfg.clip));
    }
    Ok(out)
}
