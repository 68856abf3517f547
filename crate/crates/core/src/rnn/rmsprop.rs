use alloc::vec;
use alloc::vec::Vec;

use super::grads::Gradients;
use super::network::Network;
use super::params::BlockKind;
use crate::error::{invalid, Error, Result};
use crate::linalg::Scalar;

pub const DEFAULT_RHO: f64 = 0.9995;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmspropConfig {
    pub eta: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl RmspropConfig {
    pub fn new(eta: f64) -> Self {
        RmspropConfig {
            eta,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(invalid("rho must be in (0, 1)"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) || !(self.epsilon >= 0.0) {
            return Err(invalid("eta and epsilon must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Squared-gradient accumulators for one parameter block: one value per row
/// for per-word blocks, one per element otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator<F> {
    pub kind: BlockKind,
    pub rows: usize,
    pub cols: usize,
    pub m: Vec<F>,
}

/// Optimiser state, block-aligned with the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState<F> {
    pub blocks: Vec<Accumulator<F>>,
}

impl<F: Scalar> RmspropState<F> {
    /// Every accumulator starts at `init`.
    pub fn new<N: Network<F> + ?Sized>(net: &N, init: F) -> Self {
        let blocks = net
            .blocks()
            .iter()
            .zip(net.block_kinds())
            .map(|(m, kind)| {
                let n = match kind {
                    BlockKind::PerWord => m.rows(),
                    BlockKind::PerElement => m.rows() * m.cols(),
                };
                Accumulator {
                    kind,
                    rows: m.rows(),
                    cols: m.cols(),
                    m: vec![init; n],
                }
            })
            .collect();
        RmspropState { blocks }
    }

    pub fn num_values(&self) -> usize {
        self.blocks.iter().map(|b| b.m.len()).sum()
    }

    /// Bytes of accumulator storage.
    pub fn memory_bytes(&self) -> usize {
        self.num_values() * F::BYTES
    }

    pub fn matches<N: Network<F> + ?Sized>(&self, net: &N) -> bool {
        let kinds = net.block_kinds();
        let blocks = net.blocks();
        self.blocks.len() == blocks.len()
            && self
                .blocks
                .iter()
                .zip(blocks.iter().zip(&kinds))
                .all(|(a, (m, &k))| a.kind == k && a.rows == m.rows() && a.cols == m.cols())
    }
}

/// One rmsprop step.
///
/// Per-element blocks: `m ← ρm + (1−ρ)g²`, `w ← w − η·g/√(m+ε)`.
/// Per-word blocks keep one `m` per row, fed with the mean of the row's
/// squared gradients; that single value scales the whole row's step.
///
/// A gradient containing NaN or infinity is rejected before anything is
/// modified.
pub fn rmsprop_update<F: Scalar, N: Network<F> + ?Sized>(
    net: &mut N,
    grads: &Gradients<F>,
    state: &mut RmspropState<F>,
    cfg: &RmspropConfig,
) -> Result<()> {
    cfg.validate()?;
    if !state.matches(net) || grads.blocks.len() != state.blocks.len() {
        return Err(Error::ShapeMismatch(
            "optimiser state does not fit the network".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    let rho = F::lit(cfg.rho);
    let one_minus = F::lit(1.0 - cfg.rho);
    let eta = F::lit(cfg.eta);
    let eps = F::lit(cfg.epsilon);
    for ((w, g), acc) in net
        .blocks_mut()
        .into_iter()
        .zip(&grads.blocks)
        .zip(&mut state.blocks)
    {
        match acc.kind {
            BlockKind::PerElement => {
                let gs = g.matrix().as_slice();
                for ((wi, &gi), mi) in w.as_mut_slice().iter_mut().zip(gs).zip(&mut acc.m) {
                    *mi = rho * *mi + one_minus * gi * gi;
                    *wi -= eta * gi / (*mi + eps).sqrt();
                }
            }
            BlockKind::PerWord => {
                acc.m.iter_mut().for_each(|m| *m = rho * *m);
                let inv_cols = F::lit(1.0 / acc.cols as f64);
                for r in g.active_rows() {
                    let gr = g.matrix().row(r);
                    let mean_sq = F::dot(gr, gr) * inv_cols;
                    let m = &mut acc.m[r];
                    *m += one_minus * mean_sq;
                    let scale = eta / (*m + eps).sqrt();
                    for (wi, &gi) in w.row_mut(r).iter_mut().zip(gr) {
                        *wi -= scale * gi;
                    }
                }
            }
        }
    }
    Ok(())
}
