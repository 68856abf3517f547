use alloc::vec;
use alloc::vec::Vec;

use super::network::Network;
use super::params::BlockKind;
use crate::linalg::{Matrix, Scalar};

/// Gradient of one parameter block.
///
/// Per-word blocks remember which rows were written so that clearing and
/// updating cost is proportional to the words actually seen.
#[derive(Debug, Clone)]
pub struct BlockGrad<F> {
    pub kind: BlockKind,
    g: Matrix<F>,
    touched: Vec<u32>,
    mark: Vec<bool>,
}

impl<F: Scalar> BlockGrad<F> {
    pub fn new(kind: BlockKind, rows: usize, cols: usize) -> Self {
        BlockGrad {
            kind,
            g: Matrix::zeros(rows, cols),
            touched: Vec::new(),
            mark: match kind {
                BlockKind::PerWord => vec![false; rows],
                BlockKind::PerElement => Vec::new(),
            },
        }
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        if self.kind == BlockKind::PerWord && !self.mark[r] {
            self.mark[r] = true;
            self.touched.push(r as u32);
        }
        self.g.row_mut(r)
    }

    pub fn matrix(&self) -> &Matrix<F> {
        &self.g
    }

    /// Rows that may be non-zero, ascending for per-word blocks.
    pub fn active_rows(&self) -> Vec<usize> {
        match self.kind {
            BlockKind::PerWord => {
                let mut rows: Vec<usize> = self.touched.iter().map(|&r| r as usize).collect();
                rows.sort_unstable();
                rows
            }
            BlockKind::PerElement => (0..self.g.rows()).collect(),
        }
    }

    pub fn clear(&mut self) {
        match self.kind {
            BlockKind::PerWord => {
                for &r in &self.touched {
                    self.g.row_mut(r as usize).fill(F::zero());
                    self.mark[r as usize] = false;
                }
                self.touched.clear();
            }
            BlockKind::PerElement => self.g.as_mut_slice().fill(F::zero()),
        }
    }

    fn for_active(&mut self, mut f: impl FnMut(&mut [F])) {
        match self.kind {
            BlockKind::PerWord => {
                for &r in &self.touched {
                    f(self.g.row_mut(r as usize));
                }
            }
            BlockKind::PerElement => f(self.g.as_mut_slice()),
        }
    }

    pub fn clip(&mut self, limit: F) {
        self.for_active(|xs| {
            for x in xs {
                *x = x.max(-limit).min(limit);
            }
        });
    }

    pub fn is_finite(&self) -> bool {
        match self.kind {
            BlockKind::PerWord => self
                .touched
                .iter()
                .all(|&r| self.g.row(r as usize).iter().all(|x| x.is_finite())),
            BlockKind::PerElement => self.g.is_finite(),
        }
    }

    pub fn add(&mut self, other: &BlockGrad<F>) {
        for r in other.active_rows() {
            let src = other.g.row(r);
            for (d, &s) in self.row_mut(r).iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}

/// Gradients for every block of a [`Network`], in block order.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    pub blocks: Vec<BlockGrad<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn for_network<N: Network<F> + ?Sized>(net: &N) -> Self {
        let blocks = net
            .blocks()
            .iter()
            .zip(net.block_kinds())
            .map(|(m, kind)| BlockGrad::new(kind, m.rows(), m.cols()))
            .collect();
        Gradients { blocks }
    }

    pub fn clear(&mut self) {
        self.blocks.iter_mut().for_each(BlockGrad::clear);
    }

    /// Clip every element to `[-limit, limit]`.
    pub fn clip(&mut self, limit: F) {
        self.blocks.iter_mut().for_each(|b| b.clip(limit));
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(BlockGrad::is_finite)
    }

    pub fn add(&mut self, other: &Gradients<F>) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.add(b);
        }
    }
}
