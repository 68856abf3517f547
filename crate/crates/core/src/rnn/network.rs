//! The interface shared by the standard and bottleneck models, plus the
//! forward computations built on it.

use alloc::vec;
use alloc::vec::Vec;

use super::grads::Gradients;
use super::params::{add_transposed, Activation, BlockKind, BottleneckParams, RnnParams};
use crate::linalg::{axpy, log_sum_exp, Matrix, Scalar};

/// A recurrent language model whose hidden update is
/// `h = act(input(w) + W_rec·h_prev)` and whose scores are
/// `s_w = Y[w]·features(h)` for an output table `Y`.
///
/// Parameters are exposed as an ordered list of blocks; gradients and
/// optimiser state use the same indexing.
pub trait Network<F: Scalar> {
    fn vocab_size(&self) -> usize;
    fn hidden_size(&self) -> usize;
    /// Width of the vector scored against output rows.
    fn feature_size(&self) -> usize;
    fn activation(&self) -> Activation;
    fn w_rec(&self) -> &Matrix<F>;
    /// `V × feature_size`, row `w` scores word `w`.
    fn output_table(&self) -> &Matrix<F>;

    /// `pre += input(word)`
    fn add_input(&self, word: u32, pre: &mut [F]);
    fn features(&self, h: &[F], out: &mut [F]);

    /// Accumulate the gradient of `input(word)` given `delta = dL/dpre`.
    fn input_backward(&self, word: u32, delta: &[F], grads: &mut Gradients<F>);
    /// Given `dfeat = dL/dfeatures(h)`, add `dL/dh` into `dh` and accumulate
    /// the gradient of any parameters inside `features`.
    fn features_backward(&self, h: &[F], dfeat: &[F], dh: &mut [F], grads: &mut Gradients<F>);

    fn block_kinds(&self) -> Vec<BlockKind>;
    fn blocks(&self) -> Vec<&Matrix<F>>;
    fn blocks_mut(&mut self) -> Vec<&mut Matrix<F>>;
    fn recurrent_block(&self) -> usize;
    fn output_block(&self) -> usize;
}

impl<F: Scalar> Network<F> for RnnParams<F> {
    fn vocab_size(&self) -> usize {
        self.w_in.rows()
    }

    fn hidden_size(&self) -> usize {
        self.w_rec.rows()
    }

    fn feature_size(&self) -> usize {
        self.w_rec.rows()
    }

    fn activation(&self) -> Activation {
        self.activation
    }

    fn w_rec(&self) -> &Matrix<F> {
        &self.w_rec
    }

    fn output_table(&self) -> &Matrix<F> {
        &self.w_out
    }

    #[inline]
    fn add_input(&self, word: u32, pre: &mut [F]) {
        axpy(F::one(), self.w_in.row(word as usize), pre);
    }

    #[inline]
    fn features(&self, h: &[F], out: &mut [F]) {
        out.copy_from_slice(h);
    }

    fn input_backward(&self, word: u32, delta: &[F], grads: &mut Gradients<F>) {
        axpy(F::one(), delta, grads.blocks[0].row_mut(word as usize));
    }

    fn features_backward(&self, _h: &[F], dfeat: &[F], dh: &mut [F], _grads: &mut Gradients<F>) {
        axpy(F::one(), dfeat, dh);
    }

    fn block_kinds(&self) -> Vec<BlockKind> {
        vec![
            BlockKind::PerWord,
            BlockKind::PerElement,
            BlockKind::PerWord,
        ]
    }

    fn blocks(&self) -> Vec<&Matrix<F>> {
        vec![&self.w_in, &self.w_rec, &self.w_out]
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix<F>> {
        vec![&mut self.w_in, &mut self.w_rec, &mut self.w_out]
    }

    fn recurrent_block(&self) -> usize {
        1
    }

    fn output_block(&self) -> usize {
        2
    }
}

impl<F: Scalar> Network<F> for BottleneckParams<F> {
    fn vocab_size(&self) -> usize {
        self.e.rows()
    }

    fn hidden_size(&self) -> usize {
        self.w_rec.rows()
    }

    fn feature_size(&self) -> usize {
        self.e.cols()
    }

    fn activation(&self) -> Activation {
        self.activation
    }

    fn w_rec(&self) -> &Matrix<F> {
        &self.w_rec
    }

    fn output_table(&self) -> &Matrix<F> {
        &self.e
    }

    #[inline]
    fn add_input(&self, word: u32, pre: &mut [F]) {
        add_transposed(&self.u, self.e.row(word as usize), pre);
    }

    #[inline]
    fn features(&self, h: &[F], out: &mut [F]) {
        out.iter_mut().for_each(|x| *x = F::zero());
        add_transposed(&self.d, h, out);
    }

    fn input_backward(&self, word: u32, delta: &[F], grads: &mut Gradients<F>) {
        let e = self.e.row(word as usize);
        let gu = &mut grads.blocks[1];
        for (p, &ep) in e.iter().enumerate() {
            if ep != F::zero() {
                axpy(ep, delta, gu.row_mut(p));
            }
        }
        let ge = grads.blocks[0].row_mut(word as usize);
        for (p, g) in ge.iter_mut().enumerate() {
            *g += F::dot(self.u.row(p), delta);
        }
    }

    fn features_backward(&self, h: &[F], dfeat: &[F], dh: &mut [F], grads: &mut Gradients<F>) {
        let gd = &mut grads.blocks[3];
        for (j, &hj) in h.iter().enumerate() {
            axpy(hj, dfeat, gd.row_mut(j));
            dh[j] += F::dot(self.d.row(j), dfeat);
        }
    }

    fn block_kinds(&self) -> Vec<BlockKind> {
        vec![
            BlockKind::PerWord,
            BlockKind::PerElement,
            BlockKind::PerElement,
            BlockKind::PerElement,
        ]
    }

    fn blocks(&self) -> Vec<&Matrix<F>> {
        vec![&self.e, &self.u, &self.w_rec, &self.d]
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix<F>> {
        vec![&mut self.e, &mut self.u, &mut self.w_rec, &mut self.d]
    }

    fn recurrent_block(&self) -> usize {
        2
    }

    fn output_block(&self) -> usize {
        0
    }
}

/// The state every stream starts from: `act(0)` in every unit.
pub fn initial_state<F: Scalar, N: Network<F> + ?Sized>(net: &N) -> Vec<F> {
    vec![net.activation().rest::<F>(); net.hidden_size()]
}

/// `h = act(input(word) + W_rec·h_prev)`
pub fn forward_step<F: Scalar, N: Network<F> + ?Sized>(
    net: &N,
    h_prev: &[F],
    word: u32,
    h: &mut [F],
) {
    net.w_rec().mul_vec(h_prev, h);
    net.add_input(word, h);
    let act = net.activation();
    h.iter_mut().for_each(|x| *x = act.apply(*x));
}

/// One step for a batch of streams; the recurrent product of every stream
/// is a single batched multiply.
pub fn forward_batch<F: Scalar, N: Network<F> + ?Sized>(
    net: &N,
    h_prev: &[&[F]],
    words: &[u32],
    h: &mut [&mut [F]],
) {
    net.w_rec().mul_batch(h_prev, h);
    let act = net.activation();
    for (out, &w) in h.iter_mut().zip(words) {
        net.add_input(w, out);
        out.iter_mut().for_each(|x| *x = act.apply(*x));
    }
}

/// Scores of every word for hidden state `h`.
pub fn scores<F: Scalar, N: Network<F> + ?Sized>(net: &N, h: &[F]) -> Vec<F> {
    let mut feat = vec![F::zero(); net.feature_size()];
    net.features(h, &mut feat);
    let mut s = vec![F::zero(); net.vocab_size()];
    net.output_table().mul_vec(&feat, &mut s);
    s
}

/// Normalised next-word distribution, computed in f64 with max subtraction.
pub fn softmax_prob<F: Scalar, N: Network<F> + ?Sized>(net: &N, h: &[F]) -> Vec<f64> {
    softmax(&scores(net, h))
}

pub fn softmax<F: Scalar>(scores: &[F]) -> Vec<f64> {
    let lse = log_sum_exp(scores);
    scores.iter().map(|s| libm::exp(s.as_f64() - lse)).collect()
}

/// `ln Σ_w exp(s_w)` for hidden state `h`.
pub fn log_partition<F: Scalar, N: Network<F> + ?Sized>(net: &N, h: &[F]) -> f64 {
    log_sum_exp(&scores(net, h))
}
