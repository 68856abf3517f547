use rand::Rng;

use crate::error::{invalid, Result};
use crate::linalg::{axpy, Matrix, Scalar};

/// Hidden-unit nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<F: Scalar>(self, x: F) -> F {
        match self {
            Activation::Sigmoid => crate::linalg::sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output<F: Scalar>(self, y: F) -> F {
        match self {
            Activation::Sigmoid => y * (F::one() - y),
            Activation::Tanh => F::one() - y * y,
        }
    }

    /// Activation of a zero pre-activation; the state streams start from.
    pub fn rest<F: Scalar>(self) -> F {
        self.apply(F::zero())
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Sigmoid => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Sigmoid),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// How rmsprop accumulates a parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// One accumulator per row; each row is one word's vector.
    PerWord,
    /// One accumulator per element.
    PerElement,
}

/// Number of weights in the standard model: `2·V·H + H²`.
pub const fn param_count(vocab: u64, hidden: u64) -> u64 {
    2 * vocab * hidden + hidden * hidden
}

/// Number of weights in the tied bottleneck model: `V·P + P·H + H² + H·P`.
pub const fn bottleneck_param_count(vocab: u64, hidden: u64, bottleneck: u64) -> u64 {
    vocab * bottleneck + 2 * bottleneck * hidden + hidden * hidden
}

/// Default half-width of the uniform initialisation.
pub const INIT_SCALE: f64 = 0.1;

fn uniform_matrix<F: Scalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    scale: f64,
    rng: &mut R,
) -> Matrix<F> {
    Matrix::from_fn(rows, cols, |_, _| F::lit(rng.random_range(-scale..=scale)))
}

/// Weights of the bias-free Elman RNN.
///
/// `w_out` is kept word-major (`V×H`, row `w` is the output vector of word
/// `w`), i.e. the transpose of the `H×V` state-to-output matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams<F> {
    pub w_in: Matrix<F>,
    pub w_rec: Matrix<F>,
    pub w_out: Matrix<F>,
    pub activation: Activation,
}

impl<F: Scalar> RnnParams<F> {
    pub fn zeros(vocab: usize, hidden: usize) -> Self {
        RnnParams {
            w_in: Matrix::zeros(vocab, hidden),
            w_rec: Matrix::zeros(hidden, hidden),
            w_out: Matrix::zeros(vocab, hidden),
            activation: Activation::Sigmoid,
        }
    }

    /// Uniform initialisation in `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(vocab: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        RnnParams {
            w_in: uniform_matrix(vocab, hidden, scale, rng),
            w_rec: uniform_matrix(hidden, hidden, scale, rng),
            w_out: uniform_matrix(vocab, hidden, scale, rng),
            activation: Activation::Sigmoid,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn from_parts(
        w_in: Matrix<F>,
        w_rec: Matrix<F>,
        w_out: Matrix<F>,
        activation: Activation,
    ) -> Result<Self> {
        let (v, h) = (w_in.rows(), w_in.cols());
        if w_rec.rows() != h || w_rec.cols() != h || w_out.rows() != v || w_out.cols() != h {
            return Err(crate::Error::ShapeMismatch(alloc::format!(
                "w_in {}x{}, w_rec {}x{}, w_out {}x{}",
                v,
                h,
                w_rec.rows(),
                w_rec.cols(),
                w_out.rows(),
                w_out.cols()
            )));
        }
        Ok(RnnParams {
            w_in,
            w_rec,
            w_out,
            activation,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.w_in.rows()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_rec.rows()
    }

    pub fn param_count(&self) -> u64 {
        param_count(self.vocab_size() as u64, self.hidden_size() as u64)
    }

    pub fn is_finite(&self) -> bool {
        self.w_in.is_finite() && self.w_rec.is_finite() && self.w_out.is_finite()
    }

    pub fn cast<G: Scalar>(&self) -> RnnParams<G> {
        RnnParams {
            w_in: self.w_in.cast(),
            w_rec: self.w_rec.cast(),
            w_out: self.w_out.cast(),
            activation: self.activation,
        }
    }
}

/// Bottleneck RNN with the embedding tied between input and output.
///
/// `h = act(Uᵀ·E[w] + W_rec·h_prev)` and `s_w = E[w]·(Dᵀ·h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BottleneckParams<F> {
    /// `V×P`
    pub e: Matrix<F>,
    /// `P×H`
    pub u: Matrix<F>,
    /// `H×H`
    pub w_rec: Matrix<F>,
    /// `H×P`
    pub d: Matrix<F>,
    pub activation: Activation,
}

impl<F: Scalar> BottleneckParams<F> {
    pub fn random<R: Rng + ?Sized>(
        vocab: usize,
        hidden: usize,
        bottleneck: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if bottleneck == 0 || bottleneck > hidden {
            return Err(invalid("bottleneck width must be in 1..=hidden"));
        }
        Ok(BottleneckParams {
            e: uniform_matrix(vocab, bottleneck, scale, rng),
            u: uniform_matrix(bottleneck, hidden, scale, rng),
            w_rec: uniform_matrix(hidden, hidden, scale, rng),
            d: uniform_matrix(hidden, bottleneck, scale, rng),
            activation: Activation::Sigmoid,
        })
    }

    pub fn from_parts(
        e: Matrix<F>,
        u: Matrix<F>,
        w_rec: Matrix<F>,
        d: Matrix<F>,
        activation: Activation,
    ) -> Result<Self> {
        let (p, h) = (e.cols(), w_rec.rows());
        if u.rows() != p || u.cols() != h || w_rec.cols() != h || d.rows() != h || d.cols() != p {
            return Err(crate::Error::ShapeMismatch(alloc::format!(
                "bottleneck shapes E {}x{}, U {}x{}, W_rec {}x{}, D {}x{}",
                e.rows(),
                p,
                u.rows(),
                u.cols(),
                h,
                w_rec.cols(),
                d.rows(),
                d.cols()
            )));
        }
        Ok(BottleneckParams {
            e,
            u,
            w_rec,
            d,
            activation,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.e.rows()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_rec.rows()
    }

    pub fn bottleneck_size(&self) -> usize {
        self.e.cols()
    }

    pub fn param_count(&self) -> u64 {
        bottleneck_param_count(
            self.vocab_size() as u64,
            self.hidden_size() as u64,
            self.bottleneck_size() as u64,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.e.is_finite() && self.u.is_finite() && self.w_rec.is_finite() && self.d.is_finite()
    }

    pub fn cast<G: Scalar>(&self) -> BottleneckParams<G> {
        BottleneckParams {
            e: self.e.cast(),
            u: self.u.cast(),
            w_rec: self.w_rec.cast(),
            d: self.d.cast(),
            activation: self.activation,
        }
    }
}

/// `out += Mᵀ·x` where `M` is `x.len() × out.len()`.
#[inline]
pub(crate) fn add_transposed<F: Scalar>(m: &Matrix<F>, x: &[F], out: &mut [F]) {
    for (r, &xr) in x.iter().enumerate() {
        axpy(xr, m.row(r), out);
    }
}
