//! Tied bottleneck networks, per-matrix linear quantisation and the
//! quantised model file.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::IdStream;
use crate::error::{invalid, malformed, Result};
use crate::eval::{hit_rate, HitRate, RnnPredictor};
use crate::linalg::Matrix;
use crate::ngram::NGramModel;
use crate::rnn::{Activation, BottleneckParams, INIT_SCALE};

pub const DEFAULT_HIDDEN: usize = 1024;
pub const DEFAULT_BOTTLENECK: usize = 512;
pub const MAX_BITS: u8 = 16;

pub const MAGIC: &[u8; 4] = b"RNQZ";
pub const VERSION: u32 = 1;
/// magic, version, V, H, P, activation, four bit widths
const HEADER_BYTES: usize = 4 + 4 + 3 * 4 + 1 + 4;
const RANGE_BYTES: usize = 8;

/// A randomly initialised tied bottleneck network.
pub fn build_bottleneck(
    vocab: usize,
    hidden: usize,
    bottleneck: usize,
    seed: u64,
) -> Result<BottleneckParams<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BottleneckParams::random(vocab, hidden, bottleneck, INIT_SCALE, &mut rng)
}

/// One matrix stored as `bits`-bit codes on a uniform grid over
/// `[min, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub bits: u8,
    pub min: f32,
    pub max: f32,
    pub codes: Vec<u16>,
}

impl QuantizedMatrix {
    pub fn quantize(m: &Matrix<f32>, bits: u8) -> Result<Self> {
        check_bits(bits)?;
        if !m.is_finite() {
            return Err(crate::Error::NonFinite("matrix to quantise"));
        }
        let data = m.as_slice();
        let min = data.iter().copied().fold(f32::INFINITY, f32::min);
        let max = data.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let (min, max) = if data.is_empty() {
            (0.0, 0.0)
        } else {
            (min, max)
        };
        let mut q = QuantizedMatrix {
            rows: m.rows(),
            cols: m.cols(),
            bits,
            min,
            max,
            codes: Vec::new(),
        };
        let step = q.step();
        let top = levels(bits) - 1;
        q.codes = data
            .iter()
            .map(|&w| {
                if step == 0.0 {
                    0
                } else {
                    let c = libm::round((w as f64 - min as f64) / step);
                    c.clamp(0.0, top as f64) as u16
                }
            })
            .collect();
        Ok(q)
    }

    /// Grid spacing; zero for a constant matrix.
    pub fn step(&self) -> f64 {
        (self.max as f64 - self.min as f64) / (levels(self.bits) - 1) as f64
    }

    /// Exact grid value of `code`.
    pub fn value(&self, code: u16) -> f64 {
        self.min as f64 + code as f64 * self.step()
    }

    pub fn dequantize(&self) -> Matrix<f32> {
        Matrix::from_vec(
            self.rows,
            self.cols,
            self.codes.iter().map(|&c| self.value(c) as f32).collect(),
        )
    }

    /// Bytes of packed codes.
    pub fn payload_bytes(&self) -> usize {
        (self.codes.len() * self.bits as usize).div_ceil(8)
    }

    /// Codes packed least-significant bit first with no padding between
    /// codes; only the final byte may hold unused bits.
    pub fn pack(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload_bytes());
        let (mut acc, mut n) = (0u64, 0u32);
        for &c in &self.codes {
            acc |= (c as u64) << n;
            n += self.bits as u32;
            while n >= 8 {
                out.push(acc as u8);
                acc >>= 8;
                n -= 8;
            }
        }
        if n > 0 {
            out.push(acc as u8);
        }
        out
    }

    fn unpack(
        rows: usize,
        cols: usize,
        bits: u8,
        min: f32,
        max: f32,
        bytes: &[u8],
    ) -> Result<Self> {
        let count = rows * cols;
        let mask = (1u64 << bits) - 1;
        let mut codes = Vec::with_capacity(count);
        let (mut acc, mut n, mut it) = (0u64, 0u32, bytes.iter());
        for _ in 0..count {
            while n < bits as u32 {
                let b = it
                    .next()
                    .ok_or_else(|| malformed("truncated code payload"))?;
                acc |= (*b as u64) << n;
                n += 8;
            }
            codes.push((acc & mask) as u16);
            acc >>= bits;
            n -= bits as u32;
        }
        Ok(QuantizedMatrix {
            rows,
            cols,
            bits,
            min,
            max,
            codes,
        })
    }
}

fn levels(bits: u8) -> u32 {
    1u32 << bits
}

fn check_bits(bits: u8) -> Result<()> {
    if !(1..=MAX_BITS).contains(&bits) {
        return Err(invalid("bits per weight must be in 1..=16"));
    }
    Ok(())
}

/// A bottleneck network with every matrix quantised, plus its vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub activation: Activation,
    /// E, U, W_rec, D.
    pub matrices: [QuantizedMatrix; 4],
    pub vocabulary: Vec<String>,
}

pub fn quantize(
    params: &BottleneckParams<f32>,
    bits: u8,
    vocabulary: Vec<String>,
) -> Result<QuantizedModel> {
    quantize_per_matrix(params, [bits; 4], vocabulary)
}

/// As [`quantize`] with a bit width per matrix (E, U, W_rec, D).
pub fn quantize_per_matrix(
    params: &BottleneckParams<f32>,
    bits: [u8; 4],
    vocabulary: Vec<String>,
) -> Result<QuantizedModel> {
    if vocabulary.len() != params.vocab_size() {
        return Err(invalid("vocabulary size differs from the model"));
    }
    if vocabulary.iter().any(|w| w.is_empty() || w.contains('\n')) {
        return Err(invalid("vocabulary words must be non-empty single lines"));
    }
    let mats = [&params.e, &params.u, &params.w_rec, &params.d];
    let q = [0, 1, 2, 3].map(|i| QuantizedMatrix::quantize(mats[i], bits[i]));
    let [e, u, w, d] = q;
    Ok(QuantizedModel {
        activation: params.activation,
        matrices: [e?, u?, w?, d?],
        vocabulary,
    })
}

impl QuantizedModel {
    pub fn vocab_size(&self) -> usize {
        self.matrices[0].rows
    }

    pub fn hidden_size(&self) -> usize {
        self.matrices[2].rows
    }

    pub fn bottleneck_size(&self) -> usize {
        self.matrices[0].cols
    }

    pub fn param_count(&self) -> u64 {
        self.matrices.iter().map(|m| m.codes.len() as u64).sum()
    }

    pub fn dequantize(&self) -> BottleneckParams<f32> {
        let [e, u, w, d] = &self.matrices;
        BottleneckParams::from_parts(
            e.dequantize(),
            u.dequantize(),
            w.dequantize(),
            d.dequantize(),
            self.activation,
        )
        .expect("quantised shapes are consistent")
    }

    fn vocabulary_text_bytes(&self) -> usize {
        self.vocabulary.iter().map(|w| w.len() + 1).sum()
    }

    /// The `RNQZ` file image: header, per-matrix `min`/`max` (f32), packed
    /// codes per matrix, then the vocabulary as a length-prefixed block of
    /// newline-terminated words. Integers and floats are little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(model_size_bytes(self) as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for d in [
            self.vocab_size(),
            self.hidden_size(),
            self.bottleneck_size(),
        ] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(self.activation.tag());
        out.extend(self.matrices.iter().map(|m| m.bits));
        for m in &self.matrices {
            out.extend_from_slice(&m.min.to_le_bytes());
            out.extend_from_slice(&m.max.to_le_bytes());
        }
        for m in &self.matrices {
            out.extend(m.pack());
        }
        out.extend_from_slice(&(self.vocabulary_text_bytes() as u32).to_le_bytes());
        for w in &self.vocabulary {
            out.extend_from_slice(w.as_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(malformed("not a quantised model (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(malformed(alloc::format!(
                "unsupported quantised model version {version}"
            )));
        }
        let (v, h, p) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        if v == 0 || h == 0 || p == 0 || p > h {
            return Err(malformed("bad model dimensions"));
        }
        let activation = Activation::from_tag(r.take(1)?[0])
            .ok_or_else(|| malformed("unknown activation tag"))?;
        let bits: Vec<u8> = r.take(4)?.to_vec();
        if bits.iter().any(|&b| check_bits(b).is_err()) {
            return Err(malformed("bits per weight out of range"));
        }
        let mut ranges = [(0f32, 0f32); 4];
        for range in &mut ranges {
            *range = (r.f32()?, r.f32()?);
            if !(range.0.is_finite() && range.1.is_finite() && range.0 <= range.1) {
                return Err(malformed("bad quantisation range"));
            }
        }
        let shapes = [(v, p), (p, h), (h, h), (h, p)];
        let mut mats = Vec::with_capacity(4);
        for i in 0..4 {
            let (rows, cols) = shapes[i];
            let len = (rows * cols * bits[i] as usize).div_ceil(8);
            let m = QuantizedMatrix::unpack(
                rows,
                cols,
                bits[i],
                ranges[i].0,
                ranges[i].1,
                r.take(len)?,
            )?;
            mats.push(m);
        }
        let text_len = r.u32()? as usize;
        let text = core::str::from_utf8(r.take(text_len)?)
            .map_err(|_| malformed("vocabulary is not UTF-8"))?;
        if r.pos != bytes.len() {
            return Err(malformed("trailing bytes after vocabulary"));
        }
        let vocabulary: Vec<String> = text
            .strip_suffix('\n')
            .map(|t| t.split('\n').map(String::from).collect())
            .unwrap_or_default();
        if vocabulary.len() != v {
            return Err(malformed("vocabulary size differs from the header"));
        }
        let matrices: [QuantizedMatrix; 4] = mats.try_into().expect("four matrices");
        Ok(QuantizedModel {
            activation,
            matrices,
            vocabulary,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| malformed("unexpected end of data"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Size of the serialised model: header, ranges, packed codes and
/// vocabulary text. Equal to `q.to_bytes().len()`.
pub fn model_size_bytes(q: &QuantizedModel) -> u64 {
    let payload: usize = q.matrices.iter().map(|m| m.payload_bytes()).sum();
    (HEADER_BYTES + 4 * RANGE_BYTES + payload + 4 + q.vocabulary_text_bytes()) as u64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub bits: u8,
    pub size_bytes: u64,
    pub hit_rate: HitRate,
}

/// Quantise `base` at each width and measure the top-`top_k` hit rate with
/// shortlists from `shortlist`.
pub fn quantized_hit_rate_sweep(
    base: &BottleneckParams<f32>,
    vocabulary: &[String],
    bits: &[u8],
    stream: &IdStream,
    shortlist: &NGramModel,
    top_k: usize,
    shortlist_k: usize,
) -> Result<Vec<SweepRow>> {
    bits.iter()
        .map(|&b| {
            let q = quantize(base, b, vocabulary.to_vec())?;
            let net = q.dequantize();
            let rate = hit_rate(
                &mut RnnPredictor::new(&net),
                stream,
                shortlist,
                top_k,
                shortlist_k,
            )?;
            Ok(SweepRow {
                bits: b,
                size_bytes: model_size_bytes(&q),
                hit_rate: rate,
            })
        })
        .collect()
}

/// `bits,size_bytes,hit_rate` with a header line.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    use core::fmt::Write;
    let mut s = String::from("bits,size_bytes,hit_rate\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.4}", r.bits, r.size_bytes, r.hit_rate.percent());
    }
    s
}
