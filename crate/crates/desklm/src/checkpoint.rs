//! Binary model checkpoints with optional optimizer and trainer sections.
//!
//! Layout (little-endian):
//!
//! ```text
//! "RNLM" u32 version u32 V u32 H u8 activation
//!        f32 W_in[V×H]  f32 W_rec[H×H]  f32 W_out[H×V]
//! "RNLB" u32 version u32 V u32 H u32 P u8 activation
//!        f32 E[V×P]  f32 U[P×H]  f32 W_rec[H×H]  f32 D[H×P]
//! u32 vocabulary bytes, newline-terminated words
//! sections until end of file: [u8;4] tag, u64 length, payload
//!   "RMSP" optimizer accumulators
//!   "TRST" trainer configuration, schedule, RNG, stream states, history
//! ```
//!
//! All matrices are row-major. `W_out` is stored state-to-output (`H×V`).

use std::path::Path;

use desklm_core::corpus::Vocabulary;
use desklm_core::linalg::Matrix;
use desklm_core::rnn::{
    Accumulator, Activation, BlockKind, BottleneckParams, RmspropState, RnnParams,
};
use desklm_core::trainer::{
    EpochLog, Progress, RngState, StreamSet, TrainConfig, TrainMode, TrainerState,
};

use crate::bin::{Reader, Truncated, Writer};
use crate::error::{Error, Result};
use crate::io::{read_bytes, write_atomic};

pub const STANDARD_MAGIC: &[u8; 4] = b"RNLM";
pub const BOTTLENECK_MAGIC: &[u8; 4] = b"RNLB";
pub const VERSION: u32 = 1;
const OPTIMIZER_TAG: &[u8; 4] = b"RMSP";
const TRAINER_TAG: &[u8; 4] = b"TRST";

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Standard(RnnParams<f32>),
    Bottleneck(BottleneckParams<f32>),
}

impl Model {
    pub fn vocab_size(&self) -> usize {
        match self {
            Model::Standard(m) => m.vocab_size(),
            Model::Bottleneck(m) => m.vocab_size(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            Model::Standard(m) => m.hidden_size(),
            Model::Bottleneck(m) => m.hidden_size(),
        }
    }

    pub fn param_count(&self) -> u64 {
        match self {
            Model::Standard(m) => m.param_count(),
            Model::Bottleneck(m) => m.param_count(),
        }
    }
}

impl From<RnnParams<f32>> for Model {
    fn from(m: RnnParams<f32>) -> Self {
        Model::Standard(m)
    }
}

impl From<BottleneckParams<f32>> for Model {
    fn from(m: BottleneckParams<f32>) -> Self {
        Model::Bottleneck(m)
    }
}

impl TryFrom<Model> for RnnParams<f32> {
    type Error = Error;
    fn try_from(m: Model) -> Result<Self> {
        match m {
            Model::Standard(p) => Ok(p),
            Model::Bottleneck(_) => Err(Error::usage("expected a standard model, found a bottleneck model")),
        }
    }
}

impl TryFrom<Model> for BottleneckParams<f32> {
    type Error = Error;
    fn try_from(m: Model) -> Result<Self> {
        match m {
            Model::Bottleneck(p) => Ok(p),
            Model::Standard(_) => Err(Error::usage("expected a bottleneck model, found a standard model")),
        }
    }
}

/// Everything a trainer needs besides the network and optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSection {
    pub cfg: TrainConfig,
    pub streams: StreamSet<f32>,
    pub progress: Progress,
    pub rng: RngState,
    pub history: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Vocabulary,
    pub optimizer: Option<RmspropState<f32>>,
    pub training: Option<TrainingSection>,
}

impl Checkpoint {
    pub fn model_only(model: impl Into<Model>, vocab: Vocabulary) -> Self {
        Checkpoint {
            model: model.into(),
            vocab,
            optimizer: None,
            training: None,
        }
    }

    pub fn from_trainer<N: Into<Model>>(state: TrainerState<f32, N>, vocab: Vocabulary) -> Self {
        Checkpoint {
            model: state.net.into(),
            vocab,
            optimizer: Some(state.rms),
            training: Some(TrainingSection {
                cfg: state.cfg,
                streams: state.streams,
                progress: state.progress,
                rng: state.rng,
                history: state.history,
            }),
        }
    }

    /// The saved trainer state, if the checkpoint carries one.
    pub fn into_trainer<N: TryFrom<Model, Error = Error>>(self) -> Result<(TrainerState<f32, N>, Vocabulary)> {
        let (Some(rms), Some(t)) = (self.optimizer, self.training) else {
            return Err(Error::usage("checkpoint has no trainer state to resume from"));
        };
        let state = TrainerState {
            cfg: t.cfg,
            net: N::try_from(self.model)?,
            rms,
            streams: t.streams,
            progress: t.progress,
            rng: t.rng,
            history: t.history,
        };
        Ok((state, self.vocab))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match &self.model {
            Model::Standard(m) => {
                w.bytes(STANDARD_MAGIC);
                w.u32(VERSION);
                w.u32(m.vocab_size() as u32);
                w.u32(m.hidden_size() as u32);
                w.u8(m.activation.tag());
                w.f32s(m.w_in.as_slice());
                w.f32s(m.w_rec.as_slice());
                w.f32s(m.w_out.transpose().as_slice());
            }
            Model::Bottleneck(m) => {
                w.bytes(BOTTLENECK_MAGIC);
                w.u32(VERSION);
                w.u32(m.vocab_size() as u32);
                w.u32(m.hidden_size() as u32);
                w.u32(m.bottleneck_size() as u32);
                w.u8(m.activation.tag());
                for x in [&m.e, &m.u, &m.w_rec, &m.d] {
                    w.f32s(x.as_slice());
                }
            }
        }
        let text = crate::text::vocab_text(&self.vocab);
        w.u32(text.len() as u32);
        w.bytes(text.as_bytes());
        if let Some(rms) = &self.optimizer {
            section(&mut w, OPTIMIZER_TAG, &optimizer_bytes(rms));
        }
        if let Some(t) = &self.training {
            section(&mut w, TRAINER_TAG, &training_bytes(t));
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::parse(path, None, msg);
        let trunc = |_: Truncated| Error::parse(path, None, "checkpoint is truncated");
        let mut r = Reader::new(bytes);
        let magic = r.take(4).map_err(trunc)?;
        let standard = match magic {
            m if m == STANDARD_MAGIC => true,
            m if m == BOTTLENECK_MAGIC => false,
            _ => return Err(bad("not a model checkpoint (bad magic)")),
        };
        if r.u32().map_err(trunc)? != VERSION {
            return Err(bad("unsupported checkpoint version"));
        }
        let v = r.u32().map_err(trunc)? as usize;
        let h = r.u32().map_err(trunc)? as usize;
        let p = if standard { 0 } else { r.u32().map_err(trunc)? as usize };
        if v == 0 || h == 0 || (!standard && (p == 0 || p > h)) {
            return Err(bad("bad model dimensions"));
        }
        let activation = Activation::from_tag(r.u8().map_err(trunc)?).ok_or_else(|| bad("unknown activation tag"))?;
        let mut mat = |rows: usize, cols: usize| -> Result<Matrix<f32>> {
            Ok(Matrix::from_vec(rows, cols, r.f32s(rows * cols).map_err(trunc)?))
        };
        let model = if standard {
            let w_in = mat(v, h)?;
            let w_rec = mat(h, h)?;
            let w_out = mat(h, v)?.transpose();
            Model::Standard(RnnParams::from_parts(w_in, w_rec, w_out, activation)?)
        } else {
            let e = mat(v, p)?;
            let u = mat(p, h)?;
            let w_rec = mat(h, h)?;
            let d = mat(h, p)?;
            Model::Bottleneck(BottleneckParams::from_parts(e, u, w_rec, d, activation)?)
        };
        let len = r.u32().map_err(trunc)? as usize;
        let text = std::str::from_utf8(r.take(len).map_err(trunc)?).map_err(|_| bad("vocabulary is not UTF-8"))?;
        let words: Vec<String> = text.lines().map(String::from).collect();
        if words.len() != v {
            return Err(bad("vocabulary size differs from the header"));
        }
        let vocab = Vocabulary::from_words(words).map_err(|e| Error::parse(path, None, e.to_string()))?;
        let mut ck = Checkpoint {
            model,
            vocab,
            optimizer: None,
            training: None,
        };
        while !r.is_empty() {
            let tag: [u8; 4] = r.take(4).map_err(trunc)?.try_into().unwrap();
            let len = r.usize().map_err(trunc)?;
            let payload = r.take(len).map_err(trunc)?;
            let mut s = Reader::new(payload);
            match &tag {
                OPTIMIZER_TAG => ck.optimizer = Some(read_optimizer(&mut s).map_err(trunc)?),
                TRAINER_TAG => ck.training = Some(read_training(&mut s, path)?),
                _ => return Err(bad("unknown checkpoint section")),
            }
            if !s.is_empty() {
                return Err(bad("checkpoint section has trailing bytes"));
            }
        }
        if let Some(rms) = &ck.optimizer {
            let ok = match &ck.model {
                Model::Standard(m) => rms.matches(m),
                Model::Bottleneck(m) => rms.matches(m),
            };
            if !ok {
                return Err(bad("optimizer state does not fit the model"));
            }
        }
        Ok(ck)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_bytes(path)?, path)
    }
}

fn section(w: &mut Writer, tag: &[u8; 4], payload: &[u8]) {
    w.bytes(tag);
    w.usize(payload.len());
    w.bytes(payload);
}

/// Optimizer section payload: block count, then per block kind, shape,
/// value count and the f32 accumulators.
pub fn optimizer_bytes(rms: &RmspropState<f32>) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(rms.blocks.len() as u32);
    for b in &rms.blocks {
        w.u8(match b.kind {
            BlockKind::PerWord => 0,
            BlockKind::PerElement => 1,
        });
        w.u32(b.rows as u32);
        w.u32(b.cols as u32);
        w.usize(b.m.len());
        w.f32s(&b.m);
    }
    w.buf
}

fn read_optimizer(r: &mut Reader) -> std::result::Result<RmspropState<f32>, Truncated> {
    let n = r.u32()? as usize;
    let mut blocks = Vec::with_capacity(n.min(16));
    for _ in 0..n {
        let kind = match r.u8()? {
            0 => BlockKind::PerWord,
            1 => BlockKind::PerElement,
            _ => return Err(Truncated),
        };
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let count = r.usize()?;
        let m = r.f32s(count)?;
        blocks.push(Accumulator { kind, rows, cols, m });
    }
    Ok(RmspropState { blocks })
}

fn training_bytes(t: &TrainingSection) -> Vec<u8> {
    let mut w = Writer::new();
    let c = &t.cfg;
    for x in [c.hidden, c.noffset, c.minibatch, c.unroll] {
        w.usize(x);
    }
    for x in [c.eta, c.rho, c.epsilon, c.accumulator_init, c.clip] {
        w.f64(x);
    }
    w.u8(match c.mode {
        TrainMode::Nce => 0,
        TrainMode::Softmax => 1,
    });
    w.usize(c.k);
    w.usize(c.max_epochs);
    w.u64(c.seed);
    w.f64(c.init_scale);
    w.u8(c.activation.tag());

    let p = &t.progress;
    w.usize(p.epoch);
    w.f64(p.eta);
    w.f64(p.initial_valid_ppl);
    w.f64(p.best_valid_ppl);
    w.usize(p.stalled);
    w.u8(p.finished as u8);

    w.bytes(&t.rng.seed);
    w.u64(t.rng.stream);
    w.bytes(&t.rng.word_pos.to_le_bytes());

    let s = &t.streams;
    w.usize(s.len);
    w.usize(s.offsets.len());
    for &o in &s.offsets {
        w.usize(o);
    }
    w.usize(s.states.first().map_or(0, |h| h.len()));
    for h in &s.states {
        w.f32s(h);
    }

    w.usize(t.history.len());
    for e in &t.history {
        w.usize(e.epoch);
        w.f64(e.loss);
        w.f64(e.valid_ppl);
        w.usize(e.tokens);
        w.f64(e.train_seconds);
        w.f64(e.tokens_per_sec);
        w.f64(e.eta);
        w.usize(e.rejected_updates);
    }
    w.buf
}

fn read_training(r: &mut Reader, path: &Path) -> Result<TrainingSection> {
    let trunc = |_: Truncated| Error::parse(path, None, "trainer section is truncated");
    let bad = |msg: &str| Error::parse(path, None, msg);
    let mut u = || r.usize().map_err(trunc);
    let (hidden, noffset, minibatch, unroll) = (u()?, u()?, u()?, u()?);
    let mut f = || r.f64().map_err(trunc);
    let (eta, rho, epsilon, accumulator_init, clip) = (f()?, f()?, f()?, f()?, f()?);
    let mode = match r.u8().map_err(trunc)? {
        0 => TrainMode::Nce,
        1 => TrainMode::Softmax,
        _ => return Err(bad("unknown training mode")),
    };
    let k = r.usize().map_err(trunc)?;
    let max_epochs = r.usize().map_err(trunc)?;
    let seed = r.u64().map_err(trunc)?;
    let init_scale = r.f64().map_err(trunc)?;
    let activation = Activation::from_tag(r.u8().map_err(trunc)?).ok_or_else(|| bad("unknown activation tag"))?;
    let cfg = TrainConfig {
        hidden,
        noffset,
        minibatch,
        unroll,
        eta,
        rho,
        epsilon,
        accumulator_init,
        clip,
        mode,
        k,
        max_epochs,
        seed,
        init_scale,
        activation,
    };

    let progress = Progress {
        epoch: r.usize().map_err(trunc)?,
        eta: r.f64().map_err(trunc)?,
        initial_valid_ppl: r.f64().map_err(trunc)?,
        best_valid_ppl: r.f64().map_err(trunc)?,
        stalled: r.usize().map_err(trunc)?,
        finished: r.u8().map_err(trunc)? != 0,
    };

    let rng = RngState {
        seed: r.take(32).map_err(trunc)?.try_into().unwrap(),
        stream: r.u64().map_err(trunc)?,
        word_pos: r.u128().map_err(trunc)?,
    };

    let len = r.usize().map_err(trunc)?;
    let n = r.usize().map_err(trunc)?;
    if n > len {
        return Err(bad("more streams than training tokens"));
    }
    let offsets = (0..n).map(|_| r.usize()).collect::<std::result::Result<Vec<_>, _>>().map_err(trunc)?;
    let h = r.usize().map_err(trunc)?;
    let states = (0..n).map(|_| r.f32s(h)).collect::<std::result::Result<Vec<_>, _>>().map_err(trunc)?;
    let streams = StreamSet { len, offsets, states };

    let count = r.usize().map_err(trunc)?;
    let mut history = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        history.push(EpochLog {
            epoch: r.usize().map_err(trunc)?,
            loss: r.f64().map_err(trunc)?,
            valid_ppl: r.f64().map_err(trunc)?,
            tokens: r.usize().map_err(trunc)?,
            train_seconds: r.f64().map_err(trunc)?,
            tokens_per_sec: r.f64().map_err(trunc)?,
            eta: r.f64().map_err(trunc)?,
            rejected_updates: r.usize().map_err(trunc)?,
        });
    }
    Ok(TrainingSection {
        cfg,
        streams,
        progress,
        rng,
        history,
    })
}
