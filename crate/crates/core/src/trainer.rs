//! Offset-stream packing and the minibatched truncated-BPTT training loop.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::IdStream;
use crate::error::{invalid, Error, Result};
use crate::eval::rnn_perplexity;
use crate::linalg::Scalar;
use crate::rnn::{
    bptt_grads, initial_state, Activation, BpttConfig, Gradients, NceConfig, Network, NoiseSampler,
    Objective, RmspropConfig, RmspropState, RnnParams, DEFAULT_CLIP, DEFAULT_EPSILON,
    DEFAULT_NOISE_SAMPLES, DEFAULT_RHO, INIT_SCALE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainMode {
    #[default]
    Nce,
    Softmax,
}

/// Validation perplexity above this multiple of the initial one aborts.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub noffset: usize,
    pub minibatch: usize,
    pub unroll: usize,
    pub eta: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Starting value of every rmsprop accumulator.
    pub accumulator_init: f64,
    pub clip: f64,
    pub mode: TrainMode,
    pub k: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub init_scale: f64,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 256,
            noffset: 128,
            minibatch: 8,
            unroll: 16,
            eta: 1e-3,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
            accumulator_init: 0.0,
            clip: DEFAULT_CLIP,
            mode: TrainMode::Nce,
            k: DEFAULT_NOISE_SAMPLES,
            max_epochs: 10,
            seed: 1,
            init_scale: INIT_SCALE,
            activation: Activation::Sigmoid,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.noffset == 0 || self.minibatch == 0 || self.unroll == 0 {
            return Err(invalid(
                "hidden, noffset, minibatch and unroll must be at least 1",
            ));
        }
        if self.mode == TrainMode::Nce && self.k == 0 {
            return Err(invalid("NCE needs k >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(invalid("max_epochs must be at least 1"));
        }
        if !(self.accumulator_init >= 0.0) {
            return Err(invalid("accumulator_init must be non-negative"));
        }
        self.rmsprop(self.eta).validate()
    }

    pub fn streams(&self) -> usize {
        self.noffset * self.minibatch
    }

    pub fn rmsprop(&self, eta: f64) -> RmspropConfig {
        RmspropConfig {
            eta,
            rho: self.rho,
            epsilon: self.epsilon,
        }
    }
}

/// `N = noffset × minibatch` persistent streams over a corpus of `len`
/// tokens. Stream `i` starts at `⌊i·len/N⌋`; each epoch it advances by one
/// segment, so that one epoch visits every position exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSet<F> {
    pub len: usize,
    pub offsets: Vec<usize>,
    pub states: Vec<Vec<F>>,
}

pub fn make_offset_streams<F: Scalar, N: Network<F> + ?Sized>(
    net: &N,
    len: usize,
    noffset: usize,
    minibatch: usize,
) -> Result<StreamSet<F>> {
    let n = noffset * minibatch;
    if n == 0 {
        return Err(invalid("need at least one stream"));
    }
    if len < n {
        return Err(invalid(alloc::format!(
            "corpus of {len} tokens is shorter than the {n} streams"
        )));
    }
    let offsets = (0..n)
        .map(|i| ((i as u128 * len as u128) / n as u128) as usize)
        .collect();
    Ok(StreamSet {
        len,
        offsets,
        states: vec![initial_state(net); n],
    })
}

impl<F: Scalar> StreamSet<F> {
    pub fn num_streams(&self) -> usize {
        self.offsets.len()
    }

    /// Positions `[start, end)` of segment `j`.
    pub fn segment(&self, j: usize) -> (usize, usize) {
        let end = self.offsets.get(j + 1).copied().unwrap_or(self.len);
        (self.offsets[j], end)
    }

    /// Segment stream `i` covers during `epoch`.
    pub fn segment_of(&self, i: usize, epoch: usize) -> usize {
        (i + epoch) % self.num_streams()
    }
}

/// Clock used to report throughput; the core crate cannot read time.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// A clock that never advances.
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Mean training loss per scored token.
    pub loss: f64,
    pub valid_ppl: f64,
    /// Positions processed in the epoch.
    pub tokens: usize,
    pub train_seconds: f64,
    pub tokens_per_sec: f64,
    /// Learning rate used during the epoch.
    pub eta: f64,
    /// Updates dropped because of non-finite gradients.
    pub rejected_updates: usize,
}

/// Scheduling state carried between epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Progress {
    /// Completed epochs.
    pub epoch: usize,
    pub eta: f64,
    pub initial_valid_ppl: f64,
    pub best_valid_ppl: f64,
    /// Consecutive epochs without improvement.
    pub stalled: usize,
    pub finished: bool,
}

/// Position of the sampling RNG, enough to recreate it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Everything needed to continue training bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState<F, N> {
    pub cfg: TrainConfig,
    pub net: N,
    pub rms: RmspropState<F>,
    pub streams: StreamSet<F>,
    pub progress: Progress,
    pub rng: RngState,
    pub history: Vec<EpochLog>,
}

pub struct Trainer<F, N> {
    cfg: TrainConfig,
    net: N,
    rms: RmspropState<F>,
    streams: StreamSet<F>,
    progress: Progress,
    rng: ChaCha8Rng,
    history: Vec<EpochLog>,
    nce: Option<(NceConfig, NoiseSampler)>,
    grads: Gradients<F>,
}

impl<F: Scalar> Trainer<F, RnnParams<F>> {
    /// Fresh standard model initialised from `cfg.seed`.
    pub fn new(cfg: TrainConfig, train: &IdStream, valid: &IdStream) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let net = RnnParams::random(train.vocab_size, cfg.hidden, cfg.init_scale, &mut rng)
            .with_activation(cfg.activation);
        Trainer::with_network(cfg, net, rng, train, valid)
    }
}

impl<F: Scalar, N: Network<F> + Clone> Trainer<F, N> {
    /// Train an already initialised network; `rng` continues to drive noise
    /// sampling.
    pub fn with_network(
        cfg: TrainConfig,
        net: N,
        rng: ChaCha8Rng,
        train: &IdStream,
        valid: &IdStream,
    ) -> Result<Self> {
        cfg.validate()?;
        if train.vocab_size != net.vocab_size() || valid.vocab_size != net.vocab_size() {
            return Err(invalid(
                "training data, validation data and model vocabularies differ",
            ));
        }
        let streams = make_offset_streams(&net, train.len(), cfg.noffset, cfg.minibatch)?;
        let initial = rnn_perplexity(&net, valid)?;
        let rms = RmspropState::new(&net, F::lit(cfg.accumulator_init));
        let progress = Progress {
            epoch: 0,
            eta: cfg.eta,
            initial_valid_ppl: initial,
            best_valid_ppl: initial,
            stalled: 0,
            finished: false,
        };
        let nce = Self::noise(&cfg, train)?;
        let grads = Gradients::for_network(&net);
        Ok(Trainer {
            cfg,
            net,
            rms,
            streams,
            progress,
            rng,
            history: Vec::new(),
            nce,
            grads,
        })
    }

    fn noise(cfg: &TrainConfig, train: &IdStream) -> Result<Option<(NceConfig, NoiseSampler)>> {
        Ok(match cfg.mode {
            TrainMode::Nce => {
                let c = NceConfig::unigram(train, cfg.k)?;
                let s = NoiseSampler::new(&c)?;
                Some((c, s))
            }
            TrainMode::Softmax => None,
        })
    }

    /// Continue from a saved state. `train` must be the same corpus.
    pub fn resume(state: TrainerState<F, N>, train: &IdStream) -> Result<Self> {
        state.cfg.validate()?;
        if state.streams.len != train.len()
            || state.streams.num_streams() != state.cfg.streams()
            || !state.rms.matches(&state.net)
        {
            return Err(Error::ShapeMismatch(
                "saved trainer state does not fit the training data".into(),
            ));
        }
        let nce = Self::noise(&state.cfg, train)?;
        let grads = Gradients::for_network(&state.net);
        Ok(Trainer {
            rng: state.rng.restore(),
            cfg: state.cfg,
            net: state.net,
            rms: state.rms,
            streams: state.streams,
            progress: state.progress,
            history: state.history,
            nce,
            grads,
        })
    }

    pub fn state(&self) -> TrainerState<F, N> {
        TrainerState {
            cfg: self.cfg.clone(),
            net: self.net.clone(),
            rms: self.rms.clone(),
            streams: self.streams.clone(),
            progress: self.progress.clone(),
            rng: RngState::capture(&self.rng),
            history: self.history.clone(),
        }
    }

    pub fn network(&self) -> &N {
        &self.net
    }

    pub fn into_network(self) -> N {
        self.net
    }

    pub fn progress(&self) -> &Progress {
        &self.progress
    }

    pub fn history(&self) -> &[EpochLog] {
        &self.history
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn rmsprop_state(&self) -> &RmspropState<F> {
        &self.rms
    }

    pub fn is_finished(&self) -> bool {
        self.progress.finished
    }

    /// One pass over every training position. Returns `(mean loss, tokens,
    /// rejected updates)`.
    pub fn train_epoch(&mut self, train: &IdStream) -> Result<(f64, usize, usize)> {
        if train.len() != self.streams.len {
            return Err(invalid("training corpus changed length"));
        }
        let ids = &train.ids;
        let len = ids.len();
        let n = self.streams.num_streams();
        let epoch = self.progress.epoch;
        let mut cursor = vec![0usize; n];
        let mut end = vec![0usize; n];
        for i in 0..n {
            let j = self.streams.segment_of(i, epoch);
            let (s, e) = self.streams.segment(j);
            cursor[i] = s;
            end[i] = e;
            if j == 0 && epoch > 0 {
                // wrapped around the corpus
                self.streams.states[i] = initial_state(&self.net);
            }
        }
        let bcfg = BpttConfig {
            clip: self.cfg.clip,
            skip_target: None,
        };
        let rcfg = self.cfg.rmsprop(self.progress.eta);
        let mb = self.cfg.minibatch;
        let t_max = self.cfg.unroll;
        let k = self.cfg.k;

        let mut loss = 0.0;
        let mut scored = 0usize;
        let mut tokens = 0usize;
        let mut rejected = 0usize;
        let mut windows: Vec<Vec<u32>> = Vec::with_capacity(mb);
        let mut samples: Vec<Vec<u32>> = Vec::with_capacity(mb);
        let mut members: Vec<usize> = Vec::with_capacity(mb);
        loop {
            let mut any = false;
            for g in 0..self.cfg.noffset {
                members.clear();
                windows.clear();
                samples.clear();
                for i in g * mb..(g + 1) * mb {
                    if cursor[i] < end[i] {
                        let steps = t_max.min(end[i] - cursor[i]);
                        windows.push((0..=steps).map(|t| ids[(cursor[i] + t) % len]).collect());
                        members.push(i);
                    }
                }
                if members.is_empty() {
                    continue;
                }
                any = true;
                if let Some((_, sampler)) = &self.nce {
                    for w in &windows {
                        let mut s = vec![0u32; (w.len() - 1) * k];
                        sampler.fill(&mut self.rng, &mut s);
                        samples.push(s);
                    }
                }
                let objective = match &self.nce {
                    Some((c, _)) => Objective::Nce {
                        cfg: c,
                        samples: &samples,
                    },
                    None => Objective::Softmax,
                };
                let wins: Vec<&[u32]> = windows.iter().map(|w| w.as_slice()).collect();
                let h0: Vec<&[F]> = members
                    .iter()
                    .map(|&i| self.streams.states[i].as_slice())
                    .collect();
                let out = bptt_grads(&self.net, &wins, &h0, &objective, &bcfg, &mut self.grads)?;
                match crate::rnn::rmsprop_update(&mut self.net, &self.grads, &mut self.rms, &rcfg) {
                    Ok(()) => {}
                    Err(Error::NonFinite(what)) => {
                        log::warn!("rejected update with non-finite {what}");
                        rejected += 1;
                    }
                    Err(e) => return Err(e),
                }
                loss += out.loss;
                scored += out.scored;
                for ((&i, w), h) in members.iter().zip(&windows).zip(out.final_states) {
                    let steps = w.len() - 1;
                    cursor[i] += steps;
                    tokens += steps;
                    self.streams.states[i] = h;
                }
            }
            if !any {
                break;
            }
        }
        let mean = if scored > 0 {
            loss / scored as f64
        } else {
            0.0
        };
        if !mean.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        Ok((mean, tokens, rejected))
    }

    /// Record an epoch's validation result and apply the schedule: halve
    /// eta when validation fails to improve, stop after two consecutive
    /// failures or at `max_epochs`.
    pub fn finish_epoch(&mut self, log: EpochLog) -> Result<()> {
        self.progress.epoch += 1;
        let ppl = log.valid_ppl;
        let initial = self.progress.initial_valid_ppl;
        self.history.push(log);
        if !ppl.is_finite() || ppl > DIVERGENCE_FACTOR * initial {
            self.progress.finished = true;
            return Err(Error::Diverged {
                epoch: self.progress.epoch,
                valid_ppl: ppl,
                initial_ppl: initial,
            });
        }
        if ppl < self.progress.best_valid_ppl {
            self.progress.best_valid_ppl = ppl;
            self.progress.stalled = 0;
        } else {
            self.progress.stalled += 1;
            self.progress.eta *= 0.5;
        }
        if self.progress.stalled >= 2 || self.progress.epoch >= self.cfg.max_epochs {
            self.progress.finished = true;
        }
        Ok(())
    }

    /// Train one epoch and validate it.
    pub fn step_epoch(
        &mut self,
        train: &IdStream,
        valid: &IdStream,
        clock: &dyn Clock,
    ) -> Result<EpochLog> {
        let eta = self.progress.eta;
        let start = clock.seconds();
        let (loss, tokens, rejected) = self.train_epoch(train)?;
        let seconds = clock.seconds() - start;
        let valid_ppl = rnn_perplexity(&self.net, valid)?;
        let log = EpochLog {
            epoch: self.progress.epoch + 1,
            loss,
            valid_ppl,
            tokens,
            train_seconds: seconds,
            tokens_per_sec: if seconds > 0.0 {
                tokens as f64 / seconds
            } else {
                0.0
            },
            eta,
            rejected_updates: rejected,
        };
        self.finish_epoch(log.clone())?;
        Ok(log)
    }

    /// Train until the schedule stops, calling `on_epoch` after each epoch.
    pub fn run(
        &mut self,
        train: &IdStream,
        valid: &IdStream,
        clock: &dyn Clock,
        mut on_epoch: impl FnMut(&Self, &EpochLog) -> Result<()>,
    ) -> Result<()> {
        while !self.progress.finished {
            let log = self.step_epoch(train, valid, clock)?;
            on_epoch(self, &log)?;
        }
        Ok(())
    }
}

/// Train a standard model from scratch with exact-softmax validation.
pub fn train(
    cfg: TrainConfig,
    train: &IdStream,
    valid: &IdStream,
) -> Result<(RnnParams<f32>, Vec<EpochLog>)> {
    if valid.predicted_tokens() == 0 {
        return Err(invalid("validation data is empty"));
    }
    let mut t = Trainer::<f32, _>::new(cfg, train, valid)?;
    t.run(train, valid, &NoClock, |_, _| Ok(()))?;
    let history = t.history.clone();
    Ok((t.into_network(), history))
}
