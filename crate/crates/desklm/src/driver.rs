//! Wall-clock training loop with per-epoch checkpoints and a CSV log.

use std::path::PathBuf;
use std::time::Instant;

use desklm_core::corpus::{IdStream, Vocabulary};
use desklm_core::rnn::Network;
use desklm_core::trainer::{Clock, EpochLog, Trainer};

use crate::checkpoint::{Checkpoint, Model};
use crate::error::Result;
use crate::io::write_atomic;

pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        WallClock(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

pub const LOG_HEADER: [&str; 5] = ["epoch", "loss", "valid_ppl", "tokens_per_sec", "eta"];

/// `epoch,loss,valid_ppl,tokens_per_sec,eta`, one row per epoch.
pub fn log_csv(history: &[EpochLog]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LOG_HEADER).expect("in-memory csv");
    for e in history {
        w.write_record([
            e.epoch.to_string(),
            format!("{:.6}", e.loss),
            format!("{:.4}", e.valid_ppl),
            format!("{:.1}", e.tokens_per_sec),
            format!("{:e}", e.eta),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

pub struct DriverOptions {
    /// Rewritten after every epoch with the full trainer state.
    pub checkpoint: PathBuf,
    pub log: Option<PathBuf>,
}

/// Train to completion. The checkpoint after each epoch can be passed back
/// through [`Checkpoint::into_trainer`] to resume.
pub fn run<N>(
    trainer: &mut Trainer<f32, N>,
    train: &IdStream,
    valid: &IdStream,
    vocab: &Vocabulary,
    opts: &DriverOptions,
) -> Result<()>
where
    N: Network<f32> + Clone + Into<Model>,
{
    let clock = WallClock::new();
    log::info!(
        "initial valid ppl {:.3}",
        trainer.progress().initial_valid_ppl
    );
    let mut failure = None;
    let outcome = trainer.run(train, valid, &clock, |t, e| {
        log::info!(
            "epoch {} loss {:.4} valid ppl {:.3} ({:.0} tok/s, eta {:e})",
            e.epoch,
            e.loss,
            e.valid_ppl,
            e.tokens_per_sec,
            e.eta
        );
        let write = || -> Result<()> {
            Checkpoint::from_trainer(t.state(), vocab.clone()).write(&opts.checkpoint)?;
            if let Some(log) = &opts.log {
                write_atomic(log, log_csv(t.history()).as_bytes())?;
            }
            Ok(())
        };
        write().map_err(|err| {
            failure = Some(err);
            desklm_core::Error::InvalidArgument("could not save progress".into())
        })
    });
    match failure {
        Some(err) => Err(err),
        None => Ok(outcome?),
    }
}
