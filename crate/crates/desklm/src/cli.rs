//! The `desklm` command line.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 on a data error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use desklm_core::compress::{self, QuantizedModel, SweepRow};
use desklm_core::corpus::{build_vocab, dedup_with_stats, encode, DedupConfig, Vocabulary};
use desklm_core::eval::{
    fit_scaling_curve, hit_rate, interpolation_parts, rescore_nbest, rnn_perplexity, CurveFamily,
    InterpolationConfig, NGramPredictor, RescoreConfig, RnnPredictor, RnnScoring, ScalingPoint,
};
use desklm_core::filter::{entropy_filter, threshold_for_fraction, FilterConfig};
use desklm_core::ngram::{count_ngrams, estimate_kn, ngram_perplexity, prune, NGramModel};
use desklm_core::rnn::{Activation, BottleneckParams, RnnParams};
use desklm_core::trainer::{TrainConfig, TrainMode, Trainer};

use crate::arpa::{read_arpa_file, write_arpa};
use crate::checkpoint::{Checkpoint, Model, BOTTLENECK_MAGIC, STANDARD_MAGIC};
use crate::driver::{self, DriverOptions};
use crate::error::{Error, Result};
use crate::io::{read_bytes, write_atomic};
use crate::manifest::Manifest;
use crate::nbest::{format_rescored, read_nbest};
use crate::text::{
    corpus_text, ids_text, normalize_file, read_corpus, read_stream, read_vocab, vocab_text,
};

const CORPUS_FMT: &str = "\
Corpus files: UTF-8 text, one sentence per line, tokens separated by single
spaces. `-` means stdin/stdout; paths ending in .gz are gzip-compressed.";

const VOCAB_FMT: &str = "\
Vocabulary files: one word per line; the line number (from 0) is the word id.
Must contain <unk>, <s> and </s>.";

const ARPA_FMT: &str = "\
ARPA files: the standard backoff format: \\data\\ with `ngram N=count` lines,
then one \\N-grams: section per order with `log10prob<TAB>w1 .. wN[<TAB>log10backoff]`,
then \\end\\. The unigram section order defines the vocabulary.";

const MODEL_FMT: &str = "\
RNN checkpoints (little-endian binary): magic RNLM (standard) or RNLB
(bottleneck), u32 version, u32 V, u32 H, [u32 P], u8 activation, f32 matrices
row-major, u32 vocabulary length and newline-separated words, then optional
tagged sections: RMSP (rmsprop accumulators) and TRST (trainer state for
--resume). Quantized RNQZ files are accepted wherever a model is read.";

const CSV_FMT: &str = "Reports are CSV with a header line.";

fn help(parts: &[&str]) -> String {
    parts.join("\n\n")
}

#[derive(Debug, Parser)]
#[command(
    name = "desklm",
    version,
    about = "Corpus preparation, n-gram and recurrent language models, evaluation and compression",
    after_help = "Every run writes <out-dir>/<subcommand>.manifest.json with the resolved \
configuration and SHA-256 checksums of its inputs and outputs.\n\nExit status: 0 success, 1 usage error, 2 data error."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct Global {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads for data-parallel steps.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    /// Directory that receives the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Raw text to one normalised sentence per line.
    #[command(after_help = help(&["Input: raw UTF-8 text.", CORPUS_FMT]))]
    Normalize(NormalizeArgs),
    /// Drop repeated rolling buffers of sentences.
    #[command(after_help = CORPUS_FMT)]
    Dedup(DedupArgs),
    /// Most frequent words plus the sentence markers.
    #[command(after_help = help(&[CORPUS_FMT, VOCAB_FMT]))]
    Vocab(VocabArgs),
    /// Map words to ids, one sentence per line including <s> and </s>.
    #[command(after_help = help(&[CORPUS_FMT, VOCAB_FMT, "Output: space-separated ids per sentence."]))]
    Encode(EncodeArgs),
    /// Estimate an interpolated modified Kneser-Ney model.
    #[command(after_help = help(&[CORPUS_FMT, VOCAB_FMT, ARPA_FMT]))]
    NgramTrain(NgramTrainArgs),
    /// Perplexity of an ARPA model on a corpus.
    #[command(after_help = help(&[ARPA_FMT, CORPUS_FMT, "Output: the perplexity on one line."]))]
    NgramPpl(NgramPplArgs),
    /// Keep sentences from windows scoring below a cross-entropy threshold.
    #[command(after_help = help(&[ARPA_FMT, CORPUS_FMT]))]
    Filter(FilterArgs),
    /// Thresholds that keep given fractions of the corpus.
    #[command(after_help = help(&[ARPA_FMT, CORPUS_FMT, CSV_FMT, "Columns: target_fraction,threshold,fraction."]))]
    FilterThreshold(FilterThresholdArgs),
    /// Train a recurrent model with NCE or exact softmax.
    #[command(after_help = help(&[CORPUS_FMT, VOCAB_FMT, MODEL_FMT, "Training log: CSV epoch,loss,valid_ppl,tokens_per_sec,eta."]))]
    RnnTrain(RnnTrainArgs),
    /// Exact-softmax perplexity of a recurrent model.
    #[command(after_help = help(&[MODEL_FMT, CORPUS_FMT, "Output: the perplexity on one line."]))]
    RnnPpl(RnnPplArgs),
    /// Perplexity of the interpolated recurrent + n-gram model.
    #[command(after_help = help(&[MODEL_FMT, ARPA_FMT, CORPUS_FMT, CSV_FMT, "Columns: lambda,rnn_ppl,ngram_ppl,interpolated_ppl."]))]
    InterpPpl(InterpPplArgs),
    /// Top-k hit rate with n-gram shortlists.
    #[command(after_help = help(&[MODEL_FMT, ARPA_FMT, CORPUS_FMT, CSV_FMT, "Columns: hits,positions,hit_rate (percent)."]))]
    HitRate(HitRateArgs),
    /// Rerank n-best lists with the interpolated model.
    #[command(after_help = help(&["N-best files: tab-separated `utt-id  acoustic  old-lm  w1 w2 ...`; \
consecutive lines with one id form a list. Output appends `new-lm  new-total  rank` (tab-separated, rank 1 is best).", MODEL_FMT, ARPA_FMT]))]
    Rescore(RescoreArgs),
    /// Quantise a bottleneck model to a compact RNQZ file.
    #[command(after_help = help(&[MODEL_FMT, "RNQZ files: magic RNQZ, u32 version, u32 V/H/P, u8 activation, \
4 x u8 bit widths (E,U,W_rec,D), 4 x (f32 min, f32 max), LSB-first packed codes per matrix, u32 vocabulary length, words."]))]
    Compress(CompressArgs),
    /// Hit rate and file size across quantisation widths.
    #[command(after_help = help(&[MODEL_FMT, ARPA_FMT, CORPUS_FMT, CSV_FMT, "Columns: bits,size_bytes,hit_rate."]))]
    QuantizeSweep(QuantizeSweepArgs),
    /// Fit a perplexity-vs-training-words curve.
    #[command(after_help = help(&["Input: CSV with header words,ppl.", CSV_FMT, "Columns: family,a,b,c,asymptote,rms,drop."]))]
    FitCurve(FitCurveArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Normalize(_) => "normalize",
            Command::Dedup(_) => "dedup",
            Command::Vocab(_) => "vocab",
            Command::Encode(_) => "encode",
            Command::NgramTrain(_) => "ngram-train",
            Command::NgramPpl(_) => "ngram-ppl",
            Command::Filter(_) => "filter",
            Command::FilterThreshold(_) => "filter-threshold",
            Command::RnnTrain(_) => "rnn-train",
            Command::RnnPpl(_) => "rnn-ppl",
            Command::InterpPpl(_) => "interp-ppl",
            Command::HitRate(_) => "hit-rate",
            Command::Rescore(_) => "rescore",
            Command::Compress(_) => "compress",
            Command::QuantizeSweep(_) => "quantize-sweep",
            Command::FitCurve(_) => "fit-curve",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct NormalizeArgs {
    #[arg(default_value = "-")]
    pub input: PathBuf,
    /// Treat every input line as a separate document.
    #[arg(long)]
    pub lines: bool,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DedupArgs {
    #[arg(default_value = "-")]
    pub input: PathBuf,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
    /// A buffer closes once its text reaches this many characters.
    #[arg(long, default_value_t = 140)]
    pub min_chars: usize,
    /// Number of distinct buffers the filter is sized for.
    #[arg(long, default_value_t = 1 << 20)]
    pub expected_buffers: usize,
    /// Target false-positive rate at that size.
    #[arg(long, default_value_t = 1e-3)]
    pub fp_rate: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct VocabArgs {
    #[arg(default_value = "-")]
    pub input: PathBuf,
    /// Total vocabulary size including <unk>, <s> and </s>.
    #[arg(long)]
    pub size: usize,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EncodeArgs {
    #[arg(default_value = "-")]
    pub input: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct NgramTrainArgs {
    #[arg(long)]
    pub text: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub order: usize,
    /// Drop n-grams (order >= 2) seen fewer than this many times.
    #[arg(long)]
    pub prune: Option<u64>,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct NgramPplArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "-")]
    pub text: PathBuf,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FilterModels {
    /// In-domain model (ARPA).
    #[arg(long)]
    pub in_domain: PathBuf,
    /// General-domain model (ARPA), same vocabulary.
    #[arg(long)]
    pub general: PathBuf,
    #[arg(long, default_value = "-")]
    pub text: PathBuf,
    /// Sentences per scoring window.
    #[arg(long, default_value_t = desklm_core::filter::DEFAULT_BATCH_SENTENCES)]
    pub batch: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FilterArgs {
    #[command(flatten)]
    pub models: FilterModels,
    /// Keep threshold in nats per word.
    #[arg(long, conflicts_with = "fraction", required_unless_present = "fraction")]
    pub threshold: Option<f64>,
    /// Choose the threshold that keeps about this fraction of words.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FilterThresholdArgs {
    #[command(flatten)]
    pub models: FilterModels,
    /// Target kept fractions, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub fractions: Vec<f64>,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Nce,
    Softmax,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationArg {
    Sigmoid,
    Tanh,
}

#[derive(Debug, Args, Serialize)]
pub struct RnnTrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Checkpoint, rewritten after every epoch.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Training log CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run; its saved
    /// configuration replaces the training flags.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Train a tied bottleneck model with this projection width.
    #[arg(long)]
    pub bottleneck: Option<usize>,
    #[arg(long)]
    pub noffset: Option<usize>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub unroll: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub accumulator_init: Option<f64>,
    /// Elementwise gradient clip; 0 disables it
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Noise samples per target.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationArg>,
}

#[derive(Debug, Args, Serialize)]
pub struct RnnPplArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "-")]
    pub text: PathBuf,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InterpPplArgs {
    #[arg(long)]
    pub rnn: PathBuf,
    #[arg(long)]
    pub ngram: PathBuf,
    #[arg(long, default_value = "-")]
    pub text: PathBuf,
    /// Weight of the recurrent model.
    #[arg(long, default_value_t = 0.5, conflicts_with = "tune")]
    pub lambda: f64,
    /// Choose lambda by minimising perplexity on this corpus.
    #[arg(long)]
    pub tune: Option<PathBuf>,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ShortlistArgs {
    /// ARPA model that proposes the candidates.
    #[arg(long)]
    pub shortlist: PathBuf,
    #[arg(long, default_value = "-")]
    pub text: PathBuf,
    #[arg(long, default_value_t = desklm_core::eval::DEFAULT_TOP_K)]
    pub top_k: usize,
    #[arg(long, default_value_t = desklm_core::eval::DEFAULT_SHORTLIST)]
    pub shortlist_size: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct HitRateArgs {
    /// Ranking model: an RNN checkpoint, RNQZ file or ARPA model.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub shortlist: ShortlistArgs,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RescoreArgs {
    #[arg(long)]
    pub nbest: PathBuf,
    #[arg(long)]
    pub rnn: PathBuf,
    #[arg(long)]
    pub ngram: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lm_scale: f64,
    /// Word insertion penalty.
    #[arg(long, default_value_t = 0.0)]
    pub wip: f64,
    /// Use unnormalised scores exp(s - ln_z) instead of the softmax.
    #[arg(long)]
    pub fast: bool,
    #[arg(long, default_value_t = 0.0, requires = "fast")]
    pub ln_z: f64,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CompressArgs {
    /// Bottleneck checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// One width for all matrices, or four for E,U,W_rec,D.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub bits: Vec<u8>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct QuantizeSweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub shortlist: ShortlistArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub bits: Vec<u8>,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    /// ppl = a·exp(b·w^-c)
    ExpPower,
    /// ppl = a + b·w^-c
    PowerOffset,
}

#[derive(Debug, Args, Serialize)]
pub struct FitCurveArgs {
    #[arg(default_value = "-")]
    pub points: PathBuf,
    #[arg(long, value_enum, default_value = "exp-power")]
    pub family: FamilyArg,
    /// The `drop` column is 1 - ppl(to)/ppl(from).
    #[arg(long, default_value_t = 1e12)]
    pub drop_from: f64,
    #[arg(long, default_value_t = 1e13)]
    pub drop_to: f64,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

/// Parse `args` (program name first), run, and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("desklm {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if cli.global.threads == 0 {
        return Err(Error::usage("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build()
        .map_err(|e| Error::usage(e.to_string()))?;
    let config = json!({ "global": &cli.global, "command": &cli.command });
    let mut m = Manifest::new(cli.command.name(), config);
    pool.install(|| dispatch(cli, &mut m))?;
    m.write(&cli.global.out_dir)?;
    Ok(())
}

fn dispatch(cli: &Cli, m: &mut Manifest) -> Result<()> {
    let seed = cli.global.seed;
    match &cli.command {
        Command::Normalize(a) => normalize(a, m),
        Command::Dedup(a) => dedup(a, m),
        Command::Vocab(a) => vocab(a, m),
        Command::Encode(a) => encode_cmd(a, m),
        Command::NgramTrain(a) => ngram_train(a, m),
        Command::NgramPpl(a) => ngram_ppl(a, m),
        Command::Filter(a) => filter(a, m),
        Command::FilterThreshold(a) => filter_threshold(a, m),
        Command::RnnTrain(a) => rnn_train(a, seed, m),
        Command::RnnPpl(a) => rnn_ppl(a, m),
        Command::InterpPpl(a) => interp_ppl(a, m),
        Command::HitRate(a) => hit_rate_cmd(a, m),
        Command::Rescore(a) => rescore(a, m),
        Command::Compress(a) => compress_cmd(a, m),
        Command::QuantizeSweep(a) => quantize_sweep(a, m),
        Command::FitCurve(a) => fit_curve(a, m),
    }
}

fn emit(m: &mut Manifest, path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes)?;
    m.output(path, bytes)
}

fn inputs(m: &mut Manifest, paths: &[&Path]) -> Result<()> {
    for p in paths {
        m.input(p)?;
    }
    Ok(())
}

fn normalize(a: &NormalizeArgs, m: &mut Manifest) -> Result<()> {
    m.input(&a.input)?;
    let c = normalize_file(&a.input, a.lines)?;
    m.result("sentences", c.len());
    m.result("words", c.word_count());
    emit(m, &a.output, corpus_text(&c).as_bytes())
}

fn dedup(a: &DedupArgs, m: &mut Manifest) -> Result<()> {
    m.input(&a.input)?;
    let mut cfg = DedupConfig::for_expected_buffers(a.expected_buffers, a.fp_rate);
    cfg.min_buffer_chars = a.min_chars;
    let c = read_corpus(&a.input)?;
    let (out, stats) = dedup_with_stats(&c, &cfg)?;
    log::info!(
        "{} buffers, {} dropped ({} sentences)",
        stats.buffers,
        stats.dropped_buffers,
        stats.dropped_sentences
    );
    m.result("buffers", stats.buffers);
    m.result("dropped_buffers", stats.dropped_buffers);
    m.result("dropped_sentences", stats.dropped_sentences);
    m.result("filter_bits", cfg.filter_bits);
    emit(m, &a.output, corpus_text(&out).as_bytes())
}

fn vocab(a: &VocabArgs, m: &mut Manifest) -> Result<()> {
    m.input(&a.input)?;
    let v = build_vocab(&read_corpus(&a.input)?, a.size)?;
    m.result("size", v.len());
    emit(m, &a.output, vocab_text(&v).as_bytes())
}

fn encode_cmd(a: &EncodeArgs, m: &mut Manifest) -> Result<()> {
    inputs(m, &[&a.input, &a.vocab])?;
    let v = read_vocab(&a.vocab)?;
    let s = encode(&read_corpus(&a.input)?, &v);
    m.result("tokens", s.len());
    emit(m, &a.output, ids_text(&s).as_bytes())
}

fn ngram_train(a: &NgramTrainArgs, m: &mut Manifest) -> Result<()> {
    inputs(m, &[&a.text, &a.vocab])?;
    let v = read_vocab(&a.vocab)?;
    let s = read_stream(&a.text, &v)?;
    let mut model = estimate_kn(&count_ngrams(&s, a.order)?)?;
    if let Some(c) = a.prune {
        model = prune(&model, c)?;
    }
    m.result("entries", model.num_entries());
    emit(m, &a.output, write_arpa(&model, &v).as_bytes())
}

fn ngram_ppl(a: &NgramPplArgs, m: &mut Manifest) -> Result<()> {
    inputs(m, &[&a.model, &a.text])?;
    let (model, v) = read_arpa_file(&a.model)?;
    let ppl = ngram_perplexity(&model, &read_stream(&a.text, &v)?)?;
    m.result("perplexity", ppl);
    emit(m, &a.output, format!("{ppl}\n").as_bytes())
}

fn filter_models(f: &FilterModels, m: &mut Manifest) -> Result<(NGramModel, NGramModel, Vocabulary)> {
    inputs(m, &[&f.in_domain, &f.general, &f.text])?;
    let (mi, vi) = read_arpa_file(&f.in_domain)?;
    let (mg, vg) = read_arpa_file(&f.general)?;
    if vi.words() != vg.words() {
        return Err(Error::usage("in-domain and general models must share one vocabulary"));
    }
    Ok((mi, mg, vi))
}

fn filter(a: &FilterArgs, m: &mut Manifest) -> Result<()> {
    let (mi, mg, v) = filter_models(&a.models, m)?;
    let corpus = read_corpus(&a.models.text)?;
    let mut cfg = FilterConfig::new(&mi, &mg);
    cfg.batch_sentences = a.models.batch;
    cfg.threshold = match (a.threshold, a.fraction) {
        (Some(t), _) => t,
        (None, Some(f)) => threshold_for_fraction(&corpus, &v, &cfg, f)?.0,
        (None, None) => unreachable!("clap requires one of them"),
    };
    let kept = entropy_filter(&corpus, &v, &cfg)?;
    m.result("threshold", cfg.threshold);
    m.result("kept_sentences", kept.len());
    m.result("kept_words", kept.word_count());
    emit(m, &a.output, corpus_text(&kept).as_bytes())
}

fn filter_threshold(a: &FilterThresholdArgs, m: &mut Manifest) -> Result<()> {
    let (mi, mg, v) = filter_models(&a.models, m)?;
    let corpus = read_corpus(&a.models.text)?;
    let mut cfg = FilterConfig::new(&mi, &mg);
    cfg.batch_sentences = a.models.batch;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["target_fraction", "threshold", "fraction"]).expect("in-memory csv");
    for &f in &a.fractions {
        let (t, kept) = threshold_for_fraction(&corpus, &v, &cfg, f)?;
        w.write_record([f.to_string(), format!("{t:.6}"), format!("{kept:.6}")])
            .expect("in-memory csv");
    }
    emit(m, &a.output, &w.into_inner().expect("in-memory csv"))
}

fn train_config(a: &RnnTrainArgs, seed: u64) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        hidden: a.hidden.unwrap_or(d.hidden),
        noffset: a.noffset.unwrap_or(d.noffset),
        minibatch: a.minibatch.unwrap_or(d.minibatch),
        unroll: a.unroll.unwrap_or(d.unroll),
        eta: a.eta.unwrap_or(d.eta),
        rho: a.rho.unwrap_or(d.rho),
        epsilon: a.epsilon.unwrap_or(d.epsilon),
        accumulator_init: a.accumulator_init.unwrap_or(d.accumulator_init),
        clip: a.clip.unwrap_or(d.clip),
        mode: match a.mode {
            Some(ModeArg::Nce) => TrainMode::Nce,
            Some(ModeArg::Softmax) => TrainMode::Softmax,
            None => d.mode,
        },
        k: a.k.unwrap_or(d.k),
        max_epochs: a.max_epochs.unwrap_or(d.max_epochs),
        seed,
        init_scale: d.init_scale,
        activation: match a.activation {
            Some(ActivationArg::Sigmoid) => Activation::Sigmoid,
            Some(ActivationArg::Tanh) => Activation::Tanh,
            None => d.activation,
        },
    }
}

pub fn config_json(c: &TrainConfig) -> serde_json::Value {
    json!({
        "hidden": c.hidden,
        "noffset": c.noffset,
        "minibatch": c.minibatch,
        "unroll": c.unroll,
        "eta": c.eta,
        "rho": c.rho,
        "epsilon": c.epsilon,
        "accumulator_init": c.accumulator_init,
        "clip": c.clip,
        "mode": match c.mode { TrainMode::Nce => "nce", TrainMode::Softmax => "softmax" },
        "k": c.k,
        "max_epochs": c.max_epochs,
        "seed": c.seed,
        "init_scale": c.init_scale,
        "activation": match c.activation { Activation::Sigmoid => "sigmoid", Activation::Tanh => "tanh" },
    })
}

fn rnn_train(a: &RnnTrainArgs, seed: u64, m: &mut Manifest) -> Result<()> {
    inputs(m, &[&a.train, &a.valid, &a.vocab])?;
    let vocab = read_vocab(&a.vocab)?;
    let train = read_stream(&a.train, &vocab)?;
    let valid = read_stream(&a.valid, &vocab)?;
    let opts = DriverOptions {
        checkpoint: a.output.clone(),
        log: a.log.clone(),
    };
    let (cfg, history, memory) = if let Some(path) = &a.resume {
        m.input(path)?;
        let ck = Checkpoint::read(path)?;
        if ck.vocab.words() != vocab.words() {
            return Err(Error::usage("the resumed checkpoint was trained with another vocabulary"));
        }
        match ck.model {
            Model::Standard(_) => {
                let (state, _) = ck.into_trainer::<RnnParams<f32>>()?;
                let mut t = Trainer::resume(state, &train)?;
                driver::run(&mut t, &train, &valid, &vocab, &opts)?;
                (t.config().clone(), t.history().to_vec(), t.rmsprop_state().memory_bytes())
            }
            Model::Bottleneck(_) => {
                let (state, _) = ck.into_trainer::<BottleneckParams<f32>>()?;
                let mut t = Trainer::resume(state, &train)?;
                driver::run(&mut t, &train, &valid, &vocab, &opts)?;
                (t.config().clone(), t.history().to_vec(), t.rmsprop_state().memory_bytes())
            }
        }
    } else {
        let cfg = train_config(a, seed);
        match a.bottleneck {
            None => {
                let mut t = Trainer::<f32, _>::new(cfg, &train, &valid)?;
                driver::run(&mut t, &train, &valid, &vocab, &opts)?;
                (t.config().clone(), t.history().to_vec(), t.rmsprop_state().memory_bytes())
            }
            Some(p) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut net = BottleneckParams::random(vocab.len(), cfg.hidden, p, cfg.init_scale, &mut rng)?;
                net.activation = cfg.activation;
                let mut t = Trainer::with_network(cfg, net, rng, &train, &valid)?;
                driver::run(&mut t, &train, &valid, &vocab, &opts)?;
                (t.config().clone(), t.history().to_vec(), t.rmsprop_state().memory_bytes())
            }
        }
    };
    m.result("resolved", config_json(&cfg));
    m.result("epochs", history.len());
    if let Some(e) = history.last() {
        m.result("final_valid_ppl", e.valid_ppl);
    }
    m.result("optimizer_bytes", memory);
    if history.is_empty() {
        // nothing ran, e.g. resuming a finished run
        log::warn!("training was already complete; checkpoint left unchanged");
        if let Some(path) = &a.resume {
            if path != &a.output {
                std::fs::copy(path, &a.output).map_err(|e| Error::io(&a.output, e))?;
            }
        }
    }
    let bytes = std::fs::read(&a.output).map_err(|e| Error::io(&a.output, e))?;
    m.output(&a.output, &bytes)?;
    if let Some(log) = &a.log {
        if log.exists() {
            let bytes = std::fs::read(log).map_err(|e| Error::io(log, e))?;
            m.output(log, &bytes)?;
        }
    }
    Ok(())
}

/// Read any recurrent model: a checkpoint (standard or bottleneck) or a
/// quantised RNQZ file.
pub fn load_rnn(path: &Path) -> Result<(Model, Vocabulary)> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(STANDARD_MAGIC) || bytes.starts_with(BOTTLENECK_MAGIC) {
        let ck = Checkpoint::from_bytes(&bytes, path)?;
        return Ok((ck.model, ck.vocab));
    }
    if bytes.starts_with(compress::MAGIC) {
        let q = QuantizedModel::from_bytes(&bytes).map_err(|e| Error::parse(path, None, e.to_string()))?;
        let vocab = Vocabulary::from_words(q.vocabulary.clone())
            .map_err(|e| Error::parse(path, None, e.to_string()))?;
        return Ok((Model::Bottleneck(q.dequantize()), vocab));
    }
    Err(Error::parse(path, None, "not a recurrent model file"))
}

/// Run `$body` with `$net` bound to the concrete network inside `$model`.
macro_rules! with_net {
    ($model:expr, $net:ident => $body:expr) => {
        match $model {
            Model::Standard($net) => $body,
            Model::Bottleneck($net) => $body,
        }
    };
}

fn rnn_ppl(a: &RnnPplArgs, m: &mut Manifest) -> Result<()> {
    inputs(m, &[&a.model, &a.text])?;
    let (model, v) = load_rnn(&a.model)?;
    let s = read_stream(&a.text, &v)?;
    let ppl = with_net!(&model, net => rnn_perplexity(net, &s)?);
    m.result("perplexity", ppl);
    emit(m, &a.output, format!("{ppl}\n").as_bytes())
}

fn interp_ppl(a: &InterpPplArgs, m: &mut Manifest) -> Result<()> {
    inputs(m, &[&a.rnn, &a.ngram, &a.text])?;
    let (model, rv) = load_rnn(&a.rnn)?;
    let (ngram, nv) = read_arpa_file(&a.ngram)?;
    let mut cfg = InterpolationConfig::from_vocabularies(a.lambda, &rv, &nv)?;
    if let Some(t) = &a.tune {
        m.input(t)?;
        let tuning = read_stream(t, &nv)?;
        let parts = with_net!(&model, net => interpolation_parts(net, &ngram, &cfg, &tuning)?);
        let (l, ppl) = parts.tune();
        log::info!("tuned lambda {l:.4} (tuning ppl {ppl:.3})");
        cfg = cfg.with_lambda(l)?;
    }
    let s = read_stream(&a.text, &nv)?;
    let parts = with_net!(&model, net => interpolation_parts(net, &ngram, &cfg, &s)?);
    let (r, n, i) = (parts.perplexity(1.0), parts.perplexity(0.0), parts.perplexity(cfg.lambda));
    m.result("lambda", cfg.lambda);
    m.result("interpolated_ppl", i);
    let text = format!(
        "lambda,rnn_ppl,ngram_ppl,interpolated_ppl\n{:.6},{r:.4},{n:.4},{i:.4}\n",
        cfg.lambda
    );
    emit(m, &a.output, text.as_bytes())
}

struct Shortlist {
    model: NGramModel,
    vocab: Vocabulary,
}

fn load_shortlist(a: &ShortlistArgs, m: &mut Manifest) -> Result<Shortlist> {
    inputs(m, &[&a.shortlist, &a.text])?;
    let (model, vocab) = read_arpa_file(&a.shortlist)?;
    Ok(Shortlist { model, vocab })
}

fn same_vocab(a: &Vocabulary, b: &Vocabulary) -> Result<()> {
    if a.words() != b.words() {
        return Err(Error::usage("the model and the shortlist model must share one vocabulary"));
    }
    Ok(())
}

fn hit_rate_cmd(a: &HitRateArgs, m: &mut Manifest) -> Result<()> {
    m.input(&a.model)?;
    let sl = load_shortlist(&a.shortlist, m)?;
    let s = read_stream(&a.shortlist.text, &sl.vocab)?;
    let (k, n) = (a.shortlist.top_k, a.shortlist.shortlist_size);
    let head = read_bytes(&a.model)?;
    let is_rnn = [&STANDARD_MAGIC[..], &BOTTLENECK_MAGIC[..], &compress::MAGIC[..]]
        .iter()
        .any(|mg| head.starts_with(mg));
    let rate = if is_rnn {
        let (model, v) = load_rnn(&a.model)?;
        same_vocab(&v, &sl.vocab)?;
        with_net!(&model, net => hit_rate(&mut RnnPredictor::new(net), &s, &sl.model, k, n)?)
    } else {
        let (model, v) = read_arpa_file(&a.model)?;
        same_vocab(&v, &sl.vocab)?;
        hit_rate(&mut NGramPredictor::new(&model), &s, &sl.model, k, n)?
    };
    m.result("hit_rate", rate.percent());
    let text = format!(
        "hits,positions,hit_rate\n{},{},{:.4}\n",
        rate.hits,
        rate.positions,
        rate.percent()
    );
    emit(m, &a.output, text.as_bytes())
}

fn rescore(a: &RescoreArgs, m: &mut Manifest) -> Result<()> {
    inputs(m, &[&a.nbest, &a.rnn, &a.ngram])?;
    let (model, rv) = load_rnn(&a.rnn)?;
    let (ngram, nv) = read_arpa_file(&a.ngram)?;
    let interp = InterpolationConfig::from_vocabularies(a.lambda, &rv, &nv)?;
    let cfg = RescoreConfig {
        lm_scale: a.lm_scale,
        wip: a.wip,
        scoring: if a.fast {
            RnnScoring::Fast { ln_z: a.ln_z }
        } else {
            RnnScoring::Exact
        },
    };
    let lists = read_nbest(&a.nbest, &nv)?;
    let mut out = String::new();
    let mut changed = 0usize;
    for e in &lists {
        let r = with_net!(&model, net => rescore_nbest(&e.list, net, &ngram, &interp, &cfg)?);
        if r[0].index != 0 {
            changed += 1;
        }
        format_rescored(e, &r, &mut out);
    }
    m.result("utterances", lists.len());
    m.result("changed_first_best", changed);
    emit(m, &a.output, out.as_bytes())
}

fn bottleneck_model(path: &Path) -> Result<(BottleneckParams<f32>, Vocabulary)> {
    match load_rnn(path)? {
        (Model::Bottleneck(b), v) => Ok((b, v)),
        (Model::Standard(_), _) => Err(Error::usage("quantisation needs a bottleneck model (rnn-train --bottleneck)")),
    }
}

fn compress_cmd(a: &CompressArgs, m: &mut Manifest) -> Result<()> {
    m.input(&a.model)?;
    let bits: [u8; 4] = match a.bits[..] {
        [b] => [b; 4],
        [e, u, w, d] => [e, u, w, d],
        _ => return Err(Error::usage("--bits takes one width or four (E,U,W_rec,D)")),
    };
    let (net, v) = bottleneck_model(&a.model)?;
    let q = compress::quantize_per_matrix(&net, bits, v.words().to_vec())?;
    let bytes = q.to_bytes();
    m.result("size_bytes", bytes.len());
    m.result("param_count", q.param_count());
    eprintln!("{} bytes, {} parameters", bytes.len(), q.param_count());
    emit(m, &a.output, &bytes)
}

fn quantize_sweep(a: &QuantizeSweepArgs, m: &mut Manifest) -> Result<()> {
    m.input(&a.model)?;
    let sl = load_shortlist(&a.shortlist, m)?;
    let (net, v) = bottleneck_model(&a.model)?;
    same_vocab(&v, &sl.vocab)?;
    let s = read_stream(&a.shortlist.text, &sl.vocab)?;
    let (k, n) = (a.shortlist.top_k, a.shortlist.shortlist_size);
    let rows: Vec<SweepRow> = a
        .bits
        .par_iter()
        .map(|&b| {
            compress::quantized_hit_rate_sweep(&net, v.words(), &[b], &s, &sl.model, k, n)
                .map(|mut r| r.remove(0))
        })
        .collect::<desklm_core::Result<_>>()?;
    emit(m, &a.output, compress::sweep_csv(&rows).as_bytes())
}

#[derive(Debug, serde::Deserialize)]
struct PointRow {
    words: f64,
    ppl: f64,
}

pub fn read_points(path: &Path) -> Result<Vec<ScalingPoint>> {
    let text = crate::io::read_string(path)?;
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<PointRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(path, Some(i + 2), e.to_string()))?;
        out.push(ScalingPoint {
            training_words: row.words,
            perplexity: row.ppl,
        });
    }
    Ok(out)
}

fn fit_curve(a: &FitCurveArgs, m: &mut Manifest) -> Result<()> {
    m.input(&a.points)?;
    let points = read_points(&a.points)?;
    let (family, name) = match a.family {
        FamilyArg::ExpPower => (CurveFamily::ExpPower, "exp-power"),
        FamilyArg::PowerOffset => (CurveFamily::PowerOffset, "power-offset"),
    };
    let fit = fit_scaling_curve(&points, family)?;
    let drop = fit.relative_drop(a.drop_from, a.drop_to);
    m.result("asymptote", fit.a);
    m.result("drop", drop);
    let text = format!(
        "family,a,b,c,asymptote,rms,drop\n{name},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
        fit.a, fit.b, fit.c, fit.a, fit.rms, drop
    );
    emit(m, &a.output, text.as_bytes())
}
