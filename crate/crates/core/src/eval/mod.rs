//! Evaluation: perplexities, interpolation, hit-rate, rescoring,
//! normalisation drift and scaling-curve fits.

mod drift;
mod hitrate;
mod interp;
mod perplexity;
mod rescore;
mod scaling;

pub use drift::{
    collect_contexts, log_partitions, normalization_drift, quantile, DriftStats, MIN_DRIFT_CONTEXTS,
};
pub use hitrate::{
    hit_rate, HitRate, NGramPredictor, Predictor, RnnPredictor, DEFAULT_SHORTLIST, DEFAULT_TOP_K,
};
pub use interp::{
    interpolate_prob, interpolated_perplexity, interpolation_parts, tune_lambda,
    InterpolationConfig, InterpolationParts,
};
pub use perplexity::{for_each_prediction, rnn_log_probs, rnn_perplexity};
pub use rescore::{
    rescore_nbest, sentence_log_prob, Hypothesis, NBestList, RescoreConfig, Rescored, RnnScoring,
};
pub use scaling::{fit_scaling_curve, CurveFamily, ScalingFit, ScalingPoint};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimise a unimodal `f` on `[lo, hi]`. Returns `(x, f(x))`.
pub(crate) fn golden_section(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
