use alloc::vec::Vec;

use crate::error::{invalid, Result};

use super::golden_section;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub training_words: f64,
    pub perplexity: f64,
}

/// Curve families for perplexity against training words `w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurveFamily {
    /// `ppl = a·exp(b·w^−c)`, least squares on `ln ppl`: a straight-line
    /// decay approaching `a` on log-log axes.
    #[default]
    ExpPower,
    /// `ppl = a + b·w^−c`, least squares on `ppl`.
    PowerOffset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub family: CurveFamily,
    /// Asymptotic perplexity.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Root-mean-square residual in perplexity units.
    pub rms: f64,
}

impl ScalingFit {
    pub fn predict(&self, words: f64) -> f64 {
        let x = libm::pow(words, -self.c);
        match self.family {
            CurveFamily::ExpPower => self.a * libm::exp(self.b * x),
            CurveFamily::PowerOffset => self.a + self.b * x,
        }
    }

    /// `1 − ppl(to)/ppl(from)`.
    pub fn relative_drop(&self, from: f64, to: f64) -> f64 {
        1.0 - self.predict(to) / self.predict(from)
    }
}

const C_MAX: f64 = 4.0;
const C_GRID: usize = 4000;

/// Least-squares fit of `family` to `points`: for each exponent `c` the
/// other two parameters come from a closed-form linear solve; `c` is found
/// by a grid search refined with golden sections.
pub fn fit_scaling_curve(points: &[ScalingPoint], family: CurveFamily) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(invalid("a scaling fit needs at least 4 points"));
    }
    if points
        .iter()
        .any(|p| !(p.training_words > 0.0 && p.perplexity > 0.0) || !p.training_words.is_finite())
    {
        return Err(invalid("word counts and perplexities must be positive"));
    }
    let mut ws: Vec<f64> = points.iter().map(|p| p.training_words).collect();
    ws.sort_by(f64::total_cmp);
    if ws.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("word counts must be distinct"));
    }
    // work with w / w0 to keep w^-c well scaled
    let w0 = libm::exp(ws.iter().map(|&w| libm::log(w)).sum::<f64>() / ws.len() as f64);
    let ys: Vec<f64> = points
        .iter()
        .map(|p| match family {
            CurveFamily::ExpPower => libm::log(p.perplexity),
            CurveFamily::PowerOffset => p.perplexity,
        })
        .collect();
    let solve = |c: f64| -> Option<(f64, f64, f64)> {
        let xs: Vec<f64> = points
            .iter()
            .map(|p| libm::pow(p.training_words / w0, -c))
            .collect();
        let (alpha, beta) = line_fit(&xs, &ys)?;
        let sse = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let r = y - (alpha + beta * x);
                r * r
            })
            .sum();
        Some((alpha, beta, sse))
    };
    let step = C_MAX / C_GRID as f64;
    let mut best: Option<(f64, f64)> = None;
    for i in 1..=C_GRID {
        let c = i as f64 * step;
        if let Some((_, _, sse)) = solve(c) {
            if best.is_none_or(|(_, s)| sse < s) {
                best = Some((c, sse));
            }
        }
    }
    let (c0, _) = best.ok_or_else(|| invalid("rank-deficient scaling fit"))?;
    let (c, _) = golden_section(
        |c| solve(c).map_or(f64::INFINITY, |s| s.2),
        (c0 - step).max(step * 1e-3),
        c0 + step,
        1e-13,
    );
    let (alpha, beta, _) = solve(c).ok_or_else(|| invalid("rank-deficient scaling fit"))?;
    let b = beta * libm::pow(w0, c);
    let a = match family {
        CurveFamily::ExpPower => libm::exp(alpha),
        CurveFamily::PowerOffset => alpha,
    };
    let mut fit = ScalingFit {
        family,
        a,
        b,
        c,
        rms: 0.0,
    };
    let sq: f64 = points
        .iter()
        .map(|p| {
            let r = p.perplexity - fit.predict(p.training_words);
            r * r
        })
        .sum();
    fit.rms = libm::sqrt(sq / points.len() as f64);
    Ok(fit)
}

/// Ordinary least squares `y = α + β x`; `None` when `x` is constant.
fn line_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 1e-300) || !sxx.is_finite() {
        return None;
    }
    let beta = sxy / sxx;
    Some((my - beta * mx, beta))
}
