use desklm_core::eval::{fit_scaling_curve, CurveFamily};
use desklm_core::rnn::param_count;

use crate::Verdict;

/// Millions of parameters at V = 64k, as tabulated.
const TABLE: [(u64, f64); 6] = [
    (128, 16.4),
    (256, 32.8),
    (512, 65.8),
    (1024, 132.0),
    (2048, 266.0),
    (4096, 541.0),
];

fn three_significant(x: f64) -> f64 {
    let mag = 10f64.powi(x.abs().log10().floor() as i32 - 2);
    (x / mag).round() * mag
}

pub fn parameter_counts() -> Verdict {
    let mut ok = true;
    let mut got = Vec::new();
    for (h, want) in TABLE {
        let m = three_significant(param_count(64_000, h) as f64 / 1e6);
        ok &= (m - want).abs() < 1e-9 * want;
        got.push(if m < 100.0 { format!("{h}:{m:.1}") } else { format!("{h}:{m:.0}") });
    }
    Verdict::new(ok, format!("millions {}", got.join(" ")))
}

pub fn scaling_curve() -> Verdict {
    let path = crate::common::data_dir().join("figure1.csv");
    let points = desklm::cli::read_points(&path).unwrap();
    let fit = fit_scaling_curve(&points, CurveFamily::ExpPower).unwrap();
    let drop = fit.relative_drop(1e12, 1e13);
    Verdict::new(
        (68.0..=78.0).contains(&fit.a) && drop < 0.06,
        format!(
            "asymptote {:.2} (want 68..78), 1e12->1e13 drop {:.2}% (want < 6%)",
            fit.a,
            100.0 * drop
        ),
    )
}
