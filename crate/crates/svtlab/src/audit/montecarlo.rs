//! Stochastic output-vector probabilities.
//!
//! Runs the full mechanism `n` times and counts how often the outcome
//! matches the target pattern. Works for every variant, including the
//! threshold-redrawing one that quadrature rejects. Numeric entries match
//! within a half-width `h = scale / 100` of the relevant output noise, so
//! for numeric patterns the estimate approximates `density * (2h)^k` rather
//! than the quadrature log-density itself.
//!
//! Samples are split into fixed-size chunks on independent substreams and
//! counted with an associative reduction, so the estimate is identical
//! whether the chunks run in parallel or sequentially.

use super::{AuditError, NeighborInstance, PatternEntry, Side};
use crate::exec;
use crate::mechanisms::QuerySet;
use crate::rng;
use crate::svt::{run_svt, Answer, OutcomeVector, SvtConfig, Variant};
use rand::RngCore;

const CHUNK: u64 = 1 << 16;
/// 97.5th percentile of the standard normal, for 95% Wilson intervals.
const Z95: f64 = 1.959963984540054;

/// A Monte Carlo probability estimate with a 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub successes: u64,
    pub samples: u64,
    pub p_hat: f64,
    /// Wilson-score half-width; for zero successes, the one-sided
    /// rule-of-three bound `3/n`.
    pub ci_halfwidth: f64,
    /// Half-width of the numeric matching window, when the pattern has
    /// numeric entries.
    pub numeric_tol: Option<f64>,
}

impl McEstimate {
    pub fn ln_p(&self) -> f64 {
        if self.successes == 0 {
            f64::NEG_INFINITY
        } else {
            self.p_hat.ln()
        }
    }
}

fn wilson_halfwidth(successes: u64, n: u64) -> f64 {
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

fn matches(outcome: &OutcomeVector, pattern: &[PatternEntry], h: f64) -> bool {
    if outcome.answers.len() != pattern.len() {
        return false;
    }
    outcome.answers.iter().zip(pattern).all(|(a, e)| match (a, e) {
        (Answer::Below, PatternEntry::Below) => true,
        (Answer::Above, PatternEntry::Above) => true,
        (Answer::Numeric(x), PatternEntry::Numeric(v)) => (x - v).abs() <= h,
        _ => false,
    })
}

/// Fraction of `n_samples` full-mechanism runs whose outcome matches the
/// instance's pattern on the given side.
pub fn prob_output_montecarlo(
    config: &SvtConfig,
    inst: &NeighborInstance,
    on: Side,
    n_samples: u64,
    rng: &mut rng::Stream,
) -> Result<McEstimate, AuditError> {
    super::validate_pattern(config, inst)?;
    if n_samples < 1_000 {
        return Err(AuditError::InvalidParameter(format!(
            "need at least 1000 samples, got {n_samples}"
        )));
    }
    let has_numeric = inst
        .pattern
        .iter()
        .any(|e| matches!(e, PatternEntry::Numeric(_)));
    let scales = config.noise_scales(inst.delta)?;
    let numeric_tol = if has_numeric {
        let scale = match config.variant {
            Variant::Alg3 => scales.query,
            Variant::Alg7 => scales.numeric.expect("validated: eps3 > 0"),
            _ => unreachable!("validated: numeric entries imply alg3 or alg7"),
        };
        Some(scale / 100.0)
    } else {
        None
    };
    let h = numeric_tol.unwrap_or(0.0);

    let qs = QuerySet::new(inst.scores(on).to_vec(), inst.delta, false)?;
    let thresholds = crate::svt::Thresholds::PerQuery(inst.thresholds.clone());
    let mut cfg = config.clone();
    cfg.thresholds = thresholds;

    let base_seed = rng.next_u64();
    let n_chunks = n_samples.div_ceil(CHUNK);
    let successes = exec::sum_indexed(n_chunks as usize, |k| {
        let mut chunk_rng = rng::stream(base_seed, k as u64);
        let start = k as u64 * CHUNK;
        let len = CHUNK.min(n_samples - start);
        let mut hits = 0u64;
        for _ in 0..len {
            let out = run_svt(&cfg, &qs, &mut chunk_rng).expect("validated configuration");
            if matches(&out, &inst.pattern, h) {
                hits += 1;
            }
        }
        hits
    });

    let p_hat = successes as f64 / n_samples as f64;
    let ci_halfwidth = if successes == 0 {
        3.0 / n_samples as f64
    } else {
        wilson_halfwidth(successes, n_samples)
    };
    Ok(McEstimate {
        successes,
        samples: n_samples,
        p_hat,
        ci_halfwidth,
        numeric_tol,
    })
}
