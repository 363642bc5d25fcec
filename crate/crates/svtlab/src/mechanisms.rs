//! Foundational mechanisms: Laplace distribution machinery and the
//! exponential mechanism.
//!
//! The Laplace distribution with scale `b` has density
//!
//! ```text
//! p(x) = (1 / 2b) * exp(-|x| / b)
//! ```
//!
//! and is sampled here by inverse-CDF transform from a single uniform draw,
//! which keeps every sample reproducible under a seeded stream.
//!
//! The exponential mechanism selects index `i` with probability proportional
//! to `exp(eps * q_i / (2 * delta))`, or `exp(eps * q_i / delta)` when the
//! caller promises that all query answers move in one direction between
//! neighboring datasets (monotonic queries). Weights are normalized in
//! log-space with max-subtraction so large scores cannot overflow.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MechanismError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no candidate indices remain after exclusion")]
    EmptyCandidates,
    #[error("cutoff {c} exceeds number of queries {n}")]
    InvalidCutoff { c: usize, n: usize },
}

/// Zero-centered Laplace distribution with scale `b > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceDist {
    scale_b: f64,
}

impl LaplaceDist {
    pub fn new(scale_b: f64) -> Result<Self, MechanismError> {
        if !(scale_b.is_finite() && scale_b > 0.0) {
            return Err(MechanismError::InvalidParameter(format!(
                "Laplace scale must be positive and finite, got {scale_b}"
            )));
        }
        Ok(Self { scale_b })
    }

    pub fn scale(&self) -> f64 {
        self.scale_b
    }

    /// Density `(1/2b) * exp(-|x|/b)`.
    pub fn pdf(&self, x: f64) -> f64 {
        (-x.abs() / self.scale_b).exp() / (2.0 * self.scale_b)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        -x.abs() / self.scale_b - (2.0 * self.scale_b).ln()
    }

    /// CDF: `exp(x/b)/2` for `x <= 0`, `1 - exp(-x/b)/2` for `x > 0`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.5 * (x / self.scale_b).exp()
        } else {
            1.0 - 0.5 * (-x / self.scale_b).exp()
        }
    }

    /// `ln cdf(x)`, stable in both tails.
    pub fn ln_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            x / self.scale_b - core::f64::consts::LN_2
        } else {
            (-0.5 * (-x / self.scale_b).exp()).ln_1p()
        }
    }

    /// `ln (1 - cdf(x))`, stable in both tails.
    pub fn ln_sf(&self, x: f64) -> f64 {
        if x >= 0.0 {
            -x / self.scale_b - core::f64::consts::LN_2
        } else {
            (-0.5 * (x / self.scale_b).exp()).ln_1p()
        }
    }

    /// Inverse CDF on `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        if u < 0.5 {
            self.scale_b * (2.0 * u).ln()
        } else {
            -self.scale_b * (2.0 * (1.0 - u)).ln()
        }
    }

    /// Inverse-CDF sample from one uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut u: f64 = rng.gen();
        while u == 0.0 {
            u = rng.gen();
        }
        self.quantile(u)
    }
}

/// A batch of query answers sharing one sensitivity bound.
///
/// `monotonic` records the caller's promise that between any pair of
/// neighboring datasets all answers change in the same direction; it only
/// affects noise and weight calibration, never the answers themselves.
#[derive(Debug, Clone)]
pub struct QuerySet {
    pub scores: Vec<f64>,
    pub sensitivity_delta: f64,
    pub monotonic: bool,
}

impl QuerySet {
    pub fn new(
        scores: Vec<f64>,
        sensitivity_delta: f64,
        monotonic: bool,
    ) -> Result<Self, MechanismError> {
        if !(sensitivity_delta.is_finite() && sensitivity_delta > 0.0) {
            return Err(MechanismError::InvalidParameter(format!(
                "sensitivity must be positive and finite, got {sensitivity_delta}"
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(MechanismError::InvalidParameter(format!(
                "scores must be finite, got {bad}"
            )));
        }
        Ok(Self {
            scores,
            sensitivity_delta,
            monotonic,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Outcome of a top-c selection: chosen indices in selection order.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub chosen_indices: Vec<usize>,
    pub per_round_budget: f64,
}

fn check_epsilon(epsilon: f64) -> Result<(), MechanismError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(MechanismError::InvalidParameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    Ok(())
}

/// Exact selection probabilities of the exponential mechanism over the
/// non-excluded indices. Excluded indices get probability 0.
pub fn em_probabilities(
    qs: &QuerySet,
    epsilon: f64,
    exclude: &[usize],
) -> Result<Vec<f64>, MechanismError> {
    check_epsilon(epsilon)?;
    if let Some(&bad) = exclude.iter().find(|&&i| i >= qs.len()) {
        return Err(MechanismError::InvalidParameter(format!(
            "excluded index {bad} out of range for {} queries",
            qs.len()
        )));
    }
    let mut excluded = vec![false; qs.len()];
    for &i in exclude {
        excluded[i] = true;
    }
    let factor = if qs.monotonic { 1.0 } else { 2.0 };
    let exponents: Vec<f64> = qs
        .scores
        .iter()
        .map(|&q| epsilon * q / (factor * qs.sensitivity_delta))
        .collect();
    let max_exp = exponents
        .iter()
        .zip(&excluded)
        .filter(|(_, &ex)| !ex)
        .map(|(&e, _)| e)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_exp == f64::NEG_INFINITY {
        return Err(MechanismError::EmptyCandidates);
    }
    let mut weights: Vec<f64> = exponents
        .iter()
        .zip(&excluded)
        .map(|(&e, &ex)| if ex { 0.0 } else { (e - max_exp).exp() })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// One round of the exponential mechanism: samples an index outside
/// `exclude` with probability proportional to its exponential weight.
///
/// Sampling walks the cumulative weights in index order against a single
/// uniform draw, so exactly tied weights resolve toward lower indices.
pub fn em_select_one<R: Rng + ?Sized>(
    qs: &QuerySet,
    epsilon: f64,
    exclude: &[usize],
    rng: &mut R,
) -> Result<usize, MechanismError> {
    let probs = em_probabilities(qs, epsilon, exclude)?;
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_candidate = None;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_candidate = Some(i);
            cum += p;
            if u < cum {
                return Ok(i);
            }
        }
    }
    // u landed in the rounding slack past the final cumulative weight
    Ok(last_candidate.expect("candidate set checked nonempty"))
}

/// Top-c selection: c rounds of [`em_select_one`] with budget `epsilon / c`
/// each, removing the winner from the candidate pool after every round.
pub fn em_select_top_c<R: Rng + ?Sized>(
    qs: &QuerySet,
    epsilon: f64,
    c: usize,
    rng: &mut R,
) -> Result<SelectionResult, MechanismError> {
    check_epsilon(epsilon)?;
    if c == 0 || c > qs.len() {
        return Err(MechanismError::InvalidCutoff { c, n: qs.len() });
    }
    let per_round = epsilon / c as f64;
    let mut chosen = Vec::with_capacity(c);
    for _ in 0..c {
        let i = em_select_one(qs, per_round, &chosen, rng)?;
        chosen.push(i);
    }
    Ok(SelectionResult {
        chosen_indices: chosen,
        per_round_budget: per_round,
    })
}

/// `(alpha_svt, alpha_em)` accuracy bounds for selecting the single large
/// query among `k` at failure probability `beta`:
///
/// ```text
/// alpha_svt = 8 (ln k + ln(2/beta)) / eps
/// alpha_em  = (ln(k - 1) + ln((1 - beta)/beta)) / eps
/// ```
pub fn utility_bounds(k: u64, beta: f64, epsilon: f64) -> Result<(f64, f64), MechanismError> {
    check_epsilon(epsilon)?;
    if k < 2 {
        return Err(MechanismError::InvalidParameter(format!(
            "k must be at least 2, got {k}"
        )));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(MechanismError::InvalidParameter(format!(
            "beta must lie in (0,1), got {beta}"
        )));
    }
    let k = k as f64;
    let alpha_svt = 8.0 * (k.ln() + (2.0 / beta).ln()) / epsilon;
    let alpha_em = ((k - 1.0).ln() + ((1.0 - beta) / beta).ln()) / epsilon;
    Ok((alpha_svt, alpha_em))
}
