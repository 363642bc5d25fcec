//! Numerical privacy audits.
//!
//! An audit fixes a pair of neighboring score vectors, a target output
//! vector, and an SVT configuration, then computes the probability of that
//! output on each side of the pair — exactly, as a one-dimensional integral
//! over the threshold-noise value (quadrature), or empirically by running
//! the full mechanism many times (Monte Carlo). The log-ratio of the two
//! probabilities is the realized privacy loss on that event; comparing the
//! worst ratio against a claimed bound either certifies the claim on the
//! audited family or exhibits a violation.
//!
//! The counterexample catalog reproduces the published constructions that
//! break the non-private variants, each with its closed-form loss.

mod montecarlo;
mod quadrature;

pub use montecarlo::{prob_output_montecarlo, McEstimate};
pub use quadrature::prob_output_quadrature;

use crate::svt::{SvtConfig, SvtError, Thresholds, Variant};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error("unsupported variant for this method: {0}")]
    UnsupportedVariant(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Svt(#[from] SvtError),
    #[error(transparent)]
    Mechanism(#[from] crate::mechanisms::MechanismError),
}

/// One entry of a target output vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternEntry {
    Below,
    Above,
    Numeric(f64),
}

impl PatternEntry {
    pub fn is_positive(&self) -> bool {
        matches!(self, PatternEntry::Above | PatternEntry::Numeric(_))
    }
}

/// Which side of the neighboring pair to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    D,
    DPrime,
}

/// A neighboring pair of score vectors with a target output pattern.
///
/// The neighboring promise is per query: `|q_i(D) - q_i(D')| <= delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborInstance {
    pub scores_d: Vec<f64>,
    pub scores_d_prime: Vec<f64>,
    pub delta: f64,
    pub thresholds: Vec<f64>,
    pub pattern: Vec<PatternEntry>,
}

impl NeighborInstance {
    pub fn new(
        scores_d: Vec<f64>,
        scores_d_prime: Vec<f64>,
        delta: f64,
        thresholds: Vec<f64>,
        pattern: Vec<PatternEntry>,
    ) -> Result<Self, AuditError> {
        let inst = Self {
            scores_d,
            scores_d_prime,
            delta,
            thresholds,
            pattern,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), AuditError> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(AuditError::InvalidInstance(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        let n = self.scores_d.len();
        if self.scores_d_prime.len() != n || self.thresholds.len() != n {
            return Err(AuditError::InvalidInstance(format!(
                "scores_d ({}), scores_d_prime ({}), thresholds ({}) must have one length",
                n,
                self.scores_d_prime.len(),
                self.thresholds.len()
            )));
        }
        if self.pattern.len() > n {
            return Err(AuditError::InvalidInstance(format!(
                "pattern length {} exceeds query count {n}",
                self.pattern.len()
            )));
        }
        for (i, (a, b)) in self.scores_d.iter().zip(&self.scores_d_prime).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(AuditError::InvalidInstance(format!(
                    "scores must be finite at index {i}"
                )));
            }
            if (a - b).abs() > self.delta * (1.0 + 1e-12) {
                return Err(AuditError::InvalidInstance(format!(
                    "|q_{i}(D) - q_{i}(D')| = {} breaks the neighboring promise delta = {}",
                    (a - b).abs(),
                    self.delta
                )));
            }
        }
        if self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(AuditError::InvalidInstance("thresholds must be finite".into()));
        }
        Ok(())
    }

    pub fn scores(&self, side: Side) -> &[f64] {
        match side {
            Side::D => &self.scores_d,
            Side::DPrime => &self.scores_d_prime,
        }
    }

    /// The same pair with D and D' exchanged (the pattern is unchanged).
    pub fn swapped(&self) -> Self {
        Self {
            scores_d: self.scores_d_prime.clone(),
            scores_d_prime: self.scores_d.clone(),
            delta: self.delta,
            thresholds: self.thresholds.clone(),
            pattern: self.pattern.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores_d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores_d.is_empty()
    }
}

/// Checks that `pattern` is an output the configured variant can emit:
/// entry kinds allowed by the variant, and for aborting variants a shape
/// consistent with the cutoff. Patterns that cannot occur are rejected
/// rather than silently assigned probability zero.
pub fn validate_pattern(config: &SvtConfig, inst: &NeighborInstance) -> Result<(), AuditError> {
    inst.validate()?;
    if inst.pattern.is_empty() {
        // vacuous event: probability one for every variant
        return Ok(());
    }
    let numeric_positives = match config.variant {
        Variant::Alg3 => true,
        Variant::Alg7 => config.split().eps3 > 0.0,
        _ => false,
    };
    for (i, e) in inst.pattern.iter().enumerate() {
        match e {
            PatternEntry::Above if numeric_positives => {
                return Err(AuditError::InvalidPattern(format!(
                    "{} emits numeric values for positives; entry {i} is an indicator",
                    config.variant.name()
                )))
            }
            PatternEntry::Numeric(v) if !numeric_positives => {
                return Err(AuditError::InvalidPattern(format!(
                    "{} emits indicators only; entry {i} is numeric({v})",
                    config.variant.name()
                )))
            }
            PatternEntry::Numeric(v) if !v.is_finite() => {
                return Err(AuditError::InvalidPattern(format!(
                    "numeric entry {i} must be finite"
                )))
            }
            _ => {}
        }
    }
    let positives = inst.pattern.iter().filter(|e| e.is_positive()).count();
    if config.variant.aborts() {
        let c = config.cutoff_c;
        if positives > c {
            return Err(AuditError::InvalidPattern(format!(
                "{positives} positives exceed cutoff {c}"
            )));
        }
        if positives == c {
            match inst.pattern.last() {
                Some(e) if e.is_positive() => {}
                _ => {
                    return Err(AuditError::InvalidPattern(
                        "the run aborts at the c-th positive, so it must end the pattern".into(),
                    ))
                }
            }
        } else if inst.pattern.len() != inst.len() {
            return Err(AuditError::InvalidPattern(format!(
                "with {positives} < {c} positives the pattern must cover all {} queries",
                inst.len()
            )));
        }
    } else if inst.pattern.len() != inst.len() {
        return Err(AuditError::InvalidPattern(format!(
            "{} answers every query; pattern length {} != {}",
            config.variant.name(),
            inst.pattern.len(),
            inst.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditMethod {
    Quadrature,
    MonteCarlo,
}

impl fmt::Display for AuditMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuditMethod::Quadrature => "quadrature",
            AuditMethod::MonteCarlo => "montecarlo",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    WithinBound,
    ViolatesBound,
    Unbounded,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::WithinBound => "WithinBound",
            Verdict::ViolatesBound => "ViolatesBound",
            Verdict::Unbounded => "Unbounded",
        })
    }
}

/// Slack added to a claimed bound before calling a violation.
pub const BOUND_TOL: f64 = 1e-6;

/// Result of one audit: log-probabilities on both sides, their ratio, and
/// the verdict against a claimed bound when one was made.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub log_prob_d: f64,
    pub log_prob_d_prime: f64,
    /// `log_prob_d - log_prob_d_prime`; `+inf` when only D has support,
    /// NaN when neither side has support.
    pub log_ratio: f64,
    pub method: AuditMethod,
    pub ci_halfwidth: f64,
    pub claimed_bound: Option<f64>,
    pub verdict: Verdict,
}

impl AuditReport {
    pub fn from_log_probs(
        log_prob_d: f64,
        log_prob_d_prime: f64,
        method: AuditMethod,
        ci_halfwidth: f64,
        claimed_bound: Option<f64>,
    ) -> Self {
        let log_ratio = if log_prob_d == f64::NEG_INFINITY && log_prob_d_prime == f64::NEG_INFINITY
        {
            f64::NAN
        } else {
            log_prob_d - log_prob_d_prime
        };
        let unbounded = log_prob_d_prime == f64::NEG_INFINITY && log_prob_d.is_finite();
        let verdict = if unbounded {
            Verdict::Unbounded
        } else {
            match claimed_bound {
                Some(bound) if log_ratio.is_finite() && log_ratio.abs() > bound + BOUND_TOL => {
                    Verdict::ViolatesBound
                }
                _ => Verdict::WithinBound,
            }
        };
        Self {
            log_prob_d,
            log_prob_d_prime,
            log_ratio,
            method,
            ci_halfwidth,
            claimed_bound,
            verdict,
        }
    }
}

/// Identifier of a published counterexample construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterexampleId {
    /// Alg3, numeric-output leak; exact loss `(m-1) eps / 2`.
    Alg3Appendix,
    /// Alg5, zero query noise; one event with support only on D.
    Alg5Thm2,
    /// Alg6, unbounded positives; loss at least `m eps / 2`.
    Alg6Appendix,
}

impl CounterexampleId {
    pub fn name(&self) -> &'static str {
        match self {
            CounterexampleId::Alg3Appendix => "appendixA1",
            CounterexampleId::Alg5Thm2 => "thm2",
            CounterexampleId::Alg6Appendix => "appendixA2",
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            CounterexampleId::Alg3Appendix => Variant::Alg3,
            CounterexampleId::Alg5Thm2 => Variant::Alg5,
            CounterexampleId::Alg6Appendix => Variant::Alg6,
        }
    }
}

impl std::str::FromStr for CounterexampleId {
    type Err = AuditError;
    fn from_str(s: &str) -> Result<Self, AuditError> {
        match s {
            "appendixA1" => Ok(CounterexampleId::Alg3Appendix),
            "thm2" => Ok(CounterexampleId::Alg5Thm2),
            "appendixA2" => Ok(CounterexampleId::Alg6Appendix),
            other => Err(AuditError::InvalidParameter(format!(
                "unknown counterexample {other:?} (expected thm2, appendixA1, appendixA2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleSpec {
    pub id: CounterexampleId,
    pub size_m: usize,
    pub epsilon: f64,
}

/// What the construction promises about its log-ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpectedRatio {
    Exact(f64),
    AtLeast(f64),
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct Counterexample {
    pub instance: NeighborInstance,
    pub config: SvtConfig,
    pub expected_log_ratio: ExpectedRatio,
}

/// Materializes a published counterexample at the requested size and budget.
pub fn make_counterexample(spec: &CounterexampleSpec) -> Result<Counterexample, AuditError> {
    if !(spec.epsilon.is_finite() && spec.epsilon > 0.0) {
        return Err(AuditError::InvalidParameter(format!(
            "epsilon must be positive, got {}",
            spec.epsilon
        )));
    }
    let eps = spec.epsilon;
    let m = spec.size_m;
    match spec.id {
        CounterexampleId::Alg3Appendix => {
            if m == 0 {
                return Err(AuditError::InvalidParameter("m must be at least 1".into()));
            }
            // m queries at 0 then one at delta on D; flipped on D'. The run
            // answers below m times and then outputs the numeric value 0,
            // which on D requires the query noise to hit exactly -delta.
            let delta = 1.0;
            let mut scores_d = vec![0.0; m];
            scores_d.push(delta);
            let mut scores_dp = vec![delta; m];
            scores_dp.push(0.0);
            let mut pattern = vec![PatternEntry::Below; m];
            pattern.push(PatternEntry::Numeric(0.0));
            let instance =
                NeighborInstance::new(scores_d, scores_dp, delta, vec![0.0; m + 1], pattern)?;
            let config = SvtConfig::new(Variant::Alg3, eps, 1, Thresholds::Scalar(0.0))?;
            Ok(Counterexample {
                instance,
                config,
                expected_log_ratio: ExpectedRatio::Exact((m as f64 - 1.0) * eps / 2.0),
            })
        }
        CounterexampleId::Alg5Thm2 => {
            // scores (0, 1) vs (1, 0): the pattern (below, above) needs the
            // noisy threshold inside (0, 1] on D and inside an empty set on
            // D', so the probability on D' is exactly zero.
            let instance = NeighborInstance::new(
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                1.0,
                vec![0.0, 0.0],
                vec![PatternEntry::Below, PatternEntry::Above],
            )?;
            let config = SvtConfig::new(Variant::Alg5, eps, 1, Thresholds::Scalar(0.0))?;
            Ok(Counterexample {
                instance,
                config,
                expected_log_ratio: ExpectedRatio::Unbounded,
            })
        }
        CounterexampleId::Alg6Appendix => {
            if m == 0 {
                return Err(AuditError::InvalidParameter("m must be at least 1".into()));
            }
            // 2m queries, all zero on D; on D' the first m rise by delta and
            // the last m fall by delta, against the pattern bot^m top^m.
            let delta = 1.0;
            let scores_d = vec![0.0; 2 * m];
            let mut scores_dp = vec![delta; m];
            scores_dp.extend(vec![-delta; m]);
            let mut pattern = vec![PatternEntry::Below; m];
            pattern.extend(vec![PatternEntry::Above; m]);
            let instance =
                NeighborInstance::new(scores_d, scores_dp, delta, vec![0.0; 2 * m], pattern)?;
            let config = SvtConfig::new(Variant::Alg6, eps, 1, Thresholds::Scalar(0.0))?;
            Ok(Counterexample {
                instance,
                config,
                expected_log_ratio: ExpectedRatio::AtLeast(m as f64 * eps / 2.0),
            })
        }
    }
}

/// Adversarial neighboring family over zero scores and zero thresholds.
///
/// For every length up to `len_max` and every indicator pattern that the
/// cutoff admits, `q(D) = 0` is paired with four neighbors: uniformly
/// raised, uniformly lowered, raised-on-negatives/lowered-on-positives, and
/// the reverse. The mixed pairs are the ones that expose under-scaled query
/// noise; the uniform pairs stress the threshold-noise argument.
pub fn adversarial_family(
    len_max: usize,
    cutoff_c: usize,
    delta: f64,
    aborting: bool,
) -> Vec<NeighborInstance> {
    let mut out = Vec::new();
    for len in 1..=len_max {
        for bits in 0u32..(1u32 << len) {
            let pattern: Vec<PatternEntry> = (0..len)
                .map(|i| {
                    if bits >> i & 1 == 1 {
                        PatternEntry::Above
                    } else {
                        PatternEntry::Below
                    }
                })
                .collect();
            let positives = pattern.iter().filter(|e| e.is_positive()).count();
            if aborting {
                // reachable outputs end at the c-th positive or run the
                // whole stream with fewer positives
                let ends_positive = pattern.last().map(|e| e.is_positive()).unwrap_or(false);
                let valid =
                    (positives == cutoff_c && ends_positive) || positives < cutoff_c;
                if !valid {
                    continue;
                }
            }
            let neighbors: Vec<Vec<f64>> = vec![
                vec![delta; len],
                vec![-delta; len],
                pattern
                    .iter()
                    .map(|e| if e.is_positive() { -delta } else { delta })
                    .collect(),
                pattern
                    .iter()
                    .map(|e| if e.is_positive() { delta } else { -delta })
                    .collect(),
            ];
            let mut seen: Vec<Vec<u64>> = Vec::new();
            for nb in neighbors {
                let key: Vec<u64> = nb.iter().map(|x| x.to_bits()).collect();
                if seen.contains(&key) {
                    continue;
                }
                seen.push(key);
                out.push(
                    NeighborInstance::new(
                        vec![0.0; len],
                        nb,
                        delta,
                        vec![0.0; len],
                        pattern.clone(),
                    )
                    .expect("family construction respects the neighboring promise"),
                );
            }
        }
    }
    out
}

/// Worst-case audit over a family of instances by quadrature.
///
/// Both orientations of every pair are evaluated, so a zero-probability
/// event on either side surfaces as `Unbounded` in the canonical direction
/// (positive probability on D, zero on D'). Instances with no support on
/// either side are vacuous and skipped.
pub fn verify_dp_bound(
    config: &SvtConfig,
    instances: &[NeighborInstance],
    eps_claim: f64,
) -> Result<AuditReport, AuditError> {
    if instances.is_empty() {
        return Err(AuditError::InvalidParameter(
            "bound verification needs at least one instance".into(),
        ));
    }
    let mut worst: Option<AuditReport> = None;
    for inst in instances {
        let log_d = prob_output_quadrature(config, inst, Side::D)?;
        let log_dp = prob_output_quadrature(config, inst, Side::DPrime)?;
        if log_d == f64::NEG_INFINITY && log_dp == f64::NEG_INFINITY {
            continue;
        }
        // orient so the larger probability sits on D
        let report = if log_d >= log_dp {
            AuditReport::from_log_probs(log_d, log_dp, AuditMethod::Quadrature, 0.0, Some(eps_claim))
        } else {
            AuditReport::from_log_probs(log_dp, log_d, AuditMethod::Quadrature, 0.0, Some(eps_claim))
        };
        let beats = match &worst {
            None => true,
            Some(w) => {
                (report.verdict == Verdict::Unbounded && w.verdict != Verdict::Unbounded)
                    || (w.verdict != Verdict::Unbounded && report.log_ratio > w.log_ratio)
            }
        };
        if beats {
            worst = Some(report);
        }
    }
    worst.ok_or_else(|| {
        AuditError::InvalidParameter("every instance was vacuous (no support on either side)".into())
    })
}

/// One row of a counterexample growth curve.
#[derive(Debug, Clone)]
pub struct GrowthPoint {
    pub m: usize,
    pub measured_log_ratio: f64,
    pub expected: ExpectedRatio,
    pub report: AuditReport,
}

/// Renders a counterexample's loss as a function of its size `m`.
pub fn ratio_growth_curve(
    id: CounterexampleId,
    epsilon: f64,
    m_values: &[usize],
) -> Result<Vec<GrowthPoint>, AuditError> {
    let mut out = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let ce = make_counterexample(&CounterexampleSpec {
            id,
            size_m: m,
            epsilon,
        })?;
        let log_d = prob_output_quadrature(&ce.config, &ce.instance, Side::D)?;
        let log_dp = prob_output_quadrature(&ce.config, &ce.instance, Side::DPrime)?;
        let report = AuditReport::from_log_probs(
            log_d,
            log_dp,
            AuditMethod::Quadrature,
            0.0,
            Some(epsilon),
        );
        out.push(GrowthPoint {
            m,
            measured_log_ratio: report.log_ratio,
            expected: ce.expected_log_ratio,
            report,
        });
    }
    Ok(out)
}

/// Header for the audit CSV export.
pub const AUDIT_CSV_HEADER: &str =
    "variant,instance_id,m,method,log_prob_d,log_prob_dprime,log_ratio,ci,verdict";

/// One audit CSV row. `m` is empty for audits without a size parameter.
pub fn audit_csv_row(
    variant: Variant,
    instance_id: &str,
    m: Option<usize>,
    report: &AuditReport,
) -> String {
    let m_field = m.map(|v| v.to_string()).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{}",
        variant.name(),
        instance_id,
        m_field,
        report.method,
        report.log_prob_d,
        report.log_prob_d_prime,
        report.log_ratio,
        report.ci_halfwidth,
        report.verdict
    )
}
