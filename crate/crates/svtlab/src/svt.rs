//! Sparse vector technique variants.
//!
//! Seven variants are implemented exactly as they appear in the literature,
//! including the ones that are known not to be private — those are audit
//! subjects, not recommendations. All variants share the same skeleton:
//! draw threshold noise `rho` once, then for each query draw `nu_i` and
//! compare `q_i + nu_i >= T_i + rho`, emitting an above/below indicator (or
//! a numeric answer, where the variant says so) and aborting after `c`
//! positive outcomes where the variant has a cutoff.
//!
//! Where the variants differ:
//!
//! | variant | eps1        | rho scale   | nu scale     | notes |
//! |---------|-------------|-------------|--------------|-------|
//! | Alg1    | eps/2       | D/eps1      | 2cD/eps2     | |
//! | Alg2    | eps/2       | cD/eps1     | 2cD/eps2     | redraws rho after each above |
//! | Alg3    | eps/2       | D/eps1      | cD/eps2      | outputs q_i + nu_i for aboves (not private) |
//! | Alg4    | eps/4       | D/eps1      | D/eps2       | ((1+6c)/4 eps)-DP only |
//! | Alg5    | eps/2       | D/eps1      | 0            | no cutoff (not private) |
//! | Alg6    | free        | D/eps1      | D/eps2       | no cutoff (not private); free split = GPTT |
//! | Alg7    | free        | D/eps1      | 2cD/eps2     | three-way budget; numeric outputs via eps3 |
//!
//! `D` is the shared query sensitivity. Alg7 with monotonic queries halves
//! the query noise to `cD/eps2`.

use crate::mechanisms::{LaplaceDist, MechanismError, QuerySet, SelectionResult};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const SPLIT_SUM_TOL: f64 = 1e-12;
const MAX_RETRAVERSAL_PASSES: usize = 1000;

#[derive(Debug, Error)]
pub enum SvtError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),
    #[error("cutoff {c} invalid for {n} queries")]
    InvalidCutoff { c: usize, n: usize },
    #[error("threshold vector has length {got}, expected {expected}")]
    ThresholdLength { expected: usize, got: usize },
    #[error("session is closed: the cutoff was reached")]
    SessionClosed,
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

/// The SVT variants under study. `Alg6` with a caller-chosen budget split is
/// the generalized private threshold testing algorithm (GPTT).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Alg1,
    Alg2,
    Alg3,
    Alg4,
    Alg5,
    Alg6,
    Alg7,
}

impl Variant {
    /// Variants that stop after `c` positive outcomes.
    pub fn aborts(&self) -> bool {
        !matches!(self, Variant::Alg5 | Variant::Alg6)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Alg1 => "alg1",
            Variant::Alg2 => "alg2",
            Variant::Alg3 => "alg3",
            Variant::Alg4 => "alg4",
            Variant::Alg5 => "alg5",
            Variant::Alg6 => "alg6",
            Variant::Alg7 => "alg7",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = SvtError;
    fn from_str(s: &str) -> Result<Self, SvtError> {
        match s {
            "alg1" => Ok(Variant::Alg1),
            "alg2" => Ok(Variant::Alg2),
            "alg3" => Ok(Variant::Alg3),
            "alg4" => Ok(Variant::Alg4),
            "alg5" => Ok(Variant::Alg5),
            "alg6" | "gptt" => Ok(Variant::Alg6),
            "alg7" => Ok(Variant::Alg7),
            other => Err(SvtError::InvalidParameter(format!(
                "unknown variant {other:?}"
            ))),
        }
    }
}

/// Three-way allocation of a privacy budget: threshold noise, query noise,
/// numeric-output noise. `eps3 = 0` disables numeric outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSplit {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
}

impl BudgetSplit {
    pub fn new(eps1: f64, eps2: f64, eps3: f64) -> Result<Self, SvtError> {
        for (name, v) in [("eps1", eps1), ("eps2", eps2), ("eps3", eps3)] {
            if !v.is_finite() || v < 0.0 {
                return Err(SvtError::InvalidParameter(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if eps1 <= 0.0 || eps2 <= 0.0 {
            return Err(SvtError::InvalidParameter(
                "eps1 and eps2 must be strictly positive".into(),
            ));
        }
        Ok(Self { eps1, eps2, eps3 })
    }

    /// Validates that the parts sum to a caller-declared total.
    pub fn with_total(eps1: f64, eps2: f64, eps3: f64, total: f64) -> Result<Self, SvtError> {
        let split = Self::new(eps1, eps2, eps3)?;
        if (split.total() - total).abs() > SPLIT_SUM_TOL {
            return Err(SvtError::InvalidParameter(format!(
                "split parts sum to {} but {total} was declared",
                split.total()
            )));
        }
        Ok(split)
    }

    /// The classic half-and-half split with no numeric budget.
    pub fn halves(epsilon: f64) -> Result<Self, SvtError> {
        Self::new(epsilon / 2.0, epsilon - epsilon / 2.0, 0.0)
    }

    pub fn total(&self) -> f64 {
        self.eps1 + self.eps2 + self.eps3
    }
}

/// Variance-minimizing budget split for the above-threshold comparison.
///
/// Minimizing `2 (D/eps1)^2 + 2 (2cD/eps2)^2` under a fixed `eps1 + eps2`
/// gives `eps1 : eps2 = 1 : (2c)^(2/3)`; with the halved monotonic query
/// noise the ratio becomes `1 : c^(2/3)`.
pub fn optimize_split(
    epsilon_for_selection: f64,
    c: usize,
    monotonic: bool,
) -> Result<BudgetSplit, SvtError> {
    if !(epsilon_for_selection.is_finite() && epsilon_for_selection > 0.0) {
        return Err(SvtError::InvalidParameter(format!(
            "selection budget must be positive, got {epsilon_for_selection}"
        )));
    }
    if c == 0 {
        return Err(SvtError::InvalidCutoff { c, n: 0 });
    }
    let base = if monotonic { c as f64 } else { 2.0 * c as f64 };
    let r = base.powf(2.0 / 3.0);
    let eps1 = epsilon_for_selection / (1.0 + r);
    BudgetSplit::new(eps1, epsilon_for_selection - eps1, 0.0)
}

/// Per-query thresholds, or one scalar broadcast over the whole stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Thresholds {
    Scalar(f64),
    PerQuery(Vec<f64>),
}

impl Thresholds {
    pub fn get(&self, i: usize) -> f64 {
        match self {
            Thresholds::Scalar(t) => *t,
            Thresholds::PerQuery(v) => v[i],
        }
    }

    fn validate(&self) -> Result<(), SvtError> {
        let ok = match self {
            Thresholds::Scalar(t) => t.is_finite(),
            Thresholds::PerQuery(v) => v.iter().all(|t| t.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(SvtError::InvalidParameter("thresholds must be finite".into()))
        }
    }

    fn check_len(&self, n: usize) -> Result<(), SvtError> {
        match self {
            Thresholds::Scalar(_) => Ok(()),
            Thresholds::PerQuery(v) if v.len() == n => Ok(()),
            Thresholds::PerQuery(v) => Err(SvtError::ThresholdLength {
                expected: n,
                got: v.len(),
            }),
        }
    }
}

/// Laplace scales used by a configured variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseScales {
    pub threshold: f64,
    pub query: f64,
    pub numeric: Option<f64>,
}

/// A fully specified SVT instance: variant, cutoff, thresholds, budget
/// split, and the monotonic-query calibration flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvtConfig {
    pub variant: Variant,
    pub cutoff_c: usize,
    pub thresholds: Thresholds,
    split: BudgetSplit,
    pub monotonic: bool,
}

impl SvtConfig {
    /// Builds a config for the variants with fixed budget rules (Alg1-Alg6),
    /// deriving the split from the total budget: `eps/4 : 3 eps/4` for Alg4
    /// and half-and-half everywhere else.
    pub fn new(
        variant: Variant,
        epsilon: f64,
        cutoff_c: usize,
        thresholds: Thresholds,
    ) -> Result<Self, SvtError> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(SvtError::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let split = match variant {
            Variant::Alg4 => {
                let eps1 = epsilon / 4.0;
                BudgetSplit::with_total(eps1, epsilon - eps1, 0.0, epsilon)?
            }
            Variant::Alg7 => {
                return Err(SvtError::InvalidParameter(
                    "Alg7 takes an explicit split; use SvtConfig::with_split".into(),
                ))
            }
            _ => BudgetSplit::halves(epsilon)?,
        };
        Self::with_split(variant, split, cutoff_c, thresholds)
    }

    /// Builds a config with an explicit budget split. For Alg6 this is the
    /// GPTT generalization; for Alg7 it is the native interface. The fixed
    /// variants reject splits that disagree with their printed rule.
    pub fn with_split(
        variant: Variant,
        split: BudgetSplit,
        cutoff_c: usize,
        thresholds: Thresholds,
    ) -> Result<Self, SvtError> {
        thresholds.validate()?;
        match variant {
            Variant::Alg6 | Variant::Alg7 => {}
            Variant::Alg4 => {
                if (split.eps1 * 3.0 - split.eps2).abs() > SPLIT_SUM_TOL {
                    return Err(SvtError::InvalidParameter(
                        "Alg4 fixes eps1 = eps/4".into(),
                    ));
                }
            }
            _ => {
                if (split.eps1 - split.eps2).abs() > SPLIT_SUM_TOL {
                    return Err(SvtError::InvalidParameter(format!(
                        "{} fixes eps1 = eps2 = eps/2",
                        variant.name()
                    )));
                }
            }
        }
        if split.eps3 > 0.0 && variant != Variant::Alg7 {
            return Err(SvtError::UnsupportedCombination(format!(
                "eps3 > 0 is only meaningful for alg7, not {}",
                variant.name()
            )));
        }
        if variant.aborts() && cutoff_c == 0 {
            return Err(SvtError::InvalidCutoff { c: 0, n: 0 });
        }
        Ok(Self {
            variant,
            cutoff_c,
            thresholds,
            split,
            monotonic: false,
        })
    }

    /// Enables the halved monotonic-query noise. Only Alg7's structure has
    /// the supporting analysis, so every other variant is rejected.
    pub fn monotonic(mut self, on: bool) -> Result<Self, SvtError> {
        if on && self.variant != Variant::Alg7 {
            return Err(SvtError::UnsupportedCombination(format!(
                "monotonic calibration is only supported for alg7, not {}",
                self.variant.name()
            )));
        }
        self.monotonic = on;
        Ok(self)
    }

    pub fn split(&self) -> &BudgetSplit {
        &self.split
    }

    /// Laplace scales for threshold noise, query noise, and (when enabled)
    /// numeric-output noise, for queries of sensitivity `delta`.
    pub fn noise_scales(&self, delta: f64) -> Result<NoiseScales, SvtError> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(SvtError::InvalidParameter(format!(
                "sensitivity must be positive, got {delta}"
            )));
        }
        let (e1, e2, e3) = (self.split.eps1, self.split.eps2, self.split.eps3);
        let c = self.cutoff_c as f64;
        let scales = match self.variant {
            Variant::Alg1 => NoiseScales {
                threshold: delta / e1,
                query: 2.0 * c * delta / e2,
                numeric: None,
            },
            Variant::Alg2 => NoiseScales {
                threshold: c * delta / e1,
                query: 2.0 * c * delta / e2,
                numeric: None,
            },
            Variant::Alg3 => NoiseScales {
                threshold: delta / e1,
                query: c * delta / e2,
                numeric: None,
            },
            Variant::Alg4 => NoiseScales {
                threshold: delta / e1,
                query: delta / e2,
                numeric: None,
            },
            Variant::Alg5 => NoiseScales {
                threshold: delta / e1,
                query: 0.0,
                numeric: None,
            },
            Variant::Alg6 => NoiseScales {
                threshold: delta / e1,
                query: delta / e2,
                numeric: None,
            },
            Variant::Alg7 => NoiseScales {
                threshold: delta / e1,
                query: if self.monotonic {
                    c * delta / e2
                } else {
                    2.0 * c * delta / e2
                },
                numeric: (e3 > 0.0).then(|| c * delta / e3),
            },
        };
        Ok(scales)
    }
}

/// One answer of an SVT run: below, above, or a perturbed numeric value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Answer {
    Below,
    Above,
    Numeric(f64),
}

impl Answer {
    pub fn is_positive(&self) -> bool {
        matches!(self, Answer::Above | Answer::Numeric(_))
    }
}

/// Answers emitted before the run ended, plus where the cutoff hit, if it
/// did. `abort_index` is the position of the c-th positive outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeVector {
    pub answers: Vec<Answer>,
    pub abort_index: Option<usize>,
}

impl OutcomeVector {
    pub fn positives(&self) -> usize {
        self.answers.iter().filter(|a| a.is_positive()).count()
    }
}

/// A one-pass interactive answering session.
///
/// The session owns its random stream; feeding the same queries in the same
/// order as a batch run over the same stream yields identical answers.
#[derive(Debug)]
pub struct SvtSession<R: Rng> {
    config: SvtConfig,
    qry_noise: Option<LaplaceDist>,
    num_noise: Option<LaplaceDist>,
    redraw_noise: Option<LaplaceDist>,
    rho: f64,
    positives_count: usize,
    aborted: bool,
    rng: R,
}

impl<R: Rng> SvtSession<R> {
    /// Opens a session for queries of sensitivity `delta`, drawing the
    /// threshold noise immediately.
    pub fn open(config: SvtConfig, delta: f64, mut rng: R) -> Result<Self, SvtError> {
        let scales = config.noise_scales(delta)?;
        let thr_noise = LaplaceDist::new(scales.threshold)?;
        let qry_noise = if scales.query > 0.0 {
            Some(LaplaceDist::new(scales.query)?)
        } else {
            None
        };
        let num_noise = scales.numeric.map(LaplaceDist::new).transpose()?;
        let redraw_noise = if config.variant == Variant::Alg2 {
            Some(LaplaceDist::new(
                config.cutoff_c as f64 * delta / config.split.eps2,
            )?)
        } else {
            None
        };
        let rho = thr_noise.sample(&mut rng);
        Ok(Self {
            config,
            qry_noise,
            num_noise,
            redraw_noise,
            rho,
            positives_count: 0,
            aborted: false,
            rng,
        })
    }

    pub fn positives(&self) -> usize {
        self.positives_count
    }

    pub fn aborted(&self) -> bool {
        self.aborted
    }

    /// The realized noisy-threshold offset. Exposed for tests and audits;
    /// a real deployment would never reveal it.
    pub fn threshold_noise(&self) -> f64 {
        self.rho
    }

    /// Answers one query against its threshold, updating the positive count
    /// and abort state.
    pub fn feed(&mut self, true_answer: f64, threshold: f64) -> Result<Answer, SvtError> {
        if self.aborted {
            return Err(SvtError::SessionClosed);
        }
        let nu = match &self.qry_noise {
            Some(d) => d.sample(&mut self.rng),
            None => 0.0,
        };
        if true_answer + nu >= threshold + self.rho {
            let answer = match self.config.variant {
                Variant::Alg3 => Answer::Numeric(true_answer + nu),
                Variant::Alg7 => match &self.num_noise {
                    Some(d) => Answer::Numeric(true_answer + d.sample(&mut self.rng)),
                    None => Answer::Above,
                },
                _ => Answer::Above,
            };
            if let Some(d) = &self.redraw_noise {
                self.rho = d.sample(&mut self.rng);
            }
            self.positives_count += 1;
            if self.config.variant.aborts() && self.positives_count >= self.config.cutoff_c {
                self.aborted = true;
            }
            Ok(answer)
        } else {
            Ok(Answer::Below)
        }
    }
}

/// Runs the configured variant over a whole query set.
///
/// An empty query set yields an empty outcome vector.
pub fn run_svt<R: Rng>(
    config: &SvtConfig,
    qs: &QuerySet,
    rng: &mut R,
) -> Result<OutcomeVector, SvtError> {
    config.thresholds.check_len(qs.len())?;
    let mut session = SvtSession::open(config.clone(), qs.sensitivity_delta, rng)?;
    let mut answers = Vec::with_capacity(qs.len());
    let mut abort_index = None;
    for (i, &q) in qs.scores.iter().enumerate() {
        let a = session.feed(q, config.thresholds.get(i))?;
        answers.push(a);
        if session.aborted() {
            abort_index = Some(i);
            break;
        }
    }
    Ok(OutcomeVector {
        answers,
        abort_index,
    })
}

/// Top-c selection by repeated traversal under a raised threshold.
///
/// Thresholds are raised by `boost_sigmas` standard deviations of the query
/// noise (`sqrt(2) * scale` for Laplace). Passes continue over the
/// not-yet-selected queries — fresh query noise per encounter, the same
/// threshold noise throughout, one shared cutoff budget — until `c` queries
/// are selected or the pass guard trips.
pub fn run_svt_retraversal<R: Rng>(
    config: &SvtConfig,
    qs: &QuerySet,
    threshold_boost_sigmas: f64,
    rng: &mut R,
) -> Result<SelectionResult, SvtError> {
    if config.variant != Variant::Alg7 {
        return Err(SvtError::UnsupportedCombination(format!(
            "retraversal is defined for alg7, not {}",
            config.variant.name()
        )));
    }
    if !(threshold_boost_sigmas.is_finite() && threshold_boost_sigmas >= 0.0) {
        return Err(SvtError::InvalidParameter(format!(
            "threshold boost must be nonnegative, got {threshold_boost_sigmas}"
        )));
    }
    config.thresholds.check_len(qs.len())?;
    let c = config.cutoff_c;
    if c == 0 || c > qs.len() {
        return Err(SvtError::InvalidCutoff { c, n: qs.len() });
    }
    let scales = config.noise_scales(qs.sensitivity_delta)?;
    let sigma = core::f64::consts::SQRT_2 * scales.query;
    let boost = threshold_boost_sigmas * sigma;
    let thr_noise = LaplaceDist::new(scales.threshold)?;
    let qry_noise = LaplaceDist::new(scales.query)?;
    let rho = thr_noise.sample(rng);

    let mut selected = vec![false; qs.len()];
    let mut chosen = Vec::with_capacity(c);
    for _pass in 0..MAX_RETRAVERSAL_PASSES {
        for (i, &q) in qs.scores.iter().enumerate() {
            if selected[i] {
                continue;
            }
            let nu = qry_noise.sample(rng);
            if q + nu >= config.thresholds.get(i) + boost + rho {
                selected[i] = true;
                chosen.push(i);
                if chosen.len() >= c {
                    return Ok(SelectionResult {
                        chosen_indices: chosen,
                        per_round_budget: config.split.total() / c as f64,
                    });
                }
            }
        }
        if chosen.len() >= qs.len() {
            break;
        }
    }
    Ok(SelectionResult {
        chosen_indices: chosen,
        per_round_budget: config.split.total() / c as f64,
    })
}

/// Derived query for checking an estimate against the true answer: the
/// absolute error itself becomes the query, so any noise is added outside
/// the absolute value.
pub fn absolute_error_adapter(estimate: f64, true_answer: f64) -> f64 {
    (estimate - true_answer).abs()
}
