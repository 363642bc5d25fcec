//! Top-c selection benchmark harness.
//!
//! The task: given an item histogram, privately select the c most frequent
//! items. Ground truth fixes the threshold at the midpoint of the c-th and
//! (c+1)-th true scores. Each trial reshuffles the item order and runs one
//! method; quality is scored by the false negative rate (FNR, fraction of
//! the true top-c that was missed) and the score error rate
//! (SER = 1 - avgScore(selected) / avgScore(top-c)).
//!
//! Trials run on independent seeded streams and aggregate by trial index,
//! so a result is bit-identical for a given (plan, histogram, seed) no
//! matter how the trials are scheduled.

use crate::exec;
use crate::mechanisms::{em_select_top_c, MechanismError, QuerySet};
use crate::rng;
use crate::svt::{
    run_svt, run_svt_retraversal, BudgetSplit, SvtConfig, SvtError, Thresholds, Variant,
};
use rand::seq::SliceRandom;
use rand_distr::{Binomial, Distribution};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error(transparent)]
    Svt(#[from] SvtError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

/// Item identifiers with their (true) nonnegative scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemHistogram {
    items: Vec<(String, f64)>,
}

impl ItemHistogram {
    pub fn from_counts(items: Vec<(String, f64)>) -> Result<Self, BenchError> {
        let mut seen = std::collections::HashSet::new();
        for (id, score) in &items {
            if !seen.insert(id.as_str()) {
                return Err(BenchError::InvalidData(format!("duplicate item id {id:?}")));
            }
            if !(score.is_finite() && *score >= 0.0) {
                return Err(BenchError::InvalidData(format!(
                    "score for {id:?} must be a nonnegative finite count, got {score}"
                )));
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[(String, f64)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn score(&self, index: usize) -> f64 {
        self.items[index].1
    }

    pub fn total(&self) -> f64 {
        self.items.iter().map(|(_, s)| s).sum()
    }

    /// Writes the `item,count` CSV form.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "item,count")?;
        for (id, score) in &self.items {
            writeln!(w, "{id},{score}")?;
        }
        Ok(())
    }

    /// Reads the `item,count` CSV form (header mandatory).
    pub fn read_csv(path: &Path) -> Result<Self, BenchError> {
        let file = std::fs::File::open(path)?;
        let mut lines = io::BufReader::new(file).lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "item,count" => {}
            _ => {
                return Err(BenchError::InvalidData(
                    "histogram CSV must start with an `item,count` header".into(),
                ))
            }
        }
        let mut items = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, score) = line.split_once(',').ok_or_else(|| {
                BenchError::InvalidData(format!("line {}: expected `item,count`", lineno + 2))
            })?;
            let score: f64 = score.trim().parse().map_err(|_| {
                BenchError::InvalidData(format!("line {}: bad count {score:?}", lineno + 2))
            })?;
            items.push((id.trim().to_string(), score));
        }
        if items.is_empty() {
            return Err(BenchError::InvalidData("histogram CSV has no rows".into()));
        }
        Self::from_counts(items)
    }
}

/// Builds an item histogram from a transaction file: one transaction per
/// line, whitespace-separated item ids. An item counts once per
/// transaction (support counting); empty lines are skipped.
pub fn ingest_transactions(path: &Path) -> Result<ItemHistogram, BenchError> {
    let file = std::fs::File::open(path)?;
    let mut counts: std::collections::BTreeMap<String, f64> = std::collections::BTreeMap::new();
    let mut transactions = 0u64;
    for line in io::BufReader::new(file).lines() {
        let line = line?;
        let items: std::collections::BTreeSet<&str> = line.split_whitespace().collect();
        if items.is_empty() {
            continue;
        }
        transactions += 1;
        for item in items {
            *counts.entry(item.to_string()).or_insert(0.0) += 1.0;
        }
    }
    if transactions == 0 {
        return Err(BenchError::InvalidData(
            "transaction file contains no transactions".into(),
        ));
    }
    ItemHistogram::from_counts(counts.into_iter().collect())
}

/// Synthesizes a histogram whose rank-i item has expected count
/// proportional to 1/i, realized by multinomial sampling of `n_records`
/// draws. Counts always sum to `n_records` exactly.
pub fn gen_zipf(n_items: usize, n_records: u64, seed: u64) -> Result<ItemHistogram, BenchError> {
    if n_items == 0 || n_records == 0 {
        return Err(BenchError::InvalidParameter(
            "need at least one item and one record".into(),
        ));
    }
    let harmonic: f64 = (1..=n_items).map(|i| 1.0 / i as f64).sum();
    let width = n_items.to_string().len();
    let mut rng = rng::root(seed);
    let mut remaining = n_records;
    let mut mass_left = 1.0f64;
    let mut items = Vec::with_capacity(n_items);
    for i in 1..=n_items {
        let p_i = (1.0 / i as f64) / harmonic;
        let count = if i == n_items {
            remaining
        } else if remaining == 0 {
            0
        } else {
            let p = (p_i / mass_left).clamp(0.0, 1.0);
            let draw = Binomial::new(remaining, p)
                .expect("clamped probability")
                .sample(&mut rng);
            remaining -= draw;
            mass_left -= p_i;
            draw
        };
        items.push((format!("i{i:0width$}"), count as f64));
    }
    ItemHistogram::from_counts(items)
}

/// True top-c indices (score descending, ties broken by item id) and the
/// benchmark threshold: the midpoint of the c-th and (c+1)-th scores.
#[derive(Debug, Clone, PartialEq)]
pub struct TopC {
    pub indices: Vec<usize>,
    pub threshold: f64,
}

pub fn true_top_c(hist: &ItemHistogram, c: usize) -> Result<TopC, BenchError> {
    if c == 0 {
        return Err(BenchError::InvalidParameter("c must be at least 1".into()));
    }
    if hist.len() < c + 1 {
        return Err(BenchError::InvalidParameter(format!(
            "need at least c+1 = {} items, have {}",
            c + 1,
            hist.len()
        )));
    }
    let mut order: Vec<usize> = (0..hist.len()).collect();
    order.sort_by(|&a, &b| {
        let (ida, sa) = &hist.items[a];
        let (idb, sb) = &hist.items[b];
        sb.partial_cmp(sa).unwrap().then_with(|| ida.cmp(idb))
    });
    let threshold = (hist.score(order[c - 1]) + hist.score(order[c])) / 2.0;
    Ok(TopC {
        indices: order[..c].to_vec(),
        threshold,
    })
}

/// Fraction of the true top-c that the selection missed.
pub fn score_fnr(selected: &[usize], top_c: &[usize]) -> f64 {
    let sel: std::collections::HashSet<usize> = selected.iter().cloned().collect();
    let missed = top_c.iter().filter(|i| !sel.contains(i)).count();
    missed as f64 / top_c.len() as f64
}

/// Score error rate: `1 - avgScore(selected) / avgScore(top_c)`, undefined
/// for an empty selection.
pub fn score_ser(
    selected: &[usize],
    top_c: &[usize],
    hist: &ItemHistogram,
) -> Result<f64, BenchError> {
    if selected.is_empty() {
        return Err(BenchError::UndefinedMetric(
            "SER is undefined for an empty selection".into(),
        ));
    }
    let avg = |idx: &[usize]| idx.iter().map(|&i| hist.score(i)).sum::<f64>() / idx.len() as f64;
    let top_avg = avg(top_c);
    if top_avg == 0.0 {
        return Err(BenchError::UndefinedMetric(
            "SER is undefined when the top-c scores are all zero".into(),
        ));
    }
    Ok(1.0 - avg(selected) / top_avg)
}

/// Budget allocation rules between threshold noise and query noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRule {
    OneOne,
    OneThree,
    OneC,
    OneC23,
    OneTwoC23,
}

impl SplitRule {
    /// The `eps1 : eps2` split of a selection budget at cutoff `c`.
    pub fn split_for(&self, epsilon: f64, c: usize) -> Result<BudgetSplit, SvtError> {
        let ratio = match self {
            SplitRule::OneOne => 1.0,
            SplitRule::OneThree => 3.0,
            SplitRule::OneC => c as f64,
            SplitRule::OneC23 => (c as f64).powf(2.0 / 3.0),
            SplitRule::OneTwoC23 => (2.0 * c as f64).powf(2.0 / 3.0),
        };
        let eps1 = epsilon / (1.0 + ratio);
        BudgetSplit::new(eps1, epsilon - eps1, 0.0)
    }
}

impl fmt::Display for SplitRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitRule::OneOne => "1:1",
            SplitRule::OneThree => "1:3",
            SplitRule::OneC => "1:c",
            SplitRule::OneC23 => "1:c23",
            SplitRule::OneTwoC23 => "1:2c23",
        })
    }
}

impl std::str::FromStr for SplitRule {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "1:1" => Ok(SplitRule::OneOne),
            "1:3" => Ok(SplitRule::OneThree),
            "1:c" => Ok(SplitRule::OneC),
            "1:c23" => Ok(SplitRule::OneC23),
            "1:2c23" => Ok(SplitRule::OneTwoC23),
            other => Err(BenchError::InvalidParameter(format!(
                "unknown split rule {other:?} (expected 1:1, 1:3, 1:c, 1:c23, 1:2c23)"
            ))),
        }
    }
}

/// A benchmarked selection method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchMethod {
    /// Threshold-redrawing SVT with its fixed half-and-half budget.
    SvtDpBook,
    /// Three-budget SVT (no numeric outputs), monotonic calibration.
    SvtS(SplitRule),
    /// SVT with threshold boost and retraversal; the boost is in whole
    /// standard deviations of the query noise.
    SvtReTr(SplitRule, u32),
    /// Exponential mechanism, c rounds of eps/c.
    Em,
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchMethod::SvtDpBook => write!(f, "svt-dpbook"),
            BenchMethod::SvtS(rule) => write!(f, "svt-s:{rule}"),
            BenchMethod::SvtReTr(rule, boost) => write!(f, "svt-retr:{rule}:{boost}D"),
            BenchMethod::Em => write!(f, "em"),
        }
    }
}

impl std::str::FromStr for BenchMethod {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, BenchError> {
        if s == "em" {
            return Ok(BenchMethod::Em);
        }
        if s == "svt-dpbook" {
            return Ok(BenchMethod::SvtDpBook);
        }
        if let Some(rule) = s.strip_prefix("svt-s:") {
            return Ok(BenchMethod::SvtS(rule.parse()?));
        }
        if let Some(rest) = s.strip_prefix("svt-retr:") {
            let (rule, boost) = rest.rsplit_once(':').ok_or_else(|| {
                BenchError::InvalidParameter(format!(
                    "expected svt-retr:<r1>:<r2>:<k>D, got {s:?}"
                ))
            })?;
            let boost = boost
                .strip_suffix('D')
                .and_then(|b| b.parse::<u32>().ok())
                .ok_or_else(|| {
                    BenchError::InvalidParameter(format!(
                        "boost must look like 3D, got {boost:?}"
                    ))
                })?;
            return Ok(BenchMethod::SvtReTr(rule.parse()?, boost));
        }
        Err(BenchError::InvalidParameter(format!(
            "unknown method {s:?} (expected em, svt-dpbook, svt-s:<rule>, svt-retr:<rule>:<k>D)"
        )))
    }
}

/// One benchmark configuration: method, cutoff, budget, trial count, seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchPlan {
    pub method: BenchMethod,
    pub c: usize,
    pub epsilon: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Per-trial selection quality. `ser` is clamped to `[0, 1]` and absent
/// when the trial selected nothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub selected_count: usize,
    pub fnr: f64,
    pub ser: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub trials: Vec<TrialOutcome>,
    pub mean_fnr: f64,
    pub std_fnr: f64,
    /// Mean/stddev over the trials where SER was defined.
    pub mean_ser: Option<f64>,
    pub std_ser: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs one benchmark plan over a histogram.
///
/// Trial `t` draws everything from stream `t` of the plan seed: first the
/// item order shuffle, then the mechanism randomness. Selection quality is
/// scored against the unshuffled ground truth.
pub fn run_bench(plan: &BenchPlan, hist: &ItemHistogram) -> Result<BenchResult, BenchError> {
    if plan.trials == 0 {
        return Err(BenchError::InvalidParameter("need at least one trial".into()));
    }
    if !(plan.epsilon.is_finite() && plan.epsilon > 0.0) {
        return Err(BenchError::InvalidParameter(format!(
            "epsilon must be positive, got {}",
            plan.epsilon
        )));
    }
    let top = true_top_c(hist, plan.c)?;
    // fail fast on an invalid method/budget combination
    trial_config(plan, top.threshold)?;

    let outcomes: Vec<Result<TrialOutcome, String>> =
        exec::map_indexed(plan.trials, |t| {
            run_trial(plan, hist, &top, t as u64).map_err(|e| e.to_string())
        });
    let mut trials = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        trials.push(o.map_err(BenchError::InvalidData)?);
    }

    let fnrs: Vec<f64> = trials.iter().map(|t| t.fnr).collect();
    let sers: Vec<f64> = trials.iter().filter_map(|t| t.ser).collect();
    let (mean_fnr, std_fnr) = mean_std(&fnrs);
    let (mean_ser, std_ser) = if sers.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&sers);
        (Some(m), Some(s))
    };
    Ok(BenchResult {
        trials,
        mean_fnr,
        std_fnr,
        mean_ser,
        std_ser,
    })
}

/// SVT configuration for the plan's method, if it uses one.
fn trial_config(plan: &BenchPlan, threshold: f64) -> Result<Option<SvtConfig>, BenchError> {
    let cfg = match plan.method {
        BenchMethod::Em => None,
        BenchMethod::SvtDpBook => Some(SvtConfig::new(
            Variant::Alg2,
            plan.epsilon,
            plan.c,
            Thresholds::Scalar(threshold),
        )?),
        BenchMethod::SvtS(rule) | BenchMethod::SvtReTr(rule, _) => Some(
            SvtConfig::with_split(
                Variant::Alg7,
                rule.split_for(plan.epsilon, plan.c)?,
                plan.c,
                Thresholds::Scalar(threshold),
            )?
            .monotonic(true)?,
        ),
    };
    Ok(cfg)
}

fn run_trial(
    plan: &BenchPlan,
    hist: &ItemHistogram,
    top: &TopC,
    trial: u64,
) -> Result<TrialOutcome, BenchError> {
    let mut rng = rng::stream(plan.seed, trial);
    let mut perm: Vec<usize> = (0..hist.len()).collect();
    perm.shuffle(&mut rng);
    let scores: Vec<f64> = perm.iter().map(|&i| hist.score(i)).collect();
    // support counts are monotonic with sensitivity 1
    let qs = QuerySet::new(scores, 1.0, true)?;

    let selected: Vec<usize> = match plan.method {
        BenchMethod::Em => em_select_top_c(&qs, plan.epsilon, plan.c, &mut rng)?
            .chosen_indices
            .iter()
            .map(|&pos| perm[pos])
            .collect(),
        BenchMethod::SvtDpBook | BenchMethod::SvtS(_) => {
            let cfg = trial_config(plan, top.threshold)?.expect("svt method");
            run_svt(&cfg, &qs, &mut rng)?
                .answers
                .iter()
                .enumerate()
                .filter(|(_, a)| a.is_positive())
                .map(|(pos, _)| perm[pos])
                .collect()
        }
        BenchMethod::SvtReTr(_, boost) => {
            let cfg = trial_config(plan, top.threshold)?.expect("svt method");
            run_svt_retraversal(&cfg, &qs, boost as f64, &mut rng)?
                .chosen_indices
                .iter()
                .map(|&pos| perm[pos])
                .collect()
        }
    };

    let fnr = score_fnr(&selected, &top.indices);
    let ser = match score_ser(&selected, &top.indices, hist) {
        Ok(v) => Some(v.clamp(0.0, 1.0)),
        Err(BenchError::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(TrialOutcome {
        selected_count: selected.len(),
        fnr,
        ser,
    })
}

pub const TRIALS_CSV_HEADER: &str = "method,c,epsilon,trial,selected_count,fnr,ser";
pub const SUMMARY_CSV_HEADER: &str = "method,c,epsilon,mean_ser,std_ser,mean_fnr,std_fnr";

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

/// Per-trial rows for a batch of runs, in the given order.
pub fn write_trials_csv<W: Write>(
    w: &mut W,
    runs: &[(BenchPlan, BenchResult)],
) -> io::Result<()> {
    writeln!(w, "{TRIALS_CSV_HEADER}")?;
    for (plan, result) in runs {
        for (t, trial) in result.trials.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                plan.method,
                plan.c,
                plan.epsilon,
                t,
                trial.selected_count,
                trial.fnr,
                opt_field(trial.ser)
            )?;
        }
    }
    Ok(())
}

/// One summary row per run, in the given order.
pub fn write_summary_csv<W: Write>(
    w: &mut W,
    runs: &[(BenchPlan, BenchResult)],
) -> io::Result<()> {
    writeln!(w, "{SUMMARY_CSV_HEADER}")?;
    for (plan, result) in runs {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            plan.method,
            plan.c,
            plan.epsilon,
            opt_field(result.mean_ser),
            opt_field(result.std_ser),
            result.mean_fnr,
            result.std_fnr
        )?;
    }
    Ok(())
}
