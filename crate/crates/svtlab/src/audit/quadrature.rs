//! Exact output-vector probabilities as one-dimensional integrals.
//!
//! Conditioned on the threshold noise taking value `z`, the answers of any
//! fixed-threshold-noise variant are independent across queries, so the
//! probability of an output vector is
//!
//! ```text
//! integral  pdf_rho(z) * prod_{i below} F_nu(T_i + z - q_i)
//!                      * prod_{i above} (1 - F_nu(T_i + z - q_i))  dz
//! ```
//!
//! evaluated here by adaptive Simpson quadrature with the product formed in
//! log-space. Numeric outputs contribute density factors: the variant that
//! reuses its comparison noise in the output pins that noise to
//! `a_i - q_i`, which both multiplies in `pdf_nu(a_i - q_i)` and truncates
//! the integration range to `z <= a_i - T_i` (the comparison must still
//! have passed). The three-budget variant draws fresh output noise, so its
//! numeric factor is a constant density and no truncation applies.
//!
//! The variant that redraws its threshold noise after each positive does
//! not fit this structure and is rejected; audit it with Monte Carlo.
//!
//! For patterns with numeric entries the returned value is a log-density
//! in the numeric coordinates, not a log-probability.

use super::{AuditError, NeighborInstance, PatternEntry, Side};
use crate::mechanisms::LaplaceDist;
use crate::svt::{SvtConfig, Variant};

/// Probability grows by less than this relative amount when the domain is
/// extended: the analytic tail bound must fall below it.
const TAIL_RTOL: f64 = 1e-12;
/// Target relative accuracy of the integral.
const QUAD_RTOL: f64 = 1e-11;
const MAX_DEPTH: u32 = 56;

enum Factor {
    /// ln F_nu(arg0 + z)
    LnCdf { arg0: f64 },
    /// ln (1 - F_nu(arg0 + z))
    LnSf { arg0: f64 },
}

struct Integrand {
    rho: LaplaceDist,
    nu: Option<LaplaceDist>,
    factors: Vec<Factor>,
}

impl Integrand {
    fn ln_value(&self, z: f64) -> f64 {
        let mut acc = self.rho.ln_pdf(z);
        if let Some(nu) = &self.nu {
            for f in &self.factors {
                acc += match f {
                    Factor::LnCdf { arg0 } => nu.ln_cdf(arg0 + z),
                    Factor::LnSf { arg0 } => nu.ln_sf(arg0 + z),
                };
            }
        }
        acc
    }

    fn value(&self, z: f64) -> f64 {
        self.ln_value(z).exp()
    }
}

/// Log-probability (or log-density, for numeric patterns) of the
/// instance's target output on one side of the neighboring pair.
pub fn prob_output_quadrature(
    config: &SvtConfig,
    inst: &NeighborInstance,
    on: Side,
) -> Result<f64, AuditError> {
    super::validate_pattern(config, inst)?;
    if config.variant == Variant::Alg2 {
        return Err(AuditError::UnsupportedVariant(
            "alg2 redraws its threshold noise after positives; use Monte Carlo".into(),
        ));
    }
    let scores = inst.scores(on);
    let scales = config.noise_scales(inst.delta)?;
    let rho = LaplaceDist::new(scales.threshold)?;

    if inst.pattern.is_empty() {
        return Ok(0.0);
    }

    // zero query noise: the comparisons are deterministic given z, and the
    // probability is the rho mass of an interval
    if scales.query == 0.0 {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (i, e) in inst.pattern.iter().enumerate() {
            let edge = scores[i] - inst.thresholds[i];
            match e {
                PatternEntry::Below => lo = lo.max(edge),
                PatternEntry::Above => hi = hi.min(edge),
                PatternEntry::Numeric(_) => unreachable!("validated: no numeric for this variant"),
            }
        }
        if lo >= hi {
            return Ok(f64::NEG_INFINITY);
        }
        let mass_hi = if hi == f64::INFINITY { 1.0 } else { rho.cdf(hi) };
        let mass_lo = if lo == f64::NEG_INFINITY { 0.0 } else { rho.cdf(lo) };
        let p = (mass_hi - mass_lo).max(0.0);
        return Ok(p.ln());
    }

    let nu = LaplaceDist::new(scales.query)?;
    let mut factors = Vec::with_capacity(inst.pattern.len());
    let mut ln_const = 0.0;
    let mut hi_cap = f64::INFINITY;
    for (i, e) in inst.pattern.iter().enumerate() {
        let arg0 = inst.thresholds[i] - scores[i];
        match e {
            PatternEntry::Below => factors.push(Factor::LnCdf { arg0 }),
            PatternEntry::Above => factors.push(Factor::LnSf { arg0 }),
            PatternEntry::Numeric(v) => match config.variant {
                Variant::Alg3 => {
                    // nu_i is pinned to v - q_i and the passed comparison
                    // caps the noisy threshold at v
                    ln_const += nu.ln_pdf(v - scores[i]);
                    hi_cap = hi_cap.min(v - inst.thresholds[i]);
                }
                Variant::Alg7 => {
                    let gamma = LaplaceDist::new(
                        scales.numeric.expect("validated: eps3 > 0 for numeric pattern"),
                    )?;
                    ln_const += gamma.ln_pdf(v - scores[i]);
                    factors.push(Factor::LnSf { arg0 });
                }
                _ => unreachable!("validated: numeric entries imply alg3 or alg7"),
            },
        }
    }

    let integrand = Integrand {
        rho,
        nu: Some(nu),
        factors,
    };

    // breakpoints: the rho kink and every nu-CDF kink
    let mut kinks: Vec<f64> = vec![0.0];
    for f in &integrand.factors {
        let k = match f {
            Factor::LnCdf { arg0 } | Factor::LnSf { arg0 } => -arg0,
        };
        kinks.push(k);
    }
    kinks.retain(|k| k.is_finite());
    let kink_lo = kinks.iter().cloned().fold(f64::INFINITY, f64::min);
    let kink_hi = kinks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = 60.0 * (scales.threshold + scales.query);

    let mut lo = kink_lo - span;
    let mut hi = (kink_hi + span).min(hi_cap);
    let mut integral = integrate_segments(&integrand, lo, hi, &kinks);
    // widen until the analytic tail bounds are negligible next to the value
    for _ in 0..8 {
        let tail_lo = tail_bound_low(&integrand, lo);
        let tail_hi = if hi == hi_cap {
            0.0
        } else {
            tail_bound_high(&integrand, hi)
        };
        if integral > 0.0 && (tail_lo + tail_hi) <= TAIL_RTOL * integral {
            break;
        }
        if integral == 0.0 && tail_lo + tail_hi == 0.0 {
            break;
        }
        lo -= span;
        hi = (hi + span).min(hi_cap);
        integral = integrate_segments(&integrand, lo, hi, &kinks);
    }

    if integral <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(integral.ln() + ln_const)
}

/// Upper bound on the integrand mass below `lo`: every ln-CDF factor is
/// nondecreasing in z and every ln-SF factor is at most 0.
fn tail_bound_low(integrand: &Integrand, lo: f64) -> f64 {
    let mut ln_bound = integrand.rho.ln_cdf(lo);
    if let Some(nu) = &integrand.nu {
        for f in &integrand.factors {
            if let Factor::LnCdf { arg0 } = f {
                ln_bound += nu.ln_cdf(arg0 + lo);
            }
        }
    }
    ln_bound.exp()
}

/// Upper bound on the integrand mass above `hi`, by the mirror argument.
fn tail_bound_high(integrand: &Integrand, hi: f64) -> f64 {
    let mut ln_bound = integrand.rho.ln_sf(hi);
    if let Some(nu) = &integrand.nu {
        for f in &integrand.factors {
            if let Factor::LnSf { arg0 } = f {
                ln_bound += nu.ln_sf(arg0 + hi);
            }
        }
    }
    ln_bound.exp()
}

fn integrate_segments(integrand: &Integrand, lo: f64, hi: f64, kinks: &[f64]) -> f64 {
    if lo >= hi {
        return 0.0;
    }
    let mut edges: Vec<f64> = kinks.iter().cloned().filter(|k| *k > lo && *k < hi).collect();
    edges.push(lo);
    edges.push(hi);
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup();

    // initial strips no wider than half the smallest noise scale, so a
    // feature at the distributions' own width cannot slip between the
    // probe points of the adaptive pass
    let min_scale = match &integrand.nu {
        Some(nu) => integrand.rho.scale().min(nu.scale()),
        None => integrand.rho.scale(),
    };
    let target = 0.5 * min_scale;
    let mut strips: Vec<(f64, f64)> = Vec::new();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = (((b - a) / target).ceil() as usize).clamp(1, 4096);
        let step = (b - a) / n as f64;
        for k in 0..n {
            let s0 = a + step * k as f64;
            let s1 = if k + 1 == n { b } else { a + step * (k + 1) as f64 };
            strips.push((s0, s1));
        }
    }

    let f = |z: f64| integrand.value(z);
    // coarse pass over the strips sizes the absolute tolerance
    let coarse: f64 = strips
        .iter()
        .map(|&(a, b)| {
            let m = 0.5 * (a + b);
            (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
        })
        .sum();
    if coarse <= 0.0 {
        return 0.0;
    }
    let tol = (coarse * QUAD_RTOL / strips.len() as f64).max(1e-300);

    strips
        .iter()
        .map(|&(a, b)| {
            let m = 0.5 * (a + b);
            let (fa, fm, fb) = (f(a), f(m), f(b));
            let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
            adaptive_simpson(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1)
}
