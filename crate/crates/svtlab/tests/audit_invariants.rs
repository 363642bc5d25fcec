//! Cross-checks between the quadrature engine, the Monte Carlo estimator,
//! and the closed forms of the published counterexamples.

use svtlab::audit::{
    adversarial_family, make_counterexample, prob_output_montecarlo, prob_output_quadrature,
    ratio_growth_curve, verify_dp_bound, CounterexampleId, CounterexampleSpec, ExpectedRatio,
    NeighborInstance, PatternEntry, Side, Verdict,
};
use svtlab::rng;
use svtlab::svt::{SvtConfig, Thresholds, Variant};

fn quad_pair(cfg: &SvtConfig, inst: &NeighborInstance) -> (f64, f64) {
    (
        prob_output_quadrature(cfg, inst, Side::D).unwrap(),
        prob_output_quadrature(cfg, inst, Side::DPrime).unwrap(),
    )
}

#[test]
fn thm2_instance_has_one_sided_support() {
    for &eps in &[0.5, 1.0, 2.0] {
        let ce = make_counterexample(&CounterexampleSpec {
            id: CounterexampleId::Alg5Thm2,
            size_m: 1,
            epsilon: eps,
        })
        .unwrap();
        let (log_d, log_dp) = quad_pair(&ce.config, &ce.instance);
        let expect = 0.5 * (1.0 - (-eps / 2.0).exp());
        assert!((log_d.exp() - expect).abs() < 1e-9, "eps={eps}");
        assert_eq!(log_dp, f64::NEG_INFINITY);
        assert_eq!(ce.expected_log_ratio, ExpectedRatio::Unbounded);
    }
}

#[test]
fn thm2_monte_carlo_agrees_with_quadrature() {
    let ce = make_counterexample(&CounterexampleSpec {
        id: CounterexampleId::Alg5Thm2,
        size_m: 1,
        epsilon: 1.0,
    })
    .unwrap();
    let n = 1_000_000u64;
    let est =
        prob_output_montecarlo(&ce.config, &ce.instance, Side::D, n, &mut rng::root(11)).unwrap();
    let p = 0.1967346701436833;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((est.p_hat - p).abs() < 3.0 * sigma, "p_hat={}", est.p_hat);

    let est = prob_output_montecarlo(&ce.config, &ce.instance, Side::DPrime, n, &mut rng::root(12))
        .unwrap();
    assert_eq!(est.successes, 0);
    assert_eq!(est.p_hat, 0.0);
    assert_eq!(est.ci_halfwidth, 3.0 / n as f64);
}

#[test]
fn alg3_counterexample_matches_its_closed_form() {
    for &eps in &[0.5, 1.0] {
        let points =
            ratio_growth_curve(CounterexampleId::Alg3Appendix, eps, &[1, 2, 4, 8, 16]).unwrap();
        for p in points {
            let expect = (p.m as f64 - 1.0) * eps / 2.0;
            assert_eq!(p.expected, ExpectedRatio::Exact(expect));
            assert!(
                (p.measured_log_ratio - expect).abs() < 1e-6,
                "eps={eps} m={} measured={} expected={expect}",
                p.m,
                p.measured_log_ratio
            );
        }
    }
}

#[test]
fn alg3_numeric_truncation_validated_by_monte_carlo() {
    // the quadrature value is a density in the numeric coordinate; the
    // matching Monte Carlo event bins that coordinate within +-h
    let ce = make_counterexample(&CounterexampleSpec {
        id: CounterexampleId::Alg3Appendix,
        size_m: 4,
        epsilon: 1.0,
    })
    .unwrap();
    let n = 1_000_000u64;
    for (side, seed) in [(Side::D, 21u64), (Side::DPrime, 22)] {
        let ln_density = prob_output_quadrature(&ce.config, &ce.instance, side).unwrap();
        let est =
            prob_output_montecarlo(&ce.config, &ce.instance, side, n, &mut rng::root(seed))
                .unwrap();
        let h = est.numeric_tol.unwrap();
        let p_true = ln_density.exp() * 2.0 * h;
        let sigma = (p_true * (1.0 - p_true) / n as f64).sqrt();
        assert!(
            (est.p_hat - p_true).abs() <= 4.0 * sigma,
            "side {side:?}: p_hat={} p_true={p_true}",
            est.p_hat
        );
    }
}

#[test]
fn alg6_counterexample_exceeds_its_lower_bound() {
    let points = ratio_growth_curve(CounterexampleId::Alg6Appendix, 1.0, &[2, 4]).unwrap();
    // regression anchors from an independent quadrature implementation
    let anchors = [1.704137, 3.545850];
    for (p, anchor) in points.iter().zip(anchors) {
        let bound = p.m as f64 * 1.0 / 2.0;
        assert_eq!(p.expected, ExpectedRatio::AtLeast(bound));
        assert!(p.measured_log_ratio >= bound - 1e-6);
        assert!(
            (p.measured_log_ratio - anchor).abs() < 1e-4,
            "m={} measured={} anchor={anchor}",
            p.m,
            p.measured_log_ratio
        );
        assert_eq!(p.report.verdict, Verdict::ViolatesBound);
    }
}

#[test]
fn alg1_family_stays_within_budget_and_negative_slice() {
    let eps = 1.0;
    // regression anchors for the worst family member, c = 1 and c = 2
    let anchors = [0.753808, 0.448194];
    for (c, anchor) in [(1usize, anchors[0]), (2, anchors[1])] {
        let cfg = SvtConfig::new(Variant::Alg1, eps, c, Thresholds::Scalar(0.0)).unwrap();
        let family = adversarial_family(4, c, 1.0, true);
        let report = verify_dp_bound(&cfg, &family, eps).unwrap();
        assert_eq!(report.verdict, Verdict::WithinBound);
        assert!(report.log_ratio <= eps + 1e-6);
        assert!((report.log_ratio - anchor).abs() < 1e-4, "c={c}: {}", report.log_ratio);

        // all-below patterns stay within the threshold-noise budget alone
        let slice: Vec<NeighborInstance> = family
            .into_iter()
            .filter(|inst| inst.pattern.iter().all(|e| !e.is_positive()))
            .collect();
        let report = verify_dp_bound(&cfg, &slice, eps / 2.0).unwrap();
        assert_eq!(report.verdict, Verdict::WithinBound);
        assert!(report.log_ratio <= eps / 2.0 + 1e-6);
    }
}

#[test]
fn alg4_bracket_between_eps_and_its_true_bound() {
    let eps = 1.0;
    // regression anchors for the worst family member, c = 1 and c = 2
    let anchors = [1.688038, 2.487494];
    for (c, anchor) in [(1usize, anchors[0]), (2, anchors[1])] {
        let cfg = SvtConfig::new(Variant::Alg4, eps, c, Thresholds::Scalar(0.0)).unwrap();
        let family = adversarial_family(4, c, 1.0, true);
        let report = verify_dp_bound(&cfg, &family, eps).unwrap();
        // not eps-DP: some instance exceeds the claim
        assert_eq!(report.verdict, Verdict::ViolatesBound);
        assert!(report.log_ratio > eps);
        // but the (1+6c)/4 eps bound holds over the family
        let bound = (1.0 + 6.0 * c as f64) / 4.0 * eps;
        assert!(report.log_ratio <= bound + 1e-6);
        assert!((report.log_ratio - anchor).abs() < 1e-4, "c={c}: {}", report.log_ratio);
    }
}

#[test]
fn alg1_all_below_ratio_saturates_below_half_eps() {
    // q(D) = 0^t vs q(D') = 1^t, pattern bot^t: the log-ratio must stay
    // within eps/2 for every t and its per-query share must shrink — the
    // loss does not grow linearly in t
    let eps = 1.0;
    let cfg = SvtConfig::new(Variant::Alg1, eps, 1, Thresholds::Scalar(0.0)).unwrap();
    let mut per_query_prev = f64::INFINITY;
    let mut ratios = Vec::new();
    for &t in &[1usize, 2, 4, 8, 16, 32, 64] {
        let inst = NeighborInstance::new(
            vec![0.0; t],
            vec![1.0; t],
            1.0,
            vec![0.0; t],
            vec![PatternEntry::Below; t],
        )
        .unwrap();
        let (log_d, log_dp) = quad_pair(&cfg, &inst);
        let ratio = log_d - log_dp;
        assert!(ratio <= eps / 2.0 + 1e-6, "t={t} ratio={ratio}");
        let per_query = ratio / t as f64;
        assert!(per_query <= per_query_prev + 1e-9, "t={t}");
        per_query_prev = per_query;
        ratios.push(ratio);
    }
    // regression anchor for t = 1 from an independent quadrature run
    assert!((ratios[0] - 0.178859).abs() < 1e-5, "{}", ratios[0]);
}

#[test]
fn quadrature_and_monte_carlo_agree_on_random_events() {
    use rand::Rng;
    let mut gen = rng::root(0xABCD);
    let variants = [
        Variant::Alg1,
        Variant::Alg3,
        Variant::Alg4,
        Variant::Alg5,
        Variant::Alg6,
        Variant::Alg7,
    ];
    let mut checked = 0;
    while checked < 12 {
        let variant = variants[gen.gen_range(0..variants.len())];
        let len = gen.gen_range(1..=3usize);
        let c = gen.gen_range(1..=2usize);
        let cfg = match variant {
            Variant::Alg7 => SvtConfig::with_split(
                variant,
                svtlab::svt::BudgetSplit::halves(1.0).unwrap(),
                c,
                Thresholds::Scalar(0.0),
            )
            .unwrap(),
            _ => SvtConfig::new(variant, 1.0, c, Thresholds::Scalar(0.0)).unwrap(),
        };
        let scores_d: Vec<f64> = (0..len).map(|_| gen.gen_range(-1.0..1.0)).collect();
        let scores_dp: Vec<f64> = scores_d
            .iter()
            .map(|s| s + gen.gen_range(-1.0..1.0))
            .collect();
        let pattern: Vec<PatternEntry> = (0..len)
            .map(|_| {
                if variant != Variant::Alg3 && gen.gen_bool(0.5) {
                    PatternEntry::Above
                } else {
                    PatternEntry::Below
                }
            })
            .collect();
        let inst = NeighborInstance::new(scores_d, scores_dp, 1.0, vec![0.0; len], pattern);
        let inst = match inst {
            Ok(i) => i,
            Err(_) => continue,
        };
        if svtlab::audit::validate_pattern(&cfg, &inst).is_err() {
            continue;
        }
        let log_p = prob_output_quadrature(&cfg, &inst, Side::D).unwrap();
        let p = log_p.exp();
        if p < 1e-4 {
            continue;
        }
        let n = 200_000u64;
        let est = prob_output_montecarlo(&cfg, &inst, Side::D, n, &mut gen).unwrap();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (est.p_hat - p).abs() <= 4.0 * sigma,
            "{variant:?} len={len} c={c}: mc={} quad={p}",
            est.p_hat
        );
        checked += 1;
    }
}

#[test]
fn alg7_numeric_outputs_audit_by_density_substitution() {
    // three-budget variant with eps3 > 0: positives carry fresh output
    // noise, so the numeric factor is a flat density with no truncation
    let split = svtlab::svt::BudgetSplit::new(0.4, 0.4, 0.2).unwrap();
    let cfg = SvtConfig::with_split(Variant::Alg7, split, 1, Thresholds::Scalar(0.0)).unwrap();
    let inst = NeighborInstance::new(
        vec![-0.3, 0.6],
        vec![0.2, 0.1],
        1.0,
        vec![0.0, 0.0],
        vec![PatternEntry::Below, PatternEntry::Numeric(0.5)],
    )
    .unwrap();
    let n = 1_000_000u64;
    for (side, seed) in [(Side::D, 31u64), (Side::DPrime, 32)] {
        let ln_density = prob_output_quadrature(&cfg, &inst, side).unwrap();
        let est = prob_output_montecarlo(&cfg, &inst, side, n, &mut rng::root(seed)).unwrap();
        let h = est.numeric_tol.unwrap();
        let p_true = ln_density.exp() * 2.0 * h;
        let sigma = (p_true * (1.0 - p_true) / n as f64).sqrt();
        assert!(
            (est.p_hat - p_true).abs() <= 4.0 * sigma,
            "side {side:?}: mc={} true={p_true}",
            est.p_hat
        );
    }
}

#[test]
fn alg5_complete_patterns_partition_the_space() {
    // with zero query noise the 2^l complete outputs tile the rho line
    let scores = vec![0.7, -0.4, 0.1, 1.3];
    let cfg = SvtConfig::new(Variant::Alg5, 1.0, 1, Thresholds::Scalar(0.0)).unwrap();
    let mut total = 0.0;
    for bits in 0u32..16 {
        let pattern: Vec<PatternEntry> = (0..4)
            .map(|i| {
                if bits >> i & 1 == 1 {
                    PatternEntry::Above
                } else {
                    PatternEntry::Below
                }
            })
            .collect();
        let inst =
            NeighborInstance::new(scores.clone(), scores.clone(), 1.0, vec![0.0; 4], pattern)
                .unwrap();
        total += prob_output_quadrature(&cfg, &inst, Side::D).unwrap().exp();
    }
    assert!((total - 1.0).abs() < 1e-9, "total={total}");
}

#[test]
fn growth_points_report_against_the_total_budget() {
    let points = ratio_growth_curve(CounterexampleId::Alg3Appendix, 1.0, &[5]).unwrap();
    assert_eq!(points.len(), 1);
    assert!((points[0].measured_log_ratio - 2.0).abs() < 1e-6);
    assert_eq!(points[0].report.verdict, Verdict::ViolatesBound);
}
