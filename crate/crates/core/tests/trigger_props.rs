use etlalm::trigger::{should_broadcast, Threshold, ThresholdRule, TriggerSchedule};
use proptest::prelude::*;

fn bound(rule: &ThresholdRule, k: usize) -> f64 {
    match rule.threshold(k).unwrap() {
        Threshold::Bound(e) => e,
        Threshold::Periodic { .. } => panic!("periodic rule has no bound"),
    }
}

proptest! {
    #[test]
    fn polynomial_thresholds_decrease(e0 in 1e-3f64..100.0, p in 1.01f64..4.0, k in 1usize..100_000) {
        let r = ThresholdRule::Polynomial { e0, p };
        prop_assert!(bound(&r, k + 1) <= bound(&r, k));
    }

    #[test]
    fn exponential_thresholds_decrease(e0 in 1e-3f64..100.0, rho in 0.01f64..0.999, k in 1usize..100_000) {
        let r = ThresholdRule::Exponential { e0, rho };
        prop_assert!(bound(&r, k + 1) <= bound(&r, k));
    }

    #[test]
    fn zero_schedule_fires_on_any_motion(
        x in prop::collection::vec(-1e3f64..1e3, 1..8),
        j in 0usize..8,
        delta in prop::sample::select(vec![1e-300, 1e-12, 1.0, -3.5]),
    ) {
        let j = j % x.len();
        prop_assert!(!should_broadcast(&x, &x, 0.0));
        let mut y = x.clone();
        y[j] += delta;
        prop_assume!(y[j] != x[j]);
        prop_assert!(should_broadcast(&y, &x, 0.0));
    }
}

#[test]
fn partial_sums_stay_below_the_closed_form_bounds() {
    let k_max = 100_000;
    for (e0, p) in [(20.0, 1.2), (1.0, 1.5), (3.0, 2.0), (0.5, 1.05)] {
        let r = ThresholdRule::Polynomial { e0, p };
        let sum: f64 = (1..=k_max).map(|k| bound(&r, k)).sum();
        let limit = e0 * (1.0 + 1.0 / (p - 1.0));
        assert!(sum <= limit, "poly {e0}/{p}: {sum} > {limit}");
    }
    for (e0, rho) in [(1.0, 0.9), (20.0, 0.9f64.powf(0.1)), (0.3, 0.5)] {
        let r = ThresholdRule::Exponential { e0, rho };
        let sum: f64 = (1..=k_max).map(|k| bound(&r, k)).sum();
        let limit = e0 * rho / (1.0 - rho);
        assert!(sum <= limit * (1.0 + 1e-12), "exp {e0}/{rho}: {sum} > {limit}");
    }
}

#[test]
fn summability_classification() {
    assert!(ThresholdRule::Polynomial { e0: 1.0, p: 1.2 }.is_summable());
    assert!(ThresholdRule::Exponential { e0: 1.0, rho: 0.9 }.is_summable());
    assert!(ThresholdRule::Zero.is_summable());
    assert!(!ThresholdRule::EveryN(3).is_summable());
    assert!(ThresholdRule::Polynomial { e0: 1.0, p: 1.0 }.validate().is_err());
    assert!(ThresholdRule::Exponential { e0: 1.0, rho: 1.0 }.validate().is_err());
    assert!(ThresholdRule::EveryN(0).validate().is_err());
}

#[test]
fn schedule_strings_round_trip() {
    for s in ["poly:20:1.2", "exp:1:0.9", "zero", "everyN:4"] {
        let parsed: TriggerSchedule = s.parse().unwrap();
        assert_eq!(parsed.to_string(), s);
        let again: TriggerSchedule = parsed.to_string().parse().unwrap();
        assert_eq!(again, parsed);
    }
    let literal: TriggerSchedule = "exp:1:0.9^0.1".parse().unwrap();
    assert_eq!(
        *literal.rule(0),
        ThresholdRule::Exponential { e0: 1.0, rho: 0.9f64.powf(0.1) }
    );
}

#[test]
fn max_threshold_over_overrides() {
    let s = TriggerSchedule::uniform(ThresholdRule::Polynomial { e0: 1.0, p: 2.0 })
        .with_override(2, ThresholdRule::Exponential { e0: 5.0, rho: 0.5 });
    assert_eq!(s.max_threshold(4, 1).unwrap(), Some(2.5));
    assert_eq!(s.max_threshold(4, 3).unwrap(), Some(0.625));
    assert_eq!(s.max_threshold(4, 10).unwrap(), Some(0.01));
    let p = TriggerSchedule::uniform(ThresholdRule::EveryN(2));
    assert_eq!(p.max_threshold(4, 3).unwrap(), None);
}
