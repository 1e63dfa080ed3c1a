// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use sumshrink_core::simulation::run_replications;
use sumshrink_core::{
    censored_messages, global_stat, hard_transform, soft_transform, top_r_sum, xs_stat,
    ChangeScenario, DetectorKind, LpConfig, Monitor, SchemeSpec, SeedSpec, Shrinkage, StreamModel,
    XsWindowState,
};

fn stat(sh: Shrinkage, w: &[f64]) -> f64 {
    global_stat(&SchemeSpec::cusum(sh, 1.0), w).unwrap()
}

fn local_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..12.0], 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn fusion_identities_are_exact(w in local_vec(), b in 0.0f64..6.0, r_frac in 0.0f64..1.0) {
        let k = w.len();
        let r = 1 + ((k - 1) as f64 * r_frac) as usize;
        let sum = stat(Shrinkage::Sum, &w);
        let max = stat(Shrinkage::Max, &w);
        prop_assert_eq!(stat(Shrinkage::hard(k, 0.0), &w), sum);
        prop_assert_eq!(stat(Shrinkage::Order { r: 1 }, &w), max);
        prop_assert_eq!(stat(Shrinkage::Order { r: k }, &w), sum);
        prop_assert_eq!(stat(Shrinkage::comb(k, r, 0.0), &w), stat(Shrinkage::Order { r }, &w));
        prop_assert_eq!(stat(Shrinkage::comb(k, k, b), &w), stat(Shrinkage::hard(k, b), &w));
        prop_assert_eq!(stat(Shrinkage::soft(k, 0.0), &w), sum);
    }

    #[test]
    fn top_r_matches_sorting_oracle(w in prop::collection::vec(-5.0f64..20.0, 1..80), r_frac in 0.0f64..1.0) {
        let r = 1 + ((w.len() - 1) as f64 * r_frac) as usize;
        let mut sorted = w.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let oracle: f64 = sorted[..r].iter().sum();
        prop_assert!((top_r_sum(&w, r) - oracle).abs() <= 1e-10 * oracle.abs().max(1.0));
    }

    #[test]
    fn global_stat_monotone(w in local_vec(), b1 in 0.0f64..6.0, db in 0.0f64..3.0, r_frac in 0.0f64..1.0) {
        let k = w.len();
        let b2 = b1 + db;
        prop_assert!(stat(Shrinkage::hard(k, b2), &w) <= stat(Shrinkage::hard(k, b1), &w));
        prop_assert!(stat(Shrinkage::soft(k, b2), &w) <= stat(Shrinkage::soft(k, b1), &w));
        let r = 1 + ((k - 1) as f64 * r_frac) as usize;
        if r < k {
            let (lo, hi) = (stat(Shrinkage::Order { r }, &w), stat(Shrinkage::Order { r: r + 1 }, &w));
            prop_assert!(lo <= hi);
            prop_assert!(stat(Shrinkage::comb(k, r, b1), &w) <= stat(Shrinkage::comb(k, r + 1, b1), &w));
        }
        prop_assert!(stat(Shrinkage::comb(k, r, b2), &w) <= stat(Shrinkage::comb(k, r, b1), &w));
        prop_assert!(stat(Shrinkage::Max, &w) <= stat(Shrinkage::Sum, &w));
    }

    #[test]
    fn transforms_bounded(x in 0.0f64..30.0, b in 0.0f64..10.0) {
        prop_assert!(soft_transform(x, b) <= hard_transform(x, b));
        prop_assert!(hard_transform(x, b) <= x);
        prop_assert!(soft_transform(x, b) >= 0.0);
    }

    #[test]
    fn messages_are_exactly_the_crossings(w in local_vec(), b in 0.0f64..6.0) {
        let bv = vec![b; w.len()];
        let msgs = censored_messages(&w, &bv).unwrap();
        let expect: Vec<usize> = (0..w.len()).filter(|&k| w[k] >= b).collect();
        prop_assert_eq!(msgs.iter().map(|m| m.stream).collect::<Vec<_>>(), expect);
        for m in &msgs {
            prop_assert_eq!(m.value, w[m.stream]);
        }
    }

    #[test]
    fn xs_full_window_matches_double_loop(
        k in 1usize..6,
        n in 1usize..40,
        p0 in prop_oneof![Just(1.0), 0.01f64..1.0],
        seed in any::<u64>(),
    ) {
        let mut rng_state = seed;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_state >> 11) as f64 / (1u64 << 53) as f64) * 5.0 - 2.0
        };
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| next()).collect()).collect();
        let mut state = XsWindowState::new(k, n).unwrap();
        for row in &xs {
            state.push(row).unwrap();
        }
        let mut oracle = f64::NEG_INFINITY;
        for i in 0..n {
            let mut total = 0.0;
            for kk in 0..k {
                let mut s = 0.0;
                for row in xs.iter().take(n).skip(i) {
                    s += row[kk];
                }
                let u = (s / ((n - i) as f64).sqrt()).max(0.0);
                total += (1.0 - p0 + p0 * (0.5 * u * u).exp()).ln();
            }
            oracle = oracle.max(total);
        }
        let got = xs_stat(&state, p0, n as u64).unwrap();
        prop_assert!((got - oracle).abs() <= 1e-10 * oracle.abs().max(1.0), "{got} vs {oracle}");
    }
}

fn stops(spec: &SchemeSpec, k: usize, affected: usize, reps: u64) -> Vec<u64> {
    let models = StreamModel::homogeneous(k, 1.0).unwrap();
    let scen = if affected == 0 {
        ChangeScenario::pre_change(k)
    } else {
        ChangeScenario::first_affected(k, affected, 1).unwrap()
    };
    run_replications(spec, &models, &scen, &SeedSpec::new(11), reps, 20_000)
        .unwrap()
        .into_iter()
        .map(|r| r.stop)
        .collect()
}

#[test]
fn stopping_times_identical_for_equivalent_schemes() {
    let k = 20;
    for affected in [0usize, 2] {
        let sum = stops(&SchemeSpec::cusum(Shrinkage::Sum, 25.0), k, affected, 60);
        assert_eq!(
            stops(
                &SchemeSpec::cusum(Shrinkage::hard(k, 0.0), 25.0),
                k,
                affected,
                60
            ),
            sum
        );
        assert_eq!(
            stops(
                &SchemeSpec::cusum(Shrinkage::Order { r: k }, 25.0),
                k,
                affected,
                60
            ),
            sum
        );
        let max = stops(&SchemeSpec::cusum(Shrinkage::Max, 6.0), k, affected, 60);
        assert_eq!(
            stops(
                &SchemeSpec::cusum(Shrinkage::Order { r: 1 }, 6.0),
                k,
                affected,
                60
            ),
            max
        );
        let ord = stops(
            &SchemeSpec::cusum(Shrinkage::Order { r: 4 }, 12.0),
            k,
            affected,
            60,
        );
        assert_eq!(
            stops(
                &SchemeSpec::cusum(Shrinkage::comb(k, 4, 0.0), 12.0),
                k,
                affected,
                60
            ),
            ord
        );
        let hard = stops(
            &SchemeSpec::cusum(Shrinkage::hard(k, 1.5), 14.0),
            k,
            affected,
            60,
        );
        assert_eq!(
            stops(
                &SchemeSpec::cusum(Shrinkage::comb(k, k, 1.5), 14.0),
                k,
                affected,
                60
            ),
            hard
        );
    }
}

#[test]
fn stopping_time_monotone_per_path() {
    let k = 10;
    let check = |lo: &[u64], hi: &[u64]| {
        for (a, b) in lo.iter().zip(hi) {
            assert!(a <= b, "{a} > {b}");
        }
    };
    // increasing a
    let t1 = stops(&SchemeSpec::cusum(Shrinkage::Sum, 10.0), k, 1, 80);
    let t2 = stops(&SchemeSpec::cusum(Shrinkage::Sum, 12.5), k, 1, 80);
    check(&t1, &t2);
    // increasing b
    for (b1, b2) in [(0.0, 0.5), (0.5, 2.0)] {
        let s1 = stops(&SchemeSpec::cusum(Shrinkage::soft(k, b1), 6.0), k, 1, 80);
        let s2 = stops(&SchemeSpec::cusum(Shrinkage::soft(k, b2), 6.0), k, 1, 80);
        check(&s1, &s2);
        let h1 = stops(&SchemeSpec::cusum(Shrinkage::hard(k, b1), 9.0), k, 1, 80);
        let h2 = stops(&SchemeSpec::cusum(Shrinkage::hard(k, b2), 9.0), k, 1, 80);
        check(&h1, &h2);
    }
    // increasing r
    let o3 = stops(&SchemeSpec::cusum(Shrinkage::Order { r: 3 }, 9.0), k, 2, 80);
    let o5 = stops(&SchemeSpec::cusum(Shrinkage::Order { r: 5 }, 9.0), k, 2, 80);
    check(&o5, &o3);
}

#[test]
fn single_stream_schemes_coincide() {
    let w = [3.25];
    let base = stat(Shrinkage::Max, &w);
    for sh in [
        Shrinkage::Sum,
        Shrinkage::Order { r: 1 },
        Shrinkage::hard(1, 0.0),
        Shrinkage::soft(1, 0.0),
        Shrinkage::comb(1, 1, 0.0),
    ] {
        assert_eq!(stat(sh, &w), base);
    }
}

#[test]
fn xs_rejected_by_global_stat() {
    let spec = SchemeSpec::cusum(Shrinkage::xs(0.1), 1.0);
    assert!(global_stat(&spec, &[1.0, 2.0]).is_err());
}

#[test]
fn xs_window_limits_lookback() {
    let mut short = XsWindowState::new(1, 3).unwrap();
    let mut long = XsWindowState::new(1, 50).unwrap();
    let xs = [4.0, 0.1, 0.1, 0.1, 0.1];
    for x in xs {
        short.push(&[x]).unwrap();
        long.push(&[x]).unwrap();
    }
    assert_eq!(short.len(), 3);
    // the early burst is out of reach of the short window
    assert!(short.statistic(1.0) < long.statistic(1.0));
    assert!((short.statistic(1.0) - 0.015).abs() < 1e-12);
    assert!((long.statistic(1.0) - 1.936).abs() < 1e-12);
}

#[test]
fn monitor_rejects_bad_input() {
    let models = StreamModel::homogeneous(3, 1.0).unwrap();
    let mut m = Monitor::new(&SchemeSpec::cusum(Shrinkage::Sum, 5.0), &models).unwrap();
    assert!(m.step(&[0.0, 1.0]).is_err());
    assert!(m.step(&[0.0, f64::NAN, 1.0]).is_err());
    assert!(Monitor::new(&SchemeSpec::cusum(Shrinkage::hard(2, 1.0), 5.0), &models).is_err());
    assert!(Monitor::new(&SchemeSpec::cusum(Shrinkage::Sum, 0.0), &models).is_err());
    let lp = DetectorKind::LpTwoSided {
        lp: LpConfig {
            rho: -1.0,
            ..LpConfig::default()
        },
    };
    assert!(Monitor::new(&SchemeSpec::new(lp, Shrinkage::Sum, 5.0), &models).is_err());
}

#[test]
fn scheme_round_trips_through_json() {
    let spec = SchemeSpec::new(
        DetectorKind::LpTwoSided {
            lp: LpConfig::default(),
        },
        Shrinkage::comb(3, 2, 0.5),
        44.11,
    );
    let text = serde_json::to_string(&spec).unwrap();
    let back: SchemeSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, spec);
}
