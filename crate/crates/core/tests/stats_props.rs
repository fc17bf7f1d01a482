mod common;

use lace_core::study::stats::{midranks, normal_cdf};
use lace_core::study::{effect_size_r, friedman, kendalls_w, p_from_z, wilcoxon_signed_rank, Alternative, StatsError};
use proptest::prelude::*;

fn table() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=12, 2usize..=5).prop_flat_map(|(n, k)| {
        proptest::collection::vec(proptest::collection::vec(1i64..=7, k), n)
            .prop_map(|rows| rows.into_iter().map(|r| r.into_iter().map(|v| v as f64).collect()).collect())
    })
}

fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (5usize..=30).prop_flat_map(|n| {
        (
            proptest::collection::vec(1i64..=7, n),
            proptest::collection::vec(1i64..=7, n),
        )
            .prop_map(|(a, b)| (a.into_iter().map(|v| v as f64).collect(), b.into_iter().map(|v| v as f64).collect()))
    })
}

/// Strictly increasing maps on the Likert range.
fn increasing(which: u8, x: f64) -> f64 {
    match which {
        0 => x.powi(3) + 2.0 * x,
        1 => x.exp(),
        2 => x.ln_1p() * 10.0 - 4.0,
        _ => 3.5 * x + 11.0,
    }
}

fn map(rows: &[Vec<f64>], f: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(|v| f(*v)).collect()).collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * a.abs().max(1.0)
}

fn weak_order(row: &[f64]) -> Vec<f64> {
    midranks(row).0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn friedman_ignores_monotone_maps(rows in table(), which in 0u8..4, flip in any::<bool>()) {
        let base = friedman(&rows).unwrap();
        let mapped = map(&rows, |x| {
            let y = increasing(which, x);
            if flip { -y } else { y }
        });
        let other = friedman(&mapped).unwrap();
        prop_assert!(close(base.chi2, other.chi2), "{} vs {}", base.chi2, other.chi2);
        prop_assert!(close(base.p, other.p));
        prop_assert!(close(kendalls_w(&rows).unwrap(), kendalls_w(&mapped).unwrap()));
    }

    #[test]
    fn friedman_matches_rational_oracle(rows in table()) {
        let ints: Vec<Vec<i64>> = rows.iter().map(|r| r.iter().map(|v| *v as i64).collect()).collect();
        let (chi2, df) = common::friedman_oracle(&ints);
        let got = friedman(&rows).unwrap();
        prop_assert_eq!(got.df, df);
        prop_assert!((got.chi2 - chi2).abs() <= 1e-12 * chi2.max(1.0));
        prop_assert!((0.0..=1.0).contains(&got.p));
    }

    #[test]
    fn wilcoxon_ignores_increasing_affine_maps((a, b) in paired(), exp in -6i32..=6, shift in -50i32..=50) {
        // dyadic scale and integer shift keep every difference exact, so
        // tied magnitudes stay tied
        let scale = 2f64.powi(exp);
        let f = |v: &Vec<f64>| v.iter().map(|x| scale * x + shift as f64).collect::<Vec<_>>();
        match (wilcoxon_signed_rank(&a, &b, Alternative::Less), wilcoxon_signed_rank(&f(&a), &f(&b), Alternative::Less)) {
            (Ok(x), Ok(y)) => {
                prop_assert!(close(x.z, y.z));
                prop_assert_eq!(x.n_effective, y.n_effective);
            }
            (Err(x), Err(y)) => prop_assert_eq!(x, y),
            (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
        }
    }

    #[test]
    fn wilcoxon_is_antisymmetric((a, b) in paired()) {
        let (Ok(ab), Ok(ba)) = (
            wilcoxon_signed_rank(&a, &b, Alternative::Less),
            wilcoxon_signed_rank(&b, &a, Alternative::Less),
        ) else {
            return Ok(());
        };
        prop_assert_eq!(ab.z, -ba.z);
        prop_assert!((ab.p + ba.p - 1.0).abs() < 1e-12);
        let two = wilcoxon_signed_rank(&a, &b, Alternative::TwoSided).unwrap();
        prop_assert!((0.0..=1.0).contains(&two.p));
        let n = a.len();
        prop_assert_eq!(effect_size_r(ab.z, n).unwrap(), effect_size_r(ba.z, n).unwrap());
        let r = effect_size_r(ab.z, ab.n_effective).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn kendalls_w_is_bounded(rows in table()) {
        let w = kendalls_w(&rows).unwrap();
        prop_assert!((0.0..=1.0).contains(&w));
        let all_same = rows.iter().all(|r| weak_order(r) == weak_order(&rows[0]));
        let any_spread = rows.iter().any(|r| r.iter().any(|v| *v != r[0]));
        prop_assert_eq!(w >= 1.0 - 1e-12, all_same && any_spread, "W = {}", w);
    }

    #[test]
    fn identical_strict_rankings_give_full_agreement(perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(), n in 2usize..10, offsets in proptest::collection::vec(0.0f64..5.0, 10)) {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| perm.iter().map(|&p| p as f64 * 2.0 + offsets[i]).collect()).collect();
        prop_assert!((kendalls_w(&rows).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn identical_columns_give_no_effect() {
    let rows: Vec<Vec<f64>> = (1..=9).map(|v| vec![v as f64; 3]).collect();
    let f = friedman(&rows).unwrap();
    assert_eq!((f.chi2, f.p), (0.0, 1.0));
    assert_eq!(kendalls_w(&rows).unwrap(), 0.0);
}

#[test]
fn normal_cdf_matches_quadrature() {
    let mut worst = 0.0f64;
    for i in 0..=200 {
        let z = -5.0 + i as f64 * 0.05;
        worst = worst.max((p_from_z(z) - common::normal_cdf_quadrature(z)).abs());
        assert!((normal_cdf(z) + normal_cdf(-z) - 1.0).abs() < 1e-15);
    }
    assert!(worst < 1e-6, "worst deviation {worst:e}");
}

#[test]
fn too_few_pairs_advise_exact() {
    let a = [1.0, 2.0, 3.0, 4.0];
    let b = [2.0, 3.0, 4.0, 5.0];
    assert_eq!(wilcoxon_signed_rank(&a, &b, Alternative::Less).unwrap_err(), StatsError::AdviseExact(4));
    assert_eq!(wilcoxon_signed_rank(&a, &a, Alternative::Less).unwrap_err(), StatsError::NoVariation);
}

/// Reported (z, p, r) for the six pairwise comparisons over 21 participants.
const REPORTED: [(f64, &str, f64); 6] = [
    (-2.94, "0.002", 0.64),
    (-3.01, "0.001", 0.66),
    (-2.54, "0.005", 0.56),
    (-3.33, "<0.001", 0.73),
    (-3.24, "0.001", 0.71),
    (-2.37, "0.009", 0.52),
];

#[test]
fn reported_pairs_round_consistently() {
    let mut mismatches = Vec::new();
    for (z, p_text, r_text) in REPORTED {
        let p = p_from_z(z);
        let p_ok = match p_text.strip_prefix('<') {
            Some(bound) => p < bound.parse::<f64>().unwrap(),
            None => format!("{p:.3}") == p_text,
        };
        if !p_ok {
            mismatches.push(format!("z={z}: p={p:.5} vs {p_text}"));
        }
        let r = effect_size_r(z, 21).unwrap();
        if format!("{r:.2}") != format!("{r_text:.2}") {
            mismatches.push(format!("z={z}: r={r:.4} vs {r_text}"));
        }
    }
    assert!(mismatches.is_empty(), "{}", mismatches.join("; "));
}
