mod common;

use common::{monte_carlo_quantile, pooled_t_p};
use demand_impact::stats::{levene_mean, one_way_anova, ptukey, qtukey, tukey_hsd, GroupedSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn sample(groups: &[&[f64]]) -> GroupedSample {
    GroupedSample::new(
        groups
            .iter()
            .enumerate()
            .map(|(i, g)| (format!("g{}", i + 1), g.to_vec()))
            .collect(),
    )
    .unwrap()
}

#[test]
fn two_groups_reduce_to_pooled_t_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..25 {
        let na = rng.random_range(3..30);
        let nb = rng.random_range(3..30);
        let shift = rng.random_range(-1.5..1.5);
        let a: Vec<f64> = (0..na).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..nb).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect();
        let pairs = tukey_hsd(&sample(&[&a, &b]), 0.95).unwrap();
        let expected = pooled_t_p(&a, &b);
        assert!(
            (pairs[0].p_adj - expected).abs() < 1e-6,
            "{} vs {expected}",
            pairs[0].p_adj
        );
    }
}

#[test]
fn quantile_matches_simulation() {
    let q = qtukey(0.95, 3, 10.0).unwrap();
    let mc = monte_carlo_quantile(3, 10.0, 0.95, 200_000, 1);
    assert!((q - mc).abs() < 0.03, "{q} vs {mc}");
}

#[test]
fn known_table_values() {
    // Classic studentized range table entries.
    for (k, df, expected) in [(3, 10.0, 3.877), (5, 60.0, 3.977), (2, 20.0, 2.950), (10, 30.0, 4.824)] {
        let q = qtukey(0.95, k, df).unwrap();
        assert!((q - expected).abs() < 2e-3, "q({k},{df}) = {q}");
    }
    let c = ptukey(3.877, 3, 10.0).unwrap();
    assert!((c - 0.95).abs() < 1e-3);
}

#[test]
fn hand_computed_levene() {
    // Deviations {1,0,1} and {10,0,10}: means 2/3 and 20/3, grand 11/3.
    let t = levene_mean(&sample(&[&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]])).unwrap();
    let ssb = 3.0 * (2.0f64 / 3.0 - 11.0 / 3.0).powi(2) + 3.0 * (20.0f64 / 3.0 - 11.0 / 3.0).powi(2);
    let ssw = 2.0 * (1.0f64 - 2.0 / 3.0).powi(2)
        + (2.0f64 / 3.0).powi(2)
        + 2.0 * (10.0f64 - 20.0 / 3.0).powi(2)
        + (20.0f64 / 3.0).powi(2);
    let f = ssb / (ssw / 4.0);
    assert!((t.f - f).abs() < 1e-12);
    assert_eq!((t.df_between, t.df_within), (1.0, 4.0));
    assert!(t.p_value > 0.0 && t.p_value < 1.0);
}

#[test]
fn equal_means_give_null_pair() {
    let s = sample(&[&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]]);
    let p = &tukey_hsd(&s, 0.95).unwrap()[0];
    assert_eq!(p.diff, 0.0);
    assert!((p.lwr + p.upr).abs() < 1e-12);
    assert!((p.p_adj - 1.0).abs() < 1e-9);
}

#[test]
fn pair_orientation_is_later_minus_earlier() {
    let s = sample(&[&[1.0, 2.0, 3.0], &[11.0, 12.0, 13.0], &[5.0, 6.0, 7.5]]);
    let pairs = tukey_hsd(&s, 0.95).unwrap();
    let names: Vec<(&str, &str)> = pairs.iter().map(|p| (p.group_a.as_str(), p.group_b.as_str())).collect();
    assert_eq!(names, vec![("g1", "g2"), ("g1", "g3"), ("g2", "g3")]);
    assert!((pairs[0].diff - 10.0).abs() < 1e-12);
    for p in &pairs {
        assert!(p.lwr <= p.diff && p.diff <= p.upr);
    }
}

#[test]
fn permuting_groups_permutes_results() {
    let a = [1.0, 2.5, 3.0, 2.0];
    let b = [4.0, 5.0, 6.5];
    let c = [2.0, 9.0, 4.0, 3.0, 5.0];
    let abc = tukey_hsd(&sample(&[&a, &b, &c]), 0.95).unwrap();
    let cab = tukey_hsd(&sample(&[&c, &a, &b]), 0.95).unwrap();
    // (a,b) in the first is (g2,g3) in the second
    assert!((abc[0].diff - cab[2].diff).abs() < 1e-12);
    assert!((abc[0].p_adj - cab[2].p_adj).abs() < 1e-12);
    // (a,c) is reversed: (c,a) = g1,g2
    assert!((abc[1].diff + cab[0].diff).abs() < 1e-12);
    assert!((abc[1].p_adj - cab[0].p_adj).abs() < 1e-12);
    let f1 = one_way_anova(&sample(&[&a, &b, &c])).unwrap();
    let f2 = one_way_anova(&sample(&[&c, &a, &b])).unwrap();
    assert!((f1.f - f2.f).abs() < 1e-12);
}

#[test]
fn constant_groups_with_different_means_are_degenerate() {
    let s = sample(&[&[1.0, 1.0], &[2.0, 2.0]]);
    assert!(tukey_hsd(&s, 0.95).is_err());
    assert!(levene_mean(&s).is_err());
}
