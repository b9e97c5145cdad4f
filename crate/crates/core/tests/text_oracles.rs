use kbqa_core::text::edit_distance;
use kbqa_core::{normalize, similarity};
use proptest::prelude::*;

/// Full-matrix Wagner-Fischer.
fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

fn oracle_similarity(mention: &str, name: &str) -> f64 {
    let (a, b) = (normalize(mention), normalize(name));
    if a == b {
        return 1.0;
    }
    let (la, lb) = (a.chars().count() as f64, b.chars().count() as f64);
    if a.contains(&b) || b.contains(&a) {
        return la.min(lb) / la.max(lb);
    }
    (1.0 - levenshtein(&a, &b) as f64 / la.max(lb)).max(0.0)
}

#[test]
fn hand_computed_values() {
    assert_eq!(levenshtein("kitten", "sitting"), 3);
    assert_eq!(edit_distance("kitten", "sitting"), 3);
    assert!((similarity("Keanu", "Keanu Reeves") - 5.0 / 12.0).abs() < 1e-12);
    assert_eq!(similarity("film", "film"), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn edit_distance_matches_textbook_dp(a in "[a-dé ]{0,12}", b in "[a-dé ]{0,12}") {
        prop_assert_eq!(edit_distance(&a, &b), levenshtein(&a, &b));
    }

    #[test]
    fn similarity_matches_oracle(a in "[A-Ca-c_ .]{0,10}", b in "[A-Ca-c_ .]{0,10}") {
        let s = similarity(&a, &b);
        prop_assert!((s - oracle_similarity(&a, &b)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, similarity(&b, &a));
        prop_assert_eq!(s == 1.0, normalize(&a) == normalize(&b));
    }

    #[test]
    fn normalize_is_idempotent(x in "\\PC{0,24}") {
        let once = normalize(&x);
        prop_assert_eq!(normalize(&once), once);
    }
}
