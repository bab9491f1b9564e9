mod common;

use common::oracle_fuse;
use prefclm::dst::{agent_mass, combine, fuse_crowd, majority_vote, MassAssignment, ScorePair};
use proptest::prelude::*;

fn pairs(scores: &[(f64, f64)]) -> Vec<ScorePair> {
    scores.iter().map(|&(a, b)| ScorePair::new(a, b)).collect()
}

fn crowd() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..=5)
}

fn close(a: &MassAssignment, b: &MassAssignment, tol: f64) -> bool {
    (a.m_s0 - b.m_s0).abs() <= tol && (a.m_s1 - b.m_s1).abs() <= tol && (a.m_both - b.m_both).abs() <= tol
}

#[test]
fn worked_two_agent_example() {
    let r = fuse_crowd(&pairs(&[(0.8, 0.2), (0.4, 0.6)]), 0.3).unwrap();
    let o = oracle_fuse(&[(0.8, 0.2), (0.4, 0.6)], 0.3);
    assert!((r.conflict_total - 0.374528).abs() < 1e-12);
    assert!((o.last_conflict - 0.374528).abs() < 1e-12);
    assert!((r.fused.m_s0 - 0.6706).abs() < 1e-4);
    assert!((r.fused.m_s1 - 0.2833).abs() < 1e-4);
    assert!((r.fused.m_both - 0.0460).abs() < 1e-4);
    assert_eq!(r.label.value(), 0.0);
    assert_eq!(o.label, 0.0);
}

#[test]
fn zero_scores_are_shifted_not_categorical() {
    let r = fuse_crowd(&pairs(&[(1.0, 0.0), (0.0, 1.0)]), 0.0).unwrap();
    let o = oracle_fuse(&[(1.0, 0.0), (0.0, 1.0)], 0.0);
    // The shift keeps these just short of categorical, so both sides agree.
    assert!((r.fused.m_s0 - o.m[0]).abs() < 1e-9);
    assert_eq!(r.label.value(), o.label);
}

#[test]
fn total_conflict_gives_vacuous_masses() {
    let scores = [(1.0, 1e-320), (1e-320, 1.0)];
    let r = fuse_crowd(&pairs(&scores), 0.0).unwrap();
    let o = oracle_fuse(&scores, 0.0);
    assert_eq!(r.fused, MassAssignment::VACUOUS);
    assert_eq!(r.conflict_total, 1.0);
    assert_eq!(r.label.value(), 0.5);
    assert_eq!(o.m, [0.0, 0.0, 1.0]);
    assert_eq!(o.label, 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_brute_force(scores in crowd(), phi in 0.0..=1.0f64) {
        let r = fuse_crowd(&pairs(&scores), phi).unwrap();
        let o = oracle_fuse(&scores, phi);
        prop_assert!((r.fused.m_s0 - o.m[0]).abs() <= 1e-9, "{:?} vs {:?}", r.fused, o.m);
        prop_assert!((r.fused.m_s1 - o.m[1]).abs() <= 1e-9);
        prop_assert!((r.fused.m_both - o.m[2]).abs() <= 1e-9);
        prop_assert!((r.conflict_total - o.last_conflict).abs() <= 1e-9);
        prop_assert_eq!(r.label.value(), o.label);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn masses_sum_to_one(scores in crowd(), phi in 0.0..=1.0f64) {
        let r = fuse_crowd(&pairs(&scores), phi).unwrap();
        prop_assert!((r.fused.total() - 1.0).abs() <= 1e-9);
        for m in [r.fused.m_s0, r.fused.m_s1, r.fused.m_both] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&m));
        }
        for s in &scores {
            let a = agent_mass(ScorePair::new(s.0, s.1), phi).unwrap();
            prop_assert!((a.total() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn swapping_segments_mirrors_the_result(scores in crowd(), phi in 0.0..=1.0f64) {
        let r = fuse_crowd(&pairs(&scores), phi).unwrap();
        let swapped: Vec<(f64, f64)> = scores.iter().map(|&(a, b)| (b, a)).collect();
        let s = fuse_crowd(&pairs(&swapped), phi).unwrap();
        prop_assert!(close(&r.fused.swapped(), &s.fused, 1e-9));
        prop_assert_eq!(r.label.flip(), s.label);
    }

    #[test]
    fn agent_order_does_not_matter(scores in crowd(), phi in 0.0..=1.0f64, rot in 0usize..5) {
        let r = fuse_crowd(&pairs(&scores), phi).unwrap();
        let mut reordered = scores.clone();
        reordered.rotate_left(rot % scores.len());
        reordered.reverse();
        let s = fuse_crowd(&pairs(&reordered), phi).unwrap();
        prop_assert!(close(&r.fused, &s.fused, 1e-9));
        prop_assert_eq!(r.label, s.label);
    }

    #[test]
    fn vacuous_mass_is_the_identity(score in (0.0..=1.0f64, 0.0..=1.0f64), phi in 0.0..=1.0f64) {
        let m = agent_mass(ScorePair::new(score.0, score.1), phi).unwrap();
        let (l, k) = combine(&m, &MassAssignment::VACUOUS).unwrap();
        let (r, k2) = combine(&MassAssignment::VACUOUS, &m).unwrap();
        prop_assert_eq!(k, 0.0);
        prop_assert_eq!(k2, 0.0);
        prop_assert!(close(&l, &m, 1e-12));
        prop_assert!(close(&r, &m, 1e-12));
    }

    #[test]
    fn zero_phi_reduces_to_a_normalized_product(scores in crowd()) {
        let r = fuse_crowd(&pairs(&scores), 0.0).unwrap();
        prop_assert!(r.fused.m_both.abs() <= 1e-12);
        let (p0, p1) = scores.iter().fold((1.0, 1.0), |(p0, p1), &(a, b)| {
            let (r0, r1) = common::oracle_normalize(a, b);
            (p0 * r0, p1 * r1)
        });
        if p0 + p1 > 1e-300 {
            prop_assert!((r.fused.m_s0 - p0 / (p0 + p1)).abs() <= 1e-9);
            prop_assert!((r.fused.m_s1 - p1 / (p0 + p1)).abs() <= 1e-9);
        }
    }

    #[test]
    fn positive_rescaling_of_one_agent_keeps_the_label(
        scores in crowd(), phi in 0.0..=1.0f64, c in 0.01..100.0f64, who in 0usize..5,
    ) {
        // Strictly positive scores, so no shift is involved.
        let scores: Vec<(f64, f64)> = scores.iter().map(|&(a, b)| (a + 0.01, b + 0.01)).collect();
        let mut scaled = scores.clone();
        let i = who % scores.len();
        scaled[i] = (scaled[i].0 * c, scaled[i].1 * c);
        let r = fuse_crowd(&pairs(&scores), phi).unwrap();
        let s = fuse_crowd(&pairs(&scaled), phi).unwrap();
        prop_assert!(close(&r.fused, &s.fused, 1e-9));
    }

    #[test]
    fn majority_is_antisymmetric(scores in crowd()) {
        let a = majority_vote(&pairs(&scores)).unwrap();
        let swapped: Vec<(f64, f64)> = scores.iter().map(|&(a, b)| (b, a)).collect();
        prop_assert_eq!(a.flip(), majority_vote(&pairs(&swapped)).unwrap());
    }
}
