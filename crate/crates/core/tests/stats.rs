use proptest::prelude::*;
use tractscope::ml::metrics::{roc_curve, roc_grid, vertical_average};
use tractscope::ml::stats::{mann_whitney_u, mann_whitney_u_with, PMethod};

/// Brute-force null distribution: every split of ranks 1..=n into groups
/// of size `na` and `n - na`, counting pairs where group A wins.
fn enumerate_u(na: usize, nb: usize) -> Vec<f64> {
    let n = na + nb;
    let mut us = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let mut u = 0usize;
        for i in 0..n {
            if mask & (1 << i) == 0 {
                continue;
            }
            u += (0..i).filter(|&j| mask & (1 << j) == 0).count();
        }
        us.push(u as f64);
    }
    us
}

fn oracle_p(u: f64, null: &[f64]) -> f64 {
    let total = null.len() as f64;
    let lower = null.iter().filter(|&&v| v <= u).count() as f64;
    let upper = null.iter().filter(|&&v| v >= u).count() as f64;
    (2.0 * lower.min(upper) / total).min(1.0)
}

/// Values for group A placed at the ranks selected by `mask`.
fn split(mask: u32, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for i in 0..n {
        if mask & (1 << i) != 0 {
            a.push(i as f64 * 1.5 - 3.0);
        } else {
            b.push(i as f64 * 1.5 - 3.0);
        }
    }
    (a, b)
}

#[test]
fn exact_p_matches_enumeration_up_to_twelve() {
    for n in 2..=12usize {
        for na in 1..n {
            let nb = n - na;
            let null = enumerate_u(na, nb);
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize != na {
                    continue;
                }
                let (a, b) = split(mask, n);
                let want_u = a.iter().map(|x| b.iter().filter(|y| x > y).count()).sum::<usize>() as f64;
                let r = mann_whitney_u(&a, &b).unwrap();
                assert_eq!(r.method, PMethod::Exact);
                assert_eq!(r.u, want_u, "na={na} nb={nb} mask={mask:b}");
                let want_p = oracle_p(want_u, &null);
                assert!((r.p - want_p).abs() < 1e-12, "na={na} nb={nb} u={want_u}: {} vs {want_p}", r.p);
            }
        }
    }
}

#[test]
fn hand_enumerated_cases() {
    let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
    assert_eq!((r.u, r.p), (0.0, 1.0 / 3.0));
    let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert_eq!(r.u, 0.0);
    assert!((r.p - 0.1).abs() < 1e-15);
}

#[test]
fn normal_approximation_with_ties_matches_reference() {
    let a = [1.0, 2.0, 2.0, 3.0, 5.0, 8.0, 8.0, 9.0, 10.0, 12.0];
    let b = [2.0, 3.0, 3.0, 4.0, 6.0, 7.0, 11.0, 13.0, 13.0, 14.0, 15.0, 16.0];
    let r = mann_whitney_u(&a, &b).unwrap();
    assert_eq!(r.method, PMethod::Normal);
    assert_eq!(r.u, 38.0);
    assert!((r.p - 0.155_116_990_909_603_5).abs() < 1e-9, "{}", r.p);
}

#[test]
fn eight_by_eight_reference_values() {
    let a = [0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5];
    let b = [3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
    let exact = mann_whitney_u_with(&a, &b, Some(PMethod::Exact)).unwrap();
    let normal = mann_whitney_u_with(&a, &b, Some(PMethod::Normal)).unwrap();
    assert_eq!(exact.u, 15.0);
    assert!((exact.p - 0.082_983_682_983_682_97).abs() < 1e-12);
    assert!((normal.p - 0.083_122_936_959_903_33).abs() < 1e-9);
}

proptest! {
    #[test]
    fn swapping_groups_mirrors_u(
        a in prop::collection::vec(-10.0f64..10.0, 1..30),
        b in prop::collection::vec(-10.0f64..10.0, 1..30),
    ) {
        let ab = mann_whitney_u(&a, &b).unwrap();
        let ba = mann_whitney_u(&b, &a).unwrap();
        prop_assert!((ab.u + ba.u - (a.len() * b.len()) as f64).abs() < 1e-9);
        prop_assert!((ab.p - ba.p).abs() < 1e-12);
        prop_assert!(ab.p > 0.0 && ab.p <= 1.0);
    }

    #[test]
    fn auc_invariant_under_monotone_transforms(
        data in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..80),
        scale in 0.01f64..100.0, shift in -50.0f64..50.0,
    ) {
        let (scores, labels): (Vec<f64>, Vec<bool>) = data.into_iter().unzip();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let base = roc_curve(&scores, &labels).unwrap().auc;
        for f in [
            Box::new(|s: f64| s * scale + shift) as Box<dyn Fn(f64) -> f64>,
            Box::new(|s: f64| s.exp()),
            Box::new(|s: f64| s.powi(3)),
        ] {
            let t: Vec<f64> = scores.iter().map(|&s| f(s)).collect();
            prop_assert!((roc_curve(&t, &labels).unwrap().auc - base).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_equals_u_over_pairs(data in prop::collection::vec((-5i32..5, any::<bool>()), 2..60)) {
        let scores: Vec<f64> = data.iter().map(|d| f64::from(d.0)).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        let pos: Vec<f64> = scores.iter().zip(&labels).filter(|p| *p.1).map(|p| *p.0).collect();
        let neg: Vec<f64> = scores.iter().zip(&labels).filter(|p| !*p.1).map(|p| *p.0).collect();
        prop_assume!(!pos.is_empty() && !neg.is_empty());
        let u = mann_whitney_u(&pos, &neg).unwrap().u;
        let auc = roc_curve(&scores, &labels).unwrap().auc;
        prop_assert!((auc - u / (pos.len() * neg.len()) as f64).abs() < 1e-12);
    }
}

#[test]
fn roc_reference_values() {
    let s = [0.9, 0.8, 0.3, 0.1];
    assert_eq!(roc_curve(&s, &[true, true, false, false]).unwrap().auc, 1.0);
    assert_eq!(roc_curve(&s, &[true, false, true, false]).unwrap().auc, 0.75);
    let scores = [0.9, 0.8, 0.8, 0.7, 0.6, 0.5, 0.5, 0.3, 0.2, 0.1];
    let labels = [true, false, true, true, false, false, true, false, true, false];
    assert!((roc_curve(&scores, &labels).unwrap().auc - 0.68).abs() < 1e-12);
    assert!(roc_curve(&s, &[true; 4]).is_err());
}

#[test]
fn random_scores_give_chance_auc() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let scores: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
    let labels: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
    let auc = roc_curve(&scores, &labels).unwrap().auc;
    assert!((auc - 0.5).abs() < 0.05, "{auc}");
}

#[test]
fn vertical_average_uses_a_101_point_grid() {
    let grid = roc_grid();
    assert_eq!(grid.len(), 101);
    let perfect = roc_curve(&[1.0, 0.0], &[true, false]).unwrap();
    let band = vertical_average(&[&perfect, &perfect]);
    assert_eq!(band.fpr, grid);
    assert!(band.mean[1..].iter().all(|&t| t == 1.0));
}
