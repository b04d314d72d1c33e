mod common;

use common::brute_force_isotonic;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zevox::metrics::{
    binary_entropy, cllr, cllr_min, d_ece, ece, ece_profile, eer, eer_with, integrate_disclosure, pav_llrs,
    prior_grid, EerMethod, ScoreSet, ECE_GRID_POINTS,
};

fn llr_to_posterior(llr: f64, prior_logit: f64) -> f64 {
    1.0 / (1.0 + (-(llr + prior_logit)).exp())
}

fn random_set(rng: &mut ChaCha8Rng, max_len: usize) -> ScoreSet {
    let nt = rng.gen_range(1..max_len);
    let nn = rng.gen_range(1..=(max_len - nt).max(1));
    // small integer grid forces ties
    let g = |rng: &mut ChaCha8Rng, off: i32| (rng.gen_range(-4..=4) + off) as f64 * 0.5;
    ScoreSet::new(
        (0..nt).map(|_| g(rng, 1)).collect(),
        (0..nn).map(|_| g(rng, 0)).collect(),
    )
}

#[test]
fn pav_matches_exhaustive_isotonic_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..400 {
        let s = random_set(&mut rng, 12);
        let (bt, bn, _) = brute_force_isotonic(&s);
        let (lt, ln) = pav_llrs(&s).unwrap();
        let pl = (s.tar.len() as f64 / s.non.len() as f64).ln();
        for (l, b) in lt.iter().zip(&bt).chain(ln.iter().zip(&bn)) {
            let p = llr_to_posterior(*l, pl);
            assert!((p - b).abs() < 1e-12, "case {case}: {s:?} pav {p} brute {b}");
        }
    }
}

/// ROC points for every threshold, then the lowest crossing of the
/// Pmiss = Pfa diagonal by any segment joining two points: that is where
/// the lower convex hull meets the diagonal.
fn eer_by_sweep_and_hull(s: &ScoreSet) -> f64 {
    let mut th: Vec<f64> = s.tar.iter().chain(&s.non).copied().collect();
    th.sort_by(f64::total_cmp);
    th.dedup();
    let mut pts = vec![(0.0, 1.0), (1.0, 0.0)];
    for &t in &th {
        // accept score >= t
        let pmiss = s.tar.iter().filter(|&&x| x < t).count() as f64 / s.tar.len() as f64;
        let pfa = s.non.iter().filter(|&&x| x >= t).count() as f64 / s.non.len() as f64;
        pts.push((pfa, pmiss));
    }
    let mut best = f64::INFINITY;
    for a in &pts {
        if (a.0 - a.1).abs() < 1e-15 {
            best = best.min(a.0);
        }
        for b in &pts {
            let (fa, ma) = (a.0 - a.1, b.0 - b.1);
            if fa < 0.0 && ma > 0.0 {
                let w = fa / (fa - ma);
                best = best.min(a.0 + w * (b.0 - a.0));
            }
        }
    }
    best
}

#[test]
fn eer_hand_case_matches_oracle() {
    let s = ScoreSet::new(vec![0.0, 2.0, 4.0], vec![1.0, 3.0]);
    let oracle = eer_by_sweep_and_hull(&s);
    assert!((oracle - 0.4).abs() < 1e-12, "oracle {oracle}");
    assert!((eer(&s).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn eer_matches_oracle_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let s = random_set(&mut rng, 20);
        let got = eer(&s).unwrap();
        let want = eer_by_sweep_and_hull(&s);
        assert!((got - want).abs() < 1e-12, "{s:?}: {got} vs {want}");
    }
}

#[test]
fn eer_trivial_cases() {
    assert_eq!(eer(&ScoreSet::new(vec![2.0, 3.0], vec![0.0, 1.0])).unwrap(), 0.0);
    assert_eq!(eer(&ScoreSet::new(vec![1.0; 4], vec![1.0; 3])).unwrap(), 0.5);
    let interp = eer_with(&ScoreSet::new(vec![2.0, 3.0], vec![0.0, 1.0]), EerMethod::Interpolated).unwrap();
    assert_eq!(interp, 0.0);
}

fn gaussian_set(seed: u64, n: usize, sep: f64) -> ScoreSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = |m: f64| m + rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0);
    ScoreSet::new((0..n).map(|_| g(sep)).collect(), (0..n + 7).map(|_| g(0.0)).collect())
}

#[test]
fn metrics_invariant_under_monotone_transforms() {
    for seed in 0..5 {
        let s = gaussian_set(seed, 60, 1.0);
        let base = (eer(&s).unwrap(), d_ece(&s).unwrap(), cllr_min(&s).unwrap());
        for f in [|x: f64| 2.0 * x + 1.0, |x: f64| 10.0 * (x / 4.0).tanh()] {
            let t = s.map(f);
            assert!((eer(&t).unwrap() - base.0).abs() <= 1e-10);
            assert!((d_ece(&t).unwrap() - base.1).abs() <= 1e-10);
            assert!((cllr_min(&t).unwrap() - base.2).abs() <= 1e-10);
        }
    }
}

#[test]
fn cllr_min_beats_random_affine_calibrations() {
    let s = gaussian_set(3, 80, 1.5);
    let floor = cllr_min(&s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let (a, b) = (rng.gen_range(0.05..5.0), rng.gen_range(-3.0..3.0));
        let c = s.map(|x| a * x + b);
        assert!(floor <= cllr(&c.tar, &c.non).unwrap() + 1e-12);
    }
}

#[test]
fn zero_llrs_cost_one_bit_and_disclose_nothing() {
    let z = vec![0.0; 9];
    assert_eq!(cllr(&z, &z[..4]).unwrap(), 1.0);
    assert_eq!(integrate_disclosure(&z, &z[..4], &prior_grid(ECE_GRID_POINTS)).unwrap(), 0.0);
    assert_eq!(d_ece(&ScoreSet::new(vec![0.3; 5], vec![0.3; 8])).unwrap(), 0.0);
}

#[test]
fn perfect_separation_discloses_full_entropy_integral() {
    let s = ScoreSet::new(vec![1.0, 2.0, 5.0], vec![-3.0, -1.0]);
    let d = d_ece(&s).unwrap();
    let analytic = 1.0 / (2.0 * std::f64::consts::LN_2);
    assert!((d - analytic).abs() < 1e-3, "{d}");
    assert_eq!(cllr_min(&s).unwrap(), 0.0);
}

#[test]
fn calibrated_ece_never_exceeds_reference() {
    for seed in 0..5 {
        let s = gaussian_set(seed + 20, 40, 0.7);
        let (t, n) = pav_llrs(&s).unwrap();
        for p in ece_profile(&t, &n, &prior_grid(101)).unwrap() {
            assert!(p.ece_cal <= p.ece_default + 1e-12, "{p:?}");
            assert!((p.ece_default - binary_entropy(p.prior)).abs() < 1e-15);
            assert!((p.ece_cal - ece(&t, &n, p.prior).unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn d_ece_is_permutation_invariant() {
    let s = gaussian_set(5, 50, 1.0);
    let mut r = s.clone();
    r.tar.reverse();
    r.non.rotate_left(13);
    assert!((d_ece(&s).unwrap() - d_ece(&r).unwrap()).abs() <= 1e-12);
}

proptest! {
    #[test]
    fn bounds_and_symmetry(
        tar in prop::collection::vec(-5.0f64..5.0, 1..25),
        non in prop::collection::vec(-5.0f64..5.0, 1..25),
    ) {
        let s = ScoreSet::new(tar, non);
        let e = eer(&s).unwrap();
        prop_assert!((0.0..=0.5).contains(&e));
        let d = d_ece(&s).unwrap();
        prop_assert!((-1e-12..=1.0 / (2.0 * std::f64::consts::LN_2) + 1e-9).contains(&d));
        let c = cllr_min(&s).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&c));

        let swapped = ScoreSet::new(s.non.iter().map(|x| -x).collect(), s.tar.iter().map(|x| -x).collect());
        prop_assert!((eer(&swapped).unwrap() - e).abs() < 1e-12);

        let (t, n) = pav_llrs(&s).unwrap();
        let mut pairs: Vec<(f64, f64)> = s.tar.iter().copied().zip(t).chain(s.non.iter().copied().zip(n)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            prop_assert!(w[0].1 <= w[1].1);
        }
    }
}
