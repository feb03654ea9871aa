use std::collections::BTreeMap;

use proptest::prelude::*;

use super::io::*;
use super::*;

fn row(morph: &str, slot: u8, attempt: u32, frs: &str, score: f64) -> AttemptScore {
    AttemptScore {
        morph_id: morph.into(),
        slot,
        attempt,
        frs_id: frs.into(),
        score,
    }
}

fn thresholds(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Two morphs, systems A (0.5) and B (0.7), two attempts per slot.
fn hand_table() -> (Vec<AttemptScore>, BTreeMap<String, f64>) {
    let mut s = Vec::new();
    let mut add = |m: &str, f: &str, slot: u8, scores: [f64; 2]| {
        for (i, v) in scores.iter().enumerate() {
            s.push(row(m, slot, i as u32 + 1, f, *v));
        }
    };
    add("m1", "A", 1, [0.6, 0.6]);
    add("m1", "A", 2, [0.6, 0.4]);
    add("m1", "B", 1, [0.8, 0.8]);
    add("m1", "B", 2, [0.8, 0.8]);
    add("m2", "A", 1, [0.4, 0.4]);
    add("m2", "A", 2, [0.9, 0.9]);
    add("m2", "B", 1, [0.75, 0.1]);
    add("m2", "B", 2, [0.1, 0.1]);
    (s, thresholds(&[("A", 0.5), ("B", 0.7)]))
}

/// Enumerates every system subset directly from the raw rows.
fn brute_force_map(scores: &[AttemptScore], thr: &BTreeMap<String, f64>, policy: ContributorPolicy) -> Vec<Vec<f64>> {
    let mut morphs: Vec<&str> = scores.iter().map(|s| s.morph_id.as_str()).collect();
    morphs.sort();
    morphs.dedup();
    let mut systems: Vec<&str> = scores.iter().map(|s| s.frs_id.as_str()).collect();
    systems.sort();
    systems.dedup();
    let r_max = scores.iter().map(|s| s.attempt).max().unwrap();
    let passes = |m: &str, f: &str, r: u32| {
        let mut slots: Vec<u8> = scores.iter().filter(|s| s.morph_id == m).map(|s| s.slot).collect();
        slots.sort();
        slots.dedup();
        let ok: Vec<bool> = slots
            .iter()
            .map(|&slot| {
                scores
                    .iter()
                    .filter(|s| s.morph_id == m && s.frs_id == f && s.slot == slot && s.score >= thr[f])
                    .count() as u32
                    >= r
            })
            .collect();
        match policy {
            ContributorPolicy::Both => ok.iter().all(|&b| b),
            ContributorPolicy::Either => ok.iter().any(|&b| b),
        }
    };
    let c_max = systems.len();
    let mut cells = vec![vec![0.0; c_max]; r_max as usize];
    for r in 1..=r_max {
        for c in 1..=c_max {
            let mut hit = 0;
            for m in &morphs {
                let found = (0u32..1 << c_max).any(|mask| {
                    mask.count_ones() as usize >= c
                        && (0..c_max)
                            .filter(|i| mask & (1 << i) != 0)
                            .all(|i| passes(m, systems[i], r))
                });
                if found {
                    hit += 1;
                }
            }
            cells[r as usize - 1][c - 1] = hit as f64 / morphs.len() as f64;
        }
    }
    cells
}

/// Complete random instance: every morph has both slots on every system.
fn instance() -> impl Strategy<Value = (Vec<AttemptScore>, BTreeMap<String, f64>)> {
    (1usize..=4, 1usize..=3, 1u32..=3).prop_flat_map(|(m, f, a)| {
        (
            proptest::collection::vec(0u8..=10, m * f * 2 * a as usize),
            proptest::collection::vec(0u8..=10, f),
        )
            .prop_map(move |(raw, thr)| {
                let mut scores = Vec::new();
                let mut i = 0;
                for mi in 0..m {
                    for fi in 0..f {
                        for slot in 1..=2u8 {
                            for at in 1..=a {
                                scores.push(row(
                                    &format!("m{mi}"),
                                    slot,
                                    at,
                                    &format!("f{fi}"),
                                    raw[i] as f64 / 10.0,
                                ));
                                i += 1;
                            }
                        }
                    }
                }
                let thr = (0..f).map(|fi| (format!("f{fi}"), thr[fi] as f64 / 10.0)).collect();
                (scores, thr)
            })
    })
}

#[test]
fn map_all_above_and_all_below() {
    let (mut s, thr) = hand_table();
    s.iter_mut().for_each(|r| r.score = 1.0);
    let m = compute_map(&s, &thr, ContributorPolicy::Both).unwrap();
    assert!(m.cells.iter().flatten().all(|&v| v == 1.0));
    s.iter_mut().for_each(|r| r.score = 0.0);
    let m = compute_map(&s, &thr, ContributorPolicy::Either).unwrap();
    assert!(m.cells.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn map_hand_table() {
    let (s, thr) = hand_table();
    let both = compute_map(&s, &thr, ContributorPolicy::Both).unwrap();
    assert_eq!(both.frs, vec!["A", "B"]);
    assert_eq!(both.cells, vec![vec![0.5, 0.5], vec![0.5, 0.0]]);
    let either = compute_map(&s, &thr, ContributorPolicy::Either).unwrap();
    assert_eq!(either.cells, vec![vec![1.0, 1.0], vec![1.0, 0.5]]);
    assert_eq!(both.cells, brute_force_map(&s, &thr, ContributorPolicy::Both));
    assert_eq!(either.cells, brute_force_map(&s, &thr, ContributorPolicy::Either));
}

#[test]
fn map_contract_errors() {
    let (s, thr) = hand_table();
    assert!(matches!(
        compute_map(&[], &thr, ContributorPolicy::Both),
        Err(EvalError::Empty(_))
    ));
    let partial = thresholds(&[("A", 0.5)]);
    assert!(matches!(
        compute_map(&s, &partial, ContributorPolicy::Both),
        Err(EvalError::UnknownSystem(f)) if f == "B"
    ));
    let missing_slot: Vec<_> = s
        .iter()
        .filter(|r| !(r.morph_id == "m1" && r.frs_id == "B" && r.slot == 2))
        .cloned()
        .collect();
    assert!(matches!(
        compute_map(&missing_slot, &thr, ContributorPolicy::Both),
        Err(EvalError::Invalid(_))
    ));
    let mut dup = s.clone();
    dup.push(s[0].clone());
    assert!(matches!(
        compute_map(&dup, &thr, ContributorPolicy::Both),
        Err(EvalError::Invalid(_))
    ));
    let mut bad = s.clone();
    bad[0].attempt = 0;
    assert!(compute_map(&bad, &thr, ContributorPolicy::Both).is_err());
    bad = s;
    bad[0].score = f64::NAN;
    assert!(matches!(
        compute_map(&bad, &thr, ContributorPolicy::Both),
        Err(EvalError::NonFinite(_))
    ));
}

proptest! {
    #[test]
    fn map_matches_brute_force_and_is_monotone((scores, thr) in instance()) {
        let both = compute_map(&scores, &thr, ContributorPolicy::Both).unwrap();
        let either = compute_map(&scores, &thr, ContributorPolicy::Either).unwrap();
        prop_assert_eq!(&both.cells, &brute_force_map(&scores, &thr, ContributorPolicy::Both));
        prop_assert_eq!(&either.cells, &brute_force_map(&scores, &thr, ContributorPolicy::Either));
        for m in [&both, &either] {
            for r in 1..=m.attempts() {
                for c in 1..=m.systems() {
                    let v = m.cell(r, c);
                    prop_assert!((0.0..=1.0).contains(&v));
                    prop_assert!(v <= m.cell(1, 1));
                    if r > 1 { prop_assert!(v <= m.cell(r - 1, c)); }
                    if c > 1 { prop_assert!(v <= m.cell(r, c - 1)); }
                }
            }
        }
        for (b, e) in both.cells.iter().flatten().zip(either.cells.iter().flatten()) {
            prop_assert!(e >= b);
        }
    }
}

#[test]
fn det_separable_sets_reach_zero_zero() {
    let c = det_curve(&[0.9, 0.8], &[0.1, 0.2]).unwrap();
    assert!(c.points.iter().any(|p| p.macer == 0.0 && p.bpcer == 0.0));
    let first = c.points.first().unwrap();
    let last = c.points.last().unwrap();
    assert_eq!(
        (first.threshold, first.macer, first.bpcer),
        (f64::NEG_INFINITY, 1.0, 0.0)
    );
    assert_eq!((last.threshold, last.macer, last.bpcer), (f64::INFINITY, 0.0, 1.0));
    assert_eq!(c.closest_to_equal_error().macer, 0.0);
}

#[test]
fn det_identical_sets_are_indistinguishable() {
    let s = [0.3, 0.5, 0.5, 0.9];
    let c = det_curve(&s, &s).unwrap();
    // MACER(t) and 1 - BPCER(t) both count scores >= t in the same multiset.
    for p in &c.points {
        assert_eq!(p.macer, 1.0 - p.bpcer);
    }
    assert!(!c.points.iter().any(|p| p.macer == 0.0 && p.bpcer == 0.0));
}

#[test]
fn det_lower_polarity_mirrors_higher() {
    let bf = [0.1, 0.2, 0.25];
    let at = [0.3, 0.05, 0.8];
    let lower = det_curve_with(&bf, &at, Polarity::Lower).unwrap();
    let neg_bf: Vec<f64> = bf.iter().map(|v| -v).collect();
    let neg_at: Vec<f64> = at.iter().map(|v| -v).collect();
    let higher = det_curve(&neg_bf, &neg_at).unwrap();
    for (a, b) in lower.points.iter().zip(&higher.points) {
        assert_eq!(a.threshold, -b.threshold);
        assert_eq!((a.macer, a.bpcer), (b.macer, b.bpcer));
    }
    assert_eq!(lower.points[0].threshold, f64::INFINITY);
}

#[test]
fn det_rejects_empty_and_non_finite() {
    assert!(matches!(det_curve(&[], &[1.0]), Err(EvalError::Empty(_))));
    assert!(matches!(det_curve(&[1.0], &[]), Err(EvalError::Empty(_))));
    assert!(matches!(det_curve(&[f64::NAN], &[1.0]), Err(EvalError::NonFinite(_))));
}

proptest! {
    #[test]
    fn det_rates_are_monotone(
        bf in proptest::collection::vec(-5.0f64..5.0, 1..30),
        at in proptest::collection::vec(-5.0f64..5.0, 1..30),
    ) {
        let c = det_curve(&bf, &at).unwrap();
        for w in c.points.windows(2) {
            prop_assert!(w[0].threshold < w[1].threshold);
            prop_assert!(w[1].macer <= w[0].macer);
            prop_assert!(w[1].bpcer >= w[0].bpcer);
        }
        for p in &c.points {
            prop_assert!((0.0..=1.0).contains(&p.macer) && (0.0..=1.0).contains(&p.bpcer));
        }
    }
}

#[test]
fn kl_identical_sets_vanish() {
    let p = [0.1, 0.4, 0.4, 0.9, 0.35];
    assert!(kl_divergence(&p, &p, KL_BINS, KL_EPSILON).unwrap().abs() < 1e-12);
}

#[test]
fn kl_two_bin_hand_value() {
    // P fills the lower bin, Q splits evenly: ln 2.
    let kl = kl_divergence(&[0.0, 0.0], &[0.0, 1.0], 2, 1e-10).unwrap();
    assert!((kl - 2f64.ln()).abs() < 1e-3);
}

#[test]
fn kl_degenerate_range_and_errors() {
    assert_eq!(kl_divergence(&[0.5, 0.5], &[0.5], 10, 1e-10).unwrap(), 0.0);
    assert!(kl_divergence(&[], &[1.0], 10, 1e-10).is_err());
    assert!(kl_divergence(&[1.0], &[2.0], 1, 1e-10).is_err());
    assert!(kl_divergence(&[1.0], &[2.0], 10, 0.0).is_err());
}

proptest! {
    #[test]
    fn kl_is_non_negative(
        p in proptest::collection::vec(-3.0f64..3.0, 1..40),
        q in proptest::collection::vec(-3.0f64..3.0, 1..40),
    ) {
        prop_assert!(kl_divergence(&p, &q, KL_BINS, KL_EPSILON).unwrap() >= -1e-12);
    }

    #[test]
    fn kl_invariant_under_shared_affine_rescaling(
        p in proptest::collection::vec(-64i32..64, 1..30),
        q in proptest::collection::vec(-64i32..64, 1..30),
        shift in -100i32..100,
        exp in -3i32..4,
    ) {
        // Dyadic values keep the rescaling exact.
        let scale = 2f64.powi(exp);
        let f = |v: &i32| *v as f64 / 16.0;
        let g = |v: &i32| (*v as f64 / 16.0) * scale + shift as f64;
        let a = kl_divergence(&p.iter().map(f).collect::<Vec<_>>(), &q.iter().map(f).collect::<Vec<_>>(), 16, 1e-10).unwrap();
        let b = kl_divergence(&p.iter().map(g).collect::<Vec<_>>(), &q.iter().map(g).collect::<Vec<_>>(), 16, 1e-10).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn kde_single_sample_is_symmetric_about_it() {
    let t = kde_table(&[2.0], 0.5, 101).unwrap();
    let (peak, _) = t
        .iter()
        .copied()
        .fold((0.0, 0.0), |acc, p| if p.1 > acc.1 { p } else { acc });
    assert!((peak - 2.0).abs() < 1e-9);
    for i in 0..t.len() {
        assert!((t[i].1 - t[t.len() - 1 - i].1).abs() < 1e-12);
    }
    assert!((trapezoid(&t) - 1.0).abs() < 1e-2);
}

#[test]
fn kde_two_clusters_have_two_modes() {
    let samples = [0.0, 0.1, -0.1, 10.0, 10.1, 9.9];
    let h = 0.5;
    let t = kde_table(&samples, h, 2001).unwrap();
    let modes: Vec<f64> = t
        .windows(3)
        .filter(|w| w[1].1 > w[0].1 && w[1].1 >= w[2].1)
        .map(|w| w[1].0)
        .collect();
    assert_eq!(modes.len(), 2);
    assert!(modes[0].abs() < h);
    assert!((modes[1] - 10.0).abs() < h);
}

#[test]
fn kde_errors() {
    assert!(kde_table(&[], 1.0, 10).is_err());
    assert!(kde_table(&[1.0], 0.0, 10).is_err());
    assert!(kde_table(&[1.0], 1.0, 1).is_err());
}

proptest! {
    #[test]
    fn kde_integrates_to_one(samples in proptest::collection::vec(-10.0f64..10.0, 1..20)) {
        let h = silverman_bandwidth(&samples).max(0.05);
        let t = kde_table(&samples, h, 512).unwrap();
        prop_assert!((trapezoid(&t) - 1.0).abs() < 1e-2);
    }
}

#[test]
fn silverman_reference_value() {
    // sd = 1.290994, IQR/1.34 = 1.119403 for 1..4; 0.9 * 1.119403 * 4^-0.2
    let h = silverman_bandwidth(&[1.0, 2.0, 3.0, 4.0]);
    assert!((h - 0.9 * (1.5 / 1.34) * 4f64.powf(-0.2)).abs() < 1e-12);
    assert_eq!(silverman_bandwidth(&[3.0]), 1e-3);
}

#[test]
fn attempt_csv_round_trip_into_map_table() {
    let (s, thr) = hand_table();
    let mut text = String::from("morph_id,slot,attempt,frs_id,score\n");
    for r in &s {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.morph_id, r.slot, r.attempt, r.frs_id, r.score
        ));
    }
    let parsed = read_attempt_scores(text.as_bytes()).unwrap();
    assert_eq!(parsed, s);
    let map = compute_map(&parsed, &thr, ContributorPolicy::Both).unwrap();
    let mut out = Vec::new();
    write_map_csv(&map, &mut out).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "attempts,1,2\n1,0.500000,0.500000\n2,0.500000,0.000000\n"
    );
}

#[test]
fn detection_csv_to_det_table() {
    let text = "id,label,score\nb1,bonafide,0.9\nb2,bonafide,0.8\na1,morph,0.1\na2,morph,0.2\n";
    let rows = read_detection_scores(text.as_bytes()).unwrap();
    let (bf, at) = split_detection(&rows);
    assert_eq!(bf, vec![0.9, 0.8]);
    let mut out = Vec::new();
    write_det_csv(&det_curve(&bf, &at).unwrap(), &mut out).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "threshold,macer,bpcer\n-inf,1.000000,0.000000\n0.1,1.000000,0.000000\n0.2,0.500000,0.000000\n\
         0.8,0.000000,0.000000\n0.9,0.000000,0.500000\ninf,0.000000,1.000000\n"
    );
    assert!(read_detection_scores("id,label,score\nx,maybe,0.1\n".as_bytes()).is_err());
}

#[test]
fn quality_csv_and_kld_table() {
    let text = "id,subset,score\n1,real,0.0\n2,real,0.0\n3,synth,0.0\n4,synth,1.0\n";
    let samples = read_quality_scores(text.as_bytes()).unwrap();
    assert_eq!(subsets(&samples), vec!["real", "synth"]);
    let kl = kl_divergence(
        &subset_values(&samples, "real"),
        &subset_values(&samples, "synth"),
        2,
        1e-10,
    )
    .unwrap();
    let mut out = Vec::new();
    write_kld_csv(
        &[KlRow {
            reference: "real".into(),
            subset: "synth".into(),
            kl,
        }],
        &mut out,
    )
    .unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "reference,subset,kl\nreal,synth,0.693147\n"
    );
}
