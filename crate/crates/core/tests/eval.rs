use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdcs_core::annotation::CellClass;
use sdcs_core::eval::{
    compute_metrics, ki67_index, ki67_index_of, match_detections, pooled_metrics, MatchResult, TileMatch,
};

fn random_points(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<(f64, f64)> {
    (0..n).map(|_| (rng.random_range(0.0..extent), rng.random_range(0.0..extent))).collect()
}

fn check_conservation(m: &MatchResult, n_det: usize, n_truth: usize) {
    assert_eq!(m.pairs.len() + m.unmatched_detections.len(), n_det);
    assert_eq!(m.pairs.len() + m.unmatched_truths.len(), n_truth);
    let mut dets: Vec<usize> = m.pairs.iter().map(|p| p.0).chain(m.unmatched_detections.iter().copied()).collect();
    dets.sort_unstable();
    assert_eq!(dets, (0..n_det).collect::<Vec<_>>());
    let mut truths: Vec<usize> = m.pairs.iter().map(|p| p.1).chain(m.unmatched_truths.iter().copied()).collect();
    truths.sort_unstable();
    assert_eq!(truths, (0..n_truth).collect::<Vec<_>>());
}

#[test]
fn conservation_laws_hold_on_fuzz_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..1000 {
        let nd = rng.random_range(0..30);
        let nt = rng.random_range(0..30);
        let d = random_points(&mut rng, nd, 60.0);
        let t = random_points(&mut rng, nt, 60.0);
        let r = rng.random_range(0.5..12.0);
        let m = match_detections(&d, &t, r);
        check_conservation(&m, nd, nt);
        for &(di, ti) in &m.pairs {
            assert!(((d[di].0 - t[ti].0).powi(2) + (d[di].1 - t[ti].1).powi(2)).sqrt() <= r);
        }
    }
}

/// Greedy matching by repeatedly scanning for the globally closest free pair.
fn greedy_oracle(d: &[(f64, f64)], t: &[(f64, f64)], r: f64) -> Vec<(usize, usize)> {
    let mut used_d = vec![false; d.len()];
    let mut used_t = vec![false; t.len()];
    let mut out = Vec::new();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for (ti, tp) in t.iter().enumerate() {
            for (di, dp) in d.iter().enumerate() {
                if used_d[di] || used_t[ti] {
                    continue;
                }
                let dist = ((dp.0 - tp.0).powi(2) + (dp.1 - tp.1).powi(2)).sqrt();
                if dist > r {
                    continue;
                }
                if best.is_none_or(|b| (dist, ti, di) < (b.0, b.1, b.2)) {
                    best = Some((dist, ti, di));
                }
            }
        }
        match best {
            Some((_, ti, di)) => {
                used_d[di] = true;
                used_t[ti] = true;
                out.push((di, ti));
            }
            None => break,
        }
    }
    out.sort_by_key(|&(d, t)| (t, d));
    out
}

#[test]
fn matching_equals_brute_force_greedy() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..200 {
        // integer grid so that distance ties occur
        let nd = rng.random_range(0..12);
        let nt = rng.random_range(0..12);
        let d: Vec<(f64, f64)> = (0..nd).map(|_| (rng.random_range(0..10) as f64, rng.random_range(0..10) as f64)).collect();
        let t: Vec<(f64, f64)> = (0..nt).map(|_| (rng.random_range(0..10) as f64, rng.random_range(0..10) as f64)).collect();
        assert_eq!(match_detections(&d, &t, 3.0).pairs, greedy_oracle(&d, &t, 3.0));
    }
}

fn classes_from(rng: &mut ChaCha8Rng, n: usize) -> Vec<CellClass> {
    (0..n).map(|_| CellClass::ALL[rng.random_range(0..4)]).collect()
}

#[test]
fn perfect_predictions_score_one() {
    let pts: Vec<(f64, f64)> = (0..40).map(|i| ((i % 8) as f64 * 20.0, (i / 8) as f64 * 20.0)).collect();
    let classes: Vec<CellClass> = (0..40).map(|i| CellClass::ALL[i % 4]).collect();
    let r = compute_metrics(&match_detections(&pts, &pts, 6.0), &classes, &classes).unwrap();
    assert_eq!(r.overall_accuracy, 1.0);
    assert_eq!(r.matched_accuracy, 1.0);
    for m in &r.per_class {
        assert_eq!((m.accuracy, m.precision, m.sensitivity, m.specificity, m.f1), (1.0, 1.0, 1.0, 1.0, 1.0));
    }
    assert_eq!(r.macro_average.f1, 1.0);
    assert_eq!(r.micro_average.f1, 1.0);
    assert_eq!(r.detection.f1, 1.0);
}

#[test]
fn binary_confusion_rates() {
    // truths: 10 positive, 10 negative; predictions give TP 8, FN 2, FP 1, TN 9
    let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 * 20.0, 0.0)).collect();
    let truth: Vec<CellClass> = (0..20)
        .map(|i| if i < 10 { CellClass::Ki67Positive } else { CellClass::Ki67Negative })
        .collect();
    let mut pred = truth.clone();
    pred[8] = CellClass::Ki67Negative;
    pred[9] = CellClass::Ki67Negative;
    pred[10] = CellClass::Ki67Positive;
    let r = compute_metrics(&match_detections(&pts, &pts, 1.0), &pred, &truth).unwrap();
    let pos = &r.per_class[0];
    assert_eq!((pos.tp, pos.fn_, pos.fp, pos.tn), (8, 2, 1, 9));
    assert!((pos.sensitivity - 0.8).abs() < 1e-12);
    assert!((pos.specificity - 0.9).abs() < 1e-12);
    assert!((pos.precision - 8.0 / 9.0).abs() < 1e-12);
}

#[test]
fn random_labels_score_near_chance() {
    let pts: Vec<(f64, f64)> = (0..200).map(|i| (i as f64 * 20.0, 0.0)).collect();
    let truth: Vec<CellClass> = (0..200).map(|i| CellClass::ALL[i % 4]).collect();
    let m = match_detections(&pts, &pts, 1.0);
    let mut total = 0.0;
    for seed in 0..100 {
        let mut pred = truth.clone();
        pred.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        total += compute_metrics(&m, &pred, &truth).unwrap().overall_accuracy;
    }
    let mean = total / 100.0;
    assert!((mean - 0.25).abs() <= 0.1, "mean accuracy {mean}");
}

#[test]
fn confusion_rows_and_rates_are_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..200 {
        let nd = rng.random_range(0..25);
        let nt = rng.random_range(1..25);
        let d = random_points(&mut rng, nd, 50.0);
        let t = random_points(&mut rng, nt, 50.0);
        let dc = classes_from(&mut rng, nd);
        let tc = classes_from(&mut rng, nt);
        let r = compute_metrics(&match_detections(&d, &t, 6.0), &dc, &tc).unwrap();
        for c in 0..4 {
            let row: usize = r.confusion[c].iter().sum::<usize>() + r.missed[c];
            assert_eq!(row, tc.iter().filter(|x| x.index() == c).count());
            let col: usize = r.confusion.iter().map(|row| row[c]).sum::<usize>() + r.spurious[c];
            assert_eq!(col, dc.iter().filter(|x| x.index() == c).count());
        }
        for m in &r.per_class {
            for v in [m.accuracy, m.precision, m.sensitivity, m.specificity, m.f1] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        let active: Vec<f64> = r.per_class.iter().filter(|m| m.tp + m.fp + m.fn_ > 0).map(|m| m.f1).collect();
        if !active.is_empty() {
            let lo = active.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = active.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(r.macro_average.f1 >= lo - 1e-12 && r.macro_average.f1 <= hi + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_ignore_input_order(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = rng.random_range(1..20);
        let nt = rng.random_range(1..20);
        // spread points so that no two candidate pairs tie in distance
        let d = random_points(&mut rng, nd, 80.0);
        let t = random_points(&mut rng, nt, 80.0);
        let dc = classes_from(&mut rng, nd);
        let tc = classes_from(&mut rng, nt);
        let a = compute_metrics(&match_detections(&d, &t, 8.0), &dc, &tc).unwrap();
        let mut pd: Vec<usize> = (0..nd).collect();
        let mut pt: Vec<usize> = (0..nt).collect();
        pd.shuffle(&mut rng);
        pt.shuffle(&mut rng);
        let d2: Vec<_> = pd.iter().map(|&i| d[i]).collect();
        let dc2: Vec<_> = pd.iter().map(|&i| dc[i]).collect();
        let t2: Vec<_> = pt.iter().map(|&i| t[i]).collect();
        let tc2: Vec<_> = pt.iter().map(|&i| tc[i]).collect();
        let b = compute_metrics(&match_detections(&d2, &t2, 8.0), &dc2, &tc2).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ki67_index_ignores_other_classes(pos in 0usize..50, neg in 0usize..50, stroma in 0usize..20, lymph in 0usize..20) {
        prop_assume!(pos + neg > 0);
        let mut classes = vec![CellClass::Ki67Positive; pos];
        classes.extend(vec![CellClass::Ki67Negative; neg]);
        let base = ki67_index_of(&classes).unwrap();
        classes.extend(vec![CellClass::Stroma; stroma]);
        classes.extend(vec![CellClass::Lymphocyte; lymph]);
        prop_assert_eq!(ki67_index_of(&classes).unwrap(), base);
    }
}

#[test]
fn ki67_index_examples() {
    assert_eq!(format!("{:.2}", ki67_index(254, 416).unwrap()), "37.91");
    assert_eq!(format!("{:.2}", ki67_index(386, 744).unwrap()), "34.16");
    assert_eq!(ki67_index(5, 0).unwrap(), 100.0);
    assert_eq!(ki67_index(3, 1).unwrap(), 75.0);
    assert!(ki67_index(0, 0).is_err());
    assert!(ki67_index_of(&[CellClass::Stroma]).is_err());
}

#[test]
fn empty_truth_is_an_error() {
    let m = match_detections(&[(0.0, 0.0)], &[], 6.0);
    assert!(compute_metrics(&m, &[CellClass::Stroma], &[]).is_err());
}

#[test]
fn pooling_equals_concatenation() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut tiles = Vec::new();
    let (mut all_d, mut all_t, mut all_dc, mut all_tc) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for k in 0..4 {
        let d = random_points(&mut rng, 10, 50.0);
        let t = random_points(&mut rng, 10, 50.0);
        let dc = classes_from(&mut rng, 10);
        let tc = classes_from(&mut rng, 10);
        tiles.push(TileMatch {
            matching: match_detections(&d, &t, 6.0),
            detection_classes: dc.clone(),
            truth_classes: tc.clone(),
        });
        // far-apart offsets keep tiles from matching across each other
        let off = k as f64 * 1000.0;
        all_d.extend(d.iter().map(|p| (p.0 + off, p.1)));
        all_t.extend(t.iter().map(|p| (p.0 + off, p.1)));
        all_dc.extend(dc);
        all_tc.extend(tc);
    }
    let pooled = pooled_metrics(&tiles).unwrap();
    let direct = compute_metrics(&match_detections(&all_d, &all_t, 6.0), &all_dc, &all_tc).unwrap();
    assert_eq!(pooled.confusion, direct.confusion);
    assert_eq!(pooled.missed, direct.missed);
    assert_eq!(pooled.spurious, direct.spurious);
    assert_eq!(pooled.overall_accuracy, direct.overall_accuracy);
}

#[test]
fn report_serialises_with_schema_version() {
    let pts = vec![(1.0, 1.0)];
    let r = compute_metrics(&match_detections(&pts, &pts, 6.0), &[CellClass::Stroma], &[CellClass::Stroma]).unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!(v["per_class"][0].get("fn").is_some());
    assert!(r.to_text().contains("detection"));
}
