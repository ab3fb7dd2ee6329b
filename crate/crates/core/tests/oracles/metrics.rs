//! Decision methods and detection metrics against brute-force references.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strokenet::decision::*;

fn frames(s: &Segment) -> BTreeSet<usize> {
    (s.begin..s.end).collect()
}

fn brute_iou(a: &Segment, b: &Segment) -> f64 {
    let (fa, fb) = (frames(a), frames(b));
    let inter = fa.intersection(&fb).count();
    let union = fa.union(&fb).count();
    inter as f64 / union as f64
}

fn random_segment(rng: &mut ChaCha8Rng, horizon: usize) -> Segment {
    let begin = rng.random_range(0..horizon - 1);
    let end = rng.random_range(begin + 1..horizon);
    // scores on a coarse grid so ties in the ranking are exercised
    Segment::new(begin, end, 1, rng.random_range(0..5) as f64 / 4.0).unwrap()
}

pub fn iou_reference_case_is_one_third() {
    let a = Segment::new(0, 10, 1, 1.0).unwrap();
    let b = Segment::new(5, 15, 1, 1.0).unwrap();
    assert_eq!(temporal_iou(&a, &b), 1.0 / 3.0);
    assert_eq!(temporal_iou(&b, &a), 1.0 / 3.0);
}

pub fn iou_matches_frame_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let (a, b) = (random_segment(&mut rng, 30), random_segment(&mut rng, 30));
        assert_eq!(temporal_iou(&a, &b), brute_iou(&a, &b), "{a:?} {b:?}");
    }
}

/// Greedy matching from its definition, then AP as the sum over true
/// positives of the best precision at any deeper rank, divided by the
/// number of ground-truth segments.
fn brute_ap(videos: &[VideoSegments], threshold: f64) -> f64 {
    let mut ranked: Vec<(usize, Segment)> = Vec::new();
    for (v, s) in videos.iter().enumerate() {
        ranked.extend(s.predictions.iter().map(|p| (v, *p)));
    }
    // stable sort keeps input order among full ties
    ranked.sort_by(|a, b| b.1.score.partial_cmp(&a.1.score).unwrap().then(a.1.begin.cmp(&b.1.begin)));
    let n_gt: usize = videos.iter().map(|v| v.ground_truth.len()).sum();
    if n_gt == 0 {
        return if ranked.is_empty() { 1.0 } else { 0.0 };
    }
    let mut taken: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut hits = Vec::new();
    for (v, p) in &ranked {
        let best = videos[*v]
            .ground_truth
            .iter()
            .enumerate()
            .filter(|(j, g)| !taken.contains(&(*v, *j)) && brute_iou(p, g) >= threshold)
            .fold(None::<(usize, f64)>, |best, (j, g)| {
                let iou = brute_iou(p, g);
                match best {
                    Some((_, b)) if b >= iou => best,
                    _ => Some((j, iou)),
                }
            });
        if let Some((j, _)) = best {
            taken.insert((*v, j));
        }
        hits.push(best.is_some());
    }
    let precision: Vec<f64> = (0..hits.len())
        .map(|k| hits[..=k].iter().filter(|h| **h).count() as f64 / (k + 1) as f64)
        .collect();
    let mut total = 0.0;
    for k in 0..hits.len() {
        if hits[k] {
            total += precision[k..].iter().copied().fold(0.0, f64::max);
        }
    }
    total / n_gt as f64
}

pub fn average_precision_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..100 {
        let videos: Vec<VideoSegments> = (0..rng.random_range(1..4))
            .map(|_| VideoSegments {
                predictions: (0..rng.random_range(0..6)).map(|_| random_segment(&mut rng, 25)).collect(),
                ground_truth: (0..rng.random_range(0..5)).map(|_| random_segment(&mut rng, 25)).collect(),
            })
            .collect();
        for &t in &[0.1, 0.5, 0.75] {
            let got = average_precision_videos(&videos, t);
            let want = brute_ap(&videos, t);
            assert_eq!(got, want, "case {case} threshold {t}");
        }
    }
}

pub fn perfect_and_empty_detections() {
    let gt = vec![Segment::new(3, 9, 1, 1.0).unwrap(), Segment::new(20, 31, 1, 1.0).unwrap()];
    assert_eq!(average_precision(&gt, &gt, 0.95), 1.0);
    assert_eq!(average_precision(&[], &gt, 0.5), 0.0);
    assert_eq!(average_precision(&[], &[], 0.5), 1.0);
    assert_eq!(average_precision(&gt, &[], 0.5), 0.0);
    let videos = [VideoSegments {
        predictions: gt.clone(),
        ground_truth: gt,
    }];
    assert_eq!(map_score(&videos, &default_thresholds()), 1.0);
}

fn random_distribution(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

fn random_windows(rng: &mut ChaCha8Rng, frames: usize, k: usize) -> Vec<WindowPrediction> {
    (0..rng.random_range(1..12))
        .map(|_| {
            let length = rng.random_range(1..10);
            WindowPrediction {
                start: rng.random_range(0..frames),
                length,
                probs: random_distribution(rng, k),
            }
        })
        .collect()
}

pub fn vote_curve_matches_per_frame_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(1..40);
        let preds = random_windows(&mut rng, n, 3);
        let curve = vote_sliding_window(&preds, n);
        for (t, &v) in curve.iter().enumerate() {
            let covering: Vec<&WindowPrediction> = preds.iter().filter(|p| p.start <= t && t < p.start + p.length).collect();
            let stroke = covering.iter().filter(|p| argmax(&p.probs) != 0).count();
            let want = if covering.is_empty() { 0.0 } else { stroke as f64 / covering.len() as f64 };
            assert_eq!(v, want);
        }
        assert_eq!(frame_curve(&preds, n, DecisionKind::VoteSliding), curve);
    }
}

pub fn wide_gaussian_equals_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let wide = DecisionKind::Gaussian { sigma: 1e6 };
    for _ in 0..100 {
        let n = rng.random_range(5..60);
        let preds = random_windows(&mut rng, n, 4);
        let mid = rng.random_range(0.0..n as f64);
        let g = aggregate_clip(&preds, wide, mid).unwrap();
        let m = aggregate_clip(&preds, DecisionKind::Mean, mid).unwrap();
        for (a, b) in g.probs.iter().zip(&m.probs) {
            assert!((a - b).abs() <= 1e-6);
        }
        let gc = frame_curve(&preds, n, wide);
        let mc = frame_curve(&preds, n, DecisionKind::Mean);
        for (a, b) in gc.iter().zip(&mc) {
            assert!((a - b).abs() <= 1e-6);
        }
    }
}

pub fn all_methods_coincide_on_a_single_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kinds = [
        DecisionKind::NoWindow,
        DecisionKind::Mean,
        DecisionKind::Gaussian { sigma: 3.0 },
        DecisionKind::Vote,
        DecisionKind::VoteSliding,
    ];
    for _ in 0..100 {
        let preds = vec![WindowPrediction {
            start: rng.random_range(0..10),
            length: rng.random_range(1..20),
            probs: random_distribution(&mut rng, 5),
        }];
        let mid = rng.random_range(0.0..30.0);
        let out: Vec<ClipDecision> = kinds.iter().map(|&k| aggregate_clip(&preds, k, mid).unwrap()).collect();
        for o in &out {
            assert_eq!(o.label, argmax(&preds[0].probs));
        }
        // the probability-averaging methods return the window itself
        for o in &out[..3] {
            assert_eq!(o.probs, preds[0].probs);
        }
        let n = preds[0].start + preds[0].length + 3;
        let curves: Vec<Vec<f64>> = kinds[..3].iter().map(|&k| frame_curve(&preds, n, k)).collect();
        assert!(curves.iter().all(|c| *c == curves[0]));
    }
}

pub fn segments_follow_the_threshold() {
    let curve = [0.1, 0.6, 0.7, 0.2, 0.9, 0.95, 0.99, 0.1, 0.8];
    let segs = extract_segments(&curve, 0.5, 2).unwrap();
    let spans: Vec<(usize, usize)> = segs.iter().map(|s| (s.begin, s.end)).collect();
    assert_eq!(spans, vec![(1, 3), (4, 7)]);
    assert!((segs[1].score - (0.9 + 0.95 + 0.99) / 3.0).abs() < 1e-15);
    assert!(extract_segments(&curve, 1.0, 2).is_err());
    assert!(extract_segments(&curve, 0.5, 0).is_err());
}
