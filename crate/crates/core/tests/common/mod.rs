//! Brute-force reference evaluator, shared by the metric tests and the
//! acceptance suite. It deliberately avoids the library's matching and AP code.
#![allow(dead_code)]

use cmaff::metrics::{iou, DetectionBox, GroundTruthBox};

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Enumerates every processing order and keeps the one consistent with
/// "higher score first, lower index on ties".
pub fn consistent_order(dets: &[DetectionBox]) -> Vec<usize> {
    let valid: Vec<Vec<usize>> = permutations(dets.len())
        .into_iter()
        .filter(|p| {
            p.windows(2).all(|w| {
                let (a, b) = (w[0], w[1]);
                dets[a].score > dets[b].score || (dets[a].score == dets[b].score && a < b)
            })
        })
        .collect();
    assert_eq!(valid.len(), 1, "tie-break must determine a unique order");
    valid.into_iter().next().unwrap()
}

/// `(tp flags in rank order, false negatives)`.
pub fn brute_force_match(
    dets: &[DetectionBox],
    gts: &[GroundTruthBox],
    thresh: f64,
) -> (Vec<bool>, usize) {
    let order = consistent_order(dets);
    let mut used = vec![false; gts.len()];
    let mut flags = Vec::new();
    for d in order {
        let mut best_iou = -1.0;
        let mut best_gt = None;
        for g in 0..gts.len() {
            if used[g] || gts[g].image_id != dets[d].image_id {
                continue;
            }
            let v = iou(&dets[d].bbox, &gts[g].bbox);
            if v > best_iou {
                best_iou = v;
                best_gt = Some(g);
            }
        }
        match best_gt {
            Some(g) if best_iou >= thresh => {
                used[g] = true;
                flags.push(true);
            }
            _ => flags.push(false),
        }
    }
    let fn_count = used.iter().filter(|u| !**u).count();
    (flags, fn_count)
}

/// Integrates precision over every distinct recall breakpoint, taking at each
/// breakpoint the best precision achieved at that recall or beyond.
pub fn brute_force_ap(flags: &[bool], gt_count: usize) -> f64 {
    if gt_count == 0 {
        return 0.0;
    }
    let mut recalls = Vec::new();
    let mut precisions = Vec::new();
    let mut tp = 0usize;
    for (i, &f) in flags.iter().enumerate() {
        tp += f as usize;
        recalls.push(tp as f64 / gt_count as f64);
        precisions.push(tp as f64 / (i + 1) as f64);
    }
    let mut breakpoints: Vec<f64> = recalls.iter().copied().filter(|&r| r > 0.0).collect();
    breakpoints.dedup();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in breakpoints {
        let best = recalls
            .iter()
            .zip(&precisions)
            .filter(|(rr, _)| **rr >= r)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        ap += (r - prev) * best;
        prev = r;
    }
    ap.min(1.0)
}

pub fn brute_force_class_ap(dets: &[DetectionBox], gts: &[GroundTruthBox], thresh: f64) -> f64 {
    let (flags, _) = brute_force_match(dets, gts, thresh);
    brute_force_ap(&flags, gts.len())
}

/// Small random instance with plenty of overlaps and score ties.
pub fn random_instance(seed: u64) -> (Vec<DetectionBox>, Vec<GroundTruthBox>) {
    use cmaff::metrics::BBox;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let random_box = |rng: &mut rand_chacha::ChaCha8Rng| {
        let xc = rng.gen_range(2..=8) as f64 / 10.0;
        let yc = rng.gen_range(2..=8) as f64 / 10.0;
        let w = rng.gen_range(1..=4) as f64 / 10.0;
        let h = rng.gen_range(1..=4) as f64 / 10.0;
        BBox::new(xc, yc, w, h).unwrap()
    };
    let n_gt = rng.gen_range(0..=5);
    let n_det = rng.gen_range(0..=5);
    let gts = (0..n_gt)
        .map(|_| GroundTruthBox {
            bbox: random_box(&mut rng),
            class_id: 0,
            image_id: format!("img{}", rng.gen_range(0..2)),
        })
        .collect();
    let dets = (0..n_det)
        .map(|_| DetectionBox {
            bbox: random_box(&mut rng),
            class_id: 0,
            image_id: format!("img{}", rng.gen_range(0..2)),
            score: rng.gen_range(1..=4) as f64 / 4.0,
        })
        .collect();
    (dets, gts)
}
