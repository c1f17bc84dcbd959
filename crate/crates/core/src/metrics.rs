//! Detection evaluation: IoU, greedy confidence-ranked matching, precision /
//! recall curves, all-point interpolated AP and mAP over an IoU sweep.
//!
//! Conventions: matching is per class and per image, IoU thresholds are
//! inclusive (`iou ≥ t`), score ties resolve to the lower input index and
//! IoU ties to the lower ground-truth index. Classes without ground truth are
//! left out of the mAP mean.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Axis-aligned box in normalized center/size form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub xc: f64,
    pub yc: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(xc: f64, yc: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { xc, yc, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Self::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.xc, self.yc, self.w, self.h]
            .iter()
            .all(|v| v.is_finite())
            && (0.0..=1.0).contains(&self.xc)
            && (0.0..=1.0).contains(&self.yc)
            && self.w > 0.0
            && self.h > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidValue(format!("invalid box {self:?}")))
        }
    }

    /// `(x1, y1, x2, y2)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.xc - self.w / 2.0,
            self.yc - self.h / 2.0,
            self.xc + self.w / 2.0,
            self.yc + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub bbox: BBox,
    pub class_id: usize,
    pub image_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionBox {
    pub bbox: BBox,
    pub class_id: usize,
    pub image_id: String,
    pub score: f64,
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchLabel {
    TruePositive,
    FalsePositive,
}

/// Result of [`match_detections`].
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    /// Detection indices in processing (rank) order.
    pub order: Vec<usize>,
    /// Label of each detection, indexed like the input.
    pub labels: Vec<MatchLabel>,
    /// Ground truths left unmatched.
    pub false_negatives: usize,
    pub gt_count: usize,
}

impl MatchOutcome {
    pub fn ranked_labels(&self) -> Vec<MatchLabel> {
        self.order.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn true_positives(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l == MatchLabel::TruePositive)
            .count()
    }

    pub fn false_positives(&self) -> usize {
        self.labels.len() - self.true_positives()
    }
}

/// Detection indices sorted by descending score, ties by ascending index.
pub fn rank_by_score(dets: &[DetectionBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// Greedy matching of single-class detections to ground truth.
///
/// Each detection, in rank order, claims the unmatched same-image ground truth
/// with the highest IoU if that IoU is at least `iou_thresh`; otherwise it is a
/// false positive.
pub fn match_detections(
    dets: &[DetectionBox],
    gts: &[GroundTruthBox],
    iou_thresh: f64,
) -> MatchOutcome {
    let order = rank_by_score(dets);
    let mut taken = vec![false; gts.len()];
    let mut labels = vec![MatchLabel::FalsePositive; dets.len()];
    for &d in &order {
        let det = &dets[d];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] || gt.image_id != det.image_id {
                continue;
            }
            let v = iou(&det.bbox, &gt.bbox);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            if v >= iou_thresh {
                taken[g] = true;
                labels[d] = MatchLabel::TruePositive;
            }
        }
    }
    let matched = taken.iter().filter(|&&t| t).count();
    MatchOutcome {
        order,
        labels,
        false_negatives: gts.len() - matched,
        gt_count: gts.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub gt_count: usize,
}

/// Cumulative precision and recall after each ranked detection. With no
/// ground truth, recall is reported as 0.
pub fn pr_curve(ranked: &[MatchLabel], gt_count: usize) -> PrCurve {
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(ranked.len());
    for (i, l) in ranked.iter().enumerate() {
        if *l == MatchLabel::TruePositive {
            tp += 1;
        }
        let recall = if gt_count == 0 {
            0.0
        } else {
            tp as f64 / gt_count as f64
        };
        points.push(PrPoint {
            recall,
            precision: tp as f64 / (i + 1) as f64,
        });
    }
    PrCurve { points, gt_count }
}

/// All-point interpolated AP: precision is replaced by its running maximum
/// from the right, then integrated exactly over recall increments.
pub fn average_precision(curve: &PrCurve) -> f64 {
    if curve.gt_count == 0 {
        return 0.0;
    }
    let mut envelope: Vec<f64> = curve.points.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, env) in curve.points.iter().zip(&envelope) {
        if p.recall > prev_recall {
            ap += (p.recall - prev_recall) * env;
            prev_recall = p.recall;
        }
    }
    ap.clamp(0.0, 1.0)
}

/// 11-point interpolated AP, kept for comparison with older benchmarks.
pub fn average_precision_11pt(curve: &PrCurve) -> f64 {
    if curve.gt_count == 0 {
        return 0.0;
    }
    (0..=10)
        .map(|k| {
            let r = k as f64 / 10.0;
            curve
                .points
                .iter()
                .filter(|p| p.recall >= r)
                .map(|p| p.precision)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 11.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    AllPoint,
    ElevenPoint,
}

/// AP of one class, paired with its ground-truth count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassAp {
    pub ap: f64,
    pub gt_count: usize,
}

/// Mean over classes that have at least one ground truth.
pub fn mean_ap(per_class: &[ClassAp]) -> Result<f64> {
    let used: Vec<f64> = per_class
        .iter()
        .filter(|c| c.gt_count > 0)
        .map(|c| c.ap)
        .collect();
    if used.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    Ok(used.iter().sum::<f64>() / used.len() as f64)
}

/// `0.50, 0.55, …, 0.95`.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub num_classes: usize,
    pub thresholds: Vec<f64>,
    pub interpolation: Interpolation,
}

impl EvalConfig {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            thresholds: coco_thresholds(),
            interpolation: Interpolation::AllPoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub class_id: usize,
    pub gt_count: usize,
    pub det_count: usize,
    /// AP at each configured threshold.
    pub ap: Vec<f64>,
}

impl ClassReport {
    pub fn ap_mean(&self) -> f64 {
        self.ap.iter().sum::<f64>() / self.ap.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub classes: Vec<ClassReport>,
    /// mAP at each threshold.
    pub map_per_threshold: Vec<f64>,
}

impl EvalReport {
    /// mAP at the first threshold (0.5 for the default sweep).
    pub fn map50(&self) -> f64 {
        self.map_per_threshold[0]
    }

    /// Mean of the per-threshold mAPs.
    pub fn map_sweep_mean(&self) -> f64 {
        self.map_per_threshold.iter().sum::<f64>() / self.map_per_threshold.len() as f64
    }

    /// `key=value` lines: per-class AP, then the summary mAPs.
    pub fn key_values(&self) -> String {
        let mut out = String::new();
        for c in &self.classes {
            let _ = writeln!(out, "class.{}.gt={}", c.class_id, c.gt_count);
            let _ = writeln!(out, "class.{}.dets={}", c.class_id, c.det_count);
            if c.gt_count > 0 {
                let _ = writeln!(out, "class.{}.ap50={:.6}", c.class_id, c.ap[0]);
                let _ = writeln!(out, "class.{}.ap5095={:.6}", c.class_id, c.ap_mean());
            } else {
                let _ = writeln!(out, "class.{}.ap50=na", c.class_id);
                let _ = writeln!(out, "class.{}.ap5095=na", c.class_id);
            }
        }
        let _ = writeln!(out, "map50={:.6}", self.map50());
        let _ = writeln!(out, "map5095={:.6}", self.map_sweep_mean());
        out
    }

    /// Fixed-width table for humans.
    pub fn table(&self, class_names: &[&str]) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>6} {:>6} {:>8} {:>10}",
            "class", "gt", "dets", "AP50", "AP50:95"
        );
        for c in &self.classes {
            let name = class_names
                .get(c.class_id)
                .map_or_else(|| c.class_id.to_string(), |s| s.to_string());
            if c.gt_count > 0 {
                let _ = writeln!(
                    out,
                    "{:<12} {:>6} {:>6} {:>8.4} {:>10.4}",
                    name,
                    c.gt_count,
                    c.det_count,
                    c.ap[0],
                    c.ap_mean()
                );
            } else {
                let _ = writeln!(
                    out,
                    "{:<12} {:>6} {:>6} {:>8} {:>10}",
                    name, 0, c.det_count, "-", "-"
                );
            }
        }
        let _ = writeln!(
            out,
            "{:<12} {:>6} {:>6} {:>8.4} {:>10.4}",
            "all",
            "",
            "",
            self.map50(),
            self.map_sweep_mean()
        );
        out
    }
}

fn class_ap(
    dets: &[DetectionBox],
    gts: &[GroundTruthBox],
    thresh: f64,
    interpolation: Interpolation,
) -> f64 {
    let m = match_detections(dets, gts, thresh);
    let curve = pr_curve(&m.ranked_labels(), gts.len());
    match interpolation {
        Interpolation::AllPoint => average_precision(&curve),
        Interpolation::ElevenPoint => average_precision_11pt(&curve),
    }
}

/// Full evaluation over every class and threshold. `threads > 1` evaluates
/// classes concurrently; results are reduced in class order either way.
pub fn evaluate(
    dets: &[DetectionBox],
    gts: &[GroundTruthBox],
    cfg: &EvalConfig,
    threads: usize,
) -> Result<EvalReport> {
    if cfg.thresholds.is_empty() {
        return Err(Error::Config(
            "at least one IoU threshold is required".into(),
        ));
    }
    if let Some(t) = cfg.thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::Config(format!("IoU threshold {t} outside (0, 1)")));
    }
    for id in dets
        .iter()
        .map(|d| d.class_id)
        .chain(gts.iter().map(|g| g.class_id))
    {
        if id >= cfg.num_classes {
            return Err(Error::InvalidValue(format!(
                "class id {id} out of range for {} classes",
                cfg.num_classes
            )));
        }
    }

    let mut det_by_class: BTreeMap<usize, Vec<DetectionBox>> = BTreeMap::new();
    let mut gt_by_class: BTreeMap<usize, Vec<GroundTruthBox>> = BTreeMap::new();
    for d in dets {
        det_by_class.entry(d.class_id).or_default().push(d.clone());
    }
    for g in gts {
        gt_by_class.entry(g.class_id).or_default().push(g.clone());
    }

    let eval_class = |class_id: usize| {
        let d = det_by_class.get(&class_id).map_or(&[][..], Vec::as_slice);
        let g = gt_by_class.get(&class_id).map_or(&[][..], Vec::as_slice);
        ClassReport {
            class_id,
            gt_count: g.len(),
            det_count: d.len(),
            ap: cfg
                .thresholds
                .iter()
                .map(|&t| class_ap(d, g, t, cfg.interpolation))
                .collect(),
        }
    };
    let classes: Vec<ClassReport> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| {
            (0..cfg.num_classes)
                .into_par_iter()
                .map(eval_class)
                .collect()
        })
    } else {
        (0..cfg.num_classes).map(eval_class).collect()
    };

    let map_per_threshold = (0..cfg.thresholds.len())
        .map(|k| {
            let aps: Vec<ClassAp> = classes
                .iter()
                .map(|c| ClassAp {
                    ap: c.ap[k],
                    gt_count: c.gt_count,
                })
                .collect();
            mean_ap(&aps)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EvalReport {
        thresholds: cfg.thresholds.clone(),
        classes,
        map_per_threshold,
    })
}

/// `(mAP@0.5, mAP@0.5:0.95)` under the default conventions.
pub fn map_sweep(
    dets: &[DetectionBox],
    gts: &[GroundTruthBox],
    num_classes: usize,
) -> Result<(f64, f64)> {
    let r = evaluate(dets, gts, &EvalConfig::new(num_classes), 1)?;
    Ok((r.map50(), r.map_sweep_mean()))
}

fn parse_fields(line: &str) -> Option<Vec<&str>> {
    let content = line.split('#').next().unwrap_or("").trim();
    (!content.is_empty()).then(|| content.split_whitespace().collect())
}

fn num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what} '{s}'"),
    })
}

fn parse_box(f: &[&str], line: usize) -> Result<BBox> {
    let v: Vec<f64> = f
        .iter()
        .map(|s| num(s, line, "coordinate"))
        .collect::<Result<_>>()?;
    BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })
}

/// Parses `image_id class_id xc yc w h` lines.
pub fn parse_ground_truth(text: &str) -> Result<Vec<GroundTruthBox>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let Some(f) = parse_fields(raw) else { continue };
        if f.len() != 6 {
            return Err(Error::Parse {
                line,
                message: format!("expected 6 fields (image class xc yc w h), got {}", f.len()),
            });
        }
        out.push(GroundTruthBox {
            image_id: f[0].to_string(),
            class_id: num(f[1], line, "class id")?,
            bbox: parse_box(&f[2..6], line)?,
        });
    }
    Ok(out)
}

/// Parses `image_id class_id score xc yc w h` lines.
pub fn parse_detections(text: &str) -> Result<Vec<DetectionBox>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let Some(f) = parse_fields(raw) else { continue };
        if f.len() != 7 {
            return Err(Error::Parse {
                line,
                message: format!(
                    "expected 7 fields (image class score xc yc w h), got {}",
                    f.len()
                ),
            });
        }
        let score: f64 = num(f[2], line, "score")?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Parse {
                line,
                message: format!("score {score} outside [0, 1]"),
            });
        }
        out.push(DetectionBox {
            image_id: f[0].to_string(),
            class_id: num(f[1], line, "class id")?,
            score,
            bbox: parse_box(&f[3..7], line)?,
        });
    }
    Ok(out)
}
