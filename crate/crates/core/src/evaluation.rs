//! VOC2007 11-point AP at an IoU threshold, for oriented or axis-aligned boxes.
//!
//! Matching is greedy in descending score order (ties keep input order). A
//! detection takes the not-yet-matched ground truth of the same image and
//! category with the highest IoU, provided the IoU reaches the threshold.
//! Difficult ground truths are excluded from the positive count; a detection
//! that lands on one is ignored rather than counted as a false positive, and
//! the difficult box stays available.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::fewshot::SplitSpec;
use crate::geometry::{aabb_iou, obb_to_hbb, rotated_iou, AxisAlignedBox, OrientedBox};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    UnknownCategory { category: u32 },
    InvalidScore { index: usize },
    InvalidThreshold,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::UnknownCategory { category } => write!(f, "unknown category id {category}"),
            EvalError::InvalidScore { index } => write!(f, "detection {index} has a score outside [0, 1]"),
            EvalError::InvalidThreshold => f.write_str("IoU threshold must lie in (0, 1]"),
        }
    }
}

impl core::error::Error for EvalError {}

/// A box in either parameterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoxGeom {
    Oriented(OrientedBox),
    Axis(AxisAlignedBox),
}

impl BoxGeom {
    pub fn to_oriented(&self) -> OrientedBox {
        match self {
            BoxGeom::Oriented(b) => *b,
            BoxGeom::Axis(b) => b.to_oriented(),
        }
    }

    /// The box itself if axis-aligned, otherwise its envelope.
    pub fn to_axis_aligned(&self) -> AxisAlignedBox {
        match self {
            BoxGeom::Oriented(b) => obb_to_hbb(b),
            BoxGeom::Axis(b) => *b,
        }
    }

    fn is_upright(&self) -> bool {
        match self {
            BoxGeom::Oriented(b) => b.angle() == 0.0,
            BoxGeom::Axis(_) => true,
        }
    }
}

impl From<OrientedBox> for BoxGeom {
    fn from(b: OrientedBox) -> Self {
        BoxGeom::Oriented(b)
    }
}

impl From<AxisAlignedBox> for BoxGeom {
    fn from(b: AxisAlignedBox) -> Self {
        BoxGeom::Axis(b)
    }
}

/// How boxes are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum IouMode {
    /// Rotated IoU; axis-aligned inputs are treated as angle-0 boxes.
    #[default]
    Obb,
    /// Axis-aligned IoU; oriented inputs are replaced by their envelopes.
    Hbb,
}

/// IoU of two boxes under `mode`. Two upright boxes use the axis-aligned
/// formula in both modes, so the modes agree bit for bit on such inputs.
pub fn box_iou(a: &BoxGeom, b: &BoxGeom, mode: IouMode) -> f64 {
    if mode == IouMode::Hbb || (a.is_upright() && b.is_upright()) {
        aabb_iou(&a.to_axis_aligned(), &b.to_axis_aligned())
    } else {
        rotated_iou(&a.to_oriented(), &b.to_oriented())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub image: u32,
    pub category: u32,
    pub geom: BoxGeom,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub image: u32,
    pub category: u32,
    pub geom: BoxGeom,
    pub difficult: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    TruePositive,
    FalsePositive,
    /// Matched a difficult ground truth; counts neither way.
    Ignored,
}

/// Detection indices by descending score, ties in input order.
pub fn ranking(detections: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score));
    order
}

/// Labels each detection (returned in input order).
pub fn match_detections(
    detections: &[Detection],
    ground_truths: &[GroundTruth],
    iou_threshold: f64,
    mode: IouMode,
) -> Vec<MatchOutcome> {
    let mut outcome = vec![MatchOutcome::FalsePositive; detections.len()];
    let mut taken = vec![false; ground_truths.len()];
    for i in ranking(detections) {
        let det = &detections[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in ground_truths.iter().enumerate() {
            if taken[g] || gt.image != det.image || gt.category != det.category {
                continue;
            }
            let iou = box_iou(&det.geom, &gt.geom, mode);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, iou)) = best {
            if iou >= iou_threshold {
                if ground_truths[g].difficult {
                    outcome[i] = MatchOutcome::Ignored;
                } else {
                    taken[g] = true;
                    outcome[i] = MatchOutcome::TruePositive;
                }
            }
        }
    }
    outcome
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Cumulative precision and recall after each ranked detection.
/// `outcomes` must already be in rank order; ignored entries are skipped.
/// With no positives every recall is reported as 0.
pub fn precision_recall(outcomes: &[MatchOutcome], total_positives: usize) -> Vec<PrPoint> {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut points = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match o {
            MatchOutcome::TruePositive => tp += 1,
            MatchOutcome::FalsePositive => fp += 1,
            MatchOutcome::Ignored => continue,
        }
        let recall = if total_positives == 0 {
            0.0
        } else {
            tp as f64 / total_positives as f64
        };
        points.push(PrPoint {
            recall,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    points
}

/// 11-point interpolated AP: mean over r = 0, 0.1, ..., 1 of the highest
/// precision at recall ≥ r (0 where no point reaches r).
pub fn average_precision_voc07(points: &[PrPoint]) -> f64 {
    let mut sum = 0.0;
    for t in 0..=10 {
        let r = t as f64 / 10.0;
        let p = points
            .iter()
            .filter(|pt| pt.recall >= r)
            .map(|pt| pt.precision)
            .fold(0.0, f64::max);
        sum += p;
    }
    sum / 11.0
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassAp {
    pub category: u32,
    pub ap: f64,
    /// Non-difficult ground truths.
    pub positives: usize,
    pub detections: usize,
    pub true_positives: usize,
    /// Set when the class has no non-difficult ground truth; AP is then 0.
    pub no_ground_truth: bool,
}

/// AP of one category over all images.
pub fn class_ap(
    category: u32,
    detections: &[Detection],
    ground_truths: &[GroundTruth],
    iou_threshold: f64,
    mode: IouMode,
) -> ClassAp {
    let dets: Vec<Detection> = detections.iter().filter(|d| d.category == category).copied().collect();
    let gts: Vec<GroundTruth> = ground_truths.iter().filter(|g| g.category == category).copied().collect();
    let positives = gts.iter().filter(|g| !g.difficult).count();
    let labels = match_detections(&dets, &gts, iou_threshold, mode);
    let ranked: Vec<MatchOutcome> = ranking(&dets).into_iter().map(|i| labels[i]).collect();
    let true_positives = ranked.iter().filter(|o| **o == MatchOutcome::TruePositive).count();
    let ap = if positives == 0 {
        0.0
    } else {
        average_precision_voc07(&precision_recall(&ranked, positives))
    };
    ClassAp {
        category,
        ap,
        positives,
        detections: dets.len(),
        true_positives,
        no_ground_truth: positives == 0,
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub per_class: Vec<ClassAp>,
    /// `None` when the group is empty.
    pub base_map: Option<f64>,
    pub novel_map: Option<f64>,
    pub all_map: Option<f64>,
}

impl EvalReport {
    pub fn ap(&self, category: u32) -> Option<f64> {
        self.per_class.iter().find(|c| c.category == category).map(|c| c.ap)
    }
}

fn mean_over(per_class: &[ClassAp], ids: &BTreeSet<u32>) -> Option<f64> {
    let aps: Vec<f64> = per_class.iter().filter(|c| ids.contains(&c.category)).map(|c| c.ap).collect();
    if aps.is_empty() {
        None
    } else {
        Some(aps.iter().sum::<f64>() / aps.len() as f64)
    }
}

/// Per-class AP for categories `0..num_categories` and the base, novel and
/// overall means.
pub fn map_report(
    detections: &[Detection],
    ground_truths: &[GroundTruth],
    num_categories: u32,
    split: &SplitSpec,
    iou_threshold: f64,
    mode: IouMode,
) -> Result<EvalReport, EvalError> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(EvalError::InvalidThreshold);
    }
    for (index, d) in detections.iter().enumerate() {
        if d.category >= num_categories {
            return Err(EvalError::UnknownCategory { category: d.category });
        }
        if !(d.score >= 0.0 && d.score <= 1.0) {
            return Err(EvalError::InvalidScore { index });
        }
    }
    if let Some(g) = ground_truths.iter().find(|g| g.category >= num_categories) {
        return Err(EvalError::UnknownCategory { category: g.category });
    }
    if let Some(&c) = split.base.iter().chain(&split.novel).find(|&&c| c >= num_categories) {
        return Err(EvalError::UnknownCategory { category: c });
    }
    let per_class: Vec<ClassAp> = (0..num_categories)
        .map(|c| class_ap(c, detections, ground_truths, iou_threshold, mode))
        .collect();
    let all: BTreeSet<u32> = (0..num_categories).collect();
    Ok(EvalReport {
        base_map: mean_over(&per_class, &split.base),
        novel_map: mean_over(&per_class, &split.novel),
        all_map: mean_over(&per_class, &all),
        per_class,
    })
}
