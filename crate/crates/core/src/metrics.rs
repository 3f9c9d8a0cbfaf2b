//! Dice, panoptic quality (binary and multi-class), and the brute-force
//! matching oracle used to verify them.
//!
//! Matching pairs instances with IoU strictly above 0.5; such a matching is
//! provably unique. PQ = DQ * SQ with DQ = tp / (tp + fp/2 + fn/2) and
//! SQ the mean IoU over matched pairs. Empty-vs-empty compares as 1.0,
//! one-sided-empty as 0.0.

use crate::maps::{ClassMap, LabelMap, MapError, NUM_CLASSES};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("shape mismatch: gt {gt_h}x{gt_w} vs pred {pred_h}x{pred_w}")]
    ShapeMismatch {
        gt_h: usize,
        gt_w: usize,
        pred_h: usize,
        pred_w: usize,
    },
    #[error("oracle guard exceeded: {0}")]
    OracleGuard(String),
    #[error("misaligned collections: {0}")]
    Misaligned(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Outcome of IoU > 0.5 instance matching.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `(gt id, pred id, iou)` triples, ascending by gt id.
    pub pairs: Vec<(u32, u32, f64)>,
    pub unmatched_gt: Vec<u32>,
    pub unmatched_pred: Vec<u32>,
}

/// Panoptic quality and its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PQScore {
    pub dq: f64,
    pub sq: f64,
    pub pq: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub sum_iou: f64,
}

impl PQScore {
    fn from_stats(tp: usize, fp: usize, fn_: usize, sum_iou: f64) -> PQScore {
        if tp == 0 && fp == 0 && fn_ == 0 {
            // nothing on either side: perfect agreement by convention
            return PQScore {
                dq: 1.0,
                sq: 1.0,
                pq: 1.0,
                tp,
                fp,
                fn_,
                sum_iou,
            };
        }
        let dq = tp as f64 / (tp as f64 + fp as f64 / 2.0 + fn_ as f64 / 2.0);
        let sq = if tp == 0 { 0.0 } else { sum_iou / tp as f64 };
        PQScore {
            dq,
            sq,
            pq: dq * sq,
            tp,
            fp,
            fn_,
            sum_iou,
        }
    }
}

fn check_shapes(gt: &LabelMap, pred: &LabelMap) -> Result<(), MetricError> {
    if gt.height() != pred.height() || gt.width() != pred.width() {
        return Err(MetricError::ShapeMismatch {
            gt_h: gt.height(),
            gt_w: gt.width(),
            pred_h: pred.height(),
            pred_w: pred.width(),
        });
    }
    Ok(())
}

/// Dice overlap of two binary masks; 1.0 when both are empty.
pub fn dice(pred: &[bool], gt: &[bool]) -> Result<f64, MetricError> {
    if pred.len() != gt.len() {
        return Err(MetricError::ShapeMismatch {
            gt_h: gt.len(),
            gt_w: 1,
            pred_h: pred.len(),
            pred_w: 1,
        });
    }
    let mut inter = 0u64;
    let mut a = 0u64;
    let mut b = 0u64;
    for (&p, &g) in pred.iter().zip(gt) {
        a += u64::from(p);
        b += u64::from(g);
        inter += u64::from(p && g);
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (a + b) as f64)
}

/// Dice of the foreground masks of two label maps.
pub fn dice_labels(pred: &LabelMap, gt: &LabelMap) -> Result<f64, MetricError> {
    check_shapes(gt, pred)?;
    let pm: Vec<bool> = pred.data().iter().map(|&v| v != 0).collect();
    let gm: Vec<bool> = gt.data().iter().map(|&v| v != 0).collect();
    dice(&pm, &gm)
}

/// Pairs gt and pred instances with IoU > 0.5.
///
/// Uniqueness of the matching is asserted: no instance can clear the 0.5
/// bar against two partners.
pub fn match_instances(gt: &LabelMap, pred: &LabelMap) -> Result<MatchResult, MetricError> {
    check_shapes(gt, pred)?;
    let gt_count = gt.instance_count() as usize;
    let pred_count = pred.instance_count() as usize;

    let mut gt_area = vec![0u64; gt_count + 1];
    let mut pred_area = vec![0u64; pred_count + 1];
    let mut inter: HashMap<(u32, u32), u64> = HashMap::new();
    for (&g, &p) in gt.data().iter().zip(pred.data()) {
        if g != 0 {
            gt_area[g as usize] += 1;
        }
        if p != 0 {
            pred_area[p as usize] += 1;
        }
        if g != 0 && p != 0 {
            *inter.entry((g, p)).or_insert(0) += 1;
        }
    }

    let mut pairs = Vec::new();
    let mut gt_matched = vec![false; gt_count + 1];
    let mut pred_matched = vec![false; pred_count + 1];
    let mut candidates: Vec<(&(u32, u32), &u64)> = inter.iter().collect();
    candidates.sort_unstable_by_key(|(&(g, p), _)| (g, p));
    for (&(g, p), &overlap) in candidates {
        let union = gt_area[g as usize] + pred_area[p as usize] - overlap;
        let iou = overlap as f64 / union as f64;
        if iou > 0.5 {
            assert!(
                !gt_matched[g as usize] && !pred_matched[p as usize],
                "IoU > 0.5 matching cannot reuse an instance"
            );
            gt_matched[g as usize] = true;
            pred_matched[p as usize] = true;
            pairs.push((g, p, iou));
        }
    }

    let unmatched_gt = (1..=gt_count as u32).filter(|&g| !gt_matched[g as usize]).collect();
    let unmatched_pred = (1..=pred_count as u32)
        .filter(|&p| !pred_matched[p as usize])
        .collect();
    Ok(MatchResult {
        pairs,
        unmatched_gt,
        unmatched_pred,
    })
}

/// Binary panoptic quality: all instances are one class.
pub fn pq(gt: &LabelMap, pred: &LabelMap) -> Result<PQScore, MetricError> {
    let matched = match_instances(gt, pred)?;
    let sum_iou: f64 = matched.pairs.iter().map(|&(_, _, iou)| iou).sum();
    Ok(PQScore::from_stats(
        matched.pairs.len(),
        matched.unmatched_pred.len(),
        matched.unmatched_gt.len(),
        sum_iou,
    ))
}

/// Restricts a label map to instances of one class (by majority vote over
/// the class map), relabelling contiguously.
#[allow(clippy::needless_range_loop)]
fn restrict_to_class(labels: &LabelMap, classes: &ClassMap, class: u8) -> Vec<u32> {
    let count = labels.instance_count() as usize;
    let mut hist = vec![[0usize; NUM_CLASSES]; count + 1];
    for (&id, &cls) in labels.data().iter().zip(classes.data()) {
        if id != 0 {
            hist[id as usize][cls as usize] += 1;
        }
    }
    let mut keep = vec![0u32; count + 1];
    let mut next = 0u32;
    for id in 1..=count {
        let mut best_class = 0usize;
        let mut best_count = 0usize;
        for c in 1..NUM_CLASSES {
            if hist[id][c] > best_count {
                best_count = hist[id][c];
                best_class = c;
            }
        }
        if best_count > 0 && best_class == class as usize {
            next += 1;
            keep[id] = next;
        }
    }
    labels.data().iter().map(|&id| keep[id as usize]).collect()
}

/// One evaluation pair: instance maps plus their class maps.
pub struct EvalPair<'a> {
    pub gt: &'a LabelMap,
    pub gt_classes: &'a ClassMap,
    pub pred: &'a LabelMap,
    pub pred_classes: &'a ClassMap,
}

/// How per-class statistics are reduced across a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MpqMode {
    /// Aggregate tp/fp/fn/sum_iou over all images before dividing.
    #[default]
    Dataset,
    /// Compute per-image per-class PQ and average over images where the
    /// class appears in the ground truth.
    PerImage,
}

/// Multi-class PQ over a dataset.
///
/// Returns one optional score per nuclei class (`None` when the class never
/// appears in any ground truth) and the mean over the present classes.
pub fn mpq_dataset(
    pairs: &[EvalPair<'_>],
    mode: MpqMode,
) -> Result<(Vec<Option<PQScore>>, f64), MetricError> {
    for (i, pair) in pairs.iter().enumerate() {
        if pair.gt.height() != pair.pred.height()
            || pair.gt.width() != pair.pred.width()
            || pair.gt.height() != pair.gt_classes.height()
            || pair.gt.width() != pair.gt_classes.width()
            || pair.pred.height() != pair.pred_classes.height()
            || pair.pred.width() != pair.pred_classes.width()
        {
            return Err(MetricError::Misaligned(format!(
                "pair {i} mixes differently sized maps"
            )));
        }
    }

    let mut per_class: Vec<Option<PQScore>> = vec![None; NUM_CLASSES];
    for class in 1..NUM_CLASSES as u8 {
        let mut present = false;
        // dataset aggregation
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        let mut sum_iou = 0.0f64;
        // per-image aggregation
        let mut image_scores = Vec::new();
        for pair in pairs {
            let gt_c = restrict_to_class(pair.gt, pair.gt_classes, class);
            let pred_c = restrict_to_class(pair.pred, pair.pred_classes, class);
            let gt_map = LabelMap::new(pair.gt.height(), pair.gt.width(), gt_c)?;
            let pred_map = LabelMap::new(pair.pred.height(), pair.pred.width(), pred_c)?;
            let gt_present = gt_map.instance_count() > 0;
            present |= gt_present;
            let matched = match_instances(&gt_map, &pred_map)?;
            tp += matched.pairs.len();
            fp += matched.unmatched_pred.len();
            fn_ += matched.unmatched_gt.len();
            let iou: f64 = matched.pairs.iter().map(|&(_, _, v)| v).sum();
            sum_iou += iou;
            if gt_present {
                image_scores.push(PQScore::from_stats(
                    matched.pairs.len(),
                    matched.unmatched_pred.len(),
                    matched.unmatched_gt.len(),
                    iou,
                ));
            }
        }
        if !present {
            continue;
        }
        per_class[class as usize] = Some(match mode {
            MpqMode::Dataset => PQScore::from_stats(tp, fp, fn_, sum_iou),
            MpqMode::PerImage => {
                let n = image_scores.len() as f64;
                let pq_mean = image_scores.iter().map(|s| s.pq).sum::<f64>() / n;
                let dq_mean = image_scores.iter().map(|s| s.dq).sum::<f64>() / n;
                let sq_mean = image_scores.iter().map(|s| s.sq).sum::<f64>() / n;
                PQScore {
                    dq: dq_mean,
                    sq: sq_mean,
                    pq: pq_mean,
                    tp,
                    fp,
                    fn_,
                    sum_iou,
                }
            }
        });
    }

    let scores: Vec<f64> = per_class.iter().flatten().map(|s| s.pq).collect();
    let mean = if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    Ok((per_class, mean))
}

/// Maximum side length accepted by [`oracle_pq`].
pub const ORACLE_MAX_SIDE: usize = 64;
/// Maximum instance count per side accepted by [`oracle_pq`].
pub const ORACLE_MAX_INSTANCES: u32 = 12;

/// Brute-force PQ: every pairwise IoU by exhaustive pixel enumeration,
/// greedy matching by the IoU > 0.5 rule. Must equal [`pq`] exactly.
pub fn oracle_pq(gt: &LabelMap, pred: &LabelMap) -> Result<PQScore, MetricError> {
    check_shapes(gt, pred)?;
    if gt.height() > ORACLE_MAX_SIDE || gt.width() > ORACLE_MAX_SIDE {
        return Err(MetricError::OracleGuard(format!(
            "map {}x{} exceeds {ORACLE_MAX_SIDE}",
            gt.height(),
            gt.width()
        )));
    }
    let kg = gt.instance_count();
    let kp = pred.instance_count();
    if kg > ORACLE_MAX_INSTANCES || kp > ORACLE_MAX_INSTANCES {
        return Err(MetricError::OracleGuard(format!(
            "instance counts {kg}/{kp} exceed {ORACLE_MAX_INSTANCES}"
        )));
    }

    let pixels = gt.height() * gt.width();
    let mut gt_matched = vec![false; kg as usize + 1];
    let mut pred_matched = vec![false; kp as usize + 1];
    let mut tp = 0usize;
    let mut sum_iou = 0.0f64;
    for g in 1..=kg {
        for p in 1..=kp {
            let mut inter = 0u64;
            let mut union = 0u64;
            for idx in 0..pixels {
                let in_g = gt.data()[idx] == g;
                let in_p = pred.data()[idx] == p;
                inter += u64::from(in_g && in_p);
                union += u64::from(in_g || in_p);
            }
            if union == 0 {
                continue;
            }
            let iou = inter as f64 / union as f64;
            if iou > 0.5 {
                assert!(!gt_matched[g as usize] && !pred_matched[p as usize]);
                gt_matched[g as usize] = true;
                pred_matched[p as usize] = true;
                tp += 1;
                sum_iou += iou;
            }
        }
    }
    let fn_ = (1..=kg).filter(|&g| !gt_matched[g as usize]).count();
    let fp = (1..=kp).filter(|&p| !pred_matched[p as usize]).count();
    Ok(PQScore::from_stats(tp, fp, fn_, sum_iou))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(h: usize, w: usize, data: Vec<u32>) -> LabelMap {
        LabelMap::new(h, w, data).unwrap()
    }

    #[test]
    fn dice_identical_masks() {
        let m = vec![true, false, true, true];
        assert_eq!(dice(&m, &m).unwrap(), 1.0);
    }

    #[test]
    fn dice_half_overlap() {
        // |A| = 4, |B| = 4, |A ∩ B| = 2
        let a = vec![true, true, true, true, false, false];
        let b = vec![true, true, false, false, true, true];
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn dice_both_empty_is_one() {
        assert_eq!(dice(&[false; 4], &[false; 4]).unwrap(), 1.0);
    }

    #[test]
    fn identical_maps_match_fully() {
        #[rustfmt::skip]
        let map = label(3, 3, vec![
            1, 1, 0,
            1, 1, 0,
            0, 0, 2,
        ]);
        let m = match_instances(&map, &map).unwrap();
        assert_eq!(m.pairs.len(), 2);
        assert!(m.pairs.iter().all(|&(_, _, iou)| iou == 1.0));
        assert!(m.unmatched_gt.is_empty() && m.unmatched_pred.is_empty());
        let s = pq(&map, &map).unwrap();
        assert_eq!(s.pq, 1.0);
    }

    #[test]
    fn shifted_block_fails_the_half_bar() {
        // gt block at columns 0-1, pred block at columns 1-2: IoU = 2/6
        let gt = label(2, 3, vec![1, 1, 0, 1, 1, 0]);
        let pred = label(2, 3, vec![0, 1, 1, 0, 1, 1]);
        let m = match_instances(&gt, &pred).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_gt, vec![1]);
        assert_eq!(m.unmatched_pred, vec![1]);
        let s = pq(&gt, &pred).unwrap();
        assert_eq!(s.pq, 0.0);
        assert_eq!(s, oracle_pq(&gt, &pred).unwrap());
    }

    #[test]
    fn empty_pred_counts_false_negatives() {
        #[rustfmt::skip]
        let gt = label(3, 5, vec![
            1, 0, 2, 0, 3,
            0, 0, 0, 0, 0,
            0, 0, 0, 0, 0,
        ]);
        let pred = LabelMap::empty(3, 5).unwrap();
        let m = match_instances(&gt, &pred).unwrap();
        assert_eq!(m.unmatched_gt.len(), 3);
        assert_eq!(pq(&gt, &pred).unwrap().pq, 0.0);
    }

    #[test]
    fn partial_iou_shows_in_sq() {
        // gt 1x5 run, pred covers 4 of 5: IoU = 0.8
        let gt = label(1, 5, vec![1, 1, 1, 1, 1]);
        let pred = label(1, 5, vec![1, 1, 1, 1, 0]);
        let s = pq(&gt, &pred).unwrap();
        assert_eq!(s.tp, 1);
        assert_eq!(s.dq, 1.0);
        assert!((s.sq - 0.8).abs() < 1e-12);
        assert!((s.pq - 0.8).abs() < 1e-12);
    }

    #[test]
    fn empty_conventions() {
        let empty = LabelMap::empty(4, 4).unwrap();
        let one = label(4, 4, {
            let mut d = vec![0; 16];
            d[5] = 1;
            d
        });
        assert_eq!(pq(&empty, &empty).unwrap().pq, 1.0);
        assert_eq!(dice_labels(&empty, &empty).unwrap(), 1.0);
        assert_eq!(pq(&one, &empty).unwrap().pq, 0.0);
        assert_eq!(pq(&empty, &one).unwrap().pq, 0.0);
    }

    #[test]
    fn pq_is_dq_times_sq() {
        let gt = label(1, 8, vec![1, 1, 1, 0, 0, 2, 2, 2]);
        let pred = label(1, 8, vec![1, 1, 1, 0, 0, 0, 0, 0]);
        let s = pq(&gt, &pred).unwrap();
        assert!((s.pq - s.dq * s.sq).abs() < 1e-12);
    }

    #[test]
    fn swapping_sides_swaps_fp_and_fn() {
        let gt = label(1, 8, vec![1, 1, 1, 0, 0, 2, 2, 2]);
        let pred = label(1, 8, vec![1, 1, 1, 0, 0, 0, 0, 0]);
        let a = pq(&gt, &pred).unwrap();
        let b = pq(&pred, &gt).unwrap();
        assert_eq!(a.fp, b.fn_);
        assert_eq!(a.fn_, b.fp);
        assert_eq!(a.pq, b.pq);
    }

    #[test]
    fn mpq_perfect_single_class() {
        let gt = label(2, 4, vec![1, 1, 0, 0, 0, 0, 2, 2]);
        let classes = ClassMap::new(2, 4, vec![1, 1, 0, 0, 0, 0, 1, 1]).unwrap();
        let pairs = [EvalPair {
            gt: &gt,
            gt_classes: &classes,
            pred: &gt,
            pred_classes: &classes,
        }];
        let (per_class, mean) = mpq_dataset(&pairs, MpqMode::Dataset).unwrap();
        assert_eq!(per_class[1].unwrap().pq, 1.0);
        assert!(per_class[2].is_none());
        assert_eq!(mean, 1.0);
    }

    #[test]
    fn mpq_swapped_classes_scores_zero() {
        let gt = label(2, 4, vec![1, 1, 0, 0, 0, 0, 2, 2]);
        let gt_classes = ClassMap::new(2, 4, vec![1, 1, 0, 0, 0, 0, 2, 2]).unwrap();
        // perfect masks, classes exchanged between the two instances
        let pred_classes = ClassMap::new(2, 4, vec![2, 2, 0, 0, 0, 0, 1, 1]).unwrap();
        let pairs = [EvalPair {
            gt: &gt,
            gt_classes: &gt_classes,
            pred: &gt,
            pred_classes: &pred_classes,
        }];
        let (per_class, mean) = mpq_dataset(&pairs, MpqMode::Dataset).unwrap();
        assert_eq!(per_class[1].unwrap().pq, 0.0);
        assert_eq!(per_class[2].unwrap().pq, 0.0);
        assert_eq!(mean, 0.0);
    }

    #[test]
    fn mpq_mean_matches_reported_layout() {
        let scores = [0.596, 0.459, 0.619, 0.251, 0.477];
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        assert!((mean - 0.4804).abs() < 1e-12);
    }

    #[test]
    fn oracle_guard_rejects_large_inputs() {
        let big = LabelMap::empty(65, 65).unwrap();
        assert!(matches!(
            oracle_pq(&big, &big),
            Err(MetricError::OracleGuard(_))
        ));
    }

    #[test]
    fn oracle_agrees_on_identical_and_disjoint() {
        let gt = label(2, 4, vec![1, 1, 0, 0, 0, 0, 2, 2]);
        assert_eq!(oracle_pq(&gt, &gt).unwrap().pq, 1.0);
        let other = label(2, 4, vec![0, 0, 1, 1, 2, 2, 0, 0]);
        assert_eq!(oracle_pq(&gt, &other).unwrap().pq, 0.0);
    }
}
