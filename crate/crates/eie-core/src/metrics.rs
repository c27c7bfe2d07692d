//! Segmentation and lane metrics: per-class IoU / mIoU, pixel F1, lane-point
//! accuracy with a column tolerance, IoU-thresholded lane F1, and row-center
//! lane-coordinate extraction.

use std::io::Write;

use crate::error::{Error, Result};
use crate::field::{Field2D, LabelStack};

/// Per-class true/false positive and false negative pixel counts.
#[derive(Debug, Clone)]
pub struct ConfusionCounts {
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
}

impl ConfusionCounts {
    /// Tallies `pred` (a class-index field, as produced by per-pixel argmax)
    /// against one-hot labels over the non-ignored pixels.
    pub fn from_prediction(pred: &Field2D, gt: &LabelStack) -> Result<Self> {
        pred.same_dims(gt.layer(0), "prediction vs labels")?;
        let n = gt.classes();
        let mut counts = ConfusionCounts {
            tp: vec![0; n],
            fp: vec![0; n],
            fn_: vec![0; n],
        };
        for y in 0..pred.height() {
            for x in 0..pred.width() {
                let Some(truth) = gt.class_index(y, x) else {
                    continue;
                };
                let p = pred.get(y, x);
                if p < 0.0 || p.fract() != 0.0 || p as usize >= n {
                    return Err(Error::InvalidValue(format!(
                        "prediction at ({y}, {x}) is {p}, expected a class index below {n}"
                    )));
                }
                let p = p as usize;
                if p == truth {
                    counts.tp[p] += 1;
                } else {
                    counts.fp[p] += 1;
                    counts.fn_[truth] += 1;
                }
            }
        }
        Ok(counts)
    }

    pub fn iou(&self, class: usize) -> Option<f64> {
        let denom = self.tp[class] + self.fp[class] + self.fn_[class];
        (denom > 0).then(|| self.tp[class] as f64 / denom as f64)
    }
}

/// Per-class IoU (None for classes absent from both inputs) and their
/// unweighted mean over the present classes.
#[derive(Debug, Clone)]
pub struct IouReport {
    pub per_class: Vec<Option<f64>>,
    pub miou: f64,
}

/// IoU per class over non-ignored pixels. A class found in neither the
/// prediction nor the ground truth is excluded from the mean; a class present
/// in only one of them scores 0 and still counts.
pub fn iou_scores(pred: &Field2D, gt: &LabelStack) -> Result<IouReport> {
    let counts = ConfusionCounts::from_prediction(pred, gt)?;
    let per_class: Vec<Option<f64>> = (0..gt.classes()).map(|c| counts.iou(c)).collect();
    let included: Vec<f64> = per_class.iter().flatten().copied().collect();
    let miou = if included.is_empty() {
        0.0
    } else {
        included.iter().sum::<f64>() / included.len() as f64
    };
    Ok(IouReport { per_class, miou })
}

/// Pixelwise F1 between two binary masks (foreground = value > 0.5).
/// Both masks empty scores 1; exactly one empty scores 0.
pub fn pixel_f1(pred: &Field2D, gt: &Field2D) -> Result<f64> {
    pred.same_dims(gt, "pixel_f1 masks")?;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (p, g) in pred.values().iter().zip(gt.values()) {
        match (*p > 0.5, *g > 0.5) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp + fp == 0 && tp + fn_ == 0 {
        return Ok(1.0);
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// One lane as `(row, column)` samples with strictly increasing rows;
/// `None` marks a row where the lane has no pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lane {
    points: Vec<(usize, Option<i64>)>,
}

impl Lane {
    pub fn new(points: Vec<(usize, Option<i64>)>) -> Result<Self> {
        for pair in points.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::InvalidValue(format!(
                    "lane rows must be strictly increasing, got {} then {}",
                    pair[0].0, pair[1].0
                )));
            }
        }
        Ok(Lane { points })
    }

    pub fn points(&self) -> &[(usize, Option<i64>)] {
        &self.points
    }

    pub fn present_points(&self) -> impl Iterator<Item = (usize, i64)> + '_ {
        self.points
            .iter()
            .filter_map(|&(r, c)| c.map(|col| (r, col)))
    }

    fn column_at(&self, row: usize) -> Option<i64> {
        self.points
            .iter()
            .find(|&&(r, _)| r == row)
            .and_then(|&(_, c)| c)
    }
}

/// An ordered set of lanes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LanePoints {
    lanes: Vec<Lane>,
}

impl LanePoints {
    pub fn new(lanes: Vec<Lane>) -> Self {
        LanePoints { lanes }
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn total_present(&self) -> usize {
        self.lanes.iter().map(|l| l.present_points().count()).sum()
    }

    /// Serializes as `lane_id,row,col` rows with -1 for missing columns.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "lane_id,row,col")?;
        for (id, lane) in self.lanes.iter().enumerate() {
            for &(row, col) in lane.points() {
                writeln!(out, "{id},{row},{}", col.unwrap_or(-1))?;
            }
        }
        Ok(())
    }

    /// Parses the `lane_id,row,col` format written by [`Self::write_csv`].
    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some("lane_id,row,col") => {}
            other => {
                return Err(Error::format(
                    0,
                    format!("expected lane_id,row,col header, got {other:?}"),
                ))
            }
        }
        let mut lanes: Vec<Vec<(usize, Option<i64>)>> = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = |what: &str| {
                parts
                    .next()
                    .ok_or_else(|| Error::format(i + 1, format!("missing {what} column")))
            };
            let id: usize = next("lane_id")?
                .parse()
                .map_err(|e| Error::format(i + 1, format!("bad lane_id: {e}")))?;
            let row: usize = next("row")?
                .parse()
                .map_err(|e| Error::format(i + 1, format!("bad row: {e}")))?;
            let col: i64 = next("col")?
                .parse()
                .map_err(|e| Error::format(i + 1, format!("bad col: {e}")))?;
            if id >= lanes.len() {
                lanes.resize(id + 1, Vec::new());
            }
            lanes[id].push((row, (col >= 0).then_some(col)));
        }
        let lanes = lanes
            .into_iter()
            .map(Lane::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(LanePoints::new(lanes))
    }
}

/// Extracts one lane from a per-lane probability map: per row, the midpoint
/// of the thresholded run, `floor((min(S) + max(S)) / 2)` over the columns
/// `S = {x : prob > threshold}`; rows with empty `S` are missing.
pub fn lane_coordinates(prob: &Field2D, threshold: f64) -> Lane {
    let points = (0..prob.height())
        .map(|y| {
            let mut min = None;
            let mut max = None;
            for x in 0..prob.width() {
                if prob.get(y, x) > threshold {
                    min.get_or_insert(x);
                    max = Some(x);
                }
            }
            match (min, max) {
                (Some(lo), Some(hi)) => (y, Some(((lo + hi) / 2) as i64)),
                _ => (y, None),
            }
        })
        .collect();
    Lane::new(points).expect("rows are generated in increasing order")
}

/// Fraction of ground-truth lane points matched by a prediction at the same
/// row within `tol_px` columns. Lanes are compared pairwise in order (match
/// them first, e.g. with [`match_lanes`]); ground-truth lanes without a
/// predicted counterpart count their points as misses. Returns 1 when the
/// ground truth has no points.
pub fn tusimple_accuracy(pred: &LanePoints, gt: &LanePoints, tol_px: usize) -> f64 {
    let total: usize = gt.total_present();
    if total == 0 {
        return 1.0;
    }
    let mut correct = 0usize;
    for (k, gt_lane) in gt.lanes().iter().enumerate() {
        let Some(pred_lane) = pred.lanes().get(k) else {
            continue;
        };
        for (row, gt_col) in gt_lane.present_points() {
            if let Some(pred_col) = pred_lane.column_at(row) {
                if (pred_col - gt_col).unsigned_abs() as usize <= tol_px {
                    correct += 1;
                }
            }
        }
    }
    correct as f64 / total as f64
}

/// Greedily pairs predicted lanes with ground-truth lanes by mean absolute
/// column distance over rows where both are present (unmatchable lanes keep
/// infinity). Returns the predictions reordered to align with `gt`; missing
/// matches become empty lanes.
pub fn match_lanes(pred: &LanePoints, gt: &LanePoints) -> LanePoints {
    let mut dist = vec![vec![f64::INFINITY; pred.lanes().len()]; gt.lanes().len()];
    for (g, gl) in gt.lanes().iter().enumerate() {
        for (p, pl) in pred.lanes().iter().enumerate() {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (row, gc) in gl.present_points() {
                if let Some(pc) = pl.column_at(row) {
                    sum += (pc - gc).abs() as f64;
                    count += 1;
                }
            }
            if count > 0 {
                dist[g][p] = sum / count as f64;
            }
        }
    }
    let mut assigned: Vec<Option<usize>> = vec![None; gt.lanes().len()];
    let mut used = vec![false; pred.lanes().len()];
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for (g, row) in dist.iter().enumerate() {
            if assigned[g].is_some() {
                continue;
            }
            for (p, &d) in row.iter().enumerate() {
                if used[p] || !d.is_finite() {
                    continue;
                }
                if best.map_or(true, |(_, _, bd)| d < bd) {
                    best = Some((g, p, d));
                }
            }
        }
        match best {
            Some((g, p, _)) => {
                assigned[g] = Some(p);
                used[p] = true;
            }
            None => break,
        }
    }
    LanePoints::new(
        assigned
            .into_iter()
            .map(|slot| match slot {
                Some(p) => pred.lanes()[p].clone(),
                None => Lane::new(Vec::new()).unwrap(),
            })
            .collect(),
    )
}

/// Lane-level F1 report at an IoU threshold.
#[derive(Debug, Clone, Copy)]
pub struct LaneF1Report {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub matched: usize,
}

/// Lane-detection F1 where a predicted lane counts as a true positive when
/// its pixel-mask IoU with a greedily matched ground-truth lane reaches
/// `iou_threshold`. This is a mask-level approximation of the official
/// spline-width protocol.
pub fn lane_f1(
    pred_lanes: &[Field2D],
    gt_lanes: &[Field2D],
    iou_threshold: f64,
) -> Result<LaneF1Report> {
    for p in pred_lanes {
        for g in gt_lanes {
            p.same_dims(g, "lane masks")?;
        }
    }
    let mask_iou = |a: &Field2D, b: &Field2D| -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (x, y) in a.values().iter().zip(b.values()) {
            let (fa, fb) = (*x > 0.5, *y > 0.5);
            if fa && fb {
                inter += 1;
            }
            if fa || fb {
                union += 1;
            }
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    };
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (g, gl) in gt_lanes.iter().enumerate() {
        for (p, pl) in pred_lanes.iter().enumerate() {
            pairs.push((g, p, mask_iou(pl, gl)));
        }
    }
    pairs.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
    let mut used_g = vec![false; gt_lanes.len()];
    let mut used_p = vec![false; pred_lanes.len()];
    let mut matched = 0usize;
    for (g, p, iou) in pairs {
        if iou >= iou_threshold && !used_g[g] && !used_p[p] {
            used_g[g] = true;
            used_p[p] = true;
            matched += 1;
        }
    }
    let precision = if pred_lanes.is_empty() {
        if gt_lanes.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        matched as f64 / pred_lanes.len() as f64
    };
    let recall = if gt_lanes.is_empty() {
        1.0
    } else {
        matched as f64 / gt_lanes.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(LaneF1Report {
        f1,
        precision,
        recall,
        matched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn index_field(h: usize, w: usize, idx: &[u32]) -> Field2D {
        Field2D::new(h, w, idx.iter().map(|&v| v as f64).collect()).unwrap()
    }

    #[test]
    fn iou_perfect_prediction() {
        let gt = LabelStack::from_indices(2, 2, 3, &[0, 1, 2, 1], None).unwrap();
        let pred = index_field(2, 2, &[0, 1, 2, 1]);
        let r = iou_scores(&pred, &gt).unwrap();
        assert_eq!(r.per_class, vec![Some(1.0), Some(1.0), Some(1.0)]);
        assert_eq!(r.miou, 1.0);
    }

    #[test]
    fn iou_overlapping_blocks_hand_enumerated() {
        // 4x4 grid: gt block rows 0-1 x cols 0-1, pred block rows 0-1 x cols 1-2.
        // overlap 2 px, union 6 px, IoU = 1/3 for the block class.
        let mut gt_idx = vec![0u32; 16];
        for y in 0..2 {
            for x in 0..2 {
                gt_idx[y * 4 + x] = 1;
            }
        }
        let mut pred_idx = vec![0u32; 16];
        for y in 0..2 {
            for x in 1..3 {
                pred_idx[y * 4 + x] = 1;
            }
        }
        let gt = LabelStack::from_indices(4, 4, 2, &gt_idx, None).unwrap();
        let pred = index_field(4, 4, &pred_idx);
        let r = iou_scores(&pred, &gt).unwrap();
        assert!((r.per_class[1].unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_class_rules() {
        // class 2 exists in gt but is never predicted: IoU 0, still counted.
        let gt = LabelStack::from_indices(1, 4, 3, &[0, 0, 2, 2], None).unwrap();
        let pred = index_field(1, 4, &[0, 0, 0, 0]);
        let r = iou_scores(&pred, &gt).unwrap();
        assert_eq!(r.per_class[2], Some(0.0));
        assert_eq!(r.per_class[1], None, "class 1 absent from both");
        let expect = (0.5 + 0.0) / 2.0;
        assert!((r.miou - expect).abs() < 1e-15);
    }

    #[test]
    fn iou_symmetric_under_class_permutation() {
        let gt_idx = [0u32, 1, 2, 1, 0, 2];
        let pred_idx = [0u32, 2, 2, 1, 1, 0];
        let perm = |v: u32| (v + 1) % 3;
        let gt_a = LabelStack::from_indices(2, 3, 3, &gt_idx, None).unwrap();
        let pred_a = index_field(2, 3, &pred_idx);
        let gt_b = LabelStack::from_indices(2, 3, 3, &gt_idx.map(perm), None).unwrap();
        let pred_b = index_field(2, 3, &pred_idx.map(perm));
        let ra = iou_scores(&pred_a, &gt_a).unwrap();
        let rb = iou_scores(&pred_b, &gt_b).unwrap();
        assert_eq!(ra.miou, rb.miou);
        for c in 0..3 {
            assert_eq!(ra.per_class[c], rb.per_class[perm(c as u32) as usize]);
        }
    }

    #[test]
    fn pixel_f1_cases() {
        let a = Field2D::new(1, 4, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(pixel_f1(&a, &a).unwrap(), 1.0);

        // pred covers gt plus as much again: precision 0.5, recall 1 -> 2/3
        let gt = Field2D::new(1, 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let pred = Field2D::new(1, 4, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((pixel_f1(&pred, &gt).unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let empty = Field2D::zeros(1, 4);
        assert_eq!(pixel_f1(&empty, &empty).unwrap(), 1.0);
        assert_eq!(pixel_f1(&a, &empty).unwrap(), 0.0);
        let disjoint = Field2D::new(1, 4, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(pixel_f1(&a, &disjoint).unwrap(), 0.0);
    }

    #[test]
    fn pixel_f1_is_symmetric() {
        let a = Field2D::new(2, 3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let b = Field2D::new(2, 3, vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(pixel_f1(&a, &b).unwrap(), pixel_f1(&b, &a).unwrap());
    }

    fn lane(points: &[(usize, i64)]) -> Lane {
        Lane::new(points.iter().map(|&(r, c)| (r, Some(c))).collect()).unwrap()
    }

    #[test]
    fn tusimple_basic() {
        let gt = LanePoints::new(vec![lane(&[(0, 10), (2, 12), (4, 14), (6, 16)])]);
        assert_eq!(tusimple_accuracy(&gt, &gt, 0), 1.0);

        // 3 of 4 points within tolerance
        let pred = LanePoints::new(vec![lane(&[(0, 12), (2, 13), (4, 30), (6, 16)])]);
        assert_eq!(tusimple_accuracy(&pred, &gt, 2), 0.75);

        // all rows missing
        let empty = LanePoints::new(vec![Lane::new(vec![(0, None), (2, None)]).unwrap()]);
        assert_eq!(tusimple_accuracy(&empty, &gt, 5), 0.0);

        // empty ground truth
        let no_gt = LanePoints::new(vec![]);
        assert_eq!(tusimple_accuracy(&pred, &no_gt, 5), 1.0);
    }

    #[test]
    fn tusimple_monotone_in_tolerance() {
        let gt = LanePoints::new(vec![lane(&[(0, 10), (1, 10), (2, 10), (3, 10)])]);
        let pred = LanePoints::new(vec![lane(&[(0, 10), (1, 13), (2, 16), (3, 30)])]);
        let mut last = 0.0;
        for tol in 0..25 {
            let acc = tusimple_accuracy(&pred, &gt, tol);
            assert!(acc >= last, "accuracy must not decrease with tolerance");
            last = acc;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn lane_coordinates_rules() {
        let mut prob = Field2D::zeros(3, 8);
        for x in 3..6 {
            prob.set(0, x, 0.9); // run {3,4,5} -> 4
        }
        for x in 2..6 {
            prob.set(2, x, 0.9); // run {2,3,4,5} -> floor(3.5) = 3
        }
        let lane = lane_coordinates(&prob, 0.5);
        assert_eq!(lane.points(), &[(0, Some(4)), (1, None), (2, Some(3))]);

        let empty = lane_coordinates(&Field2D::zeros(2, 4), 0.5);
        assert!(empty.points().iter().all(|&(_, c)| c.is_none()));
    }

    #[test]
    fn lane_coordinates_translation_equivariant() {
        let mut prob = Field2D::zeros(4, 16);
        for y in 0..4 {
            for x in 5..8 {
                prob.set(y, x, 1.0);
            }
        }
        let shifted = Field2D::from_fn(4, 16, |y, x| if x >= 3 { prob.get(y, x - 3) } else { 0.0 });
        let a = lane_coordinates(&prob, 0.5);
        let b = lane_coordinates(&shifted, 0.5);
        for (&(r0, c0), &(r1, c1)) in a.points().iter().zip(b.points()) {
            assert_eq!(r0, r1);
            assert_eq!(c0.map(|c| c + 3), c1);
        }
    }

    #[test]
    fn greedy_matching_reorders_predictions() {
        let gt = LanePoints::new(vec![lane(&[(0, 10), (1, 10)]), lane(&[(0, 30), (1, 30)])]);
        let pred = LanePoints::new(vec![lane(&[(0, 29), (1, 31)]), lane(&[(0, 11), (1, 9)])]);
        let matched = match_lanes(&pred, &gt);
        assert_eq!(matched.lanes()[0].column_at(0), Some(11));
        assert_eq!(matched.lanes()[1].column_at(0), Some(29));
        assert_eq!(tusimple_accuracy(&matched, &gt, 2), 1.0);
    }

    #[test]
    fn lane_f1_matching() {
        let mk = |x0: usize| {
            Field2D::from_fn(
                8,
                8,
                |_, x| if (x0..x0 + 2).contains(&x) { 1.0 } else { 0.0 },
            )
        };
        let gt = [mk(1), mk(5)];
        // one perfect match, one miss
        let pred = [mk(1), mk(3)];
        let r = lane_f1(&pred, &gt, 0.5).unwrap();
        assert_eq!(r.matched, 1);
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.f1, 0.5);
        let perfect = lane_f1(&gt, &gt, 0.5).unwrap();
        assert_eq!(perfect.f1, 1.0);
    }

    #[test]
    fn lane_csv_round_trip() {
        let lanes = LanePoints::new(vec![
            Lane::new(vec![(0, Some(4)), (1, None), (2, Some(6))]).unwrap(),
            lane(&[(0, 9)]),
        ]);
        let mut buf = Vec::new();
        lanes.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("lane_id,row,col\n"));
        let back = LanePoints::read_csv(&text).unwrap();
        assert_eq!(back, lanes);
    }

    proptest! {
        #[test]
        fn f1_swap_symmetry(seed in any::<u64>()) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let a = Field2D::from_fn(5, 5, |_, _| if rng.next_f64() < 0.5 { 1.0 } else { 0.0 });
            let b = Field2D::from_fn(5, 5, |_, _| if rng.next_f64() < 0.5 { 1.0 } else { 0.0 });
            prop_assert_eq!(pixel_f1(&a, &b).unwrap(), pixel_f1(&b, &a).unwrap());
        }
    }
}
