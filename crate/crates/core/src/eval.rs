//! Pseudo-label quality against ground truth: recall at IoU thresholds and
//! the IoU-bucket histogram.

use std::fmt::Write as _;

use serde::Serialize;

use crate::geometry::OrientedBox3D;
use crate::scoring::bev_intersection_area;

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];
/// Bucket edges: `IoU ≤ 0.5`, `0.5 < IoU < 0.7`, `IoU ≥ 0.7`.
pub const BUCKET_EDGES: [f64; 2] = [0.5, 0.7];

/// 3D IoU: BEV overlap area times vertical overlap, over the union volume.
pub fn iou3d(a: &OrientedBox3D, b: &OrientedBox3D) -> f64 {
    let (a0, a1) = a.z_range();
    let (b0, b1) = b.z_range();
    let dz = a1.min(b1) - a0.max(b0);
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// A box with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBox {
    pub class: String,
    pub bbox: OrientedBox3D,
}

/// Pseudo-labels and ground truth of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabels {
    pub frame: String,
    pub pseudo: Vec<LabeledBox>,
    pub gt: Vec<LabeledBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub pseudo: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMatches {
    pub frame: String,
    pub pairs: Vec<MatchedPair>,
    pub gt_count: usize,
    pub pseudo_count: usize,
}

impl FrameMatches {
    /// IoU of each pseudo-label's match, 0 when unmatched.
    pub fn pseudo_ious(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.pseudo_count];
        for p in &self.pairs {
            out[p.pseudo] = p.iou;
        }
        out
    }
}

/// Greedy one-to-one matching by descending 3D IoU between boxes of the
/// same class. Pairs with zero overlap never match.
pub fn match_frame(frame: &FrameLabels) -> FrameMatches {
    let mut candidates = Vec::new();
    for (i, p) in frame.pseudo.iter().enumerate() {
        for (j, g) in frame.gt.iter().enumerate() {
            if p.class != g.class {
                continue;
            }
            let iou = iou3d(&p.bbox, &g.bbox);
            if iou > 0.0 {
                candidates.push(MatchedPair { pseudo: i, gt: j, iou });
            }
        }
    }
    candidates.sort_by(|a, b| b.iou.total_cmp(&a.iou).then(a.pseudo.cmp(&b.pseudo)).then(a.gt.cmp(&b.gt)));
    let mut pseudo_used = vec![false; frame.pseudo.len()];
    let mut gt_used = vec![false; frame.gt.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !pseudo_used[c.pseudo] && !gt_used[c.gt] {
            pseudo_used[c.pseudo] = true;
            gt_used[c.gt] = true;
            pairs.push(c);
        }
    }
    FrameMatches {
        frame: frame.frame.clone(),
        pairs,
        gt_count: frame.gt.len(),
        pseudo_count: frame.pseudo.len(),
    }
}

pub fn bucket_of(iou: f64) -> usize {
    if iou <= BUCKET_EDGES[0] {
        0
    } else if iou < BUCKET_EDGES[1] {
        1
    } else {
        2
    }
}

/// Percent share of each bucket; all zero for an empty histogram.
pub fn bucket_percentages(counts: [usize; 3]) -> [f64; 3] {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return [0.0; 3];
    }
    counts.map(|c| 100.0 * c as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallAt {
    pub iou: f64,
    pub matched: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub frames: usize,
    pub total_gt: usize,
    pub total_pseudo: usize,
    pub recall: Vec<RecallAt>,
    /// Pseudo-label counts for `IoU ≤ 0.5`, `(0.5, 0.7)`, `≥ 0.7`.
    pub bucket_counts: [usize; 3],
    pub bucket_percent: [f64; 3],
    pub per_frame: Vec<FrameMatches>,
}

impl QualityReport {
    pub fn recall_at(&self, iou: f64) -> Option<f64> {
        self.recall.iter().find(|r| (r.iou - iou).abs() < 1e-12).map(|r| r.recall)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    /// Human-readable tables: recall per threshold and the bucket histogram.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "frames: {}  gt: {}  pseudo-labels: {}", self.frames, self.total_gt, self.total_pseudo);
        let _ = writeln!(s);
        let header: Vec<String> = self.recall.iter().map(|r| format!("@IoU {:.1}", r.iou)).collect();
        let values: Vec<String> = self.recall.iter().map(|r| format!("{:>8.4}", r.recall)).collect();
        let _ = writeln!(s, "{:<10}| {}", "Recall", header.join(" | "));
        let _ = writeln!(s, "{:<10}| {}", "", values.join(" | "));
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<10}| {:>10} | {:>12} | {:>10}", "", "IoU<=0.5", "0.5<IoU<0.7", "IoU>=0.7");
        let c = self.bucket_counts;
        let p = self.bucket_percent;
        let _ = writeln!(s, "{:<10}| {:>10} | {:>12} | {:>10}", "Num.", c[0], c[1], c[2]);
        let _ = writeln!(s, "{:<10}| {:>10.2} | {:>12.2} | {:>10.2}", "Per. (%)", p[0], p[1], p[2]);
        s
    }
}

/// Builds the report from matched frames.
pub fn report_from_matches(per_frame: Vec<FrameMatches>, thresholds: &[f64]) -> QualityReport {
    let total_gt: usize = per_frame.iter().map(|f| f.gt_count).sum();
    let total_pseudo: usize = per_frame.iter().map(|f| f.pseudo_count).sum();
    let recall = thresholds
        .iter()
        .map(|&t| {
            let matched = per_frame.iter().flat_map(|f| &f.pairs).filter(|p| p.iou >= t).count();
            RecallAt {
                iou: t,
                matched,
                recall: if total_gt == 0 { 0.0 } else { matched as f64 / total_gt as f64 },
            }
        })
        .collect();
    let mut bucket_counts = [0usize; 3];
    for iou in per_frame.iter().flat_map(|f| f.pseudo_ious()) {
        bucket_counts[bucket_of(iou)] += 1;
    }
    QualityReport {
        frames: per_frame.len(),
        total_gt,
        total_pseudo,
        recall,
        bucket_counts,
        bucket_percent: bucket_percentages(bucket_counts),
        per_frame,
    }
}

/// Matches every frame and aggregates recall and the bucket histogram.
pub fn match_and_recall(frames: &[FrameLabels], thresholds: &[f64]) -> QualityReport {
    report_from_matches(frames.iter().map(match_frame).collect(), thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, z: f64, s: [f64; 3], yaw: f64) -> OrientedBox3D {
        OrientedBox3D::new(Point::new(x, y, z), Vector3::new(s[0], s[1], s[2]), yaw).unwrap()
    }

    fn car(b: OrientedBox3D) -> LabeledBox {
        LabeledBox {
            class: "Car".into(),
            bbox: b,
        }
    }

    #[test]
    fn iou3d_cases() {
        let a = bx(0.0, 0.0, 0.0, [1.0; 3], 0.0);
        assert!((iou3d(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(iou3d(&a, &bx(0.0, 0.0, 2.0, [1.0; 3], 0.0)), 0.0);
        assert!((iou3d(&a, &bx(0.5, 0.0, 0.0, [1.0; 3], 0.0)) - 1.0 / 3.0).abs() < 1e-12);
        // Half vertical overlap on identical footprints.
        assert!((iou3d(&a, &bx(0.0, 0.0, 0.5, [1.0; 3], 0.0)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identity_gives_full_recall() {
        let gt = vec![car(bx(5.0, 0.0, 0.0, [4.0, 1.8, 1.5], 0.1)), car(bx(15.0, 3.0, 0.0, [4.2, 1.7, 1.4], -0.5))];
        let r = match_and_recall(
            &[FrameLabels {
                frame: "000000".into(),
                pseudo: gt.clone(),
                gt,
            }],
            &DEFAULT_THRESHOLDS,
        );
        assert!(r.recall.iter().all(|x| (x.recall - 1.0).abs() < 1e-12));
        assert_eq!(r.bucket_counts, [0, 0, 2]);
        assert_eq!(r.bucket_percent, [0.0, 0.0, 100.0]);
    }

    #[test]
    fn empty_pseudo_gives_zero_recall() {
        let r = match_and_recall(
            &[FrameLabels {
                frame: "a".into(),
                pseudo: vec![],
                gt: vec![car(bx(5.0, 0.0, 0.0, [4.0, 1.8, 1.5], 0.0))],
            }],
            &DEFAULT_THRESHOLDS,
        );
        assert!(r.recall.iter().all(|x| x.recall == 0.0));
        assert_eq!(r.bucket_counts, [0, 0, 0]);
    }

    #[test]
    fn bucket_percentages_from_counts() {
        let p = bucket_percentages([156, 281, 668]);
        let shown: Vec<String> = p.iter().map(|v| format!("{v:.2}")).collect();
        assert_eq!(shown, ["14.12", "25.43", "60.45"]);
    }

    #[test]
    fn unmatched_pseudo_labels_land_in_lowest_bucket() {
        let g = bx(0.0, 0.0, 0.0, [4.0, 2.0, 1.5], 0.0);
        let frame = FrameLabels {
            frame: "f".into(),
            pseudo: vec![car(g), car(bx(0.2, 0.0, 0.0, [4.0, 2.0, 1.5], 0.0)), car(bx(30.0, 0.0, 0.0, [4.0, 2.0, 1.5], 0.0))],
            gt: vec![car(g)],
        };
        let m = match_frame(&frame);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].pseudo, 0);
        let r = report_from_matches(vec![m], &DEFAULT_THRESHOLDS);
        assert_eq!(r.bucket_counts, [2, 0, 1]);
    }

    #[test]
    fn classes_must_agree() {
        let g = bx(0.0, 0.0, 0.0, [4.0, 2.0, 1.5], 0.0);
        let frame = FrameLabels {
            frame: "f".into(),
            pseudo: vec![LabeledBox {
                class: "Pedestrian".into(),
                bbox: g,
            }],
            gt: vec![car(g)],
        };
        assert!(match_frame(&frame).pairs.is_empty());
    }

    #[test]
    fn table_lists_every_column() {
        let r = report_from_matches(vec![], &DEFAULT_THRESHOLDS);
        let t = r.to_table();
        assert!(t.contains("@IoU 0.3") && t.contains("@IoU 0.7") && t.contains("Per. (%)"));
        assert!(r.to_json().contains("\"bucket_counts\""));
    }

    fn arb_frame() -> impl Strategy<Value = FrameLabels> {
        let arb_box = (0.0..20.0f64, 0.0..20.0f64, 1.0..5.0f64, 1.0..3.0f64, -1.5..1.5f64)
            .prop_map(|(x, y, l, w, yaw)| car(bx(x, y, 0.0, [l, w, 1.5], yaw)));
        (proptest::collection::vec(arb_box.clone(), 0..12), proptest::collection::vec(arb_box, 0..12))
            .prop_map(|(pseudo, gt)| FrameLabels {
                frame: "p".into(),
                pseudo,
                gt,
            })
    }

    proptest! {
        #[test]
        fn report_invariants(frames in proptest::collection::vec(arb_frame(), 1..4)) {
            let r = match_and_recall(&frames, &DEFAULT_THRESHOLDS);
            for f in &r.per_frame {
                let mut ps: Vec<_> = f.pairs.iter().map(|p| p.pseudo).collect();
                let mut gs: Vec<_> = f.pairs.iter().map(|p| p.gt).collect();
                ps.sort();
                ps.dedup();
                gs.sort();
                gs.dedup();
                prop_assert_eq!(ps.len(), f.pairs.len());
                prop_assert_eq!(gs.len(), f.pairs.len());
            }
            prop_assert!(r.recall[0].recall >= r.recall[1].recall && r.recall[1].recall >= r.recall[2].recall);
            prop_assert!(r.recall.iter().all(|x| (0.0..=1.0).contains(&x.recall)));
            prop_assert_eq!(r.bucket_counts.iter().sum::<usize>(), r.total_pseudo);
            if r.total_pseudo > 0 {
                prop_assert!((r.bucket_percent.iter().sum::<f64>() - 100.0).abs() < 0.01);
            }
        }
    }
}
