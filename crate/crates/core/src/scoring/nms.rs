//! Greedy non-maximum suppression over BEV IoU, ranked by DS score.

use super::iou::bev_iou;
use super::ScoredProposal;
use crate::geometry::OrientedBox3D;

/// Greedy suppression order.
///
/// Candidates are ranked by score descending, then larger BEV area, then
/// lower instance id, then input position. The head is kept and every
/// remaining candidate whose BEV IoU with a kept box exceeds `iou_threshold`
/// is dropped. Returns the kept input positions in selection order.
pub fn nms_indices(boxes: &[OrientedBox3D], scores: &[f64], instance_ids: &[u32], iou_threshold: f64) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len());
    assert_eq!(boxes.len(), instance_ids.len());
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| boxes[b].bev_area().total_cmp(&boxes[a].bev_area()))
            .then_with(|| instance_ids[a].cmp(&instance_ids[b]))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| bev_iou(&boxes[k], &boxes[i]) <= iou_threshold) {
            kept.push(i);
        }
    }
    kept
}

/// Keeps the DS-ranked survivors of greedy suppression, best first.
pub fn nms(proposals: &[ScoredProposal], iou_threshold: f64) -> Vec<ScoredProposal> {
    let boxes: Vec<OrientedBox3D> = proposals.iter().map(|p| p.proposal.bbox).collect();
    let scores: Vec<f64> = proposals.iter().map(|p| p.ds).collect();
    let ids: Vec<u32> = proposals.iter().map(|p| p.proposal.instance_id).collect();
    nms_indices(&boxes, &scores, &ids, iou_threshold)
        .into_iter()
        .map(|i| proposals[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use nalgebra::Vector3;

    fn bx(x: f64, l: f64) -> OrientedBox3D {
        OrientedBox3D::new(Point::new(x, 0.0, 0.0), Vector3::new(l, 1.0, 1.0), 0.0).unwrap()
    }

    #[test]
    fn single_proposal_is_kept() {
        assert_eq!(nms_indices(&[bx(0.0, 1.0)], &[0.1], &[0], 0.1), vec![0]);
    }

    #[test]
    fn identical_boxes_keep_higher_score() {
        assert_eq!(nms_indices(&[bx(0.0, 1.0), bx(0.0, 1.0)], &[0.8, 0.9], &[0, 1], 0.1), vec![1]);
    }

    #[test]
    fn ties_prefer_larger_area_then_lower_id() {
        let boxes = [bx(0.0, 1.0), bx(0.0, 1.2)];
        assert_eq!(nms_indices(&boxes, &[0.5, 0.5], &[0, 1], 0.1), vec![1]);
        let same = [bx(0.0, 1.0), bx(0.0, 1.0)];
        assert_eq!(nms_indices(&same, &[0.5, 0.5], &[7, 3], 0.1), vec![1]);
    }

    #[test]
    fn threshold_is_strict() {
        // IoU exactly 1/3 survives a 1/3 threshold.
        let boxes = [bx(0.0, 1.0), bx(0.5, 1.0)];
        assert_eq!(nms_indices(&boxes, &[0.9, 0.8], &[0, 1], 1.0 / 3.0 + 1e-12).len(), 2);
        assert_eq!(nms_indices(&boxes, &[0.9, 0.8], &[0, 1], 0.3).len(), 1);
    }
}
