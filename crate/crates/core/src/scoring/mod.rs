//! Distribution-shape (DS) scoring of box proposals.
//!
//! Two ground-truth-free priors rate a proposal:
//!
//! - the distribution score: mean Gaussian log-density `ln 𝒩(d | μ, σ)` of
//!   the normalized boundary distance `d` of every point inside the box;
//! - the meta-shape score: `exp(−KL(B_c ‖ B̂))` between the class template's
//!   normalized `(l, w, h)` and the box's.
//!
//! Both channels are min–max normalized over a population (a frame by
//! default) and mixed as `DS = λ1 · s̄_dc + λ2 · s̄_msc`, which then ranks
//! proposals for non-maximum suppression.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod iou;
pub mod nms;

pub use iou::{bev_intersection_area, bev_iou};
pub use nms::{nms, nms_indices};

use crate::dcpg::Proposal;
use crate::geometry::{normalize_shape, MetaShape, OrientedBox3D, Point, PointCloud};

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("invalid scoring parameter: {0}")]
    InvalidParams(String),
    #[error("point lies outside the box")]
    OutsideBox,
    #[error("no cloud point inside the proposal box")]
    EmptyForeground,
    #[error("no meta shape configured for class `{0}`")]
    MissingMeta(String),
}

/// Axes entering the boundary distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceAxes {
    /// Box-frame `x` and `y` only.
    #[default]
    Horizontal,
    /// `x`, `y` and `z`.
    ThreeAxis,
}

/// Population over which raw scores are min–max normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationScope {
    #[default]
    Frame,
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreParams {
    pub mu: f64,
    pub sigma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// BEV IoU above which the lower-ranked proposal is suppressed.
    pub nms_iou: f64,
    pub distance_axes: DistanceAxes,
    pub normalization: NormalizationScope,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            mu: 0.8,
            sigma: 0.2,
            lambda1: 0.5,
            lambda2: 0.5,
            nms_iou: 0.1,
            distance_axes: DistanceAxes::Horizontal,
            normalization: NormalizationScope::Frame,
        }
    }
}

impl ScoreParams {
    pub fn validate(&self) -> Result<(), ScoreError> {
        let bad = |m: &str| Err(ScoreError::InvalidParams(m.to_string()));
        if !self.mu.is_finite() {
            return bad("mu must be finite");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be > 0");
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0 && self.lambda1 + self.lambda2 > 0.0) {
            return bad("lambda1, lambda2 must be >= 0 with a positive sum");
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return bad("nms_iou must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Class name → meta shape.
pub type MetaShapeTable = BTreeMap<String, MetaShape>;

/// A proposal with its raw and normalized channel scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredProposal {
    pub proposal: Proposal,
    pub s_dc: f64,
    pub s_msc: f64,
    pub s_dc_norm: f64,
    pub s_msc_norm: f64,
    pub ds: f64,
}

/// Normalized distance from the box's vertical center axis to its lateral
/// boundary: `max(|x'|/(l/2), |y'|/(w/2))`, 0 on the axis and 1 on a side
/// face. The three-axis variant also includes `|z'|/(h/2)`.
pub fn boundary_distance(p: &Point, b: &OrientedBox3D, axes: DistanceAxes) -> Result<f64, ScoreError> {
    if !b.contains(p) {
        return Err(ScoreError::OutsideBox);
    }
    Ok(normalized_distance(&b.to_box_frame(p), b, axes))
}

fn normalized_distance(q: &nalgebra::Vector3<f64>, b: &OrientedBox3D, axes: DistanceAxes) -> f64 {
    let horizontal = (q.x.abs() / (b.length() / 2.0)).max(q.y.abs() / (b.width() / 2.0));
    let d = match axes {
        DistanceAxes::Horizontal => horizontal,
        DistanceAxes::ThreeAxis => horizontal.max(q.z.abs() / (b.height() / 2.0)),
    };
    d.min(1.0)
}

/// `ln 𝒩(d | μ, σ)`.
pub fn gaussian_log_density(d: f64, mu: f64, sigma: f64) -> f64 {
    let z = (d - mu) / sigma;
    -0.5 * z * z - (sigma * (2.0 * PI).sqrt()).ln()
}

/// Mean Gaussian log-density of the boundary distances of every cloud
/// point inside the box.
pub fn distribution_score(b: &OrientedBox3D, cloud: &PointCloud, params: &ScoreParams) -> Result<f64, ScoreError> {
    let reach2 = (b.size() / 2.0).norm_squared();
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in cloud.points() {
        if (p - b.center()).norm_squared() > reach2 + 1e-9 {
            continue;
        }
        let q = b.to_box_frame(p);
        if q.x.abs() <= b.length() / 2.0 && q.y.abs() <= b.width() / 2.0 && q.z.abs() <= b.height() / 2.0 {
            let d = normalized_distance(&q, b, params.distance_axes);
            sum += gaussian_log_density(d, params.mu, params.sigma);
            count += 1;
        }
    }
    if count == 0 {
        return Err(ScoreError::EmptyForeground);
    }
    Ok(sum / count as f64)
}

/// `KL(reference ‖ candidate)` over three-component shape distributions.
pub fn shape_kl(reference: &[f64; 3], candidate: &[f64; 3]) -> f64 {
    reference
        .iter()
        .zip(candidate)
        .map(|(r, c)| if *r > 0.0 { r * (r / c).ln() } else { 0.0 })
        .sum()
}

/// `exp(−KL(B_c ‖ B̂))`, with both shapes normalized to sum to one.
pub fn meta_shape_score(b: &OrientedBox3D, meta: &MetaShape) -> f64 {
    let shape = normalize_shape([b.length(), b.width(), b.height()]);
    (-shape_kl(&meta.normalized, &shape)).exp()
}

/// Min–max range of one score channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRange {
    pub min: f64,
    pub max: f64,
}

impl ScoreRange {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        values.into_iter().fold(None, |acc, v| {
            Some(match acc {
                None => Self { min: v, max: v },
                Some(r) => Self {
                    min: r.min.min(v),
                    max: r.max.max(v),
                },
            })
        })
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    /// Affine map onto `[0, 1]`; a collapsed range maps everything to 1.
    pub fn normalize(&self, v: f64) -> f64 {
        if self.max > self.min {
            ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        } else {
            1.0
        }
    }
}

/// Min–max normalizes one score channel.
pub fn normalize_scores(values: &[f64]) -> Vec<f64> {
    match ScoreRange::of(values.iter().copied()) {
        Some(r) => values.iter().map(|v| r.normalize(*v)).collect(),
        None => Vec::new(),
    }
}

pub fn ds_score(s_dc_norm: f64, s_msc_norm: f64, lambda1: f64, lambda2: f64) -> f64 {
    lambda1 * s_dc_norm + lambda2 * s_msc_norm
}

/// A proposal with raw channel scores, awaiting normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawScored {
    pub proposal: Proposal,
    pub s_dc: f64,
    pub s_msc: f64,
}

/// Raw channel scores for one proposal.
pub fn score_proposal(
    proposal: Proposal,
    cloud: &PointCloud,
    metas: &MetaShapeTable,
    params: &ScoreParams,
) -> Result<RawScored, ScoreError> {
    let meta = metas
        .get(&proposal.class)
        .ok_or_else(|| ScoreError::MissingMeta(proposal.class.clone()))?;
    let s_dc = distribution_score(&proposal.bbox, cloud, params)?;
    let s_msc = meta_shape_score(&proposal.bbox, meta);
    Ok(RawScored { proposal, s_dc, s_msc })
}

/// Channel ranges of a scored population.
pub fn score_ranges(raw: &[RawScored]) -> Option<(ScoreRange, ScoreRange)> {
    Some((
        ScoreRange::of(raw.iter().map(|r| r.s_dc))?,
        ScoreRange::of(raw.iter().map(|r| r.s_msc))?,
    ))
}

/// Normalizes against the given channel ranges and mixes the DS score.
pub fn finalize_scores(raw: Vec<RawScored>, dc: ScoreRange, msc: ScoreRange, params: &ScoreParams) -> Vec<ScoredProposal> {
    raw.into_iter()
        .map(|r| {
            let s_dc_norm = dc.normalize(r.s_dc);
            let s_msc_norm = msc.normalize(r.s_msc);
            ScoredProposal {
                ds: ds_score(s_dc_norm, s_msc_norm, params.lambda1, params.lambda2),
                proposal: r.proposal,
                s_dc: r.s_dc,
                s_msc: r.s_msc,
                s_dc_norm,
                s_msc_norm,
            }
        })
        .collect()
}

/// Scores one frame's proposals with frame-level normalization. Proposals
/// without foreground points are dropped; a missing meta shape is an error.
pub fn score_frame(
    proposals: Vec<Proposal>,
    cloud: &PointCloud,
    metas: &MetaShapeTable,
    params: &ScoreParams,
) -> Result<Vec<ScoredProposal>, ScoreError> {
    let raw = score_raw(proposals, cloud, metas, params)?;
    Ok(match score_ranges(&raw) {
        Some((dc, msc)) => finalize_scores(raw, dc, msc, params),
        None => Vec::new(),
    })
}

/// Raw scores for a frame; empty-foreground proposals are dropped.
pub fn score_raw(
    proposals: Vec<Proposal>,
    cloud: &PointCloud,
    metas: &MetaShapeTable,
    params: &ScoreParams,
) -> Result<Vec<RawScored>, ScoreError> {
    params.validate()?;
    let mut out = Vec::with_capacity(proposals.len());
    for p in proposals {
        match score_proposal(p, cloud, metas, params) {
            Ok(r) => out.push(r),
            Err(ScoreError::EmptyForeground) => log::debug!("dropping proposal with empty foreground"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
