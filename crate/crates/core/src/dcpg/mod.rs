//! Dynamic-radius cluster proposals.
//!
//! For every instance the seed points define a neighborhood of the cloud.
//! That neighborhood is clustered with DBSCAN at a schedule of radii
//! `r_t = r_init · t / N + δ`; at each radius the cluster holding most
//! seeds is boxed, and boxes that keep enough of the seeds inside survive
//! as proposals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod dbscan;
pub mod fit;

pub use dbscan::{clusters, dbscan};
pub use fit::fit_box;

use crate::cpst::SeedPointSet;
use crate::geometry::{OrientedBox3D, Point, PointCloud};

#[derive(Debug, Error, PartialEq)]
pub enum DcpgError {
    #[error("invalid clustering parameter: {0}")]
    InvalidParams(String),
    #[error("radius index {t} outside 1..={n}")]
    RadiusIndex { t: usize, n: usize },
    #[error("degenerate cluster: {0}")]
    DegenerateCluster(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcpgParams {
    /// Largest radius increment, meters.
    pub r_init: f64,
    /// Radius offset keeping the smallest radius away from zero, meters.
    pub delta: f64,
    pub min_pts: usize,
    /// Neighborhood radius around the seed centroid, meters.
    pub neighborhood_radius: f64,
    /// Cap on radii evaluated per instance.
    pub max_radii: usize,
    /// Fraction of the instance's seeds a proposal box must contain.
    pub min_seed_containment: f64,
}

impl Default for DcpgParams {
    fn default() -> Self {
        Self {
            r_init: 1.0,
            delta: 0.1,
            min_pts: 3,
            neighborhood_radius: 8.0,
            max_radii: 16,
            min_seed_containment: 0.5,
        }
    }
}

impl DcpgParams {
    pub fn validate(&self) -> Result<(), DcpgError> {
        let bad = |m: &str| Err(DcpgError::InvalidParams(m.to_string()));
        if !(self.r_init > 0.0 && self.r_init.is_finite()) {
            return bad("r_init must be > 0");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be > 0");
        }
        if self.min_pts < 1 {
            return bad("min_pts must be >= 1");
        }
        if !(self.neighborhood_radius > 0.0 && self.neighborhood_radius.is_finite()) {
            return bad("neighborhood_radius must be > 0");
        }
        if self.max_radii < 1 {
            return bad("max_radii must be >= 1");
        }
        if !(self.min_seed_containment > 0.0 && self.min_seed_containment <= 1.0) {
            return bad("min_seed_containment must lie in (0, 1]");
        }
        Ok(())
    }
}

/// An oriented box candidate for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub bbox: OrientedBox3D,
    pub instance_id: u32,
    pub class: String,
    /// Clustering radius that produced the box, meters.
    pub radius: f64,
    /// Cloud indices of the boxed cluster, ascending.
    pub cluster: Vec<usize>,
}

/// Clustering radius for the `t`-th of `n` seeds: `r_init · t / n + δ`.
pub fn radius_schedule(t: usize, n: usize, r_init: f64, delta: f64) -> Result<f64, DcpgError> {
    if t == 0 || t > n {
        return Err(DcpgError::RadiusIndex { t, n });
    }
    Ok(r_init * t as f64 / n as f64 + delta)
}

/// Seed indices `t` at which radii are evaluated: all of `1..=n` when
/// `n ≤ cap`, otherwise `cap` indices spread uniformly with both endpoints.
pub fn scheduled_indices(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        return (1..=n).collect();
    }
    if cap == 1 {
        return vec![n];
    }
    (0..cap)
        .map(|j| 1 + ((j * (n - 1)) as f64 / (cap - 1) as f64).round() as usize)
        .collect()
}

pub fn seed_centroid(cloud: &PointCloud, seeds: &SeedPointSet) -> Point {
    let sum = seeds.indices.iter().fold(nalgebra::Vector3::zeros(), |acc, &i| acc + cloud.point(i).coords);
    Point::from(sum / seeds.len() as f64)
}

/// Cloud indices within `radius` of the seed centroid, plus the seeds,
/// ascending.
pub fn neighborhood(cloud: &PointCloud, seeds: &SeedPointSet, radius: f64) -> Vec<usize> {
    if seeds.is_empty() {
        return Vec::new();
    }
    let c = seed_centroid(cloud, seeds);
    let r2 = radius * radius;
    let mut out: Vec<usize> = cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| (*p - c).norm_squared() <= r2)
        .map(|(i, _)| i)
        .collect();
    out.extend(seeds.indices.iter().copied());
    out.sort_unstable();
    out.dedup();
    out
}

/// Picks the cluster holding the most seed points; ties go to the larger
/// cluster, then the lower label. `seeds` are positions into `labels`.
/// Returns `None` when every seed is noise.
pub fn select_cluster(labels: &[Option<usize>], seeds: &[usize]) -> Option<usize> {
    let count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut seed_hits = vec![0usize; count];
    let mut sizes = vec![0usize; count];
    for l in labels.iter().flatten() {
        sizes[*l] += 1;
    }
    for &s in seeds {
        if let Some(l) = labels[s] {
            seed_hits[l] += 1;
        }
    }
    (0..count)
        .filter(|&l| seed_hits[l] > 0)
        .max_by(|&a, &b| seed_hits[a].cmp(&seed_hits[b]).then(sizes[a].cmp(&sizes[b])).then(b.cmp(&a)))
}

// Parameters of two boxes closer than this are the same proposal.
const DUPLICATE_TOL: f64 = 1e-6;

/// Proposals for a single instance.
pub fn instance_proposals(cloud: &PointCloud, seeds: &SeedPointSet, params: &DcpgParams) -> Vec<Proposal> {
    let n = seeds.len();
    if n == 0 {
        return Vec::new();
    }
    let hood = neighborhood(cloud, seeds, params.neighborhood_radius);
    let local: Vec<Point> = hood.iter().map(|&i| *cloud.point(i)).collect();
    let seed_pos: Vec<usize> = seeds
        .indices
        .iter()
        .map(|i| hood.binary_search(i).expect("seeds are part of the neighborhood"))
        .collect();

    let mut out: Vec<Proposal> = Vec::new();
    for t in scheduled_indices(n, params.max_radii) {
        let radius = radius_schedule(t, n, params.r_init, params.delta).expect("scheduled index in range");
        let labels = dbscan(&local, radius, params.min_pts);
        let Some(label) = select_cluster(&labels, &seed_pos) else {
            continue;
        };
        let members: Vec<usize> = (0..local.len()).filter(|&k| labels[k] == Some(label)).collect();
        let pts: Vec<Point> = members.iter().map(|&k| local[k]).collect();
        let bbox = match fit_box(&pts) {
            Ok(b) => b,
            Err(e) => {
                log::debug!("instance {} radius {radius:.3}: {e}", seeds.instance_id);
                continue;
            }
        };
        let inside = seeds.indices.iter().filter(|&&i| bbox.contains(cloud.point(i))).count();
        if (inside as f64) < params.min_seed_containment * n as f64 {
            continue;
        }
        if out.iter().any(|p| p.bbox.approx_eq(&bbox, DUPLICATE_TOL)) {
            continue;
        }
        out.push(Proposal {
            bbox,
            instance_id: seeds.instance_id,
            class: seeds.class.clone(),
            radius,
            cluster: members.iter().map(|&k| hood[k]).collect(),
        });
    }
    out
}

/// Proposals for every instance of a frame, in seed-set order.
pub fn generate_proposals(
    cloud: &PointCloud,
    seed_sets: &[SeedPointSet],
    params: &DcpgParams,
) -> Result<Vec<Proposal>, DcpgError> {
    params.validate()?;
    Ok(seed_sets.iter().flat_map(|s| instance_proposals(cloud, s, params)).collect())
}
