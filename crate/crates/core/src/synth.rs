//! Deterministic synthetic scenes: ground-truth boxes, face-sampled LiDAR
//! points, a forward-looking camera and oracle instance masks.
//!
//! Every random draw comes from a ChaCha stream keyed by
//! `(seed, frame, lane)`, so a scene depends only on the configuration and
//! its frame index, whatever order frames are generated in.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpst::{project_points, CalibrationSet, CpstError, ImageSize, InstanceMask};
use crate::eval::LabeledBox;
use crate::geometry::{GeometryError, OrientedBox3D, Point, PointCloud};
use crate::io::FrameBundle;
use crate::scoring::bev_intersection_area;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("frame {frame}: placed {placed} of {wanted} objects before the rejection budget ran out")]
    SceneTooDense { frame: u64, placed: usize, wanted: usize },
    #[error(transparent)]
    Calibration(#[from] CpstError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Extent distribution of one class: uniform ranges in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: String,
    pub weight: f64,
    pub length: [f64; 2],
    pub width: [f64; 2],
    pub height: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    pub focal: f64,
    pub cu: f64,
    pub cv: f64,
    pub height: usize,
    pub width: usize,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            focal: 721.5377,
            cu: 609.5593,
            cv: 172.854,
            height: 375,
            width: 1242,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Independent objects, disjoint in BEV.
    #[default]
    Scatter,
    /// A near object partly in front of a far one in the image.
    OccludedPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    /// Inclusive range of objects per scene (scatter layout).
    pub objects: [usize; 2],
    pub classes: Vec<ClassSpec>,
    /// Inclusive range of surface points per object.
    pub points_per_object: [usize; 2],
    /// Standard deviation of the surface-normal perturbation, meters.
    pub noise_sigma: f64,
    pub clutter: usize,
    /// Forward extent of object centers, meters.
    pub x_range: [f64; 2],
    /// Lateral extent of object centers, meters.
    pub y_range: [f64; 2],
    /// Height of the ground plane below the sensor.
    pub ground_z: f64,
    /// Minimum BEV gap between objects, meters.
    pub min_separation: f64,
    /// Reject scatter layouts whose projected boxes overlap in the image.
    pub disjoint_in_image: bool,
    pub camera: CameraSpec,
    /// Dilation of the oracle masks, pixels.
    pub mask_margin: usize,
    /// Noisy-mask mode: each mask side grows by up to this fraction of the
    /// mask extent, drawn independently per side. Zero gives clean masks.
    pub mask_inflation: f64,
    pub layout: Layout,
    /// Occluded-pair layout: accepted range of the horizontal image overlap,
    /// as a fraction of the narrower projected box.
    pub pair_overlap: [f64; 2],
    /// Placement attempts per object.
    pub max_attempts: usize,
}

fn default_classes() -> Vec<ClassSpec> {
    vec![
        ClassSpec {
            name: "Car".into(),
            weight: 0.6,
            length: [3.5, 4.6],
            width: [1.5, 1.9],
            height: [1.4, 1.7],
        },
        ClassSpec {
            name: "Pedestrian".into(),
            weight: 0.2,
            length: [0.6, 0.9],
            width: [0.5, 0.7],
            height: [1.6, 1.9],
        },
        ClassSpec {
            name: "Cyclist".into(),
            weight: 0.2,
            length: [1.6, 1.9],
            width: [0.5, 0.7],
            height: [1.6, 1.8],
        },
    ]
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            objects: [1, 5],
            classes: default_classes(),
            points_per_object: [200, 600],
            noise_sigma: 0.02,
            clutter: 40,
            x_range: [8.0, 40.0],
            y_range: [-12.0, 12.0],
            ground_z: -1.73,
            min_separation: 0.5,
            disjoint_in_image: true,
            camera: CameraSpec::default(),
            mask_margin: 2,
            mask_inflation: 0.0,
            layout: Layout::Scatter,
            pair_overlap: [0.05, 0.3],
            max_attempts: 2000,
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<(), SynthError> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(SynthError::InvalidConfig(format!("{name} range {r:?} is empty")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.objects[0] > self.objects[1] {
            return bad(format!("objects range {:?} is empty", self.objects));
        }
        if self.points_per_object[0] == 0 || self.points_per_object[0] > self.points_per_object[1] {
            return bad(format!("points_per_object range {:?} is empty", self.points_per_object));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        if !(self.mask_inflation >= 0.0 && self.mask_inflation.is_finite()) {
            return bad(format!("mask_inflation must be non-negative, got {}", self.mask_inflation));
        }
        if self.min_separation < 0.0 {
            return bad("min_separation must be non-negative".into());
        }
        if self.classes.is_empty() {
            return bad("at least one class is required".into());
        }
        for c in &self.classes {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return bad(format!("class {} needs a positive weight", c.name));
            }
            for (n, r) in [("length", c.length), ("width", c.width), ("height", c.height)] {
                check_range(&format!("{}.{n}", c.name), r)?;
                if r[0] <= 0.0 {
                    return bad(format!("{}.{n} must be positive", c.name));
                }
            }
        }
        check_range("x", self.x_range)?;
        check_range("pair_overlap", self.pair_overlap)?;
        check_range("y", self.y_range)?;
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive".into());
        }
        self.calibration()?;
        Ok(())
    }

    pub fn image_size(&self) -> ImageSize {
        ImageSize::new(self.camera.height, self.camera.width)
    }

    pub fn calibration(&self) -> Result<CalibrationSet, CpstError> {
        let c = &self.camera;
        CalibrationSet::forward_pinhole(c.focal, c.cu, c.cv, self.image_size())
    }
}

const IMAGE_PAD_PX: f64 = 4.0;

const LANE_LAYOUT: u64 = 0;
const LANE_CLUTTER: u64 = 1;
const LANE_MASKS: u64 = 2;
const LANE_OBJECT_BASE: u64 = 16;

/// Independent random stream for one `(seed, frame, lane)` key.
pub fn lane_rng(seed: u64, frame: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame.wrapping_mul(1 << 20) ^ lane);
    rng
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn pick_class<'a>(rng: &mut impl Rng, classes: &'a [ClassSpec]) -> &'a ClassSpec {
    let total: f64 = classes.iter().map(|c| c.weight).sum();
    let mut x = rng.random_range(0.0..total);
    for c in classes {
        if x < c.weight {
            return c;
        }
        x -= c.weight;
    }
    classes.last().unwrap()
}

/// Pixel AABB `[u0, v0, u1, v1]` of the projected corners, or `None` unless
/// every corner lies in front of the camera and inside the image.
fn projected_extent(b: &OrientedBox3D, calib: &CalibrationSet) -> Option<[f64; 4]> {
    let mut acc = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for c in b.corners() {
        let p = calib.project_point(&c);
        if !p.valid {
            return None;
        }
        acc = [acc[0].min(p.u), acc[1].min(p.v), acc[2].max(p.u), acc[3].max(p.v)];
    }
    Some(acc)
}

fn extents_overlap(a: &[f64; 4], b: &[f64; 4], pad: f64) -> bool {
    a[0] - pad <= b[2] + pad && b[0] - pad <= a[2] + pad && a[1] - pad <= b[3] + pad && b[1] - pad <= a[3] + pad
}

fn sample_box(rng: &mut impl Rng, config: &SynthConfig, x: f64, y: f64) -> Result<LabeledBox, SynthError> {
    let class = pick_class(rng, &config.classes);
    let (l, w, h) = (uniform(rng, class.length), uniform(rng, class.width), uniform(rng, class.height));
    let yaw = rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
    let bbox = OrientedBox3D::new(Point::new(x, y, config.ground_z + h / 2.0), Vector3::new(l, w, h), yaw)?;
    Ok(LabeledBox {
        class: class.name.clone(),
        bbox,
    })
}

fn separated(a: &OrientedBox3D, b: &OrientedBox3D, gap: f64) -> bool {
    let grow = |x: &OrientedBox3D| {
        OrientedBox3D::new(*x.center(), x.size() + Vector3::new(gap, gap, 0.0), x.yaw()).expect("grown box is valid")
    };
    bev_intersection_area(&grow(a), &grow(b)) == 0.0
}

fn scatter_layout(config: &SynthConfig, frame: u64, calib: &CalibrationSet) -> Result<Vec<LabeledBox>, SynthError> {
    let mut rng = lane_rng(config.seed, frame, LANE_LAYOUT);
    let wanted = rng.random_range(config.objects[0]..=config.objects[1]);
    // Room for the mask margin and for surface noise leaving the box.
    let pad = config.mask_margin as f64 + IMAGE_PAD_PX;
    let mut placed: Vec<(LabeledBox, [f64; 4])> = Vec::with_capacity(wanted);
    while placed.len() < wanted {
        let mut found = None;
        for _ in 0..config.max_attempts {
            let (x, y) = (uniform(&mut rng, config.x_range), uniform(&mut rng, config.y_range));
            let cand = sample_box(&mut rng, config, x, y)?;
            let Some(extent) = projected_extent(&cand.bbox, calib) else { continue };
            let clear = placed.iter().all(|(o, e)| {
                separated(&o.bbox, &cand.bbox, config.min_separation)
                    && !(config.disjoint_in_image && extents_overlap(e, &extent, pad))
            });
            if clear {
                found = Some((cand, extent));
                break;
            }
        }
        match found {
            Some(f) => placed.push(f),
            None => {
                return Err(SynthError::SceneTooDense {
                    frame,
                    placed: placed.len(),
                    wanted,
                })
            }
        }
    }
    Ok(placed.into_iter().map(|(b, _)| b).collect())
}

/// Horizontal overlap of two pixel extents as a fraction of the narrower.
fn horizontal_overlap(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let inter = a[2].min(b[2]) - a[0].max(b[0]);
    inter.max(0.0) / (a[2] - a[0]).min(b[2] - b[0])
}

/// A far object behind a near one: disjoint in BEV, overlapping at the
/// image edges by a fraction of the narrower projection drawn from
/// `pair_overlap`.
fn occluded_pair_layout(config: &SynthConfig, frame: u64, calib: &CalibrationSet) -> Result<Vec<LabeledBox>, SynthError> {
    let mut rng = lane_rng(config.seed, frame, LANE_LAYOUT);
    for _ in 0..config.max_attempts {
        let x = uniform(&mut rng, [config.x_range[0], (config.x_range[0] + config.x_range[1]) / 2.0]);
        let y = uniform(&mut rng, [config.y_range[0] / 2.0, config.y_range[1] / 2.0]);
        let near = sample_box(&mut rng, config, x, y)?;
        let reach = near.bbox.length().max(near.bbox.width());
        let far_x = x + reach + rng.random_range(1.0..6.0);
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let lateral = side * rng.random_range(0.0..2.0) * reach;
        let far = sample_box(&mut rng, config, far_x, y + lateral)?;
        let (Some(en), Some(ef)) = (projected_extent(&near.bbox, calib), projected_extent(&far.bbox, calib)) else {
            continue;
        };
        let overlap = horizontal_overlap(&en, &ef);
        if separated(&near.bbox, &far.bbox, config.min_separation)
            && overlap >= config.pair_overlap[0]
            && overlap <= config.pair_overlap[1]
        {
            return Ok(vec![near, far]);
        }
    }
    Err(SynthError::SceneTooDense {
        frame,
        placed: 0,
        wanted: 2,
    })
}

/// Box-frame description of one face: outward axis and sign.
const FACES: [(usize, f64); 6] = [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0)];

/// Faces whose outward normal points toward the sensor at the origin.
pub fn visible_faces(b: &OrientedBox3D) -> Vec<(usize, f64)> {
    let half = b.size() / 2.0;
    FACES
        .iter()
        .copied()
        .filter(|&(axis, sign)| {
            let mut n = Vector3::zeros();
            n[axis] = sign;
            let face_center = b.from_box_frame(&(n.component_mul(&half)));
            let world_n = b.from_box_frame(&n) - b.center();
            world_n.dot(&face_center.coords) < 0.0
        })
        .collect()
}

/// Uniform points on the visible faces, perturbed along the face normal by
/// Gaussian noise truncated at 3σ.
pub fn sample_surface(b: &OrientedBox3D, count: usize, sigma: f64, rng: &mut impl Rng) -> Vec<Point> {
    let faces = visible_faces(b);
    let size = b.size();
    let area = |axis: usize| {
        let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
        size[i] * size[j]
    };
    let total: f64 = faces.iter().map(|(a, _)| area(*a)).sum();
    if faces.is_empty() || total <= 0.0 {
        return Vec::new();
    }
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut x = rng.random_range(0.0..total);
        let mut face = *faces.last().unwrap();
        for f in &faces {
            if x < area(f.0) {
                face = *f;
                break;
            }
            x -= area(f.0);
        }
        let (axis, sign) = face;
        let mut local = Vector3::zeros();
        for k in 0..3 {
            local[k] = if k == axis {
                sign * size[k] / 2.0
            } else {
                rng.random_range(-size[k] / 2.0..=size[k] / 2.0)
            };
        }
        let noise = if sigma > 0.0 {
            normal.sample(rng).clamp(-3.0 * sigma, 3.0 * sigma)
        } else {
            0.0
        };
        local[axis] += sign * noise;
        out.push(b.from_box_frame(&local));
    }
    out
}

/// Oracle-mask rendering options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskStyle {
    pub margin: usize,
    pub inflation: f64,
}

/// One mask per ground-truth box: the pixel AABB of that box's projected
/// points, dilated by `margin`. With `inflation > 0` each side additionally
/// grows by an independent uniform fraction of the box extent. Boxes with
/// no point in view get no mask. Mask ids are ground-truth indices.
pub fn render_oracle_masks(
    gt: &[LabeledBox],
    owners: &[Option<usize>],
    cloud: &PointCloud,
    calib: &CalibrationSet,
    style: MaskStyle,
    rng: &mut impl Rng,
) -> Result<Vec<InstanceMask>, CpstError> {
    let size = calib.image_size;
    let mut hulls: Vec<Option<[usize; 4]>> = vec![None; gt.len()];
    for (proj, owner) in project_points(cloud, calib).iter().zip(owners) {
        let (Some(o), Some((u, v))) = (owner, proj.pixel()) else { continue };
        let h = hulls[*o].get_or_insert([u, v, u, v]);
        *h = [h[0].min(u), h[1].min(v), h[2].max(u), h[3].max(v)];
    }
    let mut masks = Vec::new();
    for (i, hull) in hulls.iter().enumerate() {
        let Some([u0, v0, u1, v1]) = *hull else { continue };
        let (du, dv) = ((u1 - u0 + 1) as f64, (v1 - v0 + 1) as f64);
        let grow: [f64; 4] = std::array::from_fn(|_| {
            if style.inflation > 0.0 {
                rng.random_range(0.0..=style.inflation)
            } else {
                0.0
            }
        });
        let m = style.margin as f64;
        let lo = |c: usize, g: f64, ext: f64| (c as f64 - m - (g * ext).round()).max(0.0) as usize;
        let hi = |c: usize, g: f64, ext: f64, limit: usize| ((c as f64 + m + (g * ext).round()) as usize).min(limit - 1);
        let us = (lo(u0, grow[0], du), hi(u1, grow[2], du, size.width));
        let vs = (lo(v0, grow[1], dv), hi(v1, grow[3], dv, size.height));
        masks.push(InstanceMask::from_rect(i as u32, gt[i].class.clone(), size, us, vs)?);
    }
    Ok(masks)
}

/// A synthetic frame with the owning ground-truth index of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub bundle: FrameBundle,
    pub owners: Vec<Option<usize>>,
}

pub fn frame_name(index: u64) -> String {
    format!("{index:06}")
}

pub fn sample_scene(config: &SynthConfig, frame: u64) -> Result<SynthScene, SynthError> {
    config.validate()?;
    let calib = config.calibration()?;
    let gt = match config.layout {
        Layout::Scatter => scatter_layout(config, frame, &calib)?,
        Layout::OccludedPair => occluded_pair_layout(config, frame, &calib)?,
    };

    let mut points = Vec::new();
    let mut owners = Vec::new();
    for (i, obj) in gt.iter().enumerate() {
        let mut rng = lane_rng(config.seed, frame, LANE_OBJECT_BASE + i as u64);
        let n = rng.random_range(config.points_per_object[0]..=config.points_per_object[1]);
        let pts = sample_surface(&obj.bbox, n, config.noise_sigma, &mut rng);
        owners.extend(std::iter::repeat_n(Some(i), pts.len()));
        points.extend(pts);
    }

    let mut rng = lane_rng(config.seed, frame, LANE_CLUTTER);
    let mut added = 0;
    let mut tries = 0;
    while added < config.clutter && tries < config.clutter * 100 {
        tries += 1;
        let p = Point::new(
            uniform(&mut rng, config.x_range),
            uniform(&mut rng, config.y_range),
            uniform(&mut rng, [config.ground_z, config.ground_z + 2.5]),
        );
        if gt.iter().any(|g| g.bbox.contains_with_slack(&p, config.min_separation.max(0.3))) {
            continue;
        }
        points.push(p);
        owners.push(None);
        added += 1;
    }

    let cloud = PointCloud::new(points)?;
    let mut rng = lane_rng(config.seed, frame, LANE_MASKS);
    let masks = render_oracle_masks(
        &gt,
        &owners,
        &cloud,
        &calib,
        MaskStyle {
            margin: config.mask_margin,
            inflation: config.mask_inflation,
        },
        &mut rng,
    )?;
    Ok(SynthScene {
        bundle: FrameBundle {
            frame: frame_name(frame),
            cloud,
            calib,
            masks,
            gt: Some(gt),
        },
        owners,
    })
}
