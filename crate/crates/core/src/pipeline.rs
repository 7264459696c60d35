//! Batch driver: configuration, per-frame labeling, dataset-level runs and
//! their manifests.
//!
//! Frames are processed on a worker pool. Every frame owns its output files
//! and results are gathered in frame order, so outputs do not depend on the
//! worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cpst::{extract_seed_points, CalibrationSet, CpstError, SeedPointSet};
use crate::dcpg::{generate_proposals, DcpgError, DcpgParams, Proposal};
use crate::eval::{report_from_matches, match_frame, FrameLabels, QualityReport, DEFAULT_THRESHOLDS};
use crate::geometry::{MetaShape, OrientedBox3D, Point, PointCloud};
use crate::io::dataset::read_labeled;
use crate::io::kitti::{format_labels, read_calib, read_point_cloud, LabelRecord};
use crate::io::masks::read_masks;
use crate::io::{DatasetLayout, FrameBundle, IoError};
use crate::scoring::{
    finalize_scores, nms, score_ranges, score_raw, MetaShapeTable, NormalizationScope, RawScored, ScoreError,
    ScoreParams, ScoreRange, ScoredProposal,
};
use crate::synth::{frame_name, sample_scene, SynthConfig, SynthError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Seeds(#[from] CpstError),
    #[error(transparent)]
    Proposals(#[from] DcpgError),
    #[error(transparent)]
    Scoring(#[from] ScoreError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

fn config_err(m: impl Into<String>) -> PipelineError {
    PipelineError::Config(m.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

/// The full run configuration. Every field has a default, so an empty
/// document is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub output: PathBuf,
    /// Mask shrink factor.
    pub gamma: f64,
    pub dcpg: DcpgParams,
    pub scoring: ScoreParams,
    /// Class → reference `[l, w, h]` in meters.
    pub meta_shapes: BTreeMap<String, [f64; 3]>,
    pub workers: usize,
    /// Write the scored proposals of every frame for later re-scoring.
    pub dump_proposals: bool,
    /// Write kept clusters and box corners as plain-text point lists.
    pub export_clusters: bool,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
    /// Frames written by the synth command.
    pub synth_frames: u64,
}

pub fn default_meta_shapes() -> BTreeMap<String, [f64; 3]> {
    BTreeMap::from([
        ("Car".to_string(), [3.9, 1.6, 1.56]),
        ("Pedestrian".to_string(), [0.8, 0.6, 1.73]),
        ("Cyclist".to_string(), [1.76, 0.6, 1.73]),
    ])
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            output: PathBuf::from("out"),
            gamma: 0.3,
            dcpg: DcpgParams::default(),
            scoring: ScoreParams::default(),
            meta_shapes: default_meta_shapes(),
            workers: 1,
            dump_proposals: false,
            export_clusters: false,
            eval: EvalConfig::default(),
            synth: SynthConfig::default(),
            synth_frames: 10,
        }
    }
}

/// Parameters that determine labeling output. Paths, worker count and
/// export switches are excluded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveParams<'a> {
    pub gamma: f64,
    pub dcpg: &'a DcpgParams,
    pub scoring: &'a ScoreParams,
    pub meta_shapes: &'a BTreeMap<String, [f64; 3]>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(CpstError::InvalidShrinkFactor(self.gamma).into());
        }
        self.dcpg.validate()?;
        self.scoring.validate()?;
        self.meta_table()?;
        if self.workers == 0 {
            return Err(config_err("workers must be >= 1"));
        }
        if self.eval.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(config_err("eval thresholds must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn meta_table(&self) -> Result<MetaShapeTable, PipelineError> {
        self.meta_shapes
            .iter()
            .map(|(class, ext)| {
                MetaShape::from_extents(class.clone(), *ext)
                    .map(|m| (class.clone(), m))
                    .map_err(|e| config_err(format!("meta shape `{class}`: {e}")))
            })
            .collect()
    }

    pub fn effective(&self) -> EffectiveParams<'_> {
        EffectiveParams {
            gamma: self.gamma,
            dcpg: &self.dcpg,
            scoring: &self.scoring,
            meta_shapes: &self.meta_shapes,
        }
    }

    /// SHA-256 over the canonical JSON of [`EffectiveParams`].
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(&self.effective()).expect("parameters serialize");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn layout(&self) -> DatasetLayout {
        DatasetLayout::new(&self.dataset)
    }
}

/// Sets `key` (dotted path) in a TOML table. The value is parsed as a TOML
/// value and taken as a bare string when that fails.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), PipelineError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("override `{key}`: `{part}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses a configuration document, applies overrides in order and
/// validates the result.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<PipelineConfig, PipelineError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: PipelineConfig = table.try_into().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig, PipelineError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|source| IoError::Io {
            path: p.to_path_buf(),
            source,
        })?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

/// Seeds, proposals, scores and survivors of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub seeds: Vec<SeedPointSet>,
    pub proposals: usize,
    pub scored: Vec<ScoredProposal>,
    pub kept: Vec<ScoredProposal>,
}

/// Seeds and proposals of one frame.
pub fn frame_proposals(bundle: &FrameBundle, cfg: &PipelineConfig) -> Result<(Vec<SeedPointSet>, Vec<Proposal>), PipelineError> {
    let seeds = extract_seed_points(&bundle.cloud, &bundle.masks, &bundle.calib, cfg.gamma)?;
    let proposals = generate_proposals(&bundle.cloud, &seeds, &cfg.dcpg)?;
    Ok((seeds, proposals))
}

/// Labels one frame with frame-level score normalization.
pub fn label_frame(bundle: &FrameBundle, cfg: &PipelineConfig) -> Result<FrameResult, PipelineError> {
    let metas = cfg.meta_table()?;
    let (seeds, proposals) = frame_proposals(bundle, cfg)?;
    let count = proposals.len();
    let raw = score_raw(proposals, &bundle.cloud, &metas, &cfg.scoring)?;
    let scored = match score_ranges(&raw) {
        Some((dc, msc)) => finalize_scores(raw, dc, msc, &cfg.scoring),
        None => Vec::new(),
    };
    let kept = nms(&scored, cfg.scoring.nms_iou);
    Ok(FrameResult {
        seeds,
        proposals: count,
        scored,
        kept,
    })
}

pub fn label_records(kept: &[ScoredProposal]) -> Vec<LabelRecord> {
    kept.iter()
        .map(|s| LabelRecord {
            class: s.proposal.class.clone(),
            bbox: s.proposal.bbox,
            score: s.ds,
        })
        .collect()
}

/// Serialized proposal, as dumped for re-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalRecord {
    pub instance_id: u32,
    pub class: String,
    pub radius: f64,
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
    pub cluster: Vec<usize>,
}

impl ProposalRecord {
    pub fn from_proposal(p: &Proposal) -> Self {
        let c = p.bbox.center();
        let s = p.bbox.size();
        Self {
            instance_id: p.instance_id,
            class: p.class.clone(),
            radius: p.radius,
            center: [c.x, c.y, c.z],
            size: [s.x, s.y, s.z],
            yaw: p.bbox.yaw(),
            cluster: p.cluster.clone(),
        }
    }

    pub fn to_proposal(&self) -> Result<Proposal, String> {
        let bbox = OrientedBox3D::new(
            Point::new(self.center[0], self.center[1], self.center[2]),
            nalgebra::Vector3::new(self.size[0], self.size[1], self.size[2]),
            self.yaw,
        )
        .map_err(|e| e.to_string())?;
        Ok(Proposal {
            bbox,
            instance_id: self.instance_id,
            class: self.class.clone(),
            radius: self.radius,
            cluster: self.cluster.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameSummary {
    pub frame: String,
    pub seeds: usize,
    pub proposals: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedFrame {
    pub frame: String,
    pub error: String,
}

/// Run record written next to the labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub frames: usize,
    pub proposals: usize,
    pub kept: usize,
    pub failed: Vec<FailedFrame>,
    pub per_frame: Vec<FrameSummary>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Output directory layout of a labeling run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn labels_dir(&self) -> PathBuf {
        self.root.join("label_2")
    }

    pub fn labels(&self, frame: &str) -> PathBuf {
        self.labels_dir().join(format!("{frame}.txt"))
    }

    pub fn proposals_dir(&self) -> PathBuf {
        self.root.join("proposals")
    }

    pub fn proposals(&self, frame: &str) -> PathBuf {
        self.proposals_dir().join(format!("{frame}.json"))
    }

    pub fn clusters_dir(&self) -> PathBuf {
        self.root.join("clusters")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| IoError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| config_err(format!("worker pool: {e}")))
}

/// A frame whose proposals are ready for scoring.
struct StagedFrame {
    frame: String,
    seeds: usize,
    cloud: PointCloud,
    calib: CalibrationSet,
    proposals: Vec<Proposal>,
}

struct RawFrame {
    staged: StagedFrame,
    raw: Vec<RawScored>,
}

fn stage_from_dataset(layout: &DatasetLayout, frame: &str, cfg: &PipelineConfig) -> Result<StagedFrame, PipelineError> {
    let bundle = layout.load(frame, false)?;
    let (seeds, proposals) = frame_proposals(&bundle, cfg)?;
    Ok(StagedFrame {
        frame: frame.to_string(),
        seeds: seeds.iter().map(|s| s.len()).sum(),
        cloud: bundle.cloud,
        calib: bundle.calib,
        proposals,
    })
}

fn stage_from_dump(layout: &DatasetLayout, dump: &Path, frame: &str) -> Result<StagedFrame, PipelineError> {
    let cloud = read_point_cloud(layout.velodyne(frame))?;
    let (size, _) = read_masks(layout.masks(frame))?;
    let calib = read_calib(layout.calib(frame), Some(size))?;
    let path = dump.join(format!("{frame}.json"));
    let text = fs::read_to_string(&path).map_err(|source| IoError::Io {
        path: path.clone(),
        source,
    })?;
    let records: Vec<ProposalRecord> = serde_json::from_str(&text).map_err(|e| IoError::Malformed {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let proposals = records
        .iter()
        .map(|r| r.to_proposal())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|reason| IoError::Malformed { path, reason })?;
    Ok(StagedFrame {
        frame: frame.to_string(),
        seeds: 0,
        cloud,
        calib,
        proposals,
    })
}

/// Scores, normalizes, suppresses and writes every staged frame.
fn finish_run(
    command: &str,
    cfg: &PipelineConfig,
    staged: Vec<Result<StagedFrame, (String, PipelineError)>>,
    dump_proposals: bool,
) -> Result<Manifest, PipelineError> {
    let metas = cfg.meta_table()?;
    let out = OutputLayout {
        root: cfg.output.clone(),
    };
    let pool = thread_pool(cfg.workers)?;

    let raw: Vec<Result<RawFrame, (String, PipelineError)>> = pool.install(|| {
        staged
            .into_par_iter()
            .map(|s| {
                let s = s?;
                let proposals = s.proposals.clone();
                match score_raw(proposals, &s.cloud, &metas, &cfg.scoring) {
                    Ok(raw) => Ok(RawFrame { staged: s, raw }),
                    Err(e) => Err((s.frame.clone(), e.into())),
                }
            })
            .collect()
    });

    let dataset_range: Option<(ScoreRange, ScoreRange)> = match cfg.scoring.normalization {
        NormalizationScope::Frame => None,
        NormalizationScope::Dataset => raw
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .filter_map(|r| score_ranges(&r.raw))
            .reduce(|(a, b), (c, d)| (a.merge(c), b.merge(d))),
    };

    let written: Vec<Result<FrameSummary, (String, PipelineError)>> = pool.install(|| {
        raw.into_par_iter()
            .map(|r| {
                let r = r?;
                let frame = r.staged.frame.clone();
                write_frame(&out, cfg, r, dataset_range, dump_proposals).map_err(|e| (frame, e))
            })
            .collect()
    });

    let mut manifest = Manifest {
        command: command.to_string(),
        config_hash: cfg.config_hash(),
        frames: 0,
        proposals: 0,
        kept: 0,
        failed: Vec::new(),
        per_frame: Vec::new(),
    };
    for w in written {
        match w {
            Ok(s) => {
                manifest.frames += 1;
                manifest.proposals += s.proposals;
                manifest.kept += s.kept;
                manifest.per_frame.push(s);
            }
            Err((frame, e)) => {
                log::error!("frame {frame}: {e}");
                manifest.failed.push(FailedFrame {
                    frame,
                    error: e.to_string(),
                });
            }
        }
    }
    write_file(&out.manifest(), manifest.to_json())?;
    Ok(manifest)
}

fn write_frame(
    out: &OutputLayout,
    cfg: &PipelineConfig,
    r: RawFrame,
    dataset_range: Option<(ScoreRange, ScoreRange)>,
    dump_proposals: bool,
) -> Result<FrameSummary, PipelineError> {
    let RawFrame { staged, raw } = r;
    let proposals = staged.proposals.len();
    let scored = match dataset_range.or_else(|| score_ranges(&raw)) {
        Some((dc, msc)) => finalize_scores(raw, dc, msc, &cfg.scoring),
        None => Vec::new(),
    };
    let kept = nms(&scored, cfg.scoring.nms_iou);
    write_file(&out.labels(&staged.frame), format_labels(&label_records(&kept), &staged.calib))?;
    if dump_proposals {
        let records: Vec<ProposalRecord> = staged.proposals.iter().map(ProposalRecord::from_proposal).collect();
        write_file(
            &out.proposals(&staged.frame),
            serde_json::to_string(&records).expect("proposals serialize"),
        )?;
    }
    if cfg.export_clusters {
        export_clusters(out, &staged.frame, &staged.cloud, &kept)?;
    }
    log::info!("frame {}: {} proposals, {} kept", staged.frame, proposals, kept.len());
    Ok(FrameSummary {
        frame: staged.frame,
        seeds: staged.seeds,
        proposals,
        kept: kept.len(),
    })
}

/// Writes `<frame>_points.txt` (`x y z label`) with the cluster of every
/// kept label and `<frame>_boxes.txt` (`x y z label`) with its 8 corners.
fn export_clusters(out: &OutputLayout, frame: &str, cloud: &PointCloud, kept: &[ScoredProposal]) -> Result<(), IoError> {
    let mut points = String::new();
    let mut corners = String::new();
    for (k, s) in kept.iter().enumerate() {
        for &i in &s.proposal.cluster {
            let p = cloud.point(i);
            let _ = writeln!(points, "{} {} {} {k}", p.x, p.y, p.z);
        }
        for c in s.proposal.bbox.corners() {
            let _ = writeln!(corners, "{} {} {} {k}", c.x, c.y, c.z);
        }
    }
    let dir = out.clusters_dir();
    write_file(&dir.join(format!("{frame}_points.txt")), points)?;
    write_file(&dir.join(format!("{frame}_boxes.txt")), corners)
}

/// Runs seeds → proposals → scores → NMS over every frame of the dataset
/// and writes labels plus `manifest.json` under the output directory.
pub fn cmd_generate(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    let layout = cfg.layout();
    let frames = layout.frames()?;
    log::info!("generating labels for {} frames with {} workers", frames.len(), cfg.workers);
    let pool = thread_pool(cfg.workers)?;
    let staged = pool.install(|| {
        frames
            .par_iter()
            .map(|f| stage_from_dataset(&layout, f, cfg).map_err(|e| (f.clone(), e)))
            .collect()
    });
    finish_run("generate", cfg, staged, cfg.dump_proposals)
}

/// Re-scores proposals dumped by an earlier run (`<dump>/<frame>.json`)
/// with the current scoring parameters.
pub fn cmd_score(cfg: &PipelineConfig, dump: &Path) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    let layout = cfg.layout();
    let mut frames = Vec::new();
    for entry in fs::read_dir(dump).map_err(|source| IoError::Io {
        path: dump.to_path_buf(),
        source,
    })? {
        let path = entry
            .map_err(|source| IoError::Io {
                path: dump.to_path_buf(),
                source,
            })?
            .path();
        if path.extension().is_some_and(|e| e == "json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                frames.push(stem.to_string());
            }
        }
    }
    frames.sort();
    let pool = thread_pool(cfg.workers)?;
    let staged = pool.install(|| {
        frames
            .par_iter()
            .map(|f| stage_from_dump(&layout, dump, f).map_err(|e| (f.clone(), e)))
            .collect()
    });
    finish_run("score", cfg, staged, false)
}

fn txt_stems(dir: &Path) -> Result<BTreeSet<String>, IoError> {
    let mut out = BTreeSet::new();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir).map_err(|source| IoError::Io {
        path: dir.to_path_buf(),
        source,
    })? {
        let path = entry
            .map_err(|source| IoError::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .path();
        if path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string());
            }
        }
    }
    Ok(out)
}

/// Evaluation result plus the frames present on only one side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalOutcome {
    pub report: QualityReport,
    pub missing_labels: Vec<String>,
    pub missing_gt: Vec<String>,
}

/// Frames to evaluate, then frames lacking labels, then frames lacking
/// ground truth.
pub type EvalFrames = (Vec<FrameLabels>, Vec<String>, Vec<String>);

/// Loads both label sets of every common frame into the LiDAR frame.
pub fn load_eval_frames(cfg: &PipelineConfig, labels: &Path, gt: &Path) -> Result<EvalFrames, PipelineError> {
    let have = txt_stems(labels)?;
    let want = txt_stems(gt)?;
    let missing_labels: Vec<String> = want.difference(&have).cloned().collect();
    let missing_gt: Vec<String> = have.difference(&want).cloned().collect();
    if !missing_labels.is_empty() || !missing_gt.is_empty() {
        log::warn!(
            "evaluating {} common frames; {} without labels, {} without ground truth",
            want.intersection(&have).count(),
            missing_labels.len(),
            missing_gt.len()
        );
    }
    let layout = cfg.layout();
    let frames = want
        .intersection(&have)
        .map(|f| {
            let (size, _) = read_masks(layout.masks(f))?;
            let calib = read_calib(layout.calib(f), Some(size))?;
            Ok(FrameLabels {
                frame: f.clone(),
                pseudo: read_labeled(&labels.join(format!("{f}.txt")), &calib)?,
                gt: read_labeled(&gt.join(format!("{f}.txt")), &calib)?,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok((frames, missing_labels, missing_gt))
}

/// Evaluates label files against ground truth on the common frames and
/// writes `eval_report.json` and `eval_table.txt` into `report_dir`.
pub fn cmd_eval(cfg: &PipelineConfig, labels: &Path, gt: &Path, report_dir: &Path) -> Result<EvalOutcome, PipelineError> {
    cfg.validate()?;
    let (frames, missing_labels, missing_gt) = load_eval_frames(cfg, labels, gt)?;
    let pool = thread_pool(cfg.workers)?;
    let matches = pool.install(|| frames.par_iter().map(match_frame).collect());
    let outcome = EvalOutcome {
        report: report_from_matches(matches, &cfg.eval.thresholds),
        missing_labels,
        missing_gt,
    };
    write_file(
        &report_dir.join("eval_report.json"),
        serde_json::to_string_pretty(&outcome).expect("report serializes"),
    )?;
    let mut table = outcome.report.to_table();
    for f in &outcome.missing_labels {
        let _ = writeln!(table, "missing labels: {f}");
    }
    for f in &outcome.missing_gt {
        let _ = writeln!(table, "missing ground truth: {f}");
    }
    write_file(&report_dir.join("eval_table.txt"), table)?;
    Ok(outcome)
}

/// Writes `synth_frames` synthetic frames into the dataset layout. Returns
/// the frame ids.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<Vec<String>, PipelineError> {
    cfg.synth.validate()?;
    let layout = cfg.layout();
    layout.create_dirs()?;
    let pool = thread_pool(cfg.workers.max(1))?;
    pool.install(|| {
        (0..cfg.synth_frames)
            .into_par_iter()
            .map(|i| {
                let scene = sample_scene(&cfg.synth, i)?;
                layout.save(&scene.bundle)?;
                Ok(frame_name(i))
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("", &[]).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!((cfg.gamma, cfg.dcpg.r_init, cfg.dcpg.delta), (0.3, 1.0, 0.1));
        assert_eq!((cfg.scoring.lambda1, cfg.scoring.lambda2, cfg.scoring.nms_iou), (0.5, 0.5, 0.1));
    }

    #[test]
    fn overrides_apply_in_order() {
        let cfg = parse_config(
            "gamma = 0.5\n[dcpg]\nmin_pts = 4\n",
            &["gamma=0.8".into(), "dcpg.r_init = 2".into(), "scoring.normalization=dataset".into()],
        )
        .unwrap();
        assert_eq!(cfg.gamma, 0.8);
        assert_eq!(cfg.dcpg.min_pts, 4);
        assert_eq!(cfg.dcpg.r_init, 2.0);
        assert_eq!(cfg.scoring.normalization, NormalizationScope::Dataset);
        let shape = parse_config("", &["meta_shapes.Van=[5.0, 2.0, 2.2]".into()]).unwrap();
        assert_eq!(shape.meta_shapes["Van"], [5.0, 2.0, 2.2]);
    }

    #[test]
    fn bad_configs_are_rejected() {
        for (text, o) in [
            ("gamma = 1.5", vec![]),
            ("", vec!["gamma=0".to_string()]),
            ("unknown = 1", vec![]),
            ("", vec!["dcpg.nope=1".to_string()]),
            ("", vec!["gamma".to_string()]),
            ("", vec!["gamma.x=1".to_string()]),
            ("[scoring]\nsigma = 0.0", vec![]),
            ("workers = 0", vec![]),
        ] {
            assert!(parse_config(text, &o).is_err(), "{text} {o:?}");
        }
    }

    #[test]
    fn config_hash_tracks_effective_parameters() {
        let base = PipelineConfig::default();
        let h = base.config_hash();
        assert_eq!(h.len(), 64);
        let same = PipelineConfig {
            workers: 8,
            output: "elsewhere".into(),
            dataset: "other".into(),
            export_clusters: true,
            ..base.clone()
        };
        assert_eq!(same.config_hash(), h);
        let mut changed = vec![
            PipelineConfig { gamma: 0.31, ..base.clone() },
            PipelineConfig { meta_shapes: BTreeMap::new(), ..base.clone() },
        ];
        let mut c = base.clone();
        c.dcpg.min_pts = 4;
        changed.push(c);
        let mut c = base.clone();
        c.scoring.normalization = NormalizationScope::Dataset;
        changed.push(c);
        let mut c = base.clone();
        c.scoring.mu = 0.8000000000000001;
        changed.push(c);
        for c in changed {
            assert_ne!(c.config_hash(), h);
        }
    }

    #[test]
    fn proposal_record_round_trip() {
        let p = Proposal {
            bbox: OrientedBox3D::new(Point::new(1.0, 2.0, 0.1), nalgebra::Vector3::new(4.0, 1.7, 1.5), 0.3).unwrap(),
            instance_id: 2,
            class: "Car".into(),
            radius: 0.35,
            cluster: vec![1, 5, 9],
        };
        let json = serde_json::to_string(&ProposalRecord::from_proposal(&p)).unwrap();
        let back: ProposalRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_proposal().unwrap(), p);
    }
}
