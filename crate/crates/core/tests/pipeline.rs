use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use seedbox::cpst::{CalibrationSet, ImageSize, SeedPointSet};
use seedbox::dcpg::{generate_proposals, DcpgParams};
use seedbox::eval::{iou3d, match_and_recall};
use seedbox::geometry::{OrientedBox3D, Point, PointCloud};
use seedbox::io::{DatasetLayout, FrameBundle};
use seedbox::pipeline::{cmd_eval, cmd_generate, cmd_score, cmd_synth, load_eval_frames, PipelineConfig};
use seedbox::synth::{lane_rng, sample_surface};

fn files(dir: &Path) -> BTreeMap<String, String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), String::from_utf8_lossy(&fs::read(&p).unwrap()).into_owned())
        })
        .collect()
}

fn synth_dataset(root: &Path, frames: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        dataset: root.join("data"),
        output: root.join("out"),
        synth_frames: frames,
        ..Default::default()
    };
    cfg.synth.seed = 21;
    cmd_synth(&cfg).unwrap();
    cfg
}

#[test]
fn synth_writes_the_dataset_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_dataset(tmp.path(), 3);
    let data = tmp.path().join("data");
    for (dir, ext) in [("velodyne", "bin"), ("calib", "txt"), ("masks", "json"), ("label_2", "txt")] {
        let names: Vec<String> = files(&data.join(dir)).into_keys().collect();
        assert_eq!(names, ["000000", "000001", "000002"].map(|f| format!("{f}.{ext}")));
    }
    let frame = cfg.layout().load("000001", true).unwrap();
    assert_eq!(frame.calib, cfg.synth.calibration().unwrap());
    assert!(!frame.gt.unwrap().is_empty());
}

#[test]
fn generate_writes_one_label_file_per_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_dataset(tmp.path(), 10);
    let manifest = cmd_generate(&cfg).unwrap();
    assert_eq!(manifest.frames, 10);
    assert!(manifest.failed.is_empty());
    assert_eq!(manifest.per_frame.len(), 10);
    assert_eq!(manifest.proposals, manifest.per_frame.iter().map(|f| f.proposals).sum::<usize>());
    assert_eq!(manifest.kept, manifest.per_frame.iter().map(|f| f.kept).sum::<usize>());
    assert!(manifest.per_frame.iter().all(|f| f.kept <= f.proposals));
    assert_eq!(manifest.config_hash, cfg.config_hash());

    let labels = files(&cfg.output.join("label_2"));
    assert_eq!(labels.len(), 10);
    let lines: usize = labels.values().map(|b| b.lines().count()).sum();
    assert_eq!(lines, manifest.kept);
    let on_disk: serde_json::Value = serde_json::from_slice(&fs::read(cfg.output.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk["kept"], manifest.kept);
}

#[test]
fn generate_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_dataset(tmp.path(), 4);
    cmd_generate(&cfg).unwrap();
    let first = files(&cfg.output.join("label_2"));
    let first_manifest = fs::read(cfg.output.join("manifest.json")).unwrap();
    cmd_generate(&cfg).unwrap();
    assert_eq!(files(&cfg.output.join("label_2")), first);
    assert_eq!(fs::read(cfg.output.join("manifest.json")).unwrap(), first_manifest);
}

#[test]
fn frame_without_masks_gets_an_empty_label_file() {
    let tmp = tempfile::tempdir().unwrap();
    let layout = DatasetLayout::new(tmp.path().join("data"));
    let size = ImageSize::new(50, 80);
    layout
        .save(&FrameBundle {
            frame: "000000".into(),
            cloud: PointCloud::new(vec![Point::new(10.0, 0.0, 0.0); 5]).unwrap(),
            calib: CalibrationSet::forward_pinhole(40.0, 40.0, 25.0, size).unwrap(),
            masks: Vec::new(),
            gt: None,
        })
        .unwrap();
    let cfg = PipelineConfig {
        dataset: layout.root.clone(),
        output: tmp.path().join("out"),
        ..Default::default()
    };
    let m = cmd_generate(&cfg).unwrap();
    assert_eq!((m.frames, m.proposals, m.kept), (1, 0, 0));
    assert_eq!(fs::read(cfg.output.join("label_2/000000.txt")).unwrap(), b"");
}

#[test]
fn broken_frame_is_skipped_and_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_dataset(tmp.path(), 3);
    fs::write(cfg.dataset.join("velodyne/000001.bin"), [0u8; 7]).unwrap();
    let m = cmd_generate(&cfg).unwrap();
    assert_eq!(m.frames, 2);
    assert_eq!(m.failed.len(), 1);
    assert_eq!(m.failed[0].frame, "000001");
    assert!(!cfg.output.join("label_2/000001.txt").exists());
}

#[test]
fn eval_of_ground_truth_is_perfect_and_empty_labels_score_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_dataset(tmp.path(), 3);
    let gt = cfg.dataset.join("label_2");
    let perfect = cmd_eval(&cfg, &gt, &gt, &tmp.path().join("r1")).unwrap();
    assert_eq!(perfect.report.recall_at(0.7), Some(1.0));
    assert_eq!(perfect.report.bucket_percent, [0.0, 0.0, 100.0]);

    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let none = cmd_eval(&cfg, &empty, &gt, &tmp.path().join("r2")).unwrap();
    assert_eq!(none.report.recall_at(0.5), Some(0.0));
    assert_eq!(none.missing_labels.len(), 3);
    assert!(tmp.path().join("r2/eval_table.txt").exists());
}

#[test]
fn eval_command_matches_in_process_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_dataset(tmp.path(), 6);
    cmd_generate(&cfg).unwrap();
    fs::remove_file(cfg.output.join("label_2/000004.txt")).unwrap();
    let labels = cfg.output.join("label_2");
    let gt = cfg.dataset.join("label_2");
    let outcome = cmd_eval(&cfg, &labels, &gt, &cfg.output).unwrap();
    assert_eq!(outcome.missing_labels, ["000004"]);
    let (frames, _, _) = load_eval_frames(&cfg, &labels, &gt).unwrap();
    assert_eq!(outcome.report, match_and_recall(&frames, &cfg.eval.thresholds));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(cfg.output.join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(json["report"]["frames"], 5);
}

#[test]
fn rescoring_dumped_proposals_reproduces_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = synth_dataset(tmp.path(), 3);
    cfg.dump_proposals = true;
    cfg.export_clusters = true;
    let first = cmd_generate(&cfg).unwrap();
    let labels = files(&cfg.output.join("label_2"));
    assert!(cfg.output.join("clusters/000000_points.txt").exists());
    assert!(cfg.output.join("clusters/000000_boxes.txt").exists());

    let rescored = PipelineConfig {
        output: tmp.path().join("rescored"),
        ..cfg.clone()
    };
    let second = cmd_score(&rescored, &cfg.output.join("proposals")).unwrap();
    assert_eq!(second.proposals, first.proposals);
    assert_eq!(files(&rescored.output.join("label_2")), labels);

    let mut looser = rescored.clone();
    looser.scoring.nms_iou = 0.9;
    let third = cmd_score(&looser, &cfg.output.join("proposals")).unwrap();
    assert!(third.kept >= second.kept);
    assert_ne!(third.config_hash, second.config_hash);
}

#[test]
fn isolated_car_is_recovered_from_exact_seeds() {
    let truth = OrientedBox3D::new(Point::new(15.0, 2.0, -0.95), Vector3::new(4.2, 1.7, 1.55), 0.4).unwrap();
    let mut rng = lane_rng(9, 0, 0);
    let cloud = PointCloud::new(sample_surface(&truth, 400, 0.02, &mut rng)).unwrap();
    let seeds = SeedPointSet {
        instance_id: 0,
        class: "Car".into(),
        indices: (0..cloud.len()).collect(),
    };
    let proposals = generate_proposals(&cloud, &[seeds], &DcpgParams::default()).unwrap();
    let best = proposals.iter().map(|p| iou3d(&p.bbox, &truth)).fold(0.0, f64::max);
    assert!(best >= 0.7, "best IoU {best}");
}
