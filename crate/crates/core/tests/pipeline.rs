use std::path::Path;

use fluosim::config::{preset, MaskConfig, MotionConfig, SimulationConfig};
use fluosim::io::{read_raw_frame, read_tracks, write_tracks};
use fluosim::motion::read_flow_file;
use fluosim::pipeline::{evaluate, generate, make_flow, GROUND_TRUTH_FILE, MANIFEST_FILE};
use fluosim::{Error, Point};
use fluosim::eval::TrackSet;

fn small(name: &str, dir: &Path) -> SimulationConfig {
    let mut cfg = preset(name).unwrap();
    cfg.image.dims = vec![48, 40];
    cfg.image.frames = 6;
    cfg.scene.particles = 10;
    cfg.scene.min_dist = 3.0;
    cfg.scene.background_voxels_per_blob = Some(400.0);
    cfg.scene.background_size = (4.0, 8.0);
    if let MotionConfig::Springs(p) = &mut cfg.motion {
        p.spacing = 10.0;
    }
    cfg.output.dir = dir.join("out");
    cfg
}

#[test]
fn zero_flow_keeps_a_single_particle_still() {
    let dir = tempfile::tempdir().unwrap();
    let flow = dir.path().join("still.sinflo");
    make_flow(&[48, 40], 5, 0.0, &flow).unwrap();
    let mut cfg = small("hydra-flow", dir.path());
    cfg.scene.particles = 1;
    cfg.motion = MotionConfig::Flow { path: flow };
    let summary = generate(&cfg).unwrap();
    let track = summary.ground_truth.track(0).unwrap();
    assert_eq!(track.len(), 6);
    let p0 = track[&0];
    assert!(track.values().all(|p| *p == p0));
    let (on_disk, dim) = read_tracks(&cfg.output.dir.join(GROUND_TRUTH_FILE)).unwrap();
    assert_eq!(dim, 2);
    assert!((on_disk.track(0).unwrap()[&5] - p0).norm() < 1e-6);
}

#[test]
fn flow_motion_contracts_toward_center() {
    let dir = tempfile::tempdir().unwrap();
    let flow = dir.path().join("c.sinflo");
    make_flow(&[48, 40], 5, 0.05, &flow).unwrap();
    assert_eq!(read_flow_file(&flow).unwrap().len(), 5);
    let mut cfg = small("hydra-flow", dir.path());
    cfg.motion = MotionConfig::Flow { path: flow.clone() };
    let gt = generate(&cfg).unwrap().ground_truth;
    let center = Point::new(23.5, 19.5, 0.0);
    let spread = |t: usize| -> f64 { gt.detections()[t].iter().map(|p| (p - center).norm()).sum() };
    assert!(spread(2) < spread(0));

    // too few flow fields for the requested frames
    cfg.image.frames = 7;
    assert!(matches!(generate(&cfg), Err(Error::Flow(_))));
    // grid mismatch
    cfg.image.frames = 6;
    cfg.image.dims = vec![40, 48];
    assert!(matches!(generate(&cfg), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("springs-2d", dir.path());
    cfg.output.pgm = true;
    let summary = generate(&cfg).unwrap();
    let out = &cfg.output.dir;
    let manifest = std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap();
    assert!(manifest.contains(&format!("config_sha256 = \"{}\"", summary.config_sha256)));
    assert!(manifest.contains("seed = 0"));
    assert!(out.join("images/frame_00005.pgm").exists());
    let (shape, frame) = read_raw_frame(&out.join("images/images.txt"), 5).unwrap();
    assert_eq!(shape.dims(), &[48, 40]);
    assert!(frame.iter().any(|&v| v > 0));

    // the echoed config reproduces the run
    let echoed = SimulationConfig::from_toml(&std::fs::read_to_string(out.join("config.toml")).unwrap()).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn mask_from_image_file() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("mask.pgm");
    let data: Vec<u16> = (0..48 * 40).map(|i| if (i % 48) < 30 { 1000 } else { 0 }).collect();
    fluosim::io::write_pgm16(&img, 48, 40, &data).unwrap();
    let mut cfg = small("springs-2d", dir.path());
    cfg.mask = MaskConfig::File { path: img, threshold: 500.0 };
    let gt = generate(&cfg).unwrap().ground_truth;
    assert!(gt.detections()[0].iter().all(|p| p.x < 30.0));
}

#[test]
fn seeds_change_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("springs-2d", dir.path());
    let a = generate(&cfg).unwrap().ground_truth;
    cfg.seed = 1;
    let b = generate(&cfg).unwrap().ground_truth;
    assert_ne!(a.detections(), b.detections());
}

#[test]
fn evaluate_files() {
    let dir = tempfile::tempdir().unwrap();
    let (gt_path, pred_path, short) = (
        dir.path().join("gt.csv"),
        dir.path().join("pred.csv"),
        dir.path().join("short.csv"),
    );
    let mut gt = TrackSet::new(100);
    let mut pred = TrackSet::new(100);
    for t in 0..100 {
        let a = Point::new(5.0, 5.0 + 0.2 * t as f64, 0.0);
        let b = Point::new(25.0, 5.0 + 0.2 * t as f64, 0.0);
        gt.insert(0, t, a).unwrap();
        gt.insert(1, t, b).unwrap();
        let (ia, ib) = if t < 50 { (0, 1) } else { (1, 0) };
        pred.insert(ia, t, a).unwrap();
        pred.insert(ib, t, b).unwrap();
    }
    write_tracks(&gt_path, &gt, 2).unwrap();
    write_tracks(&pred_path, &pred, 2).unwrap();
    write_tracks(&short, &TrackSet::new(10), 2).unwrap();

    assert_eq!(evaluate(&gt_path, &gt_path, 2.0).unwrap().scores.hota, 1.0);
    let swap = evaluate(&gt_path, &pred_path, 2.0).unwrap();
    // each gt/pred id pair shares 50 of 150 detections
    assert!((swap.scores.ass_a - 1.0 / 3.0).abs() < 1e-12);
    let text = swap.to_toml().unwrap();
    assert!(text.contains("eta = 2.0") && text.contains("[scores]"));

    assert!(evaluate(&gt_path, &gt_path, 0.0).is_err());
    assert!(matches!(
        evaluate(&gt_path, &short, 2.0),
        Err(Error::FrameCountMismatch { gt: 100, pred: 10 })
    ));
}
