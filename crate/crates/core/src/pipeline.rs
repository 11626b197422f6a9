//! Generate and evaluate runs end to end.
//!
//! Output layout of `generate`:
//! `config.toml`, `manifest.toml`, `ground_truth.csv` and `images/` (raw
//! frames plus `images.txt`).

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{MaskConfig, MotionConfig, SimulationConfig};
use crate::error::{Error, Result};
use crate::eval::{hota, HotaScores, TrackSet};
use crate::io::{load_gray_image, read_tracks, sha256_hex, FrameWriter, TrackCsvWriter};
use crate::motion::{build_control_grid, write_flow_file, FlowField, FlowReader, SpringMotion};
use crate::render::{background_gain, mix, quantize_u16, render_profiles, shot_noise, NoiseParams};
use crate::rng::stream;
use crate::scene::{init_scene, load_mask, sample_ellipse_mask, step_scene, AnimalMask, Deformation};
use crate::shape::GridShape;
use crate::VERSION;

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub ground_truth: TrackSet,
    pub config_sha256: String,
    pub background_gain: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    seed: u64,
    config_file: &'a str,
    config_sha256: &'a str,
    frames: usize,
    particles: usize,
    background_blobs: usize,
    background_gain: f64,
}

fn build_mask(config: &SimulationConfig) -> Result<AnimalMask> {
    match &config.mask {
        MaskConfig::Ellipse { coverage } => {
            sample_ellipse_mask(&config.image.dims, *coverage, &mut stream(config.seed, "mask", 0))
        }
        MaskConfig::File { path, threshold } => {
            let (shape, values) = load_gray_image(path)?;
            if shape.dims() != config.image.dims.as_slice() {
                return Err(Error::DimensionMismatch {
                    expected: format!("mask image {:?}", config.image.dims),
                    got: format!("{:?}", shape.dims()),
                });
            }
            load_mask(&shape, &values, *threshold)
        }
    }
}

enum Motion {
    Springs(Box<SpringMotion>),
    Flow(FlowReader<std::io::BufReader<std::fs::File>>),
}

/// Run the full simulation described by `config` and write it to
/// `config.output.dir`.
pub fn generate(config: &SimulationConfig) -> Result<RunSummary> {
    config.validate()?;
    let seed = config.seed;
    let shape = GridShape::new(&config.image.dims)?;
    let dim = shape.ndim();
    let frames = config.image.frames;
    let tau = config.dynamics.tau;

    let mask = build_mask(config)?;
    let mut motion = match &config.motion {
        MotionConfig::Springs(p) => {
            let grid = build_control_grid(&mask, p.spacing, tau)?;
            Motion::Springs(Box::new(SpringMotion::new(grid, p.clone())?))
        }
        MotionConfig::Flow { path } => {
            let reader = FlowReader::open(path)?;
            if reader.shape() != &shape {
                return Err(Error::DimensionMismatch {
                    expected: format!("flow grid {:?}", shape.dims()),
                    got: format!("{:?}", reader.shape().dims()),
                });
            }
            if reader.frame_count() + 1 < frames {
                return Err(Error::Flow(format!(
                    "{} frames need {} flow fields, file has {}",
                    frames,
                    frames - 1,
                    reader.frame_count()
                )));
            }
            Motion::Flow(reader)
        }
    };
    let mut scene = init_scene(mask, &config.scene, tau, &mut stream(seed, "scene", 0))?;

    let out = &config.output.dir;
    std::fs::create_dir_all(out)?;
    let config_text = config.to_toml()?;
    std::fs::write(out.join(CONFIG_FILE), &config_text)?;
    let config_sha256 = sha256_hex(config_text.as_bytes());

    let mut gt_writer = TrackCsvWriter::create(&out.join(GROUND_TRUTH_FILE), dim, frames)?;
    let mut frame_writer = FrameWriter::new(&out.join(IMAGES_DIR), shape.clone(), config.output.pgm)?;
    let mut ground_truth = TrackSet::new(frames);
    let mut noise: Option<NoiseParams> = None;

    for t in 0..frames {
        if t > 0 {
            let mut shape_rng = stream(seed, "shape", t as u64);
            match &mut motion {
                Motion::Springs(m) => {
                    m.advance(t, 1.0, &mut stream(seed, "motion", t as u64))?;
                    let warp = m.warp()?;
                    step_scene(&mut scene, Deformation::Warp(&warp), t, 1.0, &mut shape_rng)?;
                }
                Motion::Flow(r) => {
                    let field = r
                        .next_frame()
                        .ok_or_else(|| Error::Flow(format!("flow file ended before frame {t}")))??;
                    step_scene(&mut scene, Deformation::Flow(&field), t, 1.0, &mut shape_rng)?;
                }
            }
        }

        for (i, p) in scene.particles.iter().enumerate() {
            gt_writer.write_row(t, i as u64, &p.position, p.weight, &p.sizes(), p.angles())?;
            ground_truth.insert(i as u64, t, p.position)?;
        }

        let particles = render_profiles(&scene.particles, &shape, config.image.truncation)?;
        let background = render_profiles(&scene.background, &shape, config.image.truncation)?;
        let params = match noise {
            Some(p) => p,
            None => {
                let p = NoiseParams::new(config.image.alpha, config.image.delta, background_gain(&background)?)?;
                noise = Some(p);
                p
            }
        };
        let mixed = mix(&particles, &background, &params)?;
        let noisy = shot_noise(&mixed, params.delta, &stream(seed, "noise", t as u64))?;
        frame_writer.write_frame(t, &quantize_u16(&noisy))?;
    }
    gt_writer.finish()?;
    frame_writer.finish()?;

    let gain = noise.map_or(0.0, |p| p.gain);
    let manifest = Manifest {
        version: VERSION,
        seed,
        config_file: CONFIG_FILE,
        config_sha256: &config_sha256,
        frames,
        particles: scene.particles.len(),
        background_blobs: scene.background.len(),
        background_gain: gain,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(out.join(MANIFEST_FILE), text)?;

    Ok(RunSummary {
        out_dir: out.clone(),
        ground_truth,
        config_sha256,
        background_gain: gain,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationRecord {
    pub gt: PathBuf,
    pub pred: PathBuf,
    pub eta: f64,
    pub version: String,
    pub scores: HotaScores,
}

impl EvaluationRecord {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Score the predicted tracks in `pred_path` against `gt_path`.
pub fn evaluate(gt_path: &Path, pred_path: &Path, eta: f64) -> Result<EvaluationRecord> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::param(format!("eta must be positive, got {eta}")));
    }
    let (gt, gdim) = read_tracks(gt_path)?;
    let (pred, pdim) = read_tracks(pred_path)?;
    if gdim != pdim {
        return Err(Error::DimensionMismatch {
            expected: format!("{gdim}D predictions"),
            got: format!("{pdim}D"),
        });
    }
    if gt.frame_count() != pred.frame_count() {
        return Err(Error::FrameCountMismatch {
            gt: gt.frame_count(),
            pred: pred.frame_count(),
        });
    }
    Ok(EvaluationRecord {
        gt: gt_path.to_path_buf(),
        pred: pred_path.to_path_buf(),
        eta,
        version: VERSION.to_string(),
        scores: hota(&gt, &pred, eta)?,
    })
}

/// Synthetic contraction flow: every voxel moves toward the grid center by
/// `peak · sin(2π(t + ½)/frames)` of its offset, so the tissue contracts and
/// relaxes once over the sequence.
pub fn synthetic_flow(shape: &GridShape, frames: usize, peak: f64) -> impl ExactSizeIterator<Item = FlowField> + '_ {
    let d = shape.ndim();
    let center: Vec<f64> = shape.dims().iter().map(|&s| (s as f64 - 1.0) / 2.0).collect();
    (0..frames).map(move |t| {
        let s = peak * (2.0 * std::f64::consts::PI * (t as f64 + 0.5) / frames as f64).sin();
        FlowField::from_fn(shape.clone(), |c| {
            let mut v = [0f32; 3];
            for a in 0..d {
                v[a] = ((center[a] - c[a] as f64) * s) as f32;
            }
            v
        })
    })
}

/// Write a synthetic flow file with `frames` fields.
pub fn make_flow(dims: &[usize], frames: usize, peak: f64, out: &Path) -> Result<()> {
    let shape = GridShape::new(dims)?;
    if frames == 0 {
        return Err(Error::param("frames must be >= 1"));
    }
    if !peak.is_finite() || peak.abs() >= 1.0 {
        return Err(Error::param(format!("peak must lie in (-1, 1), got {peak}")));
    }
    write_flow_file(out, &shape, synthetic_flow(&shape, frames, peak))
}
