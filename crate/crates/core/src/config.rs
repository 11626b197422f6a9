//! Simulation configuration and scenario presets.
//!
//! Configs are TOML files with one section per module. A config file is
//! applied on top of a preset, so it only needs the keys it changes; unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::SpringMotionParams;
use crate::render::DEFAULT_TRUNCATION;
use crate::scene::SceneParams;

pub const PRESETS: [&str; 3] = ["hydra-flow", "springs-2d", "springs-3d"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageConfig {
    /// Image size in pixels, `x` first.
    pub dims: Vec<usize>,
    pub frames: usize,
    pub alpha: f64,
    pub delta: f64,
    pub truncation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    /// Relaxation time in frames.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotionConfig {
    Springs(SpringMotionParams),
    Flow { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskConfig {
    Ellipse { coverage: f64 },
    File { path: PathBuf, threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write a 16-bit PGM per frame (2D only).
    pub pgm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    pub image: ImageConfig,
    pub dynamics: DynamicsConfig,
    pub scene: SceneParams,
    pub motion: MotionConfig,
    pub mask: MaskConfig,
    pub output: OutputConfig,
}

/// Named scenario.
pub fn preset(name: &str) -> Result<SimulationConfig> {
    let base = |dims: Vec<usize>, motion: MotionConfig, min_dist: f64| SimulationConfig {
        seed: 0,
        image: ImageConfig {
            dims,
            frames: 200,
            alpha: 0.2,
            delta: 50.0,
            truncation: DEFAULT_TRUNCATION,
        },
        dynamics: DynamicsConfig { tau: 10.0 },
        scene: SceneParams {
            particles: 800,
            min_dist,
            ..SceneParams::default()
        },
        motion,
        mask: MaskConfig::Ellipse { coverage: 0.3 },
        output: OutputConfig {
            dir: PathBuf::from(format!("out/{name}")),
            pgm: false,
        },
    };
    match name {
        "hydra-flow" => Ok(base(
            vec![1024, 1024],
            MotionConfig::Flow {
                path: PathBuf::from("hydra-flow.sinflo"),
            },
            6.0,
        )),
        "springs-2d" => Ok(base(
            vec![1024, 1024],
            MotionConfig::Springs(SpringMotionParams {
                a_max: 4.0,
                spacing: 50.0,
                ..SpringMotionParams::default()
            }),
            6.0,
        )),
        "springs-3d" => Ok(base(
            vec![200, 200, 200],
            MotionConfig::Springs(SpringMotionParams {
                a_max: 3.0,
                spacing: 20.0,
                ..SpringMotionParams::default()
            }),
            4.0,
        )),
        _ => Err(Error::UnknownPreset {
            name: name.to_string(),
            available: PRESETS.join(", "),
        }),
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // A different `kind` switches variant: replace the section.
                    Some(existing @ toml::Value::Table(_))
                        if v.get("kind").is_some() && v.get("kind") != existing.get("kind") =>
                    {
                        *existing = v;
                    }
                    Some(existing) => merge(existing, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl SimulationConfig {
    pub fn dim(&self) -> usize {
        self.image.dims.len()
    }

    /// Apply a TOML document of overrides.
    pub fn with_overrides(&self, text: &str) -> Result<Self> {
        let over: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut base = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, over);
        let cfg: Self = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply the overrides stored in `path`.
    pub fn with_override_file(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        self.with_overrides(&text)
    }

    /// Parse a complete config.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let i = &self.image;
        if !(2..=3).contains(&i.dims.len()) || i.dims.contains(&0) {
            return bad(format!("dims must have 2 or 3 positive entries, got {:?}", i.dims));
        }
        if i.frames == 0 {
            return bad("frames must be >= 1".into());
        }
        if !(i.alpha > 0.0 && i.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", i.alpha));
        }
        if !(i.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", i.delta));
        }
        if !(i.truncation >= 3.0) {
            return bad(format!("truncation must be >= 3, got {}", i.truncation));
        }
        if !(self.dynamics.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.dynamics.tau));
        }
        if self.scene.particles == 0 {
            return bad("particles must be >= 1".into());
        }
        if !(self.scene.min_dist >= 0.0) {
            return bad("min_dist must be >= 0".into());
        }
        if let MotionConfig::Springs(p) = &self.motion {
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let MaskConfig::Ellipse { coverage } = self.mask {
            if !(coverage > 0.0 && coverage <= 0.9) {
                return bad(format!("coverage must lie in (0, 0.9], got {coverage}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_values() {
        let s2 = preset("springs-2d").unwrap();
        let MotionConfig::Springs(p) = &s2.motion else { panic!() };
        assert_eq!(p.a_max, 4.0);
        assert_eq!(s2.image.dims, vec![1024, 1024]);
        let s3 = preset("springs-3d").unwrap();
        assert_eq!(s3.image.dims, vec![200, 200, 200]);
        let MotionConfig::Springs(p) = &s3.motion else { panic!() };
        assert_eq!(p.a_max, 3.0);
        let h = preset("hydra-flow").unwrap();
        assert_eq!((h.image.alpha, h.image.delta), (0.2, 50.0));
        assert!(matches!(h.motion, MotionConfig::Flow { .. }));
        for name in PRESETS {
            let c = preset(name).unwrap();
            assert_eq!((c.scene.particles, c.image.frames, c.dynamics.tau), (800, 200, 10.0));
            c.validate().unwrap();
        }
        let err = preset("springs-4d").unwrap_err().to_string();
        assert!(err.contains("springs-2d") && err.contains("hydra-flow"), "{err}");
    }

    #[test]
    fn overrides_and_roundtrip() {
        let base = preset("springs-2d").unwrap();
        let cfg = base
            .with_overrides(
                "seed = 9\n[image]\ndims = [256, 256]\nframes = 10\n[scene]\nparticles = 50\n[motion]\na_max = 1.0\n",
            )
            .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.image.dims, vec![256, 256]);
        assert_eq!(cfg.image.alpha, 0.2);
        let MotionConfig::Springs(p) = &cfg.motion else { panic!() };
        assert_eq!((p.a_max, p.spacing), (1.0, 50.0));
        assert_eq!(SimulationConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);

        let flow = base
            .with_overrides("[motion]\nkind = \"flow\"\npath = \"x.sinflo\"\n")
            .unwrap();
        assert_eq!(flow.motion, MotionConfig::Flow { path: "x.sinflo".into() });
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let base = preset("springs-2d").unwrap();
        assert!(base.with_overrides("[image]\nframe = 3\n").is_err());
        assert!(base.with_overrides("sede = 3\n").is_err());
        assert!(base.with_overrides("[motion]\namax = 3\n").is_err());
        assert!(base.with_overrides("[image]\nalpha = 0.0\n").is_err());
        assert!(base.with_overrides("[image]\ndims = [5]\n").is_err());
        assert!(base.with_overrides("[mask]\ncoverage = 0.95\n").is_err());
    }
}
