//! Controller parameter files.
//!
//! Each file holds diagonal gains as 6-vectors, symmetric or asymmetric clip
//! ranges, the feedback reference pose as an extrinsic-xyz Euler 6-vector
//! (mm, deg) and the feedforward twist (mm/s, deg/s). Gains act on errors in
//! mm and deg.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::control::{AlignmentConfig, Clip, MimoPid, PidConfig, ServoConfig, SisoPid, DEFAULT_EWMA_DECAY};
use crate::error::{Error, Result};

pub const TRACKING_TOML: &str = include_str!("../config/tracking.toml");
pub const SURFACE_FOLLOWING_TOML: &str = include_str!("../config/surface_following.toml");
pub const PUSHING_TOML: &str = include_str!("../config/pushing.toml");

fn default_decay() -> f64 {
    DEFAULT_EWMA_DECAY
}

/// Gains, limits and set points of one servo controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoTable {
    pub kp: [f64; 6],
    pub ki: [f64; 6],
    pub kd: [f64; 6],
    pub integral_clip: Option<[f64; 2]>,
    pub output_clip: Option<[f64; 2]>,
    #[serde(default = "default_decay")]
    pub ewma_decay: f64,
    pub reference_pose_mm_deg: [f64; 6],
    /// Reference used instead when the pushed object is tall.
    pub tall_reference_pose_mm_deg: Option<[f64; 6]>,
    #[serde(default)]
    pub feedforward_mm_s_deg_s: [f64; 6],
}

/// Scalar target alignment loop on the bearing error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentTable {
    pub kp: f64,
    pub ki: f64,
    /// Integral gain used instead in dual-arm pushing.
    pub ki_dual_arm: Option<f64>,
    pub kd: f64,
    pub integral_clip: Option<[f64; 2]>,
    pub output_clip: Option<[f64; 2]>,
    #[serde(default = "default_decay")]
    pub ewma_decay: f64,
    #[serde(default)]
    pub reference_bearing_deg: f64,
    pub cutoff_mm: f64,
    pub done_radius_mm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerParams {
    pub servo: ServoTable,
    pub alignment: Option<AlignmentTable>,
    pub stabiliser: Option<ServoTable>,
}

fn clip<const N: usize>(c: &Option<[f64; 2]>) -> Option<Clip<N>> {
    c.map(|[lo, hi]| Clip::uniform(lo, hi))
}

impl ServoTable {
    pub fn pid(&self) -> Result<MimoPid> {
        let cfg = PidConfig {
            kp: self.kp,
            ki: self.ki,
            kd: self.kd,
            integral_clip: clip(&self.integral_clip),
            output_clip: clip(&self.output_clip),
            ewma_decay: self.ewma_decay,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn servo(&self, tall: bool) -> ServoConfig {
        let reference = match (tall, self.tall_reference_pose_mm_deg) {
            (true, Some(r)) => r,
            _ => self.reference_pose_mm_deg,
        };
        ServoConfig::new(reference, self.feedforward_mm_s_deg_s)
    }

    pub fn validate(&self) -> Result<()> {
        self.pid()?;
        let finite = |v: &[f64; 6]| v.iter().all(|x| x.is_finite());
        let tall_ok = self.tall_reference_pose_mm_deg.as_ref().is_none_or(finite);
        if !finite(&self.reference_pose_mm_deg) || !tall_ok || !finite(&self.feedforward_mm_s_deg_s) {
            return Err(Error::InvalidArgument("reference pose and feedforward must be finite".into()));
        }
        Ok(())
    }
}

impl AlignmentTable {
    pub fn config(&self, dual_arm: bool) -> Result<AlignmentConfig> {
        let ki = if dual_arm { self.ki_dual_arm.unwrap_or(self.ki) } else { self.ki };
        let pid = SisoPid {
            kp: [self.kp],
            ki: [ki],
            kd: [self.kd],
            integral_clip: clip(&self.integral_clip),
            output_clip: clip(&self.output_clip),
            ewma_decay: self.ewma_decay,
        };
        pid.validate()?;
        if !(self.done_radius_mm > 0.0 && self.cutoff_mm >= self.done_radius_mm) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < done_radius_mm <= cutoff_mm, got {} and {}",
                self.done_radius_mm, self.cutoff_mm
            )));
        }
        Ok(AlignmentConfig {
            pid,
            reference_bearing_deg: self.reference_bearing_deg,
            cutoff_mm: self.cutoff_mm,
            done_radius_mm: self.done_radius_mm,
        })
    }
}

impl ControllerParams {
    pub fn tracking() -> Self {
        parse_toml(TRACKING_TOML, Path::new("tracking.toml")).expect("bundled tracking parameters parse")
    }

    pub fn surface_following() -> Self {
        parse_toml(SURFACE_FOLLOWING_TOML, Path::new("surface_following.toml"))
            .expect("bundled surface following parameters parse")
    }

    pub fn pushing() -> Self {
        parse_toml(PUSHING_TOML, Path::new("pushing.toml")).expect("bundled pushing parameters parse")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let p: Self = parse_toml(&text, path)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.servo.validate()?;
        if let Some(s) = &self.stabiliser {
            s.validate()?;
        }
        if let Some(a) = &self.alignment {
            a.config(false)?;
            a.config(true)?;
        }
        Ok(())
    }
}

/// 1-based line of a byte offset.
pub fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

/// Parses TOML, reporting the line of the first error.
pub fn parse_toml<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })
}
