//! Run configuration and the line-oriented `key = value` config format.
//!
//! ```text
//! # comments run to end of line
//! stage1.percentile = 0.9
//! stage2.rotation_step_deg = 15
//! stage2.scales = 0.8, 0.9, 1.0, 1.1, 1.25
//! stage3.alpha = 0.01
//! ```

use std::path::{Path, PathBuf};

use crate::edge::CannyConfig;
use crate::lwm::Degree;
use crate::matching::{PoseGrid, PyramidSchedule, DEFAULT_SCALES};
use crate::raster::Template;
use crate::roi::RoiConfig;
use crate::swarm::SwarmConfig;

use super::PipelineError;

/// Algorithm parameters shared by single-image and tracking runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub edges: CannyConfig,
    pub roi: RoiConfig,
    pub schedule: PyramidSchedule,
    pub rotation_step_deg: f64,
    pub scales: Vec<f64>,
    /// Coarsest translation stride; `None` derives it from the template.
    pub coarse_stride: Option<f64>,
    /// Stage 1 uses every n-th rotation of the Stage 2 grid.
    pub roi_orientation_subsample: usize,
    pub swarm: SwarmConfig,
    /// Start Stage 3 from a unit-scale, unrotated pose at the image center.
    pub skip_roi: bool,
    /// Tracking re-runs the full search when a seeded frame ends above this cost.
    pub relocalize_above: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            edges: CannyConfig::default(),
            roi: RoiConfig::default(),
            schedule: PyramidSchedule::default(),
            rotation_step_deg: 15.0,
            scales: DEFAULT_SCALES.to_vec(),
            coarse_stride: None,
            roi_orientation_subsample: 1,
            swarm: SwarmConfig::default(),
            skip_roi: false,
            relocalize_above: 0.8,
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.schedule.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.swarm.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(self.rotation_step_deg > 0.0 && self.rotation_step_deg <= 360.0) {
            return bad(format!("rotation step {} deg is outside (0, 360]", self.rotation_step_deg));
        }
        if self.scales.is_empty() || self.scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("scales must be a non-empty list of positive numbers".into());
        }
        if matches!(self.coarse_stride, Some(s) if !(s >= 1.0 && s.is_finite())) {
            return bad("coarse stride must be at least 1 px".into());
        }
        if !(0.0..=1.0).contains(&self.roi.percentile) {
            return bad("ROI percentile must lie in [0, 1]".into());
        }
        if self.roi.max_windows == 0 {
            return bad("ROI max_windows must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.roi.relative_floor) {
            return bad("ROI relative floor must lie in [0, 1]".into());
        }
        if self.roi_orientation_subsample == 0 {
            return bad("ROI orientation subsample must be positive".into());
        }
        let e = &self.edges;
        if !((0.0..=1.0).contains(&e.high_percentile) && (0.0..=1.0).contains(&e.low_ratio) && e.noise_floor >= 0.0) {
            return bad("edge thresholds out of range".into());
        }
        if !(self.relocalize_above > 0.0) {
            return bad("relocalization threshold must be positive".into());
        }
        Ok(())
    }

    /// Pose grid for `template` under these settings.
    pub fn pose_grid(&self, template: &Template) -> PoseGrid {
        let steps = ((360.0 / self.rotation_step_deg).round() as usize).max(1);
        let levels = self.schedule.levels();
        let mut strides = PoseGrid::default_strides(template, levels);
        if let Some(coarse) = self.coarse_stride {
            strides = (0..levels)
                .map(|k| {
                    if levels == 1 {
                        1.0
                    } else {
                        coarse.powf(1.0 - k as f64 / (levels - 1) as f64).round().max(1.0)
                    }
                })
                .collect();
        }
        PoseGrid {
            rotations: PoseGrid::rotations(steps),
            scales: self.scales.clone(),
            strides,
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "stage1.percentile" => self.roi.percentile = num(v)?,
            "stage1.max_windows" => self.roi.max_windows = num(v)?,
            "stage1.relative_floor" => self.roi.relative_floor = num(v)?,
            "stage1.orientation_subsample" => self.roi_orientation_subsample = num(v)?,
            "edges.high_percentile" => self.edges.high_percentile = num(v)?,
            "edges.low_ratio" => self.edges.low_ratio = num(v)?,
            "edges.noise_floor" => self.edges.noise_floor = num(v)?,
            "stage2.rotation_step_deg" => self.rotation_step_deg = num(v)?,
            "stage2.scales" => self.scales = list(v)?,
            "stage2.coarse_stride" => self.coarse_stride = Some(num(v)?),
            "stage2.sigmas" => self.schedule.sigmas = list(v)?,
            "stage2.thresholds" => self.schedule.energy_thresholds = list(v)?,
            "stage2.keep_top" => self.schedule.keep_top = list(v)?,
            "stage3.particles" => self.swarm.particles = num(v)?,
            "stage3.iterations" => self.swarm.iterations = num(v)?,
            "stage3.inertia" => self.swarm.inertia = num(v)?,
            "stage3.cognitive" => self.swarm.cognitive = num(v)?,
            "stage3.social" => self.swarm.social = num(v)?,
            "stage3.radius" => self.swarm.radius = num(v)?,
            "stage3.alpha" => self.swarm.alpha = num(v)?,
            "stage3.seed" => self.swarm.seed = num(v)?,
            "stage3.stop_energy" => {
                self.swarm.stop_energy = if v == "none" { None } else { Some(num(v)?) }
            }
            "stage3.penalty_mode" => self.swarm.penalty_mode = v.parse().map_err(|e| format!("{e}"))?,
            "stage3.degree" => {
                self.swarm.lwm.degree = match v {
                    "auto" => None,
                    "1" => Some(Degree::Linear),
                    "2" => Some(Degree::Quadratic),
                    other => return Err(format!("degree must be 1, 2 or auto, got '{other}'")),
                }
            }
            "stage3.neighbors" => {
                self.swarm.lwm.neighbors = if v == "auto" { None } else { Some(num(v)?) }
            }
            "pipeline.skip_roi" => self.skip_roi = boolean(v)?,
            "track.relocalize_above" => self.relocalize_above = num(v)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Applies every setting in a config file's text.
    pub fn apply_text(&mut self, text: &str) -> Result<(), PipelineError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected 'key = value'", i + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|m| PipelineError::Config(format!("line {}: {m}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
        let mut s = Self::default();
        s.apply_text(&text)?;
        Ok(s)
    }
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse '{v}'"))
}

fn list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>, String> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(num)
        .collect()
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("expected a boolean, got '{other}'")),
    }
}

/// Optional artifacts written next to the report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Dumps {
    /// Finest-level phi as a normalized PGM.
    pub epf: bool,
    /// Candidates of every level rather than only the final ones.
    pub candidates: bool,
    pub trace: bool,
    pub warp: bool,
    /// Stage 1 response map as a normalized PGM.
    pub roi: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Single,
    Track,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// One image in single mode, the ordered sequence in track mode.
    pub images: Vec<PathBuf>,
    pub template: PathBuf,
    pub out_dir: PathBuf,
    pub settings: Settings,
    pub dumps: Dumps,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.settings.validate()?;
        match self.mode {
            Mode::Single if self.images.len() != 1 => {
                return Err(PipelineError::Config("single mode takes exactly one image".into()))
            }
            Mode::Track if self.images.len() < 2 => {
                return Err(PipelineError::Config("track mode needs at least two images".into()))
            }
            _ => {}
        }
        for p in self.images.iter().chain(std::iter::once(&self.template)) {
            if !p.is_file() {
                return Err(PipelineError::Io(format!("{}: no such file", p.display())));
            }
        }
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| PipelineError::Io(format!("{}: {e}", self.out_dir.display())))?;
        let probe = self.out_dir.join(".write-test");
        std::fs::write(&probe, b"")
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| PipelineError::Io(format!("{}: not writable: {e}", self.out_dir.display())))?;
        Ok(())
    }
}
