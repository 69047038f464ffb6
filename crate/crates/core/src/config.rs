//! Run configuration: a single JSON document, validated with field paths.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{AnalysisOptions, FitBasis, Frame, Sample, SelectionCuts, SeriesSpec};
use crate::digitizer::ResolutionConfig;
use crate::error::{Error, Result};
use crate::geometry::{Geometry, GeometryConfig, Layout};
use crate::material::{load_material_table, Materials};
use crate::pair::PairMode;
use crate::transport::{ThetaBias, TransportOptions};

/// Geometry given either as a preset name or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeometrySpec {
    Preset(String),
    Inline(GeometryConfig),
}

impl GeometrySpec {
    pub fn expand(&self) -> Result<GeometryConfig> {
        match self {
            GeometrySpec::Preset(name) => GeometryConfig::preset(name),
            GeometrySpec::Inline(g) => Ok(g.clone()),
        }
    }
}

/// Where the analysis takes its angles from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reconstruction {
    /// Truth for the perfect sphere, digitized hits otherwise.
    #[default]
    Auto,
    Truth,
    Detector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    pub force_scd_interaction: bool,
    pub analyzing_bias: Option<ThetaBias>,
    pub intermediate_bias: Option<ThetaBias>,
    /// Pair-level double scattering with θ restricted to this window (degrees), no transport.
    pub direct_dcs_window_deg: Option<[f64; 2]>,
    pub reconstruction: Reconstruction,
    pub mixing: bool,
    pub mixing_passes: usize,
    pub fit_basis: FitBasis,
    pub frames: Vec<Frame>,
    pub samples: Vec<Sample>,
    pub compress: bool,
    pub write_truth: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        let a = AnalysisOptions::default();
        RunOptions {
            force_scd_interaction: false,
            analyzing_bias: None,
            intermediate_bias: None,
            direct_dcs_window_deg: None,
            reconstruction: Reconstruction::Auto,
            mixing: a.mixing,
            mixing_passes: a.mixing_passes,
            fit_basis: a.fit_basis,
            frames: vec![Frame::Lab],
            samples: vec![Sample::All],
            compress: false,
            write_truth: true,
        }
    }
}

impl RunOptions {
    pub fn transport(&self) -> TransportOptions {
        TransportOptions {
            force_scd_interaction: self.force_scd_interaction,
            analyzing_bias: self.analyzing_bias,
            intermediate_bias: self.intermediate_bias,
        }
    }

    pub fn analysis(&self) -> AnalysisOptions {
        AnalysisOptions { mixing: self.mixing, mixing_passes: self.mixing_passes, fit_basis: self.fit_basis }
    }

    pub fn series_specs(&self) -> Vec<SeriesSpec> {
        let mut out = Vec::new();
        for &frame in &self.frames {
            for &sample in &self.samples {
                let s = SeriesSpec { frame, sample };
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        out
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: PairMode,
    pub geometry: GeometrySpec,
    pub n_events: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub cuts: SelectionCuts,
    #[serde(default)]
    pub resolution: ResolutionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Extra material tables by name; they override the built-in ones.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub materials: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub options: RunOptions,
}

impl RunConfig {
    pub fn new(mode: PairMode, geometry: &str, n_events: u64, seed: u64) -> Self {
        RunConfig {
            mode,
            geometry: GeometrySpec::Preset(geometry.into()),
            n_events,
            seed,
            workers: 1,
            cuts: SelectionCuts::default(),
            resolution: ResolutionConfig::default(),
            output_dir: None,
            materials: BTreeMap::new(),
            options: RunOptions::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks everything that does not need the geometry built.
    pub fn validate(&self) -> Result<()> {
        if self.n_events == 0 {
            return Err(Error::config("n_events", "must be positive"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        self.cuts.validate()?;
        self.resolution.validate()?;
        let o = &self.options;
        if o.mixing_passes == 0 {
            return Err(Error::config("options.mixing_passes", "must be at least 1"));
        }
        if o.frames.is_empty() {
            return Err(Error::config("options.frames", "at least one frame is required"));
        }
        if o.samples.is_empty() {
            return Err(Error::config("options.samples", "at least one sample is required"));
        }
        if let Some([lo, hi]) = o.direct_dcs_window_deg {
            if !(0.0 <= lo && lo < hi && hi <= 180.0) {
                return Err(Error::config("options.direct_dcs_window_deg", "need 0 ≤ low < high ≤ 180"));
            }
            if o.force_scd_interaction || o.analyzing_bias.is_some() || o.intermediate_bias.is_some() {
                return Err(Error::config(
                    "options.direct_dcs_window_deg",
                    "pair-level sampling excludes transport options",
                ));
            }
            if self.cuts.require_scd {
                return Err(Error::config("cuts.require_scd", "pair-level sampling has no intermediate scatter; set false"));
            }
        }
        Ok(())
    }

    /// sha256 over the canonical JSON of the configuration, ignoring worker count and output location.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 1;
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }

    /// Validates, expands presets and loads materials.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        self.validate()?;
        let mut materials = Materials::builtin();
        for (name, path) in &self.materials {
            let mut t = load_material_table(path)?;
            t.name = name.clone();
            materials.insert(t);
        }
        let geometry_config = self.geometry.expand()?;
        let geometry = Geometry::build(&geometry_config, &materials)?;
        self.options.transport().validate(&geometry)?;
        let truth_level = match self.options.reconstruction {
            Reconstruction::Auto => {
                matches!(geometry_config.layout, Layout::PerfectSphere { .. }) || self.options.direct_dcs_window_deg.is_some()
            }
            Reconstruction::Truth => true,
            Reconstruction::Detector => {
                if self.options.direct_dcs_window_deg.is_some() || geometry.perfect_sphere {
                    return Err(Error::config(
                        "options.reconstruction",
                        "detector reconstruction needs an apparatus geometry",
                    ));
                }
                false
            }
        };
        Ok(ResolvedRun { config: self.clone(), geometry_config, geometry, materials, truth_level })
    }
}

/// A validated configuration with its geometry and materials built.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub geometry_config: GeometryConfig,
    pub geometry: Geometry,
    pub materials: Materials,
    /// Analyze truth angles instead of digitized hits.
    pub truth_level: bool,
}
