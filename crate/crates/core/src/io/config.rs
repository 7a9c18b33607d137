//! TOML run configuration.
//!
//! ```toml
//! [system]
//! refs = 1
//! sources = 4
//! errors = 4
//! control_taps = 512
//! path_taps = 256
//! sample_rate_hz = 16000.0     # optional
//!
//! [paths.synth]                 # or: [paths] dir = "paths"
//! seed = 1
//! decay_rate = 0.3              # optional, see PathSpec
//!
//! [noise]
//! seed = 1
//! [[noise.segments]]
//! kind = "broadband"
//! band_hz = [200.0, 800.0]
//! level_db = 10.0
//! duration_s = 20.0
//!
//! [simulation]                  # optional
//! divergence_threshold = 1000.0
//! duration_s = 40.0
//!
//! [[algorithms]]
//! kind = "momentum_mnfxlms"
//! step_size = 0.001
//! forgetting_factor = 0.9
//!
//! [output]
//! dir = "out"
//! nr_window = 4096
//! nr_hop = 1024
//! history_stride = 1
//! ```
//!
//! Unknown keys anywhere in the file are rejected.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::algorithms::{AlgorithmConfig, AlgorithmKind, DEFAULT_EPSILON};
use crate::error::AncError;
use crate::io::ir_file::{load_impulse_response, IrFileError};
use crate::metrics::{DEFAULT_NR_HOP, DEFAULT_NR_WINDOW};
use crate::model::{PathSet, SystemDims};
use crate::scenarios::PathSpec;
use crate::signal::{NoiseProgram, NoiseSegment, DEFAULT_SAMPLE_RATE_HZ};
use crate::sim::{Scenario, DEFAULT_DIVERGENCE_THRESHOLD};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(#[from] AncError),
    #[error("{file}: {source}")]
    ImpulseResponse {
        file: String,
        #[source]
        source: IrFileError,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    pub paths: PathsSection,
    pub noise: NoiseSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    pub algorithms: Vec<AlgorithmSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub refs: usize,
    pub sources: usize,
    pub errors: usize,
    pub control_taps: usize,
    pub path_taps: usize,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
}

fn default_sample_rate() -> f64 {
    DEFAULT_SAMPLE_RATE_HZ
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    /// Directory written by `gen-paths`, relative to the config file.
    pub dir: Option<PathBuf>,
    pub synth: Option<SynthPaths>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthPaths {
    #[serde(default)]
    pub seed: u64,
    pub primary_delay: Option<usize>,
    pub secondary_delay: Option<usize>,
    pub decay_rate: Option<f64>,
    pub cross_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub seed: u64,
    pub segments: Vec<NoiseSegment>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_threshold")]
    pub divergence_threshold: f64,
    /// Defaults to the length of the noise program.
    pub duration_s: Option<f64>,
}

fn default_threshold() -> f64 {
    DEFAULT_DIVERGENCE_THRESHOLD
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
            duration_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    /// Label used in output file names; defaults to the kind.
    pub name: Option<String>,
    pub kind: AlgorithmKind,
    pub step_size: f64,
    pub forgetting_factor: Option<f64>,
    pub epsilon: Option<f64>,
}

impl AlgorithmSection {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn to_config(&self) -> Result<AlgorithmConfig, AncError> {
        let eps = self.epsilon.unwrap_or(DEFAULT_EPSILON);
        let cfg = match self.kind {
            AlgorithmKind::McFxLms => {
                if self.forgetting_factor.is_some() || self.epsilon.is_some() {
                    return Err(AncError::param(
                        "forgetting_factor",
                        "mcfxlms takes neither forgetting_factor nor epsilon",
                    ));
                }
                AlgorithmConfig::mcfxlms(self.step_size)
            }
            AlgorithmKind::MnFxLms => {
                if self.forgetting_factor.is_some() {
                    return Err(AncError::param(
                        "forgetting_factor",
                        "only used by momentum_mnfxlms",
                    ));
                }
                AlgorithmConfig::mnfxlms(self.step_size, eps)
            }
            AlgorithmKind::MomentumMnFxLms => AlgorithmConfig::momentum_mnfxlms(
                self.step_size,
                self.forgetting_factor.ok_or_else(|| {
                    AncError::param("forgetting_factor", "required for momentum_mnfxlms")
                })?,
                eps,
            ),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_window")]
    pub nr_window: usize,
    #[serde(default = "default_hop")]
    pub nr_hop: usize,
    /// Write every n-th sample of the time histories.
    #[serde(default = "default_stride")]
    pub history_stride: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_window() -> usize {
    DEFAULT_NR_WINDOW
}
fn default_hop() -> usize {
    DEFAULT_NR_HOP
}
fn default_stride() -> usize {
    1
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_output_dir(),
            nr_window: DEFAULT_NR_WINDOW,
            nr_hop: DEFAULT_NR_HOP,
            history_stride: 1,
        }
    }
}

/// A validated configuration: one scenario per algorithm, all sharing paths
/// and noise.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub labels: Vec<String>,
    pub scenarios: Vec<Scenario>,
    pub output: OutputSection,
}

pub fn parse_run_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_run_config(&text)
}

/// Parses a `gen-paths` spec: a TOML table of [`PathSpec`] fields.
pub fn parse_path_spec(text: &str) -> Result<PathSpec, ConfigError> {
    let spec: PathSpec = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    spec.validate()?;
    if !(spec.sample_rate_hz.is_finite() && spec.sample_rate_hz > 0.0) {
        return Err(AncError::param("sample_rate_hz", "must be positive").into());
    }
    Ok(spec)
}

/// File names used for a path set directory.
pub fn primary_file(m: usize) -> String {
    format!("primary_m{}.txt", m + 1)
}
pub fn secondary_file(m: usize, k: usize) -> String {
    format!("secondary_m{}_k{}.txt", m + 1, k + 1)
}
pub fn estimate_file(m: usize, k: usize) -> String {
    format!("estimate_m{}_k{}.txt", m + 1, k + 1)
}

impl RunConfig {
    pub fn dims(&self) -> Result<SystemDims, AncError> {
        let s = &self.system;
        SystemDims::new(s.refs, s.sources, s.errors, s.control_taps, s.path_taps)
    }

    /// Checks everything that does not need the filesystem.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.dims()?;
        let fs = self.system.sample_rate_hz;
        if !(fs.is_finite() && fs > 0.0) {
            return Err(AncError::param("sample_rate_hz", format!("{fs} must be positive")).into());
        }
        match (&self.paths.dir, &self.paths.synth) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => {
                return Err(ConfigError::Parse(
                    "[paths] needs exactly one of `dir` or `synth`".into(),
                ))
            }
        }
        if let Some(synth) = &self.paths.synth {
            self.path_spec(synth).validate()?;
        }
        NoiseProgram::new(self.noise.segments.clone(), self.noise.seed, fs)?;
        if self.algorithms.is_empty() {
            return Err(ConfigError::Parse("at least one [[algorithms]] entry is required".into()));
        }
        let mut seen = HashSet::new();
        for a in &self.algorithms {
            a.to_config()?;
            let label = a.label();
            if label.is_empty()
                || !label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(ConfigError::Parse(format!(
                    "algorithm name {label:?} must be non-empty and use only [A-Za-z0-9_-]"
                )));
            }
            if !seen.insert(label.clone()) {
                return Err(ConfigError::Parse(format!("duplicate algorithm name {label:?}")));
            }
        }
        let out = &self.output;
        if out.nr_window == 0 || out.nr_hop == 0 || out.history_stride == 0 {
            return Err(ConfigError::Parse(
                "output nr_window, nr_hop and history_stride must be positive".into(),
            ));
        }
        let th = self.simulation.divergence_threshold;
        if !(th.is_finite() && th > 0.0) {
            return Err(AncError::param("divergence_threshold", format!("{th} must be positive")).into());
        }
        if let Some(d) = self.simulation.duration_s {
            if !(d.is_finite() && d > 0.0) {
                return Err(AncError::param("duration_s", format!("{d} must be positive")).into());
            }
        }
        Ok(())
    }

    fn path_spec(&self, synth: &SynthPaths) -> PathSpec {
        let dims = SystemDims {
            refs: self.system.refs,
            sources: self.system.sources,
            errors: self.system.errors,
            control_taps: self.system.control_taps,
            path_taps: self.system.path_taps,
        };
        let mut spec = PathSpec::new(&dims, synth.seed);
        spec.sample_rate_hz = self.system.sample_rate_hz;
        if let Some(v) = synth.primary_delay {
            spec.primary_delay = v;
        }
        if let Some(v) = synth.secondary_delay {
            spec.secondary_delay = v;
        }
        if let Some(v) = synth.decay_rate {
            spec.decay_rate = v;
        }
        if let Some(v) = synth.cross_gain {
            spec.cross_gain = v;
        }
        spec
    }

    /// Builds the path set, reading IR files relative to `base_dir`.
    pub fn paths(&self, base_dir: &Path) -> Result<PathSet, ConfigError> {
        let dims = self.dims()?;
        if let Some(synth) = &self.paths.synth {
            return Ok(self.path_spec(synth).synthesize()?);
        }
        let dir = base_dir.join(self.paths.dir.as_ref().expect("validated"));
        load_path_dir(&dir, &dims, self.system.sample_rate_hz)
    }

    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedRun, ConfigError> {
        self.validate()?;
        let dims = self.dims()?;
        let paths = self.paths(base_dir)?;
        let noise = NoiseProgram::new(
            self.noise.segments.clone(),
            self.noise.seed,
            self.system.sample_rate_hz,
        )?;
        let total = noise.total_samples();
        let duration_samples = match self.simulation.duration_s {
            Some(d) => (d * self.system.sample_rate_hz).round() as usize,
            None => total,
        };
        let mut scenarios = Vec::new();
        let mut labels = Vec::new();
        for a in &self.algorithms {
            let s = Scenario {
                dims,
                paths: paths.clone(),
                noise: noise.clone(),
                algorithm: a.to_config()?,
                duration_samples,
                divergence_threshold: self.simulation.divergence_threshold,
            };
            s.validate()?;
            scenarios.push(s);
            labels.push(a.label());
        }
        Ok(ResolvedRun {
            labels,
            scenarios,
            output: self.output.clone(),
        })
    }
}

pub fn load_path_dir(dir: &Path, dims: &SystemDims, sample_rate_hz: f64) -> Result<PathSet, ConfigError> {
    let load = |name: String| {
        let file = dir.join(&name);
        load_impulse_response(&file, Some(sample_rate_hz)).map_err(|source| ConfigError::ImpulseResponse {
            file: file.display().to_string(),
            source,
        })
    };
    let primary = (0..dims.errors).map(|m| load(primary_file(m))).collect::<Result<Vec<_>, _>>()?;
    let mut secondary = Vec::new();
    let mut estimate = Vec::new();
    for m in 0..dims.errors {
        for k in 0..dims.sources {
            secondary.push(load(secondary_file(m, k))?);
            estimate.push(load(estimate_file(m, k))?);
        }
    }
    Ok(PathSet::new(dims, primary, secondary)?.with_estimate(estimate))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[system]
refs = 1
sources = 2
errors = 2
control_taps = 32
path_taps = 64

[paths.synth]
seed = 3

[noise]
seed = 9
[[noise.segments]]
kind = "broadband"
band_hz = [200.0, 800.0]
level_db = 0.0
duration_s = 0.25

[[algorithms]]
kind = "mnfxlms"
step_size = 0.01

[[algorithms]]
kind = "momentum_mnfxlms"
step_size = 0.01
forgetting_factor = 0.9
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = parse_run_config(BASE).unwrap();
        let run = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(run.labels, vec!["mnfxlms", "momentum_mnfxlms"]);
        assert_eq!(run.scenarios[0].duration_samples, 4000);
        assert_eq!(run.scenarios[1].algorithm.forgetting_factor, 0.9);
        assert_eq!(run.output.nr_window, DEFAULT_NR_WINDOW);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = BASE.replace("seed = 9", "seed = 9\nbogus_key = 1");
        let err = parse_run_config(&text).unwrap_err().to_string();
        assert!(err.contains("bogus_key"), "{err}");
    }

    #[test]
    fn gamma_bound_is_cited() {
        let text = BASE.replace("forgetting_factor = 0.9", "forgetting_factor = 1.2");
        let err = parse_run_config(&text).unwrap_err().to_string();
        assert!(err.contains("[0, 1)"), "{err}");
    }

    #[test]
    fn rejects_structural_problems() {
        let both = BASE.replace("[paths.synth]", "[paths]\ndir = \"p\"\n[paths.synth]");
        assert!(parse_run_config(&both).is_err());
        let dup = BASE.replace("kind = \"momentum_mnfxlms\"", "name = \"mnfxlms\"\nkind = \"momentum_mnfxlms\"");
        assert!(parse_run_config(&dup).unwrap_err().to_string().contains("duplicate"));
        let bad_kind = BASE.replace("kind = \"mnfxlms\"", "kind = \"rls\"");
        assert!(parse_run_config(&bad_kind).is_err());
        let no_gamma = BASE.replace("forgetting_factor = 0.9", "");
        assert!(parse_run_config(&no_gamma).is_err());
    }
}
