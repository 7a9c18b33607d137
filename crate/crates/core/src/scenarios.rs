//! Synthetic path sets and the standard desk-scale scenarios.

use serde::{Deserialize, Serialize};

use crate::algorithms::AlgorithmConfig;
use crate::error::{AncError, Result};
use crate::model::{ImpulseResponse, PathSet, SystemDims};
use crate::signal::{self, NoiseProgram, NoiseSegment, DEFAULT_SAMPLE_RATE_HZ};
use crate::sim::Scenario;

/// Recipe for a synthetic [`PathSet`] built from
/// [`synthesize_path`](signal::synthesize_path).
///
/// Secondary path s_mk gets a delay of `secondary_delay + |m - k|` samples and
/// is scaled by `cross_gain` when `m != k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub refs: usize,
    pub sources: usize,
    pub errors: usize,
    pub path_taps: usize,
    #[serde(default = "PathSpec::default_primary_delay")]
    pub primary_delay: usize,
    #[serde(default = "PathSpec::default_secondary_delay")]
    pub secondary_delay: usize,
    #[serde(default = "PathSpec::default_decay_rate")]
    pub decay_rate: f64,
    #[serde(default = "PathSpec::default_cross_gain")]
    pub cross_gain: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "PathSpec::default_sample_rate")]
    pub sample_rate_hz: f64,
}

impl PathSpec {
    fn default_primary_delay() -> usize {
        32
    }
    fn default_secondary_delay() -> usize {
        4
    }
    fn default_decay_rate() -> f64 {
        0.3
    }
    fn default_cross_gain() -> f64 {
        0.3
    }
    fn default_sample_rate() -> f64 {
        DEFAULT_SAMPLE_RATE_HZ
    }

    pub fn new(dims: &SystemDims, seed: u64) -> Self {
        PathSpec {
            refs: dims.refs,
            sources: dims.sources,
            errors: dims.errors,
            path_taps: dims.path_taps,
            primary_delay: Self::default_primary_delay(),
            secondary_delay: Self::default_secondary_delay(),
            decay_rate: Self::default_decay_rate(),
            cross_gain: Self::default_cross_gain(),
            seed,
            sample_rate_hz: Self::default_sample_rate(),
        }
    }

    pub fn dims(&self, control_taps: usize) -> Result<SystemDims> {
        SystemDims::new(self.refs, self.sources, self.errors, control_taps, self.path_taps)
    }

    fn max_secondary_delay(&self) -> usize {
        self.secondary_delay + self.errors.max(self.sources) - 1
    }

    pub fn validate(&self) -> Result<()> {
        self.dims(1)?;
        for (name, delay) in [
            ("primary_delay", self.primary_delay),
            ("secondary_delay", self.max_secondary_delay()),
        ] {
            if delay >= self.path_taps {
                return Err(AncError::param(
                    name,
                    format!("delay {delay} must be shorter than path_taps {}", self.path_taps),
                ));
            }
        }
        if !(self.cross_gain.is_finite()) {
            return Err(AncError::param("cross_gain", "must be finite"));
        }
        Ok(())
    }

    /// Builds the path set; the estimate is a copy of the true secondary
    /// paths and the references pick up the source directly.
    pub fn synthesize(&self) -> Result<PathSet> {
        self.validate()?;
        let fs = self.sample_rate_hz;
        let seed = |group: u64, index: usize| {
            self.seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(group << 32)
                .wrapping_add(index as u64)
        };
        let primary = (0..self.errors)
            .map(|m| signal::synthesize_path(self.primary_delay, self.path_taps, self.decay_rate, seed(1, m), fs))
            .collect::<Result<Vec<_>>>()?;
        let mut secondary = Vec::with_capacity(self.errors * self.sources);
        for m in 0..self.errors {
            for k in 0..self.sources {
                let delay = self.secondary_delay + m.abs_diff(k);
                let ir = signal::synthesize_path(
                    delay,
                    self.path_taps,
                    self.decay_rate,
                    seed(2, m * self.sources + k),
                    fs,
                )?;
                secondary.push(if m == k { ir } else { ir.scaled(self.cross_gain)? });
            }
        }
        PathSet::new(&self.dims(1)?, primary, secondary).map(|p| {
            let reference = vec![ImpulseResponse::unit_impulse(fs); self.refs];
            p.with_reference(reference)
        })
    }
}

/// The two-segment broadband program: 200–800 Hz at 10 dB, then
/// 100–1600 Hz at 15 dB, `segment_s` seconds each.
pub fn two_segment_broadband(segment_s: f64, seed: u64, sample_rate_hz: f64) -> Result<NoiseProgram> {
    NoiseProgram::new(
        vec![
            NoiseSegment::broadband((200.0, 800.0), 10.0, segment_s),
            NoiseSegment::broadband((100.0, 1600.0), 15.0, segment_s),
        ],
        seed,
        sample_rate_hz,
    )
}

/// Pile-driving surrogate: 2 bursts/s decaying with a 60 ms time constant.
pub fn impulsive_program(duration_s: f64, seed: u64, sample_rate_hz: f64) -> Result<NoiseProgram> {
    NoiseProgram::new(
        vec![NoiseSegment::Impulsive {
            band_hz: (50.0, 800.0),
            level_db: 20.0,
            duration_s,
            rate_hz: 2.0,
            decay_s: 0.06,
            jitter: 0.2,
        }],
        seed,
        sample_rate_hz,
    )
}

/// 1×4×4 system with 512-tap control filters and 256-tap paths.
pub fn window_system_dims() -> SystemDims {
    SystemDims {
        refs: 1,
        sources: 4,
        errors: 4,
        control_taps: 512,
        path_taps: 256,
    }
}

/// The varying-broadband scenario on the 1×4×4 system.
pub fn varying_broadband_scenario(
    segment_s: f64,
    seed: u64,
    algorithm: AlgorithmConfig,
) -> Result<Scenario> {
    let dims = window_system_dims();
    let paths = PathSpec::new(&dims, seed).synthesize()?;
    let noise = two_segment_broadband(segment_s, seed, DEFAULT_SAMPLE_RATE_HZ)?;
    Scenario::new(dims, paths, noise, algorithm)
}

/// 1×2×2 system with 256-tap control filters and 128-tap paths.
pub fn compact_system_dims() -> SystemDims {
    SystemDims {
        refs: 1,
        sources: 2,
        errors: 2,
        control_taps: 256,
        path_taps: 128,
    }
}

/// The impulsive-noise scenario on the 1×2×2 system.
pub fn impulsive_scenario(duration_s: f64, seed: u64, algorithm: AlgorithmConfig) -> Result<Scenario> {
    let dims = compact_system_dims();
    let paths = PathSpec::new(&dims, seed).synthesize()?;
    let noise = impulsive_program(duration_s, seed, DEFAULT_SAMPLE_RATE_HZ)?;
    Scenario::new(dims, paths, noise, algorithm)
}
