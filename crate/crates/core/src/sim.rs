//! Sample-by-sample closed-loop simulation.
//!
//! Per sample n:
//!
//! 1. the noise source emits v(n);
//! 2. x_j(n) = v filtered by reference path j;
//! 3. d_m(n) = v filtered by primary path m;
//! 4. y_k(n) = Σ_j w_kjᵀ x_j(n);
//! 5. e_m(n) = d_m(n) + Σ_k (y_k * s_mk)(n) through the *true* secondary paths;
//! 6. x_j is pushed through the secondary path *estimates* into x'_jkm;
//! 7. the configured rule updates the filters from e(n).
//!
//! The disturbances do not depend on the control signal and are rendered
//! before the loop starts.

use std::thread;

use crate::algorithms::AlgorithmConfig;
use crate::error::{AncError, Result};
use crate::metrics::{self, NrSeries};
use crate::model::{dot, ControlFilterBank, FilteredReferenceState, PathSet, SystemDims, TapDelayLine};
use crate::signal::{self, NoiseProgram};

/// Default divergence threshold, as a multiple of the initial disturbance RMS.
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e3;

/// Number of leading disturbance samples whose RMS scales the threshold.
pub const DIVERGENCE_REFERENCE_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dims: SystemDims,
    pub paths: PathSet,
    pub noise: NoiseProgram,
    pub algorithm: AlgorithmConfig,
    pub duration_samples: usize,
    pub divergence_threshold: f64,
}

impl Scenario {
    /// A scenario running for the full length of the noise program.
    pub fn new(
        dims: SystemDims,
        paths: PathSet,
        noise: NoiseProgram,
        algorithm: AlgorithmConfig,
    ) -> Result<Self> {
        let s = Scenario {
            duration_samples: noise.total_samples(),
            dims,
            paths,
            noise,
            algorithm,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_algorithm(&self, algorithm: AlgorithmConfig) -> Self {
        Scenario {
            algorithm,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.paths.validate(&self.dims)?;
        self.noise.validate()?;
        self.algorithm.validate()?;
        if self.paths.sample_rate_hz() != self.noise.sample_rate_hz {
            return Err(AncError::param(
                "sample_rate_hz",
                format!(
                    "paths run at {} Hz but the noise program at {} Hz",
                    self.paths.sample_rate_hz(),
                    self.noise.sample_rate_hz
                ),
            ));
        }
        if self.duration_samples == 0 || self.duration_samples > self.noise.total_samples() {
            return Err(AncError::param(
                "duration_samples",
                format!(
                    "{} must be in 1..={} (noise program length)",
                    self.duration_samples,
                    self.noise.total_samples()
                ),
            ));
        }
        if !(self.divergence_threshold.is_finite() && self.divergence_threshold > 0.0) {
            return Err(AncError::param(
                "divergence_threshold",
                format!("{} must be positive", self.divergence_threshold),
            ));
        }
        Ok(())
    }
}

/// Histories are indexed `[channel][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub algorithm: AlgorithmConfig,
    pub error_history: Vec<Vec<f64>>,
    pub disturbance_history: Vec<Vec<f64>>,
    pub control_history: Vec<Vec<f64>>,
    /// Sample at which the run was stopped. The histories include it.
    pub diverged_at: Option<usize>,
    pub final_weights: ControlFilterBank,
}

impl SimResult {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn len(&self) -> usize {
        self.error_history.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Noise reduction with powers summed over all error microphones.
    pub fn noise_reduction(&self, window: usize, hop: usize) -> Result<NrSeries> {
        metrics::noise_reduction_multi(&self.disturbance_history, &self.error_history, window, hop)
    }

    /// Noise reduction over the last `window` samples, all microphones.
    pub fn final_noise_reduction_db(&self, window: usize) -> f64 {
        let n = self.len();
        let start = n.saturating_sub(window);
        let sum = |h: &[Vec<f64>]| -> f64 {
            h.iter()
                .map(|c| c[start..].iter().map(|v| v * v).sum::<f64>())
                .sum()
        };
        10.0 * (sum(&self.disturbance_history) / sum(&self.error_history)).log10()
    }
}

/// Renders the source signal of a scenario.
pub fn render_source(scenario: &Scenario) -> Result<Vec<f64>> {
    let mut v = signal::generate(&scenario.noise)?;
    v.truncate(scenario.duration_samples);
    Ok(v)
}

/// Filters `source` through `paths`, one output per path.
fn filter_all(source: &[f64], paths: &[crate::model::ImpulseResponse]) -> Vec<Vec<f64>> {
    let len = paths.iter().map(|p| p.len()).max().unwrap_or(1);
    let mut hist = TapDelayLine::new(len);
    let mut out = vec![Vec::with_capacity(source.len()); paths.len()];
    for &s in source {
        hist.push(s);
        for (o, p) in out.iter_mut().zip(paths) {
            o.push(dot(p.taps(), hist.as_slice()));
        }
    }
    out
}

pub fn run(scenario: &Scenario) -> Result<SimResult> {
    scenario.validate()?;
    let source = render_source(scenario)?;
    run_with_source(scenario, &source)
}

/// Runs the closed loop on an explicit source signal, ignoring the
/// scenario's noise program.
pub fn run_with_source(scenario: &Scenario, source: &[f64]) -> Result<SimResult> {
    let dims = scenario.dims;
    dims.validate()?;
    scenario.paths.validate(&dims)?;
    scenario.algorithm.validate()?;
    let paths = &scenario.paths;
    let (j_n, k_n, m_n) = (dims.refs, dims.sources, dims.errors);

    let references = filter_all(source, &paths.reference);
    let disturbances = filter_all(source, &paths.primary);

    let limits: Vec<f64> = disturbances
        .iter()
        .map(|d| {
            let head = &d[..d.len().min(DIVERGENCE_REFERENCE_SAMPLES)];
            let r = signal::rms(head);
            // a silent start falls back to the whole run
            let r = if r > 0.0 { r } else { signal::rms(d) };
            scenario.divergence_threshold * r
        })
        .collect();

    let mut bank = ControlFilterBank::new(&dims);
    let mut filtered = FilteredReferenceState::new(&dims);
    let mut ref_lines: Vec<TapDelayLine> = (0..j_n)
        .map(|_| TapDelayLine::new(dims.control_taps))
        .collect();
    let mut control_lines: Vec<TapDelayLine> = (0..k_n)
        .map(|_| TapDelayLine::new(dims.path_taps))
        .collect();

    let mut error_history = vec![Vec::with_capacity(source.len()); m_n];
    let mut control_history = vec![Vec::with_capacity(source.len()); k_n];
    let mut x = vec![0.0; j_n];
    let mut y = vec![0.0; k_n];
    let mut e = vec![0.0; m_n];
    let mut diverged_at = None;

    for n in 0..source.len() {
        for j in 0..j_n {
            x[j] = references[j][n];
            ref_lines[j].push(x[j]);
        }
        bank.control_output_into(&ref_lines, &mut y)?;
        for k in 0..k_n {
            control_lines[k].push(y[k]);
            control_history[k].push(y[k]);
        }
        let mut blown = false;
        for m in 0..m_n {
            let mut acc = disturbances[m][n];
            for (k, line) in control_lines.iter().enumerate() {
                acc += dot(paths.secondary_true[dims.path_index(m, k)].taps(), line.as_slice());
            }
            e[m] = acc;
            error_history[m].push(acc);
            blown |= !acc.is_finite() || acc.abs() > limits[m];
        }
        if blown {
            diverged_at = Some(n);
            break;
        }
        filtered.push_reference(&x, &paths.secondary_estimate)?;
        match scenario.algorithm.apply(&mut bank, &filtered, &e) {
            Ok(()) => {}
            Err(AncError::Divergence { .. }) | Err(AncError::NonFiniteDenominator { .. }) => {
                diverged_at = Some(n);
                break;
            }
            Err(other) => return Err(other),
        }
    }

    let len = error_history[0].len();
    let disturbance_history = disturbances
        .into_iter()
        .map(|mut d| {
            d.truncate(len);
            d
        })
        .collect();

    Ok(SimResult {
        algorithm: scenario.algorithm,
        error_history,
        disturbance_history,
        control_history,
        diverged_at,
        final_weights: bank,
    })
}

/// Runs scenarios that differ only in their algorithm on one shared noise
/// realization. Runs execute in parallel; results keep the input order.
pub fn run_comparison(scenarios: &[Scenario]) -> Result<Vec<SimResult>> {
    let Some(first) = scenarios.first() else {
        return Ok(Vec::new());
    };
    for (i, s) in scenarios.iter().enumerate().skip(1) {
        if s.noise.seed != first.noise.seed {
            return Err(AncError::MismatchedComparison(format!(
                "scenario {i} uses noise seed {} but scenario 0 uses {}",
                s.noise.seed, first.noise.seed
            )));
        }
        if s.noise != first.noise
            || s.paths != first.paths
            || s.dims != first.dims
            || s.duration_samples != first.duration_samples
            || s.divergence_threshold != first.divergence_threshold
        {
            return Err(AncError::MismatchedComparison(format!(
                "scenario {i} differs from scenario 0 in more than its algorithm"
            )));
        }
    }
    for s in scenarios {
        s.validate()?;
    }
    let source = render_source(first)?;
    thread::scope(|scope| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|s| {
                let source = &source;
                scope.spawn(move || run_with_source(s, source))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}
