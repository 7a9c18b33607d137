//! Data model of a J×K×M multichannel ANC system.
//!
//! Tensor layouts used throughout the crate:
//!
//! * control filters `w_kj` and momenta `η_kj`: flat, index `(k * J + j) * N`
//! * secondary paths `s_mk` (true and estimated): flat, index `m * K + k`
//! * filtered-reference lines `x'_jkm`: flat, index `(j * K + k) * M + m`
//!
//! Every delay line stores its samples newest first, so element `i` of a line
//! pushed at time `n` holds the sample from time `n - i`.

use serde::{Deserialize, Serialize};

use crate::error::{AncError, Result};

/// Number of pushes between full recomputations of the running power sums.
pub const POWER_REFRESH_INTERVAL: usize = 4096;

/// A running power sum is recomputed once its accumulated rounding error
/// bound exceeds this fraction of its value.
pub const POWER_DRIFT_TOLERANCE: f64 = 1e-10;

/// Channel counts and tap lengths of a multichannel ANC system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDims {
    /// J: reference microphones.
    pub refs: usize,
    /// K: secondary sources.
    pub sources: usize,
    /// M: error microphones.
    pub errors: usize,
    /// N: taps per control filter.
    pub control_taps: usize,
    /// L: maximum taps of a secondary path or its estimate.
    pub path_taps: usize,
}

impl SystemDims {
    pub fn new(
        refs: usize,
        sources: usize,
        errors: usize,
        control_taps: usize,
        path_taps: usize,
    ) -> Result<Self> {
        let dims = SystemDims {
            refs,
            sources,
            errors,
            control_taps,
            path_taps,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("refs", self.refs),
            ("sources", self.sources),
            ("errors", self.errors),
            ("control_taps", self.control_taps),
            ("path_taps", self.path_taps),
        ] {
            if v == 0 {
                return Err(AncError::InvalidDims(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Number of filtered-reference lines, J·K·M.
    pub fn line_count(&self) -> usize {
        self.refs * self.sources * self.errors
    }

    #[inline]
    pub fn line_index(&self, j: usize, k: usize, m: usize) -> usize {
        (j * self.sources + k) * self.errors + m
    }

    #[inline]
    pub fn path_index(&self, m: usize, k: usize) -> usize {
        m * self.sources + k
    }
}

/// A finite, non-empty FIR impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    taps: Vec<f64>,
    sample_rate_hz: f64,
}

impl ImpulseResponse {
    pub fn new(taps: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if taps.is_empty() {
            return Err(AncError::InvalidImpulseResponse(
                "empty impulse response".into(),
            ));
        }
        if let Some(i) = taps.iter().position(|t| !t.is_finite()) {
            return Err(AncError::InvalidImpulseResponse(format!(
                "tap {i} is not finite"
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(AncError::InvalidImpulseResponse(format!(
                "sample rate {sample_rate_hz} must be positive"
            )));
        }
        Ok(ImpulseResponse {
            taps,
            sample_rate_hz,
        })
    }

    pub fn unit_impulse(sample_rate_hz: f64) -> Self {
        Self::delay(0, sample_rate_hz)
    }

    /// A pure delay of `samples` samples with unit gain.
    pub fn delay(samples: usize, sample_rate_hz: f64) -> Self {
        let mut taps = vec![0.0; samples + 1];
        taps[samples] = 1.0;
        ImpulseResponse {
            taps,
            sample_rate_hz,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn into_taps(self) -> Vec<f64> {
        self.taps
    }

    /// Returns a copy with every tap multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.taps.iter().map(|t| t * gain).collect(),
            self.sample_rate_hz,
        )
    }
}

/// Primary, secondary and reference paths of a system.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    /// M paths, noise source to error microphone m.
    pub primary: Vec<ImpulseResponse>,
    /// M·K paths s_mk, secondary source k to error microphone m.
    pub secondary_true: Vec<ImpulseResponse>,
    /// M·K estimates ŝ_mk used to filter the references.
    pub secondary_estimate: Vec<ImpulseResponse>,
    /// J paths, noise source to reference microphone j.
    pub reference: Vec<ImpulseResponse>,
}

impl PathSet {
    /// Builds a path set with a perfect secondary-path estimate and unit
    /// impulse reference pickup.
    pub fn new(
        dims: &SystemDims,
        primary: Vec<ImpulseResponse>,
        secondary_true: Vec<ImpulseResponse>,
    ) -> Result<Self> {
        let fs = primary
            .first()
            .map(|p| p.sample_rate_hz())
            .ok_or_else(|| AncError::ShapeMismatch {
                what: "primary paths".into(),
                expected: dims.errors,
                actual: 0,
            })?;
        let set = PathSet {
            secondary_estimate: secondary_true.clone(),
            reference: vec![ImpulseResponse::unit_impulse(fs); dims.refs],
            primary,
            secondary_true,
        };
        set.validate(dims)?;
        Ok(set)
    }

    pub fn with_estimate(mut self, estimate: Vec<ImpulseResponse>) -> Self {
        self.secondary_estimate = estimate;
        self
    }

    pub fn with_reference(mut self, reference: Vec<ImpulseResponse>) -> Self {
        self.reference = reference;
        self
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.primary[0].sample_rate_hz()
    }

    pub fn validate(&self, dims: &SystemDims) -> Result<()> {
        dims.validate()?;
        let check = |what: &str, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(AncError::ShapeMismatch {
                    what: what.into(),
                    expected,
                    actual,
                })
            }
        };
        check("primary paths", dims.errors, self.primary.len())?;
        check(
            "secondary paths",
            dims.errors * dims.sources,
            self.secondary_true.len(),
        )?;
        check(
            "secondary path estimates",
            dims.errors * dims.sources,
            self.secondary_estimate.len(),
        )?;
        check("reference paths", dims.refs, self.reference.len())?;

        for (what, set) in [
            ("secondary path", &self.secondary_true),
            ("secondary path estimate", &self.secondary_estimate),
        ] {
            if let Some(ir) = set.iter().find(|ir| ir.len() > dims.path_taps) {
                return Err(AncError::ShapeMismatch {
                    what: format!("{what} taps (at most)"),
                    expected: dims.path_taps,
                    actual: ir.len(),
                });
            }
        }

        let fs = self.sample_rate_hz();
        let all = self
            .primary
            .iter()
            .chain(&self.secondary_true)
            .chain(&self.secondary_estimate)
            .chain(&self.reference);
        for ir in all {
            if ir.sample_rate_hz() != fs {
                return Err(AncError::param(
                    "sample_rate_hz",
                    format!(
                        "paths disagree on sample rate ({} vs {fs})",
                        ir.sample_rate_hz()
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Fixed-length delay line, newest sample first.
///
/// Backed by a mirrored buffer of twice the line length so the current
/// contents are always one contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TapDelayLine {
    buf: Vec<f64>,
    pos: usize,
    len: usize,
}

impl TapDelayLine {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "delay line length must be positive");
        TapDelayLine {
            buf: vec![0.0; 2 * len],
            pos: 0,
            len,
        }
    }

    /// Shifts `sample` in and returns the sample that fell off the end.
    #[inline]
    pub fn push(&mut self, sample: f64) -> f64 {
        let expired = self.buf[self.pos + self.len - 1];
        self.pos = if self.pos == 0 {
            self.len - 1
        } else {
            self.pos - 1
        };
        self.buf[self.pos] = sample;
        self.buf[self.pos + self.len] = sample;
        expired
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.buf[self.pos..self.pos + self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn energy(&self) -> f64 {
        self.as_slice().iter().map(|v| v * v).sum()
    }

    pub fn reset(&mut self) {
        self.buf.iter_mut().for_each(|v| *v = 0.0);
        self.pos = 0;
    }
}

impl std::ops::Index<usize> for TapDelayLine {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

/// Dot product over the common prefix of `a` and `b`.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// The K×J control filters and their momentum terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlFilterBank {
    sources: usize,
    refs: usize,
    taps: usize,
    weights: Vec<f64>,
    momentum: Vec<f64>,
}

impl ControlFilterBank {
    pub fn new(dims: &SystemDims) -> Self {
        let size = dims.sources * dims.refs * dims.control_taps;
        ControlFilterBank {
            sources: dims.sources,
            refs: dims.refs,
            taps: dims.control_taps,
            weights: vec![0.0; size],
            momentum: vec![0.0; size],
        }
    }

    pub fn sources(&self) -> usize {
        self.sources
    }

    pub fn refs(&self) -> usize {
        self.refs
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    #[inline]
    fn offset(&self, k: usize, j: usize) -> usize {
        debug_assert!(k < self.sources && j < self.refs);
        (k * self.refs + j) * self.taps
    }

    pub fn weight(&self, k: usize, j: usize) -> &[f64] {
        let o = self.offset(k, j);
        &self.weights[o..o + self.taps]
    }

    pub fn weight_mut(&mut self, k: usize, j: usize) -> &mut [f64] {
        let o = self.offset(k, j);
        &mut self.weights[o..o + self.taps]
    }

    pub fn momentum(&self, k: usize, j: usize) -> &[f64] {
        let o = self.offset(k, j);
        &self.momentum[o..o + self.taps]
    }

    pub fn momentum_mut(&mut self, k: usize, j: usize) -> &mut [f64] {
        let o = self.offset(k, j);
        &mut self.momentum[o..o + self.taps]
    }

    /// Mutable weight and momentum of filter (k, j) at once.
    pub fn filter_mut(&mut self, k: usize, j: usize) -> (&mut [f64], &mut [f64]) {
        let o = self.offset(k, j);
        (
            &mut self.weights[o..o + self.taps],
            &mut self.momentum[o..o + self.taps],
        )
    }

    pub fn all_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn all_momentum(&self) -> &[f64] {
        &self.momentum
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    /// y_k(n) = Σ_j w_kjᵀ x_j(n) for every source k.
    pub fn dot_with_weights(&self, ref_lines: &[TapDelayLine]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.sources];
        self.control_output_into(ref_lines, &mut out)?;
        Ok(out)
    }

    pub fn control_output_into(&self, ref_lines: &[TapDelayLine], out: &mut [f64]) -> Result<()> {
        if ref_lines.len() != self.refs {
            return Err(AncError::ShapeMismatch {
                what: "reference lines".into(),
                expected: self.refs,
                actual: ref_lines.len(),
            });
        }
        if let Some(line) = ref_lines.iter().find(|l| l.len() != self.taps) {
            return Err(AncError::ShapeMismatch {
                what: "reference line length".into(),
                expected: self.taps,
                actual: line.len(),
            });
        }
        for (k, y) in out.iter_mut().enumerate().take(self.sources) {
            let mut acc = 0.0;
            for (j, line) in ref_lines.iter().enumerate() {
                acc += dot(self.weight(k, j), line.as_slice());
            }
            *y = acc;
        }
        Ok(())
    }
}

/// Filtered references x'_jkm = x_j * ŝ_mk held in N-tap lines, plus the
/// per-error-microphone power Σ_j Σ_k ‖x'_jkm‖².
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredReferenceState {
    dims: SystemDims,
    /// Input history of each reference, L samples, feeding the convolutions.
    inputs: Vec<TapDelayLine>,
    lines: Vec<TapDelayLine>,
    power: Vec<f64>,
    /// Upper bound on the rounding error accumulated in each power sum.
    drift: Vec<f64>,
    since_refresh: usize,
}

impl FilteredReferenceState {
    pub fn new(dims: &SystemDims) -> Self {
        FilteredReferenceState {
            dims: *dims,
            inputs: (0..dims.refs)
                .map(|_| TapDelayLine::new(dims.path_taps))
                .collect(),
            lines: (0..dims.line_count())
                .map(|_| TapDelayLine::new(dims.control_taps))
                .collect(),
            power: vec![0.0; dims.errors],
            drift: vec![0.0; dims.errors],
            since_refresh: 0,
        }
    }

    pub fn dims(&self) -> &SystemDims {
        &self.dims
    }

    pub fn line(&self, j: usize, k: usize, m: usize) -> &TapDelayLine {
        &self.lines[self.dims.line_index(j, k, m)]
    }

    pub fn lines(&self) -> &[TapDelayLine] {
        &self.lines
    }

    /// Running Σ_j Σ_k ‖x'_jkm‖² for error microphone `m`.
    pub fn power(&self, m: usize) -> f64 {
        self.power[m]
    }

    pub fn powers(&self) -> &[f64] {
        &self.power
    }

    /// The same sum as [`power`](Self::power), recomputed from the lines.
    pub fn direct_power(&self, m: usize) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.dims.refs {
            for k in 0..self.dims.sources {
                acc += self.line(j, k, m).energy();
            }
        }
        acc
    }

    /// Advances every line by one sample of x_j filtered through ŝ_mk.
    ///
    /// `s_hat` is laid out `m * K + k`. Nothing is modified when an input
    /// sample is rejected.
    pub fn push_reference(&mut self, x: &[f64], s_hat: &[ImpulseResponse]) -> Result<()> {
        let d = self.dims;
        if x.len() != d.refs {
            return Err(AncError::ShapeMismatch {
                what: "reference samples".into(),
                expected: d.refs,
                actual: x.len(),
            });
        }
        if s_hat.len() != d.errors * d.sources {
            return Err(AncError::ShapeMismatch {
                what: "secondary path estimates".into(),
                expected: d.errors * d.sources,
                actual: s_hat.len(),
            });
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(AncError::NonFiniteReference { channel: j });
        }
        if let Some(ir) = s_hat.iter().find(|ir| ir.len() > d.path_taps) {
            return Err(AncError::ShapeMismatch {
                what: "secondary path estimate taps (at most)".into(),
                expected: d.path_taps,
                actual: ir.len(),
            });
        }

        for (j, &sample) in x.iter().enumerate() {
            self.inputs[j].push(sample);
            let history = self.inputs[j].as_slice();
            for k in 0..d.sources {
                for m in 0..d.errors {
                    let v = dot(s_hat[d.path_index(m, k)].taps(), history);
                    let expired = self.lines[d.line_index(j, k, m)].push(v);
                    let delta = v * v - expired * expired;
                    self.power[m] += delta;
                    self.drift[m] += f64::EPSILON * (delta.abs() + self.power[m].abs());
                }
            }
        }

        self.since_refresh += 1;
        if self.since_refresh >= POWER_REFRESH_INTERVAL {
            self.refresh_power();
        } else {
            // after a loud passage leaves the lines, cancellation can leave
            // an error far larger than what remains
            for m in 0..d.errors {
                if self.drift[m] > POWER_DRIFT_TOLERANCE * self.power[m] {
                    self.power[m] = self.direct_power(m);
                    self.drift[m] = 0.0;
                }
            }
        }
        Ok(())
    }

    /// Replaces the running power sums with a direct recomputation.
    pub fn refresh_power(&mut self) {
        for m in 0..self.dims.errors {
            self.power[m] = self.direct_power(m);
            self.drift[m] = 0.0;
        }
        self.since_refresh = 0;
    }

    pub fn reset(&mut self) {
        *self = Self::new(&self.dims);
    }
}
