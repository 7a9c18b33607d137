//! Noise-reduction series, convergence timing and the momentum filter
//! response.

use crate::algorithms::check_forgetting_factor;
use crate::error::{AncError, Result};

pub const DEFAULT_NR_WINDOW: usize = 4096;
pub const DEFAULT_NR_HOP: usize = 1024;

/// Value reported for a window whose error power is zero.
pub const NR_CLAMP_DB: f64 = 120.0;

/// Consecutive windows a threshold must hold for to count as reached.
pub const SUSTAIN_WINDOWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrFlag {
    Valid,
    /// Disturbance power is zero; the value is NaN.
    Undefined,
    /// Error power is zero; the value is [`NR_CLAMP_DB`].
    Clamped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NrSeries {
    pub values_db: Vec<f64>,
    pub flags: Vec<NrFlag>,
    pub window_samples: usize,
    pub hop_samples: usize,
}

impl NrSeries {
    pub fn len(&self) -> usize {
        self.values_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_db.is_empty()
    }

    /// First sample of window `index`.
    pub fn window_start(&self, index: usize) -> usize {
        index * self.hop_samples
    }

    /// A series built directly from values, all flagged valid.
    pub fn from_values(values_db: Vec<f64>, window_samples: usize, hop_samples: usize) -> Self {
        NrSeries {
            flags: vec![NrFlag::Valid; values_db.len()],
            values_db,
            window_samples,
            hop_samples,
        }
    }
}

fn check_windowing(len: usize, window: usize, hop: usize) -> Result<()> {
    if window == 0 || hop == 0 {
        return Err(AncError::param("window", "window and hop must be positive"));
    }
    if window > len {
        return Err(AncError::param(
            "window",
            format!("window {window} exceeds signal length {len}"),
        ));
    }
    Ok(())
}

fn nr_entry(d_power: f64, e_power: f64) -> (f64, NrFlag) {
    if d_power == 0.0 {
        (f64::NAN, NrFlag::Undefined)
    } else if e_power == 0.0 {
        (NR_CLAMP_DB, NrFlag::Clamped)
    } else {
        let v = 10.0 * (d_power / e_power).log10();
        if v > NR_CLAMP_DB {
            (NR_CLAMP_DB, NrFlag::Clamped)
        } else {
            (v, NrFlag::Valid)
        }
    }
}

/// Windowed noise reduction 10·log10(Σd² / Σe²); positive means reduction.
pub fn noise_reduction_db(d: &[f64], e: &[f64], window: usize, hop: usize) -> Result<NrSeries> {
    noise_reduction_multi(&[d], &[e], window, hop)
}

/// Windowed noise reduction with powers summed over channels.
pub fn noise_reduction_multi<D, E>(d: &[D], e: &[E], window: usize, hop: usize) -> Result<NrSeries>
where
    D: AsRef<[f64]>,
    E: AsRef<[f64]>,
{
    if d.len() != e.len() || d.is_empty() {
        return Err(AncError::ShapeMismatch {
            what: "error channels".into(),
            expected: d.len(),
            actual: e.len(),
        });
    }
    let len = d[0].as_ref().len();
    for (dc, ec) in d.iter().zip(e) {
        if dc.as_ref().len() != len || ec.as_ref().len() != len {
            return Err(AncError::ShapeMismatch {
                what: "signal length".into(),
                expected: len,
                actual: ec.as_ref().len().min(dc.as_ref().len()),
            });
        }
    }
    check_windowing(len, window, hop)?;

    let energy = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let mut values = Vec::new();
    let mut flags = Vec::new();
    let mut start = 0;
    while start + window <= len {
        let range = start..start + window;
        let dp: f64 = d.iter().map(|c| energy(&c.as_ref()[range.clone()])).sum();
        let ep: f64 = e.iter().map(|c| energy(&c.as_ref()[range.clone()])).sum();
        let (v, f) = nr_entry(dp, ep);
        values.push(v);
        flags.push(f);
        start += hop;
    }
    Ok(NrSeries {
        values_db: values,
        flags,
        window_samples: window,
        hop_samples: hop,
    })
}

/// First window index at which the series reaches `threshold_db` and stays
/// there for [`SUSTAIN_WINDOWS`] consecutive windows.
pub fn time_to_threshold(series: &NrSeries, threshold_db: f64) -> Option<usize> {
    let v = &series.values_db;
    if v.len() < SUSTAIN_WINDOWS {
        return None;
    }
    (0..=v.len() - SUSTAIN_WINDOWS).find(|&i| v[i..i + SUSTAIN_WINDOWS].iter().all(|&x| x >= threshold_db))
}

/// |H(e^{jω})| = 1 / |1 − γ e^{−jω}| of the momentum accumulator.
pub fn momentum_magnitude_response(gamma: f64, omegas: &[f64]) -> Result<Vec<f64>> {
    check_forgetting_factor(gamma)?;
    Ok(omegas
        .iter()
        .map(|&w| 1.0 / (1.0 - gamma * w.cos()).hypot(gamma * w.sin()))
        .collect())
}

/// `points` frequencies spaced evenly over [0, π], both ends included.
pub fn linear_omegas(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|i| std::f64::consts::PI * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

pub fn amplitude_db(x: f64) -> f64 {
    20.0 * x.log10()
}
