//! Plain-text impulse response files.
//!
//! ```text
//! # sample_rate_hz=16000.0 taps=3
//! 0.0
//! 1.0
//! -0.25
//! ```
//!
//! Samples are written in shortest round-trip form, so saving and loading
//! reproduces every tap bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::model::ImpulseResponse;

#[derive(Debug, Error)]
pub enum IrFileError {
    #[error("empty impulse response")]
    Empty,

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("header declares {header} taps but the file contains {actual} samples")]
    TapCountMismatch { header: usize, actual: usize },

    #[error("line {line}: cannot parse sample {text:?}")]
    BadSample { line: usize, text: String },

    #[error("line {line}: sample is not finite")]
    NonFiniteSample { line: usize },

    #[error("sample rate {found} Hz does not match the scenario's {expected} Hz")]
    SampleRateMismatch { expected: f64, found: f64 },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn parse_header(line: &str) -> Result<(f64, usize), IrFileError> {
    let malformed = |why: &str| {
        IrFileError::MalformedHeader(format!(
            "{why}; expected `# sample_rate_hz=<f> taps=<n>`, got {line:?}"
        ))
    };
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| malformed("missing leading '#'"))?;
    let mut fields = body.split_whitespace();
    let mut field = |key: &str| -> Result<&str, IrFileError> {
        let f = fields.next().ok_or_else(|| malformed(&format!("missing {key}")))?;
        f.strip_prefix(key)
            .and_then(|v| v.strip_prefix('='))
            .ok_or_else(|| malformed(&format!("expected {key}=")))
    };
    let rate_text = field("sample_rate_hz")?;
    let taps_text = field("taps")?;
    if fields.next().is_some() {
        return Err(malformed("trailing fields"));
    }
    let rate: f64 = rate_text
        .parse()
        .map_err(|_| malformed("sample rate is not a number"))?;
    if !(rate.is_finite() && rate > 0.0) {
        return Err(malformed("sample rate must be positive"));
    }
    let taps: usize = taps_text
        .parse()
        .map_err(|_| malformed("tap count is not a non-negative integer"))?;
    Ok((rate, taps))
}

/// Parses the text of an impulse response file.
///
/// When `expected_rate_hz` is given, a file at another rate is rejected.
pub fn parse_impulse_response(
    text: &str,
    expected_rate_hz: Option<f64>,
) -> Result<ImpulseResponse, IrFileError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(IrFileError::Empty)?;
    let (rate, declared) = parse_header(header)?;

    let mut taps = Vec::with_capacity(declared.min(1 << 20));
    for (i, line) in lines {
        let text = line.trim();
        let v: f64 = text.parse().map_err(|_| IrFileError::BadSample {
            line: i + 1,
            text: text.to_string(),
        })?;
        if !v.is_finite() {
            return Err(IrFileError::NonFiniteSample { line: i + 1 });
        }
        taps.push(v);
    }
    if taps.is_empty() && declared == 0 {
        return Err(IrFileError::Empty);
    }
    if taps.len() != declared {
        return Err(IrFileError::TapCountMismatch {
            header: declared,
            actual: taps.len(),
        });
    }
    if let Some(expected) = expected_rate_hz {
        if expected != rate {
            return Err(IrFileError::SampleRateMismatch {
                expected,
                found: rate,
            });
        }
    }
    ImpulseResponse::new(taps, rate).map_err(|e| IrFileError::MalformedHeader(e.to_string()))
}

pub fn format_impulse_response(ir: &ImpulseResponse) -> String {
    let mut out = String::with_capacity(24 * (ir.len() + 1));
    let _ = writeln!(
        out,
        "# sample_rate_hz={:?} taps={}",
        ir.sample_rate_hz(),
        ir.len()
    );
    for t in ir.taps() {
        let _ = writeln!(out, "{t:?}");
    }
    out
}

pub fn load_impulse_response(
    path: &Path,
    expected_rate_hz: Option<f64>,
) -> Result<ImpulseResponse, IrFileError> {
    let text = fs::read_to_string(path).map_err(|source| IrFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_impulse_response(&text, expected_rate_hz)
}

pub fn save_impulse_response(path: &Path, ir: &ImpulseResponse) -> Result<(), IrFileError> {
    fs::write(path, format_impulse_response(ir)).map_err(|source| IrFileError::Io {
        path: path.display().to_string(),
        source,
    })
}
