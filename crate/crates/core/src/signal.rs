//! Noise and acoustic-path synthesis.
//!
//! Levels are expressed in dB relative to unit RMS: a broadband segment at
//! `level_db = 10` has `20·log10(RMS) = 10`. Every generator draws from a
//! ChaCha8 stream seeded explicitly, so a given program always yields the
//! same samples.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{AncError, Result};
use crate::model::ImpulseResponse;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 16_000.0;

/// Number of taps of the noise-shaping bandpass filters.
pub const DEFAULT_BANDPASS_ORDER: usize = 255;

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_band(low_hz: f64, high_hz: f64, sample_rate_hz: f64) -> Result<()> {
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(AncError::param(
            "sample_rate_hz",
            format!("{sample_rate_hz} must be positive"),
        ));
    }
    let nyquist = sample_rate_hz / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(AncError::param(
            "band_hz",
            format!("need 0 < low < high < {nyquist} Hz, got ({low_hz}, {high_hz})"),
        ));
    }
    Ok(())
}

/// Linear-phase Hamming-windowed sinc bandpass with `order` taps.
///
/// `order` must be odd so the response is symmetric about a center tap.
pub fn design_bandpass(
    low_hz: f64,
    high_hz: f64,
    order: usize,
    sample_rate_hz: f64,
) -> Result<ImpulseResponse> {
    check_band(low_hz, high_hz, sample_rate_hz)?;
    if order.is_multiple_of(2) {
        return Err(AncError::param("order", format!("{order} must be odd")));
    }
    let fl = low_hz / sample_rate_hz;
    let fh = high_hz / sample_rate_hz;
    let center = (order / 2) as isize;
    let sinc = |x: f64| if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    let taps = (0..order)
        .map(|i| {
            let t = i as isize - center;
            let ideal = 2.0 * fh * sinc(2.0 * fh * t as f64) - 2.0 * fl * sinc(2.0 * fl * t as f64);
            let window = if order == 1 {
                1.0
            } else {
                0.54 - 0.46 * (2.0 * PI * i as f64 / (order - 1) as f64).cos()
            };
            ideal * window
        })
        .collect::<Vec<_>>();
    // mirror the first half so the symmetry is exact
    let mut taps = taps;
    for i in 0..order / 2 {
        taps[order - 1 - i] = taps[i];
    }
    ImpulseResponse::new(taps, sample_rate_hz)
}

/// Magnitude of an FIR response at `freq_hz`.
pub fn magnitude_at(ir: &ImpulseResponse, freq_hz: f64) -> f64 {
    let w = 2.0 * PI * freq_hz / ir.sample_rate_hz();
    let (mut re, mut im) = (0.0, 0.0);
    for (n, &h) in ir.taps().iter().enumerate() {
        re += h * (w * n as f64).cos();
        im -= h * (w * n as f64).sin();
    }
    re.hypot(im)
}

/// White Gaussian noise through a bandpass, steady state only.
fn bandlimited_gaussian(
    rng: &mut ChaCha8Rng,
    len: usize,
    band_hz: (f64, f64),
    sample_rate_hz: f64,
) -> Result<Vec<f64>> {
    let filter = design_bandpass(band_hz.0, band_hz.1, DEFAULT_BANDPASS_ORDER, sample_rate_hz)?;
    let h = filter.taps();
    let white: Vec<f64> = (0..len + h.len() - 1)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(white
        .windows(h.len())
        .map(|w| w.iter().zip(h).map(|(a, b)| a * b).sum())
        .collect())
}

fn scale_to_rms(x: &mut [f64], level_db: f64) {
    let r = rms(x);
    if r > 0.0 {
        let g = db_to_amplitude(level_db) / r;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

/// Parameters of periodic decaying bursts (pile-driving surrogate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulsiveParams {
    /// Burst onsets per second.
    pub rate_hz: f64,
    /// Time constant of the exponential burst envelope.
    pub decay_s: f64,
    /// Nominal burst peak amplitude in dB re 1.
    pub level_db: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// Band of the burst carrier.
    #[serde(default = "default_impulsive_band")]
    pub band_hz: (f64, f64),
    /// Relative peak-amplitude jitter between bursts, in [0, 1).
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_impulsive_band() -> (f64, f64) {
    (50.0, 800.0)
}

fn default_jitter() -> f64 {
    0.2
}

impl ImpulsiveParams {
    pub fn new(rate_hz: f64, decay_s: f64, level_db: f64, duration_s: f64, seed: u64) -> Self {
        ImpulsiveParams {
            rate_hz,
            decay_s,
            level_db,
            duration_s,
            seed,
            band_hz: default_impulsive_band(),
            jitter: default_jitter(),
        }
    }
}

/// Carrier tone spacing of the impulsive bursts.
const CARRIER_SPACING_HZ: f64 = 10.0;

/// Flat-spectrum multisine with Schroeder phases over `band_hz`, scaled to
/// unit peak. Its crest factor stays well below that of Gaussian noise.
fn schroeder_multisine(len: usize, band_hz: (f64, f64), sample_rate_hz: f64) -> Vec<f64> {
    let first = (band_hz.0 / CARRIER_SPACING_HZ).ceil().max(1.0) as usize;
    let last = (band_hz.1 / CARRIER_SPACING_HZ).floor() as usize;
    let freqs: Vec<f64> = (first..=last.max(first))
        .map(|h| h as f64 * CARRIER_SPACING_HZ)
        .collect();
    let count = freqs.len() as f64;
    let phases: Vec<f64> = (1..=freqs.len())
        .map(|i| -PI * (i as f64) * (i as f64 - 1.0) / count)
        .collect();
    let value = |n: usize| {
        let t = n as f64 / sample_rate_hz;
        freqs
            .iter()
            .zip(&phases)
            .map(|(f, p)| (2.0 * PI * f * t + p).cos())
            .sum::<f64>()
    };
    let period = (sample_rate_hz / CARRIER_SPACING_HZ).round() as usize;
    let peak = (0..period.max(1))
        .map(|n| value(n).abs())
        .fold(0.0, f64::max);
    (0..len).map(|n| value(n) / peak).collect()
}

/// Periodic exponentially decaying broadband bursts with jittered amplitude.
///
/// Onsets fall every `1 / rate_hz` seconds starting at zero; each burst
/// lasts until the next onset.
pub fn generate_impulsive(params: &ImpulsiveParams, sample_rate_hz: f64) -> Result<Vec<f64>> {
    let p = params;
    check_band(p.band_hz.0, p.band_hz.1, sample_rate_hz)?;
    if !(p.rate_hz > 0.0 && p.duration_s > 0.0 && p.rate_hz * p.duration_s >= 1.0) {
        return Err(AncError::param(
            "rate_hz",
            format!(
                "need at least one burst: rate {} Hz over {} s",
                p.rate_hz, p.duration_s
            ),
        ));
    }
    if p.decay_s.is_nan() || p.decay_s <= 0.0 {
        return Err(AncError::param("decay_s", format!("{} must be positive", p.decay_s)));
    }
    if !(0.0..1.0).contains(&p.jitter) {
        return Err(AncError::param("jitter", format!("{} outside [0, 1)", p.jitter)));
    }

    let len = (p.duration_s * sample_rate_hz).round() as usize;
    let period = sample_rate_hz / p.rate_hz;
    let carrier = schroeder_multisine(len, p.band_hz, sample_rate_hz);
    let amplitude = db_to_amplitude(p.level_db);
    let bursts = (len as f64 / period).ceil() as usize;
    let mut rng = rng_for(p.seed, 0);
    let gains: Vec<f64> = (0..bursts)
        .map(|_| amplitude * (1.0 + p.jitter * rng.gen_range(-1.0..=1.0)))
        .collect();

    Ok(carrier
        .iter()
        .enumerate()
        .map(|(n, c)| {
            let burst = ((n as f64 / period).floor() as usize).min(bursts - 1);
            let since = (n as f64 - burst as f64 * period) / sample_rate_hz;
            gains[burst] * (-since / p.decay_s).exp() * c
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSegment {
    /// Band-limited Gaussian noise scaled to `level_db` RMS.
    Broadband {
        band_hz: (f64, f64),
        level_db: f64,
        duration_s: f64,
    },
    /// Decaying bursts; `level_db` is the nominal burst peak.
    Impulsive {
        band_hz: (f64, f64),
        level_db: f64,
        duration_s: f64,
        rate_hz: f64,
        decay_s: f64,
        #[serde(default = "default_jitter")]
        jitter: f64,
    },
    /// Harmonic tone stack over a broadband floor, scaled to `level_db` RMS.
    Machine {
        band_hz: (f64, f64),
        level_db: f64,
        duration_s: f64,
        fundamental_hz: f64,
        harmonics: usize,
        /// Floor level relative to the tone stack.
        #[serde(default = "default_floor_db")]
        floor_db: f64,
    },
}

fn default_floor_db() -> f64 {
    -20.0
}

impl NoiseSegment {
    pub fn broadband(band_hz: (f64, f64), level_db: f64, duration_s: f64) -> Self {
        NoiseSegment::Broadband {
            band_hz,
            level_db,
            duration_s,
        }
    }

    pub fn band_hz(&self) -> (f64, f64) {
        match self {
            NoiseSegment::Broadband { band_hz, .. }
            | NoiseSegment::Impulsive { band_hz, .. }
            | NoiseSegment::Machine { band_hz, .. } => *band_hz,
        }
    }

    pub fn duration_s(&self) -> f64 {
        match self {
            NoiseSegment::Broadband { duration_s, .. }
            | NoiseSegment::Impulsive { duration_s, .. }
            | NoiseSegment::Machine { duration_s, .. } => *duration_s,
        }
    }

    pub fn samples(&self, sample_rate_hz: f64) -> usize {
        (self.duration_s() * sample_rate_hz).round() as usize
    }

    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        let (lo, hi) = self.band_hz();
        check_band(lo, hi, sample_rate_hz)?;
        let d = self.duration_s();
        if !(d.is_finite() && d > 0.0) {
            return Err(AncError::param("duration_s", format!("{d} must be positive")));
        }
        match self {
            NoiseSegment::Impulsive {
                rate_hz, decay_s, ..
            } if !(*rate_hz > 0.0 && *decay_s > 0.0 && rate_hz * d >= 1.0) => Err(AncError::param(
                "rate_hz",
                "impulsive segment needs positive rate and decay and at least one burst",
            )),
            NoiseSegment::Machine {
                fundamental_hz,
                harmonics,
                ..
            } if !(*fundamental_hz > 0.0 && *harmonics >= 1) => Err(AncError::param(
                "fundamental_hz",
                "machine segment needs a positive fundamental and at least one harmonic",
            )),
            _ => Ok(()),
        }
    }
}

/// Concatenation of noise segments sharing one seed and sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProgram {
    pub segments: Vec<NoiseSegment>,
    pub seed: u64,
    pub sample_rate_hz: f64,
}

impl NoiseProgram {
    pub fn new(segments: Vec<NoiseSegment>, seed: u64, sample_rate_hz: f64) -> Result<Self> {
        let p = NoiseProgram {
            segments,
            seed,
            sample_rate_hz,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(AncError::param("segments", "noise program has no segments"));
        }
        for s in &self.segments {
            s.validate(self.sample_rate_hz)?;
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.segments
            .iter()
            .map(|s| s.samples(self.sample_rate_hz))
            .sum()
    }

    /// Sample offsets at which each segment begins.
    pub fn segment_starts(&self) -> Vec<usize> {
        self.segments
            .iter()
            .scan(0, |acc, s| {
                let start = *acc;
                *acc += s.samples(self.sample_rate_hz);
                Some(start)
            })
            .collect()
    }
}

/// Renders a noise program. Segment `i` draws from stream `i` of the
/// program seed.
pub fn generate(program: &NoiseProgram) -> Result<Vec<f64>> {
    program.validate()?;
    let fs = program.sample_rate_hz;
    let mut out = Vec::with_capacity(program.total_samples());
    for (i, seg) in program.segments.iter().enumerate() {
        let len = seg.samples(fs);
        let mut rng = rng_for(program.seed, i as u64);
        let samples = match *seg {
            NoiseSegment::Broadband {
                band_hz, level_db, ..
            } => {
                let mut x = bandlimited_gaussian(&mut rng, len, band_hz, fs)?;
                scale_to_rms(&mut x, level_db);
                x
            }
            NoiseSegment::Impulsive {
                band_hz,
                level_db,
                duration_s,
                rate_hz,
                decay_s,
                jitter,
            } => generate_impulsive(
                &ImpulsiveParams {
                    rate_hz,
                    decay_s,
                    level_db,
                    duration_s,
                    seed: rng.gen(),
                    band_hz,
                    jitter,
                },
                fs,
            )?,
            NoiseSegment::Machine {
                band_hz,
                level_db,
                fundamental_hz,
                harmonics,
                floor_db,
                ..
            } => {
                let mut x = machine_noise(&mut rng, len, band_hz, fundamental_hz, harmonics, floor_db, fs)?;
                scale_to_rms(&mut x, level_db);
                x
            }
        };
        out.extend(samples);
    }
    Ok(out)
}

fn machine_noise(
    rng: &mut ChaCha8Rng,
    len: usize,
    band_hz: (f64, f64),
    fundamental_hz: f64,
    harmonics: usize,
    floor_db: f64,
    fs: f64,
) -> Result<Vec<f64>> {
    let tones: Vec<(f64, f64, f64)> = (1..=harmonics)
        .map(|h| h as f64 * fundamental_hz)
        .filter(|&f| f < fs / 2.0)
        .enumerate()
        .map(|(i, f)| (f, 1.0 / (i as f64 + 1.0).sqrt(), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let mut x: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 / fs;
            tones
                .iter()
                .map(|(f, a, p)| a * (2.0 * PI * f * t + p).sin())
                .sum()
        })
        .collect();
    let tone_rms = rms(&x);
    let mut floor = bandlimited_gaussian(rng, len, band_hz, fs)?;
    scale_to_rms(&mut floor, floor_db + 20.0 * tone_rms.max(f64::MIN_POSITIVE).log10());
    x.iter_mut().zip(&floor).for_each(|(a, b)| *a += b);
    Ok(x)
}

/// Synthetic acoustic path: `delay_samples` zeros followed by Gaussian taps
/// under an `exp(-decay_rate · i)` envelope, normalized to unit peak.
///
/// An infinite `decay_rate` gives a single tap of magnitude one at
/// `delay_samples`.
pub fn synthesize_path(
    delay_samples: usize,
    length: usize,
    decay_rate: f64,
    seed: u64,
    sample_rate_hz: f64,
) -> Result<ImpulseResponse> {
    if delay_samples >= length {
        return Err(AncError::param(
            "delay_samples",
            format!("delay {delay_samples} must be shorter than the path length {length}"),
        ));
    }
    if decay_rate.is_nan() || decay_rate < 0.0 {
        return Err(AncError::param(
            "decay_rate",
            format!("{decay_rate} must be non-negative"),
        ));
    }
    let mut rng = rng_for(seed, 0);
    let mut taps = vec![0.0; length];
    for (i, t) in taps[delay_samples..].iter_mut().enumerate() {
        let envelope = if i == 0 {
            1.0
        } else {
            (-decay_rate * i as f64).exp()
        };
        let g: f64 = rng.sample(StandardNormal);
        *t = g * envelope;
    }
    let peak = taps.iter().fold(0.0f64, |a, t| a.max(t.abs()));
    if peak > 0.0 {
        taps.iter_mut().for_each(|t| *t /= peak);
    }
    ImpulseResponse::new(taps, sample_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = DEFAULT_SAMPLE_RATE_HZ;

    fn db(x: f64) -> f64 {
        20.0 * x.log10()
    }

    #[test]
    fn full_band_limit_is_allpass() {
        let ir = design_bandpass(1e-3, FS / 2.0 - 1e-3, 31, FS).unwrap();
        let c = ir.taps()[15];
        assert!((c - 1.0).abs() < 1e-6, "center tap {c}");
        assert!(ir.taps().iter().enumerate().all(|(i, t)| i == 15 || t.abs() < 1e-6));
    }

    #[test]
    fn bandpass_is_symmetric() {
        for order in [1, 31, 127, 255] {
            let ir = design_bandpass(200.0, 800.0, order, FS).unwrap();
            let t = ir.taps();
            for i in 0..order {
                assert_eq!(t[i], t[order - 1 - i]);
            }
        }
    }

    #[test]
    fn bandpass_stopband_at_default_order() {
        let ir = design_bandpass(200.0, 800.0, DEFAULT_BANDPASS_ORDER, FS).unwrap();
        let center = db(magnitude_at(&ir, 500.0));
        assert!(center.abs() <= 0.5, "center gain {center} dB");
        assert!(db(magnitude_at(&ir, 100.0)) <= -40.0);
        assert!(db(magnitude_at(&ir, 1600.0)) <= -40.0);
    }

    #[test]
    fn order_127_is_too_short_for_the_lower_edge() {
        let ir = design_bandpass(200.0, 800.0, 127, FS).unwrap();
        assert!(db(magnitude_at(&ir, 1600.0)) <= -40.0);
        assert!(db(magnitude_at(&ir, 100.0)) > -40.0);
    }

    #[test]
    fn bandpass_rejects_bad_input() {
        assert!(design_bandpass(800.0, 200.0, 127, FS).is_err());
        assert!(design_bandpass(0.0, 200.0, 127, FS).is_err());
        assert!(design_bandpass(200.0, 8000.0, 127, FS).is_err());
        assert!(design_bandpass(200.0, 800.0, 128, FS).is_err());
    }

    #[test]
    fn broadband_level_calibration() {
        let p = NoiseProgram::new(
            vec![NoiseSegment::broadband((200.0, 800.0), 0.0, 8.0)],
            3,
            FS,
        )
        .unwrap();
        let x = generate(&p).unwrap();
        assert_eq!(x.len(), 128_000);
        assert!((rms(&x) - 1.0).abs() <= 0.02);
    }

    #[test]
    fn level_step_of_five_db() {
        let p = NoiseProgram::new(
            vec![
                NoiseSegment::broadband((200.0, 800.0), 10.0, 7.0),
                NoiseSegment::broadband((100.0, 1600.0), 15.0, 7.0),
            ],
            11,
            FS,
        )
        .unwrap();
        let x = generate(&p).unwrap();
        let half = p.segment_starts()[1];
        let step = db(rms(&x[half..])) - db(rms(&x[..half]));
        assert!((step - 5.0).abs() <= 0.2, "step {step} dB");
    }

    #[test]
    fn generation_is_deterministic() {
        let p = NoiseProgram::new(
            vec![
                NoiseSegment::broadband((200.0, 800.0), 10.0, 0.5),
                NoiseSegment::Machine {
                    band_hz: (100.0, 2000.0),
                    level_db: 0.0,
                    duration_s: 0.5,
                    fundamental_hz: 120.0,
                    harmonics: 8,
                    floor_db: -20.0,
                },
            ],
            5,
            FS,
        )
        .unwrap();
        assert_eq!(generate(&p).unwrap(), generate(&p).unwrap());
        let mut q = p.clone();
        q.seed = 6;
        assert_ne!(generate(&p).unwrap(), generate(&q).unwrap());
    }

    #[test]
    fn machine_segment_is_calibrated() {
        let p = NoiseProgram::new(
            vec![NoiseSegment::Machine {
                band_hz: (100.0, 2000.0),
                level_db: 6.0,
                duration_s: 1.0,
                fundamental_hz: 100.0,
                harmonics: 10,
                floor_db: -20.0,
            }],
            1,
            FS,
        )
        .unwrap();
        let x = generate(&p).unwrap();
        assert!((db(rms(&x)) - 6.0).abs() < 1e-9);
    }

    #[test]
    fn program_validation() {
        assert!(NoiseProgram::new(vec![], 0, FS).is_err());
        assert!(NoiseProgram::new(vec![NoiseSegment::broadband((900.0, 800.0), 0.0, 1.0)], 0, FS).is_err());
        assert!(NoiseProgram::new(vec![NoiseSegment::broadband((100.0, 800.0), 0.0, 0.0)], 0, FS).is_err());
    }

    fn crest_factor(x: &[f64]) -> f64 {
        x.iter().fold(0.0f64, |a, v| a.max(v.abs())) / rms(x)
    }

    #[test]
    fn impulsive_crest_factor() {
        let x = generate_impulsive(&ImpulsiveParams::new(2.0, 0.05, 0.0, 5.0, 1), FS).unwrap();
        assert!(crest_factor(&x) >= 4.0, "crest {}", crest_factor(&x));
        let flat = generate_impulsive(&ImpulsiveParams::new(2.0, 5.0, 0.0, 5.0, 1), FS).unwrap();
        assert!(crest_factor(&flat) < 4.0, "crest {}", crest_factor(&flat));
    }

    #[test]
    fn impulsive_level_is_linear() {
        let a = generate_impulsive(&ImpulsiveParams::new(2.0, 0.05, 0.0, 3.0, 9), FS).unwrap();
        let b = generate_impulsive(&ImpulsiveParams::new(2.0, 0.05, 6.0, 3.0, 9), FS).unwrap();
        let peak = |x: &[f64]| x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let ratio = peak(&b) / peak(&a);
        assert!((ratio / 2.0 - 1.0).abs() <= 0.01, "ratio {ratio}");
    }

    #[test]
    fn impulsive_needs_a_burst() {
        assert!(generate_impulsive(&ImpulsiveParams::new(0.5, 0.05, 0.0, 1.0, 0), FS).is_err());
    }

    #[test]
    fn path_delay_and_limits() {
        let ir = synthesize_path(5, 64, 0.1, 7, FS).unwrap();
        assert!(ir.taps()[..5].iter().all(|&t| t == 0.0));
        let peak = ir.taps().iter().fold(0.0f64, |a, t| a.max(t.abs()));
        assert_eq!(peak, 1.0);
        assert_eq!(ir, synthesize_path(5, 64, 0.1, 7, FS).unwrap());

        let pure = synthesize_path(9, 32, f64::INFINITY, 3, FS).unwrap();
        for (i, &t) in pure.taps().iter().enumerate() {
            if i == 9 {
                assert_eq!(t.abs(), 1.0);
            } else {
                assert_eq!(t, 0.0);
            }
        }
        assert!(synthesize_path(32, 32, 0.1, 0, FS).is_err());
    }
}
