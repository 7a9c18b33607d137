//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use mcanc::model::{ControlFilterBank, FilteredReferenceState, ImpulseResponse, SystemDims};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn random_ir(rng: &mut ChaCha8Rng, max_len: usize) -> ImpulseResponse {
    let len = rng.gen_range(1..=max_len);
    ImpulseResponse::new(random_vec(rng, len, 1.0), 16000.0).unwrap()
}

/// y[n] = Σ_i h[i] x[n-i], zero initial state, same length as `x`.
pub fn convolve(h: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            let mut acc = 0.0;
            for (i, &hi) in h.iter().enumerate() {
                if i <= n {
                    acc += hi * x[n - i];
                }
            }
            acc
        })
        .collect()
}

/// Sample `x[n - t]`, zero before the start.
pub fn delayed(x: &[f64], n: usize, t: usize) -> f64 {
    if t <= n {
        x[n - t]
    } else {
        0.0
    }
}

/// Weights and momentum indexed `[k][j][tap]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBank {
    pub w: Vec<Vec<Vec<f64>>>,
    pub eta: Vec<Vec<Vec<f64>>>,
}

impl NaiveBank {
    pub fn zeros(d: &SystemDims) -> Self {
        let z = vec![vec![vec![0.0; d.control_taps]; d.refs]; d.sources];
        NaiveBank { w: z.clone(), eta: z }
    }
}

/// Filtered references as `[j][k][m][tap]`, tap 0 newest.
pub type NaiveLines = Vec<Vec<Vec<Vec<f64>>>>;

pub fn naive_power(d: &SystemDims, x: &NaiveLines, m: usize) -> f64 {
    let mut p = 0.0;
    for j in 0..d.refs {
        for k in 0..d.sources {
            for t in 0..d.control_taps {
                p += x[j][k][m][t] * x[j][k][m][t];
            }
        }
    }
    p
}

/// One update of every rule written as plain loop nests. The gradient for
/// each tap is summed over microphones in ascending order starting from 0.
pub fn naive_update(
    d: &SystemDims,
    bank: &mut NaiveBank,
    x: &NaiveLines,
    e: &[f64],
    coef_of: impl Fn(usize, f64) -> f64,
    gamma: Option<f64>,
) {
    for j in 0..d.refs {
        for k in 0..d.sources {
            for t in 0..d.control_taps {
                let mut g = 0.0;
                for m in 0..d.errors {
                    g += coef_of(m, e[m]) * x[j][k][m][t];
                }
                match gamma {
                    None => bank.w[k][j][t] -= g,
                    Some(gm) => {
                        bank.eta[k][j][t] = gm * bank.eta[k][j][t] + g;
                        bank.w[k][j][t] -= bank.eta[k][j][t];
                    }
                }
            }
        }
    }
}

/// Naive closed loop returning the error history `[m][n]`.
///
/// `update` receives the filtered-reference lines and the errors at every
/// sample; it is free to use any rule.
pub fn naive_closed_loop(
    d: &SystemDims,
    source: &[f64],
    reference: &[ImpulseResponse],
    primary: &[ImpulseResponse],
    secondary: &[ImpulseResponse],
    estimate: &[ImpulseResponse],
    mut update: impl FnMut(&mut NaiveBank, &NaiveLines, &[f64]),
) -> Vec<Vec<f64>> {
    let n_samples = source.len();
    let xr: Vec<Vec<f64>> = reference.iter().map(|r| convolve(r.taps(), source)).collect();
    let dist: Vec<Vec<f64>> = primary.iter().map(|p| convolve(p.taps(), source)).collect();
    // x'_jkm[n] over the whole run
    let mut xf = vec![vec![vec![Vec::new(); d.errors]; d.sources]; d.refs];
    for j in 0..d.refs {
        for k in 0..d.sources {
            for m in 0..d.errors {
                xf[j][k][m] = convolve(estimate[m * d.sources + k].taps(), &xr[j]);
            }
        }
    }
    let mut bank = NaiveBank::zeros(d);
    let mut y = vec![Vec::with_capacity(n_samples); d.sources];
    let mut errors = vec![Vec::with_capacity(n_samples); d.errors];
    for n in 0..n_samples {
        for k in 0..d.sources {
            let mut acc = 0.0;
            for j in 0..d.refs {
                for t in 0..d.control_taps {
                    acc += bank.w[k][j][t] * delayed(&xr[j], n, t);
                }
            }
            y[k].push(acc);
        }
        let mut e = vec![0.0; d.errors];
        for m in 0..d.errors {
            let mut acc = dist[m][n];
            for k in 0..d.sources {
                for (i, &s) in secondary[m * d.sources + k].taps().iter().enumerate() {
                    acc += s * delayed(&y[k], n, i);
                }
            }
            e[m] = acc;
            errors[m].push(acc);
        }
        let lines: NaiveLines = (0..d.refs)
            .map(|j| {
                (0..d.sources)
                    .map(|k| {
                        (0..d.errors)
                            .map(|m| (0..d.control_taps).map(|t| delayed(&xf[j][k][m], n, t)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        update(&mut bank, &lines, &e);
    }
    errors
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn random_dims(rng: &mut ChaCha8Rng) -> SystemDims {
    SystemDims::new(
        rng.gen_range(1..=3),
        rng.gen_range(1..=3),
        rng.gen_range(1..=3),
        rng.gen_range(1..=8),
        rng.gen_range(1..=64),
    )
    .unwrap()
}

pub fn lines_of(state: &FilteredReferenceState) -> NaiveLines {
    let d = *state.dims();
    (0..d.refs)
        .map(|j| {
            (0..d.sources)
                .map(|k| (0..d.errors).map(|m| state.line(j, k, m).as_slice().to_vec()).collect())
                .collect()
        })
        .collect()
}

pub fn bank_of(bank: &ControlFilterBank, d: &SystemDims) -> NaiveBank {
    let mut out = NaiveBank::zeros(d);
    for k in 0..d.sources {
        for j in 0..d.refs {
            out.w[k][j] = bank.weight(k, j).to_vec();
            out.eta[k][j] = bank.momentum(k, j).to_vec();
        }
    }
    out
}

pub fn random_bank(rng: &mut ChaCha8Rng, d: &SystemDims) -> ControlFilterBank {
    let mut bank = ControlFilterBank::new(d);
    for k in 0..d.sources {
        for j in 0..d.refs {
            let (w, eta) = bank.filter_mut(k, j);
            w.copy_from_slice(&random_vec(rng, d.control_taps, 0.5));
            eta.copy_from_slice(&random_vec(rng, d.control_taps, 0.1));
        }
    }
    bank
}
