//! `mcanc` subcommands.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::io::config::{self, estimate_file, primary_file, secondary_file, ConfigError};
use crate::io::ir_file::save_impulse_response;
use crate::io::report::{line_chart, CsvTable, Series};
use crate::metrics::{amplitude_db, linear_omegas, momentum_magnitude_response};
use crate::sim::{run_comparison, SimResult};

pub const OUTPUT_DIR_ENV: &str = "MCANC_OUTPUT_DIR";

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mcanc", about = "Multichannel active noise control simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every algorithm in a TOML config and write histories, NR curves
    /// and a summary.
    Run {
        config: PathBuf,
        /// Overrides `[output] dir` from the config.
        #[arg(long, env = OUTPUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Tabulate and plot the magnitude response of the momentum accumulator.
    MomentumResponse {
        /// Forgetting factor; repeat for an overlay.
        #[arg(long = "gamma", required = true)]
        gammas: Vec<f64>,
        #[arg(long, default_value_t = 512)]
        points: usize,
        #[arg(long, env = OUTPUT_DIR_ENV, default_value = ".")]
        out: PathBuf,
    },
    /// Synthesize a path set from a TOML spec and save it as IR files.
    GenPaths {
        spec: PathBuf,
        #[arg(long, env = OUTPUT_DIR_ENV, default_value = "paths")]
        out: PathBuf,
    },
    /// Print the version.
    Version,
}

#[derive(Debug)]
pub struct CliError(String);

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError(e.to_string())
    }
}

impl From<crate::error::AncError> for CliError {
    fn from(e: crate::error::AncError) -> Self {
        CliError(e.to_string())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError(format!("cannot create {}: {e}", dir.display())))
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { config, out } => cmd_run(&config, out.as_deref()),
        Command::MomentumResponse { gammas, points, out } => {
            cmd_momentum_response(&gammas, points, &out).map(|()| EXIT_OK)
        }
        Command::GenPaths { spec, out } => cmd_gen_paths(&spec, &out).map(|()| EXIT_OK),
        Command::Version => {
            println!("mcanc {}", env!("CARGO_PKG_VERSION"));
            Ok(EXIT_OK)
        }
    }
}

fn history_csv(prefix: &str, history: &[Vec<f64>], fs: f64, stride: usize) -> String {
    let mut header = vec!["time_s".to_string()];
    header.extend((1..=history.len()).map(|c| format!("{prefix}{c}_au")));
    let mut table = CsvTable::new(&header);
    let n = history.first().map_or(0, Vec::len);
    let mut row = vec![0.0; history.len() + 1];
    for i in (0..n).step_by(stride) {
        row[0] = i as f64 / fs;
        for (r, h) in row[1..].iter_mut().zip(history) {
            *r = h[i];
        }
        table.row(&row);
    }
    table.into_string()
}

/// NR series as (window end time, value), empty when the run is shorter
/// than one window.
fn nr_points(result: &SimResult, window: usize, hop: usize, fs: f64) -> (Vec<f64>, Vec<f64>) {
    match result.noise_reduction(window, hop) {
        Ok(series) => (
            (0..series.len())
                .map(|i| (series.window_start(i) + window) as f64 / fs)
                .collect(),
            series.values_db,
        ),
        Err(_) => (Vec::new(), Vec::new()),
    }
}

pub fn cmd_run(config_path: &Path, out_override: Option<&Path>) -> Result<i32, CliError> {
    let cfg = config::load_run_config(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let resolved = cfg.resolve(base)?;
    let out_dir = match out_override {
        Some(dir) => dir.to_path_buf(),
        None => base.join(&resolved.output.dir),
    };
    create_dir(&out_dir)?;

    let results = run_comparison(&resolved.scenarios)?;
    let fs = cfg.system.sample_rate_hz;
    let stride = resolved.output.history_stride;
    let (window, hop) = (resolved.output.nr_window, resolved.output.nr_hop);

    // Diverged runs stop early; the longest run carries the full disturbance.
    let longest = results.iter().max_by_key(|r| r.len()).expect("at least one algorithm");
    write_file(
        &out_dir.join("disturbance.csv"),
        &history_csv("d_m", &longest.disturbance_history, fs, stride),
    )?;

    let mut summary = CsvTable::new(&[
        "algorithm",
        "kind",
        "step_size",
        "forgetting_factor",
        "epsilon",
        "diverged",
        "diverged_at_sample",
        "final_nr_db",
    ]);
    let mut series = Vec::new();
    let mut any_diverged = false;
    for (label, result) in resolved.labels.iter().zip(&results) {
        write_file(
            &out_dir.join(format!("{label}_error.csv")),
            &history_csv("e_m", &result.error_history, fs, stride),
        )?;
        write_file(
            &out_dir.join(format!("{label}_control.csv")),
            &history_csv("y_k", &result.control_history, fs, stride),
        )?;
        let (t, nr) = nr_points(result, window, hop, fs);
        let mut table = CsvTable::new(&["time_s", "nr_db"]);
        for (&ti, &v) in t.iter().zip(&nr) {
            table.row(&[ti, v]);
        }
        write_file(&out_dir.join(format!("{label}_nr.csv")), &table.into_string())?;
        series.push(Series {
            label: label.clone(),
            x: t,
            y: nr,
        });

        any_diverged |= result.diverged();
        let alg = &result.algorithm;
        let final_nr = if result.diverged() {
            String::new()
        } else {
            format!("{:?}", result.final_noise_reduction_db(window))
        };
        summary.raw_row(&[
            label.clone(),
            alg.kind.name().to_string(),
            format!("{:?}", alg.step_size),
            format!("{:?}", alg.forgetting_factor),
            format!("{:?}", alg.epsilon),
            result.diverged().to_string(),
            result.diverged_at.map_or(String::new(), |n| n.to_string()),
            final_nr,
        ]);
    }
    write_file(&out_dir.join("summary.csv"), &summary.into_string())?;
    write_file(
        &out_dir.join("nr_overlay.svg"),
        &line_chart("Noise reduction", "time (s)", "NR (dB)", &series),
    )?;

    for (label, r) in resolved.labels.iter().zip(&results) {
        match r.diverged_at {
            Some(n) => eprintln!("{label}: diverged at sample {n}"),
            None => eprintln!("{label}: final NR {:.2} dB", r.final_noise_reduction_db(window)),
        }
    }
    Ok(if any_diverged { EXIT_DIVERGED } else { EXIT_OK })
}

pub fn cmd_momentum_response(gammas: &[f64], points: usize, out_dir: &Path) -> Result<(), CliError> {
    if points < 2 {
        return Err(CliError("--points must be at least 2".into()));
    }
    let omegas = linear_omegas(points);
    let curves = gammas
        .iter()
        .map(|&g| {
            momentum_magnitude_response(g, &omegas)
                .map(|m| m.into_iter().map(amplitude_db).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, _>>()?;
    create_dir(out_dir)?;

    let mut header = vec!["omega_rad".to_string()];
    header.extend(gammas.iter().map(|g| format!("magnitude_db_gamma_{g:?}")));
    let mut table = CsvTable::new(&header);
    let mut row = vec![0.0; gammas.len() + 1];
    for (i, &w) in omegas.iter().enumerate() {
        row[0] = w;
        for (r, c) in row[1..].iter_mut().zip(&curves) {
            *r = c[i];
        }
        table.row(&row);
    }
    write_file(&out_dir.join("momentum_response.csv"), &table.into_string())?;

    let series: Vec<Series> = gammas
        .iter()
        .zip(curves)
        .map(|(g, y)| Series {
            label: format!("gamma = {g}"),
            x: omegas.clone(),
            y,
        })
        .collect();
    write_file(
        &out_dir.join("momentum_response.svg"),
        &line_chart("Momentum magnitude response", "omega (rad/sample)", "magnitude (dB)", &series),
    )
}

pub fn cmd_gen_paths(spec_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| CliError(format!("cannot read {}: {e}", spec_path.display())))?;
    let spec = config::parse_path_spec(&text)?;
    let paths = spec.synthesize()?;
    create_dir(out_dir)?;
    let save = |name: String, ir| {
        let file = out_dir.join(name);
        save_impulse_response(&file, ir).map_err(|e| CliError(e.to_string()))
    };
    for (m, ir) in paths.primary.iter().enumerate() {
        save(primary_file(m), ir)?;
    }
    for m in 0..spec.errors {
        for k in 0..spec.sources {
            let i = m * spec.sources + k;
            save(secondary_file(m, k), &paths.secondary_true[i])?;
            save(estimate_file(m, k), &paths.secondary_estimate[i])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from(["mcanc", "momentum-response", "--gamma", "0.5", "--gamma", "0.9"]).unwrap();
        match cli.command {
            Command::MomentumResponse { gammas, points, .. } => {
                assert_eq!(gammas, vec![0.5, 0.9]);
                assert_eq!(points, 512);
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["mcanc", "momentum-response"]).is_err());
        assert!(Cli::try_parse_from(["mcanc", "run"]).is_err());
    }

    #[test]
    fn history_csv_layout() {
        let text = history_csv("e_m", &[vec![1.0, 2.0, 3.0], vec![0.5, 0.25, 0.125]], 2.0, 2);
        assert_eq!(text, "time_s,e_m1_au,e_m2_au\n0.0,1.0,0.5\n1.0,3.0,0.125\n");
    }
}
