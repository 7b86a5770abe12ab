//! Pipeline dispatch and artifact emission.
//!
//! Every run writes `<mode>-<hash>-manifest.json` plus mode-specific tables
//! into the output directory, where `<hash>` is the first 12 hex digits of
//! the SHA-256 of the canonical scenario (the validated config without its
//! output directory). Existing files are never replaced unless
//! [`RunOptions::force`] is set. Outputs carry no timestamps or host
//! information, so identical scenarios give identical bytes.

use std::path::{Path, PathBuf};

use excess_noise::langevin::{noise_growth, simulate_ensemble, EnsembleSettings, LangevinError};
use excess_noise::mode_basis::BasisError;
use excess_noise::moments::{
    correlation_series, default_step, quadrature_variance, Frame, MomentError, MomentState,
};
use excess_noise::paraxial::{
    gaussian_beam_width, transverse_quasimodes, ParaxialError, Propagator, TransverseField,
    TransverseGrid,
};
use excess_noise::quasimodes::{petermann_k_integral, ModeFlag, QuasiModeError};
use excess_noise::reservoir::ProfileError;
use excess_noise::{
    solve_quasimodes, CouplingMatrices, DriftMatrix, ModeBasis, QuasiModeSet, RateProfile, C64,
};
use nalgebra::DVector;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, Format, Mode, ScenarioConfig, DEFAULT_SIMULATE_DT};

pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const USAGE: u8 = 2;
    pub const CONFIG_READ: u8 = 3;
    pub const CONFIG_INVALID: u8 = 4;
    pub const OUTPUT_EXISTS: u8 = 5;
    pub const OUTPUT_IO: u8 = 6;
    pub const DEGENERATE: u8 = 7;
    pub const BASIS: u8 = 8;
    pub const PROFILE: u8 = 9;
    pub const QUASIMODES: u8 = 10;
    pub const MOMENTS: u8 = 11;
    pub const LANGEVIN: u8 = 12;
    pub const PARAXIAL: u8 = 13;
    pub const ENCODE: u8 = 14;
}

pub const EXIT_CODES_HELP: &str = "\
Exit codes:
   0  success
   2  invalid command line
   3  scenario file unreadable or not valid TOML (line and column reported)
   4  scenario failed validation (every failure listed)
   5  an output file already exists (rerun with --force)
   6  output directory or file could not be written
   7  flagged degenerate or exceptional quasi modes (available outputs still written)
   8  mode basis error
   9  reservoir profile error
  10  quasi-mode solver error
  11  moment integration error
  12  Monte-Carlo simulation error
  13  paraxial propagation error
  14  output encoding error

Environment:
  EXCESS_NOISE_OUT  output directory; overrides the scenario file, --out overrides it";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{} already exists; pass --force to overwrite", .path.display())]
    OutputExists { path: PathBuf },
    #[error("cannot write {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("flagged quasi modes: {}", describe_flags(.flags))]
    Degenerate {
        flags: Vec<(usize, ModeFlag)>,
        report: RunReport,
    },
    #[error("mode basis: {0}")]
    Basis(#[from] BasisError),
    #[error("reservoir profile: {0}")]
    Profile(#[from] ProfileError),
    #[error("quasi modes: {0}")]
    QuasiModes(#[from] QuasiModeError),
    #[error("moments: {0}")]
    Moments(#[from] MomentError),
    #[error("simulation: {0}")]
    Langevin(#[from] LangevinError),
    #[error("paraxial: {0}")]
    Paraxial(#[from] ParaxialError),
    #[error("encoding {name}: {message}")]
    Encode { name: String, message: String },
}

fn describe_flags(flags: &[(usize, ModeFlag)]) -> String {
    flags
        .iter()
        .map(|(nu, f)| format!("mode {nu} {f}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::OutputExists { .. } => exit::OUTPUT_EXISTS,
            RunError::Io { .. } => exit::OUTPUT_IO,
            RunError::Degenerate { .. } => exit::DEGENERATE,
            RunError::Basis(_) => exit::BASIS,
            RunError::Profile(_) => exit::PROFILE,
            RunError::QuasiModes(_) => exit::QUASIMODES,
            RunError::Moments(_) => exit::MOMENTS,
            RunError::Langevin(_) => exit::LANGEVIN,
            RunError::Paraxial(_) => exit::PARAXIAL,
            RunError::Encode { .. } => exit::ENCODE,
        }
    }
}

pub fn config_exit_code(err: &ConfigError) -> u8 {
    match err {
        ConfigError::Io { .. } | ConfigError::Parse { .. } => exit::CONFIG_READ,
        ConfigError::Invalid { .. } => exit::CONFIG_INVALID,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    /// Full hex SHA-256 of the canonical scenario.
    pub hash: String,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn manifest(&self) -> &Path {
        &self.files[0]
    }
}

/// The config as echoed in manifests and hashed: the output directory says
/// where a run is stored, not what it is, so it is left out.
pub fn canonical_config(config: &ScenarioConfig) -> serde_json::Value {
    let mut value = serde_json::to_value(config).expect("config is plain data");
    if let Some(outputs) = value.get_mut("outputs").and_then(|o| o.as_object_mut()) {
        outputs.remove("directory");
    }
    value
}

pub fn scenario_hash(config: &ScenarioConfig) -> String {
    let bytes = serde_json::to_vec(&canonical_config(config)).expect("config is plain data");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn file_stem(config: &ScenarioConfig) -> String {
    format!("{}-{}", config.mode, &scenario_hash(config)[..12])
}

struct Artifact {
    suffix: &'static str,
    bytes: Vec<u8>,
}

#[derive(Default)]
struct Outcome {
    artifacts: Vec<Artifact>,
    warnings: Vec<String>,
    flags: Vec<(usize, ModeFlag)>,
    summary: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    scenario_hash: &'a str,
    mode: Mode,
    seed: Option<u64>,
    versions: Versions,
    config: serde_json::Value,
    files: Vec<String>,
    warnings: &'a [String],
    flags: Vec<String>,
    summary: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct Versions {
    #[serde(rename = "excess-noise")]
    library: &'static str,
    #[serde(rename = "excess-noise-cli")]
    cli: &'static str,
}

pub fn run_scenario(config: &ScenarioConfig, options: &RunOptions) -> Result<RunReport, RunError> {
    let hash = scenario_hash(config);
    let stem = file_stem(config);
    let dir = &config.outputs.directory;
    let manifest_path = dir.join(format!("{stem}-manifest.json"));
    if !options.force && manifest_path.exists() {
        return Err(RunError::OutputExists {
            path: manifest_path,
        });
    }

    let outcome = match config.mode {
        Mode::Quasimodes => run_quasimodes(config)?,
        Mode::Moments => run_moments(config)?,
        Mode::Simulate => run_simulate(config)?,
        Mode::Paraxial => run_paraxial(config)?,
    };

    let mut artifacts: Vec<(PathBuf, Vec<u8>)> = outcome
        .artifacts
        .into_iter()
        .filter(|a| {
            let format = if a.suffix.ends_with(".csv") {
                Format::Csv
            } else {
                Format::Json
            };
            config.outputs.formats.contains(&format)
        })
        .map(|a| (dir.join(format!("{stem}-{}", a.suffix)), a.bytes))
        .collect();
    let manifest = Manifest {
        scenario_hash: &hash,
        mode: config.mode,
        seed: config.run.seed,
        versions: Versions {
            library: excess_noise::VERSION,
            cli: env!("CARGO_PKG_VERSION"),
        },
        config: canonical_config(config),
        files: artifacts
            .iter()
            .map(|(p, _)| {
                p.file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
        warnings: &outcome.warnings,
        flags: outcome
            .flags
            .iter()
            .map(|(nu, f)| format!("mode {nu}: {f}"))
            .collect(),
        summary: outcome.summary,
    };
    artifacts.insert(0, (manifest_path, json_bytes("manifest", &manifest)?));

    if !options.force {
        if let Some((path, _)) = artifacts.iter().find(|(p, _)| p.exists()) {
            return Err(RunError::OutputExists { path: path.clone() });
        }
    }
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    for (path, bytes) in &artifacts {
        std::fs::write(path, bytes).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
    }
    let report = RunReport {
        hash,
        files: artifacts.into_iter().map(|(p, _)| p).collect(),
        warnings: outcome.warnings,
    };
    if outcome.flags.is_empty() {
        Ok(report)
    } else {
        Err(RunError::Degenerate {
            flags: outcome.flags,
            report,
        })
    }
}

fn json_bytes<T: Serialize>(name: &str, value: &T) -> Result<Vec<u8>, RunError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| RunError::Encode {
        name: name.to_string(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes<T: Serialize>(name: &str, rows: &[T]) -> Result<Vec<u8>, RunError> {
    let encode = |e: csv::Error| RunError::Encode {
        name: name.to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(encode)?;
    }
    w.into_inner().map_err(|e| RunError::Encode {
        name: name.to_string(),
        message: e.to_string(),
    })
}

fn csv_records(name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<Vec<u8>, RunError> {
    let encode = |e: csv::Error| RunError::Encode {
        name: name.to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(encode)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(encode)?;
    }
    w.into_inner().map_err(|e| RunError::Encode {
        name: name.to_string(),
        message: e.to_string(),
    })
}

struct Cavity {
    basis: ModeBasis,
    gain: RateProfile,
    loss: RateProfile,
    drift: DriftMatrix,
    set: QuasiModeSet,
}

impl Cavity {
    fn build(config: &ScenarioConfig) -> Result<Self, RunError> {
        let b = config
            .basis
            .expect("validated config has a basis outside paraxial mode");
        let basis = ModeBasis::sine(b.n_modes, b.grid_points, b.q0)?;
        let gain = config.gain();
        let loss = config.loss();
        let m = CouplingMatrices::assemble(&basis, &gain, &loss)?;
        let drift = DriftMatrix::build(&basis, &m.gain, &m.loss)?;
        let set = solve_quasimodes(&drift)?;
        Ok(Self {
            basis,
            gain,
            loss,
            drift,
            set,
        })
    }

    fn flags(&self) -> Vec<(usize, ModeFlag)> {
        self.set
            .modes()
            .iter()
            .enumerate()
            .filter(|(_, m)| m.flag != ModeFlag::Regular)
            .map(|(nu, m)| (nu, m.flag))
            .collect()
    }
}

#[derive(Serialize)]
struct ModeRow {
    nu: usize,
    frequency: f64,
    gain_rate: f64,
    loss_rate: f64,
    mu_re: f64,
    mu_im: f64,
    k_coeff: f64,
    k_integral: Option<f64>,
    flag: String,
}

#[derive(Serialize)]
struct QuasimodeSummary<'a> {
    band_center: f64,
    relative_bandwidth: f64,
    modes: &'a [ModeRow],
}

fn run_quasimodes(config: &ScenarioConfig) -> Result<Outcome, RunError> {
    let cavity = Cavity::build(config)?;
    let functions = cavity.set.quasi_mode_functions(&cavity.basis)?;
    let rows: Vec<ModeRow> = cavity
        .set
        .modes()
        .iter()
        .zip(&functions)
        .enumerate()
        .map(|(nu, (m, f))| ModeRow {
            nu,
            frequency: m.rates.frequency,
            gain_rate: m.rates.gain,
            loss_rate: m.rates.loss,
            mu_re: m.eigenvalue.re,
            mu_im: m.eigenvalue.im,
            k_coeff: cavity.set.petermann_k_coeff(nu),
            k_integral: petermann_k_integral(&f.right, &f.adjoint, cavity.basis.grid())
                .ok()
                .filter(|k| k.is_finite()),
            flag: m.flag.to_string(),
        })
        .collect();
    let summary = QuasimodeSummary {
        band_center: cavity.basis.band_center(),
        relative_bandwidth: cavity.basis.relative_bandwidth(),
        modes: &rows,
    };
    Ok(Outcome {
        artifacts: vec![
            Artifact {
                suffix: "table.csv",
                bytes: csv_bytes("quasi-mode table", &rows)?,
            },
            Artifact {
                suffix: "table.json",
                bytes: json_bytes("quasi-mode table", &summary)?,
            },
        ],
        flags: cavity.flags(),
        ..Outcome::default()
    })
}

fn sample_times(t_final: f64, n_samples: usize) -> Vec<f64> {
    (0..=n_samples)
        .map(|k| t_final * k as f64 / n_samples as f64)
        .collect()
}

/// Correlations from the vacuum in the configured ordering, with photon
/// numbers, mode-pair coherences and the quadrature variance of every
/// quasi mode.
fn run_moments(config: &ScenarioConfig) -> Result<Outcome, RunError> {
    let cavity = Cavity::build(config)?;
    let flags = cavity.flags();
    if !flags.is_empty() {
        return Ok(Outcome {
            flags,
            ..Outcome::default()
        });
    }
    let n = cavity.basis.n_modes();
    let ordering = config.run.ordering;
    let frame = Frame::Rotating {
        omega_bar: cavity.basis.band_center(),
    };
    let dt = config
        .run
        .dt
        .unwrap_or_else(|| default_step(&cavity.drift, frame));
    let times = sample_times(config.run.t_final, config.run.n_samples);
    let vacuum = MomentState::vacuum(n, ordering);
    let series = correlation_series(&cavity.drift, &vacuum.corr, ordering, &times, dt)?;

    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("n_{i}")));
    for i in 0..n {
        for j in i + 1..n {
            header.push(format!("c_{i}_{j}_re"));
            header.push(format!("c_{i}_{j}_im"));
        }
    }
    header.extend((0..n).map(|nu| format!("quadrature_var_{nu}")));

    let mut rows = Vec::with_capacity(times.len());
    for (&t, corr) in times.iter().zip(series) {
        let state = MomentState {
            t,
            corr,
            ..vacuum.clone()
        };
        let mut row = vec![t];
        row.extend(state.photon_numbers().iter());
        for i in 0..n {
            for j in i + 1..n {
                row.push(state.corr[(i, j)].re);
                row.push(state.corr[(i, j)].im);
            }
        }
        for nu in 0..n {
            row.push(quadrature_variance(&cavity.set, &state, nu)?);
        }
        rows.push(row);
    }
    let summary = serde_json::json!({
        "ordering": ordering,
        "dt": dt,
        "petermann_k": (0..n).map(|nu| cavity.set.petermann_k_coeff(nu)).collect::<Vec<_>>(),
        "final": header
            .iter()
            .cloned()
            .zip(rows.last().cloned().unwrap_or_default().into_iter().map(serde_json::Value::from))
            .collect::<serde_json::Map<String, serde_json::Value>>(),
    });
    Ok(Outcome {
        artifacts: vec![
            Artifact {
                suffix: "series.csv",
                bytes: csv_records("moment series", &header, &rows)?,
            },
            Artifact {
                suffix: "summary.json",
                bytes: json_bytes("moment summary", &summary)?,
            },
        ],
        summary: Some(summary),
        ..Outcome::default()
    })
}

#[derive(Serialize)]
struct NoiseRow {
    t: f64,
    mc_mean: f64,
    mc_se: f64,
    closed_form: f64,
    single_mode: f64,
}

#[derive(Serialize)]
struct SimulationSummary {
    seed: u64,
    n_traj: usize,
    dt: f64,
    t_final: f64,
    dominant_mode: usize,
    k_coeff: f64,
    fitted_k: f64,
    fitted_k_se: f64,
    final_mc_mean: f64,
    final_mc_se: f64,
    final_closed_form: f64,
    final_single_mode: f64,
}

/// Noise accumulated from the reservoir alone (no vacuum in the initial
/// amplitudes), compared with the closed forms.
fn run_simulate(config: &ScenarioConfig) -> Result<Outcome, RunError> {
    let cavity = Cavity::build(config)?;
    let flags = cavity.flags();
    if !flags.is_empty() {
        return Ok(Outcome {
            flags,
            ..Outcome::default()
        });
    }
    let seed = config
        .run
        .seed
        .expect("validated simulate config has a seed");
    let dt = config.run.dt.unwrap_or(DEFAULT_SIMULATE_DT);
    let settings = EnsembleSettings::uniform(
        config.run.t_final,
        dt,
        config.run.n_samples,
        config.run.n_traj,
        seed,
    );
    let a0 = DVector::<C64>::zeros(cavity.basis.n_modes());
    let ens = simulate_ensemble(&cavity.drift, &a0, &settings)?;
    let total = cavity.gain.superpose(&cavity.loss);
    let growth = noise_growth(&ens, &cavity.set, &cavity.basis, &total)?;
    let rows: Vec<NoiseRow> = (0..growth.times.len())
        .map(|k| NoiseRow {
            t: growth.times[k],
            mc_mean: growth.mc_mean[k],
            mc_se: growth.mc_se[k],
            closed_form: growth.closed_form[k],
            single_mode: growth.single_mode[k],
        })
        .collect();
    let last = rows.last().expect("at least the initial sample");
    let summary = SimulationSummary {
        seed,
        n_traj: config.run.n_traj,
        dt,
        t_final: config.run.t_final,
        dominant_mode: growth.dominant,
        k_coeff: cavity.set.petermann_k_coeff(growth.dominant),
        fitted_k: growth.fitted_k,
        fitted_k_se: growth.fitted_k_se,
        final_mc_mean: last.mc_mean,
        final_mc_se: last.mc_se,
        final_closed_form: last.closed_form,
        final_single_mode: last.single_mode,
    };
    Ok(Outcome {
        artifacts: vec![
            Artifact {
                suffix: "noise.csv",
                bytes: csv_bytes("noise series", &rows)?,
            },
            Artifact {
                suffix: "summary.json",
                bytes: json_bytes("simulation summary", &summary)?,
            },
        ],
        summary: serde_json::to_value(&summary).ok(),
        ..Outcome::default()
    })
}

#[derive(Serialize)]
struct IntensityRow {
    z: f64,
    coordinate: f64,
    intensity_x: f64,
    intensity_y: f64,
}

#[derive(Serialize)]
struct WidthRow {
    z: f64,
    width_x: f64,
    width_y: f64,
    free_width: f64,
    power: f64,
}

#[derive(Serialize)]
struct TransverseRow {
    index: usize,
    mu_re: f64,
    mu_im: f64,
    frequency: f64,
    petermann_k: f64,
    ix: Option<usize>,
    iy: Option<usize>,
}

/// Gaussian launch through the configured aperture: axis cuts of the
/// intensity and rms widths at evenly spaced planes, plus the leading
/// transverse quasi modes.
fn run_paraxial(config: &ScenarioConfig) -> Result<Outcome, RunError> {
    let p = config.paraxial.as_ref().expect("validated paraxial config");
    let grid = TransverseGrid::new(p.side, p.spacing)?;
    let gain = p.gain.profile(&grid);
    let loss = p.loss.profile(&grid);
    let propagator = Propagator::new(grid, &gain, &loss, p.omega_bar, p.dz)?;
    let warnings: Vec<String> = propagator.warning().iter().map(|w| w.to_string()).collect();

    let total_steps = (p.z_final / p.dz).round().max(1.0) as usize;
    let mut field = TransverseField::gaussian(grid, p.waist, p.omega_bar)?;
    let centre = p.side / 2;
    let coords = grid.coordinates();
    let mut intensity = Vec::new();
    let mut widths = Vec::new();
    let mut done = 0;
    for k in 0..=p.n_slices {
        let target = total_steps * k / p.n_slices;
        propagator.advance(&mut field, target - done)?;
        done = target;
        let i = field.intensity();
        for (ix, &x) in coords.iter().enumerate() {
            intensity.push(IntensityRow {
                z: field.z,
                coordinate: x,
                intensity_x: i[centre * p.side + ix],
                intensity_y: i[ix * p.side + centre],
            });
        }
        let (wx, wy) = field.rms_width();
        widths.push(WidthRow {
            z: field.z,
            width_x: wx,
            width_y: wy,
            free_width: gaussian_beam_width(p.waist, p.omega_bar, field.z),
            power: field.power(),
        });
    }

    let modes = transverse_quasimodes(&gain, &loss, &grid, p.omega_bar, p.boundary, p.route)?;
    let table: Vec<TransverseRow> = modes
        .modes()
        .iter()
        .take(p.n_report)
        .enumerate()
        .map(|(index, m)| TransverseRow {
            index,
            mu_re: m.eigenvalue.re,
            mu_im: m.eigenvalue.im,
            frequency: m.frequency,
            petermann_k: m.petermann_k,
            ix: m.axes.map(|a| a.0),
            iy: m.axes.map(|a| a.1),
        })
        .collect();
    let summary = serde_json::json!({
        "steps": total_steps,
        "z_final": field.z,
        "widths": serde_json::to_value(&widths).unwrap_or_default(),
        "transverse_modes": serde_json::to_value(&table).unwrap_or_default(),
    });
    Ok(Outcome {
        artifacts: vec![
            Artifact {
                suffix: "intensity.csv",
                bytes: csv_bytes("intensity slices", &intensity)?,
            },
            Artifact {
                suffix: "widths.csv",
                bytes: csv_bytes("beam widths", &widths)?,
            },
            Artifact {
                suffix: "transverse-k.csv",
                bytes: csv_bytes("transverse K table", &table)?,
            },
            Artifact {
                suffix: "summary.json",
                bytes: json_bytes("paraxial summary", &summary)?,
            },
        ],
        warnings,
        ..Outcome::default()
    })
}

/// Sanity check used by `validate`: the scenario's physics objects can be
/// built (basis resolution, profiles, solver) without running a pipeline.
pub fn dry_run(config: &ScenarioConfig) -> Result<Vec<String>, RunError> {
    let mut notes = Vec::new();
    if config.mode == Mode::Paraxial {
        let p = config.paraxial.as_ref().expect("validated paraxial config");
        let grid = TransverseGrid::new(p.side, p.spacing)?;
        let propagator = Propagator::new(
            grid,
            &p.gain.profile(&grid),
            &p.loss.profile(&grid),
            p.omega_bar,
            p.dz,
        )?;
        notes.extend(propagator.warning().map(|w| w.to_string()));
        return Ok(notes);
    }
    let cavity = Cavity::build(config)?;
    for (nu, m) in cavity.set.modes().iter().enumerate() {
        notes.push(format!(
            "mode {nu}: mu = {:.6} {:+.6}i, K = {:.6}, {}",
            m.eigenvalue.re,
            m.eigenvalue.im,
            m.petermann_k(),
            m.flag
        ));
    }
    let flags = cavity.flags();
    if !flags.is_empty() {
        return Err(RunError::Degenerate {
            flags,
            report: RunReport {
                hash: scenario_hash(config),
                files: Vec::new(),
                warnings: notes,
            },
        });
    }
    Ok(notes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, Overrides};

    fn scenario(extra: &str, dir: &Path) -> ScenarioConfig {
        let text = format!(
            "{extra}\n[basis]\nn_modes = 2\nq0 = 200\ngrid_points = 4096\n\
             [[gain_profile]]\nx_min = 0.0\nx_max = 0.5\ndensity = 0.02\n\
             [[loss_profile]]\nx_min = 0.5\nx_max = 1.0\ndensity = 0.02\n"
        );
        parse_config(
            &text,
            &Overrides {
                directory: Some(dir.to_path_buf()),
                ..Overrides::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn exit_codes_are_distinct_and_documented() {
        let codes = [
            exit::SUCCESS,
            exit::USAGE,
            exit::CONFIG_READ,
            exit::CONFIG_INVALID,
            exit::OUTPUT_EXISTS,
            exit::OUTPUT_IO,
            exit::DEGENERATE,
            exit::BASIS,
            exit::PROFILE,
            exit::QUASIMODES,
            exit::MOMENTS,
            exit::LANGEVIN,
            exit::PARAXIAL,
            exit::ENCODE,
        ];
        let unique: std::collections::BTreeSet<u8> = codes.iter().copied().collect();
        assert_eq!(unique.len(), codes.len());
        for c in codes {
            assert!(
                EXIT_CODES_HELP.contains(&format!("{c:>4}  ")),
                "code {c} undocumented"
            );
        }
    }

    #[test]
    fn hash_ignores_output_directory_only() {
        let a = scenario("", Path::new("one"));
        let b = scenario("", Path::new("two"));
        assert_eq!(scenario_hash(&a), scenario_hash(&b));
        let mut c = a.clone();
        c.run.t_final = 2.0;
        assert_ne!(scenario_hash(&a), scenario_hash(&c));
        assert_eq!(scenario_hash(&a).len(), 64);
    }

    #[test]
    fn quasimode_table_has_both_k_columns() {
        let dir = tempfile::tempdir().unwrap();
        let config = scenario("", dir.path());
        let report = run_scenario(&config, &RunOptions::default()).unwrap();
        let stem = file_stem(&config);
        assert!(report.files.iter().all(|f| f
            .file_name()
            .unwrap()
            .to_string_lossy()
            .starts_with(&stem)));
        let table = std::fs::read_to_string(dir.path().join(format!("{stem}-table.csv"))).unwrap();
        let header = table.lines().next().unwrap();
        assert!(
            header.contains("k_coeff") && header.contains("k_integral"),
            "{header}"
        );
        assert_eq!(table.lines().count(), 3);
    }

    #[test]
    fn refuses_to_overwrite_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let config = scenario("", dir.path());
        let first = run_scenario(&config, &RunOptions::default()).unwrap();
        let err = run_scenario(&config, &RunOptions::default()).unwrap_err();
        assert_eq!(err.exit_code(), exit::OUTPUT_EXISTS);
        let again = run_scenario(&config, &RunOptions { force: true }).unwrap();
        assert_eq!(first, again);
    }

    #[test]
    fn formats_filter_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = scenario("[outputs]\nformats = [\"csv\"]", dir.path());
        let report = run_scenario(&config, &RunOptions::default()).unwrap();
        let names: Vec<String> = report
            .files
            .iter()
            .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names.len(), 2, "{names:?}");
        assert!(names[0].ends_with("manifest.json") && names[1].ends_with("table.csv"));
    }

    #[test]
    fn flagged_modes_map_to_their_exit_code() {
        let config = scenario("", Path::new("unused"));
        assert!(Cavity::build(&config).unwrap().flags().is_empty());
        let err = RunError::Degenerate {
            flags: vec![(1, ModeFlag::Exceptional)],
            report: RunReport {
                hash: String::new(),
                files: Vec::new(),
                warnings: Vec::new(),
            },
        };
        assert_eq!(err.exit_code(), exit::DEGENERATE);
        assert!(err.to_string().contains("mode 1 exceptional"));
    }

    #[test]
    fn moments_series_starts_from_vacuum() {
        let dir = tempfile::tempdir().unwrap();
        let config = scenario(
            "mode = \"moments\"\n[run]\nt_final = 0.5\nn_samples = 4",
            dir.path(),
        );
        run_scenario(&config, &RunOptions::default()).unwrap();
        let stem = file_stem(&config);
        let series =
            std::fs::read_to_string(dir.path().join(format!("{stem}-series.csv"))).unwrap();
        let lines: Vec<&str> = series.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("t,n_0,n_1,c_0_1_re,c_0_1_im,quadrature_var_0"));
        let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(&first[..5], &[0.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
