//! Scenario files.
//!
//! A scenario is a single TOML document:
//!
//! ```toml
//! mode = "simulate"            # quasimodes | moments | simulate | paraxial
//!
//! [basis]
//! n_modes = 2
//! q0 = 200
//! grid_points = 4096           # default: smallest power of two ≥ 8·(q0 + n_modes), at least 256
//!
//! [[gain_profile]]
//! x_min = 0.0
//! x_max = 0.5
//! density = 0.02
//!
//! [[loss_profile]]
//! x_min = 0.5
//! x_max = 1.0
//! density = 0.02
//!
//! [run]
//! t_final = 3.0                # default 1.0
//! dt = 1e-3                    # default: mode dependent (see `RunConfig::dt`)
//! n_traj = 10000               # default 1000
//! n_samples = 10               # default 10
//! seed = 20240917              # required for mode = "simulate"
//! ordering = "symmetric"       # moments only; default symmetric
//!
//! [outputs]
//! directory = "results"        # default "results"
//! formats = ["csv", "json"]    # default both
//! ```
//!
//! `mode = "paraxial"` additionally needs a `[paraxial]` section; the basis
//! is then optional. Unknown keys are rejected.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use excess_noise::moments::Ordering;
use excess_noise::paraxial::{Boundary, Route, TransverseGrid, TransverseProfile};
use excess_noise::reservoir::{validate_segments, ProfileError};
use excess_noise::{RateProfile, ReservoirKind, Segment};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_OUTPUT_DIR: &str = "results";
pub const DEFAULT_T_FINAL: f64 = 1.0;
pub const DEFAULT_N_TRAJ: usize = 1000;
pub const DEFAULT_N_SAMPLES: usize = 10;
pub const DEFAULT_SIMULATE_DT: f64 = 1e-3;
/// Largest transverse side accepted for the dense eigen route.
pub const DENSE_SIDE_LIMIT: usize = 32;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{} validation error(s):\n{}", .issues.len(), format_issues(.issues))]
    Invalid { issues: Vec<Issue> },
}

fn format_issues(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(|i| format!("  - {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One validation failure.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Issue {
    #[error("{profile}: {source}")]
    Profile {
        profile: &'static str,
        #[source]
        source: ProfileError,
    },
    #[error("{field} is required for mode {mode}")]
    Missing { field: &'static str, mode: Mode },
    #[error("{field} = {value} is invalid: {reason}")]
    Value {
        field: &'static str,
        value: String,
        reason: &'static str,
    },
    #[error("basis.grid_points = {grid_points} is below 8·(q0 + n_modes) = {minimum}")]
    Resolution { grid_points: usize, minimum: usize },
}

fn value(field: &'static str, v: impl fmt::Display, reason: &'static str) -> Issue {
    Issue::Value {
        field,
        value: v.to_string(),
        reason,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Quasimodes,
    Moments,
    Simulate,
    Paraxial,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Quasimodes => "quasimodes",
            Mode::Moments => "moments",
            Mode::Simulate => "simulate",
            Mode::Paraxial => "paraxial",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub n_modes: usize,
    pub q0: usize,
    pub grid_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub t_final: f64,
    /// `None` lets each mode pick: the moment integrator's default step,
    /// [`DEFAULT_SIMULATE_DT`] for Monte-Carlo.
    pub dt: Option<f64>,
    pub n_traj: usize,
    pub n_samples: usize,
    pub seed: Option<u64>,
    pub ordering: Ordering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: BTreeSet<Format>,
}

/// Transverse rate profile as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ApertureConfig {
    Uniform {
        value: f64,
    },
    /// `left` for x < 0, `right` for x ≥ 0.
    HalfPlane {
        left: f64,
        right: f64,
    },
}

impl ApertureConfig {
    pub fn profile(&self, grid: &TransverseGrid) -> TransverseProfile {
        match *self {
            ApertureConfig::Uniform { value } => TransverseProfile::Uniform { value },
            ApertureConfig::HalfPlane { left, right } => {
                TransverseProfile::half_plane(grid, left, right)
            }
        }
    }

    fn values(&self) -> [f64; 2] {
        match *self {
            ApertureConfig::Uniform { value } => [value, value],
            ApertureConfig::HalfPlane { left, right } => [left, right],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaxialConfig {
    pub side: usize,
    pub spacing: f64,
    pub omega_bar: f64,
    pub waist: f64,
    pub dz: f64,
    pub z_final: f64,
    pub n_slices: usize,
    pub gain: ApertureConfig,
    pub loss: ApertureConfig,
    pub boundary: Boundary,
    pub route: Route,
    /// Rows of the transverse K table.
    pub n_report: usize,
}

/// Validated scenario with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub basis: Option<BasisConfig>,
    pub gain_profile: Vec<Segment>,
    pub loss_profile: Vec<Segment>,
    pub run: RunConfig,
    pub outputs: OutputConfig,
    pub paraxial: Option<ParaxialConfig>,
}

impl ScenarioConfig {
    pub fn gain(&self) -> RateProfile {
        RateProfile::new(ReservoirKind::Gain, self.gain_profile.clone()).expect("validated")
    }

    pub fn loss(&self) -> RateProfile {
        RateProfile::new(ReservoirKind::Loss, self.loss_profile.clone()).expect("validated")
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub directory: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    mode: Option<Mode>,
    basis: Option<RawBasis>,
    #[serde(default)]
    gain_profile: Vec<Segment>,
    #[serde(default)]
    loss_profile: Vec<Segment>,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    outputs: RawOutputs,
    paraxial: Option<RawParaxial>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBasis {
    n_modes: usize,
    q0: usize,
    grid_points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    t_final: Option<f64>,
    dt: Option<f64>,
    n_traj: Option<usize>,
    n_samples: Option<usize>,
    seed: Option<u64>,
    ordering: Option<Ordering>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    directory: Option<PathBuf>,
    formats: Option<Vec<Format>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParaxial {
    side: usize,
    spacing: f64,
    omega_bar: f64,
    #[serde(default = "default_waist")]
    waist: f64,
    dz: f64,
    z_final: f64,
    #[serde(default = "default_slices")]
    n_slices: usize,
    #[serde(default = "zero_aperture")]
    gain: ApertureConfig,
    #[serde(default = "zero_aperture")]
    loss: ApertureConfig,
    #[serde(default = "default_boundary")]
    boundary: Boundary,
    #[serde(default = "default_route")]
    route: Route,
    #[serde(default = "default_report")]
    n_report: usize,
}

fn default_waist() -> f64 {
    1.0
}

fn default_slices() -> usize {
    5
}

fn zero_aperture() -> ApertureConfig {
    ApertureConfig::Uniform { value: 0.0 }
}

fn default_boundary() -> Boundary {
    Boundary::Dirichlet
}

fn default_route() -> Route {
    Route::Separable
}

fn default_report() -> usize {
    10
}

/// Smallest power of two (≥ 256) satisfying the basis resolution rule.
pub fn default_grid_points(n_modes: usize, q0: usize) -> usize {
    (8 * (q0 + n_modes)).next_power_of_two().max(256)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    load_config_with(path, &Overrides::default())
}

pub fn load_config_with(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, overrides)
}

pub fn parse_config(text: &str, overrides: &Overrides) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_column(text, s.start))
            .unwrap_or((0, 0));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    validate(raw, overrides)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn validate(raw: RawScenario, overrides: &Overrides) -> Result<ScenarioConfig, ConfigError> {
    let mut issues = Vec::new();
    let mode = overrides.mode.or(raw.mode).unwrap_or_default();

    let basis = raw.basis.map(|b| {
        let grid_points = b
            .grid_points
            .unwrap_or_else(|| default_grid_points(b.n_modes, b.q0));
        BasisConfig {
            n_modes: b.n_modes,
            q0: b.q0,
            grid_points,
        }
    });
    match &basis {
        None if mode != Mode::Paraxial => issues.push(Issue::Missing {
            field: "basis",
            mode,
        }),
        None => {}
        Some(b) => {
            if b.n_modes == 0 {
                issues.push(value("basis.n_modes", b.n_modes, "must be at least 1"));
            }
            if b.q0 == 0 {
                issues.push(value("basis.q0", b.q0, "must be at least 1"));
            }
            let minimum = 8 * (b.q0 + b.n_modes);
            if b.grid_points < minimum {
                issues.push(Issue::Resolution {
                    grid_points: b.grid_points,
                    minimum,
                });
            }
        }
    }

    for (profile, segments) in [
        ("gain_profile", &raw.gain_profile),
        ("loss_profile", &raw.loss_profile),
    ] {
        issues.extend(
            validate_segments(segments)
                .into_iter()
                .map(|source| Issue::Profile { profile, source }),
        );
    }

    let r = raw.run;
    let run = RunConfig {
        t_final: r.t_final.unwrap_or(DEFAULT_T_FINAL),
        dt: r.dt,
        n_traj: r.n_traj.unwrap_or(DEFAULT_N_TRAJ),
        n_samples: r.n_samples.unwrap_or(DEFAULT_N_SAMPLES),
        seed: overrides.seed.or(r.seed),
        ordering: r.ordering.unwrap_or(Ordering::Symmetric),
    };
    if !(run.t_final > 0.0 && run.t_final.is_finite()) {
        issues.push(value(
            "run.t_final",
            run.t_final,
            "must be positive and finite",
        ));
    }
    if let Some(dt) = run.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            issues.push(value("run.dt", dt, "must be positive and finite"));
        } else if dt > run.t_final {
            issues.push(value("run.dt", dt, "exceeds run.t_final"));
        }
    }
    if run.n_samples == 0 {
        issues.push(value("run.n_samples", run.n_samples, "must be at least 1"));
    }
    if mode == Mode::Simulate {
        if run.n_traj < 2 {
            issues.push(value(
                "run.n_traj",
                run.n_traj,
                "simulate needs at least 2 trajectories",
            ));
        }
        if run.seed.is_none() {
            issues.push(Issue::Missing {
                field: "run.seed",
                mode,
            });
        }
    } else if run.n_traj == 0 {
        issues.push(value("run.n_traj", run.n_traj, "must be at least 1"));
    }

    let outputs = OutputConfig {
        directory: overrides
            .directory
            .clone()
            .or(raw.outputs.directory)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        formats: raw
            .outputs
            .formats
            .map(|f| f.into_iter().collect())
            .unwrap_or_else(|| [Format::Csv, Format::Json].into_iter().collect()),
    };
    if outputs.formats.is_empty() {
        issues.push(value("outputs.formats", "[]", "must name csv and/or json"));
    }

    let paraxial = raw.paraxial.map(|p| ParaxialConfig {
        side: p.side,
        spacing: p.spacing,
        omega_bar: p.omega_bar,
        waist: p.waist,
        dz: p.dz,
        z_final: p.z_final,
        n_slices: p.n_slices,
        gain: p.gain,
        loss: p.loss,
        boundary: p.boundary,
        route: p.route,
        n_report: p.n_report,
    });
    match &paraxial {
        None if mode == Mode::Paraxial => issues.push(Issue::Missing {
            field: "paraxial",
            mode,
        }),
        None => {}
        Some(p) => validate_paraxial(p, &mut issues),
    }

    if !issues.is_empty() {
        return Err(ConfigError::Invalid { issues });
    }
    Ok(ScenarioConfig {
        mode,
        basis,
        gain_profile: raw.gain_profile,
        loss_profile: raw.loss_profile,
        run,
        outputs,
        paraxial,
    })
}

fn validate_paraxial(p: &ParaxialConfig, issues: &mut Vec<Issue>) {
    if p.side < 2 || !p.side.is_power_of_two() {
        issues.push(value("paraxial.side", p.side, "must be a power of two ≥ 2"));
    }
    if p.route == Route::Dense && p.side > DENSE_SIDE_LIMIT {
        issues.push(value(
            "paraxial.side",
            p.side,
            "dense route is limited to side ≤ 32",
        ));
    }
    for (field, v) in [
        ("paraxial.spacing", p.spacing),
        ("paraxial.omega_bar", p.omega_bar),
        ("paraxial.waist", p.waist),
        ("paraxial.dz", p.dz),
        ("paraxial.z_final", p.z_final),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            issues.push(value(field, v, "must be positive and finite"));
        }
    }
    if p.dz > p.z_final {
        issues.push(value("paraxial.dz", p.dz, "exceeds paraxial.z_final"));
    }
    if p.n_slices == 0 {
        issues.push(value("paraxial.n_slices", p.n_slices, "must be at least 1"));
    }
    for (field, aperture) in [("paraxial.gain", &p.gain), ("paraxial.loss", &p.loss)] {
        if aperture
            .values()
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            issues.push(value(
                field,
                format!("{aperture:?}"),
                "rates must be finite and nonnegative",
            ));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[basis]\nn_modes = 2\nq0 = 200\n";

    fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        parse_config(text, &Overrides::default())
    }

    fn issues(text: &str) -> Vec<Issue> {
        match parse(text) {
            Err(ConfigError::Invalid { issues }) => issues,
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.mode, Mode::Quasimodes);
        assert_eq!(
            c.basis,
            Some(BasisConfig {
                n_modes: 2,
                q0: 200,
                grid_points: 2048
            })
        );
        assert_eq!(c.run.t_final, DEFAULT_T_FINAL);
        assert_eq!(c.run.n_traj, DEFAULT_N_TRAJ);
        assert_eq!(c.run.n_samples, DEFAULT_N_SAMPLES);
        assert_eq!(c.run.dt, None);
        assert_eq!(c.run.seed, None);
        assert_eq!(c.run.ordering, Ordering::Symmetric);
        assert_eq!(c.outputs.directory, PathBuf::from(DEFAULT_OUTPUT_DIR));
        assert_eq!(c.outputs.formats.len(), 2);
        assert!(c.gain_profile.is_empty() && c.paraxial.is_none());
    }

    #[test]
    fn overlapping_segments_name_both() {
        let text = format!(
            "{MINIMAL}[[gain_profile]]\nx_min = 0.0\nx_max = 0.6\ndensity = 0.01\n\
             [[gain_profile]]\nx_min = 0.5\nx_max = 1.0\ndensity = 0.02\n"
        );
        let found = issues(&text);
        assert_eq!(found.len(), 1);
        let msg = found[0].to_string();
        assert!(msg.starts_with("gain_profile"), "{msg}");
        assert!(
            msg.contains("segments 0 [0, 0.6)") && msg.contains("1 [0.5, 1)"),
            "{msg}"
        );
    }

    #[test]
    fn simulate_requires_a_seed() {
        let text = format!("mode = \"simulate\"\n{MINIMAL}");
        assert_eq!(
            issues(&text),
            vec![Issue::Missing {
                field: "run.seed",
                mode: Mode::Simulate
            }]
        );
        let seeded = parse_config(
            &text,
            &Overrides {
                seed: Some(3),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(seeded.run.seed, Some(3));
    }

    #[test]
    fn every_failure_is_reported() {
        let text = "mode = \"simulate\"\n[basis]\nn_modes = 0\nq0 = 10\ngrid_points = 16\n\
                    [run]\nt_final = -1.0\nn_samples = 0\n\
                    [[loss_profile]]\nx_min = 0.2\nx_max = 1.5\ndensity = -1.0\n";
        let found = issues(text);
        assert_eq!(found.len(), 7, "{found:#?}");
        assert!(found.contains(&Issue::Resolution {
            grid_points: 16,
            minimum: 80
        }));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse("[basis]\nn_modes = 2\nq0 = \"many\"\n") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse("[basis]\nn_modes = 2\nq0 = 1\ncolour = 3\n") {
            Err(ConfigError::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("colour"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn paraxial_needs_its_section_but_no_basis() {
        assert_eq!(
            issues("mode = \"paraxial\"\n"),
            vec![Issue::Missing {
                field: "paraxial",
                mode: Mode::Paraxial
            }]
        );
        let text = "mode = \"paraxial\"\n[paraxial]\nside = 64\nspacing = 0.2\nomega_bar = 20.0\n\
                    dz = 0.05\nz_final = 1.0\ngain = { kind = \"half_plane\", left = 0.4, right = 0.0 }\n";
        let c = parse(text).unwrap();
        let p = c.paraxial.unwrap();
        assert_eq!(
            p.gain,
            ApertureConfig::HalfPlane {
                left: 0.4,
                right: 0.0
            }
        );
        assert_eq!(p.loss, ApertureConfig::Uniform { value: 0.0 });
        assert_eq!(
            (p.boundary, p.route, p.n_slices),
            (Boundary::Dirichlet, Route::Separable, 5)
        );
    }

    #[test]
    fn overrides_take_precedence() {
        let o = Overrides {
            mode: Some(Mode::Moments),
            seed: Some(9),
            directory: Some(PathBuf::from("elsewhere")),
        };
        let c = parse_config(
            &format!("mode = \"simulate\"\n{MINIMAL}[outputs]\ndirectory = \"x\"\n"),
            &o,
        )
        .unwrap();
        assert_eq!(c.mode, Mode::Moments);
        assert_eq!(c.run.seed, Some(9));
        assert_eq!(c.outputs.directory, PathBuf::from("elsewhere"));
    }

    #[test]
    fn default_grid_respects_resolution() {
        for (n, q0) in [(1, 1), (2, 200), (16, 39), (3, 1000)] {
            let g = default_grid_points(n, q0);
            assert!(g >= 8 * (q0 + n) && g.is_power_of_two());
        }
    }
}
