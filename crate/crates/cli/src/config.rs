//! Run configuration: strict JSON, validated and resolved at parse time.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use emac_core::benchmarks::{CylinderProblem, GreshoProblem};
use emac_core::solver::{SolverConfig, DEFAULT_LINEAR_TOL};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Manufactured,
    Gresho,
    Cylinder,
    Custom,
}

impl Benchmark {
    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Manufactured => "manufactured",
            Benchmark::Gresho => "gresho",
            Benchmark::Cylinder => "cylinder",
            Benchmark::Custom => "custom",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PressureOutput {
    /// `P + ½|u|²`.
    #[default]
    Kinematic,
    Emac,
}

/// A structured rectangle or a mesh file, exactly one of the two.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshInput {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    /// `[x0, x1, y0, y1]`.
    pub bounds: Option<[f64; 4]>,
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepInput {
    pub h: Option<Vec<f64>>,
    pub dt: Option<Vec<f64>>,
}

/// Data of the `custom` benchmark: constant fields only.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomInput {
    #[serde(default)]
    pub body_force: [f64; 2],
    #[serde(default)]
    pub initial_velocity: [f64; 2],
    /// Marker name to constant boundary velocity.
    #[serde(default)]
    pub boundary: BTreeMap<String, [f64; 2]>,
    /// Marker on which drag and lift are reported.
    pub force_marker: Option<String>,
}

/// The file as written. Everything optional is filled in by [`resolve`].
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    benchmark: Benchmark,
    mesh: Option<MeshInput>,
    dt: Option<f64>,
    #[serde(alias = "T")]
    t_end: Option<f64>,
    nu: Option<f64>,
    filter_enabled: Option<bool>,
    newton_abs_tol: Option<f64>,
    newton_rel_tol: Option<f64>,
    newton_max_iter: Option<usize>,
    linear_tol: Option<f64>,
    output_dir: Option<PathBuf>,
    snapshot_every: Option<usize>,
    pressure_output: Option<PressureOutput>,
    sweep: Option<SweepInput>,
    custom: Option<CustomInput>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum MeshSpec {
    Rectangle { nx: usize, ny: usize, bounds: [f64; 4] },
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    H,
    Dt,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// A validated configuration with every default filled in and every path
/// absolute.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    pub mesh: MeshSpec,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    /// Snapshots every this many steps, plus the first and last level.
    /// Zero writes only the first and last.
    pub snapshot_every: usize,
    pub pressure_output: PressureOutput,
    pub sweep: Option<Sweep>,
    pub custom: Option<CustomInput>,
}

pub const DEFAULT_SNAPSHOT_EVERY: usize = 100;

struct Defaults {
    dt: f64,
    t_end: f64,
    nu: f64,
    mesh: Option<MeshSpec>,
}

fn defaults(b: Benchmark) -> Defaults {
    match b {
        Benchmark::Manufactured => Defaults {
            dt: 1e-5,
            t_end: 1e-4,
            nu: 1.0,
            mesh: Some(MeshSpec::Rectangle { nx: 16, ny: 16, bounds: [0.0, 1.0, 0.0, 1.0] }),
        },
        Benchmark::Gresho => Defaults {
            dt: GreshoProblem::DT,
            t_end: GreshoProblem::T_END,
            nu: 0.0,
            mesh: Some(MeshSpec::Rectangle { nx: 48, ny: 48, bounds: GreshoProblem::BOUNDS }),
        },
        Benchmark::Cylinder => Defaults {
            dt: CylinderProblem::DT,
            t_end: CylinderProblem::T_END,
            nu: CylinderProblem::default().nu,
            mesh: None,
        },
        Benchmark::Custom => Defaults { dt: f64::NAN, t_end: f64::NAN, nu: 1.0, mesh: None },
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&text, &base).map_err(|message| match message {
        Problem::Schema(message) => ConfigError::Schema { path: path.to_path_buf(), message },
        Problem::Invalid(message) => ConfigError::Invalid { path: path.to_path_buf(), message },
    })
}

#[derive(Debug)]
pub enum Problem {
    Schema(String),
    Invalid(String),
}

/// Parses `text`, resolving relative paths against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig, Problem> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        if at == "." {
            Problem::Schema(e.inner().to_string())
        } else {
            Problem::Schema(format!("key `{at}`: {}", e.inner()))
        }
    })?;
    resolve(raw, base).map_err(Problem::Invalid)
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    std::path::absolute(&joined).unwrap_or(joined)
}

fn resolve(raw: RawConfig, base: &Path) -> Result<RunConfig, String> {
    let d = defaults(raw.benchmark);
    let name = raw.benchmark.name();
    let mesh = match raw.mesh {
        Some(m) => match (&m.file, m.nx, m.ny, m.bounds) {
            (Some(file), None, None, None) => {
                let file = absolute(base, file);
                if !file.is_file() {
                    return Err(format!("key `mesh.file`: {} does not exist", file.display()));
                }
                MeshSpec::File(file)
            }
            (Some(_), ..) => return Err("key `mesh`: give either `file` or `nx`/`ny`/`bounds`, not both".into()),
            (None, nx, ny, bounds) => {
                let fallback = match &d.mesh {
                    Some(MeshSpec::Rectangle { nx, ny, bounds }) => Some((*nx, *ny, *bounds)),
                    _ => None,
                };
                let nx = nx.or(fallback.map(|f| f.0)).ok_or("key `mesh.nx`: required")?;
                let ny = ny.or(fallback.map(|f| f.1)).unwrap_or(nx);
                let bounds = bounds.or(fallback.map(|f| f.2)).unwrap_or([0.0, 1.0, 0.0, 1.0]);
                if nx == 0 || ny == 0 {
                    return Err("key `mesh`: `nx` and `ny` must be positive".into());
                }
                if !(bounds[1] > bounds[0] && bounds[3] > bounds[2]) {
                    return Err("key `mesh.bounds`: expected [x0, x1, y0, y1] with x0 < x1 and y0 < y1".into());
                }
                MeshSpec::Rectangle { nx, ny, bounds }
            }
        },
        None => d
            .mesh
            .clone()
            .ok_or_else(|| format!("key `mesh`: benchmark `{name}` requires a mesh"))?,
    };
    if raw.benchmark == Benchmark::Cylinder && !matches!(mesh, MeshSpec::File(_)) {
        return Err("key `mesh.file`: benchmark `cylinder` requires a mesh file".into());
    }
    let dt = raw.dt.unwrap_or(d.dt);
    let t_end = raw.t_end.unwrap_or(d.t_end);
    if dt.is_nan() {
        return Err(format!("key `dt`: required for benchmark `{name}`"));
    }
    if t_end.is_nan() {
        return Err(format!("key `t_end`: required for benchmark `{name}`"));
    }
    let mut solver = SolverConfig::new(dt, t_end, raw.nu.unwrap_or(d.nu));
    solver.filter_enabled = raw.filter_enabled.unwrap_or(true);
    solver.newton_abs_tol = raw.newton_abs_tol.unwrap_or(SolverConfig::DEFAULT_NEWTON_ABS_TOL);
    solver.newton_rel_tol = raw.newton_rel_tol.unwrap_or(SolverConfig::DEFAULT_NEWTON_REL_TOL);
    solver.newton_max_iter = raw.newton_max_iter.unwrap_or(SolverConfig::DEFAULT_NEWTON_MAX_ITER);
    solver.linear_solver_tol = raw.linear_tol.unwrap_or(DEFAULT_LINEAR_TOL);
    solver.validate().map_err(|e| e.to_string())?;

    let custom = match (raw.benchmark, raw.custom) {
        (Benchmark::Custom, Some(c)) => Some(c),
        (Benchmark::Custom, None) => return Err("key `custom`: required for benchmark `custom`".into()),
        (_, Some(_)) => return Err(format!("key `custom`: only valid for benchmark `custom`, not `{name}`")),
        (_, None) => None,
    };

    let sweep = match raw.sweep {
        None => None,
        Some(SweepInput { h: Some(values), dt: None }) => {
            if !matches!(mesh, MeshSpec::Rectangle { .. }) {
                return Err("key `sweep.h`: mesh-size sweeps need a structured rectangle mesh".into());
            }
            Some(Sweep { param: SweepParam::H, values })
        }
        Some(SweepInput { h: None, dt: Some(values) }) => Some(Sweep { param: SweepParam::Dt, values }),
        Some(_) => return Err("key `sweep`: give exactly one of `h` or `dt`".into()),
    };
    if let Some(s) = &sweep {
        if s.values.len() < 2 {
            return Err("key `sweep`: at least two values are needed for rates".into());
        }
        if !s.values.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err("key `sweep`: values must be positive".into());
        }
        if s.param == SweepParam::Dt {
            for &dt in &s.values {
                let mut c = solver.clone();
                c.dt = dt;
                c.validate().map_err(|e| format!("key `sweep.dt`: {e}"))?;
            }
        }
    }

    Ok(RunConfig {
        benchmark: raw.benchmark,
        mesh,
        solver,
        output_dir: absolute(base, &raw.output_dir.unwrap_or_else(|| PathBuf::from("output"))),
        snapshot_every: raw.snapshot_every.unwrap_or(DEFAULT_SNAPSHOT_EVERY),
        pressure_output: raw.pressure_output.unwrap_or_default(),
        sweep,
        custom,
    })
}

impl RunConfig {
    /// The member of a sweep with parameter `value`, writing to `dir`.
    pub fn sweep_member(&self, param: SweepParam, value: f64, dir: PathBuf) -> RunConfig {
        let mut c = self.clone();
        c.sweep = None;
        c.output_dir = dir;
        match param {
            SweepParam::Dt => c.solver.dt = value,
            SweepParam::H => {
                if let MeshSpec::Rectangle { bounds, .. } = self.mesh {
                    let cells = |len: f64| ((len / value).round() as usize).max(1);
                    c.mesh = MeshSpec::Rectangle { nx: cells(bounds[1] - bounds[0]), ny: cells(bounds[3] - bounds[2]), bounds };
                }
            }
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, Problem> {
        parse_config_str(text, Path::new("/tmp"))
    }

    #[test]
    fn gresho_defaults() {
        let c = parse(r#"{"benchmark": "gresho"}"#).unwrap();
        assert_eq!(c.solver.dt, 0.025);
        assert_eq!(c.solver.t_end, 8.0);
        assert_eq!(c.solver.nu, 0.0);
        assert!(c.solver.filter_enabled);
        assert_eq!(c.snapshot_every, 100);
        assert_eq!(c.output_dir, PathBuf::from("/tmp/output"));
        assert_eq!(c.pressure_output, PressureOutput::Kinematic);
    }

    #[test]
    fn unknown_key_is_named() {
        let Err(Problem::Schema(m)) = parse(r#"{"benchmark": "gresho", "filtre": true}"#) else {
            panic!("accepted unknown key");
        };
        assert!(m.contains("filtre"), "{m}");
    }

    #[test]
    fn wrong_type_names_key_and_type() {
        let Err(Problem::Schema(m)) = parse(r#"{"benchmark": "gresho", "dt": "small"}"#) else {
            panic!("accepted string dt");
        };
        assert!(m.contains("`dt`") && m.contains("f64"), "{m}");
        let Err(Problem::Schema(m)) = parse(r#"{"benchmark": "gresho", "mesh": {"nx": -3}}"#) else {
            panic!("accepted negative nx");
        };
        assert!(m.contains("mesh.nx"), "{m}");
    }

    #[test]
    fn cylinder_needs_a_mesh_file() {
        assert!(matches!(parse(r#"{"benchmark": "cylinder"}"#), Err(Problem::Invalid(_))));
        let r = parse(r#"{"benchmark": "cylinder", "mesh": {"file": "missing.msh"}}"#);
        assert!(matches!(r, Err(Problem::Invalid(m)) if m.contains("does not exist")));
    }

    #[test]
    fn sweep_members() {
        let c = parse(r#"{"benchmark": "manufactured", "sweep": {"h": [0.25, 0.125]}}"#).unwrap();
        let s = c.sweep.clone().unwrap();
        let m = c.sweep_member(s.param, 0.125, "/x".into());
        assert_eq!(m.mesh, MeshSpec::Rectangle { nx: 8, ny: 8, bounds: [0.0, 1.0, 0.0, 1.0] });
        assert!(m.sweep.is_none());
        assert!(parse(r#"{"benchmark": "gresho", "sweep": {"h": [0.1]}}"#).is_err());
        assert!(parse(r#"{"benchmark": "gresho", "sweep": {"h": [0.1, 0.05], "dt": [1.0, 0.5]}}"#).is_err());
        // 8 is not a multiple of 0.3.
        assert!(parse(r#"{"benchmark": "gresho", "sweep": {"dt": [0.1, 0.3]}}"#).is_err());
    }

    #[test]
    fn custom_section_matches_benchmark() {
        assert!(parse(r#"{"benchmark": "custom", "dt": 0.1, "t_end": 1}"#).is_err());
        assert!(parse(r#"{"benchmark": "gresho", "custom": {}}"#).is_err());
        let c = parse(
            r#"{"benchmark": "custom", "dt": 0.1, "T": 1, "mesh": {"nx": 2},
                "custom": {"boundary": {"top": [1, 0]}, "body_force": [0, -1]}}"#,
        )
        .unwrap();
        assert_eq!(c.solver.t_end, 1.0);
        assert_eq!(c.custom.unwrap().boundary["top"], [1.0, 0.0]);
    }

    #[test]
    fn solver_parameters_are_validated() {
        assert!(parse(r#"{"benchmark": "gresho", "dt": 0.03}"#).is_err());
        assert!(parse(r#"{"benchmark": "gresho", "newton_max_iter": 0}"#).is_err());
    }
}
