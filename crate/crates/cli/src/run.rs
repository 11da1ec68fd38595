//! Simulation orchestration and output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use emac_core::assembly::{DirichletConditions, SharedField};
use emac_core::benchmarks::{convergence_rate, CylinderProblem, GreshoProblem, ManufacturedProblem, Scenario};
use emac_core::diagnostics::DiagnosticsRecord;
use emac_core::mesh::{generate_rectangle, load_msh, MeshError};
use emac_core::solver::{Integrator, SolverError};
use emac_core::spaces::{build_taylor_hood, State, TaylorHoodSpace};
use emac_core::Point;
use serde::Serialize;
use thiserror::Error;

use crate::config::{Benchmark, MeshSpec, RunConfig, SweepParam};
use crate::vtk;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const INCOMPLETE_FILE: &str = "INCOMPLETE";

pub const CSV_HEADER: [&str; 11] = [
    "t",
    "energy",
    "M1",
    "M2",
    "AM",
    "num_diss",
    "phys_diss",
    "drag",
    "lift",
    "newton_iters",
    "l2_error",
];

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Solver(_) => 3,
            RunError::Io { .. } => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

impl From<MeshError> for RunError {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::Io { path, source } => RunError::Io { path, source },
            other => RunError::Config(other.to_string()),
        }
    }
}

/// Extremum of a force coefficient and the time it is reached.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Peak {
    pub value: f64,
    pub t: f64,
}

fn track(peak: &mut Option<Peak>, value: Option<f64>, t: f64) {
    if let Some(v) = value {
        if peak.is_none_or(|p| v > p.value) {
            *peak = Some(Peak { value: v, t });
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub benchmark: &'static str,
    pub filter_enabled: bool,
    pub dt: f64,
    pub t_end: f64,
    pub nu: f64,
    pub steps: usize,
    pub velocity_dofs: usize,
    pub pressure_dofs: usize,
    pub final_energy: f64,
    pub final_l2_error: Option<f64>,
    pub final_h1_error: Option<f64>,
    /// `{Δt Σ_{n≥1} ‖∇(u(tⁿ) − uⁿ)‖²}^{1/2}`.
    pub l2_h1_error: Option<f64>,
    pub energy_balance_residual: Option<f64>,
    pub newton_iters_total: usize,
    pub c_d_max: Option<f64>,
    pub t_c_d_max: Option<f64>,
    pub c_l_max: Option<f64>,
    pub t_c_l_max: Option<f64>,
}

/// A finished run: its summary and per-level diagnostics.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub summary: Summary,
    pub records: Vec<DiagnosticsRecord>,
}

fn constant(v: [f64; 2]) -> SharedField {
    Arc::new(move |_: Point, _| v)
}

fn scenario(cfg: &RunConfig) -> Scenario {
    let nu = cfg.solver.nu;
    match cfg.benchmark {
        Benchmark::Manufactured => ManufacturedProblem { nu }.scenario(),
        Benchmark::Gresho => Scenario { nu, ..GreshoProblem.scenario() },
        Benchmark::Cylinder => CylinderProblem { nu }.scenario(),
        Benchmark::Custom => {
            let c = cfg.custom.clone().unwrap_or_default();
            let mut dirichlet = DirichletConditions::new();
            for (marker, v) in &c.boundary {
                dirichlet = dirichlet.with(marker.clone(), constant(*v));
            }
            Scenario {
                nu,
                initial_velocity: constant(c.initial_velocity),
                dirichlet,
                forcing: (c.body_force != [0.0; 2]).then(|| constant(c.body_force)),
                reference_velocity: None,
                force_marker: c.force_marker,
            }
        }
    }
}

pub fn build_space(cfg: &RunConfig) -> Result<TaylorHoodSpace, RunError> {
    let mesh = match &cfg.mesh {
        MeshSpec::Rectangle { nx, ny, bounds } => generate_rectangle(*nx, *ny, *bounds)?,
        MeshSpec::File(path) => load_msh(path)?,
    };
    Ok(build_taylor_hood(mesh))
}

fn check_markers(space: &TaylorHoodSpace, sc: &Scenario) -> Result<(), RunError> {
    let mesh = space.mesh();
    let needed = sc.dirichlet.markers().chain(sc.force_marker.as_deref());
    for m in needed {
        if m != emac_core::mesh::ALL_MARKER && !mesh.has_marker(m) {
            let known: Vec<&str> = mesh.markers().values().map(String::as_str).collect();
            return Err(RunError::Config(format!(
                "mesh has no boundary marker `{m}` (available: {})",
                known.join(", ")
            )));
        }
    }
    sc.dirichlet.evaluate(space, 0.0).map_err(|e| RunError::Config(e.to_string()))?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_row(r: &DiagnosticsRecord) -> [String; 11] {
    [
        r.t.to_string(),
        r.energy.to_string(),
        r.momentum[0].to_string(),
        r.momentum[1].to_string(),
        r.angular_momentum.to_string(),
        r.numerical_dissipation.to_string(),
        r.physical_dissipation.to_string(),
        opt(r.drag),
        opt(r.lift),
        r.newton_iters.to_string(),
        opt(r.l2_error),
    ]
}

struct Outputs {
    dir: PathBuf,
    csv: csv::Writer<File>,
    cfg: RunConfig,
    n_steps: usize,
}

impl Outputs {
    fn create(cfg: &RunConfig) -> Result<Self, RunError> {
        let dir = cfg.output_dir.clone();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let marker = dir.join(INCOMPLETE_FILE);
        if marker.exists() {
            fs::remove_file(&marker).map_err(io_err(&marker))?;
        }
        let path = dir.join(DIAGNOSTICS_FILE);
        let mut csv = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        csv.write_record(CSV_HEADER).map_err(|e| csv_err(&path, e))?;
        Ok(Self { dir, csv, cfg: cfg.clone(), n_steps: cfg.solver.n_steps() })
    }

    fn record(&mut self, step: usize, space: &TaylorHoodSpace, state: &State, rec: &DiagnosticsRecord) -> Result<(), RunError> {
        let path = self.dir.join(DIAGNOSTICS_FILE);
        self.csv.write_record(csv_row(rec)).map_err(|e| csv_err(&path, e))?;
        self.csv.flush().map_err(io_err(&path))?;
        let every = self.cfg.snapshot_every;
        if step == 0 || step == self.n_steps || (every > 0 && step.is_multiple_of(every)) {
            let path = self.dir.join(format!("snapshot_{step:06}.vtk"));
            let file = File::create(&path).map_err(io_err(&path))?;
            let mut out = BufWriter::new(file);
            vtk::write_snapshot(&mut out, space, state, self.cfg.pressure_output).map_err(io_err(&path))?;
            out.flush().map_err(io_err(&path))?;
        }
        Ok(())
    }
}

fn csv_err(path: &Path, e: csv::Error) -> RunError {
    RunError::Io { path: path.to_path_buf(), source: e.into() }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Runs one configuration, writing the diagnostics table, snapshots and
/// summary to its output directory. On failure the partial outputs stay in
/// place next to an `INCOMPLETE` marker holding the error.
pub fn run(cfg: &RunConfig) -> Result<RunResult, RunError> {
    let result = run_inner(cfg);
    if let Err(e) = &result {
        if cfg.output_dir.is_dir() {
            let marker = cfg.output_dir.join(INCOMPLETE_FILE);
            let _ = fs::write(marker, format!("{e}\n"));
        }
    }
    result
}

fn run_inner(cfg: &RunConfig) -> Result<RunResult, RunError> {
    let space = build_space(cfg)?;
    let sc = scenario(cfg);
    check_markers(&space, &sc)?;
    let mut outputs = Outputs::create(cfg)?;
    let mut it = Integrator::for_scenario(&space, cfg.solver.clone(), &sc)?;
    let (history, rec0) = it.start(sc.initial_velocity.as_ref(), 0.0)?;
    let initial = State { u: history.u_prev.clone(), p: vec![0.0; space.n_pressure()], t: 0.0 };
    outputs.record(0, &space, &initial, &rec0)?;

    let mut records = vec![rec0];
    let mut failure = None;
    it.run(history, |state, rec| {
        if failure.is_some() {
            return;
        }
        records.push(rec.clone());
        if let Err(e) = outputs.record(records.len() - 1, &space, state, rec) {
            failure = Some(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }

    let dt = cfg.solver.dt;
    let (mut cd, mut cl) = (None, None);
    for r in &records {
        track(&mut cd, r.drag, r.t);
        track(&mut cl, r.lift, r.t);
    }
    let last = records.last().expect("initial record");
    let l2_h1_error = records[1..]
        .iter()
        .map(|r| r.h1_error.map(|e| e * e))
        .sum::<Option<f64>>()
        .map(|s| (dt * s).sqrt());
    let summary = Summary {
        benchmark: cfg.benchmark.name(),
        filter_enabled: cfg.solver.filter_enabled,
        dt,
        t_end: cfg.solver.t_end,
        nu: it.config().nu,
        steps: records.len() - 1,
        velocity_dofs: space.n_velocity(),
        pressure_dofs: space.n_pressure(),
        final_energy: last.energy,
        final_l2_error: last.l2_error,
        final_h1_error: last.h1_error,
        l2_h1_error,
        energy_balance_residual: it.energy_balance().map(|b| b.residual()),
        newton_iters_total: records.iter().map(|r| r.newton_iters).sum(),
        c_d_max: cd.map(|p| p.value),
        t_c_d_max: cd.map(|p| p.t),
        c_l_max: cl.map(|p| p.value),
        t_c_l_max: cl.map(|p| p.t),
    };
    write_json(&cfg.output_dir.join(SUMMARY_FILE), &summary)?;
    Ok(RunResult { summary, records })
}

type Job<'a, T> = Box<dyn FnOnce() -> T + Send + 'a>;

/// Runs `jobs` on up to `available_parallelism` threads, keeping input order.
fn parallel<T: Send>(jobs: Vec<Job<'_, T>>) -> Vec<T> {
    let n = jobs.len();
    let workers = std::thread::available_parallelism().map_or(1, |w| w.get()).min(n).max(1);
    let queue: Vec<Mutex<Option<Job<'_, T>>>> = jobs.into_iter().map(|j| Mutex::new(Some(j))).collect();
    let results: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let job = queue[i].lock().unwrap().take().expect("each job runs once");
                *results[i].lock().unwrap() = Some(job());
            });
        }
    });
    results.into_iter().map(|r| r.into_inner().unwrap().expect("job finished")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSummary {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// ℓ²(H¹) errors per member.
    pub errors: Vec<f64>,
    pub rates: Vec<f64>,
    pub final_l2_errors: Vec<f64>,
    pub members: Vec<Summary>,
}

fn member_dir(root: &Path, param: SweepParam, value: f64) -> PathBuf {
    let tag = match param {
        SweepParam::H => "h",
        SweepParam::Dt => "dt",
    };
    root.join(format!("{tag}_{value}"))
}

/// Runs every sweep member in its own subdirectory, then writes
/// `convergence.csv` and `sweep_summary.json` at the top level.
pub fn sweep(cfg: &RunConfig) -> Result<SweepSummary, RunError> {
    let Some(sw) = &cfg.sweep else {
        return Err(RunError::Config("`sweep` needs a `sweep` section in the configuration".into()));
    };
    if cfg.benchmark != Benchmark::Manufactured {
        return Err(RunError::Config("rates need a known solution: sweep the `manufactured` benchmark".into()));
    }
    let mut values = sw.values.clone();
    values.sort_by(|a, b| b.total_cmp(a));
    let members: Vec<RunConfig> = values
        .iter()
        .map(|&v| cfg.sweep_member(sw.param, v, member_dir(&cfg.output_dir, sw.param, v)))
        .collect();
    let jobs = members
        .iter()
        .map(|m| Box::new(move || run(m)) as Job<'_, Result<RunResult, RunError>>)
        .collect();
    let mut summaries = Vec::new();
    for r in parallel(jobs) {
        summaries.push(r?.summary);
    }
    let errors: Vec<f64> = summaries.iter().map(|s| s.l2_h1_error.unwrap_or(f64::NAN)).collect();
    let final_l2: Vec<f64> = summaries.iter().map(|s| s.final_l2_error.unwrap_or(f64::NAN)).collect();
    let rates = convergence_rate(&errors, &values).map_err(|e| RunError::Config(e.to_string()))?;

    let path = cfg.output_dir.join("convergence.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let name = match sw.param {
        SweepParam::H => "h",
        SweepParam::Dt => "dt",
    };
    w.write_record([name, "l2_h1_error", "rate", "final_l2_error"]).map_err(|e| csv_err(&path, e))?;
    for k in 0..values.len() {
        let rate = if k == 0 { String::new() } else { rates[k - 1].to_string() };
        w.write_record([values[k].to_string(), errors[k].to_string(), rate, final_l2[k].to_string()])
            .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(io_err(&path))?;
    let summary = SweepSummary { param: sw.param, values, errors, rates, final_l2_errors: final_l2, members: summaries };
    write_json(&cfg.output_dir.join("sweep_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub filtered: Summary,
    pub unfiltered: Summary,
}

/// Runs the filtered and unfiltered schemes from the same initial data into
/// `filtered/` and `unfiltered/`, then writes the per-level `comparison.csv`
/// (filtered minus unfiltered) and `comparison.json`.
pub fn compare(cfg: &RunConfig) -> Result<Comparison, RunError> {
    let with = |on: bool, dir: &str| {
        let mut c = cfg.clone();
        c.sweep = None;
        c.solver.filter_enabled = on;
        c.output_dir = cfg.output_dir.join(dir);
        c
    };
    let (fc, uc) = (with(true, "filtered"), with(false, "unfiltered"));
    let jobs: Vec<Job<'_, _>> = vec![Box::new(|| run(&fc)), Box::new(|| run(&uc))];
    let mut out = parallel(jobs).into_iter();
    let f = out.next().expect("two runs")?;
    let u = out.next().expect("two runs")?;

    let path = cfg.output_dir.join("comparison.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let cols = [
        "t",
        "energy_filtered",
        "energy_unfiltered",
        "energy_delta",
        "drag_filtered",
        "drag_unfiltered",
        "drag_delta",
        "lift_filtered",
        "lift_unfiltered",
        "lift_delta",
        "l2_error_filtered",
        "l2_error_unfiltered",
        "l2_error_delta",
    ];
    w.write_record(cols).map_err(|e| csv_err(&path, e))?;
    let delta = |a: Option<f64>, b: Option<f64>| [opt(a), opt(b), opt(a.zip(b).map(|(a, b)| a - b))];
    for (a, b) in f.records.iter().zip(&u.records) {
        let mut row = vec![a.t.to_string()];
        row.extend(delta(Some(a.energy), Some(b.energy)));
        row.extend(delta(a.drag, b.drag));
        row.extend(delta(a.lift, b.lift));
        row.extend(delta(a.l2_error, b.l2_error));
        w.write_record(&row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(io_err(&path))?;
    let cmp = Comparison { filtered: f.summary, unfiltered: u.summary };
    write_json(&cfg.output_dir.join("comparison.json"), &cmp)?;
    Ok(cmp)
}

/// Text report of a mesh file: counts, markers, extent and DOFs.
pub fn mesh_info(path: &Path) -> Result<String, RunError> {
    let mesh = load_msh(path)?;
    let mut s = String::new();
    let (lo, hi) = mesh.bounding_box();
    s += &format!("vertices       {}\n", mesh.n_vertices());
    s += &format!("triangles      {}\n", mesh.n_triangles());
    s += &format!("boundary edges {}\n", mesh.boundary_edges().len());
    s += &format!("area           {}\n", mesh.area());
    s += &format!("bounding box   [{}, {}] x [{}, {}]\n", lo[0], hi[0], lo[1], hi[1]);
    s += &format!("max edge       {}\n", mesh.max_edge_length());
    for (tag, name) in mesh.markers() {
        let n = mesh.boundary_edges().iter().filter(|e| e.tag == *tag).count();
        s += &format!("marker {tag:<7} {name} ({n} edges)\n");
    }
    let space = build_taylor_hood(mesh);
    s += &format!(
        "P2/P1 dofs     {} velocity + {} pressure = {}\n",
        space.n_velocity(),
        space.n_pressure(),
        space.n_dofs()
    );
    Ok(s)
}
