//! Run configuration, pipelines behind the `risbench` subcommands, and their on-disk artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmarks::{self, BenchmarkError, BenchmarkPattern, ReferenceOptions, REFERENCE_SIZE};
use crate::control::{self, ControlReport};
use crate::field::{self, FieldError, SourceDoc, SourceModel};
use crate::grid::{FieldGrid, GridError, GridSpec};
use crate::metrics::{evaluate_all, DirectivityOptions, MetricsError, MetricsReport};
use crate::optimizer::{run_ga, FitnessProblem, GAParams, GAResult, OptimizerError};
use crate::surface::{build_surface, bundled_cell, ConfigMatrix, SurfaceError, SurfaceSpec, UnitCellDoc, UnitCellSpec};

pub const TOOL_NAME: &str = "risbench";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit status per failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Config = 2,
    Numeric = 3,
    Io = 4,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("I/O error: {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl HarnessError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            HarnessError::Config(_) => ExitCode::Config,
            HarnessError::Numeric(_) => ExitCode::Numeric,
            HarnessError::Io { .. } => ExitCode::Io,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<BenchmarkError> for HarnessError {
    fn from(e: BenchmarkError) -> Self {
        match e {
            BenchmarkError::Io { path, source } => HarnessError::Io { path, source },
            BenchmarkError::UnknownBenchmark(_)
            | BenchmarkError::OverlappingLobes { .. }
            | BenchmarkError::InvalidBeam { .. }
            | BenchmarkError::Empty
            | BenchmarkError::Json { .. } => HarnessError::Config(e.to_string()),
            BenchmarkError::Grid(g) => g.into(),
            other => HarnessError::Numeric(other.to_string()),
        }
    }
}

impl From<GridError> for HarnessError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::Io(source) => HarnessError::Io {
                path: String::new(),
                source,
            },
            GridError::InvalidStep { .. } | GridError::Csv { .. } => HarnessError::Config(e.to_string()),
            other => HarnessError::Numeric(other.to_string()),
        }
    }
}

macro_rules! numeric_from {
    ($($t:ty),*) => {$(
        impl From<$t> for HarnessError {
            fn from(e: $t) -> Self {
                HarnessError::Numeric(e.to_string())
            }
        }
    )*};
}
numeric_from!(FieldError, MetricsError, OptimizerError, SurfaceError);

/// Configuration to simulate when no optimisation is requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SimulateConfig {
    /// Every cell in the same state.
    Uniform {
        #[serde(default)]
        state: u8,
    },
    /// Nearest-state phase gradient towards a direction.
    Steer {
        theta_deg: f64,
        #[serde(default)]
        phi_deg: f64,
    },
    /// Configuration CSV written by `optimize`.
    File { path: PathBuf },
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig::Uniform { state: 0 }
    }
}

/// Per-cycle control parameters for the complexity report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlParams {
    #[serde(rename = "K")]
    pub k: f64,
    pub tau_s: f64,
    pub p_d_w: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams {
            k: control::DEFAULT_K,
            tau_s: control::DEFAULT_TAU_S,
            p_d_w: control::DEFAULT_DIODE_POWER_W,
        }
    }
}

fn forty() -> usize {
    REFERENCE_SIZE
}

/// Size of the ideal-cell surface used to synthesise reference patterns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSize {
    #[serde(rename = "M", default = "forty")]
    pub rows: usize,
    #[serde(rename = "N", default = "forty")]
    pub cols: usize,
}

impl Default for ReferenceSize {
    fn default() -> Self {
        ReferenceSize {
            rows: REFERENCE_SIZE,
            cols: REFERENCE_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled cell id (`S0`..`S5`) or path to a unit-cell JSON file.
    pub surface_ref: String,
    #[serde(rename = "M")]
    pub rows: usize,
    #[serde(rename = "N")]
    pub cols: usize,
    #[serde(rename = "G")]
    pub group_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pitch_mm: Option<f64>,
    /// Bundled benchmark id (`B1`..`B8`) or path to a benchmark JSON file.
    pub benchmark_ref: String,
    pub source: SourceDoc,
    pub grid: GridSpec,
    pub ga: GAParams,
    pub output_dir: PathBuf,
    pub simulate: SimulateConfig,
    pub control: ControlParams,
    pub directivity: DirectivityOptions,
    pub reference: ReferenceSize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            surface_ref: "S0".into(),
            rows: 40,
            cols: 40,
            group_size: 1,
            pitch_mm: None,
            benchmark_ref: "B1".into(),
            source: SourceDoc::default(),
            grid: GridSpec::default(),
            ga: GAParams::default(),
            output_dir: PathBuf::from("out"),
            simulate: SimulateConfig::default(),
            control: ControlParams::default(),
            directivity: DirectivityOptions::default(),
            reference: ReferenceSize::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn cell(&self) -> Result<UnitCellSpec<f64>, HarnessError> {
        if let Some(c) = bundled_cell(&self.surface_ref) {
            return Ok(c);
        }
        let path = Path::new(&self.surface_ref);
        let text = fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("surface_ref `{}` is neither a bundled cell nor a readable file: {e}", path.display()))
        })?;
        let doc: UnitCellDoc =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        doc.to_spec().map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn surface(&self, group_size: usize) -> Result<SurfaceSpec<f64>, HarnessError> {
        let (s, _) = build_surface(self.cell()?, self.rows, self.cols, group_size, self.pitch_mm.map(|p| p * 1e-3))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(s)
    }

    pub fn benchmark(&self) -> Result<BenchmarkPattern, HarnessError> {
        Ok(benchmarks::load_benchmark(&self.benchmark_ref)?)
    }

    pub fn source_model(&self) -> Result<SourceModel<f64>, HarnessError> {
        let s = self.source.to_model();
        s.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        self.grid.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.ga.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    fn reference_options(&self) -> ReferenceOptions {
        ReferenceOptions {
            rows: self.reference.rows,
            cols: self.reference.cols,
            grid: self.grid,
            ga: self.ga.clone(),
        }
    }
}

/// Summary of the optimiser run stored in a [`RunRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaSummary {
    pub best_fitness: f64,
    pub generations: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub metrics: Option<MetricsReport>,
    pub control: ControlReport,
    pub ga: Option<GaSummary>,
    /// Artifact name to path.
    pub artifacts: BTreeMap<String, PathBuf>,
    pub wall_time_s: f64,
}

/// `P6` pixmap of a configuration, one pixel per cell.
pub fn config_ppm(config: &ConfigMatrix) -> Vec<u8> {
    const PALETTE: [[u8; 3]; 4] = [[0, 0, 255], [0, 255, 255], [255, 255, 0], [255, 0, 0]];
    let mut out = format!("P6\n{} {}\n255\n", config.cols, config.rows).into_bytes();
    for &s in &config.states {
        match PALETTE.get(usize::from(s)) {
            Some(rgb) => out.extend_from_slice(rgb),
            None => out.extend_from_slice(&[s, s, s]),
        }
    }
    out
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn prepare_out(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// A finished command: the record (if the command writes one) and what to print.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub record: Option<RunRecord>,
    pub stdout: String,
}

fn finish(
    cfg: &RunConfig,
    command: &str,
    started: Instant,
    metrics: Option<MetricsReport>,
    control: ControlReport,
    ga: Option<GaSummary>,
    mut artifacts: BTreeMap<String, PathBuf>,
) -> Result<Outcome, HarnessError> {
    let record_path = cfg.output_dir.join("run_record.json");
    artifacts.insert("run_record".into(), record_path.clone());
    let record = RunRecord {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        command: command.into(),
        seed: cfg.ga.seed,
        config: cfg.clone(),
        metrics,
        control,
        ga,
        artifacts,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&record).expect("record serialises");
    write(&record_path, format!("{json}\n"))?;
    Ok(Outcome {
        stdout: format!("{json}\n"),
        record: Some(record),
    })
}

fn control_report(cfg: &RunConfig, surface: &SurfaceSpec<f64>) -> Result<ControlReport, HarnessError> {
    Ok(control::complexity_report(surface, cfg.control.k, cfg.control.tau_s, cfg.control.p_d_w)?)
}

/// Field and pixmap of a fixed configuration.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome, HarnessError> {
    let started = Instant::now();
    cfg.validate()?;
    let surface = cfg.surface(cfg.group_size)?;
    let src = cfg.source_model()?;
    let config = match &cfg.simulate {
        SimulateConfig::Uniform { state } => ConfigMatrix::uniform(cfg.rows, cfg.cols, *state),
        SimulateConfig::Steer { theta_deg, phi_deg } => field::steered_config(&surface, &src, *theta_deg, *phi_deg)?,
        SimulateConfig::File { path } => {
            let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            ConfigMatrix::from_csv_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
        }
    };
    config
        .check_states(surface.cell.n_states())
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let f = field::field(&surface, &config, &src, cfg.grid)?;
    prepare_out(&cfg.output_dir)?;
    let mut artifacts = BTreeMap::new();
    for (name, file, bytes) in [
        ("pattern", "pattern.csv", f.to_csv_string().into_bytes()),
        ("config", "config.csv", config.to_csv_string().into_bytes()),
        ("config_image", "config.ppm", config_ppm(&config)),
    ] {
        let p = cfg.output_dir.join(file);
        write(&p, bytes)?;
        artifacts.insert(name.to_string(), p);
    }
    let control = control_report(cfg, &surface)?;
    finish(cfg, "simulate", started, None, control, None, artifacts)
}

/// Reference pattern from the ideal-cell surface, through the on-disk cache.
pub fn reference_for(cfg: &RunConfig, bm: &BenchmarkPattern) -> Result<FieldGrid<f64>, HarnessError> {
    let src = cfg.source_model()?;
    let dir = benchmarks::default_cache_dir();
    let r = benchmarks::reference_pattern(bm, &src, cfg.ga.seed, &cfg.reference_options(), Some(&dir))?;
    Ok(r.field)
}

fn optimize_one(
    cfg: &RunConfig,
    bm: &BenchmarkPattern,
    group_size: usize,
) -> Result<(SurfaceSpec<f64>, GAResult, FieldGrid<f64>), HarnessError> {
    let surface = cfg.surface(group_size)?;
    let src = cfg.source_model()?;
    let target = benchmarks::ideal_target_field::<f64>(bm, cfg.grid)?;
    let problem = FitnessProblem::new(surface.clone(), src, &target)?;
    let result = run_ga(&problem, &cfg.ga)?;
    let achieved = problem.field(&result.best_config)?;
    Ok((surface, result, achieved))
}

/// GA synthesis against the benchmark, then evaluation against the reference pattern.
pub fn cmd_optimize(cfg: &RunConfig) -> Result<Outcome, HarnessError> {
    let started = Instant::now();
    cfg.validate()?;
    let bm = cfg.benchmark()?;
    let (surface, result, achieved) = optimize_one(cfg, &bm, cfg.group_size)?;
    let reference = reference_for(cfg, &bm)?;
    let metrics = evaluate_all(&reference, &achieved, &bm, &cfg.directivity)?;
    prepare_out(&cfg.output_dir)?;
    let mut artifacts = BTreeMap::new();
    for (name, file, bytes) in [
        ("best_config", "best_config.csv", result.best_config.to_csv_string().into_bytes()),
        ("history", "history.csv", result.history_csv().into_bytes()),
        ("pattern", "pattern.csv", achieved.to_csv_string().into_bytes()),
        ("config_image", "config.ppm", config_ppm(&result.best_config)),
        (
            "metrics",
            "metrics.json",
            format!("{}\n", serde_json::to_string_pretty(&metrics).expect("metrics serialise")).into_bytes(),
        ),
    ] {
        let p = cfg.output_dir.join(file);
        write(&p, bytes)?;
        artifacts.insert(name.to_string(), p);
    }
    let control = control_report(cfg, &surface)?;
    let ga = GaSummary {
        best_fitness: result.best_fitness,
        generations: result.history.len(),
        evaluations: result.evaluations,
    };
    finish(cfg, "optimize", started, Some(metrics), control, Some(ga), artifacts)
}

fn read_field(path: &Path) -> Result<FieldGrid<f64>, HarnessError> {
    let file = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    FieldGrid::read_csv(std::io::BufReader::new(file)).map_err(|e| match e {
        GridError::Io(source) => HarnessError::io(path, source),
        other => HarnessError::Config(format!("{}: {other}", path.display())),
    })
}

/// Metrics of an achieved pattern against a reference CSV, or against the cached reference pattern
/// for the configured benchmark.
pub fn cmd_evaluate(cfg: &RunConfig, achieved: &Path, reference: Option<&Path>) -> Result<Outcome, HarnessError> {
    let bm = cfg.benchmark()?;
    let achieved = read_field(achieved)?;
    let reference = match reference {
        Some(p) => read_field(p)?,
        None => {
            let mut c = cfg.clone();
            c.grid = achieved.grid;
            reference_for(&c, &bm)?
        }
    };
    let report = evaluate_all(&reference, &achieved, &bm, &cfg.directivity)?;
    let json = serde_json::to_string_pretty(&report).expect("metrics serialise");
    Ok(Outcome {
        record: None,
        stdout: format!("{json}\n"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "G")]
    pub g: usize,
    pub de: f64,
    pub nmse: f64,
    pub slr_db: f64,
    pub physical_paths: usize,
    pub switching_rate_hz: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    use crate::grid::fmt_sig9;
    let mut s = String::from("G,de,nmse,slr_db,physical_paths,switching_rate_hz\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.g,
            fmt_sig9(r.de),
            fmt_sig9(r.nmse),
            fmt_sig9(r.slr_db),
            r.physical_paths,
            fmt_sig9(r.switching_rate_hz)
        ));
    }
    s
}

/// One optimise-and-evaluate per group size, all with the same seed and reference.
pub fn cmd_sweep_grouping(cfg: &RunConfig, groups: &[usize]) -> Result<(Vec<SweepRow>, Outcome), HarnessError> {
    cfg.validate()?;
    let cells = cfg.rows * cfg.cols;
    if let Some(&g) = groups.iter().find(|&&g| g == 0 || cells % g != 0) {
        return Err(HarnessError::Config(format!("group size {g} does not divide {cells} cells")));
    }
    let bm = cfg.benchmark()?;
    let reference = reference_for(cfg, &bm)?;
    let mut rows = Vec::with_capacity(groups.len());
    for &g in groups {
        let (surface, _, achieved) = optimize_one(cfg, &bm, g)?;
        let m = evaluate_all(&reference, &achieved, &bm, &cfg.directivity)?;
        let c = control_report(cfg, &surface)?;
        rows.push(SweepRow {
            g,
            de: m.de,
            nmse: m.nmse,
            slr_db: m.slr_db,
            physical_paths: c.physical_paths,
            switching_rate_hz: c.switching_rate_hz,
        });
    }
    prepare_out(&cfg.output_dir)?;
    let csv = sweep_csv(&rows);
    write(&cfg.output_dir.join("sweep_grouping.csv"), &csv)?;
    Ok((rows, Outcome { record: None, stdout: csv }))
}

/// Control complexity and power for every bundled non-reference cell on a 40 x 40, ungrouped surface.
pub fn table1_reports(params: &ControlParams) -> Result<Vec<ControlReport>, HarnessError> {
    crate::surface::bundled_cell_ids()
        .filter(|id| *id != "S0")
        .map(|id| {
            let cell: UnitCellSpec<f64> = bundled_cell(id).expect("bundled");
            let (s, _) = build_surface(cell, REFERENCE_SIZE, REFERENCE_SIZE, 1, None)?;
            Ok(control::complexity_report(&s, params.k, params.tau_s, params.p_d_w)?)
        })
        .collect()
}

pub fn cmd_table1(params: &ControlParams, json: bool) -> Result<Outcome, HarnessError> {
    let reports = table1_reports(params)?;
    let stdout = if json {
        format!("{}\n", serde_json::to_string_pretty(&reports).expect("reports serialise"))
    } else {
        let mut s = format!(
            "{:<4} {:>2} {:>2} {:>7} {:>6} {:>9} {:>8} {:>9} {:>13}\n",
            "cell", "n", "d", "f_GHz", "paths", "rate_MHz", "P_max_W", "W_per_m2", "cell_area_m2"
        );
        for r in &reports {
            let p = &r.params_echo;
            s.push_str(&format!(
                "{:<4} {:>2} {:>2} {:>7.2} {:>6} {:>9.4} {:>8.1} {:>9.2} {:>13.3e}\n",
                r.cell_id,
                p.n_bits,
                p.d,
                p.f_hz / 1e9,
                r.physical_paths,
                r.switching_rate_hz / 1e6,
                r.total_power_w,
                r.power_per_area_w_m2,
                r.cell_area_m2
            ));
        }
        s
    };
    Ok(Outcome { record: None, stdout })
}
