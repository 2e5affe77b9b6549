//! Benchmark beam layouts, their ideal target fields, and cached reference patterns from the ideal surface.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::field::{FieldError, SourceDoc, SourceModel};
use crate::grid::{FieldGrid, GridError, GridSpec};
use crate::num::Real;
use crate::optimizer::{run_ga, FitnessProblem, GAParams, OptimizerError};
use crate::surface::{build_surface, bundled_cell, ConfigMatrix, SurfaceError, UnitCellSpec};

/// Half-width of the bundled lobe regions; 6 deg is about the first-null width of a 20-wavelength aperture.
pub const DEFAULT_HALF_WIDTH_DEG: f64 = 3.0;
/// Side length of the reference surface.
pub const REFERENCE_SIZE: usize = 40;
/// Environment variable that relocates the reference-pattern cache.
pub const CACHE_ENV: &str = "RISBENCH_CACHE_DIR";

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("unknown benchmark `{0}` (expected B1..B8 or a JSON file)")]
    UnknownBenchmark(String),
    #[error("lobe regions of beams {first} and {second} overlap")]
    OverlappingLobes { first: usize, second: usize },
    #[error("beam {index}: {msg}")]
    InvalidBeam { index: usize, msg: String },
    #[error("benchmark has no beams")]
    Empty,
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

/// One intended beam in the principal plane. Positive angles lie in phi = 0, negative in phi = 180.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub theta_deg: f64,
    pub amplitude: f64,
    pub start_deg: f64,
    pub end_deg: f64,
}

impl BeamSpec {
    /// Beam centred on `theta_deg` with the default lobe half-width.
    pub fn centered(theta_deg: f64, amplitude: f64) -> Self {
        BeamSpec {
            theta_deg,
            amplitude,
            start_deg: theta_deg - DEFAULT_HALF_WIDTH_DEG,
            end_deg: theta_deg + DEFAULT_HALF_WIDTH_DEG,
        }
    }

    pub fn width_deg(&self) -> f64 {
        self.end_deg - self.start_deg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPattern {
    pub id: String,
    pub beams: Vec<BeamSpec>,
}

impl BenchmarkPattern {
    pub fn validate(self) -> Result<Self, BenchmarkError> {
        if self.beams.is_empty() {
            return Err(BenchmarkError::Empty);
        }
        for (index, b) in self.beams.iter().enumerate() {
            let bad = |msg: String| Err(BenchmarkError::InvalidBeam { index, msg });
            if !(b.start_deg < b.theta_deg && b.theta_deg < b.end_deg) {
                return bad(format!(
                    "lobe [{}, {}] does not strictly contain {}",
                    b.start_deg, b.end_deg, b.theta_deg
                ));
            }
            if b.start_deg < -90.0 || b.end_deg > 90.0 {
                return bad(format!("lobe [{}, {}] leaves [-90, 90]", b.start_deg, b.end_deg));
            }
            if !(b.amplitude > 0.0 && b.amplitude <= 1.0) {
                return bad(format!("amplitude {} outside (0, 1]", b.amplitude));
            }
        }
        for i in 0..self.beams.len() {
            for j in i + 1..self.beams.len() {
                let (a, b) = (&self.beams[i], &self.beams[j]);
                if a.start_deg.max(b.start_deg) <= a.end_deg.min(b.end_deg) {
                    return Err(BenchmarkError::OverlappingLobes { first: i, second: j });
                }
            }
        }
        Ok(self)
    }
}

const BUNDLED: [(&str, &str); 8] = [
    ("B1", include_str!("../data/benchmarks/B1.json")),
    ("B2", include_str!("../data/benchmarks/B2.json")),
    ("B3", include_str!("../data/benchmarks/B3.json")),
    ("B4", include_str!("../data/benchmarks/B4.json")),
    ("B5", include_str!("../data/benchmarks/B5.json")),
    ("B6", include_str!("../data/benchmarks/B6.json")),
    ("B7", include_str!("../data/benchmarks/B7.json")),
    ("B8", include_str!("../data/benchmarks/B8.json")),
];

pub fn bundled_benchmark_ids() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(id, _)| *id)
}

/// `B1`..`B8` resolve to the bundled layouts; anything else is read as a JSON file.
pub fn load_benchmark(id_or_path: &str) -> Result<BenchmarkPattern, BenchmarkError> {
    if let Some((id, text)) = BUNDLED.iter().find(|(k, _)| k.eq_ignore_ascii_case(id_or_path)) {
        let bm: BenchmarkPattern = serde_json::from_str(text).map_err(|source| BenchmarkError::Json {
            path: (*id).to_string(),
            source,
        })?;
        return bm.validate();
    }
    let path = Path::new(id_or_path);
    if !path.is_file() {
        return Err(BenchmarkError::UnknownBenchmark(id_or_path.to_string()));
    }
    let text = fs::read_to_string(path).map_err(|source| BenchmarkError::Io {
        path: id_or_path.to_string(),
        source,
    })?;
    let bm: BenchmarkPattern = serde_json::from_str(&text).map_err(|source| BenchmarkError::Json {
        path: id_or_path.to_string(),
        source,
    })?;
    bm.validate()
}

/// Raised-cosine spot per beam, zero elsewhere, peak-normalised to 1.
///
/// A direction is described by its elevation `atan2(x, z)` within the principal plane and its
/// elevation `asin(y)` out of it; both taper with the beam's lobe width, so the spot is
/// circular-ish and the principal cut reproduces the 1-D profile exactly.
pub fn ideal_target_field<T: Real>(bm: &BenchmarkPattern, grid: GridSpec) -> Result<FieldGrid<T>, BenchmarkError> {
    grid.validate()?;
    let raw = FieldGrid::from_magnitudes(grid, |theta_deg, phi_deg| {
        if theta_deg > 90.0 {
            return T::zero();
        }
        let (t, p) = (theta_deg.to_radians(), phi_deg.to_radians());
        let (x, y, z) = (t.sin() * p.cos(), t.sin() * p.sin(), t.cos());
        let in_plane = x.atan2(z).to_degrees();
        let across = y.clamp(-1.0, 1.0).asin().to_degrees();
        let mut best = 0.0f64;
        for b in &bm.beams {
            let w = b.width_deg();
            if in_plane < b.start_deg || in_plane > b.end_deg || across.abs() > w / 2.0 {
                continue;
            }
            let u = (std::f64::consts::PI * (in_plane - b.theta_deg) / w).cos();
            let v = (std::f64::consts::PI * across / w).cos();
            best = best.max(b.amplitude * u * u * v * v);
        }
        T::lit(best)
    });
    let peak = raw.max_magnitude();
    if peak <= T::zero() {
        return Err(GridError::AllZeroField.into());
    }
    Ok(FieldGrid {
        grid,
        values: raw.values.iter().map(|v| Complex::new(v.re / peak, T::zero())).collect(),
        wavelength_m: None,
    })
}

/// Ideal 2-bit cell: unit reflection, 90-degree state spacing, cosine response.
pub fn reference_unit_cell<T: Real>() -> UnitCellSpec<T> {
    bundled_cell("S0").expect("S0 is bundled")
}

/// Everything besides benchmark, source and seed that determines a reference pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptions {
    pub rows: usize,
    pub cols: usize,
    pub grid: GridSpec,
    pub ga: GAParams,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions {
            rows: REFERENCE_SIZE,
            cols: REFERENCE_SIZE,
            grid: GridSpec::default(),
            ga: GAParams::default(),
        }
    }
}

/// `$RISBENCH_CACHE_DIR` if set, else `./cache`.
pub fn default_cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("cache"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePattern<T> {
    pub field: FieldGrid<T>,
    pub config: ConfigMatrix,
    /// Cache file holding the field; the configuration sits next to it.
    pub path: Option<PathBuf>,
    pub from_cache: bool,
}

fn cache_stem<T: Real>(bm: &BenchmarkPattern, src: &SourceModel<T>, seed: u64, opts: &ReferenceOptions) -> String {
    let mut ga = opts.ga.clone();
    ga.seed = seed;
    let key = serde_json::json!({
        "beams": bm.beams,
        "source": SourceDoc::from_model(src),
        "rows": opts.rows,
        "cols": opts.cols,
        "grid": opts.grid,
        "ga": ga,
        "precision": std::mem::size_of::<T>(),
    });
    let digest = Sha256::digest(key.to_string().as_bytes());
    let id: String = bm
        .id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '-' })
        .collect();
    format!("{id}_{}_{seed}_{}", src.label(), &hex::encode(digest)[..16])
}

fn write_atomically(path: &Path, contents: &[u8]) -> Result<(), BenchmarkError> {
    let io = |source| BenchmarkError::Io {
        path: path.display().to_string(),
        source,
    };
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Synthesises the reference pattern on an ideal-cell surface (one control line per cell) against the
/// benchmark's ideal target. With `cache_dir`, results are stored as `ref/<stem>.csv` and
/// `ref/<stem>.config.csv` and reused on later calls.
pub fn reference_pattern<T: Real>(
    bm: &BenchmarkPattern,
    src: &SourceModel<T>,
    seed: u64,
    opts: &ReferenceOptions,
    cache_dir: Option<&Path>,
) -> Result<ReferencePattern<T>, BenchmarkError> {
    src.validate()?;
    let paths = cache_dir.map(|dir| {
        let stem = cache_stem(bm, src, seed, opts);
        let dir = dir.join("ref");
        (dir.clone(), dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.config.csv")))
    });
    if let Some((_, field_path, config_path)) = &paths {
        if let Some((field, config)) = read_cached(field_path, config_path) {
            return Ok(ReferencePattern {
                field,
                config,
                path: Some(field_path.clone()),
                from_cache: true,
            });
        }
    }

    let (surface, _) = build_surface(reference_unit_cell::<T>(), opts.rows, opts.cols, 1, None)?;
    let target = ideal_target_field::<T>(bm, opts.grid)?;
    let problem = FitnessProblem::new(surface, src.clone(), &target)?;
    let mut ga = opts.ga.clone();
    ga.seed = seed;
    let result = run_ga(&problem, &ga)?;
    let mut field = problem.field(&result.best_config)?;
    // The CSV keeps nine significant digits; hand back exactly what a cache hit would.
    field = FieldGrid::read_csv(field.to_csv_string().as_bytes())?;

    let mut path = None;
    if let Some((dir, field_path, config_path)) = paths {
        fs::create_dir_all(&dir).map_err(|source| BenchmarkError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_atomically(&field_path, field.to_csv_string().as_bytes())?;
        write_atomically(&config_path, result.best_config.to_csv_string().as_bytes())?;
        path = Some(field_path);
    }
    Ok(ReferencePattern {
        field,
        config: result.best_config,
        path,
        from_cache: false,
    })
}

fn read_cached<T: Real>(field_path: &Path, config_path: &Path) -> Option<(FieldGrid<T>, ConfigMatrix)> {
    let field_text = fs::read_to_string(field_path).ok()?;
    let config_text = fs::read_to_string(config_path).ok()?;
    let field = FieldGrid::read_csv(field_text.as_bytes()).ok()?;
    let config = ConfigMatrix::from_csv_str(&config_text).ok()?;
    Some((field, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::principal_cut;

    #[test]
    fn bundled_beam_counts() {
        let counts = [1, 1, 2, 3, 4, 4, 8, 4];
        for (id, want) in bundled_benchmark_ids().zip(counts) {
            let bm = load_benchmark(id).unwrap();
            assert_eq!(bm.id, id);
            assert_eq!(bm.beams.len(), want, "{id}");
        }
        for id in ["B4", "B5", "B6", "B7"] {
            assert!(load_benchmark(id).unwrap().beams.iter().all(|b| b.amplitude == 1.0), "{id}");
        }
        let b8 = load_benchmark("B8").unwrap();
        assert!(b8.beams.iter().any(|b| b.amplitude != b8.beams[0].amplitude));
        assert!(load_benchmark("b2").unwrap().beams[0].theta_deg.abs() < 40.0);
    }

    #[test]
    fn rejects_bad_patterns() {
        assert!(matches!(load_benchmark("B9"), Err(BenchmarkError::UnknownBenchmark(_))));
        let twin = BenchmarkPattern {
            id: "x".into(),
            beams: vec![BeamSpec::centered(10.0, 1.0), BeamSpec::centered(10.0, 0.5)],
        };
        assert!(matches!(twin.validate(), Err(BenchmarkError::OverlappingLobes { first: 0, second: 1 })));
        let bad = |b: BeamSpec| BenchmarkPattern { id: "x".into(), beams: vec![b] }.validate();
        assert!(bad(BeamSpec { theta_deg: 5.0, amplitude: 1.0, start_deg: 5.0, end_deg: 8.0 }).is_err());
        assert!(bad(BeamSpec::centered(10.0, 0.0)).is_err());
        assert!(bad(BeamSpec::centered(10.0, 1.5)).is_err());
        assert!(bad(BeamSpec::centered(89.0, 1.0)).is_err());
        assert!(matches!(
            BenchmarkPattern { id: "x".into(), beams: vec![] }.validate(),
            Err(BenchmarkError::Empty)
        ));
    }

    #[test]
    fn custom_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("twin.json");
        let doc = r#"{"id":"twin","beams":[{"theta_deg":10,"amplitude":1,"start_deg":7,"end_deg":13},
                                            {"theta_deg":12,"amplitude":1,"start_deg":7,"end_deg":13}]}"#;
        fs::write(&path, doc).unwrap();
        assert!(matches!(
            load_benchmark(path.to_str().unwrap()),
            Err(BenchmarkError::OverlappingLobes { .. })
        ));
    }

    #[test]
    fn target_shape() {
        let grid = GridSpec::default();
        for id in bundled_benchmark_ids() {
            let bm = load_benchmark(id).unwrap();
            let t = ideal_target_field::<f64>(&bm, grid).unwrap();
            assert_eq!(t.max_magnitude(), 1.0, "{id}");
            let cut = principal_cut(&t).unwrap();
            let amax = bm.beams.iter().map(|b| b.amplitude).fold(0.0, f64::max);
            for b in &bm.beams {
                let at = cut.magnitude_at(b.theta_deg).unwrap();
                assert!((at - b.amplitude / amax).abs() < 1e-12, "{id} {}", b.theta_deg);
            }
            for (a, m) in cut.signed_theta_deg.iter().zip(&cut.magnitude) {
                let inside = bm.beams.iter().any(|b| *a >= b.start_deg && *a <= b.end_deg);
                if !inside {
                    assert_eq!(*m, 0.0, "{id} {a}");
                }
            }
        }
        let b1 = ideal_target_field::<f64>(&load_benchmark("B1").unwrap(), grid).unwrap();
        let cut = principal_cut(&b1).unwrap();
        let nz: Vec<bool> = cut.magnitude.iter().map(|m| *m > 0.0).collect();
        let rising = nz.windows(2).filter(|w| !w[0] && w[1]).count();
        assert_eq!(rising, 1);
    }

    #[test]
    fn reference_cell() {
        let c = reference_unit_cell::<f64>();
        assert_eq!(c.n_states(), 4);
        assert!(c.states.iter().all(|s| s.gamma_mag == 1.0));
        for w in c.states.windows(2) {
            assert_eq!(w[1].gamma_phase_deg - w[0].gamma_phase_deg, 90.0);
        }
        assert_eq!(c.q_exponent, 1.0);
    }
}
