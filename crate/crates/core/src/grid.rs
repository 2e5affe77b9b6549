//! Angular sampling grids, complex far-field grids and their principal-plane cut.

use std::io::{BufRead, Write};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

const STEP_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("angular step {step} deg does not divide {span} deg")]
    InvalidStep { step: f64, span: f64 },
    #[error("grid has no phi = {0} deg column")]
    GridMissingPlane(f64),
    #[error("field is zero everywhere")]
    AllZeroField,
    #[error("grids differ: {0}")]
    GridMismatch(String),
    #[error("field CSV line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Regular (theta, phi) sampling: theta in [0, 180), phi in [0, 360).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub theta_step_deg: f64,
    pub phi_step_deg: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            theta_step_deg: 1.0,
            phi_step_deg: 1.0,
        }
    }
}

fn divisions(span: f64, step: f64) -> Option<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return None;
    }
    let k = span / step;
    let r = k.round();
    ((k - r).abs() < STEP_TOL * k.max(1.0) && r >= 1.0).then_some(r as usize)
}

impl GridSpec {
    pub fn new(theta_step_deg: f64, phi_step_deg: f64) -> Result<Self, GridError> {
        let g = GridSpec {
            theta_step_deg,
            phi_step_deg,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        divisions(180.0, self.theta_step_deg).ok_or(GridError::InvalidStep {
            step: self.theta_step_deg,
            span: 180.0,
        })?;
        divisions(360.0, self.phi_step_deg).ok_or(GridError::InvalidStep {
            step: self.phi_step_deg,
            span: 360.0,
        })?;
        Ok(())
    }

    pub fn n_theta(&self) -> usize {
        divisions(180.0, self.theta_step_deg).expect("validated grid")
    }

    pub fn n_phi(&self) -> usize {
        divisions(360.0, self.phi_step_deg).expect("validated grid")
    }

    /// Total number of grid points L.
    pub fn len(&self) -> usize {
        self.n_theta() * self.n_phi()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn theta_deg(&self, i: usize) -> f64 {
        i as f64 * self.theta_step_deg
    }

    pub fn phi_deg(&self, j: usize) -> f64 {
        j as f64 * self.phi_step_deg
    }

    /// Flat theta-major index.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_phi() + j
    }

    /// Number of theta rows in the front hemisphere (theta <= 90 deg).
    pub fn n_front_rows(&self) -> usize {
        (0..self.n_theta())
            .take_while(|&i| self.theta_deg(i) <= 90.0 + STEP_TOL)
            .count()
    }

    /// Column index of an exact azimuth, if the grid samples it.
    pub fn phi_column(&self, phi_deg: f64) -> Option<usize> {
        let k = phi_deg.rem_euclid(360.0) / self.phi_step_deg;
        let r = k.round();
        ((k - r).abs() < STEP_TOL * k.max(1.0)).then(|| r as usize % self.n_phi())
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        (self.theta_step_deg - other.theta_step_deg).abs() < STEP_TOL
            && (self.phi_step_deg - other.phi_step_deg).abs() < STEP_TOL
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<(), GridError> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(GridError::GridMismatch(format!(
                "steps ({}, {}) vs ({}, {}) deg",
                self.theta_step_deg, self.phi_step_deg, other.theta_step_deg, other.phi_step_deg
            )))
        }
    }
}

/// Complex far field sampled on a [`GridSpec`], theta-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid<T> {
    pub grid: GridSpec,
    pub values: Vec<Complex<T>>,
    /// Free-space wavelength of the run; unknown for grids read back from CSV.
    pub wavelength_m: Option<T>,
}

impl<T: Real> FieldGrid<T> {
    pub fn zeros(grid: GridSpec, wavelength_m: Option<T>) -> Self {
        FieldGrid {
            grid,
            values: vec![Complex::new(T::zero(), T::zero()); grid.len()],
            wavelength_m,
        }
    }

    /// Real, non-negative field built from a magnitude function of (theta, phi) in degrees.
    pub fn from_magnitudes(grid: GridSpec, mut f: impl FnMut(f64, f64) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n_theta() {
            for j in 0..grid.n_phi() {
                values.push(Complex::new(f(grid.theta_deg(i), grid.phi_deg(j)), T::zero()));
            }
        }
        FieldGrid {
            grid,
            values,
            wavelength_m: None,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex<T> {
        self.values[self.grid.index(i, j)]
    }

    pub fn magnitudes(&self) -> Vec<T> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn max_magnitude(&self) -> T {
        self.values
            .iter()
            .map(|v| v.norm())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn scaled(&self, c: T) -> Self {
        FieldGrid {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
            wavelength_m: self.wavelength_m,
        }
    }

    pub fn cast<U: Real>(&self) -> FieldGrid<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        FieldGrid {
            grid: self.grid,
            values: self.values.iter().map(|v| Complex::new(c(v.re), c(v.im))).collect(),
            wavelength_m: self.wavelength_m.map(c),
        }
    }

    /// Writes `theta_deg,phi_deg,re,im,mag`, one row per grid point, theta-major.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta_deg,phi_deg,re,im,mag")?;
        for i in 0..self.grid.n_theta() {
            for j in 0..self.grid.n_phi() {
                let v = self.at(i, j);
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    fmt_sig9(self.grid.theta_deg(i)),
                    fmt_sig9(self.grid.phi_deg(j)),
                    fmt_sig9(v.re.to_f64_lossy()),
                    fmt_sig9(v.im.to_f64_lossy()),
                    fmt_sig9(v.norm().to_f64_lossy()),
                )?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parses the CSV written by [`FieldGrid::write_csv`]; grid steps are inferred from the angles.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, GridError> {
        let mut rows: Vec<(f64, f64, f64, f64)> = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = k + 1;
            if k == 0 {
                if line.trim() != "theta_deg,phi_deg,re,im,mag" {
                    return Err(GridError::Csv {
                        line: lineno,
                        msg: format!("unexpected header `{}`", line.trim()),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(GridError::Csv {
                    line: lineno,
                    msg: format!("expected 5 columns, found {}", cols.len()),
                });
            }
            let p = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| GridError::Csv {
                    line: lineno,
                    msg: format!("`{}`: {e}", s.trim()),
                })
            };
            rows.push((p(cols[0])?, p(cols[1])?, p(cols[2])?, p(cols[3])?));
        }
        let bad = |msg: String| GridError::Csv { line: 0, msg };
        if rows.len() < 2 {
            return Err(bad("too few rows to infer a grid".into()));
        }
        let phi_step = rows[1].1 - rows[0].1;
        let n_phi = rows.iter().take_while(|r| r.0 == rows[0].0).count();
        if n_phi >= rows.len() {
            return Err(bad("only one theta row".into()));
        }
        let theta_step = rows[n_phi].0 - rows[0].0;
        let grid = GridSpec::new(theta_step, phi_step)?;
        if grid.n_phi() != n_phi || grid.len() != rows.len() {
            return Err(bad(format!(
                "{} rows do not form a {}x{} grid",
                rows.len(),
                grid.n_theta(),
                grid.n_phi()
            )));
        }
        let mut values = Vec::with_capacity(rows.len());
        for (k, &(th, ph, re, im)) in rows.iter().enumerate() {
            let (i, j) = (k / n_phi, k % n_phi);
            let tol = 1e-6 * grid.theta_step_deg.min(grid.phi_step_deg);
            if (th - grid.theta_deg(i)).abs() > tol || (ph - grid.phi_deg(j)).abs() > tol {
                return Err(GridError::Csv {
                    line: k + 2,
                    msg: format!("angle ({th}, {ph}) out of theta-major order"),
                });
            }
            values.push(Complex::new(T::lit(re), T::lit(im)));
        }
        Ok(FieldGrid {
            grid,
            values,
            wavelength_m: None,
        })
    }
}

/// Divides every sample by the peak magnitude; phases are kept.
pub fn normalize_grid<T: Real>(field: &FieldGrid<T>) -> Result<FieldGrid<T>, GridError> {
    let max = field.max_magnitude();
    if max <= T::zero() {
        return Err(GridError::AllZeroField);
    }
    Ok(FieldGrid {
        grid: field.grid,
        values: field.values.iter().map(|v| v / max).collect(),
        wavelength_m: field.wavelength_m,
    })
}

/// |E| along the phi = 0/180 deg plane, indexed by signed elevation.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalCut<T> {
    /// Ascending, from -90 to +90 deg (limits included when sampled).
    pub signed_theta_deg: Vec<f64>,
    pub magnitude: Vec<T>,
}

impl<T: Real> PrincipalCut<T> {
    pub fn power(&self) -> Vec<T> {
        self.magnitude.iter().map(|&m| m * m).collect()
    }

    pub fn len(&self) -> usize {
        self.magnitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitude.is_empty()
    }

    /// Position of an exact signed angle.
    pub fn index_of(&self, signed_deg: f64) -> Option<usize> {
        self.signed_theta_deg
            .iter()
            .position(|&a| (a - signed_deg).abs() < 1e-9)
    }

    pub fn magnitude_at(&self, signed_deg: f64) -> Option<T> {
        self.index_of(signed_deg).map(|k| self.magnitude[k])
    }
}

/// Builds the signed cut: `+theta` from phi = 0 deg, `-theta` from phi = 180 deg.
pub fn principal_cut<T: Real>(field: &FieldGrid<T>) -> Result<PrincipalCut<T>, GridError> {
    let g = &field.grid;
    let j0 = g.phi_column(0.0).ok_or(GridError::GridMissingPlane(0.0))?;
    let j180 = g.phi_column(180.0).ok_or(GridError::GridMissingPlane(180.0))?;
    let rows = g.n_front_rows();
    let mut signed = Vec::with_capacity(2 * rows);
    let mut mag = Vec::with_capacity(2 * rows);
    for i in (1..rows).rev() {
        signed.push(-g.theta_deg(i));
        mag.push(field.at(i, j180).norm());
    }
    for i in 0..rows {
        signed.push(g.theta_deg(i));
        mag.push(field.at(i, j0).norm());
    }
    Ok(PrincipalCut {
        signed_theta_deg: signed,
        magnitude: mag,
    })
}

/// Decimal rendering with 9 significant digits, in the style of C's `%.9g`.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        trim_fraction(&s).to_string()
    } else {
        format!("{}e{}", trim_fraction(mantissa), exp)
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
