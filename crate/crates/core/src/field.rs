//! Far-field evaluation of a configured surface under planewave or point-source illumination.
//!
//! Every illumination model reduces to per-cell complex weights `w_mn` (source term times the
//! cell's state reflection) and an observation factor that depends on theta only:
//!
//! ```text
//! E(theta, phi) = obs(theta) * sum_mn w_mn * exp(j k (x_n u + y_m v)),   u = sin(theta) cos(phi), v = sin(theta) sin(phi)
//! ```
//!
//! The lattice is centro-symmetric, so the sum is evaluated on even/odd folded weights. One set of
//! cosine/sine tables serves the four azimuths `phi`, `180 - phi`, `180 + phi`, `360 - phi`, which
//! share `|u|` and `|v|`.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{FieldGrid, GridSpec};
use crate::num::Real;
use crate::surface::{ConfigMatrix, SurfaceError, SurfaceSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("configuration is {found_rows}x{found_cols}, surface is {rows}x{cols}")]
    ConfigMismatch {
        rows: usize,
        cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error("point source must sit above the surface (z = {0} m)")]
    SourceBelowSurface(f64),
    #[error("source amplitude must be positive (got {0})")]
    NonPositiveAmplitude(f64),
    #[error("expected a {expected} source")]
    WrongSourceKind { expected: &'static str },
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

/// Illumination of the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceModel<T> {
    /// Spherical wavefront from a transmitter at `position` (meters).
    Point { position: [T; 3], amplitude: T },
    /// Flat wavefront; `(0, 0)` is normal incidence.
    Planewave {
        amplitude: T,
        theta_inc_deg: T,
        phi_inc_deg: T,
    },
}

impl<T: Real> SourceModel<T> {
    pub fn planewave_normal(amplitude: T) -> Self {
        SourceModel::Planewave {
            amplitude,
            theta_inc_deg: T::zero(),
            phi_inc_deg: T::zero(),
        }
    }

    pub fn point(position: [T; 3], amplitude: T) -> Self {
        SourceModel::Point { position, amplitude }
    }

    pub fn amplitude(&self) -> T {
        match *self {
            SourceModel::Point { amplitude, .. } | SourceModel::Planewave { amplitude, .. } => amplitude,
        }
    }

    pub fn with_amplitude(self, a: T) -> Self {
        match self {
            SourceModel::Point { position, .. } => SourceModel::Point { position, amplitude: a },
            SourceModel::Planewave {
                theta_inc_deg,
                phi_inc_deg,
                ..
            } => SourceModel::Planewave {
                amplitude: a,
                theta_inc_deg,
                phi_inc_deg,
            },
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let a = self.amplitude();
        if !(a > T::zero() && a.is_finite()) {
            return Err(FieldError::NonPositiveAmplitude(a.to_f64_lossy()));
        }
        if let SourceModel::Point { position, .. } = self {
            if !(position[2] > T::zero()) {
                return Err(FieldError::SourceBelowSurface(position[2].to_f64_lossy()));
            }
        }
        Ok(())
    }

    /// Short filesystem-safe tag, e.g. `planewave` or `point_0_0_1.5`.
    pub fn label(&self) -> String {
        let f = |v: T| crate::grid::fmt_sig9(v.to_f64_lossy());
        match *self {
            SourceModel::Planewave {
                theta_inc_deg,
                phi_inc_deg,
                ..
            } if theta_inc_deg == T::zero() && phi_inc_deg == T::zero() => "planewave".into(),
            SourceModel::Planewave {
                theta_inc_deg,
                phi_inc_deg,
                ..
            } => format!("planewave_t{}_p{}", f(theta_inc_deg), f(phi_inc_deg)),
            SourceModel::Point { position, .. } => {
                format!("point_{}_{}_{}", f(position[0]), f(position[1]), f(position[2]))
            }
        }
    }

    pub fn cast<U: Real>(&self) -> SourceModel<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        match *self {
            SourceModel::Point { position, amplitude } => SourceModel::Point {
                position: position.map(c),
                amplitude: c(amplitude),
            },
            SourceModel::Planewave {
                amplitude,
                theta_inc_deg,
                phi_inc_deg,
            } => SourceModel::Planewave {
                amplitude: c(amplitude),
                theta_inc_deg: c(theta_inc_deg),
                phi_inc_deg: c(phi_inc_deg),
            },
        }
    }
}

/// JSON form of a source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceDoc {
    Point {
        position_m: [f64; 3],
        #[serde(default = "unit")]
        amplitude: f64,
    },
    Planewave {
        #[serde(default = "unit")]
        amplitude: f64,
        #[serde(default)]
        theta_inc_deg: f64,
        #[serde(default)]
        phi_inc_deg: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl Default for SourceDoc {
    fn default() -> Self {
        SourceDoc::Planewave {
            amplitude: 1.0,
            theta_inc_deg: 0.0,
            phi_inc_deg: 0.0,
        }
    }
}

impl SourceDoc {
    pub fn to_model<T: Real>(&self) -> SourceModel<T> {
        match *self {
            SourceDoc::Point { position_m, amplitude } => SourceModel::Point {
                position: position_m.map(T::lit),
                amplitude: T::lit(amplitude),
            },
            SourceDoc::Planewave {
                amplitude,
                theta_inc_deg,
                phi_inc_deg,
            } => SourceModel::Planewave {
                amplitude: T::lit(amplitude),
                theta_inc_deg: T::lit(theta_inc_deg),
                phi_inc_deg: T::lit(phi_inc_deg),
            },
        }
    }

    pub fn from_model<T: Real>(m: &SourceModel<T>) -> Self {
        match *m {
            SourceModel::Point { position, amplitude } => SourceDoc::Point {
                position_m: position.map(|v| v.to_f64_lossy()),
                amplitude: amplitude.to_f64_lossy(),
            },
            SourceModel::Planewave {
                amplitude,
                theta_inc_deg,
                phi_inc_deg,
            } => SourceDoc::Planewave {
                amplitude: amplitude.to_f64_lossy(),
                theta_inc_deg: theta_inc_deg.to_f64_lossy(),
                phi_inc_deg: phi_inc_deg.to_f64_lossy(),
            },
        }
    }
}

/// Cell radiation response `cos(theta)^(1/q)` on the front hemisphere, zero behind the ground plane.
pub fn radiation_factor<T: Real>(q: T, theta: T) -> T {
    if theta > T::FRAC_PI_2() {
        return T::zero();
    }
    let c = theta.cos();
    // cos(pi/2) evaluates to ~6e-17, which cos^(1/q) would inflate
    if c <= T::epsilon() {
        T::zero()
    } else {
        c.powf(T::one() / q)
    }
}

/// Source term reaching the cell at `(x, y)`, before reflection.
fn incident<T: Real>(source: &SourceModel<T>, x: T, y: T, k: T, q: T) -> Complex<T> {
    let deg = T::PI() / T::lit(180.0);
    match *source {
        SourceModel::Planewave {
            amplitude,
            theta_inc_deg,
            phi_inc_deg,
        } => {
            let (st, (sp, cp)) = ((theta_inc_deg * deg).sin(), (phi_inc_deg * deg).sin_cos());
            Complex::from_polar(amplitude, k * (x * st * cp + y * st * sp))
        }
        SourceModel::Point { position, amplitude } => {
            let d = [position[0] - x, position[1] - y, position[2]];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let theta_mn = (d[2] / r).min(T::one()).acos();
            Complex::from_polar(amplitude / r, -k * r) * radiation_factor(q, theta_mn)
        }
    }
}

/// Source term at every cell (row-major), before reflection.
pub fn incident_weights<T: Real>(surface: &SurfaceSpec<T>, source: &SourceModel<T>) -> Result<Vec<Complex<T>>, FieldError> {
    source.validate()?;
    let k = T::TAU() / surface.wavelength_m();
    let q = surface.cell.q_exponent;
    Ok(surface
        .positions()
        .into_iter()
        .map(|[x, y, _]| incident(source, x, y, k, q))
        .collect())
}

/// Configuration that points the reflected beam at `(theta_deg, phi_deg)`: each cell takes the state
/// whose phase is circularly nearest to the ideal compensating phase (ties to the lower index).
pub fn steered_config<T: Real>(
    surface: &SurfaceSpec<T>,
    source: &SourceModel<T>,
    theta_deg: T,
    phi_deg: T,
) -> Result<ConfigMatrix, FieldError> {
    source.validate()?;
    let deg = T::PI() / T::lit(180.0);
    let k = T::TAU() / surface.wavelength_m();
    let q = surface.cell.q_exponent;
    let (st, (sp, cp)) = ((theta_deg * deg).sin(), (phi_deg * deg).sin_cos());
    let full = T::lit(360.0);
    let ideal = |m: usize, n: usize| {
        let [x, y, _] = surface.cell_position(m, n);
        -(incident(source, x, y, k, q).arg() / deg + k * (x * st * cp + y * st * sp) / deg)
    };
    // Anchor the corner cell a quarter state-spacing off state 0: gradients of half a spacing per
    // cell (30 deg at half-wave pitch for 1- and 2-bit cells) then never land on rounding ties.
    let quarter = full / T::from_usize_lossy(4 * surface.cell.n_states());
    let origin = ideal(0, 0) - surface.cell.states[0].gamma_phase_deg - quarter;
    Ok(ConfigMatrix::from_fn(surface.rows, surface.cols, |m, n| {
        let want = ideal(m, n) - origin;
        let mut best = (T::infinity(), 0u8);
        for (i, s) in surface.cell.states.iter().enumerate() {
            let d = (s.gamma_phase_deg - want) % full;
            let d = if d < T::zero() { d + full } else { d };
            let d = d.min(full - d);
            if d < best.0 {
                best = (d, i as u8);
            }
        }
        best.1
    }))
}

/// Complex weight of every cell (row-major): source term times the state reflection coefficient.
pub fn cell_weights<T: Real>(
    surface: &SurfaceSpec<T>,
    config: &ConfigMatrix,
    source: &SourceModel<T>,
) -> Result<Vec<Complex<T>>, FieldError> {
    if config.rows != surface.rows || config.cols != surface.cols {
        return Err(FieldError::ConfigMismatch {
            rows: surface.rows,
            cols: surface.cols,
            found_rows: config.rows,
            found_cols: config.cols,
        });
    }
    config.check_states(surface.cell.n_states())?;
    source.validate()?;
    let deg = T::PI() / T::lit(180.0);
    let gamma: Vec<Complex<T>> = surface
        .cell
        .states
        .iter()
        .map(|s| Complex::from_polar(s.gamma_mag, s.gamma_phase_deg * deg))
        .collect();
    let k = T::TAU() / surface.wavelength_m();
    let q = surface.cell.q_exponent;
    let mut out = Vec::with_capacity(surface.n_cells());
    for m in 0..surface.rows {
        for n in 0..surface.cols {
            let [x, y, _] = surface.cell_position(m, n);
            let g = gamma[usize::from(config.get(m, n))];
            let src = incident(source, x, y, k, q);
            out.push(src * g);
        }
    }
    Ok(out)
}

/// Observation-side factor applied to the array sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    /// Bare array factor (no element pattern).
    Unit,
    /// `f(theta)`: point source, incident-side response already in the weights.
    Single,
    /// `f(theta)^2`: planewave.
    Squared,
}

impl Response {
    pub fn for_source<T>(source: &SourceModel<T>) -> Self {
        match source {
            SourceModel::Planewave { .. } => Response::Squared,
            SourceModel::Point { .. } => Response::Single,
        }
    }
}

/// Azimuths on one theta row that share `|u|` and `|v|`.
#[derive(Debug, Clone)]
struct Orbit {
    row: usize,
    /// (column, u negated, v negated) relative to the first member
    members: Vec<(usize, bool, bool)>,
}

/// Orbits are evaluated in batches of this many, so the inner loop runs across orbits.
const LANES: usize = 8;

/// Precomputed geometry/grid tables for repeated field evaluations on one surface.
#[derive(Debug, Clone)]
pub struct FieldEngine<T> {
    grid: GridSpec,
    rows: usize,
    cols: usize,
    wavelength: T,
    /// `f(theta)` per front-hemisphere row.
    response: Vec<T>,
    orbits: Vec<Orbit>,
    /// Per batch of `LANES` orbits: `cols / 2 x LANES` cosines then the same count of sines of
    /// `k x u` over the positive-x half of the lattice (lane index fastest).
    x_tables: Vec<T>,
    /// Per orbit: `rows / 2` cosines then `rows / 2` sines of `k y v` for the positive-y half.
    y_tables: Vec<T>,
}

impl<T: Real> FieldEngine<T> {
    pub fn new(surface: &SurfaceSpec<T>, grid: GridSpec) -> Self {
        grid.validate().expect("grid spec must be valid");
        let k = T::TAU() / surface.wavelength_m();
        let deg = T::PI() / T::lit(180.0);
        let (rows, cols) = (surface.rows, surface.cols);
        let (px, py) = (cols / 2, rows / 2);
        let front = grid.n_front_rows();
        let n_phi = grid.n_phi();
        let x_pos: Vec<T> = (0..px).map(|t| surface.cell_position(0, cols - 1 - t)[0]).collect();
        let y_pos: Vec<T> = (0..py).map(|s| surface.cell_position(rows - 1 - s, 0)[1]).collect();

        let mut orbits = Vec::new();
        let mut uv = Vec::new();
        let mut seen = vec![false; n_phi];
        for i in 0..front {
            let theta = T::lit(grid.theta_deg(i)) * deg;
            seen.iter_mut().for_each(|s| *s = false);
            for j in 0..n_phi {
                if seen[j] {
                    continue;
                }
                let mut members = vec![(j, false, false)];
                seen[j] = true;
                let mut add = |col: usize, u_neg: bool, v_neg: bool| {
                    if !seen[col] {
                        seen[col] = true;
                        members.push((col, u_neg, v_neg));
                    }
                };
                add((n_phi - j) % n_phi, false, true);
                if n_phi % 2 == 0 {
                    let h = n_phi / 2;
                    add((h + n_phi - j) % n_phi, true, false);
                    add((h + j) % n_phi, true, true);
                }
                let phi = T::lit(grid.phi_deg(j)) * deg;
                uv.push((theta.sin() * phi.cos(), theta.sin() * phi.sin()));
                orbits.push(Orbit { row: i, members });
            }
        }

        let n_batches = orbits.len().div_ceil(LANES);
        let mut x_tables = vec![T::zero(); n_batches * 2 * px * LANES];
        for (o, &(u, _)) in uv.iter().enumerate() {
            let (batch, lane) = (o / LANES, o % LANES);
            let base = batch * 2 * px * LANES;
            for (t, &x) in x_pos.iter().enumerate() {
                let (s, c) = (k * x * u).sin_cos();
                x_tables[base + t * LANES + lane] = c;
                x_tables[base + (px + t) * LANES + lane] = s;
            }
        }
        let mut y_tables = Vec::with_capacity(orbits.len() * 2 * py);
        for &(_, v) in &uv {
            y_tables.extend(y_pos.iter().map(|&y| (k * y * v).cos()));
            y_tables.extend(y_pos.iter().map(|&y| (k * y * v).sin()));
        }

        let q = surface.cell.q_exponent;
        let response = (0..front)
            .map(|i| radiation_factor(q, T::lit(grid.theta_deg(i)) * deg))
            .collect();
        FieldEngine {
            grid,
            rows,
            cols,
            wavelength: surface.wavelength_m(),
            response,
            orbits,
            x_tables,
            y_tables,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Field of `config` under `source`.
    pub fn field(
        &self,
        surface: &SurfaceSpec<T>,
        config: &ConfigMatrix,
        source: &SourceModel<T>,
    ) -> Result<FieldGrid<T>, FieldError> {
        let weights = cell_weights(surface, config, source)?;
        Ok(self.field_from_weights(&weights, Response::for_source(source)))
    }

    /// Field of arbitrary row-major cell weights scaled by the chosen observation response.
    pub fn field_from_weights(&self, weights: &[Complex<T>], response: Response) -> FieldGrid<T> {
        assert_eq!(weights.len(), self.rows * self.cols, "one weight per cell");
        let folded = Folded::new(weights, self.rows, self.cols);
        let (px, py) = (self.cols / 2, self.rows / 2);
        let zero = Complex::new(T::zero(), T::zero());
        let per_batch: Vec<Vec<(usize, usize, Complex<T>)>> = self
            .orbits
            .par_chunks(LANES)
            .enumerate()
            .map_init(
                || vec![zero; 2 * LANES * self.rows],
                |g, (batch, orbits)| {
                    let xt = &self.x_tables[batch * 2 * px * LANES..(batch + 1) * 2 * px * LANES];
                    folded.row_sums(xt, g);
                    let mut out = Vec::with_capacity(4 * LANES);
                    for (lane, orbit) in orbits.iter().enumerate() {
                        let o = batch * LANES + lane;
                        let yt = &self.y_tables[o * 2 * py..(o + 1) * 2 * py];
                        let gl = &g[2 * lane * self.rows..2 * (lane + 1) * self.rows];
                        for &(col, u_neg, v_neg) in &orbit.members {
                            out.push((orbit.row, col, folded.column_sum(gl, u_neg, v_neg, yt)));
                        }
                    }
                    out
                },
            )
            .collect();
        let mut field = FieldGrid::zeros(self.grid, Some(self.wavelength));
        for (row, col, v) in per_batch.into_iter().flatten() {
            let f = self.response[row];
            let obs = match response {
                Response::Unit => T::one(),
                Response::Single => f,
                Response::Squared => f * f,
            };
            field.values[self.grid.index(row, col)] = v * obs;
        }
        field
    }
}

/// Cell weights folded about the lattice centre.
struct Folded<T> {
    rows: usize,
    half_cols: usize,
    /// `w[m, up] + w[m, down]` / `w[m, up] - w[m, down]`, split re/im, row-major `rows x half_cols`.
    even_re: Vec<T>,
    even_im: Vec<T>,
    odd_re: Vec<T>,
    odd_im: Vec<T>,
    /// Middle column when `cols` is odd.
    centre: Option<Vec<Complex<T>>>,
}

impl<T: Real> Folded<T> {
    fn new(w: &[Complex<T>], rows: usize, cols: usize) -> Self {
        let p = cols / 2;
        let mut f = Folded {
            rows,
            half_cols: p,
            even_re: Vec::with_capacity(rows * p),
            even_im: Vec::with_capacity(rows * p),
            odd_re: Vec::with_capacity(rows * p),
            odd_im: Vec::with_capacity(rows * p),
            centre: (cols % 2 == 1).then(|| (0..rows).map(|m| w[m * cols + p]).collect()),
        };
        for m in 0..rows {
            let row = &w[m * cols..(m + 1) * cols];
            for t in 0..p {
                let (up, dn) = (row[cols - 1 - t], row[t]);
                f.even_re.push(up.re + dn.re);
                f.even_im.push(up.im + dn.im);
                f.odd_re.push(up.re - dn.re);
                f.odd_im.push(up.im - dn.im);
            }
        }
        f
    }

    /// Row sums for a batch of orbits. Lane `l` gets `g[2 l rows + m]` at `+u` and
    /// `g[(2 l + 1) rows + m]` at `-u`.
    fn row_sums(&self, xt: &[T], g: &mut [Complex<T>]) {
        let p = self.half_cols;
        let rows = self.rows;
        let (cx, sx) = xt.split_at(p * LANES);
        for m in 0..rows {
            let mut a_re = [T::zero(); LANES];
            let mut a_im = [T::zero(); LANES];
            let mut b_re = [T::zero(); LANES];
            let mut b_im = [T::zero(); LANES];
            let r = m * p;
            for t in 0..p {
                let (er, ei) = (self.even_re[r + t], self.even_im[r + t]);
                let (or, oi) = (self.odd_re[r + t], self.odd_im[r + t]);
                let c: &[T; LANES] = cx[t * LANES..(t + 1) * LANES].try_into().unwrap();
                let s: &[T; LANES] = sx[t * LANES..(t + 1) * LANES].try_into().unwrap();
                for l in 0..LANES {
                    a_re[l] = a_re[l] + er * c[l];
                    a_im[l] = a_im[l] + ei * c[l];
                    b_re[l] = b_re[l] + or * s[l];
                    b_im[l] = b_im[l] + oi * s[l];
                }
            }
            let c = self
                .centre
                .as_ref()
                .map_or(Complex::new(T::zero(), T::zero()), |c| c[m]);
            for l in 0..LANES {
                g[2 * l * rows + m] = Complex::new(a_re[l] - b_im[l] + c.re, a_im[l] + b_re[l] + c.im);
                g[(2 * l + 1) * rows + m] = Complex::new(a_re[l] + b_im[l] + c.re, a_im[l] - b_re[l] + c.im);
            }
        }
    }

    /// Combines one lane's row sums along y for a sign pattern of (u, v).
    fn column_sum(&self, g: &[Complex<T>], u_neg: bool, v_neg: bool, yt: &[T]) -> Complex<T> {
        let rows = self.rows;
        let q = rows / 2;
        let g = if u_neg { &g[rows..] } else { &g[..rows] };
        let (cy, sy) = yt.split_at(q);
        let mut x = if rows % 2 == 1 {
            g[q]
        } else {
            Complex::new(T::zero(), T::zero())
        };
        let mut y = Complex::new(T::zero(), T::zero());
        for s in 0..q {
            let (up, dn) = (g[rows - 1 - s], g[s]);
            x = x + (up + dn) * cy[s];
            y = y + (up - dn) * sy[s];
        }
        if v_neg {
            Complex::new(x.re + y.im, x.im - y.re)
        } else {
            Complex::new(x.re - y.im, x.im + y.re)
        }
    }
}

/// Field under planewave illumination: `E f(theta)^2 sum Gamma_mn e^{j Phi_mn} e^{j k r_mn}`.
pub fn field_planewave<T: Real>(
    surface: &SurfaceSpec<T>,
    config: &ConfigMatrix,
    source: &SourceModel<T>,
    grid: GridSpec,
) -> Result<FieldGrid<T>, FieldError> {
    if !matches!(source, SourceModel::Planewave { .. }) {
        return Err(FieldError::WrongSourceKind { expected: "planewave" });
    }
    FieldEngine::new(surface, grid).field(surface, config, source)
}

/// Field under a point source with spherical spreading `1/r` and phase `-k r` per cell.
pub fn field_point_source<T: Real>(
    surface: &SurfaceSpec<T>,
    config: &ConfigMatrix,
    source: &SourceModel<T>,
    grid: GridSpec,
) -> Result<FieldGrid<T>, FieldError> {
    if !matches!(source, SourceModel::Point { .. }) {
        return Err(FieldError::WrongSourceKind { expected: "point" });
    }
    source.validate()?;
    FieldEngine::new(surface, grid).field(surface, config, source)
}

/// Dispatches on the source kind.
pub fn field<T: Real>(
    surface: &SurfaceSpec<T>,
    config: &ConfigMatrix,
    source: &SourceModel<T>,
    grid: GridSpec,
) -> Result<FieldGrid<T>, FieldError> {
    FieldEngine::new(surface, grid).field(surface, config, source)
}
