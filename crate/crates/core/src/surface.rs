//! Unit-cells, planar surfaces, lattice geometry and control-line grouping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{wavelength, Real};

/// Largest supported number of control bits per cell (state indices are stored as `u8`).
pub const MAX_BITS: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("cell has {found} states, expected 2^{n_bits} = {expected}")]
    InvalidStateCount {
        n_bits: u32,
        expected: usize,
        found: usize,
    },
    #[error("state {index}: reflection magnitude {value} outside (0, 1]")]
    InvalidGamma { index: usize, value: f64 },
    #[error("state {index}: reflection phase {value} deg outside [0, 360)")]
    InvalidPhase { index: usize, value: f64 },
    #[error("parameter `{name}` must be positive (got {value})")]
    NonPositiveParam { name: &'static str, value: f64 },
    #[error("n_bits = {0} is not supported (1..={MAX_BITS})")]
    UnsupportedBits(u32),
    #[error("n_diodes = {n_diodes} is smaller than n_bits = {n_bits}")]
    TooFewDiodes { n_bits: u32, n_diodes: u32 },
    #[error("group size {group} does not divide {cells} cells")]
    GroupSizeMismatch { cells: usize, group: usize },
    #[error("expected {expected} entries, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("entry {position}: state index {value} is not below {n_states}")]
    InvalidStateIndex {
        position: usize,
        value: u8,
        n_states: usize,
    },
    #[error("config CSV line {line}: {msg}")]
    ConfigCsv { line: usize, msg: String },
}

/// One diode state of a unit-cell: reflection magnitude and phase (degrees).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellState<T> {
    pub gamma_mag: T,
    pub gamma_phase_deg: T,
}

/// A tunable unit-cell type.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitCellSpec<T> {
    pub id: String,
    pub n_bits: u32,
    pub n_diodes: u32,
    pub states: Vec<CellState<T>>,
    /// Radiation response `cos(theta)^(1/q)`.
    pub q_exponent: T,
    pub width_m: T,
    pub height_m: T,
    pub design_freq_hz: T,
    pub notes: Option<String>,
}

impl<T: Real> UnitCellSpec<T> {
    pub fn n_states(&self) -> usize {
        1usize << self.n_bits
    }

    pub fn wavelength_m(&self) -> T {
        wavelength(self.design_freq_hz)
    }

    /// Returns a copy with `offset_deg` added to every state phase (wrapped into [0, 360)).
    pub fn with_phase_offset(&self, offset_deg: T) -> Self {
        let full = T::lit(360.0);
        let mut out = self.clone();
        for s in &mut out.states {
            let mut p = (s.gamma_phase_deg + offset_deg) % full;
            if p < T::zero() {
                p = p + full;
            }
            if p >= full {
                p = p - full;
            }
            s.gamma_phase_deg = p;
        }
        out
    }

    pub fn cast<U: Real>(&self) -> UnitCellSpec<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        UnitCellSpec {
            id: self.id.clone(),
            n_bits: self.n_bits,
            n_diodes: self.n_diodes,
            states: self
                .states
                .iter()
                .map(|s| CellState {
                    gamma_mag: c(s.gamma_mag),
                    gamma_phase_deg: c(s.gamma_phase_deg),
                })
                .collect(),
            q_exponent: c(self.q_exponent),
            width_m: c(self.width_m),
            height_m: c(self.height_m),
            design_freq_hz: c(self.design_freq_hz),
            notes: self.notes.clone(),
        }
    }
}

fn positive<T: Real>(name: &'static str, v: T) -> Result<(), SurfaceError> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(SurfaceError::NonPositiveParam {
            name,
            value: v.to_f64_lossy(),
        })
    }
}

/// Checks every unit-cell invariant and hands the spec back unchanged.
pub fn validate_unit_cell<T: Real>(spec: UnitCellSpec<T>) -> Result<UnitCellSpec<T>, SurfaceError> {
    if spec.n_bits == 0 {
        return Err(SurfaceError::NonPositiveParam {
            name: "n_bits",
            value: 0.0,
        });
    }
    if spec.n_bits > MAX_BITS {
        return Err(SurfaceError::UnsupportedBits(spec.n_bits));
    }
    if spec.n_diodes == 0 {
        return Err(SurfaceError::NonPositiveParam {
            name: "n_diodes",
            value: 0.0,
        });
    }
    if spec.n_diodes < spec.n_bits {
        return Err(SurfaceError::TooFewDiodes {
            n_bits: spec.n_bits,
            n_diodes: spec.n_diodes,
        });
    }
    let expected = spec.n_states();
    if spec.states.len() != expected {
        return Err(SurfaceError::InvalidStateCount {
            n_bits: spec.n_bits,
            expected,
            found: spec.states.len(),
        });
    }
    for (index, s) in spec.states.iter().enumerate() {
        if !(s.gamma_mag > T::zero() && s.gamma_mag <= T::one()) {
            return Err(SurfaceError::InvalidGamma {
                index,
                value: s.gamma_mag.to_f64_lossy(),
            });
        }
        if !(s.gamma_phase_deg >= T::zero() && s.gamma_phase_deg < T::lit(360.0)) {
            return Err(SurfaceError::InvalidPhase {
                index,
                value: s.gamma_phase_deg.to_f64_lossy(),
            });
        }
    }
    positive("q_exponent", spec.q_exponent)?;
    positive("design_freq_hz", spec.design_freq_hz)?;
    positive("width_m", spec.width_m)?;
    positive("height_m", spec.height_m)?;
    Ok(spec)
}

/// JSON form of a unit-cell: `{id, n_bits, n_diodes, states:[{mag,phase_deg}], q, width_mm, height_mm, freq_ghz}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct UnitCellDoc {
    pub id: String,
    pub n_bits: u32,
    pub n_diodes: u32,
    pub states: Vec<StateDoc>,
    pub q: f64,
    pub width_mm: f64,
    pub height_mm: f64,
    pub freq_ghz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct StateDoc {
    pub mag: f64,
    pub phase_deg: f64,
}

impl UnitCellDoc {
    pub fn to_spec<T: Real>(&self) -> Result<UnitCellSpec<T>, SurfaceError> {
        validate_unit_cell(UnitCellSpec {
            id: self.id.clone(),
            n_bits: self.n_bits,
            n_diodes: self.n_diodes,
            states: self
                .states
                .iter()
                .map(|s| CellState {
                    gamma_mag: T::lit(s.mag),
                    gamma_phase_deg: T::lit(s.phase_deg),
                })
                .collect(),
            q_exponent: T::lit(self.q),
            width_m: T::lit(self.width_mm * 1e-3),
            height_m: T::lit(self.height_mm * 1e-3),
            design_freq_hz: T::lit(self.freq_ghz * 1e9),
            notes: self.notes.clone(),
        })
    }

    pub fn from_spec<T: Real>(spec: &UnitCellSpec<T>) -> Self {
        UnitCellDoc {
            id: spec.id.clone(),
            n_bits: spec.n_bits,
            n_diodes: spec.n_diodes,
            states: spec
                .states
                .iter()
                .map(|s| StateDoc {
                    mag: s.gamma_mag.to_f64_lossy(),
                    phase_deg: s.gamma_phase_deg.to_f64_lossy(),
                })
                .collect(),
            q: spec.q_exponent.to_f64_lossy(),
            width_mm: spec.width_m.to_f64_lossy() * 1e3,
            height_mm: spec.height_m.to_f64_lossy() * 1e3,
            freq_ghz: spec.design_freq_hz.to_f64_lossy() * 1e-9,
            notes: spec.notes.clone(),
        }
    }
}

/// JSON form of a surface: `{cell_id, M, N, G, pitch_mm?}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SurfaceDoc {
    pub cell_id: String,
    #[serde(rename = "M")]
    pub rows: usize,
    #[serde(rename = "N")]
    pub cols: usize,
    #[serde(rename = "G", default = "one")]
    pub group_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch_mm: Option<f64>,
}

fn one() -> usize {
    1
}

const BUNDLED_CELLS: [(&str, &str); 6] = [
    ("S0", include_str!("../data/cells/S0.json")),
    ("S1", include_str!("../data/cells/S1.json")),
    ("S2", include_str!("../data/cells/S2.json")),
    ("S3", include_str!("../data/cells/S3.json")),
    ("S4", include_str!("../data/cells/S4.json")),
    ("S5", include_str!("../data/cells/S5.json")),
];

/// Ids of the bundled cells, reference cell first.
pub fn bundled_cell_ids() -> impl Iterator<Item = &'static str> {
    BUNDLED_CELLS.iter().map(|(id, _)| *id)
}

/// Looks up one of the bundled unit-cells (`S0`..`S5`).
pub fn bundled_cell<T: Real>(id: &str) -> Option<UnitCellSpec<T>> {
    let (_, text) = BUNDLED_CELLS.iter().find(|(k, _)| k.eq_ignore_ascii_case(id))?;
    let doc: UnitCellDoc = serde_json::from_str(text).expect("bundled cell JSON is well-formed");
    Some(doc.to_spec().expect("bundled cell passes validation"))
}

/// An M x N array of identical cells in the x-y plane, centred on the origin, normal +z.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpec<T> {
    pub cell: UnitCellSpec<T>,
    pub rows: usize,
    pub cols: usize,
    pub pitch_m: T,
    pub group_size: usize,
}

impl<T: Real> SurfaceSpec<T> {
    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn n_groups(&self) -> usize {
        self.n_cells() / self.group_size
    }

    pub fn wavelength_m(&self) -> T {
        self.cell.wavelength_m()
    }

    /// Position of cell (m, n): `((n - (N-1)/2) p, (m - (M-1)/2) p, 0)`.
    pub fn cell_position(&self, m: usize, n: usize) -> [T; 3] {
        let two = T::lit(2.0);
        let cx = (T::from_usize_lossy(self.cols) - T::one()) / two;
        let cy = (T::from_usize_lossy(self.rows) - T::one()) / two;
        [
            (T::from_usize_lossy(n) - cx) * self.pitch_m,
            (T::from_usize_lossy(m) - cy) * self.pitch_m,
            T::zero(),
        ]
    }

    /// All cell positions in row-major order.
    pub fn positions(&self) -> Vec<[T; 3]> {
        (0..self.rows)
            .flat_map(|m| (0..self.cols).map(move |n| (m, n)))
            .map(|(m, n)| self.cell_position(m, n))
            .collect()
    }

    /// Diagonal between the outermost cell centres, `sqrt((M-1)^2 + (N-1)^2) * pitch`.
    pub fn aperture_diagonal(&self) -> T {
        let a = T::from_usize_lossy(self.rows - 1);
        let b = T::from_usize_lossy(self.cols - 1);
        (a * a + b * b).sqrt() * self.pitch_m
    }

    pub fn layout(&self) -> GroupLayout {
        GroupLayout::row_major(self.rows, self.cols, self.group_size)
            .expect("surface group size was validated at construction")
    }
}

/// Assigns each cell of an M x N surface to a control group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLayout {
    pub rows: usize,
    pub cols: usize,
    pub group_size: usize,
    /// Row-major group id per cell.
    pub assignment: Vec<usize>,
}

impl GroupLayout {
    /// Contiguous row-major runs of `group_size` cells.
    pub fn row_major(rows: usize, cols: usize, group_size: usize) -> Result<Self, SurfaceError> {
        let cells = rows * cols;
        if group_size == 0 || cells % group_size != 0 {
            return Err(SurfaceError::GroupSizeMismatch {
                cells,
                group: group_size,
            });
        }
        Ok(GroupLayout {
            rows,
            cols,
            group_size,
            assignment: (0..cells).map(|i| i / group_size).collect(),
        })
    }

    pub fn n_groups(&self) -> usize {
        self.assignment.len() / self.group_size
    }
}

/// Builds a surface and its group layout. `pitch_m = None` selects half a wavelength.
pub fn build_surface<T: Real>(
    cell: UnitCellSpec<T>,
    rows: usize,
    cols: usize,
    group_size: usize,
    pitch_m: Option<T>,
) -> Result<(SurfaceSpec<T>, GroupLayout), SurfaceError> {
    if rows == 0 {
        return Err(SurfaceError::NonPositiveParam {
            name: "M",
            value: 0.0,
        });
    }
    if cols == 0 {
        return Err(SurfaceError::NonPositiveParam {
            name: "N",
            value: 0.0,
        });
    }
    let layout = GroupLayout::row_major(rows, cols, group_size)?;
    let pitch_m = pitch_m.unwrap_or_else(|| cell.wavelength_m() / T::lit(2.0));
    positive("pitch_m", pitch_m)?;
    Ok((
        SurfaceSpec {
            cell,
            rows,
            cols,
            pitch_m,
            group_size,
        },
        layout,
    ))
}

/// M x N grid of state indices, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConfigMatrix {
    pub rows: usize,
    pub cols: usize,
    pub states: Vec<u8>,
}

impl ConfigMatrix {
    pub fn uniform(rows: usize, cols: usize, state: u8) -> Self {
        ConfigMatrix {
            rows,
            cols,
            states: vec![state; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut states = Vec::with_capacity(rows * cols);
        for m in 0..rows {
            for n in 0..cols {
                states.push(f(m, n));
            }
        }
        ConfigMatrix { rows, cols, states }
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> u8 {
        self.states[m * self.cols + n]
    }

    pub fn check_states(&self, n_states: usize) -> Result<(), SurfaceError> {
        if self.states.len() != self.rows * self.cols {
            return Err(SurfaceError::LengthMismatch {
                expected: self.rows * self.cols,
                found: self.states.len(),
            });
        }
        match self
            .states
            .iter()
            .position(|&s| usize::from(s) >= n_states)
        {
            Some(position) => Err(SurfaceError::InvalidStateIndex {
                position,
                value: self.states[position],
                n_states,
            }),
            None => Ok(()),
        }
    }
}

impl ConfigMatrix {
    /// One line per row, comma-separated state indices.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.states.len() * 2 + self.rows);
        for row in self.states.chunks(self.cols.max(1)) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self, SurfaceError> {
        let mut states = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| SurfaceError::ConfigCsv { line: k + 1, msg };
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<u8>().map_err(|e| bad(format!("`{}`: {e}", c.trim()))))
                .collect::<Result<Vec<_>, _>>()?;
            match cols {
                None => cols = Some(row.len()),
                Some(c) if c != row.len() => return Err(bad(format!("expected {c} columns, found {}", row.len()))),
                _ => {}
            }
            states.extend(row);
            rows += 1;
        }
        let cols = cols.ok_or(SurfaceError::ConfigCsv {
            line: 0,
            msg: "empty configuration".into(),
        })?;
        Ok(ConfigMatrix { rows, cols, states })
    }
}

/// Expands one state per group into a full configuration matrix.
pub fn expand_groups(
    group_states: &[u8],
    layout: &GroupLayout,
    n_states: usize,
) -> Result<ConfigMatrix, SurfaceError> {
    if group_states.len() != layout.n_groups() {
        return Err(SurfaceError::LengthMismatch {
            expected: layout.n_groups(),
            found: group_states.len(),
        });
    }
    if let Some(position) = group_states.iter().position(|&s| usize::from(s) >= n_states) {
        return Err(SurfaceError::InvalidStateIndex {
            position,
            value: group_states[position],
            n_states,
        });
    }
    Ok(ConfigMatrix {
        rows: layout.rows,
        cols: layout.cols,
        states: layout.assignment.iter().map(|&g| group_states[g]).collect(),
    })
}

/// Far-field distance `2 D^2 / lambda`.
pub fn near_field_boundary<T: Real>(aperture_diameter: T, wavelength: T) -> Result<T, SurfaceError> {
    positive("aperture_diameter", aperture_diameter)?;
    positive("wavelength", wavelength)?;
    Ok(T::lit(2.0) * aperture_diameter * aperture_diameter / wavelength)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn config_csv_round_trip() {
        let c = ConfigMatrix::from_fn(3, 4, |m, n| ((m * 7 + n) % 4) as u8);
        let text = c.to_csv_string();
        assert_eq!(text.lines().next(), Some("0,1,2,3"));
        assert_eq!(ConfigMatrix::from_csv_str(&text).unwrap(), c);
        assert!(ConfigMatrix::from_csv_str("0,1\n1\n").is_err());
        assert!(ConfigMatrix::from_csv_str("").is_err());
    }

    fn s1() -> UnitCellSpec<f64> {
        bundled_cell("S1").unwrap()
    }

    #[test]
    fn s1_table_values_validate() {
        let c = validate_unit_cell(s1()).unwrap();
        assert_eq!(c.n_bits, 1);
        assert_eq!(c.n_diodes, 1);
        assert_eq!(c.states[0].gamma_mag, 0.95);
        assert_eq!(c.states[0].gamma_phase_deg, 0.0);
        assert_eq!(c.states[1].gamma_mag, 0.92);
        assert_eq!(c.states[1].gamma_phase_deg, 180.0);
        assert_relative_eq!(c.design_freq_hz, 11.1e9);
    }

    #[test]
    fn s5_states() {
        let c: UnitCellSpec<f64> = bundled_cell("S5").unwrap();
        assert_eq!(
            c.states,
            vec![
                CellState { gamma_mag: 0.92, gamma_phase_deg: 0.0 },
                CellState { gamma_mag: 0.94, gamma_phase_deg: 50.0 }
            ]
        );
    }

    #[test]
    fn all_bundled_cells_load() {
        for id in bundled_cell_ids() {
            let c: UnitCellSpec<f32> = bundled_cell(id).unwrap();
            assert_eq!(c.id, id);
        }
        assert!(bundled_cell::<f64>("S9").is_none());
    }

    #[test]
    fn wrong_state_count() {
        let mut c = s1();
        c.n_bits = 2;
        c.n_diodes = 2;
        c.states.push(CellState { gamma_mag: 0.9, gamma_phase_deg: 90.0 });
        assert!(matches!(
            validate_unit_cell(c),
            Err(SurfaceError::InvalidStateCount { expected: 4, found: 3, .. })
        ));
    }

    #[test]
    fn gamma_out_of_range() {
        let mut c = s1();
        c.states[0].gamma_mag = 1.2;
        assert!(matches!(validate_unit_cell(c), Err(SurfaceError::InvalidGamma { index: 0, .. })));
        let mut c = s1();
        c.states[1].gamma_mag = 0.0;
        assert!(matches!(validate_unit_cell(c), Err(SurfaceError::InvalidGamma { index: 1, .. })));
    }

    #[test]
    fn non_positive_params() {
        let mut c = s1();
        c.q_exponent = 0.0;
        assert!(matches!(
            validate_unit_cell(c),
            Err(SurfaceError::NonPositiveParam { name: "q_exponent", .. })
        ));
        let mut c = s1();
        c.design_freq_hz = -1.0;
        assert!(matches!(validate_unit_cell(c), Err(SurfaceError::NonPositiveParam { .. })));
        let mut c = s1();
        c.n_diodes = 0;
        assert!(validate_unit_cell(c).is_err());
    }

    #[test]
    fn default_pitch_is_half_wavelength() {
        let (s, layout) = build_surface(s1(), 40, 40, 1, None).unwrap();
        assert_eq!(s.n_cells(), 1600);
        assert_eq!(layout.n_groups(), 1600);
        // c / (2 * 11.1 GHz) = 13.5041 mm
        assert_relative_eq!(s.pitch_m * 1e3, 13.5041, max_relative = 1e-4);
    }

    #[test]
    fn single_group_covers_everything() {
        let (_, layout) = build_surface(s1(), 2, 2, 4, None).unwrap();
        assert_eq!(layout.assignment, vec![0, 0, 0, 0]);
    }

    #[test]
    fn group_size_must_divide() {
        assert!(matches!(
            build_surface(s1(), 3, 3, 2, None),
            Err(SurfaceError::GroupSizeMismatch { cells: 9, group: 2 })
        ));
        assert!(build_surface(s1(), 3, 3, 0, None).is_err());
    }

    #[test]
    fn expand_pairs() {
        let layout = GroupLayout::row_major(2, 2, 2).unwrap();
        let cfg = expand_groups(&[0, 1], &layout, 2).unwrap();
        assert_eq!(cfg.states, vec![0, 0, 1, 1]);
        assert_eq!(cfg.get(1, 0), 1);
    }

    #[test]
    fn expand_errors() {
        let layout = GroupLayout::row_major(2, 2, 1).unwrap();
        assert!(matches!(
            expand_groups(&[0, 1, 0], &layout, 2),
            Err(SurfaceError::LengthMismatch { expected: 4, found: 3 })
        ));
        assert!(matches!(
            expand_groups(&[0, 4, 0, 0], &layout, 2),
            Err(SurfaceError::InvalidStateIndex { position: 1, value: 4, .. })
        ));
    }

    #[test]
    fn near_field_examples() {
        let lambda = SPEED / 11.1e9;
        assert_relative_eq!(near_field_boundary(0.1, lambda).unwrap(), 0.74, max_relative = 1e-3);
        assert_relative_eq!(near_field_boundary(1.0, 0.5).unwrap(), 4.0);
        assert!(matches!(
            near_field_boundary(0.0, 0.5),
            Err(SurfaceError::NonPositiveParam { .. })
        ));
    }

    const SPEED: f64 = crate::num::SPEED_OF_LIGHT;

    #[test]
    fn near_field_scales_quadratically_with_size() {
        let (a, _) = build_surface(s1(), 40, 40, 1, None).unwrap();
        let (b, _) = build_surface(s1(), 79, 79, 1, None).unwrap();
        let lambda = a.wavelength_m();
        let ra = near_field_boundary(a.aperture_diagonal(), lambda).unwrap();
        let rb = near_field_boundary(b.aperture_diagonal(), lambda).unwrap();
        // diagonals are 39 and 78 pitches
        assert_relative_eq!(rb / ra, 4.0, max_relative = 1e-12);
        assert_relative_eq!(a.aperture_diagonal(), 2f64.sqrt() * 39.0 * a.pitch_m, max_relative = 1e-12);
    }

    #[test]
    fn phase_offset_wraps() {
        let c = s1().with_phase_offset(270.0);
        assert_eq!(c.states[0].gamma_phase_deg, 270.0);
        assert_eq!(c.states[1].gamma_phase_deg, 90.0);
        validate_unit_cell(c).unwrap();
    }

    proptest! {
        #[test]
        fn positions_sum_to_origin(rows in 1usize..30, cols in 1usize..30) {
            let (s, _) = build_surface(s1(), rows, cols, 1, Some(0.0125)).unwrap();
            // every cell has an exact mirror image, so pairing terms cancels without rounding
            let mut sum = [0.0f64; 3];
            for m in 0..rows {
                for n in 0..cols {
                    let (a, b) = (s.cell_position(m, n), s.cell_position(rows - 1 - m, cols - 1 - n));
                    for k in 0..3 {
                        prop_assert_eq!(a[k], -b[k]);
                        sum[k] += a[k] + b[k];
                    }
                }
            }
            prop_assert_eq!(sum, [0.0, 0.0, 0.0]);
        }

        #[test]
        fn expansion_constant_per_group(rows in 1usize..8, cols in 1usize..8, g in 1usize..5, seed in any::<u64>()) {
            prop_assume!((rows * cols) % g == 0);
            let layout = GroupLayout::row_major(rows, cols, g).unwrap();
            let groups: Vec<u8> = (0..layout.n_groups()).map(|i| ((seed >> (i % 60)) & 3) as u8).collect();
            let cfg = expand_groups(&groups, &layout, 4).unwrap();
            for (cell, &gid) in layout.assignment.iter().enumerate() {
                prop_assert_eq!(cfg.states[cell], groups[gid]);
            }
            for gid in 0..layout.n_groups() {
                prop_assert_eq!(layout.assignment.iter().filter(|&&a| a == gid).count(), g);
            }
            if g == 1 {
                prop_assert_eq!(cfg.states.clone(), groups.clone());
            }
        }
    }
}
