//! Control-line count, reconfiguration rate and diode power budget of a surface.

use serde::{Deserialize, Serialize};

use crate::num::SPEED_OF_LIGHT;
use crate::surface::{SurfaceError, SurfaceSpec};
use crate::num::Real;

/// Diode bias power used throughout the comparison table, W.
pub const DEFAULT_DIODE_POWER_W: f64 = 8e-3;
/// Sensing/computation cycles per reconfiguration assumed by default.
pub const DEFAULT_K: f64 = 40.0;
/// Per-path switching time assumed by default, s.
pub const DEFAULT_TAU_S: f64 = 20e-9;

fn positive(name: &'static str, value: f64) -> Result<(), SurfaceError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(SurfaceError::NonPositiveParam { name, value })
    }
}

fn positive_count(name: &'static str, value: usize) -> Result<(), SurfaceError> {
    positive(name, value as f64)
}

/// `M N n / G` independent control paths.
pub fn physical_paths(m: usize, n: usize, bits: u32, g: usize) -> Result<usize, SurfaceError> {
    let cells = m * n;
    if g == 0 || cells % g != 0 {
        return Err(SurfaceError::GroupSizeMismatch { cells, group: g });
    }
    Ok(cells * bits as usize / g)
}

/// `G K / (M N n tau)` reconfigurations per second.
pub fn switching_rate(g: usize, k: f64, m: usize, n: usize, bits: u32, tau_s: f64) -> Result<f64, SurfaceError> {
    positive_count("G", g)?;
    positive("K", k)?;
    positive_count("M", m)?;
    positive_count("N", n)?;
    positive_count("n", bits as usize)?;
    positive("tau", tau_s)?;
    Ok(g as f64 * k / ((m * n) as f64 * bits as f64 * tau_s))
}

/// `d M N P_D`, every diode biased at once.
pub fn max_power(d: u32, m: usize, n: usize, p_d_w: f64) -> Result<f64, SurfaceError> {
    positive_count("d", d as usize)?;
    positive_count("M", m)?;
    positive_count("N", n)?;
    positive("P_D", p_d_w)?;
    Ok(d as f64 * (m * n) as f64 * p_d_w)
}

/// Half-wavelength cell area at `f_hz`, m^2.
pub fn half_wave_cell_area(f_hz: f64) -> Result<f64, SurfaceError> {
    positive("f", f_hz)?;
    let side = SPEED_OF_LIGHT / (2.0 * f_hz);
    Ok(side * side)
}

/// `d P_D / (c / 2f)^2`, independent of the array size.
pub fn power_per_area(d: u32, p_d_w: f64, f_hz: f64) -> Result<f64, SurfaceError> {
    positive_count("d", d as usize)?;
    positive("P_D", p_d_w)?;
    Ok(d as f64 * p_d_w / half_wave_cell_area(f_hz)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsEcho {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub n_bits: u32,
    pub d: u32,
    #[serde(rename = "G")]
    pub g: usize,
    #[serde(rename = "K")]
    pub k: f64,
    pub tau_s: f64,
    pub p_d_w: f64,
    pub f_hz: f64,
    /// Physical cell footprint, which may differ from the half-wavelength area used above.
    pub cell_width_m: f64,
    pub cell_height_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    pub cell_id: String,
    pub physical_paths: usize,
    pub switching_rate_hz: f64,
    pub reconfiguration_time_s: f64,
    pub total_power_w: f64,
    pub power_per_area_w_m2: f64,
    pub cell_area_m2: f64,
    pub params_echo: ParamsEcho,
}

pub fn complexity_report<T: Real>(
    surface: &SurfaceSpec<T>,
    k: f64,
    tau_s: f64,
    p_d_w: f64,
) -> Result<ControlReport, SurfaceError> {
    let c = &surface.cell;
    let (m, n, g) = (surface.rows, surface.cols, surface.group_size);
    let f_hz = c.design_freq_hz.to_f64_lossy();
    let rate = switching_rate(g, k, m, n, c.n_bits, tau_s)?;
    Ok(ControlReport {
        cell_id: c.id.clone(),
        physical_paths: physical_paths(m, n, c.n_bits, g)?,
        switching_rate_hz: rate,
        reconfiguration_time_s: 1.0 / rate,
        total_power_w: max_power(c.n_diodes, m, n, p_d_w)?,
        power_per_area_w_m2: power_per_area(c.n_diodes, p_d_w, f_hz)?,
        cell_area_m2: half_wave_cell_area(f_hz)?,
        params_echo: ParamsEcho {
            m,
            n,
            n_bits: c.n_bits,
            d: c.n_diodes,
            g,
            k,
            tau_s,
            p_d_w,
            f_hz,
            cell_width_m: c.width_m.to_f64_lossy(),
            cell_height_m: c.height_m.to_f64_lossy(),
        },
    })
}
