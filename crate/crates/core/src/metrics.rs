//! Pattern-comparison metrics: directivity error, NMSE, side-lobe ratio and lobe detection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmarks::BenchmarkPattern;
use crate::grid::{principal_cut, FieldGrid, GridError, PrincipalCut};
use crate::num::Real;

/// Reported SLR when no lobe lies outside the intended regions.
pub const NO_SIDE_LOBE_DB: f64 = 99.0;
/// Reported SLR when an intended region holds no power at all.
pub const NO_INTENDED_LOBE_DB: f64 = -99.0;
/// Lobes weaker than this fraction of the cut's peak power are ignored.
pub const LOBE_FLOOR: f64 = 1e-4;

const ANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no grid point falls inside [{start}, {end}] deg")]
    EmptyRegion { start: f64, end: f64 },
    #[error("region [{start}, {end}] deg leaves the visible range [-90, 90]")]
    RegionOutOfRange { start: f64, end: f64 },
    #[error("reference pattern has no power inside the benchmark lobes")]
    ZeroReferenceDirectivity,
    #[error("field is zero everywhere")]
    AllZeroField,
    #[error("no lobe outside the intended regions")]
    NoSideLobe,
    #[error("benchmark has no beams")]
    EmptyBenchmark,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// One lobe of a principal cut, bounded by the nulls on either side of its peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LobeRegion<T> {
    pub start_deg: f64,
    pub end_deg: f64,
    pub peak_deg: f64,
    pub peak_power: T,
}

/// Which azimuth columns count toward a principal-plane region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectivityOptions {
    /// Azimuth carrying positive signed elevations; its opposite carries negative ones.
    pub phi_plane_deg: f64,
    /// Half-width of the azimuth band integrated around each half-plane.
    pub phi_band_deg: f64,
}

impl Default for DirectivityOptions {
    fn default() -> Self {
        DirectivityOptions {
            phi_plane_deg: 0.0,
            phi_band_deg: 5.0,
        }
    }
}

fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Sum of `|E|^2 sin(theta) dtheta dphi` over grid points whose signed principal-plane elevation lies in
/// `[start_deg, end_deg]`, over the azimuth bands around `phi_plane` (+) and `phi_plane + 180` (-).
///
/// Each azimuth column belongs to the nearer half-plane. The row at exactly 90 deg sits on the
/// hemisphere boundary and is weighted by one half.
pub fn directivity_over_region<T: Real>(
    field: &FieldGrid<T>,
    start_deg: f64,
    end_deg: f64,
    opts: &DirectivityOptions,
) -> Result<T, MetricsError> {
    if start_deg < -90.0 - ANGLE_TOL || end_deg > 90.0 + ANGLE_TOL || start_deg > end_deg {
        return Err(MetricsError::RegionOutOfRange {
            start: start_deg,
            end: end_deg,
        });
    }
    let g = &field.grid;
    let d_theta = g.theta_step_deg.to_radians();
    let d_phi = g.phi_step_deg.to_radians();
    let rows = g.n_front_rows();
    let mut total = T::zero();
    let mut hits = 0usize;
    for j in 0..g.n_phi() {
        let phi = g.phi_deg(j);
        let d_pos = angular_distance(phi, opts.phi_plane_deg);
        let d_neg = angular_distance(phi, opts.phi_plane_deg + 180.0);
        let sign = if d_pos <= d_neg && d_pos <= opts.phi_band_deg + ANGLE_TOL {
            1.0
        } else if d_neg < d_pos && d_neg <= opts.phi_band_deg + ANGLE_TOL {
            -1.0
        } else {
            continue;
        };
        for i in 0..rows {
            let theta = g.theta_deg(i);
            let signed = sign * theta;
            if signed < start_deg - ANGLE_TOL || signed > end_deg + ANGLE_TOL {
                continue;
            }
            hits += 1;
            let edge = if (theta - 90.0).abs() < ANGLE_TOL { 0.5 } else { 1.0 };
            let w = T::lit(theta.to_radians().sin() * d_theta * d_phi * edge);
            total = total + field.at(i, j).norm_sqr() * w;
        }
    }
    if hits == 0 {
        return Err(MetricsError::EmptyRegion {
            start: start_deg,
            end: end_deg,
        });
    }
    Ok(total)
}

/// Directivity error, aggregated over all benchmark lobes, plus the per-beam values.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectivityError<T> {
    pub de: T,
    /// `None` where the reference holds no power in that beam's region.
    pub per_beam: Vec<Option<T>>,
}

/// `(D_r - D_a) / D_r` with both directivities summed over the benchmark's lobe regions.
pub fn directivity_error<T: Real>(
    reference: &FieldGrid<T>,
    achieved: &FieldGrid<T>,
    bm: &BenchmarkPattern,
    opts: &DirectivityOptions,
) -> Result<DirectivityError<T>, MetricsError> {
    reference.grid.ensure_same(&achieved.grid)?;
    if bm.beams.is_empty() {
        return Err(MetricsError::EmptyBenchmark);
    }
    let mut d_r = T::zero();
    let mut d_a = T::zero();
    let mut per_beam = Vec::with_capacity(bm.beams.len());
    for beam in &bm.beams {
        let r = directivity_over_region(reference, beam.start_deg, beam.end_deg, opts)?;
        let a = directivity_over_region(achieved, beam.start_deg, beam.end_deg, opts)?;
        per_beam.push((r > T::zero()).then(|| (r - a) / r));
        d_r = d_r + r;
        d_a = d_a + a;
    }
    if d_r <= T::zero() {
        return Err(MetricsError::ZeroReferenceDirectivity);
    }
    Ok(DirectivityError {
        de: (d_r - d_a) / d_r,
        per_beam,
    })
}

/// Mean squared difference of peak-normalised magnitudes over every grid point.
pub fn nmse<T: Real>(reference: &FieldGrid<T>, achieved: &FieldGrid<T>) -> Result<T, MetricsError> {
    reference.grid.ensure_same(&achieved.grid)?;
    let r_max = reference.max_magnitude();
    let a_max = achieved.max_magnitude();
    if r_max <= T::zero() || a_max <= T::zero() {
        return Err(MetricsError::AllZeroField);
    }
    let sum: T = reference
        .values
        .iter()
        .zip(&achieved.values)
        .map(|(r, a)| {
            let d = r.norm() / r_max - a.norm() / a_max;
            d * d
        })
        .sum();
    Ok(sum / T::from_usize_lossy(reference.values.len()))
}

/// Local maxima of the cut's power above `LOBE_FLOOR * peak`, each bounded by the nearest minima,
/// strongest first.
pub fn detect_lobes<T: Real>(cut: &PrincipalCut<T>) -> Result<Vec<LobeRegion<T>>, MetricsError> {
    let p = cut.power();
    let n = p.len();
    let peak = p.iter().copied().fold(T::zero(), |a, b| if b > a { b } else { a });
    if peak <= T::zero() {
        return Err(MetricsError::AllZeroField);
    }
    let floor = peak * T::lit(LOBE_FLOOR);
    let mut lobes = Vec::new();
    let mut i = 0;
    while i < n {
        // plateau [i, j]
        let mut j = i;
        while j + 1 < n && p[j + 1] == p[i] {
            j += 1;
        }
        let rises = i == 0 || p[i - 1] < p[i];
        let falls = j + 1 == n || p[j + 1] < p[j];
        if rises && falls && p[i] >= floor && p[i] > T::zero() {
            let mut lo = i;
            while lo > 0 && p[lo - 1] < p[lo] {
                lo -= 1;
            }
            let mut hi = j;
            while hi + 1 < n && p[hi + 1] < p[hi] {
                hi += 1;
            }
            let mid = (i + j) / 2;
            lobes.push(LobeRegion {
                start_deg: cut.signed_theta_deg[lo],
                end_deg: cut.signed_theta_deg[hi],
                peak_deg: cut.signed_theta_deg[mid],
                peak_power: p[mid],
            });
        }
        i = j + 1;
    }
    lobes.sort_by(|a, b| {
        b.peak_power
            .partial_cmp(&a.peak_power)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.peak_deg.total_cmp(&b.peak_deg))
    });
    Ok(lobes)
}

/// Strongest detected lobe whose peak lies outside every intended region.
pub fn largest_side_lobe<T: Real>(
    cut: &PrincipalCut<T>,
    bm: &BenchmarkPattern,
) -> Result<LobeRegion<T>, MetricsError> {
    detect_lobes(cut)?
        .into_iter()
        .find(|l| {
            !bm.beams.iter().any(|b| {
                l.peak_deg >= b.start_deg - ANGLE_TOL && l.peak_deg <= b.end_deg + ANGLE_TOL
            })
        })
        .ok_or(MetricsError::NoSideLobe)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideLobeRatio {
    pub slr_db: f64,
    pub per_beam_db: Vec<f64>,
}

/// Per-beam `10 log10(intended / side)` and its mean. A missing side lobe reports
/// [`NO_SIDE_LOBE_DB`]; a beam region with no power reports [`NO_INTENDED_LOBE_DB`].
pub fn side_lobe_ratio<T: Real>(achieved: &FieldGrid<T>, bm: &BenchmarkPattern) -> Result<SideLobeRatio, MetricsError> {
    if bm.beams.is_empty() {
        return Err(MetricsError::EmptyBenchmark);
    }
    let cut = principal_cut(achieved)?;
    let side = match largest_side_lobe(&cut, bm) {
        Ok(l) => Some(l.peak_power.to_f64_lossy()),
        Err(MetricsError::NoSideLobe) => None,
        Err(e) => return Err(e),
    };
    let power = cut.power();
    let mut per_beam_db = Vec::with_capacity(bm.beams.len());
    for b in &bm.beams {
        let intended = cut
            .signed_theta_deg
            .iter()
            .zip(&power)
            .filter(|(a, _)| **a >= b.start_deg - ANGLE_TOL && **a <= b.end_deg + ANGLE_TOL)
            .map(|(_, p)| p.to_f64_lossy())
            .fold(0.0, f64::max);
        let db = match side {
            None => NO_SIDE_LOBE_DB,
            Some(_) if intended <= 0.0 => NO_INTENDED_LOBE_DB,
            Some(s) => 10.0 * (intended / s).log10(),
        };
        per_beam_db.push(db);
    }
    let slr_db = per_beam_db.iter().sum::<f64>() / per_beam_db.len() as f64;
    Ok(SideLobeRatio { slr_db, per_beam_db })
}

/// Serialised as `{de, nmse, slr_db, per_beam_slr_db, per_beam_de}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub de: f64,
    pub nmse: f64,
    pub slr_db: f64,
    pub per_beam_slr_db: Vec<f64>,
    #[serde(default)]
    pub per_beam_de: Vec<Option<f64>>,
}

/// DE and NMSE of `achieved` against `reference`, SLR of `achieved` against the benchmark lobes.
pub fn evaluate_all<T: Real>(
    reference: &FieldGrid<T>,
    achieved: &FieldGrid<T>,
    bm: &BenchmarkPattern,
    opts: &DirectivityOptions,
) -> Result<MetricsReport, MetricsError> {
    let de = directivity_error(reference, achieved, bm, opts)?;
    let nmse = nmse(reference, achieved)?;
    let slr = side_lobe_ratio(achieved, bm)?;
    Ok(MetricsReport {
        de: de.de.to_f64_lossy(),
        nmse: nmse.to_f64_lossy(),
        slr_db: slr.slr_db,
        per_beam_slr_db: slr.per_beam_db,
        per_beam_de: de.per_beam.into_iter().map(|v| v.map(|x| x.to_f64_lossy())).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{BeamSpec, BenchmarkPattern};
    use crate::grid::GridSpec;
    use num_complex::Complex;
    use proptest::prelude::*;

    fn beam(theta: f64, half: f64) -> BeamSpec {
        BeamSpec {
            theta_deg: theta,
            amplitude: 1.0,
            start_deg: theta - half,
            end_deg: theta + half,
        }
    }

    fn pattern(beams: Vec<BeamSpec>) -> BenchmarkPattern {
        BenchmarkPattern { id: "T".into(), beams }
    }

    fn cut_field(grid: GridSpec, f: impl Fn(f64) -> f64) -> FieldGrid<f64> {
        FieldGrid::from_magnitudes(grid, |t, p| {
            if t > 90.0 {
                0.0
            } else if p == 0.0 {
                f(t)
            } else if p == 180.0 {
                f(-t)
            } else {
                0.0
            }
        })
    }

    fn hemisphere(grid: GridSpec) -> FieldGrid<f64> {
        FieldGrid::from_magnitudes(grid, |t, _| if t <= 90.0 { 1.0 } else { 0.0 })
    }

    #[test]
    fn riemann_sum_of_uniform_hemisphere() {
        let f = hemisphere(GridSpec::default());
        let all = DirectivityOptions {
            phi_plane_deg: 0.0,
            phi_band_deg: 90.0,
        };
        let d = directivity_over_region(&f, -90.0, 90.0, &all).unwrap();
        let exact = std::f64::consts::TAU;
        assert!(((d - exact) / exact).abs() < 1e-3, "{d}");
    }

    #[test]
    fn zero_and_scaled_fields() {
        let g = GridSpec::default();
        let z = FieldGrid::<f64>::zeros(g, None);
        let o = DirectivityOptions::default();
        assert_eq!(directivity_over_region(&z, 10.0, 20.0, &o).unwrap(), 0.0);
        let f = hemisphere(g);
        let a = directivity_over_region(&f, 10.0, 20.0, &o).unwrap();
        let b = directivity_over_region(&f.scaled(3.0), 10.0, 20.0, &o).unwrap();
        assert!((b - 9.0 * a).abs() <= 1e-12 * b);
    }

    #[test]
    fn region_errors() {
        let g = GridSpec::new(10.0, 10.0).unwrap();
        let f = hemisphere(g);
        let o = DirectivityOptions::default();
        assert!(matches!(directivity_over_region(&f, 11.0, 12.0, &o), Err(MetricsError::EmptyRegion { .. })));
        assert!(matches!(directivity_over_region(&f, -95.0, 12.0, &o), Err(MetricsError::RegionOutOfRange { .. })));
    }

    #[test]
    fn de_identities() {
        let g = GridSpec::default();
        let bm = pattern(vec![beam(30.0, 3.0), beam(-20.0, 3.0)]);
        let o = DirectivityOptions::default();
        let r = hemisphere(g);
        assert_eq!(directivity_error(&r, &r, &bm, &o).unwrap().de, 0.0);
        let outside = cut_field(g, |t| if t.abs() > 60.0 { 1.0 } else { 0.0 });
        assert_eq!(directivity_error(&r, &outside, &bm, &o).unwrap().de, 1.0);
        let better = directivity_error(&r, &r.scaled(2.0), &bm, &o).unwrap();
        assert!(better.de < 0.0);
        assert_eq!(better.per_beam.len(), 2);
        let z = FieldGrid::<f64>::zeros(g, None);
        assert!(matches!(directivity_error(&z, &r, &bm, &o), Err(MetricsError::ZeroReferenceDirectivity)));
    }

    #[test]
    fn nmse_examples() {
        let g = GridSpec::default();
        let r = cut_field(g, |t| (t.to_radians()).cos());
        assert_eq!(nmse(&r, &r).unwrap(), 0.0);
        assert!(nmse(&r, &r.scaled(7.0)).unwrap() < 1e-30);
        let mut a = FieldGrid::<f64>::zeros(g, None);
        let mut b = FieldGrid::<f64>::zeros(g, None);
        a.values[10] = Complex::new(1.0, 0.0);
        b.values[5000] = Complex::new(0.0, -1.0);
        assert_eq!(nmse(&a, &b).unwrap(), 2.0 / 64_800.0);
        assert!(matches!(nmse(&a, &FieldGrid::zeros(g, None)), Err(MetricsError::AllZeroField)));
        let other = FieldGrid::<f64>::zeros(GridSpec::new(2.0, 2.0).unwrap(), None);
        assert!(matches!(nmse(&a, &other), Err(MetricsError::Grid(GridError::GridMismatch(_)))));
    }

    #[test]
    fn lobes_single_and_pair() {
        let g = GridSpec::default();
        let one = cut_field(g, |t| if (t - 20.0).abs() < 5.0 { (std::f64::consts::PI * (t - 20.0) / 10.0).cos().powi(2) } else { 0.0 });
        let lobes = detect_lobes(&principal_cut(&one).unwrap()).unwrap();
        assert_eq!(lobes.len(), 1);
        assert!(lobes[0].start_deg < 20.0 && lobes[0].end_deg > 20.0 && lobes[0].peak_deg == 20.0);

        let two = cut_field(g, |t| {
            let bump = |c: f64, a: f64| if (t - c).abs() < 5.0 { a * (std::f64::consts::PI * (t - c) / 10.0).cos().powi(2) } else { 0.0 };
            bump(-40.0, 0.5f64.sqrt()) + bump(10.0, 1.0)
        });
        let lobes = detect_lobes(&principal_cut(&two).unwrap()).unwrap();
        assert_eq!(lobes.len(), 2);
        assert_eq!(lobes[0].peak_power, 1.0);
        assert_eq!(lobes[0].peak_deg, 10.0);
        assert!((lobes[1].peak_power - 0.5).abs() < 1e-15);
        assert!(matches!(
            detect_lobes(&principal_cut(&FieldGrid::<f64>::zeros(g, None)).unwrap()),
            Err(MetricsError::AllZeroField)
        ));
    }

    #[test]
    fn slr_examples() {
        let g = GridSpec::default();
        let bump = |t: f64, c: f64, a: f64| if (t - c).abs() < 3.0 { a * (std::f64::consts::PI * (t - c) / 6.0).cos() } else { 0.0 };
        let bm = pattern(vec![beam(30.0, 3.0)]);
        let equal = cut_field(g, |t| bump(t, 30.0, 1.0) + bump(t, -50.0, 1.0));
        assert_eq!(side_lobe_ratio(&equal, &bm).unwrap().slr_db, 0.0);
        let ten = cut_field(g, |t| bump(t, 30.0, 10f64.sqrt()) + bump(t, -50.0, 1.0));
        assert!((side_lobe_ratio(&ten, &bm).unwrap().slr_db - 10.0).abs() < 1e-12);
        let worse = cut_field(g, |t| bump(t, 30.0, 0.5) + bump(t, -50.0, 1.0));
        assert!(side_lobe_ratio(&worse, &bm).unwrap().slr_db < 0.0);
        let clean = cut_field(g, |t| bump(t, 30.0, 1.0));
        assert_eq!(side_lobe_ratio(&clean, &bm).unwrap().slr_db, NO_SIDE_LOBE_DB);
        // two beams averaged
        let bm2 = pattern(vec![beam(30.0, 3.0), beam(-10.0, 3.0)]);
        let f = cut_field(g, |t| bump(t, 30.0, 10f64.sqrt()) + bump(t, -10.0, 1.0) + bump(t, 60.0, 1.0));
        let s = side_lobe_ratio(&f, &bm2).unwrap();
        assert!((s.per_beam_db[0] - 10.0).abs() < 1e-12 && s.per_beam_db[1].abs() < 1e-12);
        assert!((s.slr_db - 5.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_self_and_swap() {
        let g = GridSpec::default();
        let bm = pattern(vec![beam(30.0, 3.0)]);
        let o = DirectivityOptions::default();
        let bump = |t: f64, c: f64, a: f64| if (t - c).abs() < 3.0 { a * (std::f64::consts::PI * (t - c) / 6.0).cos() } else { 0.0 };
        let r = cut_field(g, |t| bump(t, 30.0, 1.0) + bump(t, -20.0, 0.3));
        let a = cut_field(g, |t| bump(t, 28.0, 1.0) + bump(t, 50.0, 0.5));
        let same = evaluate_all(&r, &r, &bm, &o).unwrap();
        assert_eq!((same.de, same.nmse), (0.0, 0.0));
        let ra = evaluate_all(&r, &a, &bm, &o).unwrap();
        let ar = evaluate_all(&a, &r, &bm, &o).unwrap();
        assert!(ra.nmse >= 0.0);
        assert_eq!(ra.nmse, ar.nmse);
        assert!(ra.de <= 1.0);
        let json = serde_json::to_value(&ra).unwrap();
        for key in ["de", "nmse", "slr_db", "per_beam_slr_db"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    fn field_from_seed(g: GridSpec, seed: u64) -> FieldGrid<f64> {
        let mut x = seed | 1;
        FieldGrid::from_magnitudes(g, |t, _| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if t > 90.0 { 0.0 } else { (x >> 11) as f64 / (1u64 << 53) as f64 }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn nmse_symmetric_and_scale_free(s1 in any::<u64>(), s2 in any::<u64>(), c1 in 1e-3f64..1e3, c2 in 1e-3f64..1e3) {
            let g = GridSpec::new(3.0, 3.0).unwrap();
            let (a, b) = (field_from_seed(g, s1), field_from_seed(g, s2));
            let base = nmse(&a, &b).unwrap();
            prop_assert_eq!(base, nmse(&b, &a).unwrap());
            prop_assert!((nmse(&a.scaled(c1), &b.scaled(c2)).unwrap() - base).abs() <= 1e-12);
            prop_assert!(base >= 0.0);
        }

        #[test]
        fn directivity_additive_over_disjoint_regions(seed in any::<u64>(), a in -89i32..80, w1 in 1i32..5, w2 in 1i32..5) {
            let g = GridSpec::default();
            let f = field_from_seed(g, seed);
            let o = DirectivityOptions::default();
            let (s1, e1) = (a as f64, (a + w1) as f64);
            let (s2, e2) = ((a + w1 + 1) as f64, ((a + w1 + 1 + w2).min(90)) as f64);
            prop_assume!(s2 <= e2);
            let whole = directivity_over_region(&f, s1, e2, &o).unwrap();
            let parts = directivity_over_region(&f, s1, e1, &o).unwrap() + directivity_over_region(&f, s2, e2, &o).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1e-300));
        }

        #[test]
        fn de_never_exceeds_one(s1 in any::<u64>(), s2 in any::<u64>()) {
            let g = GridSpec::default();
            let bm = pattern(vec![beam(-30.0, 3.0), beam(45.0, 4.0)]);
            let de = directivity_error(&field_from_seed(g, s1), &field_from_seed(g, s2), &bm, &DirectivityOptions::default()).unwrap();
            prop_assert!(de.de <= 1.0);
        }

        #[test]
        fn lobe_interiors_do_not_overlap(seed in any::<u64>()) {
            let g = GridSpec::default();
            let cut = principal_cut(&field_from_seed(g, seed)).unwrap();
            let mut lobes = detect_lobes(&cut).unwrap();
            lobes.sort_by(|a, b| a.start_deg.total_cmp(&b.start_deg));
            for w in lobes.windows(2) {
                prop_assert!(w[0].end_deg <= w[1].start_deg);
            }
            for l in &lobes {
                prop_assert!(l.start_deg <= l.peak_deg && l.peak_deg <= l.end_deg);
            }
        }
    }
}
