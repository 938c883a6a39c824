//! Band sweeps over the Bloch parameter, gap measurement and spectrum reconstruction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bathymetry::BathymetryProfile;
use crate::error::{Error, Result};
use crate::operator::{assemble_dno, SpectralGrid};

/// Bands closer than this are treated as touching when forming the spectrum.
pub const DEFAULT_TOUCH_TOLERANCE: f64 = 1e-10;

/// Sorted sample points in [0, 1/2], both endpoints included.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaGrid {
    values: Vec<f64>,
}

impl ThetaGrid {
    pub const MIN_COUNT: usize = 9;

    pub fn uniform(count: usize) -> Result<Self> {
        Self::check_count(count)?;
        let values = (0..count).map(|i| 0.5 * i as f64 / (count - 1) as f64).collect();
        Ok(Self { values })
    }

    /// Chebyshev-Lobatto points, clustered at θ = 0 and θ = 1/2.
    pub fn chebyshev(count: usize) -> Result<Self> {
        Self::check_count(count)?;
        let mut values: Vec<f64> = (0..count)
            .map(|i| 0.25 * (1.0 - (std::f64::consts::PI * i as f64 / (count - 1) as f64).cos()))
            .collect();
        values[0] = 0.0;
        values[count - 1] = 0.5;
        Ok(Self { values })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::check_count(values.len())?;
        if values[0] != 0.0 || *values.last().unwrap() != 0.5 {
            return Err(Error::Precondition("theta grid must start at 0 and end at 1/2".into()));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Precondition("theta grid must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    fn check_count(count: usize) -> Result<()> {
        if count < Self::MIN_COUNT {
            return Err(Error::Precondition(format!(
                "theta grid needs at least {} points, got {count}",
                Self::MIN_COUNT
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Lowest eigenvalues λ_n(θ_i) for one ε.
#[derive(Clone, Debug, PartialEq)]
pub struct BandStructure {
    pub theta_grid: ThetaGrid,
    pub epsilon: f64,
    pub grid: SpectralGrid,
    pub profile_digest: String,
    /// bands[n][i] = λ_n(θ_i).
    pub bands: Vec<Vec<f64>>,
}

impl BandStructure {
    /// Wraps precomputed band rows, checking shape and per-column ordering.
    pub fn from_rows(
        theta_grid: ThetaGrid,
        epsilon: f64,
        grid: SpectralGrid,
        profile_digest: String,
        bands: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if bands.iter().any(|row| row.len() != theta_grid.len()) {
            return Err(Error::Precondition("band rows must match the theta grid".into()));
        }
        if bands.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("band values must be finite".into()));
        }
        Ok(Self {
            theta_grid,
            epsilon,
            grid,
            profile_digest,
            bands,
        })
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.bands.iter().map(|row| row[i]).collect()
    }

    /// [min_θ λ_n, max_θ λ_n].
    pub fn band_range(&self, n: usize) -> (f64, f64) {
        let row = &self.bands[n];
        (
            row.iter().copied().fold(f64::INFINITY, f64::min),
            row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }
}

pub fn sweep(
    profile: &BathymetryProfile,
    epsilon: f64,
    grid: &SpectralGrid,
    theta_grid: &ThetaGrid,
    n_bands: usize,
) -> Result<BandStructure> {
    let limit = (grid.n_x / 2).saturating_sub(2);
    if n_bands == 0 || n_bands > limit {
        return Err(Error::Precondition(format!(
            "n_bands = {n_bands} outside 1..={limit} for n_x = {}",
            grid.n_x
        )));
    }
    grid.validate_for(profile)?;
    profile.check_epsilon(epsilon)?;
    let columns: Vec<Vec<f64>> = theta_grid
        .values()
        .par_iter()
        .map(|&theta| {
            let s = assemble_dno(profile, epsilon, theta, grid)?;
            Ok(s.eigenvalues[..n_bands].to_vec())
        })
        .collect::<Result<_>>()?;
    let bands = (0..n_bands)
        .map(|n| columns.iter().map(|c| c[n]).collect())
        .collect();
    Ok(BandStructure {
        theta_grid: theta_grid.clone(),
        epsilon,
        grid: *grid,
        profile_digest: profile.digest(),
        bands,
    })
}

/// Measured gap between band `lower_band` and the next one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapRecord {
    pub lower_band: usize,
    pub lower_max: f64,
    pub upper_min: f64,
    pub width: f64,
    pub center: f64,
    pub argmax_theta: f64,
    pub argmin_theta: f64,
    /// Bound on how far the grid extrema may sit from the true extrema:
    /// the largest one-cell change of each band next to its extremum.
    pub resolution_bound: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GapOptions {
    /// Refine interior extrema with a parabola through the three nearest samples.
    pub parabolic: bool,
}

pub fn detect_gap(bands: &BandStructure, lower_band: usize) -> Result<GapRecord> {
    detect_gap_with(bands, lower_band, GapOptions::default())
}

pub fn detect_gap_with(bands: &BandStructure, lower_band: usize, options: GapOptions) -> Result<GapRecord> {
    if lower_band + 1 >= bands.n_bands() {
        return Err(Error::Precondition(format!(
            "gap above band {lower_band} needs at least {} bands, have {}",
            lower_band + 2,
            bands.n_bands()
        )));
    }
    let thetas = bands.theta_grid.values();
    let lower = &bands.bands[lower_band];
    let upper = &bands.bands[lower_band + 1];
    let imax = argbest(lower, |a, b| a > b);
    let imin = argbest(upper, |a, b| a < b);
    let (mut lower_max, mut argmax_theta) = (lower[imax], thetas[imax]);
    let (mut upper_min, mut argmin_theta) = (upper[imin], thetas[imin]);
    if options.parabolic {
        if let Some((t, v)) = parabolic_vertex(thetas, lower, imax) {
            if v > lower_max {
                lower_max = v;
                argmax_theta = t;
            }
        }
        if let Some((t, v)) = parabolic_vertex(thetas, upper, imin) {
            if v < upper_min {
                upper_min = v;
                argmin_theta = t;
            }
        }
    }
    let resolution_bound = neighbour_change(lower, imax) + neighbour_change(upper, imin);
    Ok(GapRecord {
        lower_band,
        lower_max,
        upper_min,
        width: (upper_min - lower_max).max(0.0),
        center: 0.5 * (lower_max + upper_min),
        argmax_theta,
        argmin_theta,
        resolution_bound,
    })
}

fn argbest(v: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if better(x, v[best]) {
            best = i;
        }
    }
    best
}

fn neighbour_change(v: &[f64], i: usize) -> f64 {
    let left = if i > 0 { (v[i] - v[i - 1]).abs() } else { 0.0 };
    let right = if i + 1 < v.len() { (v[i + 1] - v[i]).abs() } else { 0.0 };
    left.max(right)
}

/// Vertex of the parabola through samples i−1, i, i+1. Endpoint extrema are left
/// alone: bands are even about θ = 0 and θ = 1/2, so the vertex sits on the endpoint.
fn parabolic_vertex(t: &[f64], v: &[f64], i: usize) -> Option<(f64, f64)> {
    if i == 0 || i + 1 >= t.len() {
        return None;
    }
    let (x0, x1, x2) = (t[i - 1], t[i], t[i + 1]);
    let (y0, y1, y2) = (v[i - 1], v[i], v[i + 1]);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if a == 0.0 {
        return None;
    }
    let b = d01 - a * (x0 + x1);
    let xv = -b / (2.0 * a);
    if !(x0..=x2).contains(&xv) {
        return None;
    }
    let yv = y1 + (xv - x1) * (d01 + a * (xv - x0));
    Some((xv, yv))
}

/// Spectrum as a union of closed band intervals, touching bands merged.
pub fn spectrum_union(bands: &BandStructure) -> Vec<(f64, f64)> {
    spectrum_union_with_tolerance(bands, DEFAULT_TOUCH_TOLERANCE)
}

pub fn spectrum_union_with_tolerance(bands: &BandStructure, tolerance: f64) -> Vec<(f64, f64)> {
    let mut ranges: Vec<(f64, f64)> = (0..bands.n_bands()).map(|n| bands.band_range(n)).collect();
    ranges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in ranges {
        match out.last_mut() {
            Some(last) if lo <= last.1 + tolerance => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flat::lambda0;

    fn flat_table(grid: &ThetaGrid, n: usize) -> BandStructure {
        let bands = (0..n)
            .map(|k| grid.values().iter().map(|&t| lambda0(k, t)).collect())
            .collect();
        BandStructure::from_rows(grid.clone(), 0.0, SpectralGrid::default(), String::new(), bands).unwrap()
    }

    #[test]
    fn grids() {
        let u = ThetaGrid::uniform(9).unwrap();
        assert_eq!(u.values()[0], 0.0);
        assert_eq!(u.values()[8], 0.5);
        assert_eq!(u.values()[4], 0.25);
        let c = ThetaGrid::chebyshev(65).unwrap();
        assert_eq!(c.values()[0], 0.0);
        assert_eq!(c.values()[64], 0.5);
        assert!(c.values().windows(2).all(|w| w[0] < w[1]));
        assert!(c.values()[1] < u.values()[1] / 8.0);
        assert!(ThetaGrid::uniform(8).is_err());
        assert!(ThetaGrid::from_values(vec![0.0, 0.1, 0.1, 0.2, 0.25, 0.3, 0.35, 0.4, 0.5]).is_err());
        assert!(ThetaGrid::from_values(vec![0.0, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45]).is_err());
    }

    #[test]
    fn flat_gaps_close() {
        let g = ThetaGrid::uniform(17).unwrap();
        let b = flat_table(&g, 6);
        for n in 0..5 {
            let r = detect_gap(&b, n).unwrap();
            assert_eq!(r.width, 0.0, "pair {n}");
        }
        assert!(detect_gap(&b, 5).is_err());
        let u = spectrum_union(&b);
        assert_eq!(u.len(), 1);
        assert_eq!(u[0].0, 0.0);
    }

    #[test]
    fn clamps_overlap() {
        let g = ThetaGrid::uniform(9).unwrap();
        let rows = vec![
            (0..9).map(|i| i as f64 * 0.1).collect::<Vec<_>>(),
            (0..9).map(|i| 0.5 + i as f64 * 0.1).collect::<Vec<_>>(),
        ];
        let b = BandStructure::from_rows(g.clone(), 0.0, SpectralGrid::default(), String::new(), rows).unwrap();
        let r = detect_gap(&b, 0).unwrap();
        assert_eq!(r.width, 0.0);
        assert!((r.lower_max - 0.8).abs() < 1e-15);
        assert_eq!(r.upper_min, 0.5);
        assert_eq!(spectrum_union(&b), vec![(0.0, 1.3)]);

        let rows = vec![vec![0.0; 9], vec![1.0; 9]];
        let b = BandStructure::from_rows(g, 0.0, SpectralGrid::default(), String::new(), rows).unwrap();
        let r = detect_gap(&b, 0).unwrap();
        assert_eq!(r.width, 1.0);
        assert_eq!(r.center, 0.5);
        assert_eq!(spectrum_union(&b), vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn one_band_union() {
        let g = ThetaGrid::uniform(9).unwrap();
        let b = flat_table(&g, 1);
        assert_eq!(spectrum_union(&b).len(), 1);
    }

    #[test]
    fn parabolic_refinement_recovers_interior_peak() {
        let g = ThetaGrid::uniform(9).unwrap();
        let peak = 0.2;
        let lower: Vec<f64> = g.values().iter().map(|t| 1.0 - (t - peak) * (t - peak)).collect();
        let upper = vec![2.0; 9];
        let b = BandStructure::from_rows(g, 0.0, SpectralGrid::default(), String::new(), vec![lower, upper]).unwrap();
        let coarse = detect_gap(&b, 0).unwrap();
        let fine = detect_gap_with(&b, 0, GapOptions { parabolic: true }).unwrap();
        assert!(coarse.lower_max < 1.0);
        assert!((fine.lower_max - 1.0).abs() < 1e-14);
        assert!((fine.argmax_theta - peak).abs() < 1e-14);
        assert!(1.0 - coarse.lower_max <= coarse.resolution_bound);
    }
}
