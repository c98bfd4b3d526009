//! Point SAR, cube-averaged SAR by the 3D trapezoidal rule and the
//! exhaustive peak spatial-average search.

use serde::{Deserialize, Serialize};

use crate::em::MediumProperties;
use crate::error::{Error, Result};
use crate::grid::{FieldGrid, GridSpec};
use crate::parallel;
use crate::source::{self, Scenario};

/// Averaging mass of the cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mass {
    #[serde(rename = "1g")]
    OneGram,
    #[serde(rename = "10g")]
    TenGrams,
}

impl Mass {
    pub const ALL: [Mass; 2] = [Mass::OneGram, Mass::TenGrams];

    /// Side of the cube holding this mass of liquid at 1000 kg/m^3.
    pub fn side(self) -> f64 {
        match self {
            Mass::OneGram => 0.010,
            Mass::TenGrams => 0.0215,
        }
    }

    pub fn grams(self) -> f64 {
        match self {
            Mass::OneGram => 1.0,
            Mass::TenGrams => 10.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mass::OneGram => "1g",
            Mass::TenGrams => "10g",
        }
    }
}

impl std::str::FromStr for Mass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1g" | "1" => Ok(Mass::OneGram),
            "10g" | "10" => Ok(Mass::TenGrams),
            _ => Err(Error::InvalidArgument(format!("unknown mass {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SarCube {
    pub side: f64,
    pub corner: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SarEstimate {
    pub value: f64,
    pub cube: SarCube,
    pub mass: Mass,
}

pub fn pointwise_sar(e_rms_sq: f64, sigma: f64, rho: f64) -> f64 {
    e_rms_sq * sigma / rho
}

/// Relative tolerance for treating a length as a whole number of grid steps.
const ALIGN_TOL: f64 = 1e-6;

fn steps(length: f64, spacing: f64) -> Option<usize> {
    let v = length / spacing;
    let n = v.round();
    ((v - n).abs() <= ALIGN_TOL && n >= 0.0).then_some(n as usize)
}

/// Trapezoid weights `1/2, 1, ..., 1, 1/2` over `n` intervals.
fn trapezoid_weights(n: usize) -> Vec<f64> {
    let mut w = vec![1.0; n + 1];
    w[0] = 0.5;
    w[n] = 0.5;
    w
}

/// Volume-averaged SAR over a node-aligned cube.
pub fn average_sar_cube(grid: &FieldGrid, cube: &SarCube, medium: &MediumProperties) -> Result<f64> {
    let spec = &grid.spec;
    let mut start = [0usize; 3];
    let mut n = [0usize; 3];
    for a in 0..3 {
        let s = steps(cube.corner[a] - spec.origin[a], spec.spacing[a])
            .ok_or_else(|| Error::CubeNotAligned(format!("corner on axis {a}")))?;
        let len = steps(cube.side, spec.spacing[a])
            .filter(|&l| l > 0)
            .ok_or_else(|| Error::CubeNotAligned(format!("side on axis {a}")))?;
        if s + len >= spec.dims[a] {
            return Err(Error::CubeOutOfBounds(format!("axis {a}")));
        }
        start[a] = s;
        n[a] = len;
    }
    let intensity = grid.intensity();
    let w: [Vec<f64>; 3] = n.map(trapezoid_weights);
    let mut sum = 0.0;
    for (kz, wz) in w[2].iter().enumerate() {
        for (ky, wy) in w[1].iter().enumerate() {
            let mut row = 0.0;
            for (kx, wx) in w[0].iter().enumerate() {
                row += wx * intensity[spec.index(start[0] + kx, start[1] + ky, start[2] + kz)];
            }
            sum += wz * wy * row;
        }
    }
    let mean = sum / (n[0] * n[1] * n[2]) as f64;
    Ok(pointwise_sar(mean, medium.conductivity(), medium.density()))
}

/// Weighted sliding sums along one axis of a 3D array (x fastest).
///
/// Output has `dims[axis] - (w.len() - 1)` nodes along `axis`.
fn window_axis(data: &[f64], dims: [usize; 3], axis: usize, w: &[f64]) -> (Vec<f64>, [usize; 3]) {
    let m = w.len();
    let mut out_dims = dims;
    out_dims[axis] = dims[axis] + 1 - m;
    let [nx, ny, _] = dims;
    let [ox, oy, oz] = out_dims;
    let stride = match axis {
        0 => 1,
        1 => nx,
        _ => nx * ny,
    };
    let planes = parallel::map_range(oz, |iz| {
        let mut plane = vec![0.0; ox * oy];
        for iy in 0..oy {
            for ix in 0..ox {
                let base = ix + nx * (iy + ny * iz);
                let mut s = 0.0;
                for (j, wj) in w.iter().enumerate() {
                    s += wj * data[base + j * stride];
                }
                plane[ix + ox * iy] = s;
            }
        }
        plane
    });
    (planes.concat(), out_dims)
}

/// Cube size in grid steps for the measuring-system paths: the side rounded
/// to the nearest whole number of steps, halves rounding up.
pub fn snapped_steps(side: f64, spacing: f64) -> usize {
    // the nudge keeps 21.5 mm / 1 mm (21.4999... in binary) on the upper side
    ((side / spacing + 1e-9).round() as usize).max(1)
}

/// Peak over every cube of `n` steps per axis; ties go to the smallest
/// `(ix, iy, iz)` in lexicographic order.
pub fn peak_average_in_steps(
    spec: &GridSpec,
    intensity: &[f64],
    n: [usize; 3],
    medium: &MediumProperties,
    mass: Mass,
) -> Result<SarEstimate> {
    for a in 0..3 {
        if spec.dims[a] < n[a] + 1 {
            return Err(Error::GridTooSmall { axis: a });
        }
    }
    if intensity.len() != spec.len() {
        return Err(Error::InvalidGrid("intensity length does not match grid".into()));
    }
    let (sx, dx) = window_axis(intensity, spec.dims, 0, &trapezoid_weights(n[0]));
    let (sy, dy) = window_axis(&sx, dx, 1, &trapezoid_weights(n[1]));
    drop(sx);
    let (sz, d) = window_axis(&sy, dy, 2, &trapezoid_weights(n[2]));
    drop(sy);

    let mut best = (f64::NEG_INFINITY, [0usize; 3]);
    for ix in 0..d[0] {
        for iy in 0..d[1] {
            for iz in 0..d[2] {
                let v = sz[ix + d[0] * (iy + d[1] * iz)];
                if v > best.0 {
                    best = (v, [ix, iy, iz]);
                }
            }
        }
    }
    let mean = best.0 / (n[0] * n[1] * n[2]) as f64;
    let c = best.1;
    Ok(SarEstimate {
        value: pointwise_sar(mean, medium.conductivity(), medium.density()),
        cube: SarCube {
            side: n[0] as f64 * spec.spacing[0],
            corner: spec.position(c[0], c[1], c[2]),
        },
        mass,
    })
}

/// Peak spatial-average SAR with the cube side snapped to the nearest node count.
pub fn peak_from_intensity(
    spec: &GridSpec,
    intensity: &[f64],
    mass: Mass,
    medium: &MediumProperties,
) -> Result<SarEstimate> {
    let n = [0, 1, 2].map(|a| snapped_steps(mass.side(), spec.spacing[a]));
    peak_average_in_steps(spec, intensity, n, medium, mass)
}

pub fn peak_spatial_average_sar(grid: &FieldGrid, mass: Mass, medium: &MediumProperties) -> Result<SarEstimate> {
    peak_from_intensity(&grid.spec, &grid.intensity(), mass, medium)
}

/// Grid spacing for a cube of `mass` at a requested resolution: the request
/// divided by the smallest factor (at most 8) that puts the side on whole steps.
pub fn spacing_for(mass: Mass, resolution: f64) -> f64 {
    resolution / refinement_for(mass.side(), resolution) as f64
}

fn refinement_for(side: f64, resolution: f64) -> usize {
    (1..=8)
        .find(|&j| steps(side, resolution / j as f64).is_some())
        .unwrap_or(1)
}

fn check_resolution(resolution: f64) -> Result<()> {
    if !(resolution > 0.0 && resolution <= 2e-3 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "oracle resolution {resolution} m must lie in (0, 2 mm]"
        )));
    }
    Ok(())
}

/// Ground-truth 1 g peak from the analytic field on the volume grid at `resolution`.
pub fn oracle_peak_sar_1g(scenario: &Scenario, resolution: f64) -> Result<SarEstimate> {
    oracle_peak(scenario, resolution, Mass::OneGram)
}

/// Ground-truth peak for one mass. The grid is refined internally until the
/// cube side is a whole number of steps (21.5 mm on a 0.5 mm lattice).
pub fn oracle_peak(scenario: &Scenario, resolution: f64, mass: Mass) -> Result<SarEstimate> {
    check_resolution(resolution)?;
    let h = spacing_for(mass, resolution);
    let spec = scenario.geometry.volume_grid(h)?;
    let intensity = source::intensity_on_grid(scenario, spec)?;
    let n = [0, 1, 2].map(|a| steps(mass.side(), spec.spacing[a]).unwrap_or_else(|| snapped_steps(mass.side(), h)));
    peak_average_in_steps(&spec, &intensity, n, &scenario.medium, mass)
}

/// Ground-truth 1 g and 10 g peaks.
pub fn oracle_peak_sar(scenario: &Scenario, resolution: f64) -> Result<(SarEstimate, SarEstimate)> {
    Ok((
        oracle_peak(scenario, resolution, Mass::OneGram)?,
        oracle_peak(scenario, resolution, Mass::TenGrams)?,
    ))
}
