//! The single-probe scanning system: a coarse area scan, zoom scans around
//! local maxima, amplitude-only sampling, interpolation to a fine grid and
//! peak SAR search on each zoom block.
//!
//! Scan parameters follow the usual compliance table with `f` in GHz and
//! lengths in mm; frequencies at or above 3 GHz take the high-frequency rules.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::em::{skin_depth, MediumProperties};
use crate::error::{Error, Result};
use crate::grid::{FieldGrid, GridSpec};
use crate::interp::{resample_separable, Method};
use crate::parallel;
use crate::sar::{self, Mass, SarEstimate};
use crate::source::{FieldSource, Geometry};

/// Default resolution of the refined zoom grid.
pub const REFINED_RESOLUTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub area_spacing: f64,
    pub probe_surface_gap: f64,
    pub zoom_spacing: f64,
    pub zoom_size: f64,
    pub frequency: f64,
    /// Plane-wave skin depth of the liquid, `inf` if lossless.
    pub skin_depth: f64,
}

/// Coarsest settings the compliance rules allow for this medium.
pub fn scan_config(medium: &MediumProperties) -> Result<ScanConfig> {
    let f_ghz = medium.frequency() / 1e9;
    let delta = skin_depth(medium.wavenumber()).unwrap_or(f64::INFINITY);
    let high = f_ghz >= 3.0;
    if high && !delta.is_finite() {
        return Err(Error::InfiniteSkinDepth);
    }
    let mm = 1e-3;
    Ok(ScanConfig {
        area_spacing: if high { 60.0 / f_ghz * mm } else { 20.0 * mm },
        probe_surface_gap: if high { delta * std::f64::consts::LN_2 / 2.0 } else { 5.0 * mm },
        zoom_spacing: (24.0 / f_ghz).min(8.0) * mm,
        zoom_size: if high { 22.0 * mm } else { 30.0 * mm },
        frequency: medium.frequency(),
        skin_depth: delta,
    })
}

impl ScanConfig {
    /// Checks every rule of the compliance table (tolerance 1e-12 m).
    pub fn is_compliant(&self) -> bool {
        let f = self.frequency / 1e9;
        let mm = 1e-3;
        let tol = 1e-12;
        let (area_max, gap_max, size_min) = if f < 3.0 {
            (20.0 * mm, 5.0 * mm, 30.0 * mm)
        } else {
            (60.0 / f * mm, self.skin_depth * std::f64::consts::LN_2 / 2.0, 22.0 * mm)
        };
        self.area_spacing <= area_max + tol
            && self.probe_surface_gap <= gap_max + tol
            && self.zoom_spacing <= (24.0 / f).min(8.0) * mm + tol
            && self.zoom_size >= size_min - tol
            && self.area_spacing > 0.0
            && self.probe_surface_gap > 0.0
            && self.zoom_spacing > 0.0
    }
}

/// Amplitude samples on a rectilinear block (x fastest, axes ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub axes: [Vec<f64>; 3],
    pub amplitudes: Vec<f64>,
}

impl ScanResult {
    pub fn dims(&self) -> [usize; 3] {
        [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()]
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        block_points(&self.axes)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "x,y,z,amplitude")?;
        for (p, a) in self.positions().iter().zip(&self.amplitudes) {
            writeln!(f, "{},{},{},{}", p[0], p[1], p[2], a)?;
        }
        f.flush()?;
        Ok(())
    }
}

fn block_points(axes: &[Vec<f64>; 3]) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(axes.iter().map(Vec::len).product());
    for &z in &axes[2] {
        for &y in &axes[1] {
            for &x in &axes[0] {
                out.push([x, y, z]);
            }
        }
    }
    out
}

/// `|E|` of the source at every node of the block.
fn sample_block(source: &dyn FieldSource, axes: [Vec<f64>; 3]) -> Result<ScanResult> {
    let pts = block_points(&axes);
    let amplitudes = parallel::try_map_range(pts.len(), |i| source.field_at(pts[i]).map(|e| e.norm()))?;
    Ok(ScanResult { axes, amplitudes })
}

/// Nodes `i * step` with `|i * step| <= extent`.
fn centred_axis(step: f64, extent: f64) -> Vec<f64> {
    let n = (extent / step + 1e-9).floor() as i64;
    (-n..=n).map(|i| i as f64 * step).collect()
}

/// Area scan on the plane `surface - gap` and its local maxima.
pub fn area_scan(source: &dyn FieldSource, geometry: &Geometry, config: &ScanConfig) -> Result<(ScanResult, Vec<[f64; 2]>)> {
    let axis = centred_axis(config.area_spacing, geometry.lateral_extent);
    let z = geometry.surface_z - config.probe_surface_gap;
    let scan = sample_block(source, [axis.clone(), axis, vec![z]])?;
    let [nx, ny, _] = scan.dims();
    let maxima = local_maxima(&scan.amplitudes, nx, ny)
        .into_iter()
        .map(|i| [scan.axes[0][i % nx], scan.axes[1][i / nx]])
        .collect();
    Ok((scan, maxima))
}

/// Indices of 2D local maxima (8-neighbourhood). A plateau of equal values
/// counts once, represented by its smallest index, when every node bordering
/// it is strictly lower.
pub fn local_maxima(v: &[f64], nx: usize, ny: usize) -> Vec<usize> {
    let mut seen = vec![false; v.len()];
    let mut out = Vec::new();
    let neighbours = |i: usize| {
        let (x, y) = ((i % nx) as i64, (i / nx) as i64);
        (-1..=1)
            .flat_map(move |dy| (-1..=1).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| dx != 0 || dy != 0)
            .filter_map(move |(dx, dy)| {
                let (a, b) = (x + dx, y + dy);
                (a >= 0 && b >= 0 && a < nx as i64 && b < ny as i64).then(|| a as usize + nx * b as usize)
            })
    };
    for start in 0..v.len() {
        if seen[start] {
            continue;
        }
        let level = v[start];
        let mut stack = vec![start];
        seen[start] = true;
        let mut members = vec![start];
        let mut is_max = true;
        while let Some(i) = stack.pop() {
            for j in neighbours(i) {
                if v[j] == level {
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                        members.push(j);
                    }
                } else if v[j] > level {
                    is_max = false;
                }
            }
        }
        if is_max {
            out.push(*members.iter().min().expect("non-empty plateau"));
        }
    }
    out.sort_unstable();
    out
}

/// Zoom block around `center`: lateral nodes every `zoom_spacing` over at
/// least `zoom_size`, planes from `surface - gap` downward at the same
/// spacing, clipped to the liquid.
pub fn zoom_axes(geometry: &Geometry, center: [f64; 2], config: &ScanConfig) -> Result<[Vec<f64>; 3]> {
    let e = geometry.lateral_extent;
    if center[0].abs() > e + 1e-12 || center[1].abs() > e + 1e-12 {
        return Err(Error::CenterOutsideAperture(center[0], center[1]));
    }
    let intervals = (config.zoom_size / config.zoom_spacing - 1e-9).ceil() as usize;
    let half = intervals as f64 * config.zoom_spacing / 2.0;
    let lateral = |c: f64| -> Vec<f64> {
        (0..=intervals)
            .map(|i| c - half + i as f64 * config.zoom_spacing)
            .filter(|x| x.abs() <= e + 1e-12)
            .collect()
    };
    let top = geometry.surface_z - config.probe_surface_gap;
    let bottom = geometry.volume_z_range[0];
    let mut z: Vec<f64> = (0..=intervals)
        .map(|i| top - i as f64 * config.zoom_spacing)
        .filter(|&z| z >= bottom - 1e-12)
        .collect();
    z.reverse();
    Ok([lateral(center[0]), lateral(center[1]), z])
}

pub fn zoom_scan(source: &dyn FieldSource, geometry: &Geometry, center: [f64; 2], config: &ScanConfig) -> Result<ScanResult> {
    sample_block(source, zoom_axes(geometry, center, config)?)
}

/// Refines a zoom block onto a grid of step `resolution` covering the
/// measured lateral extent and every depth from the lowest plane up to the
/// phantom surface. Amplitudes above the first plane are extrapolated.
pub fn interpolate_refine(scan: &ScanResult, method: Method, resolution: f64, surface_z: f64) -> Result<FieldGrid> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidArgument("resolution must be > 0".into()));
    }
    let dims = scan.dims();
    for a in 0..3 {
        if dims[a] < method.min_nodes() {
            return Err(Error::TooFewNodes {
                axis: a,
                needed: method.min_nodes(),
                have: dims[a],
            });
        }
    }
    let lo = [scan.axes[0][0], scan.axes[1][0], scan.axes[2][0]];
    let hi = [scan.axes[0][dims[0] - 1], scan.axes[1][dims[1] - 1], surface_z.max(scan.axes[2][dims[2] - 1])];
    // the z axis is anchored at the surface so every refined plane sits a
    // whole number of steps below it
    let nz = ((hi[2] - lo[2]) / resolution + 1e-9).floor() as usize + 1;
    let z0 = hi[2] - (nz - 1) as f64 * resolution;
    let spec = GridSpec::new(
        [lo[0], lo[1], z0],
        [resolution; 3],
        [
            ((hi[0] - lo[0]) / resolution + 1e-9).floor() as usize + 1,
            ((hi[1] - lo[1]) / resolution + 1e-9).floor() as usize + 1,
            nz,
        ],
    )?;
    let dst = [spec.axis(0), spec.axis(1), spec.axis(2)];
    let mut values = resample_separable(method, &scan.axes, &scan.amplitudes, &dst)?;
    for v in &mut values {
        *v = v.max(0.0);
    }
    FieldGrid::amplitude(spec, values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraditionalResult {
    pub config: ScanConfig,
    pub area: ScanResult,
    pub maxima: Vec<[f64; 2]>,
    pub zooms: Vec<ScanResult>,
    pub sar_1g: SarEstimate,
    pub sar_10g: SarEstimate,
}

/// Area scan, a zoom scan at every local maximum, refinement and the largest
/// peak over all zoom blocks (per mass). Zoom blocks too small for a cube
/// are skipped for that mass.
pub fn traditional_estimate(
    source: &dyn FieldSource,
    geometry: &Geometry,
    medium: &MediumProperties,
    method: Method,
) -> Result<TraditionalResult> {
    traditional_estimate_at(source, geometry, medium, method, REFINED_RESOLUTION)
}

pub fn traditional_estimate_at(
    source: &dyn FieldSource,
    geometry: &Geometry,
    medium: &MediumProperties,
    method: Method,
    resolution: f64,
) -> Result<TraditionalResult> {
    let config = scan_config(medium)?;
    let (area, maxima) = area_scan(source, geometry, &config)?;
    if maxima.is_empty() || area.amplitudes.iter().all(|&a| a == 0.0) {
        return Err(Error::NoLocalMaxima);
    }
    let mut best: [Option<SarEstimate>; 2] = [None, None];
    let mut zooms = Vec::with_capacity(maxima.len());
    for &c in &maxima {
        let zoom = zoom_scan(source, geometry, c, &config)?;
        let mut fine: Option<FieldGrid> = None;
        for (slot, mass) in best.iter_mut().zip(Mass::ALL) {
            let h = sar::spacing_for(mass, resolution);
            if fine.as_ref().is_none_or(|g| g.spec.spacing[0] != h) {
                fine = match interpolate_refine(&zoom, method, h, geometry.surface_z) {
                    Ok(g) => Some(g),
                    Err(Error::TooFewNodes { .. }) => break,
                    Err(e) => return Err(e),
                };
            }
            let fine = fine.as_ref().expect("refined grid");
            match sar::peak_spatial_average_sar(fine, mass, medium) {
                Ok(est) => {
                    if slot.is_none_or(|b| est.value > b.value) {
                        *slot = Some(est);
                    }
                }
                Err(Error::GridTooSmall { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        zooms.push(zoom);
    }
    let [Some(sar_1g), Some(sar_10g)] = best else {
        return Err(Error::NoLocalMaxima);
    };
    Ok(TraditionalResult {
        config,
        area,
        maxima,
        zooms,
        sar_1g,
        sar_10g,
    })
}
