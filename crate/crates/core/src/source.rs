//! Ground-truth field of a planar dipole array radiating into the liquid.
//!
//! Each dipole with moment `p` at `d` contributes
//!
//! ```text
//! E(r) = (k^2 I + grad grad) G_k(r - d) p,     G_k(R) = exp(ik|R|) / (4 pi |R|),
//! ```
//!
//! evaluated in closed form:
//! `E = G [ (k^2 + ik/R - 1/R^2) p + (-k^2 - 3ik/R + 3/R^2) (R^.p) R^ ]`.
//!
//! Coordinate frame: the liquid fills `0 <= z <= surface_z`, the dipole plane
//! sits `device_offset` above the inner phantom surface and fields decay
//! toward decreasing `z`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::em::{complex_wavenumber, MediumProperties, Vec3C, Wavenumber};
use crate::error::{Error, Result};
use crate::fft2::{next_fast_len, Fft2};
use crate::grid::{FieldGrid, GridSpec};
use crate::parallel;
use crate::rng::{derive_seed, stream};
use crate::sar;

/// Distance below which an observation point is treated as coincident with a dipole.
pub const SINGULARITY_GUARD: f64 = 1e-9;
pub const DIPOLES_PER_SIDE: usize = 80;
pub const DIPOLE_PITCH: f64 = 2.5e-3;
/// Liquid density, kg/m^3.
pub const LIQUID_DENSITY: f64 = 1000.0;
/// Grid resolution used to normalise every scenario to unit 1 g peak SAR.
pub const NORMALIZATION_RESOLUTION: f64 = 1e-3;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dipole {
    pub position: [f64; 3],
    pub moment: [Complex64; 3],
}

impl Dipole {
    pub fn is_silent(&self) -> bool {
        self.moment.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }
}

/// Fixed layout of phantom, device and probe array (lengths in metres).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub surface_z: f64,
    pub device_offset: f64,
    pub measurement_plane_z: f64,
    pub probe_pitch: f64,
    pub probes_per_side: usize,
    pub lateral_extent: f64,
    pub volume_z_range: [f64; 2],
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            surface_z: 0.030,
            device_offset: 0.005,
            measurement_plane_z: 0.019_25,
            probe_pitch: 0.007,
            probes_per_side: 29,
            lateral_extent: 0.100,
            volume_z_range: [0.0, 0.030],
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let [z0, z1] = self.volume_z_range;
        if !(z0 < z1) {
            return Err(Error::InvalidArgument("volume z range is empty".into()));
        }
        if !(self.measurement_plane_z >= z0 && self.measurement_plane_z <= z1) {
            return Err(Error::InvalidArgument("measurement plane outside the volume".into()));
        }
        if self.probes_per_side % 2 == 0 {
            return Err(Error::EvenCounts(self.probes_per_side, self.probes_per_side));
        }
        if !(self.probe_pitch > 0.0 && self.lateral_extent > 0.0 && self.device_offset > 0.0) {
            return Err(Error::InvalidArgument("geometry lengths must be positive".into()));
        }
        Ok(())
    }

    pub fn dipole_plane_z(&self) -> f64 {
        self.surface_z + self.device_offset
    }

    /// Probe coordinate along one axis: `n * pitch` for centred index `n`.
    pub fn probe_coords(&self) -> Vec<f64> {
        let half = (self.probes_per_side as i64 - 1) / 2;
        (-half..=half).map(|n| n as f64 * self.probe_pitch).collect()
    }

    /// Probe positions on the measurement plane, x fastest.
    pub fn probe_positions(&self) -> Vec<[f64; 3]> {
        let c = self.probe_coords();
        let mut out = Vec::with_capacity(c.len() * c.len());
        for &y in &c {
            for &x in &c {
                out.push([x, y, self.measurement_plane_z]);
            }
        }
        out
    }

    /// Grid covering the lateral aperture and the liquid depth at `resolution`.
    pub fn volume_grid(&self, resolution: f64) -> Result<GridSpec> {
        let e = self.lateral_extent;
        GridSpec::spanning(
            [-e, -e, self.volume_z_range[0]],
            [e, e, self.volume_z_range[1]],
            resolution,
        )
    }
}

/// Anything that can report the true complex field at a point in the liquid.
pub trait FieldSource: Sync {
    fn field_at(&self, r: [f64; 3]) -> Result<Vec3C>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Row of the reference-case table, `None` for hand-built scenarios.
    pub case_index: Option<usize>,
    pub seed: u64,
    pub medium: MediumProperties,
    pub dipoles: Vec<Dipole>,
    pub amplitude_scale: f64,
    pub geometry: Geometry,
}

impl Scenario {
    pub fn custom(medium: MediumProperties, dipoles: Vec<Dipole>, geometry: Geometry) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            case_index: None,
            seed: 0,
            medium,
            dipoles,
            amplitude_scale: 1.0,
            geometry,
        })
    }

    pub fn wavenumber(&self) -> Wavenumber {
        complex_wavenumber(&self.medium)
    }

    pub fn with_amplitude_scale(&self, scale: f64) -> Self {
        Self {
            amplitude_scale: scale,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(s)?;
        sc.geometry.validate()?;
        if !(sc.amplitude_scale > 0.0) {
            return Err(Error::InvalidArgument("amplitude_scale must be > 0".into()));
        }
        Ok(sc)
    }
}

impl FieldSource for Scenario {
    fn field_at(&self, r: [f64; 3]) -> Result<Vec3C> {
        dipole_field(r, self)
    }
}

/// Dyadic Green's operator applied to one moment, for separation `d = r - source`.
#[inline]
fn dyadic_apply(k: Complex64, k2: Complex64, d: [f64; 3], p: &[Complex64; 3]) -> Vec3C {
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let r = r2.sqrt();
    let inv_r = 1.0 / r;
    let ikr = Complex64::new(-k.im * r, k.re * r);
    let g = ikr.exp() * (inv_r / (4.0 * PI));
    let ik_over_r = Complex64::new(-k.im, k.re) * inv_r;
    let inv_r2 = inv_r * inv_r;
    let a = k2 + ik_over_r - inv_r2;
    let b = -k2 - ik_over_r * 3.0 + 3.0 * inv_r2;
    let u = [d[0] * inv_r, d[1] * inv_r, d[2] * inv_r];
    let proj = p[0] * u[0] + p[1] * u[1] + p[2] * u[2];
    let bp = b * proj;
    Vec3C::new(
        g * (a * p[0] + bp * u[0]),
        g * (a * p[1] + bp * u[1]),
        g * (a * p[2] + bp * u[2]),
    )
}

/// The six independent entries `xx yy zz xy xz yz` of the dyadic kernel.
#[inline]
fn dyadic_tensor(k: Complex64, k2: Complex64, d: [f64; 3]) -> [Complex64; 6] {
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let inv_r = 1.0 / r;
    let ikr = Complex64::new(-k.im * r, k.re * r);
    let g = ikr.exp() * (inv_r / (4.0 * PI));
    let ik_over_r = Complex64::new(-k.im, k.re) * inv_r;
    let inv_r2 = inv_r * inv_r;
    let ga = g * (k2 + ik_over_r - inv_r2);
    let gb = g * (-k2 - ik_over_r * 3.0 + 3.0 * inv_r2);
    let u = [d[0] * inv_r, d[1] * inv_r, d[2] * inv_r];
    [
        ga + gb * (u[0] * u[0]),
        ga + gb * (u[1] * u[1]),
        ga + gb * (u[2] * u[2]),
        gb * (u[0] * u[1]),
        gb * (u[0] * u[2]),
        gb * (u[1] * u[2]),
    ]
}

/// Unscaled field of `dipoles` at `r` in a medium with wavenumber `k`.
pub fn field_from_dipoles(r: [f64; 3], dipoles: &[Dipole], k: Wavenumber) -> Result<Vec3C> {
    let k = k.value();
    let k2 = k * k;
    let mut e = Vec3C::ZERO;
    for dp in dipoles {
        let d = [
            r[0] - dp.position[0],
            r[1] - dp.position[1],
            r[2] - dp.position[2],
        ];
        let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if dist < SINGULARITY_GUARD {
            return Err(Error::Singularity { distance: dist });
        }
        if dp.is_silent() {
            continue;
        }
        e += dyadic_apply(k, k2, d, &dp.moment);
    }
    Ok(e)
}

/// True field at `r`, including the scenario's amplitude scale.
pub fn dipole_field(r: [f64; 3], scenario: &Scenario) -> Result<Vec3C> {
    let e = field_from_dipoles(r, &scenario.dipoles, scenario.wavenumber())?;
    Ok(e * scenario.amplitude_scale)
}

/// Regular dipole lattice, x fastest, recovered from a dipole list.
#[derive(Debug, Clone, Copy)]
struct Lattice {
    origin: [f64; 2],
    pitch: [f64; 2],
    counts: [usize; 2],
    z: f64,
}

impl Lattice {
    fn detect(dipoles: &[Dipole]) -> Option<Self> {
        let n = dipoles.len();
        if n < 4 {
            return None;
        }
        let p0 = dipoles[0].position;
        let nx = dipoles.iter().take_while(|d| d.position[1] == p0[1]).count();
        if nx < 2 || n % nx != 0 || n / nx < 2 {
            return None;
        }
        let ny = n / nx;
        let pitch = [
            dipoles[1].position[0] - p0[0],
            dipoles[nx].position[1] - p0[1],
        ];
        if !(pitch[0] > 0.0 && pitch[1] > 0.0) {
            return None;
        }
        let tol = 1e-12;
        for j in 0..ny {
            for i in 0..nx {
                let p = dipoles[i + nx * j].position;
                if (p[0] - (p0[0] + i as f64 * pitch[0])).abs() > tol
                    || (p[1] - (p0[1] + j as f64 * pitch[1])).abs() > tol
                    || (p[2] - p0[2]).abs() > tol
                {
                    return None;
                }
            }
        }
        Some(Self {
            origin: [p0[0], p0[1]],
            pitch,
            counts: [nx, ny],
            z: p0[2],
        })
    }
}

/// Smallest `s` such that `s * pitch` is an integer multiple `l` of `step`.
fn commensurate(pitch: f64, step: f64) -> Option<(usize, usize)> {
    (1..=16).find_map(|s| {
        let v = s as f64 * pitch / step;
        let l = v.round();
        ((v - l).abs() < 1e-9 * v.max(1.0) && l >= 1.0).then_some((s, l as usize))
    })
}

/// Plane-by-plane evaluator: exact discrete convolution via FFT when the
/// dipoles form a lattice commensurate with the grid, direct sums otherwise.
struct PlaneEvaluator<'a> {
    dipoles: &'a [Dipole],
    k: Wavenumber,
    spec: GridSpec,
    conv: Option<LatticeConvolution>,
}

struct LatticeConvolution {
    lattice: Lattice,
    sub: [usize; 2],
    stride: [usize; 2],
    fft: Fft2,
    /// Per residue class: transformed moment arrays (y-fastest layout).
    moment_hats: Vec<[Vec<Complex64>; 3]>,
}

impl<'a> PlaneEvaluator<'a> {
    fn new(dipoles: &'a [Dipole], k: Wavenumber, spec: GridSpec) -> Self {
        let conv = Lattice::detect(dipoles).and_then(|lat| LatticeConvolution::new(dipoles, lat, &spec));
        Self { dipoles, k, spec, conv }
    }

    fn plane(&self, z: f64) -> Result<Vec<Vec3C>> {
        match &self.conv {
            Some(c) if (z - c.lattice.z).abs() > 1e-6 => Ok(c.plane(self.k, &self.spec, z)),
            _ => self.direct_plane(z),
        }
    }

    fn direct_plane(&self, z: f64) -> Result<Vec<Vec3C>> {
        let [nx, ny, _] = self.spec.dims;
        let active: Vec<Dipole> = self.dipoles.to_vec();
        let mut out = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let r = [self.spec.coord(0, ix), self.spec.coord(1, iy), z];
                out.push(field_from_dipoles(r, &active, self.k)?);
            }
        }
        Ok(out)
    }
}

impl LatticeConvolution {
    fn new(dipoles: &[Dipole], lattice: Lattice, spec: &GridSpec) -> Option<Self> {
        let (sx, lx) = commensurate(lattice.pitch[0], spec.spacing[0])?;
        let (sy, ly) = commensurate(lattice.pitch[1], spec.spacing[1])?;
        let mmax_x = lattice.counts[0].div_ceil(sx);
        let mmax_y = lattice.counts[1].div_ceil(sy);
        let px = next_fast_len(spec.dims[0] + lx * (mmax_x - 1));
        let py = next_fast_len(spec.dims[1] + ly * (mmax_y - 1));
        let fft = Fft2::new(px, py);
        let mut scratch = Vec::new();
        let mut moment_hats = Vec::with_capacity(sx * sy);
        for ry in 0..sy {
            for rx in 0..sx {
                let mut arrays: [Vec<Complex64>; 3] = std::array::from_fn(|_| vec![ZERO; px * py]);
                let mut j = ry;
                let mut n = 0;
                while j < lattice.counts[1] {
                    let mut i = rx;
                    let mut m = 0;
                    while i < lattice.counts[0] {
                        let p = dipoles[i + lattice.counts[0] * j].moment;
                        let idx = lx * m + px * (ly * n);
                        for c in 0..3 {
                            arrays[c][idx] = p[c];
                        }
                        i += sx;
                        m += 1;
                    }
                    j += sy;
                    n += 1;
                }
                for a in arrays.iter_mut() {
                    fft.forward_transposed(a, &mut scratch);
                }
                moment_hats.push(arrays);
            }
        }
        Some(Self {
            lattice,
            sub: [sx, sy],
            stride: [lx, ly],
            fft,
            moment_hats,
        })
    }

    fn plane(&self, k: Wavenumber, spec: &GridSpec, z: f64) -> Vec<Vec3C> {
        let (px, py) = self.fft.dims();
        let [nx, ny, _] = spec.dims;
        let kv = k.value();
        let k2 = kv * kv;
        let dz = z - self.lattice.z;
        let mut acc: [Vec<Complex64>; 3] = std::array::from_fn(|_| vec![ZERO; px * py]);
        let mut kern: [Vec<Complex64>; 6] = std::array::from_fn(|_| vec![ZERO; px * py]);
        let mut scratch = Vec::new();
        let signed = |idx: usize, n: usize, p: usize| -> f64 {
            if idx < n {
                idx as f64
            } else {
                idx as f64 - p as f64
            }
        };
        let _ = self.stride;
        for ry in 0..self.sub[1] {
            for rx in 0..self.sub[0] {
                let ox = spec.origin[0] - (self.lattice.origin[0] + self.lattice.pitch[0] * rx as f64);
                let oy = spec.origin[1] - (self.lattice.origin[1] + self.lattice.pitch[1] * ry as f64);
                for ty in 0..py {
                    let dy = oy + signed(ty, ny, py) * spec.spacing[1];
                    for tx in 0..px {
                        let dx = ox + signed(tx, nx, px) * spec.spacing[0];
                        let t = dyadic_tensor(kv, k2, [dx, dy, dz]);
                        let idx = tx + px * ty;
                        for c in 0..6 {
                            kern[c][idx] = t[c];
                        }
                    }
                }
                for a in kern.iter_mut() {
                    self.fft.forward_transposed(a, &mut scratch);
                }
                let q = &self.moment_hats[rx + self.sub[0] * ry];
                for i in 0..px * py {
                    let [txx, tyy, tzz, txy, txz, tyz] = [
                        kern[0][i], kern[1][i], kern[2][i], kern[3][i], kern[4][i], kern[5][i],
                    ];
                    let (qx, qy, qz) = (q[0][i], q[1][i], q[2][i]);
                    acc[0][i] += txx * qx + txy * qy + txz * qz;
                    acc[1][i] += txy * qx + tyy * qy + tyz * qz;
                    acc[2][i] += txz * qx + tyz * qy + tzz * qz;
                }
            }
        }
        let norm = 1.0 / (px * py) as f64;
        for a in acc.iter_mut() {
            self.fft.inverse_transposed(a, &mut scratch);
        }
        let mut out = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let i = ix + px * iy;
                out.push(Vec3C::new(acc[0][i] * norm, acc[1][i] * norm, acc[2][i] * norm));
            }
        }
        out
    }
}

/// Complex field of the scenario on every node of `spec` (amplitude scale applied).
pub fn field_on_grid(scenario: &Scenario, spec: GridSpec) -> Result<FieldGrid> {
    let planes = planes_of(scenario, &scenario.dipoles, scenario.wavenumber(), spec, |p| p)?;
    let scale = scenario.amplitude_scale;
    let values = planes.into_iter().flatten().map(|e| e * scale).collect();
    FieldGrid::vector(spec, values)
}

/// `|E|^2` of the scenario on every node of `spec`, without storing the vectors.
pub fn intensity_on_grid(scenario: &Scenario, spec: GridSpec) -> Result<Vec<f64>> {
    let s2 = scenario.amplitude_scale * scenario.amplitude_scale;
    let planes = planes_of(scenario, &scenario.dipoles, scenario.wavenumber(), spec, |p| {
        p.iter().map(|e| e.norm_sqr() * s2).collect::<Vec<f64>>()
    })?;
    Ok(planes.into_iter().flatten().collect())
}

fn planes_of<T, F>(_scenario: &Scenario, dipoles: &[Dipole], k: Wavenumber, spec: GridSpec, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Vec<Vec3C>) -> T + Sync + Send,
{
    spec.validate()?;
    let eval = PlaneEvaluator::new(dipoles, k, spec);
    parallel::try_map_range(spec.dims[2], |iz| eval.plane(spec.coord(2, iz)).map(&f))
}

/// Evaluates the field at many points (amplitude scale applied).
pub fn field_at_points(scenario: &Scenario, points: &[[f64; 3]]) -> Result<Vec<Vec3C>> {
    field_at_points_with(&scenario.dipoles, scenario.wavenumber(), scenario.amplitude_scale, points)
}

/// Evaluates the field of `dipoles` in a medium with wavenumber `k` at many points.
pub fn field_at_points_with(
    dipoles: &[Dipole],
    k: Wavenumber,
    scale: f64,
    points: &[[f64; 3]],
) -> Result<Vec<Vec3C>> {
    let active: Vec<Dipole> = dipoles.iter().copied().filter(|d| !d.is_silent()).collect();
    let silent: Vec<Dipole> = dipoles.iter().copied().filter(|d| d.is_silent()).collect();
    parallel::try_map_range(points.len(), |i| {
        let r = points[i];
        for d in &silent {
            let dist = ((r[0] - d.position[0]).powi(2)
                + (r[1] - d.position[1]).powi(2)
                + (r[2] - d.position[2]).powi(2))
            .sqrt();
            if dist < SINGULARITY_GUARD {
                return Err(Error::Singularity { distance: dist });
            }
        }
        Ok(field_from_dipoles(r, &active, k)? * scale)
    })
}

/// One row of the reference-case table: frequency (MHz), permittivity,
/// conductivity (S/m) and the published 10 g reference SAR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseRow {
    pub frequency_mhz: f64,
    pub relative_permittivity: f64,
    pub conductivity: f64,
    pub reference_sar_10g: f64,
}

pub const CASE_TABLE: [CaseRow; 11] = [
    row(850.0, 42.23, 0.89, 0.58),
    row(1800.0, 40.45, 1.39, 0.48),
    row(1900.0, 40.28, 1.45, 0.48),
    row(2450.0, 39.37, 1.87, 0.43),
    row(5500.0, 33.30, 5.18, 0.29),
    row(5800.0, 32.64, 5.55, 0.28),
    row(750.0, 42.47, 0.85, 0.28),
    row(1950.0, 40.20, 1.49, 0.41),
    row(750.0, 42.47, 0.85, 0.66),
    row(835.0, 42.26, 0.88, 0.65),
    row(1750.0, 40.53, 1.35, 0.52),
];

const fn row(f: f64, eps: f64, sigma: f64, sar10: f64) -> CaseRow {
    CaseRow {
        frequency_mhz: f,
        relative_permittivity: eps,
        conductivity: sigma,
        reference_sar_10g: sar10,
    }
}

pub fn case_row(case_index: usize) -> Result<CaseRow> {
    if (1..=11).contains(&case_index) {
        Ok(CASE_TABLE[case_index - 1])
    } else {
        Err(Error::InvalidCase(case_index))
    }
}

pub fn case_medium(case_index: usize) -> Result<MediumProperties> {
    let r = case_row(case_index)?;
    MediumProperties::new(
        r.frequency_mhz * 1e6,
        r.relative_permittivity,
        r.conductivity,
        LIQUID_DENSITY,
    )
}

/// Gaussian current hot spot on the dipole plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hotspot {
    /// Nominal centre (mm).
    pub center: [f64; 2],
    /// Standard deviation of the moment envelope (mm).
    pub width: f64,
    pub weight: f64,
}

pub const fn hs(x: f64, y: f64, width: f64, weight: f64) -> Hotspot {
    Hotspot {
        center: [x, y],
        width,
        weight,
    }
}

/// Envelopes per case, tuned so that the normalised 10 g / 1 g ratio tracks
/// the published reference values. Case 7 has two narrow spots and the
/// richest lateral spectrum.
fn case_hotspots(case_index: usize) -> Vec<Hotspot> {
    match case_index {
        1 => vec![hs(0.0, 0.0, 14.3, 1.0)],
        2 => vec![hs(0.0, 0.0, 11.9, 1.0)],
        3 => vec![hs(0.0, 0.0, 12.5, 1.0)],
        4 => vec![hs(0.0, 0.0, 11.6, 1.0)],
        5 => vec![hs(0.0, 0.0, 9.8, 1.0)],
        6 => vec![hs(0.0, 0.0, 9.35, 1.0)],
        7 => vec![hs(-6.0, 4.0, 2.35, 1.0), hs(14.0, -10.0, 2.35, 0.8)],
        8 => vec![hs(0.0, 0.0, 9.1, 1.0)],
        9 => vec![hs(0.0, 0.0, 21.1, 1.0)],
        10 => vec![hs(0.0, 0.0, 20.3, 1.0)],
        11 => vec![hs(0.0, 0.0, 14.0, 1.0)],
        _ => Vec::new(),
    }
}

/// Relative envelope level below which a dipole is switched off.
const ENVELOPE_FLOOR: f64 = 1e-6;

/// Lattice positions of the 80 x 80 dipole array, x fastest, centred on the z axis.
pub fn dipole_lattice_positions(geometry: &Geometry) -> Vec<[f64; 3]> {
    let half = (DIPOLES_PER_SIDE as f64 - 1.0) / 2.0;
    let z = geometry.dipole_plane_z();
    let mut out = Vec::with_capacity(DIPOLES_PER_SIDE * DIPOLES_PER_SIDE);
    for j in 0..DIPOLES_PER_SIDE {
        for i in 0..DIPOLES_PER_SIDE {
            out.push([
                (i as f64 - half) * DIPOLE_PITCH,
                (j as f64 - half) * DIPOLE_PITCH,
                z,
            ]);
        }
    }
    out
}

/// Moments for a set of hot spots; the random draws fix polarisation, phase
/// tilt and centre jitter of each hot spot.
fn hotspot_moments<R: Rng>(rng: &mut R, positions: &[[f64; 3]], hotspots: &[Hotspot]) -> Vec<[Complex64; 3]> {
    struct Drawn {
        center: [f64; 2],
        width: f64,
        amp: f64,
        pol: [Complex64; 3],
        tilt: [f64; 2],
    }
    let drawn: Vec<Drawn> = hotspots
        .iter()
        .map(|h| {
            let jitter = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let theta: f64 = rng.random_range(0.0..PI);
            let phases: [f64; 3] = std::array::from_fn(|_| rng.random_range(-PI..PI));
            let vertical: f64 = rng.random_range(0.0..0.3);
            let tilt = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
            let amp = h.weight * rng.random_range(0.9..1.1);
            Drawn {
                center: [(h.center[0] + jitter[0]) * 1e-3, (h.center[1] + jitter[1]) * 1e-3],
                width: h.width * 1e-3,
                amp,
                pol: [
                    Complex64::from_polar(theta.cos(), phases[0]),
                    Complex64::from_polar(theta.sin(), phases[1]),
                    Complex64::from_polar(vertical, phases[2]),
                ],
                tilt,
            }
        })
        .collect();
    let peak: f64 = drawn.iter().map(|d| d.amp).fold(0.0, f64::max);
    positions
        .iter()
        .map(|p| {
            let mut m = [ZERO; 3];
            for d in &drawn {
                let dx = p[0] - d.center[0];
                let dy = p[1] - d.center[1];
                let env = d.amp * (-(dx * dx + dy * dy) / (2.0 * d.width * d.width)).exp();
                if env < ENVELOPE_FLOOR * peak {
                    continue;
                }
                let phase = Complex64::from_polar(env, d.tilt[0] * dx + d.tilt[1] * dy);
                for c in 0..3 {
                    m[c] += d.pol[c] * phase;
                }
            }
            m
        })
        .collect()
}

/// Builds an un-normalised scenario with Gaussian hot spots (widths and
/// centres in mm) for the given medium.
pub fn hotspot_scenario(
    medium: MediumProperties,
    geometry: Geometry,
    hotspots: &[Hotspot],
    seed: u64,
) -> Result<Scenario> {
    let positions = dipole_lattice_positions(&geometry);
    let mut rng = stream(derive_seed(seed, "hotspots"), 0);
    let moments = hotspot_moments(&mut rng, &positions, hotspots);
    let dipoles = positions
        .into_iter()
        .zip(moments)
        .map(|(position, moment)| Dipole { position, moment })
        .collect();
    let mut sc = Scenario::custom(medium, dipoles, geometry)?;
    sc.seed = seed;
    Ok(sc)
}

/// One of the eleven reference cases, normalised to unit 1 g peak SAR.
pub fn build_case(case_index: usize, seed: u64) -> Result<Scenario> {
    let raw = build_case_unnormalized(case_index, seed)?;
    normalize_to_unit_sar(&raw)
}

/// Reference case before normalisation (`amplitude_scale = 1`).
pub fn build_case_unnormalized(case_index: usize, seed: u64) -> Result<Scenario> {
    let spots = case_hotspots(case_index);
    build_case_with_envelope(case_index, seed, 1.0, &spots)
}

/// Hot-spot table of a case.
pub fn case_envelope(case_index: usize) -> Result<Vec<Hotspot>> {
    case_row(case_index)?;
    Ok(case_hotspots(case_index))
}

/// Reference case with its hot-spot widths multiplied by `width_scale`
/// (un-normalised); the random draws are those of the stock case.
pub fn build_case_scaled(case_index: usize, seed: u64, width_scale: f64) -> Result<Scenario> {
    let spots = case_hotspots(case_index);
    build_case_with_envelope(case_index, seed, width_scale, &spots)
}

fn build_case_with_envelope(case_index: usize, seed: u64, width_scale: f64, spots: &[Hotspot]) -> Result<Scenario> {
    if !(width_scale > 0.0) {
        return Err(Error::InvalidArgument("width scale must be > 0".into()));
    }
    let medium = case_medium(case_index)?;
    let geometry = Geometry::default();
    let positions = dipole_lattice_positions(&geometry);
    let mut rng = stream(derive_seed(seed, &format!("case-{case_index}")), 0);
    let scaled: Vec<Hotspot> = spots
        .iter()
        .map(|h| Hotspot {
            width: h.width * width_scale,
            ..*h
        })
        .collect();
    let moments = hotspot_moments(&mut rng, &positions, &scaled);
    let dipoles = positions
        .into_iter()
        .zip(moments)
        .map(|(position, moment)| Dipole { position, moment })
        .collect();
    Ok(Scenario {
        case_index: Some(case_index),
        seed,
        medium,
        dipoles,
        amplitude_scale: 1.0,
        geometry,
    })
}

/// Rescales the scenario so that its 1 g peak spatial-average SAR is 1 W/kg.
pub fn normalize_to_unit_sar(scenario: &Scenario) -> Result<Scenario> {
    let peak = sar::oracle_peak_sar_1g(scenario, NORMALIZATION_RESOLUTION)?.value;
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::ZeroField);
    }
    Ok(scenario.with_amplitude_scale(scenario.amplitude_scale / peak.sqrt()))
}
