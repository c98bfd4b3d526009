//! Plane-wave-expansion reconstruction of the field inside the liquid from
//! (E_x, E_y) samples on a planar probe array.
//!
//! The field is expanded as `E(x, y, z) = sum S(kx, ky) exp(i (kx x + ky y - kz z))`.
//! Probe `n` sits at `n * pitch` (centred indices), bin `m` at
//! `k_m = m * kmax / M` with `kmax = 2 pi / pitch`, so the forward map is the
//! zero-padded DFT
//!
//! ```text
//! S_m = sum_n E_n exp(-2 pi i m n / M),     E_n = (1 / M) sum_m S_m exp(2 pi i m n / M)
//! ```
//!
//! (written for one axis; both axes are transformed). Moving the spectrum
//! from `z_mea` to `z_rec` multiplies every bin by `exp(-i kz (z_rec - z_mea))`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::em::{kz_component, MediumProperties, Vec3C, Wavenumber};
use crate::error::{Error, Result};
use crate::fft2::Fft2;
use crate::grid::{FieldGrid, GridSpec};
use crate::parallel;
use crate::sar::{self, Mass, SarEstimate};
use crate::source::Geometry;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative floor on `|kz|` below which the z-component of a bin is set to zero.
pub const KZ_FLOOR: f64 = 1e-9;

/// (E_x, E_y) measured on a centred planar probe lattice, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarSamples {
    pub plane_z: f64,
    pub pitch: [f64; 2],
    pub counts: [usize; 2],
    pub center: [f64; 2],
    pub ex: Vec<Complex64>,
    pub ey: Vec<Complex64>,
}

impl PlanarSamples {
    pub fn new(plane_z: f64, pitch: [f64; 2], counts: [usize; 2], ex: Vec<Complex64>, ey: Vec<Complex64>) -> Result<Self> {
        check_odd(counts)?;
        if !(pitch[0] > 0.0 && pitch[1] > 0.0) {
            return Err(Error::InvalidArgument("probe pitch must be > 0".into()));
        }
        let n = counts[0] * counts[1];
        if ex.len() != n || ey.len() != n {
            return Err(Error::InvalidArgument(format!(
                "expected {n} samples per component, got {} and {}",
                ex.len(),
                ey.len()
            )));
        }
        Ok(Self {
            plane_z,
            pitch,
            counts,
            center: [0.0, 0.0],
            ex,
            ey,
        })
    }

    /// Samples on the probe array described by `geometry`, from fields listed
    /// in the order of [`Geometry::probe_positions`].
    pub fn from_fields(geometry: &Geometry, fields: &[Vec3C]) -> Result<Self> {
        let n = geometry.probes_per_side;
        Self::new(
            geometry.measurement_plane_z,
            [geometry.probe_pitch; 2],
            [n, n],
            fields.iter().map(|e| e.x).collect(),
            fields.iter().map(|e| e.y).collect(),
        )
    }

    pub fn coords(&self, axis: usize) -> Vec<f64> {
        centred(self.counts[axis])
            .map(|n| self.center[axis] + n as f64 * self.pitch[axis])
            .collect()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        let xs = self.coords(0);
        let ys = self.coords(1);
        ys.iter()
            .flat_map(|&y| xs.iter().map(move |&x| [x, y, self.plane_z]))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.ex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ex.is_empty()
    }
}

fn check_odd(counts: [usize; 2]) -> Result<()> {
    if counts[0] % 2 == 0 || counts[1] % 2 == 0 {
        return Err(Error::EvenCounts(counts[0], counts[1]));
    }
    Ok(())
}

/// Centred indices `-(n-1)/2 ..= (n-1)/2`.
fn centred(n: usize) -> impl Iterator<Item = i64> + Clone {
    let h = (n as i64 - 1) / 2;
    -h..=h
}

/// Plane-wave coefficients of one field component on an odd `(M_x, M_y)`
/// lattice, x fastest, bin `(i, j)` at `k = (m_x, m_y) * kmax / M` with
/// `m = i - (M - 1) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub counts: [usize; 2],
    pub max_freqs: [f64; 2],
    pub coefficients: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(counts: [usize; 2], max_freqs: [f64; 2]) -> Result<Self> {
        check_odd(counts)?;
        Ok(Self {
            counts,
            max_freqs,
            coefficients: vec![ZERO; counts[0] * counts[1]],
        })
    }

    /// Signed bin number along `axis` for storage index `i`.
    pub fn bin(&self, axis: usize, i: usize) -> i64 {
        i as i64 - (self.counts[axis] as i64 - 1) / 2
    }

    /// Spatial frequency along `axis` of storage index `i`, rad/m.
    pub fn freq(&self, axis: usize, i: usize) -> f64 {
        self.bin(axis, i) as f64 * self.max_freqs[axis] / self.counts[axis] as f64
    }

    pub fn freqs(&self, axis: usize) -> Vec<f64> {
        (0..self.counts[axis]).map(|i| self.freq(axis, i)).collect()
    }

    pub fn get(&self, mx: i64, my: i64) -> Complex64 {
        let i = (mx + (self.counts[0] as i64 - 1) / 2) as usize;
        let j = (my + (self.counts[1] as i64 - 1) / 2) as usize;
        self.coefficients[i + self.counts[0] * j]
    }

    /// Sum of `|S|^2` over all bins.
    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(Complex64::norm_sqr).sum()
    }

    pub fn nonzero_bins(&self) -> usize {
        self.coefficients.iter().filter(|c| c.norm_sqr() > 0.0).count()
    }

    fn same_lattice(&self, other: &Spectrum) -> Result<()> {
        if self.counts != other.counts || self.max_freqs != other.max_freqs {
            return Err(Error::InvalidArgument("spectra live on different lattices".into()));
        }
        Ok(())
    }
}

/// Spectral truncation: bins with `sqrt(kx^2 + ky^2) >= threshold` are discarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub delta: f64,
    pub threshold: f64,
}

impl TruncationPolicy {
    /// `threshold = |k| + (sqrt(kx_max^2 + ky_max^2) - |k|) * delta`.
    pub fn new(delta: f64, k: Wavenumber, max_freqs: [f64; 2]) -> Result<Self> {
        check_delta(delta)?;
        let kmax = max_freqs[0].hypot(max_freqs[1]);
        Ok(Self {
            delta,
            threshold: k.norm() + (kmax - k.norm()) * delta,
        })
    }
}

pub fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("delta {delta} must lie in [0, 1]")));
    }
    Ok(())
}

/// Default spectral lattice size `2 N + 1` per axis.
pub fn default_counts(n: [usize; 2]) -> [usize; 2] {
    [2 * n[0] + 1, 2 * n[1] + 1]
}

/// `kmax = 2 pi / pitch` per axis, the largest band the pitch resolves.
pub fn max_freqs(pitch: [f64; 2]) -> [f64; 2] {
    [2.0 * PI / pitch[0], 2.0 * PI / pitch[1]]
}

fn check_sizes(n: [usize; 2], m: [usize; 2]) -> Result<()> {
    check_odd(n)?;
    check_odd(m)?;
    if m[0] < n[0] || m[1] < n[1] {
        log::warn!("spectral lattice {m:?} smaller than the sample lattice {n:?}: samples alias");
    }
    Ok(())
}

/// Forward transform of one component via FFT.
pub fn forward_component(values: &[Complex64], n: [usize; 2], pitch: [f64; 2], m: [usize; 2]) -> Result<Spectrum> {
    check_sizes(n, m)?;
    if values.len() != n[0] * n[1] {
        return Err(Error::InvalidArgument("sample count does not match lattice".into()));
    }
    let mut buf = vec![ZERO; m[0] * m[1]];
    for (jy, ny) in centred(n[1]).enumerate() {
        let qy = ny.rem_euclid(m[1] as i64) as usize;
        for (jx, nx) in centred(n[0]).enumerate() {
            let qx = nx.rem_euclid(m[0] as i64) as usize;
            buf[qx + m[0] * qy] += values[jx + n[0] * jy];
        }
    }
    Fft2::new(m[0], m[1]).forward(&mut buf);
    let mut spec = Spectrum::zeros(m, max_freqs(pitch))?;
    for j in 0..m[1] {
        let qy = spec.bin(1, j).rem_euclid(m[1] as i64) as usize;
        for i in 0..m[0] {
            let qx = spec.bin(0, i).rem_euclid(m[0] as i64) as usize;
            spec.coefficients[i + m[0] * j] = buf[qx + m[0] * qy];
        }
    }
    Ok(spec)
}

/// Forward transform of one component by the explicit double sum.
pub fn forward_component_direct(values: &[Complex64], n: [usize; 2], pitch: [f64; 2], m: [usize; 2]) -> Result<Spectrum> {
    check_sizes(n, m)?;
    if values.len() != n[0] * n[1] {
        return Err(Error::InvalidArgument("sample count does not match lattice".into()));
    }
    let mut spec = Spectrum::zeros(m, max_freqs(pitch))?;
    for j in 0..m[1] {
        let my = spec.bin(1, j);
        for i in 0..m[0] {
            let mx = spec.bin(0, i);
            let mut s = ZERO;
            for (jy, ny) in centred(n[1]).enumerate() {
                for (jx, nx) in centred(n[0]).enumerate() {
                    let ph = -2.0 * PI * (unit_phase(mx, nx, m[0]) + unit_phase(my, ny, m[1]));
                    s += values[jx + n[0] * jy] * Complex64::cis(ph);
                }
            }
            spec.coefficients[i + m[0] * j] = s;
        }
    }
    Ok(spec)
}

/// `(m n mod M) / M`, reduced exactly in integers before the division.
fn unit_phase(m: i64, n: i64, big_m: usize) -> f64 {
    (m * n).rem_euclid(big_m as i64) as f64 / big_m as f64
}

/// Forward transforms of both measured components.
pub fn forward_spectrum(samples: &PlanarSamples, m: [usize; 2]) -> Result<[Spectrum; 2]> {
    Ok([
        forward_component(&samples.ex, samples.counts, samples.pitch, m)?,
        forward_component(&samples.ey, samples.counts, samples.pitch, m)?,
    ])
}

/// Multiplies each bin by `exp(-i kz dz)`.
pub fn propagate_spectrum(spec: &Spectrum, k: Wavenumber, dz: f64) -> Spectrum {
    let mut out = spec.clone();
    for j in 0..spec.counts[1] {
        let ky = spec.freq(1, j);
        for i in 0..spec.counts[0] {
            let kz = kz_component(spec.freq(0, i), ky, k);
            out.coefficients[i + spec.counts[0] * j] *= propagator(kz, dz);
        }
    }
    out
}

#[inline]
fn propagator(kz: Complex64, dz: f64) -> Complex64 {
    // exp(-i kz dz) = exp(Im(kz) dz) * cis(-Re(kz) dz)
    Complex64::from_polar((kz.im * dz).exp(), -kz.re * dz)
}

/// Zeroes every bin at or beyond the policy threshold.
pub fn truncate_spectrum(spec: &Spectrum, policy: &TruncationPolicy) -> Spectrum {
    let mut out = spec.clone();
    for j in 0..spec.counts[1] {
        let ky = spec.freq(1, j);
        for i in 0..spec.counts[0] {
            if spec.freq(0, i).hypot(ky) >= policy.threshold {
                out.coefficients[i + spec.counts[0] * j] = ZERO;
            }
        }
    }
    out
}

/// Inverse transform evaluated on the centred `n` probe lattice (FFT).
pub fn inverse_component(spec: &Spectrum, n: [usize; 2]) -> Result<Vec<Complex64>> {
    check_odd(n)?;
    let m = spec.counts;
    let mut buf = vec![ZERO; m[0] * m[1]];
    for j in 0..m[1] {
        let qy = spec.bin(1, j).rem_euclid(m[1] as i64) as usize;
        for i in 0..m[0] {
            let qx = spec.bin(0, i).rem_euclid(m[0] as i64) as usize;
            buf[qx + m[0] * qy] = spec.coefficients[i + m[0] * j];
        }
    }
    Fft2::new(m[0], m[1]).inverse(&mut buf);
    let scale = 1.0 / (m[0] * m[1]) as f64;
    let mut out = Vec::with_capacity(n[0] * n[1]);
    for ny in centred(n[1]) {
        let qy = ny.rem_euclid(m[1] as i64) as usize;
        for nx in centred(n[0]) {
            let qx = nx.rem_euclid(m[0] as i64) as usize;
            out.push(buf[qx + m[0] * qy] * scale);
        }
    }
    Ok(out)
}

/// Inverse transform on the probe lattice by the explicit double sum.
pub fn inverse_component_direct(spec: &Spectrum, n: [usize; 2]) -> Result<Vec<Complex64>> {
    check_odd(n)?;
    let m = spec.counts;
    let scale = 1.0 / (m[0] * m[1]) as f64;
    let mut out = Vec::with_capacity(n[0] * n[1]);
    for ny in centred(n[1]) {
        for nx in centred(n[0]) {
            let mut s = ZERO;
            for j in 0..m[1] {
                let my = spec.bin(1, j);
                for i in 0..m[0] {
                    let mx = spec.bin(0, i);
                    let ph = 2.0 * PI * (unit_phase(mx, nx, m[0]) + unit_phase(my, ny, m[1]));
                    s += spec.coefficients[i + m[0] * j] * Complex64::cis(ph);
                }
            }
            out.push(s * scale);
        }
    }
    Ok(out)
}

/// Inverse transform evaluated at arbitrary lateral coordinates, x fastest.
///
/// This is the same finite sum as [`inverse_component`] read as a function of
/// position, so no secondary interpolation enters.
pub fn evaluate_component(spec: &Spectrum, xs: &[f64], ys: &[f64]) -> Vec<Complex64> {
    LateralBasis::new(spec, xs, ys).evaluate(spec)
}

/// Phase matrices `exp(i kx x)`, `exp(i ky y)` restricted to a block of bins.
struct LateralBasis {
    i0: usize,
    i1: usize,
    j0: usize,
    j1: usize,
    /// `(bins_x, nx)`.
    phase_x: Array2<Complex64>,
    /// `(ny, bins_y)`.
    phase_y: Array2<Complex64>,
    scale: f64,
}

impl LateralBasis {
    /// Basis covering the bounding box of the nonzero bins of `spec`.
    fn new(spec: &Spectrum, xs: &[f64], ys: &[f64]) -> Self {
        let m = spec.counts;
        let (mut i0, mut i1, mut j0, mut j1) = (m[0], 0, m[1], 0);
        for j in 0..m[1] {
            for i in 0..m[0] {
                if spec.coefficients[i + m[0] * j].norm_sqr() > 0.0 {
                    i0 = i0.min(i);
                    i1 = i1.max(i + 1);
                    j0 = j0.min(j);
                    j1 = j1.max(j + 1);
                }
            }
        }
        if i0 >= i1 {
            (i0, i1, j0, j1) = (0, 0, 0, 0);
        }
        Self::with_block(spec, xs, ys, [i0, i1, j0, j1])
    }

    fn with_block(spec: &Spectrum, xs: &[f64], ys: &[f64], block: [usize; 4]) -> Self {
        let [i0, i1, j0, j1] = block;
        let phase_x = Array2::from_shape_fn((i1 - i0, xs.len()), |(a, b)| Complex64::cis(spec.freq(0, i0 + a) * xs[b]));
        let phase_y = Array2::from_shape_fn((ys.len(), j1 - j0), |(a, b)| Complex64::cis(spec.freq(1, j0 + b) * ys[a]));
        Self {
            i0,
            i1,
            j0,
            j1,
            phase_x,
            phase_y,
            scale: 1.0 / (spec.counts[0] * spec.counts[1]) as f64,
        }
    }

    fn evaluate(&self, spec: &Spectrum) -> Vec<Complex64> {
        let (ny, nx) = (self.phase_y.nrows(), self.phase_x.ncols());
        if self.i0 >= self.i1 {
            return vec![ZERO; nx * ny];
        }
        let m0 = spec.counts[0];
        let block = Array2::from_shape_fn((self.j1 - self.j0, self.i1 - self.i0), |(a, b)| {
            spec.coefficients[(self.i0 + b) + m0 * (self.j0 + a)] * self.scale
        });
        let t = block.dot(&self.phase_x);
        let out = self.phase_y.dot(&t);
        out.into_raw_vec_and_offset().0
    }
}

/// z-component spectrum from the transversality condition of each plane wave.
///
/// With the `exp(i (kx x + ky y - kz z))` expansion, `div E = 0` gives
/// `Ez = (kx Ex + ky Ey) / kz`. Bins with `|kz| < KZ_FLOOR |k|` are zeroed.
pub fn recover_z_component(spec_x: &Spectrum, spec_y: &Spectrum, k: Wavenumber) -> Result<Spectrum> {
    spec_x.same_lattice(spec_y)?;
    let mut out = Spectrum::zeros(spec_x.counts, spec_x.max_freqs)?;
    let m0 = spec_x.counts[0];
    for j in 0..spec_x.counts[1] {
        let ky = spec_x.freq(1, j);
        for i in 0..m0 {
            let kx = spec_x.freq(0, i);
            let kz = kz_component(kx, ky, k);
            if kz.norm() < KZ_FLOOR * k.norm() {
                continue;
            }
            let idx = i + m0 * j;
            out.coefficients[idx] = (spec_x.coefficients[idx] * kx + spec_y.coefficients[idx] * ky) / kz;
        }
    }
    Ok(out)
}

/// Reconstruction on the probe lattice of a plane at `z_rec`:
/// forward transform, truncation, propagation and inverse transform applied
/// to E_x and E_y independently. The z-component of the result is left at zero.
pub fn reconstruct_plane(samples: &PlanarSamples, z_rec: f64, k: Wavenumber, policy: &TruncationPolicy) -> Result<FieldGrid> {
    reconstruct_plane_with(samples, z_rec, k, policy, default_counts(samples.counts))
}

pub fn reconstruct_plane_with(
    samples: &PlanarSamples,
    z_rec: f64,
    k: Wavenumber,
    policy: &TruncationPolicy,
    m: [usize; 2],
) -> Result<FieldGrid> {
    let [sx, sy] = forward_spectrum(samples, m)?;
    let dz = z_rec - samples.plane_z;
    let comp = |s: &Spectrum| inverse_component(&propagate_spectrum(&truncate_spectrum(s, policy), k, dz), samples.counts);
    let ex = comp(&sx)?;
    let ey = comp(&sy)?;
    let xs = samples.coords(0);
    let ys = samples.coords(1);
    let spec = GridSpec::new(
        [xs[0], ys[0], z_rec],
        [samples.pitch[0], samples.pitch[1], 1.0],
        [samples.counts[0], samples.counts[1], 1],
    )?;
    let values = ex.into_iter().zip(ey).map(|(x, y)| Vec3C::new(x, y, ZERO)).collect();
    FieldGrid::vector(spec, values)
}

/// Truncated E_x, E_y and recovered E_z spectra on the measurement plane,
/// ready to be propagated to any depth.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub plane_z: f64,
    pub k: Wavenumber,
    pub policy: TruncationPolicy,
    pub spectra: [Spectrum; 3],
}

impl Reconstruction {
    pub fn new(samples: &PlanarSamples, k: Wavenumber, delta: f64, m: [usize; 2]) -> Result<Self> {
        let [sx, sy] = forward_spectrum(samples, m)?;
        Self::from_spectra(samples.plane_z, sx, sy, k, delta)
    }

    /// Builds from already transformed measurement spectra, so that several
    /// truncation levels can share one forward transform.
    pub fn from_spectra(plane_z: f64, sx: Spectrum, sy: Spectrum, k: Wavenumber, delta: f64) -> Result<Self> {
        let policy = TruncationPolicy::new(delta, k, sx.max_freqs)?;
        let sx = truncate_spectrum(&sx, &policy);
        let sy = truncate_spectrum(&sy, &policy);
        let sz = recover_z_component(&sx, &sy, k)?;
        Ok(Self {
            plane_z,
            k,
            policy,
            spectra: [sx, sy, sz],
        })
    }

    /// Per-bin propagators to `z` (shared by the three components).
    fn propagators(&self, z: f64) -> Vec<Complex64> {
        let s = &self.spectra[0];
        let dz = z - self.plane_z;
        let mut out = Vec::with_capacity(s.coefficients.len());
        for j in 0..s.counts[1] {
            let ky = s.freq(1, j);
            for i in 0..s.counts[0] {
                out.push(propagator(kz_component(s.freq(0, i), ky, self.k), dz));
            }
        }
        out
    }

    fn plane_fields(&self, basis: &LateralBasis, z: f64) -> [Vec<Complex64>; 3] {
        let p = self.propagators(z);
        std::array::from_fn(|c| {
            let mut s = self.spectra[c].clone();
            for (v, pv) in s.coefficients.iter_mut().zip(&p) {
                *v *= pv;
            }
            basis.evaluate(&s)
        })
    }

    fn basis(&self, spec: &GridSpec) -> LateralBasis {
        let xs = spec.axis(0);
        let ys = spec.axis(1);
        // E_z can only be nonzero where E_x or E_y is
        let mut support = self.spectra[0].clone();
        for (a, b) in support.coefficients.iter_mut().zip(&self.spectra[1].coefficients) {
            *a = Complex64::new(a.norm() + b.norm(), 0.0);
        }
        LateralBasis::new(&support, &xs, &ys)
    }

    /// Complex field on every node of `spec`.
    pub fn volume(&self, spec: GridSpec) -> Result<FieldGrid> {
        let basis = self.basis(&spec);
        let planes = parallel::map_range(spec.dims[2], |iz| {
            let [ex, ey, ez] = self.plane_fields(&basis, spec.coord(2, iz));
            (0..ex.len()).map(|i| Vec3C::new(ex[i], ey[i], ez[i])).collect::<Vec<_>>()
        });
        FieldGrid::vector(spec, planes.concat())
    }

    /// `|E|^2` on every node of `spec`.
    pub fn intensity(&self, spec: GridSpec) -> Result<Vec<f64>> {
        spec.validate()?;
        let basis = self.basis(&spec);
        let planes = parallel::map_range(spec.dims[2], |iz| {
            let [ex, ey, ez] = self.plane_fields(&basis, spec.coord(2, iz));
            (0..ex.len())
                .map(|i| ex[i].norm_sqr() + ey[i].norm_sqr() + ez[i].norm_sqr())
                .collect::<Vec<_>>()
        });
        Ok(planes.concat())
    }
}

/// Full 3-component field on `volume`, evaluated directly at its nodes.
pub fn reconstruct_volume(samples: &PlanarSamples, volume: GridSpec, k: Wavenumber, policy: &TruncationPolicy) -> Result<FieldGrid> {
    let m = default_counts(samples.counts);
    let [sx, sy] = forward_spectrum(samples, m)?;
    let sx = truncate_spectrum(&sx, policy);
    let sy = truncate_spectrum(&sy, policy);
    let sz = recover_z_component(&sx, &sy, k)?;
    let rec = Reconstruction {
        plane_z: samples.plane_z,
        k,
        policy: *policy,
        spectra: [sx, sy, sz],
    };
    rec.volume(volume)
}

/// Peak 1 g and 10 g SAR of a reconstruction on the geometry's volume grid.
/// Each mass is evaluated on the grid refined until its cube side is a whole
/// number of steps, so 10 g at 1 mm runs on a 0.5 mm lattice.
pub fn estimate_peak_sar(
    rec: &Reconstruction,
    geometry: &Geometry,
    medium: &MediumProperties,
    resolution: f64,
) -> Result<(SarEstimate, SarEstimate)> {
    let mut grids: Vec<(f64, GridSpec, Vec<f64>)> = Vec::new();
    let mut out = Vec::with_capacity(2);
    for mass in Mass::ALL {
        let h = sar::spacing_for(mass, resolution);
        if !grids.iter().any(|g| g.0 == h) {
            let spec = geometry.volume_grid(h)?;
            let intensity = rec.intensity(spec)?;
            grids.push((h, spec, intensity));
        }
        let (_, spec, intensity) = grids.iter().find(|g| g.0 == h).expect("grid just built");
        out.push(sar::peak_from_intensity(spec, intensity, mass, medium)?);
    }
    let ten = out.pop().expect("two masses");
    Ok((out.pop().expect("two masses"), ten))
}

/// Writes spectra as CSV rows `m_x, m_y, k_x, k_y` followed by `re, im` per component.
pub fn write_spectrum_csv(path: &Path, names: &[&str], spectra: &[&Spectrum]) -> Result<()> {
    if spectra.is_empty() || names.len() != spectra.len() {
        return Err(Error::InvalidArgument("one name per spectrum required".into()));
    }
    for s in &spectra[1..] {
        spectra[0].same_lattice(s)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["m_x".to_string(), "m_y".into(), "k_x".into(), "k_y".into()];
    for n in names {
        header.push(format!("{n}_re"));
        header.push(format!("{n}_im"));
    }
    w.write_record(&header)?;
    let s0 = spectra[0];
    for j in 0..s0.counts[1] {
        for i in 0..s0.counts[0] {
            let mut rec = vec![
                s0.bin(0, i).to_string(),
                s0.bin(1, j).to_string(),
                s0.freq(0, i).to_string(),
                s0.freq(1, j).to_string(),
            ];
            for s in spectra {
                let c = s.coefficients[i + s0.counts[0] * j];
                rec.push(c.re.to_string());
                rec.push(c.im.to_string());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Probe samples as CSV rows `x, y, z, ex_re, ex_im, ey_re, ey_im`.
pub fn write_samples_csv(path: &Path, samples: &PlanarSamples) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "x,y,z,ex_re,ex_im,ey_re,ey_im")?;
    for (p, (ex, ey)) in samples.positions().iter().zip(samples.ex.iter().zip(&samples.ey)) {
        writeln!(f, "{},{},{},{},{},{},{}", p[0], p[1], p[2], ex.re, ex.im, ey.re, ey.im)?;
    }
    f.flush()?;
    Ok(())
}
