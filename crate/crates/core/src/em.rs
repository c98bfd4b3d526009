//! Electromagnetic primitives for the tissue-equivalent liquid.
//!
//! The liquid is a non-magnetic lossy dielectric with complex relative
//! permittivity `eps_r + i sigma / (omega eps0)`, giving the complex wavenumber
//!
//! ```text
//! k = (omega / c0) * sqrt(eps_r + i sigma / (omega eps0)),   Im(k) >= 0.
//! ```

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const C0: f64 = 299_792_458.0;
/// Vacuum permittivity, F/m.
pub const EPS0: f64 = 8.854_187_812_8e-12;

/// Homogeneous liquid properties at a single frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMedium", into = "RawMedium")]
pub struct MediumProperties {
    frequency: f64,
    relative_permittivity: f64,
    conductivity: f64,
    density: f64,
}

#[derive(Serialize, Deserialize)]
struct RawMedium {
    frequency_hz: f64,
    relative_permittivity: f64,
    conductivity_s_per_m: f64,
    density_kg_per_m3: f64,
}

impl TryFrom<RawMedium> for MediumProperties {
    type Error = Error;

    fn try_from(raw: RawMedium) -> Result<Self> {
        MediumProperties::new(
            raw.frequency_hz,
            raw.relative_permittivity,
            raw.conductivity_s_per_m,
            raw.density_kg_per_m3,
        )
    }
}

impl From<MediumProperties> for RawMedium {
    fn from(m: MediumProperties) -> Self {
        RawMedium {
            frequency_hz: m.frequency,
            relative_permittivity: m.relative_permittivity,
            conductivity_s_per_m: m.conductivity,
            density_kg_per_m3: m.density,
        }
    }
}

impl MediumProperties {
    pub fn new(frequency: f64, relative_permittivity: f64, conductivity: f64, density: f64) -> Result<Self> {
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(Error::InvalidMedium(format!("frequency {frequency} must be > 0")));
        }
        if !(relative_permittivity.is_finite() && relative_permittivity >= 1.0) {
            return Err(Error::InvalidMedium(format!(
                "relative permittivity {relative_permittivity} must be >= 1"
            )));
        }
        if !(conductivity.is_finite() && conductivity >= 0.0) {
            return Err(Error::InvalidMedium(format!("conductivity {conductivity} must be >= 0")));
        }
        if !(density.is_finite() && density > 0.0) {
            return Err(Error::InvalidMedium(format!("density {density} must be > 0")));
        }
        Ok(Self {
            frequency,
            relative_permittivity,
            conductivity,
            density,
        })
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn relative_permittivity(&self) -> f64 {
        self.relative_permittivity
    }

    pub fn conductivity(&self) -> f64 {
        self.conductivity
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    /// Same medium with permittivity and conductivity scaled by the given factors.
    pub fn scaled(&self, permittivity_factor: f64, conductivity_factor: f64) -> Result<Self> {
        Self::new(
            self.frequency,
            self.relative_permittivity * permittivity_factor,
            self.conductivity * conductivity_factor,
            self.density,
        )
    }

    pub fn wavenumber(&self) -> Wavenumber {
        complex_wavenumber(self)
    }
}

/// Complex wavenumber in rad/m with `Im(k) >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wavenumber(Complex64);

impl Wavenumber {
    /// Wraps `k`, flipping its sign if needed so that `Im(k) >= 0`.
    pub fn new(k: Complex64) -> Result<Self> {
        if !(k.re.is_finite() && k.im.is_finite()) || k.norm() == 0.0 {
            return Err(Error::InvalidArgument(format!("wavenumber {k} must be finite and nonzero")));
        }
        Ok(Self(upper_half_plane(k)))
    }

    pub fn value(&self) -> Complex64 {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Complex electric field vector (E_x, E_y, E_z) in V/m.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3C {
    pub x: Complex64,
    pub y: Complex64,
    pub z: Complex64,
}

impl Vec3C {
    pub const ZERO: Vec3C = Vec3C {
        x: Complex64::new(0.0, 0.0),
        y: Complex64::new(0.0, 0.0),
        z: Complex64::new(0.0, 0.0),
    };

    pub fn new(x: Complex64, y: Complex64, z: Complex64) -> Self {
        Self { x, y, z }
    }

    /// `|E|^2 = |E_x|^2 + |E_y|^2 + |E_z|^2`.
    pub fn norm_sqr(&self) -> f64 {
        self.x.norm_sqr() + self.y.norm_sqr() + self.z.norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.z]
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scale(&self, a: Complex64) -> Self {
        Self::new(self.x * a, self.y * a, self.z * a)
    }
}

impl Add for Vec3C {
    type Output = Vec3C;
    fn add(self, o: Vec3C) -> Vec3C {
        Vec3C::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3C {
    fn add_assign(&mut self, o: Vec3C) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Vec3C {
    type Output = Vec3C;
    fn sub(self, o: Vec3C) -> Vec3C {
        Vec3C::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3C {
    type Output = Vec3C;
    fn mul(self, a: f64) -> Vec3C {
        Vec3C::new(self.x * a, self.y * a, self.z * a)
    }
}

fn upper_half_plane(z: Complex64) -> Complex64 {
    if z.im < 0.0 || (z.im == 0.0 && z.re < 0.0) {
        -z
    } else {
        z
    }
}

/// Wavenumber of the lossy liquid (non-magnetic, mu = mu0).
pub fn complex_wavenumber(medium: &MediumProperties) -> Wavenumber {
    let omega = 2.0 * PI * medium.frequency;
    let eps_c = Complex64::new(medium.relative_permittivity, medium.conductivity / (omega * EPS0));
    let k = eps_c.sqrt() * (omega / C0);
    Wavenumber(upper_half_plane(k))
}

/// Plane-wave skin depth `1 / Im(k)` in metres.
pub fn skin_depth(k: Wavenumber) -> Result<f64> {
    if k.0.im > 0.0 {
        Ok(1.0 / k.0.im)
    } else {
        Err(Error::InfiniteSkinDepth)
    }
}

/// Longitudinal wavenumber `k_z` with `k_z^2 = k^2 - k_x^2 - k_y^2`.
///
/// The branch with `Im(k_z) >= 0` is selected; when `Im(k_z) = 0` the
/// non-negative real root is returned.
pub fn kz_component(kx: f64, ky: f64, k: Wavenumber) -> Complex64 {
    let kz2 = k.0 * k.0 - Complex64::new(kx * kx + ky * ky, 0.0);
    upper_half_plane(kz2.sqrt())
}
