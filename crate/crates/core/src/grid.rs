//! Regular sampling lattices and the field values stored on them.
//!
//! Node `(ix, iy, iz)` sits at `origin + (ix, iy, iz) * spacing` and is stored
//! at linear index `ix + nx * (iy + ny * iz)` (x fastest).
//!
//! On disk a grid is a JSON header plus a flat little-endian `f64` payload:
//! vector grids store `ex_re ex_im ey_re ey_im ez_re ez_im` per node,
//! amplitude grids one magnitude per node.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::em::Vec3C;
use crate::error::{Error, Result};

pub const GRID_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: [f64; 3], spacing: [f64; 3], dims: [usize; 3]) -> Result<Self> {
        let spec = Self { origin, spacing, dims };
        spec.validate()?;
        Ok(spec)
    }

    /// Grid from `lo` to (at most) `hi` on each axis with the given step.
    pub fn spanning(lo: [f64; 3], hi: [f64; 3], step: f64) -> Result<Self> {
        let mut dims = [0usize; 3];
        for a in 0..3 {
            let n = ((hi[a] - lo[a]) / step + 1e-9).floor();
            if !(n >= 0.0) {
                return Err(Error::InvalidGrid(format!("empty extent on axis {a}")));
            }
            dims[a] = n as usize + 1;
        }
        Self::new(lo, [step; 3], dims)
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.spacing[a].is_finite() && self.spacing[a] > 0.0) {
                return Err(Error::InvalidGrid(format!("spacing on axis {a} must be > 0")));
            }
            if self.dims[a] == 0 {
                return Err(Error::InvalidGrid(format!("axis {a} has no nodes")));
            }
            if !self.origin[a].is_finite() {
                return Err(Error::InvalidGrid(format!("origin on axis {a} is not finite")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    pub fn axis(&self, axis: usize) -> Vec<f64> {
        (0..self.dims[axis]).map(|i| self.coord(axis, i)).collect()
    }

    pub fn position(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        [self.coord(0, ix), self.coord(1, iy), self.coord(2, iz)]
    }

    /// Upper corner of the grid.
    pub fn max_corner(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.coord(a, self.dims[a] - 1))
    }

    /// Node count of one z-plane.
    pub fn plane_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValues {
    /// Complex field vector per node.
    Vector(Vec<Vec3C>),
    /// Magnitude `|E|` per node (amplitude-only probes).
    Amplitude(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub spec: GridSpec,
    pub values: FieldValues,
}

impl FieldGrid {
    pub fn vector(spec: GridSpec, values: Vec<Vec3C>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} nodes",
                values.len(),
                spec.len()
            )));
        }
        Ok(Self {
            spec,
            values: FieldValues::Vector(values),
        })
    }

    pub fn amplitude(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} nodes",
                values.len(),
                spec.len()
            )));
        }
        Ok(Self {
            spec,
            values: FieldValues::Amplitude(values),
        })
    }

    pub fn is_amplitude_only(&self) -> bool {
        matches!(self.values, FieldValues::Amplitude(_))
    }

    /// `|E|^2` at every node.
    pub fn intensity(&self) -> Vec<f64> {
        match &self.values {
            FieldValues::Vector(v) => v.iter().map(Vec3C::norm_sqr).collect(),
            FieldValues::Amplitude(a) => a.iter().map(|x| x * x).collect(),
        }
    }

    /// `|E|` at every node.
    pub fn magnitudes(&self) -> Vec<f64> {
        match &self.values {
            FieldValues::Vector(v) => v.iter().map(Vec3C::norm).collect(),
            FieldValues::Amplitude(a) => a.clone(),
        }
    }

    /// Multiplies every value by the real factor `a`.
    pub fn scaled(&self, a: f64) -> Self {
        let values = match &self.values {
            FieldValues::Vector(v) => FieldValues::Vector(v.iter().map(|e| *e * a).collect()),
            FieldValues::Amplitude(m) => FieldValues::Amplitude(m.iter().map(|x| x * a.abs()).collect()),
        };
        Self { spec: self.spec, values }
    }

    /// Writes `<stem>.json` (header) and `<stem>.bin` (payload).
    pub fn write(&self, stem: &Path) -> Result<()> {
        let header = GridHeader {
            format_version: GRID_FORMAT_VERSION,
            kind: if self.is_amplitude_only() { "amplitude" } else { "vector" }.to_string(),
            byte_order: "little".to_string(),
            layout: "x-fastest".to_string(),
            origin_m: self.spec.origin,
            spacing_m: self.spec.spacing,
            dims: self.spec.dims,
        };
        let mut json = serde_json::to_string_pretty(&header)?;
        json.push('\n');
        std::fs::write(stem.with_extension("json"), json)?;

        let mut out = BufWriter::new(File::create(stem.with_extension("bin"))?);
        match &self.values {
            FieldValues::Vector(v) => {
                for e in v {
                    for c in [e.x, e.y, e.z] {
                        out.write_all(&c.re.to_le_bytes())?;
                        out.write_all(&c.im.to_le_bytes())?;
                    }
                }
            }
            FieldValues::Amplitude(a) => {
                for x in a {
                    out.write_all(&x.to_le_bytes())?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(stem: &Path) -> Result<Self> {
        let header: GridHeader = serde_json::from_slice(&std::fs::read(stem.with_extension("json"))?)?;
        if header.format_version != GRID_FORMAT_VERSION {
            return Err(Error::InvalidGrid(format!(
                "unsupported grid format version {}",
                header.format_version
            )));
        }
        if header.byte_order != "little" || header.layout != "x-fastest" {
            return Err(Error::InvalidGrid("unsupported byte order or layout".into()));
        }
        let spec = GridSpec::new(header.origin_m, header.spacing_m, header.dims)?;
        let mut raw = Vec::new();
        BufReader::new(File::open(stem.with_extension("bin"))?).read_to_end(&mut raw)?;
        let floats: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        match header.kind.as_str() {
            "vector" => {
                if floats.len() != 6 * spec.len() || raw.len() % 8 != 0 {
                    return Err(Error::InvalidGrid("payload size does not match header".into()));
                }
                let values = floats
                    .chunks_exact(6)
                    .map(|f| {
                        Vec3C::new(
                            Complex64::new(f[0], f[1]),
                            Complex64::new(f[2], f[3]),
                            Complex64::new(f[4], f[5]),
                        )
                    })
                    .collect();
                FieldGrid::vector(spec, values)
            }
            "amplitude" => {
                if floats.len() != spec.len() || raw.len() % 8 != 0 {
                    return Err(Error::InvalidGrid("payload size does not match header".into()));
                }
                FieldGrid::amplitude(spec, floats)
            }
            other => Err(Error::InvalidGrid(format!("unknown grid kind {other:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GridHeader {
    format_version: u32,
    kind: String,
    byte_order: String,
    layout: String,
    origin_m: [f64; 3],
    spacing_m: [f64; 3],
    dims: [usize; 3],
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spanning_counts_nodes() {
        let g = GridSpec::spanning([-0.1, -0.1, 0.0], [0.1, 0.1, 0.03], 0.001).unwrap();
        assert_eq!(g.dims, [201, 201, 31]);
        assert!((g.max_corner()[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::new([0.0; 3], [0.0, 1.0, 1.0], [2, 2, 2]).is_err());
        assert!(GridSpec::new([0.0; 3], [1.0; 3], [2, 0, 2]).is_err());
        let spec = GridSpec::new([0.0; 3], [1.0; 3], [2, 2, 2]).unwrap();
        assert!(FieldGrid::amplitude(spec, vec![1.0; 7]).is_err());
    }

    #[test]
    fn binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::new([0.0, 1.0, 2.0], [0.5, 0.25, 1.0], [3, 2, 2]).unwrap();
        let values: Vec<Vec3C> = (0..spec.len())
            .map(|i| {
                let f = i as f64;
                Vec3C::new(
                    Complex64::new(f, -f),
                    Complex64::new(0.5 * f, 1.0),
                    Complex64::new(-2.0, f * f),
                )
            })
            .collect();
        let grid = FieldGrid::vector(spec, values).unwrap();
        let stem = dir.path().join("g");
        grid.write(&stem).unwrap();
        assert_eq!(std::fs::metadata(stem.with_extension("bin")).unwrap().len(), 12 * 6 * 8);
        assert_eq!(FieldGrid::read(&stem).unwrap(), grid);

        let amp = FieldGrid::amplitude(spec, (0..12).map(|i| i as f64).collect()).unwrap();
        amp.write(&stem).unwrap();
        assert_eq!(FieldGrid::read(&stem).unwrap(), amp);
    }

    #[test]
    fn payload_is_little_endian_x_fastest() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::new([0.0; 3], [1.0; 3], [2, 1, 1]).unwrap();
        let grid = FieldGrid::amplitude(spec, vec![1.0, 2.0]).unwrap();
        let stem = dir.path().join("a");
        grid.write(&stem).unwrap();
        let bytes = std::fs::read(stem.with_extension("bin")).unwrap();
        assert_eq!(&bytes[..8], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[8..], &2.0f64.to_le_bytes());
    }
}
