//! One-dimensional interpolants on strictly increasing abscissae, applied
//! separably to rectilinear blocks.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Linear,
    CubicSpline,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Linear, Method::CubicSpline];

    pub fn label(self) -> &'static str {
        match self {
            Method::Linear => "linear",
            Method::CubicSpline => "cubic_spline",
        }
    }

    /// Fewest nodes per axis the method accepts.
    pub fn min_nodes(self) -> usize {
        match self {
            Method::Linear => 2,
            Method::CubicSpline => 4,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Method::Linear),
            "cubic_spline" | "spline" | "cubic" => Ok(Method::CubicSpline),
            _ => Err(Error::InvalidArgument(format!(
                "unknown interpolation method {s:?} (expected linear or cubic_spline)"
            ))),
        }
    }
}

/// Interpolant through `(x_i, y_i)`; outside `[x_0, x_n]` the end piece is continued.
#[derive(Debug, Clone)]
pub struct Interpolant {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the nodes (all zero for linear).
    m: Vec<f64>,
}

impl Interpolant {
    pub fn new(method: Method, x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidArgument("abscissae and ordinates differ in length".into()));
        }
        if x.len() < method.min_nodes() {
            return Err(Error::TooFewNodes {
                axis: 0,
                needed: method.min_nodes(),
                have: x.len(),
            });
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("abscissae must be strictly increasing".into()));
        }
        let m = match method {
            Method::Linear => vec![0.0; x.len()],
            Method::CubicSpline => natural_second_derivatives(x, y),
        };
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        let lin = a * self.y[i] + b * self.y[i + 1];
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        if m0 == 0.0 && m1 == 0.0 {
            return lin;
        }
        lin + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
    }
}

/// Second derivatives of the natural cubic spline (zero at both ends).
fn natural_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // tridiagonal system for interior nodes, Thomas algorithm
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for j in 0..k {
        let i = j + 1;
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        diag[j] = 2.0 * (h0 + h1);
        upper[j] = h1;
        rhs[j] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    for j in 1..k {
        let lower = x[j + 1] - x[j];
        let w = lower / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for j in (0..k - 1).rev() {
        m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
    }
    m
}

/// Resamples a 3D block (x fastest) from axes `src` onto axes `dst`, one axis
/// at a time.
pub fn resample_separable(method: Method, src: &[Vec<f64>; 3], values: &[f64], dst: &[Vec<f64>; 3]) -> Result<Vec<f64>> {
    for a in 0..3 {
        if src[a].len() < method.min_nodes() {
            return Err(Error::TooFewNodes {
                axis: a,
                needed: method.min_nodes(),
                have: src[a].len(),
            });
        }
    }
    let mut dims = [src[0].len(), src[1].len(), src[2].len()];
    if values.len() != dims.iter().product::<usize>() {
        return Err(Error::InvalidArgument("value count does not match axes".into()));
    }
    let mut data = values.to_vec();
    for a in 0..3 {
        let mut out_dims = dims;
        out_dims[a] = dst[a].len();
        let mut out = vec![0.0; out_dims.iter().product()];
        let stride_in = [1, dims[0], dims[0] * dims[1]][a];
        let stride_out = [1, out_dims[0], out_dims[0] * out_dims[1]][a];
        // iterate over every line along axis `a`
        let others: Vec<usize> = (0..3).filter(|&b| b != a).collect();
        let mut line = vec![0.0; dims[a]];
        for i1 in 0..dims[others[1]] {
            for i0 in 0..dims[others[0]] {
                let mut idx_in = [0usize; 3];
                idx_in[others[0]] = i0;
                idx_in[others[1]] = i1;
                let base_in = idx_in[0] + dims[0] * (idx_in[1] + dims[1] * idx_in[2]);
                let base_out = idx_in[0] + out_dims[0] * (idx_in[1] + out_dims[1] * idx_in[2]);
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[base_in + j * stride_in];
                }
                let f = Interpolant::new(method, &src[a], &line)?;
                for (j, &t) in dst[a].iter().enumerate() {
                    out[base_out + j * stride_out] = f.eval(t);
                }
            }
        }
        data = out;
        dims = out_dims;
    }
    Ok(data)
}
