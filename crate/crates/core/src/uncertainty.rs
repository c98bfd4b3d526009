//! Monte Carlo propagation of probe-array measurement uncertainty through
//! the plane-wave reconstruction and the peak SAR search.
//!
//! A measurement is perturbed in this order: liquid parameters of the true
//! field, probe positions, inter-probe coupling, then per-probe amplitude and
//! phase noise. Reconstruction always uses the nominal wavenumber and the
//! nominal probe positions.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::em::Vec3C;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::parallel;
use crate::pwe::{self, PlanarSamples, Reconstruction, Spectrum};
use crate::rng::{derive_seed, stream};
use crate::sar::{self, Mass, SarEstimate};
use crate::source::{field_at_points_with, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Position,
    Permittivity,
    Conductivity,
    Coupling,
    Amplitude,
    Phase,
}

impl Factor {
    pub const ALL: [Factor; 6] = [
        Factor::Position,
        Factor::Permittivity,
        Factor::Conductivity,
        Factor::Coupling,
        Factor::Amplitude,
        Factor::Phase,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Factor::Position => "position",
            Factor::Permittivity => "permittivity",
            Factor::Conductivity => "conductivity",
            Factor::Coupling => "coupling",
            Factor::Amplitude => "amplitude",
            Factor::Phase => "phase",
        }
    }
}

impl std::str::FromStr for Factor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Factor::ALL
            .into_iter()
            .find(|f| f.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown factor {s:?}")))
    }
}

/// Widths of the input distributions and the factors that are switched on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSpec {
    /// Half-width of the uniform offset on each probe coordinate, m.
    pub probe_position_halfwidth_m: f64,
    pub eps_rel_halfwidth: f64,
    pub sigma_rel_halfwidth: f64,
    pub coupling_db_halfwidth: f64,
    pub amplitude_noise_sd: f64,
    pub phase_noise_sd: f64,
    pub enabled_factors: BTreeSet<Factor>,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            probe_position_halfwidth_m: 1e-4,
            eps_rel_halfwidth: 0.1,
            sigma_rel_halfwidth: 0.1,
            coupling_db_halfwidth: 2.0,
            amplitude_noise_sd: 0.025,
            phase_noise_sd: 0.025,
            enabled_factors: Factor::ALL.into_iter().collect(),
        }
    }
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        let w = [
            self.probe_position_halfwidth_m,
            self.eps_rel_halfwidth,
            self.sigma_rel_halfwidth,
            self.coupling_db_halfwidth,
            self.amplitude_noise_sd,
            self.phase_noise_sd,
        ];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("distribution widths must be finite and >= 0".into()));
        }
        if self.eps_rel_halfwidth >= 1.0 || self.sigma_rel_halfwidth >= 1.0 {
            return Err(Error::InvalidArgument("relative half-widths must be < 1".into()));
        }
        Ok(())
    }

    pub fn only(&self, factors: &[Factor]) -> Self {
        Self {
            enabled_factors: factors.iter().copied().collect(),
            ..self.clone()
        }
    }

    fn on(&self, f: Factor) -> bool {
        self.enabled_factors.contains(&f)
    }
}

/// 3 x 3 coupling coefficients per component pair, indexed `[px + 1][py + 1]`
/// for the neighbour at offset `(px, py)` probe pitches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrices {
    pub xx: [[Complex64; 3]; 3],
    pub xy: [[Complex64; 3]; 3],
    pub yx: [[Complex64; 3]; 3],
    pub yy: [[Complex64; 3]; 3],
}

const fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Measured coupling between E_x channels (scaled by 1e-2 in [`CouplingMatrices::reference`]).
const REF_XX: [[Complex64; 3]; 3] = [
    [c(-0.29, -0.27), c(-0.58, -0.73), c(-0.46, -0.33)],
    [c(0.46, -1.48), c(100.0, 0.0), c(0.37, -1.18)],
    [c(-0.33, -0.24), c(-0.65, -0.83), c(-0.24, -0.21)],
];

/// Coupling from E_y into E_x (scaled by 1e-3).
const REF_XY: [[Complex64; 3]; 3] = [
    [c(-0.3, -0.3), c(-0.5, -0.8), c(-0.2, 0.2)],
    [c(1.5, -7.0), c(2.5, -3.8), c(1.6, -0.6)],
    [c(-0.5, -1.0), c(-0.5, -0.7), c(-0.1, 0.3)],
];

impl CouplingMatrices {
    /// Reference coefficients; the self term of each channel is exactly 1.
    pub fn reference() -> Self {
        let xx = REF_XX.map(|r| r.map(|v| v * 1e-2));
        let xy = REF_XY.map(|r| r.map(|v| v * 1e-3));
        Self::from_xx_xy(xx, xy)
    }

    /// Completes the set from the mirror symmetry `yx[px][py] = xy[px][-py]`,
    /// `yy[px][py] = xx[px][-py]`.
    pub fn from_xx_xy(xx: [[Complex64; 3]; 3], xy: [[Complex64; 3]; 3]) -> Self {
        let mirror = |m: [[Complex64; 3]; 3]| m.map(|r| [r[2], r[1], r[0]]);
        Self {
            xx,
            xy,
            yx: mirror(xy),
            yy: mirror(xx),
        }
    }

    /// Self terms only: the uncoupled array.
    pub fn identity() -> Self {
        let mut xx = [[Complex64::new(0.0, 0.0); 3]; 3];
        xx[1][1] = Complex64::new(1.0, 0.0);
        Self::from_xx_xy(xx, [[Complex64::new(0.0, 0.0); 3]; 3])
    }

    /// Scales coefficient magnitudes by `10^(u/20)` with `u` in dB, one offset
    /// per `xx` and `xy` entry; the `xx` self term is never changed.
    pub fn with_db_offsets(&self, xx_db: &[[f64; 3]; 3], xy_db: &[[f64; 3]; 3]) -> Self {
        let mut xx = self.xx;
        let mut xy = self.xy;
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (1, 1) {
                    xx[i][j] *= 10f64.powf(xx_db[i][j] / 20.0);
                }
                xy[i][j] *= 10f64.powf(xy_db[i][j] / 20.0);
            }
        }
        Self::from_xx_xy(xx, xy)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..3).all(|i| (0..3).all(|j| self.yx[i][j] == self.xy[i][2 - j] && self.yy[i][j] == self.xx[i][2 - j]))
    }
}

/// Measured field of every probe as the coupled sum over its 3 x 3
/// neighbourhood (self term included once). Missing neighbours contribute nothing.
pub fn apply_coupling(samples: &PlanarSamples, m: &CouplingMatrices) -> Result<PlanarSamples> {
    let [nx, ny] = samples.counts;
    if nx < 3 || ny < 3 {
        return Err(Error::InvalidArgument("coupling needs at least a 3 x 3 probe array".into()));
    }
    let mut ex = vec![Complex64::new(0.0, 0.0); nx * ny];
    let mut ey = ex.clone();
    for iy in 0..ny {
        for ix in 0..nx {
            let (mut sx, mut sy) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            for px in -1i64..=1 {
                for py in -1i64..=1 {
                    let (jx, jy) = (ix as i64 + px, iy as i64 + py);
                    if jx < 0 || jy < 0 || jx >= nx as i64 || jy >= ny as i64 {
                        continue;
                    }
                    let j = jx as usize + nx * jy as usize;
                    let (a, b) = ((px + 1) as usize, (py + 1) as usize);
                    sx += m.xx[a][b] * samples.ex[j] + m.xy[a][b] * samples.ey[j];
                    sy += m.yx[a][b] * samples.ex[j] + m.yy[a][b] * samples.ey[j];
                }
            }
            ex[ix + nx * iy] = sx;
            ey[ix + nx * iy] = sy;
        }
    }
    Ok(PlanarSamples { ex, ey, ..samples.clone() })
}

/// One concrete draw of every input.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub position_offsets: Vec<[f64; 3]>,
    pub eps_factor: f64,
    pub sigma_factor: f64,
    pub coupling: CouplingMatrices,
    /// Relative amplitude noise `(n_x, n_y)` per probe.
    pub amplitude_noise: Vec<[f64; 2]>,
    /// Relative phase noise `(n_x, n_y)` per probe.
    pub phase_noise: Vec<[f64; 2]>,
}

impl Perturbation {
    /// Nominal inputs with the reference coupling.
    pub fn nominal(probes: usize) -> Self {
        Self {
            position_offsets: vec![[0.0; 3]; probes],
            eps_factor: 1.0,
            sigma_factor: 1.0,
            coupling: CouplingMatrices::reference(),
            amplitude_noise: vec![[0.0; 2]; probes],
            phase_noise: vec![[0.0; 2]; probes],
        }
    }

    fn moves_field(&self) -> bool {
        self.eps_factor != 1.0 || self.sigma_factor != 1.0 || self.position_offsets.iter().any(|o| *o != [0.0; 3])
    }
}

/// Draws one perturbation. Every factor consumes its draws whether or not it
/// is enabled, so enabling a factor never shifts the draws of another.
pub fn sample_perturbation<R: Rng>(spec: &PerturbationSpec, probes: usize, rng: &mut R) -> Perturbation {
    let draw_u = |hw: f64, rng: &mut R| -> f64 {
        let u: f64 = rng.random_range(-1.0..=1.0);
        u * hw
    };
    let mut p = Perturbation::nominal(probes);

    let pos_hw = spec.probe_position_halfwidth_m;
    for o in p.position_offsets.iter_mut() {
        for v in o.iter_mut() {
            *v = draw_u(pos_hw, rng);
        }
    }
    if !spec.on(Factor::Position) {
        p.position_offsets.iter_mut().for_each(|o| *o = [0.0; 3]);
    }

    let e = draw_u(spec.eps_rel_halfwidth, rng);
    let s = draw_u(spec.sigma_rel_halfwidth, rng);
    if spec.on(Factor::Permittivity) {
        p.eps_factor = 1.0 + e;
    }
    if spec.on(Factor::Conductivity) {
        p.sigma_factor = 1.0 + s;
    }

    let mut xx_db = [[0.0; 3]; 3];
    let mut xy_db = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            xx_db[i][j] = draw_u(spec.coupling_db_halfwidth, rng);
            xy_db[i][j] = draw_u(spec.coupling_db_halfwidth, rng);
        }
    }
    if spec.on(Factor::Coupling) {
        p.coupling = CouplingMatrices::reference().with_db_offsets(&xx_db, &xy_db);
    }

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    for n in p.amplitude_noise.iter_mut() {
        *n = [std_normal.sample(rng), std_normal.sample(rng)].map(|z| z * spec.amplitude_noise_sd);
    }
    if !spec.on(Factor::Amplitude) {
        p.amplitude_noise.iter_mut().for_each(|n| *n = [0.0; 2]);
    }
    for n in p.phase_noise.iter_mut() {
        *n = [std_normal.sample(rng), std_normal.sample(rng)].map(|z| z * spec.phase_noise_sd);
    }
    if !spec.on(Factor::Phase) {
        p.phase_noise.iter_mut().for_each(|n| *n = [0.0; 2]);
    }
    p
}

/// `|E| (1 + n_a) exp(i arg(E) (1 + n_p))` with `arg` in `(-pi, pi]`.
fn noisy(e: Complex64, na: f64, np: f64) -> Complex64 {
    if na == 0.0 && np == 0.0 {
        return e;
    }
    let mut phase = e.arg();
    if phase == -PI {
        phase = PI;
    }
    Complex64::from_polar(e.norm() * (1.0 + na), phase * (1.0 + np))
}

/// Nominal (unperturbed, uncoupled) probe fields of a scenario.
pub fn nominal_fields(scenario: &Scenario) -> Result<Vec<Vec3C>> {
    crate::source::field_at_points(scenario, &scenario.geometry.probe_positions())
}

/// Simulated array reading for one perturbation. `nominal` may carry the
/// unperturbed probe fields to skip re-evaluation when neither the liquid
/// nor the probe positions change.
pub fn perturb_measurement_with(scenario: &Scenario, p: &Perturbation, nominal: Option<&[Vec3C]>) -> Result<PlanarSamples> {
    let positions = scenario.geometry.probe_positions();
    if p.position_offsets.len() != positions.len() {
        return Err(Error::InvalidArgument("perturbation does not match the probe count".into()));
    }
    let fields = match nominal {
        Some(f) if !p.moves_field() => f.to_vec(),
        _ => {
            let medium = scenario.medium.scaled(p.eps_factor, p.sigma_factor)?;
            let pts: Vec<[f64; 3]> = positions
                .iter()
                .zip(&p.position_offsets)
                .map(|(r, o)| [r[0] + o[0], r[1] + o[1], r[2] + o[2]])
                .collect();
            field_at_points_with(&scenario.dipoles, medium.wavenumber(), scenario.amplitude_scale, &pts)?
        }
    };
    let clean = PlanarSamples::from_fields(&scenario.geometry, &fields)?;
    let mut s = apply_coupling(&clean, &p.coupling)?;
    for i in 0..s.len() {
        s.ex[i] = noisy(s.ex[i], p.amplitude_noise[i][0], p.phase_noise[i][0]);
        s.ey[i] = noisy(s.ey[i], p.amplitude_noise[i][1], p.phase_noise[i][1]);
    }
    Ok(s)
}

pub fn perturb_measurement(scenario: &Scenario, p: &Perturbation) -> Result<PlanarSamples> {
    perturb_measurement_with(scenario, p, None)
}

/// Box-plot statistics of one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub factor_label: String,
    pub delta: f64,
    pub mass: Mass,
    pub samples: Vec<f64>,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub iqr: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl McSummary {
    pub fn from_samples(factor_label: &str, delta: f64, mass: Mass, samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no Monte Carlo samples".into()));
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile(&sorted, 0.25);
        let median = quantile(&sorted, 0.5);
        let q3 = quantile(&sorted, 0.75);
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = sorted.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence).collect();
        let outliers = sorted.iter().copied().filter(|v| *v < lo_fence || *v > hi_fence).collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(Self {
            factor_label: factor_label.to_string(),
            delta,
            mass,
            q1,
            median,
            q3,
            iqr,
            whisker_low: inside.first().copied().unwrap_or(q1),
            whisker_high: inside.last().copied().unwrap_or(q3),
            outliers,
            mean,
            std_dev: var.sqrt(),
            samples,
        })
    }
}

/// Numerical settings of the Monte Carlo engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub seed: u64,
    /// Grid step of the reconstructed volume.
    pub resolution: f64,
    /// Lateral half-width of the searched region around the nominal peak;
    /// `None` searches the whole volume.
    pub window_half_width: Option<f64>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            resolution: 2e-3,
            window_half_width: Some(0.03),
        }
    }
}

/// Reconstruction and search settings shared by every trial of a run.
pub struct McContext<'a> {
    scenario: &'a Scenario,
    nominal: Vec<Vec3C>,
    grid: GridSpec,
    m: [usize; 2],
}

impl<'a> McContext<'a> {
    /// Evaluates the nominal probe fields and fixes the search grid, centred
    /// laterally on the nominal 1 g peak at `delta = 0`.
    pub fn new(scenario: &'a Scenario, config: &McConfig) -> Result<Self> {
        let nominal = nominal_fields(scenario)?;
        let g = &scenario.geometry;
        let full = g.volume_grid(config.resolution)?;
        let m = pwe::default_counts([g.probes_per_side; 2]);
        let mut ctx = Self {
            scenario,
            nominal,
            grid: full,
            m,
        };
        if let Some(hw) = config.window_half_width {
            let samples = perturb_measurement_with(scenario, &Perturbation::nominal(ctx.nominal.len()), Some(&ctx.nominal))?;
            let [sx, sy] = pwe::forward_spectrum(&samples, m)?;
            let est = ctx.estimate(&sx, &sy, 0.0, Mass::OneGram)?;
            let h = config.resolution;
            let centre = [0, 1].map(|a| {
                let c = est.cube.corner[a] + est.cube.side / 2.0;
                // snap to the full grid so both searches share nodes
                (c / h).round() * h
            });
            let steps = (hw / h + 1e-9).floor() as usize;
            let mut origin = full.origin;
            let mut dims = full.dims;
            for a in 0..2 {
                let lo = (centre[a] - steps as f64 * h).max(full.origin[a]);
                let hi = (centre[a] + steps as f64 * h).min(full.max_corner()[a]);
                origin[a] = lo;
                dims[a] = ((hi - lo) / h + 1e-9).floor() as usize + 1;
            }
            ctx.grid = GridSpec::new(origin, full.spacing, dims)?;
        }
        Ok(ctx)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Peak SAR from measurement spectra at truncation level `delta`.
    fn estimate(&self, sx: &Spectrum, sy: &Spectrum, delta: f64, mass: Mass) -> Result<SarEstimate> {
        let rec = Reconstruction::from_spectra(self.scenario.geometry.measurement_plane_z, sx.clone(), sy.clone(), self.scenario.wavenumber(), delta)?;
        let intensity = rec.intensity(self.grid)?;
        sar::peak_from_intensity(&self.grid, &intensity, mass, &self.scenario.medium)
    }

    /// Estimate without perturbation (reference coupling only).
    pub fn deterministic(&self, delta: f64, mass: Mass) -> Result<SarEstimate> {
        let p = Perturbation::nominal(self.nominal.len());
        self.trial(&p, &[delta], mass).map(|v| v[0])
    }

    /// One trial evaluated at several truncation levels from a single
    /// simulated measurement.
    pub fn trial(&self, p: &Perturbation, deltas: &[f64], mass: Mass) -> Result<Vec<SarEstimate>> {
        let samples = perturb_measurement_with(self.scenario, p, Some(&self.nominal))?;
        let [sx, sy] = pwe::forward_spectrum(&samples, self.m)?;
        deltas.iter().map(|&d| self.estimate(&sx, &sy, d, mass)).collect()
    }

    /// Runs `trials` draws of `spec` (stream `t` of the run seed for trial
    /// `t`) and summarises the estimates per `delta`.
    pub fn run(&self, spec: &PerturbationSpec, label: &str, seed: u64, trials: usize, deltas: &[f64], mass: Mass) -> Result<Vec<McSummary>> {
        spec.validate()?;
        if trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        for &d in deltas {
            pwe::check_delta(d)?;
        }
        let probes = self.nominal.len();
        let per_trial = parallel::try_map_range(trials, |t| {
            let mut rng = stream(seed, t as u64);
            let p = sample_perturbation(spec, probes, &mut rng);
            self.trial(&p, deltas, mass)
        })?;
        deltas
            .iter()
            .enumerate()
            .map(|(i, &d)| McSummary::from_samples(label, d, mass, per_trial.iter().map(|v| v[i].value).collect()))
            .collect()
    }
}

/// Monte Carlo estimate distribution for one truncation level.
pub fn monte_carlo(scenario: &Scenario, spec: &PerturbationSpec, trials: usize, delta: f64, mass: Mass, config: &McConfig) -> Result<McSummary> {
    let ctx = McContext::new(scenario, config)?;
    let label = run_label(spec);
    let seed = derive_seed(config.seed, &label);
    Ok(ctx.run(spec, &label, seed, trials, &[delta], mass)?.remove(0))
}

/// Label of a run: the enabled factors joined by `+`, `all` or `none`.
pub fn run_label(spec: &PerturbationSpec) -> String {
    if spec.enabled_factors.len() == Factor::ALL.len() {
        "all".into()
    } else if spec.enabled_factors.is_empty() {
        "none".into()
    } else {
        spec.enabled_factors.iter().map(|f| f.label()).collect::<Vec<_>>().join("+")
    }
}

/// One run per factor of `spec.enabled_factors` with only that factor on,
/// plus a run with all of them, each at every `delta`. With no factors
/// enabled a single reference run is returned.
pub fn factor_sweep(scenario: &Scenario, spec: &PerturbationSpec, trials: usize, deltas: &[f64], mass: Mass, config: &McConfig) -> Result<Vec<McSummary>> {
    let ctx = McContext::new(scenario, config)?;
    let mut runs: Vec<PerturbationSpec> = spec.enabled_factors.iter().map(|f| spec.only(&[*f])).collect();
    if spec.enabled_factors.len() != 1 {
        runs.push(spec.clone());
    }
    let mut out = Vec::new();
    for r in runs {
        let label = run_label(&r);
        let seed = derive_seed(config.seed, &label);
        out.extend(ctx.run(&r, &label, seed, trials, deltas, mass)?);
    }
    Ok(out)
}
