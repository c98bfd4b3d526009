//! Command-line experiment driver.
//!
//! Settings are resolved as command-line flags, then the `--config` JSON
//! document, then built-in defaults. Every command writes into
//! `<out>/<command>/` and leaves a `manifest.json` describing the run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FieldGrid;
use crate::interp::Method;
use crate::pwe::{self, PlanarSamples, Reconstruction};
use crate::sar::{self, Mass};
use crate::source::{self, build_case, case_row, Scenario};
use crate::traditional;
use crate::uncertainty::{factor_sweep, McConfig, McSummary, PerturbationSpec};

/// Version of the CSV and JSON layouts written by this tool.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "sarsim", version, about = "SAR measurement pipeline simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reference SAR of each case from the analytic field.
    Oracle(CommonArgs),
    /// Probe-array system with plane-wave reconstruction.
    Fast(CommonArgs),
    /// Single-probe scanning system.
    Traditional(CommonArgs),
    /// Monte Carlo uncertainty of the probe-array system.
    Montecarlo(CommonArgs),
    /// Merges oracle, fast and traditional results.
    Compare(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Case indices, e.g. `1,4,7` or `1-11`.
    #[arg(long, value_delimiter = ',')]
    pub cases: Option<Vec<String>>,
    /// Truncation levels in [0, 1].
    #[arg(long = "delta", value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    /// Interpolation methods: linear, cubic_spline.
    #[arg(long = "method", value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Monte Carlo trials per run
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed for case construction and Monte Carlo streams
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid step in metres.
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Output root directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Skip writing the binary field cache (oracle).
    #[arg(long)]
    pub no_cache: bool,
}

/// Contents of a `--config` file; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cases: Option<Vec<usize>>,
    pub deltas: Option<Vec<f64>>,
    pub methods: Option<Vec<Method>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub resolution: Option<f64>,
    pub out: Option<PathBuf>,
    pub perturbation: Option<PerturbationSpec>,
    pub mc_window_half_width: Option<Option<f64>>,
    pub cache: Option<bool>,
}

/// Fully resolved settings of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub cases: Vec<usize>,
    pub deltas: Vec<f64>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    pub resolution: f64,
    pub out: PathBuf,
    pub perturbation: PerturbationSpec,
    pub mc_window_half_width: Option<f64>,
    pub cache: bool,
}

pub const DEFAULT_SEED: u64 = 2024;

impl Settings {
    fn defaults(command: &str) -> Self {
        let mc = command == "montecarlo";
        Self {
            cases: if mc { vec![4] } else { (1..=11).collect() },
            deltas: vec![0.0, 0.01, 0.02, 0.03],
            methods: Method::ALL.to_vec(),
            trials: 500,
            seed: DEFAULT_SEED,
            resolution: if mc { McConfig::default().resolution } else { 1e-3 },
            out: PathBuf::from("results"),
            perturbation: PerturbationSpec::default(),
            mc_window_half_width: McConfig::default().window_half_width,
            cache: true,
        }
    }

    /// Flags over config file over defaults.
    pub fn resolve(command: &str, args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => serde_json::from_slice::<RunConfig>(&fs::read(p)?)?,
            None => RunConfig::default(),
        };
        Self::merge(command, args, file)
    }

    pub fn merge(command: &str, args: &CommonArgs, file: RunConfig) -> Result<Self> {
        let mut s = Self::defaults(command);
        if let Some(v) = file.cases {
            s.cases = v;
        }
        if let Some(v) = file.deltas {
            s.deltas = v;
        }
        if let Some(v) = file.methods {
            s.methods = v;
        }
        if let Some(v) = file.trials {
            s.trials = v;
        }
        if let Some(v) = file.seed {
            s.seed = v;
        }
        if let Some(v) = file.resolution {
            s.resolution = v;
        }
        if let Some(v) = file.out {
            s.out = v;
        }
        if let Some(v) = file.perturbation {
            s.perturbation = v;
        }
        if let Some(v) = file.mc_window_half_width {
            s.mc_window_half_width = v;
        }
        if let Some(v) = file.cache {
            s.cache = v;
        }

        if let Some(v) = &args.cases {
            s.cases = parse_cases(v)?;
        }
        if let Some(v) = &args.deltas {
            s.deltas = v.clone();
        }
        if let Some(v) = &args.methods {
            s.methods = v.iter().map(|m| m.parse()).collect::<Result<_>>()?;
        }
        if let Some(v) = args.trials {
            s.trials = v;
        }
        if let Some(v) = args.seed {
            s.seed = v;
        }
        if let Some(v) = args.resolution {
            s.resolution = v;
        }
        if let Some(v) = &args.out {
            s.out = v.clone();
        }
        if args.no_cache {
            s.cache = false;
        }
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        for &c in &self.cases {
            case_row(c)?;
        }
        for &d in &self.deltas {
            pwe::check_delta(d)?;
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        if !(self.resolution > 0.0 && self.resolution <= 2e-3 + 1e-12) {
            return Err(Error::InvalidArgument("resolution must lie in (0, 2 mm]".into()));
        }
        self.perturbation.validate()
    }
}

/// Parses `["1", "4-6"]` into `[1, 4, 5, 6]`.
pub fn parse_cases(items: &[String]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for item in items {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let bad = || Error::InvalidArgument(format!("bad case list entry {item:?}"));
        if let Some((a, b)) = item.split_once('-') {
            let a: usize = a.parse().map_err(|_| bad())?;
            let b: usize = b.parse().map_err(|_| bad())?;
            out.extend(a..=b);
        } else {
            out.push(item.parse().map_err(|_| bad())?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub schema_version: u32,
    pub timestamp: String,
    pub settings: Settings,
}

fn write_manifest(dir: &Path, command: &str, settings: &Settings) -> Result<()> {
    let m = RunManifest {
        command: command.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        schema_version: SCHEMA_VERSION,
        timestamp: chrono::Utc::now().to_rfc3339(),
        settings: settings.clone(),
    };
    let mut s = serde_json::to_string_pretty(&m)?;
    s.push('\n');
    fs::write(dir.join("manifest.json"), s)?;
    Ok(())
}

fn command_dir(settings: &Settings, command: &str) -> Result<PathBuf> {
    let dir = settings.out.join(command);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Oracle(a) => cmd_oracle(&Settings::resolve("oracle", &a)?),
        Command::Fast(a) => cmd_fast(&Settings::resolve("fast", &a)?),
        Command::Traditional(a) => cmd_traditional(&Settings::resolve("traditional", &a)?),
        Command::Montecarlo(a) => cmd_montecarlo(&Settings::resolve("montecarlo", &a)?),
        Command::Compare(a) => cmd_compare(&Settings::resolve("compare", &a)?),
    }
}

fn case_tag(c: usize) -> String {
    format!("case{c:02}")
}

fn delta_tag(d: f64) -> String {
    format!("delta{d}")
}

/// Reference peaks and, optionally, the field cache for each case.
pub fn cmd_oracle(s: &Settings) -> Result<()> {
    let dir = command_dir(s, "oracle")?;
    write_manifest(&dir, "oracle", s)?;
    let mut w = csv::Writer::from_path(dir.join("oracle.csv"))?;
    w.write_record([
        "case",
        "frequency_mhz",
        "relative_permittivity",
        "conductivity",
        "amplitude_scale",
        "sar_1g",
        "sar_10g",
        "published_sar_10g",
        "corner_1g_x",
        "corner_1g_y",
        "corner_1g_z",
        "corner_10g_x",
        "corner_10g_y",
        "corner_10g_z",
    ])?;
    for &c in &s.cases {
        log::info!("oracle: case {c}");
        let sc = build_case(c, s.seed)?;
        fs::write(dir.join(format!("{}.scenario.json", case_tag(c))), sc.to_json()? + "\n")?;
        let (one, ten) = sar::oracle_peak_sar(&sc, s.resolution)?;
        if s.cache {
            let spec = sc.geometry.volume_grid(s.resolution)?;
            source::field_on_grid(&sc, spec)?.write(&dir.join(format!("{}_field", case_tag(c))))?;
        }
        let row = case_row(c)?;
        w.write_record(&[
            c.to_string(),
            row.frequency_mhz.to_string(),
            row.relative_permittivity.to_string(),
            row.conductivity.to_string(),
            sc.amplitude_scale.to_string(),
            one.value.to_string(),
            ten.value.to_string(),
            row.reference_sar_10g.to_string(),
            one.cube.corner[0].to_string(),
            one.cube.corner[1].to_string(),
            one.cube.corner[2].to_string(),
            ten.cube.corner[0].to_string(),
            ten.cube.corner[1].to_string(),
            ten.cube.corner[2].to_string(),
        ])?;
        w.flush()?;
    }
    w.flush()?;
    Ok(())
}

/// Nominal probe-array reading: analytic field at the probes, no coupling or noise.
pub fn nominal_samples(sc: &Scenario) -> Result<PlanarSamples> {
    let fields = source::field_at_points(sc, &sc.geometry.probe_positions())?;
    PlanarSamples::from_fields(&sc.geometry, &fields)
}

pub fn cmd_fast(s: &Settings) -> Result<()> {
    let dir = command_dir(s, "fast")?;
    write_manifest(&dir, "fast", s)?;
    let mut w = csv::Writer::from_path(dir.join("fast.csv"))?;
    w.write_record(["case", "delta", "threshold", "retained_bins", "sar_1g", "sar_10g"])?;
    for &c in &s.cases {
        log::info!("fast: case {c}");
        let sc = build_case(c, s.seed)?;
        let samples = nominal_samples(&sc)?;
        pwe::write_samples_csv(&dir.join(format!("{}_samples.csv", case_tag(c))), &samples)?;
        let m = pwe::default_counts(samples.counts);
        let [sx, sy] = pwe::forward_spectrum(&samples, m)?;
        for &d in &s.deltas {
            let rec = Reconstruction::from_spectra(samples.plane_z, sx.clone(), sy.clone(), sc.wavenumber(), d)?;
            let [ex, ey, ez] = &rec.spectra;
            pwe::write_spectrum_csv(
                &dir.join(format!("{}_{}_spectrum.csv", case_tag(c), delta_tag(d))),
                &["ex", "ey", "ez"],
                &[ex, ey, ez],
            )?;
            let (one, ten) = pwe::estimate_peak_sar(&rec, &sc.geometry, &sc.medium, s.resolution)?;
            w.write_record(&[
                c.to_string(),
                d.to_string(),
                rec.policy.threshold.to_string(),
                ex.nonzero_bins().max(ey.nonzero_bins()).to_string(),
                one.value.to_string(),
                ten.value.to_string(),
            ])?;
            w.flush()?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_traditional(s: &Settings) -> Result<()> {
    let dir = command_dir(s, "traditional")?;
    write_manifest(&dir, "traditional", s)?;
    let mut w = csv::Writer::from_path(dir.join("traditional.csv"))?;
    w.write_record(["case", "method", "local_maxima", "sar_1g", "sar_10g"])?;
    for &c in &s.cases {
        log::info!("traditional: case {c}");
        let sc = build_case(c, s.seed)?;
        for (i, &method) in s.methods.iter().enumerate() {
            let r = traditional::traditional_estimate_at(&sc, &sc.geometry, &sc.medium, method, s.resolution)?;
            if i == 0 {
                r.area.write_csv(&dir.join(format!("{}_area_scan.csv", case_tag(c))))?;
                for (j, z) in r.zooms.iter().enumerate() {
                    z.write_csv(&dir.join(format!("{}_zoom{j}.csv", case_tag(c))))?;
                }
            }
            w.write_record(&[
                c.to_string(),
                method.label().to_string(),
                r.maxima.len().to_string(),
                r.sar_1g.value.to_string(),
                r.sar_10g.value.to_string(),
            ])?;
            w.flush()?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct McReport<'a> {
    case: usize,
    deterministic: BTreeMap<String, f64>,
    runs: Vec<McRunReport<'a>>,
}

#[derive(Debug, Serialize)]
struct McRunReport<'a> {
    factor: &'a str,
    delta: f64,
    q1: f64,
    median: f64,
    q3: f64,
    iqr: f64,
    whisker_low: f64,
    whisker_high: f64,
    outliers: &'a [f64],
    mean: f64,
    std_dev: f64,
}

pub fn cmd_montecarlo(s: &Settings) -> Result<()> {
    let dir = command_dir(s, "montecarlo")?;
    write_manifest(&dir, "montecarlo", s)?;
    let mut trials = csv::Writer::from_path(dir.join("trials.csv"))?;
    trials.write_record(["case", "factor", "delta", "trial", "sar_1g"])?;
    let config = McConfig {
        seed: s.seed,
        resolution: s.resolution,
        window_half_width: s.mc_window_half_width,
    };
    let mut reports = Vec::new();
    let mut all: Vec<(usize, Vec<McSummary>, BTreeMap<String, f64>)> = Vec::new();
    for &c in &s.cases {
        log::info!("montecarlo: case {c}");
        let sc = build_case(c, s.seed)?;
        let ctx = crate::uncertainty::McContext::new(&sc, &config)?;
        let mut det = BTreeMap::new();
        for &d in &s.deltas {
            det.insert(delta_tag(d), ctx.deterministic(d, Mass::OneGram)?.value);
        }
        let runs = factor_sweep(&sc, &s.perturbation, s.trials, &s.deltas, Mass::OneGram, &config)?;
        for r in &runs {
            for (t, v) in r.samples.iter().enumerate() {
                trials.write_record(&[c.to_string(), r.factor_label.clone(), r.delta.to_string(), t.to_string(), v.to_string()])?;
            }
        }
        trials.flush()?;
        all.push((c, runs, det));
    }
    for (c, runs, det) in &all {
        reports.push(McReport {
            case: *c,
            deterministic: det.clone(),
            runs: runs
                .iter()
                .map(|r| McRunReport {
                    factor: &r.factor_label,
                    delta: r.delta,
                    q1: r.q1,
                    median: r.median,
                    q3: r.q3,
                    iqr: r.iqr,
                    whisker_low: r.whisker_low,
                    whisker_high: r.whisker_high,
                    outliers: &r.outliers,
                    mean: r.mean,
                    std_dev: r.std_dev,
                })
                .collect(),
        });
    }
    let mut js = serde_json::to_string_pretty(&reports)?;
    js.push('\n');
    fs::write(dir.join("summary.json"), js)?;
    Ok(())
}

type Table = Vec<BTreeMap<String, String>>;

fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect());
    }
    Ok(out)
}

fn field(row: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    row.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::InvalidArgument(format!("missing or malformed column {key}")))
}

pub fn cmd_compare(s: &Settings) -> Result<()> {
    let sources = [
        ("oracle", s.out.join("oracle").join("oracle.csv")),
        ("fast", s.out.join("fast").join("fast.csv")),
        ("traditional", s.out.join("traditional").join("traditional.csv")),
    ];
    let missing: Vec<String> = sources
        .iter()
        .filter(|(_, p)| !p.exists())
        .map(|(cmd, p)| format!("{} (run `sarsim {cmd}` first)", p.display()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing.join(", ")));
    }
    let oracle = read_table(&sources[0].1)?;
    let fast = read_table(&sources[1].1)?;
    let trad = read_table(&sources[2].1)?;
    let dir = command_dir(s, "compare")?;
    write_manifest(&dir, "compare", s)?;
    let mut w = csv::Writer::from_path(dir.join("compare.csv"))?;
    w.write_record(["case", "system", "setting", "mass", "estimate", "reference", "relative_error"])?;
    for &c in &s.cases {
        let cs = c.to_string();
        let Some(o) = oracle.iter().find(|r| r.get("case") == Some(&cs)) else {
            return Err(Error::MissingInputs(format!("case {c} in oracle.csv (run `sarsim oracle --cases {c}`)")));
        };
        let refs = [("1g", field(o, "sar_1g")?), ("10g", field(o, "sar_10g")?)];
        let mut emit = |system: &str, setting: String, row: &BTreeMap<String, String>| -> Result<()> {
            for (mass, reference) in refs {
                let est = field(row, &format!("sar_{mass}"))?;
                w.write_record(&[
                    cs.clone(),
                    system.to_string(),
                    setting.clone(),
                    mass.to_string(),
                    est.to_string(),
                    reference.to_string(),
                    ((est - reference) / reference).to_string(),
                ])?;
            }
            Ok(())
        };
        for r in fast.iter().filter(|r| r.get("case") == Some(&cs)) {
            emit("fast", format!("delta={}", r["delta"]), r)?;
        }
        for r in trad.iter().filter(|r| r.get("case") == Some(&cs)) {
            emit("traditional", r["method"].clone(), r)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads an oracle field cache written by [`cmd_oracle`].
pub fn load_field_cache(out: &Path, case: usize) -> Result<FieldGrid> {
    FieldGrid::read(&out.join("oracle").join(format!("{}_field", case_tag(case))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_lists() {
        assert_eq!(parse_cases(&["1".into(), "4-6".into()]).unwrap(), vec![1, 4, 5, 6]);
        assert!(parse_cases(&["x".into()]).is_err());
    }

    #[test]
    fn precedence_flags_over_file_over_defaults() {
        let file = RunConfig {
            seed: Some(7),
            trials: Some(20),
            cases: Some(vec![2]),
            ..Default::default()
        };
        let args = CommonArgs {
            seed: Some(9),
            ..Default::default()
        };
        let s = Settings::merge("montecarlo", &args, file).unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.trials, 20);
        assert_eq!(s.cases, vec![2]);
        assert_eq!(s.deltas, vec![0.0, 0.01, 0.02, 0.03]);
    }

    #[test]
    fn invalid_settings() {
        let bad_delta = CommonArgs {
            deltas: Some(vec![1.5]),
            ..Default::default()
        };
        assert!(Settings::merge("fast", &bad_delta, RunConfig::default()).is_err());
        let bad_method = CommonArgs {
            methods: Some(vec!["nearest".into()]),
            ..Default::default()
        };
        assert!(Settings::merge("traditional", &bad_method, RunConfig::default()).is_err());
        let bad_case = CommonArgs {
            cases: Some(vec!["12".into()]),
            ..Default::default()
        };
        assert!(Settings::merge("oracle", &bad_case, RunConfig::default()).is_err());
    }
}
