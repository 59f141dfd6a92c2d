//! Configuration documents and file formats. Frequencies are GHz
//! (`nu = omega / 2pi`) and times are ns on this side of the boundary.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dynamics::TrajectoryRecord;
use crate::error::{PulseError, Result};
use crate::lct::{log_lambda_grid, LctConfig, LctResult};
use crate::model::{
    build_control_generator, coupling_in_spectrum, frequency_to_flux, ghz_to_rad, rad_to_ghz,
    spectrum_at, BasisLabel, SystemParams,
};
use crate::optimize::{AnalyticFitConfig, Bounds, ReversibilityConfig, TruncationConfig};
use crate::pulses::{AnalyticPulseFile, AnalyticPulseParams, PulseSpectrum, Waveform};

/// Environment variable overriding the default time step (ns).
pub const DT_ENV: &str = "PULSE_DT_NS";

/// Time step used when a section does not set one.
pub const DEFAULT_DT_NS: f64 = 0.01;

/// Default step, honouring [`DT_ENV`].
pub fn default_dt() -> Result<f64> {
    match std::env::var(DT_ENV) {
        Ok(s) => match s.trim().parse::<f64>() {
            Ok(dt) if dt.is_finite() && dt > 0.0 => Ok(dt),
            _ => Err(PulseError::Config(format!("{DT_ENV}={s:?} is not a positive number"))),
        },
        Err(_) => Ok(DEFAULT_DT_NS),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    pub qubit_freqs_ghz: Vec<f64>,
    pub couplings_ghz: Vec<f64>,
    pub tc_max_freq_ghz: f64,
}

impl DeviceSection {
    pub fn params(&self) -> Result<SystemParams> {
        SystemParams::from_ghz(&self.qubit_freqs_ghz, &self.couplings_ghz, self.tc_max_freq_ghz)
    }
}

/// Logarithmic gain scan replacing a fixed `lambda`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaScan {
    pub start: f64,
    #[serde(default = "default_per_octave")]
    pub per_octave: u32,
    pub count: usize,
    #[serde(default = "default_goal")]
    pub goal: f64,
}

impl LambdaScan {
    pub fn grid(&self) -> Vec<f64> {
        log_lambda_grid(self.start, self.per_octave, self.count)
    }
}

fn default_per_octave() -> u32 {
    4
}

fn default_goal() -> f64 {
    1e-6
}

fn default_t_max() -> f64 {
    450.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LctSection {
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub lambda_scan: Option<LambdaScan>,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub dt_ns: Option<f64>,
    #[serde(default = "default_t_max")]
    pub t_max_ns: f64,
    pub initial: String,
    pub target: String,
    #[serde(default)]
    pub n_prime: Option<usize>,
    #[serde(default)]
    pub reference_pulse_path: Option<PathBuf>,
    #[serde(default)]
    pub lambda2: Option<f64>,
}

impl LctSection {
    /// Core run settings. A relative `reference_pulse_path` is resolved
    /// against `base_dir`.
    pub fn to_config(&self, base_dir: &Path) -> Result<LctConfig> {
        let mut cfg = LctConfig::new(parse_label(&self.initial)?, parse_label(&self.target)?);
        cfg.lambda = self.lambda;
        cfg.eta = self.eta;
        cfg.dt = match self.dt_ns {
            Some(dt) => dt,
            None => default_dt()?,
        };
        cfg.t_max = self.t_max_ns;
        cfg.n_prime = self.n_prime;
        cfg.lambda2 = self.lambda2;
        if let Some(path) = &self.reference_pulse_path {
            let path = if path.is_relative() { base_dir.join(path) } else { path.clone() };
            cfg.reference = Some(read_waveform_csv(&path)?);
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub cutoff_ghz: f64,
    /// Gain of the refined run; no refinement when absent.
    #[serde(default)]
    pub lambda2: Option<f64>,
    #[serde(default)]
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReversibilitySection {
    pub lambda2_init: f64,
    pub lambda2_bounds: [f64; 2],
    pub cutoff_init_ghz: f64,
    pub cutoff_candidates_ghz: Vec<f64>,
    pub fidelity_goal: f64,
    pub max_outer_iters: usize,
    pub simplex_tolerance: f64,
    pub max_evals_per_cutoff: usize,
    pub eta: f64,
}

impl Default for ReversibilitySection {
    fn default() -> Self {
        let d = ReversibilityConfig::new(LctConfig::new(BasisLabel::new(vec![]), BasisLabel::new(vec![])));
        Self {
            lambda2_init: d.lambda2_init,
            lambda2_bounds: d.lambda2_bounds,
            cutoff_init_ghz: d.cutoff_init_ghz,
            cutoff_candidates_ghz: d.cutoff_candidates,
            fidelity_goal: d.fidelity_goal,
            max_outer_iters: d.max_outer_iters,
            simplex_tolerance: d.simplex_tolerance,
            max_evals_per_cutoff: d.max_evals_per_cutoff,
            eta: 0.0,
        }
    }
}

impl ReversibilitySection {
    /// Loop settings on top of the bare run's labels and time grid.
    pub fn to_config(&self, bare: &LctConfig) -> ReversibilityConfig {
        let mut lct = bare.clone();
        lct.eta = self.eta;
        lct.reference = None;
        ReversibilityConfig {
            lct,
            lambda2_init: self.lambda2_init,
            lambda2_bounds: self.lambda2_bounds,
            cutoff_init_ghz: self.cutoff_init_ghz,
            cutoff_candidates: self.cutoff_candidates_ghz.clone(),
            fidelity_goal: self.fidelity_goal,
            max_outer_iters: self.max_outer_iters,
            simplex_tolerance: self.simplex_tolerance,
            max_evals_per_cutoff: self.max_evals_per_cutoff,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationSection {
    pub sigma_ns: f64,
    pub fidelity_goal: f64,
    pub tolerance_ns: f64,
    pub max_evals: usize,
}

impl Default for TruncationSection {
    fn default() -> Self {
        Self { sigma_ns: 2.0, fidelity_goal: 1e-6, tolerance_ns: 1e-3, max_evals: 60 }
    }
}

impl TruncationSection {
    pub fn to_config(&self, source: &BasisLabel, destination: &BasisLabel) -> TruncationConfig {
        TruncationConfig {
            source: source.clone(),
            destination: destination.clone(),
            sigma: self.sigma_ns,
            fidelity_goal: self.fidelity_goal,
            tolerance: self.tolerance_ns,
            max_evals: self.max_evals,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticBoundsFile {
    pub lower: AnalyticPulseFile,
    pub upper: AnalyticPulseFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticSection {
    /// Starting parameters; built from the crossings and the delays below
    /// when absent.
    pub init: Option<AnalyticPulseFile>,
    pub bounds: Option<AnalyticBoundsFile>,
    pub source: String,
    pub destination: String,
    pub dt_ns: Option<f64>,
    pub fidelity_goal: f64,
    pub stage1_evals: usize,
    pub stage2_evals: usize,
    pub tau1_ns: f64,
    pub switch_delay_ns: f64,
    pub total_delay_ns: f64,
    pub initial_sigma_ns: f64,
}

impl Default for AnalyticSection {
    fn default() -> Self {
        Self {
            init: None,
            bounds: None,
            source: "010".into(),
            destination: "100".into(),
            dt_ns: None,
            fidelity_goal: 1e-6,
            stage1_evals: 600,
            stage2_evals: 400,
            tau1_ns: 5.5,
            switch_delay_ns: 2.5,
            total_delay_ns: 4.2,
            initial_sigma_ns: 0.05,
        }
    }
}

impl AnalyticSection {
    pub fn to_config(&self) -> Result<AnalyticFitConfig> {
        let mut cfg =
            AnalyticFitConfig::new(parse_label(&self.source)?, parse_label(&self.destination)?);
        cfg.dt = match self.dt_ns {
            Some(dt) => dt,
            None => default_dt()?,
        };
        cfg.fidelity_goal = self.fidelity_goal;
        cfg.stage1_evals = self.stage1_evals;
        cfg.stage2_evals = self.stage2_evals;
        Ok(cfg)
    }

    /// Configured bounds, or amplitudes within the control range, times in
    /// `[0, 40]` ns and widths in `[0.01, 10]` ns.
    pub fn bounds(&self, params: &SystemParams) -> Result<Bounds> {
        match &self.bounds {
            Some(b) => Bounds::new(
                AnalyticPulseParams::from(b.lower).to_vec(),
                AnalyticPulseParams::from(b.upper).to_vec(),
            ),
            None => {
                let lo = -params.omega_tc_max() + params.clamp_floor();
                Bounds::new(
                    vec![lo, lo, 0.0, 0.0, 0.0, 0.01, 0.01, 0.01],
                    vec![0.0, 0.0, 40.0, 40.0, 40.0, 10.0, 10.0, 10.0],
                )
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub range_ghz: [f64; 2],
    pub steps: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { range_ghz: [-3.0, 0.0], steps: 601 }
    }
}

/// A parsed configuration document. Optional sections disable the stages
/// that need them.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub device: DeviceSection,
    pub lct: Option<LctSection>,
    pub filter: Option<FilterSection>,
    pub reversibility: Option<ReversibilitySection>,
    pub truncation: Option<TruncationSection>,
    pub analytic: Option<AnalyticSection>,
    pub spectrum: SpectrumSection,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl Document {
    /// Parse `text`. The local-control settings are read from the section
    /// named `seed_section` (default `lct`).
    pub fn parse(text: &str, seed_section: Option<&str>, base_dir: &Path) -> Result<Self> {
        let root: Value = serde_json::from_str(text)
            .map_err(|e| PulseError::Config(format!("malformed config: {e}")))?;
        let obj = root
            .as_object()
            .ok_or_else(|| PulseError::Config("config root must be a JSON object".into()))?;
        let lct_key = seed_section.unwrap_or("lct");
        if seed_section.is_some() && !obj.contains_key(lct_key) {
            return Err(PulseError::Config(format!("section `{lct_key}` not found")));
        }
        Ok(Self {
            device: section(obj, "device")?
                .ok_or_else(|| PulseError::Config("missing section `device`".into()))?,
            lct: section(obj, lct_key)?,
            filter: section(obj, "filter")?,
            reversibility: section(obj, "reversibility")?,
            truncation: section(obj, "truncation")?,
            analytic: section(obj, "analytic")?,
            spectrum: section(obj, "spectrum")?.unwrap_or_default(),
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path, seed_section: Option<&str>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, seed_section, &base)
    }

    pub fn lct_section(&self) -> Result<&LctSection> {
        self.lct.as_ref().ok_or_else(|| PulseError::Config("missing local-control section".into()))
    }
}

fn section<T: for<'de> Deserialize<'de>>(
    obj: &serde_json::Map<String, Value>,
    key: &str,
) -> Result<Option<T>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => T::deserialize(v)
            .map(Some)
            .map_err(|e| PulseError::Config(format!("section `{key}`: {e}"))),
    }
}

pub fn parse_label(s: &str) -> Result<BasisLabel> {
    s.parse()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn finish(mut w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// `t_ns,delta_omega_ghz` with 12 decimals.
pub fn write_waveform_csv(path: &Path, wf: &Waveform) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["t_ns", "delta_omega_ghz"])?;
    for (t, v) in wf.times().zip(wf.samples()) {
        w.write_record([format!("{t:.12}"), format!("{:.12}", rad_to_ghz(*v))])?;
    }
    finish(w)
}

/// Read a file written by [`write_waveform_csv`]. Times must be uniformly
/// spaced from zero.
pub fn read_waveform_csv(path: &Path) -> Result<Waveform> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t_ns", "delta_omega_ghz"] {
        return Err(PulseError::Config(format!(
            "{}: expected header t_ns,delta_omega_ghz",
            path.display()
        )));
    }
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(|| {
                PulseError::Config(format!("{}: bad value on data row {}", path.display(), line + 1))
            })
        };
        times.push(num(0)?);
        samples.push(ghz_to_rad(num(1)?));
    }
    if times.len() < 2 {
        return Err(PulseError::Config(format!("{}: fewer than two samples", path.display())));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let uniform = times.iter().enumerate().all(|(k, &t)| (t - k as f64 * dt).abs() <= 1e-9 * (1.0 + t));
    if !(uniform && times[0].abs() <= 1e-12) {
        return Err(PulseError::Config(format!(
            "{}: samples must be uniformly spaced from t = 0",
            path.display()
        )));
    }
    Waveform::new(dt, samples)
}

/// `t_ns,phi_over_phi0` for the coupler frequency `w0 + dw(t)`.
pub fn write_flux_csv(path: &Path, wf: &Waveform, params: &SystemParams) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["t_ns", "phi_over_phi0"])?;
    for (t, v) in wf.times().zip(wf.samples()) {
        let phi = frequency_to_flux(params, params.omega_tc_max() + v)?;
        w.write_record([format!("{t:.12}"), format!("{:.12}", phi.phi_over_phi0())])?;
    }
    finish(w)
}

/// `t_ns,delta_omega_ghz,pop_<label>...`.
pub fn write_trajectory_csv(path: &Path, record: &TrajectoryRecord) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["t_ns".to_string(), "delta_omega_ghz".to_string()];
    header.extend(record.labels.iter().map(|l| format!("pop_{l}")));
    w.write_record(&header)?;
    for ((t, c), pops) in record.times.iter().zip(&record.control).zip(&record.populations) {
        let mut row = vec![format!("{t:.12}"), format!("{:.12}", rad_to_ghz(*c))];
        row.extend(pops.iter().map(|p| format!("{p:.15e}")));
        w.write_record(&row)?;
    }
    finish(w)
}

/// `f_ghz,power`, one-sided with the powers summing to the mean square of
/// the samples in GHz^2.
pub fn write_spectrum_csv(path: &Path, spectrum: &PulseSpectrum) -> Result<()> {
    let mut file = create(path)?;
    writeln!(file, "# power in GHz^2; sum over bins equals the mean square of delta_omega_ghz")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["f_ghz", "power"])?;
    let scale = rad_to_ghz(1.0).powi(2);
    for (f, p) in spectrum.freqs.iter().zip(&spectrum.power) {
        w.write_record([format!("{f:.12}"), format!("{:e}", p * scale)])?;
    }
    finish(w)
}

/// Eigenvalue sweep `delta_omega_ghz,E_1_ghz,...,E_dim_ghz`, ascending per row.
pub fn write_sweep_csv(path: &Path, params: &SystemParams, grid_rad: &[f64]) -> Result<()> {
    let dim = params.dim().unwrap_or(0);
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["delta_omega_ghz".to_string()];
    header.extend((1..=dim).map(|k| format!("E_{k}_ghz")));
    w.write_record(&header)?;
    for &dw in grid_rad {
        let s = spectrum_at(params, dw)?;
        let mut row = vec![format!("{:.12}", rad_to_ghz(dw))];
        row.extend(s.eigenvalues().iter().map(|e| format!("{:.12}", rad_to_ghz(*e))));
        w.write_record(&row)?;
    }
    finish(w)
}

/// Nonadiabatic couplings `d_j_k` (1/GHz, with `dw` in GHz) between every
/// pair of single-excitation levels. `j < k` index the full ascending
/// spectrum from 1. Degenerate pairs are written as `nan`.
pub fn write_couplings_csv(path: &Path, params: &SystemParams, grid_rad: &[f64]) -> Result<()> {
    let generator = build_control_generator(params);
    let levels = match grid_rad.first() {
        Some(&dw) => spectrum_at(params, dw)?.single_excitation_levels(),
        None => Vec::new(),
    };
    let pairs: Vec<(usize, usize)> = levels
        .iter()
        .enumerate()
        .flat_map(|(a, &j)| levels[a + 1..].iter().map(move |&k| (j, k)))
        .collect();
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["delta_omega_ghz".to_string()];
    header.extend(pairs.iter().map(|(j, k)| format!("d_{}_{}", j + 1, k + 1)));
    w.write_record(&header)?;
    for &dw in grid_rad {
        let s = spectrum_at(params, dw)?;
        let mut row = vec![format!("{:.12}", rad_to_ghz(dw))];
        for &(j, k) in &pairs {
            let d = match coupling_in_spectrum(&s, &generator, j, k) {
                Ok(d) => format!("{:.12e}", ghz_to_rad(d)),
                Err(PulseError::Singular { .. }) => "nan".to_string(),
                Err(e) => return Err(e),
            };
            row.push(d);
        }
        w.write_record(&row)?;
    }
    finish(w)
}

/// Pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    writeln!(file)?;
    file.flush()?;
    Ok(())
}

pub fn read_analytic_json(path: &Path) -> Result<AnalyticPulseParams> {
    let file: AnalyticPulseFile = serde_json::from_reader(File::open(path)?)?;
    Ok(file.into())
}

/// Summary of a population transfer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferSummary {
    pub final_error: f64,
    /// First time the target holds 1% of the population.
    pub t_on_ns: Option<f64>,
    /// First time the target holds 99% of the population.
    pub transfer_time_ns: Option<f64>,
    /// `transfer_time_ns - t_on_ns`.
    pub active_duration_ns: Option<f64>,
    pub final_populations: BTreeMap<String, f64>,
}

impl TransferSummary {
    pub fn from_record(record: &TrajectoryRecord, target: &BasisLabel) -> Result<Self> {
        let t_on = record.first_crossing(target, 0.01)?;
        let t99 = record.first_crossing(target, 0.99)?;
        let last = record.populations.last().cloned().unwrap_or_default();
        Ok(Self {
            final_error: 1.0 - record.final_population(target)?,
            t_on_ns: t_on,
            transfer_time_ns: t99,
            active_duration_ns: t_on.zip(t99).map(|(a, b)| b - a),
            final_populations: record.labels.iter().map(|l| l.to_string()).zip(last).collect(),
        })
    }
}

/// JSON summary of a local-control run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LctSummary {
    pub lambda: f64,
    pub lambda2: Option<f64>,
    #[serde(flatten)]
    pub transfer: TransferSummary,
    pub saturated: bool,
    pub saturation_fraction: f64,
    pub held_steps: usize,
    pub duration_ns: f64,
}

impl LctSummary {
    pub fn new(cfg: &LctConfig, result: &LctResult) -> Result<Self> {
        Ok(Self {
            lambda: cfg.lambda,
            lambda2: cfg.reference.as_ref().and(cfg.lambda2),
            transfer: TransferSummary::from_record(&result.trajectory, &cfg.target)?,
            saturated: result.saturated,
            saturation_fraction: result.saturation_fraction,
            held_steps: result.held_steps,
            duration_ns: result.waveform.duration(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "device": {"qubit_freqs_ghz": [5.890, 5.031], "couplings_ghz": [0.100, 0.071], "tc_max_freq_ghz": 7.445},
        "lct": {"lambda": 100.0, "eta": 1e-6, "dt_ns": 0.05, "t_max_ns": 10, "initial": "100", "target": "|010>"},
        "alt": {"lambda": 5.0, "initial": "010", "target": "100", "dt_ns": 0.1}
    }"#;

    #[test]
    fn parses_sections() {
        let d = Document::parse(DOC, None, Path::new(".")).unwrap();
        let cfg = d.lct_section().unwrap().to_config(Path::new(".")).unwrap();
        assert_eq!(cfg.target.to_string(), "010");
        assert_eq!(cfg.steps(), 200);
        assert!(d.filter.is_none() && d.analytic.is_none());
        assert_eq!(d.spectrum.steps, 601);
        let alt = Document::parse(DOC, Some("alt"), Path::new(".")).unwrap();
        assert_eq!(alt.lct_section().unwrap().lambda, 5.0);
        assert_eq!(alt.lct_section().unwrap().t_max_ns, 450.0);
    }

    #[test]
    fn config_errors_name_the_problem() {
        let e = Document::parse("{\"device\": 3", None, Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
        let e = Document::parse(r#"{"device": {"qubit_freqs_ghz": [5.0]}}"#, None, Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(e.contains("device") && e.contains("couplings_ghz"), "{e}");
        let e = Document::parse(DOC, Some("nope"), Path::new(".")).unwrap_err();
        assert!(matches!(e, PulseError::Config(_)));
    }

    #[test]
    fn waveform_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let wf = Waveform::new(0.01, (0..500).map(|k| -0.3 * (k as f64 * 0.01).sin().powi(2)).collect())
            .unwrap();
        write_waveform_csv(&path, &wf).unwrap();
        let back = read_waveform_csv(&path).unwrap();
        assert_eq!(back.len(), wf.len());
        assert!((back.dt() - wf.dt()).abs() < 1e-12);
        let worst = wf.samples().iter().zip(back.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-11);
    }

    #[test]
    fn rejects_non_uniform_times() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        std::fs::write(&path, "t_ns,delta_omega_ghz\n0,0\n0.1,0\n0.3,0\n").unwrap();
        assert!(read_waveform_csv(&path).is_err());
    }
}
