use std::path::Path;

use serde::Serialize;

use lctpulse::dynamics::{propagate_with, Evolver};
use lctpulse::io::{
    read_waveform_csv, write_couplings_csv, write_flux_csv, write_json, write_spectrum_csv,
    write_sweep_csv, write_trajectory_csv, write_waveform_csv, Document, LctSummary,
    TransferSummary,
};
use lctpulse::lct::{run_lct, scan_lambda, LctConfig, LctResult};
use lctpulse::model::{
    ghz_to_rad, rad_to_ghz, single_excitation_gap_minima, sweep_grid, BasisLabel, SystemParams,
};
use lctpulse::optimize::{
    bidirectional_errors, fit_analytic_pulse, initial_analytic_guess, optimize_reversible,
    optimize_truncation, transfer_error, OptimizationReport, ReversibilityEval,
};
use lctpulse::pulses::{
    analytic_pulse, fourier_spectrum, lowpass_filter, AnalyticPulseFile, AnalyticPulseParams,
    Waveform,
};
use lctpulse::{PulseError, Result};

use crate::manifest::Outputs;

/// Outcome of a command that ran to completion.
#[derive(Debug, Default)]
pub struct Status {
    /// Name of the first stage whose optimizer missed its goal.
    pub unconverged: Option<String>,
}

impl Status {
    fn merge(&mut self, other: Status) {
        if self.unconverged.is_none() {
            self.unconverged = other.unconverged;
        }
    }

    fn failed(stage: &str) -> Self {
        Self { unconverged: Some(stage.to_string()) }
    }
}

pub struct Context<'a> {
    pub doc: &'a Document,
    pub params: SystemParams,
    pub out: Outputs,
}

impl<'a> Context<'a> {
    pub fn new(doc: &'a Document, out_dir: &Path) -> Result<Self> {
        Ok(Self { doc, params: doc.device.params()?, out: Outputs::new(out_dir) })
    }
}

#[derive(Serialize)]
struct Crossing {
    lower_level: usize,
    delta_omega_ghz: f64,
    gap_ghz: f64,
}

pub fn spectrum(ctx: &mut Context, range: Option<[f64; 2]>, steps: Option<usize>) -> Result<Status> {
    let range = range.unwrap_or(ctx.doc.spectrum.range_ghz);
    let steps = steps.unwrap_or(ctx.doc.spectrum.steps);
    if !(range[0] < range[1]) && steps > 1 {
        return Err(PulseError::Config(format!("sweep range {range:?} must be increasing")));
    }
    let (lo, hi) = (ghz_to_rad(range[0]), ghz_to_rad(range[1]));
    let grid = sweep_grid(lo, hi, steps);
    write_sweep_csv(&ctx.out.file("sweep.csv"), &ctx.params, &grid)?;
    write_couplings_csv(&ctx.out.file("couplings.csv"), &ctx.params, &grid)?;
    let crossings: Vec<Crossing> = single_excitation_gap_minima(&ctx.params, lo, hi, steps)?
        .into_iter()
        .map(|m| Crossing {
            lower_level: m.lower_level,
            delta_omega_ghz: rad_to_ghz(m.delta_omega),
            gap_ghz: rad_to_ghz(m.gap),
        })
        .collect();
    write_json(&ctx.out.file("crossings.json"), &crossings)?;
    Ok(Status::default())
}

fn write_run(ctx: &mut Context, prefix: &str, cfg: &LctConfig, result: &LctResult) -> Result<()> {
    let f = |name: &str| format!("{prefix}{name}");
    write_waveform_csv(&ctx.out.file(&f("waveform.csv")), &result.waveform)?;
    write_flux_csv(&ctx.out.file(&f("flux.csv")), &result.waveform, &ctx.params)?;
    write_trajectory_csv(&ctx.out.file(&f("trajectory.csv")), &result.trajectory)?;
    write_spectrum_csv(&ctx.out.file(&f("spectrum.csv")), &fourier_spectrum(&result.waveform))?;
    if cfg.reference.is_some() {
        write_waveform_csv(&ctx.out.file(&f("lct_component.csv")), &result.lct_component)?;
    }
    write_json(&ctx.out.file(&f("summary.json")), &LctSummary::new(cfg, result)?)?;
    Ok(())
}

#[derive(Serialize)]
struct ScanRow {
    lambda: f64,
    seeded_error: f64,
    unseeded_error: f64,
    max_decrease: f64,
    end_value_ghz: f64,
    saturated: bool,
    passes: bool,
}

/// Bare (or reference-augmented) run of the local-control section, scanning
/// the gain when requested. `None` when a scan finds no acceptable gain.
fn lct_run(ctx: &mut Context, prefix: &str) -> Result<Option<(LctConfig, LctResult)>> {
    let section = ctx.doc.lct_section()?;
    let mut cfg = section.to_config(&ctx.doc.base_dir)?;
    let result = match &section.lambda_scan {
        Some(scan) if cfg.reference.is_none() => {
            let (entries, found) = scan_lambda(&ctx.params, &cfg, &scan.grid(), scan.goal)?;
            let rows: Vec<ScanRow> = entries
                .iter()
                .map(|e| ScanRow {
                    lambda: e.lambda,
                    seeded_error: e.seeded_error,
                    unseeded_error: e.unseeded_error,
                    max_decrease: e.max_decrease,
                    end_value_ghz: rad_to_ghz(e.end_value),
                    saturated: e.saturated,
                    passes: e.passes(&ctx.params, scan.goal),
                })
                .collect();
            write_json(&ctx.out.file(&format!("{prefix}scan.json")), &rows)?;
            match found {
                Some(r) => {
                    cfg.lambda = entries.last().map(|e| e.lambda).unwrap_or(cfg.lambda);
                    r
                }
                None => return Ok(None),
            }
        }
        _ => run_lct(&ctx.params, &cfg)?,
    };
    write_run(ctx, prefix, &cfg, &result)?;
    Ok(Some((cfg, result)))
}

pub fn lct(ctx: &mut Context) -> Result<Status> {
    Ok(match lct_run(ctx, "")? {
        Some(_) => Status::default(),
        None => Status::failed("lct"),
    })
}

fn bare(ctx: &mut Context) -> Result<std::result::Result<(LctConfig, LctResult), Status>> {
    Ok(lct_run(ctx, "bare_")?.ok_or_else(|| Status::failed("lct")))
}

pub fn filter(ctx: &mut Context) -> Result<Status> {
    let (cfg, bare) = match bare(ctx)? {
        Ok(b) => b,
        Err(s) => return Ok(s),
    };
    filter_stage(ctx, &cfg, &bare.waveform)
}

fn filter_stage(ctx: &mut Context, cfg: &LctConfig, bare: &Waveform) -> Result<Status> {
    let section = ctx
        .doc
        .filter
        .clone()
        .ok_or_else(|| PulseError::Config("missing section `filter`".into()))?;
    let reference = lowpass_filter(bare, section.cutoff_ghz, &ctx.params)?;
    write_waveform_csv(&ctx.out.file("reference_waveform.csv"), &reference)?;
    write_spectrum_csv(&ctx.out.file("reference_spectrum.csv"), &fourier_spectrum(&reference))?;
    let evolver = Evolver::new(&ctx.params)?;
    let labels: Vec<BasisLabel> = evolver.spectrum().labels().to_vec();
    let record =
        propagate_with(&evolver, &evolver.eigenstate(&cfg.initial)?, &reference, &labels)?;
    write_trajectory_csv(&ctx.out.file("reference_trajectory.csv"), &record)?;
    write_json(
        &ctx.out.file("reference_summary.json"),
        &TransferSummary::from_record(&record, &cfg.target)?,
    )?;
    if let Some(lambda2) = section.lambda2 {
        let mut refined = cfg.clone();
        refined.eta = section.eta;
        refined.dt = reference.dt();
        refined.t_max = reference.duration();
        refined.reference = Some(reference);
        refined.lambda2 = Some(lambda2);
        let result = run_lct(&ctx.params, &refined)?;
        write_run(ctx, "refined_", &refined, &result)?;
    }
    Ok(Status::default())
}

#[derive(Serialize)]
struct ReversibilityFile<'a> {
    cutoff_ghz: f64,
    lambda2: f64,
    report: &'a OptimizationReport,
    evaluations: &'a [ReversibilityEval],
}

fn write_bidirectional(
    ctx: &mut Context,
    prefix: &str,
    pulse: &Waveform,
    source: &BasisLabel,
    dest: &BasisLabel,
) -> Result<()> {
    let evolver = Evolver::new(&ctx.params)?;
    let labels: Vec<BasisLabel> = evolver.spectrum().labels().to_vec();
    let fwd = propagate_with(&evolver, &evolver.eigenstate(source)?, pulse, &labels)?;
    let rev = propagate_with(&evolver, &evolver.eigenstate(dest)?, pulse, &labels)?;
    write_trajectory_csv(&ctx.out.file(&format!("{prefix}forward_trajectory.csv")), &fwd)?;
    write_trajectory_csv(&ctx.out.file(&format!("{prefix}reverse_trajectory.csv")), &rev)?;
    Ok(())
}

fn optimize_stage(
    ctx: &mut Context,
    cfg: &LctConfig,
    bare: &Waveform,
) -> Result<(Waveform, Status)> {
    let section = ctx.doc.reversibility.clone().unwrap_or_default();
    let rc = section.to_config(cfg);
    let outcome = optimize_reversible(&ctx.params, bare, &rc)?;
    write_waveform_csv(&ctx.out.file("optimized_waveform.csv"), &outcome.pulse)?;
    write_spectrum_csv(&ctx.out.file("optimized_spectrum.csv"), &fourier_spectrum(&outcome.pulse))?;
    write_waveform_csv(&ctx.out.file("optimized_reference.csv"), &outcome.reference)?;
    write_json(
        &ctx.out.file("optimize_report.json"),
        &ReversibilityFile {
            cutoff_ghz: outcome.cutoff_ghz,
            lambda2: outcome.lambda2,
            report: &outcome.report,
            evaluations: &outcome.evaluations,
        },
    )?;
    write_bidirectional(ctx, "optimized_", &outcome.pulse, &cfg.initial, &cfg.target)?;
    let status =
        if outcome.report.converged { Status::default() } else { Status::failed("optimize") };
    Ok((outcome.pulse, status))
}

pub fn optimize(ctx: &mut Context) -> Result<Status> {
    let (cfg, bare) = match bare(ctx)? {
        Ok(b) => b,
        Err(s) => return Ok(s),
    };
    Ok(optimize_stage(ctx, &cfg, &bare.waveform)?.1)
}

fn truncate_stage(ctx: &mut Context, cfg: &LctConfig, pulse: &Waveform) -> Result<Status> {
    let section = ctx.doc.truncation.clone().unwrap_or_default();
    let tc = section.to_config(&cfg.initial, &cfg.target);
    let (truncated, report) = optimize_truncation(&ctx.params, pulse, &tc)?;
    write_waveform_csv(&ctx.out.file("truncated_waveform.csv"), &truncated)?;
    write_flux_csv(&ctx.out.file("truncated_flux.csv"), &truncated, &ctx.params)?;
    write_spectrum_csv(&ctx.out.file("truncated_spectrum.csv"), &fourier_spectrum(&truncated))?;
    write_json(&ctx.out.file("truncate_report.json"), &report)?;
    write_bidirectional(ctx, "truncated_", &truncated, &cfg.initial, &cfg.target)?;
    Ok(if report.converged { Status::default() } else { Status::failed("truncate") })
}

pub fn truncate(ctx: &mut Context, pulse_path: Option<&Path>) -> Result<Status> {
    let cfg = ctx.doc.lct_section()?.to_config(&ctx.doc.base_dir)?;
    let pulse = match pulse_path {
        Some(p) => read_waveform_csv(p)?,
        None => {
            let (cfg, bare) = match bare(ctx)? {
                Ok(b) => b,
                Err(s) => return Ok(s),
            };
            let (pulse, status) = optimize_stage(ctx, &cfg, &bare.waveform)?;
            if status.unconverged.is_some() {
                return Ok(status);
            }
            pulse
        }
    };
    truncate_stage(ctx, &cfg, &pulse)
}

#[derive(Serialize)]
struct AnalyticReportFile<'a> {
    initial: AnalyticPulseFile,
    initial_error: f64,
    fitted: AnalyticPulseFile,
    duration_ns: f64,
    reversed_error: Option<f64>,
    report: &'a OptimizationReport,
}

pub fn analytic(ctx: &mut Context) -> Result<Status> {
    let section = ctx.doc.analytic.clone().unwrap_or_default();
    let fit_cfg = section.to_config()?;
    let init: AnalyticPulseParams = match section.init {
        Some(p) => p.into(),
        None => initial_analytic_guess(
            &ctx.params,
            section.tau1_ns,
            section.switch_delay_ns,
            section.total_delay_ns,
            section.initial_sigma_ns,
        )?,
    };
    let evolver = Evolver::new(&ctx.params)?;
    let init_wf = analytic_pulse(&init, &ctx.params, fit_cfg.dt, init.natural_duration())?;
    let initial_error =
        transfer_error(&evolver, &init_wf, &fit_cfg.source, &fit_cfg.destination)?;
    let bounds = section.bounds(&ctx.params)?;
    let (fitted, report) = fit_analytic_pulse(&ctx.params, &init, &bounds, &fit_cfg)?;
    let wf = analytic_pulse(&fitted, &ctx.params, fit_cfg.dt, fitted.natural_duration())?;
    write_json(&ctx.out.file("analytic_params.json"), &AnalyticPulseFile::from(fitted))?;
    write_waveform_csv(&ctx.out.file("analytic_waveform.csv"), &wf)?;
    write_waveform_csv(&ctx.out.file("analytic_reversed_waveform.csv"), &wf.time_reversed())?;
    write_json(
        &ctx.out.file("analytic_report.json"),
        &AnalyticReportFile {
            initial: init.into(),
            initial_error,
            fitted: fitted.into(),
            duration_ns: wf.duration(),
            reversed_error: report.reverse_error,
            report: &report,
        },
    )?;
    Ok(if report.converged { Status::default() } else { Status::failed("analytic") })
}

/// Every configured stage in order. Without `keep_going` the first stage
/// that misses its goal stops the run.
pub fn pipeline(ctx: &mut Context, keep_going: bool) -> Result<Status> {
    let mut status = spectrum(ctx, None, None)?;
    let (cfg, bare) = match bare(ctx)? {
        Ok(b) => b,
        Err(s) => return Ok(s),
    };
    let stop = |s: &Status| s.unconverged.is_some() && !keep_going;

    if ctx.doc.filter.is_some() {
        status.merge(filter_stage(ctx, &cfg, &bare.waveform)?);
    }
    let mut pulse = None;
    if ctx.doc.reversibility.is_some() {
        let (p, s) = optimize_stage(ctx, &cfg, &bare.waveform)?;
        status.merge(s);
        if stop(&status) {
            return Ok(status);
        }
        pulse = Some(p);
    }
    if ctx.doc.truncation.is_some() {
        let input = pulse.as_ref().unwrap_or(&bare.waveform);
        status.merge(truncate_stage(ctx, &cfg, input)?);
        if stop(&status) {
            return Ok(status);
        }
    }
    if ctx.doc.analytic.is_some() {
        status.merge(analytic(ctx)?);
    }
    if let Some(p) = &pulse {
        let evolver = Evolver::new(&ctx.params)?;
        let (f, r) = bidirectional_errors(&evolver, p, &cfg.initial, &cfg.target)?;
        write_json(
            &ctx.out.file("pipeline_summary.json"),
            &serde_json::json!({ "optimized_forward_error": f, "optimized_reverse_error": r }),
        )?;
    }
    Ok(status)
}
