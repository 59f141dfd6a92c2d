//! Local control: the coupler detuning is computed on the fly from the current
//! state so that the population of a chosen drift eigenstate never decreases.
//!
//! With `B(t) = Im(<Psi| sz_TC |psi_j><psi_j|Psi>)` the target population obeys
//! `dP_j/dt = dw(t) B(t)` whenever `|psi_j>` is a drift eigenstate. The
//! feedback `dw = lambda B`, capped to `[-w0 + floor, 0]`, makes the right-hand
//! side non-negative.

use nalgebra::DVector;
use num_complex::Complex64 as C64;

use crate::dynamics::{final_state, Evolver, QuantumState, TrajectoryRecord};
use crate::error::{PulseError, Result};
use crate::model::{sigma_z_coupler, BasisLabel, DriftSpectrum, HermitianOperator, SystemParams};
use crate::pulses::Waveform;

/// Target populations below this are round-off, not a seed; the feedback stays
/// off until the target holds more than this.
pub const SEED_FLOOR: f64 = 1e-20;

/// Settings of one local-control run. Times in ns, gains dimensionless with
/// the control in rad/ns.
#[derive(Clone, Debug)]
pub struct LctConfig {
    /// Feedback gain of a bare run.
    pub lambda: f64,
    /// Fraction of the target state mixed into the initial state.
    pub eta: f64,
    pub dt: f64,
    pub t_max: f64,
    pub initial: BasisLabel,
    pub target: BasisLabel,
    /// Number of lowest eigenstates kept in the feedback sum; `None` keeps all.
    pub n_prime: Option<usize>,
    /// Fixed reference pulse added underneath the feedback term.
    pub reference: Option<Waveform>,
    /// Feedback gain used when a reference pulse is present.
    pub lambda2: Option<f64>,
}

impl LctConfig {
    pub fn new(initial: BasisLabel, target: BasisLabel) -> Self {
        Self {
            lambda: 0.0,
            eta: 0.0,
            dt: 0.01,
            t_max: 450.0,
            initial,
            target,
            n_prime: None,
            reference: None,
            lambda2: None,
        }
    }

    /// Number of propagation steps.
    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    fn gain(&self) -> f64 {
        if self.reference.is_some() {
            self.lambda2.unwrap_or(self.lambda)
        } else {
            self.lambda
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(PulseError::Config(msg));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda = {} must be >= 0", self.lambda));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return bad(format!("eta = {} must lie in [0, 1)", self.eta));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) || self.steps() == 0 {
            return bad(format!("t_max = {} must cover at least one step", self.t_max));
        }
        if let Some(np) = self.n_prime {
            if np == 0 || np > dim {
                return bad(format!("n_prime = {np} must lie in 1..={dim}"));
            }
        }
        if let Some(reference) = &self.reference {
            match self.lambda2 {
                Some(l2) if l2.is_finite() && l2 >= 0.0 => {}
                Some(l2) => return bad(format!("lambda2 = {l2} must be >= 0")),
                None => return bad("a reference pulse requires lambda2".into()),
            }
            if (reference.dt() - self.dt).abs() > 1e-9 * self.dt {
                return bad(format!(
                    "reference sampled every {} ns, run uses {} ns",
                    reference.dt(),
                    self.dt
                ));
            }
        }
        Ok(())
    }
}

/// Output of [`run_lct`].
#[derive(Clone, Debug)]
pub struct LctResult {
    /// Total applied detuning, one sample per step (rad/ns).
    pub waveform: Waveform,
    /// Feedback part alone: equal to `waveform` without a reference.
    pub lct_component: Waveform,
    pub trajectory: TrajectoryRecord,
    /// `1 - P(target)` at `t_max`.
    pub final_error: f64,
    /// More than half of the feedback values hit the lower clamp.
    pub saturated: bool,
    /// Fraction of steps whose raw feedback fell below the lower clamp.
    pub saturation_fraction: f64,
    /// Feedback value computed from the final state (not applied).
    pub final_feedback: f64,
    /// Steps where the feedback value was replaced by zero because it would
    /// have lowered the target population over the step.
    pub held_steps: usize,
}

impl LctResult {
    /// Time the target population first reaches `threshold`.
    pub fn time_to(&self, target: &BasisLabel, threshold: f64) -> Option<f64> {
        self.trajectory.first_crossing(target, threshold).ok().flatten()
    }
}

/// `sqrt(eta) |target> + sqrt(1 - eta) |psi0>`, renormalized.
pub fn seed_state(psi0: &QuantumState, target: &QuantumState, eta: f64) -> Result<QuantumState> {
    if !(0.0..1.0).contains(&eta) {
        return Err(PulseError::Domain(format!("eta = {eta} must lie in [0, 1)")));
    }
    let mixed = target.amplitudes() * C64::new(eta.sqrt(), 0.0)
        + psi0.amplitudes() * C64::new((1.0 - eta).sqrt(), 0.0);
    QuantumState::new(mixed)
}

/// Row `<psi_j| sz_TC |psi_k>` of the coupler operator in the drift eigenbasis.
fn coupler_row(spectrum: &DriftSpectrum, sigma_z: &HermitianOperator, j: usize) -> Vec<C64> {
    let bra = sigma_z.matrix() * spectrum.eigenvector(j);
    (0..spectrum.dim())
        .map(|k| bra.dotc(&spectrum.eigenvector(k)))
        .collect()
}

/// Unclamped feedback `-lambda Im(sum_{k<n'} <j|sz|k><k|Psi><j|Psi>^*)`.
fn projected_raw(
    state: &QuantumState,
    spectrum: &DriftSpectrum,
    row: &[C64],
    j: usize,
    lambda: f64,
    n_prime: usize,
) -> f64 {
    let cj = state.overlap(&spectrum.eigenvector(j)).conj();
    let sum: C64 = (0..n_prime)
        .map(|k| row[k] * state.overlap(&spectrum.eigenvector(k)))
        .sum();
    -lambda * (sum * cj).im
}

/// Feedback value for the current state, restricted to the lowest `n_prime`
/// eigenstates and clamped into `[-w0 + floor, 0]`.
pub fn feedback_value(
    params: &SystemParams,
    state: &QuantumState,
    spectrum: &DriftSpectrum,
    target_index: usize,
    lambda: f64,
    n_prime: usize,
) -> Result<f64> {
    Ok(params.clamp_control(feedback_raw(params, state, spectrum, target_index, lambda, n_prime)?))
}

/// [`feedback_value`] before clamping.
pub fn feedback_raw(
    params: &SystemParams,
    state: &QuantumState,
    spectrum: &DriftSpectrum,
    target_index: usize,
    lambda: f64,
    n_prime: usize,
) -> Result<f64> {
    let dim = spectrum.dim();
    if n_prime == 0 || n_prime > dim || target_index >= n_prime {
        return Err(PulseError::Domain(format!(
            "need target index {target_index} < n_prime {n_prime} <= {dim}"
        )));
    }
    let row = coupler_row(spectrum, &sigma_z_coupler(params), target_index);
    Ok(projected_raw(state, spectrum, &row, target_index, lambda, n_prime))
}

/// Feedback written directly with operators,
/// `(i/2) lambda <[sz_TC, P_j]>^*`, unclamped.
pub fn feedback_commutator(
    state: &QuantumState,
    sigma_z: &HermitianOperator,
    projector: &HermitianOperator,
    lambda: f64,
) -> f64 {
    let comm = sigma_z.commutator(projector);
    let psi = state.amplitudes();
    let expectation = psi.dotc(&(comm * psi));
    (C64::new(0.0, 0.5) * lambda * expectation.conj()).re
}

enum FeedbackLaw {
    Projected { n_prime: usize, row: Vec<C64> },
    Commutator { sigma_z: HermitianOperator, projector: HermitianOperator },
}

impl FeedbackLaw {
    fn raw(&self, state: &QuantumState, spectrum: &DriftSpectrum, j: usize, lambda: f64) -> f64 {
        match self {
            FeedbackLaw::Projected { n_prime, row } => {
                projected_raw(state, spectrum, row, j, lambda, *n_prime)
            }
            FeedbackLaw::Commutator { sigma_z, projector } => {
                feedback_commutator(state, sigma_z, projector, lambda)
            }
        }
    }
}

/// Generate a control waveform step by step: propagate over `[t, t + dt]`
/// with the current detuning, then recompute the feedback from the new state.
pub fn run_lct(params: &SystemParams, config: &LctConfig) -> Result<LctResult> {
    let evolver = Evolver::new(params)?;
    run_lct_with(params, &evolver, config)
}

/// [`run_lct`] with a prepared [`Evolver`].
pub fn run_lct_with(params: &SystemParams, evolver: &Evolver, config: &LctConfig) -> Result<LctResult> {
    let spectrum = evolver.spectrum();
    let dim = spectrum.dim();
    config.validate(dim)?;
    let j = spectrum.resolve(&config.target)?;
    let n_prime = config.n_prime.unwrap_or(dim);
    if j >= n_prime {
        return Err(PulseError::Config(format!(
            "target |{}> lies outside the lowest {n_prime} eigenstates",
            config.target
        )));
    }
    let law = FeedbackLaw::Projected {
        n_prime,
        row: coupler_row(spectrum, &sigma_z_coupler(params), j),
    };
    run(params, evolver, config, j, &law)
}

/// [`run_lct`] evaluating the feedback with full operators instead of the
/// eigenbasis sum. Reference implementation for the projected law.
pub fn run_lct_commutator(params: &SystemParams, config: &LctConfig) -> Result<LctResult> {
    let evolver = Evolver::new(params)?;
    let spectrum = evolver.spectrum();
    config.validate(spectrum.dim())?;
    let j = spectrum.resolve(&config.target)?;
    let law = FeedbackLaw::Commutator {
        sigma_z: sigma_z_coupler(params),
        projector: HermitianOperator::projector(&spectrum.eigenvector(j)),
    };
    run(params, &evolver, config, j, &law)
}

fn run(
    params: &SystemParams,
    evolver: &Evolver,
    config: &LctConfig,
    j: usize,
    law: &FeedbackLaw,
) -> Result<LctResult> {
    let spectrum = evolver.spectrum();
    let dim = spectrum.dim();
    let i0 = spectrum.resolve(&config.initial)?;
    let psi0 = QuantumState::eigenstate(spectrum, i0);
    let target = QuantumState::eigenstate(spectrum, j);
    let mut state = seed_state(&psi0, &target, config.eta)?;
    let target_vec = target.amplitudes().clone();

    let steps = config.steps();
    let dt = config.dt;
    let gain = config.gain();
    let floor = -params.omega_tc_max() + params.clamp_floor();
    let reference = config.reference.as_ref().map(Waveform::samples);
    let reference_at = |k: usize| reference.and_then(|r| r.get(k)).copied().unwrap_or(0.0);

    let all: Vec<usize> = (0..dim).collect();
    let labels: Vec<BasisLabel> = spectrum.labels().to_vec();
    let mut total = Vec::with_capacity(steps);
    let mut feedback = Vec::with_capacity(steps);
    let mut times = Vec::with_capacity(steps + 1);
    let mut populations = Vec::with_capacity(steps + 1);
    times.push(0.0);
    populations.push(evolver.populations(&state, &all));

    let mut saturated_steps = 0usize;
    let mut held_steps = 0usize;
    let mut lct = 0.0;
    for k in 0..steps {
        let mut dw = params.clamp_control(reference_at(k) + lct);
        let mut next = evolver.step(&state, dw, dt);
        // Without a reference the drift alone conserves P_j exactly, so a step
        // that would lower the target population is replaced by a hold at zero.
        if reference.is_none()
            && dw != 0.0
            && next.population(&target_vec) < state.population(&target_vec)
        {
            dw = 0.0;
            next = evolver.step(&state, 0.0, dt);
            held_steps += 1;
        }
        state = next;
        total.push(dw);
        feedback.push(dw - reference_at(k));
        times.push((k + 1) as f64 * dt);
        populations.push(evolver.populations(&state, &all));

        let raw = if state.population(&target_vec) > SEED_FLOOR {
            law.raw(&state, spectrum, j, gain)
        } else {
            0.0
        };
        if reference_at(k + 1) + raw < floor {
            saturated_steps += 1;
        }
        lct = if reference.is_some() { raw } else { params.clamp_control(raw) };
        if !lct.is_finite() {
            return Err(PulseError::Numerical(format!("feedback diverged at step {k}")));
        }
    }
    let final_feedback = params.clamp_control(reference_at(steps) + lct);

    let norm_err = (state.norm() - 1.0).abs();
    if norm_err > 1e-8 {
        return Err(PulseError::Numerical(format!("norm drifted by {norm_err:e}")));
    }
    let final_error = 1.0 - state.population(&spectrum.eigenvector(j));
    let mut control = total.clone();
    control.push(final_feedback);
    let saturation_fraction = saturated_steps as f64 / steps as f64;
    Ok(LctResult {
        waveform: Waveform::new(dt, pad(total))?,
        lct_component: Waveform::new(dt, pad(feedback))?,
        trajectory: TrajectoryRecord { dt, times, control, labels, populations, final_state: state },
        final_error,
        saturated: saturation_fraction > 0.5,
        saturation_fraction,
        final_feedback,
        held_steps,
    })
}

fn pad(mut v: Vec<f64>) -> Vec<f64> {
    if v.len() < 2 {
        v.resize(2, 0.0);
    }
    v
}

/// Target population derivative `dw * Im(<Psi|sz|psi_j><psi_j|Psi>)` produced
/// by a detuning `dw` in `state`.
pub fn target_rate(
    params: &SystemParams,
    state: &QuantumState,
    target: &DVector<C64>,
    delta_omega: f64,
) -> f64 {
    let sz = sigma_z_coupler(params);
    let b = (state.amplitudes().dotc(&(sz.matrix() * target)) * target.dotc(state.amplitudes())).im;
    delta_omega * b
}

/// `count` gains `start * 2^(k / per_octave)`.
pub fn log_lambda_grid(start: f64, per_octave: u32, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * 2f64.powf(k as f64 / per_octave.max(1) as f64)).collect()
}

/// How one bare run of a gain scan scored.
#[derive(Clone, Debug)]
pub struct ScanEntry {
    pub lambda: f64,
    /// `1 - P(target)` of the seeded run itself.
    pub seeded_error: f64,
    /// `1 - P(target)` when the pulse drives the unseeded initial state.
    pub unseeded_error: f64,
    pub max_decrease: f64,
    /// Largest of the last applied sample and the next feedback value.
    pub end_value: f64,
    pub saturated: bool,
}

impl ScanEntry {
    pub fn passes(&self, params: &SystemParams, goal: f64) -> bool {
        self.seeded_error < goal
            && self.unseeded_error < goal
            && self.max_decrease <= 1e-10
            && self.end_value <= params.clamp_floor()
            && !self.saturated
    }
}

/// Run bare local control for each gain in turn and stop at the first one
/// whose pulse meets `goal` from both the seeded and the unseeded initial
/// state, keeps the target population monotone and ends near zero.
pub fn scan_lambda(
    params: &SystemParams,
    base: &LctConfig,
    lambdas: &[f64],
    goal: f64,
) -> Result<(Vec<ScanEntry>, Option<LctResult>)> {
    let evolver = Evolver::new(params)?;
    let psi0 = evolver.eigenstate(&base.initial)?;
    let target = evolver.spectrum().eigenvector(evolver.spectrum().resolve(&base.target)?);
    let mut entries = Vec::new();
    for &lambda in lambdas {
        let mut cfg = base.clone();
        cfg.lambda = lambda;
        cfg.reference = None;
        let run = run_lct_with(params, &evolver, &cfg)?;
        let last = run.waveform.samples().last().copied().unwrap_or(0.0);
        let entry = ScanEntry {
            lambda,
            seeded_error: run.final_error,
            unseeded_error: 1.0 - final_state(&evolver, &psi0, &run.waveform).population(&target),
            max_decrease: run.trajectory.max_decrease(&cfg.target)?,
            end_value: last.abs().max(run.final_feedback.abs()),
            saturated: run.saturated,
        };
        let pass = entry.passes(params, goal);
        entries.push(entry);
        if pass {
            return Ok((entries, Some(run)));
        }
    }
    Ok((entries, None))
}
