//! Derivative-free drivers: a bounded Nelder-Mead simplex, the filter/refine
//! reversibility loop over `lambda2` and the cutoff, truncation-time search and
//! the two-stage fit of the analytic pulse.

use serde::Serialize;

use crate::dynamics::{final_state, propagate_with, Evolver};
use crate::error::{PulseError, Result};
use crate::lct::{run_lct_with, LctConfig};
use crate::model::{single_excitation_gap_minima, BasisLabel, SystemParams};
use crate::pulses::{
    analytic_pulse, lowpass_filter, truncate_with_gaussian_tail, AnalyticPulseParams, Waveform,
};

/// Weight of the squared bound excess added to the objective.
pub const BOUND_PENALTY: f64 = 1e6;

/// Box constraints; infinite entries leave a coordinate free.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(PulseError::OptimizerInit("bound vectors differ in length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(PulseError::OptimizerInit("lower bound above upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.lower.iter().zip(&self.upper)).map(|(v, (l, u))| v.clamp(*l, *u)).collect()
    }

    /// Sum of squared distances outside the box.
    pub fn excess(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (l - v).max(0.0).powi(2) + (v - u).max(0.0).powi(2))
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    /// Stop once every vertex lies within this distance of the best one.
    pub tolerance: f64,
    pub max_evals: usize,
    /// Initial simplex offsets per coordinate; `None` uses 10% of `|x0|`
    /// (0.00025 for zero entries).
    pub initial_step: Option<Vec<f64>>,
    /// Stop as soon as the best objective drops to this value.
    pub f_target: Option<f64>,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_evals: 1000, initial_step: None, f_target: None }
    }
}

/// Best point after one simplex iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub params: Vec<f64>,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizationReport {
    pub best_params: Vec<f64>,
    pub objective: f64,
    pub forward_error: Option<f64>,
    pub reverse_error: Option<f64>,
    pub evaluations: usize,
    pub history: Vec<HistoryEntry>,
    pub converged: bool,
}

/// Minimize `objective` from `x0` inside `bounds`.
///
/// Points outside the box are scored at their projection plus
/// [`BOUND_PENALTY`] times the squared excess, so the returned optimum always
/// satisfies the bounds. Non-finite objective values count as `+inf`.
pub fn nelder_mead<F>(
    mut objective: F,
    x0: &[f64],
    bounds: &Bounds,
    opts: &NelderMeadOptions,
) -> Result<OptimizationReport>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return Err(PulseError::OptimizerInit("empty parameter vector".into()));
    }
    if bounds.lower.len() != n {
        return Err(PulseError::OptimizerInit("bounds do not match the parameter count".into()));
    }
    if !bounds.contains(x0) {
        return Err(PulseError::OptimizerInit(format!("start point {x0:?} lies outside the bounds")));
    }
    let steps = match &opts.initial_step {
        Some(s) if s.len() == n => s.clone(),
        Some(_) => return Err(PulseError::OptimizerInit("initial step has the wrong length".into())),
        None => x0.iter().map(|&v| if v == 0.0 { 2.5e-4 } else { 0.1 * v }).collect(),
    };

    let mut tracker = Tracker { evals: 0, best: (x0.to_vec(), f64::INFINITY) };
    let mut eval = |x: &[f64], t: &mut Tracker| t.eval(x, bounds, &mut objective);

    let f0 = eval(x0, &mut tracker);
    if !f0.is_finite() {
        return Err(PulseError::OptimizerInit(format!("objective is not finite at {x0:?}")));
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let f = eval(&x, &mut tracker);
        simplex.push((x, f));
    }

    let mut history = Vec::new();
    let converged = loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(HistoryEntry { params: tracker.best.0.clone(), objective: tracker.best.1 });
        let (fb, fw) = (simplex[0].1, simplex[n].1);
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if opts.f_target.is_some_and(|t| tracker.best.1 <= t) || diameter < opts.tolerance || fb == fw {
            break true;
        }
        if tracker.evals >= opts.max_evals {
            break false;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|(x, _)| x[i]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].0.clone();
        let toward = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&worst).map(|(c, w)| c + t * (c - w)).collect()
        };
        let xr = toward(1.0);
        let fr = eval(&xr, &mut tracker);
        if fr < fb {
            let xe = toward(2.0);
            let fe = eval(&xe, &mut tracker);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < fw {
                let xc = toward(0.5);
                let fc = eval(&xc, &mut tracker);
                (xc, fc)
            } else {
                let xc = toward(-0.5);
                let fc = eval(&xc, &mut tracker);
                (xc, fc)
            };
            if fc < fr.min(fw) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> =
                        x_best.iter().zip(&vertex.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    let f = eval(&x, &mut tracker);
                    *vertex = (x, f);
                }
            }
        }
    };

    Ok(OptimizationReport {
        best_params: tracker.best.0,
        objective: tracker.best.1,
        forward_error: None,
        reverse_error: None,
        evaluations: tracker.evals,
        history,
        converged,
    })
}

struct Tracker {
    evals: usize,
    best: (Vec<f64>, f64),
}

impl Tracker {
    fn eval<F: FnMut(&[f64]) -> f64>(&mut self, x: &[f64], bounds: &Bounds, objective: &mut F) -> f64 {
        let p = bounds.project(x);
        let raw = objective(&p);
        self.evals += 1;
        let raw = if raw.is_finite() { raw } else { f64::INFINITY };
        if raw < self.best.1 {
            self.best = (p, raw);
        }
        raw + BOUND_PENALTY * bounds.excess(x)
    }
}

/// `1 - P(destination)` after driving the `source` eigenstate with `pulse`.
pub fn transfer_error(
    evolver: &Evolver,
    pulse: &Waveform,
    source: &BasisLabel,
    destination: &BasisLabel,
) -> Result<f64> {
    let psi0 = evolver.eigenstate(source)?;
    let dest = evolver.spectrum().eigenvector(evolver.spectrum().resolve(destination)?);
    Ok(1.0 - final_state(evolver, &psi0, pulse).population(&dest))
}

/// Error of the reverse process: `pulse` applied to `source`, scored on
/// `destination`.
pub fn reverse_error(
    params: &SystemParams,
    pulse: &Waveform,
    source: &BasisLabel,
    destination: &BasisLabel,
) -> Result<f64> {
    transfer_error(&Evolver::new(params)?, pulse, source, destination)
}

/// Settings of the filter/refine reversibility loop.
#[derive(Clone, Debug)]
pub struct ReversibilityConfig {
    /// Template for every refined run: labels, time grid, seed and `n_prime`.
    /// Its `reference` and `lambda2` are overwritten per evaluation.
    pub lct: LctConfig,
    pub lambda2_init: f64,
    pub lambda2_bounds: [f64; 2],
    pub cutoff_init_ghz: f64,
    /// Ascending cutoffs tried from `cutoff_init_ghz` upward.
    pub cutoff_candidates: Vec<f64>,
    pub fidelity_goal: f64,
    pub max_outer_iters: usize,
    /// Simplex size, relative to `lambda2_init`, below which a cutoff is done.
    pub simplex_tolerance: f64,
    pub max_evals_per_cutoff: usize,
}

impl ReversibilityConfig {
    pub fn new(lct: LctConfig) -> Self {
        Self {
            lct,
            lambda2_init: 500.0,
            lambda2_bounds: [100.0, 1000.0],
            cutoff_init_ghz: 0.40,
            cutoff_candidates: vec![0.40, 0.45, 0.50],
            fidelity_goal: 1e-6,
            max_outer_iters: 3,
            simplex_tolerance: 1e-3,
            max_evals_per_cutoff: 40,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(PulseError::Config(msg.to_string()));
        let [lo, hi] = self.lambda2_bounds;
        if !(lo <= hi && lo >= 0.0) {
            return bad("lambda2 bounds must be ordered and non-negative");
        }
        if !(lo..=hi).contains(&self.lambda2_init) {
            return bad("lambda2_init lies outside its bounds");
        }
        if !(self.fidelity_goal > 0.0 && self.fidelity_goal <= 1.0) {
            return bad("fidelity goal must lie in (0, 1]");
        }
        if self.cutoff_candidates.is_empty()
            || self.cutoff_candidates.windows(2).any(|w| w[0] >= w[1])
            || self.cutoff_candidates.iter().any(|&c| !(c > 0.0))
        {
            return bad("cutoff candidates must be positive and strictly ascending");
        }
        if !(self.simplex_tolerance > 0.0) {
            return bad("simplex tolerance must be positive");
        }
        Ok(())
    }
}

/// One objective evaluation of the reversibility loop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReversibilityEval {
    pub cutoff_ghz: f64,
    pub lambda2: f64,
    pub forward_error: f64,
    pub reverse_error: f64,
}

#[derive(Clone, Debug)]
pub struct ReversibilityOutcome {
    /// Best refined total pulse.
    pub pulse: Waveform,
    /// Filtered reference the best pulse was built on.
    pub reference: Waveform,
    pub cutoff_ghz: f64,
    pub lambda2: f64,
    /// `best_params = [cutoff_ghz, lambda2]`; `objective` is the larger of the
    /// two errors.
    pub report: OptimizationReport,
    pub evaluations: Vec<ReversibilityEval>,
}

impl ReversibilityOutcome {
    /// Largest forward error seen over every evaluation.
    pub fn worst_forward_error(&self) -> f64 {
        self.evaluations.iter().map(|e| e.forward_error).fold(0.0, f64::max)
    }
}

/// Low-pass the bare pulse, rerun the refined feedback on top of it and score
/// the result on the reverse process, searching `lambda2` by Nelder-Mead and
/// stepping the cutoff through the candidate list until both directions meet
/// the goal.
pub fn optimize_reversible(
    params: &SystemParams,
    bare_pulse: &Waveform,
    cfg: &ReversibilityConfig,
) -> Result<ReversibilityOutcome> {
    cfg.validate()?;
    let evolver = Evolver::new(params)?;
    let (source, dest) = (&cfg.lct.initial, &cfg.lct.target);
    let bare_error = transfer_error(&evolver, bare_pulse, source, dest)?;
    if !(bare_error < cfg.fidelity_goal) {
        return Err(PulseError::Config(format!(
            "bare pulse forward error {bare_error:e} does not meet the goal {:e}",
            cfg.fidelity_goal
        )));
    }

    let mut template = cfg.lct.clone();
    template.dt = bare_pulse.dt();
    template.t_max = bare_pulse.duration();

    let cutoffs: Vec<f64> = cfg
        .cutoff_candidates
        .iter()
        .copied()
        .filter(|&c| c >= cfg.cutoff_init_ghz - 1e-12)
        .take(cfg.max_outer_iters.max(1))
        .collect();
    if cutoffs.is_empty() {
        return Err(PulseError::Config("no cutoff candidate at or above cutoff_init_ghz".into()));
    }

    let bounds = Bounds::new(vec![cfg.lambda2_bounds[0]], vec![cfg.lambda2_bounds[1]])?;
    let opts = NelderMeadOptions {
        tolerance: cfg.simplex_tolerance * cfg.lambda2_init,
        max_evals: cfg.max_evals_per_cutoff,
        initial_step: Some(vec![0.1 * cfg.lambda2_init]),
        f_target: Some(cfg.fidelity_goal),
    };

    let mut evaluations = Vec::new();
    let mut history = Vec::new();
    let mut total_evals = 0;
    let mut best: Option<(f64, ReversibilityEval, Waveform, Waveform)> = None;
    let mut failure: Option<PulseError> = None;

    for &cutoff in &cutoffs {
        let reference = lowpass_filter(bare_pulse, cutoff, params)?;
        let report = nelder_mead(
            |x| {
                if failure.is_some() {
                    return f64::INFINITY;
                }
                let mut run = template.clone();
                run.reference = Some(reference.clone());
                run.lambda2 = Some(x[0]);
                let scored = run_lct_with(params, &evolver, &run).and_then(|r| {
                    let fwd = transfer_error(&evolver, &r.waveform, source, dest)?;
                    let rev = transfer_error(&evolver, &r.waveform, dest, source)?;
                    Ok((r.waveform, fwd, rev))
                });
                match scored {
                    Ok((pulse, fwd, rev)) => {
                        let eval = ReversibilityEval {
                            cutoff_ghz: cutoff,
                            lambda2: x[0],
                            forward_error: fwd,
                            reverse_error: rev,
                        };
                        let score = fwd.max(rev);
                        evaluations.push(eval.clone());
                        if best.as_ref().is_none_or(|b| score < b.0) {
                            best = Some((score, eval, pulse, reference.clone()));
                        }
                        score
                    }
                    Err(e) => {
                        failure = Some(e);
                        f64::INFINITY
                    }
                }
            },
            &[cfg.lambda2_init],
            &bounds,
            &opts,
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        let report = report?;
        total_evals += report.evaluations;
        history.extend(report.history.into_iter().map(|h| HistoryEntry {
            params: vec![cutoff, h.params[0]],
            objective: h.objective,
        }));
        if best.as_ref().is_some_and(|b| b.0 < cfg.fidelity_goal) {
            break;
        }
    }

    let (score, eval, pulse, reference) =
        best.ok_or_else(|| PulseError::Numerical("no evaluation completed".into()))?;
    Ok(ReversibilityOutcome {
        pulse,
        reference,
        cutoff_ghz: eval.cutoff_ghz,
        lambda2: eval.lambda2,
        report: OptimizationReport {
            best_params: vec![eval.cutoff_ghz, eval.lambda2],
            objective: score,
            forward_error: Some(eval.forward_error),
            reverse_error: Some(eval.reverse_error),
            evaluations: total_evals,
            history,
            converged: score < cfg.fidelity_goal,
        },
        evaluations,
    })
}

/// Settings of the truncation-time search.
#[derive(Clone, Debug)]
pub struct TruncationConfig {
    pub source: BasisLabel,
    pub destination: BasisLabel,
    /// Width of the half-Gaussian tail (ns).
    pub sigma: f64,
    pub fidelity_goal: f64,
    /// Simplex size in ns below which the search stops.
    pub tolerance: f64,
    pub max_evals: usize,
}

impl TruncationConfig {
    pub fn new(source: BasisLabel, destination: BasisLabel) -> Self {
        Self { source, destination, sigma: 2.0, fidelity_goal: 1e-6, tolerance: 1e-3, max_evals: 60 }
    }
}

/// Both-direction errors `(forward, reverse)` of `pulse`.
pub fn bidirectional_errors(
    evolver: &Evolver,
    pulse: &Waveform,
    source: &BasisLabel,
    destination: &BasisLabel,
) -> Result<(f64, f64)> {
    Ok((
        transfer_error(evolver, pulse, source, destination)?,
        transfer_error(evolver, pulse, destination, source)?,
    ))
}

/// Time at which the reverse process first moves 99% of the population.
pub fn reverse_transfer_time(
    evolver: &Evolver,
    pulse: &Waveform,
    source: &BasisLabel,
    destination: &BasisLabel,
) -> Result<Option<f64>> {
    let psi0 = evolver.eigenstate(destination)?;
    let record = propagate_with(evolver, &psi0, pulse, std::slice::from_ref(source))?;
    record.first_crossing(source, 0.99)
}

/// Replace the tail of `pulse` after a time `tau` by a half-Gaussian of width
/// `cfg.sigma`, searching `tau` from the reverse 99% transfer time so that
/// both directions keep meeting the goal.
pub fn optimize_truncation(
    params: &SystemParams,
    pulse: &Waveform,
    cfg: &TruncationConfig,
) -> Result<(Waveform, OptimizationReport)> {
    if !(cfg.sigma > 0.0 && cfg.sigma.is_finite()) {
        return Err(PulseError::Config(format!("sigma = {} must be positive", cfg.sigma)));
    }
    let evolver = Evolver::new(params)?;
    let (src, dst) = (&cfg.source, &cfg.destination);
    let tau0 = reverse_transfer_time(&evolver, pulse, src, dst)?.unwrap_or(pulse.duration());
    let bounds = Bounds::new(vec![pulse.dt()], vec![pulse.duration()])?;
    let mut failure = None;
    let mut report = nelder_mead(
        |x| {
            let scored = truncate_with_gaussian_tail(pulse, x[0], cfg.sigma)
                .and_then(|w| bidirectional_errors(&evolver, &w, src, dst));
            match scored {
                Ok((f, r)) => f.max(r),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            }
        },
        &[tau0],
        &bounds,
        &NelderMeadOptions {
            tolerance: cfg.tolerance,
            max_evals: cfg.max_evals,
            initial_step: Some(vec![(0.05 * tau0).max(pulse.dt())]),
            f_target: Some(cfg.fidelity_goal),
        },
    )?;
    if let Some(e) = failure {
        if !report.objective.is_finite() {
            return Err(e);
        }
    }
    let truncated = truncate_with_gaussian_tail(pulse, report.best_params[0], cfg.sigma)?;
    let (f, r) = bidirectional_errors(&evolver, &truncated, src, dst)?;
    report.forward_error = Some(f);
    report.reverse_error = Some(r);
    report.converged = f.max(r) < cfg.fidelity_goal;
    Ok((truncated, report))
}

/// Settings of the analytic-pulse fit.
#[derive(Clone, Debug)]
pub struct AnalyticFitConfig {
    pub source: BasisLabel,
    pub destination: BasisLabel,
    pub dt: f64,
    pub fidelity_goal: f64,
    pub stage1_evals: usize,
    pub stage2_evals: usize,
    pub tolerance: f64,
}

impl AnalyticFitConfig {
    pub fn new(source: BasisLabel, destination: BasisLabel) -> Self {
        Self {
            source,
            destination,
            dt: 0.01,
            fidelity_goal: 1e-6,
            stage1_evals: 600,
            stage2_evals: 400,
            tolerance: 1e-7,
        }
    }
}

/// Transfer error of the analytic pulse sampled over its natural duration,
/// plus a penalty for invariant violations.
pub fn analytic_objective(
    evolver: &Evolver,
    params: &SystemParams,
    p: &AnalyticPulseParams,
    cfg: &AnalyticFitConfig,
) -> f64 {
    let violation = p.violation(params);
    if violation > 0.0 || p.validate(params).is_err() {
        return 1.0 + BOUND_PENALTY * violation;
    }
    analytic_pulse(p, params, cfg.dt, p.natural_duration())
        .and_then(|w| transfer_error(evolver, &w, &cfg.source, &cfg.destination))
        .unwrap_or(f64::INFINITY)
}

/// Two-stage bounded fit: amplitudes and switching times first with the
/// widths frozen, then the widths alone.
pub fn fit_analytic_pulse(
    params: &SystemParams,
    init: &AnalyticPulseParams,
    bounds: &Bounds,
    cfg: &AnalyticFitConfig,
) -> Result<(AnalyticPulseParams, OptimizationReport)> {
    if bounds.lower().len() != 8 {
        return Err(PulseError::OptimizerInit("analytic bounds need 8 entries".into()));
    }
    let evolver = Evolver::new(params)?;
    let x0 = init.to_vec();
    let f = |x: &[f64]| analytic_objective(&evolver, params, &AnalyticPulseParams::from_slice(x), cfg);

    let sub = |idx: &[usize]| {
        Bounds::new(
            idx.iter().map(|&i| bounds.lower()[i]).collect(),
            idx.iter().map(|&i| bounds.upper()[i]).collect(),
        )
    };
    let step = |x: &[f64], idx: &[usize], frac: f64| -> Vec<f64> {
        idx.iter().map(|&i| if x[i] == 0.0 { 0.05 } else { frac * x[i] }).collect()
    };

    let stage1_idx = [0, 1, 2, 3, 4];
    let s1 = nelder_mead(
        |y| {
            let mut x = x0.clone();
            for (k, &i) in stage1_idx.iter().enumerate() {
                x[i] = y[k];
            }
            f(&x)
        },
        &stage1_idx.map(|i| x0[i]),
        &sub(&stage1_idx)?,
        &NelderMeadOptions {
            tolerance: cfg.tolerance,
            max_evals: cfg.stage1_evals,
            initial_step: Some(step(&x0, &stage1_idx, 0.02)),
            f_target: Some(cfg.fidelity_goal * 0.1),
        },
    )?;
    let mut x1 = x0.clone();
    for (k, &i) in stage1_idx.iter().enumerate() {
        x1[i] = s1.best_params[k];
    }

    let stage2_idx = [5, 6, 7];
    let s2 = nelder_mead(
        |y| {
            let mut x = x1.clone();
            for (k, &i) in stage2_idx.iter().enumerate() {
                x[i] = y[k];
            }
            f(&x)
        },
        &stage2_idx.map(|i| x1[i]),
        &sub(&stage2_idx)?,
        &NelderMeadOptions {
            tolerance: cfg.tolerance,
            max_evals: cfg.stage2_evals,
            initial_step: Some(step(&x1, &stage2_idx, 0.1)),
            f_target: Some(cfg.fidelity_goal * 0.1),
        },
    )?;
    let mut x2 = x1.clone();
    for (k, &i) in stage2_idx.iter().enumerate() {
        x2[i] = s2.best_params[k];
    }
    let (best, objective) = if s2.objective <= s1.objective { (x2, s2.objective) } else { (x1.clone(), s1.objective) };

    let mut history = s1.history;
    history.extend(s2.history.into_iter().map(|h| {
        let mut x = x1.clone();
        for (k, &i) in stage2_idx.iter().enumerate() {
            x[i] = h.params[k];
        }
        HistoryEntry { params: x, objective: h.objective }
    }));
    let fitted = AnalyticPulseParams::from_slice(&best);
    let reverse = analytic_pulse(&fitted, params, cfg.dt, fitted.natural_duration())
        .and_then(|w| transfer_error(&evolver, &w.time_reversed(), &cfg.destination, &cfg.source))
        .ok();
    Ok((
        fitted,
        OptimizationReport {
            best_params: best,
            objective,
            forward_error: Some(objective),
            reverse_error: reverse,
            evaluations: s1.evaluations + s2.evaluations,
            history,
            converged: objective < cfg.fidelity_goal,
        },
    ))
}

/// Starting point of the analytic fit: plateaus at the two single-excitation
/// crossings (deeper one first), switching times offset from `tau1` by the
/// given transfer times, and narrow widths.
pub fn initial_analytic_guess(
    params: &SystemParams,
    tau1: f64,
    switch_delay: f64,
    total_delay: f64,
    sigma: f64,
) -> Result<AnalyticPulseParams> {
    let lo = -params.omega_tc_max() + params.clamp_floor();
    let minima = single_excitation_gap_minima(params, lo, 0.0, 2001)?;
    if minima.len() < 2 {
        return Err(PulseError::OptimizerInit("fewer than two avoided crossings found".into()));
    }
    let shallow = minima[0].delta_omega;
    let deep = minima[minima.len() - 1].delta_omega;
    Ok(AnalyticPulseParams {
        alpha1: deep,
        alpha3: shallow,
        tau1,
        tau2: tau1 + switch_delay,
        tau3: tau1 + total_delay,
        sigma1: sigma,
        sigma2: sigma,
        sigma3: sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_minimum() {
        let r = nelder_mead(
            |x| (x[0] - 3.0).powi(2),
            &[0.0],
            &Bounds::new(vec![-10.0], vec![10.0]).unwrap(),
            &NelderMeadOptions { initial_step: Some(vec![1.0]), ..Default::default() },
        )
        .unwrap();
        assert!((r.best_params[0] - 3.0).abs() < 1e-6);
        assert!(r.converged);
    }

    #[test]
    fn rosenbrock_within_budget() {
        let rosen = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let r = nelder_mead(
            rosen,
            &[-1.2, 1.0],
            &Bounds::unbounded(2),
            &NelderMeadOptions { max_evals: 500, tolerance: 1e-10, ..Default::default() },
        )
        .unwrap();
        assert!(r.objective < 1e-8, "f = {}", r.objective);
        assert!(r.evaluations <= 500 + 2);
    }

    #[test]
    fn constant_objective_converges_at_once() {
        let r = nelder_mead(|_| 4.0, &[1.0, 2.0], &Bounds::unbounded(2), &Default::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.evaluations, 3);
        assert_eq!(r.best_params, vec![1.0, 2.0]);
    }

    #[test]
    fn best_point_respects_bounds() {
        let b = Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let r = nelder_mead(|x| x[0] + x[1], &[0.5, 0.5], &b, &Default::default()).unwrap();
        assert!(b.contains(&r.best_params));
        assert!(r.objective < 1e-6);
    }

    #[test]
    fn init_errors() {
        let b = Bounds::new(vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(
            nelder_mead(|_| f64::NAN, &[0.5], &b, &Default::default()),
            Err(PulseError::OptimizerInit(_))
        ));
        assert!(nelder_mead(|x| x[0], &[2.0], &b, &Default::default()).is_err());
        assert!(Bounds::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn history_is_recorded() {
        let r = nelder_mead(|x| x[0] * x[0], &[1.0], &Bounds::unbounded(1), &Default::default())
            .unwrap();
        assert!(!r.history.is_empty());
        assert!(r.history.windows(2).all(|w| w[1].objective <= w[0].objective));
    }
}
