//! Time propagation under piecewise-constant Hamiltonians.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{PulseError, Result};
use crate::model::{
    build_control_generator, build_drift_hamiltonian, eigendecompose, hermitian_eigh,
    BasisLabel, DriftSpectrum, HermitianOperator, SystemParams,
};
use crate::pulses::Waveform;

/// Normalized state vector on the product space.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState(DVector<C64>);

impl QuantumState {
    /// Normalize `amplitudes`; fails on a zero or non-finite vector.
    pub fn new(amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(PulseError::Domain("state vector has zero or non-finite norm".into()));
        }
        Ok(Self(amplitudes / C64::new(norm, 0.0)))
    }

    #[cfg(test)]
    pub(crate) fn from_normalized(amplitudes: DVector<C64>) -> Self {
        Self(amplitudes)
    }

    /// Product state with index `index`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Self(v)
    }

    /// Eigenvector `k` of `spectrum`.
    pub fn eigenstate(spectrum: &DriftSpectrum, k: usize) -> Self {
        Self(spectrum.eigenvector(k))
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// `<other|self>`.
    pub fn overlap(&self, other: &DVector<C64>) -> C64 {
        other.dotc(&self.0)
    }

    /// `|<v|self>|^2`.
    pub fn population(&self, v: &DVector<C64>) -> f64 {
        self.overlap(v).norm_sqr()
    }

    /// Complex conjugate of every amplitude.
    pub fn conjugate(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }
}

/// Populations of tracked dressed states along a propagation.
///
/// Row `k` holds the state at `times[k] = k * dt`; `control[k]` is the
/// detuning held over `[t_k, t_k + dt)` (rad/ns), and the last entry, after the
/// pulse has ended, is whatever the producer applied next (zero for a finished
/// waveform).
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub times: Vec<f64>,
    pub control: Vec<f64>,
    pub labels: Vec<BasisLabel>,
    /// `populations[k][m]` is the population of `labels[m]` at `times[k]`.
    pub populations: Vec<Vec<f64>>,
    pub final_state: QuantumState,
}

impl TrajectoryRecord {
    pub fn label_index(&self, label: &BasisLabel) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| PulseError::UnknownState(format!("|{label}> not tracked")))
    }

    /// Time series of one tracked population.
    pub fn series(&self, label: &BasisLabel) -> Result<Vec<f64>> {
        let m = self.label_index(label)?;
        Ok(self.populations.iter().map(|row| row[m]).collect())
    }

    pub fn final_population(&self, label: &BasisLabel) -> Result<f64> {
        let m = self.label_index(label)?;
        Ok(self.populations.last().map_or(0.0, |row| row[m]))
    }

    /// First time at which `label` reaches `threshold` population.
    pub fn first_crossing(&self, label: &BasisLabel, threshold: f64) -> Result<Option<f64>> {
        let m = self.label_index(label)?;
        Ok(self
            .populations
            .iter()
            .zip(&self.times)
            .find(|(row, _)| row[m] >= threshold)
            .map(|(_, &t)| t))
    }

    /// Largest single-step drop of a tracked population (0 if non-decreasing).
    pub fn max_decrease(&self, label: &BasisLabel) -> Result<f64> {
        let s = self.series(label)?;
        Ok(s.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max))
    }
}

/// Unitary `exp(-i h dt)` from the eigendecomposition of `h`.
pub fn step_unitary(h: &HermitianOperator, dt: f64) -> DMatrix<C64> {
    let (values, vectors) = hermitian_eigh(h.matrix());
    let phases =
        DVector::from_iterator(values.len(), values.iter().map(|&e| C64::new(0.0, -e * dt).exp()));
    let scaled = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |r, c| vectors[(r, c)] * phases[c]);
    scaled * vectors.adjoint()
}

/// Advance `state` by `dt` under the constant Hamiltonian `h`.
pub fn propagate_step(state: &QuantumState, h: &HermitianOperator, dt: f64) -> Result<QuantumState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(PulseError::Domain(format!("time step {dt} must be positive")));
    }
    if h.dim() != state.dim() {
        return Err(PulseError::Domain(format!(
            "operator dimension {} does not match state dimension {}",
            h.dim(),
            state.dim()
        )));
    }
    Ok(QuantumState(step_unitary(h, dt) * &state.0))
}

/// Drift Hamiltonian, control generator and drift spectrum reused by every
/// step of a propagation.
#[derive(Clone, Debug)]
pub struct Evolver {
    drift: HermitianOperator,
    generator: HermitianOperator,
    spectrum: DriftSpectrum,
}

impl Evolver {
    pub fn new(params: &SystemParams) -> Result<Self> {
        let drift = build_drift_hamiltonian(params, 0.0)?;
        let generator = build_control_generator(params);
        let spectrum = eigendecompose(&drift);
        Ok(Self { drift, generator, spectrum })
    }

    pub fn drift(&self) -> &HermitianOperator {
        &self.drift
    }

    pub fn generator(&self) -> &HermitianOperator {
        &self.generator
    }

    pub fn spectrum(&self) -> &DriftSpectrum {
        &self.spectrum
    }

    /// `H_d + dw * generator`.
    pub fn hamiltonian(&self, delta_omega: f64) -> HermitianOperator {
        self.drift.add_scaled(&self.generator, delta_omega)
    }

    /// One sample-and-hold step with coupler detuning `delta_omega`.
    pub fn step(&self, state: &QuantumState, delta_omega: f64, dt: f64) -> QuantumState {
        let u = step_unitary(&self.hamiltonian(delta_omega), dt);
        QuantumState(u * &state.0)
    }

    /// Populations of the dressed states at `indices`.
    pub fn populations(&self, state: &QuantumState, indices: &[usize]) -> Vec<f64> {
        indices
            .iter()
            .map(|&k| state.overlap(&self.spectrum.eigenvector(k)).norm_sqr())
            .collect()
    }

    pub fn eigenstate(&self, label: &BasisLabel) -> Result<QuantumState> {
        Ok(QuantumState::eigenstate(&self.spectrum, self.spectrum.resolve(label)?))
    }
}

/// Apply a waveform sample by sample from `psi0`, recording the populations of
/// the dressed states named in `tracked`.
pub fn propagate_waveform(
    params: &SystemParams,
    psi0: &QuantumState,
    wf: &Waveform,
    tracked: &[BasisLabel],
) -> Result<TrajectoryRecord> {
    propagate_with(&Evolver::new(params)?, psi0, wf, tracked)
}

/// [`propagate_waveform`] with a prepared [`Evolver`].
pub fn propagate_with(
    evolver: &Evolver,
    psi0: &QuantumState,
    wf: &Waveform,
    tracked: &[BasisLabel],
) -> Result<TrajectoryRecord> {
    let indices = tracked
        .iter()
        .map(|l| evolver.spectrum.resolve(l))
        .collect::<Result<Vec<_>>>()?;
    if psi0.dim() != evolver.drift.dim() {
        return Err(PulseError::Domain("initial state has the wrong dimension".into()));
    }
    let dt = wf.dt();
    let n = wf.len();
    let mut times = Vec::with_capacity(n + 1);
    let mut control = Vec::with_capacity(n + 1);
    let mut populations = Vec::with_capacity(n + 1);
    let mut state = psi0.clone();
    times.push(0.0);
    populations.push(evolver.populations(&state, &indices));
    for (k, &dw) in wf.samples().iter().enumerate() {
        control.push(dw);
        state = evolver.step(&state, dw, dt);
        times.push((k + 1) as f64 * dt);
        populations.push(evolver.populations(&state, &indices));
    }
    control.push(0.0);
    Ok(TrajectoryRecord {
        dt,
        times,
        control,
        labels: tracked.to_vec(),
        populations,
        final_state: state,
    })
}

/// Final state only; cheaper than [`propagate_with`] when no record is needed.
pub fn final_state(evolver: &Evolver, psi0: &QuantumState, wf: &Waveform) -> QuantumState {
    wf.samples()
        .iter()
        .fold(psi0.clone(), |s, &dw| evolver.step(&s, dw, wf.dt()))
}

/// Instantaneous population derivative `i <[H, P]>` for the state, Hamiltonian
/// and projector given.
pub fn population_derivative_check(
    state: &QuantumState,
    h: &HermitianOperator,
    projector: &HermitianOperator,
) -> f64 {
    let comm = h.commutator(projector);
    let expectation = state.0.dotc(&(comm * &state.0));
    let rate = C64::new(0.0, 1.0) * expectation;
    debug_assert!(
        rate.im.abs() <= 1e-12 * (1.0 + h.max_abs()),
        "commutator expectation not imaginary: {rate}"
    );
    rate.re
}
