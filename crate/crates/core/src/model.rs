//! Device model: qubit/coupler Hamiltonians, the flux-frequency relation,
//! dressed-state spectra and nonadiabatic couplings.
//!
//! Basis ordering: a product state `|q1 q2 ... qn qTC>` has index
//! `sum_e q_e * 2^(n - e)`, so the first qubit is the most significant bit and
//! the coupler the least significant one. The ground state of every element is
//! the `+1` eigenstate of its `sigma_z`, so `-1/2 w sigma_z` assigns excitation
//! energy `+w`.

use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{PulseError, Result};

/// Largest dense operator dimension built by default.
pub const DEFAULT_DIM_CAP: usize = 1 << 14;

/// Relative tolerance used when checking Hermiticity of built operators.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Pairs of levels closer than this (rad/ns) are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Convert a frequency in GHz (cycles/ns) to an angular frequency in rad/ns.
pub fn ghz_to_rad(nu_ghz: f64) -> f64 {
    TAU * nu_ghz
}

/// Convert an angular frequency in rad/ns to GHz.
pub fn rad_to_ghz(omega: f64) -> f64 {
    omega / TAU
}

/// Device constants. All frequencies are angular (rad/ns).
#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams {
    omega: Vec<f64>,
    g: Vec<f64>,
    omega_tc_max: f64,
}

impl SystemParams {
    pub fn new(omega: Vec<f64>, g: Vec<f64>, omega_tc_max: f64) -> Result<Self> {
        if omega.is_empty() {
            return Err(PulseError::InvalidParams("at least one qubit required".into()));
        }
        if omega.len() != g.len() {
            return Err(PulseError::InvalidParams(format!(
                "{} qubit frequencies but {} couplings",
                omega.len(),
                g.len()
            )));
        }
        if let Some(w) = omega.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(PulseError::InvalidParams(format!("qubit frequency {w} must be positive")));
        }
        for (i, (&gi, &wi)) in g.iter().zip(&omega).enumerate() {
            // g = 0 is accepted: decoupled limits are used as reference models.
            if !(gi.is_finite() && gi >= 0.0) {
                return Err(PulseError::InvalidParams(format!("coupling g[{i}] = {gi} must be >= 0")));
            }
            if gi >= wi {
                return Err(PulseError::InvalidParams(format!(
                    "coupling g[{i}] = {gi} must be below the qubit frequency {wi}"
                )));
            }
        }
        let w_max = omega.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(omega_tc_max.is_finite() && omega_tc_max > w_max) {
            return Err(PulseError::InvalidParams(format!(
                "coupler maximum frequency {omega_tc_max} must exceed every qubit frequency"
            )));
        }
        Ok(Self { omega, g, omega_tc_max })
    }

    /// Build from frequencies given as `nu = omega / 2pi` in GHz.
    pub fn from_ghz(qubit_freqs: &[f64], couplings: &[f64], tc_max_freq: f64) -> Result<Self> {
        Self::new(
            qubit_freqs.iter().map(|&f| ghz_to_rad(f)).collect(),
            couplings.iter().map(|&f| ghz_to_rad(f)).collect(),
            ghz_to_rad(tc_max_freq),
        )
    }

    /// Number of fixed-frequency qubits.
    pub fn n(&self) -> usize {
        self.omega.len()
    }

    /// Number of two-level elements, qubits plus coupler.
    pub fn n_elements(&self) -> usize {
        self.omega.len() + 1
    }

    /// Hilbert-space dimension `2^(n+1)`; `None` on overflow.
    pub fn dim(&self) -> Option<usize> {
        1usize.checked_shl(self.n_elements() as u32)
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn omega_tc_max(&self) -> f64 {
        self.omega_tc_max
    }

    /// Distance kept between the control and the `-omega_tc_max` bound.
    pub fn clamp_floor(&self) -> f64 {
        1e-3 * self.omega_tc_max
    }

    /// Clamp a coupler detuning into `[-omega_tc_max + floor, 0]`.
    pub fn clamp_control(&self, delta_omega: f64) -> f64 {
        delta_omega.clamp(-self.omega_tc_max + self.clamp_floor(), 0.0)
    }

    /// Index of the coupler in a [`BasisLabel`].
    pub fn coupler_element(&self) -> usize {
        self.omega.len()
    }

    fn checked_dim(&self, cap: usize) -> Result<usize> {
        match self.dim() {
            Some(dim) if dim <= cap => Ok(dim),
            Some(dim) => Err(PulseError::DimensionOverflow { dim, cap }),
            None => Err(PulseError::DimensionOverflow { dim: usize::MAX, cap }),
        }
    }
}

/// Product-basis label `|q1 q2 ... qn qTC>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisLabel(Vec<bool>);

impl BasisLabel {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn from_index(index: usize, n_elements: usize) -> Self {
        Self((0..n_elements).map(|e| bit(index, e, n_elements)).collect())
    }

    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn n_elements(&self) -> usize {
        self.0.len()
    }

    pub fn excitations(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BasisLabel {
    type Err = PulseError;

    /// Accepts `100`, `|100>` or `|100⟩`.
    fn from_str(s: &str) -> Result<Self> {
        let body = s.trim().trim_start_matches('|').trim_end_matches(['>', '⟩']);
        if body.is_empty() {
            return Err(PulseError::UnknownState(format!("empty label {s:?}")));
        }
        body.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(PulseError::UnknownState(format!("malformed label {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

fn bit(index: usize, element: usize, n_elements: usize) -> bool {
    (index >> (n_elements - 1 - element)) & 1 == 1
}

/// `sigma_z` eigenvalue of `element` in product state `index`.
fn z_value(index: usize, element: usize, n_elements: usize) -> f64 {
    if bit(index, element, n_elements) {
        -1.0
    } else {
        1.0
    }
}

/// Dense Hermitian matrix on the full product space.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator(DMatrix<C64>);

impl HermitianOperator {
    /// Wrap a matrix, rejecting it if it is not Hermitian to [`HERMITIAN_TOL`]
    /// relative to its largest entry.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if !m.is_square() {
            return Err(PulseError::Domain(format!("operator is {}x{}", m.nrows(), m.ncols())));
        }
        let op = Self(m);
        let scale = op.max_abs().max(f64::MIN_POSITIVE);
        let err = op.hermiticity_error();
        if err > HERMITIAN_TOL * scale {
            return Err(PulseError::Domain(format!("operator not Hermitian (residual {err:e})")));
        }
        Ok(op)
    }

    /// `|v><v|`.
    pub fn projector(v: &DVector<C64>) -> Self {
        Self(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry of `|H - H^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut err = 0.0f64;
        for i in 0..n {
            for j in i..n {
                err = err.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        err
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.0[(i, j)] == C64::new(0.0, 0.0)))
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, other: &HermitianOperator, c: f64) -> HermitianOperator {
        Self(&self.0 + &other.0 * C64::new(c, 0.0))
    }

    /// `A B - B A`.
    pub fn commutator(&self, other: &HermitianOperator) -> DMatrix<C64> {
        &self.0 * &other.0 - &other.0 * &self.0
    }

    /// Spectral norm upper bound used for residual scaling (Frobenius norm).
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Drift Hamiltonian with the coupler detuned by `delta_omega` (rad/ns):
/// `-1/2 sum w_i sz_i + sum g_i (s+_i s-_TC + h.c.) - 1/2 (w_TC + dw) sz_TC`.
pub fn build_drift_hamiltonian(params: &SystemParams, delta_omega: f64) -> Result<HermitianOperator> {
    build_drift_hamiltonian_capped(params, delta_omega, DEFAULT_DIM_CAP)
}

pub fn build_drift_hamiltonian_capped(
    params: &SystemParams,
    delta_omega: f64,
    cap: usize,
) -> Result<HermitianOperator> {
    let dim = params.checked_dim(cap)?;
    let ne = params.n_elements();
    let tc = params.coupler_element();
    let w_tc = params.omega_tc_max + delta_omega;
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    for s in 0..dim {
        let mut e = -0.5 * w_tc * z_value(s, tc, ne);
        for (i, &w) in params.omega.iter().enumerate() {
            e -= 0.5 * w * z_value(s, i, ne);
        }
        h[(s, s)] = C64::new(e, 0.0);
        // exchange: qubit i excited and coupler empty <-> qubit i empty and coupler excited
        if bit(s, tc, ne) {
            for (i, &gi) in params.g.iter().enumerate() {
                if !bit(s, i, ne) {
                    let partner = s ^ (1 << (ne - 1 - tc)) ^ (1 << (ne - 1 - i));
                    h[(partner, s)] += C64::new(gi, 0.0);
                    h[(s, partner)] += C64::new(gi, 0.0);
                }
            }
        }
    }
    Ok(HermitianOperator(h))
}

/// Generator of the control term, `-1/2 sz_TC`, so that
/// `H(t) = H_d + dw(t) * generator`.
pub fn build_control_generator(params: &SystemParams) -> HermitianOperator {
    let mut op = sigma_z_coupler(params);
    op.0 *= C64::new(-0.5, 0.0);
    op
}

/// `sz_TC` embedded in the full space.
pub fn sigma_z_coupler(params: &SystemParams) -> HermitianOperator {
    let ne = params.n_elements();
    let dim = 1usize << ne;
    let tc = params.coupler_element();
    let diag = DVector::from_iterator(dim, (0..dim).map(|s| C64::new(z_value(s, tc, ne), 0.0)));
    HermitianOperator(DMatrix::from_diagonal(&diag))
}

/// Reduced flux `Phi / Phi0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxValue(pub f64);

impl FluxValue {
    pub fn phi_over_phi0(self) -> f64 {
        self.0
    }
}

/// Coupler frequency for a given flux bias: `w0 sqrt(|cos(pi Phi/Phi0)|)`.
pub fn flux_to_frequency(params: &SystemParams, phi: FluxValue) -> f64 {
    params.omega_tc_max * (PI * phi.0).cos().abs().sqrt()
}

/// Smallest non-negative flux in `[0, 1/2]` giving coupler frequency `omega_tc`.
pub fn frequency_to_flux(params: &SystemParams, omega_tc: f64) -> Result<FluxValue> {
    let w0 = params.omega_tc_max;
    let slack = 1e-12 * w0;
    if !omega_tc.is_finite() || omega_tc < -slack || omega_tc > w0 + slack {
        return Err(PulseError::Domain(format!(
            "coupler frequency {omega_tc} outside [0, {w0}] rad/ns"
        )));
    }
    let ratio = (omega_tc / w0).clamp(0.0, 1.0);
    Ok(FluxValue((ratio * ratio).acos() / PI))
}

/// Hermitian eigendecomposition with ascending eigenvalues and each
/// eigenvector's largest-magnitude component made real-positive.
pub(crate) fn hermitian_eigh(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::<C64>::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let mut pivot = 0;
        let mut best = -1.0;
        for (s, z) in v.iter().enumerate() {
            if z.norm() > best {
                best = z.norm();
                pivot = s;
            }
        }
        let phase = v[pivot].conj() / v[pivot].norm();
        vectors.set_column(col, &(v * phase));
    }
    (values, vectors)
}

/// Eigen-decomposition of a Hamiltonian with bare-state labels.
#[derive(Clone, Debug)]
pub struct DriftSpectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<C64>,
    labels: Vec<BasisLabel>,
}

impl DriftSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Ascending eigenvalues in rad/ns.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvectors as columns, in eigenvalue order.
    pub fn eigenvectors(&self) -> &DMatrix<C64> {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, k: usize) -> DVector<C64> {
        self.eigenvectors.column(k).into_owned()
    }

    pub fn labels(&self) -> &[BasisLabel] {
        &self.labels
    }

    pub fn label(&self, k: usize) -> &BasisLabel {
        &self.labels[k]
    }

    pub fn index_of(&self, label: &BasisLabel) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Like [`index_of`](Self::index_of), with an error for unknown labels.
    pub fn resolve(&self, label: &BasisLabel) -> Result<usize> {
        self.index_of(label)
            .ok_or_else(|| PulseError::UnknownState(format!("|{label}> not in spectrum")))
    }

    /// Squared overlap between eigenvector `k` and the product state `label`.
    pub fn bare_overlap(&self, k: usize, label: &BasisLabel) -> f64 {
        self.eigenvectors[(label.index(), k)].norm_sqr()
    }

    /// Mean excitation number of eigenvector `k`.
    pub fn excitation_number(&self, k: usize) -> f64 {
        let ne = self.labels[0].n_elements();
        self.eigenvectors
            .column(k)
            .iter()
            .enumerate()
            .map(|(s, z)| z.norm_sqr() * BasisLabel::from_index(s, ne).excitations() as f64)
            .sum()
    }

    /// Eigen-indices (ascending energy) of the single-excitation manifold.
    pub fn single_excitation_levels(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&k| (self.excitation_number(k) - 1.0).abs() < 0.5)
            .collect()
    }
}

/// Diagonalize `h` and label each eigenvector with the product state it
/// overlaps most. Assignment is injective: pairs are taken greedily by
/// decreasing overlap, ties going to the lowest product-basis index.
pub fn eigendecompose(h: &HermitianOperator) -> DriftSpectrum {
    let dim = h.dim();
    let (eigenvalues, eigenvectors) = hermitian_eigh(h.matrix());
    let n_elements = dim.trailing_zeros() as usize;

    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(dim * dim);
    for k in 0..dim {
        for s in 0..dim {
            pairs.push((eigenvectors[(s, k)].norm_sqr(), s, k));
        }
    }
    pairs.sort_by(|a, b| match b.0.total_cmp(&a.0) {
        Ordering::Equal => a.1.cmp(&b.1).then(a.2.cmp(&b.2)),
        ord => ord,
    });
    let mut label_of: Vec<Option<usize>> = vec![None; dim];
    let mut taken = vec![false; dim];
    let mut remaining = dim;
    for (_, s, k) in pairs {
        if remaining == 0 {
            break;
        }
        if label_of[k].is_none() && !taken[s] {
            label_of[k] = Some(s);
            taken[s] = true;
            remaining -= 1;
        }
    }
    let labels = label_of
        .into_iter()
        .map(|s| BasisLabel::from_index(s.expect("every eigenvector labelled"), n_elements))
        .collect();
    DriftSpectrum { eigenvalues, eigenvectors, labels }
}

/// Spectrum of the drift Hamiltonian at coupler detuning `delta_omega`.
pub fn spectrum_at(params: &SystemParams, delta_omega: f64) -> Result<DriftSpectrum> {
    Ok(eigendecompose(&build_drift_hamiltonian(params, delta_omega)?))
}

/// Hellmann-Feynman coupling `<j| dH/d(dw) |k> / (E_j - E_k)` at detuning
/// `delta_omega`, with `dH/d(dw) = -1/2 sz_TC`. Indices refer to ascending
/// eigenvalue order.
pub fn nonadiabatic_coupling(
    params: &SystemParams,
    j: usize,
    k: usize,
    delta_omega: f64,
) -> Result<f64> {
    let spectrum = spectrum_at(params, delta_omega)?;
    coupling_in_spectrum(&spectrum, &build_control_generator(params), j, k)
}

/// Same as [`nonadiabatic_coupling`] for an already diagonalized Hamiltonian.
pub fn coupling_in_spectrum(
    spectrum: &DriftSpectrum,
    generator: &HermitianOperator,
    j: usize,
    k: usize,
) -> Result<f64> {
    let dim = spectrum.dim();
    if j == k || j >= dim || k >= dim {
        return Err(PulseError::Domain(format!("invalid level pair ({j}, {k}) for dim {dim}")));
    }
    let gap = spectrum.eigenvalues[j] - spectrum.eigenvalues[k];
    if gap.abs() < DEGENERACY_TOL {
        return Err(PulseError::Singular { j, k, gap });
    }
    let vj = spectrum.eigenvectors.column(j);
    let vk = spectrum.eigenvectors.column(k);
    let num = vj.dotc(&(generator.matrix() * vk));
    Ok(num.re / gap)
}

/// `steps` evenly spaced points over `[lo, hi]`; a single point gives `[lo]`.
pub fn sweep_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..steps)
            .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

/// Location of a minimum of the gap between two adjacent single-excitation
/// levels.
#[derive(Clone, Debug, PartialEq)]
pub struct GapMinimum {
    /// Position of the lower level inside the single-excitation manifold
    /// (0 = lowest).
    pub lower_level: usize,
    /// Detuning of the minimum, rad/ns.
    pub delta_omega: f64,
    /// Gap at the minimum, rad/ns.
    pub gap: f64,
}

fn adjacent_single_gaps(params: &SystemParams, delta_omega: f64) -> Result<Vec<f64>> {
    let spectrum = spectrum_at(params, delta_omega)?;
    let levels = spectrum.single_excitation_levels();
    Ok(levels
        .windows(2)
        .map(|w| spectrum.eigenvalues[w[1]] - spectrum.eigenvalues[w[0]])
        .collect())
}

/// Interior minima of the adjacent single-excitation gaps over a detuning
/// sweep (rad/ns), refined between neighbouring grid points by golden-section
/// search. Grids with fewer than three points report nothing.
pub fn single_excitation_gap_minima(
    params: &SystemParams,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<Vec<GapMinimum>> {
    let grid = sweep_grid(lo, hi, steps);
    if grid.len() < 3 {
        return Ok(Vec::new());
    }
    let gaps = grid
        .iter()
        .map(|&dw| adjacent_single_gaps(params, dw))
        .collect::<Result<Vec<_>>>()?;
    let n_gaps = gaps.iter().map(Vec::len).min().unwrap_or(0);
    let mut minima = Vec::new();
    for m in 0..n_gaps {
        let (arg, _) = gaps
            .iter()
            .enumerate()
            .map(|(i, g)| (i, g[m]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty grid");
        if arg == 0 || arg == grid.len() - 1 {
            continue;
        }
        let f = |dw: f64| adjacent_single_gaps(params, dw).map(|g| g[m]);
        let (delta_omega, gap) = golden_section(f, grid[arg - 1], grid[arg + 1], 1e-9)?;
        minima.push(GapMinimum { lower_level: m, delta_omega, gap });
    }
    minima.sort_by(|a, b| b.delta_omega.total_cmp(&a.delta_omega));
    Ok(minima)
}

/// Detuning (rad/ns) minimizing `|E_a - E_b|`, the gap between the two dressed
/// branches labelled `a` and `b`, over a sweep grid.
pub fn labelled_crossing(
    params: &SystemParams,
    a: &BasisLabel,
    b: &BasisLabel,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for dw in sweep_grid(lo, hi, steps) {
        let spectrum = spectrum_at(params, dw)?;
        let gap = (spectrum.eigenvalues[spectrum.resolve(a)?]
            - spectrum.eigenvalues[spectrum.resolve(b)?])
        .abs();
        if best.is_none_or(|(_, g)| gap < g) {
            best = Some((dw, gap));
        }
    }
    best.ok_or_else(|| PulseError::Domain("empty sweep".into()))
}

fn golden_section<F>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn device() -> SystemParams {
        SystemParams::from_ghz(&[5.890, 5.031], &[0.100, 0.071], 7.445).unwrap()
    }

    fn decoupled() -> SystemParams {
        SystemParams::from_ghz(&[5.890, 5.031], &[0.0, 0.0], 7.445).unwrap()
    }

    fn label(s: &str) -> BasisLabel {
        s.parse().unwrap()
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(SystemParams::from_ghz(&[], &[], 7.0).is_err());
        assert!(SystemParams::from_ghz(&[5.0], &[0.1, 0.1], 7.0).is_err());
        assert!(SystemParams::from_ghz(&[5.0], &[0.1], 4.0).is_err());
        assert!(SystemParams::from_ghz(&[-5.0], &[0.1], 7.0).is_err());
        assert!(SystemParams::from_ghz(&[5.0], &[6.0], 7.0).is_err());
    }

    #[test]
    fn label_round_trip() {
        let l = label("|100>");
        assert_eq!(l.index(), 4);
        assert_eq!(l.to_string(), "100");
        assert_eq!(BasisLabel::from_index(1, 3), label("001"));
        assert_eq!(label("|010⟩").index(), 2);
        assert!("1x0".parse::<BasisLabel>().is_err());
    }

    #[test]
    fn dimension_and_cap() {
        let h = build_drift_hamiltonian(&device(), 0.0).unwrap();
        assert_eq!(h.dim(), 8);
        let err = build_drift_hamiltonian_capped(&device(), 0.0, 4).unwrap_err();
        assert!(matches!(err, PulseError::DimensionOverflow { dim: 8, cap: 4 }));
        let many = SystemParams::from_ghz(&[5.0; 14], &[0.1; 14], 7.0).unwrap();
        assert!(matches!(
            build_drift_hamiltonian(&many, 0.0),
            Err(PulseError::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn decoupled_eigenvalues_are_sums() {
        let p = decoupled();
        let dw = ghz_to_rad(-0.3);
        let s = spectrum_at(&p, dw).unwrap();
        let (w1, w2, wt) = (p.omega()[0], p.omega()[1], p.omega_tc_max() + dw);
        let mut expected: Vec<f64> = (0..8)
            .map(|idx| {
                let l = BasisLabel::from_index(idx, 3);
                [w1, w2, wt]
                    .iter()
                    .zip(l.bits())
                    .map(|(w, &b)| if b { 0.5 * w } else { -0.5 * w })
                    .sum()
            })
            .collect();
        expected.sort_by(f64::total_cmp);
        for (e, x) in s.eigenvalues().iter().zip(&expected) {
            assert!((e - x).abs() < 1e-12, "{e} vs {x}");
        }
        let k = s.resolve(&label("000")).unwrap();
        assert!((s.eigenvalues()[k] + 0.5 * (w1 + w2 + wt)).abs() < 1e-12);
        for k in 0..8 {
            assert!((s.bare_overlap(k, s.label(k)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn operators_are_hermitian() {
        let p = device();
        for dw in [0.0, -5.0, -12.0] {
            let h = build_drift_hamiltonian(&p, dw).unwrap();
            assert!(h.hermiticity_error() <= HERMITIAN_TOL * h.max_abs());
        }
        let c = build_control_generator(&p);
        assert_eq!(c.hermiticity_error(), 0.0);
    }

    #[test]
    fn control_generator_signs() {
        let p = device();
        let c = build_control_generator(&p);
        assert!(c.is_diagonal());
        for s in 0..8 {
            let expected = if s & 1 == 0 { -0.5 } else { 0.5 };
            assert_eq!(c.matrix()[(s, s)].re, expected);
        }
        let h0 = build_drift_hamiltonian(&decoupled(), 0.0).unwrap();
        assert!(h0.commutator(&c).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn flux_relation() {
        let p = device();
        let w0 = p.omega_tc_max();
        assert!((flux_to_frequency(&p, FluxValue(0.0)) - w0).abs() < 1e-12);
        assert!(flux_to_frequency(&p, FluxValue(0.5)).abs() < 1e-6);
        assert!((flux_to_frequency(&p, FluxValue(1.0 / 3.0)) - w0 * 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(frequency_to_flux(&p, w0).unwrap().0, 0.0);
        assert!((frequency_to_flux(&p, 0.0).unwrap().0 - 0.5).abs() < 1e-15);
        assert!((frequency_to_flux(&p, w0 * 0.5f64.sqrt()).unwrap().0 - 1.0 / 3.0).abs() < 1e-12);
        assert!(frequency_to_flux(&p, -1.0).is_err());
        assert!(frequency_to_flux(&p, 1.01 * w0).is_err());
        for i in 1..100 {
            let w = w0 * i as f64 / 100.0;
            let back = flux_to_frequency(&p, frequency_to_flux(&p, w).unwrap());
            assert!((back - w).abs() <= 1e-10 * w);
        }
    }

    #[test]
    fn spectrum_is_orthonormal_and_reconstructs() {
        let p = device();
        for dw in [0.0, ghz_to_rad(-1.555), ghz_to_rad(-2.4)] {
            let h = build_drift_hamiltonian(&p, dw).unwrap();
            let s = eigendecompose(&h);
            let v = s.eigenvectors();
            let gram = v.adjoint() * v;
            let eye = DMatrix::<C64>::identity(8, 8);
            assert!((gram - eye).norm() < 1e-10);
            let d = DMatrix::from_diagonal(&DVector::from_iterator(
                8,
                s.eigenvalues().iter().map(|&e| C64::new(e, 0.0)),
            ));
            let rebuilt = v * d * v.adjoint();
            assert!((rebuilt - h.matrix()).norm() <= 1e-10 * h.norm());
            for k in 0..8 {
                let vk = s.eigenvector(k);
                let r = h.matrix() * &vk - &vk * C64::new(s.eigenvalues()[k], 0.0);
                assert!(r.norm() <= 1e-10 * h.norm());
            }
            let mut idx: Vec<usize> = s.labels().iter().map(BasisLabel::index).collect();
            idx.sort();
            assert_eq!(idx, (0..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn dispersive_labels_at_sweet_spot() {
        let s = spectrum_at(&device(), 0.0).unwrap();
        let k = s.resolve(&label("100")).unwrap();
        assert!(s.bare_overlap(k, &label("100")) > 0.99);
    }

    #[test]
    fn resonant_pair_is_half_mixed() {
        let s = spectrum_at(&device(), ghz_to_rad(-1.555)).unwrap();
        let a = s.resolve(&label("100")).unwrap();
        let b = s.resolve(&label("001")).unwrap();
        for k in [a, b] {
            for l in ["100", "001"] {
                let o = s.bare_overlap(k, &label(l));
                assert!((o - 0.5).abs() < 0.05, "overlap {o}");
            }
        }
    }

    #[test]
    fn couplings_vanish_without_exchange() {
        let p = decoupled();
        for dw in [0.0, -3.0, -9.0] {
            let s = spectrum_at(&p, dw).unwrap();
            let c = build_control_generator(&p);
            for j in 0..8 {
                for k in 0..8 {
                    if j == k || (s.eigenvalues()[j] - s.eigenvalues()[k]).abs() < DEGENERACY_TOL {
                        continue;
                    }
                    assert_eq!(coupling_in_spectrum(&s, &c, j, k).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn coupling_is_antisymmetric() {
        let p = device();
        let dw = ghz_to_rad(-1.5);
        for (j, k) in [(1, 2), (2, 3), (1, 3)] {
            let a = nonadiabatic_coupling(&p, j, k, dw).unwrap();
            let b = nonadiabatic_coupling(&p, k, j, dw).unwrap();
            assert!((a + b).abs() < 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn coupling_errors() {
        let p = device();
        assert!(matches!(nonadiabatic_coupling(&p, 1, 1, 0.0), Err(PulseError::Domain(_))));
        // decoupled |100> and |001> are exactly degenerate at dw = w1 - w0
        let d = decoupled();
        let dw = d.omega()[0] - d.omega_tc_max();
        let s = spectrum_at(&d, dw).unwrap();
        let a = s.resolve(&label("100")).unwrap();
        let b = s.resolve(&label("001")).unwrap();
        assert!(matches!(
            coupling_in_spectrum(&s, &build_control_generator(&d), a, b),
            Err(PulseError::Singular { .. })
        ));
    }

    #[test]
    fn hellmann_feynman_matches_finite_difference() {
        // dw-derivative of eigenvector j projected on k: <k|d j> = d_jk
        let p = device();
        let h = 1e-6;
        for dw_ghz in [-0.5, -1.4, -1.6, -2.3, -2.5] {
            let dw = ghz_to_rad(dw_ghz);
            let s0 = spectrum_at(&p, dw).unwrap();
            let sp = spectrum_at(&p, dw + h).unwrap();
            let sm = spectrum_at(&p, dw - h).unwrap();
            for &(j, k) in &[(1usize, 2usize), (2, 3), (1, 3)] {
                let hf = nonadiabatic_coupling(&p, j, k, dw).unwrap();
                let vk = s0.eigenvector(k);
                let fd = (vk.dotc(&sp.eigenvector(j)) - vk.dotc(&sm.eigenvector(j))).re / (2.0 * h);
                assert!((hf - fd).abs() <= 1e-4 * hf.abs(), "({j},{k}) at {dw_ghz}: {hf} vs {fd}");
            }
        }
    }

    #[test]
    fn crossings_sit_at_qubit_coupler_resonances() {
        let p = device();
        let minima =
            single_excitation_gap_minima(&p, ghz_to_rad(-3.0), 0.0, 601).unwrap();
        assert_eq!(minima.len(), 2);
        assert!((rad_to_ghz(minima[0].delta_omega) + 1.56).abs() < 0.02);
        assert!((rad_to_ghz(minima[1].delta_omega) + 2.40).abs() < 0.02);

        let (dw, _) = labelled_crossing(&p, &label("100"), &label("001"), ghz_to_rad(-3.0), 0.0, 601)
            .unwrap();
        let analytic = rad_to_ghz(p.omega()[0] - p.omega_tc_max());
        assert!((rad_to_ghz(dw) - analytic).abs() < 0.02);
    }

    #[test]
    fn degenerate_grid_reports_nothing() {
        assert!(single_excitation_gap_minima(&device(), -1.0, 0.0, 1).unwrap().is_empty());
        assert_eq!(sweep_grid(-1.0, 0.0, 1), vec![-1.0]);
    }
}
