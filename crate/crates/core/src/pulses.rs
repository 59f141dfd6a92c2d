//! Sampled control waveforms and the transformations applied to them.
//!
//! Spectra use an unnormalized forward DFT; the inverse carries the `1/N`.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{PulseError, Result};
use crate::model::{ghz_to_rad, rad_to_ghz, SystemParams};

/// Tail values below this fraction of the tail amplitude are cut off.
pub const TAIL_CUT: f64 = 1e-6;

/// Coupler detuning `dw(t)` sampled every `dt` ns (rad/ns), held constant over
/// each sample interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    dt: f64,
    samples: Vec<f64>,
}

impl Waveform {
    pub fn new(dt: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(PulseError::Domain(format!("sample period {dt} must be positive")));
        }
        if samples.len() < 2 {
            return Err(PulseError::Domain("a waveform needs at least two samples".into()));
        }
        if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
            return Err(PulseError::Domain(format!("non-finite sample {x}")));
        }
        Ok(Self { dt, samples })
    }

    pub fn zeros(dt: f64, len: usize) -> Result<Self> {
        Self::new(dt, vec![0.0; len])
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Total duration `len * dt`.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    /// Start time of each sample interval.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| k as f64 * self.dt)
    }

    /// Linear interpolation between sample start times; constant past the ends.
    pub fn value_at(&self, t: f64) -> f64 {
        let x = t / self.dt;
        if x <= 0.0 {
            return self.samples[0];
        }
        let k = x.floor() as usize;
        if k + 1 >= self.samples.len() {
            return *self.samples.last().expect("non-empty");
        }
        let frac = x - k as f64;
        self.samples[k] + frac * (self.samples[k + 1] - self.samples[k])
    }

    /// Clamp into the physical range `[-w0 + floor, 0]`.
    pub fn clamped(&self, params: &SystemParams) -> Self {
        Self {
            dt: self.dt,
            samples: self.samples.iter().map(|&x| params.clamp_control(x)).collect(),
        }
    }

    /// `true` if every sample lies in `(-w0, 0]`.
    pub fn in_range(&self, params: &SystemParams) -> bool {
        let lo = -params.omega_tc_max();
        self.samples.iter().all(|&x| x <= 0.0 && x > lo)
    }

    /// Samples reversed in time.
    pub fn time_reversed(&self) -> Self {
        time_reverse(self)
    }

    /// Pointwise `a * self + b * other`; the shorter waveform is zero-padded.
    pub fn combine(&self, a: f64, other: &Waveform, b: f64) -> Result<Self> {
        if (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(PulseError::Domain("sample periods differ".into()));
        }
        let n = self.len().max(other.len());
        let get = |w: &Waveform, k: usize| w.samples.get(k).copied().unwrap_or(0.0);
        Self::new(self.dt, (0..n).map(|k| a * get(self, k) + b * get(other, k)).collect())
    }
}

/// One-sided spectrum of a real waveform.
#[derive(Clone, Debug)]
pub struct PulseSpectrum {
    /// Bin frequencies in GHz, `0 ..= 1/(2 dt)`.
    pub freqs: Vec<f64>,
    /// Raw DFT coefficients for the non-negative bins.
    pub amplitudes: Vec<C64>,
    /// Mean-square contribution of each bin; sums to the waveform's mean square.
    pub power: Vec<f64>,
    n_samples: usize,
    dt: f64,
}

impl PulseSpectrum {
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Frequency resolution `1/(N dt)` in GHz.
    pub fn bin_width(&self) -> f64 {
        1.0 / (self.n_samples as f64 * self.dt)
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Bin with the largest power, optionally ignoring the DC bin.
    pub fn dominant_bin(&self, skip_dc: bool) -> usize {
        let start = usize::from(skip_dc);
        (start..self.power.len())
            .max_by(|&a, &b| self.power[a].total_cmp(&self.power[b]))
            .unwrap_or(0)
    }

    /// Bin with the largest power at or above `f_ghz`; `None` when no bin
    /// qualifies.
    pub fn dominant_bin_above(&self, f_ghz: f64) -> Option<usize> {
        (0..self.power.len())
            .filter(|&k| self.freqs[k] >= f_ghz)
            .max_by(|&a, &b| self.power[a].total_cmp(&self.power[b]))
    }

    /// Largest power among bins strictly above `f_ghz`.
    pub fn max_power_above(&self, f_ghz: f64) -> f64 {
        self.freqs
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f > f_ghz)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max)
    }

    /// Rebuild the time-domain waveform.
    pub fn inverse(&self) -> Result<Waveform> {
        let n = self.n_samples;
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for (k, a) in self.amplitudes.iter().enumerate() {
            buf[k] = *a;
            if k > 0 && k < n - k {
                buf[n - k] = a.conj();
            }
        }
        plan(n, true).process(&mut buf);
        Waveform::new(self.dt, buf.iter().map(|z| z.re / n as f64).collect())
    }
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

fn forward(wf: &Waveform) -> Vec<C64> {
    let mut buf: Vec<C64> = wf.samples.iter().map(|&x| C64::new(x, 0.0)).collect();
    plan(buf.len(), false).process(&mut buf);
    buf
}

/// Frequency (GHz, non-negative) of DFT bin `k` out of `n`.
fn bin_freq(k: usize, n: usize, dt: f64) -> f64 {
    let m = k.min(n - k);
    m as f64 / (n as f64 * dt)
}

pub fn fourier_spectrum(wf: &Waveform) -> PulseSpectrum {
    let n = wf.len();
    let full = forward(wf);
    let half = n / 2;
    let norm = (n as f64).powi(2);
    let mut freqs = Vec::with_capacity(half + 1);
    let mut amplitudes = Vec::with_capacity(half + 1);
    let mut power = Vec::with_capacity(half + 1);
    for (k, z) in full.iter().enumerate().take(half + 1) {
        // negative-frequency partner folded in, except for DC and Nyquist
        let fold = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
        freqs.push(bin_freq(k, n, wf.dt));
        amplitudes.push(*z);
        power.push(fold * z.norm_sqr() / norm);
    }
    PulseSpectrum { freqs, amplitudes, power, n_samples: n, dt: wf.dt }
}

/// Brick-wall low-pass: zero every bin above `cutoff_ghz`. No clamping.
pub fn lowpass_filter_raw(wf: &Waveform, cutoff_ghz: f64) -> Result<Waveform> {
    if !(cutoff_ghz.is_finite() && cutoff_ghz > 0.0) {
        return Err(PulseError::Domain(format!("cutoff {cutoff_ghz} GHz must be positive")));
    }
    let n = wf.len();
    let mut buf = forward(wf);
    for (k, z) in buf.iter_mut().enumerate() {
        if bin_freq(k, n, wf.dt) > cutoff_ghz {
            *z = C64::new(0.0, 0.0);
        }
    }
    plan(n, true).process(&mut buf);
    Waveform::new(wf.dt, buf.iter().map(|z| z.re / n as f64).collect())
}

/// Low-pass filter followed by clamping into the physical control range.
pub fn lowpass_filter(wf: &Waveform, cutoff_ghz: f64, params: &SystemParams) -> Result<Waveform> {
    Ok(lowpass_filter_raw(wf, cutoff_ghz)?.clamped(params))
}

/// Replace everything after `tau` (ns) with the half-Gaussian
/// `a exp(-(t - tau)^2 / (2 sigma^2))`, `a = wf(tau)`. The tail ends once it
/// drops below [`TAIL_CUT`]` * |a|`; `tau` equal to the duration returns the
/// waveform unchanged.
pub fn truncate_with_gaussian_tail(wf: &Waveform, tau: f64, sigma: f64) -> Result<Waveform> {
    let duration = wf.duration();
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(PulseError::Domain(format!("tail width {sigma} must be positive")));
    }
    if !(tau.is_finite() && tau > 0.0 && tau <= duration) {
        return Err(PulseError::Domain(format!("tau {tau} outside (0, {duration}]")));
    }
    if tau == duration {
        return Ok(wf.clone());
    }
    let alpha = wf.value_at(tau);
    let dt = wf.dt;
    let first_tail = (tau / dt).ceil() as usize;
    let mut samples = wf.samples[..first_tail.min(wf.len())].to_vec();
    if alpha != 0.0 {
        let mut k = first_tail;
        loop {
            let x = (k as f64 * dt - tau) / sigma;
            let v = alpha * (-0.5 * x * x).exp();
            if v.abs() < TAIL_CUT * alpha.abs() {
                break;
            }
            samples.push(v);
            k += 1;
        }
    }
    if samples.len() < 2 {
        samples.resize(2, 0.0);
    }
    Waveform::new(dt, samples)
}

pub fn time_reverse(wf: &Waveform) -> Waveform {
    let mut samples = wf.samples.clone();
    samples.reverse();
    Waveform { dt: wf.dt, samples }
}

/// Parameters of the three-segment analytic pulse: a rising half-Gaussian, a
/// `tanh` step between two plateaus and a decaying half-Gaussian. Amplitudes
/// in rad/ns, times in ns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticPulseParams {
    pub alpha1: f64,
    pub alpha3: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
}

impl AnalyticPulseParams {
    pub fn to_vec(self) -> Vec<f64> {
        vec![
            self.alpha1, self.alpha3, self.tau1, self.tau2, self.tau3, self.sigma1, self.sigma2,
            self.sigma3,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            alpha1: x[0],
            alpha3: x[1],
            tau1: x[2],
            tau2: x[3],
            tau3: x[4],
            sigma1: x[5],
            sigma2: x[6],
            sigma3: x[7],
        }
    }

    /// Squared size of every invariant violation; zero for a valid set.
    pub fn violation(&self, params: &SystemParams) -> f64 {
        let w0 = params.omega_tc_max();
        let over = |x: f64| x.max(0.0).powi(2);
        over(self.tau1 - self.tau2)
            + over(self.tau2 - self.tau3)
            + over(self.alpha1)
            + over(self.alpha3)
            + over(-w0 - self.alpha1)
            + over(-w0 - self.alpha3)
            + over(-self.sigma1)
            + over(-self.sigma2)
            + over(-self.sigma3)
            + over(-self.tau1)
    }

    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        let w0 = params.omega_tc_max();
        let ok = self.tau1 <= self.tau2
            && self.tau2 <= self.tau3
            && self.tau1 >= 0.0
            && [self.alpha1, self.alpha3].iter().all(|&a| a < 0.0 && a > -w0)
            && [self.sigma1, self.sigma2, self.sigma3].iter().all(|&s| s > 0.0 && s.is_finite());
        if ok {
            Ok(())
        } else {
            Err(PulseError::Domain(format!("invalid analytic pulse parameters {self:?}")))
        }
    }

    /// Time at which the decaying tail falls below [`TAIL_CUT`] of `alpha3`.
    pub fn natural_duration(&self) -> f64 {
        self.tau3 + self.sigma3 * (2.0 * (1.0 / TAIL_CUT).ln()).sqrt()
    }

    /// Value of the pulse at time `t`.
    pub fn value(&self, t: f64) -> f64 {
        if t < self.tau1 {
            let x = (t - self.tau1) / self.sigma1;
            self.alpha1 * (-0.5 * x * x).exp()
        } else if t <= self.tau3 {
            0.5 * (self.alpha3 + self.alpha1)
                + 0.5 * (self.alpha3 - self.alpha1) * ((t - self.tau2) / self.sigma2).tanh()
        } else {
            let x = (t - self.tau3) / self.sigma3;
            self.alpha3 * (-0.5 * x * x).exp()
        }
    }

    /// Worst-case jump at `tau1` between the Gaussian and `tanh` branches.
    pub fn branch_mismatch_bound(&self) -> f64 {
        (self.alpha3 - self.alpha1).abs() * (1.0 - ((self.tau2 - self.tau1) / self.sigma2).tanh())
    }
}

/// JSON form of [`AnalyticPulseParams`]: amplitudes in GHz, times in ns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPulseFile {
    pub alpha1_ghz: f64,
    pub alpha3_ghz: f64,
    pub tau1_ns: f64,
    pub tau2_ns: f64,
    pub tau3_ns: f64,
    pub sigma1_ns: f64,
    pub sigma2_ns: f64,
    pub sigma3_ns: f64,
}

impl From<AnalyticPulseFile> for AnalyticPulseParams {
    fn from(f: AnalyticPulseFile) -> Self {
        Self {
            alpha1: ghz_to_rad(f.alpha1_ghz),
            alpha3: ghz_to_rad(f.alpha3_ghz),
            tau1: f.tau1_ns,
            tau2: f.tau2_ns,
            tau3: f.tau3_ns,
            sigma1: f.sigma1_ns,
            sigma2: f.sigma2_ns,
            sigma3: f.sigma3_ns,
        }
    }
}

impl From<AnalyticPulseParams> for AnalyticPulseFile {
    fn from(p: AnalyticPulseParams) -> Self {
        Self {
            alpha1_ghz: rad_to_ghz(p.alpha1),
            alpha3_ghz: rad_to_ghz(p.alpha3),
            tau1_ns: p.tau1,
            tau2_ns: p.tau2,
            tau3_ns: p.tau3,
            sigma1_ns: p.sigma1,
            sigma2_ns: p.sigma2,
            sigma3_ns: p.sigma3,
        }
    }
}

/// Sample the analytic pulse at `t_k = k dt` over `duration` ns.
pub fn analytic_pulse(
    p: &AnalyticPulseParams,
    params: &SystemParams,
    dt: f64,
    duration: f64,
) -> Result<Waveform> {
    p.validate(params)?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(PulseError::Domain(format!("duration {duration} must be positive")));
    }
    let n = ((duration / dt).round() as usize).max(2);
    Waveform::new(dt, (0..n).map(|k| p.value(k as f64 * dt)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn device() -> SystemParams {
        SystemParams::from_ghz(&[5.890, 5.031], &[0.100, 0.071], 7.445).unwrap()
    }

    fn sinusoid(f_ghz: f64, n: usize, dt: f64, offset: f64) -> Waveform {
        Waveform::new(dt, (0..n).map(|k| offset + (TAU * f_ghz * k as f64 * dt).sin()).collect())
            .unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn printed_params() -> AnalyticPulseParams {
        AnalyticPulseFile {
            alpha1_ghz: -2.457,
            alpha3_ghz: -1.591,
            tau1_ns: 5.8,
            tau2_ns: 8.3,
            tau3_ns: 10.0,
            sigma1_ns: 1.83,
            sigma2_ns: 0.2,
            sigma3_ns: 1.37,
        }
        .into()
    }

    #[test]
    fn waveform_validation() {
        assert!(Waveform::new(0.0, vec![0.0; 4]).is_err());
        assert!(Waveform::new(0.1, vec![0.0]).is_err());
        assert!(Waveform::new(0.1, vec![0.0, f64::NAN]).is_err());
        let w = Waveform::new(0.5, vec![0.0, -1.0, -2.0]).unwrap();
        assert_eq!(w.duration(), 1.5);
        assert_eq!(w.value_at(0.25), -0.5);
        assert_eq!(w.value_at(10.0), -2.0);
    }

    #[test]
    fn sinusoid_has_single_line() {
        let w = sinusoid(0.5, 1000, 0.01, 0.0);
        let s = fourier_spectrum(&w);
        let k = s.dominant_bin(false);
        assert!((s.freqs[k] - 0.5).abs() < 1e-12);
        for (i, p) in s.power.iter().enumerate() {
            if i != k {
                assert!(s.power[k] > 100.0 * p);
            }
        }
    }

    #[test]
    fn parseval_and_round_trip() {
        for n in [1000, 1001] {
            let w = Waveform::new(
                0.01,
                (0..n).map(|k| -3.0 * ((k as f64 * 0.037).sin() + 0.3 * (k as f64 * 0.91).cos())).collect(),
            )
            .unwrap();
            let s = fourier_spectrum(&w);
            let mean_sq = w.samples().iter().map(|x| x * x).sum::<f64>() / n as f64;
            assert!((s.total_power() - mean_sq).abs() <= 1e-9 * mean_sq);
            let back = s.inverse().unwrap();
            for (a, b) in back.samples().iter().zip(w.samples()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn filter_above_nyquist_is_identity() {
        let w = sinusoid(3.0, 512, 0.01, -2.0);
        let out = lowpass_filter_raw(&w, 50.0).unwrap();
        for (a, b) in out.samples().iter().zip(w.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(lowpass_filter_raw(&w, 0.0).is_err());
    }

    #[test]
    fn filter_removes_line_above_cutoff() {
        let w = sinusoid(0.6, 5000, 0.01, 0.0);
        let out = lowpass_filter_raw(&w, 0.4).unwrap();
        assert!(rms(out.samples()) < 1e-6 * rms(w.samples()));
    }

    #[test]
    fn filter_clamps_into_range() {
        let p = device();
        let w = sinusoid(0.1, 3000, 0.01, -0.5);
        let out = lowpass_filter(&w, 0.4, &p).unwrap();
        assert!(out.in_range(&p));
        assert_eq!(out.len(), w.len());
        assert_eq!(out.dt(), w.dt());
    }

    proptest! {
        #[test]
        fn filter_is_idempotent_and_linear(
            a in prop::collection::vec(-10.0f64..0.0, 64..256),
            ca in -2.0f64..2.0,
            cb in -2.0f64..2.0,
            cutoff in 0.5f64..20.0,
        ) {
            let w1 = Waveform::new(0.01, a.clone()).unwrap();
            let w2 = Waveform::new(0.01, a.iter().rev().map(|x| x * 0.5 - 1.0).collect()).unwrap();
            let once = lowpass_filter_raw(&w1, cutoff).unwrap();
            let twice = lowpass_filter_raw(&once, cutoff).unwrap();
            for (x, y) in once.samples().iter().zip(twice.samples()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let lhs = lowpass_filter_raw(&w1.combine(ca, &w2, cb).unwrap(), cutoff).unwrap();
            let f2 = lowpass_filter_raw(&w2, cutoff).unwrap();
            let rhs = once.combine(ca, &f2, cb).unwrap();
            for (x, y) in lhs.samples().iter().zip(rhs.samples()) {
                prop_assert!((x - y).abs() < 1e-11);
            }
        }

        #[test]
        fn reverse_is_an_involution(a in prop::collection::vec(-10.0f64..0.0, 2..100)) {
            let w = Waveform::new(0.01, a).unwrap();
            prop_assert_eq!(time_reverse(&time_reverse(&w)), w);
        }
    }

    #[test]
    fn symmetric_pulse_is_reversal_fixed_point() {
        let w = Waveform::new(0.1, vec![0.0, -1.0, -2.0, -1.0, 0.0]).unwrap();
        assert_eq!(time_reverse(&w), w);
    }

    #[test]
    fn truncation_is_continuous_and_cut() {
        let w = Waveform::new(0.01, vec![-3.0; 2000]).unwrap();
        let out = truncate_with_gaussian_tail(&w, 5.0, 1.0).unwrap();
        assert!((out.value_at(5.0) + 3.0).abs() < 1e-12);
        assert_eq!(out.samples()[500], -3.0);
        let expected_end = 5.0 + (2.0 * 1e6f64.ln()).sqrt();
        assert!((out.duration() - expected_end).abs() < 0.02);
        let last = *out.samples().last().unwrap();
        assert!(last.abs() >= 1e-6 * 3.0 && last.abs() < 1.1e-6 * 3.0);

        let sharp = truncate_with_gaussian_tail(&w, 5.0, 1e-6).unwrap();
        assert!((sharp.duration() - 5.01).abs() < 1e-9);
        assert_eq!(truncate_with_gaussian_tail(&w, 20.0, 1.0).unwrap(), w);
        assert!(truncate_with_gaussian_tail(&w, 25.0, 1.0).is_err());
        assert!(truncate_with_gaussian_tail(&w, 0.0, 1.0).is_err());
        assert!(truncate_with_gaussian_tail(&w, 5.0, 0.0).is_err());
    }

    #[test]
    fn analytic_branch_values() {
        let p = printed_params();
        assert!((p.value(p.tau2) - 0.5 * (p.alpha1 + p.alpha3)).abs() < 1e-12);
        assert!((p.value(p.tau1 - 1e-12) - p.alpha1).abs() < 1e-9);
        assert!((p.value(p.tau3 + 1e-12) - p.alpha3).abs() < 1e-9);
        let tanh_at_tau1 = 0.5 * (p.alpha3 + p.alpha1)
            + 0.5 * (p.alpha3 - p.alpha1) * ((p.tau1 - p.tau2) / p.sigma2).tanh();
        assert!((tanh_at_tau1 - p.alpha1).abs() <= p.branch_mismatch_bound());
        assert!(p.branch_mismatch_bound() < 1e-5 * p.alpha1.abs());
    }

    #[test]
    fn analytic_pulse_shape() {
        let params = device();
        let p = printed_params();
        let w = analytic_pulse(&p, &params, 0.01, p.natural_duration()).unwrap();
        assert!(w.duration() < 20.0 && w.duration() > 14.0);
        assert!((rad_to_ghz(w.value_at(7.0)) + 2.457).abs() < 0.01);
        assert!((rad_to_ghz(w.value_at(9.5)) + 1.591).abs() < 0.01);
        assert!(w.in_range(&params));

        let mut bad = p;
        bad.tau2 = 11.0;
        assert!(analytic_pulse(&bad, &params, 0.01, 20.0).is_err());
        assert!(bad.violation(&params) > 0.0);
        assert_eq!(p.violation(&params), 0.0);
    }
}
