//! MIMO ambiguity function.
//!
//! `chi(tau, nu, f, f') = sum_m sum_m' chi_mm'(tau, nu) exp(i 2 pi (f m - f' m') g)`
//! with the cross-ambiguity `chi_mm'(tau, nu) = int x_m(t) conj(x_m'(t + tau)) exp(i 2 pi nu t) dt`
//! and `g` the element-spacing factor (1 by default).
//!
//! Two evaluators:
//!
//! * numerical: a Riemann sum over the sampled frame, delay snapped to the
//!   sample grid;
//! * closed form: an exact sum over chip pairs. For chip `(l, q, m)` at
//!   frequency `F` and chip `(l', q', m')` at `F'`, with
//!   `D = (q' - q) dt + t_l' - t_l - tau`,
//!
//!   ```text
//!   a1 = max(D, 0)                b1 = min(D + dt, dt)
//!   a2 = i 2 pi (F - F' + nu)
//!   b2 = i 2 pi (F q dt + nu (q dt + t_l) - F' (q dt + t_l - t_l' + tau))
//!   term = A conj(A') e^{b2} (e^{a2 b1} - e^{a2 a1}) / a2
//!   ```
//!
//!   where `A = a e^{i Omega}` and `t_l = l T_p + T_l`. Pairs with `b1 <= a1`
//!   do not overlap; `|a2| dt < 1e-9` uses the limit `e^{b2} (b1 - a1)`.

use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::PulsePlan;
use crate::error::{Error, Result};
use crate::keyschedule::{generate_schedule, AgilitySchedule, SecretKey};
use crate::params::ValidatedConfig;
use crate::waveform::BasebandFrame;

/// Below this `|a2| * dt` the chip-pair integral switches to its limit.
pub const LIMIT_BRANCH_EPS: f64 = 1e-9;
/// Largest number of elementary evaluations one grid job may request.
pub const WORK_LIMIT: f64 = 2e10;

fn cis_cycles(cycles: f64) -> Complex64 {
    Complex64::cis(std::f64::consts::TAU * (cycles - cycles.round()))
}

/// Numerical cross-AF value with the delay actually used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAf {
    pub value: Complex64,
    /// `tau - k / fs` for the integer lag `k` that was used.
    pub delay_residual_s: f64,
}

fn lag_for(tau: f64, fs: f64, len: usize) -> Result<(isize, f64)> {
    let k = (tau * fs).round();
    if !k.is_finite() || k.abs() >= len as f64 {
        return Err(Error::DelayOutOfRange { delay_s: tau });
    }
    Ok((k as isize, tau - k / fs))
}

/// Riemann sum `sum_n x[n] conj(y[n + k]) exp(i 2 pi nu t_n) / fs` over two
/// equally sampled sequences starting at `t0`.
pub fn sampled_cross_af(x: &[Complex64], y: &[Complex64], fs: f64, t0: f64, tau: f64, nu: f64) -> Result<SampledAf> {
    let len = x.len().min(y.len());
    let (k, residual) = lag_for(tau, fs, len.max(1))?;
    let lo = (-k).max(0) as usize;
    let hi = (len as isize - k.max(0)).max(0) as usize;
    let mut acc = Complex64::new(0.0, 0.0);
    for n in lo..hi {
        let a = x[n];
        if a.re == 0.0 && a.im == 0.0 {
            continue;
        }
        let b = y[(n as isize + k) as usize];
        acc += a * b.conj() * cis_cycles(nu * (t0 + n as f64 / fs));
    }
    Ok(SampledAf {
        value: acc / fs,
        delay_residual_s: residual,
    })
}

/// Cross-AF between row `m` of `x` and row `m2` of `y`.
pub fn cross_af_numerical(x: &BasebandFrame, m: usize, y: &BasebandFrame, m2: usize, tau: f64, nu: f64) -> Result<SampledAf> {
    if x.sample_rate_hz != y.sample_rate_hz || x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} samples at {} Hz", x.len(), x.sample_rate_hz),
            got: format!("{} samples at {} Hz", y.len(), y.sample_rate_hz),
        });
    }
    let a: Vec<Complex64> = x.samples.row(m).iter().copied().collect();
    let b: Vec<Complex64> = y.samples.row(m2).iter().copied().collect();
    sampled_cross_af(&a, &b, x.sample_rate_hz, x.start_time_s, tau, nu)
}

/// Direct double sum of cross-AFs with steering phases.
pub fn mimo_af(frame: &BasebandFrame, tau: f64, nu: f64, f: f64, f2: f64, spacing: f64) -> Result<Complex64> {
    let m = frame.num_antennas();
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..m {
        for b in 0..m {
            let chi = cross_af_numerical(frame, a, frame, b, tau, nu)?.value;
            acc += chi * cis_cycles((f * a as f64 - f2 * b as f64) * spacing);
        }
    }
    Ok(acc)
}

/// `sum_m exp(i 2 pi f m g) x_m[n]`: the array output steered to spatial
/// frequency `f`. The MIMO AF is the cross-AF of the two steered sums.
pub fn steer(frame: &BasebandFrame, f: f64, spacing: f64) -> Vec<Complex64> {
    let w: Vec<Complex64> = (0..frame.num_antennas())
        .map(|m| cis_cycles(f * m as f64 * spacing))
        .collect();
    frame
        .samples
        .column_iter()
        .map(|col| col.iter().zip(&w).map(|(x, w)| x * w).sum())
        .collect()
}

/// One chip-pair term of the closed form, without amplitudes and steering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChipPair {
    /// `t_l = l T_p + T_l` of the first chip's pulse.
    pub pulse_start_s: f64,
    /// `q dt`.
    pub chip_offset_s: f64,
    pub freq_hz: f64,
    pub pulse_start2_s: f64,
    pub chip_offset2_s: f64,
    pub freq2_hz: f64,
}

/// Auxiliary quantities of one chip pair, for term-by-term inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerms {
    pub alpha1: f64,
    pub beta1: f64,
    /// `a2 / (i 2 pi)`, in hertz.
    pub alpha2_hz: f64,
    /// `b2 / (i 2 pi)`, in cycles.
    pub beta2_cycles: f64,
}

impl ChipPair {
    pub fn terms(&self, tau: f64, nu: f64, dt: f64) -> PairTerms {
        let d = (self.chip_offset2_s + self.pulse_start2_s) - (self.chip_offset_s + self.pulse_start_s) - tau;
        let qdt = self.chip_offset_s;
        let tl = self.pulse_start_s;
        PairTerms {
            alpha1: d.max(0.0),
            beta1: (d + dt).min(dt),
            alpha2_hz: self.freq_hz - self.freq2_hz + nu,
            beta2_cycles: self.freq_hz * qdt + nu * (qdt + tl) - self.freq2_hz * (qdt + tl - self.pulse_start2_s + tau),
        }
    }

    /// `int x(t) conj(y(t + tau)) exp(i 2 pi nu t) dt` over the overlap of
    /// the two unit-amplitude chips.
    pub fn integral(&self, tau: f64, nu: f64, dt: f64) -> Complex64 {
        let t = self.terms(tau, nu, dt);
        if t.beta1 <= t.alpha1 {
            return Complex64::new(0.0, 0.0);
        }
        let e_b2 = cis_cycles(t.beta2_cycles);
        let omega = std::f64::consts::TAU * t.alpha2_hz;
        if omega.abs() * dt < LIMIT_BRANCH_EPS {
            return e_b2 * (t.beta1 - t.alpha1);
        }
        let a2 = Complex64::new(0.0, omega);
        let upper = cis_cycles(t.alpha2_hz * t.beta1);
        let lower = cis_cycles(t.alpha2_hz * t.alpha1);
        e_b2 * (upper - lower) / a2
    }
}

#[derive(Debug, Clone)]
struct ChipSlot {
    start_s: f64,
    pulse_start_s: f64,
    chip_offset_s: f64,
    /// Per antenna: (frequency, a e^{i Omega}).
    tones: Vec<(f64, Complex64)>,
}

fn chip_slots(plans: &[PulsePlan], schedule: &AgilitySchedule, config: &ValidatedConfig) -> Result<Vec<ChipSlot>> {
    if plans.len() != schedule.len() {
        return Err(Error::PlanLengthMismatch {
            expected: schedule.len(),
            got: plans.len(),
        });
    }
    let dt = config.chip_duration_s();
    let df = config.hop_spacing_hz();
    let mut slots = Vec::with_capacity(plans.len() * config.chips_per_pulse());
    for (l, plan) in plans.iter().enumerate() {
        let tl = schedule.pulse_start_s(config, l);
        for (q, chip) in plan.chips.iter().enumerate() {
            let tones = chip
                .hop_codes
                .iter()
                .zip(chip.amplitudes.iter().zip(&chip.phases))
                .map(|(&c, (&a, &p))| (schedule.f_offsets_hz[l] + c as f64 * df, Complex64::from_polar(a, p)))
                .collect();
            slots.push(ChipSlot {
                start_s: tl + q as f64 * dt,
                pulse_start_s: tl,
                chip_offset_s: q as f64 * dt,
                tones,
            });
        }
    }
    slots.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    Ok(slots)
}

/// Closed-form evaluator prepared for many grid points.
#[derive(Debug, Clone)]
pub struct ClosedFormAf {
    slots: Vec<ChipSlot>,
    starts: Vec<f64>,
    dt: f64,
}

impl ClosedFormAf {
    pub fn new(plans: &[PulsePlan], schedule: &AgilitySchedule, config: &ValidatedConfig) -> Result<Self> {
        let slots = chip_slots(plans, schedule, config)?;
        let starts = slots.iter().map(|s| s.start_s).collect();
        Ok(Self {
            slots,
            starts,
            dt: config.chip_duration_s(),
        })
    }

    fn num_antennas(&self) -> usize {
        self.slots.first().map_or(0, |s| s.tones.len())
    }

    /// Chip pairs that overlap at delay `tau`: `|s' - s - tau| < dt`.
    fn overlapping(&self, tau: f64) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.slots.len()).flat_map(move |i| {
            let s = self.starts[i] + tau;
            let lo = self.starts.partition_point(|&x| x <= s - self.dt);
            let hi = self.starts.partition_point(|&x| x < s + self.dt);
            (lo..hi).map(move |j| (i, j))
        })
    }

    pub fn pair(&self, i: usize, m: usize, j: usize, m2: usize) -> (ChipPair, Complex64) {
        let (a, b) = (&self.slots[i], &self.slots[j]);
        let pair = ChipPair {
            pulse_start_s: a.pulse_start_s,
            chip_offset_s: a.chip_offset_s,
            freq_hz: a.tones[m].0,
            pulse_start2_s: b.pulse_start_s,
            chip_offset2_s: b.chip_offset_s,
            freq2_hz: b.tones[m2].0,
        };
        (pair, a.tones[m].1 * b.tones[m2].1.conj())
    }

    /// Every non-zero chip-pair contribution `(slot, m, slot', m', value)`,
    /// steering included.
    pub fn terms(&self, tau: f64, nu: f64, f: f64, f2: f64, spacing: f64) -> Vec<(usize, usize, usize, usize, Complex64)> {
        let m_tx = self.num_antennas();
        let steer_a: Vec<Complex64> = (0..m_tx).map(|m| cis_cycles(f * m as f64 * spacing)).collect();
        let steer_b: Vec<Complex64> = (0..m_tx).map(|m| cis_cycles(-f2 * m as f64 * spacing)).collect();
        let mut out = Vec::new();
        for (i, j) in self.overlapping(tau) {
            for m in 0..m_tx {
                for m2 in 0..m_tx {
                    let (pair, amp) = self.pair(i, m, j, m2);
                    let v = pair.integral(tau, nu, self.dt);
                    if v.norm_sqr() > 0.0 {
                        out.push((i, m, j, m2, amp * steer_a[m] * steer_b[m2] * v));
                    }
                }
            }
        }
        out
    }

    /// Same sum as [`ClosedFormAf::terms`], with the exponentials of each
    /// slot pair split into per-antenna factors:
    /// `e^{b2} e^{a2 x} = e^{i2pi nu (q dt + t_l + x)} . e^{i2pi F (q dt + x)} . e^{-i2pi F' (X + x)}`
    /// with `X = q dt + t_l - t_l' + tau`.
    pub fn evaluate(&self, tau: f64, nu: f64, f: f64, f2: f64, spacing: f64) -> Complex64 {
        let m_tx = self.num_antennas();
        let steer_a: Vec<Complex64> = (0..m_tx).map(|m| cis_cycles(f * m as f64 * spacing)).collect();
        let steer_b: Vec<Complex64> = (0..m_tx).map(|m| cis_cycles(-f2 * m as f64 * spacing)).collect();
        let dt = self.dt;
        let zero = Complex64::new(0.0, 0.0);
        let (mut xa, mut xb) = (vec![zero; m_tx], vec![zero; m_tx]);
        let (mut ya, mut yb) = (vec![zero; m_tx], vec![zero; m_tx]);
        let mut acc = zero;
        for (i, j) in self.overlapping(tau) {
            let (a, b) = (&self.slots[i], &self.slots[j]);
            let d = b.start_s - a.start_s - tau;
            let (lo, hi) = (d.max(0.0), (d + dt).min(dt));
            if hi <= lo {
                continue;
            }
            let qdt = a.chip_offset_s;
            let x = qdt + a.pulse_start_s - b.pulse_start_s + tau;
            for m in 0..m_tx {
                let (fa, sa) = a.tones[m];
                let base = sa * steer_a[m];
                xa[m] = base * cis_cycles(fa * (qdt + lo));
                xb[m] = base * cis_cycles(fa * (qdt + hi));
                let (fb, sb) = b.tones[m];
                let base = sb.conj() * steer_b[m];
                ya[m] = base * cis_cycles(-fb * (x + lo));
                yb[m] = base * cis_cycles(-fb * (x + hi));
            }
            let common = cis_cycles(nu * (qdt + a.pulse_start_s));
            let (nu_lo, nu_hi) = (cis_cycles(nu * lo), cis_cycles(nu * hi));
            let mut pair_sum = zero;
            for m in 0..m_tx {
                for m2 in 0..m_tx {
                    let hz = a.tones[m].0 - b.tones[m2].0 + nu;
                    let omega = std::f64::consts::TAU * hz;
                    if omega.abs() * dt < LIMIT_BRANCH_EPS {
                        // e^{b2} alone: the factors at x = 0.
                        let e_b2 = a.tones[m].1 * steer_a[m] * cis_cycles(a.tones[m].0 * qdt) * b.tones[m2].1.conj() * steer_b[m2] * cis_cycles(-b.tones[m2].0 * x);
                        pair_sum += e_b2 * (hi - lo);
                    } else {
                        let upper = xb[m] * yb[m2] * nu_hi;
                        let lower = xa[m] * ya[m2] * nu_lo;
                        pair_sum += (upper - lower) / Complex64::new(0.0, omega);
                    }
                }
            }
            acc += common * pair_sum;
        }
        acc
    }

    fn work_per_point(&self) -> f64 {
        let m = self.num_antennas() as f64;
        3.0 * self.slots.len() as f64 * m * m
    }
}

pub fn closed_form_af(plans: &[PulsePlan], schedule: &AgilitySchedule, tau: f64, nu: f64, f: f64, f2: f64, spacing: f64, config: &ValidatedConfig) -> Result<Complex64> {
    Ok(ClosedFormAf::new(plans, schedule, config)?.evaluate(tau, nu, f, f2, spacing))
}

/// Numerical evaluator prepared for many grid points: both steered sums,
/// with the non-zero samples of the first indexed.
#[derive(Debug, Clone)]
pub struct SteeredAf {
    active: Vec<(usize, Complex64)>,
    y: Vec<Complex64>,
    fs: f64,
    t0: f64,
}

impl SteeredAf {
    pub fn new(frame: &BasebandFrame, f: f64, f2: f64, spacing: f64) -> Self {
        let x = steer(frame, f, spacing);
        let y = steer(frame, f2, spacing);
        let active = x.into_iter().enumerate().filter(|(_, z)| z.norm_sqr() > 0.0).collect();
        Self {
            active,
            y,
            fs: frame.sample_rate_hz,
            t0: frame.start_time_s,
        }
    }

    /// Products `x[n] conj(y[n + k])` that are non-zero at delay `tau`.
    fn products(&self, tau: f64) -> Result<Vec<(usize, Complex64)>> {
        let (k, _) = lag_for(tau, self.fs, self.y.len())?;
        Ok(self
            .active
            .iter()
            .filter_map(|&(n, x)| {
                let idx = n as isize + k;
                if idx < 0 || idx as usize >= self.y.len() {
                    return None;
                }
                let p = x * self.y[idx as usize].conj();
                (p.norm_sqr() > 0.0).then_some((n, p))
            })
            .collect())
    }

    fn doppler_sum(&self, products: &[(usize, Complex64)], nu: f64) -> Complex64 {
        products
            .iter()
            .map(|&(n, p)| p * cis_cycles(nu * (self.t0 + n as f64 / self.fs)))
            .sum::<Complex64>()
            / self.fs
    }

    pub fn evaluate(&self, tau: f64, nu: f64) -> Result<Complex64> {
        Ok(self.doppler_sum(&self.products(tau)?, nu))
    }

    fn work_per_point(&self) -> f64 {
        self.active.len() as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    None,
    Peak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AfMethod {
    Numerical,
    ClosedForm,
}

/// What to evaluate: a sampled frame or the plans and schedule behind it.
#[derive(Debug, Clone, Copy)]
pub enum AfSource<'a> {
    Numerical(&'a BasebandFrame),
    ClosedForm {
        plans: &'a [PulsePlan],
        schedule: &'a AgilitySchedule,
    },
}

/// Spatial frequencies `(f, f')` and element spacing factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Steering {
    pub f: f64,
    pub f2: f64,
    pub spacing: f64,
}

impl Default for Steering {
    fn default() -> Self {
        Self {
            f: 0.0,
            f2: 0.0,
            spacing: 1.0,
        }
    }
}

/// `|chi|` over a delay x Doppler grid, rows = delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfGrid {
    pub delays_s: Vec<f64>,
    pub dopplers_hz: Vec<f64>,
    pub spatial_freqs: (f64, f64),
    pub magnitudes: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Complex64>>,
    pub normalization: Normalization,
}

impl AfGrid {
    pub fn shape(&self) -> (usize, usize) {
        (self.delays_s.len(), self.dopplers_hz.len())
    }

    pub fn magnitude(&self, i: usize, j: usize) -> f64 {
        self.magnitudes[i * self.dopplers_hz.len() + j]
    }

    /// `(delay index, doppler index, value)` of the largest magnitude.
    pub fn peak(&self) -> (usize, usize, f64) {
        let (idx, v) = self
            .magnitudes
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        let cols = self.dopplers_hz.len();
        (idx / cols, idx % cols, v)
    }

    pub fn peak_normalized(&self) -> Self {
        let (_, _, p) = self.peak();
        let scale = if p > 0.0 { 1.0 / p } else { 1.0 };
        Self {
            magnitudes: self.magnitudes.iter().map(|v| v * scale).collect(),
            values: self.values.as_ref().map(|v| v.iter().map(|z| z * scale).collect()),
            normalization: Normalization::Peak,
            ..self.clone()
        }
    }

    /// Row of the grid at zero Doppler.
    pub fn zero_doppler_cut(&self) -> Option<Vec<f64>> {
        let j = self.dopplers_hz.iter().position(|&v| v == 0.0)?;
        Some((0..self.delays_s.len()).map(|i| self.magnitude(i, j)).collect())
    }

    /// Column of the grid at zero delay.
    pub fn zero_delay_cut(&self) -> Option<Vec<f64>> {
        let i = self.delays_s.iter().position(|&v| v == 0.0)?;
        Some((0..self.dopplers_hz.len()).map(|j| self.magnitude(i, j)).collect())
    }

    /// Long format `tau_s,doppler_hz,magnitude` (plus `re,im` when complex
    /// values are kept).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        match &self.values {
            Some(_) => writeln!(w, "tau_s,doppler_hz,magnitude,re,im")?,
            None => writeln!(w, "tau_s,doppler_hz,magnitude")?,
        }
        for (i, tau) in self.delays_s.iter().enumerate() {
            for (j, nu) in self.dopplers_hz.iter().enumerate() {
                let k = i * self.dopplers_hz.len() + j;
                match &self.values {
                    Some(v) => writeln!(w, "{tau:e},{nu:e},{:e},{:e},{:e}", self.magnitudes[k], v[k].re, v[k].im)?,
                    None => writeln!(w, "{tau:e},{nu:e},{:e}", self.magnitudes[k])?,
                }
            }
        }
        Ok(())
    }

    /// Axis and normalization metadata, without the data.
    pub fn metadata(&self) -> serde_json::Value {
        let (tmin, tmax) = bounds(&self.delays_s);
        let (dmin, dmax) = bounds(&self.dopplers_hz);
        let (_, _, peak) = self.peak();
        serde_json::json!({
            "rows": self.delays_s.len(),
            "cols": self.dopplers_hz.len(),
            "tau_s": [tmin, tmax],
            "doppler_hz": [dmin, dmax],
            "spatial_freqs": [self.spatial_freqs.0, self.spatial_freqs.1],
            "normalization": self.normalization,
            "peak": peak,
        })
    }
}

fn bounds(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() || axis.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(format!("{name} axis must be non-empty and strictly increasing")));
    }
    Ok(())
}

/// Evenly spaced axis of `n` points on `[lo, hi]`; exact zero is kept when
/// the axis is symmetric with an odd count.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let v = lo + i as f64 * step;
            if (lo + hi == 0.0) && 2 * i + 1 == n {
                0.0
            } else {
                v
            }
        })
        .collect()
}

pub fn af_grid(source: AfSource<'_>, delays_s: &[f64], dopplers_hz: &[f64], steering: Steering, config: &ValidatedConfig, keep_complex: bool) -> Result<AfGrid> {
    check_axis("delay", delays_s)?;
    check_axis("doppler", dopplers_hz)?;
    let points = (delays_s.len() * dopplers_hz.len()) as f64;
    let values: Vec<Complex64> = match source {
        AfSource::Numerical(frame) => {
            let eval = SteeredAf::new(frame, steering.f, steering.f2, steering.spacing);
            guard(points * eval.work_per_point())?;
            let rows: Vec<Vec<Complex64>> = delays_s
                .par_iter()
                .map(|&tau| {
                    let p = eval.products(tau)?;
                    Ok(dopplers_hz.iter().map(|&nu| eval.doppler_sum(&p, nu)).collect())
                })
                .collect::<Result<_>>()?;
            rows.concat()
        }
        AfSource::ClosedForm { plans, schedule } => {
            let eval = ClosedFormAf::new(plans, schedule, config)?;
            guard(points * eval.work_per_point())?;
            let rows: Vec<Vec<Complex64>> = delays_s
                .par_iter()
                .map(|&tau| {
                    dopplers_hz
                        .iter()
                        .map(|&nu| eval.evaluate(tau, nu, steering.f, steering.f2, steering.spacing))
                        .collect()
                })
                .collect();
            rows.concat()
        }
    };
    Ok(AfGrid {
        delays_s: delays_s.to_vec(),
        dopplers_hz: dopplers_hz.to_vec(),
        spatial_freqs: (steering.f, steering.f2),
        magnitudes: values.iter().map(|z| z.norm()).collect(),
        values: keep_complex.then_some(values),
        normalization: Normalization::None,
    })
}

fn guard(work: f64) -> Result<()> {
    if work > WORK_LIMIT {
        return Err(Error::GridTooLarge { work, limit: WORK_LIMIT });
    }
    Ok(())
}

/// `|chi(tau, 0)|` over `delays_s`.
pub fn zero_doppler_cut(source: AfSource<'_>, delays_s: &[f64], steering: Steering, config: &ValidatedConfig) -> Result<AfGrid> {
    af_grid(source, delays_s, &[0.0], steering, config, false)
}

/// `|chi(0, nu)|` over `dopplers_hz`.
pub fn zero_delay_cut(source: AfSource<'_>, dopplers_hz: &[f64], steering: Steering, config: &ValidatedConfig) -> Result<AfGrid> {
    af_grid(source, &[0.0], dopplers_hz, steering, config, false)
}

/// Key for expectation draw `r`: deterministic in `(seed, r)`.
pub fn draw_key(seed: u64, r: u64) -> SecretKey {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    SecretKey::random(&mut rng)
}

/// Mean of `|chi|` over `draws` independently keyed schedules, plans fixed.
pub fn af_expectation(
    draws: usize,
    plans: &[PulsePlan],
    config: &ValidatedConfig,
    delays_s: &[f64],
    dopplers_hz: &[f64],
    steering: Steering,
    method: AfMethod,
    seed: u64,
) -> Result<AfGrid> {
    if draws == 0 {
        return Err(Error::InvalidArgument("expectation needs at least one draw".into()));
    }
    let mut sum: Option<AfGrid> = None;
    for r in 0..draws {
        let schedule = generate_schedule(&draw_key(seed, r as u64), config, 0);
        let grid = match method {
            AfMethod::ClosedForm => af_grid(AfSource::ClosedForm { plans, schedule: &schedule }, delays_s, dopplers_hz, steering, config, false)?,
            AfMethod::Numerical => {
                let frame = crate::waveform::synthesize(plans, &schedule, config)?;
                af_grid(AfSource::Numerical(&frame), delays_s, dopplers_hz, steering, config, false)?
            }
        };
        sum = Some(match sum {
            None => grid,
            Some(mut acc) => {
                acc.magnitudes.iter_mut().zip(&grid.magnitudes).for_each(|(a, b)| *a += b);
                acc
            }
        });
    }
    let mut grid = sum.expect("at least one draw");
    grid.magnitudes.iter_mut().for_each(|v| *v /= draws as f64);
    Ok(grid)
}
