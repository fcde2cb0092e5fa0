//! Sparse matched-filter receiver.
//!
//! Per pulse: equalize the PRI-aligned window with the channel
//! pseudo-inverse, then per chip and antenna pick the strongest bin of a
//! chip-length DFT (the signal is exactly one tone per chip and antenna, so
//! a single greedy atom is the whole pursuit), map it to a hop index, and
//! correlate against the detected reference to read amplitude and phase.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::codec::{ChipEstimate, Codec, PulseEstimate, Scheme};
use crate::combinatorics::{binomial, colex_unrank, factorial, lehmer_unrank};
use crate::error::{Error, Result};
use crate::keyschedule::{adversary_guess_schedule, AgilitySchedule};
use crate::params::ValidatedConfig;
use crate::waveform::{roots_of_unity, BasebandFrame};

/// Channels with a larger 2-norm condition number are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e8;
/// Largest hypothesis count the exhaustive detector will enumerate.
pub const ML_HYPOTHESIS_LIMIT: u128 = 1_000_000;
/// Hop-to-bin rounding residual above which a detection is flagged.
pub const BIN_RESIDUAL_LIMIT: f64 = 0.01;

/// How the matched filter combines the equalized antenna streams.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchedFilterMode {
    /// `gamma_m = (1/n_c) sum_n xhat_m[n] conj(h_m[n])`.
    #[default]
    PerAntenna,
    /// `gamma_m = (1/n_c) sum_n (sum_m' xhat_m'[n]) conj(h_m[n])`. Noise from
    /// every antenna lands in every estimate.
    AntennaSum,
}

/// Which DFT bins the hop detector may pick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HopSearch {
    /// All `n_c` bins, each antenna on its own; out-of-range picks are
    /// clamped and flagged.
    FullDft,
    /// Only the K bins of the assumed hop band.
    HopBand,
    /// The K bins of the assumed band, jointly assigned so that the M
    /// antennas take distinct hops maximizing the total correlation energy.
    /// Same objective as [`exhaustive_ml_detect`].
    #[default]
    JointBand,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReceiverOptions {
    pub matched_filter: MatchedFilterMode,
    pub hop_search: HopSearch,
}

/// Left pseudo-inverse through the SVD. Fails when `H` has fewer rows than
/// columns or its condition number exceeds [`CONDITION_LIMIT`].
pub fn pseudo_inverse(h: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if h.nrows() < h.ncols() {
        return Err(Error::DimensionMismatch {
            expected: format!("at least {} rows", h.ncols()),
            got: format!("{}", h.nrows()),
        });
    }
    let svd = h.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = smax / smin;
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::RankDeficientChannel { condition });
    }
    svd.pseudo_inverse(0.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// `xhat = H^+ r` column by column.
pub fn equalize(window: &DMatrix<Complex64>, h: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if window.nrows() != h.nrows() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} receive rows", h.nrows()),
            got: format!("{}", window.nrows()),
        });
    }
    Ok(pseudo_inverse(h)? * window)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopDecision {
    pub bin: usize,
    pub hop: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChipDetection {
    pub hop_estimates: Vec<usize>,
    pub peak_bins: Vec<usize>,
    pub mf_outputs: Vec<Complex64>,
    pub amp_estimates: Vec<f64>,
    pub phase_estimates: Vec<f64>,
    pub flags: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseReception {
    pub estimate: PulseEstimate,
    pub detections: Vec<ChipDetection>,
    pub erased: bool,
}

/// Receiver state for one configuration and scheme. Holds the FFT plan;
/// cheap to share between threads.
#[derive(Clone)]
pub struct SparseReceiver {
    config: ValidatedConfig,
    scheme: Scheme,
    options: ReceiverOptions,
    fft: Arc<dyn Fft<f64>>,
    roots: Vec<Complex64>,
}

impl fmt::Debug for SparseReceiver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SparseReceiver")
            .field("scheme", &self.scheme)
            .field("options", &self.options)
            .finish_non_exhaustive()
    }
}

impl SparseReceiver {
    pub fn new(config: &ValidatedConfig, scheme: Scheme, options: ReceiverOptions) -> Self {
        let n_c = config.samples_per_chip();
        Self {
            config: config.clone(),
            scheme,
            options,
            fft: FftPlanner::new().plan_fft_forward(n_c),
            roots: roots_of_unity(n_c),
        }
    }

    pub fn options(&self) -> ReceiverOptions {
        self.options
    }

    /// Hop detection on an equalized chip (`M x n_c`), assuming base
    /// frequency `f_l_hz`.
    pub fn detect_hops(&self, chip: &DMatrix<Complex64>, f_l_hz: f64) -> Vec<HopDecision> {
        let cfg = &self.config;
        let n_c = cfg.samples_per_chip();
        let k = cfg.num_hops();
        let df = cfg.hop_spacing_hz();
        let bin_hz = cfg.sample_rate_hz() / n_c as f64;
        let base = (f_l_hz / bin_hz).round().max(0.0) as usize;
        let spectra: Vec<Vec<f64>> = (0..chip.nrows())
            .map(|m| {
                let mut buf: Vec<Complex64> = chip.row(m).iter().copied().collect();
                self.fft.process(&mut buf);
                buf.iter().map(|z| z.norm_sqr()).collect()
            })
            .collect();
        let band = base.min(n_c)..(base + k).min(n_c);
        let joint = match self.options.hop_search {
            HopSearch::JointBand => {
                let w: Vec<Vec<f64>> = spectra.iter().map(|s| s[band.clone()].to_vec()).collect();
                distinct_assignment(&w)
            }
            _ => None,
        };
        spectra
            .iter()
            .enumerate()
            .map(|(m, power)| {
                let candidates = match self.options.hop_search {
                    HopSearch::FullDft => 0..n_c,
                    HopSearch::HopBand | HopSearch::JointBand => band.clone(),
                };
                let bin = match &joint {
                    Some(j) => band.start + j[m],
                    None => candidates
                        .clone()
                        .fold(candidates.start, |best, i| if power[i] > power[best] { i } else { best }),
                };
                let x = (bin as f64 * bin_hz - f_l_hz) / df;
                let rounded = x.round();
                let mut flagged = (x - rounded).abs() > BIN_RESIDUAL_LIMIT;
                let hop = if rounded < 0.0 {
                    flagged = true;
                    0
                } else if rounded >= k as f64 {
                    flagged = true;
                    k - 1
                } else {
                    rounded as usize
                };
                HopDecision { bin, hop, flagged }
            })
            .collect()
    }

    /// Correlates the equalized chip against the tones at `base_bin + hops[m]`.
    pub fn matched_filter(&self, chip: &DMatrix<Complex64>, hops: &[usize], base_bin: usize) -> Vec<Complex64> {
        let n_c = self.roots.len();
        let summed: Vec<Complex64>;
        let rows: Vec<Vec<Complex64>> = match self.options.matched_filter {
            MatchedFilterMode::PerAntenna => (0..chip.nrows()).map(|m| chip.row(m).iter().copied().collect()).collect(),
            MatchedFilterMode::AntennaSum => {
                summed = (0..n_c).map(|n| chip.column(n).sum()).collect();
                vec![summed; chip.nrows()]
            }
        };
        hops.iter()
            .zip(&rows)
            .map(|(&c, x)| {
                let bin = base_bin + c;
                x.iter()
                    .enumerate()
                    .map(|(n, v)| v * self.roots[(bin * n) % n_c].conj())
                    .sum::<Complex64>()
                    / n_c as f64
            })
            .collect()
    }

    /// Full pulse pipeline on the window the given schedule points at. `h`
    /// is the receiver's own channel for this pulse.
    pub fn receive_pulse(&self, rx: &BasebandFrame, h: &DMatrix<Complex64>, schedule: &AgilitySchedule, l: usize) -> PulseReception {
        let cfg = &self.config;
        let (m_tx, q_chips, n_c) = (cfg.num_tx(), cfg.chips_per_pulse(), cfg.samples_per_chip());
        let start = schedule.pulse_start_sample(cfg, l);
        let window = rx.samples.columns(start, cfg.samples_per_pulse()).into_owned();
        let xhat = match equalize(&window, h) {
            Ok(x) => x,
            Err(_) => return self.erased_pulse(),
        };
        let base = schedule.base_bin(cfg, l);
        let f_l = schedule.f_offsets_hz[l];
        let predefined: Vec<usize> = (0..m_tx).collect();
        let mut chips = Vec::with_capacity(q_chips);
        let mut detections = Vec::with_capacity(q_chips);
        for q in 0..q_chips {
            let chip = xhat.columns(q * n_c, n_c).into_owned();
            let (hops, bins, flags) = if self.scheme.uses_hops() {
                let d = self.detect_hops(&chip, f_l);
                (
                    d.iter().map(|x| x.hop).collect::<Vec<_>>(),
                    d.iter().map(|x| x.bin).collect::<Vec<_>>(),
                    d.iter().map(|x| x.flagged).collect::<Vec<_>>(),
                )
            } else {
                (predefined.clone(), predefined.iter().map(|c| base + c).collect(), vec![false; m_tx])
            };
            let gamma = self.matched_filter(&chip, &hops, base);
            let amps: Vec<f64> = gamma.iter().map(|g| g.norm()).collect();
            let phases: Vec<f64> = gamma.iter().map(|g| g.arg()).collect();
            chips.push(ChipEstimate {
                hop_codes: hops.clone(),
                amplitudes: amps.clone(),
                phases: phases.clone(),
                flagged: flags.iter().any(|&f| f),
                erased: false,
            });
            detections.push(ChipDetection {
                hop_estimates: hops,
                peak_bins: bins,
                mf_outputs: gamma,
                amp_estimates: amps,
                phase_estimates: phases,
                flags,
            });
        }
        PulseReception {
            estimate: PulseEstimate { chips },
            detections,
            erased: false,
        }
    }

    fn erased_pulse(&self) -> PulseReception {
        let m = self.config.num_tx();
        let zero = Complex64::new(0.0, 0.0);
        let q = self.config.chips_per_pulse();
        PulseReception {
            estimate: PulseEstimate {
                chips: vec![
                    ChipEstimate {
                        hop_codes: (0..m).collect(),
                        amplitudes: vec![0.0; m],
                        phases: vec![0.0; m],
                        flagged: true,
                        erased: true,
                    };
                    q
                ],
            },
            detections: vec![
                ChipDetection {
                    hop_estimates: (0..m).collect(),
                    peak_bins: vec![0; m],
                    mf_outputs: vec![zero; m],
                    amp_estimates: vec![0.0; m],
                    phase_estimates: vec![0.0; m],
                    flags: vec![true; m],
                };
                q
            ],
            erased: true,
        }
    }

    /// Receives and decodes every pulse of a frame; returns the decoded
    /// payload bits and the number of chips the decoder did not accept as
    /// clean.
    pub fn receive_frame(&self, rx: &BasebandFrame, channel: &[DMatrix<Complex64>], schedule: &AgilitySchedule, codec: &Codec) -> (Vec<bool>, usize) {
        let mut bits = Vec::with_capacity(codec.bits_per_pulse() * schedule.len());
        let mut flagged = 0;
        for l in 0..schedule.len() {
            let rec = self.receive_pulse(rx, &channel[l], schedule, l);
            let decoded = codec.decode_pulse(&rec.estimate);
            flagged += decoded.flagged_chips();
            bits.extend(decoded.bits);
        }
        (bits, flagged)
    }
}

/// Largest column count [`distinct_assignment`] solves exactly.
const ASSIGNMENT_MAX_COLUMNS: usize = 20;

/// Picks one distinct column per row maximizing the summed weight, by
/// dynamic programming over the set of used columns. Returns `None` when
/// there are more rows than columns or too many columns.
pub fn distinct_assignment(weights: &[Vec<f64>]) -> Option<Vec<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows > cols || cols > ASSIGNMENT_MAX_COLUMNS {
        return None;
    }
    let size = 1usize << cols;
    let mut best = vec![f64::NEG_INFINITY; size];
    let mut parent = vec![usize::MAX; size];
    best[0] = 0.0;
    for mask in 0..size {
        let row = mask.count_ones() as usize;
        if row >= rows || best[mask] == f64::NEG_INFINITY {
            continue;
        }
        for c in 0..cols {
            let next = mask | (1 << c);
            if next != mask && best[mask] + weights[row][c] > best[next] {
                best[next] = best[mask] + weights[row][c];
                parent[next] = c;
            }
        }
    }
    let mut mask = (0..size)
        .filter(|m| m.count_ones() as usize == rows)
        .max_by(|&a, &b| best[a].total_cmp(&best[b]))?;
    let mut out = vec![0; rows];
    for row in (0..rows).rev() {
        let c = parent[mask];
        out[row] = c;
        mask &= !(1 << c);
    }
    Some(out)
}

/// Per-chip detection trace: `l,q,m,bin,hop,mag,phase,flagged`.
pub fn write_trace<W: Write>(mut w: W, pulses: &[PulseReception]) -> Result<()> {
    writeln!(w, "l,q,m,bin,hop,mag,phase,flagged")?;
    for (l, p) in pulses.iter().enumerate() {
        for (q, d) in p.detections.iter().enumerate() {
            for m in 0..d.hop_estimates.len() {
                writeln!(
                    w,
                    "{l},{q},{m},{},{},{:e},{:e},{}",
                    d.peak_bins[m], d.hop_estimates[m], d.amp_estimates[m], d.phase_estimates[m], d.flags[m] as u8
                )?;
            }
        }
    }
    Ok(())
}

/// Brute-force hop detection: maximizes `sum_m |<xhat_m, h_{c_m}>|^2` over
/// every tuple of M distinct hops, which minimizes the least-squares
/// residual `sum_m min_g ||xhat_m - g h_{c_m}||^2`. References are built
/// from floating-point exponentials, independently of the FFT path.
pub fn exhaustive_ml_detect(chip: &DMatrix<Complex64>, config: &ValidatedConfig, f_l_hz: f64) -> Result<Vec<usize>> {
    let (k, m) = (config.num_hops(), chip.nrows());
    let hypotheses = binomial(k, m)?
        .checked_mul(factorial(m)?)
        .ok_or(Error::OverflowGuard { what: "hypothesis count" })?;
    if hypotheses > ML_HYPOTHESIS_LIMIT {
        return Err(Error::SearchSpaceTooLarge {
            hypotheses,
            limit: ML_HYPOTHESIS_LIMIT,
        });
    }
    let n_c = chip.ncols();
    let fs = config.sample_rate_hz();
    let df = config.hop_spacing_hz();
    let score: Vec<Vec<f64>> = (0..m)
        .map(|a| {
            (0..k)
                .map(|c| {
                    let freq = f_l_hz + c as f64 * df;
                    (0..n_c)
                        .map(|n| chip[(a, n)] * Complex64::cis(-std::f64::consts::TAU * freq * n as f64 / fs))
                        .sum::<Complex64>()
                        .norm_sqr()
                })
                .collect()
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for s in 0..binomial(k, m)? {
        let subset = colex_unrank(s, m, k)?;
        for p in 0..factorial(m)? {
            let perm = lehmer_unrank(p, m)?;
            let total: f64 = perm.iter().enumerate().map(|(a, &i)| score[a][subset[i]]).sum();
            if total > best.0 {
                best = (total, perm.iter().map(|&i| subset[i]).collect());
            }
        }
    }
    Ok(best.1)
}

/// What the eavesdropper assumes about the agility schedule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EveStrategy {
    /// No agility: every pulse at the PRI start and band edge.
    BlindZero,
    /// Independent uniform guesses of both offsets.
    #[default]
    BlindUniform,
    /// Knows the true schedule.
    Genie,
}

impl fmt::Display for EveStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EveStrategy::BlindZero => "blind-zero",
            EveStrategy::BlindUniform => "blind-uniform",
            EveStrategy::Genie => "genie",
        })
    }
}

impl FromStr for EveStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blind-zero" => Ok(EveStrategy::BlindZero),
            "blind-uniform" => Ok(EveStrategy::BlindUniform),
            "genie" => Ok(EveStrategy::Genie),
            _ => Err(Error::InvalidArgument(format!("unknown eve strategy `{s}`"))),
        }
    }
}

pub fn eve_schedule(strategy: EveStrategy, truth: &AgilitySchedule, config: &ValidatedConfig, seed: u64) -> AgilitySchedule {
    match strategy {
        EveStrategy::BlindZero => AgilitySchedule::zero(config),
        EveStrategy::BlindUniform => adversary_guess_schedule(seed, config),
        EveStrategy::Genie => truth.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian, ChannelRealization, Party};
    use crate::codec::PulsePlan;
    use crate::params::{validate, SystemConfig};
    use crate::waveform::{chip_tone, synthesize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn greedy() -> ReceiverOptions {
        ReceiverOptions {
            hop_search: HopSearch::FullDft,
            ..Default::default()
        }
    }

    fn cfg_default() -> ValidatedConfig {
        validate(SystemConfig {
            num_pulses: 4,
            ..SystemConfig::default()
        })
        .unwrap()
    }

    /// K = 4, M = N = 2, Q = 2, n_c = 8.
    fn cfg_small() -> ValidatedConfig {
        validate(SystemConfig {
            bandwidth_hz: 4e6,
            num_hops: 4,
            pulse_duration_s: 2e-6,
            chips_per_pulse: 2,
            num_tx: 2,
            num_rx: 2,
            num_pulses: 2,
            pri_s: 10e-6,
            sample_rate_hz: 8e6,
            ..SystemConfig::default()
        })
        .unwrap()
    }

    fn tone_chip(cfg: &ValidatedConfig, bins: &[usize], symbols: &[Complex64]) -> DMatrix<Complex64> {
        let roots = roots_of_unity(cfg.samples_per_chip());
        let rows: Vec<Vec<Complex64>> = bins.iter().map(|&b| chip_tone(b, &roots)).collect();
        DMatrix::from_fn(bins.len(), cfg.samples_per_chip(), |m, n| symbols[m] * rows[m][n])
    }

    fn random_frame(cfg: &ValidatedConfig, scheme: Scheme, seed: u64) -> (Codec, Vec<bool>, Vec<PulsePlan>, AgilitySchedule, BasebandFrame) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let codec = Codec::for_config(cfg, scheme).unwrap();
        let bits: Vec<bool> = (0..cfg.num_pulses() * codec.bits_per_pulse()).map(|_| rng.random()).collect();
        let plans = codec.encode_frame(&bits, cfg.num_pulses()).unwrap();
        let phi_t = (0..cfg.num_pulses()).map(|_| rng.random_range(0..cfg.time_alphabet())).collect();
        let phi_f = (0..cfg.num_pulses()).map(|_| rng.random_range(0..cfg.freq_alphabet())).collect();
        let schedule = AgilitySchedule::from_indices(cfg, phi_t, phi_f).unwrap();
        let frame = synthesize(&plans, &schedule, cfg).unwrap();
        (codec, bits, plans, schedule, frame)
    }

    #[test]
    fn identity_equalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(4, 50, |_, _| complex_gaussian(&mut rng, 1.0));
        let eye = DMatrix::identity(4, 4);
        assert!((equalize(&x, &eye).unwrap() - &x).norm() < 1e-14);
    }

    #[test]
    fn random_channel_equalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (n, m) in [(8, 8), (10, 8), (3, 2)] {
            let h = DMatrix::from_fn(n, m, |_, _| complex_gaussian(&mut rng, 1.0));
            let x = DMatrix::from_fn(m, 100, |_, _| complex_gaussian(&mut rng, 1.0));
            let xhat = equalize(&(&h * &x), &h).unwrap();
            assert!((xhat - &x).norm() / x.norm() < 1e-10);
        }
    }

    #[test]
    fn repeated_column_is_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut h = DMatrix::from_fn(4, 4, |_, _| complex_gaussian(&mut rng, 1.0));
        let c = h.column(1).into_owned();
        h.set_column(2, &c);
        assert!(matches!(pseudo_inverse(&h), Err(Error::RankDeficientChannel { .. })));
        assert!(matches!(pseudo_inverse(&DMatrix::zeros(2, 3)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn hop_three_at_band_edge() {
        let cfg = cfg_default();
        let rx = SparseReceiver::new(&cfg, Scheme::Sim, greedy());
        let chip = tone_chip(&cfg, &[3], &[Complex64::new(1.0, 0.0)]);
        let d = rx.detect_hops(&chip, 0.0);
        assert_eq!(d[0], HopDecision { bin: 3, hop: 3, flagged: false });
    }

    #[test]
    fn wrong_base_frequency_misreads_hop() {
        // Hop 3 at f_l = 150 MHz sits at 165 MHz, bin 33 of 40. Assuming
        // f_l = 0 reads hop 33: out of range, clamped to 9 and flagged.
        let cfg = cfg_default();
        let rx = SparseReceiver::new(&cfg, Scheme::Sim, greedy());
        let chip = tone_chip(&cfg, &[33], &[Complex64::new(1.0, 0.0)]);
        assert_eq!(rx.detect_hops(&chip, 150e6)[0], HopDecision { bin: 33, hop: 3, flagged: false });
        assert_eq!(rx.detect_hops(&chip, 0.0)[0], HopDecision { bin: 33, hop: 9, flagged: true });
        // With the search limited to the assumed band the pick is in range
        // but still wrong.
        let banded = SparseReceiver::new(
            &cfg,
            Scheme::Sim,
            ReceiverOptions {
                hop_search: HopSearch::HopBand,
                ..Default::default()
            },
        );
        assert_eq!(banded.detect_hops(&chip, 150e6)[0].hop, 3);
    }

    #[test]
    fn misaligned_base_frequency_is_flagged() {
        let cfg = cfg_default();
        let rx = SparseReceiver::new(&cfg, Scheme::Sim, greedy());
        let chip = tone_chip(&cfg, &[12], &[Complex64::new(1.0, 0.0)]);
        assert!(rx.detect_hops(&chip, 51e6)[0].flagged);
    }

    #[test]
    fn matched_filter_examples() {
        let cfg = cfg_default();
        let rx = SparseReceiver::new(&cfg, Scheme::Hyb, ReceiverOptions::default());
        let chip = tone_chip(&cfg, &[0], &[Complex64::new(0.0, 1.0)]);
        let g = rx.matched_filter(&chip, &[0], 0);
        assert!((g[0] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
        assert!(rx.matched_filter(&chip, &[1], 0)[0].norm() < 1e-12);

        let one = Complex64::new(1.0, 0.0);
        let chip = tone_chip(&cfg, &[0, 1], &[one, one * 2.0]);
        for mode in [MatchedFilterMode::PerAntenna, MatchedFilterMode::AntennaSum] {
            let rx = SparseReceiver::new(
                &cfg,
                Scheme::Hyb,
                ReceiverOptions {
                    matched_filter: mode,
                    ..Default::default()
                },
            );
            let g = rx.matched_filter(&chip, &[0, 1], 0);
            assert!((g[0] - one).norm() < 1e-12 && (g[1] - one * 2.0).norm() < 1e-12, "{mode:?}");
        }
    }

    #[test]
    fn noiseless_loopback_every_scheme() {
        let cfg = cfg_default();
        for (i, scheme) in Scheme::ALL.into_iter().enumerate() {
            let (codec, bits, plans, schedule, frame) = random_frame(&cfg, scheme, 10 + i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let ch = ChannelRealization::draw(&cfg, 0.0, 0.0, &mut rng);
            let r = ch.apply(&frame, Party::Bob, &cfg, &mut rng).unwrap();
            let rx = SparseReceiver::new(&cfg, scheme, ReceiverOptions::default());
            for l in 0..cfg.num_pulses() {
                let rec = rx.receive_pulse(&r, &ch.h_bob[l], &schedule, l);
                let decoded = codec.decode_pulse(&rec.estimate);
                assert_eq!(decoded.flagged_chips(), 0);
                let (replan, _) = codec.encode_pulse(&decoded.bits).unwrap();
                assert_eq!(replan.chips.iter().map(|c| &c.hop_codes).collect::<Vec<_>>(), plans[l].chips.iter().map(|c| &c.hop_codes).collect::<Vec<_>>());
                for (a, b) in replan.chips.iter().zip(&plans[l].chips) {
                    assert_eq!(a.amplitudes, b.amplitudes);
                    assert_eq!(a.phases, b.phases);
                }
            }
            let (out, flagged) = rx.receive_frame(&r, &ch.h_bob, &schedule, &codec);
            assert_eq!(flagged, 0);
            assert_eq!(out, bits, "{scheme}");
        }
    }

    #[test]
    fn erased_pulse_on_singular_channel() {
        let cfg = cfg_default();
        let (codec, _, _, schedule, frame) = random_frame(&cfg, Scheme::Ph, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ch = ChannelRealization::draw(&cfg, 0.0, 0.0, &mut rng);
        ch.h_bob[1] = DMatrix::zeros(8, 8);
        let r = ch.apply(&frame, Party::Bob, &cfg, &mut rng).unwrap();
        let rx = SparseReceiver::new(&cfg, Scheme::Ph, ReceiverOptions::default());
        let rec = rx.receive_pulse(&r, &ch.h_bob[1], &schedule, 1);
        assert!(rec.erased);
        assert!(rec.detections.iter().all(|d| d.mf_outputs.iter().all(|g| g.is_finite())));
        let decoded = codec.decode_pulse(&rec.estimate);
        assert_eq!(decoded.flagged_chips(), 10);
        assert!(decoded.bits.iter().all(|b| !b));
    }

    #[test]
    fn phase_and_amplitude_unbiased_at_high_snr() {
        // Mean |error| shrinks roughly like sigma as the noise drops.
        let cfg = validate(SystemConfig {
            num_pulses: 2,
            ..SystemConfig::default()
        })
        .unwrap();
        let (_, _, plans, schedule, frame) = random_frame(&cfg, Scheme::Hyb, 21);
        let rx = SparseReceiver::new(&cfg, Scheme::Hyb, ReceiverOptions::default());
        let mut errs = Vec::new();
        for sigma2 in [1e-1, 1e-3, 1e-5] {
            let mut rng = ChaCha8Rng::seed_from_u64(22);
            let ch = ChannelRealization::identity(&cfg, sigma2);
            let r = ch.apply(&frame, Party::Bob, &cfg, &mut rng).unwrap();
            let (mut ep, mut ea, mut n) = (0.0, 0.0, 0.0);
            for l in 0..2 {
                let rec = rx.receive_pulse(&r, &ch.h_bob[l], &schedule, l);
                for (d, c) in rec.detections.iter().zip(&plans[l].chips) {
                    for m in 0..cfg.num_tx() {
                        let dp = (d.phase_estimates[m] - c.phases[m] + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
                        ep += dp;
                        ea += d.amp_estimates[m] - c.amplitudes[m];
                        n += 1.0;
                    }
                }
            }
            errs.push(((ep / n).abs(), (ea / n).abs()));
        }
        for w in errs.windows(2) {
            assert!(w[1].0 < w[0].0 && w[1].1 < w[0].1, "{errs:?}");
        }
        assert!(errs[2].0 < 1e-3 && errs[2].1 < 1e-3);
    }

    #[test]
    fn ml_hypothesis_counts() {
        let small = cfg_small();
        let chip = tone_chip(&small, &[1, 3], &[Complex64::new(1.0, 0.0); 2]);
        assert_eq!(exhaustive_ml_detect(&chip, &small, 0.0).unwrap(), vec![1, 3]);
        let big = cfg_default();
        let chip = DMatrix::zeros(8, 40);
        assert!(matches!(
            exhaustive_ml_detect(&chip, &big, 0.0),
            Err(Error::SearchSpaceTooLarge { hypotheses: 1_814_400, .. })
        ));
    }

    #[test]
    fn greedy_matches_ml_on_every_noiseless_codeword() {
        // K <= 6, M <= 3: every tuple of distinct hops, every base band.
        for k in 2..=6usize {
            for m in 1..=3usize.min(k) {
                let q = k.div_ceil(m);
                let cfg = validate(SystemConfig {
                    bandwidth_hz: 2.0 * k as f64 * 1e6,
                    num_hops: k,
                    pulse_duration_s: q as f64 * 1e-6,
                    chips_per_pulse: q,
                    num_tx: m,
                    num_rx: m,
                    num_pulses: 1,
                    pri_s: 2.0 * q as f64 * 1e-6,
                    sample_rate_hz: 2.0 * k as f64 * 1e6,
                    ..SystemConfig::default()
                })
                .unwrap();
                let rx = SparseReceiver::new(&cfg, Scheme::Sim, greedy());
                let joint = SparseReceiver::new(&cfg, Scheme::Sim, ReceiverOptions::default());
                let total = binomial(k, m).unwrap() * factorial(m).unwrap();
                for phi_f in 0..cfg.freq_alphabet() {
                    let f_l = phi_f as f64 * cfg.freq_step_hz();
                    let base = phi_f * k;
                    for s in 0..binomial(k, m).unwrap() {
                        let subset = colex_unrank(s, m, k).unwrap();
                        for p in 0..factorial(m).unwrap() {
                            let hops: Vec<usize> = lehmer_unrank(p, m).unwrap().iter().map(|&i| subset[i]).collect();
                            let bins: Vec<usize> = hops.iter().map(|c| base + c).collect();
                            let chip = tone_chip(&cfg, &bins, &vec![Complex64::new(1.0, 0.0); m]);
                            let greedy: Vec<usize> = rx.detect_hops(&chip, f_l).iter().map(|d| d.hop).collect();
                            assert_eq!(greedy, hops);
                            let j: Vec<usize> = joint.detect_hops(&chip, f_l).iter().map(|d| d.hop).collect();
                            assert_eq!(j, hops);
                            assert_eq!(exhaustive_ml_detect(&chip, &cfg, f_l).unwrap(), hops);
                        }
                    }
                }
                assert!(total >= 2);
            }
        }
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..300 {
            let cols = rng.random_range(1..7usize);
            let rows = rng.random_range(1..=cols);
            let w: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.random::<f64>()).collect()).collect();
            let got = distinct_assignment(&w).unwrap();
            let mut seen = got.clone();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), rows);
            let score = |a: &[usize]| a.iter().enumerate().map(|(r, &c)| w[r][c]).sum::<f64>();
            let mut best = f64::NEG_INFINITY;
            for s in 0..binomial(cols, rows).unwrap() {
                let subset = colex_unrank(s, rows, cols).unwrap();
                for p in 0..factorial(rows).unwrap() {
                    let a: Vec<usize> = lehmer_unrank(p, rows).unwrap().iter().map(|&i| subset[i]).collect();
                    best = best.max(score(&a));
                }
            }
            assert!((score(&got) - best).abs() < 1e-12);
        }
        assert!(distinct_assignment(&[vec![1.0], vec![2.0]]).is_none());
    }

    #[test]
    fn joint_band_equals_ml_on_noisy_chips() {
        let cfg = cfg_default();
        let small = validate(SystemConfig {
            num_tx: 2,
            num_rx: 2,
            chips_per_pulse: 10,
            num_hops: 4,
            bandwidth_hz: 80e6,
            ..SystemConfig::default()
        })
        .unwrap();
        let rx = SparseReceiver::new(&small, Scheme::Sim, ReceiverOptions::default());
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let phi_f = rng.random_range(0..small.freq_alphabet());
            let f_l = phi_f as f64 * small.freq_step_hz();
            let a = rng.random_range(0..4usize);
            let b = (a + rng.random_range(1..4usize)) % 4;
            let mut chip = tone_chip(&small, &[phi_f * 4 + a, phi_f * 4 + b], &[Complex64::new(1.0, 0.0); 2]);
            for z in chip.iter_mut() {
                *z += complex_gaussian(&mut rng, 2.0);
            }
            let joint: Vec<usize> = rx.detect_hops(&chip, f_l).iter().map(|d| d.hop).collect();
            assert_eq!(joint, exhaustive_ml_detect(&chip, &small, f_l).unwrap());
        }
        assert_eq!(cfg.num_hops(), 10);
    }

    #[test]
    fn eve_strategies() {
        let cfg = cfg_default();
        let truth = AgilitySchedule::from_indices(&cfg, vec![1, 2, 3, 4], vec![0, 1, 2, 3]).unwrap();
        assert_eq!(eve_schedule(EveStrategy::Genie, &truth, &cfg, 0), truth);
        assert_eq!(eve_schedule(EveStrategy::BlindZero, &truth, &cfg, 0), AgilitySchedule::zero(&cfg));
        let a = eve_schedule(EveStrategy::BlindUniform, &truth, &cfg, 7);
        assert_eq!(a, eve_schedule(EveStrategy::BlindUniform, &truth, &cfg, 7));
        for s in ["blind-zero", "blind-uniform", "genie"] {
            assert_eq!(s.parse::<EveStrategy>().unwrap().to_string(), s);
        }
        assert!("psychic".parse::<EveStrategy>().is_err());
    }

    #[test]
    fn trace_csv() {
        let cfg = cfg_default();
        let (_, _, _, schedule, frame) = random_frame(&cfg, Scheme::Sim, 31);
        let rx = SparseReceiver::new(&cfg, Scheme::Sim, ReceiverOptions::default());
        let eye = DMatrix::identity(8, 8);
        let pulses: Vec<PulseReception> = (0..2).map(|l| rx.receive_pulse(&frame, &eye, &schedule, l)).collect();
        let mut out = Vec::new();
        write_trace(&mut out, &pulses).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 10 * 8);
        assert!(text.starts_with("l,q,m,bin,hop,mag,phase,flagged\n0,0,0,"));
    }
}
