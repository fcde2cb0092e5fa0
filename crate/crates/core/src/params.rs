//! System parameters and the quantities derived from them.
//!
//! All times are in seconds and all frequencies in hertz, expressed relative
//! to the carrier (complex baseband). A [`SystemConfig`] is the raw user
//! input; [`validate`] checks every structural constraint of the waveform and
//! produces an immutable [`ValidatedConfig`] carrying the derived chip
//! duration, hop spacing, agility quantization steps and sampling plan.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::CodecParams;
use crate::error::{Error, Result};

/// Relative tolerance used for every "must be an integer" check.
const INTEGER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    /// K, number of available hop frequencies.
    pub num_hops: usize,
    /// Pulse duration.
    pub pulse_duration_s: f64,
    /// Q, chips per pulse.
    pub chips_per_pulse: usize,
    /// M, transmit antennas.
    pub num_tx: usize,
    /// N, receive antennas (Bob and Eve alike).
    pub num_rx: usize,
    /// L, pulses per frame.
    pub num_pulses: usize,
    /// Pulse repetition interval.
    pub pri_s: f64,
    pub ask_order: usize,
    pub psk_order: usize,
    pub sample_rate_hz: f64,
    /// Size of the pulse start-time offset alphabet. Derived from the PRI
    /// when absent; must agree with it when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_offset_alphabet: Option<usize>,
    /// Size of the base-frequency offset alphabet. Derived from the
    /// bandwidth when absent; must agree with it when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freq_offset_alphabet: Option<usize>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            carrier_freq_hz: 10e9,
            bandwidth_hz: 200e6,
            num_hops: 10,
            pulse_duration_s: 2e-6,
            chips_per_pulse: 10,
            num_tx: 8,
            num_rx: 8,
            num_pulses: 50,
            // 17 pulse durations: 16 start-time slots.
            pri_s: 34e-6,
            ask_order: 2,
            psk_order: 4,
            sample_rate_hz: 200e6,
            time_offset_alphabet: None,
            freq_offset_alphabet: None,
        }
    }
}

impl SystemConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

/// Integer sample counts of one chip, one pulse and one PRI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub samples_per_chip: usize,
    pub samples_per_pulse: usize,
    pub samples_per_pri: usize,
}

/// Discretizes the continuous-time timeline. The chip must span an exact
/// integer number of samples.
pub fn derive_sampling(
    sample_rate_hz: f64,
    chip_duration_s: f64,
    chips_per_pulse: usize,
    pri_s: f64,
) -> Result<SamplingPlan> {
    let per_chip = sample_rate_hz * chip_duration_s;
    let rounded = per_chip.round();
    if rounded < 1.0 || ((per_chip - rounded).abs() > INTEGER_TOL * rounded) {
        return Err(Error::NonIntegerChipLength {
            samples_per_chip: per_chip,
        });
    }
    let samples_per_chip = rounded as usize;
    Ok(SamplingPlan {
        samples_per_chip,
        samples_per_pulse: chips_per_pulse * samples_per_chip,
        samples_per_pri: (sample_rate_hz * pri_s).round() as usize,
    })
}

/// A configuration that passed [`validate`]. Immutable; cheap to clone and
/// safe to share between worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    config: SystemConfig,
    chip_duration_s: f64,
    hop_spacing_hz: f64,
    time_step_s: f64,
    freq_step_hz: f64,
    time_alphabet: usize,
    freq_alphabet: usize,
    sampling: SamplingPlan,
}

fn check_positive(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositive { field, value })
    }
}

/// Returns the nearest integer when `x` is within relative tolerance of it.
fn near_integer(x: f64) -> Option<usize> {
    let r = x.round();
    if r >= 0.0 && (x - r).abs() <= INTEGER_TOL * r.max(1.0) {
        Some(r as usize)
    } else {
        None
    }
}

/// Checks every structural constraint and fills in the derived quantities.
pub fn validate(config: SystemConfig) -> Result<ValidatedConfig> {
    let c = &config;
    check_positive("carrier_freq_hz", c.carrier_freq_hz)?;
    check_positive("bandwidth_hz", c.bandwidth_hz)?;
    check_positive("pulse_duration_s", c.pulse_duration_s)?;
    check_positive("pri_s", c.pri_s)?;
    check_positive("sample_rate_hz", c.sample_rate_hz)?;
    for (field, v) in [
        ("num_hops", c.num_hops),
        ("chips_per_pulse", c.chips_per_pulse),
        ("num_tx", c.num_tx),
        ("num_rx", c.num_rx),
        ("num_pulses", c.num_pulses),
        ("ask_order", c.ask_order),
        ("psk_order", c.psk_order),
    ] {
        if v == 0 {
            return Err(Error::NonPositive { field, value: 0.0 });
        }
    }
    if !c.ask_order.is_power_of_two() {
        return Err(Error::NonPowerOfTwoConstellation {
            name: "ASK",
            value: c.ask_order,
        });
    }
    if !c.psk_order.is_power_of_two() {
        return Err(Error::NonPowerOfTwoConstellation {
            name: "PSK",
            value: c.psk_order,
        });
    }

    if c.num_tx > c.num_hops {
        return Err(Error::TooManyTxAntennas {
            num_tx: c.num_tx,
            num_hops: c.num_hops,
        });
    }
    if c.num_tx * c.chips_per_pulse < c.num_hops {
        return Err(Error::TooFewTxAntennas {
            num_tx: c.num_tx,
            min: c.num_hops as f64 / c.chips_per_pulse as f64,
        });
    }
    if c.num_rx < c.num_tx {
        return Err(Error::TooFewRxAntennas {
            num_rx: c.num_rx,
            num_tx: c.num_tx,
        });
    }

    let chip_duration_s = c.pulse_duration_s / c.chips_per_pulse as f64;
    let hop_spacing_hz = 1.0 / chip_duration_s;
    let occupied_hz = c.num_hops as f64 * hop_spacing_hz;
    if occupied_hz > c.bandwidth_hz * (1.0 + INTEGER_TOL) {
        return Err(Error::BandwidthExceeded {
            occupied_hz,
            bandwidth_hz: c.bandwidth_hz,
        });
    }

    let pri_ratio = c.pri_s / c.pulse_duration_s;
    let slots = near_integer(pri_ratio).ok_or(Error::NonIntegerPriRatio { ratio: pri_ratio })?;
    let time_alphabet = slots.saturating_sub(1);
    if !time_alphabet.is_power_of_two() {
        return Err(Error::NonPowerOfTwoAlphabet {
            name: "time offset",
            value: time_alphabet as u64,
        });
    }
    let band_ratio = c.bandwidth_hz / occupied_hz;
    let freq_alphabet =
        near_integer(band_ratio).ok_or(Error::NonIntegerFreqAlphabet { ratio: band_ratio })?;
    if !freq_alphabet.is_power_of_two() {
        return Err(Error::NonPowerOfTwoAlphabet {
            name: "frequency offset",
            value: freq_alphabet as u64,
        });
    }
    for (name, given, derived) in [
        ("time offset", c.time_offset_alphabet, time_alphabet),
        ("frequency offset", c.freq_offset_alphabet, freq_alphabet),
    ] {
        if let Some(given) = given {
            if given != derived {
                return Err(Error::AlphabetMismatch {
                    name,
                    given,
                    derived,
                });
            }
        }
    }

    if c.sample_rate_hz < c.bandwidth_hz * (1.0 - INTEGER_TOL) {
        return Err(Error::Undersampled {
            sample_rate_hz: c.sample_rate_hz,
            bandwidth_hz: c.bandwidth_hz,
        });
    }
    let sampling = derive_sampling(
        c.sample_rate_hz,
        chip_duration_s,
        c.chips_per_pulse,
        c.pri_s,
    )?;

    Ok(ValidatedConfig {
        chip_duration_s,
        hop_spacing_hz,
        time_step_s: c.chips_per_pulse as f64 * chip_duration_s,
        freq_step_hz: occupied_hz,
        time_alphabet,
        freq_alphabet,
        sampling: SamplingPlan {
            // Exact: the PRI is an integer number of pulses.
            samples_per_pri: slots * sampling.samples_per_pulse,
            ..sampling
        },
        config,
    })
}

impl ValidatedConfig {
    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn num_hops(&self) -> usize {
        self.config.num_hops
    }
    pub fn chips_per_pulse(&self) -> usize {
        self.config.chips_per_pulse
    }
    pub fn num_tx(&self) -> usize {
        self.config.num_tx
    }
    pub fn num_rx(&self) -> usize {
        self.config.num_rx
    }
    pub fn num_pulses(&self) -> usize {
        self.config.num_pulses
    }
    pub fn pri_s(&self) -> f64 {
        self.config.pri_s
    }
    pub fn prf_hz(&self) -> f64 {
        1.0 / self.config.pri_s
    }
    pub fn pulse_duration_s(&self) -> f64 {
        self.config.pulse_duration_s
    }
    pub fn sample_rate_hz(&self) -> f64 {
        self.config.sample_rate_hz
    }
    pub fn bandwidth_hz(&self) -> f64 {
        self.config.bandwidth_hz
    }

    /// Chip duration Δt = τ/Q.
    pub fn chip_duration_s(&self) -> f64 {
        self.chip_duration_s
    }
    /// Hop spacing Δf = 1/Δt.
    pub fn hop_spacing_hz(&self) -> f64 {
        self.hop_spacing_hz
    }
    /// Start-time quantization step (one pulse duration).
    pub fn time_step_s(&self) -> f64 {
        self.time_step_s
    }
    /// Base-frequency quantization step (K hop spacings).
    pub fn freq_step_hz(&self) -> f64 {
        self.freq_step_hz
    }
    pub fn time_alphabet(&self) -> usize {
        self.time_alphabet
    }
    pub fn freq_alphabet(&self) -> usize {
        self.freq_alphabet
    }
    pub fn sampling(&self) -> SamplingPlan {
        self.sampling
    }
    pub fn samples_per_chip(&self) -> usize {
        self.sampling.samples_per_chip
    }
    pub fn samples_per_pulse(&self) -> usize {
        self.sampling.samples_per_pulse
    }
    pub fn samples_per_pri(&self) -> usize {
        self.sampling.samples_per_pri
    }
    pub fn frame_len(&self) -> usize {
        self.sampling.samples_per_pri * self.config.num_pulses
    }

    pub fn codec_params(&self) -> CodecParams {
        CodecParams {
            num_hops: self.config.num_hops,
            num_tx: self.config.num_tx,
            ask_order: self.config.ask_order,
            psk_order: self.config.psk_order,
        }
    }

    /// Returns a copy with a different pulse count (everything else is
    /// independent of L).
    pub fn with_num_pulses(&self, num_pulses: usize) -> Result<Self> {
        validate(SystemConfig {
            num_pulses,
            ..self.config.clone()
        })
    }
}

impl fmt::Display for ValidatedConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(f, "carrier_freq_hz      {:e}", c.carrier_freq_hz)?;
        writeln!(f, "bandwidth_hz         {:e}", c.bandwidth_hz)?;
        writeln!(f, "num_hops (K)         {}", c.num_hops)?;
        writeln!(f, "chips_per_pulse (Q)  {}", c.chips_per_pulse)?;
        writeln!(f, "num_tx (M)           {}", c.num_tx)?;
        writeln!(f, "num_rx (N)           {}", c.num_rx)?;
        writeln!(f, "num_pulses (L)       {}", c.num_pulses)?;
        writeln!(f, "pulse_duration_s     {:e}", c.pulse_duration_s)?;
        writeln!(f, "pri_s                {:e}", c.pri_s)?;
        writeln!(f, "prf_hz               {}", self.prf_hz())?;
        writeln!(f, "chip_duration_s      {:e}", self.chip_duration_s)?;
        writeln!(f, "hop_spacing_hz       {:e}", self.hop_spacing_hz)?;
        writeln!(f, "time_step_s          {:e}", self.time_step_s)?;
        writeln!(f, "freq_step_hz         {:e}", self.freq_step_hz)?;
        writeln!(f, "time_alphabet        {}", self.time_alphabet)?;
        writeln!(f, "freq_alphabet        {}", self.freq_alphabet)?;
        writeln!(f, "sample_rate_hz       {:e}", c.sample_rate_hz)?;
        writeln!(f, "samples_per_chip     {}", self.sampling.samples_per_chip)?;
        writeln!(f, "samples_per_pulse    {}", self.sampling.samples_per_pulse)?;
        write!(f, "samples_per_pri      {}", self.sampling.samples_per_pri)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        let vc = validate(SystemConfig::default()).unwrap();
        assert!((vc.chip_duration_s() - 200e-9).abs() < 1e-18);
        assert!((vc.hop_spacing_hz() - 5e6).abs() < 1e-6);
        assert!(vc.num_hops() as f64 * vc.hop_spacing_hz() <= vc.bandwidth_hz());
        assert_eq!(vc.freq_alphabet(), 4);
        assert_eq!(vc.time_alphabet(), 16);
        assert_eq!(vc.samples_per_chip(), 40);
        assert_eq!(vc.samples_per_pulse(), 400);
        assert_eq!(vc.samples_per_pri(), 6800);
        assert!((vc.time_step_s() - 2e-6).abs() < 1e-18);
        assert!((vc.freq_step_hz() - 50e6).abs() < 1e-6);
    }

    #[test]
    fn too_many_tx_antennas() {
        let cfg = SystemConfig {
            num_tx: 11,
            num_rx: 11,
            ..SystemConfig::default()
        };
        assert!(matches!(
            validate(cfg),
            Err(Error::TooManyTxAntennas {
                num_tx: 11,
                num_hops: 10
            })
        ));
    }

    #[test]
    fn too_few_tx_and_rx() {
        let cfg = SystemConfig {
            num_hops: 10,
            chips_per_pulse: 2,
            pulse_duration_s: 0.4e-6,
            pri_s: 0.4e-6 * 17.0,
            num_tx: 4,
            num_rx: 4,
            ..SystemConfig::default()
        };
        assert!(matches!(validate(cfg), Err(Error::TooFewTxAntennas { .. })));
        let cfg = SystemConfig {
            num_rx: 7,
            ..SystemConfig::default()
        };
        assert!(matches!(validate(cfg), Err(Error::TooFewRxAntennas { .. })));
    }

    #[test]
    fn bandwidth_exceeded() {
        let cfg = SystemConfig {
            bandwidth_hz: 40e6,
            sample_rate_hz: 200e6,
            ..SystemConfig::default()
        };
        assert!(matches!(validate(cfg), Err(Error::BandwidthExceeded { .. })));
    }

    #[test]
    fn alphabets_must_be_powers_of_two() {
        let cfg = SystemConfig {
            pri_s: 32e-6,
            ..SystemConfig::default()
        };
        assert!(matches!(
            validate(cfg),
            Err(Error::NonPowerOfTwoAlphabet { value: 15, .. })
        ));
        let cfg = SystemConfig {
            bandwidth_hz: 150e6,
            sample_rate_hz: 200e6,
            ..SystemConfig::default()
        };
        assert!(matches!(
            validate(cfg),
            Err(Error::NonPowerOfTwoAlphabet { value: 3, .. })
        ));
        let cfg = SystemConfig {
            pri_s: 33e-6,
            ..SystemConfig::default()
        };
        assert!(matches!(validate(cfg), Err(Error::NonIntegerPriRatio { .. })));
    }

    #[test]
    fn explicit_alphabets_must_agree() {
        let ok = SystemConfig {
            time_offset_alphabet: Some(16),
            freq_offset_alphabet: Some(4),
            ..SystemConfig::default()
        };
        validate(ok).unwrap();
        let bad = SystemConfig {
            freq_offset_alphabet: Some(8),
            ..SystemConfig::default()
        };
        assert!(matches!(validate(bad), Err(Error::AlphabetMismatch { .. })));
    }

    #[test]
    fn non_positive_and_constellations() {
        let cfg = SystemConfig {
            bandwidth_hz: -1.0,
            ..SystemConfig::default()
        };
        assert!(matches!(validate(cfg), Err(Error::NonPositive { .. })));
        let cfg = SystemConfig {
            num_pulses: 0,
            ..SystemConfig::default()
        };
        assert!(matches!(validate(cfg), Err(Error::NonPositive { .. })));
        let cfg = SystemConfig {
            psk_order: 3,
            ..SystemConfig::default()
        };
        assert!(matches!(
            validate(cfg),
            Err(Error::NonPowerOfTwoConstellation { .. })
        ));
    }

    #[test]
    fn undersampled() {
        let cfg = SystemConfig {
            sample_rate_hz: 100e6,
            ..SystemConfig::default()
        };
        assert!(matches!(validate(cfg), Err(Error::Undersampled { .. })));
    }

    #[test]
    fn sampling_plan() {
        let plan = derive_sampling(200e6, 200e-9, 10, 34e-6).unwrap();
        assert_eq!(plan.samples_per_chip, 40);
        assert_eq!(plan.samples_per_pulse, 400);
        assert_eq!(plan.samples_per_pri, 6800);
        assert!(matches!(
            derive_sampling(200e6, 199e-9, 10, 34e-6),
            Err(Error::NonIntegerChipLength { .. })
        ));
        // Non-integer chip length is also caught by validation.
        let cfg = SystemConfig {
            sample_rate_hz: 201e6,
            ..SystemConfig::default()
        };
        assert!(matches!(
            validate(cfg),
            Err(Error::NonIntegerChipLength { .. })
        ));
    }

    #[test]
    fn validation_is_idempotent() {
        let vc = validate(SystemConfig::default()).unwrap();
        let again = validate(vc.config().clone()).unwrap();
        assert_eq!(vc, again);
    }

    #[test]
    fn degenerate_singleton_alphabets() {
        let cfg = SystemConfig {
            bandwidth_hz: 50e6,
            sample_rate_hz: 200e6,
            pri_s: 4e-6,
            ..SystemConfig::default()
        };
        let vc = validate(cfg).unwrap();
        assert_eq!(vc.time_alphabet(), 1);
        assert_eq!(vc.freq_alphabet(), 1);
    }

    #[test]
    fn json_round_trip_with_partial_fields() {
        let cfg = SystemConfig::from_json_str(r#"{"num_pulses": 7, "num_tx": 4}"#).unwrap();
        assert_eq!(cfg.num_pulses, 7);
        assert_eq!(cfg.num_tx, 4);
        assert_eq!(cfg.bandwidth_hz, 200e6);
        assert!(SystemConfig::from_json_str(r#"{"bogus": 1}"#).is_err());
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(SystemConfig::from_json_str(&text).unwrap(), cfg);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn spacing_times_duration_is_one(
                chips in 1usize..64,
                nc in 1usize..64,
                k_exp in 0u32..3,
                phi_t_exp in 0u32..6,
                phi_f_exp in 0u32..4,
                tau_ns in 100u32..10_000,
            ) {
                let k = 1usize << k_exp;
                let tau = tau_ns as f64 * 1e-9;
                let dt = tau / chips as f64;
                let df = 1.0 / dt;
                let phi_t = 1usize << phi_t_exp;
                let phi_f = 1usize << phi_f_exp;
                let bw = k as f64 * df * phi_f as f64;
                let cfg = SystemConfig {
                    bandwidth_hz: bw,
                    num_hops: k,
                    pulse_duration_s: tau,
                    chips_per_pulse: chips,
                    num_tx: k.min(chips.max(1)).max(k.div_ceil(chips)),
                    num_rx: k,
                    pri_s: tau * (phi_t + 1) as f64,
                    sample_rate_hz: df * (nc.max(k * phi_f)) as f64,
                    ..SystemConfig::default()
                };
                let vc = validate(cfg).unwrap();
                let prod = vc.hop_spacing_hz() * vc.chip_duration_s();
                prop_assert!((prod - 1.0).abs() <= f64::EPSILON);
                prop_assert!(vc.time_alphabet().is_power_of_two());
                prop_assert!(vc.freq_alphabet().is_power_of_two());
                prop_assert_eq!(validate(vc.config().clone()).unwrap(), vc);
            }
        }
    }
}
