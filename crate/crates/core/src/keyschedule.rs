//! Secret agility sequences.
//!
//! Alice and Bob share a 256-bit [`SecretKey`]. Each pulse `l` gets a
//! start-time index `phi_t[l]` and a base-frequency index `phi_f[l]`, drawn
//! by running ChaCha20 in counter mode: the key is the cipher key, the
//! `stream_id` selects the nonce, and `(l, field)` selects the keystream
//! block. Alphabets are powers of two, so masking the first keystream word
//! gives an exactly uniform index.

use std::fmt;
use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};

use crate::error::{Error, Result};
use crate::params::ValidatedConfig;

const FIELD_TIME: u128 = 0;
const FIELD_FREQ: u128 = 1;
const WORDS_PER_BLOCK: u128 = 16;

#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; 32]);

impl SecretKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        SecretKey(bytes)
    }

    /// Parses 64 hex digits.
    pub fn from_hex(text: &str) -> Result<Self> {
        let bytes = hex::decode(text.trim()).map_err(|e| Error::InvalidKey(e.to_string()))?;
        let bytes: [u8; 32] = bytes
            .try_into()
            .map_err(|v: Vec<u8>| Error::InvalidKey(format!("expected 32 bytes, got {}", v.len())))?;
        Ok(SecretKey(bytes))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Draws a fresh key from an RNG (simulation only).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        SecretKey(bytes)
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

/// Per-pulse start-time and base-frequency offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct AgilitySchedule {
    pub phi_t: Vec<usize>,
    pub phi_f: Vec<usize>,
    pub t_offsets_s: Vec<f64>,
    pub f_offsets_hz: Vec<f64>,
}

impl AgilitySchedule {
    /// Builds a schedule from offset indices, checking them against the
    /// configured alphabets.
    pub fn from_indices(config: &ValidatedConfig, phi_t: Vec<usize>, phi_f: Vec<usize>) -> Result<Self> {
        if phi_t.len() != phi_f.len() {
            return Err(Error::PlanLengthMismatch {
                expected: phi_t.len(),
                got: phi_f.len(),
            });
        }
        if let Some(&bad) = phi_t.iter().find(|&&p| p >= config.time_alphabet()) {
            return Err(Error::InvalidArgument(format!(
                "time offset index {bad} outside alphabet of {}",
                config.time_alphabet()
            )));
        }
        if let Some(&bad) = phi_f.iter().find(|&&p| p >= config.freq_alphabet()) {
            return Err(Error::InvalidArgument(format!(
                "frequency offset index {bad} outside alphabet of {}",
                config.freq_alphabet()
            )));
        }
        let t_offsets_s = phi_t.iter().map(|&p| config.time_step_s() * p as f64).collect();
        let f_offsets_hz = phi_f.iter().map(|&p| config.freq_step_hz() * p as f64).collect();
        Ok(AgilitySchedule {
            phi_t,
            phi_f,
            t_offsets_s,
            f_offsets_hz,
        })
    }

    /// No agility: every pulse at the PRI start and the band edge.
    pub fn zero(config: &ValidatedConfig) -> Self {
        let l = config.num_pulses();
        Self::from_indices(config, vec![0; l], vec![0; l]).expect("zero indices are always legal")
    }

    pub fn len(&self) -> usize {
        self.phi_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi_t.is_empty()
    }

    /// First sample of pulse `l` in a frame that starts at t = 0.
    pub fn pulse_start_sample(&self, config: &ValidatedConfig, l: usize) -> usize {
        l * config.samples_per_pri() + self.phi_t[l] * config.samples_per_pulse()
    }

    /// Absolute pulse start time `l*T_p + T_l`.
    pub fn pulse_start_s(&self, config: &ValidatedConfig, l: usize) -> f64 {
        l as f64 * config.pri_s() + self.t_offsets_s[l]
    }

    /// Base frequency of pulse `l` as a DFT bin of a chip-length window.
    pub fn base_bin(&self, config: &ValidatedConfig, l: usize) -> usize {
        self.phi_f[l] * config.num_hops()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "l,phi_t,phi_f,T_l_s,f_l_hz")?;
        for l in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{:e},{:e}",
                l, self.phi_t[l], self.phi_f[l], self.t_offsets_s[l], self.f_offsets_hz[l]
            )?;
        }
        Ok(())
    }
}

/// Keyed pseudorandom index in `0..alphabet` (alphabet a power of two).
fn keyed_index(cipher: &mut ChaCha20Rng, pulse: usize, field: u128, alphabet: usize) -> usize {
    debug_assert!(alphabet.is_power_of_two());
    cipher.set_word_pos((pulse as u128 * 2 + field) * WORDS_PER_BLOCK);
    (cipher.next_u64() & (alphabet as u64 - 1)) as usize
}

/// Alice's and Bob's shared schedule. A pure function of its arguments.
pub fn generate_schedule(key: &SecretKey, config: &ValidatedConfig, stream_id: u64) -> AgilitySchedule {
    let mut cipher = ChaCha20Rng::from_seed(key.0);
    cipher.set_stream(stream_id);
    let l = config.num_pulses();
    let phi_t = (0..l)
        .map(|p| keyed_index(&mut cipher, p, FIELD_TIME, config.time_alphabet()))
        .collect();
    let phi_f = (0..l)
        .map(|p| keyed_index(&mut cipher, p, FIELD_FREQ, config.freq_alphabet()))
        .collect();
    AgilitySchedule::from_indices(config, phi_t, phi_f).expect("masked indices lie in their alphabets")
}

/// Eve's blind guess: uniform and independent of any key.
pub fn adversary_guess_schedule(rng_seed: u64, config: &ValidatedConfig) -> AgilitySchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let l = config.num_pulses();
    let phi_t = (0..l).map(|_| rng.random_range(0..config.time_alphabet())).collect();
    let phi_f = (0..l).map(|_| rng.random_range(0..config.freq_alphabet())).collect();
    AgilitySchedule::from_indices(config, phi_t, phi_f).expect("uniform draws lie in their alphabets")
}
