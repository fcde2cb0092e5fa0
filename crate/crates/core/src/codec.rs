//! Bit mapping for the four embedding schemes.
//!
//! Every chip carries, in this order (most significant bit first within each
//! field):
//!
//! | field        | bits                   | meaning                                   |
//! |--------------|------------------------|-------------------------------------------|
//! | selection    | floor(log2 C(K, M))    | colex rank of the active M-subset of hops |
//! | permutation  | floor(log2 M!)         | Lehmer rank of the subset-to-antenna map  |
//! | antenna 0    | ASK bits, then PSK bits| Gray-coded amplitude and phase indices    |
//! | ...          |                        |                                           |
//! | antenna M-1  | ASK bits, then PSK bits|                                           |
//!
//! Fields a scheme does not use are absent from the bit stream: PH carries
//! only PSK bits, AMP only ASK bits, SIM only selection and permutation, HYB
//! everything. Unused fields take fixed values known to both ends (rank 0
//! subset and permutation, unit amplitude, zero phase).
//!
//! Codebooks are truncated to powers of two: only the first `2^b` subset and
//! permutation ranks are used.
//!
//! Gray maps. Symbol index `j` carries the bit label `j ^ (j >> 1)`:
//!
//! * PSK, J = 4: `00 -> 0`, `01 -> pi/2`, `11 -> pi`, `10 -> 3pi/2`.
//! * ASK, J = 2: `0 -> 1/rms`, `1 -> 2/rms` with levels `1..=J` scaled by
//!   their rms so the mean chip power is one.

use std::f64::consts::TAU;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::combinatorics::{
    binomial_big, colex_rank, colex_unrank, factorial_big, floor_log2, lehmer_rank, lehmer_unrank,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Phase-only embedding.
    Ph,
    /// Amplitude-only embedding.
    Amp,
    /// Spatial index modulation: hop subset and antenna permutation.
    Sim,
    /// All of the above.
    Hyb,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Ph, Scheme::Amp, Scheme::Sim, Scheme::Hyb];

    pub fn uses_hops(self) -> bool {
        matches!(self, Scheme::Sim | Scheme::Hyb)
    }
    pub fn uses_ask(self) -> bool {
        matches!(self, Scheme::Amp | Scheme::Hyb)
    }
    pub fn uses_psk(self) -> bool {
        matches!(self, Scheme::Ph | Scheme::Hyb)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Ph => "PH",
            Scheme::Amp => "AMP",
            Scheme::Sim => "SIM",
            Scheme::Hyb => "HYB",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ph" => Ok(Scheme::Ph),
            "amp" => Ok(Scheme::Amp),
            "sim" => Ok(Scheme::Sim),
            "hyb" => Ok(Scheme::Hyb),
            _ => Err(Error::InvalidArgument(format!("unknown scheme `{s}`"))),
        }
    }
}

/// The subset of the system parameters the bit mapping depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecParams {
    pub num_hops: usize,
    pub num_tx: usize,
    pub ask_order: usize,
    pub psk_order: usize,
}

/// Bits per chip, split by field. `ask` and `psk` are totals over all
/// antennas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitBudget {
    pub selection: usize,
    pub permutation: usize,
    pub ask: usize,
    pub psk: usize,
}

impl BitBudget {
    pub fn total(&self) -> usize {
        self.selection + self.permutation + self.ask + self.psk
    }
}

pub fn bits_per_chip(params: &CodecParams, scheme: Scheme) -> Result<BitBudget> {
    let (k, m) = (params.num_hops, params.num_tx);
    if m > k {
        return Err(Error::TooManyTxAntennas {
            num_tx: m,
            num_hops: k,
        });
    }
    let selection = floor_log2(&binomial_big(k as u64, m as u64)) as usize;
    let permutation = floor_log2(&factorial_big(m as u64)) as usize;
    // Ranks are handled as u128 on the hot path.
    if selection > 127 || permutation > 127 {
        return Err(Error::OverflowGuard { what: "codebook rank" });
    }
    let ask_each = params.ask_order.max(1).ilog2() as usize;
    let psk_each = params.psk_order.max(1).ilog2() as usize;
    Ok(BitBudget {
        selection: if scheme.uses_hops() { selection } else { 0 },
        permutation: if scheme.uses_hops() { permutation } else { 0 },
        ask: if scheme.uses_ask() { m * ask_each } else { 0 },
        psk: if scheme.uses_psk() { m * psk_each } else { 0 },
    })
}

/// Information rate in bit/s: PRF x Q x (active bits per chip).
pub fn achievable_rate(params: &CodecParams, chips_per_pulse: usize, pri_s: f64, scheme: Scheme) -> Result<f64> {
    let budget = bits_per_chip(params, scheme)?;
    Ok((chips_per_pulse * budget.total()) as f64 / pri_s)
}

fn gray(j: usize) -> usize {
    j ^ (j >> 1)
}

fn gray_inverse(mut g: usize) -> usize {
    let mut j = g;
    while g > 1 {
        g >>= 1;
        j ^= g;
    }
    j
}

/// Amplitude levels `1..=J` scaled to unit mean power.
pub fn ask_levels(order: usize) -> Vec<f64> {
    let ms = (1..=order).map(|j| (j * j) as f64).sum::<f64>() / order as f64;
    let rms = ms.sqrt();
    (1..=order).map(|j| j as f64 / rms).collect()
}

pub fn psk_phase(index: usize, order: usize) -> f64 {
    TAU * index as f64 / order as f64
}

/// Nearest amplitude level index.
pub fn slice_amplitude(levels: &[f64], amplitude: f64) -> usize {
    levels
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - amplitude).abs().total_cmp(&(b.1 - amplitude).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Nearest phase index on the `order`-point circle.
pub fn slice_phase(phase: f64, order: usize) -> usize {
    let j = (phase.rem_euclid(TAU) * order as f64 / TAU).round() as usize;
    j % order
}

/// One chip's modulation content.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipSymbols {
    /// Per-antenna amplitude.
    pub amplitudes: Vec<f64>,
    /// Per-antenna phase in `[0, 2pi)`.
    pub phases: Vec<f64>,
    pub selection_rank: u128,
    pub permutation_rank: u128,
    /// Per-antenna hop code, pairwise distinct, each below K.
    pub hop_codes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulsePlan {
    pub scheme: Scheme,
    pub chips: Vec<ChipSymbols>,
}

/// Receiver-side estimate of one chip, before slicing.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipEstimate {
    pub hop_codes: Vec<usize>,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    /// The receiver already doubts this chip (e.g. clamped hop index).
    pub flagged: bool,
    /// Nothing usable was received (e.g. singular channel).
    pub erased: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseEstimate {
    pub chips: Vec<ChipEstimate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChipStatus {
    Ok,
    /// Decoded, but the receiver flagged it.
    Flagged,
    /// Duplicate, out-of-range or out-of-codebook hop codes; zero-filled.
    InvalidHopSet,
    /// Zero-filled erasure.
    Erased,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPulse {
    pub bits: Vec<bool>,
    pub status: Vec<ChipStatus>,
}

impl DecodedPulse {
    pub fn flagged_chips(&self) -> usize {
        self.status.iter().filter(|s| **s != ChipStatus::Ok).count()
    }
}

fn read_field(bits: &[bool], pos: &mut usize, width: usize) -> u128 {
    let v = bits[*pos..*pos + width]
        .iter()
        .fold(0u128, |acc, &b| (acc << 1) | b as u128);
    *pos += width;
    v
}

fn write_field(out: &mut Vec<bool>, value: u128, width: usize) {
    out.extend((0..width).rev().map(|i| (value >> i) & 1 == 1));
}

/// Encoder/decoder for one scheme and parameter set.
#[derive(Debug, Clone)]
pub struct Codec {
    params: CodecParams,
    chips_per_pulse: usize,
    scheme: Scheme,
    budget: BitBudget,
    ask_levels: Vec<f64>,
    ask_bits_each: usize,
    psk_bits_each: usize,
}

impl Codec {
    pub fn new(params: CodecParams, chips_per_pulse: usize, scheme: Scheme) -> Result<Self> {
        let budget = bits_per_chip(&params, scheme)?;
        let m = params.num_tx;
        Ok(Codec {
            params,
            chips_per_pulse,
            scheme,
            budget,
            ask_levels: ask_levels(params.ask_order.max(1)),
            ask_bits_each: budget.ask / m,
            psk_bits_each: budget.psk / m,
        })
    }

    pub fn for_config(config: &crate::params::ValidatedConfig, scheme: Scheme) -> Result<Self> {
        Self::new(config.codec_params(), config.chips_per_pulse(), scheme)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }
    pub fn params(&self) -> &CodecParams {
        &self.params
    }
    pub fn budget(&self) -> BitBudget {
        self.budget
    }
    pub fn bits_per_chip(&self) -> usize {
        self.budget.total()
    }
    pub fn bits_per_pulse(&self) -> usize {
        self.chips_per_pulse * self.budget.total()
    }
    pub fn ask_levels(&self) -> &[f64] {
        &self.ask_levels
    }

    /// Hop codes for a (selection, permutation) rank pair.
    pub fn hop_codes(&self, selection_rank: u128, permutation_rank: u128) -> Result<Vec<usize>> {
        let subset = colex_unrank(selection_rank, self.params.num_tx, self.params.num_hops)?;
        let perm = lehmer_unrank(permutation_rank, self.params.num_tx)?;
        Ok(perm.into_iter().map(|p| subset[p]).collect())
    }

    fn encode_chip(&self, bits: &[bool], pos: &mut usize) -> Result<ChipSymbols> {
        let m = self.params.num_tx;
        let selection_rank = read_field(bits, pos, self.budget.selection);
        let permutation_rank = read_field(bits, pos, self.budget.permutation);
        let hop_codes = self.hop_codes(selection_rank, permutation_rank)?;
        let mut amplitudes = Vec::with_capacity(m);
        let mut phases = Vec::with_capacity(m);
        for _ in 0..m {
            let a = read_field(bits, pos, self.ask_bits_each) as usize;
            let p = read_field(bits, pos, self.psk_bits_each) as usize;
            amplitudes.push(if self.scheme.uses_ask() {
                self.ask_levels[gray_inverse(a)]
            } else {
                1.0
            });
            phases.push(if self.scheme.uses_psk() {
                psk_phase(gray_inverse(p), self.params.psk_order)
            } else {
                0.0
            });
        }
        Ok(ChipSymbols {
            amplitudes,
            phases,
            selection_rank,
            permutation_rank,
            hop_codes,
        })
    }

    /// Encodes one pulse from the head of `bits`; returns the plan and the
    /// number of bits consumed.
    pub fn encode_pulse(&self, bits: &[bool]) -> Result<(PulsePlan, usize)> {
        let needed = self.bits_per_pulse();
        if bits.len() < needed {
            return Err(Error::InsufficientBits {
                needed,
                available: bits.len(),
            });
        }
        let mut pos = 0;
        let chips = (0..self.chips_per_pulse)
            .map(|_| self.encode_chip(bits, &mut pos))
            .collect::<Result<Vec<_>>>()?;
        Ok((
            PulsePlan {
                scheme: self.scheme,
                chips,
            },
            pos,
        ))
    }

    /// Encodes a payload into `num_pulses` pulses, zero-padding the tail.
    pub fn encode_frame(&self, payload: &[bool], num_pulses: usize) -> Result<Vec<PulsePlan>> {
        let capacity = num_pulses * self.bits_per_pulse();
        if payload.len() > capacity {
            return Err(Error::InvalidArgument(format!(
                "payload of {} bits exceeds frame capacity {capacity}",
                payload.len()
            )));
        }
        let mut padded = payload.to_vec();
        padded.resize(capacity, false);
        padded
            .chunks(self.bits_per_pulse().max(1))
            .take(num_pulses)
            .map(|chunk| self.encode_pulse(chunk).map(|(p, _)| p))
            .collect()
    }

    fn decode_hops(&self, hop_codes: &[usize]) -> Option<(u128, u128)> {
        let (k, m) = (self.params.num_hops, self.params.num_tx);
        if hop_codes.len() != m || hop_codes.iter().any(|&c| c >= k) {
            return None;
        }
        let mut subset = hop_codes.to_vec();
        subset.sort_unstable();
        if subset.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        let perm: Vec<usize> = hop_codes
            .iter()
            .map(|c| subset.binary_search(c).expect("value taken from the subset"))
            .collect();
        let sel = colex_rank(&subset).ok()?;
        let per = lehmer_rank(&perm).ok()?;
        let in_book = |rank: u128, width: usize| width >= 128 || rank < (1u128 << width);
        (in_book(sel, self.budget.selection) && in_book(per, self.budget.permutation))
            .then_some((sel, per))
    }

    fn decode_chip(&self, chip: &ChipEstimate, out: &mut Vec<bool>) -> ChipStatus {
        let width = self.bits_per_chip();
        if chip.erased {
            out.extend(std::iter::repeat_n(false, width));
            return ChipStatus::Erased;
        }
        let (sel, per) = if self.scheme.uses_hops() {
            match self.decode_hops(&chip.hop_codes) {
                Some(ranks) => ranks,
                None => {
                    out.extend(std::iter::repeat_n(false, width));
                    return ChipStatus::InvalidHopSet;
                }
            }
        } else {
            (0, 0)
        };
        write_field(out, sel, self.budget.selection);
        write_field(out, per, self.budget.permutation);
        for m in 0..self.params.num_tx {
            if self.ask_bits_each > 0 {
                let j = slice_amplitude(&self.ask_levels, chip.amplitudes[m]);
                write_field(out, gray(j) as u128, self.ask_bits_each);
            }
            if self.psk_bits_each > 0 {
                let j = slice_phase(chip.phases[m], self.params.psk_order);
                write_field(out, gray(j) as u128, self.psk_bits_each);
            }
        }
        if chip.flagged {
            ChipStatus::Flagged
        } else {
            ChipStatus::Ok
        }
    }

    /// Slices and unmaps an estimated pulse. Never fails: unusable chips are
    /// zero-filled and reported in the status vector.
    pub fn decode_pulse(&self, estimate: &PulseEstimate) -> DecodedPulse {
        let mut bits = Vec::with_capacity(self.bits_per_pulse());
        let status = estimate
            .chips
            .iter()
            .map(|chip| self.decode_chip(chip, &mut bits))
            .collect();
        DecodedPulse { bits, status }
    }

    /// Writes the Gray tables and truncated codebooks as CSV
    /// (`table,index,bits,value`).
    pub fn write_tables<W: Write>(&self, mut w: W) -> Result<()> {
        let (k, m) = (self.params.num_hops, self.params.num_tx);
        writeln!(w, "table,index,bits,value")?;
        let label = |v: usize, width: usize| -> String {
            (0..width)
                .rev()
                .map(|i| if (v >> i) & 1 == 1 { '1' } else { '0' })
                .collect()
        };
        let ask_w = self.params.ask_order.ilog2() as usize;
        for (j, level) in self.ask_levels.iter().enumerate() {
            writeln!(w, "ask,{j},{},{level:.17}", label(gray(j), ask_w))?;
        }
        let psk_w = self.params.psk_order.ilog2() as usize;
        for j in 0..self.params.psk_order {
            let phase = psk_phase(j, self.params.psk_order);
            writeln!(w, "psk,{j},{},{phase:.17}", label(gray(j), psk_w))?;
        }
        let sel_w = floor_log2(&binomial_big(k as u64, m as u64)) as usize;
        for r in 0..(1usize << sel_w) {
            let subset = colex_unrank(r as u128, m, k)?;
            let text: Vec<String> = subset.iter().map(|c| c.to_string()).collect();
            writeln!(w, "subset,{r},{},{}", label(r, sel_w), text.join(" "))?;
        }
        let perm_w = floor_log2(&factorial_big(m as u64)) as usize;
        for r in 0..(1usize << perm_w) {
            let perm = lehmer_unrank(r as u128, m)?;
            let text: Vec<String> = perm.iter().map(|c| c.to_string()).collect();
            writeln!(w, "permutation,{r},{},{}", label(r, perm_w), text.join(" "))?;
        }
        Ok(())
    }
}
