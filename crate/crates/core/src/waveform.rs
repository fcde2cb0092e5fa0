//! Sampled multi-antenna baseband synthesis.
//!
//! Chip `q` of pulse `l` on antenna `m` is the tone
//! `a * exp(i*Omega) * exp(i*2*pi*(f_l + c*df)*(t - l*T_p - T_l))`
//! over a rectangular window of one chip duration. Because `fs/n_c = df` and
//! `f_l` is a multiple of `K*df`, every tone sits on an integer bin of a
//! chip-length DFT and the phase at sample `n` of any chip reduces to
//! `((bin * n) mod n_c) / n_c` cycles. Synthesis uses that exact form.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::codec::PulsePlan;
use crate::error::{Error, Result};
use crate::keyschedule::AgilitySchedule;
use crate::params::ValidatedConfig;

const MAGIC: &[u8; 8] = b"RFPAIQ01";

/// Complex baseband samples, one row per antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandFrame {
    pub samples: DMatrix<Complex64>,
    pub sample_rate_hz: f64,
    pub start_time_s: f64,
}

impl BasebandFrame {
    pub fn zeros(rows: usize, cols: usize, sample_rate_hz: f64) -> Self {
        Self {
            samples: DMatrix::zeros(rows, cols),
            sample_rate_hz,
            start_time_s: 0.0,
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    /// Sum of |x|^2 over all samples (sample-domain energy).
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn row_energy(&self, row: usize) -> f64 {
        self.samples.row(row).iter().map(|z| z.norm_sqr()).sum()
    }

    /// Raw dump: 8-byte magic, sample rate (f64), start time (f64), rows
    /// (u64), cols (u64), then row-major interleaved re/im f64 pairs. All
    /// little endian.
    pub fn write_raw<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.sample_rate_hz.to_le_bytes())?;
        w.write_all(&self.start_time_s.to_le_bytes())?;
        w.write_all(&(self.samples.nrows() as u64).to_le_bytes())?;
        w.write_all(&(self.samples.ncols() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.samples.ncols() * 16);
        for row in self.samples.row_iter() {
            buf.clear();
            for z in row.iter() {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_raw<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::InvalidArgument("not a baseband frame dump".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let sample_rate_hz = f64::from_le_bytes(next(&mut r)?);
        let start_time_s = f64::from_le_bytes(next(&mut r)?);
        let rows = u64::from_le_bytes(next(&mut r)?) as usize;
        let cols = u64::from_le_bytes(next(&mut r)?) as usize;
        let mut samples = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let re = f64::from_le_bytes(next(&mut r)?);
                let im = f64::from_le_bytes(next(&mut r)?);
                samples[(i, j)] = Complex64::new(re, im);
            }
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            start_time_s,
        })
    }
}

/// The `n` roots of unity, `w[k] = exp(i*2*pi*k/n)`.
pub fn roots_of_unity(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::cis(TAU * k as f64 / n as f64))
        .collect()
}

/// One chip of the integer-bin tone `exp(i*2*pi*bin*n/n_c)`.
pub fn chip_tone(bin: usize, roots: &[Complex64]) -> Vec<Complex64> {
    let n_c = roots.len();
    (0..n_c).map(|n| roots[(bin * n) % n_c]).collect()
}

/// Sample ranges occupied by each pulse.
pub fn active_windows(config: &ValidatedConfig, schedule: &AgilitySchedule) -> Vec<Range<usize>> {
    (0..schedule.len())
        .map(|l| {
            let s = schedule.pulse_start_sample(config, l);
            s..s + config.samples_per_pulse()
        })
        .collect()
}

pub fn synthesize(plans: &[PulsePlan], schedule: &AgilitySchedule, config: &ValidatedConfig) -> Result<BasebandFrame> {
    let num_pulses = config.num_pulses();
    if plans.len() != num_pulses {
        return Err(Error::PlanLengthMismatch {
            expected: num_pulses,
            got: plans.len(),
        });
    }
    if schedule.len() != num_pulses {
        return Err(Error::PlanLengthMismatch {
            expected: num_pulses,
            got: schedule.len(),
        });
    }
    let m_tx = config.num_tx();
    let n_c = config.samples_per_chip();
    let roots = roots_of_unity(n_c);
    let mut frame = BasebandFrame::zeros(m_tx, config.frame_len(), config.sample_rate_hz());
    for (l, plan) in plans.iter().enumerate() {
        if plan.chips.len() != config.chips_per_pulse() {
            return Err(Error::PlanLengthMismatch {
                expected: config.chips_per_pulse(),
                got: plan.chips.len(),
            });
        }
        let start = schedule.pulse_start_sample(config, l);
        let base = schedule.base_bin(config, l);
        for (q, chip) in plan.chips.iter().enumerate() {
            let chip_start = start + q * n_c;
            for m in 0..m_tx {
                let bin = base + chip.hop_codes[m];
                let symbol = Complex64::from_polar(chip.amplitudes[m], chip.phases[m]);
                for n in 0..n_c {
                    frame.samples[(m, chip_start + n)] = symbol * roots[(bin * n) % n_c];
                }
            }
        }
    }
    Ok(frame)
}

/// The K hop references of pulse `l` over one chip: row `k` is the tone at
/// `f_l + k*df`, phase-referenced to the chip start.
pub fn chip_reference_vector(config: &ValidatedConfig, schedule: &AgilitySchedule, l: usize) -> DMatrix<Complex64> {
    let n_c = config.samples_per_chip();
    let roots = roots_of_unity(n_c);
    let base = schedule.base_bin(config, l);
    DMatrix::from_fn(config.num_hops(), n_c, |k, n| roots[((base + k) * n) % n_c])
}
