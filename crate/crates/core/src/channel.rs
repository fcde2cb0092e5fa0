//! Wiretap MIMO channel: block Rayleigh fading plus white Gaussian noise.
//!
//! One `N x M` matrix per pulse and per party, entries CN(0, 1), held
//! constant over the whole PRI block the pulse lives in. Every output
//! sample, including the inter-pulse silence, gets CN(0, sigma^2) noise.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::{Codec, Scheme};
use crate::error::{Error, Result};
use crate::params::ValidatedConfig;
use crate::waveform::BasebandFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Bob,
    Eve,
}

/// CN(0, variance) draw.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h_bob: Vec<DMatrix<Complex64>>,
    pub h_eve: Vec<DMatrix<Complex64>>,
    pub noise_power_bob: f64,
    pub noise_power_eve: f64,
}

impl ChannelRealization {
    /// Draws Bob's matrices for every pulse, then Eve's.
    pub fn draw<R: Rng + ?Sized>(config: &ValidatedConfig, noise_power_bob: f64, noise_power_eve: f64, rng: &mut R) -> Self {
        let (n, m) = (config.num_rx(), config.num_tx());
        let draw_set = |rng: &mut R| -> Vec<DMatrix<Complex64>> {
            (0..config.num_pulses())
                .map(|_| DMatrix::from_fn(n, m, |_, _| complex_gaussian(rng, 1.0)))
                .collect()
        };
        let h_bob = draw_set(rng);
        let h_eve = draw_set(rng);
        Self {
            h_bob,
            h_eve,
            noise_power_bob,
            noise_power_eve,
        }
    }

    /// Identity matrices for both parties (requires N = M).
    pub fn identity(config: &ValidatedConfig, noise_power: f64) -> Self {
        let eye = DMatrix::identity(config.num_rx(), config.num_tx());
        let h = vec![eye; config.num_pulses()];
        Self {
            h_bob: h.clone(),
            h_eve: h,
            noise_power_bob: noise_power,
            noise_power_eve: noise_power,
        }
    }

    pub fn matrices(&self, party: Party) -> &[DMatrix<Complex64>] {
        match party {
            Party::Bob => &self.h_bob,
            Party::Eve => &self.h_eve,
        }
    }

    pub fn noise_power(&self, party: Party) -> f64 {
        match party {
            Party::Bob => self.noise_power_bob,
            Party::Eve => self.noise_power_eve,
        }
    }

    /// `r = H_l x + v` for every sample of PRI block `l`. Noise is drawn in
    /// sample order, receive antenna fastest; nothing is drawn when the noise
    /// power is zero.
    pub fn apply<R: Rng + ?Sized>(&self, frame: &BasebandFrame, party: Party, config: &ValidatedConfig, rng: &mut R) -> Result<BasebandFrame> {
        let hs = self.matrices(party);
        let (n_rx, m_tx) = (config.num_rx(), config.num_tx());
        if frame.num_antennas() != m_tx {
            return Err(Error::DimensionMismatch {
                expected: format!("{m_tx} transmit rows"),
                got: format!("{} rows", frame.num_antennas()),
            });
        }
        let block = config.samples_per_pri();
        let blocks = frame.len().div_ceil(block);
        if hs.len() < blocks {
            return Err(Error::DimensionMismatch {
                expected: format!("{blocks} channel matrices"),
                got: format!("{}", hs.len()),
            });
        }
        if let Some(h) = hs.iter().find(|h| h.shape() != (n_rx, m_tx)) {
            return Err(Error::DimensionMismatch {
                expected: format!("{n_rx}x{m_tx}"),
                got: format!("{}x{}", h.nrows(), h.ncols()),
            });
        }
        let mut out = DMatrix::zeros(n_rx, frame.len());
        for (l, h) in hs.iter().take(blocks).enumerate() {
            let start = l * block;
            let width = block.min(frame.len() - start);
            let r = h * frame.samples.columns(start, width);
            out.columns_mut(start, width).copy_from(&r);
        }
        let sigma2 = self.noise_power(party);
        if sigma2 > 0.0 {
            for z in out.iter_mut() {
                *z += complex_gaussian(rng, sigma2);
            }
        }
        Ok(BasebandFrame {
            samples: out,
            sample_rate_hz: frame.sample_rate_hz,
            start_time_s: frame.start_time_s,
        })
    }

    /// Long-format dump: `party,l,row,col,re,im`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "party,l,row,col,re,im")?;
        for (party, hs) in [("bob", &self.h_bob), ("eve", &self.h_eve)] {
            for (l, h) in hs.iter().enumerate() {
                for i in 0..h.nrows() {
                    for j in 0..h.ncols() {
                        let z = h[(i, j)];
                        writeln!(w, "{party},{l},{i},{j},{:e},{:e}", z.re, z.im)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Transmit energy per pulse at unit mean symbol power: `M * Q * n_c`.
pub fn pulse_energy(config: &ValidatedConfig) -> f64 {
    (config.num_tx() * config.chips_per_pulse() * config.samples_per_chip()) as f64
}

/// Per-sample noise variance for a given Eb/N0:
/// `sigma^2 = (E_pulse / bits_per_pulse) / 10^(ebn0_db / 10)`.
/// An infinite Eb/N0 gives zero.
pub fn noise_power_from_ebn0(config: &ValidatedConfig, scheme: Scheme, ebn0_db: f64) -> Result<f64> {
    let bits = Codec::for_config(config, scheme)?.bits_per_pulse();
    if bits == 0 {
        return Err(Error::ZeroRateScheme);
    }
    let eb = pulse_energy(config) / bits as f64;
    Ok(eb / 10f64.powf(ebn0_db / 10.0))
}
