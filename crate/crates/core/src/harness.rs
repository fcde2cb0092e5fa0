//! Monte-Carlo experiments and their CSV/JSON artifacts.
//!
//! Every trial owns a ChaCha8 stream selected by `(point << 32) | trial`
//! under the experiment seed, so results do not depend on scheduling.
//! Draw order inside a trial: key, payload bits, channel matrices, Bob's
//! noise, Eve's noise, Eve's guess seed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{af_expectation, af_grid, draw_key, AfGrid, AfMethod, AfSource, Steering};
use crate::channel::{noise_power_from_ebn0, ChannelRealization, Party};
use crate::codec::{achievable_rate, bits_per_chip, Codec, CodecParams, PulsePlan, Scheme};
use crate::error::{Error, Result};
use crate::keyschedule::{generate_schedule, SecretKey};
use crate::params::{validate, SystemConfig, ValidatedConfig};
use crate::receiver::{eve_schedule, EveStrategy, ReceiverOptions, SparseReceiver};
use crate::waveform::synthesize;

/// Version of every CSV layout written here.
pub const CSV_SCHEMA: u32 = 1;
/// Smallest bit count a reported BER point may rest on.
pub const MIN_REPORTED_BITS: u64 = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub config: SystemConfig,
    pub scheme: Scheme,
    pub ebn0_grid_db: Vec<f64>,
    pub trials: usize,
    pub bits_min: u64,
    pub seed: u64,
    pub eve_strategy: EveStrategy,
    pub receiver: ReceiverOptions,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            config: SystemConfig::default(),
            scheme: Scheme::Hyb,
            ebn0_grid_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            trials: 1,
            bits_min: 10_000,
            seed: 0,
            eve_strategy: EveStrategy::BlindUniform,
            receiver: ReceiverOptions::default(),
        }
    }
}

impl ExperimentSpec {
    fn check(&self) -> Result<ValidatedConfig> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.bits_min < MIN_REPORTED_BITS {
            return Err(Error::InvalidArgument(format!("bits_min must be at least {MIN_REPORTED_BITS}")));
        }
        if self.ebn0_grid_db.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("Eb/N0 grid contains NaN".into()));
        }
        validate(self.config.clone())
    }

    /// Trials actually run per point so that `bits_min` is reached.
    pub fn effective_trials(&self, bits_per_trial: u64) -> usize {
        self.trials.max(self.bits_min.div_ceil(bits_per_trial.max(1)) as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub ebn0_db: f64,
    pub ber_bob: f64,
    pub ber_eve: f64,
    pub bits_counted: u64,
    pub bob_errors: u64,
    pub eve_errors: u64,
    pub flagged_chips: u64,
    pub eve_flagged_chips: u64,
    pub trials: usize,
    /// Set when the point was aborted; the counts are then zero.
    pub error: Option<String>,
}

impl BerPoint {
    /// Binomial standard error of Bob's estimate.
    pub fn bob_std(&self) -> f64 {
        binomial_std(self.ber_bob, self.bits_counted)
    }

    pub fn eve_std(&self) -> f64 {
        binomial_std(self.ber_eve, self.bits_counted)
    }
}

fn binomial_std(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    bits: u64,
    bob_errors: u64,
    eve_errors: u64,
    bob_flagged: u64,
    eve_flagged: u64,
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            bits: self.bits + o.bits,
            bob_errors: self.bob_errors + o.bob_errors,
            eve_errors: self.eve_errors + o.eve_errors,
            bob_flagged: self.bob_flagged + o.bob_flagged,
            eve_flagged: self.eve_flagged + o.eve_flagged,
        }
    }
}

fn trial_rng(seed: u64, point: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | trial as u64);
    rng
}

fn errors(a: &[bool], b: &[bool]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

struct TrialSetup<'a> {
    config: &'a ValidatedConfig,
    codec: &'a Codec,
    receiver: &'a SparseReceiver,
    strategy: EveStrategy,
    noise_power: f64,
}

fn run_trial(s: &TrialSetup<'_>, mut rng: ChaCha8Rng) -> Result<Counts> {
    let cfg = s.config;
    let key = SecretKey::random(&mut rng);
    let schedule = generate_schedule(&key, cfg, 0);
    let n_bits = cfg.num_pulses() * s.codec.bits_per_pulse();
    let bits: Vec<bool> = (0..n_bits).map(|_| rng.random()).collect();
    let plans = s.codec.encode_frame(&bits, cfg.num_pulses())?;
    let frame = synthesize(&plans, &schedule, cfg)?;
    let channel = ChannelRealization::draw(cfg, s.noise_power, s.noise_power, &mut rng);
    let rx_bob = channel.apply(&frame, Party::Bob, cfg, &mut rng)?;
    let rx_eve = channel.apply(&frame, Party::Eve, cfg, &mut rng)?;
    let guess = eve_schedule(s.strategy, &schedule, cfg, rng.next_u64());

    let (bob_bits, bob_flagged) = s.receiver.receive_frame(&rx_bob, channel.matrices(Party::Bob), &schedule, s.codec);
    let (eve_bits, eve_flagged) = s.receiver.receive_frame(&rx_eve, channel.matrices(Party::Eve), &guess, s.codec);
    Ok(Counts {
        bits: n_bits as u64,
        bob_errors: errors(&bits, &bob_bits),
        eve_errors: errors(&bits, &eve_bits),
        bob_flagged: bob_flagged as u64,
        eve_flagged: eve_flagged as u64,
    })
}

/// One BER point per grid entry; `f64::INFINITY` switches the noise off.
pub fn run_ber_sweep(spec: &ExperimentSpec) -> Result<Vec<BerPoint>> {
    let cfg = spec.check()?;
    let codec = Codec::for_config(&cfg, spec.scheme)?;
    let receiver = SparseReceiver::new(&cfg, spec.scheme, spec.receiver);
    let bits_per_trial = (cfg.num_pulses() * codec.bits_per_pulse()) as u64;
    if bits_per_trial == 0 {
        return Err(Error::ZeroRateScheme);
    }
    let trials = spec.effective_trials(bits_per_trial);

    let points = spec
        .ebn0_grid_db
        .iter()
        .enumerate()
        .map(|(p, &ebn0_db)| {
            let outcome = noise_power_from_ebn0(&cfg, spec.scheme, ebn0_db).and_then(|noise_power| {
                let setup = TrialSetup {
                    config: &cfg,
                    codec: &codec,
                    receiver: &receiver,
                    strategy: spec.eve_strategy,
                    noise_power,
                };
                (0..trials)
                    .into_par_iter()
                    .map(|t| run_trial(&setup, trial_rng(spec.seed, p, t)))
                    .try_reduce(Counts::default, |a, b| Ok(a + b))
            });
            match outcome {
                Ok(c) => BerPoint {
                    ebn0_db,
                    ber_bob: c.bob_errors as f64 / c.bits as f64,
                    ber_eve: c.eve_errors as f64 / c.bits as f64,
                    bits_counted: c.bits,
                    bob_errors: c.bob_errors,
                    eve_errors: c.eve_errors,
                    flagged_chips: c.bob_flagged,
                    eve_flagged_chips: c.eve_flagged,
                    trials,
                    error: None,
                },
                Err(e) => BerPoint {
                    ebn0_db,
                    ber_bob: 0.0,
                    ber_eve: 0.0,
                    bits_counted: 0,
                    bob_errors: 0,
                    eve_errors: 0,
                    flagged_chips: 0,
                    eve_flagged_chips: 0,
                    trials,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(points)
}

pub const BER_HEADER: &str =
    "scheme,ebn0_db,ber_bob,ber_eve,bits_counted,bob_errors,eve_errors,flagged_chips,eve_flagged_chips,trials,status";

pub fn write_ber_csv<W: Write>(mut w: W, scheme: Scheme, points: &[BerPoint]) -> Result<()> {
    writeln!(w, "{BER_HEADER}")?;
    for p in points {
        let status = match &p.error {
            None => "ok".to_string(),
            Some(e) => format!("aborted: {}", e.replace([',', '\n'], ";")),
        };
        writeln!(
            w,
            "{scheme},{},{:e},{:e},{},{},{},{},{},{},{status}",
            p.ebn0_db, p.ber_bob, p.ber_eve, p.bits_counted, p.bob_errors, p.eve_errors, p.flagged_chips, p.eve_flagged_chips, p.trials
        )?;
    }
    Ok(())
}

fn binary_entropy(p: f64) -> f64 {
    let p = p.clamp(1e-12, 0.5);
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// Secrecy proxy per point: both links treated as binary symmetric channels,
/// `[H(ber_eve) - H(ber_bob)]+` bits per transmitted bit. A proxy, not the
/// secrecy capacity.
pub fn estimate_secrecy(points: &[BerPoint]) -> Vec<(f64, f64)> {
    points
        .iter()
        .filter(|p| p.error.is_none())
        .map(|p| {
            let bob = 1.0 - binary_entropy(p.ber_bob);
            let eve = 1.0 - binary_entropy(p.ber_eve);
            (p.ebn0_db, (bob - eve).max(0.0))
        })
        .collect()
}

pub fn write_secrecy_csv<W: Write>(mut w: W, scheme: Scheme, rows: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "scheme,ebn0_db,secrecy_bits_per_bit")?;
    for (e, c) in rows {
        writeln!(w, "{scheme},{e},{c:e}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub num_tx: usize,
    pub scheme: Scheme,
    pub bits_per_chip: usize,
    pub bits_per_pulse: usize,
    pub bits_per_s: f64,
}

/// Rate versus M for a fixed K; Q, PRI and the constellation orders come
/// from `template`.
pub fn run_rate_sweep(template: &SystemConfig, num_hops: usize, num_tx: std::ops::RangeInclusive<usize>, schemes: &[Scheme]) -> Result<Vec<RateRow>> {
    if *num_tx.start() == 0 || *num_tx.end() > num_hops {
        return Err(Error::InvalidArgument(format!(
            "M range {}..={} outside 1..={num_hops}",
            num_tx.start(),
            num_tx.end()
        )));
    }
    let mut rows = Vec::new();
    for m in num_tx {
        let params = CodecParams {
            num_hops,
            num_tx: m,
            ask_order: template.ask_order,
            psk_order: template.psk_order,
        };
        for &scheme in schemes {
            let per_chip = bits_per_chip(&params, scheme)?.total();
            rows.push(RateRow {
                num_tx: m,
                scheme,
                bits_per_chip: per_chip,
                bits_per_pulse: per_chip * template.chips_per_pulse,
                bits_per_s: achievable_rate(&params, template.chips_per_pulse, template.pri_s, scheme)?,
            });
        }
    }
    Ok(rows)
}

pub fn write_rate_csv<W: Write>(mut w: W, rows: &[RateRow]) -> Result<()> {
    writeln!(w, "num_tx,scheme,bits_per_chip,bits_per_pulse,bits_per_s")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.num_tx, r.scheme, r.bits_per_chip, r.bits_per_pulse, r.bits_per_s)?;
    }
    Ok(())
}

/// Symmetric axis `-n*step ..= n*step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub step: f64,
    pub half_points: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        let n = self.half_points as i64;
        (-n..=n).map(|i| i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AfJob {
    pub config: SystemConfig,
    pub schemes: Vec<Scheme>,
    /// Delay axis; `None` means one sample period steps over four chips.
    pub delay: Option<Axis>,
    /// Doppler axis; `None` means hop-spacing/32 steps over four hop spacings.
    pub doppler: Option<Axis>,
    pub steering: Steering,
    pub methods: Vec<AfMethod>,
    /// Schedules averaged in the expectation cuts; 0 skips them.
    pub expectation_draws: usize,
    pub expectation_method: AfMethod,
    pub seed: u64,
}

impl Default for AfJob {
    fn default() -> Self {
        Self {
            config: SystemConfig::default(),
            schemes: Scheme::ALL.to_vec(),
            delay: None,
            doppler: None,
            steering: Steering::default(),
            methods: vec![AfMethod::Numerical, AfMethod::ClosedForm],
            expectation_draws: 16,
            expectation_method: AfMethod::ClosedForm,
            seed: 0,
        }
    }
}

impl AfJob {
    pub fn delay_axis(&self, cfg: &ValidatedConfig) -> Axis {
        self.delay.unwrap_or(Axis {
            step: 1.0 / cfg.sample_rate_hz(),
            half_points: 4 * cfg.samples_per_chip(),
        })
    }

    pub fn doppler_axis(&self, cfg: &ValidatedConfig) -> Axis {
        self.doppler.unwrap_or(Axis {
            step: cfg.hop_spacing_hz() / 32.0,
            half_points: 128,
        })
    }
}

/// Payload plans and keyed schedule used for one scheme in an AF job.
pub fn af_waveform(job: &AfJob, cfg: &ValidatedConfig, scheme: Scheme) -> Result<(Vec<PulsePlan>, crate::keyschedule::AgilitySchedule)> {
    let codec = Codec::for_config(cfg, scheme)?;
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    rng.set_stream(scheme as u64);
    let bits: Vec<bool> = (0..cfg.num_pulses() * codec.bits_per_pulse()).map(|_| rng.random()).collect();
    let plans = codec.encode_frame(&bits, cfg.num_pulses())?;
    let schedule = generate_schedule(&draw_key(job.seed, u64::MAX - scheme as u64), cfg, 0);
    Ok((plans, schedule))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfArtifact {
    pub name: String,
    pub grid: AfGrid,
}

fn method_tag(m: AfMethod) -> &'static str {
    match m {
        AfMethod::Numerical => "numerical",
        AfMethod::ClosedForm => "closed_form",
    }
}

/// Zero-Doppler and zero-delay cuts per scheme and method, plus the
/// expectation cuts. Names follow `af_<scheme>_<source>_<cut>`.
pub fn run_af_job(job: &AfJob) -> Result<Vec<AfArtifact>> {
    let cfg = validate(job.config.clone())?;
    let delays = job.delay_axis(&cfg).values();
    let dopplers = job.doppler_axis(&cfg).values();
    let mut out = Vec::new();
    for &scheme in &job.schemes {
        let tag = scheme.to_string().to_lowercase();
        let (plans, schedule) = af_waveform(job, &cfg, scheme)?;
        let frame = if job.methods.contains(&AfMethod::Numerical) {
            Some(synthesize(&plans, &schedule, &cfg)?)
        } else {
            None
        };
        for &method in &job.methods {
            let source = match method {
                AfMethod::Numerical => AfSource::Numerical(frame.as_ref().expect("synthesized above")),
                AfMethod::ClosedForm => AfSource::ClosedForm {
                    plans: &plans,
                    schedule: &schedule,
                },
            };
            let m = method_tag(method);
            out.push(AfArtifact {
                name: format!("af_{tag}_{m}_zero_doppler"),
                grid: af_grid(source, &delays, &[0.0], job.steering, &cfg, false)?.peak_normalized(),
            });
            out.push(AfArtifact {
                name: format!("af_{tag}_{m}_zero_delay"),
                grid: af_grid(source, &[0.0], &dopplers, job.steering, &cfg, false)?.peak_normalized(),
            });
        }
        if job.expectation_draws > 0 {
            let r = job.expectation_draws;
            let m = job.expectation_method;
            out.push(AfArtifact {
                name: format!("af_{tag}_expectation_zero_doppler"),
                grid: af_expectation(r, &plans, &cfg, &delays, &[0.0], job.steering, m, job.seed)?.peak_normalized(),
            });
            out.push(AfArtifact {
                name: format!("af_{tag}_expectation_zero_delay"),
                grid: af_expectation(r, &plans, &cfg, &[0.0], &dopplers, job.steering, m, job.seed)?.peak_normalized(),
            });
        }
    }
    Ok(out)
}

/// Writes `<name>.csv` and `<name>.json` per artifact into `dir`.
pub fn write_af_artifacts(dir: &Path, artifacts: &[AfArtifact]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for a in artifacts {
        let csv = dir.join(format!("{}.csv", a.name));
        a.grid.write_csv(fs::File::create(&csv)?)?;
        let json = dir.join(format!("{}.json", a.name));
        fs::write(&json, serde_json::to_string_pretty(&a.grid.metadata())?)?;
        paths.push(csv);
        paths.push(json);
    }
    Ok(paths)
}

/// `meta.json`: the resolved job description, code version and schema.
pub fn write_meta(dir: &Path, command: &str, resolved: serde_json::Value) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let meta = serde_json::json!({
        "command": command,
        "code_version": env!("CARGO_PKG_VERSION"),
        "csv_schema": CSV_SCHEMA,
        "spec": resolved,
    });
    let path = dir.join("meta.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(path)
}
