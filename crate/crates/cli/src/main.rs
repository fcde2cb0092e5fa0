use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rfpa_core::ambiguity::{AfMethod, Steering};
use rfpa_core::codec::{Codec, Scheme};
use rfpa_core::harness::{
    estimate_secrecy, run_af_job, run_ber_sweep, run_rate_sweep, write_af_artifacts, write_ber_csv, write_meta, write_rate_csv, write_secrecy_csv, AfJob, Axis,
    ExperimentSpec,
};
use rfpa_core::keyschedule::{generate_schedule, SecretKey};
use rfpa_core::params::{validate, SystemConfig};
use rfpa_core::receiver::{EveStrategy, HopSearch, MatchedFilterMode, ReceiverOptions};

#[derive(Parser)]
#[command(name = "rfpa", version, about = "Frequency-hopping MIMO DFRC simulator with keyed pulse agility")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// System configuration (JSON); defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Pulses per frame (L).
    #[arg(long, global = true)]
    num_pulses: Option<usize>,
    /// Transmit antennas (M).
    #[arg(long, global = true)]
    num_tx: Option<usize>,
    /// Receive antennas (N).
    #[arg(long, global = true)]
    num_rx: Option<usize>,
    /// Hop frequencies (K).
    #[arg(long, global = true)]
    num_hops: Option<usize>,
    /// Chips per pulse (Q).
    #[arg(long, global = true)]
    chips_per_pulse: Option<usize>,
    #[arg(long, global = true)]
    ask_order: Option<usize>,
    #[arg(long, global = true)]
    psk_order: Option<usize>,
    #[arg(long, global = true)]
    carrier_freq_hz: Option<f64>,
    #[arg(long, global = true)]
    bandwidth_hz: Option<f64>,
    /// Pulse width (tau).
    #[arg(long, global = true)]
    pulse_duration_s: Option<f64>,
    #[arg(long, global = true)]
    pri_s: Option<f64>,
    #[arg(long, global = true)]
    sample_rate_hz: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and print the derived quantities.
    Validate {
        #[arg(long)]
        describe: bool,
    },
    /// Monte-Carlo BER sweep for Bob and Eve.
    Ber(BerArgs),
    /// Achievable rate versus transmit antenna count.
    Rate(RateArgs),
    /// Ambiguity-function cuts.
    Af(AfArgs),
    /// Write the keyed agility schedule.
    ScheduleDump {
        /// 64 hex digits; derived from --seed when absent.
        #[arg(long)]
        key: Option<String>,
        #[arg(long, default_value_t = 0)]
        stream: u64,
    },
    /// Codebook utilities.
    Codec {
        #[command(subcommand)]
        command: CodecCommand,
    },
}

#[derive(Subcommand)]
enum CodecCommand {
    /// Write the ASK, PSK, subset and permutation tables.
    DumpTables {
        #[arg(long, default_value = "hyb")]
        scheme: Scheme,
    },
}

#[derive(Args)]
struct BerArgs {
    /// Comma-separated schemes, or `all`.
    #[arg(long, default_value = "all")]
    schemes: String,
    /// Comma-separated Eb/N0 points in dB; `inf` switches the noise off.
    #[arg(long, default_value = "0,5,10,15,20,25,30")]
    ebn0: String,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 10_000)]
    bits_min: u64,
    #[arg(long, default_value = "blind-uniform")]
    eve: EveStrategy,
    #[command(flatten)]
    receiver: ReceiverArgs,
}

#[derive(Args)]
struct ReceiverArgs {
    #[arg(long, value_parser = parse_hop_search, default_value = "joint-band")]
    hop_search: HopSearch,
    #[arg(long, value_parser = parse_matched_filter, default_value = "per-antenna")]
    matched_filter: MatchedFilterMode,
}

#[derive(Args)]
struct RateArgs {
    /// K for the sweep; the configuration's K when absent.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 1)]
    m_min: usize,
    /// Defaults to K.
    #[arg(long)]
    m_max: Option<usize>,
    #[arg(long, default_value = "all")]
    schemes: String,
}

#[derive(Args)]
struct AfArgs {
    #[arg(long, default_value = "all")]
    schemes: String,
    /// Comma-separated sources: numerical, closed-form.
    #[arg(long, default_value = "numerical,closed-form")]
    methods: String,
    /// Schedules averaged for the expectation cuts (0 skips them).
    #[arg(long, default_value_t = 16)]
    draws: usize,
    #[arg(long, value_parser = parse_method, default_value = "closed-form")]
    expectation_method: AfMethod,
    /// Delay step in seconds; one sample period when absent.
    #[arg(long)]
    delay_step: Option<f64>,
    #[arg(long)]
    delay_points: Option<usize>,
    /// Doppler step in hertz; hop spacing / 32 when absent.
    #[arg(long)]
    doppler_step: Option<f64>,
    #[arg(long)]
    doppler_points: Option<usize>,
    /// Spatial frequency of the first steering vector.
    #[arg(long, default_value_t = 0.0)]
    f: f64,
    /// Spatial frequency of the second steering vector.
    #[arg(long, default_value_t = 0.0)]
    f2: f64,
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
}

fn parse_hop_search(s: &str) -> Result<HopSearch, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("expected full-dft, hop-band or joint-band, got `{s}`"))
}

fn parse_matched_filter(s: &str) -> Result<MatchedFilterMode, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("expected per-antenna or antenna-sum, got `{s}`"))
}

fn parse_method(s: &str) -> Result<AfMethod, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("expected numerical or closed-form, got `{s}`"))
}

fn parse_schemes(s: &str) -> Result<Vec<Scheme>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Scheme::ALL.to_vec());
    }
    s.split(',').map(|t| Ok(t.trim().parse::<Scheme>()?)).collect()
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            if t.eq_ignore_ascii_case("inf") {
                Ok(f64::INFINITY)
            } else {
                t.parse::<f64>().with_context(|| format!("bad Eb/N0 value `{t}`"))
            }
        })
        .collect()
}

impl Common {
    fn system_config(&self) -> Result<SystemConfig> {
        let mut cfg = match &self.config {
            Some(path) => SystemConfig::from_json_file(path).with_context(|| format!("reading {}", path.display()))?,
            None => SystemConfig::default(),
        };
        let overrides = [
            (&mut cfg.num_pulses, self.num_pulses),
            (&mut cfg.num_tx, self.num_tx),
            (&mut cfg.num_rx, self.num_rx),
            (&mut cfg.num_hops, self.num_hops),
            (&mut cfg.chips_per_pulse, self.chips_per_pulse),
            (&mut cfg.ask_order, self.ask_order),
            (&mut cfg.psk_order, self.psk_order),
        ];
        for (field, value) in overrides {
            if let Some(v) = value {
                *field = v;
            }
        }
        let reals = [
            (&mut cfg.carrier_freq_hz, self.carrier_freq_hz),
            (&mut cfg.bandwidth_hz, self.bandwidth_hz),
            (&mut cfg.pulse_duration_s, self.pulse_duration_s),
            (&mut cfg.pri_s, self.pri_s),
            (&mut cfg.sample_rate_hz, self.sample_rate_hz),
        ];
        for (field, value) in reals {
            if let Some(v) = value {
                *field = v;
            }
        }
        Ok(cfg)
    }
}

fn create(dir: &Path, name: &str) -> Result<fs::File> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::File::create(&path).with_context(|| format!("creating {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let common = &cli.common;
    if common.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(common.threads).build_global()?;
    }
    let config = common.system_config()?;
    let out = &common.out_dir;

    match cli.command {
        Command::Validate { describe } => {
            let v = validate(config)?;
            if describe {
                println!("{}", v.to_string().trim_end());
            } else {
                println!("ok");
            }
        }
        Command::Ber(args) => {
            let receiver = ReceiverOptions {
                matched_filter: args.receiver.matched_filter,
                hop_search: args.receiver.hop_search,
            };
            let mut ber = Vec::new();
            let mut secrecy = Vec::new();
            let mut specs = Vec::new();
            let mut aborted = 0;
            for scheme in parse_schemes(&args.schemes)? {
                let spec = ExperimentSpec {
                    config: config.clone(),
                    scheme,
                    ebn0_grid_db: parse_grid(&args.ebn0)?,
                    trials: args.trials,
                    bits_min: args.bits_min,
                    seed: common.seed,
                    eve_strategy: args.eve,
                    receiver,
                };
                let points = run_ber_sweep(&spec)?;
                aborted += points.iter().filter(|p| p.error.is_some()).count();
                write_ber_csv(&mut ber, scheme, &points)?;
                write_secrecy_csv(&mut secrecy, scheme, &estimate_secrecy(&points))?;
                specs.push(spec);
            }
            fs::create_dir_all(out)?;
            fs::write(out.join("ber.csv"), dedup_headers(&ber))?;
            fs::write(out.join("secrecy.csv"), dedup_headers(&secrecy))?;
            let resolved: Vec<_> = specs
                .iter()
                .map(|s| {
                    let mut v = serde_json::to_value(s).expect("spec serializes");
                    // JSON has no infinity; keep the grid readable.
                    v["ebn0_grid_db"] = s.ebn0_grid_db.iter().map(|e| if e.is_finite() { serde_json::json!(e) } else { serde_json::json!("inf") }).collect();
                    v
                })
                .collect();
            write_meta(out, "ber", serde_json::json!(resolved))?;
            if aborted > 0 {
                eprintln!("{aborted} point(s) aborted; see the status column");
            }
        }
        Command::Rate(args) => {
            let k = args.k.unwrap_or(config.num_hops);
            let m_max = args.m_max.unwrap_or(k);
            if args.m_min > m_max {
                bail!("--m-min exceeds --m-max");
            }
            let rows = run_rate_sweep(&config, k, args.m_min..=m_max, &parse_schemes(&args.schemes)?)?;
            write_rate_csv(create(out, "rate.csv")?, &rows)?;
            write_meta(
                out,
                "rate",
                serde_json::json!({ "config": config, "num_hops": k, "num_tx": [args.m_min, m_max] }),
            )?;
        }
        Command::Af(args) => {
            let methods = args
                .methods
                .split(',')
                .map(|m| parse_method(m.trim()).map_err(anyhow::Error::msg))
                .collect::<Result<Vec<_>>>()?;
            let cfg = validate(config.clone())?;
            let mut job = AfJob {
                config,
                schemes: parse_schemes(&args.schemes)?,
                methods,
                expectation_draws: args.draws,
                expectation_method: args.expectation_method,
                steering: Steering {
                    f: args.f,
                    f2: args.f2,
                    spacing: args.spacing,
                },
                seed: common.seed,
                ..AfJob::default()
            };
            let d = job.delay_axis(&cfg);
            job.delay = Some(Axis {
                step: args.delay_step.unwrap_or(d.step),
                half_points: args.delay_points.unwrap_or(d.half_points),
            });
            let n = job.doppler_axis(&cfg);
            job.doppler = Some(Axis {
                step: args.doppler_step.unwrap_or(n.step),
                half_points: args.doppler_points.unwrap_or(n.half_points),
            });
            let artifacts = run_af_job(&job)?;
            write_af_artifacts(out, &artifacts)?;
            write_meta(out, "af", serde_json::to_value(&job)?)?;
        }
        Command::ScheduleDump { key, stream } => {
            let cfg = validate(config.clone())?;
            let key = match key {
                Some(hex) => SecretKey::from_hex(&hex)?,
                None => rfpa_core::ambiguity::draw_key(common.seed, 0),
            };
            let schedule = generate_schedule(&key, &cfg, stream);
            schedule.write_csv(create(out, "schedule.csv")?)?;
            write_meta(out, "schedule-dump", serde_json::json!({ "config": config, "stream": stream }))?;
        }
        Command::Codec {
            command: CodecCommand::DumpTables { scheme },
        } => {
            let cfg = validate(config.clone())?;
            let codec = Codec::for_config(&cfg, scheme)?;
            codec.write_tables(create(out, "codec_tables.csv")?)?;
            write_meta(out, "codec dump-tables", serde_json::json!({ "config": config, "scheme": scheme }))?;
        }
    }
    Ok(())
}

/// Concatenated per-scheme CSV blocks share one header line.
fn dedup_headers(buf: &[u8]) -> String {
    let text = String::from_utf8_lossy(buf);
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return String::new();
    };
    let mut out = format!("{header}\n");
    for line in lines.filter(|l| *l != header) {
        out.push_str(line);
        out.push('\n');
    }
    out
}
