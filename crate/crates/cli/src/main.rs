use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcfh::dpss::DpssCache;
use mcfh::error::Error;
use mcfh::experiments::{self, ExperimentConfig};
use mcfh::mc_sampler::{self, McConfig};
use mcfh::preprocessing;
use mcfh::recovery::{self, Dictionary, EngineOptions, KnownSupport, MmvSolver, Music, SolverId, Somp};
use mcfh::signal::ComplexSignal;
use mcfh::{io, Result};

#[derive(Parser)]
#[command(name = "mcfh", version, about = "Multi-coset sampling and segment-based recovery of frequency-hopping signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one trial of the hopping class and its hop ground truth.
    Generate(GenerateArgs),
    /// Run the multi-coset sampler over a dense signal file.
    Sample(SampleArgs),
    /// Recover a dense signal from a coset directory, segment by segment.
    Recover(RecoverArgs),
    /// NMSE and mean support size against segment width r.
    ExpNmseR(ExperimentArgs),
    /// NMSE against channel count q.
    ExpNmseQ(ExperimentArgs),
    /// DPSS dictionary fidelity and solver latency.
    ExpDpss(ExperimentArgs),
    /// Short-time power spectrum of a signal file as CSV.
    Spectrogram(SpectrogramArgs),
}

/// Settings shared with the key=value configuration file. Flags win over the file.
#[derive(Args, Default)]
struct ConfigArgs {
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of radios N
    #[arg(long)]
    n: Option<usize>,
    /// Hop bandwidth B in Hz
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Minimum hop repetition interval T in seconds
    #[arg(long)]
    hri: Option<f64>,
    /// Base sampling interval T_c in seconds
    #[arg(long)]
    tc: Option<f64>,
    /// Sampler period L
    #[arg(long = "L")]
    period: Option<usize>,
    /// Channel counts, comma separated
    #[arg(long)]
    q: Option<String>,
    /// Segment widths, comma separated
    #[arg(long)]
    r: Option<String>,
    /// Solvers, comma separated (somp, music)
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    max_sparsity: Option<usize>,
    /// Fixed MUSIC signal rank
    #[arg(long)]
    music_rank: Option<usize>,
    /// S-OMP relative residual tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// DPSS k_D factors compared by exp-dpss, comma separated
    #[arg(long)]
    kd_factors: Option<String>,
    /// Record length in seconds
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Interpolation guard in base-rate samples
    #[arg(long)]
    guard: Option<usize>,
    #[arg(long)]
    support_threshold: Option<f64>,
    #[arg(long)]
    excess_bandwidth: Option<f64>,
    /// Add complex white noise at this SNR (dB)
    #[arg(long)]
    snr: Option<f64>,
    /// Solve segments one at a time
    #[arg(long)]
    sequential: bool,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("n", self.n.map(|v| v.to_string()));
        put("bandwidth_hz", self.bandwidth.map(|v| v.to_string()));
        put("hri_s", self.hri.map(|v| v.to_string()));
        put("tc", self.tc.map(|v| v.to_string()));
        put("l", self.period.map(|v| v.to_string()));
        put("q", self.q.clone());
        put("r", self.r.clone());
        put("solvers", self.solver.clone());
        put("max_sparsity", self.max_sparsity.map(|v| v.to_string()));
        put("music_rank", self.music_rank.map(|v| v.to_string()));
        put("tol", self.tol.map(|v| v.to_string()));
        put("kd_factors", self.kd_factors.clone());
        put("duration_s", self.duration.map(|v| v.to_string()));
        put("trials", self.trials.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("guard", self.guard.map(|v| v.to_string()));
        put("support_threshold", self.support_threshold.map(|v| v.to_string()));
        put("excess_bandwidth", self.excess_bandwidth.map(|v| v.to_string()));
        put("snr_db", self.snr.map(|v| v.to_string()));
        if self.sequential {
            put("parallel_segments", Some("false".into()));
        }
        out
    }

    /// Defaults, then the file, then flags. Also returns the keys set explicitly.
    fn load(&self) -> Result<(ExperimentConfig, Vec<String>)> {
        let mut cfg = ExperimentConfig::default();
        let mut keys = Vec::new();
        if let Some(path) = &self.config {
            for (k, v) in io::read_key_values(path)? {
                cfg.set(&k, &v)?;
                keys.push(k);
            }
        }
        for (k, v) in self.overrides() {
            cfg.set(k, &v)?;
            keys.push(k.to_string());
        }
        Ok((cfg, keys))
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Trial index within the seeded ensemble
    #[arg(long, default_value_t = 0)]
    trial: usize,
    #[arg(long)]
    out: PathBuf,
    /// Hop ground truth CSV (default: <out>.hops.csv)
    #[arg(long)]
    hops: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Explicit coset pattern, comma separated
    #[arg(long, conflicts_with = "pattern_seed")]
    pattern: Option<String>,
    /// Seed for a random q-of-L pattern
    #[arg(long)]
    pattern_seed: Option<u64>,
    /// RF frequency at 0 Hz baseband, recorded in the coset manifest
    #[arg(long, default_value_t = 0.0)]
    origin_hz: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DictArg {
    None,
    Dpss,
}

#[derive(Args)]
struct RecoverArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Coset directory written by `sample`
    #[arg(long)]
    in_dir: PathBuf,
    /// Reconstructed signal at the base rate
    #[arg(long)]
    out: PathBuf,
    /// Per-segment CSV (default: <out>.segments.csv)
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "none")]
    dict: DictArg,
    /// k_D = ceil(f 2 N_D W_D)
    #[arg(long, default_value_t = 2.0)]
    kd_factor: f64,
    /// Directory for persisted DPSS dictionaries
    #[arg(long)]
    dpss_cache: Option<PathBuf>,
    /// Known support (comma separated); skips blind support recovery
    #[arg(long)]
    support: Option<String>,
    /// Dense reference signal; prints the NMSE over the valid range
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Write the interpolated, aligned streams into this directory
    #[arg(long)]
    dump_aligned: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SpectrogramArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    window: usize,
    #[arg(long, default_value_t = 128)]
    hop: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Sample(a) => sample(a),
        Command::Recover(a) => recover(a),
        Command::ExpNmseR(a) => experiment("nmse-r", a),
        Command::ExpNmseQ(a) => experiment("nmse-q", a),
        Command::ExpDpss(a) => experiment("dpss", a),
        Command::Spectrogram(a) => spectrogram(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Unsupported(_) | Error::Format(_) => 2,
        Error::NumericalRank { .. } | Error::UndefinedMetric(_) => 3,
        Error::Io(_) | Error::Csv(_) => 1,
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn single<T: Copy>(values: &[T], what: &str) -> Result<T> {
    match values {
        [v] => Ok(*v),
        _ => Err(invalid(format!("exactly one {what} is required here"))),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let (cfg, _) = a.cfg.load()?;
    cfg.validate()?;
    let trial = experiments::synthesize_trial(&cfg, a.trial)?;
    io::write_signal(&a.out, &trial.observed)?;
    let hops = a.hops.unwrap_or_else(|| suffixed(&a.out, ".hops.csv"));
    io::write_hops(&hops, &trial.hops)?;
    println!(
        "wrote {} samples and {} hops",
        trial.observed.len(),
        trial.hops.len()
    );
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let (cfg, keys) = a.cfg.load()?;
    let x = io::read_signal(&a.input)?;
    let tc = if keys.iter().any(|k| k == "tc") {
        cfg.base_interval_seconds
    } else {
        x.sample_interval
    };
    let pattern = match (&a.pattern, a.pattern_seed) {
        (Some(p), _) => io::parse_list(p)?,
        (None, seed) => {
            let q = single(&cfg.q_values, "q")?;
            mc_sampler::random_pattern(cfg.period, q, seed.unwrap_or(cfg.master_seed))?
        }
    };
    let mc = McConfig::new(tc, cfg.period, pattern)?;
    let streams = mc_sampler::sample(&x, &mc)?;
    io::write_cosets(&a.out_dir, &streams, a.origin_hz)?;
    println!(
        "pattern {:?}, {} samples per coset, average rate {:.6e} Hz",
        mc.pattern,
        streams.stream_len(),
        mc.average_rate()
    );
    Ok(())
}

fn recover(a: RecoverArgs) -> Result<()> {
    let (cfg, _) = a.cfg.load()?;
    let (streams, _origin_hz) = io::read_cosets(&a.in_dir)?;
    let mc = streams.config.clone();
    let aligned = preprocessing::interpolate_and_align(&streams, cfg.guard)?;
    if let Some(dir) = &a.dump_aligned {
        dump_aligned(dir, &aligned)?;
    }

    let r = if cfg.r_values.is_empty() {
        ((cfg.hri_seconds / (2.0 * mc.base_interval_seconds)).round() as usize).max(1)
    } else {
        single(&cfg.r_values, "r")?
    };
    let segments = preprocessing::segment(&aligned, r)?;
    let matrix = mc_sampler::build_measurement_matrix(&mc)?;
    let solver: Box<dyn MmvSolver> = match &a.support {
        Some(list) => Box::new(KnownSupport(recovery::SupportSet::new(
            io::parse_list(list)?,
            mc.period,
        )?)),
        None => match single(&cfg.solvers, "solver")? {
            SolverId::Somp => Box::new(Somp {
                max_sparsity: cfg.max_sparsity(),
                residual_tol: cfg.residual_tol,
            }),
            SolverId::Music => Box::new(Music {
                rank: cfg.music_rank,
            }),
            SolverId::Known => return Err(invalid("the known-support solver needs --support")),
        },
    };
    let dictionary = match a.dict {
        DictArg::None => Dictionary::None,
        DictArg::Dpss => Dictionary::Dpss {
            kd_factor: a.kd_factor,
        },
    };
    let cache = match &a.dpss_cache {
        Some(dir) => DpssCache::with_dir(dir),
        None => DpssCache::new(),
    };
    let options = EngineOptions {
        dictionary,
        parallel: cfg.parallel_segments,
    };
    let solutions = recovery::recover_segments(&segments, &matrix, solver.as_ref(), options, &cache)?;
    let mut x_hat = recovery::reassemble(&solutions, &mc)?;
    x_hat.start_time += aligned.origin_time;
    io::write_signal(&a.out, &x_hat)?;
    let manifest = a.manifest.unwrap_or_else(|| suffixed(&a.out, ".segments.csv"));
    io::write_recovery_manifest(&manifest, &solutions)?;
    println!(
        "recovered {} segments of width {r} ({} samples)",
        solutions.len(),
        x_hat.len()
    );

    if let Some(path) = &a.reference {
        let reference = io::read_signal(path)?;
        let range = aligned.valid_range.clone();
        if reference.len() < range.end {
            return Err(invalid("reference is shorter than the recovered range"));
        }
        let truth = ComplexSignal::new(
            reference.samples[range].to_vec(),
            reference.sample_interval,
            x_hat.start_time,
        )?;
        println!("nmse {:.6e}", experiments::nmse(&x_hat, &truth)?);
    }
    Ok(())
}

fn dump_aligned(dir: &Path, aligned: &preprocessing::AlignedStreams) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let tc = aligned.config.base_interval_seconds;
    for (i, z) in aligned.streams.iter().enumerate() {
        let s = ComplexSignal::new(z.clone(), tc, aligned.origin_time)?;
        io::write_signal(&dir.join(format!("aligned_{i}.sig")), &s)?;
    }
    Ok(())
}

fn experiment(name: &str, a: ExperimentArgs) -> Result<()> {
    let (cfg, _) = a.cfg.load()?;
    let records = experiments::run_and_write(name, &cfg, &a.out_dir)?;
    for r in records.iter().filter(|r| r.trial.is_none()) {
        println!(
            "{} dict={} q={} r={} nmse={:.4e} support={:.2} wall={:.3e}s",
            r.solver,
            r.dictionary(),
            r.q,
            r.r,
            r.nmse,
            r.mean_support_size,
            r.wall_time_s
        );
    }
    Ok(())
}

fn spectrogram(a: SpectrogramArgs) -> Result<()> {
    let x = io::read_signal(&a.input)?;
    let data = experiments::spectrogram_data(&x, a.window, a.hop)?;
    experiments::write_spectrogram_csv(&a.out, &data, x.sample_interval, a.window, a.hop)
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
