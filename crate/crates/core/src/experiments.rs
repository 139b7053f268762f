//! Experiment sweeps over segment size, channel count and dictionary mode.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;
use sha2::{Digest, Sha256};

use crate::dpss::{self, DpssCache};
use crate::error::{Error, Result};
use crate::fh_signal::{self, FhClassParams, HopRecord, RadioConfig};
use crate::io;
use crate::mc_sampler::{self, McConfig};
use crate::preprocessing::{self, AlignedStreams, DEFAULT_GUARD};
use crate::recovery::{self, Dictionary, EngineOptions, Music, MmvSolver, SolverId, Somp};
use crate::seeds;
use crate::signal::ComplexSignal;
use crate::CMatrix;

/// Row-energy threshold for counting ground-truth slices in support statistics.
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub radio_count: usize,
    pub bandwidth_hz: f64,
    pub hri_seconds: f64,
    pub base_interval_seconds: f64,
    pub period: usize,
    pub q_values: Vec<usize>,
    /// Segment widths; empty selects the sweep's own default.
    pub r_values: Vec<usize>,
    pub solvers: Vec<SolverId>,
    /// Defaults to `4N`.
    pub max_sparsity: Option<usize>,
    /// Fixed MUSIC signal rank; estimated per segment when `None`.
    pub music_rank: Option<usize>,
    pub residual_tol: f64,
    /// DPSS `k_D` factors compared by the dictionary sweep (`k_D = ceil(f 2 N_D W_D)`).
    pub kd_factors: Vec<f64>,
    pub duration_seconds: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub guard: usize,
    pub support_threshold: f64,
    pub excess_bandwidth: f64,
    /// Adds complex white noise at this SNR before sampling.
    pub snr_db: Option<f64>,
    /// Solve the segments of one run in parallel. Off gives cleaner timings.
    pub parallel_segments: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            radio_count: 2,
            bandwidth_hz: 25_000.0,
            hri_seconds: 1e-3,
            base_interval_seconds: 4e-7,
            period: 32,
            q_values: vec![8, 12, 16, 24],
            r_values: Vec::new(),
            solvers: vec![SolverId::Somp],
            max_sparsity: None,
            music_rank: None,
            residual_tol: recovery::DEFAULT_RESIDUAL_TOL,
            kd_factors: vec![1.0, 2.0],
            duration_seconds: 10e-3,
            trials: 5,
            master_seed: 1,
            guard: DEFAULT_GUARD,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
            excess_bandwidth: 0.3,
            snr_db: None,
            parallel_segments: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.hri_seconds > 0.0 && self.bandwidth_hz > 0.0 && self.base_interval_seconds > 0.0) {
            return bad("T, B and T_c must be positive".into());
        }
        if self.duration_seconds < 10.0 * self.hri_seconds * (1.0 - 1e-12) {
            return bad(format!(
                "duration {} s is shorter than 10 T = {} s",
                self.duration_seconds,
                10.0 * self.hri_seconds
            ));
        }
        if self.period == 0 {
            return bad("L must be positive".into());
        }
        if self.q_values.is_empty() {
            return bad("at least one q is required".into());
        }
        if let Some(&q) = self.q_values.iter().find(|&&q| q == 0 || q > self.period) {
            return bad(format!("q = {q} outside 1..={}", self.period));
        }
        if self.r_values.contains(&0) {
            return bad("segment width r must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if let Some(&q) = self.q_values.iter().find(|&&q| self.music_rank.is_some_and(|p| p >= q)) {
            return bad(format!("MUSIC rank must stay below q = {q}"));
        }
        if self.solvers.contains(&SolverId::Known) {
            return bad("sweeps need a blind solver (somp or music)".into());
        }
        if self.bandwidth_hz * self.base_interval_seconds >= 1.0 {
            return bad("hop bandwidth exceeds the base sampling rate".into());
        }
        if self.kd_factors.iter().any(|&f| !(f > 0.0)) {
            return bad("kd factors must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.excess_bandwidth) {
            return bad("excess bandwidth must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn max_sparsity(&self) -> usize {
        self.max_sparsity.unwrap_or(4 * self.radio_count).max(1)
    }

    /// `round(T / (2 T_c))`.
    pub fn half_hri_segment(&self) -> usize {
        ((self.hri_seconds / (2.0 * self.base_interval_seconds)).round() as usize).max(1)
    }

    /// `round(T / T_c) * factor`, at least 1.
    pub fn hri_segment(&self, factor: f64) -> usize {
        ((self.hri_seconds / self.base_interval_seconds * factor).round() as usize).max(1)
    }

    /// Apply one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::invalid(format!("{key}: cannot parse {v:?}")))
        };
        let int = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::invalid(format!("{key}: cannot parse {v:?}")))
        };
        let list_err = |e: Error| Error::invalid(format!("{key}: {e}"));
        match key {
            "n" | "radios" => self.radio_count = int(value)?,
            "bandwidth_hz" | "b" => self.bandwidth_hz = num(value)?,
            "hri_s" | "t" => self.hri_seconds = num(value)?,
            "tc" => self.base_interval_seconds = num(value)?,
            "l" => self.period = int(value)?,
            "q" => self.q_values = io::parse_list(value).map_err(list_err)?,
            "r" => self.r_values = io::parse_list(value).map_err(list_err)?,
            "solvers" | "solver" => {
                self.solvers = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_>>()?
            }
            "max_sparsity" => self.max_sparsity = Some(int(value)?),
            "music_rank" => self.music_rank = Some(int(value)?),
            "tol" => self.residual_tol = num(value)?,
            "kd_factors" | "kd_factor" => self.kd_factors = io::parse_list(value).map_err(list_err)?,
            "duration_s" => self.duration_seconds = num(value)?,
            "trials" => self.trials = int(value)?,
            "seed" => {
                self.master_seed = value
                    .parse()
                    .map_err(|_| Error::invalid(format!("seed: cannot parse {value:?}")))?
            }
            "guard" => self.guard = int(value)?,
            "support_threshold" => self.support_threshold = num(value)?,
            "excess_bandwidth" => self.excess_bandwidth = num(value)?,
            "snr_db" => self.snr_db = Some(num(value)?),
            "parallel_segments" => {
                self.parallel_segments = value
                    .parse()
                    .map_err(|_| Error::invalid(format!("parallel_segments: {value:?}")))?
            }
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn from_key_values(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in map {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Canonical `key=value` echo of every setting.
    pub fn to_key_values(&self) -> BTreeMap<String, String> {
        let join = |v: Vec<String>| v.join(",");
        let mut m = BTreeMap::new();
        m.insert("n".into(), self.radio_count.to_string());
        m.insert("bandwidth_hz".into(), format!("{:e}", self.bandwidth_hz));
        m.insert("hri_s".into(), format!("{:e}", self.hri_seconds));
        m.insert("tc".into(), format!("{:e}", self.base_interval_seconds));
        m.insert("l".into(), self.period.to_string());
        m.insert("q".into(), join(self.q_values.iter().map(|v| v.to_string()).collect()));
        m.insert("r".into(), join(self.r_values.iter().map(|v| v.to_string()).collect()));
        m.insert("solvers".into(), join(self.solvers.iter().map(|v| v.to_string()).collect()));
        m.insert("max_sparsity".into(), self.max_sparsity().to_string());
        if let Some(p) = self.music_rank {
            m.insert("music_rank".into(), p.to_string());
        }
        m.insert("tol".into(), format!("{:e}", self.residual_tol));
        m.insert(
            "kd_factors".into(),
            join(self.kd_factors.iter().map(|v| format!("{v:e}")).collect()),
        );
        m.insert("duration_s".into(), format!("{:e}", self.duration_seconds));
        m.insert("trials".into(), self.trials.to_string());
        m.insert("seed".into(), self.master_seed.to_string());
        m.insert("guard".into(), self.guard.to_string());
        m.insert("support_threshold".into(), format!("{:e}", self.support_threshold));
        m.insert("excess_bandwidth".into(), format!("{:e}", self.excess_bandwidth));
        if let Some(snr) = self.snr_db {
            m.insert("snr_db".into(), format!("{snr:e}"));
        }
        m.insert("parallel_segments".into(), self.parallel_segments.to_string());
        m
    }
}

/// One scored recovery run, or the mean over trials when `trial` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct NmseRecord {
    pub solver: SolverId,
    pub kd_factor: Option<f64>,
    pub k_d: usize,
    pub radio_count: usize,
    pub hri_seconds: f64,
    pub q: usize,
    pub r: usize,
    pub trial: Option<usize>,
    pub nmse: f64,
    /// Mean ground-truth row support per segment.
    pub mean_support_size: f64,
    /// Mean support size chosen by the solver.
    pub mean_recovered_support: f64,
    pub mean_rank_z: f64,
    /// Solver time summed over the segments of one run.
    pub wall_time_s: f64,
}

impl NmseRecord {
    pub fn dictionary(&self) -> &'static str {
        if self.kd_factor.is_some() {
            "dpss"
        } else {
            "none"
        }
    }
}

/// `||x_hat - x||^2 / ||x||^2`.
pub fn nmse(x_hat: &ComplexSignal, x: &ComplexSignal) -> Result<f64> {
    if x_hat.len() != x.len() || !x.same_interval(x_hat.sample_interval) {
        return Err(Error::invalid(format!(
            "cannot compare {} samples at {} s with {} samples at {} s",
            x_hat.len(),
            x_hat.sample_interval,
            x.len(),
            x.sample_interval
        )));
    }
    let den = x.energy();
    if den == 0.0 {
        return Err(Error::UndefinedMetric("reference signal has zero energy".into()));
    }
    let num: f64 = x_hat
        .samples
        .iter()
        .zip(&x.samples)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(num / den)
}

/// The synthesized input of one trial.
#[derive(Debug, Clone)]
pub struct Trial {
    pub index: usize,
    /// Noise-free reference at `T_c`.
    pub clean: ComplexSignal,
    /// What the sampler sees (clean plus optional noise).
    pub observed: ComplexSignal,
    pub hops: Vec<HopRecord>,
    pub radios: Vec<RadioConfig>,
}

pub fn trial_radios(cfg: &ExperimentConfig, trial: usize) -> Vec<RadioConfig> {
    let fs = 1.0 / cfg.base_interval_seconds;
    let hop_count = (cfg.duration_seconds / cfg.hri_seconds).ceil() as usize + 1;
    (0..cfg.radio_count)
        .map(|i| {
            let mut rng = seeds::named_rng(cfg.master_seed, "delay", &[trial as u64, i as u64]);
            RadioConfig {
                hop_count,
                hri_seconds: cfg.hri_seconds,
                delay_seconds: rng.random::<f64>() * cfg.hri_seconds,
                freq_range: (0.0, fs - cfg.bandwidth_hz),
                symbol_rate: RadioConfig::symbol_rate_for_bandwidth(
                    cfg.bandwidth_hz,
                    cfg.excess_bandwidth,
                ),
                excess_bandwidth: cfg.excess_bandwidth,
                seed: seeds::derive(cfg.master_seed, "radio", &[trial as u64, i as u64]),
            }
        })
        .collect()
}

pub fn synthesize_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Trial> {
    let radios = trial_radios(cfg, trial);
    let class = FhClassParams::new(cfg.radio_count, cfg.bandwidth_hz, cfg.hri_seconds);
    let (clean, hops) =
        fh_signal::synthesize_fh_signal(&class, &radios, cfg.duration_seconds, cfg.base_interval_seconds)?;
    let observed = match cfg.snr_db {
        None => clean.clone(),
        Some(snr) => {
            let power = clean.energy() / clean.len() as f64;
            let sigma = (power / 10f64.powf(snr / 10.0) / 2.0).sqrt();
            let mut rng = seeds::named_rng(cfg.master_seed, "noise", &[trial as u64]);
            let samples = clean
                .samples
                .iter()
                .map(|v| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    v + Complex64::new(re, im) * sigma
                })
                .collect();
            ComplexSignal::new(samples, clean.sample_interval, clean.start_time)?
        }
    };
    Ok(Trial {
        index: trial,
        clean,
        observed,
        hops,
        radios,
    })
}

pub fn trial_pattern(cfg: &ExperimentConfig, trial: usize, q: usize) -> Result<Vec<usize>> {
    mc_sampler::random_pattern(
        cfg.period,
        q,
        seeds::derive(cfg.master_seed, "pattern", &[trial as u64]),
    )
}

/// Sample and align one trial at `q` channels.
pub fn acquire(cfg: &ExperimentConfig, trial: &Trial, q: usize) -> Result<AlignedStreams> {
    let mc = McConfig::new(cfg.base_interval_seconds, cfg.period, trial_pattern(cfg, trial.index, q)?)?;
    let streams = mc_sampler::sample(&trial.observed, &mc)?;
    preprocessing::interpolate_and_align(&streams, cfg.guard)
}

/// Ground-truth slice supports of every width-`r` segment of the valid range.
pub fn true_support_sizes(
    x_bb: &CMatrix,
    valid: std::ops::Range<usize>,
    r: usize,
    threshold: f64,
) -> Vec<usize> {
    valid
        .clone()
        .step_by(r)
        .map(|start| {
            let w = r.min(valid.end - start);
            recovery::row_support(&x_bb.columns(start, w).into_owned(), threshold).len()
        })
        .collect()
}

/// Slices touched by a hop's band `[f - B/2, f + B/2]`, with `f` taken relative to `origin_hz`.
pub fn occupied_slices(hop: &HopRecord, bandwidth: f64, origin_hz: f64, period: usize, base_interval: f64) -> Vec<usize> {
    let width = 1.0 / (period as f64 * base_interval);
    let f = hop.carrier_hz - origin_hz;
    let lo = ((f - bandwidth / 2.0) / width + 0.5).floor() as i64;
    let hi = ((f + bandwidth / 2.0) / width + 0.5).floor() as i64;
    let mut out: Vec<usize> = (lo..=hi).map(|l| l.rem_euclid(period as i64) as usize).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Row support of one segment as implied by the hop ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOccupancy {
    pub start_index: usize,
    pub support: Vec<usize>,
    /// Some hop begins or ends strictly inside the segment.
    pub switching: bool,
}

/// Hop-occupancy supports of every width-`r` segment of `valid` (indices at `base_interval`).
pub fn hop_occupancy(
    hops: &[HopRecord],
    bandwidth: f64,
    origin_hz: f64,
    period: usize,
    base_interval: f64,
    valid: std::ops::Range<usize>,
    r: usize,
) -> Vec<SegmentOccupancy> {
    valid
        .clone()
        .step_by(r.max(1))
        .map(|start| {
            let w = r.min(valid.end - start);
            let t0 = start as f64 * base_interval;
            let t1 = (start + w) as f64 * base_interval;
            let mut support = Vec::new();
            let mut switching = false;
            for h in hops.iter().filter(|h| h.start_seconds < t1 && h.end_seconds() > t0) {
                support.extend(occupied_slices(h, bandwidth, origin_hz, period, base_interval));
                switching |= h.start_seconds > t0 || h.end_seconds() < t1;
            }
            support.sort_unstable();
            support.dedup();
            SegmentOccupancy {
                start_index: start,
                support,
                switching,
            }
        })
        .collect()
}

struct RunOutcome {
    nmse: f64,
    mean_recovered_support: f64,
    mean_rank_z: f64,
    wall_time_s: f64,
    k_d: usize,
}

fn run_once(
    cfg: &ExperimentConfig,
    trial: &Trial,
    aligned: &AlignedStreams,
    r: usize,
    solver: SolverId,
    kd_factor: Option<f64>,
    cache: &DpssCache,
) -> Result<RunOutcome> {
    let a = mc_sampler::build_measurement_matrix(&aligned.config)?;
    let segments = preprocessing::segment(aligned, r)?;
    let somp = Somp {
        max_sparsity: cfg.max_sparsity(),
        residual_tol: cfg.residual_tol,
    };
    let music = Music {
        rank: cfg.music_rank,
    };
    let solver_ref: &dyn MmvSolver = match solver {
        SolverId::Somp => &somp,
        SolverId::Music => &music,
        SolverId::Known => return Err(Error::invalid("sweeps need a blind solver")),
    };
    let options = EngineOptions {
        dictionary: kd_factor.map_or(Dictionary::None, |f| Dictionary::Dpss { kd_factor: f }),
        parallel: cfg.parallel_segments,
    };
    let solutions = recovery::recover_segments(&segments, &a, solver_ref, options, cache)?;
    let x_hat = recovery::reassemble(&solutions, &aligned.config)?;
    let valid = aligned.valid_range.clone();
    let reference = ComplexSignal::new(
        trial.clean.samples[valid.clone()].to_vec(),
        trial.clean.sample_interval,
        valid.start as f64 * trial.clean.sample_interval,
    )?;
    let count = solutions.len() as f64;
    let k_d = match kd_factor {
        Some(f) => dpss::kept_count(r.min(valid.len()), 1.0 / (2.0 * cfg.period as f64), f)?,
        None => 0,
    };
    Ok(RunOutcome {
        nmse: nmse(&x_hat, &reference)?,
        mean_recovered_support: solutions.iter().map(|s| s.support.size() as f64).sum::<f64>() / count,
        mean_rank_z: solutions.iter().map(|s| s.rank_z as f64).sum::<f64>() / count,
        wall_time_s: solutions.iter().map(|s| s.wall_time_seconds).sum(),
        k_d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GridPoint {
    q: usize,
    r: usize,
    solver: SolverId,
    kd_factor: Option<f64>,
}

fn run_grid(cfg: &ExperimentConfig, grid: &[GridPoint]) -> Result<Vec<NmseRecord>> {
    cfg.validate()?;
    let cache = DpssCache::new();
    let l = cfg.period;
    let per_trial: Vec<Vec<NmseRecord>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<NmseRecord>> {
            let trial = synthesize_trial(cfg, t)?;
            let x_bb = preprocessing::slice_components(&trial.clean, l)?;
            let mut out = Vec::with_capacity(grid.len());
            let mut aligned_by_q: BTreeMap<usize, AlignedStreams> = BTreeMap::new();
            for p in grid {
                if !aligned_by_q.contains_key(&p.q) {
                    aligned_by_q.insert(p.q, acquire(cfg, &trial, p.q)?);
                }
                let aligned = &aligned_by_q[&p.q];
                let sizes =
                    true_support_sizes(&x_bb, aligned.valid_range.clone(), p.r, cfg.support_threshold);
                let o = run_once(cfg, &trial, aligned, p.r, p.solver, p.kd_factor, &cache)?;
                out.push(NmseRecord {
                    solver: p.solver,
                    kd_factor: p.kd_factor,
                    k_d: o.k_d,
                    radio_count: cfg.radio_count,
                    hri_seconds: cfg.hri_seconds,
                    q: p.q,
                    r: p.r,
                    trial: Some(t),
                    nmse: o.nmse,
                    mean_support_size: sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
                    mean_recovered_support: o.mean_recovered_support,
                    mean_rank_z: o.mean_rank_z,
                    wall_time_s: o.wall_time_s,
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut records: Vec<NmseRecord> = per_trial.into_iter().flatten().collect();
    let means: Vec<NmseRecord> = grid
        .iter()
        .map(|p| {
            let rows: Vec<&NmseRecord> = records
                .iter()
                .filter(|r| r.q == p.q && r.r == p.r && r.solver == p.solver && r.kd_factor == p.kd_factor)
                .collect();
            let n = rows.len() as f64;
            let mean = |f: fn(&NmseRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            NmseRecord {
                trial: None,
                nmse: mean(|r| r.nmse),
                mean_support_size: mean(|r| r.mean_support_size),
                mean_recovered_support: mean(|r| r.mean_recovered_support),
                mean_rank_z: mean(|r| r.mean_rank_z),
                wall_time_s: mean(|r| r.wall_time_s),
                ..rows[0].clone()
            }
        })
        .collect();
    records.extend(means);
    sort_records(&mut records);
    Ok(records)
}

fn sort_records(records: &mut [NmseRecord]) {
    records.sort_by(|a, b| {
        (a.solver.to_string(), a.kd_factor.unwrap_or(0.0).to_bits(), a.q, a.r, a.trial.map_or(usize::MAX, |t| t))
            .cmp(&(b.solver.to_string(), b.kd_factor.unwrap_or(0.0).to_bits(), b.q, b.r, b.trial.map_or(usize::MAX, |t| t)))
    });
}

/// Default widths around the hop interval: `T / T_c` times 1/8, 1/4, 1/2, 1, 2.
pub fn default_r_values(cfg: &ExperimentConfig) -> Vec<usize> {
    [0.125, 0.25, 0.5, 1.0, 2.0]
        .iter()
        .map(|&f| cfg.hri_segment(f))
        .collect()
}

/// NMSE and mean support versus segment width, S-OMP, for every `q`.
pub fn run_nmse_vs_r(cfg: &ExperimentConfig) -> Result<Vec<NmseRecord>> {
    let rs = if cfg.r_values.is_empty() {
        default_r_values(cfg)
    } else {
        cfg.r_values.clone()
    };
    let grid: Vec<GridPoint> = cfg
        .q_values
        .iter()
        .flat_map(|&q| {
            rs.iter().map(move |&r| GridPoint {
                q,
                r,
                solver: SolverId::Somp,
                kd_factor: None,
            })
        })
        .collect();
    run_grid(cfg, &grid)
}

fn fixed_r(cfg: &ExperimentConfig) -> usize {
    cfg.r_values.first().copied().unwrap_or_else(|| cfg.half_hri_segment())
}

/// NMSE versus `q` for every configured solver at `r = round(T / (2 T_c))`.
pub fn run_nmse_vs_q(cfg: &ExperimentConfig) -> Result<Vec<NmseRecord>> {
    let r = fixed_r(cfg);
    let grid: Vec<GridPoint> = cfg
        .solvers
        .iter()
        .flat_map(|&solver| {
            cfg.q_values.iter().map(move |&q| GridPoint {
                q,
                r,
                solver,
                kd_factor: None,
            })
        })
        .collect();
    run_grid(cfg, &grid)
}

/// S-OMP with no dictionary and with each configured DPSS factor.
pub fn run_dpss_comparison(cfg: &ExperimentConfig) -> Result<Vec<NmseRecord>> {
    let r = fixed_r(cfg);
    let modes: Vec<Option<f64>> = std::iter::once(None)
        .chain(cfg.kd_factors.iter().map(|&f| Some(f)))
        .collect();
    let grid: Vec<GridPoint> = modes
        .iter()
        .flat_map(|&kd_factor| {
            cfg.q_values.iter().map(move |&q| GridPoint {
                q,
                r,
                solver: SolverId::Somp,
                kd_factor,
            })
        })
        .collect();
    run_grid(cfg, &grid)
}

/// DPSS approximation of one segment's ground-truth slice streams.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityRecord {
    pub trial: usize,
    pub segment_start: usize,
    pub k_d: usize,
    /// `||X - X Q Q^T||_F / ||X||_F`.
    pub error: f64,
    /// Largest per-row out-of-band fraction among rows above the support threshold.
    pub delta_max: f64,
}

/// Approximation error of full-width segments of the ground truth.
pub fn dictionary_fidelity(cfg: &ExperimentConfig, kd_factor: f64) -> Result<Vec<FidelityRecord>> {
    cfg.validate()?;
    let r = fixed_r(cfg);
    let w = 1.0 / (2.0 * cfg.period as f64);
    let k_d = dpss::kept_count(r, w, kd_factor)?;
    let dict = dpss::compute_dpss(r, w, k_d)?;
    let per_trial: Vec<Vec<FidelityRecord>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<FidelityRecord>> {
            let trial = synthesize_trial(cfg, t)?;
            let x_bb = preprocessing::slice_components(&trial.clean, cfg.period)?;
            let n = x_bb.ncols();
            let mut out = Vec::new();
            let mut start = cfg.guard;
            while start + r <= n - cfg.guard {
                let seg = x_bb.columns(start, r).into_owned();
                let rows = recovery::row_support(&seg, cfg.support_threshold);
                let deltas = dpss::row_out_of_band(&seg, w);
                out.push(FidelityRecord {
                    trial: t,
                    segment_start: start,
                    k_d,
                    error: dpss::approximation_error(&seg, &dict)?,
                    delta_max: rows.iter().map(|&i| deltas[i]).fold(0.0, f64::max),
                });
                start += r;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// `|X(f)|^2` in dB over Hann-windowed frames, indexed `[frequency][frame]`.
///
/// Frequency row `b` is `b / (window T)`; values are floored at -300 dB.
pub fn spectrogram_data(x: &ComplexSignal, window: usize, hop: usize) -> Result<Vec<Vec<f64>>> {
    if window < 16 {
        return Err(Error::invalid(format!("window {window} is below 16 samples")));
    }
    if hop == 0 {
        return Err(Error::invalid("hop must be positive"));
    }
    if x.len() < window {
        return Err(Error::invalid("signal is shorter than one window"));
    }
    let frames = (x.len() - window) / hop + 1;
    let taper: Vec<f64> = (0..window)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / window as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(window);
    let cols: Vec<Vec<f64>> = (0..frames)
        .into_par_iter()
        .map(|f| {
            let mut buf: Vec<Complex64> = (0..window)
                .map(|i| x.samples[f * hop + i] * taper[i])
                .collect();
            fft.process(&mut buf);
            buf.iter()
                .map(|v| {
                    let p = v.norm_sqr();
                    if p > 0.0 {
                        (10.0 * p.log10()).max(-300.0)
                    } else {
                        -300.0
                    }
                })
                .collect()
        })
        .collect();
    Ok((0..window)
        .map(|b| cols.iter().map(|c| c[b]).collect())
        .collect())
}

pub fn write_spectrogram_csv(
    path: &Path,
    data: &[Vec<f64>],
    sample_interval: f64,
    window: usize,
    hop: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let frames = data.first().map_or(0, Vec::len);
    let mut header = vec!["freq_hz".to_string()];
    header.extend((0..frames).map(|f| format!("{:.6e}", (f * hop) as f64 * sample_interval)));
    w.write_record(&header)?;
    for (b, row) in data.iter().enumerate() {
        let mut rec = vec![format!("{:.6e}", b as f64 / (window as f64 * sample_interval))];
        rec.extend(row.iter().map(|v| format!("{v:.6e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub const RECORD_HEADER: [&str; 14] = [
    "solver",
    "dictionary",
    "kd_factor",
    "k_d",
    "n",
    "hri_s",
    "q",
    "r",
    "trial",
    "nmse",
    "mean_support_size",
    "mean_recovered_support",
    "mean_rank_z",
    "wall_time_s",
];

pub fn write_records(path: &Path, records: &[NmseRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.solver.to_string(),
            r.dictionary().to_string(),
            r.kd_factor.map_or(String::new(), |f| format!("{f:.6e}")),
            r.k_d.to_string(),
            r.radio_count.to_string(),
            format!("{:.6e}", r.hri_seconds),
            r.q.to_string(),
            r.r.to_string(),
            r.trial.map_or("mean".to_string(), |t| t.to_string()),
            format!("{:.6e}", r.nmse),
            format!("{:.6e}", r.mean_support_size),
            format!("{:.6e}", r.mean_recovered_support),
            format!("{:.6e}", r.mean_rank_z),
            format!("{:.6e}", r.wall_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Hex SHA-256 of the canonical configuration echo.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut text = String::new();
    for (k, v) in cfg.to_key_values() {
        let _ = writeln!(text, "{k}={v}");
    }
    Sha256::digest(text.as_bytes())
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Run manifest: configuration echo, experiment name and input hash.
pub fn write_manifest(dir: &Path, experiment: &str, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut m = cfg.to_key_values();
    m.insert("experiment".into(), experiment.into());
    m.insert("input_sha256".into(), config_hash(cfg));
    m.insert("crate_version".into(), env!("CARGO_PKG_VERSION").into());
    io::write_key_values(&dir.join("manifest.txt"), &m)
}

/// Run the named sweep and write its CSVs plus `manifest.txt` into `dir`.
///
/// `nmse-r` writes `fig5a.csv` and `fig5b.csv`, `nmse-q` writes `fig6.csv`,
/// `dpss` writes `fig7.csv` and `fig8.csv`.
pub fn run_and_write(experiment: &str, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<NmseRecord>> {
    fs::create_dir_all(dir)?;
    let records = match experiment {
        "nmse-r" => {
            let rec = run_nmse_vs_r(cfg)?;
            write_records(&dir.join("fig5a.csv"), &rec)?;
            write_support_csv(&dir.join("fig5b.csv"), &rec)?;
            rec
        }
        "nmse-q" => {
            let rec = run_nmse_vs_q(cfg)?;
            write_records(&dir.join("fig6.csv"), &rec)?;
            rec
        }
        "dpss" => {
            let rec = run_dpss_comparison(cfg)?;
            write_records(&dir.join("fig7.csv"), &rec)?;
            write_latency_csv(&dir.join("fig8.csv"), &rec)?;
            rec
        }
        other => return Err(Error::invalid(format!("unknown experiment {other:?}"))),
    };
    write_manifest(dir, experiment, cfg)?;
    Ok(records)
}

/// Mean ground-truth support per `r` (one row per `r` and trial; `q` does not matter).
fn write_support_csv(path: &Path, records: &[NmseRecord]) -> Result<()> {
    let q0 = records.iter().map(|r| r.q).min().unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "hri_s", "r", "trial", "mean_support_size"])?;
    for r in records.iter().filter(|r| r.q == q0) {
        w.write_record([
            r.radio_count.to_string(),
            format!("{:.6e}", r.hri_seconds),
            r.r.to_string(),
            r.trial.map_or("mean".to_string(), |t| t.to_string()),
            format!("{:.6e}", r.mean_support_size),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_latency_csv(path: &Path, records: &[NmseRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dictionary", "kd_factor", "k_d", "q", "r", "trial", "wall_time_s"])?;
    for r in records {
        w.write_record([
            r.dictionary().to_string(),
            r.kd_factor.map_or(String::new(), |f| format!("{f:.6e}")),
            r.k_d.to_string(),
            r.q.to_string(),
            r.r.to_string(),
            r.trial.map_or("mean".to_string(), |t| t.to_string()),
            format!("{:.6e}", r.wall_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean relative residual of the frequency-domain model over a record; exposed for the CLI.
pub fn model_residual(x: &ComplexSignal, cfg: &McConfig) -> Result<f64> {
    let streams = mc_sampler::sample(x, cfg)?;
    mc_sampler::frequency_domain_residual(x, &streams)
}
