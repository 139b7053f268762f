//! Multi-coset periodic nonuniform sampling.
//!
//! An `MC(T_c, L, q, C)` sampler keeps `q` of every `L` slots on a base grid of
//! spacing `T_c`; coset `i` produces `y_i(k) = x((k L + c_i) T_c)`.
//!
//! Spectral slice `l` is the digital band `[l/L - 1/(2L), l/L + 1/(2L))` taken
//! modulo 1, so slice 0 is centred on DC.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg;
use crate::seeds;
use crate::signal::ComplexSignal;
use crate::CMatrix;

/// Largest period for which [`spark`] runs its exhaustive search.
pub const MAX_SPARK_PERIOD: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub base_interval_seconds: f64,
    pub period: usize,
    pub pattern: Vec<usize>,
}

impl McConfig {
    pub fn new(base_interval_seconds: f64, period: usize, pattern: Vec<usize>) -> Result<Self> {
        let cfg = Self {
            base_interval_seconds,
            period,
            pattern,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_interval_seconds > 0.0 && self.base_interval_seconds.is_finite()) {
            return Err(Error::invalid("base interval must be positive"));
        }
        if self.period == 0 {
            return Err(Error::invalid("period L must be positive"));
        }
        if self.pattern.is_empty() {
            return Err(Error::invalid("sampling pattern must have at least one coset"));
        }
        if self.pattern.len() > self.period {
            return Err(Error::invalid(format!(
                "q = {} exceeds L = {}",
                self.pattern.len(),
                self.period
            )));
        }
        let mut seen = vec![false; self.period];
        for &c in &self.pattern {
            if c >= self.period {
                return Err(Error::invalid(format!(
                    "pattern entry {c} outside 0..{}",
                    self.period
                )));
            }
            if seen[c] {
                return Err(Error::invalid(format!("pattern entry {c} repeated")));
            }
            seen[c] = true;
        }
        Ok(())
    }

    pub fn channel_count(&self) -> usize {
        self.pattern.len()
    }

    /// Average sampling rate `q / (L T_c)` in samples per second.
    pub fn average_rate(&self) -> f64 {
        self.pattern.len() as f64 / (self.period as f64 * self.base_interval_seconds)
    }

    /// Width of one spectral slice in Hz.
    pub fn slice_width(&self) -> f64 {
        1.0 / (self.period as f64 * self.base_interval_seconds)
    }

    /// Slice index containing the baseband frequency `freq_hz`.
    pub fn slice_of(&self, freq_hz: f64) -> usize {
        let l = self.period as f64;
        ((freq_hz * self.base_interval_seconds * l).round() as i64).rem_euclid(self.period as i64)
            as usize
    }
}

/// The `q` decimated coset outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CosetStreams {
    pub streams: Vec<Vec<Complex64>>,
    pub config: McConfig,
    pub origin_time: f64,
}

impl CosetStreams {
    /// Samples per coset stream.
    pub fn stream_len(&self) -> usize {
        self.streams.first().map_or(0, Vec::len)
    }

    /// Time of sample `k` of coset `i`.
    pub fn sample_time(&self, i: usize, k: usize) -> f64 {
        let c = &self.config;
        self.origin_time + (k * c.period + c.pattern[i]) as f64 * c.base_interval_seconds
    }
}

/// Decimate a dense `T_c`-rate record into coset streams.
///
/// Only complete periods are used, so every stream has `floor(len / L)` samples.
pub fn sample(x: &ComplexSignal, config: &McConfig) -> Result<CosetStreams> {
    config.validate()?;
    if !x.same_interval(config.base_interval_seconds) {
        return Err(Error::invalid(format!(
            "signal interval {} does not match base interval {}",
            x.sample_interval, config.base_interval_seconds
        )));
    }
    let k_len = x.len() / config.period;
    let streams = config
        .pattern
        .iter()
        .map(|&c| (0..k_len).map(|k| x.samples[k * config.period + c]).collect())
        .collect();
    Ok(CosetStreams {
        streams,
        config: config.clone(),
        origin_time: x.start_time,
    })
}

/// The `q x L` partial DFT matrix with entries `exp(j 2 pi c_i l / L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    pub entries: CMatrix,
    pub config: McConfig,
}

impl MeasurementMatrix {
    /// Columns indexed by `support`, in order.
    pub fn columns(&self, support: &[usize]) -> CMatrix {
        self.entries.select_columns(support)
    }
}

pub fn build_measurement_matrix(config: &McConfig) -> Result<MeasurementMatrix> {
    config.validate()?;
    let l = config.period;
    let entries = CMatrix::from_fn(config.pattern.len(), l, |i, col| {
        // reduce the exponent first so every entry is an exact L-th root of unity
        let e = (config.pattern[i] * col) % l;
        Complex64::from_polar(1.0, 2.0 * PI * e as f64 / l as f64)
    });
    Ok(MeasurementMatrix {
        entries,
        config: config.clone(),
    })
}

/// `q` distinct cosets drawn uniformly from `0..L`, sorted ascending.
///
/// The draw is the first `q` entries of a seeded shuffle of `0..L`, so patterns
/// from one seed are nested as `q` grows.
pub fn random_pattern(period: usize, q: usize, seed: u64) -> Result<Vec<usize>> {
    if q == 0 || q > period {
        return Err(Error::invalid(format!(
            "need 1 <= q <= L, got q = {q}, L = {period}"
        )));
    }
    let mut rng = seeds::named_rng(seed, "pattern", &[]);
    let mut order: Vec<usize> = (0..period).collect();
    order.shuffle(&mut rng);
    let mut pattern = order[..q].to_vec();
    pattern.sort_unstable();
    Ok(pattern)
}

/// Exact spark by exhaustive search over column subsets (small `L` only).
pub fn spark(a: &MeasurementMatrix) -> Result<usize> {
    let (q, l) = a.entries.shape();
    if l > MAX_SPARK_PERIOD {
        return Err(Error::Unsupported(format!(
            "exhaustive spark limited to L <= {MAX_SPARK_PERIOD}, got L = {l}; use coherence_spark_bound"
        )));
    }
    for size in 1..=q.min(l) {
        let mut subset: Vec<usize> = (0..size).collect();
        loop {
            if linalg::rank(&a.columns(&subset)) < size {
                return Ok(size);
            }
            if !next_combination(&mut subset, l) {
                break;
            }
        }
    }
    Ok(q.min(l) + 1)
}

/// Advance `c` to the next `k`-subset of `0..n` in lexicographic order.
pub(crate) fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Mutual coherence: largest normalized inner product between distinct columns.
pub fn coherence(a: &MeasurementMatrix) -> f64 {
    let g = a.entries.adjoint() * &a.entries;
    let l = g.nrows();
    let mut mu: f64 = 0.0;
    for i in 0..l {
        for j in i + 1..l {
            let denom = (g[(i, i)].re * g[(j, j)].re).sqrt();
            mu = mu.max(g[(i, j)].norm() / denom);
        }
    }
    mu
}

/// Coherence lower bound `spark >= 1 + 1/mu`, usable at any `L`.
pub fn coherence_spark_bound(a: &MeasurementMatrix) -> usize {
    let mu = coherence(a);
    if mu < 1e-12 {
        return a.entries.ncols() + 1;
    }
    (1.0 + 1.0 / mu - 1e-9).ceil() as usize
}

/// Frequency-domain consistency check of the coset model.
///
/// On the `K`-point grid of the coset streams, forms
/// `y_i(f) = L exp(-j 2 pi f c_i T_c) Y_i(f)` from the stream DFTs and the slice
/// vector `x_l(f)` from the `K L`-point DFT of `x`, then returns
/// `||y - A x||_F / ||A x||_F` (0 for a zero input).
pub fn frequency_domain_residual(x: &ComplexSignal, streams: &CosetStreams) -> Result<f64> {
    let cfg = &streams.config;
    let (l, k) = (cfg.period, streams.stream_len());
    let n = k * l;
    if k == 0 || x.len() < n || x.len() / l != k {
        return Err(Error::invalid(format!(
            "signal of {} samples does not match {} streams of length {k}",
            x.len(),
            cfg.pattern.len()
        )));
    }
    if streams.streams.iter().any(|s| s.len() != k) {
        return Err(Error::invalid("coset streams have unequal lengths"));
    }
    let mut planner = FftPlanner::new();

    let mut dense = x.samples[..n].to_vec();
    planner.plan_fft_forward(n).process(&mut dense);

    let a = build_measurement_matrix(cfg)?;
    let fft_k = planner.plan_fft_forward(k);
    let half = (k / 2) as i64;
    let mut num = 0.0;
    let mut den = 0.0;
    let stream_spectra: Vec<Vec<Complex64>> = streams
        .streams
        .iter()
        .map(|s| {
            let mut buf = s.clone();
            fft_k.process(&mut buf);
            buf
        })
        .collect();
    for m in -half..(k as i64 - half) {
        let bin_k = m.rem_euclid(k as i64) as usize;
        let slices: Vec<Complex64> = (0..l)
            .map(|ell| dense[(m + (ell * k) as i64).rem_euclid(n as i64) as usize])
            .collect();
        for (i, &c) in cfg.pattern.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -2.0 * PI * (m * c as i64) as f64 / n as f64);
            let y = stream_spectra[i][bin_k] * phase * l as f64;
            let ax: Complex64 = (0..l).map(|ell| a.entries[(i, ell)] * slices[ell]).sum();
            num += (y - ax).norm_sqr();
            den += ax.norm_sqr();
        }
    }
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((num / den).sqrt())
}
