//! Blind frequency-hopping and stationary multiband test signals.
//!
//! Hopping signals are generated directly at complex baseband: a carrier `f` in
//! `[f_min, f_max]` is placed at `f - origin`, where `origin` is the lowest `f_min`
//! over all radios. The discrete-time simulation rate therefore only has to cover
//! `span + B` instead of the full RF frequency.
//!
//! Each hop is `g(t) = r(t) m(t)`: a trapezoidal window `r` (5% ramps) applied to a
//! raised-cosine shaped, Gray-mapped 4PSK pulse train `m`.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::seeds;
use crate::signal::ComplexSignal;

/// Fraction of the hop repetition interval during which a hop is on the air.
pub const HOP_DUTY: f64 = 0.95;
/// Length of each window ramp as a fraction of the hop duration.
pub const RAMP_FRACTION: f64 = 0.05;
/// One-sided truncation of the raised-cosine pulse, in symbol periods.
pub const RC_SPAN_SYMBOLS: i64 = 6;
pub const DEFAULT_ESSENTIAL_BAND_THRESHOLD: f64 = 1e-3;

/// Parameters of one hopping radio.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    pub hop_count: usize,
    pub hri_seconds: f64,
    pub delay_seconds: f64,
    /// Closed carrier interval `[f_min, f_max]` in Hz.
    pub freq_range: (f64, f64),
    pub symbol_rate: f64,
    pub excess_bandwidth: f64,
    pub seed: u64,
}

impl RadioConfig {
    /// Symbol rate giving a two-sided raised-cosine bandwidth of `bandwidth` Hz.
    pub fn symbol_rate_for_bandwidth(bandwidth: f64, excess_bandwidth: f64) -> f64 {
        bandwidth / (1.0 + excess_bandwidth)
    }

    /// Duration of one hop, `T_H`.
    pub fn hop_duration(&self) -> f64 {
        HOP_DUTY * self.hri_seconds
    }

    /// Two-sided occupied bandwidth of the pulse train.
    pub fn occupied_bandwidth(&self) -> f64 {
        self.symbol_rate * (1.0 + self.excess_bandwidth)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.freq_range;
        if self.hop_count == 0 {
            return Err(Error::invalid("radio must have at least one hop"));
        }
        if !(self.hri_seconds > 0.0 && self.hri_seconds.is_finite()) {
            return Err(Error::invalid("hop repetition interval must be positive"));
        }
        if !(self.delay_seconds >= 0.0 && self.delay_seconds <= self.hri_seconds) {
            return Err(Error::invalid(format!(
                "delay {} must lie in [0, hri = {}]",
                self.delay_seconds, self.hri_seconds
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("frequency range [{lo}, {hi}] is empty")));
        }
        if !(self.symbol_rate > 0.0 && self.symbol_rate.is_finite()) {
            return Err(Error::invalid("symbol rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.excess_bandwidth) {
            return Err(Error::invalid("excess bandwidth must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Class-level prior knowledge: radio count `N`, hop bandwidth `B`, minimum HRI `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FhClassParams {
    pub radio_count: usize,
    pub max_hop_bandwidth_hz: f64,
    pub min_hri_seconds: f64,
    pub essential_band_threshold: f64,
}

impl FhClassParams {
    pub fn new(radio_count: usize, max_hop_bandwidth_hz: f64, min_hri_seconds: f64) -> Self {
        Self {
            radio_count,
            max_hop_bandwidth_hz,
            min_hri_seconds,
            essential_band_threshold: DEFAULT_ESSENTIAL_BAND_THRESHOLD,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.max_hop_bandwidth_hz > 0.0 && self.min_hri_seconds > 0.0) {
            return Err(Error::invalid("class bandwidth and minimum HRI must be positive"));
        }
        if !(self.essential_band_threshold > 0.0 && self.essential_band_threshold < 1.0) {
            return Err(Error::invalid("essential band threshold must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Ground truth for a single hop.
#[derive(Debug, Clone, PartialEq)]
pub struct HopRecord {
    pub radio_index: usize,
    pub hop_index: usize,
    pub carrier_hz: f64,
    pub phase_rad: f64,
    pub start_seconds: f64,
    pub duration_seconds: f64,
}

impl HopRecord {
    pub fn end_seconds(&self) -> f64 {
        self.start_seconds + self.duration_seconds
    }
}

/// The trapezoidal hop window: linear ramps over the first and last 5% of the hop.
pub fn hop_window(t_rel: f64, hop_duration: f64) -> Result<f64> {
    if !(hop_duration > 0.0) {
        return Err(Error::invalid(format!(
            "hop duration must be positive, got {hop_duration}"
        )));
    }
    Ok(window_value(t_rel, hop_duration))
}

fn window_value(t: f64, th: f64) -> f64 {
    let ramp = RAMP_FRACTION * th;
    if t < 0.0 || t >= th {
        0.0
    } else if t < ramp {
        t / ramp
    } else if t < th - ramp {
        1.0
    } else {
        (th - t) / ramp
    }
}

/// Raised-cosine impulse response, unit peak, for time `t` in symbol periods.
pub fn raised_cosine(t: f64, excess_bandwidth: f64) -> f64 {
    let sinc = |x: f64| if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    let b = excess_bandwidth;
    if b == 0.0 {
        return sinc(t);
    }
    let den = 1.0 - (2.0 * b * t).powi(2);
    if den.abs() < 1e-10 {
        FRAC_PI_4 * sinc(1.0 / (2.0 * b))
    } else {
        sinc(t) * (PI * b * t).cos() / den
    }
}

/// Gray-mapped 4PSK symbol for a two-bit label.
fn qpsk_gray(bits: u8) -> Complex64 {
    // 00 -> 0, 01 -> 1, 11 -> 2, 10 -> 3 quadrants
    let quadrant = match bits & 0b11 {
        0b00 => 0.0,
        0b01 => 1.0,
        0b11 => 2.0,
        _ => 3.0,
    };
    Complex64::from_polar(1.0, FRAC_PI_4 + quadrant * PI / 2.0)
}

/// The windowed, pulse-shaped baseband waveform `g(t)` of a single hop.
#[derive(Debug, Clone)]
pub struct HopWaveform {
    symbols: Vec<Complex64>,
    symbol_period: f64,
    excess_bandwidth: f64,
    duration: f64,
}

impl HopWaveform {
    /// Index of the first symbol relative to the hop start.
    const FIRST_SYMBOL: i64 = -RC_SPAN_SYMBOLS;

    pub fn new(config: &RadioConfig, hop_index: usize) -> Self {
        let symbol_period = 1.0 / config.symbol_rate;
        let duration = config.hop_duration();
        let last = (duration / symbol_period).ceil() as i64 + RC_SPAN_SYMBOLS;
        let count = (last - Self::FIRST_SYMBOL + 1) as usize;
        let mut rng = seeds::named_rng(config.seed, "symbols", &[hop_index as u64]);
        let symbols = (0..count).map(|_| qpsk_gray(rng.random::<u8>())).collect();
        Self {
            symbols,
            symbol_period,
            excess_bandwidth: config.excess_bandwidth,
            duration,
        }
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    /// Time (relative to the hop start) of symbol `i` of [`Self::symbols`].
    pub fn symbol_time(&self, i: usize) -> f64 {
        (i as i64 + Self::FIRST_SYMBOL) as f64 * self.symbol_period
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Unwindowed pulse train `m(t)`.
    pub fn modulation(&self, t_rel: f64) -> Complex64 {
        let u = t_rel / self.symbol_period;
        let lo = ((u - RC_SPAN_SYMBOLS as f64).ceil() as i64).max(Self::FIRST_SYMBOL);
        let hi = (u + RC_SPAN_SYMBOLS as f64).floor() as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for n in lo..=hi {
            let idx = (n - Self::FIRST_SYMBOL) as usize;
            let Some(a) = self.symbols.get(idx) else { break };
            acc += a * raised_cosine(u - n as f64, self.excess_bandwidth);
        }
        acc
    }

    /// `g(t) = r(t) m(t)`; exactly zero outside `[0, T_H)`.
    pub fn eval(&self, t_rel: f64) -> Complex64 {
        let w = window_value(t_rel, self.duration);
        if w == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            self.modulation(t_rel) * w
        }
    }
}

/// Grid indices `k` with `k * dt` inside `[start, end)`, clipped to `[0, len)`.
fn grid_span(start: f64, end: f64, dt: f64, len: usize) -> std::ops::Range<usize> {
    let first = (start / dt).ceil().max(0.0) as usize;
    let mut last = (end / dt).ceil().max(0.0) as usize;
    // guard against rounding placing a sample exactly at `end`
    while last > first && (last - 1) as f64 * dt >= end {
        last -= 1;
    }
    first.min(len)..last.min(len)
}

/// Samples `g(t)` of one hop on the global grid `k * dt`, restricted to the hop support.
pub fn synthesize_baseband_hop(
    config: &RadioConfig,
    hop: &HopRecord,
    sample_interval: f64,
) -> Result<ComplexSignal> {
    config.validate()?;
    let bw = config.occupied_bandwidth();
    if !(sample_interval > 0.0) || sample_interval > 1.0 / (2.0 * bw) {
        return Err(Error::invalid(format!(
            "sample interval {sample_interval} does not resolve hop bandwidth {bw} Hz"
        )));
    }
    let wave = HopWaveform::new(config, hop.hop_index);
    let span = grid_span(
        hop.start_seconds,
        hop.start_seconds + wave.duration(),
        sample_interval,
        usize::MAX,
    );
    if span.is_empty() {
        return Err(Error::invalid("hop is shorter than one sample interval"));
    }
    let samples = span
        .clone()
        .map(|k| wave.eval(k as f64 * sample_interval - hop.start_seconds))
        .collect();
    ComplexSignal::new(samples, sample_interval, span.start as f64 * sample_interval)
}

/// Draw carriers, phases and timing for every hop of every radio that starts
/// before `duration`.
pub fn plan_hops(radios: &[RadioConfig], duration: f64) -> Vec<HopRecord> {
    let mut hops = Vec::new();
    for (i, radio) in radios.iter().enumerate() {
        let mut rng = seeds::named_rng(radio.seed, "hops", &[]);
        let (lo, hi) = radio.freq_range;
        for k in 0..radio.hop_count {
            let start = k as f64 * radio.hri_seconds + radio.delay_seconds;
            if start >= duration {
                break;
            }
            let carrier = lo + rng.random::<f64>() * (hi - lo);
            let phase = rng.random::<f64>() * 2.0 * PI;
            hops.push(HopRecord {
                radio_index: i,
                hop_index: k,
                carrier_hz: carrier,
                phase_rad: phase,
                start_seconds: start,
                duration_seconds: radio.hop_duration(),
            });
        }
    }
    hops
}

/// Sum of modulated hops `g(t - start) exp(j(2 pi (f - origin) t + theta))`.
///
/// `origin_hz` is the RF frequency mapped to 0 Hz at complex baseband.
pub fn synthesize_from_hops(
    radios: &[RadioConfig],
    hops: &[HopRecord],
    len: usize,
    sample_interval: f64,
    origin_hz: f64,
) -> Result<ComplexSignal> {
    let contributions: Vec<Vec<Complex64>> = radios
        .par_iter()
        .enumerate()
        .map(|(i, radio)| {
            let mut acc = vec![Complex64::new(0.0, 0.0); len];
            for hop in hops.iter().filter(|h| h.radio_index == i) {
                let wave = HopWaveform::new(radio, hop.hop_index);
                let f = hop.carrier_hz - origin_hz;
                for k in grid_span(hop.start_seconds, hop.end_seconds(), sample_interval, len) {
                    let t = k as f64 * sample_interval;
                    let carrier = Complex64::from_polar(1.0, 2.0 * PI * f * t + hop.phase_rad);
                    acc[k] += wave.eval(t - hop.start_seconds) * carrier;
                }
            }
            acc
        })
        .collect();

    let mut x = vec![Complex64::new(0.0, 0.0); len];
    for c in &contributions {
        for (xk, ck) in x.iter_mut().zip(c) {
            *xk += ck;
        }
    }
    ComplexSignal::new(x, sample_interval, 0.0)
}

/// Baseband reference frequency for a set of radios: the lowest `f_min`.
pub fn band_origin(radios: &[RadioConfig]) -> f64 {
    radios
        .iter()
        .map(|r| r.freq_range.0)
        .fold(f64::INFINITY, f64::min)
}

/// Synthesize a member of the blind hopping class together with its hop ground truth.
pub fn synthesize_fh_signal(
    class: &FhClassParams,
    radios: &[RadioConfig],
    duration: f64,
    sample_interval: f64,
) -> Result<(ComplexSignal, Vec<HopRecord>)> {
    class.validate()?;
    if radios.len() != class.radio_count {
        return Err(Error::invalid(format!(
            "class declares {} radios but {} were configured",
            class.radio_count,
            radios.len()
        )));
    }
    if !(duration > 0.0 && sample_interval > 0.0) {
        return Err(Error::invalid("duration and sample interval must be positive"));
    }
    let len = (duration / sample_interval).round().max(1.0) as usize;
    if radios.is_empty() {
        return Ok((ComplexSignal::zeros(len, sample_interval, 0.0)?, Vec::new()));
    }

    let b = class.max_hop_bandwidth_hz;
    let origin = band_origin(radios);
    let top = radios.iter().map(|r| r.freq_range.1).fold(f64::NEG_INFINITY, f64::max);
    for (i, r) in radios.iter().enumerate() {
        r.validate()?;
        if r.hri_seconds < class.min_hri_seconds * (1.0 - 1e-12) {
            return Err(Error::invalid(format!(
                "radio {i} HRI {} is below the class minimum {}",
                r.hri_seconds, class.min_hri_seconds
            )));
        }
        if r.occupied_bandwidth() > b * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "radio {i} occupies {} Hz, above the class bandwidth {b}",
                r.occupied_bandwidth()
            )));
        }
    }
    let nyquist = 1.0 / (top - origin + b);
    if sample_interval > nyquist * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "sample interval {sample_interval} exceeds the baseband Nyquist interval {nyquist}"
        )));
    }

    let hops = plan_hops(radios, duration);
    let x = synthesize_from_hops(radios, &hops, len, sample_interval, origin)?;
    Ok((x, hops))
}

/// Center and width (Hz) of spectral slice `slice` for a period-`period` sampler.
pub fn slice_band(slice: usize, period: usize, base_interval: f64) -> (f64, f64) {
    let width = 1.0 / (period as f64 * base_interval);
    (slice as f64 * width, width)
}

/// DFT bins (mod `n`) covering `[center - width/2, center + width/2)`.
fn band_bins(center: f64, width: f64, n: usize, sample_interval: f64) -> Vec<usize> {
    let df = 1.0 / (n as f64 * sample_interval);
    let lo = ((center - width / 2.0) / df - 1e-9).ceil() as i64;
    let hi = ((center + width / 2.0) / df - 1e-9).ceil() as i64;
    (lo..hi).map(|b| b.rem_euclid(n as i64) as usize).collect()
}

/// Stationary multiband test signal: independent band-limited complex Gaussian
/// noise in each band, synthesized on the DFT grid so the spectral support is exact
/// and the record is periodic.
pub fn synthesize_multiband_signal(
    band_centers: &[f64],
    band_width: f64,
    duration: f64,
    sample_interval: f64,
    seed: u64,
) -> Result<ComplexSignal> {
    if !(duration > 0.0 && sample_interval > 0.0) {
        return Err(Error::invalid("duration and sample interval must be positive"));
    }
    let n = (duration / sample_interval).round().max(1.0) as usize;
    if band_centers.is_empty() {
        return ComplexSignal::zeros(n, sample_interval, 0.0);
    }
    if !(band_width > 0.0 && band_width <= 1.0 / sample_interval) {
        return Err(Error::invalid(format!(
            "band width {band_width} must lie in (0, sample rate]"
        )));
    }

    let mut owner = vec![usize::MAX; n];
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for (i, &c) in band_centers.iter().enumerate() {
        let bins = band_bins(c, band_width, n, sample_interval);
        if bins.is_empty() {
            return Err(Error::invalid(format!("band {i} contains no DFT bin")));
        }
        let mut rng = seeds::named_rng(seed, "band", &[i as u64]);
        let scale = (n as f64) / (bins.len() as f64).sqrt();
        for b in bins {
            if owner[b] != usize::MAX {
                return Err(Error::invalid(format!(
                    "bands {} and {i} overlap",
                    owner[b]
                )));
            }
            owner[b] = i;
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            spectrum[b] = Complex64::new(re, im) * (scale / std::f64::consts::SQRT_2);
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let inv = 1.0 / n as f64;
    spectrum.iter_mut().for_each(|s| *s *= inv);
    ComplexSignal::new(spectrum, sample_interval, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radio(seed: u64) -> RadioConfig {
        RadioConfig {
            hop_count: 4,
            hri_seconds: 1e-3,
            delay_seconds: 1e-4,
            freq_range: (0.0, 2.0e6),
            symbol_rate: RadioConfig::symbol_rate_for_bandwidth(25e3, 0.3),
            excess_bandwidth: 0.3,
            seed,
        }
    }

    #[test]
    fn window_shape() {
        let th = 0.95e-3;
        assert_eq!(hop_window(0.5 * th, th).unwrap(), 1.0);
        assert_eq!(hop_window(-0.001, th).unwrap(), 0.0);
        assert!((hop_window(0.025 * th, th).unwrap() - 0.5).abs() < 1e-12);
        assert!((hop_window(0.975 * th, th).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(hop_window(th, th).unwrap(), 0.0);
        assert!(hop_window(0.1, 0.0).is_err());
        assert!(hop_window(0.1, -1.0).is_err());
    }

    #[test]
    fn raised_cosine_nulls_and_singularity() {
        assert_eq!(raised_cosine(0.0, 0.3), 1.0);
        for k in 1..6 {
            assert!(raised_cosine(k as f64, 0.3).abs() < 1e-15);
        }
        // removable singularity at t = 1/(2 beta) is continuous
        let t0 = 1.0 / 0.6;
        let left = raised_cosine(t0 - 1e-7, 0.3);
        assert!((raised_cosine(t0, 0.3) - left).abs() < 1e-6);
    }

    #[test]
    fn gray_mapping_is_unit_energy_and_distinct() {
        let pts: Vec<_> = (0..4u8).map(qpsk_gray).collect();
        for p in &pts {
            assert!((p.norm() - 1.0).abs() < 1e-15);
        }
        // adjacent labels differ in one bit and sit in adjacent quadrants
        assert!(((pts[0b00] - pts[0b01]).norm() - 2f64.sqrt()).abs() < 1e-12);
        assert!(((pts[0b01] - pts[0b11]).norm() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hop_is_time_limited() {
        let cfg = radio(3);
        let hop = HopRecord {
            radio_index: 0,
            hop_index: 0,
            carrier_hz: 0.0,
            phase_rad: 0.0,
            start_seconds: 2e-4,
            duration_seconds: cfg.hop_duration(),
        };
        let wave = HopWaveform::new(&cfg, 0);
        for t in [-1e-6, -1e-3, cfg.hop_duration(), cfg.hop_duration() + 1e-5] {
            assert_eq!(wave.eval(t), Complex64::new(0.0, 0.0));
        }
        let sig = synthesize_baseband_hop(&cfg, &hop, 4e-7).unwrap();
        assert!(sig.start_time >= hop.start_seconds);
        assert!(sig.time_of(sig.len() - 1) < hop.end_seconds());
        assert!(sig.energy() > 0.0);
    }

    #[test]
    fn undersampled_hop_rejected() {
        let cfg = radio(3);
        let hop = plan_hops(std::slice::from_ref(&cfg), 1.0)[0].clone();
        assert!(synthesize_baseband_hop(&cfg, &hop, 1e-4).is_err());
    }

    #[test]
    fn zero_radios_give_zero_signal() {
        let class = FhClassParams::new(0, 25e3, 1e-3);
        let (x, hops) = synthesize_fh_signal(&class, &[], 1e-3, 4e-7).unwrap();
        assert!(hops.is_empty());
        assert_eq!(x.len(), 2500);
        assert_eq!(x.energy(), 0.0);
    }

    #[test]
    fn rejects_violated_class() {
        let class = FhClassParams::new(2, 25e3, 1e-3);
        assert!(synthesize_fh_signal(&class, &[radio(1)], 1e-3, 4e-7).is_err());
        // sample interval too coarse for a 2 MHz span
        let class = FhClassParams::new(1, 25e3, 1e-3);
        assert!(synthesize_fh_signal(&class, &[radio(1)], 1e-3, 1e-6).is_err());
        let mut slow = radio(1);
        slow.hri_seconds = 5e-4;
        slow.delay_seconds = 0.0;
        assert!(synthesize_fh_signal(&class, &[slow], 1e-3, 4e-7).is_err());
    }

    #[test]
    fn hop_records_follow_timing_rule() {
        let cfg = radio(9);
        let hops = plan_hops(std::slice::from_ref(&cfg), 3.5e-3);
        assert_eq!(hops.len(), 4);
        for h in &hops {
            let expect = h.hop_index as f64 * cfg.hri_seconds + cfg.delay_seconds;
            assert!((h.start_seconds - expect).abs() < 1e-15);
            assert!(h.carrier_hz >= 0.0 && h.carrier_hz <= 2.0e6);
            assert!((0.0..2.0 * PI).contains(&h.phase_rad));
        }
    }

    #[test]
    fn multiband_rejects_overlap_and_handles_empty() {
        let z = synthesize_multiband_signal(&[], 1e3, 1e-2, 1e-5, 1).unwrap();
        assert_eq!(z.energy(), 0.0);
        assert!(synthesize_multiband_signal(&[1e4, 1.05e4], 1e3, 1e-2, 1e-5, 1).is_err());
    }
}
