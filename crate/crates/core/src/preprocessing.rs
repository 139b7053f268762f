//! Interpolation and delay correction of coset streams, and segmentation into
//! per-segment measurement matrices.
//!
//! Each coset stream is upsampled by `L` with an ideal lowpass interpolator and
//! delayed by `c_i` base samples so that `z_i(k) = y_i((k - c_i) / L)`. The
//! interpolator works on the whole record with one FFT pair, so it treats the
//! record as one period of a periodic signal. Within that model
//! `z(k) = A x_bb(k)` holds exactly, where `x_bb` is the slice decomposition
//! returned by [`slice_components`]. Samples near the record ends carry the
//! wrap-around transient and are excluded through a guard.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mc_sampler::{CosetStreams, McConfig, MeasurementMatrix};
use crate::signal::ComplexSignal;
use crate::CMatrix;

/// Default guard, in base-rate samples, excluded at each end of the record.
pub const DEFAULT_GUARD: usize = 512;

/// Shortest coset stream accepted by [`interpolate_and_align`].
pub const MIN_STREAM_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedStreams {
    /// `q` streams at the base rate, each `K L` samples long.
    pub streams: Vec<Vec<Complex64>>,
    pub config: McConfig,
    pub origin_time: f64,
    /// Base-rate indices outside the guards.
    pub valid_range: Range<usize>,
}

impl AlignedStreams {
    pub fn len(&self) -> usize {
        self.streams.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One `q x r` block `[Z]_ij = z_i(k_1 + j)` of the aligned streams.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMatrix {
    pub entries: CMatrix,
    pub segment_index: usize,
    /// Global base-rate index `k_1` of the first column.
    pub start_index: usize,
    pub config: McConfig,
}

impl SegmentMatrix {
    pub fn width(&self) -> usize {
        self.entries.ncols()
    }

    pub fn index_range(&self) -> Range<usize> {
        self.start_index..self.start_index + self.width()
    }
}

/// Bins of a length-`n` DFT that belong to slice `l` when `n = K L`:
/// `[l K - K/2, l K - K/2 + K)` taken modulo `n`.
fn slice_bins(l: usize, k: usize, n: usize) -> impl Iterator<Item = usize> {
    let lo = (l * k) as i64 - (k / 2) as i64;
    (lo..lo + k as i64).map(move |b| b.rem_euclid(n as i64) as usize)
}

/// Upsample, lowpass and delay every coset stream.
///
/// `guard` base-rate samples are excluded from `valid_range` at each end.
pub fn interpolate_and_align(streams: &CosetStreams, guard: usize) -> Result<AlignedStreams> {
    let cfg = &streams.config;
    cfg.validate()?;
    let k = streams.stream_len();
    if k < MIN_STREAM_LEN {
        return Err(Error::invalid(format!(
            "coset streams need at least {MIN_STREAM_LEN} samples, got {k}"
        )));
    }
    if streams.streams.iter().any(|s| s.len() != k) {
        return Err(Error::invalid("coset streams have unequal lengths"));
    }
    let l = cfg.period;
    let n = k * l;
    if 2 * guard >= n {
        return Err(Error::invalid(format!(
            "guard {guard} leaves no valid samples in a record of {n}"
        )));
    }

    let mut planner = FftPlanner::new();
    let fft_k = planner.plan_fft_forward(k);
    let ifft_n = planner.plan_fft_inverse(n);
    let aligned: Vec<Vec<Complex64>> = streams
        .streams
        .par_iter()
        .zip(cfg.pattern.par_iter())
        .map(|(y, &c)| {
            if l == 1 {
                return y.clone();
            }
            let mut spec = y.clone();
            fft_k.process(&mut spec);
            // ideal lowpass over slice 0 with gain L, then 1/n for the inverse
            let gain = l as f64 / n as f64;
            let mut v = vec![Complex64::new(0.0, 0.0); n];
            for b in slice_bins(0, k, n) {
                v[b] = spec[b % k] * gain;
            }
            ifft_n.process(&mut v);
            (0..n).map(|idx| v[(idx + n - c) % n]).collect()
        })
        .collect();

    Ok(AlignedStreams {
        streams: aligned,
        config: cfg.clone(),
        origin_time: streams.origin_time,
        valid_range: guard..n - guard,
    })
}

/// Cut `valid_range` into consecutive width-`r` windows; a shorter final window
/// keeps its true width.
pub fn segment(aligned: &AlignedStreams, r: usize) -> Result<Vec<SegmentMatrix>> {
    if r == 0 {
        return Err(Error::invalid("segment width r must be positive"));
    }
    let q = aligned.streams.len();
    let range = aligned.valid_range.clone();
    Ok(range
        .clone()
        .step_by(r)
        .enumerate()
        .map(|(idx, start)| {
            let width = r.min(range.end - start);
            SegmentMatrix {
                entries: CMatrix::from_fn(q, width, |i, j| aligned.streams[i][start + j]),
                segment_index: idx,
                start_index: start,
                config: aligned.config.clone(),
            }
        })
        .collect())
}

/// Slice decomposition of a record: row `l` holds the baseband stream
/// `x_l(k) = exp(-j 2 pi l k / L) * (x band-limited to slice l)(k)`.
///
/// Only the first `floor(len / L) * L` samples are used. Summing
/// `x_l(k) exp(j 2 pi l k / L)` over `l` gives the record back.
pub fn slice_components(x: &ComplexSignal, period: usize) -> Result<CMatrix> {
    if period == 0 {
        return Err(Error::invalid("period must be positive"));
    }
    let k = x.len() / period;
    if k == 0 {
        return Err(Error::invalid("record shorter than one period"));
    }
    let n = k * period;
    let mut planner = FftPlanner::new();
    let mut spec = x.samples[..n].to_vec();
    planner.plan_fft_forward(n).process(&mut spec);
    let ifft = planner.plan_fft_inverse(n);

    let rows: Vec<Vec<Complex64>> = (0..period)
        .into_par_iter()
        .map(|l| {
            let mut band = vec![Complex64::new(0.0, 0.0); n];
            for b in slice_bins(l, k, n) {
                band[b] = spec[b] / n as f64;
            }
            ifft.process(&mut band);
            for (idx, v) in band.iter_mut().enumerate() {
                let e = ((l * idx) % period) as f64 / period as f64;
                *v *= Complex64::from_polar(1.0, -2.0 * PI * e);
            }
            band
        })
        .collect();
    Ok(CMatrix::from_fn(period, n, |l, idx| rows[l][idx]))
}

/// Columns of a slice-component matrix matching a segment's index range.
pub fn slice_segment(x_bb: &CMatrix, seg: &SegmentMatrix) -> Result<CMatrix> {
    let range = seg.index_range();
    if range.end > x_bb.ncols() || x_bb.nrows() != seg.config.period {
        return Err(Error::invalid("segment lies outside the slice-component matrix"));
    }
    Ok(x_bb.columns(range.start, range.len()).into_owned())
}

/// `||Z - A X_bb||_F / ||A X_bb||_F`, 0 when both vanish.
pub fn dtlms_residual(x_bb_truth: &CMatrix, z: &SegmentMatrix, a: &MeasurementMatrix) -> Result<f64> {
    let (q, l) = a.entries.shape();
    if x_bb_truth.nrows() != l
        || x_bb_truth.ncols() != z.width()
        || z.entries.nrows() != q
    {
        return Err(Error::invalid(format!(
            "shape mismatch: X_bb {}x{}, Z {}x{}, A {q}x{l}",
            x_bb_truth.nrows(),
            x_bb_truth.ncols(),
            z.entries.nrows(),
            z.width()
        )));
    }
    let ax = &a.entries * x_bb_truth;
    let num = linalg::frobenius(&(&z.entries - &ax));
    let den = linalg::frobenius(&ax);
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc_sampler::{build_measurement_matrix, sample};

    fn tone(n: usize, bin: f64) -> ComplexSignal {
        let s = (0..n)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * bin * k as f64 / n as f64))
            .collect();
        ComplexSignal::new(s, 1.0, 0.0).unwrap()
    }

    #[test]
    fn identity_sampler_is_copied() {
        let x = tone(64, 3.3);
        let cfg = McConfig::new(1.0, 1, vec![0]).unwrap();
        let al = interpolate_and_align(&sample(&x, &cfg).unwrap(), 0).unwrap();
        assert_eq!(al.streams[0], x.samples);
    }

    #[test]
    fn short_streams_rejected() {
        let x = tone(8 * 31, 1.0);
        let cfg = McConfig::new(1.0, 8, vec![0, 3]).unwrap();
        assert!(interpolate_and_align(&sample(&x, &cfg).unwrap(), 0).is_err());
    }

    #[test]
    fn zero_streams_zero_output() {
        let x = ComplexSignal::zeros(8 * 64, 1.0, 0.0).unwrap();
        let cfg = McConfig::new(1.0, 8, vec![1, 6]).unwrap();
        let al = interpolate_and_align(&sample(&x, &cfg).unwrap(), 16).unwrap();
        assert!(al.streams.iter().flatten().all(|v| v.norm() == 0.0));
        assert_eq!(al.valid_range, 16..8 * 64 - 16);
    }

    #[test]
    fn interpolation_passes_through_coset_samples() {
        let x = tone(12 * 40, 7.4);
        let cfg = McConfig::new(1.0, 12, vec![0, 5, 11]).unwrap();
        let s = sample(&x, &cfg).unwrap();
        let al = interpolate_and_align(&s, 0).unwrap();
        for (i, &c) in cfg.pattern.iter().enumerate() {
            for k in 0..s.stream_len() {
                assert!((al.streams[i][k * 12 + c] - s.streams[i][k]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn baseband_tone_reproduced() {
        // slice-0 tone on the DFT grid: every z_i equals x
        let l = 8;
        let x = tone(l * 128, 37.0);
        let cfg = McConfig::new(1.0, l, vec![0, 2, 3, 7]).unwrap();
        let al = interpolate_and_align(&sample(&x, &cfg).unwrap(), 0).unwrap();
        for z in &al.streams {
            for (a, b) in z.iter().zip(&x.samples) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn segmentation_counts() {
        let cfg = McConfig::new(1.0, 1, vec![0]).unwrap();
        let mk = |len: usize| AlignedStreams {
            streams: vec![vec![Complex64::new(0.0, 0.0); len]],
            config: cfg.clone(),
            origin_time: 0.0,
            valid_range: 0..len,
        };
        let segs = segment(&mk(100), 20).unwrap();
        assert_eq!(segs.len(), 5);
        let segs = segment(&mk(105), 20).unwrap();
        assert_eq!(segs.len(), 6);
        assert_eq!(segs[5].width(), 5);
        assert_eq!(segs[5].start_index, 100);
        assert!(segment(&mk(10), 1).unwrap().iter().all(|s| s.width() == 1));
        assert!(segment(&mk(10), 0).is_err());
    }

    #[test]
    fn slices_sum_to_record() {
        let n = 6 * 50;
        let x = ComplexSignal::new(
            (0..n)
                .map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64).sqrt()))
                .collect(),
            1.0,
            0.0,
        )
        .unwrap();
        let xb = slice_components(&x, 6).unwrap();
        for k in 0..n {
            let s: Complex64 = (0..6)
                .map(|l| xb[(l, k)] * Complex64::from_polar(1.0, 2.0 * PI * (l * k) as f64 / 6.0))
                .sum();
            assert!((s - x.samples[k]).norm() < 1e-10);
        }
    }

    #[test]
    fn dtlms_exact_in_periodic_model() {
        let l = 8;
        let n = l * 64;
        let x = ComplexSignal::new(
            (0..n)
                .map(|k| Complex64::new((k as f64 * 1.3).cos(), (k as f64 * 0.2).sin()))
                .collect(),
            1.0,
            0.0,
        )
        .unwrap();
        let cfg = McConfig::new(1.0, l, vec![0, 1, 4, 6]).unwrap();
        let a = build_measurement_matrix(&cfg).unwrap();
        let al = interpolate_and_align(&sample(&x, &cfg).unwrap(), 0).unwrap();
        let xb = slice_components(&x, l).unwrap();
        for seg in segment(&al, 100).unwrap() {
            let truth = slice_segment(&xb, &seg).unwrap();
            assert!(dtlms_residual(&truth, &seg, &a).unwrap() < 1e-10);
        }
    }

    #[test]
    fn dtlms_zero_and_shape() {
        let cfg = McConfig::new(1.0, 4, vec![0, 1]).unwrap();
        let a = build_measurement_matrix(&cfg).unwrap();
        let seg = SegmentMatrix {
            entries: CMatrix::zeros(2, 3),
            segment_index: 0,
            start_index: 0,
            config: cfg,
        };
        assert_eq!(dtlms_residual(&CMatrix::zeros(4, 3), &seg, &a).unwrap(), 0.0);
        assert!(dtlms_residual(&CMatrix::zeros(4, 2), &seg, &a).is_err());
    }
}
