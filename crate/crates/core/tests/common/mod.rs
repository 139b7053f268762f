//! Independent reference computations for the integration tests. Nothing here
//! calls into the crate's numerical routines.
#![allow(dead_code)]

use std::f64::consts::PI;

use mcfh::fh_signal::RadioConfig;
use mcfh::{CMatrix, Complex64};

/// Direct `O(n^2)` DFT, `X[b] = sum_k x[k] exp(-j 2 pi b k / n)`.
pub fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let twiddle: Vec<Complex64> = (0..n)
        .map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 / n as f64))
        .collect();
    (0..n)
        .map(|b| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut idx = 0usize;
            for v in x {
                acc += v * twiddle[idx];
                idx = (idx + b) % n;
            }
            acc
        })
        .collect()
}

/// Signed frequency (Hz) of DFT bin `b` of an `n`-point record.
pub fn bin_frequency(b: usize, n: usize, dt: f64) -> f64 {
    let s = if b <= n / 2 { b as f64 } else { b as f64 - n as f64 };
    s / (n as f64 * dt)
}

/// Rank by Gaussian elimination with complete pivoting.
pub fn gauss_rank(m: &CMatrix, rel_tol: f64) -> usize {
    let mut a: Vec<Vec<Complex64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    let (rows, cols) = (m.nrows(), m.ncols());
    let scale = a.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    let mut col_done = vec![false; cols];
    for r in 0..rows {
        let mut best = (0.0, 0, 0);
        for (i, row) in a.iter().enumerate().skip(r) {
            for (j, v) in row.iter().enumerate() {
                if !col_done[j] && v.norm() > best.0 {
                    best = (v.norm(), i, j);
                }
            }
        }
        if best.0 <= rel_tol * scale {
            break;
        }
        a.swap(r, best.1);
        let pc = best.2;
        col_done[pc] = true;
        let pivot = a[r][pc];
        for i in r + 1..rows {
            let f = a[i][pc] / pivot;
            for j in 0..cols {
                let sub = f * a[r][j];
                a[i][j] -= sub;
            }
        }
        rank += 1;
    }
    rank
}

/// Blackman-windowed sinc lowpass with cutoff `fc` (cycles per sample), unit DC gain.
pub fn lowpass_taps(fc: f64, half_len: usize) -> Vec<f64> {
    let n = 2 * half_len + 1;
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let m = i as f64 - half_len as f64;
            let sinc = if m == 0.0 { 2.0 * fc } else { (2.0 * PI * fc * m).sin() / (PI * m) };
            let w = 0.42 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()
                + 0.08 * (4.0 * PI * i as f64 / (n - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= dc);
    h
}

/// Slice `l` of `x` at the base rate: demodulate by `exp(-j 2 pi l k / L)` and
/// lowpass to `|f| < 1/(2L)` with a linear-phase FIR (zero delay, zero padded edges).
pub fn demod_fir_slice(x: &[Complex64], l: usize, period: usize, half_len: usize) -> Vec<Complex64> {
    let h = lowpass_taps(1.0 / (2.0 * period as f64), half_len);
    let d: Vec<Complex64> = x
        .iter()
        .enumerate()
        .map(|(k, v)| v * Complex64::from_polar(1.0, -2.0 * PI * ((l * k) % period) as f64 / period as f64))
        .collect();
    let n = x.len() as i64;
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, t) in h.iter().enumerate() {
                let idx = k + half_len as i64 - i as i64;
                if (0..n).contains(&idx) {
                    acc += d[idx as usize] * *t;
                }
            }
            acc
        })
        .collect()
}

/// Raised-cosine pulse, evaluated independently of the crate.
pub fn raised_cosine(t: f64, beta: f64) -> f64 {
    let sinc = if t.abs() < 1e-12 { 1.0 } else { (PI * t).sin() / (PI * t) };
    let d = 1.0 - (2.0 * beta * t).powi(2);
    if d.abs() < 1e-10 {
        PI / 4.0 * sinc
    } else {
        sinc * (PI * beta * t).cos() / d
    }
}

pub fn radio(seed: u64, hri: f64, hops: usize, freq_range: (f64, f64)) -> RadioConfig {
    RadioConfig {
        hop_count: hops,
        hri_seconds: hri,
        delay_seconds: 0.0,
        freq_range,
        symbol_rate: RadioConfig::symbol_rate_for_bandwidth(25_000.0, 0.3),
        excess_bandwidth: 0.3,
        seed,
    }
}

pub fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}
