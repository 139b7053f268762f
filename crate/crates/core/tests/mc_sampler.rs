mod common;

use std::f64::consts::PI;

use common::gauss_rank;
use mcfh::fh_signal::synthesize_multiband_signal;
use mcfh::mc_sampler::{
    build_measurement_matrix, coherence_spark_bound, frequency_domain_residual, random_pattern, sample, spark,
    McConfig,
};
use mcfh::{CMatrix, ComplexSignal, Complex64};

fn ramp(n: usize, dt: f64) -> ComplexSignal {
    let s = (0..n).map(|k| Complex64::new(k as f64, -(k as f64) * 0.5)).collect();
    ComplexSignal::new(s, dt, 0.0).unwrap()
}

/// Spark by elimination-based rank over all column subsets.
fn spark_oracle(a: &CMatrix) -> usize {
    let (q, l) = a.shape();
    for size in 1..=q.min(l) {
        let mut found = false;
        for mask in 0u32..(1 << l) {
            if mask.count_ones() as usize != size {
                continue;
            }
            let cols: Vec<usize> = (0..l).filter(|&i| mask & (1 << i) != 0).collect();
            let sub = CMatrix::from_fn(q, size, |i, j| a[(i, cols[j])]);
            if gauss_rank(&sub, 1e-9) < size {
                found = true;
                break;
            }
        }
        if found {
            return size;
        }
    }
    q.min(l) + 1
}

#[test]
fn pattern_marginals_match_binomial() {
    let (l, q, seeds) = (16usize, 5usize, 10_000u64);
    let mut counts = vec![0u32; l];
    for s in 0..seeds {
        let p = random_pattern(l, q, s).unwrap();
        assert_eq!(p.len(), q);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        for c in p {
            counts[c] += 1;
        }
    }
    let prob = q as f64 / l as f64;
    let mean = seeds as f64 * prob;
    let sigma = (seeds as f64 * prob * (1.0 - prob)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        assert!((c as f64 - mean).abs() <= 3.0 * sigma, "index {i}: {c} vs {mean}");
    }
}

#[test]
fn pattern_edge_cases() {
    assert_eq!(random_pattern(7, 7, 3).unwrap(), (0..7).collect::<Vec<_>>());
    assert_eq!(random_pattern(20, 6, 42).unwrap(), random_pattern(20, 6, 42).unwrap());
    assert!(random_pattern(4, 5, 0).is_err());
}

#[test]
fn spark_matches_elimination_oracle() {
    let aliased = build_measurement_matrix(&McConfig::new(1.0, 6, vec![0, 3]).unwrap()).unwrap();
    assert_eq!(spark(&aliased).unwrap(), 2);
    assert_eq!(spark_oracle(&aliased.entries), 2);

    let full = build_measurement_matrix(&McConfig::new(1.0, 5, (0..5).collect()).unwrap()).unwrap();
    assert_eq!(spark(&full).unwrap(), 6);

    // every 4-of-8 pattern; composite L leaves most patterns short of q + 1
    let mut histogram = [0usize; 6];
    for mask in 0u32..256 {
        if mask.count_ones() != 4 {
            continue;
        }
        let pattern: Vec<usize> = (0..8).filter(|&i| mask & (1 << i) != 0).collect();
        let a = build_measurement_matrix(&McConfig::new(1.0, 8, pattern.clone()).unwrap()).unwrap();
        let s = spark(&a).unwrap();
        assert_eq!(s, spark_oracle(&a.entries), "pattern {pattern:?}");
        assert!(coherence_spark_bound(&a) <= s);
        histogram[s] += 1;
    }
    assert_eq!(histogram, [0, 0, 2, 4, 48, 16]);

    // prime L: every pattern is full spark
    for seed in 0..20 {
        let a = build_measurement_matrix(&McConfig::new(1.0, 7, random_pattern(7, 4, seed).unwrap()).unwrap()).unwrap();
        assert_eq!(spark(&a).unwrap(), 5);
    }
}

#[test]
fn measurement_matrix_is_a_row_subset_of_the_dft() {
    let cfg = McConfig::new(1.0, 4, vec![1]).unwrap();
    let a = build_measurement_matrix(&cfg).unwrap();
    let expected = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ];
    for (l, e) in expected.iter().enumerate() {
        assert!((a.entries[(0, l)] - e).norm() < 1e-15);
    }

    let cfg = McConfig::new(1.0, 13, vec![0, 2, 5, 11, 12]).unwrap();
    let a = build_measurement_matrix(&cfg).unwrap();
    for (i, &c) in cfg.pattern.iter().enumerate() {
        for l in 0..13 {
            let e = Complex64::new((2.0 * PI * (c * l) as f64 / 13.0).cos(), (2.0 * PI * (c * l) as f64 / 13.0).sin());
            assert!((a.entries[(i, l)] - e).norm() <= 1e-14);
        }
    }
    let ones = build_measurement_matrix(&McConfig::new(1.0, 6, vec![0]).unwrap()).unwrap();
    assert!(ones.entries.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() == 0.0));
}

#[test]
fn merged_streams_reproduce_the_dense_subsequence() {
    let x = ramp(600, 1.0);
    let cfg = McConfig::new(1.0, 6, vec![1, 2, 5]).unwrap();
    let streams = sample(&x, &cfg).unwrap();

    let mut merged: Vec<(f64, Complex64)> = Vec::new();
    for (i, s) in streams.streams.iter().enumerate() {
        for (k, v) in s.iter().enumerate() {
            merged.push((streams.sample_time(i, k), *v));
        }
    }
    merged.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let times: Vec<f64> = merged.iter().take(6).map(|m| m.0).collect();
    assert_eq!(times, vec![1.0, 2.0, 5.0, 7.0, 8.0, 11.0]);

    let expected: Vec<usize> = (0..600).filter(|k| [1, 2, 5].contains(&(k % 6))).collect();
    assert_eq!(merged.len(), expected.len());
    for ((_, v), k) in merged.iter().zip(expected) {
        assert_eq!(*v, x.samples[k]);
    }
}

#[test]
fn output_rate_is_q_over_l_tc() {
    let tc = 4e-7;
    let x = ramp(32 * 100 + 7, tc);
    let cfg = McConfig::new(tc, 32, vec![0, 3, 9, 17, 30]).unwrap();
    let streams = sample(&x, &cfg).unwrap();
    let total: usize = streams.streams.iter().map(Vec::len).sum();
    let expected = x.duration() * cfg.average_rate();
    assert!((total as f64 - expected).abs() <= 5.0 + 1.0);
    assert!((cfg.average_rate() - 5.0 / (32.0 * tc)).abs() < 1e-6);
}

#[test]
fn model_residual_for_tone_multiband_and_zero() {
    let (l, k) = (8usize, 512usize);
    let n = l * k;
    let tc = 1.0;
    let cfg = McConfig::new(tc, l, vec![0, 3, 4, 6]).unwrap();

    // slice 3 center, integer number of cycles over the record
    let f = 3.0 / l as f64;
    let tone: Vec<Complex64> = (0..n).map(|m| Complex64::from_polar(1.0, 2.0 * PI * f * m as f64)).collect();
    let x = ComplexSignal::new(tone, tc, 0.0).unwrap();
    assert!(frequency_domain_residual(&x, &sample(&x, &cfg).unwrap()).unwrap() <= 1e-6);

    let width = 1.0 / (l as f64 * tc);
    let mb = synthesize_multiband_signal(&[1.3 * width, 5.6 * width], 0.4 * width, n as f64 * tc, tc, 4).unwrap();
    assert!(frequency_domain_residual(&mb, &sample(&mb, &cfg).unwrap()).unwrap() <= 1e-3);

    let zero = ComplexSignal::zeros(n, tc, 0.0).unwrap();
    assert_eq!(frequency_domain_residual(&zero, &sample(&zero, &cfg).unwrap()).unwrap(), 0.0);
}
