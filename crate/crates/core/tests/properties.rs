use mcfh::dpss::kept_count;
use mcfh::experiments::{nmse, ExperimentConfig};
use mcfh::mc_sampler::{build_measurement_matrix, random_pattern, sample, McConfig};
use mcfh::preprocessing::{interpolate_and_align, segment};
use mcfh::recovery::{least_squares_on_support, reassemble, somp_solve, SegmentSolution, SolverId, SupportSet};
use mcfh::{CMatrix, ComplexSignal, Complex64};
use proptest::prelude::*;

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| Complex64::new(a, b)), len)
}

fn period_and_q() -> impl Strategy<Value = (usize, usize)> {
    (2usize..=16).prop_flat_map(|l| (Just(l), 1..=l))
}

fn frob(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn patterns_are_sorted_distinct_and_in_range((l, q) in period_and_q(), seed in any::<u64>()) {
        let p = random_pattern(l, q, seed).unwrap();
        prop_assert_eq!(p.len(), q);
        prop_assert!(p.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(p.iter().all(|&c| c < l));
    }

    #[test]
    fn measurement_entries_have_unit_modulus((l, q) in period_and_q(), seed in any::<u64>()) {
        let cfg = McConfig::new(1.0, l, random_pattern(l, q, seed).unwrap()).unwrap();
        let a = build_measurement_matrix(&cfg).unwrap();
        prop_assert_eq!(a.entries.shape(), (q, l));
        prop_assert!(a.entries.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn coset_streams_pick_the_right_samples(
        (l, q) in period_and_q(),
        seed in any::<u64>(),
        x in complex_vec(200),
    ) {
        let cfg = McConfig::new(1.0, l, random_pattern(l, q, seed).unwrap()).unwrap();
        let signal = ComplexSignal::new(x.clone(), 1.0, 0.0).unwrap();
        let streams = sample(&signal, &cfg).unwrap();
        for (i, &c) in cfg.pattern.iter().enumerate() {
            for (k, v) in streams.streams[i].iter().enumerate() {
                prop_assert_eq!(*v, x[k * l + c]);
            }
        }
    }

    #[test]
    fn segments_partition_the_valid_range(r in 1usize..700, guard in 0usize..200) {
        let l = 4;
        let x = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); l * 256], 1.0, 0.0).unwrap();
        let cfg = McConfig::new(1.0, l, vec![0, 2]).unwrap();
        let aligned = interpolate_and_align(&sample(&x, &cfg).unwrap(), guard).unwrap();
        let segs = segment(&aligned, r).unwrap();
        let total: usize = segs.iter().map(|s| s.width()).sum();
        prop_assert_eq!(total, aligned.valid_range.len());
        prop_assert!(segs.windows(2).all(|w| w[0].start_index + w[0].width() == w[1].start_index));
        prop_assert!(segs.iter().rev().skip(1).all(|s| s.width() == r));
    }

    #[test]
    fn somp_solutions_are_consistent(
        (l, q) in period_and_q(),
        seed in any::<u64>(),
        z in complex_vec(16 * 5),
        sparsity in 1usize..8,
    ) {
        let cfg = McConfig::new(1.0, l, random_pattern(l, q, seed).unwrap()).unwrap();
        let a = build_measurement_matrix(&cfg).unwrap();
        let z = CMatrix::from_iterator(q, 5, z.into_iter().take(q * 5));
        if let Ok(sol) = somp_solve(&z, &a, sparsity, 1e-6) {
            prop_assert!(sol.support.size() <= sparsity.min(q));
            for row in 0..l {
                if !sol.support.indices.contains(&row) {
                    prop_assert!(sol.x_bb.row(row).iter().all(|v| v.norm() == 0.0));
                }
            }
            let residual = frob(&(&z - &a.entries * &sol.x_bb));
            prop_assert!((residual - sol.residual_norm).abs() <= 1e-12 * frob(&z).max(1.0));
            prop_assert!(sol.residual_norm <= frob(&z) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn least_squares_residual_is_orthogonal(
        seed in any::<u64>(),
        z in complex_vec(8 * 4),
        p in 1usize..6,
    ) {
        let (l, q) = (11, 8);
        let cfg = McConfig::new(1.0, l, random_pattern(l, q, seed).unwrap()).unwrap();
        let a = build_measurement_matrix(&cfg).unwrap();
        let z = CMatrix::from_iterator(q, 4, z);
        let support = SupportSet::new(random_pattern(l, p, seed ^ 0x5a5a).unwrap(), l).unwrap();
        let sol = least_squares_on_support(&z, &a, &support).unwrap();
        let a_i = a.columns(&support.indices);
        let r = &z - &a.entries * &sol.x_bb;
        prop_assert!(frob(&(a_i.adjoint() * r)) <= 1e-8 * frob(&z).max(1e-300));
    }

    #[test]
    fn split_reassembly_is_bit_identical(
        x in complex_vec(4 * 30),
        cut in 1usize..29,
        start in 0usize..50,
    ) {
        let l = 4;
        let cfg = McConfig::new(1.0, l, vec![0, 1, 3]).unwrap();
        let x_bb = CMatrix::from_iterator(l, 30, x);
        let make = |cols: std::ops::Range<usize>, idx: usize| SegmentSolution {
            support: SupportSet::new((0..l).collect(), l).unwrap(),
            x_bb: x_bb.columns(cols.start, cols.len()).into_owned(),
            residual_norm: 0.0,
            solver_id: SolverId::Known,
            wall_time_seconds: 0.0,
            segment_index: idx,
            start_index: start + cols.start,
            rank_z: 0,
            degenerate_covariance: false,
        };
        let whole = reassemble(&[make(0..30, 0)], &cfg).unwrap();
        let split = reassemble(&[make(0..cut, 0), make(cut..30, 1)], &cfg).unwrap();
        prop_assert_eq!(whole, split);
    }

    #[test]
    fn nmse_is_nonnegative_and_zero_on_identity(x in complex_vec(64), y in complex_vec(64)) {
        let sx = ComplexSignal::new(x, 1.0, 0.0).unwrap();
        let sy = ComplexSignal::new(y, 1.0, 0.0).unwrap();
        if sx.energy() > 0.0 {
            prop_assert_eq!(nmse(&sx, &sx).unwrap(), 0.0);
            prop_assert!(nmse(&sy, &sx).unwrap() >= 0.0);
        }
    }

    #[test]
    fn kept_count_stays_in_range(n in 1usize..5000, l in 1usize..200, f in 0.1f64..8.0) {
        let w = 1.0 / (2.0 * l as f64);
        let k = kept_count(n, w, f).unwrap();
        prop_assert!(k >= 1 && k <= n);
        prop_assert!(k as f64 >= (f * 2.0 * n as f64 * w).min(n as f64) - 1e-6);
    }

    #[test]
    fn config_echo_round_trips(
        n in 1usize..8,
        l in 4usize..64,
        seed in any::<u64>(),
        trials in 1usize..10,
        tol in 1e-9f64..1e-2,
    ) {
        let cfg = ExperimentConfig {
            radio_count: n,
            period: l,
            q_values: vec![1, l / 2 + 1, l],
            master_seed: seed,
            trials,
            residual_tol: tol,
            ..ExperimentConfig::default()
        };
        // the echo records the effective sparsity cap
        let back = ExperimentConfig::from_key_values(&cfg.to_key_values()).unwrap();
        prop_assert_eq!(back.max_sparsity(), cfg.max_sparsity());
        prop_assert_eq!(back, ExperimentConfig { max_sparsity: Some(4 * n), ..cfg });
    }
}
