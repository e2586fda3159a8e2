//! Randomized checks of the model, billiard and harness invariants.

use exchain_core::billiard::{sample_conditional_liouville, BilliardSim, ChainLayout};
use exchain_core::chain::{clock_rate, simulate, EnergyChain, FnSink, ModelParams};
use exchain_core::estimators::{EmpiricalCcdf, ReferenceSet};
use exchain_core::harness::{run_replicas, RunOptions, SeedSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn energies(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 1e-6..1e-2, 1e-2..10.0], n)
}

fn chain_case() -> impl Strategy<Value = (usize, usize, f64, f64, Vec<f64>, u64)> {
    (1usize..6, 1usize..5, 0.1..5.0, 0.1..5.0, any::<u64>())
        .prop_flat_map(|(n, m, tl, tr, seed)| energies(n).prop_map(move |e| (n, m, tl, tr, e, seed)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jumps_conserve_internally_and_stay_nonnegative((n, m, tl, tr, start, seed) in chain_case()) {
        prop_assume!(start[0] > 0.0 || start[n - 1] > 0.0 || start.windows(2).any(|w| w[0] > 0.0 && w[1] > 0.0));
        let params = ModelParams::new(n, m, tl, tr).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut last_time = 0.0;
        let mut bad = Vec::new();
        let mut sink = FnSink(|ev: &exchain_core::JumpEvent, e: &[f64]| {
            if ev.time < last_time || e.iter().any(|&x| !(x >= 0.0)) || ev.post.iter().any(|&x| !(x >= 0.0)) {
                bad.push(format!("{ev:?}"));
            }
            last_time = ev.time;
            if (ev.flux - (ev.post[0] - ev.pre[0])).abs() > 0.0 {
                bad.push(format!("flux convention: {ev:?}"));
            }
            if ev.bond > 0 && ev.bond < n {
                let before = ev.pre[0] + ev.pre[1];
                let after = ev.post[0] + ev.post[1];
                if (after - before).abs() > 1e-12 * before {
                    bad.push(format!("not conserved: {ev:?}"));
                }
            }
        });
        let end = simulate(&params, EnergyChain::new(start).unwrap(), 20.0, &mut rng, &mut [&mut sink]).unwrap();
        prop_assert!(bad.is_empty(), "{:?}", bad);
        prop_assert!(end.energies.iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn clock_rate_is_half_homogeneous(a in 0.0..1e3f64, b in 0.0..1e3f64, alpha in 1e-6..1e6f64) {
        let r = clock_rate(a, b).unwrap();
        let scaled = clock_rate(alpha * a, alpha * b).unwrap();
        prop_assert!((scaled - alpha.sqrt() * r).abs() <= 1e-12 * scaled.max(1e-300));
    }

    #[test]
    fn invalid_params_are_rejected(n in 0usize..3, m in 0usize..3, tl in -1.0..1.0f64, tr in -1.0..1.0f64) {
        let ok = n >= 1 && m >= 1 && tl > 0.0 && tr > 0.0;
        prop_assert_eq!(ModelParams::new(n, m, tl, tr).is_ok(), ok);
    }

    #[test]
    fn ccdf_is_a_survival_function(
        xs in prop::collection::vec(0.0..100.0f64, 1..200),
        censored in 0usize..20,
        probes in prop::collection::vec(-1.0..150.0f64, 1..30),
    ) {
        let c = EmpiricalCcdf::new(xs, censored, Some(100.0)).unwrap();
        prop_assert_eq!(c.ccdf(-1e-9), 1.0);
        let mut ts = probes;
        ts.sort_by(f64::total_cmp);
        let vals: Vec<f64> = ts.iter().map(|&t| c.ccdf(t)).collect();
        prop_assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(vals.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn reference_box_membership_is_per_coordinate(e in prop::collection::vec(0.0..200.0f64, 1..6)) {
        let r = ReferenceSet::default();
        prop_assert_eq!(r.contains(&e), e.iter().all(|&x| (r.lower..=r.upper).contains(&x)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn closed_billiard_conserves_confines_and_never_overlaps(
        m in 1usize..5,
        e1 in 0.05..0.95f64,
        seed in any::<u64>(),
    ) {
        let g = ChainLayout::default().with_disks(m).build::<f64>().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sample_conditional_liouville(&g, &[e1, 1.0 - e1], &mut rng).unwrap();
        let cells: Vec<usize> = s.disks.iter().map(|d| d.cell).collect();
        let e0 = s.total_energy();
        let mut sim = BilliardSim::new(&g, s).unwrap();
        for _ in 0..5_000 {
            sim.advance().unwrap();
            let st = sim.state();
            prop_assert!(st.min_pair_gap(g.disk_radius) >= -1e-9);
            prop_assert!(st.min_wall_gap(&g) >= -1e-9);
        }
        let st = sim.state();
        prop_assert!(((st.total_energy() - e0) / e0).abs() <= 1e-9);
        for (d, &c) in st.disks.iter().zip(&cells) {
            prop_assert_eq!(d.cell, c);
            prop_assert!(g.contains(c, d.position));
        }
    }

    #[test]
    fn merged_results_ignore_worker_count(count in 0u64..400, workers in 2usize..9, seed in any::<u64>()) {
        let seeds = SeedSpec::new(seed);
        let task = |i: u64, rng: &mut ChaCha8Rng| -> Result<(u64, f64), String> { Ok((i, rng.random::<f64>())) };
        let one = run_replicas(count, &seeds, RunOptions { workers: 1, progress: false }, task).unwrap();
        let many = run_replicas(count, &seeds, RunOptions { workers, progress: false }, task).unwrap();
        prop_assert_eq!(&one.results, &many.results);
        prop_assert_eq!(one.sample_digest(), many.sample_digest());
        if count > 0 {
            let i = seed % count;
            prop_assert_eq!(task(i, &mut seeds.stream(i)).unwrap(), one.results[i as usize]);
        }
    }

    #[test]
    fn seed_derivation_is_pure(seed in any::<u64>(), tag in any::<u64>(), index in any::<u64>()) {
        let a = SeedSpec::new(seed).derive(tag);
        prop_assert_eq!(a, SeedSpec::new(seed).derive(tag));
        let x: u64 = a.stream(index).random();
        let y: u64 = SeedSpec::new(seed).derive(tag).stream(index).random();
        prop_assert_eq!(x, y);
        prop_assert_ne!(a, SeedSpec::new(seed).derive(tag.wrapping_add(1)));
    }
}
