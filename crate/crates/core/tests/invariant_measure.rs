//! The relaxed tail-corrected ensemble used as the numerical invariant
//! measure for N = 3, M = 2, T_L = 1, T_R = 2.

use exchain_core::chain::ModelParams;
use exchain_core::experiments::{numerical_invariant, RunSettings};

#[test]
fn relaxed_ensemble_has_the_predicted_low_energy_tail_and_is_stationary() {
    let p = ModelParams::new(3, 2, 1.0, 2.0).unwrap();
    let (d, _) = numerical_invariant(&p, 100.0, 100.0, 100_000, &RunSettings::new(41, 0)).unwrap();

    // P[E < eps] ~ eps^(M - 1/2), so the density goes like eps^(M - 3/2).
    let tail = d.low_energy_tail.expect("enough low-energy samples");
    assert!((tail.exponent - 0.5).abs() <= 3.0 * tail.stderr, "{tail:?}");

    for (m, s) in d.site_means.iter().zip(&d.site_stderrs) {
        assert!(*m > 1.0 - 3.0 * s && *m < 2.0 + 3.0 * s, "{d:?}");
    }
    assert!(d.site_means.windows(2).all(|w| w[0] < w[1]), "{d:?}");

    let z = (d.recheck_mean - d.site_means[1]) / (d.recheck_stderr.powi(2) + d.site_stderrs[1].powi(2)).sqrt();
    assert!(z.abs() <= 2.0, "{d:?}");
}
