use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ChainError, EnergyChain, ModelParams};
use crate::scalar::{exponential, open_unit, Real};

/// Which heat bath a bath clock couples to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Clock rate `sqrt(min(e_left, e_right))` of an internal bond.
pub fn clock_rate<S: Real>(e_left: S, e_right: S) -> Result<S, ChainError> {
    for e in [e_left, e_right] {
        if !(e >= S::zero()) {
            return Err(ChainError::NegativeEnergy(e.to_f64_lossy()));
        }
    }
    Ok(e_left.min(e_right).sqrt())
}

/// Bath clock rate, same functional form with the bath temperature in
/// place of the missing neighbour energy.
pub fn bath_rate<S: Real>(t_bath: S, e_site: S) -> Result<S, ChainError> {
    if !(t_bath > S::zero()) {
        return Err(ChainError::NonPositiveTemperature(t_bath.to_f64_lossy()));
    }
    clock_rate(t_bath, e_site)
}

/// Inverse-CDF draw of the Beta(1, M-1) participation fraction.
///
/// A lone particle (`M = 1`) carries the whole cell energy, so the fraction
/// is exactly one.
pub fn sample_participation<S: Real>(m: usize, u: S) -> S {
    match m {
        0 | 1 => S::one(),
        2 => u,
        _ => {
            let exponent = S::one() / S::from_usize_lossy(m - 1);
            S::one() - (S::one() - u).powf(exponent)
        }
    }
}

/// Redistribution fraction `p` and the two participation fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeDraw<S> {
    pub p: S,
    pub b1: S,
    pub b2: S,
}

impl<S: Real> ExchangeDraw<S> {
    /// `p` is uniform on the open interval; `b1`, `b2` are independent
    /// Beta(1, M-1) variates.
    pub fn sample<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        let p = open_unit(rng);
        let b1 = sample_participation(m, open_unit(rng));
        let b2 = sample_participation(m, open_unit(rng));
        Self { p, b1, b2 }
    }

    pub fn is_valid(&self) -> bool {
        let unit = |x: S| x >= S::zero() && x <= S::one();
        self.p > S::zero() && self.p < S::one() && unit(self.b1) && unit(self.b2)
    }
}

/// Internal exchange between sites `i` and `i + 1`.
///
/// Pools `(1-p) e_i b1` from the left and `p e_j b2` from the right and
/// swaps them. Both outputs are nonnegative for any valid draw.
pub fn exchange<S: Real>(e_i: S, e_j: S, draw: &ExchangeDraw<S>) -> (S, S) {
    let to_right = (S::one() - draw.p) * e_i * draw.b1;
    let to_left = draw.p * e_j * draw.b2;
    (e_i - to_right + to_left, e_j - to_left + to_right)
}

/// Exchange between an end site and a bath that contributes energy `x`.
pub fn bath_exchange<S: Real>(e_site: S, x: S, draw: &ExchangeDraw<S>) -> S {
    let from_site = e_site * draw.b1;
    e_site - from_site + draw.p * (from_site + x * draw.b2)
}

/// Initial condition with a corrected low-energy tail.
///
/// Each site is exponential with mean `(T_L + T_R) / 2`; draws at or below
/// `0.01` are replaced by `0.01 u^{1/(M - 1/2)}` so that
/// `P[E < eps] ~ eps^{M - 1/2}` near zero.
pub fn sample_tail_corrected_initial<S: Real, R: Rng + ?Sized>(params: &ModelParams<S>, rng: &mut R) -> EnergyChain<S> {
    let mean = (params.t_left + params.t_right) / S::lit(2.0);
    let cutoff = S::lit(0.01);
    let exponent = S::one() / (S::from_usize_lossy(params.m) - S::lit(0.5));
    let energies = (0..params.n)
        .map(|_| {
            let e = exponential(rng, mean);
            if e > cutoff {
                e
            } else {
                let u: S = open_unit(rng);
                cutoff * u.powf(exponent)
            }
        })
        .collect();
    EnergyChain { energies, time: S::zero() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn draw(p: f64, b1: f64, b2: f64) -> ExchangeDraw<f64> {
        ExchangeDraw { p, b1, b2 }
    }

    #[test]
    fn clock_rate_examples() {
        assert_eq!(clock_rate(1.0, 4.0).unwrap(), 1.0);
        assert_eq!(clock_rate(0.0, 5.0).unwrap(), 0.0);
        assert!((clock_rate(0.25, 0.04).unwrap() - 0.2f64).abs() < 1e-15);
        assert!(matches!(clock_rate(-1.0, 1.0), Err(ChainError::NegativeEnergy(_))));
    }

    #[test]
    fn bath_rate_examples() {
        assert!((bath_rate(1.0, 0.09).unwrap() - 0.3f64).abs() < 1e-15);
        assert_eq!(bath_rate(2.0, 9.0).unwrap(), 2f64.sqrt());
        assert_eq!(bath_rate(1.0, 0.0).unwrap(), 0.0);
        assert!(bath_rate(0.0, 1.0).is_err());
        assert!(bath_rate(1.0, -0.5).is_err());
    }

    #[test]
    fn participation_examples() {
        assert_eq!(sample_participation(1, 0.3), 1.0);
        assert_eq!(sample_participation(1, 0.999), 1.0);
        assert_eq!(sample_participation(2, 0.37), 0.37);
        // 1 - (1 - u)^{1/2}
        assert!((sample_participation(3, 0.75) - 0.5f64).abs() < 1e-15);
    }

    #[test]
    fn participation_mean_m3() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| sample_participation(3, open_unit::<f64, _>(&mut rng))).sum::<f64>() / n as f64;
        assert!((mean - 1.0 / 3.0).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn exchange_examples() {
        assert_eq!(exchange(3.0, 5.0, &draw(1.0, 1.0, 1.0)), (8.0, 0.0));
        assert_eq!(exchange(3.0, 5.0, &draw(0.0, 1.0, 1.0)), (0.0, 8.0));
        let (a, b) = exchange(0.8, 0.2, &draw(0.5, 0.5, 0.5));
        assert!((a - 0.65).abs() < 1e-15 && (b - 0.35).abs() < 1e-15);
        assert!((a + b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bath_exchange_examples() {
        assert_eq!(bath_exchange(1.0, 123.0, &draw(0.5, 1.0, 0.0)), 0.5);
        assert_eq!(bath_exchange(0.0, 2.0, &draw(1.0, 0.3, 1.0)), 2.0);
        assert!((bath_exchange(1.0, 2.0, &draw(0.5, 0.5, 0.5)) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn sampled_draws_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in 1..6 {
            for _ in 0..1000 {
                assert!(ExchangeDraw::<f64>::sample(m, &mut rng).is_valid());
            }
        }
    }

    #[test]
    fn tail_corrected_initial_plain_and_replaced() {
        let params = ModelParams::new(5, 2, 1.0f64, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let c = sample_tail_corrected_initial(&params, &mut rng);
            assert_eq!(c.len(), 5);
            assert!(c.energies.iter().all(|&e| e > 0.0));
        }
    }

    #[test]
    fn tail_corrected_initial_small_energy_law() {
        // Replacement density on (0, 0.01) gives P[E < eps | E < 0.01] = (eps / 0.01)^{M - 1/2}.
        let params = ModelParams::new(1, 2, 1.0f64, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let small: Vec<f64> =
            (0..4_000_000).map(|_| sample_tail_corrected_initial(&params, &mut rng).energies[0]).filter(|&e| e < 0.01).collect();
        assert!(small.len() > 20_000);
        for eps in [0.001, 0.003, 0.006] {
            let frac = small.iter().filter(|&&e| e < eps).count() as f64 / small.len() as f64;
            let expected = (eps / 0.01f64).powf(1.5);
            let se = (expected * (1.0 - expected) / small.len() as f64).sqrt();
            assert!((frac - expected).abs() < 4.0 * se, "eps {eps}: {frac} vs {expected}");
        }
    }

    proptest! {
        #[test]
        fn exchange_conserves_and_stays_nonnegative(
            e_i in 0.0f64..1e3, e_j in 0.0f64..1e3,
            p in 1e-9f64..(1.0 - 1e-9), b1 in 0.0f64..=1.0, b2 in 0.0f64..=1.0,
        ) {
            let (a, b) = exchange(e_i, e_j, &draw(p, b1, b2));
            prop_assert!(a >= 0.0 && b >= 0.0);
            prop_assert!(((a + b) - (e_i + e_j)).abs() <= 1e-12 * (e_i + e_j));
        }

        #[test]
        fn bath_exchange_nonnegative(e in 0.0f64..1e3, x in 0.0f64..1e3,
            p in 1e-9f64..(1.0 - 1e-9), b1 in 0.0f64..=1.0, b2 in 0.0f64..=1.0) {
            prop_assert!(bath_exchange(e, x, &draw(p, b1, b2)) >= 0.0);
        }

        #[test]
        fn rate_homogeneity(a in 0.0f64..1e3, b in 0.0f64..1e3, alpha in 1e-6f64..1e6) {
            let lhs = clock_rate(alpha * a, alpha * b).unwrap();
            let rhs = alpha.sqrt() * clock_rate(a, b).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(f64::MIN_POSITIVE));
        }
    }
}
