//! Floating-point abstraction shared by the simulation kernels and estimators.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

/// Real scalar the kernels are generic over (`f32` or `f64`).
///
/// Geometric tolerances are exposed per type because the `f64` values
/// (`1e-12` contact tolerance, `1e-10` nudge) are below `f32` resolution.
pub trait Real: Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static {
    /// Relative tolerance for accepting a predicted contact.
    fn contact_tolerance() -> Self;
    /// Distance a disk is pushed off a contact after resolution.
    fn nudge() -> Self;
    /// Normal relative speed below which a contact is treated as a miss.
    fn grazing_speed() -> Self;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("integer representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn contact_tolerance() -> Self {
        1e-12
    }
    fn nudge() -> Self {
        1e-10
    }
    fn grazing_speed() -> Self {
        1e-12
    }
}

impl Real for f32 {
    fn contact_tolerance() -> Self {
        1e-5
    }
    fn nudge() -> Self {
        1e-4
    }
    fn grazing_speed() -> Self {
        1e-5
    }
}

/// Uniform variate on the open interval (0, 1); endpoints are redrawn.
pub fn open_unit<S: Real, R: Rng + ?Sized>(rng: &mut R) -> S {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            let s = S::lit(u);
            if s > S::zero() && s < S::one() {
                return s;
            }
        }
    }
}

/// Exponential variate with the given mean.
pub fn exponential<S: Real, R: Rng + ?Sized>(rng: &mut R, mean: S) -> S {
    let e: f64 = rng.sample(Exp1);
    S::lit(e) * mean
}

pub fn standard_normal<S: Real, R: Rng + ?Sized>(rng: &mut R) -> S {
    let z: f64 = rng.sample(StandardNormal);
    S::lit(z)
}
