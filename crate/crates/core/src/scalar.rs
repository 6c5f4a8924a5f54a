//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All transforms, windows, bounds and receiver computations are written once
//! against [`Real`] and instantiated for `f32` and `f64`. Monte Carlo drivers
//! draw their random numbers in `f64` and convert, so both precisions see the
//! same random streams.

use std::fmt;
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating point scalar usable throughout the crate (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + FftNum + Default + Sum + fmt::Display + fmt::LowerExp
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` constant into the working precision.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in working precision")
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("usize representable in working precision")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// `10·log10(x)`.
#[inline]
pub fn db10<T: Real>(x: T) -> T {
    lit::<T>(10.0) * x.log10()
}

/// Inverse of [`db10`].
#[inline]
pub fn from_db10<T: Real>(db: T) -> T {
    lit::<T>(10.0).powf(db / lit(10.0))
}

/// Unit-modulus phasor `exp(j·theta)`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Reduces `x` into `[0, period)`.
#[inline]
pub fn wrap<T: Real>(x: T, period: T) -> T {
    let r = x % period;
    if r < T::zero() {
        r + period
    } else {
        r
    }
}

/// Neumaier-compensated sum; order-stable accumulation for long Monte Carlo
/// averages.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}
