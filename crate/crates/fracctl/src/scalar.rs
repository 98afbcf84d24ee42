use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the numerical core is written against.
///
/// Implemented for `f32` and `f64`. Everything here goes through nalgebra's
/// `RealField`, so method names such as `powf`, `ln` or `max` resolve
/// unambiguously.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    const EPS: Self;
    /// Largest argument for which `exp` stays finite.
    const LN_MAX: Self;
}

impl Real for f64 {
    const EPS: f64 = f64::EPSILON;
    const LN_MAX: f64 = 709.0;
}

impl Real for f32 {
    const EPS: f32 = f32::EPSILON;
    const LN_MAX: f32 = 88.0;
}

#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable")
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("usize representable")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug)]
pub(crate) struct CompensatedSum<T: Real> {
    sum: T,
    comp: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new() -> Self {
        Self { sum: T::zero(), comp: T::zero() }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}
