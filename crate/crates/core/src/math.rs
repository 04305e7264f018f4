//! Float functions that work with and without `std`.

use num_traits::Float;

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    Float::sqrt(x)
}

#[inline]
pub(crate) fn powf(x: f64, p: f64) -> f64 {
    Float::powf(x, p)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    Float::abs(x)
}
