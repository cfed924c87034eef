//! Scalar abstraction. Everything numeric in this crate is generic over a
//! real field `T: Real`; f32 and f64 are the two instantiations.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive, Zero};

/// Real scalar for the numeric core.
///
/// Combines the nalgebra scalar contract (dense linear algebra, SVD over
/// `Complex<T>`) with the rustfft one (FFT planning). Method calls such as
/// `x.abs()` resolve to the by-value `ComplexField` items, so the trait mix
/// stays unambiguous.
pub trait Real:
    RealField
    + rustfft::FftNum
    + FromPrimitive
    + ToPrimitive
    + Default
    + std::iter::Sum<Self>
    + std::fmt::LowerExp
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Lifts an f64 constant into `T`. The crate only lifts finite literals, so
/// a failed conversion is a programming error.
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("finite scalar literal")
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("usize representable in scalar type")
}

/// Pairwise (cascade) summation. Deterministic for a fixed slice order and
/// independent of thread count, with O(log n) error growth.
pub fn pairwise_sum<V>(xs: &[V]) -> V
where
    V: Zero + Copy + std::ops::Add<Output = V>,
{
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        let mut acc = V::zero();
        for &x in xs {
            acc = acc + x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Euclidean norm of a complex vector slice.
pub fn complex_vec_norm<T: Real>(v: &[Complex<T>]) -> T {
    let mut acc = T::zero();
    for z in v {
        acc += z.norm_sqr();
    }
    acc.sqrt()
}

/// Euclidean distance between two points of equal dimension.
#[inline]
pub fn dist<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc.sqrt()
}

#[inline]
pub fn norm<T: Real>(a: &[T]) -> T {
    let mut acc = T::zero();
    for &x in a {
        acc += x * x;
    }
    acc.sqrt()
}
