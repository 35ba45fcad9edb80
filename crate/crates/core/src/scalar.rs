//! Scalar bounds shared by the numeric kernels and the placement policies.
//!
//! Placement and L×V matrix construction only compare and multiply scores, so
//! they accept any [`Scalar`], including exact rationals. Clustering needs
//! square roots and conversions and is bounded on [`Real`].

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num};

pub trait Scalar: Copy + PartialOrd + Num + Debug {}

impl<T> Scalar for T where T: Copy + PartialOrd + Num + Debug {}

pub trait Real: Scalar + Float + FromPrimitive + Sum {}

impl<T> Real for T where T: Scalar + Float + FromPrimitive + Sum {}

/// Total order for scalars known not to be NaN. Incomparable values sort equal.
pub(crate) fn cmp_scalar<T: PartialOrd>(a: &T, b: &T) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
}

pub(crate) fn max_scalar<T: Scalar>(values: impl IntoIterator<Item = T>) -> Option<T> {
    values
        .into_iter()
        .fold(None, |acc, v| match acc {
            Some(m) if m >= v => Some(m),
            _ => Some(v),
        })
}
