//! Compensated (Neumaier) summation.

use std::iter::Sum;
use std::ops::AddAssign;

use crate::scalar::Real;

/// Running sum with a separate compensation term for lost low-order bits.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum<T> {
    sum: T,
    compensation: T,
}

impl<T: Real> NeumaierSum<T> {
    pub fn new() -> Self {
        NeumaierSum {
            sum: T::zero(),
            compensation: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, value: T) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation = self.compensation + ((self.sum - t) + value);
        } else {
            self.compensation = self.compensation + ((value - t) + self.sum);
        }
        self.sum = t;
    }

    /// Folds another partial sum into this one (parallel reductions).
    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    #[inline]
    pub fn total(&self) -> T {
        self.sum + self.compensation
    }
}

impl<T: Real> AddAssign<T> for NeumaierSum<T> {
    fn add_assign(&mut self, value: T) {
        self.add(value);
    }
}

impl<T: Real> Sum<T> for NeumaierSum<T> {
    fn sum<I: Iterator<Item = T>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}
