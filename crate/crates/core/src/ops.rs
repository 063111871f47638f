//! Exact arithmetic-operation tallies.
//!
//! The projection kernels thread a `&mut OpCounter` through every floating
//! point operation they perform, so the tallies reflect the work actually
//! done rather than a formula evaluated after the fact.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Counts of multiplications, additions, subtractions, divisions and square
/// roots. Squaring counts as one multiplication.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpCounter {
    pub mults: u64,
    pub adds: u64,
    pub subs: u64,
    pub divs: u64,
    pub sqrts: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> u64 {
        self.mults + self.adds + self.subs + self.divs + self.sqrts
    }

    #[inline]
    pub(crate) fn mul(&mut self, k: u64) {
        self.mults += k;
    }

    #[inline]
    pub(crate) fn add(&mut self, k: u64) {
        self.adds += k;
    }

    #[inline]
    pub(crate) fn sub(&mut self, k: u64) {
        self.subs += k;
    }

    #[inline]
    pub(crate) fn div(&mut self, k: u64) {
        self.divs += k;
    }

    #[inline]
    pub(crate) fn sqrt(&mut self, k: u64) {
        self.sqrts += k;
    }
}

impl AddAssign for OpCounter {
    fn add_assign(&mut self, rhs: Self) {
        self.mults += rhs.mults;
        self.adds += rhs.adds;
        self.subs += rhs.subs;
        self.divs += rhs.divs;
        self.sqrts += rhs.sqrts;
    }
}

impl Add for OpCounter {
    type Output = OpCounter;

    fn add(mut self, rhs: Self) -> Self::Output {
        self += rhs;
        self
    }
}

impl Sum for OpCounter {
    fn sum<I: Iterator<Item = OpCounter>>(iter: I) -> Self {
        iter.fold(OpCounter::default(), |acc, c| acc + c)
    }
}
