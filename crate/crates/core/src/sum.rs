//! Compensated and partition-independent summation over index ranges.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

const CHUNK: i64 = 1 << 15;

/// Sums `f(n)` over `first..=last`.
///
/// The range is cut into fixed chunks that are summed in parallel and merged
/// in index order, so the result does not depend on the size of the worker
/// pool.
pub fn sum_range<F>(first: i64, last: i64, f: F) -> f64
where
    F: Fn(i64) -> f64 + Sync,
{
    if last < first {
        return 0.0;
    }
    let n_chunks = ((last - first) / CHUNK + 1) as usize;
    let partials: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = first + c as i64 * CHUNK;
            let hi = (lo + CHUNK - 1).min(last);
            let mut acc = CompensatedSum::new();
            for n in lo..=hi {
                acc.add(f(n));
            }
            acc.value()
        })
        .collect();
    let mut acc = CompensatedSum::new();
    acc.extend(partials);
    acc.value()
}

/// A truncated sum over `|n| <= n_max` together with the contribution of the
/// last decade, `N/10 < |n| <= N`, so convergence can be audited.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialSum {
    pub n: u64,
    pub value: f64,
    pub tail_increment: f64,
}

impl PartialSum {
    /// Relative size of the last-decade increment.
    pub fn relative_tail(&self) -> f64 {
        if self.value == 0.0 {
            0.0
        } else {
            self.tail_increment.abs() / self.value.abs()
        }
    }
}

/// Partial sum of `f` over the symmetric range `|n| <= n_max`.
pub fn symmetric_partial_sum<F>(n_max: u64, f: F) -> PartialSum
where
    F: Fn(i64) -> f64 + Sync,
{
    let outer = n_max as i64;
    let inner = outer / 10;
    let core = sum_range(-inner, inner, &f);
    let tail = sum_range(inner + 1, outer, &f) + sum_range(-outer, -inner - 1, &f);
    PartialSum {
        n: n_max,
        value: core + tail,
        tail_increment: tail,
    }
}
