//! Simulation laboratory for nonsingular Bernoulli shifts.
//!
//! The crate builds product measures on sequence spaces (finite alphabets and
//! piecewise-constant densities on intervals), samples finite windows of them
//! reproducibly, and runs the equivariant factor constructions on those
//! windows:
//!
//! * [`markers`] and [`matching`] hold the marker/filler combinatorics and the
//!   capacity-`d` Meshalkin matching,
//! * [`factor`] chains them into the low-entropy i.i.d. factor,
//! * [`typeiii`] implements the step-density families, the piecewise linear
//!   coordinate map and its pushforward,
//! * [`index`] covers blocking/interleaving isomorphisms, Kakutani block sums
//!   and the Hellinger diagnostics behind the ergodic-index classification.
//!
//! Infinite objects are always represented lazily (marginals are functions of
//! the index) and every truncation is an explicit argument.

pub mod error;
pub mod factor;
pub mod index;
pub mod markers;
pub mod matching;
pub mod measure;
pub mod report;
pub mod sampling;
pub mod stats;
pub mod sum;
pub mod typeiii;

pub use error::{Error, Result};
pub use measure::{DensityFamily, IndexRange, PiecewiseDensity, ProductMeasure, Symbol};
pub use sampling::{SeedStream, Window};
