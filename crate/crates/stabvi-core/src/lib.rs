//! Value-iteration engines for discrete-time nonlinear optimal control.
//!
//! The crate implements the undiscounted Bellman recursion
//! `V(x) = min_u [ Q(x) + u'Ru + V(f(x,u)) ]` on interpolated grids, in three
//! flavors:
//!
//! * plain value iteration from an arbitrary seed ([`engine_exact::run_vi`]),
//! * stabilizing value iteration, seeded with the evaluated cost-to-go of an
//!   admissible policy ([`engine_exact::run_stabilizing_vi`]), which keeps the
//!   iterates pointwise non-increasing and every intermediate policy
//!   stabilizing, and
//! * approximate value iteration with a controlled per-iteration error bounded
//!   by `c·U(x,0)` ([`engine_avi::run_avi`]), together with the exact lower and
//!   upper bounding recursions that sandwich it.
//!
//! On top of the engines, [`stability`] computes region-of-attraction
//! estimates as value-function sublevel sets and verifies the associated
//! Lyapunov-decrease, invariance, and partial-sum properties by closed-loop
//! simulation.
//!
//! The crate is `no_std`-compatible (`alloc` required): disable the default
//! `std` feature and enable `libm` for the math shims. All state is owned and
//! immutable after construction; engines build each iterate as a fresh
//! snapshot (Jacobi sweeps), so concurrent reads are safe.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod backup;
pub mod engine_avi;
pub mod engine_exact;
pub mod error;
mod fmath;
pub mod linalg;
pub mod problem;
pub mod stability;
pub mod valuefn;

pub use error::{Error, Result};

/// Wall-clock source for iteration traces.
///
/// The core crate cannot read time by itself; hosts hand in an implementation
/// (the unit type is a null clock reporting zero, which also keeps trace
/// output deterministic).
pub trait Clock {
    /// Seconds since an arbitrary epoch.
    fn now_seconds(&self) -> f64;
}

impl Clock for () {
    fn now_seconds(&self) -> f64 {
        0.0
    }
}
