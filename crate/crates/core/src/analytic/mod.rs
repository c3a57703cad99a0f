//! Closed-form exit-time, wing-time and transport-speed evaluators, plus a
//! finite-volume boundary-value solver on the metric graph used as an
//! independent oracle.

mod bvp;
mod quadrature;

pub use bvp::{solve_exit_bvp, BvpOptions, BvpSolution, EdgeGrid, Sources};
pub use quadrature::{
    downstream_weight, exit_time_quadrature, inverse_speed, wing_weight, wing_time_formula, ExitTimeValue, ScaleSpeed,
    SpeedEstimate, WingTimeTerms,
};

use crate::geometry::ChannelSpec;
use crate::profile::Profile;

/// A positive width function with isolated jumps, evaluated right-continuously.
pub trait WidthFunction: Sync {
    fn value(&self, x: f64) -> f64;
    /// Jumps and kinks inside `(lo, hi)`.
    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64>;
    /// `(inf, sup)` of the function.
    fn range(&self) -> (f64, f64);
}

impl WidthFunction for Profile {
    fn value(&self, x: f64) -> f64 {
        Profile::value(self, x)
    }

    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.jump_points(lo, hi)
    }

    fn range(&self) -> (f64, f64) {
        let vals = self
            .values()
            .iter()
            .chain(self.jumps().iter().map(|j| &j.left));
        vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    }
}

/// The main-channel width `l0 = h+ − h−` of a channel.
pub struct MainWidth<'a>(pub &'a ChannelSpec);

impl WidthFunction for MainWidth<'_> {
    fn value(&self, x: f64) -> f64 {
        self.0.l0(x)
    }

    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut b = self.0.h_plus.jump_points(lo, hi);
        b.extend(self.0.h_minus.jump_points(lo, hi));
        b.sort_by(|a, c| a.total_cmp(c));
        b.dedup();
        b
    }

    fn range(&self) -> (f64, f64) {
        (self.0.bounds.l_min, self.0.bounds.l_max)
    }
}

/// A width given by a closure with known breakpoints and bounds.
pub struct FnWidth<F: Fn(f64) -> f64 + Sync> {
    pub f: F,
    pub breaks: Vec<f64>,
    pub bounds: (f64, f64),
}

impl<F: Fn(f64) -> f64 + Sync> WidthFunction for FnWidth<F> {
    fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.breaks.iter().copied().filter(|&b| b > lo && b < hi).collect()
    }

    fn range(&self) -> (f64, f64) {
        self.bounds
    }
}
