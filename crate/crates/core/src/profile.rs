//! Piecewise monotone-cubic scalar functions with isolated jumps.
//!
//! A [`Profile`] is stored as a knot grid with values plus an explicit jump
//! list. Between jumps the function is the Fritsch–Carlson monotone cubic
//! Hermite interpolant of the knot values, so it is C¹ on every jump-free
//! stretch and never overshoots the data. Each jump sits on a knot; the knot
//! value is the right-hand limit and the jump record carries the left-hand
//! limit. Outside the knot range the function is extended by constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A discontinuity of a [`Profile`]: one-sided limits at `x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub x: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ProfileRepr {
    knots: Vec<f64>,
    values: Vec<f64>,
    #[serde(default)]
    jumps: Vec<Jump>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileRepr", into = "ProfileRepr")]
pub struct Profile {
    knots: Vec<f64>,
    values: Vec<f64>,
    jumps: Vec<Jump>,
    // per interval i = [knots[i], knots[i+1]]: value at the right end
    // (the left limit when knots[i+1] is a jump) and Hermite slopes.
    end_values: Vec<f64>,
    d_start: Vec<f64>,
    d_end: Vec<f64>,
}

impl TryFrom<ProfileRepr> for Profile {
    type Error = Error;
    fn try_from(r: ProfileRepr) -> Result<Self> {
        Profile::new(r.knots, r.values, r.jumps)
    }
}

impl From<Profile> for ProfileRepr {
    fn from(p: Profile) -> Self {
        ProfileRepr {
            knots: p.knots,
            values: p.values,
            jumps: p.jumps,
        }
    }
}

impl Profile {
    /// Builds a profile from knots, right-continuous knot values and jumps.
    ///
    /// Every jump must sit exactly on an interior knot and its `right` value
    /// must equal the knot value.
    pub fn new(knots: Vec<f64>, values: Vec<f64>, mut jumps: Vec<Jump>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::Parameter(format!(
                "profile needs >= 2 knots with matching values (got {} knots, {} values)",
                knots.len(),
                values.len()
            )));
        }
        if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("profile data must be finite".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("profile knots must be strictly increasing".into()));
        }
        jumps.sort_by(|a, b| a.x.total_cmp(&b.x));
        let n = knots.len();
        let mut jump_at = vec![None; n];
        for (ji, j) in jumps.iter().enumerate() {
            let idx = knots.partition_point(|&k| k < j.x);
            if idx == 0 || idx >= n - 1 || knots[idx] != j.x {
                return Err(Error::Parameter(format!(
                    "jump at x = {} is not on an interior knot",
                    j.x
                )));
            }
            if values[idx] != j.right || !j.left.is_finite() {
                return Err(Error::Parameter(format!(
                    "jump at x = {} disagrees with the knot value",
                    j.x
                )));
            }
            if jump_at[idx].is_some() {
                return Err(Error::Parameter(format!("duplicate jump at x = {}", j.x)));
            }
            jump_at[idx] = Some(ji);
        }

        let mut end_values = vec![0.0; n - 1];
        let mut d_start = vec![0.0; n - 1];
        let mut d_end = vec![0.0; n - 1];
        // split into jump-free segments [s, e] of knot indices
        let mut s = 0;
        while s < n - 1 {
            let mut e = s + 1;
            while e < n - 1 && jump_at[e].is_none() {
                e += 1;
            }
            let xs = &knots[s..=e];
            let mut ys: Vec<f64> = values[s..=e].to_vec();
            if let Some(ji) = jump_at[e] {
                ys[e - s] = jumps[ji].left;
            }
            let ds = pchip_slopes(xs, &ys);
            for i in 0..(e - s) {
                end_values[s + i] = ys[i + 1];
                d_start[s + i] = ds[i];
                d_end[s + i] = ds[i + 1];
            }
            s = e;
        }

        Ok(Profile {
            knots,
            values,
            jumps,
            end_values,
            d_start,
            d_end,
        })
    }

    pub fn constant(value: f64, lo: f64, hi: f64) -> Result<Self> {
        Profile::new(vec![lo, hi], vec![value, value], vec![])
    }

    /// Samples `f` on a uniform grid of spacing at most `spacing` over `[lo, hi]`.
    pub fn from_fn(lo: f64, hi: f64, spacing: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(hi > lo) || !(spacing > 0.0) {
            return Err(Error::Parameter("from_fn needs hi > lo and spacing > 0".into()));
        }
        let n = ((hi - lo) / spacing).ceil().max(1.0) as usize;
        let knots: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let values = knots.iter().map(|&x| f(x)).collect();
        Profile::new(knots, values, vec![])
    }

    /// Step function: `levels[i]` on `[breaks[i], breaks[i+1])`.
    pub fn piecewise_constant(breaks: &[f64], levels: &[f64]) -> Result<Self> {
        if breaks.len() != levels.len() + 1 || levels.is_empty() {
            return Err(Error::Parameter(
                "piecewise_constant needs breaks.len() == levels.len() + 1".into(),
            ));
        }
        let mut knots = Vec::with_capacity(breaks.len());
        let mut values = Vec::with_capacity(breaks.len());
        let mut jumps = Vec::new();
        for (i, &b) in breaks.iter().enumerate() {
            knots.push(b);
            if i < levels.len() {
                values.push(levels[i]);
                if i > 0 && levels[i] != levels[i - 1] {
                    jumps.push(Jump {
                        x: b,
                        left: levels[i - 1],
                        right: levels[i],
                    });
                }
            } else {
                values.push(levels[i - 1]);
            }
        }
        Profile::new(knots, values, jumps)
    }

    /// Returns `scale * self + offset`, jumps included.
    pub fn affine(&self, scale: f64, offset: f64) -> Result<Self> {
        let values = self.values.iter().map(|v| scale * v + offset).collect();
        let jumps = self
            .jumps
            .iter()
            .map(|j| Jump {
                x: j.x,
                left: scale * j.left + offset,
                right: scale * j.right + offset,
            })
            .collect();
        Profile::new(self.knots.clone(), values, jumps)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Jump locations strictly inside `(lo, hi)`.
    pub fn jump_points(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.jumps
            .iter()
            .map(|j| j.x)
            .filter(|&x| x > lo && x < hi)
            .collect()
    }

    pub fn jump_at(&self, x: f64) -> Option<&Jump> {
        self.jumps.iter().find(|j| j.x == x)
    }

    /// Right-continuous value.
    pub fn value(&self, x: f64) -> f64 {
        let n = self.knots.len();
        if x >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        if x < self.knots[0] {
            return self.values[0];
        }
        let i = self.knots.partition_point(|&k| k <= x) - 1;
        self.hermite(i, x).0
    }

    /// Left-hand limit (differs from [`Profile::value`] only at jumps).
    pub fn value_left(&self, x: f64) -> f64 {
        let n = self.knots.len();
        if x > self.knots[n - 1] {
            return self.values[n - 1];
        }
        if x <= self.knots[0] {
            return self.values[0];
        }
        let i = self.knots.partition_point(|&k| k < x) - 1;
        self.hermite(i, x).0
    }

    /// Right derivative.
    pub fn slope(&self, x: f64) -> f64 {
        let n = self.knots.len();
        if x >= self.knots[n - 1] || x < self.knots[0] {
            return 0.0;
        }
        let i = self.knots.partition_point(|&k| k <= x) - 1;
        self.hermite(i, x).1
    }

    /// Left derivative.
    pub fn slope_left(&self, x: f64) -> f64 {
        let n = self.knots.len();
        if x > self.knots[n - 1] || x <= self.knots[0] {
            return 0.0;
        }
        let i = self.knots.partition_point(|&k| k < x) - 1;
        self.hermite(i, x).1
    }

    fn hermite(&self, i: usize, x: f64) -> (f64, f64) {
        let x0 = self.knots[i];
        let h = self.knots[i + 1] - x0;
        let t = (x - x0) / h;
        let y0 = self.values[i];
        let y1 = self.end_values[i];
        let m0 = self.d_start[i] * h;
        let m1 = self.d_end[i] * h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let v = h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;
        let dh00 = 6.0 * t2 - 6.0 * t;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = -6.0 * t2 + 6.0 * t;
        let dh11 = 3.0 * t2 - 2.0 * t;
        let d = (dh00 * y0 + dh10 * m0 + dh01 * y1 + dh11 * m1) / h;
        (v, d)
    }
}

/// Centred three-point slopes passed through the Hyman monotonicity filter:
/// clipped to `3·min(|δ₋|, |δ₊|)` on monotone stretches and zero at data
/// extrema, so the interpolant stays within the range of its data.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        if a * b <= 0.0 {
            d[k] = 0.0;
        } else {
            let c = (h[k] * a + h[k - 1] * b) / (h[k - 1] + h[k]);
            let cap = 3.0 * a.abs().min(b.abs());
            d[k] = c.signum() * c.abs().min(cap);
        }
    }
    d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}
