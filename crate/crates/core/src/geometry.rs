//! Fixed channel shapes: the main channel between `h_minus` and `h_plus`
//! plus side wings, with cross-section, width and boundary-normal queries
//! and an assumption checker.
//!
//! Wing model: a wing is a strip of width `l_wing(x)` lying directly on the
//! upper (or lower) side of the main channel over its span, separated from
//! the main channel by a zero-thickness wall. Over the straight part the
//! width equals `level`; the last `tip_radius` of the span is an elliptical
//! cap so the width falls to zero at the tip. `tip_radius = 0` gives a
//! square end wall.
//!
//! A *flush* wing is geometrically attached: the main-channel boundary on
//! the wing side jumps at the attachment by exactly `l_wing(q)`, so the
//! outer boundary runs on continuously into the wing. A *free* wing is only
//! recorded for the graph picture (its widths enter the gluing weights) and
//! does not reshape `h_plus`/`h_minus`; free wings cannot be simulated in 2-D.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{Jump, Profile};

/// Spacing of the probe grid used by [`ChannelSpec::validate_assumptions`].
pub const PROBE_SPACING: f64 = 1.0 / 64.0;

const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Above,
    Below,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attachment {
    #[default]
    Flush,
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WingSpec {
    /// Attachment x-coordinate.
    pub q: f64,
    /// Signed extent; the wing spans `[min(q, q+r), max(q, q+r)]`.
    pub r: f64,
    pub side: Side,
    /// Width on the straight part of the wing.
    pub level: f64,
    pub tip_radius: f64,
    #[serde(default)]
    pub attachment: Attachment,
}

impl WingSpec {
    /// Rounding length used when none is given: `min(|r|, a1) / 10`.
    pub fn default_tip_radius(r: f64, a1: f64) -> f64 {
        r.abs().min(a1) / 10.0
    }

    pub fn tip(&self) -> f64 {
        self.q + self.r
    }

    /// Closed x-span.
    pub fn span(&self) -> (f64, f64) {
        (self.q.min(self.tip()), self.q.max(self.tip()))
    }

    /// +1 when the wing extends to the right of its attachment.
    pub fn direction(&self) -> f64 {
        self.r.signum()
    }

    /// `l_wing(x)`; zero outside the span.
    pub fn width(&self, x: f64) -> f64 {
        let d = (x - self.q) * self.direction();
        let len = self.r.abs();
        if !(0.0..=len).contains(&d) {
            return 0.0;
        }
        let straight = len - self.tip_radius;
        if d <= straight {
            return self.level;
        }
        let u = (1.0 - (len - d) / self.tip_radius).clamp(0.0, 1.0);
        self.level * (1.0 - u * u).max(0.0).sqrt()
    }

    /// `d l_wing / dx` inside the span (−∞-like values at a rounded tip).
    pub fn width_slope(&self, x: f64) -> f64 {
        let d = (x - self.q) * self.direction();
        let len = self.r.abs();
        let straight = len - self.tip_radius;
        if d <= straight || d > len || self.tip_radius == 0.0 {
            return 0.0;
        }
        let u = (1.0 - (len - d) / self.tip_radius).clamp(0.0, 1.0);
        let denom = (1.0 - u * u).max(0.0).sqrt();
        let dd = if denom == 0.0 {
            f64::NEG_INFINITY
        } else {
            -self.level * u / (self.tip_radius * denom)
        };
        dd * self.direction()
    }

    /// Whether the wing contributes a cross-section component at `x`: the
    /// open span, plus the attachment itself when the wing extends to the
    /// right (cross-sections are right-continuous). The tip is excluded.
    pub fn covers(&self, x: f64) -> bool {
        let d = (x - self.q) * self.direction();
        let len = self.r.abs();
        if self.r > 0.0 {
            (0.0..len).contains(&d)
        } else {
            d > 0.0 && d < len
        }
    }

    /// Breakpoints of `l_wing`: attachment, start of the tip cap, tip.
    pub fn breakpoints(&self) -> Vec<f64> {
        let cap = self.tip() - self.direction() * self.tip_radius;
        vec![self.q, cap, self.tip()]
    }
}

/// Width bounds and optional environment bounds (A₁ and n₀).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub l_min: f64,
    pub l_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wing_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_wings_per_unit: Option<u32>,
}

/// A closed z-interval of a cross-section.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn contains(&self, z: f64) -> bool {
        z >= self.lo && z <= self.hi
    }
}

/// Main-channel width with its one-sided limits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Width {
    pub left: f64,
    pub right: f64,
}

impl Width {
    pub fn is_jump(&self) -> bool {
        self.left != self.right
    }
}

/// Smooth pieces of the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryArc {
    MainUpper,
    MainLower,
    /// Outer wall of wing `k`.
    WingOuter(usize),
    /// Separating wall of wing `k`, seen from inside the wing.
    WingInner(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub h_plus: Arc<Profile>,
    pub h_minus: Arc<Profile>,
    pub wings: Vec<WingSpec>,
    pub bounds: Bounds,
    pub x_range: (f64, f64),
}

impl ChannelSpec {
    pub fn new(
        h_plus: Profile,
        h_minus: Profile,
        mut wings: Vec<WingSpec>,
        bounds: Bounds,
        x_range: (f64, f64),
    ) -> Result<Self> {
        if !(x_range.0.is_finite() && x_range.1.is_finite() && x_range.0 < x_range.1) {
            return Err(Error::Parameter(format!("bad x_range {:?}", x_range)));
        }
        if !(bounds.l_min > 0.0 && bounds.l_min < bounds.l_max) {
            return Err(Error::Parameter(format!(
                "need 0 < l_min < l_max (got {}, {})",
                bounds.l_min, bounds.l_max
            )));
        }
        for w in &wings {
            if !(w.r != 0.0 && w.level > 0.0 && w.tip_radius >= 0.0 && w.tip_radius <= w.r.abs()) {
                return Err(Error::Parameter(format!("malformed wing at q = {}", w.q)));
            }
        }
        wings.sort_by(|a, b| a.q.total_cmp(&b.q));
        Ok(ChannelSpec {
            h_plus: Arc::new(h_plus),
            h_minus: Arc::new(h_minus),
            wings,
            bounds,
            x_range,
        })
    }

    /// Symmetric channel `h± = ±l0/2`; wings are recorded as free.
    pub fn from_width(
        l0: &Profile,
        wings: Vec<WingSpec>,
        bounds: Bounds,
        x_range: (f64, f64),
    ) -> Result<Self> {
        let wings = wings
            .into_iter()
            .map(|w| WingSpec {
                attachment: Attachment::Free,
                ..w
            })
            .collect();
        ChannelSpec::new(l0.affine(0.5, 0.0)?, l0.affine(-0.5, 0.0)?, wings, bounds, x_range)
    }

    /// Flat-bottomed channel `h− = 0`, `h+ = l0`; wings are recorded as free.
    /// Every jump of `l0` is a single vertical wall on the upper side.
    pub fn flat_bottom(
        l0: &Profile,
        wings: Vec<WingSpec>,
        bounds: Bounds,
        x_range: (f64, f64),
    ) -> Result<Self> {
        let wings = wings
            .into_iter()
            .map(|w| WingSpec {
                attachment: Attachment::Free,
                ..w
            })
            .collect();
        let (lo, hi) = l0.domain();
        ChannelSpec::new(l0.clone(), Profile::constant(0.0, lo, hi)?, wings, bounds, x_range)
    }

    /// Constant-width wingless channel.
    pub fn uniform(width: f64, x_range: (f64, f64)) -> Result<Self> {
        let l0 = Profile::constant(width, x_range.0, x_range.1)?;
        let bounds = Bounds {
            l_min: width * 0.5,
            l_max: width * 2.0,
            wing_bound: None,
            max_wings_per_unit: None,
        };
        ChannelSpec::from_width(&l0, vec![], bounds, x_range)
    }

    /// Flat-bottomed channel whose main part has width `main_width` away from
    /// the wings, with every wing flush-attached above. On the attachment
    /// side of each wing the main channel is widened by the wing's width so
    /// that the outer boundary is continuous.
    pub fn flush_above(
        main_width: f64,
        wings: &[(f64, f64, f64, f64)],
        bounds: Bounds,
        x_range: (f64, f64),
    ) -> Result<Self> {
        // wings: (q, r, level, tip_radius)
        let mut sorted: Vec<_> = wings.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breaks = vec![x_range.0];
        breaks.extend(sorted.iter().map(|w| w.0));
        breaks.push(x_range.1);
        // interval i is [breaks[i], breaks[i+1]); widen the one on the
        // attachment side of each wing
        let mut extra = vec![0.0; breaks.len() - 1];
        for (i, &(q, r, level, _)) in sorted.iter().enumerate() {
            let target = if r > 0.0 { i } else { i + 1 };
            if extra[target] != 0.0 {
                return Err(Error::Parameter(format!(
                    "flush wing at q = {q} needs a widened stretch already used by a neighbour"
                )));
            }
            extra[target] = level;
        }
        for (i, &(q, r, ..)) in sorted.iter().enumerate() {
            let (lo, hi) = (q.min(q + r), q.max(q + r));
            for (j, e) in extra.iter().enumerate() {
                if *e != 0.0 && breaks[j] < hi && breaks[j + 1] > lo && j != i && j != i + 1 {
                    return Err(Error::Parameter(format!(
                        "wing at q = {q} overlaps a widened stretch"
                    )));
                }
            }
        }
        let levels: Vec<f64> = extra.iter().map(|e| main_width + e).collect();
        let h_plus = Profile::piecewise_constant(&breaks, &levels)?;
        let h_minus = Profile::constant(0.0, x_range.0, x_range.1)?;
        let specs = sorted
            .iter()
            .map(|&(q, r, level, rho)| WingSpec {
                q,
                r,
                side: Side::Above,
                level,
                tip_radius: rho,
                attachment: Attachment::Flush,
            })
            .collect();
        ChannelSpec::new(h_plus, h_minus, specs, bounds, x_range)
    }

    fn check_x(&self, x: f64) -> Result<()> {
        let (lo, hi) = self.x_range;
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfRange { x, lo, hi });
        }
        Ok(())
    }

    /// Main-channel width `l0 = h_plus − h_minus` with one-sided limits.
    pub fn width_l0(&self, x: f64) -> Result<Width> {
        self.check_x(x)?;
        Ok(Width {
            left: self.h_plus.value_left(x) - self.h_minus.value_left(x),
            right: self.h_plus.value(x) - self.h_minus.value(x),
        })
    }

    /// Right-continuous `l0(x)` without range checking.
    pub fn l0(&self, x: f64) -> f64 {
        self.h_plus.value(x) - self.h_minus.value(x)
    }

    pub fn l0_left(&self, x: f64) -> f64 {
        self.h_plus.value_left(x) - self.h_minus.value_left(x)
    }

    pub fn l0_slope(&self, x: f64) -> f64 {
        self.h_plus.slope(x) - self.h_minus.slope(x)
    }

    /// Jump locations of `h_plus` or `h_minus` inside the window.
    pub fn jump_points(&self) -> Vec<f64> {
        let (lo, hi) = self.x_range;
        let mut v = self.h_plus.jump_points(lo, hi);
        v.extend(self.h_minus.jump_points(lo, hi));
        v.sort_by(|a, b| a.total_cmp(b));
        v.dedup();
        v
    }

    /// z-coordinate of wing `k`'s separating wall at `x`.
    pub fn wing_base(&self, k: usize, x: f64) -> f64 {
        let w = &self.wings[k];
        match w.side {
            Side::Above => self.h_plus.value(x),
            Side::Below => self.h_minus.value(x),
        }
    }

    /// z-interval occupied by wing `k` at `x` (empty when it does not cover x).
    pub fn wing_interval(&self, k: usize, x: f64) -> Interval {
        let w = &self.wings[k];
        if !w.covers(x) {
            return Interval { lo: 0.0, hi: 0.0 };
        }
        let base = self.wing_base(k, x);
        let lw = w.width(x);
        match w.side {
            Side::Above => Interval { lo: base, hi: base + lw },
            Side::Below => Interval { lo: base - lw, hi: base },
        }
    }

    pub fn main_interval(&self, x: f64) -> Interval {
        Interval {
            lo: self.h_minus.value(x),
            hi: self.h_plus.value(x),
        }
    }

    /// Indices of wings whose cross-section component is present at `x`.
    pub fn wings_at(&self, x: f64) -> Vec<usize> {
        self.wings
            .iter()
            .enumerate()
            .filter(|(_, w)| w.covers(x) && w.width(x) > 0.0)
            .map(|(k, _)| k)
            .collect()
    }

    /// Connected components of the cross-section at `x`: the main-channel
    /// interval first, then the wing interval (if any).
    pub fn cross_section(&self, x: f64) -> Result<Vec<Interval>> {
        self.check_x(x)?;
        let mut out = vec![self.main_interval(x)];
        for k in self.wings_at(x) {
            let iv = self.wing_interval(k, x);
            if !iv.is_empty() {
                out.push(iv);
            }
        }
        Ok(out)
    }

    /// Height function and slope of a boundary arc at `x`.
    fn arc_curve(&self, arc: BoundaryArc, x: f64) -> Result<(f64, f64, bool)> {
        // returns (g(x), g'(x), region_below_curve)
        match arc {
            BoundaryArc::MainUpper => Ok((self.h_plus.value(x), self.h_plus.slope(x), true)),
            BoundaryArc::MainLower => Ok((self.h_minus.value(x), self.h_minus.slope(x), false)),
            BoundaryArc::WingOuter(k) | BoundaryArc::WingInner(k) => {
                let w = self
                    .wings
                    .get(k)
                    .ok_or_else(|| Error::Geometry(format!("no wing {}", k)))?;
                let (lo, hi) = w.span();
                if x < lo - BOUNDARY_TOL || x > hi + BOUNDARY_TOL {
                    return Err(Error::Geometry(format!("x = {} outside wing {} span", x, k)));
                }
                let (base, base_slope) = match w.side {
                    Side::Above => (self.h_plus.value(x), self.h_plus.slope(x)),
                    Side::Below => (self.h_minus.value(x), self.h_minus.slope(x)),
                };
                let sgn = if w.side == Side::Above { 1.0 } else { -1.0 };
                match arc {
                    BoundaryArc::WingOuter(_) => Ok((
                        base + sgn * w.width(x),
                        base_slope + sgn * w.width_slope(x),
                        w.side == Side::Above,
                    )),
                    _ => Ok((base, base_slope, w.side == Side::Below)),
                }
            }
        }
    }

    /// Inward unit normal at a point of the named boundary arc.
    pub fn boundary_normal(&self, point: (f64, f64), arc: BoundaryArc) -> Result<[f64; 2]> {
        let (x, z) = point;
        self.check_x(x)?;
        let (g, s, below) = self.arc_curve(arc, x)?;
        let scale = 1.0 + g.abs();
        if (z - g).abs() > BOUNDARY_TOL * scale {
            // allow the left-limit side of a jump for main arcs
            let left_ok = match arc {
                BoundaryArc::MainUpper => (z - self.h_plus.value_left(x)).abs() <= BOUNDARY_TOL * scale,
                BoundaryArc::MainLower => (z - self.h_minus.value_left(x)).abs() <= BOUNDARY_TOL * scale,
                _ => false,
            };
            if !left_ok {
                return Err(Error::Geometry(format!(
                    "point ({}, {}) is not on {:?} (curve at z = {})",
                    x, z, arc, g
                )));
            }
        }
        let sign = if below { 1.0 } else { -1.0 };
        if !s.is_finite() {
            return Ok([sign * s.signum(), 0.0]);
        }
        let norm = (1.0 + s * s).sqrt();
        Ok([sign * s / norm, -sign / norm])
    }

    /// x-locations of boundary points with horizontal normal: jump verticals
    /// of the main channel (other than flush attachment mouths), wing
    /// attachments (wall ends) and wing tips.
    pub fn horizontal_normal_points(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        let (lo, hi) = self.x_range;
        let flush_q = |upper: bool| {
            let mut v: Vec<f64> = self
                .wings
                .iter()
                .filter(|w| w.attachment == Attachment::Flush && (w.side == Side::Above) == upper)
                .map(|w| w.q)
                .collect();
            v.sort_by(|a, b| a.total_cmp(b));
            v
        };
        let (above, below) = (flush_q(true), flush_q(false));
        let flush_at = |x: f64, upper: bool| {
            let v = if upper { &above } else { &below };
            v.binary_search_by(|q| q.total_cmp(&x)).is_ok()
        };
        for x in self.h_plus.jump_points(lo, hi) {
            if !flush_at(x, true) {
                pts.push(x);
            }
        }
        for x in self.h_minus.jump_points(lo, hi) {
            if !flush_at(x, false) {
                pts.push(x);
            }
        }
        for w in &self.wings {
            pts.push(w.q);
            pts.push(w.tip());
        }
        pts.sort_by(|a, b| a.total_cmp(b));
        pts
    }

    /// Checks the geometric assumptions on a dense probe grid.
    pub fn validate_assumptions(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let (lo, hi) = self.x_range;
        let n = ((hi - lo) / PROBE_SPACING).ceil() as usize;
        let mut probes: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let jumps = self.jump_points();
        probes.extend(jumps.iter().copied());
        for w in &self.wings {
            probes.extend(w.breakpoints().into_iter().filter(|x| *x >= lo && *x <= hi));
        }
        probes.sort_by(|a, b| a.total_cmp(b));

        // width bounds, both sides of every jump
        let tol = 1e-12;
        let mut bad = None;
        for &x in &probes {
            let w = Width {
                left: self.l0_left(x),
                right: self.l0(x),
            };
            for v in [w.left, w.right] {
                if v < self.bounds.l_min - tol || v > self.bounds.l_max + tol {
                    bad.get_or_insert((x, v));
                }
            }
        }
        report.push(Check {
            name: "width-bounds".into(),
            assumption: "width".into(),
            passed: bad.is_none(),
            offending_x: bad.map(|b| b.0),
            detail: match bad {
                Some((_, v)) => format!(
                    "l0 = {} outside [{}, {}]",
                    v, self.bounds.l_min, self.bounds.l_max
                ),
                None => format!("l0 within [{}, {}]", self.bounds.l_min, self.bounds.l_max),
            },
        });

        // isolated horizontal-normal points, one boundary point per x
        let hn = self.horizontal_normal_points();
        let dup = hn.windows(2).find(|w| (w[1] - w[0]).abs() <= 1e-12).map(|w| w[0]);
        report.push(Check {
            name: "horizontal-normals".into(),
            assumption: "regularity".into(),
            passed: dup.is_none(),
            offending_x: dup,
            detail: match dup {
                Some(x) => format!("two horizontal-normal boundary points share x = {}", x),
                None => format!("{} isolated horizontal-normal points", hn.len()),
            },
        });

        // one or two components: no two wing spans overlap
        let mut spans: Vec<(f64, f64)> = self.wings.iter().map(|w| w.span()).collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut three = None;
        let mut reach = f64::NEG_INFINITY;
        for &(l, h) in &spans {
            if l < reach - 1e-9 {
                three = Some(0.5 * (l + h.min(reach)));
                break;
            }
            reach = reach.max(h);
        }
        report.push(Check {
            name: "cross-section-components".into(),
            assumption: "topology".into(),
            passed: three.is_none(),
            offending_x: three,
            detail: match three {
                Some(_) => "three cross-section components (overlapping wings)".into(),
                None => "every cross-section has one or two components".into(),
            },
        });

        // wing size bounds
        if let Some(a1) = self.bounds.wing_bound {
            let bad = self
                .wings
                .iter()
                .find(|w| w.level > a1 + tol || w.r.abs() > a1 + tol)
                .map(|w| w.q);
            report.push(Check {
                name: "wing-bounds".into(),
                assumption: "wing-size".into(),
                passed: bad.is_none(),
                offending_x: bad,
                detail: format!("l_wing <= {a1} and |r| <= {a1}"),
            });
        }

        // wings per unit length
        if let Some(n0) = self.bounds.max_wings_per_unit {
            let qs: Vec<f64> = self.wings.iter().map(|w| w.q).collect();
            let mut bad = None;
            let mut j = 0;
            for i in 0..qs.len() {
                while j < qs.len() && qs[j] < qs[i] + 1.0 - 1e-9 {
                    j += 1;
                }
                if j - i > n0 as usize {
                    bad = Some(qs[i]);
                    break;
                }
            }
            report.push(Check {
                name: "wing-density".into(),
                assumption: "wing-density".into(),
                passed: bad.is_none(),
                offending_x: bad,
                detail: format!("at most {n0} wings in any unit window"),
            });
        }

        // attachment consistency of flush wings
        let mut bad = None;
        for w in &self.wings {
            if w.attachment != Attachment::Flush {
                continue;
            }
            let prof = match w.side {
                Side::Above => &self.h_plus,
                Side::Below => &self.h_minus,
            };
            let lw = w.width(w.q);
            // jump seen when crossing q from the wing side to the other side
            let (wing_side, other_side) = if w.r > 0.0 {
                (prof.value(w.q), prof.value_left(w.q))
            } else {
                (prof.value_left(w.q), prof.value(w.q))
            };
            let sgn = if w.side == Side::Above { 1.0 } else { -1.0 };
            if ((other_side - wing_side) * sgn - lw).abs() > 1e-9 {
                bad.get_or_insert(w.q);
            }
        }
        report.push(Check {
            name: "wing-attachment".into(),
            assumption: "geometry".into(),
            passed: bad.is_none(),
            offending_x: bad,
            detail: "flush wings sit on a main-channel jump equal to l_wing(q)".into(),
        });

        report
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut spec: ChannelSpec = serde_json::from_str(s)?;
        spec.wings.sort_by(|a, b| a.q.total_cmp(&b.q));
        Ok(spec)
    }

    /// Whether every wing is flush-attached (required for 2-D simulation).
    pub fn is_geometric(&self) -> bool {
        self.wings.iter().all(|w| w.attachment == Attachment::Flush)
    }
}

/// One entry of a [`ValidationReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Group of the check: width, regularity, topology, wing-size, wing-density or geometry.
    pub assumption: String,
    pub passed: bool,
    pub offending_x: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Convenience: a jump record for hand-built profiles.
pub fn jump(x: f64, left: f64, right: f64) -> Jump {
    Jump { x, left, right }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn bounds(l_min: f64, l_max: f64) -> Bounds {
        Bounds {
            l_min,
            l_max,
            wing_bound: None,
            max_wings_per_unit: None,
        }
    }

    fn wing(q: f64, r: f64) -> WingSpec {
        WingSpec {
            q,
            r,
            side: Side::Above,
            level: 0.5,
            tip_radius: 0.1,
            attachment: Attachment::Free,
        }
    }

    #[test]
    fn wingless_cross_section_is_one_interval() {
        let spec = ChannelSpec::uniform(1.0, (-5.0, 5.0)).unwrap();
        for x in [-5.0, -1.3, 0.0, 4.9] {
            let cs = spec.cross_section(x).unwrap();
            assert_eq!(cs, vec![Interval { lo: -0.5, hi: 0.5 }]);
        }
    }

    #[test]
    fn wing_adds_second_disjoint_interval() {
        let l0 = Profile::constant(1.0, 0.0, 5.0).unwrap();
        let spec = ChannelSpec::from_width(&l0, vec![wing(2.0, 1.0)], bounds(0.5, 2.0), (0.0, 5.0))
            .unwrap();
        let cs = spec.cross_section(2.5).unwrap();
        assert_eq!(cs.len(), 2);
        assert!(cs[0].hi <= cs[1].lo);
    }

    #[test]
    fn tip_cross_section_omits_wing() {
        let l0 = Profile::constant(1.0, 0.0, 5.0).unwrap();
        let spec = ChannelSpec::from_width(&l0, vec![wing(2.0, 1.0)], bounds(0.5, 2.0), (0.0, 5.0))
            .unwrap();
        assert_eq!(spec.cross_section(3.0).unwrap().len(), 1);
    }

    #[test]
    fn out_of_range_is_rejected() {
        let spec = ChannelSpec::uniform(1.0, (0.0, 1.0)).unwrap();
        assert!(matches!(spec.cross_section(1.5), Err(Error::OutOfRange { .. })));
        assert!(spec.width_l0(-0.1).is_err());
    }

    #[test]
    fn width_reads_jump_limits() {
        let l0 = Profile::piecewise_constant(&[-1.0, 0.0, 1.0], &[1.0, 2.0]).unwrap();
        let spec = ChannelSpec::from_width(&l0, vec![], bounds(0.5, 3.0), (-1.0, 1.0)).unwrap();
        let w = spec.width_l0(0.0).unwrap();
        assert_eq!((w.left, w.right), (1.0, 2.0));
        assert_eq!(spec.width_l0(0.5).unwrap().right, 2.0);
    }

    #[test]
    fn smooth_width_evaluates_directly() {
        let l0 = Profile::from_fn(0.0, 4.0, 1.0 / 64.0, |x| 1.0 + 0.5 * x.sin()).unwrap();
        let spec = ChannelSpec::from_width(&l0, vec![], bounds(0.4, 2.0), (0.0, 4.0)).unwrap();
        // pi/2 is not a knot and sits at a maximum, where the monotone
        // interpolant flattens by about h²/16
        assert!((spec.width_l0(FRAC_PI_2).unwrap().right - 1.5).abs() < 2e-5);
    }

    #[test]
    fn flat_wall_normals() {
        let spec = ChannelSpec::uniform(1.0, (0.0, 2.0)).unwrap();
        let up = spec.boundary_normal((1.0, 0.5), BoundaryArc::MainUpper).unwrap();
        let down = spec.boundary_normal((1.0, -0.5), BoundaryArc::MainLower).unwrap();
        assert_eq!(up, [0.0, -1.0]);
        assert_eq!(down, [0.0, 1.0]);
    }

    #[test]
    fn sloped_wall_normal() {
        let s = 0.3;
        let hp = Profile::from_fn(0.0, 2.0, 0.5, |x| 1.0 + s * x).unwrap();
        let hm = Profile::constant(0.0, 0.0, 2.0).unwrap();
        let spec = ChannelSpec::new(hp, hm, vec![], bounds(0.5, 2.0), (0.0, 2.0)).unwrap();
        let n = spec.boundary_normal((1.0, 1.3), BoundaryArc::MainUpper).unwrap();
        let norm = (1.0 + s * s).sqrt();
        assert!((n[0] - s / norm).abs() < 1e-12);
        assert!((n[1] + 1.0 / norm).abs() < 1e-12);
    }

    #[test]
    fn normal_rejects_off_boundary_point() {
        let spec = ChannelSpec::uniform(1.0, (0.0, 2.0)).unwrap();
        assert!(matches!(
            spec.boundary_normal((1.0, 0.2), BoundaryArc::MainUpper),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn rounded_tip_normal_is_horizontal() {
        let l0 = Profile::constant(1.0, 0.0, 5.0).unwrap();
        let spec = ChannelSpec::from_width(&l0, vec![wing(2.0, 1.0)], bounds(0.5, 2.0), (0.0, 5.0))
            .unwrap();
        let n = spec.boundary_normal((3.0, 0.5), BoundaryArc::WingOuter(0)).unwrap();
        assert_eq!(n, [-1.0, 0.0]);
    }

    #[test]
    fn validation_passes_for_plain_channel() {
        let spec = ChannelSpec::uniform(1.0, (0.0, 10.0)).unwrap();
        let report = spec.validate_assumptions();
        assert!(report.all_passed(), "{:?}", report.failures());
    }

    #[test]
    fn overlapping_wings_fail_component_count() {
        let l0 = Profile::constant(1.0, 0.0, 10.0).unwrap();
        let spec = ChannelSpec::from_width(
            &l0,
            vec![wing(2.0, 2.0), wing(3.0, 2.0)],
            bounds(0.5, 2.0),
            (0.0, 10.0),
        )
        .unwrap();
        let report = spec.validate_assumptions();
        let c = report.get("cross-section-components").unwrap();
        assert!(!c.passed);
        let x = c.offending_x.unwrap();
        assert!(x > 3.0 && x < 4.0);
    }

    #[test]
    fn narrow_width_fails_bounds_with_location() {
        let l0 = Profile::piecewise_constant(&[0.0, 4.0, 10.0], &[1.0, 0.3]).unwrap();
        let spec = ChannelSpec::from_width(&l0, vec![], bounds(0.5, 2.0), (0.0, 10.0)).unwrap();
        let report = spec.validate_assumptions();
        let c = report.get("width-bounds").unwrap();
        assert!(!c.passed);
        assert_eq!(c.offending_x, Some(4.0));
    }

    #[test]
    fn flush_wing_is_consistent() {
        let spec = ChannelSpec::flush_above(1.0, &[(0.0, 1.0, 0.5, 0.1)], bounds(0.5, 2.0), (-3.0, 4.0))
            .unwrap();
        let report = spec.validate_assumptions();
        assert!(report.all_passed(), "{:?}", report.failures());
        let w = spec.width_l0(0.0).unwrap();
        assert_eq!((w.left, w.right), (1.5, 1.0));
        // outer boundary continuous into the wing
        let cs = spec.cross_section(0.2).unwrap();
        assert_eq!(cs.len(), 2);
        assert!((cs[1].hi - 1.5).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let l0 = Profile::from_fn(0.0, 6.0, 1.0 / 64.0, |x| 1.2 + 0.3 * (1.7 * x).cos()).unwrap();
        let spec = ChannelSpec::from_width(&l0, vec![wing(2.0, 1.0)], bounds(0.5, 2.0), (0.0, 6.0))
            .unwrap();
        let s = spec.to_json().unwrap();
        let back = ChannelSpec::from_json(&s).unwrap();
        assert_eq!(spec, back);
        assert_eq!(s, back.to_json().unwrap());
    }
}
