//! Finite-ε reflected diffusion in the channel, in unscaled coordinates:
//! `dX = V dt + dW¹`, `dZ = ε⁻¹ dW²`, reflected at the boundary.
//!
//! Each Euler step is first resolved in x against the vertical pieces of
//! the boundary (jumps of `h±`, wing mouths and square tips, the left
//! window end): a crossing at `x_c` passes into the far-side component
//! whose interval contains the interpolated height, otherwise the step is
//! stopped at the vertical wall. A remaining overshoot in z is projected
//! back onto the violated arc along the reflection direction. Flush wings
//! only: a free wing has no 2-D shape.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Attachment, ChannelSpec, Interval, Side};
use crate::graph::MetricGraph;
use crate::rng::{self, Domain};
use crate::stats::{self, Estimate};
use crate::walk::{self, SimParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Main,
    Wing(usize),
}

/// Direction used to push an outside point back onto a sloped arc, given
/// the inward unit normal `(n₁, n₂)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionDirection {
    /// `(ε² n₁, n₂)`, the co-normal of `½(∂ₓₓ + ε⁻²∂_zz)`.
    #[default]
    CoNormal,
    /// `(ε n₁, n₂)`.
    Oblique,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityField {
    Constant { beta: f64 },
    /// `β(1 + κ cos(2π(z − lo)/(hi − lo)))` on each cross-section component;
    /// its average over every component is `β`.
    Modulated { beta: f64, kappa: f64 },
}

impl VelocityField {
    pub fn mean(&self) -> f64 {
        match *self {
            VelocityField::Constant { beta } | VelocityField::Modulated { beta, .. } => beta,
        }
    }

    pub fn at(&self, z: f64, iv: Interval) -> f64 {
        match *self {
            VelocityField::Constant { beta } => beta,
            VelocityField::Modulated { beta, kappa } => {
                let len = iv.len();
                if len > 0.0 {
                    beta * (1.0 + kappa * (std::f64::consts::TAU * (z - iv.lo) / len).cos())
                } else {
                    beta
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeParams {
    pub epsilon: f64,
    pub dt: f64,
    pub velocity: VelocityField,
    pub seed: u64,
    pub n_paths: usize,
    /// Distance from a vertical boundary piece within which overshoots are
    /// returned to the arc point at the same x; `l_min/20` when absent.
    #[serde(default)]
    pub corner_rounding: Option<f64>,
    #[serde(default)]
    pub direction: ReflectionDirection,
    #[serde(default)]
    pub max_time: Option<f64>,
    #[serde(default)]
    pub record_every: Option<usize>,
}

impl SdeParams {
    /// `dt = ε²/100` with a constant velocity.
    pub fn new(epsilon: f64, beta: f64, seed: u64, n_paths: usize) -> SdeParams {
        SdeParams {
            epsilon,
            dt: epsilon * epsilon / 100.0,
            velocity: VelocityField::Constant { beta },
            seed,
            n_paths,
            corner_rounding: None,
            direction: ReflectionDirection::CoNormal,
            max_time: None,
            record_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.epsilon;
        if !(e > 0.0 && e <= 1.0) {
            return Err(Error::Parameter(format!("epsilon = {e} must lie in (0, 1]")));
        }
        if !(self.dt > 0.0 && self.dt <= e * e / 10.0 * (1.0 + 1e-12)) {
            return Err(Error::Parameter(format!(
                "dt = {} must be positive and at most epsilon^2/10 = {}",
                self.dt,
                e * e / 10.0
            )));
        }
        if !(self.velocity.mean() > 0.0 && self.velocity.mean().is_finite()) {
            return Err(Error::Parameter("mean velocity must be positive".into()));
        }
        if let VelocityField::Modulated { kappa, .. } = self.velocity {
            if !kappa.is_finite() {
                return Err(Error::Parameter("kappa must be finite".into()));
            }
        }
        if self.record_every == Some(0) {
            return Err(Error::Parameter("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectedPath {
    pub sigma: f64,
    /// Sum of projection lengths `√(Δx² + (εΔz)²)` in the scaled channel.
    pub push_accum: f64,
    pub steps: u64,
    /// Recorded `(t, x, z)` states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<(f64, f64, f64)>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum SideOf {
    Left,
    Right,
}

/// Channel geometry prepared for stepping.
pub struct ReflectedDomain<'s> {
    spec: &'s ChannelSpec,
    /// Sorted x-locations of vertical boundary pieces.
    events: Vec<f64>,
    epsilon: f64,
    direction: ReflectionDirection,
    corner: f64,
}

impl<'s> ReflectedDomain<'s> {
    pub fn new(
        spec: &'s ChannelSpec,
        epsilon: f64,
        direction: ReflectionDirection,
        corner_rounding: Option<f64>,
    ) -> Result<Self> {
        if let Some(k) = spec.wings.iter().position(|w| w.attachment == Attachment::Free) {
            return Err(Error::Precondition(format!(
                "wing {k} is free; the 2-D process needs flush wings"
            )));
        }
        let mut events = spec.jump_points();
        for w in &spec.wings {
            events.push(w.q);
            events.push(w.tip());
        }
        events.push(spec.x_range.0);
        events.sort_by(|a, b| a.total_cmp(b));
        events.dedup();
        Ok(ReflectedDomain {
            spec,
            events,
            epsilon,
            direction,
            corner: corner_rounding.unwrap_or(spec.bounds.l_min / 20.0),
        })
    }

    /// Right-continuous interval of a component at `x`.
    pub fn interval(&self, comp: Component, x: f64) -> Option<Interval> {
        match comp {
            Component::Main => {
                (x >= self.spec.x_range.0).then(|| self.spec.main_interval(x))
            }
            Component::Wing(k) => {
                let iv = self.spec.wing_interval(k, x);
                (self.spec.wings[k].covers(x) && !iv.is_empty()).then_some(iv)
            }
        }
    }

    fn side_interval(&self, comp: Component, xc: f64, side: SideOf) -> Option<Interval> {
        let eta = 1e-12 * (1.0 + xc.abs());
        match (comp, side) {
            (Component::Main, SideOf::Right) => self.interval(comp, xc),
            (Component::Main, SideOf::Left) => (xc > self.spec.x_range.0).then(|| Interval {
                lo: self.spec.h_minus.value_left(xc),
                hi: self.spec.h_plus.value_left(xc),
            }),
            (Component::Wing(k), _) => {
                let w = &self.spec.wings[k];
                let (lo, hi) = w.span();
                let (present, probe) = match side {
                    SideOf::Left => (lo < xc && xc <= hi, xc - eta),
                    SideOf::Right => (lo <= xc && xc < hi, xc + eta),
                };
                if !present {
                    return None;
                }
                let lw = w.width(probe);
                let (hp, hm) = match side {
                    SideOf::Left => (self.spec.h_plus.value_left(xc), self.spec.h_minus.value_left(xc)),
                    SideOf::Right => (self.spec.h_plus.value(xc), self.spec.h_minus.value(xc)),
                };
                let iv = match w.side {
                    Side::Above => Interval { lo: hp, hi: hp + lw },
                    Side::Below => Interval { lo: hm - lw, hi: hm },
                };
                (!iv.is_empty()).then_some(iv)
            }
        }
    }

    fn components_on(&self, xc: f64, side: SideOf) -> Vec<(Component, Interval)> {
        let mut out = Vec::new();
        if let Some(iv) = self.side_interval(Component::Main, xc, side) {
            out.push((Component::Main, iv));
        }
        for k in 0..self.spec.wings.len() {
            if let Some(iv) = self.side_interval(Component::Wing(k), xc, side) {
                out.push((Component::Wing(k), iv));
            }
        }
        out
    }

    /// The component containing `(x, z)`; the main channel wins on shared walls.
    pub fn locate(&self, x: f64, z: f64) -> Result<Component> {
        let (lo, hi) = self.spec.x_range;
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfRange { x, lo, hi });
        }
        if self.spec.main_interval(x).contains(z) {
            return Ok(Component::Main);
        }
        (0..self.spec.wings.len())
            .map(Component::Wing)
            .find(|&c| self.interval(c, x).is_some_and(|iv| iv.contains(z)))
            .ok_or_else(|| Error::Geometry(format!("({x}, {z}) lies outside the channel")))
    }

    /// Slopes of the lower and upper arcs of a component at `x`.
    fn slopes(&self, comp: Component, x: f64) -> (f64, f64) {
        let sp = self.spec.h_plus.slope(x);
        let sm = self.spec.h_minus.slope(x);
        match comp {
            Component::Main => (sm, sp),
            Component::Wing(k) => {
                let w = &self.spec.wings[k];
                let ws = w.width_slope(x);
                match w.side {
                    Side::Above => (sp, sp + ws),
                    Side::Below => (sm - ws, sm),
                }
            }
        }
    }

    fn near_event(&self, x: f64) -> bool {
        let i = self.events.partition_point(|&e| e < x);
        [i.wrapping_sub(1), i]
            .iter()
            .filter_map(|&j| self.events.get(j))
            .any(|&e| (e - x).abs() < self.corner)
    }

    /// Whether an event point lies strictly between `x0` and `x1`.
    fn event_between(&self, x0: f64, x1: f64) -> bool {
        let (a, b) = (x0.min(x1), x0.max(x1));
        let i = self.events.partition_point(|&e| e <= a);
        self.events.get(i).is_some_and(|&e| e < b)
    }

    /// Moves `(x, z)` in `comp` by `(dx, dz)` and returns the push length.
    fn advance(&self, x: &mut f64, z: &mut f64, comp: &mut Component, dx: f64, dz: f64) -> Result<f64> {
        let eps = self.epsilon;
        let (x0, z0) = (*x, *z);
        let (mut x1, z1) = (x0 + dx, z0 + dz);
        let mut push = 0.0;

        // vertical pieces crossed on the way, in the order of travel
        if dx != 0.0 {
            let (near, far) = if dx > 0.0 {
                (SideOf::Left, SideOf::Right)
            } else {
                (SideOf::Right, SideOf::Left)
            };
            let crossed: Vec<f64> = if dx > 0.0 {
                let i = self.events.partition_point(|&e| e <= x0);
                let j = self.events.partition_point(|&e| e <= x1);
                self.events[i..j].to_vec()
            } else {
                let i = self.events.partition_point(|&e| e <= x1);
                let j = self.events.partition_point(|&e| e <= x0);
                self.events[i..j].iter().rev().copied().collect()
            };
            for xc in crossed {
                let zc = z0 + dz * (xc - x0) / dx;
                let Some(near_iv) = self.side_interval(*comp, xc, near) else {
                    return Err(Error::Fault(format!("component {comp:?} missing at x = {xc}")));
                };
                let zc = zc.clamp(near_iv.lo, near_iv.hi);
                let comps = self.components_on(xc, far);
                // an opening needs a z-overlap of positive length
                let open = |iv: &Interval| {
                    iv.contains(zc) && iv.hi.min(near_iv.hi) - iv.lo.max(near_iv.lo) > 1e-9
                };
                let pick = comps
                    .iter()
                    .find(|(c, iv)| *c == *comp && open(iv))
                    .or_else(|| comps.iter().find(|(_, iv)| open(iv)));
                match pick {
                    Some(&(c, _)) => *comp = c,
                    None => {
                        let stop = if dx > 0.0 { xc - 1e-12 * (1.0 + xc.abs()) } else { xc };
                        push += (x1 - stop).abs();
                        x1 = stop;
                        break;
                    }
                }
            }
        }

        let iv = self
            .interval(*comp, x1)
            .ok_or_else(|| Error::Fault(format!("component {comp:?} missing at x = {x1}")))?;
        if iv.contains(z1) {
            *x = x1;
            *z = z1;
            return Ok(push);
        }

        let upper = z1 > iv.hi;
        let (s_lo, s_hi) = self.slopes(*comp, x1);
        let slope = if upper { s_hi } else { s_lo };
        let clamp = |x1: f64| (x1, z1.clamp(iv.lo, iv.hi));
        let (nx, nz) = if slope == 0.0 || !slope.is_finite() || self.near_event(x1) {
            clamp(x1)
        } else {
            // inward unit normal of the violated arc
            let norm = (1.0 + slope * slope).sqrt();
            let (n1, n2) = if upper { (slope / norm, -1.0 / norm) } else { (-slope / norm, 1.0 / norm) };
            let c = match self.direction {
                ReflectionDirection::CoNormal => eps * eps,
                ReflectionDirection::Oblique => eps,
            };
            let (d1, d2) = (c * n1, n2);
            let outside = |t: f64| -> Option<f64> {
                let (px, pz) = (x1 + t * d1, z1 + t * d2);
                let iv = self.interval(*comp, px)?;
                Some(if upper { pz - iv.hi } else { iv.lo - pz })
            };
            let mut hi_t = 2.0 * (if upper { z1 - iv.hi } else { iv.lo - z1 }) / d2.abs();
            let mut found = false;
            for _ in 0..40 {
                match outside(hi_t) {
                    Some(f) if f <= 0.0 => {
                        found = true;
                        break;
                    }
                    Some(_) => hi_t *= 2.0,
                    None => break,
                }
            }
            let px = x1 + hi_t * d1;
            if !found || self.event_between(x1, px) {
                clamp(x1)
            } else {
                let mut lo_t = 0.0;
                for _ in 0..60 {
                    let mid = 0.5 * (lo_t + hi_t);
                    match outside(mid) {
                        Some(f) if f > 0.0 => lo_t = mid,
                        _ => hi_t = mid,
                    }
                }
                let px = x1 + hi_t * d1;
                let piv = self.interval(*comp, px).unwrap_or(iv);
                (px, (z1 + hi_t * d2).clamp(piv.lo, piv.hi))
            }
        };
        push += ((nx - x1).powi(2) + (eps * (nz - z1)).powi(2)).sqrt();
        *x = nx;
        *z = nz;
        Ok(push)
    }
}

/// One projected Euler move from a point of the closed channel. Returns the
/// new point and the push length.
pub fn step_project(
    spec: &ChannelSpec,
    point: (f64, f64),
    displacement: (f64, f64),
    epsilon: f64,
    direction: ReflectionDirection,
) -> Result<((f64, f64), f64)> {
    if displacement.1.abs() > spec.bounds.l_min {
        return Err(Error::StepTooLarge {
            displacement: displacement.1.abs(),
            width: spec.bounds.l_min,
        });
    }
    let dom = ReflectedDomain::new(spec, epsilon, direction, None)?;
    let mut comp = dom.locate(point.0, point.1)?;
    let (mut x, mut z) = point;
    let push = dom.advance(&mut x, &mut z, &mut comp, displacement.0, displacement.1)?;
    Ok(((x, z), push))
}

struct Noise {
    x: ChaCha8Rng,
    z: ChaCha8Rng,
}

#[allow(clippy::too_many_arguments)]
fn advance_split(
    dom: &ReflectedDomain,
    st: &mut (f64, f64, Component),
    noise: &mut Noise,
    dx: f64,
    dz: f64,
    dt: f64,
    limit: f64,
    depth: u32,
) -> Result<f64> {
    if dz.abs() <= limit || depth >= 24 {
        return dom.advance(&mut st.0, &mut st.1, &mut st.2, dx, dz);
    }
    // Brownian-bridge midpoint of the oversized increment
    let q = (0.25 * dt).sqrt();
    let gx: f64 = noise.x.sample(StandardNormal);
    let gz: f64 = noise.z.sample(StandardNormal);
    let mx = 0.5 * dx + q * gx;
    let mz = 0.5 * dz + q * gz / dom.epsilon;
    let p1 = advance_split(dom, st, noise, mx, mz, 0.5 * dt, limit, depth + 1)?;
    let p2 = advance_split(dom, st, noise, dx - mx, dz - mz, 0.5 * dt, limit, depth + 1)?;
    Ok(p1 + p2)
}

fn exit_path(
    dom: &ReflectedDomain,
    start: (f64, f64),
    a: f64,
    params: &SdeParams,
    index: u64,
) -> Result<ReflectedPath> {
    let mut noise = Noise {
        x: rng::stream(params.seed, Domain::SdeX, index),
        z: rng::stream(params.seed, Domain::SdeZ, index),
    };
    let comp = dom.locate(start.0, start.1)?;
    let mut st = (start.0, start.1, comp);
    let (dt, sq) = (params.dt, params.dt.sqrt());
    let limit = 0.5 * dom.spec.bounds.l_min;
    let mut push = 0.0;
    let mut steps = 0u64;
    let mut path = params.record_every.map(|_| vec![(0.0, st.0, st.1)]);
    while st.0 < a {
        if let Some(tm) = params.max_time {
            if steps as f64 * dt > tm {
                return Err(Error::Fault(format!(
                    "time budget {tm} exhausted at ({}, {})",
                    st.0, st.1
                )));
            }
        }
        let iv = dom
            .interval(st.2, st.0)
            .ok_or_else(|| Error::Fault(format!("state ({}, {}) left its component", st.0, st.1)))?;
        let v = params.velocity.at(st.1, iv);
        let g1: f64 = noise.x.sample(StandardNormal);
        let g2: f64 = noise.z.sample(StandardNormal);
        let dx = v * dt + sq * g1;
        let dz = sq * g2 / params.epsilon;
        push += advance_split(dom, &mut st, &mut noise, dx, dz, dt, limit, 0)?;
        if !(st.0.is_finite() && st.1.is_finite()) {
            return Err(Error::Fault(format!("non-finite state after step {steps}")));
        }
        steps += 1;
        if let (Some(p), Some(k)) = (path.as_mut(), params.record_every) {
            if steps % k as u64 == 0 {
                p.push((steps as f64 * dt, st.0, st.1));
            }
        }
    }
    Ok(ReflectedPath {
        sigma: steps as f64 * dt,
        push_accum: push,
        steps,
        path,
    })
}

fn check_setup(spec: &ChannelSpec, start: (f64, f64), a: f64, params: &SdeParams) -> Result<()> {
    params.validate()?;
    let (lo, hi) = spec.x_range;
    if !(a > lo && a <= hi) {
        return Err(Error::Precondition(format!("exit level {a} outside ({lo}, {hi}]")));
    }
    if start.0 > a {
        return Err(Error::Precondition(format!("start x = {} lies beyond a = {a}", start.0)));
    }
    Ok(())
}

/// One path driven by the path-`index` noise streams of `params.seed`.
pub fn simulate_exit_2d(
    spec: &ChannelSpec,
    start: (f64, f64),
    a: f64,
    params: &SdeParams,
    index: u64,
) -> Result<ReflectedPath> {
    check_setup(spec, start, a, params)?;
    let dom = ReflectedDomain::new(spec, params.epsilon, params.direction, params.corner_rounding)?;
    exit_path(&dom, start, a, params, index)
}

/// `params.n_paths` independent paths in index order.
pub fn simulate_paths_2d(
    spec: &ChannelSpec,
    start: (f64, f64),
    a: f64,
    params: &SdeParams,
) -> Result<Vec<ReflectedPath>> {
    check_setup(spec, start, a, params)?;
    let dom = ReflectedDomain::new(spec, params.epsilon, params.direction, params.corner_rounding)?;
    (0..params.n_paths as u64)
        .into_par_iter()
        .map(|i| exit_path(&dom, start, a, params, i))
        .collect()
}

pub fn mean_exit_time_2d(
    spec: &ChannelSpec,
    start: (f64, f64),
    a: f64,
    params: &SdeParams,
) -> Result<Estimate> {
    if params.n_paths < 2 {
        return Err(Error::InsufficientSample("need at least 2 paths".into()));
    }
    let s: Vec<f64> = simulate_paths_2d(spec, start, a, params)?
        .iter()
        .map(|p| p.sigma)
        .collect();
    Ok(Estimate::from_samples(&s))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub epsilon: f64,
    pub sde: Estimate,
    pub graph: Estimate,
    /// Two-sample Kolmogorov–Smirnov distance between the exit-time samples.
    pub ks: f64,
    /// 5% critical value of `ks` for the two sample sizes.
    pub ks_critical: f64,
}

/// Runs both simulators from the same start and compares exit times.
pub fn compare_to_graph(
    spec: &ChannelSpec,
    start: (f64, f64),
    a: f64,
    sde: &SdeParams,
    graph_params: &SimParams,
) -> Result<ComparisonReport> {
    if (sde.velocity.mean() - graph_params.beta).abs() > 1e-12 * graph_params.beta.abs().max(1.0) {
        return Err(Error::Precondition(format!(
            "mean velocity {} differs from the graph drift {}",
            sde.velocity.mean(),
            graph_params.beta
        )));
    }
    if sde.n_paths < 2 || graph_params.n_paths < 2 {
        return Err(Error::InsufficientSample("need at least 2 paths per simulator".into()));
    }
    let sig: Vec<f64> = simulate_paths_2d(spec, start, a, sde)?
        .iter()
        .map(|p| p.sigma)
        .collect();
    let graph = MetricGraph::build(spec)?;
    let gp = graph.locate(start)?;
    let tau: Vec<f64> = walk::simulate_paths(&graph, gp, a, graph_params)?
        .iter()
        .map(|s| s.tau)
        .collect();
    Ok(ComparisonReport {
        epsilon: sde.epsilon,
        sde: Estimate::from_samples(&sig),
        graph: Estimate::from_samples(&tau),
        ks: stats::ks_statistic(&sig, &tau),
        ks_critical: stats::ks_critical(sig.len(), tau.len(), 0.05),
    })
}

/// `path,sigma,push_accum` rows.
pub fn write_paths_csv<W: Write>(paths: &[ReflectedPath], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path", "sigma", "push_accum"])
        .map_err(|e| Error::Io(e.to_string()))?;
    for (i, p) in paths.iter().enumerate() {
        out.serialize((i, p.sigma, p.push_accum))
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// `path,t,x,z` rows of the recorded states.
pub fn write_trajectories_csv<W: Write>(paths: &[ReflectedPath], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path", "t", "x", "z"])
        .map_err(|e| Error::Io(e.to_string()))?;
    for (i, p) in paths.iter().enumerate() {
        for &(t, x, z) in p.path.iter().flatten() {
            out.serialize((i, t, x, z)).map_err(|e| Error::Io(e.to_string()))?;
        }
    }
    out.flush()?;
    Ok(())
}
