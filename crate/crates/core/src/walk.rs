//! Monte Carlo of the limiting diffusion on the metric graph.
//!
//! Inside an edge the walker follows `dx = (β + l'/(2l)) dt + dW` by Euler
//! steps. Near an interior vertex (closer than `h_vertex`) the remaining
//! excursion in the star of radius `h_vertex` is resolved in one move: the
//! exit leg is drawn from the exact exit law of the skew diffusion with the
//! width-weighted gluing condition and locally constant drifts, and the
//! expected time spent on each leg is charged to its edge kind. Wing tips
//! and the left window end reflect; the walk stops when the main-line
//! coordinate first reaches `a`.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeKind, EdgeWidth, EndAt, GraphPoint, MetricGraph, VertexKind};
use crate::rng::{self, Domain};
use crate::stats::Estimate;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub dt: f64,
    /// Vertex star radius; `3√dt` when absent.
    #[serde(default)]
    pub h_vertex: Option<f64>,
    pub beta: f64,
    /// Bound on `|l'/(2l)|`; `10/√dt` when absent.
    #[serde(default)]
    pub drift_clamp: Option<f64>,
    pub seed: u64,
    pub n_paths: usize,
    /// Simulated-time budget per path; exceeding it is a fault.
    #[serde(default)]
    pub max_time: Option<f64>,
    /// Keep every `record_every`-th state of each path.
    #[serde(default)]
    pub record_every: Option<usize>,
}

impl SimParams {
    pub fn new(dt: f64, beta: f64, seed: u64, n_paths: usize) -> SimParams {
        SimParams {
            dt,
            h_vertex: None,
            beta,
            drift_clamp: None,
            seed,
            n_paths,
            max_time: None,
            record_every: None,
        }
    }

    pub fn h(&self) -> f64 {
        self.h_vertex.unwrap_or(3.0 * self.dt.sqrt())
    }

    pub fn clamp(&self) -> f64 {
        self.drift_clamp.unwrap_or(10.0 / self.dt.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Parameter(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Parameter(format!("beta = {} must be positive", self.beta)));
        }
        if self.h() < 3.0 * self.dt.sqrt() * (1.0 - 1e-12) {
            return Err(Error::Parameter(format!(
                "h_vertex = {} is below 3 sqrt(dt) = {}",
                self.h(),
                3.0 * self.dt.sqrt()
            )));
        }
        if !(self.clamp() > 0.0) {
            return Err(Error::Parameter("drift_clamp must be positive".into()));
        }
        if self.record_every == Some(0) {
            return Err(Error::Parameter("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub edge: usize,
    pub x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    /// Always `occupation_main + occupation_wing`.
    pub tau: f64,
    pub occupation_main: f64,
    pub occupation_wing: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<PathPoint>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationEstimate {
    pub tau: Estimate,
    pub main: Estimate,
    pub wing: Estimate,
    /// `E wing / E tau`.
    pub wing_fraction: f64,
}

struct Leg {
    edge: usize,
    dir: f64,
    alpha: f64,
    mu: f64,
    kind: EdgeKind,
}

/// `s(ρ) = (1 − e^{−2μρ})/(2μ)`, the scale function with `s'(0) = 1`.
fn scale(mu: f64, rho: f64) -> f64 {
    let y = 2.0 * mu * rho;
    if y.abs() < 1e-8 {
        rho * (1.0 - 0.5 * y)
    } else {
        -(-y).exp_m1() / (2.0 * mu)
    }
}

/// Solution of `½p'' + μp' = −1`, `p(0) = p'(0) = 0`.
fn particular(mu: f64, rho: f64) -> f64 {
    let y = 2.0 * mu * rho;
    if y.abs() < 1e-3 {
        let r2 = rho * rho;
        -r2 + r2 * rho * mu * (2.0 / 3.0 - mu * rho / 3.0 + 2.0 / 15.0 * mu * mu * r2)
    } else {
        -rho / mu - (-y).exp_m1() / (2.0 * mu * mu)
    }
}

struct Walker<'g> {
    graph: &'g MetricGraph,
    beta: f64,
    dt: f64,
    sqdt: f64,
    h: f64,
    clamp: f64,
    a: f64,
}

impl Walker<'_> {
    fn drift(&self, e: &Edge, x: f64) -> f64 {
        let w = e.width(x);
        let g = if w > 0.0 {
            e.slope(x) / (2.0 * w)
        } else if x - e.start < e.end - x {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        if g.is_nan() {
            0.0
        } else {
            g.clamp(-self.clamp, self.clamp)
        }
    }

    /// One Euler move. In a rounded wing tip `l ∝ √s` near the tip distance
    /// `s`, so the drift carries a `1/(4s)` repulsion; that part is taken
    /// implicitly, which keeps `s > 0` without clamping.
    fn euler(&self, e: &Edge, x: f64, xi: f64) -> f64 {
        if let EdgeWidth::Wing { wing, .. } = &e.width {
            let rho = wing.tip_radius;
            let dir = wing.direction();
            let s0 = (wing.tip() - x) * dir;
            if rho > 0.0 && s0 < rho {
                // ds = (−dir β + 1/(4s) − 1/(4(2ρ − s))) dt − dir dW
                let b = s0 + (-dir * self.beta - 0.25 / (2.0 * rho - s0)) * self.dt
                    - dir * self.sqdt * xi;
                let s1 = 0.5 * (b + (b * b + self.dt).sqrt());
                return wing.tip() - dir * s1;
            }
        }
        x + (self.beta + self.drift(e, x)) * self.dt + self.sqdt * xi
    }

    /// An interior vertex below `a` at the given end of `e`.
    fn active_vertex(&self, e: &Edge, at: EndAt) -> Option<usize> {
        let v = e.vertex_at(at)?;
        let vx = self.graph.vertex(v);
        (vx.kind == VertexKind::Interior && vx.x < self.a).then_some(v)
    }

    fn legs(&self, v: usize) -> Vec<Leg> {
        let vx = self.graph.vertex(v);
        vx.ends
            .iter()
            .map(|end| {
                let e = self.graph.edge(end.edge);
                let (dir, alpha) = match end.at {
                    EndAt::Start => (1.0, e.width(e.start)),
                    EndAt::End => (-1.0, e.width(e.end)),
                };
                let mid = vx.x + dir * 0.5 * self.h;
                Leg {
                    edge: end.edge,
                    dir,
                    alpha,
                    mu: dir * (self.beta + self.drift(e, mid)),
                    kind: e.kind,
                }
            })
            .collect()
    }

    /// Resolves the star excursion from distance `d` on `edge`; returns the
    /// exit leg's edge and its times charged to main and wing edges.
    fn resolve(&self, v: usize, edge: usize, d: f64, u: f64) -> Result<(usize, f64, f64, f64)> {
        let legs = self.legs(v);
        let h = self.h;
        let big_s: Vec<f64> = legs.iter().map(|l| scale(l.mu, h)).collect();
        let norm: f64 = legs.iter().zip(&big_s).map(|(l, s)| l.alpha / s).sum();
        let e_in = legs
            .iter()
            .position(|l| l.edge == edge)
            .ok_or_else(|| Error::Fault(format!("edge {edge} is not incident to vertex {v}")))?;
        let s_in = scale(legs[e_in].mu, d) / big_s[e_in];

        let mut pick = legs.len() - 1;
        let mut acc = 0.0;
        for k in 0..legs.len() {
            let c = (legs[k].alpha / big_s[k]) / norm;
            let delta = if k == e_in { 1.0 } else { 0.0 };
            acc += c + (delta - c) * s_in;
            if u < acc {
                pick = k;
                break;
            }
        }

        let (mut t_main, mut t_wing) = (0.0, 0.0);
        let p_in = particular(legs[e_in].mu, d);
        for k in 0..legs.len() {
            let pk = particular(legs[k].mu, h);
            let c = -(legs[k].alpha * pk / big_s[k]) / norm;
            let own = if k == e_in { 1.0 } else { 0.0 };
            let b = -(own * pk + c) / big_s[e_in];
            let g = (own * p_in + c + b * scale(legs[e_in].mu, d)).max(0.0);
            match legs[k].kind {
                EdgeKind::Main => t_main += g,
                EdgeKind::Wing => t_wing += g,
            }
        }
        if !(t_main.is_finite() && t_wing.is_finite()) {
            return Err(Error::Fault(format!(
                "non-finite vertex time at vertex {v} (drifts {:?})",
                legs.iter().map(|l| l.mu).collect::<Vec<_>>()
            )));
        }
        let vx = self.graph.vertex(v).x;
        Ok((legs[pick].edge, vx + legs[pick].dir * h, t_main, t_wing))
    }
}

fn check_setup(graph: &MetricGraph, start: GraphPoint, a: f64, params: &SimParams) -> Result<()> {
    params.validate()?;
    let (lo, hi) = graph.x_range();
    if !(a > lo && a <= hi) {
        return Err(Error::Precondition(format!("exit level {a} outside ({lo}, {hi}]")));
    }
    let e = graph
        .edges()
        .get(start.edge)
        .ok_or_else(|| Error::Parameter(format!("no edge {}", start.edge)))?;
    if !e.contains(start.x) {
        return Err(Error::OutOfRange { x: start.x, lo: e.start, hi: e.end });
    }
    if e.kind == EdgeKind::Main && start.x > a {
        return Err(Error::Precondition(format!("start {} lies beyond a = {a}", start.x)));
    }
    let h = params.h();
    for e in graph.edges().iter().filter(|e| e.start < a) {
        if h >= 0.5 * e.len() && (e.start_vertex.is_some() || e.end_vertex.is_some()) {
            return Err(Error::Precondition(format!(
                "h_vertex = {h} is not below half the length {} of edge {}",
                e.len(),
                e.id
            )));
        }
    }
    Ok(())
}

fn exit_path(
    graph: &MetricGraph,
    start: GraphPoint,
    a: f64,
    params: &SimParams,
    rng: &mut ChaCha8Rng,
) -> Result<ExitSample> {
    let w = Walker {
        graph,
        beta: params.beta,
        dt: params.dt,
        sqdt: params.dt.sqrt(),
        h: params.h(),
        clamp: params.clamp(),
        a,
    };
    let (mut edge, mut x) = (start.edge, start.x);
    let (mut t_main, mut t_wing) = (0.0f64, 0.0f64);
    let mut path = params.record_every.map(|_| vec![PathPoint { t: 0.0, edge, x }]);
    let mut steps = 0usize;

    if graph.edge(edge).kind == EdgeKind::Main && x >= a {
        return Ok(ExitSample {
            tau: 0.0,
            occupation_main: 0.0,
            occupation_wing: 0.0,
            path,
        });
    }

    loop {
        // star resolution
        let e = graph.edge(edge);
        let near = [EndAt::Start, EndAt::End].into_iter().find_map(|at| {
            let v = w.active_vertex(e, at)?;
            let d = match at {
                EndAt::Start => x - e.start,
                EndAt::End => e.end - x,
            };
            (d < w.h).then_some((v, d.max(0.0)))
        });
        if let Some((v, d)) = near {
            let (ne, nx, tm, tw) = w.resolve(v, edge, d, rng.random::<f64>())?;
            edge = ne;
            x = nx;
            t_main += tm;
            t_wing += tw;
            let e = graph.edge(edge);
            if e.kind == EdgeKind::Main && x >= a {
                break;
            }
        }

        if let Some(tm) = params.max_time {
            if t_main + t_wing > tm {
                return Err(Error::Fault(format!(
                    "time budget {tm} exhausted at edge {edge}, x = {x}"
                )));
            }
        }

        let e = graph.edge(edge);
        let xi: f64 = rng.sample(StandardNormal);
        let mut nx = w.euler(e, x, xi);
        match e.kind {
            EdgeKind::Main => t_main += w.dt,
            EdgeKind::Wing => t_wing += w.dt,
        }
        if !nx.is_finite() {
            return Err(Error::Fault(format!("non-finite state on edge {edge} from x = {x}")));
        }
        if e.kind == EdgeKind::Main {
            if nx >= a {
                break;
            }
            // a Brownian bridge may have touched a between the two samples
            let p = (-2.0 * (a - x) * (a - nx) / w.dt).exp();
            if rng.random::<f64>() < p {
                break;
            }
        }

        // reflecting ends; interior vertices are caught by the star test
        if nx > e.end && w.active_vertex(e, EndAt::End).is_none() {
            nx = (2.0 * e.end - nx).max(e.start);
        } else if nx < e.start && w.active_vertex(e, EndAt::Start).is_none() {
            nx = (2.0 * e.start - nx).min(e.end);
        }
        x = nx.clamp(e.start, e.end);

        steps += 1;
        if let (Some(p), Some(k)) = (path.as_mut(), params.record_every) {
            if steps % k == 0 {
                p.push(PathPoint { t: t_main + t_wing, edge, x });
            }
        }
    }
    Ok(ExitSample {
        tau: t_main + t_wing,
        occupation_main: t_main,
        occupation_wing: t_wing,
        path,
    })
}

/// One path of the walk, driven by the path-`index` stream of `params.seed`.
pub fn simulate_exit(
    graph: &MetricGraph,
    start: GraphPoint,
    a: f64,
    params: &SimParams,
    index: u64,
) -> Result<ExitSample> {
    check_setup(graph, start, a, params)?;
    let mut rng = rng::stream(params.seed, Domain::GraphPath, index);
    exit_path(graph, start, a, params, &mut rng)
}

/// `params.n_paths` independent paths, in index order.
pub fn simulate_paths(
    graph: &MetricGraph,
    start: GraphPoint,
    a: f64,
    params: &SimParams,
) -> Result<Vec<ExitSample>> {
    check_setup(graph, start, a, params)?;
    (0..params.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(params.seed, Domain::GraphPath, i);
            exit_path(graph, start, a, params, &mut rng)
        })
        .collect()
}

fn need_two(params: &SimParams) -> Result<()> {
    if params.n_paths < 2 {
        return Err(Error::InsufficientSample(format!(
            "need at least 2 paths (got {})",
            params.n_paths
        )));
    }
    Ok(())
}

pub fn mean_exit_time(
    graph: &MetricGraph,
    start: GraphPoint,
    a: f64,
    params: &SimParams,
) -> Result<Estimate> {
    need_two(params)?;
    let taus: Vec<f64> = simulate_paths(graph, start, a, params)?
        .iter()
        .map(|s| s.tau)
        .collect();
    Ok(Estimate::from_samples(&taus))
}

pub fn occupation_estimate(samples: &[ExitSample]) -> Result<OccupationEstimate> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSample("need at least 2 paths".into()));
    }
    let col = |f: fn(&ExitSample) -> f64| samples.iter().map(f).collect::<Vec<_>>();
    let tau = Estimate::from_samples(&col(|s| s.tau));
    let wing = Estimate::from_samples(&col(|s| s.occupation_wing));
    Ok(OccupationEstimate {
        tau,
        main: Estimate::from_samples(&col(|s| s.occupation_main)),
        wing,
        wing_fraction: if tau.mean > 0.0 { wing.mean / tau.mean } else { 0.0 },
    })
}

pub fn wing_occupation_fraction(
    graph: &MetricGraph,
    start: GraphPoint,
    a: f64,
    params: &SimParams,
) -> Result<OccupationEstimate> {
    need_two(params)?;
    occupation_estimate(&simulate_paths(graph, start, a, params)?)
}

/// `path,tau,occupation_main,occupation_wing` rows.
pub fn write_samples_csv<W: Write>(samples: &[ExitSample], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path", "tau", "occupation_main", "occupation_wing"])
        .map_err(|e| Error::Io(e.to_string()))?;
    for (i, s) in samples.iter().enumerate() {
        out.serialize((i, s.tau, s.occupation_main, s.occupation_wing))
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// `path,t,edge,x` rows of the recorded states.
pub fn write_paths_csv<W: Write>(samples: &[ExitSample], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path", "t", "edge", "x"])
        .map_err(|e| Error::Io(e.to_string()))?;
    for (i, s) in samples.iter().enumerate() {
        for p in s.path.iter().flatten() {
            out.serialize((i, p.t, p.edge, p.x))
                .map_err(|e| Error::Io(e.to_string()))?;
        }
    }
    out.flush()?;
    Ok(())
}
