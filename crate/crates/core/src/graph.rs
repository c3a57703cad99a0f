//! The metric graph of cross-section components of a channel.
//!
//! Main-channel stretches between consecutive vertices become main edges,
//! every wing becomes a wing edge from its attachment (an interior vertex)
//! to its tip (an exterior vertex). Plain jumps of the main channel without
//! a wing become degree-2 interior vertices. Edges and vertices are numbered
//! in x-order, main edge first, then the vertex at its right end, then the
//! wing hanging there and the wing's tip.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ChannelSpec, Side, WingSpec};
use crate::profile::Profile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Main,
    Wing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexKind {
    Interior,
    Exterior,
}

/// Which end of an edge meets a vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndAt {
    Start,
    End,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeEnd {
    pub edge: usize,
    pub at: EndAt,
}

/// Width function carried by an edge.
#[derive(Clone, Debug)]
pub enum EdgeWidth {
    /// `upper − lower` on a jump-free stretch of the main channel.
    Channel {
        upper: Arc<Profile>,
        lower: Arc<Profile>,
    },
    /// A wing sitting on `base` (the main-channel boundary on its side).
    Wing { wing: WingSpec, base: Arc<Profile> },
}

#[derive(Clone, Debug)]
pub struct Edge {
    pub id: usize,
    pub kind: EdgeKind,
    /// `[start, end]` is the edge's x-interval.
    pub start: f64,
    pub end: f64,
    pub width: EdgeWidth,
    pub start_vertex: Option<usize>,
    pub end_vertex: Option<usize>,
}

impl Edge {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.start && x <= self.end
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// `l_k(x)`, using the one-sided limit at the edge ends.
    pub fn width(&self, x: f64) -> f64 {
        match &self.width {
            EdgeWidth::Channel { upper, lower } => {
                if x >= self.end {
                    upper.value_left(self.end) - lower.value_left(self.end)
                } else {
                    let x = x.max(self.start);
                    upper.value(x) - lower.value(x)
                }
            }
            EdgeWidth::Wing { wing, .. } => wing.width(x.clamp(self.start, self.end)),
        }
    }

    /// `l_k'(x)`.
    pub fn slope(&self, x: f64) -> f64 {
        match &self.width {
            EdgeWidth::Channel { upper, lower } => {
                if x >= self.end {
                    upper.slope_left(self.end) - lower.slope_left(self.end)
                } else {
                    let x = x.max(self.start);
                    upper.slope(x) - lower.slope(x)
                }
            }
            EdgeWidth::Wing { wing, .. } => wing.width_slope(x.clamp(self.start, self.end)),
        }
    }

    /// Breakpoints of the width function inside the edge.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.width {
            EdgeWidth::Channel { .. } => vec![],
            EdgeWidth::Wing { wing, .. } => wing
                .breakpoints()
                .into_iter()
                .filter(|&x| x > self.start && x < self.end)
                .collect(),
        }
    }

    /// The z-interval of this edge's cross-section component at `x`.
    pub fn heights(&self, x: f64) -> (f64, f64) {
        match &self.width {
            EdgeWidth::Channel { upper, lower } => {
                if x >= self.end {
                    (lower.value_left(self.end), upper.value_left(self.end))
                } else {
                    let x = x.max(self.start);
                    (lower.value(x), upper.value(x))
                }
            }
            EdgeWidth::Wing { wing, base } => {
                let b = base.value(x);
                let w = wing.width(x);
                match wing.side {
                    Side::Above => (b, b + w),
                    Side::Below => (b - w, b),
                }
            }
        }
    }

    /// The vertex at the given end, if any.
    pub fn vertex_at(&self, at: EndAt) -> Option<usize> {
        match at {
            EndAt::Start => self.start_vertex,
            EndAt::End => self.end_vertex,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub x: f64,
    pub kind: VertexKind,
    pub ends: Vec<EdgeEnd>,
}

/// A point of the graph: edge plus x-coordinate on it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphPoint {
    pub edge: usize,
    pub x: f64,
}

/// One term of a vertex gluing condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluingTerm {
    pub edge: usize,
    /// +1 when the edge's x-values are ≥ the vertex x, −1 otherwise.
    pub sign: i8,
    /// One-sided width limit of the edge at the vertex.
    pub weight: f64,
}

/// The flux condition `Σ sign·weight·f'(x_i±) = 0` at one vertex. Exterior
/// vertices carry a single term and the reflecting flag (`l·f' → 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluingSpec {
    pub vertex: usize,
    pub reflecting: bool,
    pub terms: Vec<GluingTerm>,
}

impl GluingSpec {
    /// `Σ sign·weight·slope` for one-sided slopes listed in term order.
    pub fn residual(&self, slopes: &[f64]) -> f64 {
        self.terms
            .iter()
            .zip(slopes)
            .map(|(t, s)| t.sign as f64 * t.weight * s)
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct MetricGraph {
    edges: Vec<Edge>,
    vertices: Vec<Vertex>,
    /// Main edge ids in x-order.
    main_line: Vec<usize>,
    x_range: (f64, f64),
}

impl MetricGraph {
    /// Builds the graph of cross-section components of `spec`.
    pub fn build(spec: &ChannelSpec) -> Result<MetricGraph> {
        let (lo, hi) = spec.x_range;
        let mut wings: Vec<(usize, &WingSpec)> = spec.wings.iter().enumerate().collect();
        wings.sort_by(|a, b| a.1.q.total_cmp(&b.1.q));
        // spans sharing only an endpoint are allowed, up to rounding
        let mut spans: Vec<(f64, f64, f64)> = wings.iter().map(|(_, w)| (w.span().0, w.span().1, w.q)).collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut reach = (f64::NEG_INFINITY, f64::NAN);
        for &(l, h, q) in &spans {
            if l < reach.0 - 1e-9 {
                return Err(Error::Construction(format!(
                    "wings at q = {} and q = {} overlap",
                    reach.1, q
                )));
            }
            if h > reach.0 {
                reach = (h, q);
            }
        }
        if let Some(w) = wings.windows(2).find(|w| w[0].1.q == w[1].1.q) {
            return Err(Error::Construction(format!("two wings attached at q = {}", w[0].1.q)));
        }

        let mut xs: Vec<f64> = spec.jump_points();
        xs.extend(wings.iter().map(|(_, w)| w.q).filter(|&q| q > lo && q < hi));
        xs.sort_by(|a, b| a.total_cmp(b));
        xs.dedup();
        for (_, w) in &wings {
            if w.q <= lo || w.q >= hi {
                return Err(Error::Construction(format!(
                    "wing attachment q = {} must lie inside the window",
                    w.q
                )));
            }
        }

        let mut edges: Vec<Edge> = Vec::new();
        let mut vertices: Vec<Vertex> = Vec::new();
        let mut main_line = Vec::new();
        let channel = EdgeWidth::Channel {
            upper: spec.h_plus.clone(),
            lower: spec.h_minus.clone(),
        };
        let mut left = lo;
        let mut prev_vertex: Option<usize> = None;
        let mut wi = 0;
        for &vx in xs.iter().chain(std::iter::once(&hi)) {
            let eid = edges.len();
            let mut e = Edge {
                id: eid,
                kind: EdgeKind::Main,
                start: left,
                end: vx,
                width: channel.clone(),
                start_vertex: prev_vertex,
                end_vertex: None,
            };
            if let Some(v) = prev_vertex {
                vertices[v].ends.push(EdgeEnd {
                    edge: eid,
                    at: EndAt::Start,
                });
            }
            if vx == hi {
                edges.push(e);
                main_line.push(eid);
                break;
            }
            let vid = vertices.len();
            e.end_vertex = Some(vid);
            edges.push(e);
            main_line.push(eid);
            vertices.push(Vertex {
                id: vid,
                x: vx,
                kind: VertexKind::Interior,
                ends: vec![EdgeEnd {
                    edge: eid,
                    at: EndAt::End,
                }],
            });
            while wi < wings.len() && wings[wi].1.q < vx {
                wi += 1;
            }
            if wi < wings.len() && wings[wi].1.q == vx {
                let w = *wings[wi].1;
                let (sl, sh) = w.span();
                let wid = edges.len();
                let tip_vid = vid + 1;
                let base = match w.side {
                    Side::Above => spec.h_plus.clone(),
                    Side::Below => spec.h_minus.clone(),
                };
                let (start_vertex, end_vertex, at) = if w.r > 0.0 {
                    (Some(vid), Some(tip_vid), EndAt::Start)
                } else {
                    (Some(tip_vid), Some(vid), EndAt::End)
                };
                edges.push(Edge {
                    id: wid,
                    kind: EdgeKind::Wing,
                    start: sl,
                    end: sh,
                    width: EdgeWidth::Wing { wing: w, base },
                    start_vertex,
                    end_vertex,
                });
                vertices[vid].ends.push(EdgeEnd { edge: wid, at });
                vertices.push(Vertex {
                    id: tip_vid,
                    x: w.tip(),
                    kind: VertexKind::Exterior,
                    ends: vec![EdgeEnd {
                        edge: wid,
                        at: if w.r > 0.0 { EndAt::End } else { EndAt::Start },
                    }],
                });
                wi += 1;
            }
            prev_vertex = Some(vid);
            left = vx;
        }

        Ok(MetricGraph {
            edges,
            vertices,
            main_line,
            x_range: spec.x_range,
        })
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edge(&self, k: usize) -> &Edge {
        &self.edges[k]
    }

    pub fn vertex(&self, i: usize) -> &Vertex {
        &self.vertices[i]
    }

    pub fn x_range(&self) -> (f64, f64) {
        self.x_range
    }

    /// Main edge ids in x-order.
    pub fn main_line(&self) -> &[usize] {
        &self.main_line
    }

    pub fn wing_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Wing)
    }

    /// The main edge whose interval contains `x` (the right one at a vertex).
    pub fn main_edge_at(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.x_range;
        if x < lo || x > hi {
            return None;
        }
        let i = self
            .main_line
            .partition_point(|&e| self.edges[e].end <= x)
            .min(self.main_line.len() - 1);
        Some(self.main_line[i])
    }

    /// Flux gluing condition at vertex `i`.
    pub fn gluing_weights(&self, i: usize) -> Result<GluingSpec> {
        let v = self
            .vertices
            .get(i)
            .ok_or_else(|| Error::Parameter(format!("no vertex {i}")))?;
        let terms = v
            .ends
            .iter()
            .map(|end| {
                let e = &self.edges[end.edge];
                let (sign, weight) = match end.at {
                    EndAt::Start => (1, e.width(e.start)),
                    EndAt::End => (-1, e.width(e.end)),
                };
                GluingTerm {
                    edge: end.edge,
                    sign,
                    weight,
                }
            })
            .collect();
        Ok(GluingSpec {
            vertex: i,
            reflecting: v.kind == VertexKind::Exterior,
            terms,
        })
    }

    /// Identification map: the edge whose cross-section component contains
    /// `(x, z)`. Points on a shared wall or at an attachment cross-section
    /// map to a main edge; at a vertex the wider one-sided main component
    /// wins.
    pub fn locate(&self, point: (f64, f64)) -> Result<GraphPoint> {
        let (x, z) = point;
        let (lo, hi) = self.x_range;
        if !(x >= lo && x <= hi) {
            return Err(Error::Geometry(format!("x = {x} outside the graph window")));
        }
        const TOL: f64 = 1e-12;
        let mut best: Option<(usize, f64)> = None;
        for &m in &self.main_line {
            let e = &self.edges[m];
            if !e.contains(x) {
                continue;
            }
            let (zl, zh) = e.heights(x);
            if z >= zl - TOL && z <= zh + TOL {
                let w = zh - zl;
                if best.map_or(true, |(_, bw)| w > bw) {
                    best = Some((m, w));
                }
            }
        }
        if let Some((m, _)) = best {
            return Ok(GraphPoint { edge: m, x });
        }
        for e in self.wing_edges() {
            if x <= e.start || x >= e.end {
                continue;
            }
            let (zl, zh) = e.heights(x);
            if z >= zl - TOL && z <= zh + TOL && zh > zl {
                return Ok(GraphPoint { edge: e.id, x });
            }
        }
        Err(Error::Geometry(format!("point ({x}, {z}) is outside the channel")))
    }

    /// Serializable dump with width tables sampled at `samples` points per edge.
    pub fn dump(&self, samples: usize) -> Result<GraphDump> {
        let samples = samples.max(2);
        let edges = self
            .edges
            .iter()
            .map(|e| EdgeDump {
                id: e.id,
                kind: e.kind,
                start: e.start,
                end: e.end,
                start_vertex: e.start_vertex,
                end_vertex: e.end_vertex,
                widths: (0..samples)
                    .map(|i| {
                        let x = e.start + (e.end - e.start) * i as f64 / (samples - 1) as f64;
                        [x, e.width(x)]
                    })
                    .collect(),
            })
            .collect();
        let vertices = (0..self.vertices.len())
            .map(|i| {
                let v = &self.vertices[i];
                Ok(VertexDump {
                    id: v.id,
                    x: v.x,
                    kind: v.kind,
                    gluing: self.gluing_weights(i)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GraphDump { edges, vertices })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeDump {
    pub id: usize,
    pub kind: EdgeKind,
    pub start: f64,
    pub end: f64,
    pub start_vertex: Option<usize>,
    pub end_vertex: Option<usize>,
    pub widths: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexDump {
    pub id: usize,
    pub x: f64,
    pub kind: VertexKind,
    pub gluing: GluingSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub edges: Vec<EdgeDump>,
    pub vertices: Vec<VertexDump>,
}
