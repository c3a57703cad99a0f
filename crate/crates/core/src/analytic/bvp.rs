//! Finite-volume solver for `L̄_k u = −s_k` on the metric graph truncated
//! to `[x_left, a]`, with `u(a) = 0`, zero flux at the truncated left end
//! and at wing tips, continuity and the width-weighted flux balance at
//! interior vertices.
//!
//! On each edge the operator is written in conservative form
//! `(p u')' = −2 s w` with `p = w = l e^{2β(x − x_i)}`, referenced to the
//! node `x_i` of the cell being balanced so that no exponential overflows.
//! Each wing chain is eliminated from its tip towards the attachment, then
//! the main line is a single tridiagonal system.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeKind, GraphPoint, MetricGraph};

/// Edges carrying the unit source term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sources {
    All,
    Kind(EdgeKind),
    Edges(Vec<usize>),
}

impl Sources {
    fn weight(&self, graph: &MetricGraph, edge: usize) -> f64 {
        let hit = match self {
            Sources::All => true,
            Sources::Kind(k) => graph.edge(edge).kind == *k,
            Sources::Edges(list) => list.contains(&edge),
        };
        if hit {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvpOptions {
    /// Target cell size on every edge.
    pub h: f64,
    /// Required `e^{2β x_left}` smallness of the truncated left end.
    pub left_tolerance: f64,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions {
            h: 1e-3,
            left_tolerance: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeGrid {
    pub edge: usize,
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvpSolution {
    pub a: f64,
    pub beta: f64,
    pub h: f64,
    pub x_left: f64,
    pub grids: Vec<EdgeGrid>,
}

impl BvpSolution {
    /// Linear interpolation of the grid solution at a graph point.
    pub fn value(&self, p: GraphPoint) -> Result<f64> {
        let g = self
            .grids
            .iter()
            .find(|g| g.edge == p.edge)
            .ok_or_else(|| Error::Parameter(format!("edge {} is not part of the solution", p.edge)))?;
        let (lo, hi) = (g.xs[0].min(g.xs[g.xs.len() - 1]), g.xs[0].max(g.xs[g.xs.len() - 1]));
        if p.x < lo - 1e-12 || p.x > hi + 1e-12 {
            return Err(Error::OutOfRange { x: p.x, lo, hi });
        }
        let increasing = g.xs[g.xs.len() - 1] >= g.xs[0];
        let i = if increasing {
            g.xs.partition_point(|&x| x <= p.x)
        } else {
            g.xs.partition_point(|&x| x >= p.x)
        }
        .clamp(1, g.xs.len() - 1);
        let (x0, x1) = (g.xs[i - 1], g.xs[i]);
        let t = (p.x - x0) / (x1 - x0);
        Ok(g.us[i - 1] + t * (g.us[i] - g.us[i - 1]))
    }

    /// Value on the main line.
    pub fn at_main(&self, graph: &MetricGraph, x: f64) -> Result<f64> {
        let e = graph
            .main_edge_at(x)
            .ok_or_else(|| Error::OutOfRange { x, lo: self.x_left, hi: self.a })?;
        self.value(GraphPoint { edge: e, x })
    }

    /// `edge,x,u` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["edge", "x", "u"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for g in &self.grids {
            for (x, u) in g.xs.iter().zip(&g.us) {
                out.serialize((g.edge, x, u))
                    .map_err(|e| Error::Io(e.to_string()))?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn grid(from: f64, to: f64, h: f64) -> Vec<f64> {
    let n = ((to - from).abs() / h).ceil().max(2.0) as usize;
    (0..=n).map(|i| from + (to - from) * i as f64 / n as f64).collect()
}

/// Conductance seen from `xi` across the face towards `xj`.
fn kappa(l_face: f64, beta: f64, xi: f64, xj: f64) -> f64 {
    l_face * (beta * (xj - xi)).exp() / (xj - xi).abs()
}

/// Solves the exit problem on `(−∞, a]` with unit sources on `sources`.
pub fn solve_exit_bvp(
    graph: &MetricGraph,
    beta: f64,
    a: f64,
    sources: &Sources,
    opts: BvpOptions,
) -> Result<BvpSolution> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Divergence(format!("beta = {beta} must be positive")));
    }
    let (x_left, x_right) = graph.x_range();
    if !(a > x_left && a <= x_right) {
        return Err(Error::Precondition(format!(
            "exit level a = {a} must lie in ({x_left}, {x_right}]"
        )));
    }
    if (2.0 * beta * x_left).exp() >= opts.left_tolerance {
        return Err(Error::Precondition(format!(
            "left end {x_left} too close: e^(2 beta x_left) = {:e} is not below {:e}",
            (2.0 * beta * x_left).exp(),
            opts.left_tolerance
        )));
    }
    if !(opts.h > 0.0) {
        return Err(Error::Parameter("grid spacing must be positive".into()));
    }
    let h = opts.h;

    // main chain
    let mut xs: Vec<f64> = Vec::new();
    let mut node_edge: Vec<usize> = Vec::new();
    let mut main_grids: Vec<(usize, usize, usize)> = Vec::new();
    let mut vertex_node: Vec<(usize, usize)> = Vec::new();
    for &m in graph.main_line() {
        let e = graph.edge(m);
        if e.start >= a {
            break;
        }
        let g = grid(e.start, e.end.min(a), h);
        let first = if xs.is_empty() {
            0
        } else {
            if let Some(v) = e.start_vertex {
                vertex_node.push((v, xs.len() - 1));
            }
            xs.len() - 1
        };
        let skip = if xs.is_empty() { 0 } else { 1 };
        for &x in &g[skip..] {
            xs.push(x);
            node_edge.push(m);
        }
        main_grids.push((m, first, xs.len() - 1));
    }
    let n = xs.len();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n - 1 {
        let e = graph.edge(node_edge[i + 1]);
        let (x0, x1) = (xs[i], xs[i + 1]);
        let lf = e.width(0.5 * (x0 + x1));
        let s = sources.weight(graph, e.id);
        let k01 = kappa(lf, beta, x0, x1);
        let k10 = kappa(lf, beta, x1, x0);
        upper[i] += k01;
        diag[i] -= k01;
        lower[i + 1] += k10;
        diag[i + 1] -= k10;
        let half = 0.5 * (x1 - x0);
        rhs[i] -= 2.0 * s * e.width(x0) * half;
        rhs[i + 1] -= 2.0 * s * e.width(x1) * half;
    }

    // wings hanging from main-chain vertices, eliminated tip first
    struct WingChain {
        edge: usize,
        xs: Vec<f64>,
        a_coef: Vec<f64>,
        b_coef: Vec<f64>,
        node: usize,
    }
    let mut chains = Vec::new();
    for &(v, node) in &vertex_node {
        for end in &graph.vertex(v).ends {
            let e = graph.edge(end.edge);
            if e.kind != EdgeKind::Wing {
                continue;
            }
            let (q, tip) = match end.at {
                crate::graph::EndAt::Start => (e.start, e.end),
                crate::graph::EndAt::End => (e.end, e.start),
            };
            let wx = grid(q, tip, h);
            let m = wx.len() - 1;
            let s = sources.weight(graph, e.id);
            let face = |j: usize| e.width(0.5 * (wx[j] + wx[j + 1]));
            let src = |j: usize| {
                let mut v = 0.0;
                if j > 0 {
                    v += e.width(wx[j]) * 0.5 * (wx[j] - wx[j - 1]).abs();
                }
                if j < m {
                    v += e.width(wx[j]) * 0.5 * (wx[j + 1] - wx[j]).abs();
                }
                2.0 * s * v
            };
            let mut a_coef = vec![0.0; m + 1];
            let mut b_coef = vec![0.0; m + 1];
            // u_j = A_j u_{j−1} + B_j
            for j in (1..=m).rev() {
                let k_minus = kappa(face(j - 1), beta, wx[j], wx[j - 1]);
                let (k_plus, a_next, b_next) = if j < m {
                    (kappa(face(j), beta, wx[j], wx[j + 1]), a_coef[j + 1], b_coef[j + 1])
                } else {
                    (0.0, 0.0, 0.0)
                };
                let d = k_minus + k_plus * (1.0 - a_next);
                if !(d.abs() > 1e-300 && d.is_finite()) {
                    return Err(Error::Singular {
                        location: format!("edge {} node {j}", e.id),
                        detail: format!("pivot {d:e} while eliminating the wing"),
                    });
                }
                a_coef[j] = k_minus / d;
                b_coef[j] = (k_plus * b_next + src(j)) / d;
            }
            let k_v = kappa(face(0), beta, wx[0], wx[1]);
            diag[node] += k_v * (a_coef[1] - 1.0);
            rhs[node] -= k_v * b_coef[1] + s * e.width(q) * (wx[1] - wx[0]).abs();
            chains.push(WingChain {
                edge: e.id,
                xs: wx,
                a_coef,
                b_coef,
                node,
            });
        }
    }

    // Dirichlet at a
    lower[n - 1] = 0.0;
    upper[n - 1] = 0.0;
    diag[n - 1] = 1.0;
    rhs[n - 1] = 0.0;

    // Thomas
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let denom = diag[i] - if i > 0 { lower[i] * c[i - 1] } else { 0.0 };
        if !(denom.abs() > 1e-300 && denom.is_finite()) {
            let loc = match vertex_node.iter().find(|(_, nd)| *nd == i) {
                Some((v, _)) => format!("vertex {v}"),
                None => format!("edge {} x = {}", node_edge[i], xs[i]),
            };
            return Err(Error::Singular {
                location: loc,
                detail: format!("pivot {denom:e} on the main line"),
            });
        }
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - if i > 0 { lower[i] * d[i - 1] } else { 0.0 }) / denom;
    }
    let mut u = vec![0.0; n];
    u[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = d[i] - c[i] * u[i + 1];
    }

    let mut grids: Vec<EdgeGrid> = main_grids
        .iter()
        .map(|&(m, s, e)| EdgeGrid {
            edge: m,
            xs: xs[s..=e].to_vec(),
            us: u[s..=e].to_vec(),
        })
        .collect();
    for ch in chains {
        let m = ch.xs.len() - 1;
        let mut us = vec![0.0; m + 1];
        us[0] = u[ch.node];
        for j in 1..=m {
            us[j] = ch.a_coef[j] * us[j - 1] + ch.b_coef[j];
        }
        grids.push(EdgeGrid {
            edge: ch.edge,
            xs: ch.xs,
            us,
        });
    }
    if grids.iter().any(|g| g.us.iter().any(|v| !v.is_finite())) {
        return Err(Error::Singular {
            location: "solution".into(),
            detail: "non-finite values in the solved grid".into(),
        });
    }
    Ok(BvpSolution {
        a,
        beta,
        h,
        x_left,
        grids,
    })
}
