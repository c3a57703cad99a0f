//! Random channels built from i.i.d. blocks, and the environment statistics
//! `K(t)`, `E n` and the joint wing moment.
//!
//! Block `k` covers `[φ + k·b, φ + (k+1)·b)` where `b` is the block length
//! and `φ` a uniform phase. Each block draws, from its own counter-based
//! stream, one main-channel width (held constant on the block, or used as a
//! knot value at the block's left end for cubic smoothing) and at most one
//! wing attached at the block midpoint. Channels are flat-bottomed
//! (`h− ≡ 0`) and wings are free, so every jump is a single vertical wall
//! and wing walls never share an x with a jump.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{downstream_weight, wing_weight, MainWidth};
use crate::error::{Error, Result};
use crate::geometry::{Attachment, Bounds, ChannelSpec, Side, WingSpec};
use crate::profile::Profile;
use crate::quad;
use crate::rng::{self, Domain};
use crate::stats::{self, Estimate};

/// A bounded law on the reals, sampled through its quantile function so
/// that every draw consumes exactly one uniform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Law {
    PointMass {
        value: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Finite support; empty `weights` means equiprobable.
    Discrete {
        values: Vec<f64>,
        #[serde(default)]
        weights: Vec<f64>,
    },
}

impl Law {
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Law::PointMass { value } => *value,
            Law::Uniform { lo, hi } => lo + u * (hi - lo),
            Law::Discrete { values, weights } => {
                if weights.is_empty() {
                    let i = ((u * values.len() as f64) as usize).min(values.len() - 1);
                    return values[i];
                }
                let total: f64 = weights.iter().sum();
                let mut acc = 0.0;
                for (v, w) in values.iter().zip(weights) {
                    acc += w / total;
                    if u < acc {
                        return *v;
                    }
                }
                values[values.len() - 1]
            }
        }
    }

    /// `(inf, sup)` of the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Law::PointMass { value } => (*value, *value),
            Law::Uniform { lo, hi } => (*lo, *hi),
            Law::Discrete { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Law::PointMass { value } => *value,
            Law::Uniform { lo, hi } => 0.5 * (lo + hi),
            Law::Discrete { values, weights } => {
                if weights.is_empty() {
                    stats::mean(values)
                } else {
                    let total: f64 = weights.iter().sum();
                    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
                }
            }
        }
    }

    fn check(&self, what: &str) -> Result<()> {
        let ok = match self {
            Law::PointMass { value } => value.is_finite(),
            Law::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Law::Discrete { values, weights } => {
                !values.is_empty()
                    && values.iter().all(|v| v.is_finite())
                    && (weights.is_empty()
                        || (weights.len() == values.len()
                            && weights.iter().all(|w| *w >= 0.0 && w.is_finite())
                            && weights.iter().sum::<f64>() > 0.0))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("malformed {what} law")))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Width constant on each block, jumping at block boundaries.
    #[default]
    PiecewiseConstant,
    /// Monotone cubic through one knot per block.
    MonotoneCubic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignLaw {
    #[default]
    Positive,
    Negative,
    /// ±1 with probability 1/2 each.
    Symmetric,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideLaw {
    #[default]
    Above,
    Below,
    /// Either side with probability 1/2.
    Either,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WingLaw {
    /// Law of `|r|`.
    pub length: Law,
    #[serde(default)]
    pub sign: SignLaw,
    #[serde(default)]
    pub side: SideLaw,
    /// Law of the wing level (width of the straight part).
    pub level: Law,
    /// Tip cap length; `None` uses `min(|r|, A₁)/10`, `Some(0)` a square end.
    #[serde(default)]
    pub tip_radius: Option<f64>,
}

fn default_block_length() -> f64 {
    1.0
}

fn default_n0() -> u32 {
    1
}

fn default_a1() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentParams {
    #[serde(default = "default_block_length")]
    pub block_length: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub width_law: Law,
    #[serde(default)]
    pub smoothing: Smoothing,
    #[serde(default)]
    pub wing_prob: f64,
    #[serde(default)]
    pub wing_law: Option<WingLaw>,
    /// Maximal number of wings in a unit window.
    #[serde(default = "default_n0")]
    pub n0: u32,
    /// Bound on `|r|` and on the wing level.
    #[serde(default = "default_a1")]
    pub a1: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub phase_shift: bool,
}

/// Draws of one block.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Block {
    width: f64,
    wing: Option<(f64, Side, f64)>,
}

impl EnvironmentParams {
    /// Constant-width, wingless environment.
    pub fn constant(width: f64, seed: u64) -> Self {
        EnvironmentParams {
            block_length: 1.0,
            l_min: 0.5 * width,
            l_max: 2.0 * width,
            width_law: Law::PointMass { value: width },
            smoothing: Smoothing::PiecewiseConstant,
            wing_prob: 0.0,
            wing_law: None,
            n0: 1,
            a1: 1.0,
            seed,
            phase_shift: true,
        }
    }

    /// Blocks further apart than this are independent.
    pub fn dependence_range(&self) -> f64 {
        match self.smoothing {
            Smoothing::PiecewiseConstant => 3.0 * self.block_length,
            Smoothing::MonotoneCubic => 4.0 * self.block_length,
        }
    }

    /// Wing bound usable for spans: `b` with one sign, `b/2` with both.
    fn max_span(&self) -> f64 {
        match self.wing_law.as_ref().map(|w| w.sign) {
            Some(SignLaw::Symmetric) => 0.5 * self.block_length,
            _ => self.block_length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.block_length;
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::Parameter(format!("block_length must be positive (got {b})")));
        }
        if !(self.l_min > 0.0 && self.l_min < self.l_max && self.l_max.is_finite()) {
            return Err(Error::Parameter(format!(
                "need 0 < l_min < l_max (got {}, {})",
                self.l_min, self.l_max
            )));
        }
        self.width_law.check("width")?;
        let (wlo, whi) = self.width_law.support();
        if wlo < self.l_min || whi > self.l_max {
            return Err(Error::Parameter(format!(
                "width law support [{wlo}, {whi}] leaves [{}, {}]",
                self.l_min, self.l_max
            )));
        }
        if !(0.0..=1.0).contains(&self.wing_prob) {
            return Err(Error::Parameter(format!("wing_prob {} not in [0, 1]", self.wing_prob)));
        }
        if self.n0 == 0 {
            return Err(Error::Parameter("n0 must be at least 1".into()));
        }
        if !(self.a1 > 0.0 && self.a1.is_finite()) {
            return Err(Error::Parameter("A1 must be positive and finite".into()));
        }
        if self.wing_prob > 0.0 {
            let law = self
                .wing_law
                .as_ref()
                .ok_or_else(|| Error::Parameter("wing_prob > 0 needs a wing_law".into()))?;
            law.length.check("wing length")?;
            law.level.check("wing level")?;
            let needed = (1.0 / b - 1e-12).ceil() as u32;
            if needed > self.n0 {
                return Err(Error::Parameter(format!(
                    "one wing per block of length {b} allows {needed} wings per unit length, above n0 = {}",
                    self.n0
                )));
            }
            let (llo, lhi) = law.length.support();
            let (vlo, vhi) = law.level.support();
            if llo <= 0.0 || vlo <= 0.0 {
                return Err(Error::Parameter("wing length and level must be positive".into()));
            }
            if lhi > self.a1 || vhi > self.a1 {
                return Err(Error::Parameter(format!(
                    "wing sizes up to ({lhi}, {vhi}) exceed A1 = {}",
                    self.a1
                )));
            }
            if lhi > self.max_span() + 1e-12 {
                return Err(Error::Parameter(format!(
                    "wing length up to {lhi} would let neighbouring wings overlap (limit {})",
                    self.max_span()
                )));
            }
            if let Some(rho) = law.tip_radius {
                if !(rho >= 0.0 && rho <= llo) {
                    return Err(Error::Parameter(format!(
                        "tip radius {rho} must lie in [0, min |r|]"
                    )));
                }
            }
        }
        Ok(())
    }

    fn phase(&self) -> f64 {
        if self.phase_shift {
            rng::stream(self.seed, Domain::Phase, 0).random::<f64>() * self.block_length
        } else {
            0.0
        }
    }

    fn block(&self, k: i64) -> Block {
        let mut r = rng::stream(self.seed, Domain::Block, k as u64);
        let u: [f64; 6] = std::array::from_fn(|_| r.random::<f64>());
        let width = self.width_law.quantile(u[0]);
        let wing = match &self.wing_law {
            Some(law) if u[1] < self.wing_prob => {
                let len = law.length.quantile(u[2]);
                let sign = match law.sign {
                    SignLaw::Positive => 1.0,
                    SignLaw::Negative => -1.0,
                    SignLaw::Symmetric => {
                        if u[3] < 0.5 {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                };
                let side = match law.side {
                    SideLaw::Above => Side::Above,
                    SideLaw::Below => Side::Below,
                    SideLaw::Either => {
                        if u[4] < 0.5 {
                            Side::Above
                        } else {
                            Side::Below
                        }
                    }
                };
                Some((sign * len, side, law.level.quantile(u[5])))
            }
            _ => None,
        };
        Block { width, wing }
    }
}

/// Samples the channel on `x_range`. Deterministic in `(params, x_range)`.
pub fn sample_environment(params: &EnvironmentParams, x_range: (f64, f64)) -> Result<ChannelSpec> {
    params.validate()?;
    let (lo, hi) = x_range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Parameter(format!("x_range {x_range:?} must be finite and increasing")));
    }
    let b = params.block_length;
    let phi = params.phase();
    let first = ((lo - phi) / b).floor() as i64;
    let last = ((hi - phi) / b).floor() as i64;
    let pad = 2;
    let blocks: Vec<(i64, Block)> = ((first - pad)..=(last + pad))
        .map(|k| (k, params.block(k)))
        .collect();
    let block_of = |k: i64| &blocks[(k - first + pad) as usize].1;
    let left_end = |k: i64| phi + k as f64 * b;

    let l0 = match params.smoothing {
        Smoothing::PiecewiseConstant => {
            let mut breaks = vec![lo];
            let mut levels = vec![block_of(first).width];
            for k in (first + 1)..=last {
                let x = left_end(k);
                if x <= lo || x >= hi {
                    continue;
                }
                let w = block_of(k).width;
                if w != *levels.last().unwrap() {
                    breaks.push(x);
                    levels.push(w);
                }
            }
            breaks.push(hi);
            Profile::piecewise_constant(&breaks, &levels)?
        }
        Smoothing::MonotoneCubic => {
            let ks = (first - 1)..=(last + 2);
            let knots = ks.clone().map(left_end).collect();
            let values = ks.map(|k| block_of(k).width).collect();
            Profile::new(knots, values, vec![])?
        }
    };

    let mut wings = Vec::new();
    for &(k, ref blk) in &blocks {
        if let Some((r, side, level)) = blk.wing {
            let q = phi + (k as f64 + 0.5) * b;
            if q <= lo || q >= hi {
                continue;
            }
            let law = params.wing_law.as_ref().expect("wing drawn without law");
            let tip_radius = law
                .tip_radius
                .unwrap_or_else(|| WingSpec::default_tip_radius(r, params.a1))
                .min(r.abs());
            wings.push(WingSpec {
                q,
                r,
                side,
                level,
                tip_radius,
                attachment: Attachment::Free,
            });
        }
    }

    let bounds = Bounds {
        l_min: params.l_min,
        l_max: params.l_max,
        wing_bound: Some(params.a1),
        max_wings_per_unit: Some(params.n0),
    };
    ChannelSpec::flat_bottom(&l0, wings, bounds, x_range)
}

/// Estimates of `K(t) = E[l0(s)/l0(s+t)]` on a grid of lags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub t_grid: Vec<f64>,
    pub k_values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub sample_length: f64,
    pub ensemble_size: usize,
    /// `l_max/l_min`, the bound on `K` used for tail estimates.
    pub ratio_bound: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct KRow {
    t: f64,
    #[serde(rename = "K")]
    k: f64,
    stderr: f64,
}

impl KEstimate {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for i in 0..self.t_grid.len() {
            out.serialize(KRow {
                t: self.t_grid[i],
                k: self.k_values[i],
                stderr: self.std_errors[i],
            })
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads the `t,K,stderr` table back; the ratio bound is not stored there.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<KEstimate> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut est = KEstimate {
            t_grid: vec![],
            k_values: vec![],
            std_errors: vec![],
            sample_length: f64::NAN,
            ensemble_size: 0,
            ratio_bound: None,
        };
        for row in rdr.deserialize::<KRow>() {
            let row = row.map_err(|e| Error::Io(e.to_string()))?;
            est.t_grid.push(row.t);
            est.k_values.push(row.k);
            est.std_errors.push(row.stderr);
        }
        Ok(est)
    }
}

/// Uniform lag grid `0, dt, …, t_max`.
pub fn lag_grid(t_max: f64, dt: f64) -> Vec<f64> {
    let n = (t_max / dt).ceil().max(1.0) as usize;
    (0..=n).map(|i| t_max * i as f64 / n as f64).collect()
}

/// Smallest `T` with `(l_max/l_min)·e^{−2βT}/β < tol`: beyond it the
/// inverse-speed integral `2∫K e^{−2βt}dt` changes by less than `tol`.
pub fn k_truncation(beta: f64, ratio: f64, tol: f64) -> f64 {
    ((ratio / (beta * tol)).ln() / (2.0 * beta)).max(0.0)
}

const BOOTSTRAP_REPS: usize = 200;

/// Spatial-ergodic estimate of `K` on one sample of length `s_len`, with
/// moving-block bootstrap standard errors.
pub fn estimate_k(params: &EnvironmentParams, t_grid: &[f64], s_len: f64) -> Result<KEstimate> {
    params.validate()?;
    if t_grid.is_empty() || t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Parameter("t_grid must be nonempty, finite and nonnegative".into()));
    }
    let t_max = t_grid.iter().cloned().fold(0.0, f64::max);
    if !(s_len > t_max) {
        return Err(Error::InsufficientSample(format!(
            "sample length {s_len} must exceed the largest lag {t_max}"
        )));
    }
    let b = params.block_length;
    let spec = sample_environment(params, (0.0, s_len + t_max + b))?;
    let prof = spec.h_plus.clone();
    let knots = prof.knots().to_vec();
    let n_chunks = (s_len / b).floor() as usize;
    let mut edges: Vec<f64> = (0..=n_chunks).map(|j| j as f64 * b).collect();
    if s_len > edges[n_chunks] {
        edges.push(s_len);
    }
    let block_len = ((params.dependence_range() / b).ceil() as usize + 1)
        .max((n_chunks as f64).cbrt().ceil() as usize)
        .min(n_chunks.max(1));

    let rows: Vec<(f64, f64)> = t_grid
        .par_iter()
        .enumerate()
        .map(|(ti, &t)| {
            if t == 0.0 {
                return (1.0, 0.0);
            }
            // chunk integrals of l(s)/l(s+t) − 1
            let chunk: Vec<f64> = edges
                .windows(2)
                .map(|w| {
                    let (a, c) = (w[0], w[1]);
                    let mut br: Vec<f64> = knots[knots.partition_point(|&k| k <= a)
                        ..knots.partition_point(|&k| k < c)]
                        .to_vec();
                    br.extend(
                        knots[knots.partition_point(|&k| k <= a + t)
                            ..knots.partition_point(|&k| k < c + t)]
                            .iter()
                            .map(|k| k - t),
                    );
                    quad::integrate(
                        |s| prof.value(s) / prof.value(s + t) - 1.0,
                        a,
                        c,
                        &br,
                        1e-9 * (c - a),
                    )
                })
                .collect();
            let k = 1.0 + chunk.iter().sum::<f64>() / s_len;
            let full = &chunk[..n_chunks];
            let se = block_bootstrap_se(full, block_len, params.seed, ti as u64) / b;
            (k, se)
        })
        .collect();

    Ok(KEstimate {
        t_grid: t_grid.to_vec(),
        k_values: rows.iter().map(|r| r.0).collect(),
        std_errors: rows.iter().map(|r| r.1).collect(),
        sample_length: s_len,
        ensemble_size: 1,
        ratio_bound: Some(params.l_max / params.l_min),
    })
}

/// Standard error of the mean of `xs` by the moving-block bootstrap.
fn block_bootstrap_se(xs: &[f64], block: usize, seed: u64, index: u64) -> f64 {
    let n = xs.len();
    if n < 2 || block == 0 || block > n {
        return 0.0;
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let mut r = rng::stream(seed, Domain::Bootstrap, index);
    let per_rep = n.div_ceil(block);
    let starts = n - block + 1;
    let means: Vec<f64> = (0..BOOTSTRAP_REPS)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..per_rep {
                let st = r.random_range(0..starts);
                s += xs[st..st + block].iter().sum::<f64>();
            }
            s / (per_rep * block) as f64
        })
        .collect();
    stats::variance(&means).sqrt()
}

/// Averages [`estimate_k`] over `members` independent seeds.
pub fn estimate_k_ensemble(
    params: &EnvironmentParams,
    t_grid: &[f64],
    s_len: f64,
    members: usize,
) -> Result<KEstimate> {
    if members == 0 {
        return Err(Error::Parameter("ensemble needs at least one member".into()));
    }
    let runs: Vec<KEstimate> = (0..members as u64)
        .into_par_iter()
        .map(|m| {
            let p = EnvironmentParams {
                seed: rng::child_seed(params.seed, m),
                ..params.clone()
            };
            estimate_k(&p, t_grid, s_len)
        })
        .collect::<Result<_>>()?;
    let n = t_grid.len();
    let mut k_values = vec![0.0; n];
    let mut std_errors = vec![0.0; n];
    for i in 0..n {
        let xs: Vec<f64> = runs.iter().map(|r| r.k_values[i]).collect();
        let e = Estimate::from_samples(&xs);
        k_values[i] = e.mean;
        std_errors[i] = if members > 1 { e.stderr } else { runs[0].std_errors[i] };
    }
    Ok(KEstimate {
        t_grid: t_grid.to_vec(),
        k_values,
        std_errors,
        sample_length: s_len,
        ensemble_size: members,
        ratio_bound: Some(params.l_max / params.l_min),
    })
}

/// `E n` and the joint wing moment `E[W·C]` with their standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WingMoments {
    /// Mean number of wings per unit length.
    pub e_n: Estimate,
    /// Per-wing mean of `sign(r)∫_q^{q+r} l_wing e^{2β(t−q)}dt · ∫_q^{q+T} e^{−2β(y−q)}/l0 dy`.
    pub wing_term: Estimate,
    pub n_wings: usize,
    pub t_max: f64,
    /// Bound on the truncated part of the downstream integral.
    pub truncation_bound: f64,
}

/// Joint Monte Carlo estimate over the wings attached in `[0, n_blocks·b)`
/// of one long sample.
pub fn wing_moment_estimates(
    params: &EnvironmentParams,
    beta: f64,
    n_blocks: usize,
) -> Result<WingMoments> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Parameter(format!("beta must be positive (got {beta})")));
    }
    if n_blocks == 0 {
        return Err(Error::InsufficientSample("need at least one block".into()));
    }
    params.validate()?;
    let b = params.block_length;
    let len = n_blocks as f64 * b;
    let t_max = ((1.0 / (1e-10 * params.l_min)).ln() / (2.0 * beta)).max(0.0);
    let truncation_bound = (-2.0 * beta * t_max).exp() / (2.0 * beta * params.l_min);
    let spec = sample_environment(params, (0.0, len + t_max + 2.0 * b))?;
    let wings: Vec<&WingSpec> = spec.wings.iter().filter(|w| w.q < len).collect();
    let values: Vec<f64> = wings
        .par_iter()
        .map(|w| wing_weight(w, beta) * downstream_weight(&MainWidth(&spec), w.q, w.q, w.q + t_max, beta))
        .collect();

    // wing counts per unit-b cell of the sample
    let mut counts = vec![0.0; n_blocks];
    for w in &wings {
        counts[((w.q / b) as usize).min(n_blocks - 1)] += 1.0;
    }
    let c = Estimate::from_samples(&counts);
    let e_n = Estimate::exact(c.mean / b, c.stderr / b);
    let wing_term = if values.is_empty() {
        Estimate::exact(0.0, 0.0)
    } else if values.len() >= 40 {
        Estimate::exact(stats::mean(&values), stats::batch_means_stderr(&values, 20))
    } else {
        Estimate::from_samples(&values)
    };
    Ok(WingMoments {
        e_n,
        wing_term,
        n_wings: values.len(),
        t_max,
        truncation_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bernoulli(seed: u64) -> EnvironmentParams {
        EnvironmentParams {
            l_min: 0.5,
            l_max: 4.0,
            width_law: Law::Discrete {
                values: vec![1.0, 2.0],
                weights: vec![],
            },
            ..EnvironmentParams::constant(1.0, seed)
        }
    }

    fn deterministic_wings(seed: u64) -> EnvironmentParams {
        EnvironmentParams {
            wing_prob: 1.0,
            wing_law: Some(WingLaw {
                length: Law::PointMass { value: 1.0 },
                sign: SignLaw::Positive,
                side: SideLaw::Above,
                level: Law::PointMass { value: 1.0 },
                tip_radius: Some(0.0),
            }),
            ..EnvironmentParams::constant(1.0, seed)
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = bernoulli(11);
        let a = sample_environment(&p, (0.0, 50.0)).unwrap().to_json().unwrap();
        let b = sample_environment(&p, (0.0, 50.0)).unwrap().to_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn point_mass_gives_constant_wingless_channel() {
        let p = EnvironmentParams::constant(1.0, 3);
        let spec = sample_environment(&p, (0.0, 20.0)).unwrap();
        assert!(spec.wings.is_empty());
        assert!(spec.jump_points().is_empty());
        for i in 0..200 {
            assert_eq!(spec.l0(i as f64 * 0.1), 1.0);
        }
    }

    #[test]
    fn one_wing_per_block_over_length_100() {
        let spec = sample_environment(&deterministic_wings(5), (0.0, 100.0)).unwrap();
        assert_eq!(spec.wings.len(), 100);
    }

    #[test]
    fn inconsistent_bounds_are_rejected() {
        let mut p = bernoulli(1);
        p.l_min = 4.0;
        assert!(matches!(sample_environment(&p, (0.0, 1.0)), Err(Error::Parameter(_))));
        let mut p = deterministic_wings(1);
        p.block_length = 0.5;
        assert!(matches!(sample_environment(&p, (0.0, 1.0)), Err(Error::Parameter(_))));
    }

    #[test]
    fn widths_stay_in_bounds_with_cubic_smoothing() {
        let p = EnvironmentParams {
            smoothing: Smoothing::MonotoneCubic,
            width_law: Law::Uniform { lo: 0.5, hi: 4.0 },
            ..bernoulli(9)
        };
        let spec = sample_environment(&p, (-5.0, 30.0)).unwrap();
        let report = spec.validate_assumptions();
        assert!(report.all_passed(), "{:?}", report.failures());
    }

    #[test]
    fn k_of_constant_width_is_one() {
        let est = estimate_k(&EnvironmentParams::constant(1.0, 2), &[0.0, 0.5, 3.0], 50.0).unwrap();
        assert_eq!(est.k_values, vec![1.0; 3]);
        assert_eq!(est.std_errors, vec![0.0; 3]);
    }

    #[test]
    fn k_at_zero_lag_is_exactly_one() {
        let est = estimate_k(&bernoulli(4), &[0.0], 100.0).unwrap();
        assert_eq!(est.k_values[0], 1.0);
    }

    #[test]
    fn k_needs_long_sample() {
        assert!(matches!(
            estimate_k(&bernoulli(4), &[0.0, 10.0], 10.0),
            Err(Error::InsufficientSample(_))
        ));
    }

    #[test]
    fn k_csv_round_trip() {
        let est = estimate_k(&bernoulli(8), &[0.0, 0.5, 1.0], 200.0).unwrap();
        let mut buf = Vec::new();
        est.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,K,stderr"));
        let back = KEstimate::read_csv(&buf[..]).unwrap();
        assert_eq!(back.k_values, est.k_values);
    }

    #[test]
    fn no_wings_gives_zero_moments() {
        let m = wing_moment_estimates(&bernoulli(1), 1.0, 100).unwrap();
        assert_eq!(m.e_n.mean, 0.0);
        assert_eq!(m.wing_term.mean, 0.0);
    }

    #[test]
    fn deterministic_wing_moments() {
        let m = wing_moment_estimates(&deterministic_wings(1), 1.0, 50).unwrap();
        let e2 = std::f64::consts::E.powi(2);
        assert_eq!(m.e_n.mean, 1.0);
        assert_eq!(m.e_n.stderr, 0.0);
        assert!((m.wing_term.mean - (e2 - 1.0) / 4.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_signs_give_positive_wing_term() {
        let mut p = deterministic_wings(3);
        p.wing_law = Some(WingLaw {
            length: Law::Uniform { lo: 0.1, hi: 0.5 },
            sign: SignLaw::Symmetric,
            side: SideLaw::Either,
            level: Law::Uniform { lo: 0.2, hi: 1.0 },
            tip_radius: None,
        });
        let m = wing_moment_estimates(&p, 1.0, 200).unwrap();
        assert!(m.wing_term.mean > 0.0);
    }

    #[test]
    fn nonpositive_beta_is_rejected() {
        assert!(matches!(
            wing_moment_estimates(&bernoulli(1), 0.0, 10),
            Err(Error::Parameter(_))
        ));
    }
}
