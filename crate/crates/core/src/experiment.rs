//! Reproducible experiment runner: a JSON config with echoed defaults, one
//! pipeline per experiment kind, and CSV/JSON emission.
//!
//! Every run writes `manifest.json` (tool version and the fully resolved
//! config), `results.csv` and `summary.json` into its output directory. A
//! numeric fault additionally leaves `diagnostics.json` behind.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytic::{
    exit_time_quadrature, inverse_speed, solve_exit_bvp, wing_time_formula, BvpOptions, MainWidth,
    Sources,
};
use crate::environment::{
    estimate_k, estimate_k_ensemble, k_truncation, lag_grid, sample_environment,
    wing_moment_estimates, EnvironmentParams, Law,
};
use crate::error::{Error, Result};
use crate::geometry::{Attachment, Bounds, ChannelSpec, WingSpec};
use crate::graph::MetricGraph;
use crate::profile::Profile;
use crate::rng::{self, Domain};
use crate::sde::{self, ReflectionDirection, SdeParams, VelocityField};
use crate::stats::{self, Estimate};
use crate::walk::{self, SimParams};

/// Environment variable that overrides the config seed (the `--seed` flag
/// takes precedence over it).
pub const SEED_ENV: &str = "CHANMOTOR_SEED";

pub const TOOL_NAME: &str = "chanmotor";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ValidateGeometry,
    #[serde(rename = "estimate-K")]
    EstimateK,
    GraphMc,
    SdeMc,
    EpsSweep,
    Speed,
    OracleCompare,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::ValidateGeometry,
        ExperimentKind::EstimateK,
        ExperimentKind::GraphMc,
        ExperimentKind::SdeMc,
        ExperimentKind::EpsSweep,
        ExperimentKind::Speed,
        ExperimentKind::OracleCompare,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::ValidateGeometry => "validate-geometry",
            ExperimentKind::EstimateK => "estimate-K",
            ExperimentKind::GraphMc => "graph-mc",
            ExperimentKind::SdeMc => "sde-mc",
            ExperimentKind::EpsSweep => "eps-sweep",
            ExperimentKind::Speed => "speed",
            ExperimentKind::OracleCompare => "oracle-compare",
        }
    }

    pub fn from_name(s: &str) -> Result<ExperimentKind> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind '{s}'")))
    }
}

/// Where the channel of a run comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSource {
    /// A JSON-serialized [`ChannelSpec`].
    File { path: PathBuf },
    Inline { spec: ChannelSpec },
    Uniform {
        width: f64,
        #[serde(default)]
        x_range: Option<(f64, f64)>,
    },
    /// Flat-bottomed main channel with flush wings `[q, r, level, tip_radius]`.
    FlushAbove {
        main_width: f64,
        wings: Vec<[f64; 4]>,
        bounds: Bounds,
        #[serde(default)]
        x_range: Option<(f64, f64)>,
    },
    /// One sample of the configured environment.
    Sampled {
        #[serde(default)]
        x_range: Option<(f64, f64)>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    pub dt: f64,
    pub h_vertex: Option<f64>,
    pub drift_clamp: Option<f64>,
    pub n_paths: usize,
    pub max_time: Option<f64>,
    pub record_every: Option<usize>,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            dt: 1e-3,
            h_vertex: None,
            drift_clamp: None,
            n_paths: 1000,
            max_time: None,
            record_every: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdeConfig {
    /// `sde-mc` uses the first entry.
    pub epsilons: Vec<f64>,
    /// `dt = dt_factor · ε²`; the wall bias of the projected step scales
    /// like `√dt_factor`, about 2% of the exit time at the default.
    pub dt_factor: f64,
    pub n_paths: usize,
    /// Velocity modulation across the section; 0 is a constant field.
    pub kappa: f64,
    pub direction: ReflectionDirection,
    pub corner_rounding: Option<f64>,
    pub max_time: Option<f64>,
    pub record_every: Option<usize>,
}

impl Default for SdeConfig {
    fn default() -> Self {
        SdeConfig {
            epsilons: vec![0.4, 0.2, 0.1],
            dt_factor: 1.0 / 1600.0,
            n_paths: 1000,
            kappa: 0.0,
            direction: ReflectionDirection::CoNormal,
            corner_rounding: None,
            max_time: None,
            record_every: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KConfig {
    /// Largest lag; `None` picks the `1e−6` truncation point for `β`.
    pub t_max: Option<f64>,
    pub lag_step: f64,
    pub sample_length: f64,
    pub ensemble: usize,
}

impl Default for KConfig {
    fn default() -> Self {
        KConfig {
            t_max: None,
            lag_step: 0.05,
            sample_length: 1e4,
            ensemble: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongRun {
    pub a: f64,
    pub n_paths: usize,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub n_shapes: usize,
    pub h: f64,
    /// Sum of the sine amplitudes around width 1.
    pub amplitude: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n_shapes: 20,
            h: 1e-3,
            amplitude: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub channel: Option<ChannelSource>,
    #[serde(default)]
    pub environment: Option<EnvironmentParams>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_a")]
    pub a: f64,
    /// `(x, z)`; the mid-height of the main channel at `x = 0` by default.
    #[serde(default)]
    pub start: Option<(f64, f64)>,
    #[serde(default)]
    pub walk: WalkConfig,
    #[serde(default)]
    pub sde: SdeConfig,
    #[serde(default)]
    pub k: KConfig,
    /// Blocks used for the wing moments of the speed pipeline.
    #[serde(default = "default_wing_blocks")]
    pub wing_blocks: usize,
    #[serde(default)]
    pub long_run: Option<LongRun>,
    #[serde(default)]
    pub oracle: OracleConfig,
}

fn default_seed() -> u64 {
    1
}

fn default_beta() -> f64 {
    1.0
}

fn default_a() -> f64 {
    5.0
}

fn default_wing_blocks() -> usize {
    10_000
}

/// Widths `{1, 2}` with equal probability on unit blocks, no wings.
pub fn bernoulli_environment(seed: u64) -> EnvironmentParams {
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

/// Left window end with `e^{2βx} < 1e−12`.
pub fn left_end(beta: f64) -> f64 {
    -((1e12f64).ln() / (2.0 * beta)).ceil() - 1.0
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            kind,
            seed: default_seed(),
            out: None,
            channel: None,
            environment: None,
            beta: default_beta(),
            a: default_a(),
            start: None,
            walk: WalkConfig::default(),
            sde: SdeConfig::default(),
            k: KConfig::default(),
            wing_blocks: default_wing_blocks(),
            long_run: None,
            oracle: OracleConfig::default(),
        }
    }

    pub fn from_json(s: &str) -> Result<ExperimentConfig> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let s = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::from_json(&s)
    }

    /// Applies the seed override from [`SEED_ENV`], if set.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}='{v}' is not an unsigned integer")))?;
        }
        Ok(())
    }

    /// Fills every defaulted choice so the manifest records it.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = self.clone();
        if !(c.beta > 0.0 && c.beta.is_finite()) {
            return Err(Error::Config(format!("beta = {} must be positive", c.beta)));
        }
        if !(c.a > 0.0 && c.a.is_finite()) {
            return Err(Error::Config(format!("a = {} must be positive", c.a)));
        }
        if c.out.is_none() {
            c.out = Some(PathBuf::from(format!("runs/{}-seed{}", c.kind.name(), c.seed)));
        }
        let needs_env = matches!(c.kind, ExperimentKind::EstimateK | ExperimentKind::Speed)
            || matches!(c.channel, Some(ChannelSource::Sampled { .. }));
        if needs_env {
            let mut env = c.environment.clone().unwrap_or_else(|| bernoulli_environment(c.seed));
            env.seed = c.seed;
            env.validate()?;
            c.environment = Some(env);
        }
        if c.k.t_max.is_none() && needs_env {
            let env = c.environment.as_ref().expect("resolved above");
            c.k.t_max = Some(k_truncation(c.beta, env.l_max / env.l_min, 1e-6));
        }
        let x_default = (left_end(c.beta), c.a);
        let needs_channel = matches!(
            c.kind,
            ExperimentKind::ValidateGeometry
                | ExperimentKind::GraphMc
                | ExperimentKind::SdeMc
                | ExperimentKind::EpsSweep
        );
        if needs_channel {
            let ch = c.channel.clone().unwrap_or(ChannelSource::FlushAbove {
                main_width: 1.0,
                wings: vec![[1.0, 1.0, 0.5, 0.1]],
                bounds: Bounds {
                    l_min: 0.5,
                    l_max: 2.0,
                    wing_bound: None,
                    max_wings_per_unit: None,
                },
                x_range: None,
            });
            c.channel = Some(match ch {
                ChannelSource::Uniform { width, x_range } => ChannelSource::Uniform {
                    width,
                    x_range: Some(x_range.unwrap_or(x_default)),
                },
                ChannelSource::FlushAbove { main_width, wings, bounds, x_range } => {
                    ChannelSource::FlushAbove {
                        main_width,
                        wings,
                        bounds,
                        x_range: Some(x_range.unwrap_or(x_default)),
                    }
                }
                ChannelSource::Sampled { x_range } => ChannelSource::Sampled {
                    x_range: Some(x_range.unwrap_or(x_default)),
                },
                other => other,
            });
        }
        if c.sde.epsilons.is_empty() {
            return Err(Error::Config("sde.epsilons must not be empty".into()));
        }
        Ok(c)
    }

    fn channel_spec(&self) -> Result<ChannelSpec> {
        let ch = self
            .channel
            .as_ref()
            .ok_or_else(|| Error::Config("no channel configured".into()))?;
        match ch {
            ChannelSource::File { path } => {
                let s = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                ChannelSpec::from_json(&s)
            }
            ChannelSource::Inline { spec } => Ok(spec.clone()),
            ChannelSource::Uniform { width, x_range } => {
                ChannelSpec::uniform(*width, x_range.expect("resolved"))
            }
            ChannelSource::FlushAbove { main_width, wings, bounds, x_range } => {
                let w: Vec<(f64, f64, f64, f64)> =
                    wings.iter().map(|w| (w[0], w[1], w[2], w[3])).collect();
                ChannelSpec::flush_above(*main_width, &w, *bounds, x_range.expect("resolved"))
            }
            ChannelSource::Sampled { x_range } => {
                let env = self.environment.as_ref().expect("resolved");
                let spec = sample_environment(env, x_range.expect("resolved"))?;
                truncate_free_wings(spec, self.a)
            }
        }
    }

    fn sim_params(&self) -> SimParams {
        SimParams {
            dt: self.walk.dt,
            h_vertex: self.walk.h_vertex,
            beta: self.beta,
            drift_clamp: self.walk.drift_clamp,
            seed: self.seed,
            n_paths: self.walk.n_paths,
            max_time: self.walk.max_time,
            record_every: self.walk.record_every,
        }
    }

    fn sde_params(&self, epsilon: f64) -> SdeParams {
        SdeParams {
            epsilon,
            dt: self.sde.dt_factor * epsilon * epsilon,
            velocity: if self.sde.kappa == 0.0 {
                VelocityField::Constant { beta: self.beta }
            } else {
                VelocityField::Modulated {
                    beta: self.beta,
                    kappa: self.sde.kappa,
                }
            },
            seed: self.seed,
            n_paths: self.sde.n_paths,
            corner_rounding: self.sde.corner_rounding,
            direction: self.sde.direction,
            max_time: self.sde.max_time,
            record_every: self.sde.record_every,
        }
    }

    fn start(&self, spec: &ChannelSpec) -> (f64, f64) {
        self.start.unwrap_or_else(|| {
            let iv = spec.main_interval(0.0);
            (0.0, 0.5 * (iv.lo + iv.hi))
        })
    }
}

/// Drops free wings attached at or beyond `a` and shortens those reaching
/// past it, so no wing spans the exit level.
pub fn truncate_free_wings(mut spec: ChannelSpec, a: f64) -> Result<ChannelSpec> {
    let mut wings = Vec::with_capacity(spec.wings.len());
    for w in spec.wings.drain(..) {
        if w.attachment != Attachment::Free || w.tip() <= a {
            wings.push(w);
        } else if w.q < a {
            let r = a - w.q;
            wings.push(WingSpec {
                r,
                tip_radius: w.tip_radius.min(r / 2.0),
                ..w
            });
        }
    }
    ChannelSpec::new(
        (*spec.h_plus).clone(),
        (*spec.h_minus).clone(),
        wings,
        spec.bounds,
        spec.x_range,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Writes `records` to `dir/stem.csv` or `dir/stem.json`.
pub fn emit_results<T: Serialize>(records: &[T], dir: &Path, stem: &str, format: Format) -> Result<PathBuf> {
    if records.is_empty() {
        return Err(Error::InsufficientSample("no records to emit".into()));
    }
    fs::create_dir_all(dir)?;
    match format {
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Io(e.to_string()))?;
            for r in records {
                w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
            }
            w.flush()?;
            Ok(path)
        }
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            fs::write(&path, serde_json::to_string_pretty(records)?)?;
            Ok(path)
        }
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

/// Process exit status for an error: 2 for usage and input problems, 3 for
/// numeric faults.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Parameter(_)
        | Error::Precondition(_)
        | Error::OutOfRange { .. }
        | Error::Geometry(_)
        | Error::Construction(_)
        | Error::Io(_) => 2,
        Error::InsufficientSample(_)
        | Error::Divergence(_)
        | Error::Singular { .. }
        | Error::StepTooLarge { .. }
        | Error::Fault(_)
        | Error::MissingTailBound(_) => 3,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub summary: Value,
}

#[derive(Serialize)]
struct KRow {
    t: f64,
    #[serde(rename = "K")]
    k: f64,
    stderr: f64,
}

#[derive(Serialize)]
struct PathRow {
    path: usize,
    tau: f64,
    occupation_main: f64,
    occupation_wing: f64,
}

#[derive(Serialize)]
struct SdeRow {
    path: usize,
    sigma: f64,
    push_accum: f64,
}

#[derive(Serialize)]
struct SweepRow {
    epsilon: f64,
    mean_sigma: f64,
    stderr: f64,
    graph_ref: f64,
    graph_ref_stderr: f64,
    analytic_ref: Option<f64>,
    ks: f64,
}

#[derive(Serialize)]
struct OracleRow {
    shape: usize,
    quadrature: f64,
    bvp: f64,
    rel_diff: f64,
}

#[derive(Serialize)]
struct CheckRow {
    name: String,
    assumption: String,
    passed: bool,
    offending_x: Option<f64>,
    detail: String,
}

/// Runs a resolved-or-raw config and writes its artifacts.
pub fn run_config(config: &ExperimentConfig) -> Result<RunOutcome> {
    let cfg = config.resolve()?;
    let out = cfg.out.clone().expect("resolved");
    fs::create_dir_all(&out)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", out.display())))?;
    write_json(
        &out.join("manifest.json"),
        &json!({ "tool": TOOL_NAME, "version": TOOL_VERSION, "config": cfg }),
    )?;
    let result = match cfg.kind {
        ExperimentKind::ValidateGeometry => run_validate(&cfg, &out),
        ExperimentKind::EstimateK => run_estimate_k(&cfg, &out),
        ExperimentKind::GraphMc => run_graph_mc(&cfg, &out),
        ExperimentKind::SdeMc => run_sde_mc(&cfg, &out),
        ExperimentKind::EpsSweep => run_eps_sweep(&cfg, &out),
        ExperimentKind::Speed => run_speed(&cfg, &out),
        ExperimentKind::OracleCompare => run_oracle(&cfg, &out),
    };
    match result {
        Ok(summary) => {
            write_json(&out.join("summary.json"), &summary)?;
            Ok(RunOutcome { out_dir: out, summary })
        }
        Err(e) => {
            if exit_code(&e) == 3 {
                let _ = write_json(
                    &out.join("diagnostics.json"),
                    &json!({ "kind": cfg.kind, "seed": cfg.seed, "error": e.to_string() }),
                );
            }
            Err(e)
        }
    }
}

fn run_validate(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    let spec = cfg.channel_spec()?;
    let report = spec.validate_assumptions();
    let rows: Vec<CheckRow> = report
        .checks
        .iter()
        .map(|c| CheckRow {
            name: c.name.clone(),
            assumption: c.assumption.clone(),
            passed: c.passed,
            offending_x: c.offending_x,
            detail: c.detail.clone(),
        })
        .collect();
    emit_results(&rows, out, "results", Format::Csv)?;
    let graph = MetricGraph::build(&spec).ok();
    Ok(json!({
        "kind": cfg.kind,
        "seed": cfg.seed,
        "all_passed": report.all_passed(),
        "failures": report.failures().iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
        "n_edges": graph.as_ref().map(|g| g.edges().len()),
        "n_vertices": graph.as_ref().map(|g| g.vertices().len()),
    }))
}

fn k_estimate(cfg: &ExperimentConfig) -> Result<crate::environment::KEstimate> {
    let env = cfg.environment.as_ref().expect("resolved");
    let grid = lag_grid(cfg.k.t_max.expect("resolved"), cfg.k.lag_step);
    if cfg.k.ensemble > 1 {
        estimate_k_ensemble(env, &grid, cfg.k.sample_length, cfg.k.ensemble)
    } else {
        estimate_k(env, &grid, cfg.k.sample_length)
    }
}

fn k_rows(k: &crate::environment::KEstimate) -> Vec<KRow> {
    k.t_grid
        .iter()
        .zip(&k.k_values)
        .zip(&k.std_errors)
        .map(|((&t, &k), &stderr)| KRow { t, k, stderr })
        .collect()
}

fn run_estimate_k(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    let k = k_estimate(cfg)?;
    emit_results(&k_rows(&k), out, "results", Format::Csv)?;
    let zero = Estimate::exact(0.0, 0.0);
    let first = inverse_speed(&k, &zero, &zero, cfg.beta)?;
    Ok(json!({
        "kind": cfg.kind,
        "seed": cfg.seed,
        "sample_length": k.sample_length,
        "ensemble_size": k.ensemble_size,
        "ratio_bound": k.ratio_bound,
        "t_max": cfg.k.t_max,
        "first_term": first.first_term,
        "first_term_stderr": first.first_term_stderr,
        "tail_bound": first.tail_bound,
    }))
}

fn run_graph_mc(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    let spec = cfg.channel_spec()?;
    let graph = MetricGraph::build(&spec)?;
    let start = graph.locate(cfg.start(&spec))?;
    let params = cfg.sim_params();
    let samples = walk::simulate_paths(&graph, start, cfg.a, &params)?;
    let rows: Vec<PathRow> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| PathRow {
            path: i,
            tau: s.tau,
            occupation_main: s.occupation_main,
            occupation_wing: s.occupation_wing,
        })
        .collect();
    emit_results(&rows, out, "results", Format::Csv)?;
    if params.record_every.is_some() {
        walk::write_paths_csv(&samples, fs::File::create(out.join("paths.csv"))?)?;
    }
    let occ = walk::occupation_estimate(&samples)?;
    Ok(json!({
        "kind": cfg.kind,
        "seed": cfg.seed,
        "a": cfg.a,
        "beta": cfg.beta,
        "dt": params.dt,
        "h_vertex": params.h(),
        "drift_clamp": params.clamp(),
        "n_paths": params.n_paths,
        "tau": occ.tau,
        "occupation_main": occ.main,
        "occupation_wing": occ.wing,
        "wing_fraction": occ.wing_fraction,
    }))
}

fn run_sde_mc(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    let spec = cfg.channel_spec()?;
    let params = cfg.sde_params(cfg.sde.epsilons[0]);
    let paths = sde::simulate_paths_2d(&spec, cfg.start(&spec), cfg.a, &params)?;
    let rows: Vec<SdeRow> = paths
        .iter()
        .enumerate()
        .map(|(i, p)| SdeRow {
            path: i,
            sigma: p.sigma,
            push_accum: p.push_accum,
        })
        .collect();
    emit_results(&rows, out, "results", Format::Csv)?;
    if params.record_every.is_some() {
        sde::write_trajectories_csv(&paths, fs::File::create(out.join("paths.csv"))?)?;
    }
    let sig: Vec<f64> = paths.iter().map(|p| p.sigma).collect();
    let push: Vec<f64> = paths.iter().map(|p| p.push_accum).collect();
    Ok(json!({
        "kind": cfg.kind,
        "seed": cfg.seed,
        "epsilon": params.epsilon,
        "dt": params.dt,
        "a": cfg.a,
        "n_paths": params.n_paths,
        "sigma": Estimate::from_samples(&sig),
        "push_accum": Estimate::from_samples(&push),
    }))
}

/// `E τ` from `x = 0` by quadrature: main-channel time plus the time in
/// every wing attached below `a`.
pub fn analytic_exit_time(spec: &ChannelSpec, beta: f64, a: f64) -> Result<f64> {
    let l0 = MainWidth(spec);
    let mut total = exit_time_quadrature(&l0, beta, a, None)?.value;
    for w in spec.wings.iter().filter(|w| w.q < a) {
        total += wing_time_formula(w, &l0, beta, a)?.m;
    }
    Ok(total)
}

fn run_eps_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    let spec = cfg.channel_spec()?;
    let start = cfg.start(&spec);
    let graph = MetricGraph::build(&spec)?;
    let taus: Vec<f64> = walk::simulate_paths(&graph, graph.locate(start)?, cfg.a, &cfg.sim_params())?
        .iter()
        .map(|s| s.tau)
        .collect();
    let graph_ref = Estimate::from_samples(&taus);
    let analytic_ref = if start.0 == 0.0 {
        analytic_exit_time(&spec, cfg.beta, cfg.a).ok()
    } else {
        None
    };
    let mut rows = Vec::new();
    for &eps in &cfg.sde.epsilons {
        let sig: Vec<f64> = sde::simulate_paths_2d(&spec, start, cfg.a, &cfg.sde_params(eps))?
            .iter()
            .map(|p| p.sigma)
            .collect();
        let e = Estimate::from_samples(&sig);
        rows.push(SweepRow {
            epsilon: eps,
            mean_sigma: e.mean,
            stderr: e.stderr,
            graph_ref: graph_ref.mean,
            graph_ref_stderr: graph_ref.stderr,
            analytic_ref,
            ks: stats::ks_statistic(&sig, &taus),
        });
    }
    emit_results(&rows, out, "results", Format::Csv)?;
    let reference = analytic_ref.unwrap_or(graph_ref.mean);
    let errors: Vec<f64> = rows.iter().map(|r| (r.mean_sigma - reference).abs()).collect();
    Ok(json!({
        "kind": cfg.kind,
        "seed": cfg.seed,
        "a": cfg.a,
        "epsilons": cfg.sde.epsilons,
        "graph_ref": graph_ref,
        "analytic_ref": analytic_ref,
        "abs_errors": errors,
        "monotone": errors.windows(2).all(|w| w[1] < w[0]),
    }))
}

fn run_speed(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    let env = cfg.environment.as_ref().expect("resolved");
    let k = k_estimate(cfg)?;
    emit_results(&k_rows(&k), out, "results", Format::Csv)?;
    let moments = wing_moment_estimates(env, cfg.beta, cfg.wing_blocks)?;
    let speed = inverse_speed(&k, &moments.e_n, &moments.wing_term, cfg.beta)?;
    let long = match &cfg.long_run {
        None => None,
        Some(lr) => {
            let spec = sample_environment(env, (left_end(cfg.beta), lr.a))?;
            let spec = truncate_free_wings(spec, lr.a)?;
            let graph = MetricGraph::build(&spec)?;
            let start = graph.locate((0.0, 0.5 * (spec.main_interval(0.0).lo + spec.main_interval(0.0).hi)))?;
            let params = SimParams {
                n_paths: lr.n_paths,
                ..SimParams::new(lr.dt, cfg.beta, cfg.seed, lr.n_paths)
            };
            let taus: Vec<f64> = walk::simulate_paths(&graph, start, lr.a, &params)?
                .iter()
                .map(|s| s.tau / lr.a)
                .collect();
            Some(Estimate::from_samples(&taus))
        }
    };
    Ok(json!({
        "kind": cfg.kind,
        "seed": cfg.seed,
        "beta": cfg.beta,
        "inverse_speed": speed.inverse_speed,
        "stderr": speed.stderr,
        "speed": speed.speed,
        "first_term": speed.first_term,
        "first_term_stderr": speed.first_term_stderr,
        "wing_contribution": speed.wing_contribution,
        "wing_stderr": speed.wing_stderr,
        "tail_bound": speed.tail_bound,
        "k_t_max": cfg.k.t_max,
        "wing_moments": moments,
        "long_run_tau_over_a": long,
    }))
}

/// Smooth random width `1 + Σ c_j sin(ω_j x + φ_j)` with `Σ|c_j| = amplitude`.
pub fn random_shape(seed: u64, index: u64, amplitude: f64, x_range: (f64, f64)) -> Result<Profile> {
    let mut rng = rng::stream(seed, Domain::Shape, index);
    let mut terms: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0),
                rng.random_range(0.3..3.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let norm: f64 = terms.iter().map(|t| t.0.abs()).sum();
    for t in &mut terms {
        t.0 *= amplitude / norm;
    }
    Profile::from_fn(x_range.0, x_range.1, 1.0 / 64.0, move |x| {
        1.0 + terms.iter().map(|(c, w, p)| c * (w * x + p).sin()).sum::<f64>()
    })
}

fn run_oracle(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    if !(cfg.oracle.amplitude >= 0.0 && cfg.oracle.amplitude < 1.0) {
        return Err(Error::Config("oracle.amplitude must lie in [0, 1)".into()));
    }
    let range = (left_end(cfg.beta), cfg.a);
    let bounds = Bounds {
        l_min: 1.0 - cfg.oracle.amplitude,
        l_max: 1.0 + cfg.oracle.amplitude,
        wing_bound: None,
        max_wings_per_unit: None,
    };
    let mut rows = Vec::with_capacity(cfg.oracle.n_shapes);
    for i in 0..cfg.oracle.n_shapes {
        let l = random_shape(cfg.seed, i as u64, cfg.oracle.amplitude, range)?;
        let spec = ChannelSpec::from_width(&l, vec![], bounds, range)?;
        let quad = exit_time_quadrature(&MainWidth(&spec), cfg.beta, cfg.a, None)?.value;
        let graph = MetricGraph::build(&spec)?;
        let bvp = solve_exit_bvp(
            &graph,
            cfg.beta,
            cfg.a,
            &Sources::All,
            BvpOptions {
                h: cfg.oracle.h,
                ..Default::default()
            },
        )?
        .at_main(&graph, 0.0)?;
        rows.push(OracleRow {
            shape: i,
            quadrature: quad,
            bvp,
            rel_diff: (quad - bvp).abs() / quad.abs(),
        });
    }
    emit_results(&rows, out, "results", Format::Csv)?;
    let max_rel = rows.iter().map(|r| r.rel_diff).fold(0.0, f64::max);
    Ok(json!({
        "kind": cfg.kind,
        "seed": cfg.seed,
        "n_shapes": cfg.oracle.n_shapes,
        "h": cfg.oracle.h,
        "max_rel_diff": max_rel,
    }))
}
