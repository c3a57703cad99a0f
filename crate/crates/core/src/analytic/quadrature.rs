use serde::{Deserialize, Serialize};

use super::WidthFunction;
use crate::environment::KEstimate;
use crate::error::{Error, Result};
use crate::geometry::WingSpec;
use crate::quad::{integrate, DEFAULT_TOL};
use crate::stats::Estimate;

/// Target for truncated tails of semi-infinite integrals.
const TAIL_TOL: f64 = 1e-12;

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence(format!(
            "beta = {beta}: the exit-time integrals need beta > 0"
        )))
    }
}

/// Scale and speed functions of the edge operator `½ l⁻¹ (l f')' + β f'`
/// normalized at 0, plus the driftless pair.
pub struct ScaleSpeed<'a> {
    pub l: &'a dyn WidthFunction,
    pub beta: f64,
}

impl ScaleSpeed<'_> {
    fn int(&self, f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let (lo, hi) = if x < 0.0 { (x, 0.0) } else { (0.0, x) };
        integrate(f, 0.0, x, &self.l.breakpoints(lo, hi), DEFAULT_TOL)
    }

    /// `u(x) = ∫₀ˣ e^{−2βy}/l(y) dy`.
    pub fn u(&self, x: f64) -> f64 {
        self.int(|y| (-2.0 * self.beta * y).exp() / self.l.value(y), x)
    }

    /// `v(x) = 2∫₀ˣ l(y) e^{2βy} dy`.
    pub fn v(&self, x: f64) -> f64 {
        self.int(|y| 2.0 * self.l.value(y) * (2.0 * self.beta * y).exp(), x)
    }

    pub fn du(&self, x: f64) -> f64 {
        (-2.0 * self.beta * x).exp() / self.l.value(x)
    }

    pub fn dv(&self, x: f64) -> f64 {
        2.0 * self.l.value(x) * (2.0 * self.beta * x).exp()
    }

    /// Driftless scale `∫₀ˣ dy/l(y)`.
    pub fn q(&self, x: f64) -> f64 {
        self.int(|y| 1.0 / self.l.value(y), x)
    }

    /// Driftless speed `2∫₀ˣ l(y) dy`.
    pub fn r(&self, x: f64) -> f64 {
        self.int(|y| 2.0 * self.l.value(y), x)
    }
}

/// Mean exit time from `(−∞, a]` started at 0 together with its pieces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeValue {
    pub value: f64,
    /// `2∫₀^a (1/l(y)) ∫₀^y l(t) e^{−2β(y−t)} dt dy`.
    pub main_term: f64,
    /// `2∫_{−T}^0 l e^{2βt} dt · ∫₀^a e^{−2βy}/l dy`.
    pub left_term: f64,
    pub left_tail: f64,
    /// Bound on the part of `left_term` cut off below `−left_tail`.
    pub tail_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Evaluates the mean exit time of the main-channel diffusion with width
/// `l`, drift `β` and start 0, with jumps of `l` as panel boundaries.
/// `left_tail = None` picks the truncation so the tail bound is below 1e−12.
pub fn exit_time_quadrature(
    l: &dyn WidthFunction,
    beta: f64,
    a: f64,
    left_tail: Option<f64>,
) -> Result<ExitTimeValue> {
    check_beta(beta)?;
    if !(a > 0.0) {
        return Ok(ExitTimeValue {
            value: 0.0,
            main_term: 0.0,
            left_term: 0.0,
            left_tail: 0.0,
            tail_bound: 0.0,
            note: Some(format!("a = {a} <= 0: the start is already past the exit level")),
        });
    }
    let c = 2.0 * beta;
    let main_term = 2.0 * double_integral(l, beta, a);
    let c_a = integrate(
        |y| (-c * y).exp() / l.value(y),
        0.0,
        a,
        &l.breakpoints(0.0, a),
        DEFAULT_TOL,
    );
    let (_, l_max) = l.range();
    let t = match left_tail {
        Some(t) => t.max(0.0),
        None => ((2.0 * l_max * c_a / (c * TAIL_TOL)).ln() / c).max(0.0),
    };
    let left = integrate(
        |s| l.value(s) * (c * s).exp(),
        -t,
        0.0,
        &l.breakpoints(-t, 0.0),
        DEFAULT_TOL,
    );
    let left_term = 2.0 * left * c_a;
    let tail_bound = 2.0 * c_a * l_max * (-c * t).exp() / c;
    Ok(ExitTimeValue {
        value: main_term + left_term,
        main_term,
        left_term,
        left_tail: t,
        tail_bound,
        note: None,
    })
}

/// `∫₀^a (1/l(y)) G(y) dy` with `G(y) = ∫₀^y l(t) e^{−2β(y−t)} dt`, using a
/// node table of `G` built by the stable recursion
/// `G(y') = e^{−2β(y'−y)} G(y) + ∫_y^{y'} l(t) e^{−2β(y'−t)} dt`.
fn double_integral(l: &dyn WidthFunction, beta: f64, a: f64) -> f64 {
    let c = 2.0 * beta;
    let step = (0.25 / beta).min(a / 64.0);
    let n = (a / step).ceil() as usize;
    let mut nodes: Vec<f64> = (0..=n).map(|i| a * i as f64 / n as f64).collect();
    nodes.extend(l.breakpoints(0.0, a));
    nodes.sort_by(|x, y| x.total_cmp(y));
    nodes.dedup();
    let partial = |from: f64, to: f64| {
        integrate(|t| l.value(t) * (-c * (to - t)).exp(), from, to, &[], 1e-14)
    };
    let mut g = vec![0.0; nodes.len()];
    for i in 1..nodes.len() {
        g[i] = (-c * (nodes[i] - nodes[i - 1])).exp() * g[i - 1] + partial(nodes[i - 1], nodes[i]);
    }
    let big_g = |y: f64| {
        let i = nodes.partition_point(|&v| v <= y).saturating_sub(1);
        (-c * (y - nodes[i])).exp() * g[i] + partial(nodes[i], y)
    };
    integrate(|y| big_g(y) / l.value(y), 0.0, a, &nodes, DEFAULT_TOL)
}

/// `W(q, r) = sign(r) ∫_q^{q+r} l_wing(t) e^{2β(t−q)} dt`.
pub fn wing_weight(w: &WingSpec, beta: f64) -> f64 {
    w.direction()
        * integrate(
            |t| w.width(t) * (2.0 * beta * (t - w.q)).exp(),
            w.q,
            w.tip(),
            &w.breakpoints(),
            1e-12,
        )
}

/// `∫_from^to e^{−2β(y−q)} / l0(y) dy`.
pub fn downstream_weight(l0: &dyn WidthFunction, q: f64, from: f64, to: f64, beta: f64) -> f64 {
    integrate(
        |y| (-2.0 * beta * (y - q)).exp() / l0.value(y),
        from,
        to,
        &l0.breakpoints(from.min(to), from.max(to)),
        1e-12,
    )
}

/// The wing factors and the expected time `M(q, r, a)` spent in one wing
/// before the exit from `(−∞, a]`, start at 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WingTimeTerms {
    pub w: f64,
    /// `C(q, a) = ∫_q^a e^{−2β(y−q)}/l0(y) dy`.
    pub c: f64,
    pub m: f64,
    /// Bound on the truncated part of `m` (nonzero only for `a = ∞`).
    pub tail_bound: f64,
}

/// `M(q, r, a)`:
/// `2 W(q,r) C(q,a)` for `q ≥ 0` and `2 W(q,r) ∫₀^a e^{−2β(y−q)}/l0 dy`
/// for `q < 0`. `a = ∞` is allowed.
pub fn wing_time_formula(
    wing: &WingSpec,
    l0: &dyn WidthFunction,
    beta: f64,
    a: f64,
) -> Result<WingTimeTerms> {
    check_beta(beta)?;
    let q = wing.q;
    if q > a {
        return Err(Error::Precondition(format!(
            "wing at q = {q} lies beyond the exit level a = {a}"
        )));
    }
    if wing.r == 0.0 {
        return Ok(WingTimeTerms {
            w: 0.0,
            c: 0.0,
            m: 0.0,
            tail_bound: 0.0,
        });
    }
    let (l_min, _) = l0.range();
    let c2 = 2.0 * beta;
    let (end, cut) = if a.is_finite() {
        (a, 0.0)
    } else {
        let t = ((1.0 / (c2 * l_min * TAIL_TOL)).ln() / c2).max(0.0);
        (q.max(0.0) + t, (-c2 * t).exp() / (c2 * l_min))
    };
    let w = wing_weight(wing, beta);
    let c = downstream_weight(l0, q, q, end, beta);
    let (m, tail_bound) = if q >= 0.0 {
        (2.0 * w * c, 2.0 * w * cut)
    } else {
        let discount = (c2 * q).exp();
        (
            2.0 * w * discount * downstream_weight(l0, 0.0, 0.0, end, beta),
            2.0 * w * discount * cut,
        )
    };
    Ok(WingTimeTerms {
        w,
        c,
        m,
        tail_bound,
    })
}

/// Inverse transport speed `2∫₀^∞ K(t) e^{−2βt} dt + 2·E n·E[W·C]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub first_term: f64,
    pub first_term_stderr: f64,
    pub wing_contribution: f64,
    pub wing_stderr: f64,
    pub inverse_speed: f64,
    pub stderr: f64,
    /// Bound on the error of the constant-`K` tail beyond the last lag.
    pub tail_bound: f64,
    pub speed: f64,
}

/// `∫_{t0}^{t1} (k0 + s (t − t0)) e^{−ct} dt` for the linear interpolant.
fn linear_exp_integral(t0: f64, t1: f64, k0: f64, k1: f64, c: f64) -> f64 {
    let d = t1 - t0;
    if d <= 0.0 {
        return 0.0;
    }
    let x = c * d;
    let e0 = (-c * t0).exp();
    // ∫ e^{−ct} and ∫ (t−t0) e^{−ct} over the interval, divided by e^{−c t0}
    let i0 = -(-x).exp_m1() / c;
    let g = if x < 1e-4 {
        x * x / 2.0 - x * x * x / 3.0 + x * x * x * x / 8.0
    } else {
        1.0 - (-x).exp() * (1.0 + x)
    };
    let i1 = g / (c * c);
    e0 * (k0 * i0 + (k1 - k0) / d * i1)
}

/// Combines a `K` estimate with the wing moments. `K` is interpolated
/// linearly and integrated exactly against `e^{−2βt}`; beyond the last lag it
/// is held at its last value, with the error bounded through the recorded
/// ratio bound.
pub fn inverse_speed(
    k: &KEstimate,
    e_n: &Estimate,
    wing_term: &Estimate,
    beta: f64,
) -> Result<SpeedEstimate> {
    check_beta(beta)?;
    let ratio = k.ratio_bound.ok_or_else(|| {
        Error::MissingTailBound("the K estimate carries no ratio bound for its tail".into())
    })?;
    let n = k.t_grid.len();
    if n == 0 || k.t_grid[0] != 0.0 || k.k_values.len() != n || k.std_errors.len() != n {
        return Err(Error::Precondition(
            "K estimate must start at t = 0 with matching value and error columns".into(),
        ));
    }
    if k.t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("K lags must increase".into()));
    }
    let c = 2.0 * beta;
    let mut first = 0.0;
    let mut first_se = 0.0;
    for i in 1..n {
        let (t0, t1) = (k.t_grid[i - 1], k.t_grid[i]);
        first += linear_exp_integral(t0, t1, k.k_values[i - 1], k.k_values[i], c);
        first_se += linear_exp_integral(t0, t1, k.std_errors[i - 1], k.std_errors[i], c);
    }
    let t_last = k.t_grid[n - 1];
    let k_last = k.k_values[n - 1];
    let tail_mass = (-c * t_last).exp() / c;
    first += k_last * tail_mass;
    first_se += k.std_errors[n - 1] * tail_mass;
    let spread = (ratio - k_last).max(k_last - 1.0 / ratio).max(0.0);
    let tail_bound = 2.0 * spread * tail_mass;
    let first_term = 2.0 * first;
    let first_term_stderr = 2.0 * first_se;
    let wing_contribution = 2.0 * e_n.mean * wing_term.mean;
    let wing_stderr = 2.0
        * ((wing_term.mean * e_n.stderr).powi(2) + (e_n.mean * wing_term.stderr).powi(2)).sqrt();
    let inverse = first_term + wing_contribution;
    Ok(SpeedEstimate {
        first_term,
        first_term_stderr,
        wing_contribution,
        wing_stderr,
        inverse_speed: inverse,
        stderr: (first_term_stderr.powi(2) + wing_stderr.powi(2)).sqrt(),
        tail_bound,
        speed: 1.0 / inverse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Attachment, Side};
    use crate::profile::Profile;
    use std::f64::consts::E;

    fn unit_wing(q: f64, r: f64) -> WingSpec {
        WingSpec {
            q,
            r,
            side: Side::Above,
            level: 1.0,
            tip_radius: 0.0,
            attachment: Attachment::Free,
        }
    }

    fn one() -> Profile {
        Profile::constant(1.0, -1.0, 1.0).unwrap()
    }

    #[test]
    fn constant_width_exit_time_is_a_over_beta() {
        for beta in [0.5, 1.0, 2.0] {
            let v = exit_time_quadrature(&one(), beta, 5.0, None).unwrap();
            assert!((v.value - 5.0 / beta).abs() < 1e-10, "{beta}: {}", v.value);
            assert!(v.tail_bound < 1e-11);
        }
    }

    #[test]
    fn exit_time_vanishes_as_a_shrinks() {
        let l = Profile::from_fn(-30.0, 10.0, 1.0 / 64.0, |x| 1.0 + 0.5 * x.sin()).unwrap();
        let v = exit_time_quadrature(&l, 1.0, 1e-6, None).unwrap();
        assert!(v.value.abs() < 1e-5);
        let v = exit_time_quadrature(&l, 1.0, 0.0, None).unwrap();
        assert_eq!(v.value, 0.0);
        assert!(v.note.is_some());
    }

    #[test]
    fn nonpositive_beta_diverges() {
        assert!(matches!(
            exit_time_quadrature(&one(), 0.0, 5.0, None),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn jump_width_exit_time_matches_piecewise_closed_form() {
        // l = 2 on x < 1, 1 beyond; β = 1, a = 2
        let l = Profile::piecewise_constant(&[-40.0, 1.0, 10.0], &[2.0, 1.0]).unwrap();
        let v = exit_time_quadrature(&l, 1.0, 2.0, None).unwrap();
        // flux p u' = −2∫_{−∞}^y l e^{2t}; u(0) = ∫₀² e^{−2y}/l(y) · 2∫_{−∞}^y l e^{2t} dt dy
        let inner = |y: f64| {
            if y < 1.0 {
                2.0 * (2.0 * y).exp() / 2.0
            } else {
                2.0 * (2.0f64).exp() / 2.0 + ((2.0 * y).exp() - (2.0f64).exp()) / 2.0
            }
        };
        let exact = integrate(
            |y| 2.0 * (-2.0 * y).exp() / l.value(y) * inner(y),
            0.0,
            2.0,
            &[1.0],
            1e-13,
        );
        assert!((v.value - exact).abs() < 1e-9, "{} vs {exact}", v.value);
    }

    #[test]
    fn wing_time_at_origin_with_infinite_a() {
        let t = wing_time_formula(&unit_wing(0.0, 1.0), &one(), 1.0, f64::INFINITY).unwrap();
        assert!((t.m - (E * E - 1.0) / 2.0).abs() < 1e-9, "{}", t.m);
    }

    #[test]
    fn wing_time_with_finite_a() {
        let t = wing_time_formula(&unit_wing(0.0, 1.0), &one(), 1.0, 5.0).unwrap();
        let exact = (E * E - 1.0) * (1.0 - (-10.0f64).exp()) / 2.0;
        assert!((t.m - exact).abs() < 1e-9);
    }

    #[test]
    fn wing_time_left_discount() {
        let t = wing_time_formula(&unit_wing(-5.0, 1.0), &one(), 1.0, f64::INFINITY).unwrap();
        let exact = (-10.0f64).exp() * (E * E - 1.0) / 2.0;
        assert!((t.m - exact).abs() < 1e-12, "{} vs {exact}", t.m);
        assert!((t.m - 1.45031e-4).abs() < 1e-9);
    }

    #[test]
    fn tiny_wing_has_tiny_time() {
        let t = wing_time_formula(&unit_wing(1.0, 1e-9), &one(), 1.0, 5.0).unwrap();
        assert!(t.m.abs() < 1e-8);
    }

    #[test]
    fn wing_beyond_exit_is_rejected() {
        assert!(matches!(
            wing_time_formula(&unit_wing(6.0, 1.0), &one(), 1.0, 5.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn negative_extent_wing_weight_is_positive() {
        let w = wing_weight(&unit_wing(0.0, -1.0), 1.0);
        assert!((w - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-12);
    }

    fn k_est(t: Vec<f64>, k: Vec<f64>, ratio: Option<f64>) -> KEstimate {
        let n = t.len();
        KEstimate {
            t_grid: t,
            k_values: k,
            std_errors: vec![0.0; n],
            sample_length: 1.0,
            ensemble_size: 1,
            ratio_bound: ratio,
        }
    }

    #[test]
    fn inverse_speed_of_constant_channel() {
        let zero = Estimate::exact(0.0, 0.0);
        for beta in [0.5, 1.0, 2.0] {
            let t: Vec<f64> = (0..=200).map(|i| i as f64 * 0.1).collect();
            let k = k_est(t, vec![1.0; 201], Some(2.0));
            let s = inverse_speed(&k, &zero, &zero, beta).unwrap();
            assert!((s.inverse_speed - 1.0 / beta).abs() < 1e-10);
        }
    }

    #[test]
    fn inverse_speed_of_bernoulli_kernel() {
        let t: Vec<f64> = (0..=40).map(|i| i as f64 * 0.25).collect();
        let k: Vec<f64> = t.iter().map(|&t| 1.0 + t.min(1.0) / 8.0).collect();
        let zero = Estimate::exact(0.0, 0.0);
        let s = inverse_speed(&k_est(t, k, Some(4.0)), &zero, &zero, 1.0).unwrap();
        let exact = 17.0 / 16.0 - (-2.0f64).exp() / 16.0;
        assert!((s.first_term - exact).abs() < 1e-12, "{}", s.first_term);
    }

    #[test]
    fn inverse_speed_with_deterministic_wings() {
        let t: Vec<f64> = (0..=100).map(|i| i as f64 * 0.2).collect();
        let k = k_est(t, vec![1.0; 101], Some(2.0));
        let s = inverse_speed(
            &k,
            &Estimate::exact(1.0, 0.0),
            &Estimate::exact((E * E - 1.0) / 4.0, 0.0),
            1.0,
        )
        .unwrap();
        assert!((s.inverse_speed - (1.0 + (E * E - 1.0) / 2.0)).abs() < 1e-10);
    }

    #[test]
    fn inverse_speed_needs_tail_bound() {
        let k = k_est(vec![0.0, 1.0], vec![1.0, 1.0], None);
        let zero = Estimate::exact(0.0, 0.0);
        assert!(matches!(
            inverse_speed(&k, &zero, &zero, 1.0),
            Err(Error::MissingTailBound(_))
        ));
    }

    #[test]
    fn scale_speed_derivatives_match_widths() {
        let l = Profile::from_fn(-5.0, 5.0, 1.0 / 64.0, |x| 1.0 + 0.3 * (2.0 * x).cos()).unwrap();
        let ss = ScaleSpeed { l: &l, beta: 0.7 };
        let h = 1e-3;
        for i in 0..20 {
            let x = -4.0 + 0.4 * i as f64;
            assert!(ss.u(x + h) > ss.u(x));
            assert!(ss.v(x + h) > ss.v(x));
            let fd = (ss.u(x + h) - ss.u(x - h)) / (2.0 * h);
            assert!((fd - ss.du(x)).abs() < 1e-5 * ss.du(x).abs().max(1.0), "{x}: {fd} vs {}", ss.du(x));
            assert!((ss.du(x) * l.value(x) * (1.4 * x).exp() - 1.0).abs() < 1e-12);
        }
    }
}
