use std::f64::consts::E;

use channel_motor::analytic::{
    exit_time_quadrature, inverse_speed, solve_exit_bvp, wing_time_formula, BvpOptions, FnWidth, MainWidth,
    ScaleSpeed, Sources, WidthFunction,
};
use channel_motor::environment::{lag_grid, KEstimate};
use channel_motor::geometry::{Attachment, Bounds, ChannelSpec, Side, WingSpec};
use channel_motor::graph::MetricGraph;
use channel_motor::profile::Profile;
use channel_motor::stats::Estimate;
use channel_motor::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bounds(l_min: f64, l_max: f64) -> Bounds {
    Bounds {
        l_min,
        l_max,
        wing_bound: None,
        max_wings_per_unit: None,
    }
}

fn wing(q: f64, r: f64, level: f64, tip_radius: f64) -> WingSpec {
    WingSpec {
        q,
        r,
        side: Side::Above,
        level,
        tip_radius,
        attachment: Attachment::Free,
    }
}

fn tabulated_k(f: impl Fn(f64) -> f64, t_max: f64, ratio: f64) -> KEstimate {
    let t_grid = lag_grid(t_max, 0.01);
    let n = t_grid.len();
    KEstimate {
        k_values: t_grid.iter().map(|&t| f(t)).collect(),
        std_errors: vec![0.0; n],
        t_grid,
        sample_length: f64::INFINITY,
        ensemble_size: 1,
        ratio_bound: Some(ratio),
    }
}

#[test]
fn sine_width_quadrature_matches_fine_bvp() {
    let range = (-16.0, 5.0);
    let l = Profile::from_fn(range.0, range.1, 1.0 / 64.0, |x| 1.0 + 0.5 * x.sin()).unwrap();
    let spec = ChannelSpec::from_width(&l, vec![], bounds(0.5, 1.5), range).unwrap();
    let quad = exit_time_quadrature(&MainWidth(&spec), 1.0, 5.0, None).unwrap();
    let graph = MetricGraph::build(&spec).unwrap();
    let solve = |h: f64| {
        solve_exit_bvp(&graph, 1.0, 5.0, &Sources::All, BvpOptions { h, ..Default::default() })
            .unwrap()
            .at_main(&graph, 0.0)
            .unwrap()
    };
    let (coarse, fine) = (solve(2e-4), solve(1e-4));
    let richardson = fine + (fine - coarse) / 3.0;
    assert!(((quad.value - fine) / quad.value).abs() < 1e-3);
    assert!(((quad.value - richardson) / quad.value).abs() < 1e-5, "{} vs {richardson}", quad.value);
}

#[test]
fn exit_time_vanishes_as_a_shrinks() {
    let l = FnWidth {
        f: |x: f64| 1.0 + 0.5 * x.sin(),
        breaks: vec![],
        bounds: (0.5, 1.5),
    };
    let mut last = f64::INFINITY;
    for a in [1e-1, 1e-2, 1e-3, 1e-4] {
        let v = exit_time_quadrature(&l, 1.0, a, None).unwrap().value;
        assert!(v > 0.0 && v < last);
        last = v;
    }
    assert!(last < 1e-3);
    let at_zero = exit_time_quadrature(&l, 1.0, 0.0, None).unwrap();
    assert_eq!(at_zero.value, 0.0);
    assert!(at_zero.note.is_some());
}

#[test]
fn jumps_are_honored_by_quadrature() {
    // l = 1 on x < 2, 2 beyond: the piecewise closed form
    let l = Profile::piecewise_constant(&[-20.0, 2.0, 5.0], &[1.0, 2.0]).unwrap();
    let v = exit_time_quadrature(&l, 1.0, 5.0, None).unwrap().value;
    let graph_spec = ChannelSpec::from_width(&l, vec![], bounds(0.5, 3.0), (-20.0, 5.0)).unwrap();
    let graph = MetricGraph::build(&graph_spec).unwrap();
    let bvp = solve_exit_bvp(&graph, 1.0, 5.0, &Sources::All, BvpOptions::default())
        .unwrap()
        .at_main(&graph, 0.0)
        .unwrap();
    assert!(((v - bvp) / v).abs() < 1e-4, "{v} vs {bvp}");
}

#[test]
fn nonpositive_beta_diverges() {
    let l = Profile::constant(1.0, -1.0, 1.0).unwrap();
    for beta in [0.0, -0.5] {
        assert!(matches!(exit_time_quadrature(&l, beta, 1.0, None), Err(Error::Divergence(_))));
    }
}

#[test]
fn wing_time_closed_forms() {
    let l0 = Profile::constant(1.0, -30.0, 30.0).unwrap();
    let at_origin = wing_time_formula(&wing(0.0, 1.0, 1.0, 0.0), &l0, 1.0, f64::INFINITY).unwrap();
    assert!((at_origin.m - (E * E - 1.0) / 2.0).abs() < 1e-9);
    let left = wing_time_formula(&wing(-5.0, 1.0, 1.0, 0.0), &l0, 1.0, f64::INFINITY).unwrap();
    let exact = (-10.0f64).exp() * (E * E - 1.0) / 2.0;
    assert!((left.m - exact).abs() < 1e-12, "{} vs {exact}", left.m);
    assert!(left.m <= (-10.0f64).exp() * at_origin.m * (1.0 + 1e-12));
    let finite = wing_time_formula(&wing(0.0, 1.0, 1.0, 0.0), &l0, 1.0, 5.0).unwrap();
    assert!((finite.m - (E * E - 1.0) * (1.0 - (-10.0f64).exp()) / 2.0).abs() < 1e-9);
}

#[test]
fn wing_time_shrinks_with_the_wing_and_rejects_wings_past_a() {
    let l0 = Profile::constant(1.0, -30.0, 30.0).unwrap();
    let tiny = wing_time_formula(&wing(0.5, 1e-6, 1.0, 0.0), &l0, 1.0, 5.0).unwrap();
    assert!(tiny.m < 1e-5);
    assert!(matches!(
        wing_time_formula(&wing(6.0, 1.0, 1.0, 0.0), &l0, 1.0, 5.0),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn wing_time_nonnegative_and_left_discounted_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let amp: f64 = rng.random_range(0.0..0.6);
        let freq: f64 = rng.random_range(0.2..3.0);
        let phase: f64 = rng.random_range(0.0..6.3);
        let l0 = FnWidth {
            f: move |x: f64| 1.0 + amp * (freq * x + phase).sin(),
            breaks: vec![],
            bounds: (1.0 - amp, 1.0 + amp),
        };
        let len: f64 = rng.random_range(0.05..1.0);
        let r = if rng.random::<bool>() { len } else { -len };
        let level = rng.random_range(0.1..1.0);
        let rho = rng.random_range(0.0..len);
        let beta = rng.random_range(0.5..2.0);
        let q: f64 = rng.random_range(-6.0..0.0);
        let a = rng.random_range(0.5..5.0);
        let here = wing_time_formula(&wing(q, r, level, rho), &l0, beta, a).unwrap();
        assert!(here.w >= 0.0 && here.m >= 0.0);
        assert!(here.c > 0.0);
        let origin = wing_time_formula(&wing(0.0, r, level, rho), &l0, beta, a).unwrap();
        assert!(here.m <= (2.0 * beta * q).exp() * origin.m * (1.0 + 1e-9) + 1e-15);
    }
}

#[test]
fn inverse_speed_examples() {
    let none = Estimate::exact(0.0, 0.0);
    let bern = tabulated_k(|t| if t <= 1.0 { 1.0 + t / 8.0 } else { 9.0 / 8.0 }, 12.0, 2.0);
    let s = inverse_speed(&bern, &none, &none, 1.0).unwrap();
    let target = 17.0 / 16.0 - (-2.0f64).exp() / 16.0;
    assert!((s.inverse_speed - target).abs() < 1e-9, "{} vs {target}", s.inverse_speed);

    let flat = tabulated_k(|_| 1.0, 12.0, 1.0);
    let wings = inverse_speed(
        &flat,
        &Estimate::exact(1.0, 0.0),
        &Estimate::exact((E * E - 1.0) / 4.0, 0.0),
        1.0,
    )
    .unwrap();
    assert!((wings.inverse_speed - (1.0 + (E * E - 1.0) / 2.0)).abs() < 1e-9);
    assert!((wings.speed * wings.inverse_speed - 1.0).abs() < 1e-15);
}

#[test]
fn inverse_speed_needs_a_tail_bound() {
    let mut k = tabulated_k(|_| 1.0, 5.0, 1.0);
    k.ratio_bound = None;
    let none = Estimate::exact(0.0, 0.0);
    assert!(matches!(inverse_speed(&k, &none, &none, 1.0), Err(Error::MissingTailBound(_))));
}

#[test]
fn scale_speed_derivatives_match_widths() {
    let l = FnWidth {
        f: |x: f64| 1.2 + 0.4 * (1.7 * x).cos(),
        breaks: vec![],
        bounds: (0.8, 1.6),
    };
    let ss = ScaleSpeed { l: &l, beta: 0.8 };
    for i in -20..=20 {
        let x = i as f64 * 0.2;
        let h = 1e-3;
        let du = (ss.u(x + h) - ss.u(x - h)) / (2.0 * h);
        let dv = (ss.v(x + h) - ss.v(x - h)) / (2.0 * h);
        assert!((du - ss.du(x)).abs() < 1e-5 * ss.du(x).max(1.0), "u' at {x}");
        assert!((dv - ss.dv(x)).abs() < 1e-5 * ss.dv(x).max(1.0), "v' at {x}");
        assert!((ss.du(x) - (-1.6 * x).exp() / l.value(x)).abs() < 1e-9 * ss.du(x));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scale_and_speed_are_increasing(amp in 0.0f64..0.8, freq in 0.1f64..4.0, beta in 0.2f64..2.0) {
        let l = FnWidth {
            f: move |x: f64| 1.0 + amp * (freq * x).sin(),
            breaks: vec![],
            bounds: (1.0 - amp, 1.0 + amp),
        };
        let ss = ScaleSpeed { l: &l, beta };
        let probes: Vec<f64> = (-12..=12).map(|i| i as f64 * 0.25).collect();
        for w in probes.windows(2) {
            prop_assert!(ss.u(w[1]) > ss.u(w[0]));
            prop_assert!(ss.v(w[1]) > ss.v(w[0]));
            prop_assert!(ss.q(w[1]) > ss.q(w[0]));
            prop_assert!(ss.r(w[1]) > ss.r(w[0]));
        }
    }
}
