use channel_motor::geometry::{Attachment, Bounds, ChannelSpec, Side, WingSpec};
use channel_motor::graph::{EdgeKind, GraphPoint, MetricGraph};
use channel_motor::profile::Profile;
use channel_motor::walk::{
    mean_exit_time, occupation_estimate, simulate_exit, simulate_paths, wing_occupation_fraction, write_paths_csv,
    write_samples_csv, SimParams,
};
use channel_motor::Error;

fn uniform_graph() -> (MetricGraph, GraphPoint) {
    let spec = ChannelSpec::uniform(1.0, (-20.0, 5.0)).unwrap();
    let graph = MetricGraph::build(&spec).unwrap();
    let start = graph.locate((0.0, 0.0)).unwrap();
    (graph, start)
}

fn three_edge_graph(tip_radius: f64) -> MetricGraph {
    let l0 = Profile::constant(1.0, -20.0, 5.0).unwrap();
    let wing = WingSpec {
        q: 0.0,
        r: 1.0,
        side: Side::Above,
        level: 1.0,
        tip_radius,
        attachment: Attachment::Free,
    };
    let bounds = Bounds {
        l_min: 0.5,
        l_max: 2.0,
        wing_bound: None,
        max_wings_per_unit: None,
    };
    let spec = ChannelSpec::from_width(&l0, vec![wing], bounds, (-20.0, 5.0)).unwrap();
    MetricGraph::build(&spec).unwrap()
}

#[test]
fn drifted_brownian_exit_time_is_a_over_beta() {
    let (graph, start) = uniform_graph();
    let est = mean_exit_time(&graph, start, 5.0, &SimParams::new(1e-3, 1.0, 1, 4000)).unwrap();
    assert!((est.mean - 5.0).abs() < 3.0 * est.stderr, "{} +- {}", est.mean, est.stderr);
    assert!(est.contains(5.0) || (est.mean - 5.0).abs() < 3.0 * est.stderr);
}

#[test]
fn start_at_exit_level_takes_no_time() {
    let (graph, _) = uniform_graph();
    let start = graph.locate((5.0, 0.0)).unwrap();
    let s = simulate_exit(&graph, start, 5.0, &SimParams::new(1e-3, 1.0, 1, 1), 0).unwrap();
    assert_eq!(s.tau, 0.0);
}

#[test]
fn same_seed_same_samples() {
    let graph = three_edge_graph(0.1);
    let start = graph.locate((-0.5, 0.0)).unwrap();
    let p = SimParams::new(1e-3, 1.0, 77, 50);
    assert_eq!(
        simulate_paths(&graph, start, 3.0, &p).unwrap(),
        simulate_paths(&graph, start, 3.0, &p).unwrap()
    );
    let other = SimParams { seed: 78, ..p };
    assert_ne!(
        simulate_paths(&graph, start, 3.0, &p).unwrap(),
        simulate_paths(&graph, start, 3.0, &other).unwrap()
    );
}

#[test]
fn quadrupled_paths_halve_the_error() {
    let (graph, start) = uniform_graph();
    let small = mean_exit_time(&graph, start, 2.0, &SimParams::new(1e-3, 1.0, 5, 1000)).unwrap();
    let large = mean_exit_time(&graph, start, 2.0, &SimParams::new(1e-3, 1.0, 6, 4000)).unwrap();
    let ratio = small.stderr / large.stderr;
    assert!((ratio - 2.0).abs() < 0.6, "ratio {ratio}");
}

#[test]
fn wingless_graph_has_no_wing_time() {
    let (graph, start) = uniform_graph();
    let o = wing_occupation_fraction(&graph, start, 2.0, &SimParams::new(1e-3, 1.0, 3, 200)).unwrap();
    assert_eq!(o.wing.mean, 0.0);
    assert_eq!(o.wing_fraction, 0.0);
}

#[test]
fn occupations_add_up_and_main_time_matches_a_over_beta() {
    let graph = three_edge_graph(0.0);
    let start = graph.locate((0.0, 0.0)).unwrap();
    let samples = simulate_paths(&graph, start, 5.0, &SimParams::new(1e-3, 1.0, 11, 3000)).unwrap();
    for s in &samples {
        assert!(s.occupation_main >= 0.0 && s.occupation_wing >= 0.0);
        assert!((s.occupation_main + s.occupation_wing - s.tau).abs() <= 1e-9 * s.tau.max(1.0));
    }
    let o = occupation_estimate(&samples).unwrap();
    assert!((o.main.mean - 5.0).abs() < 3.0 * o.main.stderr, "{} +- {}", o.main.mean, o.main.stderr);
    // coarse step: the wing time is within a few percent of its closed form
    let exact = (std::f64::consts::E.powi(2) - 1.0) * (1.0 - (-10.0f64).exp()) / 2.0;
    assert!((o.wing.mean - exact).abs() < 0.05 * exact + 3.0 * o.wing.stderr);
}

#[test]
fn rounded_tip_paths_stay_on_their_edges() {
    let graph = three_edge_graph(0.2);
    let start = graph.locate((0.0, 0.0)).unwrap();
    let p = SimParams {
        record_every: Some(1),
        ..SimParams::new(1e-3, 1.0, 4, 100)
    };
    let step = 6.0 * p.dt.sqrt();
    for s in simulate_paths(&graph, start, 2.0, &p).unwrap() {
        for pt in s.path.as_ref().unwrap() {
            let e = graph.edge(pt.edge);
            assert!(pt.x >= e.start - step && pt.x <= e.end + step, "x {} on edge {}", pt.x, pt.edge);
            if e.kind == EdgeKind::Wing {
                assert!(pt.x <= e.end);
            }
        }
    }
}

#[test]
fn csv_writers_emit_headers() {
    let graph = three_edge_graph(0.1);
    let start = graph.locate((0.0, 0.0)).unwrap();
    let p = SimParams {
        record_every: Some(50),
        ..SimParams::new(1e-3, 1.0, 4, 5)
    };
    let samples = simulate_paths(&graph, start, 1.0, &p).unwrap();
    let mut buf = Vec::new();
    write_samples_csv(&samples, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("path,tau,occupation_main,occupation_wing\n"));
    assert_eq!(text.lines().count(), 6);
    let mut buf = Vec::new();
    write_paths_csv(&samples, &mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("path,t,edge,x\n"));
}

#[test]
fn bad_parameters_are_rejected() {
    let (graph, start) = uniform_graph();
    let mut p = SimParams::new(1e-3, 1.0, 1, 10);
    p.h_vertex = Some(0.01);
    assert!(matches!(simulate_paths(&graph, start, 2.0, &p), Err(Error::Parameter(_))));
    let p = SimParams::new(-1.0, 1.0, 1, 10);
    assert!(matches!(simulate_paths(&graph, start, 2.0, &p), Err(Error::Parameter(_))));
    let p = SimParams::new(1e-3, 1.0, 1, 1);
    assert!(matches!(mean_exit_time(&graph, start, 2.0, &p), Err(Error::InsufficientSample(_))));
}
