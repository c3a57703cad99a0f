use channel_motor::environment::{sample_environment, EnvironmentParams, Law, SideLaw, SignLaw, Smoothing, WingLaw};
use channel_motor::geometry::{jump, Attachment, BoundaryArc, Bounds, ChannelSpec, Side, WingSpec};
use channel_motor::profile::Profile;
use channel_motor::Error;
use proptest::prelude::*;

fn bounds() -> Bounds {
    Bounds {
        l_min: 0.5,
        l_max: 3.0,
        wing_bound: None,
        max_wings_per_unit: None,
    }
}

fn wavy(amp: f64, freq: f64) -> ChannelSpec {
    let l0 = Profile::from_fn(-5.0, 5.0, 1.0 / 64.0, |x| 1.5 + amp * (freq * x).sin()).unwrap();
    let upper = l0.affine(0.6, 0.2).unwrap();
    let lower = l0.affine(-0.4, 0.2).unwrap();
    ChannelSpec::new(upper, lower, vec![], bounds(), (-5.0, 5.0)).unwrap()
}

fn winged() -> ChannelSpec {
    ChannelSpec::flush_above(1.0, &[(-2.0, 1.5, 0.8, 0.2), (4.0, -1.5, 0.5, 0.3)], bounds(), (-5.0, 5.0)).unwrap()
}

#[test]
fn jump_width_has_both_limits() {
    let l0 = Profile::new(vec![-1.0, 0.0, 1.0], vec![1.0, 2.0, 2.0], vec![jump(0.0, 1.0, 2.0)]).unwrap();
    let spec = ChannelSpec::from_width(&l0, vec![], bounds(), (-1.0, 1.0)).unwrap();
    let w = spec.width_l0(0.0).unwrap();
    assert_eq!((w.left, w.right), (1.0, 2.0));
    assert!(w.is_jump());
}

#[test]
fn cross_section_out_of_window_is_a_range_error() {
    let spec = winged();
    assert!(matches!(spec.cross_section(7.0), Err(Error::OutOfRange { .. })));
    assert!(matches!(spec.width_l0(-5.5), Err(Error::OutOfRange { .. })));
}

#[test]
fn flush_wings_validate_and_merge_cleanly() {
    let spec = winged();
    let report = spec.validate_assumptions();
    assert!(report.all_passed(), "{:?}", report.failures());
    // inside a wing span the wing sits directly on the main roof
    let cs = spec.cross_section(3.0).unwrap();
    assert_eq!(cs.len(), 2);
    assert!((cs[1].lo - cs[0].hi).abs() < 1e-12);
    assert!((cs[1].len() - 0.5).abs() < 1e-12);
}

#[test]
fn three_components_fail_validation() {
    let wing = |q: f64, r: f64, side| WingSpec {
        q,
        r,
        side,
        level: 0.3,
        tip_radius: 0.1,
        attachment: Attachment::Free,
    };
    let l0 = Profile::constant(1.0, -5.0, 5.0).unwrap();
    let spec = ChannelSpec::from_width(
        &l0,
        vec![wing(0.0, 2.0, Side::Above), wing(1.0, 2.0, Side::Below)],
        bounds(),
        (-5.0, 5.0),
    )
    .unwrap();
    let check = spec.validate_assumptions();
    let c = check.get("cross-section-components").unwrap();
    assert!(!c.passed);
    let x = c.offending_x.unwrap();
    assert!((1.0..=2.0).contains(&x), "offending x {x}");
}

#[test]
fn channel_json_round_trip_is_bit_exact() {
    let spec = wavy(0.4, 1.3);
    let text = spec.to_json().unwrap();
    let back = ChannelSpec::from_json(&text).unwrap();
    assert_eq!(back, spec);
    assert_eq!(back.to_json().unwrap(), text);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cross_sections_are_disjoint_and_main_has_width_l0(x in -5.0f64..5.0) {
        for spec in [winged(), wavy(0.5, 2.0)] {
            let cs = spec.cross_section(x).unwrap();
            prop_assert!(!cs.is_empty() && cs.len() <= 2);
            prop_assert!((cs[0].len() - spec.width_l0(x).unwrap().right).abs() < 1e-12);
            if cs.len() == 2 {
                let (a, b) = (cs[0], cs[1]);
                prop_assert!(a.hi <= b.lo || b.hi <= a.lo);
            }
        }
    }

    #[test]
    fn normals_are_unit_and_point_inward(x in -4.9f64..4.9, amp in 0.0f64..0.9, freq in 0.2f64..3.0) {
        let spec = wavy(amp, freq);
        for arc in [BoundaryArc::MainUpper, BoundaryArc::MainLower] {
            let iv = spec.main_interval(x);
            let z = if arc == BoundaryArc::MainUpper { iv.hi } else { iv.lo };
            let n = spec.boundary_normal((x, z), arc).unwrap();
            prop_assert!(((n[0] * n[0] + n[1] * n[1]).sqrt() - 1.0).abs() < 1e-12);
            // the nearest interior probe sits straight inside at the same x
            let mid = 0.5 * (iv.lo + iv.hi);
            prop_assert!(n[1] * (mid - z) >= 0.0);
        }
    }

    #[test]
    fn sampled_environments_pass_validation(seed in any::<u64>(), p in 0.0f64..1.0, cubic in any::<bool>()) {
        let params = EnvironmentParams {
            l_min: 0.5,
            l_max: 2.5,
            width_law: Law::Uniform { lo: 0.8, hi: 2.2 },
            smoothing: if cubic { Smoothing::MonotoneCubic } else { Smoothing::PiecewiseConstant },
            wing_prob: p,
            wing_law: Some(WingLaw {
                length: Law::Uniform { lo: 0.1, hi: 0.5 },
                sign: SignLaw::Symmetric,
                side: SideLaw::Either,
                level: Law::Uniform { lo: 0.1, hi: 1.0 },
                tip_radius: None,
            }),
            ..EnvironmentParams::constant(1.0, seed)
        };
        let spec = sample_environment(&params, (-3.0, 12.0)).unwrap();
        let report = spec.validate_assumptions();
        prop_assert!(report.all_passed(), "{:?}", report.failures());
    }
}
