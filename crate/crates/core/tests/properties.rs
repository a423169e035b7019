use std::path::Path;

use proptest::prelude::*;
use qmorse::flow::{GradientFlow, IntegratorConfig};
use qmorse::io::config;
use qmorse::linalg::norm;
use qmorse::moment::{self, CentralShift};
use qmorse::quiver::{DimensionVector, GroupElement, Quiver, Relation, RepSpace};
use qmorse::retract::{scene_sigma, RetractScene, SaddlePoint};
use qmorse::sampling::stream_rng;

fn spaces() -> Vec<(RepSpace, CentralShift)> {
    vec![
        (RepSpace::new(Quiver::jordan(1), DimensionVector::new(vec![2])).unwrap(), CentralShift(vec![0.5])),
        (RepSpace::new(Quiver::a2(), DimensionVector::new(vec![1, 2])).unwrap(), CentralShift(vec![-1.0, 0.5])),
        (RepSpace::new(Quiver::jordan(2), DimensionVector::new(vec![2])).unwrap(), CentralShift(vec![0.3])),
        (RepSpace::new(Quiver::a2_product(2), DimensionVector::new(vec![1; 4])).unwrap(), CentralShift(vec![-0.7, 0.7, -0.7, 0.7])),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn f_is_nonnegative_and_unitary_invariant(case in 0usize..4, seed in any::<u64>(), scale in 0.1f64..3.0) {
        let (space, alpha) = &spaces()[case];
        let mut rng = stream_rng(seed, 0);
        let x = space.random(&mut rng, scale);
        let g = GroupElement::random_unitary(space.dims(), &mut rng);
        let f = moment::f_value(space, &x, alpha);
        let fg = moment::f_value(space, &space.act(&g, &x).unwrap(), alpha);
        prop_assert!(f >= 0.0);
        prop_assert!((f - fg).abs() <= 1e-10 * (1.0 + f));
    }

    #[test]
    fn flatten_roundtrips(case in 0usize..4, seed in any::<u64>()) {
        let (space, _) = &spaces()[case];
        let x = space.random(&mut stream_rng(seed, 1), 1.0);
        let v = space.flatten(&x);
        prop_assert_eq!(v.len(), space.real_dim());
        prop_assert_eq!(space.unflatten(&v), x);
    }

    #[test]
    fn gradient_matches_finite_differences(case in 0usize..4, seed in any::<u64>()) {
        let (space, alpha) = &spaces()[case];
        let x = space.random(&mut stream_rng(seed, 2), 1.0);
        let g = space.flatten(&moment::gradient(space, &x, alpha));
        let fd = moment::fd_gradient(space, &x, alpha, 1e-5);
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&diff) <= 1e-6 * (1.0 + norm(&g)));
    }

    #[test]
    fn velocity_is_orthogonal_to_the_orbit(case in 0usize..4, seed in any::<u64>()) {
        let (space, alpha) = &spaces()[case];
        let mut rng = stream_rng(seed, 3);
        let x = space.random(&mut rng, 1.0);
        let u = qmorse::quiver::LieAlgebraElement::random_skew(space.dims(), &mut rng, 1.0);
        let tangent = space.infinitesimal_action(&u, &x);
        let v = moment::flow_velocity(space, &x, alpha);
        prop_assert!(v.inner(&tangent).abs() <= 1e-10 * (1.0 + v.norm() * tangent.norm()));
    }

    #[test]
    fn f_descends_along_traces(case in 0usize..4, seed in any::<u64>()) {
        let (space, alpha) = &spaces()[case];
        let flow = GradientFlow::new(space.clone(), alpha.clone(), IntegratorConfig { max_time: 20.0, ..Default::default() });
        let trace = flow.integrate(&space.random(&mut stream_rng(seed, 4), 1.0));
        prop_assert!(trace.samples.windows(2).all(|w| w[1].t > w[0].t));
        prop_assert!(trace.max_f_increase() <= 1e-10 * (1.0 + trace.first().f));
    }

    #[test]
    fn commuting_variety_is_group_invariant(seed in any::<u64>(), a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let space = RepSpace::new(Quiver::jordan(2), DimensionVector::new(vec![2])).unwrap();
        let r = Relation::commutator(space.quiver(), 0, 1).unwrap();
        let mut rng = stream_rng(seed, 5);
        let x0 = space.random(&mut rng, 1.0);
        // polynomials in one matrix commute
        let m = &x0.blocks[0];
        let y = m * qmorse::linalg::C64::new(a, 0.0) + m * m * qmorse::linalg::C64::new(b, 0.0);
        let x = qmorse::quiver::Representation { blocks: vec![m.clone(), y] };
        let g = GroupElement::random_near_identity(space.dims(), &mut rng, 0.3);
        let gx = space.act(&g, &x).unwrap();
        prop_assert!(space.relation_residual(&x, &r) <= 1e-12 * (1.0 + x.norm_sqr()));
        prop_assert!(space.relation_residual(&gx, &r) <= 1e-10 * (1.0 + gx.norm_sqr()));
    }

    #[test]
    fn sigma_lies_in_unit_interval(x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let scene = RetractScene::smooth_saddle(0.1, 0.5);
        let p = SaddlePoint::new(x, y);
        prop_assume!(x != 0.0 && p.f().abs() <= scene.eps);
        let s = scene_sigma(&scene, p).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
    }
}

#[test]
fn bundled_configs_roundtrip_through_serialization() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        let cfg = config::parse_config(&text).unwrap();
        let again = config::parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }
}
