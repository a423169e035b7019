use qmorse::flow::{GradientFlow, IntegratorConfig};
use qmorse::linalg::{CMat, C64};
use qmorse::moment::CentralShift;
use qmorse::quiver::{DimensionVector, Quiver, RepSpace, Representation};
use qmorse::strata::BrokenLineExperiment;

const C: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn product_flow() -> GradientFlow {
    let space = RepSpace::new(Quiver::a2_product(2), DimensionVector::new(vec![1; 4])).unwrap();
    GradientFlow::new(space, CentralShift(vec![-C, C, -C, C]), IntegratorConfig::default())
}

fn pair(a: C64, b: C64) -> Representation {
    Representation { blocks: vec![CMat::from_element(1, 1, a), CMat::from_element(1, 1, b)] }
}

/// One factor: `f = (s − 2c)²/2` with `s = |z|²`, so level `ℓ` (below the
/// factor's maximum) sits at `s = 2c − √(2ℓ)`.
fn radius_at(level: f64) -> f64 {
    (2.0 * C - (2.0 * level).sqrt()).sqrt()
}

#[test]
fn product_family_breaks_through_middle_level() {
    let flow = product_flow();
    let a0 = C64::from_polar(0.1, 0.4);
    let b0 = C64::from_polar(1.0, -0.9);
    let exp = BrokenLineExperiment {
        base: pair(a0, C64::new(0.0, 0.0)),
        direction: pair(C64::new(0.0, 0.0), b0),
        params: (1..=8).map(|n| 10f64.powi(-n)).collect(),
        levels: vec![1.5, 0.5],
        dwell_tol: 1e-3,
        match_tol: 1e-3,
    };
    let report = exp.run(&flow).unwrap();
    let values = report.chain_values();
    assert_eq!(values.len(), 3, "{values:?}");
    assert!((values[0] - 2.0).abs() < 1e-9 && (values[1] - 1.0).abs() < 1e-9 && values[2].abs() < 1e-9);
    assert!(report.chain_strictly_decreasing());
    assert!(report.broken);
    // limit checkpoints: on level 1.5 the second factor is still at 0 (f_b = 1),
    // on level 0.5 the first sits on its minimum circle
    let y0 = pair(C64::from_polar(radius_at(0.5), 0.4), C64::new(0.0, 0.0));
    let y1 = pair(C64::from_polar((2.0 * C).sqrt(), 0.4), C64::from_polar(radius_at(0.5), -0.9));
    let d = report.distances_to(&[y0, y1]);
    for row in &d {
        assert!(*row.last().unwrap() < 1e-6, "{row:?}");
    }
    assert!(report.connecting.iter().all(|c| c.ok), "{:?}", report.connecting);
    assert!(report.semicontinuity_ok);
}
