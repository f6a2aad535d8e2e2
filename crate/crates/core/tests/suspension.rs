use std::sync::Arc;

use proptest::prelude::*;
use symdyn::potential::FiniteRangePotential;
use symdyn::sft::{PeriodicPoint, TransitionMatrix};
use symdyn::suspension::{
    birkhoff_cross_check, coboundary_k, flow, integrate_flow_potential, integrate_up_to, integrated_potentials,
    time_integral, FlowPotential, Piecewise, RoofFunction, SuspensionPoint,
};
use symdyn::transfer::GibbsMeasure;
use symdyn::Error;

fn three() -> Arc<TransitionMatrix> {
    Arc::new(TransitionMatrix::from_rows(&[vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]]).unwrap())
}

/// Roof on coordinates -1..=1 with values in [0.4, 1.6].
fn wide_roof(sys: &Arc<TransitionMatrix>) -> RoofFunction {
    let mut k = 0u32;
    RoofFunction::new(FiniteRangePotential::from_fn(sys, -1, 3, |_| {
        k += 1;
        0.4 + ((k * 7919) % 13) as f64 / 10.0
    }))
    .unwrap()
}

fn wavy_flow(sys: &Arc<TransitionMatrix>) -> FlowPotential {
    let mut k = 0.0;
    FlowPotential::from_fn(sys, 0, 2, |_| {
        k += 1.0;
        Piecewise { breaks: vec![0.3, 0.9], polys: vec![vec![k, -0.5], vec![0.2, 0.0, 1.5], vec![-k * 0.1, 2.0]] }
    })
}

fn all_cycle_points(sys: &TransitionMatrix, max_period: usize) -> Vec<PeriodicPoint> {
    let mut pts = Vec::new();
    for n in 1..=max_period {
        for c in sys.cycles(n) {
            let x = PeriodicPoint::periodic(sys, &c).unwrap();
            for j in 0..n as i64 {
                pts.push(x.shift(j));
            }
        }
    }
    pts
}

#[test]
fn quadratic_columns_match_quadrature() {
    let sys = Arc::new(TransitionMatrix::full_shift(2));
    let roof = RoofFunction::new(FiniteRangePotential::per_symbol(&sys, &[1.0, 2.0])).unwrap();
    let (a, b) = (0.7, -1.3);
    let phi = FlowPotential::from_fn(&sys, 0, 1, |_| Piecewise::polynomial(vec![a, 0.0, b]));
    let t = integrate_flow_potential(&phi, &roof);
    for s in 0..2u8 {
        let r = 1.0 + s as f64;
        let closed = a * r + b * r * r * r / 3.0;
        // composite Simpson with 10^4 nodes
        let n = 10_000;
        let h = r / n as f64;
        let f = |u: f64| a + b * u * u;
        let mut q = f(0.0) + f(r);
        for i in 1..n {
            q += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        q *= h / 3.0;
        assert!((t.value(&[s]) - closed).abs() < 1e-12);
        assert!((t.value(&[s]) - q).abs() < 1e-9);
    }
}

#[test]
fn k_vanishes_for_one_sided_and_constant_roofs() {
    let sys = three();
    let phi = wavy_flow(&sys);
    let one_sided =
        RoofFunction::new(FiniteRangePotential::from_fn(&sys, 1, 2, |w| 0.5 + w[0] as f64 + 0.25 * w[1] as f64))
            .unwrap();
    assert_eq!(coboundary_k(&phi, &one_sided).unwrap().sup_norm(), 0.0);
    let constant = RoofFunction::constant(&sys, 0.8).unwrap();
    assert_eq!(coboundary_k(&phi, &constant).unwrap().sup_norm(), 0.0);
}

#[test]
fn coboundary_identity_on_cycles() {
    for sys in [Arc::new(TransitionMatrix::golden_mean()), Arc::new(TransitionMatrix::full_shift(2)), three()] {
        let roof = wide_roof(&sys);
        for phi in [
            wavy_flow(&sys),
            FlowPotential::height_constant(&FiniteRangePotential::from_fn(&sys, -1, 2, |w| {
                w[0] as f64 - 0.3 * w[1] as f64
            })),
        ] {
            let ip = integrated_potentials(&phi, &roof).unwrap();
            assert!(ip.k.sup_norm() > 1e-3, "k should not vanish here");
            let roof_plus = &ip.roof_plus;
            for x in all_cycle_points(&sys, 6) {
                assert!(ip.defect_at(&x).abs() < 1e-10);
                // ψ̃ integrates over an interval of length R⁺
                let len = roof.eval(&x) - ip.v_plus.eval_shifted(&x, 1) + ip.v_plus.eval(&x);
                assert!((len - roof_plus.eval(&x)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn time_integrals_are_additive() {
    let sys = three();
    let roof = wide_roof(&sys);
    let phi = wavy_flow(&sys);
    let x = PeriodicPoint::periodic(&sys, &[0, 1, 2, 2]).unwrap();
    for (a, b, c) in [(-3.0, 0.5, 4.0), (0.0, 1.2, 2.2), (-5.5, -1.0, 0.0)] {
        let whole = time_integral(&phi, &roof, &x, a, c);
        let split = time_integral(&phi, &roof, &x, a, b) + time_integral(&phi, &roof, &x, b, c);
        assert!((whole - split).abs() < 1e-12);
    }
    // a full lap is φ̃
    let t = integrate_flow_potential(&phi, &roof);
    assert!((time_integral(&phi, &roof, &x, 0.0, roof.eval(&x)) - t.eval(&x)).abs() < 1e-12);
}

#[test]
fn time_one_potential() {
    let sys = Arc::new(TransitionMatrix::golden_mean());
    let phi = wavy_flow(&sys);
    let roof = RoofFunction::constant(&sys, 1.0).unwrap();
    let t = integrate_flow_potential(&phi, &roof);
    let one = integrate_up_to(&phi, &roof, 1.0).unwrap();
    let half = RoofFunction::constant(&sys, 0.5).unwrap();
    let t_half = integrate_flow_potential(&phi, &half);
    let one_half = integrate_up_to(&phi, &half, 1.0).unwrap();
    for x in all_cycle_points(&sys, 5) {
        assert!((one.eval(&x) - t.eval(&x)).abs() < 1e-12);
        assert!((one_half.eval(&x) - t_half.eval(&x) - t_half.eval_shifted(&x, 1)).abs() < 1e-12);
    }
}

#[test]
fn integration_is_linear() {
    let sys = three();
    let roof = wide_roof(&sys);
    let p = wavy_flow(&sys);
    let q = FlowPotential::from_fn(&sys, 0, 2, |w| Piecewise {
        breaks: vec![0.5],
        polys: vec![vec![w[0] as f64], vec![0.0, w[1] as f64, 1.0]],
    });
    let (a, b) = (1.5, -0.25);
    let lhs = integrate_flow_potential(&p.combine(a, &q, b), &roof);
    let rhs = integrate_flow_potential(&p, &roof).combine(a, &integrate_flow_potential(&q, &roof), b);
    assert!(lhs.max_abs_diff(&rhs) < 1e-12);
}

#[test]
fn birkhoff_unit_potential() {
    let sys = Arc::new(TransitionMatrix::golden_mean());
    let roof = wide_roof(&sys);
    let g = GibbsMeasure::new(&FiniteRangePotential::zero(&sys)).unwrap();
    let one = FlowPotential::from_fn(&sys, 0, 1, |_| Piecewise::constant(1.0));
    let r = birkhoff_cross_check(&one, &roof, &g, 50.0, 16, 3).unwrap();
    assert!((r.flow_average - 1.0).abs() < 1e-12);
    assert!((r.reference - 1.0).abs() < 1e-12);
    assert!(r.transversal_ok);
    assert!(r.max_return_time <= roof.max_value());
}

#[test]
fn birkhoff_full_shift_indicator() {
    let sys = Arc::new(TransitionMatrix::full_shift(2));
    let roof = RoofFunction::constant(&sys, 1.0).unwrap();
    let g = GibbsMeasure::new(&FiniteRangePotential::zero(&sys)).unwrap();
    let ind = FlowPotential::height_constant(&FiniteRangePotential::per_symbol(&sys, &[1.0, 0.0]));
    let r = birkhoff_cross_check(&ind, &roof, &g, 200.0, 64, 7).unwrap();
    assert!((r.reference - 0.5).abs() < 1e-14);
    // binomial variance of 200 fair draws
    let se = (0.25f64 / 200.0 / 64.0).sqrt();
    assert!(r.defect < 3.0 * se, "{} vs {}", r.defect, se);
    assert!(r.defect < 3.0 * r.std_error.max(1e-12));
}

#[test]
fn birkhoff_parry_indicator() {
    let sys = Arc::new(TransitionMatrix::golden_mean());
    let roof = RoofFunction::constant(&sys, 1.0).unwrap();
    let g = GibbsMeasure::new(&FiniteRangePotential::zero(&sys)).unwrap();
    let ind = FlowPotential::height_constant(&FiniteRangePotential::per_symbol(&sys, &[0.0, 1.0]));
    let r = birkhoff_cross_check(&ind, &roof, &g, 300.0, 64, 11).unwrap();
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((r.reference - 1.0 / (1.0 + golden * golden)).abs() < 1e-12);
    assert!(r.defect < 3.0 * r.std_error, "{} vs {}", r.defect, r.std_error);
}

#[test]
fn birkhoff_is_seeded() {
    let sys = three();
    let roof = wide_roof(&sys);
    let g = GibbsMeasure::new(&FiniteRangePotential::from_fn(&sys, 0, 2, |w| 0.1 * (w[0] + w[1]) as f64)).unwrap();
    let phi = wavy_flow(&sys);
    let a = birkhoff_cross_check(&phi, &roof, &g, 40.0, 8, 5).unwrap();
    let b = birkhoff_cross_check(&phi, &roof, &g, 40.0, 8, 5).unwrap();
    let c = birkhoff_cross_check(&phi, &roof, &g, 40.0, 8, 6).unwrap();
    assert_eq!(a.per_orbit, b.per_orbit);
    assert_ne!(a.per_orbit, c.per_orbit);
    assert!(matches!(birkhoff_cross_check(&phi, &roof, &g, 1.0, 8, 5), Err(Error::DegenerateHorizon { .. })));
}

proptest! {
    #[test]
    fn flow_group_law(cycle in prop::collection::vec(0u8..3, 1..6), h in 0.0f64..1.0, s in -10.0f64..10.0, t in -10.0f64..10.0) {
        let sys = three();
        prop_assume!(sys.is_admissible(&cycle) && sys.allows(*cycle.last().unwrap(), cycle[0]));
        let roof = wide_roof(&sys);
        let x = PeriodicPoint::periodic(&sys, &cycle).unwrap();
        let p = SuspensionPoint::new(&roof, x, h * roof.min_value());
        let two_step = flow(&roof, &flow(&roof, &p, s), t);
        let one_step = flow(&roof, &p, s + t);
        let dh = (two_step.height - one_step.height).abs();
        // a point near the roof may land on either side of the seam
        if two_step.base.same_point(&one_step.base) {
            prop_assert!(dh < 1e-12);
        } else {
            let near_seam = (two_step.height.min(one_step.height)) < 1e-12;
            prop_assert!(near_seam);
        }
    }
}

#[test]
fn too_many_laps_is_an_error() {
    let sys = three();
    let roof = RoofFunction::new(FiniteRangePotential::from_fn(&sys, -1, 3, |w| if w[0] == w[2] { 0.05 } else { 4.0 }))
        .unwrap();
    assert!(matches!(integrated_potentials(&wavy_flow(&sys), &roof), Err(Error::Config(_))));
}
