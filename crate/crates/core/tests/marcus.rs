use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symdyn::leafwise::{glue, ChainPast, EquilibriumPast, LeafFamily, PastMarginal, PointPast};
use symdyn::marcus::{rigidity_experiment, Marcus};
use symdyn::potential::FiniteRangePotential;
use symdyn::sft::{random_point, Cylinder, PeriodicPoint, Sequence, TransitionMatrix};
use symdyn::transfer::GibbsMeasure;

fn systems() -> Vec<Arc<TransitionMatrix>> {
    vec![
        Arc::new(TransitionMatrix::full_shift(2)),
        Arc::new(TransitionMatrix::golden_mean()),
        Arc::new(TransitionMatrix::from_rows(&[vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]]).unwrap()),
    ]
}

fn random_potential(sys: &Arc<TransitionMatrix>, lo: i64, len: usize, rng: &mut ChaCha8Rng) -> FiniteRangePotential {
    FiniteRangePotential::from_fn(sys, lo, len, |_| rng.random_range(-1.0..1.0))
}

fn marcus_for(phi: &FiniteRangePotential) -> Marcus {
    let g = Arc::new(GibbsMeasure::new(phi).unwrap());
    Marcus::new(Arc::new(LeafFamily::new(g)))
}

/// `R_n h(x)` straight from the conditionals of the equilibrium state given
/// the last `b` symbols of the past.
fn brute_rn(g: &GibbsMeasure, h: &FiniteRangePotential, n: usize, x: &PeriodicPoint) -> f64 {
    let sys = g.system();
    let big_n = n as i64 + h.last();
    if big_n <= 0 {
        return h.eval_shifted(x, n as i64);
    }
    let beta = x.past_word(g.block_len());
    let base = g.cylinder_mass_word(&beta);
    sys.continuations(x.symbol(0), big_n as usize)
        .into_iter()
        .map(|w| {
            let mut full = beta.clone();
            full.extend_from_slice(&w);
            let y = x.splice(sys, 1, &w).unwrap();
            g.cylinder_mass_word(&full) / base * h.eval_shifted(&y, n as i64)
        })
        .sum()
}

#[test]
fn forward_sweep_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for sys in systems() {
        for (lo, len) in [(-1, 3), (0, 2), (1, 1)] {
            let phi = random_potential(&sys, lo, len, &mut rng);
            let m = marcus_for(&phi);
            for (hlo, hlen) in [(0, 1), (-2, 3), (1, 2)] {
                let h = random_potential(&sys, hlo, hlen, &mut rng);
                for _ in 0..3 {
                    let x = random_point(&sys, &mut rng, 6);
                    let seq = m.rn_sequence(&h, &x, 8);
                    for (n, v) in seq.iter().enumerate() {
                        let b = brute_rn(m.gibbs(), &h, n, &x);
                        assert!((v - b).abs() < 1e-11, "n = {n}: {v} vs {b}");
                    }
                }
            }
        }
    }
}

#[test]
fn rn_depends_only_on_the_past_class() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for sys in systems() {
        let phi = random_potential(&sys, -1, 3, &mut rng);
        let m = marcus_for(&phi);
        let h = random_potential(&sys, -1, 2, &mut rng);
        let depth = m.class_depth(&h);
        for _ in 0..5 {
            let x = random_point(&sys, &mut rng, 6);
            let rep = PeriodicPoint::with_past(&sys, &x.past_word(depth)).unwrap();
            let a = m.rn_sequence(&h, &x, 6);
            let b = m.rn_sequence(&h, &rep, 6);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn composition_through_theta() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for sys in systems() {
        let phi = random_potential(&sys, -1, 3, &mut rng);
        let m = marcus_for(&phi);
        let h = random_potential(&sys, 0, 2, &mut rng);
        for _ in 0..4 {
            let x = random_point(&sys, &mut rng, 6);
            for (n, k) in [(0, 1), (2, 3), (4, 2)] {
                let t = m.theta_measure(&x, n, k);
                assert!((t.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(m.composition_defect(&h, &x, n, k) < 1e-11);
            }
        }
    }
}

#[test]
fn gaps_shrink_and_limits_match_the_equilibrium_integral() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for sys in systems() {
        let phi = random_potential(&sys, -1, 2, &mut rng);
        let m = marcus_for(&phi);
        let h = random_potential(&sys, -1, 3, &mut rng);
        let r = m.converge("h", &h, 1e-9, 80);
        assert!(r.monotone);
        let n = r.converged_at.expect("converges");
        assert!(r.rows[n].gap < 1e-9);
        for w in r.rows.windows(2) {
            assert!(w[1].gap <= w[0].gap + 1e-12);
        }
        assert!(r.defect < 1e-9, "defect {}", r.defect);
        assert!(r.rows.iter().all(|row| row.inf <= r.reference + 1e-12 && r.reference <= row.sup + 1e-12));
    }
}

#[test]
fn theta_meets_cylinders_above_the_constructive_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for sys in systems() {
        let mixing = sys.mixing_exponent().unwrap();
        let phi = random_potential(&sys, -1, 3, &mut rng);
        let m = marcus_for(&phi);
        let thetas: Vec<_> = (0..20)
            .map(|_| {
                let x = random_point(&sys, &mut rng, 6);
                m.theta_measure(&x, 0, mixing + 1 + rng.random_range(0..3))
            })
            .collect();
        for a in 0..sys.d() as u8 {
            let u = Cylinder::new(
                &sys,
                sys.continuations(a, 1)[0].iter().fold(vec![a], |mut v, &s| {
                    v.push(s);
                    v
                }),
                0,
            )
            .unwrap();
            let adapted = m.adaptedness_check(&thetas, &u).unwrap();
            assert!(adapted.bound > 0.0);
            assert!(adapted.inf_weight >= adapted.bound, "{adapted:?}");
        }
    }
}

#[test]
fn conditional_expectations_of_glued_measures() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for sys in systems() {
        let phi = random_potential(&sys, -1, 3, &mut rng);
        let m = marcus_for(&phi);
        let leaves = Arc::clone(m.leaves());
        let h = random_potential(&sys, 0, 2, &mut rng);
        let n_max = 40;
        let table = m.table(&h, n_max);
        let depth = n_max + table.depth;
        let reference = m.gibbs().integrate(&h);

        // the equilibrium state is fixed by every E_n
        let eq: Arc<dyn PastMarginal> = Arc::new(EquilibriumPast::new(Arc::clone(m.gibbs())));
        let g = glue(eq, Arc::clone(&leaves), depth).unwrap();
        for n in [0, 1, 5, 20] {
            assert!((m.expectation_en(&g, &table, n).unwrap() - reference).abs() < 1e-11);
        }

        // a point-mass past reads R_n h on the shifted past
        let p = random_point(&sys, &mut rng, 3);
        let pt: Arc<dyn PastMarginal> = Arc::new(PointPast::new(p.clone()));
        let g = glue(pt, Arc::clone(&leaves), depth).unwrap();
        for n in [0, 3, 7] {
            let shifted = p.shift(-(n as i64));
            let expected = m.apply_rn(&h, n, &shifted);
            assert!((m.expectation_en(&g, &table, n).unwrap() - expected).abs() < 1e-12);
        }

        // any past marginal ends within the gap of the reference
        let chain: Arc<dyn PastMarginal> = Arc::new(ChainPast::random(&sys, 4, &mut rng, "random").unwrap());
        let g = glue(chain, Arc::clone(&leaves), depth).unwrap();
        for n in [0, 5, 15, 40] {
            let e = m.expectation_en(&g, &table, n).unwrap();
            assert!((e - reference).abs() <= table.sup(n) - table.inf(n) + 1e-12);
        }
    }
}

#[test]
fn expectation_needs_enough_depth() {
    let sys = Arc::new(TransitionMatrix::golden_mean());
    let m = marcus_for(&FiniteRangePotential::zero(&sys));
    let h = FiniteRangePotential::indicator(&sys, &[0], 0).unwrap();
    let table = m.table(&h, 10);
    let u: Arc<dyn PastMarginal> = Arc::new(ChainPast::uniform(&sys, 4).unwrap());
    let g = glue(u, Arc::clone(m.leaves()), 4).unwrap();
    assert!(m.expectation_en(&g, &table, 10).is_err());
}

#[test]
fn rigidity_rows_pass_for_every_marginal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sys = Arc::new(TransitionMatrix::full_shift(2));
    let phi = random_potential(&sys, -1, 2, &mut rng);
    let m = marcus_for(&phi);
    let leaves = Arc::clone(m.leaves());
    let n_max = 60;
    let depth = n_max + 4;
    let marginals: Vec<Arc<dyn PastMarginal>> = vec![
        Arc::new(EquilibriumPast::new(Arc::clone(m.gibbs()))),
        Arc::new(PointPast::new(PeriodicPoint::periodic(&sys, &[0]).unwrap())),
        Arc::new(ChainPast::uniform(&sys, 3).unwrap()),
        Arc::new(ChainPast::rarest(m.gibbs(), 5).unwrap()),
        Arc::new(ChainPast::random(&sys, 4, &mut rng, "random").unwrap()),
    ];
    let measures: Vec<_> = marginals.into_iter().map(|p| glue(p, Arc::clone(&leaves), depth).unwrap()).collect();
    let observables = vec![
        ("zero".to_string(), FiniteRangePotential::indicator(&sys, &[0], 0).unwrap()),
        ("pair".to_string(), random_potential(&sys, -1, 2, &mut rng)),
    ];
    let rows = rigidity_experiment(&m, &measures, &observables, 1e-6, n_max).unwrap();
    assert_eq!(rows.len(), 10);
    for r in &rows {
        assert!(r.pass, "{r:?}");
        assert!(r.n <= 30);
    }
}
