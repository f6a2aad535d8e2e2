use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use symdyn::potential::{sinai_reduce, FiniteRangePotential, Side};
use symdyn::sft::{
    cylinder_hit_fraction, distance, sigma_m_unstable_decomposition, Cylinder, Direction, PeriodicPoint, Sequence,
    TransitionMatrix,
};
use symdyn::transfer::GibbsMeasure;

/// Mixing 0-1 matrices on 2..=4 symbols.
fn mixing_matrix() -> impl Strategy<Value = Arc<TransitionMatrix>> {
    (2usize..=4)
        .prop_flat_map(|d| prop::collection::vec(prop::bool::weighted(0.7), d * d).prop_map(move |b| (d, b)))
        .prop_filter_map("mixing", |(d, bits)| {
            let rows: Vec<Vec<i64>> = bits.chunks(d).map(|r| r.iter().map(|&x| x as i64).collect()).collect();
            let sys = TransitionMatrix::from_rows(&rows).ok()?;
            sys.mixing_exponent()?;
            Some(Arc::new(sys))
        })
}

fn table(sys: &Arc<TransitionMatrix>, lo: i64, len: usize, seed: &[f64]) -> FiniteRangePotential {
    let mut i = 0;
    FiniteRangePotential::from_fn(sys, lo, len, |_| {
        i += 1;
        seed[i % seed.len()]
    })
}

/// A point with the given window on `lo..`, chosen by the sequence of indices.
fn point_from(sys: &TransitionMatrix, picks: &[usize], lo: i64) -> PeriodicPoint {
    let mut w = vec![(picks[0] % sys.d()) as u8];
    for &p in &picks[1..] {
        let succ: Vec<u8> = sys.successors(*w.last().unwrap()).collect();
        w.push(succ[p % succ.len()]);
    }
    PeriodicPoint::from_block(sys, &w, lo).unwrap()
}

fn cycle_points(sys: &TransitionMatrix, max_period: usize) -> Vec<PeriodicPoint> {
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn children_partition_cylinders(sys in mixing_matrix(), picks in prop::collection::vec(0usize..8, 1..=8), start in -4i64..4) {
        let x = point_from(&sys, &picks, start);
        let word = x.window(start, start + picks.len() as i64 - 1);
        let c = Cylinder::new(&sys, word.clone(), start).unwrap();
        let g = GibbsMeasure::new(&FiniteRangePotential::zero(&sys)).unwrap();
        for dir in [Direction::Future, Direction::Past] {
            let kids = c.children(&sys, dir);
            prop_assert!(!kids.is_empty());
            let mut seen = std::collections::BTreeSet::new();
            for k in &kids {
                prop_assert!(seen.insert((k.symbols().to_vec(), k.start())));
                prop_assert_eq!(k.symbols().len(), word.len() + 1);
                prop_assert!(sys.is_admissible(k.symbols()));
            }
            // x lies in exactly one child
            prop_assert_eq!(kids.iter().filter(|k| k.contains(&x)).count(), 1);
            let total: f64 = kids.iter().map(|k| g.cylinder_mass(k)).sum();
            prop_assert!((total - g.cylinder_mass(&c)).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_is_an_ultrametric(sys in mixing_matrix(), a in prop::collection::vec(0usize..8, 9), b in prop::collection::vec(0usize..8, 9), c in prop::collection::vec(0usize..8, 9)) {
        let (x, y, z) = (point_from(&sys, &a, -4), point_from(&sys, &b, -4), point_from(&sys, &c, -4));
        let dxy = distance(&x, &y).unwrap();
        let dyz = distance(&y, &z).unwrap();
        let dxz = distance(&x, &z).unwrap();
        prop_assert!(dxz <= dxy.max(dyz) + 1e-15);
        prop_assert_eq!(dxy, distance(&y, &x).unwrap());
        prop_assert_eq!(distance(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn unstable_decomposition_counts_and_separates(sys in mixing_matrix(), picks in prop::collection::vec(0usize..8, 7), m in 1usize..5) {
        let x = point_from(&sys, &picks, -3);
        let reps = sigma_m_unstable_decomposition(&sys, &x, m);
        prop_assert_eq!(reps.len(), sys.continuations(x.symbol(0), m).len());
        let next = sigma_m_unstable_decomposition(&sys, &x, m + 1);
        let out: usize = reps.iter().map(|y| sys.out_degree(y.symbol(0))).sum();
        prop_assert_eq!(next.len(), out);
        for (i, y) in reps.iter().enumerate() {
            // the past of x sits m steps deeper
            prop_assert_eq!(&y.past_word(4 + m)[..4], &x.past_word(4)[..]);
            for z in &reps[i + 1..] {
                prop_assert!(((1 - m as i64)..=0).any(|j| y.symbol(j) != z.symbol(j)));
            }
        }
    }

    #[test]
    fn hit_fraction_respects_the_bound(sys in mixing_matrix(), picks in prop::collection::vec(0usize..8, 5), extra in 1usize..6, a in 0usize..4) {
        let mixing = sys.mixing_exponent().unwrap();
        let x = point_from(&sys, &picks, -2);
        let a = (a % sys.d()) as u8;
        let u = Cylinder::new(&sys, vec![a], 0).unwrap();
        let h = cylinder_hit_fraction(&sys, &x, mixing + extra, &u).unwrap();
        prop_assert!(h.bound > 0.0);
        prop_assert!(h.fraction >= h.bound - 1e-12);
    }

    #[test]
    fn reductions_keep_cycle_sums(sys in mixing_matrix(), lo in -2i64..=1, len in 1usize..=3, seed in prop::collection::vec(-1.0f64..1.0, 1..20)) {
        let phi = table(&sys, lo, len, &seed);
        for side in [Side::Plus, Side::Minus] {
            let cert = sinai_reduce(&phi, side);
            match side {
                Side::Plus => prop_assert!(cert.reduced.offset() >= 1),
                Side::Minus => prop_assert!(cert.reduced.last() <= 0),
            }
            for n in 1..=5 {
                for c in sys.cycles(n) {
                    let a = phi.cycle_sum(&c).unwrap();
                    let b = cert.reduced.cycle_sum(&c).unwrap();
                    prop_assert!((a - b).abs() < 1e-10);
                }
            }
            for x in cycle_points(&sys, 4) {
                prop_assert!(cert.defect_at(&phi, &x).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn equilibrium_masses_are_consistent(sys in mixing_matrix(), lo in -1i64..=1, seed in prop::collection::vec(-1.0f64..1.0, 1..12)) {
        let phi = table(&sys, lo, 2, &seed);
        let g = GibbsMeasure::new(&phi).unwrap();
        for n in 1..=4 {
            let law = g.word_law(n);
            prop_assert!((law.iter().map(|(_, m)| m).sum::<f64>() - 1.0).abs() < 1e-12);
            for (w, m) in &law {
                prop_assert!(*m > 0.0);
                let right: f64 = sys.successors(*w.last().unwrap()).map(|a| {
                    let mut v = w.clone();
                    v.push(a);
                    g.cylinder_mass_word(&v)
                }).sum();
                let left: f64 = sys.predecessors(w[0]).map(|a| {
                    let mut v = vec![a];
                    v.extend_from_slice(w);
                    g.cylinder_mass_word(&v)
                }).sum();
                // additivity and shift invariance
                prop_assert!((right - m).abs() < 1e-12);
                prop_assert!((left - m).abs() < 1e-12);
            }
        }
        let (_, defect) = g.entropy_and_variational_check();
        prop_assert!(defect < 1e-9);
    }
}

#[test]
fn zero_potential_pressure_is_the_log_spectral_radius() {
    let mats: Vec<Vec<Vec<i64>>> = vec![
        vec![vec![1, 1], vec![1, 1]],
        vec![vec![1, 1], vec![1, 0]],
        vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]],
        vec![vec![0, 1, 1, 0], vec![1, 0, 1, 1], vec![1, 1, 0, 0], vec![0, 1, 1, 1]],
    ];
    for rows in mats {
        let sys = Arc::new(TransitionMatrix::from_rows(&rows).unwrap());
        let d = rows.len();
        let a = DMatrix::from_fn(d, d, |i, j| rows[i][j] as f64);
        let rho = a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let g = GibbsMeasure::new(&FiniteRangePotential::zero(&sys)).unwrap();
        assert!((g.pressure() - rho.ln()).abs() < 1e-10);
    }
}

#[test]
fn gibbs_bounds_hold_for_all_words_to_length_ten() {
    for sys in [Arc::new(TransitionMatrix::golden_mean()), Arc::new(TransitionMatrix::full_shift(2))] {
        let phi =
            FiniteRangePotential::from_fn(&sys, -1, 3, |w| 0.3 * w[0] as f64 - 0.7 * w[1] as f64 + 0.2 * w[2] as f64);
        let g = GibbsMeasure::new(&phi).unwrap();
        let k = g.gibbs_constant();
        let psi = g.normalized();
        let b = g.block_len();
        for n in 1..=10 {
            for w in sys.words(n) {
                let mass = g.cylinder_mass_word(&w);
                for tail in sys.continuations(*w.last().unwrap(), b) {
                    let mut s = w.clone();
                    s.extend_from_slice(&tail);
                    let x = PeriodicPoint::from_block(&sys, &s, 1).unwrap();
                    let birkhoff: f64 = (0..n as i64).map(|j| psi.eval_shifted(&x, j)).sum();
                    let ratio = mass / birkhoff.exp();
                    assert!(ratio <= k * (1.0 + 1e-12) && ratio >= 1.0 / k * (1.0 - 1e-12), "{w:?}: {ratio} vs {k}");
                }
            }
        }
    }
}
