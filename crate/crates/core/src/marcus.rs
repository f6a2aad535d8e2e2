//! Marcus averaging operators `R_n`, the finite measures `Θ` that compose
//! them, convergence diagnostics, and conditional expectations of glued
//! measures.
//!
//! `R_n h(x)` is the `ν_x`-average of `h ∘ σ^n` over the local unstable set of
//! `x`. For finite-range data it depends on finitely many past coordinates of
//! `x`, so its supremum and infimum are maxima over finitely many classes.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::leafwise::{GluedMeasure, LeafFamily};
use crate::potential::FiniteRangePotential;
use crate::sft::{hit_bound, sigma_m_unstable_decomposition, Cylinder, PeriodicPoint, Sequence};
use crate::transfer::GibbsMeasure;

/// Roundoff allowance when checking monotonicity of computed sequences.
const MONOTONE_SLACK: f64 = 1e-12;

/// The chain of the last `s` symbols under the equilibrium state's forward
/// kernel.
struct ForwardChain {
    s: usize,
    d: usize,
    index: Vec<usize>,
    states: Vec<Vec<u8>>,
    next: Vec<Vec<(usize, f64)>>,
}

impl ForwardChain {
    fn new(g: &GibbsMeasure, s: usize) -> Self {
        let sys = g.system();
        let d = sys.d();
        let b = g.block_len();
        assert!(s >= b);
        let states = sys.words(s);
        let mut index = vec![usize::MAX; d.pow(s as u32)];
        for (i, w) in states.iter().enumerate() {
            index[key(d, w)] = i;
        }
        let next = states
            .iter()
            .map(|w| {
                let bi = g.operator().block_index(&w[s - b..]).expect("admissible");
                g.kernel_row(bi)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(a, &p)| {
                        let mut n = w[1..].to_vec();
                        n.push(a as u8);
                        (index[key(d, &n)], p)
                    })
                    .collect()
            })
            .collect();
        ForwardChain { s, d, index, states, next }
    }

    fn state_of(&self, w: &[u8]) -> usize {
        self.index[key(self.d, &w[w.len() - self.s..])]
    }
}

fn key(d: usize, w: &[u8]) -> usize {
    w.iter().fold(0usize, |acc, &s| acc * d + s as usize)
}

/// Evaluates `R_n` for one leafwise family.
pub struct Marcus {
    leaves: Arc<LeafFamily>,
}

/// `Θ^m_{n,x}`: atoms at the representatives of `σ^m(W^u_loc(x))` with the
/// `ν_x`-share of each piece.
#[derive(Clone, Debug)]
pub struct ThetaMeasure {
    pub words: Vec<Vec<u8>>,
    pub support: Vec<PeriodicPoint>,
    pub weights: Vec<f64>,
}

impl ThetaMeasure {
    /// Mass of the atoms whose local unstable set meets `u = C(a_0 …)_0`.
    pub fn mass_of(&self, u: &Cylinder) -> f64 {
        let a0 = u.symbols()[0];
        self.support.iter().zip(&self.weights).filter(|(y, _)| y.symbol(0) == a0).map(|(_, w)| w).sum()
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Adaptedness {
    /// Smallest `Θ(U)` over the family.
    pub inf_weight: f64,
    /// Constructive bound `C_U / K_ν²`.
    pub bound: f64,
    pub c_u: f64,
    pub k_nu: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReportRow {
    pub n: usize,
    pub inf: f64,
    pub sup: f64,
    pub gap: f64,
}

/// Convergence record of `R_n h` for one observable.
#[derive(Clone, Debug, Serialize)]
pub struct ObservableReport {
    pub id: String,
    pub rows: Vec<ReportRow>,
    /// Least `n` with `sup − inf < tol`.
    pub converged_at: Option<usize>,
    /// Midpoint of `[inf, sup]` at `converged_at` (or at the last `n`).
    pub limit: f64,
    pub reference: f64,
    pub defect: f64,
    /// `inf R_n h` nondecreasing and `sup R_n h` nonincreasing in `n`.
    pub monotone: bool,
}

/// `R_0 h … R_{n_max} h` on every past class.
#[derive(Clone, Debug)]
pub struct RnTable {
    pub depth: usize,
    pub classes: Vec<Vec<u8>>,
    /// `values[class][n]`.
    pub values: Vec<Vec<f64>>,
}

impl RnTable {
    pub fn n_max(&self) -> usize {
        self.values.first().map_or(0, |v| v.len() - 1)
    }

    pub fn class_index(&self, past: &[u8]) -> usize {
        self.classes.binary_search_by(|c| c.as_slice().cmp(past)).expect("known class")
    }

    pub fn inf(&self, n: usize) -> f64 {
        self.values.iter().map(|v| v[n]).fold(f64::INFINITY, f64::min)
    }

    pub fn sup(&self, n: usize) -> f64 {
        self.values.iter().map(|v| v[n]).fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Marcus {
    pub fn new(leaves: Arc<LeafFamily>) -> Self {
        Marcus { leaves }
    }

    pub fn leaves(&self) -> &Arc<LeafFamily> {
        &self.leaves
    }

    pub fn gibbs(&self) -> &Arc<GibbsMeasure> {
        self.leaves.gibbs()
    }

    /// Past coordinates `R_n h` can depend on, for every `n`.
    pub fn class_depth(&self, h: &FiniteRangePotential) -> usize {
        self.leaves.past_depth().max((1 - h.offset().min(0)) as usize)
    }

    fn prefix_len(&self, h: &FiniteRangePotential) -> usize {
        [self.leaves.future_len(), self.gibbs().block_len(), h.len(), 1].into_iter().max().unwrap()
    }

    /// `R_n h(x)` for a single `n`.
    pub fn apply_rn(&self, h: &FiniteRangePotential, n: usize, x: &PeriodicPoint) -> f64 {
        self.rn_sequence(h, x, n)[n]
    }

    /// `R_0 h(x) … R_{n_max} h(x)` in one forward sweep.
    pub fn rn_sequence(&self, h: &FiniteRangePotential, x: &PeriodicPoint, n_max: usize) -> Vec<f64> {
        let s = h.len().max(self.gibbs().block_len());
        let chain = ForwardChain::new(self.gibbs(), s);
        self.rn_sequence_with(h, x, n_max, &chain)
    }

    fn rn_sequence_with(
        &self,
        h: &FiniteRangePotential,
        x: &PeriodicPoint,
        n_max: usize,
        chain: &ForwardChain,
    ) -> Vec<f64> {
        let sys = self.leaves.system();
        let lp = self.prefix_len(h);
        let hi = h.last();
        let mut out = vec![f64::NAN; n_max + 1];
        let x0 = x.symbol(0);

        // futures no longer than the prefix: direct sums over leaf cylinders
        for (n, slot) in out.iter_mut().enumerate() {
            let big_n = n as i64 + hi;
            if big_n > lp as i64 {
                continue;
            }
            *slot = if big_n <= 0 {
                h.eval_shifted(x, n as i64)
            } else {
                sys.continuations(x0, big_n as usize)
                    .iter()
                    .map(|w| {
                        let y = x.splice(sys, 1, w).expect("admissible");
                        self.leaves.normalized_mass(x, w).expect("admissible") * h.eval_shifted(&y, n as i64)
                    })
                    .sum()
            };
        }
        let last_needed = n_max as i64 + hi;
        if last_needed <= lp as i64 {
            return out;
        }

        // longer futures: weight each prefix by ν, then run the forward chain
        let total = self.leaves.total_mass(x);
        let mut dist = vec![0.0; chain.states.len()];
        for p in sys.continuations(x0, lp) {
            let w = self.leaves.nu_u_mass(x, &p).expect("admissible") / total;
            dist[chain.state_of(&p)] += w;
        }
        let h_at: Vec<f64> = chain.states.iter().map(|w| h.value(&w[chain.s - h.len()..])).collect();
        for big_n in (lp as i64 + 1)..=last_needed {
            let mut next = vec![0.0; dist.len()];
            for (i, &p) in dist.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for &(j, q) in &chain.next[i] {
                    next[j] += p * q;
                }
            }
            dist = next;
            let n = big_n - hi;
            if n >= 0 && (n as usize) <= n_max {
                out[n as usize] = dist.iter().zip(&h_at).map(|(p, v)| p * v).sum();
            }
        }
        out
    }

    /// `R_n h` on one representative of every past class of depth
    /// [`Marcus::class_depth`], for `n = 0..=n_max`.
    pub fn table(&self, h: &FiniteRangePotential, n_max: usize) -> RnTable {
        let depth = self.class_depth(h);
        let sys = self.leaves.system();
        let classes = sys.words(depth);
        let s = h.len().max(self.gibbs().block_len());
        let chain = ForwardChain::new(self.gibbs(), s);
        let values = classes
            .par_iter()
            .map(|past| {
                let x = PeriodicPoint::with_past(sys, past).expect("admissible");
                self.rn_sequence_with(h, &x, n_max, &chain)
            })
            .collect();
        RnTable { depth, classes, values }
    }

    /// Runs `R_n h` until `sup − inf < tol` or `n = n_max`.
    pub fn converge(&self, id: &str, h: &FiniteRangePotential, tol: f64, n_max: usize) -> ObservableReport {
        let table = self.table(h, n_max);
        self.report(id, h, tol, &table)
    }

    pub fn report(&self, id: &str, h: &FiniteRangePotential, tol: f64, table: &RnTable) -> ObservableReport {
        let mut rows = Vec::new();
        let mut converged_at = None;
        for n in 0..=table.n_max() {
            let (inf, sup) = (table.inf(n), table.sup(n));
            let gap = sup - inf;
            rows.push(ReportRow { n, inf, sup, gap });
            if gap < tol {
                converged_at = Some(n);
                break;
            }
        }
        let last = rows.last().expect("at least R_0");
        let limit = 0.5 * (last.inf + last.sup);
        let reference = self.gibbs().integrate(h);
        let scale = h.sup_norm().max(1.0) * MONOTONE_SLACK;
        let monotone = rows.windows(2).all(|r| r[1].inf >= r[0].inf - scale && r[1].sup <= r[0].sup + scale);
        ObservableReport {
            id: id.to_string(),
            rows,
            converged_at,
            limit,
            reference,
            defect: (limit - reference).abs(),
            monotone,
        }
    }

    /// The measure `Θ^m_{n,x}`; its weights do not depend on `n`.
    pub fn theta_measure(&self, x: &PeriodicPoint, _n: usize, m: usize) -> ThetaMeasure {
        let sys = self.leaves.system();
        let words = sys.continuations(x.symbol(0), m);
        let support = sigma_m_unstable_decomposition(sys, x, m);
        let weights = words.iter().map(|w| self.leaves.normalized_mass(x, w).expect("admissible")).collect();
        ThetaMeasure { words, support, weights }
    }

    /// `|R_{n+m} h(x) − ∫ R_n h dΘ^m_{n,x}|`.
    pub fn composition_defect(&self, h: &FiniteRangePotential, x: &PeriodicPoint, n: usize, m: usize) -> f64 {
        let direct = self.apply_rn(h, n + m, x);
        let theta = self.theta_measure(x, n, m);
        let composed: f64 = theta.support.iter().zip(&theta.weights).map(|(y, w)| w * self.apply_rn(h, n, y)).sum();
        (direct - composed).abs()
    }

    /// Smallest `Θ(U)` over the family together with the bound `C_U / K_ν²`.
    pub fn adaptedness_check(&self, thetas: &[ThetaMeasure], u: &Cylinder) -> Result<Adaptedness> {
        if u.start() != 0 || u.symbols().is_empty() {
            return Err(Error::CylinderStart { start: u.start() });
        }
        let sys = self.leaves.system();
        let mixing = sys.require_mixing()?;
        let c_u = hit_bound(sys, mixing, u.symbols()[0]);
        let k_nu = self.leaves.comparability()?.k_nu;
        let inf_weight = thetas.iter().map(|t| t.mass_of(u)).fold(f64::INFINITY, f64::min);
        Ok(Adaptedness { inf_weight, bound: c_u / (k_nu * k_nu), c_u, k_nu })
    }

    /// `∫ E_n h dm`: the law of the coordinates `≤ −n` under `m`, averaged
    /// against `R_n h` of the matching class.
    pub fn expectation_en(&self, m: &GluedMeasure, table: &RnTable, n: usize) -> Result<f64> {
        let need = n + table.depth;
        if let Some(max) = m.marginal().max_depth() {
            if max < need {
                return Err(Error::InsufficientDepth { have: max, need });
            }
        }
        if m.depth() < need {
            return Err(Error::InsufficientDepth { have: m.depth(), need });
        }
        if n > table.n_max() {
            return Err(Error::Config(format!("R_n tabulated only up to {}", table.n_max())));
        }
        let lo = -(n as i64) - table.depth as i64 + 1;
        Ok(m.marginal().block_law(lo, table.depth).iter().map(|(w, p)| p * table.values[table.class_index(w)][n]).sum())
    }
}

/// One line of the rigidity experiment.
#[derive(Clone, Debug, Serialize)]
pub struct RigidityRow {
    pub marginal: String,
    pub observable: String,
    pub n: usize,
    pub integral: f64,
    pub reference: f64,
    pub defect: f64,
    pub pass: bool,
}

/// For every glued measure and observable, `|∫E_n h dm − ∫h dμ|` at the
/// observable's convergence time.
pub fn rigidity_experiment(
    marcus: &Marcus,
    measures: &[GluedMeasure],
    observables: &[(String, FiniteRangePotential)],
    tol: f64,
    n_max: usize,
) -> Result<Vec<RigidityRow>> {
    let mut rows = Vec::new();
    for (id, h) in observables {
        let table = marcus.table(h, n_max);
        let report = marcus.report(id, h, tol, &table);
        let n = report.converged_at.unwrap_or(n_max);
        for m in measures {
            let integral = marcus.expectation_en(m, &table, n)?;
            let defect = (integral - report.reference).abs();
            rows.push(RigidityRow {
                marginal: m.label(),
                observable: id.clone(),
                n,
                integral,
                reference: report.reference,
                defect,
                pass: defect < tol,
            });
        }
    }
    Ok(rows)
}
