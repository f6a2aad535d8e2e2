//! Leafwise measures on local unstable sets and measures glued from a past
//! marginal and those leafwise conditionals.
//!
//! For a base point `z` the local unstable set `W^u_loc(z)` is the set of
//! points agreeing with `z` on coordinates `≤ 0`; it is parametrized by the
//! future `y_1 y_2 …`. The family `ν_z` has density
//! `exp(D(y) − D(z) − G(y))` against the one-sided equilibrium state, where
//! `D(y) − D(z) = Σ_{k≥1} φ(σ^{-k} y) − φ(σ^{-k} z)` (finitely many nonzero
//! terms) and `G` is the transfer function between `φ − P` and the normalized
//! potential. With this choice
//!
//! `ν_z([z_1 b]) = e^{φ(z) − P} · ν_{σz}([b])`
//!
//! holds exactly, and `ν_z / ν_z(W^u_loc(z))` is the conditional measure of the
//! equilibrium state on the leaf.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use dashmap::DashMap;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::FiniteRangePotential;
use crate::sft::{PeriodicPoint, Sequence, TransitionMatrix};
use crate::transfer::GibbsMeasure;

/// The family `z ↦ ν_z` for one equilibrium state, with a shared memo of
/// cylinder masses keyed by the base point's relevant past.
pub struct LeafFamily {
    gibbs: Arc<GibbsMeasure>,
    phi: FiniteRangePotential,
    g_fn: FiniteRangePotential,
    future_len: usize,
    past_depth: usize,
    memo: DashMap<(Vec<u8>, Vec<u8>), f64>,
}

impl fmt::Debug for LeafFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LeafFamily")
            .field("future_len", &self.future_len)
            .field("past_depth", &self.past_depth)
            .field("memo_entries", &self.memo.len())
            .finish()
    }
}

impl LeafFamily {
    pub fn new(gibbs: Arc<GibbsMeasure>) -> Self {
        let sys = Arc::clone(gibbs.system());
        let phi = gibbs.potential().clone();
        let b = gibbs.block_len();
        let log_h = FiniteRangePotential::from_fn(&sys, 1, b, |w| gibbs.eigenfunction_at(w).ln());
        let g_fn = gibbs.transfer_function().combine(1.0, &log_h, 1.0);
        let hi = phi.last();
        let future_len = [hi - 1, g_fn.last(), 1].into_iter().max().unwrap() as usize;
        let lowest = (phi.offset() - (hi - 1).max(0)).min(g_fn.offset()).min(0);
        let past_depth = (1 - lowest) as usize;
        LeafFamily { gibbs, phi, g_fn, future_len, past_depth, memo: DashMap::new() }
    }

    pub fn gibbs(&self) -> &Arc<GibbsMeasure> {
        &self.gibbs
    }

    pub fn system(&self) -> &Arc<TransitionMatrix> {
        self.gibbs.system()
    }

    /// Number of future coordinates the density reads.
    pub fn future_len(&self) -> usize {
        self.future_len
    }

    /// Number of past coordinates `−depth+1..=0` the family depends on.
    pub fn past_depth(&self) -> usize {
        self.past_depth
    }

    /// Entries currently held by the memo.
    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }

    /// `Σ_{k=1}^{hi−1} φ(σ^{-k} y) − φ(σ^{-k} z)`, the log of the product
    /// modification comparing `y` to `z` on one leaf.
    fn log_delta(&self, z: &impl Sequence, y: &impl Sequence) -> f64 {
        let hi = self.phi.last();
        (1..hi).map(|k| self.phi.eval_shifted(y, -k) - self.phi.eval_shifted(z, -k)).sum()
    }

    /// `Δ` between the points `x·y` and `x·y'` of the leaf of `x`: the ratio
    /// of `ν`-densities at `x·y'` and `x·y`. Futures shorter than the range of
    /// the potential are completed by the canonical continuation.
    pub fn delta_ratio(&self, x: &PeriodicPoint, y: &[u8], y_prime: &[u8]) -> Result<f64> {
        let sys = self.system();
        let a = x.splice(sys, 1, y)?;
        let b = x.splice(sys, 1, y_prime)?;
        Ok((self.log_delta(x, &b) - self.log_delta(x, &a)).exp())
    }

    /// Log-density of `ν_z` against the one-sided equilibrium state at the
    /// point of the leaf whose future starts with `future` (at least
    /// `future_len` symbols).
    pub fn log_density(&self, z: &PeriodicPoint, future: &[u8]) -> f64 {
        debug_assert!(future.len() >= self.future_len);
        let y = z.splice(self.system(), 1, future).expect("admissible future");
        self.log_delta(z, &y) - self.g_fn.eval(&y)
    }

    fn check_future(&self, z: &PeriodicPoint, future: &[u8]) -> Result<()> {
        let sys = self.system();
        sys.check_word(future)?;
        if let Some(&f0) = future.first() {
            let z0 = z.symbol(0);
            if !sys.allows(z0, f0) {
                return Err(Error::Inadmissible { word: vec![z0, f0] });
            }
        }
        Ok(())
    }

    /// `ν_z` of the sub-cylinder of `W^u_loc(z)` fixing coordinates
    /// `1..=future.len()`; the empty word gives the total mass.
    pub fn nu_u_mass(&self, z: &PeriodicPoint, future: &[u8]) -> Result<f64> {
        self.check_future(z, future)?;
        let key = (z.past_word(self.past_depth), future.to_vec());
        if let Some(v) = self.memo.get(&key) {
            return Ok(*v);
        }
        let sys = self.system();
        let words = if future.is_empty() {
            sys.continuations(z.symbol(0), self.future_len)
        } else if future.len() >= self.future_len {
            vec![future.to_vec()]
        } else {
            sys.extensions(future, self.future_len)
        };
        let mass = words.iter().map(|w| (self.log_density(z, w)).exp() * self.gibbs.cylinder_mass_word(w)).sum();
        self.memo.insert(key, mass);
        Ok(mass)
    }

    pub fn total_mass(&self, z: &PeriodicPoint) -> f64 {
        self.nu_u_mass(z, &[]).expect("empty future is admissible")
    }

    /// `ν_z([w]) / ν_z(W^u_loc(z))`.
    pub fn normalized_mass(&self, z: &PeriodicPoint, future: &[u8]) -> Result<f64> {
        Ok(self.nu_u_mass(z, future)? / self.total_mass(z))
    }

    /// The multiplier `e^{φ(z) − P}` relating `ν_z` on `[z_1 ·]` to `ν_{σz}`.
    pub fn quasi_invariance_factor(&self, z: &PeriodicPoint) -> f64 {
        (self.phi.eval(z) - self.gibbs.pressure()).exp()
    }

    /// Largest relative defect of `ν_z([z_1 b]) = e^{φ(z) − P} ν_{σz}([b])`
    /// over all words `b` of length `0..depth`.
    pub fn quasi_invariance_check(&self, z: &PeriodicPoint, depth: usize) -> QuasiInvariance {
        let sys = self.system();
        let sz = z.shift(1);
        let z1 = z.symbol(1);
        let factor = self.quasi_invariance_factor(z);
        let mut defect = 0.0f64;
        let mut checked = 0;
        for len in 0..depth {
            let words = if len == 0 { vec![Vec::new()] } else { sys.continuations(z1, len) };
            for b in words {
                let mut w = vec![z1];
                w.extend_from_slice(&b);
                let lhs = self.nu_u_mass(z, &w).expect("admissible");
                let rhs = factor * self.nu_u_mass(&sz, &b).expect("admissible");
                defect = defect.max((lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE));
                checked += 1;
            }
        }
        QuasiInvariance { factor, defect, cylinders: checked }
    }

    /// Representative base points, one per admissible past of depth `past_depth`.
    pub fn base_classes(&self) -> Vec<PeriodicPoint> {
        let sys = self.system();
        sys.words(self.past_depth).into_iter().map(|w| PeriodicPoint::with_past(sys, &w).expect("admissible")).collect()
    }

    /// Masses of every sub-cylinder of `W^u_loc(z)` up to `depth` symbols.
    pub fn leaf_measure(&self, z: &PeriodicPoint, depth: usize) -> LeafMeasure {
        let sys = self.system();
        let mut masses = BTreeMap::new();
        masses.insert(Vec::new(), self.total_mass(z));
        for len in 1..=depth {
            for w in sys.continuations(z.symbol(0), len) {
                let m = self.nu_u_mass(z, &w).expect("admissible");
                masses.insert(w, m);
            }
        }
        LeafMeasure { base: z.clone(), masses, depth }
    }

    /// Comparability constants over all base classes.
    ///
    /// `total_ratio` bounds the ratio of total masses of two leaves.
    /// `scale_ratio` bounds `ν_z([v]) / ν_z([v'])` for words of length `M`
    /// (the mixing exponent) following `z_0`. `k_nu` is the larger of the two.
    pub fn comparability(&self) -> Result<Comparability> {
        let sys = self.system();
        let m = sys.require_mixing()?;
        let mut t_lo = f64::INFINITY;
        let mut t_hi = 0.0f64;
        let mut scale = 1.0f64;
        for z in self.base_classes() {
            let t = self.total_mass(&z);
            t_lo = t_lo.min(t);
            t_hi = t_hi.max(t);
            let masses: Vec<f64> =
                sys.continuations(z.symbol(0), m).iter().map(|v| self.nu_u_mass(&z, v).expect("admissible")).collect();
            let lo = masses.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = masses.iter().cloned().fold(0.0, f64::max);
            scale = scale.max(hi / lo);
        }
        let total_ratio = t_hi / t_lo;
        Ok(Comparability { total_ratio, scale_ratio: scale, k_nu: total_ratio.max(scale) })
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuasiInvariance {
    pub factor: f64,
    pub defect: f64,
    pub cylinders: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Comparability {
    pub total_ratio: f64,
    pub scale_ratio: f64,
    pub k_nu: f64,
}

/// Materialized masses of `ν_z` on the sub-cylinders of one leaf.
#[derive(Clone, Debug)]
pub struct LeafMeasure {
    pub base: PeriodicPoint,
    /// Future word (empty for the whole leaf) to mass.
    pub masses: BTreeMap<Vec<u8>, f64>,
    pub depth: usize,
}

impl LeafMeasure {
    pub fn total(&self) -> f64 {
        self.masses[&Vec::new()]
    }

    /// Largest relative gap between a mass and the sum over its children.
    pub fn additivity_defect(&self, sys: &TransitionMatrix) -> f64 {
        let mut worst = 0.0f64;
        for (w, &m) in &self.masses {
            if w.len() >= self.depth {
                continue;
            }
            let last = w.last().copied().unwrap_or(self.base.symbol(0));
            let children: f64 = sys
                .successors(last)
                .map(|a| {
                    let mut c = w.clone();
                    c.push(a);
                    self.masses[&c]
                })
                .sum();
            worst = worst.max((children - m).abs() / m);
        }
        worst
    }
}

/// A probability law on the coordinates `≤ 0`, given by its finite-dimensional
/// block laws. It need not be shift invariant.
pub trait PastMarginal: Send + Sync {
    fn label(&self) -> String;

    /// Law of the symbols on coordinates `lo..lo + len` (all `≤ 0`), as
    /// admissible words with positive probability, lexicographically.
    fn block_law(&self, lo: i64, len: usize) -> Vec<(Vec<u8>, f64)>;

    /// Deepest coordinate count the law is defined for, if finite.
    fn max_depth(&self) -> Option<usize> {
        None
    }
}

/// The past law of the equilibrium state itself.
pub struct EquilibriumPast {
    gibbs: Arc<GibbsMeasure>,
}

impl EquilibriumPast {
    pub fn new(gibbs: Arc<GibbsMeasure>) -> Self {
        EquilibriumPast { gibbs }
    }
}

impl PastMarginal for EquilibriumPast {
    fn label(&self) -> String {
        "equilibrium".into()
    }

    fn block_law(&self, _lo: i64, len: usize) -> Vec<(Vec<u8>, f64)> {
        self.gibbs.word_law(len).into_iter().filter(|(_, m)| *m > 0.0).collect()
    }
}

/// Point mass on the past of one point.
pub struct PointPast {
    point: PeriodicPoint,
}

impl PointPast {
    pub fn new(point: PeriodicPoint) -> Self {
        PointPast { point }
    }
}

impl PastMarginal for PointPast {
    fn label(&self) -> String {
        format!("point {}", self.point)
    }

    fn block_law(&self, lo: i64, len: usize) -> Vec<(Vec<u8>, f64)> {
        vec![(self.point.window(lo, lo + len as i64 - 1), 1.0)]
    }
}

/// A law on pasts given by the distribution of the block on coordinates
/// `−H+1..=0` and, further back, a cycle of backward kernels:
/// `x_{i−1}` is drawn from `kernels[t][x_i]` with `t` cycling as the
/// coordinate decreases. Without kernels the law stops at depth `H`.
#[derive(Clone, Debug)]
pub struct ChainPast {
    label: String,
    head: Vec<(Vec<u8>, f64)>,
    kernels: Vec<Vec<Vec<f64>>>,
}

impl ChainPast {
    /// Validates that the head is a probability law on admissible words and
    /// that each kernel row is a law on admissible predecessors.
    pub fn new(
        label: impl Into<String>,
        sys: &Arc<TransitionMatrix>,
        head: Vec<(Vec<u8>, f64)>,
        kernels: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let bad = |s: String| Err(Error::InvalidMarginal(s));
        let Some(h) = head.first().map(|(w, _)| w.len()) else {
            return bad("empty head law".into());
        };
        let mut total = 0.0;
        for (w, p) in &head {
            if w.len() != h || h == 0 {
                return bad("head words must share one nonzero length".into());
            }
            if !sys.is_admissible(w) {
                return bad(format!("head word {w:?} is inadmissible"));
            }
            if !(*p >= 0.0) {
                return bad(format!("negative probability {p}"));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("head law sums to {total}"));
        }
        for k in &kernels {
            if k.len() != sys.d() {
                return bad("kernel must have one row per symbol".into());
            }
            for (a, row) in k.iter().enumerate() {
                if row.len() != sys.d() {
                    return bad("kernel rows must have one entry per symbol".into());
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return bad(format!("kernel row {a} sums to {s}"));
                }
                for (c, &p) in row.iter().enumerate() {
                    if p < 0.0 || (p > 0.0 && !sys.allows(c as u8, a as u8)) {
                        return bad(format!("kernel moves {a} back to inadmissible {c}"));
                    }
                }
            }
        }
        let mut head = head;
        head.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(ChainPast { label: label.into(), head, kernels })
    }

    /// Uniform law on admissible blocks of length `depth`, extended backward
    /// by uniform choice among predecessors.
    pub fn uniform(sys: &Arc<TransitionMatrix>, depth: usize) -> Result<Self> {
        let words = sys.words(depth);
        let p = 1.0 / words.len() as f64;
        let head = words.into_iter().map(|w| (w, p)).collect();
        ChainPast::new(format!("uniform depth {depth}"), sys, head, vec![uniform_kernel(sys)])
    }

    /// A random law: random positive weights on admissible blocks of length
    /// `depth`, extended backward by two alternating random kernels.
    pub fn random<R: Rng + ?Sized>(
        sys: &Arc<TransitionMatrix>,
        depth: usize,
        rng: &mut R,
        label: impl Into<String>,
    ) -> Result<Self> {
        let words = sys.words(depth);
        let weights: Vec<f64> = words.iter().map(|_| 0.05 + rng.random::<f64>()).collect();
        let s: f64 = weights.iter().sum();
        let head = words.into_iter().zip(weights).map(|(w, x)| (w, x / s)).collect();
        let kernels = (0..2).map(|_| random_kernel(sys, rng)).collect();
        ChainPast::new(label, sys, head, kernels)
    }

    /// All mass on the admissible block of length `depth` that the
    /// equilibrium state charges least, extended backward uniformly.
    pub fn rarest(gibbs: &GibbsMeasure, depth: usize) -> Result<Self> {
        let sys = gibbs.system();
        let (w, _) = gibbs.word_law(depth).into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty");
        let label = format!("rarest {}", crate::sft::digits(&w));
        ChainPast::new(label, sys, vec![(w, 1.0)], vec![uniform_kernel(sys)])
    }

    pub fn head_len(&self) -> usize {
        self.head[0].0.len()
    }
}

fn uniform_kernel(sys: &TransitionMatrix) -> Vec<Vec<f64>> {
    (0..sys.d() as u8)
        .map(|a| {
            let preds: Vec<u8> = sys.predecessors(a).collect();
            (0..sys.d() as u8).map(|c| if preds.contains(&c) { 1.0 / preds.len() as f64 } else { 0.0 }).collect()
        })
        .collect()
}

fn random_kernel<R: Rng + ?Sized>(sys: &TransitionMatrix, rng: &mut R) -> Vec<Vec<f64>> {
    (0..sys.d() as u8)
        .map(|a| {
            let row: Vec<f64> =
                (0..sys.d() as u8).map(|c| if sys.allows(c, a) { 0.05 + rng.random::<f64>() } else { 0.0 }).collect();
            let s: f64 = row.iter().sum();
            row.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

impl PastMarginal for ChainPast {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn max_depth(&self) -> Option<usize> {
        self.kernels.is_empty().then(|| self.head_len())
    }

    fn block_law(&self, lo: i64, len: usize) -> Vec<(Vec<u8>, f64)> {
        let top = lo + len as i64 - 1;
        assert!(top <= 0, "past blocks end at coordinate 0 or earlier");
        let h = self.head_len() as i64;
        let head_lo = 1 - h;
        if lo < head_lo {
            assert!(!self.kernels.is_empty(), "law requested beyond its depth");
        }
        // state: (captured symbols on lo..=top so far, from the top down; lowest symbol)
        let capture = |c: i64| c >= lo && c <= top;
        let mut states: BTreeMap<(Vec<u8>, u8), f64> = BTreeMap::new();
        for (w, p) in &self.head {
            let mut cap = Vec::new();
            for (i, &s) in w.iter().enumerate().rev() {
                if capture(head_lo + i as i64) {
                    cap.push(s);
                }
            }
            *states.entry((cap, w[0])).or_insert(0.0) += p;
        }
        let mut c = head_lo;
        let mut t = 0usize;
        while c > lo {
            let k = &self.kernels[t % self.kernels.len()];
            let mut next: BTreeMap<(Vec<u8>, u8), f64> = BTreeMap::new();
            for ((cap, low), p) in states {
                for (s, &q) in k[low as usize].iter().enumerate() {
                    if q == 0.0 {
                        continue;
                    }
                    let mut cap2 = cap.clone();
                    if capture(c - 1) {
                        cap2.push(s as u8);
                    }
                    *next.entry((cap2, s as u8)).or_insert(0.0) += p * q;
                }
            }
            states = next;
            c -= 1;
            t += 1;
        }
        let mut law: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        for ((cap, _), p) in states {
            let mut w = cap;
            w.reverse();
            *law.entry(w).or_insert(0.0) += p;
        }
        law.into_iter().filter(|(_, p)| *p > 0.0).collect()
    }
}

/// A probability measure whose law on the past is a given marginal and whose
/// conditional on each local unstable set is the normalized `ν_z`.
pub struct GluedMeasure {
    marginal: Arc<dyn PastMarginal>,
    leaves: Arc<LeafFamily>,
    depth: usize,
}

impl fmt::Debug for GluedMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GluedMeasure").field("marginal", &self.marginal.label()).field("depth", &self.depth).finish()
    }
}

/// Glues a past marginal to the leafwise family, materialized to `depth`
/// past coordinates. The marginal's block laws are checked for consistency
/// on the deepest block length that can still be enumerated.
pub fn glue(marginal: Arc<dyn PastMarginal>, leaves: Arc<LeafFamily>, depth: usize) -> Result<GluedMeasure> {
    let depth = depth.max(1);
    if let Some(max) = marginal.max_depth() {
        if max < depth {
            return Err(Error::InsufficientDepth { have: max, need: depth });
        }
    }
    let sys = leaves.system();
    let check = validation_depth(sys, depth);
    let lo = 1 - check as i64;
    let law = marginal.block_law(lo, check);
    let total: f64 = law.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidMarginal(format!("block law sums to {total}")));
    }
    for (w, p) in &law {
        if w.len() != check || !sys.is_admissible(w) || !(*p >= 0.0) {
            return Err(Error::InvalidMarginal(format!("bad block {w:?} with mass {p}")));
        }
    }
    // consistency with the law one coordinate shorter and one step shallower
    if check < 2 {
        return Ok(GluedMeasure { marginal, leaves, depth });
    }
    for (shorter, cut) in [(marginal.block_law(lo + 1, check - 1), 1usize), (marginal.block_law(lo, check - 1), 0)] {
        let mut folded: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        for (w, p) in &law {
            let key = if cut == 1 { w[1..].to_vec() } else { w[..check - 1].to_vec() };
            *folded.entry(key).or_insert(0.0) += p;
        }
        let expected: BTreeMap<Vec<u8>, f64> = shorter.into_iter().collect();
        let keys: std::collections::BTreeSet<&Vec<u8>> = folded.keys().chain(expected.keys()).collect();
        for k in keys {
            let a = folded.get(k).copied().unwrap_or(0.0);
            let b = expected.get(k).copied().unwrap_or(0.0);
            if (a - b).abs() > 1e-10 {
                return Err(Error::InvalidMarginal(format!("block law not additive at {k:?}: {a} vs {b}")));
            }
        }
    }
    Ok(GluedMeasure { marginal, leaves, depth })
}

/// Deepest block length up to `depth` whose admissible words stay few enough
/// to enumerate.
fn validation_depth(sys: &TransitionMatrix, depth: usize) -> usize {
    const MAX_WORDS: f64 = 4096.0;
    let mut k = 1;
    while k < depth && sys.power(k).iter().flatten().sum::<f64>() <= MAX_WORDS {
        k += 1;
    }
    k
}

impl GluedMeasure {
    pub fn marginal(&self) -> &Arc<dyn PastMarginal> {
        &self.marginal
    }

    pub fn leaves(&self) -> &Arc<LeafFamily> {
        &self.leaves
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn label(&self) -> String {
        self.marginal.label()
    }

    /// Mass of the cylinder of `word` at coordinates `start..`.
    pub fn cylinder_mass(&self, word: &[u8], start: i64) -> Result<f64> {
        let sys = self.leaves.system();
        sys.check_word(word)?;
        let end = start + word.len() as i64 - 1;
        let need = (self.leaves.past_depth() as i64).max(1 - start) as usize;
        if need > self.depth {
            return Err(Error::InsufficientDepth { have: self.depth, need });
        }
        let lo = 1 - need as i64;
        let mut total = 0.0;
        for (past, p) in self.marginal.block_law(lo, need) {
            // agreement on coordinates start..=0
            let ok = (start..=end.min(0)).all(|c| past[(c - lo) as usize] == word[(c - start) as usize]);
            if !ok {
                continue;
            }
            let z = PeriodicPoint::with_past(sys, &past)?;
            let frac =
                if end <= 0 { 1.0 } else { self.fiber_mass(&z, &word[(1 - start).max(0) as usize..], start.max(1))? };
            total += p * frac;
        }
        Ok(total)
    }

    /// Normalized `ν_z` of the future cylinder of `w` at coordinates `from..`.
    fn fiber_mass(&self, z: &PeriodicPoint, w: &[u8], from: i64) -> Result<f64> {
        let sys = self.leaves.system();
        let gap = (from - 1) as usize;
        if gap == 0 {
            if !sys.allows(z.symbol(0), w[0]) {
                return Ok(0.0);
            }
            return self.leaves.normalized_mass(z, w);
        }
        let mut s = 0.0;
        for fill in sys.continuations(z.symbol(0), gap) {
            if !sys.allows(*fill.last().unwrap(), w[0]) {
                continue;
            }
            let mut full = fill;
            full.extend_from_slice(w);
            s += self.leaves.normalized_mass(z, &full)?;
        }
        Ok(s)
    }

    /// `∫ f dm` for a finite-range `f`.
    pub fn integrate(&self, f: &FiniteRangePotential) -> Result<f64> {
        let mut s = 0.0;
        for (w, v) in f.entries() {
            if v != 0.0 {
                s += v * self.cylinder_mass(&w, f.offset())?;
            }
        }
        Ok(s)
    }

    /// Largest gap between `m(C(β w)) / m(C(β))` and the normalized `ν` on
    /// fibers: every materialized past block `β` with positive mass and all
    /// futures `w` of length `1..=len`.
    pub fn fiber_check(&self, len: usize) -> Result<f64> {
        let sys = self.leaves.system();
        let depth = self.leaves.past_depth();
        let lo = 1 - depth as i64;
        let mut worst = 0.0f64;
        for (past, p) in self.marginal.block_law(lo, depth) {
            if p <= 0.0 {
                continue;
            }
            let z = PeriodicPoint::with_past(sys, &past)?;
            let base = self.cylinder_mass(&past, lo)?;
            for n in 1..=len {
                for w in sys.continuations(*past.last().unwrap(), n) {
                    let mut full = past.clone();
                    full.extend_from_slice(&w);
                    let ratio = self.cylinder_mass(&full, lo)? / base;
                    let expected = self.leaves.normalized_mass(&z, &w)?;
                    worst = worst.max((ratio - expected).abs());
                }
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn family(phi: &FiniteRangePotential) -> Arc<LeafFamily> {
        Arc::new(LeafFamily::new(Arc::new(GibbsMeasure::new(phi).unwrap())))
    }

    #[test]
    fn uniform_leaves_on_the_full_shift() {
        let sys = Arc::new(TransitionMatrix::full_shift(2));
        let f = family(&FiniteRangePotential::zero(&sys));
        let z = PeriodicPoint::periodic(&sys, &[0, 1]).unwrap();
        let total = f.total_mass(&z);
        for n in 1..5 {
            for w in sys.words(n) {
                let m = f.nu_u_mass(&z, &w).unwrap();
                assert!((m - total * 0.5f64.powi(n as i32)).abs() < 1e-14);
            }
        }
        let q = f.quasi_invariance_check(&z, 4);
        assert!(q.defect < 1e-12);
        assert!((q.factor - 0.5).abs() < 1e-12);
    }

    #[test]
    fn delta_examples() {
        let sys = Arc::new(TransitionMatrix::full_shift(2));
        let phi = FiniteRangePotential::from_fn(&sys, -1, 2, |w| (w[0] * w[1]) as f64);
        let f = family(&phi);
        let x = PeriodicPoint::with_past(&sys, &[1, 1]).unwrap();
        assert_eq!(f.delta_ratio(&x, &[0, 1], &[0, 1]).unwrap(), 1.0);
        // φ reads x_{-1} x_0; the factors k ≥ 1 never see coordinate 1
        assert_eq!(f.delta_ratio(&x, &[0, 1], &[1, 1]).unwrap(), 1.0);

        let c = family(&FiniteRangePotential::constant(&sys, 0.7));
        assert_eq!(c.delta_ratio(&x, &[0], &[1]).unwrap(), 1.0);

        // a potential reading x_0 x_1 x_2: factors k = 1, 2 see the future
        let psi = FiniteRangePotential::from_fn(&sys, 0, 3, |w| 0.3 * w[1] as f64 + 0.5 * (w[0] * w[2]) as f64);
        let f = family(&psi);
        let (y, yp) = ([0u8, 1], [1u8, 1]);
        let ya = x.splice(&sys, 1, &y).unwrap();
        let yb = x.splice(&sys, 1, &yp).unwrap();
        let hand: f64 = (1..=2).map(|k| psi.eval_shifted(&yb, -k) - psi.eval_shifted(&ya, -k)).sum();
        assert!((f.delta_ratio(&x, &y, &yp).unwrap() - hand.exp()).abs() < 1e-15);
        assert!((hand - 0.5).abs() < 1e-15);
    }

    #[test]
    fn chain_past_block_laws_are_consistent() {
        let sys = Arc::new(TransitionMatrix::golden_mean());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = ChainPast::random(&sys, 2, &mut rng, "r").unwrap();
        for len in 1..5 {
            for lo in -6..=(1 - len as i64) {
                let law = m.block_law(lo, len);
                let s: f64 = law.iter().map(|(_, p)| p).sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!(law.iter().all(|(w, _)| sys.is_admissible(w)));
                // dropping the deepest symbol gives the shallower law
                let short: BTreeMap<_, _> = m.block_law(lo + 1, len - 1).into_iter().collect();
                let mut folded: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
                for (w, p) in &law {
                    *folded.entry(w[1..].to_vec()).or_insert(0.0) += p;
                }
                for (k, v) in folded {
                    if len > 1 {
                        assert!((short[&k] - v).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn glue_rejects_bad_marginals() {
        let sys = Arc::new(TransitionMatrix::golden_mean());
        let f = family(&FiniteRangePotential::zero(&sys));
        let head = vec![(vec![0, 1], 0.5), (vec![1, 0], 0.6)];
        assert!(matches!(ChainPast::new("x", &sys, head, vec![]), Err(Error::InvalidMarginal(_))));
        let shallow = ChainPast::new("x", &sys, vec![(vec![0, 1], 1.0)], vec![]).unwrap();
        assert!(matches!(glue(Arc::new(shallow), f, 5), Err(Error::InsufficientDepth { have: 2, need: 5 })));
    }

    #[test]
    fn uniform_glue_on_golden_mean() {
        let sys = Arc::new(TransitionMatrix::golden_mean());
        let f = family(&FiniteRangePotential::zero(&sys));
        let m = glue(Arc::new(ChainPast::uniform(&sys, 3).unwrap()), f, 3).unwrap();
        let total: f64 = sys.words(3).iter().map(|w| m.cylinder_mass(w, -2).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // each of the 5 admissible blocks gets 1/5
        assert!((m.cylinder_mass(&[0, 1, 0], -2).unwrap() - 0.2).abs() < 1e-12);
        assert!(m.fiber_check(3).unwrap() < 1e-12);
    }
}
