//! Suspension flows over the shift: roof functions, the flow `s_t`,
//! integrated potentials and the coboundary relating the two-sided and the
//! one-sided integrated versions.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{sinai_reduce, FiniteRangePotential, Side};
use crate::sft::{digits, parse_digits, PeriodicPoint, Sequence, TransitionMatrix};
use crate::transfer::GibbsMeasure;

/// A strictly positive finite-range roof.
#[derive(Clone, Debug)]
pub struct RoofFunction {
    r: FiniteRangePotential,
    min: f64,
}

impl RoofFunction {
    pub fn new(r: FiniteRangePotential) -> Result<Self> {
        let min = r.min_value();
        if !(min > 0.0) || !r.max_value().is_finite() {
            return Err(Error::NonPositiveRoof { min });
        }
        Ok(RoofFunction { r, min })
    }

    pub fn constant(sys: &Arc<TransitionMatrix>, c: f64) -> Result<Self> {
        RoofFunction::new(FiniteRangePotential::constant(sys, c))
    }

    pub fn potential(&self) -> &FiniteRangePotential {
        &self.r
    }

    pub fn system(&self) -> &Arc<TransitionMatrix> {
        self.r.system()
    }

    pub fn min_value(&self) -> f64 {
        self.min
    }

    pub fn max_value(&self) -> f64 {
        self.r.max_value()
    }

    pub fn eval(&self, x: &impl Sequence) -> f64 {
        self.r.eval(x)
    }
}

/// A point `[x, u]` of the suspension, kept with `0 ≤ u < R(x)`.
#[derive(Clone, Debug)]
pub struct SuspensionPoint {
    pub base: PeriodicPoint,
    pub height: f64,
}

impl SuspensionPoint {
    /// Normalizes `[base, height]` by moving whole laps.
    pub fn new(roof: &RoofFunction, base: PeriodicPoint, height: f64) -> Self {
        let mut p = SuspensionPoint { base, height };
        p.normalize(roof);
        p
    }

    fn normalize(&mut self, roof: &RoofFunction) {
        loop {
            let r = roof.eval(&self.base);
            if self.height >= r {
                self.height -= r;
                self.base = self.base.shift(1);
            } else if self.height < 0.0 {
                self.base = self.base.shift(-1);
                self.height += roof.eval(&self.base);
            } else {
                break;
            }
        }
    }
}

/// `s_t`.
pub fn flow(roof: &RoofFunction, p: &SuspensionPoint, t: f64) -> SuspensionPoint {
    SuspensionPoint::new(roof, p.base.clone(), p.height + t)
}

/// A polynomial in the height on each of the intervals cut out by `breaks`.
///
/// `polys[i]` holds ascending coefficients in the absolute height `u` and is
/// used on `[breaks[i-1], breaks[i])`, the outer pieces extending to ±∞.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piecewise {
    #[serde(default)]
    pub breaks: Vec<f64>,
    pub polys: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PieceSpec {
    Polynomial(Vec<f64>),
    Piecewise(Piecewise),
}

/// JSON form of a flow potential; like potentials, `window: [p, q]` reads
/// coordinates `-p..=q`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowPotentialSpec {
    pub window: [i64; 2],
    pub table: BTreeMap<String, PieceSpec>,
}

impl Piecewise {
    pub fn constant(c: f64) -> Self {
        Piecewise { breaks: vec![], polys: vec![vec![c]] }
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Piecewise { breaks: vec![], polys: vec![coeffs] }
    }

    fn validate(&self) -> Result<()> {
        if self.polys.len() != self.breaks.len() + 1 {
            return Err(Error::Config(format!(
                "{} breaks need {} polynomials, got {}",
                self.breaks.len(),
                self.breaks.len() + 1,
                self.polys.len()
            )));
        }
        if self.breaks.iter().any(|b| !b.is_finite()) || self.breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("breaks must be finite and strictly increasing".into()));
        }
        if self.polys.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Config("polynomial coefficients must be finite".into()));
        }
        Ok(())
    }

    fn piece(&self, u: f64) -> &[f64] {
        &self.polys[self.breaks.partition_point(|&b| b <= u)]
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.piece(u).iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    /// `∫_a^b`, exact.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if a > b {
            return -self.integral(b, a);
        }
        let mut s = 0.0;
        let mut lo = a;
        for (i, p) in self.polys.iter().enumerate() {
            let hi = self.breaks.get(i).copied().unwrap_or(f64::INFINITY).min(b);
            if hi > lo {
                s += antiderivative(p, hi) - antiderivative(p, lo);
                lo = hi;
            }
            if lo >= b {
                break;
            }
        }
        s
    }

    /// `a·self + b·other` on the common refinement of the breaks.
    pub fn combine(&self, a: f64, other: &Piecewise, b: f64) -> Piecewise {
        let mut breaks: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let polys = (0..=breaks.len())
            .map(|i| {
                // a point inside piece i
                let u = match (i.checked_sub(1).map(|j| breaks[j]), breaks.get(i)) {
                    (None, Some(&h)) => h - 1.0,
                    (Some(l), None) => l + 1.0,
                    (Some(l), Some(&h)) => 0.5 * (l + h),
                    (None, None) => 0.0,
                };
                let (p, q) = (self.piece(u), other.piece(u));
                (0..p.len().max(q.len()))
                    .map(|k| a * p.get(k).copied().unwrap_or(0.0) + b * q.get(k).copied().unwrap_or(0.0))
                    .collect()
            })
            .collect();
        Piecewise { breaks, polys }
    }
}

fn antiderivative(p: &[f64], u: f64) -> f64 {
    p.iter().enumerate().rev().fold(0.0, |acc, (k, c)| acc * u + c / (k + 1) as f64) * u
}

/// A function on the suspension: on the column over `x` at height `u` it
/// is `pieces[window word of x](u)`.
#[derive(Clone, Debug)]
pub struct FlowPotential {
    sys: Arc<TransitionMatrix>,
    offset: i64,
    len: usize,
    pieces: BTreeMap<Vec<u8>, Piecewise>,
}

impl FlowPotential {
    pub fn from_fn(
        sys: &Arc<TransitionMatrix>,
        offset: i64,
        len: usize,
        mut f: impl FnMut(&[u8]) -> Piecewise,
    ) -> Self {
        let len = len.max(1);
        let pieces = sys.words(len).into_iter().map(|w| {
            let p = f(&w);
            (w, p)
        });
        FlowPotential { sys: Arc::clone(sys), offset, len, pieces: pieces.collect() }
    }

    /// Constant along each column, with the column values of `phi`.
    pub fn height_constant(phi: &FiniteRangePotential) -> Self {
        FlowPotential::from_fn(phi.system(), phi.offset(), phi.len(), |w| Piecewise::constant(phi.value(w)))
    }

    pub fn from_spec(sys: &Arc<TransitionMatrix>, spec: &FlowPotentialSpec) -> Result<Self> {
        let [p, q] = spec.window;
        if p < 0 || q < 0 {
            return Err(Error::Config(format!("window [{p}, {q}] must be nonnegative")));
        }
        let lo = -p;
        let len = (p + q + 1) as usize;
        let mut pieces = BTreeMap::new();
        for (key, p) in &spec.table {
            let w = parse_digits(key)?;
            if w.len() != len {
                return Err(Error::BadWordKey { key: key.clone() });
            }
            if !sys.is_admissible(&w) || w.iter().any(|&s| s as usize >= sys.d()) {
                return Err(Error::ExtraEntry { word: key.clone() });
            }
            let p = match p {
                PieceSpec::Polynomial(c) => Piecewise::polynomial(c.clone()),
                PieceSpec::Piecewise(p) => p.clone(),
            };
            p.validate()?;
            pieces.insert(w, p);
        }
        for w in sys.words(len) {
            if !pieces.contains_key(&w) {
                return Err(Error::MissingEntry { word: digits(&w) });
            }
        }
        Ok(FlowPotential { sys: Arc::clone(sys), offset: lo, len, pieces })
    }

    pub fn system(&self) -> &Arc<TransitionMatrix> {
        &self.sys
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn last(&self) -> i64 {
        self.offset + self.len as i64 - 1
    }

    pub fn column(&self, x: &impl Sequence) -> &Piecewise {
        let w: Vec<u8> = (self.offset..=self.last()).map(|i| x.symbol(i)).collect();
        &self.pieces[&w]
    }

    /// Value at `[x, u]` with `0 ≤ u < R(x)`.
    pub fn eval(&self, x: &impl Sequence, u: f64) -> f64 {
        self.column(x).eval(u)
    }

    /// `a·self + b·other`; both must share the window.
    pub fn combine(&self, a: f64, other: &FlowPotential, b: f64) -> FlowPotential {
        assert_eq!((self.offset, self.len), (other.offset, other.len), "windows must agree");
        let pieces = self.pieces.iter().map(|(w, p)| (w.clone(), p.combine(a, &other.pieces[w], b))).collect();
        FlowPotential { sys: Arc::clone(&self.sys), offset: self.offset, len: self.len, pieces }
    }
}

/// `∫_a^b φ(s_u [x, 0]) du`, crossing the roof as often as needed.
pub fn time_integral(phi: &FlowPotential, roof: &RoofFunction, x: &PeriodicPoint, a: f64, b: f64) -> f64 {
    if a > b {
        return -time_integral(phi, roof, x, b, a);
    }
    let p = SuspensionPoint::new(roof, x.clone(), a);
    let (mut base, mut h) = (p.base, p.height);
    let mut left = b - a;
    let mut s = 0.0;
    while left > 0.0 {
        let r = roof.eval(&base);
        let end = r.min(h + left);
        s += phi.column(&base).integral(h, end);
        left -= end - h;
        base = base.shift(1);
        h = 0.0;
    }
    s
}

/// Coordinate window read by flow integrals with limits in `[t_min, t_max]`,
/// merged with `extra`.
fn lap_window(phi: &FlowPotential, roof: &RoofFunction, t_min: f64, t_max: f64, extra: (i64, i64)) -> (i64, usize) {
    let r = roof.potential();
    let back = (t_min.min(0.0).abs() / roof.min_value()).ceil() as i64 + 1;
    let fwd = (t_max.max(0.0) / roof.min_value()).ceil() as i64 + 1;
    let lo = extra.0.min(phi.offset().min(r.offset()) - back);
    let hi = extra.1.max(phi.last().max(r.last()) + fwd);
    (lo, (hi - lo + 1) as usize)
}

fn tabulate(
    sys: &Arc<TransitionMatrix>,
    (lo, len): (i64, usize),
    f: impl Fn(&PeriodicPoint) -> f64,
) -> Result<FiniteRangePotential> {
    FiniteRangePotential::try_from_fn(sys, lo, len, |w| {
        f(&PeriodicPoint::from_block(sys, w, lo).expect("admissible window"))
    })
}

/// `φ̃(x) = ∫_0^{R(x)} φ([x, u]) du`.
pub fn integrate_flow_potential(phi: &FlowPotential, roof: &RoofFunction) -> FiniteRangePotential {
    let lo = phi.offset().min(roof.potential().offset());
    let hi = phi.last().max(roof.potential().last());
    tabulate(phi.system(), (lo, (hi - lo + 1) as usize), |x| phi.column(x).integral(0.0, roof.eval(x)))
        .expect("window of the flow potential and roof")
}

/// `φ^t(x) = ∫_0^t φ(s_u [x, 0]) du`; `t = 1` gives the time-one potential.
///
/// Fails when the laps needed to reach `t` read too wide a window.
pub fn integrate_up_to(phi: &FlowPotential, roof: &RoofFunction, t: f64) -> Result<FiniteRangePotential> {
    let window = lap_window(phi, roof, 0.0, t, (phi.offset(), phi.last()));
    tabulate(phi.system(), window, |x| time_integral(phi, roof, x, 0.0, t))
}

/// The two-sided and one-sided integrated potentials and the function
/// relating them.
#[derive(Clone, Debug)]
pub struct IntegratedPotentials {
    /// `φ̃`, integrated under `R`.
    pub phi_tilde: FiniteRangePotential,
    /// `ψ̃(x) = ∫_{−v⁺(x)}^{R(x) − v⁺(σx)} φ([x, u]) du`, integrated under `R⁺`.
    pub psi_tilde: FiniteRangePotential,
    /// `k(x) = ∫_{−v⁺(x)}^0 φ([x, u]) du`, with `ψ̃ − φ̃ = k − k∘σ`.
    pub k: FiniteRangePotential,
    /// `v⁺`, with `R⁺ = R + v⁺ − v⁺∘σ`.
    pub v_plus: FiniteRangePotential,
    pub roof_plus: FiniteRangePotential,
}

/// Reduces the roof to the plus side and builds `φ̃`, `ψ̃` and `k`.
///
/// `k` and `ψ̃` read about `(max v⁺ − min v⁺ + max R) / min R` laps, so a
/// roof with a large spread relative to its minimum can make the tables too
/// wide; that is reported as a config error.
pub fn integrated_potentials(phi: &FlowPotential, roof: &RoofFunction) -> Result<IntegratedPotentials> {
    let sys = phi.system();
    let cert = sinai_reduce(roof.potential(), Side::Plus);
    let v = cert.transfer;
    let (vmin, vmax) = (v.min_value(), v.max_value());
    let phi_tilde = integrate_flow_potential(phi, roof);

    let k_window = lap_window(phi, roof, -vmax, -vmin, (v.offset(), v.last()));
    let k = tabulate(sys, k_window, |x| time_integral(phi, roof, x, -v.eval(x), 0.0))?;

    let psi_window = lap_window(phi, roof, -vmax, roof.max_value() - vmin, (v.offset(), v.last() + 1));
    let psi_tilde =
        tabulate(sys, psi_window, |x| time_integral(phi, roof, x, -v.eval(x), roof.eval(x) - v.eval_shifted(x, 1)))?;
    Ok(IntegratedPotentials { phi_tilde, psi_tilde, k, v_plus: v, roof_plus: cert.reduced })
}

/// `k` alone.
pub fn coboundary_k(phi: &FlowPotential, roof: &RoofFunction) -> Result<FiniteRangePotential> {
    Ok(integrated_potentials(phi, roof)?.k)
}

impl IntegratedPotentials {
    /// `ψ̃ − φ̃ − k + k∘σ` at `x`.
    pub fn defect_at(&self, x: &impl Sequence) -> f64 {
        self.psi_tilde.eval(x) - self.phi_tilde.eval(x) - self.k.eval(x) + self.k.eval_shifted(x, 1)
    }
}

/// Outcome of sampling flow orbits against the equilibrium reference.
#[derive(Clone, Debug, Serialize)]
pub struct BirkhoffReport {
    pub flow_average: f64,
    pub reference: f64,
    pub defect: f64,
    pub std_error: f64,
    pub per_orbit: Vec<f64>,
    /// Longest time between successive visits to height 0.
    pub max_return_time: f64,
    /// Every orbit segment longer than the maximal roof met height 0.
    pub transversal_ok: bool,
}

/// Time averages of `phi` along `n_orbits` flow orbits of length `horizon`
/// started at height 0 over `μ`-distributed bases, against
/// `∫φ̃ dμ / ∫R dμ`.
pub fn birkhoff_cross_check(
    phi: &FlowPotential,
    roof: &RoofFunction,
    gibbs: &GibbsMeasure,
    horizon: f64,
    n_orbits: usize,
    seed: u64,
) -> Result<BirkhoffReport> {
    let sys = gibbs.system();
    if sys.d() != phi.system().d() || sys.d() != roof.system().d() {
        return Err(Error::AlphabetMismatch { left: sys.d(), right: phi.system().d() });
    }
    let max_roof = roof.max_value();
    if !(horizon > max_roof) {
        return Err(Error::DegenerateHorizon { horizon, max_roof });
    }
    let r = roof.potential();
    let lo = phi.offset().min(r.offset()).min(0);
    let laps = (horizon / roof.min_value()).ceil() as i64 + 1;
    let hi = phi.last().max(r.last()) + laps;
    let head = gibbs.block_len().max(1);
    let law = gibbs.word_law(head);
    let total_len = (hi - lo + 1) as usize;

    let orbits: Vec<(f64, f64)> = (0..n_orbits)
        .into_par_iter()
        .map(|orbit| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(orbit as u64);
            let mut block = gibbs.sample_word(&law, &mut rng);
            while block.len() < total_len {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut next = None;
                for a in sys.successors(*block.last().unwrap()) {
                    acc += gibbs.next_symbol_prob(&block, a);
                    if u < acc {
                        next = Some(a);
                        break;
                    }
                }
                let a = next.unwrap_or_else(|| sys.successors(*block.last().unwrap()).last().unwrap());
                block.push(a);
            }
            let x = PeriodicPoint::from_block(sys, &block, lo).expect("sampled block is admissible");
            orbit_average(phi, roof, &x, horizon)
        })
        .collect();

    let per_orbit: Vec<f64> = orbits.iter().map(|o| o.0).collect();
    let max_return_time = orbits.iter().map(|o| o.1).fold(0.0, f64::max);
    let n = per_orbit.len() as f64;
    let flow_average = per_orbit.iter().sum::<f64>() / n;
    let var = if per_orbit.len() > 1 {
        per_orbit.iter().map(|a| (a - flow_average).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let phi_tilde = integrate_flow_potential(phi, roof);
    let reference = gibbs.integrate(&phi_tilde) / gibbs.integrate(r);
    Ok(BirkhoffReport {
        flow_average,
        reference,
        defect: (flow_average - reference).abs(),
        std_error: (var / n).sqrt(),
        per_orbit,
        max_return_time,
        transversal_ok: max_return_time <= max_roof,
    })
}

/// Time average over `[0, horizon]` from `[x, 0]` and the longest stretch
/// without a visit to height 0.
fn orbit_average(phi: &FlowPotential, roof: &RoofFunction, x: &PeriodicPoint, horizon: f64) -> (f64, f64) {
    let mut base = x.clone();
    let mut left = horizon;
    let mut s = 0.0;
    let mut longest = 0.0f64;
    while left > 0.0 {
        let r = roof.eval(&base);
        let run = r.min(left);
        s += phi.column(&base).integral(0.0, run);
        if run == r {
            longest = longest.max(r);
        }
        left -= run;
        base = base.shift(1);
    }
    (s / horizon, longest)
}
