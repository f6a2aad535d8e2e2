//! Finite-range potentials, their variations, and the reduction of a
//! two-sided potential to a cohomologous one-sided potential.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sft::{digits, parse_digits, PeriodicPoint, Sequence, TransitionMatrix};

/// Table sizes beyond this are refused rather than allocated.
const MAX_TABLE: usize = 1 << 24;

/// A real function of the coordinates `offset..offset + len` of a point.
///
/// Values are stored densely, indexed by the window word read as a base-`d`
/// number; inadmissible words hold NaN and are never read.
#[derive(Clone, Debug)]
pub struct FiniteRangePotential {
    sys: Arc<TransitionMatrix>,
    offset: i64,
    len: usize,
    values: Vec<f64>,
}

/// JSON form `{ "window": [p, q], "table": { "digits": value } }`: the
/// potential reads coordinates `-p..=q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub window: [i64; 2],
    pub table: BTreeMap<String, f64>,
}

fn table_size(d: usize, len: usize) -> Result<usize> {
    let mut n: usize = 1;
    for _ in 0..len {
        n = n
            .checked_mul(d)
            .filter(|&n| n <= MAX_TABLE)
            .ok_or_else(|| Error::Config(format!("window of length {len} over {d} symbols is too large")))?;
    }
    Ok(n)
}

impl FiniteRangePotential {
    /// Tabulates `f` on the admissible words of coordinates `offset..offset + len`.
    ///
    /// Panics if the table would be too large; see [`Self::try_from_fn`].
    pub fn from_fn(sys: &Arc<TransitionMatrix>, offset: i64, len: usize, f: impl FnMut(&[u8]) -> f64) -> Self {
        Self::try_from_fn(sys, offset, len, f).expect("potential window too large")
    }

    pub fn try_from_fn(
        sys: &Arc<TransitionMatrix>,
        offset: i64,
        len: usize,
        mut f: impl FnMut(&[u8]) -> f64,
    ) -> Result<Self> {
        let len = len.max(1);
        let size = table_size(sys.d(), len)?;
        let mut values = vec![f64::NAN; size];
        for w in sys.words(len) {
            values[index_of(sys.d(), &w)] = f(&w);
        }
        Ok(FiniteRangePotential { sys: Arc::clone(sys), offset, len, values })
    }

    pub fn constant(sys: &Arc<TransitionMatrix>, c: f64) -> Self {
        FiniteRangePotential::from_fn(sys, 0, 1, |_| c)
    }

    pub fn zero(sys: &Arc<TransitionMatrix>) -> Self {
        FiniteRangePotential::constant(sys, 0.0)
    }

    /// Indicator of the cylinder carrying `word` at coordinates `start..`.
    pub fn indicator(sys: &Arc<TransitionMatrix>, word: &[u8], start: i64) -> Result<Self> {
        sys.check_word(word)?;
        if word.is_empty() {
            return Err(Error::Config("indicator word must be nonempty".into()));
        }
        Ok(FiniteRangePotential::from_fn(sys, start, word.len(), |w| (w == word) as u8 as f64))
    }

    /// A potential of `x_0` alone.
    pub fn per_symbol(sys: &Arc<TransitionMatrix>, values: &[f64]) -> Self {
        assert_eq!(values.len(), sys.d());
        FiniteRangePotential::from_fn(sys, 0, 1, |w| values[w[0] as usize])
    }

    /// Reads the JSON table, insisting on exactly the admissible words.
    pub fn from_spec(sys: &Arc<TransitionMatrix>, spec: &PotentialSpec) -> Result<Self> {
        let [p, q] = spec.window;
        if p < 0 || q < 0 {
            return Err(Error::Config(format!("window [{p}, {q}] must be nonnegative")));
        }
        let len = (p + q + 1) as usize;
        let size = table_size(sys.d(), len)?;
        let mut values = vec![f64::NAN; size];
        for (key, &value) in &spec.table {
            let w = parse_digits(key)?;
            if w.len() != len {
                return Err(Error::BadWordKey { key: key.clone() });
            }
            if !sys.is_admissible(&w) {
                return Err(Error::ExtraEntry { word: key.clone() });
            }
            if !value.is_finite() {
                return Err(Error::Config(format!("value for {key} is not finite")));
            }
            values[index_of(sys.d(), &w)] = value;
        }
        for w in sys.words(len) {
            if values[index_of(sys.d(), &w)].is_nan() {
                return Err(Error::MissingEntry { word: digits(&w) });
            }
        }
        Ok(FiniteRangePotential { sys: Arc::clone(sys), offset: -p, len, values })
    }

    /// The JSON form, widened so the window contains coordinate 0.
    pub fn to_spec(&self) -> PotentialSpec {
        let w = self.widen(self.offset.min(0), self.last().max(0));
        let table = w.entries().map(|(word, v)| (digits(&word), v)).collect();
        PotentialSpec { window: [-w.offset, w.last()], table }
    }

    pub fn system(&self) -> &Arc<TransitionMatrix> {
        &self.sys
    }

    /// First coordinate read.
    pub fn offset(&self) -> i64 {
        self.offset
    }

    /// Last coordinate read.
    pub fn last(&self) -> i64 {
        self.offset + self.len as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Value on a window word.
    pub fn value(&self, word: &[u8]) -> f64 {
        debug_assert_eq!(word.len(), self.len);
        self.values[index_of(self.sys.d(), word)]
    }

    pub fn eval(&self, x: &impl Sequence) -> f64 {
        let d = self.sys.d();
        let mut idx = 0usize;
        for i in 0..self.len as i64 {
            idx = idx * d + x.symbol(self.offset + i) as usize;
        }
        self.values[idx]
    }

    /// `φ(σ^s x)`.
    pub fn eval_shifted(&self, x: &impl Sequence, s: i64) -> f64 {
        let d = self.sys.d();
        let mut idx = 0usize;
        for i in 0..self.len as i64 {
            idx = idx * d + x.symbol(self.offset + s + i) as usize;
        }
        self.values[idx]
    }

    /// Admissible window words with their values, lexicographically.
    pub fn entries(&self) -> impl Iterator<Item = (Vec<u8>, f64)> + '_ {
        self.sys.words(self.len).into_iter().map(move |w| {
            let v = self.value(&w);
            (w, v)
        })
    }

    /// The same function read through the larger window `lo..=hi`.
    pub fn widen(&self, lo: i64, hi: i64) -> Self {
        assert!(lo <= self.offset && hi >= self.last(), "widen must contain the window");
        let skip = (self.offset - lo) as usize;
        let len = self.len;
        FiniteRangePotential::from_fn(&self.sys, lo, (hi - lo + 1) as usize, |w| self.value(&w[skip..skip + len]))
    }

    /// `φ ∘ σ^s`.
    pub fn shifted(&self, s: i64) -> Self {
        let mut p = self.clone();
        p.offset += s;
        p
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut p = self.clone();
        for v in p.values.iter_mut().filter(|v| !v.is_nan()) {
            *v = f(*v);
        }
        p
    }

    /// `a·self + b·other` on the union of the windows.
    pub fn combine(&self, a: f64, other: &FiniteRangePotential, b: f64) -> Self {
        let lo = self.offset.min(other.offset);
        let hi = self.last().max(other.last());
        let x = self.widen(lo, hi);
        let y = other.widen(lo, hi);
        let mut out = x.clone();
        for (o, v) in out.values.iter_mut().zip(&y.values) {
            if !o.is_nan() {
                *o = a * *o + b * v;
            }
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.entries().map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.entries().map(|(_, v)| v).fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.entries().map(|(_, v)| v).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest pointwise difference, compared on a common window.
    pub fn max_abs_diff(&self, other: &FiniteRangePotential) -> f64 {
        let diff = self.combine(1.0, other, -1.0);
        diff.sup_norm()
    }

    /// `Σ_{j<n} φ(σ^j x)` on the periodic orbit `…www.www…`.
    pub fn cycle_sum(&self, cycle: &[u8]) -> Result<f64> {
        let x = PeriodicPoint::periodic(&self.sys, cycle)?;
        Ok((0..cycle.len() as i64).map(|j| self.eval_shifted(&x, j)).sum())
    }

    /// `var_n(φ)`: the largest difference of values at two points agreeing on
    /// coordinates `|k| ≤ n`, computed exactly from the table.
    pub fn variation(&self, n: usize) -> f64 {
        let n = n as i64;
        let (lo, hi) = (self.offset, self.last());
        let d = self.sys.d();
        let mut groups: BTreeMap<Vec<u8>, (f64, f64)> = BTreeMap::new();
        let mut push = |key: Vec<u8>, v: f64| {
            let e = groups.entry(key).or_insert((f64::INFINITY, f64::NEG_INFINITY));
            e.0 = e.0.min(v);
            e.1 = e.1.max(v);
        };
        let a = lo.max(-n);
        let b = hi.min(n);
        if a <= b {
            let (s, e) = ((a - lo) as usize, (b - lo) as usize);
            for (w, v) in self.entries() {
                push(w[s..=e].to_vec(), v);
            }
        } else if lo > n {
            // window right of the agreement block: gap of lo - n steps
            let reach = self.sys.power((lo - n) as usize);
            for (w, v) in self.entries() {
                for s in 0..d {
                    if reach[s][w[0] as usize] > 0.0 {
                        push(vec![s as u8], v);
                    }
                }
            }
        } else {
            let reach = self.sys.power((-n - hi) as usize);
            for (w, v) in self.entries() {
                for s in 0..d {
                    if reach[*w.last().unwrap() as usize][s] > 0.0 {
                        push(vec![s as u8], v);
                    }
                }
            }
        }
        groups.values().map(|(mn, mx)| mx - mn).fold(0.0, f64::max)
    }
}

fn index_of(d: usize, word: &[u8]) -> usize {
    word.iter().fold(0usize, |acc, &s| acc * d + s as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

/// A one-sided potential cohomologous to a given two-sided one.
///
/// For `Side::Plus`, `reduced` depends only on coordinates `> 0`, for
/// `Side::Minus` only on coordinates `≤ 0`, and in both cases
/// `reduced − φ = transfer − transfer ∘ σ`.
#[derive(Clone, Debug)]
pub struct CoboundaryCertificate {
    pub side: Side,
    pub reduced: FiniteRangePotential,
    pub transfer: FiniteRangePotential,
    /// Largest `|reduced − φ − transfer + transfer ∘ σ|` over the test points.
    pub residual: f64,
}

impl CoboundaryCertificate {
    /// Recomputes the identity at `x`, returning the signed defect.
    pub fn defect_at(&self, phi: &FiniteRangePotential, x: &impl Sequence) -> f64 {
        self.reduced.eval(x) - phi.eval(x) - self.transfer.eval(x) + self.transfer.eval_shifted(x, 1)
    }
}

/// Replaces `φ` by a cohomologous potential of one side of the coordinates.
///
/// The plus reduction swaps the coordinates `≤ 0` for the canonical past
/// leading into `x_1`; the minus reduction swaps the coordinates `≥ 0` for the
/// canonical future leaving `x_{-1}`. The transfer function is the telescoped
/// sum of the resulting changes, which has finitely many nonzero terms.
pub fn sinai_reduce(phi: &FiniteRangePotential, side: Side) -> CoboundaryCertificate {
    let sys = Arc::clone(&phi.sys);
    let (lo, hi) = (phi.offset, phi.last());
    let constant = phi.max_value() == phi.min_value();
    let (reduced, transfer) = match side {
        _ if constant => {
            let c = FiniteRangePotential::constant(&sys, phi.max_value());
            let c = if side == Side::Plus { c.shifted(1) } else { c };
            (c, FiniteRangePotential::zero(&sys))
        }
        Side::Plus if lo >= 1 => (phi.clone(), FiniteRangePotential::zero(&sys)),
        Side::Plus if lo == 0 => (phi.shifted(1), phi.map(|v| -v)),
        // the swap below needs at least one future coordinate in the window
        Side::Plus if hi < 1 => {
            let cert = sinai_reduce(&phi.widen(lo, 1), side);
            (cert.reduced, cert.transfer)
        }
        Side::Plus => {
            let t_hi = hi - lo;
            let gamma = FiniteRangePotential::from_fn(&sys, lo, (t_hi - lo + 1) as usize, |u| {
                let x = PeriodicPoint::from_block(&sys, u, lo).expect("admissible");
                let future = &u[(1 - lo) as usize..];
                let rx = PeriodicPoint::from_block(&sys, future, 1).expect("admissible");
                (0..=-lo).map(|j| phi.eval_shifted(&rx, j) - phi.eval_shifted(&x, j)).sum()
            });
            let plus = FiniteRangePotential::from_fn(&sys, 1, (t_hi + 1) as usize, |v| {
                let x = PeriodicPoint::from_block(&sys, v, 1).expect("admissible");
                phi.eval(&x) + gamma.eval(&x) - gamma.eval_shifted(&x, 1)
            });
            (plus, gamma)
        }
        Side::Minus if hi <= 0 => (phi.clone(), FiniteRangePotential::zero(&sys)),
        Side::Minus => {
            let t_lo = (lo - hi).min(-1);
            let gamma = FiniteRangePotential::from_fn(&sys, t_lo, (hi - 1 - t_lo + 1) as usize, |u| {
                let x = PeriodicPoint::from_block(&sys, u, t_lo).expect("admissible");
                let past = &u[..(-t_lo) as usize];
                let rx = PeriodicPoint::from_block(&sys, past, t_lo).expect("admissible");
                (1..=hi).map(|i| phi.eval_shifted(&x, -i) - phi.eval_shifted(&rx, -i)).sum()
            });
            let minus = FiniteRangePotential::from_fn(&sys, t_lo, (1 - t_lo) as usize, |v| {
                let x = PeriodicPoint::from_block(&sys, v, t_lo).expect("admissible");
                phi.eval(&x) + gamma.eval(&x) - gamma.eval_shifted(&x, 1)
            });
            (minus, gamma)
        }
    };
    let mut cert = CoboundaryCertificate { side, reduced, transfer, residual: 0.0 };
    cert.residual = certificate_residual(phi, &cert);
    cert
}

/// Evaluates the identity on every admissible word of a window covering all
/// three functions, each completed to a point by canonical cycles.
fn certificate_residual(phi: &FiniteRangePotential, cert: &CoboundaryCertificate) -> f64 {
    let sys = &phi.sys;
    let lo = phi.offset.min(cert.reduced.offset).min(cert.transfer.offset);
    let hi = phi.last().max(cert.reduced.last()).max(cert.transfer.last() + 1);
    sys.words((hi - lo + 1) as usize)
        .iter()
        .map(|w| {
            let x = PeriodicPoint::from_block(sys, w, lo).expect("admissible");
            cert.defect_at(phi, &x).abs()
        })
        .fold(0.0, f64::max)
}
