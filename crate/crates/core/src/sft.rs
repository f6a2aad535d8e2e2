//! Subshifts of finite type: transition matrices, admissible words, cylinders,
//! eventually periodic points and the decomposition of images of local
//! unstable sets.
//!
//! Symbols are `0..d` throughout. A point of the two-sided shift is modelled
//! by [`PeriodicPoint`]: a finite core flanked by a cycle repeated to the left
//! and a cycle repeated to the right. These points are dense, closed under the
//! shift, and every nonempty cylinder contains one.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that can be read coordinate by coordinate as a two-sided sequence.
pub trait Sequence {
    fn symbol(&self, i: i64) -> u8;
}

impl<S: Sequence + ?Sized> Sequence for &S {
    fn symbol(&self, i: i64) -> u8 {
        (**self).symbol(i)
    }
}

/// The view `σ^by x`, i.e. coordinate `i` reads `x_{i + by}`.
#[derive(Clone, Copy, Debug)]
pub struct Shifted<'a, S: ?Sized> {
    inner: &'a S,
    by: i64,
}

impl<'a, S: Sequence + ?Sized> Shifted<'a, S> {
    pub fn new(inner: &'a S, by: i64) -> Self {
        Shifted { inner, by }
    }
}

impl<S: Sequence + ?Sized> Sequence for Shifted<'_, S> {
    fn symbol(&self, i: i64) -> u8 {
        self.inner.symbol(i + self.by)
    }
}

/// A finite stretch of symbols placed at coordinates `origin..origin + len`.
///
/// Reading outside the stretch panics; callers size the stretch from the
/// windows they evaluate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteSequence {
    pub origin: i64,
    pub symbols: Vec<u8>,
}

impl FiniteSequence {
    pub fn new(origin: i64, symbols: Vec<u8>) -> Self {
        FiniteSequence { origin, symbols }
    }

    pub fn end(&self) -> i64 {
        self.origin + self.symbols.len() as i64
    }
}

impl Sequence for FiniteSequence {
    fn symbol(&self, i: i64) -> u8 {
        let k = i - self.origin;
        assert!(
            k >= 0 && (k as usize) < self.symbols.len(),
            "coordinate {i} outside materialized range {}..{}",
            self.origin,
            self.end()
        );
        self.symbols[k as usize]
    }
}

/// The 0/1 matrix `A` of a subshift of finite type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionMatrix {
    d: usize,
    allowed: Vec<bool>,
}

impl TransitionMatrix {
    /// Builds a matrix from integer rows, rejecting non-square input, entries
    /// other than 0/1 and symbols without a predecessor or successor.
    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::EmptyMatrix);
        }
        if d > u8::MAX as usize + 1 {
            return Err(Error::Config(format!("alphabet size {d} exceeds 256")));
        }
        let mut allowed = Vec::with_capacity(d * d);
        for (row, entries) in rows.iter().enumerate() {
            if entries.len() != d {
                return Err(Error::NotSquare { row, len: entries.len(), expected: d });
            }
            for (col, &value) in entries.iter().enumerate() {
                match value {
                    0 => allowed.push(false),
                    1 => allowed.push(true),
                    _ => return Err(Error::BadEntry { row, col, value }),
                }
            }
        }
        let m = TransitionMatrix { d, allowed };
        for a in 0..d {
            if !(0..d).any(|b| m.allowed[a * d + b]) {
                return Err(Error::DeadSymbol { symbol: a, direction: "successor" });
            }
            if !(0..d).any(|b| m.allowed[b * d + a]) {
                return Err(Error::DeadSymbol { symbol: a, direction: "predecessor" });
            }
        }
        Ok(m)
    }

    pub fn full_shift(d: usize) -> Self {
        assert!((1..=256).contains(&d));
        TransitionMatrix { d, allowed: vec![true; d * d] }
    }

    /// The golden-mean shift: symbols {0, 1}, the word `11` forbidden.
    pub fn golden_mean() -> Self {
        TransitionMatrix { d: 2, allowed: vec![true, true, true, false] }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.d).map(|a| (0..self.d).map(|b| self.allowed[a * self.d + b] as u8).collect()).collect()
    }

    #[inline]
    pub fn allows(&self, a: u8, b: u8) -> bool {
        self.allowed[a as usize * self.d + b as usize]
    }

    pub fn successors(&self, a: u8) -> impl Iterator<Item = u8> + '_ {
        (0..self.d as u8).filter(move |&b| self.allows(a, b))
    }

    pub fn predecessors(&self, a: u8) -> impl Iterator<Item = u8> + '_ {
        (0..self.d as u8).filter(move |&b| self.allows(b, a))
    }

    pub fn out_degree(&self, a: u8) -> usize {
        self.successors(a).count()
    }

    pub fn is_admissible(&self, word: &[u8]) -> bool {
        word.iter().all(|&s| (s as usize) < self.d) && word.windows(2).all(|w| self.allows(w[0], w[1]))
    }

    pub fn check_word(&self, word: &[u8]) -> Result<()> {
        if let Some(&s) = word.iter().find(|&&s| s as usize >= self.d) {
            return Err(Error::SymbolOutOfRange { symbol: s as usize, d: self.d });
        }
        if !self.is_admissible(word) {
            return Err(Error::Inadmissible { word: word.to_vec() });
        }
        Ok(())
    }

    /// All admissible words of length `len`, in lexicographic order.
    pub fn words(&self, len: usize) -> Vec<Vec<u8>> {
        if len == 0 {
            return vec![Vec::new()];
        }
        let mut out: Vec<Vec<u8>> = (0..self.d as u8).map(|a| vec![a]).collect();
        for _ in 1..len {
            out = out
                .into_iter()
                .flat_map(|w| {
                    let last = *w.last().unwrap();
                    self.successors(last)
                        .map(move |b| {
                            let mut v = w.clone();
                            v.push(b);
                            v
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
        }
        out
    }

    /// Admissible words `w_1..w_len` that may follow the symbol `a`.
    pub fn continuations(&self, a: u8, len: usize) -> Vec<Vec<u8>> {
        self.extensions(&[a], len + 1).into_iter().map(|w| w[1..].to_vec()).collect()
    }

    /// Admissible words of length `len` beginning with `prefix`.
    pub fn extensions(&self, prefix: &[u8], len: usize) -> Vec<Vec<u8>> {
        debug_assert!(self.is_admissible(prefix));
        if prefix.len() >= len {
            return vec![prefix[..len].to_vec()];
        }
        let mut out = vec![prefix.to_vec()];
        for _ in prefix.len()..len {
            out = out
                .into_iter()
                .flat_map(|w| {
                    let last = *w.last().unwrap();
                    self.successors(last)
                        .map(move |b| {
                            let mut v = w.clone();
                            v.push(b);
                            v
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
        }
        out
    }

    /// Admissible words of length `len` that may precede `suffix`, ending with it.
    pub fn left_extensions(&self, suffix: &[u8], len: usize) -> Vec<Vec<u8>> {
        if suffix.len() >= len {
            return vec![suffix[suffix.len() - len..].to_vec()];
        }
        let mut out = vec![suffix.to_vec()];
        for _ in suffix.len()..len {
            out = out
                .into_iter()
                .flat_map(|w| {
                    let first = w[0];
                    self.predecessors(first)
                        .map(move |b| {
                            let mut v = Vec::with_capacity(w.len() + 1);
                            v.push(b);
                            v.extend_from_slice(&w);
                            v
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
        }
        out.sort();
        out
    }

    /// Words `w` of length `n` such that the bi-infinite repetition of `w` is admissible.
    pub fn cycles(&self, n: usize) -> Vec<Vec<u8>> {
        self.words(n).into_iter().filter(|w| !w.is_empty() && self.allows(*w.last().unwrap(), w[0])).collect()
    }

    /// Path counts `A^m` as floating point numbers.
    pub fn power(&self, m: usize) -> Vec<Vec<f64>> {
        let d = self.d;
        let mut p: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| (i == j) as u8 as f64).collect()).collect();
        for _ in 0..m {
            let mut next = vec![vec![0.0; d]; d];
            for i in 0..d {
                for k in 0..d {
                    if p[i][k] == 0.0 {
                        continue;
                    }
                    for j in 0..d {
                        if self.allowed[k * d + j] {
                            next[i][j] += p[i][k];
                        }
                    }
                }
            }
            p = next;
        }
        p
    }

    /// Least `M >= 1` with every entry of `A^M` positive.
    ///
    /// The search stops at Wielandt's bound `d² - 2d + 2`; `None` means the
    /// matrix is not primitive.
    pub fn mixing_exponent(&self) -> Option<usize> {
        let d = self.d;
        let cap = d * d - 2 * d + 2;
        let mut reach: Vec<bool> = self.allowed.clone();
        for m in 1..=cap.max(1) {
            if reach.iter().all(|&r| r) {
                return Some(m);
            }
            let mut next = vec![false; d * d];
            for i in 0..d {
                for k in 0..d {
                    if reach[i * d + k] {
                        for j in 0..d {
                            if self.allowed[k * d + j] {
                                next[i * d + j] = true;
                            }
                        }
                    }
                }
            }
            reach = next;
        }
        None
    }

    /// Errors with [`Error::NotMixing`] unless the matrix is primitive.
    pub fn require_mixing(&self) -> Result<usize> {
        self.mixing_exponent().ok_or_else(|| Error::NotMixing {
            reason: format!("no power A^M with M <= {} has all entries positive", self.d * self.d - 2 * self.d + 2),
        })
    }

    /// Shortest admissible cycle through `a`, lexicographically least among
    /// the shortest, returned starting at `a`.
    pub fn canonical_cycle(&self, a: u8) -> Vec<u8> {
        for len in 1..=self.d {
            let found = self.extensions(&[a], len).into_iter().find(|w| self.allows(*w.last().unwrap(), a));
            if let Some(w) = found {
                return w;
            }
        }
        unreachable!("every symbol of an irreducible matrix lies on a cycle")
    }

    /// Canonical right-infinite continuation after `a`, as a cycle to repeat.
    fn future_cycle_after(&self, a: u8) -> Vec<u8> {
        let c = self.canonical_cycle(a);
        let mut f = c[1..].to_vec();
        f.push(a);
        f
    }

    /// Canonical left-infinite past leading into `a`, as a cycle to repeat.
    fn past_cycle_before(&self, a: u8) -> Vec<u8> {
        // repeated leftward, the cycle's last symbol sits just before `a`
        self.canonical_cycle(a)
    }
}

impl fmt::Display for TransitionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.rows() {
            let s: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", s.join(" "))?;
        }
        Ok(())
    }
}

/// A finite word placed at coordinates `start..start + len`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word {
    #[serde(rename = "word")]
    pub symbols: Vec<u8>,
    pub start: i64,
}

impl Word {
    pub fn new(symbols: Vec<u8>, start: i64) -> Self {
        Word { symbols, start }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// One past the last coordinate.
    pub fn end(&self) -> i64 {
        self.start + self.symbols.len() as i64
    }

    pub fn digits(&self) -> String {
        digits(&self.symbols)
    }
}

/// Renders a word as a digit string (`[0, 1, 1]` becomes `"011"`); symbols
/// past 9 are separated by dots.
pub fn digits(word: &[u8]) -> String {
    if word.iter().all(|&s| s < 10) {
        word.iter().map(|&s| char::from(b'0' + s)).collect()
    } else {
        word.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(".")
    }
}

/// Parses the output of [`digits`].
pub fn parse_digits(key: &str) -> Result<Vec<u8>> {
    let bad = || Error::BadWordKey { key: key.to_string() };
    if key.contains('.') {
        key.split('.').map(|p| p.parse::<u8>().map_err(|_| bad())).collect()
    } else {
        key.chars().map(|c| c.to_digit(10).map(|v| v as u8).ok_or_else(bad)).collect()
    }
}

/// The rectangle `C(a_start … a_end)_start`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cylinder {
    word: Word,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Future,
    Past,
}

impl Cylinder {
    /// Rejects inadmissible words. Under the no-dead-symbol invariant an
    /// admissible word always has a nonempty cylinder.
    pub fn new(sys: &TransitionMatrix, symbols: Vec<u8>, start: i64) -> Result<Self> {
        sys.check_word(&symbols)?;
        Ok(Cylinder { word: Word::new(symbols, start) })
    }

    pub fn from_word(sys: &TransitionMatrix, word: Word) -> Result<Self> {
        Cylinder::new(sys, word.symbols, word.start)
    }

    pub fn word(&self) -> &Word {
        &self.word
    }

    pub fn symbols(&self) -> &[u8] {
        &self.word.symbols
    }

    pub fn start(&self) -> i64 {
        self.word.start
    }

    pub fn contains(&self, x: &impl Sequence) -> bool {
        self.word.symbols.iter().enumerate().all(|(k, &s)| x.symbol(self.word.start + k as i64) == s)
    }

    /// One-symbol refinements in the given direction; they partition `self`.
    pub fn children(&self, sys: &TransitionMatrix, direction: Direction) -> Vec<Cylinder> {
        let w = &self.word;
        match direction {
            Direction::Future => {
                let candidates: Vec<u8> = match w.symbols.last() {
                    Some(&last) => sys.successors(last).collect(),
                    None => (0..sys.d() as u8).collect(),
                };
                candidates
                    .into_iter()
                    .map(|b| {
                        let mut s = w.symbols.clone();
                        s.push(b);
                        Cylinder { word: Word::new(s, w.start) }
                    })
                    .collect()
            }
            Direction::Past => {
                let candidates: Vec<u8> = match w.symbols.first() {
                    Some(&first) => sys.predecessors(first).collect(),
                    None => (0..sys.d() as u8).collect(),
                };
                candidates
                    .into_iter()
                    .map(|b| {
                        let mut s = Vec::with_capacity(w.symbols.len() + 1);
                        s.push(b);
                        s.extend_from_slice(&w.symbols);
                        Cylinder { word: Word::new(s, w.start - 1) }
                    })
                    .collect()
            }
        }
    }
}

/// Refinement of a cylinder by one symbol on the given side.
pub fn cylinder_children(sys: &TransitionMatrix, c: &Cylinder, direction: Direction) -> Vec<Cylinder> {
    c.children(sys, direction)
}

/// An eventually periodic two-sided sequence.
///
/// `core` occupies coordinates `start..start + core.len()`; `past_cycle` is
/// repeated leftward with its last symbol at `start - 1`, and `future_cycle`
/// is repeated rightward from `start + core.len()`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PeriodicPoint {
    d: usize,
    past_cycle: Vec<u8>,
    core: Vec<u8>,
    future_cycle: Vec<u8>,
    start: i64,
}

impl PeriodicPoint {
    pub fn new(
        sys: &TransitionMatrix,
        past_cycle: Vec<u8>,
        core: Vec<u8>,
        start: i64,
        future_cycle: Vec<u8>,
    ) -> Result<Self> {
        if past_cycle.is_empty() || future_cycle.is_empty() {
            return Err(Error::Config("periodic point cycles must be nonempty".into()));
        }
        sys.check_word(&past_cycle)?;
        sys.check_word(&future_cycle)?;
        sys.check_word(&core)?;
        let p_last = *past_cycle.last().unwrap();
        if !sys.allows(p_last, past_cycle[0]) {
            return Err(Error::Inadmissible { word: vec![p_last, past_cycle[0]] });
        }
        let f_last = *future_cycle.last().unwrap();
        if !sys.allows(f_last, future_cycle[0]) {
            return Err(Error::Inadmissible { word: vec![f_last, future_cycle[0]] });
        }
        let first = core.first().copied().unwrap_or(future_cycle[0]);
        if !sys.allows(p_last, first) {
            return Err(Error::Inadmissible { word: vec![p_last, first] });
        }
        if let Some(&last) = core.last() {
            if !sys.allows(last, future_cycle[0]) {
                return Err(Error::Inadmissible { word: vec![last, future_cycle[0]] });
            }
        }
        Ok(PeriodicPoint { d: sys.d(), past_cycle, core, future_cycle, start })
    }

    /// The periodic orbit point `…www.www…` with `w_0` at coordinate 0.
    pub fn periodic(sys: &TransitionMatrix, cycle: &[u8]) -> Result<Self> {
        PeriodicPoint::new(sys, cycle.to_vec(), Vec::new(), 0, cycle.to_vec())
    }

    /// A point carrying `block` at coordinates `first..first + len`, completed
    /// by the canonical past and future cycles.
    pub fn from_block(sys: &TransitionMatrix, block: &[u8], first: i64) -> Result<Self> {
        if block.is_empty() {
            return Err(Error::Config("block must be nonempty".into()));
        }
        sys.check_word(block)?;
        let past = sys.past_cycle_before(block[0]);
        let future = sys.future_cycle_after(*block.last().unwrap());
        PeriodicPoint::new(sys, past, block.to_vec(), first, future)
    }

    /// A point whose coordinates `-len+1..=0` are `past`.
    pub fn with_past(sys: &TransitionMatrix, past: &[u8]) -> Result<Self> {
        PeriodicPoint::from_block(sys, past, 1 - past.len() as i64)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn past_cycle(&self) -> &[u8] {
        &self.past_cycle
    }

    pub fn core(&self) -> &[u8] {
        &self.core
    }

    pub fn future_cycle(&self) -> &[u8] {
        &self.future_cycle
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    fn core_end(&self) -> i64 {
        self.start + self.core.len() as i64
    }

    /// `σ^n` of this point.
    pub fn shift(&self, n: i64) -> Self {
        let mut p = self.clone();
        p.start -= n;
        p
    }

    /// Symbols on coordinates `lo..=hi`.
    pub fn window(&self, lo: i64, hi: i64) -> Vec<u8> {
        (lo..=hi).map(|i| self.symbol(i)).collect()
    }

    /// Coordinates `-depth+1..=0`.
    pub fn past_word(&self, depth: usize) -> Vec<u8> {
        self.window(1 - depth as i64, 0)
    }

    /// Coordinates `1..=len`.
    pub fn future_word(&self, len: usize) -> Vec<u8> {
        self.window(1, len as i64)
    }

    /// The point that agrees with `self` before coordinate `from`, carries
    /// `word` from `from` on, and then follows the canonical future.
    pub fn splice(&self, sys: &TransitionMatrix, from: i64, word: &[u8]) -> Result<Self> {
        let prev = self.symbol(from - 1);
        if let Some(&w0) = word.first() {
            if !sys.allows(prev, w0) {
                return Err(Error::Inadmissible { word: vec![prev, w0] });
            }
        }
        sys.check_word(word)?;
        let new_start = self.start.min(from);
        let l = self.past_cycle.len() as i64;
        let past: Vec<u8> = (0..l).map(|j| self.symbol(new_start - l + j)).collect();
        let mut core: Vec<u8> = (new_start..from).map(|i| self.symbol(i)).collect();
        core.extend_from_slice(word);
        let last = core.last().copied().unwrap_or(prev);
        let future = sys.future_cycle_after(last);
        Ok(PeriodicPoint { d: self.d, past_cycle: past, core, future_cycle: future, start: new_start })
    }

    /// Largest coordinate magnitude beyond which both flanks are purely periodic.
    fn horizon(&self) -> i64 {
        self.start.abs().max(self.core_end().abs()) + 1
    }

    /// True iff the two points agree at every coordinate.
    pub fn same_point(&self, other: &PeriodicPoint) -> bool {
        let bound = self.agreement_bound(other);
        (-bound..=bound).all(|i| self.symbol(i) == other.symbol(i))
    }

    fn agreement_bound(&self, other: &PeriodicPoint) -> i64 {
        let l = lcm(
            lcm(self.past_cycle.len(), other.past_cycle.len()),
            lcm(self.future_cycle.len(), other.future_cycle.len()),
        );
        self.horizon().max(other.horizon()) + l as i64
    }

    /// Eventual period of the right flank, used for orbit enumeration.
    pub fn is_periodic_with(&self, n: usize) -> bool {
        let bound = self.horizon() + n as i64 + self.future_cycle.len() as i64 + self.past_cycle.len() as i64;
        (-bound..=bound).all(|i| self.symbol(i) == self.symbol(i + n as i64))
    }
}

impl Sequence for PeriodicPoint {
    fn symbol(&self, i: i64) -> u8 {
        if i < self.start {
            let k = (self.start - i - 1) as usize % self.past_cycle.len();
            self.past_cycle[self.past_cycle.len() - 1 - k]
        } else if i < self.core_end() {
            self.core[(i - self.start) as usize]
        } else {
            let k = (i - self.core_end()) as usize % self.future_cycle.len();
            self.future_cycle[k]
        }
    }
}

impl fmt::Display for PeriodicPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let past = digits(&self.window(-6, 0));
        let fut = digits(&self.window(1, 6));
        write!(f, "…{past}.{fut}…")
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Metric `2^{-(N+1)}` where `N` is the largest half-width of a symmetric
/// rectangle containing both points; `N = -1` (distance 1) when coordinate 0
/// already disagrees.
pub fn distance(x: &PeriodicPoint, y: &PeriodicPoint) -> Result<f64> {
    if x.d != y.d {
        return Err(Error::AlphabetMismatch { left: x.d, right: y.d });
    }
    let bound = x.agreement_bound(y);
    for n in 0..=bound {
        if x.symbol(n) != y.symbol(n) || x.symbol(-n) != y.symbol(-n) {
            return Ok(0.5f64.powi(n as i32));
        }
    }
    Ok(0.0)
}

/// Representatives `y^i` with `σ^m(W^u_loc(x))` the disjoint union of the
/// `W^u_loc(y^i)`.
///
/// Each `y^i` carries the past of `x` shifted by `m` and one admissible word
/// of length `m` on coordinates `-m+1..=0`; the words are in lexicographic
/// order, matching [`TransitionMatrix::continuations`].
pub fn sigma_m_unstable_decomposition(sys: &TransitionMatrix, x: &PeriodicPoint, m: usize) -> Vec<PeriodicPoint> {
    sys.continuations(x.symbol(0), m)
        .into_iter()
        .map(|w| x.splice(sys, 1, &w).expect("continuation is admissible").shift(m as i64))
        .collect()
}

/// Share of decomposition pieces that meet a cylinder, with a constructive
/// lower bound valid for every base point and every `m > M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HitFraction {
    pub fraction: f64,
    pub bound: f64,
}

/// Lower bound `min_e A^M[e][a] / Σ_c A^M[e][c]` on the share of `m`-step
/// continuations ending in `a`, for any `m ≥ M`.
pub fn hit_bound(sys: &TransitionMatrix, mixing: usize, a: u8) -> f64 {
    let p = sys.power(mixing);
    (0..sys.d()).map(|e| p[e][a as usize] / p[e].iter().sum::<f64>()).fold(f64::INFINITY, f64::min)
}

/// Fraction of the pieces `W^u_loc(y^i)` of `σ^m(W^u_loc(x))` that meet
/// `U = C(a_0…a_l)_0`, together with the bound from [`hit_bound`].
pub fn cylinder_hit_fraction(sys: &TransitionMatrix, x: &PeriodicPoint, m: usize, u: &Cylinder) -> Result<HitFraction> {
    let mixing = sys.require_mixing()?;
    if m <= mixing {
        return Err(Error::ExponentTooSmall { m, mixing });
    }
    if u.start() != 0 || u.symbols().is_empty() {
        return Err(Error::CylinderStart { start: u.start() });
    }
    let a0 = u.symbols()[0];
    // normalized path-count propagation from x_0
    let d = sys.d();
    let mut dist = vec![0.0; d];
    dist[x.symbol(0) as usize] = 1.0;
    for _ in 0..m {
        let mut next = vec![0.0; d];
        for a in 0..d {
            if dist[a] > 0.0 {
                for b in sys.successors(a as u8) {
                    next[b as usize] += dist[a];
                }
            }
        }
        let s: f64 = next.iter().sum();
        dist = next.into_iter().map(|v| v / s).collect();
    }
    Ok(HitFraction { fraction: dist[a0 as usize], bound: hit_bound(sys, mixing, a0) })
}

/// A random point with an admissible random window on `-radius..=radius`.
pub fn random_point<R: Rng + ?Sized>(sys: &TransitionMatrix, rng: &mut R, radius: usize) -> PeriodicPoint {
    let len = 2 * radius + 1;
    let mut w = vec![rng.random_range(0..sys.d() as u8)];
    while w.len() < len {
        let succ: Vec<u8> = sys.successors(*w.last().unwrap()).collect();
        w.push(succ[rng.random_range(0..succ.len())]);
    }
    PeriodicPoint::from_block(sys, &w, -(radius as i64)).expect("random walk is admissible")
}
