//! The transfer operator of a one-sided finite-range potential, its leading
//! eigendata, the normalized potential and the equilibrium state as an
//! explicit higher-order Markov measure.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::{sinai_reduce, FiniteRangePotential, Side};
use crate::sft::{Cylinder, TransitionMatrix};

pub const DEFAULT_TOL: f64 = 1e-13;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Block space of a one-sided potential `φ(x_1 … x_k)`.
///
/// Functions of `x_1 … x_b` (`b = k − 1`) form an invariant subspace of the
/// transfer operator; on it the operator is the matrix
/// `L[β][β'] = e^{φ(aβ)}` where `β' = (aβ)[..b]`, over symbols `a → β_0`.
#[derive(Clone, Debug)]
pub struct TransferOperator {
    sys: Arc<TransitionMatrix>,
    phi: FiniteRangePotential,
    b: usize,
    blocks: Vec<Vec<u8>>,
    index: Vec<usize>,
    /// Row `β`: `(β', a, weight)` per admissible preimage symbol.
    rows: Vec<Vec<(usize, u8, f64)>>,
}

fn block_key(d: usize, w: &[u8]) -> usize {
    w.iter().fold(0usize, |acc, &s| acc * d + s as usize)
}

impl TransferOperator {
    /// Builds the operator for a potential reading coordinates `1..=k`.
    ///
    /// A potential of `x_1` alone is widened to `x_1 x_2` so that blocks
    /// always have length at least one.
    pub fn build(phi_plus: &FiniteRangePotential) -> Result<Self> {
        if phi_plus.offset() != 1 {
            return Err(Error::Config(format!(
                "transfer operator needs a potential starting at coordinate 1, got {}",
                phi_plus.offset()
            )));
        }
        let phi = if phi_plus.len() < 2 { phi_plus.widen(1, 2) } else { phi_plus.clone() };
        let sys = Arc::clone(phi.system());
        let b = phi.len() - 1;
        let d = sys.d();
        let blocks = sys.words(b);
        if blocks.is_empty() {
            return Err(Error::EmptyBlockSpace);
        }
        let mut index = vec![usize::MAX; d.pow(b as u32)];
        for (i, w) in blocks.iter().enumerate() {
            index[block_key(d, w)] = i;
        }
        let rows = blocks
            .iter()
            .map(|beta| {
                sys.predecessors(beta[0])
                    .map(|a| {
                        let mut word = Vec::with_capacity(b + 1);
                        word.push(a);
                        word.extend_from_slice(beta);
                        let target = index[block_key(d, &word[..b])];
                        (target, a, phi.value(&word).exp())
                    })
                    .collect()
            })
            .collect();
        Ok(TransferOperator { sys, phi, b, blocks, index, rows })
    }

    pub fn block_len(&self) -> usize {
        self.b
    }

    pub fn blocks(&self) -> &[Vec<u8>] {
        &self.blocks
    }

    pub fn block_index(&self, w: &[u8]) -> Option<usize> {
        let i = self.index[block_key(self.sys.d(), w)];
        (i != usize::MAX).then_some(i)
    }

    /// The potential as widened for the operator.
    pub fn potential(&self) -> &FiniteRangePotential {
        &self.phi
    }

    /// Dense matrix, rows and columns in block order.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        let n = self.blocks.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, _, w) in row {
                m[i][j] += w;
            }
        }
        m
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(j, _, w)| w * f[j]).sum()).collect()
    }

    pub fn apply_adjoint(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, _, w) in row {
                out[j] += w * g[i];
            }
        }
        out
    }
}

/// Leading eigendata of a transfer operator.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralData {
    pub lambda: f64,
    pub pressure: f64,
    /// Right eigenvector `h`, with `⟨ν, h⟩ = 1`.
    pub eigenfunction: Vec<f64>,
    /// Left eigenvector `ν`, summing to 1.
    pub eigenmeasure: Vec<f64>,
    /// `|λ_2| / λ`, estimated by power iteration on the deflated matrix.
    pub gap: f64,
    pub residual_right: f64,
    pub residual_left: f64,
    pub iterations: usize,
}

/// Power iteration from the all-ones vector until the Collatz–Wielandt
/// bounds on λ are within `tol·λ`.
fn power_iterate(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>, usize)> {
    let mut v = vec![1.0; n];
    let mut spread = f64::INFINITY;
    for it in 1..=max_iter {
        let w = apply(&v);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (a, b) in w.iter().zip(&v) {
            let r = a / b;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let norm = w.iter().cloned().fold(0.0, f64::max);
        if !(norm > 0.0) || !norm.is_finite() || !(lo > 0.0) {
            // a zero coordinate means the iterate left the positive cone
            if it > n + 1 {
                return Err(Error::NoConvergence { iterations: it, spread });
            }
        }
        v = w.into_iter().map(|x| x / norm).collect();
        let lambda = 0.5 * (lo + hi);
        spread = hi - lo;
        if spread.is_finite() && spread < tol * lambda {
            return Ok((lambda, v, it));
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, spread })
}

/// Spectral radius of `v ↦ Lv − λ h ⟨ν, v⟩`, relative to λ.
fn deflated_ratio(op: &TransferOperator, lambda: f64, h: &[f64], nu: &[f64]) -> f64 {
    let n = h.len();
    if n == 1 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + i as f64 / n as f64)).collect();
    let burn = 200;
    let steps = 400;
    let mut log_growth = 0.0;
    for it in 0..burn + steps {
        let lv = op.apply(&v);
        let c: f64 = nu.iter().zip(&v).map(|(a, b)| a * b).sum();
        let w: Vec<f64> = lv.iter().zip(h).map(|(x, hi)| x - lambda * c * hi).collect();
        let norm = w.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let prev = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if !(norm > 1e-300 * prev.max(1e-300)) || norm < 1e-250 {
            return 0.0;
        }
        if it >= burn {
            log_growth += (norm / prev).ln();
        }
        v = w.into_iter().map(|x| x / norm).collect();
    }
    ((log_growth / steps as f64).exp() / lambda).min(1.0)
}

/// Leading eigenvalue, eigenfunction and eigenmeasure of the operator.
pub fn leading_eigendata(op: &TransferOperator, tol: f64) -> Result<SpectralData> {
    leading_eigendata_capped(op, tol, DEFAULT_MAX_ITER)
}

pub fn leading_eigendata_capped(op: &TransferOperator, tol: f64, max_iter: usize) -> Result<SpectralData> {
    let n = op.blocks.len();
    let (lambda, mut h, it_r) = power_iterate(|v| op.apply(v), n, tol, max_iter)?;
    let (lambda_l, mut nu, it_l) = power_iterate(|v| op.apply_adjoint(v), n, tol, max_iter)?;
    let s: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|x| *x /= s);
    let pair: f64 = nu.iter().zip(&h).map(|(a, b)| a * b).sum();
    h.iter_mut().for_each(|x| *x /= pair);
    let lambda = 0.5 * (lambda + lambda_l);

    let lh = op.apply(&h);
    let residual_right = lh.iter().zip(&h).map(|(a, b)| (a - lambda * b).abs()).fold(0.0, f64::max) / lambda;
    let ln = op.apply_adjoint(&nu);
    let residual_left = ln.iter().zip(&nu).map(|(a, b)| (a - lambda * b).abs()).sum::<f64>() / lambda;
    let gap = deflated_ratio(op, lambda, &h, &nu);
    Ok(SpectralData {
        lambda,
        pressure: lambda.ln(),
        eigenfunction: h,
        eigenmeasure: nu,
        gap,
        residual_right,
        residual_left,
        iterations: it_r.max(it_l),
    })
}

/// `ψ = φ + log h − log h∘σ − log λ`, with `Σ_{σy=x} e^{ψ(y)} = 1`.
pub fn normalize(op: &TransferOperator, spectral: &SpectralData) -> FiniteRangePotential {
    let phi = &op.phi;
    let b = op.b;
    let lnl = spectral.lambda.ln();
    FiniteRangePotential::from_fn(phi.system(), 1, b + 1, |w| {
        let h_new = spectral.eigenfunction[op.block_index(&w[..b]).unwrap()];
        let h_old = spectral.eigenfunction[op.block_index(&w[1..]).unwrap()];
        phi.value(w) + h_new.ln() - h_old.ln() - lnl
    })
}

/// A potential cohomologous to `phi` reading coordinates `1..=k`, and the
/// transfer function `γ` with `φ^+ − φ = γ − γ∘σ`.
pub fn one_sided(phi: &FiniteRangePotential) -> (FiniteRangePotential, FiniteRangePotential) {
    let cert = sinai_reduce(phi, Side::Plus);
    let reduced = cert.reduced;
    let m = reduced.offset() - 1;
    if m == 0 {
        return (reduced, cert.transfer);
    }
    // φ^+ ∘ σ^m = reduced, telescoped back to coordinate 1
    let plus = reduced.shifted(-m);
    let mut g = FiniteRangePotential::zero(phi.system());
    for i in 0..m {
        g = g.combine(1.0, &plus.shifted(i), 1.0);
    }
    (plus, cert.transfer.combine(1.0, &g, 1.0))
}

/// The equilibrium state of a finite-range potential.
#[derive(Clone, Debug)]
pub struct GibbsMeasure {
    sys: Arc<TransitionMatrix>,
    potential: FiniteRangePotential,
    phi_plus: FiniteRangePotential,
    transfer_fn: FiniteRangePotential,
    op: TransferOperator,
    spectral: SpectralData,
    psi: FiniteRangePotential,
    /// Stationary law of `b`-blocks, `h·ν`.
    block_mass: Vec<f64>,
    /// `P(x_{n+1} = a | x_{n-b+1} … x_n = β)`, row-major by block then symbol.
    kernel: Vec<f64>,
}

impl GibbsMeasure {
    pub fn new(phi: &FiniteRangePotential) -> Result<Self> {
        GibbsMeasure::with_tol(phi, DEFAULT_TOL)
    }

    pub fn with_tol(phi: &FiniteRangePotential, tol: f64) -> Result<Self> {
        let sys = Arc::clone(phi.system());
        sys.require_mixing()?;
        let (phi_plus, transfer_fn) = one_sided(phi);
        let op = TransferOperator::build(&phi_plus)?;
        let spectral = leading_eigendata(&op, tol)?;
        let psi = normalize(&op, &spectral);
        let block_mass: Vec<f64> =
            spectral.eigenfunction.iter().zip(&spectral.eigenmeasure).map(|(h, n)| h * n).collect();
        let mut g = GibbsMeasure {
            sys,
            potential: phi.clone(),
            phi_plus: op.phi.clone(),
            transfer_fn,
            op,
            spectral,
            psi,
            block_mass,
            kernel: Vec::new(),
        };
        let d = g.sys.d();
        let mut kernel = vec![0.0; g.op.blocks.len() * d];
        for (i, beta) in g.op.blocks.iter().enumerate() {
            let base = g.cylinder_mass_word(beta);
            for a in g.sys.successors(*beta.last().unwrap()) {
                let mut w = beta.clone();
                w.push(a);
                kernel[i * d + a as usize] = g.cylinder_mass_word(&w) / base;
            }
        }
        g.kernel = kernel;
        Ok(g)
    }

    pub fn system(&self) -> &Arc<TransitionMatrix> {
        &self.sys
    }

    pub fn potential(&self) -> &FiniteRangePotential {
        &self.potential
    }

    /// The one-sided potential the operator was built from (coordinates `1..=k`).
    pub fn phi_plus(&self) -> &FiniteRangePotential {
        &self.phi_plus
    }

    /// `γ` with `φ^+ − φ = γ − γ∘σ`.
    pub fn transfer_function(&self) -> &FiniteRangePotential {
        &self.transfer_fn
    }

    pub fn operator(&self) -> &TransferOperator {
        &self.op
    }

    pub fn spectral(&self) -> &SpectralData {
        &self.spectral
    }

    pub fn pressure(&self) -> f64 {
        self.spectral.pressure
    }

    /// The normalized potential `ψ` on coordinates `1..=b+1`.
    pub fn normalized(&self) -> &FiniteRangePotential {
        &self.psi
    }

    pub fn block_len(&self) -> usize {
        self.op.b
    }

    /// Eigenfunction value on the block `x_1 … x_b`.
    pub fn eigenfunction_at(&self, block: &[u8]) -> f64 {
        self.spectral.eigenfunction[self.op.block_index(block).expect("admissible block")]
    }

    pub fn block_mass(&self) -> &[f64] {
        &self.block_mass
    }

    /// Mass of the cylinder of `word` at any position (the measure is shift
    /// invariant); zero for inadmissible words.
    pub fn cylinder_mass_word(&self, word: &[u8]) -> f64 {
        if word.is_empty() {
            return 1.0;
        }
        if !self.sys.is_admissible(word) {
            return 0.0;
        }
        let b = self.op.b;
        let k = b + 1;
        let n = word.len();
        let last = *word.last().unwrap();
        let mut s = word.to_vec();
        s.resize(n + b, 0);
        let mut total = 0.0;
        for (i, beta) in self.op.blocks.iter().enumerate() {
            if !self.sys.allows(last, beta[0]) {
                continue;
            }
            s[n..].copy_from_slice(beta);
            let sum: f64 = (0..n).map(|j| self.psi.value(&s[j..j + k])).sum();
            total += self.block_mass[i] * sum.exp();
        }
        total
    }

    pub fn cylinder_mass(&self, c: &Cylinder) -> f64 {
        self.cylinder_mass_word(c.symbols())
    }

    /// `P(next = a | preceding symbols)`; the context must hold at least `b`
    /// symbols, of which the last `b` are used.
    pub fn next_symbol_prob(&self, context: &[u8], a: u8) -> f64 {
        let b = self.op.b;
        let block = &context[context.len() - b..];
        let i = self.op.block_index(block).expect("admissible context");
        self.kernel[i * self.sys.d() + a as usize]
    }

    /// Row of the forward kernel for the block with index `i`.
    pub fn kernel_row(&self, i: usize) -> &[f64] {
        let d = self.sys.d();
        &self.kernel[i * d..(i + 1) * d]
    }

    /// `∫ f dμ` as a finite sum over the window words of `f`.
    pub fn integrate(&self, f: &FiniteRangePotential) -> f64 {
        f.entries().map(|(w, v)| v * self.cylinder_mass_word(&w)).sum()
    }

    /// Masses of all admissible words of length `len`, lexicographically.
    pub fn word_law(&self, len: usize) -> Vec<(Vec<u8>, f64)> {
        self.sys
            .words(len)
            .into_iter()
            .map(|w| {
                let m = self.cylinder_mass_word(&w);
                (w, m)
            })
            .collect()
    }

    /// Draws a word of length `len` from the measure by inverse CDF.
    pub fn sample_word<R: Rng + ?Sized>(&self, law: &[(Vec<u8>, f64)], rng: &mut R) -> Vec<u8> {
        let u: f64 = rng.random::<f64>();
        let mut acc = 0.0;
        for (w, m) in law {
            acc += m;
            if u < acc {
                return w.clone();
            }
        }
        law.last().expect("nonempty law").0.clone()
    }

    /// Entropy rate of the measure and `|P − h_μ − ∫φ dμ|`.
    pub fn entropy_and_variational_check(&self) -> (f64, f64) {
        let b = self.op.b;
        let entropy: f64 = self
            .sys
            .words(b + 1)
            .iter()
            .map(|w| {
                let m = self.cylinder_mass_word(w);
                let p = m / self.cylinder_mass_word(&w[..b]);
                if m > 0.0 {
                    -m * p.ln()
                } else {
                    0.0
                }
            })
            .sum();
        let integral = self.integrate(&self.potential);
        (entropy, (self.pressure() - entropy - integral).abs())
    }

    /// A constant `K` with `K^{-1} ≤ μ[w] / exp(Σ_{j<n} ψ(σ^j x)) ≤ K` for every
    /// admissible word `w` and every `x` in its cylinder.
    ///
    /// Only the last `b` Birkhoff terms depend on the continuation past the
    /// word; `V` bounds their spread.
    pub fn gibbs_constant(&self) -> f64 {
        let b = self.op.b;
        let k = b + 1;
        let mut v = 0.0f64;
        for n in 1..=b {
            for w in self.sys.words(n) {
                let last = *w.last().unwrap();
                let mut sums = Vec::new();
                for beta in &self.op.blocks {
                    if !self.sys.allows(last, beta[0]) {
                        continue;
                    }
                    let mut s = w.clone();
                    s.extend_from_slice(beta);
                    // terms whose window reaches past the word
                    let first = n.saturating_sub(b);
                    sums.push((first..n).map(|j| self.psi.value(&s[j..j + k])).sum::<f64>());
                }
                let hi = sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = sums.iter().cloned().fold(f64::INFINITY, f64::min);
                v = v.max(hi - lo);
            }
        }
        let mut min_entry = f64::INFINITY;
        for a in 0..self.sys.d() as u8 {
            let s: f64 = self
                .op
                .blocks
                .iter()
                .zip(&self.block_mass)
                .filter(|(beta, _)| self.sys.allows(a, beta[0]))
                .map(|(_, m)| m)
                .sum();
            min_entry = min_entry.min(s);
        }
        v.exp() / min_entry
    }
}
