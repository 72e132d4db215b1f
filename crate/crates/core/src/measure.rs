//! Product measures on sequence spaces.
//!
//! A [`ProductMeasure`] is a lazily evaluated family `n -> marginal(n)` on a
//! finite alphabet; a [`DensityFamily`] is the analogous family of
//! piecewise-constant densities on a real interval. Both implement
//! [`MarginalFamily`], which is all the Radon–Nikodym diagnostics need.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::sum::{symmetric_partial_sum, PartialSum};

/// Index of a symbol in a finite alphabet.
pub type Symbol = u8;

const NORMALIZATION_TOL: f64 = 1e-12;

/// Inclusive range of integer indices `first..=last`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexRange {
    pub first: i64,
    pub last: i64,
}

impl IndexRange {
    pub fn new(first: i64, last: i64) -> Self {
        Self { first, last }
    }

    /// `len` indices starting at `first`.
    pub fn with_len(first: i64, len: usize) -> Self {
        Self {
            first,
            last: first + len as i64 - 1,
        }
    }

    /// `|n| <= n_max`.
    pub fn symmetric(n_max: u64) -> Self {
        Self {
            first: -(n_max as i64),
            last: n_max as i64,
        }
    }

    pub fn len(&self) -> usize {
        if self.last < self.first {
            0
        } else {
            (self.last - self.first + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.last < self.first
    }

    pub fn contains(&self, n: i64) -> bool {
        self.first <= n && n <= self.last
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<i64> {
        self.first..=self.last
    }

    pub fn translate(&self, shift: i64) -> Self {
        Self {
            first: self.first + shift,
            last: self.last + shift,
        }
    }

    /// The middle two-thirds of the range.
    pub fn interior(&self) -> Self {
        let len = self.len() as i64;
        Self {
            first: self.first + len / 6,
            last: self.first + len - 1 - len / 6,
        }
    }
}

impl fmt::Display for IndexRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.first, self.last)
    }
}

/// Common interface of marginal families used by the Radon–Nikodym
/// diagnostics.
pub trait MarginalFamily {
    type Point: Copy + fmt::Debug;

    /// Mass (finite alphabets) or density value (intervals) of `x` under the
    /// marginal at index `n`.
    fn density(&self, n: i64, x: Self::Point) -> f64;

    fn describe(&self) -> String;
}

type MassFn = dyn Fn(i64, Symbol) -> f64 + Send + Sync;

/// Product measure `⊗ m_n` on `A^Z` for a finite alphabet `A`.
#[derive(Clone)]
pub struct ProductMeasure {
    alphabet: Vec<String>,
    mass: Arc<MassFn>,
    doeblin_delta: f64,
    description: String,
}

impl fmt::Debug for ProductMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProductMeasure")
            .field("alphabet", &self.alphabet)
            .field("doeblin_delta", &self.doeblin_delta)
            .field("description", &self.description)
            .finish()
    }
}

fn check_probability_vector(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidProbability("empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidProbability(format!("{v:?} has a negative or non-finite entry")));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidProbability(format!("{v:?} sums to {total}")));
    }
    Ok(())
}

fn binary_alphabet() -> Vec<String> {
    vec!["0".to_string(), "1".to_string()]
}

impl ProductMeasure {
    /// Builds a measure from an arbitrary mass function.
    ///
    /// `doeblin_delta` is metadata: a known lower bound on every marginal
    /// mass, or 0 when unknown.
    pub fn from_fn<F>(alphabet: Vec<String>, mass: F, doeblin_delta: f64, description: impl Into<String>) -> Result<Self>
    where
        F: Fn(i64, Symbol) -> f64 + Send + Sync + 'static,
    {
        if alphabet.is_empty() || alphabet.len() > Symbol::MAX as usize + 1 {
            return Err(Error::Domain(format!("alphabet size {} unsupported", alphabet.len())));
        }
        Ok(Self {
            alphabet,
            mass: Arc::new(mass),
            doeblin_delta: doeblin_delta.max(0.0),
            description: description.into(),
        })
    }

    /// Two-symbol measure given by `n -> m_n(0)`.
    pub fn binary<F>(p0: F, doeblin_delta: f64, description: impl Into<String>) -> Self
    where
        F: Fn(i64) -> f64 + Send + Sync + 'static,
    {
        Self {
            alphabet: binary_alphabet(),
            mass: Arc::new(move |n, s| {
                let p = p0(n);
                if s == 0 {
                    p
                } else {
                    1.0 - p
                }
            }),
            doeblin_delta,
            description: description.into(),
        }
    }

    /// I.i.d. measure with marginal `probs` on symbols `0..probs.len()`.
    pub fn iid(probs: &[f64]) -> Result<Self> {
        check_probability_vector(probs)?;
        let alphabet = (0..probs.len()).map(|i| i.to_string()).collect();
        let probs = probs.to_vec();
        let delta = probs.iter().copied().fold(f64::INFINITY, f64::min);
        let description = format!("iid{probs:?}");
        Self::from_fn(alphabet, move |_, s| probs[s as usize], delta, description)
    }

    /// I.i.d. two-symbol measure with `m(0) = p0`.
    pub fn iid_binary(p0: f64) -> Result<Self> {
        Self::iid(&[p0, 1.0 - p0])
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_binary(&self) -> bool {
        self.alphabet.len() == 2
    }

    pub fn require_binary(&self) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(Error::NotBinary(self.alphabet.len()))
        }
    }

    pub fn mass(&self, n: i64, s: Symbol) -> f64 {
        (self.mass)(n, s)
    }

    /// `m_n(0)`.
    pub fn p0(&self, n: i64) -> f64 {
        (self.mass)(n, 0)
    }

    pub fn marginal(&self, n: i64) -> Vec<f64> {
        (0..self.alphabet.len()).map(|s| self.mass(n, s as Symbol)).collect()
    }

    /// Doeblin metadata attached at construction (0 if unknown).
    pub fn doeblin_metadata(&self) -> f64 {
        self.doeblin_delta
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// Mass of the block `symbols` placed at `start`, i.e. the product of
    /// `m_{start+j}(symbols[j])`.
    pub fn block_mass(&self, start: i64, symbols: &[Symbol]) -> f64 {
        symbols
            .iter()
            .enumerate()
            .map(|(j, &s)| self.mass(start + j as i64, s))
            .product()
    }

    /// Checks normalization of every marginal on `range`.
    pub fn check_normalized(&self, range: IndexRange) -> Result<()> {
        for n in range.iter() {
            let m = self.marginal(n);
            check_probability_vector(&m).map_err(|e| Error::InvalidProbability(format!("index {n}: {e}")))?;
        }
        Ok(())
    }
}

impl MarginalFamily for ProductMeasure {
    type Point = Symbol;

    fn density(&self, n: i64, x: Symbol) -> f64 {
        self.mass(n, x)
    }

    fn describe(&self) -> String {
        self.description.clone()
    }
}

/// A deterministic perturbation sequence `a_n`.
#[derive(Clone)]
pub enum Perturbation {
    Zero,
    /// `1/sqrt(n)` for `n >= 1`, 0 otherwise.
    InvSqrt,
    /// `n^(-exponent)` for `n >= 1`, 0 otherwise.
    Power(f64),
    /// A single nonzero term `value` at `index`.
    Single { index: i64, value: f64 },
    Custom(Arc<dyn Fn(i64) -> f64 + Send + Sync>),
}

impl Perturbation {
    pub fn value(&self, n: i64) -> f64 {
        match self {
            Perturbation::Zero => 0.0,
            Perturbation::InvSqrt => {
                if n >= 1 {
                    1.0 / (n as f64).sqrt()
                } else {
                    0.0
                }
            }
            Perturbation::Power(e) => {
                if n >= 1 {
                    (n as f64).powf(-e)
                } else {
                    0.0
                }
            }
            Perturbation::Single { index, value } => {
                if n == *index {
                    *value
                } else {
                    0.0
                }
            }
            Perturbation::Custom(f) => f(n),
        }
    }

    fn label(&self) -> String {
        match self {
            Perturbation::Zero => "zero".into(),
            Perturbation::InvSqrt => "inv_sqrt".into(),
            Perturbation::Power(e) => format!("power({e})"),
            Perturbation::Single { index, value } => format!("single({index},{value})"),
            Perturbation::Custom(_) => "custom".into(),
        }
    }
}

impl fmt::Debug for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Base probability `p` of symbol 0 plus a perturbation sequence.
#[derive(Clone, Debug)]
pub struct SequenceSpec {
    pub p: f64,
    pub a: Perturbation,
}

impl SequenceSpec {
    pub fn new(p: f64, a: Perturbation) -> Self {
        Self { p, a }
    }

    /// `p + c a_n`, or `p` wherever that leaves the open interval `(0, 1)`.
    pub fn clamped_p0(&self, c: f64, n: i64) -> f64 {
        clamp_to_open_unit(self.p, self.p + c * self.a.value(n))
    }

    /// Whether the clamp rule replaces the perturbed value at `n`.
    pub fn is_clamped(&self, c: f64, n: i64) -> bool {
        let v = self.p + c * self.a.value(n);
        !(v > 0.0 && v < 1.0)
    }
}

fn clamp_to_open_unit(base: f64, v: f64) -> f64 {
    if v > 0.0 && v < 1.0 {
        v
    } else {
        base
    }
}

/// `a_n(c) = (c/sqrt n) 1[n >= 1, c/sqrt n < 1/2]`.
pub fn nu_perturbation(c: f64, n: i64) -> f64 {
    if n >= 1 {
        let v = c / (n as f64).sqrt();
        if v < 0.5 {
            return v;
        }
    }
    0.0
}

/// The half-stationary measure `nu^c` with `nu_n(0) = 1/2 + a_n(c)`.
pub fn make_nu_c(c: f64) -> Result<ProductMeasure> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("nu^c needs c > 0, got {c}")));
    }
    // the smallest marginal mass sits at the first index where the indicator fires
    let first_active = (4.0 * c * c).floor() as i64 + 1;
    let first_active = (first_active.max(1)..first_active + 3)
        .find(|&n| c / (n as f64).sqrt() < 0.5)
        .unwrap_or(first_active);
    let delta = 0.5 - nu_perturbation(c, first_active);
    Ok(ProductMeasure::binary(
        move |n| 0.5 + nu_perturbation(c, n),
        delta,
        format!("nu_c(c={c})"),
    ))
}

/// `mu^(p,c)`: `mu_n(0) = p + c a_n`, clamped to `p` outside `(0, 1)`.
pub fn make_mu_pc(spec: &SequenceSpec, c: f64) -> Result<ProductMeasure> {
    if !(spec.p > 0.0 && spec.p < 1.0) {
        return Err(Error::Domain(format!("mu^(p,c) needs p in (0,1), got {}", spec.p)));
    }
    if !c.is_finite() {
        return Err(Error::Domain(format!("non-finite scale {c}")));
    }
    let description = format!("mu_pc(p={}, c={c}, a={})", spec.p, spec.a.label());
    let spec = spec.clone();
    Ok(ProductMeasure::binary(move |n| spec.clamped_p0(c, n), 0.0, description))
}

/// Outcome of a Doeblin scan over a finite range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoeblinReport {
    pub delta: f64,
    /// First index carrying a zero-mass symbol, if any.
    pub zero_mass_index: Option<i64>,
}

/// Infimum of all marginal masses over `range`.
pub fn doeblin_delta(m: &ProductMeasure, range: IndexRange) -> DoeblinReport {
    let mut delta = f64::INFINITY;
    for n in range.iter() {
        for s in 0..m.alphabet_size() {
            let x = m.mass(n, s as Symbol);
            if x <= 0.0 {
                return DoeblinReport {
                    delta: 0.0,
                    zero_mass_index: Some(n),
                };
            }
            delta = delta.min(x);
        }
    }
    DoeblinReport {
        delta: if delta.is_finite() { delta } else { 0.0 },
        zero_mass_index: None,
    }
}

/// `Σ_{|n| <= N} (m_n(0) - m_{n-k}(0))^2`, the Kakutani distance between the
/// measure and its `k`-shift.
pub fn kakutani_shift_sum(m: &ProductMeasure, k: i64, n_max: u64) -> Result<PartialSum> {
    m.require_binary()?;
    Ok(symmetric_partial_sum(n_max, |n| {
        let d = m.p0(n) - m.p0(n - k);
        d * d
    }))
}

fn positive(m: &impl MarginalFamily, n: i64, x: impl fmt::Debug + Copy, value: f64) -> Result<f64> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(Error::ZeroMass {
            index: n,
            symbol: format!("{x:?} under {}", m.describe()),
        })
    }
}

/// Finite-window log Radon–Nikodym partial sum for `T^k`:
/// `Σ_n log(m_{n-k}(x_n) / m_n(x_n))` over the window.
pub fn log_rn_shift<M: MarginalFamily>(m: &M, k: i64, w: &crate::sampling::Window<M::Point>) -> Result<f64> {
    let mut acc = crate::sum::CompensatedSum::new();
    for (n, &x) in w.iter_indexed() {
        let here = positive(m, n, x, m.density(n, x))?;
        let shifted = positive(m, n - k, x, m.density(n - k, x))?;
        acc.add(shifted.ln() - here.ln());
    }
    Ok(acc.value())
}

/// Log Radon–Nikodym derivative of the transposition of coordinates `i` and
/// `j` at a point with `x_i = xi`, `x_j = xj`.
pub fn log_rn_swap<M: MarginalFamily>(m: &M, i: i64, j: i64, xi: M::Point, xj: M::Point) -> Result<f64> {
    if i == j {
        return Ok(0.0);
    }
    let i_xj = positive(m, i, xj, m.density(i, xj))?;
    let j_xi = positive(m, j, xi, m.density(j, xi))?;
    let i_xi = positive(m, i, xi, m.density(i, xi))?;
    let j_xj = positive(m, j, xj, m.density(j, xj))?;
    Ok((i_xj.ln() + j_xi.ln()) - (i_xi.ln() + j_xj.ln()))
}

fn check_mixing(m: &ProductMeasure, p: f64, alpha: &[f64]) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("coin parameter {p} outside [0,1]")));
    }
    if alpha.len() != m.alphabet_size() {
        return Err(Error::AlphabetMismatch {
            expected: m.alphabet_size(),
            got: alpha.len(),
        });
    }
    check_probability_vector(alpha)
}

/// Randomized product measure: each coordinate keeps `m` with probability `p`
/// and is replaced by an `alpha` draw otherwise.
pub fn rpm(m: &ProductMeasure, p: f64, alpha: &[f64]) -> Result<ProductMeasure> {
    check_mixing(m, p, alpha)?;
    let inner = m.clone();
    let alpha = alpha.to_vec();
    let floor = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    let delta = p * m.doeblin_metadata() + (1.0 - p) * floor;
    let description = format!("rpm({}, p={p}, alpha={alpha:?})", m.description());
    ProductMeasure::from_fn(
        m.alphabet().to_vec(),
        move |n, s| {
            if p == 1.0 {
                inner.mass(n, s)
            } else {
                p * inner.mass(n, s) + (1.0 - p) * alpha[s as usize]
            }
        },
        delta,
        description,
    )
}

/// Random insertion: the law of the pair (value, coin) on `A x {H, T}`.
///
/// Symbol `s` is `(s, H)` and symbol `|A| + s` is `(s, T)`.
pub fn ri(m: &ProductMeasure, p: f64, alpha: &[f64]) -> Result<ProductMeasure> {
    check_mixing(m, p, alpha)?;
    let size = m.alphabet_size();
    if 2 * size > Symbol::MAX as usize + 1 {
        return Err(Error::Domain("alphabet too large for random insertion".into()));
    }
    let mut alphabet: Vec<String> = m.alphabet().iter().map(|a| format!("{a}:H")).collect();
    alphabet.extend(m.alphabet().iter().map(|a| format!("{a}:T")));
    let inner = m.clone();
    let alpha = alpha.to_vec();
    let description = format!("ri({}, p={p}, alpha={alpha:?})", m.description());
    ProductMeasure::from_fn(
        alphabet,
        move |n, s| {
            let s = s as usize;
            if s < size {
                p * inner.mass(n, s as Symbol)
            } else {
                (1.0 - p) * alpha[s - size]
            }
        },
        0.0,
        description,
    )
}

/// Marginal of a random-insertion measure with the coin coordinate summed out.
pub fn forget_coin(ri_marginal: &[f64]) -> Vec<f64> {
    let size = ri_marginal.len() / 2;
    (0..size).map(|s| ri_marginal[s] + ri_marginal[size + s]).collect()
}

// ---------------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------------

/// A piecewise-constant density: value `values[i]` on `[breaks[i], breaks[i+1])`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseDensity {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseDensity {
    /// Zero-length pieces are dropped.
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::Domain(format!(
                "{} breakpoints for {} pieces",
                breaks.len(),
                values.len()
            )));
        }
        if breaks.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Domain(format!("breakpoints not sorted: {breaks:?}")));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain(format!("negative density value in {values:?}")));
        }
        let mut b = vec![breaks[0]];
        let mut v = Vec::with_capacity(values.len());
        for (i, &val) in values.iter().enumerate() {
            if breaks[i + 1] > breaks[i] {
                b.push(breaks[i + 1]);
                v.push(val);
            }
        }
        if v.is_empty() {
            return Err(Error::Domain("density with empty support".into()));
        }
        Ok(Self { breaks: b, values: v })
    }

    /// Builds from `(lo, hi, value)` pieces that tile an interval.
    pub fn from_pieces(pieces: &[(f64, f64, f64)]) -> Result<Self> {
        let mut breaks = Vec::with_capacity(pieces.len() + 1);
        let mut values = Vec::with_capacity(pieces.len());
        for (i, &(lo, hi, v)) in pieces.iter().enumerate() {
            if i == 0 {
                breaks.push(lo);
            } else if lo != *breaks.last().unwrap() {
                return Err(Error::Domain(format!("pieces do not tile: gap at {lo}")));
            }
            breaks.push(hi);
            values.push(v);
        }
        Self::new(breaks, values)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo, hi], vec![1.0 / (hi - lo)])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> (f64, f64) {
        (self.breaks[0], *self.breaks.last().unwrap())
    }

    /// Iterates over `(lo, hi, value)`.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.breaks[i], self.breaks[i + 1], v))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(x >= lo && x <= hi) {
            return 0.0;
        }
        if x == hi {
            return *self.values.last().unwrap();
        }
        let i = self.breaks.partition_point(|&b| b <= x) - 1;
        self.values[i]
    }

    /// Exact integral (sum of piece masses).
    pub fn integral(&self) -> f64 {
        let mut acc = crate::sum::CompensatedSum::new();
        acc.extend(self.pieces().map(|(lo, hi, v)| (hi - lo) * v));
        acc.value()
    }

    pub fn mass_of(&self, a: f64, b: f64) -> f64 {
        self.pieces()
            .map(|(lo, hi, v)| {
                let l = lo.max(a);
                let h = hi.min(b);
                if h > l {
                    (h - l) * v
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, _) = self.support();
        self.mass_of(lo, x).clamp(0.0, 1.0)
    }

    /// Exact inverse CDF, solved in closed form on the piece containing `u`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let total = self.integral();
        let target = u * total;
        let mut cum = 0.0;
        let mut last_positive = 0;
        for (i, (lo, hi, v)) in self.pieces().enumerate() {
            if v <= 0.0 {
                continue;
            }
            last_positive = i;
            let mass = (hi - lo) * v;
            if target < cum + mass {
                let x = lo + (target - cum) / v;
                return x.clamp(lo, hi);
            }
            cum += mass;
        }
        // u at the top of the range after rounding
        let hi = self.breaks[last_positive + 1];
        hi - f64::EPSILON * hi.abs().max(1.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            breaks: self.breaks.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn translated(&self, shift: f64) -> Self {
        Self {
            breaks: self.breaks.iter().map(|b| b + shift).collect(),
            values: self.values.clone(),
        }
    }
}

type DensityFn = dyn Fn(i64) -> PiecewiseDensity + Send + Sync;

/// Family `n -> f_n` of piecewise-constant densities on a common interval.
#[derive(Clone)]
pub struct DensityFamily {
    support: (f64, f64),
    generator: Arc<DensityFn>,
    description: String,
}

impl fmt::Debug for DensityFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityFamily")
            .field("support", &self.support)
            .field("description", &self.description)
            .finish()
    }
}

impl DensityFamily {
    pub fn new<F>(support: (f64, f64), generator: F, description: impl Into<String>) -> Self
    where
        F: Fn(i64) -> PiecewiseDensity + Send + Sync + 'static,
    {
        Self {
            support,
            generator: Arc::new(generator),
            description: description.into(),
        }
    }

    /// The same density at every index.
    pub fn constant(d: PiecewiseDensity, description: impl Into<String>) -> Self {
        let support = d.support();
        Self::new(support, move |_| d.clone(), description)
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn at(&self, n: i64) -> PiecewiseDensity {
        (self.generator)(n)
    }

    pub fn eval(&self, n: i64, x: f64) -> f64 {
        self.at(n).eval(x)
    }

    pub fn breakpoints(&self, n: i64) -> Vec<f64> {
        self.at(n).breakpoints().to_vec()
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// Shifts the whole family by `shift` along the real line.
    pub fn translated(&self, shift: f64) -> Self {
        let inner = self.generator.clone();
        Self {
            support: (self.support.0 + shift, self.support.1 + shift),
            generator: Arc::new(move |n| inner(n).translated(shift)),
            description: format!("{} shifted by {shift}", self.description),
        }
    }

    pub fn check_normalized(&self, range: IndexRange, tol: f64) -> Result<()> {
        for n in range.iter() {
            let total = self.at(n).integral();
            if (total - 1.0).abs() > tol {
                return Err(Error::InvalidProbability(format!("density at {n} integrates to {total}")));
            }
        }
        Ok(())
    }
}

impl MarginalFamily for DensityFamily {
    type Point = f64;

    fn density(&self, n: i64, x: f64) -> f64 {
        self.eval(n, x)
    }

    fn describe(&self) -> String {
        self.description.clone()
    }
}

// ---------------------------------------------------------------------------
// Structured configuration
// ---------------------------------------------------------------------------

/// Perturbation sequences available from configuration files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationSpec {
    Zero,
    #[default]
    InvSqrt,
    Power {
        exponent: f64,
    },
}

impl PerturbationSpec {
    pub fn build(&self) -> Perturbation {
        match self {
            PerturbationSpec::Zero => Perturbation::Zero,
            PerturbationSpec::InvSqrt => Perturbation::InvSqrt,
            PerturbationSpec::Power { exponent } => Perturbation::Power(*exponent),
        }
    }
}

/// A named measure family with its parameters.
///
/// Parses from TOML (`family = "nu_c"`, `c = 0.1`) or from the compact forms
/// `iid:0.3`, `nu_c:0.1`, `mu_pc:p=0.5,c=0.2[,a=inv_sqrt|zero|power:E]`,
/// `perturbed:p=0.5,index=0,value=0.6`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MeasureSpec {
    Iid {
        p0: f64,
    },
    NuC {
        c: f64,
    },
    MuPc {
        p: f64,
        c: f64,
        #[serde(default)]
        a: PerturbationSpec,
    },
    /// I.i.d. `(p, 1-p)` except `m_index(0) = value`.
    Perturbed {
        p: f64,
        index: i64,
        value: f64,
    },
}

impl MeasureSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MeasureSpec::Iid { .. } => "iid",
            MeasureSpec::NuC { .. } => "nu_c",
            MeasureSpec::MuPc { .. } => "mu_pc",
            MeasureSpec::Perturbed { .. } => "perturbed",
        }
    }

    pub fn params(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).unwrap_or_else(|_| json!({}));
        if let Some(obj) = v.as_object_mut() {
            obj.remove("family");
        }
        v
    }

    pub fn build(&self) -> Result<ProductMeasure> {
        match self {
            MeasureSpec::Iid { p0 } => ProductMeasure::iid_binary(*p0),
            MeasureSpec::NuC { c } => make_nu_c(*c),
            MeasureSpec::MuPc { p, c, a } => make_mu_pc(&SequenceSpec::new(*p, a.build()), *c),
            MeasureSpec::Perturbed { p, index, value } => {
                if !(*p > 0.0 && *p < 1.0 && *value > 0.0 && *value < 1.0) {
                    return Err(Error::Domain(format!("perturbed measure needs p, value in (0,1)")));
                }
                let seq = SequenceSpec::new(
                    *p,
                    Perturbation::Single {
                        index: *index,
                        value: value - p,
                    },
                );
                let mut m = make_mu_pc(&seq, 1.0)?;
                m.doeblin_delta = p.min(1.0 - p).min(*value).min(1.0 - value);
                m.description = format!("perturbed(p={p}, index={index}, value={value})");
                Ok(m)
            }
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?} as a number")))
}

fn parse_kv(body: &str) -> Result<Vec<(String, String)>> {
    body.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {kv:?}")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

impl FromStr for MeasureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, body) = s.split_once(':').unwrap_or((s, ""));
        match family.trim() {
            "iid" => Ok(MeasureSpec::Iid { p0: parse_f64("p0", body)? }),
            "nu_c" => {
                let c = match body.split_once('=') {
                    Some((_, v)) => parse_f64("c", v)?,
                    None => parse_f64("c", body)?,
                };
                Ok(MeasureSpec::NuC { c })
            }
            "mu_pc" => {
                let (mut p, mut c, mut a) = (None, None, PerturbationSpec::InvSqrt);
                for (k, v) in parse_kv(body)? {
                    match k.as_str() {
                        "p" => p = Some(parse_f64("p", &v)?),
                        "c" => c = Some(parse_f64("c", &v)?),
                        "a" => {
                            a = match v.as_str() {
                                "inv_sqrt" => PerturbationSpec::InvSqrt,
                                "zero" => PerturbationSpec::Zero,
                                other => match other.strip_prefix("power:") {
                                    Some(e) => PerturbationSpec::Power {
                                        exponent: parse_f64("a", e)?,
                                    },
                                    None => return Err(Error::Config(format!("unknown perturbation {other:?}"))),
                                },
                            }
                        }
                        _ => return Err(Error::Config(format!("unknown mu_pc parameter {k:?}"))),
                    }
                }
                Ok(MeasureSpec::MuPc {
                    p: p.ok_or_else(|| Error::Config("mu_pc needs p".into()))?,
                    c: c.unwrap_or(1.0),
                    a,
                })
            }
            "perturbed" => {
                let (mut p, mut index, mut value) = (0.5, 0, None);
                for (k, v) in parse_kv(body)? {
                    match k.as_str() {
                        "p" => p = parse_f64("p", &v)?,
                        "index" => {
                            index = v
                                .parse()
                                .map_err(|_| Error::Config(format!("index: cannot parse {v:?}")))?
                        }
                        "value" => value = Some(parse_f64("value", &v)?),
                        _ => return Err(Error::Config(format!("unknown perturbed parameter {k:?}"))),
                    }
                }
                Ok(MeasureSpec::Perturbed {
                    p,
                    index,
                    value: value.ok_or_else(|| Error::Config("perturbed needs value".into()))?,
                })
            }
            other => Err(Error::Config(format!("unknown measure family {other:?}"))),
        }
    }
}

/// One line of the shift-sum diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSumRecord {
    pub family: String,
    pub params: serde_json::Value,
    pub k: i64,
    #[serde(rename = "N")]
    pub n: u64,
    pub value: f64,
    pub tail_increment: f64,
}

/// Shift sums for every `k` at the decades `10, 100, ..., n_max`.
pub fn shift_sum_series(spec: &MeasureSpec, ks: &[i64], n_max: u64) -> Result<Vec<ShiftSumRecord>> {
    let m = spec.build()?;
    let mut out = Vec::new();
    for &k in ks {
        let mut n = 10u64;
        loop {
            let n_eff = n.min(n_max);
            let s = kakutani_shift_sum(&m, k, n_eff)?;
            out.push(ShiftSumRecord {
                family: spec.name().to_string(),
                params: spec.params(),
                k,
                n: n_eff,
                value: s.value,
                tail_increment: s.tail_increment,
            });
            if n >= n_max {
                break;
            }
            n = n.saturating_mul(10);
        }
    }
    Ok(out)
}
