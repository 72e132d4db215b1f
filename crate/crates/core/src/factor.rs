//! The low-entropy i.i.d. factor: fair bits from special fillers, a
//! bounded-window entropy-splitting code, and bit spreading along the
//! Meshalkin matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markers::{decompose, good_prob_lower_bound, MarkerDecomposition};
use crate::matching::{good_to_ab, meshalkin_match, required_d, AbSequence, Letter, MatchingAssignment};
use crate::measure::{doeblin_delta, IndexRange, ProductMeasure, Symbol};
use crate::sampling::{sample_window, SeedStream, Window};
use crate::stats::{binary_entropy, chi_square_gof, serial_correlation, z_p_value, TestOutcome};
use crate::sum::{symmetric_partial_sum, PartialSum};

/// `Σ_{|i| <= N} (ρ_i(01)/(ρ_i(01) + ρ_i(10)) - 1/2)^2`.
pub fn bias_square_sum(m: &ProductMeasure, n_max: u64) -> Result<PartialSum> {
    m.require_binary()?;
    let range = IndexRange::symmetric(n_max);
    for i in range.iter() {
        let (p, q) = (m.p0(i), m.p0(i + 1));
        if p * (1.0 - q) + (1.0 - p) * q <= 0.0 {
            return Err(Error::ZeroMass {
                index: i,
                symbol: "01 and 10".into(),
            });
        }
    }
    Ok(symmetric_partial_sum(n_max, |i| {
        let (p, q) = (m.p0(i), m.p0(i + 1));
        let r01 = p * (1.0 - q);
        let r10 = (1.0 - p) * q;
        let t = r01 / (r01 + r10) - 0.5;
        t * t
    }))
}

/// Bits read off the special fillers, `1` for `10` and `0` for `01`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairBitStream {
    pub positions: Vec<i64>,
    pub bits: Vec<Symbol>,
}

impl FairBitStream {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

pub fn fair_bits_of(d: &MarkerDecomposition) -> FairBitStream {
    FairBitStream {
        positions: d.specials.iter().map(|s| s.index).collect(),
        bits: d.specials.iter().map(|s| s.bit).collect(),
    }
}

pub fn extract_fair_bits(w: &Window<Symbol>) -> FairBitStream {
    fair_bits_of(&decompose(w))
}

/// The `β0 ∈ (0, 1/2]` with `H(β0) = log 2 / dplus1`.
pub fn beta_for(dplus1: usize) -> Result<f64> {
    if dplus1 == 0 {
        return Err(Error::Domain("dplus1 must be at least 1".into()));
    }
    if dplus1 == 1 {
        return Ok(0.5);
    }
    let target = std::f64::consts::LN_2 / dplus1 as f64;
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub const DEFAULT_RADIUS: usize = 31;

/// Parameters of the splitting code: `d + 1` output bits with `P(0) = beta0`,
/// keyed by the `2 radius + 1` fair bits centred on each position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCodeSpec {
    pub d: usize,
    pub beta0: f64,
    pub radius: usize,
}

impl SplitCodeSpec {
    pub fn new(d: usize, radius: usize) -> Result<Self> {
        let spec = Self {
            d,
            beta0: beta_for(d + 1)?,
            radius,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if 2 * self.radius + 1 > 63 {
            return Err(Error::Domain(format!("radius {} exceeds the 63-bit key", self.radius)));
        }
        if !(self.beta0 > 0.0 && self.beta0 <= 0.5) {
            return Err(Error::Domain(format!("beta0 = {} outside (0, 1/2]", self.beta0)));
        }
        let balance = (self.d + 1) as f64 * binary_entropy(self.beta0) - std::f64::consts::LN_2;
        if balance.abs() > 1e-10 {
            return Err(Error::Domain(format!("entropy balance off by {balance}")));
        }
        Ok(())
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Arithmetic decoding of `u ∈ [0, 1)` into `len` independent bits with
/// `P(0) = beta0`.
pub fn decode_bits(mut u: f64, beta0: f64, len: usize) -> Vec<Symbol> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        if u < beta0 {
            out.push(0);
            u /= beta0;
        } else {
            out.push(1);
            u = (u - beta0) / (1.0 - beta0);
        }
        u = u.clamp(0.0, 1.0 - f64::EPSILON / 2.0);
    }
    out
}

/// One `(d + 1)`-tuple per fair bit; `None` where the key window leaves the
/// stream.
pub fn psi_split(z: &FairBitStream, spec: &SplitCodeSpec) -> Result<Vec<Option<Vec<Symbol>>>> {
    spec.validate()?;
    let r = spec.radius;
    let n = z.bits.len();
    Ok((0..n)
        .map(|k| {
            if k < r || k + r >= n {
                return None;
            }
            let mut key = 0u64;
            for (j, &b) in z.bits[k - r..=k + r].iter().enumerate() {
                key |= (b as u64 & 1) << j;
            }
            let u = (mix64(key) >> 11) as f64 / (1u64 << 53) as f64;
            Some(decode_bits(u, spec.beta0, spec.d + 1))
        })
        .collect())
}

/// The factor output: one bit per index, `None` where censored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorOutput {
    pub start: i64,
    pub bits: Vec<Option<Symbol>>,
}

impl FactorOutput {
    pub fn range(&self) -> IndexRange {
        IndexRange::with_len(self.start, self.bits.len())
    }

    pub fn get(&self, n: i64) -> Option<Symbol> {
        if n < self.start {
            return None;
        }
        self.bits.get((n - self.start) as usize).copied().flatten()
    }

    pub fn censored_fraction(&self, range: IndexRange) -> f64 {
        let total = range.len().max(1) as f64;
        range.iter().filter(|&n| self.get(n).is_none()).count() as f64 / total
    }

    pub fn to_window(&self) -> Window<Option<Symbol>> {
        Window::new(self.start, self.bits.clone())
    }
}

/// Hands out tuple bits: every special keeps its first bit, and its matched
/// indices take the following ones in ascending order.
///
/// `z` is the `a/b` sequence the assignment was built from. The first `a`
/// left short of capacity may have partners beyond the left edge, which
/// would shift its hand-off order, so its partners are censored.
pub fn spread_bits(
    range: IndexRange,
    z: &AbSequence,
    fair: &FairBitStream,
    assignment: &MatchingAssignment,
    tuples: &[Option<Vec<Symbol>>],
) -> Result<FactorOutput> {
    if fair.positions.len() != tuples.len() {
        return Err(Error::RangeMismatch(format!(
            "{} specials but {} tuples",
            fair.positions.len(),
            tuples.len()
        )));
    }
    let mut bits = vec![None; range.len()];
    let slot = |n: i64| (range.contains(n)).then(|| (n - range.first) as usize);
    let tuple_of = |a: i64| {
        fair.positions
            .binary_search(&a)
            .ok()
            .and_then(|k| tuples[k].as_ref())
    };
    let first_short = z
        .positions(Letter::A)
        .find(|a| assignment.multiplicity.get(a).copied().unwrap_or(0) < assignment.d);
    for &a in fair.positions.iter() {
        if let (Some(t), Some(i)) = (tuple_of(a), slot(a)) {
            bits[i] = Some(t[0]);
        }
    }
    for (a, partners) in assignment.partners_by_a() {
        if Some(a) == first_short {
            continue;
        }
        let Some(t) = tuple_of(a) else { continue };
        if partners.len() + 1 > t.len() {
            return Err(Error::Precondition(format!("a at {a} has {} partners for {} bits", partners.len(), t.len())));
        }
        for (j, b) in partners.iter().enumerate() {
            if let Some(i) = slot(*b) {
                bits[i] = Some(t[j + 1]);
            }
        }
    }
    Ok(FactorOutput {
        start: range.first,
        bits,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorDiagnostics {
    pub q: f64,
    pub d: usize,
    pub beta0: f64,
    pub censor_fraction: f64,
    pub fair_bits: usize,
    pub max_match_distance: i64,
    pub tests: Vec<TestOutcome>,
}

impl FactorDiagnostics {
    pub fn all_pass(&self) -> bool {
        self.tests.iter().all(|t| t.pass)
    }
}

pub const SIGNIFICANCE: f64 = 0.001;
pub const MAX_LAG: usize = 8;
pub const CORRELATION_BOUND: f64 = 0.01;

/// Frequency (4σ), non-overlapping 3-block chi-square and lag-1..8
/// correlation checks of a bit sequence against i.i.d. bits with `P(0) = beta0`.
///
/// `runs` are maximal stretches of uncensored bits; blocks and lags never
/// straddle a gap.
pub fn uniformity_suite(runs: &[Vec<Symbol>], beta0: f64) -> Result<Vec<TestOutcome>> {
    let n: usize = runs.iter().map(|r| r.len()).sum();
    if n == 0 {
        return Err(Error::Precondition("no uncensored bits to test".into()));
    }
    let ones: usize = runs.iter().flatten().filter(|&&b| b == 1).count();
    let p1 = 1.0 - beta0;
    let z = (ones as f64 - n as f64 * p1) / (n as f64 * beta0 * p1).sqrt();
    let mut tests = vec![TestOutcome {
        name: "frequency".into(),
        statistic: z,
        p_value: z_p_value(z),
        pass: z.abs() < 4.0,
    }];

    let mut counts = [0.0f64; 8];
    for r in runs {
        for c in r.chunks_exact(3) {
            counts[(c[0] << 2 | c[1] << 1 | c[2]) as usize] += 1.0;
        }
    }
    let blocks: f64 = counts.iter().sum();
    let expected: Vec<f64> = (0..8)
        .map(|code: u32| {
            let zeros = 3 - code.count_ones() as i32;
            blocks * beta0.powi(zeros) * p1.powi(3 - zeros)
        })
        .collect();
    // order cells by expectation so pooling merges the rare patterns together
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&a, &b| expected[a].total_cmp(&expected[b]));
    let obs: Vec<f64> = order.iter().map(|&i| counts[i]).collect();
    let exp: Vec<f64> = order.iter().map(|&i| expected[i]).collect();
    match chi_square_gof(&obs, &exp, 0) {
        Ok(c) => tests.push(TestOutcome {
            name: "chi_square_3_blocks".into(),
            statistic: c.statistic,
            p_value: c.p_value,
            pass: c.p_value > SIGNIFICANCE,
        }),
        Err(_) => tests.push(TestOutcome {
            name: "chi_square_3_blocks".into(),
            statistic: f64::NAN,
            p_value: f64::NAN,
            pass: false,
        }),
    }

    for lag in 1..=MAX_LAG {
        let r = pooled_serial_correlation(runs, lag);
        tests.push(TestOutcome {
            name: format!("lag_{lag}_correlation"),
            statistic: r,
            p_value: z_p_value(r * (n as f64).sqrt()),
            pass: r.abs() < CORRELATION_BOUND,
        });
    }
    Ok(tests)
}

/// Lag correlation over all pairs lying in a common run.
pub fn pooled_serial_correlation(runs: &[Vec<Symbol>], lag: usize) -> f64 {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for r in runs.iter().filter(|r| r.len() > lag) {
        xs.extend(r[..r.len() - lag].iter().map(|&b| b as f64));
        ys.extend(r[lag..].iter().map(|&b| b as f64));
    }
    crate::stats::pearson(&xs, &ys)
}

/// Lag correlation of a single sequence of bits.
pub fn bit_serial_correlation(bits: &[Symbol], lag: usize) -> f64 {
    let x: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
    serial_correlation(&x, lag)
}

/// Splits the uncensored bits of `range` into maximal runs.
pub fn uncensored_runs(out: &FactorOutput, range: IndexRange) -> Vec<Vec<Symbol>> {
    let mut runs = Vec::new();
    let mut cur = Vec::new();
    for n in range.iter() {
        match out.get(n) {
            Some(b) => cur.push(b),
            None => {
                if !cur.is_empty() {
                    runs.push(std::mem::take(&mut cur));
                }
            }
        }
    }
    if !cur.is_empty() {
        runs.push(cur);
    }
    runs
}

/// Everything the pipeline produced, for inspection and export.
#[derive(Clone, Debug)]
pub struct FactorRun {
    pub input: Window<Symbol>,
    pub decomposition: MarkerDecomposition,
    pub fair_bits: FairBitStream,
    pub z_prime: AbSequence,
    pub assignment: MatchingAssignment,
    pub output: FactorOutput,
    pub diagnostics: FactorDiagnostics,
}

/// Runs the factor on a given binary window.
///
/// The matching runs on the sequence marking every special filler (which
/// dominates the good-block sequence), restricted to the span between the
/// first and last marker where specials are exactly known.
pub fn factor_of_window(input: Window<Symbol>, q: f64, radius: usize) -> Result<FactorRun> {
    let d = required_d(q)?;
    let spec = SplitCodeSpec::new(d, radius)?;
    let decomposition = decompose(&input);
    let fair_bits = fair_bits_of(&decomposition);
    let (z_full, _) = good_to_ab(&input);
    let span = decomposition.interior().unwrap_or(IndexRange::new(input.start, input.start - 1));
    let z_prime = if span.is_empty() {
        AbSequence::new(input.start, Vec::new())
    } else {
        AbSequence::new(
            span.first,
            z_full.letters[(span.first - input.start) as usize..=(span.last - input.start) as usize].to_vec(),
        )
    };
    let assignment = meshalkin_match(&z_prime, d)?;
    let tuples = psi_split(&fair_bits, &spec)?;
    let output = spread_bits(input.range(), &z_prime, &fair_bits, &assignment, &tuples)?;
    let interior = input.range().interior();
    let censor_fraction = output.censored_fraction(interior);
    let runs = uncensored_runs(&output, interior);
    let tests = uniformity_suite(&runs, spec.beta0)?;
    let diagnostics = FactorDiagnostics {
        q,
        d,
        beta0: spec.beta0,
        censor_fraction,
        fair_bits: fair_bits.len(),
        max_match_distance: assignment.max_distance(),
        tests,
    };
    Ok(FactorRun {
        input,
        decomposition,
        fair_bits,
        z_prime,
        assignment,
        output,
        diagnostics,
    })
}

/// Samples `m` on `range` and runs the whole factor construction.
pub fn run_iid_factor(m: &ProductMeasure, range: IndexRange, seeds: &SeedStream) -> Result<FactorRun> {
    run_iid_factor_with_radius(m, range, seeds, DEFAULT_RADIUS)
}

pub fn run_iid_factor_with_radius(m: &ProductMeasure, range: IndexRange, seeds: &SeedStream, radius: usize) -> Result<FactorRun> {
    m.require_binary()?;
    let scan = doeblin_delta(m, range);
    if let Some(n) = scan.zero_mass_index {
        return Err(Error::Precondition(format!("Doeblin condition fails: zero mass at index {n}")));
    }
    let q = good_prob_lower_bound(m, range)?;
    if q <= 0.0 {
        return Err(Error::Precondition("good-block probability has zero lower bound".into()));
    }
    let input = sample_window(m, range, seeds);
    factor_of_window(input, q, radius)
}
