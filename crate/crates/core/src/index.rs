//! Speedups, direct products and the ergodic-index diagnostics.
//!
//! [`zeta`] blocks a sequence into `k`-tuples and [`pi_interleave`] zips `k`
//! sequences; both are inverted exactly. The Kakutani block sums compare the
//! blocked marginals `η_n` with the product marginals `κ_n`, and the
//! Hellinger sums `S(k, c)` drive the conservativity proxy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{make_mu_pc, make_nu_c, nu_perturbation, rpm, IndexRange, Perturbation, ProductMeasure, SequenceSpec, Symbol};
use crate::stats::linear_fit;
use crate::sum::{symmetric_partial_sum, CompensatedSum, PartialSum};
use crate::sampling::Window;

pub const MAX_BLOCK_WIDTH: usize = 20;

/// Block `n` holds `k` symbols; it starts at coordinate `k n` after blocking.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockedWindow {
    pub start: i64,
    pub k: usize,
    pub blocks: Vec<Vec<Symbol>>,
}

impl BlockedWindow {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn range(&self) -> IndexRange {
        IndexRange::with_len(self.start, self.blocks.len())
    }

    /// Code of block `i` with the first symbol most significant.
    pub fn code(&self, i: usize, alphabet: usize) -> usize {
        self.blocks[i].iter().fold(0, |acc, &s| acc * alphabet + s as usize)
    }
}

/// `ζ(x)_n = (x_{kn}, ..., x_{kn+k-1})` for every block fully inside the
/// window.
pub fn zeta(w: &Window<Symbol>, k: usize) -> Result<BlockedWindow> {
    if k == 0 {
        return Err(Error::Domain("block width must be positive".into()));
    }
    let ki = k as i64;
    let first = w.start.div_euclid(ki) + i64::from(w.start.rem_euclid(ki) != 0);
    let last = w.end().div_euclid(ki) - 1;
    let blocks = (first..=last)
        .map(|n| {
            let i = (ki * n - w.start) as usize;
            w.values[i..i + k].to_vec()
        })
        .collect();
    Ok(BlockedWindow { start: first, k, blocks })
}

/// Inverse of [`zeta`] on its image.
pub fn unblock(b: &BlockedWindow) -> Window<Symbol> {
    Window::new(b.start * b.k as i64, b.blocks.concat())
}

/// `π(x^1, ..., x^k)_n = (x^1_n, ..., x^k_n)`.
pub fn pi_interleave(ws: &[Window<Symbol>]) -> Result<BlockedWindow> {
    let Some(first) = ws.first() else {
        return Err(Error::Domain("need at least one window".into()));
    };
    if ws.iter().any(|w| w.range() != first.range()) {
        return Err(Error::RangeMismatch("interleaved windows must share a range".into()));
    }
    let blocks = (0..first.len())
        .map(|i| ws.iter().map(|w| w.values[i]).collect())
        .collect();
    Ok(BlockedWindow {
        start: first.start,
        k: ws.len(),
        blocks,
    })
}

pub fn de_interleave(b: &BlockedWindow) -> Vec<Window<Symbol>> {
    (0..b.k)
        .map(|j| Window::new(b.start, b.blocks.iter().map(|blk| blk[j]).collect()))
        .collect()
}

fn block_symbols(code: usize, k: usize, alphabet: usize) -> Vec<Symbol> {
    let mut out = vec![0; k];
    let mut c = code;
    for j in (0..k).rev() {
        out[j] = (c % alphabet) as Symbol;
        c /= alphabet;
    }
    out
}

fn check_width(k: usize) -> Result<()> {
    if k == 0 || k > MAX_BLOCK_WIDTH {
        return Err(Error::Domain(format!("block width {k} outside 1..={MAX_BLOCK_WIDTH}")));
    }
    Ok(())
}

/// `η_n(B) = Π_i m_{kn+i}(b_{i+1})` over all blocks, first symbol most
/// significant.
pub fn eta_marginal(m: &ProductMeasure, k: usize, n: i64) -> Result<Vec<f64>> {
    check_width(k)?;
    let a = m.alphabet_size();
    let total = a.checked_pow(k as u32).ok_or_else(|| Error::Domain("too many blocks".into()))?;
    let base = k as i64 * n;
    let marg: Vec<Vec<f64>> = (0..k as i64).map(|i| m.marginal(base + i)).collect();
    Ok((0..total)
        .map(|code| {
            block_symbols(code, k, a)
                .iter()
                .enumerate()
                .map(|(i, &s)| marg[i][s as usize])
                .product()
        })
        .collect())
}

/// `κ_n(B) = Π_j m_{kn}(b_j)`, the product of `k` copies of `γ[k]_n`.
pub fn kappa_marginal(m: &ProductMeasure, k: usize, n: i64) -> Result<Vec<f64>> {
    check_width(k)?;
    let a = m.alphabet_size();
    let total = a.checked_pow(k as u32).ok_or_else(|| Error::Domain("too many blocks".into()))?;
    let marg = m.marginal(k as i64 * n);
    Ok((0..total)
        .map(|code| block_symbols(code, k, a).iter().map(|&s| marg[s as usize]).product())
        .collect())
}

/// `γ[k]_n(0) = p + c a_{kn}`, clamped like the underlying family.
pub fn gamma_marginal(spec: &SequenceSpec, c: f64, k: usize, n: i64) -> [f64; 2] {
    let p0 = spec.clamped_p0(c, k as i64 * n);
    [p0, 1.0 - p0]
}

/// The measure `γ[k]` itself.
pub fn gamma_measure(m: &ProductMeasure, k: usize) -> ProductMeasure {
    let inner = m.clone();
    let ki = k as i64;
    ProductMeasure::binary(
        move |n| inner.p0(ki * n),
        m.doeblin_metadata(),
        format!("gamma[{k}]({})", m.description()),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockKakutaniReport {
    pub k: usize,
    pub sum: PartialSum,
    pub bound: PartialSum,
    /// Indices where some block violates `α(n) <= k^2 Σ_ℓ (a_{kn+ℓ-1} - a_{kn})^2`.
    pub violations: Vec<i64>,
}

/// `Σ_{|n| <= N} Σ_B (η_n(B) - κ_n(B))^2` by enumerating all blocks, with the
/// per-index bound.
pub fn block_kakutani_sum(m: &ProductMeasure, k: usize, n_max: u64) -> Result<BlockKakutaniReport> {
    check_width(k)?;
    m.require_binary()?;
    let range = IndexRange::symmetric(n_max);
    let rows: Vec<(f64, f64, bool)> = range
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&n| {
            let eta = eta_marginal(m, k, n).expect("width checked");
            let kappa = kappa_marginal(m, k, n).expect("width checked");
            let base = m.p0(k as i64 * n);
            let bound: f64 = (k * k) as f64
                * (0..k as i64)
                    .map(|l| (m.p0(k as i64 * n + l) - base).powi(2))
                    .sum::<f64>();
            let mut total = CompensatedSum::new();
            let mut violated = false;
            for (e, q) in eta.iter().zip(&kappa) {
                let alpha = (e - q) * (e - q);
                // slack for rounding in the products
                if alpha > bound * (1.0 + 1e-12) + 1e-30 {
                    violated = true;
                }
                total.add(alpha);
            }
            (total.value(), bound, violated)
        })
        .collect();
    let at = |n: i64| rows[(n - range.first) as usize];
    let sum = symmetric_partial_sum(n_max, |n| at(n).0);
    let bound = symmetric_partial_sum(n_max, |n| at(n).1);
    let violations = range.iter().filter(|&n| at(n).2).collect();
    Ok(BlockKakutaniReport { k, sum, bound, violations })
}

/// Empirical against expected counts of one cylinder pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderStat {
    pub pattern: Vec<usize>,
    pub observed: f64,
    pub expected: f64,
    pub sigma: f64,
}

impl CylinderStat {
    pub fn z(&self) -> f64 {
        if self.sigma == 0.0 {
            if self.observed == self.expected {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.observed - self.expected) / self.sigma
        }
    }
}

/// Counts of every pattern of `len` consecutive block codes over the
/// non-overlapping groups of a blocked window, with expectations from the
/// block law `law(n)`.
pub fn cylinder_stats(
    b: &BlockedWindow,
    alphabet: usize,
    len: usize,
    law: impl Fn(i64) -> Vec<f64> + Sync,
) -> Vec<CylinderStat> {
    let cells = alphabet.pow(b.k as u32);
    let patterns = cells.pow(len as u32);
    let groups = b.len() / len;
    let laws: Vec<Vec<f64>> = (0..groups * len)
        .into_par_iter()
        .map(|i| law(b.start + i as i64))
        .collect();
    let mut observed = vec![0.0; patterns];
    let mut expected = vec![0.0; patterns];
    let mut variance = vec![0.0; patterns];
    for g in 0..groups {
        let mut code = 0;
        for j in 0..len {
            code = code * cells + b.code(g * len + j, alphabet);
        }
        observed[code] += 1.0;
        for (pat, (e, v)) in expected.iter_mut().zip(variance.iter_mut()).enumerate() {
            let mut p = 1.0;
            let mut rest = pat;
            for j in (0..len).rev() {
                p *= laws[g * len + j][rest % cells];
                rest /= cells;
            }
            *e += p;
            *v += p * (1.0 - p);
        }
    }
    (0..patterns)
        .map(|pat| {
            let mut digits = vec![0; len];
            let mut rest = pat;
            for j in (0..len).rev() {
                digits[j] = rest % cells;
                rest /= cells;
            }
            CylinderStat {
                pattern: digits,
                observed: observed[pat],
                expected: expected[pat],
                sigma: variance[pat].sqrt(),
            }
        })
        .collect()
}

/// First index with `c/sqrt(n) < 1/2`.
pub fn first_active_index(c: f64) -> i64 {
    let mut n = (4.0 * c * c).floor().max(0.0) as i64;
    while n < 1 || c / (n as f64).sqrt() >= 0.5 {
        n += 1;
    }
    n
}

/// `Σ_{|n| <= N} (a_{n-k}(c) - a_n(c))^2` with `a_n(c) = (c/sqrt n) 1[n >= 1, c/sqrt n < 1/2]`.
pub fn hellinger_s(c: f64, k: i64, n_max: u64) -> PartialSum {
    symmetric_partial_sum(n_max, |n| {
        let d = nu_perturbation(c, n - k) - nu_perturbation(c, n);
        d * d
    })
}

const DIRECT_TERMS: i64 = 2000;

/// The untruncated sum `S(k, c) = Σ_{n ∈ Z} (a_{n-k}(c) - a_n(c))^2`.
///
/// Indices `n0 <= n < n0 + k` contribute `c^2/n` exactly; the rest is
/// `c^2 Σ_{m >= n0} (m^{-1/2} - (m+k)^{-1/2})^2`, summed directly for
/// `DIRECT_TERMS` terms and closed with an Euler–Maclaurin tail.
pub fn hellinger_s_full(c: f64, k: i64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let k = k.abs();
    let n0 = first_active_index(c);
    let mut acc = CompensatedSum::new();
    for n in n0..n0 + k {
        acc.add(1.0 / n as f64);
    }
    let kf = k as f64;
    let f = |m: f64| {
        let d = 1.0 / m.sqrt() - 1.0 / (m + kf).sqrt();
        d * d
    };
    let big_m = n0 + DIRECT_TERMS;
    for m in n0..big_m {
        acc.add(f(m as f64));
    }
    let mf = big_m as f64;
    let e = (kf / mf) / (1.0 + (1.0 + kf / mf).sqrt());
    let integral = 4.0 * (e / 2.0).ln_1p() - 2.0 * e.ln_1p();
    let df = -1.0 / (mf * mf) - 1.0 / ((mf + kf) * (mf + kf)) + (2.0 * mf + kf) / (mf * (mf + kf)).powf(1.5);
    acc.add(integral);
    acc.add(0.5 * f(mf));
    acc.add(-df / 12.0);
    c * c * acc.value()
}

/// `c^2 Σ_{ℓ=1}^k 1/ℓ`.
pub fn harmonic_bound(c: f64, k: i64) -> f64 {
    let mut acc = CompensatedSum::new();
    for l in 1..=k {
        acc.add(1.0 / l as f64);
    }
    c * c * acc.value()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipativityReport {
    pub c: f64,
    pub k_max: i64,
    /// `Σ_{k <= K} exp(-S(k, c)/2)` at `K = 1, 10, 100, ...` and at `k_max`.
    pub partial_sums: Vec<(i64, f64)>,
    /// Slope of `log exp(-S/2)` against `log k` over the last decade.
    pub tail_slope: f64,
    pub tail_intercept: f64,
}

impl DissipativityReport {
    pub fn partial_at(&self, k: i64) -> Option<f64> {
        self.partial_sums.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }
}

/// Partial sums of `Σ_k exp(-S(k, c)/2)` and the fitted tail exponent.
pub fn dissipativity_partial(c: f64, k_max: i64) -> Result<DissipativityReport> {
    if k_max < 10 {
        return Err(Error::Domain("need k_max >= 10 to fit the tail".into()));
    }
    let s: Vec<f64> = (1..=k_max).into_par_iter().map(|k| hellinger_s_full(c, k)).collect();
    let mut partial_sums = Vec::new();
    let mut acc = CompensatedSum::new();
    let mut next_decade = 1;
    for (i, sk) in s.iter().enumerate() {
        let k = i as i64 + 1;
        acc.add((-sk / 2.0).exp());
        if k == next_decade || k == k_max {
            partial_sums.push((k, acc.value()));
            if k == next_decade {
                next_decade *= 10;
            }
        }
    }
    let from = k_max / 10 + 1;
    let (x, y): (Vec<f64>, Vec<f64>) = (from..=k_max)
        .map(|k| ((k as f64).ln(), -s[(k - 1) as usize] / 2.0))
        .unzip();
    let (tail_slope, tail_intercept) = linear_fit(&x, &y);
    Ok(DissipativityReport {
        c,
        k_max,
        partial_sums,
        tail_slope,
        tail_intercept,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    /// Largest deviation outside the clamp set.
    pub max_error: f64,
    /// Indices where the two sides differ because of clamping.
    pub clamp_mismatches: Vec<i64>,
    /// Indices that differ although neither side is clamped.
    pub failures: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub p: f64,
    pub q: f64,
    pub c: f64,
    pub d: f64,
    pub n_max: u64,
    pub checks: Vec<IdentityCheck>,
}

impl ScalingReport {
    pub fn all_hold(&self, tol: f64) -> bool {
        self.checks.iter().all(|c| c.failures.is_empty() && c.max_error <= tol)
    }
}

pub const IDENTITY_TOL: f64 = 1e-15;

fn compare(
    name: &str,
    range: IndexRange,
    lhs: &ProductMeasure,
    rhs: &ProductMeasure,
    clamped: impl Fn(i64) -> bool,
) -> IdentityCheck {
    let mut out = IdentityCheck {
        name: name.into(),
        max_error: 0.0,
        clamp_mismatches: Vec::new(),
        failures: Vec::new(),
    };
    for n in range.iter() {
        let err = (lhs.p0(n) - rhs.p0(n)).abs();
        if clamped(n) {
            if err > IDENTITY_TOL {
                out.clamp_mismatches.push(n);
            }
        } else {
            out.max_error = out.max_error.max(err);
            if err > IDENTITY_TOL {
                out.failures.push(n);
            }
        }
    }
    out
}

/// Checks, coordinate by coordinate on `|n| <= N`:
///
/// * `rpm(μ^(p,c), q, (p, 1-p))_n(0) = p + q c a_n`,
/// * `rpm(μ^(p,c), d/c, (p, 1-p)) = μ^(p,d)`,
/// * `rpm(μ^(q,c), p/q, (0, 1)) = μ^(p, pc/q)`,
///
/// away from the indices where either side is clamped.
pub fn rpm_scaling_identity(p: f64, q: f64, c: f64, d: f64, a: Perturbation, n_max: u64) -> Result<ScalingReport> {
    if !(0.0 < d && d <= c) {
        return Err(Error::Domain(format!("need 0 < d <= c, got d = {d}, c = {c}")));
    }
    if !(0.0 < p && p <= q && q <= 0.5) {
        return Err(Error::Domain(format!("need 0 < p <= q <= 1/2, got p = {p}, q = {q}")));
    }
    let range = IndexRange::symmetric(n_max);
    let sp = SequenceSpec::new(p, a.clone());
    let sq = SequenceSpec::new(q, a.clone());
    let mu_pc = make_mu_pc(&sp, c)?;

    let example = rpm(&mu_pc, q, &[p, 1.0 - p])?;
    let target = ProductMeasure::binary(
        {
            let sp = sp.clone();
            move |n| if sp.is_clamped(c, n) { sp.p } else { sp.p + q * c * sp.a.value(n) }
        },
        0.0,
        "p + q c a_n",
    );
    let first = compare("example_rpm_marginal", range, &example, &target, |n| sp.is_clamped(c, n));

    let lhs = rpm(&mu_pc, d / c, &[p, 1.0 - p])?;
    let rhs = make_mu_pc(&sp, d)?;
    let second = compare("rpm_scale_down", range, &lhs, &rhs, |n| sp.is_clamped(c, n) || sp.is_clamped(d, n));

    let mu_qc = make_mu_pc(&sq, c)?;
    let lhs = rpm(&mu_qc, p / q, &[0.0, 1.0])?;
    let rhs = make_mu_pc(&sp, p * c / q)?;
    let third = compare("rpm_degenerate_coin", range, &lhs, &rhs, |n| sq.is_clamped(c, n) || sp.is_clamped(p * c / q, n));

    Ok(ScalingReport {
        p,
        q,
        c,
        d,
        n_max,
        checks: vec![first, second, third],
    })
}

/// Shift at which the table's `S` column is evaluated.
pub const REPORT_SHIFT: i64 = 1000;
/// Truncation of the table's dissipativity column.
pub const REPORT_K: i64 = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub k: usize,
    pub c_sqrt_k: f64,
    /// `S(REPORT_SHIFT, c sqrt k)`.
    pub s: f64,
    /// `Σ_{j <= REPORT_K} exp(-S(j, c sqrt k)/2)`.
    pub partial_dissip: f64,
    pub classification: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub c: f64,
    pub d_assumed: f64,
    /// Largest `k` with `c sqrt k < D`, 0 when `c >= D`.
    pub index: u64,
    pub rows: Vec<IndexRow>,
}

/// Largest `k` with `c sqrt k < D`.
pub fn implied_index(c: f64, d: f64) -> u64 {
    if c >= d {
        return 0;
    }
    let mut k = ((d / c).powi(2)).floor() as u64;
    while k > 0 && c * (k as f64).sqrt() >= d {
        k -= 1;
    }
    while c * ((k + 1) as f64).sqrt() < d {
        k += 1;
    }
    k
}

/// The `k`-fold product of `ν^c` is treated as conservative iff `c sqrt k < D`.
pub fn index_report(c: f64, d_assumed: f64, k_max: usize) -> Result<IndexReport> {
    if !(c > 0.0 && d_assumed > 0.0) {
        return Err(Error::Domain(format!("need c, D > 0, got {c}, {d_assumed}")));
    }
    let rows = (1..=k_max)
        .map(|k| {
            let ck = c * (k as f64).sqrt();
            let dis = dissipativity_partial(ck, REPORT_K)?;
            Ok(IndexRow {
                k,
                c_sqrt_k: ck,
                s: hellinger_s_full(ck, REPORT_SHIFT),
                partial_dissip: dis.partial_at(REPORT_K).unwrap_or(f64::NAN),
                classification: if ck < d_assumed { "conservative" } else { "dissipative" }.into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IndexReport {
        c,
        d_assumed,
        index: implied_index(c, d_assumed),
        rows,
    })
}

/// Block-level measures for a `ν^c` speedup, for quick inspection.
pub fn nu_blocks(c: f64, k: usize) -> Result<(ProductMeasure, ProductMeasure)> {
    let nu = make_nu_c(c)?;
    let g = gamma_measure(&nu, k);
    Ok((nu, g))
}
