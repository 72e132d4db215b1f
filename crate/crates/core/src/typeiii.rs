//! Step-density families with three values `λ, 1, 1/λ`, the piecewise linear
//! coordinate map `h` and its pushforward, and the mixing/erasing
//! constructions on `[-1, 1]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{meshalkin_match, AbSequence, Letter};
use crate::measure::{DensityFamily, IndexRange, PiecewiseDensity};
use crate::sampling::{SeedStream, Window};

/// `a_n = 1/((n + offset + 4) log(n + offset + 4))` for `n >= first_active`,
/// else 0; `A_n = (0, a_n)`, `B_n = (1 - λ a_n, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeIIISpec {
    pub lambda: f64,
    pub first_active: i64,
    pub offset: i64,
}

impl TypeIIISpec {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Domain(format!("lambda must lie in (0, 1), got {lambda}")));
        }
        Ok(Self {
            lambda,
            first_active: 2,
            offset: 0,
        })
    }

    pub fn a(&self, n: i64) -> f64 {
        if n < self.first_active {
            return 0.0;
        }
        let m = (n + self.offset + 4) as f64;
        1.0 / (m * m.ln())
    }

    pub fn a_interval(&self, n: i64) -> (f64, f64) {
        (0.0, self.a(n))
    }

    pub fn b_interval(&self, n: i64) -> (f64, f64) {
        (1.0 - self.lambda * self.a(n), 1.0)
    }

    pub fn f_density(&self, n: i64, u: f64) -> f64 {
        let a = self.a(n);
        if a == 0.0 {
            1.0
        } else if u > 0.0 && u < a {
            self.lambda
        } else if u > 1.0 - self.lambda * a && u < 1.0 {
            1.0 / self.lambda
        } else {
            1.0
        }
    }

    pub fn f_piecewise(&self, n: i64) -> PiecewiseDensity {
        let a = self.a(n);
        let l = self.lambda;
        PiecewiseDensity::from_pieces(&[(0.0, a, l), (a, 1.0 - l * a, 1.0), (1.0 - l * a, 1.0, 1.0 / l)])
            .expect("valid step density")
    }

    pub fn family(&self) -> DensityFamily {
        let spec = *self;
        DensityFamily::new((0.0, 1.0), move |n| spec.f_piecewise(n), format!("f(lambda={})", self.lambda))
    }

    /// Conditions (a)-(c) on `n` in `range` (active indices only).
    pub fn check_intervals(&self, range: IndexRange) -> Result<()> {
        for n in range.iter().filter(|&n| n >= self.first_active) {
            let (_, a_hi) = self.a_interval(n);
            let (b_lo, _) = self.b_interval(n);
            if a_hi >= b_lo {
                return Err(Error::Domain(format!("A_{n} and B_{n} overlap")));
            }
            if n > self.first_active && (self.a(n) > self.a(n - 1) || self.b_interval(n).0 < self.b_interval(n - 1).0) {
                return Err(Error::Domain(format!("intervals grow at {n}")));
            }
            if ((1.0 - b_lo) - self.lambda * a_hi).abs() > 1e-15 {
                return Err(Error::Domain(format!("|B_{n}| != lambda |A_{n}|")));
            }
        }
        Ok(())
    }

    /// `[0, 1] \ (A_first ∪ B_first)`, where every `f_n` equals 1.
    pub fn safe_zone(&self) -> (f64, f64) {
        let a = self.a(self.first_active);
        (a, 1.0 - self.lambda * a)
    }
}

/// One slanted branch `x -> slope x + intercept` on `(lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearBranch {
    pub lo: f64,
    pub hi: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl LinearBranch {
    fn apply(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    fn image(&self) -> (f64, f64) {
        let (a, b) = (self.apply(self.lo), self.apply(self.hi));
        (a.min(b), a.max(b))
    }
}

/// Parameters of `h` for a target `λ' ∈ (λ, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HMapSpec {
    pub lambda: f64,
    pub lambda_prime: f64,
    pub p: f64,
    pub a1: f64,
    /// The re-indexed density family, active from index 1.
    pub base: TypeIIISpec,
}

impl HMapSpec {
    /// Sets `p = (λ' - λ)/(1 - λ')` and drops leading terms of `a_n` until
    /// `a_1 (1 + p) < 1/2`.
    pub fn new(lambda: f64, lambda_prime: f64) -> Result<Self> {
        if !(0.0 < lambda && lambda < lambda_prime && lambda_prime < 1.0) {
            return Err(Error::Domain(format!("need 0 < lambda < lambda' < 1, got {lambda}, {lambda_prime}")));
        }
        let p = (lambda_prime - lambda) / (1.0 - lambda_prime);
        let mut base = TypeIIISpec {
            lambda,
            first_active: 1,
            offset: 1,
        };
        while base.a(1) * (1.0 + p) >= 0.5 {
            base.offset += 1;
        }
        Ok(Self {
            lambda,
            lambda_prime,
            p,
            a1: base.a(1),
            base,
        })
    }

    /// `(λ + p)/(1 + p) - λ'`, zero up to rounding.
    pub fn balance_error(&self) -> f64 {
        (self.lambda + self.p) / (1.0 + self.p) - self.lambda_prime
    }

    pub fn branches(&self) -> [LinearBranch; 2] {
        let (a1, p, l) = (self.a1, self.p, self.lambda);
        let top = 1.0 - l * a1;
        [
            LinearBranch {
                lo: a1,
                hi: a1 + p * a1,
                slope: 1.0 / p,
                intercept: -a1 / p,
            },
            LinearBranch {
                lo: top - p * a1,
                hi: top,
                slope: -l / p,
                intercept: top + l * top / p,
            },
        ]
    }

    /// Points where `h` is not differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        self.branches().iter().flat_map(|b| [b.lo, b.hi]).collect()
    }

    pub fn h(&self, x: f64) -> f64 {
        for b in self.branches() {
            if x > b.lo && x < b.hi {
                return b.apply(x);
            }
        }
        x
    }

    /// `(u, |h'(u)|)` for every `u` with `h(u) = v` off the kinks.
    pub fn preimages(&self, v: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(2);
        let mut on_branch = false;
        for b in self.branches() {
            if v > b.lo && v < b.hi {
                on_branch = true;
            }
            let (lo, hi) = b.image();
            if v > lo && v < hi {
                out.push(((v - b.intercept) / b.slope, b.slope.abs()));
            }
        }
        if !on_branch && !self.kinks().contains(&v) {
            out.push((v, 1.0));
        }
        out
    }

    /// Closed-form pushforward `g_n` of `f_n` under `h`.
    pub fn g_listing(&self, n: i64) -> PiecewiseDensity {
        let (a1, p, l) = (self.a1, self.p, self.lambda);
        let an = self.base.a(n);
        let mid_hi = 1.0 - (l + p) * a1;
        let top = 1.0 - l * a1;
        let pieces: Vec<(f64, f64, f64)> = if an > 0.0 {
            vec![
                (0.0, an, l + p),
                (an, a1, 1.0 + p),
                (a1, a1 + p * a1, 0.0),
                (a1 + p * a1, mid_hi, 1.0),
                (mid_hi, top, 0.0),
                (top, 1.0 - l * an, 1.0 + p / l),
                (1.0 - l * an, 1.0, (1.0 + p) / l),
            ]
        } else {
            vec![
                (0.0, a1, 1.0 + p),
                (a1, a1 + p * a1, 0.0),
                (a1 + p * a1, mid_hi, 1.0),
                (mid_hi, top, 0.0),
                (top, 1.0, 1.0 + p / l),
            ]
        };
        PiecewiseDensity::from_pieces(&pieces).expect("valid listing")
    }

    pub fn g_family(&self) -> DensityFamily {
        let spec = *self;
        DensityFamily::new(
            (0.0, 1.0),
            move |n| spec.g_listing(n),
            format!("g(lambda={}, lambda'={})", self.lambda, self.lambda_prime),
        )
    }

    /// Closure of the common support of the `g_n`, as disjoint intervals.
    pub fn support(&self) -> Vec<(f64, f64)> {
        let (a1, p, l) = (self.a1, self.p, self.lambda);
        vec![(0.0, a1), (a1 + p * a1, 1.0 - (l + p) * a1), (1.0 - l * a1, 1.0)]
    }
}

/// Density of `h(U)` for `U ~ f_n`, by summing over preimages.
pub fn pushforward_density(spec: &TypeIIISpec, hspec: &HMapSpec, n: i64, v: f64) -> f64 {
    hspec
        .preimages(v)
        .into_iter()
        .map(|(u, slope)| spec.f_density(n, u) / slope)
        .sum()
}

const BREAKPOINT_GUARD: f64 = 1e-12;

/// `g_{n-1}(v) / g_n(v)`.
pub fn ratio_profile(hspec: &HMapSpec, n: i64, v: f64) -> Result<f64> {
    if !hspec.support().iter().any(|&(lo, hi)| v > lo && v < hi) {
        return Err(Error::Domain(format!("{v} is outside the support")));
    }
    let prev = hspec.g_listing(n - 1);
    let cur = hspec.g_listing(n);
    if prev
        .breakpoints()
        .iter()
        .chain(cur.breakpoints())
        .any(|b| (b - v).abs() < BREAKPOINT_GUARD)
    {
        return Err(Error::Domain(format!("{v} sits on a breakpoint")));
    }
    Ok(prev.eval(v) / cur.eval(v))
}

/// Whether `x` lies within `tol` of `{Σ j_i g_i : |j_i| <= max_coeff}`.
pub fn in_lattice(x: f64, generators: &[f64], max_coeff: i64, tol: f64) -> bool {
    fn search(x: f64, gens: &[f64], m: i64, tol: f64) -> bool {
        match gens.split_first() {
            None => x.abs() <= tol,
            Some((g, rest)) => (-m..=m).any(|j| search(x - j as f64 * g, rest, m, tol)),
        }
    }
    search(x, generators, max_coeff, tol)
}

/// `log(d_{n-1}/d_n)` on every piece of the common refinement where both
/// densities are positive.
pub fn generation_log_ratios(family: &DensityFamily, n: i64) -> Vec<f64> {
    let prev = family.at(n - 1);
    let cur = family.at(n);
    let mut cuts: Vec<f64> = prev.breakpoints().iter().chain(cur.breakpoints()).copied().collect();
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            let mid = 0.5 * (w[0] + w[1]);
            let (a, b) = (prev.eval(mid), cur.eval(mid));
            if a > 0.0 && b > 0.0 {
                out.push((a / b).ln());
            }
        }
    }
    out
}

/// Half of `nu` on `[-1, 0)` and half of `rho` on `[0, 1]`.
pub fn mix_disjoint(rho: &DensityFamily, nu: &DensityFamily) -> Result<DensityFamily> {
    let (r_lo, _) = rho.support();
    let (_, n_hi) = nu.support();
    if n_hi > r_lo {
        return Err(Error::Domain(format!(
            "supports overlap: {:?} and {:?}",
            nu.support(),
            rho.support()
        )));
    }
    let (rho2, nu2) = (rho.clone(), nu.clone());
    let description = format!("mix({}, {})", nu.description(), rho.description());
    Ok(DensityFamily::new(
        (nu.support().0, rho.support().1),
        move |n| {
            let left = nu2.at(n).scaled(0.5);
            let right = rho2.at(n).scaled(0.5);
            let mut pieces: Vec<(f64, f64, f64)> = left.pieces().collect();
            let gap_lo = left.support().1;
            let gap_hi = right.support().0;
            if gap_hi > gap_lo {
                pieces.push((gap_lo, gap_hi, 0.0));
            }
            pieces.extend(right.pieces());
            PiecewiseDensity::from_pieces(&pieces).expect("disjoint supports tile")
        },
        description,
    ))
}

/// The safe zone of the negative-side family, shifted to `[-1, 0)`.
fn shifted_safe_zone(nu_spec: &TypeIIISpec) -> (f64, f64) {
    let (lo, hi) = nu_spec.safe_zone();
    (lo - 1.0, hi - 1.0)
}

/// Capacity used when spreading uniforms among negative coordinates: the
/// least `d` with positive drift `d q - (1 - q)`, plus one.
pub fn erase_capacity(q: f64) -> usize {
    (((1.0 - q) / q).ceil() as usize + 1).max(1)
}

/// Splits the 52 leading bits of `t ∈ [0, 1)` into `parts` uniforms.
pub fn split_uniform(t: f64, parts: usize) -> Vec<f64> {
    let bits = (t * (1u64 << 52) as f64) as u64;
    let width = (52 / parts).max(1) as u32;
    (0..parts)
        .map(|j| {
            let chunk = (bits >> (52 - width * (j as u32 + 1)).min(52)) & ((1u64 << width) - 1);
            (chunk as f64 + 0.5) / (1u64 << width) as f64
        })
        .collect()
}

/// Replaces every negative coordinate by a uniform on `[-1, 0)` built from
/// the safe-zone coordinates.
///
/// Negative coordinates are listed in order; those in the safe zone are the
/// `a`'s of a Meshalkin matching with capacity [`erase_capacity`]. Each `a`
/// turns its normalized safe-zone value into `d + 1` uniforms, keeps the
/// first and hands the rest to its partners in ascending order.
/// Non-negative coordinates pass through; unresolved ones become `None`.
pub fn erase_negative_side(w: &Window<f64>, nu_spec: &TypeIIISpec) -> Window<Option<f64>> {
    let (lo, hi) = shifted_safe_zone(nu_spec);
    let q = hi - lo;
    let d = erase_capacity(q);
    let neg: Vec<(usize, f64)> = w
        .values
        .iter()
        .enumerate()
        .filter(|(_, &x)| x < 0.0)
        .map(|(i, &x)| (i, x))
        .collect();
    let z = AbSequence::new(
        0,
        neg.iter()
            .map(|&(_, x)| if x >= lo && x < hi { Letter::A } else { Letter::B })
            .collect(),
    );
    let assignment = meshalkin_match(&z, d).expect("capacity is positive");
    let first_short = z
        .positions(Letter::A)
        .find(|a| assignment.multiplicity.get(a).copied().unwrap_or(0) < d);
    let mut out: Vec<Option<f64>> = w.values.iter().map(|&x| (x >= 0.0).then_some(x)).collect();
    let partners = assignment.partners_by_a();
    for a in z.positions(Letter::A) {
        let (slot, x) = neg[a as usize];
        let u = split_uniform((x - lo) / q, d + 1);
        out[slot] = Some(u[0] - 1.0);
        if Some(a) == first_short {
            continue;
        }
        if let Some(bs) = partners.get(&a) {
            for (j, &b) in bs.iter().enumerate() {
                out[neg[b as usize].0] = Some(u[j + 1] - 1.0);
            }
        }
    }
    Window {
        start: w.start,
        values: out,
        seed: w.seed,
        source: format!("{} with negative side erased", w.source),
    }
}

/// Applies `h(x + 1) - 1` to negative coordinates.
pub fn lift_lambda_on_negative(w: &Window<f64>, hspec: &HMapSpec) -> Window<f64> {
    w.map(|&x| if x < 0.0 { hspec.h(x + 1.0) - 1.0 } else { x })
}

/// Log Radon–Nikodym values `log(g_{m-1}(v)/g_m(v))` of the shift at single
/// coordinates, `v ~ g_m`, with `m` cycling through `1..=n_max`.
pub fn shift_log_ratios(hspec: &HMapSpec, n_max: i64, samples: usize, seeds: &SeedStream) -> Vec<f64> {
    let stream = seeds.substream("log-ratios");
    let u = stream.coordinate_uniforms(IndexRange::with_len(0, samples));
    let listings: Vec<PiecewiseDensity> = (0..=n_max.max(1)).map(|m| hspec.g_listing(m)).collect();
    u.par_iter()
        .enumerate()
        .map(|(i, &u)| {
            let m = 1 + (i as i64 % n_max.max(1));
            let v = listings[m as usize].inverse_cdf(u);
            (listings[m as usize - 1].eval(v) / listings[m as usize].eval(v)).ln()
        })
        .collect()
}
