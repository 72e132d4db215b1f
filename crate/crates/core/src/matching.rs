//! Capacity-`d` Meshalkin matching of `b`'s to `a`'s.
//!
//! Rounds of the inductive definition: every surviving `b` immediately
//! followed (among survivors) by a surviving `a` is matched to it; matched
//! `b`'s leave, and so do `a`'s holding `d` partners. The final assignment is
//! computed here in one left-to-right pass with a stack of unmatched `b`'s,
//! which also recovers the round in which each pair forms.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markers::{decompose, good_intervals};
use crate::measure::{IndexRange, Symbol};
use crate::sampling::Window;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbSequence {
    pub start: i64,
    pub letters: Vec<Letter>,
}

impl AbSequence {
    pub fn new(start: i64, letters: Vec<Letter>) -> Self {
        Self { start, letters }
    }

    pub fn all_b(range: IndexRange) -> Self {
        Self::new(range.first, vec![Letter::B; range.len()])
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn range(&self) -> IndexRange {
        IndexRange::with_len(self.start, self.letters.len())
    }

    pub fn get(&self, n: i64) -> Option<Letter> {
        if n < self.start {
            return None;
        }
        self.letters.get((n - self.start) as usize).copied()
    }

    pub fn set(&mut self, n: i64, letter: Letter) {
        let i = (n - self.start) as usize;
        self.letters[i] = letter;
    }

    pub fn positions(&self, letter: Letter) -> impl Iterator<Item = i64> + '_ {
        let start = self.start;
        self.letters
            .iter()
            .enumerate()
            .filter(move |(_, l)| **l == letter)
            .map(move |(i, _)| start + i as i64)
    }

    pub fn count(&self, letter: Letter) -> usize {
        self.letters.iter().filter(|l| **l == letter).count()
    }
}

impl fmt::Display for AbSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.letters {
            f.write_str(match l {
                Letter::A => "a",
                Letter::B => "b",
            })?;
        }
        Ok(())
    }
}

impl FromStr for AbSequence {
    type Err = Error;

    /// Parses `a`/`b` letters starting at index 0; whitespace is ignored.
    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                'a' | 'A' => Ok(Letter::A),
                'b' | 'B' => Ok(Letter::B),
                other => Err(Error::Domain(format!("letter {other:?} is not a or b"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(0, letters))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub b: i64,
    pub a: i64,
    /// Round (from 1) of the inductive definition in which the pair forms.
    pub round: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingAssignment {
    pub d: usize,
    /// Sorted by `b`.
    pub pairs: Vec<Pair>,
    /// Partner count of every `a` in the window.
    pub multiplicity: BTreeMap<i64, usize>,
    /// `b`'s whose partner, if any, lies beyond the right edge.
    pub unmatched: Vec<i64>,
}

impl MatchingAssignment {
    pub fn partner(&self, b: i64) -> Option<i64> {
        self.pairs
            .binary_search_by_key(&b, |p| p.b)
            .ok()
            .map(|i| self.pairs[i].a)
    }

    /// Matched `b`'s of every `a`, ascending.
    pub fn partners_by_a(&self) -> BTreeMap<i64, Vec<i64>> {
        let mut out: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
        for p in &self.pairs {
            out.entry(p.a).or_default().push(p.b);
        }
        out
    }

    pub fn max_distance(&self) -> i64 {
        self.pairs.iter().map(|p| p.a - p.b).max().unwrap_or(0)
    }

    /// Capacity and uniqueness checks.
    pub fn validate(&self) -> Result<()> {
        let mut count: BTreeMap<i64, usize> = BTreeMap::new();
        for w in self.pairs.windows(2) {
            if w[0].b >= w[1].b {
                return Err(Error::Precondition(format!("b {} listed twice or out of order", w[1].b)));
            }
        }
        for p in &self.pairs {
            if p.a <= p.b {
                return Err(Error::Precondition(format!("b {} matched to the left", p.b)));
            }
            *count.entry(p.a).or_default() += 1;
        }
        for (a, c) in count {
            if c > self.d || self.multiplicity.get(&a) != Some(&c) {
                return Err(Error::Precondition(format!("a {a} holds {c} partners with capacity {}", self.d)));
            }
        }
        Ok(())
    }

    /// `b_index,a_index,round` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["b_index", "a_index", "round"])?;
        for p in &self.pairs {
            w.write_record([p.b.to_string(), p.a.to_string(), p.round.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Least integer `d >= 8(1 + (1-q)/q) = 8/q`.
pub fn required_d(q: f64) -> Result<usize> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!("q must lie in (0, 1], got {q}")));
    }
    let d = 8.0 / q;
    // 8/q can land a hair above an integer through rounding
    let r = d.round();
    Ok(if (d - r).abs() < 1e-9 * r { r as usize } else { d.ceil() as usize })
}

struct Pending {
    b: i64,
    /// Latest removal round among elements between this `b` and the next
    /// pending `b` (or the scan position).
    gap: u32,
}

pub fn meshalkin_match(z: &AbSequence, d: usize) -> Result<MatchingAssignment> {
    if d == 0 {
        return Err(Error::Domain("capacity d must be positive".into()));
    }
    let mut stack: Vec<Pending> = Vec::new();
    let mut pairs = Vec::new();
    let mut multiplicity = BTreeMap::new();
    for (i, &l) in z.letters.iter().enumerate() {
        let n = z.start + i as i64;
        match l {
            Letter::B => stack.push(Pending { b: n, gap: 0 }),
            Letter::A => {
                let mut taken = 0;
                let mut last_round = 0;
                while taken < d {
                    let Some(top) = stack.pop() else { break };
                    let round = top.gap + 1;
                    pairs.push(Pair { b: top.b, a: n, round });
                    if let Some(next) = stack.last_mut() {
                        next.gap = next.gap.max(round);
                    }
                    last_round = round;
                    taken += 1;
                }
                if taken == d {
                    // the saturated a leaves at the end of its last round
                    if let Some(next) = stack.last_mut() {
                        next.gap = next.gap.max(last_round);
                    }
                }
                multiplicity.insert(n, taken);
            }
        }
    }
    pairs.sort_by_key(|p| p.b);
    Ok(MatchingAssignment {
        d,
        pairs,
        multiplicity,
        unmatched: stack.into_iter().map(|p| p.b).collect(),
    })
}

/// `R = min{k >= 1 : W_m + ... + W_{m+k} >= 0}` with `W = -1` on `b` and `d`
/// on `a`; `None` when the window ends first.
pub fn matching_radius(z: &AbSequence, d: usize, m: i64) -> Result<Option<usize>> {
    if z.get(m) != Some(Letter::B) {
        return Err(Error::Domain(format!("index {m} does not hold a b")));
    }
    let mut walk = -1i64;
    for (k, n) in (m + 1..z.start + z.len() as i64).enumerate() {
        walk += match z.get(n).unwrap() {
            Letter::A => d as i64,
            Letter::B => -1,
        };
        if walk >= 0 {
            return Ok(Some(k + 1));
        }
    }
    Ok(None)
}

/// `z2` dominates `z` when every `a` of `z` is an `a` of `z2`.
pub fn dominates(z: &AbSequence, z2: &AbSequence) -> Result<bool> {
    if z.range() != z2.range() {
        return Err(Error::RangeMismatch(format!("{} vs {}", z.range(), z2.range())));
    }
    Ok(z
        .letters
        .iter()
        .zip(&z2.letters)
        .all(|(x, y)| *x == Letter::B || *y == Letter::A))
}

/// Monotone coupling: each `b` of `z` turns into `a` with probability
/// `(q2 - q)/(1 - q)`, so an i.i.d. `q`-sequence becomes an i.i.d.
/// `q2`-sequence dominating it.
pub fn monotone_coupling<R: Rng>(z: &AbSequence, q: f64, q2: f64, rng: &mut R) -> Result<AbSequence> {
    if !(0.0..1.0).contains(&q) || !(q..=1.0).contains(&q2) {
        return Err(Error::Domain(format!("need 0 <= q < 1 and q <= q2 <= 1, got {q}, {q2}")));
    }
    let flip = (q2 - q) / (1.0 - q);
    let mut out = z.clone();
    for l in out.letters.iter_mut() {
        if *l == Letter::B && rng.gen::<f64>() < flip {
            *l = Letter::A;
        }
    }
    Ok(out)
}

/// Number of `b`s of `z` (still `b` in `z2`) whose match in `z2` is missing
/// or farther than in `z`. Zero whenever `z2` dominates `z`.
pub fn domination_violations(z: &AbSequence, z2: &AbSequence, d: usize) -> Result<usize> {
    if !dominates(z, z2)? {
        return Err(Error::Precondition("second sequence does not dominate the first".into()));
    }
    let before = match_distances(&meshalkin_match(z, d)?);
    let after = match_distances(&meshalkin_match(z2, d)?);
    Ok(before
        .iter()
        .filter(|(b, dist)| z2.get(**b) == Some(Letter::B) && after.get(*b).map_or(true, |g| g > *dist))
        .count())
}

/// `(Z', Z)`: `Z'` has an `a` at every special-filler start, `Z` only at
/// `8n + 3` for good blocks `8n + [0, 7]`.
pub fn good_to_ab(w: &Window<Symbol>) -> (AbSequence, AbSequence) {
    let range = w.range();
    let mut zp = AbSequence::all_b(range);
    for s in decompose(w).specials {
        zp.set(s.index, Letter::A);
    }
    let mut z = AbSequence::all_b(range);
    for s in good_intervals(w, 0) {
        z.set(s + 3, Letter::A);
    }
    (zp, z)
}

/// Match distance of every matched `b`.
pub fn match_distances(m: &MatchingAssignment) -> BTreeMap<i64, i64> {
    m.pairs.iter().map(|p| (p.b, p.a - p.b)).collect()
}

/// `(k, count)` rows of the matching-radius histogram; censored radii are
/// reported under `k = -1`.
pub fn radius_histogram(z: &AbSequence, d: usize) -> Result<BTreeMap<i64, u64>> {
    let mut hist = BTreeMap::new();
    for m in z.positions(Letter::B).collect::<Vec<_>>() {
        let k = matching_radius(z, d, m)?.map(|k| k as i64).unwrap_or(-1);
        *hist.entry(k).or_insert(0) += 1;
    }
    Ok(hist)
}

pub fn write_histogram_csv<W: Write>(hist: &BTreeMap<i64, u64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "count"])?;
    for (k, c) in hist {
        w.write_record([k.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Round-by-round simulation of the matching straight from its inductive
/// definition: every `b` directly followed by a live `a` pairs with it, then
/// matched `b`s and saturated `a`s leave. Quadratic; meant for auditing
/// [`meshalkin_match`] on short words.
pub fn match_by_rounds(z: &AbSequence, d: usize) -> (Vec<Pair>, Vec<i64>) {
    let mut alive: Vec<(i64, Letter, usize)> = z
        .letters
        .iter()
        .enumerate()
        .map(|(i, &l)| (z.start + i as i64, l, 0))
        .collect();
    let mut pairs = Vec::new();
    let mut round = 0;
    loop {
        round += 1;
        let mut matched_b = vec![false; alive.len()];
        let mut any = false;
        for i in 0..alive.len().saturating_sub(1) {
            if alive[i].1 == Letter::B && alive[i + 1].1 == Letter::A {
                pairs.push(Pair {
                    b: alive[i].0,
                    a: alive[i + 1].0,
                    round,
                });
                alive[i + 1].2 += 1;
                matched_b[i] = true;
                any = true;
            }
        }
        if !any {
            break;
        }
        let mut next = Vec::new();
        for (i, e) in alive.iter().enumerate() {
            let gone = matched_b[i] || (e.1 == Letter::A && e.2 >= d);
            if !gone {
                next.push(*e);
            }
        }
        alive = next;
    }
    pairs.sort_by_key(|p| p.b);
    let unmatched = alive.iter().filter(|e| e.1 == Letter::B).map(|e| e.0).collect();
    (pairs, unmatched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::ProductMeasure;
    use crate::sampling::{sample_window, SeedStream};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn word(code: u32, len: u32) -> AbSequence {
        AbSequence::new(
            0,
            (0..len)
                .map(|j| if (code >> j) & 1 == 1 { Letter::A } else { Letter::B })
                .collect(),
        )
    }

    #[test]
    fn small_examples() {
        let m = meshalkin_match(&"ba".parse().unwrap(), 1).unwrap();
        assert_eq!(m.pairs, vec![Pair { b: 0, a: 1, round: 1 }]);
        let m = meshalkin_match(&"bba".parse().unwrap(), 2).unwrap();
        assert_eq!(m.partner(0), Some(2));
        assert_eq!(m.partner(1), Some(2));
        assert_eq!(m.pairs[0].round, 2);
        let m = meshalkin_match(&"bbb".parse().unwrap(), 3).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched, vec![0, 1, 2]);
        let z: AbSequence = "ba".parse().unwrap();
        assert_eq!(matching_radius(&z, 1, 0).unwrap(), Some(1));
        assert!(matching_radius(&z, 1, 1).is_err());
        assert_eq!(matching_radius(&"bbbb".parse().unwrap(), 2, 1).unwrap(), None);
    }

    #[test]
    fn required_d_values() {
        assert_eq!(required_d(0.5).unwrap(), 16);
        assert_eq!(required_d(1.0 / 128.0).unwrap(), 1024);
        assert_eq!(required_d(1.0).unwrap(), 8);
        assert_eq!(required_d(0.3).unwrap(), 27);
        assert!(required_d(0.0).is_err());
    }

    #[test]
    fn exhaustive_agreement_with_rounds() {
        for len in 0..=12u32 {
            for code in 0..(1u32 << len) {
                let z = word(code, len);
                for d in 1..=3 {
                    let fast = meshalkin_match(&z, d).unwrap();
                    fast.validate().unwrap();
                    let (pairs, unmatched) = match_by_rounds(&z, d);
                    assert_eq!(fast.pairs, pairs, "{z} d={d}");
                    assert_eq!(fast.unmatched, unmatched, "{z} d={d}");
                    for m in z.positions(Letter::B) {
                        let r = matching_radius(&z, d, m).unwrap();
                        assert_eq!(r.map(|k| m + k as i64), fast.partner(m), "{z} d={d} m={m}");
                    }
                }
            }
        }
    }

    #[test]
    fn domination() {
        let z: AbSequence = "abba".parse().unwrap();
        assert!(dominates(&z, &z).unwrap());
        assert!(dominates(&"bbbb".parse().unwrap(), &z).unwrap());
        assert!(!dominates(&"ab".parse().unwrap(), &"ba".parse().unwrap()).unwrap());
        assert!(dominates(&"ab".parse().unwrap(), &"abb".parse().unwrap()).is_err());
    }

    #[test]
    fn realization_rows() {
        let bits: Vec<Symbol> = "01101011000000111001101101110011".bytes().map(|b| b - b'0').collect();
        let (zp, z) = good_to_ab(&Window::new(0, bits));
        assert_eq!(zp.positions(Letter::A).collect::<Vec<_>>(), vec![3, 16, 27]);
        assert_eq!(z.positions(Letter::A).collect::<Vec<_>>(), vec![3, 27]);
        assert!(dominates(&z, &zp).unwrap());
        let (zp, z) = good_to_ab(&Window::new(0, vec![0; 40]));
        assert_eq!(zp.count(Letter::A) + z.count(Letter::A), 0);
        let all_good: Vec<Symbol> = (0..10).flat_map(|_| [0, 1, 1, 0, 1, 0, 1, 1]).collect();
        let (_, z) = good_to_ab(&Window::new(0, all_good));
        assert_eq!(z.positions(Letter::A).collect::<Vec<_>>(), (0..10).map(|n| 8 * n + 3).collect::<Vec<_>>());
    }

    #[test]
    fn censoring_vanishes_on_fair_input() {
        let m = ProductMeasure::iid_binary(0.5).unwrap();
        let d = required_d(1.0 / 128.0).unwrap();
        let mut prev = 1.0;
        // the walk drift is barely positive at d = 8/q, so the decay is slow
        for (i, n) in [20_000usize, 200_000, 1_000_000].into_iter().enumerate() {
            let w = sample_window(&m, IndexRange::with_len(0, n), &SeedStream::new(40 + i as u64));
            let (_, z) = good_to_ab(&w);
            let a = meshalkin_match(&z, d).unwrap();
            let interior = z.range().interior();
            let bs = z.positions(Letter::B).filter(|n| interior.contains(*n)).count();
            let cens = a.unmatched.iter().filter(|n| interior.contains(**n)).count();
            let frac = cens as f64 / bs as f64;
            assert!(frac <= prev);
            prev = frac;
        }
        assert!(prev < 0.1, "{prev}");
    }

    proptest! {
        #[test]
        fn matching_is_shift_equivariant(code in any::<u64>(), len in 1u32..64, d in 1usize..5, shift in -500i64..500) {
            let z = word(code as u32 ^ (code >> 32) as u32, len.min(32));
            let shifted = AbSequence::new(z.start + shift, z.letters.clone());
            let a = meshalkin_match(&z, d).unwrap();
            let b = meshalkin_match(&shifted, d).unwrap();
            prop_assert_eq!(
                a.pairs.iter().map(|p| (p.b + shift, p.a + shift, p.round)).collect::<Vec<_>>(),
                b.pairs.iter().map(|p| (p.b, p.a, p.round)).collect::<Vec<_>>()
            );
        }

        #[test]
        fn domination_shortens_matches(seed in any::<u64>(), len in 10usize..300, d in 1usize..6) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let q = 0.15;
            let z = AbSequence::new(0, (0..len).map(|_| if rng.gen::<f64>() < q { Letter::A } else { Letter::B }).collect());
            let z2 = monotone_coupling(&z, q, 0.3, &mut rng).unwrap();
            prop_assert!(dominates(&z, &z2).unwrap());
            let before = match_distances(&meshalkin_match(&z, d).unwrap());
            let after = match_distances(&meshalkin_match(&z2, d).unwrap());
            for (b, dist) in before {
                if z2.get(b) == Some(Letter::B) {
                    let got = after.get(&b).copied();
                    prop_assert!(got.is_some_and(|g| g <= dist), "b {} moved from {} to {:?}", b, dist, got);
                }
            }
        }
    }

    #[test]
    fn csv_exports() {
        let z: AbSequence = "bbabba".parse().unwrap();
        let m = meshalkin_match(&z, 2).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "b_index,a_index,round\n0,2,2\n1,2,1\n3,5,2\n4,5,1\n");
        let h = radius_histogram(&z, 2).unwrap();
        assert_eq!(h.get(&1), Some(&2));
        let mut buf = Vec::new();
        write_histogram_csv(&h, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("k,count\n"));
    }
}
