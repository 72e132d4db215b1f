//! End-to-end acceptance checks, one printed line per criterion.
//!
//! Every expected value is recomputed here from first principles (direct
//! sums, brute-force simulation, closed forms) rather than read back from the
//! library. Two criteria are known to be out of reach and are listed in
//! `KNOWN_UNATTAINABLE`; they are still computed and printed as FAIL with the
//! reason, but they do not fail the test run.

use nbshift::factor::{bias_square_sum, run_iid_factor, FactorRun};
use nbshift::index::{
    block_kakutani_sum, de_interleave, dissipativity_partial, hellinger_s, hellinger_s_full, implied_index,
    index_report, pi_interleave, rpm_scaling_identity, unblock, zeta,
};
use nbshift::markers::decompose;
use nbshift::matching::{meshalkin_match, monotone_coupling, AbSequence, Letter};
use nbshift::measure::{log_rn_swap, make_mu_pc, make_nu_c, rpm, Perturbation, SequenceSpec};
use nbshift::sampling::{sample_window, uniform};
use nbshift::typeiii::{pushforward_density, ratio_profile, HMapSpec, TypeIIISpec};
use nbshift::{IndexRange, ProductMeasure, SeedStream, Symbol, Window};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Criteria that cannot be met as stated, with the reason printed next to them.
const KNOWN_UNATTAINABLE: &[(u32, &str)] = &[
    (
        5,
        "about 9e3 fair bits come out of 1e6 inputs, so the sampling error of a lag correlation is ~0.0105 and |r| < 0.01 is below the noise floor",
    ),
    (
        12,
        "S(k,c) grows like 2c^2 log k, so the summand decays like k^(-c^2) rather than k^(-c^2/2); for c = 1.5 the decade increment is ~0.35",
    ),
];

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

fn record(out: &mut Vec<Outcome>, id: u32, pass: bool, detail: String) {
    let known = KNOWN_UNATTAINABLE.iter().find(|(k, _)| *k == id);
    let tag = match (pass, known) {
        (true, _) => "PASS".to_string(),
        (false, Some((_, why))) => format!("FAIL (known: {why})"),
        (false, None) => "FAIL".to_string(),
    };
    println!("criterion {id:>2}: {tag} | {detail}");
    out.push(Outcome { id, pass, detail });
}

// ---------------------------------------------------------------------------
// oracles

fn oracle_markers(bits: &[Symbol]) -> Vec<usize> {
    (0..bits.len().saturating_sub(2))
        .filter(|&i| bits[i] == 0 && bits[i + 1] == 1 && bits[i + 2] == 1)
        .collect()
}

fn criterion_1() -> (bool, String) {
    let failures: usize = (0..=20u32)
        .into_par_iter()
        .map(|len| {
            (0u64..1 << len)
                .into_par_iter()
                .filter(|&code| {
                    let bits: Vec<Symbol> = (0..len).map(|j| ((code >> j) & 1) as Symbol).collect();
                    let expect = oracle_markers(&bits);
                    let d = decompose(&Window::new(0, bits.clone()));
                    let got: Vec<usize> = d.markers.iter().map(|&m| m as usize).collect();
                    if got != expect || got.windows(2).any(|w| w[1] < w[0] + 3) {
                        return true;
                    }
                    let mut cover = vec![0u8; bits.len()];
                    for &m in &got {
                        for c in &mut cover[m..m + 3] {
                            *c += 1;
                        }
                    }
                    for f in &d.fillers {
                        for n in f.first..=f.last {
                            cover[n as usize] += 1;
                        }
                    }
                    cover.iter().any(|&c| c != 1)
                })
                .count()
        })
        .sum();
    (failures == 0, format!("binary words of length <= 20: {failures} failures"))
}

fn good_count(bits: &[Symbol]) -> usize {
    const G1: [Symbol; 8] = [0, 1, 1, 0, 1, 0, 1, 1];
    const G2: [Symbol; 8] = [0, 1, 1, 1, 0, 0, 1, 1];
    bits.chunks_exact(8).filter(|c| *c == G1 || *c == G2).count()
}

fn criterion_2() -> (bool, String) {
    let blocks = 1_000_000usize;
    let fair = ProductMeasure::iid_binary(0.5).unwrap();
    let w = sample_window(&fair, IndexRange::with_len(0, 8 * blocks), &SeedStream::new(21));
    let p = 2.0 / 256.0;
    let sigma = (p * (1.0 - p) / blocks as f64).sqrt();
    let freq = good_count(&w.values) as f64 / blocks as f64;
    let z = (freq - p) / sigma;
    let mut pass = z.abs() < 4.0;
    let mut detail = format!("fair: freq {freq:.6} vs 1/128, z = {z:.2}");
    for (name, m, delta) in [
        ("iid 0.3", ProductMeasure::iid_binary(0.3).unwrap(), 0.3),
        // nu^0.2 on [1, 8e6]: the smallest mass is 1/2 - 0.2 at n = 1
        ("nu^0.2", make_nu_c(0.2).unwrap(), 0.5 - 0.2),
    ] {
        let w = sample_window(&m, IndexRange::with_len(1, 8 * blocks), &SeedStream::new(22));
        // blocks start at 1 + 8j
        let freq = good_count(&w.values) as f64 / blocks as f64;
        let lb = f64::powi(delta, 8);
        let s = (lb * (1.0 - lb) / blocks as f64).sqrt();
        pass &= freq >= lb - 4.0 * s;
        detail += &format!("; {name}: freq {freq:.6} >= delta^8 = {lb:.2e}");
    }
    (pass, detail)
}

/// Rounds straight from the inductive definition.
fn oracle_rounds(letters: &[Letter], d: usize) -> Vec<Option<usize>> {
    let mut alive: Vec<(usize, Letter, usize)> = letters.iter().enumerate().map(|(i, &l)| (i, l, 0)).collect();
    let mut partner = vec![None; letters.len()];
    loop {
        let mut next = Vec::new();
        let mut changed = false;
        let mut i = 0;
        let mut gone = vec![false; alive.len()];
        while i + 1 < alive.len() {
            if alive[i].1 == Letter::B && alive[i + 1].1 == Letter::A {
                partner[alive[i].0] = Some(alive[i + 1].0);
                alive[i + 1].2 += 1;
                gone[i] = true;
                changed = true;
            }
            i += 1;
        }
        for (j, e) in alive.iter().enumerate() {
            if !(gone[j] || (e.1 == Letter::A && e.2 >= d)) {
                next.push(*e);
            }
        }
        alive = next;
        if !changed {
            return partner;
        }
    }
}

fn oracle_walk(letters: &[Letter], d: usize, m: usize) -> Option<usize> {
    let mut s = -1i64;
    for (k, l) in letters.iter().enumerate().skip(m + 1) {
        s += if *l == Letter::A { d as i64 } else { -1 };
        if s >= 0 {
            return Some(k);
        }
    }
    None
}

fn criterion_3() -> (bool, String) {
    let (mut matcher, mut walk) = (0usize, 0usize);
    for len in 0..=14u32 {
        for code in 0u32..1 << len {
            let letters: Vec<Letter> = (0..len).map(|j| if (code >> j) & 1 == 1 { Letter::A } else { Letter::B }).collect();
            let z = AbSequence::new(0, letters.clone());
            for d in 1..=3 {
                let fast = meshalkin_match(&z, d).unwrap();
                let slow = oracle_rounds(&letters, d);
                for (i, l) in letters.iter().enumerate() {
                    if *l != Letter::B {
                        continue;
                    }
                    let got = fast.partner(i as i64).map(|a| a as usize);
                    if got != slow[i] {
                        matcher += 1;
                    }
                    if oracle_walk(&letters, d, i) != got {
                        walk += 1;
                    }
                }
            }
        }
    }
    (
        matcher == 0 && walk == 0,
        format!("AB words <= 14, d <= 3: {matcher} matcher disagreements, {walk} walk disagreements"),
    )
}

fn criterion_4() -> (bool, String) {
    let stream = SeedStream::new(4);
    let (q, q2, d, len) = (0.2, 0.35, 4usize, 300usize);
    let violations: usize = (0..10_000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.rng(i);
            let z = AbSequence::new(0, (0..len).map(|_| if uniform(&mut rng) < q { Letter::A } else { Letter::B }).collect());
            let z2 = monotone_coupling(&z, q, q2, &mut rng).unwrap();
            assert!(z.letters.iter().zip(&z2.letters).all(|(a, b)| *a == Letter::B || *b == Letter::A));
            let m1 = meshalkin_match(&z, d).unwrap();
            let m2 = meshalkin_match(&z2, d).unwrap();
            (0..len as i64)
                .filter(|&b| z.get(b) == Some(Letter::B) && z2.get(b) == Some(Letter::B))
                .filter(|&b| match (m1.partner(b), m2.partner(b)) {
                    (Some(a1), Some(a2)) => a2 - b > a1 - b,
                    (Some(_), None) => true,
                    _ => false,
                })
                .count()
        })
        .sum();
    (violations == 0, format!("10^4 coupled pairs: {violations} violations"))
}

fn oracle_fair_bits(bits: &[Symbol]) -> Vec<Symbol> {
    let m = oracle_markers(bits);
    m.windows(2)
        .filter(|w| w[1] - (w[0] + 3) == 2)
        .filter_map(|w| match (bits[w[0] + 3], bits[w[0] + 4]) {
            (1, 0) => Some(1),
            (0, 1) => Some(0),
            _ => None,
        })
        .collect()
}

fn corr(x: &[f64], lag: usize) -> f64 {
    let a = &x[..x.len() - lag];
    let b = &x[lag..];
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn chi_p(obs: &[f64], exp: &[f64]) -> f64 {
    let stat: f64 = obs.iter().zip(exp).map(|(o, e)| (o - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((obs.len() - 1) as f64).unwrap().cdf(stat)
}

fn criterion_5(run: &FactorRun) -> (bool, String) {
    let oracle = oracle_fair_bits(&run.input.values);
    let same = oracle == run.fair_bits.bits;
    let x: Vec<f64> = oracle.iter().map(|&b| b as f64).collect();
    let mut counts = [0.0; 8];
    for c in oracle.chunks_exact(3) {
        counts[(c[0] * 4 + c[1] * 2 + c[2]) as usize] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    let p = chi_p(&counts, &[total / 8.0; 8]);
    let worst = (1..=8).map(|l| corr(&x, l).abs()).fold(0.0, f64::max);
    let m = ProductMeasure::iid_binary(0.3).unwrap();
    let bias = bias_square_sum(&m, 1_000_000).unwrap().value;
    (
        same && p > 0.001 && worst < 0.01 && bias == 0.0,
        format!(
            "{} fair bits (match oracle: {same}), 3-block chi-square p = {p:.3}, max |r| lag 1..8 = {worst:.4}, bias sum = {bias}",
            oracle.len()
        ),
    )
}

fn criterion_6() -> (bool, String) {
    let c = 1.0 / 6.0;
    let m = make_nu_c(c).unwrap();
    let s = bias_square_sum(&m, 1_000_000).unwrap();
    let p = |n: i64| if n >= 1 && c / (n as f64).sqrt() < 0.5 { 0.5 + c / (n as f64).sqrt() } else { 0.5 };
    let term = |i: i64| {
        let (a, b) = (p(i), p(i + 1));
        let t = a * (1.0 - b) / (a * (1.0 - b) + (1.0 - a) * b) - 0.5;
        t * t
    };
    // smallest terms first, so the small tail is not lost against the head
    let outward = |from: i64, to: i64| -> f64 { (from..=to).rev().map(|i| term(i) + if i > 0 { term(-i) } else { 0.0 }).sum() };
    let direct = outward(0, 1_000_000);
    let decade = outward(100_001, 1_000_000);
    let rel = decade / direct;
    let agree = (s.value - direct).abs() / direct;
    (
        agree <= 1e-12 && rel < 1e-4,
        format!("sum {:.12} (direct {direct:.12}, rel diff {agree:.1e}), last-decade increment / total = {rel:.2e}", s.value),
    )
}

fn criterion_7(run: &FactorRun) -> (bool, String) {
    let range = run.input.range().interior();
    let mut runs: Vec<Vec<u8>> = vec![Vec::new()];
    for n in range.iter() {
        match run.output.get(n) {
            Some(b) => runs.last_mut().unwrap().push(b),
            None => runs.push(Vec::new()),
        }
    }
    let censored = range.len() - runs.iter().map(|r| r.len()).sum::<usize>();
    let censor = censored as f64 / range.len() as f64;
    let beta0 = run.diagnostics.beta0;
    // beta0 solves (d+1) H(beta) = log 2
    let h = |b: f64| -(b * b.ln() + (1.0 - b) * (1.0 - b).ln());
    let balance = ((run.diagnostics.d + 1) as f64 * h(beta0) - 2f64.ln()).abs();

    let n: usize = runs.iter().map(|r| r.len()).sum();
    let zeros = runs.iter().flatten().filter(|&&b| b == 0).count() as f64;
    let z = (zeros - n as f64 * beta0) / (n as f64 * beta0 * (1.0 - beta0)).sqrt();

    let mut counts = [0.0; 8];
    for r in &runs {
        for c in r.chunks_exact(3) {
            counts[(c[0] * 4 + c[1] * 2 + c[2]) as usize] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    let exp: Vec<f64> = (0..8u32)
        .map(|code| {
            let k0 = 3 - code.count_ones() as i32;
            total * beta0.powi(k0) * (1.0 - beta0).powi(3 - k0)
        })
        .collect();
    // pool cells expecting fewer than 5 counts, rarest first
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&a, &b| exp[a].total_cmp(&exp[b]));
    let (mut po, mut pe) = (Vec::new(), Vec::new());
    let (mut o, mut e) = (0.0, 0.0);
    for i in order {
        o += counts[i];
        e += exp[i];
        if e >= 5.0 {
            po.push(o);
            pe.push(e);
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 {
        *po.last_mut().unwrap() += o;
        *pe.last_mut().unwrap() += e;
    }
    let p = if po.len() > 1 { chi_p(&po, &pe) } else { 1.0 };

    let mut worst = 0.0f64;
    for lag in 1..=8 {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for r in runs.iter().filter(|r| r.len() > lag) {
            xs.extend(r[..r.len() - lag].iter().map(|&b| b as f64));
            ys.extend(r[lag..].iter().map(|&b| b as f64));
        }
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = xs.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|b| (b - my).powi(2)).sum();
        let r = if vx == 0.0 || vy == 0.0 { 0.0 } else { cov / (vx * vy).sqrt() };
        worst = worst.max(r.abs());
    }
    (
        z.abs() < 4.0 && p > 0.001 && worst < 0.01 && censor < 0.05 && balance < 1e-9,
        format!(
            "d = {}, beta0 = {beta0:.3e}; frequency z = {z:.2}, 3-block p = {p:.3}, max |r| = {worst:.2e}, censored {:.2}%",
            run.diagnostics.d,
            100.0 * censor
        ),
    )
}

/// The closed-form listing, as `(lo, hi, value)` pieces.
fn oracle_listing(lambda: f64, p: f64, a1: f64, an: f64) -> Vec<(f64, f64, f64)> {
    let l = lambda;
    let mut v = Vec::new();
    if an > 0.0 {
        v.push((0.0, an, l + p));
        v.push((an, a1, 1.0 + p));
    } else {
        v.push((0.0, a1, 1.0 + p));
    }
    v.push((a1, a1 + p * a1, 0.0));
    v.push((a1 + p * a1, 1.0 - (l + p) * a1, 1.0));
    v.push((1.0 - (l + p) * a1, 1.0 - l * a1, 0.0));
    if an > 0.0 {
        v.push((1.0 - l * a1, 1.0 - l * an, 1.0 + p / l));
        v.push((1.0 - l * an, 1.0, (1.0 + p) / l));
    } else {
        v.push((1.0 - l * a1, 1.0, 1.0 + p / l));
    }
    v
}

fn eval_pieces(pieces: &[(f64, f64, f64)], x: f64) -> f64 {
    pieces.iter().find(|(lo, hi, _)| x > *lo && x < *hi).map_or(0.0, |p| p.2)
}

fn criterion_8() -> (bool, String) {
    let (l, lp) = (0.25, 0.5);
    let hs = HMapSpec::new(l, lp).unwrap();
    let p = (lp - l) / (1.0 - lp);
    let mut ok = (p - 0.5).abs() < 1e-15 && (hs.p - p).abs() < 1e-15;
    let (mut worst, mut worst_int) = (0.0f64, 0.0f64);
    for n in -3..=12 {
        let pieces = oracle_listing(l, p, hs.a1, hs.base.a(n));
        let integral: f64 = pieces.iter().map(|(lo, hi, v)| (hi - lo) * v).sum();
        worst_int = worst_int.max((integral - 1.0).abs());
        for &(lo, hi, v) in pieces.iter().filter(|p| p.1 - p.0 > 1e-12) {
            for t in [0.05, 0.5, 0.95] {
                let x = lo + t * (hi - lo);
                worst = worst.max((pushforward_density(&hs.base, &hs, n, x) - v).abs());
                worst = worst.max((hs.g_listing(n).eval(x) - v).abs());
            }
        }
    }
    ok &= worst <= 1e-12 && worst_int <= 1e-12;

    // Monte Carlo: U ~ f_n by inverting its three-step CDF by hand, then h(U)
    let samples = 1_000_000usize;
    let mut worst_z = 0.0f64;
    for n in [0i64, 3] {
        let a = hs.base.a(n);
        let inv = |u: f64| {
            if u < l * a {
                u / l
            } else if u < l * a + (1.0 - l * a - a) {
                a + (u - l * a)
            } else {
                (1.0 - l * a) + (u - (1.0 - a)) * l
            }
        };
        let pieces: Vec<(f64, f64, f64)> = oracle_listing(l, p, hs.a1, a).into_iter().filter(|x| x.2 > 0.0).collect();
        let u = SeedStream::new(8).substream(&format!("mc{n}")).coordinate_uniforms(IndexRange::with_len(0, samples));
        let mut counts = vec![0.0; pieces.len()];
        for &ui in &u {
            let v = hs.h(inv(ui));
            if let Some(i) = pieces.iter().position(|(lo, hi, _)| v >= *lo && v < *hi) {
                counts[i] += 1.0;
            }
        }
        for (&(lo, hi, v), &c) in pieces.iter().zip(&counts) {
            let m = v * (hi - lo);
            let se = (samples as f64 * m * (1.0 - m)).sqrt();
            worst_z = worst_z.max(((c - samples as f64 * m) / se).abs());
        }
    }
    ok &= worst_z < 3.0;
    (
        ok,
        format!("p = {p}; max listing error {worst:.1e}, max |integral - 1| {worst_int:.1e}, histogram max |z| {worst_z:.2}"),
    )
}

fn criterion_9() -> (bool, String) {
    let (l, lp) = (0.25, 0.5);
    let hs = HMapSpec::new(l, lp).unwrap();
    let p = hs.p;
    let mut rng = SeedStream::new(9).rng(0);
    let (mut off, mut disagree, mut done) = (0usize, 0usize, 0usize);
    while done < 10_000 {
        let n = -5 + (uniform(&mut rng) * 21.0) as i64;
        let v = uniform(&mut rng);
        let prev = oracle_listing(l, p, hs.a1, hs.base.a(n - 1));
        let cur = oracle_listing(l, p, hs.a1, hs.base.a(n));
        let near = prev.iter().chain(&cur).any(|(lo, hi, _)| (v - lo).abs() < 1e-9 || (v - hi).abs() < 1e-9);
        let (gp, gc) = (eval_pieces(&prev, v), eval_pieces(&cur, v));
        if near || gc == 0.0 {
            continue;
        }
        let ratio = gp / gc;
        if ![lp, 1.0, 1.0 / lp].iter().any(|a| (ratio - a).abs() <= 1e-9) {
            off += 1;
        }
        if (ratio_profile(&hs, n, v).unwrap() - ratio).abs() > 1e-9 {
            disagree += 1;
        }
        done += 1;
    }

    let spec = TypeIIISpec::new(l).unwrap();
    let family = spec.family();
    let f = |n: i64, u: f64| {
        let a = spec.a(n);
        if a > 0.0 && u < a {
            l
        } else if a > 0.0 && u > 1.0 - l * a {
            1.0 / l
        } else {
            1.0
        }
    };
    let mut swap_off = 0usize;
    for _ in 0..10_000 {
        let i = -5 + (uniform(&mut rng) * 21.0) as i64;
        let j = -5 + (uniform(&mut rng) * 21.0) as i64;
        // bias draws towards the short A/B pieces so every lattice value shows up
        let pick = |r: f64, u: f64| if r < 0.3 { u * 0.02 } else if r < 0.6 { 1.0 - u * 0.005 } else { u };
        let (r1, u1, r2, u2) = (uniform(&mut rng), uniform(&mut rng), uniform(&mut rng), uniform(&mut rng));
        let (xi, xj) = (pick(r1, u1), pick(r2, u2));
        let lr = log_rn_swap(&family, i, j, xi, xj).unwrap();
        let oracle = (f(i, xj) * f(j, xi) / (f(i, xi) * f(j, xj))).ln();
        let k = lr / l.ln();
        if (k - k.round()).abs() * l.ln().abs() > 1e-9 || (lr - oracle).abs() > 1e-9 {
            swap_off += 1;
        }
    }
    (
        off == 0 && disagree == 0 && swap_off == 0,
        format!("10^4 ratios: {off} off {{l', 1, 1/l'}}, {disagree} library disagreements; 10^4 swaps: {swap_off} off (log l)Z"),
    )
}

fn nu_p0(c: f64, n: i64) -> f64 {
    if n >= 1 && c / (n as f64).sqrt() < 0.5 {
        0.5 + c / (n as f64).sqrt()
    } else {
        0.5
    }
}

fn criterion_10() -> (bool, String) {
    let c = 0.2;
    let nu = make_nu_c(c).unwrap();
    let stream = SeedStream::new(10);
    let mut trips = 0;
    for k in 1..=4usize {
        let w = sample_window(&nu, IndexRange::with_len(-8 * k as i64, 64 * k), &stream);
        let back = unblock(&zeta(&w, k).unwrap());
        trips += usize::from(back.values != w.values || back.start != w.start);
        let ws: Vec<Window<Symbol>> = (0..k).map(|j| sample_window(&nu, IndexRange::with_len(-3, 50), &stream.substream(&j.to_string()))).collect();
        let back = de_interleave(&pi_interleave(&ws).unwrap());
        trips += back.iter().zip(&ws).filter(|(a, b)| a.values != b.values || a.start != b.start).count();
    }

    let blocks = 100_000usize;
    let mut worst = 0.0f64;
    for k in [2usize, 3] {
        let w = sample_window(&nu, IndexRange::with_len(0, blocks * k), &stream.substream(&format!("blocks{k}")));
        let cells = 1usize << k;
        let law = |n: usize, code: usize| -> f64 {
            (0..k)
                .map(|i| {
                    let bit = (code >> (k - 1 - i)) & 1;
                    let p0 = nu_p0(c, (k * n + i) as i64);
                    if bit == 0 { p0 } else { 1.0 - p0 }
                })
                .product()
        };
        let codes: Vec<usize> = w.values.chunks_exact(k).map(|b| b.iter().fold(0, |a, &s| a * 2 + s as usize)).collect();
        for len in 1..=3usize {
            let patterns = cells.pow(len as u32);
            let groups = blocks / len;
            let mut obs = vec![0.0; patterns];
            let mut exp = vec![0.0; patterns];
            let mut var = vec![0.0; patterns];
            for g in 0..groups {
                let code = (0..len).fold(0, |a, j| a * cells + codes[g * len + j]);
                obs[code] += 1.0;
                for pat in 0..patterns {
                    let mut pr = 1.0;
                    let mut rest = pat;
                    for j in (0..len).rev() {
                        pr *= law(g * len + j, rest % cells);
                        rest /= cells;
                    }
                    exp[pat] += pr;
                    var[pat] += pr * (1.0 - pr);
                }
            }
            for pat in 0..patterns {
                worst = worst.max(((obs[pat] - exp[pat]) / var[pat].sqrt()).abs());
            }
        }
    }

    let k1 = block_kakutani_sum(&nu, 1, 10_000).unwrap().sum.value;
    let mut bound_fail = 0;
    for k in [2usize, 3] {
        let lib = block_kakutani_sum(&nu, k, 10_000).unwrap();
        bound_fail += lib.violations.len();
        for n in -10_000i64..=10_000 {
            let ki = k as i64;
            let base = nu_p0(c, ki * n);
            let bound = (k * k) as f64 * (0..ki).map(|l| (nu_p0(c, ki * n + l) - base).powi(2)).sum::<f64>();
            for code in 0..1usize << k {
                let (mut eta, mut kappa) = (1.0, 1.0);
                for i in 0..k {
                    let bit = (code >> (k - 1 - i)) & 1;
                    let pi = nu_p0(c, ki * n + i as i64);
                    eta *= if bit == 0 { pi } else { 1.0 - pi };
                    kappa *= if bit == 0 { base } else { 1.0 - base };
                }
                if (eta - kappa).powi(2) > bound * (1.0 + 1e-12) + 1e-30 {
                    bound_fail += 1;
                }
            }
        }
    }
    (
        trips == 0 && worst < 4.0 && k1 == 0.0 && bound_fail == 0,
        format!("{trips} round-trip failures, cylinder max |z| = {worst:.2}, k = 1 block sum = {k1}, {bound_fail} bound violations"),
    )
}

fn oracle_term(c: f64, k: i64, n: i64) -> f64 {
    let a = |n: i64| if n >= 1 && c / (n as f64).sqrt() < 0.5 { c / (n as f64).sqrt() } else { 0.0 };
    (a(n - k) - a(n)).powi(2)
}

fn oracle_s(c: f64, k: i64, n_max: i64) -> f64 {
    (-n_max..=n_max).map(|n| oracle_term(c, k, n)).sum()
}

fn criterion_11() -> (bool, String) {
    let c = 0.3;
    let mut fails = 0;
    let mut detail = Vec::new();
    for k in [1i64, 10, 100, 1000] {
        let s = hellinger_s(c, k, 10 * k as u64).value;
        let o = oracle_s(c, k, 10 * k);
        let bound = c * c * ((k as f64).ln() + 1.0);
        if (s - o).abs() > 1e-12 || s < bound {
            fails += 1;
        }
        detail.push(format!("k={k}: S={s:.4} >= {bound:.4}"));
    }
    (fails == 0, detail.join(", "))
}

fn criterion_12() -> (bool, String) {
    // the untruncated sums agree with brute force plus the k^2/(8 N^2) tail
    let mut worst_rel = 0.0f64;
    for (c, k) in [(1.5, 1000i64), (0.5, 10_000), (1.0, 37)] {
        let big_n = 20_000_000i64;
        // chunked so rounding stays well below the tail correction
        let brute: f64 = (-big_n / 10_000..=big_n / 10_000)
            .map(|j| (j * 10_000..(j + 1) * 10_000).filter(|n| n.abs() <= big_n).map(|n| oracle_term(c, k, n)).sum::<f64>())
            .sum();
        let tail = c * c * (k * k) as f64 / (8.0 * (big_n * big_n) as f64);
        let full = hellinger_s_full(c, k);
        worst_rel = worst_rel.max((full - brute - tail).abs() / full);
    }
    assert!(worst_rel < 1e-11, "closed-form S off by {worst_rel:e}");
    let mut pass = true;
    let mut detail = Vec::new();
    for c in [0.5, 1.0, 1.5] {
        let r = dissipativity_partial(c, 10_000).unwrap();
        // independent regression over the last decade
        let (xs, ys): (Vec<f64>, Vec<f64>) = (1001..=10_000i64).map(|k| ((k as f64).ln(), -hellinger_s_full(c, k) / 2.0)).unzip();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope - r.tail_slope).abs() < 1e-9);
        let target = -c * c / 2.0;
        pass &= ((slope - target) / target).abs() <= 0.05;
        detail.push(format!("c={c}: slope {slope:.3} vs {target:.3}"));
        if c == 1.5 {
            let inc = r.partial_at(10_000).unwrap() - r.partial_at(1000).unwrap();
            pass &= inc < 1e-2;
            detail.push(format!("increment 10^3..10^4 = {inc:.3}"));
        }
    }
    (pass, detail.join(", "))
}

fn criterion_13() -> (bool, String) {
    let (p, q, c, d) = (0.3, 0.5, 0.9, 0.3);
    let big_n = 10_000i64;
    let a = |n: i64| if n >= 1 { 1.0 / (n as f64).sqrt() } else { 0.0 };
    let inside = |v: f64| v > 0.0 && v < 1.0;
    let mu = |pp: f64, cc: f64| make_mu_pc(&SequenceSpec::new(pp, Perturbation::InvSqrt), cc).unwrap();
    type Side = Box<dyn Fn(i64) -> f64>;
    type Clamp = Box<dyn Fn(i64) -> bool>;
    // lhs measure, closed form of the right side, clamp set, indices where the clamp changes the answer
    let checks: [(ProductMeasure, Side, Clamp, Vec<i64>); 3] = [
        (
            rpm(&mu(p, c), q, &[p, 1.0 - p]).unwrap(),
            Box::new(move |n| p + q * c * a(n)),
            Box::new(move |n| !inside(p + c * a(n))),
            vec![],
        ),
        (
            rpm(&mu(p, c), d / c, &[p, 1.0 - p]).unwrap(),
            Box::new(move |n| p + d * a(n)),
            Box::new(move |n| !inside(p + c * a(n)) || !inside(p + d * a(n))),
            // p + c = 1.2 at n = 1 only
            vec![1],
        ),
        (
            rpm(&mu(q, c), p / q, &[0.0, 1.0]).unwrap(),
            Box::new(move |n| p + (p * c / q) * a(n)),
            Box::new(move |n| !inside(q + c * a(n)) || !inside(p + p * c / q * a(n))),
            // q + c/sqrt(n) >= 1 for n <= 3
            vec![1, 2, 3],
        ),
    ];
    let lib = rpm_scaling_identity(p, q, c, d, Perturbation::InvSqrt, big_n as u64).unwrap();
    let mut worst = 0.0f64;
    let mut pass = true;
    let mut clamp_total = 0;
    for (i, (lhs, rhs, clamped, expect)) in checks.iter().enumerate() {
        for n in (-big_n..=big_n).filter(|&n| !clamped(n)) {
            worst = worst.max((lhs.p0(n) - rhs(n)).abs());
        }
        let check = &lib.checks[i];
        clamp_total += check.clamp_mismatches.len();
        pass &= check.failures.is_empty() && &check.clamp_mismatches == expect && check.max_error <= 1e-15;
    }
    pass &= worst <= 1e-15;
    (pass, format!("max off-clamp error {worst:.1e}; {clamp_total} clamped coordinates listed"))
}

fn criterion_14() -> (bool, String) {
    let brute = |c: f64, d: f64| (1..10_000_000u64).take_while(|&k| c * (k as f64).sqrt() < d).count() as u64;
    let r = index_report(0.6, 1.0, 5).unwrap();
    let mut pass = r.index == 2 && implied_index(0.6, 1.0) == 2;
    let mut prev = u64::MAX;
    for i in 1..=300 {
        let c = i as f64 * 0.007;
        let idx = implied_index(c, 1.0);
        pass &= idx == brute(c, 1.0) && idx <= prev;
        prev = idx;
    }
    let classes: Vec<&str> = r.rows.iter().map(|x| x.classification.as_str()).collect();
    pass &= classes == ["conservative", "conservative", "dissipative", "dissipative", "dissipative"];
    (pass, format!("index(c = 0.6, D = 1) = {}, classes {classes:?}, monotone on a 300-point grid", r.index))
}

#[test]
fn acceptance() {
    let mut out = Vec::new();
    let run = run_iid_factor(
        &ProductMeasure::iid_binary(0.3).unwrap(),
        IndexRange::with_len(0, 1_000_000),
        &SeedStream::new(7),
    )
    .unwrap();
    let all: Vec<(u32, Box<dyn Fn() -> (bool, String)>)> = vec![
        (1, Box::new(criterion_1)),
        (2, Box::new(criterion_2)),
        (3, Box::new(criterion_3)),
        (4, Box::new(criterion_4)),
        (5, Box::new(|| criterion_5(&run))),
        (6, Box::new(criterion_6)),
        (7, Box::new(|| criterion_7(&run))),
        (8, Box::new(criterion_8)),
        (9, Box::new(criterion_9)),
        (10, Box::new(criterion_10)),
        (11, Box::new(criterion_11)),
        (12, Box::new(criterion_12)),
        (13, Box::new(criterion_13)),
        (14, Box::new(criterion_14)),
    ];
    for (id, f) in all {
        let (pass, detail) = f();
        record(&mut out, id, pass, detail);
    }
    let unexpected: Vec<&Outcome> = out
        .iter()
        .filter(|o| !o.pass && !KNOWN_UNATTAINABLE.iter().any(|(k, _)| *k == o.id))
        .collect();
    assert!(unexpected.is_empty(), "unexpected failures: {:?}", unexpected.iter().map(|o| (o.id, &o.detail)).collect::<Vec<_>>());
}
