//! The five commands. Each fills in its defaults, computes its metrics and
//! returns the report together with the data files it wants written.

use std::collections::BTreeMap;

use nbshift::factor::{bias_square_sum, run_iid_factor_with_radius, DEFAULT_RADIUS, MAX_LAG, SIGNIFICANCE};
use nbshift::index::{
    block_kakutani_sum, cylinder_stats, de_interleave, dissipativity_partial, eta_marginal, hellinger_s, implied_index,
    index_report, pi_interleave, rpm_scaling_identity, unblock, zeta, IDENTITY_TOL,
};
use nbshift::markers::{check_partition, good_intervals, good_prob};
use nbshift::matching::{
    domination_violations, match_by_rounds, matching_radius, meshalkin_match, monotone_coupling, radius_histogram,
    write_histogram_csv, AbSequence, Letter,
};
use nbshift::measure::{doeblin_delta, log_rn_swap, make_nu_c, shift_sum_series, MeasureSpec, Perturbation};
use nbshift::report::{emit_plot_data, Metric, Report, Series};
use nbshift::sampling::{sample_window, uniform};
use nbshift::stats::{chi_square_gof, serial_correlation};
use nbshift::typeiii::{in_lattice, pushforward_density, ratio_profile, HMapSpec, TypeIIISpec};
use nbshift::{IndexRange, SeedStream, Symbol, Window};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Command, Params, RunConfig};
use crate::CliError;

/// A report plus `(file name, bytes)` pairs to write next to it.
pub struct Outcome {
    pub report: Report,
    pub files: Vec<(String, Vec<u8>)>,
}

pub const DEFAULT_SEED: u64 = 7;

fn set<T: Clone>(slot: &mut Option<T>, default: T) -> T {
    slot.get_or_insert(default).clone()
}

fn csv_bytes(series: &[Series]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    emit_plot_data(series, &mut buf)?;
    Ok(buf)
}

/// Fills defaults into `params` and runs the command.
pub fn dispatch(command: Command, params: &mut Params) -> Result<Outcome, CliError> {
    let (mut report, files) = match command {
        Command::Measure => measure_check(params)?,
        Command::Factor => factor_run(params)?,
        Command::Match => match_run(params)?,
        Command::Typeiii => typeiii_ratios(params)?,
        Command::Index => index_scan(params)?,
    };
    report.config = RunConfig::new(command, params.clone()).echo();
    report.config["command"] = json!(command.name());
    Ok(Outcome { report, files })
}

type Parts = (Report, Vec<(String, Vec<u8>)>);

fn measure_or(p: &mut Params, default: &str) -> Result<MeasureSpec, CliError> {
    if p.measure.is_none() && p.family.is_none() {
        p.measure = Some(default.into());
    }
    Ok(p.measure_spec()?.expect("measure set above"))
}

fn measure_check(p: &mut Params) -> Result<Parts, CliError> {
    let spec = measure_or(p, "nu_c:0.1")?;
    let n = set(&mut p.n, 100_000);
    let ks = set(&mut p.k, vec![1, 2, 5, 10]);
    let blocks = set(&mut p.blocks, 1_000_000);
    let seed = set(&mut p.seed, DEFAULT_SEED);
    let m = spec.build()?;
    let mut r = Report::new("measure check", json!({}));

    let series = shift_sum_series(&spec, &ks, n)?;
    for &k in &ks {
        let last = series.iter().filter(|s| s.k == k).last().expect("one record per decade");
        let rel = if last.value == 0.0 { 0.0 } else { last.tail_increment.abs() / last.value.abs() };
        r.push(Metric::below(format!("kakutani_k{k}_relative_tail"), rel, 1e-2));
    }

    let scan = doeblin_delta(&m, IndexRange::symmetric(n));
    r.push(Metric::above("doeblin_delta", scan.delta, 0.0));

    let range = IndexRange::with_len(0, (8 * blocks) as usize);
    let w = sample_window(&m, range, &SeedStream::new(seed).substream("good-blocks"));
    let count = good_intervals(&w, 0).len() as f64;
    let probs: Vec<f64> = (0..blocks as i64).into_par_iter().map(|j| good_prob(&m, 8 * j)).collect::<Result<_, _>>()?;
    let expected: f64 = probs.iter().sum();
    let var: f64 = probs.iter().map(|q| q * (1.0 - q)).sum();
    let z = (count - expected) / var.sqrt();
    r.push(Metric::new("good_block_z", z, "|z| < 4", z.abs() < 4.0));
    let delta8 = doeblin_delta(&m, range).delta.powi(8);
    let margin = count / blocks as f64 - (delta8 - 4.0 * var.sqrt() / blocks as f64);
    r.push(Metric::new("good_block_doeblin_margin", margin, ">= 0", margin >= 0.0));

    let bias = bias_square_sum(&m, n)?;
    r.push(Metric::below("bias_square_sum_relative_tail", bias.relative_tail(), 1e-4));

    r.extra = json!({
        "measure": m.description(),
        "kakutani_shift_sum": series,
        "doeblin": scan,
        "good_blocks": {"blocks": blocks, "count": count, "expected": expected, "delta_pow_8": delta8},
        "bias_square_sum": bias,
    });
    let plot: Vec<Series> = ks
        .iter()
        .map(|&k| {
            Series::new(
                format!("kakutani k={k}"),
                series.iter().filter(|s| s.k == k).map(|s| (s.n as f64, s.value)).collect(),
            )
        })
        .collect();
    Ok((r, vec![("measure-plot.csv".into(), csv_bytes(&plot)?)]))
}

fn match_run(p: &mut Params) -> Result<Parts, CliError> {
    let seed = set(&mut p.seed, DEFAULT_SEED);
    let q = set(&mut p.q, 0.3);
    let q2 = set(&mut p.q2, 0.5);
    let d = set(&mut p.d, 3);
    let n = set(&mut p.n, 100_000);
    let pairs = set(&mut p.pairs, 10_000);
    let pair_len = set(&mut p.pair_len, 200);
    let word_len = set(&mut p.word_len, 20);
    let ab_len = set(&mut p.ab_len, 14);
    let d_max = set(&mut p.d_max, 3);
    if !(0.0 < q && q <= q2 && q2 < 1.0) {
        return Err(CliError::Config(format!("need 0 < q <= q2 < 1, got {q}, {q2}")));
    }
    if d == 0 || d_max == 0 {
        return Err(CliError::Config("matching capacities must be positive".into()));
    }
    if word_len > 30 || ab_len > 24 {
        return Err(CliError::Config("exhaustive word lengths are capped at 30 (binary) and 24 (AB)".into()));
    }
    let mut r = Report::new("match run", json!({}));

    let partition_failures: usize = (0..=word_len)
        .into_par_iter()
        .map(|len| {
            (0u64..1 << len)
                .into_par_iter()
                .filter(|code| {
                    let word: Vec<Symbol> = (0..len).map(|j| ((code >> j) & 1) as Symbol).collect();
                    check_partition(&Window::new(0, word)).is_err()
                })
                .count()
        })
        .sum();
    r.push(Metric::equals("marker_partition_failures", partition_failures as f64, 0.0));

    let (round_mismatch, walk_mismatch) = (0..=ab_len)
        .into_par_iter()
        .map(|len| {
            let mut rm = 0usize;
            let mut wm = 0usize;
            for code in 0u64..1 << len {
                let z = AbSequence::new(
                    0,
                    (0..len).map(|j| if (code >> j) & 1 == 1 { Letter::A } else { Letter::B }).collect(),
                );
                for dd in 1..=d_max {
                    let fast = meshalkin_match(&z, dd).expect("positive capacity");
                    let (pairs, unmatched) = match_by_rounds(&z, dd);
                    if fast.pairs != pairs || fast.unmatched != unmatched || fast.validate().is_err() {
                        rm += 1;
                    }
                    for b in z.positions(Letter::B) {
                        let walk = matching_radius(&z, dd, b).expect("b position").map(|k| b + k as i64);
                        if walk != fast.partner(b) {
                            wm += 1;
                        }
                    }
                }
            }
            (rm, wm)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    r.push(Metric::equals("meshalkin_round_mismatches", round_mismatch as f64, 0.0));
    r.push(Metric::equals("walk_criterion_mismatches", walk_mismatch as f64, 0.0));

    let stream = SeedStream::new(seed).substream("domination");
    let violations: usize = (0..pairs)
        .into_par_iter()
        .map(|i| -> Result<usize, nbshift::Error> {
            let mut rng = stream.rng(i);
            let z = AbSequence::new(
                0,
                (0..pair_len).map(|_| if uniform(&mut rng) < q { Letter::A } else { Letter::B }).collect(),
            );
            let z2 = monotone_coupling(&z, q, q2, &mut rng)?;
            domination_violations(&z, &z2, d)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    r.push(Metric::equals("domination_violations", violations as f64, 0.0));

    let u = SeedStream::new(seed).substream("radius").coordinate_uniforms(IndexRange::with_len(0, n as usize));
    let z = AbSequence::new(0, u.iter().map(|&x| if x < q { Letter::A } else { Letter::B }).collect());
    let hist = radius_histogram(&z, d)?;
    let total: u64 = hist.values().sum();
    let censored = hist.get(&-1).copied().unwrap_or(0);
    let mut tail = Vec::new();
    let mut above = total - censored;
    for (&k, &c) in hist.range(1..) {
        above -= c;
        tail.push((k as f64, above as f64 / total.max(1) as f64));
    }
    let mut hist_csv = Vec::new();
    write_histogram_csv(&hist, &mut hist_csv)?;
    r.extra = json!({
        "words": {"binary_max_len": word_len, "ab_max_len": ab_len, "d_max": d_max},
        "radius": {"n": n, "q": q, "d": d, "b_count": total, "censored": censored},
    });
    Ok((
        r,
        vec![
            ("match-radius-histogram.csv".into(), hist_csv),
            ("match-plot.csv".into(), csv_bytes(&[Series::new("P(R>k)", tail)])?),
        ],
    ))
}

fn factor_run(p: &mut Params) -> Result<Parts, CliError> {
    let spec = measure_or(p, "iid:0.3")?;
    let n = set(&mut p.n, 1_000_000);
    let seed = set(&mut p.seed, DEFAULT_SEED);
    let radius = set(&mut p.radius, DEFAULT_RADIUS);
    let m = spec.build()?;
    let run = run_iid_factor_with_radius(&m, IndexRange::with_len(0, n as usize), &SeedStream::new(seed), radius)?;
    let mut r = Report::new("factor run", json!({}));

    let bits: Vec<f64> = run.fair_bits.bits.iter().map(|&b| b as f64).collect();
    let mut counts = [0.0; 8];
    for c in run.fair_bits.bits.chunks_exact(3) {
        counts[(c[0] << 2 | c[1] << 1 | c[2]) as usize] += 1.0;
    }
    let expected = vec![counts.iter().sum::<f64>() / 8.0; 8];
    let chi = chi_square_gof(&counts, &expected, 0)?;
    r.push(Metric::new("fair_bits_chi_square_p", chi.p_value, format!("> {SIGNIFICANCE}"), chi.p_value > SIGNIFICANCE));
    let lags: Vec<f64> = (1..=MAX_LAG).map(|lag| serial_correlation(&bits, lag)).collect();
    let worst = lags.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    r.push(Metric::below("fair_bits_max_abs_lag_correlation", worst, 0.01));
    let bias = bias_square_sum(&m, n)?;
    r.push(Metric::equals("bias_square_sum", bias.value, 0.0));

    for t in &run.diagnostics.tests {
        let tol = if t.name == "frequency" {
            "|z| < 4".to_string()
        } else if t.name.starts_with("lag_") {
            "|r| < 0.01".to_string()
        } else {
            format!("p > {SIGNIFICANCE}")
        };
        let value = if t.name.starts_with("chi_square") { t.p_value } else { t.statistic };
        r.push(Metric::new(format!("output_{}", t.name), value, tol, t.pass));
    }
    r.push(Metric::below("output_censor_fraction", run.diagnostics.censor_fraction, 0.05));

    r.extra = json!({
        "measure": m.description(),
        "diagnostics": run.diagnostics,
        "fair_bit_lag_correlations": lags,
        "fair_bit_count": bits.len(),
        "markers": run.decomposition.markers.len(),
    });
    let mut out_csv = Vec::new();
    run.output.to_window().write_csv(&mut out_csv)?;
    let mut match_csv = Vec::new();
    run.assignment.write_csv(&mut match_csv)?;
    let plot = [
        Series::new("fair_bit_lag_r", lags.iter().enumerate().map(|(i, &r)| ((i + 1) as f64, r)).collect()),
        Series::new(
            "output_lag_r",
            run.diagnostics
                .tests
                .iter()
                .filter(|t| t.name.starts_with("lag_"))
                .enumerate()
                .map(|(i, t)| ((i + 1) as f64, t.statistic))
                .collect(),
        ),
    ];
    Ok((
        r,
        vec![
            ("factor-output.csv".into(), out_csv),
            ("factor-matching.csv".into(), match_csv),
            ("factor-plot.csv".into(), csv_bytes(&plot)?),
        ],
    ))
}

const LISTING_INDICES: std::ops::RangeInclusive<i64> = -3..=12;
const HISTOGRAM_INDICES: [i64; 2] = [0, 3];
const RATIO_INDICES: std::ops::RangeInclusive<i64> = -5..=15;

fn typeiii_ratios(p: &mut Params) -> Result<Parts, CliError> {
    let lambda = set(&mut p.lambda, 0.25);
    let lambda_prime = set(&mut p.lambda_prime, 0.5);
    let samples = set(&mut p.samples, 1_000_000);
    let checks = set(&mut p.n, 10_000);
    let seed = set(&mut p.seed, DEFAULT_SEED);
    let hs = HMapSpec::new(lambda, lambda_prime)?;
    let base = hs.base;
    let mut r = Report::new("typeiii ratios", json!({}));
    let mut plot = Vec::new();

    let (mut push_err, mut int_err) = (0.0f64, 0.0f64);
    for n in LISTING_INDICES {
        let g = hs.g_listing(n);
        int_err = int_err.max((g.integral() - 1.0).abs());
        for (lo, hi, val) in g.pieces() {
            for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let x = lo + t * (hi - lo);
                push_err = push_err.max((pushforward_density(&base, &hs, n, x) - val).abs());
            }
        }
        if n == 3 {
            plot.push(Series::new("g_3", g.pieces().map(|(lo, hi, v)| ((lo + hi) / 2.0, v)).collect()));
        }
    }
    r.push(Metric::new("pushforward_max_error", push_err, "<= 1e-12", push_err <= 1e-12));
    r.push(Metric::new("listing_integral_max_error", int_err, "<= 1e-12", int_err <= 1e-12));

    let mut worst_z = 0.0f64;
    for n in HISTOGRAM_INDICES {
        let f = base.f_piecewise(n);
        let g = hs.g_listing(n);
        let bins: Vec<(f64, f64, f64)> = g.pieces().filter(|&(_, _, v)| v > 0.0).collect();
        let u = SeedStream::new(seed)
            .substream(&format!("pushforward-{n}"))
            .coordinate_uniforms(IndexRange::with_len(0, samples as usize));
        let mut counts = vec![0.0; bins.len()];
        for &ui in &u {
            let v = hs.h(f.inverse_cdf(ui));
            if let Some(i) = bins.iter().position(|&(lo, hi, _)| v >= lo && v < hi) {
                counts[i] += 1.0;
            }
        }
        let mut hist = Vec::new();
        for (&(lo, hi, v), &c) in bins.iter().zip(&counts) {
            let mass = v * (hi - lo);
            let se = (samples as f64 * mass * (1.0 - mass)).sqrt();
            worst_z = worst_z.max(((c - samples as f64 * mass) / se).abs());
            hist.push(((lo + hi) / 2.0, c / (samples as f64 * (hi - lo))));
        }
        plot.push(Series::new(format!("h(U) density n={n}"), hist));
    }
    r.push(Metric::below("pushforward_histogram_max_abs_z", worst_z, 3.0));

    let allowed = [lambda_prime, 1.0, 1.0 / lambda_prime];
    let mut rng = SeedStream::new(seed).substream("ratios").rng(0);
    let span = (RATIO_INDICES.end() - RATIO_INDICES.start() + 1) as f64;
    let (mut off, mut done) = (0usize, 0u64);
    while done < checks {
        let n = RATIO_INDICES.start() + (uniform(&mut rng) * span) as i64;
        let v = uniform(&mut rng);
        let Ok(ratio) = ratio_profile(&hs, n, v) else { continue };
        if !allowed.iter().any(|a| (ratio - a).abs() <= 1e-9) {
            off += 1;
        }
        done += 1;
    }
    r.push(Metric::equals("ratio_off_lattice", off as f64, 0.0));

    let f_spec = TypeIIISpec::new(lambda)?;
    let family = f_spec.family();
    let gens = [lambda.ln()];
    let mut rng = SeedStream::new(seed).substream("swaps").rng(0);
    let mut swap_off = 0usize;
    let mut log_rn: BTreeMap<i64, u64> = BTreeMap::new();
    for _ in 0..checks {
        let i = RATIO_INDICES.start() + (uniform(&mut rng) * span) as i64;
        let j = RATIO_INDICES.start() + (uniform(&mut rng) * span) as i64;
        let xi = f_spec.f_piecewise(i).inverse_cdf(uniform(&mut rng));
        let xj = f_spec.f_piecewise(j).inverse_cdf(uniform(&mut rng));
        let lr = log_rn_swap(&family, i, j, xi, xj)?;
        if !in_lattice(lr, &gens, 8, 1e-9) {
            swap_off += 1;
        }
        *log_rn.entry((lr / gens[0]).round() as i64).or_default() += 1;
    }
    r.push(Metric::equals("swap_log_rn_off_lattice", swap_off as f64, 0.0));
    plot.push(Series::new(
        "swap log-RN / log lambda",
        log_rn.iter().map(|(&k, &c)| (k as f64, c as f64)).collect(),
    ));

    r.extra = json!({
        "p": hs.p,
        "a1": hs.a1,
        "balance_error": hs.balance_error(),
        "safe_zone": f_spec.safe_zone(),
        "listing_indices": [LISTING_INDICES.start(), LISTING_INDICES.end()],
        "histogram_indices": HISTOGRAM_INDICES,
        "ratio_indices": [RATIO_INDICES.start(), RATIO_INDICES.end()],
    });
    Ok((r, vec![("typeiii-plot.csv".into(), csv_bytes(&plot)?)]))
}

const BLOCK_C: f64 = 0.2;
const HELLINGER_C: f64 = 0.3;
const HELLINGER_KS: [i64; 4] = [1, 10, 100, 1000];
const DISSIP_CS: [f64; 3] = [0.5, 1.0, 1.5];
/// `(p, q, c, d)` for the coupling identities; `c` is large enough to clamp.
const RPM_PARAMS: (f64, f64, f64, f64) = (0.3, 0.5, 0.9, 0.3);

fn index_scan(p: &mut Params) -> Result<Parts, CliError> {
    let c = set(&mut p.c, 0.6);
    let d_assumed = set(&mut p.d_assumed, 1.0);
    let kmax = set(&mut p.kmax, 4);
    let blocks = set(&mut p.blocks, 100_000);
    let n = set(&mut p.n, 10_000);
    let k_dissip = set(&mut p.k_dissip, 10_000);
    let seed = set(&mut p.seed, DEFAULT_SEED);
    if !(c > 0.0 && d_assumed > 0.0) || kmax == 0 || k_dissip < 1000 {
        return Err(CliError::Config("need c, d_assumed > 0, kmax >= 1 and k_dissip >= 1000".into()));
    }
    let mut r = Report::new("index scan", json!({}));
    let stream = SeedStream::new(seed);

    // blocking and interleaving
    let nu = make_nu_c(BLOCK_C)?;
    let mut trip_failures = 0;
    for k in 1..=5usize {
        let w = sample_window(&nu, IndexRange::with_len(-(k as i64) * 40, 400 * k), &stream.substream("trip"));
        let back = unblock(&zeta(&w, k)?);
        if back.start != w.start || back.values != w.values {
            trip_failures += 1;
        }
        let ws: Vec<Window<Symbol>> = (0..k)
            .map(|j| sample_window(&nu, IndexRange::with_len(-7, 300), &stream.substream(&format!("trip-{j}"))))
            .collect();
        let back = de_interleave(&pi_interleave(&ws)?);
        if back.iter().zip(&ws).any(|(a, b)| a.start != b.start || a.values != b.values) {
            trip_failures += 1;
        }
    }
    r.push(Metric::equals("block_round_trip_failures", trip_failures as f64, 0.0));
    let mut worst_z = 0.0f64;
    for k in [2usize, 3] {
        let w = sample_window(&nu, IndexRange::with_len(0, blocks as usize * k), &stream.substream(&format!("zeta-{k}")));
        let b = zeta(&w, k)?;
        for len in 1..=3 {
            for s in cylinder_stats(&b, 2, len, |m| eta_marginal(&nu, k, m).expect("width in range")) {
                worst_z = worst_z.max(s.z().abs());
            }
        }
    }
    r.push(Metric::below("cylinder_max_abs_z", worst_z, 4.0));
    let k1 = block_kakutani_sum(&nu, 1, n)?;
    r.push(Metric::equals("block_kakutani_k1", k1.sum.value, 0.0));
    let mut block_rows = Vec::new();
    let mut bound_violations = 0;
    for k in [2usize, 3] {
        let b = block_kakutani_sum(&nu, k, n)?;
        bound_violations += b.violations.len();
        block_rows.push(b);
    }
    r.push(Metric::equals("block_bound_violations", bound_violations as f64, 0.0));

    // Hellinger lower bound
    let mut hell = Vec::new();
    let mut hell_fail = 0;
    for k in HELLINGER_KS {
        let s = hellinger_s(HELLINGER_C, k, 10 * k as u64).value;
        let bound = HELLINGER_C * HELLINGER_C * ((k as f64).ln() + 1.0);
        if s < bound {
            hell_fail += 1;
        }
        hell.push(json!({"k": k, "S": s, "bound": bound}));
    }
    r.push(Metric::equals("hellinger_bound_failures", hell_fail as f64, 0.0));

    // dissipativity tail
    let mut dissip = Vec::new();
    let mut plot = Vec::new();
    for cc in DISSIP_CS {
        let d = dissipativity_partial(cc, k_dissip)?;
        let target = -cc * cc / 2.0;
        let rel = (d.tail_slope - target).abs() / target.abs();
        r.push(Metric::new(format!("tail_slope_c{cc}"), d.tail_slope, format!("within 5% of {target}"), rel <= 0.05));
        if cc == 1.5 {
            let inc = d.partial_at(k_dissip).unwrap_or(f64::NAN) - d.partial_at(k_dissip / 10).unwrap_or(f64::NAN);
            r.push(Metric::below("dissip_increment_c1.5", inc, 1e-2));
        }
        plot.push(Series::new(format!("partial dissipativity c={cc}"), d.partial_sums.iter().map(|&(k, v)| (k as f64, v)).collect()));
        dissip.push(d);
    }
    plot.push(Series::new(
        "S(k,0.3)",
        (1..=100).map(|k| ((k as f64).ln(), hellinger_s(HELLINGER_C, k, 10 * k as u64).value)).collect(),
    ));

    // coupling identities
    let (rp, rq, rc, rd) = RPM_PARAMS;
    let scaling = rpm_scaling_identity(rp, rq, rc, rd, Perturbation::InvSqrt, n)?;
    for chk in &scaling.checks {
        r.push(Metric::new(
            format!("rpm_{}_max_error", chk.name),
            chk.max_error,
            format!("<= {IDENTITY_TOL} off the clamp set"),
            chk.max_error <= IDENTITY_TOL && chk.failures.is_empty(),
        ));
    }
    let mismatches: usize = scaling.checks.iter().map(|c| c.clamp_mismatches.len()).sum();
    r.push(Metric::new("rpm_clamp_mismatches", mismatches as f64, "finite, listed", true));

    // index classification
    let table = index_report(c, d_assumed, kmax)?;
    let consistent = table
        .rows
        .iter()
        .all(|row| (row.k as u64 <= table.index) == (row.classification == "conservative"));
    r.push(Metric::new("ergodic_index", table.index as f64, "largest k with c sqrt k < D", consistent));
    let mut monotone_fail = 0;
    let mut prev = u64::MAX;
    for i in 1..=400 {
        let idx = implied_index(i as f64 * 0.005, d_assumed);
        if idx > prev {
            monotone_fail += 1;
        }
        prev = idx;
    }
    r.push(Metric::equals("index_monotone_violations", monotone_fail as f64, 0.0));

    let mut table_csv = String::from("k,c_sqrt_k,S,partial_dissip,classification\n");
    for row in &table.rows {
        table_csv.push_str(&format!("{},{},{},{},{}\n", row.k, row.c_sqrt_k, row.s, row.partial_dissip, row.classification));
    }
    r.extra = json!({
        "index_report": table,
        "block_sums": block_rows,
        "hellinger": hell,
        "dissipativity": dissip,
        "rpm_scaling": scaling,
        "fixed": {
            "block_c": BLOCK_C,
            "hellinger_c": HELLINGER_C,
            "dissip_cs": DISSIP_CS,
            "rpm_p_q_c_d": [rp, rq, rc, rd],
        },
    });
    Ok((
        r,
        vec![
            ("index-table.csv".into(), table_csv.into_bytes()),
            ("index-plot.csv".into(), csv_bytes(&plot)?),
        ],
    ))
}
