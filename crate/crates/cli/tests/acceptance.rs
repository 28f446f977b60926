//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Soft criteria print SOFT-FAIL instead of failing the run.

use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use rayclass_core::arith::{is_prime, legendre_symbol, sieve_primes};
use rayclass_core::criterion::{
    brute_force_psi_order, build_context, maximal_psi_order, phi_l_matrix, rank_mod,
    ray_class_equals, CriterionUnits,
};
use rayclass_core::density::{
    conjectural_density, empirical_density, exact_truncated_product, local_factor,
};
use rayclass_core::multiquad::{
    has_norm_minus_one_unit, kuroda_class_number, unit_system, MultiquadField, NormMinusOne,
};
use rayclass_core::quadratic::{fundamental_unit, is_squarefree, RealQuadraticField};

const REPORTED_EMPIRICAL: f64 = 0.05176;
const EMPIRICAL_TOLERANCE: f64 = 0.002;
const EMPIRICAL_EXACT_TOLERANCE: f64 = 5e-5;
const REPORTED_DENSITY: f64 = 0.0514218;
const REPORTED_WORKED_DENSITY: f64 = 0.0510458;
const INTERVAL_MAX_WIDTH: f64 = 1e-3;
const INTERVAL_RANGE: (f64, f64) = (0.050, 0.052);

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn line(&mut self, id: &str, pass: bool, soft: bool, detail: String, elapsed: Duration) {
        let tag = match (pass, soft) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "SOFT-FAIL",
        };
        println!("[{tag}] {id}: {detail} ({:.2}s)", elapsed.as_secs_f64());
        if !pass && !soft {
            self.failures.push(id.to_string());
        }
    }
}

fn field(s: &str) -> MultiquadField {
    s.parse().expect("valid field")
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn run_cli(args: &[&str]) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_rayclass"))
        .args(args)
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn c1_field_report(gate: &mut Gate) {
    let t = Instant::now();
    let (code, stdout) = run_cli(&["field-report", "--field", "5,13", "--format", "json"]);
    let elapsed = t.elapsed();
    let report: Value = serde_json::from_slice(&stdout).expect("json report");
    let unit = |d: u64| fundamental_unit(&RealQuadraticField::new(d).unwrap()).unwrap();
    // (a + b√d)/q has norm (a² - d b²)/q²
    let exact_norm = |d: u64| {
        let u = unit(d);
        BigRational::new(
            &u.a * &u.a - BigInt::from(d) * &u.b * &u.b,
            BigInt::from(u.q).pow(2),
        )
    };
    let subfield = |d: u64| {
        report["subfields"]
            .as_array()
            .unwrap()
            .iter()
            .find(|s| s["radical"] == d)
            .cloned()
            .unwrap()
    };
    let checks = [
        (
            "ε5 = (1 + √5)/2",
            subfield(5)["fundamental_unit"] == "(1 + √5)/2",
        ),
        (
            "ε13 = (3 + √13)/2",
            subfield(13)["fundamental_unit"] == "(3 + √13)/2",
        ),
        ("N(ε5) = -1 exactly", exact_norm(5) == ratio(-1, 1)),
        ("N(ε13) = -1 exactly", exact_norm(13) == ratio(-1, 1)),
        ("h(Q(√65)) = 2", subfield(65)["class_number"] == 2),
        ("h(K) = 1", report["class_number"] == 1),
        ("unit index 2", report["unit_index"] == 2),
        ("norm -1 unit", report["norm_minus_one"] == "yes"),
        ("exit status 0", code == 0),
        ("under 1 s", elapsed < Duration::from_secs(1)),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let detail = if failed.is_empty() {
        "units, norms, h(65) = 2, h = 1, index 2, norm -1 present".to_string()
    } else {
        format!("failed: {}", failed.join(", "))
    };
    gate.line(
        "C1 field report Q(√5,√13)",
        failed.is_empty(),
        false,
        detail,
        elapsed,
    );
}

fn c2_empirical(gate: &mut Gate) {
    let k = field("5,13");
    let units = CriterionUnits::new(&unit_system(&k).unwrap()).unwrap();
    let t = Instant::now();
    let single = empirical_density(&units, 200_000, 0, 1).unwrap();
    let t_single = t.elapsed();
    let t = Instant::now();
    let parallel = empirical_density(&units, 200_000, 0, 8).unwrap();
    let t_parallel = t.elapsed();
    let r = single.ratio_f64();
    let within = (r - REPORTED_EMPIRICAL).abs() <= EMPIRICAL_TOLERANCE;
    let exact = (r - REPORTED_EMPIRICAL).abs() <= EMPIRICAL_EXACT_TOLERANCE;
    let pass = within
        && single == parallel
        && t_single <= Duration::from_secs(300)
        && t_parallel <= Duration::from_secs(60);
    let detail = format!(
        "{}/{} = {r:.6}, |Δ| = {:.2e} ≤ {EMPIRICAL_TOLERANCE}; exact ±{EMPIRICAL_EXACT_TOLERANCE}: {}; \
         1 worker {:.1}s, 8 workers {:.1}s",
        single.hits,
        single.total,
        (r - REPORTED_EMPIRICAL).abs(),
        if exact { "reproduced" } else { "not reproduced" },
        t_single.as_secs_f64(),
        t_parallel.as_secs_f64()
    );
    gate.line(
        "C2 empirical density, 200000 primes",
        pass,
        false,
        detail,
        t_single + t_parallel,
    );
}

/// Product through `l = 17` from the definitions alone, optionally with a
/// substitute for the factor at 13.
fn worked_product_oracle(p13: Option<BigRational>) -> BigRational {
    let mut acc = ratio(1, 8);
    for l in [3i64, 5, 7, 11, 13, 17] {
        let degree = if l == 5 || l == 13 {
            (l - 1) / 2
        } else {
            l - 1
        };
        let d_l = ratio((l - 1).pow(3), l.pow(3));
        let p_l = BigRational::one()
            - (BigRational::one() - d_l) / BigRational::from_integer(degree.into());
        acc *= match (&p13, l) {
            (Some(x), 13) => x.clone(),
            _ => p_l,
        };
    }
    acc
}

fn c3_conjectural(gate: &mut Gate) {
    let t = Instant::now();
    let k = field("5,13");
    let est = conjectural_density(&k, NormMinusOne::Yes, 100_000).unwrap();
    let (lo, hi) = (est.lower.to_f64(), est.upper.to_f64());
    let width_ok = est.width() < INTERVAL_MAX_WIDTH;
    let inside = INTERVAL_RANGE.0 <= lo && hi <= INTERVAL_RANGE.1;
    let oracle = worked_product_oracle(None);
    let exact17 = exact_truncated_product(&k, NormMinusOne::Yes, 17).unwrap();
    let factors_ok = local_factor(&k, 3).unwrap().p_l == ratio(35, 54)
        && local_factor(&k, 5).unwrap().p_l == ratio(189, 250)
        && local_factor(&k, 7).unwrap().p_l == ratio(1931, 2058);
    let substituted = worked_product_oracle(Some(ratio(12713, 13812)))
        .to_f64()
        .unwrap();
    let pass = width_ok && inside && exact17 == oracle && factors_ok;
    let detail = format!(
        "D ∈ [{}, {}], width {:.2e} < {INTERVAL_MAX_WIDTH}, inside {:?}: {inside}; \
         l ≤ 17 product {} = {} matches oracle: {}; P3, P5, P7 exact: {factors_ok}; \
         reference {REPORTED_DENSITY} in interval: {}; reference {REPORTED_WORKED_DENSITY} \
         vs l ≤ 17 product with P13 = 12713/13812: {substituted:.7}",
        est.lower.decimal(9),
        est.upper.decimal(9),
        est.width(),
        INTERVAL_RANGE,
        exact17,
        exact17.to_f64().unwrap(),
        exact17 == oracle,
        lo <= REPORTED_DENSITY && REPORTED_DENSITY <= hi,
    );
    gate.line(
        "C3 conjectural density, cutoff 100000",
        pass,
        false,
        detail,
        t.elapsed(),
    );
}

fn c4_oracle(gate: &mut Gate) {
    let t = Instant::now();
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for spec in ["5", "5,13"] {
        let k = field(spec);
        let units = CriterionUnits::new(&unit_system(&k).unwrap()).unwrap();
        for p in (3..=2000u64).filter(|&p| is_prime(p) && k.splits_completely(p)) {
            let ctx = build_context(&k, p).unwrap();
            let verdict = ray_class_equals(&ctx, &units, 0).unwrap().verdict;
            let order = brute_force_psi_order(&ctx, &units).unwrap();
            checked += 1;
            if verdict != (order == maximal_psi_order(p, k.degree())) {
                mismatches.push(format!("{spec}@{p}"));
            }
        }
    }
    let elapsed = t.elapsed();
    let pass = mismatches.is_empty() && elapsed < Duration::from_secs(120);
    let detail = format!(
        "{checked} split primes ≤ 2000 over Q(√5), Q(√5,√13); {} mismatches {:?}",
        mismatches.len(),
        mismatches
    );
    gate.line("C4 oracle equivalence", pass, false, detail, elapsed);
}

fn kuroda_fields() -> Vec<MultiquadField> {
    let rads: Vec<u64> = (2..200).filter(|&d| is_squarefree(d)).collect();
    let mut fields: Vec<MultiquadField> = rads.iter().map(|&d| field(&d.to_string())).collect();
    for (i, &a) in rads.iter().enumerate() {
        for &b in &rads[i + 1..] {
            if let Ok(k) = MultiquadField::new(&[a, b]) {
                fields.push(k);
            }
        }
    }
    let primes: Vec<u64> = sieve_primes(60).unwrap();
    for (i, &a) in primes.iter().enumerate() {
        for (j, &b) in primes.iter().enumerate().skip(i + 1) {
            for &c in &primes[j + 1..] {
                fields.push(MultiquadField::new(&[a, b, c]).unwrap());
            }
        }
    }
    fields
}

fn c5_invariants(gate: &mut Gate) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let specs = [
        "5", "13", "5,13", "2,3", "3,5", "5,29", "2,5", "13,17", "7,11", "2",
    ];
    let prepared: Vec<(MultiquadField, CriterionUnits)> = specs
        .iter()
        .map(|s| {
            let k = field(s);
            let u = CriterionUnits::new(&unit_system(&k).unwrap()).unwrap();
            (k, u)
        })
        .collect();
    let primes = sieve_primes(200_000).unwrap();
    let mut triples = 0;
    let mut row_sum_failures = 0;
    let mut invariance_failures = 0;
    let mut invariance_checked = 0;
    while triples < 10_000 {
        let (k, units) = prepared.choose(&mut rng).unwrap();
        let p = *primes.choose(&mut rng).unwrap();
        if !k.splits_completely(p) {
            continue;
        }
        let mut ctx = build_context(k, p).unwrap();
        let Some(&l) = ctx.odd_ls.choose(&mut rng) else {
            continue;
        };
        let images = ctx.unit_images(units).unwrap();
        let seed = rng.gen_range(0..4);
        let m = match phi_l_matrix(&ctx, &images, l, seed) {
            Ok(m) => m,
            Err(_) => {
                row_sum_failures += 1;
                triples += 1;
                continue;
            }
        };
        triples += 1;
        if m.iter().any(|row| row.iter().sum::<u64>() % l != 0) {
            row_sum_failures += 1;
        }
        if triples % 20 == 0 {
            invariance_checked += 1;
            let rank = rank_mod(&m, l);
            let reseeded = rank_mod(&phi_l_matrix(&ctx, &images, l, seed + 17).unwrap(), l);
            ctx.embeddings.shuffle(&mut rng);
            let permuted_images = ctx.unit_images(units).unwrap();
            let permuted = rank_mod(&phi_l_matrix(&ctx, &permuted_images, l, seed).unwrap(), l);
            if rank != reseeded || rank != permuted {
                invariance_failures += 1;
            }
        }
    }
    let fields = kuroda_fields();
    let mut kuroda_failures = Vec::new();
    for k in &fields {
        if let Err(e) = kuroda_class_number(k) {
            kuroda_failures.push(format!("{}: {e}", k.spec_string()));
        }
    }
    let pass = row_sum_failures == 0 && invariance_failures == 0 && kuroda_failures.is_empty();
    let detail = format!(
        "{triples} (field, p, l) triples, {row_sum_failures} nonzero row sums; \
         {invariance_checked} reseed/permutation checks, {invariance_failures} rank changes; \
         Kuroda integral on {}/{} fields with radicals < 200 {:?}",
        fields.len() - kuroda_failures.len(),
        fields.len(),
        kuroda_failures.iter().take(5).collect::<Vec<_>>()
    );
    gate.line("C5 invariant suite", pass, false, detail, t.elapsed());
}

fn c6_batteries(gate: &mut Gate) {
    let t = Instant::now();
    let mut failures = Vec::new();
    let mut count = 0;
    for d in (3..200u64).filter(|&d| d % 4 == 3 && is_squarefree(d)) {
        count += 1;
        if has_norm_minus_one_unit(&field(&d.to_string())).status != NormMinusOne::No {
            failures.push(format!("{d}"));
        }
    }
    for p in (5..200u64).filter(|&p| p % 4 == 1 && is_prime(p)) {
        count += 1;
        if has_norm_minus_one_unit(&field(&p.to_string())).status != NormMinusOne::Yes {
            failures.push(format!("{p}"));
        }
    }
    let ps: Vec<u64> = (5..100u64).filter(|&p| p % 4 == 1 && is_prime(p)).collect();
    for (i, &p) in ps.iter().enumerate() {
        for &q in &ps[i + 1..] {
            if legendre_symbol(p as i64, q).unwrap() == -1 {
                count += 1;
                let k = MultiquadField::new(&[p, q]).unwrap();
                if has_norm_minus_one_unit(&k).status != NormMinusOne::Yes {
                    failures.push(format!("{p},{q}"));
                }
            }
        }
    }
    let detail = format!("{count} fields, failures {failures:?}");
    gate.line(
        "C6 norm -1 batteries",
        failures.is_empty(),
        false,
        detail,
        t.elapsed(),
    );

    for (spec, expected) in [("5,13,37", 2u64), ("5,13,97", 1)] {
        let t = Instant::now();
        let k = field(spec);
        let result = kuroda_class_number(&k);
        let norm = has_norm_minus_one_unit(&k).status;
        let (pass, detail) = match result {
            Ok(h) => (
                h.class_number == expected && h.candidate_based,
                format!(
                    "h = {} (expected {expected}), candidate-based: {}, unit index {}, norm -1: {norm}",
                    h.class_number, h.candidate_based, h.unit_index
                ),
            ),
            Err(e) => (false, format!("error: {e}")),
        };
        gate.line(
            &format!("C6 soft: class number of Q({spec})"),
            pass,
            true,
            detail,
            t.elapsed(),
        );
    }
}

fn c7_determinism(gate: &mut Gate) {
    let t = Instant::now();
    let args = |w: &'static str| {
        [
            "scan",
            "--field",
            "5,13",
            "--num-primes",
            "10000",
            "--workers",
            w,
        ]
    };
    let (c1, one) = run_cli(&args("1"));
    let (c8, eight) = run_cli(&args("8"));
    let (c8b, reseeded) = run_cli(&[
        "scan",
        "--field",
        "5,13",
        "--num-primes",
        "10000",
        "--workers",
        "8",
        "--seed",
        "99",
    ]);
    let pass = c1 == 0 && c8 == 0 && c8b == 0 && !one.is_empty() && one == eight;
    let detail = format!(
        "{} bytes; 1 vs 8 workers identical: {}; reseeded ζ identical: {}",
        one.len(),
        one == eight,
        one == reseeded
    );
    gate.line(
        "C7 scan determinism, 10000 primes",
        pass,
        false,
        detail,
        t.elapsed(),
    );
}

fn main() {
    // the test harness passes filter arguments; only run on a plain invocation or an
    // explicit "acceptance" filter
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let mut gate = Gate {
        failures: Vec::new(),
    };
    c1_field_report(&mut gate);
    c2_empirical(&mut gate);
    c3_conjectural(&mut gate);
    c4_oracle(&mut gate);
    c5_invariants(&mut gate);
    c6_batteries(&mut gate);
    c7_determinism(&mut gate);
    if gate.failures.is_empty() {
        println!("acceptance: all gated criteria pass");
    } else {
        println!(
            "acceptance: {} gated criteria fail: {:?}",
            gate.failures.len(),
            gate.failures
        );
        std::process::exit(1);
    }
}
