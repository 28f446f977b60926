use std::fmt::Write as _;

use serde_json::{json, Value};

use rayclass_core::arith::{factorize_trial, is_prime};
use rayclass_core::criterion::{
    brute_force_psi_order, build_context, evaluate_prime, maximal_psi_order, ray_class_equals,
    CriterionUnits, PrimeVerdict, LATTICE_MAX_PRIME,
};
use rayclass_core::density::{conjectural_density, local_factor, p2_factor, scan, Empirical};
use rayclass_core::multiquad::{
    has_norm_minus_one_unit, kuroda_class_number_with, unit_system, MultiquadField, NormMinusOne,
    UnitSystem,
};
use rayclass_core::quadratic::{class_number, fundamental_unit, RealQuadraticField};
use rayclass_core::{Error, Result};

use crate::config::{Format, RunConfig};

/// Rendered command output, plus an error to report after writing it.
pub struct Report {
    pub body: String,
    pub failure: Option<Error>,
}

impl From<String> for Report {
    fn from(body: String) -> Self {
        Report {
            body,
            failure: None,
        }
    }
}

fn pretty(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&v).expect("json values serialize");
    s.push('\n');
    s
}

fn criterion_units(field: &MultiquadField) -> Result<(UnitSystem, CriterionUnits)> {
    let units = unit_system(field)?;
    let prepared = CriterionUnits::new(&units)?;
    Ok((units, prepared))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

pub fn field_report(cfg: &RunConfig) -> Result<Report> {
    let field = &cfg.field;
    let units = unit_system(field)?;
    let norm = has_norm_minus_one_unit(field);
    let mut subfields = Vec::new();
    for s in field.quadratic_subfields() {
        let q = RealQuadraticField::new(s)?;
        let u = fundamental_unit(&q)?;
        subfields.push((s, u.to_string(), u.norm, class_number(&q)?));
    }
    let (h, candidate_based) = if field.m() == 1 {
        (subfields[0].3, false)
    } else {
        let k = kuroda_class_number_with(field, &units)?;
        (k.class_number, k.candidate_based)
    };
    let support = if field.m() > 2 {
        "unsupported: the unit system is candidate-based"
    } else if norm.status == NormMinusOne::Yes {
        "supported"
    } else {
        "verdict false at every prime: no unit of norm -1"
    };
    if cfg.format == Format::Json {
        return Ok(pretty(json!({
            "field": field.spec_string(),
            "degree": field.degree(),
            "subfields": subfields.iter().map(|(s, u, n, h)| json!({
                "radical": s, "fundamental_unit": u, "norm": n, "class_number": h,
            })).collect::<Vec<_>>(),
            "norm_minus_one": norm.status.to_string(),
            "norm_minus_one_rule": norm.rule.to_string(),
            "unit_system": units.generators.iter().map(|g| json!({
                "label": g.label, "element": g.element.render(field), "norm": g.norm,
            })).collect::<Vec<_>>(),
            "unit_index": units.index_over_subfield_units(),
            "class_number": h,
            "candidate_based": candidate_based,
            "criterion": support,
        }))
        .into());
    }
    let mut out = String::new();
    writeln!(out, "field           {field}").unwrap();
    writeln!(out, "degree          {}", field.degree()).unwrap();
    writeln!(out, "subfields").unwrap();
    for (s, u, n, h) in &subfields {
        let name = format!("Q(√{s})");
        writeln!(out, "  {name:<10}  ε = {u:<28} N(ε) = {n:>2}  h = {h}").unwrap();
    }
    writeln!(out, "norm -1 unit    {} ({})", norm.status, norm.rule).unwrap();
    writeln!(out, "unit system").unwrap();
    for g in &units.generators {
        writeln!(
            out,
            "  {} = {}  (norm {})",
            g.label,
            g.element.render(field),
            g.norm
        )
        .unwrap();
    }
    writeln!(out, "unit index      {}", units.index_over_subfield_units()).unwrap();
    let flag = if candidate_based {
        " (candidate-based)"
    } else {
        ""
    };
    writeln!(out, "class number    {h}{flag}").unwrap();
    writeln!(out, "criterion       {support}").unwrap();
    Ok(out.into())
}

fn ranks_of(v: &PrimeVerdict) -> Vec<(u64, usize)> {
    v.report
        .as_ref()
        .map(|r| r.per_l.iter().map(|x| (x.l, x.rank)).collect())
        .unwrap_or_default()
}

pub fn check(cfg: &RunConfig) -> Result<Report> {
    let p = cfg.prime.expect("validated");
    if !is_prime(p) {
        return Err(Error::Input(format!("{p} is not prime")));
    }
    let (_, units) = criterion_units(&cfg.field)?;
    let v = evaluate_prime(&units, p, factorize_trial(p - 1)?, cfg.seed)?;
    let required = cfg.field.degree() - 1;
    if cfg.format == Format::Json {
        return Ok(pretty(json!({
            "field": cfg.field.spec_string(),
            "p": p,
            "p_mod4": p % 4,
            "split": v.split,
            "odd_ls": v.odd_ls,
            "ranks": ranks_of(&v).iter().map(|(l, r)| json!({
                "l": l, "rank": r, "required": required, "pass": *r == required,
            })).collect::<Vec<_>>(),
            "outcome": v.outcome.describe(),
            "verdict": v.verdict(),
        }))
        .into());
    }
    let mut out = String::new();
    writeln!(out, "field     {}", cfg.field).unwrap();
    writeln!(out, "p         {p}").unwrap();
    writeln!(out, "p mod 4   {}", p % 4).unwrap();
    writeln!(out, "split     {}", yes_no(v.split)).unwrap();
    let ls: Vec<String> = v.odd_ls.iter().map(u64::to_string).collect();
    writeln!(
        out,
        "odd l     {}",
        if ls.is_empty() {
            "-".into()
        } else {
            ls.join(", ")
        }
    )
    .unwrap();
    for (l, r) in ranks_of(&v) {
        let mark = if r == required { "pass" } else { "fail" };
        writeln!(out, "  l = {l:<8} rank {r} of {required}  {mark}").unwrap();
    }
    writeln!(out, "verdict   {} ({})", v.verdict(), v.outcome.describe()).unwrap();
    Ok(out.into())
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

pub fn scan_command(cfg: &RunConfig) -> Result<Report> {
    let n = cfg.num_primes.expect("validated");
    let (_, units) = criterion_units(&cfg.field)?;
    eprintln!(
        "scanning {n} primes in {} with {} workers",
        cfg.field, cfg.workers
    );
    let rows = scan(&units, n, cfg.seed, cfg.workers)?;
    let hits = rows.iter().filter(|r| r.verdict()).count();
    let ratio = hits as f64 / n as f64;
    eprintln!("{hits} of {n} primes pass");
    if cfg.format == Format::Json {
        return Ok(pretty(json!({
            "field": cfg.field.spec_string(),
            "num_primes": n,
            "rows": rows.iter().map(|r| json!({
                "p": r.p,
                "split": r.split,
                "p_mod4": r.p % 4,
                "odd_ls": r.odd_ls,
                "ranks": ranks_of(r).iter().map(|x| x.1).collect::<Vec<_>>(),
                "verdict": r.verdict(),
            })).collect::<Vec<_>>(),
            "summary": { "hits": hits, "total": n, "ratio": ratio },
        }))
        .into());
    }
    let mut out = String::with_capacity(n * 24);
    out.push_str("p,split,p_mod4,odd_ls,ranks,verdict\n");
    for r in &rows {
        let ranks = ranks_of(r);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.p,
            r.split,
            r.p % 4,
            join(&r.odd_ls),
            join(ranks.iter().map(|x| x.1)),
            r.verdict()
        )
        .unwrap();
    }
    writeln!(out, "summary,hits={hits},total={n},ratio={ratio:.8},,").unwrap();
    Ok(out.into())
}

pub fn density(cfg: &RunConfig) -> Result<Report> {
    let field = &cfg.field;
    let cutoff = cfg.cutoff.expect("validated");
    let status = has_norm_minus_one_unit(field).status;
    let mut est = conjectural_density(field, status, cutoff)?;
    if let Some(n) = cfg.num_primes {
        let (_, units) = criterion_units(field)?;
        let rows = scan(&units, n, cfg.seed, cfg.workers)?;
        est.empirical = Some(Empirical {
            hits: rows.iter().filter(|r| r.verdict()).count() as u64,
            total: n as u64,
        });
    }
    let shown: Vec<(u64, String)> = std::iter::once((2, p2_factor(status)?.to_string()))
        .chain(
            (3..=cutoff.min(17))
                .filter(|&l| is_prime(l))
                .map(|l| local_factor(field, l).map(|f| (l, f.p_l.to_string())))
                .collect::<Result<Vec<_>>>()?,
        )
        .collect();
    if cfg.format == Format::Json {
        return Ok(pretty(json!({
            "field": field.spec_string(),
            "cutoff": cutoff,
            "local_factors": shown.iter().map(|(l, p)| json!({"l": l, "P": p})).collect::<Vec<_>>(),
            "truncated_product": [est.truncated_lo.decimal(20), est.truncated_hi.decimal(20)],
            "tail_lower_factor": est.tail_lower_factor.decimal(20),
            "interval": [est.lower.decimal(20), est.upper.decimal(20)],
            "width": est.width(),
            "empirical": est.empirical.as_ref().map(|e| json!({
                "hits": e.hits, "total": e.total, "ratio": e.ratio_f64(),
            })),
        }))
        .into());
    }
    let mut out = String::new();
    writeln!(out, "field              {field}").unwrap();
    writeln!(out, "cutoff             {cutoff}").unwrap();
    for (l, p) in &shown {
        writeln!(out, "  P_{l:<4} {p}").unwrap();
    }
    writeln!(out, "truncated product  {}", est.truncated_hi.decimal(12)).unwrap();
    writeln!(
        out,
        "tail lower factor  {}",
        est.tail_lower_factor.decimal(12)
    )
    .unwrap();
    writeln!(
        out,
        "interval           [{}, {}]",
        est.lower.decimal(12),
        est.upper.decimal(12)
    )
    .unwrap();
    writeln!(out, "width              {:.3e}", est.width()).unwrap();
    if let Some(e) = &est.empirical {
        writeln!(
            out,
            "empirical          {}/{} = {:.8}",
            e.hits,
            e.total,
            e.ratio_f64()
        )
        .unwrap();
    }
    Ok(out.into())
}

pub fn verify(cfg: &RunConfig) -> Result<Report> {
    let bound = cfg.bound.expect("validated");
    if bound > LATTICE_MAX_PRIME {
        return Err(Error::Resource(format!(
            "bound {bound} exceeds the oracle limit {LATTICE_MAX_PRIME}"
        )));
    }
    let field = &cfg.field;
    let (_, units) = criterion_units(field)?;
    let n = field.degree();
    let mut rows = Vec::new();
    for p in (3..=bound).filter(|&p| is_prime(p) && field.splits_completely(p)) {
        let ctx = build_context(field, p)?;
        let verdict = if units.has_norm_minus_one() {
            ray_class_equals(&ctx, &units, cfg.seed)?.verdict
        } else {
            false
        };
        let order = brute_force_psi_order(&ctx, &units)?;
        let maximal = maximal_psi_order(p, n);
        rows.push((p, verdict, order, maximal, verdict == (order == maximal)));
    }
    let mismatches = rows.iter().filter(|r| !r.4).count();
    let failure = (mismatches > 0).then(|| {
        Error::Invariant(format!(
            "{mismatches} of {} split primes disagree with the oracle",
            rows.len()
        ))
    });
    let body = if cfg.format == Format::Json {
        pretty(json!({
            "field": field.spec_string(),
            "bound": bound,
            "rows": rows.iter().map(|&(p, v, o, m, a)| json!({
                "p": p, "criterion": v, "psi_order": o, "maximal": m, "agree": a,
            })).collect::<Vec<_>>(),
            "split_primes": rows.len(),
            "mismatches": mismatches,
        }))
    } else {
        let mut out = String::new();
        writeln!(
            out,
            "{:>8}  {:>9}  {:>20}  {:>20}  result",
            "p", "criterion", "psi order", "2(p-1)^(n-1)"
        )
        .unwrap();
        for &(p, v, o, m, a) in &rows {
            let mark = if a { "pass" } else { "FAIL" };
            writeln!(out, "{p:>8}  {v:>9}  {o:>20}  {m:>20}  {mark}").unwrap();
        }
        writeln!(out, "{} split primes, {mismatches} mismatches", rows.len()).unwrap();
        out
    };
    Ok(Report { body, failure })
}
