//! The rank test deciding whether the ray class field of conductor `p`
//! equals `H(ζ_p⁺)`, and the subgroup-order oracle it is checked against.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};

use crate::arith::{
    element_of_order, factorize_trial, inv_mod, is_prime, mul_mod, pow_mod, sqrt_mod, DlogTable,
    PrimeFactorization,
};
use crate::error::{Error, Result};
use crate::multiquad::{MultiquadField, NormMinusOne, UnitSystem};

/// Largest `(p-1)^n` the closure oracle will enumerate.
pub const CLOSURE_BUDGET: u64 = 100_000_000;

/// Largest prime for which the lattice oracle builds a full logarithm table.
pub const LATTICE_MAX_PRIME: u64 = 10_000_000;

/// Unit-system generators prepared for reduction modulo split primes.
#[derive(Debug, Clone)]
pub struct CriterionUnits {
    field: MultiquadField,
    labels: Vec<String>,
    /// Per generator, the nonzero coordinates `(mask, numerator, denominator)`.
    coords: Vec<Vec<(usize, BigInt, BigInt)>>,
    norm_minus_one: bool,
}

impl CriterionUnits {
    /// Fails with `Unsupported` for fields of degree above 4, whose unit
    /// systems are only candidate-based.
    pub fn new(units: &UnitSystem) -> Result<Self> {
        let field = units.field.clone();
        if field.m() > 2 {
            return Err(Error::Unsupported(format!(
                "the criterion is supported for at most 2 radicals; {field} has {}",
                field.m()
            )));
        }
        let coords = units
            .generators
            .iter()
            .map(|g| {
                g.element
                    .coords
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| !c.is_zero())
                    .map(|(s, c)| (s, c.numer().clone(), c.denom().clone()))
                    .collect()
            })
            .collect();
        Ok(CriterionUnits {
            field,
            labels: units.generators.iter().map(|g| g.label.clone()).collect(),
            coords,
            norm_minus_one: units.contains_norm_minus_one == NormMinusOne::Yes,
        })
    }

    pub fn field(&self) -> &MultiquadField {
        &self.field
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn has_norm_minus_one(&self) -> bool {
        self.norm_minus_one
    }
}

/// A completely split prime with a fixed choice of square roots and an
/// ordering of the `n` embeddings `O_K → F_p`.
#[derive(Debug, Clone)]
pub struct SplitPrimeContext {
    pub p: u64,
    pub p_mod_4: u8,
    /// `roots[i]² ≡ d_i`, each in `[1, (p-1)/2]`.
    pub roots: Vec<u64>,
    /// Sign masks: bit `i` set sends `√d_i` to `-roots[i]`. Gray-code order.
    pub embeddings: Vec<usize>,
    pub factorization: PrimeFactorization,
    pub odd_ls: Vec<u64>,
}

pub fn build_context(field: &MultiquadField, p: u64) -> Result<SplitPrimeContext> {
    if !is_prime(p) {
        return Err(Error::Input(format!("{p} is not prime")));
    }
    build_context_with(field, p, factorize_trial(p - 1)?)
}

/// As [`build_context`], reusing a known factorization of `p - 1`.
pub fn build_context_with(
    field: &MultiquadField,
    p: u64,
    factorization: PrimeFactorization,
) -> Result<SplitPrimeContext> {
    if !field.splits_completely(p) {
        return Err(Error::domain(format!(
            "{p} does not split completely in {field}"
        )));
    }
    if factorization.value != p - 1 {
        return Err(Error::domain(format!("factorization is not of {}", p - 1)));
    }
    let roots = field
        .radicals()
        .iter()
        .map(|&d| sqrt_mod(d as i64, p))
        .collect::<Result<Vec<_>>>()?;
    let n = field.degree();
    let embeddings = (0..n).map(|j| j ^ (j >> 1)).collect();
    let odd_ls = factorization.odd_primes();
    Ok(SplitPrimeContext {
        p,
        p_mod_4: (p % 4) as u8,
        roots,
        embeddings,
        factorization,
        odd_ls,
    })
}

impl SplitPrimeContext {
    /// Image of `√s_S` under embedding `sign_mask`, for every mask `S`.
    fn basis_images(&self, field: &MultiquadField, sign_mask: usize) -> Vec<u64> {
        let p = self.p;
        (0..field.degree())
            .map(|s| {
                let mut v = 1u64;
                for (i, &r) in self.roots.iter().enumerate() {
                    if (s >> i) & 1 == 1 {
                        let r = if (sign_mask >> i) & 1 == 1 { p - r } else { r };
                        v = mul_mod(v, r, p);
                    }
                }
                mul_mod(v, inv_mod(field.basis_cofactor(s) % p, p), p)
            })
            .collect()
    }

    /// `images[i][j] = σ_j(u_i) mod p`.
    pub fn unit_images(&self, units: &CriterionUnits) -> Result<Vec<Vec<u64>>> {
        let p = self.p;
        let pb = BigInt::from(p);
        let reduce = |x: &BigInt| x.mod_floor(&pb).to_u64().expect("residue below p");
        let basis: Vec<Vec<u64>> = self
            .embeddings
            .iter()
            .map(|&e| self.basis_images(&units.field, e))
            .collect();
        units
            .coords
            .iter()
            .zip(&units.labels)
            .map(|(coords, label)| {
                let terms: Vec<(usize, u64)> = coords
                    .iter()
                    .map(|(s, num, den)| {
                        let d = reduce(den);
                        (*s, mul_mod(reduce(num), inv_mod(d, p), p))
                    })
                    .collect();
                basis
                    .iter()
                    .map(|b| {
                        let v = terms
                            .iter()
                            .fold(0u64, |acc, &(s, c)| (acc + mul_mod(c, b[s], p)) % p);
                        if v == 0 {
                            Err(Error::invariant(format!(
                                "unit {label} vanishes modulo {p}"
                            )))
                        } else {
                            Ok(v)
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// The `(n-1) × n` matrix of `dlog_ζ(σ_j(u_i)^((p-1)/l))` over `F_l`.
pub fn phi_l_matrix(
    ctx: &SplitPrimeContext,
    images: &[Vec<u64>],
    l: u64,
    seed: u64,
) -> Result<Vec<Vec<u64>>> {
    let p = ctx.p;
    if l == 2 || (p - 1) % l != 0 {
        return Err(Error::domain(format!(
            "{l} is not an odd prime dividing {}",
            p - 1
        )));
    }
    let zeta = element_of_order(l, p, seed)?;
    let table = DlogTable::new(zeta, l, p)?;
    let cofactor = (p - 1) / l;
    let matrix = images
        .iter()
        .map(|row| {
            row.iter()
                .map(|&x| table.log(pow_mod(x, cofactor, p)))
                .collect::<Result<Vec<u64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, row) in matrix.iter().enumerate() {
        if row.iter().fold(0u64, |a, &b| (a + b) % l) != 0 {
            return Err(Error::invariant(format!(
                "row {i} of the φ_{l} matrix at p = {p} does not sum to 0"
            )));
        }
    }
    Ok(matrix)
}

/// Rank of a matrix over `F_l` by Gaussian elimination.
pub fn rank_mod(matrix: &[Vec<u64>], l: u64) -> usize {
    let mut rows: Vec<Vec<u64>> = matrix.to_vec();
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][c] % l != 0) else {
            continue;
        };
        rows.swap(rank, pivot);
        let inv = inv_mod(rows[rank][c] % l, l);
        for r in 0..rows.len() {
            if r != rank && rows[r][c] % l != 0 {
                let f = mul_mod(rows[r][c], inv, l);
                for k in c..cols {
                    let sub = mul_mod(f, rows[rank][k], l);
                    rows[r][k] = (rows[r][k] + l - sub) % l;
                }
            }
        }
        rank += 1;
    }
    rank
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LRank {
    pub l: u64,
    pub rank: usize,
    pub required: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhiRankReport {
    pub p: u64,
    /// `p ≡ 3 mod 4`.
    pub passed_2: bool,
    pub per_l: Vec<LRank>,
    pub verdict: bool,
}

/// The rank criterion for a completely split `p`. Requires a unit of norm -1.
pub fn ray_class_equals(
    ctx: &SplitPrimeContext,
    units: &CriterionUnits,
    seed: u64,
) -> Result<PhiRankReport> {
    if !units.norm_minus_one {
        return Err(Error::Unsupported(format!(
            "{} has no unit of norm -1",
            units.field
        )));
    }
    let passed_2 = ctx.p_mod_4 == 3;
    if !passed_2 {
        return Ok(PhiRankReport {
            p: ctx.p,
            passed_2,
            per_l: Vec::new(),
            verdict: false,
        });
    }
    let images = ctx.unit_images(units)?;
    let required = units.field.degree() - 1;
    let mut per_l = Vec::with_capacity(ctx.odd_ls.len());
    for &l in &ctx.odd_ls {
        let rank = rank_mod(&phi_l_matrix(ctx, &images, l, seed)?, l);
        if rank > required {
            return Err(Error::invariant(format!(
                "φ_{l} matrix at p = {} has rank {rank} > {required}",
                ctx.p
            )));
        }
        per_l.push(LRank {
            l,
            rank,
            required,
            pass: rank == required,
        });
    }
    let verdict = per_l.iter().all(|r| r.pass);
    Ok(PhiRankReport {
        p: ctx.p,
        passed_2,
        per_l,
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ramified,
    NotSplit,
    NoNormMinusOne,
    OneModFour,
    RankDeficient,
    Equal,
}

impl Outcome {
    pub fn describe(self) -> &'static str {
        match self {
            Outcome::Ramified => "ramified",
            Outcome::NotSplit => "not completely split",
            Outcome::NoNormMinusOne => "no unit of norm -1",
            Outcome::OneModFour => "p ≡ 1 mod 4",
            Outcome::RankDeficient => "φ_l rank below n-1",
            Outcome::Equal => "L_p = H(ζ_p⁺)",
        }
    }
}

/// The criterion evaluated at an arbitrary prime, with the shortcuts for
/// primes where it does not apply.
#[derive(Debug, Clone)]
pub struct PrimeVerdict {
    pub p: u64,
    pub split: bool,
    pub outcome: Outcome,
    pub odd_ls: Vec<u64>,
    pub report: Option<PhiRankReport>,
}

impl PrimeVerdict {
    pub fn verdict(&self) -> bool {
        self.outcome == Outcome::Equal
    }
}

pub fn evaluate_prime(
    units: &CriterionUnits,
    p: u64,
    factorization: PrimeFactorization,
    seed: u64,
) -> Result<PrimeVerdict> {
    let field = &units.field;
    let odd_ls = factorization.odd_primes();
    let shortcut = |outcome| PrimeVerdict {
        p,
        split: outcome != Outcome::Ramified && outcome != Outcome::NotSplit,
        outcome,
        odd_ls: odd_ls.clone(),
        report: None,
    };
    if p == 2 || field.discriminant_support().contains(&p) {
        return Ok(shortcut(Outcome::Ramified));
    }
    if !field.splits_completely(p) {
        return Ok(shortcut(Outcome::NotSplit));
    }
    if !units.norm_minus_one {
        return Ok(shortcut(Outcome::NoNormMinusOne));
    }
    if p % 4 == 1 {
        return Ok(shortcut(Outcome::OneModFour));
    }
    let ctx = build_context_with(field, p, factorization)?;
    let report = ray_class_equals(&ctx, units, seed)?;
    Ok(PrimeVerdict {
        p,
        split: true,
        outcome: if report.verdict {
            Outcome::Equal
        } else {
            Outcome::RankDeficient
        },
        odd_ls,
        report: Some(report),
    })
}

fn psi_generators(ctx: &SplitPrimeContext, units: &CriterionUnits) -> Result<Vec<Vec<u64>>> {
    let mut gens = ctx.unit_images(units)?;
    gens.push(vec![ctx.p - 1; ctx.embeddings.len()]);
    Ok(gens)
}

/// Order of the subgroup of `(F_p^×)^n` generated by `-1` and the unit
/// images, by breadth-first closure.
pub fn psi_order_by_closure(ctx: &SplitPrimeContext, units: &CriterionUnits) -> Result<u64> {
    let p = ctx.p;
    let n = ctx.embeddings.len() as u32;
    let states = (p - 1)
        .checked_pow(n)
        .filter(|&s| s <= CLOSURE_BUDGET)
        .ok_or_else(|| {
            Error::Resource(format!(
                "closure over (F_{p}^×)^{n} exceeds {CLOSURE_BUDGET} states"
            ))
        })?;
    let gens = psi_generators(ctx, units)?;
    // state index: Σ (x_j - 1)(p-1)^j
    let encode = |v: &[u64]| v.iter().rev().fold(0u64, |acc, &x| acc * (p - 1) + (x - 1));
    let mut seen = vec![false; states as usize];
    let identity = vec![1u64; n as usize];
    seen[encode(&identity) as usize] = true;
    let mut frontier = vec![identity];
    let mut count = 1u64;
    while let Some(v) = frontier.pop() {
        for g in &gens {
            let w: Vec<u64> = v.iter().zip(g).map(|(&a, &b)| mul_mod(a, b, p)).collect();
            let idx = encode(&w) as usize;
            if !seen[idx] {
                seen[idx] = true;
                count += 1;
                frontier.push(w);
            }
        }
    }
    Ok(count)
}

fn primitive_root(p: u64, factorization: &PrimeFactorization) -> u64 {
    (2..p)
        .find(|&g| {
            factorization
                .primes()
                .all(|q| pow_mod(g, (p - 1) / q, p) != 1)
        })
        .expect("F_p^× is cyclic")
}

/// Order of the subgroup of `(Z/q^e)^n` spanned by `rows`, by elimination
/// over the chain ring `Z/q^e`.
fn local_span_order(rows: &[Vec<u64>], q: u64, e: u32) -> u64 {
    let modulus = q.pow(e);
    let valuation = |mut x: u64| {
        let mut v = 0;
        while x % q == 0 && v < e {
            x /= q;
            v += 1;
        }
        v
    };
    let mut rows: Vec<Vec<u64>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| x % modulus).collect())
        .collect();
    let cols = rows.first().map_or(0, Vec::len);
    let mut order = 1u64;
    for c in 0..cols {
        rows.retain(|r| r.iter().any(|&x| x != 0));
        let Some((pi, v)) = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r[c] != 0)
            .map(|(i, r)| (i, valuation(r[c])))
            .min_by_key(|&(_, v)| v)
        else {
            continue;
        };
        let pivot = rows.swap_remove(pi);
        let qv = q.pow(v);
        let unit_inv = inv_mod_composite(pivot[c] / qv, modulus);
        for r in rows.iter_mut() {
            if r[c] != 0 {
                let f = mul_mod(r[c] / qv, unit_inv, modulus);
                for k in c..cols {
                    r[k] = (r[k] + modulus - mul_mod(f, pivot[k], modulus)) % modulus;
                }
            }
        }
        let ghost = q.pow(e - v);
        rows.push(pivot.iter().map(|&x| mul_mod(x, ghost, modulus)).collect());
        order *= ghost;
    }
    order
}

fn inv_mod_composite(a: u64, m: u64) -> u64 {
    let g = (a as i128).extended_gcd(&(m as i128));
    debug_assert_eq!(g.gcd, 1);
    g.x.rem_euclid(m as i128) as u64
}

/// Order of the same subgroup via full logarithms to a primitive root:
/// the group is the image of the exponent lattice in `(Z/(p-1))^n`.
pub fn psi_order_by_lattice(ctx: &SplitPrimeContext, units: &CriterionUnits) -> Result<u64> {
    let p = ctx.p;
    if p > LATTICE_MAX_PRIME {
        return Err(Error::Resource(format!(
            "logarithm table for p = {p} exceeds the {LATTICE_MAX_PRIME} limit"
        )));
    }
    let g = primitive_root(p, &ctx.factorization);
    let mut log = vec![0u32; p as usize];
    let mut x = 1u64;
    for k in 0..p - 1 {
        log[x as usize] = k as u32;
        x = mul_mod(x, g, p);
    }
    let rows: Vec<Vec<u64>> = psi_generators(ctx, units)?
        .iter()
        .map(|r| r.iter().map(|&v| log[v as usize] as u64).collect())
        .collect();
    Ok(ctx
        .factorization
        .factors
        .iter()
        .map(|&(q, e)| local_span_order(&rows, q, e))
        .product())
}

/// Closure when within budget, otherwise the lattice computation.
pub fn brute_force_psi_order(ctx: &SplitPrimeContext, units: &CriterionUnits) -> Result<u64> {
    let n = ctx.embeddings.len() as u32;
    match (ctx.p - 1).checked_pow(n) {
        Some(s) if s <= CLOSURE_BUDGET => psi_order_by_closure(ctx, units),
        _ => psi_order_by_lattice(ctx, units),
    }
}

/// `2(p-1)^(n-1)`, the largest possible order of the ψ-image.
pub fn maximal_psi_order(p: u64, n: usize) -> u64 {
    2 * (p - 1).pow(n as u32 - 1)
}
