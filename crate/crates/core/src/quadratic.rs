//! Real quadratic fields `Q(√d)`: continued fractions, fundamental units,
//! negative Pell solvability, class numbers by reduced-form cycles, and
//! reduction of units modulo split primes.

use std::collections::HashSet;
use std::fmt;

use num_bigint::BigInt;
use num_integer::{Integer, Roots};
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::arith::{inv_mod, mul_mod};
use crate::error::{Error, Result};

/// Largest discriminant accepted by [`class_number`].
pub const MAX_CLASS_NUMBER_DISCRIMINANT: u64 = 1_000_000;

/// Bit budget for fundamental unit coordinates.
pub const MAX_UNIT_BITS: u64 = 1 << 20;

pub fn is_squarefree(n: u64) -> bool {
    n != 0 && squarefree_part(n) == n
}

/// The squarefree kernel `s` with `n = s·g²`.
pub fn squarefree_part(n: u64) -> u64 {
    assert!(n > 0, "squarefree part of 0");
    let mut rest = n;
    let mut out = 1u64;
    let mut q = 2u64;
    while q * q <= rest {
        let mut e = 0;
        while rest % q == 0 {
            rest /= q;
            e += 1;
        }
        if e % 2 == 1 {
            out *= q;
        }
        q += if q == 2 { 1 } else { 2 };
    }
    out * rest
}

pub fn prime_divisors(n: u64) -> Vec<u64> {
    let mut rest = n;
    let mut out = Vec::new();
    let mut q = 2u64;
    while q * q <= rest {
        if rest % q == 0 {
            out.push(q);
            while rest % q == 0 {
                rest /= q;
            }
        }
        q += if q == 2 { 1 } else { 2 };
    }
    if rest > 1 {
        out.push(rest);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RealQuadraticField {
    d: u64,
    discriminant: u64,
}

impl RealQuadraticField {
    pub fn new(d: u64) -> Result<Self> {
        if d < 2 {
            return Err(Error::domain(format!("radical {d} must be at least 2")));
        }
        if !is_squarefree(d) {
            return Err(Error::domain(format!("radical {d} is not squarefree")));
        }
        let discriminant = if d % 4 == 1 { d } else { 4 * d };
        Ok(RealQuadraticField { d, discriminant })
    }

    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn discriminant(&self) -> u64 {
        self.discriminant
    }

    /// `(P0, Q0)` with `(P0 + √d)/Q0` generating the ring of integers over `Z`.
    fn generator(&self) -> (i64, i64) {
        if self.d % 4 == 1 {
            (1, 2)
        } else {
            (0, 1)
        }
    }
}

/// Continued fraction of `ω = (1+√d)/2` (for `d ≡ 1 mod 4`) or `√d`.
///
/// The complete quotient after the floor term is reduced, so the expansion is
/// `[a0; period, period, ...]`. `states[k]` holds `(P_k, Q_k)` with the
/// `k`-th complete quotient equal to `(P_k + √d)/Q_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CFExpansion {
    pub d: u64,
    pub a0: u64,
    pub period: Vec<u64>,
    pub states: Vec<(i64, i64)>,
}

pub fn continued_fraction(field: &RealQuadraticField) -> CFExpansion {
    let d = field.d as i64;
    let s = field.d.sqrt() as i64;
    let (mut p, mut q) = field.generator();
    let mut states = vec![(p, q)];
    let mut quotients = Vec::new();
    loop {
        let a = (p + s).div_euclid(q);
        quotients.push(a as u64);
        p = a * q - p;
        q = (d - p * p) / q;
        if states.len() > 1 && (p, q) == states[1] {
            break;
        }
        states.push((p, q));
    }
    CFExpansion {
        d: field.d,
        a0: quotients[0],
        period: quotients[1..].to_vec(),
        states,
    }
}

impl CFExpansion {
    pub fn period_len(&self) -> usize {
        self.period.len()
    }

    /// `(p, q)` of the last convergent before the period closes, reduced
    /// modulo `m`.
    fn closing_convergent_mod(&self, m: u64) -> (u64, u64) {
        let (mut p_prev, mut q_prev) = (1u64, 0u64);
        let (mut p, mut q) = (self.a0 % m, 1u64 % m);
        for &a in &self.period[..self.period.len() - 1] {
            let a = a % m;
            let np = (mul_mod(a, p, m) + p_prev) % m;
            let nq = (mul_mod(a, q, m) + q_prev) % m;
            (p_prev, q_prev, p, q) = (p, q, np, nq);
        }
        (p, q)
    }

    /// The fundamental unit reduced modulo `p` at `√d ↦ root`, computed by
    /// running the convergent recurrence in `F_p` without bignums.
    pub fn unit_mod_prime(&self, p: u64, root: u64) -> Result<u64> {
        let field = RealQuadraticField::new(self.d)?;
        let (p0, q0) = field.generator();
        let (cp, cq) = self.closing_convergent_mod(p);
        // ε = (cp·Q0 - cq·P0 + cq·√d) / Q0
        let a = (mul_mod(cp, q0 as u64, p) + p - mul_mod(cq, p0 as u64 % p, p)) % p;
        let num = (a + mul_mod(cq, root % p, p)) % p;
        finish_unit_residue(num, q0 as u64, p)
    }
}

fn finish_unit_residue(num: u64, den: u64, p: u64) -> Result<u64> {
    if den % p == 0 {
        return Err(Error::domain(format!("{p} divides the unit denominator")));
    }
    let value = mul_mod(num, inv_mod(den % p, p), p);
    if value == 0 {
        return Err(Error::invariant(format!("unit vanished modulo {p}")));
    }
    Ok(value)
}

/// A unit `(a + b√d)/q > 1` of a real quadratic field.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FundamentalUnit {
    pub d: u64,
    pub a: BigInt,
    pub b: BigInt,
    pub q: u8,
    pub norm: i8,
}

impl FundamentalUnit {
    fn exact_norm(a: &BigInt, b: &BigInt, q: u8, d: u64) -> Option<i8> {
        let n = a * a - BigInt::from(d) * b * b;
        let qq = BigInt::from(q as u32 * q as u32);
        if n == qq {
            Some(1)
        } else if n == -qq {
            Some(-1)
        } else {
            None
        }
    }

    /// Recomputes `(a² - d·b²)/q²` exactly.
    pub fn verify_norm(&self) -> bool {
        Self::exact_norm(&self.a, &self.b, self.q, self.d) == Some(self.norm)
    }

    pub fn conjugate_coefficients(&self) -> (BigInt, BigInt) {
        (self.a.clone(), -&self.b)
    }

    /// Image under `√d ↦ root` in `F_p`, from the exact coordinates.
    pub fn unit_mod_prime(&self, p: u64, root: u64) -> Result<u64> {
        unit_mod_prime(self, p, root)
    }

    pub fn to_f64(&self) -> f64 {
        let a = self.a.to_f64().unwrap_or(f64::INFINITY);
        let b = self.b.to_f64().unwrap_or(f64::INFINITY);
        (a + b * (self.d as f64).sqrt()) / self.q as f64
    }
}

impl fmt::Display for FundamentalUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = if self.b.is_one() {
            String::new()
        } else {
            self.b.to_string()
        };
        if self.q == 1 {
            write!(f, "{} + {}√{}", self.a, b, self.d)
        } else {
            write!(f, "({} + {}√{})/{}", self.a, b, self.d, self.q)
        }
    }
}

pub fn fundamental_unit(field: &RealQuadraticField) -> Result<FundamentalUnit> {
    let cf = continued_fraction(field);
    fundamental_unit_from_cf(field, &cf)
}

pub fn fundamental_unit_from_cf(
    field: &RealQuadraticField,
    cf: &CFExpansion,
) -> Result<FundamentalUnit> {
    let (mut p_prev, mut q_prev) = (BigInt::one(), BigInt::zero());
    let (mut p, mut q) = (BigInt::from(cf.a0), BigInt::one());
    for &a in &cf.period[..cf.period.len() - 1] {
        let np = BigInt::from(a) * &p + &p_prev;
        let nq = BigInt::from(a) * &q + &q_prev;
        p_prev = std::mem::replace(&mut p, np);
        q_prev = std::mem::replace(&mut q, nq);
        if p.bits() > MAX_UNIT_BITS {
            return Err(Error::Resource(format!(
                "fundamental unit of Q(√{}) exceeds {MAX_UNIT_BITS} bits",
                field.d
            )));
        }
    }
    let (p0, q0) = field.generator();
    let mut a = &p * q0 - &q * p0;
    let mut b = q;
    let mut den = q0 as u8;
    if den == 2 && a.is_even() && b.is_even() {
        a /= 2;
        b /= 2;
        den = 1;
    }
    let expected = if cf.period_len() % 2 == 1 { -1 } else { 1 };
    let norm = FundamentalUnit::exact_norm(&a, &b, den, field.d).ok_or_else(|| {
        Error::invariant(format!(
            "continued fraction of Q(√{}) gave a non-unit",
            field.d
        ))
    })?;
    if norm != expected || !a.is_positive() || !b.is_positive() {
        return Err(Error::invariant(format!(
            "fundamental unit of Q(√{}) disagrees with its period parity",
            field.d
        )));
    }
    Ok(FundamentalUnit {
        d: field.d,
        a,
        b,
        q: den,
        norm,
    })
}

/// Whether `Q(√d)` has a unit of norm `-1`, i.e. the negative Pell equation
/// is solvable in its ring of integers.
pub fn has_norm_minus_one(field: &RealQuadraticField) -> bool {
    if field.d % 4 == 3 || prime_divisors(field.d).iter().any(|&q| q % 4 == 3) {
        return false;
    }
    continued_fraction(field).period_len() % 2 == 1
}

/// A reduced indefinite form `a x² + b xy + c y²`.
type Form = (i64, i64, i64);

fn reduced_forms(disc: i64) -> Vec<Form> {
    let s = disc.sqrt();
    let mut forms = Vec::new();
    let mut b = if disc % 2 == 0 { 2 } else { 1 };
    while b <= s {
        let ac = (b * b - disc) / 4;
        // √D - b < 2|a| < √D + b
        for abs_a in 1..=(s + b) / 2 + 1 {
            let lower = (2 * abs_a + b) * (2 * abs_a + b) > disc;
            let t = 2 * abs_a - b;
            let upper = t < 0 || t * t < disc;
            if !(lower && upper) || ac % abs_a != 0 {
                continue;
            }
            for a in [abs_a, -abs_a] {
                let c = ac / a;
                if a.gcd(&b).gcd(&c) == 1 {
                    forms.push((a, b, c));
                }
            }
        }
        b += 2;
    }
    forms
}

fn rho(form: Form, disc: i64, s: i64) -> Form {
    let (_, b, c) = form;
    let m = 2 * c.abs();
    let b_next = s - (s + b).rem_euclid(m);
    let a_next = (b_next * b_next - disc) / (4 * c);
    (c, b_next, a_next)
}

/// Narrow class number: the number of `ρ`-cycles of reduced forms.
pub fn narrow_class_number(field: &RealQuadraticField) -> Result<u64> {
    if field.discriminant > MAX_CLASS_NUMBER_DISCRIMINANT {
        return Err(Error::Resource(format!(
            "discriminant {} exceeds the class number bound {MAX_CLASS_NUMBER_DISCRIMINANT}",
            field.discriminant
        )));
    }
    let disc = field.discriminant as i64;
    let s = disc.sqrt();
    let forms = reduced_forms(disc);
    let mut seen: HashSet<Form> = HashSet::with_capacity(forms.len());
    let mut cycles = 0;
    for &f in &forms {
        if seen.contains(&f) {
            continue;
        }
        cycles += 1;
        let mut g = f;
        while seen.insert(g) {
            g = rho(g, disc, s);
        }
        if g != f {
            return Err(Error::invariant(format!(
                "reduction cycle of discriminant {disc} did not close"
            )));
        }
    }
    Ok(cycles)
}

/// Wide class number `h`: the narrow count, halved when no unit of norm -1.
pub fn class_number(field: &RealQuadraticField) -> Result<u64> {
    let narrow = narrow_class_number(field)?;
    if has_norm_minus_one(field) {
        Ok(narrow)
    } else if narrow % 2 == 0 {
        Ok(narrow / 2)
    } else {
        Err(Error::invariant(format!(
            "odd narrow class number {narrow} without a norm -1 unit for d = {}",
            field.d
        )))
    }
}

/// `(a + b·root)/q mod p`, reducing the exact coordinates.
pub fn unit_mod_prime(u: &FundamentalUnit, p: u64, root: u64) -> Result<u64> {
    if p % 2 == 0 || (u.d % p) == 0 {
        return Err(Error::domain(format!(
            "{p} is not an odd prime coprime to {}",
            u.d
        )));
    }
    if mul_mod(root, root, p) != u.d % p {
        return Err(Error::domain(format!("{root}² is not {} modulo {p}", u.d)));
    }
    let pb = BigInt::from(p);
    let a = u.a.mod_floor(&pb).to_u64().expect("residue fits");
    let b = u.b.mod_floor(&pb).to_u64().expect("residue fits");
    let num = (a + mul_mod(b, root, p)) % p;
    finish_unit_residue(num, u.q as u64, p)
}
