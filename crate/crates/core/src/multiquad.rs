//! Totally real multiquadratic fields `K = Q(√d₁, …, √d_m)`.
//!
//! Elements are stored exactly as rational coordinates over the basis
//! `{√s_S}` where `s_S` is the squarefree part of `∏_{i∈S} d_i`, indexed by
//! the bitmask `S`. Real embeddings are indexed by a bitmask `σ` of flipped
//! generators, so `σ(√s_S) = (-1)^{|σ ∩ S|} √s_S`.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Roots;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::arith::jacobi;
use crate::error::{Error, Result};
use crate::quadratic::{
    self, fundamental_unit, is_squarefree, prime_divisors, squarefree_part, FundamentalUnit,
    RealQuadraticField,
};

/// Largest number of generating radicals accepted by the parser.
pub const MAX_RADICALS: usize = 6;

/// Precision ladder of the square-root search.
pub const SQRT_START_BITS: u64 = 128;
pub const SQRT_CAP_BITS: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiquadField {
    radicals: Vec<u64>,
    /// `s_S` for every mask, `basis[0] = 1`.
    basis: Vec<u64>,
    /// `g_S` with `∏_{i∈S} d_i = g_S² · s_S`.
    cofactor: Vec<u64>,
    /// `√s_S · √s_T = mul_coeff[S][T] · √s_{S^T}`.
    mul_coeff: Vec<Vec<u64>>,
    discriminant_support: Vec<u64>,
}

#[inline]
fn chi(sigma: usize, mask: usize) -> bool {
    (sigma & mask).count_ones() % 2 == 1
}

impl MultiquadField {
    pub fn new(radicals: &[u64]) -> Result<Self> {
        if radicals.is_empty() {
            return Err(Error::Input("a field needs at least one radical".into()));
        }
        if radicals.len() > MAX_RADICALS {
            return Err(Error::Unsupported(format!(
                "at most {MAX_RADICALS} radicals are supported, got {}",
                radicals.len()
            )));
        }
        let mut rads = Vec::with_capacity(radicals.len());
        for &d in radicals {
            if d == 0 {
                return Err(Error::Input("radical 0".into()));
            }
            let s = squarefree_part(d);
            if s == 1 {
                return Err(Error::Input(format!("radical {d} is a perfect square")));
            }
            rads.push(s);
        }
        rads.sort_unstable();
        if let Some(w) = rads.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Input(format!(
                "radical {} is repeated up to squares",
                w[0]
            )));
        }
        for (i, &a) in rads.iter().enumerate() {
            for (j, &b) in rads.iter().enumerate() {
                if i != j && b % a == 0 {
                    return Err(Error::Input(format!(
                        "radical {a} divides radical {b}; radicals must not divide one another"
                    )));
                }
            }
        }
        let m = rads.len();
        let n = 1usize << m;
        let mut basis = vec![1u64; n];
        let mut cofactor = vec![1u64; n];
        for mask in 1..n {
            let low = mask.trailing_zeros() as usize;
            let rest = mask & (mask - 1);
            let prod = basis[rest] as u128 * rads[low] as u128;
            let g = gcd_u128(basis[rest] as u128, rads[low] as u128);
            let s = prod / (g * g);
            let s = u64::try_from(s)
                .map_err(|_| Error::Input("product of radicals overflows 64 bits".into()))?;
            basis[mask] = s;
            let total = cofactor[rest] as u128 * g;
            cofactor[mask] = u64::try_from(total)
                .map_err(|_| Error::Input("radical cofactor overflows 64 bits".into()))?;
        }
        let mut sorted: Vec<u64> = basis[1..].to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != n - 1 || sorted.contains(&1) {
            return Err(Error::Input(format!(
                "radicals {rads:?} are not multiplicatively independent modulo squares"
            )));
        }
        let mut mul_coeff = vec![vec![0u64; n]; n];
        for s in 0..n {
            for t in 0..n {
                let num = basis[s] as u128 * basis[t] as u128;
                let g2 = num / basis[s ^ t] as u128;
                mul_coeff[s][t] = g2.sqrt() as u64;
                debug_assert_eq!(mul_coeff[s][t] as u128 * mul_coeff[s][t] as u128, g2);
            }
        }
        let mut support: Vec<u64> = basis[1..].iter().flat_map(|&s| prime_divisors(s)).collect();
        if basis[1..].iter().any(|&s| s % 4 != 1) {
            support.push(2);
        }
        support.sort_unstable();
        support.dedup();
        Ok(MultiquadField {
            radicals: rads,
            basis,
            cofactor,
            mul_coeff,
            discriminant_support: support,
        })
    }

    pub fn radicals(&self) -> &[u64] {
        &self.radicals
    }

    pub fn m(&self) -> usize {
        self.radicals.len()
    }

    pub fn degree(&self) -> usize {
        1 << self.m()
    }

    pub fn basis_radical(&self, mask: usize) -> u64 {
        self.basis[mask]
    }

    pub fn basis_cofactor(&self, mask: usize) -> u64 {
        self.cofactor[mask]
    }

    pub fn mask_of_radical(&self, s: u64) -> Option<usize> {
        self.basis.iter().position(|&b| b == s).filter(|&i| i > 0)
    }

    pub fn discriminant_support(&self) -> &[u64] {
        &self.discriminant_support
    }

    /// The `n-1` quadratic subfield radicals, ascending.
    pub fn quadratic_subfields(&self) -> Vec<u64> {
        let mut v = self.basis[1..].to_vec();
        v.sort_unstable();
        v
    }

    /// Bitmasks of the quadratic subfields in the order of
    /// [`quadratic_subfields`](Self::quadratic_subfields).
    pub fn subfield_masks(&self) -> Vec<usize> {
        self.quadratic_subfields()
            .into_iter()
            .map(|s| {
                self.mask_of_radical(s)
                    .expect("subfield radical is a basis radical")
            })
            .collect()
    }

    pub fn splits_completely(&self, p: u64) -> bool {
        p % 2 == 1
            && !self.discriminant_support.contains(&p)
            && self.radicals.iter().all(|&d| jacobi(d as i64, p) == 1)
    }

    pub fn spec_string(&self) -> String {
        self.radicals
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn zero(&self) -> FieldElement {
        FieldElement {
            coords: vec![BigRational::zero(); self.degree()],
        }
    }

    pub fn from_integer(&self, k: i64) -> FieldElement {
        let mut x = self.zero();
        x.coords[0] = BigRational::from_integer(k.into());
        x
    }

    pub fn one(&self) -> FieldElement {
        self.from_integer(1)
    }

    pub fn element(&self, coords: Vec<BigRational>) -> Result<FieldElement> {
        if coords.len() != self.degree() {
            return Err(Error::Input(format!(
                "expected {} coordinates, got {}",
                self.degree(),
                coords.len()
            )));
        }
        Ok(FieldElement { coords })
    }

    /// Embeds a quadratic subfield unit `(a + b√s)/q`.
    pub fn from_quadratic(&self, u: &FundamentalUnit) -> Result<FieldElement> {
        let mask = self
            .mask_of_radical(u.d)
            .ok_or_else(|| Error::domain(format!("Q(√{}) is not a subfield", u.d)))?;
        let q = BigInt::from(u.q);
        let mut x = self.zero();
        x.coords[0] = BigRational::new(u.a.clone(), q.clone());
        x.coords[mask] = BigRational::new(u.b.clone(), q);
        Ok(x)
    }

    pub fn add(&self, x: &FieldElement, y: &FieldElement) -> FieldElement {
        FieldElement {
            coords: x.coords.iter().zip(&y.coords).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn neg(&self, x: &FieldElement) -> FieldElement {
        FieldElement {
            coords: x.coords.iter().map(|a| -a).collect(),
        }
    }

    pub fn mul(&self, x: &FieldElement, y: &FieldElement) -> FieldElement {
        let n = self.degree();
        let mut out = vec![BigRational::zero(); n];
        for s in (0..n).filter(|&s| !x.coords[s].is_zero()) {
            for t in (0..n).filter(|&t| !y.coords[t].is_zero()) {
                let c = BigInt::from(self.mul_coeff[s][t]);
                out[s ^ t] += &x.coords[s] * &y.coords[t] * BigRational::from_integer(c);
            }
        }
        FieldElement { coords: out }
    }

    pub fn pow(&self, x: &FieldElement, mut e: u32) -> FieldElement {
        let mut acc = self.one();
        let mut base = x.clone();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        acc
    }

    pub fn product<'a>(&self, xs: impl IntoIterator<Item = &'a FieldElement>) -> FieldElement {
        xs.into_iter().fold(self.one(), |acc, x| self.mul(&acc, x))
    }

    /// Image under the automorphism flipping the generators in `sigma`.
    pub fn conjugate(&self, x: &FieldElement, sigma: usize) -> FieldElement {
        FieldElement {
            coords: x
                .coords
                .iter()
                .enumerate()
                .map(|(s, c)| if chi(sigma, s) { -c } else { c.clone() })
                .collect(),
        }
    }

    /// Absolute norm `N_{K/Q}(x)`, exact.
    pub fn norm(&self, x: &FieldElement) -> BigRational {
        let mut acc = x.clone();
        for sigma in 1..self.degree() {
            acc = self.mul(&acc, &self.conjugate(x, sigma));
        }
        debug_assert!(acc.coords[1..].iter().all(Zero::is_zero));
        acc.coords[0].clone()
    }

    /// `√s_S · 2^prec`, rounded down.
    fn sqrt_basis_fixed(&self, prec: u64) -> Vec<BigInt> {
        self.basis
            .iter()
            .map(|&s| (BigInt::from(s) << (2 * prec)).sqrt())
            .collect()
    }

    /// Fixed-point values `σ(x)·2^prec` at every real embedding.
    fn embed_fixed(&self, x: &FieldElement, sqrt_basis: &[BigInt]) -> Vec<BigInt> {
        let n = self.degree();
        let terms: Vec<BigInt> = (0..n)
            .map(|s| {
                let c = &x.coords[s];
                if c.is_zero() {
                    BigInt::zero()
                } else {
                    (c.numer() * &sqrt_basis[s]) / c.denom()
                }
            })
            .collect();
        (0..n)
            .map(|sigma| {
                terms
                    .iter()
                    .enumerate()
                    .fold(BigInt::zero(), |acc, (s, t)| {
                        if chi(sigma, s) {
                            acc - t
                        } else {
                            acc + t
                        }
                    })
            })
            .collect()
    }

    /// Natural logs of `|σ(x)|` at every embedding, for nonzero `x`.
    pub fn log_embedding(&self, x: &FieldElement) -> Vec<f64> {
        let height = x.height_bits();
        let prec = 64 + 2 * height;
        let sq = self.sqrt_basis_fixed(prec);
        self.embed_fixed(x, &sq)
            .iter()
            .map(|v| fixed_ln_abs(v, prec))
            .collect()
    }

    /// Signs of `σ(x)` at every embedding, or `None` for `x = 0`.
    pub fn embedding_signs(&self, x: &FieldElement) -> Option<Vec<i8>> {
        if x.is_zero() {
            return None;
        }
        let slack = x.height_bits() + self.m() as u64 + 8;
        let mut prec = 64 + 4 * x.height_bits();
        loop {
            let sq = self.sqrt_basis_fixed(prec);
            let values = self.embed_fixed(x, &sq);
            if values.iter().all(|v| v.bits() > slack) {
                return Some(
                    values
                        .iter()
                        .map(|v| if v.sign() == Sign::Minus { -1 } else { 1 })
                        .collect(),
                );
            }
            prec *= 2;
        }
    }
}

impl FromStr for MultiquadField {
    type Err = Error;

    /// Parses a comma-separated radical list such as `"5,13"`.
    fn from_str(s: &str) -> Result<Self> {
        let radicals = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Input(format!("cannot parse radical {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        MultiquadField::new(&radicals)
    }
}

impl fmt::Display for MultiquadField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.radicals.iter().map(|d| format!("√{d}")).collect();
        write!(f, "Q({})", parts.join(", "))
    }
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn fixed_ln_abs(v: &BigInt, prec: u64) -> f64 {
    let bits = v.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    let shift = bits.saturating_sub(60);
    let top = (v.magnitude() >> shift).to_f64().expect("60-bit value");
    top.ln() + (shift as f64 - prec as f64) * std::f64::consts::LN_2
}

/// An exact element of a multiquadratic field.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldElement {
    pub coords: Vec<BigRational>,
}

impl FieldElement {
    /// Bits of the largest coordinate numerator plus denominator.
    pub fn height_bits(&self) -> u64 {
        self.coords
            .iter()
            .map(|c| c.numer().bits() + c.denom().bits())
            .max()
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(Zero::is_zero)
    }

    pub fn render(&self, field: &MultiquadField) -> String {
        let mut terms = Vec::new();
        for (s, c) in self.coords.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let radical = if s == 0 {
                String::new()
            } else {
                format!("√{}", field.basis_radical(s))
            };
            let coeff = if s > 0 && c.is_one() {
                String::new()
            } else if s > 0 && (-c).is_one() {
                "-".to_string()
            } else {
                c.to_string()
            };
            terms.push(format!("{coeff}{radical}"));
        }
        if terms.is_empty() {
            "0".into()
        } else {
            terms.join(" + ").replace("+ -", "- ")
        }
    }
}

/// A square root together with the signs of its real conjugates.
#[derive(Debug, Clone)]
pub(crate) struct SquareRoot {
    pub root: FieldElement,
    pub signs: Vec<i8>,
}

enum Attempt {
    Found(SquareRoot),
    Absent,
    NeedPrecision,
}

fn bits_i(v: &BigInt) -> i64 {
    v.bits() as i64
}

fn try_square_root(
    field: &MultiquadField,
    x: &FieldElement,
    prec: u64,
    denom_bound: u64,
) -> Attempt {
    let n = field.degree();
    let log_n = field.m() as i64;
    let p = prec as i64;
    let sq = field.sqrt_basis_fixed(prec);
    let values = field.embed_fixed(x, &sq);

    // error of each embedded value, in units of 2^-prec
    let cmax = x
        .coords
        .iter()
        .map(|c| bits_i(c.numer()) - bits_i(c.denom()) + 1)
        .max()
        .unwrap_or(0)
        .max(0);
    let err_v = cmax + log_n + 2;
    for v in &values {
        if bits_i(v) <= err_v + 2 {
            return Attempt::NeedPrecision;
        }
        if v.sign() == Sign::Minus {
            return Attempt::Absent;
        }
    }
    let roots: Vec<BigInt> = values.iter().map(|v| (v << prec).sqrt()).collect();
    let y_min = roots.iter().map(bits_i).min().unwrap_or(0) - 1;
    let err_y = err_v + p - y_min + 2;
    let err_t = err_y.max(0) + log_n + 1;
    let sq_min = sq.iter().map(bits_i).min().unwrap_or(0);
    let val_max = roots.iter().map(bits_i).max().unwrap_or(0) + 2;
    let err_val = err_t.max(val_max - sq_min + log_n + 2) + 2;
    if err_val + 5 > p {
        return Attempt::NeedPrecision;
    }

    let scale = BigInt::one() << prec;
    let half = BigInt::one() << (prec - 1);
    let tolerance = BigInt::one() << (prec - 3);
    let d = BigInt::from(denom_bound);
    let n_big = BigInt::from(n as u64);
    // y at the identity embedding is taken positive
    for pattern in 0..(1usize << (n - 1)) {
        let signed: Vec<BigInt> = (0..n)
            .map(|sigma| {
                if sigma > 0 && (pattern >> (sigma - 1)) & 1 == 1 {
                    -&roots[sigma]
                } else {
                    roots[sigma].clone()
                }
            })
            .collect();
        let mut coords = Vec::with_capacity(n);
        let mut near_grid = true;
        for s in 0..n {
            let t = (0..n).fold(BigInt::zero(), |acc, sigma| {
                if chi(sigma, s) {
                    acc - &signed[sigma]
                } else {
                    acc + &signed[sigma]
                }
            });
            let val = (t * &d * &scale) / (&n_big * &sq[s]);
            let k = (&val + &half) >> prec;
            let dist = (&val - &k * &scale).abs();
            if dist > tolerance {
                near_grid = false;
                break;
            }
            coords.push(BigRational::new(k, d.clone()));
        }
        if !near_grid {
            continue;
        }
        let y = FieldElement { coords };
        if field.mul(&y, &y) == *x {
            // tiny conjugates do not move the rounded coordinates, so the
            // pattern itself may be wrong about their signs
            let signs = field
                .embedding_signs(&y)
                .expect("root of a nonzero element");
            return Attempt::Found(SquareRoot { root: y, signs });
        }
    }
    Attempt::Absent
}

/// Precision cap for an input of the given height: the fixed cap, raised for
/// inputs so tall that the cap could never resolve them.
fn precision_cap(x: &FieldElement) -> u64 {
    SQRT_CAP_BITS.max((8 * x.height_bits() + 512).next_power_of_two())
}

pub(crate) fn square_root(field: &MultiquadField, x: &FieldElement) -> Result<Option<SquareRoot>> {
    if x.is_zero() {
        return Err(Error::domain("square root of 0"));
    }
    let denom_bound = field.degree() as u64;
    let cap = precision_cap(x);
    let mut prec = SQRT_START_BITS;
    loop {
        match try_square_root(field, x, prec, denom_bound) {
            Attempt::Found(r) => return Ok(Some(r)),
            Attempt::Absent => return Ok(None),
            Attempt::NeedPrecision if prec >= cap => {
                return Err(Error::Undecided(format!(
                    "square test in {field} unresolved at {prec} bits"
                )))
            }
            Attempt::NeedPrecision => prec *= 2,
        }
    }
}

/// `Some(y)` with `y² = x` exactly when `x` is a square in the field (the
/// root positive at the identity embedding), `None` when it is not.
pub fn is_square_in_field(
    field: &MultiquadField,
    x: &FieldElement,
) -> Result<Option<FieldElement>> {
    Ok(square_root(field, x)?.map(|r| r.root))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormMinusOne {
    Yes,
    No,
    Unknown,
}

impl fmt::Display for NormMinusOne {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormMinusOne::Yes => "yes",
            NormMinusOne::No => "no",
            NormMinusOne::Unknown => "unknown",
        })
    }
}

/// A unit with its provenance and the signs of its real conjugates.
#[derive(Debug, Clone)]
pub struct Generator {
    pub label: String,
    pub element: FieldElement,
    pub norm: i8,
    pub signs: Vec<i8>,
}

#[derive(Debug, Clone)]
pub struct UnitSystem {
    pub field: MultiquadField,
    /// `n - 1` units generating the unit group modulo `±1`.
    pub generators: Vec<Generator>,
    pub subfield_units: Vec<FundamentalUnit>,
    pub contains_norm_minus_one: NormMinusOne,
    /// `log₂ [O_K^× : ∏ O_{Q_i}^×]`.
    pub index_exponent: u32,
    /// Set for degree 8, where the unit group is obtained from the subfield
    /// units by repeated square-root saturation rather than a classification.
    pub candidate_based: bool,
}

impl UnitSystem {
    pub fn index_over_subfield_units(&self) -> u64 {
        1 << self.index_exponent
    }
}

fn unit_generator(field: &MultiquadField, u: &FundamentalUnit) -> Result<Generator> {
    let element = field.from_quadratic(u)?;
    let mask = field
        .mask_of_radical(u.d)
        .expect("checked by from_quadratic");
    let signs = (0..field.degree())
        .map(|sigma| if chi(sigma, mask) { u.norm } else { 1 })
        .collect();
    let norm = if field.m() == 1 { u.norm } else { 1 };
    Ok(Generator {
        label: format!("ε{}", u.d),
        element,
        norm,
        signs,
    })
}

/// Exponent vectors `v` (bit `i` ↔ generator `i`) whose product is totally
/// positive.
fn totally_positive_products(gens: &[Generator], n: usize) -> Vec<usize> {
    (1usize..(1 << gens.len()))
        .filter(|&v| {
            (0..n).all(|sigma| {
                gens.iter()
                    .enumerate()
                    .filter(|(i, _)| (v >> i) & 1 == 1)
                    .map(|(_, g)| g.signs[sigma])
                    .product::<i8>()
                    == 1
            })
        })
        .collect()
}

fn top_bit(v: usize) -> usize {
    (usize::BITS - 1 - v.leading_zeros()) as usize
}

fn product_of(field: &MultiquadField, gens: &[Generator], v: usize) -> FieldElement {
    field.product(
        gens.iter()
            .enumerate()
            .filter(|(i, _)| (v >> i) & 1 == 1)
            .map(|(_, g)| &g.element),
    )
}

/// One saturation round: replaces generators by square roots of products of
/// generators wherever those exist in `K`. Returns the rank of the new
/// square classes.
fn saturate_once(field: &MultiquadField, gens: &mut [Generator]) -> Result<u32> {
    let n = field.degree();
    // square classes found so far, with pairwise distinct top bits
    let mut echelon: Vec<usize> = Vec::new();
    let reduce = |echelon: &[usize], mut v: usize| {
        for &e in echelon {
            if (v >> top_bit(e)) & 1 == 1 {
                v ^= e;
            }
        }
        v
    };
    for v in totally_positive_products(gens, n) {
        if reduce(&echelon, v) == 0 {
            continue;
        }
        if square_root(field, &product_of(field, gens, v))?.is_some() {
            let r = reduce(&echelon, v);
            echelon.push(r);
            echelon.sort_by_key(|&e| std::cmp::Reverse(top_bit(e)));
        }
    }
    let mut replacements = Vec::new();
    for &w in &echelon {
        let root = square_root(field, &product_of(field, gens, w))?
            .ok_or_else(|| Error::invariant("product of square classes is not a square"))?;
        let labels: Vec<&str> = gens
            .iter()
            .enumerate()
            .filter(|(i, _)| (w >> i) & 1 == 1)
            .map(|(_, g)| g.label.as_str())
            .collect();
        replacements.push((top_bit(w), labels.join("·"), root));
    }
    for (top, label, root) in replacements {
        let norm = root.signs.iter().product::<i8>();
        let exact = field.norm(&root.root);
        if exact != BigRational::from_integer(norm.into()) {
            return Err(Error::invariant(format!("√({label}) is not a unit")));
        }
        gens[top] = Generator {
            label: format!("√({label})"),
            element: root.root,
            norm,
            signs: root.signs,
        };
    }
    Ok(echelon.len() as u32)
}

fn check_independence(field: &MultiquadField, gens: &[Generator]) -> Result<()> {
    let n = field.degree();
    let mut rows: Vec<Vec<f64>> = gens
        .iter()
        .map(|g| field.log_embedding(&g.element)[..n - 1].to_vec())
        .collect();
    let scale = rows
        .iter()
        .flatten()
        .fold(0.0f64, |a, &b| a.max(b.abs()))
        .max(1.0);
    let mut rank = 0;
    for col in 0..n - 1 {
        let pivot =
            (rank..rows.len()).max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs()));
        let Some(pivot) = pivot else { break };
        if rows[pivot][col].abs() < 1e-9 * scale {
            continue;
        }
        rows.swap(rank, pivot);
        for r in 0..rows.len() {
            if r != rank {
                let f = rows[r][col] / rows[rank][col];
                for c in col..n - 1 {
                    rows[r][c] -= f * rows[rank][c];
                }
            }
        }
        rank += 1;
    }
    if rank != gens.len() {
        return Err(Error::invariant(format!(
            "unit generators of {field} are dependent (log rank {rank})"
        )));
    }
    Ok(())
}

/// A system of fundamental units of `K` for `m ≤ 3`.
///
/// The subfield fundamental units generate a subgroup of 2-power index; the
/// full group is reached by adjoining square roots of products of
/// generators until no new square class appears.
pub fn unit_system(field: &MultiquadField) -> Result<UnitSystem> {
    let m = field.m();
    if m > 3 {
        return Err(Error::Unsupported(format!(
            "unit systems are implemented for at most 3 radicals, {field} has {m}"
        )));
    }
    let n = field.degree();
    let subfield_units = field
        .quadratic_subfields()
        .into_iter()
        .map(|s| fundamental_unit(&RealQuadraticField::new(s)?))
        .collect::<Result<Vec<_>>>()?;
    // generators ordered by mask so that ε of the largest mask is replaced first
    let mut by_mask: Vec<&FundamentalUnit> = subfield_units.iter().collect();
    by_mask.sort_by_key(|u| field.mask_of_radical(u.d));
    let mut gens = by_mask
        .into_iter()
        .map(|u| unit_generator(field, u))
        .collect::<Result<Vec<_>>>()?;
    let mut index_exponent = 0;
    if m >= 2 {
        loop {
            let k = saturate_once(field, &mut gens)?;
            if k == 0 {
                break;
            }
            index_exponent += k;
        }
    }
    debug_assert_eq!(gens.len(), n - 1);
    check_independence(field, &gens)?;
    let contains = if gens.iter().any(|g| g.norm == -1) {
        NormMinusOne::Yes
    } else {
        NormMinusOne::No
    };
    Ok(UnitSystem {
        field: field.clone(),
        generators: gens,
        subfield_units,
        contains_norm_minus_one: contains,
        index_exponent,
        candidate_based: m == 3,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KurodaClassNumber {
    pub class_number: u64,
    pub unit_index: u64,
    /// `(radical, h)` for every quadratic subfield, ascending by radical.
    pub subfield_class_numbers: Vec<(u64, u64)>,
    pub v: u32,
    pub candidate_based: bool,
}

/// `h(K) = [O_K^× : ∏ O_{Q_i}^×] · ∏ h_i / 2^v` with `v = m(2^{m-1} - 1)`.
pub fn kuroda_class_number_with(
    field: &MultiquadField,
    units: &UnitSystem,
) -> Result<KurodaClassNumber> {
    let m = field.m() as u32;
    let v = m * ((1 << (m - 1)) - 1);
    let subfield_class_numbers = field
        .quadratic_subfields()
        .into_iter()
        .map(|s| Ok((s, quadratic::class_number(&RealQuadraticField::new(s)?)?)))
        .collect::<Result<Vec<_>>>()?;
    let product: u128 = subfield_class_numbers
        .iter()
        .map(|&(_, h)| h as u128)
        .product();
    let numerator = product << units.index_exponent;
    let denominator = 1u128 << v;
    if numerator % denominator != 0 {
        return Err(Error::invariant(format!(
            "class number formula for {field} gives {numerator}/{denominator}"
        )));
    }
    Ok(KurodaClassNumber {
        class_number: (numerator / denominator) as u64,
        unit_index: units.index_over_subfield_units(),
        subfield_class_numbers,
        v,
        candidate_based: units.candidate_based,
    })
}

pub fn kuroda_class_number(field: &MultiquadField) -> Result<KurodaClassNumber> {
    let units = unit_system(field)?;
    kuroda_class_number_with(field, &units)
}

/// Which argument settled the norm -1 question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NormRule {
    /// A quadratic subfield has no unit of norm -1, so neither does `K`.
    SubfieldObstruction {
        radical: u64,
    },
    /// Parity of the continued fraction period of the single radical.
    QuadraticPeriod,
    /// Biquadratic: whether `√(ε₁ε₂ε₃)` lies in `K`.
    KubotaSquareRoot,
    /// Degree 8 with odd class number.
    OddClassNumber {
        class_number: u64,
    },
    /// Degree 8: read off the saturated unit system.
    SaturatedUnitSystem,
    Undecided(String),
    Unsupported,
}

impl fmt::Display for NormRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormRule::SubfieldObstruction { radical } => {
                write!(f, "subfield Q(√{radical}) has no unit of norm -1")
            }
            NormRule::QuadraticPeriod => f.write_str("continued fraction period parity"),
            NormRule::KubotaSquareRoot => f.write_str("square root of ε₁ε₂ε₃ in K"),
            NormRule::OddClassNumber { class_number } => {
                write!(f, "odd class number {class_number} in degree 8")
            }
            NormRule::SaturatedUnitSystem => {
                f.write_str("generator norms of the saturated unit system")
            }
            NormRule::Undecided(msg) => write!(f, "undecided: {msg}"),
            NormRule::Unsupported => f.write_str("unit system unsupported for this degree"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormVerdict {
    pub status: NormMinusOne,
    pub rule: NormRule,
}

/// Decides whether `K` has a unit of norm -1.
pub fn has_norm_minus_one_unit(field: &MultiquadField) -> NormVerdict {
    for s in field.quadratic_subfields() {
        let q = RealQuadraticField::new(s).expect("basis radicals are squarefree");
        if !quadratic::has_norm_minus_one(&q) {
            return NormVerdict {
                status: NormMinusOne::No,
                rule: NormRule::SubfieldObstruction { radical: s },
            };
        }
    }
    match field.m() {
        1 => NormVerdict {
            status: NormMinusOne::Yes,
            rule: NormRule::QuadraticPeriod,
        },
        2 => match unit_system(field) {
            Ok(units) => NormVerdict {
                status: units.contains_norm_minus_one,
                rule: NormRule::KubotaSquareRoot,
            },
            Err(e) => undecided(e),
        },
        3 => {
            let units = match unit_system(field) {
                Ok(u) => u,
                Err(e) => return undecided(e),
            };
            match kuroda_class_number_with(field, &units) {
                Ok(k) if k.class_number % 2 == 1 => {
                    if units.contains_norm_minus_one == NormMinusOne::Yes {
                        return undecided(Error::invariant(
                            "norm -1 unit found in a field of odd class number",
                        ));
                    }
                    NormVerdict {
                        status: NormMinusOne::No,
                        rule: NormRule::OddClassNumber {
                            class_number: k.class_number,
                        },
                    }
                }
                Ok(_) => NormVerdict {
                    status: units.contains_norm_minus_one,
                    rule: NormRule::SaturatedUnitSystem,
                },
                Err(e) => undecided(e),
            }
        }
        _ => NormVerdict {
            status: NormMinusOne::Unknown,
            rule: NormRule::Unsupported,
        },
    }
}

fn undecided(e: Error) -> NormVerdict {
    NormVerdict {
        status: NormMinusOne::Unknown,
        rule: NormRule::Undecided(e.to_string()),
    }
}

pub fn is_valid_radical(d: u64) -> bool {
    d > 1 && is_squarefree(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(s: &str) -> MultiquadField {
        s.parse().unwrap()
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn parsing_and_validation() {
        let k = field(" 13, 5 ");
        assert_eq!(k.radicals(), &[5, 13]);
        assert_eq!(k.quadratic_subfields(), vec![5, 13, 65]);
        assert_eq!(field("2,3").quadratic_subfields(), vec![2, 3, 6]);
        assert_eq!(
            field("5,13,37").quadratic_subfields(),
            vec![5, 13, 37, 65, 185, 481, 2405]
        );
        assert_eq!(field("20").radicals(), &[5]);
        assert!(matches!(
            "5,65".parse::<MultiquadField>(),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            "6,10,15".parse::<MultiquadField>(),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            "4".parse::<MultiquadField>(),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            "5,x".parse::<MultiquadField>(),
            Err(Error::Input(_))
        ));
        assert_eq!(k.discriminant_support(), &[5, 13]);
        assert_eq!(field("2,3").discriminant_support(), &[2, 3]);
        assert_eq!(field("3").discriminant_support(), &[2, 3]);
    }

    #[test]
    fn splitting() {
        let k = field("5,13");
        assert!(k.splits_completely(79));
        assert!(!k.splits_completely(5));
        assert!(!k.splits_completely(3));
        assert!(!k.splits_completely(2));
    }

    #[test]
    fn basis_multiplication() {
        let k = field("6,10");
        // √6·√10 = 2√15
        let masks: Vec<u64> = (0..4).map(|s| k.basis_radical(s)).collect();
        assert_eq!(masks, vec![1, 6, 10, 15]);
        assert_eq!(k.basis_cofactor(3), 2);
        let mut a = k.zero();
        a.coords[1] = q(1, 1);
        let mut b = k.zero();
        b.coords[2] = q(1, 1);
        let c = k.mul(&a, &b);
        assert_eq!(c.coords, vec![q(0, 1), q(0, 1), q(0, 1), q(2, 1)]);
        assert_eq!(k.mul(&a, &a), k.from_integer(6));
    }

    #[test]
    fn norm_of_quadratic_units() {
        let k = field("5,13");
        for u in ["5", "13", "65"] {
            let e =
                fundamental_unit(&RealQuadraticField::new(u.parse().unwrap()).unwrap()).unwrap();
            let x = k.from_quadratic(&e).unwrap();
            // N_K(ε) = N_Q(ε)² = 1
            assert_eq!(k.norm(&x), q(1, 1));
        }
    }

    #[test]
    fn square_roots() {
        let k = field("3");
        let mut u = k.zero();
        u.coords = vec![q(2, 1), q(1, 1)];
        let sq = k.mul(&u, &u);
        assert_eq!(is_square_in_field(&k, &sq).unwrap(), Some(u.clone()));
        assert_eq!(is_square_in_field(&k, &u).unwrap(), None);
        assert!(is_square_in_field(&k, &k.zero()).is_err());
        assert_eq!(is_square_in_field(&k, &k.from_integer(-4)).unwrap(), None);
    }

    #[test]
    fn kubota_root_in_five_thirteen() {
        let k = field("5,13");
        let units: Vec<FieldElement> = [5u64, 13, 65]
            .iter()
            .map(|&d| {
                k.from_quadratic(&fundamental_unit(&RealQuadraticField::new(d).unwrap()).unwrap())
                    .unwrap()
            })
            .collect();
        let x = k.product(&units);
        let z = is_square_in_field(&k, &x)
            .unwrap()
            .expect("ε5ε13ε65 is a square");
        assert_eq!(k.mul(&z, &z), x);
        assert_eq!(k.norm(&z), q(-1, 1));
    }

    /// All `y` with coordinates in `(1/4)·[-8, 8]` squaring to `x`, with
    /// machine integers only: an oracle independent of the numeric search.
    fn small_height_roots(k: &MultiquadField, x: &FieldElement) -> Vec<[i64; 4]> {
        let target: Vec<Option<i64>> = x
            .coords
            .iter()
            .map(|c| {
                let scaled = c * BigRational::from_integer(16.into());
                scaled
                    .is_integer()
                    .then(|| scaled.to_integer().to_i64().unwrap())
            })
            .collect();
        if target.iter().any(Option::is_none) {
            return Vec::new();
        }
        let target: Vec<i64> = target.into_iter().map(Option::unwrap).collect();
        let mut found = Vec::new();
        let r = -8i64..=8;
        for a in r.clone() {
            for b in r.clone() {
                for c in r.clone() {
                    for d in r.clone() {
                        let y = [a, b, c, d];
                        let mut sq = [0i64; 4];
                        for s in 0..4 {
                            for t in 0..4 {
                                sq[s ^ t] += y[s] * y[t] * k.mul_coeff[s][t] as i64;
                            }
                        }
                        if sq.iter().zip(&target).all(|(u, v)| u == v) {
                            found.push(y);
                        }
                    }
                }
            }
        }
        found
    }

    #[test]
    fn two_three_square_classes_match_exhaustive_search() {
        let k = field("2,3");
        let e = |d: u64| {
            k.from_quadratic(&fundamental_unit(&RealQuadraticField::new(d).unwrap()).unwrap())
                .unwrap()
        };
        let (e2, e3, e6) = (e(2), e(3), e(6));
        for (x, expect) in [
            (k.product([&e2, &e3, &e6]), false),
            (e3.clone(), true),
            (e6.clone(), true),
            (k.mul(&e3, &e6), true),
            (e2.clone(), false),
        ] {
            let brute = small_height_roots(&k, &x);
            let found = is_square_in_field(&k, &x).unwrap();
            assert_eq!(found.is_some(), expect);
            assert_eq!(!brute.is_empty(), expect);
            if let Some(y) = found {
                let scaled: Vec<i64> = y
                    .coords
                    .iter()
                    .map(|c| {
                        (c * BigRational::from_integer(4.into()))
                            .to_integer()
                            .to_i64()
                            .unwrap()
                    })
                    .collect();
                assert!(brute.iter().any(|b| b[..] == scaled[..]));
            }
        }
    }

    #[test]
    fn unit_systems() {
        let k = field("5,13");
        let u = unit_system(&k).unwrap();
        let labels: Vec<&str> = u.generators.iter().map(|g| g.label.as_str()).collect();
        assert_eq!(labels, vec!["ε5", "ε13", "√(ε5·ε13·ε65)"]);
        assert_eq!(u.index_over_subfield_units(), 2);
        assert_eq!(u.contains_norm_minus_one, NormMinusOne::Yes);

        let u = unit_system(&field("3,5")).unwrap();
        assert_eq!(u.contains_norm_minus_one, NormMinusOne::No);

        let u = unit_system(&field("5")).unwrap();
        assert_eq!(u.generators.len(), 1);
        assert_eq!(u.generators[0].norm, -1);
        assert_eq!(u.index_over_subfield_units(), 1);

        let u = unit_system(&field("2,3")).unwrap();
        assert_eq!(u.index_over_subfield_units(), 4);
    }

    #[test]
    fn generator_norms_are_exact_units() {
        for spec in ["5,13", "2,3", "3,5", "2,5", "5,29", "13,17", "7,11"] {
            let k = field(spec);
            let u = unit_system(&k).unwrap();
            for g in &u.generators {
                let nrm = k.norm(&g.element);
                assert_eq!(
                    nrm,
                    BigRational::from_integer(g.norm.into()),
                    "{spec}: {}",
                    g.label
                );
            }
            if u.index_exponent == 0 {
                // products of subfield units alone all have norm +1
                for v in 1..8usize {
                    let x = k.product(
                        u.generators
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| (v >> i) & 1 == 1)
                            .map(|(_, g)| &g.element),
                    );
                    assert_eq!(k.norm(&x), BigRational::one());
                }
            }
        }
    }

    #[test]
    fn kuroda_biquadratic() {
        let k = kuroda_class_number(&field("5,13")).unwrap();
        assert_eq!(k.class_number, 1);
        assert_eq!(k.unit_index, 2);
        assert_eq!(k.subfield_class_numbers, vec![(5, 1), (13, 1), (65, 2)]);
        assert_eq!(kuroda_class_number(&field("2,3")).unwrap().class_number, 1);
        assert_eq!(kuroda_class_number(&field("5")).unwrap().class_number, 1);
    }

    #[test]
    fn norm_minus_one_cascade() {
        assert_eq!(
            has_norm_minus_one_unit(&field("5,13")).status,
            NormMinusOne::Yes
        );
        assert_eq!(
            has_norm_minus_one_unit(&field("7")).status,
            NormMinusOne::No
        );
        let v = has_norm_minus_one_unit(&field("3,5"));
        assert_eq!(v.status, NormMinusOne::No);
        assert_eq!(v.rule, NormRule::SubfieldObstruction { radical: 3 });
        assert_eq!(
            has_norm_minus_one_unit(&field("5,29")).status,
            NormMinusOne::Yes
        );
    }

    fn arb_element() -> impl Strategy<Value = Vec<(i64, i64)>> {
        proptest::collection::vec((-50i64..50, 1i64..6), 4)
    }

    proptest! {
        #[test]
        fn arithmetic_is_associative_and_norm_multiplicative(
            a in arb_element(), b in arb_element(), c in arb_element()
        ) {
            let k = field("5,13");
            let mk = |v: &Vec<(i64, i64)>| k.element(v.iter().map(|&(n, d)| q(n, d)).collect()).unwrap();
            let (x, y, z) = (mk(&a), mk(&b), mk(&c));
            prop_assert_eq!(k.mul(&k.mul(&x, &y), &z), k.mul(&x, &k.mul(&y, &z)));
            prop_assert_eq!(k.norm(&k.mul(&x, &y)), k.norm(&x) * k.norm(&y));
        }
    }
}
