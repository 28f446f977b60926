//! Conjectural density of primes `p` with `L_p = H(ζ_p⁺)` as a truncated
//! Euler product with a certified tail, and the empirical density from scans.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::arith::{is_prime, sieve_primes, Sieve};
use crate::criterion::{evaluate_prime, CriterionUnits, PrimeVerdict};
use crate::error::{Error, Result};
use crate::multiquad::{MultiquadField, NormMinusOne};

/// Fixed-point precision of the truncated product.
pub const DENSITY_PRECISION_BITS: u64 = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalFactor {
    pub l: u64,
    /// `[K(ζ_l) : K]`.
    pub degree: u64,
    pub d_l: BigRational,
    pub p_l: BigRational,
}

fn ratio(n: impl Into<BigInt>, d: impl Into<BigInt>) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// `[K(ζ_l) : K]` for odd `l`: `K ∩ Q(ζ_l)` is `Q(√l)` when `l ≡ 1 mod 4`
/// and `l` is a subfield radical, and `Q` otherwise.
pub fn cyclotomic_degree(field: &MultiquadField, l: u64) -> u64 {
    if l % 4 == 1 && field.mask_of_radical(l).is_some() {
        (l - 1) / 2
    } else {
        l - 1
    }
}

pub fn local_factor(field: &MultiquadField, l: u64) -> Result<LocalFactor> {
    if l == 2 {
        return Err(Error::domain("the factor at 2 is given by p2_factor"));
    }
    if !is_prime(l) {
        return Err(Error::domain(format!("{l} is not prime")));
    }
    let n = field.degree() as u32;
    let d_l = ratio(BigInt::from(l - 1).pow(n - 1), BigInt::from(l).pow(n - 1));
    let degree = cyclotomic_degree(field, l);
    let p_l =
        BigRational::one() - (BigRational::one() - &d_l) / BigRational::from_integer(degree.into());
    Ok(LocalFactor {
        l,
        degree,
        d_l,
        p_l,
    })
}

pub fn p2_factor(status: NormMinusOne) -> Result<BigRational> {
    match status {
        NormMinusOne::Yes => Ok(ratio(1, 2)),
        NormMinusOne::No => Ok(BigRational::zero()),
        NormMinusOne::Unknown => Err(Error::Undecided(
            "the factor at 2 needs the norm -1 status".into(),
        )),
    }
}

/// `(1/n)·P₂·∏_{3 ≤ l ≤ cutoff} P_l` as an exact rational.
pub fn exact_truncated_product(
    field: &MultiquadField,
    status: NormMinusOne,
    cutoff: u64,
) -> Result<BigRational> {
    let mut acc = p2_factor(status)? / BigRational::from_integer(field.degree().into());
    for l in (3..=cutoff).filter(|&l| is_prime(l)) {
        acc *= local_factor(field, l)?.p_l;
    }
    Ok(acc)
}

/// A nonnegative real held as `value / 2^bits`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixed {
    pub value: BigInt,
    pub bits: u64,
}

impl Fixed {
    fn from_rational_floor(x: &BigRational, bits: u64) -> Fixed {
        Fixed {
            value: (x.numer() << bits).div_floor(x.denom()),
            bits,
        }
    }

    fn from_rational_ceil(x: &BigRational, bits: u64) -> Fixed {
        Fixed {
            value: -((-(x.numer() << bits)).div_floor(x.denom())),
            bits,
        }
    }

    fn mul_floor(&self, x: &BigRational) -> Fixed {
        Fixed {
            value: (&self.value * x.numer()).div_floor(x.denom()),
            bits: self.bits,
        }
    }

    fn mul_ceil(&self, x: &BigRational) -> Fixed {
        Fixed {
            value: -((-(&self.value * x.numer())).div_floor(x.denom())),
            bits: self.bits,
        }
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(self.value.clone(), BigInt::one() << self.bits)
    }

    pub fn to_f64(&self) -> f64 {
        self.to_rational().to_f64().unwrap_or(f64::NAN)
    }

    /// Decimal digits after the point, truncated.
    pub fn decimal(&self, digits: u32) -> String {
        let scaled: BigInt = (&self.value * BigInt::from(10u32).pow(digits)) >> self.bits;
        let s = scaled.abs().to_string();
        let s = format!("{:0>width$}", s, width = digits as usize + 1);
        let (int, frac) = s.split_at(s.len() - digits as usize);
        let sign = if self.value.is_negative() { "-" } else { "" };
        format!("{sign}{int}.{frac}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Empirical {
    pub hits: u64,
    pub total: u64,
}

impl Empirical {
    pub fn ratio(&self) -> BigRational {
        ratio(self.hits, self.total)
    }

    pub fn ratio_f64(&self) -> f64 {
        self.hits as f64 / self.total as f64
    }
}

#[derive(Debug, Clone)]
pub struct DensityEstimate {
    pub field: String,
    pub cutoff: u64,
    /// Lower and upper roundings of the truncated product.
    pub truncated_lo: Fixed,
    pub truncated_hi: Fixed,
    /// Certified lower bound on `∏_{l > cutoff} P_l`.
    pub tail_lower_factor: Fixed,
    /// `D ∈ [lower, upper]`.
    pub lower: Fixed,
    pub upper: Fixed,
    pub empirical: Option<Empirical>,
}

impl DensityEstimate {
    pub fn width(&self) -> f64 {
        self.upper.to_f64() - self.lower.to_f64()
    }
}

/// Lower bound on `∏_{l > L} P_l`.
///
/// For `l` not among the subfield radicals, `1 - P_l ≤ c₀/(l(l-1))` with
/// `c₀ = 2^(n-1)`; summing over all integers `k > L` gives `c₀/L`. The
/// finitely many ramified `l > L` contribute their exact `1 - P_l`. Then
/// `∏(1 - x_l) ≥ 1 - Σ x_l`.
fn tail_lower_bound(field: &MultiquadField, cutoff: u64) -> Result<BigRational> {
    let c0 = 1u64 << (field.degree() - 1);
    if c0 >= cutoff {
        return Err(Error::domain(format!(
            "cutoff {cutoff} is too small for the tail bound; use a cutoff above {c0}"
        )));
    }
    let mut sum = ratio(c0, cutoff);
    for s in field.quadratic_subfields() {
        if s > cutoff && is_prime(s) {
            sum += BigRational::one() - local_factor(field, s)?.p_l;
        }
    }
    let bound = BigRational::one() - sum;
    if !bound.is_positive() {
        return Err(Error::domain(format!(
            "tail bound at cutoff {cutoff} is not positive; use a larger cutoff"
        )));
    }
    Ok(bound)
}

pub fn conjectural_density(
    field: &MultiquadField,
    status: NormMinusOne,
    cutoff: u64,
) -> Result<DensityEstimate> {
    if cutoff < 3 {
        return Err(Error::domain(format!("cutoff {cutoff} is below 3")));
    }
    let tail = tail_lower_bound(field, cutoff)?;
    let bits = DENSITY_PRECISION_BITS;
    let start = p2_factor(status)? / BigRational::from_integer(field.degree().into());
    let mut lo = Fixed::from_rational_floor(&start, bits);
    let mut hi = Fixed::from_rational_ceil(&start, bits);
    for l in sieve_primes(cutoff)?.into_iter().filter(|&l| l != 2) {
        let f = local_factor(field, l)?;
        lo = lo.mul_floor(&f.p_l);
        hi = hi.mul_ceil(&f.p_l);
    }
    let tail_lower_factor = Fixed::from_rational_floor(&tail, bits);
    let lower = lo.mul_floor(&tail_lower_factor.to_rational());
    Ok(DensityEstimate {
        field: field.spec_string(),
        cutoff,
        truncated_lo: lo,
        upper: hi.clone(),
        truncated_hi: hi,
        tail_lower_factor,
        lower,
        empirical: None,
    })
}

/// The criterion at each of the first `num_primes` primes, in order.
///
/// Work is spread over `workers` threads; the output does not depend on it.
pub fn scan(
    units: &CriterionUnits,
    num_primes: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<PrimeVerdict>> {
    if num_primes == 0 {
        return Err(Error::Input("number of primes must be positive".into()));
    }
    if workers == 0 {
        return Err(Error::Input("worker count must be positive".into()));
    }
    let sieve = Sieve::with_prime_count(num_primes)?;
    let primes = &sieve.primes()[..num_primes];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        primes
            .par_iter()
            .map(|&p| evaluate_prime(units, p, sieve.factorize(p - 1)?, seed))
            .collect()
    })
}

pub fn empirical_density(
    units: &CriterionUnits,
    num_primes: usize,
    seed: u64,
    workers: usize,
) -> Result<Empirical> {
    let rows = scan(units, num_primes, seed, workers)?;
    Ok(Empirical {
        hits: rows.iter().filter(|r| r.verdict()).count() as u64,
        total: rows.len() as u64,
    })
}
