//! Machine-width modular arithmetic: sieving, factorization, quadratic
//! residues, square roots, roots of unity and discrete logarithms in prime
//! order subgroups of `F_p^×`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest sieve the library agrees to allocate (4 bytes per entry).
pub const MAX_SIEVE_LIMIT: u64 = 50_000_000;

#[inline]
pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Inverse of `a` modulo the prime `p`; `a` must be nonzero mod `p`.
pub fn inv_mod(a: u64, p: u64) -> u64 {
    debug_assert!(a % p != 0);
    pow_mod(a, p - 2, p)
}

/// Reduces a signed integer into `[0, m)`.
#[inline]
pub fn reduce_signed(a: i64, m: u64) -> u64 {
    a.rem_euclid(m as i64) as u64
}

/// Deterministic Miller–Rabin, exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &q in &SMALL {
        if n % q == 0 {
            return n == q;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &SMALL {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Prime factorization of a positive machine integer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeFactorization {
    pub value: u64,
    /// `(prime, multiplicity)` pairs, ascending by prime.
    pub factors: Vec<(u64, u32)>,
}

impl PrimeFactorization {
    pub fn recompose(&self) -> u64 {
        self.factors.iter().map(|&(q, e)| q.pow(e)).product()
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.factors.iter().map(|&(q, _)| q)
    }

    pub fn odd_primes(&self) -> Vec<u64> {
        self.primes().filter(|&q| q != 2).collect()
    }
}

/// Trial-division factorization, used above the sieve limit.
pub fn factorize_trial(n: u64) -> Result<PrimeFactorization> {
    if n == 0 {
        return Err(Error::domain("cannot factor 0"));
    }
    let mut rest = n;
    let mut factors = Vec::new();
    let mut push = |q: u64, rest: &mut u64| {
        let mut e = 0;
        while *rest % q == 0 {
            *rest /= q;
            e += 1;
        }
        if e > 0 {
            factors.push((q, e));
        }
    };
    push(2, &mut rest);
    let mut q = 3;
    while q * q <= rest {
        push(q, &mut rest);
        q += 2;
    }
    if rest > 1 {
        factors.push((rest, 1));
    }
    Ok(PrimeFactorization { value: n, factors })
}

/// Sieve of Eratosthenes with a smallest-prime-factor table.
#[derive(Debug, Clone)]
pub struct Sieve {
    limit: u64,
    spf: Vec<u32>,
    primes: Vec<u64>,
}

impl Sieve {
    pub fn new(limit: u64) -> Result<Self> {
        if limit < 2 {
            return Err(Error::domain(format!("sieve limit {limit} is below 2")));
        }
        if limit > MAX_SIEVE_LIMIT {
            return Err(Error::Resource(format!(
                "sieve limit {limit} exceeds the memory budget of {MAX_SIEVE_LIMIT}"
            )));
        }
        let n = limit as usize;
        let mut spf = vec![0u32; n + 1];
        let mut primes = Vec::new();
        for i in 2..=n {
            if spf[i] == 0 {
                spf[i] = i as u32;
                primes.push(i as u64);
            }
            let si = spf[i];
            // linear sieve: each composite is struck once by its smallest factor
            for &q in &primes {
                let q32 = q as u32;
                if q32 > si || i * q as usize > n {
                    break;
                }
                spf[i * q as usize] = q32;
            }
        }
        Ok(Sieve { limit, spf, primes })
    }

    /// A sieve large enough to contain the first `count` primes.
    pub fn with_prime_count(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Input("prime count must be positive".into()));
        }
        let sieve = Sieve::new(nth_prime_upper_bound(count as u64))?;
        debug_assert!(sieve.primes.len() >= count);
        Ok(sieve)
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn is_prime(&self, n: u64) -> bool {
        if n <= self.limit {
            n >= 2 && self.spf[n as usize] as u64 == n
        } else {
            is_prime(n)
        }
    }

    pub fn smallest_prime_factor(&self, n: u64) -> Option<u64> {
        (2..=self.limit)
            .contains(&n)
            .then(|| self.spf[n as usize] as u64)
    }

    /// Factors `n` through the table when it fits, by trial division otherwise.
    pub fn factorize(&self, n: u64) -> Result<PrimeFactorization> {
        if n == 0 {
            return Err(Error::domain("cannot factor 0"));
        }
        if n > self.limit {
            return factorize_trial(n);
        }
        let mut rest = n;
        let mut factors: Vec<(u64, u32)> = Vec::new();
        while rest > 1 {
            let q = self.spf[rest as usize] as u64;
            rest /= q;
            match factors.last_mut() {
                Some((last, e)) if *last == q => *e += 1,
                _ => factors.push((q, 1)),
            }
        }
        Ok(PrimeFactorization { value: n, factors })
    }
}

/// Primes up to and including `limit`.
pub fn sieve_primes(limit: u64) -> Result<Vec<u64>> {
    Ok(Sieve::new(limit)?.primes)
}

/// Upper bound for the `n`-th prime (Rosser's bound, padded for small `n`).
pub fn nth_prime_upper_bound(n: u64) -> u64 {
    if n < 6 {
        return 13;
    }
    let x = n as f64;
    (x * (x.ln() + x.ln().ln())).ceil() as u64 + 3
}

fn check_odd_prime(p: u64) -> Result<()> {
    if p == 2 || !is_prime(p) {
        return Err(Error::domain(format!("{p} is not an odd prime")));
    }
    Ok(())
}

/// Jacobi symbol `(a/n)` for odd `n`; no primality check.
pub fn jacobi(a: i64, n: u64) -> i8 {
    debug_assert!(n % 2 == 1);
    let mut a = reduce_signed(a, n);
    let mut n = n;
    let mut sign = 1i8;
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            if matches!(n % 8, 3 | 5) {
                sign = -sign;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            sign = -sign;
        }
        a %= n;
    }
    if n == 1 {
        sign
    } else {
        0
    }
}

/// Legendre symbol `(a/p)` for an odd prime `p`.
pub fn legendre_symbol(a: i64, p: u64) -> Result<i8> {
    check_odd_prime(p)?;
    Ok(jacobi(a, p))
}

/// Square root of a quadratic residue modulo an odd prime, returned in
/// `[1, (p-1)/2]` (or `0` for `a ≡ 0`). The partner root is `p - r`.
pub fn sqrt_mod(a: i64, p: u64) -> Result<u64> {
    check_odd_prime(p)?;
    let a = reduce_signed(a, p);
    if a == 0 {
        return Ok(0);
    }
    if jacobi(a as i64, p) != 1 {
        return Err(Error::domain(format!("{a} is not a square modulo {p}")));
    }
    Ok(sqrt_mod_unchecked(a, p))
}

/// Tonelli–Shanks on a known nonzero residue; the non-residue search runs
/// through 2, 3, 4, ... so the output is reproducible.
pub fn sqrt_mod_unchecked(a: u64, p: u64) -> u64 {
    let root = if p % 4 == 3 {
        pow_mod(a, (p + 1) / 4, p)
    } else {
        let mut q = p - 1;
        let mut s = 0u32;
        while q % 2 == 0 {
            q /= 2;
            s += 1;
        }
        let z = (2..p)
            .find(|&z| jacobi(z as i64, p) == -1)
            .expect("odd prime has a non-residue");
        let mut m = s;
        let mut c = pow_mod(z, q, p);
        let mut t = pow_mod(a, q, p);
        let mut r = pow_mod(a, (q + 1) / 2, p);
        while t != 1 {
            let mut i = 0;
            let mut t2 = t;
            while t2 != 1 {
                t2 = mul_mod(t2, t2, p);
                i += 1;
            }
            let b = pow_mod(c, 1 << (m - i - 1), p);
            m = i;
            c = mul_mod(b, b, p);
            t = mul_mod(t, c, p);
            r = mul_mod(r, b, p);
        }
        r
    };
    root.min(p - root)
}

/// An element of exact multiplicative order `l` modulo `p`.
///
/// `seed == 0` scans bases 2, 3, 4, ...; any other seed draws bases from a
/// ChaCha stream, so different seeds give (generally) different roots of
/// unity.
pub fn element_of_order(l: u64, p: u64, seed: u64) -> Result<u64> {
    if l < 2 || p < 3 || (p - 1) % l != 0 {
        return Err(Error::domain(format!("{l} does not divide {p} - 1")));
    }
    if !is_prime(l) {
        return Err(Error::domain(format!("{l} is not prime")));
    }
    let cofactor = (p - 1) / l;
    let lift = |g: u64| pow_mod(g, cofactor, p);
    if seed == 0 {
        Ok((2..p).map(lift).find(|&z| z != 1).expect("F_p^× is cyclic"))
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let z = lift(rng.gen_range(2..p));
            if z != 1 {
                return Ok(z);
            }
        }
    }
}

/// Baby-step/giant-step table for logarithms to the base `zeta` of order `l`.
///
/// Building costs `O(√l)` multiplications and entries; each lookup costs at
/// most `O(√l)` more.
#[derive(Debug, Clone)]
pub struct DlogTable {
    p: u64,
    l: u64,
    step: u64,
    giant: u64,
    baby: HashMap<u64, u64>,
}

impl DlogTable {
    pub fn new(zeta: u64, l: u64, p: u64) -> Result<Self> {
        let zeta = zeta % p;
        if zeta == 1 || pow_mod(zeta, l, p) != 1 {
            return Err(Error::domain(format!(
                "{zeta} does not have order {l} modulo {p}"
            )));
        }
        let step = (l as f64).sqrt().ceil() as u64;
        let mut baby = HashMap::with_capacity(step as usize);
        let mut cur = 1u64;
        for j in 0..step {
            baby.entry(cur).or_insert(j);
            cur = mul_mod(cur, zeta, p);
        }
        // zeta^(-step) = zeta^(l - step mod l)
        let giant = pow_mod(zeta, (l - step % l) % l, p);
        Ok(DlogTable {
            p,
            l,
            step,
            giant,
            baby,
        })
    }

    pub fn log(&self, target: u64) -> Result<u64> {
        let mut gamma = target % self.p;
        for i in 0..=self.step {
            if let Some(&j) = self.baby.get(&gamma) {
                return Ok((i * self.step + j) % self.l);
            }
            gamma = mul_mod(gamma, self.giant, self.p);
        }
        Err(Error::domain(format!(
            "{target} is not in the subgroup of order {} modulo {}",
            self.l, self.p
        )))
    }
}

/// Logarithm of `target` to the base `zeta`, where `zeta` has prime order `l`.
pub fn dlog_prime_order(zeta: u64, target: u64, l: u64, p: u64) -> Result<u64> {
    if pow_mod(target, l, p) != 1 {
        return Err(Error::domain(format!(
            "{target} is not in the subgroup of order {l} modulo {p}"
        )));
    }
    DlogTable::new(zeta, l, p)?.log(target)
}
