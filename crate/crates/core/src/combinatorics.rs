//! Exact subset and permutation ranking.
//!
//! Subsets of `{0..n}` are ranked in colexicographic order through the
//! combinatorial number system: a sorted subset `c_0 < c_1 < ... < c_{k-1}`
//! has rank `sum_i C(c_i, i + 1)`. Permutations are ranked lexicographically
//! through their Lehmer code.

use num_bigint::BigUint;
use num_traits::One;

use crate::error::{Error, Result};

pub fn binomial_big(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::ZERO;
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        // Exact at every step: acc holds C(n, i+1) after the division.
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

pub fn factorial_big(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, i| acc * i)
}

/// floor(log2(x)) for x >= 1; zero for x = 0.
pub fn floor_log2(x: &BigUint) -> u32 {
    (x.bits().max(1) - 1) as u32
}

pub fn binomial(n: usize, k: usize) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // C(n, i+1) = C(n, i) * (n - i) / (i + 1). After removing
        // gcd(acc, i+1) the rest of the denominator divides (n - i).
        let num = (n - i) as u128;
        let den = (i + 1) as u128;
        let g = gcd(acc, den);
        acc = (acc / g)
            .checked_mul(num / (den / g))
            .ok_or(Error::OverflowGuard { what: "binomial coefficient" })?;
    }
    Ok(acc)
}

pub fn factorial(n: usize) -> Result<u128> {
    (1..=n as u128).try_fold(1u128, |acc, i| {
        acc.checked_mul(i)
            .ok_or(Error::OverflowGuard { what: "factorial" })
    })
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Colexicographic rank of a strictly increasing subset.
pub fn colex_rank(sorted_subset: &[usize]) -> Result<u128> {
    sorted_subset
        .iter()
        .enumerate()
        .try_fold(0u128, |acc, (i, &c)| {
            let term = binomial(c, i + 1)?;
            acc.checked_add(term)
                .ok_or(Error::OverflowGuard { what: "subset rank" })
        })
}

/// Inverse of [`colex_rank`]: the `k`-subset of `{0..n}` with the given rank,
/// in increasing order. `rank` must be below `C(n, k)`.
pub fn colex_unrank(mut rank: u128, k: usize, n: usize) -> Result<Vec<usize>> {
    let mut subset = vec![0usize; k];
    let mut upper = n;
    for i in (1..=k).rev() {
        // Largest c < upper with C(c, i) <= rank.
        let mut c = upper;
        loop {
            if c < i {
                return Err(Error::InvalidArgument(format!(
                    "subset rank out of range for C({n}, {k})"
                )));
            }
            c -= 1;
            let b = binomial(c, i)?;
            if b <= rank {
                rank -= b;
                break;
            }
        }
        subset[i - 1] = c;
        upper = c;
    }
    if rank != 0 {
        return Err(Error::InvalidArgument(format!(
            "subset rank out of range for C({n}, {k})"
        )));
    }
    Ok(subset)
}

/// Lexicographic rank of a permutation of `0..m`.
pub fn lehmer_rank(perm: &[usize]) -> Result<u128> {
    let m = perm.len();
    let mut rank: u128 = 0;
    for i in 0..m {
        let smaller_later = perm[i + 1..].iter().filter(|&&p| p < perm[i]).count() as u128;
        rank = rank
            .checked_mul((m - i) as u128)
            .and_then(|r| r.checked_add(smaller_later))
            .ok_or(Error::OverflowGuard { what: "permutation rank" })?;
    }
    Ok(rank)
}

/// Inverse of [`lehmer_rank`]. `rank` must be below `m!`.
pub fn lehmer_unrank(mut rank: u128, m: usize) -> Result<Vec<usize>> {
    let mut digits = vec![0usize; m];
    for i in (0..m).rev() {
        let base = (m - i) as u128;
        digits[i] = (rank % base) as usize;
        rank /= base;
    }
    if rank != 0 {
        return Err(Error::InvalidArgument(format!(
            "permutation rank out of range for {m}!"
        )));
    }
    let mut pool: Vec<usize> = (0..m).collect();
    Ok(digits.into_iter().map(|d| pool.remove(d)).collect())
}
