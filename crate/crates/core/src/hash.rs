//! Seeded 2-universal hashing over byte strings.
//!
//! Keys are first folded into a field element of GF(2^61 - 1) with a
//! polynomial fingerprint, then each row applies an independent affine map
//! `((a * x + b) mod p) mod w`. The affine stage is the classic
//! Carter-Wegman pairwise-independent family; the fingerprint stage only
//! collides distinct keys with probability at most `len / p`.
//!
//! Between the two stages the fingerprint goes through a fixed 64-bit
//! bijection. Without it, keys that differ only in their last byte (such as
//! consecutive decimal labels) land on an arithmetic progression, and some
//! multipliers `a` fold that progression onto few buckets.

use rand::Rng;

pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[inline]
fn reduce(x: u128) -> u64 {
    let lo = (x as u64) & MERSENNE_61;
    let hi = (x >> 61) as u64;
    // inputs are products of two field elements, so lo + hi <= 2p
    let mut r = lo + hi;
    while r >= MERSENNE_61 {
        r -= MERSENNE_61;
    }
    r
}

#[inline]
pub fn mul_mod(a: u64, b: u64) -> u64 {
    reduce(a as u128 * b as u128)
}

#[inline]
pub fn add_mod(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= MERSENNE_61 {
        s - MERSENNE_61
    } else {
        s
    }
}

/// Polynomial fingerprint of a byte string with evaluation point `base`.
#[inline]
pub fn fingerprint(base: u64, key: &[u8]) -> u64 {
    // +1 keeps leading zero bytes significant
    key.iter()
        .fold(0u64, |h, &byte| add_mod(mul_mod(h, base), byte as u64 + 1))
}

/// splitmix64 finaliser, a bijection on `u64`, reduced into the field.
#[inline]
pub fn scramble(fp: u64) -> u64 {
    let mut z = fp;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    z % MERSENNE_61
}

/// One member of the affine family `x -> (a x + b) mod p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowHash {
    pub a: u64,
    pub b: u64,
}

impl RowHash {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        RowHash {
            a: rng.random_range(1..MERSENNE_61),
            b: rng.random_range(0..MERSENNE_61),
        }
    }

    #[inline]
    pub fn bucket(&self, fp: u64, width: usize) -> usize {
        (add_mod(mul_mod(self.a, fp), self.b) % width as u64) as usize
    }
}

/// The full hash state of one sketch table: a fingerprint base and one
/// affine map per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    pub base: u64,
    pub rows: Vec<RowHash>,
}

impl HashFamily {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, depth: usize) -> Self {
        let base = rng.random_range(256..MERSENNE_61);
        let rows = (0..depth).map(|_| RowHash::random(rng)).collect();
        HashFamily { base, rows }
    }

    #[inline]
    pub fn fingerprint(&self, key: &[u8]) -> u64 {
        scramble(fingerprint(self.base, key))
    }
}
