//! Keyed counter-based pseudorandom function.
//!
//! Every random quantity in a run is the AES-256 image of a 128-bit block
//! packed from `(site, index, run)`, so any rotor can be regenerated in any
//! order without storing it.
//!
//! Block layout, most significant bits first:
//!
//! ```text
//! | x: 32 (two's complement) | y: 32 | k: 34 | run: 30 |
//! ```
//!
//! Rotor indices use the lower half of the `k` range; the upper half
//! (`k >= BINOMIAL_DOMAIN`) is reserved for the per-site streams that feed
//! binomial sampling.

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes256;
use core::fmt;
use rand_core::RngCore;

use crate::lattice::Site;

pub const INDEX_BITS: u32 = 34;
pub const RUN_BITS: u32 = 30;
/// First `k` value of the reserved binomial-stream domain.
pub const BINOMIAL_DOMAIN: u64 = 1 << (INDEX_BITS - 1);
pub const MAX_INDEX: u64 = (1 << INDEX_BITS) - 1;
pub const MAX_RUN: u32 = (1 << RUN_BITS) - 1;

/// A 256-bit experiment key.
#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct Key(pub [u8; 32]);

impl Key {
    /// Parses exactly 64 hexadecimal characters.
    pub fn from_hex(s: &str) -> Option<Key> {
        let b = s.as_bytes();
        if b.len() != 64 {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, pair) in b.chunks(2).enumerate() {
            let hi = (pair[0] as char).to_digit(16)?;
            let lo = (pair[1] as char).to_digit(16)?;
            out[i] = (hi * 16 + lo) as u8;
        }
        Some(Key(out))
    }

    pub fn hex(&self) -> alloc::string::String {
        use core::fmt::Write;
        let mut s = alloc::string::String::with_capacity(64);
        for b in self.0 {
            let _ = write!(s, "{b:02x}");
        }
        s
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Key({})", self.hex())
    }
}

/// Packs `(x, y, k, run)` into one block. Injective on the documented ranges.
#[inline]
pub fn pack_block(site: Site, k: u64, run: u32) -> u128 {
    debug_assert!(k <= MAX_INDEX, "index {k} out of range");
    debug_assert!(run <= MAX_RUN, "run index {run} out of range");
    (u128::from(site.x as u32) << 96)
        | (u128::from(site.y as u32) << 64)
        | (u128::from(k & MAX_INDEX) << RUN_BITS)
        | u128::from(run & MAX_RUN)
}

#[derive(Clone)]
pub struct Prf {
    cipher: Aes256,
    key: Key,
    run: u32,
}

impl fmt::Debug for Prf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Prf").field("key", &self.key).field("run", &self.run).finish()
    }
}

impl Prf {
    pub fn new(key: Key, run: u32) -> Self {
        Prf { cipher: Aes256::new(GenericArray::from_slice(&key.0)), key, run }
    }

    pub fn key(&self) -> Key {
        self.key
    }

    pub fn run(&self) -> u32 {
        self.run
    }

    #[inline]
    pub fn block(&self, input: u128) -> u128 {
        let mut b = GenericArray::from(input.to_be_bytes());
        self.cipher.encrypt_block(&mut b);
        u128::from_be_bytes(b.into())
    }

    /// The 128-bit image of `(site, k)` for this run.
    #[inline]
    pub fn bits(&self, site: Site, k: u64) -> u128 {
        self.block(pack_block(site, k, self.run))
    }

    /// Leading 64 bits of the binary fraction `U_k(site)`.
    #[inline]
    pub fn high64(&self, site: Site, k: u64) -> u64 {
        (self.bits(site, k) >> 64) as u64
    }

    /// `U_k(site)` in `[0, 1)`, rounded down to 53 bits.
    #[inline]
    pub fn uniform(&self, site: Site, k: u64) -> f64 {
        (self.high64(site, k) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Stream of fresh bits for `site`, starting at `k = BINOMIAL_DOMAIN + offset`.
    pub fn stream(&self, site: Site, offset: u64) -> PrfStream<'_> {
        PrfStream { prf: self, site, next: BINOMIAL_DOMAIN + offset, buf: 0, have: 0 }
    }
}

/// `floor(U · n)` for `U = high / 2^64`, exact in integer arithmetic.
#[inline]
pub fn scale(high: u64, n: u64) -> u64 {
    ((u128::from(high) * u128::from(n)) >> 64) as u64
}

/// Adapts a PRF counter range to `RngCore` so standard samplers can draw
/// from it.
pub struct PrfStream<'a> {
    prf: &'a Prf,
    site: Site,
    next: u64,
    buf: u64,
    have: u8,
}

impl RngCore for PrfStream<'_> {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        if self.have == 0 {
            let b = self.prf.bits(self.site, self.next);
            self.next += 1;
            self.buf = b as u64;
            self.have = 1;
            (b >> 64) as u64
        } else {
            self.have = 0;
            self.buf
        }
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn prf() -> Prf {
        Prf::new(Key([7u8; 32]), 1)
    }

    #[test]
    fn deterministic() {
        let p = prf();
        let s = Site::new(-3, 9);
        assert_eq!(p.bits(s, 12), p.bits(s, 12));
        assert_eq!(p.uniform(s, 12), prf().uniform(s, 12));
    }

    #[test]
    fn packing_uses_disjoint_fields() {
        let base = pack_block(Site::new(0, 0), 0, 0);
        assert_eq!(base, 0);
        assert_eq!(pack_block(Site::new(0, 0), 0, 1), 1);
        assert_eq!(pack_block(Site::new(0, 0), 1, 0), 1 << 30);
        assert_eq!(pack_block(Site::new(0, 1), 0, 0), 1 << 64);
        assert_eq!(pack_block(Site::new(1, 0), 0, 0), 1 << 96);
        assert_eq!(pack_block(Site::new(-1, -1), MAX_INDEX, MAX_RUN), u128::MAX);
        let a = pack_block(Site::new(2, -1), 5, 3);
        let b = pack_block(Site::new(2, -1), 5, 4);
        let c = pack_block(Site::new(2, -1), 6, 3);
        assert!(a != b && a != c && b != c);
    }

    #[test]
    fn key_hex_round_trip() {
        let hex = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f";
        let k = Key::from_hex(hex).unwrap();
        assert_eq!(k.0[31], 0x1f);
        assert_eq!(k.hex(), hex);
        assert!(Key::from_hex("00").is_none());
        assert!(Key::from_hex(&"g".repeat(64)).is_none());
    }

    #[test]
    fn aes256_known_answer() {
        // FIPS-197 appendix C.3.
        let key = Key::from_hex("000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f").unwrap();
        let p = Prf::new(key, 0);
        let out = p.block(0x00112233445566778899aabbccddeeff);
        assert_eq!(out, 0x8ea2b7ca516745bfeafc49904b496089);
    }

    #[test]
    fn scale_is_floor() {
        assert_eq!(scale(0, 10), 0);
        assert_eq!(scale(u64::MAX, 10), 9);
        assert_eq!(scale(1 << 63, 3), 1);
    }

    /// Kolmogorov–Smirnov statistic against the uniform law.
    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let mut d: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            d = d.max((x - lo).abs()).max((hi - x).abs());
        }
        d
    }

    #[test]
    fn uniform_passes_ks_at_1e_minus_3() {
        let p = prf();
        let n = 1_000_000usize;
        let xs: Vec<f64> = (0..n)
            .map(|i| p.uniform(Site::new((i % 1000) as i32 - 500, (i / 1000) as i32 - 500), (i % 7) as u64))
            .collect();
        let d = ks_uniform(xs);
        // Asymptotic critical value for alpha = 1e-3 is 1.9495 / sqrt(n).
        let crit = 1.9495 / (n as f64).sqrt();
        assert!(d < crit, "KS statistic {d} exceeds {crit}");
    }

    #[test]
    fn stream_differs_from_rotor_indices() {
        let p = prf();
        let s = Site::new(1, 1);
        let mut st = p.stream(s, 0);
        let first = st.next_u64();
        assert_eq!(first, p.high64(s, BINOMIAL_DOMAIN));
        assert_ne!(first, p.high64(s, 0));
    }
}
