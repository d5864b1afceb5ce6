//! The potential kernel of simple random walk on the square lattice and the
//! approximate odometer built from it.
//!
//! Exact values have the form `p + q/π` with rational `p, q` and are
//! generated column by column from the diagonal values
//! `a(n, n) = (4/π) Σ_{k=1}^{n} 1/(2k-1)` and discrete harmonicity.
//! Converting them to floating point needs many digits of π because the
//! two terms cancel almost completely.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::lattice::{IntField, Site};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Constant term of the expansion, `(ln 8 + 2γ)/π`.
pub fn kappa() -> f64 {
    (libm::log(8.0) + 2.0 * EULER_GAMMA) / core::f64::consts::PI
}

/// Number of fractional bits of π used when converting to `f64`, unless a
/// value needs more.
pub const DEFAULT_PI_BITS: u64 = 1024;

/// An exact number `p + q/π`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiRational {
    pub p: BigRational,
    pub q: BigRational,
}

impl PiRational {
    pub fn zero() -> Self {
        PiRational { p: BigRational::zero(), q: BigRational::zero() }
    }

    pub fn integer(n: i64) -> Self {
        PiRational { p: BigRational::from_integer(n.into()), q: BigRational::zero() }
    }

    /// `Σ c_i · v_i` for integer coefficients.
    pub fn linear_combination(terms: &[(i64, &PiRational)]) -> PiRational {
        let mut out = PiRational::zero();
        for (c, v) in terms {
            let c = BigRational::from_integer((*c).into());
            out.p += &v.p * &c;
            out.q += &v.q * &c;
        }
        out
    }

    /// `self / k`, exact.
    pub fn div_int(&self, k: i64) -> PiRational {
        let k = BigRational::from_integer(k.into());
        PiRational { p: &self.p / &k, q: &self.q / &k }
    }

    /// Conversion using `pi_fixed = ⌊π · 2^bits⌋`.
    pub fn to_f64_with(&self, pi_fixed: &BigInt, bits: u64) -> f64 {
        // p + q/π ≈ (a·d·Π + c·b·2^bits) / (b·d·Π)
        let (a, b) = (self.p.numer(), self.p.denom());
        let (c, d) = (self.q.numer(), self.q.denom());
        let num = a * d * pi_fixed + ((c * b) << bits as usize);
        let den = b * d * pi_fixed;
        BigRational::new(num, den).to_f64().unwrap_or(f64::NAN)
    }

    /// Bits of π needed so the rounding error in `p·π` stays far below one
    /// ulp of the result.
    pub fn pi_bits_needed(&self) -> u64 {
        let mag = self.p.numer().bits().saturating_sub(self.p.denom().bits());
        DEFAULT_PI_BITS.max(mag + 128)
    }

    pub fn to_f64(&self) -> f64 {
        let bits = self.pi_bits_needed();
        self.to_f64_with(&pi_fixed(bits), bits)
    }
}

impl fmt::Display for PiRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + ({})/pi", self.p, self.q)
    }
}

/// `⌊arctan(1/n) · 2^bits⌋` up to a few units in the last place.
fn arctan_inv(n: u32, bits: u64) -> BigInt {
    let one = BigInt::one() << bits as usize;
    let n2 = BigInt::from(n) * BigInt::from(n);
    let mut power = one / BigInt::from(n);
    let mut sum = BigInt::zero();
    let mut k = 0u64;
    while !power.is_zero() {
        let term = &power / BigInt::from(2 * k + 1);
        if k.is_multiple_of(2) {
            sum += term;
        } else {
            sum -= term;
        }
        power /= &n2;
        k += 1;
    }
    sum
}

/// `⌊π · 2^bits⌋` by Machin's formula `π = 16 arctan(1/5) - 4 arctan(1/239)`.
pub fn pi_fixed(bits: u64) -> BigInt {
    let guard = 32;
    let w = bits + guard;
    let pi = arctan_inv(5, w) * 16 - arctan_inv(239, w) * 4;
    pi >> guard as usize
}

/// Exact potential kernel on the octant `0 <= y <= x <= radius`, with a
/// floating-point cache.
#[derive(Clone, Debug)]
pub struct KernelTable {
    radius: u32,
    /// `exact[x][y]` for `y <= x`.
    exact: Vec<Vec<PiRational>>,
    real: Vec<Vec<f64>>,
}

impl KernelTable {
    pub fn new(radius: u32) -> Self {
        let r = radius as usize;
        // Work with integers over the common denominator of the q parts,
        // lcm(1, 3, ..., 2r - 1), to avoid a gcd per operation.
        let mut den = BigInt::one();
        for k in 1..=r {
            den = den.lcm(&BigInt::from(2 * k - 1));
        }
        // (p, q · den)
        type Pair = (BigInt, BigInt);
        let lin = |terms: &[(i64, &Pair)]| -> Pair {
            let mut out = (BigInt::zero(), BigInt::zero());
            for (c, v) in terms {
                out.0 += &v.0 * *c;
                out.1 += &v.1 * *c;
            }
            out
        };
        let mut cols: Vec<Vec<Pair>> = Vec::with_capacity(r + 1);
        cols.push(vec![(BigInt::zero(), BigInt::zero())]);
        let mut harmonic = BigInt::zero();
        for x in 0..r {
            // Build column x + 1 from columns x and x - 1.
            let mut col = Vec::with_capacity(x + 2);
            if x == 0 {
                col.push((BigInt::one(), BigInt::zero()));
            } else {
                let cur = &cols[x];
                let prev = &cols[x - 1];
                let at = |y: i64| -> &Pair { &cur[y.unsigned_abs() as usize] };
                for y in 0..x {
                    let yi = y as i64;
                    col.push(lin(&[(4, at(yi)), (-1, &prev[y]), (-1, at(yi + 1)), (-1, at(yi - 1))]));
                }
                col.push(lin(&[(2, &cur[x]), (-1, &cur[x - 1])]));
            }
            harmonic += &den / BigInt::from(2 * x + 1);
            col.push((BigInt::zero(), &harmonic * 4));
            cols.push(col);
        }
        let exact: Vec<Vec<PiRational>> = cols
            .into_iter()
            .map(|col| {
                col.into_iter()
                    .map(|(p, q)| PiRational { p: BigRational::from_integer(p), q: BigRational::new(q, den.clone()) })
                    .collect()
            })
            .collect();
        let bits = exact.iter().flatten().map(PiRational::pi_bits_needed).max().unwrap_or(DEFAULT_PI_BITS);
        let pi = pi_fixed(bits);
        let real = exact.iter().map(|col| col.iter().map(|v| v.to_f64_with(&pi, bits)).collect()).collect();
        KernelTable { radius, exact, real }
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    fn octant(x: i64, y: i64) -> (usize, usize) {
        let (a, b) = (x.unsigned_abs() as usize, y.unsigned_abs() as usize);
        if a >= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn covers(&self, x: i64, y: i64) -> bool {
        Self::octant(x, y).0 <= self.radius as usize
    }

    /// Exact `a(x, y)`; panics outside the table.
    pub fn exact(&self, x: i64, y: i64) -> &PiRational {
        let (a, b) = Self::octant(x, y);
        &self.exact[a][b]
    }

    /// `a(x, y)` from the table when covered, otherwise from the expansion.
    pub fn value(&self, x: i64, y: i64) -> f64 {
        let (a, b) = Self::octant(x, y);
        if a <= self.radius as usize {
            self.real[a][b]
        } else {
            kernel_asymptotic(x as f64, y as f64)
        }
    }

    /// Octant rows `(x, y, exact, value)` in column order.
    pub fn rows(&self) -> impl Iterator<Item = (u32, u32, &PiRational, f64)> + '_ {
        self.exact.iter().enumerate().flat_map(move |(x, col)| {
            col.iter().enumerate().map(move |(y, v)| (x as u32, y as u32, v, self.real[x][y]))
        })
    }
}

/// `(2/π) ln|z| + κ - Re(z⁴) / (6π|z|⁶)`, for `z ≠ 0`.
pub fn kernel_asymptotic(x: f64, y: f64) -> f64 {
    let pi = core::f64::consts::PI;
    let r2 = x * x + y * y;
    let re_z4 = x * x * x * x - 6.0 * x * x * y * y + y * y * y * y;
    (1.0 / pi) * libm::log(r2) + kappa() - re_z4 / (6.0 * pi * r2 * r2 * r2)
}

/// How the real-valued approximation is turned into an integer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    /// `⌊w⌋`.
    #[default]
    Floor,
    /// `⌊w + ½⌋`.
    Nearest,
}

/// Tuning of the approximate odometer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxParams {
    /// Below this norm the exact kernel is used; above it the expansion.
    pub crossover: f64,
    /// Sites with `|z| >= r + cutoff_pad` get `u1 = 0`.
    pub cutoff_pad: f64,
    pub rounding: Rounding,
}

impl Default for ApproxParams {
    fn default() -> Self {
        ApproxParams { crossover: 100.0, cutoff_pad: 0.0, rounding: Rounding::Floor }
    }
}

/// Radius of the disk of area `n`.
pub fn disk_radius(n: u64) -> f64 {
    libm::sqrt(n as f64 / core::f64::consts::PI)
}

/// Table radius that [`approx_odometer`] reads from.
pub fn table_radius_for(n: u64, params: &ApproxParams) -> u32 {
    let r = disk_radius(n) + params.cutoff_pad;
    libm::ceil(r.min(params.crossover)).max(1.0) as u32
}

/// The real-valued approximation `w(z) = |z|² + r²(2 ln r − 1 + πκ − π a(z))`
/// before rounding and truncation to the disk, with `a` replaced by its
/// expansion for `|z| >= crossover` or outside the table.
pub fn approx_real(n: u64, table: &KernelTable, params: &ApproxParams, s: Site) -> f64 {
    let pi = core::f64::consts::PI;
    let r = disk_radius(n);
    let r2 = r * r;
    let z2 = s.norm2() as f64;
    let (x, y) = (i64::from(s.x), i64::from(s.y));
    if z2 < params.crossover * params.crossover && table.covers(x, y) {
        let ln_r = libm::log(r.max(f64::MIN_POSITIVE));
        z2 + r2 * (2.0 * ln_r - 1.0 + pi * kappa() - pi * table.value(x, y))
    } else {
        let (fx, fy) = s.complex();
        let re_z4 = fx * fx * fx * fx - 6.0 * fx * fx * fy * fy + fy * fy * fy * fy;
        z2 + r2 * (libm::log(r2 / z2) - 1.0 + re_z4 / (6.0 * z2 * z2 * z2))
    }
}

/// The approximate odometer `u1` for `n` chips at the origin: `⌊w(z)⌋⁺`
/// (or the nearest integer, see [`Rounding`]) on the open disk of radius
/// `r + cutoff_pad`, and zero outside it. The cutoff matters: outside the
/// disk `w` is small but positive, not negative.
pub fn approx_odometer(n: u64, table: &KernelTable, params: &ApproxParams) -> IntField {
    let cut = disk_radius(n) + params.cutoff_pad;
    let half = libm::ceil(cut) as i32 + 1;
    let mut u = IntField::new(half);
    let cut2 = cut * cut;
    for y in -half..=half {
        for x in -half..=half {
            let s = Site::new(x, y);
            if s.norm2() as f64 >= cut2 {
                continue;
            }
            let w = approx_real(n, table, params, s);
            let v = match params.rounding {
                Rounding::Floor => libm::floor(w),
                Rounding::Nearest => libm::floor(w + 0.5),
            };
            if v > 0.0 {
                let i = u.index_unchecked(s);
                u.data_mut()[i] = v as i64;
            }
        }
    }
    u
}
