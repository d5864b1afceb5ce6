//! Rotor stacks.
//!
//! A stack at site `x` is the sequence `ρ_0(x), ρ_1(x), ...` of directions.
//! `ρ_0` is the initial top; the `k`-th chip emitted from `x` travels along
//! `ρ_k(x)`, and after `u` firings the top of the stack is `ρ_u(x)`.
//!
//! `R(e, n)` counts the occurrences of `e` among `ρ_1, ..., ρ_n`.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::lattice::{Direction, IntField, Site};
use crate::prf::{scale, Key, Prf};

/// Source of rotor stacks on the square lattice.
///
/// Implementations must answer reproducibly: repeated queries for the same
/// `(site, k)` return the same direction regardless of query order, and
/// `counts(site, n)` agrees with counting `rotor(site, k)` for `k = 1..=n`.
pub trait RotorStacks {
    /// `ρ_k(site)`.
    fn rotor(&mut self, site: Site, k: u64) -> Direction;

    /// `[R(N, n), R(E, n), R(S, n), R(W, n)]` at `site`.
    fn counts(&mut self, site: Site, n: u64) -> [u64; 4];

    fn count(&mut self, site: Site, dir: Direction, n: u64) -> u64 {
        self.counts(site, n)[dir.index()]
    }

    /// Hook run once with the approximate odometer before a fast solve.
    /// Random models whose law is tied to the approximation (IDLA frontiers)
    /// use it; an oracle driven by the same instance afterwards sees the
    /// same stacks.
    fn prepare(&mut self, _approx: &IntField) {}
}

impl<S: RotorStacks + ?Sized> RotorStacks for &mut S {
    fn rotor(&mut self, site: Site, k: u64) -> Direction {
        (**self).rotor(site, k)
    }
    fn counts(&mut self, site: Site, n: u64) -> [u64; 4] {
        (**self).counts(site, n)
    }
    fn prepare(&mut self, approx: &IntField) {
        (**self).prepare(approx)
    }
}

/// Counts by direct enumeration of `ρ_1..ρ_n`.
pub fn brute_force_counts<S: RotorStacks + ?Sized>(stacks: &mut S, site: Site, n: u64) -> [u64; 4] {
    let mut c = [0u64; 4];
    for k in 1..=n {
        c[stacks.rotor(site, k).index()] += 1;
    }
    c
}

/// Error parsing a rotor sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceError;

impl fmt::Display for SequenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("rotor sequence must be four distinct letters from N, E, S, W")
    }
}

/// A period-4 rotor sequence, written `ρ_0 ρ_1 ρ_2 ρ_3` (e.g. `WNES`: the
/// initial top points west, the first chip goes north, then east, south,
/// west).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "alloc::string::String", into = "alloc::string::String")]
pub struct RotorSequence(pub [Direction; 4]);

impl RotorSequence {
    pub const WNES: RotorSequence = RotorSequence([Direction::W, Direction::N, Direction::E, Direction::S]);
    pub const WNSE: RotorSequence = RotorSequence([Direction::W, Direction::N, Direction::S, Direction::E]);
    pub const WENS: RotorSequence = RotorSequence([Direction::W, Direction::E, Direction::N, Direction::S]);
    /// Classic counterclockwise rotor-router: every firing turns the rotor a
    /// quarter turn counterclockwise, starting from all rotors pointing north
    /// (the first chip from each site goes west).
    pub const CLASSIC: RotorSequence = RotorSequence([Direction::N, Direction::W, Direction::S, Direction::E]);

    #[inline]
    pub fn at(&self, k: u64) -> Direction {
        self.0[(k & 3) as usize]
    }

    /// Applies a lattice symmetry to every entry.
    pub fn map(&self, f: impl Fn(Direction) -> Direction) -> RotorSequence {
        RotorSequence([f(self.0[0]), f(self.0[1]), f(self.0[2]), f(self.0[3])])
    }

    /// The orbit of this sequence under the eight symmetries of the square.
    pub fn dihedral_variants(&self) -> [RotorSequence; 8] {
        let mut out = [*self; 8];
        let mut cur = *self;
        for i in 0..4 {
            out[i] = cur;
            out[i + 4] = cur.map(Direction::mirror);
            cur = cur.map(Direction::ccw);
        }
        out
    }

    /// Centre of mass of the aggregate that the rotor convention biases
    /// towards; used as the recentring point for radius statistics.
    pub fn putative_center(&self) -> (f64, f64) {
        let (mut cx, mut cy) = (0.0, 0.0);
        // Over one period each direction is used once; sites end uniformly
        // spread over the four rotor states, and a site in state `j` has sent
        // one extra chip along each of ρ_1..ρ_j.
        for j in 1..4 {
            for d in &self.0[1..=j] {
                let (dx, dy) = d.offset();
                cx += f64::from(dx) / 4.0;
                cy += f64::from(dy) / 4.0;
            }
        }
        (cx, cy)
    }
}

impl fmt::Display for RotorSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.0 {
            write!(f, "{}", d.letter())?;
        }
        Ok(())
    }
}

impl FromStr for RotorSequence {
    type Err = SequenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut dirs = [Direction::N; 4];
        let mut seen = [false; 4];
        let mut n = 0;
        for c in s.chars() {
            if n == 4 {
                return Err(SequenceError);
            }
            let d = Direction::from_letter(c).ok_or(SequenceError)?;
            if seen[d.index()] {
                return Err(SequenceError);
            }
            seen[d.index()] = true;
            dirs[n] = d;
            n += 1;
        }
        if n != 4 {
            return Err(SequenceError);
        }
        Ok(RotorSequence(dirs))
    }
}

impl TryFrom<alloc::string::String> for RotorSequence {
    type Error = SequenceError;
    fn try_from(s: alloc::string::String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<RotorSequence> for alloc::string::String {
    fn from(s: RotorSequence) -> Self {
        alloc::format!("{s}")
    }
}

/// Rotor-router stacks: every site cycles through the same four directions.
#[derive(Clone, Debug)]
pub struct PeriodicStack {
    seq: RotorSequence,
    /// Least positive `j` with `ρ_j = e`, per direction.
    first: [u64; 4],
}

impl PeriodicStack {
    pub fn new(seq: RotorSequence) -> Self {
        let mut first = [0u64; 4];
        for j in 1..=4u64 {
            first[seq.at(j).index()] = j;
        }
        PeriodicStack { seq, first }
    }

    pub fn sequence(&self) -> RotorSequence {
        self.seq
    }
}

impl RotorStacks for PeriodicStack {
    #[inline]
    fn rotor(&mut self, _site: Site, k: u64) -> Direction {
        self.seq.at(k)
    }

    #[inline]
    fn counts(&mut self, _site: Site, n: u64) -> [u64; 4] {
        self.first.map(|j| (n + 4 - j) / 4)
    }
}

/// The 24 orderings of `N, E, S, W`, decoded from a lexicographic rank.
pub fn permutation(rank: u64) -> [Direction; 4] {
    debug_assert!(rank < 24);
    let mut pool = [Direction::N, Direction::E, Direction::S, Direction::W];
    let mut len = 4;
    let mut rank = rank as usize;
    let mut out = [Direction::N; 4];
    let fact = [6usize, 2, 1, 1];
    for (i, slot) in out.iter_mut().enumerate() {
        let pick = rank / fact[i];
        rank %= fact[i];
        *slot = pool[pick];
        pool.copy_within(pick + 1..len, pick);
        len -= 1;
    }
    out
}

/// Low-discrepancy random stacks: `ρ_{4b+1..4b+4}` is a uniformly random
/// permutation of the four directions, independently for every block `b`.
///
/// Blocks start at index 1 so that `|R(e, n) - R(e', n)| <= 1` for every
/// `n`. The initial top `ρ_0` repeats `ρ_4`.
#[derive(Clone, Debug)]
pub struct LowDiscrepancyStack {
    prf: Prf,
}

impl LowDiscrepancyStack {
    pub fn new(key: Key, run: u32) -> Self {
        LowDiscrepancyStack { prf: Prf::new(key, run) }
    }

    #[inline]
    pub fn block(&self, site: Site, b: u64) -> [Direction; 4] {
        permutation(scale(self.prf.high64(site, b), 24))
    }
}

impl RotorStacks for LowDiscrepancyStack {
    #[inline]
    fn rotor(&mut self, site: Site, k: u64) -> Direction {
        let k = if k == 0 { 4 } else { k };
        self.block(site, (k - 1) / 4)[((k - 1) % 4) as usize]
    }

    fn counts(&mut self, site: Site, n: u64) -> [u64; 4] {
        let full = n / 4;
        let rem = (n % 4) as usize;
        let mut c = [full; 4];
        if rem > 0 {
            for d in &self.block(site, full)[..rem] {
                c[d.index()] += 1;
            }
        }
        c
    }
}

/// Direction for `U` in `[0,1)` (given by its leading 64 bits) under the
/// uniform law: ↑ on `[0,¼)`, → on `[¼,½)`, ↓ on `[½,¾)`, ← on `[¾,1)`.
#[inline]
pub fn quartile(high: u64) -> Direction {
    Direction::from_index((high >> 62) as usize)
}

/// Direction drawn from an urn holding `counts[e]` balls of colour `e`
/// (`Σ counts = k > 0`): the subintervals of `[0,1)` with lengths
/// `counts[e]/k`, in the order ↑ → ↓ ←, are tested against `U`.
#[inline]
pub fn urn_draw(high: u64, counts: &[u64; 4]) -> Direction {
    let k: u64 = counts.iter().sum();
    debug_assert!(k > 0);
    let j = scale(high, k);
    let mut acc = 0;
    for (i, c) in counts.iter().enumerate() {
        acc += c;
        if j < acc {
            return Direction::from_index(i);
        }
    }
    unreachable!("urn index {j} beyond {k}")
}

/// Per-site IDLA stack state around the pre-aggregated frontier `f`.
#[derive(Clone, Debug, Default)]
pub struct Frontier {
    /// Index up to which the four counts were sampled as binomials.
    pub f: u64,
    /// `R(·, f)`.
    pub split: [u64; 4],
    /// Lowest index whose counts are currently known; rotors
    /// `ρ_{low+1}..ρ_f` have been drawn.
    pub low: u64,
    /// `R(·, low)`.
    pub remaining: [u64; 4],
    /// `drawn[i] = ρ_{f-i}`.
    drawn: Vec<Direction>,
}

impl Frontier {
    pub fn drawn_len(&self) -> usize {
        (self.f - self.low) as usize
    }
}

/// IDLA stacks: `ρ_k(x)` i.i.d. uniform over the four directions.
///
/// Rotors at index `k > f(x)` come straight from the PRF. The first `f(x)`
/// rotors are never generated one by one up front: their four totals are
/// sampled as nested binomials, and individual rotors are revealed lazily
/// in decreasing index order by drawing from the urn of remaining counts.
/// The realised stack is a pure function of `(key, run, f(x))`.
#[derive(Clone, Debug)]
pub struct IdlaStack {
    prf: Prf,
    lambda: f64,
    half: i32,
    side: usize,
    frontiers: Vec<Frontier>,
    /// `[f, low]` per slot.
    bounds: Vec<[u64; 2]>,
    windows: Vec<Window>,
}

const WINDOW: u64 = 32;

/// Recently used rotors `ρ_base..ρ_{base+31}`, packed two bits each, with a
/// validity mask.
#[derive(Clone, Copy, Debug, Default)]
struct Window {
    base: u32,
    valid: u32,
    packed: u64,
}

impl Window {
    #[inline]
    fn get(&self, k: u64) -> Option<Direction> {
        let j = k.wrapping_sub(u64::from(self.base));
        if j < WINDOW && self.valid >> j & 1 == 1 {
            Some(Direction::from_index((self.packed >> (2 * j) & 3) as usize))
        } else {
            None
        }
    }

    #[inline]
    fn store(&mut self, k: u64, d: Direction) {
        let mut j = k.wrapping_sub(u64::from(self.base));
        if j >= WINDOW {
            let Ok(base) = u32::try_from(k.saturating_sub(WINDOW / 2)) else {
                return;
            };
            self.base = base;
            self.valid = 0;
            j = k - u64::from(base);
        }
        self.valid |= 1 << j;
        self.packed = self.packed & !(3 << (2 * j)) | (d.index() as u64) << (2 * j);
    }
}

impl IdlaStack {
    pub fn new(key: Key, run: u32, lambda: f64) -> Self {
        assert!(lambda >= 0.0 && lambda.is_finite(), "lambda must be a nonnegative real");
        IdlaStack { prf: Prf::new(key, run), lambda, half: -1, side: 0, frontiers: Vec::new(), bounds: Vec::new(), windows: Vec::new() }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn prf(&self) -> &Prf {
        &self.prf
    }

    /// Frontier index for a site whose approximate odometer is `u1x`:
    /// `max(0, u1x - ceil(λ·sqrt(u1x)))`.
    pub fn frontier_index(&self, u1x: u64) -> u64 {
        let cut = libm::ceil(self.lambda * libm::sqrt(u1x as f64)) as u64;
        u1x.saturating_sub(cut)
    }

    /// Allocates frontier storage for the box `[-half, half]²`, discarding
    /// previous state.
    pub fn reset(&mut self, half: i32) {
        self.half = half;
        self.side = (2 * half + 1) as usize;
        self.frontiers.clear();
        self.frontiers.resize_with(self.side * self.side, Frontier::default);
        self.bounds.clear();
        self.bounds.resize(self.side * self.side, [0; 2]);
        self.windows.clear();
        self.windows.resize(self.side * self.side, Window::default());
    }

    #[inline]
    fn slot(&self, site: Site) -> Option<usize> {
        if site.x.abs() <= self.half && site.y.abs() <= self.half {
            Some((site.y + self.half) as usize * self.side + (site.x + self.half) as usize)
        } else {
            None
        }
    }

    pub fn frontier(&self, site: Site) -> Option<&Frontier> {
        self.slot(site).map(|i| &self.frontiers[i])
    }

    /// Samples `R(·, f)` for `site` from its binomial stream and installs it
    /// as the site's frontier.
    pub fn init_frontier(&mut self, site: Site, u1x: u64) {
        let f = self.frontier_index(u1x);
        let split = self.binomial_split(site, f);
        if self.slot(site).is_none() {
            let half = site.max_abs().max(2 * self.half + 1);
            self.grow(half);
        }
        let i = self.slot(site).unwrap();
        self.bounds[i] = [f, f];
        self.windows[i] = Window::default();
        self.frontiers[i] = Frontier { f, split, low: f, remaining: split, drawn: Vec::new() };
    }

    fn grow(&mut self, half: i32) {
        let old = core::mem::take(&mut self.frontiers);
        let old_half = self.half;
        let old_side = self.side;
        self.reset(half);
        for (i, fr) in old.into_iter().enumerate() {
            let s = Site::new((i % old_side) as i32 - old_half, (i / old_side) as i32 - old_half);
            let j = self.slot(s).unwrap();
            self.bounds[j] = [fr.f, fr.low];
            self.frontiers[j] = fr;
        }
    }

    /// Nested binomial split of `f` draws into the four directions:
    /// `B ~ Bin(f, 1/4)`, `B' ~ Bin(f-B, 1/3)`, `B'' ~ Bin(f-B-B', 1/2)`.
    pub fn binomial_split(&self, site: Site, f: u64) -> [u64; 4] {
        if f == 0 {
            return [0; 4];
        }
        let mut rng = self.prf.stream(site, 0);
        let mut draw = |n: u64, p: f64| -> u64 {
            if n == 0 {
                0
            } else {
                Binomial::new(n, p).expect("valid binomial parameters").sample(&mut rng)
            }
        };
        let b0 = draw(f, 0.25);
        let b1 = draw(f - b0, 1.0 / 3.0);
        let b2 = draw(f - b0 - b1, 0.5);
        [b0, b1, b2, f - b0 - b1 - b2]
    }

    /// Reveals `ρ_k(site)` for `k` equal to the current `low` index,
    /// lowering the frontier state by one.
    ///
    /// # Panics
    /// If `k` is not the next index in decreasing order.
    pub fn draw_below_frontier(&mut self, site: Site, k: u64) -> Direction {
        let i = self.slot(site).expect("site has no frontier");
        let high = self.prf.high64(site, k);
        let fr = &mut self.frontiers[i];
        assert!(k >= 1 && k == fr.low, "rotor {k} requested out of decreasing order (next is {})", fr.low);
        let d = urn_draw(high, &fr.remaining);
        fr.remaining[d.index()] -= 1;
        fr.low -= 1;
        fr.drawn.push(d);
        self.bounds[i][1] = fr.low;
        d
    }

    fn lower_to(&mut self, site: Site, k: u64) {
        let i = self.slot(site).unwrap();
        while self.frontiers[i].low >= k {
            let low = self.frontiers[i].low;
            self.draw_below_frontier(site, low);
        }
    }
}

impl RotorStacks for IdlaStack {
    #[inline]
    fn rotor(&mut self, site: Site, k: u64) -> Direction {
        if k > 0 {
            if let Some(i) = self.slot(site) {
                if let Some(d) = self.windows[i].get(k) {
                    return d;
                }
                let [f, low] = self.bounds[i];
                let d = if k <= f {
                    if k <= low {
                        self.lower_to(site, k);
                    }
                    self.frontiers[i].drawn[(f - k) as usize]
                } else {
                    quartile(self.prf.high64(site, k))
                };
                self.windows[i].store(k, d);
                return d;
            }
        }
        quartile(self.prf.high64(site, k))
    }

    fn counts(&mut self, site: Site, n: u64) -> [u64; 4] {
        let Some(i) = self.slot(site) else {
            return brute_force_counts(self, site, n);
        };
        let f = self.frontiers[i].f;
        if n >= f {
            let mut c = self.frontiers[i].split;
            for k in f + 1..=n {
                c[quartile(self.prf.high64(site, k)).index()] += 1;
            }
            c
        } else {
            if self.frontiers[i].low > n {
                self.lower_to(site, n + 1);
            }
            let fr = &self.frontiers[i];
            let mut c = fr.remaining;
            for k in fr.low + 1..=n {
                c[fr.drawn[(f - k) as usize].index()] += 1;
            }
            c
        }
    }

    fn prepare(&mut self, approx: &IntField) {
        self.reset(approx.half());
        for (site, v) in approx.support() {
            if v > 0 {
                self.init_frontier(site, v as u64);
            }
        }
    }
}

/// Default frontier offset `λ` for an IDLA run of `n` chips: `0` up to
/// `2^22`, `2` below `2^24`, `5` beyond.
pub fn default_lambda(n: u64) -> f64 {
    if n <= 1 << 22 {
        0.0
    } else if n < 1 << 24 {
        2.0
    } else {
        5.0
    }
}

/// Which stack family a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rotor,
    Idla,
    Lds,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Rotor => "rotor",
            ModelKind::Idla => "idla",
            ModelKind::Lds => "lds",
        })
    }
}

/// Any of the three stack families behind one type.
#[derive(Clone, Debug)]
pub enum StackModel {
    Periodic(PeriodicStack),
    Idla(IdlaStack),
    LowDiscrepancy(LowDiscrepancyStack),
}

impl StackModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            StackModel::Periodic(_) => ModelKind::Rotor,
            StackModel::Idla(_) => ModelKind::Idla,
            StackModel::LowDiscrepancy(_) => ModelKind::Lds,
        }
    }
}

impl RotorStacks for StackModel {
    #[inline]
    fn rotor(&mut self, site: Site, k: u64) -> Direction {
        match self {
            StackModel::Periodic(s) => s.rotor(site, k),
            StackModel::Idla(s) => s.rotor(site, k),
            StackModel::LowDiscrepancy(s) => s.rotor(site, k),
        }
    }

    fn counts(&mut self, site: Site, n: u64) -> [u64; 4] {
        match self {
            StackModel::Periodic(s) => s.counts(site, n),
            StackModel::Idla(s) => s.counts(site, n),
            StackModel::LowDiscrepancy(s) => s.counts(site, n),
        }
    }

    fn prepare(&mut self, approx: &IntField) {
        match self {
            StackModel::Periodic(s) => s.prepare(approx),
            StackModel::Idla(s) => s.prepare(approx),
            StackModel::LowDiscrepancy(s) => s.prepare(approx),
        }
    }
}

/// Stacks shifted by an odometer: `(E^u ρ)_k(x) = ρ_{u(x)+k}(x)`.
pub struct Shifted<'a, S: ?Sized> {
    pub base: &'a mut S,
    pub shift: &'a IntField,
}

impl<S: RotorStacks + ?Sized> RotorStacks for Shifted<'_, S> {
    fn rotor(&mut self, site: Site, k: u64) -> Direction {
        let s = self.shift.get(site) as u64;
        self.base.rotor(site, s + k)
    }

    fn counts(&mut self, site: Site, n: u64) -> [u64; 4] {
        let s = self.shift.get(site) as u64;
        let hi = self.base.counts(site, s + n);
        let lo = self.base.counts(site, s);
        [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2], hi[3] - lo[3]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Field;
    use proptest::prelude::*;

    fn key() -> Key {
        Key([0x5a; 32])
    }

    #[test]
    fn periodic_rotor_and_counts() {
        let mut s = PeriodicStack::new(RotorSequence::WNES);
        let o = Site::ORIGIN;
        assert_eq!(s.rotor(o, 0), Direction::W);
        assert_eq!(s.rotor(o, 1), Direction::N);
        assert_eq!(s.rotor(o, 5), Direction::N);
        // prefix N,E,S,W,N
        assert_eq!(s.count(o, Direction::N, 5), 2);
        assert_eq!(s.counts(o, 0), [0; 4]);
    }

    #[test]
    fn periodic_closed_form_matches_enumeration() {
        let all = RotorSequence::CLASSIC.dihedral_variants();
        for seq in all.iter().chain([RotorSequence::WNES, RotorSequence::WNSE, RotorSequence::WENS].iter()) {
            let mut s = PeriodicStack::new(*seq);
            let mut running = [0u64; 4];
            for n in 1..=10_000u64 {
                running[s.rotor(Site::ORIGIN, n).index()] += 1;
                assert_eq!(s.counts(Site::ORIGIN, n), running, "{seq} n={n}");
            }
        }
    }

    #[test]
    fn sequence_parsing() {
        assert_eq!("WNES".parse::<RotorSequence>().unwrap(), RotorSequence::WNES);
        assert_eq!("wnes".parse::<RotorSequence>().unwrap(), RotorSequence::WNES);
        assert!("WNEE".parse::<RotorSequence>().is_err());
        assert!("WNE".parse::<RotorSequence>().is_err());
        assert!("WNESN".parse::<RotorSequence>().is_err());
        assert_eq!(alloc::format!("{}", RotorSequence::WENS), "WENS");
    }

    #[test]
    fn dihedral_orbit_has_eight_members() {
        let v = RotorSequence::CLASSIC.dihedral_variants();
        for (i, a) in v.iter().enumerate() {
            for b in &v[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn putative_centers() {
        assert_eq!(RotorSequence::WNES.putative_center(), (0.5, 0.5));
        assert_eq!(RotorSequence::WENS.putative_center(), (0.75, 0.25));
        assert_eq!(RotorSequence::WNSE.putative_center(), (0.25, 0.25));
    }

    #[test]
    fn permutations_are_distinct_orderings() {
        let mut seen = alloc::vec::Vec::new();
        for r in 0..24 {
            let p = permutation(r);
            let mut m = [false; 4];
            for d in p {
                m[d.index()] = true;
            }
            assert!(m.iter().all(|x| *x));
            assert!(!seen.contains(&p));
            seen.push(p);
        }
        assert_eq!(permutation(0), [Direction::N, Direction::E, Direction::S, Direction::W]);
        assert_eq!(permutation(23), [Direction::W, Direction::S, Direction::E, Direction::N]);
    }

    #[test]
    fn lds_blocks_are_permutations_and_balanced() {
        let mut s = LowDiscrepancyStack::new(key(), 3);
        for site in [Site::new(0, 0), Site::new(4, -7), Site::new(-100, 3)] {
            let mut running = [0u64; 4];
            for n in 1..=10_000u64 {
                running[s.rotor(site, n).index()] += 1;
                assert_eq!(s.counts(site, n), running);
                let max = *running.iter().max().unwrap();
                let min = *running.iter().min().unwrap();
                assert!(max - min <= 1);
            }
            for b in 0..50u64 {
                let mut m = [0; 4];
                for k in 4 * b + 1..=4 * b + 4 {
                    m[s.rotor(site, k).index()] += 1;
                }
                assert_eq!(m, [1; 4]);
            }
            assert_eq!(s.rotor(site, 0), s.rotor(site, 4));
        }
    }

    #[test]
    fn quartile_map() {
        let at = |u: f64| quartile((u * 18446744073709551616.0) as u64);
        assert_eq!(at(0.0), Direction::N);
        assert_eq!(at(0.30), Direction::E);
        assert_eq!(at(0.5), Direction::S);
        assert_eq!(at(0.999), Direction::W);
    }

    #[test]
    fn urn_single_ball_and_last_interval() {
        for h in [0u64, 1 << 63, u64::MAX] {
            assert_eq!(urn_draw(h, &[1, 0, 0, 0]), Direction::N);
        }
        let u = (0.999 * 18446744073709551616.0) as u64;
        assert_eq!(urn_draw(u, &[5, 5, 5, 5]), Direction::W);
        assert_eq!(urn_draw(0, &[0, 0, 3, 1]), Direction::S);
    }

    #[test]
    fn frontier_split_sums_and_replays() {
        let mut s = IdlaStack::new(key(), 1, 0.0);
        s.reset(8);
        let site = Site::new(2, -3);
        s.init_frontier(site, 777);
        let fr = s.frontier(site).unwrap().clone();
        assert_eq!(fr.f, 777);
        assert_eq!(fr.split.iter().sum::<u64>(), 777);
        // Exhaustive replay: draw every rotor down to 1 and tally.
        let mut tally = [0u64; 4];
        for k in (1..=777).rev() {
            tally[s.draw_below_frontier(site, k).index()] += 1;
            let fr = s.frontier(site).unwrap();
            assert_eq!(fr.remaining.iter().sum::<u64>(), k - 1);
        }
        assert_eq!(tally, fr.split);
        // The brute-force count over the realised stack equals the split.
        assert_eq!(brute_force_counts(&mut s, site, 777), fr.split);
    }

    #[test]
    fn frontier_zero_is_empty() {
        let mut s = IdlaStack::new(key(), 1, 0.0);
        s.reset(2);
        s.init_frontier(Site::ORIGIN, 0);
        assert_eq!(s.frontier(Site::ORIGIN).unwrap().split, [0; 4]);
    }

    #[test]
    fn lambda_sets_frontier_below_approximation() {
        let s = IdlaStack::new(key(), 1, 2.0);
        assert_eq!(s.frontier_index(100), 80);
        assert_eq!(s.frontier_index(3), 0);
        let s0 = IdlaStack::new(key(), 1, 0.0);
        assert_eq!(s0.frontier_index(12345), 12345);
    }

    #[test]
    #[should_panic(expected = "out of decreasing order")]
    fn drawing_out_of_order_panics() {
        let mut s = IdlaStack::new(key(), 1, 0.0);
        s.reset(2);
        s.init_frontier(Site::ORIGIN, 10);
        s.draw_below_frontier(Site::ORIGIN, 5);
    }

    #[test]
    fn idla_rotor_is_order_independent() {
        let mut approx: IntField = Field::new(3);
        approx.set(Site::new(0, 0), 300);
        approx.set(Site::new(1, 0), 120);
        let mut a = IdlaStack::new(key(), 9, 0.0);
        let mut b = IdlaStack::new(key(), 9, 0.0);
        a.prepare(&approx);
        b.prepare(&approx);
        let site = Site::ORIGIN;
        let up: alloc::vec::Vec<_> = (0..400).map(|k| a.rotor(site, k)).collect();
        let down: alloc::vec::Vec<_> = (0..400).rev().map(|k| b.rotor(site, k)).collect();
        let down: alloc::vec::Vec<_> = down.into_iter().rev().collect();
        assert_eq!(up, down);
    }

    #[test]
    fn split_marginal_is_binomial_quarter() {
        // Mean and variance of R(N, f) over many sites against Bin(f, 1/4).
        let s = IdlaStack::new(key(), 2, 0.0);
        let f = 400u64;
        let n = 20_000;
        let (mut m, mut m2) = (0.0, 0.0);
        let mut all = [0.0f64; 4];
        for i in 0..n {
            let site = Site::new(i % 200, i / 200);
            let split = s.binomial_split(site, f);
            let b = split[0] as f64;
            m += b;
            m2 += b * b;
            for d in 0..4 {
                all[d] += split[d] as f64;
            }
        }
        let mean = m / n as f64;
        let var = m2 / n as f64 - mean * mean;
        // Bin(400, 1/4): mean 100, variance 75; tolerances are > 5 standard errors.
        assert!((mean - 100.0).abs() < 5.0 * (75.0f64 / n as f64).sqrt(), "mean {mean}");
        assert!((var - 75.0).abs() < 5.0 * 75.0 * (2.0f64 / n as f64).sqrt(), "var {var}");
        for d in 0..4 {
            assert!((all[d] / n as f64 - 100.0).abs() < 0.4, "direction {d}");
        }
    }

    #[test]
    fn shifted_stacks_offset_indices() {
        let mut base = PeriodicStack::new(RotorSequence::WNES);
        let mut shift: IntField = Field::new(1);
        shift.set(Site::ORIGIN, 2);
        let mut sh = Shifted { base: &mut base, shift: &shift };
        assert_eq!(sh.rotor(Site::ORIGIN, 0), Direction::E);
        assert_eq!(sh.rotor(Site::ORIGIN, 1), Direction::S);
        assert_eq!(sh.counts(Site::ORIGIN, 4), [1; 4]);
        assert_eq!(sh.rotor(Site::new(1, 1), 1), Direction::N);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn idla_aggregate_counts_match_enumeration(
            run in 1u32..1000,
            u1 in 0u64..600,
            lambda in 0.0f64..4.0,
            queries in proptest::collection::vec(0u64..800, 1..12),
        ) {
            let mut s = IdlaStack::new(key(), run, lambda);
            let mut approx: IntField = Field::new(1);
            approx.set(Site::ORIGIN, u1 as i64);
            s.prepare(&approx);
            let mut reference = s.clone();
            let full: alloc::vec::Vec<Direction> = (0..=800).map(|k| reference.rotor(Site::ORIGIN, k)).collect();
            for n in queries {
                let mut c = [0u64; 4];
                for d in &full[1..=n as usize] {
                    c[d.index()] += 1;
                }
                prop_assert_eq!(s.counts(Site::ORIGIN, n), c);
                prop_assert_eq!(c.iter().sum::<u64>(), n);
            }
        }
    }
}
