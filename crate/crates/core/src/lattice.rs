//! Sites, directions and origin-centred dense fields on the square lattice.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// A point of the square lattice, identified with `x + iy` where convenient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

impl Site {
    pub const ORIGIN: Site = Site { x: 0, y: 0 };

    #[inline]
    pub const fn new(x: i32, y: i32) -> Self {
        Site { x, y }
    }

    #[inline]
    pub fn neighbor(self, dir: Direction) -> Site {
        let (dx, dy) = dir.offset();
        Site::new(self.x + dx, self.y + dy)
    }

    /// Exact squared Euclidean norm.
    #[inline]
    pub fn norm2(self) -> u64 {
        let x = i64::from(self.x);
        let y = i64::from(self.y);
        (x * x + y * y) as u64
    }

    #[inline]
    pub fn norm(self) -> f64 {
        libm::sqrt(self.norm2() as f64)
    }

    /// The point as a complex number `(re, im)`.
    #[inline]
    pub fn complex(self) -> (f64, f64) {
        (f64::from(self.x), f64::from(self.y))
    }

    /// Chebyshev distance from the origin.
    #[inline]
    pub fn max_abs(self) -> i32 {
        self.x.abs().max(self.y.abs())
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// One of the four lattice edges leaving a site.
///
/// The discriminants fix the order `N, E, S, W` (↑ → ↓ ←) used for
/// per-direction count arrays throughout the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Direction {
    N = 0,
    E = 1,
    S = 2,
    W = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    #[inline]
    pub const fn offset(self) -> (i32, i32) {
        const OFFSETS: [(i32, i32); 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];
        OFFSETS[self as usize]
    }

    #[inline]
    pub const fn opposite(self) -> Direction {
        match self {
            Direction::N => Direction::S,
            Direction::E => Direction::W,
            Direction::S => Direction::N,
            Direction::W => Direction::E,
        }
    }

    /// Quarter turn counterclockwise.
    #[inline]
    pub const fn ccw(self) -> Direction {
        match self {
            Direction::N => Direction::W,
            Direction::W => Direction::S,
            Direction::S => Direction::E,
            Direction::E => Direction::N,
        }
    }

    /// Reflection across the vertical axis (swaps east and west).
    #[inline]
    pub const fn mirror(self) -> Direction {
        match self {
            Direction::E => Direction::W,
            Direction::W => Direction::E,
            d => d,
        }
    }

    #[inline]
    pub const fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Direction {
        Direction::ALL[i & 3]
    }

    pub fn from_letter(c: char) -> Option<Direction> {
        match c.to_ascii_uppercase() {
            'N' => Some(Direction::N),
            'E' => Some(Direction::E),
            'S' => Some(Direction::S),
            'W' => Some(Direction::W),
            _ => None,
        }
    }

    pub const fn letter(self) -> char {
        match self {
            Direction::N => 'N',
            Direction::E => 'E',
            Direction::S => 'S',
            Direction::W => 'W',
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Dense storage over the square box `[-half, half]²`.
///
/// Reads outside the box return the default value. Writes outside grow the
/// box geometrically so the stored region always contains every site that
/// was ever written.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Field<T> {
    half: i32,
    side: usize,
    data: Vec<T>,
}

impl<T: Copy + Default + PartialEq> Field<T> {
    pub fn new(half: i32) -> Self {
        let half = half.max(0);
        let side = (2 * half + 1) as usize;
        Field { half, side, data: vec![T::default(); side * side] }
    }

    #[inline]
    pub fn half(&self) -> i32 {
        self.half
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn contains(&self, s: Site) -> bool {
        s.x.abs() <= self.half && s.y.abs() <= self.half
    }

    #[inline]
    pub fn index(&self, s: Site) -> Option<usize> {
        if self.contains(s) {
            Some(self.index_unchecked(s))
        } else {
            None
        }
    }

    /// Row-major index; the caller guarantees `contains(s)`.
    #[inline]
    pub fn index_unchecked(&self, s: Site) -> usize {
        debug_assert!(self.contains(s));
        (s.y + self.half) as usize * self.side + (s.x + self.half) as usize
    }

    #[inline]
    pub fn site_of(&self, idx: usize) -> Site {
        let row = (idx / self.side) as i32;
        let col = (idx % self.side) as i32;
        Site::new(col - self.half, row - self.half)
    }

    #[inline]
    pub fn get(&self, s: Site) -> T {
        match self.index(s) {
            Some(i) => self.data[i],
            None => T::default(),
        }
    }

    pub fn set(&mut self, s: Site, v: T) {
        if !self.contains(s) {
            if v == T::default() {
                return;
            }
            self.grow_to(s.max_abs());
        }
        let i = self.index_unchecked(s);
        self.data[i] = v;
    }

    pub fn update(&mut self, s: Site, f: impl FnOnce(T) -> T) {
        let v = f(self.get(s));
        self.set(s, v);
    }

    /// Grows the box to at least `[-half, half]²`, at least doubling the
    /// side when growth is needed.
    pub fn grow_to(&mut self, half: i32) {
        if half <= self.half {
            return;
        }
        let new_half = half.max(2 * self.half + 1);
        self.resize(new_half);
    }

    /// Re-lays the data on `[-half, half]²` exactly (may shrink, dropping
    /// values outside the new box).
    pub fn resize(&mut self, half: i32) {
        let mut next = Field::new(half);
        let h = self.half.min(half);
        for y in -h..=h {
            let src = self.index_unchecked(Site::new(-h, y));
            let dst = next.index_unchecked(Site::new(-h, y));
            let len = (2 * h + 1) as usize;
            next.data[dst..dst + len].copy_from_slice(&self.data[src..src + len]);
        }
        *self = next;
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// All stored sites in row-major order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.data.len()).map(move |i| self.site_of(i))
    }

    /// Nonzero entries in row-major order.
    pub fn support(&self) -> impl Iterator<Item = (Site, T)> + '_ {
        let zero = T::default();
        self.data
            .iter()
            .enumerate()
            .filter(move |(_, v)| **v != zero)
            .map(move |(i, v)| (self.site_of(i), *v))
    }

    pub fn from_support(half: i32, entries: impl IntoIterator<Item = (Site, T)>) -> Self {
        let mut f = Field::new(half);
        for (s, v) in entries {
            f.set(s, v);
        }
        f
    }

    /// Smallest Chebyshev radius containing every nonzero entry, or `None`
    /// when the field is identically zero.
    pub fn support_radius(&self) -> Option<i32> {
        self.support().map(|(s, _)| s.max_abs()).max()
    }

    pub fn map<U: Copy + Default + PartialEq>(&self, f: impl Fn(T) -> U) -> Field<U> {
        Field { half: self.half, side: self.side, data: self.data.iter().map(|v| f(*v)).collect() }
    }
}

/// Integer-valued field (chip configurations, odometers).
pub type IntField = Field<i64>;

/// Two fields agree as functions on the lattice (independent of box size).
pub fn same_function<T: Copy + Default + PartialEq>(a: &Field<T>, b: &Field<T>) -> bool {
    let h = a.half().max(b.half());
    for y in -h..=h {
        for x in -h..=h {
            let s = Site::new(x, y);
            if a.get(s) != b.get(s) {
                return false;
            }
        }
    }
    true
}
