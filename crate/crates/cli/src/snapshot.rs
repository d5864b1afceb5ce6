//! Binary cluster snapshots.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  "ODOSNAP\0"                  8 bytes
//! version u32 = 1
//! x0, y0  i32                          lower-left corner of the box
//! width, height u32
//! sigma   i32 × width·height           row-major, rows from y0 upward
//! odo     u32 × width·height
//! tops    u8  × width·height           direction index 0..3 (N E S W), 255 if unfired
//! ```

use std::io::{Read, Write};

use odometer::engine::{ChipConfig, Odometer, Outcome};
use odometer::{Direction, Site};
use thiserror::Error;

pub const MAGIC: [u8; 8] = *b"ODOSNAP\0";
pub const VERSION: u32 = 1;
pub const NO_TOP: u8 = 255;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a cluster snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    BadVersion(u32),
    #[error("snapshot truncated or oversized")]
    Truncated,
    #[error("bad top-rotor byte {0}")]
    BadTop(u8),
    #[error("value at {0} does not fit the 32-bit snapshot fields")]
    Overflow(Site),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub x0: i32,
    pub y0: i32,
    pub width: u32,
    pub height: u32,
    pub sigma: Vec<i32>,
    pub odo: Vec<u32>,
    pub tops: Vec<u8>,
}

impl Snapshot {
    /// Captures the tight box around all sites with chips, holes or
    /// firings; `top` is consulted only where the odometer is positive.
    pub fn capture(
        chips: &ChipConfig,
        odo: &Odometer,
        mut top: impl FnMut(Site) -> Direction,
    ) -> Result<Self, SnapshotError> {
        let live = chips.support().map(|(s, _)| s).chain(odo.support().map(|(s, _)| s));
        let (mut lo, mut hi) = ((0, 0), (0, 0));
        for (i, s) in live.enumerate() {
            if i == 0 {
                lo = (s.x, s.y);
                hi = lo;
            }
            lo = (lo.0.min(s.x), lo.1.min(s.y));
            hi = (hi.0.max(s.x), hi.1.max(s.y));
        }
        let width = (hi.0 - lo.0 + 1) as u32;
        let height = (hi.1 - lo.1 + 1) as u32;
        let len = width as usize * height as usize;
        let mut snap = Snapshot {
            x0: lo.0,
            y0: lo.1,
            width,
            height,
            sigma: Vec::with_capacity(len),
            odo: Vec::with_capacity(len),
            tops: Vec::with_capacity(len),
        };
        for y in lo.1..=hi.1 {
            for x in lo.0..=hi.0 {
                let s = Site::new(x, y);
                let c = i32::try_from(chips.get(s)).map_err(|_| SnapshotError::Overflow(s))?;
                let u = u32::try_from(odo.get(s)).map_err(|_| SnapshotError::Overflow(s))?;
                snap.sigma.push(c);
                snap.odo.push(u);
                snap.tops.push(if u > 0 { top(s) as u8 } else { NO_TOP });
            }
        }
        Ok(snap)
    }

    pub fn from_outcome(o: &Outcome) -> Result<Self, SnapshotError> {
        Self::capture(&o.chips, &o.odometer, |s| o.rotors.get(s).expect("top rotor inside the solved box"))
    }

    #[inline]
    fn index(&self, s: Site) -> Option<usize> {
        let dx = i64::from(s.x) - i64::from(self.x0);
        let dy = i64::from(s.y) - i64::from(self.y0);
        if (0..i64::from(self.width)).contains(&dx) && (0..i64::from(self.height)).contains(&dy) {
            Some(dy as usize * self.width as usize + dx as usize)
        } else {
            None
        }
    }

    pub fn sigma_at(&self, s: Site) -> i32 {
        self.index(s).map_or(0, |i| self.sigma[i])
    }

    pub fn odo_at(&self, s: Site) -> u32 {
        self.index(s).map_or(0, |i| self.odo[i])
    }

    pub fn top_at(&self, s: Site) -> Option<Direction> {
        self.index(s).and_then(|i| match self.tops[i] {
            NO_TOP => None,
            t => Some(Direction::from_index(usize::from(t))),
        })
    }

    /// Sites of the box, row by row from the bottom.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        let (x0, y0, w) = (self.x0, self.y0, self.width as i32);
        (0..self.height as i32).flat_map(move |dy| (0..w).map(move |dx| Site::new(x0 + dx, y0 + dy)))
    }

    pub fn chips(&self) -> i64 {
        self.sigma.iter().map(|&v| i64::from(v)).sum()
    }

    /// The odometer as an origin-centred field.
    pub fn odometer(&self) -> Odometer {
        let half = self.sites().map(Site::max_abs).max().unwrap_or(0);
        Odometer::from_support(half, self.sites().map(|s| (s, i64::from(self.odo_at(s)))).filter(|(_, v)| *v != 0))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), SnapshotError> {
        let mut buf = Vec::with_capacity(28 + 9 * self.sigma.len());
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&self.x0.to_le_bytes());
        buf.extend_from_slice(&self.y0.to_le_bytes());
        buf.extend_from_slice(&self.width.to_le_bytes());
        buf.extend_from_slice(&self.height.to_le_bytes());
        for v in &self.sigma {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.odo {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&self.tops);
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to memory");
        v
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, SnapshotError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut cur = Cursor(bytes);
        if cur.take(8)? != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(SnapshotError::BadVersion(version));
        }
        let x0 = cur.u32()? as i32;
        let y0 = cur.u32()? as i32;
        let width = cur.u32()?;
        let height = cur.u32()?;
        let len = (width as usize).checked_mul(height as usize).ok_or(SnapshotError::Truncated)?;
        if len.checked_mul(9) != Some(cur.0.len()) {
            return Err(SnapshotError::Truncated);
        }
        let sigma = (0..len).map(|_| cur.u32().map(|v| v as i32)).collect::<Result<_, _>>()?;
        let odo = (0..len).map(|_| cur.u32()).collect::<Result<_, _>>()?;
        let tops = cur.take(len)?.to_vec();
        if let Some(&t) = tops.iter().find(|&&t| t > 3 && t != NO_TOP) {
            return Err(SnapshotError::BadTop(t));
        }
        Ok(Snapshot { x0, y0, width, height, sigma, odo, tops })
    }
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        if self.0.len() < n {
            return Err(SnapshotError::Truncated);
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
}
