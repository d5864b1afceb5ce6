//! Picture output as binary PPM (P6).

use std::io::Write;

use odometer::engine::Odometer;
use odometer::{Direction, Site};
use serde::{Deserialize, Serialize};

use crate::snapshot::Snapshot;

const WHITE: [u8; 3] = [255, 255, 255];
const MARGIN: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    /// Top rotor of every site that fired.
    Rotors,
    /// Final chip counts.
    Chips,
    /// Sign of `u1 - u`.
    #[value(name = "odo-diff")]
    #[serde(rename = "odo-diff")]
    OdoDiff,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB, top row first.
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn write_ppm(&self, w: &mut impl Write) -> std::io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        let flat: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        w.write_all(&flat)
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_ppm(&mut v).expect("writing to memory");
        v
    }
}

fn rotor_color(d: Direction) -> [u8; 3] {
    match d {
        Direction::W => [255, 255, 0],
        Direction::S => [255, 0, 0],
        Direction::E => [0, 0, 255],
        Direction::N => [0, 160, 0],
    }
}

fn chip_color(c: i32) -> [u8; 3] {
    match c {
        -1 => [255, 0, 0],
        0 => WHITE,
        1 => [0, 0, 0],
        2 => [0, 0, 255],
        3 => [0, 160, 0],
        _ => [128, 128, 128],
    }
}

/// Draws the snapshot box with a white margin, `scale` pixels per site and
/// `y` increasing upwards. `u1` is required for [`RenderMode::OdoDiff`];
/// without it that mode shows every site white.
pub fn render(snap: &Snapshot, mode: RenderMode, u1: Option<&Odometer>, scale: u32) -> Image {
    let scale = scale.max(1);
    let cells_w = snap.width + 2 * MARGIN;
    let cells_h = snap.height + 2 * MARGIN;
    let (width, height) = (cells_w * scale, cells_h * scale);
    let mut pixels = vec![WHITE; (width * height) as usize];
    for cy in 0..snap.height {
        for cx in 0..snap.width {
            let s = Site::new(snap.x0 + cx as i32, snap.y0 + cy as i32);
            let color = match mode {
                RenderMode::Rotors => snap.top_at(s).map_or(WHITE, rotor_color),
                RenderMode::Chips => chip_color(snap.sigma_at(s)),
                RenderMode::OdoDiff => match u1.map(|u| u.get(s).cmp(&i64::from(snap.odo_at(s)))) {
                    Some(std::cmp::Ordering::Greater) => [0, 0, 255],
                    Some(std::cmp::Ordering::Less) => [255, 0, 0],
                    _ => WHITE,
                },
            };
            if color == WHITE {
                continue;
            }
            let px = (cx + MARGIN) * scale;
            let py = (cells_h - 1 - (cy + MARGIN)) * scale;
            for dy in 0..scale {
                let row = ((py + dy) * width) as usize;
                pixels[row + px as usize..row + (px + scale) as usize].fill(color);
            }
        }
    }
    Image { width, height, pixels }
}
