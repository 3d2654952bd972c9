//! The sixteen candidate color channels plus plain grayscale.
//!
//! Every channel keeps its natural range: R, G, B, R-B, chroma and gray on
//! the raw 0..255 scale, H in degrees, S/V/YIQ on [0, 1]-normalized inputs,
//! and L*a*b* in CIE units.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::imaging::{ChannelMap, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ChannelId {
    R,
    G,
    B,
    H,
    S,
    V,
    Y,
    I,
    Q,
    LStar,
    AStar,
    BStar,
    ROverB,
    RMinusB,
    NormBR,
    Chroma,
    Gray,
}

impl ChannelId {
    pub const ALL: [ChannelId; 17] = [
        ChannelId::R,
        ChannelId::G,
        ChannelId::B,
        ChannelId::H,
        ChannelId::S,
        ChannelId::V,
        ChannelId::Y,
        ChannelId::I,
        ChannelId::Q,
        ChannelId::LStar,
        ChannelId::AStar,
        ChannelId::BStar,
        ChannelId::ROverB,
        ChannelId::RMinusB,
        ChannelId::NormBR,
        ChannelId::Chroma,
        ChannelId::Gray,
    ];

    /// The sixteen ranked candidates c1..c16, in order.
    pub fn candidates() -> &'static [ChannelId] {
        &Self::ALL[..16]
    }

    /// 1-based candidate index (c1..c16); `None` for gray.
    pub fn index(self) -> Option<usize> {
        match self {
            ChannelId::Gray => None,
            other => Some(other as usize + 1),
        }
    }

    pub fn from_index(i: usize) -> Option<ChannelId> {
        (1..=16).contains(&i).then(|| Self::ALL[i - 1])
    }

    /// Lowercase command-line token.
    pub fn token(self) -> &'static str {
        match self {
            ChannelId::R => "r",
            ChannelId::G => "g",
            ChannelId::B => "b",
            ChannelId::H => "h",
            ChannelId::S => "s",
            ChannelId::V => "v",
            ChannelId::Y => "y",
            ChannelId::I => "i",
            ChannelId::Q => "q",
            ChannelId::LStar => "lstar",
            ChannelId::AStar => "astar",
            ChannelId::BStar => "bstar",
            ChannelId::ROverB => "r-over-b",
            ChannelId::RMinusB => "r-minus-b",
            ChannelId::NormBR => "norm-bry",
            ChannelId::Chroma => "chroma",
            ChannelId::Gray => "gray",
        }
    }

    /// Value of this channel for a single pixel.
    pub fn apply(self, px: [u8; 3]) -> f64 {
        let [r, g, b] = px.map(f64::from);
        match self {
            ChannelId::R => r,
            ChannelId::G => g,
            ChannelId::B => b,
            ChannelId::H => hsv(px).0,
            ChannelId::S => hsv(px).1,
            ChannelId::V => hsv(px).2,
            ChannelId::Y => yiq(px)[0],
            ChannelId::I => yiq(px)[1],
            ChannelId::Q => yiq(px)[2],
            ChannelId::LStar => lab(px)[0],
            ChannelId::AStar => lab(px)[1],
            ChannelId::BStar => lab(px)[2],
            ChannelId::ROverB => {
                if b > 0.0 {
                    r / b
                } else if r > 0.0 {
                    r
                } else {
                    1.0
                }
            }
            ChannelId::RMinusB => r - b,
            ChannelId::NormBR => {
                if r + b > 0.0 {
                    (b - r) / (b + r)
                } else {
                    0.0
                }
            }
            ChannelId::Chroma => {
                let (mx, mn) = max_min(px);
                f64::from(mx - mn)
            }
            // integer numerator keeps gray pixels exact
            ChannelId::Gray => {
                f64::from(299 * u32::from(px[0]) + 587 * u32::from(px[1]) + 114 * u32::from(px[2])) / 1000.0
            }
        }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ChannelId {
    type Err = Error;

    /// Accepts the CLI token or the `c1`..`c16` index form.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        if let Some(id) = Self::ALL.iter().find(|c| c.token() == lower) {
            return Ok(*id);
        }
        lower
            .strip_prefix('c')
            .and_then(|n| n.parse::<usize>().ok())
            .and_then(Self::from_index)
            .ok_or_else(|| Error::InvalidParams(format!("unknown channel '{s}'")))
    }
}

impl TryFrom<String> for ChannelId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl From<ChannelId> for String {
    fn from(c: ChannelId) -> String {
        c.token().to_string()
    }
}

fn max_min(px: [u8; 3]) -> (u8, u8) {
    let [r, g, b] = px;
    (r.max(g).max(b), r.min(g).min(b))
}

/// H in [0, 360), S and V in [0, 1]. Achromatic pixels get H = 0.
fn hsv(px: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = px.map(|c| f64::from(c) / 255.0);
    let (mx, mn) = max_min(px);
    let (mx, mn) = (f64::from(mx) / 255.0, f64::from(mn) / 255.0);
    let delta = mx - mn;
    let v = mx;
    let s = if mx > 0.0 { delta / mx } else { 0.0 };
    if delta == 0.0 {
        return (0.0, s, v);
    }
    let h = if mx == r {
        60.0 * ((g - b) / delta)
    } else if mx == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let h = if h < 0.0 { h + 360.0 } else { h };
    (if h >= 360.0 { h - 360.0 } else { h }, s, v)
}

/// NTSC YIQ on [0, 1]-normalized RGB.
const NTSC: [[f64; 3]; 3] = [[0.299, 0.587, 0.114], [0.596, -0.274, -0.322], [0.211, -0.523, 0.312]];

fn yiq(px: [u8; 3]) -> [f64; 3] {
    let rgb = px.map(|c| f64::from(c) / 255.0);
    NTSC.map(|row| row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2])
}

// linear sRGB -> XYZ, D65
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

fn srgb_to_linear(c: u8) -> f64 {
    let c = f64::from(c) / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab(px: [u8; 3]) -> [f64; 3] {
    let lin = px.map(srgb_to_linear);
    let xyz = SRGB_TO_XYZ.map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]);
    // white point is the image of sRGB white, so (255,255,255) lands exactly on a* = b* = 0
    let white = SRGB_TO_XYZ.map(|row| row[0] + row[1] + row[2]);
    let [fx, fy, fz] = [0, 1, 2].map(|i| lab_f(xyz[i] / white[i]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Converts an image into the requested single-channel map.
pub fn extract_channel(img: &RgbImage, channel: ChannelId) -> ChannelMap {
    let values: Vec<f64> = img.pixels().par_iter().map(|&px| channel.apply(px)).collect();
    ChannelMap::new(img.width(), img.height(), values, Some(channel))
        .expect("channel transforms are finite and preserve dimensions")
}
