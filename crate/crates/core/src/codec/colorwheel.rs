//! Middlebury color wheel encoding of 2D motion.
//!
//! Hue follows the direction of the vector, saturation its magnitude
//! relative to a normalization scale. Rightward motion renders red,
//! leftward motion cyan-blue, downward yellow and upward violet. Magnitudes
//! above the scale saturate instead of dimming.

use std::f64::consts::{FRAC_1_PI, FRAC_PI_2, FRAC_PI_4, PI};

use crate::codec::VmtImage;
use crate::error::{param, Result};
use crate::geometry::MotionField;

/// Number of hue bins on the wheel (15 RY, 6 YG, 4 GC, 11 CB, 13 BM, 6 MR).
pub const WHEEL_BINS: usize = 55;

const SEGMENTS: [usize; 6] = [15, 6, 4, 11, 13, 6];

/// How a field is scaled before encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// Divide by the largest per-pixel magnitude of the frame.
    PerFrameMax,
    /// Divide by a fixed scale in pixels, shared across frames.
    Fixed(f64),
}

/// Saturation reference for [`colorwheel_encode`]; `PerFrameMax` is the
/// automatic per-frame maximum.
pub type MaxMagnitude = Normalization;

impl Normalization {
    fn validate(self) -> Result<Self> {
        match self {
            Normalization::Fixed(s) if !(s.is_finite() && s > 0.0) => {
                Err(param(format!("normalization scale must be positive, got {s}")))
            }
            other => Ok(other),
        }
    }

    /// The divisor applied to `field`.
    pub fn scale_for(self, field: &MotionField) -> Result<f64> {
        Ok(match self.validate()? {
            Normalization::Fixed(s) => s,
            Normalization::PerFrameMax => {
                let m = field.max_magnitude();
                if m > 0.0 {
                    m
                } else {
                    1.0
                }
            }
        })
    }
}

/// Scales a field into saturation units.
pub fn normalize_field(field: &MotionField, mode: Normalization) -> Result<MotionField> {
    let inv = 1.0 / mode.scale_for(field)?;
    Ok(field.map(|u, v| (u * inv, v * inv)))
}

/// The 55 reference colors of the wheel.
#[derive(Debug, Clone)]
pub struct ColorWheel {
    colors: [[u8; 3]; WHEEL_BINS],
    /// `colors` divided by 255.
    unit: [[f64; 3]; WHEEL_BINS],
}

impl ColorWheel {
    pub fn standard() -> Self {
        let mut colors = [[0u8; 3]; WHEEL_BINS];
        let ramp = |i: usize, n: usize| (255 * i / n) as u8;
        let mut k = 0;
        // Each segment ramps one channel up or down while another stays full.
        for (segment, &n) in SEGMENTS.iter().enumerate() {
            for i in 0..n {
                colors[k] = match segment {
                    0 => [255, ramp(i, n), 0],
                    1 => [255 - ramp(i, n), 255, 0],
                    2 => [0, 255, ramp(i, n)],
                    3 => [0, 255 - ramp(i, n), 255],
                    4 => [ramp(i, n), 0, 255],
                    _ => [255, 0, 255 - ramp(i, n)],
                };
                k += 1;
            }
        }
        let unit = colors.map(|c| c.map(|ch| ch as f64 / 255.0));
        Self { colors, unit }
    }

    pub fn colors(&self) -> &[[u8; 3]; WHEEL_BINS] {
        &self.colors
    }

    pub(crate) fn unit_colors(&self) -> &[[f64; 3]; WHEEL_BINS] {
        &self.unit
    }

    /// Color of an already-normalized vector.
    #[inline]
    pub fn color(&self, u: f64, v: f64) -> [u8; 3] {
        self.color_at(saturation(u, v), hue_position(u, v))
    }

    /// Color from a saturation in `[0, 1]` and a [`hue_position`].
    #[inline(always)]
    pub(crate) fn color_at(&self, rad: f64, fk: f64) -> [u8; 3] {
        // Both values are nonnegative here, so truncating casts floor them;
        // float to int casts also saturate, which clamps to [0, 255].
        let k0 = (fk as usize).min(WHEEL_BINS - 1);
        let k1 = if k0 + 1 == WHEEL_BINS { 0 } else { k0 + 1 };
        let f = fk - k0 as f64;
        let (c0, c1) = (self.unit[k0], self.unit[k1]);
        let mut out = [0u8; 3];
        for ch in 0..3 {
            let col = (1.0 - f) * c0[ch] + f * c1[ch];
            let col = 1.0 - rad * (1.0 - col);
            out[ch] = (255.0 * col) as u8;
        }
        out
    }
}

impl Default for ColorWheel {
    fn default() -> Self {
        Self::standard()
    }
}

/// Continuous position on the wheel in `[0, 54]`; integer values are bin
/// centers.
#[inline(always)]
pub fn hue_position(u: f64, v: f64) -> f64 {
    let a = atan2(-v, -u) * FRAC_1_PI;
    (a + 1.0) * 0.5 * (WHEEL_BINS - 1) as f64
}

#[inline(always)]
pub(crate) fn saturation(u: f64, v: f64) -> f64 {
    (u * u + v * v).sqrt().min(1.0)
}

const TAN_PI_8: f64 = 0.414_213_562_373_095_03;

/// atan(s) / s as a polynomial in s^2, least-squares fit on
/// |s| <= tan(pi/8). Error of the resulting atan is below 3e-13.
const ATAN_COEFFS: [f64; 8] = [
    0.999_999_999_999_271_7,
    -0.333_333_332_784_088_2,
    0.199_999_931_902_163_8,
    -0.142_853_912_907_554_36,
    0.111_035_352_834_800_25,
    -0.089_932_194_791_858_35,
    0.069_770_114_344_598_84,
    -0.037_701_797_847_990_38,
];

/// Four-quadrant arctangent with the signed-zero conventions of
/// [`f64::atan2`], cheap enough to run per pixel. Octant reduction, then
/// atan(lo/hi) = pi/4 + atan((lo - hi) / (lo + hi)) above tan(pi/8), so a
/// single division remains.
#[inline(always)]
pub(crate) fn atan2(y: f64, x: f64) -> f64 {
    let (ax, ay) = (x.abs(), y.abs());
    let (lo, hi) = (ax.min(ay), ax.max(ay));
    let folded = lo > TAN_PI_8 * hi;
    let (n, d) = if folded { (lo - hi, lo + hi) } else { (lo, hi) };
    let s = if d > 0.0 { n / d } else { 0.0 };
    let z = s * s;
    let mut p = ATAN_COEFFS[7];
    for c in ATAN_COEFFS[..7].iter().rev() {
        p = p * z + c;
    }
    let mut a = p * s + if folded { FRAC_PI_4 } else { 0.0 };
    if ay > ax {
        a = FRAC_PI_2 - a;
    }
    if x.is_sign_negative() {
        a = PI - a;
    }
    a.copysign(y)
}

/// Color of a single vector relative to `max_magnitude`.
pub fn wheel_color(u: f64, v: f64, max_magnitude: f64) -> [u8; 3] {
    let inv = 1.0 / max_magnitude;
    ColorWheel::standard().color(u * inv, v * inv)
}

/// Encodes a field as an RGB color wheel image.
pub fn colorwheel_encode(field: &MotionField, max_magnitude: MaxMagnitude) -> Result<VmtImage> {
    let inv = 1.0 / max_magnitude.scale_for(field)?;
    let wheel = ColorWheel::standard();
    let mut rgb = Vec::with_capacity(field.len() * 3);
    for (u, v) in field.iter() {
        rgb.extend_from_slice(&wheel.color(u * inv, v * inv));
    }
    VmtImage::new(field.width(), field.height(), rgb)
}
