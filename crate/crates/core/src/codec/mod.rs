//! Optical-flow and VMT raster containers.
//!
//! * Middlebury `.flo` ([`read_flo`], [`write_flo`])
//! * KITTI 16-bit flow PNG ([`read_kitti_flow_png`], [`write_kitti_flow_png`])
//! * Middlebury color wheel encoding into 8-bit RGB ([`colorwheel_encode`])

pub(crate) mod colorwheel;
mod flo;
mod kitti_png;
pub(crate) mod pngio;

pub use colorwheel::{
    colorwheel_encode, hue_position, normalize_field, wheel_color, ColorWheel, MaxMagnitude, Normalization,
    WHEEL_BINS,
};
pub use flo::{read_flo, write_flo, FLO_SENTINEL};
pub use kitti_png::{read_kitti_flow_png, write_kitti_flow_png, KITTI_FLOW_OFFSET, KITTI_FLOW_SCALE};

use crate::error::{param, Result};
use crate::geometry::MotionField;

/// A flow field with an optional per-pixel validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowImage {
    field: MotionField,
    valid: Option<Vec<bool>>,
}

impl FlowImage {
    /// A flow image where every pixel is valid.
    pub fn dense(field: MotionField) -> Self {
        Self { field, valid: None }
    }

    pub fn with_validity(field: MotionField, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != field.len() {
            return Err(param(format!(
                "validity mask has {} entries, field has {} pixels",
                valid.len(),
                field.len()
            )));
        }
        Ok(Self { field, valid: Some(valid) })
    }

    pub fn field(&self) -> &MotionField {
        &self.field
    }

    pub fn into_field(self) -> MotionField {
        self.field
    }

    pub fn width(&self) -> usize {
        self.field.width()
    }

    pub fn height(&self) -> usize {
        self.field.height()
    }

    /// The explicit validity mask, if any.
    pub fn validity(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    #[inline]
    pub fn is_valid(&self, index: usize) -> bool {
        self.valid.as_ref().is_none_or(|m| m[index])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.as_ref().map_or(self.field.len(), |m| m.iter().filter(|&&b| b).count())
    }
}

/// Three-channel 8-bit color wheel raster, interleaved RGB, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmtImage {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
}

impl VmtImage {
    pub fn new(width: usize, height: usize, rgb: Vec<u8>) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(param(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                rgb.len()
            )));
        }
        Ok(Self { width, height, rgb })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }

    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.rgb.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Encodes as an 8-bit RGB PNG.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        pngio::write_rgb8(self.width, self.height, &self.rgb)
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let (width, height, rgb) = pngio::read_rgb8(bytes)?;
        Self::new(width, height, rgb)
    }
}
