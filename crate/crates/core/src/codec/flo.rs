//! Middlebury `.flo`: `f32` sentinel, `i32` width, `i32` height, then
//! interleaved `f32` (u, v) samples, all little-endian.

use crate::codec::FlowImage;
use crate::error::{format, Result};
use crate::geometry::MotionField;

/// Magic number at the start of every `.flo` file (bytes `PIEH`).
pub const FLO_SENTINEL: f32 = 202021.25;

const HEADER_LEN: usize = 12;

fn le_u32(bytes: &[u8], at: usize) -> [u8; 4] {
    [bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]
}

pub fn read_flo(bytes: &[u8]) -> Result<FlowImage> {
    if bytes.len() < HEADER_LEN {
        return Err(format(format!("flo header needs {HEADER_LEN} bytes, got {}", bytes.len())));
    }
    let sentinel = f32::from_le_bytes(le_u32(bytes, 0));
    if sentinel.to_bits() != FLO_SENTINEL.to_bits() {
        return Err(format(format!("bad flo sentinel {sentinel}")));
    }
    let width = i32::from_le_bytes(le_u32(bytes, 4));
    let height = i32::from_le_bytes(le_u32(bytes, 8));
    if width <= 0 || height <= 0 {
        return Err(format(format!("flo dimensions must be positive, got {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| format("flo dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(format(format!(
            "flo payload for {width}x{height} is {expected} bytes, got {}",
            bytes.len()
        )));
    }
    let n = width * height;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for px in bytes[HEADER_LEN..].chunks_exact(8) {
        u.push(f32::from_le_bytes([px[0], px[1], px[2], px[3]]) as f64);
        v.push(f32::from_le_bytes([px[4], px[5], px[6], px[7]]) as f64);
    }
    let field = MotionField::new(width, height, u, v).map_err(|_| format("flo contains non-finite samples"))?;
    Ok(FlowImage::dense(field))
}

/// Serializes the field as `f32` samples. Validity is not representable in
/// this container and is dropped.
pub fn write_flo(flow: &FlowImage) -> Result<Vec<u8>> {
    let field = flow.field();
    let (w, h) = (
        i32::try_from(field.width()).map_err(|_| format("flo width overflow"))?,
        i32::try_from(field.height()).map_err(|_| format("flo height overflow"))?,
    );
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * field.len());
    out.extend_from_slice(&FLO_SENTINEL.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    for (u, v) in field.iter() {
        out.extend_from_slice(&(u as f32).to_le_bytes());
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}
