//! KITTI flow PNG: 16-bit RGB where R and G hold `u * 64 + 2^15` and
//! `v * 64 + 2^15`, and B is 1 for valid pixels, 0 otherwise.

use png::{BitDepth, ColorType};

use crate::codec::{pngio, FlowImage};
use crate::error::{format, Result};
use crate::geometry::MotionField;

pub const KITTI_FLOW_SCALE: f64 = 64.0;
pub const KITTI_FLOW_OFFSET: f64 = 32768.0;

fn quantize(value: f64) -> u16 {
    ((value * KITTI_FLOW_SCALE).round() + KITTI_FLOW_OFFSET).clamp(0.0, 65535.0) as u16
}

fn dequantize(stored: u16) -> f64 {
    (stored as f64 - KITTI_FLOW_OFFSET) / KITTI_FLOW_SCALE
}

pub fn read_kitti_flow_png(bytes: &[u8]) -> Result<FlowImage> {
    let raster = pngio::read_raw(bytes)?;
    if raster.color != ColorType::Rgb || raster.depth != BitDepth::Sixteen {
        return Err(format(format!(
            "KITTI flow must be 16-bit RGB, got {:?} {:?}",
            raster.depth, raster.color
        )));
    }
    let n = raster.width * raster.height;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for px in raster.data.chunks_exact(6) {
        let r = u16::from_be_bytes([px[0], px[1]]);
        let g = u16::from_be_bytes([px[2], px[3]]);
        let b = u16::from_be_bytes([px[4], px[5]]);
        if b > 0 {
            u.push(dequantize(r));
            v.push(dequantize(g));
            valid.push(true);
        } else {
            u.push(0.0);
            v.push(0.0);
            valid.push(false);
        }
    }
    let field = MotionField::new(raster.width, raster.height, u, v)?;
    FlowImage::with_validity(field, valid)
}

/// Quantizes to 1/64 px. Values beyond about +-512 px saturate; invalid
/// pixels are written as all-zero samples.
pub fn write_kitti_flow_png(flow: &FlowImage) -> Result<Vec<u8>> {
    let field = flow.field();
    let mut data = Vec::with_capacity(field.len() * 6);
    for (i, (u, v)) in field.iter().enumerate() {
        let (r, g, b) = if flow.is_valid(i) { (quantize(u), quantize(v), 1u16) } else { (0, 0, 0) };
        data.extend_from_slice(&r.to_be_bytes());
        data.extend_from_slice(&g.to_be_bytes());
        data.extend_from_slice(&b.to_be_bytes());
    }
    pngio::write_raw(field.width(), field.height(), ColorType::Rgb, BitDepth::Sixteen, &data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoding_formula_fixed_points() {
        assert_eq!(dequantize(32768), 0.0);
        assert_eq!(dequantize(32832), 1.0);
        assert_eq!(dequantize(32768 - 32), -0.5);
        assert_eq!(quantize(1.0), 32832);
        assert_eq!(quantize(1e6), 65535);
        assert_eq!(quantize(-1e6), 0);
    }

    #[test]
    fn round_trip_within_quantization() {
        let field = MotionField::from_fn(5, 4, |c, r| (c as f64 * 1.013 - 2.0, r as f64 * -0.377));
        let valid: Vec<bool> = (0..20).map(|i| i % 7 != 3).collect();
        let flow = FlowImage::with_validity(field.clone(), valid.clone()).unwrap();
        let bytes = write_kitti_flow_png(&flow).unwrap();
        let back = read_kitti_flow_png(&bytes).unwrap();
        assert_eq!(back.validity().unwrap(), &valid[..]);
        for (i, ((a, b), (c, d))) in field.iter().zip(back.field().iter()).enumerate() {
            if valid[i] {
                assert!((a - c).abs() <= 1.0 / 128.0 && (b - d).abs() <= 1.0 / 128.0);
            } else {
                assert_eq!((c, d), (0.0, 0.0));
            }
        }
        // quantized data re-encodes to the same file
        assert_eq!(write_kitti_flow_png(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_wrong_layouts() {
        let gray = pngio::write_gray8(2, 2, &[0, 1, 2, 3]).unwrap();
        assert!(matches!(read_kitti_flow_png(&gray), Err(crate::Error::Format(_))));
        let rgb8 = pngio::write_rgb8(1, 1, &[1, 2, 3]).unwrap();
        assert!(read_kitti_flow_png(&rgb8).is_err());
        assert!(read_kitti_flow_png(b"not a png").is_err());
    }
}
