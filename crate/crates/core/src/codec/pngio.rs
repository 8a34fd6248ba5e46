use std::io::Cursor;

use png::{BitDepth, ColorType, Decoder, Encoder, Transformations};

use crate::error::{format, Error, Result};

impl From<png::DecodingError> for Error {
    fn from(e: png::DecodingError) -> Self {
        format(format!("png decode: {e}"))
    }
}

impl From<png::EncodingError> for Error {
    fn from(e: png::EncodingError) -> Self {
        format(format!("png encode: {e}"))
    }
}

pub(crate) struct Raster {
    pub width: usize,
    pub height: usize,
    pub color: ColorType,
    pub depth: BitDepth,
    pub data: Vec<u8>,
}

/// Decodes a non-interlaced PNG without any sample transformations.
pub(crate) fn read_raw(bytes: &[u8]) -> Result<Raster> {
    let mut decoder = Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format("png image too large"))?;
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data)?;
    data.truncate(info.line_size * info.height as usize);
    Ok(Raster {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        data,
    })
}

pub(crate) fn write_raw(width: usize, height: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let (w, h) = (
        u32::try_from(width).map_err(|_| format("png width overflow"))?,
        u32::try_from(height).map_err(|_| format("png height overflow"))?,
    );
    let mut out = Vec::new();
    {
        let mut encoder = Encoder::new(&mut out, w, h);
        encoder.set_color(color);
        encoder.set_depth(depth);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(data)?;
        writer.finish()?;
    }
    Ok(out)
}

pub(crate) fn write_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    write_raw(width, height, ColorType::Rgb, BitDepth::Eight, rgb)
}

pub(crate) fn read_rgb8(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let r = read_raw(bytes)?;
    if r.color != ColorType::Rgb || r.depth != BitDepth::Eight {
        return Err(format(format!("expected 8-bit RGB png, got {:?} {:?}", r.depth, r.color)));
    }
    Ok((r.width, r.height, r.data))
}

pub(crate) fn write_gray8(width: usize, height: usize, gray: &[u8]) -> Result<Vec<u8>> {
    write_raw(width, height, ColorType::Grayscale, BitDepth::Eight, gray)
}

pub(crate) fn read_gray8(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let r = read_raw(bytes)?;
    if r.color != ColorType::Grayscale || r.depth != BitDepth::Eight {
        return Err(format(format!("expected 8-bit grayscale png, got {:?} {:?}", r.depth, r.color)));
    }
    Ok((r.width, r.height, r.data))
}
