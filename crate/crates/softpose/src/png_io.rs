//! PNG codecs for color (8-bit RGB), depth (16-bit, 0.1 mm per unit, 0 = invalid) and masks
//! (8-bit, 255 = 1.0).

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType};
use softpose_core::{DepthMap, Mask, RgbImage};

use crate::error::FormatError;

/// Meters per depth-file unit.
pub const DEPTH_UNIT_M: f64 = 1e-4;

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_png(path: &Path, width: usize, height: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<(), FormatError> {
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc.write_header().map_err(|e| FormatError::from(e).in_file(path))?;
    writer.write_image_data(data).map_err(|e| FormatError::from(e).in_file(path))?;
    writer.finish().map_err(|e| FormatError::from(e).in_file(path))
}

struct Decoded {
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    data: Vec<u8>,
}

fn read_png(path: &Path) -> Result<Decoded, FormatError> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    let wrap = |e: png::DecodingError| FormatError::from(e).in_file(path);
    let mut reader = png::Decoder::new(BufReader::new(file)).read_info().map_err(wrap)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| FormatError::PngLayout("image too large".into()).in_file(path))?;
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data).map_err(wrap)?;
    data.truncate(info.buffer_size());
    Ok(Decoded { width: info.width as usize, height: info.height as usize, color: info.color_type, depth: info.bit_depth, data })
}

fn expect(dec: &Decoded, color: ColorType, depth: BitDepth, path: &Path) -> Result<(), FormatError> {
    if dec.color != color || dec.depth != depth {
        let msg = format!("expected {color:?} {depth:?}, found {:?} {:?}", dec.color, dec.depth);
        return Err(FormatError::PngLayout(msg).in_file(path));
    }
    Ok(())
}

pub fn encode_color(img: &RgbImage) -> Vec<u8> {
    img.data.iter().flat_map(|c| c.map(to_u8)).collect()
}

pub fn write_color(path: &Path, img: &RgbImage) -> Result<(), FormatError> {
    write_png(path, img.width, img.height, ColorType::Rgb, BitDepth::Eight, &encode_color(img))
}

pub fn read_color(path: &Path) -> Result<RgbImage, FormatError> {
    let dec = read_png(path)?;
    expect(&dec, ColorType::Rgb, BitDepth::Eight, path)?;
    let data = dec.data.chunks_exact(3).map(|p| [0, 1, 2].map(|k| p[k] as f64 / 255.0)).collect();
    Ok(RgbImage { width: dec.width, height: dec.height, data })
}

/// Depth in file units, rounded and saturated at 65535 (6.5535 m).
pub fn depth_to_units(d: f64) -> u16 {
    if d.is_finite() && d > 0.0 {
        (d / DEPTH_UNIT_M).round().min(u16::MAX as f64) as u16
    } else {
        0
    }
}

pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<(), FormatError> {
    let data: Vec<u8> = depth.data.iter().flat_map(|&d| depth_to_units(d).to_be_bytes()).collect();
    write_png(path, depth.width, depth.height, ColorType::Grayscale, BitDepth::Sixteen, &data)
}

pub fn read_depth(path: &Path) -> Result<DepthMap, FormatError> {
    let dec = read_png(path)?;
    expect(&dec, ColorType::Grayscale, BitDepth::Sixteen, path)?;
    let data = dec.data.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 * DEPTH_UNIT_M).collect();
    Ok(DepthMap { width: dec.width, height: dec.height, data })
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<(), FormatError> {
    let data: Vec<u8> = mask.data.iter().map(|&m| to_u8(m)).collect();
    write_png(path, mask.width, mask.height, ColorType::Grayscale, BitDepth::Eight, &data)
}

pub fn read_mask(path: &Path) -> Result<Mask, FormatError> {
    let dec = read_png(path)?;
    expect(&dec, ColorType::Grayscale, BitDepth::Eight, path)?;
    let data = dec.data.iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Mask { width: dec.width, height: dec.height, data })
}
