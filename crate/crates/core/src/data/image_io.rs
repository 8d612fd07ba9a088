//! Grayscale PNG input and output.

use std::io::Cursor;
use std::path::Path;

use crate::error::{CanmError, Result};
use crate::fsutil::write_atomic;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// Maps `[0, 1]` to the integer range, clamping and rounding half to even.
pub fn quantize(v: f64, depth: BitDepth) -> u16 {
    (v.clamp(0.0, 1.0) * depth.max_value()).round_ties_even() as u16
}

/// Decodes a grayscale PNG to an `[H, W]` tensor in `[0, 1]`.
pub fn decode_png(bytes: &[u8]) -> Result<(Tensor, BitDepth)> {
    let err = |e: png::DecodingError| CanmError::Image(format!("cannot decode PNG: {e}"));
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| CanmError::Image("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(err)?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(CanmError::Image(format!(
            "expected a grayscale PNG, found {:?}",
            info.color_type
        )));
    }
    let (h, w) = (info.height as usize, info.width as usize);
    let (depth, data): (BitDepth, Vec<f64>) = match info.bit_depth {
        png::BitDepth::Eight => (
            BitDepth::Eight,
            (0..h * w)
                .map(|k| {
                    let (y, x) = (k / w, k % w);
                    buf[y * info.line_size + x] as f64 / 255.0
                })
                .collect(),
        ),
        png::BitDepth::Sixteen => (
            BitDepth::Sixteen,
            (0..h * w)
                .map(|k| {
                    let o = (k / w) * info.line_size + 2 * (k % w);
                    u16::from_be_bytes([buf[o], buf[o + 1]]) as f64 / 65535.0
                })
                .collect(),
        ),
        d => return Err(CanmError::Image(format!("unsupported bit depth {d:?}"))),
    };
    Ok((Tensor::new(&[h, w], data)?, depth))
}

/// Encodes an `[H, W]` tensor as a grayscale PNG.
pub fn encode_png(img: &Tensor, depth: BitDepth) -> Result<Vec<u8>> {
    let &[h, w] = img.shape() else {
        return Err(CanmError::shape(format!("image must be [H, W], got {:?}", img.shape())));
    };
    let pixels: Vec<u8> = match depth {
        BitDepth::Eight => img.data().iter().map(|&v| quantize(v, depth) as u8).collect(),
        BitDepth::Sixteen => img
            .data()
            .iter()
            .flat_map(|&v| quantize(v, depth).to_be_bytes())
            .collect(),
    };
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(match depth {
            BitDepth::Eight => png::BitDepth::Eight,
            BitDepth::Sixteen => png::BitDepth::Sixteen,
        });
        let err = |e: png::EncodingError| CanmError::Image(format!("cannot encode PNG: {e}"));
        let mut writer = enc.write_header().map_err(err)?;
        writer.write_image_data(&pixels).map_err(err)?;
        writer.finish().map_err(err)?;
    }
    Ok(out)
}

pub fn read_image(path: &Path) -> Result<(Tensor, BitDepth)> {
    let bytes = std::fs::read(path).map_err(|e| CanmError::io(format!("reading {}", path.display()), e))?;
    decode_png(&bytes).map_err(|e| match e {
        CanmError::Image(m) => CanmError::Image(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_image(img: &Tensor, path: &Path, depth: BitDepth) -> Result<()> {
    write_atomic(path, &encode_png(img, depth)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_maps_to_128() {
        assert_eq!(quantize(0.5, BitDepth::Eight), 128);
        assert_eq!(quantize(-1.0, BitDepth::Eight), 0);
        assert_eq!(quantize(2.0, BitDepth::Sixteen), 65535);
    }

    #[test]
    fn eight_bit_reencode_is_byte_identical() {
        let img = Tensor::from_fn(&[5, 7], |i| ((i[0] * 7 + i[1]) * 7 % 256) as f64 / 255.0);
        let bytes = encode_png(&img, BitDepth::Eight).unwrap();
        let (back, depth) = decode_png(&bytes).unwrap();
        assert_eq!(depth, BitDepth::Eight);
        assert_eq!(encode_png(&back, depth).unwrap(), bytes);
    }

    #[test]
    fn sixteen_bit_error_is_within_half_step() {
        let vals: Vec<f64> = (0..=4096).map(|k| k as f64 / 4096.0).collect();
        let img = Tensor::new(&[1, vals.len()], vals.clone()).unwrap();
        let (back, _) = decode_png(&encode_png(&img, BitDepth::Sixteen).unwrap()).unwrap();
        let worst = back.data().iter().zip(&vals).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 0.5 / 65535.0 + 1e-15, "{worst}");
    }

    #[test]
    fn garbage_is_an_image_error() {
        assert!(matches!(decode_png(b"not a png"), Err(CanmError::Image(_))));
    }
}
