//! Binary PGM (P5) reader and writer.
//!
//! Reads maxval 255 (one byte per sample) or 65535 (two bytes, big-endian);
//! always writes maxval 65535 so sub-dB differences survive quantization.
//! Intensities map linearly to [0,1] by dividing by maxval; values are
//! clamped to [0,1] only at write time.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

const WRITE_MAXVAL: u32 = 65535;

/// Decode a P5 image from raw bytes.
pub fn decode(bytes: &[u8]) -> Result<Image> {
    let mut cursor = 0usize;

    let magic = read_token(bytes, &mut cursor)
        .ok_or_else(|| Error::PgmMalformedHeader("missing magic".into()))?;
    if magic != "P5" {
        return Err(Error::PgmUnsupportedFormat(magic));
    }

    let width = parse_header_int(bytes, &mut cursor, "width")?;
    let height = parse_header_int(bytes, &mut cursor, "height")?;
    let maxval = parse_header_int(bytes, &mut cursor, "maxval")? as u32;
    if maxval != 255 && maxval != 65535 {
        return Err(Error::PgmUnsupportedMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(Error::PgmMalformedHeader("zero dimension".into()));
    }

    // Exactly one whitespace byte separates the header from the payload.
    if cursor >= bytes.len() || !bytes[cursor].is_ascii_whitespace() {
        return Err(Error::PgmMalformedHeader("missing payload separator".into()));
    }
    cursor += 1;

    let samples = width * height;
    let bytes_per_sample = if maxval == 255 { 1 } else { 2 };
    let expected = samples * bytes_per_sample;
    let payload = &bytes[cursor..];
    if payload.len() < expected {
        return Err(Error::PgmTruncated { expected, got: payload.len() });
    }

    let scale = 1.0 / maxval as f64;
    let pixels: Vec<f64> = if maxval == 255 {
        payload[..expected].iter().map(|&b| b as f64 * scale).collect()
    } else {
        payload[..expected]
            .chunks_exact(2)
            .map(|pair| u16::from_be_bytes([pair[0], pair[1]]) as f64 * scale)
            .collect()
    };

    Image::new(height, width, pixels)
}

/// Encode as P5 with maxval 65535; out-of-range intensities are clamped.
pub fn encode(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 2 * img.len());
    write!(out, "P5\n{} {}\n{}\n", img.width(), img.height(), WRITE_MAXVAL).unwrap();
    for &v in img.pixels() {
        let q = (v.clamp(0.0, 1.0) * WRITE_MAXVAL as f64).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    decode(&fs::read(path)?)
}

pub fn write_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(img))?;
    Ok(())
}

/// Next whitespace-delimited header token, skipping `#` comment lines.
fn read_token(bytes: &[u8], cursor: &mut usize) -> Option<String> {
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
            continue;
        }
        break;
    }
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    if *cursor == start {
        return None;
    }
    Some(String::from_utf8_lossy(&bytes[start..*cursor]).into_owned())
}

fn parse_header_int(bytes: &[u8], cursor: &mut usize, field: &str) -> Result<usize> {
    let token = read_token(bytes, cursor)
        .ok_or_else(|| Error::PgmMalformedHeader(format!("missing {field}")))?;
    token
        .parse::<usize>()
        .map_err(|_| Error::PgmMalformedHeader(format!("bad {field} {token:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_reproduces_quantized_pixels() {
        let img = Image::from_fn(3, 3, |r, c| (r * 3 + c) as f64 / 8.0);
        let decoded = decode(&encode(&img)).unwrap();
        // Quantization to 16 bits, then exact reproduction.
        let quantized = img.map(|v| (v * 65535.0).round() / 65535.0);
        assert_eq!(decoded, quantized);
        let again = decode(&encode(&decoded)).unwrap();
        assert_eq!(again, decoded);
    }

    #[test]
    fn eight_bit_payload_maps_linearly() {
        let bytes = b"P5\n2 2\n255\n".iter().copied().chain([0u8, 128, 255, 64]).collect::<Vec<_>>();
        let img = decode(&bytes).unwrap();
        assert_eq!(img.pixels(), &[0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0]);
    }

    #[test]
    fn eight_bit_values_survive_sixteen_bit_rewrite() {
        let bytes = b"P5\n2 1\n255\n".iter().copied().chain([7u8, 201]).collect::<Vec<_>>();
        let img = decode(&bytes).unwrap();
        // 65535 = 255 * 257, so n/255 re-quantizes exactly.
        let rewritten = decode(&encode(&img)).unwrap();
        assert_eq!(rewritten, img);
    }

    #[test]
    fn p6_magic_is_unsupported() {
        let bytes = b"P6\n1 1\n255\n\x00\x00\x00".to_vec();
        assert!(matches!(decode(&bytes), Err(Error::PgmUnsupportedFormat(m)) if m == "P6"));
    }

    #[test]
    fn bad_maxval_rejected() {
        let bytes = b"P5\n1 1\n1023\n\x00\x00".to_vec();
        assert!(matches!(decode(&bytes), Err(Error::PgmUnsupportedMaxval(1023))));
    }

    #[test]
    fn truncated_payload_rejected() {
        let bytes = b"P5\n2 2\n255\n\x01\x02".to_vec();
        assert!(matches!(
            decode(&bytes),
            Err(Error::PgmTruncated { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P5\n# a comment\n1 1\n255\n\x80".to_vec();
        let img = decode(&bytes).unwrap();
        assert_eq!(img.pixels(), &[128.0 / 255.0]);
    }

    #[test]
    fn writer_clamps_out_of_range() {
        let img = Image::new(1, 2, vec![-0.5, 1.5]).unwrap();
        let decoded = decode(&encode(&img)).unwrap();
        assert_eq!(decoded.pixels(), &[0.0, 1.0]);
    }
}
