//! PGM (P2/P5) and grayscale PNG reading and writing.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, Luma};

use super::{GrayImage, RasterError};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, RasterError> {
    let bytes = fs::read(path.as_ref())?;
    decode_image(&bytes)
}

/// Decodes an in-memory PGM or PNG, scaling samples by the format maximum.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage, RasterError> {
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else {
        Err(RasterError::UnsupportedFormat(
            "expected PGM (P2/P5) or PNG".into(),
        ))
    }
}

/// Writes `.pgm` as binary P5 and anything else as 8-bit grayscale PNG.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let bytes = if is_pgm {
        encode_pgm(img)
    } else {
        encode_png(img)?
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_u8());
    out
}

pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>, RasterError> {
    let buf = image::ImageBuffer::<Luma<u8>, _>::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.to_u8(),
    )
    .ok_or_else(|| RasterError::CorruptFile("buffer size mismatch".into()))?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| RasterError::Io(std::io::Error::other(e)))?;
    Ok(out.into_inner())
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage, RasterError> {
    let dynimg = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| RasterError::CorruptFile(e.to_string()))?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    if w == 0 || h == 0 {
        return Err(RasterError::ZeroDimension);
    }
    let data: Vec<f64> = match dynimg {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other => {
            return Err(RasterError::UnsupportedFormat(format!(
                "PNG color type {:?} is not grayscale",
                other.color()
            )))
        }
    };
    GrayImage::new(w, h, data)
}

/// Whitespace/comment aware header tokenizer.
struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize, RasterError> {
        let tok = self
            .token()
            .ok_or_else(|| RasterError::CorruptFile(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RasterError::CorruptFile(format!("bad {what}")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, RasterError> {
    let binary = bytes[1] == b'5';
    let mut cur = PgmCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(RasterError::ZeroDimension);
    }
    if maxval == 0 || maxval > 255 {
        return Err(RasterError::UnsupportedFormat(format!(
            "maxval {maxval}: only 8-bit PGM is supported"
        )));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| RasterError::CorruptFile("dimensions overflow".into()))?;
    let max = maxval as f64;

    let raw: Vec<usize> = if binary {
        // exactly one whitespace byte separates the header from the payload
        let start = cur.pos + 1;
        let payload = bytes
            .get(start..start + count)
            .ok_or_else(|| RasterError::CorruptFile("truncated P5 payload".into()))?;
        payload.iter().map(|&b| b as usize).collect()
    } else {
        let mut vals = Vec::with_capacity(count);
        for _ in 0..count {
            let tok = cur
                .token()
                .ok_or_else(|| RasterError::CorruptFile("truncated P2 payload".into()))?;
            let v: usize = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| RasterError::CorruptFile("bad P2 sample".into()))?;
            vals.push(v);
        }
        vals
    };
    if raw.iter().any(|&v| v > maxval) {
        return Err(RasterError::CorruptFile("sample exceeds maxval".into()));
    }
    GrayImage::new(width, height, raw.into_iter().map(|v| v as f64 / max).collect())
}
