//! Binary PPM (`P6`) and PGM (`P5`) codecs with 8-bit samples.
//!
//! The header is ASCII: magic, width, height and max value separated by
//! whitespace, optionally interleaved with `#` comments, then exactly one
//! whitespace byte before the raw payload. Only a max value of 255 is
//! accepted. The encoder always writes the canonical `P6\n{w} {h}\n255\n`
//! layout, so canonical files round-trip byte for byte.

use std::path::Path;

use super::{decode_mask, encode_mask, FundusImage, GrayImage, SegmentationMask};
use crate::error::{Error, Result};

/// Largest accepted width or height.
pub const MAX_DIMENSION: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Raster {
    Color(FundusImage),
    Gray(GrayImage),
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<(usize, usize)> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        let mut value: usize = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as usize))
                .ok_or_else(|| Error::parse(start, format!("{what} overflows")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(match self.bytes.get(start) {
                None => Error::parse(start, format!("truncated header: missing {what}")),
                Some(_) => Error::parse(start, format!("expected decimal {what}")),
            });
        }
        Ok((value, start))
    }
}

/// Decodes a `P5` or `P6` byte stream.
pub fn decode(bytes: &[u8]) -> Result<Raster> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        Some(_) => return Err(Error::parse(0, "unsupported magic (expected P5 or P6)")),
        None => return Err(Error::parse(0, "truncated header: missing magic")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if !cur.bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(Error::parse(2, "magic must be followed by whitespace"));
    }
    let (width, w_at) = cur.number("width")?;
    let (height, h_at) = cur.number("height")?;
    let (maxval, m_at) = cur.number("max value")?;
    for (v, at, what) in [(width, w_at, "width"), (height, h_at, "height")] {
        if v == 0 || v > MAX_DIMENSION {
            return Err(Error::parse(at, format!("{what} {v} outside 1..={MAX_DIMENSION}")));
        }
    }
    if maxval != 255 {
        return Err(Error::parse(m_at, format!("unsupported max value {maxval} (only 255)")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        Some(_) => return Err(Error::parse(cur.pos, "expected one whitespace byte before payload")),
        None => return Err(Error::parse(cur.pos, "truncated header: missing payload")),
    }
    let len = width * height * channels;
    let payload = &bytes[cur.pos..];
    if payload.len() < len {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated payload: {} of {len} bytes", payload.len()),
        ));
    }
    if payload.len() > len {
        return Err(Error::parse(cur.pos + len, "trailing bytes after payload"));
    }
    let pixels = payload.to_vec();
    Ok(if channels == 3 {
        Raster::Color(FundusImage { width, height, pixels })
    } else {
        Raster::Gray(GrayImage { width, height, pixels })
    })
}

fn encode(magic: &str, width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn encode_ppm(image: &FundusImage) -> Vec<u8> {
    encode("P6", image.width, image.height, &image.pixels)
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    encode("P5", image.width, image.height, &image.pixels)
}

pub fn encode_raster(raster: &Raster) -> Vec<u8> {
    match raster {
        Raster::Color(img) => encode_ppm(img),
        Raster::Gray(img) => encode_pgm(img),
    }
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    decode(&std::fs::read(path)?)
}

pub fn write_raster(raster: &Raster, path: &Path) -> Result<()> {
    std::fs::write(path, encode_raster(raster))?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<FundusImage> {
    match read_raster(path)? {
        Raster::Color(img) => Ok(img),
        Raster::Gray(_) => Err(Error::parse(0, format!("{} is a P5 file, expected P6", path.display()))),
    }
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    match read_raster(path)? {
        Raster::Gray(img) => Ok(img),
        Raster::Color(_) => Err(Error::parse(0, format!("{} is a P6 file, expected P5", path.display()))),
    }
}

/// Reads a P5 mask; also returns how many pixels had to be snapped to the
/// nearest gray code.
pub fn read_mask(path: &Path) -> Result<(SegmentationMask, usize)> {
    Ok(decode_mask(&read_pgm(path)?))
}

pub fn write_ppm(image: &FundusImage, path: &Path) -> Result<()> {
    std::fs::write(path, encode_ppm(image))?;
    Ok(())
}

pub fn write_mask(mask: &SegmentationMask, path: &Path) -> Result<()> {
    std::fs::write(path, encode_pgm(&encode_mask(mask)))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_known_p6() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30]);
        let Raster::Color(img) = decode(&bytes).unwrap() else {
            panic!("expected color")
        };
        assert_eq!((img.width, img.height), (2, 2));
        assert_eq!(img.get(0, 0), [255, 0, 0]);
        assert_eq!(img.get(1, 0), [0, 255, 0]);
        assert_eq!(img.get(0, 1), [0, 0, 255]);
        assert_eq!(img.get(1, 1), [10, 20, 30]);
        assert_eq!(encode_raster(&Raster::Color(img)), bytes);
    }

    #[test]
    fn accepts_comments_and_loose_whitespace() {
        let bytes = b"P5 # comment\n  3\t1 # more\n255\n\x01\x02\x03";
        let Raster::Gray(img) = decode(bytes).unwrap() else {
            panic!("expected gray")
        };
        assert_eq!(img.pixels, vec![1, 2, 3]);
    }

    #[test]
    fn error_offsets() {
        let cases: [(&[u8], usize); 6] = [
            (b"P3\n1 1\n255\n\0", 0),
            (b"P5\n1 x\n255\n\0", 5),
            (b"P5\n1 1\n65535\n\0\0", 7),
            (b"P5\n2 2\n255\n\0\0", 13),
            (b"P5\n1 1\n255\n\0\0", 12),
            (b"P5\n0 1\n255\n", 3),
        ];
        for (bytes, offset) in cases {
            match decode(bytes) {
                Err(Error::Parse { offset: got, .. }) => {
                    assert_eq!(got, offset, "{:?}", String::from_utf8_lossy(bytes))
                }
                other => panic!("expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn mask_file_classes() {
        use super::super::Class;
        let bytes = b"P5\n3 1\n255\n\x00\x80\xff";
        let Raster::Gray(img) = decode(bytes).unwrap() else {
            panic!("expected gray")
        };
        let (mask, snapped) = decode_mask(&img);
        assert_eq!(mask.labels, vec![Class::Cup, Class::Disc, Class::Background]);
        assert_eq!(snapped, 0);
    }
}
