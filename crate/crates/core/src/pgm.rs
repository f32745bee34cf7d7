//! Binary greymap (P5, maxval 255) reading and writing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// An 8-bit greyscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8], name: &str) -> Result<Self> {
        let bad = |what: &str| Error::Format(format!("{name}: {what}"));
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated PGM header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII PGM header"))?);
        }
        if fields[0] != "P5" {
            return Err(bad("not a binary PGM (P5)"));
        }
        let number = |s: &str| s.parse::<usize>().map_err(|_| bad("malformed PGM header number"));
        let (width, height, maxval) = (number(fields[1])?, number(fields[2])?, number(fields[3])?);
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        let data = bytes.get(pos + 1..).unwrap_or(&[]);
        if data.len() != width * height {
            return Err(bad(&format!(
                "expected {} raster bytes, found {}",
                width * height,
                data.len()
            )));
        }
        GrayImage::new(width, height, data.to_vec()).map_err(|_| bad("empty image"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, &path.display().to_string())
    }
}

/// Maps `p` in `[0, 1]` to `round(255 p)`.
pub fn quantize(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let img = GrayImage::new(3, 2, vec![0, 1, 2, 253, 254, 255]).unwrap();
        assert_eq!(GrayImage::decode(&img.encode(), "t").unwrap(), img);
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P5\n# made by hand\n2 1\n255\n\x07\x08";
        let img = GrayImage::decode(bytes, "t").unwrap();
        assert_eq!(img.pixels, vec![7, 8]);
    }

    #[test]
    fn short_raster_is_rejected() {
        let err = GrayImage::decode(b"P5\n2 2\n255\n\x00", "short.pgm").unwrap_err();
        assert!(matches!(err, Error::Format(m) if m.contains("short.pgm")));
        assert!(GrayImage::decode(b"P2\n1 1\n255\n0", "t").is_err());
    }

    #[test]
    fn quantize_endpoints() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.5), 128);
    }
}
