//! Binary PPM (P6, maxval 255).

use std::fs;
use std::path::Path;

use crate::error::{io_err, HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PpmImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl PpmImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(HarnessError::EmptyImage);
        }
        if pixels.len() != width * height {
            return Err(HarnessError::Ppm(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major RGB triples.
    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn channel(&self, c: usize) -> impl Iterator<Item = u8> + '_ {
        self.pixels.iter().map(move |p| p[c])
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let magic = token(bytes, &mut pos)?;
        if magic != b"P6" {
            return Err(HarnessError::Ppm("missing P6 magic".into()));
        }
        let width = number(bytes, &mut pos)?;
        let height = number(bytes, &mut pos)?;
        let maxval = number(bytes, &mut pos)?;
        if maxval != 255 {
            return Err(HarnessError::Ppm(format!("unsupported maxval {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(HarnessError::Ppm("truncated header".into()));
        }
        pos += 1;
        let raster = &bytes[pos..];
        let want = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| HarnessError::Ppm("dimensions overflow".into()))?;
        if raster.len() < want {
            return Err(HarnessError::Ppm(format!(
                "raster has {} bytes, expected {want}",
                raster.len()
            )));
        }
        let pixels = raster[..want].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Self::new(width, height, pixels)
    }

    /// Canonical header `P6\n<w> <h>\n255\n` followed by the raster.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(io_err(path))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(io_err(path))
    }
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    while let Some(&b) = bytes.get(*pos) {
        if b == b'#' {
            while bytes.get(*pos).is_some_and(|&c| c != b'\n') {
                *pos += 1;
            }
        } else if b.is_ascii_whitespace() {
            *pos += 1;
        } else {
            break;
        }
    }
}

fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    skip_space_and_comments(bytes, pos);
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    if start == *pos {
        return Err(HarnessError::Ppm("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let tok = token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| HarnessError::Ppm(format!("bad header field {:?}", String::from_utf8_lossy(tok))))
}
