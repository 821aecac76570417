//! Score maps as binary 16-bit greymaps (`P5`, maxval 65535, big-endian
//! samples, row-major). A sample `s` decodes to the score `s / 65535`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mask::ScoreMap;

pub const MAXVAL: u32 = 65535;

pub fn quantize(value: f64) -> u16 {
    (value.clamp(0.0, 1.0) * f64::from(MAXVAL)).round() as u16
}

pub fn dequantize(sample: u16) -> f64 {
    f64::from(sample) / f64::from(MAXVAL)
}

pub fn encode_score_map(map: &ScoreMap) -> Vec<u8> {
    let header = format!("P5\n{} {}\n{}\n", map.width(), map.height(), MAXVAL);
    let mut out = Vec::with_capacity(header.len() + map.values().len() * 2);
    out.extend_from_slice(header.as_bytes());
    for &v in map.values() {
        out.extend_from_slice(&quantize(v).to_be_bytes());
    }
    out
}

pub fn save_score_map(map: &ScoreMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_score_map(map)).map_err(|e| Error::io(path, e))
}

pub fn load_score_map(path: impl AsRef<Path>) -> Result<ScoreMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_score_map(&bytes, path)
}

/// Parses a `P5` greymap; `path` is only used in error messages.
pub fn decode_score_map(bytes: &[u8], path: &Path) -> Result<ScoreMap> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::BadMagic { path: path.into() });
    }
    let mut header = HeaderReader { bytes, pos: 2, path };
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(header.invalid("missing whitespace after maxval")),
    }
    if maxval != MAXVAL {
        return Err(Error::MaxvalUnsupported {
            path: path.into(),
            maxval,
        });
    }
    if width == 0 || height == 0 {
        return Err(header.invalid("zero image dimension"));
    }
    let data = &bytes[header.pos..];
    let expected = width as usize * height as usize * 2;
    if data.len() < expected {
        return Err(Error::TruncatedData {
            path: path.into(),
            expected,
            found: data.len(),
        });
    }
    if data.len() > expected {
        return Err(header.invalid(&format!("{} trailing bytes after raster", data.len() - expected)));
    }
    let values = data
        .chunks_exact(2)
        .map(|c| dequantize(u16::from_be_bytes([c[0], c[1]])))
        .collect();
    ScoreMap::new(width, height, values)
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl HeaderReader<'_> {
    fn invalid(&self, message: &str) -> Error {
        Error::InvalidFile {
            path: self.path.into(),
            message: format!("greymap header: {message}"),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let start = self.pos;
        self.skip_space_and_comments();
        if self.pos >= self.bytes.len() {
            return Err(Error::TruncatedData {
                path: self.path.into(),
                expected: self.pos + 1,
                found: self.bytes.len(),
            });
        }
        if self.pos == start {
            return Err(self.invalid(&format!("expected whitespace before {what}")));
        }
        let digits_start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return Err(self.invalid(&format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[digits_start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.invalid(&format!("{what} out of range")))
    }
}
