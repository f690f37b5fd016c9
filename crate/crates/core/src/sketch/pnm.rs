//! Minimal Netpbm reader/writer: P2/P5 graymaps and P6 pixmaps, maxval ≤ 255.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pnm {
    Gray { width: usize, height: usize, pixels: Vec<u8> },
    Rgb { width: usize, height: usize, pixels: Vec<[u8; 3]> },
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
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

    fn token(&mut self) -> Result<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse("unexpected end of PNM data".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Parse("non-ASCII PNM token".into()))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        tok.parse().map_err(|_| Error::Parse(format!("bad {what} {tok:?}")))
    }
}

pub fn parse_pnm(bytes: &[u8]) -> Result<Pnm> {
    let mut h = Header { bytes, pos: 0 };
    let magic = h.token()?;
    if !matches!(magic, "P2" | "P5" | "P6") {
        return Err(Error::Parse(format!("unsupported PNM magic {magic:?}")));
    }
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Parse("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!("maxval {maxval} outside 1..=255")));
    }
    let count = width * height;
    let check = |v: usize| -> Result<u8> {
        if v > maxval {
            Err(Error::Parse(format!("sample {v} exceeds maxval {maxval}")))
        } else {
            Ok(v as u8)
        }
    };
    match magic {
        "P2" => {
            let mut pixels = Vec::with_capacity(count);
            for _ in 0..count {
                pixels.push(check(h.number("sample")?)?);
            }
            h.skip_space_and_comments();
            if h.pos != bytes.len() {
                return Err(Error::Parse("trailing data after P2 raster".into()));
            }
            Ok(Pnm::Gray { width, height, pixels })
        }
        _ => {
            // exactly one whitespace byte separates maxval from the raster
            let start = h.pos + 1;
            let channels = if magic == "P5" { 1 } else { 3 };
            let raster = bytes
                .get(start..)
                .filter(|r| r.len() == count * channels)
                .ok_or_else(|| {
                    Error::Parse(format!(
                        "raster holds {} bytes, expected {}",
                        bytes.len().saturating_sub(start),
                        count * channels
                    ))
                })?;
            for &b in raster {
                check(b as usize)?;
            }
            if channels == 1 {
                Ok(Pnm::Gray { width, height, pixels: raster.to_vec() })
            } else {
                let pixels = raster.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
                Ok(Pnm::Rgb { width, height, pixels })
            }
        }
    }
}

pub fn read_pnm(path: &Path) -> Result<Pnm> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pnm(&bytes).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Binary P5 encoding with a single-line `P5 <w> <h> 255` header.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count does not match dimensions");
    let mut out = format!("P5 {width} {height} 255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pgm(width, height, pixels)).map_err(|e| Error::io(path, e))
}

/// ASCII P2 encoding, mainly for hand-editable fixtures.
pub fn encode_pgm_ascii(width: usize, height: usize, pixels: &[u8]) -> String {
    let mut out = format!("P2\n{width} {height}\n255\n");
    for row in pixels.chunks(width) {
        let line: Vec<String> = row.iter().map(u8::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn encode_ppm(width: usize, height: usize, pixels: &[[u8; 3]]) -> Vec<u8> {
    let mut out = format!("P6 {width} {height} 255\n").into_bytes();
    for p in pixels {
        out.extend_from_slice(p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_and_p5_agree() {
        let px = vec![0, 1, 2, 3, 4, 5];
        let a = parse_pnm(encode_pgm_ascii(3, 2, &px).as_bytes()).unwrap();
        let b = parse_pnm(&encode_pgm(3, 2, &px)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, Pnm::Gray { width: 3, height: 2, pixels: px });
    }

    #[test]
    fn header_comments() {
        let src = b"P2\n# a comment\n2 1 # trailing\n9\n3 9\n";
        assert_eq!(parse_pnm(src).unwrap(), Pnm::Gray { width: 2, height: 1, pixels: vec![3, 9] });
    }

    #[test]
    fn header_layout() {
        assert!(encode_pgm(3, 2, &[0; 6]).starts_with(b"P5 3 2 255\n"));
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_pnm(b"P4 1 1 1\n\x00").is_err());
        assert!(parse_pnm(b"P5 2 2 255\n\x00\x00").is_err());
        assert!(parse_pnm(b"P5 1 1 300\n\x00").is_err());
        assert!(parse_pnm(b"P2 1 1 3\n7\n").is_err());
        assert!(parse_pnm(b"P2 2 1 3\n1").is_err());
        assert!(parse_pnm(b"P2 0 1 3\n").is_err());
        assert!(parse_pnm(b"").is_err());
    }

    #[test]
    fn rgb_roundtrip() {
        let px = vec![[1, 2, 3], [250, 0, 9]];
        assert_eq!(
            parse_pnm(&encode_ppm(2, 1, &px)).unwrap(),
            Pnm::Rgb { width: 2, height: 1, pixels: px }
        );
    }
}
