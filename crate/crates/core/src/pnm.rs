//! Binary netpbm I/O: P6 (8-bit RGB) and P5 (8-bit gray). Masks are P5
//! files holding only {0, 255}. Parse errors report the byte offset.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    /// Skip whitespace and `#` comment lines between header tokens.
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<(usize, &'a [u8])> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos == start {
            None
        } else {
            Some((start, &self.bytes[start..self.pos]))
        }
    }
}

fn parse_dim(path: &Path, parser: &mut Parser, what: &str) -> Result<usize> {
    let (offset, tok) = parser
        .token()
        .ok_or_else(|| Error::parse(path, parser.pos, format!("missing {what}")))?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .ok_or_else(|| Error::parse(path, offset, format!("invalid {what}")))
}

/// Read a P5 or P6 file into an [`Image`] with values scaled to [0, 1].
pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut parser = Parser {
        bytes: &bytes,
        pos: 0,
    };
    let (_, magic) = parser
        .token()
        .ok_or_else(|| Error::parse(path, 0, "empty file"))?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(Error::parse(path, 0, "expected P5 or P6 magic")),
    };
    let width = parse_dim(path, &mut parser, "width")?;
    let height = parse_dim(path, &mut parser, "height")?;
    let (maxval_off, maxval_tok) = parser
        .token()
        .ok_or_else(|| Error::parse(path, parser.pos, "missing maxval"))?;
    if maxval_tok != b"255" {
        return Err(Error::parse(path, maxval_off, "maxval must be 255"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if parser.pos >= bytes.len() || !bytes[parser.pos].is_ascii_whitespace() {
        return Err(Error::parse(path, parser.pos, "missing payload separator"));
    }
    parser.pos += 1;
    let expected = width * height * channels;
    let payload = &bytes[parser.pos..];
    if payload.len() < expected {
        return Err(Error::parse(
            path,
            bytes.len(),
            format!(
                "truncated payload: expected {expected} bytes, found {}",
                payload.len()
            ),
        ));
    }
    if payload.len() > expected {
        return Err(Error::parse(
            path,
            parser.pos + expected,
            format!(
                "trailing bytes after payload: expected {expected}, found {}",
                payload.len()
            ),
        ));
    }
    let data = payload.iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Image {
        width,
        height,
        channels,
        data,
    })
}

/// Write an [`Image`] as P5 (1 channel) or P6 (3 channels). Values are
/// clamped to [0, 1] and quantized with round-half-up to 8 bits.
/// `comments` become `#` lines between the magic and the dimensions.
pub fn write_image(path: &Path, image: &Image, comments: &[&str]) -> Result<()> {
    let magic = match image.channels {
        1 => "P5",
        3 => "P6",
        c => panic!("write_image: unsupported channel count {c}"),
    };
    let mut out = Vec::with_capacity(image.data.len() + 64);
    out.extend_from_slice(magic.as_bytes());
    out.push(b'\n');
    for c in comments {
        debug_assert!(!c.contains('\n'));
        out.extend_from_slice(b"# ");
        out.extend_from_slice(c.as_bytes());
        out.push(b'\n');
    }
    out.extend_from_slice(format!("{} {}\n255\n", image.width, image.height).as_bytes());
    for &v in &image.data {
        out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Write a binary mask (0/1 per pixel) as a {0,255} P5 file.
pub fn write_mask(path: &Path, bits: &[u8], width: usize, height: usize) -> Result<()> {
    assert_eq!(bits.len(), width * height, "write_mask: size mismatch");
    let image = Image {
        width,
        height,
        channels: 1,
        data: bits.iter().map(|&b| if b != 0 { 1.0 } else { 0.0 }).collect(),
    };
    write_image(path, &image, &[])
}

/// Read a P5 mask; values >= 128 count as foreground.
pub fn read_mask(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    let image = read_image(path)?;
    if image.channels != 1 {
        return Err(Error::parse(path, 0, "mask must be a P5 grayscale file"));
    }
    let bits = image
        .data
        .iter()
        .map(|&v| if v >= 0.5 { 1 } else { 0 })
        .collect();
    Ok((bits, image.width, image.height))
}
