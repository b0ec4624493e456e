//! Binary (P5) 8-bit PGM reading and writing.

use std::path::Path;

use thiserror::Error;

use crate::imageops::Image;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("not a binary PGM: {0}")]
    BadFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Encodes `img` as P5 with maxval 255; intensities are clamped and rounded.
pub fn encode(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| to_byte(v)));
    out
}

pub fn to_byte(v: f32) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes raw 8-bit pixels, row-major.
pub fn encode_bytes(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn decode(bytes: &[u8]) -> Result<Image, PgmError> {
    let mut pos = 0usize;
    let mut token = || -> Result<String, PgmError> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while let Some(&c) = bytes.get(pos) {
                        pos += 1;
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(PgmError::BadFormat("unexpected end of header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|c| !c.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "P5" {
        return Err(PgmError::BadFormat(format!("magic {magic:?}")));
    }
    let mut num = |what: &str| -> Result<usize, PgmError> {
        let t = token()?;
        t.parse().map_err(|_| PgmError::BadFormat(format!("{what} {t:?}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::BadFormat(format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let end = start + width * height;
    let raster = bytes
        .get(start..end)
        .ok_or_else(|| PgmError::BadFormat("raster shorter than header promises".into()))?;
    let scale = maxval as f32;
    let data = raster.iter().map(|&b| (b as f32 / scale).min(1.0)).collect();
    Ok(Image::new(width, height, data).expect("raster length checked"))
}

pub fn read(path: &Path) -> Result<Image, PgmError> {
    decode(&std::fs::read(path)?)
}

pub fn write(path: &Path, img: &Image) -> Result<(), PgmError> {
    std::fs::write(path, encode(img))?;
    Ok(())
}
