//! Binary PPM (`P6`, maxval 255) images and tile sheets.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = 3 * (y * self.width + x);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    /// Parses a `P6` file with maxval 255.
    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::new();
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
                return Err(Error::Format {
                    offset: pos as u64,
                    detail: "truncated PPM header".into(),
                });
            }
            fields.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
        }
        let bad = |i: usize, what: &str| Error::Format {
            offset: fields[i].0 as u64,
            detail: format!("bad PPM {what} `{}`", fields[i].1),
        };
        if fields[0].1 != "P6" {
            return Err(bad(0, "magic"));
        }
        let width: usize = fields[1].1.parse().map_err(|_| bad(1, "width"))?;
        let height: usize = fields[2].1.parse().map_err(|_| bad(2, "height"))?;
        if fields[3].1 != "255" {
            return Err(bad(3, "maxval"));
        }
        let start = pos + 1;
        let len = width * height * 3;
        if bytes.len() != start + len {
            return Err(Error::Format {
                offset: bytes.len().min(start + len) as u64,
                detail: format!("expected {len} pixel bytes"),
            });
        }
        Ok(RgbImage {
            width,
            height,
            data: bytes[start..].to_vec(),
        })
    }
}

/// Lays `tiles` (each `h × w × channels`, values in `[0, 1]`) out in a
/// `rows × cols` grid without padding. Single-channel tiles are shown in grey.
pub fn tile_sheet<S: Real>(
    tiles: &[&[S]],
    rows: usize,
    cols: usize,
    h: usize,
    w: usize,
    channels: usize,
) -> Result<RgbImage> {
    if tiles.len() != rows * cols {
        return Err(Error::invalid(format!("{} tiles for a {rows}x{cols} grid", tiles.len())));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::invalid(format!("cannot show {channels}-channel images")));
    }
    let mut img = RgbImage::new(cols * w, rows * h);
    for (t, tile) in tiles.iter().enumerate() {
        if tile.len() != h * w * channels {
            return Err(Error::invalid(format!("tile {t} has {} values", tile.len())));
        }
        let (r, c) = (t / cols, t % cols);
        for y in 0..h {
            for x in 0..w {
                let o = 3 * ((r * h + y) * img.width + c * w + x);
                for k in 0..3 {
                    let v = tile[(y * w + x) * channels + if channels == 1 { 0 } else { k }];
                    img.data[o + k] = (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8;
                }
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let tiles: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0; 2 * 3 * 3]).collect();
        let refs: Vec<&[f64]> = tiles.iter().map(Vec::as_slice).collect();
        let img = tile_sheet(&refs, 2, 3, 2, 3, 3).unwrap();
        assert_eq!((img.width, img.height), (9, 4));
        assert_eq!(img.pixel(8, 3), [255; 3]);
        assert_eq!(img.pixel(0, 0), [0; 3]);
        assert_eq!(RgbImage::from_ppm(&img.to_ppm()).unwrap(), img);
        assert!(img.to_ppm().starts_with(b"P6\n9 4\n255\n"));
    }

    #[test]
    fn rejects_bad_header() {
        assert!(matches!(RgbImage::from_ppm(b"P5\n1 1\n255\n\0"), Err(Error::Format { offset: 0, .. })));
        assert!(RgbImage::from_ppm(b"P6\n1 1\n255\n\0\0").is_err());
    }
}
