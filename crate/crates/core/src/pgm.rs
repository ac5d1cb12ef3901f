//! Binary 8-bit portable graymaps (P5).
//!
//! Canvases use maxval 254 so that the gray level 0.5 is stored exactly as
//! 127. Response maps are stored scaled to their own maximum; the scale goes
//! into the accompanying manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{BosError, Result};
use crate::grid::Grid;
use crate::stimulus::Canvas;

pub const CANVAS_MAXVAL: u16 = 254;

fn encode(grid: &Grid, maxval: u16, to_level: impl Fn(f64) -> f64) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", grid.width(), grid.height(), maxval).into_bytes();
    out.extend(grid.data().iter().map(|&v| (to_level(v) * maxval as f64).round().clamp(0.0, maxval as f64) as u8));
    out
}

pub fn write_canvas(path: &Path, canvas: &Canvas) -> Result<()> {
    write_bytes(path, &encode(&canvas.luminance, CANVAS_MAXVAL, |v| v))
}

/// Writes `grid / scale` (clamped to [0, 1]) and returns the scale used:
/// the map maximum, or 1 for an all-zero map.
pub fn write_scaled(path: &Path, grid: &Grid) -> Result<f64> {
    let max = grid.max();
    let scale = if max > 0.0 { max } else { 1.0 };
    write_bytes(path, &encode(grid, 255, |v| v / scale))?;
    Ok(scale)
}

/// Signed map: `0` is stored as mid-gray, `±scale` as 255 / 0, with scale the
/// largest magnitude. Returns the scale.
pub fn write_signed(path: &Path, grid: &Grid) -> Result<f64> {
    let max = grid.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if max > 0.0 { max } else { 1.0 };
    write_bytes(path, &encode(grid, 255, |v| 0.5 + 0.5 * v / scale))?;
    Ok(scale)
}

/// Small integer codes written as raw levels.
pub fn write_codes(path: &Path, width: usize, height: usize, codes: &[u8]) -> Result<()> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(codes);
    write_bytes(path, &out)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

fn bad(path: &Path, msg: &str) -> BosError {
    BosError::Graymap {
        path: PathBuf::from(path),
        msg: msg.to_string(),
    }
}

/// Reads a P5 graymap into `[0, 1]` levels (`value / maxval`).
pub fn read_graymap(path: &Path) -> Result<Grid> {
    let bytes = fs::read(path)?;
    let mut fields = Vec::with_capacity(4);
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad(path, "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(bad(path, "not a binary graymap (P5)"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(path, "bad header number"));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad(path, "only 8-bit graymaps are supported"));
    }
    let data = &bytes[i + 1..];
    if data.len() != w * h {
        return Err(bad(path, "pixel data length does not match header"));
    }
    Ok(Grid::from_vec(w, h, data.iter().map(|&b| b as f64 / maxval as f64).collect()))
}

pub fn read_canvas(path: &Path, px_per_deg: f64) -> Result<Canvas> {
    Canvas::from_grid(read_graymap(path)?, px_per_deg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::{make_square, StimulusSpec, GRAY};

    #[test]
    fn canvas_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let spec = StimulusSpec {
            ground_lum: GRAY,
            ..StimulusSpec::default()
        };
        let c = make_square(&spec).unwrap();
        let p = dir.path().join("c.pgm");
        write_canvas(&p, &c).unwrap();
        let back = read_canvas(&p, 32.0).unwrap();
        assert_eq!(back.luminance, c.luminance);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pgm");
        fs::write(&p, b"P2\n1 1\n255\n0").unwrap();
        assert!(read_graymap(&p).is_err());
        fs::write(&p, b"P5\n2 2\n255\n\x00").unwrap();
        assert!(read_graymap(&p).is_err());
    }
}
