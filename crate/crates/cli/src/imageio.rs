//! Image ingestion and emission: binary PGM (P5) both ways, PNG input only,
//! area-averaged resizing, and display scaling for replay fields.

use std::fs;
use std::io::Write;
use std::path::Path;

use holomux::Grid;

use crate::CliError;

/// Display transfer curve for [`save_intensity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    Linear,
    Sqrt,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Loads an 8-bit grayscale PGM (P5) or PNG as amplitudes in [0, 1].
pub fn load_image(path: &Path) -> Result<Grid, CliError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pgm") => {
            let data = fs::read(path).map_err(|e| io_err(path, e))?;
            parse_pgm(&data).map_err(|e| io_err(path, e))
        }
        Some("png") => {
            let img = image::open(path).map_err(|e| io_err(path, e))?.to_luma8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            let values = img.into_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
            Grid::new(w, h, values).map_err(|e| io_err(path, e))
        }
        _ => Err(CliError::Io(format!(
            "{}: unsupported format (expected .pgm or .png)",
            path.display()
        ))),
    }
}

fn parse_pgm(data: &[u8]) -> Result<Grid, String> {
    let mut pos = 0usize;
    let mut token = |data: &[u8]| -> Result<String, String> {
        loop {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
    };

    let magic = token(data)?;
    if magic != "P5" {
        return Err(format!("not a binary PGM (magic {magic:?})"));
    }
    let width: usize = token(data)?.parse().map_err(|_| "bad width".to_string())?;
    let height: usize = token(data)?.parse().map_err(|_| "bad height".to_string())?;
    let maxval: usize = token(data)?.parse().map_err(|_| "bad maxval".to_string())?;
    if width == 0 || height == 0 {
        return Err("zero dimension".into());
    }
    if !(1..=255).contains(&maxval) {
        return Err(format!("unsupported maxval {maxval} (need 1..=255)"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err("missing raster separator".into());
    }
    pos += 1;
    let raster = &data[pos..];
    let expected = width * height;
    if raster.len() < expected {
        return Err(format!(
            "raster has {} bytes, needs {expected}",
            raster.len()
        ));
    }
    let scale = 1.0 / maxval as f64;
    let values = raster[..expected]
        .iter()
        .map(|&b| f64::from(b) * scale)
        .collect();
    Grid::new(width, height, values).map_err(|e| e.to_string())
}

/// Writes raw 8-bit samples as a binary PGM (P5, maxval 255).
pub fn write_pgm(path: &Path, width: usize, height: usize, bytes: &[u8]) -> Result<(), CliError> {
    debug_assert_eq!(bytes.len(), width * height);
    let mut out = Vec::with_capacity(bytes.len() + 32);
    write!(out, "P5\n{width} {height}\n255\n").expect("vec write");
    out.extend_from_slice(bytes);
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Writes a non-negative grid as an 8-bit PGM. The display max excludes the
/// zero-order pixel at (0, 0), whose value would otherwise swamp the 8-bit
/// range; values above the max clip to 255. An all-zero max renders black.
pub fn save_intensity(
    path: &Path,
    grid: &Grid,
    scaling: Scaling,
) -> Result<(), CliError> {
    let max = grid
        .values()
        .iter()
        .skip(1)
        .fold(0.0f64, |a, &b| a.max(b));
    let bytes: Vec<u8> = grid
        .values()
        .iter()
        .map(|&v| {
            if max <= 0.0 {
                return 0;
            }
            let unit = match scaling {
                Scaling::Linear => v / max,
                Scaling::Sqrt => (v / max).sqrt(),
            };
            (unit * 255.0).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    write_pgm(path, grid.width(), grid.height(), &bytes)
}

/// Area-averaged resample to `dw x dh`: each output pixel is the mean of
/// the exact source rectangle it covers, so constant images stay constant
/// and total energy is preserved up to rounding.
pub fn resize_area(grid: &Grid, dw: usize, dh: usize) -> Result<Grid, CliError> {
    let (sw, sh) = (grid.width(), grid.height());
    if dw == 0 || dh == 0 {
        return Err(CliError::Config("resize target has a zero dimension".into()));
    }
    let mut rows = vec![0.0f64; dw * sh];
    let mut dst_row = vec![0.0f64; dw];
    for y in 0..sh {
        resample_line(&grid.values()[y * sw..(y + 1) * sw], &mut dst_row);
        rows[y * dw..(y + 1) * dw].copy_from_slice(&dst_row);
    }
    let mut out = vec![0.0f64; dw * dh];
    let mut col_in = vec![0.0f64; sh];
    let mut col_out = vec![0.0f64; dh];
    for x in 0..dw {
        for y in 0..sh {
            col_in[y] = rows[y * dw + x];
        }
        resample_line(&col_in, &mut col_out);
        for y in 0..dh {
            out[y * dw + x] = col_out[y];
        }
    }
    Grid::new(dw, dh, out).map_err(|e| CliError::Config(e.to_string()))
}

fn resample_line(src: &[f64], dst: &mut [f64]) {
    let scale = src.len() as f64 / dst.len() as f64;
    for (i, out) in dst.iter_mut().enumerate() {
        let lo = i as f64 * scale;
        let hi = (i + 1) as f64 * scale;
        let first = (lo.floor() as usize).min(src.len() - 1);
        let last = (hi.ceil() as usize).min(src.len());
        let mut acc = 0.0;
        for (k, &v) in src.iter().enumerate().take(last).skip(first) {
            let a = (k as f64).max(lo);
            let b = ((k + 1) as f64).min(hi);
            if b > a {
                acc += v * (b - a);
            }
        }
        *out = acc / (hi - lo);
    }
}
