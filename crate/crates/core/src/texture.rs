//! Procedural grayscale test image: multi-octave value noise plus a disk
//! and a bar for hard edges, tone-mapped to a photograph-like histogram.
//! Every benchmark that needs "a picture" uses this, so results reproduce
//! from a seed with no binary assets.

use crate::field::{FieldError, Grid};

/// Octave amplitude falloff.
const PERSISTENCE: f64 = 0.55;
/// Maximum number of noise octaves; coarser-than-image octaves are skipped.
const OCTAVES: u32 = 8;
/// Tone exponent applied after normalization; darkens midtones toward the
/// value distribution of a natural photograph.
const GAMMA: f64 = 1.2;

/// splitmix64 finalizer; full-period bijection on u64.
fn scramble(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform lattice value in [0, 1) keyed by octave and lattice coordinates.
fn lattice_value(seed: u64, octave: u32, x: u64, y: u64) -> f64 {
    let key = (u64::from(octave) << 48) | (y << 24) | x;
    let bits = scramble(seed ^ scramble(key));
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

/// Renders the deterministic test image: values in [0, 1], same bytes for
/// the same `(width, height, seed)` on every platform.
pub fn synthesize(width: usize, height: usize, seed: u64) -> Result<Grid, FieldError> {
    if width == 0 || height == 0 {
        return Err(FieldError::ZeroDimension { width, height });
    }
    let mut img = vec![0.0f64; width * height];

    let mut amplitude = 1.0;
    let mut total = 0.0;
    for octave in 0..OCTAVES {
        let cells = 4usize << octave;
        if cells > width.max(height) {
            break;
        }
        for y in 0..height {
            let gy = y as f64 * cells as f64 / height as f64;
            let y0 = gy as u64;
            let fy = gy - y0 as f64;
            for x in 0..width {
                let gx = x as f64 * cells as f64 / width as f64;
                let x0 = gx as u64;
                let fx = gx - x0 as f64;
                let a = lattice_value(seed, octave, x0, y0);
                let b = lattice_value(seed, octave, x0 + 1, y0);
                let c = lattice_value(seed, octave, x0, y0 + 1);
                let d = lattice_value(seed, octave, x0 + 1, y0 + 1);
                let top = a + (b - a) * fx;
                let bottom = c + (d - c) * fx;
                img[y * width + x] += amplitude * (top + (bottom - top) * fy);
            }
        }
        total += amplitude;
        amplitude *= PERSISTENCE;
    }
    for v in &mut img {
        *v /= total;
    }

    // Hard-edged shapes give the spectrum broadband content that smooth
    // noise alone lacks.
    let disk_x = 0.3 * width as f64;
    let disk_y = 0.4 * height as f64;
    let disk_r_sq = (0.18 * width.min(height) as f64).powi(2);
    let bar_x = 0.7 * width as f64;
    let bar_y = 0.55 * height as f64;
    let bar_half_w = 0.04 * width as f64;
    let bar_half_h = 0.25 * height as f64;
    for y in 0..height {
        for x in 0..width {
            let dx = x as f64 - disk_x;
            let dy = y as f64 - disk_y;
            if dx * dx + dy * dy < disk_r_sq {
                img[y * width + x] += 0.25;
            }
            if (x as f64 - bar_x).abs() < bar_half_w && (y as f64 - bar_y).abs() < bar_half_h {
                img[y * width + x] += 0.2;
            }
        }
    }

    let min = img.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = img.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    for v in &mut img {
        *v = ((*v - min) / span).powf(GAMMA);
    }
    Grid::new(width, height, img)
}
