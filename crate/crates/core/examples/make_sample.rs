//! Regenerates the bundled sample image from the procedural texture:
//! `cargo run --release --example make_sample` (from the workspace root).

use std::fs::File;
use std::io::{BufWriter, Write};

use holomux::synthesize;

const WIDTH: usize = 512;
const HEIGHT: usize = 512;
const SEED: u64 = 7;
const PATH: &str = "assets/sample512.pgm";

fn main() -> std::io::Result<()> {
    let image = synthesize(WIDTH, HEIGHT, SEED).expect("nonzero size");
    let mut out = BufWriter::new(File::create(PATH)?);
    write!(out, "P5\n{WIDTH} {HEIGHT}\n255\n")?;
    let bytes: Vec<u8> = image
        .values()
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    println!("wrote {PATH} ({WIDTH}x{HEIGHT}, seed {SEED})");
    Ok(())
}
