//! Binary greyscale PGM (P5) export.

use std::io::{self, Write};

use depthvar_core::grid::{BinaryMap, ScalarMap};

/// Min-max normalizes `map` to 0..=255; a constant map becomes all zeros.
pub fn to_bytes(map: &ScalarMap) -> Vec<u8> {
    let (lo, hi) = (map.min(), map.max());
    let span = hi - lo;
    map.as_slice()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect()
}

pub fn write_scalar(out: &mut impl Write, map: &ScalarMap) -> io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", map.width(), map.height())?;
    out.write_all(&to_bytes(map))
}

pub fn write_binary(out: &mut impl Write, map: &BinaryMap) -> io::Result<()> {
    write_scalar(out, &map.to_scalar())
}

pub fn save(path: &std::path::Path, map: &ScalarMap) -> io::Result<()> {
    let mut file = io::BufWriter::new(std::fs::File::create(path)?);
    write_scalar(&mut file, map)?;
    file.flush()
}
