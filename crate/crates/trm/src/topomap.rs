//! Flat binary dump of a topographic tensor.
//!
//! Header of four little-endian u32 — height, width, time points, reserved
//! (written as 0) — followed by `height·width·time_points` little-endian f32
//! values with the time index fastest: `value[(row·width + col)·tp + t]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use trm_core::TopographicTensor;

use crate::binio::{expect_eof, read_bytes, read_u32, to_u32};
use crate::error::{Error, FormatError, Result};

pub fn write_topographic<W: Write>(w: &mut W, map: &TopographicTensor<f32>) -> Result<(), FormatError> {
    for v in [
        to_u32(map.height(), "height")?,
        to_u32(map.width(), "width")?,
        to_u32(map.time_points(), "time points")?,
        0,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    let bytes: Vec<u8> = map.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_topographic<R: Read>(r: &mut R) -> Result<TopographicTensor<f32>, FormatError> {
    let h = read_u32(r, "height")? as usize;
    let w = read_u32(r, "width")? as usize;
    let tp = read_u32(r, "time points")? as usize;
    read_u32(r, "reserved")?;
    let n = (h as u64)
        .checked_mul(w as u64)
        .and_then(|v| v.checked_mul(tp as u64))
        .and_then(|v| v.checked_mul(4))
        .ok_or(FormatError::TooLarge("map size"))?;
    let values = read_bytes(r, n, "map values")?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    expect_eof(r)?;
    Ok(TopographicTensor::from_vec(h, w, tp, values).expect("value count follows the header"))
}

pub fn save_topographic(map: &TopographicTensor<f32>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    write_topographic(&mut w, map).map_err(Error::format(path))?;
    w.flush().map_err(Error::io(path))
}

pub fn load_topographic(path: &Path) -> Result<TopographicTensor<f32>> {
    let file = File::open(path).map_err(Error::io(path))?;
    read_topographic(&mut BufReader::new(file)).map_err(Error::format(path))
}
