//! The `ETSR` segment-set file format.
//!
//! Little-endian throughout:
//!
//! ```text
//! "ETSR"  version u32 = 1
//! n_segments u32  channels u32  time_points u32  n_classes u32  sample_rate f32
//! channels × (name_len u16, UTF-8 name)
//! n_segments × (label u32, channels·time_points f32, channel-major)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use trm_core::data::{EegSegmentSet, Segment};

use crate::binio::{expect_eof, read_bytes, read_f32, read_magic, read_string, read_u32, to_u32, write_string};
use crate::error::{Error, FormatError, Result};

const MAGIC: &str = "ETSR";
const VERSION: u32 = 1;

pub fn write_segments<W: Write>(w: &mut W, set: &EegSegmentSet) -> Result<(), FormatError> {
    w.write_all(MAGIC.as_bytes())?;
    for v in [
        VERSION,
        to_u32(set.len(), "segment count")?,
        to_u32(set.channels(), "channel count")?,
        to_u32(set.time_points(), "time points")?,
        to_u32(set.n_classes(), "class count")?,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&set.sample_rate_hz().to_le_bytes())?;
    for name in set.channel_names() {
        write_string(w, name, "channel name")?;
    }
    let mut buf = Vec::with_capacity(4 * set.channels() * set.time_points());
    for seg in set.segments() {
        w.write_all(&to_u32(seg.label, "label")?.to_le_bytes())?;
        buf.clear();
        buf.extend(seg.data.iter().flat_map(|v| v.to_le_bytes()));
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Decodes a segment set. Header, labels and payload sizes are validated;
/// bytes after the last segment are rejected.
pub fn read_segments<R: Read>(r: &mut R) -> Result<EegSegmentSet> {
    let (header, segments, names) = read_raw(r)?;
    debug_assert_eq!(segments.len(), header.n_segments);
    Ok(EegSegmentSet::new(
        names,
        header.sample_rate_hz,
        header.n_classes,
        header.time_points,
        segments,
    )?)
}

struct Header {
    n_segments: usize,
    channels: usize,
    time_points: usize,
    n_classes: usize,
    sample_rate_hz: f32,
}

fn read_raw<R: Read>(r: &mut R) -> Result<(Header, Vec<Segment>, Vec<String>), FormatError> {
    read_magic(r, MAGIC)?;
    let version = read_u32(r, "version")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let header = Header {
        n_segments: read_u32(r, "segment count")? as usize,
        channels: read_u32(r, "channel count")? as usize,
        time_points: read_u32(r, "time points")? as usize,
        n_classes: read_u32(r, "class count")? as usize,
        sample_rate_hz: read_f32(r, "sample rate")?,
    };
    let names = (0..header.channels)
        .map(|_| read_string(r, "channel name"))
        .collect::<Result<Vec<_>, _>>()?;
    let payload = 4 * header.channels as u64 * header.time_points as u64;
    let mut segments = Vec::new();
    for _ in 0..header.n_segments {
        let label = read_u32(r, "segment label")? as usize;
        let bytes = read_bytes(r, payload, "segment values")?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        segments.push(Segment { label, data });
    }
    expect_eof(r)?;
    Ok((header, segments, names))
}

pub fn save_segments(set: &EegSegmentSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    write_segments(&mut w, set).map_err(Error::format(path))?;
    w.flush().map_err(Error::io(path))
}

pub fn load_segments(path: &Path) -> Result<EegSegmentSet> {
    let file = File::open(path).map_err(Error::io(path))?;
    read_segments(&mut BufReader::new(file)).map_err(|e| e.at(path))
}
