//! The `TRMC` checkpoint format.
//!
//! Little-endian throughout: `"TRMC"`, version u32 = 1, then one record per
//! trainable tensor followed by one per running statistic, until end of file:
//!
//! ```text
//! name_len u16, UTF-8 name, rank u8, rank × dim u32, values f64
//! ```
//!
//! Values are stored in 64-bit regardless of the model's precision.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use trm_core::nn::Parameterized;
use trm_core::{Real, Tensor};

use crate::binio::{read_bytes, read_exact, read_magic, read_u32, read_u8, to_u32, write_string};
use crate::error::{Error, FormatError, Result};

const MAGIC: &str = "TRMC";
const VERSION: u32 = 1;

/// One named tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

/// Parameters then buffers, in the model's own order.
pub fn model_records<T: Real, M: Parameterized<T>>(model: &mut M) -> Vec<Record> {
    let record = |name: String, t: &Tensor<T>| Record {
        name,
        dims: t.shape().to_vec(),
        values: t.data().iter().map(|v| v.as_f64()).collect(),
    };
    let mut out: Vec<Record> = model
        .params_mut()
        .into_iter()
        .map(|p| record(p.name, p.value))
        .collect();
    out.extend(model.buffers_mut().into_iter().map(|(name, t)| record(name, t)));
    out
}

pub fn write_records<W: Write>(w: &mut W, records: &[Record]) -> Result<(), FormatError> {
    w.write_all(MAGIC.as_bytes())?;
    w.write_all(&VERSION.to_le_bytes())?;
    for rec in records {
        write_string(w, &rec.name, "tensor name")?;
        let rank = u8::try_from(rec.dims.len()).map_err(|_| FormatError::TooLarge("tensor rank"))?;
        w.write_all(&[rank])?;
        for &d in &rec.dims {
            w.write_all(&to_u32(d, "tensor dimension")?.to_le_bytes())?;
        }
        let bytes: Vec<u8> = rec.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_records<R: Read>(r: &mut R) -> Result<Vec<Record>, FormatError> {
    read_magic(r, MAGIC)?;
    let version = read_u32(r, "version")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let mut records = Vec::new();
    loop {
        // a clean end of file is only allowed between records
        let mut len = [0u8; 2];
        match r.read(&mut len[..1])? {
            0 => return Ok(records),
            _ => read_exact(r, &mut len[1..], "tensor name")?,
        }
        let name = read_bytes(r, u64::from(u16::from_le_bytes(len)), "tensor name")?;
        let name = String::from_utf8(name).map_err(|_| FormatError::InvalidUtf8("tensor name"))?;
        let rank = read_u8(r, "tensor rank")?;
        let dims = (0..rank)
            .map(|_| read_u32(r, "tensor dimension").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let count = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64));
        let bytes = count
            .and_then(|c| c.checked_mul(8))
            .ok_or(FormatError::TooLarge("tensor size"))?;
        let values = read_bytes(r, bytes, "tensor values")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        records.push(Record { name, dims, values });
    }
}

/// Copies stored values into `model`. Every parameter and buffer must be
/// present with the same shape, and no record may be left over.
pub fn apply_records<T: Real, M: Parameterized<T>>(model: &mut M, records: Vec<Record>) -> Result<()> {
    let mut by_name: BTreeMap<String, Record> = BTreeMap::new();
    for rec in records {
        if by_name.contains_key(&rec.name) {
            return Err(Error::Invalid(format!("checkpoint repeats tensor {:?}", rec.name)));
        }
        by_name.insert(rec.name.clone(), rec);
    }
    let mut params: Vec<(String, &mut Tensor<T>)> = model.params_mut().into_iter().map(|p| (p.name, p.value)).collect();
    fill(&mut params, &mut by_name)?;
    drop(params);
    let mut buffers = model.buffers_mut();
    fill(&mut buffers, &mut by_name)?;
    if let Some(name) = by_name.keys().next() {
        return Err(Error::Invalid(format!("checkpoint has unexpected tensor {name:?}")));
    }
    Ok(())
}

fn fill<T: Real>(targets: &mut [(String, &mut Tensor<T>)], by_name: &mut BTreeMap<String, Record>) -> Result<()> {
    for (name, tensor) in targets.iter_mut() {
        let rec = by_name
            .remove(name.as_str())
            .ok_or_else(|| Error::Invalid(format!("checkpoint lacks tensor {name:?}")))?;
        if rec.dims != tensor.shape() {
            return Err(Error::Invalid(format!(
                "checkpoint tensor {name:?} has shape {:?}, model expects {:?}",
                rec.dims,
                tensor.shape()
            )));
        }
        for (dst, &v) in tensor.data_mut().iter_mut().zip(&rec.values) {
            *dst = T::cast(v);
        }
    }
    Ok(())
}

pub fn save_checkpoint<T: Real, M: Parameterized<T>>(model: &mut M, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    write_records(&mut w, &model_records(model)).map_err(Error::format(path))?;
    w.flush().map_err(Error::io(path))
}

pub fn load_checkpoint<T: Real, M: Parameterized<T>>(model: &mut M, path: &Path) -> Result<()> {
    let file = File::open(path).map_err(Error::io(path))?;
    let records = read_records(&mut BufReader::new(file)).map_err(Error::format(path))?;
    apply_records(model, records)
}
