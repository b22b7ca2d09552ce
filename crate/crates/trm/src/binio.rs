//! Little-endian primitives shared by the binary formats.

use std::io::{self, Read, Write};

use crate::error::FormatError;

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &'static str) -> Result<(), FormatError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FormatError::Truncated(what),
        _ => FormatError::Io(e),
    })
}

pub(crate) fn read_magic<R: Read>(r: &mut R, expected: &'static str) -> Result<(), FormatError> {
    let mut found = [0u8; 4];
    read_exact(r, &mut found, "magic")?;
    if found != expected.as_bytes() {
        return Err(FormatError::BadMagic { expected, found });
    }
    Ok(())
}

macro_rules! reader {
    ($name:ident, $ty:ty) => {
        pub(crate) fn $name<R: Read>(r: &mut R, what: &'static str) -> Result<$ty, FormatError> {
            let mut b = [0u8; size_of::<$ty>()];
            read_exact(r, &mut b, what)?;
            Ok(<$ty>::from_le_bytes(b))
        }
    };
}

reader!(read_u8, u8);
reader!(read_u16, u16);
reader!(read_u32, u32);
reader!(read_f32, f32);

/// Reads exactly `len` bytes without trusting `len` for the allocation size.
pub(crate) fn read_bytes<R: Read>(r: &mut R, len: u64, what: &'static str) -> Result<Vec<u8>, FormatError> {
    let mut buf = Vec::new();
    r.take(len).read_to_end(&mut buf)?;
    if (buf.len() as u64) < len {
        return Err(FormatError::Truncated(what));
    }
    Ok(buf)
}

pub(crate) fn read_string<R: Read>(r: &mut R, what: &'static str) -> Result<String, FormatError> {
    let len = read_u16(r, what)?;
    let bytes = read_bytes(r, u64::from(len), what)?;
    String::from_utf8(bytes).map_err(|_| FormatError::InvalidUtf8(what))
}

pub(crate) fn write_string<W: Write>(w: &mut W, s: &str, what: &'static str) -> Result<(), FormatError> {
    let len = u16::try_from(s.len()).map_err(|_| FormatError::TooLarge(what))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn to_u32(v: usize, what: &'static str) -> Result<u32, FormatError> {
    u32::try_from(v).map_err(|_| FormatError::TooLarge(what))
}

/// Fails unless the reader is exhausted.
pub(crate) fn expect_eof<R: Read>(r: &mut R) -> Result<(), FormatError> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(FormatError::TrailingBytes),
    }
}
