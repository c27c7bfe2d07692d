//! Tensor and mask serialization.
//!
//! The `FLD` tensor file is a one-line JSON header
//! `{"dims":[C,H,W],"dtype":"f64","order":"row-major"}` terminated by LF,
//! followed immediately by `C*H*W` little-endian IEEE-754 float64 values.
//! Writing then reading a stack reproduces it bit for bit.
//!
//! Single-channel binary masks are also accepted as PGM (P2 ASCII or P5
//! binary, maxval up to 255); when read as a mask, values above 127 map to 1.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field2D;

#[derive(Serialize, Deserialize)]
struct FldHeader {
    dims: [usize; 3],
    dtype: String,
    order: String,
}

const MAX_HEADER_LEN: usize = 4096;

/// Writes a stack of equally sized fields in the FLD format.
pub fn write_fld<W: Write>(mut out: W, stack: &[Field2D]) -> Result<()> {
    if stack.is_empty() {
        return Err(Error::dim("cannot serialize an empty stack"));
    }
    let (h, w) = stack[0].dims();
    for f in stack {
        f.same_dims(&stack[0], "stack layers")?;
    }
    let header = FldHeader {
        dims: [stack.len(), h, w],
        dtype: "f64".into(),
        order: "row-major".into(),
    };
    let line = serde_json::to_string(&header).expect("header serialization cannot fail");
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")?;
    for f in stack {
        for v in f.values() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_fld_file(path: impl AsRef<Path>, stack: &[Field2D]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_fld(&mut w, stack)?;
    w.flush()?;
    Ok(())
}

/// Reads an FLD stack, rejecting malformed headers, truncated payloads and
/// trailing bytes with the byte offset of the problem.
pub fn read_fld<R: Read>(mut input: R) -> Result<Vec<Field2D>> {
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        match input.read(&mut byte)? {
            0 => {
                return Err(Error::format(
                    header.len(),
                    "end of input before header newline",
                ))
            }
            _ => {
                if byte[0] == b'\n' {
                    break;
                }
                header.push(byte[0]);
                if header.len() > MAX_HEADER_LEN {
                    return Err(Error::format(MAX_HEADER_LEN, "header line too long"));
                }
            }
        }
    }
    let parsed: FldHeader = serde_json::from_slice(&header)
        .map_err(|e| Error::format(0, format!("bad header JSON: {e}")))?;
    let [c, h, w] = parsed.dims;
    if parsed.dtype != "f64" {
        return Err(Error::format(0, format!("unknown dtype {:?}", parsed.dtype)));
    }
    if parsed.order != "row-major" {
        return Err(Error::format(0, format!("unknown order {:?}", parsed.order)));
    }
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::format(
            0,
            format!("dims must be positive, got [{c},{h},{w}]"),
        ));
    }
    let payload_start = header.len() + 1;
    let count = c
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .ok_or_else(|| Error::format(0, "dims overflow"))?;
    let mut payload = vec![0u8; count * 8];
    let mut filled = 0;
    while filled < payload.len() {
        let n = input.read(&mut payload[filled..])?;
        if n == 0 {
            return Err(Error::format(
                payload_start + filled,
                format!(
                    "truncated payload: expected {} bytes, got {filled}",
                    payload.len()
                ),
            ));
        }
        filled += n;
    }
    if input.read(&mut byte)? != 0 {
        return Err(Error::format(
            payload_start + payload.len(),
            "trailing bytes after payload",
        ));
    }
    let mut stack = Vec::with_capacity(c);
    for ch in 0..c {
        let mut values = Vec::with_capacity(h * w);
        for p in 0..h * w {
            let off = (ch * h * w + p) * 8;
            let bits: [u8; 8] = payload[off..off + 8].try_into().unwrap();
            values.push(f64::from_le_bytes(bits));
        }
        stack.push(Field2D::new(h, w, values)?);
    }
    Ok(stack)
}

pub fn read_fld_file(path: impl AsRef<Path>) -> Result<Vec<Field2D>> {
    read_fld(BufReader::new(File::open(path)?))
}

/// Writes a field with values in `[0, 1]` as a binary (P5) PGM, scaled to
/// 0-255 and rounded to nearest.
pub fn write_pgm<W: Write>(mut out: W, field: &Field2D) -> Result<()> {
    let (h, w) = field.dims();
    write!(out, "P5\n{w} {h}\n255\n")?;
    let bytes: Vec<u8> = field
        .values()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    Ok(())
}

pub fn write_pgm_file(path: impl AsRef<Path>, field: &Field2D) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pgm(&mut w, field)?;
    w.flush()?;
    Ok(())
}

/// Reads a P2 or P5 PGM into a field of raw gray values (0..=maxval).
pub fn read_pgm<R: Read>(mut input: R) -> Result<Field2D> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;

    fn skip_ws(bytes: &[u8], pos: &mut usize) {
        while *pos < bytes.len() {
            match bytes[*pos] {
                b' ' | b'\t' | b'\r' | b'\n' => *pos += 1,
                b'#' => {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn token(bytes: &[u8], pos: &mut usize) -> Result<usize> {
        skip_ws(bytes, pos);
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if *pos == start {
            return Err(Error::format(start, "expected an integer"));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .unwrap()
            .parse()
            .map_err(|e| Error::format(start, format!("bad integer: {e}")))
    }

    if bytes.len() < 2 || bytes[0] != b'P' || (bytes[1] != b'2' && bytes[1] != b'5') {
        return Err(Error::format(0, "not a P2/P5 PGM"));
    }
    let binary = bytes[1] == b'5';
    let mut pos = 2usize;
    let w = token(&bytes, &mut pos)?;
    let h = token(&bytes, &mut pos)?;
    let maxval = token(&bytes, &mut pos)?;
    if w == 0 || h == 0 {
        return Err(Error::format(pos, "PGM dimensions must be positive"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(pos, format!("unsupported maxval {maxval}")));
    }
    let mut values = Vec::with_capacity(h * w);
    if binary {
        pos += 1; // single whitespace byte after maxval
        if bytes.len() < pos + h * w {
            return Err(Error::format(
                bytes.len(),
                format!("truncated P5 payload: expected {} bytes", h * w),
            ));
        }
        values.extend(bytes[pos..pos + h * w].iter().map(|&b| b as f64));
    } else {
        for _ in 0..h * w {
            values.push(token(&bytes, &mut pos)? as f64);
        }
    }
    if values.iter().any(|&v| v > maxval as f64) {
        return Err(Error::format(pos, "sample exceeds declared maxval"));
    }
    Field2D::new(h, w, values)
}

pub fn read_pgm_file(path: impl AsRef<Path>) -> Result<Field2D> {
    read_pgm(BufReader::new(File::open(path)?))
}

/// Reads a PGM as a binary mask: gray values above 127 become 1, others 0.
pub fn read_pgm_mask<R: Read>(input: R) -> Result<Field2D> {
    Ok(read_pgm(input)?.map(|v| if v > 127.0 { 1.0 } else { 0.0 }))
}

pub fn read_pgm_mask_file(path: impl AsRef<Path>) -> Result<Field2D> {
    read_pgm_mask(BufReader::new(File::open(path)?))
}
