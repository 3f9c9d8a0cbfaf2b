//! Bit-exact file formats for the map types.
//!
//! - `LabelMap` / `ClassMap`: binary PGM `P5`, maxval 65535, big-endian u16.
//! - `RGBImage`: binary PPM `P6`, maxval 255.
//! - `ProbMap` / `ClassProbMap`: FMAP container: magic `FMAP`, u32-LE
//!   height, width, channels, then f32-LE samples, row-major channel-last.
//!
//! Writers emit canonical bytes, so identical maps produce identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ClassMap, ClassProbMap, LabelMap, MapError, ProbMap, RGBImage};

const FMAP_MAGIC: &[u8; 4] = b"FMAP";
/// Upper bound on total samples in any container we accept.
const MAX_ELEMENTS: u64 = 1 << 28;

fn read_exact_or_truncated(
    reader: &mut impl Read,
    buf: &mut [u8],
    already: usize,
) -> Result<(), MapError> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = reader.read(&mut buf[filled..])?;
        if n == 0 {
            return Err(MapError::Truncated {
                expected: already + buf.len(),
                found: already + filled,
            });
        }
        filled += n;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// PNM (PGM/PPM) helpers
// ---------------------------------------------------------------------------

/// Reads PNM header tokens (width, height, maxval) after the magic,
/// honoring `#` comments and arbitrary whitespace.
fn read_pnm_header(reader: &mut impl Read) -> Result<(usize, usize, u32), MapError> {
    let mut fields = [0u64; 3];
    let mut field = 0;
    let mut current = String::new();
    let mut in_comment = false;
    let mut byte = [0u8; 1];
    loop {
        let n = reader.read(&mut byte)?;
        if n == 0 {
            return Err(MapError::BadHeader("unexpected end of header".into()));
        }
        let c = byte[0];
        if in_comment {
            if c == b'\n' {
                in_comment = false;
            }
            continue;
        }
        if c == b'#' {
            in_comment = true;
            continue;
        }
        if c.is_ascii_whitespace() {
            if !current.is_empty() {
                fields[field] = current
                    .parse::<u64>()
                    .map_err(|_| MapError::BadHeader(format!("non-numeric token {current:?}")))?;
                field += 1;
                current.clear();
                if field == 3 {
                    // the single whitespace after maxval ends the header
                    break;
                }
            }
            continue;
        }
        if !c.is_ascii_digit() {
            return Err(MapError::BadHeader(format!(
                "unexpected byte 0x{c:02x} in header"
            )));
        }
        current.push(c as char);
    }
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if w == 0 || h == 0 {
        return Err(MapError::BadHeader("zero dimension".into()));
    }
    if w.checked_mul(h).is_none_or(|n| n > MAX_ELEMENTS) {
        return Err(MapError::DimensionOverflow {
            height: h,
            width: w,
            channels: 1,
        });
    }
    if maxval > 65535 {
        return Err(MapError::BadHeader(format!("maxval {maxval} out of range")));
    }
    Ok((w as usize, h as usize, maxval as u32))
}

fn read_magic(reader: &mut impl Read, expected: &'static str) -> Result<(), MapError> {
    let mut got = [0u8; 2];
    read_exact_or_truncated(reader, &mut got, 0).map_err(|_| MapError::BadMagic { expected })?;
    if got != expected.as_bytes()[..2] {
        return Err(MapError::BadMagic { expected });
    }
    Ok(())
}

fn read_u16_payload(reader: &mut impl Read, count: usize) -> Result<Vec<u16>, MapError> {
    let mut bytes = vec![0u8; count * 2];
    read_exact_or_truncated(reader, &mut bytes, 0)?;
    Ok(bytes
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect())
}

fn write_pgm16(
    path: &Path,
    height: usize,
    width: usize,
    samples: impl Iterator<Item = u32>,
) -> Result<(), MapError> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{width} {height}\n65535\n")?;
    for v in samples {
        if v > 65535 {
            return Err(MapError::SampleRange { value: v });
        }
        out.write_all(&(v as u16).to_be_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>), MapError> {
    let mut reader = BufReader::new(File::open(path)?);
    read_magic(&mut reader, "P5")?;
    let (width, height, maxval) = read_pnm_header(&mut reader)?;
    if maxval != 65535 {
        return Err(MapError::BadHeader(format!(
            "expected maxval 65535, found {maxval}"
        )));
    }
    let data = read_u16_payload(&mut reader, width * height)?;
    Ok((height, width, data))
}

/// Writes a `LabelMap` as 16-bit PGM. Ids above 65535 do not fit the format.
pub fn write_label_map(path: impl AsRef<Path>, map: &LabelMap) -> Result<(), MapError> {
    write_pgm16(
        path.as_ref(),
        map.height(),
        map.width(),
        map.data().iter().copied(),
    )
}

pub fn read_label_map(path: impl AsRef<Path>) -> Result<LabelMap, MapError> {
    let (height, width, raw) = read_pgm16(path.as_ref())?;
    LabelMap::new(height, width, raw.into_iter().map(u32::from).collect())
}

pub fn write_class_map(path: impl AsRef<Path>, map: &ClassMap) -> Result<(), MapError> {
    write_pgm16(
        path.as_ref(),
        map.height(),
        map.width(),
        map.data().iter().map(|&v| u32::from(v)),
    )
}

pub fn read_class_map(path: impl AsRef<Path>) -> Result<ClassMap, MapError> {
    let (height, width, raw) = read_pgm16(path.as_ref())?;
    let data = raw
        .into_iter()
        .map(|v| u8::try_from(v).map_err(|_| MapError::SampleRange { value: v.into() }))
        .collect::<Result<Vec<u8>, _>>()?;
    ClassMap::new(height, width, data)
}

pub fn write_rgb_image(path: impl AsRef<Path>, image: &RGBImage) -> Result<(), MapError> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    write!(out, "P6\n{} {}\n255\n", image.width(), image.height())?;
    out.write_all(image.data())?;
    out.flush()?;
    Ok(())
}

pub fn read_rgb_image(path: impl AsRef<Path>) -> Result<RGBImage, MapError> {
    let mut reader = BufReader::new(File::open(path.as_ref())?);
    read_magic(&mut reader, "P6")?;
    let (width, height, maxval) = read_pnm_header(&mut reader)?;
    if maxval != 255 {
        return Err(MapError::BadHeader(format!(
            "expected maxval 255, found {maxval}"
        )));
    }
    let mut data = vec![0u8; width * height * 3];
    read_exact_or_truncated(&mut reader, &mut data, 0)?;
    RGBImage::new(height, width, data)
}

// ---------------------------------------------------------------------------
// FMAP container
// ---------------------------------------------------------------------------

fn write_fmap(
    path: &Path,
    height: usize,
    width: usize,
    channels: usize,
    data: &[f32],
) -> Result<(), MapError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(FMAP_MAGIC)?;
    out.write_all(&(height as u32).to_le_bytes())?;
    out.write_all(&(width as u32).to_le_bytes())?;
    out.write_all(&(channels as u32).to_le_bytes())?;
    for &v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_fmap(path: &Path) -> Result<(usize, usize, usize, Vec<f32>), MapError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_or_truncated(&mut reader, &mut magic, 0)
        .map_err(|_| MapError::BadMagic { expected: "FMAP" })?;
    if &magic != FMAP_MAGIC {
        return Err(MapError::BadMagic { expected: "FMAP" });
    }
    let mut header = [0u8; 12];
    read_exact_or_truncated(&mut reader, &mut header, 4)?;
    let height = u32::from_le_bytes(header[0..4].try_into().unwrap()) as u64;
    let width = u32::from_le_bytes(header[4..8].try_into().unwrap()) as u64;
    let channels = u32::from_le_bytes(header[8..12].try_into().unwrap()) as u64;
    if height == 0 || width == 0 || channels == 0 {
        return Err(MapError::BadHeader("zero dimension".into()));
    }
    let total = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .filter(|&n| n <= MAX_ELEMENTS)
        .ok_or(MapError::DimensionOverflow {
            height,
            width,
            channels,
        })?;
    let mut bytes = vec![0u8; total as usize * 4];
    read_exact_or_truncated(&mut reader, &mut bytes, 16)?;
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((height as usize, width as usize, channels as usize, data))
}

pub fn write_prob_map(path: impl AsRef<Path>, map: &ProbMap) -> Result<(), MapError> {
    write_fmap(path.as_ref(), map.height(), map.width(), 1, map.data())
}

pub fn read_prob_map(path: impl AsRef<Path>) -> Result<ProbMap, MapError> {
    let (height, width, channels, data) = read_fmap(path.as_ref())?;
    if channels != 1 {
        return Err(MapError::BadHeader(format!(
            "expected 1 channel for a probability map, found {channels}"
        )));
    }
    ProbMap::new(height, width, data)
}

pub fn write_class_prob_map(path: impl AsRef<Path>, map: &ClassProbMap) -> Result<(), MapError> {
    write_fmap(
        path.as_ref(),
        map.height(),
        map.width(),
        map.channels(),
        map.data(),
    )
}

pub fn read_class_prob_map(path: impl AsRef<Path>) -> Result<ClassProbMap, MapError> {
    let (height, width, channels, data) = read_fmap(path.as_ref())?;
    ClassProbMap::new(height, width, channels, data)
}
