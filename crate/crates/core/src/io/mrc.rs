//! MRC2014, mode 2 (32-bit real) only.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::geometry::{Image, VolumeGrid};
use crate::real::Real;

pub const HEADER_LEN: usize = 1024;
const MAP_STAMP: &[u8; 4] = b"MAP ";
const STAMP_LITTLE: [u8; 4] = [0x44, 0x44, 0x00, 0x00];
const STAMP_BIG: [u8; 4] = [0x11, 0x11, 0x00, 0x00];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrcHeader {
    pub dims: [usize; 3],
    pub mode: i32,
    /// Cell edge lengths in Ångström.
    pub cell: [f32; 3],
    pub dmin: f32,
    pub dmax: f32,
    pub dmean: f32,
    pub rms: f32,
    /// 0 for image stacks, 1 for volumes.
    pub ispg: i32,
    pub extended_len: usize,
    pub endian: Endian,
    pub labels: Vec<String>,
}

/// Values with x fastest, then y, then z (or section index for stacks).
#[derive(Debug, Clone, PartialEq)]
pub struct MrcData {
    pub header: MrcHeader,
    pub dims: [usize; 3],
    pub data: Vec<f32>,
}

fn stats(data: &[f32]) -> (f32, f32, f32, f32) {
    if data.is_empty() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in data {
        let v = v as f64;
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
    }
    let mean = sum / data.len() as f64;
    let var = data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / data.len() as f64;
    (lo as f32, hi as f32, mean as f32, var.sqrt() as f32)
}

fn header_bytes<E: ByteOrder>(dims: [usize; 3], data: &[f32], voxel_size: f32, ispg: i32, stamp: [u8; 4]) -> Vec<u8> {
    let mut h = Vec::with_capacity(HEADER_LEN);
    let (dmin, dmax, dmean, rms) = stats(data);
    for d in dims {
        h.write_i32::<E>(d as i32).unwrap();
    }
    h.write_i32::<E>(2).unwrap();
    for _ in 0..3 {
        h.write_i32::<E>(0).unwrap();
    }
    for d in dims {
        h.write_i32::<E>(d as i32).unwrap();
    }
    for d in dims {
        h.write_f32::<E>(d as f32 * voxel_size).unwrap();
    }
    for _ in 0..3 {
        h.write_f32::<E>(90.0).unwrap();
    }
    for axis in 1..=3 {
        h.write_i32::<E>(axis).unwrap();
    }
    h.write_f32::<E>(dmin).unwrap();
    h.write_f32::<E>(dmax).unwrap();
    h.write_f32::<E>(dmean).unwrap();
    h.write_i32::<E>(ispg).unwrap();
    h.write_i32::<E>(0).unwrap();
    h.resize(104, 0);
    h.extend_from_slice(b"    ");
    h.write_i32::<E>(20140).unwrap();
    h.resize(208, 0);
    h.extend_from_slice(MAP_STAMP);
    h.extend_from_slice(&stamp);
    h.write_f32::<E>(rms).unwrap();
    h.write_i32::<E>(1).unwrap();
    let mut text = [b' '; 80];
    for (t, b) in text.iter_mut().zip(b"deformtomo") {
        *t = *b;
    }
    h.extend_from_slice(&text);
    h.resize(HEADER_LEN, 0);
    h
}

/// Serializes a mode-2 file in the requested byte order.
pub fn encode_mrc(dims: [usize; 3], data: &[f32], voxel_size: f32, ispg: i32, endian: Endian) -> Result<Vec<u8>> {
    if dims.iter().any(|&d| d == 0 || d > i32::MAX as usize) {
        return Err(Error::InvalidArgument(format!("MRC dimensions {dims:?}")));
    }
    if dims.iter().product::<usize>() != data.len() {
        return Err(Error::shape("MRC payload", dims.iter().product::<usize>(), data.len()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("MRC payload contains non-finite values".into()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * data.len());
    match endian {
        Endian::Little => {
            out.extend(header_bytes::<LittleEndian>(dims, data, voxel_size, ispg, STAMP_LITTLE));
            for &v in data {
                out.write_f32::<LittleEndian>(v).unwrap();
            }
        }
        Endian::Big => {
            out.extend(header_bytes::<BigEndian>(dims, data, voxel_size, ispg, STAMP_BIG));
            for &v in data {
                out.write_f32::<BigEndian>(v).unwrap();
            }
        }
    }
    Ok(out)
}

pub fn write_mrc(path: &Path, dims: [usize; 3], data: &[f32], ispg: i32) -> Result<()> {
    let bytes = encode_mrc(dims, data, 1.0, ispg, Endian::Little)?;
    write_atomic(path, |w| w.write_all(&bytes))
}

pub fn write_volume<T: Real>(path: &Path, vol: &VolumeGrid<T>) -> Result<()> {
    let n = vol.n();
    let data: Vec<f32> = vol.data().iter().map(|v| v.as_f64() as f32).collect();
    write_mrc(path, [n, n, n], &data, 1)
}

pub fn write_stack<T: Real>(path: &Path, images: &[Image<T>]) -> Result<()> {
    let Some(first) = images.first() else {
        return Err(Error::InvalidArgument("cannot write an empty stack".into()));
    };
    let n = first.n();
    if let Some(img) = images.iter().find(|i| i.n() != n) {
        return Err(Error::shape("MRC stack image edge", n, img.n()));
    }
    let data: Vec<f32> = images
        .iter()
        .flat_map(|i| i.data().iter().map(|v| v.as_f64() as f32))
        .collect();
    write_mrc(path, [n, n, images.len()], &data, 0)
}

fn parse_header<E: ByteOrder>(h: &[u8], path: &Path, endian: Endian) -> Result<MrcHeader> {
    let i32_at = |o: usize| E::read_i32(&h[o..o + 4]);
    let f32_at = |o: usize| E::read_f32(&h[o..o + 4]);
    let raw = [i32_at(0), i32_at(4), i32_at(8)];
    if raw.iter().any(|&d| d <= 0) {
        return Err(Error::MrcBadDimensions {
            path: path.into(),
            dims: raw,
        });
    }
    let mode = i32_at(12);
    if mode != 2 {
        return Err(Error::MrcUnsupportedMode {
            path: path.into(),
            mode,
        });
    }
    let nsymbt = i32_at(92);
    if nsymbt < 0 {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("negative extended header length {nsymbt}"),
        });
    }
    let nlabl = i32_at(220).clamp(0, 10) as usize;
    let labels = (0..nlabl)
        .map(|i| {
            let b = &h[224 + 80 * i..224 + 80 * (i + 1)];
            String::from_utf8_lossy(b).trim_end().to_string()
        })
        .collect();
    Ok(MrcHeader {
        dims: raw.map(|d| d as usize),
        mode,
        cell: [f32_at(40), f32_at(44), f32_at(48)],
        dmin: f32_at(76),
        dmax: f32_at(80),
        dmean: f32_at(84),
        rms: f32_at(216),
        ispg: i32_at(88),
        extended_len: nsymbt as usize,
        endian,
        labels,
    })
}

/// Parses an in-memory file. `path` is used for error messages only.
pub fn decode_mrc(bytes: &[u8], path: &Path) -> Result<MrcData> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MrcTruncated {
            path: path.into(),
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let h = &bytes[..HEADER_LEN];
    if &h[208..212] != MAP_STAMP {
        return Err(Error::MrcBadStamp { path: path.into() });
    }
    // Writers differ in the last two stamp bytes; the first decides.
    let endian = match h[212] {
        0x44 | 0x41 => Endian::Little,
        0x11 => Endian::Big,
        _ => {
            // Missing stamp: trust whichever order gives sane dimensions.
            let le = LittleEndian::read_i32(&h[0..4]);
            if (1..=1 << 16).contains(&le) {
                Endian::Little
            } else {
                Endian::Big
            }
        }
    };
    let header = match endian {
        Endian::Little => parse_header::<LittleEndian>(h, path, endian)?,
        Endian::Big => parse_header::<BigEndian>(h, path, endian)?,
    };
    let count = header.dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    let Some(count) = count else {
        return Err(Error::MrcBadDimensions {
            path: path.into(),
            dims: header.dims.map(|d| d as i32),
        });
    };
    let start = HEADER_LEN + header.extended_len;
    let expected = (start + 4 * count) as u64;
    if (bytes.len() as u64) < expected {
        return Err(Error::MrcTruncated {
            path: path.into(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let mut cur = Cursor::new(&bytes[start..start + 4 * count]);
    let mut data = vec![0f32; count];
    match endian {
        Endian::Little => cur.read_f32_into::<LittleEndian>(&mut data),
        Endian::Big => cur.read_f32_into::<BigEndian>(&mut data),
    }
    .map_err(|e| Error::io(path, e))?;
    Ok(MrcData {
        dims: header.dims,
        header,
        data,
    })
}

pub fn read_mrc(path: &Path) -> Result<MrcData> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_mrc(&bytes, path)
}

pub fn read_volume<T: Real>(path: &Path) -> Result<VolumeGrid<T>> {
    let mrc = read_mrc(path)?;
    let [nx, ny, nz] = mrc.dims;
    if nx != ny || ny != nz {
        return Err(Error::MrcBadDimensions {
            path: path.into(),
            dims: mrc.dims.map(|d| d as i32),
        });
    }
    VolumeGrid::from_vec(nx, mrc.data.iter().map(|&v| T::lit(v as f64)).collect())
}

pub fn read_stack<T: Real>(path: &Path) -> Result<Vec<Image<T>>> {
    let mrc = read_mrc(path)?;
    let [nx, ny, nz] = mrc.dims;
    if nx != ny {
        return Err(Error::MrcBadDimensions {
            path: path.into(),
            dims: mrc.dims.map(|d| d as i32),
        });
    }
    mrc.data
        .chunks(nx * ny)
        .take(nz)
        .map(|c| Image::from_vec(nx, c.iter().map(|&v| T::lit(v as f64)).collect()))
        .collect()
}
