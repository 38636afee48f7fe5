//! Weight checkpoint: a little-endian header describing the architecture
//! and encoding, followed by the frequency matrix and the flat weights as
//! 64-bit reals.
//!
//! ```text
//! magic "DTNF" | version u32 | seed u64
//! input_dim u32 | output_dim u32 | hidden_width u32 | depth u32
//! output_activation u8 (0 linear, 1 softplus) | zero_init_last u8 | include_raw u8
//! enc_dim u32 | K u32 | frequency_scale f64
//! freqs [K * enc_dim] f64 | n_params u64 | params [n_params] f64
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::encoding::FourierEncoding;
use super::field::NeuralField;
use super::mlp::{Mlp, MlpArchitecture, OutputActivation};
use crate::diff_core::ParamBlock;
use crate::error::{Error, Result};
use crate::real::Real;

pub const MAGIC: &[u8; 4] = b"DTNF";
pub const VERSION: u32 = 1;

fn fmt_err(reason: impl Into<String>) -> Error {
    Error::Format {
        path: "<checkpoint>".into(),
        reason: reason.into(),
    }
}

pub fn write_field<T: Real, W: Write + ?Sized>(field: &NeuralField<T>, w: &mut W) -> std::io::Result<()> {
    let arch = field.mlp().arch();
    let enc = field.encoding();
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u64::<LittleEndian>(field.seed())?;
    for v in [arch.input_dim, arch.output_dim, arch.hidden_width, arch.depth] {
        w.write_u32::<LittleEndian>(v as u32)?;
    }
    w.write_u8(match arch.output_activation {
        OutputActivation::Linear => 0,
        OutputActivation::Softplus => 1,
    })?;
    w.write_u8(arch.zero_init_last as u8)?;
    w.write_u8(enc.include_raw() as u8)?;
    w.write_u32::<LittleEndian>(enc.dim() as u32)?;
    w.write_u32::<LittleEndian>(enc.k() as u32)?;
    w.write_f64::<LittleEndian>(enc.scale().as_f64())?;
    for &f in enc.freqs() {
        w.write_f64::<LittleEndian>(f.as_f64())?;
    }
    let params = field.mlp().params().values();
    w.write_u64::<LittleEndian>(params.len() as u64)?;
    for &p in params {
        w.write_f64::<LittleEndian>(p.as_f64())?;
    }
    Ok(())
}

fn io(e: std::io::Error) -> Error {
    fmt_err(format!("read failed: {e}"))
}

pub fn read_field<T: Real, R: Read>(r: &mut R, tag: &str) -> Result<NeuralField<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(fmt_err("bad checkpoint magic"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io)?;
    if version != VERSION {
        return Err(fmt_err(format!("unsupported checkpoint version {version}")));
    }
    let seed = r.read_u64::<LittleEndian>().map_err(io)?;
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    }
    let output_activation = match r.read_u8().map_err(io)? {
        0 => OutputActivation::Linear,
        1 => OutputActivation::Softplus,
        t => return Err(fmt_err(format!("unknown activation tag {t}"))),
    };
    let zero_init_last = r.read_u8().map_err(io)? != 0;
    let include_raw = r.read_u8().map_err(io)? != 0;
    let enc_dim = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let k = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let scale = r.read_f64::<LittleEndian>().map_err(io)?;
    let mut freqs = Vec::with_capacity(k * enc_dim);
    for _ in 0..k * enc_dim {
        freqs.push(T::lit(r.read_f64::<LittleEndian>().map_err(io)?));
    }
    let arch = MlpArchitecture {
        input_dim: dims[0],
        output_dim: dims[1],
        hidden_width: dims[2],
        depth: dims[3],
        output_activation,
        zero_init_last,
    };
    arch.validate()?;
    let n = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    if n != arch.param_count() {
        return Err(fmt_err(format!(
            "parameter count {n} does not match architecture ({})",
            arch.param_count()
        )));
    }
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        params.push(T::lit(r.read_f64::<LittleEndian>().map_err(io)?));
    }
    let encoding = FourierEncoding::new(enc_dim, freqs, T::lit(scale), include_raw)?;
    let mlp = Mlp::from_params(arch, ParamBlock::new(params, vec![n], tag)?)?;
    NeuralField::from_parts(encoding, mlp, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural_field::FieldConfig;

    #[test]
    fn roundtrip_is_exact() {
        let f = NeuralField::<f64>::new(&FieldConfig::volume_default(), 77, "psi").unwrap();
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        let g: NeuralField<f64> = read_field(&mut buf.as_slice(), "psi").unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn truncated_and_bad_magic_fail() {
        let f = NeuralField::<f64>::new(&FieldConfig::warp_default(), 1, "gamma[0]").unwrap();
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        let cut = &buf[..buf.len() - 8];
        assert!(read_field::<f64, _>(&mut &cut[..], "g").is_err());
        buf[0] = b'X';
        assert!(read_field::<f64, _>(&mut buf.as_slice(), "g").is_err());
    }
}
