//! Dense deformation dump shared by ground truth and estimates.
//!
//! ```text
//! magic "DTDF" | version u32 | n u32 | m u32
//! per tilt: alpha_deg f64 | tau_x f64 | tau_y f64 | n*n*2 f64 displacement (pixels, u fastest, (dx, dy) pairs)
//! ```
//! All values little-endian. `tau` is in normalized units.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{pixels_per_unit, DeformationParams, DisplacementField, GlobalDeformParams, LocalWarp, TiltDeformation};
use crate::error::{Error, Result};
use crate::geometry::cell_center;
use crate::real::Real;

const MAGIC: &[u8; 4] = b"DTDF";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TiltDump {
    pub alpha_deg: f64,
    pub tau: [f64; 2],
    /// Local displacement in pixels at every pixel center.
    pub field: DisplacementField<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationDump {
    pub n: usize,
    pub tilts: Vec<TiltDump>,
}

impl DeformationDump {
    /// Evaluates every tilt's local warp on the pixel grid.
    pub fn from_params<T: Real>(params: &DeformationParams<T>, n: usize) -> Self {
        let ppu = pixels_per_unit::<f64>(n);
        let tilts = params
            .tilts
            .iter()
            .map(|t| {
                let mut data = Vec::with_capacity(n * n);
                for v in 0..n {
                    for u in 0..n {
                        let x = [cell_center::<T>(u, n), cell_center::<T>(v, n)];
                        let d = t.local.displacement(x);
                        data.push([d[0].as_f64() * ppu, d[1].as_f64() * ppu]);
                    }
                }
                TiltDump {
                    alpha_deg: t.global.alpha_deg.as_f64(),
                    tau: [t.global.tau[0].as_f64(), t.global.tau[1].as_f64()],
                    field: DisplacementField::from_vec(n, data).expect("n*n entries"),
                }
            })
            .collect();
        Self { n, tilts }
    }

    /// Deformations with dense local fields.
    pub fn to_params<T: Real>(&self) -> DeformationParams<T> {
        let tilts = self
            .tilts
            .iter()
            .map(|t| TiltDeformation {
                global: GlobalDeformParams {
                    alpha_deg: T::lit(t.alpha_deg),
                    tau: [T::lit(t.tau[0]), T::lit(t.tau[1])],
                },
                local: LocalWarp::Dense(
                    DisplacementField::from_vec(
                        self.n,
                        t.field.data().iter().map(|d| [T::lit(d[0]), T::lit(d[1])]).collect(),
                    )
                    .expect("n*n entries"),
                ),
            })
            .collect();
        DeformationParams { tilts }
    }

    pub fn len(&self) -> usize {
        self.tilts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tilts.is_empty()
    }
}

pub fn write_deformations<W: Write + ?Sized>(dump: &DeformationDump, w: &mut W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(dump.n as u32)?;
    w.write_u32::<LittleEndian>(dump.tilts.len() as u32)?;
    for t in &dump.tilts {
        w.write_f64::<LittleEndian>(t.alpha_deg)?;
        w.write_f64::<LittleEndian>(t.tau[0])?;
        w.write_f64::<LittleEndian>(t.tau[1])?;
        for d in t.field.data() {
            w.write_f64::<LittleEndian>(d[0])?;
            w.write_f64::<LittleEndian>(d[1])?;
        }
    }
    Ok(())
}

pub fn read_deformations<R: Read>(r: &mut R) -> Result<DeformationDump> {
    let fmt = |reason: String| Error::Format {
        path: "<deformation dump>".into(),
        reason,
    };
    let io = |e: std::io::Error| fmt(format!("read failed: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(fmt("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io)?;
    if version != VERSION {
        return Err(fmt(format!("unsupported version {version}")));
    }
    let n = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let m = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let mut tilts = Vec::with_capacity(m);
    for _ in 0..m {
        let alpha_deg = r.read_f64::<LittleEndian>().map_err(io)?;
        let tau = [
            r.read_f64::<LittleEndian>().map_err(io)?,
            r.read_f64::<LittleEndian>().map_err(io)?,
        ];
        let mut data = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            data.push([
                r.read_f64::<LittleEndian>().map_err(io)?,
                r.read_f64::<LittleEndian>().map_err(io)?,
            ]);
        }
        tilts.push(TiltDump {
            alpha_deg,
            tau,
            field: DisplacementField::from_vec(n, data)?,
        });
    }
    Ok(DeformationDump { n, tilts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformation::{sample_random_deformations, RandomDeformationConfig};

    #[test]
    fn dump_roundtrip_and_warp_equivalence() {
        let n = 16;
        let truth = sample_random_deformations::<f64>(3, n, &RandomDeformationConfig::default(), 5).unwrap();
        let dump = DeformationDump::from_params(&truth, n);
        let mut buf = Vec::new();
        write_deformations(&dump, &mut buf).unwrap();
        let back = read_deformations(&mut buf.as_slice()).unwrap();
        assert_eq!(back, dump);
        let params: DeformationParams<f64> = back.to_params();
        let x = [cell_center(3, n), cell_center(11, n)];
        for (a, b) in truth.tilts.iter().zip(&params.tilts) {
            let (wa, wb) = (a.warp(x), b.warp(x));
            assert!((wa[0] - wb[0]).abs() < 1e-12 && (wa[1] - wb[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_dump_fails() {
        let dump = DeformationDump::from_params(&DeformationParams::<f64>::identity(2), 4);
        let mut buf = Vec::new();
        write_deformations(&dump, &mut buf).unwrap();
        assert!(read_deformations(&mut &buf[..buf.len() - 3]).is_err());
    }
}
