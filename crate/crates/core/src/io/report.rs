use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::metrics::{FscCurve, MetricsReport};
use crate::real::Real;
use crate::reconstruct::LossRecord;

pub const TABLE1_HEADER: [&str; 6] = ["method", "shift_px", "rot_deg", "local_px", "warp_px", "proj_snr_db"];

fn csv_bytes(write: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        write(&mut w).map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    }
    Ok(buf)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, |w| w.write_all(bytes))
}

pub fn table1_csv(report: &MetricsReport) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(TABLE1_HEADER)?;
        for r in &report.rows {
            let e = &r.errors;
            w.write_record([
                r.method.clone(),
                e.shift_px.to_string(),
                e.rot_deg.to_string(),
                e.local_px.to_string(),
                e.warp_px.to_string(),
                r.proj_snr_db.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// One row per (method, shell).
pub fn fsc_csv(curves: &[(String, FscCurve)]) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["method", "shell", "frequency", "correlation", "count"])?;
        for (method, c) in curves {
            for s in 0..c.len() {
                w.write_record([
                    method.clone(),
                    s.to_string(),
                    c.frequencies[s].to_string(),
                    c.correlation[s].to_string(),
                    c.counts[s].to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn loss_csv(history: &[LossRecord]) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["iteration", "loss", "wall_seconds"])?;
        for r in history {
            w.write_record([r.iteration.to_string(), r.loss.to_string(), r.wall_seconds.to_string()])?;
        }
        Ok(())
    })
}

pub fn write_table1(path: &Path, report: &MetricsReport) -> Result<()> {
    write_bytes(path, &table1_csv(report)?)
}

pub fn write_fsc(path: &Path, curves: &[(String, FscCurve)]) -> Result<()> {
    write_bytes(path, &fsc_csv(curves)?)
}

pub fn write_loss(path: &Path, history: &[LossRecord]) -> Result<()> {
    write_bytes(path, &loss_csv(history)?)
}

/// Reads `table1.csv` back as (method, six numbers).
pub fn read_table1(path: &Path) -> Result<Vec<(String, [f64; 5])>> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(TABLE1_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let mut vals = [0.0; 5];
            for (v, s) in vals.iter_mut().zip(rec.iter().skip(1)) {
                *v = s.parse().map_err(|_| bad(format!("not a number: {s}")))?;
            }
            Ok((rec[0].to_string(), vals))
        })
        .collect()
}

/// Maps `[min, max]` of `values` linearly onto `[0, 255]`; a constant input
/// maps to 0.
pub fn to_gray8<T: Real>(values: &[T]) -> Vec<u8> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v.as_f64()), hi.max(v.as_f64()))
    });
    let span = hi - lo;
    values
        .iter()
        .map(|v| {
            if span > 0.0 {
                ((v.as_f64() - lo) / span * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect()
}

/// 8-bit grayscale PNG of a row-major `width x height` array.
pub fn write_png<T: Real>(path: &Path, width: usize, height: usize, values: &[T]) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::shape("png pixels", width * height, values.len()));
    }
    let pixels = to_gray8(values);
    write_atomic(path, |w| {
        let mut enc = png::Encoder::new(w, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(std::io::Error::other)?;
        writer.write_image_data(&pixels).map_err(std::io::Error::other)?;
        writer.finish().map_err(std::io::Error::other)
    })
}

/// Decodes an 8-bit grayscale PNG into (width, height, pixels).
pub fn read_png(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = png::Decoder::new(file).read_info().map_err(|e| bad(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(bad("not 8-bit grayscale".into()));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, buf))
}
