//! Persistence: MRC volumes and stacks, run configuration, bundles, CSV
//! reports and grayscale PNG slices.

mod config;
mod mrc;
mod report;

pub use config::{
    DeformationSection, GeometrySection, MetricsSection, NoiseSection, PhantomSection, Precision, RunConfig,
    SCHEMA_VERSION, SEED_ENV,
};
pub use report::{
    fsc_csv, loss_csv, read_png, read_table1, table1_csv, to_gray8, write_fsc, write_loss, write_png, write_table1,
    TABLE1_HEADER,
};

pub use mrc::{
    decode_mrc, encode_mrc, read_mrc, read_stack, read_volume, write_mrc, write_stack, write_volume,
    Endian, MrcData, MrcHeader, HEADER_LEN,
};

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Writes through a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| Error::io(path, e))
}
