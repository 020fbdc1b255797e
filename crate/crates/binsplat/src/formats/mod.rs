//! Readers and writers for the persistent formats.
//!
//! All binary formats are little-endian with a four-byte magic:
//! - `BGS1` scenes: header (N, level dims), then per-gaussian f32 records.
//! - `BGM1` masks: width, height, level count, then row-major u32 label grids.
//! - `BGC1` code tables: header, then exactly four payload bytes per gaussian.
//!
//! PLY import/export covers standard gaussian-splatting checkpoints; the
//! camera list is a whitespace-separated text format.

pub mod bgc1;
pub mod bgm1;
pub mod bgs1;
pub mod cameras;
pub mod ply;

use crate::error::{Error, Result};
use std::io::Read;

pub(crate) fn read_magic<R: Read>(r: &mut R, expected: &[u8; 4], what: &str) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != expected {
        return Err(Error::Format(format!(
            "{what}: bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(expected)
        )));
    }
    Ok(())
}

/// Header summary used by `inspect`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FileSummary {
    Scene { count: usize, level_dims: Vec<u8> },
    Masks { width: u32, height: u32, levels: usize },
    Codes { count: usize, level_dims: Vec<u8>, payload_bytes: usize },
}

/// Identify a file by magic and summarize its header.
pub fn summarize(path: &std::path::Path) -> Result<FileSummary> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    match &magic {
        b"BGS1" => {
            let scene = bgs1::read(path)?;
            Ok(FileSummary::Scene {
                count: scene.len(),
                level_dims: scene.layout.level_dims().to_vec(),
            })
        }
        b"BGM1" => {
            let (w, h, maps) = bgm1::read(path)?;
            Ok(FileSummary::Masks { width: w, height: h, levels: maps.len() })
        }
        b"BGC1" => {
            let table = bgc1::read(path)?;
            Ok(FileSummary::Codes {
                count: table.len(),
                level_dims: table.layout.level_dims().to_vec(),
                payload_bytes: table.len() * 4,
            })
        }
        other => Err(Error::Format(format!(
            "{}: unknown magic {:?}",
            path.display(),
            String::from_utf8_lossy(other)
        ))),
    }
}
