//! BGC1 code table format: magic, u32 N, u8 L, L x u8 level dims, then one
//! u32 per gaussian — exactly four payload bytes per code.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::Result;
use crate::scene::{CodeTable, LevelLayout};

/// Header size in bytes for a layout with L levels.
pub fn header_bytes(levels: usize) -> usize {
    4 + 4 + 1 + levels
}

pub fn write(path: &Path, table: &CodeTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"BGC1")?;
    w.write_u32::<LittleEndian>(table.len() as u32)?;
    let dims = table.layout.level_dims();
    w.write_u8(dims.len() as u8)?;
    w.write_all(dims)?;
    for &code in &table.codes {
        w.write_u32::<LittleEndian>(code)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read(path: &Path) -> Result<CodeTable> {
    let mut r = BufReader::new(File::open(path)?);
    super::read_magic(&mut r, b"BGC1", "BGC1 codes")?;
    let count = r.read_u32::<LittleEndian>()? as usize;
    let levels = r.read_u8()? as usize;
    let mut dims = vec![0u8; levels];
    r.read_exact(&mut dims)?;
    let layout = LevelLayout::new(&dims)?;
    let mut codes = vec![0u32; count];
    r.read_u32_into::<LittleEndian>(&mut codes)?;
    CodeTable::new(codes, layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_is_four_bytes_per_code() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bgc1");
        let layout = LevelLayout::new(&[8, 12, 12]).unwrap();
        let table = CodeTable::new((0..100).collect(), layout).unwrap();
        write(&path, &table).unwrap();
        let bytes = std::fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(bytes, header_bytes(3) + 4 * 100);
        assert_eq!(read(&path).unwrap(), table);
    }
}
