//! BGM1 mask format: magic, u32 width, u32 height, u8 L, then L row-major
//! grids of u32 labels (0 = unlabeled).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub fn write(path: &Path, width: u32, height: u32, levels: &[Vec<u32>]) -> Result<()> {
    let pixels = width as usize * height as usize;
    if levels.is_empty() {
        return Err(Error::Contract("BGM1 needs at least one level".into()));
    }
    if let Some(l) = levels.iter().position(|m| m.len() != pixels) {
        return Err(Error::Contract(format!(
            "level {} has {} labels, expected {pixels}",
            l + 1,
            levels[l].len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"BGM1")?;
    w.write_u32::<LittleEndian>(width)?;
    w.write_u32::<LittleEndian>(height)?;
    w.write_u8(levels.len() as u8)?;
    for map in levels {
        for &label in map {
            w.write_u32::<LittleEndian>(label)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read(path: &Path) -> Result<(u32, u32, Vec<Vec<u32>>)> {
    let mut r = BufReader::new(File::open(path)?);
    super::read_magic(&mut r, b"BGM1", "BGM1 masks")?;
    let width = r.read_u32::<LittleEndian>()?;
    let height = r.read_u32::<LittleEndian>()?;
    let levels = r.read_u8()? as usize;
    if width == 0 || height == 0 || levels == 0 {
        return Err(Error::Format(format!(
            "{}: degenerate header {width}x{height}, {levels} levels",
            path.display()
        )));
    }
    let pixels = width as usize * height as usize;
    let mut maps = Vec::with_capacity(levels);
    for _ in 0..levels {
        let mut map = vec![0u32; pixels];
        r.read_u32_into::<LittleEndian>(&mut map)?;
        maps.push(map);
    }
    Ok((width, height, maps))
}
