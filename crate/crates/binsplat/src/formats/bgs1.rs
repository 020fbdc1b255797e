//! BGS1 scene format.
//!
//! Layout: magic `BGS1`, u32 N, u8 L, L x u8 level dims, then N records of
//! little-endian f32: position[3], log_scale[3], quaternion[4], opacity
//! logit, rgb[3], feature logits[D].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::scene::{Gaussian, GaussianScene, LevelLayout};

pub fn write(path: &Path, scene: &GaussianScene) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"BGS1")?;
    w.write_u32::<LittleEndian>(scene.len() as u32)?;
    let dims = scene.layout.level_dims();
    w.write_u8(dims.len() as u8)?;
    w.write_all(dims)?;
    for g in &scene.gaussians {
        for v in g.position {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        for v in g.log_scale {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        for v in g.rotation {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        w.write_f32::<LittleEndian>(g.opacity_logit as f32)?;
        for v in g.color {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        for &v in &g.feature_logits {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read(path: &Path) -> Result<GaussianScene> {
    let mut r = BufReader::new(File::open(path)?);
    super::read_magic(&mut r, b"BGS1", "BGS1 scene")?;
    let count = r.read_u32::<LittleEndian>()? as usize;
    let levels = r.read_u8()? as usize;
    let mut dims = vec![0u8; levels];
    r.read_exact(&mut dims)?;
    let layout = LevelLayout::new(&dims)?;
    if count == 0 {
        return Err(Error::EmptyScene);
    }
    let dim = layout.total_dim();
    let mut gaussians = Vec::with_capacity(count);
    for _ in 0..count {
        let f = |r: &mut BufReader<File>| -> Result<f64> {
            Ok(r.read_f32::<LittleEndian>()? as f64)
        };
        let position = [f(&mut r)?, f(&mut r)?, f(&mut r)?];
        let log_scale = [f(&mut r)?, f(&mut r)?, f(&mut r)?];
        let rotation = [f(&mut r)?, f(&mut r)?, f(&mut r)?, f(&mut r)?];
        let opacity_logit = f(&mut r)?;
        let color = [f(&mut r)?, f(&mut r)?, f(&mut r)?];
        let mut feature_logits = Vec::with_capacity(dim);
        for _ in 0..dim {
            feature_logits.push(f(&mut r)?);
        }
        gaussians.push(Gaussian {
            position,
            log_scale,
            rotation,
            opacity_logit,
            color,
            feature_logits,
        });
    }
    GaussianScene::new(gaussians, layout)
}
