//! Import/export of gaussian-splatting PLY checkpoints.
//!
//! Import expects a binary little-endian PLY whose vertex element carries at
//! least x, y, z, opacity, scale_0..2, rot_0..3 and f_dc_0..2; any further
//! scalar properties (normals, higher SH bands) are skipped. The opacity
//! property is already a logit and the scales are already logs in standard
//! checkpoints, so both are copied through. Degree-0 SH converts to RGB as
//! c = SH_C0 * f_dc + 0.5, clamped to [0, 1].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::scene::{Gaussian, GaussianScene, LevelLayout};

const SH_C0: f64 = 0.28209479177387814;

const REQUIRED: [&str; 14] = [
    "x", "y", "z", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
    "f_dc_0", "f_dc_1", "f_dc_2",
];

fn scalar_size(ty: &str) -> Option<usize> {
    match ty {
        "char" | "uchar" | "int8" | "uint8" => Some(1),
        "short" | "ushort" | "int16" | "uint16" => Some(2),
        "int" | "uint" | "int32" | "uint32" | "float" | "float32" => Some(4),
        "double" | "float64" => Some(8),
        _ => None,
    }
}

struct VertexLayout {
    count: usize,
    stride: usize,
    /// Byte offset of each required property within a record.
    offsets: Vec<usize>,
}

fn parse_header<R: BufRead>(r: &mut R, path: &Path) -> Result<VertexLayout> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(Error::Format(format!("{}: not a PLY file", path.display())));
    }
    let mut format_ok = false;
    let mut in_vertex = false;
    let mut vertex_seen = false;
    let mut count = 0usize;
    let mut stride = 0usize;
    let mut offsets = vec![None; REQUIRED.len()];
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format(format!("{}: header never ends", path.display())));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["comment", ..] => {}
            ["format", fmt, _version] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::Format(format!(
                        "{}: unsupported format {fmt}, need binary_little_endian",
                        path.display()
                    )));
                }
                format_ok = true;
            }
            ["element", "vertex", n] => {
                if vertex_seen {
                    return Err(Error::Format(format!(
                        "{}: multiple vertex elements",
                        path.display()
                    )));
                }
                count = n
                    .parse()
                    .map_err(|_| Error::Format(format!("{}: bad vertex count", path.display())))?;
                in_vertex = true;
                vertex_seen = true;
            }
            ["element", ..] => {
                if !vertex_seen {
                    return Err(Error::Format(format!(
                        "{}: vertex must be the first element",
                        path.display()
                    )));
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::Format(format!(
                    "{}: list properties on vertices are unsupported",
                    path.display()
                )));
            }
            ["property", ty, name] if in_vertex => {
                let size = scalar_size(ty).ok_or_else(|| {
                    Error::Format(format!("{}: unknown property type {ty}", path.display()))
                })?;
                if let Some(idx) = REQUIRED.iter().position(|&p| p == *name) {
                    if !matches!(*ty, "float" | "float32") {
                        return Err(Error::Format(format!(
                            "{}: property {name} must be float, found {ty}",
                            path.display()
                        )));
                    }
                    offsets[idx] = Some(stride);
                }
                stride += size;
            }
            ["property", ..] => {}
            ["end_header"] => break,
            _ => {}
        }
    }
    if !format_ok {
        return Err(Error::Format(format!("{}: missing format line", path.display())));
    }
    if !vertex_seen {
        return Err(Error::Format(format!("{}: no vertex element", path.display())));
    }
    let mut resolved = Vec::with_capacity(REQUIRED.len());
    for (i, off) in offsets.iter().enumerate() {
        match off {
            Some(o) => resolved.push(*o),
            None => {
                return Err(Error::Format(format!(
                    "{}: missing vertex property {}",
                    path.display(),
                    REQUIRED[i]
                )));
            }
        }
    }
    Ok(VertexLayout { count, stride, offsets: resolved })
}

/// Read a gaussian-splatting checkpoint; feature logits are zero-initialized
/// to the layout's width (activation 0.5 per component).
pub fn read(path: &Path, layout: &LevelLayout) -> Result<GaussianScene> {
    let mut r = BufReader::new(File::open(path)?);
    let vl = parse_header(&mut r, path)?;
    if vl.count == 0 {
        return Err(Error::EmptyScene);
    }
    let dim = layout.total_dim();
    let mut record = vec![0u8; vl.stride];
    let mut gaussians = Vec::with_capacity(vl.count);
    for _ in 0..vl.count {
        r.read_exact(&mut record)?;
        let f = |idx: usize| -> f64 {
            let o = vl.offsets[idx];
            f32::from_le_bytes([record[o], record[o + 1], record[o + 2], record[o + 3]]) as f64
        };
        let mut rotation = [f(7), f(8), f(9), f(10)];
        let norm = rotation.iter().map(|q| q * q).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Format(format!(
                "{}: zero quaternion on a vertex",
                path.display()
            )));
        }
        if (norm - 1.0).abs() > 1e-6 {
            for q in &mut rotation {
                *q /= norm;
            }
        }
        let color = [
            (SH_C0 * f(11) + 0.5).clamp(0.0, 1.0),
            (SH_C0 * f(12) + 0.5).clamp(0.0, 1.0),
            (SH_C0 * f(13) + 0.5).clamp(0.0, 1.0),
        ];
        gaussians.push(Gaussian {
            position: [f(0), f(1), f(2)],
            log_scale: [f(4), f(5), f(6)],
            rotation,
            opacity_logit: f(3),
            color,
            feature_logits: vec![0.0; dim],
        });
    }
    GaussianScene::new(gaussians, layout.clone())
}

/// Write the scene as a minimal binary little-endian checkpoint readable by
/// [`read`]. Feature logits are not part of PLY; use BGS1 to persist them.
pub fn write(path: &Path, scene: &GaussianScene) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n",
        scene.len()
    )?;
    for name in REQUIRED {
        writeln!(w, "property float {name}")?;
    }
    writeln!(w, "end_header")?;
    for g in &scene.gaussians {
        for v in g.position {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        w.write_f32::<LittleEndian>(g.opacity_logit as f32)?;
        for v in g.log_scale {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        for v in g.rotation {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        for c in g.color {
            w.write_f32::<LittleEndian>(((c - 0.5) / SH_C0) as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}
