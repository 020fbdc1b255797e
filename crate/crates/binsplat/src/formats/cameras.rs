//! Plain-text camera list.
//!
//! Per camera, four lines: first `width height fx fy cx cy near far`, then
//! the three rows of the 3x4 world-to-camera matrix `[R | t]`. Blank lines
//! and `#` comments are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::Camera;

pub fn write(path: &Path, cameras: &[Camera]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# width height fx fy cx cy near far, then 3 rows of [R | t]")?;
    for c in cameras {
        writeln!(
            w,
            "{} {} {} {} {} {} {} {}",
            c.width, c.height, c.fx, c.fy, c.cx, c.cy, c.near, c.far
        )?;
        for row in 0..3 {
            writeln!(
                w,
                "{} {} {} {}",
                c.rotation[row][0], c.rotation[row][1], c.rotation[row][2], c.translation[row]
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Vec<Camera>> {
    let r = BufReader::new(File::open(path)?);
    let mut numbers: Vec<f64> = Vec::new();
    for line in r.lines() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("");
        for tok in body.split_whitespace() {
            numbers.push(tok.parse::<f64>().map_err(|_| {
                Error::Format(format!("{}: bad number {tok:?}", path.display()))
            })?);
        }
    }
    if numbers.is_empty() || numbers.len() % 20 != 0 {
        return Err(Error::Format(format!(
            "{}: expected blocks of 20 numbers per camera, found {}",
            path.display(),
            numbers.len()
        )));
    }
    let mut cameras = Vec::with_capacity(numbers.len() / 20);
    for chunk in numbers.chunks_exact(20) {
        let rotation = [
            [chunk[8], chunk[9], chunk[10]],
            [chunk[12], chunk[13], chunk[14]],
            [chunk[16], chunk[17], chunk[18]],
        ];
        let translation = [chunk[11], chunk[15], chunk[19]];
        cameras.push(Camera::new(
            chunk[2],
            chunk[3],
            chunk[4],
            chunk[5],
            chunk[0] as u32,
            chunk[1] as u32,
            chunk[6],
            chunk[7],
            rotation,
            translation,
        )?);
    }
    Ok(cameras)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cams.txt");
        let cams = vec![
            Camera::look_at([0.0, 1.0, -6.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0], 70.0, 64, 48),
            Camera::look_at([4.0, 0.5, 3.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0], 70.0, 64, 48),
        ];
        write(&path, &cams).unwrap();
        let back = read(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in cams.iter().zip(&back) {
            assert_eq!(a.width, b.width);
            assert!((a.fx - b.fx).abs() < 1e-12);
            for r in 0..3 {
                for c in 0..3 {
                    assert!((a.rotation[r][c] - b.rotation[r][c]).abs() < 1e-12);
                }
                assert!((a.translation[r] - b.translation[r]).abs() < 1e-12);
            }
        }
    }
}
