//! Image and sinogram files.
//!
//! Two formats are supported: comma-separated text (one matrix row per line)
//! and the binary container: a 16-byte header (`"SCT1"`, u32 rows, u32 cols,
//! u32 dtype tag, little-endian) followed by row-major little-endian f32.
//! Files ending in `.csv` use the text format; anything else is binary.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use sparsect_neural::params::{read_header, write_header, F32_TAG};

use crate::error::{Error, Result};
use crate::projection::{Image2D, Sinogram};

/// Dense row-major matrix as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

pub fn write_csv(w: &mut impl Write, m: &Matrix) -> std::io::Result<()> {
    for r in 0..m.rows {
        let row = &m.values[r * m.cols..(r + 1) * m.cols];
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_csv(r: impl BufRead) -> Result<Matrix> {
    let mut values = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", rows + 1)))?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Format(format!(
                    "line {} has {} fields, expected {c}",
                    rows + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    Ok(Matrix {
        rows,
        cols: cols.unwrap_or(0),
        values,
    })
}

pub fn write_binary(w: &mut impl Write, m: &Matrix) -> std::io::Result<()> {
    write_header(w, m.rows as u32, m.cols as u32, F32_TAG)?;
    for v in &m.values {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary(r: &mut impl Read) -> Result<Matrix> {
    let (rows, cols, tag) = read_header(r)?;
    if tag != F32_TAG {
        return Err(Error::Format(format!("dtype tag {tag} is not a plain f32 matrix")));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let mut bytes = vec![0u8; rows * cols * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated data: {e}")))?;
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok(Matrix { rows, cols, values })
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if is_csv(path) {
        write_csv(&mut w, m)?;
    } else {
        write_binary(&mut w, m)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let file = File::open(path)?;
    if is_csv(path) {
        read_csv(BufReader::new(file))
    } else {
        read_binary(&mut BufReader::new(file))
    }
}

pub fn save_image(path: &Path, image: &Image2D) -> Result<()> {
    save_matrix(
        path,
        &Matrix {
            rows: image.size(),
            cols: image.size(),
            values: image.values().to_vec(),
        },
    )
}

pub fn load_image(path: &Path) -> Result<Image2D> {
    let m = load_matrix(path)?;
    if m.rows != m.cols {
        return Err(Error::Format(format!("{}x{} image is not square", m.rows, m.cols)));
    }
    Image2D::new(m.rows, m.values)
}

pub fn save_sinogram(path: &Path, sino: &Sinogram) -> Result<()> {
    save_matrix(
        path,
        &Matrix {
            rows: sino.num_angles(),
            cols: sino.num_detectors(),
            values: sino.values().to_vec(),
        },
    )
}

pub fn load_sinogram(path: &Path) -> Result<Sinogram> {
    let m = load_matrix(path)?;
    Sinogram::new(m.rows, m.cols, m.values)
}

/// 8-bit grayscale preview, values clamped to `[0, 1]`.
pub fn save_png_preview(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    image::save_buffer(path, &bytes, cols as u32, rows as u32, image::ExtendedColorType::L8)?;
    Ok(())
}
