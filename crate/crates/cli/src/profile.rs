//! Line profiles and contrast-to-noise tables.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use sparsect::objective::{cnr, DbScale, Roi};
use sparsect::projection::Image2D;

/// One reconstruction (or ground truth) of one phantom.
#[derive(Debug, Clone)]
pub struct Entry {
    pub phantom: String,
    pub method: String,
    pub image: Image2D,
}

/// `row` of every entry as CSV columns, one line per image column.
pub fn profile_csv(entries: &[Entry], row: usize) -> Result<String> {
    let Some(first) = entries.first() else {
        bail!("no images given");
    };
    let n = first.image.size();
    if let Some(e) = entries.iter().find(|e| e.image.size() != n) {
        bail!("{}:{} is {}x{}, expected {n}x{n}", e.phantom, e.method, e.image.size(), e.image.size());
    }
    if row >= n {
        bail!("row {row} is outside the {n}x{n} images");
    }
    let mut s = String::from("column");
    for e in entries {
        let _ = write!(s, ",{}:{}", e.phantom, e.method);
    }
    s.push('\n');
    for j in 0..n {
        let _ = write!(s, "{j}");
        for e in entries {
            let _ = write!(s, ",{}", e.image.row(row)[j]);
        }
        s.push('\n');
    }
    Ok(s)
}

/// Parses `row0,col0,rows,cols`.
pub fn parse_roi(s: &str) -> Result<Roi> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| anyhow::anyhow!("invalid ROI `{s}`: {e}"))?;
    let [row0, col0, rows, cols] = v[..] else {
        bail!("ROI must be row0,col0,rows,cols, got `{s}`");
    };
    Ok(Roi { row0, col0, rows, cols })
}

/// CNR in dB per phantom (rows) and method (columns). Cells whose ROIs are
/// degenerate or out of bounds hold the error text instead of a value.
pub struct CnrTable {
    pub phantoms: Vec<String>,
    pub methods: Vec<String>,
    pub cells: Vec<Vec<Option<std::result::Result<f64, String>>>>,
}

pub fn cnr_table(entries: &[Entry], rois: &dyn Fn(&str) -> Option<(Roi, Roi)>) -> CnrTable {
    let mut phantoms: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for e in entries {
        if !phantoms.contains(&e.phantom) {
            phantoms.push(e.phantom.clone());
        }
        if !methods.contains(&e.method) {
            methods.push(e.method.clone());
        }
    }
    let mut cells = vec![vec![None; methods.len()]; phantoms.len()];
    for e in entries {
        let pi = phantoms.iter().position(|p| p == &e.phantom).unwrap_or(0);
        let mi = methods.iter().position(|m| m == &e.method).unwrap_or(0);
        cells[pi][mi] = Some(match rois(&e.phantom) {
            Some((f, b)) => cnr(&e.image, &f, &b, DbScale::Amplitude).map_err(|err| err.to_string()),
            None => Err("no ROI given for this phantom".into()),
        });
    }
    CnrTable {
        phantoms,
        methods,
        cells,
    }
}

impl CnrTable {
    /// Flagged cells read `NA` in the CSV; missing combinations stay empty.
    pub fn csv(&self) -> String {
        let mut s = String::from("phantom");
        for m in &self.methods {
            let _ = write!(s, ",{m}");
        }
        s.push('\n');
        for (p, row) in self.phantoms.iter().zip(&self.cells) {
            let _ = write!(s, "{p}");
            for c in row {
                match c {
                    Some(Ok(v)) => {
                        let _ = write!(s, ",{v}");
                    }
                    Some(Err(_)) => s.push_str(",NA"),
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn flagged(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (p, row) in self.phantoms.iter().zip(&self.cells) {
            for (m, c) in self.methods.iter().zip(row) {
                if let Some(Err(e)) = c {
                    out.push(format!("{p}:{m}: {e}"));
                }
            }
        }
        out
    }
}
