//! JSON document for [`SecondOrderSystem`].
//!
//! Matrices are stored as sparse `[row, col, value]` triplets (zero-based);
//! `masses` and `stiffness` keep only the upper triangle. Floats are written
//! with shortest round-trip formatting so reloading is bit-exact.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::SecondOrderSystem;
use crate::{Error, Result};

const FORMAT: &str = "dampopt-system";
const VERSION: u32 = 1;

type Triplet = (usize, usize, f64);

#[derive(Debug, Serialize, Deserialize)]
struct SystemDocument {
    format: String,
    version: u32,
    n: usize,
    alpha: f64,
    masses: Vec<Triplet>,
    stiffness: Vec<Triplet>,
    inputs: usize,
    outputs: usize,
    num_dampers: usize,
    b: Vec<Triplet>,
    c: Vec<Triplet>,
    f: Vec<Triplet>,
    gain_map: Vec<usize>,
    bounds: Vec<(f64, f64)>,
}

fn triplets(m: &DMatrix<f64>, upper_only: bool) -> Vec<Triplet> {
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if upper_only && j < i {
                continue;
            }
            let v = m[(i, j)];
            if v != 0.0 {
                out.push((i, j, v));
            }
        }
    }
    out
}

fn dense(rows: usize, cols: usize, entries: &[Triplet], symmetric: bool, name: &str) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows, cols);
    for &(i, j, v) in entries {
        if i >= rows || j >= cols {
            return Err(Error::Format(format!("{name}: entry ({i}, {j}) outside {rows}x{cols}")));
        }
        m[(i, j)] = v;
        if symmetric {
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

pub fn system_to_json(sys: &SecondOrderSystem) -> Result<String> {
    let doc = SystemDocument {
        format: FORMAT.into(),
        version: VERSION,
        n: sys.n(),
        alpha: sys.alpha,
        masses: triplets(&sys.mass, true),
        stiffness: triplets(&sys.stiffness, true),
        inputs: sys.num_inputs(),
        outputs: sys.num_outputs(),
        num_dampers: sys.num_dampers(),
        b: triplets(&sys.input, false),
        c: triplets(&sys.output, false),
        f: triplets(&sys.dampers, false),
        gain_map: sys.gain_map.clone(),
        bounds: sys.bounds.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn system_from_json(text: &str) -> Result<SecondOrderSystem> {
    let doc: SystemDocument = serde_json::from_str(text)?;
    if doc.format != FORMAT || doc.version != VERSION {
        return Err(Error::Format(format!(
            "expected {FORMAT} v{VERSION}, found {} v{}",
            doc.format, doc.version
        )));
    }
    let n = doc.n;
    SecondOrderSystem::new(
        dense(n, n, &doc.masses, true, "masses")?,
        dense(n, n, &doc.stiffness, true, "stiffness")?,
        doc.alpha,
        dense(n, doc.inputs, &doc.b, false, "b")?,
        dense(doc.outputs, n, &doc.c, false, "c")?,
        dense(n, doc.num_dampers, &doc.f, false, "f")?,
        doc.gain_map,
        doc.bounds,
    )
}

pub fn write_system(sys: &SecondOrderSystem, path: &Path) -> Result<()> {
    fs::write(path, system_to_json(sys)?)?;
    Ok(())
}

pub fn read_system(path: &Path) -> Result<SecondOrderSystem> {
    system_from_json(&fs::read_to_string(path)?)
}
