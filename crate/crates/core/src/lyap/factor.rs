use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Tall factor `Z` (2n×q) with `P ≈ Z Zᵀ`; `Z₁` is the position block.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    pub z: DMatrix<f64>,
    n: usize,
}

impl LowRankFactor {
    pub fn new(z: DMatrix<f64>) -> Result<Self> {
        if z.nrows() % 2 != 0 {
            return Err(Error::Dimension(format!("factor has odd row count {}", z.nrows())));
        }
        let n = z.nrows() / 2;
        Ok(Self { z, n })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            z: DMatrix::zeros(2 * n, 0),
            n,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.z.ncols()
    }

    pub fn z1(&self) -> DMatrix<f64> {
        self.z.rows(0, self.n).into_owned()
    }

    pub fn z2(&self) -> DMatrix<f64> {
        self.z.rows(self.n, self.n).into_owned()
    }

    /// Dense `Z Zᵀ`; small problems only.
    pub fn gramian(&self) -> DMatrix<f64> {
        &self.z * self.z.transpose()
    }

    /// Factor of a dense PSD matrix through its eigendecomposition, keeping
    /// eigenvalues above `rel_tol` times the largest one.
    pub fn from_psd(p: &DMatrix<f64>, rel_tol: f64) -> Result<Self> {
        let (vals, vecs) =
            crate::linalg::sym_eigen(p).ok_or_else(|| Error::InvalidInput("eigensolver failed".into()))?;
        let lmax = vals.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..vals.len())
            .filter(|&i| vals[i] > rel_tol * lmax && vals[i] > 0.0)
            .collect();
        let z = DMatrix::from_fn(p.nrows(), keep.len(), |i, j| vecs[(i, keep[j])] * vals[keep[j]].sqrt());
        Self::new(z)
    }

    /// Debug dump: magic `LRF1`, then rows, cols, n as little-endian u64,
    /// then the entries row-major as little-endian f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"LRF1")?;
        for v in [self.z.nrows(), self.z.ncols(), self.n] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for i in 0..self.z.nrows() {
            for j in 0..self.z.ncols() {
                w.write_all(&self.z[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"LRF1" {
            return Err(Error::Format("not a low-rank factor dump".into()));
        }
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            *d = u64::from_le_bytes(buf) as usize;
        }
        let [rows, cols, n] = dims;
        if rows != 2 * n {
            return Err(Error::Format(format!("rows {rows} != 2n = {}", 2 * n)));
        }
        let mut z = DMatrix::zeros(rows, cols);
        let mut buf = [0u8; 8];
        for i in 0..rows {
            for j in 0..cols {
                r.read_exact(&mut buf)?;
                z[(i, j)] = f64::from_le_bytes(buf);
            }
        }
        Ok(Self { z, n })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_dump_round_trips() {
        let f = LowRankFactor::new(DMatrix::from_fn(6, 2, |i, j| i as f64 - 0.25 * j as f64)).unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 24 + 12 * 8);
        assert_eq!(LowRankFactor::read_binary(&buf[..]).unwrap(), f);
    }

    #[test]
    fn blocks_are_addressable() {
        let f = LowRankFactor::new(DMatrix::from_fn(4, 1, |i, _| i as f64)).unwrap();
        assert_eq!(f.z1().as_slice(), &[0.0, 1.0]);
        assert_eq!(f.z2().as_slice(), &[2.0, 3.0]);
    }
}
