//! Gaussian fermionic states represented by their single-particle
//! correlation matrix.

use std::io::{Read, Write};

use faer::Mat;

use crate::error::{domain, Error, Result};
use crate::linalg;
use crate::{CMat, C64};

/// Tolerance for spectrum containment in `[0, 1]`.
pub const SPECTRUM_TOL: f64 = 1e-8;

const MAGIC: &[u8; 4] = b"GJD1";

/// `D[l, l'] = <psi_l'^dag psi_l>`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix(CMat);

impl CorrelationMatrix {
    pub fn new(d: CMat) -> Self {
        assert_eq!(d.nrows(), d.ncols(), "correlation matrix must be square");
        Self(d)
    }

    /// Uniform uncorrelated state `n * 1`.
    pub fn uniform(l: usize, n: f64) -> Self {
        Self(linalg::from_real_diag(&vec![n; l]))
    }

    pub fn d(&self) -> &CMat {
        &self.0
    }

    pub fn d_mut(&mut self) -> &mut CMat {
        &mut self.0
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn hermitize(&mut self) {
        linalg::hermitize_in_place(&mut self.0);
    }

    pub fn hermitized(mut self) -> Self {
        self.hermitize();
        self
    }

    /// Contiguous principal submatrix of length `len` starting at `offset`, wrapping around the ring.
    pub fn reduce(&self, offset: usize, len: usize) -> Result<CMat> {
        let l = self.size();
        if len > l {
            return domain(format!("subsystem length {len} exceeds lattice size {l}"));
        }
        Ok(Mat::from_fn(len, len, |i, j| self.0[((offset + i) % l, (offset + j) % l)]))
    }

    /// `Re D[l, l]` clamped to `[0, 1]`.
    pub fn occupation(&self, l: usize) -> f64 {
        self.0[(l, l)].re.clamp(0.0, 1.0)
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(self.0.as_ref()).re
    }

    pub fn spectrum(&self) -> Result<Vec<f64>> {
        linalg::herm_eigenvalues(self.0.as_ref())
    }

    /// Error unless the spectrum lies within `[-tol, 1 + tol]`.
    pub fn check_spectrum(&self, tol: f64) -> Result<()> {
        let ev = self.spectrum()?;
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if lo < -tol || hi > 1.0 + tol {
            return Err(Error::State(format!("spectrum [{lo:e}, {hi:e}] outside [0, 1]")));
        }
        Ok(())
    }

    /// Project the spectrum onto `[0, 1]`.
    pub fn clamp_spectrum(&mut self) -> Result<()> {
        let (vals, vecs) = linalg::herm_eigen(self.0.as_ref())?;
        self.0 = linalg::herm_function(&vals, vecs.as_ref(), |x| C64::new(x.clamp(0.0, 1.0), 0.0));
        Ok(())
    }

    /// `max |D^2 - D|`, zero for pure states.
    pub fn purity_defect(&self) -> f64 {
        let d2 = &self.0 * &self.0;
        linalg::max_abs_diff(d2.as_ref(), self.0.as_ref())
    }

    /// Binary dump: magic `GJD1`, `L` as little-endian `u32`, then row-major `(re, im)` `f64` pairs.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let l = self.size();
        w.write_all(MAGIC)?;
        w.write_all(&(l as u32).to_le_bytes())?;
        for i in 0..l {
            for j in 0..l {
                let z = self.0[(i, j)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Domain("not a GJD1 dump".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let l = u32::from_le_bytes(len) as usize;
        let mut d = CMat::zeros(l, l);
        let mut buf = [0u8; 8];
        for i in 0..l {
            for j in 0..l {
                r.read_exact(&mut buf)?;
                let re = f64::from_le_bytes(buf);
                r.read_exact(&mut buf)?;
                let im = f64::from_le_bytes(buf);
                d[(i, j)] = C64::new(re, im);
            }
        }
        Ok(Self(d))
    }
}

/// Free-function form of [`CorrelationMatrix::hermitize`].
pub fn hermitize(d: CorrelationMatrix) -> CorrelationMatrix {
    d.hermitized()
}

/// Diagonal state from occupations.
pub fn diagonal_state(occ: &[f64]) -> CorrelationMatrix {
    CorrelationMatrix(linalg::from_real_diag(occ))
}
