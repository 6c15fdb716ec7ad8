//! Signal ingestion and synthesis.
//!
//! Images are loaded from binary PGM, cut into vectorized patches, optionally
//! paired with a Gaussian-blurred copy, and mean-centered. The same module
//! provides the overcomplete DCT initial dictionary and a ground-truth
//! generator for coupled recovery experiments.

mod dct;
mod image;
mod patches;
mod synth;

pub use self::dct::{dct_dictionary, is_perfect_square};
pub use self::image::{gaussian_blur, gaussian_kernel, read_pgm, write_pgm, Image};
pub use self::patches::{blur_pairs, extract_patches, mean_center, patch_set, reassemble_patches, PatchOptions};
pub use self::synth::{random_dictionary, synth_coupled, SyntheticCoupled};

use ndarray::{Array2, ArrayView2};

use crate::error::{invalid, CdlError, Result};
use crate::linalg::{self, col, col_mut};

/// Maximum deviation from unit norm tolerated on a dictionary atom.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// A set of column signals of one feature space.
///
/// `signals` is `dim x count`, stored column-major so each signal is a
/// contiguous slice. `means` holds the per-signal means removed by
/// [`mean_center`], if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    signals: Array2<f64>,
    means: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(signals: Array2<f64>) -> Result<Self> {
        if signals.nrows() == 0 || signals.ncols() == 0 {
            return invalid(format!(
                "dataset must be non-empty, got {}x{}",
                signals.nrows(),
                signals.ncols()
            ));
        }
        if signals.iter().any(|v| !v.is_finite()) {
            return invalid("dataset contains non-finite values");
        }
        let signals = if linalg::is_col_major(&signals) {
            signals
        } else {
            linalg::to_col_major(signals.view())
        };
        Ok(Self {
            signals,
            means: None,
        })
    }

    /// Builds a dataset from column-major samples.
    pub fn from_col_major(dim: usize, count: usize, data: Vec<f64>) -> Result<Self> {
        use ndarray::ShapeBuilder;
        if data.len() != dim * count {
            return Err(CdlError::ShapeMismatch(format!(
                "expected {} samples for {}x{}, got {}",
                dim * count,
                dim,
                count,
                data.len()
            )));
        }
        let signals = Array2::from_shape_vec((dim, count).f(), data)
            .map_err(|e| CdlError::ShapeMismatch(e.to_string()))?;
        Self::new(signals)
    }

    pub fn with_means(mut self, means: Vec<f64>) -> Result<Self> {
        if means.len() != self.count() {
            return Err(CdlError::ShapeMismatch(format!(
                "{} means for {} signals",
                means.len(),
                self.count()
            )));
        }
        self.means = Some(means);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.signals.nrows()
    }

    pub fn count(&self) -> usize {
        self.signals.ncols()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        col(&self.signals, i)
    }

    pub fn signals(&self) -> ArrayView2<'_, f64> {
        self.signals.view()
    }

    /// Column-major backing storage.
    pub fn as_slice(&self) -> &[f64] {
        self.signals.as_slice_memory_order().expect("column-major")
    }

    pub fn means(&self) -> Option<&[f64]> {
        self.means.as_deref()
    }

    /// Adds the stored means back onto every signal.
    pub fn restore_means(&self) -> Dataset {
        let mut signals = self.signals.clone();
        if let Some(means) = &self.means {
            for (i, mean) in means.iter().enumerate() {
                col_mut(&mut signals, i).iter_mut().for_each(|v| *v += mean);
            }
        }
        Dataset {
            signals,
            means: None,
        }
    }

    /// The columns at `indices`, in that order, with their means.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.count()) {
            return invalid(format!("signal index {i} out of range for {} signals", self.count()));
        }
        let mut out = Vec::with_capacity(self.dim() * indices.len());
        for &i in indices {
            out.extend_from_slice(self.column(i));
        }
        let picked = Dataset::from_col_major(self.dim(), indices.len(), out)?;
        match &self.means {
            Some(m) => picked.with_means(indices.iter().map(|&i| m[i]).collect()),
            None => Ok(picked),
        }
    }

    /// Every sample and stored mean multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Dataset> {
        if !factor.is_finite() {
            return invalid(format!("scale factor {factor} is not finite"));
        }
        Ok(Dataset {
            signals: self.signals.mapv(|v| v * factor),
            means: self.means.as_ref().map(|m| m.iter().map(|v| v * factor).collect()),
        })
    }

    /// Vertical concatenation of datasets with equal signal counts: the joint
    /// signals `[x1; x2]`.
    pub fn stack(parts: &[&Dataset]) -> Result<Dataset> {
        let Some(first) = parts.first() else {
            return invalid("cannot stack zero datasets");
        };
        let n = first.count();
        if let Some(bad) = parts.iter().find(|p| p.count() != n) {
            return Err(CdlError::ShapeMismatch(format!(
                "signal counts differ: {} vs {}",
                n,
                bad.count()
            )));
        }
        let dim: usize = parts.iter().map(|p| p.dim()).sum();
        let mut out = Vec::with_capacity(dim * n);
        for i in 0..n {
            for p in parts {
                out.extend_from_slice(p.column(i));
            }
        }
        Dataset::from_col_major(dim, n, out)
    }
}

/// An `dim x natoms` matrix of unit-norm atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
}

impl Dictionary {
    /// Wraps `atoms`, checking that every column has unit norm.
    pub fn new(atoms: Array2<f64>) -> Result<Self> {
        if atoms.nrows() == 0 || atoms.ncols() == 0 {
            return invalid("dictionary must have at least one row and one atom");
        }
        let atoms = if linalg::is_col_major(&atoms) {
            atoms
        } else {
            linalg::to_col_major(atoms.view())
        };
        for t in 0..atoms.ncols() {
            let c = col(&atoms, t);
            if c.iter().any(|v| !v.is_finite()) {
                return invalid(format!("atom {t} has non-finite entries"));
            }
            let n = linalg::norm(c);
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return invalid(format!("atom {t} has norm {n}, expected 1"));
            }
        }
        Ok(Self { atoms })
    }

    /// Normalizes every column of `atoms`; fails on a zero column.
    pub fn from_unnormalized(atoms: Array2<f64>) -> Result<Self> {
        let mut atoms = linalg::to_col_major(atoms.view());
        for t in 0..atoms.ncols() {
            let c = col_mut(&mut atoms, t);
            let n = linalg::norm(c);
            if !(n > 0.0 && n.is_finite()) {
                return invalid(format!("atom {t} cannot be normalized"));
            }
            c.iter_mut().for_each(|v| *v /= n);
        }
        Self::new(atoms)
    }

    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn natoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atom(&self, t: usize) -> &[f64] {
        col(&self.atoms, t)
    }

    pub fn atoms(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }

    /// Column-major backing storage.
    pub fn as_slice(&self) -> &[f64] {
        self.atoms.as_slice_memory_order().expect("column-major")
    }

    /// Overwrites atom `t`. The caller guarantees unit norm.
    pub(crate) fn set_atom(&mut self, t: usize, atom: &[f64]) {
        debug_assert!((linalg::norm(atom) - 1.0).abs() <= UNIT_NORM_TOL);
        col_mut(&mut self.atoms, t).copy_from_slice(atom);
    }

    /// Vertical concatenation `[D1; D2]`. The result's columns have squared
    /// norm equal to the number of stacked dictionaries, so it is returned as
    /// a plain matrix.
    pub fn stack(parts: &[&Dictionary]) -> Result<Array2<f64>> {
        let Some(first) = parts.first() else {
            return invalid("cannot stack zero dictionaries");
        };
        let k = first.natoms();
        if let Some(bad) = parts.iter().find(|p| p.natoms() != k) {
            return Err(CdlError::ShapeMismatch(format!(
                "atom counts differ: {} vs {}",
                k,
                bad.natoms()
            )));
        }
        let dim: usize = parts.iter().map(|p| p.dim()).sum();
        let mut out = linalg::zeros_f(dim, k);
        for t in 0..k {
            let dst = col_mut(&mut out, t);
            let mut off = 0;
            for p in parts {
                dst[off..off + p.dim()].copy_from_slice(p.atom(t));
                off += p.dim();
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dataset_rejects_empty_and_nan() {
        assert!(Dataset::new(Array2::zeros((0, 3))).is_err());
        assert!(Dataset::new(array![[1.0, f64::NAN]]).is_err());
    }

    #[test]
    fn dataset_columns_are_signals() {
        let d = Dataset::new(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(d.column(0), &[1.0, 3.0]);
        assert_eq!(d.column(1), &[2.0, 4.0]);
    }

    #[test]
    fn stack_concatenates_per_column() {
        let a = Dataset::new(array![[1.0, 2.0]]).unwrap();
        let b = Dataset::new(array![[3.0, 4.0], [5.0, 6.0]]).unwrap();
        let s = Dataset::stack(&[&a, &b]).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.column(1), &[2.0, 4.0, 6.0]);
        let c = Dataset::new(array![[1.0]]).unwrap();
        assert!(Dataset::stack(&[&a, &c]).is_err());
    }

    #[test]
    fn dictionary_requires_unit_norm() {
        assert!(Dictionary::new(array![[1.0, 0.6], [0.0, 0.8]]).is_ok());
        assert!(Dictionary::new(array![[2.0], [0.0]]).is_err());
        let d = Dictionary::from_unnormalized(array![[2.0], [0.0]]).unwrap();
        assert_eq!(d.atom(0), &[1.0, 0.0]);
        assert!(Dictionary::from_unnormalized(array![[0.0], [0.0]]).is_err());
    }

    #[test]
    fn stacked_dictionary_columns() {
        let d1 = Dictionary::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let d2 = Dictionary::new(array![[0.6, 1.0], [0.8, 0.0]]).unwrap();
        let j = Dictionary::stack(&[&d1, &d2]).unwrap();
        assert_eq!(col(&j, 0), &[1.0, 0.0, 0.6, 0.8]);
        assert_eq!(col(&j, 1), &[0.0, 1.0, 1.0, 0.0]);
    }
}
