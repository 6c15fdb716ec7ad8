//! Dictionary update phase.
//!
//! For a fixed shared code Γ, atom `t` only affects the signals in its
//! support ωₜ. With the contribution of every other atom removed, the
//! restricted error `Eₜ` must be explained by the rank-1 term `dₜ γₜ`. The
//! update alternates once: the atom becomes `normalize(Eₜ γₜᵀ)` in each
//! space, then the shared row is refreshed as the least-squares coefficient
//! for the stacked atom, `γₜ = (1/S) Σᵢ dᵢᵀ Eᵢ` where `S` is the number of
//! feature spaces (the stacked atom has squared norm `S`).
//!
//! [`Sweep`] visits atoms in ascending order and keeps the residual
//! `X - DΓ` of every space up to date, so each error slice costs
//! `O(m |ωₜ|)`.

use ndarray::Array2;

use crate::datapipe::{Dataset, Dictionary};
use crate::error::{CdlError, Result};
use crate::linalg::{self, col, col_mut};
use crate::sparse_coding::SparseCode;

/// Row `t` of Γ restricted to its nonzero positions.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSupport {
    pub atom: usize,
    /// Signal indices, strictly increasing.
    pub indices: Vec<usize>,
    /// Coefficients at `indices`.
    pub values: Vec<f64>,
}

impl AtomSupport {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Restricted error matrix of one atom in one feature space:
/// `mᵢ x |ωₜ|`, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSlice {
    pub space: usize,
    pub atom: usize,
    matrix: Array2<f64>,
}

impl ErrorSlice {
    pub fn new(space: usize, atom: usize, matrix: Array2<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(CdlError::InvalidInput("error slice has non-finite entries".into()));
        }
        Ok(Self {
            space,
            atom,
            matrix: linalg::to_col_major(matrix.view()),
        })
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        col(&self.matrix, j)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// `‖E - d γ‖²_F`
    pub fn rank1_residual_sq(&self, atom: &[f64], row: &[f64]) -> f64 {
        (0..self.cols())
            .map(|j| {
                self.column(j)
                    .iter()
                    .zip(atom)
                    .map(|(e, d)| (e - d * row[j]).powi(2))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Collects the nonzero positions of row `t`.
pub fn support_of_row(code: &SparseCode, t: usize) -> AtomSupport {
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for (i, c) in code.columns().iter().enumerate() {
        if let Ok(pos) = c.binary_search_by_key(&t, |&(s, _)| s) {
            indices.push(i);
            values.push(c[pos].1);
        }
    }
    AtomSupport {
        atom: t,
        indices,
        values,
    }
}

fn check_shapes(data: &Dataset, dict: &Dictionary, code: &SparseCode) -> Result<()> {
    if data.dim() != dict.dim() || data.count() != code.count() || dict.natoms() != code.natoms() {
        return Err(CdlError::ShapeMismatch(format!(
            "data {}x{}, dictionary {}x{}, code {}x{}",
            data.dim(),
            data.count(),
            dict.dim(),
            dict.natoms(),
            code.natoms(),
            code.count()
        )));
    }
    Ok(())
}

/// Error matrix of atom `support.atom`: for each `i` in ωₜ, the signal
/// minus the contributions of all other atoms.
pub fn error_matrix(
    space: usize,
    data: &Dataset,
    dict: &Dictionary,
    code: &SparseCode,
    support: &AtomSupport,
) -> Result<ErrorSlice> {
    check_shapes(data, dict, code)?;
    let mut matrix = linalg::zeros_f(data.dim(), support.len());
    for (j, &i) in support.indices.iter().enumerate() {
        let dst = col_mut(&mut matrix, j);
        dst.copy_from_slice(data.column(i));
        for &(s, v) in code.column(i) {
            if s != support.atom {
                linalg::axpy(-v, dict.atom(s), dst);
            }
        }
    }
    ErrorSlice::new(space, support.atom, matrix)
}

/// `E γᵀ` normalized to unit length. `None` if `E γᵀ` vanishes.
pub fn update_atom(error: &ErrorSlice, support: &AtomSupport) -> Option<Vec<f64>> {
    debug_assert_eq!(error.cols(), support.len());
    let mut atom = vec![0.0; error.rows()];
    for (j, &g) in support.values.iter().enumerate() {
        linalg::axpy(g, error.column(j), &mut atom);
    }
    linalg::normalized(atom)
}

/// Least-squares row for unit atoms stacked across spaces:
/// `(1/S) Σᵢ aᵢᵀ Eᵢ`.
pub fn update_shared_coeffs(atoms: &[&[f64]], errors: &[&ErrorSlice]) -> Vec<f64> {
    assert_eq!(atoms.len(), errors.len());
    assert!(!errors.is_empty());
    let w = errors[0].cols();
    let scale = 1.0 / errors.len() as f64;
    (0..w)
        .map(|j| {
            let total: f64 = atoms
                .iter()
                .zip(errors)
                .map(|(a, e)| linalg::dot(a, e.column(j)))
                .sum();
            scale * total
        })
        .collect()
}

/// Shared coefficients of a coupled atom pair: `½ (d1ᵀE1 + d2ᵀE2)`.
pub fn update_joint_coeffs(
    atom1: &[f64],
    atom2: &[f64],
    error1: &ErrorSlice,
    error2: &ErrorSlice,
) -> Result<Vec<f64>> {
    if error1.cols() != error2.cols() {
        return Err(CdlError::ShapeMismatch(format!(
            "error slices have {} and {} columns",
            error1.cols(),
            error2.cols()
        )));
    }
    if atom1.len() != error1.rows() || atom2.len() != error2.rows() {
        return Err(CdlError::ShapeMismatch("atom length differs from error rows".into()));
    }
    Ok(update_shared_coeffs(&[atom1, atom2], &[error1, error2]))
}

/// Residual vectors shorter than this fraction of the RMS signal norm are
/// treated as zero when choosing a replacement atom.
pub const NEGLIGIBLE_RESIDUAL: f64 = 1e-10;

fn rms_norm(data: &Dataset) -> f64 {
    (linalg::norm_sq(data.as_slice()) / data.count() as f64).sqrt()
}

/// Replacement direction from a column-major residual: the normalized mean
/// column, else the largest-norm column, else `None`. Vectors at or below
/// `floor` in norm count as zero.
fn residual_replacement(residual: &Array2<f64>, floor: f64) -> Option<Vec<f64>> {
    let (m, n) = residual.dim();
    let mut mean = vec![0.0; m];
    for i in 0..n {
        linalg::axpy(1.0, col(residual, i), &mut mean);
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    if linalg::norm(&mean) > floor {
        return linalg::normalized(mean);
    }
    let mut best: Option<(usize, f64)> = None;
    for i in 0..n {
        let e = linalg::norm(col(residual, i));
        if e > best.map_or(floor, |(_, b)| b) {
            best = Some((i, e));
        }
    }
    best.and_then(|(i, _)| linalg::normalized(col(residual, i).to_vec()))
}

fn residual_matrix(data: &Dataset, dict: &Dictionary, code: &SparseCode) -> Array2<f64> {
    let mut r = linalg::zeros_f(data.dim(), data.count());
    for i in 0..data.count() {
        let dst = col_mut(&mut r, i);
        dst.copy_from_slice(data.column(i));
        for &(t, v) in code.column(i) {
            linalg::axpy(-v, dict.atom(t), dst);
        }
    }
    r
}

/// Replacement for an unused atom in one space, derived from the residual
/// `X - DΓ`. Keeps the current atom when the residual is zero.
pub fn replacement_atom(data: &Dataset, dict: &Dictionary, code: &SparseCode, t: usize) -> Result<Vec<f64>> {
    check_shapes(data, dict, code)?;
    let r = residual_matrix(data, dict, code);
    let floor = NEGLIGIBLE_RESIDUAL * rms_norm(data);
    Ok(residual_replacement(&r, floor).unwrap_or_else(|| dict.atom(t).to_vec()))
}

/// New atoms for an atom `t` whose row of Γ is empty, one per space.
pub fn replace_unused_atom(
    data1: &Dataset,
    data2: &Dataset,
    dict1: &Dictionary,
    dict2: &Dictionary,
    code: &SparseCode,
    t: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !support_of_row(code, t).is_empty() {
        return Err(CdlError::InvalidInput(format!("atom {t} is in use")));
    }
    Ok((
        replacement_atom(data1, dict1, code, t)?,
        replacement_atom(data2, dict2, code, t)?,
    ))
}

/// Output of a per-atom update rule.
#[derive(Debug, Clone)]
pub struct AtomUpdateResult {
    /// One unit-norm atom per space.
    pub atoms: Vec<Vec<f64>>,
    /// New shared coefficients over the support.
    pub coefficients: Vec<f64>,
}

/// A rule that refits one atom (in every space) and its shared row from the
/// restricted error slices. Returning `None` leaves atom and row unchanged.
pub trait AtomUpdate {
    fn update(
        &self,
        errors: &[ErrorSlice],
        support: &AtomSupport,
        current: &[&[f64]],
    ) -> Option<AtomUpdateResult>;
}

/// One alternating least-squares pass: per-space atom from `E γᵀ`, then the
/// shared row. A space whose `E γᵀ` vanishes keeps its current atom.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rank1Update;

impl AtomUpdate for Rank1Update {
    fn update(
        &self,
        errors: &[ErrorSlice],
        support: &AtomSupport,
        current: &[&[f64]],
    ) -> Option<AtomUpdateResult> {
        let atoms: Vec<Vec<f64>> = errors
            .iter()
            .zip(current)
            .map(|(e, cur)| update_atom(e, support).unwrap_or_else(|| cur.to_vec()))
            .collect();
        let refs: Vec<&[f64]> = atoms.iter().map(Vec::as_slice).collect();
        let err_refs: Vec<&ErrorSlice> = errors.iter().collect();
        let coefficients = update_shared_coeffs(&refs, &err_refs);
        Some(AtomUpdateResult {
            atoms,
            coefficients,
        })
    }
}

/// What happened to an atom during a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomOutcome {
    Updated,
    /// Unused atom replaced from the residual in at least one space.
    Replaced,
    Kept,
}

/// Sequential atom-by-atom dictionary update over one or more spaces that
/// share a code.
pub struct Sweep<'a, U: AtomUpdate = Rank1Update> {
    data: Vec<&'a Dataset>,
    dicts: Vec<Dictionary>,
    code: SparseCode,
    // per atom: (signal index, position within that code column)
    rows: Vec<Vec<(usize, usize)>>,
    residuals: Vec<Array2<f64>>,
    floors: Vec<f64>,
    rule: U,
}

impl<'a, U: AtomUpdate> Sweep<'a, U> {
    pub fn new(data: Vec<&'a Dataset>, dicts: Vec<Dictionary>, code: SparseCode, rule: U) -> Result<Self> {
        if data.is_empty() || data.len() != dicts.len() {
            return Err(CdlError::ShapeMismatch(format!(
                "{} datasets for {} dictionaries",
                data.len(),
                dicts.len()
            )));
        }
        for (x, d) in data.iter().zip(&dicts) {
            check_shapes(x, d, &code)?;
        }
        let mut rows = vec![Vec::new(); code.natoms()];
        for (i, c) in code.columns().iter().enumerate() {
            for (pos, &(t, _)) in c.iter().enumerate() {
                rows[t].push((i, pos));
            }
        }
        let residuals = data
            .iter()
            .zip(&dicts)
            .map(|(x, d)| residual_matrix(x, d, &code))
            .collect();
        let floors = data.iter().map(|x| NEGLIGIBLE_RESIDUAL * rms_norm(x)).collect();
        Ok(Self {
            data,
            dicts,
            code,
            rows,
            residuals,
            floors,
            rule,
        })
    }

    pub fn natoms(&self) -> usize {
        self.code.natoms()
    }

    pub fn dictionaries(&self) -> &[Dictionary] {
        &self.dicts
    }

    pub fn code(&self) -> &SparseCode {
        &self.code
    }

    pub fn data(&self) -> &[&'a Dataset] {
        &self.data
    }

    /// `Σᵢ ‖Xᵢ - DᵢΓ‖²_F` from the maintained residuals.
    pub fn objective(&self) -> f64 {
        self.residuals
            .iter()
            .map(|r| linalg::norm_sq(r.as_slice_memory_order().expect("column-major")))
            .sum()
    }

    pub fn support(&self, t: usize) -> AtomSupport {
        let (indices, values) = self.rows[t]
            .iter()
            .map(|&(i, pos)| (i, self.code.column(i)[pos].1))
            .unzip();
        AtomSupport {
            atom: t,
            indices,
            values,
        }
    }

    /// Error slices of atom `t` in every space, built from the maintained
    /// residual plus the atom's own contribution.
    pub fn error_slices(&self, t: usize) -> Vec<ErrorSlice> {
        let support = self.support(t);
        self.residuals
            .iter()
            .zip(&self.dicts)
            .enumerate()
            .map(|(space, (r, d))| {
                let atom = d.atom(t);
                let mut m = linalg::zeros_f(r.nrows(), support.len());
                for (j, (&i, &g)) in support.indices.iter().zip(&support.values).enumerate() {
                    let dst = col_mut(&mut m, j);
                    dst.copy_from_slice(col(r, i));
                    linalg::axpy(g, atom, dst);
                }
                ErrorSlice {
                    space,
                    atom: t,
                    matrix: m,
                }
            })
            .collect()
    }

    pub fn step(&mut self, t: usize) -> AtomOutcome {
        if self.rows[t].is_empty() {
            let mut changed = false;
            for ((d, r), &floor) in self.dicts.iter_mut().zip(&self.residuals).zip(&self.floors) {
                if let Some(atom) = residual_replacement(r, floor) {
                    d.set_atom(t, &atom);
                    changed = true;
                }
            }
            return if changed {
                AtomOutcome::Replaced
            } else {
                AtomOutcome::Kept
            };
        }

        let support = self.support(t);
        let errors = self.error_slices(t);
        let current: Vec<&[f64]> = self.dicts.iter().map(|d| d.atom(t)).collect();
        let Some(result) = self.rule.update(&errors, &support, &current) else {
            return AtomOutcome::Kept;
        };

        for ((e, r), (d, atom)) in errors
            .iter()
            .zip(self.residuals.iter_mut())
            .zip(self.dicts.iter_mut().zip(&result.atoms))
        {
            for (j, &i) in support.indices.iter().enumerate() {
                let dst = col_mut(r, i);
                dst.copy_from_slice(e.column(j));
                linalg::axpy(-result.coefficients[j], atom, dst);
            }
            d.set_atom(t, atom);
        }
        for (&(i, pos), &g) in self.rows[t].iter().zip(&result.coefficients) {
            *self.code.entry_mut(i, pos) = g;
        }
        AtomOutcome::Updated
    }

    /// Updates every atom in ascending order.
    pub fn run(mut self) -> (Vec<Dictionary>, SparseCode) {
        for t in 0..self.natoms() {
            self.step(t);
        }
        self.into_parts()
    }

    pub fn into_parts(self) -> (Vec<Dictionary>, SparseCode) {
        (self.dicts, self.code)
    }
}

/// One coupled dictionary-update phase.
pub fn sweep(
    data1: &Dataset,
    data2: &Dataset,
    dict1: Dictionary,
    dict2: Dictionary,
    code: SparseCode,
) -> Result<(Dictionary, Dictionary, SparseCode)> {
    let (mut dicts, code) = Sweep::new(vec![data1, data2], vec![dict1, dict2], code, Rank1Update)?.run();
    let d2 = dicts.pop().expect("two spaces");
    let d1 = dicts.pop().expect("two spaces");
    Ok((d1, d2, code))
}

/// One single-space dictionary-update phase.
pub fn sweep_single(data: &Dataset, dict: Dictionary, code: SparseCode) -> Result<(Dictionary, SparseCode)> {
    let (mut dicts, code) = Sweep::new(vec![data], vec![dict], code, Rank1Update)?.run();
    Ok((dicts.pop().expect("one space"), code))
}

/// `Σᵢ ‖Xᵢ - DᵢΓ‖²_F`, evaluated from scratch.
pub fn joint_objective(data: &[&Dataset], dicts: &[&Dictionary], code: &SparseCode) -> Result<f64> {
    let mut total = 0.0;
    for (x, d) in data.iter().zip(dicts) {
        check_shapes(x, d, code)?;
        let r = residual_matrix(x, d, code);
        total += linalg::norm_sq(r.as_slice_memory_order().expect("column-major"));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::{random_dictionary, synth_coupled, SyntheticCoupled};
    use ndarray::Array2;
    use rand_distr::StandardNormal;
    use crate::sparse_coding::{code_dataset, CodingLimits};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn slice(space: usize, m: Array2<f64>) -> ErrorSlice {
        ErrorSlice::new(space, 0, m).unwrap()
    }

    fn support(values: Vec<f64>) -> AtomSupport {
        AtomSupport {
            atom: 0,
            indices: (0..values.len()).collect(),
            values,
        }
    }

    #[test]
    fn support_of_single_entry() {
        let mut cols = vec![Vec::new(); 6];
        cols[5] = vec![(2, 7.0)];
        let code = SparseCode::new(4, cols).unwrap();
        let s = support_of_row(&code, 2);
        assert_eq!((s.indices, s.values), (vec![5], vec![7.0]));
        assert!(support_of_row(&code, 3).is_empty());
    }

    #[test]
    fn support_matches_dense_scan() {
        let s = synth_coupled(6, 10, 40, 3, 1).unwrap();
        let dense = s.code.to_dense();
        for t in 0..10 {
            let sup = support_of_row(&s.code, t);
            let (idx, val): (Vec<usize>, Vec<f64>) = (0..40)
                .filter(|&i| dense[[t, i]] != 0.0)
                .map(|i| (i, dense[[t, i]]))
                .unzip();
            assert_eq!(sup.indices, idx);
            assert_eq!(sup.values, val);
        }
    }

    #[test]
    fn error_matrix_single_atom_is_signal() {
        let x = Dataset::new(array![[3.0], [4.0]]).unwrap();
        let d = Dictionary::new(array![[1.0], [0.0]]).unwrap();
        let code = SparseCode::new(1, vec![vec![(0, 2.0)]]).unwrap();
        let e = error_matrix(0, &x, &d, &code, &support_of_row(&code, 0)).unwrap();
        assert_eq!(e.column(0), &[3.0, 4.0]);
    }

    #[test]
    fn error_matrix_of_perfect_code_is_own_term() {
        let s = synth_coupled(6, 10, 30, 3, 2).unwrap();
        for t in 0..10 {
            let sup = support_of_row(&s.code, t);
            let e = error_matrix(0, &s.x1, &s.dict1, &s.code, &sup).unwrap();
            for (j, &g) in sup.values.iter().enumerate() {
                for (ev, dv) in e.column(j).iter().zip(s.dict1.atom(t)) {
                    assert!((ev - g * dv).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn update_atom_recovers_rank1_factor() {
        let u = [0.6, -0.8, 0.0];
        let g = [2.0, -1.0, 0.5, 3.0];
        let m = Array2::from_shape_fn((3, 4), |(r, c)| u[r] * g[c]);
        let e = slice(0, m);
        let d = update_atom(&e, &support(g.to_vec())).unwrap();
        for (a, b) in d.iter().zip(u) {
            assert!((a - b).abs() < 1e-15);
        }
        // sign convention: dᵀ E γᵀ >= 0 even for a flipped support
        let flipped: Vec<f64> = g.iter().map(|v| -v).collect();
        let d2 = update_atom(&e, &support(flipped.clone())).unwrap();
        let mut egt = vec![0.0; 3];
        for (j, &gj) in flipped.iter().enumerate() {
            linalg::axpy(gj, e.column(j), &mut egt);
        }
        assert!(linalg::dot(&d2, &egt) >= 0.0);
    }

    #[test]
    fn update_atom_single_signal() {
        let e = slice(0, array![[3.0], [4.0]]);
        assert_eq!(update_atom(&e, &support(vec![1.0])).unwrap(), vec![0.6, 0.8]);
        let z = slice(0, array![[0.0], [0.0]]);
        assert!(update_atom(&z, &support(vec![1.0])).is_none());
    }

    #[test]
    fn update_atom_beats_random_unit_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = Array2::from_shape_fn((8, 20), |_| rng.random_range(-1.0..1.0));
        let g: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e = slice(0, m);
        let d = update_atom(&e, &support(g.clone())).unwrap();
        // for the fixed row γ, the normalized Eγᵀ direction is the best unit atom
        let ours = e.rank1_residual_sq(&d, &g);
        for _ in 0..1000 {
            let probe = random_dictionary(8, 1, &mut rng).unwrap();
            assert!(ours <= e.rank1_residual_sq(probe.atom(0), &g) + 1e-12);
        }
    }

    #[test]
    fn joint_coeffs_half_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Array2::from_shape_fn((5, 7), |_| rng.random_range(-1.0..1.0));
        let e1 = slice(0, m.clone());
        let e2 = slice(1, m.clone());
        let d = random_dictionary(5, 1, &mut rng).unwrap();
        let a = d.atom(0);
        let joint = update_joint_coeffs(a, a, &e1, &e2).unwrap();
        let single = update_shared_coeffs(&[a], &[&e1]);
        for (x, y) in joint.iter().zip(&single) {
            assert!((x - y).abs() < 1e-12);
        }
        let neg = slice(1, m.mapv(|v| -v));
        let zero = update_joint_coeffs(a, a, &e1, &neg).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn joint_coeffs_reject_mismatch() {
        let e1 = slice(0, Array2::zeros((3, 2)));
        let e2 = slice(1, Array2::zeros((3, 3)));
        assert!(update_joint_coeffs(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &e1, &e2).is_err());
    }

    #[test]
    fn replacement_perfect_code_keeps_atoms() {
        let s = synth_coupled(6, 10, 5, 2, 4).unwrap();
        // find an unused atom
        let t = (0..10).find(|&t| support_of_row(&s.code, t).is_empty()).unwrap();
        let (a1, a2) = replace_unused_atom(&s.x1, &s.x2, &s.dict1, &s.dict2, &s.code, t).unwrap();
        assert_eq!(a1, s.dict1.atom(t));
        assert_eq!(a2, s.dict2.atom(t));
    }

    #[test]
    fn replacement_empty_code_single_signal() {
        let x1 = Dataset::new(array![[3.0], [4.0]]).unwrap();
        let x2 = Dataset::new(array![[0.0], [-2.0]]).unwrap();
        let d = Dictionary::new(array![[1.0], [0.0]]).unwrap();
        let code = SparseCode::empty(1, 1);
        let (a1, a2) = replace_unused_atom(&x1, &x2, &d, &d, &code, 0).unwrap();
        assert_eq!(a1, vec![0.6, 0.8]);
        assert_eq!(a2, vec![0.0, -1.0]);
    }

    #[test]
    fn replacement_falls_back_to_largest_column_when_mean_vanishes() {
        let x = Dataset::new(array![[1.0, -1.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let x = Dataset::new(ndarray::concatenate![ndarray::Axis(1), x.signals(), array![[0.0], [0.0]]]).unwrap();
        let d = Dictionary::new(array![[0.0], [1.0]]).unwrap();
        let code = SparseCode::empty(1, 4);
        assert_eq!(replacement_atom(&x, &d, &code, 0).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn replacement_matches_dense_mean() {
        let s = synth_coupled(6, 12, 30, 2, 8).unwrap();
        let other = random_dictionary(6, 12, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let code = code_dataset(other.atoms(), &s.x1, CodingLimits::new(1, 0.0).unwrap()).unwrap();
        let t = (0..12).find(|&t| support_of_row(&code, t).is_empty());
        let Some(t) = t else { return };
        let dense = &s.x1.signals() - &other.atoms().dot(&code.to_dense());
        let mean = dense.mean_axis(ndarray::Axis(1)).unwrap();
        let n = mean.dot(&mean).sqrt();
        let got = replacement_atom(&s.x1, &other, &code, t).unwrap();
        for (g, w) in got.iter().zip(mean.iter()) {
            assert!((g - w / n).abs() < 1e-12);
        }
        assert!(replace_unused_atom(&s.x1, &s.x2, &other, &other, &code, code.column(0)[0].0).is_err());
    }

    #[test]
    fn sweep_slices_match_direct_sum_mid_sweep() {
        let s = synth_coupled(6, 10, 40, 3, 5).unwrap();
        let d1 = random_dictionary(6, 10, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let d2 = random_dictionary(6, 10, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let joint = Dataset::stack(&[&s.x1, &s.x2]).unwrap();
        let atoms = Dictionary::stack(&[&d1, &d2]).unwrap();
        let code = code_dataset(atoms.view(), &joint, CodingLimits::new(2, 0.0).unwrap()).unwrap();
        let mut sw = Sweep::new(vec![&s.x1, &s.x2], vec![d1, d2], code, Rank1Update).unwrap();
        for t in 0..10 {
            let slices = sw.error_slices(t);
            let sup = sw.support(t);
            if !sup.is_empty() {
                for (space, e) in slices.iter().enumerate() {
                    let direct = error_matrix(space, sw.data()[space], &sw.dictionaries()[space], sw.code(), &sup).unwrap();
                    for (a, b) in e.matrix().iter().zip(direct.matrix().iter()) {
                        assert!((a - b).abs() < 1e-9);
                    }
                }
            }
            sw.step(t);
        }
    }

    #[test]
    fn sweep_single_atom_single_signal_is_stacked_rank1_optimum() {
        let x1 = Dataset::new(array![[1.0], [2.0], [2.0]]).unwrap();
        let x2 = Dataset::new(array![[0.0], [3.0]]).unwrap();
        let d1 = Dictionary::new(array![[1.0], [0.0], [0.0]]).unwrap();
        let d2 = Dictionary::new(array![[1.0], [0.0]]).unwrap();
        let code = SparseCode::new(1, vec![vec![(0, 1.0)]]).unwrap();
        let (n1, n2, code) = sweep(&x1, &x2, d1, d2, code).unwrap();
        // with one signal each atom aligns with its signal, and the shared
        // coefficient averages the two norms
        assert!((n1.atom(0)[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((n2.atom(0)[1] - 1.0).abs() < 1e-15);
        let g = code.column(0)[0].1;
        assert!((g - 3.0).abs() < 1e-12);
        let obj = joint_objective(&[&x1, &x2], &[&n1, &n2], &code).unwrap();
        // (3 - 3)² + (3 - 3)²
        assert!(obj < 1e-24);
    }

    #[test]
    fn sweep_fixed_point_on_exact_rank1() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dict1 = random_dictionary(5, 1, &mut rng).unwrap();
        let dict2 = random_dictionary(5, 1, &mut rng).unwrap();
        let columns = (0..8).map(|_| vec![(0, rng.random_range(0.5..1.5))]).collect();
        let code = SparseCode::new(1, columns).unwrap();
        let x1 = Dataset::new(code.reconstruct(&dict1).unwrap()).unwrap();
        let x2 = Dataset::new(code.reconstruct(&dict2).unwrap()).unwrap();
        let s = SyntheticCoupled { x1, x2, dict1, dict2, code };
        let (n1, n2, code) = sweep(&s.x1, &s.x2, s.dict1.clone(), s.dict2.clone(), s.code.clone()).unwrap();
        for (a, b) in n1.as_slice().iter().zip(s.dict1.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in n2.as_slice().iter().zip(s.dict2.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
        for i in 0..8 {
            assert!((code.column(i)[0].1 - s.code.column(i)[0].1).abs() < 1e-10);
        }
    }

    #[test]
    fn sweep_monotone_and_pattern_preserving() {
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let x1 = Dataset::new(Array2::from_shape_fn((6, 20), |_| rng.sample(StandardNormal))).unwrap();
            let x2 = Dataset::new(Array2::from_shape_fn((6, 20), |_| rng.sample(StandardNormal))).unwrap();
            let d1 = random_dictionary(6, 4, &mut rng).unwrap();
            let d2 = random_dictionary(6, 4, &mut rng).unwrap();
            let joint = Dataset::stack(&[&x1, &x2]).unwrap();
            let atoms = Dictionary::stack(&[&d1, &d2]).unwrap();
            let code = code_dataset(atoms.view(), &joint, CodingLimits::new(2, 0.0).unwrap()).unwrap();
            let before = joint_objective(&[&x1, &x2], &[&d1, &d2], &code).unwrap();
            let pattern: Vec<Vec<usize>> = code.columns().iter().map(|c| c.iter().map(|e| e.0).collect()).collect();
            let (n1, n2, out) = sweep(&x1, &x2, d1, d2, code).unwrap();
            let after = joint_objective(&[&x1, &x2], &[&n1, &n2], &out).unwrap();
            assert!(after <= before * (1.0 + 1e-12) + 1e-12, "seed {seed}: {before} -> {after}");
            let new_pattern: Vec<Vec<usize>> = out.columns().iter().map(|c| c.iter().map(|e| e.0).collect()).collect();
            assert_eq!(pattern, new_pattern);
            for t in 0..4 {
                assert!((linalg::norm(n1.atom(t)) - 1.0).abs() < 1e-9);
                assert!((linalg::norm(n2.atom(t)) - 1.0).abs() < 1e-9);
            }
        }
    }
}
