//! Joint orthogonal matching pursuit.
//!
//! Coupled coding is ordinary OMP over the stacked dictionary `[D1; D2]`
//! and stacked signals `[x1; x2]`: least squares on the stacked system at a
//! fixed support minimizes the sum of both per-space errors, so a single
//! code column serves both feature spaces.
//!
//! The coder precomputes the Gram matrix of the atoms. Correlations with the
//! residual are then updated as `Dᵀx - G[:, S] c` and the support Gram is
//! factored incrementally, one Cholesky row per selected atom.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::datapipe::{Dataset, Dictionary};
use crate::error::{invalid, CdlError, Result};
use crate::linalg::{self, col, IncrementalCholesky};

/// Below this maximal |correlation| a signal is considered exhausted.
pub const CORRELATION_UNDERFLOW: f64 = 1e-12;

/// Relative tolerance on the Cholesky pivot of a newly selected atom.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// One sparse code column: `(atom index, coefficient)` sorted by index.
pub type SparseColumn = Vec<(usize, f64)>;

/// Column-sparse coefficient matrix shared by all feature spaces.
///
/// Coefficients are finite; an exact zero may appear transiently as a stored
/// entry after a dictionary sweep and disappears at the next coding phase.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    natoms: usize,
    columns: Vec<SparseColumn>,
}

impl SparseCode {
    pub fn new(natoms: usize, columns: Vec<SparseColumn>) -> Result<Self> {
        for (i, c) in columns.iter().enumerate() {
            for w in c.windows(2) {
                if w[0].0 >= w[1].0 {
                    return invalid(format!("column {i}: indices not strictly increasing"));
                }
            }
            if let Some(&(t, v)) = c.iter().find(|(t, v)| *t >= natoms || !v.is_finite()) {
                return invalid(format!("column {i}: bad entry ({t}, {v})"));
            }
        }
        Ok(Self { natoms, columns })
    }

    pub fn empty(natoms: usize, count: usize) -> Self {
        Self {
            natoms,
            columns: vec![Vec::new(); count],
        }
    }

    pub fn natoms(&self) -> usize {
        self.natoms
    }

    pub fn count(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, i: usize) -> &[(usize, f64)] {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[SparseColumn] {
        &self.columns
    }

    pub(crate) fn entry_mut(&mut self, col: usize, pos: usize) -> &mut f64 {
        &mut self.columns[col][pos].1
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn avg_nonzeros(&self) -> f64 {
        if self.columns.is_empty() {
            0.0
        } else {
            self.nnz() as f64 / self.columns.len() as f64
        }
    }

    /// Dense `natoms x count` matrix.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.natoms, self.count()));
        for (i, c) in self.columns.iter().enumerate() {
            for &(t, v) in c {
                out[[t, i]] = v;
            }
        }
        out
    }

    /// `D * Γ` as a column-major matrix.
    pub fn reconstruct(&self, dict: &Dictionary) -> Result<Array2<f64>> {
        if dict.natoms() != self.natoms {
            return Err(CdlError::ShapeMismatch(format!(
                "dictionary has {} atoms, code expects {}",
                dict.natoms(),
                self.natoms
            )));
        }
        let mut out = linalg::zeros_f(dict.dim(), self.count());
        for (i, c) in self.columns.iter().enumerate() {
            let dst = linalg::col_mut(&mut out, i);
            for &(t, v) in c {
                linalg::axpy(v, dict.atom(t), dst);
            }
        }
        Ok(out)
    }
}

/// Per-column stopping limits: at most `max_nonzeros` atoms, stop once the
/// squared residual norm is `<= error_threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodingLimits {
    max_nonzeros: usize,
    error_threshold: f64,
}

impl CodingLimits {
    pub fn new(max_nonzeros: usize, error_threshold: f64) -> Result<Self> {
        if max_nonzeros == 0 {
            return invalid("max_nonzeros must be at least 1");
        }
        if !(error_threshold >= 0.0 && error_threshold.is_finite()) {
            return invalid(format!("error threshold must be >= 0, got {error_threshold}"));
        }
        Ok(Self {
            max_nonzeros,
            error_threshold,
        })
    }

    pub fn max_nonzeros(&self) -> usize {
        self.max_nonzeros
    }

    pub fn error_threshold(&self) -> f64 {
        self.error_threshold
    }
}

/// Why coding of one signal ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ErrorThreshold,
    MaxNonzeros,
    CorrelationUnderflow,
    RankDeficient,
    /// Every atom is already in the support.
    Exhausted,
}

/// State after one OMP iteration, in selection order.
#[derive(Debug)]
pub struct OmpStep<'a> {
    pub atom: usize,
    pub correlation: f64,
    pub support: &'a [usize],
    pub coefficients: &'a [f64],
    pub residual: &'a [f64],
    pub residual_norm_sq: f64,
}

fn best_match(correlations: &[f64], excluded: &[bool]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (t, (&c, &skip)) in correlations.iter().zip(excluded).enumerate() {
        if skip {
            continue;
        }
        match best {
            Some((_, b)) if c.abs() <= b.abs() => {}
            _ => best = Some((t, c)),
        }
    }
    best
}

/// Index of the atom with the largest `|dₜᵀ r|` outside `excluded`, with its
/// signed correlation. Ties go to the smallest index. `None` when every atom
/// is excluded; a zero correlation is returned as-is for the caller to judge.
pub fn match_atom(
    atoms: ArrayView2<'_, f64>,
    residual: &[f64],
    excluded: &[usize],
) -> Result<Option<(usize, f64)>> {
    if residual.len() != atoms.nrows() {
        return Err(CdlError::ShapeMismatch(format!(
            "residual length {} vs atom length {}",
            residual.len(),
            atoms.nrows()
        )));
    }
    let mut mask = vec![false; atoms.ncols()];
    for &s in excluded {
        if let Some(m) = mask.get_mut(s) {
            *m = true;
        }
    }
    let corr: Vec<f64> = atoms.columns().into_iter().map(|d| d.dot(&ndarray::aview1(residual))).collect();
    Ok(best_match(&corr, &mask))
}

/// Least-squares coefficients of `signal` on the atoms in `support`.
pub fn solve_ls_on_support(
    atoms: ArrayView2<'_, f64>,
    signal: &[f64],
    support: &[usize],
) -> Result<Vec<f64>> {
    if signal.len() != atoms.nrows() {
        return Err(CdlError::ShapeMismatch(format!(
            "signal length {} vs atom length {}",
            signal.len(),
            atoms.nrows()
        )));
    }
    if let Some(&t) = support.iter().find(|&&t| t >= atoms.ncols()) {
        return invalid(format!("support index {t} out of range"));
    }
    let cols: Vec<Vec<f64>> = support.iter().map(|&t| atoms.column(t).to_vec()).collect();
    let mut chol = IncrementalCholesky::with_capacity(support.len().max(1));
    for (k, c) in cols.iter().enumerate() {
        let cross: Vec<f64> = cols[..k].iter().map(|p| linalg::dot(p, c)).collect();
        if !chol.push(&cross, linalg::norm_sq(c), RANK_TOLERANCE) {
            return Err(CdlError::RankDeficient(k + 1));
        }
    }
    let rhs: Vec<f64> = cols.iter().map(|c| linalg::dot(c, signal)).collect();
    Ok(chol.solve(&rhs))
}

/// OMP over a fixed atom matrix with a precomputed Gram matrix.
///
/// The atoms need not be unit norm; in coupled mode they are the stacked
/// columns `[d1; d2]` with squared norm 2.
#[derive(Debug, Clone)]
pub struct OmpCoder {
    atoms: Array2<f64>,
    // symmetric, natoms x natoms, column t contiguous
    gram: Array2<f64>,
}

impl OmpCoder {
    pub fn new(atoms: ArrayView2<'_, f64>) -> Result<Self> {
        if atoms.nrows() == 0 || atoms.ncols() == 0 {
            return invalid("empty atom matrix");
        }
        let atoms = linalg::to_col_major(atoms);
        let k = atoms.ncols();
        let mut gram = linalg::zeros_f(k, k);
        for s in 0..k {
            for t in s..k {
                let g = linalg::dot(col(&atoms, s), col(&atoms, t));
                gram[[s, t]] = g;
                gram[[t, s]] = g;
            }
        }
        Ok(Self { atoms, gram })
    }

    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn natoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn encode(&self, signal: &[f64], limits: CodingLimits) -> (SparseColumn, StopReason) {
        self.encode_observed(signal, limits, |_| {})
    }

    /// Runs OMP, calling `observer` after every completed iteration.
    pub fn encode_observed<F>(
        &self,
        signal: &[f64],
        limits: CodingLimits,
        mut observer: F,
    ) -> (SparseColumn, StopReason)
    where
        F: FnMut(&OmpStep<'_>),
    {
        assert_eq!(signal.len(), self.dim(), "signal length must match atom length");
        let k = self.natoms();
        let cap = limits.max_nonzeros.min(k);

        let projections: Vec<f64> = (0..k).map(|t| linalg::dot(col(&self.atoms, t), signal)).collect();
        let mut correlations = projections.clone();
        let mut residual = signal.to_vec();
        let mut err = linalg::norm_sq(signal);

        let mut excluded = vec![false; k];
        let mut support: Vec<usize> = Vec::with_capacity(cap);
        let mut coeffs: Vec<f64> = Vec::new();
        let mut chol = IncrementalCholesky::with_capacity(cap.max(1));

        let reason = loop {
            if err <= limits.error_threshold {
                break StopReason::ErrorThreshold;
            }
            if support.len() >= limits.max_nonzeros {
                break StopReason::MaxNonzeros;
            }
            let Some((t, corr)) = best_match(&correlations, &excluded) else {
                break StopReason::Exhausted;
            };
            if corr.abs() < CORRELATION_UNDERFLOW {
                break StopReason::CorrelationUnderflow;
            }
            let gram_t = col(&self.gram, t);
            let cross: Vec<f64> = support.iter().map(|&s| gram_t[s]).collect();
            if !chol.push(&cross, gram_t[t], RANK_TOLERANCE) {
                break StopReason::RankDeficient;
            }
            support.push(t);
            excluded[t] = true;

            let rhs: Vec<f64> = support.iter().map(|&s| projections[s]).collect();
            coeffs = chol.solve(&rhs);

            residual.copy_from_slice(signal);
            correlations.copy_from_slice(&projections);
            for (&s, &c) in support.iter().zip(&coeffs) {
                linalg::axpy(-c, col(&self.atoms, s), &mut residual);
                linalg::axpy(-c, col(&self.gram, s), &mut correlations);
            }
            err = linalg::norm_sq(&residual);

            observer(&OmpStep {
                atom: t,
                correlation: corr,
                support: &support,
                coefficients: &coeffs,
                residual: &residual,
                residual_norm_sq: err,
            });
        };

        let mut column: SparseColumn = support
            .into_iter()
            .zip(coeffs)
            .filter(|&(_, c)| c != 0.0)
            .collect();
        column.sort_unstable_by_key(|&(t, _)| t);
        (column, reason)
    }
}

/// Codes one (joint) signal. Builds a coder on the fly; prefer
/// [`OmpCoder`] or [`code_dataset`] for many signals.
pub fn omp_joint(
    atoms: ArrayView2<'_, f64>,
    signal: &[f64],
    limits: CodingLimits,
) -> Result<SparseColumn> {
    if signal.len() != atoms.nrows() {
        return Err(CdlError::ShapeMismatch(format!(
            "signal length {} vs atom length {}",
            signal.len(),
            atoms.nrows()
        )));
    }
    Ok(OmpCoder::new(atoms)?.encode(signal, limits).0)
}

/// Codes every column of `data`. Columns are processed in parallel; the
/// result is identical to coding them one by one.
pub fn code_dataset(
    atoms: ArrayView2<'_, f64>,
    data: &Dataset,
    limits: CodingLimits,
) -> Result<SparseCode> {
    if data.dim() != atoms.nrows() {
        return Err(CdlError::ShapeMismatch(format!(
            "data dim {} vs atom length {}",
            data.dim(),
            atoms.nrows()
        )));
    }
    let coder = OmpCoder::new(atoms)?;
    let columns: Vec<SparseColumn> = (0..data.count())
        .into_par_iter()
        .map(|i| coder.encode(data.column(i), limits).0)
        .collect();
    SparseCode::new(coder.natoms(), columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_atoms(m: usize, k: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        crate::datapipe::random_dictionary(m, k, &mut rng)
            .unwrap()
            .atoms()
            .to_owned()
    }

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn match_atom_coordinate_selection() {
        let eye = Array2::<f64>::eye(3);
        assert_eq!(match_atom(eye.view(), &[0.0, 5.0, 0.0], &[]).unwrap(), Some((1, 5.0)));
        assert_eq!(match_atom(eye.view(), &[0.0, -5.0, 0.0], &[1]).unwrap().unwrap().1, 0.0);
        assert_eq!(match_atom(eye.view(), &[1.0, 1.0, 1.0], &[0, 1, 2]).unwrap(), None);
    }

    #[test]
    fn match_atom_zero_residual_returns_first_index() {
        let eye = Array2::<f64>::eye(3);
        assert_eq!(match_atom(eye.view(), &[0.0; 3], &[]).unwrap(), Some((0, 0.0)));
    }

    #[test]
    fn match_atom_ties_break_low() {
        let d = array![[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        assert_eq!(match_atom(d.view(), &[2.0, 2.0], &[]).unwrap().unwrap().0, 0);
        assert_eq!(match_atom(d.view(), &[2.0, 2.0], &[0]).unwrap().unwrap().0, 1);
    }

    #[test]
    fn match_atom_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..20 {
            let d = random_atoms(6, 12, seed);
            let r = random_vec(6, &mut rng);
            let (best, _) = match_atom(d.view(), &r, &[]).unwrap().unwrap();
            let scan: Vec<f64> = (0..12).map(|t| d.column(t).dot(&ndarray::aview1(&r)).abs()).collect();
            let max = scan.iter().cloned().fold(0.0, f64::max);
            assert_eq!(scan[best], max);
        }
    }

    #[test]
    fn ls_single_atom_and_orthonormal() {
        let d = random_atoms(5, 4, 1);
        let x: Vec<f64> = d.column(2).iter().map(|v| 3.0 * v).collect();
        let c = solve_ls_on_support(d.view(), &x, &[2]).unwrap();
        assert!((c[0] - 3.0).abs() < 1e-12);

        let eye = Array2::<f64>::eye(4);
        let c = solve_ls_on_support(eye.view(), &[1.0, -2.0, 3.0, 4.0], &[3, 1]).unwrap();
        assert!((c[0] - 4.0).abs() < 1e-15 && (c[1] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn ls_matches_normal_equations_oracle() {
        use nalgebra::{DMatrix, DVector};
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for seed in 0..20 {
            let d = random_atoms(8, 3, 100 + seed);
            let x = random_vec(8, &mut rng);
            let c = solve_ls_on_support(d.view(), &x, &[0, 1, 2]).unwrap();
            let a = DMatrix::from_fn(8, 3, |i, j| d[[i, j]]);
            let b = DVector::from_vec(x.clone());
            let want = (a.transpose() * &a).lu().solve(&(a.transpose() * b)).unwrap();
            for j in 0..3 {
                assert!((c[j] - want[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ls_rejects_dependent_support() {
        let d = array![[1.0, 1.0], [0.0, 0.0]];
        assert!(matches!(
            solve_ls_on_support(d.view(), &[1.0, 0.0], &[0, 1]),
            Err(CdlError::RankDeficient(2))
        ));
    }

    #[test]
    fn omp_exact_atom() {
        let d = random_atoms(8, 16, 5);
        let x = d.column(7).to_vec();
        let limits = CodingLimits::new(4, 1e-20).unwrap();
        let col = omp_joint(d.view(), &x, limits).unwrap();
        assert_eq!(col.len(), 1);
        assert_eq!(col[0].0, 7);
        assert!((col[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn omp_orthonormal_recovery() {
        let eye = Array2::<f64>::eye(4);
        let limits = CodingLimits::new(2, 0.0).unwrap();
        let col = omp_joint(eye.view(), &[0.0, 2.0, 3.0, 0.0], limits).unwrap();
        assert_eq!(col, vec![(1, 2.0), (2, 3.0)]);
    }

    #[test]
    fn omp_stops_on_threshold_before_any_atom() {
        let eye = Array2::<f64>::eye(3);
        let limits = CodingLimits::new(3, 4.0).unwrap();
        let coder = OmpCoder::new(eye.view()).unwrap();
        let (col, why) = coder.encode(&[1.0, 1.0, 0.0], limits);
        assert!(col.is_empty());
        assert_eq!(why, StopReason::ErrorThreshold);
    }

    #[test]
    fn omp_stops_on_zero_correlation() {
        let d = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let coder = OmpCoder::new(d.view()).unwrap();
        let (col, why) = coder.encode(&[0.0, 0.0, 1.0], CodingLimits::new(2, 0.0).unwrap());
        assert!(col.is_empty());
        assert_eq!(why, StopReason::CorrelationUnderflow);
    }

    #[test]
    fn omp_stops_on_nearly_dependent_atom() {
        // after taking atom 1 the residual still correlates with atom 0, but
        // atom 0 is within 1e-6 rad of atom 1
        let delta: f64 = 1e-6;
        let d = array![[1.0, delta.cos()], [0.0, delta.sin()]];
        let coder = OmpCoder::new(d.view()).unwrap();
        let (col, why) = coder.encode(&[1.0, 1.0], CodingLimits::new(2, 0.0).unwrap());
        assert_eq!(why, StopReason::RankDeficient);
        assert_eq!(col.len(), 1);
        assert_eq!(col[0].0, 1);
    }

    #[test]
    fn omp_residual_orthogonal_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..25 {
            let d = random_atoms(10, 20, 200 + seed);
            let x = random_vec(10, &mut rng);
            let coder = OmpCoder::new(d.view()).unwrap();
            let mut prev = linalg::norm_sq(&x);
            let (col, _) = coder.encode_observed(&x, CodingLimits::new(6, 0.0).unwrap(), |step| {
                for &s in step.support {
                    let c = d.column(s).dot(&ndarray::aview1(step.residual));
                    assert!(c.abs() < 1e-8);
                }
                assert!(step.residual_norm_sq <= prev + 1e-12);
                prev = step.residual_norm_sq;
            });
            assert!(col.len() <= 6);
            // final residual equals x - D gamma
            let mut r = x.clone();
            for &(t, v) in &col {
                linalg::axpy(-v, &d.column(t).to_vec(), &mut r);
            }
            assert!((linalg::norm_sq(&r) - prev).abs() < 1e-10);
        }
    }

    #[test]
    fn code_dataset_on_atoms_gives_identity_pattern() {
        let d = random_atoms(6, 9, 8);
        let data = Dataset::new(d.clone()).unwrap();
        let code = code_dataset(d.view(), &data, CodingLimits::new(3, 1e-20).unwrap()).unwrap();
        for i in 0..9 {
            assert_eq!(code.column(i).len(), 1);
            assert_eq!(code.column(i)[0].0, i);
        }
    }

    #[test]
    fn code_dataset_parallel_equals_serial() {
        let s = crate::datapipe::synth_coupled(12, 24, 64, 3, 5).unwrap();
        let atoms = s.dict1.atoms();
        let limits = CodingLimits::new(5, 1e-3).unwrap();
        let par = code_dataset(atoms, &s.x1, limits).unwrap();
        let coder = OmpCoder::new(atoms).unwrap();
        for i in 0..64 {
            assert_eq!(par.column(i), coder.encode(s.x1.column(i), limits).0.as_slice());
        }
    }

    #[test]
    fn sparse_code_validation() {
        assert!(SparseCode::new(3, vec![vec![(2, 1.0), (1, 1.0)]]).is_err());
        assert!(SparseCode::new(3, vec![vec![(3, 1.0)]]).is_err());
        assert!(SparseCode::new(3, vec![vec![(0, f64::NAN)]]).is_err());
        let c = SparseCode::new(3, vec![vec![(0, 1.0), (2, -2.0)], vec![]]).unwrap();
        assert_eq!(c.nnz(), 2);
        assert_eq!(c.avg_nonzeros(), 1.0);
        assert_eq!(c.to_dense()[[2, 0]], -2.0);
    }

    #[test]
    fn coding_limits_validation() {
        assert!(CodingLimits::new(0, 1.0).is_err());
        assert!(CodingLimits::new(1, -1.0).is_err());
        assert!(CodingLimits::new(1, f64::NAN).is_err());
    }
}
