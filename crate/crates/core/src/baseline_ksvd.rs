//! K-SVD reference learner.
//!
//! Coding runs at a constant sparsity limit and every used atom is replaced
//! by the leading left singular vector of its restricted error matrix, with
//! the row set to `σ₁ v₁ᵀ`. The leading triple comes from power iteration.

use crate::datapipe::Dataset;
use crate::dict_update::{AtomSupport, AtomUpdate, AtomUpdateResult, ErrorSlice};
use crate::error::{invalid, Result};
use crate::learner::{self, CoupledModel, LearnConfig, ScheduleMode};
use crate::linalg;

pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERATIONS: usize = 1000;
const GRAM_SQUARINGS: usize = 64;

/// Which Gram matrix the power iteration runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvdStrategy {
    /// `E Eᵀ`, `m x m`: cost linear in the number of columns.
    #[default]
    RowGram,
    /// `Eᵀ E`, `|ω| x |ω|`: the cost order of a full SVD when `|ω| > m`.
    /// Only used as a timing comparator.
    ColumnGram,
}

/// Matrix-vector power steps until the iterate moves less than
/// `POWER_TOLERANCE`. Returns the iterate and whether it converged.
fn power_steps(gram: &[f64], n: usize, mut v: Vec<f64>, max_steps: usize) -> (Vec<f64>, bool) {
    let mut next = vec![0.0; n];
    for _ in 0..max_steps {
        for (i, out) in next.iter_mut().enumerate() {
            *out = linalg::dot(&gram[i * n..(i + 1) * n], &v);
        }
        let Some(unit) = linalg::normalized(next.clone()) else {
            return (v, true);
        };
        let delta: f64 = unit.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        v = unit;
        if delta < POWER_TOLERANCE {
            return (v, true);
        }
    }
    (v, false)
}

/// `G²` scaled to unit max entry; `None` if it vanishes.
fn square_scaled(gram: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for c in r..n {
            // G is symmetric: row r times row c
            let v = linalg::dot(&gram[r * n..(r + 1) * n], &gram[c * n..(c + 1) * n]);
            out[r * n + c] = v;
            out[c * n + r] = v;
        }
    }
    let scale = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (scale > 0.0 && scale.is_finite()).then(|| out.iter().map(|v| v / scale).collect())
}

/// Leading eigenvector of a symmetric PSD `n x n` matrix. When the spectral
/// gap is too small for `POWER_MAX_ITERATIONS` plain steps, iteration
/// continues on successive squares of the matrix, each squaring the
/// eigenvalue ratio.
fn power_iterate(gram: &[f64], n: usize, v: Vec<f64>) -> Vec<f64> {
    let (mut v, converged) = power_steps(gram, n, v, POWER_MAX_ITERATIONS);
    let mut g = gram.to_vec();
    if !converged {
        for _ in 0..GRAM_SQUARINGS {
            let Some(sq) = square_scaled(&g, n) else { break };
            g = sq;
            let (next, done) = power_steps(&g, n, v, 1);
            v = next;
            if done {
                break;
            }
        }
    }
    v
}

fn start_vector(error: &ErrorSlice, support: &AtomSupport) -> Option<Vec<f64>> {
    let mut v = vec![0.0; error.rows()];
    for (j, &g) in support.values.iter().enumerate() {
        linalg::axpy(g, error.column(j), &mut v);
    }
    linalg::normalized(v).or_else(|| {
        let j = (0..error.cols()).max_by(|&a, &b| {
            linalg::norm_sq(error.column(a)).total_cmp(&linalg::norm_sq(error.column(b)))
        })?;
        linalg::normalized(error.column(j).to_vec())
    })
}

fn row_of(error: &ErrorSlice, atom: &[f64]) -> Vec<f64> {
    (0..error.cols()).map(|j| linalg::dot(atom, error.column(j))).collect()
}

/// Leading singular pair of `E` as `(u₁, σ₁ v₁ᵀ)`. The sign is chosen so the
/// new row correlates nonnegatively with `support.values`. `None` for a zero
/// matrix.
pub fn ksvd_update_atom(error: &ErrorSlice, support: &AtomSupport) -> Option<(Vec<f64>, Vec<f64>)> {
    ksvd_update_atom_with(error, support, SvdStrategy::RowGram)
}

pub fn ksvd_update_atom_with(
    error: &ErrorSlice,
    support: &AtomSupport,
    strategy: SvdStrategy,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let start = start_vector(error, support)?;
    let (m, w) = (error.rows(), error.cols());
    let mut atom = match strategy {
        SvdStrategy::RowGram => {
            let mut gram = vec![0.0; m * m];
            for j in 0..w {
                let e = error.column(j);
                for r in 0..m {
                    let er = e[r];
                    for c in r..m {
                        gram[r * m + c] += er * e[c];
                    }
                }
            }
            for r in 0..m {
                for c in 0..r {
                    gram[r * m + c] = gram[c * m + r];
                }
            }
            power_iterate(&gram, m, start)
        }
        SvdStrategy::ColumnGram => {
            let mut gram = vec![0.0; w * w];
            for a in 0..w {
                for b in a..w {
                    let g = linalg::dot(error.column(a), error.column(b));
                    gram[a * w + b] = g;
                    gram[b * w + a] = g;
                }
            }
            let v0 = linalg::normalized(row_of(error, &start))?;
            let v = power_iterate(&gram, w, v0);
            let mut u = vec![0.0; m];
            for (j, &vj) in v.iter().enumerate() {
                linalg::axpy(vj, error.column(j), &mut u);
            }
            linalg::normalized(u)?
        }
    };
    let mut row = row_of(error, &atom);
    if linalg::dot(&row, &support.values) < 0.0 {
        atom.iter_mut().for_each(|v| *v = -*v);
        row.iter_mut().for_each(|v| *v = -*v);
    }
    Some((atom, row))
}

/// Per-atom SVD rule for a single feature space.
#[derive(Debug, Clone, Copy, Default)]
pub struct KsvdUpdate {
    pub strategy: SvdStrategy,
}

impl AtomUpdate for KsvdUpdate {
    fn update(
        &self,
        errors: &[ErrorSlice],
        support: &AtomSupport,
        _current: &[&[f64]],
    ) -> Option<AtomUpdateResult> {
        assert_eq!(errors.len(), 1, "K-SVD update is single-space");
        let (atom, coefficients) = ksvd_update_atom_with(&errors[0], support, self.strategy)?;
        Some(AtomUpdateResult {
            atoms: vec![atom],
            coefficients,
        })
    }
}

/// K-SVD on one feature space: OMP at the constant limit
/// `config.max_nonzeros` for `config.cycles` cycles, SVD atom updates.
/// `config.schedule` is ignored.
pub fn learn_ksvd(data: &Dataset, config: &LearnConfig) -> Result<CoupledModel> {
    learn_ksvd_observed(data, config, |_| {})
}

pub fn learn_ksvd_observed<F>(data: &Dataset, config: &LearnConfig, observer: F) -> Result<CoupledModel>
where
    F: FnMut(&learner::CycleReport<'_>),
{
    if config.cycles == 0 {
        return invalid("K-SVD needs at least one cycle");
    }
    let schedule = learner::sparsity_schedule(config.cycles, config.max_nonzeros, ScheduleMode::Constant);
    let (mut dicts, code, metrics) =
        learner::run_cycles(&[data], config, &schedule, KsvdUpdate::default(), observer)?;
    CoupledModel::single(dicts.pop().expect("one space"), code, metrics)
}
