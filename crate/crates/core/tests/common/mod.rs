//! Independent reference implementations used by the integration tests.
//! They share no numerics with the library: dense matrices, nalgebra
//! factorizations, fresh solves at every step.
#![allow(dead_code)]

use cdl::{Dataset, Dictionary, SparseCode};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn to_na(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

pub fn unit_columns(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut a = gaussian(rows, cols, rng);
    for mut c in a.columns_mut() {
        let n = c.dot(&c).sqrt();
        c.mapv_inplace(|v| v / n);
    }
    a
}

/// Least squares through the SVD pseudo-inverse.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone().svd(true, true).solve(b, 1e-14).expect("svd solve")
}

pub struct GreedyStep {
    pub atom: usize,
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub residual: Vec<f64>,
}

/// Plain OMP: full correlation re-scan over non-selected atoms (ties to the
/// lowest index) and a fresh least-squares solve at every step.
pub fn greedy_omp(atoms: ArrayView2<'_, f64>, x: &[f64], max_nnz: usize, eps: f64) -> Vec<GreedyStep> {
    let d = to_na(atoms);
    let xv = DVector::from_column_slice(x);
    let mut r = xv.clone();
    let mut support: Vec<usize> = Vec::new();
    let mut steps = Vec::new();
    while support.len() < max_nnz && r.norm_squared() > eps {
        let mut best: Option<(usize, f64)> = None;
        for t in (0..d.ncols()).filter(|t| !support.contains(t)) {
            let c = d.column(t).dot(&r).abs();
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((t, c));
            }
        }
        let Some((t, c)) = best else { break };
        if c < 1e-12 {
            break;
        }
        support.push(t);
        let sub = d.select_columns(&support);
        let g = lstsq(&sub, &xv);
        r = &xv - &sub * &g;
        steps.push(GreedyStep {
            atom: t,
            support: support.clone(),
            coefficients: g.iter().copied().collect(),
            residual: r.iter().copied().collect(),
        });
    }
    steps
}

/// `Σᵢ ‖Xᵢ − DᵢΓ‖²_F` with dense matrices.
pub fn dense_objective(data: &[&Dataset], dicts: &[&Dictionary], code: &SparseCode) -> f64 {
    let g = code.to_dense();
    data.iter()
        .zip(dicts)
        .map(|(x, d)| {
            let r = &x.signals() - &d.atoms().dot(&g);
            r.iter().map(|v| v * v).sum::<f64>()
        })
        .sum()
}

/// Singular values of `a`, descending.
pub fn singular_values(a: ArrayView2<'_, f64>) -> Vec<f64> {
    let mut s: Vec<f64> = to_na(a).singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Greedy one-to-one matching on |cosine| between stacked joint atoms.
/// Returns the fraction of `truth` atoms matched above `threshold`.
pub fn recovery_rate(truth: &[Vec<f64>], learned: &[Vec<f64>], threshold: f64) -> f64 {
    let unit = |v: &Vec<f64>| {
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter().map(|a| a / n).collect::<Vec<_>>()
    };
    let t: Vec<Vec<f64>> = truth.iter().map(unit).collect();
    let l: Vec<Vec<f64>> = learned.iter().map(unit).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in t.iter().enumerate() {
        for (j, b) in l.iter().enumerate() {
            let c: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            pairs.push((c.abs(), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut used_t, mut used_l) = (vec![false; t.len()], vec![false; l.len()]);
    let mut hits = 0;
    for (c, i, j) in pairs {
        if used_t[i] || used_l[j] {
            continue;
        }
        used_t[i] = true;
        used_l[j] = true;
        if c > threshold {
            hits += 1;
        }
    }
    hits as f64 / t.len() as f64
}

/// Columns `[d1; d2]` of a coupled pair.
pub fn joint_atoms(d1: &Dictionary, d2: &Dictionary) -> Vec<Vec<f64>> {
    (0..d1.natoms())
        .map(|t| d1.atom(t).iter().chain(d2.atom(t)).copied().collect())
        .collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}
