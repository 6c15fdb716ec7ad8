use std::f64::consts::PI;

use super::Dictionary;
use crate::error::{invalid, Result};
use crate::linalg::{self, col_mut};

pub fn is_perfect_square(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// Overcomplete separable 2-D DCT dictionary.
///
/// Atoms are outer products of `sqrt(natoms)` sampled DCT-II cosines of
/// length `sqrt(dim)`, flattened row-major. Every atom except the first
/// (DC) one has its mean removed before normalization, unless atoms are a
/// single pixel. With
/// `natoms == dim` this is the orthonormal 2-D DCT-II basis.
pub fn dct_dictionary(dim: usize, natoms: usize) -> Result<Dictionary> {
    let (Some(side), Some(freqs)) = (is_perfect_square(dim), is_perfect_square(natoms)) else {
        return invalid(format!(
            "2-D DCT dictionary needs square sizes, got dim {dim}, natoms {natoms}"
        ));
    };
    if dim == 0 || natoms < dim {
        return invalid(format!(
            "DCT dictionary needs natoms >= dim >= 1, got dim {dim}, natoms {natoms}"
        ));
    }

    let basis: Vec<Vec<f64>> = (0..freqs)
        .map(|k| {
            (0..side)
                .map(|i| (PI * (2 * i + 1) as f64 * k as f64 / (2 * freqs) as f64).cos())
                .collect()
        })
        .collect();

    let mut atoms = linalg::zeros_f(dim, natoms);
    for a in 0..freqs {
        for b in 0..freqs {
            let t = a * freqs + b;
            let atom = col_mut(&mut atoms, t);
            for r in 0..side {
                for c in 0..side {
                    atom[r * side + c] = basis[a][r] * basis[b][c];
                }
            }
            // a 1-pixel atom has nothing left after mean removal
            if t != 0 && side > 1 {
                let mean = atom.iter().sum::<f64>() / dim as f64;
                atom.iter_mut().for_each(|v| *v -= mean);
            }
        }
    }
    Dictionary::from_unnormalized(atoms)
}
