use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Dataset, Dictionary};
use crate::error::{invalid, Result};
use crate::linalg::{self, col_mut};
use crate::sparse_coding::SparseCode;

/// Ground truth for a coupled recovery experiment: `x1 = dict1 * code` and
/// `x2 = dict2 * code`, noiseless.
#[derive(Debug, Clone)]
pub struct SyntheticCoupled {
    pub x1: Dataset,
    pub x2: Dataset,
    pub dict1: Dictionary,
    pub dict2: Dictionary,
    pub code: SparseCode,
}

/// I.i.d. standard normal columns, normalized.
pub fn random_dictionary<R: Rng>(dim: usize, natoms: usize, rng: &mut R) -> Result<Dictionary> {
    if dim == 0 || natoms == 0 {
        return invalid("random dictionary needs positive sizes");
    }
    let mut atoms = linalg::zeros_f(dim, natoms);
    for t in 0..natoms {
        loop {
            let c = col_mut(&mut atoms, t);
            c.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let n = linalg::norm(c);
            if n > 1e-12 {
                c.iter_mut().for_each(|v| *v /= n);
                break;
            }
        }
    }
    Dictionary::new(atoms)
}

pub fn synth_coupled(
    dim: usize,
    natoms: usize,
    nsignals: usize,
    sparsity: usize,
    seed: u64,
) -> Result<SyntheticCoupled> {
    if sparsity == 0 || sparsity > dim {
        return invalid(format!("sparsity must be in 1..={dim}, got {sparsity}"));
    }
    if natoms < dim {
        return invalid(format!("natoms {natoms} must be >= dim {dim}"));
    }
    if nsignals == 0 {
        return invalid("need at least one signal");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dict1 = random_dictionary(dim, natoms, &mut rng)?;
    let dict2 = random_dictionary(dim, natoms, &mut rng)?;

    let columns = (0..nsignals)
        .map(|_| {
            let mut support = index::sample(&mut rng, natoms, sparsity).into_vec();
            support.sort_unstable();
            support
                .into_iter()
                .map(|t| {
                    let mag: f64 = rng.random_range(0.5..=1.5);
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    (t, sign * mag)
                })
                .collect()
        })
        .collect();
    let code = SparseCode::new(natoms, columns)?;
    let x1 = Dataset::new(code.reconstruct(&dict1)?)?;
    let x2 = Dataset::new(code.reconstruct(&dict2)?)?;
    Ok(SyntheticCoupled {
        x1,
        x2,
        dict1,
        dict2,
        code,
    })
}
