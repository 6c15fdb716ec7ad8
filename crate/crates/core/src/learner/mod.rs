//! Alternating coding / dictionary-update cycles.
//!
//! Each cycle codes the stacked signals with joint OMP at the scheduled
//! sparsity limit, then sweeps every atom once. Γ is rebuilt from scratch
//! each cycle.

mod model_io;

use std::time::Instant;

use log::warn;
use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datapipe::{dct_dictionary, is_perfect_square, random_dictionary, Dataset, Dictionary};
use crate::dict_update::{joint_objective, AtomUpdate, Rank1Update, Sweep};
use crate::error::{invalid, CdlError, Result};
use crate::linalg;
use crate::sparse_coding::{code_dataset, CodingLimits, SparseCode};

pub use model_io::{
    decode_dataset, decode_model, encode_dataset, encode_model, load_dataset, load_model, save_dataset,
    save_model, FormatError, DATASET_MAGIC, FORMAT_VERSION, MODEL_MAGIC,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScheduleMode {
    /// Limits ramp from 1 to `T₀`.
    #[default]
    Graduated,
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub cycles: usize,
    pub max_nonzeros: usize,
    pub error_threshold: f64,
    pub schedule: ScheduleMode,
    pub natoms: usize,
    pub seed: u64,
    pub record_metrics: bool,
    /// When false, every recorded `wall_time` is 0 so that metrics are
    /// reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            cycles: 32,
            max_nonzeros: 32,
            error_threshold: 4.0,
            schedule: ScheduleMode::Graduated,
            natoms: 256,
            seed: 0,
            record_metrics: true,
            record_wall_time: true,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self, dims: &[usize]) -> Result<()> {
        if self.cycles == 0 {
            return invalid("cycles must be >= 1");
        }
        if self.max_nonzeros == 0 {
            return invalid("max_nonzeros must be >= 1");
        }
        if !(self.error_threshold >= 0.0 && self.error_threshold.is_finite()) {
            return invalid(format!("error threshold must be finite and >= 0, got {}", self.error_threshold));
        }
        if let Some(&m) = dims.iter().max() {
            if self.natoms < m {
                return invalid(format!("natoms {} must be >= signal dim {m}", self.natoms));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleMetrics {
    /// 1-based.
    pub cycle: usize,
    /// Cumulative coding + update time up to the end of this cycle.
    pub wall_time: f64,
    pub avg_nonzeros: f64,
    /// Average learning error after this cycle's dictionary update.
    pub avg_error: f64,
    pub schedule_limit: usize,
}

/// Learned dictionaries and their shared code. `dict2` is `None` for a
/// single-dictionary model.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledModel {
    dict1: Dictionary,
    dict2: Option<Dictionary>,
    code: SparseCode,
    metrics: Vec<CycleMetrics>,
}

impl CoupledModel {
    pub fn new(
        dict1: Dictionary,
        dict2: Option<Dictionary>,
        code: SparseCode,
        metrics: Vec<CycleMetrics>,
    ) -> Result<Self> {
        let k = dict1.natoms();
        if dict2.as_ref().is_some_and(|d| d.natoms() != k) || code.natoms() != k {
            return Err(CdlError::ShapeMismatch(format!(
                "atom counts differ: dict1 {k}, dict2 {:?}, code {}",
                dict2.as_ref().map(Dictionary::natoms),
                code.natoms()
            )));
        }
        Ok(Self {
            dict1,
            dict2,
            code,
            metrics,
        })
    }

    pub fn single(dict: Dictionary, code: SparseCode, metrics: Vec<CycleMetrics>) -> Result<Self> {
        Self::new(dict, None, code, metrics)
    }

    pub fn coupled(
        dict1: Dictionary,
        dict2: Dictionary,
        code: SparseCode,
        metrics: Vec<CycleMetrics>,
    ) -> Result<Self> {
        Self::new(dict1, Some(dict2), code, metrics)
    }

    pub fn dict1(&self) -> &Dictionary {
        &self.dict1
    }

    pub fn dict2(&self) -> Option<&Dictionary> {
        self.dict2.as_ref()
    }

    pub fn dictionaries(&self) -> Vec<&Dictionary> {
        std::iter::once(&self.dict1).chain(self.dict2.as_ref()).collect()
    }

    pub fn code(&self) -> &SparseCode {
        &self.code
    }

    pub fn metrics(&self) -> &[CycleMetrics] {
        &self.metrics
    }

    pub fn is_coupled(&self) -> bool {
        self.dict2.is_some()
    }

    pub fn natoms(&self) -> usize {
        self.dict1.natoms()
    }
}

/// Per-cycle sparsity limits: `round(linspace(1, T₀, N))` with halves
/// rounded up, or `T₀` repeated.
pub fn sparsity_schedule(cycles: usize, max_nonzeros: usize, mode: ScheduleMode) -> Vec<usize> {
    if mode == ScheduleMode::Constant || cycles <= 1 {
        return vec![max_nonzeros; cycles];
    }
    let span = cycles - 1;
    let rise = max_nonzeros.saturating_sub(1);
    // 1 + floor((rise·k)/span + 1/2), all in integers
    (0..cycles)
        .map(|k| 1 + (2 * rise * k + span) / (2 * span))
        .collect()
}

/// DCT dictionary when both sizes are perfect squares, otherwise seeded
/// random unit-norm atoms.
pub fn initial_dictionary(dim: usize, natoms: usize, seed: u64) -> Result<Dictionary> {
    if is_perfect_square(dim).is_some() && is_perfect_square(natoms).is_some() && natoms >= dim {
        return dct_dictionary(dim, natoms);
    }
    warn!("no 2-D DCT for dim {dim}, natoms {natoms}; using random initial dictionary (seed {seed})");
    random_dictionary(dim, natoms, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `sqrt(Σᵢ ‖xᵢ - Dγᵢ‖²) / n`. In coupled mode pass the stacked data and
/// stacked atoms.
pub fn avg_learning_error(data: &Dataset, atoms: ArrayView2<'_, f64>, code: &SparseCode) -> Result<f64> {
    if data.dim() != atoms.nrows() || data.count() != code.count() || atoms.ncols() != code.natoms() {
        return Err(CdlError::ShapeMismatch(format!(
            "data {}x{}, atoms {}x{}, code {}x{}",
            data.dim(),
            data.count(),
            atoms.nrows(),
            atoms.ncols(),
            code.natoms(),
            code.count()
        )));
    }
    let atoms = linalg::to_col_major(atoms);
    let mut total = 0.0;
    let mut r = vec![0.0; data.dim()];
    for i in 0..data.count() {
        r.copy_from_slice(data.column(i));
        for &(t, g) in code.column(i) {
            linalg::axpy(-g, linalg::col(&atoms, t), &mut r);
        }
        total += linalg::norm_sq(&r);
    }
    Ok(total.sqrt() / data.count() as f64)
}

fn spaces_error(data: &[&Dataset], dicts: &[Dictionary], code: &SparseCode) -> Result<f64> {
    let refs: Vec<&Dictionary> = dicts.iter().collect();
    Ok(joint_objective(data, &refs, code)?.sqrt() / code.count() as f64)
}

/// State handed to an observer after every cycle.
#[derive(Debug)]
pub struct CycleReport<'a> {
    pub cycle: usize,
    pub limit: usize,
    pub avg_nonzeros: f64,
    /// Average learning error right after coding.
    pub error_before_update: f64,
    /// Average learning error after the dictionary update.
    pub error_after_update: f64,
    pub wall_time: f64,
    pub dictionaries: &'a [Dictionary],
    pub code: &'a SparseCode,
}

/// The cycle loop shared by the coupled, single and K-SVD learners.
pub(crate) fn run_cycles<U, F>(
    data: &[&Dataset],
    config: &LearnConfig,
    schedule: &[usize],
    rule: U,
    mut observer: F,
) -> Result<(Vec<Dictionary>, SparseCode, Vec<CycleMetrics>)>
where
    U: AtomUpdate + Clone,
    F: FnMut(&CycleReport<'_>),
{
    let dims: Vec<usize> = data.iter().map(|x| x.dim()).collect();
    config.validate(&dims)?;
    let n = data[0].count();
    if n == 0 {
        return invalid("no training signals");
    }
    if let Some(x) = data.iter().find(|x| x.count() != n) {
        return Err(CdlError::ShapeMismatch(format!(
            "signal counts differ between spaces: {n} vs {}",
            x.count()
        )));
    }
    let stacked;
    let joint = if data.len() == 1 {
        data[0]
    } else {
        stacked = Dataset::stack(data)?;
        &stacked
    };

    let mut dicts = dims
        .iter()
        .map(|&m| initial_dictionary(m, config.natoms, config.seed))
        .collect::<Result<Vec<_>>>()?;
    let mut code = SparseCode::empty(config.natoms, n);
    let mut metrics = Vec::new();
    let mut elapsed = 0.0;

    for (k, &limit) in schedule.iter().enumerate() {
        let limits = CodingLimits::new(limit, config.error_threshold)?;

        let started = Instant::now();
        let refs: Vec<&Dictionary> = dicts.iter().collect();
        let atoms = Dictionary::stack(&refs)?;
        let coded = code_dataset(atoms.view(), joint, limits)?;
        let coding_time = started.elapsed().as_secs_f64();

        let avg_nonzeros = coded.avg_nonzeros();
        let error_before_update = spaces_error(data, &dicts, &coded)?;

        let started = Instant::now();
        let (new_dicts, new_code) = Sweep::new(data.to_vec(), dicts, coded, rule.clone())?.run();
        elapsed += coding_time + started.elapsed().as_secs_f64();
        dicts = new_dicts;
        code = new_code;

        let avg_error = spaces_error(data, &dicts, &code)?;
        let wall_time = if config.record_wall_time { elapsed } else { 0.0 };
        if config.record_metrics {
            metrics.push(CycleMetrics {
                cycle: k + 1,
                wall_time,
                avg_nonzeros,
                avg_error,
                schedule_limit: limit,
            });
        }
        observer(&CycleReport {
            cycle: k + 1,
            limit,
            avg_nonzeros,
            error_before_update,
            error_after_update: avg_error,
            wall_time,
            dictionaries: &dicts,
            code: &code,
        });
    }
    Ok((dicts, code, metrics))
}

pub fn learn_coupled(data1: &Dataset, data2: &Dataset, config: &LearnConfig) -> Result<CoupledModel> {
    learn_coupled_observed(data1, data2, config, |_| {})
}

pub fn learn_coupled_observed<F>(
    data1: &Dataset,
    data2: &Dataset,
    config: &LearnConfig,
    observer: F,
) -> Result<CoupledModel>
where
    F: FnMut(&CycleReport<'_>),
{
    if data1.count() != data2.count() {
        return invalid(format!(
            "coupled spaces need equal signal counts, got {} and {}",
            data1.count(),
            data2.count()
        ));
    }
    let schedule = sparsity_schedule(config.cycles, config.max_nonzeros, config.schedule);
    let (mut dicts, code, metrics) = run_cycles(&[data1, data2], config, &schedule, Rank1Update, observer)?;
    let d2 = dicts.pop().expect("two spaces");
    let d1 = dicts.pop().expect("two spaces");
    CoupledModel::coupled(d1, d2, code, metrics)
}

pub fn learn_single(data: &Dataset, config: &LearnConfig) -> Result<CoupledModel> {
    learn_single_observed(data, config, |_| {})
}

pub fn learn_single_observed<F>(data: &Dataset, config: &LearnConfig, observer: F) -> Result<CoupledModel>
where
    F: FnMut(&CycleReport<'_>),
{
    let schedule = sparsity_schedule(config.cycles, config.max_nonzeros, config.schedule);
    let (mut dicts, code, metrics) = run_cycles(&[data], config, &schedule, Rank1Update, observer)?;
    CoupledModel::single(dicts.pop().expect("one space"), code, metrics)
}
