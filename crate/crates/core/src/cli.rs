//! Command-line front end.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::baseline_ksvd::learn_ksvd_observed;
use crate::datapipe::{blur_pairs, is_perfect_square, read_pgm, synth_coupled, write_pgm, Dictionary, Image, PatchOptions};
use crate::error::{invalid, CdlError, Result};
use crate::learner::{
    learn_coupled_observed, learn_single_observed, load_dataset, load_model, save_dataset, save_model, CoupledModel,
    CycleMetrics, CycleReport, LearnConfig, ScheduleMode,
};

pub const METRICS_HEADER: &str = "cycle,wall_time_s,avg_nnz,avg_error,limit";

#[derive(Debug, Parser)]
#[command(name = "cdl", version, about = "Coupled dictionary learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write training datasets from a generator or an image.
    Synth(SynthArgs),
    /// Learn a single dictionary.
    Learn(LearnArgs),
    /// Learn a coupled pair of dictionaries with a shared code.
    LearnCoupled(LearnCoupledArgs),
    /// Run the proposed learner and K-SVD on one dataset and write both
    /// metric curves.
    Benchmark(BenchmarkArgs),
    /// Tile the atoms of one dictionary into a PGM mosaic.
    RenderAtoms(RenderArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthMode {
    /// Random ground-truth dictionaries and shared sparse code.
    Synthetic,
    /// Patches of an image and of its Gaussian blur.
    Blurpair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Proposed,
    Ksvd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Schedule {
    Graduated,
    Constant,
}

impl From<Schedule> for ScheduleMode {
    fn from(s: Schedule) -> Self {
        match s {
            Schedule::Graduated => ScheduleMode::Graduated,
            Schedule::Constant => ScheduleMode::Constant,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub mode: SynthMode,
    /// Output directory; receives x1.cdld and x2.cdld (plus truth.cdlm in
    /// synthetic mode).
    #[arg(long)]
    pub output: PathBuf,
    /// Source PGM image (blurpair mode).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Signal dimension (synthetic mode).
    #[arg(long, default_value_t = 16)]
    pub m: usize,
    /// Atom count (synthetic mode).
    #[arg(long, default_value_t = 32)]
    pub k: usize,
    /// Signal count (synthetic mode).
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub sparsity: usize,

    #[arg(long, default_value_t = 2.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 8)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Keep a seeded random subset of this many patch pairs.
    #[arg(long)]
    pub max_patches: Option<usize>,
    /// Pixel values are multiplied by this before centering.
    #[arg(long, default_value_t = 255.0)]
    pub pixel_scale: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    /// Learning cycles [default: 32, or 16 for K-SVD].
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub max_nnz: usize,
    /// OMP stops once the squared (joint) residual norm is at most this.
    #[arg(long, default_value_t = 4.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 256)]
    pub natoms: usize,
    #[arg(long, value_enum, default_value_t = Schedule::Graduated)]
    pub schedule: Schedule,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record zero wall time so outputs are byte-reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

impl TrainingArgs {
    pub fn config(&self, default_cycles: usize) -> LearnConfig {
        LearnConfig {
            cycles: self.cycles.unwrap_or(default_cycles),
            max_nonzeros: self.max_nnz,
            error_threshold: self.eps,
            schedule: self.schedule.into(),
            natoms: self.natoms,
            seed: self.seed,
            record_metrics: true,
            record_wall_time: !self.no_timing,
        }
    }
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Per-cycle metrics CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Proposed)]
    pub method: Method,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct LearnCoupledArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub input2: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Comparison CSV.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub ksvd_cycles: usize,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub space: u8,
    #[arg(long)]
    pub output: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Learn(a) => cmd_learn(&a),
        Command::LearnCoupled(a) => cmd_learn_coupled(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::RenderAtoms(a) => cmd_render_atoms(&a),
    }
}

fn log_cycle(method: &str, r: &CycleReport<'_>) {
    info!(
        "{method} cycle {}: limit {}, avg nnz {:.3}, error {:.5} -> {:.5}, {:.3}s",
        r.cycle, r.limit, r.avg_nonzeros, r.error_before_update, r.error_after_update, r.wall_time
    );
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    fs::create_dir_all(&args.output)?;
    let (x1, x2) = match args.mode {
        SynthMode::Synthetic => {
            let s = synth_coupled(args.m, args.k, args.n, args.sparsity, args.seed)?;
            save_model(
                args.output.join("truth.cdlm"),
                &CoupledModel::coupled(s.dict1, s.dict2, s.code, Vec::new())?,
            )?;
            (s.x1, s.x2)
        }
        SynthMode::Blurpair => {
            let Some(input) = &args.input else {
                return invalid("blurpair mode needs --input");
            };
            let image = read_pgm(input)?;
            let opts = PatchOptions {
                size: args.patch_size,
                stride: args.stride,
                max_patches: args.max_patches,
                seed: args.seed,
                pixel_scale: args.pixel_scale,
            };
            blur_pairs(&image, args.sigma, &opts)?
        }
    };
    info!("writing {} signal pairs ({} / {} dims)", x1.count(), x1.dim(), x2.dim());
    save_dataset(args.output.join("x1.cdld"), &x1)?;
    save_dataset(args.output.join("x2.cdld"), &x2)?;
    Ok(())
}

pub fn cmd_learn(args: &LearnArgs) -> Result<()> {
    let data = load_dataset(&args.input)?;
    let model = match args.method {
        Method::Proposed => {
            learn_single_observed(&data, &args.training.config(32), |r| log_cycle("proposed", r))?
        }
        Method::Ksvd => learn_ksvd_observed(&data, &args.training.config(16), |r| log_cycle("ksvd", r))?,
    };
    finish_learning(&model, &args.output, args.metrics.as_deref())
}

pub fn cmd_learn_coupled(args: &LearnCoupledArgs) -> Result<()> {
    let x1 = load_dataset(&args.input)?;
    let x2 = load_dataset(&args.input2)?;
    let model = learn_coupled_observed(&x1, &x2, &args.training.config(32), |r| log_cycle("coupled", r))?;
    finish_learning(&model, &args.output, args.metrics.as_deref())
}

fn finish_learning(model: &CoupledModel, output: &Path, metrics: Option<&Path>) -> Result<()> {
    save_model(output, model)?;
    if let Some(path) = metrics {
        let mut w = BufWriter::new(File::create(path)?);
        write_metrics_csv(&mut w, model.metrics())?;
        w.flush()?;
    }
    Ok(())
}

fn metric_fields(m: &CycleMetrics) -> String {
    format!(
        "{},{},{},{},{}",
        m.cycle, m.wall_time, m.avg_nonzeros, m.avg_error, m.schedule_limit
    )
}

pub fn write_metrics_csv<W: Write>(w: &mut W, metrics: &[CycleMetrics]) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for m in metrics {
        writeln!(w, "{}", metric_fields(m))?;
    }
    Ok(())
}

/// One block of rows per method, each row tagged with the method name.
pub fn write_benchmark_csv<W: Write>(w: &mut W, runs: &[(&str, &[CycleMetrics])]) -> std::io::Result<()> {
    writeln!(w, "method,{METRICS_HEADER}")?;
    for (method, metrics) in runs {
        for m in *metrics {
            writeln!(w, "{method},{}", metric_fields(m))?;
        }
    }
    Ok(())
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> Result<()> {
    let data = load_dataset(&args.input)?;
    let proposed_config = LearnConfig {
        schedule: ScheduleMode::Graduated,
        ..args.training.config(32)
    };
    let ksvd_config = LearnConfig {
        cycles: args.ksvd_cycles,
        ..args.training.config(args.ksvd_cycles)
    };
    let proposed = learn_single_observed(&data, &proposed_config, |r| log_cycle("proposed", r))?;
    let ksvd = learn_ksvd_observed(&data, &ksvd_config, |r| log_cycle("ksvd", r))?;
    let mut w = BufWriter::new(File::create(&args.output)?);
    write_benchmark_csv(&mut w, &[("proposed", proposed.metrics()), ("ksvd", ksvd.metrics())])?;
    w.flush()?;
    Ok(())
}

/// Atoms as `√dim x √dim` tiles on a `√K x √K` grid in column order, each
/// min-max scaled to [0, 1] (a constant atom is mid-gray), separated by
/// 1-pixel black lines.
pub fn atom_mosaic(dict: &Dictionary) -> Result<Image> {
    let (Some(side), Some(grid)) = (is_perfect_square(dict.dim()), is_perfect_square(dict.natoms())) else {
        return invalid(format!(
            "cannot tile {} atoms of dim {}: both must be perfect squares",
            dict.natoms(),
            dict.dim()
        ));
    };
    let extent = grid * side + grid - 1;
    let mut pixels = vec![0.0; extent * extent];
    for t in 0..dict.natoms() {
        let atom = dict.atom(t);
        let lo = atom.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = atom.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (x0, y0) = ((t % grid) * (side + 1), (t / grid) * (side + 1));
        for r in 0..side {
            for c in 0..side {
                let v = atom[r * side + c];
                pixels[(y0 + r) * extent + x0 + c] = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            }
        }
    }
    Image::new(extent, extent, pixels)
}

pub fn cmd_render_atoms(args: &RenderArgs) -> Result<()> {
    let model = load_model(&args.input)?;
    let dict = match args.space {
        1 => model.dict1(),
        _ => model
            .dict2()
            .ok_or_else(|| CdlError::InvalidInput("model has no second dictionary".into()))?,
    };
    write_pgm(&args.output, &atom_mosaic(dict)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::dct_dictionary;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn mosaic_size_and_separators() {
        let img = atom_mosaic(&dct_dictionary(64, 256).unwrap()).unwrap();
        assert_eq!((img.width(), img.height()), (143, 143));
        assert_eq!(img.get(8, 3), 0.0);
        assert_eq!(img.get(3, 8), 0.0);
        // DC atom is constant
        assert_eq!(img.get(0, 0), 0.5);
        assert_eq!(img.get(7, 7), 0.5);
    }

    #[test]
    fn mosaic_rejects_non_square() {
        assert!(atom_mosaic(&dct_dictionary(16, 36).unwrap()).is_ok());
        let d = Dictionary::from_unnormalized(ndarray::Array2::ones((16, 8))).unwrap();
        assert!(atom_mosaic(&d).is_err());
    }

    #[test]
    fn metrics_csv_format() {
        let m = [CycleMetrics {
            cycle: 1,
            wall_time: 0.0,
            avg_nonzeros: 1.5,
            avg_error: 0.25,
            schedule_limit: 2,
        }];
        let mut out = Vec::new();
        write_metrics_csv(&mut out, &m).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "cycle,wall_time_s,avg_nnz,avg_error,limit\n1,0,1.5,0.25,2\n");
    }

    #[test]
    fn training_defaults() {
        let cli = Cli::parse_from(["cdl", "learn", "--input", "a", "--output", "b"]);
        let Command::Learn(a) = cli.command else { panic!() };
        assert_eq!(a.training.config(32), LearnConfig::default());
        assert_eq!(a.training.config(16).cycles, 16);
    }
}
