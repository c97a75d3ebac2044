//! Command line entry point. Exit codes: 0 on success, 2 on usage or
//! configuration errors, 1 on numerical or I/O failures.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use echoshape::error::Error;
use echoshape::forward::Aperture;
use echoshape::neural::{predict, train, CnnModel, TrainConfig};
use echoshape::rng;

use echoshape_cli::bench::{
    benchmark, config_for, reconstruct, relative_error, write_report, BenchmarkParams, Method,
    ReconstructSettings,
};
use echoshape_cli::dataset::{add_noise, generate, Dataset, NoiseParams};
use echoshape_cli::presets::{arch_for, preset};
use echoshape_cli::studies;
use echoshape_cli::studies::ScalingOptions;

#[derive(Parser)]
#[command(name = "echoshape", version, about = "Inverse acoustic obstacle scattering workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample random shapes and record their far measurements in a dataset file
    GenData(GenDataArgs),
    /// Train a convolutional network on a dataset
    Train(TrainArgs),
    /// Run a trained network over a dataset and tabulate per-sample errors
    Predict(PredictArgs),
    /// Reconstruct one dataset entry with a chosen method
    Reconstruct(ReconstructArgs),
    /// Score all five reconstruction methods on fresh test shapes
    Benchmark(BenchmarkArgs),
    /// Tabulate how quickly radius perturbation modes fade from the data
    FrechetDecay(FrechetDecayArgs),
    /// Tabulate the data misfit on a random plane through shape space
    Landscape(LandscapeArgs),
    /// Measure the training set size needed as the wavenumber grows
    Scaling(ScalingArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ApertureArg {
    /// Receivers and incident directions cover the full circle
    Full,
    /// Receivers and incident directions cover the upper half circle
    Half,
}

impl From<ApertureArg> for Aperture {
    fn from(a: ApertureArg) -> Aperture {
        match a {
            ApertureArg::Full => Aperture::Full,
            ApertureArg::Half => Aperture::Half,
        }
    }
}

#[derive(Args)]
struct GenDataArgs {
    /// Wavenumber of the incident field
    #[arg(long)]
    k: f64,
    /// Number of Fourier modes in the sampled shapes
    #[arg(long = "M")]
    m: usize,
    /// Receiver count (defaults to the preset for M)
    #[arg(long)]
    nt: Option<usize>,
    /// Incident direction count (defaults to the preset for M)
    #[arg(long)]
    nd: Option<usize>,
    /// Number of samples to generate
    #[arg(long, default_value_t = 500)]
    count: usize,
    /// Master seed for shape sampling and noise
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ApertureArg::Full)]
    aperture: ApertureArg,
    /// Receiver circle radius
    #[arg(long, default_value_t = 10.0)]
    radius: f64,
    /// Mean multiplicative noise amplitude applied to the stored measurements
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Output dataset file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset file
    #[arg(long)]
    dataset: PathBuf,
    /// Training epochs (defaults to the preset for the dataset's M)
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size
    #[arg(long, default_value_t = 100)]
    batch: usize,
    /// Seed for weight initialization and epoch shuffling
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained model file
    #[arg(long)]
    model: PathBuf,
    /// Dataset whose samples to predict
    #[arg(long)]
    dataset: PathBuf,
    /// Output CSV of per-sample errors and predicted coefficients
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Method: gn, lsm, lsm-refined, dl, or dl-refined
    #[arg(long)]
    method: Method,
    /// Dataset holding the measurement to invert
    #[arg(long)]
    dataset: PathBuf,
    /// Sample index within the dataset
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Trained model file (required for dl and dl-refined)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Optional JSON report path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Wavenumber of the incident field
    #[arg(long)]
    k: f64,
    /// Number of Fourier modes in the test shapes
    #[arg(long = "M")]
    m: usize,
    /// Number of fresh test shapes
    #[arg(long, default_value_t = 50)]
    n_cases: usize,
    /// Master seed for test shapes and noise
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Mean multiplicative noise amplitude on the test measurements
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, value_enum, default_value_t = ApertureArg::Full)]
    aperture: ApertureArg,
    /// Receiver and direction count for the classical methods
    #[arg(long, default_value_t = 200)]
    classical_n: usize,
    /// Receiver circle radius
    #[arg(long, default_value_t = 10.0)]
    radius: f64,
    /// Trained model file for the network columns
    #[arg(long)]
    model: PathBuf,
    /// Directory receiving cases.csv, summary.csv, and report.json
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FrechetDecayArgs {
    /// Wavenumber of the incident field
    #[arg(long, default_value_t = 7.5)]
    k: f64,
    /// Highest perturbation mode to probe
    #[arg(long, default_value_t = 35)]
    j_max: usize,
    /// Receiver count
    #[arg(long, default_value_t = 200)]
    nt: usize,
    /// Incident direction count
    #[arg(long, default_value_t = 200)]
    nd: usize,
    /// Output CSV file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LandscapeArgs {
    /// Wavenumber of the incident field
    #[arg(long)]
    k: f64,
    /// Grid points per side
    #[arg(long, default_value_t = 21)]
    grid_size: usize,
    /// Half-width of the sampled coefficient range
    #[arg(long, default_value_t = 1.0)]
    extent: f64,
    /// Seed for the two random slice directions
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Receiver count
    #[arg(long, default_value_t = 100)]
    nt: usize,
    /// Incident direction count
    #[arg(long, default_value_t = 100)]
    nd: usize,
    /// Output CSV file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScalingArgs {
    /// Comma-separated wavenumbers; each must satisfy M = k - 10 >= 1
    #[arg(long, value_delimiter = ',', required = true)]
    k_list: Vec<f64>,
    /// Validation error target
    #[arg(long, default_value_t = 0.05)]
    eps_v: f64,
    /// Master seed for data generation and training
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Validation sample count
    #[arg(long, default_value_t = 500)]
    n_val: usize,
    /// Training epochs per cell
    #[arg(long, default_value_t = 150)]
    epochs: usize,
    /// Minibatch size
    #[arg(long, default_value_t = 100)]
    batch: usize,
    /// Comma-separated training set sizes to try, in increasing order
    #[arg(long, value_delimiter = ',')]
    train_grid: Option<Vec<usize>>,
    /// Receivers and directions per side
    #[arg(long, default_value_t = 100)]
    dims: usize,
    /// Output CSV file (a .trace.csv sibling records every cell)
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => run_gen_data(a),
        Command::Train(a) => run_train(a),
        Command::Predict(a) => run_predict(a),
        Command::Reconstruct(a) => run_reconstruct(a),
        Command::Benchmark(a) => run_benchmark(a),
        Command::FrechetDecay(a) => run_frechet_decay(a),
        Command::Landscape(a) => run_landscape(a),
        Command::Scaling(a) => run_scaling(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Configuration mistakes are usage errors; everything else that survives
/// argument parsing is a runtime failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        _ => 1,
    }
}

fn run_gen_data(a: GenDataArgs) -> anyhow::Result<()> {
    let p = preset(a.m);
    let cfg = config_for(
        a.k,
        a.nt.unwrap_or(p.n_t),
        a.nd.unwrap_or(p.n_d),
        a.aperture.into(),
        a.radius,
    );
    let started = Instant::now();
    let mut set = generate(&cfg, a.m, a.count, a.seed)?;
    if a.noise_sigma != 0.0 {
        let np = NoiseParams { sigma: a.noise_sigma, seed: a.seed };
        np.validate()?;
        let mut r = rng::stream(a.seed, "noise");
        for (_, u) in &mut set.samples {
            *u = add_noise(u, a.noise_sigma, &mut r);
        }
    }
    set.save_to(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "wrote {} samples ({}x{} measurements each) to {} in {:.1?}",
        set.len(),
        set.header.n_t,
        set.header.n_d,
        a.out.display(),
        started.elapsed()
    );
    Ok(())
}

fn run_train(a: TrainArgs) -> anyhow::Result<()> {
    let set = Dataset::load_from(&a.dataset)
        .with_context(|| format!("reading {}", a.dataset.display()))?;
    if set.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()).into());
    }
    let h = &set.header;
    let p = preset(h.m);
    let arch = arch_for(h.m, h.n_t, h.n_d, h.aperture);
    let tc = TrainConfig {
        n_epoch: a.epochs.unwrap_or(p.n_epoch),
        batch_size: a.batch,
        seed: a.seed,
        ..TrainConfig::default()
    };
    log::info!(
        "training on {} samples for {} epochs (batch {}, {} channels, fc {}x{})",
        set.len(),
        tc.n_epoch,
        tc.batch_size,
        arch.n_c,
        arch.n1,
        arch.n2
    );
    let ts = set.training_set()?;
    let started = Instant::now();
    let model = train(&ts, &arch, &tc)?;
    let elapsed = started.elapsed();
    let mut sum = 0.0;
    for (c, u) in &set.samples {
        sum += relative_error(&predict(&model, u)?, c)?;
    }
    println!(
        "trained on {} samples for {} epochs in {:.1?}; training-set mean relative error {:.3e}",
        set.len(),
        tc.n_epoch,
        elapsed,
        sum / set.len() as f64
    );
    model.save_to(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("saved model to {}", a.out.display());
    Ok(())
}

fn run_predict(a: PredictArgs) -> anyhow::Result<()> {
    let model =
        CnnModel::load_from(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let set = Dataset::load_from(&a.dataset)
        .with_context(|| format!("reading {}", a.dataset.display()))?;
    let h = &set.header;
    if model.arch.m != h.m || model.arch.n_t != h.n_t || model.arch.n_d != h.n_d {
        return Err(Error::Config(format!(
            "model expects M = {}, {}x{} measurements; dataset has M = {}, {}x{}",
            model.arch.m, model.arch.n_t, model.arch.n_d, h.m, h.n_t, h.n_d
        ))
        .into());
    }
    let mut w = BufWriter::new(File::create(&a.out)?);
    write!(w, "index,relative_error")?;
    for l in 0..=2 * h.m {
        write!(w, ",c{l}")?;
    }
    writeln!(w)?;
    let mut sum = 0.0;
    for (i, (truth, u)) in set.samples.iter().enumerate() {
        let est = predict(&model, u)?;
        let err = relative_error(&est, truth)?;
        sum += err;
        write!(w, "{i},{err}")?;
        for v in est.coeffs() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    if set.is_empty() {
        println!("wrote an empty prediction table to {}", a.out.display());
    } else {
        println!(
            "mean relative error over {} samples: {:.3e}; wrote {}",
            set.len(),
            sum / set.len() as f64,
            a.out.display()
        );
    }
    Ok(())
}

fn run_reconstruct(a: ReconstructArgs) -> anyhow::Result<()> {
    let set = Dataset::load_from(&a.dataset)
        .with_context(|| format!("reading {}", a.dataset.display()))?;
    let (truth, u) = set.samples.get(a.index).ok_or_else(|| {
        Error::Config(format!(
            "sample index {} out of range, the dataset holds {}",
            a.index,
            set.len()
        ))
    })?;
    let model = match &a.model {
        Some(path) => Some(
            CnnModel::load_from(path).with_context(|| format!("reading {}", path.display()))?,
        ),
        None => None,
    };
    if a.method.needs_model() && model.is_none() {
        return Err(
            Error::Config(format!("method '{}' needs --model", a.method.label())).into()
        );
    }
    let mut settings = ReconstructSettings::new(set.header.m);
    if let Some(m) = &model {
        settings = settings.with_model(m);
    }
    let cfg = set.header.config();
    let started = Instant::now();
    let est = reconstruct(a.method, u, &cfg, &settings)?;
    let err = relative_error(&est, truth)?;
    println!(
        "{}: sample {}, relative error {:.4e} in {:.1?}",
        a.method.label(),
        a.index,
        err,
        started.elapsed()
    );
    if let Some(out) = &a.out {
        let doc = serde_json::json!({
            "method": a.method.label(),
            "index": a.index,
            "relative_error": err,
            "estimate": est.coeffs(),
            "truth": truth.coeffs(),
        });
        let mut w = BufWriter::new(File::create(out)?);
        serde_json::to_writer_pretty(&mut w, &doc)?;
        writeln!(w)?;
        w.flush()?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn run_benchmark(a: BenchmarkArgs) -> anyhow::Result<()> {
    let model =
        CnnModel::load_from(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let params = BenchmarkParams {
        n_cases: a.n_cases,
        seed: a.seed,
        noise_sigma: a.noise_sigma,
        aperture: a.aperture.into(),
        classical_n: a.classical_n,
        radius: a.radius,
        ..BenchmarkParams::new(a.k, a.m)
    };
    let started = Instant::now();
    let report = benchmark(&params, &model)?;
    write_report(&report, &a.out_dir)
        .with_context(|| format!("writing into {}", a.out_dir.display()))?;
    println!("benchmark of {} cases finished in {:.1?}", report.n_cases, started.elapsed());
    for (i, name) in report.methods.iter().enumerate() {
        println!(
            "  {:<14} mean relative error {:.4e}, fraction below 1% {:.2}",
            name, report.mean_relative_error[i], report.fraction_below_one_percent[i]
        );
    }
    println!("wrote cases.csv, summary.csv, report.json to {}", a.out_dir.display());
    Ok(())
}

fn run_frechet_decay(a: FrechetDecayArgs) -> anyhow::Result<()> {
    let norms = studies::frechet_decay(a.k, a.j_max, a.nt, a.nd)?;
    studies::write_frechet_csv(&norms, &a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} modes to {}", norms.len(), a.out.display());
    Ok(())
}

fn run_landscape(a: LandscapeArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let cells = studies::landscape(a.k, a.grid_size, a.extent, a.seed, a.nt, a.nd)?;
    let missing = cells.iter().filter(|c| c.value.is_none()).count();
    studies::write_landscape_csv(&cells, &a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "wrote a {0}x{0} misfit surface ({1} invalid cells) to {2} in {3:.1?}",
        a.grid_size,
        missing,
        a.out.display(),
        started.elapsed()
    );
    Ok(())
}

fn run_scaling(a: ScalingArgs) -> anyhow::Result<()> {
    let defaults = ScalingOptions::default();
    let opt = ScalingOptions {
        eps_v: a.eps_v,
        seed: a.seed,
        n_val: a.n_val,
        n_epoch: a.epochs,
        batch_size: a.batch,
        train_grid: a.train_grid.unwrap_or(defaults.train_grid),
        dims: a.dims,
    };
    let started = Instant::now();
    let rows = studies::scaling(&a.k_list, &opt)?;
    studies::write_scaling_csv(&rows, &a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    for row in &rows {
        match row.threshold {
            Some(t) => println!("M = {}: {} training samples reach the target", row.m, t),
            None => println!(
                "M = {}: target not reached within the budget of {}",
                row.m,
                row.trace.last().map(|(n, _)| *n).unwrap_or(0)
            ),
        }
    }
    println!("wrote {} in {:.1?}", a.out.display(), started.elapsed());
    Ok(())
}
