//! `deflecto`: simulate, calibrate, sweep and plot compressive Schlieren
//! deflectometry experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deflecto::dataset::LensSpec;
use deflecto::experiment::{self, ExperimentConfig, SummaryRow};
use deflecto::plot;
use deflecto::Error;

#[derive(Parser, Debug)]
#[command(name = "deflecto", version, about = "Compressive Schlieren deflectometry experiments")]
struct Cli {
    #[command(flatten)]
    opts: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Settings layered over the config file (or the built-in defaults).
#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML experiment config; missing keys take their defaults
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; the dataset lives in DIR/dataset
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Comma-separated M/N ratios for the sweep being run
    #[arg(long, global = true, value_name = "CSV-LIST", value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    /// Trials per ratio and CCD location
    #[arg(long, global = true, value_name = "INT")]
    trials: Option<usize>,
    /// Restrict to a single lens (diopters)
    #[arg(long, global = true, value_name = "FLOAT")]
    lens_power: Option<f64>,
    /// Target input SNR in dB used to scale the simulated noise
    #[arg(long, global = true, value_name = "FLOAT", allow_negative_numbers = true)]
    target_isnr: Option<f64>,
    /// Centroid template width in pixels
    #[arg(long, global = true, value_name = "FLOAT")]
    rho: Option<f64>,
    #[arg(long, global = true, value_name = "INT")]
    max_iters: Option<usize>,
    #[arg(long, global = true, value_name = "FLOAT")]
    tol: Option<f64>,
    /// Worker threads (output does not depend on this)
    #[arg(long, global = true, value_name = "INT")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the phantom measurement bundles and manifest
    Simulate,
    /// Estimate the noise level from the no-object acquisition
    Calibrate,
    /// oSNR sweep over M/N
    Reconstruct,
    /// Compressive centroid error sweep over M/N
    Centroid,
    /// Render one SVG next to each sweep CSV
    Plot {
        #[arg(required = true, value_name = "CSV")]
        files: Vec<PathBuf>,
    },
    /// simulate, calibrate, reconstruct, centroid and plot in one go
    Run,
    /// Print the effective config as TOML
    Config,
}

enum Sweep {
    Reconstruct,
    Centroid,
    Both,
    None,
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

/// 1 usage/config, 2 data, 3 numerical.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. }
        | Error::InvalidParameter(_)
        | Error::NotPowerOfTwo(_)
        | Error::MeasurementCount { .. }
        | Error::IndivisibleGrid { .. }
        | Error::OffGrid { .. } => 1,
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Decode(_)
        | Error::SizeMismatch { .. }
        | Error::IndexOutOfRange { .. }
        | Error::MissingTransparent
        | Error::NotFullSampling { .. } => 2,
        Error::NonFinite(_) | Error::ZeroNorm(_) | Error::NoFeature => 3,
    }
}

fn load_config(o: &Overrides, sweep: Sweep) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &o.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &o.out {
        cfg.out = v.clone();
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.target_isnr {
        cfg.target_isnr_db = Some(v);
    }
    if let Some(v) = o.rho {
        cfg.rho = Some(v);
    }
    if let Some(v) = o.max_iters {
        cfg.solver.max_iters = v;
    }
    if let Some(v) = o.tol {
        cfg.solver.tol = v;
    }
    if o.threads.is_some() {
        cfg.threads = o.threads;
    }
    if let Some(p) = o.lens_power {
        let contrast = cfg.lenses.iter().find(|l| l.power == p).map_or(1.0, |l| l.contrast);
        cfg.lenses = vec![LensSpec { power: p, contrast }];
    }
    let targets = match sweep {
        Sweep::Reconstruct => vec![&mut cfg.reconstruct],
        Sweep::Centroid => vec![&mut cfg.centroid],
        Sweep::Both => vec![&mut cfg.reconstruct, &mut cfg.centroid],
        Sweep::None => vec![],
    };
    for s in targets {
        if let Some(r) = &o.ratios {
            s.ratios = r.clone();
        }
        if let Some(t) = o.trials {
            s.trials = t;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dataset_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.join("dataset")
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", dir.display()),
    })
}

fn print_summary(title: &str, unit: &str, rows: &[SummaryRow]) {
    println!("{title}");
    println!("  {:>8} {:>7} {:>6} {:>4} {:>10} {:>9}", "lens_D", "ratio", "M", "n", unit, "std_err");
    for r in rows {
        println!(
            "  {:>8.2} {:>7.3} {:>6} {:>4} {:>10.3} {:>9.3}",
            r.lens_power, r.ratio, r.m_count, r.samples, r.mean, r.std_error
        );
    }
}

fn simulate(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let dir = dataset_dir(cfg);
    create_dir(&dir)?;
    let manifest = cfg.in_pool(|| experiment::simulate(cfg, &dir))??;
    let lenses = manifest.lenses().count();
    print!("simulate: {} lens bundles + no-object bundle in {}", lenses, dir.display());
    match manifest.simulated_isnr_db {
        Some(v) => println!(", iSNR {v:.3} dB"),
        None => println!(", noiseless"),
    }
    Ok(())
}

fn calibrate(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let est = experiment::calibrate(&dataset_dir(cfg))?;
    println!(
        "calibrate: eps_full {:.6e}, disk height {:.6}, origin offset ({:.3}, {:.3}) px",
        est.eps_full, est.disk_height, est.origin_offset[0], est.origin_offset[1]
    );
    Ok(())
}

fn reconstruct(cfg: &ExperimentConfig, lens: Option<f64>) -> Result<(), Failure> {
    create_dir(&cfg.out)?;
    let report = experiment::reconstruct(&dataset_dir(cfg), cfg, &cfg.out, lens)?;
    let stalled = report.rows.iter().filter(|r| !r.converged).count();
    print_summary("reconstruct: mean oSNR", "oSNR_dB", &report.summary);
    if stalled > 0 {
        println!("reconstruct: {stalled} of {} solves hit the iteration limit", report.rows.len());
    }
    println!("reconstruct: wrote {}", cfg.out.join("reconstruct.csv").display());
    Ok(())
}

fn centroid(cfg: &ExperimentConfig, lens: Option<f64>) -> Result<(), Failure> {
    create_dir(&cfg.out)?;
    let report = experiment::centroid(&dataset_dir(cfg), cfg, &cfg.out, lens)?;
    print_summary("centroid: mean error", "err_px", &report.summary);
    println!("centroid: wrote {}", cfg.out.join("centroid.csv").display());
    Ok(())
}

fn plot_files(files: &[PathBuf]) -> Result<(), Failure> {
    for path in files {
        let text = fs::read_to_string(path).map_err(|e| Failure {
            code: 2,
            message: format!("{}: {e}", path.display()),
        })?;
        let csv = plot::parse_sweep_csv(&text).map_err(|e| Failure {
            code: 2,
            message: format!("{}: {e}", path.display()),
        })?;
        let svg = path.with_extension("svg");
        fs::write(&svg, plot::render_svg(&csv)).map_err(|e| Failure {
            code: 2,
            message: format!("{}: {e}", svg.display()),
        })?;
        println!("plot: wrote {}", svg.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let o = &cli.opts;
    match cli.command {
        Command::Simulate => simulate(&load_config(o, Sweep::None)?),
        Command::Calibrate => calibrate(&load_config(o, Sweep::None)?),
        Command::Reconstruct => reconstruct(&load_config(o, Sweep::Reconstruct)?, o.lens_power),
        Command::Centroid => centroid(&load_config(o, Sweep::Centroid)?, o.lens_power),
        Command::Plot { files } => plot_files(&files),
        Command::Run => {
            let cfg = load_config(o, Sweep::Both)?;
            simulate(&cfg)?;
            calibrate(&cfg)?;
            reconstruct(&cfg, None)?;
            centroid(&cfg, None)?;
            plot_files(&[cfg.out.join("reconstruct.csv"), cfg.out.join("centroid.csv")])
        }
        Command::Config => {
            let cfg = load_config(o, Sweep::None)?;
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("deflecto: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
