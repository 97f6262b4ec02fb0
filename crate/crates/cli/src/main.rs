use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rbm_otoc::experiment::{self, Kind, RunConfig};
use rbm_otoc::fit;
use rbm_otoc::otoc::OtocCurve;
use rbm_otoc::{par, Error};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

/// RBM variational Monte Carlo for out-of-time-ordered correlators.
#[derive(Parser)]
#[command(name = "rbm-otoc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replace the master seed of the configuration.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the pipeline described by --config.
    Run,
    /// Pointwise difference of two curve tables (A minus reference B).
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Interpolate B onto the times of A.
        #[arg(long)]
        interpolate: bool,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        /// Only check times where Re F of B is at least this.
        #[arg(long)]
        window: Option<f64>,
        /// Exit with status 4 when the tolerance is exceeded.
        #[arg(long)]
        strict: bool,
    },
    /// Fit the early-time wavefront to curve tables (or a `fit` config).
    Fit {
        curves: Vec<PathBuf>,
        #[arg(long)]
        distance: Option<f64>,
        #[arg(long, default_value_t = fit::DEFAULT_THRESHOLD)]
        threshold: f64,
        /// One joint fit over all curves.
        #[arg(long)]
        pooled: bool,
    },
    /// Write the dense reference curve for --config.
    Oracle,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::OracleMismatch(_) => EXIT_MISMATCH,
        Error::OracleCap { .. } => EXIT_CONFIG,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => 1,
    }
}

fn report(err: &Error) {
    match err {
        Error::Config(list) => {
            eprintln!("error: invalid configuration");
            for e in list {
                eprintln!("  - {e}");
            }
        }
        e => eprintln!("error: {e}"),
    }
}

fn load_config(common: &Common) -> Result<(RunConfig, PathBuf), Error> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config(vec!["--config is required for this command".into()]))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = common.seed_override {
        cfg.seed = seed;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn read_curve(path: &Path) -> Result<OtocCurve, Error> {
    let file = fs::File::open(path).map_err(|e| Error::Config(vec![format!("cannot open {}: {e}", path.display())]))?;
    OtocCurve::read_table(BufReader::new(file))
}

fn cmd_run(common: &Common) -> Result<(), Error> {
    let (cfg, base) = load_config(common)?;
    let n = cfg.lattice.rows * cfg.lattice.cols;
    if n > cfg.oracle.cap && cfg.kind != Kind::Fit {
        eprintln!(
            "warning: {}x{} lattice has no dense oracle; this run is a scaling demonstration only",
            cfg.lattice.rows, cfg.lattice.cols
        );
    }
    let out = experiment::run(&cfg, &common.out_dir, &base)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(cmp) = &out.comparison {
        println!(
            "oracle: max |dReF| = {:.3e}, max |dImF| = {:.3e} in window (tolerance {}){}",
            cmp.max_abs_re,
            cmp.max_abs_im,
            cmp.tolerance,
            match cmp.first_exceed {
                Some(t) => format!(", first exceeded at t = {t}"),
                None => String::new(),
            }
        );
    }
    for f in &out.fits {
        println!("fit: {f}");
    }
    for p in &out.files {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_compare(a: &Path, b: &Path, interpolate: bool, tolerance: f64, window: Option<f64>, strict: bool) -> Result<(), Error> {
    let (ca, cb) = (read_curve(a)?, read_curve(b)?);
    let cmp = experiment::compare_curves(&ca, &cb, interpolate, tolerance, window)
        .map_err(|e| Error::Config(vec![e.to_string()]))?;
    let mut stdout = std::io::stdout().lock();
    cmp.write_report(&mut stdout)?;
    if strict && !cmp.within_tolerance() {
        return Err(Error::OracleMismatch(format!(
            "difference above {tolerance} from t = {}",
            cmp.first_exceed.unwrap_or(f64::NAN)
        )));
    }
    Ok(())
}

fn cmd_fit(common: &Common, curves: &[PathBuf], distance: Option<f64>, threshold: f64, pooled: bool) -> Result<(), Error> {
    if curves.is_empty() {
        let (mut cfg, base) = load_config(common)?;
        if cfg.kind != Kind::Fit {
            cfg.fit.enabled = true;
        }
        let out = experiment::run(&cfg, &common.out_dir, &base)?;
        for f in &out.fits {
            println!("{f}");
        }
        return Ok(());
    }
    let d = distance.ok_or_else(|| Error::Config(vec!["--distance is required when fitting curve files".into()]))?;
    let loaded = curves.iter().map(|p| read_curve(p)).collect::<Result<Vec<_>, _>>()?;
    let fits = if pooled {
        vec![fit::fit_pooled(&loaded.iter().collect::<Vec<_>>(), d, threshold)?]
    } else {
        loaded.iter().map(|c| fit::fit_wavefront(c, d, threshold)).collect::<Result<Vec<_>, _>>()?
    };
    for f in &fits {
        println!("{f}");
    }
    fs::create_dir_all(&common.out_dir)?;
    let json = fit::to_json(&fits)?;
    fs::write(common.out_dir.join("fit.json"), json)?;
    Ok(())
}

fn cmd_oracle(common: &Common) -> Result<(), Error> {
    let (cfg, _) = load_config(common)?;
    let curve = experiment::oracle_curve(&cfg)?;
    fs::create_dir_all(&common.out_dir)?;
    let path = common.out_dir.join(format!("{}.oracle.tsv", cfg.name()));
    fs::write(&path, curve.to_table_string())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    let common = &cli.common;
    match &cli.command {
        Command::Run => cmd_run(common),
        Command::Compare { a, b, interpolate, tolerance, window, strict } => {
            cmd_compare(a, b, *interpolate, *tolerance, *window, *strict)
        }
        Command::Fit { curves, distance, threshold, pooled } => cmd_fit(common, curves, *distance, *threshold, *pooled),
        Command::Oracle => cmd_oracle(common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.common.workers {
        Some(w) if w == 0 => Err(Error::Config(vec!["--workers must be >= 1".into()])),
        Some(w) => par::with_workers(w, || dispatch(&cli)),
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(exit_code(&e))
        }
    }
}
