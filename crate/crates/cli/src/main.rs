//! `wmmd`: sketches, discrepancies, compressive K-means and the lab experiments.
//!
//! Exit status: 0 on success (or a passing experiment), 2 when a checked
//! bound is violated, 1 on usage or I/O errors. Errors go to standard error
//! as `E:<kind>: <message>`.

mod config;
mod error;
mod lab;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::Array2;
use serde_json::json;
use wmmd_core::discrepancy::mmd;
use wmmd_core::lab::wp_discrete;
use wmmd_core::measures::{read_dataset, write_csv, DiscreteMeasure};
use wmmd_core::sketch::{draw_features, merge, sketch_samples, Sketch};
use wmmd_core::tasks::{centroids, decode_diracs, excess_risk_report, CkmeansOptions, DecoderOptions, Domain, TaskSpec};

use config::{KernelArg, RunConfig};
use error::{usage, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "wmmd", version = wmmd_core::report::version(), about = "Wasserstein and MMD toolkit")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "WMMD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the data commands; each falls back to the `--config` file.
#[derive(Debug, clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Kernel as JSON or short form (gaussian[:sigma], laplacian[:sigma], matern[:nu[:sigma]]).
    #[arg(long)]
    kernel: Option<KernelArg>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sketch a dataset with random Fourier features.
    Sketch {
        input: Option<PathBuf>,
        #[arg(long)]
        m: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Merge sketches drawn with the same features.
    Merge {
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Decode a Dirac mixture from a sketch and write its atoms as CSV.
    Decode {
        input: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        /// Atoms are searched in the ball B(center, radius).
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        center: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// MMD between two datasets (uniform weights).
    Mmd {
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Exact W_p between two datasets (uniform weights).
    Wass {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        p: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Compressive K-means against Lloyd on held-out data.
    Ckmeans {
        input: Option<PathBuf>,
        /// Held-out data; defaults to the training set.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        /// Write the decoded centroids here.
        #[arg(long)]
        centroids: Option<PathBuf>,
        /// Exit with status 2 if risk_sketch / risk_lloyd exceeds this.
        #[arg(long)]
        max_ratio: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Numerical experiments; prints the JSON summary.
    Lab(lab::LabArgs),
}

enum Outcome {
    Done,
    Violation,
}

/// Writes a line to stdout; a closed pipe downstream is not an error.
pub(crate) fn say(text: &dyn std::fmt::Display) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("E:usage: --threads {t}: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Violation) => ExitCode::from(2),
        Err(e) => {
            eprintln!("E:{}: {e}", e.kind());
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<Outcome> {
    match cmd {
        Command::Sketch { input, m, common } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let path = one_input(input, &cfg)?;
            let x = read_dataset(&path)?;
            let m = m.or(cfg.m).ok_or_else(|| usage("sketch needs --m"))?;
            let seed = seed(&common, &cfg, "sketch")?;
            let kernel = kernel(&common, &cfg, x.ncols())?;
            let s = sketch_samples(&draw_features(&kernel, m, seed)?, x.view())?;
            emit(&s.to_json(), common.output.or(cfg.output).as_deref())?;
        }
        Command::Merge { inputs, common } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let inputs = if inputs.is_empty() { cfg.inputs.clone() } else { inputs };
            if inputs.is_empty() {
                return Err(usage("merge needs at least one sketch file"));
            }
            let sketches: Vec<Sketch> = inputs.iter().map(Sketch::read).collect::<Result<_, _>>()?;
            emit(&merge(&sketches)?.to_json(), common.output.or(cfg.output).as_deref())?;
        }
        Command::Decode { input, k, radius, center, common } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let s = Sketch::read(one_input(input, &cfg)?)?;
            let k = k.or(cfg.k).ok_or_else(|| usage("decode needs --k"))?;
            let radius = radius.or(cfg.radius).ok_or_else(|| usage("decode needs --radius"))?;
            let d = s.feature_map().dim();
            let center = center.or(cfg.center.clone()).unwrap_or_else(|| vec![0.0; d]);
            if center.len() != d {
                return Err(usage(format!("--center has {} coordinates, the sketch is in R^{d}", center.len())));
            }
            let mut opts = cfg.decoder.clone().unwrap_or_default();
            if let Some(seed) = common.seed.or(cfg.seed) {
                opts.seed = seed;
            }
            let dec = decode_diracs(&s, k, &Domain::new(center, radius)?, &opts)?;
            let out = common.output.or(cfg.output).ok_or_else(|| usage("decode needs -o <centroids.csv>"))?;
            write_csv(&out, &centroids(&dec, k))?;
            let summary = json!({
                "k": k,
                "residual": dec.residual,
                "weights": dec.measure.weight_slice(),
                "centroids": out,
            });
            say(&summary);
        }
        Command::Mmd { inputs, common } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let (a, b) = two_datasets(inputs, &cfg)?;
            let kernel = kernel(&common, &cfg, a.dim())?;
            let v = mmd(&kernel, &a.into(), &b.into())?;
            say(&v.value);
        }
        Command::Wass { inputs, p, common } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let (a, b) = two_datasets(inputs, &cfg)?;
            let p = p.or(cfg.p).unwrap_or(1.0);
            say(&wp_discrete(p, &a, &b)?);
        }
        Command::Ckmeans { input, test, k, m, centroids: centroid_path, max_ratio, common } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let train = uniform(&read_dataset(one_input(input, &cfg)?)?)?;
            let test = match test.or_else(|| cfg.inputs.get(1).cloned()) {
                Some(p) => uniform(&read_dataset(p)?)?,
                None => train.clone(),
            };
            let task = match (k.or(cfg.k), &cfg.task) {
                (Some(k), _) => TaskSpec::KMeans { k },
                (None, Some(t)) => t.clone(),
                (None, None) => return Err(usage("ckmeans needs --k")),
            };
            let opts = CkmeansOptions {
                kernel: kernel(&common, &cfg, train.dim())?,
                m: m.or(cfg.m).ok_or_else(|| usage("ckmeans needs --m"))?,
                seed: seed(&common, &cfg, "ckmeans")?,
                decoder: cfg.decoder.clone().unwrap_or_else(DecoderOptions::default),
                lloyd_inits: cfg.lloyd_inits.unwrap_or(10),
            };
            let rep = excess_risk_report(&train, &test, &test.clone().into(), &task, &opts)?;
            if let Some(p) = centroid_path {
                write_csv(p, &rep.centroids_sketch)?;
            }
            let text = serde_json::to_string_pretty(&rep).expect("report serializes");
            match common.output.or(cfg.output.clone()) {
                Some(p) => write_text(&p, &text)?,
                None => say(&text),
            }
            if let Some(bound) = max_ratio.or(cfg.max_ratio) {
                if !(rep.ratio <= bound) {
                    return Ok(Outcome::Violation);
                }
            }
        }
        Command::Lab(args) => {
            let Some(rep) = lab::run(&args)? else {
                return Ok(Outcome::Done);
            };
            if let Some(p) = &args.output {
                rep.write(p)?;
            }
            say(&rep.summary_json());
            if !rep.pass {
                return Ok(Outcome::Violation);
            }
        }
    }
    Ok(Outcome::Done)
}

fn one_input(input: Option<PathBuf>, cfg: &RunConfig) -> CliResult<PathBuf> {
    input.or_else(|| cfg.inputs.first().cloned()).ok_or_else(|| usage("missing input file"))
}

fn two_datasets(inputs: Vec<PathBuf>, cfg: &RunConfig) -> CliResult<(DiscreteMeasure, DiscreteMeasure)> {
    let inputs = if inputs.is_empty() { cfg.inputs.clone() } else { inputs };
    let [a, b] = inputs.as_slice() else {
        return Err(usage(format!("expected two dataset files, got {}", inputs.len())));
    };
    let (a, b) = (read_dataset(a)?, read_dataset(b)?);
    if a.ncols() != b.ncols() {
        return Err(usage(format!("datasets live in R^{} and R^{}", a.ncols(), b.ncols())));
    }
    Ok((uniform(&a)?, uniform(&b)?))
}

fn uniform(x: &Array2<f64>) -> CliResult<DiscreteMeasure> {
    Ok(DiscreteMeasure::uniform(x.clone())?)
}

fn seed(common: &Common, cfg: &RunConfig, cmd: &str) -> CliResult<u64> {
    common.seed.or(cfg.seed).ok_or_else(|| usage(format!("{cmd} is stochastic and needs --seed")))
}

fn kernel(common: &Common, cfg: &RunConfig, d: usize) -> CliResult<wmmd_core::kernels::KernelSpec> {
    match (&common.kernel, &cfg.kernel) {
        (Some(k), _) => k.resolve(d),
        (None, Some(k)) => KernelArg::Spec(k.clone()).resolve(d),
        (None, None) => Err(usage("missing --kernel")),
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn emit(text: &str, path: Option<&Path>) -> CliResult<()> {
    match path {
        Some(p) => write_text(p, text),
        None => {
            say(&text);
            Ok(())
        }
    }
}
