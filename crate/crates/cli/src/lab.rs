//! `wmmd lab <experiment>`: config layering and dispatch to the core experiments.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{de::DeserializeOwned, Serialize};
use serde_json::Value;
use wmmd_core::lab::{self, Report};

use crate::config::{layered, parse_json, read_text, KernelArg, SetArg};
use crate::error::{usage, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Counterexample,
    Rates,
    FourierBound,
    Smoothing,
    Dominance,
    Sliced,
    Embeddability,
    Learnability,
    Segment,
    Agreement,
    SketchLipschitz,
    Ckmeans,
}

impl Experiment {
    fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }

    /// Experiments whose output depends on the seed.
    fn stochastic(self) -> bool {
        !matches!(self, Experiment::Counterexample | Experiment::Segment)
    }

    /// Config key receiving `--kernel`, and whether it holds a list.
    fn kernel_key(self) -> Option<(&'static str, bool)> {
        match self {
            Experiment::Counterexample
            | Experiment::Segment
            | Experiment::FourierBound
            | Experiment::Embeddability
            | Experiment::SketchLipschitz
            | Experiment::Ckmeans => Some(("kernel", false)),
            Experiment::Rates => Some(("mmd_kernel", false)),
            Experiment::Sliced => Some(("base", false)),
            Experiment::Dominance => Some(("kernels", true)),
            Experiment::Smoothing | Experiment::Learnability | Experiment::Agreement => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct LabArgs {
    pub experiment: Experiment,
    /// JSON file with experiment settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Kernel as JSON or short form (gaussian[:sigma], laplacian[:sigma], matern[:nu[:sigma]]).
    #[arg(long)]
    pub kernel: Option<KernelArg>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Any other setting, as key=JSON (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<SetArg>,
    /// Write the per-row CSV here and the summary next to it.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

/// Runs the experiment and returns its report (or `None` with `--print-config`).
pub fn run(args: &LabArgs) -> CliResult<Option<Report>> {
    use Experiment::*;
    match args.experiment {
        Counterexample => go(args, &lab::CounterexampleConfig::default(), lab::counterexample),
        Rates => go(args, &lab::RatesConfig::default(), lab::rates),
        FourierBound => go(args, &lab::FourierBoundConfig::default(), lab::fourier_bound),
        Smoothing => go(args, &lab::SmoothingConfig::default(), lab::smoothing),
        Dominance => go(args, &lab::DominanceConfig::default(), lab::dominance),
        Sliced => go(args, &lab::SlicedConfig::default(), lab::sliced),
        Embeddability => go(args, &lab::EmbeddabilityConfig::default(), lab::embeddability),
        Learnability => go(args, &lab::LearnabilityConfig::default(), lab::learnability),
        Segment => go(args, &lab::SegmentConfig::default(), lab::segment),
        Agreement => go(args, &lab::AgreementConfig::default(), lab::mmd_agreement),
        SketchLipschitz => go(args, &lab::SketchLipschitzConfig::default(), lab::sketch_lipschitz),
        Ckmeans => go(args, &lab::CkmeansConfig::default(), lab::ckmeans),
    }
}

fn go<T, F>(args: &LabArgs, defaults: &T, f: F) -> CliResult<Option<Report>>
where
    T: Serialize + DeserializeOwned,
    F: Fn(&T) -> wmmd_core::Result<Report>,
{
    let cfg: T = effective_config(args, defaults)?;
    if args.print_config {
        crate::say(&serde_json::to_string_pretty(&cfg).expect("configs serialize"));
        return Ok(None);
    }
    Ok(Some(f(&cfg)?))
}

fn effective_config<T: Serialize + DeserializeOwned>(args: &LabArgs, defaults: &T) -> CliResult<T> {
    let exp = args.experiment;
    let what = format!("lab {}", exp.name());
    let file: Option<Value> = match &args.config {
        Some(p) => Some(parse_json(&read_text(p)?, &p.display().to_string())?),
        None => None,
    };
    let base = serde_json::to_value(defaults).expect("configs serialize");
    let mut over: Vec<(String, Value)> = Vec::new();
    if let Some(seed) = args.seed {
        if exp == Experiment::Ckmeans {
            let n = base["seeds"].as_array().map_or(1, Vec::len) as u64;
            over.push(("seeds".into(), Value::from((seed..seed + n).collect::<Vec<_>>())));
        } else if base.get("seed").is_some() {
            over.push(("seed".into(), Value::from(seed)));
        } else {
            return Err(usage(format!("{what} is deterministic and takes no --seed")));
        }
    } else if exp.stochastic() {
        let in_file = file.as_ref().is_some_and(|f| f.get("seed").is_some() || f.get("seeds").is_some());
        if !in_file {
            return Err(usage(format!("{what} is stochastic: give --seed or a seed in the config file")));
        }
    }
    if let Some(k) = &args.kernel {
        let (key, list) = exp.kernel_key().ok_or_else(|| usage(format!("{what} takes no --kernel")))?;
        let current = file.as_ref().and_then(|f| f.get(key)).or_else(|| base.get(key));
        let current = if list { current.and_then(|v| v.get(0)) } else { current };
        let spec = serde_json::to_value(k.resolve_like(current)?).expect("kernels serialize");
        over.push((key.into(), if list { Value::Array(vec![spec]) } else { spec }));
    }
    for (flag, v) in [
        ("k", args.k.map(Value::from)),
        ("p", args.p.map(Value::from)),
        ("delta", args.delta.map(Value::from)),
        ("trials", args.trials.map(Value::from)),
        ("pairs", args.pairs.map(Value::from)),
    ] {
        if let Some(v) = v {
            if base.get(flag).is_none() {
                return Err(usage(format!("{what} takes no --{flag}")));
            }
            over.push((flag.into(), v));
        }
    }
    over.extend(args.set.iter().map(|s| (s.key.clone(), s.value.clone())));
    layered(defaults, file, &over, &what)
}
