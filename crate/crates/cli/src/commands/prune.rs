use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

use headrouter::pruner::prune;
use headrouter::tensor_io::{load_bundle, load_profile_bank, write_report, PruneReport};
use headrouter::{Method, PruneConfig, RoutingMode};

use crate::manifest::ManifestBuilder;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Bundle directory or its manifest file.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Profile bank; required by the headrouter methods unless routing is
    /// uniform.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Fraction of audio tokens to remove, in [0, 1).
    #[arg(long)]
    pub ratio: f64,
    #[arg(long, default_value = "headrouter", value_parser = super::parse::<Method>)]
    pub method: Method,
    /// Run seed for the random method.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction kept by the Frame pre-filter (default min(1, 2(1 - ratio))).
    #[arg(long)]
    pub prefilter_keep: Option<f64>,
    #[arg(long, default_value = "soft", value_parser = super::parse::<RoutingMode>)]
    pub routing: RoutingMode,
    /// Probe every token and apply the pre-filter only at selection.
    #[arg(long)]
    pub probe_before_prefilter: bool,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Args {
    pub fn config(&self) -> PruneConfig {
        let mut cfg = PruneConfig::new(self.ratio)
            .with_method(self.method)
            .with_routing(self.routing)
            .with_seed(self.seed);
        cfg.prefilter_keep = self.prefilter_keep;
        cfg.probe_before_prefilter = self.probe_before_prefilter;
        cfg
    }
}

pub fn run(args: &Args, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("prune", argv, args);
    let bundle_dir = if args.input.is_dir() {
        args.input.clone()
    } else {
        match args.input.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        }
    };
    manifest.input(&bundle_dir)?;
    let bundle = load_bundle(&args.input).with_context(|| format!("loading bundle {}", args.input.display()))?;
    let bank = match &args.bank {
        Some(path) => {
            manifest.input(path)?;
            Some(load_profile_bank(path).with_context(|| format!("loading bank {}", path.display()))?)
        }
        None => None,
    };
    let cfg = args.config();
    let result = prune(&bundle, bank.as_ref(), &cfg)?;
    let mut report = PruneReport::new(&bundle, &cfg, &result);
    report.manifest = Some(serde_json::to_value(manifest.finish())?);
    match &args.out {
        Some(path) => {
            write_report(path, &report)?;
            println!("kept {} of {} tokens -> {}", report.budget, report.n_audio, path.display());
        }
        None => {
            report.validate()?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
