use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use headrouter::baselines::{oracle_select, overlap};
use headrouter::pruner::{budget, prune};
use headrouter::tensor_io::load_profile_bank;
use headrouter::{Error, Method, PruneConfig, RoutingMode, SampleBundle, StageTimings};

use crate::inputs::{bundle_dirs, load_bundles, read_labels};
use crate::manifest::{write_json, ManifestBuilder, RunManifest};

pub const CSV_NAME: &str = "compare.csv";
pub const JSON_NAME: &str = "compare.json";

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Directory of bundle subdirectories; every bundle needs energy.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Optional `sample_id,category` CSV overriding bundle categories.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Profile bank for the headrouter methods.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "headrouter,fastv,frame,random,oracle",
        value_parser = super::parse::<Method>
    )]
    pub methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.6,0.9")]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub prefilter_keep: Option<f64>,
    #[arg(long, default_value = "soft", value_parser = super::parse::<RoutingMode>)]
    pub routing: RoutingMode,
    /// Output directory for `compare.csv` and `compare.json`.
    #[arg(long)]
    pub out: PathBuf,
}

/// One method at one ratio on one sample.
struct Record {
    category: String,
    overlap: f64,
    alphas: Option<[f64; 3]>,
    spread: Option<f64>,
    timings: StageTimings,
}

/// Aggregate over the samples of one category for one method and ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub method: String,
    pub ratio: f64,
    pub category: String,
    pub samples: usize,
    pub overlap_mean: f64,
    pub overlap_std: f64,
    pub alpha_semantic_mean: Option<f64>,
    pub alpha_uniform_mean: Option<f64>,
    pub alpha_acoustic_mean: Option<f64>,
    pub spread_mean: Option<f64>,
    pub probe_ns_mean: f64,
    pub routing_ns_mean: f64,
    pub scoring_ns_mean: f64,
    pub selection_ns_mean: f64,
    pub total_ns_mean: f64,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    manifest: RunManifest,
    rows: &'a [Row],
}

fn category_name(b: &SampleBundle) -> String {
    b.category().map_or_else(|| "unlabeled".to_string(), |c| c.to_string())
}

fn evaluate(
    b: &SampleBundle,
    bank: Option<&headrouter::ProfileBank>,
    args: &Args,
) -> Result<Vec<Record>> {
    let energy: Vec<f64> = b
        .energy()
        .ok_or_else(|| Error::MissingEnergy(b.sample_id().to_string()))?
        .iter()
        .map(|&e| f64::from(e))
        .collect();
    let mut out = Vec::with_capacity(args.ratios.len() * args.methods.len());
    for &ratio in &args.ratios {
        let oracle = oracle_select(&energy, budget(b.n_audio(), ratio)?)?;
        for &method in &args.methods {
            let mut cfg = PruneConfig::new(ratio).with_method(method).with_routing(args.routing).with_seed(args.seed);
            cfg.prefilter_keep = args.prefilter_keep;
            let res = prune(b, bank, &cfg).with_context(|| format!("{} on {}", method.tag(), b.sample_id()))?;
            out.push(Record {
                category: category_name(b),
                overlap: overlap(&res.retained, &oracle),
                alphas: res.decision.as_ref().map(|d| [d.alphas.semantic, d.alphas.uniform, d.alphas.acoustic]),
                spread: res.decision.as_ref().map(|d| d.stats.spread),
                timings: res.timings,
            });
        }
    }
    Ok(out)
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

fn aggregate(method: Method, ratio: f64, category: &str, recs: &[&Record]) -> Row {
    let n = recs.len();
    let overlap_mean = mean(recs.iter().map(|r| r.overlap)).unwrap_or(f64::NAN);
    let overlap_std = if n > 1 {
        (recs.iter().map(|r| (r.overlap - overlap_mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let alpha = |i: usize| mean(recs.iter().filter_map(|r| r.alphas.map(|a| a[i])));
    let t = |f: fn(&StageTimings) -> u64| mean(recs.iter().map(|r| f(&r.timings) as f64)).unwrap_or(0.0);
    Row {
        method: method.tag().to_string(),
        ratio,
        category: category.to_string(),
        samples: n,
        overlap_mean,
        overlap_std,
        alpha_semantic_mean: alpha(0),
        alpha_uniform_mean: alpha(1),
        alpha_acoustic_mean: alpha(2),
        spread_mean: mean(recs.iter().filter_map(|r| r.spread)),
        probe_ns_mean: t(|s| s.probe),
        routing_ns_mean: t(|s| s.routing),
        scoring_ns_mean: t(|s| s.scoring),
        selection_ns_mean: t(|s| s.selection),
        total_ns_mean: t(StageTimings::total),
    }
}

pub fn run(args: &Args, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("compare", argv, args);
    let labels = match &args.labels {
        Some(path) => {
            manifest.input(path)?;
            Some(read_labels(path)?)
        }
        None => None,
    };
    let bank = match &args.bank {
        Some(path) => {
            manifest.input(path)?;
            Some(load_profile_bank(path).with_context(|| format!("loading bank {}", path.display()))?)
        }
        None => None,
    };
    let dirs = bundle_dirs(&args.input)?;
    for d in &dirs {
        manifest.input(d)?;
    }
    let bundles = load_bundles(&dirs, labels.as_ref())?;
    let per_sample: Vec<Vec<Record>> =
        bundles.par_iter().map(|b| evaluate(b, bank.as_ref(), args)).collect::<Result<_>>()?;

    let mut categories: Vec<String> = bundles.iter().map(category_name).collect();
    categories.sort();
    categories.dedup();
    let mut rows = Vec::new();
    for (ri, &ratio) in args.ratios.iter().enumerate() {
        for (mi, &method) in args.methods.iter().enumerate() {
            let slot = ri * args.methods.len() + mi;
            for cat in &categories {
                let recs: Vec<&Record> =
                    per_sample.iter().map(|v| &v[slot]).filter(|r| &r.category == cat).collect();
                rows.push(aggregate(method, ratio, cat, &recs));
            }
        }
    }

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let csv_path = args.out.join(CSV_NAME);
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    write_json(&args.out.join(JSON_NAME), &Summary { manifest: manifest.finish(), rows: &rows })?;
    println!("compared {} methods x {} ratios on {} bundles -> {}", args.methods.len(), args.ratios.len(), bundles.len(), args.out.display());
    Ok(())
}
