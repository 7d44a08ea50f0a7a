use std::path::PathBuf;

use anyhow::Result;
use serde::Serialize;

use headrouter::pruner::run_pipeline;
use headrouter::router::{uniform_profile, PerProfile};
use headrouter::synth::{random_bundle, Dims};
use headrouter::{ProfileBank, PruneConfig, StageTimings};

use crate::manifest::{write_json, ManifestBuilder, RunManifest};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long, default_value_t = 9000, value_parser = clap::value_parser!(u32).range(1..))]
    pub n_audio: u32,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(1..))]
    pub n_text: u32,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..))]
    pub n_heads: u32,
    /// Model width.
    #[arg(long, default_value_t = 2048, value_parser = clap::value_parser!(u32).range(1..))]
    pub d: u32,
    /// Per-head query/key width.
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(1..))]
    pub dk: u32,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeats: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pruning ratio; the default 0.3 keeps every token through the
    /// pre-filter so the probe covers the full sequence.
    #[arg(long, default_value_t = 0.3)]
    pub ratio: f64,
    /// JSON report path; a summary is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    manifest: RunManifest,
    median_ns: StageTimings,
    median_total_ns: u64,
    median_routing_fraction: f64,
    repeats: Vec<StageTimings>,
}

fn median_u64(mut xs: Vec<u64>) -> u64 {
    xs.sort_unstable();
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2
    }
}

fn median_f64(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn run(args: &Args, argv: &[String]) -> Result<()> {
    let manifest = ManifestBuilder::new("bench", argv, args);
    let dims = Dims {
        n_text: args.n_text as usize,
        n_audio: args.n_audio as usize,
        n_heads: args.n_heads as usize,
        d_model: args.d as usize,
        d_head: args.dk as usize,
    };
    let bundle = random_bundle(dims, args.seed)?;
    let w = uniform_profile(dims.n_heads);
    let bank = ProfileBank::new(w.clone(), w, PerProfile::new(0.01, 0.05, 0.09), 0.02)?;
    let cfg = PruneConfig::new(args.ratio);

    let mut repeats = Vec::with_capacity(args.repeats as usize);
    for _ in 0..args.repeats {
        repeats.push(run_pipeline(&bundle, Some(&bank), &cfg)?.timings);
    }
    let med = |f: fn(&StageTimings) -> u64| median_u64(repeats.iter().map(f).collect());
    let report = BenchReport {
        median_ns: StageTimings {
            probe: med(|t| t.probe),
            routing: med(|t| t.routing),
            scoring: med(|t| t.scoring),
            selection: med(|t| t.selection),
        },
        median_total_ns: med(StageTimings::total),
        median_routing_fraction: median_f64(repeats.iter().map(StageTimings::routing_fraction).collect()),
        manifest: manifest.finish(),
        repeats,
    };
    let m = &report.median_ns;
    println!(
        "median over {} repeats: probe {:.3} ms, routing {:.3} ms, scoring {:.3} ms, selection {:.3} ms; routing fraction {:.4}%",
        report.repeats.len(),
        m.probe as f64 / 1e6,
        m.routing as f64 / 1e6,
        m.scoring as f64 / 1e6,
        m.selection as f64 / 1e6,
        100.0 * report.median_routing_fraction
    );
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(())
}
