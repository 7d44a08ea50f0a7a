use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use headrouter::synth::{generate, sample_seed, GeneratorSpec};
use headrouter::tensor_io::save_bundle;
use headrouter::Category;

use crate::inputs::{read_labels, write_labels, Labels, LABELS_FILE};
use crate::manifest::{write_json, ManifestBuilder};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long, value_parser = super::parse::<Category>)]
    pub category: Category,
    /// Number of bundles.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub n: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1500, value_parser = clap::value_parser!(u32).range(1..))]
    pub n_audio: u32,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..))]
    pub n_heads: u32,
    /// Output directory; one subdirectory per bundle plus `labels.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

pub const MANIFEST_NAME: &str = "synth-manifest.json";

pub fn run(args: &Args, argv: &[String]) -> Result<()> {
    let manifest = ManifestBuilder::new("synth", argv, args);
    fs::create_dir_all(&args.out).map_err(|e| headrouter::Error::io(&args.out, e))?;
    let specs: Vec<GeneratorSpec> = (0..args.n as usize)
        .map(|i| {
            let base = GeneratorSpec::new(args.category, sample_seed(args.seed, args.category, i));
            GeneratorSpec {
                n_audio: args.n_audio as usize,
                n_heads: args.n_heads as usize,
                d_model: base.d_model.max(args.n_heads as usize),
                ..base
            }
        })
        .collect();
    let ids: Vec<String> = specs
        .par_iter()
        .map(|spec| -> Result<String> {
            let b = generate(spec)?;
            save_bundle(args.out.join(b.sample_id()), &b)?;
            Ok(b.sample_id().to_string())
        })
        .collect::<Result<_>>()?;

    let labels_path = args.out.join(LABELS_FILE);
    let mut labels = if labels_path.exists() { read_labels(&labels_path)? } else { Labels::new() };
    labels.extend(ids.iter().map(|id| (id.clone(), args.category)));
    write_labels(&labels_path, &labels)?;
    write_json(&args.out.join(MANIFEST_NAME), &manifest.finish())?;
    println!("wrote {} {} bundles to {}", ids.len(), args.category, args.out.display());
    Ok(())
}
