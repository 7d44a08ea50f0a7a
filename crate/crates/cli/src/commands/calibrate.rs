use std::path::PathBuf;

use anyhow::Result;
use serde::Serialize;

use headrouter::calibration::{calibrate_detailed, CalibrationSet};
use headrouter::tensor_io::save_profile_bank;
use headrouter::Category;

use crate::inputs::{bundle_dirs, load_bundles, read_labels};
use crate::manifest::{write_json, ManifestBuilder, RunManifest};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Directory of bundle subdirectories.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// `sample_id,category` CSV; bundles labeled `mixed` are skipped.
    #[arg(long)]
    pub labels: PathBuf,
    /// Profile bank output (JSON). A `<out>.manifest.json` sidecar records
    /// provenance and calibration statistics.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Sidecar {
    manifest: RunManifest,
    semantic_samples: usize,
    acoustic_samples: usize,
    skipped_mixed: usize,
    semantic_spreads: Vec<f64>,
    acoustic_spreads: Vec<f64>,
    pooled_std: f64,
    profile_method: &'static str,
}

pub fn sidecar_path(out: &std::path::Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn run(args: &Args, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("calibrate", argv, args);
    let labels = read_labels(&args.labels)?;
    manifest.input(&args.labels)?;
    let dirs = bundle_dirs(&args.input)?;
    for d in &dirs {
        manifest.input(d)?;
    }
    let bundles = load_bundles(&dirs, Some(&labels))?;
    let total = bundles.len();
    let used: Vec<_> = bundles.into_iter().filter(|b| b.category() != Some(Category::Mixed)).collect();
    let skipped_mixed = total - used.len();
    let set = CalibrationSet::new(used)?;
    let cal = calibrate_detailed(&set)?;
    save_profile_bank(&args.out, &cal.bank)?;

    let sidecar = Sidecar {
        manifest: manifest.finish(),
        semantic_samples: set.count(Category::Semantic),
        acoustic_samples: set.count(Category::Acoustic),
        skipped_mixed,
        semantic_spreads: cal.semantic_spreads,
        acoustic_spreads: cal.acoustic_spreads,
        pooled_std: cal.pooled_std,
        profile_method: "oracle-alignment stand-in",
    };
    write_json(&sidecar_path(&args.out), &sidecar)?;
    let c = cal.bank.centers();
    println!(
        "calibrated on {} semantic + {} acoustic samples: centers {:.6} / {:.6} / {:.6}, bandwidth {:.6}",
        sidecar.semantic_samples, sidecar.acoustic_samples, c.semantic, c.uniform, c.acoustic,
        cal.bank.bandwidth()
    );
    Ok(())
}
