//! Bundle directories and the `sample_id,category` labels file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use headrouter::tensor_io::{load_bundle, MANIFEST_FILE};
use headrouter::{Category, SampleBundle};

pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LabelRow {
    sample_id: String,
    category: Category,
}

pub type Labels = BTreeMap<String, Category>;

pub fn read_labels(path: &Path) -> Result<Labels> {
    let file = fs::File::open(path).map_err(|e| headrouter::Error::io(path, e))?;
    let mut labels = Labels::new();
    for row in csv::Reader::from_reader(file).deserialize::<LabelRow>() {
        let row = row.with_context(|| format!("parsing labels file {}", path.display()))?;
        if let Some(prev) = labels.insert(row.sample_id.clone(), row.category) {
            if prev != row.category {
                bail!("labels file {} gives `{}` two categories", path.display(), row.sample_id);
            }
        }
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &Labels) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for (sample_id, &category) in labels {
        w.serialize(LabelRow { sample_id: sample_id.clone(), category })?;
    }
    w.flush()?;
    Ok(())
}

/// Subdirectories of `dir` holding a bundle manifest, in name order.
pub fn bundle_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| headrouter::Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("no bundles found under {}", dir.display());
    }
    Ok(dirs)
}

/// Loads every bundle under `dir`. With `labels`, each bundle's category is
/// replaced by its label and unlabeled bundles are an error.
pub fn load_bundles(dirs: &[PathBuf], labels: Option<&Labels>) -> Result<Vec<SampleBundle>> {
    dirs.par_iter()
        .map(|d| {
            let mut b = load_bundle(d).with_context(|| format!("loading bundle {}", d.display()))?;
            if let Some(labels) = labels {
                match labels.get(b.sample_id()) {
                    Some(&c) => b.set_category(Some(c)),
                    None => bail!("bundle `{}` has no entry in the labels file", b.sample_id()),
                }
            }
            Ok(b)
        })
        .collect()
}
