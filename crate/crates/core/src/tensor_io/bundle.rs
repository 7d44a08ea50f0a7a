use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array1, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use super::{read_tensor, write_tensor, Tensor};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "bundle.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Semantic,
    Acoustic,
    Mixed,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Semantic, Category::Acoustic, Category::Mixed];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Semantic => "semantic",
            Category::Acoustic => "acoustic",
            Category::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "semantic" => Ok(Category::Semantic),
            "acoustic" => Ok(Category::Acoustic),
            "mixed" => Ok(Category::Mixed),
            other => Err(Error::InvalidArgument(format!("unknown category `{other}`"))),
        }
    }
}

/// One probe input: hidden states for the text and audio tokens entering the
/// pruning layer, plus that layer's per-head query/key projections.
///
/// Projections are stored as `[n_heads, d_model, d_head]`. Grouped-query
/// models are represented by repeating the shared key projection per head.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBundle {
    sample_id: String,
    category: Option<Category>,
    text: Array2<f32>,
    audio: Array2<f32>,
    q_proj: Array3<f32>,
    k_proj: Array3<f32>,
    energy: Option<Array1<f32>>,
}

impl SampleBundle {
    pub fn new(
        sample_id: impl Into<String>,
        category: Option<Category>,
        text: Array2<f32>,
        audio: Array2<f32>,
        q_proj: Array3<f32>,
        k_proj: Array3<f32>,
        energy: Option<Array1<f32>>,
    ) -> Result<Self> {
        let (n_text, d) = text.dim();
        let (n_audio, d_audio) = audio.dim();
        if n_text == 0 || n_audio == 0 || d == 0 {
            return Err(Error::Shape(format!(
                "empty embeddings: text {:?}, audio {:?}",
                text.dim(),
                audio.dim()
            )));
        }
        if d != d_audio {
            return Err(Error::Shape(format!(
                "text width {d} differs from audio width {d_audio}"
            )));
        }
        if q_proj.dim() != k_proj.dim() {
            return Err(Error::Shape(format!(
                "q_proj {:?} and k_proj {:?} differ in shape",
                q_proj.dim(),
                k_proj.dim()
            )));
        }
        let (n_heads, d_in, d_head) = q_proj.dim();
        if n_heads == 0 || d_head == 0 {
            return Err(Error::Shape(format!("empty projections {:?}", q_proj.dim())));
        }
        if d_in != d {
            return Err(Error::Shape(format!(
                "projection input width {d_in} differs from embedding width {d}"
            )));
        }
        if let Some(e) = &energy {
            if e.len() != n_audio {
                return Err(Error::Shape(format!(
                    "energy has {} entries for {n_audio} audio tokens",
                    e.len()
                )));
            }
            if let Some(i) = e.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Shape(format!("energy[{i}] is negative or non-finite")));
            }
        }
        for (name, arr) in [
            ("text", text.as_slice_memory_order()),
            ("audio", audio.as_slice_memory_order()),
            ("q_proj", q_proj.as_slice_memory_order()),
            ("k_proj", k_proj.as_slice_memory_order()),
        ] {
            let finite = match arr {
                Some(s) => s.iter().all(|v| v.is_finite()),
                None => true,
            };
            if !finite {
                return Err(Error::Shape(format!("{name} contains non-finite values")));
            }
        }
        Ok(Self {
            sample_id: sample_id.into(),
            category,
            text: text.as_standard_layout().into_owned(),
            audio: audio.as_standard_layout().into_owned(),
            q_proj: q_proj.as_standard_layout().into_owned(),
            k_proj: k_proj.as_standard_layout().into_owned(),
            energy,
        })
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn category(&self) -> Option<Category> {
        self.category
    }

    pub fn set_category(&mut self, category: Option<Category>) {
        self.category = category;
    }

    pub fn text(&self) -> &Array2<f32> {
        &self.text
    }

    pub fn audio(&self) -> &Array2<f32> {
        &self.audio
    }

    pub fn q_proj(&self) -> &Array3<f32> {
        &self.q_proj
    }

    pub fn k_proj(&self) -> &Array3<f32> {
        &self.k_proj
    }

    pub fn energy(&self) -> Option<&Array1<f32>> {
        self.energy.as_ref()
    }

    pub fn n_text(&self) -> usize {
        self.text.nrows()
    }

    pub fn n_audio(&self) -> usize {
        self.audio.nrows()
    }

    pub fn n_heads(&self) -> usize {
        self.q_proj.dim().0
    }

    pub fn d_model(&self) -> usize {
        self.text.ncols()
    }

    pub fn d_head(&self) -> usize {
        self.q_proj.dim().2
    }

    /// Reorders audio tokens (and energy) so that new token `i` is old token
    /// `order[i]`.
    pub fn reorder_audio(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.n_audio())?;
        let mut out = self.clone();
        out.audio = self.audio.select(Axis(0), order);
        out.energy = self.energy.as_ref().map(|e| e.select(Axis(0), order));
        Ok(out)
    }

    /// Reorders text tokens so that new row `j` is old row `order[j]`.
    pub fn reorder_text(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.n_text())?;
        let mut out = self.clone();
        out.text = self.text.select(Axis(0), order);
        Ok(out)
    }
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::Shape(format!("permutation of length {} for {n} items", order.len())));
    }
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    pub text: String,
    pub audio: String,
    pub q_proj: String,
    pub k_proj: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<String>,
}

fn manifest_path(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join(MANIFEST_FILE), path.to_path_buf())
    } else {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (path.to_path_buf(), dir)
    }
}

pub fn read_manifest(path: &Path) -> Result<(BundleManifest, PathBuf)> {
    let (manifest_file, dir) = manifest_path(path);
    let text = fs::read_to_string(&manifest_file).map_err(|e| Error::io(&manifest_file, e))?;
    let manifest: BundleManifest =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", manifest_file.display())))?;
    Ok((manifest, dir))
}

fn load_member(dir: &Path, name: &str, file: &str, rank: usize) -> Result<(Vec<usize>, Vec<f32>)> {
    let path = dir.join(file);
    if !path.exists() {
        return Err(Error::MissingMember(format!("{name} ({})", path.display())));
    }
    let (dims, data) = read_tensor(&path)?.into_parts();
    if dims.len() != rank {
        return Err(Error::Shape(format!(
            "{name} has rank {} but rank {rank} is required",
            dims.len()
        )));
    }
    Ok((dims, data))
}

fn to2(dims: Vec<usize>, data: Vec<f32>) -> Array2<f32> {
    Array2::from_shape_vec((dims[0], dims[1]), data).expect("validated shape")
}

fn to3(dims: Vec<usize>, data: Vec<f32>) -> Array3<f32> {
    Array3::from_shape_vec((dims[0], dims[1], dims[2]), data).expect("validated shape")
}

/// Loads a bundle from a directory holding [`MANIFEST_FILE`], or from the
/// manifest file itself.
pub fn load_bundle(path: impl AsRef<Path>) -> Result<SampleBundle> {
    let (manifest, dir) = read_manifest(path.as_ref())?;
    let (d, v) = load_member(&dir, "text", &manifest.text, 2)?;
    let text = to2(d, v);
    let (d, v) = load_member(&dir, "audio", &manifest.audio, 2)?;
    let audio = to2(d, v);
    let (d, v) = load_member(&dir, "q_proj", &manifest.q_proj, 3)?;
    let q_proj = to3(d, v);
    let (d, v) = load_member(&dir, "k_proj", &manifest.k_proj, 3)?;
    let k_proj = to3(d, v);
    let energy = match &manifest.energy {
        Some(file) => {
            let (_, v) = load_member(&dir, "energy", file, 1)?;
            Some(Array1::from(v))
        }
        None => None,
    };
    SampleBundle::new(
        manifest.sample_id,
        manifest.category,
        text,
        audio,
        q_proj,
        k_proj,
        energy,
    )
}

/// Writes `bundle` into `dir` (created if absent) with fixed member names.
pub fn save_bundle(dir: impl AsRef<Path>, bundle: &SampleBundle) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let put = |file: &str, dims: Vec<usize>, data: Vec<f32>| -> Result<()> {
        write_tensor(dir.join(file), &Tensor::new(dims, data)?)
    };
    put("text.hrtn", bundle.text.shape().to_vec(), bundle.text.iter().copied().collect())?;
    put("audio.hrtn", bundle.audio.shape().to_vec(), bundle.audio.iter().copied().collect())?;
    put("q_proj.hrtn", bundle.q_proj.shape().to_vec(), bundle.q_proj.iter().copied().collect())?;
    put("k_proj.hrtn", bundle.k_proj.shape().to_vec(), bundle.k_proj.iter().copied().collect())?;
    if let Some(e) = &bundle.energy {
        put("energy.hrtn", vec![e.len()], e.to_vec())?;
    }
    let manifest = BundleManifest {
        sample_id: bundle.sample_id.clone(),
        category: bundle.category,
        text: "text.hrtn".into(),
        audio: "audio.hrtn".into(),
        q_proj: "q_proj.hrtn".into(),
        k_proj: "k_proj.hrtn".into(),
        energy: bundle.energy.as_ref().map(|_| "energy.hrtn".into()),
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array3};

    fn eye_proj(n_heads: usize, d: usize) -> Array3<f32> {
        Array3::from_shape_fn((n_heads, d, d), |(_, i, j)| if i == j { 1.0 } else { 0.0 })
    }

    fn minimal(energy: Option<Array1<f32>>, category: Option<Category>) -> Result<SampleBundle> {
        SampleBundle::new(
            "tiny",
            category,
            arr2(&[[1.0, 0.0]]),
            arr2(&[[1.0, 0.0], [0.0, 1.0]]),
            eye_proj(1, 2),
            eye_proj(1, 2),
            energy,
        )
    }

    #[test]
    fn minimal_bundle_is_valid_and_round_trips() {
        let b = minimal(Some(arr1(&[1.0, 0.0])), Some(Category::Acoustic)).unwrap();
        assert_eq!((b.n_text(), b.n_audio(), b.n_heads(), b.d_model(), b.d_head()), (1, 2, 1, 2, 2));
        let dir = tempfile::tempdir().unwrap();
        save_bundle(dir.path(), &b).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.category(), Some(Category::Acoustic));
        // Loading through the manifest path works too.
        assert_eq!(load_bundle(dir.path().join(MANIFEST_FILE)).unwrap(), b);
    }

    #[test]
    fn energy_length_mismatch_rejected() {
        assert!(matches!(minimal(Some(arr1(&[1.0])), None), Err(Error::Shape(_))));
        assert!(matches!(minimal(Some(arr1(&[1.0, -1.0])), None), Err(Error::Shape(_))));
    }

    #[test]
    fn projection_shape_mismatch_rejected() {
        let err = SampleBundle::new(
            "x",
            None,
            arr2(&[[1.0, 0.0]]),
            arr2(&[[1.0, 0.0]]),
            eye_proj(2, 2),
            eye_proj(1, 2),
            None,
        );
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn missing_member_reported() {
        let b = minimal(None, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(dir.path(), &b).unwrap();
        fs::remove_file(dir.path().join("k_proj.hrtn")).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::MissingMember(_))));
    }

    #[test]
    fn garbage_manifest_is_manifest_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "{ not json").unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::Manifest(_))));
    }

    #[test]
    fn reorder_checks_permutation() {
        let b = minimal(Some(arr1(&[3.0, 1.0])), None).unwrap();
        let r = b.reorder_audio(&[1, 0]).unwrap();
        assert_eq!(r.audio().row(0), b.audio().row(1));
        assert_eq!(r.energy().unwrap()[0], 1.0);
        assert!(b.reorder_audio(&[0, 0]).is_err());
        assert!(b.reorder_audio(&[0]).is_err());
    }
}
