use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Category, SampleBundle};
use crate::error::{Error, Result};
use crate::pruner::{PruneConfig, PruneResult, StageTimings};
use crate::router::PerProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingReport {
    pub selectivity: Vec<f64>,
    pub spread: f64,
    pub alphas: PerProfile<f64>,
    pub w_star: Vec<f64>,
}

/// Machine-readable outcome of pruning one sample.
///
/// `importance` holds `null` for tokens the pre-filter removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing_mode: Option<String>,
    pub ratio: f64,
    pub budget: usize,
    pub n_audio: usize,
    pub candidates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefilter_keep: Option<f64>,
    pub pruning_layer: u32,
    pub importance: Vec<Option<f64>>,
    pub retained: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<RoutingReport>,
    pub timing_ns: StageTimings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

impl PruneReport {
    pub fn new(bundle: &SampleBundle, cfg: &PruneConfig, result: &PruneResult) -> Self {
        let router = cfg.method.uses_router();
        Self {
            sample_id: bundle.sample_id().to_string(),
            category: bundle.category(),
            method: cfg.method.tag().to_string(),
            routing_mode: router.then(|| cfg.effective_routing().to_string()),
            ratio: cfg.ratio,
            budget: result.budget,
            n_audio: bundle.n_audio(),
            candidates: result.candidates,
            prefilter_keep: router.then(|| cfg.effective_prefilter_keep()),
            pruning_layer: cfg.pruning_layer,
            importance: result
                .importance
                .iter()
                .map(|&v| v.is_finite().then_some(v))
                .collect(),
            retained: result.retained.clone(),
            routing: result.decision.as_ref().map(|d| RoutingReport {
                selectivity: d.stats.sel.clone(),
                spread: d.stats.spread,
                alphas: d.alphas,
                w_star: d.w_star.clone(),
            }),
            timing_ns: result.timings,
            manifest: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Shape(format!("report {}: {msg}", self.sample_id)));
        if self.importance.len() != self.n_audio {
            return bad(format!(
                "{} importance entries for {} tokens",
                self.importance.len(),
                self.n_audio
            ));
        }
        if self.retained.len() != self.budget {
            return bad(format!(
                "{} retained indices for budget {}",
                self.retained.len(),
                self.budget
            ));
        }
        if !self.retained.windows(2).all(|w| w[0] < w[1]) {
            return bad("retained indices not strictly increasing".into());
        }
        if self.retained.last().is_some_and(|&i| i >= self.n_audio) {
            return bad("retained index out of range".into());
        }
        if let Some(r) = &self.routing {
            let total = r.alphas.sum();
            if (total - 1.0).abs() > 1e-9 || r.alphas.iter().any(|(_, a)| *a < 0.0) {
                return bad(format!("alphas sum to {total}"));
            }
        }
        Ok(())
    }
}

pub fn write_report(path: impl AsRef<Path>, report: &PruneReport) -> Result<()> {
    report.validate()?;
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<PruneReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: PruneReport =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    report.validate()?;
    Ok(report)
}
