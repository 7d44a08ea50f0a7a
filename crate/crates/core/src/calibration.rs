//! Estimation of the profile bank from a small labeled sample set.
//!
//! Centers are per-category mean spreads, with the uniform center at their
//! midpoint. The bandwidth is `max(span / 4, pooled within-category std)`,
//! floored at `1e-6`. Profiles use an oracle-alignment stand-in for
//! head-ablation statistics: a head's weight is the probe mass it places on
//! the top half of tokens by energy, averaged over the category's samples
//! and normalized. Externally measured profiles can replace these through
//! the bank file.

use rayon::prelude::*;

use crate::baselines::oracle_select;
use crate::error::{Error, Result};
use crate::probe::{probe_all_heads, HeadMarginals};
use crate::pruner::{budget, normalize_weights};
use crate::router::{selectivity_stats, PerProfile, ProfileBank};
use crate::tensor_io::{Category, SampleBundle};

pub const MIN_BANDWIDTH: f64 = 1e-6;
/// Pruning ratio whose oracle budget defines the salient tokens.
pub const PROFILE_ORACLE_RATIO: f64 = 0.5;

/// Labeled semantic and acoustic samples, kept sorted by sample id.
#[derive(Debug, Clone)]
pub struct CalibrationSet {
    samples: Vec<SampleBundle>,
}

impl CalibrationSet {
    /// Every sample must be labeled semantic or acoustic, and both labels
    /// must appear.
    pub fn new(mut samples: Vec<SampleBundle>) -> Result<Self> {
        for s in &samples {
            match s.category() {
                Some(Category::Semantic | Category::Acoustic) => {}
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "calibration sample `{}` has label {other:?}; only semantic and acoustic are allowed",
                        s.sample_id()
                    )))
                }
            }
        }
        for c in [Category::Semantic, Category::Acoustic] {
            if !samples.iter().any(|s| s.category() == Some(c)) {
                return Err(Error::EmptyCategory(c));
            }
        }
        let n_heads = samples[0].n_heads();
        if let Some(s) = samples.iter().find(|s| s.n_heads() != n_heads) {
            return Err(Error::Shape(format!(
                "sample `{}` has {} heads, expected {n_heads}",
                s.sample_id(),
                s.n_heads()
            )));
        }
        samples.sort_by(|a, b| a.sample_id().cmp(b.sample_id()));
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[SampleBundle] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_heads(&self) -> usize {
        self.samples[0].n_heads()
    }

    pub fn count(&self, category: Category) -> usize {
        self.samples.iter().filter(|s| s.category() == Some(category)).count()
    }
}

/// Probe output and spread for one calibration sample.
#[derive(Debug, Clone)]
pub struct ProbedSample {
    pub category: Category,
    pub marginals: HeadMarginals,
    pub spread: f64,
}

/// Probes every sample (in parallel, results in sample-id order).
pub fn probe_set(set: &CalibrationSet) -> Result<Vec<ProbedSample>> {
    set.samples
        .par_iter()
        .map(|s| {
            let marginals = probe_all_heads(s)?;
            let spread = selectivity_stats(&marginals)?.spread;
            Ok(ProbedSample {
                category: s.category().expect("validated label"),
                marginals,
                spread,
            })
        })
        .collect()
}

fn split_spreads(probed: &[ProbedSample]) -> (Vec<f64>, Vec<f64>) {
    let pick = |c| probed.iter().filter(|p| p.category == c).map(|p| p.spread).collect();
    (pick(Category::Semantic), pick(Category::Acoustic))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Centers from per-category spread samples.
pub fn centers_from_spreads(semantic: &[f64], acoustic: &[f64]) -> Result<PerProfile<f64>> {
    if semantic.is_empty() {
        return Err(Error::EmptyCategory(Category::Semantic));
    }
    if acoustic.is_empty() {
        return Err(Error::EmptyCategory(Category::Acoustic));
    }
    let mu_sem = mean(semantic);
    let mu_aco = mean(acoustic);
    Ok(PerProfile::new(mu_sem, 0.5 * (mu_sem + mu_aco), mu_aco))
}

/// Pooled within-category standard deviation, with `n_i - 1` degrees of
/// freedom per category; zero when there are no residual degrees of
/// freedom.
pub fn pooled_std(semantic: &[f64], acoustic: &[f64]) -> f64 {
    let ss = |xs: &[f64]| {
        if xs.is_empty() {
            return 0.0;
        }
        let m = mean(xs);
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
    };
    let dof = (semantic.len() + acoustic.len()).saturating_sub(2);
    if dof == 0 {
        return 0.0;
    }
    ((ss(semantic) + ss(acoustic)) / dof as f64).sqrt()
}

pub fn bandwidth_from_spreads(semantic: &[f64], acoustic: &[f64], centers: &PerProfile<f64>) -> f64 {
    let span = (centers.acoustic - centers.semantic).abs();
    (span / 4.0)
        .max(pooled_std(semantic, acoustic))
        .max(MIN_BANDWIDTH)
}

/// Probe mass each head puts on the oracle-salient tokens.
pub fn oracle_alignment(marginals: &HeadMarginals, energy: &[f64]) -> Result<Vec<f64>> {
    if energy.len() != marginals.n_tokens() {
        return Err(Error::Shape(format!(
            "{} energies for {} tokens",
            energy.len(),
            marginals.n_tokens()
        )));
    }
    let k = budget(energy.len(), PROFILE_ORACLE_RATIO)?;
    let salient = oracle_select(energy, k)?;
    Ok(marginals
        .rows()
        .map(|row| salient.iter().map(|&i| f64::from(row[i])).sum())
        .collect())
}

/// Mean alignment over samples, clipped at zero and normalized.
pub fn profile_from_alignments(alignments: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n_heads = alignments.first().map_or(0, Vec::len);
    let mut w = vec![0.0; n_heads];
    for a in alignments {
        for (wh, ah) in w.iter_mut().zip(a) {
            *wh += ah;
        }
    }
    let n = alignments.len() as f64;
    let w: Vec<f64> = w.into_iter().map(|v| (v / n).max(0.0)).collect();
    normalize_weights(&w)
}

fn energy_of(sample: &SampleBundle) -> Result<Vec<f64>> {
    sample
        .energy()
        .map(|e| e.iter().map(|&v| f64::from(v)).collect())
        .ok_or_else(|| Error::MissingEnergy(sample.sample_id().to_string()))
}

fn profiles_from_probed(set: &CalibrationSet, probed: &[ProbedSample]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut sem = Vec::new();
    let mut aco = Vec::new();
    for (sample, p) in set.samples.iter().zip(probed) {
        let a = oracle_alignment(&p.marginals, &energy_of(sample)?)?;
        match p.category {
            Category::Semantic => sem.push(a),
            _ => aco.push(a),
        }
    }
    Ok((profile_from_alignments(&sem)?, profile_from_alignments(&aco)?))
}

pub fn estimate_centers(set: &CalibrationSet) -> Result<PerProfile<f64>> {
    let (sem, aco) = split_spreads(&probe_set(set)?);
    centers_from_spreads(&sem, &aco)
}

pub fn estimate_bandwidth(set: &CalibrationSet, centers: &PerProfile<f64>) -> Result<f64> {
    let (sem, aco) = split_spreads(&probe_set(set)?);
    Ok(bandwidth_from_spreads(&sem, &aco, centers))
}

pub fn estimate_profiles(set: &CalibrationSet) -> Result<(Vec<f64>, Vec<f64>)> {
    for s in set.samples() {
        energy_of(s)?;
    }
    profiles_from_probed(set, &probe_set(set)?)
}

/// Calibration summary alongside the resulting bank.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub bank: ProfileBank,
    pub semantic_spreads: Vec<f64>,
    pub acoustic_spreads: Vec<f64>,
    pub pooled_std: f64,
}

pub fn calibrate_detailed(set: &CalibrationSet) -> Result<Calibration> {
    for s in set.samples() {
        energy_of(s)?;
    }
    let probed = probe_set(set)?;
    let (sem, aco) = split_spreads(&probed);
    let centers = centers_from_spreads(&sem, &aco)?;
    let bandwidth = bandwidth_from_spreads(&sem, &aco, &centers);
    let (w_sem, w_aco) = profiles_from_probed(set, &probed)?;
    let bank = ProfileBank::new(w_sem, w_aco, centers, bandwidth)?;
    Ok(Calibration {
        bank,
        pooled_std: pooled_std(&sem, &aco),
        semantic_spreads: sem,
        acoustic_spreads: aco,
    })
}

pub fn calibrate(set: &CalibrationSet) -> Result<ProfileBank> {
    calibrate_detailed(set).map(|c| c.bank)
}
