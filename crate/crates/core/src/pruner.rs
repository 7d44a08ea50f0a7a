//! Head-weighted token scoring, budgeting, top-k retention, and the full
//! routed pruning pipeline with its optional Frame pre-filter stage.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::error::{Error, Result};
use crate::probe::{self, HeadMarginals, TextReduction};
use crate::router::{self, uniform_profile, ProfileBank, RoutingDecision};
use crate::tensor_io::SampleBundle;

/// Pruning layer recorded in reports; the probe consumes that layer's
/// input states, which the bundle supplies directly.
pub const DEFAULT_PRUNING_LAYER: u32 = 2;

const SNAP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutingMode {
    /// Gaussian soft mixing of the three profiles.
    Soft,
    /// One-hot assignment to the nearest center.
    Hard,
    /// No routing: uniform head weights.
    Uniform,
}

impl RoutingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RoutingMode::Soft => "soft",
            RoutingMode::Hard => "hard",
            RoutingMode::Uniform => "uniform",
        }
    }
}

impl fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoutingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(RoutingMode::Soft),
            "hard" => Ok(RoutingMode::Hard),
            "uniform" | "uniform-only" => Ok(RoutingMode::Uniform),
            other => Err(Error::InvalidArgument(format!("unknown routing mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "headrouter")]
    HeadRouter,
    #[serde(rename = "headrouter-hard")]
    HeadRouterHard,
    #[serde(rename = "fastv")]
    FastV,
    #[serde(rename = "fastv-lastrow")]
    FastVLastRow,
    #[serde(rename = "frame")]
    Frame,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "oracle")]
    Oracle,
    /// Reserved tag; selecting it is an error.
    #[serde(rename = "dart")]
    Dart,
}

impl Method {
    pub const IMPLEMENTED: [Method; 7] = [
        Method::HeadRouter,
        Method::HeadRouterHard,
        Method::FastV,
        Method::FastVLastRow,
        Method::Frame,
        Method::Random,
        Method::Oracle,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::HeadRouter => "headrouter",
            Method::HeadRouterHard => "headrouter-hard",
            Method::FastV => "fastv",
            Method::FastVLastRow => "fastv-lastrow",
            Method::Frame => "frame",
            Method::Random => "random",
            Method::Oracle => "oracle",
            Method::Dart => "dart",
        }
    }

    pub fn uses_router(self) -> bool {
        matches!(self, Method::HeadRouter | Method::HeadRouterHard)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::IMPLEMENTED
            .into_iter()
            .chain([Method::Dart])
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Fraction of audio tokens removed, in `[0, 1)`.
    pub ratio: f64,
    /// Fraction of tokens the Frame pre-filter keeps before adaptive
    /// scoring. `None` selects [`default_prefilter_keep`].
    pub prefilter_keep: Option<f64>,
    pub method: Method,
    pub seed: u64,
    pub routing: RoutingMode,
    /// Probe all tokens first and apply the pre-filter only at selection.
    pub probe_before_prefilter: bool,
    pub pruning_layer: u32,
}

impl PruneConfig {
    pub fn new(ratio: f64) -> Self {
        Self {
            ratio,
            prefilter_keep: None,
            method: Method::HeadRouter,
            seed: 0,
            routing: RoutingMode::Soft,
            probe_before_prefilter: false,
            pruning_layer: DEFAULT_PRUNING_LAYER,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_routing(mut self, routing: RoutingMode) -> Self {
        self.routing = routing;
        self
    }

    pub fn with_prefilter_keep(mut self, keep: f64) -> Self {
        self.prefilter_keep = Some(keep);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Routing mode actually applied, after method aliases.
    pub fn effective_routing(&self) -> RoutingMode {
        match self.method {
            Method::HeadRouterHard => RoutingMode::Hard,
            _ => self.routing,
        }
    }

    pub fn effective_prefilter_keep(&self) -> f64 {
        self.prefilter_keep
            .unwrap_or_else(|| default_prefilter_keep(self.ratio))
    }

    /// Validates the configuration for `n_audio` tokens and returns the
    /// final budget and the pre-filter's candidate count.
    pub fn plan(&self, n_audio: usize) -> Result<(usize, usize)> {
        let k = budget(n_audio, self.ratio)?;
        let keep = self.effective_prefilter_keep();
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "prefilter keep fraction {keep} outside (0, 1]"
            )));
        }
        if keep < 1.0 - self.ratio - SNAP_EPS {
            return Err(Error::InvalidConfig(format!(
                "prefilter keep fraction {keep} is below the final retention {}",
                1.0 - self.ratio
            )));
        }
        let candidates = candidate_count(n_audio, keep).max(k);
        Ok((k, candidates))
    }
}

/// `min(1, 2 (1 - r))`: the adaptive stage sees twice its final budget.
pub fn default_prefilter_keep(ratio: f64) -> f64 {
    (2.0 * (1.0 - ratio)).min(1.0)
}

/// Rounds `x` to the nearest integer when it is within relative `1e-9` of
/// one, so decimal ratios like `0.9` behave as exact fractions.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= SNAP_EPS * r.abs().max(1.0) {
        r
    } else {
        x
    }
}

/// `floor(n_audio * (1 - ratio))`, rejecting a zero budget.
pub fn budget(n_audio: usize, ratio: f64) -> Result<usize> {
    if n_audio == 0 {
        return Err(Error::InvalidConfig("no audio tokens".into()));
    }
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidConfig(format!("ratio {ratio} outside [0, 1)")));
    }
    let k = snap(n_audio as f64 * (1.0 - ratio)).floor() as usize;
    if k == 0 {
        return Err(Error::InvalidConfig(format!(
            "ratio {ratio} leaves no tokens out of {n_audio}"
        )));
    }
    Ok(k.min(n_audio))
}

/// `ceil(keep * n_audio)`, clamped to `[1, n_audio]`.
pub fn candidate_count(n_audio: usize, keep: f64) -> usize {
    let c = snap(n_audio as f64 * keep).ceil() as usize;
    c.clamp(1, n_audio)
}

/// Divides by the sum so the weights add to one.
pub fn normalize_weights(w: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("head weight {v} is negative or non-finite")));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("head weights sum to zero".into()));
    }
    Ok(w.iter().map(|v| v / total).collect())
}

/// `importance[k] = sum_h w̄_h p_h[k]` with `w̄` the normalized weights.
pub fn token_importance(marginals: &HeadMarginals, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != marginals.n_heads() {
        return Err(Error::Shape(format!(
            "{} head weights for {} heads",
            weights.len(),
            marginals.n_heads()
        )));
    }
    let w = normalize_weights(weights)?;
    let mut out = vec![0.0f64; marginals.n_tokens()];
    for (wh, row) in w.iter().zip(marginals.rows()) {
        if *wh == 0.0 {
            continue;
        }
        for (o, &p) in out.iter_mut().zip(row) {
            *o += wh * f64::from(p);
        }
    }
    Ok(out)
}

/// Indices of the `k` largest scores, ties broken toward the lower index,
/// returned in ascending index order.
pub fn top_k(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds {} scores",
            scores.len()
        )));
    }
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if k < idx.len() && k > 0 {
        // NaN was rejected above, so partial_cmp is total here.
        idx.select_nth_unstable_by(k - 1, |&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .expect("no NaN")
                .then(a.cmp(&b))
        });
    }
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

/// `keep` indices at regular temporal intervals: `floor(i * n / keep)`.
pub fn frame_prefilter(n_audio: usize, keep: usize) -> Result<Vec<usize>> {
    if keep == 0 || keep > n_audio {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {keep} of {n_audio} tokens"
        )));
    }
    Ok((0..keep).map(|i| i * n_audio / keep).collect())
}

/// Wall time spent in each pipeline stage, in nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimings {
    pub probe: u64,
    pub routing: u64,
    pub scoring: u64,
    pub selection: u64,
}

impl StageTimings {
    pub fn total(&self) -> u64 {
        self.probe + self.routing + self.scoring + self.selection
    }

    pub fn routing_fraction(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.routing as f64 / total as f64
        }
    }
}

fn elapsed_ns(start: Instant) -> u64 {
    u64::try_from(start.elapsed().as_nanos()).unwrap_or(u64::MAX)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneResult {
    /// One score per audio token; tokens removed by the pre-filter hold
    /// `f64::NEG_INFINITY`.
    pub importance: Vec<f64>,
    /// Retained token indices, strictly increasing.
    pub retained: Vec<usize>,
    pub decision: Option<RoutingDecision>,
    pub budget: usize,
    pub candidates: usize,
    pub timings: StageTimings,
}

fn check_bank<'a>(bundle: &SampleBundle, bank: Option<&'a ProfileBank>) -> Result<Option<&'a ProfileBank>> {
    if let Some(b) = bank {
        if b.n_heads() != bundle.n_heads() {
            return Err(Error::Shape(format!(
                "profile bank has {} heads, bundle has {}",
                b.n_heads(),
                bundle.n_heads()
            )));
        }
    }
    Ok(bank)
}

/// The routed pipeline: Frame pre-filter, probe, selectivity and spread,
/// routing, head-weighted scoring, and top-k over the candidates.
///
/// `bank` may be `None` only with [`RoutingMode::Uniform`].
pub fn run_pipeline(
    bundle: &SampleBundle,
    bank: Option<&ProfileBank>,
    cfg: &PruneConfig,
) -> Result<PruneResult> {
    let bank = check_bank(bundle, bank)?;
    let n_audio = bundle.n_audio();
    let (k, n_candidates) = cfg.plan(n_audio)?;
    let routing = cfg.effective_routing();
    if routing != RoutingMode::Uniform && bank.is_none() {
        return Err(Error::InvalidArgument(format!(
            "{routing} routing needs a profile bank"
        )));
    }
    let mut timings = StageTimings::default();

    let start = Instant::now();
    let candidates = if n_candidates < n_audio {
        Some(frame_prefilter(n_audio, n_candidates)?)
    } else {
        None
    };
    let probe_tokens = if cfg.probe_before_prefilter { None } else { candidates.as_deref() };
    let marginals = probe::probe_heads(bundle, probe_tokens, TextReduction::Mean)?;
    timings.probe = elapsed_ns(start);

    let start = Instant::now();
    let decision = match (routing, bank) {
        (RoutingMode::Uniform, _) => None,
        (mode, Some(bank)) => {
            let stats = router::selectivity_stats(&marginals)?;
            Some(match mode {
                RoutingMode::Soft => router::route(stats, bank)?,
                _ => router::route_hard(stats, bank)?,
            })
        }
        (_, None) => unreachable!("checked above"),
    };
    timings.routing = elapsed_ns(start);

    let start = Instant::now();
    let weights = match &decision {
        Some(d) => d.w_star.clone(),
        None => uniform_profile(bundle.n_heads()),
    };
    let scores = token_importance(&marginals, &weights)?;
    timings.scoring = elapsed_ns(start);

    let start = Instant::now();
    let mut importance = vec![f64::NEG_INFINITY; n_audio];
    let retained = match (&candidates, cfg.probe_before_prefilter) {
        (None, _) => {
            importance.copy_from_slice(&scores);
            top_k(&scores, k)?
        }
        (Some(cand), false) => {
            for (&i, &s) in cand.iter().zip(&scores) {
                importance[i] = s;
            }
            top_k(&scores, k)?.into_iter().map(|j| cand[j]).collect()
        }
        (Some(cand), true) => {
            for &i in cand {
                importance[i] = scores[i];
            }
            top_k(&importance, k)?
        }
    };
    timings.selection = elapsed_ns(start);

    Ok(PruneResult {
        importance,
        retained,
        decision,
        budget: k,
        candidates: n_candidates,
        timings,
    })
}

/// Dispatches on `cfg.method`. Router methods need `bank`; the oracle
/// needs the bundle's energy vector.
pub fn prune(
    bundle: &SampleBundle,
    bank: Option<&ProfileBank>,
    cfg: &PruneConfig,
) -> Result<PruneResult> {
    let n_audio = bundle.n_audio();
    match cfg.method {
        Method::HeadRouter | Method::HeadRouterHard => run_pipeline(bundle, bank, cfg),
        Method::FastV | Method::FastVLastRow => {
            let k = budget(n_audio, cfg.ratio)?;
            let reduction = if cfg.method == Method::FastV {
                TextReduction::Mean
            } else {
                TextReduction::LastRow
            };
            let mut timings = StageTimings::default();
            let start = Instant::now();
            let marginals = probe::probe_heads(bundle, None, reduction)?;
            timings.probe = elapsed_ns(start);
            let start = Instant::now();
            let importance = baselines::fastv_importance(&marginals);
            timings.scoring = elapsed_ns(start);
            let start = Instant::now();
            let retained = top_k(&importance, k)?;
            timings.selection = elapsed_ns(start);
            Ok(PruneResult {
                importance,
                retained,
                decision: None,
                budget: k,
                candidates: n_audio,
                timings,
            })
        }
        Method::Frame | Method::Random | Method::Oracle => {
            let k = budget(n_audio, cfg.ratio)?;
            let start = Instant::now();
            let (retained, importance) = match cfg.method {
                Method::Frame => {
                    let r = baselines::frame_select(n_audio, k)?;
                    let imp = indicator(n_audio, &r);
                    (r, imp)
                }
                Method::Random => {
                    let seed = baselines::sample_seed(cfg.seed, bundle.sample_id());
                    let r = baselines::random_select(n_audio, k, seed)?;
                    let imp = indicator(n_audio, &r);
                    (r, imp)
                }
                _ => {
                    let energy = bundle
                        .energy()
                        .ok_or_else(|| Error::MissingEnergy(bundle.sample_id().to_string()))?;
                    let energy: Vec<f64> = energy.iter().map(|&e| f64::from(e)).collect();
                    let r = baselines::oracle_select(&energy, k)?;
                    (r, energy)
                }
            };
            let timings = StageTimings {
                selection: elapsed_ns(start),
                ..StageTimings::default()
            };
            Ok(PruneResult {
                importance,
                retained,
                decision: None,
                budget: k,
                candidates: n_audio,
                timings,
            })
        }
        Method::Dart => Err(Error::Unsupported("dart".into())),
    }
}

/// Content-blind selectors report 1 for kept tokens and 0 otherwise.
fn indicator(n: usize, retained: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for &i in retained {
        v[i] = 1.0;
    }
    v
}
