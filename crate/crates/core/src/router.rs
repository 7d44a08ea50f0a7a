//! Head selectivity, the spread routing signal, and Gaussian soft routing
//! over the semantic / uniform / acoustic profile bank.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::HeadMarginals;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Semantic,
    Uniform,
    Acoustic,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 3] = [ProfileKind::Semantic, ProfileKind::Uniform, ProfileKind::Acoustic];

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileKind::Semantic => "semantic",
            ProfileKind::Uniform => "uniform",
            ProfileKind::Acoustic => "acoustic",
        }
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One value per profile, serialized as `{semantic, uniform, acoustic}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerProfile<T> {
    pub semantic: T,
    pub uniform: T,
    pub acoustic: T,
}

impl<T> PerProfile<T> {
    pub fn new(semantic: T, uniform: T, acoustic: T) -> Self {
        Self { semantic, uniform, acoustic }
    }

    pub fn from_fn(mut f: impl FnMut(ProfileKind) -> T) -> Self {
        Self {
            semantic: f(ProfileKind::Semantic),
            uniform: f(ProfileKind::Uniform),
            acoustic: f(ProfileKind::Acoustic),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ProfileKind, &T)> {
        ProfileKind::ALL.into_iter().map(move |k| (k, &self[k]))
    }
}

impl<T> Index<ProfileKind> for PerProfile<T> {
    type Output = T;

    fn index(&self, kind: ProfileKind) -> &T {
        match kind {
            ProfileKind::Semantic => &self.semantic,
            ProfileKind::Uniform => &self.uniform,
            ProfileKind::Acoustic => &self.acoustic,
        }
    }
}

impl<T> IndexMut<ProfileKind> for PerProfile<T> {
    fn index_mut(&mut self, kind: ProfileKind) -> &mut T {
        match kind {
            ProfileKind::Semantic => &mut self.semantic,
            ProfileKind::Uniform => &mut self.uniform,
            ProfileKind::Acoustic => &mut self.acoustic,
        }
    }
}

impl PerProfile<f64> {
    /// Profile with the largest value; ties go to the earlier of
    /// semantic, uniform, acoustic.
    pub fn argmax(&self) -> ProfileKind {
        let mut best = ProfileKind::Semantic;
        for kind in [ProfileKind::Uniform, ProfileKind::Acoustic] {
            if self[kind] > self[best] {
                best = kind;
            }
        }
        best
    }

    pub fn sum(&self) -> f64 {
        self.semantic + self.uniform + self.acoustic
    }
}

/// Calibrated head-weight profiles with their routing centers and the
/// Gaussian kernel bandwidth. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileBank {
    n_heads: usize,
    profiles: PerProfile<Vec<f64>>,
    centers: PerProfile<f64>,
    bandwidth: f64,
}

impl ProfileBank {
    /// Builds a bank from the two calibrated profiles; the uniform profile
    /// is filled in as `1 / n_heads`.
    pub fn new(
        semantic: Vec<f64>,
        acoustic: Vec<f64>,
        centers: PerProfile<f64>,
        bandwidth: f64,
    ) -> Result<Self> {
        let n_heads = semantic.len();
        let uniform = uniform_profile(n_heads);
        Self::from_parts(PerProfile::new(semantic, uniform, acoustic), centers, bandwidth)
    }

    /// Builds a bank from all three profiles, checking that the uniform one
    /// is exactly `1 / n_heads` everywhere.
    pub fn from_parts(
        profiles: PerProfile<Vec<f64>>,
        centers: PerProfile<f64>,
        bandwidth: f64,
    ) -> Result<Self> {
        let n_heads = profiles.semantic.len();
        if n_heads == 0 {
            return Err(Error::InvalidBank("n_heads must be at least 1".into()));
        }
        for (kind, w) in profiles.iter() {
            if w.len() != n_heads {
                return Err(Error::InvalidBank(format!(
                    "{kind} profile has {} entries, expected {n_heads}",
                    w.len()
                )));
            }
            if let Some(h) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidBank(format!(
                    "{kind} profile weight for head {h} is negative or non-finite"
                )));
            }
            if !w.iter().any(|&v| v > 0.0) {
                return Err(Error::InvalidBank(format!("{kind} profile is all zero")));
            }
        }
        let uniform = 1.0 / n_heads as f64;
        if profiles.uniform.iter().any(|&v| v != uniform) {
            return Err(Error::InvalidBank(format!(
                "uniform profile must be exactly 1/{n_heads} per head"
            )));
        }
        for (kind, mu) in centers.iter() {
            if !mu.is_finite() {
                return Err(Error::InvalidBank(format!("{kind} center is not finite")));
            }
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidBank(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self { n_heads, profiles, centers, bandwidth })
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn profile(&self, kind: ProfileKind) -> &[f64] {
        &self.profiles[kind]
    }

    pub fn profiles(&self) -> &PerProfile<Vec<f64>> {
        &self.profiles
    }

    pub fn centers(&self) -> &PerProfile<f64> {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// A bank whose three profiles are all uniform. Routing through it is
    /// equivalent to head averaging regardless of the centers.
    pub fn uniform(n_heads: usize) -> Result<Self> {
        let u = uniform_profile(n_heads);
        Self::new(u.clone(), u, PerProfile::new(0.0, 0.5, 1.0), 1.0)
    }
}

pub fn uniform_profile(n_heads: usize) -> Vec<f64> {
    vec![1.0 / n_heads as f64; n_heads]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectivityStats {
    pub sel: Vec<f64>,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub stats: SelectivityStats,
    pub alphas: PerProfile<f64>,
    pub w_star: Vec<f64>,
}

/// `1 - H(p) / ln(N)` for a distribution over `N >= 2` tokens, with
/// `0 ln 0 = 0`. The result is clamped to `[0, 1]` to absorb rounding in
/// inputs that sum to one only approximately.
pub fn selectivity<T: Copy + Into<f64>>(p: &[T]) -> Result<f64> {
    let n = p.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "selectivity needs at least 2 tokens, got {n}"
        )));
    }
    let mut entropy = 0.0f64;
    let mut total = 0.0f64;
    for &v in p {
        let v: f64 = v.into();
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidArgument(format!("probability {v} out of range")));
        }
        total += v;
        if v > 0.0 {
            entropy -= v * v.ln();
        }
    }
    if (total - 1.0).abs() > 1e-3 {
        return Err(Error::InvalidArgument(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    Ok((1.0 - entropy / (n as f64).ln()).clamp(0.0, 1.0))
}

/// Population standard deviation; zero for an empty slice.
pub fn spread(sel: &[f64]) -> f64 {
    if sel.is_empty() {
        return 0.0;
    }
    let n = sel.len() as f64;
    let mean = sel.iter().sum::<f64>() / n;
    let var = sel.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    var.sqrt()
}

pub fn selectivity_stats(marginals: &HeadMarginals) -> Result<SelectivityStats> {
    let sel = marginals
        .rows()
        .map(selectivity)
        .collect::<Result<Vec<_>>>()?;
    let spread = spread(&sel);
    Ok(SelectivityStats { sel, spread })
}

/// Unnormalized Gaussian kernel value of each center at `spread`.
pub fn kernel_values(spread: f64, bank: &ProfileBank) -> PerProfile<f64> {
    let two_var = 2.0 * bank.bandwidth * bank.bandwidth;
    PerProfile::from_fn(|k| {
        let d = spread - bank.centers[k];
        (-(d * d) / two_var).exp()
    })
}

/// Normalized Gaussian mixing coefficients. Falls back to
/// [`hard_alphas`] when every kernel underflows to zero.
pub fn soft_alphas(spread: f64, bank: &ProfileBank) -> PerProfile<f64> {
    let kernels = kernel_values(spread, bank);
    let total = kernels.sum();
    if total > 0.0 && total.is_finite() {
        PerProfile::from_fn(|k| kernels[k] / total)
    } else {
        hard_alphas(spread, bank)
    }
}

/// One-hot at the center nearest to `spread`. Exact ties prefer the
/// uniform profile, then semantic.
pub fn hard_alphas(spread: f64, bank: &ProfileBank) -> PerProfile<f64> {
    let mut best = ProfileKind::Uniform;
    let mut best_dist = (spread - bank.centers.uniform).abs();
    for kind in [ProfileKind::Semantic, ProfileKind::Acoustic] {
        let dist = (spread - bank.centers[kind]).abs();
        if dist < best_dist {
            best = kind;
            best_dist = dist;
        }
    }
    PerProfile::from_fn(|k| if k == best { 1.0 } else { 0.0 })
}

/// `sum_c alpha_c * w_c` over the bank's profiles.
pub fn mix_profiles(alphas: &PerProfile<f64>, bank: &ProfileBank) -> Vec<f64> {
    (0..bank.n_heads)
        .map(|h| {
            ProfileKind::ALL
                .iter()
                .map(|&k| alphas[k] * bank.profiles[k][h])
                .sum()
        })
        .collect()
}

fn check_heads(stats: &SelectivityStats, bank: &ProfileBank) -> Result<()> {
    if stats.sel.len() != bank.n_heads {
        return Err(Error::Shape(format!(
            "{} head selectivities for a {}-head bank",
            stats.sel.len(),
            bank.n_heads
        )));
    }
    Ok(())
}

pub fn route(stats: SelectivityStats, bank: &ProfileBank) -> Result<RoutingDecision> {
    check_heads(&stats, bank)?;
    let alphas = soft_alphas(stats.spread, bank);
    let w_star = mix_profiles(&alphas, bank);
    Ok(RoutingDecision { stats, alphas, w_star })
}

pub fn route_hard(stats: SelectivityStats, bank: &ProfileBank) -> Result<RoutingDecision> {
    check_heads(&stats, bank)?;
    let alphas = hard_alphas(stats.spread, bank);
    let w_star = mix_profiles(&alphas, bank);
    Ok(RoutingDecision { stats, alphas, w_star })
}
