//! Deterministic synthetic workloads with known head behavior.
//!
//! Each bundle has per-head target distributions over audio tokens that are
//! realized exactly by the probe. Audio coordinate `h < n_heads` carries
//! head `h`'s logits; head `h`'s key projection reads only that coordinate
//! into a random unit direction `u_h`, and its query projection maps text
//! coordinate 0 onto `sqrt(d_k) * u_h`. Every text row has coordinate 0 equal
//! to one, so the scaled affinity of any text row with audio token `k` is
//! exactly the designed logit. Remaining coordinates carry noise that no
//! projection reads.
//!
//! Head signatures by category:
//!
//! * semantic: every head diffuse, `Dirichlet(α_h)` with `α_h` rising
//!   linearly from `concentration_low` to twice that across heads. Small
//!   spread.
//! * acoustic: a fixed subset of heads (`fraction_selective_heads`) puts
//!   `1 - SELECTIVE_LEAK` of its mass on the high-energy tokens following
//!   `Dirichlet(concentration_high)`, the rest stay diffuse. Large spread.
//! * mixed: the selective heads blend the acoustic and diffuse targets
//!   half and half.

use ndarray::{Array1, Array2, Array3};
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationSet;
use crate::error::{Error, Result};
use crate::rng::{bounded, derive_seed, rng_from_seed, Rng};
use crate::tensor_io::{Category, SampleBundle};

/// Mass a selective head spreads uniformly over all tokens.
pub const SELECTIVE_LEAK: f64 = 0.02;
/// Energy level of planted (oracle) tokens; others sit near zero.
pub const HIGH_ENERGY: f32 = 1.0;
const ENERGY_NOISE: f32 = 0.05;
const FILLER_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub category: Category,
    pub n_text: usize,
    pub n_audio: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    /// Dirichlet concentration of diffuse heads (larger is flatter).
    pub concentration_low: f64,
    /// Dirichlet concentration of selective heads over planted tokens.
    pub concentration_high: f64,
    pub fraction_selective_heads: f64,
    /// Fraction of audio tokens planted as high-energy.
    pub oracle_fraction: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(category: Category, seed: u64) -> Self {
        Self {
            category,
            n_text: 1,
            n_audio: 1500,
            n_heads: 16,
            d_model: 64,
            d_head: 16,
            concentration_low: 1.0,
            concentration_high: 0.5,
            fraction_selective_heads: 0.25,
            oracle_fraction: 0.3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InfeasibleSpec(msg));
        if self.n_text == 0 || self.n_audio < 2 || self.n_heads == 0 {
            return fail(format!(
                "need n_text >= 1, n_audio >= 2, n_heads >= 1 (got {}, {}, {})",
                self.n_text, self.n_audio, self.n_heads
            ));
        }
        if self.d_head < 2 {
            return fail(format!("d_head must be at least 2, got {}", self.d_head));
        }
        if self.d_model < self.n_heads {
            return fail(format!(
                "d_model {} cannot hold one logit coordinate per head ({})",
                self.d_model, self.n_heads
            ));
        }
        if !(self.concentration_low > self.concentration_high && self.concentration_high > 0.0) {
            return fail(format!(
                "need concentration_low > concentration_high > 0 (got {}, {})",
                self.concentration_low, self.concentration_high
            ));
        }
        if !(self.fraction_selective_heads > 0.0 && self.fraction_selective_heads <= 1.0) {
            return fail(format!(
                "fraction_selective_heads {} outside (0, 1]",
                self.fraction_selective_heads
            ));
        }
        if !(self.oracle_fraction > 0.0 && self.oracle_fraction < 1.0) {
            return fail(format!("oracle_fraction {} outside (0, 1)", self.oracle_fraction));
        }
        Ok(())
    }

    pub fn n_planted(&self) -> usize {
        ((self.oracle_fraction * self.n_audio as f64).round() as usize).clamp(1, self.n_audio - 1)
    }

    /// Indices of the selective heads. Fixed by head count, not by seed, so
    /// the same heads specialize in every sample.
    pub fn selective_heads(&self) -> Vec<usize> {
        let n = ((self.fraction_selective_heads * self.n_heads as f64).round() as usize)
            .clamp(1, self.n_heads);
        (0..n).map(|i| i * self.n_heads / n).collect()
    }

    fn diffuse_concentration(&self, head: usize) -> f64 {
        let t = if self.n_heads > 1 {
            head as f64 / (self.n_heads - 1) as f64
        } else {
            0.0
        };
        self.concentration_low * (1.0 + t)
    }
}

/// A generated bundle together with the distributions it was built to
/// realize.
#[derive(Debug, Clone)]
pub struct Generated {
    pub bundle: SampleBundle,
    pub targets: Vec<Vec<f64>>,
    pub planted: Vec<usize>,
}

/// Dirichlet draw computed in log space: for `α < 1` a Gamma(α) variate is
/// `Gamma(α + 1) * U^(1/α)`, whose log stays finite where the variate
/// itself would underflow.
fn dirichlet(rng: &mut Rng, alpha: f64, n: usize) -> Vec<f64> {
    let boosted = alpha < 1.0;
    let gamma = Gamma::new(if boosted { alpha + 1.0 } else { alpha }, 1.0).expect("positive concentration");
    let logs: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let mut lg = g.max(f64::MIN_POSITIVE).ln();
            if boosted {
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                lg += u.ln() / alpha;
            }
            lg
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

fn planted_tokens(rng: &mut Rng, n: usize, count: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = i + bounded(rng, (n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool.sort_unstable();
    pool
}

fn selective_target(rng: &mut Rng, spec: &GeneratorSpec, planted: &[usize]) -> Vec<f64> {
    let focus = dirichlet(rng, spec.concentration_high, planted.len());
    let mut p = vec![SELECTIVE_LEAK / spec.n_audio as f64; spec.n_audio];
    for (&i, f) in planted.iter().zip(focus) {
        p[i] += (1.0 - SELECTIVE_LEAK) * f;
    }
    p
}

pub fn generate_detailed(spec: &GeneratorSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let n = spec.n_audio;
    let planted = planted_tokens(&mut rng, n, spec.n_planted());
    let selective = spec.selective_heads();

    let mut targets = Vec::with_capacity(spec.n_heads);
    for h in 0..spec.n_heads {
        let diffuse = dirichlet(&mut rng, spec.diffuse_concentration(h), n);
        let target = match spec.category {
            Category::Semantic => diffuse,
            _ if !selective.contains(&h) => diffuse,
            Category::Acoustic => selective_target(&mut rng, spec, &planted),
            Category::Mixed => {
                let sharp = selective_target(&mut rng, spec, &planted);
                sharp.iter().zip(&diffuse).map(|(a, b)| 0.5 * (a + b)).collect()
            }
        };
        targets.push(target);
    }

    let mut audio = Array2::<f32>::zeros((n, spec.d_model));
    for (h, target) in targets.iter().enumerate() {
        let max = target.iter().map(|p| p.ln()).fold(f64::NEG_INFINITY, f64::max);
        for (k, p) in target.iter().enumerate() {
            audio[[k, h]] = (p.ln() - max) as f32;
        }
    }
    for k in 0..n {
        for c in spec.n_heads..spec.d_model {
            let z: f64 = StandardNormal.sample(&mut rng);
            audio[[k, c]] = (FILLER_SCALE * z) as f32;
        }
    }

    let mut text = Array2::<f32>::zeros((spec.n_text, spec.d_model));
    for j in 0..spec.n_text {
        text[[j, 0]] = 1.0;
        for c in 1..spec.d_model {
            let z: f64 = StandardNormal.sample(&mut rng);
            text[[j, c]] = (FILLER_SCALE * z) as f32;
        }
    }

    let scale = (spec.d_head as f64).sqrt();
    let mut q_proj = Array3::<f32>::zeros((spec.n_heads, spec.d_model, spec.d_head));
    let mut k_proj = Array3::<f32>::zeros((spec.n_heads, spec.d_model, spec.d_head));
    for h in 0..spec.n_heads {
        let u = unit_vector(&mut rng, spec.d_head);
        for (c, &uc) in u.iter().enumerate() {
            q_proj[[h, 0, c]] = (scale * uc) as f32;
            k_proj[[h, h, c]] = uc as f32;
        }
    }

    let mut energy = Array1::<f32>::zeros(n);
    let mut is_planted = vec![false; n];
    planted.iter().for_each(|&i| is_planted[i] = true);
    for (k, e) in energy.iter_mut().enumerate() {
        let noise = ENERGY_NOISE * rng.random::<f32>();
        *e = if is_planted[k] { HIGH_ENERGY + noise } else { noise };
    }

    let sample_id = format!("{}-{:016x}", spec.category, spec.seed);
    let bundle = SampleBundle::new(
        sample_id,
        Some(spec.category),
        text,
        audio,
        q_proj,
        k_proj,
        Some(energy),
    )?;
    Ok(Generated { bundle, targets, planted })
}

fn unit_vector(rng: &mut Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<SampleBundle> {
    generate_detailed(spec).map(|g| g.bundle)
}

/// Seed of the `index`-th sample of `category` under `base_seed`.
pub fn sample_seed(base_seed: u64, category: Category, index: usize) -> u64 {
    derive_seed(base_seed, &format!("{category}/{index}"))
}

/// `n` default-spec samples of `category` with seeds derived from
/// `base_seed`.
pub fn generate_category(category: Category, n: usize, base_seed: u64) -> Result<Vec<SampleBundle>> {
    (0..n)
        .map(|i| generate(&GeneratorSpec::new(category, sample_seed(base_seed, category, i))))
        .collect()
}

/// `n_per_category` semantic plus `n_per_category` acoustic bundles.
pub fn generate_calibration_set(n_per_category: usize, base_seed: u64) -> Result<CalibrationSet> {
    let mut samples = generate_category(Category::Semantic, n_per_category, base_seed)?;
    samples.extend(generate_category(Category::Acoustic, n_per_category, base_seed)?);
    CalibrationSet::new(samples)
}

/// Dimensions of an unstructured random bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_text: usize,
    pub n_audio: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
}

/// Bundle with states uniform in `[-1, 1]` and projections scaled by
/// `1 / sqrt(d_model)`; no category and no energy. Used for timing.
pub fn random_bundle(dims: Dims, seed: u64) -> Result<SampleBundle> {
    let Dims { n_text, n_audio, n_heads, d_model, d_head } = dims;
    if [n_text, n_audio, n_heads, d_model, d_head].contains(&0) {
        return Err(Error::InfeasibleSpec(format!("zero-sized dimension in {dims:?}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut fill = |n: usize, scale: f32| -> Vec<f32> {
        (0..n).map(|_| scale * rng.random_range(-1.0f32..=1.0)).collect()
    };
    let w = 1.0 / (d_model as f32).sqrt();
    let shape_err = |e: ndarray::ShapeError| Error::Shape(e.to_string());
    SampleBundle::new(
        format!("random-{seed:016x}"),
        None,
        Array2::from_shape_vec((n_text, d_model), fill(n_text * d_model, 1.0)).map_err(shape_err)?,
        Array2::from_shape_vec((n_audio, d_model), fill(n_audio * d_model, 1.0)).map_err(shape_err)?,
        Array3::from_shape_vec((n_heads, d_model, d_head), fill(n_heads * d_model * d_head, w))
            .map_err(shape_err)?,
        Array3::from_shape_vec((n_heads, d_model, d_head), fill(n_heads * d_model * d_head, w))
            .map_err(shape_err)?,
        None,
    )
}
