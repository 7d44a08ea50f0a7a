//! Reference selectors: head-averaged attention (FastV-style), regular
//! temporal subsampling (Frame), seeded uniform sampling (Random), and the
//! energy oracle.

use crate::error::{Error, Result};
use crate::probe::HeadMarginals;
use crate::pruner::{frame_prefilter, top_k};
use crate::rng::{bounded, derive_seed, rng_from_seed};

/// Mean of the per-head distributions.
pub fn fastv_importance(marginals: &HeadMarginals) -> Vec<f64> {
    let mut out = vec![0.0f64; marginals.n_tokens()];
    for row in marginals.rows() {
        for (o, &p) in out.iter_mut().zip(row) {
            *o += f64::from(p);
        }
    }
    let n = marginals.n_heads() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

pub fn frame_select(n_audio: usize, k: usize) -> Result<Vec<usize>> {
    frame_prefilter(n_audio, k)
}

/// Per-sample seed for the random selector, derived from the run seed and
/// the sample id so every sample gets its own stream.
pub fn sample_seed(run_seed: u64, sample_id: &str) -> u64 {
    derive_seed(run_seed, sample_id)
}

/// `k` distinct indices drawn uniformly without replacement by a partial
/// Fisher-Yates shuffle over a ChaCha8 stream; sorted ascending.
pub fn random_select(n_audio: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n_audio {
        return Err(Error::InvalidArgument(format!("cannot draw {k} of {n_audio} tokens")));
    }
    let mut rng = rng_from_seed(seed);
    let mut pool: Vec<usize> = (0..n_audio).collect();
    for i in 0..k {
        let j = i + bounded(&mut rng, (n_audio - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    Ok(pool)
}

/// Top-`k` tokens by energy, lower index first on ties.
pub fn oracle_select(energy: &[f64], k: usize) -> Result<Vec<usize>> {
    top_k(energy, k)
}

/// `|a ∩ b| / |a|` for two ascending index lists; zero when `a` is empty.
pub fn overlap(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    common as f64 / a.len() as f64
}
