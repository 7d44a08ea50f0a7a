//! Position-agnostic text-to-audio probe.
//!
//! For each head the text and audio hidden states are projected with that
//! head's query/key matrices, no rotary or other positional transform is
//! applied, and the scaled dot products are softmaxed over audio tokens and
//! averaged over text tokens. The resulting per-head distributions feed both
//! token scoring and routing.
//!
//! Dot products and softmax sums run in `f64`; marginals are stored as
//! `f32`. Heads are computed independently and collected in head order, so
//! results do not depend on the rayon thread count.

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor_io::SampleBundle;

/// Per-head probability distributions over a set of audio tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadMarginals {
    p: Array2<f32>,
    n_text: usize,
    d_head: usize,
}

impl HeadMarginals {
    /// Wraps hand-built distributions, checking each row lies on the
    /// simplex to within `1e-6`.
    pub fn from_rows(rows: Vec<Vec<f32>>, n_text: usize, d_head: usize) -> Result<Self> {
        let n_heads = rows.len();
        let n_tokens = rows.first().map_or(0, Vec::len);
        if n_heads == 0 || n_tokens == 0 {
            return Err(Error::Shape("marginals need at least one head and token".into()));
        }
        if rows.iter().any(|r| r.len() != n_tokens) {
            return Err(Error::Shape("marginal rows differ in length".into()));
        }
        let p = Array2::from_shape_vec((n_heads, n_tokens), rows.concat()).expect("checked shape");
        let m = Self { p, n_text, d_head };
        m.check_simplex(1e-6)?;
        Ok(m)
    }

    fn check_simplex(&self, tol: f64) -> Result<()> {
        for (h, row) in self.p.outer_iter().enumerate() {
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidArgument(format!("head {h} has entries outside [0, 1]")));
            }
            let total: f64 = row.iter().map(|&v| v as f64).sum();
            if (total - 1.0).abs() > tol {
                return Err(Error::InvalidArgument(format!("head {h} sums to {total}")));
            }
        }
        Ok(())
    }

    pub fn n_heads(&self) -> usize {
        self.p.nrows()
    }

    pub fn n_tokens(&self) -> usize {
        self.p.ncols()
    }

    pub fn n_text(&self) -> usize {
        self.n_text
    }

    pub fn d_head(&self) -> usize {
        self.d_head
    }

    pub fn row(&self, head: usize) -> &[f32] {
        let start = head * self.n_tokens();
        &self.p.as_slice().expect("standard layout")[start..start + self.n_tokens()]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        (0..self.n_heads()).map(move |h| self.row(h))
    }

    pub fn as_array(&self) -> &Array2<f32> {
        &self.p
    }
}

fn to_f64(view: ArrayView2<'_, f32>) -> Array2<f64> {
    view.mapv(f64::from)
}

fn check_head(bundle: &SampleBundle, head: usize) -> Result<()> {
    if head >= bundle.n_heads() {
        return Err(Error::InvalidArgument(format!(
            "head {head} out of range for {} heads",
            bundle.n_heads()
        )));
    }
    Ok(())
}

fn project(
    states: &Array2<f64>,
    weights: ArrayView2<'_, f32>,
) -> Result<Array2<f64>> {
    if states.ncols() != weights.nrows() {
        return Err(Error::Shape(format!(
            "states of width {} against projection {:?}",
            states.ncols(),
            weights.dim()
        )));
    }
    Ok(states.dot(&to_f64(weights)))
}

/// Projects the bundle's text and audio states with head `head`'s query
/// and key matrices. Returns `(Q, K)` of shapes `N_t × d_k` and
/// `N_a × d_k`.
pub fn project_qk(bundle: &SampleBundle, head: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    check_head(bundle, head)?;
    let text = to_f64(bundle.text().view());
    let audio = to_f64(bundle.audio().view());
    let q = project(&text, bundle.q_proj().slice(s![head, .., ..]))?;
    let k = project(&audio, bundle.k_proj().slice(s![head, .., ..]))?;
    Ok((q, k))
}

/// Projects arbitrary states with an explicit weight matrix.
pub fn project_states(states: ArrayView2<'_, f32>, weights: ArrayView2<'_, f32>) -> Result<Array2<f64>> {
    project(&to_f64(states), weights)
}

/// `A[j, k] = <Q[j], K[k]> / sqrt(d_k)`.
pub fn head_affinity(q: &Array2<f64>, k: &Array2<f64>) -> Result<Array2<f64>> {
    let d_k = q.ncols();
    if d_k == 0 {
        return Err(Error::Shape("d_k must be at least 1".into()));
    }
    if k.ncols() != d_k {
        return Err(Error::Shape(format!(
            "query width {d_k} differs from key width {}",
            k.ncols()
        )));
    }
    let mut a = q.dot(&k.t());
    let scale = 1.0 / (d_k as f64).sqrt();
    a.mapv_inplace(|v| v * scale);
    Ok(a)
}

/// Softmax of one logit row with max subtraction, accumulated into `out`
/// with the given weight.
fn accumulate_softmax(row: &[f64], weight: f64, out: &mut [f64]) -> Result<()> {
    let mut max = f64::NEG_INFINITY;
    for &v in row {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite affinity {v}")));
        }
        max = max.max(v);
    }
    let mut total = 0.0;
    let mut exps = Vec::with_capacity(row.len());
    for &v in row {
        let e = (v - max).exp();
        total += e;
        exps.push(e);
    }
    let norm = weight / total;
    for (o, e) in out.iter_mut().zip(exps) {
        *o += e * norm;
    }
    Ok(())
}

/// Average over text rows of the row-wise softmax of `a`.
pub fn marginal_attention(a: &Array2<f64>) -> Result<Vec<f64>> {
    let (n_text, n_audio) = a.dim();
    if n_text == 0 || n_audio == 0 {
        return Err(Error::Shape(format!("empty affinity matrix {:?}", a.dim())));
    }
    let a = a.as_standard_layout();
    let mut p = vec![0.0; n_audio];
    let weight = 1.0 / n_text as f64;
    for row in a.outer_iter() {
        accumulate_softmax(row.as_slice().expect("standard layout"), weight, &mut p)?;
    }
    Ok(p)
}

/// Softmax of the last text row only.
pub fn last_row_attention(a: &Array2<f64>) -> Result<Vec<f64>> {
    let (n_text, n_audio) = a.dim();
    if n_text == 0 || n_audio == 0 {
        return Err(Error::Shape(format!("empty affinity matrix {:?}", a.dim())));
    }
    let last = a.row(n_text - 1).to_vec();
    let mut p = vec![0.0; n_audio];
    accumulate_softmax(&last, 1.0, &mut p)?;
    Ok(p)
}

/// Which text rows contribute to a head's distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextReduction {
    /// Mean of per-row softmaxes over all text tokens.
    Mean,
    /// Softmax of the final text token's row.
    LastRow,
}

/// Probes every head over all audio tokens.
pub fn probe_all_heads(bundle: &SampleBundle) -> Result<HeadMarginals> {
    probe_heads(bundle, None, TextReduction::Mean)
}

/// Probes every head, optionally restricted to the audio tokens listed in
/// `tokens`; the softmax then runs over those tokens only and the output's
/// columns follow `tokens` order.
pub fn probe_heads(
    bundle: &SampleBundle,
    tokens: Option<&[usize]>,
    reduction: TextReduction,
) -> Result<HeadMarginals> {
    let audio = match tokens {
        Some(idx) => {
            if idx.is_empty() {
                return Err(Error::InvalidArgument("empty candidate token set".into()));
            }
            if let Some(&bad) = idx.iter().find(|&&i| i >= bundle.n_audio()) {
                return Err(Error::InvalidArgument(format!(
                    "candidate token {bad} out of range for {} tokens",
                    bundle.n_audio()
                )));
            }
            bundle.audio().select(Axis(0), idx).mapv(f64::from)
        }
        None => to_f64(bundle.audio().view()),
    };
    let text = match reduction {
        TextReduction::Mean => to_f64(bundle.text().view()),
        TextReduction::LastRow => {
            let last = bundle.n_text() - 1;
            to_f64(bundle.text().slice(s![last..last + 1, ..]))
        }
    };
    let n_tokens = audio.nrows();
    let rows = (0..bundle.n_heads())
        .into_par_iter()
        .map(|h| {
            let q = project(&text, bundle.q_proj().slice(s![h, .., ..]))?;
            let k = project(&audio, bundle.k_proj().slice(s![h, .., ..]))?;
            let a = head_affinity(&q, &k)?;
            let p = match reduction {
                TextReduction::Mean => marginal_attention(&a)?,
                TextReduction::LastRow => last_row_attention(&a)?,
            };
            Ok(p.into_iter().map(|v| v as f32).collect::<Vec<f32>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let p = Array2::from_shape_vec((bundle.n_heads(), n_tokens), rows.concat())
        .expect("one row per head");
    Ok(HeadMarginals {
        p,
        n_text: bundle.n_text(),
        d_head: bundle.d_head(),
    })
}
