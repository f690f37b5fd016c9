//! Multi-head cross-attention with dense tuning of the logits and
//! characteristics prominence on the feature map.
//!
//! Per head the order is: project, logits, dense tune (on flagged layers),
//! softmax, attend, TopK over value channels, enhancement mask, prominence.
//! Heads are concatenated by index and the residual is added last.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::prompt::{EmbeddingMatrix, KeywordIndices};
use crate::sketch::MaskLevel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub index: usize,
    pub placement: String,
    pub height: usize,
    pub width: usize,
    /// Channel width `d_m`; also the query feature width.
    pub channels: usize,
    pub heads: usize,
    pub dense_tuning: bool,
    pub weight_seed: u64,
}

/// Dense tuning is on by default only for the `down_2` and `mid_0` placements.
pub fn default_dense_tuning(placement: &str) -> bool {
    matches!(placement, "down_2" | "mid_0")
}

impl LayerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidLayer(format!("{}: empty spatial grid", self.placement)));
        }
        if self.heads == 0 || self.channels == 0 || !self.channels.is_multiple_of(self.heads) {
            return Err(Error::InvalidLayer(format!(
                "{}: {} channels not divisible into {} heads",
                self.placement, self.channels, self.heads
            )));
        }
        Ok(())
    }

    pub fn spatial(&self) -> usize {
        self.height * self.width
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionWeights {
    pub heads: Vec<HeadWeights>,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

impl ProjectionWeights {
    /// Seeded Gaussian projections. Queries are scaled by `1/√d_m` so that unit-variance
    /// features give unit-variance queries; keys use unit variance so logit spread tracks
    /// token energy; values are scaled by `1/√d`.
    pub fn generate(cfg: &LayerConfig, embed_dim: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.weight_seed);
        let dh = cfg.head_dim();
        let q_std = 1.0 / (cfg.channels as f64).sqrt();
        let v_std = 1.0 / (embed_dim.max(1) as f64).sqrt();
        let heads = (0..cfg.heads)
            .map(|_| HeadWeights {
                query: gaussian(&mut rng, cfg.channels, dh, q_std),
                key: gaussian(&mut rng, embed_dim, dh, 1.0),
                value: gaussian(&mut rng, embed_dim, dh, v_std),
            })
            .collect();
        Ok(Self { heads })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadProjection {
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
}

pub fn project(
    features: &Matrix,
    embeddings: &Matrix,
    weights: &ProjectionWeights,
) -> Result<Vec<HeadProjection>> {
    if !features.is_finite() {
        return Err(Error::NonFiniteInput("query features"));
    }
    if !embeddings.is_finite() {
        return Err(Error::NonFiniteInput("embeddings"));
    }
    weights
        .heads
        .iter()
        .map(|w| {
            Ok(HeadProjection {
                query: features.matmul(&w.query)?,
                key: embeddings.matmul(&w.key)?,
                value: embeddings.matmul(&w.value)?,
            })
        })
        .collect()
}

/// `Q Kᵀ / √d_h`, with `d_h` taken from the query width.
pub fn attention_logits(query: &Matrix, key: &Matrix) -> Result<Matrix> {
    let scale = 1.0 / (query.cols() as f64).sqrt();
    Ok(query.matmul_transposed(key)?.scale(scale))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseTuneParams {
    /// Base strength λ0.
    pub strength: f64,
    /// Schedule exponent γ.
    pub exponent: f64,
    /// Normalized time, 1 at the noisiest step and 0 at the last.
    pub tau: f64,
}

impl DenseTuneParams {
    pub const DEFAULT_STRENGTH: f64 = 2.5;
    pub const DEFAULT_EXPONENT: f64 = 2.0;

    /// σ(τ) = λ0 · τ^γ.
    pub fn schedule(&self) -> f64 {
        if self.tau == 0.0 {
            return 0.0;
        }
        self.strength * self.tau.clamp(0.0, 1.0).powf(self.exponent)
    }
}

/// Pull each instance-token logit column toward its maximum inside the
/// instance mask and toward its minimum outside it.
///
/// The pull coefficient is `σ(τ)·(1 − area)` capped at 1, so every tuned logit
/// stays inside the column's original `[min, max]`.
pub fn dense_tune(
    logits: &Matrix,
    level: &MaskLevel,
    keywords: &KeywordIndices,
    params: &DenseTuneParams,
) -> Result<Matrix> {
    let positions = logits.rows();
    let mut out = logits.clone();
    let sigma = params.schedule();
    for kw in keywords.iter() {
        let mask = level.mask(kw.instance).ok_or(Error::UnknownInstance(kw.instance))?;
        if mask.len() != positions {
            return Err(Error::MaskLengthMismatch { expected: positions, got: mask.len() });
        }
        let area = mask.iter().filter(|&&m| m != 0).count() as f64 / positions as f64;
        let coef = (sigma * (1.0 - area)).min(1.0);
        if coef <= 0.0 || kw.index >= logits.cols() {
            continue;
        }
        let column = logits.column(kw.index);
        let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
        for (p, (&l, &m)) in column.iter().zip(mask).enumerate() {
            let tuned = if m != 0 { l + coef * (hi - l) } else { l - coef * (l - lo) };
            out[(p, kw.index)] = tuned.clamp(lo, hi);
        }
    }
    Ok(out)
}

/// Numerically stable softmax along each row.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

pub fn attend(attention: &Matrix, values: &Matrix) -> Result<Matrix> {
    attention.matmul(values)
}

/// Per channel, the `k` token indices in `1..i_end` with the largest `|V|`,
/// ordered by descending magnitude; equal magnitudes keep the lower index first.
pub fn topk_value_indices(values: &Matrix, k: usize, i_end: usize) -> Result<Vec<Vec<usize>>> {
    if i_end > values.rows() || i_end == 0 {
        return Err(Error::DimensionMismatch { expected: i_end.max(1), got: values.rows() });
    }
    let valid = i_end - 1;
    if k > valid {
        return Err(Error::KTooLarge { k, valid });
    }
    let mut out = Vec::with_capacity(values.cols());
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for j in 0..values.cols() {
        best.clear();
        if k > 0 {
            for i in 1..i_end {
                let mag = values[(i, j)].abs();
                // strict comparison: an equal magnitude seen later ranks behind
                let pos = best.iter().position(|&(b, _)| mag > b).unwrap_or(best.len());
                if pos < k {
                    best.insert(pos, (mag, i));
                    best.truncate(k);
                }
            }
        }
        out.push(best.iter().map(|&(_, i)| i).collect());
    }
    Ok(out)
}

/// `b_m × d_h` enhancement counts: how many selected instance sketches cover each cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnhancementMask {
    pub rows: usize,
    pub cols: usize,
    cells: Vec<u32>,
}

impl EnhancementMask {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, cells: vec![0; rows * cols] }
    }

    pub fn get(&self, p: usize, j: usize) -> u32 {
        self.cells[p * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<u32> {
        (0..self.rows).map(|p| self.get(p, j)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.cells.iter().all(|&c| c == 0)
    }

    pub fn column_total(&self, j: usize) -> u64 {
        (0..self.rows).map(|p| self.get(p, j) as u64).sum()
    }
}

pub fn characteristics_mask(
    topk: &[Vec<usize>],
    keywords: &KeywordIndices,
    level: &MaskLevel,
) -> Result<EnhancementMask> {
    let positions = level.len();
    let mut h = EnhancementMask::zeros(positions, topk.len());
    for (j, selected) in topk.iter().enumerate() {
        for &i in selected {
            let Some(id) = keywords.instance_of(i) else { continue };
            let mask = level.mask(id).ok_or(Error::UnknownInstance(id))?;
            if mask.len() != positions {
                return Err(Error::MaskLengthMismatch { expected: positions, got: mask.len() });
            }
            for (p, &m) in mask.iter().enumerate() {
                h.cells[p * h.cols + j] += m as u32;
            }
        }
    }
    Ok(h)
}

/// `F̂ = F ⊙ (1 + β·H)`; cells with `H = 0` are copied untouched.
pub fn prominence(features: &Matrix, mask: &EnhancementMask, beta: f64) -> Result<Matrix> {
    if features.shape() != (mask.rows, mask.cols) {
        return Err(Error::DimensionMismatch {
            expected: features.rows() * features.cols(),
            got: mask.rows * mask.cols,
        });
    }
    let mut out = features.clone();
    for p in 0..mask.rows {
        for j in 0..mask.cols {
            let h = mask.get(p, j);
            if h != 0 {
                out[(p, j)] = features[(p, j)] * (1.0 + beta * h as f64);
            }
        }
    }
    Ok(out)
}

/// Multiply each channel's TopK valid-token entries by `factor`.
pub fn amplify_value_topk(values: &Matrix, k: usize, factor: f64, i_end: usize) -> Result<Matrix> {
    if !factor.is_finite() {
        return Err(Error::NonFiniteInput("amplification factor"));
    }
    let topk = topk_value_indices(values, k, i_end)?;
    let mut out = values.clone();
    for (j, rows) in topk.iter().enumerate() {
        for &i in rows {
            out[(i, j)] *= factor;
        }
    }
    Ok(out)
}

/// What happens to the value/feature channels after TopK selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelMode {
    /// Select only (for the index histogram); features untouched.
    Off,
    Prominence { beta: f64 },
    /// Scale the selected value entries before attending.
    Amplify { factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelTuning {
    pub k: usize,
    pub mode: ChannelMode,
}

pub struct LayerInputs<'a> {
    pub features: &'a Matrix,
    pub embeddings: &'a EmbeddingMatrix,
    pub level: &'a MaskLevel,
    pub keywords: &'a KeywordIndices,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadState {
    /// Logits after dense tuning, when applied.
    pub logits: Matrix,
    pub attention: Matrix,
    /// Values as attended (amplified in `Amplify` mode).
    pub values: Matrix,
    /// Feature map before prominence.
    pub features: Matrix,
    pub topk: Vec<Vec<usize>>,
    pub enhancement: EnhancementMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub heads: Vec<HeadState>,
    /// Enhanced features `F̂`, heads concatenated along channels.
    pub enhanced: Matrix,
    /// Residual stream `X + F̂`.
    pub output: Matrix,
}

pub fn layer_forward(
    cfg: &LayerConfig,
    weights: &ProjectionWeights,
    inputs: &LayerInputs<'_>,
    channel: ChannelTuning,
    dense: Option<DenseTuneParams>,
) -> Result<LayerOutput> {
    cfg.validate()?;
    let x = inputs.features;
    if x.shape() != (cfg.spatial(), cfg.channels) {
        return Err(Error::DimensionMismatch {
            expected: cfg.spatial() * cfg.channels,
            got: x.rows() * x.cols(),
        });
    }
    if inputs.level.len() != cfg.spatial() {
        return Err(Error::MaskLengthMismatch { expected: cfg.spatial(), got: inputs.level.len() });
    }
    let i_end = inputs.embeddings.i_end;
    let projections = project(x, &inputs.embeddings.rows, weights)?;
    let mut heads = Vec::with_capacity(projections.len());
    let mut blocks = Vec::with_capacity(projections.len());
    for proj in projections {
        let mut logits = attention_logits(&proj.query, &proj.key)?;
        if let Some(params) = dense.filter(|_| cfg.dense_tuning) {
            logits = dense_tune(&logits, inputs.level, inputs.keywords, &params)?;
        }
        let attention = softmax_rows(&logits);
        let topk = topk_value_indices(&proj.value, channel.k, i_end)?;
        let values = match channel.mode {
            ChannelMode::Amplify { factor } => {
                amplify_value_topk(&proj.value, channel.k, factor, i_end)?
            }
            _ => proj.value,
        };
        let features = attend(&attention, &values)?;
        let (enhanced, enhancement) = match channel.mode {
            ChannelMode::Prominence { beta } => {
                let h = characteristics_mask(&topk, inputs.keywords, inputs.level)?;
                (prominence(&features, &h, beta)?, h)
            }
            _ => (features.clone(), EnhancementMask::zeros(features.rows(), features.cols())),
        };
        blocks.push(enhanced);
        heads.push(HeadState { logits, attention, values, features, topk, enhancement });
    }
    let enhanced = Matrix::hconcat(&blocks)?;
    let output = x.add(&enhanced)?;
    Ok(LayerOutput { heads, enhanced, output })
}
