//! Scene runs: prepare embeddings and mask pyramid once, then drive the layer
//! stack over the timestep schedule with synthetic query features.

mod report;
mod scene;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::attention::{
    layer_forward, ChannelMode, ChannelTuning, DenseTuneParams, LayerConfig, LayerInputs,
    ProjectionWeights,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::prompt::{
    embed, extract_keywords, prompt_balance, tokenize, EmbeddingMatrix, InstanceId,
    KeywordIndices, Lexicon, TokenSequence,
};
use crate::sketch::{build_pyramid_from_masks, MaskPyramid};
use crate::Warning;

pub use report::{
    AttentionMaps, EnhancementPreview, InstanceSummary, ResponseEntry, RunReport, TopkHistogram,
};
pub use scene::{
    default_stack, DenseTuneSpec, EmbeddingSpec, InstanceSpec, LayerSpec, LayerStackSpec,
    SceneSpec,
};

/// Which of the three tunings are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Variant {
    pub pb: bool,
    pub cp: bool,
    pub dt: bool,
}

impl Variant {
    pub const BASELINE: Variant = Variant { pb: false, cp: false, dt: false };
    pub const FULL: Variant = Variant { pb: true, cp: true, dt: true };

    /// The six ablation rows: baseline, PB, DT, CP, PB+CP, full.
    pub fn ablation_set() -> [Variant; 6] {
        [
            Variant::BASELINE,
            Variant { pb: true, cp: false, dt: false },
            Variant { pb: false, cp: false, dt: true },
            Variant { pb: false, cp: true, dt: false },
            Variant { pb: true, cp: true, dt: false },
            Variant::FULL,
        ]
    }

    pub fn name(&self) -> String {
        match (self.pb, self.cp, self.dt) {
            (false, false, false) => "baseline".into(),
            (true, true, true) => "full".into(),
            _ => {
                let parts: Vec<&str> = [(self.pb, "pb"), (self.cp, "cp"), (self.dt, "dt")]
                    .iter()
                    .filter(|(on, _)| *on)
                    .map(|(_, n)| *n)
                    .collect();
                parts.join("+")
            }
        }
    }
}

/// Stable 64-bit seed for a `(seed, tag, a, b)` key.
pub fn derive_seed(seed: u64, tag: &str, a: u64, b: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(a.to_le_bytes());
    h.update(b.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Standard-Gaussian `positions × channels` query features keyed by `(seed, layer, step)`.
pub fn synth_query_features(seed: u64, layer: usize, step: usize, positions: usize, channels: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "features", layer as u64, step as u64));
    Matrix::from_fn(positions, channels, |_, _| rng.sample(StandardNormal))
}

/// Normalized time for step `t` of `total`: runs linearly from 1 at the first step to 0 at the last.
pub fn schedule_tau(step: usize, total: usize) -> f64 {
    if total <= 1 {
        0.0
    } else {
        (total - 1 - step) as f64 / (total - 1) as f64
    }
}

/// Everything a run needs that does not depend on the variant.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub scene: SceneSpec,
    pub tokens: TokenSequence,
    pub keywords: KeywordIndices,
    pub global: EmbeddingMatrix,
    pub balanced: EmbeddingMatrix,
    pub pyramid: MaskPyramid,
    pub layers: Vec<LayerConfig>,
    pub weights: Vec<ProjectionWeights>,
    pub area_ratios: Vec<(InstanceId, f64)>,
    pub warnings: Vec<Warning>,
}

impl PreparedScene {
    /// Replace both embedding stages with one fixed matrix.
    pub fn with_embeddings(mut self, embeddings: EmbeddingMatrix) -> Result<Self> {
        if embeddings.rows.shape() != self.global.rows.shape() || embeddings.i_end != self.global.i_end {
            return Err(Error::DimensionMismatch {
                expected: self.global.n() * self.global.dim(),
                got: embeddings.n() * embeddings.dim(),
            });
        }
        self.global = embeddings.clone();
        self.balanced = embeddings;
        Ok(self)
    }
}

pub fn prepare(scene: &SceneSpec) -> Result<PreparedScene> {
    scene.validate()?;
    let tokens = tokenize(&scene.prompt, scene.context_length)?;
    let overrides = scene.overrides();
    let extraction = extract_keywords(&tokens, &Lexicon::default(), overrides.as_deref())?;
    let keywords = extraction.keywords;
    let mut warnings: Vec<Warning> = extraction.warning.into_iter().collect();

    let provider = scene.provider()?;
    let global = embed(&tokens, &provider)?;
    let balanced = prompt_balance(&global, &keywords, &provider)?;

    let layers = scene.layer_configs()?;
    let mut seen = BTreeSet::new();
    let resolutions: Vec<(usize, usize)> =
        layers.iter().map(|l| (l.height, l.width)).filter(|r| seen.insert(*r)).collect();
    let ids: Vec<InstanceId> = keywords.iter().map(|k| k.instance).collect();
    let masks = scene.load_masks(&ids)?;
    let pyramid =
        build_pyramid_from_masks(&masks, &keywords, &resolutions, scene.allow_empty_instances)?;
    warnings.extend(pyramid.warnings.iter().cloned());
    let area_ratios = masks
        .iter()
        .map(|(id, m)| (*id, m.area() as f64 / (m.height * m.width) as f64))
        .collect();
    let weights = layers
        .iter()
        .map(|cfg| ProjectionWeights::generate(cfg, global.dim()))
        .collect::<Result<_>>()?;
    Ok(PreparedScene {
        scene: scene.clone(),
        tokens,
        keywords,
        global,
        balanced,
        pyramid,
        layers,
        weights,
        area_ratios,
        warnings,
    })
}

fn digest_f64s(h: &mut Sha256, values: &[f64]) {
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
}

/// Mean `|F̂|` over the positions where `mask` equals `inside`, across all channels.
fn masked_mean_abs(features: &Matrix, mask: &[u8], inside: bool) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, &m) in mask.iter().enumerate() {
        if (m != 0) == inside {
            sum += features.row(p).iter().map(|v| v.abs()).sum::<f64>();
            count += features.cols();
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Run with explicit control over embeddings, dense tuning and the channel stage.
pub fn execute_with(
    prepared: &PreparedScene,
    variant: Variant,
    channel: ChannelTuning,
) -> Result<RunReport> {
    let scene = &prepared.scene;
    let embeddings = if variant.pb { &prepared.balanced } else { &prepared.global };
    let i_end = prepared.tokens.i_end();
    let labels: Vec<String> = (0..=i_end).map(|i| prepared.tokens.label(i).to_string()).collect();
    let mut histogram = TopkHistogram::new(channel.k, labels.clone());
    let mut responses = Vec::new();
    let mut final_attention = Vec::new();
    let mut previews = Vec::new();
    let mut hasher = Sha256::new();
    let total = scene.timesteps;

    for step in 0..total {
        let tau = schedule_tau(step, total);
        for (cfg, weights) in prepared.layers.iter().zip(&prepared.weights) {
            let x = synth_query_features(scene.seed, cfg.index, step, cfg.spatial(), cfg.channels);
            let level = prepared.pyramid.level(cfg.height, cfg.width)?;
            let dense = variant.dt.then_some(DenseTuneParams {
                strength: scene.dense_tune.strength,
                exponent: scene.dense_tune.exponent,
                tau,
            });
            let inputs = LayerInputs {
                features: &x,
                embeddings,
                level,
                keywords: &prepared.keywords,
            };
            let out = layer_forward(cfg, weights, &inputs, channel, dense)?;
            digest_f64s(&mut hasher, out.enhanced.as_slice());
            for head in &out.heads {
                histogram.record(&head.topk);
            }
            for kw in prepared.keywords.iter() {
                let mask = level.mask(kw.instance).ok_or(Error::UnknownInstance(kw.instance))?;
                responses.push(ResponseEntry {
                    step,
                    tau,
                    layer: cfg.index,
                    placement: cfg.placement.clone(),
                    instance: kw.instance,
                    word: kw.word.clone(),
                    in_mask: masked_mean_abs(&out.enhanced, mask, true),
                    out_mask: masked_mean_abs(&out.enhanced, mask, false),
                });
            }
            if step + 1 == total {
                let heads = out.heads.len() as f64;
                let maps = (0..=i_end)
                    .map(|t| {
                        (0..cfg.spatial())
                            .map(|p| out.heads.iter().map(|h| h.attention[(p, t)]).sum::<f64>() / heads)
                            .collect()
                    })
                    .collect();
                final_attention.push(AttentionMaps {
                    layer: cfg.index,
                    placement: cfg.placement.clone(),
                    step,
                    height: cfg.height,
                    width: cfg.width,
                    maps,
                });
                for (hi, head) in out.heads.iter().enumerate() {
                    let h = &head.enhancement;
                    let best = (0..h.cols).map(|j| (h.column_total(j), j)).max_by(|a, b| {
                        a.0.cmp(&b.0).then(b.1.cmp(&a.1))
                    });
                    let Some((total_h, j)) = best else { continue };
                    if total_h == 0 {
                        continue;
                    }
                    let dh = cfg.head_dim();
                    previews.push(EnhancementPreview {
                        layer: cfg.index,
                        step,
                        head: hi,
                        channel: j,
                        height: cfg.height,
                        width: cfg.width,
                        mask: h.column(j).into_iter().map(f64::from).collect(),
                        features: out.enhanced.column(hi * dh + j),
                    });
                }
            }
        }
    }
    for a in &final_attention {
        for m in &a.maps {
            digest_f64s(&mut hasher, m);
        }
    }
    for row in &histogram.counts {
        for c in row {
            hasher.update(c.to_le_bytes());
        }
    }
    let report = RunReport {
        scene: scene.clone(),
        variant,
        tokens: labels,
        keywords: prepared.keywords.iter().cloned().collect(),
        area_ratios: prepared.area_ratios.clone(),
        warnings: prepared.warnings.clone(),
        responses,
        histogram,
        final_attention,
        previews,
        digest: hex::encode(hasher.finalize()),
    };
    if !report.is_finite() {
        return Err(Error::NonFinite(format!("run of scene {:?}", scene.name)));
    }
    Ok(report)
}

/// Channel stage implied by a variant: prominence when CP is on, selection only otherwise.
pub fn channel_for(scene: &SceneSpec, variant: Variant) -> ChannelTuning {
    let mode = if variant.cp { ChannelMode::Prominence { beta: scene.beta } } else { ChannelMode::Off };
    ChannelTuning { k: scene.k, mode }
}

pub fn execute(prepared: &PreparedScene, variant: Variant) -> Result<RunReport> {
    execute_with(prepared, variant, channel_for(&prepared.scene, variant))
}

pub fn run(scene: &SceneSpec, variant: Variant) -> Result<RunReport> {
    execute(&prepare(scene)?, variant)
}

/// One report per variant, all from the same prepared inputs.
pub fn ablation_matrix(scene: &SceneSpec, variants: &[Variant]) -> Result<Vec<RunReport>> {
    let prepared = prepare(scene)?;
    variants.iter().map(|v| execute(&prepared, *v)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub instance: InstanceId,
    pub word: String,
    pub area_ratio: f64,
    /// In-mask response per entry of `ks`.
    pub responses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeTable {
    pub ks: Vec<usize>,
    pub factor: f64,
    pub rows: Vec<ProbeRow>,
}

/// Value-amplification sweep: for each K, scale every channel's TopK value
/// entries by `factor` in place of prominence and record in-mask responses.
/// PB and DT follow `variant`; its CP flag is ignored.
pub fn topk_probe(
    prepared: &PreparedScene,
    ks: &[usize],
    factor: f64,
    variant: Variant,
) -> Result<ProbeTable> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::InvalidScene(vec![format!("factor: {factor} must be positive")]));
    }
    let variant = Variant { cp: false, ..variant };
    let summaries = ks
        .iter()
        .map(|&k| {
            let channel = ChannelTuning { k, mode: ChannelMode::Amplify { factor } };
            Ok(execute_with(prepared, variant, channel)?.instance_summary())
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = prepared
        .keywords
        .iter()
        .enumerate()
        .map(|(i, kw)| ProbeRow {
            instance: kw.instance,
            word: kw.word.clone(),
            area_ratio: summaries.first().map_or(0.0, |s| s[i].area_ratio),
            responses: summaries.iter().map(|s| s[i].in_mask).collect(),
        })
        .collect();
    Ok(ProbeTable { ks: ks.to_vec(), factor, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_schedule_endpoints() {
        assert_eq!(schedule_tau(0, 8), 1.0);
        assert_eq!(schedule_tau(7, 8), 0.0);
        assert_eq!(schedule_tau(0, 1), 0.0);
        let taus: Vec<f64> = (0..5).map(|t| schedule_tau(t, 5)).collect();
        assert_eq!(taus, vec![1.0, 0.75, 0.5, 0.25, 0.0]);
    }

    #[test]
    fn query_features_are_keyed() {
        let a = synth_query_features(3, 1, 0, 32, 64);
        assert_eq!(a, synth_query_features(3, 1, 0, 32, 64));
        assert_ne!(a, synth_query_features(3, 1, 1, 32, 64));
        assert_ne!(a, synth_query_features(3, 2, 0, 32, 64));
        // standard error of the mean is 1/sqrt(2048) ≈ 0.022
        let mean = a.as_slice().iter().sum::<f64>() / 2048.0;
        assert!(mean.abs() < 0.2, "{mean}");
    }

    #[test]
    fn variant_names() {
        let names: Vec<String> = Variant::ablation_set().iter().map(Variant::name).collect();
        assert_eq!(names, vec!["baseline", "pb", "dt", "cp", "pb+cp", "full"]);
    }

    #[test]
    fn masked_means() {
        let f = Matrix::from_rows(&[vec![1.0, -3.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(masked_mean_abs(&f, &[1, 0], true), 2.0);
        assert_eq!(masked_mean_abs(&f, &[1, 0], false), 2.0);
        assert_eq!(masked_mean_abs(&f, &[1, 1], false), 0.0);
    }
}
