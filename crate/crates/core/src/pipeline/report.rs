use serde::Serialize;

use super::{SceneSpec, Variant};
use crate::prompt::{InstanceId, Keyword};
use crate::Warning;

/// Feature response of one instance at one (timestep, layer).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseEntry {
    pub step: usize,
    pub tau: f64,
    pub layer: usize,
    pub placement: String,
    pub instance: InstanceId,
    pub word: String,
    /// Mean `|F̂|` over in-mask positions and all channels.
    pub in_mask: f64,
    /// Mean `|F̂|` over out-of-mask positions.
    pub out_mask: f64,
}

/// Tally of which token index holds each TopK rank, summed over channels, heads,
/// layers and timesteps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopkHistogram {
    pub k: usize,
    pub tokens: Vec<String>,
    /// `counts[rank][token_index]`.
    pub counts: Vec<Vec<u64>>,
}

impl TopkHistogram {
    pub fn new(k: usize, tokens: Vec<String>) -> Self {
        let width = tokens.len();
        Self { k, tokens, counts: vec![vec![0; width]; k] }
    }

    pub fn record(&mut self, selected: &[Vec<usize>]) {
        for channel in selected {
            for (rank, &idx) in channel.iter().enumerate() {
                self.counts[rank][idx] += 1;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Head-averaged attention maps for tokens `0..=i_end` at one layer and step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionMaps {
    pub layer: usize,
    pub placement: String,
    pub step: usize,
    pub height: usize,
    pub width: usize,
    pub maps: Vec<Vec<f64>>,
}

/// The most enhanced channel of one head: its enhancement column and its features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnhancementPreview {
    pub layer: usize,
    pub step: usize,
    pub head: usize,
    pub channel: usize,
    pub height: usize,
    pub width: usize,
    pub mask: Vec<f64>,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceSummary {
    pub instance: InstanceId,
    pub word: String,
    pub index: usize,
    /// Mask area over sketch area at full resolution.
    pub area_ratio: f64,
    pub in_mask: f64,
    pub out_mask: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scene: SceneSpec,
    pub variant: Variant,
    pub tokens: Vec<String>,
    pub keywords: Vec<Keyword>,
    pub area_ratios: Vec<(InstanceId, f64)>,
    pub warnings: Vec<Warning>,
    pub responses: Vec<ResponseEntry>,
    pub histogram: TopkHistogram,
    #[serde(skip)]
    pub final_attention: Vec<AttentionMaps>,
    #[serde(skip)]
    pub previews: Vec<EnhancementPreview>,
    /// SHA-256 over every enhanced feature map, the final attention maps and the histogram.
    pub digest: String,
}

impl RunReport {
    /// Per-instance responses averaged over all timesteps and layers.
    pub fn instance_summary(&self) -> Vec<InstanceSummary> {
        self.keywords
            .iter()
            .map(|kw| {
                let entries: Vec<_> =
                    self.responses.iter().filter(|r| r.instance == kw.instance).collect();
                let count = entries.len().max(1) as f64;
                let area_ratio = self
                    .area_ratios
                    .iter()
                    .find(|(id, _)| *id == kw.instance)
                    .map_or(0.0, |(_, a)| *a);
                InstanceSummary {
                    instance: kw.instance,
                    word: kw.word.clone(),
                    index: kw.index,
                    area_ratio,
                    in_mask: entries.iter().map(|r| r.in_mask).sum::<f64>() / count,
                    out_mask: entries.iter().map(|r| r.out_mask).sum::<f64>() / count,
                }
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.responses.iter().all(|r| r.in_mask.is_finite() && r.out_mask.is_finite())
            && self.final_attention.iter().all(|a| a.maps.iter().flatten().all(|v| v.is_finite()))
    }
}
