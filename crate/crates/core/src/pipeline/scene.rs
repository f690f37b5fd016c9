//! Scene configuration documents.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attention::{default_dense_tuning, DenseTuneParams, LayerConfig};
use crate::error::{Error, Result};
use crate::prompt::{normalize_word, tokenize, EmbeddingProvider, EmbeddingTable, InstanceId, Lexicon};
use crate::sketch::{self, pnm, InstanceMask, SketchLabelMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub word: String,
    pub id: InstanceId,
    /// Own sketch for this instance (nonzero pixels), used for overlapping layouts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch: Option<PathBuf>,
    /// RGB color of this instance in a P6 scene sketch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<[u8; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbeddingSpec {
    Synthetic {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    File {
        path: PathBuf,
        dim: usize,
    },
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec::Synthetic { seed: 0, dim: default_dim() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseTuneSpec {
    #[serde(default = "default_strength")]
    pub strength: f64,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
}

impl Default for DenseTuneSpec {
    fn default() -> Self {
        Self { strength: default_strength(), exponent: default_exponent() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub placement: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    /// Defaults to on for `down_2` and `mid_0` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_tuning: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayerStackSpec {
    Named(String),
    Explicit(Vec<LayerSpec>),
}

impl Default for LayerStackSpec {
    fn default() -> Self {
        LayerStackSpec::Named("default".into())
    }
}

/// Default five-layer stack mirroring down/mid/up cross-attention placement.
pub fn default_stack() -> Vec<LayerSpec> {
    [("down_0", 32, 64), ("down_2", 16, 128), ("mid_0", 8, 128), ("up_1", 16, 128), ("up_0", 32, 64)]
        .into_iter()
        .map(|(placement, side, channels)| LayerSpec {
            placement: placement.into(),
            height: side,
            width: side,
            channels,
            heads: 2,
            dense_tuning: None,
        })
        .collect()
}

fn default_name() -> String {
    "scene".into()
}
fn default_context() -> usize {
    77
}
fn default_dim() -> usize {
    64
}
fn default_k() -> usize {
    2
}
fn default_beta() -> f64 {
    1.0
}
fn default_timesteps() -> usize {
    8
}
fn default_strength() -> f64 {
    DenseTuneParams::DEFAULT_STRENGTH
}
fn default_exponent() -> f64 {
    DenseTuneParams::DEFAULT_EXPONENT
}
fn default_heads() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub prompt: String,
    /// Explicit keyword bindings; empty means the bundled lexicon picks keywords.
    #[serde(default)]
    pub instances: Vec<InstanceSpec>,
    /// Scene sketch: P2/P5 label map, or P6 with instance colors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch: Option<PathBuf>,
    #[serde(default = "default_context")]
    pub context_length: usize,
    #[serde(default)]
    pub embedding: EmbeddingSpec,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub dense_tune: DenseTuneSpec,
    #[serde(default = "default_timesteps")]
    pub timesteps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub layers: LayerStackSpec,
    #[serde(default)]
    pub allow_empty_instances: bool,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let preceding: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    preceding + column.saturating_sub(1)
}

impl SceneSpec {
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let parsed: std::result::Result<SceneSpec, (String, serde_json::Error)> =
            serde_path_to_error::deserialize(&mut de)
                .map_err(|e| (e.path().to_string(), e.into_inner()))
                .and_then(|s| de.end().map(|()| s).map_err(|e| (String::new(), e)));
        let mut scene = parsed.map_err(|(path, inner)| {
            let at = byte_offset(text, inner.line(), inner.column());
            let location = if path.is_empty() || path == "." || path == "?" {
                String::new()
            } else {
                format!(" at field `{path}`")
            };
            Error::Parse(format!("scene JSON{location}, byte offset {at}: {inner}"))
        })?;
        scene.base_dir = base_dir.to_path_buf();
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json_str(&text, &base).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// All validation problems, each prefixed with its field path.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.context_length < 2 {
            out.push("context_length: must be at least 2".into());
        }
        let tokens = match tokenize(&self.prompt, self.context_length.max(2)) {
            Ok(t) => Some(t),
            Err(e) => {
                out.push(format!("prompt: {e}"));
                None
            }
        };
        if let Some(t) = &tokens {
            if self.k > t.words().len() {
                out.push(format!("k: {} exceeds the prompt's {} words", self.k, t.words().len()));
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            out.push("beta: must be finite and non-negative".into());
        }
        if self.timesteps == 0 {
            out.push("timesteps: must be at least 1".into());
        }
        if !(self.dense_tune.strength.is_finite() && self.dense_tune.strength >= 0.0) {
            out.push("dense_tune.strength: must be finite and non-negative".into());
        }
        if !(self.dense_tune.exponent.is_finite() && self.dense_tune.exponent > 0.0) {
            out.push("dense_tune.exponent: must be positive".into());
        }
        let dim = match &self.embedding {
            EmbeddingSpec::Synthetic { dim, .. } | EmbeddingSpec::File { dim, .. } => *dim,
        };
        if dim == 0 {
            out.push("embedding.dim: must be positive".into());
        }
        let mut ids = BTreeSet::new();
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.id == 0 {
                out.push(format!("instances[{i}].id: must be positive"));
            } else if !ids.insert(inst.id) {
                out.push(format!("instances[{i}].id: duplicate id {}", inst.id));
            }
            if let Some(t) = &tokens {
                let n = t.positions(&normalize_word(&inst.word)).len();
                if n != 1 {
                    out.push(format!(
                        "instances[{i}].word: {:?} occurs {n} times in prompt, expected once",
                        inst.word
                    ));
                }
            }
        }
        if self.sketch.is_none() && self.instances.iter().any(|i| i.sketch.is_none()) {
            out.push("sketch: required unless every instance has its own sketch".into());
        }
        let lexicon_hits = tokens
            .as_ref()
            .is_some_and(|t| t.words().iter().any(|w| Lexicon::default().contains(w)));
        if self.sketch.is_none() && self.instances.is_empty() && lexicon_hits {
            out.push("sketch: required when instances come from the lexicon".into());
        }
        match self.layer_configs() {
            Ok(layers) => {
                for (i, l) in layers.iter().enumerate() {
                    if let Err(e) = l.validate() {
                        out.push(format!("layers[{i}]: {e}"));
                    }
                }
                if layers.is_empty() {
                    out.push("layers: stack is empty".into());
                }
            }
            Err(e) => out.push(format!("layers: {e}")),
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScene(problems))
        }
    }

    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>> {
        match &self.layers {
            LayerStackSpec::Named(name) if name == "default" => Ok(default_stack()),
            LayerStackSpec::Named(name) => Err(Error::InvalidLayer(format!("unknown stack {name:?}"))),
            LayerStackSpec::Explicit(list) => Ok(list.clone()),
        }
    }

    /// Concrete layer configs with weight seeds derived from the scene seed.
    pub fn layer_configs(&self) -> Result<Vec<LayerConfig>> {
        Ok(self
            .layer_specs()?
            .into_iter()
            .enumerate()
            .map(|(index, s)| LayerConfig {
                index,
                dense_tuning: s.dense_tuning.unwrap_or_else(|| default_dense_tuning(&s.placement)),
                placement: s.placement,
                height: s.height,
                width: s.width,
                channels: s.channels,
                heads: s.heads,
                weight_seed: super::derive_seed(self.seed, "weights", index as u64, 0),
            })
            .collect())
    }

    pub fn provider(&self) -> Result<EmbeddingProvider> {
        Ok(match &self.embedding {
            EmbeddingSpec::Synthetic { seed, dim } => EmbeddingProvider::Synthetic { seed: *seed, dim: *dim },
            EmbeddingSpec::File { path, dim } => EmbeddingProvider::File {
                table: EmbeddingTable::load(&self.resolve(path))?,
                dim: *dim,
            },
        })
    }

    /// Explicit `(word, id)` bindings, or `None` to use the lexicon.
    pub fn overrides(&self) -> Option<Vec<(String, InstanceId)>> {
        (!self.instances.is_empty())
            .then(|| self.instances.iter().map(|i| (i.word.clone(), i.id)).collect())
    }

    fn load_scene_sketch(&self, path: &Path, max_id: InstanceId) -> Result<SketchLabelMap> {
        let path = self.resolve(path);
        match pnm::read_pnm(&path)? {
            pnm::Pnm::Gray { .. } => sketch::load_label_map(&path, max_id),
            pnm::Pnm::Rgb { .. } => {
                let colors: Vec<_> =
                    self.instances.iter().filter_map(|i| i.color.map(|c| (c, i.id))).collect();
                if colors.is_empty() {
                    return Err(Error::Parse(format!(
                        "{}: color sketch but no instance colors",
                        path.display()
                    )));
                }
                sketch::load_color_sketch(&path, &colors, max_id)
            }
        }
    }

    /// Full-resolution mask for every id in `ids`.
    pub fn load_masks(&self, ids: &[InstanceId]) -> Result<Vec<(InstanceId, InstanceMask)>> {
        let max_id = ids.iter().copied().max().unwrap_or(0);
        let map = match &self.sketch {
            Some(p) => Some(self.load_scene_sketch(p, max_id)?),
            None => None,
        };
        ids.iter()
            .map(|&id| {
                let own = self.instances.iter().find(|i| i.id == id).and_then(|i| i.sketch.as_ref());
                let mask = match (own, &map) {
                    (Some(p), _) => sketch::load_instance_mask(&self.resolve(p))?,
                    (None, Some(m)) => sketch::instance_mask(m, id)?,
                    (None, None) => return Err(Error::UnknownInstance(id)),
                };
                Ok((id, mask))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"prompt": "a river", "sketch": "s.pgm", "k": 1}"#;

    #[test]
    fn defaults() {
        let s = SceneSpec::from_json_str(MINIMAL, Path::new("/tmp")).unwrap();
        assert_eq!(s.context_length, 77);
        assert_eq!(s.beta, 1.0);
        assert_eq!(s.timesteps, 8);
        assert_eq!(s.dense_tune.strength, 2.5);
        let layers = s.layer_configs().unwrap();
        assert_eq!(layers.len(), 5);
        let flags: Vec<_> = layers.iter().map(|l| l.dense_tuning).collect();
        assert_eq!(flags, vec![false, true, true, false, false]);
        assert_eq!(s.resolve(Path::new("s.pgm")), PathBuf::from("/tmp/s.pgm"));
    }

    #[test]
    fn unknown_field_reports_path() {
        let text = r#"{"prompt": "a river", "sketch": "s.pgm", "instances": [{"word": "river", "id": 1, "colour": [1,2,3]}]}"#;
        let err = SceneSpec::from_json_str(text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("instances[0]"), "{err}");
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let text = "{\n  \"prompt\": \"a river\",\n  oops\n}";
        let err = SceneSpec::from_json_str(text, Path::new(".")).unwrap_err().to_string();
        let expected = text.find("oops").unwrap();
        assert!(err.contains(&format!("byte offset {expected}")), "{err}");
    }

    #[test]
    fn validation_lists_every_problem() {
        let text = r#"{"prompt": "a river", "sketch": "s.pgm", "k": 5, "beta": -1, "timesteps": 0,
            "instances": [{"word": "lake", "id": 1}, {"word": "river", "id": 1}]}"#;
        let Err(Error::InvalidScene(problems)) = SceneSpec::from_json_str(text, Path::new(".")) else {
            panic!("expected validation failure");
        };
        for needle in ["k:", "beta:", "timesteps:", "instances[0].word", "instances[1].id"] {
            assert!(problems.iter().any(|p| p.starts_with(needle)), "{needle} missing in {problems:?}");
        }
    }

    #[test]
    fn explicit_layers_and_bad_stack_name() {
        let text = r#"{"prompt": "a river", "sketch": "s.pgm", "k": 1,
            "layers": [{"placement": "mid_0", "height": 4, "width": 4, "channels": 8}]}"#;
        let s = SceneSpec::from_json_str(text, Path::new(".")).unwrap();
        let l = s.layer_configs().unwrap();
        assert!(l[0].dense_tuning && l[0].heads == 2);
        let bad = r#"{"prompt": "a river", "sketch": "s.pgm", "k": 1, "layers": "huge"}"#;
        assert!(matches!(SceneSpec::from_json_str(bad, Path::new(".")), Err(Error::InvalidScene(_))));
    }

    #[test]
    fn offsets() {
        assert_eq!(byte_offset("ab\ncd", 2, 2), 4);
        assert_eq!(byte_offset("abc", 1, 1), 0);
    }
}
