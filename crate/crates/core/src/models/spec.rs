use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::Task;
use crate::error::{Error, Result};
use crate::relation::{GeometricRelationSpec, GraConfig, SemanticCombinator};
use crate::tensor::ReduceKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    /// Downsample with FPS, group, aggregate.
    Skip,
    /// Keep every point as a centroid and add the block output to its input.
    Residual,
}

/// What the stem sees per point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFeatures {
    /// Raw coordinates.
    Xyz,
    /// A constant 1 per point; geometry then enters only through the
    /// relation branch.
    Constant,
}

/// Local aggregator used by every block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Gra,
    /// Set abstraction (shared MLP then max-pool).
    Sa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    /// Centroid count after the stage. Residual stages keep the resolution.
    pub sample_to: usize,
    /// Group sizes; more than one makes a multi-scale stage whose per-scale
    /// outputs are concatenated.
    pub scales: Vec<usize>,
    /// Output width per scale.
    pub out_channels: usize,
    pub block: BlockKind,
    /// Single group holding every remaining point.
    #[serde(default)]
    pub group_all: bool,
}

impl StageSpec {
    pub fn skip(sample_to: usize, scales: &[usize], out_channels: usize) -> Self {
        StageSpec { sample_to, scales: scales.to_vec(), out_channels, block: BlockKind::Skip, group_all: false }
    }

    pub fn residual(resolution: usize, group: usize, channels: usize) -> Self {
        StageSpec { sample_to: resolution, scales: vec![group], out_channels: channels, block: BlockKind::Residual, group_all: false }
    }

    pub fn group_all(out_channels: usize) -> Self {
        StageSpec { sample_to: 1, scales: vec![0], out_channels, block: BlockKind::Skip, group_all: true }
    }

    /// Width of the stage output.
    pub fn width(&self) -> usize {
        self.out_channels * self.scales.len()
    }
}

/// Classify: hidden widths of the two inner layers (three linear layers in
/// all, dropout after the first). Segment: no hidden layers; dropout then one
/// linear layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub hidden: Vec<usize>,
    pub dropout: f64,
}

/// GRA hyperparameters shared by every block; widths and group sizes come
/// from the stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraTemplate {
    pub k: usize,
    pub r1: usize,
    pub r2: usize,
    pub geo: GeometricRelationSpec,
    pub sem: SemanticCombinator,
    pub agg: ReduceKind,
    pub m_hidden: Option<usize>,
    pub normalize: bool,
    pub uniform_attention: bool,
}

impl Default for GraTemplate {
    fn default() -> Self {
        let c = GraConfig::new(1, 1, 1);
        GraTemplate {
            k: c.k,
            r1: c.r1,
            r2: c.r2,
            geo: c.geo,
            sem: c.sem,
            agg: c.agg,
            m_hidden: c.m_hidden,
            normalize: c.normalize,
            uniform_attention: c.uniform_attention,
        }
    }
}

impl GraTemplate {
    pub fn instantiate(&self, c_in: usize, c_out: usize, group_size: usize) -> GraConfig {
        GraConfig {
            c_in,
            c_out,
            group_size,
            k: self.k,
            r1: self.r1,
            r2: self.r2,
            geo: self.geo,
            sem: self.sem,
            agg: self.agg,
            m_hidden: self.m_hidden,
            normalize: self.normalize,
            uniform_attention: self.uniform_attention,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub task: Task,
    pub num_points: usize,
    pub num_classes: usize,
    pub input: InputFeatures,
    pub stem_channels: usize,
    pub stages: Vec<StageSpec>,
    /// One feature-propagation width per skip stage (segment only), coarse
    /// to fine.
    #[serde(default)]
    pub decoder: Vec<usize>,
    pub head: HeadSpec,
    #[serde(default)]
    pub gra: GraTemplate,
    pub operator: Operator,
}

/// Resolution and width entering each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageShape {
    pub n_in: usize,
    pub c_in: usize,
    pub n_out: usize,
    pub c_out: usize,
}

impl ModelSpec {
    pub fn input_channels(&self) -> usize {
        match self.input {
            InputFeatures::Xyz => 3,
            InputFeatures::Constant => 1,
        }
    }

    /// Walk the encoder, checking every structural rule on the way.
    pub fn stage_shapes(&self) -> Result<Vec<StageShape>> {
        let bad = |s: usize, msg: String| Error::config(format!("{} stage {s}: {msg}", self.name));
        if self.stages.is_empty() {
            return Err(Error::config(format!("{}: no stages", self.name)));
        }
        let (mut n, mut c) = (self.num_points, self.stem_channels);
        let mut shapes = Vec::with_capacity(self.stages.len());
        for (s, st) in self.stages.iter().enumerate() {
            if st.scales.is_empty() {
                return Err(bad(s, "scales must be non-empty".into()));
            }
            if st.out_channels == 0 {
                return Err(bad(s, "out_channels must be positive".into()));
            }
            let n_out = if st.group_all {
                if s + 1 != self.stages.len() || st.block != BlockKind::Skip || st.scales.len() != 1 {
                    return Err(bad(s, "group-all must be the last stage, a single-scale skip block".into()));
                }
                1
            } else {
                if let Some(&g) = st.scales.iter().find(|&&g| g == 0 || g > n) {
                    return Err(bad(s, format!("group size {g} outside 1..={n}")));
                }
                match st.block {
                    BlockKind::Skip if st.sample_to == 0 || st.sample_to >= n => {
                        return Err(bad(s, format!("resolution must strictly decrease, {n} -> {}", st.sample_to)));
                    }
                    BlockKind::Residual if st.sample_to != n => {
                        return Err(bad(s, format!("residual block must keep resolution {n}, got {}", st.sample_to)));
                    }
                    BlockKind::Residual if st.width() != c || st.scales.len() != 1 => {
                        return Err(bad(s, format!("residual block needs one scale and width {c}, got {}", st.width())));
                    }
                    _ => {}
                }
                st.sample_to
            };
            shapes.push(StageShape { n_in: n, c_in: c, n_out, c_out: st.width() });
            n = n_out;
            c = st.width();
        }
        Ok(shapes)
    }

    pub fn skip_stage_count(&self) -> usize {
        self.stages.iter().filter(|s| s.block == BlockKind::Skip).count()
    }

    /// Aggregator instances: one per scale of every stage.
    pub fn block_count(&self) -> usize {
        self.stages.iter().map(|s| s.scales.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("num_classes must be at least 2"));
        }
        if self.stem_channels == 0 {
            return Err(Error::config("stem_channels must be positive"));
        }
        if !(0.0..1.0).contains(&self.head.dropout) {
            return Err(Error::config(format!("head dropout {} outside [0, 1)", self.head.dropout)));
        }
        let shapes = self.stage_shapes()?;
        let has_global = self.stages.last().is_some_and(|s| s.group_all);
        match self.task {
            Task::Classify => {
                if !has_global {
                    return Err(Error::config("classification needs a final group-all stage"));
                }
                if self.head.hidden.len() != 2 {
                    return Err(Error::config("classification head has exactly three linear layers (two hidden widths)"));
                }
            }
            Task::Segment => {
                if has_global {
                    return Err(Error::config("segmentation encoder cannot end in group-all"));
                }
                if self.decoder.len() != self.skip_stage_count() {
                    return Err(Error::config(format!(
                        "decoder needs one width per skip stage ({}), got {}",
                        self.skip_stage_count(),
                        self.decoder.len()
                    )));
                }
                if !self.head.hidden.is_empty() {
                    return Err(Error::config("segmentation head is a single linear layer"));
                }
            }
        }
        if self.operator == Operator::Gra {
            for (st, sh) in self.stages.iter().zip(&shapes) {
                let g = if st.group_all { sh.n_in } else { st.scales[0] };
                self.gra.instantiate(sh.c_in, st.out_channels, g).validate()?;
            }
        }
        Ok(())
    }
}

const W_CHANNELS: [usize; 3] = [128, 256, 512];
const D_CHANNELS: [usize; 4] = [64, 128, 256, 512];
const D_RESOLUTION: [usize; 4] = [256, 64, 32, 16];
const D_GROUPS: [usize; 4] = [32, 32, 16, 16];
const RESIDUAL_GROUP: usize = 16;

fn classify_spec(name: &str, num_points: usize, num_classes: usize, stages: Vec<StageSpec>) -> ModelSpec {
    ModelSpec {
        name: name.into(),
        task: Task::Classify,
        num_points,
        num_classes,
        input: InputFeatures::Xyz,
        stem_channels: 32,
        stages,
        decoder: Vec::new(),
        head: HeadSpec { hidden: vec![512, 256], dropout: 0.5 },
        gra: GraTemplate::default(),
        operator: Operator::Gra,
    }
}

/// `W1`, `W3`, `W7`, `W9`.
pub fn build_rpnet_w(preset: &str, num_classes: usize, overrides: &[(String, String)]) -> Result<ModelSpec> {
    let [c1, c2, c3] = W_CHANNELS;
    let spec = match preset {
        "W1" => classify_spec("W1", 256, num_classes, vec![StageSpec::group_all(c3)]),
        "W3" => classify_spec(
            "W3",
            256,
            num_classes,
            vec![StageSpec::skip(128, &[32], c1), StageSpec::skip(32, &[32], c2), StageSpec::group_all(c3)],
        ),
        "W7" => classify_spec(
            "W7",
            1024,
            num_classes,
            vec![StageSpec::skip(512, &[16, 32, 128], c1), StageSpec::skip(128, &[32, 64, 128], c2), StageSpec::group_all(c3)],
        ),
        "W9" => classify_spec(
            "W9",
            1024,
            num_classes,
            vec![
                StageSpec::skip(512, &[16, 32, 64, 128], c1),
                StageSpec::skip(128, &[32, 64, 96, 128], c2),
                StageSpec::group_all(c3),
            ],
        ),
        _ => return Err(Error::config(format!("unknown classification preset {preset:?}"))),
    };
    finish(spec, overrides)
}

/// `D4`, `D8`, `D14`: four skip stages with residual blocks spread over them.
pub fn build_rpnet_d(preset: &str, num_classes: usize, overrides: &[(String, String)]) -> Result<ModelSpec> {
    let residuals: [usize; 4] = match preset {
        "D4" => [0; 4],
        "D8" => [1; 4],
        "D14" => [3, 3, 2, 2],
        _ => return Err(Error::config(format!("unknown segmentation preset {preset:?}"))),
    };
    let mut stages = Vec::new();
    for s in 0..4 {
        stages.push(StageSpec::skip(D_RESOLUTION[s], &[D_GROUPS[s]], D_CHANNELS[s]));
        for _ in 0..residuals[s] {
            stages.push(StageSpec::residual(D_RESOLUTION[s], RESIDUAL_GROUP, D_CHANNELS[s]));
        }
    }
    let spec = ModelSpec {
        name: preset.into(),
        task: Task::Segment,
        num_points: 2048,
        num_classes,
        input: InputFeatures::Xyz,
        stem_channels: 32,
        stages,
        decoder: vec![256, 128, 128, 64],
        head: HeadSpec { hidden: Vec::new(), dropout: 0.5 },
        gra: GraTemplate::default(),
        operator: Operator::Gra,
    };
    finish(spec, overrides)
}

/// Either family by name.
pub fn build_preset(preset: &str, num_classes: usize, overrides: &[(String, String)]) -> Result<ModelSpec> {
    match preset.chars().next() {
        Some('W') => build_rpnet_w(preset, num_classes, overrides),
        Some('D') => build_rpnet_d(preset, num_classes, overrides),
        _ => Err(Error::config(format!("unknown preset {preset:?}"))),
    }
}

fn finish(spec: ModelSpec, overrides: &[(String, String)]) -> Result<ModelSpec> {
    let spec = apply_overrides(&spec, overrides)?;
    spec.validate()?;
    Ok(spec)
}

/// Set dotted paths (`gra.k`, `stages.0.scales`) to JSON values. A value
/// that does not parse as JSON is taken as a string.
pub fn set_path(root: &mut Value, key: &str, value: &str) -> Result<()> {
    let parsed: Value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    if !map.contains_key(*part) && !matches!(*part, "m_hidden" | "decoder" | "group_all") {
                        return Err(Error::config(format!("unknown override key {key:?}")));
                    }
                    map.insert(part.to_string(), parsed);
                    return Ok(());
                }
                map.get_mut(*part).ok_or_else(|| Error::config(format!("unknown override key {key:?}")))?
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| Error::config(format!("bad index {part:?} in {key:?}")))?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| Error::config(format!("index {idx} out of {len} in {key:?}")))?;
                if last {
                    *slot = parsed;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config(format!("cannot descend into {part:?} of {key:?}"))),
        };
    }
    Err(Error::config("empty override key"))
}

pub fn apply_overrides(spec: &ModelSpec, overrides: &[(String, String)]) -> Result<ModelSpec> {
    if overrides.is_empty() {
        return Ok(spec.clone());
    }
    let mut v = serde_json::to_value(spec).map_err(|e| Error::config(e.to_string()))?;
    for (k, val) in overrides {
        set_path(&mut v, k, val)?;
    }
    serde_json::from_value(v).map_err(|e| Error::config(format!("override: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_counts_match_names() {
        for (p, n) in [("W1", 1), ("W3", 3), ("W7", 7), ("W9", 9)] {
            assert_eq!(build_rpnet_w(p, 40, &[]).unwrap().block_count(), n);
        }
        for (p, n) in [("D4", 4), ("D8", 8), ("D14", 14)] {
            assert_eq!(build_rpnet_d(p, 13, &[]).unwrap().block_count(), n);
        }
    }

    #[test]
    fn w7_scales() {
        let s = build_rpnet_w("W7", 40, &[]).unwrap();
        assert_eq!(s.stages[0].scales, vec![16, 32, 128]);
        assert_eq!(s.stages[1].scales, vec![32, 64, 128]);
        assert!(s.stages[2].group_all);
        assert_eq!(s.head.hidden.len() + 1, 3);
    }

    #[test]
    fn d14_begins_skip_then_residual() {
        let s = build_rpnet_d("D14", 13, &[]).unwrap();
        assert_eq!((s.stages[0].block, s.stages[0].scales[0], s.stages[0].out_channels), (BlockKind::Skip, 32, 64));
        assert_eq!((s.stages[1].block, s.stages[1].scales[0]), (BlockKind::Residual, 16));
    }

    #[test]
    fn unknown_preset() {
        assert!(build_rpnet_w("W5", 3, &[]).is_err());
        assert!(build_rpnet_d("D5", 3, &[]).is_err());
    }

    #[test]
    fn non_decreasing_chain_rejected() {
        let o = vec![("stages.1.sample_to".to_string(), "512".to_string())];
        assert!(build_rpnet_d("D4", 2, &o).is_err());
    }

    #[test]
    fn full_scale_chain_via_overrides() {
        let o: Vec<(String, String)> = [("num_points", "8192"), ("stages.0.sample_to", "1024"), ("stages.1.sample_to", "256"), ("stages.2.sample_to", "64"), ("stages.3.sample_to", "32")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let s = build_rpnet_d("D4", 13, &o).unwrap();
        let shapes = s.stage_shapes().unwrap();
        assert_eq!(shapes.iter().map(|s| s.n_out).collect::<Vec<_>>(), vec![1024, 256, 64, 32]);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let o = vec![("gra.k".to_string(), "1".to_string()), ("gra.sem".to_string(), "hadamard".to_string())];
        let s = build_rpnet_w("W3", 3, &o).unwrap();
        assert_eq!(s.gra.k, 1);
        assert_eq!(s.gra.sem, SemanticCombinator::Hadamard);
        assert!(build_rpnet_w("W3", 3, &[("nope".into(), "1".into())]).is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let s = build_rpnet_d("D8", 2, &[]).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&j).unwrap(), s);
    }
}
