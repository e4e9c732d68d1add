// SPDX-License-Identifier: MIT OR Apache-2.0

//! Loader for Llama-family checkpoints in Hugging Face layout:
//! `config.json`, `tokenizer.json`, and `model.safetensors` (or a sharded
//! `model.safetensors.index.json`). Weights are widened to f32.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use safetensors::{Dtype, SafeTensors};

use super::config::HfLlamaConfig;
use super::{HfTokenizer, LayerWeights, Model, ModelWeights};
use crate::error::{Error, Result};

/// Files a reference checkpoint directory must contain.
pub fn required_files(dir: &Path) -> Vec<PathBuf> {
    vec![dir.join("config.json"), dir.join("tokenizer.json")]
}

/// True when `dir` looks like a loadable checkpoint.
pub fn is_available(dir: &Path) -> bool {
    required_files(dir).iter().all(|p| p.exists())
        && (dir.join("model.safetensors").exists()
            || dir.join("model.safetensors.index.json").exists())
}

fn shard_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let single = dir.join("model.safetensors");
    if single.exists() {
        return Ok(vec![single]);
    }
    let index = dir.join("model.safetensors.index.json");
    let text = std::fs::read_to_string(&index).map_err(|e| Error::io(&index, e))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let files: BTreeSet<String> = v["weight_map"]
        .as_object()
        .ok_or_else(|| Error::Load("index has no weight_map".into()))?
        .values()
        .filter_map(|f| f.as_str().map(String::from))
        .collect();
    Ok(files.into_iter().map(|f| dir.join(f)).collect())
}

fn to_f32(view: &safetensors::tensor::TensorView<'_>) -> Result<Vec<f32>> {
    let data = view.data();
    Ok(match view.dtype() {
        Dtype::F32 => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect(),
        Dtype::BF16 => data
            .chunks_exact(2)
            .map(|b| half::bf16::from_le_bytes([b[0], b[1]]).to_f32())
            .collect(),
        Dtype::F16 => data
            .chunks_exact(2)
            .map(|b| half::f16::from_le_bytes([b[0], b[1]]).to_f32())
            .collect(),
        other => return Err(Error::Load(format!("unsupported dtype {other:?}"))),
    })
}

struct TensorStore(BTreeMap<String, (Vec<usize>, Vec<f32>)>);

impl TensorStore {
    fn take(&mut self, name: &str) -> Result<(Vec<usize>, Vec<f32>)> {
        self.0
            .remove(name)
            .ok_or_else(|| Error::Load(format!("missing tensor {name}")))
    }

    fn matrix(&mut self, name: &str) -> Result<Array2<f32>> {
        let (shape, data) = self.take(name)?;
        let [r, c] = shape[..] else {
            return Err(Error::Load(format!("{name}: expected 2-D, got {shape:?}")));
        };
        Array2::from_shape_vec((r, c), data).map_err(|e| Error::Load(format!("{name}: {e}")))
    }

    fn vector(&mut self, name: &str) -> Result<Array1<f32>> {
        let (_, data) = self.take(name)?;
        Ok(Array1::from_vec(data))
    }
}

/// Load a checkpoint directory into a [`Model`].
pub fn load(dir: &Path) -> Result<Model> {
    if !is_available(dir) {
        return Err(Error::GatedResource(format!(
            "no checkpoint at {} (need config.json, tokenizer.json, model.safetensors)",
            dir.display()
        )));
    }
    let cfg_path = dir.join("config.json");
    let cfg_text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let hf: HfLlamaConfig = serde_json::from_str(&cfg_text)?;
    let config = hf.to_config();
    let tokenizer = HfTokenizer::from_file(&dir.join("tokenizer.json"))?;

    let mut store = TensorStore(BTreeMap::new());
    for file in shard_files(dir)? {
        log::info!("reading {}", file.display());
        let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
        let st = SafeTensors::deserialize(&bytes)
            .map_err(|e| Error::Load(format!("{}: {e}", file.display())))?;
        for (name, view) in st.tensors() {
            store.0.insert(name, (view.shape().to_vec(), to_f32(&view)?));
        }
    }

    let mut layers = Vec::with_capacity(config.n_layers);
    for i in 0..config.n_layers {
        let p = format!("model.layers.{i}");
        layers.push(LayerWeights {
            attn_norm: store.vector(&format!("{p}.input_layernorm.weight"))?,
            wq: store.matrix(&format!("{p}.self_attn.q_proj.weight"))?,
            wk: store.matrix(&format!("{p}.self_attn.k_proj.weight"))?,
            wv: store.matrix(&format!("{p}.self_attn.v_proj.weight"))?,
            wo: store.matrix(&format!("{p}.self_attn.o_proj.weight"))?,
            o_bias: None,
            mlp_norm: store.vector(&format!("{p}.post_attention_layernorm.weight"))?,
            w_gate: store.matrix(&format!("{p}.mlp.gate_proj.weight"))?,
            w_up: store.matrix(&format!("{p}.mlp.up_proj.weight"))?,
            w_down: store.matrix(&format!("{p}.mlp.down_proj.weight"))?,
        });
    }
    let embed = store.matrix("model.embed_tokens.weight")?;
    let unembed = if hf.tie_word_embeddings || !store.0.contains_key("lm_head.weight") {
        None
    } else {
        Some(store.matrix("lm_head.weight")?)
    };
    let weights = ModelWeights {
        embed,
        layers,
        final_norm: store.vector("model.norm.weight")?,
        unembed,
    };
    let id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Model::new(id, config, weights, Box::new(tokenizer))
}
