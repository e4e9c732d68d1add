// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};

/// A `(layer, head)` coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeadId {
    pub layer: usize,
    pub head: usize,
}

impl HeadId {
    pub const fn new(layer: usize, head: usize) -> Self {
        Self { layer, head }
    }
}

impl std::fmt::Display for HeadId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "H{}L{}", self.head, self.layer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    /// Token embedding row (layer must be 0).
    Embedding,
    /// Per-head attention output before the output projection (`d_head`).
    HeadZ,
    /// Per-head contribution to the residual stream (`d_model`).
    HeadResult,
    AttnOut,
    MlpOut,
    ResidPost,
}

impl Component {
    pub fn is_head_scoped(self) -> bool {
        matches!(self, Component::HeadZ | Component::HeadResult)
    }
}

/// Where in a forward pass an activation lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActivationAddress {
    pub layer: usize,
    pub component: Component,
    pub head: Option<usize>,
    pub position: usize,
}

impl ActivationAddress {
    pub fn head_z(layer: usize, head: usize, position: usize) -> Self {
        Self {
            layer,
            component: Component::HeadZ,
            head: Some(head),
            position,
        }
    }

    pub fn head_result(layer: usize, head: usize, position: usize) -> Self {
        Self {
            layer,
            component: Component::HeadResult,
            head: Some(head),
            position,
        }
    }

    pub fn layer_scoped(layer: usize, component: Component, position: usize) -> Self {
        Self {
            layer,
            component,
            head: None,
            position,
        }
    }

    pub fn width(&self, cfg: &ModelConfig) -> usize {
        match self.component {
            Component::HeadZ => cfg.d_head,
            _ => cfg.d_model,
        }
    }

    pub fn validate(&self, cfg: &ModelConfig, seq_len: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Address(m));
        if self.component == Component::Embedding && self.layer != 0 {
            return bad(format!("embedding address must use layer 0, got {}", self.layer));
        }
        if self.layer >= cfg.n_layers {
            return bad(format!("layer {} >= n_layers {}", self.layer, cfg.n_layers));
        }
        match (self.component.is_head_scoped(), self.head) {
            (true, None) => return bad(format!("{:?} needs a head index", self.component)),
            (false, Some(_)) => return bad(format!("{:?} takes no head index", self.component)),
            (true, Some(h)) if h >= cfg.n_heads => {
                return bad(format!("head {h} >= n_heads {}", cfg.n_heads))
            }
            _ => {}
        }
        if self.position >= seq_len {
            return bad(format!("position {} >= sequence length {seq_len}", self.position));
        }
        Ok(())
    }
}

impl std::fmt::Display for ActivationAddress {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.head {
            Some(h) => write!(f, "L{}.{:?}[h{h}]@{}", self.layer, self.component, self.position),
            None => write!(f, "L{}.{:?}@{}", self.layer, self.component, self.position),
        }
    }
}
