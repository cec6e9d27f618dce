use serde::{Deserialize, Serialize};

use crate::agru::{AttnScope, ResetMode};
use crate::error::{Error, Result};

/// Hyperparameters of the network and its training loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Window length in trading days.
    pub his_t: usize,
    /// Label horizon in trading days.
    pub label_t: usize,
    /// Correlation threshold for graph edges.
    pub judge_value: f64,
    /// Trailing days used to correlate returns.
    pub graph_lookback: usize,
    /// Hidden sizes of the stacked GRU layers.
    pub gru_layers: Vec<usize>,
    /// Width the temporal output is projected to before fusion.
    pub temporal_dim: usize,
    /// Widths of the cross-sectional graph encoder layers.
    pub gat_layers: Vec<usize>,
    pub gat_heads: usize,
    /// Hidden width of the graph attention prediction head.
    pub head_hidden: usize,
    pub head_heads: usize,
    /// Number of latent state vectors per bank.
    pub d_r: usize,
    /// Requested latent state width. Each bank's width always follows its
    /// paired stream; a conflicting value is ignored with a warning.
    pub d_i: Option<usize>,
    pub cross_heads: usize,
    pub attn_scope: AttnScope,
    pub lr: f64,
    /// Anchor days per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub use_agru_attention: bool,
    pub use_gat_encoder: bool,
    pub use_latent: bool,
    pub use_head_gat: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            his_t: 10,
            label_t: 5,
            judge_value: 0.8,
            graph_lookback: 252,
            gru_layers: vec![32, 10],
            temporal_dim: 32,
            gat_layers: vec![32, 4],
            gat_heads: 4,
            head_hidden: 32,
            head_heads: 1,
            d_r: 32,
            d_i: None,
            cross_heads: 4,
            attn_scope: AttnScope::Window,
            lr: 0.0002,
            batch_size: 32,
            epochs: 200,
            seed: 0,
            use_agru_attention: true,
            use_gat_encoder: true,
            use_latent: true,
            use_head_gat: true,
        }
    }
}

impl ModelConfig {
    pub fn reset_mode(&self) -> ResetMode {
        if self.use_agru_attention {
            ResetMode::Attention(self.attn_scope)
        } else {
            ResetMode::Classic
        }
    }

    /// Width of the cross-sectional stream (0 when the encoder is off).
    pub fn spatial_dim(&self) -> usize {
        if self.use_gat_encoder {
            self.gat_layers.last().copied().unwrap_or(0)
        } else {
            0
        }
    }

    /// Width of the fused feature vector fed to the head.
    pub fn fused_dim(&self) -> usize {
        let streams = self.temporal_dim + self.spatial_dim();
        if self.use_latent {
            2 * streams
        } else {
            streams
        }
    }

    /// Short label of the enabled modules, e.g. `I+II+III+IV`.
    pub fn module_label(&self) -> String {
        let mut parts = vec![];
        for (on, name) in [
            (self.use_agru_attention, "I"),
            (self.use_gat_encoder, "II"),
            (self.use_latent, "III"),
            (self.use_head_gat, "IV"),
        ] {
            if on {
                parts.push(name);
            }
        }
        parts.join("+")
    }

    /// Enables exactly the modules named in a label such as `I+II+IV`.
    pub fn set_modules(&mut self, label: &str) -> Result<()> {
        let mut on = [false; 4];
        for part in label.split('+').map(str::trim) {
            let idx = match part {
                "I" => 0,
                "II" => 1,
                "III" => 2,
                "IV" => 3,
                other => {
                    return Err(Error::Config(format!(
                        "unknown module {other:?} in {label:?}; use I, II, III, IV joined by +"
                    )))
                }
            };
            on[idx] = true;
        }
        [
            self.use_agru_attention,
            self.use_gat_encoder,
            self.use_latent,
            self.use_head_gat,
        ] = on;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("his_t", self.his_t),
            ("label_t", self.label_t),
            ("graph_lookback", self.graph_lookback),
            ("temporal_dim", self.temporal_dim),
            ("gat_heads", self.gat_heads),
            ("head_hidden", self.head_hidden),
            ("head_heads", self.head_heads),
            ("d_r", self.d_r),
            ("cross_heads", self.cross_heads),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.gru_layers.is_empty() || self.gru_layers.contains(&0) {
            return Err(Error::Config("gru_layers must be non-empty and positive".into()));
        }
        if self.gat_layers.is_empty() || self.gat_layers.contains(&0) {
            return Err(Error::Config("gat_layers must be non-empty and positive".into()));
        }
        let hidden_gat = &self.gat_layers[..self.gat_layers.len() - 1];
        if let Some(w) = hidden_gat.iter().find(|&&w| w % self.gat_heads != 0) {
            return Err(Error::Config(format!(
                "graph layer width {w} is not divisible by gat_heads = {}",
                self.gat_heads
            )));
        }
        if self.head_hidden % self.head_heads != 0 {
            return Err(Error::Config(format!(
                "head_hidden = {} is not divisible by head_heads = {}",
                self.head_hidden, self.head_heads
            )));
        }
        if self.use_latent {
            for (name, d) in [("temporal", self.temporal_dim), ("cross-sectional", self.spatial_dim())] {
                if d > 0 && d % self.cross_heads != 0 {
                    return Err(Error::Config(format!(
                        "cross_heads = {} does not divide the {name} width {d}",
                        self.cross_heads
                    )));
                }
            }
        }
        if !(self.judge_value.is_finite() && (-1.0..=1.0).contains(&self.judge_value)) {
            return Err(Error::Config(format!(
                "judge_value must lie in [-1, 1], got {}",
                self.judge_value
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}
