use serde::{Deserialize, Serialize};

use crate::chem::TokenSequence;

/// Network dimensions. Defaults are desk-scale; the published architecture
/// corresponds to `gene_count = 978`, `latent_dim = 192`, `hidden = 192`,
/// `layers = 3`, `exp_hidden = [512, 256]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub gene_count: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    /// Depth of each GRU stack.
    pub layers: usize,
    pub embed_dim: usize,
    /// Hidden widths of the expression encoder; the decoder mirrors them.
    pub exp_hidden: Vec<usize>,
    pub dropout: f64,
    /// Maximum number of generated tokens (excluding BOS/EOS).
    pub max_len: usize,
    /// Total vocabulary size including the reserved tokens.
    pub vocab_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gene_count: 64,
            latent_dim: 16,
            hidden: 32,
            layers: 1,
            embed_dim: 16,
            exp_hidden: vec![48, 32],
            dropout: 0.1,
            max_len: TokenSequence::DEFAULT_MAX_LEN,
            vocab_size: 40,
        }
    }
}

impl ModelConfig {
    /// Decoder output width: every id except PAD and BOS.
    pub fn output_size(&self) -> usize {
        self.vocab_size - 2
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("gene_count", self.gene_count),
            ("latent_dim", self.latent_dim),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("embed_dim", self.embed_dim),
            ("max_len", self.max_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.vocab_size < 4 {
            return Err("vocab_size must leave room for chemistry tokens".into());
        }
        if self.exp_hidden.contains(&0) {
            return Err("exp_hidden widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err("dropout must be in [0, 1)".into());
        }
        Ok(())
    }
}
