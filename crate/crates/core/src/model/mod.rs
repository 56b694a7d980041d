//! The Mixer acoustic model: embeddings, input projection, a stack of
//! (channel mixer, token mixer) blocks and an output projection.

mod forward;
mod objective;
mod params;

pub use forward::{channel_mix, embed_inputs, token_mix, DropoutKey, Tape};
pub use objective::SegmentObjective;
pub use params::{BlockParams, ModelParams, TokenParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::N_MELS;
use crate::score::vocab::{PHONEME_VOCAB, PITCH_VOCAB};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_blocks: usize,
    pub seq_len: usize,
    pub d_phoneme: usize,
    pub d_pitch: usize,
    pub d_mel: usize,
    pub hidden_channel: usize,
    pub hidden_token: usize,
    pub dropout: f32,
    pub phoneme_vocab: usize,
    pub pitch_vocab: usize,
    /// Channel-mixer-only variant: blocks carry no token mixer and no second layernorm.
    #[serde(default)]
    pub ablate_token_mixer: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_blocks: 16,
            seq_len: 200,
            d_phoneme: 256,
            d_pitch: 32,
            d_mel: N_MELS,
            hidden_channel: 768,
            hidden_token: 200,
            dropout: 0.5,
            phoneme_vocab: PHONEME_VOCAB,
            pitch_vocab: PITCH_VOCAB,
            ablate_token_mixer: false,
        }
    }
}

impl ModelConfig {
    /// The 24-block channel-mixer-only model of roughly the default's size.
    pub fn ablation() -> Self {
        ModelConfig {
            n_blocks: 24,
            hidden_channel: 576,
            ablate_token_mixer: true,
            ..Default::default()
        }
    }

    pub fn d_model(&self) -> usize {
        self.d_phoneme + self.d_pitch
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("seq_len", self.seq_len),
            ("d_model", self.d_model()),
            ("d_mel", self.d_mel),
            ("hidden_channel", self.hidden_channel),
            ("phoneme_vocab", self.phoneme_vocab),
            ("pitch_vocab", self.pitch_vocab),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.ablate_token_mixer && self.n_blocks > 0 && self.hidden_token == 0 {
            return Err(Error::Config("hidden_token must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let d = self.d_model();
        let (l, hc, ht) = (self.seq_len, self.hidden_channel, self.hidden_token);
        let embeddings = self.phoneme_vocab * self.d_phoneme + self.pitch_vocab * self.d_pitch;
        let input = d * d + d;
        let channel = 2 * d + d * hc + hc + hc * d + d;
        let token = if self.ablate_token_mixer { 0 } else { 2 * d + l * ht + ht + ht * l + l };
        let output = d * self.d_mel + self.d_mel;
        embeddings + input + self.n_blocks * (channel + token) + output
    }
}

/// Pitch and phoneme ids for one `seq_len`-frame segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentIds {
    pub pitch: Vec<usize>,
    pub phoneme: Vec<usize>,
}
