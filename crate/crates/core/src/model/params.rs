use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::rng::stream;
use crate::numerics::{tensor_file, Matrix, Param};

const EMBED_STD: f32 = 0.02;

#[derive(Clone, Debug)]
pub struct TokenParams {
    pub ln_gamma: Param,
    pub ln_beta: Param,
    /// `seq_len x hidden_token`
    pub w1: Param,
    pub b1: Param,
    /// `hidden_token x seq_len`
    pub w2: Param,
    pub b2: Param,
}

#[derive(Clone, Debug)]
pub struct BlockParams {
    pub ln_gamma: Param,
    pub ln_beta: Param,
    /// `d_model x hidden_channel`
    pub w1: Param,
    pub b1: Param,
    pub w2: Param,
    pub b2: Param,
    pub token: Option<TokenParams>,
}

#[derive(Clone, Debug)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub phoneme_embed: Param,
    pub pitch_embed: Param,
    pub input_w: Param,
    pub input_b: Param,
    pub blocks: Vec<BlockParams>,
    pub output_w: Param,
    pub output_b: Param,
}

// FNV-1a, so every tensor gets its own init stream keyed by name.
fn name_key(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

struct Init {
    seed: u64,
}

impl Init {
    fn uniform(&self, name: String, fan_in: usize, fan_out: usize) -> Param {
        let mut rng = stream(self.seed, &[name_key(&name)]);
        let bound = 1.0 / (fan_in as f32).sqrt();
        let m = Matrix::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-bound..bound));
        Param::new(name, m)
    }

    fn normal(&self, name: String, rows: usize, cols: usize) -> Param {
        let mut rng = stream(self.seed, &[name_key(&name)]);
        let dist = Normal::new(0.0f32, EMBED_STD).expect("positive std");
        let m = Matrix::from_fn(rows, cols, |_, _| dist.sample(&mut rng));
        Param::new(name, m)
    }

    fn filled(&self, name: String, n: usize, v: f32) -> Param {
        Param::new(name, Matrix::filled(1, n, v))
    }
}

impl ModelParams {
    /// Fan-in scaled uniform weights, zero biases, unit layernorm gains,
    /// small normal embeddings.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = config;
        let d = c.d_model();
        let init = Init { seed };
        let blocks = (0..c.n_blocks)
            .map(|i| {
                let p = |s: &str| format!("block.{i}.{s}");
                let token = (!c.ablate_token_mixer).then(|| TokenParams {
                    ln_gamma: init.filled(p("ln2.gamma"), d, 1.0),
                    ln_beta: init.filled(p("ln2.beta"), d, 0.0),
                    w1: init.uniform(p("token.w1"), c.seq_len, c.hidden_token),
                    b1: init.filled(p("token.b1"), c.hidden_token, 0.0),
                    w2: init.uniform(p("token.w2"), c.hidden_token, c.seq_len),
                    b2: init.filled(p("token.b2"), c.seq_len, 0.0),
                });
                BlockParams {
                    ln_gamma: init.filled(p("ln1.gamma"), d, 1.0),
                    ln_beta: init.filled(p("ln1.beta"), d, 0.0),
                    w1: init.uniform(p("channel.w1"), d, c.hidden_channel),
                    b1: init.filled(p("channel.b1"), c.hidden_channel, 0.0),
                    w2: init.uniform(p("channel.w2"), c.hidden_channel, d),
                    b2: init.filled(p("channel.b2"), d, 0.0),
                    token,
                }
            })
            .collect();
        Ok(ModelParams {
            config: c.clone(),
            phoneme_embed: init.normal("embed.phoneme".into(), c.phoneme_vocab, c.d_phoneme),
            pitch_embed: init.normal("embed.pitch".into(), c.pitch_vocab, c.d_pitch),
            input_w: init.uniform("input.w".into(), d, d),
            input_b: init.filled("input.b".into(), d, 0.0),
            blocks,
            output_w: init.uniform("output.w".into(), d, c.d_mel),
            output_b: init.filled("output.b".into(), c.d_mel, 0.0),
        })
    }

    /// All tensors in canonical order.
    pub fn tensors(&self) -> Vec<&Param> {
        let mut out = vec![&self.phoneme_embed, &self.pitch_embed, &self.input_w, &self.input_b];
        for b in &self.blocks {
            out.extend([&b.ln_gamma, &b.ln_beta, &b.w1, &b.b1, &b.w2, &b.b2]);
            if let Some(t) = &b.token {
                out.extend([&t.ln_gamma, &t.ln_beta, &t.w1, &t.b1, &t.w2, &t.b2]);
            }
        }
        out.extend([&self.output_w, &self.output_b]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Param> {
        let mut out = vec![
            &mut self.phoneme_embed,
            &mut self.pitch_embed,
            &mut self.input_w,
            &mut self.input_b,
        ];
        for b in &mut self.blocks {
            out.extend([&mut b.ln_gamma, &mut b.ln_beta, &mut b.w1, &mut b.b1, &mut b.w2, &mut b.b2]);
            if let Some(t) = &mut b.token {
                out.extend([&mut t.ln_gamma, &mut t.ln_beta, &mut t.w1, &mut t.b1, &mut t.w2, &mut t.b2]);
            }
        }
        out.extend([&mut self.output_w, &mut self.output_b]);
        out
    }

    /// Runtime sum of tensor sizes.
    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|p| p.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.tensors_mut() {
            p.zero_grad();
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.tensors().iter().map(|p| p.grad.sum_sq()).sum::<f64>().sqrt()
    }

    /// Sidecar path holding the config next to a checkpoint.
    pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
        path.with_extension("json")
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        tensor_file::encode(self.tensors().into_iter().map(|p| (p.name.as_str(), &p.value)))
    }

    /// Writes `path` (tensors) and its JSON config sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        let json = serde_json::to_string_pretty(&self.config).map_err(|e| Error::format(e.to_string()))?;
        std::fs::write(Self::sidecar_path(path), json + "\n")?;
        Ok(())
    }

    /// Rebuilds params for `config` from decoded tensors; every expected
    /// name must be present exactly once with the expected shape.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<(String, Matrix)>) -> Result<Self> {
        let mut params = ModelParams::init(config, 0)?;
        let expected = params.tensors().len();
        if tensors.len() != expected {
            return Err(Error::format(format!("expected {expected} tensors, found {}", tensors.len())));
        }
        let mut by_name: std::collections::HashMap<String, Matrix> = tensors.into_iter().collect();
        if by_name.len() != expected {
            return Err(Error::format("duplicate tensor names"));
        }
        for p in params.tensors_mut() {
            let m = by_name
                .remove(&p.name)
                .ok_or_else(|| Error::format(format!("missing tensor {}", p.name)))?;
            if m.shape() != p.value.shape() {
                return Err(Error::format(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    p.name,
                    m.shape(),
                    p.value.shape()
                )));
            }
            p.value = m;
        }
        Ok(params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(Self::sidecar_path(path))?;
        let config: ModelConfig = serde_json::from_str(&json).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_tensors(&config, tensor_file::read(path)?)
    }
}
