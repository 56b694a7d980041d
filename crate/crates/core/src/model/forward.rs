use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{BlockParams, ModelParams, TokenParams};
use super::SegmentIds;
use crate::error::{Error, Result};
use crate::numerics::layers::{
    dropout, dropout_backward, embed, embed_backward, gelu, gelu_backward, gelu_in_place, layernorm, layernorm_backward,
    layernorm_into, linear, linear_backward, linear_into, LayerNormCache, LAYERNORM_EPS,
};
use crate::numerics::rng::stream;
use crate::numerics::{Matrix, Mode, Param};

/// Addresses the dropout masks of one training step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DropoutKey {
    pub seed: u64,
    pub step: u64,
}

impl DropoutKey {
    fn rng(&self, block: usize, branch: u64) -> ChaCha8Rng {
        stream(self.seed, &[self.step, block as u64 * 2 + branch])
    }
}

struct FfTape {
    input: Matrix,
    pre: Matrix,
    mask1: Option<Vec<f32>>,
    hidden: Matrix,
    mask2: Option<Vec<f32>>,
}

struct BlockTape {
    ln1: LayerNormCache,
    channel: FfTape,
    token: Option<(LayerNormCache, FfTape)>,
}

/// Activations retained by a forward pass for backpropagation.
pub struct Tape {
    phoneme_ids: Vec<usize>,
    pitch_ids: Vec<usize>,
    embedded: Matrix,
    blocks: Vec<BlockTape>,
    last: Matrix,
}

fn maybe_dropout<R: Rng + ?Sized>(x: Matrix, p: f32, mode: Mode, rng: &mut R) -> Result<(Matrix, Option<Vec<f32>>)> {
    if mode == Mode::Eval || p == 0.0 {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!("dropout probability {p} outside [0, 1)")));
        }
        return Ok((x, None));
    }
    dropout(&x, p, mode, rng)
}

#[allow(clippy::too_many_arguments)]
fn feedforward<R: Rng + ?Sized>(
    x: Matrix,
    w1: &Param,
    b1: &Param,
    w2: &Param,
    b2: &Param,
    p: f32,
    mode: Mode,
    rng: &mut R,
) -> Result<(Matrix, FfTape)> {
    let pre = linear(&x, &w1.value, b1.value.data())?;
    let (hidden, mask1) = maybe_dropout(gelu(&pre), p, mode, rng)?;
    let out = linear(&hidden, &w2.value, b2.value.data())?;
    let (out, mask2) = maybe_dropout(out, p, mode, rng)?;
    Ok((
        out,
        FfTape {
            input: x,
            pre,
            mask1,
            hidden,
            mask2,
        },
    ))
}

fn feedforward_backward(
    tape: &FfTape,
    w1: &mut Param,
    b1: &mut Param,
    w2: &mut Param,
    b2: &mut Param,
    dy: &Matrix,
) -> Result<Matrix> {
    let d = dropout_backward(tape.mask2.as_deref(), dy);
    let dh = linear_backward(&tape.hidden, &w2.value, &d, &mut w2.grad, b2.grad.data_mut())?;
    let dh = dropout_backward(tape.mask1.as_deref(), &dh);
    let dpre = gelu_backward(&tape.pre, &dh)?;
    linear_backward(&tape.input, &w1.value, &dpre, &mut w1.grad, b1.grad.data_mut())
}

/// Transposes each consecutive `block`-row slab of `x` on its own:
/// `(n * block) x c` becomes `(n * c) x block`.
fn transpose_blocks(x: &Matrix, block: usize) -> Matrix {
    let mut out = Matrix::zeros(0, 0);
    transpose_blocks_into(x, block, &mut out);
    out
}

fn transpose_blocks_into(x: &Matrix, block: usize, out: &mut Matrix) {
    let c = x.cols();
    let n = x.rows() / block;
    out.reset(n * c, block);
    let dst = out.data_mut();
    for s in 0..n {
        for r in 0..block {
            for (j, &v) in x.row(s * block + r).iter().enumerate() {
                dst[(s * c + j) * block + r] = v;
            }
        }
    }
}

/// Buffers reused across blocks by the eval forward.
struct Scratch {
    normed: Matrix,
    hidden: Matrix,
    out: Matrix,
    transposed: Matrix,
}

fn feedforward_eval(x: &Matrix, w1: &Param, b1: &Param, w2: &Param, b2: &Param, s: &mut Scratch) -> Result<()> {
    linear_into(x, &w1.value, b1.value.data(), &mut s.hidden)?;
    gelu_in_place(&mut s.hidden);
    linear_into(&s.hidden, &w2.value, b2.value.data(), &mut s.out)
}

/// Eval-mode block update of `x` in place. Same arithmetic as the taped
/// path, without per-op allocations.
fn block_eval(x: &mut Matrix, block: &BlockParams, seq_len: usize, s: &mut Scratch) -> Result<()> {
    layernorm_into(x, block.ln_gamma.value.data(), block.ln_beta.value.data(), LAYERNORM_EPS, &mut s.normed)?;
    let normed = std::mem::replace(&mut s.normed, Matrix::zeros(0, 0));
    feedforward_eval(&normed, &block.w1, &block.b1, &block.w2, &block.b2, s)?;
    s.normed = normed;
    x.add_assign(&s.out)?;
    if let Some(t) = &block.token {
        layernorm_into(x, t.ln_gamma.value.data(), t.ln_beta.value.data(), LAYERNORM_EPS, &mut s.normed)?;
        let mut tr = std::mem::replace(&mut s.transposed, Matrix::zeros(0, 0));
        transpose_blocks_into(&s.normed, seq_len, &mut tr);
        feedforward_eval(&tr, &t.w1, &t.b1, &t.w2, &t.b2, s)?;
        transpose_blocks_into(&s.out, x.cols(), &mut tr);
        x.add_assign(&tr)?;
        s.transposed = tr;
    }
    Ok(())
}

fn channel_mix_inner<R: Rng + ?Sized>(
    x: &Matrix,
    block: &BlockParams,
    p: f32,
    mode: Mode,
    rng: &mut R,
) -> Result<(Matrix, LayerNormCache, FfTape)> {
    let (normed, ln) = layernorm(x, block.ln_gamma.value.data(), block.ln_beta.value.data(), LAYERNORM_EPS)?;
    let (mut y, ff) = feedforward(normed, &block.w1, &block.b1, &block.w2, &block.b2, p, mode, rng)?;
    y.add_assign(x)?;
    Ok((y, ln, ff))
}

fn token_mix_inner<R: Rng + ?Sized>(
    x: &Matrix,
    token: &TokenParams,
    seq_len: usize,
    p: f32,
    mode: Mode,
    rng: &mut R,
) -> Result<(Matrix, LayerNormCache, FfTape)> {
    if x.rows() == 0 || x.rows() % seq_len != 0 {
        return Err(Error::dim(format!(
            "token mixer expects a multiple of {seq_len} rows, got {}",
            x.rows()
        )));
    }
    let (normed, ln) = layernorm(x, token.ln_gamma.value.data(), token.ln_beta.value.data(), LAYERNORM_EPS)?;
    let t = transpose_blocks(&normed, seq_len);
    let (branch, ff) = feedforward(t, &token.w1, &token.b1, &token.w2, &token.b2, p, mode, rng)?;
    let mut y = transpose_blocks(&branch, x.cols());
    y.add_assign(x)?;
    Ok((y, ln, ff))
}

/// `x + ff(layernorm(x))` applied to every row (frame) on its own.
pub fn channel_mix<R: Rng + ?Sized>(x: &Matrix, block: &BlockParams, dropout: f32, mode: Mode, rng: &mut R) -> Result<Matrix> {
    channel_mix_inner(x, block, dropout, mode, rng).map(|r| r.0)
}

/// `x + ff(layernorm(x)^T)^T` per `seq_len`-row segment: the feedforward
/// runs along time, one channel at a time.
pub fn token_mix<R: Rng + ?Sized>(
    x: &Matrix,
    token: &TokenParams,
    seq_len: usize,
    dropout: f32,
    mode: Mode,
    rng: &mut R,
) -> Result<Matrix> {
    token_mix_inner(x, token, seq_len, dropout, mode, rng).map(|r| r.0)
}

fn gather_ids(params: &ModelParams, segments: &[SegmentIds]) -> Result<(Vec<usize>, Vec<usize>)> {
    let l = params.config.seq_len;
    if segments.is_empty() {
        return Err(Error::dim("empty batch"));
    }
    let mut phon = Vec::with_capacity(segments.len() * l);
    let mut pitch = Vec::with_capacity(segments.len() * l);
    for s in segments {
        if s.pitch.len() != l || s.phoneme.len() != l {
            return Err(Error::dim(format!(
                "segment of {}/{} frames, model expects {l}",
                s.pitch.len(),
                s.phoneme.len()
            )));
        }
        phon.extend_from_slice(&s.phoneme);
        pitch.extend_from_slice(&s.pitch);
    }
    Ok((phon, pitch))
}

fn concat_embeddings(params: &ModelParams, phon: &[usize], pitch: &[usize]) -> Result<Matrix> {
    let ec = embed(&params.phoneme_embed.value, phon)?;
    let ep = embed(&params.pitch_embed.value, pitch)?;
    let (dc, dp) = (ec.cols(), ep.cols());
    let mut e = Matrix::zeros(phon.len(), dc + dp);
    for r in 0..phon.len() {
        let row = e.row_mut(r);
        row[..dc].copy_from_slice(ec.row(r));
        row[dc..].copy_from_slice(ep.row(r));
    }
    Ok(e)
}

/// Embeds and projects a batch of segments into stacked `(B * L) x D` rows.
pub fn embed_inputs(params: &ModelParams, segments: &[SegmentIds]) -> Result<Matrix> {
    let (phon, pitch) = gather_ids(params, segments)?;
    let e = concat_embeddings(params, &phon, &pitch)?;
    linear(&e, &params.input_w.value, params.input_b.value.data())
}

impl ModelParams {
    fn run(&self, segments: &[SegmentIds], mode: Mode, key: DropoutKey, record: bool) -> Result<(Matrix, Option<Tape>)> {
        let cfg = &self.config;
        let p = cfg.dropout;
        let (phon, pitch) = gather_ids(self, segments)?;
        let e = concat_embeddings(self, &phon, &pitch)?;
        let mut x = linear(&e, &self.input_w.value, self.input_b.value.data())?;
        if !record && (mode == Mode::Eval || p == 0.0) {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Parameter(format!("dropout probability {p} outside [0, 1)")));
            }
            let mut s = Scratch {
                normed: Matrix::zeros(0, 0),
                hidden: Matrix::zeros(0, 0),
                out: Matrix::zeros(0, 0),
                transposed: Matrix::zeros(0, 0),
            };
            for block in &self.blocks {
                block_eval(&mut x, block, cfg.seq_len, &mut s)?;
            }
            return Ok((linear(&x, &self.output_w.value, self.output_b.value.data())?, None));
        }
        let mut tapes = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            let (y, ln1, channel) = channel_mix_inner(&x, block, p, mode, &mut key.rng(i, 0))?;
            x = y;
            let token = match &block.token {
                Some(t) => {
                    let (y, ln2, ff) = token_mix_inner(&x, t, cfg.seq_len, p, mode, &mut key.rng(i, 1))?;
                    x = y;
                    Some((ln2, ff))
                }
                None => None,
            };
            if record {
                tapes.push(BlockTape { ln1, channel, token });
            }
        }
        let out = linear(&x, &self.output_w.value, self.output_b.value.data())?;
        let tape = record.then(|| Tape {
            phoneme_ids: phon,
            pitch_ids: pitch,
            embedded: e,
            blocks: tapes,
            last: x,
        });
        Ok((out, tape))
    }

    /// Mel prediction for a batch of segments, stacked as `(B * L) x d_mel`.
    pub fn forward(&self, segments: &[SegmentIds], mode: Mode, key: DropoutKey) -> Result<Matrix> {
        self.run(segments, mode, key, false).map(|r| r.0)
    }

    /// Eval-mode forward.
    pub fn predict(&self, segments: &[SegmentIds]) -> Result<Matrix> {
        self.forward(segments, Mode::Eval, DropoutKey::default())
    }

    pub fn forward_with_tape(&self, segments: &[SegmentIds], mode: Mode, key: DropoutKey) -> Result<(Matrix, Tape)> {
        let (y, tape) = self.run(segments, mode, key, true)?;
        Ok((y, tape.expect("recorded")))
    }

    /// Accumulates parameter gradients for output gradient `dy`.
    pub fn backward(&mut self, tape: Tape, dy: &Matrix) -> Result<()> {
        let seq_len = self.config.seq_len;
        let mut dx = linear_backward(
            &tape.last,
            &self.output_w.value,
            dy,
            &mut self.output_w.grad,
            self.output_b.grad.data_mut(),
        )?;
        for (block, bt) in self.blocks.iter_mut().zip(tape.blocks).rev() {
            if let (Some(t), Some((ln2, ff))) = (block.token.as_mut(), bt.token.as_ref()) {
                let dbranch = transpose_blocks(&dx, seq_len);
                let dt = feedforward_backward(ff, &mut t.w1, &mut t.b1, &mut t.w2, &mut t.b2, &dbranch)?;
                let dn = transpose_blocks(&dt, dx.cols());
                let d = layernorm_backward(
                    ln2,
                    t.ln_gamma.value.data(),
                    &dn,
                    t.ln_gamma.grad.data_mut(),
                    t.ln_beta.grad.data_mut(),
                )?;
                dx.add_assign(&d)?;
            }
            let dn = feedforward_backward(
                &bt.channel,
                &mut block.w1,
                &mut block.b1,
                &mut block.w2,
                &mut block.b2,
                &dx,
            )?;
            let d = layernorm_backward(
                &bt.ln1,
                block.ln_gamma.value.data(),
                &dn,
                block.ln_gamma.grad.data_mut(),
                block.ln_beta.grad.data_mut(),
            )?;
            dx.add_assign(&d)?;
        }
        let de = linear_backward(
            &tape.embedded,
            &self.input_w.value,
            &dx,
            &mut self.input_w.grad,
            self.input_b.grad.data_mut(),
        )?;
        let dc = self.config.d_phoneme;
        let dec = Matrix::from_fn(de.rows(), dc, |r, c| de.get(r, c));
        let dep = Matrix::from_fn(de.rows(), de.cols() - dc, |r, c| de.get(r, dc + c));
        embed_backward(&tape.phoneme_ids, &dec, &mut self.phoneme_embed.grad);
        embed_backward(&tape.pitch_ids, &dep, &mut self.pitch_embed.grad);
        Ok(())
    }
}

#[cfg(test)]
pub(super) fn transpose_blocks_for_test(x: &Matrix, block: usize) -> Matrix {
    transpose_blocks(x, block)
}
