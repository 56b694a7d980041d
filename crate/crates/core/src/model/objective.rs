use super::{DropoutKey, ModelParams, SegmentIds};
use crate::error::Result;
use crate::numerics::gradcheck::Objective;
use crate::numerics::loss::{l1_loss_backward, l1_loss_f64};
use crate::numerics::{Matrix, Mode, Param};

/// Masked L1 of the model on a fixed batch, for finite-difference checks.
/// Dropout masks are pinned by `key`, so train mode is deterministic too.
pub struct SegmentObjective {
    pub params: ModelParams,
    pub segments: Vec<SegmentIds>,
    /// Stacked `(B * L) x d_mel` targets.
    pub target: Matrix,
    pub mask: Option<Vec<bool>>,
    pub mode: Mode,
    pub key: DropoutKey,
}

impl Objective for SegmentObjective {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for p in self.params.tensors_mut() {
            f(p);
        }
    }

    fn loss(&mut self) -> Result<f64> {
        let y = self.params.forward(&self.segments, self.mode, self.key)?;
        l1_loss_f64(&y, &self.target, self.mask.as_deref())
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        self.params.zero_grad();
        let (y, tape) = self.params.forward_with_tape(&self.segments, self.mode, self.key)?;
        let loss = l1_loss_f64(&y, &self.target, self.mask.as_deref())?;
        let dy = l1_loss_backward(&y, &self.target, self.mask.as_deref())?;
        self.params.backward(tape, &dy)?;
        Ok(loss)
    }
}
