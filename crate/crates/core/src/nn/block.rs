//! One local-loss block: a packed layer, its quadratic activation and a
//! private linear classifier trained on the block's own residual.
//!
//! RE blocks take expanded activations and emit repeated ones; CE blocks
//! do the opposite, so consecutive blocks chain without repacking.

use serde::{Deserialize, Serialize};

use crate::api::{Backend, Evaluator, PlainVector};
use crate::error::{HeError, Result};
use crate::linalg::{ce_matmul, re_matmul, PackedCipher};
use crate::nn::activation::{loss_gradient, poly_relu};
use crate::packing::{pack_vector, BlockKind, GridShape, LogicalDims, Packed};

/// How the activation derivative enters the layer gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Derivative {
    /// `δZ = δA ⊙ (2Z + 1)`.
    #[default]
    ChainRule,
    /// `δZ = 1 + 2δA`, without the pre-activation.
    Literal,
}

pub struct LocalLossBlock<B: Backend> {
    pub kind: BlockKind,
    pub fan_in: usize,
    pub width: usize,
    pub classes: usize,
    pub layer: PackedCipher<B>,
    pub classifier: PackedCipher<B>,
    pub layer_velocity: Option<PackedCipher<B>>,
    pub classifier_velocity: Option<PackedCipher<B>>,
    /// Classifier gradient held back one iteration (delayed variant only).
    pub pending_classifier_grad: Option<PackedCipher<B>>,
    /// Ones over the block's `width` logical slots in its output format.
    unit: PlainVector,
}

impl<B: Backend> Clone for LocalLossBlock<B> {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind,
            fan_in: self.fan_in,
            width: self.width,
            classes: self.classes,
            layer: self.layer.clone(),
            classifier: self.classifier.clone(),
            layer_velocity: self.layer_velocity.clone(),
            classifier_velocity: self.classifier_velocity.clone(),
            pending_classifier_grad: self.pending_classifier_grad.clone(),
            unit: self.unit.clone(),
        }
    }
}

/// Forward intermediates kept for the backward pass.
pub struct ForwardTrace<B: Backend> {
    pub input: PackedCipher<B>,
    pub pre_activation: PackedCipher<B>,
    pub output: PackedCipher<B>,
    pub prediction: PackedCipher<B>,
}

pub struct BlockGradients<B: Backend> {
    pub layer: PackedCipher<B>,
    pub classifier: PackedCipher<B>,
}

impl<B: Backend> LocalLossBlock<B> {
    pub fn new(kind: BlockKind, layer: PackedCipher<B>, classifier: PackedCipher<B>) -> Result<Self> {
        let (LogicalDims::Matrix { rows: d, cols: k }, LogicalDims::Matrix { rows: k2, cols: o }) =
            (layer.dims, classifier.dims)
        else {
            return Err(HeError::Format("block weights must be matrices".into()));
        };
        if k != k2 {
            return Err(HeError::Dimension(format!(
                "layer width {k} does not match classifier input {k2}"
            )));
        }
        if layer.format != kind.layer_format() || classifier.format != kind.classifier_format() {
            return Err(HeError::Format(format!(
                "{kind:?} block needs {:?}/{:?} weights",
                kind.layer_format(),
                kind.classifier_format()
            )));
        }
        let unit = unit_vector(kind, k, layer.shape)?;
        Ok(Self {
            kind,
            fan_in: d,
            width: k,
            classes: o,
            layer,
            classifier,
            layer_velocity: None,
            classifier_velocity: None,
            pending_classifier_grad: None,
            unit,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.layer.shape
    }

    fn layer_matmul(&self, ev: &Evaluator<B>, a: &PackedCipher<B>, w: &PackedCipher<B>) -> Result<PackedCipher<B>> {
        match self.kind {
            BlockKind::Re => re_matmul(ev, a, w),
            BlockKind::Ce => ce_matmul(ev, a, w),
        }
    }

    fn classifier_matmul(
        &self,
        ev: &Evaluator<B>,
        a: &PackedCipher<B>,
        w: &PackedCipher<B>,
    ) -> Result<PackedCipher<B>> {
        match self.kind {
            BlockKind::Re => ce_matmul(ev, a, w),
            BlockKind::Ce => re_matmul(ev, a, w),
        }
    }

    /// Activation only; skips the local classifier.
    pub fn activate(&self, ev: &Evaluator<B>, input: &PackedCipher<B>) -> Result<(PackedCipher<B>, PackedCipher<B>)> {
        if input.format != self.kind.input_format() {
            return Err(HeError::Format(format!(
                "{:?} block expects {:?} input, got {:?}",
                self.kind,
                self.kind.input_format(),
                input.format
            )));
        }
        let z = self.layer_matmul(ev, input, &self.layer)?;
        let a = poly_relu(ev, &z)?;
        Ok((z, a))
    }

    pub fn forward(&self, ev: &Evaluator<B>, input: &PackedCipher<B>) -> Result<ForwardTrace<B>> {
        let (z, a) = self.activate(ev, input)?;
        let y_hat = self.classifier_matmul(ev, &a, &self.classifier)?;
        Ok(ForwardTrace {
            input: input.clone(),
            pre_activation: z,
            output: a,
            prediction: y_hat,
        })
    }

    /// Local-loss gradients for one sample. `label` must be packed in the
    /// block's head format.
    pub fn backward(
        &self,
        ev: &Evaluator<B>,
        trace: &ForwardTrace<B>,
        label: &PackedCipher<B>,
        derivative: Derivative,
    ) -> Result<BlockGradients<B>> {
        let grad = loss_gradient(ev, &trace.prediction, label)?;
        let classifier = self
            .classifier
            .with_payload(ev.mul(&trace.output.payload, &grad.payload)?);
        let transposed = self.classifier.clone().transposed_view()?;
        let d_act = self.layer_matmul(ev, &grad, &transposed)?;
        let layer_grad = match derivative {
            Derivative::ChainRule => {
                // a ⊙ (2Z + 1) only depends on the forward pass.
                let z = &trace.pre_activation.payload;
                let slope = ev.add_plain(&ev.add(z, z)?, &self.unit)?;
                let scaled_input = ev.mul(&trace.input.payload, &slope)?;
                ev.mul(&scaled_input, &d_act.payload)?
            }
            Derivative::Literal => {
                let da = &d_act.payload;
                let dz = ev.add_plain(&ev.add(da, da)?, &self.unit)?;
                ev.mul(&trace.input.payload, &dz)?
            }
        };
        Ok(BlockGradients {
            layer: self.layer.with_payload(layer_grad),
            classifier,
        })
    }
}

fn unit_vector(kind: BlockKind, width: usize, shape: GridShape) -> Result<PlainVector> {
    let values = pack_vector(&vec![1.0; width], kind.output_format(), shape)?;
    Ok(PlainVector { values, scale_bits: 0 })
}

/// Packs `values` as an encryptable payload in `format`.
pub(crate) fn packed_vector_dims<T>(
    shape: GridShape,
    format: crate::packing::Format,
    len: usize,
    payload: T,
) -> Packed<T> {
    Packed {
        shape,
        format,
        dims: LogicalDims::Vector(len),
        payload,
    }
}
