use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::api::{Backend, Bootstrapper, Evaluator, KeyCustodian, PlainVector};
use crate::error::{HeError, Result};
use crate::linalg::PackedCipher;
use crate::nn::block::{packed_vector_dims, BlockGradients, Derivative, LocalLossBlock};
use crate::nn::update::{update_weights, UpdateRule};
use crate::packing::{
    compute_dims, pack_matrix, pack_vector, unpack_matrix, unpack_vector, Architecture, BlockKind, Format, GridShape,
    Matrix, Packed,
};

/// Momentum used throughout training.
pub const DEFAULT_MOMENTUM: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub decay: f64,
    pub momentum: f64,
    pub iterations: u64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(HeError::InvalidParams("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(HeError::InvalidParams("momentum must lie in [0, 1)".into()));
        }
        if !(self.decay >= 0.0) {
            return Err(HeError::InvalidParams("decay must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(HeError::InvalidParams("batch size must be at least 1".into()));
        }
        Ok(())
    }

    /// Update constants with the batch mean folded into the step.
    pub fn rule(&self) -> UpdateRule {
        UpdateRule {
            step: self.learning_rate / self.batch_size as f64,
            decay: self.decay,
            momentum: self.momentum,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub derivative: Derivative,
    /// Update each classifier with the previous iteration's gradient.
    pub delayed_classifier_gradient: bool,
}

/// Plain weights of one block: layer `d × k`, classifier `k × o`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockWeights {
    pub layer: Matrix,
    pub classifier: Matrix,
}

/// Seeded uniform `±√(1/fan_in)` initialization for every block.
pub fn init_weights(arch: &Architecture, seed: u64) -> Vec<BlockWeights> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |rows: usize, cols: usize| {
        let bound = (1.0 / rows as f64).sqrt();
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect(),
        }
    };
    (1..=arch.blocks())
        .map(|h| {
            let (d, k) = (arch.fan_in(h), arch.hidden[h - 1]);
            let layer = uniform(d, k);
            let classifier = uniform(k, arch.classes);
            BlockWeights { layer, classifier }
        })
        .collect()
}

/// One encrypted training sample. Labels are packed once per head format
/// the network needs.
pub struct EncryptedSample<B: Backend> {
    pub input: PackedCipher<B>,
    pub label_expanded: PackedCipher<B>,
    pub label_repeated: Option<PackedCipher<B>>,
}

impl<B: Backend> Clone for EncryptedSample<B> {
    fn clone(&self) -> Self {
        Self {
            input: self.input.clone(),
            label_expanded: self.label_expanded.clone(),
            label_repeated: self.label_repeated.clone(),
        }
    }
}

impl<B: Backend> EncryptedSample<B> {
    pub fn encrypt(
        custodian: &KeyCustodian<B>,
        arch: &Architecture,
        shape: GridShape,
        features: &[f64],
        label: usize,
    ) -> Result<Self> {
        if features.len() != arch.input {
            return Err(HeError::Dimension(format!(
                "sample has {} features, architecture expects {}",
                features.len(),
                arch.input
            )));
        }
        if label >= arch.classes {
            return Err(HeError::Dimension(format!(
                "label {label} outside {} classes",
                arch.classes
            )));
        }
        let onehot: Vec<f64> = (0..arch.classes).map(|i| if i == label { 1.0 } else { 0.0 }).collect();
        let enc = |v: &[f64], format: Format| -> Result<PackedCipher<B>> {
            let slots = pack_vector(v, format, shape)?;
            let pv = PlainVector {
                values: slots,
                scale_bits: custodian.params().scale_bits,
            };
            Ok(packed_vector_dims(shape, format, v.len(), custodian.encrypt(&pv)?))
        };
        Ok(Self {
            input: enc(features, Format::Expanded)?,
            label_expanded: enc(&onehot, Format::Expanded)?,
            label_repeated: if arch.blocks() >= 2 {
                Some(enc(&onehot, Format::Repeated)?)
            } else {
                None
            },
        })
    }

    /// Packs and encrypts the features alone, for inference.
    pub fn encrypt_input(
        custodian: &KeyCustodian<B>,
        arch: &Architecture,
        shape: GridShape,
        features: &[f64],
    ) -> Result<PackedCipher<B>> {
        if features.len() != arch.input {
            return Err(HeError::Dimension(format!(
                "sample has {} features, architecture expects {}",
                features.len(),
                arch.input
            )));
        }
        let pv = PlainVector {
            values: pack_vector(features, Format::Expanded, shape)?,
            scale_bits: custodian.params().scale_bits,
        };
        Ok(packed_vector_dims(
            shape,
            Format::Expanded,
            features.len(),
            custodian.encrypt(&pv)?,
        ))
    }

    fn label_for(&self, kind: BlockKind) -> Result<&PackedCipher<B>> {
        match kind.head_format() {
            Format::Expanded => Ok(&self.label_expanded),
            _ => self
                .label_repeated
                .as_ref()
                .ok_or_else(|| HeError::Format("sample lacks the repeated label packing".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u64,
    pub max_depth: usize,
    pub bootstraps: u64,
}

pub struct EncryptedMlp<B: Backend> {
    pub arch: Architecture,
    pub shape: GridShape,
    pub hyper: Hyperparams,
    pub options: TrainOptions,
    pub blocks: Vec<LocalLossBlock<B>>,
    /// Completed iterations.
    pub iteration: u64,
}

impl<B: Backend> EncryptedMlp<B> {
    /// Seeded initialization encrypted at the refresh level.
    pub fn new(
        custodian: &KeyCustodian<B>,
        arch: Architecture,
        hyper: Hyperparams,
        options: TrainOptions,
    ) -> Result<Self> {
        let shape = compute_dims(&arch, custodian.params().slot_count())?;
        let weights = init_weights(&arch, hyper.seed);
        Self::from_weights(custodian, arch, shape, &weights, hyper, options)
    }

    pub fn from_weights(
        custodian: &KeyCustodian<B>,
        arch: Architecture,
        shape: GridShape,
        weights: &[BlockWeights],
        hyper: Hyperparams,
        options: TrainOptions,
    ) -> Result<Self> {
        hyper.validate()?;
        if weights.len() != arch.blocks() {
            return Err(HeError::Dimension(format!(
                "{} weight sets for {} blocks",
                weights.len(),
                arch.blocks()
            )));
        }
        let level = custodian.params().refresh_level();
        let mut blocks = Vec::with_capacity(weights.len());
        for (h, w) in weights.iter().enumerate() {
            let kind = BlockKind::of(h + 1);
            let layer = encrypt_matrix(custodian, &w.layer, kind.layer_format(), shape, level)?;
            let classifier = encrypt_matrix(custodian, &w.classifier, kind.classifier_format(), shape, level)?;
            blocks.push(LocalLossBlock::new(kind, layer, classifier)?);
        }
        Ok(Self {
            arch,
            shape,
            hyper,
            options,
            blocks,
            iteration: 0,
        })
    }

    /// Forward, local backward and update of every block over one batch,
    /// followed by bootstrapping of all weights and velocities.
    pub fn train_iteration(
        &mut self,
        ev: &Evaluator<B>,
        boot: &dyn Bootstrapper<B>,
        batch: &[EncryptedSample<B>],
    ) -> Result<IterationStats> {
        if batch.is_empty() {
            return Err(HeError::InvalidParams("empty batch".into()));
        }
        ev.ledger().take_max_depth();
        let boots_before = ev.ledger().snapshot().bootstraps;

        let mut sums: Vec<Option<BlockGradients<B>>> = (0..self.blocks.len()).map(|_| None).collect();
        for sample in batch {
            let mut a = sample.input.clone();
            for (block, sum) in self.blocks.iter().zip(sums.iter_mut()) {
                let trace = block.forward(ev, &a)?;
                let g = block.backward(ev, &trace, sample.label_for(block.kind)?, self.options.derivative)?;
                *sum = Some(match sum.take() {
                    None => g,
                    Some(acc) => BlockGradients {
                        layer: acc.layer.with_payload(ev.add(&acc.layer.payload, &g.layer.payload)?),
                        classifier: acc
                            .classifier
                            .with_payload(ev.add(&acc.classifier.payload, &g.classifier.payload)?),
                    },
                });
                a = trace.output;
            }
        }

        let t = self.iteration + 1;
        let rule = self.hyper.rule();
        for (block, grads) in self.blocks.iter_mut().zip(sums) {
            let grads = grads.expect("non-empty batch yields gradients");
            let classifier_grad = if self.options.delayed_classifier_gradient {
                let current = boot.bootstrap(&grads.classifier.payload)?;
                let previous = match block.pending_classifier_grad.take() {
                    Some(p) => p.payload,
                    None => ev.sub(&current, &current)?,
                };
                block.pending_classifier_grad = Some(grads.classifier.with_payload(current));
                previous
            } else {
                grads.classifier.payload
            };
            let (w, v) = update_weights(
                ev,
                &block.layer.payload,
                block.layer_velocity.as_ref().map(|v| &v.payload),
                &grads.layer.payload,
                rule,
                t,
            )?;
            let (c, vc) = update_weights(
                ev,
                &block.classifier.payload,
                block.classifier_velocity.as_ref().map(|v| &v.payload),
                &classifier_grad,
                rule,
                t,
            )?;
            block.layer = block.layer.with_payload(boot.bootstrap(&w)?);
            block.layer_velocity = Some(block.layer.with_payload(boot.bootstrap(&v)?));
            block.classifier = block.classifier.with_payload(boot.bootstrap(&c)?);
            block.classifier_velocity = Some(block.classifier.with_payload(boot.bootstrap(&vc)?));
        }
        self.iteration = t;
        Ok(IterationStats {
            iteration: t,
            max_depth: ev.ledger().take_max_depth(),
            bootstraps: ev.ledger().snapshot().bootstraps - boots_before,
        })
    }

    /// Encrypted output of the final classifier.
    pub fn forward_head(&self, ev: &Evaluator<B>, input: &PackedCipher<B>) -> Result<PackedCipher<B>> {
        let mut a = input.clone();
        let (last, body) = self.blocks.split_last().expect("at least one block");
        for block in body {
            a = block.activate(ev, &a)?.1;
        }
        Ok(last.forward(ev, &a)?.prediction)
    }

    /// Decrypts the output head only and returns its logical slots.
    pub fn head_values(
        &self,
        ev: &Evaluator<B>,
        custodian: &KeyCustodian<B>,
        input: &PackedCipher<B>,
    ) -> Result<Vec<f64>> {
        let head = self.forward_head(ev, input)?;
        let slots = custodian.decrypt(&head.payload)?.values;
        unpack_vector(&slots, head.format, self.shape, self.arch.classes)
    }

    /// Argmax of every block's local head, first block first. Only the
    /// heads are decrypted.
    pub fn block_predictions(
        &self,
        ev: &Evaluator<B>,
        custodian: &KeyCustodian<B>,
        input: &PackedCipher<B>,
    ) -> Result<Vec<usize>> {
        let mut a = input.clone();
        let mut out = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let trace = block.forward(ev, &a)?;
            let slots = custodian.decrypt(&trace.prediction.payload)?.values;
            out.push(argmax(&unpack_vector(
                &slots,
                trace.prediction.format,
                self.shape,
                self.arch.classes,
            )?));
            a = trace.output;
        }
        Ok(out)
    }

    pub fn predict(&self, ev: &Evaluator<B>, custodian: &KeyCustodian<B>, input: &PackedCipher<B>) -> Result<usize> {
        Ok(argmax(&self.head_values(ev, custodian, input)?))
    }

    /// Custodian view of every block's layer and classifier weights.
    pub fn decrypt_weights(&self, custodian: &KeyCustodian<B>) -> Result<Vec<BlockWeights>> {
        self.blocks
            .iter()
            .map(|b| {
                Ok(BlockWeights {
                    layer: decrypt_matrix(custodian, &b.layer)?,
                    classifier: decrypt_matrix(custodian, &b.classifier)?,
                })
            })
            .collect()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn encrypt_matrix<B: Backend>(
    custodian: &KeyCustodian<B>,
    w: &Matrix,
    format: Format,
    shape: GridShape,
    level: usize,
) -> Result<PackedCipher<B>> {
    let pv = PlainVector {
        values: pack_matrix(w, format, shape)?,
        scale_bits: custodian.params().scale_bits,
    };
    Ok(Packed {
        shape,
        format,
        dims: w.dims(),
        payload: custodian.encrypt_at(&pv, level)?,
    })
}

pub fn decrypt_matrix<B: Backend>(custodian: &KeyCustodian<B>, m: &PackedCipher<B>) -> Result<Matrix> {
    let crate::packing::LogicalDims::Matrix { rows, cols } = m.dims else {
        return Err(HeError::Format("expected a packed matrix".into()));
    };
    let slots = custodian.decrypt(&m.payload)?.values;
    unpack_matrix(&slots, m.format, m.shape, rows, cols)
}
