//! Dense double-precision reference of the encrypted training loop.
//!
//! Mirrors [`EncryptedMlp`](super::EncryptedMlp) operation by operation on
//! raw arrays. Only the summation order inside matrix products differs.

use crate::error::{HeError, Result};
use crate::nn::block::Derivative;
use crate::nn::model::{argmax, init_weights, BlockWeights, Hyperparams, TrainOptions};
use crate::packing::{Architecture, Matrix};

#[derive(Clone, Debug)]
struct Velocity {
    layer: Matrix,
    classifier: Matrix,
}

#[derive(Clone, Debug)]
pub struct ShadowMlp {
    pub arch: Architecture,
    pub hyper: Hyperparams,
    pub options: TrainOptions,
    pub weights: Vec<BlockWeights>,
    velocities: Vec<Option<Velocity>>,
    pending: Vec<Option<Matrix>>,
    pub iteration: u64,
}

struct Trace {
    input: Vec<f64>,
    z: Vec<f64>,
    a: Vec<f64>,
    y_hat: Vec<f64>,
}

fn outer(u: &[f64], v: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(u.len(), v.len());
    for (i, &x) in u.iter().enumerate() {
        for (j, &y) in v.iter().enumerate() {
            m.set(i, j, x * y);
        }
    }
    m
}

fn add_into(acc: &mut Matrix, g: &Matrix) {
    for (a, b) in acc.data.iter_mut().zip(&g.data) {
        *a += b;
    }
}

impl ShadowMlp {
    pub fn new(arch: Architecture, hyper: Hyperparams, options: TrainOptions) -> Result<Self> {
        let weights = init_weights(&arch, hyper.seed);
        Self::from_weights(arch, weights, hyper, options)
    }

    pub fn from_weights(
        arch: Architecture,
        weights: Vec<BlockWeights>,
        hyper: Hyperparams,
        options: TrainOptions,
    ) -> Result<Self> {
        hyper.validate()?;
        if weights.len() != arch.blocks() {
            return Err(HeError::Dimension("one weight set per block required".into()));
        }
        let h = weights.len();
        Ok(Self {
            arch,
            hyper,
            options,
            weights,
            velocities: vec![None; h],
            pending: vec![None; h],
            iteration: 0,
        })
    }

    fn forward_block(w: &BlockWeights, input: &[f64]) -> Trace {
        let z = w.layer.vec_mul(input);
        let a: Vec<f64> = z.iter().map(|z| z * z + z).collect();
        let y_hat = w.classifier.vec_mul(&a);
        Trace {
            input: input.to_vec(),
            z,
            a,
            y_hat,
        }
    }

    fn backward_block(w: &BlockWeights, tr: &Trace, label: &[f64], derivative: Derivative) -> (Matrix, Matrix) {
        let grad: Vec<f64> = tr.y_hat.iter().zip(label).map(|(p, y)| p - y).collect();
        let d_classifier = outer(&tr.a, &grad);
        let d_act = w.classifier.transpose().vec_mul(&grad);
        let d_layer = match derivative {
            Derivative::ChainRule => {
                let mut m = Matrix::zeros(tr.input.len(), tr.z.len());
                for (i, &x) in tr.input.iter().enumerate() {
                    for (j, (&z, &da)) in tr.z.iter().zip(&d_act).enumerate() {
                        m.set(i, j, (x * ((z + z) + 1.0)) * da);
                    }
                }
                m
            }
            Derivative::Literal => {
                let dz: Vec<f64> = d_act.iter().map(|da| (da + da) + 1.0).collect();
                outer(&tr.input, &dz)
            }
        };
        (d_layer, d_classifier)
    }

    /// One batch of `(features, label)` pairs.
    pub fn train_iteration(&mut self, batch: &[(&[f64], usize)]) -> Result<()> {
        if batch.is_empty() {
            return Err(HeError::InvalidParams("empty batch".into()));
        }
        let o = self.arch.classes;
        let mut sums: Vec<Option<(Matrix, Matrix)>> = vec![None; self.weights.len()];
        for &(x, label) in batch {
            if label >= o {
                return Err(HeError::Dimension(format!("label {label} outside {o} classes")));
            }
            let onehot: Vec<f64> = (0..o).map(|i| if i == label { 1.0 } else { 0.0 }).collect();
            let mut a = x.to_vec();
            for (w, sum) in self.weights.iter().zip(sums.iter_mut()) {
                let tr = Self::forward_block(w, &a);
                let (dw, dc) = Self::backward_block(w, &tr, &onehot, self.options.derivative);
                match sum {
                    None => *sum = Some((dw, dc)),
                    Some((aw, ac)) => {
                        add_into(aw, &dw);
                        add_into(ac, &dc);
                    }
                }
                a = tr.a;
            }
        }

        let t = self.iteration + 1;
        let rule = self.hyper.rule();
        for h in 0..self.weights.len() {
            let (dw, mut dc) = sums[h].take().expect("non-empty batch");
            if self.options.delayed_classifier_gradient {
                let previous = self.pending[h]
                    .take()
                    .unwrap_or_else(|| Matrix::zeros(dc.rows, dc.cols));
                self.pending[h] = Some(std::mem::replace(&mut dc, previous));
            }
            let prev = self.velocities[h].take();
            let w = &mut self.weights[h];
            let mut vl = Matrix::zeros(dw.rows, dw.cols);
            let mut vc = Matrix::zeros(dc.rows, dc.cols);
            for i in 0..w.layer.data.len() {
                let v = prev.as_ref().map(|p| p.layer.data[i]);
                (w.layer.data[i], vl.data[i]) = rule.apply_scalar(w.layer.data[i], v, dw.data[i], t);
            }
            for i in 0..w.classifier.data.len() {
                let v = prev.as_ref().map(|p| p.classifier.data[i]);
                (w.classifier.data[i], vc.data[i]) = rule.apply_scalar(w.classifier.data[i], v, dc.data[i], t);
            }
            self.velocities[h] = Some(Velocity {
                layer: vl,
                classifier: vc,
            });
        }
        self.iteration = t;
        Ok(())
    }

    pub fn head_values(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let (last, body) = self.weights.split_last().expect("at least one block");
        for w in body {
            a = Self::forward_block(w, &a).a;
        }
        Self::forward_block(last, &a).y_hat
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.head_values(x))
    }

    /// Argmax of every block's local head.
    pub fn block_predictions(&self, x: &[f64]) -> Vec<usize> {
        let mut a = x.to_vec();
        self.weights
            .iter()
            .map(|w| {
                let tr = Self::forward_block(w, &a);
                a = tr.a;
                argmax(&tr.y_hat)
            })
            .collect()
    }
}
