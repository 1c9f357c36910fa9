//! Closed-form multiplicative depth per training iteration, checked
//! against a measured ledger trace.

use serde::{Deserialize, Serialize};

use crate::api::KeyCustodian;
use crate::error::{HeError, Result};
use crate::nn::model::{EncryptedMlp, EncryptedSample, Hyperparams, TrainOptions};
use crate::packing::{compute_dims, Architecture};
use crate::params::{SchemeParams, Security};
use crate::sim::SimBackend;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDepth {
    pub layer: usize,
    /// Cumulative depth of the block's activation.
    pub activation: usize,
    /// Forward depth up to the local prediction.
    pub forward: usize,
    pub backward: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthReport {
    pub blocks: usize,
    pub layers: Vec<LayerDepth>,
    pub per_iteration: usize,
    /// End-to-end backpropagation depth, audited analytically only.
    pub backprop: usize,
    /// Savings as given by the closed-form gap expression.
    pub savings: i64,
    /// Ledger high-water mark of a simulated iteration, if measured.
    pub measured: Option<usize>,
}

fn floor_2_5(h: usize) -> usize {
    5 * h / 2
}

/// `⌊2.5 h⌋`: depth of the activation leaving block `h`.
pub fn activation_depth(h: usize) -> usize {
    floor_2_5(h)
}

/// `⌊2.5 h⌋ + ⌊1.5 + (h mod 2)⌋`.
pub fn forward_depth(h: usize) -> usize {
    floor_2_5(h) + 1 + h % 2
}

/// `⌊4.5 + 1 − (h mod 2)⌋`.
pub fn backward_depth(h: usize) -> usize {
    5 - h % 2
}

pub fn iteration_depth(h: usize) -> usize {
    forward_depth(h) + backward_depth(h)
}

/// Forward depth plus `⌊2.5 H⌋ + 2` for gradients crossing every layer.
pub fn backprop_depth(h: usize) -> usize {
    forward_depth(h) + floor_2_5(h) + 2
}

/// `⌊2.5 H⌋ − 3 − (H mod 2)`.
pub fn depth_savings(h: usize) -> i64 {
    floor_2_5(h) as i64 - 3 - (h % 2) as i64
}

/// Closed-form report without a measured trace.
pub fn closed_form(h: usize) -> Result<DepthReport> {
    if h == 0 {
        return Err(HeError::InvalidParams("at least one block required".into()));
    }
    let layers = (1..=h)
        .map(|layer| LayerDepth {
            layer,
            activation: activation_depth(layer),
            forward: forward_depth(layer),
            backward: backward_depth(layer),
            total: iteration_depth(layer),
        })
        .collect();
    Ok(DepthReport {
        blocks: h,
        layers,
        per_iteration: iteration_depth(h),
        backprop: backprop_depth(h),
        savings: depth_savings(h),
        measured: None,
    })
}

/// Runs two simulated iterations of an `h`-block network with width-2
/// layers and returns the per-iteration ledger maxima.
pub fn measure(h: usize, options: TrainOptions) -> Result<Vec<usize>> {
    let arch = Architecture::new(2, vec![2; h], 2)?;
    let slots = 4;
    let level = iteration_depth(h) + 4;
    let params = SchemeParams::new(2 * slots, level, 40, 0, Security::InsecureTest)?;
    let shape = compute_dims(&arch, slots)?;
    let kc = KeyCustodian::generate(
        SimBackend::exact(params)?,
        &crate::packing::required_rotations(shape),
        0,
    )?;
    let ev = kc.evaluator();
    let hyper = Hyperparams {
        learning_rate: 0.01,
        decay: 0.0,
        momentum: 0.9,
        iterations: 2,
        batch_size: 2,
        seed: 0,
    };
    let mut model = EncryptedMlp::new(&kc, arch.clone(), hyper, options)?;
    let batch = vec![
        EncryptedSample::encrypt(&kc, &arch, shape, &[0.25, 0.5], 0)?,
        EncryptedSample::encrypt(&kc, &arch, shape, &[0.75, 0.1], 1)?,
    ];
    (0..2)
        .map(|_| Ok(model.train_iteration(&ev, &kc, &batch)?.max_depth))
        .collect()
}

/// Closed form plus a measured dry run.
pub fn depth_audit(h: usize) -> Result<DepthReport> {
    let mut report = closed_form(h)?;
    let trace = measure(h, TrainOptions::default())?;
    report.measured = trace.into_iter().max();
    Ok(report)
}
