//! Metrics and precision-trace CSV rows.

use std::io::Write;

use hetrain::nn::BlockWeights;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Ceiling of the precision metric, the mantissa width of an f64.
pub const MAX_PRECISION_BITS: f64 = 52.0;

/// One row per block at every evaluation point. Accuracies are those of
/// the block's own local head; `epoch` is 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub epoch: u64,
    pub block: usize,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: f64,
    pub max_depth: usize,
    pub bootstrap_count: u64,
    pub precision_layer_bits: Option<f64>,
    pub precision_classifier_bits: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRow {
    pub iteration: u64,
    pub block: usize,
    pub bootstrap_count: u64,
    pub layer_bits: f64,
    pub classifier_bits: f64,
}

/// `-log2 max |a - b|`, clamped to `[0, 52]`.
pub fn precision_bits(a: &[f64], b: &[f64]) -> f64 {
    let worst = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    if worst == 0.0 {
        return MAX_PRECISION_BITS;
    }
    (-worst.log2()).clamp(0.0, MAX_PRECISION_BITS)
}

/// Per block: layer bits, classifier bits.
pub fn block_precision(decrypted: &[BlockWeights], shadow: &[BlockWeights]) -> Vec<(f64, f64)> {
    decrypted
        .iter()
        .zip(shadow)
        .map(|(d, s)| {
            (
                precision_bits(&d.layer.data, &s.layer.data),
                precision_bits(&d.classifier.data, &s.classifier.data),
            )
        })
        .collect()
}

pub fn write_csv<T: Serialize>(rows: &[T], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_metrics(r: impl std::io::Read) -> Result<Vec<MetricsRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(Into::into)
}
