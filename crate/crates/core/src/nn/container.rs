//! RBOT model container.
//!
//! Layout (little-endian): magic `RBOT`, u32 version, u32 rows, u32 cols,
//! 32-byte parameter digest, u32 length + JSON metadata (architecture,
//! hyperparameters, options, iteration), u32 block count, then per block
//! five optional ciphertext slots (layer, classifier, their velocities,
//! pending classifier gradient), each as u8 present flag, u32 level,
//! u64 length and the backend's ciphertext bytes.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::api::{Backend, Evaluator};
use crate::error::{HeError, Result};
use crate::linalg::PackedCipher;
use crate::nn::block::LocalLossBlock;
use crate::nn::model::{EncryptedMlp, Hyperparams, TrainOptions};
use crate::packing::{Architecture, BlockKind, GridShape};

pub const MAGIC: &[u8; 4] = b"RBOT";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    arch: Architecture,
    hyper: Hyperparams,
    options: TrainOptions,
    iteration: u64,
}

fn put_u32(w: &mut dyn Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut dyn Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut dyn Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn put_slot<B: Backend>(ev: &Evaluator<B>, w: &mut dyn Write, slot: Option<&PackedCipher<B>>) -> Result<()> {
    let Some(p) = slot else {
        w.write_all(&[0])?;
        return Ok(());
    };
    let mut blob = Vec::new();
    ev.write_cipher(&p.payload, &mut blob)?;
    w.write_all(&[1])?;
    put_u32(w, p.payload.level() as u32)?;
    w.write_all(&(blob.len() as u64).to_le_bytes())?;
    w.write_all(&blob)?;
    Ok(())
}

fn get_slot<B: Backend>(ev: &Evaluator<B>, r: &mut dyn Read) -> Result<Option<crate::api::CipherVector<B>>> {
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    match flag[0] {
        0 => Ok(None),
        1 => {
            let level = get_u32(r)? as usize;
            let len = get_u64(r)?;
            let mut blob = Vec::new();
            r.take(len).read_to_end(&mut blob)?;
            if blob.len() as u64 != len {
                return Err(HeError::Malformed("truncated ciphertext blob".into()));
            }
            Ok(Some(ev.read_cipher(&mut blob.as_slice(), level)?))
        }
        other => Err(HeError::Malformed(format!("bad slot flag {other}"))),
    }
}

pub fn save<B: Backend>(model: &EncryptedMlp<B>, ev: &Evaluator<B>, w: &mut dyn Write) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, model.shape.rows as u32)?;
    put_u32(w, model.shape.cols as u32)?;
    w.write_all(&ev.params().digest())?;
    let meta = serde_json::to_vec(&Meta {
        arch: model.arch.clone(),
        hyper: model.hyper.clone(),
        options: model.options,
        iteration: model.iteration,
    })
    .map_err(|e| HeError::Malformed(e.to_string()))?;
    put_u32(w, meta.len() as u32)?;
    w.write_all(&meta)?;
    put_u32(w, model.blocks.len() as u32)?;
    for b in &model.blocks {
        put_slot(ev, w, Some(&b.layer))?;
        put_slot(ev, w, Some(&b.classifier))?;
        put_slot(ev, w, b.layer_velocity.as_ref())?;
        put_slot(ev, w, b.classifier_velocity.as_ref())?;
        put_slot(ev, w, b.pending_classifier_grad.as_ref())?;
    }
    Ok(())
}

pub fn load<B: Backend>(ev: &Evaluator<B>, r: &mut dyn Read) -> Result<EncryptedMlp<B>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(HeError::Malformed("bad RBOT magic".into()));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(HeError::Malformed(format!("unsupported RBOT version {version}")));
    }
    let rows = get_u32(r)? as usize;
    let cols = get_u32(r)? as usize;
    let shape = GridShape::new(rows, cols, ev.slots())?;
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest)?;
    if digest != ev.params().digest() {
        return Err(HeError::IncompatibleOperands(
            "model was saved under different scheme parameters".into(),
        ));
    }
    let len = get_u32(r)? as usize;
    let mut meta = vec![0u8; len];
    r.read_exact(&mut meta)?;
    let meta: Meta = serde_json::from_slice(&meta).map_err(|e| HeError::Malformed(e.to_string()))?;
    let count = get_u32(r)? as usize;
    if count != meta.arch.blocks() {
        return Err(HeError::Malformed(format!(
            "{count} blocks stored for a {}-block architecture",
            meta.arch.blocks()
        )));
    }
    let mut blocks = Vec::with_capacity(count);
    for h in 1..=count {
        let kind = BlockKind::of(h);
        let (d, k, o) = (meta.arch.fan_in(h), meta.arch.hidden[h - 1], meta.arch.classes);
        let pack = |payload, format, rows, cols| PackedCipher::<B> {
            shape,
            format,
            dims: crate::packing::LogicalDims::Matrix { rows, cols },
            payload,
        };
        let need = |c: Option<_>| c.ok_or_else(|| HeError::Malformed("missing weight ciphertext".into()));
        let layer = pack(need(get_slot(ev, r)?)?, kind.layer_format(), d, k);
        let classifier = pack(need(get_slot(ev, r)?)?, kind.classifier_format(), k, o);
        let mut block = LocalLossBlock::new(kind, layer, classifier)?;
        block.layer_velocity = get_slot(ev, r)?.map(|c| pack(c, kind.layer_format(), d, k));
        block.classifier_velocity = get_slot(ev, r)?.map(|c| pack(c, kind.classifier_format(), k, o));
        block.pending_classifier_grad = get_slot(ev, r)?.map(|c| pack(c, kind.classifier_format(), k, o));
        blocks.push(block);
    }
    Ok(EncryptedMlp {
        arch: meta.arch,
        shape,
        hyper: meta.hyper,
        options: meta.options,
        blocks,
        iteration: meta.iteration,
    })
}
