//! Binary formats, all little-endian.
//!
//! Ciphertext `RBCT`: magic, u32 version, u32 N, u32 level, u32 nominal
//! scale bits, f64 exact scale, then `level + 1` residue planes of `c0`
//! followed by those of `c1`, N u64 words each, evaluation domain.
//!
//! Keys `RBKY`: magic, u32 version, u32 N, u32 chain level, u32 gadget
//! bits, the relinearization key, u32 rotation-key count, then per key a
//! u64 Galois element and the key. A key is a u64 seed for its uniform
//! halves, u32 digit count and `level + 2` planes per digit.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use hetrain::{HeError, Result};

use crate::context::CkksContext;
use crate::keys::{EvalKeys, KeySwitchKey};
use crate::rns::RnsPoly;
use crate::scheme::CkksCiphertext;

pub const CIPHER_MAGIC: &[u8; 4] = b"RBCT";
pub const KEY_MAGIC: &[u8; 4] = b"RBKY";
pub const VERSION: u32 = 1;

fn put_u32(w: &mut dyn Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64(w: &mut dyn Write, v: u64) -> Result<()> {
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

fn put_planes(w: &mut dyn Write, p: &RnsPoly) -> Result<()> {
    let mut buf = Vec::with_capacity(p.degree() * 8);
    for plane in &p.limbs {
        buf.clear();
        plane.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Reads planes and checks every residue against its prime.
fn get_planes(r: &mut dyn Read, ctx: &CkksContext, chain: &[usize]) -> Result<RnsPoly> {
    let n = ctx.n;
    let mut buf = vec![0u8; n * 8];
    let mut limbs = Vec::with_capacity(chain.len());
    for &idx in chain {
        r.read_exact(&mut buf)?;
        let q = ctx.tables[idx].modulus().value();
        let plane: Vec<u64> = buf
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if plane.iter().any(|&x| x >= q) {
            return Err(HeError::Malformed(format!("residue out of range for prime {idx}")));
        }
        limbs.push(plane);
    }
    Ok(RnsPoly { limbs, ntt: true })
}

fn check_header(r: &mut dyn Read, magic: &[u8; 4], ctx: &CkksContext) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(HeError::Malformed(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(HeError::Malformed(format!("unsupported version {version}")));
    }
    let n = get_u32(r)? as usize;
    if n != ctx.n {
        return Err(HeError::IncompatibleOperands(format!(
            "ring degree {n}, context has {}",
            ctx.n
        )));
    }
    Ok(())
}

pub fn write_ciphertext(ctx: &CkksContext, ct: &CkksCiphertext, w: &mut dyn Write) -> Result<()> {
    w.write_all(CIPHER_MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, ctx.n as u32)?;
    put_u32(w, ct.level as u32)?;
    put_u32(w, ctx.params.scale_bits)?;
    put_u64(w, ct.scale.to_bits())?;
    put_planes(w, &ct.c0)?;
    put_planes(w, &ct.c1)
}

pub fn read_ciphertext(ctx: &CkksContext, r: &mut dyn Read) -> Result<CkksCiphertext> {
    check_header(r, CIPHER_MAGIC, ctx)?;
    let level = get_u32(r)? as usize;
    if level > ctx.max_level() {
        return Err(HeError::Malformed(format!("level {level} above the chain")));
    }
    let _nominal = get_u32(r)?;
    let scale = f64::from_bits(get_u64(r)?);
    if !(scale.is_finite() && scale > 0.0) {
        return Err(HeError::Malformed(format!("bad scale {scale}")));
    }
    let chain: Vec<usize> = (0..=level).collect();
    let c0 = get_planes(r, ctx, &chain)?;
    let c1 = get_planes(r, ctx, &chain)?;
    Ok(CkksCiphertext { c0, c1, level, scale })
}

fn write_key(key: &KeySwitchKey, w: &mut dyn Write) -> Result<()> {
    put_u64(w, key.a_seed)?;
    put_u32(w, key.b.len() as u32)?;
    key.b.iter().try_for_each(|b| put_planes(w, b))
}

fn read_key(ctx: &CkksContext, r: &mut dyn Read) -> Result<KeySwitchKey> {
    let a_seed = get_u64(r)?;
    let digits = get_u32(r)? as usize;
    if digits != ctx.gadget.len() {
        return Err(HeError::Malformed(format!(
            "{digits} key digits, context needs {}",
            ctx.gadget.len()
        )));
    }
    let chain: Vec<usize> = (0..ctx.tables.len()).collect();
    let b = (0..digits).map(|_| get_planes(r, ctx, &chain)).collect::<Result<_>>()?;
    Ok(KeySwitchKey { b, a_seed })
}

pub fn write_eval_keys(ctx: &CkksContext, keys: &EvalKeys, w: &mut dyn Write) -> Result<()> {
    w.write_all(KEY_MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, ctx.n as u32)?;
    put_u32(w, ctx.max_level() as u32)?;
    put_u32(w, keys.gadget_bits)?;
    write_key(&keys.relin, w)?;
    put_u32(w, keys.rotations.len() as u32)?;
    for (&g, key) in &keys.rotations {
        put_u64(w, g as u64)?;
        write_key(key, w)?;
    }
    Ok(())
}

pub fn read_eval_keys(ctx: &CkksContext, r: &mut dyn Read) -> Result<EvalKeys> {
    check_header(r, KEY_MAGIC, ctx)?;
    let level = get_u32(r)? as usize;
    let gadget_bits = get_u32(r)?;
    if level != ctx.max_level() || gadget_bits != ctx.gadget_bits {
        return Err(HeError::IncompatibleOperands(format!(
            "keys for level {level} / base 2^{gadget_bits} do not match the context"
        )));
    }
    let relin = read_key(ctx, r)?;
    let count = get_u32(r)? as usize;
    let mut rotations = BTreeMap::new();
    for _ in 0..count {
        let g = get_u64(r)? as usize;
        if g.is_multiple_of(2) || g >= 2 * ctx.n {
            return Err(HeError::Malformed(format!("invalid Galois element {g}")));
        }
        rotations.insert(g, read_key(ctx, r)?);
    }
    Ok(EvalKeys {
        relin,
        rotations,
        gadget_bits,
    })
}
