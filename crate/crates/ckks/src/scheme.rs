//! Leveled CKKS over the RNS chain, implementing [`hetrain::Backend`].
//!
//! Every ciphertext at level `ℓ` carries a scale within about `2^-38`
//! of the canonical `S_ℓ`. Products of two canonical inputs rescale onto
//! `S_{ℓ-1}` exactly, plaintext multiplies pick the plaintext scale that
//! lands on it, and operands at different levels are aligned by an
//! integer-constant multiply followed by a rescale.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::sync::Arc;

use hetrain::api::splitmix64;
use hetrain::{Backend, BackendId, HeError, Plain, Result, SchemeParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::context::{CkksContext, DEFAULT_GADGET_BITS};
use crate::keys::{sample_error, sample_uniform, EvalKeys, SecretKey};
use crate::ntt::NttTable;
use crate::rns::RnsPoly;
use crate::serialize;

/// Largest plaintext coefficient accepted by the encoder, relative to the
/// base prime: decrypted values must stay below `q_0 / 2`.
const HEADROOM_BITS: u32 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct CkksCiphertext {
    pub(crate) c0: RnsPoly,
    pub(crate) c1: RnsPoly,
    pub(crate) level: usize,
    pub(crate) scale: f64,
}

impl CkksCiphertext {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CkksConfig {
    pub gadget_bits: u32,
    /// Half-width of the uniform perturbation added by the debug
    /// bootstrap; 0 disables it.
    pub bootstrap_error: f64,
}

impl Default for CkksConfig {
    fn default() -> Self {
        CkksConfig {
            gadget_bits: DEFAULT_GADGET_BITS,
            bootstrap_error: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CkksBackend {
    ctx: Arc<CkksContext>,
    config: CkksConfig,
}

impl CkksBackend {
    pub fn new(params: SchemeParams, config: CkksConfig) -> Result<Self> {
        if !(config.bootstrap_error >= 0.0 && config.bootstrap_error.is_finite()) {
            return Err(HeError::InvalidParams(format!(
                "bootstrap error {} must be finite and non-negative",
                config.bootstrap_error
            )));
        }
        Ok(CkksBackend {
            ctx: Arc::new(CkksContext::new(params, config.gadget_bits)?),
            config,
        })
    }

    pub fn context(&self) -> &CkksContext {
        &self.ctx
    }

    pub fn config(&self) -> CkksConfig {
        self.config
    }

    /// Residues of a rounded plaintext coefficient vector at `level`.
    fn coeffs_to_rns(&self, coeffs: &[f64], level: usize) -> Result<RnsPoly> {
        let q0 = self.ctx.tables[0].modulus();
        let limit = 2f64.powi((q0.bits() - HEADROOM_BITS) as i32);
        let tables = self.ctx.level_tables(level);
        let mut rounded = Vec::with_capacity(coeffs.len());
        for &c in coeffs {
            if !c.is_finite() || c.abs() >= limit {
                return Err(HeError::Overflow(format!(
                    "scaled plaintext coefficient {c:e} exceeds 2^{}",
                    q0.bits() - HEADROOM_BITS
                )));
            }
            rounded.push(c.round() as i64);
        }
        let mut p = RnsPoly::from_signed(&rounded, &tables);
        p.to_ntt(&tables);
        Ok(p)
    }

    fn encode(&self, values: &[f64], scale: f64, level: usize) -> Result<RnsPoly> {
        let slots = self.ctx.encoder.slots();
        if values.len() > slots {
            return Err(HeError::LengthMismatch {
                expected: slots,
                actual: values.len(),
            });
        }
        let coeffs = self.ctx.encoder.encode(values, scale);
        self.coeffs_to_rns(&coeffs, level)
    }

    /// Residues of `round(x)` on every prime of `level`.
    fn constant_residues(&self, x: f64, level: usize) -> Result<Vec<u64>> {
        let q0 = self.ctx.tables[0].modulus();
        if !x.is_finite() || x.abs() >= 2f64.powi((q0.bits() - HEADROOM_BITS) as i32) {
            return Err(HeError::Overflow(format!("scaled constant {x:e} too large")));
        }
        let r = x.round() as i64;
        Ok(self.ctx.tables[..=level]
            .iter()
            .map(|t| t.modulus().from_i64(r))
            .collect())
    }

    fn encrypt_poly(&self, sk: &SecretKey, m: RnsPoly, level: usize, scale: f64, nonce: u64) -> CkksCiphertext {
        let tables = self.ctx.level_tables(level);
        let mut rng = ChaCha20Rng::seed_from_u64(splitmix64(sk.enc_seed ^ splitmix64(nonce)));
        let a = sample_uniform(&mut rng, self.ctx.n, &tables);
        let mut c0 = RnsPoly::from_signed(&sample_error(&mut rng, self.ctx.n), &tables);
        c0.to_ntt(&tables);
        c0.add_assign(&m, &tables);
        let mut as_ = a.clone();
        let mut s = sk.ntt.clone();
        s.limbs.truncate(level + 1);
        as_.mul_assign(&s, &tables);
        c0.sub_assign(&as_, &tables);
        CkksCiphertext {
            c0,
            c1: a,
            level,
            scale,
        }
    }

    /// Drops planes above `level` without touching the scale.
    fn truncated(a: &CkksCiphertext, level: usize) -> CkksCiphertext {
        let mut out = a.clone();
        out.c0.limbs.truncate(level + 1);
        out.c1.limbs.truncate(level + 1);
        out.level = level;
        out
    }

    /// Brings `a` down to `level < a.level` with scale `target`.
    fn align(&self, a: &CkksCiphertext, level: usize, target: f64) -> Result<CkksCiphertext> {
        debug_assert!(level < a.level);
        let mut t = Self::truncated(a, level + 1);
        let q = self.ctx.tables[level + 1].modulus().value() as f64;
        let c = (target * q / a.scale).round();
        let residues = self.constant_residues(c, level + 1)?;
        let tables = self.ctx.level_tables(level + 1);
        t.c0.mul_residues(&residues, &tables);
        t.c1.mul_residues(&residues, &tables);
        self.ctx.rescale(&mut t.c0, level + 1);
        self.ctx.rescale(&mut t.c1, level + 1);
        t.level = level;
        t.scale = a.scale * c / q;
        Ok(t)
    }

    fn same_level(&self, a: &CkksCiphertext, b: &CkksCiphertext) -> Result<(CkksCiphertext, CkksCiphertext)> {
        use std::cmp::Ordering;
        match a.level.cmp(&b.level) {
            Ordering::Equal => Ok((a.clone(), b.clone())),
            Ordering::Greater => Ok((self.align(a, b.level, b.scale)?, b.clone())),
            Ordering::Less => Ok((a.clone(), self.align(b, a.level, a.scale)?)),
        }
    }

    fn combine(&self, a: &CkksCiphertext, b: &CkksCiphertext, subtract: bool) -> Result<CkksCiphertext> {
        let (mut x, y) = self.same_level(a, b)?;
        let tables = self.ctx.level_tables(x.level);
        if subtract {
            x.c0.sub_assign(&y.c0, &tables);
            x.c1.sub_assign(&y.c1, &tables);
        } else {
            x.c0.add_assign(&y.c0, &tables);
            x.c1.add_assign(&y.c1, &tables);
        }
        Ok(x)
    }

    fn plain_offset(&self, a: &CkksCiphertext, p: Plain<'_>, subtract: bool) -> Result<CkksCiphertext> {
        let mut out = a.clone();
        let tables = self.ctx.level_tables(a.level);
        let sign = if subtract { -1.0 } else { 1.0 };
        match constant_of(p) {
            Some(c) => {
                let r = self.constant_residues(sign * c * a.scale, a.level)?;
                out.c0.add_residues(&r, &tables);
            }
            None => {
                let Plain::Slots(v) = p else { unreachable!() };
                let m = self.encode(v, sign * a.scale, a.level)?;
                out.c0.add_assign(&m, &tables);
            }
        }
        Ok(out)
    }

    fn exhausted() -> HeError {
        HeError::LevelExhausted {
            needed: 1,
            available: 0,
        }
    }
}

/// The common value of a plaintext that is constant across all slots.
fn constant_of(p: Plain<'_>) -> Option<f64> {
    match p {
        Plain::Scalar(c) => Some(c),
        Plain::Slots([]) => Some(0.0),
        Plain::Slots(v) => v.iter().all(|x| *x == v[0]).then_some(v[0]),
    }
}

impl Backend for CkksBackend {
    type Cipher = CkksCiphertext;
    type Secret = SecretKey;
    type Eval = EvalKeys;

    fn id(&self) -> BackendId {
        BackendId::Ckks
    }

    fn params(&self) -> &SchemeParams {
        &self.ctx.params
    }

    fn keygen(&self, rotations: &BTreeSet<usize>, seed: u64) -> Result<(SecretKey, EvalKeys)> {
        let slots = self.ctx.encoder.slots();
        if let Some(bad) = rotations.iter().find(|&&k| k == 0 || k >= slots) {
            return Err(HeError::InvalidParams(format!(
                "rotation step {bad} outside 1..{slots}"
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sk = SecretKey::generate(&self.ctx, &mut rng);
        let galois: Vec<usize> = rotations.iter().map(|&k| self.ctx.encoder.galois_element(k)).collect();
        let ek = EvalKeys::generate(&self.ctx, &sk, &galois, &mut rng);
        Ok((sk, ek))
    }

    fn encrypt(&self, sk: &SecretKey, values: &[f64], level: usize, nonce: u64) -> Result<CkksCiphertext> {
        if level > self.ctx.max_level() {
            return Err(HeError::InvalidParams(format!("level {level} above the chain")));
        }
        let scale = self.ctx.scale(level);
        let m = self.encode(values, scale, level)?;
        Ok(self.encrypt_poly(sk, m, level, scale, nonce))
    }

    fn decrypt(&self, sk: &SecretKey, ct: &CkksCiphertext) -> Result<Vec<f64>> {
        let t = &self.ctx.tables[0];
        let q = t.modulus();
        let mut m = ct.c1.limbs[0].clone();
        for ((x, &s), &c0) in m.iter_mut().zip(&sk.ntt.limbs[0]).zip(&ct.c0.limbs[0]) {
            *x = q.add(q.mul(*x, s), c0);
        }
        t.inverse(&mut m);
        let coeffs: Vec<f64> = m.iter().map(|&x| q.center(x) as f64).collect();
        Ok(self.ctx.encoder.decode(&coeffs, ct.scale))
    }

    fn add(&self, a: &CkksCiphertext, b: &CkksCiphertext) -> Result<CkksCiphertext> {
        self.combine(a, b, false)
    }

    fn sub(&self, a: &CkksCiphertext, b: &CkksCiphertext) -> Result<CkksCiphertext> {
        self.combine(a, b, true)
    }

    fn add_plain(&self, a: &CkksCiphertext, p: Plain<'_>) -> Result<CkksCiphertext> {
        self.plain_offset(a, p, false)
    }

    fn sub_plain(&self, a: &CkksCiphertext, p: Plain<'_>) -> Result<CkksCiphertext> {
        self.plain_offset(a, p, true)
    }

    fn mul(&self, ek: &EvalKeys, a: &CkksCiphertext, b: &CkksCiphertext) -> Result<CkksCiphertext> {
        if a.level.min(b.level) == 0 {
            return Err(Self::exhausted());
        }
        let (x, y) = self.same_level(a, b)?;
        let level = x.level;
        let tables = self.ctx.level_tables(level);
        let mut d0 = x.c0.clone();
        d0.mul_assign(&y.c0, &tables);
        let mut d1 = x.c0.clone();
        d1.mul_assign(&y.c1, &tables);
        d1.fma_assign(&x.c1, &y.c0, &tables);
        let mut d2 = x.c1.clone();
        d2.mul_assign(&y.c1, &tables);
        d2.to_coeff(&tables);
        let (k0, k1) = ek.relin.apply(&self.ctx, &d2, level);
        d0.add_assign(&k0, &tables);
        d1.add_assign(&k1, &tables);
        self.ctx.rescale(&mut d0, level);
        self.ctx.rescale(&mut d1, level);
        let q = self.ctx.tables[level].modulus().value() as f64;
        Ok(CkksCiphertext {
            c0: d0,
            c1: d1,
            level: level - 1,
            scale: x.scale * (y.scale / q),
        })
    }

    fn mul_plain(&self, a: &CkksCiphertext, p: Plain<'_>) -> Result<CkksCiphertext> {
        let level = a.level;
        if level == 0 {
            return Err(Self::exhausted());
        }
        let tables = self.ctx.level_tables(level);
        let target = self.ctx.scale(level - 1);
        let q = self.ctx.tables[level].modulus().value() as f64;
        let pscale = target * (q / a.scale);
        let mut out = a.clone();
        match constant_of(p) {
            Some(c) => {
                let r = self.constant_residues(c * pscale, level)?;
                out.c0.mul_residues(&r, &tables);
                out.c1.mul_residues(&r, &tables);
            }
            None => {
                let Plain::Slots(v) = p else { unreachable!() };
                let m = self.encode(v, pscale, level)?;
                out.c0.mul_assign(&m, &tables);
                out.c1.mul_assign(&m, &tables);
            }
        }
        self.ctx.rescale(&mut out.c0, level);
        self.ctx.rescale(&mut out.c1, level);
        out.level = level - 1;
        out.scale = target;
        Ok(out)
    }

    fn rotate(&self, ek: &EvalKeys, a: &CkksCiphertext, steps: usize) -> Result<CkksCiphertext> {
        let g = self.ctx.encoder.galois_element(steps);
        let key = ek.rotations.get(&g).ok_or(HeError::MissingRotationKey(steps as i64))?;
        let tables: Vec<&NttTable> = self.ctx.level_tables(a.level);
        let (mut c0, mut c1) = (a.c0.clone(), a.c1.clone());
        c0.to_coeff(&tables);
        c1.to_coeff(&tables);
        let mut r0 = c0.automorphism(g, &tables);
        let r1 = c1.automorphism(g, &tables);
        let (k0, k1) = key.apply(&self.ctx, &r1, a.level);
        r0.to_ntt(&tables);
        r0.add_assign(&k0, &tables);
        Ok(CkksCiphertext {
            c0: r0,
            c1: k1,
            level: a.level,
            scale: a.scale,
        })
    }

    fn refresh(&self, sk: &SecretKey, a: &CkksCiphertext, level: usize, nonce: u64) -> Result<CkksCiphertext> {
        let mut values = self.decrypt(sk, a)?;
        let eps = self.config.bootstrap_error;
        if eps > 0.0 {
            let mut rng = ChaCha20Rng::seed_from_u64(splitmix64(nonce ^ 0xb007_5742));
            values.iter_mut().for_each(|v| *v += rng.random_range(-eps..=eps));
        }
        self.encrypt(sk, &values, level, nonce)
    }

    fn level_of(&self, ct: &CkksCiphertext) -> usize {
        ct.level
    }

    fn write_cipher(&self, ct: &CkksCiphertext, w: &mut dyn Write) -> Result<()> {
        serialize::write_ciphertext(&self.ctx, ct, w)
    }

    fn read_cipher(&self, r: &mut dyn Read, _level: usize) -> Result<CkksCiphertext> {
        serialize::read_ciphertext(&self.ctx, r)
    }
}
