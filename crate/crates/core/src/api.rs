//! Backend-neutral SIMD ciphertext contract.
//!
//! A [`Backend`] supplies raw slot arithmetic. Everything a caller touches
//! goes through the wrappers here, which enforce keyset/backend matching,
//! rotation-key membership, level exhaustion and the depth ledger so that
//! every backend reports identical accounting for the same program.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{HeError, Result};
use crate::params::SchemeParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendId {
    Sim,
    Ckks,
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendId::Sim => f.write_str("sim"),
            BackendId::Ckks => f.write_str("ckks"),
        }
    }
}

/// Plaintext operand handed to a backend. Scalars let backends encode a
/// constant polynomial instead of a full slot vector.
#[derive(Clone, Copy, Debug)]
pub enum Plain<'a> {
    Slots(&'a [f64]),
    Scalar(f64),
}

impl Plain<'_> {
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Plain::Slots(v) => v[i],
            Plain::Scalar(s) => *s,
        }
    }
}

/// Raw slot arithmetic. Implementations may assume the wrappers have
/// already checked lengths, rotation membership and level availability.
///
/// `mul` and `mul_plain` return a result one level below the lower input.
/// `add`/`sub` between different levels return a result at the lower one.
pub trait Backend: Send + Sync + Sized + 'static {
    type Cipher: Clone + Send + Sync;
    type Secret: Send + Sync;
    type Eval: Send + Sync;

    fn id(&self) -> BackendId;
    fn params(&self) -> &SchemeParams;

    /// Rotation steps are normalized to `1..N/2`.
    fn keygen(&self, rotations: &BTreeSet<usize>, seed: u64) -> Result<(Self::Secret, Self::Eval)>;

    fn encrypt(&self, sk: &Self::Secret, values: &[f64], level: usize, nonce: u64) -> Result<Self::Cipher>;
    fn decrypt(&self, sk: &Self::Secret, ct: &Self::Cipher) -> Result<Vec<f64>>;

    fn add(&self, a: &Self::Cipher, b: &Self::Cipher) -> Result<Self::Cipher>;
    fn sub(&self, a: &Self::Cipher, b: &Self::Cipher) -> Result<Self::Cipher>;
    fn add_plain(&self, a: &Self::Cipher, p: Plain<'_>) -> Result<Self::Cipher>;
    fn sub_plain(&self, a: &Self::Cipher, p: Plain<'_>) -> Result<Self::Cipher>;
    fn mul(&self, ek: &Self::Eval, a: &Self::Cipher, b: &Self::Cipher) -> Result<Self::Cipher>;
    fn mul_plain(&self, a: &Self::Cipher, p: Plain<'_>) -> Result<Self::Cipher>;
    /// Left rotation by `steps`, already normalized to `1..N/2`.
    fn rotate(&self, ek: &Self::Eval, a: &Self::Cipher, steps: usize) -> Result<Self::Cipher>;

    /// Debug bootstrap: re-encrypts the decrypted slots at `level`,
    /// optionally perturbed by the backend's configured bootstrap error.
    fn refresh(&self, sk: &Self::Secret, a: &Self::Cipher, level: usize, nonce: u64) -> Result<Self::Cipher>;

    fn level_of(&self, ct: &Self::Cipher) -> usize;

    fn write_cipher(&self, ct: &Self::Cipher, w: &mut dyn Write) -> Result<()>;
    /// `level` is supplied by formats that do not record it.
    fn read_cipher(&self, r: &mut dyn Read, level: usize) -> Result<Self::Cipher>;
}

/// Normalizes a signed rotation to `0..slots`; negative steps rotate right.
pub fn normalize_rotation(k: i64, slots: usize) -> usize {
    k.rem_euclid(slots as i64) as usize
}

/// Shared counters for one keyset. Depth is a high-water mark that
/// callers reset at iteration boundaries.
#[derive(Debug, Default)]
pub struct Ledger {
    max_depth: AtomicUsize,
    bootstraps: AtomicU64,
    multiplies: AtomicU64,
    rotations: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub max_depth: usize,
    pub bootstraps: u64,
    pub multiplies: u64,
    pub rotations: u64,
}

impl Ledger {
    fn observe(&self, depth: usize) {
        self.max_depth.fetch_max(depth, Ordering::Relaxed);
    }

    /// Returns the high-water depth since the last reset and clears it.
    pub fn take_max_depth(&self) -> usize {
        self.max_depth.swap(0, Ordering::Relaxed)
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            max_depth: self.max_depth.load(Ordering::Relaxed),
            bootstraps: self.bootstraps.load(Ordering::Relaxed),
            multiplies: self.multiplies.load(Ordering::Relaxed),
            rotations: self.rotations.load(Ordering::Relaxed),
        }
    }
}

/// An encrypted slot vector with its ledger metadata. Immutable; every
/// operation returns a new value.
pub struct CipherVector<B: Backend> {
    inner: B::Cipher,
    level: usize,
    depth: usize,
    keyset: u64,
}

impl<B: Backend> Clone for CipherVector<B> {
    fn clone(&self) -> Self {
        Self {
            inner: self.inner.clone(),
            level: self.level,
            depth: self.depth,
            keyset: self.keyset,
        }
    }
}

impl<B: Backend> fmt::Debug for CipherVector<B> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CipherVector")
            .field("level", &self.level)
            .field("depth", &self.depth)
            .field("keyset", &format_args!("{:016x}", self.keyset))
            .finish()
    }
}

impl<B: Backend> CipherVector<B> {
    /// Levels still available for multiplication.
    pub fn level(&self) -> usize {
        self.level
    }

    /// Multiplicative depth consumed since encryption or the last bootstrap.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn keyset(&self) -> u64 {
        self.keyset
    }

    pub fn raw(&self) -> &B::Cipher {
        &self.inner
    }
}

/// A plaintext slot vector of exactly N/2 values.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainVector {
    pub values: Vec<f64>,
    pub scale_bits: u32,
}

impl PlainVector {
    /// Zero-pads `values` to `slots`.
    pub fn new(mut values: Vec<f64>, slots: usize, scale_bits: u32) -> Result<Self> {
        if values.len() > slots {
            return Err(HeError::LengthMismatch {
                expected: slots,
                actual: values.len(),
            });
        }
        values.resize(slots, 0.0);
        Ok(Self { values, scale_bits })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    AddCt,
    SubCt,
    MulCt,
    AddPt,
    SubPt,
    MulPt,
}

/// Second operand of [`Evaluator::elementwise`].
pub enum Operand<'a, B: Backend> {
    Cipher(&'a CipherVector<B>),
    Plain(&'a PlainVector),
}

/// Evaluation-only handle: no secret material. Cheap to clone.
pub struct Evaluator<B: Backend> {
    backend: Arc<B>,
    eval: Arc<B::Eval>,
    rotations: Arc<BTreeSet<usize>>,
    keyset: u64,
    ledger: Arc<Ledger>,
}

impl<B: Backend> Clone for Evaluator<B> {
    fn clone(&self) -> Self {
        Self {
            backend: self.backend.clone(),
            eval: self.eval.clone(),
            rotations: self.rotations.clone(),
            keyset: self.keyset,
            ledger: self.ledger.clone(),
        }
    }
}

impl<B: Backend> Evaluator<B> {
    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn params(&self) -> &SchemeParams {
        self.backend.params()
    }

    pub fn slots(&self) -> usize {
        self.backend.params().slot_count()
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    /// Normalized rotation steps this keyset can perform.
    pub fn rotation_keys(&self) -> &BTreeSet<usize> {
        &self.rotations
    }

    pub fn keyset(&self) -> u64 {
        self.keyset
    }

    fn check(&self, a: &CipherVector<B>) -> Result<()> {
        if a.keyset != self.keyset {
            return Err(HeError::IncompatibleOperands(format!(
                "ciphertext keyset {:016x} does not match evaluator keyset {:016x}",
                a.keyset, self.keyset
            )));
        }
        Ok(())
    }

    fn check_plain(&self, p: &PlainVector) -> Result<()> {
        if p.len() != self.slots() {
            return Err(HeError::LengthMismatch {
                expected: self.slots(),
                actual: p.len(),
            });
        }
        Ok(())
    }

    fn wrap(&self, inner: B::Cipher, level: usize, depth: usize) -> CipherVector<B> {
        debug_assert_eq!(self.backend.level_of(&inner), level);
        self.ledger.observe(depth);
        CipherVector {
            inner,
            level,
            depth,
            keyset: self.keyset,
        }
    }

    fn mul_level(&self, level: usize) -> Result<usize> {
        level.checked_sub(1).ok_or(HeError::LevelExhausted {
            needed: 1,
            available: 0,
        })
    }

    pub fn elementwise(&self, kind: ElementwiseOp, a: &CipherVector<B>, b: Operand<'_, B>) -> Result<CipherVector<B>> {
        match (kind, b) {
            (ElementwiseOp::AddCt, Operand::Cipher(b)) => self.add(a, b),
            (ElementwiseOp::SubCt, Operand::Cipher(b)) => self.sub(a, b),
            (ElementwiseOp::MulCt, Operand::Cipher(b)) => self.mul(a, b),
            (ElementwiseOp::AddPt, Operand::Plain(p)) => self.add_plain(a, p),
            (ElementwiseOp::SubPt, Operand::Plain(p)) => self.sub_plain(a, p),
            (ElementwiseOp::MulPt, Operand::Plain(p)) => self.mul_plain(a, p),
            (kind, _) => Err(HeError::IncompatibleOperands(format!(
                "{kind:?} applied to the wrong operand kind"
            ))),
        }
    }

    pub fn add(&self, a: &CipherVector<B>, b: &CipherVector<B>) -> Result<CipherVector<B>> {
        self.check(a)?;
        self.check(b)?;
        let out = self.backend.add(&a.inner, &b.inner)?;
        Ok(self.wrap(out, a.level.min(b.level), a.depth.max(b.depth)))
    }

    pub fn sub(&self, a: &CipherVector<B>, b: &CipherVector<B>) -> Result<CipherVector<B>> {
        self.check(a)?;
        self.check(b)?;
        let out = self.backend.sub(&a.inner, &b.inner)?;
        Ok(self.wrap(out, a.level.min(b.level), a.depth.max(b.depth)))
    }

    pub fn mul(&self, a: &CipherVector<B>, b: &CipherVector<B>) -> Result<CipherVector<B>> {
        self.check(a)?;
        self.check(b)?;
        let level = self.mul_level(a.level.min(b.level))?;
        let out = self.backend.mul(&self.eval, &a.inner, &b.inner)?;
        self.ledger.multiplies.fetch_add(1, Ordering::Relaxed);
        Ok(self.wrap(out, level, a.depth.max(b.depth) + 1))
    }

    pub fn add_plain(&self, a: &CipherVector<B>, p: &PlainVector) -> Result<CipherVector<B>> {
        self.check(a)?;
        self.check_plain(p)?;
        let out = self.backend.add_plain(&a.inner, Plain::Slots(&p.values))?;
        Ok(self.wrap(out, a.level, a.depth))
    }

    pub fn sub_plain(&self, a: &CipherVector<B>, p: &PlainVector) -> Result<CipherVector<B>> {
        self.check(a)?;
        self.check_plain(p)?;
        let out = self.backend.sub_plain(&a.inner, Plain::Slots(&p.values))?;
        Ok(self.wrap(out, a.level, a.depth))
    }

    pub fn mul_plain(&self, a: &CipherVector<B>, p: &PlainVector) -> Result<CipherVector<B>> {
        self.check(a)?;
        self.check_plain(p)?;
        let level = self.mul_level(a.level)?;
        let out = self.backend.mul_plain(&a.inner, Plain::Slots(&p.values))?;
        self.ledger.multiplies.fetch_add(1, Ordering::Relaxed);
        Ok(self.wrap(out, level, a.depth + 1))
    }

    /// Adds the same constant to every slot. Depth-free.
    pub fn add_scalar(&self, a: &CipherVector<B>, s: f64) -> Result<CipherVector<B>> {
        self.check(a)?;
        let out = self.backend.add_plain(&a.inner, Plain::Scalar(s))?;
        Ok(self.wrap(out, a.level, a.depth))
    }

    /// Multiplies every slot by a plaintext constant. Costs one level,
    /// like any plaintext multiply.
    pub fn mul_scalar(&self, a: &CipherVector<B>, s: f64) -> Result<CipherVector<B>> {
        self.check(a)?;
        let level = self.mul_level(a.level)?;
        let out = self.backend.mul_plain(&a.inner, Plain::Scalar(s))?;
        self.ledger.multiplies.fetch_add(1, Ordering::Relaxed);
        Ok(self.wrap(out, level, a.depth + 1))
    }

    /// Output slot `i` is input slot `(i + k) mod N/2`. `k = 0` needs no key.
    pub fn rotate(&self, a: &CipherVector<B>, k: i64) -> Result<CipherVector<B>> {
        self.check(a)?;
        let steps = normalize_rotation(k, self.slots());
        if steps == 0 {
            return Ok(a.clone());
        }
        if !self.rotations.contains(&steps) {
            return Err(HeError::MissingRotationKey(k));
        }
        let out = self.backend.rotate(&self.eval, &a.inner, steps)?;
        self.ledger.rotations.fetch_add(1, Ordering::Relaxed);
        Ok(self.wrap(out, a.level, a.depth))
    }

    pub fn write_cipher(&self, a: &CipherVector<B>, w: &mut dyn Write) -> Result<()> {
        self.check(a)?;
        self.backend.write_cipher(&a.inner, w)
    }

    /// Reads a ciphertext written under this keyset. Depth restarts at 0.
    pub fn read_cipher(&self, r: &mut dyn Read, level: usize) -> Result<CipherVector<B>> {
        let inner = self.backend.read_cipher(r, level)?;
        let level = self.backend.level_of(&inner);
        Ok(CipherVector {
            inner,
            level,
            depth: 0,
            keyset: self.keyset,
        })
    }
}

/// The custodian-mediated refresh hook training code is allowed to call.
pub trait Bootstrapper<B: Backend> {
    fn bootstrap(&self, a: &CipherVector<B>) -> Result<CipherVector<B>>;
}

/// Owns the secret key. The only component that decrypts.
pub struct KeyCustodian<B: Backend> {
    secret: B::Secret,
    evaluator: Evaluator<B>,
    nonce: AtomicU64,
    decrypt_lock: Mutex<()>,
}

impl<B: Backend> KeyCustodian<B> {
    /// Generates keys with rotation keys for exactly `rotations`
    /// (signed, normalized modulo N/2; 0 is dropped because it needs no key).
    pub fn generate(backend: B, rotations: &BTreeSet<i64>, seed: u64) -> Result<Self> {
        backend.params().validate()?;
        let slots = backend.params().slot_count();
        let normalized: BTreeSet<usize> = rotations
            .iter()
            .map(|&k| normalize_rotation(k, slots))
            .filter(|&s| s != 0)
            .collect();
        let (secret, eval) = backend.keygen(&normalized, seed)?;
        let keyset = keyset_id(backend.id(), seed, &backend.params().digest());
        Ok(Self {
            secret,
            evaluator: Evaluator {
                backend: Arc::new(backend),
                eval: Arc::new(eval),
                rotations: Arc::new(normalized),
                keyset,
                ledger: Arc::new(Ledger::default()),
            },
            nonce: AtomicU64::new(0),
            decrypt_lock: Mutex::new(()),
        })
    }

    pub fn evaluator(&self) -> Evaluator<B> {
        self.evaluator.clone()
    }

    pub fn params(&self) -> &SchemeParams {
        self.evaluator.params()
    }

    pub fn backend(&self) -> &B {
        self.evaluator.backend()
    }

    fn next_nonce(&self) -> u64 {
        self.nonce.fetch_add(1, Ordering::Relaxed)
    }

    /// Fresh encryption at the full level `l`.
    pub fn encrypt(&self, pv: &PlainVector) -> Result<CipherVector<B>> {
        self.encrypt_at(pv, self.params().level)
    }

    pub fn encrypt_at(&self, pv: &PlainVector, level: usize) -> Result<CipherVector<B>> {
        self.evaluator.check_plain(pv)?;
        if level > self.params().level {
            return Err(HeError::InvalidParams(format!(
                "level {level} exceeds chain level {}",
                self.params().level
            )));
        }
        let inner = self
            .backend()
            .encrypt(&self.secret, &pv.values, level, self.next_nonce())?;
        Ok(CipherVector {
            inner,
            level,
            depth: 0,
            keyset: self.evaluator.keyset,
        })
    }

    /// Zero-pads `values` and encrypts at full level.
    pub fn encrypt_values(&self, values: &[f64]) -> Result<CipherVector<B>> {
        let pv = PlainVector::new(values.to_vec(), self.evaluator.slots(), self.params().scale_bits)?;
        self.encrypt(&pv)
    }

    pub fn decrypt(&self, cv: &CipherVector<B>) -> Result<PlainVector> {
        self.evaluator.check(cv)?;
        let _guard = self.decrypt_lock.lock().unwrap_or_else(|e| e.into_inner());
        let values = self.backend().decrypt(&self.secret, &cv.inner)?;
        Ok(PlainVector {
            values,
            scale_bits: self.params().scale_bits,
        })
    }
}

impl<B: Backend> Bootstrapper<B> for KeyCustodian<B> {
    /// Output sits at `l_refresh` with depth 0.
    fn bootstrap(&self, a: &CipherVector<B>) -> Result<CipherVector<B>> {
        self.evaluator.check(a)?;
        let level = self.params().refresh_level();
        let inner = {
            let _guard = self.decrypt_lock.lock().unwrap_or_else(|e| e.into_inner());
            self.backend()
                .refresh(&self.secret, &a.inner, level, self.next_nonce())?
        };
        self.evaluator.ledger.bootstraps.fetch_add(1, Ordering::Relaxed);
        Ok(CipherVector {
            inner,
            level,
            depth: 0,
            keyset: self.evaluator.keyset,
        })
    }
}

fn keyset_id(backend: BackendId, seed: u64, digest: &[u8; 32]) -> u64 {
    let mut h = splitmix64(seed ^ backend as u64);
    for chunk in digest.chunks_exact(8) {
        h = splitmix64(h ^ u64::from_le_bytes(chunk.try_into().expect("8-byte chunk")));
    }
    h
}

/// SplitMix64 finalizer, used as a cheap deterministic hash.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
