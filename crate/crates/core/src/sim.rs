//! Exact plaintext backend with level emulation and optional seeded noise.
//!
//! Noise draws are keyed by a per-value id derived from the operation and
//! its parents' ids, so a given program produces the same perturbations
//! regardless of evaluation order.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::api::{splitmix64, Backend, BackendId, CipherVector, Plain, PlainVector};
use crate::error::{HeError, Result};
use crate::params::SchemeParams;

pub const DUMP_MAGIC: &[u8; 4] = b"RBSM";
pub const DUMP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub enabled: bool,
    /// Standard deviation added to every slot after each multiply.
    pub per_op_sigma: f64,
    /// Standard deviation added to every slot by a bootstrap.
    pub bootstrap_sigma: f64,
    pub rng_seed: u64,
}

impl NoiseModel {
    pub fn off() -> Self {
        Self {
            enabled: false,
            per_op_sigma: 0.0,
            bootstrap_sigma: 0.0,
            rng_seed: 0,
        }
    }

    /// Multiply noise at `2^-scale_bits`, the fresh-encoding granularity.
    pub fn for_params(params: &SchemeParams, bootstrap_sigma: f64, rng_seed: u64) -> Self {
        Self {
            enabled: true,
            per_op_sigma: (-(params.scale_bits as f64)).exp2(),
            bootstrap_sigma,
            rng_seed,
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::off()
    }
}

#[derive(Clone, Debug)]
pub struct SimCipher {
    values: Arc<[f64]>,
    level: usize,
    /// Sum of the standard deviations injected along the value's history.
    noise_accumulator: f64,
    uid: u64,
}

impl SimCipher {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn noise_accumulator(&self) -> f64 {
        self.noise_accumulator
    }
}

#[derive(Clone, Debug)]
pub struct SimBackend {
    params: SchemeParams,
    noise: NoiseModel,
    inspection: bool,
}

/// Unit secret: the simulator has no key material.
#[derive(Debug)]
pub struct SimSecret;

/// Rotation steps the simulated keyset was generated for.
#[derive(Debug)]
pub struct SimEval {
    pub rotations: BTreeSet<usize>,
}

const TAG_ENC: u64 = 1;
const TAG_ADD: u64 = 2;
const TAG_SUB: u64 = 3;
const TAG_MUL: u64 = 4;
const TAG_ADD_PT: u64 = 5;
const TAG_SUB_PT: u64 = 6;
const TAG_MUL_PT: u64 = 7;
const TAG_ROT: u64 = 8;
const TAG_REFRESH: u64 = 9;

fn mix(tag: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a ^ tag.rotate_left(56)) ^ b)
}

impl SimBackend {
    pub fn new(params: SchemeParams, noise: NoiseModel) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            noise,
            inspection: cfg!(debug_assertions),
        })
    }

    /// Noise-free simulator.
    pub fn exact(params: SchemeParams) -> Result<Self> {
        Self::new(params, NoiseModel::off())
    }

    /// Enables or disables [`SimBackend::snapshot`]. Defaults to on in
    /// debug builds and off in release builds.
    pub fn with_inspection(mut self, enabled: bool) -> Self {
        self.inspection = enabled;
        self
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Reads slot values without any key ceremony.
    pub fn snapshot(&self, cv: &CipherVector<Self>) -> Result<PlainVector> {
        if !self.inspection {
            return Err(HeError::SnapshotDisabled);
        }
        Ok(PlainVector {
            values: cv.raw().values.to_vec(),
            scale_bits: self.params.scale_bits,
        })
    }

    fn slots(&self) -> usize {
        self.params.slot_count()
    }

    fn plain_uid(&self, p: Plain<'_>) -> u64 {
        if !self.noise.enabled {
            return 0;
        }
        match p {
            Plain::Scalar(s) => splitmix64(s.to_bits()),
            Plain::Slots(v) => v.iter().fold(0x5851_f42d_4c95_7f2d, |h, x| splitmix64(h ^ x.to_bits())),
        }
    }

    fn perturb(&self, values: &mut [f64], sigma: f64, uid: u64) {
        if !self.noise.enabled || sigma == 0.0 {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.noise.rng_seed) ^ uid);
        for v in values.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
    }

    fn finite(values: Vec<f64>) -> Result<Arc<[f64]>> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HeError::Overflow("non-finite slot value".into()));
        }
        Ok(values.into())
    }

    fn zip(&self, a: &SimCipher, b: &SimCipher, tag: u64, f: impl Fn(f64, f64) -> f64) -> SimCipher {
        let values: Vec<f64> = a.values.iter().zip(b.values.iter()).map(|(x, y)| f(*x, *y)).collect();
        SimCipher {
            values: values.into(),
            level: a.level.min(b.level),
            noise_accumulator: a.noise_accumulator + b.noise_accumulator,
            uid: mix(tag, a.uid, b.uid),
        }
    }

    fn with_plain(&self, a: &SimCipher, p: Plain<'_>, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        match p {
            Plain::Scalar(s) => a.values.iter().map(|x| f(*x, s)).collect(),
            Plain::Slots(v) => a.values.iter().zip(v).map(|(x, y)| f(*x, *y)).collect(),
        }
    }

    fn next_level(level: usize) -> Result<usize> {
        level.checked_sub(1).ok_or(HeError::LevelExhausted {
            needed: 1,
            available: 0,
        })
    }
}

impl Backend for SimBackend {
    type Cipher = SimCipher;
    type Secret = SimSecret;
    type Eval = SimEval;

    fn id(&self) -> BackendId {
        BackendId::Sim
    }

    fn params(&self) -> &SchemeParams {
        &self.params
    }

    fn keygen(&self, rotations: &BTreeSet<usize>, _seed: u64) -> Result<(SimSecret, SimEval)> {
        Ok((
            SimSecret,
            SimEval {
                rotations: rotations.clone(),
            },
        ))
    }

    fn encrypt(&self, _sk: &SimSecret, values: &[f64], level: usize, nonce: u64) -> Result<SimCipher> {
        if values.len() != self.slots() {
            return Err(HeError::LengthMismatch {
                expected: self.slots(),
                actual: values.len(),
            });
        }
        Ok(SimCipher {
            values: Self::finite(values.to_vec())?,
            level,
            noise_accumulator: 0.0,
            uid: mix(TAG_ENC, nonce, 0),
        })
    }

    fn decrypt(&self, _sk: &SimSecret, ct: &SimCipher) -> Result<Vec<f64>> {
        Ok(ct.values.to_vec())
    }

    fn add(&self, a: &SimCipher, b: &SimCipher) -> Result<SimCipher> {
        Ok(self.zip(a, b, TAG_ADD, |x, y| x + y))
    }

    fn sub(&self, a: &SimCipher, b: &SimCipher) -> Result<SimCipher> {
        Ok(self.zip(a, b, TAG_SUB, |x, y| x - y))
    }

    fn add_plain(&self, a: &SimCipher, p: Plain<'_>) -> Result<SimCipher> {
        let values = self.with_plain(a, p, |x, y| x + y);
        Ok(SimCipher {
            values: values.into(),
            level: a.level,
            noise_accumulator: a.noise_accumulator,
            uid: mix(TAG_ADD_PT, a.uid, self.plain_uid(p)),
        })
    }

    fn sub_plain(&self, a: &SimCipher, p: Plain<'_>) -> Result<SimCipher> {
        let values = self.with_plain(a, p, |x, y| x - y);
        Ok(SimCipher {
            values: values.into(),
            level: a.level,
            noise_accumulator: a.noise_accumulator,
            uid: mix(TAG_SUB_PT, a.uid, self.plain_uid(p)),
        })
    }

    fn mul(&self, _ek: &SimEval, a: &SimCipher, b: &SimCipher) -> Result<SimCipher> {
        let level = Self::next_level(a.level.min(b.level))?;
        let uid = mix(TAG_MUL, a.uid, b.uid);
        let mut values: Vec<f64> = a.values.iter().zip(b.values.iter()).map(|(x, y)| x * y).collect();
        self.perturb(&mut values, self.noise.per_op_sigma, uid);
        Ok(SimCipher {
            values: Self::finite(values)?,
            level,
            noise_accumulator: a.noise_accumulator + b.noise_accumulator + self.sigma_if_enabled(),
            uid,
        })
    }

    fn mul_plain(&self, a: &SimCipher, p: Plain<'_>) -> Result<SimCipher> {
        let level = Self::next_level(a.level)?;
        let uid = mix(TAG_MUL_PT, a.uid, self.plain_uid(p));
        let mut values = self.with_plain(a, p, |x, y| x * y);
        self.perturb(&mut values, self.noise.per_op_sigma, uid);
        Ok(SimCipher {
            values: Self::finite(values)?,
            level,
            noise_accumulator: a.noise_accumulator + self.sigma_if_enabled(),
            uid,
        })
    }

    fn rotate(&self, _ek: &SimEval, a: &SimCipher, steps: usize) -> Result<SimCipher> {
        let n = a.values.len();
        let k = steps % n;
        let mut values = Vec::with_capacity(n);
        values.extend_from_slice(&a.values[k..]);
        values.extend_from_slice(&a.values[..k]);
        Ok(SimCipher {
            values: values.into(),
            level: a.level,
            noise_accumulator: a.noise_accumulator,
            uid: mix(TAG_ROT, a.uid, steps as u64),
        })
    }

    fn refresh(&self, _sk: &SimSecret, a: &SimCipher, level: usize, nonce: u64) -> Result<SimCipher> {
        let uid = mix(TAG_REFRESH, a.uid, nonce);
        let mut values = a.values.to_vec();
        self.perturb(&mut values, self.noise.bootstrap_sigma, uid);
        let added = if self.noise.enabled {
            self.noise.bootstrap_sigma
        } else {
            0.0
        };
        Ok(SimCipher {
            values: Self::finite(values)?,
            level,
            noise_accumulator: a.noise_accumulator + added,
            uid,
        })
    }

    fn level_of(&self, ct: &SimCipher) -> usize {
        ct.level
    }

    fn write_cipher(&self, ct: &SimCipher, w: &mut dyn Write) -> Result<()> {
        write_dump(w, self.params.poly_degree, &ct.values)
    }

    fn read_cipher(&self, r: &mut dyn Read, level: usize) -> Result<SimCipher> {
        let (n, values) = read_dump(r)?;
        if n != self.params.poly_degree {
            return Err(HeError::Malformed(format!(
                "dump ring degree {n} does not match backend degree {}",
                self.params.poly_degree
            )));
        }
        let uid = values
            .iter()
            .fold(mix(TAG_ENC, u64::MAX, 0), |h, x| splitmix64(h ^ x.to_bits()));
        Ok(SimCipher {
            values: Self::finite(values)?,
            level,
            noise_accumulator: 0.0,
            uid,
        })
    }
}

impl SimBackend {
    fn sigma_if_enabled(&self) -> f64 {
        if self.noise.enabled {
            self.noise.per_op_sigma
        } else {
            0.0
        }
    }
}

/// Writes the RBSM state dump: 16-byte header then N/2 little-endian f64.
pub fn write_dump(w: &mut dyn Write, poly_degree: usize, values: &[f64]) -> Result<()> {
    if values.len() != poly_degree / 2 {
        return Err(HeError::LengthMismatch {
            expected: poly_degree / 2,
            actual: values.len(),
        });
    }
    let mut buf = Vec::with_capacity(16 + 8 * values.len());
    buf.extend_from_slice(DUMP_MAGIC);
    buf.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    buf.extend_from_slice(&(poly_degree as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads an RBSM dump, returning the ring degree and slot values.
pub fn read_dump(r: &mut dyn Read) -> Result<(usize, Vec<f64>)> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..4] != DUMP_MAGIC {
        return Err(HeError::Malformed("bad RBSM magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != DUMP_VERSION {
        return Err(HeError::Malformed(format!("unsupported RBSM version {version}")));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
    if !n.is_power_of_two() || !(2..=1 << 20).contains(&n) {
        return Err(HeError::Malformed(format!("implausible ring degree {n}")));
    }
    let mut body = vec![0u8; 8 * (n / 2)];
    r.read_exact(&mut body)?;
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((n, values))
}
