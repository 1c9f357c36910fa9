//! Secret key, gadget key-switching keys and the evaluation key set.
//!
//! A key switching `s' → s` holds, per gadget digit `k`, the pair
//! `(b_k, a_k)` with `b_k = -a_k s + e_k + P 2^(wk) s'` over the full
//! chain plus `P`. The uniform halves `a_k` are regenerated from a seed.

use std::collections::BTreeMap;

use hetrain::api::splitmix64;
use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use rand_distr::{Distribution, Normal};

use crate::context::CkksContext;
use crate::ntt::NttTable;
use crate::rns::RnsPoly;

pub const ERROR_SIGMA: f64 = 3.2;
/// Gaussian tail cut, in standard deviations.
const ERROR_TAIL: f64 = 6.0;

/// Uniform ternary secret.
pub struct SecretKey {
    pub(crate) coeffs: Vec<i64>,
    /// Evaluation form over the whole chain including `P`.
    pub(crate) ntt: RnsPoly,
    /// Seeds encryption randomness together with a per-call nonce.
    pub(crate) enc_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeySwitchKey {
    /// Per digit, evaluation form over the whole chain including `P`.
    pub(crate) b: Vec<RnsPoly>,
    pub(crate) a_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalKeys {
    pub(crate) relin: KeySwitchKey,
    /// Indexed by Galois element `5^k mod 2N`.
    pub(crate) rotations: BTreeMap<usize, KeySwitchKey>,
    pub(crate) gadget_bits: u32,
}

impl EvalKeys {
    pub fn galois_elements(&self) -> impl Iterator<Item = usize> + '_ {
        self.rotations.keys().copied()
    }

    pub fn gadget_bits(&self) -> u32 {
        self.gadget_bits
    }
}

pub(crate) fn sample_ternary(rng: &mut impl Rng, n: usize) -> Vec<i64> {
    (0..n).map(|_| rng.random_range(-1i64..=1)).collect()
}

pub(crate) fn sample_error(rng: &mut impl Rng, n: usize) -> Vec<i64> {
    let normal = Normal::new(0.0, ERROR_SIGMA).expect("valid sigma");
    let cut = ERROR_SIGMA * ERROR_TAIL;
    (0..n)
        .map(|_| loop {
            let x: f64 = normal.sample(rng);
            if x.abs() <= cut {
                break x.round() as i64;
            }
        })
        .collect()
}

pub(crate) fn sample_uniform(rng: &mut impl Rng, n: usize, tables: &[&NttTable]) -> RnsPoly {
    RnsPoly {
        limbs: tables
            .iter()
            .map(|t| (0..n).map(|_| rng.random_range(0..t.modulus().value())).collect())
            .collect(),
        ntt: true,
    }
}

/// Uniform plane of `a_k` for chain index `idx`, identical whichever
/// subset of planes a caller asks for.
fn key_plane(seed: u64, digit: usize, idx: usize, t: &NttTable, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed ^ digit as u64) ^ idx as u64));
    let q = t.modulus().value();
    (0..n).map(|_| rng.random_range(0..q)).collect()
}

/// Automorphism `X ↦ X^g` of a signed coefficient vector.
pub(crate) fn automorphism_signed(coeffs: &[i64], g: usize) -> Vec<i64> {
    let n = coeffs.len();
    let mut out = vec![0i64; n];
    for (i, &c) in coeffs.iter().enumerate() {
        let j = i * g % (2 * n);
        if j < n {
            out[j] = c;
        } else {
            out[j - n] = -c;
        }
    }
    out
}

impl SecretKey {
    pub(crate) fn generate(ctx: &CkksContext, rng: &mut ChaCha20Rng) -> Self {
        let coeffs = sample_ternary(rng, ctx.n);
        let tables: Vec<&NttTable> = ctx.tables.iter().collect();
        let mut ntt = RnsPoly::from_signed(&coeffs, &tables);
        ntt.to_ntt(&tables);
        SecretKey {
            coeffs,
            ntt,
            enc_seed: rng.random(),
        }
    }
}

impl KeySwitchKey {
    /// Key switching `target → sk`, `target` in evaluation form over the
    /// whole chain.
    pub(crate) fn generate(ctx: &CkksContext, sk: &SecretKey, target: &RnsPoly, rng: &mut ChaCha20Rng) -> Self {
        let tables: Vec<&NttTable> = ctx.tables.iter().collect();
        let a_seed: u64 = rng.random();
        let b = ctx
            .gadget
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let a = RnsPoly {
                    limbs: tables
                        .iter()
                        .enumerate()
                        .map(|(idx, t)| key_plane(a_seed, k, idx, t, ctx.n))
                        .collect(),
                    ntt: true,
                };
                let mut b = RnsPoly::from_signed(&sample_error(rng, ctx.n), &tables);
                b.to_ntt(&tables);
                let mut gs = target.clone();
                gs.mul_residues(g, &tables);
                b.add_assign(&gs, &tables);
                let mut as_ = a;
                as_.mul_assign(&sk.ntt, &tables);
                b.sub_assign(&as_, &tables);
                b
            })
            .collect();
        KeySwitchKey { b, a_seed }
    }

    /// Returns `(d0, d1)` at `level` with `d0 + d1 s ≈ c s'` for a
    /// coefficient-domain `c` at `level`.
    pub(crate) fn apply(&self, ctx: &CkksContext, c: &RnsPoly, level: usize) -> (RnsPoly, RnsPoly) {
        let tables = ctx.ks_tables(level);
        let chain: Vec<usize> = (0..=level).chain(std::iter::once(ctx.special_index())).collect();
        let digits = ctx.decompose(c, level);
        let mut acc0 = RnsPoly::zero(ctx.n, tables.len(), true);
        let mut acc1 = RnsPoly::zero(ctx.n, tables.len(), true);
        let mut plane = vec![0u64; ctx.n];
        for (k, digit) in digits.iter().enumerate() {
            if digit.iter().all(|&d| d == 0) {
                continue;
            }
            for (slot, (&idx, t)) in chain.iter().zip(&tables).enumerate() {
                let q = t.modulus();
                for (p, &d) in plane.iter_mut().zip(digit) {
                    *p = q.from_i64(d);
                }
                t.forward(&mut plane);
                let a = key_plane(self.a_seed, k, idx, t, ctx.n);
                let b = &self.b[k].limbs[idx];
                let (r0, r1) = (&mut acc0.limbs[slot], &mut acc1.limbs[slot]);
                for j in 0..ctx.n {
                    r0[j] = q.add(r0[j], q.mul(plane[j], b[j]));
                    r1[j] = q.add(r1[j], q.mul(plane[j], a[j]));
                }
            }
        }
        ctx.mod_down(&mut acc0, level);
        ctx.mod_down(&mut acc1, level);
        (acc0, acc1)
    }
}

impl EvalKeys {
    pub(crate) fn generate(ctx: &CkksContext, sk: &SecretKey, galois: &[usize], rng: &mut ChaCha20Rng) -> Self {
        let tables: Vec<&NttTable> = ctx.tables.iter().collect();
        let mut s2 = sk.ntt.clone();
        s2.mul_assign(&sk.ntt, &tables);
        let relin = KeySwitchKey::generate(ctx, sk, &s2, rng);
        let rotations = galois
            .iter()
            .map(|&g| {
                let mut sg = RnsPoly::from_signed(&automorphism_signed(&sk.coeffs, g), &tables);
                sg.to_ntt(&tables);
                (g, KeySwitchKey::generate(ctx, sk, &sg, rng))
            })
            .collect();
        EvalKeys {
            relin,
            rotations,
            gadget_bits: ctx.gadget_bits,
        }
    }
}
