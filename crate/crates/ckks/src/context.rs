//! Prime chain, canonical scales and precomputations shared by every
//! ciphertext under one parameter set.
//!
//! Chain index `0..=L` are the ciphertext primes (base prime first) and
//! index `L + 1` is the special key-switching prime `P`. Scaling primes
//! are picked so rescaling a product of two canonical ciphertexts lands
//! exactly on the next canonical scale: `S_{ℓ-1} = S_ℓ² / q_ℓ` with
//! `q_ℓ` the NTT prime nearest `S_ℓ² / 2^Δ`.

use hetrain::{HeError, Result, SchemeParams};

use crate::encoding::Encoder;
use crate::modulus::{largest_ntt_prime, nearest_ntt_prime, Modulus};
use crate::ntt::NttTable;
use crate::rns::RnsPoly;

/// Default gadget base `2^10` for key switching.
pub const DEFAULT_GADGET_BITS: u32 = 10;

/// CRT reconstruction data for ciphertexts at one level.
#[derive(Debug)]
pub(crate) struct CrtLevel {
    /// `Q_ℓ / q_i` as little-endian words.
    qhat: Vec<Vec<u64>>,
    /// `(Q_ℓ / q_i)^{-1} mod q_i`.
    qhat_inv: Vec<u64>,
    q: Vec<u64>,
    half_q: Vec<u64>,
    /// Balanced gadget digits needed to cover `Q_ℓ / 2`.
    pub digits: usize,
}

#[derive(Debug)]
pub struct CkksContext {
    pub(crate) params: SchemeParams,
    pub(crate) n: usize,
    pub(crate) tables: Vec<NttTable>,
    pub(crate) scales: Vec<f64>,
    pub(crate) encoder: Encoder,
    pub(crate) gadget_bits: u32,
    pub(crate) crt: Vec<CrtLevel>,
    /// `[ℓ][i] = q_ℓ^{-1} mod q_i` for `i < ℓ`.
    rescale_inv: Vec<Vec<u64>>,
    /// `P^{-1} mod q_i`.
    special_inv: Vec<u64>,
    /// `[k][j] = P · 2^(w k) mod q_j` over the whole chain.
    pub(crate) gadget: Vec<Vec<u64>>,
}

fn words_mul_small(a: &[u64], y: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + 1);
    let mut carry = 0u128;
    for &w in a {
        let t = w as u128 * y as u128 + carry;
        out.push(t as u64);
        carry = t >> 64;
    }
    out.push(carry as u64);
    while out.len() > 1 && *out.last().unwrap() == 0 {
        out.pop();
    }
    out
}

/// `acc += a · y`; `acc` must be wide enough.
#[inline]
fn words_fma(acc: &mut [u64], a: &[u64], y: u64) {
    let mut carry = 0u128;
    for (i, &w) in a.iter().enumerate() {
        let t = acc[i] as u128 + w as u128 * y as u128 + carry;
        acc[i] = t as u64;
        carry = t >> 64;
    }
    let mut i = a.len();
    while carry != 0 {
        let t = acc[i] as u128 + carry;
        acc[i] = t as u64;
        carry = t >> 64;
        i += 1;
    }
}

/// `acc -= b`, assuming `acc >= b`.
#[inline]
fn words_sub(acc: &mut [u64], b: &[u64]) {
    let mut borrow = false;
    for (i, a) in acc.iter_mut().enumerate() {
        let bw = b.get(i).copied().unwrap_or(0);
        let (d1, o1) = a.overflowing_sub(bw);
        let (d2, o2) = d1.overflowing_sub(borrow as u64);
        *a = d2;
        borrow = o1 || o2;
    }
}

#[inline]
fn words_ge(a: &[u64], b: &[u64]) -> bool {
    let len = a.len().max(b.len());
    for i in (0..len).rev() {
        let (x, y) = (a.get(i).copied().unwrap_or(0), b.get(i).copied().unwrap_or(0));
        if x != y {
            return x > y;
        }
    }
    true
}

fn words_bits(a: &[u64]) -> u32 {
    for i in (0..a.len()).rev() {
        if a[i] != 0 {
            return 64 * i as u32 + 64 - a[i].leading_zeros();
        }
    }
    0
}

impl CrtLevel {
    fn new(primes: &[Modulus], gadget_bits: u32) -> Self {
        let mut q = vec![1u64];
        for p in primes {
            q = words_mul_small(&q, p.value());
        }
        let mut half_q = q.clone();
        let mut carry = 0;
        for w in half_q.iter_mut().rev() {
            let next = *w & 1;
            *w = (*w >> 1) | (carry << 63);
            carry = next;
        }
        let mut qhat = Vec::with_capacity(primes.len());
        let mut qhat_inv = Vec::with_capacity(primes.len());
        for (i, pi) in primes.iter().enumerate() {
            let mut h = vec![1u64];
            let mut r = 1u64;
            for (j, pj) in primes.iter().enumerate() {
                if j != i {
                    h = words_mul_small(&h, pj.value());
                    r = pi.mul(r, pi.reduce(pj.value()));
                }
            }
            qhat.push(h);
            qhat_inv.push(pi.inv(r));
        }
        let digits = (words_bits(&half_q) as usize).div_ceil(gadget_bits as usize) + 1;
        CrtLevel {
            qhat,
            qhat_inv,
            q,
            half_q,
            digits,
        }
    }
}

impl CkksContext {
    pub fn new(params: SchemeParams, gadget_bits: u32) -> Result<Self> {
        params.validate()?;
        if !(1..=30).contains(&gadget_bits) {
            return Err(HeError::InvalidParams(format!(
                "gadget base 2^{gadget_bits} outside 2^1..2^30"
            )));
        }
        let n = params.poly_degree;
        let l = params.level;
        let bits = &params.modulus_bits;
        let no_prime = |what: &str| HeError::InvalidParams(format!("no NTT-friendly {what} prime for N = {n}"));
        let base = largest_ntt_prime(bits[0], n, &[]).ok_or_else(|| no_prime("base"))?;
        let special = largest_ntt_prime(bits[l + 1], n, &[base]).ok_or_else(|| no_prime("special"))?;
        let mut used = vec![base, special];
        let mut scaling = vec![0u64; l + 1];
        let mut scales = vec![0f64; l + 1];
        scales[l] = 2f64.powi(params.scale_bits as i32);
        let delta = scales[l];
        for lvl in (1..=l).rev() {
            let s = scales[lvl];
            let q = nearest_ntt_prime(s * (s / delta), n, &used).ok_or_else(|| no_prime("scaling"))?;
            used.push(q);
            scaling[lvl] = q;
            scales[lvl - 1] = s * (s / q as f64);
        }
        scaling[0] = base;
        let mut chain: Vec<Modulus> = scaling.iter().map(|&q| Modulus::new(q)).collect();
        chain.push(Modulus::new(special));
        let tables: Vec<NttTable> = chain.iter().map(|&q| NttTable::new(q, n)).collect();
        let crt: Vec<CrtLevel> = (0..=l).map(|lvl| CrtLevel::new(&chain[..=lvl], gadget_bits)).collect();
        let rescale_inv = (0..=l)
            .map(|lvl| {
                (0..lvl)
                    .map(|i| chain[i].inv(chain[i].reduce(chain[lvl].value())))
                    .collect()
            })
            .collect();
        let p = chain[l + 1];
        let special_inv = (0..=l).map(|i| chain[i].inv(chain[i].reduce(p.value()))).collect();
        let gadget = (0..crt[l].digits)
            .map(|k| {
                chain
                    .iter()
                    .map(|q| q.mul(q.reduce(p.value()), q.pow(2, gadget_bits as u64 * k as u64)))
                    .collect()
            })
            .collect();
        Ok(CkksContext {
            params,
            n,
            tables,
            scales,
            encoder: Encoder::new(n),
            gadget_bits,
            crt,
            rescale_inv,
            special_inv,
            gadget,
        })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn max_level(&self) -> usize {
        self.params.level
    }

    pub fn gadget_bits(&self) -> u32 {
        self.gadget_bits
    }

    /// Canonical scale of a fresh ciphertext at `level`.
    pub fn scale(&self, level: usize) -> f64 {
        self.scales[level]
    }

    /// Primes of the chain, base first, special last.
    pub fn primes(&self) -> Vec<u64> {
        self.tables.iter().map(|t| t.modulus().value()).collect()
    }

    pub(crate) fn special_index(&self) -> usize {
        self.params.level + 1
    }

    /// Tables for a ciphertext at `level`.
    pub(crate) fn level_tables(&self, level: usize) -> Vec<&NttTable> {
        self.tables[..=level].iter().collect()
    }

    /// Tables for key-switching temporaries at `level`: the ciphertext
    /// primes followed by the special prime.
    pub(crate) fn ks_tables(&self, level: usize) -> Vec<&NttTable> {
        let mut t = self.level_tables(level);
        t.push(&self.tables[self.special_index()]);
        t
    }

    /// Drops the last plane of an evaluation-domain polynomial, dividing
    /// by its prime with rounding. `inv[i]` is that prime's inverse mod
    /// the remaining prime `i`.
    fn divide_last(&self, poly: &mut RnsPoly, tables: &[&NttTable], inv: &[u64]) {
        debug_assert!(poly.ntt);
        let mut last = poly.limbs.pop().expect("at least two planes");
        let top = tables[poly.len()];
        top.inverse(&mut last);
        let qt = top.modulus();
        let centered: Vec<i64> = last.iter().map(|&x| qt.center(x)).collect();
        let mut tmp = vec![0u64; self.n];
        for (i, plane) in poly.limbs.iter_mut().enumerate() {
            let t = tables[i];
            let q = t.modulus();
            for (d, &c) in tmp.iter_mut().zip(&centered) {
                *d = q.from_i64(c);
            }
            t.forward(&mut tmp);
            let (f, fs) = (inv[i], q.shoup(inv[i]));
            for (x, &y) in plane.iter_mut().zip(&tmp) {
                *x = q.mul_shoup(q.sub(*x, y), f, fs);
            }
        }
    }

    /// Divides a level-`ℓ` polynomial by `q_ℓ`, leaving level `ℓ - 1`.
    pub(crate) fn rescale(&self, poly: &mut RnsPoly, level: usize) {
        let tables = self.level_tables(level);
        self.divide_last(poly, &tables, &self.rescale_inv[level]);
    }

    /// Divides a key-switching temporary by `P`.
    pub(crate) fn mod_down(&self, poly: &mut RnsPoly, level: usize) {
        let tables = self.ks_tables(level);
        self.divide_last(poly, &tables, &self.special_inv[..=level]);
    }

    /// Balanced base-`2^w` digits of each centered coefficient of a
    /// coefficient-domain polynomial at `level`. Digit magnitude is at
    /// most `2^(w-1)` and `Σ_k d_k 2^(wk)` recovers the coefficient.
    pub(crate) fn decompose(&self, poly: &RnsPoly, level: usize) -> Vec<Vec<i64>> {
        debug_assert!(!poly.ntt);
        let crt = &self.crt[level];
        let w = self.gadget_bits as usize;
        let base = 1i64 << w;
        let half = base >> 1;
        let mask = (base - 1) as u64;
        let width = level + 3;
        let primes: Vec<&Modulus> = self.tables[..=level].iter().map(|t| t.modulus()).collect();
        let inv_q: Vec<f64> = primes.iter().map(|q| 1.0 / q.value() as f64).collect();
        let mut out = vec![vec![0i64; self.n]; crt.digits];
        let mut acc = vec![0u64; width];
        for j in 0..self.n {
            acc.iter_mut().for_each(|x| *x = 0);
            let mut approx = 0.0;
            for (i, q) in primes.iter().enumerate() {
                let y = q.mul(poly.limbs[i][j], crt.qhat_inv[i]);
                words_fma(&mut acc, &crt.qhat[i], y);
                approx += y as f64 * inv_q[i];
            }
            // Underestimate the quotient so the remainder stays non-negative.
            let k = (approx.floor() as u64).saturating_sub(1);
            if k > 0 {
                let kq = words_mul_small(&crt.q, k);
                words_sub(&mut acc, &kq);
            }
            while words_ge(&acc, &crt.q) {
                words_sub(&mut acc, &crt.q);
            }
            let negative = !words_ge(&crt.half_q, &acc);
            if negative {
                let mut m = crt.q.clone();
                m.resize(width, 0);
                words_sub(&mut m, &acc);
                acc.copy_from_slice(&m);
            }
            let mut carry = 0i64;
            for (k, digit) in out.iter_mut().enumerate() {
                let bit = k * w;
                let (word, shift) = (bit / 64, bit % 64);
                let mut v = if word < width { acc[word] >> shift } else { 0 };
                if shift + w > 64 && word + 1 < width {
                    v |= acc[word + 1] << (64 - shift);
                }
                let mut d = (v & mask) as i64 + carry;
                if d >= half {
                    d -= base;
                    carry = 1;
                } else {
                    carry = 0;
                }
                digit[j] = if negative { -d } else { d };
            }
            debug_assert_eq!(carry, 0);
        }
        out
    }
}
