//! Word-sized prime moduli: Barrett and Shoup multiplication, primality
//! and NTT-friendly prime search.

/// A prime below 2^62 with its Barrett constant `floor(2^128 / q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    ratio: [u64; 2],
}

impl Modulus {
    pub fn new(value: u64) -> Self {
        assert!(value > 1 && value < (1 << 62), "modulus {value} outside 2..2^62");
        let r = u128::MAX / value as u128;
        Modulus {
            value,
            ratio: [r as u64, (r >> 64) as u64],
        }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn bits(&self) -> u32 {
        64 - self.value.leading_zeros()
    }

    /// Reduces any 128-bit value.
    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let (lo, hi) = (x as u64, (x >> 64) as u64);
        let [r0, r1] = self.ratio;
        let carry = ((lo as u128 * r0 as u128) >> 64) as u64;
        let t = lo as u128 * r1 as u128;
        let (mid, c1) = (t as u64).overflowing_add(carry);
        let upper = ((t >> 64) as u64) + c1 as u64;
        let t2 = hi as u128 * r0 as u128;
        let (_, c2) = mid.overflowing_add(t2 as u64);
        let carry2 = ((t2 >> 64) as u64) + c2 as u64;
        let quot = hi.wrapping_mul(r1).wrapping_add(upper).wrapping_add(carry2);
        let r = lo.wrapping_sub(quot.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        if x < self.value {
            x
        } else {
            self.reduce_u128(x as u128)
        }
    }

    /// Residue of a signed value.
    #[inline]
    pub fn from_i64(&self, x: i64) -> u64 {
        let r = self.reduce(x.unsigned_abs());
        if x < 0 && r != 0 {
            self.value - r
        } else {
            r
        }
    }

    pub fn from_i128(&self, x: i128) -> u64 {
        let r = self.reduce_u128(x.unsigned_abs());
        if x < 0 && r != 0 {
            self.value - r
        } else {
            r
        }
    }

    /// Centered representative in `(-q/2, q/2]`.
    #[inline]
    pub fn center(&self, x: u64) -> i64 {
        if x > self.value / 2 {
            x as i64 - self.value as i64
        } else {
            x as i64
        }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// `floor(w · 2^64 / q)` for use with [`Modulus::mul_shoup`]; `w < q`.
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// `a · w mod q` given `w_shoup = self.shoup(w)`.
    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let quot = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(quot.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.value;
        base = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse modulo a prime via Fermat.
    pub fn inv(&self, a: u64) -> u64 {
        assert!(self.reduce(a) != 0, "zero has no inverse");
        self.pow(a, self.value - 2)
    }
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_u64(acc, b, m);
        }
        b = mul_mod_u64(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for p in BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'bases: for a in BASES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

/// Prime `p ≡ 1 (mod 2n)` nearest to `target`, skipping `exclude`.
/// Ties go to the smaller candidate.
pub fn nearest_ntt_prime(target: f64, n: usize, exclude: &[u64]) -> Option<u64> {
    let step = 2 * n as u64;
    if target < step as f64 || target >= (1u64 << 62) as f64 {
        return None;
    }
    let base = (target / step as f64).round() as u64 * step + 1;
    let ok = |p: u64| p > step && p < (1 << 62) && is_prime(p) && !exclude.contains(&p);
    let dist = |p: u64| (p as f64 - target).abs();
    let mut below = base;
    let mut above = base + step;
    // Examine candidates in order of distance from the target.
    for _ in 0..(1 << 20) {
        let pick_below = below > step && (dist(below) <= dist(above));
        let cand = if pick_below { below } else { above };
        if ok(cand) {
            return Some(cand);
        }
        if pick_below {
            below -= step;
        } else {
            above += step;
        }
    }
    None
}

/// Largest prime `p ≡ 1 (mod 2n)` below `2^bits`, skipping `exclude`.
pub fn largest_ntt_prime(bits: u32, n: usize, exclude: &[u64]) -> Option<u64> {
    let step = 2 * n as u64;
    let top = 1u64 << bits;
    let mut p = (top - 1) / step * step + 1;
    while p > step {
        if is_prime(p) && !exclude.contains(&p) {
            return Some(p);
        }
        p -= step;
    }
    None
}

/// Primitive `2n`-th root of unity modulo the prime `q`; the smallest one
/// derived from the first suitable generator candidate.
pub fn primitive_root_2n(q: &Modulus, n: usize) -> u64 {
    let m = 2 * n as u64;
    let qv = q.value();
    assert_eq!((qv - 1) % m, 0, "{qv} is not 1 mod {m}");
    for g in 2..qv {
        let psi = q.pow(g, (qv - 1) / m);
        if q.pow(psi, n as u64) == qv - 1 {
            return psi;
        }
    }
    unreachable!("prime field always has a primitive root")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q: u64 = 0x3fff_ffff_000a_0001;

    proptest! {
        #[test]
        fn barrett_matches_u128_rem(a in any::<u64>(), b in any::<u64>(), q in 2u64..(1 << 62)) {
            let m = Modulus::new(q);
            let x = a as u128 * b as u128;
            prop_assert_eq!(m.reduce_u128(x), (x % q as u128) as u64);
        }

        #[test]
        fn shoup_matches_mul(a in any::<u64>(), w in any::<u64>(), q in 2u64..(1 << 62)) {
            let m = Modulus::new(q);
            let w = w % q;
            let a = a % q;
            prop_assert_eq!(m.mul_shoup(a, w, m.shoup(w)), m.mul(a, w));
        }

        #[test]
        fn signed_residues(x in any::<i64>()) {
            let m = Modulus::new(Q);
            let r = m.from_i64(x);
            prop_assert_eq!(r as i128, (x as i128).rem_euclid(Q as i128));
            prop_assert_eq!(m.from_i128(x as i128), r);
        }
    }

    #[test]
    fn primality_agrees_with_trial_division() {
        let trial = |n: u64| n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d));
        for n in 0..5000 {
            assert_eq!(is_prime(n), trial(n), "{n}");
        }
        assert!(is_prime((1 << 61) - 1));
        assert!(!is_prime(3_215_031_751));
    }

    #[test]
    fn ntt_primes_and_roots() {
        let n = 1 << 10;
        let p = largest_ntt_prime(40, n, &[]).unwrap();
        assert!(p < 1 << 40 && p % (2 * n as u64) == 1);
        let q = largest_ntt_prime(40, n, &[p]).unwrap();
        assert!(q < p);
        let near = nearest_ntt_prime(1.5 * (1u64 << 40) as f64, n, &[]).unwrap();
        assert_eq!(near % (2 * n as u64), 1);
        assert!((near as f64 / (1u64 << 40) as f64 - 1.5).abs() < 1e-3);
        let m = Modulus::new(p);
        let psi = primitive_root_2n(&m, n);
        assert_eq!(m.pow(psi, 2 * n as u64), 1);
        assert_eq!(m.pow(psi, n as u64), p - 1);
        assert_eq!(m.mul(m.inv(psi), psi), 1);
    }
}
