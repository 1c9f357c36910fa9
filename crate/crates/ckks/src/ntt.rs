//! Negacyclic NTT over `Z_q[X]/(X^N + 1)`.
//!
//! Forward is Cooley-Tukey taking natural-order coefficients to
//! bit-reversed evaluations; inverse is Gentleman-Sande back to natural
//! order. Twiddles are powers of a primitive 2N-th root in bit-reversed
//! order with Shoup companions.

use crate::modulus::{primitive_root_2n, Modulus};

#[derive(Clone, Debug)]
pub struct NttTable {
    q: Modulus,
    n: usize,
    psi: Vec<u64>,
    psi_shoup: Vec<u64>,
    ipsi: Vec<u64>,
    ipsi_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

impl NttTable {
    pub fn new(q: Modulus, n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2);
        let root = primitive_root_2n(&q, n);
        let iroot = q.inv(root);
        let bits = n.trailing_zeros();
        let mut psi = vec![0; n];
        let mut ipsi = vec![0; n];
        let (mut p, mut ip) = (1u64, 1u64);
        for i in 0..n {
            let r = bit_reverse(i, bits);
            psi[r] = p;
            ipsi[r] = ip;
            p = q.mul(p, root);
            ip = q.mul(ip, iroot);
        }
        let psi_shoup = psi.iter().map(|&w| q.shoup(w)).collect();
        let ipsi_shoup = ipsi.iter().map(|&w| q.shoup(w)).collect();
        let n_inv = q.inv(n as u64);
        NttTable {
            q,
            n,
            psi,
            psi_shoup,
            ipsi,
            ipsi_shoup,
            n_inv,
            n_inv_shoup: q.shoup(n_inv),
        }
    }

    pub fn modulus(&self) -> &Modulus {
        &self.q
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = &self.q;
        let mut t = self.n;
        let mut m = 1;
        while m < self.n {
            t >>= 1;
            for i in 0..m {
                let (w, ws) = (self.psi[m + i], self.psi_shoup[m + i]);
                let j1 = 2 * i * t;
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = q.mul_shoup(*y, w, ws);
                    *x = q.add(u, v);
                    *y = q.sub(u, v);
                }
            }
            m <<= 1;
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = &self.q;
        let mut t = 1;
        let mut m = self.n;
        while m > 1 {
            let h = m >> 1;
            for i in 0..h {
                let (w, ws) = (self.ipsi[h + i], self.ipsi_shoup[h + i]);
                let j1 = 2 * i * t;
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (u, v) = (*x, *y);
                    *x = q.add(u, v);
                    *y = q.mul_shoup(q.sub(u, v), w, ws);
                }
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = q.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }
}

/// O(N²) negacyclic product, the reference for NTT multiplication.
pub fn schoolbook_negacyclic(q: &Modulus, a: &[u64], b: &[u64]) -> Vec<u64> {
    let n = a.len();
    let mut out = vec![0u64; n];
    for i in 0..n {
        for j in 0..n {
            let p = q.mul(a[i], b[j]);
            let k = i + j;
            if k < n {
                out[k] = q.add(out[k], p);
            } else {
                out[k - n] = q.sub(out[k - n], p);
            }
        }
    }
    out
}
