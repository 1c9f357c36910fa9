//! Ring elements of `Z_Q[X]/(X^N + 1)` held as residue planes.

use crate::ntt::NttTable;

/// One residue plane per prime, in the order of the table slice used to
/// build it. `ntt` records whether planes hold evaluations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnsPoly {
    pub limbs: Vec<Vec<u64>>,
    pub ntt: bool,
}

impl RnsPoly {
    pub fn zero(n: usize, limbs: usize, ntt: bool) -> Self {
        RnsPoly {
            limbs: vec![vec![0; n]; limbs],
            ntt,
        }
    }

    /// Residues of a small signed polynomial on every listed prime.
    pub fn from_signed(coeffs: &[i64], tables: &[&NttTable]) -> Self {
        let limbs = tables
            .iter()
            .map(|t| coeffs.iter().map(|&c| t.modulus().from_i64(c)).collect())
            .collect();
        RnsPoly { limbs, ntt: false }
    }

    pub fn len(&self) -> usize {
        self.limbs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.limbs.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.limbs.first().map_or(0, Vec::len)
    }

    pub fn to_ntt(&mut self, tables: &[&NttTable]) {
        if !self.ntt {
            for (l, t) in self.limbs.iter_mut().zip(tables) {
                t.forward(l);
            }
            self.ntt = true;
        }
    }

    pub fn to_coeff(&mut self, tables: &[&NttTable]) {
        if self.ntt {
            for (l, t) in self.limbs.iter_mut().zip(tables) {
                t.inverse(l);
            }
            self.ntt = false;
        }
    }

    pub fn add_assign(&mut self, o: &RnsPoly, tables: &[&NttTable]) {
        debug_assert_eq!(self.ntt, o.ntt);
        for ((a, b), t) in self.limbs.iter_mut().zip(&o.limbs).zip(tables) {
            let q = t.modulus();
            a.iter_mut().zip(b).for_each(|(x, y)| *x = q.add(*x, *y));
        }
    }

    pub fn sub_assign(&mut self, o: &RnsPoly, tables: &[&NttTable]) {
        debug_assert_eq!(self.ntt, o.ntt);
        for ((a, b), t) in self.limbs.iter_mut().zip(&o.limbs).zip(tables) {
            let q = t.modulus();
            a.iter_mut().zip(b).for_each(|(x, y)| *x = q.sub(*x, *y));
        }
    }

    pub fn neg_assign(&mut self, tables: &[&NttTable]) {
        for (a, t) in self.limbs.iter_mut().zip(tables) {
            let q = t.modulus();
            a.iter_mut().for_each(|x| *x = q.neg(*x));
        }
    }

    /// Pointwise product; both operands in the evaluation domain.
    pub fn mul_assign(&mut self, o: &RnsPoly, tables: &[&NttTable]) {
        debug_assert!(self.ntt && o.ntt);
        for ((a, b), t) in self.limbs.iter_mut().zip(&o.limbs).zip(tables) {
            let q = t.modulus();
            a.iter_mut().zip(b).for_each(|(x, y)| *x = q.mul(*x, *y));
        }
    }

    /// `self += a ⊙ b` in the evaluation domain.
    pub fn fma_assign(&mut self, a: &RnsPoly, b: &RnsPoly, tables: &[&NttTable]) {
        for (((acc, x), y), t) in self.limbs.iter_mut().zip(&a.limbs).zip(&b.limbs).zip(tables) {
            let q = t.modulus();
            for ((r, u), v) in acc.iter_mut().zip(x).zip(y) {
                *r = q.add(*r, q.mul(*u, *v));
            }
        }
    }

    /// Multiplies plane `i` by the residue `factors[i]`.
    pub fn mul_residues(&mut self, factors: &[u64], tables: &[&NttTable]) {
        for ((a, &f), t) in self.limbs.iter_mut().zip(factors).zip(tables) {
            let q = t.modulus();
            let fs = q.shoup(f);
            a.iter_mut().for_each(|x| *x = q.mul_shoup(*x, f, fs));
        }
    }

    /// Adds the residue `terms[i]` to every entry of plane `i`. In the
    /// evaluation domain this adds a constant polynomial.
    pub fn add_residues(&mut self, terms: &[u64], tables: &[&NttTable]) {
        for ((a, &c), t) in self.limbs.iter_mut().zip(terms).zip(tables) {
            let q = t.modulus();
            a.iter_mut().for_each(|x| *x = q.add(*x, c));
        }
    }

    /// `X ↦ X^g` on a coefficient-domain polynomial.
    pub fn automorphism(&self, g: usize, tables: &[&NttTable]) -> RnsPoly {
        assert!(!self.ntt, "automorphism expects coefficients");
        let n = self.degree();
        let mask = 2 * n - 1;
        let limbs = self
            .limbs
            .iter()
            .zip(tables)
            .map(|(a, t)| {
                let q = t.modulus();
                let mut out = vec![0u64; n];
                for (i, &x) in a.iter().enumerate() {
                    let j = (i * g) & mask;
                    if j < n {
                        out[j] = x;
                    } else {
                        out[j - n] = q.neg(x);
                    }
                }
                out
            })
            .collect();
        RnsPoly { limbs, ntt: false }
    }
}
