//! Canonical-embedding encoder for real slot vectors.
//!
//! Slot `j` holds `m(ζ^(5^j))` for `ζ = exp(iπ/N)`, so the automorphism
//! `X ↦ X^(5^k)` rotates slots left by `k`. Real inputs are embedded with
//! zero imaginary part, and decoding keeps the real part.

use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct Encoder {
    n: usize,
    rot_group: Vec<usize>,
    /// `exp(2πi j / 2N)` for `j ∈ 0..=2N`.
    ksi: Vec<Complex64>,
}

impl Encoder {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2);
        let m = 2 * n;
        let slots = n / 2;
        let mut rot_group = Vec::with_capacity(slots);
        let mut g = 1usize;
        for _ in 0..slots {
            rot_group.push(g);
            g = g * 5 % m;
        }
        let ksi = (0..=m)
            .map(|j| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / m as f64))
            .collect();
        Encoder { n, rot_group, ksi }
    }

    pub fn slots(&self) -> usize {
        self.n / 2
    }

    /// Galois element `5^k mod 2N` realizing a left rotation by `k`.
    pub fn galois_element(&self, k: usize) -> usize {
        let m = 2 * self.n;
        let mut g = 1usize;
        let mut base = 5usize;
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                g = g * base % m;
            }
            base = base * base % m;
            e >>= 1;
        }
        g
    }

    fn bit_reverse(vals: &mut [Complex64]) {
        let n = vals.len();
        let mut j = 0;
        for i in 1..n {
            let mut bit = n >> 1;
            while j & bit != 0 {
                j ^= bit;
                bit >>= 1;
            }
            j ^= bit;
            if i < j {
                vals.swap(i, j);
            }
        }
    }

    fn special_fft(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.n;
        Self::bit_reverse(vals);
        let mut len = 2;
        while len <= size {
            let (half, quarter) = (len >> 1, len << 2);
            let gap = m / quarter;
            for i in (0..size).step_by(len) {
                for j in 0..half {
                    let idx = (self.rot_group[j] % quarter) * gap;
                    let u = vals[i + j];
                    let v = vals[i + j + half] * self.ksi[idx];
                    vals[i + j] = u + v;
                    vals[i + j + half] = u - v;
                }
            }
            len <<= 1;
        }
    }

    fn special_ifft(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.n;
        let mut len = size;
        while len >= 2 {
            let (half, quarter) = (len >> 1, len << 2);
            let gap = m / quarter;
            for i in (0..size).step_by(len) {
                for j in 0..half {
                    let idx = (quarter - self.rot_group[j] % quarter) * gap;
                    let u = vals[i + j] + vals[i + j + half];
                    let v = (vals[i + j] - vals[i + j + half]) * self.ksi[idx];
                    vals[i + j] = u;
                    vals[i + j + half] = v;
                }
            }
            len >>= 1;
        }
        Self::bit_reverse(vals);
        let inv = 1.0 / size as f64;
        for v in vals.iter_mut() {
            *v *= inv;
        }
    }

    /// Real coefficients of the (unrounded) plaintext polynomial scaled by
    /// `scale`; `values` shorter than the slot count is zero-padded.
    pub fn encode(&self, values: &[f64], scale: f64) -> Vec<f64> {
        let slots = self.slots();
        assert!(values.len() <= slots);
        let mut u: Vec<Complex64> = (0..slots)
            .map(|i| Complex64::new(values.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.special_ifft(&mut u);
        let mut coeffs = vec![0.0; self.n];
        for (i, z) in u.iter().enumerate() {
            coeffs[i] = z.re * scale;
            coeffs[i + slots] = z.im * scale;
        }
        coeffs
    }

    /// Slot values of a polynomial given by its (centered) coefficients.
    pub fn decode(&self, coeffs: &[f64], scale: f64) -> Vec<f64> {
        let slots = self.slots();
        assert_eq!(coeffs.len(), self.n);
        let mut u: Vec<Complex64> = (0..slots)
            .map(|i| Complex64::new(coeffs[i] / scale, coeffs[i + slots] / scale))
            .collect();
        self.special_fft(&mut u);
        u.into_iter().map(|z| z.re).collect()
    }
}
