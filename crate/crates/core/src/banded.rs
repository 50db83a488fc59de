//! Banded matrices and LU factorization with partial pivoting.
//!
//! Storage follows the LAPACK `gbtrf` idea: the factor keeps `kl` extra
//! superdiagonals for the fill-in created by row interchanges, and the
//! multipliers of step `k` are not permuted by later interchanges.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    // row i holds columns i-kl ..= i+ku
    data: Vec<f64>,
}

impl fmt::Debug for BandMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BandMatrix")
            .field("n", &self.n)
            .field("kl", &self.kl)
            .field("ku", &self.ku)
            .finish()
    }
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let kl = kl.min(n.saturating_sub(1));
        let ku = ku.min(n.saturating_sub(1));
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn identity(n: usize, kl: usize, ku: usize) -> Self {
        let mut m = Self::zeros(n, kl, ku);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Panics if `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Returns `I - scale · self`, the iteration matrix of implicit stages.
    pub fn identity_minus_scaled(&self, scale: f64) -> BandMatrix {
        let mut m = self.clone();
        for v in &mut m.data {
            *v *= -scale;
        }
        for i in 0..self.n {
            m.add(i, i, 1.0);
        }
        m
    }

    pub fn factor(&self) -> Result<BandLu, SingularMatrix> {
        BandLu::new(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularMatrix {
    pub column: usize,
}

impl fmt::Display for SingularMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "zero pivot in column {}", self.column)
    }
}

impl std::error::Error for SingularMatrix {}

#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    // upper bandwidth of U, ku + kl
    ku_ext: usize,
    // row i holds columns i-kl ..= i+ku_ext
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    fn width(&self) -> usize {
        self.kl + self.ku_ext + 1
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width() + (j + self.kl - i)
    }

    pub fn new(a: &BandMatrix) -> Result<Self, SingularMatrix> {
        let n = a.n;
        let kl = a.kl;
        let ku_ext = (a.ku + kl).min(n.saturating_sub(1));
        let mut lu = BandLu {
            n,
            kl,
            ku_ext,
            data: vec![0.0; n * (kl + ku_ext + 1)],
            pivots: vec![0; n],
        };
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + a.ku).min(n - 1);
            for j in lo..=hi {
                let k = lu.idx(i, j);
                lu.data[k] = a.get(i, j);
            }
        }

        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku_ext).min(n - 1);

            let mut p = k;
            let mut best = lu.data[lu.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = lu.data[lu.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            lu.pivots[k] = p;
            if best == 0.0 || !best.is_finite() {
                return Err(SingularMatrix { column: k });
            }
            if p != k {
                for j in k..=last_col {
                    let a_idx = lu.idx(k, j);
                    let b_idx = lu.idx(p, j);
                    lu.data.swap(a_idx, b_idx);
                }
            }

            let pivot = lu.data[lu.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = lu.idx(i, k);
                let l = lu.data[ik] / pivot;
                lu.data[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let kj = lu.data[lu.idx(k, j)];
                        let ij = lu.idx(i, j);
                        lu.data[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.data[self.idx(i, k)] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..=(i + self.ku_ext).min(n - 1) {
                acc -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = acc / self.data[self.idx(i, i)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
