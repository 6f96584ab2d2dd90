//! Small dense complex matrices and vectors.
//!
//! Everything in the simulator is low-dimensional (channel matrices are
//! M x N with a handful of antennas), so matrices are plain row-major
//! `Vec<Complex64>` and systems are solved by Gaussian elimination with
//! partial pivoting. No explicit inverses anywhere.

use num_complex::Complex64;

pub type C64 = Complex64;

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, C64::ONE);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_cols(cols: &[Vec<C64>]) -> Self {
        assert!(!cols.is_empty());
        let rows = cols[0].len();
        Self::from_fn(rows, cols.len(), |r, c| cols[c][r])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matrix product shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == C64::ZERO {
                    continue;
                }
                for c in 0..other.cols {
                    let v = out.get(r, c) + a * other.get(k, c);
                    out.set(r, c, v);
                }
            }
        }
        out
    }

    pub fn mat_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "matrix-vector shape mismatch");
        let mut out = vec![C64::ZERO; self.rows];
        for r in 0..self.rows {
            let mut acc = C64::ZERO;
            for (a, x) in self.row(r).iter().zip(v) {
                acc += a * x;
            }
            out[r] = acc;
        }
        out
    }

    /// self += w * a * b^H  (rank-one update).
    pub fn add_scaled_outer(&mut self, a: &[C64], b: &[C64], w: f64) {
        assert_eq!(a.len(), self.rows);
        assert_eq!(b.len(), self.cols);
        for r in 0..self.rows {
            let wa = w * a[r];
            for c in 0..self.cols {
                let v = self.get(r, c) + wa * b[c].conj();
                self.set(r, c, v);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn fro_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Solution of a linear system together with a cheap conditioning estimate
/// (ratio of largest to smallest pivot magnitude from the elimination).
pub struct Solved {
    pub x: CMat,
    pub cond_proxy: f64,
}

/// Solves A X = B by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot is exactly zero (hard singular). Callers
/// apply their own conditioning threshold to `cond_proxy`.
pub fn solve(a: &CMat, b: &CMat) -> Option<Solved> {
    assert_eq!(a.rows, a.cols, "solve expects a square system");
    assert_eq!(a.rows, b.rows, "rhs row count mismatch");
    let n = a.rows;
    let mut lhs = a.clone();
    let mut rhs = b.clone();
    let mut max_piv = 0.0f64;
    let mut min_piv = f64::INFINITY;

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                lhs.get(i, col)
                    .norm_sqr()
                    .total_cmp(&lhs.get(j, col).norm_sqr())
            })
            .unwrap();
        let piv_mag = lhs.get(pivot_row, col).norm();
        if piv_mag == 0.0 {
            return None;
        }
        max_piv = max_piv.max(piv_mag);
        min_piv = min_piv.min(piv_mag);
        if pivot_row != col {
            for c in 0..n {
                let tmp = lhs.get(col, c);
                lhs.set(col, c, lhs.get(pivot_row, c));
                lhs.set(pivot_row, c, tmp);
            }
            for c in 0..rhs.cols {
                let tmp = rhs.get(col, c);
                rhs.set(col, c, rhs.get(pivot_row, c));
                rhs.set(pivot_row, c, tmp);
            }
        }
        let piv = lhs.get(col, col);
        for r in col + 1..n {
            let factor = lhs.get(r, col) / piv;
            if factor == C64::ZERO {
                continue;
            }
            for c in col..n {
                let v = lhs.get(r, c) - factor * lhs.get(col, c);
                lhs.set(r, c, v);
            }
            for c in 0..rhs.cols {
                let v = rhs.get(r, c) - factor * rhs.get(col, c);
                rhs.set(r, c, v);
            }
        }
    }

    // Back substitution.
    let mut x = CMat::zeros(n, rhs.cols);
    for c in 0..rhs.cols {
        for r in (0..n).rev() {
            let mut acc = rhs.get(r, c);
            for k in r + 1..n {
                acc -= lhs.get(r, k) * x.get(k, c);
            }
            x.set(r, c, acc / lhs.get(r, r));
        }
    }

    Some(Solved {
        x,
        cond_proxy: max_piv / min_piv,
    })
}

/// Solves X G = B for X (i.e. X = B G^{-1}) given Hermitian G, via
/// G X^H = B^H.
pub fn solve_right(b: &CMat, g: &CMat) -> Option<Solved> {
    let solved = solve(g, &b.hermitian())?;
    Some(Solved {
        x: solved.x.hermitian(),
        cond_proxy: solved.cond_proxy,
    })
}

pub fn norm_sq(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Re <a, b> = Re(b^H a).
pub fn re_inner(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x * y.conj()).re).sum()
}

/// Squared Euclidean distance between complex vectors, accumulated
/// component-wise as re^2 then im^2 per entry.
///
/// This exact accumulation order is shared with the KD-tree distance over
/// interleaved (re, im) embeddings so the two detection paths produce
/// bit-identical metrics.
#[inline]
pub fn dist_sq(a: &[C64], b: &[C64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dr = x.re - y.re;
        acc += dr * dr;
        let di = x.im - y.im;
        acc += di * di;
    }
    acc
}
