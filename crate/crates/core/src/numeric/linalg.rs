//! Dense symmetric positive-definite solves for small Newton systems.

use alloc::vec::Vec;

/// Row-major `n x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: alloc::vec![0.0; n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += scale * v v^T`.
    pub fn add_outer(&mut self, v: &[f64], scale: f64) {
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = &mut self.data[i * self.n..(i + 1) * self.n];
            for (r, &vj) in row.iter_mut().zip(v) {
                *r += scale * vi * vj;
            }
        }
    }

    /// Sparse variant of [`add_outer`](Self::add_outer) for `(index, value)` terms.
    pub fn add_outer_sparse(&mut self, terms: &[(usize, f64)], scale: f64) {
        for &(i, vi) in terms {
            for &(j, vj) in terms {
                self.add(i, j, scale * vi * vj);
            }
        }
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max)
    }
}

/// In-place Cholesky factorization `A = L L^T`; returns `false` if `A` is not
/// numerically positive definite.
fn factor(a: &mut Matrix) -> bool {
    let n = a.n;
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            let l = a.get(j, k);
            d -= l * l;
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = libm::sqrt(d);
        a.data[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= a.get(i, k) * a.get(j, k);
            }
            a.data[i * n + j] = s / d;
        }
    }
    true
}

fn substitute(l: &Matrix, rhs: &mut [f64]) {
    let n = l.n;
    for i in 0..n {
        let s = rhs[i] - (0..i).map(|k| l.get(i, k) * rhs[k]).sum::<f64>();
        rhs[i] = s / l.get(i, i);
    }
    for i in (0..n).rev() {
        let s = rhs[i] - (i + 1..n).map(|k| l.get(k, i) * rhs[k]).sum::<f64>();
        rhs[i] = s / l.get(i, i);
    }
}

/// Solves `A x = rhs` for symmetric positive (semi)definite `A`, adding a
/// growing diagonal shift when the factorization breaks down.
pub fn solve_spd(a: &Matrix, rhs: &[f64]) -> Option<Vec<f64>> {
    let scale = a.max_abs_diagonal().max(f64::MIN_POSITIVE);
    let mut shift = 0.0;
    for _ in 0..20 {
        let mut work = a.clone();
        for i in 0..a.n {
            work.data[i * a.n + i] += shift;
        }
        if factor(&mut work) {
            let mut x = rhs.to_vec();
            substitute(&work, &mut x);
            if x.iter().all(|v| v.is_finite()) {
                return Some(x);
            }
        }
        shift = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
    }
    None
}
