//! Banded matrices with a pivot-free LU solve and a Jacobi-preconditioned
//! conjugate gradient.
//!
//! The cell systems assembled by the solvers are symmetric with a
//! non-negative diagonal shift on top of a weighted graph Laplacian carrying
//! Dirichlet terms, so they are positive definite and diagonally dominant:
//! LU without pivoting is stable for them.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        BandedMatrix {
            n,
            bw: bandwidth,
            data: vec![0.0; n * (2 * bandwidth + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw, "entry ({i}, {j}) outside band");
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.slot(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.slot(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Dense copy, row-major.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Solves `A x = b` by banded Gaussian elimination without pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let bw = self.bw;
        let mut a = self.clone();
        let mut x = b.to_vec();
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let pivot = a.data[a.slot(k, k)];
            if !(pivot.abs() > 1e-300 * scale.max(1.0)) || !pivot.is_finite() {
                return Err(Error::Numerical(format!("zero pivot {pivot:e} at row {k}")));
            }
            let hi = (k + bw).min(n - 1);
            for i in k + 1..=hi {
                let l = a.data[a.slot(i, k)] / pivot;
                if l == 0.0 {
                    continue;
                }
                for j in k..=hi {
                    let s = a.slot(k, j);
                    let v = a.data[s];
                    let t = a.slot(i, j);
                    a.data[t] -= l * v;
                }
                x[i] -= l * x[k];
            }
        }
        for k in (0..n).rev() {
            let hi = (k + bw).min(n - 1);
            let mut s = x[k];
            for j in k + 1..=hi {
                s -= a.data[a.slot(k, j)] * x[j];
            }
            x[k] = s / a.data[a.slot(k, k)];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite linear solve result".into()));
        }
        Ok(x)
    }

    /// Jacobi-preconditioned conjugate gradient for symmetric positive
    /// definite matrices. Stops when `|r| <= tol |b|`.
    pub fn solve_cg(&self, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let n = self.n;
        let diag = self.diagonal();
        if diag.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Numerical("CG needs a positive diagonal".into()));
        }
        let bnorm = dot(b, b).sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..max_iter {
            let ap = self.matvec(&p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::Numerical(
                    "CG breakdown: matrix not positive definite".into(),
                ));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if dot(&r, &r).sqrt() <= tol * bnorm {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::NonConvergence {
            context: "conjugate gradient".into(),
            iterations: max_iter,
            residual: dot(&r, &r).sqrt() / bnorm,
        })
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize, shift: f64) -> BandedMatrix {
        let mut a = BandedMatrix::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0 + shift);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn tridiagonal_solve_matches_known_solution() {
        let a = laplacian(6, 0.0);
        let x_true: Vec<f64> = (0..6).map(|i| (i as f64).sin() + 1.0).collect();
        let b = a.matvec(&x_true);
        let x = a.solve(&b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-13);
        }
        let x = a.solve_cg(&b, 1e-14, 100).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-11);
        }
    }

    #[test]
    fn wide_band_solve() {
        // 2D 4x4 five-point operator, bandwidth 4
        let (nx, ny) = (4, 4);
        let n = nx * ny;
        let mut a = BandedMatrix::zeros(n, nx);
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                a.add(c, c, 4.5);
                if i > 0 {
                    a.add(c, c - 1, -1.0);
                }
                if i + 1 < nx {
                    a.add(c, c + 1, -1.0);
                }
                if j > 0 {
                    a.add(c, c - nx, -1.0);
                }
                if j + 1 < ny {
                    a.add(c, c + nx, -1.0);
                }
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 - 0.7).collect();
        let b = a.matvec(&x_true);
        let x = a.solve(&b).unwrap();
        assert!(x.iter().zip(&x_true).all(|(u, v)| (u - v).abs() < 1e-13));
        assert_eq!(a.get(0, 15), 0.0);
        assert_eq!(a.to_dense()[5][1], -1.0);
    }

    #[test]
    fn singular_matrix_reported() {
        let a = BandedMatrix::zeros(3, 1);
        assert!(matches!(
            a.solve(&[1.0, 1.0, 1.0]),
            Err(Error::Numerical(_))
        ));
        assert!(a.solve_cg(&[1.0, 0.0, 0.0], 1e-10, 10).is_err());
    }

    #[test]
    fn cg_iteration_budget() {
        let a = laplacian(50, 0.0);
        let b = vec![1.0; 50];
        assert!(matches!(
            a.solve_cg(&b, 1e-14, 2),
            Err(Error::NonConvergence { .. })
        ));
    }
}
