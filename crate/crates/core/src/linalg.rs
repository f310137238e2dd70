//! Symmetric positive-definite algebra for the analysis path (always `f64`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Default jitter, relative to the mean diagonal entry.
pub const DEFAULT_JITTER: f64 = 1e-6;

/// A symmetric `n × n` matrix. Symmetry is exact: only the upper triangle is
/// ever computed, and the lower triangle mirrors it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    order: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    /// Wraps a square matrix, replacing the lower triangle by the upper one.
    pub fn from_upper(m: &Matrix) -> Result<Self> {
        if m.rank() != 2 || m.rows() != m.cols() {
            return Err(Error::shape(format!("expected square matrix, got {:?}", m.shape())));
        }
        let n = m.rows();
        let mut entries = m.data().to_vec();
        for i in 0..n {
            for j in 0..i {
                entries[i * n + j] = entries[j * n + i];
            }
        }
        Ok(Self { order: n, entries })
    }

    /// `(1/m) · Z Zᵀ` for `Z` with units as rows and samples as columns.
    pub fn gram(z: &Matrix) -> Self {
        let (n, m) = (z.rows(), z.cols());
        let mut entries = vec![0.0; n * n];
        let inv_m = 1.0 / m as f64;
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let zi = z.row(i);
                (i..n)
                    .map(|j| zi.iter().zip(z.row(j)).map(|(a, b)| a * b).sum::<f64>() * inv_m)
                    .collect()
            })
            .collect();
        for (i, row) in upper.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                entries[i * n + i + off] = v;
                entries[(i + off) * n + i] = v;
            }
        }
        Self { order: n, entries }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_upper(&Matrix::identity(n)).expect("square")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.order + j]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        (0..self.order).map(|i| self.get(i, i)).sum()
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_parts(vec![self.order, self.order], self.entries.clone())
    }

    /// Restriction to the given index set (in order).
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let k = idx.len();
        let mut entries = Vec::with_capacity(k * k);
        for &i in idx {
            for &j in idx {
                entries.push(self.get(i, j));
            }
        }
        Self { order: k, entries }
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::factor(self)
    }
}

/// Adds `eps · trace(s)/n` to every diagonal entry.
pub fn add_jitter(s: &SymMatrix, eps: f64) -> SymMatrix {
    assert!(eps >= 0.0, "jitter must be non-negative");
    let n = s.order;
    let bump = eps * s.trace() / n as f64;
    let mut out = s.clone();
    for i in 0..n {
        out.entries[i * n + i] += bump;
    }
    out
}

/// Lower-triangular Cholesky factor `L` with `S = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(s: &SymMatrix) -> Result<Self> {
        let n = s.order;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = s.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut v = s.get(i, j);
                for k in 0..j {
                    v -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = v / djj;
            }
        }
        Ok(Self { n, l })
    }

    /// Diagonal of `L`, i.e. the square roots of the pivots.
    pub fn pivots(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.l[i * self.n + i]).collect()
    }

    /// Solves `S x = b` in place for one right-hand side.
    fn solve_vec(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= self.l[i * n + k] * b[k];
            }
            b[i] = v / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in i + 1..n {
                v -= self.l[k * n + i] * b[k];
            }
            b[i] = v / self.l[i * n + i];
        }
    }

    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        if rhs.rank() != 2 || rhs.rows() != self.n {
            return Err(Error::shape(format!(
                "rhs {:?} does not match system order {}",
                rhs.shape(),
                self.n
            )));
        }
        let cols = rhs.cols();
        let mut out = Matrix::zeros(vec![self.n, cols]);
        let mut col = vec![0.0; self.n];
        for j in 0..cols {
            for i in 0..self.n {
                col[i] = rhs.get(i, j);
            }
            self.solve_vec(&mut col);
            for i in 0..self.n {
                out.set(i, j, col[i]);
            }
        }
        Ok(out)
    }
}

/// Solves `s · X = rhs` through a Cholesky factorization.
pub fn spd_solve(s: &SymMatrix, rhs: &Matrix) -> Result<Matrix> {
    s.cholesky()?.solve(rhs)
}

/// `S⁻¹`, symmetrized.
pub fn spd_inverse(s: &SymMatrix) -> Result<SymMatrix> {
    let inv = spd_solve(s, &Matrix::identity(s.order))?;
    let n = s.order;
    let mut sym = inv;
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (sym.get(i, j) + sym.get(j, i));
            sym.set(i, j, v);
            sym.set(j, i, v);
        }
    }
    SymMatrix::from_upper(&sym)
}

/// Inverse of a general square matrix by Gauss-Jordan elimination with
/// partial pivoting, together with its 1-norm condition number.
pub(crate) fn general_inverse(m: &Matrix) -> Option<(Matrix, f64)> {
    let n = m.rows();
    let mut a = m.data().to_vec();
    let mut inv = Matrix::identity(n).into_data();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
            .expect("non-empty range");
        let p = a[pivot_row * n + col];
        if p == 0.0 || !p.is_finite() {
            return None;
        }
        if pivot_row != col {
            for j in 0..n {
                a.swap(col * n + j, pivot_row * n + j);
                inv.swap(col * n + j, pivot_row * n + j);
            }
        }
        for j in 0..n {
            a[col * n + j] /= p;
            inv[col * n + j] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                a[r * n + j] -= f * a[col * n + j];
                inv[r * n + j] -= f * inv[col * n + j];
            }
        }
    }
    let inv = Matrix::from_parts(vec![n, n], inv);
    let cond = one_norm(m) * one_norm(&inv);
    cond.is_finite().then_some((inv, cond))
}

fn one_norm(m: &Matrix) -> f64 {
    (0..m.cols())
        .map(|j| (0..m.rows()).map(|i| m.get(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::matmul;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, m: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let z = Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::gram(&z)
    }

    /// Plain Gaussian elimination without pivoting tricks; independent of the
    /// Cholesky path.
    fn elimination_solve(a: &Matrix, b: &Matrix) -> Matrix {
        let n = a.rows();
        let c = b.cols();
        let mut aug: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row = a.row(i).to_vec();
                row.extend_from_slice(b.row(i));
                row
            })
            .collect();
        for col in 0..n {
            let p = (col..n)
                .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
                .unwrap();
            aug.swap(col, p);
            for r in col + 1..n {
                let f = aug[r][col] / aug[col][col];
                for j in col..n + c {
                    aug[r][j] -= f * aug[col][j];
                }
            }
        }
        let mut x = Matrix::zeros(vec![n, c]);
        for k in 0..c {
            for i in (0..n).rev() {
                let mut v = aug[i][n + k];
                for j in i + 1..n {
                    v -= aug[i][j] * x.get(j, k);
                }
                x.set(i, k, v / aug[i][i]);
            }
        }
        x
    }

    #[test]
    fn identity_system() {
        let b = Matrix::from_rows(&[vec![1.0, -2.0], vec![3.0, 0.5], vec![4.0, 4.0]]).unwrap();
        let x = spd_solve(&SymMatrix::identity(3), &b).unwrap();
        assert!(x.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn diagonal_inverse() {
        let s = SymMatrix::from_upper(&Matrix::diag(&[2.0, 4.0])).unwrap();
        let x = spd_solve(&s, &Matrix::identity(2)).unwrap();
        assert!(x.max_abs_diff(&Matrix::diag(&[0.5, 0.25])) < 1e-15);
    }

    #[test]
    fn random_spd_matches_elimination_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let s = random_spd(6, 12, &mut rng);
            let b = Matrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
            let x = spd_solve(&s, &b).unwrap();
            let oracle = elimination_solve(&s.to_matrix(), &b);
            assert!(x.max_abs_diff(&oracle) < 1e-9, "{}", x.max_abs_diff(&oracle));
        }
    }

    #[test]
    fn inverse_reproduces_identity_up_to_256() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for &n in &[1, 7, 64, 256] {
            let s = random_spd(n, 2 * n + 8, &mut rng);
            let inv = spd_solve(&s, &Matrix::identity(n)).unwrap();
            let prod = matmul(&inv, &s.to_matrix()).unwrap();
            assert!(prod.max_abs_diff(&Matrix::identity(n)) < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn jitter_policy() {
        let i2 = SymMatrix::identity(2);
        assert_eq!(add_jitter(&i2, 0.0), i2);
        let j = add_jitter(&i2, 1e-6);
        assert_eq!(j.to_matrix(), Matrix::diag(&[1.0 + 1e-6, 1.0 + 1e-6]));
    }

    #[test]
    fn jitter_makes_duplicated_gram_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut z = Matrix::from_fn(4, 30, |_, _| rng.random_range(-1.0..1.0));
        let dup = z.row(0).to_vec();
        z.row_mut(3).copy_from_slice(&dup);
        let s = SymMatrix::gram(&z);
        assert!(s.cholesky().is_err());
        let c = add_jitter(&s, DEFAULT_JITTER).cholesky().unwrap();
        assert!(c.pivots().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn singular_reports_pivot() {
        let s = SymMatrix::from_upper(&Matrix::diag(&[1.0, 0.0])).unwrap();
        assert!(matches!(
            spd_solve(&s, &Matrix::identity(2)),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn general_inverse_condition() {
        let m = Matrix::from_rows(&[vec![1.0, -0.5], vec![-0.5, 1.0]]).unwrap();
        let (inv, cond) = general_inverse(&m).unwrap();
        let expect = Matrix::from_rows(&[vec![4.0 / 3.0, 2.0 / 3.0], vec![2.0 / 3.0, 4.0 / 3.0]])
            .unwrap();
        assert!(inv.max_abs_diff(&expect) < 1e-14);
        assert!((cond - 3.0).abs() < 1e-12);
        let singular = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(general_inverse(&singular).is_none());
    }
}
